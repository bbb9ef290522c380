mod common;

use common::{random_sample, tiny_config};
use xinet_core::data::GapSpec;
use xinet_core::model::{Variant, XiNet};
use xinet_core::nn::Graph;
use xinet_core::train::{batch_loss, history_csv, lr_at, LossScope, TrainConfig, Trainer};

fn tiny_samples(n: usize) -> Vec<xinet_core::data::Sample> {
    (0..n)
        .map(|i| random_sample(64, GapSpec { start: 20 + i, len: 12 }, 40 + i as u64))
        .collect()
}

fn quick(epochs: usize) -> TrainConfig {
    TrainConfig {
        epochs,
        batch_size: 2,
        seed: 5,
        ..Default::default()
    }
}

#[test]
fn single_sample_is_memorized() {
    let set = tiny_samples(1);
    let model = XiNet::<f32>::new(tiny_config(Variant::Full)).unwrap();
    let cfg = TrainConfig {
        mirror: false,
        weight_decay: 0.0,
        ..quick(300)
    };
    let mut t = Trainer::new(model, cfg).unwrap();
    let hist = t.run(&set, &[], |_| {}).unwrap().to_vec();
    let first = hist[0].train_loss;
    let mut g = Graph::new(&t.model.params);
    let l = batch_loss(&mut g, &t.model, &[&set[0]], LossScope::FullWaveform).unwrap();
    let last = f64::from(g.tape.value(l)[0]);
    assert!(last < 0.01 * first, "final {last:e} vs first {first:e}");
}

#[test]
fn identical_seeds_give_identical_runs() {
    let set = tiny_samples(4);
    let run = || {
        let model = XiNet::<f32>::new(tiny_config(Variant::TimeOnly)).unwrap();
        let mut t = Trainer::new(model, quick(3)).unwrap();
        t.run(&set[..3], &set[3..], |_| {}).unwrap();
        (history_csv(&t.history), t.checkpoint().to_bytes().unwrap())
    };
    assert_eq!(run(), run());
}

#[test]
fn schedule_trace_follows_lr_at() {
    let set = tiny_samples(2);
    let model = XiNet::<f32>::new(tiny_config(Variant::TimeOnly)).unwrap();
    let cfg = quick(6);
    let mut t = Trainer::new(model, cfg.clone()).unwrap();
    let hist = t.run(&set, &[], |_| {}).unwrap();
    for r in hist {
        assert_eq!(r.lr, lr_at(r.epoch, cfg.epochs, cfg.base_lr).unwrap());
        assert!(r.val_gap_mae.is_none());
    }
}

#[test]
fn early_loss_trends_down() {
    let set = tiny_samples(8);
    let model = XiNet::<f32>::new(tiny_config(Variant::Full)).unwrap();
    let mut t = Trainer::new(model, quick(5)).unwrap();
    let hist = t.run(&set, &[], |_| {}).unwrap();
    let mut deltas: Vec<f64> = hist.windows(2).map(|w| w[1].train_loss - w[0].train_loss).collect();
    deltas.sort_by(f64::total_cmp);
    assert!(deltas[deltas.len() / 2] < 0.0, "{deltas:?}");
}

#[test]
fn untouched_parameter_is_bit_identical_without_decay() {
    let set = tiny_samples(2);
    let model = XiNet::<f32>::new(tiny_config(Variant::TimeOnly)).unwrap();
    // A parameter outside the graph never receives a gradient.
    let mut store = model.params.clone();
    store
        .add("unused", xinet_tensor::Tensor::from_f64([3], &[0.25, -1.0, 2.0]).unwrap())
        .unwrap();
    let model = XiNet {
        params: store,
        ..model
    };
    let cfg = TrainConfig {
        weight_decay: 0.0,
        ..quick(2)
    };
    let mut t = Trainer::new(model, cfg).unwrap();
    t.run(&set, &[], |_| {}).unwrap();
    assert_eq!(t.model.params.by_name("unused").unwrap().data(), &[0.25, -1.0, 2.0]);
}

#[test]
fn unit_gap_weight_equals_plain_mse() {
    let set = tiny_samples(2);
    let model = XiNet::<f32>::new(tiny_config(Variant::Full)).unwrap();
    let batch: Vec<_> = set.iter().collect();
    let value = |scope| {
        let mut g = Graph::new(&model.params);
        let l = batch_loss(&mut g, &model, &batch, scope).unwrap();
        g.tape.value(l)[0]
    };
    let plain = value(LossScope::FullWaveform);
    let weighted = value(LossScope::GapWeighted { lambda: 1.0 });
    assert!(((plain - weighted) / plain).abs() < 1e-6, "{plain} vs {weighted}");
    assert!(value(LossScope::GapWeighted { lambda: 0.0 }) < plain);
}

#[test]
fn invalid_configs_rejected() {
    let model = XiNet::<f32>::new(tiny_config(Variant::Full)).unwrap();
    for bad in [
        TrainConfig { epochs: 0, ..Default::default() },
        TrainConfig { base_lr: 0.0, ..Default::default() },
        TrainConfig { weight_decay: -1.0, ..Default::default() },
        TrainConfig { loss_scope: LossScope::GapWeighted { lambda: -0.5 }, ..Default::default() },
    ] {
        assert!(Trainer::new(model.clone(), bad).is_err());
    }
}

#[test]
fn resuming_matches_an_uninterrupted_run() {
    let set = tiny_samples(3);
    let cfg = quick(4);
    let model = XiNet::<f32>::new(tiny_config(Variant::TimeOnly)).unwrap();
    let mut whole = Trainer::new(model.clone(), cfg.clone()).unwrap();
    whole.run(&set, &[], |_| {}).unwrap();

    let mut first = Trainer::new(model, TrainConfig { epochs: 4, ..cfg.clone() }).unwrap();
    first.train_epoch(&xinet_core::data::mirror_augment(&set)).unwrap();
    first.train_epoch(&xinet_core::data::mirror_augment(&set)).unwrap();
    let bytes = first.checkpoint().to_bytes().unwrap();
    let ck = xinet_core::model::Checkpoint::from_bytes(&bytes).unwrap();
    let mut second = Trainer::resume(ck, cfg).unwrap();
    second.run(&set, &[], |_| {}).unwrap();
    assert_eq!(
        second.checkpoint().to_bytes().unwrap(),
        whole.checkpoint().to_bytes().unwrap()
    );
}
