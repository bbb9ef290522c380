#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use xinet_core::data::{GapSpec, Sample};
use xinet_core::dsp::Waveform;
use xinet_core::model::{Variant, XiNet, XiNetConfig};
use xinet_core::nn::{Graph, ParamStore};
use xinet_tensor::{Scalar, Var};

pub const FD_STEP: f64 = 1e-5;

/// `|a - n| / max(|a|, |n|, floor)`.
pub fn rel_err(analytic: f64, numeric: f64, floor: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(floor)
}

/// Worst relative error between the tape gradient of `loss` and a central
/// difference, over up to `per_tensor` sampled entries of every parameter.
/// Analytic gradients come from `store` at precision `T`, the oracle always
/// runs in f64.
pub fn check_param_grads<T: Scalar>(
    store: &ParamStore<T>,
    loss: impl Fn(&mut Graph<T>) -> Var,
    loss64: impl Fn(&mut Graph<f64>) -> Var,
    per_tensor: usize,
    seed: u64,
) -> (f64, String) {
    let mut g = Graph::new(store);
    let l = loss(&mut g);
    let grads = g.backward(l).expect("backward");
    let mut oracle: ParamStore<f64> = store.cast();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = (0.0, String::new());
    for i in 0..store.len() {
        let id = store.id_at(i);
        let n = store.get(id).len();
        let picks: Vec<usize> = if n <= per_tensor {
            (0..n).collect()
        } else {
            (0..per_tensor).map(|_| rng.random_range(0..n)).collect()
        };
        for k in picks {
            let analytic = grads[i].as_ref().map_or(0.0, |g| g[k].to_f64_lossy());
            let orig = oracle.get(id).data()[k];
            let eval = |v: f64, oracle: &mut ParamStore<f64>| {
                oracle.get_mut(id).data_mut()[k] = v;
                let mut g = Graph::new(oracle);
                let l = loss64(&mut g);
                g.tape.value(l)[0]
            };
            let plus = eval(orig + FD_STEP, &mut oracle);
            let minus = eval(orig - FD_STEP, &mut oracle);
            oracle.get_mut(id).data_mut()[k] = orig;
            let numeric = (plus - minus) / (2.0 * FD_STEP);
            let e = rel_err(analytic, numeric, 1e-3);
            if e > worst.0 {
                worst = (e, format!("{}[{k}]: analytic {analytic:e} numeric {numeric:e}", store.name(id)));
            }
        }
    }
    worst
}

/// Smooth deterministic projection weights for turning outputs into a scalar.
pub fn probe_weights(n: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()
}

/// `Σ y ⊙ w` with fixed random `w`.
pub fn probe_loss<T: Scalar>(g: &mut Graph<T>, y: Var, seed: u64) -> Var {
    let shape = g.tape.shape(y).to_vec();
    let w = probe_weights(shape.iter().product(), seed)
        .into_iter()
        .map(T::from_f64_lossy)
        .collect();
    let w = g.tape.constant(shape, w).expect("probe shape");
    let p = g.tape.mul(y, w).expect("same shape");
    g.tape.sum(p)
}

pub fn tiny_config(variant: Variant) -> XiNetConfig {
    XiNetConfig {
        input_length: 64,
        patch: 4,
        embed_dim: 8,
        stage_depths: vec![1, 1],
        bottleneck_depth: 1,
        window: 4,
        head_dim: 4,
        variant,
        seed: 11,
        spectrum_scale: None,
    }
}

/// Random smooth-ish input waveform of `len` samples.
pub fn random_signal(len: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let f = rng.random_range(1.0..4.0);
    (0..len)
        .map(|i| (i as f64 * f * 0.1).sin() * 0.5 + rng.random_range(-0.1..0.1))
        .collect()
}

/// Random gapped sample of `len` samples at 64 Hz.
pub fn random_sample(len: usize, gap: GapSpec, seed: u64) -> Sample {
    Sample::new(Waveform::new(random_signal(len, seed), 64.0).unwrap(), gap).unwrap()
}

/// Probe loss of a model's output for `input`.
pub fn model_probe<T: Scalar>(model: &XiNet<T>, g: &mut Graph<T>, input: &[f64], batch: usize) -> Var {
    let l = model.config.input_length;
    let data = input.iter().cycle().take(batch * l).map(|&v| T::from_f64_lossy(v)).collect();
    let x = g.tape.constant([batch, l, 1], data).expect("input shape");
    let y = model.forward(g, x).expect("forward");
    probe_loss(g, y, 99)
}

/// Minimum over every monotone coupling of the largest paired distance,
/// enumerating each path explicitly.
pub fn dfd_brute(p: &[f64], q: &[f64]) -> f64 {
    fn walk(p: &[f64], q: &[f64], i: usize, j: usize, so_far: f64) -> f64 {
        let here = so_far.max((p[i] - q[j]).abs());
        if i + 1 == p.len() && j + 1 == q.len() {
            return here;
        }
        let mut best = f64::INFINITY;
        if i + 1 < p.len() {
            best = best.min(walk(p, q, i + 1, j, here));
        }
        if j + 1 < q.len() {
            best = best.min(walk(p, q, i, j + 1, here));
        }
        if i + 1 < p.len() && j + 1 < q.len() {
            best = best.min(walk(p, q, i + 1, j + 1, here));
        }
        best
    }
    walk(p, q, 0, 0, 0.0)
}

/// Moves zero-initialized biases and tables off zero so every path carries
/// gradient.
pub fn perturb(store: &mut ParamStore<f64>) {
    let names: Vec<String> = store.iter().map(|(n, _)| n.to_string()).collect();
    for (k, name) in names.iter().enumerate() {
        let t = store.by_name(name).unwrap();
        let scale = if name.ends_with(".weight") { 0.0 } else { 0.05 };
        let noise = probe_weights(t.len(), 500 + k as u64);
        let v = t.data().iter().zip(noise).map(|(b, n)| b + scale * n).collect();
        store.assign(name, v).unwrap();
    }
}
