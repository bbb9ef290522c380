mod common;

use common::dfd_brute;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use xinet_core::data::GapSpec;
use xinet_core::metrics::{dfd, evaluate, mae, mrd, rmse, EvalOptions};
use xinet_core::reconstruct::{GroundTruth, LinearInterp, ZeroFill};

fn random_curve(rng: &mut ChaCha8Rng, len: usize) -> Vec<f64> {
    (0..len).map(|_| rng.random_range(-1.0..1.0)).collect()
}

#[test]
fn dfd_matches_coupling_enumeration() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..500 {
        let (n, m) = (rng.random_range(1..=8), rng.random_range(1..=8));
        let (p, q) = (random_curve(&mut rng, n), random_curve(&mut rng, m));
        assert_eq!(dfd(&p, &q).unwrap(), dfd_brute(&p, &q), "{p:?} {q:?}");
    }
}

#[test]
fn dfd_symmetry_and_bounds() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for _ in 0..1000 {
        let n = rng.random_range(1..=40);
        let (p, q) = (random_curve(&mut rng, n), random_curve(&mut rng, n));
        let d = dfd(&p, &q).unwrap();
        assert_eq!(d, dfd(&q, &p).unwrap());
        let pointwise = p.iter().zip(&q).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(d <= pointwise);
        assert!(d >= (p[0] - q[0]).abs() && d >= (p[n - 1] - q[n - 1]).abs());
        let c = 0.75;
        let (ps, qs): (Vec<f64>, Vec<f64>) = (p.iter().map(|v| v + c).collect(), q.iter().map(|v| v + c).collect());
        assert!((dfd(&ps, &qs).unwrap() - d).abs() < 1e-12);
        assert!((mae(&ps, &qs).unwrap() - mae(&p, &q).unwrap()).abs() < 1e-12);
        assert!((rmse(&ps, &qs).unwrap() - rmse(&p, &q).unwrap()).abs() < 1e-12);
    }
}

#[test]
fn mrd_matches_direct_formula() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let preds: Vec<Vec<f64>> = (0..100).map(|_| { let n = rng.random_range(1..30); random_curve(&mut rng, n) }).collect();
    let targets: Vec<Vec<f64>> = (0..100).map(|_| { let n = rng.random_range(1..30); random_curve(&mut rng, n) }).collect();
    let span = |x: &Vec<f64>| {
        let mut s = x.clone();
        s.sort_by(f64::total_cmp);
        s[s.len() - 1] - s[0]
    };
    let direct = (preds.iter().map(span).sum::<f64>() / 100.0 - targets.iter().map(span).sum::<f64>() / 100.0).abs();
    let p: Vec<&[f64]> = preds.iter().map(Vec::as_slice).collect();
    let t: Vec<&[f64]> = targets.iter().map(Vec::as_slice).collect();
    assert!((mrd(&p, &t).unwrap() - direct).abs() < 1e-12);
    assert_eq!(mrd(&p, &p).unwrap(), 0.0);
}

proptest! {
    #[test]
    fn rmse_never_below_mae(pairs in proptest::collection::vec((-10.0f64..10.0, -10.0f64..10.0), 1..64)) {
        let (p, q): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
        prop_assert!(rmse(&p, &q).unwrap() >= mae(&p, &q).unwrap() - 1e-12);
    }
}

fn samples(count: usize) -> Vec<xinet_core::data::Sample> {
    (0..count)
        .map(|i| common::random_sample(256, GapSpec { start: 40 + 7 * i, len: 40 }, i as u64))
        .collect()
}

#[test]
fn ground_truth_scores_zero_and_zero_fill_does_not() {
    let set = samples(6);
    let o = EvalOptions::default();
    let truth = evaluate(&set, &GroundTruth, o).unwrap();
    assert_eq!((truth.dfd_mean, truth.mrd, truth.mae_mean, truth.rmse_mean), (0.0, 0.0, 0.0, 0.0));
    let zero = evaluate(&set, &ZeroFill, o).unwrap();
    assert!(zero.mae_mean > 0.0 && zero.rmse_mean >= zero.mae_mean);
    assert_eq!(zero.samples.len(), 6);
    let lin = evaluate(&set, &LinearInterp, o).unwrap();
    assert!(lin.mae_mean > 0.0);
}

#[test]
fn evaluate_is_permutation_invariant() {
    let set = samples(9);
    let mut shuffled = set.clone();
    shuffled.reverse();
    shuffled.swap(0, 4);
    for margin in [0, 10] {
        let o = EvalOptions { margin, ..Default::default() };
        let a = evaluate(&set, &LinearInterp, o).unwrap();
        let b = evaluate(&shuffled, &LinearInterp, o).unwrap();
        assert_eq!(
            (a.dfd_mean, a.mrd, a.mae_mean, a.rmse_mean),
            (b.dfd_mean, b.mrd, b.mae_mean, b.rmse_mean)
        );
    }
}

#[test]
fn linear_interp_exact_on_ramp_and_flat() {
    use xinet_core::data::Sample;
    use xinet_core::dsp::Waveform;
    let ramp: Vec<f64> = (0..128).map(|i| 0.01 * i as f64 - 0.3).collect();
    let flat = vec![0.4; 128];
    for x in [ramp, flat] {
        let s = Sample::new(Waveform::new(x, 64.0).unwrap(), GapSpec { start: 30, len: 40 }).unwrap();
        let r = evaluate(std::slice::from_ref(&s), &LinearInterp, EvalOptions::default()).unwrap();
        assert!(r.mae_mean < 1e-15, "{}", r.mae_mean);
    }
}
