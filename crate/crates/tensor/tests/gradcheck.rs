//! Central finite-difference checks for every differentiable op.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use xinet_tensor::{Tape, Tensor, Var};

const STEP: f64 = 1e-5;
const TOL: f64 = 1e-5;

fn rel_err(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-3)
}

fn random(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor<f64> {
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.random_range(-2.0..2.0)).collect()).unwrap()
}

/// Builds `loss = sum(f(inputs) * r)` for a fixed random `r`, then compares
/// the tape gradient of every input element with central differences.
fn check<F>(seed: u64, shapes: &[&[usize]], f: F) -> f64
where
    F: Fn(&mut Tape<f64>, &[Var]) -> Var,
{
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let inputs: Vec<Tensor<f64>> = shapes.iter().map(|s| random(&mut rng, s)).collect();
    let weight_seed = rng.random::<u64>();

    let loss_of = |inputs: &[Tensor<f64>], grads: bool| -> (f64, Vec<Vec<f64>>) {
        let mut tape = Tape::new();
        let vars: Vec<Var> = inputs
            .iter()
            .map(|t| tape.leaf(&t.clone().with_grad()))
            .collect();
        let out = f(&mut tape, &vars);
        let mut wrng = ChaCha8Rng::seed_from_u64(weight_seed);
        let w: Vec<f64> = (0..tape.value(out).len())
            .map(|_| wrng.random_range(-1.0..1.0))
            .collect();
        let wv = tape.constant(tape.shape(out).to_vec(), w).unwrap();
        let prod = tape.mul(out, wv).unwrap();
        let loss = tape.sum(prod);
        let value = tape.value(loss)[0];
        let mut gs = Vec::new();
        if grads {
            tape.backward(loss).unwrap();
            for v in &vars {
                gs.push(
                    tape.grad(*v)
                        .map(<[f64]>::to_vec)
                        .unwrap_or_else(|| vec![0.0; tape.value(*v).len()]),
                );
            }
        }
        (value, gs)
    };

    let (_, analytic) = loss_of(&inputs, true);
    let mut worst: f64 = 0.0;
    for (i, t) in inputs.iter().enumerate() {
        for j in 0..t.len() {
            let mut plus = inputs.clone();
            plus[i].data_mut()[j] += STEP;
            let mut minus = inputs.clone();
            minus[i].data_mut()[j] -= STEP;
            let numeric = (loss_of(&plus, false).0 - loss_of(&minus, false).0) / (2.0 * STEP);
            worst = worst.max(rel_err(analytic[i][j], numeric));
        }
    }
    worst
}

macro_rules! assert_grad {
    ($err:expr) => {{
        let e = $err;
        assert!(e < TOL, "max relative error {e:e}");
    }};
}

#[test]
fn matmul_grad() {
    assert_grad!(check(1, &[&[3, 4], &[4, 2]], |t, v| t.matmul(v[0], v[1]).unwrap()));
}

#[test]
fn batched_matmul_grads() {
    assert_grad!(check(2, &[&[2, 3, 4], &[2, 4, 5]], |t, v| t.matmul(v[0], v[1]).unwrap()));
    assert_grad!(check(3, &[&[2, 3, 4], &[4, 5]], |t, v| t.matmul(v[0], v[1]).unwrap()));
    assert_grad!(check(4, &[&[3, 4], &[2, 4, 5]], |t, v| t.matmul(v[0], v[1]).unwrap()));
}

#[test]
fn transposed_matmul_grads() {
    assert_grad!(check(5, &[&[2, 3, 4], &[2, 5, 4]], |t, v| t.matmul_t(v[0], v[1]).unwrap()));
    assert_grad!(check(6, &[&[2, 3, 4], &[5, 4]], |t, v| t.matmul_t(v[0], v[1]).unwrap()));
    assert_grad!(check(7, &[&[3, 4], &[2, 5, 4]], |t, v| t.matmul_t(v[0], v[1]).unwrap()));
}

#[test]
fn softmax_grad() {
    assert_grad!(check(8, &[&[2, 5]], |t, v| t.softmax(v[0], 1).unwrap()));
    assert_grad!(check(9, &[&[3, 4, 2]], |t, v| t.softmax(v[0], 1).unwrap()));
}

#[test]
fn layer_norm_grad() {
    assert_grad!(check(10, &[&[4, 8], &[8], &[8]], |t, v| t
        .layer_norm(v[0], v[1], v[2], 1e-5)
        .unwrap()));
}

#[test]
fn elementwise_grads() {
    assert_grad!(check(11, &[&[3, 4], &[3, 4]], |t, v| t.add(v[0], v[1]).unwrap()));
    assert_grad!(check(12, &[&[3, 4], &[4]], |t, v| t.add(v[0], v[1]).unwrap()));
    assert_grad!(check(13, &[&[3, 4], &[3, 4]], |t, v| t.sub(v[0], v[1]).unwrap()));
    assert_grad!(check(14, &[&[2, 3, 4], &[3, 4]], |t, v| t.mul(v[0], v[1]).unwrap()));
    assert_grad!(check(15, &[&[3, 4]], |t, v| t.scale(v[0], -1.7)));
    assert_grad!(check(16, &[&[3, 4]], |t, v| t.gelu(v[0])));
}

#[test]
fn data_movement_grads() {
    assert_grad!(check(17, &[&[2, 6]], |t, v| t.reshape(v[0], [3, 4]).unwrap()));
    assert_grad!(check(18, &[&[2, 3, 4]], |t, v| t.permute(v[0], &[2, 0, 1]).unwrap()));
    assert_grad!(check(19, &[&[2, 3]], |t, v| t.transpose(v[0], 0, 1).unwrap()));
    assert_grad!(check(20, &[&[2, 3, 2], &[2, 1, 2]], |t, v| t
        .concat(&[v[0], v[1]], 1)
        .unwrap()));
    assert_grad!(check(21, &[&[2, 5, 3]], |t, v| t.slice(v[0], 1, 1, 3).unwrap()));
    assert_grad!(check(22, &[&[2, 5, 3]], |t, v| t.roll(v[0], 1, 2).unwrap()));
    assert_grad!(check(23, &[&[2, 4]], |t, v| t.take(v[0], &[3, 0, 0, 2, 1]).unwrap()));
}

#[test]
fn reduction_grads() {
    assert_grad!(check(24, &[&[3, 4]], |t, v| t.mean(v[0])));
    assert_grad!(check(25, &[&[3, 4]], |t, v| t.sum(v[0])));
    assert_grad!(check(26, &[&[3, 4], &[3, 4]], |t, v| t.mse_loss(v[0], v[1]).unwrap()));
}

#[test]
fn composite_attention_like_grad() {
    // q kᵀ -> softmax -> · v, the shape of one attention head.
    assert_grad!(check(27, &[&[2, 4, 3], &[2, 4, 3], &[2, 4, 3]], |t, v| {
        let s = t.matmul_t(v[0], v[1]).unwrap();
        let s = t.scale(s, 0.5);
        let p = t.softmax(s, 2).unwrap();
        t.matmul(p, v[2]).unwrap()
    }));
}
