use serde::{Deserialize, Serialize};
use xinet_tensor::Scalar;

use crate::error::{Error, Result};
use crate::nn::ParamStore;

/// Adam hyper-parameters other than the learning rate.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AdamW {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl Default for AdamW {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 1e-4,
        }
    }
}

/// First and second moments per parameter, plus the number of steps taken.
#[derive(Clone, Debug, PartialEq)]
pub struct OptState<T> {
    pub step: u64,
    pub m: Vec<Vec<T>>,
    pub v: Vec<Vec<T>>,
}

impl<T: Scalar> OptState<T> {
    pub fn new(params: &ParamStore<T>) -> Self {
        let zeros: Vec<Vec<T>> = params.iter().map(|(_, t)| vec![T::zero(); t.len()]).collect();
        Self {
            step: 0,
            m: zeros.clone(),
            v: zeros,
        }
    }

    pub fn check(&self, params: &ParamStore<T>) -> Result<()> {
        let ok = self.m.len() == params.len()
            && self.v.len() == params.len()
            && params
                .iter()
                .zip(self.m.iter().zip(&self.v))
                .all(|((_, t), (m, v))| m.len() == t.len() && v.len() == t.len());
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidInput("optimizer state does not match the parameters".into()))
        }
    }
}

impl AdamW {
    /// One update from the gradients stored on the parameters: decoupled
    /// decay `p -= lr·wd·p`, then the bias-corrected Adam step.
    pub fn step<T: Scalar>(&self, params: &mut ParamStore<T>, state: &mut OptState<T>, lr: f64) -> Result<()> {
        state.check(params)?;
        state.step += 1;
        let t = state.step as i32;
        let bc1 = 1.0 - self.beta1.powi(t);
        let bc2 = 1.0 - self.beta2.powi(t);
        let c = |x: f64| T::from_f64_lossy(x);
        let (b1, b2, eps) = (c(self.beta1), c(self.beta2), c(self.eps));
        let (one, decay) = (T::one(), c(1.0 - lr * self.weight_decay));
        let (step_size, bc2_sqrt) = (c(lr / bc1), c(bc2.sqrt()));
        for ((p, m), v) in params.tensors_mut().zip(&mut state.m).zip(&mut state.v) {
            let Some(grad) = p.grad().map(<[T]>::to_vec) else {
                continue;
            };
            for (((w, &g), mi), vi) in p.data_mut().iter_mut().zip(&grad).zip(m.iter_mut()).zip(v.iter_mut()) {
                *mi = b1 * *mi + (one - b1) * g;
                *vi = b2 * *vi + (one - b2) * g * g;
                if self.weight_decay != 0.0 {
                    *w *= decay;
                }
                *w -= step_size * *mi / (vi.sqrt() / bc2_sqrt + eps);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use xinet_tensor::Tensor;

    fn scalar_store(w: f64) -> ParamStore<f64> {
        let mut s = ParamStore::new();
        s.add("w", Tensor::from_f64([1], &[w]).unwrap()).unwrap();
        s
    }

    fn set_grad(s: &mut ParamStore<f64>, g: f64) {
        s.zero_grad();
        s.accumulate(&[Some(vec![g])]).unwrap();
    }

    #[test]
    fn zero_gradient_without_decay_is_noop() {
        let mut s = scalar_store(0.7);
        let opt = AdamW {
            weight_decay: 0.0,
            ..Default::default()
        };
        let mut st = OptState::new(&s);
        for _ in 0..10 {
            set_grad(&mut s, 0.0);
            opt.step(&mut s, &mut st, 1e-3).unwrap();
        }
        assert_eq!(s.get(s.id("w").unwrap()).data(), &[0.7]);
    }

    #[test]
    fn first_step_closed_form() {
        let (lr, g, eps) = (1e-3, 0.25, 1e-8);
        let mut s = scalar_store(1.0);
        let opt = AdamW {
            weight_decay: 0.0,
            ..Default::default()
        };
        let mut st = OptState::new(&s);
        set_grad(&mut s, g);
        opt.step(&mut s, &mut st, lr).unwrap();
        // m̂ = g, v̂ = g², so the step is lr·g/(|g| + eps).
        let expected = 1.0 - lr * g / (g.abs() + eps);
        assert!((s.get(s.id("w").unwrap()).data()[0] - expected).abs() < 1e-15);
    }

    #[test]
    fn quadratic_bowl_converges() {
        let mut s = scalar_store(1.0);
        let opt = AdamW {
            weight_decay: 0.0,
            ..Default::default()
        };
        let mut st = OptState::new(&s);
        let id = s.id("w").unwrap();
        for _ in 0..500 {
            let w = s.get(id).data()[0];
            set_grad(&mut s, 2.0 * w);
            opt.step(&mut s, &mut st, 0.05).unwrap();
        }
        assert!(s.get(id).data()[0].abs() < 1e-3);
    }
}
