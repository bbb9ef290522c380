use num_complex::Complex64;
use xinet_tensor::{CustomBackward, Scalar, Var};

use crate::dsp::transform;
use crate::error::{Error, Result};
use crate::nn::Graph;

/// Backward of the scaled real-input transform. For `X = s · F x`,
/// `dL/dx = s · Re(F conj(G))` where `G = dL/dRe X + i dL/dIm X`.
#[derive(Debug)]
struct SpectrumBackward {
    batch: usize,
    len: usize,
    scale: f64,
}

impl<T: Scalar> CustomBackward<T> for SpectrumBackward {
    fn backward(&self, grad_out: &[T]) -> Vec<Vec<T>> {
        let mut dx = Vec::with_capacity(self.batch * self.len);
        for row in grad_out.chunks_exact(2 * self.len) {
            let g: Vec<Complex64> = row
                .chunks_exact(2)
                .map(|p| Complex64::new(p[0].to_f64_lossy(), -p[1].to_f64_lossy()))
                .collect();
            dx.extend(transform(&g, false).iter().map(|c| T::from_f64_lossy(c.re * self.scale)));
        }
        vec![dx]
    }
}

/// `[B, L, 1] -> [B, L, 2]`: scaled DFT of each row with real and imaginary
/// parts stacked on the channel axis.
pub fn spectrum<T: Scalar>(g: &mut Graph<T>, x: Var, scale: f64) -> Result<Var> {
    let (b, l) = match *g.tape.shape(x) {
        [b, l, 1] => (b, l),
        ref s => return Err(Error::InvalidInput(format!("spectrum expects [B, L, 1], got {s:?}"))),
    };
    let mut out = Vec::with_capacity(b * l * 2);
    for row in g.tape.value(x).chunks_exact(l) {
        let buf: Vec<Complex64> = row.iter().map(|v| Complex64::new(v.to_f64_lossy(), 0.0)).collect();
        for c in transform(&buf, false) {
            out.push(T::from_f64_lossy(c.re * scale));
            out.push(T::from_f64_lossy(c.im * scale));
        }
    }
    Ok(g.tape.custom(
        &[x],
        [b, l, 2],
        out,
        Box::new(SpectrumBackward { batch: b, len: l, scale }),
    )?)
}
