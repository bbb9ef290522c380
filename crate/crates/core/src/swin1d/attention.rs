use xinet_tensor::{Scalar, Tensor, Var};

use super::windows::WindowMask;
use crate::error::{Error, Result};
use crate::nn::{Graph, Initializer, Linear, ParamId, ParamStore};

/// Windowed multi-head self-attention with a 1D relative position bias.
#[derive(Clone, Debug)]
pub struct WindowAttention {
    pub qkv: Linear,
    pub proj: Linear,
    /// `[heads, 2M - 1]`, indexed by `i - j + M - 1`.
    pub rel_bias: ParamId,
    pub heads: usize,
    pub window: usize,
    pub dim: usize,
}

/// Flattened `[M, M]` lookup into the `2M - 1` relative offsets.
pub fn relative_index(window: usize) -> Vec<usize> {
    (0..window)
        .flat_map(|i| (0..window).map(move |j| i + window - 1 - j))
        .collect()
}

impl WindowAttention {
    pub fn new<T: Scalar>(
        store: &mut ParamStore<T>,
        init: &mut Initializer,
        name: &str,
        dim: usize,
        heads: usize,
        window: usize,
    ) -> Result<Self> {
        if heads == 0 || !dim.is_multiple_of(heads) {
            return Err(Error::InvalidInput(format!("dim {dim} is not divisible by {heads} heads")));
        }
        if window == 0 {
            return Err(Error::InvalidInput("window must be positive".into()));
        }
        Ok(Self {
            qkv: Linear::new(store, init, &format!("{name}.qkv"), dim, 3 * dim, true)?,
            proj: Linear::new(store, init, &format!("{name}.proj"), dim, dim, true)?,
            rel_bias: store.add(format!("{name}.rel_bias"), Tensor::zeros([heads, 2 * window - 1]))?,
            heads,
            window,
            dim,
        })
    }

    /// Attention weights and output for windows `[Bw, M, D]`. The weights are
    /// `[Bw, H, M, M]` after softmax.
    pub fn forward_with_weights<T: Scalar>(
        &self,
        g: &mut Graph<T>,
        windows: Var,
        mask: Option<&WindowMask>,
    ) -> Result<(Var, Var)> {
        let (bw, m, d) = match *g.tape.shape(windows) {
            [bw, m, d] if m == self.window && d == self.dim => (bw, m, d),
            ref s => {
                return Err(Error::InvalidInput(format!(
                    "window attention expects [Bw, {}, {}], got {s:?}",
                    self.window, self.dim
                )))
            }
        };
        let h = self.heads;
        let hd = d / h;
        let qkv = self.qkv.forward(g, windows)?;
        let qkv = g.tape.reshape(qkv, [bw, m, 3, h, hd])?;
        let qkv = g.tape.permute(qkv, &[2, 0, 3, 1, 4])?;
        let part = |g: &mut Graph<T>, i: usize| -> Result<Var> {
            let p = g.tape.slice(qkv, 0, i, 1)?;
            Ok(g.tape.reshape(p, [bw, h, m, hd])?)
        };
        let (q, k, v) = (part(g, 0)?, part(g, 1)?, part(g, 2)?);

        let scores = g.tape.matmul_t(q, k)?;
        let scale = T::from_f64_lossy(1.0 / (hd as f64).sqrt());
        let scores = g.tape.scale(scores, scale);

        let table = g.param(self.rel_bias);
        let bias = g.tape.take(table, &relative_index(m))?;
        let bias = g.tape.reshape(bias, [h, m, m])?;
        let mut scores = g.tape.add(scores, bias)?;

        if let Some(mask) = mask.filter(|mk| !mk.is_zero()) {
            let nw = mask.windows;
            if mask.window != m || bw % nw != 0 {
                return Err(Error::InvalidInput(format!(
                    "mask for {nw} windows of {} does not fit {bw} windows of {m}",
                    mask.window
                )));
            }
            let mut expanded = Vec::with_capacity(nw * h * m * m);
            for w in 0..nw {
                let block = &mask.values[w * m * m..(w + 1) * m * m];
                for _ in 0..h {
                    expanded.extend(block.iter().map(|&v| T::from_f64_lossy(v)));
                }
            }
            let mask_var = g.tape.constant([nw, h, m, m], expanded)?;
            let s5 = g.tape.reshape(scores, [bw / nw, nw, h, m, m])?;
            let s5 = g.tape.add(s5, mask_var)?;
            scores = g.tape.reshape(s5, [bw, h, m, m])?;
        }

        let weights = g.tape.softmax(scores, 3)?;
        let out = g.tape.matmul(weights, v)?;
        let out = g.tape.permute(out, &[0, 2, 1, 3])?;
        let out = g.tape.reshape(out, [bw, m, d])?;
        Ok((self.proj.forward(g, out)?, weights))
    }

    pub fn forward<T: Scalar>(&self, g: &mut Graph<T>, windows: Var, mask: Option<&WindowMask>) -> Result<Var> {
        Ok(self.forward_with_weights(g, windows, mask)?.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn relative_offsets_cover_table() {
        let idx = relative_index(3);
        assert_eq!(idx, vec![2, 1, 0, 3, 2, 1, 4, 3, 2]);
    }
}
