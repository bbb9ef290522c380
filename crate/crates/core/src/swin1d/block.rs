use xinet_tensor::{Scalar, Var};

use super::attention::WindowAttention;
use super::windows::{attention_mask, cyclic_shift, window_partition, window_reverse};
use crate::error::{Error, Result};
use crate::nn::{Graph, Initializer, LayerNorm, Linear, ParamStore};

/// Hidden width of the block MLP relative to the token width.
pub const MLP_RATIO: usize = 4;

/// Pre-norm transformer block over shifted (or plain) windows.
#[derive(Clone, Debug)]
pub struct SwinBlock {
    pub norm1: LayerNorm,
    pub attn: WindowAttention,
    pub norm2: LayerNorm,
    pub fc1: Linear,
    pub fc2: Linear,
    pub shift: usize,
}

impl SwinBlock {
    #[allow(clippy::too_many_arguments)]
    pub fn new<T: Scalar>(
        store: &mut ParamStore<T>,
        init: &mut Initializer,
        name: &str,
        dim: usize,
        heads: usize,
        window: usize,
        shift: usize,
    ) -> Result<Self> {
        if shift >= window.max(1) {
            return Err(Error::InvalidInput(format!("shift {shift} must be below window {window}")));
        }
        Ok(Self {
            norm1: LayerNorm::new(store, &format!("{name}.norm1"), dim)?,
            attn: WindowAttention::new(store, init, &format!("{name}.attn"), dim, heads, window)?,
            norm2: LayerNorm::new(store, &format!("{name}.norm2"), dim)?,
            fc1: Linear::new(store, init, &format!("{name}.fc1"), dim, MLP_RATIO * dim, true)?,
            fc2: Linear::new(store, init, &format!("{name}.fc2"), MLP_RATIO * dim, dim, true)?,
            shift,
        })
    }

    /// Windowed attention sub-layer without the residual.
    pub fn attend<T: Scalar>(&self, g: &mut Graph<T>, x: Var) -> Result<Var> {
        let (b, n) = match *g.tape.shape(x) {
            [b, n, _] => (b, n),
            ref s => return Err(Error::InvalidInput(format!("swin block expects [B, N, D], got {s:?}"))),
        };
        let window = self.attn.window;
        let mask = attention_mask(n, window, self.shift)?;
        let shifted = cyclic_shift(g, x, self.shift as isize)?;
        let windows = window_partition(g, shifted, window)?;
        let attended = self.attn.forward(g, windows, Some(&mask))?;
        let merged = window_reverse(g, attended, b)?;
        cyclic_shift(g, merged, -(self.shift as isize))
    }

    pub fn forward<T: Scalar>(&self, g: &mut Graph<T>, x: Var) -> Result<Var> {
        let h = self.norm1.forward(g, x)?;
        let h = self.attend(g, h)?;
        let x = g.tape.add(x, h)?;
        let h = self.norm2.forward(g, x)?;
        let h = self.fc1.forward(g, h)?;
        let h = g.tape.gelu(h);
        let h = self.fc2.forward(g, h)?;
        Ok(g.tape.add(x, h)?)
    }
}

/// A run of blocks at one resolution; odd blocks use the half-window shift
/// unless the whole sequence fits in one window.
#[derive(Clone, Debug)]
pub struct SwinStage {
    pub blocks: Vec<SwinBlock>,
}

impl SwinStage {
    #[allow(clippy::too_many_arguments)]
    pub fn new<T: Scalar>(
        store: &mut ParamStore<T>,
        init: &mut Initializer,
        name: &str,
        depth: usize,
        dim: usize,
        heads: usize,
        window: usize,
        tokens: usize,
    ) -> Result<Self> {
        let blocks = (0..depth)
            .map(|i| {
                let shift = if i % 2 == 1 && tokens > window { window / 2 } else { 0 };
                SwinBlock::new(store, init, &format!("{name}.{i}"), dim, heads, window, shift)
            })
            .collect::<Result<_>>()?;
        Ok(Self { blocks })
    }

    pub fn forward<T: Scalar>(&self, g: &mut Graph<T>, mut x: Var) -> Result<Var> {
        for b in &self.blocks {
            x = b.forward(g, x)?;
        }
        Ok(x)
    }
}
