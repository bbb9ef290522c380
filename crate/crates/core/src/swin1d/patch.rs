use xinet_tensor::{Scalar, Var};

use crate::error::{Error, Result};
use crate::nn::{Graph, Initializer, LayerNorm, Linear, ParamStore};

fn dims3<T: Scalar>(g: &Graph<T>, x: Var, what: &str) -> Result<[usize; 3]> {
    match *g.tape.shape(x) {
        [a, b, c] => Ok([a, b, c]),
        ref s => Err(Error::InvalidInput(format!("{what} expects a rank-3 tensor, got {s:?}"))),
    }
}

/// Splits `[B, L, C]` into non-overlapping patches of `P` samples and
/// projects each flattened `P·C` patch to the embedding width.
#[derive(Clone, Debug)]
pub struct PatchEmbed {
    pub proj: Linear,
    pub patch: usize,
    pub channels: usize,
}

impl PatchEmbed {
    pub fn new<T: Scalar>(
        store: &mut ParamStore<T>,
        init: &mut Initializer,
        name: &str,
        patch: usize,
        channels: usize,
        dim: usize,
    ) -> Result<Self> {
        if patch == 0 || channels == 0 {
            return Err(Error::InvalidInput("patch size and channel count must be positive".into()));
        }
        Ok(Self {
            proj: Linear::new(store, init, &format!("{name}.proj"), patch * channels, dim, true)?,
            patch,
            channels,
        })
    }

    /// Raw values per token.
    pub fn token_width(&self) -> usize {
        self.patch * self.channels
    }

    pub fn forward<T: Scalar>(&self, g: &mut Graph<T>, x: Var) -> Result<Var> {
        let [b, l, c] = dims3(g, x, "patch partition")?;
        if c != self.channels {
            return Err(Error::InvalidInput(format!("expected {} channels, got {c}", self.channels)));
        }
        if l % self.patch != 0 {
            return Err(Error::InvalidInput(format!(
                "length {l} is not divisible by patch {}",
                self.patch
            )));
        }
        let tokens = g.tape.reshape(x, [b, l / self.patch, self.patch * c])?;
        self.proj.forward(g, tokens)
    }
}

/// `[B, N, D] -> [B, N/2, 2D]`: concatenates neighbouring token pairs, then
/// layer norm and a bias-free `2D -> 2D` projection.
#[derive(Clone, Debug)]
pub struct PatchMerge {
    pub norm: LayerNorm,
    pub reduction: Linear,
    pub dim: usize,
}

impl PatchMerge {
    pub fn new<T: Scalar>(store: &mut ParamStore<T>, init: &mut Initializer, name: &str, dim: usize) -> Result<Self> {
        Ok(Self {
            norm: LayerNorm::new(store, &format!("{name}.norm"), 2 * dim)?,
            reduction: Linear::new(store, init, &format!("{name}.reduction"), 2 * dim, 2 * dim, false)?,
            dim,
        })
    }

    pub fn forward<T: Scalar>(&self, g: &mut Graph<T>, x: Var) -> Result<Var> {
        let [b, n, d] = dims3(g, x, "patch merge")?;
        if d != self.dim {
            return Err(Error::InvalidInput(format!("patch merge built for dim {}, got {d}", self.dim)));
        }
        if n % 2 != 0 {
            return Err(Error::InvalidInput(format!("patch merge needs an even token count, got {n}")));
        }
        let pairs = g.tape.reshape(x, [b, n / 2, 2 * d])?;
        let normed = self.norm.forward(g, pairs)?;
        self.reduction.forward(g, normed)
    }
}

/// `[B, N, D] -> [B, 2N, D/2]`: a bias-free `D -> D` projection whose output
/// is split into two consecutive tokens.
#[derive(Clone, Debug)]
pub struct PatchExpand {
    pub expand: Linear,
    pub dim: usize,
}

impl PatchExpand {
    pub fn new<T: Scalar>(store: &mut ParamStore<T>, init: &mut Initializer, name: &str, dim: usize) -> Result<Self> {
        if !dim.is_multiple_of(2) {
            return Err(Error::InvalidInput(format!("patch expand needs an even dim, got {dim}")));
        }
        Ok(Self {
            expand: Linear::new(store, init, &format!("{name}.expand"), dim, dim, false)?,
            dim,
        })
    }

    pub fn forward<T: Scalar>(&self, g: &mut Graph<T>, x: Var) -> Result<Var> {
        let [b, n, d] = dims3(g, x, "patch expand")?;
        if d != self.dim {
            return Err(Error::InvalidInput(format!("patch expand built for dim {}, got {d}", self.dim)));
        }
        let y = self.expand.forward(g, x)?;
        Ok(g.tape.reshape(y, [b, 2 * n, d / 2])?)
    }
}

/// `[B, N, D] -> [B, N·P, 1]`: every token becomes `P` output samples.
#[derive(Clone, Debug)]
pub struct FinalPatchExpand {
    pub proj: Linear,
    pub patch: usize,
}

impl FinalPatchExpand {
    pub fn new<T: Scalar>(
        store: &mut ParamStore<T>,
        init: &mut Initializer,
        name: &str,
        dim: usize,
        patch: usize,
    ) -> Result<Self> {
        Ok(Self {
            proj: Linear::new(store, init, &format!("{name}.proj"), dim, patch, true)?,
            patch,
        })
    }

    pub fn forward<T: Scalar>(&self, g: &mut Graph<T>, x: Var) -> Result<Var> {
        let [b, n, _] = dims3(g, x, "final patch expand")?;
        let y = self.proj.forward(g, x)?;
        Ok(g.tape.reshape(y, [b, n * self.patch, 1])?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn setup() -> (ParamStore<f64>, Initializer) {
        (ParamStore::new(), Initializer::new(3))
    }

    #[test]
    fn partition_token_counts() {
        let (mut s, mut init) = setup();
        let time = PatchEmbed::new(&mut s, &mut init, "t", 4, 1, 5).unwrap();
        let freq = PatchEmbed::new(&mut s, &mut init, "f", 4, 2, 5).unwrap();
        assert_eq!((time.token_width(), freq.token_width()), (4, 8));
        s.assign("t.proj.bias", vec![1.0, 2.0, 3.0, 4.0, 5.0]).unwrap();
        let mut g = Graph::new(&s);
        let x = g.tape.constant([1, 8, 1], vec![0.0; 8]).unwrap();
        let y = time.forward(&mut g, x).unwrap();
        assert_eq!(g.tape.shape(y), &[1, 2, 5]);
        assert_eq!(g.tape.value(y), &[1.0, 2.0, 3.0, 4.0, 5.0, 1.0, 2.0, 3.0, 4.0, 5.0]);
        let xf = g.tape.constant([1, 8, 2], vec![0.5; 16]).unwrap();
        let yf = freq.forward(&mut g, xf).unwrap();
        assert_eq!(g.tape.shape(yf), &[1, 2, 5]);
        let bad = g.tape.constant([1, 6, 1], vec![0.0; 6]).unwrap();
        assert!(time.forward(&mut g, bad).is_err());
    }

    #[test]
    fn merge_and_expand_shape_laws() {
        let (mut s, mut init) = setup();
        let merge = PatchMerge::new(&mut s, &mut init, "m", 3).unwrap();
        let expand = PatchExpand::new(&mut s, &mut init, "e", 6).unwrap();
        assert!(PatchExpand::new(&mut s, &mut init, "odd", 5).is_err());
        let mut g = Graph::new(&s);
        let x = g.tape.constant([2, 4, 3], (0..24).map(f64::from).collect()).unwrap();
        let m = merge.forward(&mut g, x).unwrap();
        assert_eq!(g.tape.shape(m), &[2, 2, 6]);
        let e = expand.forward(&mut g, m).unwrap();
        assert_eq!(g.tape.shape(e), g.tape.shape(x));
        let odd = g.tape.constant([1, 3, 3], vec![0.0; 9]).unwrap();
        assert!(merge.forward(&mut g, odd).is_err());
    }

    #[test]
    fn identity_merge_is_layer_normed_concat() {
        let (mut s, mut init) = setup();
        let merge = PatchMerge::new(&mut s, &mut init, "m", 2).unwrap();
        let mut eye = vec![0.0; 16];
        (0..4).for_each(|i| eye[i * 4 + i] = 1.0);
        s.assign("m.reduction.weight", eye).unwrap();
        let mut g = Graph::new(&s);
        let x = g.tape.constant([1, 2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let y = merge.forward(&mut g, x).unwrap();
        let mean = 2.5;
        let std = (1.25f64 + 1e-5).sqrt();
        for (i, v) in g.tape.value(y).iter().enumerate() {
            assert!((v - ((i + 1) as f64 - mean) / std).abs() < 1e-12);
        }
    }

    #[test]
    fn final_expand_with_zero_weights_is_zero() {
        let (mut s, mut init) = setup();
        let fin = FinalPatchExpand::new(&mut s, &mut init, "f", 8, 4).unwrap();
        s.assign("f.proj.weight", vec![0.0; 32]).unwrap();
        let mut g = Graph::new(&s);
        let x = g.tape.constant([1, 2, 8], vec![0.3; 16]).unwrap();
        let y = fin.forward(&mut g, x).unwrap();
        assert_eq!(g.tape.shape(y), &[1, 8, 1]);
        assert!(g.tape.value(y).iter().all(|&v| v == 0.0));
    }
}
