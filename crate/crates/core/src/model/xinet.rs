use xinet_tensor::{Scalar, Tensor, Var};

use super::config::{Variant, XiNetConfig};
use super::spectral::spectrum;
use crate::error::{Error, Result};
use crate::nn::{Graph, Initializer, LayerNorm, Linear, ParamStore};
use crate::swin1d::{FinalPatchExpand, PatchEmbed, PatchExpand, PatchMerge, SwinStage};

/// Patch embedding, down-sampling stages and bottleneck of one branch.
#[derive(Clone, Debug)]
pub struct Encoder {
    pub embed: PatchEmbed,
    pub embed_norm: LayerNorm,
    pub stages: Vec<SwinStage>,
    pub merges: Vec<PatchMerge>,
    pub bottleneck: SwinStage,
}

impl Encoder {
    fn new<T: Scalar>(
        store: &mut ParamStore<T>,
        init: &mut Initializer,
        name: &str,
        cfg: &XiNetConfig,
        channels: usize,
    ) -> Result<Self> {
        let embed = PatchEmbed::new(store, init, &format!("{name}.embed"), cfg.patch, channels, cfg.embed_dim)?;
        let embed_norm = LayerNorm::new(store, &format!("{name}.embed_norm"), cfg.embed_dim)?;
        let mut stages = Vec::new();
        let mut merges = Vec::new();
        for (s, &depth) in cfg.stage_depths.iter().enumerate() {
            let dim = cfg.encoder_dim(s);
            stages.push(SwinStage::new(
                store,
                init,
                &format!("{name}.stage{s}"),
                depth,
                dim,
                cfg.heads(dim),
                cfg.window,
                cfg.tokens_at(s),
            )?);
            merges.push(PatchMerge::new(store, init, &format!("{name}.merge{s}"), dim)?);
        }
        let s = cfg.stages();
        let dim = cfg.encoder_dim(s);
        let bottleneck = SwinStage::new(
            store,
            init,
            &format!("{name}.bottleneck"),
            cfg.bottleneck_depth,
            dim,
            cfg.heads(dim),
            cfg.window,
            cfg.tokens_at(s),
        )?;
        Ok(Self {
            embed,
            embed_norm,
            stages,
            merges,
            bottleneck,
        })
    }

    /// Returns the bottleneck features and the pre-merge output of every
    /// stage, finest first.
    fn forward<T: Scalar>(&self, g: &mut Graph<T>, x: Var) -> Result<(Var, Vec<Var>)> {
        let mut h = self.embed.forward(g, x)?;
        h = self.embed_norm.forward(g, h)?;
        let mut skips = Vec::with_capacity(self.stages.len());
        for (stage, merge) in self.stages.iter().zip(&self.merges) {
            h = stage.forward(g, h)?;
            skips.push(h);
            h = merge.forward(g, h)?;
        }
        Ok((self.bottleneck.forward(g, h)?, skips))
    }
}

/// One up-sampling decoder stage with its skip projection.
#[derive(Clone, Debug)]
pub struct DecoderStage {
    pub expand: PatchExpand,
    pub skip_proj: Linear,
    pub blocks: SwinStage,
}

#[derive(Clone, Debug)]
pub struct Architecture {
    /// Time branch, or the only branch in `single_encoder`.
    pub primary: Encoder,
    pub frequency: Option<Encoder>,
    pub fuse: Option<Linear>,
    /// Coarsest stage first.
    pub decoder: Vec<DecoderStage>,
    pub out_norm: LayerNorm,
    pub head: FinalPatchExpand,
}

/// The reconstruction network with its parameters.
#[derive(Clone, Debug)]
pub struct XiNet<T: Scalar> {
    pub config: XiNetConfig,
    pub arch: Architecture,
    pub params: ParamStore<T>,
}

fn build<T: Scalar>(cfg: &XiNetConfig) -> Result<(Architecture, ParamStore<T>)> {
    cfg.validate()?;
    let mut store = ParamStore::new();
    let mut init = Initializer::new(cfg.seed);
    let st = &mut store;
    let it = &mut init;
    let n_stages = cfg.stages();

    let (primary, frequency) = match cfg.variant {
        Variant::Full => (
            Encoder::new(st, it, "time", cfg, 1)?,
            Some(Encoder::new(st, it, "freq", cfg, 2)?),
        ),
        Variant::TimeOnly => (Encoder::new(st, it, "time", cfg, 1)?, None),
        Variant::SingleEncoder => (Encoder::new(st, it, "joint", cfg, 3)?, None),
    };
    let bottleneck_dim = cfg.decoder_dim(n_stages);
    let fuse = match cfg.variant {
        Variant::Full => Some(Linear::new(st, it, "fuse", bottleneck_dim, bottleneck_dim, true)?),
        _ => None,
    };
    let skip_branches = if frequency.is_some() { 2 } else { 1 };
    let mut decoder = Vec::with_capacity(n_stages);
    for s in (0..n_stages).rev() {
        let dim = cfg.decoder_dim(s);
        let name = format!("dec{s}");
        let skip_width = dim + skip_branches * cfg.encoder_dim(s);
        decoder.push(DecoderStage {
            expand: PatchExpand::new(st, it, &format!("{name}.expand"), cfg.decoder_dim(s + 1))?,
            skip_proj: Linear::new(st, it, &format!("{name}.skip_proj"), skip_width, dim, true)?,
            blocks: SwinStage::new(
                st,
                it,
                &format!("{name}.stage"),
                cfg.stage_depths[s],
                dim,
                cfg.heads(dim),
                cfg.window,
                cfg.tokens_at(s),
            )?,
        });
    }
    let out_dim = cfg.decoder_dim(0);
    let out_norm = LayerNorm::new(st, "out_norm", out_dim)?;
    let head = FinalPatchExpand::new(st, it, "head", out_dim, cfg.patch)?;
    let arch = Architecture {
        primary,
        frequency,
        fuse,
        decoder,
        out_norm,
        head,
    };
    Ok((arch, store))
}

impl<T: Scalar> XiNet<T> {
    pub fn new(config: XiNetConfig) -> Result<Self> {
        let (arch, params) = build(&config)?;
        Ok(Self { config, arch, params })
    }

    pub fn variant(&self) -> Variant {
        self.config.variant
    }

    pub fn num_parameters(&self) -> usize {
        self.params.num_scalars()
    }

    /// Same architecture and values at another precision.
    pub fn cast<U: Scalar>(&self) -> XiNet<U> {
        XiNet {
            config: self.config.clone(),
            arch: self.arch.clone(),
            params: self.params.cast(),
        }
    }

    /// `[B, L, 1] -> [B, L, 1]` on a graph bound to `self.params`.
    pub fn forward(&self, g: &mut Graph<T>, x: Var) -> Result<Var> {
        let cfg = &self.config;
        let b = match *g.tape.shape(x) {
            [b, l, 1] if l == cfg.input_length => b,
            ref s => {
                return Err(Error::InvalidInput(format!(
                    "model expects [B, {}, 1], got {s:?}",
                    cfg.input_length
                )))
            }
        };
        let arch = &self.arch;
        let scale = cfg.spectrum_scale();
        let (mut h, time_skips, freq_skips) = match cfg.variant {
            Variant::Full => {
                let freq_in = spectrum(g, x, scale)?;
                let (ht, st) = arch.primary.forward(g, x)?;
                let freq = arch.frequency.as_ref().expect("full variant has a frequency encoder");
                let (hf, sf) = freq.forward(g, freq_in)?;
                let stacked = g.tape.concat(&[ht, hf], 2)?;
                let fuse = arch.fuse.as_ref().expect("full variant has a fusion layer");
                (fuse.forward(g, stacked)?, st, Some(sf))
            }
            Variant::TimeOnly => {
                let (h, s) = arch.primary.forward(g, x)?;
                (h, s, None)
            }
            Variant::SingleEncoder => {
                let freq_in = spectrum(g, x, scale)?;
                let joint = g.tape.concat(&[x, freq_in], 2)?;
                let (h, s) = arch.primary.forward(g, joint)?;
                (h, s, None)
            }
        };
        for (stage, s) in arch.decoder.iter().zip((0..cfg.stages()).rev()) {
            h = stage.expand.forward(g, h)?;
            let mut parts = vec![h, time_skips[s]];
            if let Some(fs) = &freq_skips {
                parts.push(fs[s]);
            }
            let cat = g.tape.concat(&parts, 2)?;
            h = stage.skip_proj.forward(g, cat)?;
            h = stage.blocks.forward(g, h)?;
        }
        h = arch.out_norm.forward(g, h)?;
        let y = arch.head.forward(g, h)?;
        debug_assert_eq!(g.tape.shape(y), &[b, cfg.input_length, 1]);
        Ok(y)
    }

    /// Runs the network on a batch of equal-length waveforms.
    pub fn predict(&self, inputs: &[&[f64]]) -> Result<Vec<Vec<f64>>> {
        if inputs.is_empty() {
            return Ok(Vec::new());
        }
        let l = self.config.input_length;
        if let Some(bad) = inputs.iter().find(|x| x.len() != l) {
            return Err(Error::InvalidInput(format!(
                "waveform has {} samples, model expects {l}",
                bad.len()
            )));
        }
        let data = inputs.iter().flat_map(|x| x.iter().map(|&v| T::from_f64_lossy(v))).collect();
        let mut g = Graph::new(&self.params);
        let x = g.tape.constant([inputs.len(), l, 1], data)?;
        let y = self.forward(&mut g, x)?;
        Ok(g.tape
            .value(y)
            .chunks_exact(l)
            .map(|row| row.iter().map(|v| v.to_f64_lossy()).collect())
            .collect())
    }

    /// Width of every encoder stage (finest first, bottleneck last) read off
    /// the parameter shapes.
    pub fn encoder_widths(&self) -> Vec<usize> {
        let enc = &self.arch.primary;
        let mut w: Vec<usize> = enc
            .stages
            .iter()
            .zip(&enc.merges)
            .map(|(_, m)| self.params.get(m.norm.gamma).len() / 2)
            .collect();
        w.push(self.params.get(enc.merges.last().expect("at least one stage").reduction.weight).shape()[1]);
        w
    }

    /// Width of every decoder stage, finest first, read off the skip
    /// projection weights.
    pub fn decoder_widths(&self) -> Vec<usize> {
        self.arch
            .decoder
            .iter()
            .rev()
            .map(|d| self.params.get(d.skip_proj.weight).shape()[1])
            .collect()
    }

    /// Raw values per input token of each encoder.
    pub fn token_widths(&self) -> Vec<usize> {
        let mut w = vec![self.arch.primary.embed.token_width()];
        if let Some(f) = &self.arch.frequency {
            w.push(f.embed.token_width());
        }
        w
    }

    /// Checks the documented initial values; returns the first violation.
    pub fn check_initialization(&self) -> std::result::Result<(), String> {
        let limit = 2.0 * crate::nn::INIT_STD + 1e-7;
        for (name, t) in self.params.iter() {
            let vals = t.data().iter().map(|v| v.to_f64_lossy());
            let ok = if name.ends_with(".gamma") {
                vals.clone().all(|v| v == 1.0)
            } else if name.ends_with(".beta") || name.ends_with(".bias") || name.ends_with(".rel_bias") {
                vals.clone().all(|v| v == 0.0)
            } else if name.ends_with(".weight") {
                vals.clone().all(|v| v.abs() <= limit)
            } else {
                false
            };
            if !ok {
                return Err(format!("parameter `{name}` has unexpected initial values"));
            }
        }
        Ok(())
    }

    /// Input tensor for a batch of waveforms.
    pub fn batch_tensor(&self, inputs: &[&[f64]]) -> Result<Tensor<T>> {
        let l = self.config.input_length;
        let data: Vec<f64> = inputs.iter().flat_map(|x| x.iter().copied()).collect();
        Ok(Tensor::from_f64([inputs.len(), l, 1], &data)?)
    }
}
