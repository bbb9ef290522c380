use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::swin1d::heads_for;

/// Which encoders feed the decoder.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    /// Separate time and frequency encoders fused by channel stacking.
    Full,
    /// Time encoder only, decoder at encoder width.
    TimeOnly,
    /// One encoder over stacked time, real and imaginary channels.
    SingleEncoder,
}

impl Variant {
    pub const ALL: [Variant; 3] = [Variant::Full, Variant::TimeOnly, Variant::SingleEncoder];

    pub fn name(self) -> &'static str {
        match self {
            Variant::Full => "full",
            Variant::TimeOnly => "time_only",
            Variant::SingleEncoder => "single_encoder",
        }
    }

    /// Decoder width relative to one encoder.
    pub fn decoder_factor(self) -> usize {
        match self {
            Variant::Full => 2,
            Variant::TimeOnly | Variant::SingleEncoder => 1,
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Variant::ALL
            .into_iter()
            .find(|v| v.name() == s)
            .ok_or_else(|| Error::Unknown {
                kind: "variant",
                name: s.to_string(),
                available: Variant::ALL.map(Variant::name).join(", "),
            })
    }
}

/// Architecture hyper-parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct XiNetConfig {
    pub input_length: usize,
    pub patch: usize,
    pub embed_dim: usize,
    /// Blocks per encoder stage; decoder stages mirror these.
    pub stage_depths: Vec<usize>,
    pub bottleneck_depth: usize,
    pub window: usize,
    /// Target width per attention head.
    pub head_dim: usize,
    pub variant: Variant,
    pub seed: u64,
    /// Multiplier applied to the spectrum; `None` means `1 / input_length`.
    pub spectrum_scale: Option<f64>,
}

impl Default for XiNetConfig {
    fn default() -> Self {
        Self {
            input_length: 1024,
            patch: 8,
            embed_dim: 16,
            stage_depths: vec![2, 2, 2],
            bottleneck_depth: 2,
            window: 8,
            head_dim: 32,
            variant: Variant::Full,
            seed: 0,
            spectrum_scale: None,
        }
    }
}

impl XiNetConfig {
    /// Small configuration that trains on 2 000 records of 1024 samples in
    /// minutes per epoch on one core.
    pub fn desk() -> Self {
        Self {
            input_length: 1024,
            patch: 16,
            embed_dim: 16,
            stage_depths: vec![1, 1],
            bottleneck_depth: 1,
            window: 8,
            ..Self::default()
        }
    }

    pub fn stages(&self) -> usize {
        self.stage_depths.len()
    }

    /// Tokens after patch partition.
    pub fn tokens(&self) -> usize {
        self.input_length / self.patch
    }

    /// Width of encoder stage `s`; `s == stages()` is the bottleneck.
    pub fn encoder_dim(&self, s: usize) -> usize {
        self.embed_dim << s
    }

    pub fn decoder_dim(&self, s: usize) -> usize {
        self.encoder_dim(s) * self.variant.decoder_factor()
    }

    pub fn tokens_at(&self, s: usize) -> usize {
        self.tokens() >> s
    }

    pub fn heads(&self, dim: usize) -> usize {
        heads_for(dim, self.head_dim)
    }

    pub fn spectrum_scale(&self) -> f64 {
        self.spectrum_scale.unwrap_or(1.0 / self.input_length as f64)
    }

    /// Input channels of the first encoder.
    pub fn input_channels(&self) -> usize {
        match self.variant {
            Variant::Full | Variant::TimeOnly => 1,
            Variant::SingleEncoder => 3,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidInput(msg));
        if self.patch == 0 || self.embed_dim == 0 || self.window == 0 || self.head_dim == 0 {
            return bad("patch, embed_dim, window and head_dim must be positive".into());
        }
        if self.stage_depths.is_empty() {
            return bad("at least one encoder stage is required".into());
        }
        if self.input_length == 0 || !self.input_length.is_multiple_of(self.patch) {
            return bad(format!(
                "input_length {} is not divisible by patch {}",
                self.input_length, self.patch
            ));
        }
        let unit = self.window << self.stages();
        if !self.tokens().is_multiple_of(unit) {
            return bad(format!(
                "token count {} (input_length / patch) must be divisible by window * 2^stages = {unit}",
                self.tokens()
            ));
        }
        if !self.spectrum_scale().is_finite() {
            return bad("spectrum_scale must be finite".into());
        }
        Ok(())
    }

    /// Input lengths compatible with the patch, window and stage settings.
    pub fn length_unit(&self) -> usize {
        self.patch * (self.window << self.stages())
    }
}
