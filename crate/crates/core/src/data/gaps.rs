use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dsp::Waveform;
use crate::error::{Error, Result};

/// Shortest and longest gap, in seconds.
pub const GAP_SECONDS: (f64, f64) = (0.5, 1.0);
/// Fraction of the record kept free of gaps at each end.
pub const EDGE_FRACTION: f64 = 0.05;

/// A contiguous missing segment `[start, start + len)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GapSpec {
    pub start: usize,
    pub len: usize,
}

impl GapSpec {
    pub fn end(&self) -> usize {
        self.start + self.len
    }

    pub fn contains(&self, i: usize) -> bool {
        (self.start..self.end()).contains(&i)
    }

    pub fn start_s(&self, sample_rate_hz: f64) -> f64 {
        self.start as f64 / sample_rate_hz
    }

    pub fn end_s(&self, sample_rate_hz: f64) -> f64 {
        self.end() as f64 / sample_rate_hz
    }

    /// Same gap on the time-reversed record.
    pub fn mirrored(&self, record_len: usize) -> Self {
        Self {
            start: record_len - self.end(),
            len: self.len,
        }
    }

    pub fn check_within(&self, record_len: usize) -> Result<()> {
        if self.len == 0 || self.end() > record_len {
            return Err(Error::InvalidInput(format!(
                "gap {}..{} does not fit a record of {record_len} samples",
                self.start,
                self.end()
            )));
        }
        Ok(())
    }
}

/// Inclusive admissible gap lengths at `sample_rate_hz`.
pub fn gap_length_range(sample_rate_hz: f64) -> (usize, usize) {
    (
        (GAP_SECONDS.0 * sample_rate_hz).ceil() as usize,
        (GAP_SECONDS.1 * sample_rate_hz).floor() as usize,
    )
}

/// A training/evaluation pair: the gapped input and the complete target.
#[derive(Clone, Debug, PartialEq)]
pub struct Sample {
    pub input: Waveform,
    pub target: Waveform,
    pub gap: GapSpec,
}

impl Sample {
    /// Zero-fills `gap` in a copy of `target`.
    pub fn new(target: Waveform, gap: GapSpec) -> Result<Self> {
        gap.check_within(target.len())?;
        let mut x = target.samples().to_vec();
        x[gap.start..gap.end()].iter_mut().for_each(|v| *v = 0.0);
        Ok(Self {
            input: Waveform::new(x, target.sample_rate_hz())?,
            target,
            gap,
        })
    }

    pub fn len(&self) -> usize {
        self.target.len()
    }

    pub fn is_empty(&self) -> bool {
        self.target.is_empty()
    }

    pub fn mirrored(&self) -> Self {
        Self {
            input: self.input.reversed(),
            target: self.target.reversed(),
            gap: self.gap.mirrored(self.len()),
        }
    }
}

/// Draws a 0.5–1 s gap, uniform in length and in start position, keeping the
/// first and last 5% of the record intact.
pub fn cut_gap<R: Rng + ?Sized>(w: &Waveform, rng: &mut R) -> Result<Sample> {
    if w.duration_s() <= 2.0 {
        return Err(Error::InvalidInput(format!(
            "record of {:.3} s is too short for a gap (needs > 2 s)",
            w.duration_s()
        )));
    }
    let (lo, hi) = gap_length_range(w.sample_rate_hz());
    let len = rng.random_range(lo..=hi);
    let edge = (EDGE_FRACTION * w.len() as f64).ceil() as usize;
    let last_start = w
        .len()
        .checked_sub(edge + len)
        .filter(|&s| s >= edge)
        .ok_or_else(|| Error::InvalidInput("record too short to place a gap away from its edges".into()))?;
    let start = rng.random_range(edge..=last_start);
    Sample::new(w.clone(), GapSpec { start, len })
}

/// Originals followed by their time-reversed copies.
pub fn mirror_augment(samples: &[Sample]) -> Vec<Sample> {
    samples
        .iter()
        .cloned()
        .chain(samples.iter().map(Sample::mirrored))
        .collect()
}
