//! Gap fillers selectable by name: reference baselines and trained models.

use crate::data::Sample;
use crate::error::{Error, Result};
use crate::metrics::splice;
use crate::model::{Checkpoint, Variant, XiNet};

/// Produces a full-length estimate of a gapped record. Only the gap of the
/// estimate is kept; see [`reconstruct`].
pub trait Reconstructor {
    fn name(&self) -> &str;

    fn estimate(&self, sample: &Sample) -> Result<Vec<f64>>;

    fn estimate_batch(&self, samples: &[Sample]) -> Result<Vec<Vec<f64>>> {
        samples.iter().map(|s| self.estimate(s)).collect()
    }
}

/// Estimate spliced into the gap; observed samples are returned verbatim.
pub fn reconstruct(r: &dyn Reconstructor, sample: &Sample) -> Result<Vec<f64>> {
    splice(sample.input.samples(), &r.estimate(sample)?, sample.gap)
}

pub fn reconstruct_batch(r: &dyn Reconstructor, samples: &[Sample]) -> Result<Vec<Vec<f64>>> {
    r.estimate_batch(samples)?
        .iter()
        .zip(samples)
        .map(|(e, s)| splice(s.input.samples(), e, s.gap))
        .collect()
}

/// Leaves the gap at zero.
#[derive(Clone, Copy, Debug, Default)]
pub struct ZeroFill;

impl Reconstructor for ZeroFill {
    fn name(&self) -> &str {
        "zero_fill"
    }

    fn estimate(&self, sample: &Sample) -> Result<Vec<f64>> {
        let mut x = sample.input.samples().to_vec();
        x[sample.gap.start..sample.gap.end()].iter_mut().for_each(|v| *v = 0.0);
        Ok(x)
    }
}

/// Straight line between the last sample before and the first after the gap.
#[derive(Clone, Copy, Debug, Default)]
pub struct LinearInterp;

impl Reconstructor for LinearInterp {
    fn name(&self) -> &str {
        "linear_interp"
    }

    fn estimate(&self, sample: &Sample) -> Result<Vec<f64>> {
        let gap = sample.gap;
        let mut x = sample.input.samples().to_vec();
        if gap.start == 0 || gap.end() >= x.len() {
            return Err(Error::InvalidInput(format!(
                "linear interpolation needs an interior gap, got {}..{} of {}",
                gap.start,
                gap.end(),
                x.len()
            )));
        }
        let (i0, i1) = (gap.start - 1, gap.end());
        let (y0, y1) = (x[i0], x[i1]);
        let span = (i1 - i0) as f64;
        for i in gap.start..gap.end() {
            x[i] = y0 + (y1 - y0) * (i - i0) as f64 / span;
        }
        Ok(x)
    }
}

/// Returns the true record; every metric is zero.
#[derive(Clone, Copy, Debug, Default)]
pub struct GroundTruth;

impl Reconstructor for GroundTruth {
    fn name(&self) -> &str {
        "ground_truth"
    }

    fn estimate(&self, sample: &Sample) -> Result<Vec<f64>> {
        Ok(sample.target.samples().to_vec())
    }
}

/// A trained network, run in fixed-size batches.
#[derive(Clone, Debug)]
pub struct ModelReconstructor {
    pub model: XiNet<f32>,
    pub batch_size: usize,
}

impl ModelReconstructor {
    pub fn new(model: XiNet<f32>) -> Self {
        Self { model, batch_size: 16 }
    }
}

impl Reconstructor for ModelReconstructor {
    fn name(&self) -> &str {
        self.model.variant().name()
    }

    fn estimate(&self, sample: &Sample) -> Result<Vec<f64>> {
        Ok(self.model.predict(&[sample.input.samples()])?.remove(0))
    }

    fn estimate_batch(&self, samples: &[Sample]) -> Result<Vec<Vec<f64>>> {
        let mut out = Vec::with_capacity(samples.len());
        for chunk in samples.chunks(self.batch_size.max(1)) {
            let inputs: Vec<&[f64]> = chunk.iter().map(|s| s.input.samples()).collect();
            out.extend(self.model.predict(&inputs)?);
        }
        Ok(out)
    }
}

type Factory = fn(Option<&Checkpoint>) -> Result<Box<dyn Reconstructor>>;

/// Name-to-constructor table for every available reconstructor.
pub struct ReconstructorRegistry {
    entries: Vec<(&'static str, Factory)>,
}

fn model_factory(variant: Variant, ckpt: Option<&Checkpoint>) -> Result<Box<dyn Reconstructor>> {
    let ck = ckpt.ok_or_else(|| Error::InvalidInput(format!("`{variant}` needs a checkpoint")))?;
    ck.expect_variant(variant)?;
    Ok(Box::new(ModelReconstructor::new(ck.model.clone())))
}

impl Default for ReconstructorRegistry {
    fn default() -> Self {
        let mut r = Self { entries: Vec::new() };
        r.register("zero_fill", |_| Ok(Box::new(ZeroFill)));
        r.register("linear_interp", |_| Ok(Box::new(LinearInterp)));
        r.register("ground_truth", |_| Ok(Box::new(GroundTruth)));
        r.register("full", |c| model_factory(Variant::Full, c));
        r.register("time_only", |c| model_factory(Variant::TimeOnly, c));
        r.register("single_encoder", |c| model_factory(Variant::SingleEncoder, c));
        r
    }
}

impl ReconstructorRegistry {
    /// Adds or replaces an entry.
    pub fn register(&mut self, name: &'static str, factory: Factory) {
        match self.entries.iter_mut().find(|(n, _)| *n == name) {
            Some(e) => e.1 = factory,
            None => self.entries.push((name, factory)),
        }
    }

    pub fn names(&self) -> Vec<&'static str> {
        self.entries.iter().map(|(n, _)| *n).collect()
    }

    pub fn build(&self, name: &str, ckpt: Option<&Checkpoint>) -> Result<Box<dyn Reconstructor>> {
        let (_, f) = self.entries.iter().find(|(n, _)| *n == name).ok_or_else(|| Error::Unknown {
            kind: "reconstructor",
            name: name.to_string(),
            available: self.names().join(", "),
        })?;
        f(ckpt)
    }

    /// The model reconstructor matching a checkpoint's own variant.
    pub fn from_checkpoint(&self, ckpt: &Checkpoint) -> Result<Box<dyn Reconstructor>> {
        self.build(ckpt.model.variant().name(), Some(ckpt))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::GapSpec;
    use crate::dsp::Waveform;

    fn sample(x: Vec<f64>, start: usize, len: usize) -> Sample {
        Sample::new(Waveform::new(x, 10.0).unwrap(), GapSpec { start, len }).unwrap()
    }

    #[test]
    fn linear_interp_midpoint_and_ramp() {
        let s = sample(vec![0.0, 5.0, 2.0], 1, 1);
        assert_eq!(reconstruct(&LinearInterp, &s).unwrap(), vec![0.0, 1.0, 2.0]);
        let ramp: Vec<f64> = (0..10).map(|i| 0.5 * i as f64 - 1.0).collect();
        let s = sample(ramp.clone(), 3, 4);
        assert_eq!(reconstruct(&LinearInterp, &s).unwrap(), ramp);
        assert!(LinearInterp.estimate(&sample(vec![1.0; 5], 0, 2)).is_err());
        assert!(LinearInterp.estimate(&sample(vec![1.0; 5], 3, 2)).is_err());
    }

    #[test]
    fn splice_keeps_observed_samples() {
        let s = sample(vec![1.0, 2.0, 3.0, 4.0], 1, 2);
        let r = reconstruct(&GroundTruth, &s).unwrap();
        assert_eq!(r, s.target.samples());
        assert_eq!(reconstruct(&ZeroFill, &s).unwrap(), vec![1.0, 0.0, 0.0, 4.0]);
    }

    #[test]
    fn registry_lookup() {
        let reg = ReconstructorRegistry::default();
        assert_eq!(reg.build("zero_fill", None).unwrap().name(), "zero_fill");
        assert!(matches!(reg.build("nope", None), Err(Error::Unknown { .. })));
        assert!(reg.build("full", None).is_err());
    }
}
