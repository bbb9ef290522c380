//! Signal preprocessing and frequency tokenization.

mod butterworth;
mod fft;

pub use butterworth::{butterworth_bandpass, BandpassDesign, Biquad};
pub use fft::{fft_in_place, transform};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use xinet_tensor::Tensor;

use crate::error::{Error, Result};

/// A finite real amplitude sequence sampled at a fixed rate.
#[derive(Clone, Debug, PartialEq)]
pub struct Waveform {
    samples: Vec<f64>,
    sample_rate_hz: f64,
}

impl Waveform {
    pub fn new(samples: Vec<f64>, sample_rate_hz: f64) -> Result<Self> {
        if samples.len() < 2 {
            return Err(Error::InvalidInput(format!(
                "waveform needs at least 2 samples, got {}",
                samples.len()
            )));
        }
        if !(sample_rate_hz.is_finite() && sample_rate_hz > 0.0) {
            return Err(Error::InvalidInput(format!(
                "sample rate must be positive, got {sample_rate_hz}"
            )));
        }
        if let Some(i) = samples.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(format!("non-finite sample at index {i}")));
        }
        Ok(Self {
            samples,
            sample_rate_hz,
        })
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn into_samples(self) -> Vec<f64> {
        self.samples
    }

    pub fn sample_rate_hz(&self) -> f64 {
        self.sample_rate_hz
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_s(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate_hz
    }

    /// Time-reversed copy.
    pub fn reversed(&self) -> Self {
        let mut samples = self.samples.clone();
        samples.reverse();
        Self {
            samples,
            sample_rate_hz: self.sample_rate_hz,
        }
    }
}

/// Complex spectrum stored as two real planes of equal length.
#[derive(Clone, Debug, PartialEq)]
pub struct Spectrum {
    pub real: Vec<f64>,
    pub imag: Vec<f64>,
}

impl Spectrum {
    pub fn len(&self) -> usize {
        self.real.len()
    }

    pub fn is_empty(&self) -> bool {
        self.real.is_empty()
    }

    pub fn zeros(len: usize) -> Self {
        Self {
            real: vec![0.0; len],
            imag: vec![0.0; len],
        }
    }

    fn to_complex(&self) -> Vec<Complex64> {
        self.real
            .iter()
            .zip(&self.imag)
            .map(|(&re, &im)| Complex64::new(re, im))
            .collect()
    }

    fn from_complex(values: &[Complex64]) -> Self {
        Self {
            real: values.iter().map(|c| c.re).collect(),
            imag: values.iter().map(|c| c.im).collect(),
        }
    }
}

/// Preprocessing applied to every raw record before gaps are cut.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PreprocessConfig {
    pub low_hz: f64,
    pub high_hz: f64,
    pub order: usize,
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        Self {
            low_hz: 0.5,
            high_hz: 20.0,
            order: 4,
        }
    }
}

/// Doubles the sample rate by inserting the midpoint between neighbours and
/// replicating the final sample, so the output has exactly `2L` samples.
pub fn upsample2x(w: &Waveform) -> Result<Waveform> {
    let x = w.samples();
    if x.len() < 2 {
        return Err(Error::InvalidInput("upsampling needs at least 2 samples".into()));
    }
    let mut out = Vec::with_capacity(2 * x.len());
    for pair in x.windows(2) {
        out.push(pair[0]);
        out.push((pair[0] + pair[1]) / 2.0);
    }
    let last = x[x.len() - 1];
    out.extend([last, last]);
    Waveform::new(out, 2.0 * w.sample_rate_hz())
}

/// Upsample by two, then bandpass.
pub fn preprocess(raw: &Waveform, cfg: &PreprocessConfig) -> Result<Waveform> {
    let up = upsample2x(raw)?;
    butterworth_bandpass(&up, cfg.low_hz, cfg.high_hz, cfg.order)
}

/// Same-length discrete Fourier transform `X[k] = Σ x[n] e^{-i2πkn/L}`.
pub fn dft(w: &Waveform) -> Spectrum {
    dft_real(w.samples())
}

pub fn dft_real(x: &[f64]) -> Spectrum {
    let buf: Vec<Complex64> = x.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    Spectrum::from_complex(&transform(&buf, false))
}

/// Inverse transform; the imaginary residue of the result is discarded.
pub fn idft(s: &Spectrum, sample_rate_hz: f64) -> Result<Waveform> {
    let scale = 1.0 / s.len() as f64;
    let out = transform(&s.to_complex(), true);
    Waveform::new(out.iter().map(|c| c.re * scale).collect(), sample_rate_hz)
}

/// Stacks real and imaginary planes on a trailing channel axis: `[L, 2]`.
pub fn stack_complex(s: &Spectrum) -> Tensor<f64> {
    let data = s
        .real
        .iter()
        .zip(&s.imag)
        .flat_map(|(&re, &im)| [re, im])
        .collect();
    Tensor::new([s.len(), 2], data).expect("two channels per bin")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn wf(x: &[f64]) -> Waveform {
        Waveform::new(x.to_vec(), 10.0).unwrap()
    }

    #[test]
    fn upsample_midpoints_and_edge() {
        let up = upsample2x(&wf(&[1.0, 3.0])).unwrap();
        assert_eq!(up.samples(), &[1.0, 2.0, 3.0, 3.0]);
        assert_eq!(up.sample_rate_hz(), 20.0);
    }

    #[test]
    fn single_sample_waveform_rejected() {
        assert!(Waveform::new(vec![5.0], 1.0).is_err());
        assert!(Waveform::new(vec![1.0, f64::NAN], 1.0).is_err());
    }

    #[test]
    fn upsample_preserves_constants() {
        let up = upsample2x(&wf(&[0.25; 16])).unwrap();
        assert_eq!(up.len(), 32);
        assert!(up.samples().iter().all(|&v| v == 0.25));
    }

    #[test]
    fn impulse_and_dc_spectra() {
        let s = dft(&wf(&[1.0, 0.0, 0.0, 0.0]));
        assert_eq!(s.real, vec![1.0; 4]);
        assert_eq!(s.imag, vec![0.0; 4]);
        let s = dft(&wf(&[1.0; 4]));
        assert_eq!(s.real, vec![4.0, 0.0, 0.0, 0.0]);
        assert!(s.imag.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn idft_round_trip_and_zero() {
        let x = [1.0, 2.0, 3.0, 4.0];
        let back = idft(&dft(&wf(&x)), 10.0).unwrap();
        for (a, b) in back.samples().iter().zip(x) {
            assert!((a - b).abs() < 1e-9);
        }
        let z = idft(&Spectrum::zeros(8), 10.0).unwrap();
        assert!(z.samples().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn stacking_layout() {
        let s = Spectrum {
            real: vec![1.0, 2.0],
            imag: vec![3.0, 4.0],
        };
        let t = stack_complex(&s);
        assert_eq!(t.shape(), &[2, 2]);
        assert_eq!(t.data(), &[1.0, 3.0, 2.0, 4.0]);
        assert!(stack_complex(&Spectrum::zeros(3)).data().iter().all(|&v| v == 0.0));
        let t = stack_complex(&dft(&wf(&[1.0, 0.0, 0.0, 0.0])));
        assert_eq!(t.data(), &[1.0, 0.0, 1.0, 0.0, 1.0, 0.0, 1.0, 0.0]);
    }
}
