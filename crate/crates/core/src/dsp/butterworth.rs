use std::f64::consts::PI;

use num_complex::Complex64;

use super::Waveform;
use crate::error::{Error, Result};

/// One second-order section, `a[0] == 1`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Biquad {
    pub b: [f64; 3],
    pub a: [f64; 3],
}

impl Biquad {
    fn response(&self, z_inv: Complex64) -> Complex64 {
        let z2 = z_inv * z_inv;
        (self.b[0] + z_inv * self.b[1] + z2 * self.b[2])
            / (self.a[0] + z_inv * self.a[1] + z2 * self.a[2])
    }

    /// Roots of `z² + a1 z + a2`.
    pub fn poles(&self) -> [Complex64; 2] {
        let (a1, a2) = (self.a[1], self.a[2]);
        let disc = Complex64::new(a1 * a1 - 4.0 * a2, 0.0).sqrt();
        [(-a1 + disc) / 2.0, (-a1 - disc) / 2.0]
    }
}

/// Digital Butterworth bandpass as a cascade of second-order sections.
///
/// `order` is the order of the bandpass filter itself (number of poles), so
/// the lowpass prototype has `order / 2` poles and the cascade has `order / 2`
/// sections.
#[derive(Clone, Debug, PartialEq)]
pub struct BandpassDesign {
    pub low_hz: f64,
    pub high_hz: f64,
    pub sample_rate_hz: f64,
    pub order: usize,
    pub sections: Vec<Biquad>,
}

impl BandpassDesign {
    pub fn new(low_hz: f64, high_hz: f64, sample_rate_hz: f64, order: usize) -> Result<Self> {
        let nyquist = sample_rate_hz / 2.0;
        if !(low_hz > 0.0 && low_hz < high_hz && high_hz < nyquist) {
            return Err(Error::InvalidInput(format!(
                "bandpass needs 0 < low < high < {nyquist} Hz, got [{low_hz}, {high_hz}]"
            )));
        }
        if order == 0 || !order.is_multiple_of(2) {
            return Err(Error::InvalidInput(format!(
                "bandpass order must be even and positive, got {order}"
            )));
        }
        let n = order / 2;
        let fs2 = 2.0 * sample_rate_hz;
        // Pre-warp so the digital -3 dB points land exactly on the cutoffs.
        let wl = fs2 * (PI * low_hz / sample_rate_hz).tan();
        let wh = fs2 * (PI * high_hz / sample_rate_hz).tan();
        let bw = wh - wl;
        let w0sq = wl * wh;

        let mut analog = Vec::with_capacity(order);
        for k in 0..n {
            let theta = PI * (2 * k + n + 1) as f64 / (2 * n) as f64;
            let p = Complex64::from_polar(1.0, theta);
            let half = p * bw / 2.0;
            let d = (half * half - w0sq).sqrt();
            analog.push(half + d);
            analog.push(half - d);
        }

        // Bilinear transform: n zeros at s = 0 map to z = 1, n zeros at
        // infinity map to z = -1.
        let mut gain = Complex64::new(bw.powi(n as i32) * fs2.powi(n as i32), 0.0);
        let digital: Vec<Complex64> = analog
            .iter()
            .map(|&s| {
                gain /= fs2 - s;
                (fs2 + s) / (fs2 - s)
            })
            .collect();

        let sections = pair_poles(&digital)?
            .into_iter()
            .enumerate()
            .map(|(i, (p, q))| {
                let k = if i == 0 { gain.re } else { 1.0 };
                Biquad {
                    b: [k, 0.0, -k],
                    a: [1.0, -(p + q).re, (p * q).re],
                }
            })
            .collect::<Vec<_>>();

        for s in &sections {
            for p in s.poles() {
                if p.norm() >= 1.0 {
                    return Err(Error::UnstableFilter(p.norm()));
                }
            }
        }
        Ok(Self {
            low_hz,
            high_hz,
            sample_rate_hz,
            order,
            sections,
        })
    }

    pub fn poles(&self) -> Vec<Complex64> {
        self.sections.iter().flat_map(|s| s.poles()).collect()
    }

    /// Complex frequency response at `freq_hz`.
    pub fn response(&self, freq_hz: f64) -> Complex64 {
        let z_inv = Complex64::from_polar(1.0, -2.0 * PI * freq_hz / self.sample_rate_hz);
        self.sections
            .iter()
            .map(|s| s.response(z_inv))
            .fold(Complex64::new(1.0, 0.0), |acc, h| acc * h)
    }

    /// Causal single pass, transposed direct form II per section.
    pub fn filter(&self, x: &[f64]) -> Vec<f64> {
        let mut y = x.to_vec();
        for s in &self.sections {
            let (mut z1, mut z2) = (0.0, 0.0);
            for v in y.iter_mut() {
                let input = *v;
                let out = s.b[0] * input + z1;
                z1 = s.b[1] * input - s.a[1] * out + z2;
                z2 = s.b[2] * input - s.a[2] * out;
                *v = out;
            }
        }
        y
    }
}

/// Groups poles into conjugate pairs (or pairs of real poles).
fn pair_poles(poles: &[Complex64]) -> Result<Vec<(Complex64, Complex64)>> {
    const IMAG_EPS: f64 = 1e-12;
    let mut pairs: Vec<(Complex64, Complex64)> = poles
        .iter()
        .filter(|p| p.im > IMAG_EPS)
        .map(|&p| (p, p.conj()))
        .collect();
    let mut reals: Vec<f64> = poles
        .iter()
        .filter(|p| p.im.abs() <= IMAG_EPS)
        .map(|p| p.re)
        .collect();
    reals.sort_by(f64::total_cmp);
    if !reals.len().is_multiple_of(2) || 2 * pairs.len() + reals.len() != poles.len() {
        return Err(Error::Numeric("could not pair filter poles into sections".into()));
    }
    for r in reals.chunks_exact(2) {
        pairs.push((Complex64::new(r[0], 0.0), Complex64::new(r[1], 0.0)));
    }
    Ok(pairs)
}

/// Butterworth bandpass of a waveform (causal, single pass).
pub fn butterworth_bandpass(w: &Waveform, low_hz: f64, high_hz: f64, order: usize) -> Result<Waveform> {
    let design = BandpassDesign::new(low_hz, high_hz, w.sample_rate_hz(), order)?;
    Waveform::new(design.filter(w.samples()), w.sample_rate_hz())
}
