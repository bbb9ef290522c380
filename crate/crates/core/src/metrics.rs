//! Gap-restricted evaluation metrics and report aggregation.

use serde::{Deserialize, Serialize};

use crate::data::{GapSpec, Sample};
use crate::error::{Error, Result};
use crate::reconstruct::{reconstruct_batch, Reconstructor};

/// `[gap.start - margin, gap.end + margin)`, clipped to the record.
pub fn gap_segment(x: &[f64], gap: GapSpec, margin: usize) -> &[f64] {
    let start = gap.start.saturating_sub(margin);
    let end = (gap.end() + margin).min(x.len());
    &x[start.min(end)..end]
}

/// Distance between two curve points.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PointMetric {
    /// `|p_i - q_j|`.
    #[default]
    Amplitude,
    /// Euclidean distance between `(i·dt, p_i)` and `(j·dt, q_j)`.
    TimeAmplitude { dt: f64 },
}

impl PointMetric {
    fn dist(self, i: usize, pi: f64, j: usize, qj: f64) -> f64 {
        match self {
            PointMetric::Amplitude => (pi - qj).abs(),
            PointMetric::TimeAmplitude { dt } => (dt * (i as f64 - j as f64)).hypot(pi - qj),
        }
    }
}

/// Discrete Fréchet distance with the amplitude point metric.
pub fn dfd(p: &[f64], q: &[f64]) -> Result<f64> {
    dfd_with(p, q, PointMetric::Amplitude)
}

/// Discrete Fréchet distance by the coupling-measure dynamic program, one
/// row at a time.
pub fn dfd_with(p: &[f64], q: &[f64], metric: PointMetric) -> Result<f64> {
    if p.is_empty() || q.is_empty() {
        return Err(Error::InvalidInput("discrete Fréchet distance of an empty curve".into()));
    }
    let mut prev = vec![0.0; q.len()];
    let mut cur = vec![0.0; q.len()];
    for (i, &pi) in p.iter().enumerate() {
        for (j, &qj) in q.iter().enumerate() {
            let d = metric.dist(i, pi, j, qj);
            let reach = match (i, j) {
                (0, 0) => d,
                (0, _) => cur[j - 1],
                (_, 0) => prev[0],
                _ => prev[j].min(prev[j - 1]).min(cur[j - 1]),
            };
            cur[j] = d.max(reach);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    Ok(prev[q.len() - 1])
}

fn check_pair(p: &[f64], q: &[f64]) -> Result<()> {
    if p.len() != q.len() {
        return Err(Error::InvalidInput(format!("length mismatch: {} vs {}", p.len(), q.len())));
    }
    if p.is_empty() {
        return Err(Error::InvalidInput("empty segment".into()));
    }
    Ok(())
}

pub fn mae(p: &[f64], q: &[f64]) -> Result<f64> {
    check_pair(p, q)?;
    Ok(stable_mean(p.iter().zip(q).map(|(a, b)| (a - b).abs())))
}

pub fn rmse(p: &[f64], q: &[f64]) -> Result<f64> {
    check_pair(p, q)?;
    Ok(stable_mean(p.iter().zip(q).map(|(a, b)| (a - b).powi(2))).sqrt())
}

/// `max - min` of a nonempty array.
pub fn range(x: &[f64]) -> f64 {
    let max = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min = x.iter().copied().fold(f64::INFINITY, f64::min);
    max - min
}

/// Order-independent mean: values are sorted before summation.
fn stable_mean(values: impl IntoIterator<Item = f64>) -> f64 {
    let mut v: Vec<f64> = values.into_iter().collect();
    v.sort_by(f64::total_cmp);
    v.iter().sum::<f64>() / v.len() as f64
}

/// Mean range difference: `|mean range(preds) - mean range(targets)|`.
pub fn mrd(preds: &[&[f64]], targets: &[&[f64]]) -> Result<f64> {
    if preds.is_empty() || preds.len() != targets.len() {
        return Err(Error::InvalidInput(format!(
            "need equally many nonempty predictions and targets, got {} and {}",
            preds.len(),
            targets.len()
        )));
    }
    if preds.iter().chain(targets).any(|x| x.is_empty()) {
        return Err(Error::InvalidInput("empty segment".into()));
    }
    Ok((stable_mean(preds.iter().map(|x| range(x))) - stable_mean(targets.iter().map(|x| range(x)))).abs())
}

/// Metrics of one reconstructed record.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampleMetrics {
    pub index: usize,
    pub dfd: f64,
    pub mae: f64,
    pub rmse: f64,
    pub pred_range: f64,
    pub target_range: f64,
}

/// Aggregate gap-restricted scores of one reconstructor over a dataset.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub reconstructor: String,
    pub margin: usize,
    pub point_metric: PointMetric,
    pub dfd_mean: f64,
    pub mrd: f64,
    pub mae_mean: f64,
    pub rmse_mean: f64,
    pub samples: Vec<SampleMetrics>,
}

/// Observed samples verbatim, `recon` inside the gap.
pub fn splice(input: &[f64], recon: &[f64], gap: GapSpec) -> Result<Vec<f64>> {
    if input.len() != recon.len() {
        return Err(Error::InvalidInput(format!(
            "reconstruction has {} samples, input has {}",
            recon.len(),
            input.len()
        )));
    }
    gap.check_within(input.len())?;
    let mut out = input.to_vec();
    out[gap.start..gap.end()].copy_from_slice(&recon[gap.start..gap.end()]);
    Ok(out)
}

/// Options shared by every evaluation.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct EvalOptions {
    pub margin: usize,
    pub point_metric: PointMetric,
}

/// Scores already spliced reconstructions against their samples.
pub fn score(name: &str, samples: &[Sample], recons: &[Vec<f64>], opts: EvalOptions) -> Result<EvalReport> {
    if samples.is_empty() || samples.len() != recons.len() {
        return Err(Error::InvalidInput(format!(
            "{} samples but {} reconstructions",
            samples.len(),
            recons.len()
        )));
    }
    let mut per = Vec::with_capacity(samples.len());
    let mut pred_segs = Vec::with_capacity(samples.len());
    let mut tgt_segs = Vec::with_capacity(samples.len());
    for (index, (s, r)) in samples.iter().zip(recons).enumerate() {
        if r.len() != s.target.len() {
            return Err(Error::InvalidInput(format!(
                "reconstruction {index} has {} samples, target has {}",
                r.len(),
                s.target.len()
            )));
        }
        let p = gap_segment(r, s.gap, opts.margin);
        let t = gap_segment(s.target.samples(), s.gap, opts.margin);
        let m = SampleMetrics {
            index,
            dfd: dfd_with(p, t, opts.point_metric)?,
            mae: mae(p, t)?,
            rmse: rmse(p, t)?,
            pred_range: range(p),
            target_range: range(t),
        };
        if ![m.dfd, m.mae, m.rmse, m.pred_range].iter().all(|v| v.is_finite()) {
            return Err(Error::Numeric(format!("non-finite metric for sample {index}")));
        }
        per.push(m);
        pred_segs.push(p);
        tgt_segs.push(t);
    }
    Ok(EvalReport {
        reconstructor: name.to_string(),
        margin: opts.margin,
        point_metric: opts.point_metric,
        dfd_mean: stable_mean(per.iter().map(|m| m.dfd)),
        mrd: mrd(&pred_segs, &tgt_segs)?,
        mae_mean: stable_mean(per.iter().map(|m| m.mae)),
        rmse_mean: stable_mean(per.iter().map(|m| m.rmse)),
        samples: per,
    })
}

/// Reconstructs every sample with `r` and scores the result.
pub fn evaluate(samples: &[Sample], r: &dyn Reconstructor, opts: EvalOptions) -> Result<EvalReport> {
    let recons = reconstruct_batch(r, samples)?;
    score(r.name(), samples, &recons, opts)
}

impl EvalReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }

    /// Values in [`ROW_NAMES`] order.
    pub fn rows(&self) -> [f64; 4] {
        [self.dfd_mean, self.mrd, self.mae_mean, self.rmse_mean]
    }
}

pub const ROW_NAMES: [&str; 4] = ["DFD", "MRD", "MAE", "RMSE"];

/// Aligned text table, one column per report and rows DFD, MRD, MAE, RMSE.
pub fn format_table(reports: &[&EvalReport]) -> String {
    let width = reports
        .iter()
        .map(|r| r.reconstructor.len())
        .max()
        .unwrap_or(0)
        .max(10);
    let mut out = format!("{:<8}", "Metric");
    for r in reports {
        out.push_str(&format!("  {:>width$}", r.reconstructor));
    }
    out.push('\n');
    for (i, name) in ROW_NAMES.iter().enumerate() {
        out.push_str(&format!("{name:<8}"));
        for r in reports {
            out.push_str(&format!("  {:>width$.6}", r.rows()[i]));
        }
        out.push('\n');
    }
    let n = reports.first().map_or(0, |r| r.samples.len());
    let margin = reports.first().map_or(0, |r| r.margin);
    out.push_str(&format!(
        "Lower is better for every metric. {n} samples, gap margin {margin}.\n"
    ));
    out
}
