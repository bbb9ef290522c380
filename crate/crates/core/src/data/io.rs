use std::collections::HashSet;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::gaps::{GapSpec, Sample};
use crate::dsp::Waveform;
use crate::error::{Error, Result};

/// Formats like C's `%.17g`: 17 significant digits, trailing zeros dropped,
/// exponent form outside `1e-4 <= |v| < 1e17`.
pub fn format_g17(v: f64) -> String {
    if v == 0.0 {
        return if v.is_sign_negative() { "-0".into() } else { "0".into() };
    }
    if !v.is_finite() {
        return if v.is_nan() {
            "nan".into()
        } else if v > 0.0 {
            "inf".into()
        } else {
            "-inf".into()
        };
    }
    let sci = format!("{v:.16e}");
    let (mantissa, exp) = sci.split_once('e').expect("exponent form");
    let exp: i32 = exp.parse().expect("integer exponent");
    if (-4..17).contains(&exp) {
        let decimals = (16 - exp) as usize;
        trim_fraction(format!("{v:.decimals$}"))
    } else {
        let m = trim_fraction(mantissa.to_string());
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{m}e{sign}{:02}", exp.abs())
    }
}

fn trim_fraction(s: String) -> String {
    if !s.contains('.') {
        return s;
    }
    s.trim_end_matches('0').trim_end_matches('.').to_string()
}

/// One amplitude per line.
pub fn save_waveform(path: &Path, samples: &[f64]) -> Result<()> {
    let mut text = String::with_capacity(samples.len() * 24);
    for &v in samples {
        text.push_str(&format_g17(v));
        text.push('\n');
    }
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn load_waveform(path: &Path) -> Result<Vec<f64>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let v: f64 = line.parse().map_err(|_| Error::Parse {
            path: path.to_path_buf(),
            line: i + 1,
            msg: format!("not a number: {line:?}"),
        })?;
        if !v.is_finite() {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                line: i + 1,
                msg: "non-finite amplitude".into(),
            });
        }
        out.push(v);
    }
    Ok(out)
}

/// Train/validation membership by file index.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Split {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
}

/// JSON sidecar describing a directory of waveform files.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub sample_rate_hz: f64,
    pub length: usize,
    /// Paths relative to the manifest's directory.
    pub files: Vec<String>,
    pub gaps: Vec<GapSpec>,
    pub seed: u64,
    pub split: Split,
}

pub const MANIFEST_FILE: &str = "manifest.json";

impl DatasetManifest {
    /// Structural checks that do not touch the file system.
    pub fn check(&self) -> Result<()> {
        if self.files.len() != self.gaps.len() {
            return Err(Error::Manifest(format!(
                "{} files but {} gaps",
                self.files.len(),
                self.gaps.len()
            )));
        }
        for (file, gap) in self.files.iter().zip(&self.gaps) {
            gap.check_within(self.length)
                .map_err(|e| Error::Manifest(format!("{file}: {e}")))?;
        }
        let train: HashSet<_> = self.split.train.iter().collect();
        let val: HashSet<_> = self.split.val.iter().collect();
        if train.len() != self.split.train.len() || val.len() != self.split.val.len() {
            return Err(Error::Manifest("duplicate index in split".into()));
        }
        if let Some(i) = train.intersection(&val).next() {
            return Err(Error::Manifest(format!("file index {i} is in both train and val")));
        }
        if let Some(&&i) = train.union(&val).find(|&&&i| i >= self.files.len()) {
            return Err(Error::Manifest(format!("split index {i} out of range")));
        }
        Ok(())
    }
}

pub fn save_manifest(path: &Path, manifest: &DatasetManifest) -> Result<()> {
    manifest.check()?;
    let text = serde_json::to_string_pretty(manifest)?;
    fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}

/// Reads a manifest and verifies every listed file exists and parses with
/// the declared length.
pub fn load_manifest(path: &Path) -> Result<DatasetManifest> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let manifest: DatasetManifest = serde_json::from_str(&text)?;
    manifest.check()?;
    let dir = base_dir(path);
    for file in &manifest.files {
        let p = dir.join(file);
        if !p.is_file() {
            return Err(Error::Manifest(format!("listed file {} does not exist", p.display())));
        }
    }
    Ok(manifest)
}

fn base_dir(manifest_path: &Path) -> PathBuf {
    manifest_path
        .parent()
        .map(Path::to_path_buf)
        .unwrap_or_else(|| PathBuf::from("."))
}

/// Samples of a loaded dataset, grouped by split.
#[derive(Clone, Debug)]
pub struct LoadedDataset {
    pub manifest: DatasetManifest,
    pub train: Vec<Sample>,
    pub val: Vec<Sample>,
}

impl LoadedDataset {
    pub fn load(manifest_path: &Path) -> Result<Self> {
        let manifest = load_manifest(manifest_path)?;
        let dir = base_dir(manifest_path);
        let read = |i: usize| -> Result<Sample> {
            let p = dir.join(&manifest.files[i]);
            let samples = load_waveform(&p)?;
            if samples.len() != manifest.length {
                return Err(Error::Manifest(format!(
                    "{} has {} samples, manifest says {}",
                    p.display(),
                    samples.len(),
                    manifest.length
                )));
            }
            Sample::new(Waveform::new(samples, manifest.sample_rate_hz)?, manifest.gaps[i])
        };
        let train = manifest.split.train.iter().map(|&i| read(i)).collect::<Result<_>>()?;
        let val = manifest.split.val.iter().map(|&i| read(i)).collect::<Result<_>>()?;
        Ok(Self { manifest, train, val })
    }
}
