//! Synthetic records, gap synthesis, augmentation and file I/O.

mod gaps;
mod generator;
mod io;

pub use gaps::{cut_gap, gap_length_range, mirror_augment, GapSpec, Sample, EDGE_FRACTION, GAP_SECONDS};
pub use generator::{generate_waveform, EventWavelet, GeneratorConfig, SyntheticRecord};
pub use io::{
    format_g17, load_manifest, load_waveform, save_manifest, save_waveform, DatasetManifest,
    LoadedDataset, Split, MANIFEST_FILE,
};

use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dsp::{preprocess, PreprocessConfig};
use crate::error::{Error, Result};

/// Everything needed to reproduce a synthetic dataset.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DatasetConfig {
    pub count: usize,
    /// Length after preprocessing (the raw record has half as many samples).
    pub length: usize,
    /// Rate after preprocessing.
    pub sample_rate_hz: f64,
    pub seed: u64,
    pub val_fraction: f64,
    pub generator: GeneratorConfig,
    pub preprocess: PreprocessConfig,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        Self {
            count: 2000,
            length: 1024,
            sample_rate_hz: 64.0,
            seed: 0,
            val_fraction: 0.2,
            generator: GeneratorConfig::default(),
            preprocess: PreprocessConfig::default(),
        }
    }
}

/// Train = leading indices, val = the trailing `round(count * val_fraction)`.
pub fn split_indices(count: usize, val_fraction: f64) -> Split {
    let n_val = ((count as f64) * val_fraction).round() as usize;
    let n_val = n_val.min(count);
    Split {
        train: (0..count - n_val).collect(),
        val: (count - n_val..count).collect(),
    }
}

/// Generates, preprocesses and gaps `cfg.count` records, in index order.
pub fn synthesize_samples(cfg: &DatasetConfig) -> Result<Vec<Sample>> {
    if !cfg.length.is_multiple_of(2) || cfg.length < 16 {
        return Err(Error::InvalidInput(format!(
            "record length must be even and at least 16, got {}",
            cfg.length
        )));
    }
    let mut master = ChaCha8Rng::seed_from_u64(cfg.seed);
    (0..cfg.count)
        .map(|_| {
            let rec_seed: u64 = master.random();
            let raw = generate_waveform(rec_seed, cfg.length / 2, cfg.sample_rate_hz / 2.0, &cfg.generator)?;
            let target = preprocess(&raw.waveform, &cfg.preprocess)?;
            let mut gap_rng = ChaCha8Rng::seed_from_u64(rec_seed);
            gap_rng.set_stream(1);
            cut_gap(&target, &mut gap_rng)
        })
        .collect()
}

/// Writes one waveform file per record plus `manifest.json` into `dir`.
pub fn write_dataset(dir: &Path, cfg: &DatasetConfig) -> Result<DatasetManifest> {
    let samples = synthesize_samples(cfg)?;
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut files = Vec::with_capacity(samples.len());
    for (i, s) in samples.iter().enumerate() {
        let name = format!("w{i:05}.txt");
        save_waveform(&dir.join(&name), s.target.samples())?;
        files.push(name);
    }
    let manifest = DatasetManifest {
        sample_rate_hz: cfg.sample_rate_hz,
        length: cfg.length,
        gaps: samples.iter().map(|s| s.gap).collect(),
        files,
        seed: cfg.seed,
        split: split_indices(cfg.count, cfg.val_fraction),
    };
    save_manifest(&dir.join(MANIFEST_FILE), &manifest)?;
    Ok(manifest)
}
