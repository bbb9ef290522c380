//! `xinet`: generate synthetic data, train, evaluate, reconstruct and plot.

mod error;
mod plot;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use xinet_core::data::{load_waveform, save_waveform, write_dataset, DatasetConfig, GapSpec, LoadedDataset, Sample, MANIFEST_FILE};
use xinet_core::dsp::Waveform;
use xinet_core::metrics::{evaluate, format_table, EvalOptions, PointMetric};
use xinet_core::model::{Checkpoint, Variant, XiNet, XiNetConfig};
use xinet_core::reconstruct::{reconstruct, Reconstructor, ReconstructorRegistry};
use xinet_core::train::{write_history_csv, TrainConfig, Trainer};

use error::{CliError, CliResult};
use plot::{stacked_svg, traces_csv, Panel};

#[derive(Parser, Debug)]
#[command(name = "xinet", version, about = "Seismic gap reconstruction with a time/frequency window transformer")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write a synthetic dataset (one text file per record plus manifest.json).
    Gen(GenArgs),
    /// Train a model on a dataset.
    Train(TrainArgs),
    /// Score a checkpoint or a baseline on the gaps of a dataset.
    Eval(EvalArgs),
    /// Fill the gap of one waveform file.
    Reconstruct(ReconstructArgs),
    /// Draw original, gapped and reconstructed traces as SVG plus CSV.
    Plot(PlotArgs),
}

#[derive(Args, Debug)]
struct GenArgs {
    #[arg(long, default_value_t = 2000)]
    count: usize,
    /// Samples per record after preprocessing.
    #[arg(long, default_value_t = 1024)]
    length: usize,
    /// Rate after preprocessing, in Hz.
    #[arg(long, default_value_t = 64.0)]
    sample_rate: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 0.2)]
    val_fraction: f64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct TrainArgs {
    /// Dataset directory or manifest file.
    #[arg(long)]
    data: PathBuf,
    /// JSON with optional `model` and `train` sections.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out_ckpt: PathBuf,
    /// Loss history CSV; defaults to the checkpoint path with `.csv`.
    #[arg(long)]
    history: Option<PathBuf>,
    #[arg(long, value_enum)]
    variant: Option<VariantArg>,
    #[arg(long)]
    epochs: Option<usize>,
    /// Seeds both initialization and shuffling.
    #[arg(long)]
    seed: Option<u64>,
    /// Print nothing per epoch.
    #[arg(long)]
    quiet: bool,
}

#[derive(Args, Debug)]
struct EvalArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long, conflicts_with = "baseline", required_unless_present = "baseline")]
    ckpt: Option<PathBuf>,
    #[arg(long, value_enum)]
    baseline: Option<BaselineArg>,
    /// Require the checkpoint to be this variant.
    #[arg(long, value_enum, requires = "ckpt")]
    variant: Option<VariantArg>,
    /// Context samples on each side of the gap included in the metrics.
    #[arg(long, default_value_t = 0)]
    margin: usize,
    #[arg(long, value_enum, default_value_t = SplitArg::Val)]
    split: SplitArg,
    /// Use (time, amplitude) points for the Fréchet distance.
    #[arg(long)]
    dfd_time_axis: bool,
    /// Where to write the JSON report.
    #[arg(long)]
    report: Option<PathBuf>,
    /// Where to write the text table (it is always printed).
    #[arg(long)]
    table: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct ReconstructArgs {
    #[arg(long)]
    ckpt: PathBuf,
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Gap as START:LEN; by default the longest run of exact zeros.
    #[arg(long, value_parser = parse_gap)]
    gap: Option<GapSpec>,
    #[arg(long, default_value_t = 64.0)]
    sample_rate: f64,
}

#[derive(Args, Debug)]
struct PlotArgs {
    #[arg(long)]
    target: PathBuf,
    #[arg(long)]
    gapped: PathBuf,
    #[arg(long)]
    recon: PathBuf,
    /// SVG output; the CSV goes next to it unless `--csv` is given.
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    csv: Option<PathBuf>,
    #[arg(long, default_value_t = 64.0)]
    sample_rate: f64,
    #[arg(long, default_value = "Gap reconstruction")]
    title: String,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum VariantArg {
    Full,
    TimeOnly,
    SingleEncoder,
}

impl From<VariantArg> for Variant {
    fn from(v: VariantArg) -> Self {
        match v {
            VariantArg::Full => Variant::Full,
            VariantArg::TimeOnly => Variant::TimeOnly,
            VariantArg::SingleEncoder => Variant::SingleEncoder,
        }
    }
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum BaselineArg {
    ZeroFill,
    LinearInterp,
}

impl BaselineArg {
    fn name(self) -> &'static str {
        match self {
            BaselineArg::ZeroFill => "zero_fill",
            BaselineArg::LinearInterp => "linear_interp",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum SplitArg {
    Train,
    Val,
    All,
}

/// Contents of `train --config`.
#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct RunConfig {
    model: Option<XiNetConfig>,
    train: TrainConfig,
}

fn parse_gap(s: &str) -> Result<GapSpec, String> {
    let (a, b) = s.split_once(':').ok_or("expected START:LEN")?;
    let start = a.trim().parse().map_err(|_| format!("bad gap start `{a}`"))?;
    let len: usize = b.trim().parse().map_err(|_| format!("bad gap length `{b}`"))?;
    if len == 0 {
        return Err("gap length must be positive".into());
    }
    Ok(GapSpec { start, len })
}

fn manifest_path(p: &Path) -> PathBuf {
    if p.is_dir() {
        p.join(MANIFEST_FILE)
    } else {
        p.to_path_buf()
    }
}

fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> CliResult<()> {
    fs::write(path, contents).map_err(|e| CliError::data(format!("{}: {e}", path.display())))
}

fn cmd_gen(a: GenArgs) -> CliResult<()> {
    let cfg = DatasetConfig {
        count: a.count,
        length: a.length,
        sample_rate_hz: a.sample_rate,
        seed: a.seed,
        val_fraction: a.val_fraction,
        ..Default::default()
    };
    if a.count == 0 {
        return Err(CliError::usage("--count must be at least 1"));
    }
    if !(0.0..=1.0).contains(&a.val_fraction) {
        return Err(CliError::usage("--val-fraction must be within [0, 1]"));
    }
    let model = XiNetConfig::default();
    let unit = model.length_unit();
    if !a.length.is_multiple_of(unit) {
        eprintln!(
            "warning: length {} is not a multiple of {unit} (patch {} x window {} x 2^{} stages) required by the default model config",
            a.length,
            model.patch,
            model.window,
            model.stages()
        );
    }
    fs::create_dir_all(&a.out).map_err(|e| CliError::data(format!("{}: {e}", a.out.display())))?;
    let m = write_dataset(&a.out, &cfg)?;
    println!(
        "wrote {} records ({} train / {} val) to {}",
        m.files.len(),
        m.split.train.len(),
        m.split.val.len(),
        a.out.display()
    );
    Ok(())
}

fn cmd_train(a: TrainArgs) -> CliResult<()> {
    let mut run = match &a.config {
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|e| CliError::data(format!("{}: {e}", p.display())))?;
            serde_json::from_str::<RunConfig>(&text)
                .map_err(|e| CliError::usage(format!("{}: {e}", p.display())))?
        }
        None => RunConfig::default(),
    };
    let data = LoadedDataset::load(&manifest_path(&a.data))?;
    let mut model_cfg = run.model.take().unwrap_or_else(|| XiNetConfig {
        input_length: data.manifest.length,
        ..XiNetConfig::default()
    });
    if let Some(v) = a.variant {
        model_cfg.variant = v.into();
    }
    if let Some(s) = a.seed {
        model_cfg.seed = s;
        run.train.seed = s;
    }
    if let Some(e) = a.epochs {
        run.train.epochs = e;
    }
    if model_cfg.input_length != data.manifest.length {
        return Err(CliError::data(format!(
            "model input_length {} does not match dataset length {}",
            model_cfg.input_length, data.manifest.length
        )));
    }
    let model = XiNet::<f32>::new(model_cfg)?;
    let mut trainer = Trainer::new(model, run.train)?;
    let quiet = a.quiet;
    trainer.run(&data.train, &data.val, |r| {
        if !quiet {
            let val = r.val_gap_mae.map_or("-".to_string(), |v| format!("{v:.6}"));
            eprintln!("epoch {:>3}  lr {:.3e}  loss {:.6e}  val_gap_mae {val}", r.epoch, r.lr, r.train_loss);
        }
    })?;
    trainer.checkpoint().save(&a.out_ckpt)?;
    let history = a.history.unwrap_or_else(|| a.out_ckpt.with_extension("csv"));
    write_history_csv(&history, &trainer.history)?;
    println!("saved {} and {}", a.out_ckpt.display(), history.display());
    Ok(())
}

fn cmd_eval(a: EvalArgs) -> CliResult<()> {
    let data = LoadedDataset::load(&manifest_path(&a.data))?;
    let samples: Vec<Sample> = match a.split {
        SplitArg::Train => data.train,
        SplitArg::Val => data.val,
        SplitArg::All => data.train.into_iter().chain(data.val).collect(),
    };
    if samples.is_empty() {
        return Err(CliError::data("selected split has no samples"));
    }
    let registry = ReconstructorRegistry::default();
    let chosen: Box<dyn Reconstructor> = match (&a.ckpt, a.baseline) {
        (Some(p), _) => {
            let ck = Checkpoint::load(p)?;
            if let Some(v) = a.variant {
                ck.expect_variant(v.into())?;
            }
            if ck.config().input_length != data.manifest.length {
                return Err(CliError::data(format!(
                    "checkpoint expects {} samples, dataset has {}",
                    ck.config().input_length,
                    data.manifest.length
                )));
            }
            registry.from_checkpoint(&ck)?
        }
        (None, Some(b)) => registry.build(b.name(), None)?,
        (None, None) => return Err(CliError::usage("one of --ckpt or --baseline is required")),
    };
    let opts = EvalOptions {
        margin: a.margin,
        point_metric: if a.dfd_time_axis {
            PointMetric::TimeAmplitude {
                dt: 1.0 / data.manifest.sample_rate_hz,
            }
        } else {
            PointMetric::Amplitude
        },
    };
    let report = evaluate(&samples, chosen.as_ref(), opts)?;
    let table = if chosen.name() == "zero_fill" {
        format_table(&[&report])
    } else {
        let reference = evaluate(&samples, registry.build("zero_fill", None)?.as_ref(), opts)?;
        format_table(&[&reference, &report])
    };
    print!("{table}");
    if let Some(p) = &a.report {
        write_file(p, report.to_json()?)?;
    }
    if let Some(p) = &a.table {
        write_file(p, &table)?;
    }
    Ok(())
}

/// Longest run of exact zeros, first one on ties.
fn detect_gap(x: &[f64]) -> Option<GapSpec> {
    let mut best: Option<GapSpec> = None;
    let mut i = 0;
    while i < x.len() {
        if x[i] == 0.0 {
            let start = i;
            while i < x.len() && x[i] == 0.0 {
                i += 1;
            }
            if best.is_none_or(|b| i - start > b.len) {
                best = Some(GapSpec { start, len: i - start });
            }
        } else {
            i += 1;
        }
    }
    best
}

fn cmd_reconstruct(a: ReconstructArgs) -> CliResult<()> {
    let ck = Checkpoint::load(&a.ckpt)?;
    let x = load_waveform(&a.input)?;
    if x.len() != ck.config().input_length {
        return Err(CliError::data(format!(
            "{} has {} samples, checkpoint expects {}",
            a.input.display(),
            x.len(),
            ck.config().input_length
        )));
    }
    let gap = match a.gap {
        Some(g) => g,
        None => detect_gap(&x).ok_or_else(|| CliError::data(format!("{}: no zero-filled gap found", a.input.display())))?,
    };
    let sample = Sample::new(Waveform::new(x, a.sample_rate)?, gap)?;
    let registry = ReconstructorRegistry::default();
    let r = registry.from_checkpoint(&ck)?;
    let out = reconstruct(r.as_ref(), &sample)?;
    save_waveform(&a.out, &out)?;
    println!("filled samples {}..{} into {}", gap.start, gap.end(), a.out.display());
    Ok(())
}

fn cmd_plot(a: PlotArgs) -> CliResult<()> {
    if !(a.sample_rate > 0.0) {
        return Err(CliError::usage("--sample-rate must be positive"));
    }
    let target = load_waveform(&a.target)?;
    let gapped = load_waveform(&a.gapped)?;
    let recon = load_waveform(&a.recon)?;
    if gapped.len() != target.len() || recon.len() != target.len() {
        return Err(CliError::data(format!(
            "trace lengths differ: target {}, gapped {}, recon {}",
            target.len(),
            gapped.len(),
            recon.len()
        )));
    }
    let gap = detect_gap(&gapped).map(|g| (g.start, g.len));
    let panels = [
        Panel {
            label: "original",
            samples: &target,
            highlight: None,
        },
        Panel {
            label: "gapped",
            samples: &gapped,
            highlight: gap,
        },
        Panel {
            label: "reconstructed",
            samples: &recon,
            highlight: gap,
        },
    ];
    write_file(&a.out, stacked_svg(&a.title, a.sample_rate, &panels))?;
    let csv = a.csv.unwrap_or_else(|| a.out.with_extension("csv"));
    write_file(&csv, traces_csv(a.sample_rate, &panels))?;
    println!("wrote {} and {}", a.out.display(), csv.display());
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let msg = e.to_string();
            let first = msg.lines().next().unwrap_or("invalid arguments");
            return CliError::usage(first.trim_start_matches("error: ")).report();
        }
    };
    let result = match cli.command {
        Command::Gen(a) => cmd_gen(a),
        Command::Train(a) => cmd_train(a),
        Command::Eval(a) => cmd_eval(a),
        Command::Reconstruct(a) => cmd_reconstruct(a),
        Command::Plot(a) => cmd_plot(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => e.report(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gap_detection_prefers_longest_run() {
        let x = [1.0, 0.0, 2.0, 0.0, 0.0, 0.0, 3.0, 0.0, 0.0];
        assert_eq!(detect_gap(&x), Some(GapSpec { start: 3, len: 3 }));
        assert_eq!(detect_gap(&[1.0, 2.0]), None);
    }

    #[test]
    fn gap_flag_parsing() {
        assert_eq!(parse_gap("10:5").unwrap(), GapSpec { start: 10, len: 5 });
        assert!(parse_gap("10").is_err());
        assert!(parse_gap("3:0").is_err());
    }
}
