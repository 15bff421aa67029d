//! `autoeq` command-line tool.
//!
//! Exit codes: 0 success, 1 usage error, 2 data error, 3 numerical failure.
//! Failures print one line to stderr starting with `error[usage]:`,
//! `error[data]:` or `error[numerical]:`.

mod commands;
mod config;
mod manifest;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use autoeq::ErrorKind;

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Core(autoeq::Error),
    Io(PathBuf, std::io::Error),
}

impl CliError {
    pub fn io(path: &Path, e: std::io::Error) -> Self {
        CliError::Io(path.to_path_buf(), e)
    }

    fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Io(..) => 2,
            CliError::Core(e) => match e.kind() {
                ErrorKind::Data => 2,
                ErrorKind::Numerical => 3,
            },
        }
    }

    fn tag(&self) -> &'static str {
        match self.exit_code() {
            1 => "usage",
            3 => "numerical",
            _ => "data",
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "{m}"),
            CliError::Core(e) => write!(f, "{e}"),
            CliError::Io(p, e) => write!(f, "{}: {e}", p.display()),
        }
    }
}

impl From<autoeq::Error> for CliError {
    fn from(e: autoeq::Error) -> Self {
        CliError::Core(e)
    }
}

#[derive(Debug, Parser)]
#[command(name = "autoeq", version, about = "Instrument-aware automatic parametric EQ")]
pub struct Cli {
    /// Worker threads for parallel stages (default: available cores).
    /// Results do not depend on this value.
    #[arg(long, global = true)]
    pub threads: Option<usize>,

    /// Flat `key = value` file supplying defaults for any long flag.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Target-bank operations.
    #[command(subcommand)]
    Targets(TargetsCommand),
    /// Generate a synthetic or real-world training dataset.
    GenData(GenDataArgs),
    /// Train a matching model (base stage or fine-tuning).
    Train(TrainArgs),
    /// Mean absolute error of a model on a dataset's curves.
    Eval(EvalArgs),
    /// Predict EQ settings for one difference curve.
    Match(MatchArgs),
    /// Equalize a WAV file end to end.
    Autoeq(AutoeqArgs),
    /// Write the synthetic demonstration corpus (WAV files + manifest).
    DemoCorpus(DemoCorpusArgs),
    /// Export CSV data for plotting responses, targets and matches.
    PlotData(PlotDataArgs),
}

#[derive(Debug, Subcommand)]
pub enum TargetsCommand {
    /// Build a bank of per-class target spectra from a corpus manifest.
    Build(TargetsBuildArgs),
}

#[derive(Debug, Args)]
pub struct AnalysisArgs {
    /// STFT window length in samples (hop is half the window).
    #[arg(long)]
    pub window: Option<usize>,
    /// Gaussian smoothing of difference curves, in bins.
    #[arg(long)]
    pub sigma: Option<f64>,
    /// Peak magnitude limit of difference curves, in dB.
    #[arg(long)]
    pub limit_db: Option<f64>,
}

#[derive(Debug, Args)]
pub struct TargetsBuildArgs {
    /// Corpus manifest CSV with header `path,instrument_class`.
    #[arg(long)]
    pub manifest: PathBuf,
    /// Output bank file.
    #[arg(long)]
    pub out: PathBuf,
    /// Also export the bank as `class,freq_hz,value_db` CSV.
    #[arg(long)]
    pub csv: Option<PathBuf>,
    /// STFT window length in samples.
    #[arg(long)]
    pub window: Option<usize>,
}

#[derive(Debug, Args)]
pub struct GenDataArgs {
    /// `synthetic` or `realworld`.
    #[arg(long)]
    pub kind: String,
    /// Output dataset file.
    #[arg(long)]
    pub out: PathBuf,
    /// Also export the records as wide CSV.
    #[arg(long)]
    pub csv: Option<PathBuf>,
    /// Number of synthetic curves.
    #[arg(long)]
    pub n: Option<usize>,
    /// Seed for parameter draws and noise.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Std of the per-bin Gaussian noise added to synthetic curves, in dB.
    #[arg(long)]
    pub noise_db: Option<f64>,
    /// Gaussian smoothing applied after the noise, in bins (0 = off).
    #[arg(long)]
    pub noise_smooth: Option<f64>,
    /// Emit the exact clean responses (no noise, no zero-meaning).
    #[arg(long)]
    pub clean: bool,
    /// Corpus manifest (real-world data).
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    /// Target bank (real-world data).
    #[arg(long)]
    pub bank: Option<PathBuf>,
    /// Neighbouring class targets per sample (real-world data).
    #[arg(long)]
    pub k: Option<usize>,
    #[command(flatten)]
    pub analysis: AnalysisArgs,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// `mlp` or `cnn`. Required for the base stage; checked against the
    /// checkpoint when fine-tuning.
    #[arg(long)]
    pub arch: Option<String>,
    /// `base` (parameter loss) or `finetune` (spectral + penalty loss).
    #[arg(long)]
    pub stage: String,
    /// Training dataset.
    #[arg(long)]
    pub data: PathBuf,
    /// Optional test dataset evaluated after every epoch.
    #[arg(long)]
    pub test: Option<PathBuf>,
    /// Checkpoint to start from (required for fine-tuning).
    #[arg(long)]
    pub in_ckpt: Option<PathBuf>,
    /// Output checkpoint.
    #[arg(long)]
    pub out_ckpt: PathBuf,
    /// Loss history CSV (default: `<out-ckpt>.history.csv`).
    #[arg(long)]
    pub history: Option<PathBuf>,
    /// Initial learning rate.
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Learning-rate factor applied after every epoch.
    #[arg(long)]
    pub lr_decay: Option<f64>,
    /// Penalty weight of the fine-tuning loss.
    #[arg(long)]
    pub lambda: Option<f64>,
    /// Seed for weight initialization and shuffling.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Peak filter prototype for the base stage: `cookbook` or `nyquist-matched`.
    #[arg(long)]
    pub peak_design: Option<String>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Model checkpoint.
    #[arg(long)]
    pub ckpt: PathBuf,
    /// Dataset whose curves are matched.
    #[arg(long)]
    pub data: PathBuf,
    /// JSON report with aggregate and per-example MAE.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct MatchArgs {
    /// Curve CSV with header `freq_hz,value_db` on the 256-bin grid.
    #[arg(long)]
    pub curve: PathBuf,
    /// Model checkpoint.
    #[arg(long)]
    pub ckpt: PathBuf,
    /// Settings document.
    #[arg(long)]
    pub out_settings: PathBuf,
    /// Predicted response, `freq_hz,value_db`.
    #[arg(long)]
    pub out_response: PathBuf,
}

#[derive(Debug, Args)]
pub struct AutoeqArgs {
    /// Input WAV (any sample rate, mono or stereo).
    #[arg(long)]
    pub input: PathBuf,
    /// Target bank built by `targets build`.
    #[arg(long)]
    pub bank: PathBuf,
    /// Model checkpoint.
    #[arg(long)]
    pub ckpt: PathBuf,
    /// Equalized WAV (32-bit float). Required unless `--dry-run`.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Settings document (default: `<out or input>.settings.txt`).
    #[arg(long)]
    pub settings: Option<PathBuf>,
    /// Diagnostics CSV (default: `<out or input>.diagnostics.csv`).
    #[arg(long)]
    pub diagnostics: Option<PathBuf>,
    /// Use this class target instead of classifying the input.
    #[arg(long)]
    pub class_override: Option<String>,
    /// Write settings and diagnostics only.
    #[arg(long)]
    pub dry_run: bool,
    /// Scale the output to a peak of 1.0.
    #[arg(long)]
    pub peak_normalize: bool,
    #[command(flatten)]
    pub analysis: AnalysisArgs,
}

#[derive(Debug, Args)]
pub struct DemoCorpusArgs {
    /// Directory for the WAV files and `manifest.csv`.
    #[arg(long)]
    pub out_dir: PathBuf,
    /// Clips per instrument class.
    #[arg(long)]
    pub per_class: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Clip length in seconds.
    #[arg(long)]
    pub duration: Option<f64>,
}

#[derive(Debug, Args)]
pub struct PlotDataArgs {
    /// Directory for the CSV files.
    #[arg(long)]
    pub out_dir: PathBuf,
    /// Export the bank's target curves.
    #[arg(long)]
    pub bank: Option<PathBuf>,
    /// With `--data`, export curves next to the model's matched responses.
    #[arg(long)]
    pub ckpt: Option<PathBuf>,
    /// Dataset to draw example curves from.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Number of dataset examples to export.
    #[arg(long)]
    pub count: Option<usize>,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = e.exit_code();
            if code == 0 {
                // --help / --version
                let _ = e.print();
                return ExitCode::SUCCESS;
            }
            let text = e.render().to_string();
            let mut lines = text.lines();
            let first = lines.next().unwrap_or("").trim_start_matches("error: ");
            eprintln!("error[usage]: {first}");
            for l in lines {
                eprintln!("{l}");
            }
            return ExitCode::from(1);
        }
    };
    match commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error[{}]: {e}", e.tag());
            ExitCode::from(e.exit_code())
        }
    }
}
