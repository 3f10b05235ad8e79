//! The `mrfe` command line.

use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

pub mod commands;
pub mod config;

pub use config::{Precision, RunConfig};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Core(#[from] mrfe_core::Error),
    #[error("{0}")]
    Io(#[from] std::io::Error),
    #[error("{0}")]
    Csv(#[from] csv::Error),
    #[error("{0}")]
    Failed(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) | CliError::Core(mrfe_core::Error::Config(_)) => 2,
            _ => 1,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "mrfe", version, about = "Emotion-aware multi-scale sentiment classifier")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Split, train, evaluate on the test split and save the model.
    Train(Common),
    /// Score a saved model on a CSV or embedding file.
    Evaluate(Common),
    /// Run semantic augmentation and write the augmented corpus.
    Augment(Common),
    /// Render instruction-augmented text.
    Instruct(InstructArgs),
    /// Train and evaluate all seven ablation variants.
    Ablate(Common),
    /// One experiment per value of a configuration axis.
    Sweep(SweepArgs),
    /// Parameters, FLOPs and per-sample latency.
    Bench(Common),
    /// Finite-difference gradient check of the micro model.
    Gradcheck(GradcheckArgs),
    /// Write the built-in synthetic corpus as CSV.
    ExportSynthetic(Common),
}

/// Flags shared by every subcommand. Precedence: defaults, then `--config`,
/// then `--set`, then the dedicated flags.
#[derive(Debug, Default, Args)]
pub struct Common {
    /// Flat key=value configuration file.
    #[arg(long, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Override any configuration key.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub set: Vec<String>,
    #[arg(long)]
    pub epochs: Option<String>,
    /// Kernel sizes, e.g. 1,3,5,7.
    #[arg(long)]
    pub kernels: Option<String>,
    #[arg(long)]
    pub variant: Option<String>,
    #[arg(long)]
    pub fusion: Option<String>,
    #[arg(long = "max-len")]
    pub max_len: Option<String>,
    #[arg(long)]
    pub seed: Option<String>,
    #[arg(long)]
    pub lr: Option<String>,
    #[arg(long = "batch-size")]
    pub batch_size: Option<String>,
    /// Output directory.
    #[arg(long, value_name = "DIR")]
    pub out: Option<String>,
    /// Contextual embedding file (CEMB).
    #[arg(long, value_name = "FILE")]
    pub embeddings: Option<String>,
    /// Labeled CSV with a header row.
    #[arg(long, value_name = "FILE")]
    pub data: Option<String>,
    /// `auto`, a preset or comma-separated label names.
    #[arg(long)]
    pub labels: Option<String>,
    /// Paraphrase-exchange CSV for augmentation.
    #[arg(long, value_name = "FILE")]
    pub paraphrases: Option<String>,
    /// Emotion lexicon file.
    #[arg(long, value_name = "FILE")]
    pub lexicon: Option<String>,
    /// Saved model directory.
    #[arg(long, value_name = "DIR")]
    pub model: Option<String>,
    /// f32 or f64.
    #[arg(long)]
    pub precision: Option<String>,
}

impl Common {
    pub fn resolve(&self, defaults: RunConfig) -> Result<RunConfig, CliError> {
        let mut cfg = defaults;
        if let Some(path) = &self.config {
            cfg.apply_file(path)?;
        }
        for kv in &self.set {
            let (k, v) = kv
                .split_once('=')
                .ok_or_else(|| CliError::Usage(format!("--set expects KEY=VALUE, got `{kv}`")))?;
            cfg.set(k.trim(), v)?;
        }
        let flags = [
            ("epochs", &self.epochs),
            ("kernels", &self.kernels),
            ("variant", &self.variant),
            ("fusion", &self.fusion),
            ("max_len", &self.max_len),
            ("seed", &self.seed),
            ("lr", &self.lr),
            ("batch_size", &self.batch_size),
            ("out", &self.out),
            ("embeddings", &self.embeddings),
            ("data", &self.data),
            ("labels", &self.labels),
            ("paraphrases", &self.paraphrases),
            ("lexicon", &self.lexicon),
            ("model", &self.model),
            ("precision", &self.precision),
        ];
        for (k, v) in flags {
            if let Some(v) = v {
                cfg.set(k, v)?;
            }
        }
        if cfg.embeddings.is_some() {
            cfg.model.contextual = true;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Debug, Args)]
pub struct InstructArgs {
    /// Review text; with `--data`, every row is rendered instead.
    #[arg(long)]
    pub text: Option<String>,
    /// Domain tag or free-text directive.
    #[arg(long)]
    pub context: Option<String>,
    /// Label response, e.g. "The review is positive".
    #[arg(long)]
    pub response: Option<String>,
    /// Sentiment identifier highlighted in the rationale.
    #[arg(long)]
    pub identifier: Option<String>,
    /// Template file; its first template is used.
    #[arg(long, value_name = "FILE")]
    pub template: Option<PathBuf>,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    /// kernels, max_len or fusion.
    #[arg(long)]
    pub axis: String,
    /// Values separated by `;` (defaults to the axis grid).
    #[arg(long)]
    pub values: Option<String>,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Args)]
pub struct GradcheckArgs {
    /// Central-difference step.
    #[arg(long, default_value_t = 1e-6)]
    pub eps: f64,
    /// Pass threshold on the maximum relative error.
    #[arg(long, default_value_t = 1e-3)]
    pub tol: f64,
    #[command(flatten)]
    pub common: Common,
}

/// Caps the worker pool when `MRFE_NUM_THREADS` is set.
pub fn configure_threads() -> Result<(), CliError> {
    let Ok(v) = std::env::var("MRFE_NUM_THREADS") else {
        return Ok(());
    };
    let n: usize = v
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| CliError::Usage(format!("MRFE_NUM_THREADS must be a positive integer, got `{v}`")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::Failed(e.to_string()))
}

/// Parses `argv` (program name first) and runs the subcommand. Returns the
/// process exit code.
pub fn run<I, S>(argv: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = e.exit_code();
            let text = e.render().to_string();
            let _ = if code == 0 { out.write_all(text.as_bytes()) } else { err.write_all(text.as_bytes()) };
            return code;
        }
    };
    match commands::dispatch(&cli.command, out) {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            e.exit_code()
        }
    }
}
