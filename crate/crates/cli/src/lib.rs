//! Command-line driver.
//!
//! Exit codes: 0 on success, 1 on validation or data errors, 2 on usage
//! errors. Primary outputs go to `--out` or stdout; diagnostics go to
//! stderr.

mod commands;
pub mod config;

use std::ffi::OsString;
use std::fmt;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

use narrate_core::embed::ScoreScale;
use narrate_core::matching::FilterPolicy;

use config::{ConfigFile, Overrides, RunConfig};

/// Error that maps to exit code 2.
#[derive(Debug)]
pub struct UsageError(pub String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

pub const EXIT_OK: i32 = 0;
pub const EXIT_DATA: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

#[derive(Debug, Parser)]
#[command(
    name = "narrate",
    version,
    about = "Curation and evaluation tools for narrative video datasets"
)]
pub struct Cli {
    /// Flat TOML config; flags override its values.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Seed for every random stream.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads (0 = one per core). Never changes output bytes.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Output path; stdout when omitted.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Check a manifest against its invariants and list every violation.
    Validate {
        #[arg(long)]
        manifest: PathBuf,
    },
    /// Match captioned clips to action spans.
    ///
    /// Rule A: |clip start - action start| < --max-start-diff, the clip ends
    /// after the action, and IoU > --iou-low. Rule B: IoU > --iou-high.
    /// Some descriptions of the rule use 0.25 for --iou-low; the default here
    /// is 0.2.
    Match {
        #[arg(long)]
        manifest: PathBuf,
        #[command(flatten)]
        thresholds: ThresholdArgs,
    },
    /// Drop unmatched clips and resolve each clip's actions.
    Filter {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        matches: PathBuf,
        #[arg(long, value_enum, default_value_t = PolicyArg::BestPerClip)]
        policy: PolicyArg,
        /// Where to write clip → action assignments.
        #[arg(long)]
        assignments: Option<PathBuf>,
    },
    /// Split a manifest into train and val by video id.
    Split {
        #[arg(long)]
        manifest: PathBuf,
        /// File with one validation video id per line.
        #[arg(long)]
        val_ids: PathBuf,
        #[arg(long)]
        train_out: PathBuf,
        #[arg(long)]
        val_out: PathBuf,
    },
    /// Profile a manifest: length histograms and summaries.
    Stats {
        #[arg(long)]
        manifest: PathBuf,
        /// Line-delimited {video_id, clip_id, tokens} caption token counts.
        #[arg(long)]
        caption_tokens: Option<PathBuf>,
        /// Line-delimited {video_id, action_index, tokens} action token counts.
        #[arg(long)]
        action_tokens: Option<PathBuf>,
    },
    /// Aggregate tier judgments and/or 0–6 ratings.
    Score {
        #[arg(long)]
        judgments: PathBuf,
    },
    /// Embedding metrics.
    Metrics {
        #[command(subcommand)]
        metric: Metric,
    },
    /// Apply noise, masking, and shuffling to a batch of embeddings.
    Perturb {
        #[arg(long)]
        embeddings: PathBuf,
        /// Population for the per-dimension std basis (defaults to the input).
        #[arg(long)]
        reference: Option<PathBuf>,
        #[arg(long)]
        noise_scale: Option<f64>,
        #[arg(long)]
        mask_rate: Option<f64>,
        /// Coordinate shuffle on/off.
        #[arg(long)]
        shuffle: Option<bool>,
        /// Also permute the order of embeddings in the batch.
        #[arg(long)]
        shuffle_sequence: bool,
        #[arg(long, value_enum, default_value_t = EmbFormat::Binary)]
        format: EmbFormat,
    },
    /// Export rolling conditioning windows for narrative sequences.
    Windows {
        /// Line-delimited step records.
        #[arg(long)]
        sequences: PathBuf,
        #[arg(long)]
        k: Option<usize>,
        /// Truncation length for the training-record export.
        #[arg(long)]
        context_window: Option<usize>,
        /// Also write interleaved training records here.
        #[arg(long)]
        training_out: Option<PathBuf>,
    },
}

#[derive(Debug, Args, Default)]
pub struct ThresholdArgs {
    #[arg(long)]
    pub iou_low: Option<f64>,
    #[arg(long)]
    pub iou_high: Option<f64>,
    #[arg(long)]
    pub max_start_diff: Option<f64>,
}

#[derive(Debug, Subcommand)]
pub enum Metric {
    /// Fréchet distance between Gaussians fitted to two embedding sets.
    Frechet {
        #[arg(long)]
        a: PathBuf,
        #[arg(long)]
        b: PathBuf,
        #[arg(long)]
        jitter: Option<f64>,
    },
    /// Mean cosine between index-paired text and image embeddings.
    Clipt {
        #[arg(long)]
        text: PathBuf,
        #[arg(long)]
        image: PathBuf,
        #[arg(long, value_enum)]
        scale: Option<ScaleArg>,
    },
    /// Cosine + MSE regression loss, averaged over index-paired rows.
    Regloss {
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        target: PathBuf,
        #[arg(long)]
        alpha: Option<f64>,
        #[arg(long)]
        beta: Option<f64>,
    },
    /// Mean squared L2 distance between predicted and target drifts.
    Flowloss {
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        target: PathBuf,
    },
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum PolicyArg {
    KeepAll,
    BestPerClip,
}

impl From<PolicyArg> for FilterPolicy {
    fn from(p: PolicyArg) -> Self {
        match p {
            PolicyArg::KeepAll => FilterPolicy::KeepAll,
            PolicyArg::BestPerClip => FilterPolicy::BestPerClip,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum ScaleArg {
    Raw,
    Percent,
}

impl From<ScaleArg> for ScoreScale {
    fn from(s: ScaleArg) -> Self {
        match s {
            ScaleArg::Raw => ScoreScale::Raw,
            ScaleArg::Percent => ScoreScale::Percent,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum EmbFormat {
    Binary,
    Text,
}

impl Cli {
    fn overrides(&self) -> Overrides {
        let mut o = Overrides {
            seed: self.seed,
            threads: self.threads,
            ..Default::default()
        };
        match &self.command {
            Command::Match { thresholds, .. } => {
                o.iou_low = thresholds.iou_low;
                o.iou_high = thresholds.iou_high;
                o.max_start_diff = thresholds.max_start_diff;
            }
            Command::Perturb {
                noise_scale,
                mask_rate,
                shuffle,
                ..
            } => {
                o.noise_scale = *noise_scale;
                o.mask_rate = *mask_rate;
                o.shuffle = *shuffle;
            }
            Command::Windows { k, .. } => o.k = *k,
            Command::Metrics { metric } => match metric {
                Metric::Frechet { jitter, .. } => o.jitter = *jitter,
                Metric::Clipt { scale, .. } => o.scale = scale.map(Into::into),
                Metric::Regloss { alpha, beta, .. } => {
                    o.alpha = *alpha;
                    o.beta = *beta;
                }
                Metric::Flowloss { .. } => {}
            },
            _ => {}
        }
        o
    }

    pub fn resolve_config(&self) -> anyhow::Result<RunConfig> {
        let mut cfg = RunConfig::default();
        if let Some(path) = &self.config {
            cfg.apply_file(ConfigFile::load(path)?);
        }
        cfg.apply(&self.overrides());
        cfg.check()?;
        Ok(cfg)
    }
}

/// Parses `argv` (including the program name) and runs the subcommand.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn"))
        .target(env_logger::Target::Stderr)
        .try_init();

    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match commands::execute(&cli) {
        Ok(code) => code,
        Err(e) if e.downcast_ref::<UsageError>().is_some() => {
            eprintln!("error: {e}");
            eprintln!("\nFor more information, try '--help'.");
            EXIT_USAGE
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            EXIT_DATA
        }
    }
}
