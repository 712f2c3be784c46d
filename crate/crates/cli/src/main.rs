//! `stance`: batch pipeline over stance-labelled tweet streams.
//!
//! Every subcommand reads its inputs, writes CSV/JSON reports atomically into
//! `--out`, and records parameters and output checksums in a manifest.
//! Exit codes: 0 success, 1 data error, 2 usage error.

mod commands;
mod output;

use std::fmt;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

/// Bad or missing flags detected after argument parsing.
#[derive(Debug)]
pub struct UsageError(pub String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

#[derive(Debug, Parser)]
#[command(name = "stance", version, about = "Noise-aware stance analytics for tweet streams")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    Exact,
    AsWritten,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum AlphaSourceArg {
    Global,
    MedianDay,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum DenominatorArg {
    Dataset,
    Dual,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum AttributionArg {
    Root,
    Parent,
}

/// Flags shared by all subcommands.
#[derive(Debug, Clone, Args)]
pub struct Common {
    /// Line-delimited JSON records; `-` reads standard input.
    #[arg(long, global = true)]
    pub input: Option<String>,
    /// Precision model CSV (`start_day,end_day,alpha_anti,alpha_pro`).
    #[arg(long, global = true, conflicts_with_all = ["alpha_anti", "alpha_pro"])]
    pub precision: Option<PathBuf>,
    /// Global anti precision (with --alpha-pro).
    #[arg(long, global = true, requires = "alpha_pro")]
    pub alpha_anti: Option<f64>,
    /// Global pro precision (with --alpha-anti).
    #[arg(long, global = true, requires = "alpha_anti")]
    pub alpha_pro: Option<f64>,
    /// Tolerance of the leaning rule.
    #[arg(long, global = true, default_value_t = stance_core::classify::DEFAULT_EPSILON)]
    pub epsilon: f64,
    /// Leaning probability formulas.
    #[arg(long, global = true, value_enum, default_value = "as-written")]
    pub mode: ModeArg,
    /// How each user's precision pair is chosen.
    #[arg(long, global = true, value_enum, default_value = "global")]
    pub alpha_source: AlphaSourceArg,
    /// Output directory.
    #[arg(long, global = true, default_value = ".")]
    pub out: PathBuf,
    /// Random seed for sampling commands (default 0; `simulate` keeps its
    /// config's seed unless given).
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads (outputs do not depend on it).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Abort on the first malformed input line.
    #[arg(long, global = true)]
    pub strict: bool,
    /// Day 0 of the study window (YYYY-MM-DD); defaults to the first record's date.
    #[arg(long, global = true)]
    pub start_date: Option<String>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Parse and validate records; report counts and skipped lines.
    IngestCheck,
    /// Dual-stance probabilities and the effective cohort size.
    Cohort,
    /// Classify dual-stance users as pro-leaning, anti-leaning or balanced.
    Classify {
        /// Leave out users whose dual probability is below this value.
        #[arg(long, default_value_t = 0.0)]
        min_dual_probability: f64,
    },
    /// Class counts across a grid of tolerances.
    SweepEps {
        #[arg(long, default_value_t = 0.0)]
        from: f64,
        #[arg(long, default_value_t = 0.5)]
        to: f64,
        #[arg(long, default_value_t = 0.01)]
        step: f64,
    },
    /// Class transitions between two snapshots (`--input` before, `--after` later).
    Migrate {
        #[arg(long)]
        after: PathBuf,
        #[arg(long, default_value_t = 0.0)]
        min_dual_probability: f64,
    },
    /// Daily stance-change series and change events.
    Dynamics {
        /// First day of the post period (day index or YYYY-MM-DD).
        #[arg(long)]
        split_day: Option<String>,
        /// CSV of `date,label` markers to map onto day indices.
        #[arg(long)]
        events: Option<PathBuf>,
    },
    /// ADF and KPSS tests on the change series and their first differences.
    Stationarity {
        /// ADF lag order (default: Schwert rule).
        #[arg(long)]
        lag: Option<usize>,
    },
    /// Lagged mutual information between changes into and out of pro.
    Mi {
        #[arg(long, default_value_t = 30)]
        max_lag: usize,
        #[arg(long, default_value_t = stance_core::dynamics::DEFAULT_MI_BINS)]
        bins: usize,
        /// Use first differences instead of the raw series.
        #[arg(long)]
        difference: bool,
    },
    /// Convergent cross mapping between the differenced change series.
    Ccm {
        #[arg(long, default_value_t = stance_core::ccm::DEFAULT_E)]
        e: usize,
        #[arg(long, default_value_t = stance_core::ccm::DEFAULT_TAU)]
        tau: usize,
        /// Comma-separated library sizes (default: ten evenly spaced sizes).
        #[arg(long, value_delimiter = ',')]
        lib_sizes: Option<Vec<usize>>,
        #[arg(long, default_value_t = 50)]
        samples: usize,
        /// First day of the post period (day index or YYYY-MM-DD).
        #[arg(long)]
        split_day: Option<String>,
        /// Exclude neighbours closer in time than this many steps.
        #[arg(long, default_value_t = 0)]
        exclusion_radius: usize,
        /// Use the raw series instead of first differences.
        #[arg(long)]
        levels: bool,
    },
    /// Observed versus expected topic counts and the genuine/falsehood split.
    Topics {
        /// Lexicon CSV (default: the bundled demonstration lexicon).
        #[arg(long)]
        lexicon: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "dataset")]
        denominator: DenominatorArg,
        /// Dual-stance users below this dual probability join the other group.
        #[arg(long, default_value_t = 0.0)]
        min_dual_probability: f64,
    },
    /// Thread attribution, originator concentration and signed reply graphs.
    Threads {
        #[arg(long, value_enum, default_value = "root")]
        attribution: AttributionArg,
        /// Restrict the signed reply graph to one day.
        #[arg(long)]
        graph_day: Option<u32>,
        #[arg(long, default_value_t = stance_core::threads::DEFAULT_REPLY_MIN_SIZE)]
        reply_min_size: u64,
        #[arg(long, default_value_t = stance_core::threads::DEFAULT_LIFESPAN_MIN_SIZE)]
        lifespan_min_size: u64,
    },
    /// Generate a synthetic stream with ground truth.
    Simulate {
        /// Generator config as `key = value` lines.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Override one config key (repeatable).
        #[arg(long = "set", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
        #[arg(long)]
        users: Option<usize>,
        /// Write the records to standard output instead of `--out`.
        #[arg(long)]
        stdout: bool,
    },
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::IngestCheck => "ingest-check",
            Command::Cohort => "cohort",
            Command::Classify { .. } => "classify",
            Command::SweepEps { .. } => "sweep-eps",
            Command::Migrate { .. } => "migrate",
            Command::Dynamics { .. } => "dynamics",
            Command::Stationarity { .. } => "stationarity",
            Command::Mi { .. } => "mi",
            Command::Ccm { .. } => "ccm",
            Command::Topics { .. } => "topics",
            Command::Threads { .. } => "threads",
            Command::Simulate { .. } => "simulate",
        }
    }
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = cli.common.threads {
        if n == 0 {
            return Err(UsageError("--threads must be at least 1".into()).into());
        }
        builder = builder.num_threads(n);
    }
    let pool = builder.build()?;
    pool.install(|| commands::dispatch(&cli.common, &cli.command))
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.downcast_ref::<UsageError>().is_some() {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}
