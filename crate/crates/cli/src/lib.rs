//! Command-line runner for emergence experiments.
//!
//! Every command except `systems` writes into a run directory: a manifest
//! (written first with status `running`, finalized at the end) plus data
//! files. Data files are byte-identical across runs with the same config.

use std::ffi::OsString;
use std::io::Write as _;
use std::path::PathBuf;

use clap::{Parser, Subcommand};

mod commands;
pub mod config;
pub mod manifest;
pub mod plot;
mod report;

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_DEGENERATE: i32 = 3;
pub const EXIT_INCONCLUSIVE: i32 = 4;
pub const EXIT_NEGATIVE: i32 = 5;

/// Environment variable overriding the default output directory.
pub const OUT_ENV: &str = "EMERGENCE_OUT";

#[derive(Debug, Clone, PartialEq)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl CliError {
    pub fn usage(msg: impl Into<String>) -> Self {
        CliError {
            code: EXIT_USAGE,
            message: msg.into(),
        }
    }

    pub fn io(msg: impl Into<String>) -> Self {
        CliError {
            code: EXIT_FAILURE,
            message: msg.into(),
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.message)
    }
}

impl std::error::Error for CliError {}

impl From<emergence_core::Error> for CliError {
    fn from(e: emergence_core::Error) -> Self {
        use emergence_core::Error as E;
        let code = match &e {
            E::DegenerateCloud { .. } | E::Saturation { .. } => EXIT_DEGENERATE,
            E::DimensionMismatch(_)
            | E::Usage(_)
            | E::InvalidSpec(_)
            | E::TooLarge { .. }
            | E::OutOfDomain(_)
            | E::BranchRequired => EXIT_USAGE,
            _ => EXIT_FAILURE,
        };
        CliError {
            code,
            message: e.to_string(),
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "emergence", version, about = "Emergence, parablender and sink experiments")]
pub struct Cli {
    /// JSON run configuration (a run manifest is accepted too).
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Output directory [default: $EMERGENCE_OUT, else ./emergence-out].
    #[arg(long, global = true, value_name = "DIR")]
    pub out: Option<PathBuf>,
    /// Overrides the seeds in the config.
    #[arg(long, global = true, value_name = "U64")]
    pub seed: Option<u64>,
    /// Worker threads [default: machine parallelism].
    #[arg(long, global = true, value_name = "N")]
    pub threads: Option<usize>,
    /// Machine-readable output on stdout.
    #[arg(long, global = true)]
    pub json: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// List the built-in systems.
    Systems,
    /// Emergence curve: curve.csv, curve.json, curve.svg.
    Emergence,
    /// Sink census: census.csv, census.json (and basins.csv).
    Sinks,
    /// Covered-domain certificate for the parablender jet dynamics.
    VerifyParablender {
        #[arg(long)]
        d: Option<usize>,
        #[arg(long)]
        k: Option<usize>,
        /// Use vertical contraction 1/3, for which the domain is not covered.
        #[arg(long)]
        subcritical: bool,
    },
    /// Dump a trajectory as CSV with a scatter plot.
    Orbit,
    /// Combine run directories into report.md and report.csv.
    Report {
        #[arg(required = true, value_name = "RUN_DIR")]
        dirs: Vec<PathBuf>,
    },
}

impl Cli {
    fn out_dir(&self) -> PathBuf {
        self.out
            .clone()
            .or_else(|| std::env::var_os(OUT_ENV).map(PathBuf::from))
            .unwrap_or_else(|| PathBuf::from("emergence-out"))
    }
}

/// Parse `args` (program name first) and run; returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    let pool = match rayon::ThreadPoolBuilder::new()
        .num_threads(cli.threads.unwrap_or(0))
        .build()
    {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: cannot start worker pool: {e}");
            return EXIT_FAILURE;
        }
    };
    match pool.install(|| commands::dispatch(&cli)) {
        Ok(out) => {
            let mut stdout = std::io::stdout().lock();
            let _ = stdout.write_all(out.stdout.as_bytes());
            out.code
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.code
        }
    }
}
