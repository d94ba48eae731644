//! Command-line front end: configuration, mode dispatch and exit codes.

mod commands;
pub mod config;
pub mod output;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::Parser;
use thiserror::Error;

pub use commands::{log_line, run_boundary_audit, run_coupled, run_les_standalone, run_sor_bench};
pub use config::{parse_config, ConfigError, Mode, RunConfig};

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_PROTOCOL: i32 = 3;
pub const EXIT_NUMERICAL: i32 = 4;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(#[from] ConfigError),
    #[error("protocol error: {0}")]
    Protocol(String),
    #[error("numerical error: {0}")]
    Numerical(String),
    #[error("{0}")]
    Failure(String),
    #[error("i/o error: {0}")]
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => EXIT_CONFIG,
            CliError::Protocol(_) => EXIT_PROTOCOL,
            CliError::Numerical(_) => EXIT_NUMERICAL,
            CliError::Failure(_) | CliError::Io(_) => EXIT_FAILURE,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "gmcf-mini", version, about = "Coupled driver/LES runs, SOR benchmarks and boundary audits")]
pub struct Args {
    #[arg(value_enum)]
    pub mode: Mode,
    /// INI-style configuration file.
    #[arg(long)]
    pub config: PathBuf,
    /// Output directory (overrides output.dir).
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Pressure solver workers; for sor-bench, the largest worker count timed.
    #[arg(long)]
    pub workers: Option<usize>,
    /// Coupled intervals, LES steps or SOR iterations, depending on the mode.
    #[arg(long)]
    pub steps: Option<u64>,
}

impl Args {
    /// Applies the command-line overrides and re-checks the result.
    pub fn apply(&self, cfg: &mut RunConfig) -> Result<(), ConfigError> {
        if let Some(out) = &self.out {
            cfg.out_dir = out.clone();
        }
        if let Some(seed) = self.seed {
            cfg.seed = seed;
        }
        if let Some(w) = self.workers.filter(|_| self.mode != Mode::BoundaryAudit) {
            if w == 0 {
                return Err(ConfigError::key("--workers", "must be at least 1"));
            }
            cfg.sor.workers = w;
            if self.mode == Mode::SorBench {
                let mut counts: Vec<usize> = std::iter::successors(Some(1usize), |n| n.checked_mul(2))
                    .take_while(|&n| n <= w)
                    .collect();
                if counts.last() != Some(&w) {
                    counts.push(w);
                }
                cfg.sor.bench_workers = counts;
                // The benchmark always runs red-black on one worker.
                cfg.sor.scheme = crate::sor::Scheme::Twinned;
            }
        }
        if let Some(n) = self.steps {
            match self.mode {
                Mode::Coupled => cfg.intervals = n,
                Mode::LesStandalone => cfg.les_steps = n,
                Mode::SorBench => {
                    cfg.sor.n_iter = usize::try_from(n).map_err(|_| ConfigError::key("--steps", "too large"))?
                }
                Mode::BoundaryAudit => {}
            }
        }
        cfg.validate()?;
        cfg.validate_for(self.mode)
    }
}

/// Loads the configuration, runs the selected mode and returns its report
/// lines.
pub fn execute(args: &Args) -> Result<Vec<String>, CliError> {
    let text = std::fs::read_to_string(&args.config)
        .map_err(|e| CliError::Config(ConfigError::key("--config", format!("{}: {e}", args.config.display()))))?;
    let mut cfg = parse_config(&text)?;
    args.apply(&mut cfg)?;
    std::fs::create_dir_all(&cfg.out_dir).map_err(|e| CliError::Io(format!("{}: {e}", cfg.out_dir.display())))?;
    let out = cfg.out_dir.clone();
    match args.mode {
        Mode::Coupled => run_coupled(&cfg, &out),
        Mode::LesStandalone => run_les_standalone(&cfg, &out),
        Mode::SorBench => run_sor_bench(&cfg, &out),
        Mode::BoundaryAudit => run_boundary_audit(&cfg, &out),
    }
}

/// Full command-line behaviour; returns the process exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let args = match Args::try_parse_from(argv) {
        Ok(a) => a,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
        }
    };
    match execute(&args) {
        Ok(lines) => {
            for l in lines {
                println!("{l}");
            }
            EXIT_OK
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
