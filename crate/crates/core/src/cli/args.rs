use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use super::{cmd_generate, cmd_report, cmd_run, exit_code, RunConfig, EXIT_OK, EXIT_USAGE};
use crate::Result;

#[derive(Debug, Parser)]
#[command(name = "yearshift", version, about = "Temporal dataset-shift evaluation on hourly ICU time series")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate the synthetic dataset described by the config.
    Generate(Common),
    /// Evaluate the configured grid and write metrics.csv and summary.csv.
    Run(Common),
    /// Render SVG figures and tables from metrics.csv.
    Report {
        #[command(flatten)]
        common: Common,
        /// Metrics file to render; defaults to `<out>/metrics.csv`.
        #[arg(long, value_name = "PATH")]
        metrics: Option<PathBuf>,
    },
    /// generate, run and report in sequence.
    RunAll(Common),
}

#[derive(Debug, Args)]
pub struct Common {
    /// TOML run configuration. Built-in defaults apply when omitted.
    #[arg(long, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Output directory, overriding `out_dir`.
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,
    /// Master seed, overriding `seed`.
    #[arg(long, value_name = "N")]
    pub seed: Option<u64>,
    /// Worker threads; defaults to the machine's parallelism.
    #[arg(long, value_name = "N", value_parser = clap::value_parser!(u16).range(1..))]
    pub jobs: Option<u16>,
    /// Only print errors.
    #[arg(long)]
    pub quiet: bool,
}

impl Common {
    fn config(&self) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        if let Some(o) = &self.out {
            cfg.out_dir = o.clone();
        }
        if self.seed.is_some() {
            cfg.seed = self.seed;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn say(quiet: bool, msg: &str) {
    if !quiet {
        println!("{msg}");
    }
}

fn generate(cfg: &RunConfig, quiet: bool) -> Result<()> {
    let summary = cmd_generate(cfg)?;
    say(quiet, &format!("wrote dataset to {}", cfg.dataset_dir().display()));
    say(quiet, summary.to_string().trim_end());
    Ok(())
}

fn run(cfg: &RunConfig, quiet: bool) -> Result<()> {
    let progress = |line: &str| {
        if !quiet {
            eprintln!("{line}");
        }
    };
    let out = cmd_run(cfg, &progress)?;
    let skipped = out.reports.iter().map(|r| r.skipped.len()).sum::<usize>();
    say(quiet, &format!("wrote {} ({} rows, {} skips)", out.metrics_path.display(), out.metrics.len(), skipped));
    say(quiet, &format!("wrote {}", out.summary_path.display()));
    Ok(())
}

fn report(cfg: &RunConfig, metrics: &Path, quiet: bool) -> Result<()> {
    let out = cmd_report(metrics, &cfg.out_dir, cfg.report_switch_year())?;
    for f in &out.figures {
        say(quiet, &format!("wrote {}", f.display()));
    }
    say(quiet, &format!("wrote {}", out.tables.display()));
    Ok(())
}

fn dispatch(cmd: &Command) -> Result<()> {
    let common = match cmd {
        Command::Generate(c) | Command::Run(c) | Command::RunAll(c) => c,
        Command::Report { common, .. } => common,
    };
    let cfg = common.config()?;
    let quiet = common.quiet;
    let body = || match cmd {
        Command::Generate(_) => generate(&cfg, quiet),
        Command::Run(_) => run(&cfg, quiet),
        Command::Report { metrics, .. } => {
            let m = metrics.clone().unwrap_or_else(|| cfg.out_dir.join("metrics.csv"));
            report(&cfg, &m, quiet)
        }
        Command::RunAll(_) => {
            if cfg.data_dir.is_none() {
                generate(&cfg, quiet)?;
            }
            run(&cfg, quiet)?;
            report(&cfg, &cfg.out_dir.join("metrics.csv"), quiet)
        }
    };
    with_jobs(common.jobs, body)
}

#[cfg(feature = "parallel")]
fn with_jobs(jobs: Option<u16>, body: impl FnOnce() -> Result<()> + Send) -> Result<()> {
    let mut b = rayon::ThreadPoolBuilder::new();
    if let Some(n) = jobs {
        b = b.num_threads(usize::from(n));
    }
    let pool = b
        .build()
        .map_err(|e| crate::Error::Config(format!("cannot start worker pool: {e}")))?;
    pool.install(body)
}

#[cfg(not(feature = "parallel"))]
fn with_jobs(_jobs: Option<u16>, body: impl FnOnce() -> Result<()>) -> Result<()> {
    body()
}

/// Parses `args` (program name first), runs the command and returns the exit code.
pub fn run_cli<I, T>(args: I) -> u8
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    match dispatch(&cli.command) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

pub fn main() -> ExitCode {
    ExitCode::from(run_cli(std::env::args_os()))
}
