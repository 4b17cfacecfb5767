//! `specradius`: scenario configs in, radius tables, Monte Carlo risk
//! estimates, rate sweeps, bound checks and manifests out.

pub mod commands;
pub mod config;
pub mod error;
pub mod manifest;

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::commands::Output;
use crate::config::{Command, Resolved};
use crate::error::{CliError, EXIT_CHECK_FAILED, EXIT_OK};

pub const ENV_OUT: &str = "SPECRADIUS_OUT";
pub const ENV_THREADS: &str = "SPECRADIUS_THREADS";

#[derive(Parser, Debug)]
#[command(name = "specradius", version, about = "Separation radii and minimax tests for inverse problems with a noisy operator")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Cmd,
}

#[derive(Args, Debug, Clone)]
pub struct Common {
    /// TOML run configuration.
    #[arg(long)]
    pub config: PathBuf,
    /// Overrides `experiment.seed`.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Worker threads; defaults to SPECRADIUS_THREADS, then all cores.
    #[arg(long)]
    pub threads: Option<usize>,
    /// Output directory; defaults to SPECRADIUS_OUT, then `output.dir`.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
pub enum Cmd {
    /// Radii, minimisers and truncation flags of the scenario.
    Radius(Common),
    /// Level and power of the configured tests.
    Simulate(Common),
    /// Rate sweeps against the closed-form exponents.
    Rates(Common),
    /// Quantile bounds, hypercube χ², perturbations and adaptive grids.
    BoundsCheck(Common),
    /// Hashes of all outputs of the configured subcommands.
    Manifest {
        #[command(flatten)]
        common: Common,
        /// Also rerun, once more and on one thread, and compare.
        #[arg(long, conflicts_with = "check")]
        verify: bool,
        /// Compare the files next to an existing manifest with its hashes.
        #[arg(long, value_name = "MANIFEST")]
        check: Option<PathBuf>,
    },
    /// Configuration helpers.
    Config {
        #[command(subcommand)]
        action: ConfigAction,
    },
}

#[derive(Subcommand, Debug)]
pub enum ConfigAction {
    /// Print the configuration with every default filled in.
    PrintDefaults,
}

fn load(c: &Common) -> Result<(Resolved, String), CliError> {
    let text = std::fs::read_to_string(&c.config).map_err(|e| CliError::Io(format!("{}: {e}", c.config.display())))?;
    let mut cfg = config::parse(&text)?;
    if let Some(s) = c.seed {
        cfg.experiment.seed = s;
    }
    Ok((config::resolve(cfg, &text)?, text))
}

fn threads(c: &Common) -> Result<usize, CliError> {
    let n = match (c.threads, std::env::var(ENV_THREADS).ok()) {
        (Some(n), _) => n,
        (None, Some(v)) => v
            .trim()
            .parse()
            .map_err(|_| CliError::Config { line: None, msg: format!("{ENV_THREADS}={v} is not a thread count") })?,
        (None, None) => std::thread::available_parallelism().map_or(1, |n| n.get()),
    };
    if n == 0 {
        return Err(CliError::Config { line: None, msg: "thread count must be positive".into() });
    }
    Ok(n)
}

fn out_dir(c: &Common, r: &Resolved) -> PathBuf {
    c.out
        .clone()
        .or_else(|| std::env::var_os(ENV_OUT).map(PathBuf::from))
        .or_else(|| r.config.output.dir.as_ref().map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("specradius-out"))
}

fn write_files(dir: &Path, out: &Output) -> Result<(), CliError> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::Io(format!("{}: {e}", dir.display())))?;
    for (name, bytes) in &out.files {
        let p = dir.join(name);
        std::fs::write(&p, bytes).map_err(|e| CliError::Io(format!("{}: {e}", p.display())))?;
    }
    Ok(())
}

fn run_command(cmd: Command, c: &Common) -> Result<Output, CliError> {
    let (r, _) = load(c)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads(c)?)
        .build()
        .map_err(|e| CliError::Numeric(e.to_string()))?;
    let out = pool.install(|| commands::run(cmd, &r))?;
    write_files(&out_dir(c, &r), &out)?;
    Ok(out)
}

fn dispatch(cli: Cli) -> Result<Output, CliError> {
    match cli.command {
        Cmd::Radius(c) => run_command(Command::Radius, &c),
        Cmd::Simulate(c) => run_command(Command::Simulate, &c),
        Cmd::Rates(c) => run_command(Command::Rates, &c),
        Cmd::BoundsCheck(c) => run_command(Command::BoundsCheck, &c),
        Cmd::Manifest { common, verify, check } => {
            let (r, text) = load(&common)?;
            if let Some(path) = check {
                return manifest::cmd_check(&path, &text);
            }
            let out = manifest::cmd_manifest(&r, &text, threads(&common)?, verify)?;
            write_files(&out_dir(&common, &r), &out)?;
            Ok(out)
        }
        Cmd::Config { action: ConfigAction::PrintDefaults } => {
            let report = toml::to_string_pretty(&config::defaults()).map_err(|e| CliError::Io(e.to_string()))?;
            Ok(Output { report, ..Default::default() })
        }
    }
}

/// Runs the CLI and returns the process exit code.
pub fn run(cli: Cli) -> i32 {
    match dispatch(cli) {
        Ok(out) => {
            print!("{}", out.report);
            if out.failed {
                eprintln!("error: checks failed");
                EXIT_CHECK_FAILED
            } else {
                EXIT_OK
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
