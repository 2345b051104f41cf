//! Command-line experiment driver.

pub mod config;
pub mod runners;

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

pub use config::{ExperimentConfig, Objective, PowerUnit, Scenario, PRESET_NAMES};

use crate::Error;

/// Exit status for a rejected configuration.
pub const EXIT_CONFIG: i32 = 2;
/// Exit status for a failed solver run.
pub const EXIT_SOLVER: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "cogjam", version, about = "Cognitive jamming power control experiments")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Sweep the jamming budget for the optimal scheme and the baselines.
    SweepQ(RunArgs),
    /// Sweep the transmit power under both transmitter policies.
    SweepP(RunArgs),
    /// Achieved relative rate across the water level parameter.
    BetaScan(RunArgs),
    /// Online threshold scheme against the optimal schemes.
    Online(RunArgs),
    /// Write the fading ensemble of a configuration.
    GenEnsemble(RunArgs),
}

#[derive(Debug, Clone, Args)]
pub struct RunArgs {
    /// Configuration file.
    #[arg(long, conflicts_with = "preset")]
    pub config: Option<PathBuf>,
    /// Bundled preset, `fig2` to `fig11`.
    #[arg(long)]
    pub preset: Option<String>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory; defaults to `out/<name>`.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Worker threads for sweep points.
    #[arg(long)]
    pub threads: Option<usize>,
    /// Overrides the ensemble size.
    #[arg(long)]
    pub n_states: Option<usize>,
}

impl Command {
    fn args(&self) -> &RunArgs {
        match self {
            Self::SweepQ(a) | Self::SweepP(a) | Self::BetaScan(a) | Self::Online(a) | Self::GenEnsemble(a) => a,
        }
    }
}

/// Configuration after command-line overrides.
pub fn load_config(args: &RunArgs) -> crate::Result<ExperimentConfig> {
    let mut cfg = match (&args.config, &args.preset) {
        (Some(path), _) => ExperimentConfig::from_file(path)?,
        (None, Some(name)) => ExperimentConfig::preset(name)?,
        (None, None) => return Err(Error::Config("pass --config <path> or --preset <name>".into())),
    };
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &args.out {
        cfg.out = Some(out.clone());
    }
    if let Some(n) = args.n_states {
        cfg = cfg.with_n_states(n)?;
    }
    Ok(cfg)
}

fn write_error_trace(dir: &Path, cfg: &ExperimentConfig, err: &Error) {
    let text = format!("error: {err}\n\n{err:?}\n\nconfiguration:\n{cfg:#?}\n");
    let path = dir.join("error_trace.txt");
    if let Err(e) = std::fs::create_dir_all(dir).and_then(|_| std::fs::write(&path, text)) {
        log::error!("cannot write {}: {e}", path.display());
    }
}

/// Runs one subcommand and returns the process exit status.
pub fn run(cli: &Cli) -> i32 {
    let args = cli.command.args();
    if let Some(n) = args.threads {
        if n == 0 {
            eprintln!("configuration error: --threads must be at least 1");
            return EXIT_CONFIG;
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            log::warn!("thread pool already initialized: {e}");
        }
    }
    let cfg = match load_config(args) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("{e}");
            return EXIT_CONFIG;
        }
    };
    let out = cfg.out_dir();
    log::info!("running {} into {}", cfg.name, out.display());
    let result = match &cli.command {
        Command::SweepQ(_) => runners::run_sweep_q(&cfg, &out),
        Command::SweepP(_) => runners::run_sweep_p(&cfg, &out),
        Command::BetaScan(_) => runners::run_beta_scan(&cfg, &out),
        Command::Online(_) => runners::run_online_experiment(&cfg, &out),
        Command::GenEnsemble(_) => runners::run_gen_ensemble(&cfg, &out),
    };
    match result {
        Ok(files) => {
            for f in files {
                println!("{}", f.display());
            }
            0
        }
        Err(e @ Error::Config(_)) => {
            eprintln!("{e}");
            EXIT_CONFIG
        }
        Err(e) => {
            eprintln!("{e}");
            write_error_trace(&out, &cfg, &e);
            EXIT_SOLVER
        }
    }
}
