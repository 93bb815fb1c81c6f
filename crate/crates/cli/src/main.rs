//! Batch front-end: parses a TOML run configuration, dispatches one
//! command, and writes CSV tables with JSON sidecars.

mod commands;
mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};

use config::{parse_config, RunConfig};

#[derive(Parser)]
#[command(
    name = "dotmag",
    version,
    about = "Bayesian magnetometry with hyperfine-decohered quantum dots"
)]
struct Cli {
    /// TOML configuration file; omitted = built-in GaAs defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Output directory for CSV/JSON files.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,

    /// Worker threads (default: available parallelism).
    #[arg(long, global = true)]
    threads: Option<usize>,

    /// Overrides the config's optimizer seed.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Overrides the config's quadrature node count.
    #[arg(long, global = true)]
    quad_nodes: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Total-spin sector table of the nuclear bath.
    BathTable,
    /// Channel coefficients A and E against time.
    ChannelCurves {
        /// Field value in mT; repeatable. Default: the prior mean.
        #[arg(long = "b-mt")]
        b_mt: Vec<f64>,
    },
    /// Optimized strategy and ansatz ratios over the time grid.
    Sweep,
    /// Optimal state and observable at one time.
    Optimize {
        /// Evaluation time in ns.
        #[arg(long, default_value_t = 10.0)]
        t_ns: f64,
    },
    /// Best ratio against dot count.
    CompareN {
        /// Largest dot count to include.
        #[arg(long, default_value_t = 3)]
        n_max: usize,
    },
    /// Sweep minima over a grid of priors.
    PriorScan,
    /// Detect and refine metrological regime transitions.
    Transitions,
    /// Run the oracle suite and print a pass/fail table.
    Validate,
}

fn load_config(cli: &Cli) -> Result<RunConfig> {
    let mut cfg = match &cli.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .with_context(|| format!("reading {}", path.display()))?;
            parse_config(&text)?
        }
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.sim.seed = seed;
    }
    if let Some(nodes) = cli.quad_nodes {
        cfg.sim.quad_nodes = nodes;
        cfg.validate()?;
    }
    Ok(cfg)
}

fn run(cli: &Cli) -> Result<bool> {
    if let Some(threads) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .context("configuring the worker pool")?;
    }
    let cfg = load_config(cli)?;
    let out = cli.out.as_path();
    match &cli.command {
        Command::BathTable => commands::bath_table(&cfg, out)?,
        Command::ChannelCurves { b_mt } => commands::channel_curves(&cfg, out, b_mt)?,
        Command::Sweep => commands::sweep_cmd(&cfg, out)?,
        Command::Optimize { t_ns } => commands::optimize_cmd(&cfg, out, *t_ns)?,
        Command::CompareN { n_max } => commands::compare_n_cmd(&cfg, out, *n_max)?,
        Command::PriorScan => commands::prior_scan_cmd(&cfg, out)?,
        Command::Transitions => commands::transitions_cmd(&cfg, out)?,
        Command::Validate => return commands::validate_cmd(&cfg, out),
    }
    Ok(true)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => {
            eprintln!("[dotmag] validation failed");
            ExitCode::FAILURE
        }
        Err(e) => {
            eprintln!("[dotmag] error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
