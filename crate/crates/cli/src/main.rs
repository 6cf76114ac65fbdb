use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use swarmshm::experiment::{self, ExperimentConfig, StageSummary};

/// Simulated robot-swarm vibration inspection of a clamped steel plate.
#[derive(Parser, Debug)]
#[command(name = "swarmshm", version, about)]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct Common {
    /// TOML configuration file; flags override its fields.
    #[arg(long, short, global = true)]
    config: Option<PathBuf>,
    /// Output root.
    #[arg(long, short, global = true, env = "SWARMSHM_OUTPUT")]
    output: Option<PathBuf>,
    /// Comma-separated run seeds.
    #[arg(long, global = true, value_delimiter = ',')]
    seeds: Option<Vec<u64>>,
    /// Parallel runs (0 = all cores).
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Swarm size for optimize and inspect.
    #[arg(long, global = true)]
    robots: Option<usize>,
    /// Target radius r_t in meters for optimize and inspect.
    #[arg(long, global = true)]
    radius: Option<f64>,
    /// Plate grid nodes per axis.
    #[arg(long, global = true)]
    grid: Option<usize>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Solve the undamaged plate and export the retained modes.
    Modes,
    /// Uncertainty over time for swarm sizes × target radii.
    Explore {
        /// Comma-separated swarm sizes.
        #[arg(long, value_delimiter = ',')]
        sizes: Option<Vec<usize>>,
        /// Comma-separated target radii, m.
        #[arg(long, value_delimiter = ',')]
        radii: Option<Vec<f64>>,
    },
    /// Fit GP hyperparameters to modes identified on the undamaged plate.
    Optimize {
        /// Number of undamaged missions.
        #[arg(long)]
        runs: Option<usize>,
    },
    /// Random damage cases × seeds, scored against ground truth.
    Inspect {
        /// Number of damage cases.
        #[arg(long)]
        cases: Option<usize>,
    },
    /// One run directory per swarm size × radius × seed; finished runs are skipped.
    Sweep {
        #[arg(long, value_delimiter = ',')]
        sizes: Option<Vec<usize>>,
        #[arg(long, value_delimiter = ',')]
        radii: Option<Vec<f64>>,
    },
    /// Aggregate tables over the inspection runs in the output root.
    Report,
    /// Print the resolved configuration as TOML.
    Config,
}

fn resolve(cli: &Cli) -> Result<ExperimentConfig> {
    let c = &cli.common;
    let mut cfg = match &c.config {
        Some(path) => ExperimentConfig::load(path).with_context(|| format!("reading {}", path.display()))?,
        None => ExperimentConfig::default(),
    };
    if let Some(o) = &c.output {
        cfg.output = o.clone();
    }
    if let Some(s) = &c.seeds {
        cfg.seeds = s.clone();
    }
    if let Some(w) = c.workers {
        cfg.workers = w;
    }
    if let Some(n) = c.robots {
        cfg.pipeline.mission.n_robots = n;
    }
    if let Some(r) = c.radius {
        cfg.pipeline.mission.nav.r_t = r;
    }
    if let Some(g) = c.grid {
        cfg.pipeline.plate.grid_n = g;
    }
    match &cli.command {
        Command::Explore { sizes, radii } => {
            if let Some(s) = sizes {
                cfg.explore.swarm_sizes = s.clone();
            }
            if let Some(r) = radii {
                cfg.explore.radii = r.clone();
            }
        }
        Command::Sweep { sizes, radii } => {
            if let Some(s) = sizes {
                cfg.sweep.swarm_sizes = s.clone();
            }
            if let Some(r) = radii {
                cfg.sweep.radii = r.clone();
            }
        }
        Command::Optimize { runs: Some(r) } => cfg.optimize.runs = *r,
        Command::Inspect { cases: Some(n) } => cfg.inspect.cases = *n,
        _ => {}
    }
    cfg.validate()?;
    Ok(cfg)
}

fn finish(name: &str, s: StageSummary) -> ExitCode {
    println!("{name}: {} runs written to {}", s.runs, s.dir.display());
    if s.ok() {
        return ExitCode::SUCCESS;
    }
    for f in &s.failed {
        eprintln!("failed: {f}");
    }
    eprintln!("{name}: {} of {} runs failed", s.failed.len(), s.runs);
    ExitCode::FAILURE
}

fn run(cli: Cli) -> Result<ExitCode> {
    let cfg = resolve(&cli)?;
    Ok(match cli.command {
        Command::Modes => finish("modes", experiment::run_modes(&cfg)?),
        Command::Explore { .. } => finish("explore", experiment::run_explore(&cfg)?),
        Command::Optimize { .. } => finish("optimize", experiment::run_optimize(&cfg)?),
        Command::Inspect { .. } => finish("inspect", experiment::run_inspect(&cfg)?),
        Command::Sweep { .. } => finish("sweep", experiment::run_sweep(&cfg)?),
        Command::Report => {
            let s = experiment::report(&cfg.output)?;
            println!("report: {} runs aggregated into {}", s.runs, cfg.output.join("report").display());
            if s.missing.is_empty() {
                ExitCode::SUCCESS
            } else {
                eprintln!("report: {} runs missing or failed; partial aggregate written", s.missing.len());
                ExitCode::FAILURE
            }
        }
        Command::Config => {
            print!("{}", cfg.to_toml()?);
            ExitCode::SUCCESS
        }
    })
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
