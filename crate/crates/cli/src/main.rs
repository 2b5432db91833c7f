use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use aoi_cli::commands::{self, SweepKind};
use aoi_cli::config::{DistSpec, POLICY_ENV};
use aoi_cli::{Outcome, RunConfig, EXIT_INPUT};
use clap::error::ErrorKind;
use clap::{Parser, Subcommand, ValueEnum};

/// Mean age of information of a tagged update stream sharing a FCFS queue
/// with Poisson background traffic.
#[derive(Parser, Debug)]
#[command(name = "aoi", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// TOML run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Write the result as CSV here (sweeps print to stdout otherwise).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads for sweeps and replications.
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Master seed for simulation.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Tagged generation rate.
    #[arg(long, global = true)]
    lambda: Option<f64>,
    /// Background arrival rate.
    #[arg(long = "lambda-bg", global = true)]
    lambda_bg: Option<f64>,
    /// Server speed.
    #[arg(long, global = true)]
    mu: Option<f64>,
    /// CV of the inter-generation times.
    #[arg(long = "cv-g", global = true)]
    cv_g: Option<f64>,
    /// CV of both work laws, fitted at unit mean.
    #[arg(long = "cv-h", global = true)]
    cv_h: Option<f64>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Exact mean AoI with bounds and precision diagnostics.
    MeanAoi,
    /// Closed-form bounds and the bound-optimal rate.
    Bounds,
    /// Golden-section search for the AoI-minimizing rate.
    Optimize,
    /// Replicated simulation beside the exact values.
    Simulate {
        /// Simulated time per replication.
        #[arg(long)]
        horizon: Option<f64>,
        /// Number of independent replications.
        #[arg(long)]
        reps: Option<usize>,
        /// Write a per-event trace of one replication.
        #[arg(long)]
        trace: Option<PathBuf>,
    },
    /// Evaluate a preset or the configured grid, writing CSV.
    Sweep {
        #[arg(value_enum)]
        preset: Preset,
    },
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum Preset {
    Fig5,
    Fig7,
    Fig8,
    Table1,
    Grid,
}

fn load(cli: &Cli) -> Result<RunConfig, String> {
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    let m = &mut cfg.model;
    if let Some(l) = cli.lambda {
        m.lambda = Some(l);
        m.mean_g = None;
    }
    if let Some(v) = cli.lambda_bg {
        m.lambda_bg = v;
    }
    if let Some(v) = cli.mu {
        m.mu = v;
    }
    if let Some(v) = cli.cv_g {
        m.cv_g = v;
    }
    if let Some(v) = cli.cv_h {
        m.h = DistSpec::fit(1.0, v);
        m.h_bg = None;
    }
    if let Some(seed) = cli.seed {
        cfg.sim.seed = seed;
    }
    Ok(cfg)
}

fn run(cli: &Cli) -> Result<Outcome, String> {
    let mut cfg = load(cli)?;
    let env = std::env::var(POLICY_ENV).ok();
    let policy = cfg.policy(env.as_deref())?;
    match &cli.command {
        Command::MeanAoi => commands::mean_aoi_cmd(&cfg, &policy),
        Command::Bounds => commands::bounds_cmd(&cfg),
        Command::Optimize => commands::optimize_cmd(&cfg, &policy),
        Command::Simulate { horizon, reps, trace } => {
            if let Some(h) = horizon {
                cfg.sim.horizon = *h;
            }
            if let Some(r) = reps {
                cfg.sim.reps = *r;
            }
            commands::simulate_cmd(&cfg, &policy, trace.as_deref())
        }
        Command::Sweep { preset } => {
            let kind = match preset {
                Preset::Fig5 => SweepKind::Fig5,
                Preset::Fig7 => SweepKind::Fig7,
                Preset::Fig8 => SweepKind::Fig8,
                Preset::Table1 => SweepKind::Table1,
                Preset::Grid => SweepKind::Grid,
            };
            commands::sweep_cmd(&cfg, &policy, kind)
        }
    }
}

fn emit(cli: &Cli, outcome: &Outcome) -> io::Result<()> {
    let is_sweep = matches!(cli.command, Command::Sweep { .. });
    match &cli.out {
        Some(path) => outcome.table.write_to(BufWriter::new(File::create(path)?))?,
        None if is_sweep => outcome.table.write_to(io::stdout().lock())?,
        None => {}
    }
    if is_sweep {
        eprint!("{}", outcome.text);
    } else {
        io::stdout().lock().write_all(outcome.text.as_bytes())?;
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) => e.exit(),
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(EXIT_INPUT);
        }
    };
    let jobs = cli.jobs.unwrap_or(0);
    if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(jobs).build_global() {
        eprintln!("error: {e}");
        return ExitCode::from(EXIT_INPUT);
    }
    match run(&cli) {
        Ok(outcome) => match emit(&cli, &outcome) {
            Ok(()) => ExitCode::from(outcome.code),
            Err(e) => {
                eprintln!("error: {e}");
                ExitCode::from(EXIT_INPUT)
            }
        },
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(EXIT_INPUT)
        }
    }
}
