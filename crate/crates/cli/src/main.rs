//! `nullcone`: deterministic experiment runner for the double-null
//! laboratory.
//!
//! `run <FILE>` executes the driver a config file names; the other
//! subcommands run one driver directly from built-in defaults, optionally
//! layered under `--config`. Every run writes `manifest.txt` plus one CSV
//! per result table into the output directory (`--out-dir`, then
//! `NULLCONE_OUT_DIR`, then `./out`), with `--json` mirroring each table.
//!
//! Exit codes: 0 all in-config assertions pass, 1 an assertion failed,
//! 2 configuration or usage error, 3 runtime failure.

mod config;
mod drivers;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use config::{ExperimentConfig, RawConfig};
use output::{Manifest, OutDir};

#[derive(Parser)]
#[command(name = "nullcone", version, about = "Double-null numerical laboratory runner")]
struct Cli {
    /// Config file layered under the subcommand's defaults.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Random seed for the trial-based drivers.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory; falls back to NULLCONE_OUT_DIR, then ./out.
    #[arg(long, global = true, value_name = "DIR")]
    out_dir: Option<PathBuf>,
    /// Worker threads; 0 or absent picks the machine default.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Mirror every CSV table as JSON.
    #[arg(long, global = true)]
    json: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Execute the driver named by a config file.
    Run {
        #[arg(value_name = "FILE")]
        config_file: PathBuf,
    },
    /// Direct evolution with the pointwise-bound stability ladder.
    Solve,
    /// Picard fixed-point study with contraction factors.
    Iterate {
        /// Iteration count K.
        #[arg(long)]
        k: Option<usize>,
    },
    /// Energy growth in V with the power-law exponent fit.
    Energy,
    /// Randomized audit of the three weighted integral inequalities.
    Hardy {
        #[arg(long)]
        trials: Option<usize>,
    },
    /// Power-comparison audit: extremal monomial plus randomized draws.
    Kt4 {
        #[arg(long)]
        trials: Option<usize>,
    },
    /// Scattering-to-cone reduction: norms, transfer, transport, energies.
    MkgReduce,
    /// Weighted data-norm sweep with borderline divergence detection.
    Norms,
    /// Manufactured-solution convergence ladder.
    Mms,
}

impl Command {
    fn driver_name(&self) -> &'static str {
        match self {
            Command::Run { .. } => "run",
            Command::Solve => "solve",
            Command::Iterate { .. } => "picard",
            Command::Energy => "energy-scaling",
            Command::Hardy { .. } => "hardy",
            Command::Kt4 { .. } => "kt4",
            Command::MkgReduce => "mkg-reduce",
            Command::Norms => "norms",
            Command::Mms => "mms",
        }
    }
}

enum Failure {
    Config(String),
    Runtime(String),
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(Failure::Config(msg)) => {
            eprintln!("config error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Runtime(msg)) => {
            eprintln!("runtime error: {msg}");
            ExitCode::from(3)
        }
    }
}

fn execute(cli: &Cli) -> Result<bool, Failure> {
    let cfg = effective_config(cli)?;
    let out = OutDir::resolve(cli.out_dir.as_deref());
    out.create()
        .map_err(|e| Failure::Runtime(format!("cannot create {}: {e}", out.path().display())))?;

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cli.threads.unwrap_or(0))
        .build()
        .map_err(|e| Failure::Runtime(e.to_string()))?;
    let report = pool
        .install(|| drivers::dispatch(&cfg))
        .ok_or_else(|| Failure::Config(format!("unknown experiment name `{}`", cfg.name)))?
        .map_err(|e| Failure::Runtime(e.to_string()))?;

    let mut manifest = Manifest::new(cli.command.driver_name(), &cfg, &out, pool.current_num_threads());
    for (key, value) in &report.notes {
        manifest.note(key, value);
    }
    manifest
        .write(&out)
        .map_err(|e| Failure::Runtime(format!("cannot write manifest: {e}")))?;
    for table in &report.tables {
        table
            .write(&out, cli.json)
            .map_err(|e| Failure::Runtime(format!("cannot write {}: {e}", table.name)))?;
    }

    for line in &report.summary {
        println!("{line}");
    }
    if report.failures.is_empty() {
        println!("PASS {}", cfg.name);
        Ok(true)
    } else {
        for failure in &report.failures {
            eprintln!("FAIL {}: {failure}", cfg.name);
        }
        Ok(false)
    }
}

/// Defaults for the subcommand's driver, overlaid by --config, then flags.
fn effective_config(cli: &Cli) -> Result<ExperimentConfig, Failure> {
    let parse = |path: &PathBuf| RawConfig::from_path(path).map_err(|e| Failure::Config(e.0));
    let mut cfg = match &cli.command {
        Command::Run { config_file } => {
            let raw = parse(config_file)?;
            ExperimentConfig::from_raw(&raw).map_err(|e| Failure::Config(e.0))?
        }
        other => {
            let name = other.driver_name();
            match &cli.config {
                Some(path) => {
                    let raw = parse(path)?;
                    ExperimentConfig::from_raw_named(&raw, name).map_err(|e| Failure::Config(e.0))?
                }
                None => ExperimentConfig::named(name),
            }
        }
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    match &cli.command {
        Command::Iterate { k: Some(k) } => cfg.k_iterations = *k,
        Command::Hardy { trials: Some(t) } | Command::Kt4 { trials: Some(t) } => {
            cfg.trials = *t;
        }
        _ => {}
    }
    cfg.validate().map_err(|e| Failure::Config(e.0))?;
    Ok(cfg)
}
