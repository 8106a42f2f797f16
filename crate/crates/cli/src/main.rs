use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use spc_offload::error::{ConfigError, SimError};
use spc_offload::experiment::{self, SweepParam};
use spc_offload::scenario::{parse_override, ScenarioConfig};
use spc_offload::sim::run_scenario;

/// Offloading decisions and simulations for proximity clouds.
#[derive(Parser)]
#[command(name = "spc", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario and write runs, methods, devices and summary CSVs.
    Run {
        #[command(flatten)]
        common: Common,
    },
    /// Run a scenario once per parameter value and write one row per value.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// lambda, merge, dissemination, invalidation, theta or capacity.
        #[arg(long)]
        param: String,
        /// Comma-separated values, e.g. `append,unique,weighted` or
        /// `on_demand,periodic:500,on_change`.
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<String>,
    },
    /// Compare per-call ACO, local cache and collaborative cache per app.
    CompareCacheModes {
        #[command(flatten)]
        common: Common,
    },
    /// Check a scenario file without running it.
    Validate {
        #[command(flatten)]
        common: Common,
    },
}

#[derive(Args)]
struct Common {
    /// Scenario file (JSON).
    config: PathBuf,
    /// Overrides the scenario seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Dotted-path override, e.g. `--set decision.lambda=0.8`; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Only print errors.
    #[arg(long)]
    quiet: bool,
}

enum Failure {
    Config(anyhow::Error),
    Runtime(anyhow::Error),
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Failure::Config(e.into())
    }
}

impl From<SimError> for Failure {
    fn from(e: SimError) -> Self {
        match e {
            SimError::InvalidConfig(c) => Failure::Config(c.into()),
            other => Failure::Runtime(other.into()),
        }
    }
}

fn load(common: &Common) -> Result<ScenarioConfig, Failure> {
    let cfg = ScenarioConfig::load_unvalidated(&common.config)?;
    let mut overrides = common
        .set
        .iter()
        .map(|s| parse_override(s))
        .collect::<Result<Vec<_>, _>>()?;
    if let Some(seed) = common.seed {
        overrides.push(("seed".into(), seed.to_string()));
    }
    let cfg = cfg.with_overrides(&overrides)?;
    cfg.validate()?;
    Ok(cfg)
}

fn write(dir: &Path, name: &str, body: &str) -> Result<PathBuf, Failure> {
    let run = || -> anyhow::Result<PathBuf> {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        let path = dir.join(name);
        std::fs::write(&path, body).with_context(|| format!("writing {}", path.display()))?;
        Ok(path)
    };
    run().map_err(Failure::Runtime)
}

fn execute(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Validate { common } => {
            let cfg = load(&common)?;
            if !common.quiet {
                println!(
                    "{}: ok ({} devices, {} app entries, seed {})",
                    common.config.display(),
                    cfg.devices.len(),
                    cfg.apps.len(),
                    cfg.seed
                );
            }
        }
        Command::Run { common } => {
            let cfg = load(&common)?;
            let metrics = run_scenario(&cfg)?;
            metrics.write(&common.out, &cfg.outputs)?;
            if !common.quiet {
                let wall: u128 = metrics.runs.iter().map(|r| r.decision_wall_ns).sum();
                println!(
                    "{} runs ({} completed), mean end-to-end {:.3} ms, mean decision {:.3} ms, offloaded {:.1}%, cache hit rate {:.1}%",
                    metrics.runs.len(),
                    metrics.completed().count(),
                    metrics.mean_end_to_end_ms(),
                    metrics.mean_decision_ms(),
                    metrics.offload_pct(),
                    metrics.hit_rate_pct(),
                );
                println!("decision engine wall-clock: {:.3} ms", wall as f64 / 1e6);
                if metrics.horizon_exceeded {
                    println!("horizon reached before the workload finished");
                }
                println!("wrote {}", common.out.display());
            }
        }
        Command::Sweep { common, param, values } => {
            let cfg = load(&common)?;
            let param: SweepParam = param.parse()?;
            let rows = experiment::sweep(&cfg, param, &values)?;
            let path = write(&common.out, "sweep.csv", &experiment::to_csv(&rows))?;
            if !common.quiet {
                for r in &rows {
                    println!(
                        "{}={}: end-to-end {:.3} ms, decision {:.3} ms, hit rate {:.1}%, offloaded {:.1}%",
                        r.parameter, r.value, r.mean_end_to_end_ms, r.mean_decision_ms, r.hit_rate_pct, r.offload_pct
                    );
                }
                println!("wrote {}", path.display());
            }
        }
        Command::CompareCacheModes { common } => {
            let cfg = load(&common)?;
            let rows = experiment::compare_cache_modes(&cfg)?;
            let path = write(&common.out, "compare.csv", &experiment::to_csv(&rows))?;
            if !common.quiet {
                println!("{:<12} {:<13} {:>12} {:>14} {:>9} {:>9}", "app", "mode", "decision ms", "end-to-end ms", "hits %", "gain %");
                for r in &rows {
                    println!(
                        "{:<12} {:<13} {:>12.4} {:>14.3} {:>9.1} {:>9.1}",
                        r.app, r.mode, r.mean_decision_ms, r.mean_end_to_end_ms, r.hit_rate_pct, r.decision_gain_vs_local_pct
                    );
                }
                println!("wrote {}", path.display());
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(e)) => {
            eprintln!("config error: {e:#}");
            ExitCode::from(2)
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
