use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use oms_core::acceptance::{self, AcceptanceOptions};
use oms_core::benchmarks::build_benchmark;
use oms_core::harness::{emit_report, parse_seeds, report_from_dir, run_experiment, ExperimentConfig};
use oms_core::oracles::{diameter, optimal_gain};

#[derive(Parser)]
#[command(name = "oms", about = "Optimistic model selection simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment and write traces, summary, and regret curve.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        horizon: Option<u64>,
        #[arg(long)]
        delta: Option<f64>,
        /// `a..b`, `a..=b`, or a comma-separated list.
        #[arg(long)]
        seeds: Option<String>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print the optimal gain and diameter of every Markov model of a benchmark.
    Oracle {
        #[arg(long)]
        config: PathBuf,
    },
    /// Re-aggregate the per-seed traces in a report directory.
    Report {
        #[arg(long)]
        dir: PathBuf,
    },
    /// Run the acceptance checks.
    Accept {
        /// Reduced seeds and horizons for a fast smoke pass.
        #[arg(long)]
        quick: bool,
    },
}

fn run(cli: Cli) -> Result<bool, Box<dyn std::error::Error>> {
    match cli.command {
        Command::Run {
            config,
            horizon,
            delta,
            seeds,
            out,
        } => {
            let mut cfg = ExperimentConfig::load(&config)?;
            if let Some(h) = horizon {
                cfg.horizon = h;
            }
            if let Some(d) = delta {
                cfg.delta = d;
            }
            if let Some(s) = seeds {
                cfg.seeds = parse_seeds(&s)?;
            }
            if let Some(o) = out {
                cfg.output = o;
            }
            let result = run_experiment(&cfg)?;
            let files = emit_report(&result, &cfg.output)?;
            for s in &result.traces {
                println!(
                    "seed {:>4}  regret {:>12.3}  K_T {:>5}  runs {:>6}  eliminations {:?}",
                    s.seed, s.summary.final_regret, s.summary.k_t, s.summary.total_runs, s.counters.eliminations
                );
            }
            println!("wrote {} files to {}", files.len(), cfg.output.display());
            Ok(true)
        }
        Command::Oracle { config } => {
            let cfg = ExperimentConfig::load(&config)?;
            let bench = build_benchmark(&cfg.benchmark)?;
            println!("model_id,name,states,markov,rho_star,diameter");
            for (id, model) in bench.models.iter().enumerate() {
                match &bench.references[id] {
                    Some(mdp) => println!(
                        "{id},{},{},true,{},{}",
                        model.name,
                        model.state_count(),
                        optimal_gain(mdp, 1e-8)?,
                        diameter(mdp, 1e-9)?
                    ),
                    None => println!("{id},{},{},false,,", model.name, model.state_count()),
                }
            }
            Ok(true)
        }
        Command::Report { dir } => {
            let summary = report_from_dir(&dir)?;
            println!("{}", serde_json::to_string_pretty(&summary)?);
            Ok(true)
        }
        Command::Accept { quick } => {
            let opts = if quick {
                AcceptanceOptions::quick()
            } else {
                AcceptanceOptions::default()
            };
            let outcomes = acceptance::run_all(&opts);
            for o in &outcomes {
                println!("{o}");
            }
            Ok(outcomes.iter().all(|o| o.passed))
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
