use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use orbitfl::config::{load_config, ScenarioConfig};
use orbitfl::orbital::visibility_windows;
use orbitfl::sim::output::{write_events_file, write_metrics_file, OutputBundle};
use orbitfl::sim::{self, Mode};
use orbitfl::Error;

#[derive(Parser)]
#[command(name = "orbitfl", version, about = "Federated learning over LEO constellations, simulated")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate one training run and write metrics, events and the resolved config.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum)]
        mode: Option<ModeArg>,
        #[arg(long)]
        seed: Option<u64>,
        /// `key.path=value`, applied in order before validation.
        #[arg(long = "override", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
    },
    /// Print satellite visibility windows as CSV.
    Windows {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        hours: f64,
        #[arg(long = "override", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
    },
    /// Check a configuration and print a one-line summary.
    Validate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long = "override", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Async,
    Sync,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            if let Error::Validation(list) = &e {
                for v in list {
                    eprintln!("  {v}");
                }
            }
            ExitCode::from(1)
        }
    }
}

fn execute(command: Command) -> orbitfl::Result<()> {
    match command {
        Command::Run {
            config,
            out,
            mode,
            seed,
            overrides,
        } => {
            let mut scenario = load_config(&config, &overrides)?;
            if let Some(m) = mode {
                scenario.mode = match m {
                    ModeArg::Async => Mode::Async,
                    ModeArg::Sync => Mode::Sync,
                };
            }
            if let Some(s) = seed {
                scenario.master_seed = s;
            }
            let cfg = scenario.to_run_config()?;
            let files = OutputBundle::create(&out)?;
            std::fs::write(&files.config, scenario.to_json())?;
            let result = sim::run(&cfg)?;
            write_metrics_file(&files.metrics, &result.metrics)?;
            write_events_file(&files.events, &result.events)?;
            for d in &result.diagnostics {
                eprintln!("note: {d}");
            }
            let last = result.metrics.last().expect("the initial model is always recorded");
            let target = match scenario.termination.target_accuracy {
                Some(a) => match result.time_to_accuracy(a) {
                    Some(t) => format!(", reached {a} at {t:.0} s"),
                    None => format!(", did not reach {a}"),
                },
                None => String::new(),
            };
            println!(
                "{} run: {} epochs, accuracy {:.4} at {:.0} s{target}; wrote {}",
                mode_name(scenario.mode),
                last.epoch,
                last.test_accuracy,
                last.sim_time_s,
                out.display()
            );
            Ok(())
        }
        Command::Windows {
            config,
            hours,
            overrides,
        } => {
            if !(hours > 0.0 && hours.is_finite()) {
                return Err(Error::InvalidArgument(format!("--hours must be positive, got {hours}")));
            }
            let cfg = load_config(&config, &overrides)?.to_run_config()?;
            println!("node,satellite,enter_s,exit_s,duration_s");
            for node in &cfg.nodes {
                for w in visibility_windows(&cfg.constellation, node, 0.0, hours * 3600.0, cfg.visibility_step)? {
                    println!(
                        "{},{},{:.3},{:.3},{:.3}",
                        node.id,
                        w.sat,
                        w.enter,
                        w.exit,
                        w.exit - w.enter
                    );
                }
            }
            Ok(())
        }
        Command::Validate { config, overrides } => {
            let scenario = load_config(&config, &overrides)?;
            let cfg = scenario.to_run_config()?;
            println!("{}", summary(&scenario, &cfg));
            Ok(())
        }
    }
}

fn mode_name(mode: Mode) -> &'static str {
    match mode {
        Mode::Async => "async",
        Mode::Sync => "sync",
    }
}

fn summary(scenario: &ScenarioConfig, cfg: &sim::RunConfig) -> String {
    format!(
        "ok: {} orbits, {} satellites, {} parameter server(s), {} mode, seed {}",
        cfg.constellation.num_orbits(),
        cfg.constellation.num_satellites(),
        cfg.nodes.len(),
        mode_name(scenario.mode),
        scenario.master_seed
    )
}
