//! Command-line front end: inspect networks, replay scenarios, trace
//! equilibrium branches, optimize a single signal, and run the benchmark
//! sweeps. CSV outputs land in the `--out` directory.

use std::io::Write;
use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Deserialize;

use lori::config::{load_network, Scenario};
use lori::graph::ExpandedGraph;
use lori::harness::{
    run_plain, run_scenario1_experiment1, run_scenario1_experiment2, run_scenario1_experiment3,
    run_scenario2, ExperimentOutput,
};
use lori::qre::{solve_qre, NormalFormGame, QreParams};
use lori::sim::Policy;
use lori::state::TravelerId;

#[derive(Parser)]
#[command(name = "lori", version, about = "Signal-steered multimodal traffic simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum PolicyArg {
    Lori,
    Sssp,
}

#[derive(Args)]
struct ScenarioArgs {
    /// Scenario TOML file.
    #[arg(long)]
    config: PathBuf,
    /// Override the scenario's seed list with a single seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Directory for CSV outputs.
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Inspect the expanded layered graph.
    Graph {
        #[command(subcommand)]
        command: GraphCommand,
    },
    /// Replay a scenario and write the run CSVs.
    Simulate {
        #[command(flatten)]
        scenario: ScenarioArgs,
        /// Force every traveler onto one policy.
        #[arg(long, value_enum)]
        policy: Option<PolicyArg>,
        /// Print each decision as it is replayed.
        #[arg(long)]
        verbose: bool,
    },
    /// Trace the logit-response branch of a cost tensor.
    Qre {
        /// Game TOML: `strategy_counts` plus one `costs` table per player.
        #[arg(long)]
        game: PathBuf,
        #[arg(long, default_value_t = 1.0)]
        rationality: f64,
        /// CSV destination; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Optimize the first steered decision's signal and print it.
    OptimizeSignal {
        /// Scenario TOML file.
        #[arg(long)]
        config: PathBuf,
        /// Override the scenario's seed list with a single seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Run a benchmark sweep and write the CSVs.
    Bench {
        #[command(subcommand)]
        command: BenchCommand,
    },
}

#[derive(Subcommand)]
enum GraphCommand {
    /// Print the expanded graph as an edge-list text file.
    Dump {
        /// Network TOML file.
        #[arg(long)]
        network: PathBuf,
        /// Destination file; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Subcommand)]
enum BenchCommand {
    /// Three-traveler sweeps: weight grids and the persuasion census.
    Scenario1 {
        #[command(flatten)]
        scenario: ScenarioArgs,
        /// Which sweep to run.
        #[arg(long, value_parser = clap::value_parser!(u8).range(1..=3))]
        experiment: u8,
    },
    /// Steered-count ladder on generated demand.
    Scenario2 {
        #[command(flatten)]
        scenario: ScenarioArgs,
        /// Steered traveler counts, e.g. `1,2,3`.
        #[arg(long = "lori-travelers", value_delimiter = ',', default_values_t = vec![1, 2, 3])]
        lori_travelers: Vec<usize>,
    },
}

#[derive(Deserialize)]
struct GameFile {
    strategy_counts: Vec<usize>,
    costs: Vec<Vec<f64>>,
}

fn load_scenario(args: &ScenarioArgs) -> Result<Scenario> {
    let mut scenario = Scenario::load(&args.config)
        .with_context(|| format!("loading scenario {}", args.config.display()))?;
    if let Some(seed) = args.seed {
        scenario.seeds = vec![seed];
    }
    Ok(scenario)
}

fn write_or_print(out: Option<&PathBuf>, body: &str) -> Result<()> {
    match out {
        Some(path) => std::fs::write(path, body)
            .with_context(|| format!("writing {}", path.display()))?,
        None => print!("{body}"),
    }
    Ok(())
}

fn print_summary(output: &ExperimentOutput) {
    for arm in ["config", "lori", "sssp"] {
        for sweep in output.sweeps(arm) {
            if let Some(mean) = output.mean_system_cost(arm, &sweep) {
                let secs = output
                    .mean_steered_decision_secs(&sweep)
                    .map(|s| format!(", {s:.4}s per steered decision"))
                    .unwrap_or_default();
                println!("{arm:>6}  sweep {sweep:>8}  mean system cost {mean:.6}{secs}");
            }
        }
    }
    if let Some(rate) = output.persuasion_rate() {
        println!("persuasion rate over steered decisions: {rate:.4}");
    }
}

fn finish(output: &ExperimentOutput, out_dir: &PathBuf) -> Result<()> {
    output
        .write_csvs(out_dir)
        .with_context(|| format!("writing CSVs under {}", out_dir.display()))?;
    print_summary(output);
    println!("wrote {} runs to {}", output.runs.len(), out_dir.display());
    Ok(())
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    match cli.command {
        Command::Graph {
            command: GraphCommand::Dump { network, out },
        } => {
            let net = load_network(&network)
                .with_context(|| format!("loading network {}", network.display()))?;
            let graph = ExpandedGraph::expand(&net)?;
            write_or_print(out.as_ref(), &graph.dump())
        }
        Command::Simulate {
            scenario,
            policy,
            verbose,
        } => {
            let scen = load_scenario(&scenario)?;
            let force = policy.map(|p| match p {
                PolicyArg::Lori => Policy::Lori,
                PolicyArg::Sssp => Policy::Sssp,
            });
            let output = run_plain(&scen, force)?;
            if verbose {
                for run in &output.runs {
                    for d in &run.report.decisions {
                        let objective = d
                            .objective
                            .map(|o| format!(" objective {o:.6}"))
                            .unwrap_or_default();
                        println!(
                            "seed {} tick {} traveler {} {:?} -> {}{} ({:.4}s)",
                            run.seed,
                            d.tick,
                            d.traveler.0,
                            d.policy,
                            output.graph.edge_label(d.chosen_edge),
                            objective,
                            d.duration_secs
                        );
                    }
                    println!(
                        "seed {}: system cost {:.6}, mean traveler cost {:.6}, {} finished",
                        run.seed,
                        run.report.system_cost,
                        run.report.mean_traveler_cost,
                        run.report.finished
                    );
                }
            }
            finish(&output, &scenario.out)
        }
        Command::Qre {
            game,
            rationality,
            out,
        } => {
            let text = std::fs::read_to_string(&game)
                .with_context(|| format!("reading {}", game.display()))?;
            let file: GameFile = toml::from_str(&text)?;
            let players = (0..file.strategy_counts.len()).map(TravelerId).collect();
            let game = NormalFormGame::new(players, file.strategy_counts, file.costs)?;
            let params = QreParams {
                target_alpha: rationality,
                ..QreParams::default()
            };
            let solution = solve_qre(&game, &params)?;
            let mut csv = String::from("alpha,player,strategy,probability\n");
            for (alpha, profile) in &solution.trace {
                for (p, probs) in profile.probs.iter().enumerate() {
                    for (s, prob) in probs.iter().enumerate() {
                        csv.push_str(&format!("{alpha},{p},{s},{prob}\n"));
                    }
                }
            }
            write_or_print(out.as_ref(), &csv)?;
            eprintln!(
                "traced {} points to alpha {rationality}, residual {:.3e}",
                solution.trace.len(),
                solution.residual
            );
            Ok(())
        }
        Command::OptimizeSignal { config, seed } => {
            let args = ScenarioArgs {
                config,
                seed,
                out: PathBuf::from("out"),
            };
            let scen = load_scenario(&args)?;
            let mut limited = scen;
            limited.seeds.truncate(1);
            let output = run_plain(&limited, None)?;
            let run = &output.runs[0];
            let Some(decision) = run
                .report
                .decisions
                .iter()
                .find(|d| d.policy == Policy::Lori)
            else {
                bail!("scenario never steers a traveler");
            };
            println!(
                "seed {} tick {} traveler {}",
                run.seed, decision.tick, decision.traveler.0
            );
            println!(
                "objective: identity start {} -> optimized {} ({} evaluations)",
                decision
                    .start_objective
                    .map(|v| format!("{v:.6}"))
                    .unwrap_or_else(|| "-".into()),
                decision
                    .objective
                    .map(|v| format!("{v:.6}"))
                    .unwrap_or_else(|| "-".into()),
                decision.evaluations
            );
            let rows: Vec<_> = run
                .report
                .signals
                .iter()
                .filter(|s| s.tick == decision.tick && s.traveler == decision.traveler)
                .collect();
            if rows.is_empty() {
                println!("emitted signal: identity on every edge");
            }
            let mut stdout = std::io::stdout().lock();
            let mut current = None;
            for row in rows {
                if current != Some(row.edge) {
                    writeln!(stdout, "edge {}:", output.graph.edge_label(row.edge))?;
                    current = Some(row.edge);
                }
                writeln!(
                    stdout,
                    "  row {} col {} p {:.6}",
                    row.row, row.col, row.probability
                )?;
            }
            Ok(())
        }
        Command::Bench { command } => match command {
            BenchCommand::Scenario1 {
                scenario,
                experiment,
            } => {
                let scen = load_scenario(&scenario)?;
                let output = match experiment {
                    1 => run_scenario1_experiment1(&scen)?,
                    2 => run_scenario1_experiment2(&scen)?,
                    3 => run_scenario1_experiment3(&scen)?,
                    _ => unreachable!("clap bounds the range"),
                };
                finish(&output, &scenario.out)
            }
            BenchCommand::Scenario2 {
                scenario,
                lori_travelers,
            } => {
                let scen = load_scenario(&scenario)?;
                let output = run_scenario2(&scen, &lori_travelers)?;
                finish(&output, &scenario.out)
            }
        },
    }
}
