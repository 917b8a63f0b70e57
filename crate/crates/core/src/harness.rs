//! Experiment sweeps over a scenario: weight grids, policy arms and
//! steered-count ladders, with CSV emission.
//!
//! Every sweep runs both arms on the identical demand and seed so the
//! comparison isolates the policy. Runs are independent and execute on a
//! worker pool sized by the `LORI_WORKERS` environment variable; results
//! are collected in plan order, so output files do not depend on
//! scheduling. Wall-clock figures go to `runtime.csv` only, keeping
//! `report.csv`, `timeline.csv` and `signals.csv` byte-stable across
//! reruns of the same configuration.

use std::io::{BufWriter, Write};
use std::path::Path;
use std::sync::Arc;
use std::time::Instant;

use rayon::prelude::*;

use crate::config::Scenario;
use crate::cost::WeightProfile;
use crate::error::Error;
use crate::graph::ExpandedGraph;
use crate::sim::{ChoiceRule, Policy, RunReport, RunSettings, Simulation};
use crate::Result;

/// Traveler time-weight grid of the first sweep.
pub const EXPERIMENT1_GRID: [f64; 5] = [0.0, 0.25, 0.5, 0.75, 1.0];

/// Fixed per-traveler time weights of the second sweep.
pub const EXPERIMENT2_TRAVELER_WEIGHTS: [f64; 3] = [0.8, 0.6, 0.5];

/// System time weight the sweep templates pin for experiments 1 and 3.
pub const TEMPLATE_SYSTEM_TIME_WEIGHT: f64 = 0.7;

/// One planned run within a sweep.
#[derive(Debug, Clone)]
pub struct RunSpec {
    pub experiment: &'static str,
    pub arm: &'static str,
    pub sweep: String,
    pub seed: u64,
    pub settings: RunSettings,
}

/// A finished run plus its wall-clock cost.
#[derive(Debug)]
pub struct RunOutcome {
    pub experiment: &'static str,
    pub arm: &'static str,
    pub sweep: String,
    pub seed: u64,
    pub steered: usize,
    pub report: RunReport,
    pub wall_secs: f64,
}

/// All runs of one sweep, in plan order.
#[derive(Debug)]
pub struct ExperimentOutput {
    pub scenario: String,
    pub graph: Arc<ExpandedGraph>,
    pub runs: Vec<RunOutcome>,
}

/// Thread pool sized by `LORI_WORKERS` (defaults to all cores).
pub fn worker_pool() -> Result<rayon::ThreadPool> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Ok(raw) = std::env::var("LORI_WORKERS") {
        let n: usize = raw
            .parse()
            .map_err(|_| Error::Config(format!("LORI_WORKERS `{raw}` is not a count")))?;
        if n == 0 {
            return Err(Error::Config("LORI_WORKERS must be positive".into()));
        }
        builder = builder.num_threads(n);
    }
    builder
        .build()
        .map_err(|e| Error::Internal(format!("thread pool: {e}")))
}

/// Execute one spec and time the whole run.
pub fn execute_run(graph: &Arc<ExpandedGraph>, spec: RunSpec) -> Result<RunOutcome> {
    let steered = spec
        .settings
        .travelers
        .iter()
        .filter(|t| t.policy == Policy::Lori)
        .count();
    let started = Instant::now();
    let sim = Simulation::new(graph.clone(), spec.settings)?;
    let report = sim.run()?;
    Ok(RunOutcome {
        experiment: spec.experiment,
        arm: spec.arm,
        sweep: spec.sweep,
        seed: spec.seed,
        steered,
        report,
        wall_secs: started.elapsed().as_secs_f64(),
    })
}

fn execute_all(scenario: &Scenario, specs: Vec<RunSpec>) -> Result<ExperimentOutput> {
    let pool = worker_pool()?;
    let graph = scenario.graph.clone();
    let runs: Result<Vec<RunOutcome>> = pool.install(|| {
        specs
            .into_par_iter()
            .map(|spec| execute_run(&graph, spec))
            .collect()
    });
    Ok(ExperimentOutput {
        scenario: scenario.name.clone(),
        graph,
        runs: runs?,
    })
}

fn check_template(ok: bool, what: &str) -> Result<()> {
    if ok {
        Ok(())
    } else {
        Err(Error::Config(format!("experiment template mismatch: {what}")))
    }
}

fn require_explicit_steered(scenario: &Scenario) -> Result<()> {
    check_template(
        !scenario.has_generated_demand(),
        "sweep needs an explicit traveler list",
    )?;
    check_template(
        !scenario.template.travelers.is_empty(),
        "scenario has no travelers",
    )?;
    check_template(
        scenario
            .template
            .travelers
            .iter()
            .all(|t| t.policy == Policy::Lori),
        "steered arm expects every configured traveler on the steered policy",
    )
}

fn system_time_weight(settings: &RunSettings) -> f64 {
    settings.system_weights.as_slice()[0]
}

fn set_arm(settings: &mut RunSettings, arm: &str) {
    if arm == "sssp" {
        for t in &mut settings.travelers {
            t.policy = Policy::Sssp;
        }
    }
}

/// Sweep a common traveler time weight over both arms with the system
/// profile pinned at its template value. Cost curves are deterministic:
/// travelers commit their modal path.
pub fn run_scenario1_experiment1(scenario: &Scenario) -> Result<ExperimentOutput> {
    require_explicit_steered(scenario)?;
    check_template(
        (system_time_weight(&scenario.template) - TEMPLATE_SYSTEM_TIME_WEIGHT).abs() <= 1e-9,
        "system time weight is pinned for this sweep",
    )?;
    let mut specs = Vec::new();
    for &w in &EXPERIMENT1_GRID {
        let weights = WeightProfile::time_co(w)?;
        for arm in ["lori", "sssp"] {
            for &seed in &scenario.seeds {
                let mut settings = scenario.settings_for_seed(seed)?;
                settings.choice = ChoiceRule::Mode;
                for t in &mut settings.travelers {
                    t.weights = weights.clone();
                }
                set_arm(&mut settings, arm);
                specs.push(RunSpec {
                    experiment: "1",
                    arm,
                    sweep: format!("{w}"),
                    seed,
                    settings,
                });
            }
        }
    }
    execute_all(scenario, specs)
}

/// Sweep the system time weight over {0, 0.1, ..., 1.0} with the three
/// travelers' own time weights fixed at 0.8 / 0.6 / 0.5.
pub fn run_scenario1_experiment2(scenario: &Scenario) -> Result<ExperimentOutput> {
    require_explicit_steered(scenario)?;
    check_template(
        scenario.template.travelers.len() == EXPERIMENT2_TRAVELER_WEIGHTS.len(),
        "this sweep fixes weights for exactly three travelers",
    )?;
    let mut specs = Vec::new();
    for i in 0..=10 {
        let w = i as f64 / 10.0;
        let system = WeightProfile::time_co(w)?;
        for arm in ["lori", "sssp"] {
            for &seed in &scenario.seeds {
                let mut settings = scenario.settings_for_seed(seed)?;
                settings.choice = ChoiceRule::Mode;
                settings.system_weights = system.clone();
                for (t, &tw) in settings
                    .travelers
                    .iter_mut()
                    .zip(&EXPERIMENT2_TRAVELER_WEIGHTS)
                {
                    t.weights = WeightProfile::time_co(tw)?;
                }
                set_arm(&mut settings, arm);
                specs.push(RunSpec {
                    experiment: "2",
                    arm,
                    sweep: format!("{w}"),
                    seed,
                    settings,
                });
            }
        }
    }
    execute_all(scenario, specs)
}

/// Persuasion sweep: one steered traveler per routable ordered location
/// pair, time weight 0.5, path sampled from the equilibrium mixture so
/// the rate estimates the steered-choice probability.
pub fn run_scenario1_experiment3(scenario: &Scenario) -> Result<ExperimentOutput> {
    check_template(
        !scenario.has_generated_demand(),
        "sweep needs an explicit network scenario",
    )?;
    let graph = &scenario.graph;
    let weights = WeightProfile::time_co(0.5)?;
    let mut specs = Vec::new();
    for o in 0..graph.location_names.len() {
        for d in 0..graph.location_names.len() {
            if o == d {
                continue;
            }
            let origin = crate::graph::LocationId(o);
            let destination = crate::graph::LocationId(d);
            if graph
                .enumerate_paths(
                    crate::state::TravelerId(0),
                    crate::graph::Place::Location(origin),
                    destination,
                    &scenario.template.path_opts,
                )
                .is_err()
            {
                continue;
            }
            for &seed in &scenario.seeds {
                let mut settings = scenario.settings_for_seed(seed)?;
                settings.choice = ChoiceRule::Sample;
                settings.travelers = vec![crate::sim::TravelerSetup {
                    origin,
                    destination,
                    start_tick: 0,
                    weights: weights.clone(),
                    policy: Policy::Lori,
                }];
                specs.push(RunSpec {
                    experiment: "3",
                    arm: "lori",
                    sweep: format!(
                        "{}->{}",
                        graph.location_names[o], graph.location_names[d]
                    ),
                    seed,
                    settings,
                });
            }
        }
    }
    check_template(!specs.is_empty(), "network has no routable location pair")?;
    execute_all(scenario, specs)
}

/// Steered-count ladder on generated demand: an all-baseline arm at
/// sweep `0`, then a steered arm per requested count. Every arm sees the
/// identical population for a given seed.
pub fn run_scenario2(scenario: &Scenario, steered_counts: &[usize]) -> Result<ExperimentOutput> {
    check_template(
        scenario.has_generated_demand(),
        "ladder needs generated demand",
    )?;
    check_template(!steered_counts.is_empty(), "no steered counts requested")?;
    let mut specs = Vec::new();
    for &seed in &scenario.seeds {
        let mut settings = scenario.settings_with_steered(seed, 0)?;
        settings.choice = ChoiceRule::Mode;
        specs.push(RunSpec {
            experiment: "s2",
            arm: "sssp",
            sweep: "0".into(),
            seed,
            settings,
        });
    }
    for &x in steered_counts {
        for &seed in &scenario.seeds {
            let mut settings = scenario.settings_with_steered(seed, x)?;
            settings.choice = ChoiceRule::Mode;
            specs.push(RunSpec {
                experiment: "s2",
                arm: "lori",
                sweep: format!("{x}"),
                seed,
                settings,
            });
        }
    }
    execute_all(scenario, specs)
}

/// Run the scenario as configured, one run per seed, optionally forcing
/// every traveler onto one policy.
pub fn run_plain(scenario: &Scenario, force: Option<Policy>) -> Result<ExperimentOutput> {
    let arm = match force {
        Some(Policy::Lori) => "lori",
        Some(Policy::Sssp) => "sssp",
        None => "config",
    };
    let mut specs = Vec::new();
    for &seed in &scenario.seeds {
        let mut settings = scenario.settings_for_seed(seed)?;
        if let Some(policy) = force {
            for t in &mut settings.travelers {
                t.policy = policy;
            }
        }
        specs.push(RunSpec {
            experiment: "simulate",
            arm,
            sweep: "-".into(),
            seed,
            settings,
        });
    }
    execute_all(scenario, specs)
}

impl ExperimentOutput {
    /// Mean system cost over seeds for one (arm, sweep) cell.
    pub fn mean_system_cost(&self, arm: &str, sweep: &str) -> Option<f64> {
        let costs: Vec<f64> = self
            .runs
            .iter()
            .filter(|r| r.arm == arm && r.sweep == sweep)
            .map(|r| r.report.system_cost)
            .collect();
        if costs.is_empty() {
            None
        } else {
            Some(costs.iter().sum::<f64>() / costs.len() as f64)
        }
    }

    /// Distinct sweep values of one arm, in plan order.
    pub fn sweeps(&self, arm: &str) -> Vec<String> {
        let mut seen = Vec::new();
        for r in &self.runs {
            if r.arm == arm && !seen.contains(&r.sweep) {
                seen.push(r.sweep.clone());
            }
        }
        seen
    }

    /// Fraction of steered decisions that followed the forecast optimum,
    /// pooled over every run; `None` when nothing was steered.
    pub fn persuasion_rate(&self) -> Option<f64> {
        let mut followed = 0usize;
        let mut total = 0usize;
        for run in &self.runs {
            for d in &run.report.decisions {
                if let Some(p) = d.persuaded {
                    total += 1;
                    if p {
                        followed += 1;
                    }
                }
            }
        }
        if total == 0 {
            None
        } else {
            Some(followed as f64 / total as f64)
        }
    }

    /// Mean wall-clock seconds per steered decision in one sweep cell.
    pub fn mean_steered_decision_secs(&self, sweep: &str) -> Option<f64> {
        let mut secs = 0.0;
        let mut n = 0usize;
        for run in self.runs.iter().filter(|r| r.sweep == sweep) {
            for d in &run.report.decisions {
                if d.policy == Policy::Lori {
                    secs += d.duration_secs;
                    n += 1;
                }
            }
        }
        if n == 0 {
            None
        } else {
            Some(secs / n as f64)
        }
    }

    /// Write `report.csv`, `timeline.csv`, `signals.csv` and
    /// `runtime.csv` under `dir`.
    pub fn write_csvs(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        self.write_report(&dir.join("report.csv"))?;
        self.write_timeline(&dir.join("timeline.csv"))?;
        self.write_signals(&dir.join("signals.csv"))?;
        self.write_runtime(&dir.join("runtime.csv"))
    }

    fn write_report(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(std::fs::File::create(path)?);
        writeln!(
            w,
            "scenario,experiment,arm,sweep,seed,steered,travelers,finished,decisions,evaluations,system_cost,mean_traveler_cost,persuasion_rate"
        )?;
        for r in &self.runs {
            let report = &r.report;
            let evals: usize = report.decisions.iter().map(|d| d.evaluations).sum();
            let persuasion = report
                .persuasion_rate
                .map(|p| p.to_string())
                .unwrap_or_default();
            writeln!(
                w,
                "{},{},{},{},{},{},{},{},{},{},{},{},{}",
                self.scenario,
                r.experiment,
                r.arm,
                r.sweep,
                r.seed,
                r.steered,
                report.traveler_costs.len(),
                report.finished,
                report.decisions.len(),
                evals,
                report.system_cost,
                report.mean_traveler_cost,
                persuasion
            )?;
        }
        w.flush()?;
        Ok(())
    }

    fn write_timeline(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(std::fs::File::create(path)?);
        writeln!(w, "scenario,experiment,arm,sweep,seed,tick,edge,label,count")?;
        for r in &self.runs {
            for &(tick, edge, count) in &r.report.timeline {
                writeln!(
                    w,
                    "{},{},{},{},{},{},{},{},{}",
                    self.scenario,
                    r.experiment,
                    r.arm,
                    r.sweep,
                    r.seed,
                    tick,
                    edge.0,
                    self.graph.edge_label(edge),
                    count
                )?;
            }
        }
        w.flush()?;
        Ok(())
    }

    fn write_signals(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(std::fs::File::create(path)?);
        writeln!(
            w,
            "scenario,experiment,arm,sweep,seed,tick,traveler,edge,row,col,probability"
        )?;
        for r in &self.runs {
            for s in &r.report.signals {
                writeln!(
                    w,
                    "{},{},{},{},{},{},{},{},{},{},{}",
                    self.scenario,
                    r.experiment,
                    r.arm,
                    r.sweep,
                    r.seed,
                    s.tick,
                    s.traveler.0,
                    s.edge.0,
                    s.row,
                    s.col,
                    s.probability
                )?;
            }
        }
        w.flush()?;
        Ok(())
    }

    fn write_runtime(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(std::fs::File::create(path)?);
        writeln!(
            w,
            "scenario,experiment,arm,sweep,seed,wall_secs,decisions,steered_decisions,decision_secs_total,steered_decision_secs_mean"
        )?;
        for r in &self.runs {
            let total: f64 = r.report.decisions.iter().map(|d| d.duration_secs).sum();
            let steered: Vec<f64> = r
                .report
                .decisions
                .iter()
                .filter(|d| d.policy == Policy::Lori)
                .map(|d| d.duration_secs)
                .collect();
            let steered_mean = if steered.is_empty() {
                String::new()
            } else {
                (steered.iter().sum::<f64>() / steered.len() as f64).to_string()
            };
            writeln!(
                w,
                "{},{},{},{},{},{},{},{},{},{}",
                self.scenario,
                r.experiment,
                r.arm,
                r.sweep,
                r.seed,
                r.wall_secs,
                r.report.decisions.len(),
                steered.len(),
                total,
                steered_mean
            )?;
        }
        w.flush()?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::path::PathBuf;

    fn toy_scenario(dir: &Path) -> Scenario {
        let net = r#"
locations = ["a", "b", "c"]

[[modes]]
name = "car"
kind = "road"

[[modes]]
name = "walk"
kind = "walk"

[[edges]]
mode = "car"
from = "a"
to = "b"
free_flow_time = 2.0
capacity = 2
length_km = 1.0

[[edges]]
mode = "car"
from = "b"
to = "c"
free_flow_time = 2.0
capacity = 2
length_km = 1.0

[[edges]]
mode = "car"
from = "b"
to = "a"
free_flow_time = 2.0
capacity = 2
length_km = 1.0

[[edges]]
mode = "car"
from = "c"
to = "b"
free_flow_time = 2.0
capacity = 2
length_km = 1.0

[[edges]]
mode = "walk"
from = "a"
to = "c"
fixed_time = 7.0

[[edges]]
mode = "walk"
from = "c"
to = "a"
fixed_time = 7.0
"#;
        let scen = r#"
name = "toy"
network = "net.toml"
horizon = 60
max_hops = 4
rationality = 1.0
seeds = [1, 2]
system_weights = [0.7, 0.3]
traveler_weights = [0.5, 0.5]

[optimizer]
max_iterations = 2
eval_budget = 8

[[travelers]]
origin = "a"
destination = "c"
policy = "lori"

[[travelers]]
origin = "c"
destination = "a"
policy = "lori"

[[travelers]]
origin = "b"
destination = "c"
policy = "lori"
"#;
        let write = |name: &str, body: &str| -> PathBuf {
            let p = dir.join(name);
            std::fs::File::create(&p)
                .unwrap()
                .write_all(body.as_bytes())
                .unwrap();
            p
        };
        write("net.toml", net);
        let path = write("scen.toml", scen);
        Scenario::load(&path).unwrap()
    }

    #[test]
    fn experiment1_covers_grid_arms_and_seeds() {
        let dir = tempfile::tempdir().unwrap();
        let scenario = toy_scenario(dir.path());
        let out = run_scenario1_experiment1(&scenario).unwrap();
        assert_eq!(out.runs.len(), EXPERIMENT1_GRID.len() * 2 * 2);
        assert_eq!(out.sweeps("lori").len(), EXPERIMENT1_GRID.len());
        for sweep in out.sweeps("lori") {
            assert!(out.mean_system_cost("lori", &sweep).unwrap().is_finite());
            assert!(out.mean_system_cost("sssp", &sweep).unwrap().is_finite());
        }
        // The baseline arm never runs the signal machinery.
        assert!(out
            .runs
            .iter()
            .filter(|r| r.arm == "sssp")
            .all(|r| r.report.signals.is_empty() && r.report.persuasion_rate.is_none()));
    }

    #[test]
    fn csv_outputs_are_byte_identical_across_reruns() {
        let dir = tempfile::tempdir().unwrap();
        let scenario = toy_scenario(dir.path());
        let out1 = run_plain(&scenario, None).unwrap();
        let out2 = run_plain(&scenario, None).unwrap();
        let d1 = dir.path().join("one");
        let d2 = dir.path().join("two");
        out1.write_csvs(&d1).unwrap();
        out2.write_csvs(&d2).unwrap();
        for file in ["report.csv", "timeline.csv", "signals.csv"] {
            let a = std::fs::read(d1.join(file)).unwrap();
            let b = std::fs::read(d2.join(file)).unwrap();
            assert_eq!(a, b, "{file} differs between identical reruns");
            assert!(!a.is_empty());
        }
        let report = std::fs::read_to_string(d1.join("report.csv")).unwrap();
        assert_eq!(report.lines().count(), 1 + out1.runs.len());
    }

    #[test]
    fn experiment3_persuasion_rate_counts_every_steered_decision() {
        let dir = tempfile::tempdir().unwrap();
        let scenario = toy_scenario(dir.path());
        let out = run_scenario1_experiment3(&scenario).unwrap();
        // 6 ordered pairs x 2 seeds, one steered traveler each.
        assert_eq!(out.runs.len(), 12);
        let rate = out.persuasion_rate().unwrap();
        assert!((0.0..=1.0).contains(&rate));
        assert!(out
            .runs
            .iter()
            .all(|r| r.report.decisions.iter().filter(|d| d.persuaded.is_some()).count() >= 1));
    }

    #[test]
    fn template_mismatch_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let scenario = toy_scenario(dir.path());
        match run_scenario2(&scenario, &[1]) {
            Err(Error::Config(msg)) => assert!(msg.contains("generated demand")),
            other => panic!("expected template mismatch, got {other:?}"),
        }
    }
}
