//! Scenario files: a network reference plus run parameters and demand.
//!
//! A scenario TOML names the physical network file (resolved relative to
//! the scenario file's directory), cost and solver parameters, and the
//! demand, which is either an explicit `[[travelers]]` list or a seeded
//! random `[demand]` draw. `rationality` and `logit_sign` are the
//! canonical knobs and override the matching `[qre]` fields.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Deserialize;

use crate::cost::{AttributeScaling, BprParams, CostModel, WeightProfile};
use crate::error::Error;
use crate::graph::{ExpandedGraph, LocationId, PathOpts, Place, PhysicalNetwork};
use crate::optimizer::OptimizerParams;
use crate::qre::QreParams;
use crate::sim::{BeliefPrior, ChoiceRule, Policy, RunSettings, TravelerSetup};
use crate::sssp::SsspPolicy;
use crate::state::{Tick, TravelerId};
use crate::Result;

/// Read a physical network description from a TOML file.
pub fn load_network(path: &Path) -> Result<PhysicalNetwork> {
    let text = std::fs::read_to_string(path)?;
    Ok(toml::from_str(&text)?)
}

fn default_max_hops() -> usize {
    PathOpts::default().max_hops
}

fn default_true() -> bool {
    true
}

fn default_window() -> Tick {
    10
}

fn default_rationality() -> f64 {
    1.0
}

fn default_seeds() -> Vec<u64> {
    vec![0]
}

fn default_choice() -> ChoiceRule {
    ChoiceRule::Sample
}

fn default_prior() -> BeliefPrior {
    BeliefPrior::Observed
}

fn default_policy() -> Policy {
    Policy::Lori
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
enum LogitSign {
    Negative,
    Positive,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct TravelerEntry {
    origin: String,
    destination: String,
    #[serde(default)]
    start_tick: Tick,
    /// Falls back to the scenario-wide `traveler_weights`.
    weights: Option<Vec<f64>>,
    #[serde(default = "default_policy")]
    policy: Policy,
}

/// Seeded random demand: `count` travelers with uniform distinct
/// origin/destination pairs and uniform start ticks in `[0, start_max]`.
/// The first `lori` travelers are steered and start at tick 0; the draw
/// sequence itself does not depend on `lori`, so every policy split sees
/// the same population for a given seed.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct DemandSpec {
    count: usize,
    #[serde(default)]
    start_max: Tick,
    #[serde(default)]
    lori: usize,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScenarioFile {
    name: String,
    network: PathBuf,
    horizon: Tick,
    #[serde(default = "default_max_hops")]
    max_hops: usize,
    #[serde(default = "default_true")]
    no_double_switch: bool,
    #[serde(default = "default_window")]
    occupancy_window: Tick,
    #[serde(default = "default_rationality")]
    rationality: f64,
    logit_sign: Option<LogitSign>,
    #[serde(default = "default_choice")]
    choice: ChoiceRule,
    #[serde(default = "default_prior")]
    prior: BeliefPrior,
    future_horizon: Option<Tick>,
    #[serde(default = "default_seeds")]
    seeds: Vec<u64>,
    #[serde(default)]
    normalization: AttributeScaling,
    #[serde(default)]
    bpr: BprParams,
    system_weights: Vec<f64>,
    traveler_weights: Vec<f64>,
    #[serde(default)]
    qre: QreParams,
    #[serde(default)]
    optimizer: OptimizerParams,
    #[serde(default)]
    sssp: SsspPolicy,
    #[serde(default)]
    travelers: Vec<TravelerEntry>,
    demand: Option<DemandSpec>,
}

/// A loaded scenario: expanded graph plus a settings template. Explicit
/// demand is resolved once at load; random demand is drawn per seed.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub name: String,
    pub graph: Arc<ExpandedGraph>,
    pub seeds: Vec<u64>,
    pub default_weights: WeightProfile,
    pub template: RunSettings,
    demand: Option<ResolvedDemand>,
}

#[derive(Debug, Clone)]
struct ResolvedDemand {
    count: usize,
    start_max: Tick,
    lori: usize,
}

impl Scenario {
    pub fn load(path: &Path) -> Result<Scenario> {
        let text = std::fs::read_to_string(path)?;
        let file: ScenarioFile = toml::from_str(&text)?;
        let base = path.parent().unwrap_or_else(|| Path::new("."));
        let net = load_network(&base.join(&file.network))?;
        let graph = Arc::new(ExpandedGraph::expand(&net)?);
        Scenario::resolve(file, graph)
    }

    fn resolve(file: ScenarioFile, graph: Arc<ExpandedGraph>) -> Result<Scenario> {
        if file.horizon <= 0 {
            return Err(Error::Config("horizon must be positive".into()));
        }
        if file.occupancy_window < 0 {
            return Err(Error::Config("occupancy_window must be >= 0".into()));
        }
        if !file.rationality.is_finite() || file.rationality < 0.0 {
            return Err(Error::Config(format!(
                "rationality {} outside [0, inf)",
                file.rationality
            )));
        }
        if file.seeds.is_empty() {
            return Err(Error::Config("seeds list is empty".into()));
        }
        file.bpr.validate()?;
        file.normalization.validate()?;
        let system_weights = WeightProfile::new(file.system_weights)?;
        let default_weights = WeightProfile::new(file.traveler_weights)?;

        let mut qre = file.qre;
        qre.target_alpha = file.rationality;
        if let Some(sign) = file.logit_sign {
            qre.logit_sign = match sign {
                LogitSign::Negative => -1.0,
                LogitSign::Positive => 1.0,
            };
        }
        qre.validate()?;
        file.optimizer.validate()?;

        let path_opts = PathOpts {
            max_hops: file.max_hops,
            no_double_switch: file.no_double_switch,
        };

        let demand = match (&file.demand, file.travelers.is_empty()) {
            (Some(_), false) => {
                return Err(Error::Config(
                    "give either [[travelers]] or [demand], not both".into(),
                ))
            }
            (None, true) => {
                return Err(Error::Config(
                    "scenario declares no travelers and no demand".into(),
                ))
            }
            (Some(spec), true) => {
                if spec.count == 0 {
                    return Err(Error::Config("demand count must be positive".into()));
                }
                if spec.lori > spec.count {
                    return Err(Error::Config(format!(
                        "demand steers {} of {} travelers",
                        spec.lori, spec.count
                    )));
                }
                if spec.start_max < 0 {
                    return Err(Error::Config("demand start_max must be >= 0".into()));
                }
                Some(ResolvedDemand {
                    count: spec.count,
                    start_max: spec.start_max,
                    lori: spec.lori,
                })
            }
            (None, false) => None,
        };

        let mut travelers = Vec::with_capacity(file.travelers.len());
        for (i, entry) in file.travelers.iter().enumerate() {
            let origin = graph.location_id(&entry.origin)?;
            let destination = graph.location_id(&entry.destination)?;
            let weights = match &entry.weights {
                Some(w) => WeightProfile::new(w.clone())?,
                None => default_weights.clone(),
            };
            if entry.start_tick < 0 || entry.start_tick >= file.horizon {
                return Err(Error::Config(format!(
                    "traveler {i} starts at {} outside [0, {})",
                    entry.start_tick, file.horizon
                )));
            }
            // Rejects unroutable travelers at load rather than mid-run.
            graph.enumerate_paths(
                TravelerId(i),
                Place::Location(origin),
                destination,
                &path_opts,
            )?;
            travelers.push(TravelerSetup {
                origin,
                destination,
                start_tick: entry.start_tick,
                weights,
                policy: entry.policy,
            });
        }

        let template = RunSettings {
            cost: CostModel {
                bpr: file.bpr,
                scaling: file.normalization,
            },
            horizon: file.horizon,
            path_opts,
            window: file.occupancy_window,
            qre,
            optimizer: file.optimizer,
            choice: file.choice,
            prior: file.prior,
            system_weights,
            future_horizon: file.future_horizon,
            sssp: file.sssp,
            travelers,
            seed: file.seeds[0],
        };

        Ok(Scenario {
            name: file.name,
            graph,
            seeds: file.seeds,
            default_weights,
            template,
            demand,
        })
    }

    pub fn has_generated_demand(&self) -> bool {
        self.demand.is_some()
    }

    /// Number of steered travelers the scenario declares.
    pub fn steered_count(&self) -> usize {
        match &self.demand {
            Some(d) => d.lori,
            None => self
                .template
                .travelers
                .iter()
                .filter(|t| t.policy == Policy::Lori)
                .count(),
        }
    }

    /// Settings for one run, drawing random demand when configured.
    pub fn settings_for_seed(&self, seed: u64) -> Result<RunSettings> {
        let lori = self.demand.as_ref().map(|d| d.lori).unwrap_or(0);
        self.settings_with_steered(seed, lori)
    }

    /// Settings for one run with `lori` steered travelers; only valid for
    /// scenarios with generated demand (explicit lists fix their policies).
    pub fn settings_with_steered(&self, seed: u64, lori: usize) -> Result<RunSettings> {
        let mut settings = self.template.clone();
        settings.seed = seed;
        if let Some(demand) = &self.demand {
            if lori > demand.count {
                return Err(Error::Config(format!(
                    "cannot steer {lori} of {} travelers",
                    demand.count
                )));
            }
            settings.travelers = self.draw_travelers(demand, lori, seed)?;
        }
        Ok(settings)
    }

    fn draw_travelers(
        &self,
        demand: &ResolvedDemand,
        lori: usize,
        seed: u64,
    ) -> Result<Vec<TravelerSetup>> {
        // Distinct stream from the run RNG so choice sampling and demand
        // never alias.
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9E37_79B9_7F4A_7C15);
        let locations = self.graph.location_names.len();
        if locations < 2 {
            return Err(Error::Config("network has fewer than two locations".into()));
        }
        let mut travelers = Vec::with_capacity(demand.count);
        for i in 0..demand.count {
            let mut attempts = 0;
            let (origin, destination) = loop {
                let o = LocationId(rng.gen_range(0..locations));
                let d = LocationId(rng.gen_range(0..locations));
                if o != d
                    && self
                        .graph
                        .enumerate_paths(
                            TravelerId(i),
                            Place::Location(o),
                            d,
                            &self.template.path_opts,
                        )
                        .is_ok()
                {
                    break (o, d);
                }
                attempts += 1;
                if attempts > 1000 {
                    return Err(Error::EmptyPathSet(i));
                }
            };
            let drawn_start = if demand.start_max > 0 {
                rng.gen_range(0..=demand.start_max)
            } else {
                0
            };
            let steered = i < lori;
            travelers.push(TravelerSetup {
                origin,
                destination,
                // Steered travelers all decide at the opening tick.
                start_tick: if steered { 0 } else { drawn_start },
                weights: self.default_weights.clone(),
                policy: if steered { Policy::Lori } else { Policy::Sssp },
            });
        }
        Ok(travelers)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write_file(dir: &Path, name: &str, body: &str) -> PathBuf {
        let path = dir.join(name);
        let mut f = std::fs::File::create(&path).unwrap();
        f.write_all(body.as_bytes()).unwrap();
        path
    }

    const NETWORK: &str = r#"
locations = ["a", "b", "c"]
default_capacity = 3

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
mode = "walk"
from = "a"
to = "c"
fixed_time = 6.0

[[edges]]
mode = "walk"
from = "c"
to = "a"
fixed_time = 6.0
"#;

    const SCENARIO: &str = r#"
name = "toy"
network = "net.toml"
horizon = 40
rationality = 1.5
seeds = [1, 2]
system_weights = [0.7, 0.3]
traveler_weights = [0.5, 0.5]

[[travelers]]
origin = "a"
destination = "c"
policy = "lori"

[[travelers]]
origin = "c"
destination = "a"
start_tick = 3
weights = [1.0, 0.0]
policy = "sssp"
"#;

    #[test]
    fn loads_explicit_scenario() {
        let dir = tempfile::tempdir().unwrap();
        write_file(dir.path(), "net.toml", NETWORK);
        let path = write_file(dir.path(), "scen.toml", SCENARIO);
        let scenario = Scenario::load(&path).unwrap();
        assert_eq!(scenario.name, "toy");
        assert_eq!(scenario.seeds, vec![1, 2]);
        assert_eq!(scenario.template.qre.target_alpha, 1.5);
        assert_eq!(scenario.template.window, 10);
        assert_eq!(scenario.steered_count(), 1);
        let settings = scenario.settings_for_seed(7).unwrap();
        assert_eq!(settings.seed, 7);
        assert_eq!(settings.travelers.len(), 2);
        assert_eq!(settings.travelers[1].start_tick, 3);
        assert_eq!(settings.travelers[1].policy, Policy::Sssp);
    }

    #[test]
    fn rejects_unroutable_traveler() {
        let dir = tempfile::tempdir().unwrap();
        // Drop the return walk so c has no outgoing edges at all.
        let one_way = NETWORK.replace(
            "[[edges]]\nmode = \"walk\"\nfrom = \"c\"\nto = \"a\"\nfixed_time = 6.0\n",
            "",
        );
        assert!(one_way.len() < NETWORK.len());
        write_file(dir.path(), "net.toml", &one_way);
        let path = write_file(dir.path(), "scen.toml", SCENARIO);
        match Scenario::load(&path) {
            Err(Error::EmptyPathSet(1)) => {}
            other => panic!("expected EmptyPathSet(1), got {other:?}"),
        }
    }

    #[test]
    fn generated_demand_is_seed_stable_and_policy_split_invariant() {
        let dir = tempfile::tempdir().unwrap();
        write_file(dir.path(), "net.toml", NETWORK);
        let scen = r#"
name = "drawn"
network = "net.toml"
horizon = 60
system_weights = [0.5, 0.5]
traveler_weights = [0.5, 0.5]

[demand]
count = 8
start_max = 20
lori = 2
"#;
        let path = write_file(dir.path(), "scen.toml", scen);
        let scenario = Scenario::load(&path).unwrap();
        assert!(scenario.has_generated_demand());
        assert_eq!(scenario.steered_count(), 2);

        let a = scenario.settings_for_seed(11).unwrap();
        let b = scenario.settings_for_seed(11).unwrap();
        let pairs =
            |s: &RunSettings| -> Vec<_> { s.travelers.iter().map(|t| (t.origin, t.destination)).collect() };
        assert_eq!(pairs(&a), pairs(&b));
        assert_eq!(a.travelers.len(), 8);
        assert!(a.travelers[..2].iter().all(|t| t.policy == Policy::Lori));
        assert!(a.travelers[..2].iter().all(|t| t.start_tick == 0));
        assert!(a.travelers[2..].iter().all(|t| t.policy == Policy::Sssp));
        assert!(a
            .travelers
            .iter()
            .all(|t| (0..=20).contains(&t.start_tick)));

        // Same population regardless of how many travelers are steered.
        let c = scenario.settings_with_steered(11, 5).unwrap();
        assert_eq!(pairs(&a), pairs(&c));
        assert!(c.travelers[..5].iter().all(|t| t.policy == Policy::Lori));

        // A different seed redraws the population.
        let d = scenario.settings_for_seed(12).unwrap();
        assert_ne!(pairs(&a), pairs(&d));
    }

    #[test]
    fn rejects_conflicting_demand_forms() {
        let dir = tempfile::tempdir().unwrap();
        write_file(dir.path(), "net.toml", NETWORK);
        let scen = format!("{SCENARIO}\n[demand]\ncount = 4\n");
        let path = write_file(dir.path(), "scen.toml", &scen);
        match Scenario::load(&path) {
            Err(Error::Config(msg)) => assert!(msg.contains("not both")),
            other => panic!("expected config error, got {other:?}"),
        }
    }
}
