//! Tick-driven simulation of one run: spawn travelers, let the steered
//! ones play the signaling game and the baseline ones follow shortest
//! paths, advance traversals, and account the realized system cost.
//!
//! Active travelers decide in ascending id order within a tick. A steered
//! decision prices the joint path game among all still-undecided steered
//! travelers, searches a signal for the deciding traveler only, re-solves
//! the equilibrium and commits the first edge of the chosen path.

use std::sync::Arc;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::cost::{CostModel, WeightProfile};
use crate::error::Error;
use crate::graph::{EdgeId, ExpandedGraph, LocationId, PathOpts, PathSet, Place};
use crate::optimizer::{
    build_cost_matrix, build_presence_cache, optimize_signal, system_optimal_path,
    DecisionContext, OptimizerParams, SystemObjective,
};
use crate::qre::{solve_qre, QreParams};
use crate::signal::Belief;
use crate::sssp::{shortest_route, SsspPolicy};
use crate::state::{NetworkState, Position, Tick, TravelerId};
use crate::Result;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Policy {
    Lori,
    Sssp,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ChoiceRule {
    /// Sample the path from the equilibrium mixture.
    Sample,
    /// Commit the modal path (ties to the lowest index).
    Mode,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BeliefPrior {
    /// Point mass at the exact current count of every edge.
    Observed,
    /// Uniform over each edge's occupancy alphabet.
    Uniform,
}

#[derive(Debug, Clone)]
pub struct TravelerSetup {
    pub origin: LocationId,
    pub destination: LocationId,
    pub start_tick: Tick,
    pub weights: WeightProfile,
    pub policy: Policy,
}

/// Everything one run needs besides the expanded graph.
#[derive(Debug, Clone)]
pub struct RunSettings {
    pub cost: CostModel,
    pub horizon: Tick,
    pub path_opts: PathOpts,
    pub window: Tick,
    pub qre: QreParams,
    pub optimizer: OptimizerParams,
    pub choice: ChoiceRule,
    pub prior: BeliefPrior,
    pub system_weights: WeightProfile,
    /// Forecast depth; `None` doubles the slowest remaining free-flow trip.
    pub future_horizon: Option<Tick>,
    pub sssp: SsspPolicy,
    pub travelers: Vec<TravelerSetup>,
    pub seed: u64,
}

#[derive(Debug, Clone)]
pub struct DecisionRecord {
    pub tick: Tick,
    pub traveler: TravelerId,
    pub policy: Policy,
    pub chosen_edge: EdgeId,
    /// Whether the chosen path matched the forecast-optimal one; steered
    /// decisions only.
    pub persuaded: Option<bool>,
    /// Objective of the identity signal before optimizing; steered only.
    pub start_objective: Option<f64>,
    /// Objective achieved by the emitted signal; steered only.
    pub objective: Option<f64>,
    pub duration_secs: f64,
    pub evaluations: usize,
}

#[derive(Debug, Clone)]
pub struct SignalLogRow {
    pub tick: Tick,
    pub traveler: TravelerId,
    pub edge: EdgeId,
    pub row: usize,
    pub col: usize,
    pub probability: f64,
}

#[derive(Debug, Clone)]
pub struct RunReport {
    pub seed: u64,
    pub system_cost: f64,
    pub traveler_costs: Vec<f64>,
    pub mean_traveler_cost: f64,
    pub decisions: Vec<DecisionRecord>,
    /// Fraction of steered decisions that followed the forecast optimum.
    pub persuasion_rate: Option<f64>,
    /// (tick, edge, count) rows for occupied edges.
    pub timeline: Vec<(Tick, EdgeId, u32)>,
    pub signals: Vec<SignalLogRow>,
    pub finished: usize,
}

pub struct Simulation {
    graph: Arc<ExpandedGraph>,
    settings: RunSettings,
    state: NetworkState,
    /// Remaining planned edges per traveler (beyond the one being traversed).
    plans: Vec<Vec<EdgeId>>,
    rng: ChaCha8Rng,
    realized: f64,
    decisions: Vec<DecisionRecord>,
    timeline: Vec<(Tick, EdgeId, u32)>,
    signals: Vec<SignalLogRow>,
}

impl Simulation {
    pub fn new(graph: Arc<ExpandedGraph>, settings: RunSettings) -> Result<Self> {
        if settings.travelers.is_empty() {
            return Err(Error::Config("run has no travelers".into()));
        }
        if settings.horizon < 0 {
            return Err(Error::Config("horizon must be nonnegative".into()));
        }
        for t in &settings.travelers {
            if t.origin == t.destination {
                return Err(Error::Config(
                    "traveler origin equals destination".into(),
                ));
            }
        }
        let demand: Vec<(LocationId, LocationId, Tick)> = settings
            .travelers
            .iter()
            .map(|t| (t.origin, t.destination, t.start_tick))
            .collect();
        let state = NetworkState::new(&graph, &demand);
        let n = settings.travelers.len();
        let rng = ChaCha8Rng::seed_from_u64(settings.seed);
        Ok(Simulation {
            graph,
            settings,
            state,
            plans: vec![Vec::new(); n],
            rng,
            realized: 0.0,
            decisions: Vec::new(),
            timeline: Vec::new(),
            signals: Vec::new(),
        })
    }

    pub fn run(mut self) -> Result<RunReport> {
        let horizon = self.settings.horizon;
        let mut t = 0;
        loop {
            self.state.advance(&self.graph, t)?;
            self.state.activate_due();
            self.state.check_conservation()?;
            let actives = self.state.active_travelers();
            for id in actives {
                if !self.state.is_active(id) {
                    continue;
                }
                match self.settings.travelers[id.0].policy {
                    Policy::Sssp => self.decide_sssp(id)?,
                    Policy::Lori => self.decide_lori(id)?,
                }
            }
            self.state.check_conservation()?;
            let tick_cost = self.system_objective(0).tick_cost(
                &self.graph,
                &self.settings.cost,
                self.state.edge_counts(),
            )?;
            self.realized += tick_cost;
            for (e, &c) in self.state.edge_counts().iter().enumerate() {
                if c > 0 {
                    self.timeline.push((t, EdgeId(e), c));
                }
            }
            if t == horizon {
                break;
            }
            // Once everyone is done no counts can change; account the
            // remaining ticks analytically.
            if self.state.all_finished() {
                let empty_tick = self.system_objective(0).tick_cost(
                    &self.graph,
                    &self.settings.cost,
                    self.state.edge_counts(),
                )?;
                self.realized += empty_tick * (horizon - t) as f64;
                break;
            }
            t += 1;
        }
        self.finish()
    }

    fn finish(self) -> Result<RunReport> {
        let mut traveler_costs = Vec::with_capacity(self.settings.travelers.len());
        for (i, setup) in self.settings.travelers.iter().enumerate() {
            traveler_costs.push(self.state.realized_cost(
                &self.graph,
                &self.settings.cost,
                TravelerId(i),
                &setup.weights,
            )?);
        }
        let mean_traveler_cost =
            traveler_costs.iter().sum::<f64>() / traveler_costs.len() as f64;
        let steered: Vec<&DecisionRecord> = self
            .decisions
            .iter()
            .filter(|d| d.policy == Policy::Lori)
            .collect();
        let persuasion_rate = if steered.is_empty() {
            None
        } else {
            let hits = steered
                .iter()
                .filter(|d| d.persuaded == Some(true))
                .count();
            Some(hits as f64 / steered.len() as f64)
        };
        let finished = self
            .state
            .travelers()
            .iter()
            .filter(|t| t.position == Position::Finished)
            .count();
        Ok(RunReport {
            seed: self.settings.seed,
            system_cost: self.realized,
            traveler_costs,
            mean_traveler_cost,
            decisions: self.decisions,
            persuasion_rate,
            timeline: self.timeline,
            signals: self.signals,
            finished,
        })
    }

    fn system_objective(&self, future_horizon: Tick) -> SystemObjective {
        SystemObjective {
            weights: self.settings.system_weights.clone(),
            future_horizon,
        }
    }

    /// Free-flow ticks of a traveler's remaining movement, measured from
    /// the slowest of its candidate paths when it has not committed yet.
    fn remaining_free_flow(&self, id: TravelerId, path_set: Option<&PathSet>) -> Result<Tick> {
        let cost = &self.settings.cost;
        let mut total = 0;
        match self.state.traveler(id).position {
            Position::OnEdge { arrival, .. } => {
                total += (arrival - self.state.time()).max(0);
                for e in &self.plans[id.0] {
                    total += cost.travel_ticks(&self.graph.edge(*e).attrs, 0)?;
                }
            }
            Position::AtVertex(_) | Position::AtLocation(_) => {
                if let Some(ps) = path_set {
                    let mut worst = 0;
                    for path in &ps.paths {
                        let mut sum = 0;
                        for e in path {
                            sum += cost.travel_ticks(&self.graph.edge(*e).attrs, 0)?;
                        }
                        worst = worst.max(sum);
                    }
                    total += worst;
                } else {
                    for e in &self.plans[id.0] {
                        total += cost.travel_ticks(&self.graph.edge(*e).attrs, 0)?;
                    }
                }
            }
            Position::Pending | Position::Finished => {}
        }
        Ok(total)
    }

    fn sssp_provisional(&self, id: TravelerId) -> Result<Vec<EdgeId>> {
        let rec = self.state.traveler(id);
        let from = match rec.position {
            Position::AtLocation(l) => Place::Location(l),
            Position::AtVertex(v) => Place::Vertex(v),
            _ => return Err(Error::NotActive(id.0)),
        };
        shortest_route(
            &self.graph,
            &self.settings.cost,
            &self.state,
            &self.settings.sssp,
            id,
            from,
            rec.destination,
        )
    }

    fn decide_sssp(&mut self, id: TravelerId) -> Result<()> {
        let started = Instant::now();
        let route = self.sssp_provisional(id)?;
        let Some(&first) = route.first() else {
            return Err(Error::EmptyPathSet(id.0));
        };
        self.state
            .commit_edge(&self.graph, &self.settings.cost, id, first)?;
        self.plans[id.0] = route[1..].to_vec();
        self.decisions.push(DecisionRecord {
            tick: self.state.time(),
            traveler: id,
            policy: Policy::Sssp,
            chosen_edge: first,
            persuaded: None,
            start_objective: None,
            objective: None,
            duration_secs: started.elapsed().as_secs_f64(),
            evaluations: 0,
        });
        Ok(())
    }

    fn prior_beliefs(&self) -> Vec<Vec<Belief>> {
        let per_traveler: Vec<Belief> = (0..self.graph.num_edges())
            .map(|e| {
                let cap = self.graph.edge(EdgeId(e)).attrs.capacity;
                match self.settings.prior {
                    BeliefPrior::Observed => Belief::point(self.state.count(EdgeId(e)), cap),
                    BeliefPrior::Uniform => Belief::uniform(cap),
                }
            })
            .collect();
        self.settings
            .travelers
            .iter()
            .map(|_| per_traveler.clone())
            .collect()
    }

    fn decide_lori(&mut self, id: TravelerId) -> Result<()> {
        let started = Instant::now();

        // Players: every still-active steered traveler, this one included.
        let players: Vec<TravelerId> = self
            .state
            .active_travelers()
            .into_iter()
            .filter(|&p| self.settings.travelers[p.0].policy == Policy::Lori)
            .collect();
        let player_idx = players
            .iter()
            .position(|&p| p == id)
            .ok_or(Error::NotActive(id.0))?;

        let mut path_sets = Vec::with_capacity(players.len());
        for &p in &players {
            let rec = self.state.traveler(p);
            let from = match rec.position {
                Position::AtLocation(l) => Place::Location(l),
                Position::AtVertex(v) => Place::Vertex(v),
                _ => return Err(Error::NotActive(p.0)),
            };
            path_sets.push(self.graph.enumerate_paths(
                p,
                from,
                rec.destination,
                &self.settings.path_opts,
            )?);
        }

        // Everyone else is pinned: mid-edge travelers to their remaining
        // plans, undecided baseline travelers to a provisional re-plan.
        let mut fixed_plans = vec![Vec::new(); self.settings.travelers.len()];
        for rec in self.state.travelers() {
            let tid = rec.id;
            if players.contains(&tid) {
                continue;
            }
            match rec.position {
                Position::OnEdge { .. } => fixed_plans[tid.0] = self.plans[tid.0].clone(),
                Position::AtVertex(_) | Position::AtLocation(_) => {
                    fixed_plans[tid.0] = match self.settings.travelers[tid.0].policy {
                        Policy::Sssp => self.sssp_provisional(tid)?,
                        Policy::Lori => self.plans[tid.0].clone(),
                    };
                }
                Position::Pending | Position::Finished => {}
            }
        }

        let weights: Vec<WeightProfile> = self
            .settings
            .travelers
            .iter()
            .map(|t| t.weights.clone())
            .collect();
        let ctx = DecisionContext {
            graph: &self.graph,
            cost: &self.settings.cost,
            state: &self.state,
            players: players.clone(),
            path_sets,
            fixed_plans,
            weights,
            beliefs: self.prior_beliefs(),
            window: self.settings.window,
            qre: self.settings.qre.clone(),
        };

        let horizon_left = (self.settings.horizon - self.state.time()).max(0);
        let future_horizon = match self.settings.future_horizon {
            Some(h) => h.min(horizon_left),
            None => {
                let mut worst = 0;
                for (i, &p) in players.iter().enumerate() {
                    worst = worst.max(self.remaining_free_flow(p, Some(&ctx.path_sets[i]))?);
                }
                for rec in self.state.travelers() {
                    if !players.contains(&rec.id) {
                        worst = worst.max(self.remaining_free_flow(rec.id, None)?);
                    }
                }
                (2 * worst).min(horizon_left)
            }
        };
        let objective = self.system_objective(future_horizon);

        let (game, cache) = build_cost_matrix(&ctx)?;
        let base = solve_qre(&game, &ctx.qre)?;
        let presence = build_presence_cache(&ctx)?;
        let outcome = optimize_signal(
            &ctx,
            &cache,
            &presence,
            &game,
            &base,
            player_idx,
            &objective,
            &self.settings.optimizer,
            &mut self.rng,
        )?;

        let chosen = match self.settings.choice {
            ChoiceRule::Mode => outcome.equilibrium.argmax(player_idx),
            ChoiceRule::Sample => {
                let u: f64 = self.rng.gen();
                let row = &outcome.equilibrium.probs[player_idx];
                let mut acc = 0.0;
                let mut pick = row.len() - 1;
                for (i, &p) in row.iter().enumerate() {
                    acc += p;
                    if u < acc {
                        pick = i;
                        break;
                    }
                }
                pick
            }
        };

        let optimal = system_optimal_path(
            &ctx,
            &presence,
            &objective,
            &outcome.equilibrium,
            player_idx,
        )?;

        let path = ctx.path_sets[player_idx].paths[chosen].clone();
        let first = path[0];
        self.state
            .commit_edge(&self.graph, &self.settings.cost, id, first)?;
        self.plans[id.0] = path[1..].to_vec();

        let tick = self.state.time();
        for (edge, matrix) in &outcome.signal.per_edge {
            for (r, row) in matrix.rows().iter().enumerate() {
                for (c, &p) in row.iter().enumerate() {
                    self.signals.push(SignalLogRow {
                        tick,
                        traveler: id,
                        edge: *edge,
                        row: r,
                        col: c,
                        probability: p,
                    });
                }
            }
        }
        self.decisions.push(DecisionRecord {
            tick,
            traveler: id,
            policy: Policy::Lori,
            chosen_edge: first,
            persuaded: Some(chosen == optimal),
            start_objective: outcome.start_objectives.first().map(|(_, v)| *v),
            objective: Some(outcome.objective),
            duration_secs: started.elapsed().as_secs_f64(),
            evaluations: outcome.evaluations,
        });
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{ModeDef, ModeKind, PhysicalEdge, PhysicalNetwork, SwitchSpec};

    fn road(from: &str, to: &str, f: f64, cap: u32, len: f64) -> PhysicalEdge {
        PhysicalEdge {
            mode: "car".into(),
            from: from.into(),
            to: to.into(),
            free_flow_time: Some(f),
            capacity: Some(cap),
            length_km: Some(len),
            fixed_time: None,
        }
    }

    fn two_route_net() -> Arc<ExpandedGraph> {
        let net = PhysicalNetwork {
            locations: vec!["a".into(), "b".into(), "m".into()],
            modes: vec![ModeDef {
                name: "car".into(),
                kind: ModeKind::Road,
            }],
            edges: vec![
                road("a", "b", 4.0, 1, 2.0),
                road("a", "m", 4.0, 1, 2.0),
                road("m", "b", 4.0, 1, 2.0),
            ],
            switch: SwitchSpec::default(),
            default_capacity: 2,
        };
        Arc::new(ExpandedGraph::expand(&net).unwrap())
    }

    fn settings(policy: Policy, seed: u64) -> RunSettings {
        RunSettings {
            cost: CostModel::default(),
            horizon: 30,
            path_opts: PathOpts::default(),
            window: 10,
            qre: QreParams {
                target_alpha: 2.0,
                ..QreParams::default()
            },
            optimizer: OptimizerParams {
                max_iterations: 3,
                ..OptimizerParams::default()
            },
            choice: ChoiceRule::Mode,
            prior: BeliefPrior::Observed,
            system_weights: WeightProfile::time_co(0.5).unwrap(),
            future_horizon: None,
            sssp: SsspPolicy::default(),
            travelers: vec![
                TravelerSetup {
                    origin: LocationId(0),
                    destination: LocationId(1),
                    start_tick: 0,
                    weights: WeightProfile::time_co(0.5).unwrap(),
                    policy,
                },
                TravelerSetup {
                    origin: LocationId(0),
                    destination: LocationId(1),
                    start_tick: 1,
                    weights: WeightProfile::time_co(0.5).unwrap(),
                    policy,
                },
            ],
            seed,
        }
    }

    #[test]
    fn sssp_run_finishes_and_conserves() {
        let g = two_route_net();
        let report = Simulation::new(g, settings(Policy::Sssp, 3))
            .unwrap()
            .run()
            .unwrap();
        assert_eq!(report.finished, 2);
        assert!(report.system_cost > 0.0);
        assert!(report.persuasion_rate.is_none());
        assert_eq!(report.decisions.len(), 2);
        assert!(report.traveler_costs.iter().all(|&c| c > 0.0));
    }

    #[test]
    fn lori_run_finishes_and_logs_decisions() {
        let g = two_route_net();
        let report = Simulation::new(g, settings(Policy::Lori, 3))
            .unwrap()
            .run()
            .unwrap();
        assert_eq!(report.finished, 2);
        assert!(report.persuasion_rate.is_some());
        assert_eq!(report.decisions.len(), 2);
        for d in &report.decisions {
            assert_eq!(d.policy, Policy::Lori);
            assert!(d.duration_secs >= 0.0);
        }
    }

    #[test]
    fn identical_seeds_reproduce_identical_runs() {
        let g = two_route_net();
        let r1 = Simulation::new(g.clone(), settings(Policy::Lori, 11))
            .unwrap()
            .run()
            .unwrap();
        let r2 = Simulation::new(g, settings(Policy::Lori, 11))
            .unwrap()
            .run()
            .unwrap();
        assert_eq!(r1.system_cost, r2.system_cost);
        assert_eq!(r1.traveler_costs, r2.traveler_costs);
        assert_eq!(r1.timeline, r2.timeline);
        assert_eq!(
            r1.decisions
                .iter()
                .map(|d| (d.tick, d.traveler, d.chosen_edge))
                .collect::<Vec<_>>(),
            r2.decisions
                .iter()
                .map(|d| (d.tick, d.traveler, d.chosen_edge))
                .collect::<Vec<_>>()
        );
    }

    #[test]
    fn rejects_degenerate_demand() {
        let g = two_route_net();
        let mut s = settings(Policy::Sssp, 0);
        s.travelers[0].destination = s.travelers[0].origin;
        assert!(Simulation::new(g, s).is_err());
    }
}
