//! Decision-time machinery: expected cost tensors for the path game, the
//! system objective over forecast occupancies, and the projected-gradient
//! search over signaling matrices.
//!
//! All joint path profiles are replayed once per decision and cached;
//! re-pricing a candidate signal then only rebuilds the receiving
//! traveler's cost table, re-solves the equilibrium from a warm start and
//! re-evaluates the occupancy forecast.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::cost::{CostModel, WeightProfile};
use crate::error::Error;
use crate::graph::{EdgeId, EdgeKind, ExpandedGraph, ModeKind, PathSet};
use crate::qre::{refine_qre, MixedProfile, NormalFormGame, QreParams, QreSolution};
use crate::signal::{bayes_update, count_distribution, Belief, Signal, SignalMatrix};
use crate::state::{replay_paths, NetworkState, Tick, Traversal, TravelerId};
use crate::Result;

/// Weights and forecast depth of the operator's objective.
#[derive(Debug, Clone)]
pub struct SystemObjective {
    pub weights: WeightProfile,
    /// Forecast depth in ticks beyond the current one.
    pub future_horizon: Tick,
}

impl SystemObjective {
    /// Cost of one realized tick: every edge priced at its current count,
    /// empty edges included.
    pub fn tick_cost(
        &self,
        graph: &ExpandedGraph,
        cost: &CostModel,
        counts: &[u32],
    ) -> Result<f64> {
        let mut total = 0.0;
        for (e, &c) in counts.iter().enumerate() {
            total += cost.edge_cost(&graph.edge(EdgeId(e)).attrs, c, &self.weights)?;
        }
        Ok(total)
    }
}

/// Inputs shared by every evaluation within a single decision.
pub struct DecisionContext<'a> {
    pub graph: &'a ExpandedGraph,
    pub cost: &'a CostModel,
    pub state: &'a NetworkState,
    /// Travelers choosing simultaneously, ascending by id.
    pub players: Vec<TravelerId>,
    /// Candidate paths per player, aligned with `players`.
    pub path_sets: Vec<PathSet>,
    /// Remaining plan per traveler id; players' entries are ignored.
    pub fixed_plans: Vec<Vec<EdgeId>>,
    /// Preference weights per traveler id.
    pub weights: Vec<WeightProfile>,
    /// Current per-edge beliefs per traveler id.
    pub beliefs: Vec<Vec<Belief>>,
    /// Half-width of the timing window when reading forecast occupancies.
    pub window: Tick,
    pub qre: QreParams,
}

/// One future edge use by a player under some joint profile: the belief
/// state is shifted by the forecast change in occupancy.
#[derive(Debug, Clone, Copy)]
struct FutureLeg {
    edge: EdgeId,
    shift: i64,
}

/// Replayed quantities for every joint path profile of the players.
pub struct ProfileCache {
    strategy_counts: Vec<usize>,
    num_profiles: usize,
    /// Per player: weighted cost of the committed prefix.
    realized: Vec<f64>,
    /// Per player, per profile: future edge uses.
    legs: Vec<Vec<Vec<FutureLeg>>>,
    /// Per player, per edge: weighted cost by occupancy.
    z_tables: Vec<Vec<Vec<f64>>>,
}

impl ProfileCache {
    pub fn num_profiles(&self) -> usize {
        self.num_profiles
    }
}

/// Replay every joint profile and derive each player's future legs.
pub fn build_profile_cache(ctx: &DecisionContext) -> Result<ProfileCache> {
    let n = ctx.players.len();
    if n == 0 {
        return Err(Error::Dimension("decision without players".into()));
    }
    let strategy_counts: Vec<usize> = ctx.path_sets.iter().map(|p| p.paths.len()).collect();
    let mut strides = vec![1usize; n];
    for i in (0..n.saturating_sub(1)).rev() {
        strides[i] = strides[i + 1] * strategy_counts[i + 1];
    }
    let num_profiles: usize = strategy_counts.iter().product();

    let mut realized = Vec::with_capacity(n);
    for &p in &ctx.players {
        realized.push(ctx.state.realized_cost(
            ctx.graph,
            ctx.cost,
            p,
            &ctx.weights[p.0],
        )?);
    }

    let mut z_tables = Vec::with_capacity(n);
    for &p in &ctx.players {
        let mut per_edge = Vec::with_capacity(ctx.graph.num_edges());
        for e in 0..ctx.graph.num_edges() {
            let attrs = &ctx.graph.edge(EdgeId(e)).attrs;
            let table: Vec<f64> = (0..=attrs.capacity)
                .map(|c| ctx.cost.edge_cost(attrs, c, &ctx.weights[p.0]))
                .collect::<Result<_>>()?;
            per_edge.push(table);
        }
        z_tables.push(per_edge);
    }

    let mut legs = vec![vec![Vec::new(); num_profiles]; n];
    let mut plans = ctx.fixed_plans.clone();
    for flat in 0..num_profiles {
        for (i, &p) in ctx.players.iter().enumerate() {
            let digit = (flat / strides[i]) % strategy_counts[i];
            plans[p.0] = ctx.path_sets[i].paths[digit].clone();
        }
        let replay = replay_paths(ctx.state, ctx.graph, ctx.cost, &plans)?;
        let now = ctx.state.time();
        for (i, &p) in ctx.players.iter().enumerate() {
            for tr in &replay.traversals[p.0] {
                let from = (tr.enter - ctx.window).max(now);
                let to = tr.enter + ctx.window;
                let forecast =
                    replay.max_count_in_window(tr.edge, from, to, Some((tr.enter, tr.exit)));
                let shift = forecast - ctx.state.count(tr.edge) as i64;
                legs[i][flat].push(FutureLeg {
                    edge: tr.edge,
                    shift,
                });
            }
        }
    }

    Ok(ProfileCache {
        strategy_counts,
        num_profiles,
        realized,
        legs,
        z_tables,
    })
}

/// Expected cost table of one player given its per-edge beliefs: realized
/// prefix plus, for every future leg, the belief-expected edge cost at the
/// shifted occupancy.
pub fn player_cost_table(
    ctx: &DecisionContext,
    cache: &ProfileCache,
    player_idx: usize,
    beliefs: &[Belief],
) -> Vec<f64> {
    let mut table = Vec::with_capacity(cache.num_profiles);
    for flat in 0..cache.num_profiles {
        let mut cost = cache.realized[player_idx];
        for leg in &cache.legs[player_idx][flat] {
            let cap = ctx.graph.edge(leg.edge).attrs.capacity as i64;
            let z = &cache.z_tables[player_idx][leg.edge.0];
            let phi = beliefs[leg.edge.0].probs();
            let mut expect = 0.0;
            for (lambda, &p) in phi.iter().enumerate() {
                if p == 0.0 {
                    continue;
                }
                let perceived = (lambda as i64 + leg.shift).clamp(0, cap) as usize;
                expect += p * z[perceived];
            }
            cost += expect;
        }
        table.push(cost);
    }
    table
}

/// Game over the players' path sets under their current beliefs.
pub fn build_cost_matrix(ctx: &DecisionContext) -> Result<(NormalFormGame, ProfileCache)> {
    let cache = build_profile_cache(ctx)?;
    let mut tables = Vec::with_capacity(ctx.players.len());
    for (i, &p) in ctx.players.iter().enumerate() {
        tables.push(player_cost_table(ctx, &cache, i, &ctx.beliefs[p.0]));
    }
    let game = NormalFormGame::new(
        ctx.players.clone(),
        cache.strategy_counts.clone(),
        tables,
    )?;
    Ok((game, cache))
}

/// Deterministic and mixed presence intervals used by the forecast.
pub struct PresenceCache {
    /// Per player, per path: that player's traversals when the rest of the
    /// network follows its fixed plans.
    player_traversals: Vec<Vec<Vec<Traversal>>>,
    /// Travelers already on an edge or bound to a fixed plan.
    background: Vec<Traversal>,
}

pub fn build_presence_cache(ctx: &DecisionContext) -> Result<PresenceCache> {
    let now = ctx.state.time();
    let mut background = Vec::new();
    for rec in ctx.state.travelers() {
        if let crate::state::Position::OnEdge { edge, arrival } = rec.position {
            background.push(Traversal {
                edge,
                enter: now,
                exit: arrival.max(now + 1),
                entry_count: ctx.state.count(edge),
            });
        }
    }
    let mut fixed_only = ctx.fixed_plans.clone();
    for &p in &ctx.players {
        fixed_only[p.0] = Vec::new();
    }
    let base = replay_paths(ctx.state, ctx.graph, ctx.cost, &fixed_only)?;
    for (id, trs) in base.traversals.iter().enumerate() {
        if ctx.players.contains(&TravelerId(id)) {
            continue;
        }
        background.extend(trs.iter().copied());
    }

    let mut player_traversals = Vec::with_capacity(ctx.players.len());
    for (i, &p) in ctx.players.iter().enumerate() {
        let mut per_path = Vec::with_capacity(ctx.path_sets[i].paths.len());
        for path in &ctx.path_sets[i].paths {
            let mut plans = fixed_only.clone();
            plans[p.0] = path.clone();
            let replay = replay_paths(ctx.state, ctx.graph, ctx.cost, &plans)?;
            per_path.push(replay.traversals[p.0].clone());
        }
        player_traversals.push(per_path);
    }
    Ok(PresenceCache {
        player_traversals,
        background,
    })
}

/// Expected system cost of the forecast window `now+1 ..= now+H` given the
/// players' mixed path choices: per edge and tick, occupancy follows a
/// Poisson-binomial over independent presence probabilities.
pub fn expected_future_cost(
    ctx: &DecisionContext,
    presence: &PresenceCache,
    objective: &SystemObjective,
    profile: &MixedProfile,
) -> Result<f64> {
    let now = ctx.state.time();
    let horizon = objective.future_horizon;
    if horizon == 0 {
        return Ok(0.0);
    }
    let num_edges = ctx.graph.num_edges();
    let slots = horizon as usize;
    // Per (edge, tick): the list of per-traveler presence probabilities.
    let mut cells: Vec<Vec<f64>> = vec![Vec::new(); num_edges * slots];
    let slot = |edge: EdgeId, t: Tick| -> Option<usize> {
        if t > now && t <= now + horizon {
            Some(edge.0 * slots + (t - now - 1) as usize)
        } else {
            None
        }
    };

    let push_intervals = |entries: &[(Traversal, f64)], cells: &mut Vec<Vec<f64>>| {
        // One traveler's mixture over paths lands in each cell at most once.
        let mut acc: Vec<(usize, f64)> = Vec::new();
        for (tr, prob) in entries {
            for t in tr.enter.max(now + 1)..tr.exit.min(now + horizon + 1) {
                if let Some(s) = slot(tr.edge, t) {
                    match acc.iter_mut().find(|(idx, _)| *idx == s) {
                        Some((_, p)) => *p += prob,
                        None => acc.push((s, *prob)),
                    }
                }
            }
        }
        for (s, p) in acc {
            cells[s].push(p.min(1.0));
        }
    };

    // Background travelers are deterministic.
    for tr in &presence.background {
        push_intervals(&[(*tr, 1.0)], &mut cells);
    }
    // Players mix over their paths.
    for (i, per_path) in presence.player_traversals.iter().enumerate() {
        let mut entries = Vec::new();
        for (p, trs) in per_path.iter().enumerate() {
            let prob = profile.probs[i][p];
            if prob <= 0.0 {
                continue;
            }
            for tr in trs {
                entries.push((*tr, prob));
            }
        }
        push_intervals(&entries, &mut cells);
    }

    let mut total = 0.0;
    for e in 0..num_edges {
        let attrs = &ctx.graph.edge(EdgeId(e)).attrs;
        let cap = attrs.capacity;
        let y: Vec<f64> = (0..=cap)
            .map(|c| ctx.cost.edge_cost(attrs, c, &objective.weights))
            .collect::<Result<_>>()?;
        for s in 0..slots {
            let rhos = &cells[e * slots + s];
            if rhos.is_empty() {
                total += y[0];
                continue;
            }
            let dist = count_distribution(rhos, cap)?;
            total += dist.iter().zip(&y).map(|(p, c)| p * c).sum::<f64>();
        }
    }
    Ok(total)
}

/// Projected-gradient parameters.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct OptimizerParams {
    /// Number of random restarts besides the identity and uniform starts.
    pub restarts: usize,
    pub max_iterations: usize,
    pub step_size: f64,
    pub fd_epsilon: f64,
    /// Stop once an accepted step improves by less than this.
    pub tolerance: f64,
    /// Optional cap on objective evaluations per decision.
    pub eval_budget: Option<usize>,
}

impl Default for OptimizerParams {
    fn default() -> Self {
        OptimizerParams {
            restarts: 1,
            max_iterations: 12,
            step_size: 0.5,
            fd_epsilon: 1e-4,
            tolerance: 1e-6,
            eval_budget: None,
        }
    }
}

impl OptimizerParams {
    pub fn validate(&self) -> Result<()> {
        if !self.step_size.is_finite() || self.step_size <= 0.0 {
            return Err(Error::Domain(format!(
                "optimizer step size {} must be positive",
                self.step_size
            )));
        }
        if !self.fd_epsilon.is_finite() || self.fd_epsilon <= 0.0 {
            return Err(Error::Domain(format!(
                "finite-difference epsilon {} must be positive",
                self.fd_epsilon
            )));
        }
        if !self.tolerance.is_finite() || self.tolerance < 0.0 {
            return Err(Error::Domain(format!(
                "optimizer tolerance {} must be nonnegative",
                self.tolerance
            )));
        }
        if self.eval_budget == Some(0) {
            return Err(Error::Domain("evaluation budget of zero".into()));
        }
        Ok(())
    }
}

/// Euclidean projection onto the probability simplex.
pub fn project_simplex(v: &mut [f64]) {
    let n = v.len();
    if n == 0 {
        return;
    }
    let mut sorted = v.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let mut cumulative = 0.0;
    let mut theta = 0.0;
    for (j, &u) in sorted.iter().enumerate() {
        cumulative += u;
        let candidate = (cumulative - 1.0) / (j as f64 + 1.0);
        if u - candidate > 0.0 {
            theta = candidate;
        }
    }
    for x in v.iter_mut() {
        *x = (*x - theta).max(0.0);
    }
    // Normalize away the last ulps so downstream validation is exact.
    let s: f64 = v.iter().sum();
    if s > 0.0 {
        for x in v.iter_mut() {
            *x /= s;
        }
    } else {
        for x in v.iter_mut() {
            *x = 1.0 / n as f64;
        }
    }
}

/// Result of a signal search for one traveler.
pub struct SignalOutcome {
    pub signal: Signal,
    pub objective: f64,
    /// Objective at each start before descending, labeled.
    pub start_objectives: Vec<(String, f64)>,
    pub evaluations: usize,
    /// Equilibrium under the returned signal.
    pub equilibrium: MixedProfile,
    /// Game with the receiving player's table re-priced under the signal.
    pub game: NormalFormGame,
}

/// Free optimization variables: one signal row per (edge, belief state in
/// the prior's support). Rows elsewhere cannot move the posterior, and
/// count-independent edges cannot move any cost.
fn relevant_rows(
    ctx: &DecisionContext,
    cache: &ProfileCache,
    player_idx: usize,
) -> Vec<(EdgeId, usize)> {
    let mut edges: Vec<EdgeId> = Vec::new();
    for profile_legs in &cache.legs[player_idx] {
        for leg in profile_legs {
            let attrs = &ctx.graph.edge(leg.edge).attrs;
            let congestible = attrs.kind == EdgeKind::Travel && attrs.mode_kind == ModeKind::Road;
            if congestible && !edges.contains(&leg.edge) {
                edges.push(leg.edge);
            }
        }
    }
    edges.sort();
    let player = ctx.players[player_idx];
    let mut vars = Vec::new();
    for e in edges {
        for row in ctx.beliefs[player.0][e.0].support() {
            vars.push((e, row));
        }
    }
    vars
}

fn signal_from_rows(
    ctx: &DecisionContext,
    vars: &[(EdgeId, usize)],
    rows: &[Vec<f64>],
) -> Result<Signal> {
    let mut signal = Signal::identity();
    for ((edge, row_idx), row) in vars.iter().zip(rows) {
        let cap = ctx.graph.edge(*edge).attrs.capacity;
        let matrix = signal
            .per_edge
            .entry(*edge)
            .or_insert_with(|| SignalMatrix::identity(cap));
        let mut all_rows = matrix.rows().to_vec();
        let sum: f64 = row.iter().sum();
        if (sum - 1.0).abs() > 1e-6 {
            return Err(Error::Internal(format!(
                "optimizer produced a signal row summing to {sum}"
            )));
        }
        all_rows[*row_idx] = row.clone();
        *matrix = SignalMatrix::new(all_rows)?;
    }
    Ok(signal)
}

/// Apply a signal to the player's beliefs (identity on absent edges).
pub fn signaled_beliefs(
    ctx: &DecisionContext,
    player: TravelerId,
    signal: &Signal,
) -> Result<Vec<Belief>> {
    let mut beliefs = ctx.beliefs[player.0].clone();
    for (edge, matrix) in &signal.per_edge {
        beliefs[edge.0] = bayes_update(&beliefs[edge.0], matrix)?;
    }
    Ok(beliefs)
}

/// Objective of one candidate signal: re-price the receiving player,
/// re-solve the equilibrium warm, and forecast the system cost.
pub fn evaluate_signal(
    ctx: &DecisionContext,
    cache: &ProfileCache,
    presence: &PresenceCache,
    base_game: &NormalFormGame,
    warm: &MixedProfile,
    player_idx: usize,
    objective: &SystemObjective,
    signal: &Signal,
) -> Result<(f64, MixedProfile, NormalFormGame)> {
    let player = ctx.players[player_idx];
    let beliefs = signaled_beliefs(ctx, player, signal)?;
    let table = player_cost_table(ctx, cache, player_idx, &beliefs);
    let mut game = base_game.clone();
    game.set_costs(player_idx, table)?;
    let solution = refine_qre(&game, &ctx.qre, warm)?;
    let value = expected_future_cost(ctx, presence, objective, &solution.profile)?;
    Ok((value, solution.profile, game))
}

/// Projected-gradient search over the signaling matrices for one traveler.
///
/// Starts from the identity, uniform and all-congested signals plus seeded
/// random rows; keeps the best accepted iterate. The accepted objective
/// never increases: steps that fail to improve shrink geometrically and the
/// iteration stops when improvement falls below the tolerance.
#[allow(clippy::too_many_arguments)]
pub fn optimize_signal(
    ctx: &DecisionContext,
    cache: &ProfileCache,
    presence: &PresenceCache,
    base_game: &NormalFormGame,
    base_solution: &QreSolution,
    player_idx: usize,
    objective: &SystemObjective,
    params: &OptimizerParams,
    rng: &mut ChaCha8Rng,
) -> Result<SignalOutcome> {
    let vars = relevant_rows(ctx, cache, player_idx);
    let mut evaluations = 0usize;
    let budget_left = |evals: usize| match params.eval_budget {
        Some(b) => evals < b,
        None => true,
    };

    if vars.is_empty() {
        let signal = Signal::identity();
        let (value, eq, game) = evaluate_signal(
            ctx,
            cache,
            presence,
            base_game,
            &base_solution.profile,
            player_idx,
            objective,
            &signal,
        )?;
        return Ok(SignalOutcome {
            signal,
            objective: value,
            start_objectives: vec![("identity".into(), value)],
            evaluations: 1,
            equilibrium: eq,
            game,
        });
    }

    let dims: Vec<usize> = vars
        .iter()
        .map(|(e, _)| ctx.graph.edge(*e).attrs.capacity as usize + 1)
        .collect();

    let identity_start: Vec<Vec<f64>> = vars
        .iter()
        .zip(&dims)
        .map(|((_, row), &d)| {
            let mut r = vec![0.0; d];
            r[*row] = 1.0;
            r
        })
        .collect();
    let uniform_start: Vec<Vec<f64>> = dims.iter().map(|&d| vec![1.0 / d as f64; d]).collect();
    // Announcing saturation everywhere: the far corner of the feasible
    // region from identity, and the natural basin for congestion warnings.
    let congested_start: Vec<Vec<f64>> = dims
        .iter()
        .map(|&d| {
            let mut r = vec![0.0; d];
            r[d - 1] = 1.0;
            r
        })
        .collect();

    let mut starts: Vec<(String, Vec<Vec<f64>>)> = vec![
        ("identity".into(), identity_start),
        ("uniform".into(), uniform_start),
        ("congested".into(), congested_start),
    ];
    for r in 0..params.restarts {
        let rows = dims
            .iter()
            .map(|&d| {
                let mut row: Vec<f64> = (0..d).map(|_| -rng.gen::<f64>().ln()).collect();
                let s: f64 = row.iter().sum();
                for x in &mut row {
                    *x /= s;
                }
                row
            })
            .collect();
        starts.push((format!("random{r}"), rows));
    }

    let eval_rows = |rows: &[Vec<f64>],
                         warm: &MixedProfile,
                         evaluations: &mut usize|
     -> Result<(f64, MixedProfile, NormalFormGame, Signal)> {
        let signal = signal_from_rows(ctx, &vars, rows)?;
        *evaluations += 1;
        let (v, eq, game) = evaluate_signal(
            ctx,
            cache,
            presence,
            base_game,
            warm,
            player_idx,
            objective,
            &signal,
        )?;
        Ok((v, eq, game, signal))
    };

    // Price every start first, then descend in best-first order so a tight
    // evaluation budget is spent polishing the most promising basin.
    let mut start_objectives = Vec::new();
    let mut priced: Vec<(f64, MixedProfile, NormalFormGame, Signal, Vec<Vec<f64>>)> = Vec::new();
    for (label, rows) in starts {
        let (value, eq, game, signal) =
            eval_rows(&rows, &base_solution.profile, &mut evaluations)?;
        start_objectives.push((label, value));
        priced.push((value, eq, game, signal, rows));
        if !budget_left(evaluations) {
            break;
        }
    }
    priced.sort_by(|a, b| a.0.total_cmp(&b.0));

    let mut best: Option<(f64, MixedProfile, NormalFormGame, Signal)> = None;
    for (start_value, start_eq, start_game, start_signal, mut rows) in priced {
        let mut value = start_value;
        let mut eq = start_eq;
        let mut game = start_game;
        let mut signal = start_signal;
        let mut warm = eq.clone();

        'descent: for _ in 0..params.max_iterations {
            if !budget_left(evaluations) {
                break;
            }
            // Forward-difference gradient on the pre-projection parameters.
            let mut grad: Vec<Vec<f64>> = rows.iter().map(|r| vec![0.0; r.len()]).collect();
            for i in 0..rows.len() {
                for j in 0..rows[i].len() {
                    if !budget_left(evaluations) {
                        break 'descent;
                    }
                    let mut pert = rows.clone();
                    pert[i][j] += params.fd_epsilon;
                    // Probe without projecting: the evaluation projects the
                    // row itself to stay feasible.
                    let mut probe = pert.clone();
                    project_simplex(&mut probe[i]);
                    let (pv, _, _, _) = eval_rows(&probe, &warm, &mut evaluations)?;
                    grad[i][j] = (pv - value) / params.fd_epsilon;
                }
            }
            // Scale so step_size is probability mass moved along the
            // steepest coordinate; raw gradients here are tiny because the
            // objective is nearly linear over a unit simplex.
            let grad_inf = grad
                .iter()
                .flat_map(|r| r.iter())
                .fold(0.0f64, |m, &g| m.max(g.abs()));
            if grad_inf <= 0.0 {
                break;
            }
            let mut step = params.step_size / grad_inf;
            let mut improved = false;
            for _ in 0..6 {
                if !budget_left(evaluations) {
                    break;
                }
                let mut cand = rows.clone();
                for i in 0..cand.len() {
                    for j in 0..cand[i].len() {
                        cand[i][j] -= step * grad[i][j];
                    }
                    project_simplex(&mut cand[i]);
                }
                let (cv, ceq, cgame, csignal) = eval_rows(&cand, &warm, &mut evaluations)?;
                if cv < value {
                    let gain = value - cv;
                    rows = cand;
                    value = cv;
                    eq = ceq;
                    game = cgame;
                    signal = csignal;
                    warm = eq.clone();
                    improved = true;
                    if gain < params.tolerance {
                        break 'descent;
                    }
                    break;
                }
                step *= 0.5;
            }
            if !improved {
                break;
            }
        }

        let better = match &best {
            Some((bv, _, _, _)) => value < *bv,
            None => true,
        };
        if better {
            best = Some((value, eq, game, signal));
        }
        if !budget_left(evaluations) {
            break;
        }
    }

    let (objective_value, equilibrium, game, signal) =
        best.ok_or_else(|| Error::Internal("signal search produced no iterate".into()))?;
    Ok(SignalOutcome {
        signal,
        objective: objective_value,
        start_objectives,
        evaluations,
        equilibrium,
        game,
    })
}

/// Index of the path that minimizes the forecast system cost when `player`
/// commits to it deterministically and everyone else keeps the equilibrium
/// mixture. Ties resolve to the lowest index.
pub fn system_optimal_path(
    ctx: &DecisionContext,
    presence: &PresenceCache,
    objective: &SystemObjective,
    equilibrium: &MixedProfile,
    player_idx: usize,
) -> Result<usize> {
    let mut best = 0usize;
    let mut best_value = f64::INFINITY;
    for p in 0..ctx.path_sets[player_idx].paths.len() {
        let mut pinned = equilibrium.clone();
        let k = pinned.probs[player_idx].len();
        pinned.probs[player_idx] = vec![0.0; k];
        pinned.probs[player_idx][p] = 1.0;
        let v = expected_future_cost(ctx, presence, objective, &pinned)?;
        if v < best_value {
            best_value = v;
            best = p;
        }
    }
    Ok(best)
}
