//! Logit quantal response equilibria of finite games in cost form.
//!
//! Each player independently mixes over strategies; a logit response maps
//! expected costs to choice probabilities with rationality `alpha`
//! (`alpha = 0` is uniform, larger values concentrate on cheaper
//! strategies). The equilibrium is a fixed point of the joint response,
//! found by predictor-corrector continuation along the branch that starts
//! at the uniform profile.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::state::TravelerId;
use crate::Result;

/// Expected-cost tensor of a finite game, stored row-major over the joint
/// strategy space.
#[derive(Debug, Clone)]
pub struct NormalFormGame {
    players: Vec<TravelerId>,
    strategy_counts: Vec<usize>,
    strides: Vec<usize>,
    /// Per player, cost at every joint profile.
    costs: Vec<Vec<f64>>,
}

impl NormalFormGame {
    pub fn new(
        players: Vec<TravelerId>,
        strategy_counts: Vec<usize>,
        costs: Vec<Vec<f64>>,
    ) -> Result<Self> {
        if players.is_empty() || players.len() != strategy_counts.len() {
            return Err(Error::Dimension(
                "player list and strategy counts differ".into(),
            ));
        }
        if strategy_counts.iter().any(|&c| c == 0) {
            return Err(Error::Dimension("player with zero strategies".into()));
        }
        let num_profiles: usize = strategy_counts.iter().product();
        if costs.len() != players.len() {
            return Err(Error::Dimension("one cost table per player".into()));
        }
        for table in &costs {
            if table.len() != num_profiles {
                return Err(Error::Dimension(format!(
                    "cost table of {} entries, expected {}",
                    table.len(),
                    num_profiles
                )));
            }
            if table.iter().any(|c| !c.is_finite()) {
                return Err(Error::NonFinite("game cost tensor".into()));
            }
        }
        let mut strides = vec![1usize; strategy_counts.len()];
        for i in (0..strategy_counts.len().saturating_sub(1)).rev() {
            strides[i] = strides[i + 1] * strategy_counts[i + 1];
        }
        Ok(NormalFormGame {
            players,
            strategy_counts,
            strides,
            costs,
        })
    }

    pub fn players(&self) -> &[TravelerId] {
        &self.players
    }

    pub fn num_players(&self) -> usize {
        self.players.len()
    }

    pub fn strategy_counts(&self) -> &[usize] {
        &self.strategy_counts
    }

    pub fn num_profiles(&self) -> usize {
        self.strategy_counts.iter().product()
    }

    pub fn flat_index(&self, profile: &[usize]) -> usize {
        profile
            .iter()
            .zip(&self.strides)
            .map(|(s, st)| s * st)
            .sum()
    }

    pub fn cost(&self, player: usize, flat: usize) -> f64 {
        self.costs[player][flat]
    }

    /// Replace one player's cost table (used when re-pricing a candidate
    /// signal for a single traveler).
    pub fn set_costs(&mut self, player: usize, table: Vec<f64>) -> Result<()> {
        if table.len() != self.num_profiles() {
            return Err(Error::Dimension("cost table size mismatch".into()));
        }
        self.costs[player] = table;
        Ok(())
    }
}

/// One mixed strategy per player.
#[derive(Debug, Clone, PartialEq)]
pub struct MixedProfile {
    pub probs: Vec<Vec<f64>>,
}

impl MixedProfile {
    pub fn uniform(game: &NormalFormGame) -> Self {
        MixedProfile {
            probs: game
                .strategy_counts
                .iter()
                .map(|&c| vec![1.0 / c as f64; c])
                .collect(),
        }
    }

    pub fn validate(&self, game: &NormalFormGame) -> Result<()> {
        if self.probs.len() != game.num_players() {
            return Err(Error::Dimension("profile has wrong player count".into()));
        }
        for (p, &c) in self.probs.iter().zip(&game.strategy_counts) {
            if p.len() != c {
                return Err(Error::Dimension("strategy count mismatch".into()));
            }
            let sum: f64 = p.iter().sum();
            if (sum - 1.0).abs() > 1e-9 || p.iter().any(|&x| x < -1e-12) {
                return Err(Error::Normalization { sum });
            }
        }
        Ok(())
    }

    /// Most likely strategy; ties resolve to the lowest index.
    pub fn argmax(&self, player: usize) -> usize {
        let row = &self.probs[player];
        let mut best = 0;
        for (i, &p) in row.iter().enumerate() {
            if p > row[best] {
                best = i;
            }
        }
        best
    }
}

/// Continuation and response parameters.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct QreParams {
    pub target_alpha: f64,
    pub initial_step: f64,
    pub min_step: f64,
    pub max_step: f64,
    pub corrector_tol: f64,
    pub residual_tol: f64,
    pub max_newton: usize,
    pub fd_step: f64,
    /// +1 treats the tensor as payoffs, -1 as costs.
    pub logit_sign: f64,
    pub mc_samples: usize,
    pub mc_seed: u64,
    /// Beyond this many players expected costs switch to Monte Carlo.
    pub exact_player_limit: usize,
}

impl Default for QreParams {
    fn default() -> Self {
        QreParams {
            target_alpha: 1.0,
            initial_step: 0.1,
            min_step: 1e-6,
            max_step: 0.5,
            corrector_tol: 1e-8,
            residual_tol: 1e-6,
            max_newton: 40,
            fd_step: 1e-6,
            logit_sign: -1.0,
            mc_samples: 1024,
            mc_seed: 0,
            exact_player_limit: 6,
        }
    }
}

impl QreParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.target_alpha >= 0.0) {
            return Err(Error::Domain("target alpha must be >= 0".into()));
        }
        if !(self.min_step > 0.0 && self.min_step <= self.initial_step)
            || !(self.initial_step <= self.max_step)
        {
            return Err(Error::Domain("step bounds must be ordered".into()));
        }
        if self.logit_sign != 1.0 && self.logit_sign != -1.0 {
            return Err(Error::Domain("logit sign must be +1 or -1".into()));
        }
        Ok(())
    }
}

/// Expected cost of each of `player`'s strategies under `profile`.
pub fn expected_costs(
    game: &NormalFormGame,
    profile: &MixedProfile,
    player: usize,
    params: &QreParams,
) -> Vec<f64> {
    if game.num_players() <= params.exact_player_limit {
        expected_costs_exact(game, profile, player)
    } else {
        expected_costs_mc(game, profile, player, params)
    }
}

fn expected_costs_exact(game: &NormalFormGame, profile: &MixedProfile, player: usize) -> Vec<f64> {
    let n = game.num_players();
    let own = game.strategy_counts[player];
    let mut totals = vec![0.0; own];
    // Mixed-radix counter over the other players' strategies.
    let mut others: Vec<usize> = vec![0; n];
    loop {
        let mut w = 1.0;
        let mut base = 0usize;
        for j in 0..n {
            if j != player {
                w *= profile.probs[j][others[j]];
                base += others[j] * game.strides[j];
            }
        }
        if w != 0.0 {
            for s in 0..own {
                totals[s] += w * game.cost(player, base + s * game.strides[player]);
            }
        }
        // Increment, skipping the player's own digit.
        let mut j = n;
        loop {
            if j == 0 {
                return totals;
            }
            j -= 1;
            if j == player {
                continue;
            }
            others[j] += 1;
            if others[j] < game.strategy_counts[j] {
                break;
            }
            others[j] = 0;
        }
    }
}

fn expected_costs_mc(
    game: &NormalFormGame,
    profile: &MixedProfile,
    player: usize,
    params: &QreParams,
) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(params.mc_seed ^ (player as u64).wrapping_mul(0x9e37));
    let own = game.strategy_counts[player];
    let mut totals = vec![0.0; own];
    let n = game.num_players();
    let mut draw = vec![0usize; n];
    for _ in 0..params.mc_samples.max(1) {
        let mut base = 0usize;
        for j in 0..n {
            if j == player {
                continue;
            }
            let u: f64 = rng.gen();
            let mut acc = 0.0;
            let mut pick = game.strategy_counts[j] - 1;
            for (s, &p) in profile.probs[j].iter().enumerate() {
                acc += p;
                if u < acc {
                    pick = s;
                    break;
                }
            }
            draw[j] = pick;
            base += pick * game.strides[j];
        }
        for s in 0..own {
            totals[s] += game.cost(player, base + s * game.strides[player]);
        }
    }
    let inv = 1.0 / params.mc_samples.max(1) as f64;
    for t in &mut totals {
        *t *= inv;
    }
    totals
}

/// Logit response of one player: softmax of `sign * alpha * expected cost`,
/// computed with a max shift for numerical stability.
pub fn logit_response(
    game: &NormalFormGame,
    profile: &MixedProfile,
    player: usize,
    alpha: f64,
    params: &QreParams,
) -> Vec<f64> {
    let costs = expected_costs(game, profile, player, params);
    softmax_scaled(&costs, params.logit_sign * alpha)
}

fn softmax_scaled(values: &[f64], scale: f64) -> Vec<f64> {
    let scaled: Vec<f64> = values.iter().map(|&v| scale * v).collect();
    let m = scaled.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = scaled.iter().map(|&v| (v - m).exp()).collect();
    let z: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / z).collect()
}

fn joint_response(
    game: &NormalFormGame,
    profile: &MixedProfile,
    alpha: f64,
    params: &QreParams,
) -> MixedProfile {
    MixedProfile {
        probs: (0..game.num_players())
            .map(|i| logit_response(game, profile, i, alpha, params))
            .collect(),
    }
}

fn flatten(profile: &MixedProfile) -> DVector<f64> {
    DVector::from_vec(profile.probs.iter().flatten().cloned().collect())
}

fn unflatten(game: &NormalFormGame, v: &DVector<f64>) -> MixedProfile {
    let mut probs = Vec::with_capacity(game.num_players());
    let mut at = 0;
    for &c in &game.strategy_counts {
        probs.push(v.as_slice()[at..at + c].to_vec());
        at += c;
    }
    MixedProfile { probs }
}

fn residual_vec(
    game: &NormalFormGame,
    profile: &MixedProfile,
    alpha: f64,
    params: &QreParams,
) -> DVector<f64> {
    flatten(profile) - flatten(&joint_response(game, profile, alpha, params))
}

fn inf_norm(v: &DVector<f64>) -> f64 {
    v.iter().fold(0.0f64, |m, &x| m.max(x.abs()))
}

/// Max-norm of `profile - response(profile)`.
pub fn fixed_point_residual(
    game: &NormalFormGame,
    profile: &MixedProfile,
    alpha: f64,
    params: &QreParams,
) -> f64 {
    inf_norm(&residual_vec(game, profile, alpha, params))
}

/// Forward-difference Jacobian of the joint response in the profile.
fn response_jacobian(
    game: &NormalFormGame,
    profile: &MixedProfile,
    alpha: f64,
    params: &QreParams,
) -> DMatrix<f64> {
    let m = flatten(profile).len();
    let base = flatten(&joint_response(game, profile, alpha, params));
    let mut jac = DMatrix::zeros(m, m);
    let h = params.fd_step;
    let flat = flatten(profile);
    for j in 0..m {
        let mut pert = flat.clone();
        pert[j] += h;
        let shifted = flatten(&joint_response(game, &unflatten(game, &pert), alpha, params));
        for i in 0..m {
            jac[(i, j)] = (shifted[i] - base[i]) / h;
        }
    }
    jac
}

fn response_alpha_derivative(
    game: &NormalFormGame,
    profile: &MixedProfile,
    alpha: f64,
    params: &QreParams,
) -> DVector<f64> {
    let h = params.fd_step;
    let up = flatten(&joint_response(game, profile, alpha + h, params));
    let base = flatten(&joint_response(game, profile, alpha, params));
    (up - base) / h
}

fn clean_profile(game: &NormalFormGame, profile: &mut MixedProfile) {
    for row in &mut profile.probs {
        for p in row.iter_mut() {
            if *p < 0.0 {
                *p = 0.0;
            }
        }
        let s: f64 = row.iter().sum();
        if s > 0.0 {
            for p in row.iter_mut() {
                *p /= s;
            }
        }
    }
    let _ = game;
}

/// Damped Newton iteration on `F(pi) = pi - response(pi, alpha)`.
fn corrector(
    game: &NormalFormGame,
    start: &MixedProfile,
    alpha: f64,
    params: &QreParams,
) -> Result<MixedProfile> {
    let mut pi = start.clone();
    let mut res = residual_vec(game, &pi, alpha, params);
    for _ in 0..params.max_newton {
        if inf_norm(&res) < params.corrector_tol {
            let mut out = pi.clone();
            clean_profile(game, &mut out);
            return Ok(out);
        }
        let jac = DMatrix::identity(res.len(), res.len())
            - response_jacobian(game, &pi, alpha, params);
        let delta = jac.lu().solve(&(-&res)).ok_or(Error::ContinuationFailure {
            alpha,
            step: params.fd_step,
        })?;
        let mut damping = 1.0;
        let mut accepted = false;
        for _ in 0..8 {
            let cand = unflatten(game, &(flatten(&pi) + damping * &delta));
            let cand_res = residual_vec(game, &cand, alpha, params);
            if inf_norm(&cand_res) < inf_norm(&res) {
                pi = cand;
                res = cand_res;
                accepted = true;
                break;
            }
            damping *= 0.5;
        }
        if !accepted {
            return Err(Error::ContinuationFailure {
                alpha,
                step: damping,
            });
        }
    }
    if inf_norm(&res) < params.corrector_tol {
        let mut out = pi.clone();
        clean_profile(game, &mut out);
        return Ok(out);
    }
    Err(Error::ContinuationFailure {
        alpha,
        step: params.initial_step,
    })
}

/// Solved equilibrium with the traced continuation branch.
#[derive(Debug, Clone)]
pub struct QreSolution {
    pub profile: MixedProfile,
    pub residual: f64,
    /// Accepted (alpha, profile) pairs from 0 to the target.
    pub trace: Vec<(f64, MixedProfile)>,
}

/// Follow the principal branch from the uniform profile at `alpha = 0` to
/// the target rationality. Step size halves on corrector failure and
/// doubles after three consecutive successes, within configured bounds.
pub fn solve_qre(game: &NormalFormGame, params: &QreParams) -> Result<QreSolution> {
    params.validate()?;
    let uniform = MixedProfile::uniform(game);
    let mut trace = vec![(0.0, uniform.clone())];
    if params.target_alpha == 0.0 {
        return Ok(QreSolution {
            profile: uniform,
            residual: 0.0,
            trace,
        });
    }
    let mut alpha = 0.0f64;
    let mut pi = uniform;
    let mut step = params.initial_step;
    let mut streak = 0u32;
    while alpha < params.target_alpha {
        let h = step.min(params.target_alpha - alpha);
        let jac = response_jacobian(game, &pi, alpha, params);
        let lhs = DMatrix::identity(jac.nrows(), jac.ncols()) - jac;
        let rhs = response_alpha_derivative(game, &pi, alpha, params);
        let tangent = lhs.lu().solve(&rhs).unwrap_or_else(|| rhs.clone());
        let predicted = unflatten(game, &(flatten(&pi) + h * tangent));
        match corrector(game, &predicted, alpha + h, params) {
            Ok(corrected) => {
                alpha += h;
                pi = corrected;
                trace.push((alpha, pi.clone()));
                streak += 1;
                if streak >= 3 {
                    step = (step * 2.0).min(params.max_step);
                    streak = 0;
                }
            }
            Err(_) => {
                streak = 0;
                step *= 0.5;
                if step < params.min_step {
                    return Err(Error::ContinuationFailure { alpha, step });
                }
            }
        }
    }
    let residual = fixed_point_residual(game, &pi, params.target_alpha, params);
    if residual >= params.residual_tol {
        return Err(Error::ContinuationFailure {
            alpha: params.target_alpha,
            step,
        });
    }
    Ok(QreSolution {
        profile: pi,
        residual,
        trace,
    })
}

/// Corrector-only re-solve from a warm start at the target rationality,
/// falling back to full continuation if the basin is missed.
pub fn refine_qre(
    game: &NormalFormGame,
    params: &QreParams,
    start: &MixedProfile,
) -> Result<QreSolution> {
    params.validate()?;
    if params.target_alpha == 0.0 {
        return solve_qre(game, params);
    }
    if start.validate(game).is_ok() {
        if let Ok(pi) = corrector(game, start, params.target_alpha, params) {
            let residual = fixed_point_residual(game, &pi, params.target_alpha, params);
            if residual < params.residual_tol {
                return Ok(QreSolution {
                    profile: pi.clone(),
                    residual,
                    trace: vec![(params.target_alpha, pi)],
                });
            }
        }
    }
    solve_qre(game, params)
}
