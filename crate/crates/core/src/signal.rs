//! Private congestion signals and belief updating.
//!
//! A traveler's belief about an edge is a distribution over its occupancy
//! alphabet {0, .., capacity}. A signal is a right-stochastic matrix per
//! edge; receiving it moves the belief by a predict-update step:
//! `posterior(j) ∝ Σ_i prior(i) · matrix[i][j]`. The system's own forecast
//! of future counts is a Poisson-binomial distribution over independent
//! per-traveler presence probabilities.

use std::collections::BTreeMap;

use crate::error::Error;
use crate::graph::EdgeId;
use crate::Result;

const ROW_SUM_TOL: f64 = 1e-9;

fn check_distribution(row: &[f64]) -> Result<()> {
    let mut sum = 0.0;
    for &p in row {
        if !p.is_finite() || p < -1e-12 {
            return Err(Error::Domain(format!("probability {p} out of range")));
        }
        sum += p;
    }
    if (sum - 1.0).abs() > ROW_SUM_TOL {
        return Err(Error::Normalization { sum });
    }
    Ok(())
}

/// Distribution over an edge's occupancy alphabet.
#[derive(Debug, Clone, PartialEq)]
pub struct Belief(Vec<f64>);

impl Belief {
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        check_distribution(&probs)?;
        Ok(Belief(probs))
    }

    /// Point mass at `count`, clamped to the alphabet bound.
    pub fn point(count: u32, capacity: u32) -> Self {
        let mut v = vec![0.0; capacity as usize + 1];
        v[(count.min(capacity)) as usize] = 1.0;
        Belief(v)
    }

    pub fn uniform(capacity: u32) -> Self {
        let n = capacity as usize + 1;
        Belief(vec![1.0 / n as f64; n])
    }

    pub fn probs(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// States with non-negligible mass.
    pub fn support(&self) -> Vec<usize> {
        self.0
            .iter()
            .enumerate()
            .filter(|(_, &p)| p > 1e-12)
            .map(|(i, _)| i)
            .collect()
    }

    pub fn mean(&self) -> f64 {
        self.0
            .iter()
            .enumerate()
            .map(|(i, &p)| i as f64 * p)
            .sum()
    }
}

/// Right-stochastic signaling matrix over one edge's occupancy alphabet.
/// Row `i` is the announcement distribution when the predicted state is `i`.
#[derive(Debug, Clone, PartialEq)]
pub struct SignalMatrix {
    rows: Vec<Vec<f64>>,
}

impl SignalMatrix {
    pub fn new(rows: Vec<Vec<f64>>) -> Result<Self> {
        let n = rows.len();
        if n == 0 {
            return Err(Error::Dimension("signal matrix has no rows".into()));
        }
        for row in &rows {
            if row.len() != n {
                return Err(Error::Dimension(format!(
                    "signal matrix is {}x{}, expected square",
                    n,
                    row.len()
                )));
            }
            check_distribution(row)?;
        }
        Ok(SignalMatrix { rows })
    }

    pub fn identity(capacity: u32) -> Self {
        let n = capacity as usize + 1;
        let rows = (0..n)
            .map(|i| {
                let mut r = vec![0.0; n];
                r[i] = 1.0;
                r
            })
            .collect();
        SignalMatrix { rows }
    }

    pub fn uniform(capacity: u32) -> Self {
        let n = capacity as usize + 1;
        SignalMatrix {
            rows: vec![vec![1.0 / n as f64; n]; n],
        }
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.rows
    }

    pub fn dim(&self) -> usize {
        self.rows.len()
    }
}

/// Per-edge signaling matrices for one traveler at one decision. Edges
/// without an entry signal the identity (truthful pass-through).
#[derive(Debug, Clone, Default)]
pub struct Signal {
    pub per_edge: BTreeMap<EdgeId, SignalMatrix>,
}

impl Signal {
    pub fn identity() -> Self {
        Signal {
            per_edge: BTreeMap::new(),
        }
    }
}

/// Predict-update step: fold a signal row into a prior belief.
pub fn bayes_update(prior: &Belief, matrix: &SignalMatrix) -> Result<Belief> {
    if prior.len() != matrix.dim() {
        return Err(Error::Dimension(format!(
            "belief over {} states, matrix over {}",
            prior.len(),
            matrix.dim()
        )));
    }
    let n = prior.len();
    let mut post = vec![0.0; n];
    for (i, &p) in prior.probs().iter().enumerate() {
        if p == 0.0 {
            continue;
        }
        for (j, &m) in matrix.rows[i].iter().enumerate() {
            post[j] += p * m;
        }
    }
    let z: f64 = post.iter().sum();
    if z <= 1e-300 {
        return Err(Error::DegeneratePosterior);
    }
    for p in &mut post {
        *p /= z;
    }
    Belief::new(post)
}

/// Truncated Poisson-binomial distribution of the number of successes among
/// independent Bernoulli trials with probabilities `rhos`. Mass above
/// `capacity` is lumped at `capacity`.
pub fn count_distribution(rhos: &[f64], capacity: u32) -> Result<Vec<f64>> {
    let cap = capacity as usize;
    for &r in rhos {
        if !r.is_finite() || !(-1e-12..=1.0 + 1e-12).contains(&r) {
            return Err(Error::Domain(format!("presence probability {r}")));
        }
    }
    let mut dist = vec![0.0; cap + 1];
    dist[0] = 1.0;
    for &r in rhos {
        let prev = dist.clone();
        for k in 0..=cap {
            let stay = prev[k] * (1.0 - r);
            let climb = if k > 0 { prev[k - 1] * r } else { 0.0 };
            dist[k] = stay + climb;
        }
        // The top state absorbs: once at the bound, more arrivals stay there.
        dist[cap] += prev[cap] * r;
    }
    Ok(dist)
}

/// Probability that a traveler occupies `edge` at the upcoming step, given a
/// mixed path choice. Travelers already traversing contribute 0 or 1; the
/// mixed mass is the total probability of paths whose first edge is `edge`.
pub fn presence_probability(
    path_first_edges: &[EdgeId],
    path_probs: &[f64],
    edge: EdgeId,
) -> Result<f64> {
    if path_first_edges.len() != path_probs.len() {
        return Err(Error::Dimension(
            "path set and mixed strategy differ in length".into(),
        ));
    }
    check_distribution(path_probs)?;
    Ok(path_first_edges
        .iter()
        .zip(path_probs)
        .filter(|(e, _)| **e == edge)
        .map(|(_, &p)| p)
        .sum())
}
