//! Edge attribute models and weighted cost aggregation.
//!
//! Every edge maps an occupancy count to an attribute vector
//! (travel time in minutes, CO emissions). Road edges use a
//! volume-delay travel time and a speed-sensitive emission curve;
//! schedule, walk and switch edges are count-independent.

use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::graph::{EdgeAttributes, EdgeKind, ModeKind};
use crate::state::Tick;
use crate::Result;

pub const NUM_ATTRIBUTES: usize = 2;

/// Attribute vector of one edge at one occupancy level.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AttributeVector {
    pub travel_time: f64,
    pub co_emissions: f64,
}

impl AttributeVector {
    pub fn as_array(&self) -> [f64; NUM_ATTRIBUTES] {
        [self.travel_time, self.co_emissions]
    }
}

/// Convex weights over the attribute dimensions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct WeightProfile(Vec<f64>);

impl WeightProfile {
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::Dimension("weight profile is empty".into()));
        }
        for &w in &weights {
            if !w.is_finite() || !(0.0..=1.0).contains(&w) {
                return Err(Error::Domain(format!("weight {w} outside [0, 1]")));
            }
        }
        let sum: f64 = weights.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::Normalization { sum });
        }
        Ok(WeightProfile(weights))
    }

    /// Two-attribute profile `(time, 1 - time)`.
    pub fn time_co(time: f64) -> Result<Self> {
        WeightProfile::new(vec![time, 1.0 - time])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Volume-delay parameters: `t = f * (1 + alpha * (occ / cap)^beta)`.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(default)]
pub struct BprParams {
    pub alpha: f64,
    pub beta: f64,
}

impl Default for BprParams {
    fn default() -> Self {
        BprParams {
            alpha: 0.15,
            beta: 4.0,
        }
    }
}

impl BprParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha >= 0.0) || !self.alpha.is_finite() {
            return Err(Error::Domain(format!("bpr alpha {} < 0", self.alpha)));
        }
        if !(self.beta >= 1.0) || !self.beta.is_finite() {
            return Err(Error::Domain(format!("bpr beta {} < 1", self.beta)));
        }
        Ok(())
    }
}

/// Per-attribute normalization constants; attributes are divided by these
/// before weighting so different units can be mixed.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(default)]
pub struct AttributeScaling {
    pub travel_time: f64,
    pub co_emissions: f64,
}

impl Default for AttributeScaling {
    fn default() -> Self {
        AttributeScaling {
            travel_time: 1.0,
            co_emissions: 1.0,
        }
    }
}

impl AttributeScaling {
    pub fn validate(&self) -> Result<()> {
        if !(self.travel_time > 0.0) || !(self.co_emissions > 0.0) {
            return Err(Error::Domain("normalization constants must be > 0".into()));
        }
        Ok(())
    }
}

/// Road travel time by the volume-delay function.
pub fn bpr_travel_time(edge: &EdgeAttributes, occupancy: u32, params: &BprParams) -> Result<f64> {
    if edge.kind != EdgeKind::Travel || edge.mode_kind != ModeKind::Road {
        return Err(Error::ModelApplicability(
            "volume-delay model applies only to road travel edges".into(),
        ));
    }
    if edge.capacity == 0 {
        return Err(Error::Domain("road edge capacity is zero".into()));
    }
    let ratio = occupancy as f64 / edge.capacity as f64;
    Ok(edge.free_flow_time * (1.0 + params.alpha * ratio.powf(params.beta)))
}

/// CO emission estimate for a road edge traversed in `travel_time` minutes.
pub fn co_emission_rate(edge: &EdgeAttributes, travel_time: f64) -> Result<f64> {
    if edge.kind != EdgeKind::Travel || edge.mode_kind != ModeKind::Road {
        return Err(Error::ModelApplicability(
            "emission model applies only to road travel edges".into(),
        ));
    }
    if !(travel_time > 0.0) {
        return Err(Error::Domain(format!(
            "travel time {travel_time} must be positive"
        )));
    }
    Ok(0.2038 * travel_time * (0.7962 * edge.length_km / travel_time).exp())
}

/// Raw (unscaled) attribute vector of an edge at a given occupancy.
pub fn edge_attributes(
    edge: &EdgeAttributes,
    occupancy: u32,
    params: &BprParams,
) -> Result<AttributeVector> {
    match (edge.kind, edge.mode_kind) {
        (EdgeKind::Switch, _) => Ok(AttributeVector {
            travel_time: edge.fixed_time,
            co_emissions: 0.0,
        }),
        (EdgeKind::Travel, ModeKind::Road) => {
            let tt = bpr_travel_time(edge, occupancy, params)?;
            Ok(AttributeVector {
                travel_time: tt,
                co_emissions: co_emission_rate(edge, tt)?,
            })
        }
        (EdgeKind::Travel, ModeKind::Schedule) => Ok(AttributeVector {
            travel_time: edge.fixed_time,
            co_emissions: 0.5 * edge.fixed_time,
        }),
        (EdgeKind::Travel, ModeKind::Walk) => Ok(AttributeVector {
            travel_time: edge.fixed_time,
            co_emissions: 0.0,
        }),
    }
}

/// Weighted aggregation of an attribute vector.
pub fn weighted_cost(attrs: &AttributeVector, weights: &WeightProfile) -> Result<f64> {
    let a = attrs.as_array();
    if weights.len() != a.len() {
        return Err(Error::Dimension(format!(
            "{} weights for {} attributes",
            weights.len(),
            a.len()
        )));
    }
    Ok(a.iter().zip(weights.as_slice()).map(|(x, w)| x * w).sum())
}

/// Attribute models plus scaling, bundled for convenience.
#[derive(Debug, Clone)]
pub struct CostModel {
    pub bpr: BprParams,
    pub scaling: AttributeScaling,
}

impl Default for CostModel {
    fn default() -> Self {
        CostModel {
            bpr: BprParams::default(),
            scaling: AttributeScaling::default(),
        }
    }
}

impl CostModel {
    /// Normalized attribute vector used by traveler and system costs.
    pub fn attributes(&self, edge: &EdgeAttributes, occupancy: u32) -> Result<AttributeVector> {
        let raw = edge_attributes(edge, occupancy, &self.bpr)?;
        Ok(AttributeVector {
            travel_time: raw.travel_time / self.scaling.travel_time,
            co_emissions: raw.co_emissions / self.scaling.co_emissions,
        })
    }

    /// Scalar edge cost under a weight profile at a given occupancy.
    pub fn edge_cost(
        &self,
        edge: &EdgeAttributes,
        occupancy: u32,
        weights: &WeightProfile,
    ) -> Result<f64> {
        weighted_cost(&self.attributes(edge, occupancy)?, weights)
    }

    /// Traversal duration in whole ticks: physical travel time rounded up.
    /// Scaling never affects the clock.
    pub fn travel_ticks(&self, edge: &EdgeAttributes, occupancy: u32) -> Result<Tick> {
        let raw = edge_attributes(edge, occupancy, &self.bpr)?;
        let t = raw.travel_time.ceil() as Tick;
        Ok(t.max(1))
    }
}
