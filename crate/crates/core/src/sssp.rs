//! Deterministic single-source shortest path baseline.
//!
//! The baseline traveler re-plans whenever it can commit an edge, pricing
//! each edge at its current occupancy (or free flow when static weighting
//! is requested) and following the cheapest route to any layered copy of
//! its destination. Ties break lexicographically on the edge-id sequence,
//! so equal-cost routes never depend on iteration order.

use std::cmp::Reverse;
use std::collections::BinaryHeap;

use serde::{Deserialize, Serialize};

use crate::cost::{CostModel, WeightProfile};
use crate::error::Error;
use crate::graph::{EdgeId, ExpandedGraph, LocationId, Place, VertexId};
use crate::state::NetworkState;
use crate::Result;

/// Which attribute the baseline minimizes.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(rename_all = "snake_case")]
pub enum WeightAttribute {
    TravelTime,
    CoEmissions,
    /// Weighted combination of all attributes.
    Weighted(WeightProfile),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct SsspPolicy {
    pub attribute: WeightAttribute,
    /// Ignore occupancy and price every edge at free flow.
    #[serde(default)]
    pub static_weights: bool,
}

impl Default for SsspPolicy {
    fn default() -> Self {
        SsspPolicy {
            attribute: WeightAttribute::TravelTime,
            static_weights: false,
        }
    }
}

impl SsspPolicy {
    fn edge_weight(
        &self,
        graph: &ExpandedGraph,
        cost: &CostModel,
        state: &NetworkState,
        edge: EdgeId,
    ) -> Result<f64> {
        let occupancy = if self.static_weights {
            0
        } else {
            state.count(edge)
        };
        let attrs = cost.attributes(&graph.edge(edge).attrs, occupancy)?;
        match &self.attribute {
            WeightAttribute::TravelTime => Ok(attrs.travel_time),
            WeightAttribute::CoEmissions => Ok(attrs.co_emissions),
            WeightAttribute::Weighted(w) => crate::cost::weighted_cost(&attrs, w),
        }
    }
}

#[derive(PartialEq)]
struct Label {
    cost: f64,
    path: Vec<EdgeId>,
    vertex: VertexId,
}

impl Eq for Label {}

impl Ord for Label {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.cost
            .total_cmp(&other.cost)
            .then_with(|| self.path.cmp(&other.path))
            .then_with(|| self.vertex.cmp(&other.vertex))
    }
}

impl PartialOrd for Label {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

/// Cheapest edge sequence from `from` to any layered copy of `dest`.
///
/// Edge weights are nonnegative, so the first settled destination copy
/// carries the minimal (cost, edge sequence) pair.
pub fn shortest_route(
    graph: &ExpandedGraph,
    cost: &CostModel,
    state: &NetworkState,
    policy: &SsspPolicy,
    traveler: crate::state::TravelerId,
    from: Place,
    dest: LocationId,
) -> Result<Vec<EdgeId>> {
    let roots: Vec<VertexId> = match from {
        Place::Location(l) => graph.modal_copies(l),
        Place::Vertex(v) => vec![v],
    };
    let mut heap: BinaryHeap<Reverse<Label>> = BinaryHeap::new();
    for root in roots {
        if graph.vertex(root).location == dest {
            return Ok(Vec::new());
        }
        heap.push(Reverse(Label {
            cost: 0.0,
            path: Vec::new(),
            vertex: root,
        }));
    }
    let mut settled = vec![false; graph.num_vertices()];
    while let Some(Reverse(label)) = heap.pop() {
        if settled[label.vertex.0] {
            continue;
        }
        settled[label.vertex.0] = true;
        if graph.vertex(label.vertex).location == dest {
            return Ok(label.path);
        }
        for &eid in graph.out_edges(label.vertex) {
            let head = graph.edge(eid).head;
            if settled[head.0] {
                continue;
            }
            let w = policy.edge_weight(graph, cost, state, eid)?;
            if w < 0.0 {
                return Err(Error::Domain(format!("negative edge weight {w}")));
            }
            let mut path = label.path.clone();
            path.push(eid);
            heap.push(Reverse(Label {
                cost: label.cost + w,
                path,
                vertex: head,
            }));
        }
    }
    Err(Error::EmptyPathSet(traveler.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{ModeDef, ModeKind, PhysicalEdge, PhysicalNetwork, SwitchSpec};
    use crate::state::TravelerId;

    fn road(from: &str, to: &str, f: f64, cap: u32) -> PhysicalEdge {
        PhysicalEdge {
            mode: "car".into(),
            from: from.into(),
            to: to.into(),
            free_flow_time: Some(f),
            capacity: Some(cap),
            length_km: Some(f * 0.6),
            fixed_time: None,
        }
    }

    fn diamond() -> (ExpandedGraph, CostModel) {
        // a -> b -> d and a -> c -> d with equal free-flow costs.
        let net = PhysicalNetwork {
            locations: vec!["a".into(), "b".into(), "c".into(), "d".into()],
            modes: vec![ModeDef {
                name: "car".into(),
                kind: ModeKind::Road,
            }],
            edges: vec![
                road("a", "b", 2.0, 2),
                road("a", "c", 2.0, 2),
                road("b", "d", 2.0, 2),
                road("c", "d", 2.0, 2),
            ],
            switch: SwitchSpec::default(),
            default_capacity: 2,
        };
        (ExpandedGraph::expand(&net).unwrap(), CostModel::default())
    }

    #[test]
    fn equal_costs_break_ties_lexicographically() {
        let (g, m) = diamond();
        let a = g.location_id("a").unwrap();
        let d = g.location_id("d").unwrap();
        let s = NetworkState::new(&g, &[(a, d, 0)]);
        let route = shortest_route(
            &g,
            &m,
            &s,
            &SsspPolicy::default(),
            TravelerId(0),
            Place::Location(a),
            d,
        )
        .unwrap();
        // Both routes cost 4; the edge-id-lexicographic one wins.
        let alt: Vec<EdgeId> = {
            let mut candidates = Vec::new();
            for first in g.out_edges(g.find_vertex(a, crate::graph::ModeId(0)).unwrap()) {
                let head = g.edge(*first).head;
                for second in g.out_edges(head) {
                    if g.vertex(g.edge(*second).head).location == d {
                        candidates.push(vec![*first, *second]);
                    }
                }
            }
            candidates.sort();
            candidates[0].clone()
        };
        assert_eq!(route, alt);
    }

    #[test]
    fn occupancy_shifts_the_choice_unless_static() {
        let (g, m) = diamond();
        let a = g.location_id("a").unwrap();
        let d = g.location_id("d").unwrap();
        let mut s = NetworkState::new(&g, &[(a, d, 0), (a, d, 0)]);
        s.activate_due();
        // Load the lexicographically first route heavily.
        let first = shortest_route(
            &g,
            &m,
            &s,
            &SsspPolicy::default(),
            TravelerId(0),
            Place::Location(a),
            d,
        )
        .unwrap();
        s.commit_edge(&g, &m, TravelerId(0), first[0]).unwrap();
        s.commit_edge(&g, &m, TravelerId(1), first[0]).unwrap();

        let occupancy_aware = shortest_route(
            &g,
            &m,
            &s,
            &SsspPolicy::default(),
            TravelerId(0),
            Place::Location(a),
            d,
        )
        .unwrap();
        assert_ne!(occupancy_aware[0], first[0]);

        let static_policy = SsspPolicy {
            static_weights: true,
            ..SsspPolicy::default()
        };
        let static_route =
            shortest_route(&g, &m, &s, &static_policy, TravelerId(0), Place::Location(a), d)
                .unwrap();
        assert_eq!(static_route[0], first[0]);
    }

    #[test]
    fn no_route_is_an_error() {
        let (g, m) = diamond();
        let a = g.location_id("a").unwrap();
        let d = g.location_id("d").unwrap();
        let s = NetworkState::new(&g, &[(a, d, 0)]);
        // d has no outgoing edges.
        let err = shortest_route(
            &g,
            &m,
            &s,
            &SsspPolicy::default(),
            TravelerId(3),
            Place::Location(d),
            a,
        );
        assert!(matches!(err, Err(Error::EmptyPathSet(3))));
    }
}
