//! Network state on an integer-minute clock, plus a deterministic replay
//! engine that projects edge occupancies forward under hypothetical plans.
//!
//! A traveler occupies exactly one edge at a time. Committing an edge reads
//! the occupancy before incrementing it (a traveler does not congest
//! itself); both the traversal duration and the traveler's realized cost
//! are evaluated at that entry count.

use std::cmp::Reverse;
use std::collections::BinaryHeap;

use serde::{Deserialize, Serialize};

use crate::cost::CostModel;
use crate::error::Error;
use crate::graph::{EdgeId, ExpandedGraph, LocationId, VertexId};
use crate::Result;

pub type Tick = i64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct TravelerId(pub usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Position {
    /// Demand exists but the start tick has not been reached.
    Pending,
    /// Spawned at a location, layer not yet chosen.
    AtLocation(LocationId),
    /// Waiting at a layered vertex between traversals.
    AtVertex(VertexId),
    /// Traversing an edge until the scheduled arrival tick.
    OnEdge { edge: EdgeId, arrival: Tick },
    /// Reached the destination location (any layer) and left the network.
    Finished,
}

#[derive(Debug, Clone, Copy)]
pub struct CommittedEdge {
    pub edge: EdgeId,
    pub entered: Tick,
    /// Occupancy observed at commit time, excluding the committer.
    pub entry_count: u32,
    pub travel_ticks: Tick,
}

#[derive(Debug, Clone)]
pub struct TravelerRecord {
    pub id: TravelerId,
    pub origin: LocationId,
    pub destination: LocationId,
    pub start_tick: Tick,
    pub position: Position,
    pub committed: Vec<CommittedEdge>,
}

#[derive(Debug, Clone)]
pub struct NetworkState {
    time: Tick,
    edge_counts: Vec<u32>,
    travelers: Vec<TravelerRecord>,
}

impl NetworkState {
    pub fn new(graph: &ExpandedGraph, demand: &[(LocationId, LocationId, Tick)]) -> Self {
        let travelers = demand
            .iter()
            .enumerate()
            .map(|(i, &(origin, destination, start_tick))| TravelerRecord {
                id: TravelerId(i),
                origin,
                destination,
                start_tick,
                position: Position::Pending,
                committed: Vec::new(),
            })
            .collect();
        NetworkState {
            time: 0,
            edge_counts: vec![0; graph.num_edges()],
            travelers,
        }
    }

    pub fn time(&self) -> Tick {
        self.time
    }

    pub fn edge_counts(&self) -> &[u32] {
        &self.edge_counts
    }

    pub fn count(&self, edge: EdgeId) -> u32 {
        self.edge_counts[edge.0]
    }

    pub fn travelers(&self) -> &[TravelerRecord] {
        &self.travelers
    }

    pub fn traveler(&self, id: TravelerId) -> &TravelerRecord {
        &self.travelers[id.0]
    }

    /// Active travelers may commit an edge: spawned and between traversals.
    pub fn is_active(&self, id: TravelerId) -> bool {
        matches!(
            self.travelers[id.0].position,
            Position::AtLocation(_) | Position::AtVertex(_)
        )
    }

    pub fn active_travelers(&self) -> Vec<TravelerId> {
        self.travelers
            .iter()
            .filter(|t| matches!(t.position, Position::AtLocation(_) | Position::AtVertex(_)))
            .map(|t| t.id)
            .collect()
    }

    pub fn all_finished(&self) -> bool {
        self.travelers
            .iter()
            .all(|t| t.position == Position::Finished)
    }

    /// Spawn pending travelers whose start tick has been reached.
    pub fn activate_due(&mut self) {
        let now = self.time;
        for t in &mut self.travelers {
            if t.position == Position::Pending && t.start_tick <= now {
                t.position = Position::AtLocation(t.origin);
            }
        }
    }

    /// Commit `traveler` to `edge` at the current tick. Returns the arrival
    /// tick. The traversal duration is evaluated at the pre-increment count.
    pub fn commit_edge(
        &mut self,
        graph: &ExpandedGraph,
        cost: &CostModel,
        traveler: TravelerId,
        edge: EdgeId,
    ) -> Result<Tick> {
        let e = graph.edge(edge);
        let rec = &self.travelers[traveler.0];
        match rec.position {
            Position::AtLocation(l) => {
                if graph.vertex(e.tail).location != l {
                    return Err(Error::WrongTail {
                        traveler: traveler.0,
                        edge: edge.0,
                    });
                }
            }
            Position::AtVertex(v) => {
                if e.tail != v {
                    return Err(Error::WrongTail {
                        traveler: traveler.0,
                        edge: edge.0,
                    });
                }
            }
            _ => return Err(Error::NotActive(traveler.0)),
        }
        let entry_count = self.edge_counts[edge.0];
        let ticks = cost.travel_ticks(&e.attrs, entry_count)?;
        let arrival = self.time + ticks;
        self.edge_counts[edge.0] += 1;
        let rec = &mut self.travelers[traveler.0];
        rec.committed.push(CommittedEdge {
            edge,
            entered: self.time,
            entry_count,
            travel_ticks: ticks,
        });
        rec.position = Position::OnEdge { edge, arrival };
        Ok(arrival)
    }

    /// Move the clock to `until`, resolving arrivals in (tick, traveler id)
    /// order. Arriving at any layered copy of the destination finishes the
    /// trip; otherwise the traveler waits at the head vertex.
    pub fn advance(&mut self, graph: &ExpandedGraph, until: Tick) -> Result<()> {
        if until < self.time {
            return Err(Error::TimeReversal {
                now: self.time,
                requested: until,
            });
        }
        loop {
            let next = self
                .travelers
                .iter()
                .filter_map(|t| match t.position {
                    Position::OnEdge { edge, arrival } if arrival <= until => {
                        Some((arrival, t.id, edge))
                    }
                    _ => None,
                })
                .min();
            let Some((_, id, edge)) = next else { break };
            self.edge_counts[edge.0] -= 1;
            let head = graph.edge(edge).head;
            let rec = &mut self.travelers[id.0];
            rec.position = if graph.vertex(head).location == rec.destination {
                Position::Finished
            } else {
                Position::AtVertex(head)
            };
        }
        self.time = until;
        Ok(())
    }

    /// Every traversing traveler is counted exactly once.
    pub fn check_conservation(&self) -> Result<()> {
        let on_edges: u64 = self
            .travelers
            .iter()
            .filter(|t| matches!(t.position, Position::OnEdge { .. }))
            .count() as u64;
        let total: u64 = self.edge_counts.iter().map(|&c| c as u64).sum();
        if on_edges != total {
            return Err(Error::Internal(format!(
                "edge counts sum to {total} but {on_edges} travelers are traversing"
            )));
        }
        Ok(())
    }

    /// Realized cost of a traveler's committed prefix under its weights,
    /// each edge priced at its entry count.
    pub fn realized_cost(
        &self,
        graph: &ExpandedGraph,
        cost: &CostModel,
        traveler: TravelerId,
        weights: &crate::cost::WeightProfile,
    ) -> Result<f64> {
        let mut total = 0.0;
        for c in &self.travelers[traveler.0].committed {
            total += cost.edge_cost(&graph.edge(c.edge).attrs, c.entry_count, weights)?;
        }
        Ok(total)
    }
}

/// One future traversal in a replay.
#[derive(Debug, Clone, Copy)]
pub struct Traversal {
    pub edge: EdgeId,
    pub enter: Tick,
    pub exit: Tick,
    /// Replayed occupancy at entry, excluding the traveler itself.
    pub entry_count: u32,
}

/// Occupancy trajectory under hypothetical remaining plans.
#[derive(Debug, Clone)]
pub struct Replay {
    pub start_time: Tick,
    pub initial_counts: Vec<u32>,
    /// Per edge: (tick, new count) changes, ascending by tick.
    pub steps: Vec<Vec<(Tick, u32)>>,
    /// Per traveler: future traversals in order.
    pub traversals: Vec<Vec<Traversal>>,
    /// Per traveler: tick at which the destination is reached, if the plan
    /// gets there.
    pub finish: Vec<Option<Tick>>,
}

impl Replay {
    /// Occupancy of `edge` at time `t >= start_time`.
    pub fn count_at(&self, edge: EdgeId, t: Tick) -> u32 {
        let mut c = self.initial_counts[edge.0];
        for &(st, v) in &self.steps[edge.0] {
            if st > t {
                break;
            }
            c = v;
        }
        c
    }

    /// Maximum occupancy of `edge` over `[from, to]`, optionally excluding
    /// one traveler present on the edge during `[enter, exit)`.
    pub fn max_count_in_window(
        &self,
        edge: EdgeId,
        from: Tick,
        to: Tick,
        exclude: Option<(Tick, Tick)>,
    ) -> i64 {
        let eval = |t: Tick| -> i64 {
            let mut c = self.count_at(edge, t) as i64;
            if let Some((enter, exit)) = exclude {
                if t >= enter && t < exit {
                    c -= 1;
                }
            }
            c
        };
        let mut best = eval(from);
        for &(st, _) in &self.steps[edge.0] {
            if st > from && st <= to {
                best = best.max(eval(st));
            }
        }
        if let Some((enter, exit)) = exclude {
            for t in [enter, exit] {
                if t > from && t <= to {
                    best = best.max(eval(t));
                }
            }
        }
        best
    }

    /// Occupancy snapshots at every change time, starting at `start_time`.
    pub fn timeline(&self) -> Vec<(Tick, Vec<u32>)> {
        let mut times: Vec<Tick> = self
            .steps
            .iter()
            .flat_map(|s| s.iter().map(|&(t, _)| t))
            .collect();
        times.push(self.start_time);
        times.sort_unstable();
        times.dedup();
        times
            .into_iter()
            .map(|t| {
                let counts = (0..self.initial_counts.len())
                    .map(|e| self.count_at(EdgeId(e), t))
                    .collect();
                (t, counts)
            })
            .collect()
    }
}

/// Replay the network forward assuming each traveler follows `plans[id]`
/// (its remaining edges). Travelers mid-edge finish their traversal first;
/// plans must continue from each traveler's current position. Pending and
/// finished travelers, and travelers with empty plans, add no traversals.
///
/// Events resolve in (tick, traveler id) order, matching `advance`.
pub fn replay_paths(
    state: &NetworkState,
    graph: &ExpandedGraph,
    cost: &CostModel,
    plans: &[Vec<EdgeId>],
) -> Result<Replay> {
    if plans.len() != state.travelers().len() {
        return Err(Error::Dimension(format!(
            "{} plans for {} travelers",
            plans.len(),
            state.travelers().len()
        )));
    }
    let now = state.time();
    let mut counts = state.edge_counts().to_vec();
    let mut steps: Vec<Vec<(Tick, u32)>> = vec![Vec::new(); graph.num_edges()];
    let mut traversals: Vec<Vec<Traversal>> = vec![Vec::new(); plans.len()];
    let mut finish: Vec<Option<Tick>> = vec![None; plans.len()];
    // (arrival, traveler, edge being completed, next plan index)
    let mut queue: BinaryHeap<Reverse<(Tick, usize, usize, usize)>> = BinaryHeap::new();

    for rec in state.travelers() {
        let id = rec.id.0;
        let plan = &plans[id];
        match rec.position {
            Position::OnEdge { edge, arrival } => {
                if let Some(&first) = plan.first() {
                    let expected = graph.edge(edge).head;
                    if graph.edge(first).tail != expected {
                        return Err(Error::IllegalPath {
                            traveler: id,
                            edge: first.0,
                        });
                    }
                }
                queue.push(Reverse((arrival.max(now), id, edge.0, 0)));
            }
            Position::AtLocation(l) => {
                if let Some(&first) = plan.first() {
                    if graph.vertex(graph.edge(first).tail).location != l {
                        return Err(Error::IllegalPath {
                            traveler: id,
                            edge: first.0,
                        });
                    }
                }
            }
            Position::AtVertex(v) => {
                if let Some(&first) = plan.first() {
                    if graph.edge(first).tail != v {
                        return Err(Error::IllegalPath {
                            traveler: id,
                            edge: first.0,
                        });
                    }
                }
            }
            Position::Pending | Position::Finished => {}
        }
        // Plans must be internally contiguous.
        for w in plan.windows(2) {
            if graph.edge(w[1]).tail != graph.edge(w[0]).head {
                return Err(Error::IllegalPath {
                    traveler: id,
                    edge: w[1].0,
                });
            }
        }
    }

    // Travelers already waiting commit their first planned edge now,
    // ascending by id.
    let commit = |id: usize,
                      plan_idx: usize,
                      t: Tick,
                      counts: &mut Vec<u32>,
                      steps: &mut Vec<Vec<(Tick, u32)>>,
                      traversals: &mut Vec<Vec<Traversal>>,
                      queue: &mut BinaryHeap<Reverse<(Tick, usize, usize, usize)>>|
     -> Result<()> {
        let edge = plans[id][plan_idx];
        let entry_count = counts[edge.0];
        let ticks = cost.travel_ticks(&graph.edge(edge).attrs, entry_count)?;
        counts[edge.0] += 1;
        steps[edge.0].push((t, counts[edge.0]));
        traversals[id].push(Traversal {
            edge,
            enter: t,
            exit: t + ticks,
            entry_count,
        });
        queue.push(Reverse((t + ticks, id, edge.0, plan_idx + 1)));
        Ok(())
    };

    for rec in state.travelers() {
        if matches!(
            rec.position,
            Position::AtLocation(_) | Position::AtVertex(_)
        ) && !plans[rec.id.0].is_empty()
        {
            commit(
                rec.id.0,
                0,
                now,
                &mut counts,
                &mut steps,
                &mut traversals,
                &mut queue,
            )?;
        }
    }

    while let Some(Reverse((t, id, edge, next_idx))) = queue.pop() {
        counts[edge] -= 1;
        steps[edge].push((t, counts[edge]));
        let head = graph.edge(EdgeId(edge)).head;
        if graph.vertex(head).location == state.traveler(TravelerId(id)).destination {
            finish[id] = Some(t);
            continue;
        }
        if next_idx < plans[id].len() {
            commit(
                id,
                next_idx,
                t,
                &mut counts,
                &mut steps,
                &mut traversals,
                &mut queue,
            )?;
        }
    }

    Ok(Replay {
        start_time: now,
        initial_counts: state.edge_counts().to_vec(),
        steps,
        traversals,
        finish,
    })
}

/// Occupancy snapshots under hypothetical plans; see `replay_paths`.
pub fn project_timeline(
    state: &NetworkState,
    graph: &ExpandedGraph,
    cost: &CostModel,
    plans: &[Vec<EdgeId>],
) -> Result<Vec<(Tick, Vec<u32>)>> {
    Ok(replay_paths(state, graph, cost, plans)?.timeline())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{ModeDef, ModeKind, PhysicalEdge, PhysicalNetwork, Place, SwitchSpec};

    fn line_net() -> (ExpandedGraph, CostModel) {
        let net = PhysicalNetwork {
            locations: vec!["a".into(), "b".into(), "c".into()],
            modes: vec![ModeDef {
                name: "car".into(),
                kind: ModeKind::Road,
            }],
            edges: vec![
                PhysicalEdge {
                    mode: "car".into(),
                    from: "a".into(),
                    to: "b".into(),
                    free_flow_time: Some(2.0),
                    capacity: Some(2),
                    length_km: Some(1.0),
                    fixed_time: None,
                },
                PhysicalEdge {
                    mode: "car".into(),
                    from: "b".into(),
                    to: "c".into(),
                    free_flow_time: Some(3.0),
                    capacity: Some(2),
                    length_km: Some(1.5),
                    fixed_time: None,
                },
            ],
            switch: SwitchSpec::default(),
            default_capacity: 2,
        };
        (ExpandedGraph::expand(&net).unwrap(), CostModel::default())
    }

    #[test]
    fn commit_advance_finish() {
        let (g, m) = line_net();
        let a = g.location_id("a").unwrap();
        let c = g.location_id("c").unwrap();
        let mut s = NetworkState::new(&g, &[(a, c, 0)]);
        s.activate_due();
        assert!(s.is_active(TravelerId(0)));

        let e0 = EdgeId(0);
        let arrival = s.commit_edge(&g, &m, TravelerId(0), e0).unwrap();
        assert_eq!(arrival, 2);
        assert_eq!(s.count(e0), 1);
        assert!(!s.is_active(TravelerId(0)));
        s.check_conservation().unwrap();

        s.advance(&g, 2).unwrap();
        assert_eq!(s.count(e0), 0);
        assert!(s.is_active(TravelerId(0)));

        let e1 = EdgeId(1);
        s.commit_edge(&g, &m, TravelerId(0), e1).unwrap();
        s.advance(&g, 10).unwrap();
        assert_eq!(s.traveler(TravelerId(0)).position, Position::Finished);
        assert_eq!(s.edge_counts().iter().sum::<u32>(), 0);
    }

    #[test]
    fn commit_checks_tail_and_activity() {
        let (g, m) = line_net();
        let a = g.location_id("a").unwrap();
        let c = g.location_id("c").unwrap();
        let mut s = NetworkState::new(&g, &[(a, c, 0), (a, c, 5)]);
        s.activate_due();
        // Traveler 1 is still pending.
        assert!(matches!(
            s.commit_edge(&g, &m, TravelerId(1), EdgeId(0)),
            Err(Error::NotActive(1))
        ));
        // Edge 1 starts at b, traveler 0 is at a.
        assert!(matches!(
            s.commit_edge(&g, &m, TravelerId(0), EdgeId(1)),
            Err(Error::WrongTail { .. })
        ));
    }

    #[test]
    fn advance_rejects_time_reversal() {
        let (g, _) = line_net();
        let a = g.location_id("a").unwrap();
        let c = g.location_id("c").unwrap();
        let mut s = NetworkState::new(&g, &[(a, c, 0)]);
        s.advance(&g, 5).unwrap();
        assert!(matches!(
            s.advance(&g, 4),
            Err(Error::TimeReversal { .. })
        ));
    }

    #[test]
    fn advance_is_composable() {
        let (g, m) = line_net();
        let a = g.location_id("a").unwrap();
        let c = g.location_id("c").unwrap();
        let build = || {
            let mut s = NetworkState::new(&g, &[(a, c, 0), (a, c, 0)]);
            s.activate_due();
            s.commit_edge(&g, &m, TravelerId(0), EdgeId(0)).unwrap();
            s.commit_edge(&g, &m, TravelerId(1), EdgeId(0)).unwrap();
            s
        };
        let mut one = build();
        one.advance(&g, 7).unwrap();
        let mut two = build();
        two.advance(&g, 3).unwrap();
        two.advance(&g, 7).unwrap();
        assert_eq!(one.edge_counts(), two.edge_counts());
        for (x, y) in one.travelers().iter().zip(two.travelers()) {
            assert_eq!(x.position, y.position);
        }
    }

    #[test]
    fn replay_matches_live_execution() {
        let (g, m) = line_net();
        let a = g.location_id("a").unwrap();
        let c = g.location_id("c").unwrap();
        let mut s = NetworkState::new(&g, &[(a, c, 0), (a, c, 0)]);
        s.activate_due();
        let plans = vec![vec![EdgeId(0), EdgeId(1)], vec![EdgeId(0), EdgeId(1)]];
        let replay = replay_paths(&s, &g, &m, &plans).unwrap();

        // Live: both commit at t=0, then follow the plan on arrival.
        s.commit_edge(&g, &m, TravelerId(0), EdgeId(0)).unwrap();
        s.commit_edge(&g, &m, TravelerId(1), EdgeId(0)).unwrap();
        for t in 1..20 {
            s.advance(&g, t).unwrap();
            for id in s.active_travelers() {
                s.commit_edge(&g, &m, id, EdgeId(1)).unwrap();
            }
            for e in 0..g.num_edges() {
                assert_eq!(
                    s.count(EdgeId(e)),
                    replay.count_at(EdgeId(e), t),
                    "edge {e} at tick {t}"
                );
            }
        }
        assert!(s.all_finished());
        assert_eq!(replay.finish, vec![Some(5), Some(7)]);
        // Second traveler entered edge 0 behind the first.
        assert_eq!(replay.traversals[1][0].entry_count, 1);
    }

    #[test]
    fn replay_rejects_discontinuous_plans() {
        let (g, m) = line_net();
        let a = g.location_id("a").unwrap();
        let c = g.location_id("c").unwrap();
        let mut s = NetworkState::new(&g, &[(a, c, 0)]);
        s.activate_due();
        let bad = vec![vec![EdgeId(1)]];
        assert!(matches!(
            replay_paths(&s, &g, &m, &bad),
            Err(Error::IllegalPath { traveler: 0, .. })
        ));
    }

    #[test]
    fn window_max_excludes_self() {
        let (g, m) = line_net();
        let a = g.location_id("a").unwrap();
        let c = g.location_id("c").unwrap();
        let mut s = NetworkState::new(&g, &[(a, c, 0), (a, c, 0)]);
        s.activate_due();
        let plans = vec![vec![EdgeId(0), EdgeId(1)], vec![EdgeId(0), EdgeId(1)]];
        let r = replay_paths(&s, &g, &m, &plans).unwrap();
        let t0 = r.traversals[0][0];
        // Both travelers share edge 0; excluding traveler 0 leaves one.
        assert_eq!(
            r.max_count_in_window(EdgeId(0), 0, 5, Some((t0.enter, t0.exit))),
            1
        );
        assert_eq!(r.max_count_in_window(EdgeId(0), 0, 5, None), 2);
    }

    #[test]
    fn paths_from_place_enumeration_consistency() {
        // Paths enumerated from a location replay without discontinuities.
        let (g, m) = line_net();
        let a = g.location_id("a").unwrap();
        let c = g.location_id("c").unwrap();
        let s = {
            let mut s = NetworkState::new(&g, &[(a, c, 0)]);
            s.activate_due();
            s
        };
        let ps = g
            .enumerate_paths(
                TravelerId(0),
                Place::Location(a),
                c,
                &Default::default(),
            )
            .unwrap();
        for p in &ps.paths {
            replay_paths(&s, &g, &m, &[p.clone()]).unwrap();
        }
    }
}
