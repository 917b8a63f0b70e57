//! Layered multimodal graph.
//!
//! A physical network lists locations, modes and directed mode-specific
//! edges. Expansion replicates each location once per mode that serves it
//! and inserts bidirectional switch edges between co-located layer copies.
//! Vertex and edge ids are assigned by sorting, so two expansions of the
//! same network are identical.

use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::state::TravelerId;
use crate::Result;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct LocationId(pub usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ModeId(pub usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct VertexId(pub usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct EdgeId(pub usize);

/// How costs on a mode's travel edges respond to occupancy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModeKind {
    /// Congestible: travel time from a volume-delay function, emissions
    /// from a speed-sensitive model.
    Road,
    /// Fixed timetable; the vehicle runs regardless of load.
    Schedule,
    /// Fixed time, zero emissions.
    Walk,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModeDef {
    pub name: String,
    pub kind: ModeKind,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum EdgeKind {
    Travel,
    Switch,
}

/// Resolved attributes of an expanded edge. Fields that do not apply to the
/// edge's kind are zero and never read by the cost models.
#[derive(Debug, Clone)]
pub struct EdgeAttributes {
    pub mode: ModeId,
    pub mode_kind: ModeKind,
    pub kind: EdgeKind,
    pub free_flow_time: f64,
    /// Upper bound of the occupancy alphabet {0, .., capacity} used by
    /// beliefs, signals and count distributions. Physical occupancy may
    /// exceed it; distributions lump the excess at the bound.
    pub capacity: u32,
    pub length_km: f64,
    pub fixed_time: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PhysicalEdge {
    pub mode: String,
    pub from: String,
    pub to: String,
    #[serde(default)]
    pub free_flow_time: Option<f64>,
    #[serde(default)]
    pub capacity: Option<u32>,
    #[serde(default)]
    pub length_km: Option<f64>,
    #[serde(default)]
    pub fixed_time: Option<f64>,
}

fn default_switch_time() -> f64 {
    1.0
}

fn default_small_capacity() -> u32 {
    2
}

/// Switch-edge generation parameters.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SwitchSpec {
    #[serde(default = "default_switch_time")]
    pub time: f64,
    /// Occupancy alphabet bound for switch edges (costs ignore occupancy).
    #[serde(default = "default_small_capacity")]
    pub capacity: u32,
    /// Locations where no switching is possible.
    #[serde(default)]
    pub suppress: Vec<String>,
}

impl Default for SwitchSpec {
    fn default() -> Self {
        SwitchSpec {
            time: default_switch_time(),
            capacity: default_small_capacity(),
            suppress: Vec::new(),
        }
    }
}

/// Network as written in a config file, before expansion.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PhysicalNetwork {
    pub locations: Vec<String>,
    pub modes: Vec<ModeDef>,
    pub edges: Vec<PhysicalEdge>,
    #[serde(default)]
    pub switch: SwitchSpec,
    /// Occupancy alphabet bound for schedule/walk edges lacking one.
    #[serde(default = "default_small_capacity")]
    pub default_capacity: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ExpandedVertex {
    pub location: LocationId,
    pub mode: ModeId,
}

#[derive(Debug, Clone)]
pub struct Edge {
    pub tail: VertexId,
    pub head: VertexId,
    pub attrs: EdgeAttributes,
}

/// Where a traveler sits when a path query starts: either an abstract
/// location (layer not yet chosen) or a concrete layered vertex.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Place {
    Location(LocationId),
    Vertex(VertexId),
}

/// Enumerated simple paths for one traveler, lexicographic by edge ids.
#[derive(Debug, Clone)]
pub struct PathSet {
    pub traveler: TravelerId,
    pub paths: Vec<Vec<EdgeId>>,
}

#[derive(Debug, Clone, Copy)]
pub struct PathOpts {
    pub max_hops: usize,
    pub no_double_switch: bool,
}

impl Default for PathOpts {
    fn default() -> Self {
        PathOpts {
            max_hops: 10,
            no_double_switch: true,
        }
    }
}

#[derive(Debug, Clone)]
pub struct ExpandedGraph {
    pub location_names: Vec<String>,
    pub modes: Vec<ModeDef>,
    pub vertices: Vec<ExpandedVertex>,
    pub edges: Vec<Edge>,
    out: Vec<Vec<EdgeId>>,
    lookup: Vec<Vec<Option<VertexId>>>,
}

impl ExpandedGraph {
    pub fn expand(net: &PhysicalNetwork) -> Result<Self> {
        validate_physical(net)?;
        let loc_index = |name: &str| -> Result<LocationId> {
            net.locations
                .iter()
                .position(|l| l == name)
                .map(LocationId)
                .ok_or_else(|| Error::UnknownLocation(name.to_string()))
        };
        let mode_index = |name: &str| -> Result<ModeId> {
            net.modes
                .iter()
                .position(|m| m.name == name)
                .map(ModeId)
                .ok_or_else(|| Error::UnknownMode(name.to_string()))
        };

        // A layer contains exactly the locations incident to that mode.
        let mut served = vec![vec![false; net.locations.len()]; net.modes.len()];
        for e in &net.edges {
            let m = mode_index(&e.mode)?;
            served[m.0][loc_index(&e.from)?.0] = true;
            served[m.0][loc_index(&e.to)?.0] = true;
        }

        let mut vertices = Vec::new();
        let mut lookup = vec![vec![None; net.locations.len()]; net.modes.len()];
        for (m, layer) in served.iter().enumerate() {
            for (l, &s) in layer.iter().enumerate() {
                if s {
                    lookup[m][l] = Some(VertexId(vertices.len()));
                    vertices.push(ExpandedVertex {
                        location: LocationId(l),
                        mode: ModeId(m),
                    });
                }
            }
        }

        let mut edges: Vec<Edge> = Vec::new();
        for e in &net.edges {
            let mode = mode_index(&e.mode)?;
            let from = loc_index(&e.from)?;
            let to = loc_index(&e.to)?;
            let tail = lookup[mode.0][from.0].expect("tail served");
            let head = lookup[mode.0][to.0].expect("head served");
            let kind = net.modes[mode.0].kind;
            let attrs = match kind {
                ModeKind::Road => EdgeAttributes {
                    mode,
                    mode_kind: kind,
                    kind: EdgeKind::Travel,
                    free_flow_time: e.free_flow_time.unwrap_or(0.0),
                    capacity: e.capacity.unwrap_or(0),
                    length_km: e.length_km.unwrap_or(0.0),
                    fixed_time: 0.0,
                },
                ModeKind::Schedule | ModeKind::Walk => EdgeAttributes {
                    mode,
                    mode_kind: kind,
                    kind: EdgeKind::Travel,
                    free_flow_time: 0.0,
                    capacity: e.capacity.unwrap_or(net.default_capacity),
                    length_km: 0.0,
                    fixed_time: e.fixed_time.unwrap_or(0.0),
                },
            };
            edges.push(Edge { tail, head, attrs });
        }

        let suppressed: Vec<LocationId> = net
            .switch
            .suppress
            .iter()
            .map(|n| loc_index(n))
            .collect::<Result<_>>()?;
        for l in 0..net.locations.len() {
            if suppressed.contains(&LocationId(l)) {
                continue;
            }
            let present: Vec<usize> = (0..net.modes.len())
                .filter(|&m| lookup[m][l].is_some())
                .collect();
            for i in 0..present.len() {
                for j in (i + 1)..present.len() {
                    for (ma, mb) in [(present[i], present[j]), (present[j], present[i])] {
                        edges.push(Edge {
                            tail: lookup[ma][l].unwrap(),
                            head: lookup[mb][l].unwrap(),
                            attrs: EdgeAttributes {
                                mode: ModeId(ma),
                                mode_kind: net.modes[ma].kind,
                                kind: EdgeKind::Switch,
                                free_flow_time: 0.0,
                                capacity: net.switch.capacity,
                                length_km: 0.0,
                                fixed_time: net.switch.time,
                            },
                        });
                    }
                }
            }
        }

        edges.sort_by_key(|e| (e.attrs.mode, e.tail, e.head, e.attrs.kind));

        let mut out = vec![Vec::new(); vertices.len()];
        for (i, e) in edges.iter().enumerate() {
            out[e.tail.0].push(EdgeId(i));
        }

        Ok(ExpandedGraph {
            location_names: net.locations.clone(),
            modes: net.modes.clone(),
            vertices,
            edges,
            out,
            lookup,
        })
    }

    pub fn num_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn edge(&self, id: EdgeId) -> &Edge {
        &self.edges[id.0]
    }

    pub fn vertex(&self, id: VertexId) -> ExpandedVertex {
        self.vertices[id.0]
    }

    pub fn find_vertex(&self, location: LocationId, mode: ModeId) -> Option<VertexId> {
        self.lookup[mode.0][location.0]
    }

    /// Layered copies of a location, ascending by vertex id.
    pub fn modal_copies(&self, location: LocationId) -> Vec<VertexId> {
        (0..self.modes.len())
            .filter_map(|m| self.lookup[m][location.0])
            .collect()
    }

    pub fn out_edges(&self, v: VertexId) -> &[EdgeId] {
        &self.out[v.0]
    }

    pub fn location_id(&self, name: &str) -> Result<LocationId> {
        self.location_names
            .iter()
            .position(|l| l == name)
            .map(LocationId)
            .ok_or_else(|| Error::UnknownLocation(name.to_string()))
    }

    pub fn vertex_label(&self, v: VertexId) -> String {
        let ev = self.vertices[v.0];
        format!(
            "{}:{}",
            self.modes[ev.mode.0].name, self.location_names[ev.location.0]
        )
    }

    pub fn edge_label(&self, e: EdgeId) -> String {
        let edge = &self.edges[e.0];
        let kind = match edge.attrs.kind {
            EdgeKind::Travel => "travel",
            EdgeKind::Switch => "switch",
        };
        format!(
            "{} {} -> {}",
            kind,
            self.vertex_label(edge.tail),
            self.vertex_label(edge.head)
        )
    }

    /// All simple paths from `from` to any layered copy of `dest`.
    ///
    /// Paths end at the first vertex whose location is `dest` (travelers
    /// exit there) and are returned in lexicographic edge-id order. Bounded
    /// by `max_hops` edges; consecutive switch edges are pruned when
    /// `no_double_switch` is set.
    pub fn enumerate_paths(
        &self,
        traveler: TravelerId,
        from: Place,
        dest: LocationId,
        opts: &PathOpts,
    ) -> Result<PathSet> {
        let roots: Vec<VertexId> = match from {
            Place::Location(l) => {
                if l == dest {
                    return Err(Error::Domain(format!(
                        "traveler {} origin equals destination",
                        traveler.0
                    )));
                }
                self.modal_copies(l)
            }
            Place::Vertex(v) => vec![v],
        };
        let mut paths = Vec::new();
        for root in roots {
            if self.vertices[root.0].location == dest {
                continue;
            }
            let mut visited = vec![false; self.vertices.len()];
            visited[root.0] = true;
            let mut prefix = Vec::new();
            self.dfs_paths(root, dest, opts, &mut visited, &mut prefix, &mut paths);
        }
        paths.sort();
        if paths.is_empty() {
            return Err(Error::EmptyPathSet(traveler.0));
        }
        Ok(PathSet { traveler, paths })
    }

    fn dfs_paths(
        &self,
        at: VertexId,
        dest: LocationId,
        opts: &PathOpts,
        visited: &mut Vec<bool>,
        prefix: &mut Vec<EdgeId>,
        paths: &mut Vec<Vec<EdgeId>>,
    ) {
        if prefix.len() >= opts.max_hops {
            return;
        }
        let last_was_switch = prefix
            .last()
            .map(|e| self.edges[e.0].attrs.kind == EdgeKind::Switch)
            .unwrap_or(false);
        for &eid in &self.out[at.0] {
            let edge = &self.edges[eid.0];
            if visited[edge.head.0] {
                continue;
            }
            if opts.no_double_switch && last_was_switch && edge.attrs.kind == EdgeKind::Switch {
                continue;
            }
            prefix.push(eid);
            if self.vertices[edge.head.0].location == dest {
                paths.push(prefix.clone());
            } else {
                visited[edge.head.0] = true;
                self.dfs_paths(edge.head, dest, opts, visited, prefix, paths);
                visited[edge.head.0] = false;
            }
            prefix.pop();
        }
    }

    /// Stable text listing of the expanded graph, one line per vertex/edge.
    pub fn dump(&self) -> String {
        let mut s = String::new();
        for (i, v) in self.vertices.iter().enumerate() {
            s.push_str(&format!(
                "vertex {} {}\n",
                i,
                self.vertex_label(VertexId(i))
            ));
            let _ = v;
        }
        for (i, e) in self.edges.iter().enumerate() {
            let a = &e.attrs;
            let params = match (a.kind, a.mode_kind) {
                (EdgeKind::Switch, _) => format!("fixed_time={} cap={}", a.fixed_time, a.capacity),
                (EdgeKind::Travel, ModeKind::Road) => format!(
                    "free_flow={} cap={} length_km={}",
                    a.free_flow_time, a.capacity, a.length_km
                ),
                (EdgeKind::Travel, _) => {
                    format!("fixed_time={} cap={}", a.fixed_time, a.capacity)
                }
            };
            s.push_str(&format!(
                "edge {} {} {}\n",
                i,
                self.edge_label(EdgeId(i)),
                params
            ));
        }
        s
    }
}

fn validate_physical(net: &PhysicalNetwork) -> Result<()> {
    if net.locations.is_empty() {
        return Err(Error::Config("network has no locations".into()));
    }
    for (i, l) in net.locations.iter().enumerate() {
        if net.locations[..i].contains(l) {
            return Err(Error::Config(format!("duplicate location `{l}`")));
        }
    }
    for (i, m) in net.modes.iter().enumerate() {
        if net.modes[..i].iter().any(|p| p.name == m.name) {
            return Err(Error::Config(format!("duplicate mode `{}`", m.name)));
        }
    }
    let mut seen: Vec<(String, String, String)> = Vec::new();
    for e in &net.edges {
        if e.from == e.to {
            return Err(Error::Config(format!(
                "self-loop {} {}->{}",
                e.mode, e.from, e.to
            )));
        }
        let key = (e.mode.clone(), e.from.clone(), e.to.clone());
        if seen.contains(&key) {
            return Err(Error::DuplicateEdge {
                mode: e.mode.clone(),
                from: e.from.clone(),
                to: e.to.clone(),
            });
        }
        seen.push(key);
        let mode = net
            .modes
            .iter()
            .find(|m| m.name == e.mode)
            .ok_or_else(|| Error::UnknownMode(e.mode.clone()))?;
        if !net.locations.contains(&e.from) {
            return Err(Error::UnknownLocation(e.from.clone()));
        }
        if !net.locations.contains(&e.to) {
            return Err(Error::UnknownLocation(e.to.clone()));
        }
        match mode.kind {
            ModeKind::Road => {
                let f = e.free_flow_time.unwrap_or(0.0);
                let c = e.capacity.unwrap_or(0);
                let l = e.length_km.unwrap_or(-1.0);
                if !(f > 0.0) {
                    return Err(Error::Attribute(format!(
                        "road edge {}->{} needs free_flow_time > 0",
                        e.from, e.to
                    )));
                }
                if c == 0 {
                    return Err(Error::Attribute(format!(
                        "road edge {}->{} needs capacity >= 1",
                        e.from, e.to
                    )));
                }
                if l < 0.0 {
                    return Err(Error::Attribute(format!(
                        "road edge {}->{} needs length_km >= 0",
                        e.from, e.to
                    )));
                }
            }
            ModeKind::Schedule | ModeKind::Walk => {
                if !(e.fixed_time.unwrap_or(0.0) > 0.0) {
                    return Err(Error::Attribute(format!(
                        "{} edge {}->{} needs fixed_time > 0",
                        e.mode, e.from, e.to
                    )));
                }
            }
        }
    }
    if !(net.switch.time >= 0.0) {
        return Err(Error::Attribute("switch time must be >= 0".into()));
    }
    if net.switch.capacity == 0 || net.default_capacity == 0 {
        return Err(Error::Attribute("capacities must be >= 1".into()));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mode(name: &str, kind: ModeKind) -> ModeDef {
        ModeDef {
            name: name.into(),
            kind,
        }
    }

    fn edge(mode: &str, from: &str, to: &str) -> PhysicalEdge {
        PhysicalEdge {
            mode: mode.into(),
            from: from.into(),
            to: to.into(),
            free_flow_time: Some(2.0),
            capacity: Some(2),
            length_km: Some(1.0),
            fixed_time: Some(3.0),
        }
    }

    fn two_mode_net() -> PhysicalNetwork {
        PhysicalNetwork {
            locations: vec!["a".into(), "b".into(), "c".into()],
            modes: vec![mode("car", ModeKind::Road), mode("rail", ModeKind::Schedule)],
            edges: vec![
                edge("car", "a", "b"),
                edge("car", "b", "c"),
                edge("rail", "a", "b"),
                edge("rail", "b", "c"),
            ],
            switch: SwitchSpec::default(),
            default_capacity: 2,
        }
    }

    #[test]
    fn expansion_counts_and_switch_edges() {
        let g = ExpandedGraph::expand(&two_mode_net()).unwrap();
        // Both modes serve all three locations: 6 vertices, 4 travel edges,
        // 2 directed switch edges per location.
        assert_eq!(g.num_vertices(), 6);
        let switches = g
            .edges
            .iter()
            .filter(|e| e.attrs.kind == EdgeKind::Switch)
            .count();
        assert_eq!(switches, 6);
        assert_eq!(g.num_edges(), 10);
    }

    #[test]
    fn single_mode_has_no_switch_edges() {
        let mut net = two_mode_net();
        net.modes.truncate(1);
        net.edges.retain(|e| e.mode == "car");
        let g = ExpandedGraph::expand(&net).unwrap();
        assert!(g.edges.iter().all(|e| e.attrs.kind == EdgeKind::Travel));
    }

    #[test]
    fn expansion_is_deterministic_across_reload() {
        let net = two_mode_net();
        let g1 = ExpandedGraph::expand(&net).unwrap();
        let text = toml::to_string(&net).unwrap();
        let reread: PhysicalNetwork = toml::from_str(&text).unwrap();
        let g2 = ExpandedGraph::expand(&reread).unwrap();
        assert_eq!(g1.dump(), g2.dump());
    }

    #[test]
    fn duplicate_edge_rejected() {
        let mut net = two_mode_net();
        net.edges.push(edge("car", "a", "b"));
        assert!(matches!(
            ExpandedGraph::expand(&net),
            Err(Error::DuplicateEdge { .. })
        ));
    }

    #[test]
    fn paths_are_lexicographic_and_stop_at_destination() {
        let g = ExpandedGraph::expand(&two_mode_net()).unwrap();
        let a = g.location_id("a").unwrap();
        let c = g.location_id("c").unwrap();
        let ps = g
            .enumerate_paths(
                TravelerId(0),
                Place::Location(a),
                c,
                &PathOpts::default(),
            )
            .unwrap();
        assert!(!ps.paths.is_empty());
        for w in ps.paths.windows(2) {
            assert!(w[0] < w[1]);
        }
        for p in &ps.paths {
            // Only the last edge may touch the destination.
            for e in &p[..p.len() - 1] {
                assert_ne!(g.vertex(g.edge(*e).head).location, c);
            }
            assert_eq!(g.vertex(g.edge(*p.last().unwrap()).head).location, c);
        }
    }

    #[test]
    fn no_double_switch_prunes() {
        let mut net = two_mode_net();
        net.modes.push(mode("walk", ModeKind::Walk));
        net.edges.push(PhysicalEdge {
            mode: "walk".into(),
            from: "a".into(),
            to: "b".into(),
            free_flow_time: None,
            capacity: None,
            length_km: None,
            fixed_time: Some(4.0),
        });
        let g = ExpandedGraph::expand(&net).unwrap();
        let a = g.location_id("a").unwrap();
        let c = g.location_id("c").unwrap();
        let strict = g
            .enumerate_paths(TravelerId(0), Place::Location(a), c, &PathOpts::default())
            .unwrap();
        let loose = g
            .enumerate_paths(
                TravelerId(0),
                Place::Location(a),
                c,
                &PathOpts {
                    max_hops: 10,
                    no_double_switch: false,
                },
            )
            .unwrap();
        for p in &strict.paths {
            for w in p.windows(2) {
                let both_switch = g.edge(w[0]).attrs.kind == EdgeKind::Switch
                    && g.edge(w[1]).attrs.kind == EdgeKind::Switch;
                assert!(!both_switch);
            }
        }
        assert!(loose.paths.len() >= strict.paths.len());
    }

    #[test]
    fn empty_path_set_names_traveler() {
        let mut net = two_mode_net();
        net.edges.retain(|e| !(e.from == "b" && e.to == "c"));
        let g = ExpandedGraph::expand(&net).unwrap();
        let a = g.location_id("a").unwrap();
        let c = g.location_id("c").unwrap();
        let err = g
            .enumerate_paths(TravelerId(7), Place::Location(a), c, &PathOpts::default())
            .unwrap_err();
        assert!(matches!(err, Error::EmptyPathSet(7)));
    }
}
