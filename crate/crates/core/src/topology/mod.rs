//! Degree-constrained random core graphs and the layered provider topology
//! built on top of them.
//!
//! A [`CoreGraph`] holds the provider (P) routers produced by one of the
//! random-graph models. [`assign_roles`] hangs the edge network off it:
//! one PE router per gateway P vertex, a CE router behind each PE, one
//! switch per CE and three hosts per switch. Each PE chain forms one LAN.

mod generate;
mod stats;

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use generate::{gen_barabasi_albert, gen_erdos_renyi, gen_watts_strogatz, generate, GraphSpec};
pub use stats::{topology_stats, TopologyStats, DEFAULT_PATH_CEILING};

/// Vertex identifier. P routers always occupy `0..core_count`.
pub type VertexId = usize;

/// Hosts attached to every switch.
pub const HOSTS_PER_SWITCH: usize = 3;

#[derive(Debug, Error, PartialEq)]
pub enum TopologyError {
    #[error("invalid degree bounds: min {min}, max {max} (need 2 <= min <= max)")]
    InvalidBounds { min: usize, max: usize },
    #[error("{n} vertices cannot satisfy minimum degree {min_deg}")]
    TooFewVertices { n: usize, min_deg: usize },
    #[error("invalid model parameter: {0}")]
    InvalidParameter(String),
    #[error("degree repair did not converge after {attempts} regenerations (seed {seed})")]
    RepairFailed { seed: u64, attempts: usize },
    #[error("core has {p} P routers but {pe} PE routers need distinct attachment points")]
    NotEnoughCoreVertices { p: usize, pe: usize },
    #[error("path enumeration exceeded ceiling of {ceiling} paths")]
    PathCeilingExceeded { ceiling: u64 },
    #[error("vertex {0} is not a core vertex")]
    NotCoreVertex(VertexId),
    #[error("malformed topology: {0}")]
    Malformed(String),
}

/// Inclusive per-vertex degree limits.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DegreeBounds {
    pub min_deg: usize,
    pub max_deg: usize,
}

impl DegreeBounds {
    pub fn new(min_deg: usize, max_deg: usize) -> Result<Self, TopologyError> {
        if min_deg < 2 || min_deg > max_deg {
            return Err(TopologyError::InvalidBounds { min: min_deg, max: max_deg });
        }
        Ok(Self { min_deg, max_deg })
    }

    /// Upper bound actually reachable in a simple graph on `n` vertices.
    pub fn effective_max(&self, n: usize) -> usize {
        self.max_deg.min(n.saturating_sub(1))
    }
}

impl Default for DegreeBounds {
    fn default() -> Self {
        Self { min_deg: 2, max_deg: 9 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum GraphModel {
    #[serde(rename = "er")]
    ErdosRenyi,
    #[serde(rename = "ba")]
    BarabasiAlbert,
    #[serde(rename = "ws")]
    WattsStrogatz,
}

impl GraphModel {
    pub const ALL: [GraphModel; 3] = [GraphModel::ErdosRenyi, GraphModel::BarabasiAlbert, GraphModel::WattsStrogatz];

    pub fn short_name(self) -> &'static str {
        match self {
            GraphModel::ErdosRenyi => "er",
            GraphModel::BarabasiAlbert => "ba",
            GraphModel::WattsStrogatz => "ws",
        }
    }
}

impl fmt::Display for GraphModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.short_name())
    }
}

impl FromStr for GraphModel {
    type Err = TopologyError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "er" | "erdos_renyi" | "erdos-renyi" => Ok(GraphModel::ErdosRenyi),
            "ba" | "barabasi_albert" | "barabasi-albert" => Ok(GraphModel::BarabasiAlbert),
            "ws" | "watts_strogatz" | "watts-strogatz" => Ok(GraphModel::WattsStrogatz),
            other => Err(TopologyError::InvalidParameter(format!("unknown graph model `{other}`"))),
        }
    }
}

/// Model parameters; only the ones relevant to the model are set.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct GraphParams {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub m: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k: Option<usize>,
}

/// Simple, connected, degree-bounded graph of P routers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoreGraph {
    pub n: usize,
    /// Undirected edges as `(u, v)` with `u < v`, sorted.
    pub edges: Vec<(VertexId, VertexId)>,
    pub model: GraphModel,
    pub seed: u64,
    pub params: GraphParams,
    pub bounds: DegreeBounds,
    /// Number of regenerations (seed + i) needed before repair converged.
    pub regenerations: usize,
    /// Edge insertions and removals performed by the repair loop.
    pub repair_edits: usize,
}

impl CoreGraph {
    pub fn degrees(&self) -> Vec<usize> {
        let mut deg = vec![0; self.n];
        for &(u, v) in &self.edges {
            deg[u] += 1;
            deg[v] += 1;
        }
        deg
    }

    pub fn adjacency(&self) -> Vec<Vec<VertexId>> {
        adjacency_lists(self.n, &self.edges)
    }

    pub fn is_connected(&self) -> bool {
        is_connected(&self.adjacency())
    }
}

pub(crate) fn adjacency_lists(n: usize, edges: &[(VertexId, VertexId)]) -> Vec<Vec<VertexId>> {
    let mut adj = vec![Vec::new(); n];
    for &(u, v) in edges {
        adj[u].push(v);
        adj[v].push(u);
    }
    for list in &mut adj {
        list.sort_unstable();
    }
    adj
}

pub(crate) fn is_connected(adj: &[Vec<VertexId>]) -> bool {
    if adj.is_empty() {
        return true;
    }
    let mut seen = vec![false; adj.len()];
    let mut stack = vec![0];
    seen[0] = true;
    let mut count = 1;
    while let Some(u) = stack.pop() {
        for &w in &adj[u] {
            if !seen[w] {
                seen[w] = true;
                count += 1;
                stack.push(w);
            }
        }
    }
    count == adj.len()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Role {
    P,
    #[serde(rename = "PE")]
    Pe,
    #[serde(rename = "CE")]
    Ce,
    Switch,
    Host,
}

/// Link capacity class, decided by the roles of its endpoints.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LinkClass {
    /// P to P.
    Core,
    /// Anything between a P router and a switch (PE and CE hops).
    Edge,
    /// Switch to host.
    Access,
}

impl LinkClass {
    pub fn between(a: Role, b: Role) -> Self {
        match (a, b) {
            (Role::P, Role::P) => LinkClass::Core,
            (Role::Host, _) | (_, Role::Host) => LinkClass::Access,
            _ => LinkClass::Edge,
        }
    }
}

/// Bandwidth (bytes/s) and propagation delay (s) handed out per link class.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LinkProfile {
    pub core_bandwidth: f64,
    pub edge_bandwidth: f64,
    pub access_bandwidth: f64,
    pub prop_delay: f64,
}

impl Default for LinkProfile {
    fn default() -> Self {
        Self { core_bandwidth: 1e7, edge_bandwidth: 1e7, access_bandwidth: 1e7, prop_delay: 1e-3 }
    }
}

impl LinkProfile {
    pub fn bandwidth(&self, class: LinkClass) -> f64 {
        match class {
            LinkClass::Core => self.core_bandwidth,
            LinkClass::Edge => self.edge_bandwidth,
            LinkClass::Access => self.access_bandwidth,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Vertex {
    pub id: VertexId,
    pub role: Role,
    pub lan: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Link {
    pub u: VertexId,
    pub v: VertexId,
    pub bandwidth_bytes_per_s: f64,
    pub prop_delay_s: f64,
}

/// One customer site: the access chain behind a PE plus its hosts.
#[derive(Debug, Clone, PartialEq)]
pub struct Lan {
    pub id: usize,
    pub pe: Option<VertexId>,
    pub ce: Option<VertexId>,
    pub switch: Option<VertexId>,
    pub hosts: Vec<VertexId>,
    /// P router the LAN hangs off.
    pub gateway: Option<VertexId>,
}

/// A core edge with direction; index into [`Topology::core_directed_edges`].
pub type DirectedEdge = (VertexId, VertexId);

/// Full layered topology: P core plus PE/CE/switch/host attachments.
#[derive(Debug, Clone, PartialEq)]
pub struct Topology {
    pub model: Option<GraphModel>,
    pub seed: u64,
    pub params: GraphParams,
    vertices: Vec<Vertex>,
    links: Vec<Link>,
    core_count: usize,
    adjacency: Vec<Vec<(VertexId, usize)>>,
    lans: Vec<Lan>,
    core_edges: Vec<DirectedEdge>,
}

impl Topology {
    /// Builds a topology from explicit vertices and links.
    ///
    /// Vertex ids must equal their index, P routers must occupy the lowest
    /// ids, and every host needs a LAN id.
    pub fn from_parts(
        model: Option<GraphModel>,
        seed: u64,
        params: GraphParams,
        vertices: Vec<Vertex>,
        links: Vec<Link>,
    ) -> Result<Self, TopologyError> {
        let n = vertices.len();
        for (i, v) in vertices.iter().enumerate() {
            if v.id != i {
                return Err(TopologyError::Malformed(format!("vertex at index {i} has id {}", v.id)));
            }
            if v.role == Role::Host && v.lan.is_none() {
                return Err(TopologyError::Malformed(format!("host {i} has no LAN")));
            }
        }
        let core_count = vertices.iter().take_while(|v| v.role == Role::P).count();
        if vertices[core_count..].iter().any(|v| v.role == Role::P) {
            return Err(TopologyError::Malformed("P routers must occupy the lowest ids".into()));
        }

        let mut links = links;
        for l in &mut links {
            if l.u == l.v || l.u >= n || l.v >= n {
                return Err(TopologyError::Malformed(format!("bad link {}-{}", l.u, l.v)));
            }
            if l.u > l.v {
                std::mem::swap(&mut l.u, &mut l.v);
            }
            let bw = l.bandwidth_bytes_per_s;
            if bw.is_nan() || bw <= 0.0 || l.prop_delay_s.is_nan() || l.prop_delay_s < 0.0 {
                return Err(TopologyError::Malformed(format!("bad attributes on link {}-{}", l.u, l.v)));
            }
        }
        links.sort_by_key(|l| (l.u, l.v));
        if links.windows(2).any(|w| (w[0].u, w[0].v) == (w[1].u, w[1].v)) {
            return Err(TopologyError::Malformed("duplicate link".into()));
        }

        let mut adjacency = vec![Vec::new(); n];
        for (i, l) in links.iter().enumerate() {
            adjacency[l.u].push((l.v, i));
            adjacency[l.v].push((l.u, i));
        }
        for list in &mut adjacency {
            list.sort_unstable();
        }

        let mut by_lan: BTreeMap<usize, Lan> = BTreeMap::new();
        for v in &vertices {
            let Some(lan) = v.lan else { continue };
            let entry = by_lan.entry(lan).or_insert_with(|| Lan {
                id: lan,
                pe: None,
                ce: None,
                switch: None,
                hosts: Vec::new(),
                gateway: None,
            });
            match v.role {
                Role::Pe => entry.pe = Some(v.id),
                Role::Ce => entry.ce = Some(v.id),
                Role::Switch => entry.switch = Some(v.id),
                Role::Host => entry.hosts.push(v.id),
                Role::P => return Err(TopologyError::Malformed(format!("P router {} carries a LAN id", v.id))),
            }
        }
        for lan in by_lan.values_mut() {
            let members = lan.pe.iter().chain(&lan.ce).chain(&lan.switch).chain(&lan.hosts);
            lan.gateway = members.flat_map(|&m| adjacency[m].iter().map(|&(w, _)| w)).filter(|&w| w < core_count).min();
        }

        let mut core_edges = Vec::new();
        for l in &links {
            if l.u < core_count && l.v < core_count {
                core_edges.push((l.u, l.v));
                core_edges.push((l.v, l.u));
            }
        }
        core_edges.sort_unstable();

        Ok(Self {
            model,
            seed,
            params,
            vertices,
            links,
            core_count,
            adjacency,
            lans: by_lan.into_values().collect(),
            core_edges,
        })
    }

    pub fn vertices(&self) -> &[Vertex] {
        &self.vertices
    }

    pub fn links(&self) -> &[Link] {
        &self.links
    }

    pub fn vertex_count(&self) -> usize {
        self.vertices.len()
    }

    pub fn core_count(&self) -> usize {
        self.core_count
    }

    pub fn role(&self, v: VertexId) -> Role {
        self.vertices[v].role
    }

    pub fn lans(&self) -> &[Lan] {
        &self.lans
    }

    pub fn lan_of(&self, v: VertexId) -> Option<usize> {
        self.vertices.get(v).and_then(|x| x.lan)
    }

    pub fn lan(&self, id: usize) -> Option<&Lan> {
        self.lans.iter().find(|l| l.id == id)
    }

    /// Sorted `(neighbor, link index)` pairs.
    pub fn neighbors(&self, v: VertexId) -> &[(VertexId, usize)] {
        &self.adjacency[v]
    }

    pub fn are_adjacent(&self, u: VertexId, v: VertexId) -> bool {
        self.link_between(u, v).is_some()
    }

    pub fn link_between(&self, u: VertexId, v: VertexId) -> Option<&Link> {
        let list = self.adjacency.get(u)?;
        list.binary_search_by_key(&v, |&(w, _)| w).ok().map(|i| &self.links[list[i].1])
    }

    pub fn hosts(&self) -> Vec<VertexId> {
        self.vertices.iter().filter(|v| v.role == Role::Host).map(|v| v.id).collect()
    }

    /// Every directed P-to-P edge, sorted by `(source, target)`.
    pub fn core_directed_edges(&self) -> &[DirectedEdge] {
        &self.core_edges
    }

    pub fn core_edge_index(&self, e: DirectedEdge) -> Option<usize> {
        self.core_edges.binary_search(&e).ok()
    }

    /// Unordered pairs of distinct LAN gateways, sorted.
    pub fn gateway_pairs(&self) -> Vec<(VertexId, VertexId)> {
        let mut gws: Vec<VertexId> = self.lans.iter().filter_map(|l| l.gateway).collect();
        gws.sort_unstable();
        gws.dedup();
        let mut pairs = Vec::new();
        for i in 0..gws.len() {
            for j in i + 1..gws.len() {
                pairs.push((gws[i], gws[j]));
            }
        }
        pairs
    }

    /// The P-router subgraph as a [`CoreGraph`]-shaped edge list.
    pub fn core_edges_undirected(&self) -> Vec<(VertexId, VertexId)> {
        self.core_edges.iter().copied().filter(|&(u, v)| u < v).collect()
    }

    pub fn to_file(&self) -> TopologyFile {
        TopologyFile {
            model: self.model,
            seed: self.seed,
            params: self.params,
            vertices: self.vertices.clone(),
            edges: self.links.clone(),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.to_file()).expect("topology serializes")
    }

    pub fn from_json(s: &str) -> Result<Self, TopologyError> {
        let file: TopologyFile = serde_json::from_str(s).map_err(|e| TopologyError::Malformed(e.to_string()))?;
        Self::try_from(file)
    }
}

/// On-disk JSON shape of a [`Topology`].
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TopologyFile {
    pub model: Option<GraphModel>,
    pub seed: u64,
    #[serde(default)]
    pub params: GraphParams,
    pub vertices: Vec<Vertex>,
    pub edges: Vec<Link>,
}

impl TryFrom<TopologyFile> for Topology {
    type Error = TopologyError;

    fn try_from(f: TopologyFile) -> Result<Self, Self::Error> {
        Topology::from_parts(f.model, f.seed, f.params, f.vertices, f.edges)
    }
}

/// Number of PE routers for a core of `p` routers: `max(2, floor(p / 5) + 1)`.
pub fn pe_count(p: usize) -> usize {
    (p / 5 + 1).max(2)
}

/// Attaches the PE/CE/switch/host layers to a core graph.
///
/// PEs go to distinct P vertices in descending degree order, ties to the
/// lower id. Ids are allocated in blocks: P, then PEs, CEs, switches, hosts.
pub fn assign_roles(core: &CoreGraph, profile: &LinkProfile) -> Result<Topology, TopologyError> {
    let p = core.n;
    let pe = pe_count(p);
    if p < pe {
        return Err(TopologyError::NotEnoughCoreVertices { p, pe });
    }
    let deg = core.degrees();
    let mut order: Vec<VertexId> = (0..p).collect();
    order.sort_by_key(|&v| (std::cmp::Reverse(deg[v]), v));
    let mut topo = attach_lans(p, &core.edges, &order[..pe], profile)?;
    topo.model = Some(core.model);
    topo.seed = core.seed;
    topo.params = core.params;
    Ok(topo)
}

/// Builds a layered topology over an explicit core: `n_core` P routers
/// joined by `core_edges`, and one PE/CE/switch/host LAN hanging off each
/// entry of `gateways` (in that order). Handy for hand-made fixtures.
pub fn attach_lans(
    n_core: usize,
    core_edges: &[(VertexId, VertexId)],
    gateways: &[VertexId],
    profile: &LinkProfile,
) -> Result<Topology, TopologyError> {
    let p = n_core;
    let pe = gateways.len();
    if let Some(&g) = gateways.iter().find(|&&g| g >= p) {
        return Err(TopologyError::NotCoreVertex(g));
    }
    let pe_base = p;
    let ce_base = pe_base + pe;
    let sw_base = ce_base + pe;
    let host_base = sw_base + pe;
    let total = host_base + HOSTS_PER_SWITCH * pe;

    let mut vertices: Vec<Vertex> = (0..p).map(|id| Vertex { id, role: Role::P, lan: None }).collect();
    for (block, role) in [(pe_base, Role::Pe), (ce_base, Role::Ce), (sw_base, Role::Switch)] {
        for i in 0..pe {
            vertices.push(Vertex { id: block + i, role, lan: Some(i) });
        }
    }
    for h in 0..HOSTS_PER_SWITCH * pe {
        vertices.push(Vertex { id: host_base + h, role: Role::Host, lan: Some(h / HOSTS_PER_SWITCH) });
    }
    debug_assert_eq!(vertices.len(), total);

    let link = |u: VertexId, v: VertexId, class: LinkClass| Link {
        u,
        v,
        bandwidth_bytes_per_s: profile.bandwidth(class),
        prop_delay_s: profile.prop_delay,
    };
    let mut links: Vec<Link> = core_edges.iter().map(|&(u, v)| link(u, v, LinkClass::Core)).collect();
    for (i, &gw) in gateways.iter().enumerate() {
        links.push(link(gw, pe_base + i, LinkClass::Edge));
        links.push(link(pe_base + i, ce_base + i, LinkClass::Edge));
        links.push(link(ce_base + i, sw_base + i, LinkClass::Edge));
        for h in 0..HOSTS_PER_SWITCH {
            links.push(link(sw_base + i, host_base + i * HOSTS_PER_SWITCH + h, LinkClass::Access));
        }
    }

    Topology::from_parts(None, 0, GraphParams::default(), vertices, links)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn triangle() -> CoreGraph {
        gen_erdos_renyi(3, 0.5, DegreeBounds::default(), 1).unwrap()
    }

    #[test]
    fn bounds_validation() {
        assert!(DegreeBounds::new(1, 9).is_err());
        assert!(DegreeBounds::new(4, 3).is_err());
        assert_eq!(DegreeBounds::new(2, 9).unwrap(), DegreeBounds::default());
    }

    #[test]
    fn pe_counts_follow_floor_formula() {
        assert_eq!(pe_count(5), 2);
        assert_eq!(pe_count(9), 2);
        assert_eq!(pe_count(10), 3);
        assert_eq!(pe_count(15), 4);
        assert_eq!(pe_count(3), 2);
    }

    #[test]
    fn roles_for_five_p_routers() {
        let core = gen_barabasi_albert(5, 2, DegreeBounds::default(), 3).unwrap();
        let topo = assign_roles(&core, &LinkProfile::default()).unwrap();
        let count = |r: Role| topo.vertices().iter().filter(|v| v.role == r).count();
        assert_eq!(count(Role::P), 5);
        assert_eq!(count(Role::Pe), 2);
        assert_eq!(count(Role::Ce), 2);
        assert_eq!(count(Role::Switch), 2);
        assert_eq!(count(Role::Host), 6);
        for lan in topo.lans() {
            assert_eq!(lan.hosts.len(), 3);
            let sw = lan.switch.unwrap();
            for &h in &lan.hosts {
                assert!(topo.are_adjacent(h, sw));
            }
        }
    }

    #[test]
    fn pe_attach_to_highest_degree_vertices() {
        let core = gen_erdos_renyi(10, 0.4, DegreeBounds::default(), 11).unwrap();
        let topo = assign_roles(&core, &LinkProfile::default()).unwrap();
        let deg = core.degrees();
        let mut gws: Vec<_> = topo.lans().iter().map(|l| l.gateway.unwrap()).collect();
        let min_gw_deg = gws.iter().map(|&g| deg[g]).min().unwrap();
        for (v, &d) in deg.iter().enumerate() {
            if !gws.contains(&v) {
                assert!(d <= min_gw_deg);
            }
        }
        gws.dedup();
        assert_eq!(gws.len(), 3);
    }

    #[test]
    fn triangle_cannot_host_more_pes_than_vertices() {
        // pe_count(3) = 2 <= 3, so this succeeds; a 1-vertex core would not.
        assert!(assign_roles(&triangle(), &LinkProfile::default()).is_ok());
        let tiny = CoreGraph { n: 1, edges: vec![], ..triangle() };
        assert_eq!(
            assign_roles(&tiny, &LinkProfile::default()).unwrap_err(),
            TopologyError::NotEnoughCoreVertices { p: 1, pe: 2 }
        );
    }

    #[test]
    fn json_round_trip_rebuilds_lans() {
        let core = gen_watts_strogatz(10, 4, 0.3, DegreeBounds::default(), 5).unwrap();
        let topo = assign_roles(&core, &LinkProfile::default()).unwrap();
        let back = Topology::from_json(&topo.to_json()).unwrap();
        assert_eq!(back, topo);
    }

    #[test]
    fn link_classes_get_profile_bandwidth() {
        let profile = LinkProfile { core_bandwidth: 1.0, edge_bandwidth: 2.0, access_bandwidth: 3.0, prop_delay: 0.5 };
        let topo = assign_roles(&triangle(), &profile).unwrap();
        for l in topo.links() {
            let class = LinkClass::between(topo.role(l.u), topo.role(l.v));
            assert_eq!(l.bandwidth_bytes_per_s, profile.bandwidth(class));
            assert_eq!(l.prop_delay_s, 0.5);
        }
    }

    #[test]
    fn directed_core_edges_double_undirected() {
        let core = gen_erdos_renyi(5, 0.6, DegreeBounds::default(), 2).unwrap();
        let topo = assign_roles(&core, &LinkProfile::default()).unwrap();
        assert_eq!(topo.core_directed_edges().len(), 2 * core.edges.len());
        assert_eq!(topo.core_edges_undirected(), core.edges);
    }

    #[test]
    fn malformed_inputs_rejected() {
        let v = |id, role, lan| Vertex { id, role, lan };
        let err = Topology::from_parts(
            None,
            0,
            GraphParams::default(),
            vec![v(0, Role::Host, Some(0)), v(1, Role::P, None)],
            vec![],
        )
        .unwrap_err();
        assert!(matches!(err, TopologyError::Malformed(_)));
        let err =
            Topology::from_parts(None, 0, GraphParams::default(), vec![v(0, Role::Host, None)], vec![]).unwrap_err();
        assert!(matches!(err, TopologyError::Malformed(_)));
    }
}
