use std::collections::{BTreeMap, VecDeque};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::reroute::RuleEvidence;
use crate::topology::{Topology, VertexId};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RouteError {
    #[error("no route from {from} to host {to}")]
    Unreachable { from: VertexId, to: VertexId },
    #[error("forwarding loop for {src}->{dst}: vertex {vertex} visited twice")]
    Loop { src: VertexId, dst: VertexId, vertex: VertexId },
    #[error("vertex {0} is not a host")]
    NotAHost(VertexId),
    #[error("rule at router {router}: next hop {next_hop} is not adjacent")]
    NotAdjacent { router: VertexId, next_hop: VertexId },
    #[error("rule references unknown vertex {0}")]
    UnknownVertex(VertexId),
}

/// Source/destination host pair; the PBR match key.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct SdPair {
    pub src: VertexId,
    pub dst: VertexId,
}

impl fmt::Display for SdPair {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}->{}", self.src, self.dst)
    }
}

/// Policy-based routing entry: at `router`, traffic of `match` leaves via
/// `next_hop` instead of the shortest-path next hop.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PbrRule {
    pub router: VertexId,
    #[serde(rename = "match")]
    pub match_pair: SdPair,
    pub next_hop: VertexId,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub evidence: Option<RuleEvidence>,
}

impl PbrRule {
    pub fn new(router: VertexId, match_pair: SdPair, next_hop: VertexId) -> Self {
        Self { router, match_pair, next_hop, evidence: None }
    }
}

/// Forwarding state: unit-cost shortest-path next hops per destination host
/// plus ordered PBR overrides per router.
#[derive(Debug, Clone, PartialEq)]
pub struct RoutingState {
    adjacency: Vec<Vec<VertexId>>,
    hosts: Vec<VertexId>,
    host_slot: Vec<Option<usize>>,
    /// `next_hop[v][slot]` toward `hosts[slot]`; `None` at the host itself.
    next_hop: Vec<Vec<Option<VertexId>>>,
    dist: Vec<Vec<Option<u32>>>,
    rules: BTreeMap<VertexId, Vec<PbrRule>>,
}

/// Shortest-path (hop count) forwarding tables. Ties go to the lowest
/// neighbour id. Fails on the first unreachable (vertex, host) pair.
pub fn build_routing_tables(topology: &Topology) -> Result<RoutingState, RouteError> {
    let n = topology.vertex_count();
    let adjacency: Vec<Vec<VertexId>> =
        (0..n).map(|v| topology.neighbors(v).iter().map(|&(w, _)| w).collect()).collect();
    let hosts = topology.hosts();
    let mut host_slot = vec![None; n];
    for (i, &h) in hosts.iter().enumerate() {
        host_slot[h] = Some(i);
    }
    let mut next_hop = vec![vec![None; hosts.len()]; n];
    let mut dist = vec![vec![None; hosts.len()]; n];
    for (slot, &h) in hosts.iter().enumerate() {
        let d = bfs(&adjacency, h);
        for v in 0..n {
            let Some(dv) = d[v] else {
                return Err(RouteError::Unreachable { from: v, to: h });
            };
            dist[v][slot] = Some(dv);
            if v != h {
                next_hop[v][slot] = adjacency[v].iter().copied().find(|&w| d[w] == Some(dv - 1));
            }
        }
    }
    Ok(RoutingState { adjacency, hosts, host_slot, next_hop, dist, rules: BTreeMap::new() })
}

fn bfs(adj: &[Vec<VertexId>], src: VertexId) -> Vec<Option<u32>> {
    let mut d = vec![None; adj.len()];
    d[src] = Some(0);
    let mut q = VecDeque::from([src]);
    while let Some(u) = q.pop_front() {
        let du = d[u].unwrap();
        for &w in &adj[u] {
            if d[w].is_none() {
                d[w] = Some(du + 1);
                q.push_back(w);
            }
        }
    }
    d
}

/// Appends `rules` to the override lists (earlier entries win) after
/// checking every next hop is adjacent to its router.
pub fn apply_pbr(state: &RoutingState, rules: &[PbrRule]) -> Result<RoutingState, RouteError> {
    let mut next = state.clone();
    for r in rules {
        next.validate_rule(r)?;
        next.rules.entry(r.router).or_default().push(r.clone());
    }
    Ok(next)
}

/// Forwarding path from `src` to `dst` under the current rules.
pub fn trace_route(state: &RoutingState, src: VertexId, dst: VertexId) -> Result<Vec<VertexId>, RouteError> {
    state.trace(src, dst)
}

/// Ping analogue: true iff [`trace_route`] succeeds.
pub fn reachable(state: &RoutingState, src: VertexId, dst: VertexId) -> bool {
    state.trace(src, dst).is_ok()
}

impl RoutingState {
    fn validate_rule(&self, r: &PbrRule) -> Result<(), RouteError> {
        for v in [r.router, r.next_hop, r.match_pair.src, r.match_pair.dst] {
            if v >= self.adjacency.len() {
                return Err(RouteError::UnknownVertex(v));
            }
        }
        if self.adjacency[r.router].binary_search(&r.next_hop).is_err() {
            return Err(RouteError::NotAdjacent { router: r.router, next_hop: r.next_hop });
        }
        Ok(())
    }

    pub fn vertex_count(&self) -> usize {
        self.adjacency.len()
    }

    pub fn hosts(&self) -> &[VertexId] {
        &self.hosts
    }

    /// Installed rules, grouped by router in ascending order.
    pub fn rules(&self) -> impl Iterator<Item = &PbrRule> {
        self.rules.values().flatten()
    }

    pub fn rules_at(&self, router: VertexId) -> &[PbrRule] {
        self.rules.get(&router).map_or(&[], |v| v.as_slice())
    }

    pub fn rule_count(&self) -> usize {
        self.rules.values().map(Vec::len).sum()
    }

    /// Swaps the whole rule list of one router.
    pub fn replace_rules_at(&mut self, router: VertexId, rules: Vec<PbrRule>) -> Result<(), RouteError> {
        for r in &rules {
            if r.router != router {
                return Err(RouteError::UnknownVertex(r.router));
            }
            self.validate_rule(r)?;
        }
        if rules.is_empty() {
            self.rules.remove(&router);
        } else {
            self.rules.insert(router, rules);
        }
        Ok(())
    }

    /// Drops every rule matching `pair`, returning how many went.
    pub fn remove_rules_for(&mut self, pair: SdPair) -> usize {
        let mut removed = 0;
        for list in self.rules.values_mut() {
            let before = list.len();
            list.retain(|r| r.match_pair != pair);
            removed += before - list.len();
        }
        self.rules.retain(|_, v| !v.is_empty());
        removed
    }

    pub fn clear_rules(&mut self) {
        self.rules.clear();
    }

    /// Shortest-path next hop from `at` toward host `dst`, ignoring rules.
    pub fn base_next_hop(&self, at: VertexId, dst: VertexId) -> Option<VertexId> {
        let slot = (*self.host_slot.get(dst)?)?;
        self.next_hop.get(at)?[slot]
    }

    /// Hop distance from `at` to host `dst`.
    pub fn distance(&self, at: VertexId, dst: VertexId) -> Option<u32> {
        let slot = (*self.host_slot.get(dst)?)?;
        self.dist.get(at)?[slot]
    }

    /// Next hop for `pair` at `at`: first matching rule, else the base table.
    pub fn next_hop(&self, at: VertexId, pair: SdPair) -> Option<VertexId> {
        if let Some(list) = self.rules.get(&at) {
            if let Some(r) = list.iter().find(|r| r.match_pair == pair) {
                return Some(r.next_hop);
            }
        }
        self.base_next_hop(at, pair.dst)
    }

    fn trace(&self, src: VertexId, dst: VertexId) -> Result<Vec<VertexId>, RouteError> {
        for h in [src, dst] {
            if self.host_slot.get(h).copied().flatten().is_none() {
                return Err(RouteError::NotAHost(h));
            }
        }
        let pair = SdPair { src, dst };
        let mut visited = vec![false; self.adjacency.len()];
        let mut path = vec![src];
        visited[src] = true;
        let mut at = src;
        while at != dst {
            let next = self.next_hop(at, pair).ok_or(RouteError::Unreachable { from: at, to: dst })?;
            if visited[next] {
                return Err(RouteError::Loop { src, dst, vertex: next });
            }
            visited[next] = true;
            path.push(next);
            at = next;
        }
        Ok(path)
    }

    /// Traces every ordered host pair; returns the pairs that fail.
    pub fn broken_pairs(&self) -> Vec<(SdPair, RouteError)> {
        let mut out = Vec::new();
        for &s in &self.hosts {
            for &d in &self.hosts {
                if s != d {
                    if let Err(e) = self.trace(s, d) {
                        out.push((SdPair { src: s, dst: d }, e));
                    }
                }
            }
        }
        out
    }

    /// Human-readable rule listing for diagnostics.
    pub fn describe_rules(&self) -> String {
        let parts: Vec<String> =
            self.rules().map(|r| format!("@{} {} -> {}", r.router, r.match_pair, r.next_hop)).collect();
        if parts.is_empty() {
            "no rules".to_string()
        } else {
            parts.join("; ")
        }
    }
}

/// Hosts whose LAN hangs directly off `router`.
pub fn lan_hosts_at(topology: &Topology, router: VertexId) -> Vec<VertexId> {
    topology.lans().iter().filter(|l| l.gateway == Some(router)).flat_map(|l| l.hosts.iter().copied()).collect()
}
