//! Per-vertex rerouting decisions: how much traffic to move off congested
//! interfaces, which source/destination pairs to move, and where.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::mpnn::CongestionClass;
use crate::netsim::{apply_pbr, reachable, trace_route, PacketRecord, PbrRule, RoutingState, SdPair};
use crate::topology::{DirectedEdge, Topology, VertexId};

/// Cap on the share of a vertex's traffic that one cycle may divert.
pub const MAX_REROUTE_PCT: f64 = 50.0;
/// Weight on the highly congested category.
pub const W_RATIO_HIGH: f64 = 1.0;
/// Weight on the moderately congested category.
pub const W_RATIO_MODERATE: f64 = 0.75;

#[derive(Debug, Error, PartialEq)]
pub enum RerouteError {
    #[error("rerouting is not feasible for counts {0:?}")]
    NotFeasible(CategoryCounts),
}

/// Outgoing-edge counts per class at one vertex.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct CategoryCounts {
    /// Uncongested (class 4).
    pub e_u: usize,
    /// Balanced (class 3).
    pub e_b: usize,
    /// Moderately congested (class 2).
    pub e_m: usize,
    /// Highly congested (class 1).
    pub e_h: usize,
}

impl CategoryCounts {
    pub fn new(e_u: usize, e_b: usize, e_m: usize, e_h: usize) -> Self {
        Self { e_u, e_b, e_m, e_h }
    }

    pub fn total(&self) -> usize {
        self.e_u + self.e_b + self.e_m + self.e_h
    }
}

/// Why a rule exists: the decision inputs at its router.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RuleEvidence {
    pub percentage: f64,
    pub counts: CategoryCounts,
    pub window: (f64, f64),
}

/// Byte share of one pair in a vertex's forwarded traffic, in percent.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SdShare {
    pub pair: SdPair,
    pub share: f64,
}

/// Counts the classes of the directed edges leaving `vertex`.
pub fn categorize(vertex: VertexId, edge_classes: &[(DirectedEdge, CongestionClass)]) -> CategoryCounts {
    let mut c = CategoryCounts::default();
    for &((u, _), class) in edge_classes {
        if u != vertex {
            continue;
        }
        match class {
            CongestionClass::HighlyCongested => c.e_h += 1,
            CongestionClass::ModeratelyCongested => c.e_m += 1,
            CongestionClass::Balanced => c.e_b += 1,
            CongestionClass::Uncongested => c.e_u += 1,
        }
    }
    c
}

/// Needs at least one free and one congested interface, and more than two
/// interfaces overall.
pub fn should_reroute(c: &CategoryCounts) -> bool {
    // all-free, all-busy and degree-2 vertices are excluded by these three
    c.total() > 2 && c.e_u + c.e_b >= 1 && c.e_m + c.e_h >= 1
}

/// Share of traffic to divert, in percent, capped at [`MAX_REROUTE_PCT`].
///
/// Each congested category contributes `w * (100 - 100 * count / total)`
/// only when its count is positive; the sum is spread over the congested
/// edge count. Both weights times 100 are whole numbers, so the numerator
/// is exact and one division gives the correctly rounded result.
pub fn reroute_percentage(c: &CategoryCounts) -> Result<f64, RerouteError> {
    if !should_reroute(c) {
        return Err(RerouteError::NotFeasible(*c));
    }
    let t = c.total();
    let weighted = |count: usize, ratio: f64| {
        if count > 0 {
            ratio * 100.0 * (t - count) as f64
        } else {
            0.0
        }
    };
    let numerator = weighted(c.e_h, W_RATIO_HIGH) + weighted(c.e_m, W_RATIO_MODERATE);
    let pct = numerator / (t * (c.e_m + c.e_h)) as f64;
    Ok(pct.min(MAX_REROUTE_PCT))
}

/// Byte shares of the pairs `vertex` forwarded (egress chunks arriving in
/// `window`, inclusive). Sorted by pair.
pub fn traffic_shares(history: &[PacketRecord], vertex: VertexId, window: (f64, f64)) -> Vec<SdShare> {
    let mut bytes: BTreeMap<SdPair, u64> = BTreeMap::new();
    for r in history {
        if r.edge.0 == vertex && r.arrival_t >= window.0 && r.arrival_t <= window.1 {
            *bytes.entry(SdPair { src: r.src_host, dst: r.dst_host }).or_default() += r.size;
        }
    }
    let total: u64 = bytes.values().sum();
    if total == 0 {
        return Vec::new();
    }
    bytes.into_iter().map(|(pair, b)| SdShare { pair, share: b as f64 / total as f64 * 100.0 }).collect()
}

fn ascending(shares: &[SdShare]) -> Vec<SdShare> {
    let mut v = shares.to_vec();
    v.sort_by(|a, b| a.share.total_cmp(&b.share).then(a.pair.cmp(&b.pair)));
    v
}

/// Slack for float round-off when shares add up exactly to the budget, so
/// three shares of 100/6 still fit under 50.
pub const SHARE_EPSILON: f64 = 1e-9;

/// Smallest pairs first while the running total stays within `p` percent.
pub fn select_sd_pairs(shares: &[SdShare], p: f64) -> Vec<SdShare> {
    let mut out = Vec::new();
    let mut cum = 0.0;
    for s in ascending(shares) {
        if cum + s.share > p + SHARE_EPSILON {
            break;
        }
        cum += s.share;
        out.push(s);
    }
    out
}

/// Deals the selected pairs (ascending share) round-robin over the edges
/// sorted by id, so loads differ by at most one pair and the remainder
/// lands on the lowest edges.
pub fn distribute(selected: &[SdShare], uncongested_edges: &[DirectedEdge]) -> BTreeMap<DirectedEdge, Vec<SdShare>> {
    let mut out = BTreeMap::new();
    if selected.is_empty() || uncongested_edges.is_empty() {
        return out;
    }
    let mut edges = uncongested_edges.to_vec();
    edges.sort_unstable();
    edges.dedup();
    for (i, s) in ascending(selected).into_iter().enumerate() {
        out.entry(edges[i % edges.len()]).or_insert_with(Vec::new).push(s);
    }
    out
}

/// Rules that passed validation plus counters for the ones that did not.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct EmitOutcome {
    pub rules: Vec<PbrRule>,
    /// Destination LAN hangs directly off the router.
    pub skipped: usize,
    /// Looping or unreachable after installation.
    pub dropped: usize,
}

/// Turns an assignment at `vertex` into validated PBR rules.
///
/// Each candidate is installed on a scratch copy of `state` together with
/// the rules accepted so far, and kept only if its pair still traces
/// loop-free to the destination.
pub fn emit_rules(
    vertex: VertexId,
    assignment: &BTreeMap<DirectedEdge, Vec<SdShare>>,
    state: &RoutingState,
    topology: &Topology,
    evidence: Option<RuleEvidence>,
) -> EmitOutcome {
    let mut out = EmitOutcome::default();
    let mut scratch = state.clone();
    for (&(from, to), pairs) in assignment {
        debug_assert_eq!(from, vertex);
        for s in pairs {
            let dst_gateway = topology.lan_of(s.pair.dst).and_then(|l| topology.lan(l)).and_then(|l| l.gateway);
            if dst_gateway == Some(vertex) {
                out.skipped += 1;
                continue;
            }
            let rule = PbrRule { router: vertex, match_pair: s.pair, next_hop: to, evidence: evidence.clone() };
            let Ok(next) = apply_pbr(&scratch, std::slice::from_ref(&rule)) else {
                out.dropped += 1;
                continue;
            };
            if reachable(&next, s.pair.src, s.pair.dst) && trace_route(&next, s.pair.src, s.pair.dst).is_ok() {
                scratch = next;
                out.rules.push(rule);
            } else {
                out.dropped += 1;
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mpnn::CongestionClass as C;
    use crate::netsim::build_routing_tables;
    use crate::topology::{attach_lans, LinkProfile};

    fn share(src: usize, dst: usize, share: f64) -> SdShare {
        SdShare { pair: SdPair { src, dst }, share }
    }

    #[test]
    fn categorize_counts_outgoing_only() {
        let classes = [
            ((0, 1), C::HighlyCongested),
            ((0, 2), C::Uncongested),
            ((0, 3), C::Uncongested),
            ((0, 4), C::Balanced),
            ((1, 0), C::HighlyCongested),
        ];
        let c = categorize(0, &classes);
        assert_eq!(c, CategoryCounts::new(2, 1, 0, 1));
        assert_eq!(c.total(), 4);
    }

    #[test]
    fn feasibility_examples() {
        assert!(!should_reroute(&CategoryCounts::new(2, 0, 0, 0)));
        assert!(!should_reroute(&CategoryCounts::new(0, 0, 1, 2)));
        assert!(should_reroute(&CategoryCounts::new(2, 1, 0, 1)));
        assert!(!should_reroute(&CategoryCounts::new(1, 0, 0, 1)));
    }

    #[test]
    fn percentage_examples() {
        assert_eq!(reroute_percentage(&CategoryCounts::new(3, 0, 0, 1)).unwrap(), 50.0);
        assert_eq!(reroute_percentage(&CategoryCounts::new(4, 4, 0, 2)).unwrap(), 40.0);
        assert_eq!(reroute_percentage(&CategoryCounts::new(2, 0, 2, 0)).unwrap(), 18.75);
        assert!(reroute_percentage(&CategoryCounts::new(2, 0, 0, 0)).is_err());
    }

    #[test]
    fn percentage_falls_as_hot_edges_grow() {
        for t in 3..=9 {
            let mut prev = f64::INFINITY;
            for h in 1..t {
                let p = reroute_percentage(&CategoryCounts::new(t - h, 0, 0, h)).unwrap();
                assert!(p > 0.0 && p <= 50.0);
                // the cap flattens the low end, so only require non-increase there
                assert!(p <= prev);
                if prev < 50.0 {
                    assert!(p < prev);
                }
                prev = p;
            }
        }
    }

    #[test]
    fn shares_from_log() {
        let rec = |src, dst, size, t| PacketRecord {
            flow_id: 0,
            edge: (0, 1),
            arrival_t: t,
            size,
            src_host: src,
            dst_host: dst,
        };
        let log = [rec(10, 20, 300, 1.0), rec(11, 21, 700, 1.0), rec(12, 22, 999, 9.0)];
        let s = traffic_shares(&log, 0, (0.0, 5.0));
        assert_eq!(s, vec![share(10, 20, 30.0), share(11, 21, 70.0)]);
        assert!(traffic_shares(&log, 3, (0.0, 5.0)).is_empty());
    }

    #[test]
    fn selection_examples() {
        let s = [share(4, 0, 60.0), share(1, 0, 5.0), share(3, 0, 25.0), share(2, 0, 10.0)];
        let pick = |p| select_sd_pairs(&s, p).iter().map(|x| x.pair.src).collect::<Vec<_>>();
        assert_eq!(pick(40.0), vec![1, 2, 3]);
        assert_eq!(pick(20.0), vec![1, 2]);
        assert!(pick(4.0).is_empty());
    }

    #[test]
    fn distribution_examples() {
        let s: Vec<_> = (0..3).map(|i| share(i, 9, 1.0 + i as f64)).collect();
        let d = distribute(&s, &[(0, 5), (0, 2)]);
        assert_eq!(d[&(0, 2)].len(), 2);
        assert_eq!(d[&(0, 5)].len(), 1);
        let d = distribute(&s[..1], &[(0, 1), (0, 2), (0, 3)]);
        assert_eq!(d.len(), 1);
        assert_eq!(d[&(0, 1)].len(), 1);
        assert!(distribute(&[], &[(0, 1)]).is_empty());
    }

    /// Square core 0-1-2-3-0 plus chord 0-2, LANs at 0 and 2.
    fn square() -> Topology {
        attach_lans(4, &[(0, 1), (1, 2), (2, 3), (0, 3), (0, 2)], &[0, 2], &LinkProfile::default()).unwrap()
    }

    #[test]
    fn emit_skips_local_destination_and_installs_detour() {
        let topo = square();
        let state = build_routing_tables(&topo).unwrap();
        let a = topo.lans()[0].hosts[0];
        let c = topo.lans()[1].hosts[0];
        // at 0 toward LAN 2: divert via 1
        let mut assign = BTreeMap::new();
        assign.insert((0, 1), vec![share(a, c, 10.0)]);
        let out = emit_rules(0, &assign, &state, &topo, None);
        assert_eq!(out.rules.len(), 1);
        let traced = trace_route(&apply_pbr(&state, &out.rules).unwrap(), a, c).unwrap();
        assert!(traced.windows(2).any(|w| w == [0, 1]));
        // at 2 the destination LAN is local
        let mut assign = BTreeMap::new();
        assign.insert((2, 1), vec![share(a, c, 10.0)]);
        let out = emit_rules(2, &assign, &state, &topo, None);
        assert_eq!((out.rules.len(), out.skipped), (0, 1));
    }

    #[test]
    fn emit_drops_looping_rule() {
        let topo = square();
        let base = build_routing_tables(&topo).unwrap();
        let a = topo.lans()[0].hosts[0];
        let c = topo.lans()[1].hosts[0];
        // 1 already bounces this pair back to 0
        let state = apply_pbr(&base, &[PbrRule::new(1, SdPair { src: a, dst: c }, 0)]).unwrap();
        let mut assign = BTreeMap::new();
        assign.insert((0, 1), vec![share(a, c, 10.0)]);
        let out = emit_rules(0, &assign, &state, &topo, None);
        assert_eq!((out.rules.len(), out.dropped), (0, 1));
    }
}
