use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::mpnn::{edge_classes, label_oracle, CongestionClass, EdgeClassifier, MpnnError};
use crate::netsim::{apply_pbr, PacketRecord, RouteError, RoutingState, SdPair};
use crate::reroute::{
    categorize, distribute, emit_rules, reroute_percentage, select_sd_pairs, should_reroute, traffic_shares,
    RuleEvidence, SdShare,
};
use crate::telemetry::{features_from_metrics, FeatureBundle, WindowMetrics};
use crate::topology::{DirectedEdge, Topology, VertexId};

/// What one control cycle changed.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CycleReport {
    /// Vertices that passed the feasibility test.
    pub vertices_rerouted: usize,
    pub installed: usize,
    /// Rules removed because their next hop became congested.
    pub retired: usize,
    pub dropped: usize,
    pub skipped: usize,
    /// Rules removed by the global trace check.
    pub unsafe_removed: usize,
}

/// Classifies by thresholding the raw congestion column. Only for tests and
/// fixtures: it reads the same number the labels are made from.
#[derive(Debug, Clone, Copy, Default)]
pub struct OracleClassifier;

impl EdgeClassifier for OracleClassifier {
    fn classify(&self, bundle: &FeatureBundle) -> Result<Vec<CongestionClass>, MpnnError> {
        bundle.x_e.iter().map(|r| label_oracle(r[1].clamp(0.0, 100.0))).collect()
    }
}

/// One classification and rule refresh after a traffic window.
///
/// Rules whose next hop now sits on a congested edge are retired. Each
/// core vertex that passes the feasibility test then diverts pairs it was
/// sending over congested edges. Candidates are offered only uncongested
/// edges whose far end does not route straight back. Finally every host
/// pair is traced and rules for broken pairs are removed.
pub fn control_cycle(
    topology: &Topology,
    state: &mut RoutingState,
    classifier: &dyn EdgeClassifier,
    metrics: &WindowMetrics,
    log: &[PacketRecord],
) -> Result<CycleReport, MpnnError> {
    let bundle = features_from_metrics(metrics, topology);
    let classes = edge_classes(classifier, &bundle)?;
    let class_of: BTreeMap<DirectedEdge, CongestionClass> = classes.iter().copied().collect();
    let congested = |e: DirectedEdge| class_of.get(&e).is_some_and(|c| c.is_congested());
    let mut report = CycleReport::default();

    // retire rules that now point into congestion
    // TODO: also expire rules by age so traffic drifts back to shortest paths once load falls
    let routers: Vec<VertexId> = state.rules().map(|r| r.router).collect::<BTreeSet<_>>().into_iter().collect();
    for router in routers {
        let keep: Vec<_> =
            state.rules_at(router).iter().filter(|r| !congested((r.router, r.next_hop))).cloned().collect();
        report.retired += state.rules_at(router).len() - keep.len();
        state.replace_rules_at(router, keep).expect("kept rules were valid");
    }

    // egress edges each pair used at each vertex
    let mut egress: BTreeMap<(VertexId, SdPair), BTreeSet<VertexId>> = BTreeMap::new();
    let window = (metrics.window.t0, metrics.window.t1);
    for r in log.iter().filter(|r| metrics.window.contains(r.arrival_t)) {
        egress.entry((r.edge.0, SdPair { src: r.src_host, dst: r.dst_host })).or_default().insert(r.edge.1);
    }

    for v in 0..topology.core_count() {
        let counts = categorize(v, &classes);
        if !should_reroute(&counts) {
            continue;
        }
        let pct = reroute_percentage(&counts).expect("feasible counts have a percentage");
        report.vertices_rerouted += 1;
        let ruled: BTreeSet<SdPair> = state.rules_at(v).iter().map(|r| r.match_pair).collect();
        let candidates: Vec<SdShare> = traffic_shares(log, v, window)
            .into_iter()
            .filter(|s| !ruled.contains(&s.pair))
            .filter(|s| egress.get(&(v, s.pair)).is_some_and(|outs| outs.iter().any(|&w| congested((v, w)))))
            .collect();
        let selected = select_sd_pairs(&candidates, pct);
        if selected.is_empty() {
            continue;
        }
        let free: Vec<DirectedEdge> = classes
            .iter()
            .filter(|&&((u, w), c)| u == v && !c.is_congested() && detour_viable(state, v, w, &selected))
            .map(|&(e, _)| e)
            .collect();
        let assignment = distribute(&selected, &free);
        let evidence = RuleEvidence { percentage: pct, counts, window };
        let out = emit_rules(v, &assignment, state, topology, Some(evidence));
        report.skipped += out.skipped;
        report.dropped += out.dropped;
        report.installed += out.rules.len();
        *state = apply_pbr(state, &out.rules).expect("emitted rules are valid");
    }

    let broken: BTreeSet<SdPair> = state.broken_pairs().into_iter().map(|(p, _): (SdPair, RouteError)| p).collect();
    for pair in broken {
        report.unsafe_removed += state.remove_rules_for(pair);
    }
    Ok(report)
}

/// A detour `v -> w` is worth offering when `w` forwards at least one of
/// the selected pairs somewhere other than straight back to `v`.
fn detour_viable(state: &RoutingState, v: VertexId, w: VertexId, selected: &[SdShare]) -> bool {
    selected.iter().any(|s| state.next_hop(w, s.pair) != Some(v))
}
