//! Window metrics from the simulator's chunk log, and model features.
//!
//! Edge metrics cover every directed link. Delay is the mean inter-arrival
//! time of chunks, throughput is bytes over the first-to-last arrival span,
//! and congestion is throughput over link capacity. Vertex metrics combine
//! the incident edges: delay is last egress minus first ingress, data size
//! is ingress plus egress bytes, and congestion is relative to the busiest
//! vertex in the window.

use std::collections::BTreeMap;
use std::io::Write;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::netsim::PacketRecord;
use crate::topology::{DirectedEdge, Topology, VertexId};

#[derive(Debug, Error, PartialEq)]
pub enum TelemetryError {
    #[error("egress at {last_egress} precedes ingress at {first_ingress}")]
    WindowMisaligned { first_ingress: f64, last_egress: f64 },
}

/// Closed time interval `[t0, t1]` in seconds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Window {
    pub t0: f64,
    pub t1: f64,
}

impl Window {
    pub fn new(t0: f64, t1: f64) -> Self {
        Self { t0, t1 }
    }

    pub fn contains(&self, t: f64) -> bool {
        t >= self.t0 && t <= self.t1
    }
}

/// Mean gap between successive arrivals; needs two of them.
pub fn edge_delay(arrivals: &[f64]) -> Option<f64> {
    if arrivals.len() < 2 {
        return None;
    }
    let sum: f64 = arrivals.windows(2).map(|w| w[1] - w[0]).sum();
    Some(sum / (arrivals.len() - 1) as f64)
}

/// Time a vertex was busy: last egress minus first ingress.
pub fn vertex_delay(first_ingress_t: f64, last_egress_t: f64) -> Result<f64, TelemetryError> {
    if last_egress_t < first_ingress_t {
        return Err(TelemetryError::WindowMisaligned { first_ingress: first_ingress_t, last_egress: last_egress_t });
    }
    Ok(last_egress_t - first_ingress_t)
}

/// Bytes per second, absent for a non-positive interval.
pub fn throughput(bytes: f64, interval: f64) -> Option<f64> {
    (interval > 0.0).then(|| bytes / interval)
}

/// `T / T_max` as a percentage. The flag is set when `T` exceeded `T_max`
/// and the value was clamped to 100.
pub fn congestion(t: f64, t_max: f64) -> Option<(f64, bool)> {
    if t_max.is_nan() || t_max <= 0.0 {
        return None;
    }
    let pct = t / t_max * 100.0;
    if pct > 100.0 {
        Some((100.0, true))
    } else {
        Some((pct.max(0.0), false))
    }
}

/// Equal-weight blend of normalized delay and congestion.
pub fn edge_cost(d_norm: f64, c_norm: f64) -> f64 {
    0.5 * d_norm + 0.5 * c_norm
}

/// Min-max scaling to `[0, 1]`; a constant population maps to all zeros.
pub fn min_max_normalize(values: &[f64]) -> Vec<f64> {
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if values.is_empty() || hi <= lo {
        return vec![0.0; values.len()];
    }
    values.iter().map(|&v| (v - lo) / (hi - lo)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EdgeMetrics {
    pub edge: DirectedEdge,
    pub window: Window,
    pub delay: Option<f64>,
    pub throughput: Option<f64>,
    pub congestion: Option<f64>,
    pub data_size: u64,
    pub cost: f64,
}

impl EdgeMetrics {
    pub fn is_active(&self) -> bool {
        self.data_size > 0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VertexMetrics {
    pub vertex: VertexId,
    pub window: Window,
    pub delay: Option<f64>,
    pub throughput: Option<f64>,
    pub congestion: Option<f64>,
    pub data_size: u64,
}

/// All metrics for one window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowMetrics {
    pub window: Window,
    /// Every directed link, sorted by `(source, target)`.
    pub edges: Vec<EdgeMetrics>,
    /// Every vertex, by id.
    pub vertices: Vec<VertexMetrics>,
    /// How many congestion values were clamped to 100.
    pub clamp_warnings: usize,
    /// Vertices whose egress preceded their ingress inside the window.
    pub misaligned_vertices: usize,
}

impl WindowMetrics {
    pub fn edge(&self, e: DirectedEdge) -> Option<&EdgeMetrics> {
        self.edges.binary_search_by_key(&e, |m| m.edge).ok().map(|i| &self.edges[i])
    }

    /// Sum of `W_e` over all directed links.
    pub fn total_cost(&self) -> f64 {
        self.edges.iter().map(|e| e.cost).sum()
    }
}

/// Computes edge and vertex metrics over the records arriving in `window`.
pub fn window_metrics(log: &[PacketRecord], topology: &Topology, window: Window) -> WindowMetrics {
    let mut edges: Vec<DirectedEdge> = topology.links().iter().flat_map(|l| [(l.u, l.v), (l.v, l.u)]).collect();
    edges.sort_unstable();
    let index: BTreeMap<DirectedEdge, usize> = edges.iter().enumerate().map(|(i, &e)| (e, i)).collect();

    let mut arrivals: Vec<Vec<f64>> = vec![Vec::new(); edges.len()];
    let mut bytes = vec![0u64; edges.len()];
    for r in log.iter().filter(|r| window.contains(r.arrival_t)) {
        if let Some(&i) = index.get(&r.edge) {
            arrivals[i].push(r.arrival_t);
            bytes[i] += r.size;
        }
    }

    let mut clamp_warnings = 0;
    let mut out_edges = Vec::with_capacity(edges.len());
    for (i, &e) in edges.iter().enumerate() {
        let a = &mut arrivals[i];
        a.sort_by(f64::total_cmp);
        let delay = edge_delay(a);
        let span = match (a.first(), a.last()) {
            (Some(&lo), Some(&hi)) => hi - lo,
            _ => 0.0,
        };
        let tput = throughput(bytes[i] as f64, span);
        let capacity = topology.link_between(e.0, e.1).map_or(0.0, |l| l.bandwidth_bytes_per_s);
        let cong = tput.and_then(|t| congestion(t, capacity)).map(|(c, clamped)| {
            clamp_warnings += usize::from(clamped);
            c
        });
        out_edges.push(EdgeMetrics {
            edge: e,
            window,
            delay,
            throughput: tput,
            congestion: cong,
            data_size: bytes[i],
            cost: 0.0,
        });
    }
    let d_norm = min_max_normalize(&out_edges.iter().map(|m| m.delay.unwrap_or(0.0)).collect::<Vec<_>>());
    let c_norm = min_max_normalize(&out_edges.iter().map(|m| m.congestion.unwrap_or(0.0)).collect::<Vec<_>>());
    for (m, (d, c)) in out_edges.iter_mut().zip(d_norm.into_iter().zip(c_norm)) {
        m.cost = edge_cost(d, c);
    }

    let n = topology.vertex_count();
    let mut first_in = vec![f64::INFINITY; n];
    let mut last_out = vec![f64::NEG_INFINITY; n];
    let mut size = vec![0u64; n];
    for (i, &(u, v)) in edges.iter().enumerate() {
        if bytes[i] == 0 {
            continue;
        }
        let a = &arrivals[i];
        first_in[v] = first_in[v].min(a[0]);
        last_out[u] = last_out[u].max(a[a.len() - 1]);
        size[u] += bytes[i];
        size[v] += bytes[i];
    }
    let mut misaligned = 0;
    let mut vertices: Vec<VertexMetrics> = (0..n)
        .map(|v| {
            let delay = if first_in[v].is_finite() && last_out[v].is_finite() {
                match vertex_delay(first_in[v], last_out[v]) {
                    Ok(d) => Some(d),
                    Err(_) => {
                        misaligned += 1;
                        None
                    }
                }
            } else {
                None
            };
            let tput = delay.and_then(|d| throughput(size[v] as f64, d));
            VertexMetrics { vertex: v, window, delay, throughput: tput, congestion: None, data_size: size[v] }
        })
        .collect();
    let t_max = vertices.iter().filter_map(|m| m.throughput).fold(0.0, f64::max);
    for m in &mut vertices {
        m.congestion = m.throughput.and_then(|t| congestion(t, t_max)).map(|(c, _)| c);
    }

    WindowMetrics { window, edges: out_edges, vertices, clamp_warnings, misaligned_vertices: misaligned }
}

/// Model input for one window: core vertices and directed core edges with
/// raw `[delay, congestion, throughput]` columns. Idle entries are zeros.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureBundle {
    pub x_v: Vec<[f64; 3]>,
    pub x_e: Vec<[f64; 3]>,
    /// `(source, target)` per row of `x_e`.
    pub edge_index: Vec<DirectedEdge>,
}

impl FeatureBundle {
    pub fn vertex_count(&self) -> usize {
        self.x_v.len()
    }

    pub fn edge_count(&self) -> usize {
        self.x_e.len()
    }
}

fn triple(delay: Option<f64>, congestion: Option<f64>, throughput: Option<f64>) -> [f64; 3] {
    [delay.unwrap_or(0.0), congestion.unwrap_or(0.0), throughput.unwrap_or(0.0)]
}

/// Features from precomputed metrics.
pub fn features_from_metrics(metrics: &WindowMetrics, topology: &Topology) -> FeatureBundle {
    let core = topology.core_count();
    let x_v = metrics.vertices[..core].iter().map(|m| triple(m.delay, m.congestion, m.throughput)).collect();
    let edge_index = topology.core_directed_edges().to_vec();
    let x_e = edge_index
        .iter()
        .map(|&e| {
            let m = metrics.edge(e).expect("core edge has metrics");
            triple(m.delay, m.congestion, m.throughput)
        })
        .collect();
    FeatureBundle { x_v, x_e, edge_index }
}

pub fn build_features(log: &[PacketRecord], topology: &Topology, window: Window) -> FeatureBundle {
    features_from_metrics(&window_metrics(log, topology, window), topology)
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// `kind,u,v,delay,throughput,congestion,data_size,cost`; vertices leave
/// `v` and `cost` empty.
pub fn write_metrics_csv<W: Write>(metrics: &WindowMetrics, out: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["kind", "u", "v", "delay", "throughput", "congestion", "data_size", "cost"])?;
    for e in &metrics.edges {
        w.write_record([
            "edge".to_string(),
            e.edge.0.to_string(),
            e.edge.1.to_string(),
            opt(e.delay),
            opt(e.throughput),
            opt(e.congestion),
            e.data_size.to_string(),
            e.cost.to_string(),
        ])?;
    }
    for m in &metrics.vertices {
        w.write_record([
            "vertex".to_string(),
            m.vertex.to_string(),
            String::new(),
            opt(m.delay),
            opt(m.throughput),
            opt(m.congestion),
            m.data_size.to_string(),
            String::new(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::topology::{attach_lans, LinkProfile};

    fn rec(edge: DirectedEdge, t: f64, size: u64) -> PacketRecord {
        PacketRecord { flow_id: 0, edge, arrival_t: t, size, src_host: 0, dst_host: 0 }
    }

    #[test]
    fn scalar_formulas() {
        assert!((edge_delay(&[0.0, 0.1, 0.3]).unwrap() - 0.15).abs() < 1e-12);
        assert_eq!(edge_delay(&[5.0, 6.0]), Some(1.0));
        assert_eq!(edge_delay(&[1.0]), None);
        assert_eq!(vertex_delay(1.0, 1.5), Ok(0.5));
        assert_eq!(vertex_delay(2.0, 2.0), Ok(0.0));
        assert!(vertex_delay(2.0, 1.0).is_err());
        assert_eq!(throughput(1000.0, 2.0), Some(500.0));
        assert_eq!(throughput(0.0, 1.0), Some(0.0));
        assert_eq!(throughput(1e6, 0.5), Some(2e6));
        assert_eq!(throughput(5.0, 0.0), None);
        assert_eq!(congestion(50.0, 200.0), Some((25.0, false)));
        assert_eq!(congestion(7.0, 7.0), Some((100.0, false)));
        assert_eq!(congestion(9.0, 7.0), Some((100.0, true)));
        assert_eq!(congestion(1.0, 0.0), None);
        assert!((edge_cost(0.2, 0.6) - 0.4).abs() < 1e-12);
        assert_eq!(edge_cost(1.0, 1.0), 1.0);
        assert_eq!(min_max_normalize(&[3.0, 3.0]), vec![0.0, 0.0]);
        assert_eq!(min_max_normalize(&[1.0, 3.0, 2.0]), vec![0.0, 1.0, 0.5]);
    }

    fn square() -> Topology {
        attach_lans(4, &[(0, 1), (1, 2), (2, 3), (0, 3)], &[0, 2], &LinkProfile::default()).unwrap()
    }

    #[test]
    fn quiescent_bundle_is_zero() {
        let topo = square();
        let b = build_features(&[], &topo, Window::new(0.0, 1.0));
        assert_eq!(b.x_v.len(), 4);
        assert_eq!(b.x_e.len(), 8);
        assert!(b.x_v.iter().chain(&b.x_e).all(|r| r == &[0.0; 3]));
        assert_eq!(b.edge_index, topo.core_directed_edges());
    }

    #[test]
    fn single_active_edge() {
        let topo = square();
        let log = [rec((0, 1), 0.1, 1000), rec((0, 1), 0.2, 1000), rec((0, 1), 0.3, 1000)];
        let m = window_metrics(&log, &topo, Window::new(0.0, 1.0));
        let e = m.edge((0, 1)).unwrap();
        assert!((e.delay.unwrap() - 0.1).abs() < 1e-12);
        assert!((e.throughput.unwrap() - 15_000.0).abs() < 1e-6);
        assert!((e.congestion.unwrap() - 0.15).abs() < 1e-9);
        assert_eq!(e.cost, 1.0);
        assert_eq!(m.vertices[0].data_size, 3000);
        assert_eq!(m.vertices[1].data_size, 3000);
        let b = features_from_metrics(&m, &topo);
        assert_eq!(b.x_e.iter().filter(|r| r != &&[0.0; 3]).count(), 1);
    }

    #[test]
    fn window_filters_records() {
        let topo = square();
        let log = [rec((0, 1), 0.5, 10), rec((1, 2), 2.5, 10)];
        let m = window_metrics(&log, &topo, Window::new(0.0, 1.0));
        assert_eq!(m.edges.iter().map(|e| e.data_size).sum::<u64>(), 10);
    }
}
