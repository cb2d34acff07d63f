use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{CycleReport, HarnessError, Phase, ScenarioKey};
use crate::netsim::RunOutput;
use crate::telemetry::WindowMetrics;
use crate::topology::Topology;
use crate::traffic::TaskState;

/// Everything measured for one iteration of one scenario under one phase.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRow {
    pub model: String,
    pub n: usize,
    pub seed: u64,
    pub iteration: u32,
    pub phase: Phase,
    /// Mean completion time of the completed transfers, seconds.
    pub mean_delay: f64,
    pub p95_delay: f64,
    /// Mean congestion over directed core edges that carried bytes.
    pub mean_congestion: f64,
    /// Sum of `W_e` over all directed links.
    pub total_cost: f64,
    /// Mean per-transfer rate, bytes per second.
    pub mean_rate: f64,
    /// Delivered bytes over the window length.
    pub throughput: f64,
    pub vertex_utilization: f64,
    pub edge_utilization: f64,
    pub rules_active: usize,
    pub rules_installed: usize,
    pub rules_dropped: usize,
    pub rules_skipped: usize,
    pub completed: usize,
    pub failed: usize,
    pub clamp_warnings: usize,
    pub bytes_injected: u64,
    pub bytes_delivered: u64,
    pub bytes_queued: u64,
}

fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        0.0
    } else {
        xs.iter().sum::<f64>() / xs.len() as f64
    }
}

/// Nearest-rank percentile.
fn percentile(xs: &[f64], q: f64) -> f64 {
    if xs.is_empty() {
        return 0.0;
    }
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let rank = ((q / 100.0) * v.len() as f64).ceil().max(1.0) as usize;
    v[rank.min(v.len()) - 1]
}

impl IterationRow {
    #[allow(clippy::too_many_arguments)]
    pub(crate) fn from_run(
        key: &ScenarioKey,
        iteration: u32,
        phase: Phase,
        out: &RunOutput,
        metrics: &WindowMetrics,
        topology: &Topology,
        rules_active: usize,
        cycle: &CycleReport,
    ) -> Self {
        let done: Vec<_> = out.tasks.iter().filter(|t| t.state == TaskState::Completed).collect();
        let delays: Vec<f64> = done.iter().filter_map(|t| t.end_t.map(|e| e - t.start_t)).collect();
        let rates: Vec<f64> = out.records.iter().filter_map(|r| r.rate).collect();
        let core = topology.core_count();
        let core_edges = topology.core_directed_edges();
        let active: Vec<f64> = core_edges
            .iter()
            .filter_map(|&e| metrics.edge(e))
            .filter(|m| m.is_active())
            .map(|m| m.congestion.unwrap_or(0.0))
            .collect();
        let busy_vertices = metrics.vertices[..core].iter().filter(|m| m.data_size > 0).count();
        let span = metrics.window.t1 - metrics.window.t0;
        let pct = |num: usize, den: usize| if den == 0 { 0.0 } else { 100.0 * num as f64 / den as f64 };
        Self {
            model: key.model.clone(),
            n: key.n,
            seed: key.seed,
            iteration,
            phase,
            mean_delay: mean(&delays),
            p95_delay: percentile(&delays, 95.0),
            mean_congestion: mean(&active),
            total_cost: metrics.total_cost(),
            mean_rate: mean(&rates),
            throughput: if span > 0.0 { out.totals.delivered as f64 / span } else { 0.0 },
            vertex_utilization: pct(busy_vertices, core),
            edge_utilization: pct(active.len(), core_edges.len()),
            rules_active,
            rules_installed: cycle.installed,
            rules_dropped: cycle.dropped,
            rules_skipped: cycle.skipped,
            completed: done.len(),
            failed: out.tasks.iter().filter(|t| t.state == TaskState::Failed).count(),
            clamp_warnings: metrics.clamp_warnings,
            bytes_injected: out.totals.injected,
            bytes_delivered: out.totals.delivered,
            bytes_queued: out.totals.queued,
        }
    }

    pub fn key(&self) -> (ScenarioKey, u32) {
        (ScenarioKey { model: self.model.clone(), n: self.n, seed: self.seed }, self.iteration)
    }
}

/// Comparable metrics.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    Delay,
    P95Delay,
    Congestion,
    Cost,
    Rate,
    Throughput,
    VertexUtilization,
    EdgeUtilization,
}

impl Metric {
    pub const ALL: [Metric; 8] = [
        Metric::Delay,
        Metric::P95Delay,
        Metric::Congestion,
        Metric::Cost,
        Metric::Rate,
        Metric::Throughput,
        Metric::VertexUtilization,
        Metric::EdgeUtilization,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Metric::Delay => "delay",
            Metric::P95Delay => "p95_delay",
            Metric::Congestion => "congestion",
            Metric::Cost => "cost",
            Metric::Rate => "rate",
            Metric::Throughput => "throughput",
            Metric::VertexUtilization => "vertex_utilization",
            Metric::EdgeUtilization => "edge_utilization",
        }
    }

    pub fn of(self, r: &IterationRow) -> f64 {
        match self {
            Metric::Delay => r.mean_delay,
            Metric::P95Delay => r.p95_delay,
            Metric::Congestion => r.mean_congestion,
            Metric::Cost => r.total_cost,
            Metric::Rate => r.mean_rate,
            Metric::Throughput => r.throughput,
            Metric::VertexUtilization => r.vertex_utilization,
            Metric::EdgeUtilization => r.edge_utilization,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub rows: Vec<IterationRow>,
}

impl ExperimentReport {
    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    fn by_key(&self) -> BTreeMap<(ScenarioKey, u32), &IterationRow> {
        self.rows.iter().map(|r| (r.key(), r)).collect()
    }
}

/// Baseline against optimized for one metric.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Delta {
    pub baseline: f64,
    pub optimized: f64,
    pub abs_delta: f64,
    /// Change relative to the baseline, percent; absent for a zero baseline.
    pub pct_delta: Option<f64>,
    /// `200 (o - b) / (|o| + |b|)`, which flips sign when the inputs swap.
    pub symmetric_pct: f64,
}

impl Delta {
    pub fn new(baseline: f64, optimized: f64) -> Self {
        let abs_delta = optimized - baseline;
        let pct_delta = (baseline != 0.0).then(|| 100.0 * abs_delta / baseline.abs());
        let scale = optimized.abs() + baseline.abs();
        let symmetric_pct = if scale == 0.0 { 0.0 } else { 200.0 * abs_delta / scale };
        Self { baseline, optimized, abs_delta, pct_delta, symmetric_pct }
    }
}

pub type MetricDeltas = BTreeMap<Metric, Delta>;

fn deltas(base: &[&IterationRow], opt: &[&IterationRow]) -> MetricDeltas {
    Metric::ALL
        .iter()
        .map(|&m| {
            let b = mean(&base.iter().map(|r| m.of(r)).collect::<Vec<_>>());
            let o = mean(&opt.iter().map(|r| m.of(r)).collect::<Vec<_>>());
            (m, Delta::new(b, o))
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KeyedDeltas {
    pub model: String,
    pub n: usize,
    pub seed: u64,
    pub iteration: u32,
    pub deltas: MetricDeltas,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ComparisonSummary {
    pub per_key: Vec<KeyedDeltas>,
    pub per_model: BTreeMap<String, MetricDeltas>,
    pub per_n: BTreeMap<usize, MetricDeltas>,
    pub overall: MetricDeltas,
}

/// Pairs rows on (model, n, seed, iteration) and reports the change per
/// metric for every key and in aggregate.
pub fn compare(baseline: &ExperimentReport, optimized: &ExperimentReport) -> Result<ComparisonSummary, HarnessError> {
    let b = baseline.by_key();
    let o = optimized.by_key();
    let bk: BTreeSet<_> = b.keys().collect();
    let ok: BTreeSet<_> = o.keys().collect();
    let unmatched: Vec<String> = bk.symmetric_difference(&ok).map(|(k, it)| format!("{k}/it={it}")).collect();
    if !unmatched.is_empty() {
        return Err(HarnessError::KeyMismatch(unmatched));
    }
    let mut summary = ComparisonSummary::default();
    let mut by_model: BTreeMap<String, (Vec<&IterationRow>, Vec<&IterationRow>)> = BTreeMap::new();
    let mut by_n: BTreeMap<usize, (Vec<&IterationRow>, Vec<&IterationRow>)> = BTreeMap::new();
    for (key, br) in &b {
        let or = o[key];
        summary.per_key.push(KeyedDeltas {
            model: key.0.model.clone(),
            n: key.0.n,
            seed: key.0.seed,
            iteration: key.1,
            deltas: deltas(&[br], &[or]),
        });
        let m = by_model.entry(key.0.model.clone()).or_default();
        m.0.push(br);
        m.1.push(or);
        let s = by_n.entry(key.0.n).or_default();
        s.0.push(br);
        s.1.push(or);
    }
    summary.per_model = by_model.into_iter().map(|(k, (x, y))| (k, deltas(&x, &y))).collect();
    summary.per_n = by_n.into_iter().map(|(k, (x, y))| (k, deltas(&x, &y))).collect();
    let all_b: Vec<_> = b.values().copied().collect();
    let all_o: Vec<_> = o.values().copied().collect();
    summary.overall = deltas(&all_b, &all_o);
    Ok(summary)
}

/// Direction of change for one scenario, averaged over its iterations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Direction {
    pub key: ScenarioKey,
    pub congestion: Delta,
    pub edge_utilization: Delta,
    pub delay: Delta,
}

impl Direction {
    pub fn congestion_reduced(&self) -> bool {
        self.congestion.abs_delta < 0.0
    }
    pub fn utilization_increased(&self) -> bool {
        self.edge_utilization.abs_delta > 0.0
    }
    pub fn delay_reduced(&self) -> bool {
        self.delay.abs_delta < 0.0
    }
}

/// Per-scenario directions, keys in order.
pub fn scenario_directions(summary: &ComparisonSummary) -> Vec<Direction> {
    let mut groups: BTreeMap<ScenarioKey, Vec<&MetricDeltas>> = BTreeMap::new();
    for k in &summary.per_key {
        groups.entry(ScenarioKey { model: k.model.clone(), n: k.n, seed: k.seed }).or_default().push(&k.deltas);
    }
    groups
        .into_iter()
        .map(|(key, ds)| {
            let avg = |m: Metric| {
                let b = mean(&ds.iter().map(|d| d[&m].baseline).collect::<Vec<_>>());
                let o = mean(&ds.iter().map(|d| d[&m].optimized).collect::<Vec<_>>());
                Delta::new(b, o)
            };
            Direction {
                key,
                congestion: avg(Metric::Congestion),
                edge_utilization: avg(Metric::EdgeUtilization),
                delay: avg(Metric::Delay),
            }
        })
        .collect()
}

pub fn write_rows_csv(report: &ExperimentReport, path: &Path) -> Result<(), HarnessError> {
    let csv_err = |e| HarnessError::Csv { path: path.into(), source: e };
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    if report.rows.is_empty() {
        w.write_record(ROW_HEADER).map_err(csv_err)?;
    }
    for r in &report.rows {
        w.serialize(r).map_err(csv_err)?;
    }
    w.flush().map_err(|e| HarnessError::io(path, e))
}

const ROW_HEADER: [&str; 23] = [
    "model",
    "n",
    "seed",
    "iteration",
    "phase",
    "mean_delay",
    "p95_delay",
    "mean_congestion",
    "total_cost",
    "mean_rate",
    "throughput",
    "vertex_utilization",
    "edge_utilization",
    "rules_active",
    "rules_installed",
    "rules_dropped",
    "rules_skipped",
    "completed",
    "failed",
    "clamp_warnings",
    "bytes_injected",
    "bytes_delivered",
    "bytes_queued",
];

pub fn read_rows_csv(path: &Path) -> Result<ExperimentReport, HarnessError> {
    let csv_err = |e| HarnessError::Csv { path: path.into(), source: e };
    let mut r = csv::Reader::from_path(path).map_err(csv_err)?;
    let rows = r.deserialize().collect::<Result<Vec<IterationRow>, _>>().map_err(csv_err)?;
    Ok(ExperimentReport { rows })
}

/// Writes one CSV per metric with paired baseline/optimized columns keyed by
/// scenario and iteration, plus `summary.json` with the aggregates.
pub fn export(
    baseline: &ExperimentReport,
    optimized: &ExperimentReport,
    dir: &Path,
) -> Result<ComparisonSummary, HarnessError> {
    std::fs::create_dir_all(dir).map_err(|e| HarnessError::io(dir, e))?;
    let summary = compare(baseline, optimized)?;
    for m in Metric::ALL {
        let path = dir.join(format!("{}.csv", m.name()));
        let csv_err = |e| HarnessError::Csv { path: path.clone(), source: e };
        let mut w = csv::Writer::from_path(&path).map_err(csv_err)?;
        w.write_record(["model", "n", "seed", "iteration", "baseline", "optimized", "pct_delta"]).map_err(csv_err)?;
        for k in &summary.per_key {
            let d = k.deltas[&m];
            w.write_record([
                k.model.clone(),
                k.n.to_string(),
                k.seed.to_string(),
                k.iteration.to_string(),
                d.baseline.to_string(),
                d.optimized.to_string(),
                d.pct_delta.map(|x| x.to_string()).unwrap_or_default(),
            ])
            .map_err(csv_err)?;
        }
        w.flush().map_err(|e| HarnessError::io(&path, e))?;
    }
    let path = dir.join("summary.json");
    let text =
        serde_json::to_string_pretty(&summary).map_err(|e| HarnessError::Json { path: path.clone(), source: e })?;
    std::fs::write(&path, text + "\n").map_err(|e| HarnessError::io(&path, e))?;
    Ok(summary)
}
