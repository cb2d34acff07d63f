//! Two-phase experiment driver.
//!
//! Phase one replays every scenario under shortest-path routing and
//! collects labelled telemetry. Phase two replays the same scenarios but,
//! after each iteration, classifies the core edges with a trained model
//! and refreshes the policy-based rules before the next iteration runs.

mod control;
mod report;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use control::{control_cycle, CycleReport, OracleClassifier};
pub use report::{
    compare, export, read_rows_csv, scenario_directions, write_rows_csv, ComparisonSummary, Delta, Direction,
    ExperimentReport, IterationRow, Metric, MetricDeltas,
};

use crate::mpnn::{EdgeClassifier, MpnnError, Sample, SampleTag, TrainConfig};
use crate::netsim::{build_routing_tables, run, RoutingState, RunOutput, Scenario, SimConfig, SimError};
use crate::telemetry::{features_from_metrics, window_metrics, Window, WindowMetrics};
use crate::topology::{
    assign_roles, attach_lans, generate, DegreeBounds, GraphModel, GraphParams, GraphSpec, LinkProfile, Topology,
    VertexId,
};
use crate::traffic::{draw_pairs, TransferTask};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("scenario {key}: {message}")]
    Scenario { key: String, message: String },
    #[error("config: {0}")]
    Config(String),
    #[error("baseline and optimized reports do not line up; unmatched keys: {0:?}")]
    KeyMismatch(Vec<String>),
    #[error(transparent)]
    Model(#[from] MpnnError),
    #[error("io on {path}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("csv on {path}")]
    Csv { path: PathBuf, source: csv::Error },
    #[error("json on {path}")]
    Json { path: PathBuf, source: serde_json::Error },
}

impl HarnessError {
    fn scenario(key: &ScenarioKey, e: impl std::fmt::Display) -> Self {
        Self::Scenario { key: key.to_string(), message: e.to_string() }
    }

    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        Self::Io { path: path.to_path_buf(), source }
    }
}

/// Per-model generator parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GraphDefaults {
    pub er_p: f64,
    pub ba_m: usize,
    pub ws_k: usize,
    pub ws_p: f64,
}

impl Default for GraphDefaults {
    fn default() -> Self {
        Self { er_p: 0.4, ba_m: 2, ws_k: 4, ws_p: 0.3 }
    }
}

impl GraphDefaults {
    pub fn params(&self, model: GraphModel) -> GraphParams {
        match model {
            GraphModel::ErdosRenyi => GraphParams { p: Some(self.er_p), ..GraphParams::default() },
            GraphModel::BarabasiAlbert => GraphParams { m: Some(self.ba_m), ..GraphParams::default() },
            GraphModel::WattsStrogatz => {
                GraphParams { p: Some(self.ws_p), k: Some(self.ws_k), ..GraphParams::default() }
            }
        }
    }
}

/// Link speeds for experiments: a fast edge tier and a core link that two
/// full-rate hosts already overload, so core contention is what limits
/// completion times rather than the access links.
pub fn experiment_links() -> LinkProfile {
    LinkProfile { core_bandwidth: 5e6, edge_bandwidth: 1e8, access_bandwidth: 4e6, prop_delay: 1e-3 }
}

fn experiment_sim() -> SimConfig {
    SimConfig { tick: 1e-3, ..SimConfig::default() }
}

/// Everything a run needs; loadable from TOML.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub models: Vec<GraphModel>,
    /// Core (P router) counts.
    pub sizes: Vec<usize>,
    pub iterations: u32,
    /// Evaluation seeds.
    pub seeds: Vec<u64>,
    /// Seeds whose phase-one telemetry trains the model.
    pub train_seeds: Vec<u64>,
    /// Train on `seeds` instead of `train_seeds`, as a closed deployment would.
    pub train_on_eval: bool,
    pub graph: GraphDefaults,
    pub bounds: DegreeBounds,
    pub links: LinkProfile,
    pub sim: SimConfig,
    pub hyper: TrainConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            models: GraphModel::ALL.to_vec(),
            sizes: vec![5, 10],
            iterations: 5,
            seeds: (100..110).collect(),
            train_seeds: (0..20).collect(),
            train_on_eval: false,
            graph: GraphDefaults::default(),
            bounds: DegreeBounds::default(),
            links: experiment_links(),
            sim: experiment_sim(),
            hyper: TrainConfig::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml(s: &str) -> Result<Self, HarnessError> {
        let cfg: Self = toml::from_str(s).map_err(|e| HarnessError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        let text = std::fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
        Self::from_toml(&text)
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        if self.models.is_empty() || self.sizes.is_empty() || self.seeds.is_empty() {
            return Err(HarnessError::Config("models, sizes and seeds must be nonempty".into()));
        }
        Ok(())
    }

    pub fn training_seeds(&self) -> &[u64] {
        if self.train_on_eval {
            &self.seeds
        } else {
            &self.train_seeds
        }
    }

    /// All (model, n, seed) scenarios over `seeds`, in a fixed order.
    pub fn scenarios(&self, seeds: &[u64]) -> Result<Vec<ScenarioSpec>, HarnessError> {
        let mut out = Vec::new();
        for &model in &self.models {
            for &n in &self.sizes {
                for &seed in seeds {
                    out.push(ScenarioSpec::generated(model, n, seed, self)?);
                }
            }
        }
        Ok(out)
    }
}

/// Identity of one scenario in reports.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ScenarioKey {
    /// `er`, `ba`, `ws`, or a fixture name.
    pub model: String,
    pub n: usize,
    pub seed: u64,
}

impl std::fmt::Display for ScenarioKey {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}/n={}/seed={}", self.model, self.n, self.seed)
    }
}

/// A topology and its fixed host pairing. Iteration `i` sends file size
/// `F_i` along every pair, all starting together.
#[derive(Debug, Clone)]
pub struct ScenarioSpec {
    pub key: ScenarioKey,
    pub model: Option<GraphModel>,
    pub topology: Topology,
    pub pairs: Vec<(VertexId, VertexId)>,
    pub sim: SimConfig,
}

impl ScenarioSpec {
    pub fn generated(model: GraphModel, n: usize, seed: u64, cfg: &ExperimentConfig) -> Result<Self, HarnessError> {
        let key = ScenarioKey { model: model.short_name().to_string(), n, seed };
        let spec = GraphSpec { model, n, params: cfg.graph.params(model) };
        let core = generate(&spec, cfg.bounds, seed).map_err(|e| HarnessError::scenario(&key, e))?;
        let topology = assign_roles(&core, &cfg.links).map_err(|e| HarnessError::scenario(&key, e))?;
        let pairs = draw_pairs(&topology, crate::seed::derive(seed, 1)).map_err(|e| HarnessError::scenario(&key, e))?;
        Ok(Self { key, model: Some(model), topology, pairs, sim: cfg.sim })
    }

    pub fn tasks(&self, iteration: u32) -> Vec<TransferTask> {
        let h = self.pairs.len() as u64;
        self.pairs
            .iter()
            .enumerate()
            .map(|(i, &(s, d))| TransferTask::new(u64::from(iteration) * h + i as u64, s, d, iteration, 0.0))
            .collect()
    }

    fn sim_config(&self, iteration: u32) -> SimConfig {
        SimConfig { seed: crate::seed::derive(self.key.seed, 100 + u64::from(iteration)), ..self.sim }
    }

    /// Simulates one iteration under `state`.
    pub fn run_iteration(&self, iteration: u32, state: &RoutingState) -> Result<RunOutput, HarnessError> {
        let scenario =
            Scenario { topology: &self.topology, schedule: self.tasks(iteration), config: self.sim_config(iteration) };
        run(&scenario, state).map_err(|e: SimError| HarnessError::scenario(&self.key, e))
    }
}

/// Two LANs funnel through gateway P0 toward the LAN on P1. P0 reaches P1
/// directly (the hot edge) or through P2 or P3. LAN C sits on P4, whose
/// only core link is to P0. With 2 MB/s access links and a 10 MB/s core,
/// six flows overload the hot edge and three would fill 60% of it.
pub fn bottleneck_fixture() -> ScenarioSpec {
    let links = LinkProfile { core_bandwidth: 1e7, edge_bandwidth: 1e8, access_bandwidth: 2e6, prop_delay: 1e-3 };
    let core = [(0, 1), (0, 2), (1, 2), (0, 3), (1, 3), (0, 4)];
    let topology = attach_lans(5, &core, &[0, 1, 4], &links).expect("fixture is well formed");
    let lan = |i: usize| topology.lans()[i].hosts.clone();
    let (a, b, c) = (lan(0), lan(1), lan(2));
    let pairs = a.iter().chain(&c).zip(b.iter().cycle()).map(|(&s, &d)| (s, d)).collect();
    ScenarioSpec {
        key: ScenarioKey { model: "fixture".into(), n: 5, seed: 0 },
        model: None,
        topology,
        pairs,
        sim: experiment_sim(),
    }
}

/// The hot edge of [`bottleneck_fixture`].
pub const FIXTURE_HOT_EDGE: (VertexId, VertexId) = (0, 1);

/// Which phase produced a row.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Phase {
    Baseline,
    MpnnPbr,
}

/// Output of one scenario under one phase.
#[derive(Debug, Clone)]
pub struct ScenarioRun {
    pub rows: Vec<IterationRow>,
    /// Phase-one windows, labelled from the congestion column.
    pub samples: Vec<Sample>,
    /// Metrics per iteration, kept for fixture checks.
    pub windows: Vec<WindowMetrics>,
    /// Rules in force after each control cycle (phase two only).
    pub rules_after: Vec<usize>,
    /// Host pairs that failed a trace after each control cycle.
    pub broken_after: Vec<usize>,
    pub conservation_ok: bool,
    /// Routing in force when the run ended.
    pub final_state: RoutingState,
}

fn window_of(out: &RunOutput) -> Window {
    Window::new(0.0, out.end_t.max(0.0))
}

/// Runs all iterations of `spec`. With a classifier the control loop
/// updates the rules between iterations; without one routing stays at
/// shortest paths.
pub fn run_scenario(
    spec: &ScenarioSpec,
    iterations: u32,
    classifier: Option<&dyn EdgeClassifier>,
) -> Result<ScenarioRun, HarnessError> {
    let mut state = build_routing_tables(&spec.topology).map_err(|e| HarnessError::scenario(&spec.key, e))?;
    let phase = if classifier.is_some() { Phase::MpnnPbr } else { Phase::Baseline };
    let mut run = ScenarioRun {
        rows: Vec::new(),
        samples: Vec::new(),
        windows: Vec::new(),
        rules_after: Vec::new(),
        broken_after: Vec::new(),
        conservation_ok: true,
        final_state: state.clone(),
    };
    let mut last_cycle = CycleReport::default();
    for it in 0..iterations {
        let out = spec.run_iteration(it, &state)?;
        let t = out.totals;
        run.conservation_ok &= t.injected == t.delivered + t.queued;
        let window = window_of(&out);
        let metrics = window_metrics(&out.events, &spec.topology, window);
        run.rows.push(IterationRow::from_run(
            &spec.key,
            it,
            phase,
            &out,
            &metrics,
            &spec.topology,
            state.rule_count(),
            &last_cycle,
        ));
        match classifier {
            None => {
                let tag = SampleTag { model: spec.model, n: spec.key.n, seed: spec.key.seed, iteration: it };
                let bundle = features_from_metrics(&metrics, &spec.topology);
                run.samples.push(Sample::labelled(tag, bundle).map_err(|e| HarnessError::scenario(&spec.key, e))?);
            }
            Some(model) => {
                last_cycle = control_cycle(&spec.topology, &mut state, model, &metrics, &out.events)
                    .map_err(|e| HarnessError::scenario(&spec.key, e))?;
                run.rules_after.push(state.rule_count());
                run.broken_after.push(state.broken_pairs().len());
            }
        }
        run.windows.push(metrics);
    }
    run.final_state = state;
    Ok(run)
}

/// Runs `f` over `items` on worker threads and returns results in input
/// order, so output never depends on scheduling.
pub fn ordered_map<T: Sync, R: Send>(items: &[T], f: impl Fn(&T) -> R + Sync) -> Vec<R> {
    let workers = std::thread::available_parallelism().map_or(1, |n| n.get()).min(items.len().max(1));
    let next = std::sync::atomic::AtomicUsize::new(0);
    let mut slots: Vec<Option<R>> = Vec::with_capacity(items.len());
    slots.resize_with(items.len(), || None);
    let results = std::sync::Mutex::new(slots);
    std::thread::scope(|s| {
        for _ in 0..workers {
            s.spawn(|| loop {
                let i = next.fetch_add(1, std::sync::atomic::Ordering::Relaxed);
                if i >= items.len() {
                    break;
                }
                let r = f(&items[i]);
                results.lock().expect("no worker panicked")[i] = Some(r);
            });
        }
    });
    results.into_inner().expect("no worker panicked").into_iter().map(|r| r.expect("every slot filled")).collect()
}

/// Phase one over `seeds`: baseline report plus the labelled dataset.
pub fn run_phase1(cfg: &ExperimentConfig, seeds: &[u64]) -> Result<(Vec<Sample>, ExperimentReport), HarnessError> {
    let specs = cfg.scenarios(seeds)?;
    let runs = ordered_map(&specs, |s| run_scenario(s, cfg.iterations, None));
    let mut samples = Vec::new();
    let mut report = ExperimentReport::default();
    for r in runs {
        let r = r?;
        samples.extend(r.samples);
        report.rows.extend(r.rows);
    }
    Ok((samples, report))
}

/// Phase two over `seeds` with a trained classifier.
pub fn run_phase2<C: EdgeClassifier + Sync>(
    cfg: &ExperimentConfig,
    seeds: &[u64],
    classifier: &C,
) -> Result<ExperimentReport, HarnessError> {
    let specs = cfg.scenarios(seeds)?;
    let runs = ordered_map(&specs, |s| run_scenario(s, cfg.iterations, Some(classifier)));
    let mut report = ExperimentReport::default();
    for r in runs {
        report.rows.extend(r?.rows);
    }
    Ok(report)
}

/// Samples as JSON lines.
pub fn write_dataset(samples: &[Sample], path: &Path) -> Result<(), HarnessError> {
    let mut text = String::new();
    for s in samples {
        text.push_str(&serde_json::to_string(s).map_err(|e| HarnessError::Json { path: path.into(), source: e })?);
        text.push('\n');
    }
    std::fs::write(path, text).map_err(|e| HarnessError::io(path, e))
}

pub fn read_dataset(path: &Path) -> Result<Vec<Sample>, HarnessError> {
    let text = std::fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str(l).map_err(|e| HarnessError::Json { path: path.into(), source: e }))
        .collect()
}

/// Splits samples by whether their seed is in `holdout`.
pub fn split_by_seed(samples: Vec<Sample>, holdout: &[u64]) -> (Vec<Sample>, Vec<Sample>) {
    samples.into_iter().partition(|s| !holdout.contains(&s.tag.seed))
}

/// Sample counts per (model, n), for logging.
pub fn dataset_summary(samples: &[Sample]) -> BTreeMap<(String, usize), (usize, usize)> {
    let mut out: BTreeMap<(String, usize), (usize, usize)> = BTreeMap::new();
    for s in samples {
        let name = s.tag.model.map_or_else(|| "custom".to_string(), |m| m.short_name().to_string());
        let e = out.entry((name, s.tag.n)).or_default();
        e.0 += 1;
        e.1 += s.labels.len();
    }
    out
}
