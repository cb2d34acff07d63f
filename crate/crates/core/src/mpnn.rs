//! From-scratch message-passing network that labels every directed core
//! edge with one of four congestion classes.
//!
//! Layer `l` sends a message along each directed edge `u -> v`,
//! `m_uv = relu(phi_l [h_u, h_v, x_uv])`, sums the messages arriving at
//! each vertex and updates `h_v' = relu(psi_l [h_v, m_v])`. After the last
//! layer a linear readout on `[h_u, h_v, x_uv]` gives four logits per
//! edge. Gradients are derived by hand and checked against finite
//! differences in the tests.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::telemetry::FeatureBundle;
use crate::topology::{DirectedEdge, GraphModel};

/// Width of every hidden state and message.
pub const HIDDEN: usize = 8;
/// Raw feature columns per vertex and per edge.
pub const FEATURES: usize = 3;
/// Output classes.
pub const CLASSES: usize = 4;
/// Format tag written into model files.
pub const MODEL_VERSION: u32 = 1;

/// Four-level edge congestion label. Lower numbers are more congested.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(into = "u8", try_from = "u8")]
pub enum CongestionClass {
    HighlyCongested = 1,
    ModeratelyCongested = 2,
    Balanced = 3,
    Uncongested = 4,
}

impl CongestionClass {
    pub const ALL: [CongestionClass; 4] = [
        CongestionClass::HighlyCongested,
        CongestionClass::ModeratelyCongested,
        CongestionClass::Balanced,
        CongestionClass::Uncongested,
    ];

    /// 1..=4
    pub fn number(self) -> u8 {
        self as u8
    }

    /// 0..4, the logit column.
    pub fn index(self) -> usize {
        self as usize - 1
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    /// Classes 1 and 2.
    pub fn is_congested(self) -> bool {
        matches!(self, Self::HighlyCongested | Self::ModeratelyCongested)
    }
}

impl From<CongestionClass> for u8 {
    fn from(c: CongestionClass) -> u8 {
        c.number()
    }
}

impl TryFrom<u8> for CongestionClass {
    type Error = String;
    fn try_from(v: u8) -> Result<Self, String> {
        match v {
            1..=4 => Ok(Self::ALL[usize::from(v) - 1]),
            _ => Err(format!("congestion class must be 1..=4, got {v}")),
        }
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum MpnnError {
    #[error("congestion {0} is outside [0, 100]")]
    OutOfRange(f64),
    #[error("shape mismatch in {what}: expected {expected}, got {got}")]
    Shape { what: &'static str, expected: usize, got: usize },
    #[error("edge ({0}, {1}) references a vertex outside the bundle")]
    BadEdge(usize, usize),
    #[error("training set is empty")]
    EmptyDataset,
    #[error("training diverged at epoch {epoch}: loss {loss}")]
    Diverged { epoch: usize, loss: f64 },
    #[error("need at least one layer")]
    NoLayers,
    #[error("unsupported model version {0}")]
    Version(u32),
    #[error("malformed model file: {0}")]
    Format(String),
}

/// Quartile labels on the congestion percentage, boundaries inclusive upward.
pub fn label_oracle(congestion_pct: f64) -> Result<CongestionClass, MpnnError> {
    if !(0.0..=100.0).contains(&congestion_pct) {
        return Err(MpnnError::OutOfRange(congestion_pct));
    }
    Ok(match congestion_pct {
        c if c >= 75.0 => CongestionClass::HighlyCongested,
        c if c >= 50.0 => CongestionClass::ModeratelyCongested,
        c if c >= 25.0 => CongestionClass::Balanced,
        _ => CongestionClass::Uncongested,
    })
}

/// Affine map `y = W x + b` with row-major `W` (`rows = out`, `cols = in`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dense {
    pub rows: usize,
    pub cols: usize,
    pub w: Vec<f64>,
    pub b: Vec<f64>,
}

impl Dense {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, w: vec![0.0; rows * cols], b: vec![0.0; rows] }
    }

    fn uniform(rows: usize, cols: usize, scale: f64, rng: &mut ChaCha8Rng) -> Self {
        let mut d = Self::zeros(rows, cols);
        for x in d.w.iter_mut().chain(d.b.iter_mut()) {
            *x = rng.gen_range(-scale..=scale);
        }
        d
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        for (r, out) in y.iter_mut().enumerate() {
            let row = &self.w[r * self.cols..(r + 1) * self.cols];
            *out = self.b[r] + row.iter().zip(x).map(|(a, b)| a * b).sum::<f64>();
        }
    }

    /// Accumulates `dW += dy x^T`, `db += dy` and `dx += W^T dy`.
    fn backward(&self, x: &[f64], dy: &[f64], grad: &mut Dense, dx: &mut [f64]) {
        for (r, &g) in dy.iter().enumerate() {
            if g == 0.0 {
                continue;
            }
            grad.b[r] += g;
            let row = &self.w[r * self.cols..(r + 1) * self.cols];
            let grow = &mut grad.w[r * self.cols..(r + 1) * self.cols];
            for c in 0..self.cols {
                grow[c] += g * x[c];
                dx[c] += g * row[c];
            }
        }
    }

    fn values(&self) -> impl Iterator<Item = &f64> {
        self.w.iter().chain(&self.b)
    }

    fn values_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.w.iter_mut().chain(self.b.iter_mut())
    }
}

/// Trainable weights. `phi[l]` and `psi[l]` belong to layer `l + 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Weights {
    pub phi: Vec<Dense>,
    pub psi: Vec<Dense>,
    pub readout: Dense,
}

impl Weights {
    fn shaped(layers: usize, mut make: impl FnMut(usize, usize) -> Dense) -> Self {
        let mut phi = Vec::with_capacity(layers);
        let mut psi = Vec::with_capacity(layers);
        for l in 0..layers {
            let h_in = if l == 0 { FEATURES } else { HIDDEN };
            phi.push(make(HIDDEN, 2 * h_in + FEATURES));
            psi.push(make(HIDDEN, h_in + HIDDEN));
        }
        let readout = make(CLASSES, 2 * HIDDEN + FEATURES);
        Self { phi, psi, readout }
    }

    pub fn zeros(layers: usize) -> Self {
        Self::shaped(layers, Dense::zeros)
    }

    /// Uniform in `[-scale, scale]`, drawn layer by layer.
    pub fn init(layers: usize, scale: f64, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Self::shaped(layers, |r, c| Dense::uniform(r, c, scale, &mut rng))
    }

    pub fn layers(&self) -> usize {
        self.phi.len()
    }

    fn denses(&self) -> impl Iterator<Item = &Dense> {
        self.phi.iter().zip(&self.psi).flat_map(|(a, b)| [a, b]).chain(std::iter::once(&self.readout))
    }

    fn denses_mut(&mut self) -> impl Iterator<Item = &mut Dense> {
        self.phi.iter_mut().zip(self.psi.iter_mut()).flat_map(|(a, b)| [a, b]).chain(std::iter::once(&mut self.readout))
    }

    /// Every weight and bias in a fixed order.
    pub fn flatten(&self) -> Vec<f64> {
        self.denses().flat_map(Dense::values).copied().collect()
    }

    pub fn set_flat(&mut self, values: &[f64]) {
        let mut it = values.iter();
        for d in self.denses_mut() {
            for x in d.values_mut() {
                *x = *it.next().expect("flat vector too short");
            }
        }
        assert!(it.next().is_none(), "flat vector too long");
    }

    pub fn param_count(&self) -> usize {
        self.denses().map(|d| d.w.len() + d.b.len()).sum()
    }

    /// `self += alpha * other`.
    pub fn axpy(&mut self, alpha: f64, other: &Weights) {
        for (a, b) in self.denses_mut().zip(other.denses()) {
            for (x, y) in a.values_mut().zip(b.values()) {
                *x += alpha * y;
            }
        }
    }

    pub fn is_finite(&self) -> bool {
        self.denses().flat_map(Dense::values).all(|x| x.is_finite())
    }
}

/// Column-wise z-score for vertex and edge features, fitted once on the
/// training set so that every bundle is scaled the same way.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub vertex_mean: [f64; FEATURES],
    pub vertex_std: [f64; FEATURES],
    pub edge_mean: [f64; FEATURES],
    pub edge_std: [f64; FEATURES],
}

impl Default for Standardizer {
    /// Identity scaling.
    fn default() -> Self {
        Self { vertex_mean: [0.0; 3], vertex_std: [1.0; 3], edge_mean: [0.0; 3], edge_std: [1.0; 3] }
    }
}

fn column_stats<'a>(rows: impl Iterator<Item = &'a [f64; FEATURES]>) -> ([f64; FEATURES], [f64; FEATURES]) {
    let mut n = 0usize;
    let mut sum = [0.0; FEATURES];
    let mut sq = [0.0; FEATURES];
    for r in rows {
        n += 1;
        for c in 0..FEATURES {
            sum[c] += r[c];
            sq[c] += r[c] * r[c];
        }
    }
    let mut mean = [0.0; FEATURES];
    let mut std = [1.0; FEATURES];
    if n > 0 {
        for c in 0..FEATURES {
            mean[c] = sum[c] / n as f64;
            let var = (sq[c] / n as f64 - mean[c] * mean[c]).max(0.0);
            // a constant column would divide by zero; leave it centred only
            std[c] = if var.sqrt() > 1e-12 { var.sqrt() } else { 1.0 };
        }
    }
    (mean, std)
}

impl Standardizer {
    pub fn fit<'a>(bundles: impl Iterator<Item = &'a FeatureBundle> + Clone) -> Self {
        let (vertex_mean, vertex_std) = column_stats(bundles.clone().flat_map(|b| b.x_v.iter()));
        let (edge_mean, edge_std) = column_stats(bundles.flat_map(|b| b.x_e.iter()));
        Self { vertex_mean, vertex_std, edge_mean, edge_std }
    }

    pub fn apply(&self, bundle: &FeatureBundle) -> FeatureBundle {
        let scale = |rows: &[[f64; 3]], mean: &[f64; 3], std: &[f64; 3]| -> Vec<[f64; 3]> {
            rows.iter().map(|r| std::array::from_fn(|c| (r[c] - mean[c]) / std[c])).collect()
        };
        FeatureBundle {
            x_v: scale(&bundle.x_v, &self.vertex_mean, &self.vertex_std),
            x_e: scale(&bundle.x_e, &self.edge_mean, &self.edge_std),
            edge_index: bundle.edge_index.clone(),
        }
    }
}

/// A trained (or freshly initialised) classifier.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub version: u32,
    pub seed: u64,
    pub weights: Weights,
    pub standardizer: Standardizer,
}

impl ModelParams {
    pub fn init(layers: usize, seed: u64) -> Result<Self, MpnnError> {
        if layers == 0 {
            return Err(MpnnError::NoLayers);
        }
        Ok(Self {
            version: MODEL_VERSION,
            seed,
            weights: Weights::init(layers, INIT_SCALE, seed),
            standardizer: Standardizer::default(),
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("model serializes")
    }

    pub fn from_json(s: &str) -> Result<Self, MpnnError> {
        let m: Self = serde_json::from_str(s).map_err(|e| MpnnError::Format(e.to_string()))?;
        if m.version != MODEL_VERSION {
            return Err(MpnnError::Version(m.version));
        }
        let expected = Weights::zeros(m.weights.layers());
        for (a, b) in m.weights.denses().zip(expected.denses()) {
            if (a.rows, a.cols) != (b.rows, b.cols) || a.w.len() != b.w.len() || a.b.len() != b.b.len() {
                return Err(MpnnError::Format(format!("layer shape {}x{} does not fit", a.rows, a.cols)));
            }
        }
        if m.weights.layers() == 0 {
            return Err(MpnnError::NoLayers);
        }
        Ok(m)
    }

    /// Logits for a raw (unscaled) bundle.
    pub fn logits(&self, bundle: &FeatureBundle) -> Result<Vec<[f64; CLASSES]>, MpnnError> {
        forward(&self.weights, &self.standardizer.apply(bundle))
    }
}

/// Anything that labels the edges of a feature bundle. The control loop
/// only ever talks to this trait, never to ground-truth labels.
pub trait EdgeClassifier {
    fn classify(&self, bundle: &FeatureBundle) -> Result<Vec<CongestionClass>, MpnnError>;
}

impl EdgeClassifier for ModelParams {
    fn classify(&self, bundle: &FeatureBundle) -> Result<Vec<CongestionClass>, MpnnError> {
        Ok(self.logits(bundle)?.iter().map(argmax_class).collect())
    }
}

/// Highest logit; ties go to the more congested (lower-numbered) class.
pub fn argmax_class(logits: &[f64; CLASSES]) -> CongestionClass {
    let mut best = 0;
    for k in 1..CLASSES {
        if logits[k] > logits[best] {
            best = k;
        }
    }
    CongestionClass::ALL[best]
}

pub fn classify(params: &ModelParams, bundle: &FeatureBundle) -> Result<Vec<CongestionClass>, MpnnError> {
    params.classify(bundle)
}

fn check_shapes(w: &Weights, b: &FeatureBundle) -> Result<(), MpnnError> {
    if w.layers() == 0 {
        return Err(MpnnError::NoLayers);
    }
    if b.x_e.len() != b.edge_index.len() {
        return Err(MpnnError::Shape {
            what: "edge features vs edge index",
            expected: b.edge_index.len(),
            got: b.x_e.len(),
        });
    }
    let n = b.x_v.len();
    if let Some(&(u, v)) = b.edge_index.iter().find(|&&(u, v)| u >= n || v >= n) {
        return Err(MpnnError::BadEdge(u, v));
    }
    let first = &w.phi[0];
    if first.cols != 2 * FEATURES + FEATURES {
        return Err(MpnnError::Shape { what: "first message input", expected: 3 * FEATURES, got: first.cols });
    }
    Ok(())
}

fn relu(z: &[f64]) -> Vec<f64> {
    z.iter().map(|&x| x.max(0.0)).collect()
}

/// Everything the backward pass needs from one layer.
struct LayerCache {
    msg_in: Vec<Vec<f64>>,
    msg_pre: Vec<Vec<f64>>,
    upd_in: Vec<Vec<f64>>,
    upd_pre: Vec<Vec<f64>>,
}

struct ForwardCache {
    layers: Vec<LayerCache>,
    readout_in: Vec<Vec<f64>>,
    logits: Vec<[f64; CLASSES]>,
}

fn concat(parts: &[&[f64]]) -> Vec<f64> {
    parts.iter().flat_map(|p| p.iter().copied()).collect()
}

fn forward_cached(w: &Weights, b: &FeatureBundle) -> Result<ForwardCache, MpnnError> {
    check_shapes(w, b)?;
    let n = b.x_v.len();
    let mut h: Vec<Vec<f64>> = b.x_v.iter().map(|r| r.to_vec()).collect();
    let mut layers = Vec::with_capacity(w.layers());
    for (phi, psi) in w.phi.iter().zip(&w.psi) {
        let mut msg_in = Vec::with_capacity(b.edge_index.len());
        let mut msg_pre = Vec::with_capacity(b.edge_index.len());
        let mut agg = vec![vec![0.0; HIDDEN]; n];
        for (&(u, v), x) in b.edge_index.iter().zip(&b.x_e) {
            let input = concat(&[&h[u], &h[v], x]);
            let mut z = vec![0.0; HIDDEN];
            phi.apply(&input, &mut z);
            for (a, m) in agg[v].iter_mut().zip(relu(&z)) {
                *a += m;
            }
            msg_in.push(input);
            msg_pre.push(z);
        }
        let mut upd_in = Vec::with_capacity(n);
        let mut upd_pre = Vec::with_capacity(n);
        let mut next = Vec::with_capacity(n);
        for v in 0..n {
            let input = concat(&[&h[v], &agg[v]]);
            let mut z = vec![0.0; HIDDEN];
            psi.apply(&input, &mut z);
            next.push(relu(&z));
            upd_in.push(input);
            upd_pre.push(z);
        }
        h = next;
        layers.push(LayerCache { msg_in, msg_pre, upd_in, upd_pre });
    }
    let mut readout_in = Vec::with_capacity(b.edge_index.len());
    let mut logits = Vec::with_capacity(b.edge_index.len());
    for (&(u, v), x) in b.edge_index.iter().zip(&b.x_e) {
        let input = concat(&[&h[u], &h[v], x]);
        let mut out = [0.0; CLASSES];
        w.readout.apply(&input, &mut out);
        readout_in.push(input);
        logits.push(out);
    }
    Ok(ForwardCache { layers, readout_in, logits })
}

/// Edge logits for an already scaled bundle, one row per directed edge.
pub fn forward(w: &Weights, bundle: &FeatureBundle) -> Result<Vec<[f64; CLASSES]>, MpnnError> {
    Ok(forward_cached(w, bundle)?.logits)
}

fn log_softmax(z: &[f64; CLASSES]) -> [f64; CLASSES] {
    let m = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = m + z.iter().map(|&x| (x - m).exp()).sum::<f64>().ln();
    std::array::from_fn(|k| z[k] - lse)
}

/// Summed cross-entropy, optionally weighted per class.
pub fn loss(logits: &[[f64; CLASSES]], labels: &[CongestionClass]) -> f64 {
    weighted_loss(logits, labels, None)
}

fn weighted_loss(logits: &[[f64; CLASSES]], labels: &[CongestionClass], weights: Option<&[f64; CLASSES]>) -> f64 {
    logits.iter().zip(labels).map(|(z, y)| -log_softmax(z)[y.index()] * weights.map_or(1.0, |w| w[y.index()])).sum()
}

/// Loss and its exact gradient with respect to every weight.
pub fn loss_and_grad(
    w: &Weights,
    bundle: &FeatureBundle,
    labels: &[CongestionClass],
    class_weights: Option<&[f64; CLASSES]>,
) -> Result<(f64, Weights), MpnnError> {
    if labels.len() != bundle.edge_index.len() {
        return Err(MpnnError::Shape { what: "labels", expected: bundle.edge_index.len(), got: labels.len() });
    }
    let cache = forward_cached(w, bundle)?;
    let n = bundle.x_v.len();
    let mut g = Weights::zeros(w.layers());
    let value = weighted_loss(&cache.logits, labels, class_weights);

    // readout
    let mut dh = vec![vec![0.0; HIDDEN]; n];
    for (i, (&(u, v), y)) in bundle.edge_index.iter().zip(labels).enumerate() {
        let lsm = log_softmax(&cache.logits[i]);
        let scale = class_weights.map_or(1.0, |cw| cw[y.index()]);
        let dz: Vec<f64> = (0..CLASSES).map(|k| scale * (lsm[k].exp() - f64::from(u8::from(k == y.index())))).collect();
        let mut dx = vec![0.0; 2 * HIDDEN + FEATURES];
        w.readout.backward(&cache.readout_in[i], &dz, &mut g.readout, &mut dx);
        add(&mut dh[u], &dx[..HIDDEN]);
        add(&mut dh[v], &dx[HIDDEN..2 * HIDDEN]);
    }

    // message-passing layers, last to first
    for l in (0..w.layers()).rev() {
        let c = &cache.layers[l];
        let h_dim = if l == 0 { FEATURES } else { HIDDEN };
        let mut dh_in = vec![vec![0.0; h_dim]; n];
        let mut dagg = vec![vec![0.0; HIDDEN]; n];
        for v in 0..n {
            let dz: Vec<f64> = dh[v].iter().zip(&c.upd_pre[v]).map(|(&d, &z)| if z > 0.0 { d } else { 0.0 }).collect();
            let mut dx = vec![0.0; h_dim + HIDDEN];
            w.psi[l].backward(&c.upd_in[v], &dz, &mut g.psi[l], &mut dx);
            add(&mut dh_in[v], &dx[..h_dim]);
            add(&mut dagg[v], &dx[h_dim..]);
        }
        for (i, &(u, v)) in bundle.edge_index.iter().enumerate() {
            let dz: Vec<f64> =
                dagg[v].iter().zip(&c.msg_pre[i]).map(|(&d, &z)| if z > 0.0 { d } else { 0.0 }).collect();
            let mut dx = vec![0.0; 2 * h_dim + FEATURES];
            w.phi[l].backward(&c.msg_in[i], &dz, &mut g.phi[l], &mut dx);
            add(&mut dh_in[u], &dx[..h_dim]);
            add(&mut dh_in[v], &dx[h_dim..2 * h_dim]);
        }
        dh = dh_in;
    }
    Ok((value, g))
}

fn add(acc: &mut [f64], x: &[f64]) {
    for (a, b) in acc.iter_mut().zip(x) {
        *a += b;
    }
}

/// Gradient of the summed cross-entropy.
pub fn grad(w: &Weights, bundle: &FeatureBundle, labels: &[CongestionClass]) -> Result<Weights, MpnnError> {
    Ok(loss_and_grad(w, bundle, labels, None)?.1)
}

/// Initial weights are uniform in `[-INIT_SCALE, INIT_SCALE]`.
pub const INIT_SCALE: f64 = 0.1;
/// Loss above which training stops as diverged.
pub const DIVERGENCE_LOSS: f64 = 1e6;

/// Where a sample came from.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct SampleTag {
    pub model: Option<GraphModel>,
    pub n: usize,
    pub seed: u64,
    pub iteration: u32,
}

/// One telemetry window with ground-truth labels for every directed core edge.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub tag: SampleTag,
    pub bundle: FeatureBundle,
    pub labels: Vec<CongestionClass>,
}

impl Sample {
    /// Labels every edge of `bundle` from its raw congestion column.
    pub fn labelled(tag: SampleTag, bundle: FeatureBundle) -> Result<Self, MpnnError> {
        let labels = bundle.x_e.iter().map(|r| label_oracle(r[1])).collect::<Result<_, _>>()?;
        Ok(Self { tag, bundle, labels })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub lr: f64,
    pub epochs: usize,
    /// Graphs per gradient step.
    pub batch: usize,
    pub layers: usize,
    pub seed: u64,
    /// Weight each class by inverse training frequency.
    pub class_weights: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self { lr: 1e-2, epochs: 200, batch: 1, layers: 2, seed: 0, class_weights: false }
    }
}

/// Mean per-edge loss after each epoch.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochLoss {
    pub epoch: usize,
    pub train: f64,
    pub validation: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    pub model: ModelParams,
    pub curve: Vec<EpochLoss>,
}

fn inverse_frequency(samples: &[Sample]) -> [f64; CLASSES] {
    let mut counts = [0usize; CLASSES];
    for s in samples {
        for y in &s.labels {
            counts[y.index()] += 1;
        }
    }
    let total: usize = counts.iter().sum();
    std::array::from_fn(|k| if counts[k] == 0 { 0.0 } else { total as f64 / (CLASSES * counts[k]) as f64 })
}

/// Mean per-edge loss of `model` on raw samples.
pub fn mean_loss(model: &ModelParams, samples: &[Sample]) -> Result<f64, MpnnError> {
    let mut total = 0.0;
    let mut edges = 0;
    for s in samples {
        total += loss(&model.logits(&s.bundle)?, &s.labels);
        edges += s.labels.len();
    }
    Ok(if edges == 0 { 0.0 } else { total / edges as f64 })
}

/// Fraction of edges whose predicted class equals the label.
pub fn accuracy(model: &(impl EdgeClassifier + ?Sized), samples: &[Sample]) -> Result<(usize, usize), MpnnError> {
    let mut right = 0;
    let mut total = 0;
    for s in samples {
        let pred = model.classify(&s.bundle)?;
        right += pred.iter().zip(&s.labels).filter(|(a, b)| a == b).count();
        total += s.labels.len();
    }
    Ok((right, total))
}

/// Gradient descent over graphs in seeded random order. Each step averages
/// the summed loss gradient over the edges of its batch.
pub fn train(samples: &[Sample], validation: &[Sample], cfg: &TrainConfig) -> Result<TrainOutcome, MpnnError> {
    if samples.is_empty() {
        return Err(MpnnError::EmptyDataset);
    }
    let mut model = ModelParams::init(cfg.layers, cfg.seed)?;
    model.standardizer = Standardizer::fit(samples.iter().map(|s| &s.bundle));
    let scaled: Vec<FeatureBundle> = samples.iter().map(|s| model.standardizer.apply(&s.bundle)).collect();
    let cw = cfg.class_weights.then(|| inverse_frequency(samples));
    let mut rng = ChaCha8Rng::seed_from_u64(crate::seed::derive(cfg.seed, 1));
    let mut order: Vec<usize> = (0..samples.len()).collect();
    let mut curve = Vec::with_capacity(cfg.epochs);
    let batch = cfg.batch.max(1);
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        let mut epoch_edges = 0;
        for chunk in order.chunks(batch) {
            let mut g = Weights::zeros(cfg.layers);
            let mut edges = 0;
            for &i in chunk {
                let (l, gi) = loss_and_grad(&model.weights, &scaled[i], &samples[i].labels, cw.as_ref())?;
                epoch_loss += l;
                edges += samples[i].labels.len();
                g.axpy(1.0, &gi);
            }
            epoch_edges += edges;
            if edges > 0 {
                model.weights.axpy(-cfg.lr / edges as f64, &g);
            }
        }
        let train_loss = if epoch_edges == 0 { 0.0 } else { epoch_loss / epoch_edges as f64 };
        if !train_loss.is_finite() || train_loss > DIVERGENCE_LOSS || !model.weights.is_finite() {
            return Err(MpnnError::Diverged { epoch, loss: train_loss });
        }
        let validation = if validation.is_empty() { None } else { Some(mean_loss(&model, validation)?) };
        curve.push(EpochLoss { epoch, train: train_loss, validation });
    }
    Ok(TrainOutcome { model, curve })
}

/// `epoch,train_loss,validation_loss`
pub fn write_curve_csv<W: std::io::Write>(curve: &[EpochLoss], out: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["epoch", "train_loss", "validation_loss"])?;
    for e in curve {
        w.write_record([
            e.epoch.to_string(),
            e.train.to_string(),
            e.validation.map(|v| v.to_string()).unwrap_or_default(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Directed edges of `bundle` paired with their predicted classes.
pub fn edge_classes(
    model: &(impl EdgeClassifier + ?Sized),
    bundle: &FeatureBundle,
) -> Result<Vec<(DirectedEdge, CongestionClass)>, MpnnError> {
    Ok(bundle.edge_index.iter().copied().zip(model.classify(bundle)?).collect())
}

#[cfg(test)]
mod tests;
