use super::*;
use CongestionClass as C;

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Random connected-ish instance with both directions of every edge.
fn instance(seed: u64, n: usize) -> (FeatureBundle, Vec<CongestionClass>) {
    let mut r = rng(seed);
    let mut edges = Vec::new();
    for v in 1..n {
        let u = r.gen_range(0..v);
        edges.push((u, v));
        edges.push((v, u));
    }
    if n > 2 {
        edges.push((0, n - 1));
        edges.push((n - 1, 0));
    }
    edges.sort_unstable();
    edges.dedup();
    let row = |r: &mut ChaCha8Rng| std::array::from_fn(|_| r.gen_range(-2.0..2.0));
    let x_v = (0..n).map(|_| row(&mut r)).collect();
    let x_e = edges.iter().map(|_| row(&mut r)).collect();
    let labels = edges.iter().map(|_| CongestionClass::ALL[r.gen_range(0..4)]).collect();
    (FeatureBundle { x_v, x_e, edge_index: edges }, labels)
}

#[test]
fn oracle_thresholds() {
    assert_eq!(label_oracle(80.0), Ok(C::HighlyCongested));
    assert_eq!(label_oracle(75.0), Ok(C::HighlyCongested));
    assert_eq!(label_oracle(50.0), Ok(C::ModeratelyCongested));
    assert_eq!(label_oracle(25.0), Ok(C::Balanced));
    assert_eq!(label_oracle(24.999), Ok(C::Uncongested));
    assert_eq!(label_oracle(0.0), Ok(C::Uncongested));
    assert!(label_oracle(100.1).is_err());
    assert!(label_oracle(-1.0).is_err());
}

#[test]
fn argmax_and_ties() {
    assert_eq!(argmax_class(&[0.0, 0.0, 0.0, 5.0]), C::Uncongested);
    assert_eq!(argmax_class(&[3.0, 0.0, 0.0, 3.0]), C::HighlyCongested);
    assert_eq!(argmax_class(&[0.0; 4]), C::HighlyCongested);
    let z = [0.3, -1.0, 2.0, 1.9];
    let shifted = z.map(|x| x + 17.5);
    assert_eq!(argmax_class(&z), argmax_class(&shifted));
}

#[test]
fn class_serializes_as_number() {
    assert_eq!(serde_json::to_string(&C::Balanced).unwrap(), "3");
    assert_eq!(serde_json::from_str::<C>("1").unwrap(), C::HighlyCongested);
    assert!(serde_json::from_str::<C>("5").is_err());
}

#[test]
fn logits_shape_follows_edges() {
    let (b, _) = instance(1, 5);
    let w = Weights::init(2, 0.1, 3);
    assert_eq!(forward(&w, &b).unwrap().len(), b.edge_index.len());
    let mut bad = b.clone();
    bad.x_e.pop();
    assert!(matches!(forward(&w, &bad), Err(MpnnError::Shape { .. })));
    let mut bad = b;
    bad.edge_index[0] = (0, 99);
    assert_eq!(forward(&w, &bad), Err(MpnnError::BadEdge(0, 99)));
}

#[test]
fn isolated_vertex_changes_nothing() {
    let (b, _) = instance(2, 5);
    let w = Weights::init(2, 0.3, 4);
    let mut with_extra = b.clone();
    with_extra.x_v.push([1.0, -1.0, 0.5]);
    assert_eq!(forward(&w, &b).unwrap(), forward(&w, &with_extra).unwrap());
    let empty = FeatureBundle { x_v: vec![[1.0; 3]], x_e: vec![], edge_index: vec![] };
    assert!(forward(&w, &empty).unwrap().is_empty());
}

#[test]
fn permutation_equivariance() {
    let (b, _) = instance(5, 6);
    let w = Weights::init(2, 0.4, 9);
    let logits = forward(&w, &b).unwrap();
    let perm = [3usize, 5, 0, 1, 4, 2];
    let mut x_v = vec![[0.0; 3]; 6];
    for (old, &new) in perm.iter().enumerate() {
        x_v[new] = b.x_v[old];
    }
    // reverse the edge order too
    let edge_index: Vec<_> = b.edge_index.iter().rev().map(|&(u, v)| (perm[u], perm[v])).collect();
    let x_e: Vec<_> = b.x_e.iter().rev().copied().collect();
    let permuted = forward(&w, &FeatureBundle { x_v, x_e, edge_index }).unwrap();
    for (i, row) in logits.iter().enumerate() {
        let other = permuted[logits.len() - 1 - i];
        for k in 0..CLASSES {
            assert!((row[k] - other[k]).abs() < 1e-12);
        }
    }
}

#[test]
fn loss_values() {
    let labels = [C::Balanced; 5];
    let uniform = [[0.0; 4]; 5];
    assert!((loss(&uniform, &labels) - 5.0 * 4f64.ln()).abs() < 1e-12);
    let sharp = [[0.0, 0.0, 50.0, 0.0]; 5];
    assert!(loss(&sharp, &labels) < 1e-12);
    let z = [[1.0, 2.0, 0.5, -1.0]];
    let expected = -(2.0f64.exp() / (1f64.exp() + 2f64.exp() + 0.5f64.exp() + (-1f64).exp())).ln();
    assert!((loss(&z, &[C::ModeratelyCongested]) - expected).abs() < 1e-12);
}

#[test]
fn readout_bias_gradient_with_zero_readout() {
    let (b, _) = instance(8, 4);
    let labels: Vec<_> = (0..b.edge_index.len()).map(|i| CongestionClass::ALL[i % 4]).collect();
    let mut w = Weights::init(2, 0.2, 1);
    w.readout = Dense::zeros(CLASSES, 2 * HIDDEN + FEATURES);
    let g = grad(&w, &b, &labels).unwrap();
    for k in 0..CLASSES {
        let count = labels.iter().filter(|y| y.index() == k).count() as f64;
        let expected = 0.25 * labels.len() as f64 - count;
        assert!((g.readout.b[k] - expected).abs() < 1e-12);
    }
}

/// Largest relative error between analytic and central-difference gradients.
pub(crate) fn max_grad_error(seed: u64, n: usize) -> f64 {
    let (b, labels) = instance(seed, n);
    let w = Weights::init(2, 0.5, seed + 100);
    let g = grad(&w, &b, &labels).unwrap().flatten();
    let base = w.flatten();
    let eps = 1e-5;
    let mut worst: f64 = 0.0;
    let mut probe = w.clone();
    for i in 0..base.len() {
        let mut v = base.clone();
        v[i] = base[i] + eps;
        probe.set_flat(&v);
        let up = loss(&forward(&probe, &b).unwrap(), &labels);
        v[i] = base[i] - eps;
        probe.set_flat(&v);
        let down = loss(&forward(&probe, &b).unwrap(), &labels);
        let fd = (up - down) / (2.0 * eps);
        let denom = g[i].abs().max(fd.abs()).max(GRAD_CHECK_FLOOR);
        worst = worst.max((g[i] - fd).abs() / denom);
    }
    worst
}

/// Coordinates whose true gradient is this small are compared absolutely.
pub(crate) const GRAD_CHECK_FLOOR: f64 = 1e-6;

#[test]
fn gradients_match_finite_differences() {
    for seed in 0..5 {
        let err = max_grad_error(seed, 3 + (seed as usize % 4));
        assert!(err < 1e-4, "seed {seed}: relative error {err}");
    }
}

#[test]
fn gradient_step_descends() {
    let (b, labels) = instance(3, 5);
    let w = Weights::init(2, 0.3, 7);
    let (l0, g) = loss_and_grad(&w, &b, &labels, None).unwrap();
    let mut next = w.clone();
    next.axpy(-1e-3, &g);
    assert!(loss(&forward(&next, &b).unwrap(), &labels) < l0);
}

#[test]
fn weighted_gradient_matches_fd_too() {
    let (b, labels) = instance(4, 4);
    let w = Weights::init(1, 0.5, 2);
    let cw = [2.0, 0.5, 1.5, 0.25];
    let (_, g) = loss_and_grad(&w, &b, &labels, Some(&cw)).unwrap();
    let g = g.flatten();
    let base = w.flatten();
    let mut probe = w.clone();
    for i in (0..base.len()).step_by(7) {
        let mut v = base.clone();
        v[i] += 1e-5;
        probe.set_flat(&v);
        let up = weighted_loss(&forward(&probe, &b).unwrap(), &labels, Some(&cw));
        v[i] -= 2e-5;
        probe.set_flat(&v);
        let down = weighted_loss(&forward(&probe, &b).unwrap(), &labels, Some(&cw));
        let fd = (up - down) / 2e-5;
        assert!((fd - g[i]).abs() <= 1e-4 * fd.abs().max(g[i].abs()).max(GRAD_CHECK_FLOOR));
    }
}

fn samples(count: u64) -> Vec<Sample> {
    (0..count)
        .map(|s| {
            let (bundle, labels) = instance(s, 5);
            Sample { tag: SampleTag { model: None, n: 5, seed: s, iteration: 0 }, bundle, labels }
        })
        .collect()
}

#[test]
fn zero_epochs_returns_initialisation() {
    let data = samples(2);
    let cfg = TrainConfig { epochs: 0, seed: 5, ..TrainConfig::default() };
    let out = train(&data, &[], &cfg).unwrap();
    assert_eq!(out.model.weights, Weights::init(2, INIT_SCALE, 5));
    assert!(out.curve.is_empty());
    assert_eq!(train(&[], &[], &cfg), Err(MpnnError::EmptyDataset));
}

#[test]
fn overfits_one_sample() {
    let data = samples(1);
    let edges = data[0].labels.len() as f64;
    let cfg = TrainConfig { epochs: 500, lr: 0.5, seed: 1, ..TrainConfig::default() };
    let out = train(&data, &[], &cfg).unwrap();
    let final_loss = mean_loss(&out.model, &data).unwrap() * edges;
    assert!(final_loss < 0.01 * edges * 4f64.ln(), "loss {final_loss}");
}

#[test]
fn training_is_deterministic_and_serializable() {
    let data = samples(4);
    let cfg = TrainConfig { epochs: 5, seed: 2, class_weights: true, ..TrainConfig::default() };
    let a = train(&data, &data[..1], &cfg).unwrap();
    let b = train(&data, &data[..1], &cfg).unwrap();
    assert_eq!(a, b);
    assert!(a.curve.iter().all(|e| e.validation.is_some()));
    let back = ModelParams::from_json(&a.model.to_json()).unwrap();
    assert_eq!(back, a.model);
    let mut wrong = a.model.clone();
    wrong.version = 99;
    assert_eq!(ModelParams::from_json(&wrong.to_json()), Err(MpnnError::Version(99)));
}

#[test]
fn divergence_is_reported() {
    let data = samples(2);
    let cfg = TrainConfig { epochs: 50, lr: 1e9, seed: 0, ..TrainConfig::default() };
    assert!(matches!(train(&data, &[], &cfg), Err(MpnnError::Diverged { .. })));
}
