use std::collections::BTreeSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{CoreGraph, DegreeBounds, GraphModel, GraphParams, TopologyError, VertexId};

const MAX_REPAIR_ROUNDS: usize = 100;
const MAX_REGENERATIONS: usize = 64;

/// Model choice plus its parameters, as carried in configs and the CLI.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GraphSpec {
    pub model: GraphModel,
    pub n: usize,
    #[serde(default)]
    pub params: GraphParams,
}

/// Dispatches to the generator for `spec.model`.
pub fn generate(spec: &GraphSpec, bounds: DegreeBounds, seed: u64) -> Result<CoreGraph, TopologyError> {
    let missing = |name: &str| TopologyError::InvalidParameter(format!("{} requires `{name}`", spec.model));
    match spec.model {
        GraphModel::ErdosRenyi => gen_erdos_renyi(spec.n, spec.params.p.ok_or_else(|| missing("p"))?, bounds, seed),
        GraphModel::BarabasiAlbert => {
            gen_barabasi_albert(spec.n, spec.params.m.ok_or_else(|| missing("m"))?, bounds, seed)
        }
        GraphModel::WattsStrogatz => gen_watts_strogatz(
            spec.n,
            spec.params.k.ok_or_else(|| missing("k"))?,
            spec.params.p.ok_or_else(|| missing("p"))?,
            bounds,
            seed,
        ),
    }
}

/// G(n, p): every vertex pair independently joined with probability `p`.
pub fn gen_erdos_renyi(n: usize, p: f64, bounds: DegreeBounds, seed: u64) -> Result<CoreGraph, TopologyError> {
    if !(p > 0.0 && p <= 1.0) {
        return Err(TopologyError::InvalidParameter(format!("p = {p} outside (0, 1]")));
    }
    let params = GraphParams { p: Some(p), ..Default::default() };
    build(GraphModel::ErdosRenyi, params, n, bounds, seed, |rng| {
        let mut g = Graph::new(n);
        for u in 0..n {
            for v in u + 1..n {
                if rng.gen::<f64>() < p {
                    g.add(u, v);
                }
            }
        }
        g
    })
}

/// Preferential attachment from a complete seed graph on `m + 1` vertices.
pub fn gen_barabasi_albert(n: usize, m: usize, bounds: DegreeBounds, seed: u64) -> Result<CoreGraph, TopologyError> {
    if m < 1 || m >= n {
        return Err(TopologyError::InvalidParameter(format!("m = {m} must satisfy 1 <= m < n = {n}")));
    }
    let params = GraphParams { m: Some(m), ..Default::default() };
    build(GraphModel::BarabasiAlbert, params, n, bounds, seed, |rng| {
        let mut g = Graph::new(n);
        let initial = m + 1;
        for u in 0..initial {
            for v in u + 1..initial {
                g.add(u, v);
            }
        }
        for v in initial..n {
            let mut chosen: Vec<VertexId> = Vec::with_capacity(m);
            while chosen.len() < m {
                let total: usize = (0..v).filter(|u| !chosen.contains(u)).map(|u| g.degree(u)).sum();
                let mut r = rng.gen_range(0..total);
                let pick = (0..v)
                    .filter(|u| !chosen.contains(u))
                    .find(|&u| {
                        let d = g.degree(u);
                        if r < d {
                            true
                        } else {
                            r -= d;
                            false
                        }
                    })
                    .expect("weighted pick lands inside the total");
                chosen.push(pick);
            }
            for u in chosen {
                g.add(u, v);
            }
        }
        g
    })
}

/// Ring lattice of `k` nearest neighbours, each lattice edge rewired with
/// probability `p`.
pub fn gen_watts_strogatz(
    n: usize,
    k: usize,
    p: f64,
    bounds: DegreeBounds,
    seed: u64,
) -> Result<CoreGraph, TopologyError> {
    if k < 2 || !k.is_multiple_of(2) || k >= n {
        return Err(TopologyError::InvalidParameter(format!("k = {k} must be even, >= 2 and < n = {n}")));
    }
    if !(0.0..=1.0).contains(&p) {
        return Err(TopologyError::InvalidParameter(format!("p = {p} outside [0, 1]")));
    }
    let params = GraphParams { p: Some(p), k: Some(k), ..Default::default() };
    build(GraphModel::WattsStrogatz, params, n, bounds, seed, |rng| {
        let mut g = Graph::new(n);
        for u in 0..n {
            for j in 1..=k / 2 {
                g.add(u, (u + j) % n);
            }
        }
        for j in 1..=k / 2 {
            for u in 0..n {
                let v = (u + j) % n;
                if rng.gen::<f64>() >= p || !g.has(u, v) {
                    continue;
                }
                let free: Vec<VertexId> = (0..n).filter(|&w| w != u && !g.has(u, w)).collect();
                if free.is_empty() {
                    continue;
                }
                let w = free[rng.gen_range(0..free.len())];
                g.remove(u, v);
                g.add(u, w);
            }
        }
        g
    })
}

fn build<F>(
    model: GraphModel,
    params: GraphParams,
    n: usize,
    bounds: DegreeBounds,
    seed: u64,
    mut base: F,
) -> Result<CoreGraph, TopologyError>
where
    F: FnMut(&mut ChaCha8Rng) -> Graph,
{
    let bounds = DegreeBounds::new(bounds.min_deg, bounds.max_deg)?;
    if n < 3 || bounds.min_deg > n - 1 {
        return Err(TopologyError::TooFewVertices { n, min_deg: bounds.min_deg });
    }
    for attempt in 0..MAX_REGENERATIONS {
        let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(attempt as u64));
        let mut g = base(&mut rng);
        if let Some(edits) = repair(&mut g, bounds) {
            return Ok(CoreGraph {
                n,
                edges: g.edge_list(),
                model,
                seed,
                params,
                bounds,
                regenerations: attempt,
                repair_edits: edits,
            });
        }
        log::debug!("{model} n={n} seed={seed}: repair failed on attempt {attempt}");
    }
    Err(TopologyError::RepairFailed { seed, attempts: MAX_REGENERATIONS })
}

/// Adjacency sets; `BTreeSet` keeps every scan in id order.
#[derive(Debug, Clone)]
struct Graph {
    adj: Vec<BTreeSet<VertexId>>,
}

impl Graph {
    fn new(n: usize) -> Self {
        Self { adj: vec![BTreeSet::new(); n] }
    }

    fn n(&self) -> usize {
        self.adj.len()
    }

    fn degree(&self, v: VertexId) -> usize {
        self.adj[v].len()
    }

    fn has(&self, u: VertexId, v: VertexId) -> bool {
        self.adj[u].contains(&v)
    }

    fn add(&mut self, u: VertexId, v: VertexId) {
        debug_assert_ne!(u, v);
        self.adj[u].insert(v);
        self.adj[v].insert(u);
    }

    fn remove(&mut self, u: VertexId, v: VertexId) {
        self.adj[u].remove(&v);
        self.adj[v].remove(&u);
    }

    fn edge_list(&self) -> Vec<(VertexId, VertexId)> {
        let mut out = Vec::new();
        for (u, set) in self.adj.iter().enumerate() {
            out.extend(set.range(u + 1..).map(|&v| (u, v)));
        }
        out
    }

    /// Component label per vertex; labels are assigned in order of the
    /// smallest member id.
    fn components(&self) -> Vec<usize> {
        let mut label = vec![usize::MAX; self.n()];
        let mut next = 0;
        for s in 0..self.n() {
            if label[s] != usize::MAX {
                continue;
            }
            label[s] = next;
            let mut stack = vec![s];
            while let Some(u) = stack.pop() {
                for &w in &self.adj[u] {
                    if label[w] == usize::MAX {
                        label[w] = next;
                        stack.push(w);
                    }
                }
            }
            next += 1;
        }
        label
    }

    fn reaches(&self, from: VertexId, to: VertexId) -> bool {
        let mut seen = vec![false; self.n()];
        let mut stack = vec![from];
        seen[from] = true;
        while let Some(u) = stack.pop() {
            if u == to {
                return true;
            }
            for &w in &self.adj[u] {
                if !seen[w] {
                    seen[w] = true;
                    stack.push(w);
                }
            }
        }
        false
    }

    fn is_valid(&self, min: usize, max: usize) -> bool {
        (0..self.n()).all(|v| (min..=max).contains(&self.degree(v))) && self.components().iter().all(|&c| c == 0)
    }
}

/// Enforces the degree bounds and connectivity. Returns the number of edge
/// edits on success, `None` if the round budget ran out.
fn repair(g: &mut Graph, bounds: DegreeBounds) -> Option<usize> {
    let n = g.n();
    let min = bounds.min_deg;
    let max = bounds.effective_max(n);
    let mut edits = 0;

    for _ in 0..MAX_REPAIR_ROUNDS {
        if g.is_valid(min, max) {
            return Some(edits);
        }

        // (a) raise deficient vertices towards the least-loaded non-neighbours
        for v in 0..n {
            while g.degree(v) < min {
                let target =
                    (0..n).filter(|&u| u != v && !g.has(u, v) && g.degree(u) < max).min_by_key(|&u| (g.degree(u), u));
                match target {
                    Some(u) => {
                        g.add(u, v);
                        edits += 1;
                    }
                    None => break,
                }
            }
        }

        // (b) shed edges from overloaded vertices, heaviest neighbour first,
        // never splitting a component or starving a neighbour
        for v in 0..n {
            while g.degree(v) > max {
                let mut candidates: Vec<VertexId> = g.adj[v].iter().copied().filter(|&u| g.degree(u) > min).collect();
                candidates.sort_by_key(|&u| (std::cmp::Reverse(g.degree(u)), u));
                let mut removed = false;
                for u in candidates {
                    g.remove(u, v);
                    if g.reaches(u, v) {
                        edits += 1;
                        removed = true;
                        break;
                    }
                    g.add(u, v);
                }
                if !removed {
                    break;
                }
            }
        }

        // (c) stitch components onto the one holding vertex 0, through
        // their least-loaded vertices
        loop {
            let label = g.components();
            if label.iter().all(|&l| l == 0) {
                break;
            }
            let pick = |want: usize| {
                (0..n).filter(|&u| label[u] == want && g.degree(u) < max).min_by_key(|&u| (g.degree(u), u))
            };
            match (pick(0), pick(1)) {
                (Some(a), Some(b)) => {
                    g.add(a, b);
                    edits += 1;
                }
                _ => break,
            }
        }
    }
    g.is_valid(min, max).then_some(edits)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn degrees_ok(g: &CoreGraph) -> bool {
        let max = g.bounds.effective_max(g.n);
        g.degrees().iter().all(|&d| d >= g.bounds.min_deg && d <= max)
    }

    #[test]
    fn three_vertices_always_triangle() {
        for seed in 0..20 {
            let er = gen_erdos_renyi(3, 0.5, DegreeBounds::default(), seed).unwrap();
            assert_eq!(er.edges, vec![(0, 1), (0, 2), (1, 2)]);
            let ba = gen_barabasi_albert(3, 2, DegreeBounds::default(), seed).unwrap();
            assert_eq!(ba.edges, vec![(0, 1), (0, 2), (1, 2)]);
        }
    }

    #[test]
    fn ws_without_rewiring_is_ring() {
        let g = gen_watts_strogatz(4, 2, 0.0, DegreeBounds::default(), 9).unwrap();
        assert_eq!(g.edges, vec![(0, 1), (0, 3), (1, 2), (2, 3)]);
        assert_eq!(g.degrees(), vec![2; 4]);
        assert_eq!(g.repair_edits, 0);
    }

    #[test]
    fn ws_k4_p0_is_4_regular_lattice() {
        let g = gen_watts_strogatz(10, 4, 0.0, DegreeBounds::default(), 1).unwrap();
        assert_eq!(g.edges.len(), 20);
        for (u, v) in &g.edges {
            let d = (v - u).min(10 - (v - u));
            assert!(d == 1 || d == 2);
        }
    }

    #[test]
    fn small_er_draw_is_valid() {
        let g = gen_erdos_renyi(5, 0.6, DegreeBounds::default(), 42).unwrap();
        assert!(g.is_connected());
        assert!(degrees_ok(&g));
        assert!(g.degrees().iter().all(|&d| (2..=4).contains(&d)));
    }

    #[test]
    fn small_ba_hub_is_initial_vertex() {
        let g = gen_barabasi_albert(5, 2, DegreeBounds::default(), 42).unwrap();
        assert!(g.is_connected());
        let deg = g.degrees();
        assert!(deg.iter().all(|&d| (2..=4).contains(&d)));
        let top = *deg.iter().max().unwrap();
        assert!(deg[..3].contains(&top));
    }

    #[test]
    fn ws_ten_is_valid() {
        let g = gen_watts_strogatz(10, 4, 0.3, DegreeBounds::default(), 42).unwrap();
        assert!(g.is_connected());
        assert!(degrees_ok(&g));
    }

    #[test]
    fn parameter_errors() {
        let b = DegreeBounds::default();
        assert!(matches!(gen_erdos_renyi(2, 0.5, b, 0), Err(TopologyError::TooFewVertices { .. })));
        assert!(matches!(gen_erdos_renyi(5, 0.0, b, 0), Err(TopologyError::InvalidParameter(_))));
        assert!(matches!(gen_barabasi_albert(5, 5, b, 0), Err(TopologyError::InvalidParameter(_))));
        assert!(matches!(gen_watts_strogatz(5, 3, 0.1, b, 0), Err(TopologyError::InvalidParameter(_))));
        assert!(matches!(gen_watts_strogatz(5, 6, 0.1, b, 0), Err(TopologyError::InvalidParameter(_))));
        let tight = DegreeBounds { min_deg: 4, max_deg: 9 };
        assert!(matches!(gen_erdos_renyi(4, 0.5, tight, 0), Err(TopologyError::TooFewVertices { .. })));
    }

    #[test]
    fn deterministic_per_seed() {
        let a = gen_erdos_renyi(15, 0.3, DegreeBounds::default(), 77).unwrap();
        let b = gen_erdos_renyi(15, 0.3, DegreeBounds::default(), 77).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn repair_caps_hub_degree() {
        // dense ER on 15 vertices would exceed degree 9 without repair
        for seed in 0..10 {
            let g = gen_erdos_renyi(15, 0.9, DegreeBounds::default(), seed).unwrap();
            assert!(g.degrees().iter().all(|&d| d <= 9), "seed {seed}");
            assert!(g.is_connected());
        }
    }

    #[test]
    fn repair_connects_sparse_draws() {
        for seed in 0..10 {
            let g = gen_erdos_renyi(15, 0.01, DegreeBounds::default(), seed).unwrap();
            assert!(g.is_connected());
            assert!(degrees_ok(&g));
            assert!(g.repair_edits > 0);
        }
    }

    #[test]
    fn generate_dispatch_checks_params() {
        let spec = GraphSpec {
            model: GraphModel::WattsStrogatz,
            n: 10,
            params: GraphParams { k: Some(4), ..Default::default() },
        };
        assert!(matches!(generate(&spec, DegreeBounds::default(), 0), Err(TopologyError::InvalidParameter(_))));
    }
}
