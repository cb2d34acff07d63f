use serde::{Deserialize, Serialize};

use super::{CoreGraph, TopologyError, VertexId};

pub const DEFAULT_PATH_CEILING: u64 = 1_000_000;

/// Edge count plus simple-path statistics between gateway pairs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TopologyStats {
    pub edge_count: usize,
    pub path_count: u64,
    pub avg_hop_length: f64,
}

/// Counts every simple path between each gateway pair by exhaustive DFS.
///
/// Fails once more than `ceiling` paths have been seen, so dense 15-vertex
/// draws cannot run away.
pub fn topology_stats(
    core: &CoreGraph,
    gateways: &[(VertexId, VertexId)],
    ceiling: u64,
) -> Result<TopologyStats, TopologyError> {
    if gateways.is_empty() {
        return Err(TopologyError::InvalidParameter("no gateway pairs given".into()));
    }
    let adj = core.adjacency();
    let mut paths = 0u64;
    let mut hops = 0u64;
    for &(s, t) in gateways {
        for v in [s, t] {
            if v >= core.n {
                return Err(TopologyError::NotCoreVertex(v));
            }
        }
        let mut on_path = vec![false; core.n];
        on_path[s] = true;
        let mut walker = Walker { adj: &adj, target: t, on_path, paths: 0, hops: 0, ceiling };
        walker.dfs(s, 0)?;
        paths += walker.paths;
        hops += walker.hops;
        if paths > ceiling {
            return Err(TopologyError::PathCeilingExceeded { ceiling });
        }
    }
    let avg = if paths == 0 { 0.0 } else { hops as f64 / paths as f64 };
    Ok(TopologyStats { edge_count: core.edges.len(), path_count: paths, avg_hop_length: avg })
}

struct Walker<'a> {
    adj: &'a [Vec<VertexId>],
    target: VertexId,
    on_path: Vec<bool>,
    paths: u64,
    hops: u64,
    ceiling: u64,
}

impl Walker<'_> {
    fn dfs(&mut self, u: VertexId, depth: u64) -> Result<(), TopologyError> {
        if u == self.target {
            self.paths += 1;
            self.hops += depth;
            if self.paths > self.ceiling {
                return Err(TopologyError::PathCeilingExceeded { ceiling: self.ceiling });
            }
            return Ok(());
        }
        for i in 0..self.adj[u].len() {
            let w = self.adj[u][i];
            if !self.on_path[w] {
                self.on_path[w] = true;
                self.dfs(w, depth + 1)?;
                self.on_path[w] = false;
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::topology::{DegreeBounds, GraphModel, GraphParams};

    fn graph(n: usize, edges: &[(usize, usize)]) -> CoreGraph {
        CoreGraph {
            n,
            edges: edges.to_vec(),
            model: GraphModel::ErdosRenyi,
            seed: 0,
            params: GraphParams::default(),
            bounds: DegreeBounds::default(),
            regenerations: 0,
            repair_edits: 0,
        }
    }

    #[test]
    fn triangle_two_paths() {
        let s = topology_stats(&graph(3, &[(0, 1), (0, 2), (1, 2)]), &[(0, 2)], DEFAULT_PATH_CEILING).unwrap();
        assert_eq!(s.path_count, 2);
        assert_eq!(s.avg_hop_length, 1.5);
        assert_eq!(s.edge_count, 3);
    }

    #[test]
    fn square_two_paths() {
        let s = topology_stats(&graph(4, &[(0, 1), (1, 2), (2, 3), (0, 3)]), &[(0, 2)], DEFAULT_PATH_CEILING).unwrap();
        assert_eq!(s.path_count, 2);
        assert_eq!(s.avg_hop_length, 2.0);
    }

    #[test]
    fn line_single_path() {
        let s = topology_stats(&graph(3, &[(0, 1), (1, 2)]), &[(0, 2)], DEFAULT_PATH_CEILING).unwrap();
        assert_eq!(s.path_count, 1);
        assert_eq!(s.avg_hop_length, 2.0);
    }

    #[test]
    fn ceiling_aborts() {
        let mut edges = Vec::new();
        for u in 0..7 {
            for v in u + 1..7 {
                edges.push((u, v));
            }
        }
        let err = topology_stats(&graph(7, &edges), &[(0, 6)], 10).unwrap_err();
        assert_eq!(err, TopologyError::PathCeilingExceeded { ceiling: 10 });
    }

    #[test]
    fn rejects_non_core_gateway() {
        let err = topology_stats(&graph(3, &[(0, 1), (1, 2)]), &[(0, 5)], 10).unwrap_err();
        assert_eq!(err, TopologyError::NotCoreVertex(5));
    }
}
