//! Per-node centrality statistics used as "classic" augmenter inputs:
//! betweenness, closeness, degree and PageRank.

use std::collections::VecDeque;

use crate::error::{Error, Result};
use crate::graph_data::MolGraph;

/// `[betweenness, closeness, degree, pagerank]` for each node.
pub type ClassicFeatures = Vec<[f64; 4]>;

pub const PAGERANK_DAMPING: f64 = 0.85;
pub const PAGERANK_TOL: f64 = 1e-10;
pub const PAGERANK_MAX_ITER: usize = 1000;

pub fn degree(g: &MolGraph) -> Vec<f64> {
    let mut deg = vec![0.0; g.num_nodes()];
    for &(u, _) in g.edges() {
        deg[u] += 1.0;
    }
    deg
}

/// Power iteration with uniform teleport. Isolated nodes spread their mass
/// uniformly. Stops once the L1 change drops below `tol`.
pub fn pagerank(g: &MolGraph, damping: f64, tol: f64, max_iter: usize) -> Result<Vec<f64>> {
    let n = g.num_nodes();
    if n == 0 {
        return Err(Error::Graph("pagerank of an empty graph".into()));
    }
    let adj = g.adjacency();
    let nf = n as f64;
    let mut rank = vec![1.0 / nf; n];
    let mut residual = f64::INFINITY;
    for _ in 0..max_iter {
        let dangling: f64 = (0..n).filter(|&u| adj[u].is_empty()).map(|u| rank[u]).sum();
        let base = (1.0 - damping) / nf + damping * dangling / nf;
        let mut next = vec![base; n];
        for u in 0..n {
            if adj[u].is_empty() {
                continue;
            }
            let share = damping * rank[u] / adj[u].len() as f64;
            for &v in &adj[u] {
                next[v] += share;
            }
        }
        residual = next.iter().zip(&rank).map(|(a, b)| (a - b).abs()).sum();
        rank = next;
        if residual < tol {
            return Ok(rank);
        }
    }
    Err(Error::PageRankDiverged {
        iterations: max_iter,
        residual,
    })
}

/// Brandes accumulation over unweighted shortest paths, normalized by the
/// number of unordered pairs of other nodes, `(n−1)(n−2)/2`.
pub fn betweenness(g: &MolGraph) -> Vec<f64> {
    let n = g.num_nodes();
    let mut bc = vec![0.0; n];
    if n < 3 {
        return bc;
    }
    let adj = g.adjacency();
    let mut stack = Vec::with_capacity(n);
    let mut preds: Vec<Vec<usize>> = vec![Vec::new(); n];
    let mut sigma = vec![0.0f64; n];
    let mut dist = vec![usize::MAX; n];
    let mut delta = vec![0.0f64; n];
    let mut queue = VecDeque::with_capacity(n);
    for s in 0..n {
        stack.clear();
        for v in 0..n {
            preds[v].clear();
            sigma[v] = 0.0;
            dist[v] = usize::MAX;
            delta[v] = 0.0;
        }
        sigma[s] = 1.0;
        dist[s] = 0;
        queue.push_back(s);
        while let Some(v) = queue.pop_front() {
            stack.push(v);
            for &w in &adj[v] {
                if dist[w] == usize::MAX {
                    dist[w] = dist[v] + 1;
                    queue.push_back(w);
                }
                if dist[w] == dist[v] + 1 {
                    sigma[w] += sigma[v];
                    preds[w].push(v);
                }
            }
        }
        while let Some(w) = stack.pop() {
            for &v in &preds[w] {
                delta[v] += sigma[v] / sigma[w] * (1.0 + delta[w]);
            }
            if w != s {
                bc[w] += delta[w];
            }
        }
    }
    // Each unordered pair was counted from both endpoints.
    let scale = 1.0 / ((n - 1) * (n - 2)) as f64;
    bc.iter_mut().for_each(|b| *b *= scale);
    bc
}

/// BFS hop distances from `s`; `None` for unreachable nodes.
pub(crate) fn bfs_distances(adj: &[Vec<usize>], s: usize) -> Vec<Option<usize>> {
    let mut dist = vec![None; adj.len()];
    dist[s] = Some(0);
    let mut queue = VecDeque::from([s]);
    while let Some(v) = queue.pop_front() {
        let dv = dist[v].unwrap_or_default();
        for &w in &adj[v] {
            if dist[w].is_none() {
                dist[w] = Some(dv + 1);
                queue.push_back(w);
            }
        }
    }
    dist
}

/// Closeness with the disconnected-graph correction:
/// `(|R|/(n−1)) · (|R| / Σ_{u∈R} d(v,u))` over the reachable set `R`, or 0.
pub fn closeness(g: &MolGraph) -> Vec<f64> {
    let n = g.num_nodes();
    let adj = g.adjacency();
    (0..n)
        .map(|v| {
            let dist = bfs_distances(&adj, v);
            let (reach, total) = dist
                .iter()
                .enumerate()
                .filter(|&(u, d)| u != v && d.is_some())
                .fold((0usize, 0usize), |(r, t), (_, d)| {
                    (r + 1, t + d.unwrap_or_default())
                });
            if reach == 0 {
                0.0
            } else {
                let r = reach as f64;
                (r / (n - 1) as f64) * (r / total as f64)
            }
        })
        .collect()
}

/// All four measures per node, in `[betweenness, closeness, degree, pagerank]` order.
pub fn classic_features(g: &MolGraph) -> Result<ClassicFeatures> {
    let b = betweenness(g);
    let c = closeness(g);
    let d = degree(g);
    let p = if g.num_nodes() == 0 {
        Vec::new()
    } else {
        pagerank(g, PAGERANK_DAMPING, PAGERANK_TOL, PAGERANK_MAX_ITER)?
    };
    Ok((0..g.num_nodes())
        .map(|i| [b[i], c[i], d[i], p[i]])
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph_data::NodeVocab;

    pub(crate) fn graph(n: usize, edges: &[(usize, usize)]) -> MolGraph {
        MolGraph::new(vec![vec![0; 9]; n], edges, 0, None, &NodeVocab::default()).unwrap()
    }

    #[test]
    fn degrees() {
        assert_eq!(degree(&graph(3, &[(0, 1), (1, 2)]))[1], 2.0);
        assert_eq!(degree(&graph(2, &[]))[0], 0.0);
        let star = graph(5, &[(0, 1), (0, 2), (0, 3), (0, 4)]);
        assert_eq!(degree(&star)[0], 4.0);
    }

    #[test]
    fn pagerank_small_cases() {
        let k2 = pagerank(&graph(2, &[(0, 1)]), 0.85, 1e-10, 1000).unwrap();
        assert!((k2[0] - 0.5).abs() < 1e-12 && (k2[1] - 0.5).abs() < 1e-12);
        let one = pagerank(&graph(1, &[]), 0.85, 1e-10, 1000).unwrap();
        assert!((one[0] - 1.0).abs() < 1e-12);
        let iso = pagerank(&graph(3, &[(0, 1)]), 0.85, 1e-12, 1000).unwrap();
        assert!((iso.iter().sum::<f64>() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn pagerank_reports_non_convergence() {
        let star = graph(4, &[(0, 1), (0, 2), (0, 3)]);
        assert!(matches!(
            pagerank(&star, 0.85, 1e-14, 2),
            Err(Error::PageRankDiverged { iterations: 2, .. })
        ));
    }

    #[test]
    fn betweenness_small_cases() {
        assert_eq!(
            betweenness(&graph(3, &[(0, 1), (1, 2)])),
            vec![0.0, 1.0, 0.0]
        );
        let k4 = graph(4, &[(0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)]);
        assert!(betweenness(&k4).iter().all(|&b| b == 0.0));
        assert_eq!(betweenness(&graph(2, &[(0, 1)])), vec![0.0, 0.0]);
    }

    #[test]
    fn closeness_small_cases() {
        let c = closeness(&graph(3, &[(0, 1), (1, 2)]));
        assert_eq!(c[1], 1.0);
        assert!((c[0] - 2.0 / 3.0).abs() < 1e-15);
        let c = closeness(&graph(3, &[(0, 1)]));
        assert_eq!(c[2], 0.0);
        assert_eq!(closeness(&graph(1, &[])), vec![0.0]);
    }
}
