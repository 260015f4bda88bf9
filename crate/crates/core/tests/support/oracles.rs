//! Brute-force reference implementations shared by integration tests.
#![allow(dead_code)]

use std::collections::BTreeSet;

/// Undirected simple graph on `n ≤ 8` nodes (edge masks use `n·n ≤ 64` bits) as an edge list.
#[derive(Clone, Debug)]
pub struct SmallGraph {
    pub n: usize,
    pub edges: Vec<(usize, usize)>,
}

fn pair_bit(n: usize, u: usize, v: usize) -> u64 {
    let (a, b) = if u < v { (u, v) } else { (v, u) };
    1u64 << (a * n + b)
}

fn permutations(n: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut p: Vec<usize> = (0..n).collect();
    fn rec(k: usize, p: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if k == p.len() {
            out.push(p.clone());
            return;
        }
        for i in k..p.len() {
            p.swap(k, i);
            rec(k + 1, p, out);
            p.swap(k, i);
        }
    }
    rec(0, &mut p, &mut out);
    out
}

fn canonical(n: usize, edges: &[(usize, usize)], perms: &[Vec<usize>]) -> u64 {
    perms
        .iter()
        .map(|p| {
            edges
                .iter()
                .fold(0u64, |m, &(u, v)| m | pair_bit(n, p[u], p[v]))
        })
        .min()
        .unwrap_or(0)
}

fn edges_of(n: usize, mask: u64) -> Vec<(usize, usize)> {
    let mut e = Vec::new();
    for u in 0..n {
        for v in u + 1..n {
            if mask & pair_bit(n, u, v) != 0 {
                e.push((u, v));
            }
        }
    }
    e
}

/// Every connected graph on `1..=max_n` nodes up to isomorphism, grouped by
/// node count. Built by attaching a new node to each connected graph one
/// size smaller (every connected graph has a non-cut node to remove).
pub fn connected_graphs(max_n: usize) -> Vec<Vec<SmallGraph>> {
    let mut by_n = vec![vec![SmallGraph {
        n: 1,
        edges: vec![],
    }]];
    for n in 2..=max_n {
        let perms = permutations(n);
        let mut seen = BTreeSet::new();
        for g in &by_n[n - 2] {
            for subset in 1u32..(1 << (n - 1)) {
                let mut edges = g.edges.clone();
                edges.extend(
                    (0..n - 1)
                        .filter(|&u| subset & (1 << u) != 0)
                        .map(|u| (u, n - 1)),
                );
                seen.insert(canonical(n, &edges, &perms));
            }
        }
        by_n.push(
            seen.into_iter()
                .map(|m| SmallGraph {
                    n,
                    edges: edges_of(n, m),
                })
                .collect(),
        );
    }
    by_n
}

fn adjacency(g: &SmallGraph) -> Vec<Vec<bool>> {
    let mut a = vec![vec![false; g.n]; g.n];
    for &(u, v) in &g.edges {
        a[u][v] = true;
        a[v][u] = true;
    }
    a
}

/// All-pairs hop distances by Floyd–Warshall; `usize::MAX` when unreachable.
pub fn distances(g: &SmallGraph) -> Vec<Vec<usize>> {
    let n = g.n;
    let a = adjacency(g);
    let mut d = vec![vec![usize::MAX; n]; n];
    for u in 0..n {
        d[u][u] = 0;
        for v in 0..n {
            if a[u][v] {
                d[u][v] = 1;
            }
        }
    }
    for k in 0..n {
        for i in 0..n {
            for j in 0..n {
                if d[i][k] != usize::MAX && d[k][j] != usize::MAX && d[i][k] + d[k][j] < d[i][j] {
                    d[i][j] = d[i][k] + d[k][j];
                }
            }
        }
    }
    d
}

/// Every simple path from `s` to `t`, by exhaustive depth-first search.
fn simple_paths(a: &[Vec<bool>], s: usize, t: usize) -> Vec<Vec<usize>> {
    fn rec(a: &[Vec<bool>], t: usize, path: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        let at = *path.last().expect("non-empty path");
        if at == t {
            out.push(path.clone());
            return;
        }
        for next in 0..a.len() {
            if a[at][next] && !path.contains(&next) {
                path.push(next);
                rec(a, t, path, out);
                path.pop();
            }
        }
    }
    let mut out = Vec::new();
    rec(a, t, &mut vec![s], &mut out);
    out
}

/// Betweenness from explicit shortest-path enumeration, scaled by the
/// number of unordered pairs of other nodes.
pub fn betweenness(g: &SmallGraph) -> Vec<f64> {
    let n = g.n;
    let a = adjacency(g);
    let mut bc = vec![0.0; n];
    if n < 3 {
        return bc;
    }
    for s in 0..n {
        for t in s + 1..n {
            let paths = simple_paths(&a, s, t);
            let Some(shortest) = paths.iter().map(Vec::len).min() else {
                continue;
            };
            let shortest: Vec<&Vec<usize>> = paths.iter().filter(|p| p.len() == shortest).collect();
            for v in 0..n {
                if v != s && v != t {
                    let through = shortest.iter().filter(|p| p.contains(&v)).count();
                    bc[v] += through as f64 / shortest.len() as f64;
                }
            }
        }
    }
    let pairs = ((n - 1) * (n - 2)) as f64 / 2.0;
    bc.iter().map(|b| b / pairs).collect()
}

/// Closeness with the reachable-set correction, from Floyd–Warshall distances.
pub fn closeness(g: &SmallGraph) -> Vec<f64> {
    let n = g.n;
    let d = distances(g);
    (0..n)
        .map(|v| {
            let reach: Vec<usize> = (0..n)
                .filter(|&u| u != v && d[v][u] != usize::MAX)
                .map(|u| d[v][u])
                .collect();
            if reach.is_empty() {
                0.0
            } else {
                let r = reach.len() as f64;
                r * r / ((n - 1) as f64 * reach.iter().sum::<usize>() as f64)
            }
        })
        .collect()
}

/// PageRank as the solution of `(I − d·Pᵀ) r = (1 − d)/n · 1` (plus uniform
/// redistribution from isolated nodes), by Gaussian elimination with
/// partial pivoting.
pub fn pagerank(g: &SmallGraph, damping: f64) -> Vec<f64> {
    let n = g.n;
    let a = adjacency(g);
    let deg: Vec<usize> = a.iter().map(|r| r.iter().filter(|&&x| x).count()).collect();
    let nf = n as f64;
    // m[v][u] = coefficient of r_u in the equation for r_v.
    let mut m = vec![vec![0.0; n + 1]; n];
    for v in 0..n {
        m[v][v] += 1.0;
        for u in 0..n {
            let w = if deg[u] == 0 {
                1.0 / nf
            } else if a[u][v] {
                1.0 / deg[u] as f64
            } else {
                0.0
            };
            m[v][u] -= damping * w;
        }
        m[v][n] = (1.0 - damping) / nf;
    }
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&i, &j| m[i][col].abs().total_cmp(&m[j][col].abs()))
            .expect("non-empty column");
        m.swap(col, pivot);
        for row in 0..n {
            if row != col {
                let f = m[row][col] / m[col][col];
                for k in col..=n {
                    m[row][k] -= f * m[col][k];
                }
            }
        }
    }
    (0..n).map(|v| m[v][n] / m[v][v]).collect()
}

/// ROC-AUC by comparing every positive with every negative.
pub fn pairwise_auc(scores: &[f64], labels: &[u8]) -> f64 {
    let (mut wins, mut pairs) = (0.0, 0.0);
    for (i, &yi) in labels.iter().enumerate() {
        for (j, &yj) in labels.iter().enumerate() {
            if yi == 1 && yj == 0 {
                pairs += 1.0;
                if scores[i] > scores[j] {
                    wins += 1.0;
                } else if scores[i] == scores[j] {
                    wins += 0.5;
                }
            }
        }
    }
    wins / pairs
}

/// Whether the nodes where `marked[v]` holds contain a simple cycle of at
/// least `min_len` nodes: dynamic programming over (visited set, endpoint)
/// paths that start at the set's smallest node.
pub fn has_long_cycle(n: usize, edges: &[(usize, usize)], marked: &[bool], min_len: usize) -> bool {
    let m: Vec<usize> = (0..n).filter(|&v| marked[v]).collect();
    let k = m.len();
    if k < min_len.max(3) || k > 20 {
        return false;
    }
    let mut adj = vec![vec![false; k]; k];
    for &(u, v) in edges {
        if let (Some(a), Some(b)) = (
            m.iter().position(|&x| x == u),
            m.iter().position(|&x| x == v),
        ) {
            adj[a][b] = true;
            adj[b][a] = true;
        }
    }
    // reach[mask][end]: a simple path from the lowest bit of mask to end, visiting exactly mask.
    let mut reach = vec![vec![false; k]; 1 << k];
    for s in 0..k {
        reach[1 << s][s] = true;
    }
    for mask in 1usize..(1 << k) {
        let start = mask.trailing_zeros() as usize;
        for end in 0..k {
            if !reach[mask][end] {
                continue;
            }
            let len = mask.count_ones() as usize;
            if len >= min_len && adj[end][start] {
                return true;
            }
            for next in start + 1..k {
                if mask & (1 << next) == 0 && adj[end][next] {
                    reach[mask | (1 << next)][next] = true;
                }
            }
        }
    }
    false
}
