//! Synthetic ring-motif graphs standing in for molecules at desk scale.
//!
//! Each graph is a random sparse connected graph around a planted chain of
//! "marked" atoms (atomic-number code [`MARKED_ATOM`]). Positives close the
//! chain into a ring of length ≥ `min_ring_len`; negatives leave it an open
//! path. Background edges never join two marked atoms, so the subgraph
//! induced by marked atoms is exactly the planted motif.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::graph::{MolGraph, NodeVocab};
use crate::error::{Error, Result};

/// Atomic-number code carried by motif atoms.
pub const MARKED_ATOM: u32 = 15;
/// Background atomic-number codes (weighted towards the first).
const BACKGROUND_ATOMS: [u32; 5] = [5, 5, 5, 6, 7];
const MAX_EXTRA_EDGES: usize = 3;
const MAX_LEN_SPREAD: usize = 3;
const BALANCE_RETRIES: usize = 64;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum LabelRule {
    /// Positive iff the marked atoms contain a cycle of at least this length.
    MarkedRing { min_ring_len: usize },
}

impl Default for LabelRule {
    fn default() -> Self {
        LabelRule::MarkedRing { min_ring_len: 5 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthConfig {
    pub n_graphs: usize,
    /// Inclusive range of node counts.
    pub nodes_range: (usize, usize),
    #[serde(default)]
    pub label_rule: LabelRule,
    pub noise_rate: f64,
    pub seed: u64,
}

impl SynthConfig {
    fn validate(&self) -> Result<usize> {
        let LabelRule::MarkedRing { min_ring_len } = self.label_rule;
        if min_ring_len < 3 {
            return Err(Error::Synth(format!(
                "min_ring_len must be ≥ 3, got {min_ring_len}"
            )));
        }
        if !(0.0..0.5).contains(&self.noise_rate) {
            return Err(Error::Synth(format!(
                "noise_rate must lie in [0, 0.5), got {}",
                self.noise_rate
            )));
        }
        let (lo, hi) = self.nodes_range;
        if lo > hi || lo < min_ring_len + 2 {
            return Err(Error::Synth(format!(
                "nodes_range {:?} must satisfy {} ≤ min ≤ max",
                self.nodes_range,
                min_ring_len + 2
            )));
        }
        Ok(min_ring_len)
    }
}

/// Whether the subgraph induced by `marked_code` atoms has a simple cycle of
/// length ≥ `min_len` (depth-first search from each cycle's smallest node).
pub fn has_marked_ring(g: &MolGraph, marked_code: u32, min_len: usize) -> bool {
    let marked: Vec<bool> = g.node_feats().iter().map(|r| r[0] == marked_code).collect();
    let adj = g.adjacency();

    fn extend(
        start: usize,
        at: usize,
        path: &mut Vec<usize>,
        on_path: &mut [bool],
        adj: &[Vec<usize>],
        marked: &[bool],
        min_len: usize,
    ) -> bool {
        for &next in &adj[at] {
            if next == start && path.len() >= min_len {
                return true;
            }
            if next > start && marked[next] && !on_path[next] {
                on_path[next] = true;
                path.push(next);
                if extend(start, next, path, on_path, adj, marked, min_len) {
                    return true;
                }
                path.pop();
                on_path[next] = false;
            }
        }
        false
    }

    let mut on_path = vec![false; g.num_nodes()];
    (0..g.num_nodes()).filter(|&s| marked[s]).any(|s| {
        on_path[s] = true;
        let found = extend(s, s, &mut vec![s], &mut on_path, &adj, &marked, min_len);
        on_path[s] = false;
        found
    })
}

/// Nodes lying on at least one cycle (endpoints of a non-bridge edge).
fn on_some_cycle(n: usize, edges: &[(usize, usize)]) -> Vec<bool> {
    let mut adj = vec![Vec::new(); n];
    for (k, &(u, v)) in edges.iter().enumerate() {
        adj[u].push((v, k));
        adj[v].push((u, k));
    }
    let mut in_ring = vec![false; n];
    for (k, &(u, v)) in edges.iter().enumerate() {
        // u and v stay connected without edge k ⇔ edge k lies on a cycle.
        let mut seen = vec![false; n];
        let mut stack = vec![u];
        seen[u] = true;
        while let Some(x) = stack.pop() {
            for &(y, e) in &adj[x] {
                if e != k && !seen[y] {
                    seen[y] = true;
                    stack.push(y);
                }
            }
        }
        if seen[v] {
            in_ring[u] = true;
            in_ring[v] = true;
        }
    }
    in_ring
}

fn generate_one(
    rng: &mut ChaCha8Rng,
    planted: bool,
    cfg: &SynthConfig,
    min_len: usize,
    vocab: &NodeVocab,
) -> Result<MolGraph> {
    let n = rng.gen_range(cfg.nodes_range.0..=cfg.nodes_range.1);
    let motif_len = rng.gen_range(min_len..=(min_len + MAX_LEN_SPREAD).min(n - 2));
    let mut edges: Vec<(usize, usize)> = (0..motif_len - 1).map(|k| (k, k + 1)).collect();
    if planted {
        edges.push((motif_len - 1, 0));
    }
    for v in motif_len..n {
        edges.push((rng.gen_range(0..v), v));
    }
    let extra = rng.gen_range(0..=MAX_EXTRA_EDGES);
    let mut added = 0;
    for _ in 0..50 * (extra + 1) {
        if added == extra {
            break;
        }
        let (a, b) = (rng.gen_range(0..n), rng.gen_range(0..n));
        let both_marked = a < motif_len && b < motif_len;
        let exists = edges
            .iter()
            .any(|&(u, v)| (u, v) == (a, b) || (v, u) == (a, b));
        if a != b && !both_marked && !exists {
            edges.push((a, b));
            added += 1;
        }
    }

    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(rng);
    let edges: Vec<(usize, usize)> = edges.iter().map(|&(u, v)| (perm[u], perm[v])).collect();
    let mut degree = vec![0u32; n];
    for &(u, v) in &edges {
        degree[u] += 1;
        degree[v] += 1;
    }
    let in_ring = on_some_cycle(n, &edges);
    let mut feats = vec![Vec::new(); n];
    for old in 0..n {
        let new = perm[old];
        let atom = if old < motif_len {
            MARKED_ATOM
        } else {
            *BACKGROUND_ATOMS.choose(rng).unwrap_or(&5)
        };
        feats[new] = vec![
            atom,
            0,
            degree[new].min(10),
            5,
            rng.gen_range(0..=2),
            0,
            rng.gen_range(1..=3),
            rng.gen_range(0..=1),
            u32::from(in_ring[new]),
        ];
    }
    let template = u64::from(planted) * 16 + (motif_len - min_len) as u64 * 4 + added as u64;
    let g = MolGraph::new(feats, &edges, 0, Some(template), vocab)?;
    let label = u8::from(has_marked_ring(&g, MARKED_ATOM, min_len));
    debug_assert_eq!(label == 1, planted);
    Ok(g.with_label(label))
}

/// Generates `cfg.n_graphs` motif graphs. Exactly half (rounded) carry a
/// planted ring before label noise; noisy labels are redrawn until the
/// positive rate lies in [0.3, 0.7].
pub fn synth_motif_dataset(cfg: &SynthConfig) -> Result<Vec<MolGraph>> {
    let min_len = cfg.validate()?;
    if cfg.n_graphs == 0 {
        return Ok(Vec::new());
    }
    let vocab = NodeVocab::default();
    let mut master = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut planted: Vec<bool> = (0..cfg.n_graphs)
        .map(|i| i < cfg.n_graphs.div_ceil(2))
        .collect();
    planted.shuffle(&mut master);
    let mut graphs = Vec::with_capacity(cfg.n_graphs);
    for &p in &planted {
        let mut rng = ChaCha8Rng::seed_from_u64(master.gen());
        graphs.push(generate_one(&mut rng, p, cfg, min_len, &vocab)?);
    }

    let mut noise_rng = ChaCha8Rng::seed_from_u64(master.gen());
    for _ in 0..BALANCE_RETRIES {
        let labels: Vec<u8> = graphs
            .iter()
            .map(|g| {
                let flip = noise_rng.gen_bool(cfg.noise_rate);
                g.label() ^ u8::from(flip)
            })
            .collect();
        let rate = labels.iter().map(|&y| f64::from(y)).sum::<f64>() / labels.len() as f64;
        if (0.3..=0.7).contains(&rate) {
            return Ok(graphs
                .into_iter()
                .zip(labels)
                .map(|(g, y)| g.with_label(y))
                .collect());
        }
    }
    Err(Error::Synth(format!(
        "could not reach a positive rate within [0.3, 0.7] for {} graphs after {BALANCE_RETRIES} draws",
        cfg.n_graphs
    )))
}
