use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Cardinalities of the nine categorical atom fields of ogbg-molhiv:
/// atomic number, chirality, degree, formal charge, #H, radical electrons,
/// hybridization, aromaticity, ring membership.
pub const OGB_ATOM_VOCAB: [usize; 9] = [119, 5, 12, 12, 10, 6, 6, 2, 2];

/// Per-field vocabulary sizes of the node codes.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct NodeVocab {
    pub sizes: Vec<usize>,
}

impl Default for NodeVocab {
    fn default() -> Self {
        Self {
            sizes: OGB_ATOM_VOCAB.to_vec(),
        }
    }
}

impl NodeVocab {
    pub fn num_fields(&self) -> usize {
        self.sizes.len()
    }
}

/// An undirected node-featured graph with a binary label.
///
/// Edges are stored in both directions: undirected pair `k` occupies
/// positions `2k` (as given) and `2k + 1` (reversed).
#[derive(Clone, Debug, PartialEq)]
pub struct MolGraph {
    num_nodes: usize,
    node_feats: Vec<Vec<u32>>,
    edges: Vec<(usize, usize)>,
    label: u8,
    scaffold_id: Option<u64>,
}

impl MolGraph {
    /// Validates and builds a graph from its undirected edge list.
    pub fn new(
        node_feats: Vec<Vec<u32>>,
        undirected_edges: &[(usize, usize)],
        label: u8,
        scaffold_id: Option<u64>,
        vocab: &NodeVocab,
    ) -> Result<Self> {
        let n = node_feats.len();
        if label > 1 {
            return Err(Error::Graph(format!("label must be 0 or 1, got {label}")));
        }
        for (i, row) in node_feats.iter().enumerate() {
            if row.len() != vocab.num_fields() {
                return Err(Error::Graph(format!(
                    "node {i} has {} fields, expected {}",
                    row.len(),
                    vocab.num_fields()
                )));
            }
            for (k, (&code, &size)) in row.iter().zip(&vocab.sizes).enumerate() {
                if code as usize >= size {
                    return Err(Error::OutOfVocab {
                        node: i,
                        field: k,
                        code,
                        vocab: size,
                    });
                }
            }
        }
        let mut seen = std::collections::HashSet::with_capacity(undirected_edges.len());
        let mut edges = Vec::with_capacity(2 * undirected_edges.len());
        for &(u, v) in undirected_edges {
            if u >= n || v >= n {
                return Err(Error::Graph(format!(
                    "edge endpoint {} out of range for {n} nodes",
                    u.max(v)
                )));
            }
            if u == v {
                return Err(Error::Graph(format!("self-loop on node {u}")));
            }
            if !seen.insert((u.min(v), u.max(v))) {
                return Err(Error::Graph(format!("duplicate edge {u}-{v}")));
            }
            edges.push((u, v));
            edges.push((v, u));
        }
        Ok(Self {
            num_nodes: n,
            node_feats,
            edges,
            label,
            scaffold_id,
        })
    }

    pub fn num_nodes(&self) -> usize {
        self.num_nodes
    }

    pub fn node_feats(&self) -> &[Vec<u32>] {
        &self.node_feats
    }

    /// Directed edges; every undirected edge appears in both directions.
    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    /// Each undirected edge once, as originally given.
    pub fn undirected_edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.edges.iter().step_by(2).copied()
    }

    pub fn num_undirected_edges(&self) -> usize {
        self.edges.len() / 2
    }

    pub fn label(&self) -> u8 {
        self.label
    }

    pub fn scaffold_id(&self) -> Option<u64> {
        self.scaffold_id
    }

    pub fn with_label(mut self, label: u8) -> Self {
        debug_assert!(label <= 1);
        self.label = label;
        self
    }

    /// Adjacency lists in edge order.
    pub fn adjacency(&self) -> Vec<Vec<usize>> {
        let mut adj = vec![Vec::new(); self.num_nodes];
        for &(u, v) in &self.edges {
            adj[u].push(v);
        }
        adj
    }

    /// The same graph with node `i` renamed to `perm[i]`.
    pub fn permuted(&self, perm: &[usize]) -> Self {
        assert_eq!(perm.len(), self.num_nodes);
        let mut feats = vec![Vec::new(); self.num_nodes];
        for (i, row) in self.node_feats.iter().enumerate() {
            feats[perm[i]] = row.clone();
        }
        let edges = self
            .edges
            .iter()
            .map(|&(u, v)| (perm[u], perm[v]))
            .collect();
        Self {
            num_nodes: self.num_nodes,
            node_feats: feats,
            edges,
            label: self.label,
            scaffold_id: self.scaffold_id,
        }
    }
}

/// Graphs sharing one node vocabulary.
#[derive(Clone, Debug, PartialEq, Default)]
pub struct Dataset {
    pub vocab: NodeVocab,
    pub graphs: Vec<MolGraph>,
}

#[cfg(test)]
mod tests {
    use super::*;

    fn feats(n: usize) -> Vec<Vec<u32>> {
        vec![vec![0; 9]; n]
    }

    #[test]
    fn edges_are_mirrored() {
        let g = MolGraph::new(feats(2), &[(0, 1)], 1, None, &NodeVocab::default()).unwrap();
        assert_eq!(g.edges(), &[(0, 1), (1, 0)]);
        assert_eq!(g.undirected_edges().collect::<Vec<_>>(), vec![(0, 1)]);
    }

    #[test]
    fn rejects_bad_graphs() {
        let v = NodeVocab::default();
        assert!(MolGraph::new(feats(3), &[(0, 5)], 0, None, &v).is_err());
        assert!(MolGraph::new(feats(3), &[(1, 1)], 0, None, &v).is_err());
        assert!(MolGraph::new(feats(3), &[(0, 1), (1, 0)], 0, None, &v).is_err());
        assert!(MolGraph::new(feats(3), &[], 2, None, &v).is_err());
        let mut f = feats(1);
        f[0][7] = 2;
        assert!(matches!(
            MolGraph::new(f, &[], 0, None, &v),
            Err(Error::OutOfVocab {
                node: 0,
                field: 7,
                code: 2,
                vocab: 2
            })
        ));
    }

    #[test]
    fn permutation_relabels_edges() {
        let g = MolGraph::new(feats(3), &[(0, 1), (1, 2)], 0, None, &NodeVocab::default()).unwrap();
        let p = g.permuted(&[2, 0, 1]);
        assert_eq!(p.edges(), &[(2, 0), (0, 2), (0, 1), (1, 0)]);
    }
}
