use std::rc::Rc;

use gabo_autodiff::{Indices, Tensor};

use crate::error::{Error, Result};
use crate::graph_data::MolGraph;
use crate::graph_features::ClassicFeatures;

/// Several graphs packed into one disjoint union, with node offsets applied.
#[derive(Clone, Debug)]
pub struct GraphBatch {
    num_nodes: usize,
    /// Per atom field, the code of every node.
    codes: Vec<Indices>,
    src: Indices,
    dst: Indices,
    membership: Indices,
    counts: Vec<usize>,
    labels: Vec<u8>,
    classic: Option<Tensor>,
}

impl GraphBatch {
    pub fn new(graphs: &[&MolGraph]) -> Result<Self> {
        let num_fields = graphs
            .first()
            .map_or(0, |g| g.node_feats().first().map_or(0, Vec::len));
        let mut codes: Vec<Vec<usize>> = vec![Vec::new(); num_fields];
        let (mut src, mut dst, mut membership) = (Vec::new(), Vec::new(), Vec::new());
        let mut counts = Vec::with_capacity(graphs.len());
        let mut offset = 0;
        for (gi, g) in graphs.iter().enumerate() {
            for row in g.node_feats() {
                if row.len() != num_fields {
                    return Err(Error::Model(format!(
                        "graph {gi} has {} atom fields, expected {num_fields}",
                        row.len()
                    )));
                }
                for (k, &c) in row.iter().enumerate() {
                    codes[k].push(c as usize);
                }
            }
            for &(u, v) in g.edges() {
                src.push(u + offset);
                dst.push(v + offset);
            }
            membership.extend(std::iter::repeat(gi).take(g.num_nodes()));
            counts.push(g.num_nodes());
            offset += g.num_nodes();
        }
        Ok(Self {
            num_nodes: offset,
            codes: codes.into_iter().map(Rc::from).collect(),
            src: src.into(),
            dst: dst.into(),
            membership: membership.into(),
            counts,
            labels: graphs.iter().map(|g| g.label()).collect(),
            classic: None,
        })
    }

    /// Attaches cached per-node centrality features, one entry per graph.
    pub fn with_classic(mut self, feats: &[&ClassicFeatures]) -> Result<Self> {
        if feats.len() != self.counts.len()
            || feats.iter().zip(&self.counts).any(|(f, &c)| f.len() != c)
        {
            return Err(Error::Model(
                "classic features do not match the batch graphs".into(),
            ));
        }
        let data = feats
            .iter()
            .flat_map(|f| f.iter().flatten().copied())
            .collect();
        self.classic = Some(Tensor::new(vec![self.num_nodes, 4], data)?);
        Ok(self)
    }

    pub fn num_graphs(&self) -> usize {
        self.counts.len()
    }

    pub fn num_nodes(&self) -> usize {
        self.num_nodes
    }

    pub fn codes(&self) -> &[Indices] {
        &self.codes
    }

    pub fn src(&self) -> &Indices {
        &self.src
    }

    pub fn dst(&self) -> &Indices {
        &self.dst
    }

    pub fn membership(&self) -> &Indices {
        &self.membership
    }

    pub fn counts(&self) -> &[usize] {
        &self.counts
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    pub fn classic(&self) -> Option<&Tensor> {
        self.classic.as_ref()
    }

    /// Labels as a `[G, 1]` column.
    pub fn label_column(&self) -> Tensor {
        let data = self.labels.iter().map(|&y| f64::from(y)).collect();
        Tensor::new(vec![self.labels.len(), 1], data).expect("one label per graph")
    }
}
