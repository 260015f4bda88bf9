use gabo_autodiff::{Indices, Tape, Tensor, Var};

use crate::error::{Error, Result};

/// Node-wise update network. `Identity` exists so layer arithmetic can be
/// checked by hand.
#[derive(Clone, Copy, Debug)]
pub enum Mlp {
    Identity,
    /// `relu(x·w1 + b1)·w2 + b2`
    TwoLayer {
        w1: Var,
        b1: Var,
        w2: Var,
        b2: Var,
    },
}

impl Mlp {
    pub fn apply(&self, tape: &mut Tape, x: Var) -> Result<Var> {
        match *self {
            Mlp::Identity => Ok(x),
            Mlp::TwoLayer { w1, b1, w2, b2 } => {
                let hidden = tape.affine(x, w1, b1)?;
                let hidden = tape.relu(hidden)?;
                Ok(tape.affine(hidden, w2, b2)?)
            }
        }
    }
}

#[derive(Clone, Copy, Debug)]
pub enum GinEps {
    Fixed(f64),
    /// A trainable scalar stored as a length-1 vector.
    Learned(Var),
}

/// `h'_v = MLP((1+ε)·h_v + Σ_{u∈N(v)} h_u)` over directed `src → dst` edges.
pub fn gin_layer(
    tape: &mut Tape,
    h: Var,
    src: &Indices,
    dst: &Indices,
    eps: GinEps,
    mlp: &Mlp,
) -> Result<Var> {
    let n = tape.shape(h)?.first().copied().unwrap_or(0);
    let messages = tape.index_select(h, src)?;
    let neighbours = tape.scatter_add(messages, dst, n)?;
    let own = match eps {
        GinEps::Fixed(e) if e == 0.0 => h,
        GinEps::Fixed(e) => tape.scale(h, 1.0 + e)?,
        GinEps::Learned(e) => {
            let shape = tape.shape(h)?.to_vec();
            let e = tape.broadcast_to(e, &shape)?;
            let eh = tape.mul(e, h)?;
            tape.add(h, eh)?
        }
    };
    let combined = tape.add(own, neighbours)?;
    mlp.apply(tape, combined)
}

/// One virtual-node exchange: each graph's state absorbs the sum of its
/// nodes and is transformed, then added back onto every node of the graph.
/// Returns `(h', vn')` with `vn` of shape `[num_graphs, d]`.
pub fn virtual_node_pass(
    tape: &mut Tape,
    h: Var,
    membership: &Indices,
    vn: Var,
    mlp: &Mlp,
) -> Result<(Var, Var)> {
    let num_graphs = tape.shape(vn)?[0];
    let pooled = tape.scatter_add(h, membership, num_graphs)?;
    let merged = tape.add(vn, pooled)?;
    let vn_next = mlp.apply(tape, merged)?;
    let spread = tape.index_select(vn_next, membership)?;
    Ok((tape.add(h, spread)?, vn_next))
}

/// Per-graph mean of node rows. Empty graphs are rejected.
pub fn mean_pool(tape: &mut Tape, h: Var, membership: &Indices, counts: &[usize]) -> Result<Var> {
    if let Some(g) = counts.iter().position(|&c| c == 0) {
        return Err(Error::Model(format!("graph {g} of the batch has no nodes")));
    }
    let d = tape.shape(h)?[1];
    let sums = tape.scatter_add(h, membership, counts.len())?;
    let inv: Vec<f64> = counts.iter().map(|&c| 1.0 / c as f64).collect();
    let inv = tape.constant(Tensor::new(vec![counts.len(), 1], inv)?);
    let inv = tape.broadcast_to(inv, &[counts.len(), d])?;
    Ok(tape.mul(sums, inv)?)
}
