//! The recording tape and reverse-mode differentiation.
//!
//! Every op appends a node holding its value. When at least one input
//! requires a gradient (and the tape is recording), the node also keeps the
//! op and its input handles. [`Tape::grad`] walks the nodes in reverse and
//! builds each vector-Jacobian product out of ordinary tape ops, so with
//! `create_graph` set the gradients are themselves tracked nodes and can be
//! differentiated again.

use std::rc::Rc;
use std::sync::atomic::{AtomicU64, Ordering};

use crate::error::{AutodiffError, Result};
use crate::kernels;
use crate::tensor::Tensor;

/// Shared row-index list for gathers and scatters.
pub type Indices = Rc<[usize]>;

static NEXT_TAPE_ID: AtomicU64 = AtomicU64::new(1);

/// Handle to a node on a particular [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var {
    tape: u64,
    index: usize,
}

impl Var {
    pub fn index(self) -> usize {
        self.index
    }
}

#[derive(Clone, Debug)]
enum Op {
    Leaf,
    Add(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    Neg(usize),
    Scale(usize, f64),
    MatMul(usize, usize),
    Transpose(usize),
    Relu(usize),
    Sigmoid(usize),
    Softplus(usize),
    Sum(usize),
    Mean(usize),
    BroadcastTo(usize),
    ReduceTo(usize),
    ConcatCols(Vec<usize>),
    SliceCols { input: usize, start: usize },
    PadCols { input: usize, start: usize },
    IndexSelect { input: usize, index: Indices },
    ScatterAdd { input: usize, index: Indices },
}

impl Op {
    fn name(&self) -> &'static str {
        match self {
            Op::Leaf => "leaf",
            Op::Add(..) => "add",
            Op::Sub(..) => "sub",
            Op::Mul(..) => "mul",
            Op::Neg(_) => "neg",
            Op::Scale(..) => "scale",
            Op::MatMul(..) => "matmul",
            Op::Transpose(_) => "transpose",
            Op::Relu(_) => "relu",
            Op::Sigmoid(_) => "sigmoid",
            Op::Softplus(_) => "softplus",
            Op::Sum(_) => "sum",
            Op::Mean(_) => "mean",
            Op::BroadcastTo(_) => "broadcast_to",
            Op::ReduceTo(_) => "reduce_to",
            Op::ConcatCols(_) => "concat_cols",
            Op::SliceCols { .. } => "slice_cols",
            Op::PadCols { .. } => "pad_cols",
            Op::IndexSelect { .. } => "index_select",
            Op::ScatterAdd { .. } => "scatter_add",
        }
    }

    fn inputs(&self) -> Vec<usize> {
        match self {
            Op::Leaf => Vec::new(),
            Op::Add(a, b) | Op::Sub(a, b) | Op::Mul(a, b) | Op::MatMul(a, b) => vec![*a, *b],
            Op::Neg(a)
            | Op::Scale(a, _)
            | Op::Transpose(a)
            | Op::Relu(a)
            | Op::Sigmoid(a)
            | Op::Softplus(a)
            | Op::Sum(a)
            | Op::Mean(a)
            | Op::BroadcastTo(a)
            | Op::ReduceTo(a) => vec![*a],
            Op::ConcatCols(parts) => parts.clone(),
            Op::SliceCols { input, .. }
            | Op::PadCols { input, .. }
            | Op::IndexSelect { input, .. }
            | Op::ScatterAdd { input, .. } => vec![*input],
        }
    }
}

struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

/// Append-only record of a computation.
///
/// A tape is single-threaded. Independent tapes share nothing, so separate
/// experiments can each own one and run in parallel.
pub struct Tape {
    id: u64,
    nodes: Vec<Node>,
    recording: bool,
}

impl Default for Tape {
    fn default() -> Self {
        Self::new()
    }
}

impl Tape {
    pub fn new() -> Self {
        Self {
            id: NEXT_TAPE_ID.fetch_add(1, Ordering::Relaxed),
            nodes: Vec::new(),
            recording: true,
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// A leaf that gradients can be taken with respect to.
    pub fn param(&mut self, value: Tensor) -> Var {
        self.push_leaf(value, true)
    }

    /// A leaf that never receives gradients.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push_leaf(value, false)
    }

    pub fn scalar(&mut self, value: f64) -> Var {
        self.constant(Tensor::scalar(value))
    }

    /// Copies the value of `v` into a fresh constant, cutting gradient flow.
    pub fn detach(&mut self, v: Var) -> Result<Var> {
        let value = self.value(v)?.clone();
        Ok(self.constant(value))
    }

    pub fn value(&self, v: Var) -> Result<&Tensor> {
        let i = self.check(v)?;
        Ok(&self.nodes[i].value)
    }

    pub fn shape(&self, v: Var) -> Result<&[usize]> {
        Ok(self.value(v)?.shape())
    }

    pub fn item(&self, v: Var) -> Result<f64> {
        self.value(v)?.item()
    }

    pub fn requires_grad(&self, v: Var) -> Result<bool> {
        let i = self.check(v)?;
        Ok(self.nodes[i].requires_grad)
    }

    fn push_leaf(&mut self, value: Tensor, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op: Op::Leaf,
            requires_grad,
        });
        self.handle(self.nodes.len() - 1)
    }

    fn handle(&self, index: usize) -> Var {
        Var {
            tape: self.id,
            index,
        }
    }

    fn check(&self, v: Var) -> Result<usize> {
        if v.tape == self.id && v.index < self.nodes.len() {
            Ok(v.index)
        } else {
            Err(AutodiffError::ForeignVar { index: v.index })
        }
    }

    fn val(&self, i: usize) -> &Tensor {
        &self.nodes[i].value
    }

    fn record(&mut self, value: Tensor, op: Op) -> Result<Var> {
        if !value.all_finite() {
            return Err(AutodiffError::NonFinite { op: op.name() });
        }
        let tracked = self.recording && op.inputs().iter().any(|&i| self.nodes[i].requires_grad);
        self.nodes.push(Node {
            value,
            op: if tracked { op } else { Op::Leaf },
            requires_grad: tracked,
        });
        Ok(self.handle(self.nodes.len() - 1))
    }

    fn binary_same_shape(
        &mut self,
        a: Var,
        b: Var,
        name: &'static str,
        f: impl Fn(f64, f64) -> f64,
        op: impl FnOnce(usize, usize) -> Op,
    ) -> Result<Var> {
        let (ia, ib) = (self.check(a)?, self.check(b)?);
        kernels::same_shape(name, self.val(ia), self.val(ib))?;
        let value = self.val(ia).zip_map(self.val(ib), f);
        self.record(value, op(ia, ib))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary_same_shape(a, b, "add", |x, y| x + y, Op::Add)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary_same_shape(a, b, "sub", |x, y| x - y, Op::Sub)
    }

    /// Element-wise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary_same_shape(a, b, "mul", |x, y| x * y, Op::Mul)
    }

    pub fn neg(&mut self, a: Var) -> Result<Var> {
        let i = self.check(a)?;
        let value = self.val(i).map(|x| -x);
        self.record(value, Op::Neg(i))
    }

    /// Multiplies by a fixed scalar.
    pub fn scale(&mut self, a: Var, factor: f64) -> Result<Var> {
        let i = self.check(a)?;
        let value = self.val(i).map(|x| x * factor);
        self.record(value, Op::Scale(i, factor))
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ia, ib) = (self.check(a)?, self.check(b)?);
        let value = kernels::matmul(self.val(ia), self.val(ib))?;
        self.record(value, Op::MatMul(ia, ib))
    }

    pub fn transpose(&mut self, a: Var) -> Result<Var> {
        let i = self.check(a)?;
        let value = kernels::transpose(self.val(i))?;
        self.record(value, Op::Transpose(i))
    }

    pub fn relu(&mut self, a: Var) -> Result<Var> {
        let i = self.check(a)?;
        let value = self.val(i).map(|x| x.max(0.0));
        self.record(value, Op::Relu(i))
    }

    pub fn sigmoid(&mut self, a: Var) -> Result<Var> {
        let i = self.check(a)?;
        let value = self.val(i).map(kernels::sigmoid);
        self.record(value, Op::Sigmoid(i))
    }

    /// `ln(1 + e^x)`, computed stably.
    pub fn softplus(&mut self, a: Var) -> Result<Var> {
        let i = self.check(a)?;
        let value = self.val(i).map(kernels::softplus);
        self.record(value, Op::Softplus(i))
    }

    /// Sum of all entries, as a rank-0 tensor.
    pub fn sum(&mut self, a: Var) -> Result<Var> {
        let i = self.check(a)?;
        let value = Tensor::scalar(self.val(i).data().iter().sum());
        self.record(value, Op::Sum(i))
    }

    pub fn mean(&mut self, a: Var) -> Result<Var> {
        let i = self.check(a)?;
        let t = self.val(i);
        if t.numel() == 0 {
            return Err(AutodiffError::InvalidArgument {
                op: "mean",
                msg: "mean of an empty tensor".into(),
            });
        }
        let value = Tensor::scalar(t.data().iter().sum::<f64>() / t.numel() as f64);
        self.record(value, Op::Mean(i))
    }

    /// Repeats rows and/or columns of `a` to fill `shape`.
    pub fn broadcast_to(&mut self, a: Var, shape: &[usize]) -> Result<Var> {
        let i = self.check(a)?;
        if self.val(i).shape() == shape {
            return Ok(a);
        }
        let value = kernels::broadcast_to(self.val(i), shape)?;
        self.record(value, Op::BroadcastTo(i))
    }

    /// Sums `a` down to a broadcast-compatible `shape`.
    pub fn reduce_to(&mut self, a: Var, shape: &[usize]) -> Result<Var> {
        let i = self.check(a)?;
        if self.val(i).shape() == shape {
            return Ok(a);
        }
        let value = kernels::reduce_to(self.val(i), shape)?;
        self.record(value, Op::ReduceTo(i))
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        let idx = parts
            .iter()
            .map(|&p| self.check(p))
            .collect::<Result<Vec<_>>>()?;
        let refs: Vec<&Tensor> = idx.iter().map(|&i| self.val(i)).collect();
        let value = kernels::concat_cols(&refs)?;
        self.record(value, Op::ConcatCols(idx))
    }

    pub fn slice_cols(&mut self, a: Var, start: usize, len: usize) -> Result<Var> {
        let i = self.check(a)?;
        let value = kernels::slice_cols(self.val(i), start, len)?;
        self.record(value, Op::SliceCols { input: i, start })
    }

    pub fn pad_cols(&mut self, a: Var, start: usize, total: usize) -> Result<Var> {
        let i = self.check(a)?;
        let value = kernels::pad_cols(self.val(i), start, total)?;
        self.record(value, Op::PadCols { input: i, start })
    }

    /// Gathers rows: `out[i] = a[index[i]]` (embedding lookup).
    pub fn index_select(&mut self, a: Var, index: &Indices) -> Result<Var> {
        let i = self.check(a)?;
        let value = kernels::index_select(self.val(i), index)?;
        self.record(
            value,
            Op::IndexSelect {
                input: i,
                index: Rc::clone(index),
            },
        )
    }

    /// Scatters rows: `out[index[i]] += a[i]`, with `rows` output rows.
    pub fn scatter_add(&mut self, a: Var, index: &Indices, rows: usize) -> Result<Var> {
        let i = self.check(a)?;
        let value = kernels::scatter_add(self.val(i), index, rows)?;
        self.record(
            value,
            Op::ScatterAdd {
                input: i,
                index: Rc::clone(index),
            },
        )
    }

    /// `x · w + b` with `b` broadcast over rows.
    pub fn affine(&mut self, x: Var, w: Var, b: Var) -> Result<Var> {
        let xw = self.matmul(x, w)?;
        let shape = self.shape(xw)?.to_vec();
        let bb = self.broadcast_to(b, &shape)?;
        self.add(xw, bb)
    }

    /// Sum of element-wise products.
    pub fn dot(&mut self, a: Var, b: Var) -> Result<Var> {
        let p = self.mul(a, b)?;
        self.sum(p)
    }

    /// Gradients of the scalar `output` with respect to each of `wrt`.
    ///
    /// With `create_graph` the backward computation is recorded on this tape
    /// and the returned gradients can be differentiated again. Otherwise the
    /// gradients are constants. A `wrt` that `output` does not depend on gets
    /// a zero gradient.
    pub fn grad(&mut self, output: Var, wrt: &[Var], create_graph: bool) -> Result<Vec<Var>> {
        let out = self.check(output)?;
        if !self.val(out).is_scalar() {
            return Err(AutodiffError::NonScalarOutput(
                self.val(out).shape().to_vec(),
            ));
        }
        let targets = wrt
            .iter()
            .map(|&v| self.check(v))
            .collect::<Result<Vec<_>>>()?;

        // Nodes that lie on a path from some target up to `output`.
        let end = out + 1;
        let mut needed = vec![false; end];
        for &t in &targets {
            if t < end {
                needed[t] = true;
            }
        }
        let first = targets
            .iter()
            .copied()
            .filter(|&t| t < end)
            .min()
            .unwrap_or(end);
        for i in first..end {
            if !needed[i] && self.nodes[i].requires_grad {
                needed[i] = self.nodes[i].op.inputs().iter().any(|&j| needed[j]);
            }
        }

        let previous = self.recording;
        self.recording = create_graph;
        let result = self.backward(out, first, &needed, &targets);
        self.recording = previous;
        result
    }

    fn backward(
        &mut self,
        out: usize,
        first: usize,
        needed: &[bool],
        targets: &[usize],
    ) -> Result<Vec<Var>> {
        let mut adjoint: Vec<Option<Var>> = vec![None; out + 1];
        if needed[out] {
            let seed = Tensor::ones(self.val(out).shape());
            adjoint[out] = Some(self.constant(seed));
        }
        for i in (first..=out).rev() {
            let Some(g) = adjoint[i] else { continue };
            if matches!(self.nodes[i].op, Op::Leaf) {
                continue;
            }
            let op = self.nodes[i].op.clone();
            for (input, contribution) in self.vjp(i, &op, g, needed)? {
                adjoint[input] = Some(match adjoint[input] {
                    None => contribution,
                    Some(acc) => self.add(acc, contribution)?,
                });
            }
        }
        targets
            .iter()
            .map(|&t| match adjoint.get(t).copied().flatten() {
                Some(g) => Ok(g),
                None => {
                    let zeros = Tensor::zeros(self.val(t).shape());
                    Ok(self.constant(zeros))
                }
            })
            .collect()
    }

    /// Vector-Jacobian products of node `node` for the inputs marked in `needed`.
    fn vjp(&mut self, node: usize, op: &Op, g: Var, needed: &[bool]) -> Result<Vec<(usize, Var)>> {
        let mut out = Vec::with_capacity(2);
        match *op {
            Op::Leaf => {}
            Op::Add(a, b) => {
                if needed[a] {
                    out.push((a, g));
                }
                if needed[b] {
                    out.push((b, g));
                }
            }
            Op::Sub(a, b) => {
                if needed[a] {
                    out.push((a, g));
                }
                if needed[b] {
                    out.push((b, self.neg(g)?));
                }
            }
            Op::Mul(a, b) => {
                if needed[a] {
                    let vb = self.handle(b);
                    out.push((a, self.mul(g, vb)?));
                }
                if needed[b] {
                    let va = self.handle(a);
                    out.push((b, self.mul(g, va)?));
                }
            }
            Op::Neg(a) => out.push((a, self.neg(g)?)),
            Op::Scale(a, factor) => out.push((a, self.scale(g, factor)?)),
            Op::MatMul(a, b) => {
                if needed[a] {
                    let bt = self.transpose(self.handle(b))?;
                    out.push((a, self.matmul(g, bt)?));
                }
                if needed[b] {
                    let at = self.transpose(self.handle(a))?;
                    out.push((b, self.matmul(at, g)?));
                }
            }
            Op::Transpose(a) => out.push((a, self.transpose(g)?)),
            Op::Relu(a) => {
                // The mask is piecewise constant, so its own derivative is zero.
                let mask = self.val(a).map(|x| if x > 0.0 { 1.0 } else { 0.0 });
                let mask = self.constant(mask);
                out.push((a, self.mul(g, mask)?));
            }
            Op::Sigmoid(a) => {
                let s = self.handle(node);
                let ones = Tensor::ones(self.val(node).shape());
                let ones = self.constant(ones);
                let one_minus = self.sub(ones, s)?;
                let ds = self.mul(s, one_minus)?;
                out.push((a, self.mul(g, ds)?));
            }
            Op::Softplus(a) => {
                let s = self.sigmoid(self.handle(a))?;
                out.push((a, self.mul(g, s)?));
            }
            Op::Sum(a) => {
                let shape = self.val(a).shape().to_vec();
                out.push((a, self.broadcast_to(g, &shape)?));
            }
            Op::Mean(a) => {
                let shape = self.val(a).shape().to_vec();
                let n = self.val(a).numel() as f64;
                let spread = self.broadcast_to(g, &shape)?;
                out.push((a, self.scale(spread, 1.0 / n)?));
            }
            Op::BroadcastTo(a) => {
                let shape = self.val(a).shape().to_vec();
                out.push((a, self.reduce_to(g, &shape)?));
            }
            Op::ReduceTo(a) => {
                let shape = self.val(a).shape().to_vec();
                out.push((a, self.broadcast_to(g, &shape)?));
            }
            Op::ConcatCols(ref parts) => {
                let mut start = 0;
                for &p in parts {
                    let width = self.val(p).cols();
                    if needed[p] {
                        out.push((p, self.slice_cols(g, start, width)?));
                    }
                    start += width;
                }
            }
            Op::SliceCols { input, start } => {
                let total = self.val(input).cols();
                out.push((input, self.pad_cols(g, start, total)?));
            }
            Op::PadCols { input, start } => {
                let width = self.val(input).cols();
                out.push((input, self.slice_cols(g, start, width)?));
            }
            Op::IndexSelect { input, ref index } => {
                let rows = self.val(input).rows();
                out.push((input, self.scatter_add(g, index, rows)?));
            }
            Op::ScatterAdd { input, ref index } => {
                out.push((input, self.index_select(g, index)?));
            }
        }
        out.retain(|(input, _)| needed[*input]);
        Ok(out)
    }
}
