//! Finite-difference oracles for first- and second-order derivatives.
//!
//! Everything here uses forward values only; the reverse-mode machinery
//! under test never feeds into the reference numbers. [`op_catalog`] lists a
//! scalar test function for every differentiable tape op, and [`check_op`]
//! compares analytic gradients and Hessian-vector products against central
//! differences on randomized inputs.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::optim::Sgd;
use crate::tape::{Indices, Tape, Var};
use crate::tensor::Tensor;

pub const FD_STEP: f64 = 1e-5;
pub const REL_TOL: f64 = 1e-4;
pub const DENOM_FLOOR: f64 = 1e-8;

/// `‖a − b‖₂ / max(‖a‖₂, ‖b‖₂, 1e-8)`.
pub fn relative_error(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    // Rescale first so that squaring very large entries cannot overflow.
    let scale = a.iter().chain(b).fold(0.0f64, |m, x| m.max(x.abs()));
    if scale == 0.0 {
        return 0.0;
    }
    let norm = |v: &mut dyn Iterator<Item = f64>| {
        v.map(|x| (x / scale) * (x / scale)).sum::<f64>().sqrt() * scale
    };
    let diff = norm(&mut a.iter().zip(b).map(|(x, y)| x - y));
    let na = norm(&mut a.iter().copied());
    let nb = norm(&mut b.iter().copied());
    diff / na.max(nb).max(DENOM_FLOOR)
}

/// Central-difference gradient of a scalar function of one tensor.
pub fn numeric_gradient(
    mut f: impl FnMut(&Tensor) -> Result<f64>,
    x: &Tensor,
    step: f64,
) -> Result<Tensor> {
    let mut grad = Tensor::zeros(x.shape());
    let mut probe = x.clone();
    for i in 0..x.numel() {
        let orig = probe.data()[i];
        probe.data_mut()[i] = orig + step;
        let up = f(&probe)?;
        probe.data_mut()[i] = orig - step;
        let down = f(&probe)?;
        probe.data_mut()[i] = orig;
        grad.data_mut()[i] = (up - down) / (2.0 * step);
    }
    Ok(grad)
}

/// Central difference of a vector-valued function along `direction`:
/// `(g(x + εr) − g(x − εr)) / 2ε`. With `g = ∇f` this is a Hessian-vector
/// product.
pub fn numeric_directional(
    mut g: impl FnMut(&Tensor) -> Result<Tensor>,
    x: &Tensor,
    direction: &Tensor,
    step: f64,
) -> Result<Tensor> {
    let shifted = |sign: f64| x.zip_map(direction, |a, r| a + sign * step * r);
    let up = g(&shifted(1.0))?;
    let down = g(&shifted(-1.0))?;
    Ok(up.zip_map(&down, |u, d| (u - d) / (2.0 * step)))
}

/// A scalar-valued test function `f(x)` built from tape ops.
pub struct OpCase {
    pub name: &'static str,
    pub input_shape: Vec<usize>,
    /// Keep random inputs at least this far from zero (kinks).
    pub min_abs: f64,
    build: fn(&mut Tape, Var, &mut Aux) -> Result<Var>,
}

/// Random auxiliary constants for one instance, drawn lazily in call order.
pub struct Aux {
    rng: ChaCha8Rng,
    drawn: Vec<Tensor>,
    cursor: usize,
}

impl Aux {
    fn new(seed: u64) -> Self {
        Self {
            rng: ChaCha8Rng::seed_from_u64(seed),
            drawn: Vec::new(),
            cursor: 0,
        }
    }

    fn rewind(&mut self) {
        self.cursor = 0;
    }

    /// The same sequence of tensors on every evaluation of an instance.
    fn tensor(&mut self, shape: &[usize]) -> Tensor {
        if self.cursor == self.drawn.len() {
            let data = (0..shape.iter().product::<usize>())
                .map(|_| self.rng.gen_range(-1.0..1.0))
                .collect();
            self.drawn
                .push(Tensor::new(shape.to_vec(), data).expect("valid shape"));
        }
        self.cursor += 1;
        self.drawn[self.cursor - 1].clone()
    }

    fn constant(&mut self, tape: &mut Tape, shape: &[usize]) -> Var {
        let t = self.tensor(shape);
        tape.constant(t)
    }
}

/// `Σ w₁ ⊙ y ⊙ y + Σ w₂ ⊙ y`: nonzero curvature even when `y` is linear in x.
fn quadratic_readout(tape: &mut Tape, y: Var, aux: &mut Aux) -> Result<Var> {
    let shape = tape.shape(y)?.to_vec();
    let w1 = aux.constant(tape, &shape);
    let w2 = aux.constant(tape, &shape);
    let yy = tape.mul(y, y)?;
    let a = tape.dot(w1, yy)?;
    let b = tape.dot(w2, y)?;
    tape.add(a, b)
}

macro_rules! case {
    ($name:expr, $shape:expr, $min_abs:expr, $build:expr) => {
        OpCase {
            name: $name,
            input_shape: $shape.to_vec(),
            min_abs: $min_abs,
            build: $build,
        }
    };
}

fn gather_index() -> Indices {
    vec![2, 0, 2, 1, 3].into()
}

/// One test function per differentiable op, plus a few compositions.
pub fn op_catalog() -> Vec<OpCase> {
    vec![
        case!("add_lhs", [3, 2], 0.0, |t, x, a| {
            let c = a.constant(t, &[3, 2]);
            let y = t.add(x, c)?;
            quadratic_readout(t, y, a)
        }),
        case!("add_rhs", [3, 2], 0.0, |t, x, a| {
            let c = a.constant(t, &[3, 2]);
            let y = t.add(c, x)?;
            quadratic_readout(t, y, a)
        }),
        case!("sub_lhs", [2, 3], 0.0, |t, x, a| {
            let c = a.constant(t, &[2, 3]);
            let y = t.sub(x, c)?;
            quadratic_readout(t, y, a)
        }),
        case!("sub_rhs", [2, 3], 0.0, |t, x, a| {
            let c = a.constant(t, &[2, 3]);
            let y = t.sub(c, x)?;
            quadratic_readout(t, y, a)
        }),
        case!("mul_lhs", [3, 3], 0.0, |t, x, a| {
            let c = a.constant(t, &[3, 3]);
            let y = t.mul(x, c)?;
            quadratic_readout(t, y, a)
        }),
        case!("mul_rhs", [4], 0.0, |t, x, a| {
            let c = a.constant(t, &[4]);
            let y = t.mul(c, x)?;
            quadratic_readout(t, y, a)
        }),
        case!("mul_self", [2, 2], 0.0, |t, x, a| {
            let y = t.mul(x, x)?;
            quadratic_readout(t, y, a)
        }),
        case!("neg", [3], 0.0, |t, x, a| {
            let y = t.neg(x)?;
            quadratic_readout(t, y, a)
        }),
        case!("scale", [2, 3], 0.0, |t, x, a| {
            let y = t.scale(x, -1.7)?;
            quadratic_readout(t, y, a)
        }),
        case!("matmul_lhs", [3, 4], 0.0, |t, x, a| {
            let c = a.constant(t, &[4, 2]);
            let y = t.matmul(x, c)?;
            quadratic_readout(t, y, a)
        }),
        case!("matmul_rhs", [4, 2], 0.0, |t, x, a| {
            let c = a.constant(t, &[3, 4]);
            let y = t.matmul(c, x)?;
            quadratic_readout(t, y, a)
        }),
        case!("matmul_gram", [3, 2], 0.0, |t, x, a| {
            let xt = t.transpose(x)?;
            let y = t.matmul(x, xt)?;
            quadratic_readout(t, y, a)
        }),
        case!("transpose", [2, 3], 0.0, |t, x, a| {
            let y = t.transpose(x)?;
            quadratic_readout(t, y, a)
        }),
        case!("relu", [3, 3], 0.1, |t, x, a| {
            let y = t.relu(x)?;
            quadratic_readout(t, y, a)
        }),
        case!("sigmoid", [3, 2], 0.0, |t, x, a| {
            let s = t.scale(x, 3.0)?;
            let y = t.sigmoid(s)?;
            quadratic_readout(t, y, a)
        }),
        case!("softplus", [3, 2], 0.0, |t, x, a| {
            let s = t.scale(x, 3.0)?;
            let y = t.softplus(s)?;
            quadratic_readout(t, y, a)
        }),
        case!("sum", [3, 2], 0.0, |t, x, a| {
            let y = t.sum(x)?;
            quadratic_readout(t, y, a)
        }),
        case!("mean", [2, 4], 0.0, |t, x, a| {
            let y = t.mean(x)?;
            quadratic_readout(t, y, a)
        }),
        case!("broadcast_row", [3], 0.0, |t, x, a| {
            let y = t.broadcast_to(x, &[4, 3])?;
            quadratic_readout(t, y, a)
        }),
        case!("broadcast_col", [3, 1], 0.0, |t, x, a| {
            let y = t.broadcast_to(x, &[3, 2])?;
            quadratic_readout(t, y, a)
        }),
        case!("broadcast_scalar", [], 0.0, |t, x, a| {
            let y = t.broadcast_to(x, &[2, 3])?;
            quadratic_readout(t, y, a)
        }),
        case!("reduce_rows", [4, 3], 0.0, |t, x, a| {
            let y = t.reduce_to(x, &[3])?;
            quadratic_readout(t, y, a)
        }),
        case!("reduce_cols", [3, 4], 0.0, |t, x, a| {
            let y = t.reduce_to(x, &[3, 1])?;
            quadratic_readout(t, y, a)
        }),
        case!("concat_cols", [3, 2], 0.0, |t, x, a| {
            let l = a.constant(t, &[3, 1]);
            let r = a.constant(t, &[3, 3]);
            let y = t.concat_cols(&[l, x, r])?;
            quadratic_readout(t, y, a)
        }),
        case!("slice_cols", [2, 5], 0.0, |t, x, a| {
            let y = t.slice_cols(x, 1, 3)?;
            quadratic_readout(t, y, a)
        }),
        case!("pad_cols", [3, 2], 0.0, |t, x, a| {
            let y = t.pad_cols(x, 2, 5)?;
            quadratic_readout(t, y, a)
        }),
        case!("index_select", [4, 2], 0.0, |t, x, a| {
            let y = t.index_select(x, &gather_index())?;
            quadratic_readout(t, y, a)
        }),
        case!("scatter_add", [5, 2], 0.0, |t, x, a| {
            let y = t.scatter_add(x, &gather_index(), 4)?;
            quadratic_readout(t, y, a)
        }),
        case!("matmul_chain_3x3", [3, 3], 0.0, |t, x, a| {
            let b = a.constant(t, &[3, 3]);
            let c = a.constant(t, &[3, 3]);
            let xb = t.matmul(x, b)?;
            let xbx = t.matmul(xb, x)?;
            let y = t.matmul(xbx, c)?;
            let s = t.sigmoid(y)?;
            t.sum(s)
        }),
        case!("gin_aggregate", [4, 3], 0.0, |t, x, a| {
            let src: Indices = vec![0, 1, 1, 2, 2, 3].into();
            let dst: Indices = vec![1, 0, 2, 1, 3, 2].into();
            let msgs = t.index_select(x, &src)?;
            let agg = t.scatter_add(msgs, &dst, 4)?;
            let pre = t.add(x, agg)?;
            let w = a.constant(t, &[3, 3]);
            let b = a.constant(t, &[3]);
            let h = t.affine(pre, w, b)?;
            let y = t.softplus(h)?;
            quadratic_readout(t, y, a)
        }),
        case!("sgd_tracked", [2, 2], 0.0, |t, x, a| {
            // One tracked step on L(p) = Σ c ⊙ p ⊙ p, then a readout of p'.
            let c = a.constant(t, &[2, 2]);
            let v = a.constant(t, &[2, 2]);
            let pp = t.mul(x, x)?;
            let loss = t.dot(c, pp)?;
            let g = t.grad(loss, &[x], true)?[0];
            let sgd = Sgd::new(0.3, 0.9, 0.05)?;
            let (np, _) = sgd.step_tracked(t, &[x], &[g], &[v])?;
            quadratic_readout(t, np[0], a)
        }),
    ]
}

/// Worst relative errors of one op over a number of random instances.
#[derive(Clone, Debug)]
pub struct OpReport {
    pub name: &'static str,
    pub instances: usize,
    pub first_order: f64,
    pub second_order: f64,
}

impl OpReport {
    pub fn passed(&self) -> bool {
        self.first_order < REL_TOL && self.second_order < REL_TOL
    }
}

fn random_input(case: &OpCase, rng: &mut ChaCha8Rng) -> Tensor {
    let n: usize = case.input_shape.iter().product();
    let data = (0..n)
        .map(|_| loop {
            let v: f64 = rng.gen_range(-1.0..1.0);
            if v.abs() >= case.min_abs {
                break v;
            }
        })
        .collect();
    Tensor::new(case.input_shape.clone(), data).expect("catalog shapes are valid")
}

fn eval_value(case: &OpCase, x: &Tensor, aux: &mut Aux) -> Result<f64> {
    aux.rewind();
    let mut tape = Tape::new();
    // A param, not a constant: some cases differentiate internally.
    let xv = tape.param(x.clone());
    let y = (case.build)(&mut tape, xv, aux)?;
    tape.item(y)
}

fn eval_grad(case: &OpCase, x: &Tensor, aux: &mut Aux) -> Result<Tensor> {
    aux.rewind();
    let mut tape = Tape::new();
    let xv = tape.param(x.clone());
    let y = (case.build)(&mut tape, xv, aux)?;
    let g = tape.grad(y, &[xv], false)?[0];
    Ok(tape.value(g)?.clone())
}

/// Analytic Hessian-vector product via grad-of-grad.
fn eval_hvp(case: &OpCase, x: &Tensor, r: &Tensor, aux: &mut Aux) -> Result<Tensor> {
    aux.rewind();
    let mut tape = Tape::new();
    let xv = tape.param(x.clone());
    let y = (case.build)(&mut tape, xv, aux)?;
    let g = tape.grad(y, &[xv], true)?[0];
    let rv = tape.constant(r.clone());
    let gr = tape.dot(g, rv)?;
    let h = tape.grad(gr, &[xv], false)?[0];
    Ok(tape.value(h)?.clone())
}

pub fn check_op(case: &OpCase, instances: usize, seed: u64) -> Result<OpReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut report = OpReport {
        name: case.name,
        instances,
        first_order: 0.0,
        second_order: 0.0,
    };
    for _ in 0..instances {
        let x = random_input(case, &mut rng);
        let mut aux = Aux::new(rng.gen());
        let analytic = eval_grad(case, &x, &mut aux)?;
        let numeric = numeric_gradient(|p| eval_value(case, p, &mut aux), &x, FD_STEP)?;
        report.first_order = report
            .first_order
            .max(relative_error(analytic.data(), numeric.data()));

        let r = Tensor::new(
            x.shape().to_vec(),
            (0..x.numel()).map(|_| rng.gen_range(-1.0..1.0)).collect(),
        )?;
        let hvp = eval_hvp(case, &x, &r, &mut aux)?;
        let numeric_hvp = numeric_directional(|p| eval_grad(case, p, &mut aux), &x, &r, FD_STEP)?;
        report.second_order = report
            .second_order
            .max(relative_error(hvp.data(), numeric_hvp.data()));
    }
    Ok(report)
}

/// Runs [`check_op`] over the whole catalog.
pub fn check_all(instances: usize, seed: u64) -> Result<Vec<OpReport>> {
    op_catalog()
        .iter()
        .enumerate()
        .map(|(i, case)| check_op(case, instances, seed.wrapping_add(i as u64)))
        .collect()
}
