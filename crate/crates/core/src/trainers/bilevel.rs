//! Inner classifier steps that can be recorded for differentiation, and the
//! outer step that backpropagates a pseudo-validation loss through the last
//! recorded steps into the augmenter parameters.

use std::collections::VecDeque;

use gabo_autodiff::{AutodiffError, Sgd, Tape, Tensor, Var};

use crate::error::{Error, Result};
use crate::params::bind_tensors;

pub struct TrainLoss {
    pub loss: Var,
    /// Mean per-node `‖φ‖₂` when a learned augmentation was applied.
    pub phi_norm: Option<f64>,
}

/// The two objectives of the bilevel problem. `omega` are the inner
/// (classifier) parameters and `theta` the outer ones.
pub trait BilevelProblem {
    type Batch: ?Sized;

    fn train_loss(
        &self,
        tape: &mut Tape,
        omega: &[Var],
        theta: &[Var],
        batch: &Self::Batch,
        step: u64,
    ) -> Result<TrainLoss>;

    fn outer_loss(&self, tape: &mut Tape, omega: &[Var], batch: &Self::Batch) -> Result<Var>;
}

#[derive(Clone, Copy, Debug)]
pub struct InnerConfig {
    /// Plain momentum SGD; its weight decay is expected to be zero since the
    /// L2 term enters through the loss.
    pub sgd: Sgd,
    /// Coefficient of `‖ω‖²` added to the training loss.
    pub l2: f64,
}

#[derive(Clone, Copy, Debug)]
pub struct OuterConfig {
    pub lr: f64,
    /// Coefficient of `‖θ‖²`; its gradient is added to the hypergradient.
    pub l2: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct InnerOutcome {
    pub loss: f64,
    pub phi_norm: Option<f64>,
    pub grad_norm: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct OuterOutcome {
    pub hypergradient: Vec<Tensor>,
    pub pval_loss: f64,
}

/// One differentiable inner step: its own tape holding the update
/// `(ω, v, θ) ↦ (ω', v')` including the second-order gradient graph.
struct StepRecord {
    tape: Tape,
    omega_in: Vec<Var>,
    momentum_in: Vec<Var>,
    theta: Vec<Var>,
    omega_out: Vec<Var>,
    momentum_out: Vec<Var>,
}

/// The last `capacity` recorded inner steps, oldest first.
pub struct UnrollWindow {
    capacity: usize,
    records: VecDeque<StepRecord>,
}

impl UnrollWindow {
    pub fn new(capacity: usize) -> Result<Self> {
        if capacity == 0 {
            return Err(Error::config("bilevel.window", "must be at least 1"));
        }
        Ok(Self {
            capacity,
            records: VecDeque::with_capacity(capacity),
        })
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn clear(&mut self) {
        self.records.clear();
    }

    fn push(&mut self, record: StepRecord) {
        if self.records.len() == self.capacity {
            self.records.pop_front();
        }
        self.records.push_back(record);
    }
}

/// Rewrites a non-finite tape value into a training abort.
pub(crate) fn abort_on_non_finite(err: Error, context: impl FnOnce() -> String) -> Error {
    match err {
        Error::Autodiff(AutodiffError::NonFinite { op }) => {
            Error::Aborted(format!("{}: non-finite value produced by {op}", context()))
        }
        other => other,
    }
}

fn add_l2(tape: &mut Tape, loss: Var, params: &[Var], coef: f64) -> Result<Var> {
    if coef == 0.0 {
        return Ok(loss);
    }
    let mut total = loss;
    for &p in params {
        let sq = tape.dot(p, p)?;
        let term = tape.scale(sq, coef)?;
        total = tape.add(total, term)?;
    }
    Ok(total)
}

fn values(tape: &Tape, vars: &[Var]) -> Result<Vec<Tensor>> {
    Ok(vars
        .iter()
        .map(|&v| tape.value(v).cloned())
        .collect::<std::result::Result<_, _>>()?)
}

fn norm(ts: &[Tensor]) -> f64 {
    ts.iter()
        .flat_map(|t| t.data())
        .map(|x| x * x)
        .sum::<f64>()
        .sqrt()
}

/// One momentum-SGD step on the training loss with `θ` held fixed. With a
/// window, the step is recorded so that [`outer_step`] can differentiate it.
#[allow(clippy::too_many_arguments)]
pub fn inner_step<P: BilevelProblem>(
    problem: &P,
    omega: &mut [Tensor],
    momentum: &mut [Tensor],
    theta: &[Tensor],
    batch: &P::Batch,
    step: u64,
    cfg: &InnerConfig,
    window: Option<&mut UnrollWindow>,
) -> Result<InnerOutcome> {
    let run = || -> Result<InnerOutcome> {
        let mut tape = Tape::new();
        let omega_in = bind_tensors(&mut tape, omega, true);
        let recorded = window.is_some();
        let momentum_in = if recorded {
            bind_tensors(&mut tape, momentum, true)
        } else {
            Vec::new()
        };
        let theta_vars = bind_tensors(&mut tape, theta, recorded);
        let TrainLoss { loss, phi_norm } =
            problem.train_loss(&mut tape, &omega_in, &theta_vars, batch, step)?;
        let loss = add_l2(&mut tape, loss, &omega_in, cfg.l2)?;
        let loss_value = tape.item(loss)?;
        let grads = tape.grad(loss, &omega_in, recorded)?;
        let grad_values = values(&tape, &grads)?;
        let outcome = InnerOutcome {
            loss: loss_value,
            phi_norm,
            grad_norm: norm(&grad_values),
        };
        match window {
            None => cfg.sgd.step(omega, &grad_values, momentum)?,
            Some(w) => {
                let (omega_out, momentum_out) =
                    cfg.sgd
                        .step_tracked(&mut tape, &omega_in, &grads, &momentum_in)?;
                for (dst, src) in omega.iter_mut().zip(values(&tape, &omega_out)?) {
                    *dst = src;
                }
                for (dst, src) in momentum.iter_mut().zip(values(&tape, &momentum_out)?) {
                    *dst = src;
                }
                w.push(StepRecord {
                    tape,
                    omega_in,
                    momentum_in,
                    theta: theta_vars,
                    omega_out,
                    momentum_out,
                });
            }
        }
        Ok(outcome)
    };
    run().map_err(|e| abort_on_non_finite(e, || format!("inner step {step}")))
}

/// Hypergradient of the pseudo-validation loss with respect to `θ` through
/// the recorded window, plus the `θ` L2 term, followed by `θ ← θ − lr·h`.
/// Momentum entering the oldest recorded step is treated as a constant. The
/// window is emptied.
pub fn outer_step<P: BilevelProblem>(
    problem: &P,
    window: &mut UnrollWindow,
    theta: &mut [Tensor],
    pval_batch: &P::Batch,
    cfg: &OuterConfig,
) -> Result<OuterOutcome> {
    let outcome = hypergradient(problem, window, theta, pval_batch, cfg.l2)
        .map_err(|e| abort_on_non_finite(e, || "outer step".into()));
    window.clear();
    let outcome = outcome?;
    if !outcome.hypergradient.iter().all(Tensor::all_finite) {
        return Err(Error::Aborted(format!(
            "outer step: non-finite hypergradient (pseudo-validation loss {})",
            outcome.pval_loss
        )));
    }
    if cfg.lr != 0.0 {
        for (t, h) in theta.iter_mut().zip(&outcome.hypergradient) {
            for (x, g) in t.data_mut().iter_mut().zip(h.data()) {
                *x -= cfg.lr * g;
            }
        }
    }
    Ok(outcome)
}

fn hypergradient<P: BilevelProblem>(
    problem: &P,
    window: &mut UnrollWindow,
    theta: &[Tensor],
    pval_batch: &P::Batch,
    l2: f64,
) -> Result<OuterOutcome> {
    let last = window.records.back().ok_or(Error::EmptyWindow)?;
    let omega_t = values(&last.tape, &last.omega_out)?;

    let mut tape = Tape::new();
    let omega_vars = bind_tensors(&mut tape, &omega_t, true);
    let loss = problem.outer_loss(&mut tape, &omega_vars, pval_batch)?;
    let pval_loss = tape.item(loss)?;
    let v = tape.grad(loss, &omega_vars, false)?;
    let mut adj_omega = values(&tape, &v)?;
    let mut adj_momentum: Vec<Tensor> = omega_t.iter().map(|t| Tensor::zeros(t.shape())).collect();
    let mut acc: Vec<Tensor> = theta.iter().map(|t| Tensor::zeros(t.shape())).collect();

    for rec in window.records.iter_mut().rev() {
        let tape = &mut rec.tape;
        // s = ⟨ā_ω, ω'⟩ + ⟨ā_v, v'⟩ pulls the adjoints back one step.
        let mut s = tape.scalar(0.0);
        for (a, &out) in adj_omega.iter().zip(&rec.omega_out) {
            let c = tape.constant(a.clone());
            let d = tape.dot(c, out)?;
            s = tape.add(s, d)?;
        }
        for (a, &out) in adj_momentum.iter().zip(&rec.momentum_out) {
            let c = tape.constant(a.clone());
            let d = tape.dot(c, out)?;
            s = tape.add(s, d)?;
        }
        let wrt: Vec<Var> = rec
            .omega_in
            .iter()
            .chain(&rec.momentum_in)
            .chain(&rec.theta)
            .copied()
            .collect();
        let grad_vars = tape.grad(s, &wrt, false)?;
        let grads = values(tape, &grad_vars)?;
        let (g_omega, rest) = grads.split_at(rec.omega_in.len());
        let (g_momentum, g_theta) = rest.split_at(rec.momentum_in.len());
        adj_omega = g_omega.to_vec();
        adj_momentum = g_momentum.to_vec();
        for (a, g) in acc.iter_mut().zip(g_theta) {
            for (x, y) in a.data_mut().iter_mut().zip(g.data()) {
                *x += y;
            }
        }
    }

    if l2 != 0.0 {
        for (a, t) in acc.iter_mut().zip(theta) {
            for (x, y) in a.data_mut().iter_mut().zip(t.data()) {
                *x += 2.0 * l2 * y;
            }
        }
    }
    Ok(OuterOutcome {
        hypergradient: acc,
        pval_loss,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    /// `L_tr = (ω − θ)²`, `L_pval = ω²`.
    struct Quadratic;

    impl BilevelProblem for Quadratic {
        type Batch = ();

        fn train_loss(
            &self,
            tape: &mut Tape,
            omega: &[Var],
            theta: &[Var],
            _: &(),
            _: u64,
        ) -> Result<TrainLoss> {
            let d = tape.sub(omega[0], theta[0])?;
            Ok(TrainLoss {
                loss: tape.mul(d, d)?,
                phi_norm: None,
            })
        }

        fn outer_loss(&self, tape: &mut Tape, omega: &[Var], _: &()) -> Result<Var> {
            Ok(tape.mul(omega[0], omega[0])?)
        }
    }

    fn inner() -> InnerConfig {
        InnerConfig {
            sgd: Sgd::new(0.1, 0.0, 0.0).unwrap(),
            l2: 0.0,
        }
    }

    #[test]
    fn quadratic_toy_hypergradient() {
        let mut omega = vec![Tensor::scalar(1.0)];
        let mut momentum = vec![Tensor::scalar(0.0)];
        let mut theta = vec![Tensor::scalar(0.0)];
        let mut w = UnrollWindow::new(1).unwrap();
        inner_step(
            &Quadratic,
            &mut omega,
            &mut momentum,
            &theta,
            &(),
            0,
            &inner(),
            Some(&mut w),
        )
        .unwrap();
        assert!((omega[0].item().unwrap() - 0.8).abs() < 1e-15);
        let out = outer_step(
            &Quadratic,
            &mut w,
            &mut theta,
            &(),
            &OuterConfig { lr: 0.0, l2: 0.0 },
        )
        .unwrap();
        assert!((out.hypergradient[0].item().unwrap() - 0.32).abs() < 1e-10);
        assert_eq!(theta[0].item().unwrap(), 0.0);
        assert!(w.is_empty());
    }

    #[test]
    fn window_evicts_oldest() {
        let mut omega = vec![Tensor::scalar(1.0)];
        let mut momentum = vec![Tensor::scalar(0.0)];
        let theta = vec![Tensor::scalar(0.0)];
        let mut w = UnrollWindow::new(4).unwrap();
        for s in 0..3 {
            inner_step(
                &Quadratic,
                &mut omega,
                &mut momentum,
                &theta,
                &(),
                s,
                &inner(),
                Some(&mut w),
            )
            .unwrap();
        }
        assert_eq!(w.len(), 3);
        for s in 3..6 {
            inner_step(
                &Quadratic,
                &mut omega,
                &mut momentum,
                &theta,
                &(),
                s,
                &inner(),
                Some(&mut w),
            )
            .unwrap();
        }
        assert_eq!(w.len(), 4);
    }

    #[test]
    fn recorded_and_plain_steps_agree_bitwise() {
        let cfg = InnerConfig {
            sgd: Sgd::new(0.05, 0.9, 0.0).unwrap(),
            l2: 0.01,
        };
        let theta = vec![Tensor::scalar(0.3)];
        let mut a = (vec![Tensor::scalar(1.0)], vec![Tensor::scalar(0.2)]);
        let mut b = a.clone();
        let mut w = UnrollWindow::new(2).unwrap();
        for s in 0..5 {
            inner_step(&Quadratic, &mut a.0, &mut a.1, &theta, &(), s, &cfg, None).unwrap();
            inner_step(
                &Quadratic,
                &mut b.0,
                &mut b.1,
                &theta,
                &(),
                s,
                &cfg,
                Some(&mut w),
            )
            .unwrap();
        }
        assert_eq!(a, b);
    }

    #[test]
    fn empty_window_and_frozen_parameters() {
        let mut theta = vec![Tensor::scalar(0.5)];
        let mut w = UnrollWindow::new(2).unwrap();
        assert!(matches!(
            outer_step(
                &Quadratic,
                &mut w,
                &mut theta,
                &(),
                &OuterConfig { lr: 0.1, l2: 0.0 }
            ),
            Err(Error::EmptyWindow)
        ));
        let mut omega = vec![Tensor::scalar(1.0)];
        let mut momentum = vec![Tensor::scalar(0.0)];
        let before = theta.clone();
        inner_step(
            &Quadratic,
            &mut omega,
            &mut momentum,
            &theta,
            &(),
            0,
            &inner(),
            Some(&mut w),
        )
        .unwrap();
        assert_eq!(theta, before);
        let omega_before = omega.clone();
        outer_step(
            &Quadratic,
            &mut w,
            &mut theta,
            &(),
            &OuterConfig { lr: 0.1, l2: 0.01 },
        )
        .unwrap();
        assert_eq!(omega, omega_before);
        assert_ne!(theta, before);
        assert!(UnrollWindow::new(0).is_err());
    }
}
