//! Free adversarial augmentation of node embeddings: a few ascent steps on an
//! unbounded perturbation, with classifier gradients averaged across them.

use gabo_autodiff::{Tape, Tensor, Var};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::bilevel::{abort_on_non_finite, InnerConfig, InnerOutcome};
use crate::augmenters::uniform;
use crate::error::{Error, Result};
use crate::gnn_models::{bce_loss, Classifier, GraphBatch};
use crate::params::bind_tensors;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AscentRule {
    /// `δ + α·sign(g)`
    Sign,
    /// `δ + α·g/‖g‖` with the norm taken over the whole perturbation.
    Normalized,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FlagConfig {
    pub ascent_steps: usize,
    pub step_size: f64,
    pub ascent_rule: AscentRule,
}

impl Default for FlagConfig {
    fn default() -> Self {
        Self {
            ascent_steps: 3,
            step_size: 1e-3,
            ascent_rule: AscentRule::Sign,
        }
    }
}

impl FlagConfig {
    /// `α = 0` is accepted so that the method can collapse to plain training.
    pub fn validate(&self) -> Result<()> {
        if self.ascent_steps == 0 {
            return Err(Error::config("flag.ascent_steps", "must be at least 1"));
        }
        if !(self.step_size >= 0.0 && self.step_size.is_finite()) {
            return Err(Error::config(
                "flag.step_size",
                "must be finite and non-negative",
            ));
        }
        Ok(())
    }
}

pub fn ascent_update(delta: &Tensor, grad: &Tensor, alpha: f64, rule: AscentRule) -> Tensor {
    let mut out = delta.clone();
    match rule {
        AscentRule::Sign => {
            for (d, &g) in out.data_mut().iter_mut().zip(grad.data()) {
                let s = if g > 0.0 {
                    1.0
                } else if g < 0.0 {
                    -1.0
                } else {
                    0.0
                };
                *d += alpha * s;
            }
        }
        AscentRule::Normalized => {
            let n = grad.l2_norm();
            if n > 0.0 {
                for (d, &g) in out.data_mut().iter_mut().zip(grad.data()) {
                    *d += alpha * g / n;
                }
            }
        }
    }
    out
}

fn perturbed_loss(
    model: &Classifier,
    tape: &mut Tape,
    omega: &[Var],
    batch: &GraphBatch,
    delta: Var,
) -> Result<Var> {
    let h0 = model.encode_atoms(tape, omega, batch)?;
    let h = tape.add(h0, delta)?;
    let logits = model.forward_from_embeddings(tape, omega, h, batch)?;
    bce_loss(tape, logits, &batch.label_column())
}

fn initial_delta(model: &Classifier, batch: &GraphBatch, alpha: f64, rng: &mut impl Rng) -> Tensor {
    uniform(rng, batch.num_nodes(), model.emb_dim(), alpha)
}

/// One classifier update: `M` forward/backward rounds on `h + δ_t`, the
/// classifier gradient of each scaled by `1/M` and summed, `δ` pushed up the
/// loss after every round, then a single momentum-SGD step.
#[allow(clippy::too_many_arguments)]
pub fn flag_train_step(
    model: &Classifier,
    omega: &mut [Tensor],
    momentum: &mut [Tensor],
    batch: &GraphBatch,
    fcfg: &FlagConfig,
    inner: &InnerConfig,
    rng: &mut impl Rng,
    step: u64,
) -> Result<InnerOutcome> {
    let m = fcfg.ascent_steps;
    let scale = 1.0 / m as f64;
    let mut delta = initial_delta(model, batch, fcfg.step_size, rng);
    let mut acc: Vec<Tensor> = omega.iter().map(|t| Tensor::zeros(t.shape())).collect();
    let mut loss_sum = 0.0;
    let context = |round: usize| move || format!("FLAG step {step}, ascent round {round}");
    for round in 0..m {
        let mut tape = Tape::new();
        let omega_vars = bind_tensors(&mut tape, omega, true);
        let d = tape.param(delta.clone());
        let result = (|| -> Result<(f64, Vec<Tensor>, Tensor)> {
            let mut loss = perturbed_loss(model, &mut tape, &omega_vars, batch, d)?;
            if inner.l2 != 0.0 {
                for &p in &omega_vars {
                    let sq = tape.dot(p, p)?;
                    let term = tape.scale(sq, inner.l2)?;
                    loss = tape.add(loss, term)?;
                }
            }
            let wrt: Vec<Var> = omega_vars.iter().copied().chain([d]).collect();
            let grads = tape.grad(loss, &wrt, false)?;
            let mut grads: Vec<Tensor> = grads
                .iter()
                .map(|&g| tape.value(g).cloned())
                .collect::<std::result::Result<_, _>>()?;
            let g_delta = grads.pop().expect("delta gradient");
            Ok((tape.item(loss)?, grads, g_delta))
        })();
        let (loss, grads, g_delta) = result.map_err(|e| abort_on_non_finite(e, context(round)))?;
        loss_sum += loss;
        for (a, g) in acc.iter_mut().zip(&grads) {
            for (x, y) in a.data_mut().iter_mut().zip(g.data()) {
                *x += y * scale;
            }
        }
        delta = ascent_update(&delta, &g_delta, fcfg.step_size, fcfg.ascent_rule);
        if !delta.all_finite() {
            return Err(Error::Aborted(format!(
                "{}: non-finite perturbation",
                context(round)()
            )));
        }
    }
    let grad_norm = acc
        .iter()
        .flat_map(|t| t.data())
        .map(|x| x * x)
        .sum::<f64>()
        .sqrt();
    inner.sgd.step(omega, &acc, momentum)?;
    Ok(InnerOutcome {
        loss: loss_sum * scale,
        phi_norm: None,
        grad_norm,
    })
}

/// Batch loss at the initial perturbation and after `M` ascent updates, with
/// the classifier frozen.
pub fn flag_ascent_losses(
    model: &Classifier,
    omega: &[Tensor],
    batch: &GraphBatch,
    fcfg: &FlagConfig,
    rng: &mut impl Rng,
) -> Result<(f64, f64)> {
    let eval = |delta: &Tensor| -> Result<(f64, Tensor)> {
        let mut tape = Tape::new();
        let omega_vars = bind_tensors(&mut tape, omega, false);
        let d = tape.param(delta.clone());
        let loss = perturbed_loss(model, &mut tape, &omega_vars, batch, d)?;
        let g = tape.grad(loss, &[d], false)?[0];
        Ok((tape.item(loss)?, tape.value(g)?.clone()))
    };
    let mut delta = initial_delta(model, batch, fcfg.step_size, rng);
    let (first, mut g) = eval(&delta)?;
    let mut last = first;
    for _ in 0..fcfg.ascent_steps {
        delta = ascent_update(&delta, &g, fcfg.step_size, fcfg.ascent_rule);
        (last, g) = eval(&delta)?;
    }
    Ok((first, last))
}
