//! SGD with momentum and L2 weight decay.
//!
//! `v' = momentum·v + (g + weight_decay·p)`, `p' = p − lr·v'`.
//!
//! [`Sgd::step`] updates tensors in place. [`Sgd::step_tracked`] performs the
//! same arithmetic, in the same order, as tape ops so an update can be
//! differentiated through.

use crate::error::{AutodiffError, Result};
use crate::tape::{Tape, Var};
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Sgd {
    pub lr: f64,
    pub momentum: f64,
    pub weight_decay: f64,
}

impl Sgd {
    pub fn new(lr: f64, momentum: f64, weight_decay: f64) -> Result<Self> {
        let sgd = Self {
            lr,
            momentum,
            weight_decay,
        };
        sgd.validate()?;
        Ok(sgd)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lr >= 0.0 && self.lr.is_finite()) {
            return Err(AutodiffError::InvalidHyperparameter(format!(
                "learning rate must be non-negative, got {}",
                self.lr
            )));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(AutodiffError::InvalidHyperparameter(format!(
                "momentum must lie in [0, 1), got {}",
                self.momentum
            )));
        }
        if !self.weight_decay.is_finite() {
            return Err(AutodiffError::InvalidHyperparameter(format!(
                "weight decay must be finite, got {}",
                self.weight_decay
            )));
        }
        Ok(())
    }

    pub fn with_lr(self, lr: f64) -> Self {
        Self { lr, ..self }
    }

    /// In-place update of `params` and their momentum `buffers`.
    pub fn step(
        &self,
        params: &mut [Tensor],
        grads: &[Tensor],
        buffers: &mut [Tensor],
    ) -> Result<()> {
        self.validate()?;
        check_lengths(params.len(), grads.len(), buffers.len())?;
        for ((p, g), v) in params.iter_mut().zip(grads).zip(buffers.iter_mut()) {
            if p.shape() != g.shape() || p.shape() != v.shape() {
                return Err(AutodiffError::ShapeMismatch {
                    op: "sgd_momentum_step",
                    lhs: p.shape().to_vec(),
                    rhs: if p.shape() != g.shape() {
                        g.shape()
                    } else {
                        v.shape()
                    }
                    .to_vec(),
                });
            }
            let (pd, gd, vd) = (p.data_mut(), g.data(), v.data_mut());
            for i in 0..pd.len() {
                let nv = vd[i] * self.momentum + (gd[i] + pd[i] * self.weight_decay);
                vd[i] = nv;
                pd[i] -= nv * self.lr;
            }
        }
        Ok(())
    }

    /// The same update recorded on `tape`; returns `(params', buffers')`.
    pub fn step_tracked(
        &self,
        tape: &mut Tape,
        params: &[Var],
        grads: &[Var],
        buffers: &[Var],
    ) -> Result<(Vec<Var>, Vec<Var>)> {
        self.validate()?;
        check_lengths(params.len(), grads.len(), buffers.len())?;
        let mut new_params = Vec::with_capacity(params.len());
        let mut new_buffers = Vec::with_capacity(params.len());
        for ((&p, &g), &v) in params.iter().zip(grads).zip(buffers) {
            let decay = tape.scale(p, self.weight_decay)?;
            let direction = tape.add(g, decay)?;
            let carried = tape.scale(v, self.momentum)?;
            let nv = tape.add(carried, direction)?;
            let stepped = tape.scale(nv, self.lr)?;
            let np = tape.sub(p, stepped)?;
            new_params.push(np);
            new_buffers.push(nv);
        }
        Ok((new_params, new_buffers))
    }
}

fn check_lengths(params: usize, grads: usize, buffers: usize) -> Result<()> {
    if params == grads && grads == buffers {
        Ok(())
    } else {
        Err(AutodiffError::InvalidArgument {
            op: "sgd_momentum_step",
            msg: format!("{params} params, {grads} grads, {buffers} momentum buffers"),
        })
    }
}
