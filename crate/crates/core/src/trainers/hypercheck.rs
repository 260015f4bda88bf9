//! Finite-difference oracles for the truncated hypergradient: replay the
//! recorded inner steps from their starting point with perturbed `θ` and
//! compare the resulting pseudo-validation loss slope with [`outer_step`].

use gabo_autodiff::gradcheck::relative_error;
use gabo_autodiff::{Sgd, Tape, Tensor, Var};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::bilevel::{
    inner_step, outer_step, BilevelProblem, InnerConfig, OuterConfig, TrainLoss, UnrollWindow,
};
use super::problem::{Augmentation, ClassifierProblem};
use crate::augmenters::{uniform, Augmenter, AugmenterConfig, GenerationType, TransformType};
use crate::error::Result;
use crate::gnn_models::{Classifier, GraphBatch, ModelConfig};
use crate::graph_data::{synth_motif_dataset, NodeVocab, SynthConfig};

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct HyperReport {
    pub name: String,
    pub max_rel_error: f64,
    pub tolerance: f64,
    pub passed: bool,
    pub kinks: usize,
}

/// Inner-loop state at the start of the unrolled window.
#[derive(Clone, Debug)]
pub struct Start {
    pub omega: Vec<Tensor>,
    pub momentum: Vec<Tensor>,
    pub first_step: u64,
}

/// Pseudo-validation loss after replaying `batches` from `start`, plus the
/// `θ` L2 term: the function whose gradient the outer step approximates.
pub fn replay_objective<P: BilevelProblem>(
    problem: &P,
    start: &Start,
    theta: &[Tensor],
    batches: &[&P::Batch],
    pval: &P::Batch,
    inner: &InnerConfig,
    theta_l2: f64,
) -> Result<f64> {
    let mut omega = start.omega.clone();
    let mut momentum = start.momentum.clone();
    for (s, b) in batches.iter().enumerate() {
        inner_step(
            problem,
            &mut omega,
            &mut momentum,
            theta,
            b,
            start.first_step + s as u64,
            inner,
            None,
        )?;
    }
    let mut tape = Tape::new();
    let vars: Vec<Var> = omega.into_iter().map(|t| tape.constant(t)).collect();
    let loss = problem.outer_loss(&mut tape, &vars, pval)?;
    let l2: f64 = theta.iter().flat_map(|t| t.data()).map(|x| x * x).sum();
    Ok(tape.item(loss)? + theta_l2 * l2)
}

/// Hypergradient from recording every step of `batches` and running one
/// outer step with zero learning rate.
pub fn windowed_hypergradient<P: BilevelProblem>(
    problem: &P,
    start: &Start,
    theta: &[Tensor],
    batches: &[&P::Batch],
    pval: &P::Batch,
    inner: &InnerConfig,
    theta_l2: f64,
) -> Result<Vec<Tensor>> {
    let mut omega = start.omega.clone();
    let mut momentum = start.momentum.clone();
    let mut window = UnrollWindow::new(batches.len().max(1))?;
    for (s, b) in batches.iter().enumerate() {
        let step = start.first_step + s as u64;
        inner_step(
            problem,
            &mut omega,
            &mut momentum,
            theta,
            b,
            step,
            inner,
            Some(&mut window),
        )?;
    }
    let mut theta = theta.to_vec();
    let cfg = OuterConfig {
        lr: 0.0,
        l2: theta_l2,
    };
    Ok(outer_step(problem, &mut window, &mut theta, pval, &cfg)?.hypergradient)
}

/// Analytic hypergradient next to a coordinate-wise difference of
/// [`replay_objective`].
#[derive(Clone, Debug, PartialEq)]
pub struct ReplayComparison {
    pub analytic: Vec<f64>,
    pub numeric: Vec<f64>,
    /// Coordinates where the replay objective has a ReLU kink within one
    /// step of `θ`; those use the one-sided difference on the side nearer
    /// the analytic value, since the central difference straddles the kink.
    pub kinks: usize,
}

impl ReplayComparison {
    pub fn relative_error(&self) -> f64 {
        relative_error(&self.analytic, &self.numeric)
    }
}

/// Forward and backward differences disagreeing by more than this fraction
/// of their size marks a kink; on smooth stretches they differ by `O(ε·f'')`.
const KINK_RATIO: f64 = 0.1;
/// Size below which a gap between the one-sided differences is round-off.
const KINK_FLOOR: f64 = 1e-6;

#[allow(clippy::too_many_arguments)]
pub fn compare_with_replay<P: BilevelProblem>(
    problem: &P,
    start: &Start,
    theta: &[Tensor],
    batches: &[&P::Batch],
    pval: &P::Batch,
    inner: &InnerConfig,
    theta_l2: f64,
    fd_step: f64,
) -> Result<ReplayComparison> {
    let analytic: Vec<f64> =
        windowed_hypergradient(problem, start, theta, batches, pval, inner, theta_l2)?
            .iter()
            .flat_map(|t| t.data().to_vec())
            .collect();
    let mid = replay_objective(problem, start, theta, batches, pval, inner, theta_l2)?;
    let mut probe = theta.to_vec();
    let mut numeric = Vec::with_capacity(analytic.len());
    let mut kinks = 0;
    for ti in 0..probe.len() {
        for i in 0..probe[ti].numel() {
            let orig = probe[ti].data()[i];
            probe[ti].data_mut()[i] = orig + fd_step;
            let up = replay_objective(problem, start, &probe, batches, pval, inner, theta_l2)?;
            probe[ti].data_mut()[i] = orig - fd_step;
            let down = replay_objective(problem, start, &probe, batches, pval, inner, theta_l2)?;
            probe[ti].data_mut()[i] = orig;
            let forward = (up - mid) / fd_step;
            let backward = (mid - down) / fd_step;
            let size = forward.abs().max(backward.abs()).max(KINK_FLOOR);
            if (forward - backward).abs() > KINK_RATIO * size {
                kinks += 1;
                let a = analytic[numeric.len()];
                numeric.push(if (forward - a).abs() < (backward - a).abs() {
                    forward
                } else {
                    backward
                });
            } else {
                numeric.push((up - down) / (2.0 * fd_step));
            }
        }
    }
    Ok(ReplayComparison {
        analytic,
        numeric,
        kinks,
    })
}

/// `L_tr(ω; θ) = (ω − θ)²`, `L_pval(ω) = ω²`.
pub struct QuadraticToy;

impl BilevelProblem for QuadraticToy {
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

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct QuadraticCheck {
    pub hypergradient: f64,
    pub analytic: f64,
    pub finite_difference: f64,
}

/// One gradient step of size 0.1 from `ω = 1` at `θ = 0`: `ω₁ = 0.8` and
/// `dL_pval/dθ = 2·ω₁·0.2 = 0.32`.
pub fn quadratic_toy() -> Result<QuadraticCheck> {
    let inner = InnerConfig {
        sgd: Sgd::new(0.1, 0.0, 0.0)?,
        l2: 0.0,
    };
    let start = Start {
        omega: vec![Tensor::scalar(1.0)],
        momentum: vec![Tensor::scalar(0.0)],
        first_step: 0,
    };
    let theta = vec![Tensor::scalar(0.0)];
    let h = windowed_hypergradient(&QuadraticToy, &start, &theta, &[&()], &(), &inner, 0.0)?;
    let eps = 1e-6;
    let at = |t: f64| {
        replay_objective(
            &QuadraticToy,
            &start,
            &[Tensor::scalar(t)],
            &[&()],
            &(),
            &inner,
            0.0,
        )
    };
    Ok(QuadraticCheck {
        hypergradient: h[0].item()?,
        analytic: 2.0 * 0.8 * 0.2,
        finite_difference: (at(eps)? - at(-eps)?) / (2.0 * eps),
    })
}

/// Logistic regression on inputs shifted by `θ`: the training loss sees
/// `x + θ`, the pseudo-validation loss sees clean held-out inputs.
pub struct LogisticToy {
    pub x_train: Tensor,
    pub y_train: Tensor,
    pub x_val: Tensor,
    pub y_val: Tensor,
}

fn logistic_loss(tape: &mut Tape, x: Var, w: Var, y: &Tensor) -> Result<Var> {
    let z = tape.matmul(x, w)?;
    let y = tape.constant(y.clone());
    let sp = tape.softplus(z)?;
    let yz = tape.mul(y, z)?;
    let per = tape.sub(sp, yz)?;
    Ok(tape.mean(per)?)
}

impl BilevelProblem for LogisticToy {
    type Batch = ();

    fn train_loss(
        &self,
        tape: &mut Tape,
        omega: &[Var],
        theta: &[Var],
        _: &(),
        _: u64,
    ) -> Result<TrainLoss> {
        let x = tape.constant(self.x_train.clone());
        let shift = tape.broadcast_to(theta[0], self.x_train.shape())?;
        let x = tape.add(x, shift)?;
        Ok(TrainLoss {
            loss: logistic_loss(tape, x, omega[0], &self.y_train)?,
            phi_norm: None,
        })
    }

    fn outer_loss(&self, tape: &mut Tape, omega: &[Var], _: &()) -> Result<Var> {
        let x = tape.constant(self.x_val.clone());
        logistic_loss(tape, x, omega[0], &self.y_val)
    }
}

fn labels(rng: &mut ChaCha8Rng, n: usize) -> Tensor {
    let y = (0..n)
        .map(|_| f64::from(u8::from(rng.gen_bool(0.5))))
        .collect();
    Tensor::new(vec![n, 1], y).expect("column of labels")
}

/// Inner settings for the oracle instances: full momentum, a step size small
/// enough that a few unrolled steps stay far from chaotic growth.
fn momentum_cfg(lr: f64) -> Result<InnerConfig> {
    Ok(InnerConfig {
        sgd: Sgd::new(lr, 0.9, 0.0)?,
        l2: 5e-4,
    })
}

const LOGISTIC_LR: f64 = 0.02;
/// The virtual-node GIN tolerates far smaller steps than the logistic toy.
const GNN_LR: f64 = 0.002;

/// Relative error of the hypergradient against replay differences for a
/// random logistic instance unrolled over `window` steps.
pub fn check_logistic(window: usize, seed: u64) -> Result<HyperReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let toy = LogisticToy {
        x_train: uniform(&mut rng, 8, 3, 1.0),
        y_train: labels(&mut rng, 8),
        x_val: uniform(&mut rng, 6, 3, 1.0),
        y_val: labels(&mut rng, 6),
    };
    let start = Start {
        omega: vec![uniform(&mut rng, 3, 1, 1.0)],
        momentum: vec![uniform(&mut rng, 3, 1, 0.1)],
        first_step: 0,
    };
    let theta = vec![uniform(&mut rng, 1, 3, 0.5)];
    let batches = vec![&(); window];
    let c = compare_with_replay(
        &toy,
        &start,
        &theta,
        &batches,
        &(),
        &momentum_cfg(LOGISTIC_LR)?,
        0.01,
        1e-5,
    )?;
    Ok(report(format!("logistic j={window}"), &c, 1e-3))
}

fn report(name: String, c: &ReplayComparison, tolerance: f64) -> HyperReport {
    scalar_report(name, c.relative_error(), tolerance, c.kinks)
}

fn scalar_report(name: String, err: f64, tolerance: f64, kinks: usize) -> HyperReport {
    HyperReport {
        name,
        max_rel_error: err,
        tolerance,
        passed: err <= tolerance,
        kinks,
    }
}

/// Shrinks the generator's random init so `φ` stays small next to the
/// embeddings; full-size perturbations saturate the logits and the
/// hypergradient vanishes.
const THETA_SCALE: f64 = 0.1;

/// Two training graphs and two pseudo-validation graphs, embedding width 4,
/// a GIN-fed generator with the bias transform, unrolled over `window` steps.
pub fn check_gnn(window: usize, seed: u64) -> Result<HyperReport> {
    let graphs = synth_motif_dataset(&SynthConfig {
        n_graphs: 4,
        nodes_range: (7, 9),
        label_rule: Default::default(),
        noise_rate: 0.0,
        seed,
    })?;
    let model = Classifier::new(
        ModelConfig {
            emb_dim: 4,
            num_layers: 2,
            ..ModelConfig::default()
        },
        NodeVocab::default(),
    )?;
    let aug = Augmenter::new(
        AugmenterConfig {
            generation: GenerationType::Gin,
            transform: TransformType::Bias,
            latent_dim: 3,
            hidden_dim: 6,
            zero_init: false,
        },
        4,
    )?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9E37);
    let omega = model.init(&mut rng).tensors().to_vec();
    let momentum = omega
        .iter()
        .map(|t| uniform(&mut rng, t.rows(), t.cols(), 0.01))
        .collect::<Vec<_>>();
    let momentum = momentum
        .into_iter()
        .zip(&omega)
        .map(|(m, t)| Tensor::new(t.shape().to_vec(), m.into_data()))
        .collect::<std::result::Result<Vec<_>, _>>()?;
    let theta: Vec<Tensor> = aug
        .init(&mut rng)
        .tensors()
        .iter()
        .map(|t| t.map(|v| v * THETA_SCALE))
        .collect();
    let train = GraphBatch::new(&[&graphs[0], &graphs[1]])?;
    let pval = GraphBatch::new(&[&graphs[2], &graphs[3]])?;
    let problem = ClassifierProblem {
        model: &model,
        augmentation: Augmentation::Learned(&aug),
        noise_seed: seed,
    };
    let start = Start {
        omega,
        momentum,
        first_step: 0,
    };
    let batches = vec![&train; window];
    let c = compare_with_replay(
        &problem,
        &start,
        &theta,
        &batches,
        &pval,
        &momentum_cfg(GNN_LR)?,
        0.01,
        1e-5,
    )?;
    Ok(report(format!("gnn j={window}"), &c, 1e-3))
}

/// Every hypergradient oracle: the quadratic toy, then logistic and GNN
/// instances for each window length.
pub fn check_all(windows: &[usize], seed: u64) -> Result<Vec<HyperReport>> {
    let q = quadratic_toy()?;
    let mut out = vec![
        scalar_report(
            "quadratic analytic".into(),
            (q.hypergradient - q.analytic).abs(),
            1e-10,
            0,
        ),
        scalar_report(
            "quadratic finite difference".into(),
            (q.hypergradient - q.finite_difference).abs(),
            1e-6,
            0,
        ),
    ];
    for &j in windows {
        out.push(check_logistic(j, seed)?);
        out.push(check_gnn(j, seed)?);
    }
    Ok(out)
}
