use std::time::Instant;

use gabo_autodiff::{kernels, Sgd, Tensor};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::bilevel::{
    inner_step, outer_step, InnerConfig, InnerOutcome, OuterConfig, UnrollWindow,
};
use super::flag::flag_train_step;
use super::problem::{Augmentation, ClassifierProblem};
use super::schedule::{EarlyStopping, MultiStepLr};
use crate::augmenters::{Augmenter, GenerationType};
use crate::config::{ExperimentConfig, Regime, SplitScheme};
use crate::error::{Error, Result};
use crate::gnn_models::{roc_auc, Classifier, GraphBatch};
use crate::graph_data::{split_random, split_scaffold, Dataset, DatasetSplit, MolGraph};
use crate::graph_features::{classic_features, ClassicFeatures};
use crate::params::ParamSet;

const EVAL_BATCH: usize = 256;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub train_loss: f64,
    /// `None` when the validation split holds a single class.
    pub val_auc: Option<f64>,
    pub lr: f64,
    /// Mean per-node `‖φ‖₂` over the epoch's training batches (learned
    /// augmentation only).
    pub phi_l2_mean: Option<f64>,
    pub wall_ms: u64,
    /// The learning rate was scaled down at the start of this epoch.
    pub lr_drop: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub regime: Regime,
    pub seed: u64,
    pub best_epoch: usize,
    pub best_val_auc: Option<f64>,
    pub test_auc: Option<f64>,
    pub stopped_epoch: usize,
    pub epochs_run: usize,
    /// `val_auc`, or `neg_val_loss` when validation AUC is undefined.
    pub selection_metric: String,
    pub split_sizes: [usize; 4],
    pub warnings: Vec<String>,
}

#[derive(Clone, Debug)]
pub struct ExperimentResult {
    pub metrics: Vec<EpochMetrics>,
    pub summary: Summary,
    /// Classifier weights from the best validation epoch.
    pub classifier: ParamSet,
    /// Final augmenter weights (learned augmentation only).
    pub augmenter: Option<ParamSet>,
}

fn seeded(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

struct Evaluator {
    batches: Vec<GraphBatch>,
    labels: Vec<u8>,
}

impl Evaluator {
    fn new(graphs: &[MolGraph], indices: &[usize]) -> Result<Self> {
        let batches = indices
            .chunks(EVAL_BATCH)
            .map(|c| GraphBatch::new(&c.iter().map(|&i| &graphs[i]).collect::<Vec<_>>()))
            .collect::<Result<_>>()?;
        Ok(Self {
            batches,
            labels: indices.iter().map(|&i| graphs[i].label()).collect(),
        })
    }

    fn logits(&self, model: &Classifier, params: &ParamSet) -> Result<Vec<f64>> {
        let mut out = Vec::with_capacity(self.labels.len());
        for b in &self.batches {
            out.extend(model.predict(params, b)?);
        }
        Ok(out)
    }

    fn bce(&self, logits: &[f64]) -> f64 {
        let total: f64 = logits
            .iter()
            .zip(&self.labels)
            .map(|(&z, &y)| kernels::softplus(z) - f64::from(y) * z)
            .sum();
        total / logits.len() as f64
    }
}

fn auc_or_none(scores: &[f64], labels: &[u8]) -> Result<Option<f64>> {
    match roc_auc(scores, labels) {
        Ok(a) => Ok(Some(a)),
        Err(Error::SingleClass { .. }) => Ok(None),
        Err(e) => Err(e),
    }
}

fn split_for(cfg: &ExperimentConfig, graphs: &[MolGraph]) -> Result<DatasetSplit> {
    let split = match cfg.split.scheme {
        SplitScheme::Random => split_random(graphs, cfg.split.fractions, cfg.seed)?,
        SplitScheme::Scaffold => split_scaffold(graphs, cfg.split.fractions, cfg.seed)?,
    };
    let mut needed = vec![
        ("train", &split.train),
        ("val", &split.val),
        ("test", &split.test),
    ];
    if cfg.regime == Regime::Gabo {
        needed.push(("pseudo_val", &split.pseudo_val));
    }
    for (name, part) in needed {
        if part.is_empty() {
            return Err(Error::Split(format!("the {name} split is empty")));
        }
    }
    Ok(split)
}

/// Trains one model under `cfg.regime` and evaluates the best-validation
/// weights on the test split.
pub fn run_experiment(cfg: &ExperimentConfig, data: &Dataset) -> Result<ExperimentResult> {
    cfg.validate()?;
    let graphs = &data.graphs;
    let split = split_for(cfg, graphs)?;
    let mut warnings = split.warnings.clone();

    let model = Classifier::new(cfg.model.clone(), data.vocab.clone())?;
    let init = model.init(&mut seeded(cfg.seed, 0));
    let mut omega: Vec<Tensor> = init.tensors().to_vec();
    let mut momentum = init.zeros_like();

    let augmenter = match cfg.regime {
        Regime::Gabo => Some(Augmenter::new(cfg.augmenter.clone(), model.emb_dim())?),
        _ => None,
    };
    let theta_init = augmenter.as_ref().map(|a| a.init(&mut seeded(cfg.seed, 1)));
    let mut theta: Vec<Tensor> = theta_init
        .as_ref()
        .map_or_else(Vec::new, |p| p.tensors().to_vec());
    let mut shuffle_rng = seeded(cfg.seed, 2);
    let noise_seed: u64 = seeded(cfg.seed, 3).gen();
    let mut flag_rng = seeded(cfg.seed, 4);

    let classic: Vec<Option<ClassicFeatures>> = match &augmenter {
        Some(a) if a.config().generation == GenerationType::Classic => {
            let mut c = vec![None; graphs.len()];
            for &i in &split.train {
                c[i] = Some(classic_features(&graphs[i])?);
            }
            c
        }
        _ => vec![None; graphs.len()],
    };
    let train_batch = |idx: &[usize]| -> Result<GraphBatch> {
        let refs: Vec<&MolGraph> = idx.iter().map(|&i| &graphs[i]).collect();
        let batch = GraphBatch::new(&refs)?;
        if classic[idx[0]].is_some() {
            let feats: Vec<&ClassicFeatures> =
                idx.iter().filter_map(|&i| classic[i].as_ref()).collect();
            batch.with_classic(&feats)
        } else {
            Ok(batch)
        }
    };
    let pval_batches: Vec<GraphBatch> = split
        .pseudo_val
        .chunks(cfg.train.batch_size)
        .map(|c| GraphBatch::new(&c.iter().map(|&i| &graphs[i]).collect::<Vec<_>>()))
        .collect::<Result<_>>()?;
    let val = Evaluator::new(graphs, &split.val)?;
    let test = Evaluator::new(graphs, &split.test)?;

    let problem = ClassifierProblem {
        model: &model,
        augmentation: match (cfg.regime, &augmenter) {
            (Regime::Gabo, Some(a)) => Augmentation::Learned(a),
            (Regime::NoiseBaseline, _) => Augmentation::UniformNoise,
            _ => Augmentation::None,
        },
        noise_seed,
    };

    let sched = MultiStepLr {
        base: cfg.train.lr,
        milestones: cfg.train.milestones.clone(),
        gamma: cfg.train.gamma,
    };
    let (k, j) = (cfg.bilevel.outer_period as u64, cfg.bilevel.window as u64);
    let mut window = match cfg.regime {
        Regime::Gabo => Some(UnrollWindow::new(cfg.bilevel.window)?),
        _ => None,
    };
    let mut stopper = EarlyStopping::new(cfg.train.patience);
    let mut best_omega = omega.clone();
    let mut metrics = Vec::new();
    let mut step: u64 = 0;
    let mut outer_count = 0usize;
    let mut single_class_val = false;

    for epoch in 0..cfg.train.epochs {
        let started = Instant::now();
        let factor = sched.factor(epoch);
        let lr = cfg.train.lr * factor;
        let inner = InnerConfig {
            sgd: Sgd::new(lr, cfg.train.momentum, 0.0)?,
            l2: cfg.train.classifier_l2,
        };
        let outer = OuterConfig {
            lr: cfg.bilevel.outer_lr * factor,
            l2: cfg.bilevel.augmenter_l2,
        };
        let mut order = split.train.clone();
        order.shuffle(&mut shuffle_rng);

        let (mut loss_sum, mut batches) = (0.0, 0usize);
        let (mut phi_sum, mut phi_count) = (0.0, 0usize);
        for chunk in order.chunks(cfg.train.batch_size) {
            let batch = train_batch(chunk)?;
            let out: InnerOutcome = match cfg.regime {
                Regime::Plain | Regime::NoiseBaseline => inner_step(
                    &problem,
                    &mut omega,
                    &mut momentum,
                    &[],
                    &batch,
                    step,
                    &inner,
                    None,
                )?,
                Regime::Flag => flag_train_step(
                    &model,
                    &mut omega,
                    &mut momentum,
                    &batch,
                    &cfg.flag,
                    &inner,
                    &mut flag_rng,
                    step,
                )?,
                Regime::Gabo => {
                    let pos = step % k;
                    let rec = if pos >= k - j { window.as_mut() } else { None };
                    let out = inner_step(
                        &problem,
                        &mut omega,
                        &mut momentum,
                        &theta,
                        &batch,
                        step,
                        &inner,
                        rec,
                    )?;
                    if pos == k - 1 {
                        let pval = &pval_batches[outer_count % pval_batches.len()];
                        let w = window.as_mut().expect("gabo keeps a window");
                        outer_step(&problem, w, &mut theta, pval, &outer)?;
                        outer_count += 1;
                    }
                    out
                }
            };
            if !out.loss.is_finite() || !omega.iter().all(Tensor::all_finite) {
                return Err(Error::Aborted(format!(
                    "step {step}: loss {} (gradient norm {}){}",
                    out.loss,
                    out.grad_norm,
                    if out.loss.is_finite() {
                        ", classifier weights non-finite after the update"
                    } else {
                        ""
                    }
                )));
            }
            loss_sum += out.loss;
            batches += 1;
            if let Some(p) = out.phi_norm {
                phi_sum += p;
                phi_count += 1;
            }
            step += 1;
        }

        let current = init.with_tensors(omega.clone())?;
        let logits = val.logits(&model, &current).map_err(|e| match e {
            Error::Autodiff(inner @ gabo_autodiff::AutodiffError::NonFinite { .. }) => {
                Error::Aborted(format!(
                    "epoch {epoch}: validation scoring failed ({inner}); last training loss {}",
                    loss_sum / batches.max(1) as f64
                ))
            }
            other => other,
        })?;
        let val_auc = auc_or_none(&logits, &val.labels)?;
        if val_auc.is_none() && !single_class_val {
            single_class_val = true;
            let msg = "validation split holds a single class; selecting on validation loss instead"
                .to_string();
            log::warn!("{msg}");
            warnings.push(msg);
        }
        let metric = val_auc.unwrap_or_else(|| -val.bce(&logits));
        if stopper.update(epoch, metric) {
            best_omega.clone_from(&omega);
        }
        let m = EpochMetrics {
            epoch,
            train_loss: loss_sum / batches.max(1) as f64,
            val_auc,
            lr,
            phi_l2_mean: (phi_count > 0).then(|| phi_sum / phi_count as f64),
            wall_ms: if cfg.log_wall_time {
                started.elapsed().as_millis() as u64
            } else {
                0
            },
            lr_drop: sched.is_drop(epoch),
        };
        log::info!(
            "epoch {epoch}: loss {:.4} val_auc {:?} lr {lr:.2e} phi {:?}",
            m.train_loss,
            m.val_auc,
            m.phi_l2_mean
        );
        metrics.push(m);
        if stopper.should_stop() {
            break;
        }
    }

    let best = init.with_tensors(best_omega)?;
    let test_logits = test.logits(&model, &best)?;
    let test_auc = auc_or_none(&test_logits, &test.labels)?;
    if test_auc.is_none() {
        warnings.push("test split holds a single class; test AUC undefined".into());
    }
    let best_epoch = stopper.best_epoch();
    let summary = Summary {
        regime: cfg.regime,
        seed: cfg.seed,
        best_epoch,
        best_val_auc: metrics.get(best_epoch).and_then(|m| m.val_auc),
        test_auc,
        stopped_epoch: metrics.last().map_or(0, |m| m.epoch),
        epochs_run: metrics.len(),
        selection_metric: if single_class_val {
            "neg_val_loss"
        } else {
            "val_auc"
        }
        .into(),
        split_sizes: split.sizes(),
        warnings,
    };
    let augmenter = match theta_init {
        Some(p) => Some(p.with_tensors(theta)?),
        None => None,
    };
    Ok(ExperimentResult {
        metrics,
        summary,
        classifier: best,
        augmenter,
    })
}
