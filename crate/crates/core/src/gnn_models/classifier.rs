use gabo_autodiff::{Tape, Tensor, Var};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::batch::GraphBatch;
use super::layers::{gin_layer, mean_pool, virtual_node_pass, GinEps, Mlp};
use crate::error::{Error, Result};
use crate::graph_data::NodeVocab;
use crate::params::{fan_in_uniform, glorot, ParamSet};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub emb_dim: usize,
    pub num_layers: usize,
    pub gin_eps: f64,
    pub train_eps: bool,
    pub virtual_node: bool,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            emb_dim: 256,
            num_layers: 5,
            gin_eps: 0.0,
            train_eps: false,
            virtual_node: true,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.emb_dim == 0 {
            return Err(Error::config("model.emb_dim", "must be at least 1"));
        }
        if self.num_layers == 0 {
            return Err(Error::config("model.num_layers", "must be at least 1"));
        }
        if !self.gin_eps.is_finite() {
            return Err(Error::config("model.gin_eps", "must be finite"));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug)]
struct MlpSlots {
    w1: usize,
    b1: usize,
    w2: usize,
    b2: usize,
}

impl MlpSlots {
    fn bind(&self, omega: &[Var]) -> Mlp {
        Mlp::TwoLayer {
            w1: omega[self.w1],
            b1: omega[self.b1],
            w2: omega[self.w2],
            b2: omega[self.b2],
        }
    }
}

#[derive(Clone, Debug)]
struct Layout {
    atom: Vec<usize>,
    gin: Vec<(MlpSlots, Option<usize>)>,
    vn_init: Option<usize>,
    vn: Vec<MlpSlots>,
    head_w: usize,
    head_b: usize,
}

/// Atom encoder, `num_layers` GIN layers with an optional virtual node, mean
/// pooling and a linear head producing one logit per graph.
#[derive(Clone, Debug)]
pub struct Classifier {
    cfg: ModelConfig,
    vocab: NodeVocab,
    layout: Layout,
    names: Vec<(String, Vec<usize>)>,
}

impl Classifier {
    pub fn new(cfg: ModelConfig, vocab: NodeVocab) -> Result<Self> {
        cfg.validate()?;
        let d = cfg.emb_dim;
        let mut names: Vec<(String, Vec<usize>)> = Vec::new();
        let mut slot = |name: String, shape: Vec<usize>| {
            names.push((name, shape));
            names.len() - 1
        };
        let atom = vocab
            .sizes
            .iter()
            .enumerate()
            .map(|(k, &v)| slot(format!("atom_emb.{k}"), vec![v, d]))
            .collect();
        let mlp = |prefix: String, slot: &mut dyn FnMut(String, Vec<usize>) -> usize| MlpSlots {
            w1: slot(format!("{prefix}.w1"), vec![d, 2 * d]),
            b1: slot(format!("{prefix}.b1"), vec![2 * d]),
            w2: slot(format!("{prefix}.w2"), vec![2 * d, d]),
            b2: slot(format!("{prefix}.b2"), vec![d]),
        };
        let mut gin = Vec::with_capacity(cfg.num_layers);
        for l in 0..cfg.num_layers {
            let m = mlp(format!("gin.{l}"), &mut slot);
            let eps = cfg.train_eps.then(|| slot(format!("gin.{l}.eps"), vec![1]));
            gin.push((m, eps));
        }
        let (vn_init, vn) = if cfg.virtual_node {
            let init = slot("vn.init".into(), vec![1, d]);
            let layers = (0..cfg.num_layers - 1)
                .map(|l| mlp(format!("vn.{l}"), &mut slot))
                .collect();
            (Some(init), layers)
        } else {
            (None, Vec::new())
        };
        let head_w = slot("head.w".into(), vec![d, 1]);
        let head_b = slot("head.b".into(), vec![1]);
        Ok(Self {
            layout: Layout {
                atom,
                gin,
                vn_init,
                vn,
                head_w,
                head_b,
            },
            cfg,
            vocab,
            names,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.cfg
    }

    pub fn emb_dim(&self) -> usize {
        self.cfg.emb_dim
    }

    /// Glorot embedding tables, MLP weights uniform on `±1/√fan_in`, zero
    /// biases and virtual-node state, `ε` at its configured starting value.
    /// The virtual-node MLP output layers and the head start at zero. Sum
    /// aggregation compounds activation scale across layers; without these
    /// choices initial logits reach the tens and some seeds diverge.
    pub fn init(&self, rng: &mut impl Rng) -> ParamSet {
        let mut set = ParamSet::new();
        for (name, shape) in &self.names {
            let zero = name == "vn.init"
                || name == "head.w"
                || (name.starts_with("vn.") && name.ends_with(".w2"));
            let t = if name.ends_with(".eps") {
                Tensor::vector(vec![self.cfg.gin_eps])
            } else if shape.len() != 2 || zero {
                Tensor::zeros(shape)
            } else if name.starts_with("atom_emb.") {
                glorot(rng, shape[0], shape[1])
            } else {
                fan_in_uniform(rng, shape[0], shape[1])
            };
            set.push(name.clone(), t);
        }
        set
    }

    /// Checks that `params` has this model's names and shapes.
    pub fn check_params(&self, params: &ParamSet) -> Result<()> {
        let ok = params.len() == self.names.len()
            && self
                .names
                .iter()
                .zip(params.names().iter().zip(params.tensors()))
                .all(|((n, s), (pn, t))| n == pn && s.as_slice() == t.shape());
        if ok {
            Ok(())
        } else {
            Err(Error::Model(
                "parameter set does not match the classifier layout".into(),
            ))
        }
    }

    /// Sum over the nine atom fields of each node's table row.
    pub fn encode_atoms(&self, tape: &mut Tape, omega: &[Var], batch: &GraphBatch) -> Result<Var> {
        if batch.codes().len() != self.vocab.num_fields() {
            return Err(Error::Model(format!(
                "batch has {} atom fields, model expects {}",
                batch.codes().len(),
                self.vocab.num_fields()
            )));
        }
        let mut total: Option<Var> = None;
        for (field, (codes, &size)) in batch.codes().iter().zip(&self.vocab.sizes).enumerate() {
            if let Some(node) = codes.iter().position(|&c| c >= size) {
                return Err(Error::OutOfVocab {
                    node,
                    field,
                    code: codes[node] as u32,
                    vocab: size,
                });
            }
            let rows = tape.index_select(omega[self.layout.atom[field]], codes)?;
            total = Some(match total {
                None => rows,
                Some(acc) => tape.add(acc, rows)?,
            });
        }
        match total {
            Some(t) => Ok(t),
            None => Ok(tape.constant(Tensor::zeros(&[batch.num_nodes(), self.cfg.emb_dim]))),
        }
    }

    /// Message passing, pooling and head, starting from node embeddings.
    /// Returns logits of shape `[num_graphs, 1]`.
    pub fn forward_from_embeddings(
        &self,
        tape: &mut Tape,
        omega: &[Var],
        h0: Var,
        batch: &GraphBatch,
    ) -> Result<Var> {
        let g = batch.num_graphs();
        let d = self.cfg.emb_dim;
        let mut vn = match self.layout.vn_init {
            Some(i) => Some(tape.broadcast_to(omega[i], &[g, d])?),
            None => None,
        };
        let mut h = h0;
        let last = self.cfg.num_layers - 1;
        for (l, (slots, eps_slot)) in self.layout.gin.iter().enumerate() {
            if l > 0 {
                if let Some(state) = vn {
                    let mlp = self.layout.vn[l - 1].bind(omega);
                    let (h2, vn2) = virtual_node_pass(tape, h, batch.membership(), state, &mlp)?;
                    h = h2;
                    vn = Some(vn2);
                }
            }
            let eps = match eps_slot {
                Some(i) => GinEps::Learned(omega[*i]),
                None => GinEps::Fixed(self.cfg.gin_eps),
            };
            h = gin_layer(tape, h, batch.src(), batch.dst(), eps, &slots.bind(omega))?;
            if l < last {
                h = tape.relu(h)?;
            }
        }
        let pooled = mean_pool(tape, h, batch.membership(), batch.counts())?;
        Ok(tape.affine(pooled, omega[self.layout.head_w], omega[self.layout.head_b])?)
    }

    pub fn forward(&self, tape: &mut Tape, omega: &[Var], batch: &GraphBatch) -> Result<Var> {
        let h0 = self.encode_atoms(tape, omega, batch)?;
        self.forward_from_embeddings(tape, omega, h0, batch)
    }

    /// Logits for every graph of the batch, without recording gradients.
    pub fn predict(&self, params: &ParamSet, batch: &GraphBatch) -> Result<Vec<f64>> {
        let mut tape = Tape::new();
        let omega = params.bind(&mut tape, false);
        let logits = self.forward(&mut tape, &omega, batch)?;
        Ok(tape.value(logits)?.data().to_vec())
    }
}

/// Mean binary cross-entropy on logits, `softplus(z) − y·z`.
pub fn bce_loss(tape: &mut Tape, logits: Var, labels: &Tensor) -> Result<Var> {
    if tape.shape(logits)? != labels.shape() {
        return Err(Error::Model(format!(
            "bce_loss: logits {:?} vs labels {:?}",
            tape.shape(logits)?,
            labels.shape()
        )));
    }
    if labels.data().iter().any(|&y| y != 0.0 && y != 1.0) {
        return Err(Error::Model("bce_loss: labels must be 0 or 1".into()));
    }
    let y = tape.constant(labels.clone());
    let sp = tape.softplus(logits)?;
    let yz = tape.mul(y, logits)?;
    let per = tape.sub(sp, yz)?;
    Ok(tape.mean(per)?)
}
