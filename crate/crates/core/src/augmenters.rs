//! Learned per-node augmentation: a small generator maps noise (optionally
//! with centrality features or a GIN encoding) to transform parameters `φ`,
//! which then perturb the atom embeddings. Also the fixed uniform-noise
//! baseline.

use gabo_autodiff::{Tape, Tensor, Var};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gnn_models::{gin_layer, GinEps, GraphBatch, Mlp};
use crate::params::{glorot, ParamSet};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GenerationType {
    Noise,
    Classic,
    Gin,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TransformType {
    /// `h + φ`
    Bias,
    /// `φ₁ ⊙ h + φ₂`
    ElementWise,
    /// `(1 + φ₁) ⊙ h + φ₂`
    ShiftedElementWise,
}

impl GenerationType {
    pub const ALL: [GenerationType; 3] = [Self::Noise, Self::Classic, Self::Gin];

    pub fn name(self) -> &'static str {
        match self {
            Self::Noise => "noise",
            Self::Classic => "classic",
            Self::Gin => "gin",
        }
    }
}

impl TransformType {
    pub const ALL: [TransformType; 3] = [Self::Bias, Self::ElementWise, Self::ShiftedElementWise];

    pub fn name(self) -> &'static str {
        match self {
            Self::Bias => "bias",
            Self::ElementWise => "element_wise",
            Self::ShiftedElementWise => "shifted_element_wise",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AugmenterConfig {
    pub generation: GenerationType,
    pub transform: TransformType,
    pub latent_dim: usize,
    pub hidden_dim: usize,
    /// Start from output weights that produce the identity transform.
    pub zero_init: bool,
}

impl Default for AugmenterConfig {
    fn default() -> Self {
        Self {
            generation: GenerationType::Gin,
            transform: TransformType::Bias,
            latent_dim: 10,
            hidden_dim: 128,
            zero_init: false,
        }
    }
}

impl AugmenterConfig {
    pub fn validate(&self) -> Result<()> {
        if self.latent_dim == 0 {
            return Err(Error::config("augmenter.latent_dim", "must be at least 1"));
        }
        if self.hidden_dim == 0 {
            return Err(Error::config("augmenter.hidden_dim", "must be at least 1"));
        }
        Ok(())
    }
}

/// Transform parameters, one row per node.
#[derive(Clone, Copy, Debug)]
pub enum Phi {
    Bias(Var),
    Pair(Var, Var),
}

#[derive(Clone, Debug)]
pub struct Augmenter {
    cfg: AugmenterConfig,
    emb_dim: usize,
}

const GEN_W1: usize = 0;
const GEN_B1: usize = 1;
const GEN_W2: usize = 2;
const GEN_B2: usize = 3;
const GIN_FIRST: usize = 4;

impl Augmenter {
    pub fn new(cfg: AugmenterConfig, emb_dim: usize) -> Result<Self> {
        cfg.validate()?;
        if emb_dim == 0 {
            return Err(Error::config("model.emb_dim", "must be at least 1"));
        }
        Ok(Self { cfg, emb_dim })
    }

    pub fn config(&self) -> &AugmenterConfig {
        &self.cfg
    }

    pub fn input_dim(&self) -> usize {
        self.cfg.latent_dim
            + match self.cfg.generation {
                GenerationType::Noise => 0,
                GenerationType::Classic => 4,
                GenerationType::Gin => self.emb_dim,
            }
    }

    pub fn output_dim(&self) -> usize {
        match self.cfg.transform {
            TransformType::Bias => self.emb_dim,
            _ => 2 * self.emb_dim,
        }
    }

    pub fn init(&self, rng: &mut impl Rng) -> ParamSet {
        let (h, out, d) = (self.cfg.hidden_dim, self.output_dim(), self.emb_dim);
        let mut set = ParamSet::new();
        set.push("gen.w1", glorot(rng, self.input_dim(), h));
        set.push("gen.b1", Tensor::zeros(&[h]));
        if self.cfg.zero_init {
            set.push("gen.w2", Tensor::zeros(&[h, out]));
            let mut b2 = vec![0.0; out];
            if self.cfg.transform == TransformType::ElementWise {
                b2[..d].fill(1.0);
            }
            set.push("gen.b2", Tensor::vector(b2));
        } else {
            set.push("gen.w2", glorot(rng, h, out));
            set.push("gen.b2", Tensor::zeros(&[out]));
        }
        if self.cfg.generation == GenerationType::Gin {
            set.push("gen_gin.w1", glorot(rng, d, d));
            set.push("gen_gin.b1", Tensor::zeros(&[d]));
            set.push("gen_gin.w2", glorot(rng, d, d));
            set.push("gen_gin.b2", Tensor::zeros(&[d]));
        }
        set
    }

    /// Per-node generator input: uniform noise in `[-1, 1]`, concatenated
    /// with the batch's centrality features (classic) or a GIN encoding of
    /// `atom_emb` (gin). `atom_emb` is only read in gin mode.
    pub fn generator_input(
        &self,
        tape: &mut Tape,
        theta: &[Var],
        batch: &GraphBatch,
        atom_emb: Option<Var>,
        rng: &mut impl Rng,
    ) -> Result<Var> {
        let n = batch.num_nodes();
        let z = uniform(rng, n, self.cfg.latent_dim, 1.0);
        let z = tape.constant(z);
        match self.cfg.generation {
            GenerationType::Noise => Ok(z),
            GenerationType::Classic => {
                let feats = batch.classic().ok_or_else(|| {
                    Error::Model("classic generation needs cached centrality features".into())
                })?;
                let feats = tape.constant(feats.clone());
                Ok(tape.concat_cols(&[z, feats])?)
            }
            GenerationType::Gin => {
                let h = atom_emb
                    .ok_or_else(|| Error::Model("gin generation needs atom embeddings".into()))?;
                let mlp = Mlp::TwoLayer {
                    w1: theta[GIN_FIRST],
                    b1: theta[GIN_FIRST + 1],
                    w2: theta[GIN_FIRST + 2],
                    b2: theta[GIN_FIRST + 3],
                };
                let encoded =
                    gin_layer(tape, h, batch.src(), batch.dst(), GinEps::Fixed(0.0), &mlp)?;
                Ok(tape.concat_cols(&[z, encoded])?)
            }
        }
    }

    /// Row-wise generator MLP, split into `(φ₁, φ₂)` for the multiplicative modes.
    pub fn generate_phi(&self, tape: &mut Tape, theta: &[Var], input: Var) -> Result<Phi> {
        let width = tape.shape(input)?.get(1).copied().unwrap_or(0);
        if width != self.input_dim() {
            return Err(Error::Model(format!(
                "generator expects {} input columns, got {width}",
                self.input_dim()
            )));
        }
        let mlp = Mlp::TwoLayer {
            w1: theta[GEN_W1],
            b1: theta[GEN_B1],
            w2: theta[GEN_W2],
            b2: theta[GEN_B2],
        };
        let out = mlp.apply(tape, input)?;
        Ok(match self.cfg.transform {
            TransformType::Bias => Phi::Bias(out),
            _ => {
                let d = self.emb_dim;
                Phi::Pair(tape.slice_cols(out, 0, d)?, tape.slice_cols(out, d, d)?)
            }
        })
    }

    /// Full augmentation of `h0`. Returns the transformed embeddings and the
    /// mean over nodes of `‖φ_i‖₂`.
    pub fn augment(
        &self,
        tape: &mut Tape,
        theta: &[Var],
        h0: Var,
        batch: &GraphBatch,
        rng: &mut impl Rng,
    ) -> Result<(Var, f64)> {
        // Not detached: φ stays a differentiable function of ω, so the
        // unrolled inner steps are exactly what the outer step differentiates.
        let atom_emb = (self.cfg.generation == GenerationType::Gin).then_some(h0);
        let input = self.generator_input(tape, theta, batch, atom_emb, rng)?;
        let phi = self.generate_phi(tape, theta, input)?;
        let norm = phi_norm_mean(tape, &phi)?;
        Ok((apply_transform(tape, h0, &phi, self.cfg.transform)?, norm))
    }
}

/// `n × cols` matrix with entries uniform in `[-bound, bound]`.
pub fn uniform(rng: &mut impl Rng, n: usize, cols: usize, bound: f64) -> Tensor {
    let data = (0..n * cols)
        .map(|_| {
            if bound > 0.0 {
                rng.gen_range(-bound..=bound)
            } else {
                0.0
            }
        })
        .collect();
    Tensor::new(vec![n, cols], data).expect("shape and data built together")
}

fn phi_norm_mean(tape: &Tape, phi: &Phi) -> Result<f64> {
    let parts: Vec<&Tensor> = match *phi {
        Phi::Bias(p) => vec![tape.value(p)?],
        Phi::Pair(a, b) => vec![tape.value(a)?, tape.value(b)?],
    };
    let n = parts[0].rows();
    if n == 0 {
        return Ok(0.0);
    }
    let total: f64 = (0..n)
        .map(|r| {
            parts
                .iter()
                .map(|t| t.row(r).iter().map(|x| x * x).sum::<f64>())
                .sum::<f64>()
                .sqrt()
        })
        .sum();
    Ok(total / n as f64)
}

pub fn apply_transform(
    tape: &mut Tape,
    h: Var,
    phi: &Phi,
    transform: TransformType,
) -> Result<Var> {
    match (transform, *phi) {
        (TransformType::Bias, Phi::Bias(p)) => Ok(tape.add(h, p)?),
        (TransformType::ElementWise, Phi::Pair(a, b)) => {
            let scaled = tape.mul(a, h)?;
            Ok(tape.add(scaled, b)?)
        }
        (TransformType::ShiftedElementWise, Phi::Pair(a, b)) => {
            let scaled = tape.mul(a, h)?;
            let shifted = tape.add(h, scaled)?;
            Ok(tape.add(shifted, b)?)
        }
        _ => Err(Error::Model(format!(
            "φ layout does not fit the {} transform",
            transform.name()
        ))),
    }
}

/// `h + u` with `u ~ U[-1, 1]` drawn independently per entry.
pub fn baseline_noise_augment(tape: &mut Tape, h: Var, rng: &mut impl Rng) -> Result<Var> {
    let shape = tape.shape(h)?.to_vec();
    let u = uniform(rng, shape[0], shape.get(1).copied().unwrap_or(1), 1.0);
    let u = tape.constant(u);
    Ok(tape.add(h, u)?)
}
