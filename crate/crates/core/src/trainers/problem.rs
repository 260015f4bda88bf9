use gabo_autodiff::{Tape, Var};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::bilevel::{BilevelProblem, TrainLoss};
use crate::augmenters::{baseline_noise_augment, Augmenter};
use crate::error::Result;
use crate::gnn_models::{bce_loss, Classifier, GraphBatch};

#[derive(Clone, Copy, Debug)]
pub enum Augmentation<'a> {
    None,
    /// Fixed `U[-1, 1]` noise added to the atom embeddings.
    UniformNoise,
    /// Generator-produced transform with parameters `θ`.
    Learned(&'a Augmenter),
}

/// Graph classification as a bilevel problem: `ω` are the classifier
/// weights, `θ` the augmenter weights (empty unless learned).
#[derive(Clone, Copy, Debug)]
pub struct ClassifierProblem<'a> {
    pub model: &'a Classifier,
    pub augmentation: Augmentation<'a>,
    /// Noise for step `s` comes from stream `s` of a generator seeded here,
    /// so any step can be replayed exactly.
    pub noise_seed: u64,
}

impl ClassifierProblem<'_> {
    pub fn noise_rng(&self, step: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.noise_seed);
        rng.set_stream(step);
        rng
    }
}

impl BilevelProblem for ClassifierProblem<'_> {
    type Batch = GraphBatch;

    fn train_loss(
        &self,
        tape: &mut Tape,
        omega: &[Var],
        theta: &[Var],
        batch: &GraphBatch,
        step: u64,
    ) -> Result<TrainLoss> {
        let h0 = self.model.encode_atoms(tape, omega, batch)?;
        let (h, phi_norm) = match self.augmentation {
            Augmentation::None => (h0, None),
            Augmentation::UniformNoise => (
                baseline_noise_augment(tape, h0, &mut self.noise_rng(step))?,
                None,
            ),
            Augmentation::Learned(aug) => {
                let (h, norm) = aug.augment(tape, theta, h0, batch, &mut self.noise_rng(step))?;
                (h, Some(norm))
            }
        };
        let logits = self.model.forward_from_embeddings(tape, omega, h, batch)?;
        Ok(TrainLoss {
            loss: bce_loss(tape, logits, &batch.label_column())?,
            phi_norm,
        })
    }

    fn outer_loss(&self, tape: &mut Tape, omega: &[Var], batch: &GraphBatch) -> Result<Var> {
        let logits = self.model.forward(tape, omega, batch)?;
        bce_loss(tape, logits, &batch.label_column())
    }
}
