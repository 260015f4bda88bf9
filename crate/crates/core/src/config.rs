//! Experiment configuration. Every field has a default; unknown keys are
//! rejected so that typos fail loudly.
//!
//! | key | default |
//! |---|---|
//! | `regime` | `gabo` |
//! | `seed` | 0 |
//! | `split.scheme` / `split.fractions` | `random` / `[0.72, 0.08, 0.1, 0.1]` |
//! | `model.emb_dim`, `num_layers`, `gin_eps`, `train_eps`, `virtual_node` | 256, 5, 0, false, true |
//! | `augmenter.generation`, `transform`, `latent_dim`, `hidden_dim`, `zero_init` | `gin`, `bias`, 10, 128, false |
//! | `train.epochs`, `patience`, `batch_size` | 200, 30, 32 |
//! | `train.lr`, `momentum`, `milestones`, `gamma` | 0.1, 0.9, `[60, 120, 160]`, 0.2 |
//! | `train.classifier_l2` | 5e-4 |
//! | `bilevel.outer_lr`, `outer_period`, `window`, `augmenter_l2` | 0.01, 10, 4, 0.01 |
//! | `flag.ascent_steps`, `step_size`, `ascent_rule` | 3, 1e-3, `sign` |
//! | `log_wall_time` | false |

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::augmenters::AugmenterConfig;
use crate::error::{Error, Result};
use crate::gnn_models::ModelConfig;
use crate::graph_data::SplitFractions;
use crate::trainers::FlagConfig;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    Gabo,
    Flag,
    NoiseBaseline,
    Plain,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitScheme {
    Random,
    Scaffold,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitConfig {
    pub scheme: SplitScheme,
    pub fractions: SplitFractions,
}

impl Default for SplitConfig {
    fn default() -> Self {
        Self {
            scheme: SplitScheme::Random,
            fractions: SplitFractions::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub patience: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub momentum: f64,
    pub milestones: Vec<usize>,
    pub gamma: f64,
    pub classifier_l2: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 200,
            patience: 30,
            batch_size: 32,
            lr: 0.1,
            momentum: 0.9,
            milestones: vec![60, 120, 160],
            gamma: 0.2,
            classifier_l2: 5e-4,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BilevelConfig {
    pub outer_lr: f64,
    /// Inner steps between outer updates (`k`).
    pub outer_period: usize,
    /// Recorded inner steps differentiated per outer update (`j`).
    pub window: usize,
    pub augmenter_l2: f64,
}

impl Default for BilevelConfig {
    fn default() -> Self {
        Self {
            outer_lr: 0.01,
            outer_period: 10,
            window: 4,
            augmenter_l2: 0.01,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub regime: Regime,
    pub dataset: Option<PathBuf>,
    pub out_dir: Option<PathBuf>,
    pub seed: u64,
    pub split: SplitConfig,
    pub model: ModelConfig,
    pub augmenter: AugmenterConfig,
    pub train: TrainConfig,
    pub bilevel: BilevelConfig,
    pub flag: FlagConfig,
    /// When false, `wall_ms` is written as 0 so reruns are byte-identical.
    pub log_wall_time: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            regime: Regime::Gabo,
            dataset: None,
            out_dir: None,
            seed: 0,
            split: SplitConfig::default(),
            model: ModelConfig::default(),
            augmenter: AugmenterConfig::default(),
            train: TrainConfig::default(),
            bilevel: BilevelConfig::default(),
            flag: FlagConfig::default(),
            log_wall_time: false,
        }
    }
}

fn positive(field: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::config(
            field,
            format!("must be positive and finite, got {v}"),
        ))
    }
}

fn non_negative(field: &str, v: f64) -> Result<()> {
    if v >= 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::config(
            field,
            format!("must be non-negative and finite, got {v}"),
        ))
    }
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self =
            serde_json::from_str(text).map_err(|e| Error::config("<config>", e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        self.split
            .fractions
            .validate()
            .map_err(|e| Error::config("split.fractions", e.to_string()))?;
        self.model.validate()?;
        self.augmenter.validate()?;
        self.flag.validate()?;
        let t = &self.train;
        if t.epochs == 0 {
            return Err(Error::config("train.epochs", "must be at least 1"));
        }
        if t.batch_size == 0 {
            return Err(Error::config("train.batch_size", "must be at least 1"));
        }
        positive("train.lr", t.lr)?;
        if !(0.0..1.0).contains(&t.momentum) {
            return Err(Error::config(
                "train.momentum",
                format!("must lie in [0, 1), got {}", t.momentum),
            ));
        }
        positive("train.gamma", t.gamma)?;
        non_negative("train.classifier_l2", t.classifier_l2)?;
        if t.milestones.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::config(
                "train.milestones",
                "must be strictly increasing",
            ));
        }
        let b = &self.bilevel;
        non_negative("bilevel.outer_lr", b.outer_lr)?;
        non_negative("bilevel.augmenter_l2", b.augmenter_l2)?;
        if b.window == 0 {
            return Err(Error::config("bilevel.window", "must be at least 1"));
        }
        if b.window > b.outer_period {
            return Err(Error::config(
                "bilevel.window",
                format!(
                    "window {} exceeds outer_period {}",
                    b.window, b.outer_period
                ),
            ));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_roundtrip_losslessly() {
        let cfg = ExperimentConfig::default();
        assert_eq!(ExperimentConfig::from_json(&cfg.to_json()).unwrap(), cfg);
        assert_eq!(ExperimentConfig::from_json("{}").unwrap(), cfg);
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(ExperimentConfig::from_json(r#"{"regme": "plain"}"#).is_err());
        assert!(ExperimentConfig::from_json(r#"{"train": {"lr": 0.1, "lrr": 1}}"#).is_err());
    }

    #[test]
    fn field_level_messages() {
        let err = ExperimentConfig::from_json(r#"{"bilevel": {"window": 12}}"#).unwrap_err();
        assert!(err.to_string().contains("bilevel.window"), "{err}");
        let err = ExperimentConfig::from_json(r#"{"train": {"momentum": 1.0}}"#).unwrap_err();
        assert!(err.to_string().contains("train.momentum"), "{err}");
    }

    #[test]
    fn enums_use_snake_case() {
        let cfg = ExperimentConfig::from_json(
            r#"{"regime": "noise_baseline", "augmenter": {"generation": "classic", "transform": "shifted_element_wise"}}"#,
        )
        .unwrap();
        assert_eq!(cfg.regime, Regime::NoiseBaseline);
    }
}
