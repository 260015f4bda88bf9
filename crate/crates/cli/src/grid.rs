//! `gabo grid`: generation × transform ablation over seeds.
//!
//! A grid spec is JSON:
//!
//! ```json
//! {
//!   "base": { "dataset": "data.jsonl", "train": { "epochs": 30 } },
//!   "generations": ["noise", "classic", "gin"],
//!   "transforms": ["bias", "element_wise", "shifted_element_wise"],
//!   "seeds": [0, 1, 2],
//!   "single_seed_std": "zero",
//!   "cell_overrides": { "gin/bias": { "bilevel": { "outer_lr": 0.001 } } }
//! }
//! ```
//!
//! `base` is a partial experiment config (regime is always `gabo`); each
//! cell overrides `augmenter.generation`, `augmenter.transform`, `seed` and
//! `out_dir`, after deep-merging its entry from `cell_overrides`. Every
//! (cell, seed) run writes the usual train outputs under
//! `cells/<generation>_<transform>/seed_<seed>/`. The matrix goes to
//! `grid.csv` with columns `generation,transform,n_seeds,mean,std,status`,
//! where `n_seeds` counts successful seeds, `std` is the sample standard
//! deviation (n−1) of their test ROC-AUC and `status` is `ok`, `partial`
//! or `FAILED`. Per-seed details go to `grid.json`.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, Context};
use gabo_core::augmenters::{GenerationType, TransformType};
use gabo_core::config::{ExperimentConfig, Regime};
use gabo_core::graph_data::Dataset;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::train::{finish_config, load_dataset, train};
use crate::{exit, CliError, CliResult};

pub const CSV: &str = "grid.csv";
pub const DETAILS: &str = "grid.json";
pub const CSV_HEADER: &str = "generation,transform,n_seeds,mean,std,status";

/// What the `std` column holds when a cell has a single successful seed.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SingleSeedStd {
    #[default]
    Zero,
    Empty,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    #[serde(default = "empty_object")]
    pub base: Value,
    pub generations: Vec<GenerationType>,
    pub transforms: Vec<TransformType>,
    pub seeds: Vec<u64>,
    #[serde(default)]
    pub single_seed_std: SingleSeedStd,
    /// Keyed by `"<generation>/<transform>"`.
    #[serde(default)]
    pub cell_overrides: BTreeMap<String, Value>,
}

fn empty_object() -> Value {
    Value::Object(Default::default())
}

pub fn cell_key(g: GenerationType, t: TransformType) -> String {
    format!("{}/{}", g.name(), t.name())
}

fn has_duplicates<T: Ord>(items: &[T]) -> bool {
    items.iter().collect::<BTreeSet<_>>().len() != items.len()
}

impl GridSpec {
    pub fn validate(&self) -> CliResult<()> {
        let bad =
            |field: &str, msg: &str| Err(CliError::input(anyhow!("grid field `{field}`: {msg}")));
        for (field, empty, dup) in [
            (
                "generations",
                self.generations.is_empty(),
                has_duplicates(
                    &self
                        .generations
                        .iter()
                        .map(|g| g.name())
                        .collect::<Vec<_>>(),
                ),
            ),
            (
                "transforms",
                self.transforms.is_empty(),
                has_duplicates(&self.transforms.iter().map(|t| t.name()).collect::<Vec<_>>()),
            ),
            ("seeds", self.seeds.is_empty(), has_duplicates(&self.seeds)),
        ] {
            if empty {
                return bad(field, "must not be empty");
            }
            if dup {
                return bad(field, "must not repeat entries");
            }
        }
        if !self.base.is_object() {
            return bad("base", "must be a JSON object");
        }
        let keys: BTreeSet<String> = self
            .generations
            .iter()
            .flat_map(|&g| self.transforms.iter().map(move |&t| cell_key(g, t)))
            .collect();
        for (k, v) in &self.cell_overrides {
            if !keys.contains(k) {
                return bad(
                    "cell_overrides",
                    &format!("{k:?} is not a cell of this grid"),
                );
            }
            if !v.is_object() {
                return bad(
                    "cell_overrides",
                    &format!("{k:?} must map to a JSON object"),
                );
            }
        }
        Ok(())
    }
}

/// Recursively overlays `patch` onto `target`; non-object values replace.
pub fn merge(target: &mut Value, patch: &Value) {
    match (target, patch) {
        (Value::Object(t), Value::Object(p)) => {
            for (k, v) in p {
                merge(t.entry(k.clone()).or_insert(Value::Null), v);
            }
        }
        (t, p) => *t = p.clone(),
    }
}

/// One (cell, seed) run, fully resolved.
#[derive(Clone, Debug)]
pub struct GridJob {
    pub generation: GenerationType,
    pub transform: TransformType,
    pub config: ExperimentConfig,
}

/// Expands the grid spec into per-seed configs; `base_dir` anchors relative
/// dataset paths.
pub fn expand(spec: &GridSpec, base_dir: &Path, out: &Path) -> CliResult<Vec<GridJob>> {
    spec.validate()?;
    let mut jobs = Vec::new();
    for &generation in &spec.generations {
        for &transform in &spec.transforms {
            let key = cell_key(generation, transform);
            let mut value = spec.base.clone();
            if let Some(patch) = spec.cell_overrides.get(&key) {
                merge(&mut value, patch);
            }
            let mut cfg: ExperimentConfig = serde_json::from_value(value)
                .with_context(|| format!("grid cell {key}"))
                .map_err(CliError::input)?;
            cfg.regime = Regime::Gabo;
            cfg.augmenter.generation = generation;
            cfg.augmenter.transform = transform;
            cfg.validate()
                .map_err(|e| CliError::from(e).context(format!("grid cell {key}")))?;
            for &seed in &spec.seeds {
                let dir = out
                    .join("cells")
                    .join(format!("{}_{}", generation.name(), transform.name()))
                    .join(format!("seed_{seed}"));
                let config = finish_config(cfg.clone(), base_dir, Some(seed), Some(&dir))?;
                jobs.push(GridJob {
                    generation,
                    transform,
                    config,
                });
            }
        }
    }
    Ok(jobs)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeedOutcome {
    pub seed: u64,
    pub test_auc: Option<f64>,
    pub error: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellSummary {
    pub generation: GenerationType,
    pub transform: TransformType,
    pub seeds: Vec<SeedOutcome>,
    pub n_seeds: usize,
    pub mean: Option<f64>,
    pub std: Option<f64>,
    pub status: String,
}

/// Mean and sample standard deviation; `None` std for a single value.
pub fn mean_std(values: &[f64]) -> (Option<f64>, Option<f64>) {
    let n = values.len();
    if n == 0 {
        return (None, None);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (Some(mean), None);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1) as f64;
    (Some(mean), Some(var.sqrt()))
}

fn summarize(
    generation: GenerationType,
    transform: TransformType,
    seeds: Vec<SeedOutcome>,
    conv: SingleSeedStd,
) -> CellSummary {
    let aucs: Vec<f64> = seeds.iter().filter_map(|s| s.test_auc).collect();
    let (mean, mut std) = mean_std(&aucs);
    if aucs.len() == 1 && conv == SingleSeedStd::Zero {
        std = Some(0.0);
    }
    let status = if aucs.len() == seeds.len() {
        "ok"
    } else if aucs.is_empty() {
        "FAILED"
    } else {
        "partial"
    };
    CellSummary {
        generation,
        transform,
        n_seeds: aucs.len(),
        mean,
        std,
        status: status.into(),
        seeds,
    }
}

pub fn render_csv(cells: &[CellSummary]) -> String {
    let opt = |v: Option<f64>| v.map_or(String::new(), |x| x.to_string());
    let mut s = format!("{CSV_HEADER}\n");
    for c in cells {
        s += &format!(
            "{},{},{},{},{},{}\n",
            c.generation.name(),
            c.transform.name(),
            c.n_seeds,
            opt(c.mean),
            opt(c.std),
            c.status
        );
    }
    s
}

fn run_job(job: &GridJob, datasets: &HashMap<PathBuf, Dataset>) -> SeedOutcome {
    let seed = job.config.seed;
    let data = &datasets[job.config.dataset.as_deref().expect("resolved")];
    match train(&job.config, data) {
        Ok(summary) => SeedOutcome {
            seed,
            test_auc: summary.test_auc,
            error: summary
                .test_auc
                .is_none()
                .then(|| "test split holds a single class".into()),
        },
        Err(e) => {
            log::warn!(
                "{} seed {seed} failed: {e}",
                cell_key(job.generation, job.transform)
            );
            SeedOutcome {
                seed,
                test_auc: None,
                error: Some(e.to_string()),
            }
        }
    }
}

/// Runs every job on up to `jobs` threads and writes `grid.csv` and
/// `grid.json` into `out`.
pub fn run_grid(
    spec: &GridSpec,
    jobs_list: &[GridJob],
    out: &Path,
    jobs: usize,
) -> CliResult<Vec<CellSummary>> {
    let mut datasets = HashMap::new();
    for j in jobs_list {
        let path = j.config.dataset.clone().expect("resolved");
        if !datasets.contains_key(&path) {
            let data = load_dataset(&path)?;
            datasets.insert(path, data);
        }
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(CliError::failure)?;
    let outcomes: Vec<SeedOutcome> = pool.install(|| {
        jobs_list
            .par_iter()
            .map(|j| run_job(j, &datasets))
            .collect()
    });

    let mut cells = Vec::new();
    for &g in &spec.generations {
        for &t in &spec.transforms {
            let seeds = jobs_list
                .iter()
                .zip(&outcomes)
                .filter(|(j, _)| j.generation == g && j.transform == t)
                .map(|(_, o)| o.clone())
                .collect();
            cells.push(summarize(g, t, seeds, spec.single_seed_std));
        }
    }
    fs::create_dir_all(out)
        .with_context(|| format!("creating {}", out.display()))
        .map_err(CliError::failure)?;
    let csv = out.join(CSV);
    fs::write(&csv, render_csv(&cells))
        .with_context(|| format!("writing {}", csv.display()))
        .map_err(CliError::failure)?;
    let details = out.join(DETAILS);
    let text = serde_json::to_string_pretty(&cells).map_err(CliError::failure)?;
    fs::write(&details, text)
        .with_context(|| format!("writing {}", details.display()))
        .map_err(CliError::failure)?;
    Ok(cells)
}

/// The `grid` subcommand. Succeeds when at least one cell produced a result.
pub fn cmd_grid(
    spec_path: &Path,
    out: &Path,
    seed: Option<u64>,
    jobs: usize,
) -> CliResult<Vec<CellSummary>> {
    let text = fs::read_to_string(spec_path)
        .with_context(|| format!("reading grid spec {}", spec_path.display()))
        .map_err(CliError::input)?;
    let mut spec: GridSpec = serde_json::from_str(&text)
        .with_context(|| format!("grid spec {}", spec_path.display()))
        .map_err(CliError::input)?;
    if let Some(s) = seed {
        spec.seeds = vec![s];
    }
    let base_dir = spec_path
        .parent()
        .map(Path::to_path_buf)
        .unwrap_or_default();
    let jobs_list = expand(&spec, &base_dir, out)?;
    let cells = run_grid(&spec, &jobs_list, out, jobs)?;
    if cells.iter().all(|c| c.n_seeds == 0) {
        return Err(CliError {
            code: exit::ABORTED,
            error: anyhow!(
                "every grid cell failed; see {}",
                out.join(DETAILS).display()
            ),
        });
    }
    Ok(cells)
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn merge_is_deep() {
        let mut a = json!({"train": {"epochs": 5, "lr": 0.1}, "seed": 1});
        merge(&mut a, &json!({"train": {"lr": 0.5}, "regime": "plain"}));
        assert_eq!(
            a,
            json!({"train": {"epochs": 5, "lr": 0.5}, "seed": 1, "regime": "plain"})
        );
    }

    #[test]
    fn sample_std() {
        let (m, s) = mean_std(&[0.7, 0.8, 0.9]);
        assert!((m.unwrap() - 0.8).abs() < 1e-15);
        assert!((s.unwrap() - 0.1).abs() < 1e-15);
        assert_eq!(mean_std(&[0.5]), (Some(0.5), None));
        assert_eq!(mean_std(&[]), (None, None));
    }

    #[test]
    fn single_seed_conventions() {
        let one = || {
            vec![SeedOutcome {
                seed: 0,
                test_auc: Some(0.75),
                error: None,
            }]
        };
        let zero = summarize(
            GenerationType::Gin,
            TransformType::Bias,
            one(),
            SingleSeedStd::Zero,
        );
        assert_eq!(zero.std, Some(0.0));
        let empty = summarize(
            GenerationType::Gin,
            TransformType::Bias,
            one(),
            SingleSeedStd::Empty,
        );
        assert_eq!(empty.std, None);
        assert_eq!(
            render_csv(&[empty]),
            format!("{CSV_HEADER}\ngin,bias,1,0.75,,ok\n")
        );
    }

    #[test]
    fn failed_and_partial_cells() {
        let fail = SeedOutcome {
            seed: 1,
            test_auc: None,
            error: Some("aborted".into()),
        };
        let ok = SeedOutcome {
            seed: 0,
            test_auc: Some(0.6),
            error: None,
        };
        let c = summarize(
            GenerationType::Noise,
            TransformType::ElementWise,
            vec![fail.clone()],
            SingleSeedStd::Zero,
        );
        assert_eq!((c.status.as_str(), c.n_seeds, c.mean), ("FAILED", 0, None));
        let c = summarize(
            GenerationType::Noise,
            TransformType::ElementWise,
            vec![ok, fail],
            SingleSeedStd::Zero,
        );
        assert_eq!((c.status.as_str(), c.n_seeds), ("partial", 1));
    }

    #[test]
    fn spec_validation() {
        let spec = |g: Value| -> GridSpec { serde_json::from_value(g).unwrap() };
        let good = json!({"generations": ["gin"], "transforms": ["bias"], "seeds": [0]});
        assert!(spec(good.clone()).validate().is_ok());
        let mut empty = good.clone();
        empty["seeds"] = json!([]);
        assert_eq!(spec(empty).validate().unwrap_err().code, exit::INPUT);
        let mut dup = good.clone();
        dup["transforms"] = json!(["bias", "bias"]);
        assert!(spec(dup).validate().is_err());
        let mut stray = good;
        stray["cell_overrides"] = json!({"noise/bias": {}});
        assert!(spec(stray).validate().is_err());
        assert!(serde_json::from_value::<GridSpec>(
            json!({"generations": [], "transforms": [], "seeds": [], "extra": 1})
        )
        .is_err());
    }
}
