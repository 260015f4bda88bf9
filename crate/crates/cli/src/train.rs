//! `gabo train`: one experiment from a JSON config.
//!
//! The output directory receives `config.resolved.json` (every field
//! expanded, dataset path absolute), `metrics.jsonl` (one line per epoch),
//! `summary.json` and `checkpoint/` holding the best classifier weights and,
//! for learned augmentation, the final augmenter weights.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, Context};
use gabo_core::config::ExperimentConfig;
use gabo_core::graph_data::{load_jsonl, Dataset};
use gabo_core::trainers::{run_experiment, ExperimentResult, Summary};

use crate::{CliError, CliResult};

pub const RESOLVED_CONFIG: &str = "config.resolved.json";
pub const METRICS: &str = "metrics.jsonl";
pub const SUMMARY: &str = "summary.json";
pub const CHECKPOINT_DIR: &str = "checkpoint";

/// Makes a relative path relative to `base` instead of the working directory.
pub(crate) fn anchor(path: &Path, base: &Path) -> PathBuf {
    if path.is_absolute() {
        path.to_path_buf()
    } else {
        base.join(path)
    }
}

fn config_dir(path: &Path) -> PathBuf {
    path.parent().map(Path::to_path_buf).unwrap_or_default()
}

/// Loads and validates a config, applies command-line overrides and makes
/// the dataset path absolute.
pub fn resolve_config(
    path: &Path,
    seed: Option<u64>,
    out: Option<&Path>,
) -> CliResult<ExperimentConfig> {
    let text = fs::read_to_string(path)
        .with_context(|| format!("reading config {}", path.display()))
        .map_err(CliError::input)?;
    let cfg = ExperimentConfig::from_json(&text)
        .map_err(|e| CliError::from(e).context(format!("{}", path.display())))?;
    finish_config(cfg, &config_dir(path), seed, out)
}

/// Shared tail of config resolution: overrides, then required fields.
pub(crate) fn finish_config(
    mut cfg: ExperimentConfig,
    base: &Path,
    seed: Option<u64>,
    out: Option<&Path>,
) -> CliResult<ExperimentConfig> {
    if let Some(s) = seed {
        cfg.seed = s;
    }
    if let Some(o) = out {
        cfg.out_dir = Some(o.to_path_buf());
    }
    let dataset = cfg.dataset.as_deref().ok_or_else(|| {
        CliError::input(anyhow!(
            "config field `dataset`: a dataset path is required"
        ))
    })?;
    let dataset = anchor(dataset, base);
    let dataset = dataset
        .canonicalize()
        .with_context(|| format!("config field `dataset`: {}", dataset.display()))
        .map_err(CliError::input)?;
    cfg.dataset = Some(dataset);
    if cfg.out_dir.is_none() {
        return Err(CliError::input(anyhow!(
            "config field `out_dir`: an output directory is required (or pass --out)"
        )));
    }
    Ok(cfg)
}

pub fn load_dataset(path: &Path) -> CliResult<Dataset> {
    load_jsonl(path).map_err(|e| {
        CliError::input(anyhow::Error::from(e).context(format!("dataset {}", path.display())))
    })
}

fn write_file(path: &Path, bytes: &[u8]) -> CliResult<()> {
    fs::write(path, bytes)
        .with_context(|| format!("writing {}", path.display()))
        .map_err(CliError::failure)
}

/// Writes the resolved config, then trains and writes metrics, summary and
/// checkpoints.
pub fn train(cfg: &ExperimentConfig, data: &Dataset) -> CliResult<Summary> {
    let out = cfg
        .out_dir
        .as_deref()
        .expect("resolved configs carry out_dir");
    fs::create_dir_all(out)
        .with_context(|| format!("creating {}", out.display()))
        .map_err(CliError::failure)?;
    write_file(&out.join(RESOLVED_CONFIG), cfg.to_json().as_bytes())?;
    let result = run_experiment(cfg, data)?;
    write_outputs(out, &result)?;
    Ok(result.summary)
}

fn write_outputs(out: &Path, result: &ExperimentResult) -> CliResult<()> {
    let mut metrics = Vec::new();
    for m in &result.metrics {
        serde_json::to_writer(&mut metrics, m).map_err(CliError::failure)?;
        metrics.write_all(b"\n").map_err(CliError::failure)?;
    }
    write_file(&out.join(METRICS), &metrics)?;
    let summary = serde_json::to_string_pretty(&result.summary).map_err(CliError::failure)?;
    write_file(&out.join(SUMMARY), summary.as_bytes())?;
    let ckpt = out.join(CHECKPOINT_DIR);
    fs::create_dir_all(&ckpt)
        .with_context(|| format!("creating {}", ckpt.display()))
        .map_err(CliError::failure)?;
    result.classifier.save(&ckpt, "classifier")?;
    if let Some(aug) = &result.augmenter {
        aug.save(&ckpt, "augmenter")?;
    }
    Ok(())
}

/// The `train` subcommand.
pub fn cmd_train(config: &Path, seed: Option<u64>, out: Option<&Path>) -> CliResult<Summary> {
    let cfg = resolve_config(config, seed, out)?;
    let data = load_dataset(cfg.dataset.as_deref().expect("resolved"))?;
    let summary = train(&cfg, &data)?;
    log::info!(
        "test ROC-AUC {} (best epoch {}), outputs in {}",
        summary.test_auc.map_or("n/a".into(), |a| format!("{a:.4}")),
        summary.best_epoch,
        cfg.out_dir.as_deref().expect("resolved").display()
    );
    Ok(summary)
}
