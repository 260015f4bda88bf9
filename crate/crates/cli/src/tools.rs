//! Dataset tooling and the gradient-check report: `synth`, `split`,
//! `features` and `gradcheck`.

use std::fs;
use std::io::Write;
use std::path::Path;

use anyhow::Context;
use gabo_autodiff::gradcheck;
use gabo_core::config::SplitConfig;
use gabo_core::graph_data::{
    save_jsonl, split_random, split_scaffold, synth_motif_dataset, Dataset, DatasetSplit,
    NodeVocab, SynthConfig,
};
use gabo_core::graph_features::classic_features;
use gabo_core::trainers::hypercheck;
use serde::Serialize;

use crate::train::load_dataset;
use crate::{CliError, CliResult};

fn read_json<T: serde::de::DeserializeOwned>(path: &Path, what: &str) -> CliResult<T> {
    let text = fs::read_to_string(path)
        .with_context(|| format!("reading {what} {}", path.display()))
        .map_err(CliError::input)?;
    serde_json::from_str(&text)
        .with_context(|| format!("{what} {}", path.display()))
        .map_err(CliError::input)
}

fn write_text(path: &Path, text: &str) -> CliResult<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)
            .with_context(|| format!("creating {}", dir.display()))
            .map_err(CliError::failure)?;
    }
    fs::write(path, text)
        .with_context(|| format!("writing {}", path.display()))
        .map_err(CliError::failure)
}

/// `synth`: a motif dataset from a [`SynthConfig`] file, or from `fallback`
/// when no file is given; `seed` overrides either.
pub fn cmd_synth(
    config: Option<&Path>,
    fallback: SynthConfig,
    seed: Option<u64>,
    out: &Path,
) -> CliResult<usize> {
    let mut cfg = match config {
        Some(p) => read_json(p, "synth config")?,
        None => fallback,
    };
    if let Some(s) = seed {
        cfg.seed = s;
    }
    let graphs = synth_motif_dataset(&cfg)?;
    let n = graphs.len();
    if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)
            .with_context(|| format!("creating {}", dir.display()))
            .map_err(CliError::failure)?;
    }
    save_jsonl(
        out,
        &Dataset {
            vocab: NodeVocab::default(),
            graphs,
        },
    )?;
    Ok(n)
}

/// `split`: index lists for a dataset under a [`SplitConfig`] (defaults
/// when no file is given).
pub fn cmd_split(
    dataset: &Path,
    config: Option<&Path>,
    seed: u64,
    out: &Path,
) -> CliResult<DatasetSplit> {
    let cfg: SplitConfig = match config {
        Some(p) => read_json(p, "split config")?,
        None => SplitConfig::default(),
    };
    cfg.fractions.validate().map_err(|e| {
        CliError::input(anyhow::Error::from(e).context("split config field `fractions`"))
    })?;
    let data = load_dataset(dataset)?;
    let split = match cfg.scheme {
        gabo_core::config::SplitScheme::Random => split_random(&data.graphs, cfg.fractions, seed)?,
        gabo_core::config::SplitScheme::Scaffold => {
            split_scaffold(&data.graphs, cfg.fractions, seed)?
        }
    };
    for w in &split.warnings {
        log::warn!("{w}");
    }
    write_text(
        out,
        &serde_json::to_string_pretty(&split).map_err(CliError::failure)?,
    )?;
    Ok(split)
}

#[derive(Debug, Serialize)]
struct NodeFeatures {
    graph: usize,
    node: usize,
    betweenness: f64,
    closeness: f64,
    degree: f64,
    pagerank: f64,
}

/// `features`: one JSON line per node with its centrality measures.
pub fn cmd_features(dataset: &Path, mut out: impl Write) -> CliResult<usize> {
    let data = load_dataset(dataset)?;
    let mut lines = 0;
    for (graph, g) in data.graphs.iter().enumerate() {
        for (node, f) in classic_features(g)?.iter().enumerate() {
            let rec = NodeFeatures {
                graph,
                node,
                betweenness: f[0],
                closeness: f[1],
                degree: f[2],
                pagerank: f[3],
            };
            serde_json::to_writer(&mut out, &rec).map_err(CliError::failure)?;
            out.write_all(b"\n").map_err(CliError::failure)?;
            lines += 1;
        }
    }
    Ok(lines)
}

/// One row of the gradient-check report.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CheckLine {
    pub name: String,
    /// Relative error for the finite-difference checks, absolute for the
    /// analytic quadratic value.
    pub error: f64,
    pub tolerance: f64,
    pub passed: bool,
}

/// `gradcheck`: first- and second-order checks of every autodiff op, then
/// the hypergradient oracles for unroll windows 1, 2 and 4.
pub fn cmd_gradcheck(seed: u64, instances: usize) -> CliResult<Vec<CheckLine>> {
    let mut lines = Vec::new();
    for r in gradcheck::check_all(instances, seed).map_err(CliError::failure)? {
        for (order, err) in [
            ("first order", r.first_order),
            ("second order", r.second_order),
        ] {
            lines.push(CheckLine {
                name: format!("op {} {order}", r.name),
                error: err,
                tolerance: gradcheck::REL_TOL,
                passed: err < gradcheck::REL_TOL,
            });
        }
    }
    for r in hypercheck::check_all(&[1, 2, 4], seed)? {
        lines.push(CheckLine {
            name: format!("hypergradient {}", r.name),
            error: r.max_rel_error,
            tolerance: r.tolerance,
            passed: r.passed,
        });
    }
    Ok(lines)
}

pub fn render_check(line: &CheckLine) -> String {
    format!(
        "{} {:<40} error={:.3e} tolerance={:.0e}",
        if line.passed { "PASS" } else { "FAIL" },
        line.name,
        line.error,
        line.tolerance
    )
}
