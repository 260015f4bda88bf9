//! JSON-Lines graph files.
//!
//! An optional first line `{"header": {"num_node_fields": 9, "vocab_sizes": [...]}}`
//! declares the node vocabulary; every other non-blank line is one graph
//! `{"n": 3, "x": [[...], ...], "edges": [[0, 1], ...], "y": 0, "scaffold": 4}`
//! with each undirected edge listed once.

use std::fs;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::graph::{Dataset, MolGraph, NodeVocab};
use crate::error::{Error, Result};

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct HeaderLine {
    header: Header,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    num_node_fields: usize,
    vocab_sizes: Vec<usize>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct GraphRecord {
    n: usize,
    x: Vec<Vec<u32>>,
    edges: Vec<[usize; 2]>,
    y: u8,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    scaffold: Option<u64>,
}

pub fn load_jsonl(path: impl AsRef<Path>) -> Result<Dataset> {
    let path = path.as_ref();
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_jsonl(file).map_err(|e| match e {
        Error::Io { source, .. } => Error::io(path, source),
        other => other,
    })
}

pub fn read_jsonl(reader: impl Read) -> Result<Dataset> {
    let mut vocab = NodeVocab::default();
    let mut graphs = Vec::new();
    for (i, line) in BufReader::new(reader).lines().enumerate() {
        let line_no = i + 1;
        let line = line.map_err(|e| Error::io("<reader>", e))?;
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        if graphs.is_empty() && trimmed.starts_with("{\"header\"") {
            let h: HeaderLine = serde_json::from_str(trimmed).map_err(|e| Error::Parse {
                line: line_no,
                msg: e.to_string(),
            })?;
            if h.header.vocab_sizes.len() != h.header.num_node_fields {
                return Err(Error::Parse {
                    line: line_no,
                    msg: format!(
                        "header declares {} fields but lists {} vocabulary sizes",
                        h.header.num_node_fields,
                        h.header.vocab_sizes.len()
                    ),
                });
            }
            vocab = NodeVocab {
                sizes: h.header.vocab_sizes,
            };
            continue;
        }
        let rec: GraphRecord = serde_json::from_str(trimmed).map_err(|e| Error::Parse {
            line: line_no,
            msg: e.to_string(),
        })?;
        let index = graphs.len();
        let invalid = |reason: String| Error::InvalidGraph {
            line: line_no,
            index,
            reason,
        };
        if rec.x.len() != rec.n {
            return Err(invalid(format!(
                "n = {} but x has {} rows",
                rec.n,
                rec.x.len()
            )));
        }
        let edges: Vec<(usize, usize)> = rec.edges.iter().map(|e| (e[0], e[1])).collect();
        let g = MolGraph::new(rec.x, &edges, rec.y, rec.scaffold, &vocab)
            .map_err(|e| invalid(e.to_string()))?;
        graphs.push(g);
    }
    Ok(Dataset { vocab, graphs })
}

pub fn write_jsonl(mut w: impl Write, dataset: &Dataset, with_header: bool) -> std::io::Result<()> {
    if with_header {
        let header = HeaderLine {
            header: Header {
                num_node_fields: dataset.vocab.num_fields(),
                vocab_sizes: dataset.vocab.sizes.clone(),
            },
        };
        serde_json::to_writer(&mut w, &header)?;
        w.write_all(b"\n")?;
    }
    for g in &dataset.graphs {
        let rec = GraphRecord {
            n: g.num_nodes(),
            x: g.node_feats().to_vec(),
            edges: g.undirected_edges().map(|(u, v)| [u, v]).collect(),
            y: g.label(),
            scaffold: g.scaffold_id(),
        };
        serde_json::to_writer(&mut w, &rec)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

pub fn save_jsonl(path: impl AsRef<Path>, dataset: &Dataset) -> Result<()> {
    let path = path.as_ref();
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = std::io::BufWriter::new(file);
    write_jsonl(&mut w, dataset, true).map_err(|e| Error::io(path, e))?;
    w.flush().map_err(|e| Error::io(path, e))
}
