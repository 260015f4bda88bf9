//! Graph records, the JSON-Lines file format, four-way splits and the
//! synthetic motif dataset.

mod graph;
mod io;
mod split;
mod synth;

pub use graph::{Dataset, MolGraph, NodeVocab, OGB_ATOM_VOCAB};
pub use io::{load_jsonl, read_jsonl, save_jsonl, write_jsonl};
pub use split::{split_random, split_scaffold, DatasetSplit, SplitFractions};
pub use synth::{has_marked_ring, synth_motif_dataset, LabelRule, SynthConfig, MARKED_ATOM};
