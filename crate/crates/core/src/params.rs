//! Named parameter lists and their on-disk checkpoint format.
//!
//! A checkpoint is a flat little-endian `f64` file plus a JSON manifest of
//! `{name, shape, offset}` entries, where `offset` counts values (not bytes).

use std::fs;
use std::path::Path;

use gabo_autodiff::{Tape, Tensor, Var};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct ParamSet {
    names: Vec<String>,
    tensors: Vec<Tensor>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestEntry {
    pub name: String,
    pub shape: Vec<usize>,
    pub offset: usize,
}

impl ParamSet {
    pub fn new() -> Self {
        Self {
            names: Vec::new(),
            tensors: Vec::new(),
        }
    }

    pub fn push(&mut self, name: impl Into<String>, t: Tensor) -> usize {
        self.names.push(name.into());
        self.tensors.push(t);
        self.tensors.len() - 1
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn tensors(&self) -> &[Tensor] {
        &self.tensors
    }

    pub fn tensors_mut(&mut self) -> &mut [Tensor] {
        &mut self.tensors
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.names
            .iter()
            .position(|n| n == name)
            .map(|i| &self.tensors[i])
    }

    /// Same names, new values (shapes must match).
    pub fn with_tensors(&self, tensors: Vec<Tensor>) -> Result<Self> {
        if tensors.len() != self.len()
            || tensors
                .iter()
                .zip(&self.tensors)
                .any(|(a, b)| a.shape() != b.shape())
        {
            return Err(Error::Model("parameter shapes do not match".into()));
        }
        Ok(Self {
            names: self.names.clone(),
            tensors,
        })
    }

    pub fn zeros_like(&self) -> Vec<Tensor> {
        self.tensors
            .iter()
            .map(|t| Tensor::zeros(t.shape()))
            .collect()
    }

    pub fn numel(&self) -> usize {
        self.tensors.iter().map(Tensor::numel).sum()
    }

    pub fn sum_squares(&self) -> f64 {
        self.tensors
            .iter()
            .flat_map(|t| t.data().iter())
            .map(|v| v * v)
            .sum()
    }

    pub fn all_finite(&self) -> bool {
        self.tensors.iter().all(Tensor::all_finite)
    }

    /// Places every tensor on `tape`, as params or as constants.
    pub fn bind(&self, tape: &mut Tape, trainable: bool) -> Vec<Var> {
        bind_tensors(tape, &self.tensors, trainable)
    }

    pub fn manifest(&self) -> Vec<ManifestEntry> {
        let mut offset = 0;
        self.names
            .iter()
            .zip(&self.tensors)
            .map(|(name, t)| {
                let e = ManifestEntry {
                    name: name.clone(),
                    shape: t.shape().to_vec(),
                    offset,
                };
                offset += t.numel();
                e
            })
            .collect()
    }

    /// Writes `<stem>.bin` and `<stem>.json` into `dir`.
    pub fn save(&self, dir: &Path, stem: &str) -> Result<()> {
        let bin = dir.join(format!("{stem}.bin"));
        let json = dir.join(format!("{stem}.json"));
        let mut bytes = Vec::with_capacity(self.numel() * 8);
        for v in self.tensors.iter().flat_map(|t| t.data().iter()) {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
        fs::write(&bin, bytes).map_err(|e| Error::io(&bin, e))?;
        let manifest = serde_json::to_string_pretty(&self.manifest())
            .map_err(|e| Error::Checkpoint(e.to_string()))?;
        fs::write(&json, manifest).map_err(|e| Error::io(&json, e))
    }

    pub fn load(dir: &Path, stem: &str) -> Result<Self> {
        let bin = dir.join(format!("{stem}.bin"));
        let json = dir.join(format!("{stem}.json"));
        let text = fs::read_to_string(&json).map_err(|e| Error::io(&json, e))?;
        let manifest: Vec<ManifestEntry> =
            serde_json::from_str(&text).map_err(|e| Error::Checkpoint(e.to_string()))?;
        let bytes = fs::read(&bin).map_err(|e| Error::io(&bin, e))?;
        if bytes.len() % 8 != 0 {
            return Err(Error::Checkpoint(format!(
                "{} is not a whole number of f64s",
                bin.display()
            )));
        }
        let values: Vec<f64> = bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
            .collect();
        let mut set = Self::new();
        for e in manifest {
            let len: usize = e.shape.iter().product();
            let data = values
                .get(e.offset..e.offset + len)
                .ok_or_else(|| Error::Checkpoint(format!("entry {} runs past the data", e.name)))?;
            set.push(e.name, Tensor::new(e.shape, data.to_vec())?);
        }
        Ok(set)
    }
}

impl Default for ParamSet {
    fn default() -> Self {
        Self::new()
    }
}

pub fn bind_tensors(tape: &mut Tape, tensors: &[Tensor], trainable: bool) -> Vec<Var> {
    tensors
        .iter()
        .map(|t| {
            if trainable {
                tape.param(t.clone())
            } else {
                tape.constant(t.clone())
            }
        })
        .collect()
}

/// Glorot-uniform `[fan_in, fan_out]` matrix.
pub fn glorot(rng: &mut impl Rng, fan_in: usize, fan_out: usize) -> Tensor {
    let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
    let data = (0..fan_in * fan_out)
        .map(|_| rng.gen_range(-bound..bound))
        .collect();
    Tensor::new(vec![fan_in, fan_out], data).expect("shape and data built together")
}

/// Uniform on `±1/√fan_in`.
pub fn fan_in_uniform(rng: &mut impl Rng, fan_in: usize, fan_out: usize) -> Tensor {
    let bound = 1.0 / (fan_in as f64).sqrt();
    let data = (0..fan_in * fan_out)
        .map(|_| rng.gen_range(-bound..bound))
        .collect();
    Tensor::new(vec![fan_in, fan_out], data).expect("shape and data built together")
}
