//! Four-way partitions: train, pseudo-validation, validation, test.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::graph::MolGraph;
use crate::error::{Error, Result};

/// Fractions for (train, pseudo-validation, validation, test).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitFractions(pub [f64; 4]);

impl Default for SplitFractions {
    /// The conventional 80/10/10 with a tenth of the training share carved
    /// out as pseudo-validation.
    fn default() -> Self {
        Self([0.72, 0.08, 0.10, 0.10])
    }
}

impl SplitFractions {
    pub fn validate(&self) -> Result<()> {
        if self.0.iter().any(|&f| !(f > 0.0 && f.is_finite())) {
            return Err(Error::Split(format!(
                "fractions must all be positive, got {:?}",
                self.0
            )));
        }
        let sum: f64 = self.0.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::Split(format!(
                "fractions must sum to 1, got {sum} from {:?}",
                self.0
            )));
        }
        Ok(())
    }

    /// Largest-remainder apportionment of `n` items; ties go to the earlier split.
    pub fn sizes(&self, n: usize) -> [usize; 4] {
        let quotas: Vec<f64> = self.0.iter().map(|f| f * n as f64).collect();
        let mut sizes = [0usize; 4];
        for (s, q) in sizes.iter_mut().zip(&quotas) {
            *s = q.floor() as usize;
        }
        let mut order: Vec<usize> = (0..4).collect();
        order.sort_by(|&a, &b| {
            let ra = quotas[a] - quotas[a].floor();
            let rb = quotas[b] - quotas[b].floor();
            rb.total_cmp(&ra).then(a.cmp(&b))
        });
        let assigned: usize = sizes.iter().sum();
        for &i in order.iter().take(n.saturating_sub(assigned)) {
            sizes[i] += 1;
        }
        sizes
    }
}

/// Disjoint index lists into the source graph list.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetSplit {
    pub train: Vec<usize>,
    pub pseudo_val: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

impl DatasetSplit {
    pub fn parts(&self) -> [&[usize]; 4] {
        [&self.train, &self.pseudo_val, &self.val, &self.test]
    }

    fn parts_mut(&mut self) -> [&mut Vec<usize>; 4] {
        [
            &mut self.train,
            &mut self.pseudo_val,
            &mut self.val,
            &mut self.test,
        ]
    }

    pub fn sizes(&self) -> [usize; 4] {
        self.parts().map(|p| p.len())
    }

    pub fn is_degenerate(&self) -> bool {
        !self.warnings.is_empty()
    }
}

pub fn split_random(
    graphs: &[MolGraph],
    fractions: SplitFractions,
    seed: u64,
) -> Result<DatasetSplit> {
    fractions.validate()?;
    let n = graphs.len();
    if n < 4 {
        return Err(Error::Split(format!("need at least 4 graphs, got {n}")));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut split = DatasetSplit::default();
    let mut rest = order.as_slice();
    for (part, size) in split.parts_mut().into_iter().zip(fractions.sizes(n)) {
        let (head, tail) = rest.split_at(size);
        *part = head.to_vec();
        rest = tail;
    }
    Ok(split)
}

/// Assigns whole scaffold groups, largest first, each to the split furthest
/// below its target size. Equal-size groups are ordered by a seeded shuffle.
pub fn split_scaffold(
    graphs: &[MolGraph],
    fractions: SplitFractions,
    seed: u64,
) -> Result<DatasetSplit> {
    fractions.validate()?;
    let missing: Vec<usize> = graphs
        .iter()
        .enumerate()
        .filter(|(_, g)| g.scaffold_id().is_none())
        .map(|(i, _)| i)
        .collect();
    if !missing.is_empty() {
        return Err(Error::Split(format!(
            "scaffold split needs a scaffold id on every graph; missing on {missing:?}"
        )));
    }
    let mut groups: BTreeMap<u64, Vec<usize>> = BTreeMap::new();
    for (i, g) in graphs.iter().enumerate() {
        groups
            .entry(g.scaffold_id().unwrap_or_default())
            .or_default()
            .push(i);
    }
    let mut groups: Vec<Vec<usize>> = groups.into_values().collect();
    groups.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    groups.sort_by(|a, b| b.len().cmp(&a.len()));

    let mut split = DatasetSplit::default();
    if groups.len() == 1 {
        split.train = groups.pop().unwrap_or_default();
        split
            .warnings
            .push("only one scaffold group: every graph assigned to train".into());
        return Ok(split);
    }
    let n = graphs.len() as f64;
    let targets = fractions.0.map(|f| f * n);
    let mut filled = [0usize; 4];
    for group in groups {
        let mut best = 0;
        for k in 1..4 {
            if targets[k] - filled[k] as f64 > targets[best] - filled[best] as f64 {
                best = k;
            }
        }
        filled[best] += group.len();
        split.parts_mut()[best].extend(group);
    }
    for part in split.parts_mut() {
        part.sort_unstable();
    }
    Ok(split)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph_data::NodeVocab;

    fn graphs_with_groups(sizes: &[usize]) -> Vec<MolGraph> {
        let v = NodeVocab::default();
        sizes
            .iter()
            .enumerate()
            .flat_map(|(gid, &s)| {
                let v = v.clone();
                (0..s).map(move |_| {
                    MolGraph::new(vec![vec![0; 9]], &[], 0, Some(gid as u64), &v).unwrap()
                })
            })
            .collect()
    }

    #[test]
    fn random_sizes_follow_largest_remainder() {
        let g = graphs_with_groups(&[10]);
        let f = SplitFractions([0.6, 0.1, 0.1, 0.2]);
        let s = split_random(&g, f, 7).unwrap();
        assert_eq!(s.sizes(), [6, 1, 1, 2]);
        assert_eq!(s, split_random(&g, f, 7).unwrap());
    }

    #[test]
    fn remainders_distributed() {
        assert_eq!(
            SplitFractions([0.72, 0.08, 0.1, 0.1]).sizes(7),
            [5, 0, 1, 1]
        );
        assert_eq!(SplitFractions([0.25; 4]).sizes(6), [2, 2, 1, 1]);
    }

    #[test]
    fn bad_fractions_rejected() {
        let g = graphs_with_groups(&[10]);
        assert!(split_random(&g, SplitFractions([0.5, 0.2, 0.1, 0.1]), 0).is_err());
        assert!(split_random(&g, SplitFractions([1.0, 0.0, 0.0, 0.0]), 0).is_err());
        assert!(split_random(&g[..3], SplitFractions::default(), 0).is_err());
    }

    #[test]
    fn largest_scaffold_group_lands_in_train() {
        let g = graphs_with_groups(&[5, 3, 1, 1]);
        let s = split_scaffold(&g, SplitFractions([0.6, 0.1, 0.1, 0.2]), 3).unwrap();
        assert_eq!(&s.train[..5], &[0, 1, 2, 3, 4]);
        // 5 → train; 3 → test (deficit 2); 1 → train (tie, first); 1 → pseudo-val.
        assert_eq!(s.sizes(), [6, 1, 0, 3]);
    }

    #[test]
    fn single_group_is_degenerate() {
        let g = graphs_with_groups(&[6]);
        let s = split_scaffold(&g, SplitFractions::default(), 0).unwrap();
        assert_eq!(s.sizes(), [6, 0, 0, 0]);
        assert!(s.is_degenerate());
    }

    #[test]
    fn missing_scaffold_lists_graphs() {
        let v = NodeVocab::default();
        let mut g = graphs_with_groups(&[2, 2]);
        g.push(MolGraph::new(vec![vec![0; 9]], &[], 0, None, &v).unwrap());
        let err = split_scaffold(&g, SplitFractions::default(), 0).unwrap_err();
        assert!(err.to_string().contains("[4]"), "{err}");
    }
}
