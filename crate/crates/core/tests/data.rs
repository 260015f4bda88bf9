use std::collections::{BTreeMap, BTreeSet};

use gabo_core::graph_data::{
    read_jsonl, split_random, split_scaffold, write_jsonl, Dataset, DatasetSplit, MolGraph,
    NodeVocab, SplitFractions,
};
use proptest::prelude::*;

fn arb_fractions() -> impl Strategy<Value = SplitFractions> {
    proptest::array::uniform4(1u32..100).prop_map(|w| {
        let total: u32 = w.iter().sum();
        let mut f = w.map(|x| f64::from(x) / f64::from(total));
        // Land the sum on exactly 1 despite rounding.
        f[0] = 1.0 - f[1] - f[2] - f[3];
        SplitFractions(f)
    })
}

fn arb_graph(vocab: NodeVocab) -> impl Strategy<Value = MolGraph> {
    (1usize..8).prop_flat_map(move |n| {
        let vocab = vocab.clone();
        let fields: Vec<_> = vocab.sizes.iter().map(|&s| 0..s as u32).collect();
        let pairs: Vec<(usize, usize)> = (0..n)
            .flat_map(|u| (u + 1..n).map(move |v| (u, v)))
            .collect();
        let m = pairs.len();
        (
            proptest::collection::vec(fields, n),
            proptest::collection::vec(any::<bool>(), m),
            0u8..2,
            proptest::option::of(0u64..1000),
        )
            .prop_map(move |(x, keep, y, scaffold)| {
                let edges: Vec<(usize, usize)> = pairs
                    .iter()
                    .zip(&keep)
                    .filter(|(_, &k)| k)
                    .map(|(&p, _)| p)
                    .collect();
                MolGraph::new(x, &edges, y, scaffold, &vocab).unwrap()
            })
    })
}

fn placeholder_graphs(scaffolds: &[u64]) -> Vec<MolGraph> {
    let v = NodeVocab::default();
    scaffolds
        .iter()
        .map(|&s| MolGraph::new(vec![vec![0; 9]], &[], 0, Some(s), &v).unwrap())
        .collect()
}

fn assert_partition(split: &DatasetSplit, n: usize) {
    let mut seen = BTreeSet::new();
    for part in split.parts() {
        for &i in part {
            assert!(i < n);
            assert!(seen.insert(i), "index {i} appears twice");
        }
    }
    assert_eq!(seen.len(), n, "some graph is in no split");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn random_splits_partition_the_dataset(n in 4usize..300, fractions in arb_fractions(), seed in any::<u64>()) {
        let graphs = placeholder_graphs(&vec![0; n]);
        let split = split_random(&graphs, fractions, seed).unwrap();
        assert_partition(&split, n);
        prop_assert_eq!(split.sizes(), fractions.sizes(n));
        prop_assert_eq!(split.sizes().iter().sum::<usize>(), n);
    }

    #[test]
    fn scaffold_splits_keep_groups_whole(
        scaffolds in proptest::collection::vec(0u64..25, 1..300),
        fractions in arb_fractions(),
        seed in any::<u64>(),
    ) {
        let graphs = placeholder_graphs(&scaffolds);
        let split = split_scaffold(&graphs, fractions, seed).unwrap();
        assert_partition(&split, scaffolds.len());
        let mut home: BTreeMap<u64, usize> = BTreeMap::new();
        for (k, part) in split.parts().iter().enumerate() {
            for &i in part.iter() {
                let owner = *home.entry(scaffolds[i]).or_insert(k);
                prop_assert_eq!(owner, k, "scaffold {} straddles splits", scaffolds[i]);
            }
        }
    }

    #[test]
    fn jsonl_round_trip_is_field_exact(
        graphs in proptest::collection::vec(arb_graph(NodeVocab { sizes: vec![4, 3, 2] }), 0..20),
        check_bytes in any::<bool>(),
    ) {
        let vocab = NodeVocab { sizes: vec![4, 3, 2] };
        let data = Dataset { vocab: vocab.clone(), graphs };
        let mut bytes = Vec::new();
        write_jsonl(&mut bytes, &data, true).unwrap();
        prop_assert_eq!(&read_jsonl(bytes.as_slice()).unwrap(), &data);
        if check_bytes {
            let mut again = Vec::new();
            write_jsonl(&mut again, &read_jsonl(bytes.as_slice()).unwrap(), true).unwrap();
            prop_assert_eq!(again, bytes);
        }
    }
}
