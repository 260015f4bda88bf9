use gabo_autodiff::gradcheck::{check_all, op_catalog, REL_TOL};
use gabo_autodiff::{Indices, Tape, Tensor};
use proptest::prelude::*;

#[test]
fn every_op_matches_finite_differences_to_second_order() {
    let reports = check_all(20, 0xD1FF).unwrap();
    assert_eq!(reports.len(), op_catalog().len());
    for r in &reports {
        assert!(
            r.passed(),
            "{}: first-order {:.3e}, second-order {:.3e} (tol {REL_TOL:e})",
            r.name,
            r.first_order,
            r.second_order
        );
    }
}

fn run_chain(seed: u64) -> Vec<f64> {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut tape = Tape::new();
    let data: Vec<f64> = (0..12).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let x = tape.param(Tensor::new(vec![4, 3], data).unwrap());
    let w = tape.param(Tensor::new(vec![3, 3], (0..9).map(|_| rng.gen()).collect()).unwrap());
    let h = tape.matmul(x, w).unwrap();
    let h = tape.sigmoid(h).unwrap();
    let s = tape.mean(h).unwrap();
    let g = tape.grad(s, &[x, w], true).unwrap();
    let gg = tape.dot(g[1], g[1]).unwrap();
    let h2 = tape.grad(gg, &[x], false).unwrap()[0];
    let mut out = tape.value(g[0]).unwrap().data().to_vec();
    out.extend_from_slice(tape.value(h2).unwrap().data());
    out
}

#[test]
fn identical_seeds_give_bit_identical_results() {
    let a = run_chain(42);
    let b = run_chain(42);
    assert_eq!(
        a.iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
        b.iter().map(|v| v.to_bits()).collect::<Vec<_>>()
    );
}

proptest! {
    #[test]
    fn scatter_sum_is_edge_order_invariant(
        edges in prop::collection::vec((0usize..6, 0usize..6), 1..20),
        seed in any::<u64>(),
    ) {
        use rand::{Rng, SeedableRng, seq::SliceRandom};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        // Small integers keep every partial sum exact in f64.
        let feats: Vec<f64> = (0..12).map(|_| rng.gen_range(-8i32..8) as f64).collect();
        let aggregate = |edges: &[(usize, usize)]| {
            let mut tape = Tape::new();
            let h = tape.constant(Tensor::new(vec![6, 2], feats.clone()).unwrap());
            let src: Indices = edges.iter().map(|e| e.0).collect::<Vec<_>>().into();
            let dst: Indices = edges.iter().map(|e| e.1).collect::<Vec<_>>().into();
            let m = tape.index_select(h, &src).unwrap();
            let agg = tape.scatter_add(m, &dst, 6).unwrap();
            tape.value(agg).unwrap().clone()
        };
        let mut shuffled = edges.clone();
        shuffled.shuffle(&mut rng);
        prop_assert_eq!(aggregate(&edges), aggregate(&shuffled));
    }
}
