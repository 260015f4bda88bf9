use gabo_autodiff::gradcheck::{numeric_gradient, relative_error};
use gabo_autodiff::{Tape, Tensor};
use gabo_core::gnn_models::{bce_loss, Classifier, GraphBatch, ModelConfig};
use gabo_core::graph_data::{MolGraph, NodeVocab};
use gabo_core::params::{bind_tensors, ParamSet};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const INVARIANCE_TOL: f64 = 1e-9;
const FD_STEP: f64 = 1e-5;
const FD_TOL: f64 = 1e-4;

/// Random connected graph (a random tree plus extra edges) with random codes.
fn random_graph(
    rng: &mut impl Rng,
    vocab: &NodeVocab,
    nodes: std::ops::RangeInclusive<usize>,
) -> MolGraph {
    let n = rng.gen_range(nodes);
    let feats = (0..n)
        .map(|_| {
            vocab
                .sizes
                .iter()
                .map(|&s| rng.gen_range(0..s as u32))
                .collect()
        })
        .collect();
    let mut edges: Vec<(usize, usize)> = (1..n).map(|v| (rng.gen_range(0..v), v)).collect();
    for _ in 0..rng.gen_range(0..=n / 2) {
        let (u, v) = (rng.gen_range(0..n), rng.gen_range(0..n));
        let (u, v) = (u.min(v), u.max(v));
        if u != v && !edges.iter().any(|&(a, b)| (a.min(b), a.max(b)) == (u, v)) {
            edges.push((u, v));
        }
    }
    MolGraph::new(feats, &edges, rng.gen_range(0..2), None, vocab).unwrap()
}

/// Every parameter drawn uniformly so no path is switched off by a zero init.
fn random_params(model: &Classifier, rng: &mut impl Rng, scale: f64) -> ParamSet {
    let base = model.init(rng);
    let tensors = base
        .tensors()
        .iter()
        .map(|t| {
            let data = (0..t.numel())
                .map(|_| rng.gen_range(-scale..scale))
                .collect();
            Tensor::new(t.shape().to_vec(), data).unwrap()
        })
        .collect();
    base.with_tensors(tensors).unwrap()
}

fn model(emb_dim: usize, num_layers: usize, train_eps: bool) -> Classifier {
    let cfg = ModelConfig {
        emb_dim,
        num_layers,
        train_eps,
        ..ModelConfig::default()
    };
    Classifier::new(cfg, NodeVocab::default()).unwrap()
}

#[test]
fn logits_are_invariant_to_node_relabeling() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let m = model(8, 5, false);
    let params = random_params(&m, &mut rng, 0.3);
    let vocab = NodeVocab::default();
    for _ in 0..50 {
        let g = random_graph(&mut rng, &vocab, 1..=20);
        let mut perm: Vec<usize> = (0..g.num_nodes()).collect();
        perm.shuffle(&mut rng);
        let a = m
            .predict(&params, &GraphBatch::new(&[&g]).unwrap())
            .unwrap()[0];
        let b = m
            .predict(&params, &GraphBatch::new(&[&g.permuted(&perm)]).unwrap())
            .unwrap()[0];
        assert!(
            (a - b).abs() < INVARIANCE_TOL,
            "logit moved from {a} to {b}"
        );
    }
}

#[test]
fn logits_do_not_depend_on_batch_mates() {
    let mut rng = ChaCha8Rng::seed_from_u64(22);
    let m = model(8, 5, false);
    let params = random_params(&m, &mut rng, 0.3);
    let vocab = NodeVocab::default();
    let graphs: Vec<MolGraph> = (0..50)
        .map(|_| random_graph(&mut rng, &vocab, 1..=20))
        .collect();
    let refs: Vec<&MolGraph> = graphs.iter().collect();
    let together = m
        .predict(&params, &GraphBatch::new(&refs).unwrap())
        .unwrap();
    let mut shuffled: Vec<usize> = (0..graphs.len()).collect();
    shuffled.shuffle(&mut rng);
    let reordered: Vec<&MolGraph> = shuffled.iter().map(|&i| &graphs[i]).collect();
    let reordered = m
        .predict(&params, &GraphBatch::new(&reordered).unwrap())
        .unwrap();
    for (i, g) in graphs.iter().enumerate() {
        let alone = m.predict(&params, &GraphBatch::new(&[g]).unwrap()).unwrap()[0];
        assert!((alone - together[i]).abs() < INVARIANCE_TOL);
        let pos = shuffled.iter().position(|&j| j == i).unwrap();
        assert!((alone - reordered[pos]).abs() < INVARIANCE_TOL);
    }
}

fn loss_at(m: &Classifier, params: &[Tensor], batch: &GraphBatch) -> f64 {
    let mut tape = Tape::new();
    let omega = bind_tensors(&mut tape, params, false);
    let logits = m.forward(&mut tape, &omega, batch).unwrap();
    let loss = bce_loss(&mut tape, logits, &batch.label_column()).unwrap();
    tape.item(loss).unwrap()
}

#[test]
fn bce_gradient_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    let m = model(4, 2, true);
    let params = random_params(&m, &mut rng, 0.5);
    let vocab = NodeVocab::default();
    let graphs: Vec<MolGraph> = (0..3)
        .map(|_| random_graph(&mut rng, &vocab, 3..=6))
        .collect();
    let batch = GraphBatch::new(&graphs.iter().collect::<Vec<_>>()).unwrap();

    let mut tape = Tape::new();
    let omega = bind_tensors(&mut tape, params.tensors(), true);
    let logits = m.forward(&mut tape, &omega, &batch).unwrap();
    let loss = bce_loss(&mut tape, logits, &batch.label_column()).unwrap();
    let grads = tape.grad(loss, &omega, false).unwrap();

    for (k, name) in params.names().iter().enumerate() {
        let analytic = tape.value(grads[k]).unwrap().clone();
        let numeric = numeric_gradient(
            |x| {
                let mut probe = params.tensors().to_vec();
                probe[k] = x.clone();
                Ok(loss_at(&m, &probe, &batch))
            },
            &params.tensors()[k],
            FD_STEP,
        )
        .unwrap();
        let err = relative_error(analytic.data(), numeric.data());
        assert!(err < FD_TOL, "{name}: relative error {err}");
    }
}
