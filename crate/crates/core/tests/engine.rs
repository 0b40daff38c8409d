mod common;

use common::{random_dataset, random_graph, random_model};
use graphcloak_core::gnn::{Arch, GnnModel, GraphInput, Mode, ModelSpec};
use graphcloak_core::graph::{split_dataset, Adjacency, Graph, GraphDataset};
use graphcloak_core::train::{evaluate, test_accuracy, train, TrainConfig};
use graphcloak_core::{seeded_rng, Error};
use proptest::prelude::*;

/// Straightforward dense GCN evaluated step by step with nested loops.
fn reference_gcn_logits(model: &GnnModel, adj: &[[f64; 3]; 3], x: &[Vec<f64>]) -> Vec<f64> {
    let theta = model.params();
    let block = |name: &str| {
        let p = model.layout().iter().find(|p| p.name == name).unwrap();
        (p.rows, p.cols, theta[p.range()].to_vec())
    };
    let n = 3;
    let mut a_tilde = [[0.0; 3]; 3];
    for v in 0..n {
        for u in 0..n {
            a_tilde[v][u] = adj[v][u] + if u == v { 1.0 } else { 0.0 };
        }
    }
    let deg: Vec<f64> = (0..n).map(|v| a_tilde[v].iter().sum()).collect();
    let mut z: Vec<Vec<f64>> = x.to_vec();
    for k in 0..3 {
        let (rows, cols, w) = block(&format!("conv{k}.weight"));
        let (_, _, b) = block(&format!("conv{k}.bias"));
        let mut zw = vec![vec![0.0; cols]; n];
        for v in 0..n {
            for c in 0..cols {
                for r in 0..rows {
                    zw[v][c] += z[v][r] * w[r * cols + c];
                }
            }
        }
        let mut next = vec![vec![0.0; cols]; n];
        for v in 0..n {
            for c in 0..cols {
                let mut s = b[c];
                for u in 0..n {
                    s += a_tilde[v][u] / (deg[v].sqrt() * deg[u].sqrt()) * zw[u][c];
                }
                next[v][c] = s.max(0.0);
            }
        }
        z = next;
    }
    let hidden = z[0].len();
    let pooled: Vec<f64> = (0..hidden).map(|c| z.iter().map(|r| r[c]).sum::<f64>() / n as f64).collect();
    let dense = |input: &[f64], name: &str, relu: bool| {
        let (rows, cols, w) = block(&format!("{name}.weight"));
        let (_, _, b) = block(&format!("{name}.bias"));
        (0..cols)
            .map(|c| {
                let s = b[c] + (0..rows).map(|r| input[r] * w[r * cols + c]).sum::<f64>();
                if relu { s.max(0.0) } else { s }
            })
            .collect::<Vec<f64>>()
    };
    let h = dense(&pooled, "head.hidden", true);
    dense(&h, "head.out", false)
}

#[test]
fn gcn_matches_hand_evaluated_matrix_chain() {
    let mut rng = seeded_rng(21);
    let model = random_model(Arch::Gcn, 2, 3, &mut rng);
    let adj = Adjacency::from_edges(3, [(0, 1), (1, 2)]).unwrap();
    let g = Graph::new(adj, vec![0, 1, 0], 2, 0).unwrap();
    let expected = reference_gcn_logits(
        &model,
        &[[0.0, 1.0, 0.0], [1.0, 0.0, 1.0], [0.0, 1.0, 0.0]],
        &[vec![1.0, 0.0], vec![0.0, 1.0], vec![1.0, 0.0]],
    );
    let got = model.logits(&g).unwrap();
    for (a, b) in got.iter().zip(&expected) {
        assert!((a - b).abs() < 1e-12, "{got:?} vs {expected:?}");
    }
}

#[test]
fn zero_model_on_single_node_outputs_head_bias() {
    for arch in Arch::ALL {
        let spec = ModelSpec::new(arch, 3, 2);
        let mut theta = vec![0.0; spec.layout().iter().map(|p| p.len()).sum()];
        let n = theta.len();
        theta[n - 2] = 0.7;
        theta[n - 1] = -1.1;
        let model = GnnModel::from_params(spec, theta).unwrap();
        let input = GraphInput {
            adjacency: graphcloak_core::Matrix::zeros(1, 1),
            features: graphcloak_core::Matrix::zeros(1, 3),
        };
        let logits = model.forward(&input, Mode::Eval).unwrap().logits;
        assert_eq!(logits, vec![0.7, -1.1], "{arch}");
    }
}

#[test]
fn rejects_wrong_feature_dimension_and_non_finite_input() {
    let mut rng = seeded_rng(1);
    let model = random_model(Arch::Gcn, 3, 2, &mut rng);
    let g = random_graph(&mut rng, 4, 2, 2, 0.5);
    assert!(matches!(model.logits(&g), Err(Error::DimensionMismatch { .. })));
    let mut input = GraphInput::from_graph(&random_graph(&mut rng, 4, 3, 2, 0.5));
    input.features[(0, 0)] = f64::NAN;
    assert!(matches!(model.forward(&input, Mode::Eval), Err(Error::NonFinite(_))));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn logits_are_permutation_invariant(seed in any::<u64>(), n in 1usize..10, arch_i in 0usize..3) {
        let arch = Arch::ALL[arch_i];
        let mut rng = seeded_rng(seed);
        let g = random_graph(&mut rng, n, 4, 3, 0.4);
        let model = random_model(arch, 4, 3, &mut rng);
        let mut perm: Vec<usize> = (0..n).collect();
        rand::seq::SliceRandom::shuffle(perm.as_mut_slice(), &mut rng);
        let a = model.logits(&g).unwrap();
        let b = model.logits(&g.permuted(&perm)).unwrap();
        for (x, y) in a.iter().zip(&b) {
            prop_assert!((x - y).abs() < 1e-9, "{:?} vs {:?}", a, b);
        }
    }
}

fn small_cfg(seed: u64) -> TrainConfig {
    TrainConfig {
        max_epochs: 40,
        batch_size: 8,
        seed,
        ..TrainConfig::default()
    }
}

#[test]
fn training_is_deterministic() {
    let mut rng = seeded_rng(8);
    let ds = random_dataset(&mut rng, 40, 4, 9, 3, 2);
    for arch in Arch::ALL {
        let run = || {
            let model = GnnModel::new(ModelSpec::new(arch, 3, 2), &mut seeded_rng(3)).unwrap();
            train(model, &ds, &small_cfg(5)).unwrap()
        };
        let (m1, h1) = run();
        let (m2, h2) = run();
        assert_eq!(h1, h2, "{arch}");
        assert_eq!(m1.params(), m2.params(), "{arch}");
    }
}

#[test]
fn early_stop_and_lr_schedule_contracts() {
    let mut rng = seeded_rng(12);
    let ds = random_dataset(&mut rng, 40, 4, 9, 3, 2);
    let cfg = TrainConfig {
        max_epochs: 200,
        lr_patience: 3,
        early_stop_patience: 7,
        batch_size: 8,
        ..TrainConfig::default()
    };
    let model = GnnModel::new(ModelSpec::new(Arch::Gcn, 3, 2), &mut seeded_rng(0)).unwrap();
    let (_, h) = train(model, &ds, &cfg).unwrap();
    let last = h.epochs.last().unwrap().epoch;
    assert!(last - h.best_epoch <= cfg.early_stop_patience);
    assert!(last < cfg.max_epochs - 1, "expected an early stop on random labels");
    let min_val = h.epochs.iter().map(|e| e.val_loss).fold(f64::INFINITY, f64::min);
    assert_eq!(h.best_val_loss, min_val);
    // Every lr change is exactly ×0.25.
    for w in h.epochs.windows(2) {
        let (a, b) = (w[0].lr, w[1].lr);
        assert!(a == b || b == a * 0.25, "{a} → {b}");
    }
    assert!(h.epochs.iter().any(|e| e.lr < cfg.lr));
}

#[test]
fn constant_labels_are_learned_perfectly() {
    let mut rng = seeded_rng(3);
    let graphs: Vec<Graph> = (0..30)
        .map(|_| {
            let g = random_graph(&mut rng, 6, 3, 1, 0.4);
            Graph::new(g.adjacency().clone(), g.feature_classes().to_vec(), 3, 1).unwrap()
        })
        .collect();
    let ds = GraphDataset::new("constant", graphs, 2, 3).unwrap();
    let ds = split_dataset(&ds, [0.8, 0.1, 0.1], &mut rng).unwrap();
    let model = GnnModel::new(ModelSpec::new(Arch::Gcn, 3, 2), &mut seeded_rng(0)).unwrap();
    let (model, _) = train(model, &ds, &small_cfg(0)).unwrap();
    assert_eq!(test_accuracy(&model, &ds).unwrap(), 1.0);
}

#[test]
fn evaluation_tie_rule_and_empty_guard() {
    let spec = ModelSpec::new(Arch::Gcn, 2, 2);
    let theta = vec![0.0; spec.layout().iter().map(|p| p.len()).sum()];
    let model = GnnModel::from_params(spec, theta).unwrap();
    let graphs: Vec<Graph> = (0..10)
        .map(|i| Graph::new(Adjacency::empty(2), vec![0, 1], 2, usize::from(i < 3)).unwrap())
        .collect();
    let refs: Vec<&Graph> = graphs.iter().collect();
    assert_eq!(evaluate(&model, &refs).unwrap(), 0.7);
    assert_eq!(evaluate(&model, &[]), Err(Error::EmptySet("evaluation set")));
}
