mod common;

use common::{random_dataset, random_graph};
use graphcloak_core::generate::erdos_renyi;
use graphcloak_core::graph::{dataset_stats, Adjacency, GraphDataset};
use graphcloak_core::seeded_rng;
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::Rng as _;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn stats_are_invariant_to_graph_order(seed in any::<u64>()) {
        let mut rng = seeded_rng(seed);
        let ds = random_dataset(&mut rng, 20, 2, 12, 3, 2);
        let mut graphs = ds.graphs.clone();
        graphs.shuffle(&mut rng);
        let shuffled = GraphDataset::new("shuffled", graphs, 2, 3).unwrap();
        let a = dataset_stats(&ds, None).unwrap();
        let b = dataset_stats(&shuffled, None).unwrap();
        prop_assert!((a.avg_edges - b.avg_edges).abs() < 1e-12);
        prop_assert!((a.avg_density - b.avg_density).abs() < 1e-12);
        prop_assert!(a.avg_density >= 0.0 && a.avg_density <= 0.5);
    }

    #[test]
    fn random_mutations_keep_graph_invariants(seed in any::<u64>(), ops in 1usize..60) {
        let mut rng = seeded_rng(seed);
        let mut g = random_graph(&mut rng, 7, 4, 2, 0.3);
        for _ in 0..ops {
            let u = rng.random_range(0..7);
            let v = (u + rng.random_range(1..7)) % 7;
            match rng.random_range(0..3) {
                0 => g.flip_edge(u, v),
                1 => g.set_edge(u, v, rng.random()),
                _ => g.set_feature(u, rng.random_range(0..4)),
            }
            g.check_invariants().unwrap();
        }
        let d = g.adjacency().edit_distance(&Adjacency::empty(7));
        prop_assert_eq!(d, g.edge_count());
    }
}

#[test]
fn erdos_renyi_density_converges() {
    let (n, rho, runs) = (9usize, 0.35, 1000u64);
    let pairs = (n * (n - 1) / 2) as f64;
    let densities: Vec<f64> = (0..runs)
        .map(|s| erdos_renyi(n, rho, &mut seeded_rng(s)).unwrap().edge_count() as f64 / pairs)
        .collect();
    let mean = densities.iter().sum::<f64>() / runs as f64;
    let se = (rho * (1.0 - rho) / pairs / runs as f64).sqrt();
    assert!((mean - rho).abs() < 3.0 * se, "mean {mean}, se {se}");
}
