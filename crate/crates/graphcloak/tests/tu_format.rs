#[path = "../../core/tests/common/mod.rs"]
mod common;

use std::fs;
use std::path::{Path, PathBuf};

use graphcloak::tu::{dataset_name_in, load_tu_dataset, read_dataset, write_dataset, FeaturePolicy};
use graphcloak::Error;
use graphcloak_core::graph::dataset_stats;
use graphcloak_core::seeded_rng;
use proptest::prelude::*;

fn mutag_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data/MUTAG")
}

fn write_tu(dir: &Path, name: &str, files: &[(&str, &str)]) {
    fs::create_dir_all(dir).unwrap();
    for (suffix, body) in files {
        fs::write(dir.join(format!("{name}_{suffix}.txt")), body).unwrap();
    }
}

#[test]
fn mutag_shape() {
    let dir = mutag_dir();
    if !dir.is_dir() {
        eprintln!("MUTAG not present at {}, skipping", dir.display());
        return;
    }
    let ds = load_tu_dataset(&dir, "MUTAG", FeaturePolicy::NodeLabels).unwrap();
    assert_eq!(ds.len(), 188);
    assert_eq!(ds.class_count, 2);
    assert_eq!(ds.feature_dim, 7);
    let avg_nodes = ds.graphs.iter().map(|g| g.node_count()).sum::<usize>() as f64 / 188.0;
    assert!((avg_nodes - 17.93).abs() < 0.005, "{avg_nodes}");
    let stats = dataset_stats(&ds, None).unwrap();
    assert!(stats.avg_density > 0.0 && stats.avg_density <= 0.5);
}

#[test]
fn one_node_graph_with_empty_edge_file() {
    let tmp = tempfile::tempdir().unwrap();
    write_tu(tmp.path(), "T", &[("A", ""), ("graph_indicator", "1\n"), ("graph_labels", "7\n")]);
    let ds = load_tu_dataset(tmp.path(), "T", FeaturePolicy::NodeLabels).unwrap();
    assert_eq!(ds.len(), 1);
    assert_eq!(ds.graphs[0].node_count(), 1);
    assert_eq!(ds.graphs[0].edge_count(), 0);
    assert_eq!(ds.graphs[0].label(), 0);
}

#[test]
fn both_directions_deduplicate_and_separators_are_lenient() {
    let tmp = tempfile::tempdir().unwrap();
    write_tu(
        tmp.path(),
        "P",
        &[
            ("A", "1, 2\n2,1\n2, 3\n3,2\n3,3\n"),
            ("graph_indicator", "1\n1\n1\n"),
            ("graph_labels", "-1\n"),
            ("node_labels", "4\n9\n4\n"),
        ],
    );
    let ds = load_tu_dataset(tmp.path(), "P", FeaturePolicy::NodeLabels).unwrap();
    let g = &ds.graphs[0];
    assert_eq!(g.edge_count(), 2);
    assert!(g.has_edge(0, 1) && g.has_edge(1, 2) && !g.has_edge(0, 2));
    assert_eq!(g.feature_classes(), &[0, 1, 0]);
    assert_eq!(ds.feature_dim, 2);
}

#[test]
fn labels_remap_to_contiguous_range() {
    let tmp = tempfile::tempdir().unwrap();
    write_tu(
        tmp.path(),
        "L",
        &[("A", ""), ("graph_indicator", "1\n2\n3\n"), ("graph_labels", "5\n-3\n5\n")],
    );
    let ds = load_tu_dataset(tmp.path(), "L", FeaturePolicy::NodeLabels).unwrap();
    assert_eq!(ds.class_count, 2);
    assert_eq!(ds.labels(), vec![1, 0, 1]);
}

#[test]
fn degree_features_when_node_labels_absent() {
    let tmp = tempfile::tempdir().unwrap();
    // Star with centre 1 and four leaves.
    write_tu(
        tmp.path(),
        "S",
        &[
            ("A", "1,2\n1,3\n1,4\n1,5\n"),
            ("graph_indicator", "1\n1\n1\n1\n1\n"),
            ("graph_labels", "0\n"),
        ],
    );
    let ds = load_tu_dataset(tmp.path(), "S", FeaturePolicy::NodeLabels).unwrap();
    assert_eq!(ds.feature_dim, 5);
    assert_eq!(ds.graphs[0].feature_classes(), &[4, 1, 1, 1, 1]);

    let capped = load_tu_dataset(tmp.path(), "S", FeaturePolicy::DegreeOneHot { cap: 2 }).unwrap();
    assert_eq!(capped.feature_dim, 3);
    assert_eq!(capped.graphs[0].feature_classes(), &[2, 1, 1, 1, 1]);
}

#[test]
fn loader_errors() {
    let tmp = tempfile::tempdir().unwrap();
    let ok = [("A", "1,2\n"), ("graph_indicator", "1\n1\n"), ("graph_labels", "0\n")];

    let missing = tmp.path().join("missing");
    write_tu(&missing, "M", &ok[1..]);
    let err = load_tu_dataset(&missing, "M", FeaturePolicy::NodeLabels).unwrap_err();
    assert!(err.chain().contains("missing mandatory file"), "{}", err.chain());

    let text = tmp.path().join("text");
    write_tu(&text, "X", &[("A", "1,b\n"), ok[1], ok[2]]);
    let err = load_tu_dataset(&text, "X", FeaturePolicy::NodeLabels).unwrap_err();
    assert!(err.chain().contains("non-integer token"), "{}", err.chain());

    let cross = tmp.path().join("cross");
    write_tu(&cross, "C", &[("A", "1,2\n"), ("graph_indicator", "1\n2\n"), ("graph_labels", "0\n1\n")]);
    let err = load_tu_dataset(&cross, "C", FeaturePolicy::NodeLabels).unwrap_err();
    assert!(err.chain().contains("joins graph 1 and graph 2"), "{}", err.chain());

    let outside = tmp.path().join("outside");
    write_tu(&outside, "O", &[("A", "1,9\n"), ok[1], ok[2]]);
    let err = load_tu_dataset(&outside, "O", FeaturePolicy::NodeLabels).unwrap_err();
    assert!(err.chain().contains("node 9 outside"), "{}", err.chain());

    let bad_gid = tmp.path().join("gid");
    write_tu(&bad_gid, "G", &[("A", ""), ("graph_indicator", "1\n3\n"), ("graph_labels", "0\n")]);
    assert!(load_tu_dataset(&bad_gid, "G", FeaturePolicy::NodeLabels).is_err());
}

#[test]
fn writer_emits_comma_separated_both_orientations() {
    let mut rng = seeded_rng(4);
    let ds = common::random_dataset(&mut rng, 6, 3, 5, 3, 2);
    let tmp = tempfile::tempdir().unwrap();
    write_dataset(&ds, tmp.path()).unwrap();
    let a = fs::read_to_string(tmp.path().join("random_A.txt")).unwrap();
    let total: usize = ds.graphs.iter().map(|g| g.edge_count()).sum();
    assert_eq!(a.lines().count(), 2 * total);
    assert!(a.lines().all(|l| l.split(',').count() == 2 && !l.contains(' ')));
    assert!(a.is_empty() || a.ends_with('\n'));
    assert_eq!(dataset_name_in(tmp.path()).unwrap(), "random");
}

#[test]
fn read_requires_meta() {
    let tmp = tempfile::tempdir().unwrap();
    write_tu(tmp.path(), "N", &[("A", ""), ("graph_indicator", "1\n"), ("graph_labels", "0\n")]);
    assert!(matches!(read_dataset(tmp.path(), "N"), Err(Error::MissingFile(_))));
    assert!(dataset_name_in(tmp.path()).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 32, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn write_then_read_is_identity(seed in any::<u64>(), graphs in 3usize..20, d in 1usize..5, classes in 1usize..4) {
        let mut rng = seeded_rng(seed);
        let ds = common::random_dataset(&mut rng, graphs.max(3 * classes), 1, 9, d, classes);
        let tmp = tempfile::tempdir().unwrap();
        write_dataset(&ds, tmp.path()).unwrap();
        let back = read_dataset(tmp.path(), &ds.name).unwrap();
        prop_assert_eq!(&back.graphs, &ds.graphs);
        prop_assert_eq!(back.class_count, ds.class_count);
        prop_assert_eq!(back.feature_dim, ds.feature_dim);
        prop_assert_eq!(&back.split, &ds.split);

        // The plain loader sees the same structure; labels may be remapped
        // when some class is absent, features when some class is unused.
        let plain = load_tu_dataset(tmp.path(), &ds.name, FeaturePolicy::NodeLabels).unwrap();
        prop_assert_eq!(plain.len(), ds.len());
        for (a, b) in plain.graphs.iter().zip(&ds.graphs) {
            prop_assert_eq!(a.adjacency(), b.adjacency());
        }
    }
}
