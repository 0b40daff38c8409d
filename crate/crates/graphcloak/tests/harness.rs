#[path = "../../core/tests/common/mod.rs"]
mod common;

use std::path::Path;

use graphcloak::config::{ExperimentConfig, ExperimentKind};
use graphcloak::harness::{Harness, ADVERSARIAL, MAIN, POISON_RATE, SOFT_MEDIAN, TRANSFER};
use graphcloak::manifest::CloakManifest;
use graphcloak::report::read_json;
use graphcloak::tu::{dataset_name_in, read_dataset};
use graphcloak::Error;
use graphcloak_core::cloak::Method;
use graphcloak_core::gnn::Arch;
use graphcloak_core::graph::{dataset_stats, GraphDataset};
use graphcloak_core::seeded_rng;

fn data() -> GraphDataset {
    let mut ds = common::random_dataset(&mut seeded_rng(11), 40, 5, 10, 3, 2);
    ds.split = None;
    ds.name = "synthetic".into();
    ds
}

fn config(methods: Vec<Method>, out: &Path) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::new("synthetic", methods);
    cfg.seeds = vec![0, 1];
    cfg.n_steps = 3;
    cfg.train.max_epochs = 6;
    cfg.train.batch_size = 16;
    cfg.output_dir = out.to_path_buf();
    cfg
}

fn harness(cfg: ExperimentConfig) -> Harness {
    Harness::with_dataset(cfg, data()).unwrap()
}

#[test]
fn empty_method_list_is_nothing_to_run() {
    let tmp = tempfile::tempdir().unwrap();
    let err = harness(config(vec![], tmp.path())).main_experiment().unwrap_err();
    assert!(matches!(err, Error::NothingToRun(_)));
    assert!(err.to_string().contains("nothing to run"));
}

#[test]
fn missing_dataset_is_reported() {
    let tmp = tempfile::tempdir().unwrap();
    let mut cfg = config(vec![Method::Random], tmp.path());
    cfg.data_root = Some(tmp.path().to_path_buf());
    let err = Harness::new(cfg).err().unwrap();
    assert!(err.to_string().contains("not found"), "{err}");
}

#[test]
fn main_rows_are_consistent_with_their_artifacts() {
    let tmp = tempfile::tempdir().unwrap();
    let methods = vec![Method::Random, Method::SubInj, Method::EMinS];
    let mut h = harness(config(methods.clone(), tmp.path()));
    let report = h.main_experiment().unwrap();
    assert_eq!(report.rows.len(), methods.len() * 2);
    assert_eq!(report.aggregates.len(), methods.len());
    for row in &report.rows {
        assert_eq!(row.experiment, MAIN);
        assert_eq!(row.drop, row.clean_acc - row.cloaked_acc);
        assert!(row.victim_checkpoint.is_file());
        let name = dataset_name_in(&row.cloaked_dataset).unwrap();
        let cloaked = read_dataset(&row.cloaked_dataset, &name).unwrap();
        let manifest = CloakManifest::read(&row.cloaked_dataset).unwrap();
        assert_eq!(manifest.method, row.method);
        assert_eq!(manifest.seed, row.seed);
        assert_eq!(manifest.usage_histogram(), row.usage_histogram);
        assert!(manifest.usage.iter().all(|u| u.used <= u.budget));

        // Stealth fields are re-derivable from the persisted dataset.
        let mut clean = data();
        clean.split = cloaked.split.clone();
        let stats = dataset_stats(&cloaked, Some(&clean)).unwrap();
        assert_eq!(stats.delta_edges_pct.unwrap(), row.delta_edges_pct);
        assert_eq!(stats.delta_density_pct.unwrap(), row.delta_density_pct);
    }
    let surrogate_rows = report.select(MAIN, "emins").count();
    assert_eq!(surrogate_rows, 2);
    assert!(report.select(MAIN, "emins").all(|r| r.source == "gcn"));
    assert!(report.select(MAIN, "subinj").all(|r| r.source == "-"));
}

#[test]
fn rerun_reproduces_the_report() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = config(vec![Method::EMaxS, Method::SubInj], tmp.path());
    let a = harness(cfg.clone()).main_experiment().unwrap();
    let b = harness(cfg).main_experiment().unwrap();
    assert_eq!(a.without_timings(), b.without_timings());
}

#[test]
fn poison_rate_endpoints() {
    let tmp = tempfile::tempdir().unwrap();
    let mut h = harness(config(vec![Method::Random], tmp.path()));
    let main = h.main_experiment().unwrap();
    let sweep = h.poison_rate_sweep(&[0.0, 1.0]).unwrap();
    for seed in [0, 1] {
        let at = |p: f64| sweep.rows.iter().find(|r| r.seed == seed && r.poison_rate == p).unwrap();
        let full = main.rows.iter().find(|r| r.seed == seed).unwrap();
        assert_eq!(at(0.0).poisoned, 0);
        assert_eq!(at(0.0).cloaked_acc, at(0.0).clean_acc);
        assert_eq!(at(1.0).cloaked_acc, full.cloaked_acc);
        assert_eq!(at(1.0).cloaked_dataset, full.cloaked_dataset);
        assert_eq!(at(1.0).experiment, POISON_RATE);
    }
    assert!(h.poison_rate_sweep(&[1.5]).is_err());
}

#[test]
fn transfer_matrix_shape_and_diagonal() {
    let tmp = tempfile::tempdir().unwrap();
    let mut h = harness(config(vec![Method::EMinS], tmp.path()));
    let main = h.main_experiment().unwrap();
    let m = h.transferability(&[Arch::Gcn, Arch::Sage], &[Arch::Gcn, Arch::Gin, Arch::Sage]).unwrap();
    assert_eq!(m.shape(), (2, 3));
    assert_eq!(m.cells.len(), 6);
    let diag = m.cell("emins", "gcn", "gcn").unwrap();
    let reference = main.aggregate_for(MAIN, "emins", "gcn").unwrap();
    assert_eq!(diag.cloaked_acc, reference.cloaked_acc);
    assert_eq!(diag.drop, reference.drop);
    assert!(m.report.rows.iter().all(|r| r.experiment == TRANSFER));

    let mut other = harness(config(vec![Method::SubInj], tmp.path()));
    assert!(matches!(other.transferability(&[Arch::Gcn], &[Arch::Gcn]), Err(Error::Config(_))));
}

#[test]
fn countermeasure_rows() {
    let tmp = tempfile::tempdir().unwrap();
    let mut cfg = config(vec![Method::SubInj, Method::EMinF], tmp.path());
    cfg.seeds = vec![3];
    let mut h = harness(cfg);
    let r = h.countermeasures().unwrap();
    let adv: Vec<_> = r.rows.iter().filter(|x| x.experiment == ADVERSARIAL).collect();
    let victims: Vec<&str> = adv.iter().map(|x| x.victim.as_str()).collect();
    assert!(victims.contains(&"gcn+at-structure") && victims.contains(&"gcn+at-feature"));
    assert_eq!(adv.iter().filter(|x| x.method == "clean").count(), 2);
    assert_eq!(adv.iter().find(|x| x.method == "eminf").unwrap().victim, "gcn+at-feature");
    assert_eq!(adv.iter().find(|x| x.method == "subinj").unwrap().victim, "gcn+at-structure");
    let sm: Vec<_> = r.rows.iter().filter(|x| x.experiment == SOFT_MEDIAN).collect();
    assert_eq!(sm.len(), 2);
    assert!(sm.iter().all(|x| x.victim == "gcn-softmedian"));
}

#[test]
fn configured_run_writes_reports() {
    let tmp = tempfile::tempdir().unwrap();
    let mut cfg = config(vec![Method::EMinF], tmp.path());
    cfg.seeds = vec![0];
    cfg.poison_rates = vec![0.5];
    cfg.transfer.victims = vec![Arch::Gcn];
    cfg.countermeasures.adversarial = false;
    cfg.experiments = vec![
        ExperimentKind::Main,
        ExperimentKind::PoisonRate,
        ExperimentKind::Transfer,
        ExperimentKind::Countermeasures,
    ];
    let (report, written) = harness(cfg).run_configured().unwrap();
    assert!(written.iter().all(|p| p.is_file()));
    assert!(tmp.path().join("transfer.json").is_file());
    let back = read_json(&tmp.path().join("report.json")).unwrap();
    assert_eq!(back, report);
    let experiments: std::collections::BTreeSet<&str> = report.rows.iter().map(|r| r.experiment.as_str()).collect();
    assert_eq!(experiments.len(), 4);
}
