//! Experiment orchestration.
//!
//! Every cell follows the same recipe: split the clean dataset with the
//! seed, cloak the training split, train a victim from scratch on the result
//! and measure it on the clean test split. Clean baselines and cloaked
//! datasets are cached per seed so that experiments sharing a cell (the main
//! table and the `p = 1` column of the poison-rate sweep, say) reuse it.
//!
//! Seeds drive the split (`seeded_rng(seed)`), the cloaking job, victim
//! initialisation ([`VICTIM_INIT_STREAM`]) and victim training.

use std::collections::HashMap;
use std::path::PathBuf;
use std::time::Instant;

use graphcloak_core::cloak::{cloak, CloakJob, Method};
use graphcloak_core::defense::{adversarial_train, robust_spec, AttackConfig, AttackSpace};
use graphcloak_core::gnn::{Arch, GnnModel, ModelSpec};
use graphcloak_core::graph::{dataset_stats, split_dataset, GraphDataset};
use graphcloak_core::train::{test_accuracy, train};
use graphcloak_core::{seeded_rng, seeded_stream};
use serde::{Deserialize, Serialize};

use crate::artifact::{dataset_digest, ArtifactStore};
use crate::config::{ExperimentConfig, ExperimentKind};
use crate::error::{Context as _, Error, Result};
use crate::manifest::{usage_histogram, CloakManifest};
use crate::report::{emit_report, CloakReport, MeanStd, PhaseTimings, ReportFormat, ReportRow};
use crate::tu::load_tu_dataset;

/// Generator stream of victim weight initialisation; the cloaking streams
/// use tags below this.
pub const VICTIM_INIT_STREAM: u64 = 8;

pub const MAIN: &str = "main";
pub const POISON_RATE: &str = "poison-rate";
pub const TRANSFER: &str = "transfer";
pub const ADVERSARIAL: &str = "adversarial";
pub const SOFT_MEDIAN: &str = "soft-median";
/// Method label of rows whose "cloaked" data is the clean split itself.
pub const CLEAN: &str = "clean";

/// How a victim is built and trained.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Victim {
    Standard(Arch),
    Adversarial(Arch, AttackSpace),
    SoftMedian { temperature: f64 },
}

impl Victim {
    pub fn label(&self) -> String {
        match self {
            Victim::Standard(a) => a.as_str().into(),
            Victim::Adversarial(a, AttackSpace::Structure) => format!("{a}+at-structure"),
            Victim::Adversarial(a, AttackSpace::Feature) => format!("{a}+at-feature"),
            Victim::SoftMedian { .. } => "gcn-softmedian".into(),
        }
    }
}

/// Attack space matching a cloaking method for adversarial training.
pub fn attack_space(method: Method) -> AttackSpace {
    match method {
        Method::EMinF => AttackSpace::Feature,
        _ => AttackSpace::Structure,
    }
}

#[derive(Debug, Clone)]
struct Trained {
    /// Test accuracy in percent.
    acc: f64,
    checkpoint: PathBuf,
    train_secs: f64,
    eval_secs: f64,
}

#[derive(Debug, Clone)]
struct Cloaked {
    dataset: GraphDataset,
    dir: PathBuf,
    secs: f64,
    delta_edges_pct: f64,
    delta_density_pct: f64,
    poisoned: usize,
    budget_used: usize,
    budget_total: usize,
    histogram: std::collections::BTreeMap<usize, usize>,
}

type CloakKey = (Method, Option<Arch>, u64, u64);

/// One (method, source, victim) cell of a transferability matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransferCell {
    pub method: String,
    pub source: String,
    pub victim: String,
    pub clean_acc: MeanStd,
    pub cloaked_acc: MeanStd,
    pub drop: MeanStd,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransferMatrix {
    pub sources: Vec<String>,
    pub victims: Vec<String>,
    pub cells: Vec<TransferCell>,
    pub report: CloakReport,
}

impl TransferMatrix {
    pub fn shape(&self) -> (usize, usize) {
        (self.sources.len(), self.victims.len())
    }

    pub fn cell(&self, method: &str, source: &str, victim: &str) -> Option<&TransferCell> {
        self.cells
            .iter()
            .find(|c| c.method == method && c.source == source && c.victim == victim)
    }
}

/// Runs experiments over one dataset and caches shared cells.
pub struct Harness {
    cfg: ExperimentConfig,
    data: GraphDataset,
    store: ArtifactStore,
    config_hash: String,
    dataset_digest: String,
    splits: HashMap<u64, (GraphDataset, PathBuf)>,
    baselines: HashMap<(String, u64), Trained>,
    cloaked: HashMap<CloakKey, Cloaked>,
    progress: Option<Box<dyn FnMut(&ReportRow)>>,
}

impl Harness {
    /// Loads `cfg.dataset` from the resolved data root.
    pub fn new(cfg: ExperimentConfig) -> Result<Self> {
        cfg.validate()?;
        let root = cfg.resolve_data_root().join(&cfg.dataset);
        if !root.is_dir() {
            return Err(Error::Dataset(format!("dataset {} not found at {}", cfg.dataset, root.display())));
        }
        let data = load_tu_dataset(&root, &cfg.dataset, cfg.features)?;
        Self::with_dataset(cfg, data)
    }

    /// Uses an already loaded dataset instead of reading `cfg.dataset`.
    pub fn with_dataset(cfg: ExperimentConfig, data: GraphDataset) -> Result<Self> {
        cfg.validate()?;
        Ok(Self {
            store: ArtifactStore::new(cfg.output_dir.join("artifacts")),
            config_hash: cfg.hash(),
            dataset_digest: dataset_digest(&data),
            cfg,
            data,
            splits: HashMap::new(),
            baselines: HashMap::new(),
            cloaked: HashMap::new(),
            progress: None,
        })
    }

    /// Called with every finished row.
    pub fn on_row(&mut self, f: impl FnMut(&ReportRow) + 'static) {
        self.progress = Some(Box::new(f));
    }

    pub fn config(&self) -> &ExperimentConfig {
        &self.cfg
    }

    pub fn dataset(&self) -> &GraphDataset {
        &self.data
    }

    fn new_report(&self) -> CloakReport {
        CloakReport::new(self.config_hash.clone(), self.dataset_digest.clone())
    }

    fn split(&mut self, seed: u64) -> Result<(GraphDataset, PathBuf)> {
        if let Some(s) = self.splits.get(&seed) {
            return Ok(s.clone());
        }
        let split = split_dataset(&self.data, self.cfg.split, &mut seeded_rng(seed))?;
        let dir = self.store.put_dataset(&split, None)?;
        self.splits.insert(seed, (split.clone(), dir.clone()));
        Ok((split, dir))
    }

    fn victim_model(&self, victim: Victim, seed: u64) -> Result<GnnModel> {
        let spec = match victim {
            Victim::Standard(a) | Victim::Adversarial(a, _) => ModelSpec::new(a, self.data.feature_dim, self.data.class_count),
            Victim::SoftMedian { temperature } => robust_spec(self.data.feature_dim, self.data.class_count, temperature)?,
        };
        Ok(GnnModel::new(spec, &mut seeded_stream(seed, VICTIM_INIT_STREAM))?)
    }

    /// Trains `victim` on `train_on` and evaluates on the clean test split.
    fn train_victim(&mut self, victim: Victim, train_on: &GraphDataset, seed: u64) -> Result<Trained> {
        let (clean, _) = self.split(seed)?;
        let model = self.victim_model(victim, seed)?;
        let tc = self.cfg.train.with_seed(seed);
        let start = Instant::now();
        let (model, _) = match victim {
            Victim::Adversarial(_, space) => {
                let attack = AttackConfig {
                    beta: self.cfg.countermeasures.attack_beta,
                    pgd: self.cfg.pgd.into(),
                    ..AttackConfig::new(space)
                };
                adversarial_train(model, train_on, &tc, &attack)?
            }
            _ => train(model, train_on, &tc)?,
        };
        let train_secs = start.elapsed().as_secs_f64();
        let start = Instant::now();
        let acc = 100.0 * test_accuracy(&model, &clean)?;
        let eval_secs = start.elapsed().as_secs_f64();
        let (checkpoint, _) = self.store.put_model(&model)?;
        Ok(Trained {
            acc,
            checkpoint,
            train_secs,
            eval_secs,
        })
    }

    fn baseline(&mut self, victim: Victim, seed: u64) -> Result<Trained> {
        let key = (victim.label(), seed);
        if let Some(t) = self.baselines.get(&key) {
            return Ok(t.clone());
        }
        let (clean, _) = self.split(seed)?;
        let t = self
            .train_victim(victim, &clean, seed)
            .context(|| format!("clean {} baseline, seed {seed}", victim.label()))?;
        self.baselines.insert(key, t.clone());
        Ok(t)
    }

    fn cloak_cell(&mut self, method: Method, surrogate: Arch, seed: u64, rate: f64) -> Result<Cloaked> {
        let source = method.needs_surrogate().then_some(surrogate);
        let key = (method, source, seed, rate.to_bits());
        if let Some(c) = self.cloaked.get(&key) {
            return Ok(c.clone());
        }
        let (clean, _) = self.split(seed)?;
        let job = CloakJob {
            surrogate,
            ..self.cfg.job(method, seed, rate)
        };
        let start = Instant::now();
        let outcome = cloak(&clean, &job).map_err(Error::from).context(|| format!("{method} cloak, seed {seed}, p={rate}"))?;
        let secs = start.elapsed().as_secs_f64();
        let surrogate_sha = match &outcome.surrogate {
            Some(m) => Some(self.store.put_model(m)?.1),
            None => None,
        };
        let manifest = CloakManifest::new(&job, &outcome, surrogate_sha);
        let dir = self.store.put_dataset(&outcome.dataset, Some(&manifest))?;
        let stats = dataset_stats(&outcome.dataset, Some(&clean))?;
        let poisoned: Vec<_> = outcome.usage.iter().filter(|u| u.poisoned).collect();
        let cell = Cloaked {
            dir,
            secs,
            delta_edges_pct: stats.delta_edges_pct.unwrap_or(0.0),
            delta_density_pct: stats.delta_density_pct.unwrap_or(0.0),
            poisoned: poisoned.len(),
            budget_used: poisoned.iter().map(|u| u.used).sum(),
            budget_total: poisoned.iter().map(|u| u.budget).sum(),
            histogram: usage_histogram(outcome.usage.iter().map(|u| (u.poisoned, u.used))),
            dataset: outcome.dataset,
        };
        self.cloaked.insert(key, cell.clone());
        Ok(cell)
    }

    /// The clean split dressed as a zero-cost cloaked cell.
    fn clean_cell(&mut self, seed: u64) -> Result<Cloaked> {
        let (clean, dir) = self.split(seed)?;
        Ok(Cloaked {
            dataset: clean,
            dir,
            secs: 0.0,
            delta_edges_pct: 0.0,
            delta_density_pct: 0.0,
            poisoned: 0,
            budget_used: 0,
            budget_total: 0,
            histogram: Default::default(),
        })
    }

    fn emit(&mut self, report: &mut CloakReport, row: ReportRow) {
        if let Some(f) = self.progress.as_mut() {
            f(&row);
        }
        report.push(row);
    }

    #[allow(clippy::too_many_arguments)]
    fn row(
        &self,
        experiment: &str,
        method: &str,
        source: Option<Arch>,
        victim: Victim,
        rate: f64,
        seed: u64,
        clean: &Trained,
        cloaked: &Trained,
        cell: &Cloaked,
    ) -> ReportRow {
        ReportRow {
            dataset: self.data.name.clone(),
            experiment: experiment.into(),
            method: method.into(),
            source: source.map_or_else(|| "-".into(), |a| a.as_str().into()),
            victim: victim.label(),
            poison_rate: rate,
            seed,
            clean_acc: clean.acc,
            cloaked_acc: cloaked.acc,
            drop: clean.acc - cloaked.acc,
            delta_edges_pct: cell.delta_edges_pct,
            delta_density_pct: cell.delta_density_pct,
            poisoned: cell.poisoned,
            budget_used: cell.budget_used,
            budget_total: cell.budget_total,
            usage_histogram: cell.histogram.clone(),
            timings: PhaseTimings {
                cloak_secs: cell.secs,
                train_secs: cloaked.train_secs,
                eval_secs: cloaked.eval_secs,
            },
            cloaked_dataset: cell.dir.clone(),
            victim_checkpoint: cloaked.checkpoint.clone(),
        }
    }

    fn cloaked_rows(
        &mut self,
        report: &mut CloakReport,
        experiment: &str,
        method: Method,
        surrogate: Arch,
        victims: &[Arch],
        rate: f64,
    ) -> Result<()> {
        for &arch in victims {
            for seed in self.cfg.seeds.clone() {
                let victim = Victim::Standard(arch);
                let clean = self.baseline(victim, seed)?;
                let cell = self.cloak_cell(method, surrogate, seed, rate)?;
                let trained = self
                    .train_victim(victim, &cell.dataset, seed)
                    .context(|| format!("{arch} on {method}-cloaked data, seed {seed}"))?;
                let source = method.needs_surrogate().then_some(surrogate);
                let row = self.row(experiment, method.as_str(), source, victim, rate, seed, &clean, &trained, &cell);
                self.emit(report, row);
            }
        }
        Ok(())
    }

    /// Every configured method × victim × seed at full poisoning.
    pub fn main_experiment(&mut self) -> Result<CloakReport> {
        if self.cfg.methods.is_empty() {
            return Err(Error::NothingToRun("the method list is empty"));
        }
        let mut report = self.new_report();
        for method in self.cfg.methods.clone() {
            let victims = self.cfg.victims.clone();
            self.cloaked_rows(&mut report, MAIN, method, self.cfg.surrogate, &victims, 1.0)?;
        }
        report.finalize();
        Ok(report)
    }

    /// Every configured method × rate × victim × seed.
    pub fn poison_rate_sweep(&mut self, rates: &[f64]) -> Result<CloakReport> {
        if self.cfg.methods.is_empty() || rates.is_empty() {
            return Err(Error::NothingToRun("the method list or the rate grid is empty"));
        }
        if let Some(r) = rates.iter().find(|r| !(0.0..=1.0).contains(*r)) {
            return Err(Error::Config(format!("poison rate {r} outside [0, 1]")));
        }
        let mut report = self.new_report();
        for method in self.cfg.methods.clone() {
            for &rate in rates {
                let victims = self.cfg.victims.clone();
                self.cloaked_rows(&mut report, POISON_RATE, method, self.cfg.surrogate, &victims, rate)?;
            }
        }
        report.finalize();
        Ok(report)
    }

    /// Cloaks once per source architecture and trains every victim on it.
    pub fn transferability(&mut self, sources: &[Arch], victims: &[Arch]) -> Result<TransferMatrix> {
        let methods = self.cfg.methods.clone();
        if methods.is_empty() || sources.is_empty() || victims.is_empty() {
            return Err(Error::NothingToRun("no method, source or victim for the transfer matrix"));
        }
        if let Some(m) = methods.iter().find(|m| !matches!(m, Method::EMinS | Method::EMinF)) {
            return Err(Error::Config(format!("transferability needs a surrogate-driven EMin method, got {m}")));
        }
        let mut report = self.new_report();
        for &method in &methods {
            for &source in sources {
                self.cloaked_rows(&mut report, TRANSFER, method, source, victims, 1.0)?;
            }
        }
        report.finalize();
        let mut cells = Vec::new();
        for &method in &methods {
            for &source in sources {
                for &victim in victims {
                    let a = report
                        .aggregates
                        .iter()
                        .find(|a| a.method == method.as_str() && a.source == source.as_str() && a.victim == victim.as_str())
                        .expect("every cell was run");
                    cells.push(TransferCell {
                        method: method.as_str().into(),
                        source: source.as_str().into(),
                        victim: victim.as_str().into(),
                        clean_acc: a.clean_acc,
                        cloaked_acc: a.cloaked_acc,
                        drop: a.drop,
                    });
                }
            }
        }
        Ok(TransferMatrix {
            sources: sources.iter().map(|a| a.as_str().into()).collect(),
            victims: victims.iter().map(|a| a.as_str().into()).collect(),
            cells,
            report,
        })
    }

    /// Adversarial training and the Soft Median GCN on clean and cloaked data.
    ///
    /// Adversarial rows compare a standard clean-data victim (`clean_acc`)
    /// with an adversarially trained one (`cloaked_acc`); the `clean` method
    /// rows train adversarially on the clean split. Soft Median rows train the
    /// robust GCN on both clean and cloaked data.
    pub fn countermeasures(&mut self) -> Result<CloakReport> {
        if self.cfg.methods.is_empty() {
            return Err(Error::NothingToRun("the method list is empty"));
        }
        let cm = self.cfg.countermeasures;
        if !cm.adversarial && !cm.soft_median {
            return Err(Error::NothingToRun("both countermeasures are disabled"));
        }
        let mut report = self.new_report();
        let methods = self.cfg.methods.clone();
        let spaces: Vec<AttackSpace> = [AttackSpace::Structure, AttackSpace::Feature]
            .into_iter()
            .filter(|&s| methods.iter().any(|&m| attack_space(m) == s))
            .collect();
        for seed in self.cfg.seeds.clone() {
            if cm.adversarial {
                for arch in self.cfg.victims.clone() {
                    let clean = self.baseline(Victim::Standard(arch), seed)?;
                    for &space in &spaces {
                        let victim = Victim::Adversarial(arch, space);
                        let cell = self.clean_cell(seed)?;
                        let at = self.baseline(victim, seed)?;
                        let row = self.row(ADVERSARIAL, CLEAN, None, victim, 0.0, seed, &clean, &at, &cell);
                        self.emit(&mut report, row);
                    }
                    for &method in &methods {
                        let victim = Victim::Adversarial(arch, attack_space(method));
                        let cell = self.cloak_cell(method, self.cfg.surrogate, seed, 1.0)?;
                        let at = self
                            .train_victim(victim, &cell.dataset, seed)
                            .context(|| format!("adversarial {arch} on {method}-cloaked data, seed {seed}"))?;
                        let source = method.needs_surrogate().then_some(self.cfg.surrogate);
                        let row = self.row(ADVERSARIAL, method.as_str(), source, victim, 1.0, seed, &clean, &at, &cell);
                        self.emit(&mut report, row);
                    }
                }
            }
            if cm.soft_median {
                let victim = Victim::SoftMedian {
                    temperature: cm.temperature,
                };
                let clean = self.baseline(victim, seed)?;
                for &method in &methods {
                    let cell = self.cloak_cell(method, self.cfg.surrogate, seed, 1.0)?;
                    let robust = self
                        .train_victim(victim, &cell.dataset, seed)
                        .context(|| format!("soft-median GCN on {method}-cloaked data, seed {seed}"))?;
                    let source = method.needs_surrogate().then_some(self.cfg.surrogate);
                    let row = self.row(SOFT_MEDIAN, method.as_str(), source, victim, 1.0, seed, &clean, &robust, &cell);
                    self.emit(&mut report, row);
                }
            }
        }
        report.finalize();
        Ok(report)
    }

    /// Runs `cfg.experiments` and writes `report.{csv,json}` (plus
    /// `transfer.json` when the transfer matrix ran) under `cfg.output_dir`.
    pub fn run_configured(&mut self) -> Result<(CloakReport, Vec<PathBuf>)> {
        let mut all = self.new_report();
        let mut written = Vec::new();
        for kind in self.cfg.experiments.clone() {
            let part = match kind {
                ExperimentKind::Main => self.main_experiment()?,
                ExperimentKind::PoisonRate => {
                    let rates = self.cfg.poison_rates.clone();
                    self.poison_rate_sweep(&rates)?
                }
                ExperimentKind::Transfer => {
                    let t = self.cfg.transfer.clone();
                    let matrix = self.transferability(&t.sources, &t.victims)?;
                    let path = self.cfg.output_dir.join("transfer.json");
                    std::fs::create_dir_all(&self.cfg.output_dir).map_err(|e| Error::io(&self.cfg.output_dir, e))?;
                    std::fs::write(&path, serde_json::to_string_pretty(&matrix)? + "\n").map_err(|e| Error::io(&path, e))?;
                    written.push(path);
                    matrix.report
                }
                ExperimentKind::Countermeasures => self.countermeasures()?,
            };
            all.extend(part);
        }
        all.finalize();
        written.extend(emit_report(&all, &self.cfg.output_dir, "report", &[ReportFormat::Csv, ReportFormat::Json])?);
        Ok((all, written))
    }
}

pub fn run_main_experiment(cfg: &ExperimentConfig) -> Result<CloakReport> {
    if cfg.methods.is_empty() {
        return Err(Error::NothingToRun("the method list is empty"));
    }
    Harness::new(cfg.clone())?.main_experiment()
}

pub fn run_poison_rate_sweep(cfg: &ExperimentConfig, rates: &[f64]) -> Result<CloakReport> {
    Harness::new(cfg.clone())?.poison_rate_sweep(rates)
}

pub fn run_transferability(cfg: &ExperimentConfig, sources: &[Arch], victims: &[Arch]) -> Result<TransferMatrix> {
    Harness::new(cfg.clone())?.transferability(sources, victims)
}

pub fn run_countermeasures(cfg: &ExperimentConfig) -> Result<CloakReport> {
    Harness::new(cfg.clone())?.countermeasures()
}
