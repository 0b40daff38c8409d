//! Experiment configuration (TOML).
//!
//! ```toml
//! dataset = "MUTAG"
//! data_root = "data"            # optional, see `resolve_data_root`
//! victims = ["gcn"]
//! surrogate = "gcn"
//! methods = ["subinj", "emaxs"]
//! seeds = [0, 402, 6178]
//! beta = 0.05
//! poison_rates = [0.2, 0.6, 1.0]
//! n_steps = 500
//! split = [0.8, 0.1, 0.1]
//! experiments = ["main", "poison-rate"]
//! output_dir = "runs/mutag"
//!
//! [features]
//! kind = "node-labels"          # or "degree-onehot" with `cap = 64`
//!
//! [train]                       # lr, weight_decay, lr_factor, lr_patience,
//! max_epochs = 300              # early_stop_patience, batch_size, max_epochs
//!
//! [pgd]                         # step_size, steps, temperature
//! [subinj]                      # density, trigger_cap
//! [countermeasures]             # adversarial, soft_median, temperature, attack_beta
//! [transfer]                    # sources, victims
//! ```
//!
//! Every table and every key except `dataset` and `methods` has a default.

use std::fs;
use std::path::{Path, PathBuf};

use graphcloak_core::budget::DEFAULT_BETA;
use graphcloak_core::cloak::{CloakJob, Method, PgdConfig};
use graphcloak_core::defense::DEFAULT_SOFT_MEDIAN_TEMPERATURE;
use graphcloak_core::gnn::Arch;
use graphcloak_core::train::TrainConfig;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::tu::FeaturePolicy;

/// Environment variable consulted when a config names no data root.
pub const DATA_ENV: &str = "GRAPHCLOAK_DATA";

pub const DEFAULT_SEEDS: [u64; 3] = [0, 402, 6178];

trait Named: Sized + Copy {
    const WHAT: &'static str;
    fn name(self) -> &'static str;
    fn from_name(s: &str) -> Option<Self>;
}

impl Named for Arch {
    const WHAT: &'static str = "architecture";
    fn name(self) -> &'static str {
        self.as_str()
    }
    fn from_name(s: &str) -> Option<Self> {
        Arch::parse(s)
    }
}

impl Named for Method {
    const WHAT: &'static str = "method";
    fn name(self) -> &'static str {
        self.as_str()
    }
    fn from_name(s: &str) -> Option<Self> {
        Method::parse(s)
    }
}

fn unknown<T: Named, E: serde::de::Error>(s: &str) -> E {
    E::custom(format!("unknown {} {s:?}", T::WHAT))
}

mod named {
    use super::*;
    use serde::{Deserializer, Serializer};

    pub fn serialize<T: Named, S: Serializer>(x: &T, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(x.name())
    }

    pub fn deserialize<'de, T: Named, D: Deserializer<'de>>(d: D) -> std::result::Result<T, D::Error> {
        let s = String::deserialize(d)?;
        T::from_name(&s).ok_or_else(|| unknown::<T, _>(&s))
    }
}

mod named_list {
    use super::*;
    use serde::{Deserializer, Serializer};

    pub fn serialize<T: Named, S: Serializer>(xs: &[T], s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_seq(xs.iter().map(|x| x.name()))
    }

    pub fn deserialize<'de, T: Named, D: Deserializer<'de>>(d: D) -> std::result::Result<Vec<T>, D::Error> {
        Vec::<String>::deserialize(d)?
            .iter()
            .map(|s| T::from_name(s).ok_or_else(|| unknown::<T, _>(s)))
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    Main,
    PoisonRate,
    Transfer,
    Countermeasures,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSection {
    pub lr: f64,
    pub weight_decay: f64,
    pub lr_factor: f64,
    pub lr_patience: usize,
    pub early_stop_patience: usize,
    pub batch_size: usize,
    pub max_epochs: usize,
}

impl Default for TrainSection {
    fn default() -> Self {
        let t = TrainConfig::default();
        Self {
            lr: t.lr,
            weight_decay: t.weight_decay,
            lr_factor: t.lr_factor,
            lr_patience: t.lr_patience,
            early_stop_patience: t.early_stop_patience,
            batch_size: t.batch_size,
            max_epochs: t.max_epochs,
        }
    }
}

impl TrainSection {
    pub fn with_seed(&self, seed: u64) -> TrainConfig {
        TrainConfig {
            lr: self.lr,
            weight_decay: self.weight_decay,
            lr_factor: self.lr_factor,
            lr_patience: self.lr_patience,
            early_stop_patience: self.early_stop_patience,
            batch_size: self.batch_size,
            max_epochs: self.max_epochs,
            seed,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PgdSection {
    pub step_size: f64,
    pub steps: usize,
    pub temperature: f64,
}

impl Default for PgdSection {
    fn default() -> Self {
        let p = PgdConfig::default();
        Self {
            step_size: p.step_size,
            steps: p.steps,
            temperature: p.temperature,
        }
    }
}

impl From<PgdSection> for PgdConfig {
    fn from(p: PgdSection) -> Self {
        PgdConfig {
            step_size: p.step_size,
            steps: p.steps,
            temperature: p.temperature,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SubInjSection {
    pub density: f64,
    pub trigger_cap: usize,
}

impl Default for SubInjSection {
    fn default() -> Self {
        Self {
            density: 0.6,
            trigger_cap: 5,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CountermeasureSection {
    pub adversarial: bool,
    pub soft_median: bool,
    /// Soft Median temperature of the robust GCN.
    pub temperature: f64,
    /// Budget coefficient of the structural attack used in adversarial training.
    pub attack_beta: f64,
}

impl Default for CountermeasureSection {
    fn default() -> Self {
        Self {
            adversarial: true,
            soft_median: true,
            temperature: DEFAULT_SOFT_MEDIAN_TEMPERATURE,
            attack_beta: DEFAULT_BETA,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TransferSection {
    #[serde(with = "named_list")]
    pub sources: Vec<Arch>,
    #[serde(with = "named_list")]
    pub victims: Vec<Arch>,
}

impl Default for TransferSection {
    fn default() -> Self {
        Self {
            sources: vec![Arch::Gcn],
            victims: Arch::ALL.to_vec(),
        }
    }
}

fn default_victims() -> Vec<Arch> {
    vec![Arch::Gcn]
}
fn default_surrogate() -> Arch {
    Arch::Gcn
}
fn default_seeds() -> Vec<u64> {
    DEFAULT_SEEDS.to_vec()
}
fn default_beta() -> f64 {
    DEFAULT_BETA
}
fn default_rates() -> Vec<f64> {
    vec![1.0]
}
fn default_n_steps() -> usize {
    5000
}
fn default_split() -> [f64; 3] {
    [0.8, 0.1, 0.1]
}
fn default_features() -> FeaturePolicy {
    FeaturePolicy::NodeLabels
}
fn default_experiments() -> Vec<ExperimentKind> {
    vec![ExperimentKind::Main]
}
fn default_output_dir() -> PathBuf {
    PathBuf::from("runs")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub dataset: String,
    #[serde(default)]
    pub data_root: Option<PathBuf>,
    #[serde(default = "default_features")]
    pub features: FeaturePolicy,
    #[serde(default = "default_victims", with = "named_list")]
    pub victims: Vec<Arch>,
    #[serde(default = "default_surrogate", with = "named")]
    pub surrogate: Arch,
    #[serde(with = "named_list")]
    pub methods: Vec<Method>,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default = "default_beta")]
    pub beta: f64,
    #[serde(default = "default_rates")]
    pub poison_rates: Vec<f64>,
    #[serde(default = "default_n_steps")]
    pub n_steps: usize,
    #[serde(default = "default_split")]
    pub split: [f64; 3],
    #[serde(default)]
    pub exact: bool,
    #[serde(default)]
    pub final_pass: bool,
    #[serde(default)]
    pub train: TrainSection,
    #[serde(default)]
    pub pgd: PgdSection,
    #[serde(default)]
    pub subinj: SubInjSection,
    #[serde(default)]
    pub countermeasures: CountermeasureSection,
    #[serde(default)]
    pub transfer: TransferSection,
    #[serde(default = "default_experiments")]
    pub experiments: Vec<ExperimentKind>,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
}

impl ExperimentConfig {
    /// A config with every default filled in.
    pub fn new(dataset: impl Into<String>, methods: Vec<Method>) -> Self {
        Self {
            dataset: dataset.into(),
            data_root: None,
            features: default_features(),
            victims: default_victims(),
            surrogate: default_surrogate(),
            methods,
            seeds: default_seeds(),
            beta: default_beta(),
            poison_rates: default_rates(),
            n_steps: default_n_steps(),
            split: default_split(),
            exact: false,
            final_pass: false,
            train: TrainSection::default(),
            pgd: PgdSection::default(),
            subinj: SubInjSection::default(),
            countermeasures: CountermeasureSection::default(),
            transfer: TransferSection::default(),
            experiments: default_experiments(),
            output_dir: default_output_dir(),
        }
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::from_toml(&text)?;
        // Relative paths in a config file are relative to that file.
        let base = path.parent().unwrap_or(Path::new(""));
        if let Some(root) = cfg.data_root.as_mut().filter(|r| r.is_relative()) {
            *root = base.join(&*root);
        }
        if cfg.output_dir.is_relative() {
            cfg.output_dir = base.join(&cfg.output_dir);
        }
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.dataset.is_empty() {
            return bad("dataset name is empty".into());
        }
        if self.seeds.is_empty() || self.victims.is_empty() || self.poison_rates.is_empty() {
            return bad("seeds, victims and poison_rates must be non-empty".into());
        }
        if let Some(r) = self.poison_rates.iter().find(|r| !(0.0..=1.0).contains(*r)) {
            return bad(format!("poison rate {r} outside [0, 1]"));
        }
        if !(self.beta >= 0.0) {
            return bad(format!("beta {} must be ≥ 0", self.beta));
        }
        if self.n_steps == 0 {
            return bad("n_steps must be at least 1".into());
        }
        if self.split.iter().any(|f| !(*f > 0.0)) || (self.split.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return bad(format!("split fractions {:?} must be positive and sum to 1", self.split));
        }
        if self.transfer.sources.is_empty() || self.transfer.victims.is_empty() {
            return bad("transfer sources and victims must be non-empty".into());
        }
        self.train.with_seed(0).validate()?;
        if !(self.countermeasures.temperature > 0.0) {
            return bad("soft-median temperature must be > 0".into());
        }
        Ok(())
    }

    /// SHA-256 over every field that affects results. `output_dir` and
    /// `data_root` only say where things live and are excluded.
    pub fn hash(&self) -> String {
        let mut canonical = self.clone();
        canonical.output_dir = PathBuf::new();
        canonical.data_root = None;
        let bytes = serde_json::to_vec(&canonical).expect("config serializes");
        hex::encode(Sha256::digest(bytes))
    }

    /// Cloak job of one method and seed at the given poison rate.
    pub fn job(&self, method: Method, seed: u64, poison_rate: f64) -> CloakJob {
        CloakJob {
            surrogate: self.surrogate,
            train: self.train.with_seed(seed),
            n_steps: self.n_steps,
            pgd: self.pgd.into(),
            poison_rate,
            beta: self.beta,
            density: self.subinj.density,
            trigger_cap: self.subinj.trigger_cap,
            exact: self.exact,
            final_pass: self.final_pass,
            ..CloakJob::new(method, seed)
        }
    }

    /// Data root: the configured one, else `$GRAPHCLOAK_DATA`, else `./data`.
    pub fn resolve_data_root(&self) -> PathBuf {
        resolve_data_root(self.data_root.as_deref())
    }
}

pub fn resolve_data_root(configured: Option<&Path>) -> PathBuf {
    match configured {
        Some(p) => p.to_path_buf(),
        None => std::env::var_os(DATA_ENV).map_or_else(|| PathBuf::from("data"), PathBuf::from),
    }
}
