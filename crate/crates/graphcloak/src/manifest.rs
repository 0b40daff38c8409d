//! Sidecar manifest written next to every cloaked dataset.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use graphcloak_core::cloak::{CloakJob, CloakOutcome, GraphUsage, SubgraphTrigger};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MANIFEST_FILE: &str = "cloak_manifest.json";
const FORMAT: &str = "graphcloak-cloak-manifest";
const VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq, Eq)]
pub struct UsageRecord {
    pub index: usize,
    pub budget: usize,
    pub used: usize,
    pub poisoned: bool,
}

impl From<&GraphUsage> for UsageRecord {
    fn from(u: &GraphUsage) -> Self {
        Self {
            index: u.index,
            budget: u.budget,
            used: u.used,
            poisoned: u.poisoned,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct TriggerRecord {
    pub class_id: usize,
    pub node_count: usize,
    pub density: f64,
    pub edges: Vec<(usize, usize)>,
    pub features: Vec<usize>,
}

impl From<&SubgraphTrigger> for TriggerRecord {
    fn from(t: &SubgraphTrigger) -> Self {
        Self {
            class_id: t.class_id,
            node_count: t.node_count,
            density: t.density,
            edges: t.edges.clone(),
            features: t.features.clone(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct CloakManifest {
    pub format: String,
    pub version: u32,
    pub dataset: String,
    pub method: String,
    pub seed: u64,
    pub beta: f64,
    pub poison_rate: f64,
    /// Surrogate architecture and loop length; absent for surrogate-free methods.
    pub surrogate: Option<String>,
    pub n_steps: Option<usize>,
    pub final_pass: bool,
    pub exact: bool,
    pub usage: Vec<UsageRecord>,
    pub triggers: Vec<TriggerRecord>,
    /// Parameter digest of the final surrogate checkpoint.
    pub surrogate_sha256: Option<String>,
}

impl CloakManifest {
    pub fn new(job: &CloakJob, outcome: &CloakOutcome, surrogate_sha256: Option<String>) -> Self {
        let surrogate = job.method.needs_surrogate();
        Self {
            format: FORMAT.into(),
            version: VERSION,
            dataset: outcome.dataset.name.clone(),
            method: job.method.as_str().into(),
            seed: job.seed,
            beta: job.beta,
            poison_rate: job.poison_rate,
            surrogate: surrogate.then(|| job.surrogate.as_str().into()),
            n_steps: surrogate.then_some(job.n_steps),
            final_pass: job.final_pass,
            exact: job.exact,
            usage: outcome.usage.iter().map(UsageRecord::from).collect(),
            triggers: outcome.triggers.iter().map(TriggerRecord::from).collect(),
            surrogate_sha256,
        }
    }

    /// Count of poisoned graphs per amount of budget used.
    pub fn usage_histogram(&self) -> BTreeMap<usize, usize> {
        usage_histogram(self.usage.iter().map(|u| (u.poisoned, u.used)))
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        let path = dir.join(MANIFEST_FILE);
        fs::write(&path, serde_json::to_string_pretty(self)? + "\n").map_err(|e| Error::io(&path, e))
    }

    pub fn read(dir: &Path) -> Result<Self> {
        let path = dir.join(MANIFEST_FILE);
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let m: Self = serde_json::from_str(&text)?;
        if m.format != FORMAT || m.version != VERSION {
            return Err(Error::Format {
                what: "cloak manifest",
                message: format!("unsupported {} v{}", m.format, m.version),
            });
        }
        Ok(m)
    }
}

pub(crate) fn usage_histogram(rows: impl Iterator<Item = (bool, usize)>) -> BTreeMap<usize, usize> {
    let mut h = BTreeMap::new();
    for (_, used) in rows.filter(|r| r.0) {
        *h.entry(used).or_insert(0) += 1;
    }
    h
}
