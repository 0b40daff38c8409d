//! Perturbation generators.
//!
//! * `EMinS` / `EMaxS`: gradient-ranked edge flips that decrease / increase
//!   the surrogate loss, inside the alternating surrogate-training loop.
//! * `EMinF`: signed-gradient descent on relaxed one-hot features followed
//!   by temperature-softmax sampling, inside the same loop.
//! * `SubInj`: one Erdős–Rényi trigger per class planted on random nodes.
//! * `Random`: uniformly chosen edge flips.
//!
//! Every generator charges its edits against the ORIGINAL graph and never
//! exceeds the per-graph budget.

mod feature;
mod minmin;
mod random;
mod structure;
mod subinj;

use alloc::format;
use alloc::vec::Vec;

use rand::seq::SliceRandom;

use crate::budget::{graph_budget, DEFAULT_BETA};
use crate::gnn::{Arch, GnnModel};
use crate::graph::{apportion, Graph, GraphDataset};
use crate::train::TrainConfig;
use crate::{Error, Result, Rng};

pub use feature::{eminf_step, tempered_softmax};
pub use minmin::emin_min_loop;
pub use random::random_cloak;
pub use structure::{admissible, apply_flips, emaxs_step, emins_step, flip_step, rank_pairs, Objective};
pub use subinj::{dataset_trigger_size, inject_trigger, injection_cost, subinj_cloak, SubgraphTrigger};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Method {
    EMinS,
    EMinF,
    SubInj,
    Random,
    EMaxS,
}

impl Method {
    pub const ALL: [Method; 5] = [Method::EMinS, Method::EMinF, Method::SubInj, Method::Random, Method::EMaxS];

    pub fn as_str(self) -> &'static str {
        match self {
            Method::EMinS => "emins",
            Method::EMinF => "eminf",
            Method::SubInj => "subinj",
            Method::Random => "random",
            Method::EMaxS => "emaxs",
        }
    }

    pub fn parse(s: &str) -> Option<Method> {
        Method::ALL.into_iter().find(|m| m.as_str().eq_ignore_ascii_case(s))
    }

    /// Which distance the budget bounds for this method.
    pub fn cost(self, cloaked: &Graph, original: &Graph) -> usize {
        match self {
            Method::EMinS | Method::EMaxS | Method::Random => cloaked.edit_distance(original),
            Method::EMinF => cloaked.feature_cost(original),
            Method::SubInj => cloaked.edit_distance(original) + cloaked.feature_cost(original),
        }
    }

    /// Whether the method trains a surrogate model.
    pub fn needs_surrogate(self) -> bool {
        matches!(self, Method::EMinS | Method::EMinF | Method::EMaxS)
    }
}

impl core::fmt::Display for Method {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Projected gradient descent with softmax sampling.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PgdConfig {
    pub step_size: f64,
    pub steps: usize,
    pub temperature: f64,
}

impl Default for PgdConfig {
    fn default() -> Self {
        Self {
            step_size: 0.025,
            steps: 4,
            temperature: 5.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CloakJob {
    pub method: Method,
    pub surrogate: Arch,
    /// Learning rate, weight decay and batch size of the surrogate updates.
    pub train: TrainConfig,
    /// Alternating iterations (one batch perturbation + one surrogate step each).
    pub n_steps: usize,
    pub pgd: PgdConfig,
    pub poison_rate: f64,
    pub beta: f64,
    /// Edge probability of SubInj triggers.
    pub density: f64,
    /// Upper bound on the SubInj trigger node count.
    pub trigger_cap: usize,
    /// Re-rank flips after every applied flip instead of once per iteration.
    pub exact: bool,
    /// After the loop, re-perturb every poisoned graph with the final surrogate.
    pub final_pass: bool,
    pub seed: u64,
}

impl CloakJob {
    pub fn new(method: Method, seed: u64) -> Self {
        Self {
            method,
            surrogate: Arch::Gcn,
            train: TrainConfig {
                seed,
                ..TrainConfig::default()
            },
            n_steps: 5000,
            pgd: PgdConfig::default(),
            poison_rate: 1.0,
            beta: DEFAULT_BETA,
            density: 0.6,
            trigger_cap: 5,
            exact: false,
            final_pass: false,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.poison_rate) {
            return Err(Error::InvalidArgument(format!("poison rate {} outside [0, 1]", self.poison_rate)));
        }
        if self.method.needs_surrogate() && self.n_steps == 0 {
            return Err(Error::InvalidArgument("n_steps must be at least 1".into()));
        }
        if !(self.beta >= 0.0) {
            return Err(Error::InvalidArgument(format!("beta {} must be ≥ 0", self.beta)));
        }
        if !(self.pgd.temperature > 0.0) || !(self.pgd.step_size >= 0.0) {
            return Err(Error::InvalidArgument("PGD temperature must be > 0 and step size ≥ 0".into()));
        }
        if self.trigger_cap == 0 {
            return Err(Error::InvalidArgument("trigger cap must be at least 1".into()));
        }
        self.train.validate()
    }
}

/// Budget accounting of one training graph.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GraphUsage {
    pub index: usize,
    pub budget: usize,
    pub used: usize,
    pub poisoned: bool,
}

#[derive(Debug, Clone)]
pub struct CloakOutcome {
    pub dataset: GraphDataset,
    pub usage: Vec<GraphUsage>,
    pub triggers: Vec<SubgraphTrigger>,
    pub surrogate: Option<GnnModel>,
}

/// Independent generator streams so that, e.g., changing the batch sampler
/// never shifts the poison selection.
pub(crate) mod stream {
    pub const POISON: u64 = 1;
    pub const SURROGATE: u64 = 2;
    pub const BATCH: u64 = 3;
    pub const SAMPLING: u64 = 4;
    pub const FLIPS: u64 = 5;
    pub const TRIGGER: u64 = 6;
    pub const INJECT: u64 = 7;
}

pub(crate) fn stream_rng(seed: u64, stream: u64) -> Rng {
    crate::seeded_stream(seed, stream)
}

/// Picks `⌊rate·|train|⌋` training graphs, stratified by class.
/// Returned indices refer to `ds.graphs` and are sorted.
pub fn select_poisoned(ds: &GraphDataset, rate: f64, rng: &mut Rng) -> Result<Vec<usize>> {
    if !(0.0..=1.0).contains(&rate) {
        return Err(Error::InvalidArgument(format!("poison rate {rate} outside [0, 1]")));
    }
    let train = &ds.split()?.train;
    let total = libm::floor(rate * train.len() as f64 + 1e-9) as usize;
    let mut by_class: Vec<Vec<usize>> = alloc::vec![Vec::new(); ds.class_count];
    for &i in train {
        by_class[ds.graphs[i].label()].push(i);
    }
    let counts: Vec<usize> = by_class.iter().map(Vec::len).collect();
    let quota = apportion(&counts, total, &counts);
    let mut chosen = Vec::with_capacity(total);
    for (members, q) in by_class.iter_mut().zip(quota) {
        members.shuffle(rng);
        chosen.extend_from_slice(&members[..q]);
    }
    chosen.sort_unstable();
    Ok(chosen)
}

/// Runs the generator selected by `job.method`.
pub fn cloak(ds: &GraphDataset, job: &CloakJob) -> Result<CloakOutcome> {
    job.validate()?;
    match job.method {
        Method::EMinS | Method::EMinF | Method::EMaxS => emin_min_loop(job, ds),
        Method::Random => random_cloak(ds, job.beta, job.poison_rate, job.seed),
        Method::SubInj => subinj_cloak(ds, job),
    }
}

/// Budget and cost of every training graph against the original dataset.
pub(crate) fn usage_report(
    method: Method,
    original: &GraphDataset,
    cloaked: &GraphDataset,
    poisoned: &[usize],
    beta: f64,
) -> Result<Vec<GraphUsage>> {
    let train = &original.split()?.train;
    Ok(train
        .iter()
        .map(|&i| GraphUsage {
            index: i,
            budget: graph_budget(&original.graphs[i], beta),
            used: method.cost(&cloaked.graphs[i], &original.graphs[i]),
            poisoned: poisoned.binary_search(&i).is_ok(),
        })
        .collect())
}
