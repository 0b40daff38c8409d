//! Class-wise Erdős–Rényi trigger injection.

use alloc::vec::Vec;

use rand::seq::index;
use rand::Rng as _;

use super::{select_poisoned, stream, stream_rng, usage_report, CloakJob, CloakOutcome, Method};
use crate::budget::{graph_budget, trigger_size};
use crate::generate::erdos_renyi;
use crate::graph::{Graph, GraphDataset};
use crate::{Error, Result};

/// Attempts at finding a node set whose injection fits the graph's budget.
const PLACEMENT_ATTEMPTS: usize = 16;

/// The subgraph planted into every poisoned graph of one class.
#[derive(Debug, Clone, PartialEq)]
pub struct SubgraphTrigger {
    pub class_id: usize,
    pub node_count: usize,
    pub density: f64,
    /// Trigger-local pairs `(a, b)` with `a < b`.
    pub edges: Vec<(usize, usize)>,
    /// Feature class of each trigger node.
    pub features: Vec<usize>,
}

/// Overwrites the subgraph induced by `nodes` with `trigger`: trigger node
/// `j` lands on `nodes[j]`.
pub fn inject_trigger(g: &Graph, trigger: &SubgraphTrigger, nodes: &[usize]) -> Graph {
    assert_eq!(nodes.len(), trigger.node_count, "one target node per trigger node");
    let mut out = g.clone();
    for a in 0..nodes.len() {
        for b in (a + 1)..nodes.len() {
            out.set_edge(nodes[a], nodes[b], false);
        }
    }
    for &(a, b) in &trigger.edges {
        out.set_edge(nodes[a], nodes[b], true);
    }
    for (j, &v) in nodes.iter().enumerate() {
        out.set_feature(v, trigger.features[j]);
    }
    out
}

/// Combined cost: edge edit distance plus changed feature rows.
pub fn injection_cost(injected: &Graph, orig: &Graph) -> usize {
    injected.edit_distance(orig) + injected.feature_cost(orig)
}

/// Trigger node count for a dataset: the clamped size for the lower median
/// of the training budgets, capped at `cap`.
pub fn dataset_trigger_size(ds: &GraphDataset, beta: f64, cap: usize) -> Result<usize> {
    let mut budgets: Vec<usize> = ds.split()?.train.iter().map(|&i| graph_budget(&ds.graphs[i], beta)).collect();
    if budgets.is_empty() {
        return Err(Error::EmptySet("training split"));
    }
    budgets.sort_unstable();
    let median = budgets[(budgets.len() - 1) / 2];
    Ok(trigger_size(median).min(cap))
}

fn make_triggers(ds: &GraphDataset, n: usize, density: f64, seed: u64) -> Result<Vec<SubgraphTrigger>> {
    let mut rng = stream_rng(seed, stream::TRIGGER);
    let mut triggers: Vec<SubgraphTrigger> = Vec::with_capacity(ds.class_count);
    for class_id in 0..ds.class_count {
        // Identical triggers for two classes would carry no label signal, so
        // redraw on collision while distinct triggers remain possible.
        let distinct_possible = distinct_capacity(n, ds.feature_dim) > class_id;
        let trigger = loop {
            let adj = erdos_renyi(n, density, &mut rng)?;
            let t = SubgraphTrigger {
                class_id,
                node_count: n,
                density,
                edges: adj.edges().collect(),
                features: (0..n).map(|_| rng.random_range(0..ds.feature_dim)).collect(),
            };
            let clash = triggers.iter().any(|o| o.edges == t.edges && o.features == t.features);
            if !clash || !distinct_possible {
                break t;
            }
        };
        triggers.push(trigger);
    }
    Ok(triggers)
}

/// Lower bound on the number of distinct triggers (feature assignments
/// alone), saturating.
fn distinct_capacity(n: usize, feature_dim: usize) -> usize {
    let mut cap: usize = 1;
    for _ in 0..n {
        cap = cap.saturating_mul(feature_dim);
    }
    cap
}

/// Plants the class trigger into each poisoned training graph.
///
/// A poisoned graph whose injection exceeds its budget on every placement
/// attempt is left clean; its usage row reports zero cost.
pub fn subinj_cloak(ds: &GraphDataset, job: &CloakJob) -> Result<CloakOutcome> {
    job.validate()?;
    if !(0.0..=1.0).contains(&job.density) {
        return Err(Error::InvalidArgument(alloc::format!("trigger density {} outside [0, 1]", job.density)));
    }
    let n = dataset_trigger_size(ds, job.beta, job.trigger_cap)?;
    let triggers = make_triggers(ds, n, job.density, job.seed)?;
    let poisoned = select_poisoned(ds, job.poison_rate, &mut stream_rng(job.seed, stream::POISON))?;
    let mut rng = stream_rng(job.seed, stream::INJECT);
    let mut cloaked = ds.clone();
    for &i in &poisoned {
        let orig = &ds.graphs[i];
        if orig.node_count() < n {
            return Err(Error::GraphTooSmall {
                graph: i,
                nodes: orig.node_count(),
                needed: n,
            });
        }
        let c = graph_budget(orig, job.beta);
        let trigger = &triggers[orig.label()];
        for _ in 0..PLACEMENT_ATTEMPTS {
            let nodes = index::sample(&mut rng, orig.node_count(), n).into_vec();
            let injected = inject_trigger(orig, trigger, &nodes);
            if injection_cost(&injected, orig) <= c {
                cloaked.graphs[i] = injected;
                break;
            }
        }
    }
    let usage = usage_report(Method::SubInj, ds, &cloaked, &poisoned, job.beta)?;
    Ok(CloakOutcome {
        dataset: cloaked,
        usage,
        triggers,
        surrogate: None,
    })
}
