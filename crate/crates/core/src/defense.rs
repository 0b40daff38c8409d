//! Attacker-side countermeasures: adversarial training and the Soft Median
//! robust GCN.

use crate::budget::{compute_budget, DEFAULT_BETA};
use crate::cloak::{flip_step, Objective, PgdConfig};
use crate::gnn::{Aggregation, Arch, GnnModel, GraphInput, ModelSpec};
use crate::graph::{Graph, GraphDataset};
use crate::train::{train_with, History, InputPerturber, TrainConfig};
use crate::{Error, Result};

pub const DEFAULT_SOFT_MEDIAN_TEMPERATURE: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AttackSpace {
    /// Error-maximizing edge flips.
    Structure,
    /// Signed-gradient ascent on the relaxed features.
    Feature,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AttackConfig {
    pub space: AttackSpace,
    /// Budget coefficient for the per-graph flip allowance.
    pub beta: f64,
    /// Overrides the per-graph flip allowance; `Some(0)` disables the attack.
    pub max_flips: Option<usize>,
    /// Step size and step count of the feature attack. Temperature is unused.
    pub pgd: PgdConfig,
}

impl AttackConfig {
    pub fn new(space: AttackSpace) -> Self {
        Self {
            space,
            beta: DEFAULT_BETA,
            max_flips: None,
            pgd: PgdConfig::default(),
        }
    }

    /// An attack that never changes its input.
    pub fn disabled(space: AttackSpace) -> Self {
        Self {
            max_flips: Some(0),
            pgd: PgdConfig {
                steps: 0,
                ..PgdConfig::default()
            },
            ..Self::new(space)
        }
    }

    fn flip_budget(&self, g: &Graph) -> usize {
        self.max_flips
            .unwrap_or_else(|| compute_budget(g.edge_count(), g.node_count(), self.beta))
    }
}

/// Perturbs each training graph against the current model right before it
/// enters a batch.
pub struct AdversarialPerturber {
    pub config: AttackConfig,
}

impl InputPerturber for AdversarialPerturber {
    fn perturb(&mut self, model: &GnnModel, g: &Graph) -> Result<Option<GraphInput>> {
        match self.config.space {
            AttackSpace::Structure => {
                let c = self.config.flip_budget(g);
                if c == 0 {
                    return Ok(None);
                }
                let attacked = flip_step(model, g, g, c, Objective::Maximize, false)?;
                Ok(Some(GraphInput::from_graph(&attacked)))
            }
            AttackSpace::Feature => {
                let pgd = &self.config.pgd;
                if pgd.steps == 0 || pgd.step_size == 0.0 {
                    return Ok(None);
                }
                let mut input = GraphInput::from_graph(g);
                for _ in 0..pgd.steps {
                    let grad = model.gradients(&input, g.label())?.d_features;
                    for (x, d) in input.features.as_mut_slice().iter_mut().zip(grad.as_slice()) {
                        if *d > 0.0 {
                            *x += pgd.step_size;
                        } else if *d < 0.0 {
                            *x -= pgd.step_size;
                        }
                    }
                }
                Ok(Some(input))
            }
        }
    }
}

/// Standard training where every batch is first attacked in `attack.space`.
pub fn adversarial_train(
    model: GnnModel,
    ds: &GraphDataset,
    cfg: &TrainConfig,
    attack: &AttackConfig,
) -> Result<(GnnModel, History)> {
    let mut perturber = AdversarialPerturber { config: attack.clone() };
    train_with(model, ds, cfg, &mut perturber)
}

/// GCN whose neighbourhood aggregation is the Soft Median at `temperature`.
pub fn robust_spec(input_dim: usize, classes: usize, temperature: f64) -> Result<ModelSpec> {
    let mut spec = ModelSpec::new(Arch::Gcn, input_dim, classes);
    spec.aggregation = Aggregation::SoftMedian { temperature };
    spec.validate()?;
    Ok(spec)
}

/// Swaps a GCN's aggregation for the Soft Median, keeping its parameters.
pub fn robust_model(model: GnnModel, temperature: f64) -> Result<GnnModel> {
    if model.spec().arch != Arch::Gcn {
        return Err(Error::Unsupported("the robust variant is defined for GCN only"));
    }
    model.with_aggregation(Aggregation::SoftMedian { temperature })
}
