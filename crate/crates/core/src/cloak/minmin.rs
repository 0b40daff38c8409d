//! Alternating perturbation / surrogate-update loop.

use alloc::vec::Vec;

use rand::seq::index;

use super::feature::eminf_step;
use super::structure::{flip_step, Objective};
use super::{select_poisoned, stream, stream_rng, usage_report, CloakJob, CloakOutcome, Method};
use crate::budget::graph_budget;
use crate::gnn::{GnnModel, GraphInput, ModelSpec};
use crate::graph::{Graph, GraphDataset};
use crate::optim::Adam;
use crate::train::minibatch_step;
use crate::{Error, Result, Rng};

/// Runs `job.n_steps` iterations of: sample a training batch, perturb its
/// poisoned members on the frozen surrogate, take one surrogate optimiser
/// step on the perturbed batch.
///
/// Perturbation state persists across iterations and is always charged
/// against the original graph. Validation and test graphs are never touched.
pub fn emin_min_loop(job: &CloakJob, ds: &GraphDataset) -> Result<CloakOutcome> {
    job.validate()?;
    if !job.method.needs_surrogate() {
        return Err(Error::InvalidArgument(alloc::format!(
            "{} does not use the alternating loop",
            job.method
        )));
    }
    let train = ds.split()?.train.clone();
    if train.is_empty() {
        return Err(Error::EmptySet("training split"));
    }
    let poisoned = select_poisoned(ds, job.poison_rate, &mut stream_rng(job.seed, stream::POISON))?;
    let mut is_poisoned = alloc::vec![false; ds.len()];
    for &i in &poisoned {
        is_poisoned[i] = true;
    }
    let budgets: Vec<usize> = ds.graphs.iter().map(|g| graph_budget(g, job.beta)).collect();

    let spec = ModelSpec::new(job.surrogate, ds.feature_dim, ds.class_count);
    let mut model = GnnModel::new(spec, &mut stream_rng(job.seed, stream::SURROGATE))?;
    let mut opt = Adam::new(model.param_count(), job.train.lr, job.train.weight_decay);
    let mut batch_rng = stream_rng(job.seed, stream::BATCH);
    let mut sample_rng = stream_rng(job.seed, stream::SAMPLING);
    let mut current = ds.graphs.clone();
    let batch_size = job.train.batch_size.min(train.len());

    let perturb = |model: &GnnModel, g: &Graph, i: usize, rng: &mut Rng| -> Result<Graph> {
        let orig = &ds.graphs[i];
        match job.method {
            Method::EMinS => flip_step(model, g, orig, budgets[i], Objective::Minimize, job.exact),
            Method::EMaxS => flip_step(model, g, orig, budgets[i], Objective::Maximize, job.exact),
            Method::EMinF => eminf_step(model, g, orig, budgets[i], &job.pgd, rng),
            Method::SubInj | Method::Random => unreachable!("checked above"),
        }
    };

    if !poisoned.is_empty() {
        for step in 0..job.n_steps {
            let picks = index::sample(&mut batch_rng, train.len(), batch_size);
            let mut inputs = Vec::with_capacity(batch_size);
            for k in picks.iter() {
                let i = train[k];
                if is_poisoned[i] {
                    current[i] = perturb(&model, &current[i], i, &mut sample_rng)?;
                }
                inputs.push((GraphInput::from_graph(&current[i]), current[i].label()));
            }
            let refs: Vec<(&GraphInput, usize)> = inputs.iter().map(|(x, y)| (x, *y)).collect();
            minibatch_step(&mut model, &mut opt, &refs, &mut batch_rng, step)?;
        }
        if job.final_pass {
            for &i in &poisoned {
                current[i] = perturb(&model, &current[i], i, &mut sample_rng)?;
            }
        }
    }

    let mut cloaked = ds.clone();
    cloaked.graphs = current;
    let usage = usage_report(job.method, ds, &cloaked, &poisoned, job.beta)?;
    Ok(CloakOutcome {
        dataset: cloaked,
        usage,
        triggers: Vec::new(),
        surrogate: Some(model),
    })
}
