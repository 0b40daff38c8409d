//! Mini-batch training with plateau LR decay, early stopping and
//! best-validation-loss restoration.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;

use crate::gnn::{cross_entropy, predict, GnnModel, GraphInput, Mode};
use crate::graph::{Graph, GraphDataset};
use crate::optim::{Adam, PlateauScheduler};
use crate::{seeded_rng, Error, Result, Rng};

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub lr: f64,
    pub weight_decay: f64,
    /// Multiplier applied on a validation-loss plateau.
    pub lr_factor: f64,
    pub lr_patience: usize,
    pub early_stop_patience: usize,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr: 1e-2,
            weight_decay: 1e-4,
            lr_factor: 0.25,
            lr_patience: 20,
            early_stop_patience: 50,
            batch_size: 32,
            max_epochs: 300,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.lr_patience == 0 || self.early_stop_patience == 0 {
            return Err(Error::InvalidArgument("patience values must be positive".into()));
        }
        if !(self.lr_factor > 0.0 && self.lr_factor < 1.0) {
            return Err(Error::InvalidArgument(format!("lr factor {} outside (0, 1)", self.lr_factor)));
        }
        if self.batch_size == 0 || self.max_epochs == 0 {
            return Err(Error::InvalidArgument("batch size and epoch count must be positive".into()));
        }
        if !(self.lr > 0.0) || !(self.weight_decay >= 0.0) {
            return Err(Error::InvalidArgument("learning rate must be > 0, weight decay ≥ 0".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub lr: f64,
    pub train_loss: f64,
    pub train_acc: f64,
    pub val_loss: f64,
    pub val_acc: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct History {
    pub epochs: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub best_val_loss: f64,
}

/// Replaces a training graph's input right before it enters a batch.
/// Adversarial training plugs its attack in here.
pub trait InputPerturber {
    /// `None` keeps the clean input.
    fn perturb(&mut self, model: &GnnModel, graph: &Graph) -> Result<Option<GraphInput>>;
}

/// Standard training.
pub struct NoPerturbation;

impl InputPerturber for NoPerturbation {
    fn perturb(&mut self, _: &GnnModel, _: &Graph) -> Result<Option<GraphInput>> {
        Ok(None)
    }
}

pub fn train(model: GnnModel, ds: &GraphDataset, cfg: &TrainConfig) -> Result<(GnnModel, History)> {
    train_with(model, ds, cfg, &mut NoPerturbation)
}

/// Trains on `split.train`, monitors `split.val`, restores the parameters of
/// the epoch with the lowest validation loss.
pub fn train_with(
    mut model: GnnModel,
    ds: &GraphDataset,
    cfg: &TrainConfig,
    perturber: &mut dyn InputPerturber,
) -> Result<(GnnModel, History)> {
    cfg.validate()?;
    let split = ds.split()?;
    if split.train.is_empty() {
        return Err(Error::EmptySet("training split"));
    }
    if split.val.is_empty() {
        return Err(Error::EmptySet("validation split"));
    }
    let train_inputs: Vec<GraphInput> = split.train.iter().map(|&i| GraphInput::from_graph(&ds.graphs[i])).collect();
    let val_inputs: Vec<(GraphInput, usize)> = split
        .val
        .iter()
        .map(|&i| (GraphInput::from_graph(&ds.graphs[i]), ds.graphs[i].label()))
        .collect();

    let mut rng = seeded_rng(cfg.seed);
    let mut opt = Adam::new(model.param_count(), cfg.lr, cfg.weight_decay);
    let mut sched = PlateauScheduler::new(cfg.lr_factor, cfg.lr_patience);
    let mut history = History {
        best_val_loss: f64::INFINITY,
        ..History::default()
    };
    let mut best_params = model.params().to_vec();
    let mut order: Vec<usize> = (0..split.train.len()).collect();
    let mut step = 0;

    for epoch in 0..cfg.max_epochs {
        order.shuffle(&mut rng);
        let (mut loss_sum, mut correct) = (0.0, 0usize);
        for chunk in order.chunks(cfg.batch_size) {
            let mut batch: Vec<(GraphInput, usize)> = Vec::with_capacity(chunk.len());
            for &j in chunk {
                let g = &ds.graphs[split.train[j]];
                let input = match perturber.perturb(&model, g)? {
                    Some(p) => p,
                    None => train_inputs[j].clone(),
                };
                batch.push((input, g.label()));
            }
            let refs: Vec<(&GraphInput, usize)> = batch.iter().map(|(x, y)| (x, *y)).collect();
            let (l, c) = minibatch_step(&mut model, &mut opt, &refs, &mut rng, step)?;
            loss_sum += l;
            correct += c;
            step += 1;
        }
        let n_train = split.train.len() as f64;
        let (val_loss, val_acc) = loss_and_accuracy(&model, val_inputs.iter().map(|(x, y)| (x, *y)))?;
        history.epochs.push(EpochRecord {
            epoch,
            lr: opt.lr,
            train_loss: loss_sum / n_train,
            train_acc: correct as f64 / n_train,
            val_loss,
            val_acc,
        });
        if val_loss < history.best_val_loss {
            history.best_val_loss = val_loss;
            history.best_epoch = epoch;
            best_params.copy_from_slice(model.params());
        }
        sched.step(val_loss, &mut opt.lr);
        if epoch - history.best_epoch >= cfg.early_stop_patience {
            break;
        }
    }
    model.params_mut().copy_from_slice(&best_params);
    Ok((model, history))
}

/// One optimiser step on the mean loss of `batch`. Returns the summed loss
/// and the number of correct train-mode predictions.
pub fn minibatch_step(
    model: &mut GnnModel,
    opt: &mut Adam,
    batch: &[(&GraphInput, usize)],
    rng: &mut Rng,
    step: usize,
) -> Result<(f64, usize)> {
    if batch.is_empty() {
        return Ok((0.0, 0));
    }
    let mut grad = vec![0.0; model.param_count()];
    let (mut loss_sum, mut correct) = (0.0, 0);
    for &(input, label) in batch {
        let fwd = match model.forward(input, Mode::Train(rng)) {
            Ok(f) => f,
            Err(Error::NonFinite(_)) => return Err(Error::Diverged { step, loss: f64::NAN }),
            Err(e) => return Err(e),
        };
        correct += usize::from(predict(&fwd.logits) == label);
        let g = model.backward(&fwd, label)?;
        if !g.loss.is_finite() {
            return Err(Error::Diverged { step, loss: g.loss });
        }
        loss_sum += g.loss;
        for (a, b) in grad.iter_mut().zip(&g.d_theta) {
            *a += b;
        }
    }
    let scale = 1.0 / batch.len() as f64;
    for x in &mut grad {
        *x *= scale;
    }
    opt.step(model.params_mut(), &grad);
    if model.params().iter().any(|x| !x.is_finite()) {
        return Err(Error::Diverged {
            step,
            loss: loss_sum * scale,
        });
    }
    Ok((loss_sum, correct))
}

/// Eval-mode mean loss and accuracy.
pub fn loss_and_accuracy<'a>(
    model: &GnnModel,
    items: impl Iterator<Item = (&'a GraphInput, usize)>,
) -> Result<(f64, f64)> {
    let (mut loss, mut correct, mut count) = (0.0, 0usize, 0usize);
    for (input, label) in items {
        let fwd = model.forward(input, Mode::Eval)?;
        loss += cross_entropy(&fwd.logits, label)?;
        correct += usize::from(predict(&fwd.logits) == label);
        count += 1;
    }
    if count == 0 {
        return Err(Error::EmptySet("evaluation set"));
    }
    Ok((loss / count as f64, correct as f64 / count as f64))
}

/// Arg-max accuracy in `[0, 1]`, ties to the lowest class index.
pub fn evaluate(model: &GnnModel, graphs: &[&Graph]) -> Result<f64> {
    if graphs.is_empty() {
        return Err(Error::EmptySet("evaluation set"));
    }
    let mut correct = 0;
    for g in graphs {
        correct += usize::from(predict(&model.logits(g)?) == g.label());
    }
    Ok(correct as f64 / graphs.len() as f64)
}

/// Accuracy on the dataset's test split.
pub fn test_accuracy(model: &GnnModel, ds: &GraphDataset) -> Result<f64> {
    evaluate(model, &ds.subset(&ds.split()?.test))
}
