//! GradArgMax edge flips.

use alloc::vec::Vec;

use crate::gnn::{Aggregation, GnnModel, GraphInput};
use crate::graph::Graph;
use crate::matrix::Matrix;
use crate::{Error, Result};

/// Direction in which flips move the surrogate loss.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Objective {
    Minimize,
    Maximize,
}

/// Whether flipping a pair with the given presence and symmetrised gradient
/// moves the loss in the objective's direction to first order.
///
/// Minimizing deletes edges with a positive gradient and adds missing edges
/// with a negative one; maximizing is the mirror image. A zero gradient is
/// never admissible.
pub fn admissible(present: bool, grad: f64, objective: Objective) -> bool {
    match objective {
        Objective::Minimize => (present && grad > 0.0) || (!present && grad < 0.0),
        Objective::Maximize => (present && grad < 0.0) || (!present && grad > 0.0),
    }
}

/// All unordered pairs `(u, v, grad)` with `u < v`, sorted by `|grad|`
/// descending, then `u`, then `v`.
pub fn rank_pairs(d_adjacency: &Matrix) -> Vec<(usize, usize, f64)> {
    let n = d_adjacency.rows();
    let mut pairs = Vec::with_capacity(n * n.saturating_sub(1) / 2);
    for u in 0..n {
        for v in (u + 1)..n {
            pairs.push((u, v, d_adjacency[(u, v)]));
        }
    }
    pairs.sort_by(|a, b| {
        libm::fabs(b.2)
            .total_cmp(&libm::fabs(a.2))
            .then(a.0.cmp(&b.0))
            .then(a.1.cmp(&b.1))
    });
    pairs
}

fn adjacency_gradient(model: &GnnModel, g: &Graph) -> Result<Matrix> {
    if matches!(model.spec().aggregation, Aggregation::SoftMedian { .. }) {
        return Err(Error::Unsupported("structural cloaking needs an adjacency gradient; soft-median models have none"));
    }
    Ok(model.gradients(&GraphInput::from_graph(g), g.label())?.d_adjacency)
}

/// Cost change of flipping `(u, v)` relative to the original graph: `+1` if
/// the pair currently agrees with `orig`, `-1` if the flip reverts it.
fn flip_delta(g: &Graph, orig: &Graph, u: usize, v: usize) -> isize {
    if g.has_edge(u, v) == orig.has_edge(u, v) {
        1
    } else {
        -1
    }
}

/// One GradArgMax step on a frozen model.
///
/// Ranks pairs once and applies at most `c` admissible flips in rank order,
/// skipping any flip that would take the edit distance to `orig` above `c`.
/// With `exact`, the gradient is recomputed after every applied flip.
pub fn flip_step(
    model: &GnnModel,
    g: &Graph,
    orig: &Graph,
    c: usize,
    objective: Objective,
    exact: bool,
) -> Result<Graph> {
    let mut out = g.clone();
    if exact {
        let mut used = out.edit_distance(orig) as isize;
        for _ in 0..c {
            let grad = adjacency_gradient(model, &out)?;
            let pick = rank_pairs(&grad).into_iter().find(|&(u, v, d)| {
                admissible(out.has_edge(u, v), d, objective) && used + flip_delta(&out, orig, u, v) <= c as isize
            });
            let Some((u, v, _)) = pick else { break };
            used += flip_delta(&out, orig, u, v);
            out.flip_edge(u, v);
        }
        return Ok(out);
    }
    let grad = adjacency_gradient(model, &out)?;
    Ok(apply_flips(&out, orig, &grad, c, objective))
}

/// Applies at most `c` admissible flips of `grad`'s ranking to `g`, skipping
/// any flip that would take the edit distance to `orig` above `c`.
pub fn apply_flips(g: &Graph, orig: &Graph, grad: &Matrix, c: usize, objective: Objective) -> Graph {
    let mut out = g.clone();
    let mut used = out.edit_distance(orig) as isize;
    let mut applied = 0;
    for (u, v, d) in rank_pairs(grad) {
        if applied == c {
            break;
        }
        if !admissible(out.has_edge(u, v), d, objective) {
            continue;
        }
        let delta = flip_delta(&out, orig, u, v);
        if used + delta > c as isize {
            continue;
        }
        used += delta;
        out.flip_edge(u, v);
        applied += 1;
    }
    out
}

/// Error-minimizing structural step.
pub fn emins_step(model: &GnnModel, g: &Graph, orig: &Graph, c: usize) -> Result<Graph> {
    flip_step(model, g, orig, c, Objective::Minimize, false)
}

/// Error-maximizing structural step.
pub fn emaxs_step(model: &GnnModel, g: &Graph, orig: &Graph, c: usize) -> Result<Graph> {
    flip_step(model, g, orig, c, Objective::Maximize, false)
}
