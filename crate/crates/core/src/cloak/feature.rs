//! Feature PGD with temperature-softmax sampling.

use alloc::vec;
use alloc::vec::Vec;

use rand::Rng as _;

use super::PgdConfig;
use crate::gnn::{GnnModel, GraphInput};
use crate::graph::Graph;
use crate::{Result, Rng};

/// `softmax(T·x)`.
pub fn tempered_softmax(logits: &[f64], temperature: f64) -> Vec<f64> {
    let max = logits.iter().fold(f64::NEG_INFINITY, |m, &x| m.max(x * temperature));
    let mut p: Vec<f64> = logits.iter().map(|&x| libm::exp(x * temperature - max)).collect();
    let z: f64 = p.iter().sum();
    for x in &mut p {
        *x /= z;
    }
    p
}

fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

fn sample(p: &[f64], rng: &mut Rng) -> usize {
    let r: f64 = rng.random();
    let mut acc = 0.0;
    for (i, &pi) in p.iter().enumerate() {
        acc += pi;
        if r < acc {
            return i;
        }
    }
    // Rounding left `acc` just below 1: take the last class with mass.
    p.iter().rposition(|&x| x > 0.0).unwrap_or(0)
}

/// One EMinF step on a frozen model.
///
/// Starts PGD from `g`'s current one-hot rows, samples a row per node, then
/// commits changed rows in descending order of accumulated per-node
/// `|∂L/∂x|`, stopping at the first row that would push CostFeat against
/// `orig` above `c`.
pub fn eminf_step(
    model: &GnnModel,
    g: &Graph,
    orig: &Graph,
    c: usize,
    pgd: &PgdConfig,
    rng: &mut Rng,
) -> Result<Graph> {
    let n = g.node_count();
    let mut input = GraphInput::from_graph(g);
    let mut sensitivity = vec![0.0; n];
    for _ in 0..pgd.steps {
        let grad = model.gradients(&input, g.label())?.d_features;
        for v in 0..n {
            for (x, &d) in input.features.row_mut(v).iter_mut().zip(grad.row(v)) {
                *x -= pgd.step_size * sign(d);
            }
            sensitivity[v] += grad.row(v).iter().map(|d| libm::fabs(*d)).sum::<f64>();
        }
    }
    let sampled: Vec<usize> = (0..n)
        .map(|v| sample(&tempered_softmax(input.features.row(v), pgd.temperature), rng))
        .collect();

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| sensitivity[b].total_cmp(&sensitivity[a]).then(a.cmp(&b)));
    let mut out = g.clone();
    let mut used = out.feature_cost(orig);
    let origin = orig.feature_classes();
    for v in order {
        let (now, new) = (out.feature_classes()[v], sampled[v]);
        if now == new {
            continue;
        }
        let next = used + usize::from(new != origin[v]) - usize::from(now != origin[v]);
        if next > c {
            break;
        }
        used = next;
        out.set_feature(v, new);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_logits_give_uniform_probabilities() {
        assert_eq!(tempered_softmax(&[0.0, 0.0], 5.0), [0.5, 0.5]);
    }

    #[test]
    fn unit_temperature_value() {
        let p = tempered_softmax(&[1.0, 0.0], 1.0);
        let e = core::f64::consts::E;
        assert!((p[0] - e / (1.0 + e)).abs() < 1e-15);
        assert!((p[0] - 0.7310585786300049).abs() < 1e-12);
    }

    #[test]
    fn huge_temperature_is_argmax() {
        let p = tempered_softmax(&[1.0, 0.0, 0.0], 1e6);
        assert_eq!(p, [1.0, 0.0, 0.0]);
    }
}
