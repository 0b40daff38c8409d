use alloc::vec::Vec;

use crate::{Error, Result};

/// Numerically stable softmax.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut out: Vec<f64> = logits.iter().map(|&z| libm::exp(z - max)).collect();
    let sum: f64 = out.iter().sum();
    for p in &mut out {
        *p /= sum;
    }
    out
}

/// Softmax cross-entropy with natural log.
pub fn cross_entropy(logits: &[f64], label: usize) -> Result<f64> {
    if logits.iter().any(|z| !z.is_finite()) {
        return Err(Error::NonFinite("logits"));
    }
    if label >= logits.len() {
        return Err(Error::InvalidArgument(alloc::format!(
            "label {label} outside {} classes",
            logits.len()
        )));
    }
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + libm::log(logits.iter().map(|&z| libm::exp(z - max)).sum::<f64>());
    Ok(lse - logits[label])
}

/// Arg-max with ties going to the lowest class index.
pub fn predict(logits: &[f64]) -> usize {
    let mut best = 0;
    for (i, &z) in logits.iter().enumerate() {
        if z > logits[best] {
            best = i;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_two_class_loss_is_ln2() {
        let l = cross_entropy(&[0.0, 0.0], 0).unwrap();
        assert!((l - core::f64::consts::LN_2).abs() < 1e-15);
    }

    #[test]
    fn saturated_loss_vanishes() {
        assert!(cross_entropy(&[30.0, -30.0], 0).unwrap() < 1e-9);
    }

    #[test]
    fn hand_evaluated_loss() {
        // -ln(1 / (1 + e)) = ln(1 + e) = 1.313261687518223 (independent calculator)
        let l = cross_entropy(&[1.0, 0.0], 1).unwrap();
        assert!((l - 1.313_261_687_518_223).abs() < 1e-12);
    }

    #[test]
    fn non_finite_logits_rejected() {
        assert!(cross_entropy(&[f64::NAN, 0.0], 0).is_err());
    }

    #[test]
    fn ties_go_to_lowest_index() {
        assert_eq!(predict(&[0.5, 0.5, 0.1]), 0);
        assert_eq!(predict(&[0.1, 0.5, 0.5]), 1);
    }
}
