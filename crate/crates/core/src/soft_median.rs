//! Soft Median aggregation.
//!
//! A softmax-weighted mean of the rows of `X` where row `v` gets weight
//! `softmax(-c / (T·√d))_v` and `c_v = ‖x̄ − X_v‖` is its Euclidean distance
//! to the dimension-wise median `x̄`. Large `T` tends to the sample mean,
//! small `T` to the row nearest the median.

use alloc::vec;
use alloc::vec::Vec;

use crate::gnn::softmax;
use crate::matrix::{MatRef, Matrix};
use crate::{Error, Result};

/// Forward quantities kept for the backward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct SoftMedianState {
    pub output: Vec<f64>,
    pub weights: Vec<f64>,
    pub median: Vec<f64>,
    pub distances: Vec<f64>,
    /// Rows contributing to each column's median with their share
    /// (one row with 1.0, or the two central rows with 0.5 each).
    pub(crate) sources: Vec<[(usize, f64); 2]>,
}

/// Dimension-wise median; even row counts average the two central values.
pub fn column_median(x: MatRef<'_>) -> (Vec<f64>, Vec<[(usize, f64); 2]>) {
    let m = x.rows;
    let mut median = vec![0.0; x.cols];
    let mut sources = vec![[(0, 0.0); 2]; x.cols];
    let mut order: Vec<usize> = (0..m).collect();
    for j in 0..x.cols {
        order.sort_by(|&a, &b| x.at(a, j).total_cmp(&x.at(b, j)).then(a.cmp(&b)));
        if m % 2 == 1 {
            let r = order[m / 2];
            median[j] = x.at(r, j);
            sources[j] = [(r, 1.0), (r, 0.0)];
        } else {
            let (lo, hi) = (order[m / 2 - 1], order[m / 2]);
            median[j] = 0.5 * (x.at(lo, j) + x.at(hi, j));
            sources[j] = [(lo, 0.5), (hi, 0.5)];
        }
    }
    (median, sources)
}

pub fn soft_median(x: MatRef<'_>, temperature: f64) -> Result<SoftMedianState> {
    if x.rows == 0 {
        return Err(Error::EmptySet("message set"));
    }
    if !(temperature > 0.0) {
        return Err(Error::InvalidArgument(alloc::format!(
            "soft-median temperature {temperature} must be > 0"
        )));
    }
    let (median, sources) = column_median(x);
    let distances: Vec<f64> = (0..x.rows)
        .map(|v| {
            let sq: f64 = x.row(v).iter().zip(&median).map(|(a, b)| (a - b) * (a - b)).sum();
            libm::sqrt(sq)
        })
        .collect();
    let scale = temperature * libm::sqrt(x.cols as f64);
    let scores: Vec<f64> = distances.iter().map(|c| -c / scale).collect();
    let weights = softmax(&scores);
    let mut output = vec![0.0; x.cols];
    for (v, w) in weights.iter().enumerate() {
        for (o, a) in output.iter_mut().zip(x.row(v)) {
            *o += w * a;
        }
    }
    Ok(SoftMedianState {
        output,
        weights,
        median,
        distances,
        sources,
    })
}

/// `μ = softmax(-c / (T√d))ᵀ X`.
pub fn soft_median_aggregate(x: &Matrix, temperature: f64) -> Result<Vec<f64>> {
    Ok(soft_median(x.view(), temperature)?.output)
}

/// Vector-Jacobian product of [`soft_median`] with respect to `X`.
///
/// The median is differentiated as the selection it made (a subgradient at
/// ties) and `‖·‖` contributes nothing at zero distance.
pub fn soft_median_backward(x: MatRef<'_>, temperature: f64, state: &SoftMedianState, grad_out: &[f64]) -> Matrix {
    let (m, d) = (x.rows, x.cols);
    let mut dx = Matrix::zeros(m, d);
    let dw: Vec<f64> = (0..m).map(|v| crate::matrix::dot(grad_out, x.row(v))).collect();
    let mean_dw: f64 = state.weights.iter().zip(&dw).map(|(w, g)| w * g).sum();
    let scale = temperature * libm::sqrt(d as f64);
    let mut d_median = vec![0.0; d];
    for v in 0..m {
        let w = state.weights[v];
        for (o, g) in dx.row_mut(v).iter_mut().zip(grad_out) {
            *o += w * g;
        }
        let ds = w * (dw[v] - mean_dw);
        let dc = -ds / scale;
        let c = state.distances[v];
        if c > 0.0 && dc != 0.0 {
            for j in 0..d {
                let g = dc * (x.at(v, j) - state.median[j]) / c;
                dx[(v, j)] += g;
                d_median[j] -= g;
            }
        }
    }
    for (j, dm) in d_median.iter().enumerate() {
        for &(r, share) in &state.sources[j] {
            if share != 0.0 {
                dx[(r, j)] += share * dm;
            }
        }
    }
    dx
}

#[cfg(test)]
mod tests {
    use super::*;

    fn column(values: &[f64]) -> Matrix {
        Matrix::from_vec(values.len(), 1, values.to_vec())
    }

    #[test]
    fn identical_rows_return_the_row() {
        let x = Matrix::from_fn(4, 3, |_, c| c as f64 - 0.7);
        for t in [1e-6, 1.0, 1e6] {
            assert_eq!(soft_median_aggregate(&x, t).unwrap(), x.row(0).to_vec());
        }
    }

    #[test]
    fn large_temperature_is_the_mean() {
        let out = soft_median_aggregate(&column(&[1.0, 2.0, 10.0]), 1e12).unwrap();
        assert!((out[0] - 13.0 / 3.0).abs() < 1e-9);
        let exact = soft_median_aggregate(&column(&[1.0, 2.0, 10.0]), f64::INFINITY).unwrap();
        assert!((exact[0] - 13.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn small_temperature_is_nearest_to_median() {
        let out = soft_median_aggregate(&column(&[1.0, 2.0, 10.0]), 1e-6).unwrap();
        assert!((out[0] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn single_message_passes_through() {
        let x = Matrix::from_vec(1, 3, alloc::vec![0.3, -1.0, 2.0]);
        for t in [1e-3, 1.0, 1e3] {
            assert_eq!(soft_median_aggregate(&x, t).unwrap(), x.row(0).to_vec());
        }
    }

    #[test]
    fn even_count_median_averages_central_values() {
        let (median, _) = column_median(column(&[4.0, 1.0, 3.0, 2.0]).view());
        assert_eq!(median, alloc::vec![2.5]);
    }

    #[test]
    fn empty_set_is_an_error() {
        assert_eq!(soft_median_aggregate(&Matrix::zeros(0, 2), 1.0), Err(Error::EmptySet("message set")));
    }

    #[test]
    fn backward_matches_finite_differences() {
        let x = Matrix::from_fn(5, 3, |r, c| libm::sin((r * 3 + c) as f64 * 1.7) * 2.0);
        let g = [0.3, -0.8, 0.5];
        let t = 0.7;
        let state = soft_median(x.view(), t).unwrap();
        let dx = soft_median_backward(x.view(), t, &state, &g);
        let f = |x: &Matrix| crate::matrix::dot(&soft_median_aggregate(x, t).unwrap(), &g);
        let h = 1e-6;
        for r in 0..5 {
            for c in 0..3 {
                let mut xp = x.clone();
                xp[(r, c)] += h;
                let mut xm = x.clone();
                xm[(r, c)] -= h;
                let fd = (f(&xp) - f(&xm)) / (2.0 * h);
                assert!((fd - dx[(r, c)]).abs() < 1e-7, "({r},{c}) fd {fd} vs {}", dx[(r, c)]);
            }
        }
    }
}
