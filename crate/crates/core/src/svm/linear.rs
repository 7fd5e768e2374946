use ndarray::{ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use super::{check_labels, dot, projected_gradient, SvmConfig, SweepOrder, TrainDiagnostics};
use crate::error::{Error, Result};
use crate::kernels::check_finite_matrix;

/// Linear decision function `w . [x, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinaryLinearModel {
    /// Feature weights followed by the bias weight.
    pub weights: Vec<f64>,
    pub support_count: usize,
    pub diagnostics: TrainDiagnostics,
}

impl BinaryLinearModel {
    pub fn feature_dim(&self) -> usize {
        self.weights.len() - 1
    }

    pub fn bias(&self) -> f64 {
        self.weights[self.weights.len() - 1]
    }

    /// Decision value for a feature vector of the training dimension (not checked here).
    #[inline]
    pub fn decision_value(&self, x: &[f64]) -> f64 {
        let d = self.feature_dim();
        dot(&self.weights[..d], x) + self.weights[d]
    }
}

/// Trains an L1-hinge linear SVM on the rows of `x` with labels in {-1, +1}.
///
/// Non-convergence within `max_iterations` epochs is not an error; the model
/// comes back with `diagnostics.converged == false`.
pub fn train_binary_linear(x: ArrayView2<f64>, y: &[f64], config: &SvmConfig) -> Result<BinaryLinearModel> {
    config.validate()?;
    if x.nrows() != y.len() {
        return Err(Error::DimensionMismatch {
            expected: x.nrows(),
            actual: y.len(),
        });
    }
    if x.ncols() == 0 {
        return Err(Error::invalid("feature dimension must be >= 1"));
    }
    check_labels(y)?;
    check_finite_matrix(&x)?;

    let x = x.as_standard_layout();
    let rows: Vec<&[f64]> = x
        .axis_iter(Axis(0))
        .map(|r| r.to_slice().expect("standard layout row"))
        .collect();
    let n = rows.len();
    let d = x.ncols();
    let c = config.regularization_c;

    // Q_ii = |x_i|^2 + 1 for the appended constant feature
    let diag: Vec<f64> = rows.iter().map(|r| dot(r, r) + 1.0).collect();
    let mut alpha = vec![0.0f64; n];
    let mut w = vec![0.0f64; d + 1];
    let mut order = SweepOrder::new(n, config.order);
    let mut history = Vec::new();
    let mut converged = false;
    let mut epochs = 0;

    let gradient = |w: &[f64], i: usize| y[i] * (dot(&w[..d], rows[i]) + w[d]) - 1.0;

    // shrinking thresholds from the previous epoch
    let mut pg_max_old = f64::INFINITY;
    let mut pg_min_old = f64::NEG_INFINITY;
    let mut active = n;

    while epochs < config.max_iterations {
        epochs += 1;
        // zero when everything was shrunk, which forces a full recheck
        let mut pg_max: f64 = 0.0;
        let mut pg_min: f64 = 0.0;
        order.next_active(active);
        let mut s = 0;
        while s < active {
            let i = order.order[s];
            let g = gradient(&w, i);
            if config.shrinking
                && ((alpha[i] <= 0.0 && g > pg_max_old) || (alpha[i] >= c && g < pg_min_old))
            {
                active -= 1;
                order.swap(s, active);
                continue;
            }
            s += 1;
            let pg = projected_gradient(g, alpha[i], c);
            pg_max = pg_max.max(pg);
            pg_min = pg_min.min(pg);
            if pg != 0.0 {
                let old = alpha[i];
                alpha[i] = (old - g / diag[i]).clamp(0.0, c);
                let step = (alpha[i] - old) * y[i];
                if step != 0.0 {
                    for (wj, xj) in w[..d].iter_mut().zip(rows[i]) {
                        *wj += step * xj;
                    }
                    w[d] += step;
                }
            }
        }
        history.push(dual_objective(&alpha, &w));
        let max_pg = pg_max.abs().max(pg_min.abs());
        if max_pg <= config.tolerance {
            // confirm on the final iterate and over every coordinate
            if max_violation(&w, &alpha, c, &gradient, n) <= config.tolerance {
                converged = true;
                break;
            }
            active = n;
            pg_max_old = f64::INFINITY;
            pg_min_old = f64::NEG_INFINITY;
            continue;
        }
        pg_max_old = if pg_max <= 0.0 { f64::INFINITY } else { pg_max };
        pg_min_old = if pg_min >= 0.0 { f64::NEG_INFINITY } else { pg_min };
    }

    let max_violation = max_violation(&w, &alpha, c, &gradient, n);
    let dual = dual_objective(&alpha, &w);
    Ok(BinaryLinearModel {
        support_count: alpha.iter().filter(|&&a| a > 0.0).count(),
        weights: w,
        diagnostics: TrainDiagnostics {
            converged,
            epochs,
            max_violation,
            dual_objective: dual,
            dual_history: history,
        },
    })
}

fn max_violation(w: &[f64], alpha: &[f64], c: f64, gradient: &impl Fn(&[f64], usize) -> f64, n: usize) -> f64 {
    (0..n)
        .map(|i| projected_gradient(gradient(w, i), alpha[i], c).abs())
        .fold(0.0, f64::max)
}

fn dual_objective(alpha: &[f64], w: &[f64]) -> f64 {
    alpha.iter().sum::<f64>() - 0.5 * dot(w, w)
}

/// Primal objective `1/2 |w|^2 + C sum hinge` of a weight vector (bias last).
pub fn linear_primal_objective(weights: &[f64], x: ArrayView2<f64>, y: &[f64], c: f64) -> f64 {
    let d = weights.len() - 1;
    let hinge: f64 = x
        .axis_iter(Axis(0))
        .zip(y)
        .map(|(row, &yi)| {
            let f = row.iter().zip(&weights[..d]).fold(0.0, |acc, (a, b)| acc + a * b) + weights[d];
            (1.0 - yi * f).max(0.0)
        })
        .sum();
    0.5 * dot(weights, weights) + c * hinge
}
