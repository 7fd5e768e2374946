use serde::{Deserialize, Serialize};

use super::{check_labels, projected_gradient, SvmConfig, SweepOrder, TrainDiagnostics};
use crate::error::{Error, Result};
use crate::kernels::{GramMatrix, KernelSpec};

/// Decision function `f(x) = sum_i alphas[i] * (K(x_i, x) + 1)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinaryKernelModel {
    /// Dual coefficients multiplied by the training label, one per training row.
    pub alphas: Vec<f64>,
    /// Rows with a nonzero coefficient, ascending.
    pub support_indices: Vec<usize>,
    pub kernel: KernelSpec,
    pub diagnostics: TrainDiagnostics,
}

impl BinaryKernelModel {
    pub fn training_size(&self) -> usize {
        self.alphas.len()
    }

    /// Decision value from the kernel row `K(x, x_j)` over all training rows.
    #[inline]
    pub fn decision_value(&self, kernel_row: &[f64]) -> f64 {
        self.support_indices
            .iter()
            .fold(0.0, |acc, &j| acc + self.alphas[j] * (kernel_row[j] + 1.0))
    }
}

/// Relative asymmetry accepted in a training Gram matrix.
const SYMMETRY_TOLERANCE: f64 = 1e-8;

/// Trains a kernel SVM from a precomputed self-Gram matrix.
pub fn train_binary_kernel(
    gram: &GramMatrix,
    kernel: KernelSpec,
    y: &[f64],
    config: &SvmConfig,
) -> Result<BinaryKernelModel> {
    config.validate()?;
    if !gram.is_square() {
        return Err(Error::invalid(format!(
            "training Gram matrix must be square, got {}x{}",
            gram.row_count(),
            gram.col_count()
        )));
    }
    let n = gram.row_count();
    if y.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            actual: y.len(),
        });
    }
    check_labels(y)?;
    let k = gram.values();
    let scale = k.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let asym = gram.max_asymmetry().unwrap_or(0.0);
    if asym > SYMMETRY_TOLERANCE * (1.0 + scale) {
        return Err(Error::invalid(format!("Gram matrix is not symmetric (max deviation {asym:e})")));
    }
    let diag: Vec<f64> = (0..n).map(|i| k[[i, i]] + 1.0).collect();
    if let Some(i) = diag.iter().position(|&q| q <= 0.0) {
        return Err(Error::invalid(format!("Gram matrix diagonal entry {i} is below -1; not PSD")));
    }

    let c = config.regularization_c;
    let mut alpha = vec![0.0f64; n];
    // gradient of 1/2 a^T Q a - sum(a), Q_ij = y_i y_j (K_ij + 1)
    let mut grad = vec![-1.0f64; n];
    let mut order = SweepOrder::new(n, config.order);
    let mut history = Vec::new();
    let mut converged = false;
    let mut epochs = 0;

    while epochs < config.max_iterations {
        epochs += 1;
        for &i in order.next_epoch() {
            let g = grad[i];
            let pg = projected_gradient(g, alpha[i], c);
            if pg == 0.0 {
                continue;
            }
            let old = alpha[i];
            alpha[i] = (old - g / diag[i]).clamp(0.0, c);
            let delta = alpha[i] - old;
            if delta != 0.0 {
                let row = k.row(i);
                let dy = delta * y[i];
                for ((gj, kij), yj) in grad.iter_mut().zip(row.iter()).zip(y) {
                    *gj += dy * yj * (kij + 1.0);
                }
            }
        }
        history.push(dual_from_gradient(&alpha, &grad));
        if max_violation(&alpha, &grad, c) <= config.tolerance {
            converged = true;
            break;
        }
    }

    let alphas: Vec<f64> = alpha.iter().zip(y).map(|(a, yi)| a * yi).collect();
    let support_indices = (0..n).filter(|&i| alpha[i] > 0.0).collect();
    Ok(BinaryKernelModel {
        alphas,
        support_indices,
        kernel,
        diagnostics: TrainDiagnostics {
            converged,
            epochs,
            max_violation: max_violation(&alpha, &grad, c),
            dual_objective: dual_from_gradient(&alpha, &grad),
            dual_history: history,
        },
    })
}

fn max_violation(alpha: &[f64], grad: &[f64], c: f64) -> f64 {
    alpha
        .iter()
        .zip(grad)
        .map(|(&a, &g)| projected_gradient(g, a, c).abs())
        .fold(0.0, f64::max)
}

// a^T Q a = sum_i a_i (grad_i + 1)
fn dual_from_gradient(alpha: &[f64], grad: &[f64]) -> f64 {
    alpha
        .iter()
        .zip(grad)
        .fold(0.0, |acc, (a, g)| acc + a - 0.5 * a * (g + 1.0))
}

/// Dual objective `sum(a) - 1/2 a^T Q a` for unsigned dual variables `alpha`.
pub fn kernel_dual_objective(gram: &GramMatrix, y: &[f64], alpha: &[f64]) -> f64 {
    let n = alpha.len();
    let k = gram.values();
    let mut quad = 0.0;
    for i in 0..n {
        for j in 0..n {
            quad += alpha[i] * alpha[j] * y[i] * y[j] * (k[[i, j]] + 1.0);
        }
    }
    alpha.iter().sum::<f64>() - 0.5 * quad
}

/// Primal objective of a trained kernel model on its own training Gram matrix.
pub fn kernel_primal_objective(model: &BinaryKernelModel, gram: &GramMatrix, y: &[f64], c: f64) -> f64 {
    let n = y.len();
    let k = gram.values();
    let mut norm_sq = 0.0;
    let mut hinge = 0.0;
    for i in 0..n {
        let f = model.decision_value(k.row(i).as_slice().expect("standard layout row"));
        hinge += (1.0 - y[i] * f).max(0.0);
        for j in 0..n {
            norm_sq += model.alphas[i] * model.alphas[j] * (k[[i, j]] + 1.0);
        }
    }
    0.5 * norm_sq + c * hinge
}
