//! Soft-margin SVMs trained by dual coordinate descent.
//!
//! Both solvers minimize the L1-hinge, L2-regularized primal
//!
//! ```text
//! 1/2 |w|^2 + C * sum_i max(0, 1 - y_i f(x_i))
//! ```
//!
//! through its box-constrained dual `max sum(a) - 1/2 a^T Q a, 0 <= a_i <= C`.
//! The bias is folded into the features (a constant 1 appended for the linear
//! solver, `K + 1` for the kernel solver), so the dual has no equality
//! constraint and can be solved one coordinate at a time.

mod kernel;
mod linear;
mod multiclass;

pub use kernel::{kernel_dual_objective, kernel_primal_objective, train_binary_kernel, BinaryKernelModel};
pub use linear::{linear_primal_objective, train_binary_linear, BinaryLinearModel};
pub use multiclass::{
    argmax_first, class_order, train_multiclass, BinaryModels, Prediction, SvmMode, SvmModel, TrainingInput,
};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::SeededStream;

pub const DEFAULT_C: f64 = 100.0;
pub const DEFAULT_TOLERANCE: f64 = 1e-4;
pub const DEFAULT_MAX_ITERATIONS: usize = 1000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SvmConfig {
    pub regularization_c: f64,
    /// Stop once the largest projected-gradient violation is at most this.
    pub tolerance: f64,
    /// Epoch cap; one epoch visits every coordinate once.
    pub max_iterations: usize,
    #[serde(default)]
    pub order: CoordinateOrder,
    /// Temporarily skip coordinates stuck at a bound (linear solver only).
    #[serde(default)]
    pub shrinking: bool,
}

/// Order in which an epoch visits the dual coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CoordinateOrder {
    /// `0..n` every epoch.
    Cyclic,
    /// A fresh permutation per epoch drawn from a stream seeded with `seed`.
    Shuffled { seed: u64 },
}

impl Default for CoordinateOrder {
    fn default() -> Self {
        CoordinateOrder::Shuffled { seed: 0 }
    }
}

impl Default for SvmConfig {
    fn default() -> Self {
        SvmConfig {
            regularization_c: DEFAULT_C,
            tolerance: DEFAULT_TOLERANCE,
            max_iterations: DEFAULT_MAX_ITERATIONS,
            order: CoordinateOrder::default(),
            shrinking: false,
        }
    }
}

impl SvmConfig {
    pub fn with_c(c: f64) -> Self {
        SvmConfig {
            regularization_c: c,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.regularization_c.is_finite() && self.regularization_c > 0.0) {
            return Err(Error::invalid(format!(
                "regularization C must be > 0, got {}",
                self.regularization_c
            )));
        }
        if !(self.tolerance.is_finite() && self.tolerance > 0.0) {
            return Err(Error::invalid(format!("tolerance must be > 0, got {}", self.tolerance)));
        }
        if self.max_iterations == 0 {
            return Err(Error::invalid("max_iterations must be >= 1"));
        }
        Ok(())
    }
}

/// Solver state reported alongside a trained binary model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainDiagnostics {
    pub converged: bool,
    pub epochs: usize,
    /// Largest projected-gradient magnitude at the returned solution.
    pub max_violation: f64,
    pub dual_objective: f64,
    /// Dual objective after each epoch.
    #[serde(skip)]
    pub dual_history: Vec<f64>,
}

/// Projected gradient of the minimization form `1/2 a^T Q a - sum(a)`.
#[inline]
pub(crate) fn projected_gradient(g: f64, alpha: f64, c: f64) -> f64 {
    if alpha <= 0.0 {
        g.min(0.0)
    } else if alpha >= c {
        g.max(0.0)
    } else {
        g
    }
}

pub(crate) fn check_labels(y: &[f64]) -> Result<()> {
    if y.len() < 2 {
        return Err(Error::invalid("binary training needs at least 2 samples"));
    }
    if let Some(i) = y.iter().position(|&v| v != 1.0 && v != -1.0) {
        return Err(Error::invalid(format!("label at index {i} is {}, expected +1 or -1", y[i])));
    }
    let positives = y.iter().filter(|&&v| v > 0.0).count();
    if positives == 0 || positives == y.len() {
        let only = if positives == 0 { "-1" } else { "+1" };
        return Err(Error::SingleClass(only.to_string()));
    }
    Ok(())
}

/// Coordinate visiting order for one epoch.
pub(crate) struct SweepOrder {
    pub(crate) order: Vec<usize>,
    shuffle: Option<SeededStream>,
}

impl SweepOrder {
    pub(crate) fn new(n: usize, order: CoordinateOrder) -> Self {
        let shuffle = match order {
            CoordinateOrder::Cyclic => None,
            CoordinateOrder::Shuffled { seed } => Some(SeededStream::new(seed)),
        };
        SweepOrder {
            order: (0..n).collect(),
            shuffle,
        }
    }

    pub(crate) fn next_epoch(&mut self) -> &[usize] {
        let n = self.order.len();
        self.next_active(n)
    }

    /// Reorders and returns the first `active` entries.
    pub(crate) fn next_active(&mut self, active: usize) -> &[usize] {
        if let Some(stream) = self.shuffle.as_mut() {
            // Fisher-Yates
            for i in (1..active).rev() {
                let j = (stream.next_unit() * (i + 1) as f64) as usize;
                self.order.swap(i, j.min(i));
            }
        }
        &self.order[..active]
    }

    pub(crate) fn swap(&mut self, a: usize, b: usize) {
        self.order.swap(a, b);
    }
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    // four fixed lanes; order is independent of the caller
    let mut acc = [0.0f64; 4];
    let chunks = a.len() / 4;
    for k in 0..chunks {
        let i = 4 * k;
        acc[0] += a[i] * b[i];
        acc[1] += a[i + 1] * b[i + 1];
        acc[2] += a[i + 2] * b[i + 2];
        acc[3] += a[i + 3] * b[i + 3];
    }
    let mut tail = 0.0;
    for i in (4 * chunks)..a.len() {
        tail += a[i] * b[i];
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_validation() {
        assert!(SvmConfig::default().validate().is_ok());
        assert!(SvmConfig::with_c(0.0).validate().is_err());
        let mut c = SvmConfig::default();
        c.tolerance = -1.0;
        assert!(c.validate().is_err());
        c = SvmConfig::default();
        c.max_iterations = 0;
        assert!(c.validate().is_err());
    }

    #[test]
    fn label_checks() {
        assert!(check_labels(&[1.0, -1.0]).is_ok());
        assert!(matches!(check_labels(&[1.0, 1.0]), Err(Error::SingleClass(_))));
        assert!(check_labels(&[1.0, 0.0]).is_err());
        assert!(check_labels(&[1.0]).is_err());
    }

    #[test]
    fn dot_matches_naive() {
        let a: Vec<f64> = (0..11).map(|i| i as f64 * 0.5).collect();
        let b: Vec<f64> = (0..11).map(|i| 1.0 - i as f64).collect();
        let naive: f64 = a.iter().zip(&b).map(|(x, y)| x * y).sum();
        assert!((dot(&a, &b) - naive).abs() < 1e-12);
    }

    #[test]
    fn shuffled_order_is_a_permutation() {
        let mut s = SweepOrder::new(10, CoordinateOrder::Shuffled { seed: 3 });
        let mut o = s.next_epoch().to_vec();
        o.sort_unstable();
        assert_eq!(o, (0..10).collect::<Vec<_>>());
        let mut cyclic = SweepOrder::new(4, CoordinateOrder::Cyclic);
        assert_eq!(cyclic.next_epoch(), &[0, 1, 2, 3]);
    }
}
