//! Exact kernel evaluation and Gram matrices.
//!
//! The three nonlinear families are shift-invariant: each depends on the
//! inputs only through `delta = x1 - x2`, which is computed once and reduced
//! left to right so that `K(x, y)` and `K(y, x)` are bit-identical.

use std::fmt;
use std::str::FromStr;

use ndarray::{Array2, ArrayView1, ArrayView2, Axis};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KernelFamily {
    Linear,
    Gaussian,
    Laplacian,
    Cauchy,
}

impl KernelFamily {
    pub const ALL: [KernelFamily; 4] = [
        KernelFamily::Linear,
        KernelFamily::Gaussian,
        KernelFamily::Laplacian,
        KernelFamily::Cauchy,
    ];

    pub const SHIFT_INVARIANT: [KernelFamily; 3] = [
        KernelFamily::Gaussian,
        KernelFamily::Laplacian,
        KernelFamily::Cauchy,
    ];

    pub fn name(self) -> &'static str {
        match self {
            KernelFamily::Linear => "linear",
            KernelFamily::Gaussian => "gaussian",
            KernelFamily::Laplacian => "laplacian",
            KernelFamily::Cauchy => "cauchy",
        }
    }

    pub fn is_shift_invariant(self) -> bool {
        !matches!(self, KernelFamily::Linear)
    }
}

impl fmt::Display for KernelFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for KernelFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "linear" => Ok(KernelFamily::Linear),
            "gaussian" => Ok(KernelFamily::Gaussian),
            "laplacian" => Ok(KernelFamily::Laplacian),
            "cauchy" => Ok(KernelFamily::Cauchy),
            other => Err(Error::InvalidKernel(format!("unknown kernel family '{other}'"))),
        }
    }
}

/// A kernel family together with its bandwidth.
///
/// `gamma` is validated once here; evaluation never re-checks it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawKernelSpec", into = "RawKernelSpec")]
pub struct KernelSpec {
    family: KernelFamily,
    gamma: f64,
}

#[derive(Serialize, Deserialize)]
struct RawKernelSpec {
    family: KernelFamily,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    gamma: Option<f64>,
}

impl TryFrom<RawKernelSpec> for KernelSpec {
    type Error = Error;

    fn try_from(raw: RawKernelSpec) -> Result<Self> {
        match raw.family {
            KernelFamily::Linear => Ok(KernelSpec::linear()),
            family => {
                let gamma = raw.gamma.ok_or_else(|| {
                    Error::InvalidKernel(format!("{family} kernel requires gamma"))
                })?;
                KernelSpec::new(family, gamma)
            }
        }
    }
}

impl From<KernelSpec> for RawKernelSpec {
    fn from(spec: KernelSpec) -> Self {
        RawKernelSpec {
            family: spec.family,
            gamma: spec.gamma(),
        }
    }
}

impl KernelSpec {
    pub fn linear() -> Self {
        KernelSpec {
            family: KernelFamily::Linear,
            gamma: 0.0,
        }
    }

    /// Builds a spec; `gamma` must be finite and positive for the nonlinear
    /// families and is ignored for `Linear`.
    pub fn new(family: KernelFamily, gamma: f64) -> Result<Self> {
        if family == KernelFamily::Linear {
            return Ok(KernelSpec::linear());
        }
        if !(gamma.is_finite() && gamma > 0.0) {
            return Err(Error::InvalidKernel(format!(
                "{family} kernel requires gamma > 0, got {gamma}"
            )));
        }
        Ok(KernelSpec { family, gamma })
    }

    pub fn gaussian(gamma: f64) -> Result<Self> {
        Self::new(KernelFamily::Gaussian, gamma)
    }

    pub fn laplacian(gamma: f64) -> Result<Self> {
        Self::new(KernelFamily::Laplacian, gamma)
    }

    pub fn cauchy(gamma: f64) -> Result<Self> {
        Self::new(KernelFamily::Cauchy, gamma)
    }

    pub fn family(&self) -> KernelFamily {
        self.family
    }

    /// Bandwidth, absent for the linear kernel.
    pub fn gamma(&self) -> Option<f64> {
        match self.family {
            KernelFamily::Linear => None,
            _ => Some(self.gamma),
        }
    }

    /// Evaluates the kernel on vectors already known to be finite and of equal length.
    #[inline]
    pub(crate) fn eval_unchecked(&self, x1: &[f64], x2: &[f64]) -> f64 {
        let gamma = self.gamma;
        match self.family {
            KernelFamily::Linear => x1.iter().zip(x2).fold(0.0, |acc, (a, b)| acc + a * b),
            KernelFamily::Gaussian => {
                let sq = x1.iter().zip(x2).fold(0.0, |acc, (a, b)| {
                    let d = a - b;
                    acc + d * d
                });
                (-gamma * sq).exp()
            }
            KernelFamily::Laplacian => {
                let l1 = x1
                    .iter()
                    .zip(x2)
                    .fold(0.0, |acc, (a, b)| acc + (a - b).abs());
                (-gamma * l1).exp()
            }
            KernelFamily::Cauchy => {
                // log-sum: a direct product of thousands of factors underflows
                let g2 = gamma * gamma;
                let log_sum = x1.iter().zip(x2).fold(0.0, |acc, (a, b)| {
                    let d = a - b;
                    acc + (g2 * d * d).ln_1p()
                });
                (-log_sum).exp()
            }
        }
    }
}

impl fmt::Display for KernelSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.gamma() {
            None => write!(f, "{}", self.family),
            Some(g) => write!(f, "{}(gamma={})", self.family, g),
        }
    }
}

pub(crate) fn check_finite(values: &[f64]) -> Result<()> {
    match values.iter().position(|v| !v.is_finite()) {
        Some(index) => Err(Error::NonFinite { index }),
        None => Ok(()),
    }
}

pub(crate) fn check_finite_matrix(x: &ArrayView2<f64>) -> Result<()> {
    match x.iter().position(|v| !v.is_finite()) {
        Some(index) => Err(Error::NonFinite { index }),
        None => Ok(()),
    }
}

/// Evaluates `K(x1, x2)`.
pub fn kernel_eval(spec: &KernelSpec, x1: &[f64], x2: &[f64]) -> Result<f64> {
    if x1.len() != x2.len() {
        return Err(Error::DimensionMismatch {
            expected: x1.len(),
            actual: x2.len(),
        });
    }
    if x1.is_empty() {
        return Err(Error::invalid("kernel inputs must have dimension >= 1"));
    }
    check_finite(x1)?;
    check_finite(x2)?;
    Ok(spec.eval_unchecked(x1, x2))
}

/// Returns `(K(x1, x2), K(x1 + z, x2 + z))`.
pub fn shift_invariance_check(
    spec: &KernelSpec,
    x1: &[f64],
    x2: &[f64],
    z: &[f64],
) -> Result<(f64, f64)> {
    if !spec.family().is_shift_invariant() {
        return Err(Error::NotShiftInvariant);
    }
    if z.len() != x1.len() {
        return Err(Error::DimensionMismatch {
            expected: x1.len(),
            actual: z.len(),
        });
    }
    let base = kernel_eval(spec, x1, x2)?;
    check_finite(z)?;
    let s1: Vec<f64> = x1.iter().zip(z).map(|(a, b)| a + b).collect();
    let s2: Vec<f64> = x2.iter().zip(z).map(|(a, b)| a + b).collect();
    let shifted = kernel_eval(spec, &s1, &s2)?;
    Ok((base, shifted))
}

/// Dense kernel matrix between two row sets.
#[derive(Debug, Clone, PartialEq)]
pub struct GramMatrix {
    values: Array2<f64>,
}

impl GramMatrix {
    pub fn from_array(values: Array2<f64>) -> Result<Self> {
        if values.nrows() == 0 || values.ncols() == 0 {
            return Err(Error::invalid("Gram matrix must be non-empty"));
        }
        check_finite_matrix(&values.view())?;
        Ok(GramMatrix { values })
    }

    pub fn row_count(&self) -> usize {
        self.values.nrows()
    }

    pub fn col_count(&self) -> usize {
        self.values.ncols()
    }

    pub fn is_square(&self) -> bool {
        self.row_count() == self.col_count()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[[i, j]]
    }

    pub fn row(&self, i: usize) -> ArrayView1<'_, f64> {
        self.values.row(i)
    }

    pub fn values(&self) -> &Array2<f64> {
        &self.values
    }

    pub fn into_inner(self) -> Array2<f64> {
        self.values
    }

    /// Largest absolute asymmetry `|G_ij - G_ji|`; `None` for non-square matrices.
    pub fn max_asymmetry(&self) -> Option<f64> {
        if !self.is_square() {
            return None;
        }
        let n = self.row_count();
        let mut worst: f64 = 0.0;
        for i in 0..n {
            for j in (i + 1)..n {
                worst = worst.max((self.values[[i, j]] - self.values[[j, i]]).abs());
            }
        }
        Some(worst)
    }
}

/// Kernel values between every row of `x` and every row of `y`.
///
/// Rows are evaluated in parallel; each entry is the same expression
/// `kernel_eval` computes, so the result does not depend on thread count.
pub fn gram_matrix(spec: &KernelSpec, x: ArrayView2<f64>, y: ArrayView2<f64>) -> Result<GramMatrix> {
    if x.ncols() != y.ncols() {
        return Err(Error::DimensionMismatch {
            expected: x.ncols(),
            actual: y.ncols(),
        });
    }
    if x.nrows() == 0 || y.nrows() == 0 || x.ncols() == 0 {
        return Err(Error::invalid("Gram matrix inputs must be non-empty"));
    }
    check_finite_matrix(&x)?;
    check_finite_matrix(&y)?;

    let x = x.as_standard_layout();
    let y = y.as_standard_layout();
    let mut values = Array2::<f64>::zeros((x.nrows(), y.nrows()));
    values
        .axis_iter_mut(Axis(0))
        .into_par_iter()
        .zip(x.axis_iter(Axis(0)).into_par_iter())
        .for_each(|(mut out, xi)| {
            let xi = xi.as_slice().expect("standard layout row");
            for (o, yj) in out.iter_mut().zip(y.axis_iter(Axis(0))) {
                *o = spec.eval_unchecked(xi, yj.as_slice().expect("standard layout row"));
            }
        });
    Ok(GramMatrix { values })
}

/// Self-Gram `K(X, X)`.
pub fn self_gram(spec: &KernelSpec, x: ArrayView2<f64>) -> Result<GramMatrix> {
    gram_matrix(spec, x, x)
}
