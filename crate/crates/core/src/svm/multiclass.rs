use ndarray::ArrayView2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{train_binary_kernel, train_binary_linear, BinaryKernelModel, BinaryLinearModel, SvmConfig};
use crate::error::{Error, Result};
use crate::kernels::{GramMatrix, KernelSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SvmMode {
    LinearExplicit,
    KernelPrecomputed,
}

/// What the one-vs-rest problems are trained on.
#[derive(Debug, Clone, Copy)]
pub enum TrainingInput<'a> {
    Features(ArrayView2<'a, f64>),
    Gram { gram: &'a GramMatrix, kernel: KernelSpec },
}

impl TrainingInput<'_> {
    fn len(&self) -> usize {
        match self {
            TrainingInput::Features(x) => x.nrows(),
            TrainingInput::Gram { gram, .. } => gram.row_count(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum BinaryModels {
    Linear(Vec<BinaryLinearModel>),
    Kernel(Vec<BinaryKernelModel>),
}

impl BinaryModels {
    pub fn len(&self) -> usize {
        match self {
            BinaryModels::Linear(m) => m.len(),
            BinaryModels::Kernel(m) => m.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// One-vs-rest ensemble: one binary model per class, in class order.
#[derive(Debug, Clone, PartialEq)]
pub struct SvmModel {
    class_labels: Vec<String>,
    binaries: BinaryModels,
    config: SvmConfig,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub class_index: usize,
    pub label: String,
    /// Per-class decision values in class order.
    pub scores: Vec<f64>,
}

/// Index of the largest value; ties go to the earliest index.
pub fn argmax_first(values: &[f64]) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, &v) in values.iter().enumerate() {
        match best {
            Some((_, b)) if v <= b => {}
            _ => best = Some((i, v)),
        }
    }
    best.map(|(i, _)| i)
}

/// Distinct labels in order of first appearance.
pub fn class_order<S: AsRef<str>>(labels: &[S]) -> Vec<String> {
    let mut seen: Vec<String> = Vec::new();
    for l in labels {
        if !seen.iter().any(|s| s == l.as_ref()) {
            seen.push(l.as_ref().to_string());
        }
    }
    seen
}

/// Trains one binary model per class (class vs. rest). Classes are ordered by
/// first appearance in `labels`.
pub fn train_multiclass<S: AsRef<str> + Sync>(
    input: TrainingInput<'_>,
    labels: &[S],
    config: &SvmConfig,
) -> Result<SvmModel> {
    config.validate()?;
    if labels.len() != input.len() {
        return Err(Error::DimensionMismatch {
            expected: input.len(),
            actual: labels.len(),
        });
    }
    let classes = class_order(labels);
    if classes.len() < 2 {
        return Err(Error::SingleClass(classes.first().cloned().unwrap_or_default()));
    }
    let targets: Vec<Vec<f64>> = classes
        .iter()
        .map(|c| {
            labels
                .iter()
                .map(|l| if l.as_ref() == c { 1.0 } else { -1.0 })
                .collect()
        })
        .collect();

    let binaries = match input {
        TrainingInput::Features(x) => BinaryModels::Linear(
            targets
                .par_iter()
                .map(|y| train_binary_linear(x, y, config))
                .collect::<Result<Vec<_>>>()?,
        ),
        TrainingInput::Gram { gram, kernel } => BinaryModels::Kernel(
            targets
                .par_iter()
                .map(|y| train_binary_kernel(gram, kernel, y, config))
                .collect::<Result<Vec<_>>>()?,
        ),
    };
    Ok(SvmModel {
        class_labels: classes,
        binaries,
        config: *config,
    })
}

impl SvmModel {
    /// Reassembles a model from stored parts, checking its invariants.
    pub fn from_parts(class_labels: Vec<String>, binaries: BinaryModels, config: SvmConfig) -> Result<Self> {
        if class_labels.len() < 2 {
            return Err(Error::invalid("a model needs at least two classes"));
        }
        if class_labels.len() != binaries.len() {
            return Err(Error::invalid(format!(
                "{} class labels but {} binary models",
                class_labels.len(),
                binaries.len()
            )));
        }
        if class_order(&class_labels).len() != class_labels.len() {
            return Err(Error::invalid("duplicate class labels"));
        }
        match &binaries {
            BinaryModels::Linear(ms) => {
                let d = ms[0].weights.len();
                if d < 2 || ms.iter().any(|m| m.weights.len() != d) {
                    return Err(Error::invalid("inconsistent linear weight lengths"));
                }
            }
            BinaryModels::Kernel(ms) => {
                let n = ms[0].alphas.len();
                if ms.iter().any(|m| {
                    m.alphas.len() != n
                        || m.kernel != ms[0].kernel
                        || m.support_indices.iter().any(|&i| i >= n)
                }) {
                    return Err(Error::invalid("inconsistent kernel model coefficients"));
                }
            }
        }
        Ok(SvmModel {
            class_labels,
            binaries,
            config,
        })
    }

    pub fn class_labels(&self) -> &[String] {
        &self.class_labels
    }

    pub fn binaries(&self) -> &BinaryModels {
        &self.binaries
    }

    pub fn config(&self) -> &SvmConfig {
        &self.config
    }

    pub fn mode(&self) -> SvmMode {
        match self.binaries {
            BinaryModels::Linear(_) => SvmMode::LinearExplicit,
            BinaryModels::Kernel(_) => SvmMode::KernelPrecomputed,
        }
    }

    /// Length of the vector `predict` expects: the feature dimension for
    /// linear models, the number of training rows for kernel models.
    pub fn input_len(&self) -> usize {
        match &self.binaries {
            BinaryModels::Linear(ms) => ms[0].feature_dim(),
            BinaryModels::Kernel(ms) => ms[0].training_size(),
        }
    }

    pub fn kernel(&self) -> Option<KernelSpec> {
        match &self.binaries {
            BinaryModels::Linear(_) => None,
            BinaryModels::Kernel(ms) => Some(ms[0].kernel),
        }
    }

    pub fn all_converged(&self) -> bool {
        match &self.binaries {
            BinaryModels::Linear(ms) => ms.iter().all(|m| m.diagnostics.converged),
            BinaryModels::Kernel(ms) => ms.iter().all(|m| m.diagnostics.converged),
        }
    }

    /// Per-class decision values for a feature vector (linear) or kernel row (kernel).
    pub fn decision_values(&self, input: &[f64]) -> Result<Vec<f64>> {
        let expected = self.input_len();
        if input.len() != expected {
            return Err(Error::DimensionMismatch {
                expected,
                actual: input.len(),
            });
        }
        Ok(match &self.binaries {
            BinaryModels::Linear(ms) => ms.iter().map(|m| m.decision_value(input)).collect(),
            BinaryModels::Kernel(ms) => ms.iter().map(|m| m.decision_value(input)).collect(),
        })
    }

    pub fn predict(&self, input: &[f64]) -> Result<Prediction> {
        let scores = self.decision_values(input)?;
        let class_index = argmax_first(&scores).expect("model has at least two classes");
        Ok(Prediction {
            class_index,
            label: self.class_labels[class_index].clone(),
            scores,
        })
    }

    /// For kernel models, drops training rows that are not a support vector of
    /// any class. Returns the reduced model and the kept row indices (ascending);
    /// kernel rows passed to the reduced model cover only those rows.
    pub fn compact_support(&self) -> (SvmModel, Vec<usize>) {
        match &self.binaries {
            BinaryModels::Linear(_) => (self.clone(), Vec::new()),
            BinaryModels::Kernel(ms) => {
                let n = ms[0].training_size();
                let mut keep = vec![false; n];
                for m in ms {
                    for &i in &m.support_indices {
                        keep[i] = true;
                    }
                }
                let kept: Vec<usize> = (0..n).filter(|&i| keep[i]).collect();
                let mut remap = vec![usize::MAX; n];
                for (new, &old) in kept.iter().enumerate() {
                    remap[old] = new;
                }
                let reduced = ms
                    .iter()
                    .map(|m| BinaryKernelModel {
                        alphas: kept.iter().map(|&i| m.alphas[i]).collect(),
                        support_indices: m.support_indices.iter().map(|&i| remap[i]).collect(),
                        kernel: m.kernel,
                        diagnostics: m.diagnostics.clone(),
                    })
                    .collect();
                (
                    SvmModel {
                        class_labels: self.class_labels.clone(),
                        binaries: BinaryModels::Kernel(reduced),
                        config: self.config,
                    },
                    kept,
                )
            }
        }
    }
}
