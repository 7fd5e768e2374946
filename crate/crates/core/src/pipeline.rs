//! Cross-validated experiment protocol.
//!
//! Per fold: fit a z-score normalizer on the training rows, normalize both
//! splits, optionally lift them through a random feature map, train a
//! one-vs-rest SVM and score the held-out rows. Folds run in parallel and are
//! aggregated in fold order, so results do not depend on scheduling.

use std::fmt::Write as _;
use std::time::Instant;

use ndarray::{Array2, ArrayView2, Axis};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::features::{build_map, MapDescriptor, RandomFeatureMap};
use crate::kernels::{gram_matrix, self_gram, KernelFamily, KernelSpec};
use crate::svm::{class_order, train_multiclass, Prediction, SvmConfig, SvmModel, TrainingInput};

/// Per-column z-score statistics fitted on a training split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Normalizer {
    pub mean: Vec<f64>,
    /// Population standard deviation; zero marks a degenerate column.
    pub std: Vec<f64>,
}

impl Normalizer {
    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn degenerate_columns(&self) -> Vec<usize> {
        (0..self.dim()).filter(|&j| self.std[j] == 0.0).collect()
    }

    /// `(x - mean) / std` per column; degenerate columns are only centered.
    pub fn apply(&self, x: ArrayView2<f64>) -> Result<Array2<f64>> {
        if x.ncols() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                actual: x.ncols(),
            });
        }
        let mut out = x.to_owned();
        for mut row in out.axis_iter_mut(Axis(0)) {
            for ((v, m), s) in row.iter_mut().zip(&self.mean).zip(&self.std) {
                let centered = *v - m;
                *v = if *s == 0.0 { centered } else { centered / s };
            }
        }
        Ok(out)
    }
}

pub fn fit_normalizer(x: ArrayView2<f64>) -> Result<Normalizer> {
    let n = x.nrows();
    if n < 2 {
        return Err(Error::invalid(format!("normalizer needs at least 2 rows, got {n}")));
    }
    let mut mean = vec![0.0; x.ncols()];
    for row in x.axis_iter(Axis(0)) {
        for (m, v) in mean.iter_mut().zip(row) {
            *m += v;
        }
    }
    for m in &mut mean {
        *m /= n as f64;
    }
    let mut var = vec![0.0; x.ncols()];
    for row in x.axis_iter(Axis(0)) {
        for ((s, v), m) in var.iter_mut().zip(row).zip(&mean) {
            let d = v - m;
            *s += d * d;
        }
    }
    let std = var.into_iter().map(|s| (s / n as f64).sqrt()).collect();
    Ok(Normalizer { mean, std })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FeatureMode {
    ExactKernel,
    RandomFeatures { target_dim: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub kernel: KernelSpec,
    pub mode: FeatureMode,
    pub svm: SvmConfig,
    pub map_seed: u64,
    /// Draw a fresh map per fold (seed + fold index) instead of sharing one.
    #[serde(default)]
    pub reseed_per_fold: bool,
}

impl ExperimentConfig {
    pub fn exact(kernel: KernelSpec, svm: SvmConfig) -> Self {
        ExperimentConfig {
            kernel,
            mode: FeatureMode::ExactKernel,
            svm,
            map_seed: 0,
            reseed_per_fold: false,
        }
    }

    pub fn random_features(kernel: KernelSpec, target_dim: usize, svm: SvmConfig, map_seed: u64) -> Self {
        ExperimentConfig {
            kernel,
            mode: FeatureMode::RandomFeatures { target_dim },
            svm,
            map_seed,
            reseed_per_fold: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.svm.validate()?;
        if let FeatureMode::RandomFeatures { target_dim } = self.mode {
            if self.kernel.family() == KernelFamily::Linear {
                return Err(Error::LinearKernelHasNoFeatures);
            }
            if target_dim == 0 {
                return Err(Error::invalid("random feature dimension M must be >= 1"));
            }
        }
        Ok(())
    }

    /// Logs a warning when random features would not shrink the input.
    pub fn warn_if_not_reducing(&self, input_dim: usize) {
        if let FeatureMode::RandomFeatures { target_dim } = self.mode {
            if target_dim >= input_dim {
                log::warn!("random feature dimension M={target_dim} is not below the input dimension N={input_dim}");
            }
        }
    }

    fn seed_for_fold(&self, fold: usize) -> u64 {
        if self.reseed_per_fold {
            self.map_seed.wrapping_add(fold as u64)
        } else {
            self.map_seed
        }
    }

    pub fn effective_dim(&self, input_dim: usize) -> usize {
        match self.mode {
            FeatureMode::ExactKernel => input_dim,
            FeatureMode::RandomFeatures { target_dim } => target_dim,
        }
    }
}

/// Everything needed to classify raw feature rows.
#[derive(Debug, Clone, PartialEq)]
pub struct Predictor {
    pub kernel: KernelSpec,
    pub mode: FeatureMode,
    pub normalizer: Normalizer,
    pub feature_map: Option<RandomFeatureMap>,
    /// Normalized training rows referenced by a kernel model.
    pub support_vectors: Option<Array2<f64>>,
    pub model: SvmModel,
}

impl Predictor {
    pub fn input_dim(&self) -> usize {
        self.normalizer.dim()
    }

    pub fn map_descriptor(&self) -> Option<MapDescriptor> {
        self.feature_map.as_ref().map(RandomFeatureMap::descriptor)
    }

    pub fn predict(&self, x: ArrayView2<f64>) -> Result<Vec<Prediction>> {
        let z = self.normalizer.apply(x)?;
        match (&self.feature_map, &self.support_vectors) {
            (_, Some(sv)) => {
                let rows = gram_matrix(&self.kernel, z.view(), sv.view())?;
                (0..rows.row_count())
                    .map(|i| self.model.predict(rows.row(i).as_slice().expect("standard layout")))
                    .collect()
            }
            (Some(map), None) => {
                let phi = map.transform(z.view())?;
                predict_rows(&self.model, phi.view())
            }
            (None, None) => predict_rows(&self.model, z.view()),
        }
    }
}

fn predict_rows(model: &SvmModel, x: ArrayView2<f64>) -> Result<Vec<Prediction>> {
    let x = x.as_standard_layout();
    x.axis_iter(Axis(0))
        .map(|r| model.predict(r.to_slice().expect("standard layout")))
        .collect()
}

/// Fits normalizer, feature map and SVM on one training split.
pub fn train_predictor<S: AsRef<str> + Sync>(
    x: ArrayView2<f64>,
    labels: &[S],
    config: &ExperimentConfig,
    map_seed: u64,
) -> Result<Predictor> {
    config.validate()?;
    let normalizer = fit_normalizer(x)?;
    let z = normalizer.apply(x)?;
    match config.mode {
        FeatureMode::RandomFeatures { target_dim } => {
            let map = build_map(&config.kernel, x.ncols(), target_dim, map_seed)?;
            let phi = map.transform(z.view())?;
            let model = train_multiclass(TrainingInput::Features(phi.view()), labels, &config.svm)?;
            Ok(Predictor {
                kernel: config.kernel,
                mode: config.mode,
                normalizer,
                feature_map: Some(map),
                support_vectors: None,
                model,
            })
        }
        FeatureMode::ExactKernel if config.kernel.family() == KernelFamily::Linear => {
            let model = train_multiclass(TrainingInput::Features(z.view()), labels, &config.svm)?;
            Ok(Predictor {
                kernel: config.kernel,
                mode: config.mode,
                normalizer,
                feature_map: None,
                support_vectors: None,
                model,
            })
        }
        FeatureMode::ExactKernel => {
            let gram = self_gram(&config.kernel, z.view())?;
            let full = train_multiclass(
                TrainingInput::Gram {
                    gram: &gram,
                    kernel: config.kernel,
                },
                labels,
                &config.svm,
            )?;
            let (model, kept) = full.compact_support();
            Ok(Predictor {
                kernel: config.kernel,
                mode: config.mode,
                normalizer,
                feature_map: None,
                support_vectors: Some(z.select(Axis(0), &kept)),
                model,
            })
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldResult {
    pub fold: usize,
    pub train_count: usize,
    pub test_count: usize,
    pub correct: usize,
    pub accuracy: f64,
    pub converged: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub timing: Option<Timing>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub train_seconds: f64,
    pub test_seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassAccuracy {
    pub label: String,
    pub test_count: u64,
    /// `None` when the class never appears in a test split.
    pub accuracy: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dims {
    pub input_dim: usize,
    pub effective_dim: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub config: ExperimentConfig,
    pub overall_accuracy: f64,
    pub class_labels: Vec<String>,
    pub per_class_accuracy: Vec<ClassAccuracy>,
    /// `confusion[true][predicted]` in `class_labels` order.
    pub confusion: Vec<Vec<u64>>,
    pub per_fold: Vec<FoldResult>,
    pub dims: Dims,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub storage: Option<StorageReport>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub timing: Option<Timing>,
}

impl EvalReport {
    /// Drops wall-clock fields so reports can be compared byte for byte.
    pub fn without_timing(mut self) -> Self {
        self.timing = None;
        for f in &mut self.per_fold {
            f.timing = None;
        }
        self
    }

    /// Overall accuracy recomputed from the confusion matrix.
    pub fn confusion_accuracy(&self) -> f64 {
        let total: u64 = self.confusion.iter().flatten().sum();
        let diag: u64 = (0..self.confusion.len()).map(|i| self.confusion[i][i]).sum();
        diag as f64 / total as f64
    }
}

/// Predictions for one held-out fold, before aggregation.
#[derive(Debug, Clone, PartialEq)]
pub struct FoldOutcome {
    pub fold: usize,
    pub train_count: usize,
    pub test_rows: Vec<usize>,
    pub predicted: Vec<String>,
    pub converged: bool,
    pub timing: Timing,
}

fn fold_indices(dataset: &Dataset) -> Result<&[usize]> {
    dataset
        .folds()
        .ok_or_else(|| Error::invalid("dataset has no fold assignment"))
}

/// Trains on every fold except `fold` and predicts the rows of `fold`.
pub fn evaluate_fold(dataset: &Dataset, config: &ExperimentConfig, fold: usize) -> Result<FoldOutcome> {
    let folds = fold_indices(dataset)?;
    let (train, test): (Vec<usize>, Vec<usize>) = (0..dataset.len()).partition(|&i| folds[i] != fold);
    if test.is_empty() {
        return Err(Error::Fold {
            fold,
            message: "test split is empty".into(),
        });
    }
    let (x_train, y_train) = dataset.select(&train);
    let classes = class_order(&y_train);
    if classes.len() < 2 {
        return Err(Error::Fold {
            fold,
            message: format!("training split has a single class ({})", classes.join(",")),
        });
    }
    let start = Instant::now();
    let predictor = train_predictor(x_train.view(), &y_train, config, config.seed_for_fold(fold))
        .map_err(|e| Error::Fold {
            fold,
            message: e.to_string(),
        })?;
    let train_seconds = start.elapsed().as_secs_f64();
    let (x_test, _) = dataset.select(&test);
    let start = Instant::now();
    let predicted = predictor
        .predict(x_test.view())?
        .into_iter()
        .map(|p| p.label)
        .collect();
    let test_seconds = start.elapsed().as_secs_f64();
    Ok(FoldOutcome {
        fold,
        train_count: train.len(),
        test_rows: test,
        predicted,
        converged: predictor.model.all_converged(),
        timing: Timing {
            train_seconds,
            test_seconds,
        },
    })
}

/// Combines fold outcomes (in any order) into a report. Overall accuracy is
/// the micro-average: total correct over total test rows.
pub fn aggregate_folds(dataset: &Dataset, config: &ExperimentConfig, mut outcomes: Vec<FoldOutcome>) -> Result<EvalReport> {
    outcomes.sort_by_key(|o| o.fold);
    let class_labels = dataset.class_labels();
    let k = class_labels.len();
    let index_of = |label: &str| class_labels.iter().position(|c| c == label);
    let mut confusion = vec![vec![0u64; k]; k];
    let mut per_fold = Vec::with_capacity(outcomes.len());
    let (mut train_s, mut test_s) = (0.0, 0.0);

    for o in &outcomes {
        let mut correct = 0;
        for (&row, pred) in o.test_rows.iter().zip(&o.predicted) {
            let truth = &dataset.labels()[row];
            let t = index_of(truth).expect("label from dataset");
            let p = index_of(pred).ok_or_else(|| Error::invalid(format!("predicted unknown label '{pred}'")))?;
            confusion[t][p] += 1;
            if t == p {
                correct += 1;
            }
        }
        train_s += o.timing.train_seconds;
        test_s += o.timing.test_seconds;
        per_fold.push(FoldResult {
            fold: o.fold,
            train_count: o.train_count,
            test_count: o.test_rows.len(),
            correct,
            accuracy: correct as f64 / o.test_rows.len() as f64,
            converged: o.converged,
            timing: Some(o.timing),
        });
    }

    let total: usize = per_fold.iter().map(|f| f.test_count).sum();
    let correct: usize = per_fold.iter().map(|f| f.correct).sum();
    if total == 0 {
        return Err(Error::invalid("no test rows were evaluated"));
    }
    let per_class_accuracy = class_labels
        .iter()
        .enumerate()
        .map(|(i, label)| {
            let count: u64 = confusion[i].iter().sum();
            ClassAccuracy {
                label: label.clone(),
                test_count: count,
                accuracy: (count > 0).then(|| confusion[i][i] as f64 / count as f64),
            }
        })
        .collect();
    let input_dim = dataset.dim();
    let storage = match config.mode {
        FeatureMode::RandomFeatures { target_dim } => Some(storage_report(input_dim, target_dim, dataset.len())),
        FeatureMode::ExactKernel => None,
    };
    Ok(EvalReport {
        config: *config,
        overall_accuracy: correct as f64 / total as f64,
        class_labels,
        per_class_accuracy,
        confusion,
        per_fold,
        dims: Dims {
            input_dim,
            effective_dim: config.effective_dim(input_dim),
        },
        storage,
        timing: Some(Timing {
            train_seconds: train_s,
            test_seconds: test_s,
        }),
    })
}

/// Runs the full cross-validation protocol over the dataset's folds.
pub fn run_experiment(dataset: &Dataset, config: &ExperimentConfig) -> Result<EvalReport> {
    config.validate()?;
    config.warn_if_not_reducing(dataset.dim());
    let k = dataset.fold_count();
    if k < 2 {
        return Err(Error::invalid(format!("cross-validation needs at least 2 folds, got {k}")));
    }
    let outcomes = (1..=k)
        .into_par_iter()
        .map(|fold| evaluate_fold(dataset, config, fold))
        .collect::<Result<Vec<_>>>()?;
    aggregate_folds(dataset, config, outcomes)
}

/// One cross-validation run per random-feature dimension, same seed policy throughout.
pub fn sweep_m(dataset: &Dataset, base: &ExperimentConfig, m_values: &[usize]) -> Result<Vec<(usize, EvalReport)>> {
    if m_values.is_empty() {
        return Err(Error::invalid("M sweep needs at least one value"));
    }
    if base.mode == FeatureMode::ExactKernel {
        return Err(Error::invalid("M sweep requires random_features mode"));
    }
    m_values
        .iter()
        .map(|&m| {
            let config = ExperimentConfig {
                mode: FeatureMode::RandomFeatures { target_dim: m },
                ..*base
            };
            run_experiment(dataset, &config).map(|r| (m, r))
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridCell {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma: Option<f64>,
    pub c: f64,
    pub accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSearchResult {
    pub family: KernelFamily,
    pub best: GridCell,
    /// Every cell, gamma-major, both axes ascending.
    pub table: Vec<GridCell>,
}

fn sorted_grid(values: &[f64], what: &str) -> Result<Vec<f64>> {
    if values.is_empty() {
        return Err(Error::invalid(format!("{what} grid is empty")));
    }
    if let Some(v) = values.iter().find(|v| !(v.is_finite() && **v > 0.0)) {
        return Err(Error::invalid(format!("{what} grid value {v} is not positive")));
    }
    let mut out = values.to_vec();
    out.sort_by(f64::total_cmp);
    out.dedup();
    Ok(out)
}

/// Cross-validated accuracy over a gamma x C grid. The linear family ignores
/// the gamma grid. Ties go to the smaller gamma, then the smaller C.
pub fn grid_search(
    dataset: &Dataset,
    base: &ExperimentConfig,
    gamma_grid: &[f64],
    c_grid: &[f64],
) -> Result<GridSearchResult> {
    let family = base.kernel.family();
    let cs = sorted_grid(c_grid, "C")?;
    let gammas: Vec<Option<f64>> = if family == KernelFamily::Linear {
        vec![None]
    } else {
        sorted_grid(gamma_grid, "gamma")?.into_iter().map(Some).collect()
    };
    let mut table = Vec::with_capacity(gammas.len() * cs.len());
    for gamma in &gammas {
        for &c in &cs {
            let kernel = match gamma {
                Some(g) => KernelSpec::new(family, *g)?,
                None => KernelSpec::linear(),
            };
            let config = ExperimentConfig {
                kernel,
                svm: SvmConfig {
                    regularization_c: c,
                    ..base.svm
                },
                ..*base
            };
            let report = run_experiment(dataset, &config)?;
            table.push(GridCell {
                gamma: *gamma,
                c,
                accuracy: report.overall_accuracy,
            });
        }
    }
    let mut best = table[0];
    for cell in &table[1..] {
        if cell.accuracy > best.accuracy {
            best = *cell;
        }
    }
    Ok(GridSearchResult { family, best, table })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StorageReport {
    pub input_dim: usize,
    pub target_dim: usize,
    pub rows: usize,
    /// `8 * rows * N`
    pub input_bytes: u64,
    /// `8 * rows * M` plus the map descriptor
    pub rff_bytes: u64,
    /// `N / M`
    pub ratio: f64,
}

pub fn storage_report(input_dim: usize, target_dim: usize, rows: usize) -> StorageReport {
    StorageReport {
        input_dim,
        target_dim,
        rows,
        input_bytes: 8 * rows as u64 * input_dim as u64,
        rff_bytes: 8 * rows as u64 * target_dim as u64 + MapDescriptor::ACCOUNTED_BYTES,
        ratio: input_dim as f64 / target_dim as f64,
    }
}

fn percent(v: Option<f64>) -> String {
    match v {
        Some(a) => format!("{:.1} %", 100.0 * a),
        None => "-".to_string(),
    }
}

/// Column header for a kernel, e.g. `Gaussian (γ=2^-18)`.
pub fn kernel_column_name(spec: &KernelSpec) -> String {
    let mut name = spec.family().name().to_string();
    name[..1].make_ascii_uppercase();
    match spec.gamma() {
        None => name,
        Some(g) => format!("{name} (γ={})", format_gamma(g)),
    }
}

/// Powers of two print as `2^k`, anything else as a plain number.
pub fn format_gamma(g: f64) -> String {
    let e = g.log2().round();
    if (e.exp2() - g).abs() <= g * 1e-12 {
        format!("2^{}", e as i64)
    } else {
        format!("{g}")
    }
}

/// Class-wise accuracy table: one row per class, one column per report.
pub fn format_class_table(columns: &[(String, &EvalReport)]) -> String {
    let mut classes: Vec<String> = Vec::new();
    for (_, r) in columns {
        for l in &r.class_labels {
            if !classes.contains(l) {
                classes.push(l.clone());
            }
        }
    }
    let first_width = classes.iter().map(|c| c.chars().count()).max().unwrap_or(0).max(14);
    let widths: Vec<usize> = columns.iter().map(|(h, _)| h.chars().count().max(8)).collect();
    let mut out = String::new();
    let _ = write!(out, "{:<first_width$}", "Class");
    for ((h, _), w) in columns.iter().zip(&widths) {
        let _ = write!(out, " | {h:>w$}");
    }
    out.push('\n');
    out.push_str(&"-".repeat(first_width + widths.iter().map(|w| w + 3).sum::<usize>()));
    out.push('\n');
    for class in &classes {
        let _ = write!(out, "{class:<first_width$}");
        for ((_, r), w) in columns.iter().zip(&widths) {
            let acc = r
                .per_class_accuracy
                .iter()
                .find(|c| &c.label == class)
                .and_then(|c| c.accuracy);
            let _ = write!(out, " | {:>w$}", percent(acc));
        }
        out.push('\n');
    }
    let _ = write!(out, "{:<first_width$}", "Overall");
    for ((_, r), w) in columns.iter().zip(&widths) {
        let _ = write!(out, " | {:>w$}", percent(Some(r.overall_accuracy)));
    }
    out.push('\n');
    out
}

/// Dimension sweep table: one row per M, one accuracy column per kernel, plus
/// the `N / M` storage ratio.
pub fn format_sweep_table(input_dim: usize, m_values: &[usize], columns: &[(String, Vec<f64>)]) -> String {
    let widths: Vec<usize> = columns.iter().map(|(h, _)| h.chars().count().max(8)).collect();
    let mut out = String::new();
    let _ = write!(out, "{:>8}", "M");
    for ((h, _), w) in columns.iter().zip(&widths) {
        let _ = write!(out, " | {h:>w$}");
    }
    let _ = writeln!(out, " | {:>7}", "N/M");
    out.push_str(&"-".repeat(8 + widths.iter().map(|w| w + 3).sum::<usize>() + 10));
    out.push('\n');
    for (row, &m) in m_values.iter().enumerate() {
        let label = if m.is_power_of_two() {
            format!("2^{}", m.trailing_zeros())
        } else {
            m.to_string()
        };
        let _ = write!(out, "{label:>8}");
        for ((_, accs), w) in columns.iter().zip(&widths) {
            let _ = write!(out, " | {:>w$}", percent(accs.get(row).copied()));
        }
        let ratio = storage_report(input_dim, m, 1).ratio;
        let _ = writeln!(out, " | {:>6.1}x", ratio);
    }
    out
}
