//! Random cosine features for shift-invariant kernels and the SVM machinery
//! around them.
//!
//! The crate approximates Gaussian, Laplacian and Cauchy kernels with maps
//! `phi(x) = sqrt(2/M) cos(W x + b)` whose inner products converge to the
//! exact kernel, and trains either a linear SVM on those features or a kernel
//! SVM on the exact Gram matrix. [`pipeline`] wraps both in the
//! cross-validated protocol (per-fold z-scoring, one-vs-rest, class-wise
//! accuracy, dimension sweeps and grid search).

pub mod data;
pub mod error;
pub mod features;
pub mod kernels;
pub mod model_io;
pub mod pipeline;
pub mod rng;
pub mod svm;

pub use data::{load_features, load_fold_manifest, make_synthetic, write_features, Dataset, SyntheticSpec};
pub use error::{Error, Result};
pub use features::{build_map, probe_approximation, sample_spectral, MapDescriptor, ProbeRow, RandomFeatureMap};
pub use kernels::{gram_matrix, kernel_eval, self_gram, shift_invariance_check, GramMatrix, KernelFamily, KernelSpec};
pub use model_io::{load_model, save_model, FORMAT_VERSION};
pub use pipeline::{
    fit_normalizer, grid_search, run_experiment, storage_report, sweep_m, train_predictor, EvalReport,
    ExperimentConfig, FeatureMode, Normalizer, Predictor, StorageReport,
};
pub use rng::SeededStream;
pub use svm::{
    train_binary_kernel, train_binary_linear, train_multiclass, Prediction, SvmConfig, SvmModel, TrainingInput,
};
