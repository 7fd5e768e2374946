//! Shared fixtures for the criterion benches.

use shiftrf::{Dataset, SyntheticSpec};

/// Blob dataset sized like a single training fold of the desk-scale benchmark.
pub fn fold_sized_dataset(dim: usize) -> Dataset {
    shiftrf::make_synthetic(&SyntheticSpec::new(15, 75, dim, 4.0, 17)).expect("valid synthetic spec")
}
