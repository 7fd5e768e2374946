//! Random cosine features `phi(x) = sqrt(2/M) cos(W x + b)`.
//!
//! Rows of `W` are drawn from the spectral distribution of the kernel (the
//! Fourier transform of `K(delta, 0)`), phases `b` uniformly on `[0, 2 pi)`:
//!
//! | kernel    | frequency distribution        |
//! |-----------|-------------------------------|
//! | gaussian  | normal, mean 0, variance 2γ   |
//! | laplacian | Cauchy, location 0, scale γ   |
//! | cauchy    | Laplace, location 0, scale γ  |
//!
//! A map is fully determined by `(spec, N, M, seed)`. The stream is consumed
//! in a fixed order (all of `W` row-major, then all of `b`), which is what
//! lets model files store only the seed.

use std::path::Path;

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::atomic_write;
use crate::error::{Error, Result};
use crate::kernels::{check_finite_matrix, GramMatrix, KernelFamily, KernelSpec};
use crate::rng::SeededStream;

pub const MAP_DESCRIPTOR_VERSION: u32 = 1;

/// Rows per parallel work item in [`RandomFeatureMap::transform`].
const TRANSFORM_CHUNK_ROWS: usize = 256;

/// Draws `count` i.i.d. frequencies from the spectral distribution of `spec`.
pub fn sample_spectral(spec: &KernelSpec, count: usize, stream: &mut SeededStream) -> Result<Vec<f64>> {
    let gamma = match (spec.family(), spec.gamma()) {
        (KernelFamily::Linear, _) | (_, None) => return Err(Error::LinearKernelHasNoFeatures),
        (_, Some(g)) => g,
    };
    if count == 0 {
        return Err(Error::invalid("sample count must be >= 1"));
    }
    let mut out = Vec::with_capacity(count);
    match spec.family() {
        KernelFamily::Gaussian => {
            let sd = (2.0 * gamma).sqrt();
            out.extend((0..count).map(|_| sd * stream.next_standard_normal()));
        }
        KernelFamily::Laplacian => out.extend((0..count).map(|_| stream.next_cauchy(gamma))),
        KernelFamily::Cauchy => out.extend((0..count).map(|_| stream.next_laplace(gamma))),
        KernelFamily::Linear => unreachable!(),
    }
    Ok(out)
}

/// Serializable identity of a map: everything needed to regenerate `W` and `b`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MapDescriptor {
    pub version: u32,
    pub kernel: KernelSpec,
    pub input_dim: usize,
    pub target_dim: usize,
    pub seed: u64,
}

impl MapDescriptor {
    /// Serialized size in the storage accounting: version, family, gamma, N, M, seed.
    pub const ACCOUNTED_BYTES: u64 = 6 * 8;

    pub fn build(&self) -> Result<RandomFeatureMap> {
        if self.version != MAP_DESCRIPTOR_VERSION {
            return Err(Error::VersionMismatch {
                found: self.version,
                supported: MAP_DESCRIPTOR_VERSION,
            });
        }
        build_map(&self.kernel, self.input_dim, self.target_dim, self.seed)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RandomFeatureMap {
    weights: Array2<f64>,
    phases: Array1<f64>,
    spec: KernelSpec,
    seed: u64,
}

/// Builds the `M x N` frequency matrix and the `M` phases for `spec`.
pub fn build_map(spec: &KernelSpec, input_dim: usize, target_dim: usize, seed: u64) -> Result<RandomFeatureMap> {
    if !spec.family().is_shift_invariant() {
        return Err(Error::LinearKernelHasNoFeatures);
    }
    if input_dim == 0 || target_dim == 0 {
        return Err(Error::invalid(format!(
            "feature map dimensions must be positive (N={input_dim}, M={target_dim})"
        )));
    }
    let mut stream = SeededStream::new(seed);
    let w = sample_spectral(spec, target_dim * input_dim, &mut stream)?;
    let weights = Array2::from_shape_vec((target_dim, input_dim), w)
        .expect("spectral sample count matches M*N");
    let phases: Array1<f64> = (0..target_dim).map(|_| stream.next_phase()).collect();
    Ok(RandomFeatureMap {
        weights,
        phases,
        spec: *spec,
        seed,
    })
}

impl RandomFeatureMap {
    pub fn input_dim(&self) -> usize {
        self.weights.ncols()
    }

    pub fn target_dim(&self) -> usize {
        self.weights.nrows()
    }

    pub fn spec(&self) -> &KernelSpec {
        &self.spec
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn weights(&self) -> &Array2<f64> {
        &self.weights
    }

    pub fn phases(&self) -> &Array1<f64> {
        &self.phases
    }

    pub fn descriptor(&self) -> MapDescriptor {
        MapDescriptor {
            version: MAP_DESCRIPTOR_VERSION,
            kernel: self.spec,
            input_dim: self.input_dim(),
            target_dim: self.target_dim(),
            seed: self.seed,
        }
    }

    /// Maps each row of `x` to `sqrt(2/M) cos(W x + b)`.
    ///
    /// Computed as `X W^T` over fixed row chunks followed by the phase add and
    /// cosine; the chunking is independent of the thread pool size.
    pub fn transform(&self, x: ArrayView2<f64>) -> Result<Array2<f64>> {
        if x.ncols() != self.input_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.input_dim(),
                actual: x.ncols(),
            });
        }
        check_finite_matrix(&x)?;
        let m = self.target_dim();
        let scale = (2.0 / m as f64).sqrt();
        let wt = self.weights.t();
        let mut out = Array2::<f64>::zeros((x.nrows(), m));
        out.axis_chunks_iter_mut(Axis(0), TRANSFORM_CHUNK_ROWS)
            .into_par_iter()
            .zip(x.axis_chunks_iter(Axis(0), TRANSFORM_CHUNK_ROWS).into_par_iter())
            .for_each(|(mut out_chunk, x_chunk)| {
                ndarray::linalg::general_mat_mul(1.0, &x_chunk, &wt, 0.0, &mut out_chunk);
                for mut row in out_chunk.axis_iter_mut(Axis(0)) {
                    for (v, b) in row.iter_mut().zip(self.phases.iter()) {
                        *v = scale * (*v + b).cos();
                    }
                }
            });
        Ok(out)
    }

    /// `transform(X) transform(X)^T`, the random-feature estimate of the self-Gram.
    pub fn approx_gram(&self, x: ArrayView2<f64>) -> Result<GramMatrix> {
        let z = self.transform(x)?;
        GramMatrix::from_array(z.dot(&z.t()))
    }

    /// Writes `W` (row-major) then `b` as little-endian 64-bit floats.
    pub fn export_dense(&self, path: &Path) -> Result<()> {
        let mut bytes = Vec::with_capacity(8 * (self.weights.len() + self.phases.len()));
        for v in self.weights.iter().chain(self.phases.iter()) {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
        atomic_write(path, |w| Ok(w.write_all(&bytes)?))
    }
}

/// Approximation error of one map dimension over a set of point pairs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProbeRow {
    pub target_dim: usize,
    pub mean_abs_error: f64,
    pub max_abs_error: f64,
    /// `mean_abs_error * sqrt(M)`; roughly flat when error falls as `1/sqrt(M)`.
    pub scaled_error: f64,
}

/// Measures `|<phi(x), phi(y)> - K(x, y)|` over `pairs` standard-normal point
/// pairs in dimension `dim`, once per entry of `m_values`.
///
/// Every pair gets its own map so the pairs are independent trials; sharing
/// one map makes the errors of similar pairs move together. Points come from
/// `seed`; pair `p` at the k-th M uses map seed `seed + 1 + k * pairs + p`.
pub fn probe_approximation(
    spec: &KernelSpec,
    dim: usize,
    pairs: usize,
    m_values: &[usize],
    seed: u64,
) -> Result<Vec<ProbeRow>> {
    if !spec.family().is_shift_invariant() {
        return Err(Error::LinearKernelHasNoFeatures);
    }
    if dim == 0 || pairs == 0 || m_values.is_empty() {
        return Err(Error::invalid("probe needs dim >= 1, pairs >= 1 and at least one M"));
    }
    let mut stream = SeededStream::new(seed);
    let points = Array2::from_shape_simple_fn((2 * pairs, dim), || stream.next_standard_normal());
    m_values
        .iter()
        .enumerate()
        .map(|(k, &m)| {
            let errors = (0..pairs)
                .into_par_iter()
                .map(|p| {
                    let pair = points.slice(ndarray::s![2 * p..2 * p + 2, ..]);
                    let exact = crate::kernels::kernel_eval(
                        spec,
                        pair.row(0).as_slice().expect("standard layout"),
                        pair.row(1).as_slice().expect("standard layout"),
                    )?;
                    let map_seed = seed.wrapping_add(1 + (k * pairs + p) as u64);
                    let phi = build_map(spec, dim, m, map_seed)?.transform(pair)?;
                    let approx = feature_dot(
                        phi.row(0).as_slice().expect("standard layout"),
                        phi.row(1).as_slice().expect("standard layout"),
                    );
                    Ok((approx - exact).abs())
                })
                .collect::<Result<Vec<f64>>>()?;
            let mean = errors.iter().sum::<f64>() / pairs as f64;
            Ok(ProbeRow {
                target_dim: m,
                mean_abs_error: mean,
                max_abs_error: errors.iter().copied().fold(0.0, f64::max),
                scaled_error: mean * (m as f64).sqrt(),
            })
        })
        .collect()
}

/// Inner product of two feature vectors.
pub fn feature_dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).fold(0.0, |acc, (x, y)| acc + x * y)
}
