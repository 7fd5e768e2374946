//! Self-contained model files.
//!
//! A model file is one JSON object. Numeric arrays are stored as base64 of
//! little-endian `f64`s. Random-feature models keep only the map descriptor;
//! `W` and `b` are regenerated from its seed on load, so the seed is the map.

use std::path::Path;

use base64::engine::general_purpose::STANDARD;
use base64::Engine as _;
use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::data::atomic_write;
use crate::error::{Error, Result};
use crate::features::MapDescriptor;
use crate::kernels::KernelSpec;
use crate::pipeline::{FeatureMode, Normalizer, Predictor};
use crate::svm::{BinaryKernelModel, BinaryLinearModel, BinaryModels, SvmConfig, SvmMode, SvmModel, TrainDiagnostics};

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct PackedMatrix {
    rows: usize,
    cols: usize,
    data: String,
}

impl PackedMatrix {
    fn pack(rows: usize, cols: usize, values: impl IntoIterator<Item = f64>) -> Self {
        let mut bytes = Vec::with_capacity(8 * rows * cols);
        for v in values {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
        debug_assert_eq!(bytes.len(), 8 * rows * cols);
        PackedMatrix {
            rows,
            cols,
            data: STANDARD.encode(bytes),
        }
    }

    fn unpack(&self, what: &str) -> Result<Vec<f64>> {
        let bytes = STANDARD
            .decode(&self.data)
            .map_err(|e| Error::invalid(format!("{what}: bad base64 ({e})")))?;
        let expected = self
            .rows
            .checked_mul(self.cols)
            .and_then(|n| n.checked_mul(8))
            .ok_or_else(|| Error::invalid(format!("{what}: shape overflow")))?;
        if bytes.len() != expected {
            return Err(Error::invalid(format!(
                "{what}: expected {expected} bytes for {}x{}, found {} (truncated?)",
                self.rows,
                self.cols,
                bytes.len()
            )));
        }
        let values: Vec<f64> = bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
            .collect();
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid(format!("{what}: non-finite value")));
        }
        Ok(values)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct StoredNormalizer {
    mean: PackedMatrix,
    std: PackedMatrix,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct StoredKernelDual {
    /// Signed dual coefficients, one row per class over the stored support rows.
    coefficients: PackedMatrix,
    support_indices: Vec<Vec<usize>>,
    support_vectors: PackedMatrix,
}

/// On-disk layout of a trained predictor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct ModelFile {
    format_version: u32,
    kernel: KernelSpec,
    mode: FeatureMode,
    svm_mode: SvmMode,
    config: SvmConfig,
    class_labels: Vec<String>,
    input_dim: usize,
    normalizer: StoredNormalizer,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    feature_map: Option<MapDescriptor>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    weights: Option<PackedMatrix>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    dual: Option<StoredKernelDual>,
    diagnostics: Vec<TrainDiagnostics>,
}

fn to_file(p: &Predictor) -> Result<ModelFile> {
    let dim = p.input_dim();
    let normalizer = StoredNormalizer {
        mean: PackedMatrix::pack(1, dim, p.normalizer.mean.iter().copied()),
        std: PackedMatrix::pack(1, dim, p.normalizer.std.iter().copied()),
    };
    let classes = p.model.class_labels().len();
    let (weights, dual, diagnostics) = match p.model.binaries() {
        BinaryModels::Linear(ms) => {
            let cols = ms[0].weights.len();
            let packed = PackedMatrix::pack(classes, cols, ms.iter().flat_map(|m| m.weights.iter().copied()));
            (Some(packed), None, ms.iter().map(|m| m.diagnostics.clone()).collect())
        }
        BinaryModels::Kernel(ms) => {
            let sv = p
                .support_vectors
                .as_ref()
                .ok_or_else(|| Error::invalid("kernel model without support vectors"))?;
            let s = ms[0].alphas.len();
            if sv.nrows() != s {
                return Err(Error::invalid("support vector count does not match coefficients"));
            }
            let dual = StoredKernelDual {
                coefficients: PackedMatrix::pack(classes, s, ms.iter().flat_map(|m| m.alphas.iter().copied())),
                support_indices: ms.iter().map(|m| m.support_indices.clone()).collect(),
                support_vectors: PackedMatrix::pack(s, sv.ncols(), sv.iter().copied()),
            };
            (None, Some(dual), ms.iter().map(|m| m.diagnostics.clone()).collect())
        }
    };
    Ok(ModelFile {
        format_version: FORMAT_VERSION,
        kernel: p.kernel,
        mode: p.mode,
        svm_mode: p.model.mode(),
        config: *p.model.config(),
        class_labels: p.model.class_labels().to_vec(),
        input_dim: dim,
        normalizer,
        feature_map: p.map_descriptor(),
        weights,
        dual,
        diagnostics,
    })
}

fn from_file(f: ModelFile) -> Result<Predictor> {
    if f.format_version != FORMAT_VERSION {
        return Err(Error::VersionMismatch {
            found: f.format_version,
            supported: FORMAT_VERSION,
        });
    }
    let mean = f.normalizer.mean.unpack("normalizer mean")?;
    let std = f.normalizer.std.unpack("normalizer std")?;
    if mean.len() != f.input_dim || std.len() != f.input_dim {
        return Err(Error::invalid("normalizer length does not match input_dim"));
    }
    let classes = f.class_labels.len();
    if f.diagnostics.len() != classes {
        return Err(Error::invalid("diagnostics count does not match class count"));
    }
    let feature_map = match (f.mode, f.feature_map) {
        (FeatureMode::RandomFeatures { target_dim }, Some(desc)) => {
            if desc.target_dim != target_dim || desc.input_dim != f.input_dim || desc.kernel != f.kernel {
                return Err(Error::invalid("feature map descriptor disagrees with model header"));
            }
            Some(desc.build()?)
        }
        (FeatureMode::ExactKernel, None) => None,
        _ => return Err(Error::invalid("feature map presence does not match mode")),
    };

    let (binaries, support_vectors) = match (f.svm_mode, f.weights, f.dual) {
        (SvmMode::LinearExplicit, Some(w), None) => {
            let values = w.unpack("weights")?;
            if w.rows != classes || w.cols < 2 {
                return Err(Error::invalid("weight matrix shape does not match classes"));
            }
            let models = values
                .chunks_exact(w.cols)
                .zip(f.diagnostics)
                .map(|(row, diagnostics)| BinaryLinearModel {
                    weights: row.to_vec(),
                    support_count: 0,
                    diagnostics,
                })
                .collect();
            (BinaryModels::Linear(models), None)
        }
        (SvmMode::KernelPrecomputed, None, Some(d)) => {
            let coef = d.coefficients.unpack("dual coefficients")?;
            let sv = d.support_vectors.unpack("support vectors")?;
            let s = d.coefficients.cols;
            if d.coefficients.rows != classes
                || d.support_indices.len() != classes
                || d.support_vectors.rows != s
                || d.support_vectors.cols != f.input_dim
            {
                return Err(Error::invalid("kernel model shapes are inconsistent"));
            }
            let models = coef
                .chunks_exact(s.max(1))
                .zip(d.support_indices)
                .zip(f.diagnostics)
                .map(|((alphas, support_indices), diagnostics)| BinaryKernelModel {
                    alphas: alphas.to_vec(),
                    support_indices,
                    kernel: f.kernel,
                    diagnostics,
                })
                .collect();
            let sv = Array2::from_shape_vec((s, f.input_dim), sv).expect("shape checked");
            (BinaryModels::Kernel(models), Some(sv))
        }
        _ => return Err(Error::invalid("model payload does not match svm_mode")),
    };
    let model = SvmModel::from_parts(f.class_labels, binaries, f.config)?;
    if let Some(map) = &feature_map {
        if model.input_len() != map.target_dim() {
            return Err(Error::invalid("weight length does not match feature map dimension"));
        }
    }
    Ok(Predictor {
        kernel: f.kernel,
        mode: f.mode,
        normalizer: Normalizer { mean, std },
        feature_map,
        support_vectors,
        model,
    })
}

pub fn model_to_string(predictor: &Predictor) -> Result<String> {
    Ok(serde_json::to_string_pretty(&to_file(predictor)?)?)
}

pub fn model_from_str(text: &str) -> Result<Predictor> {
    let value: serde_json::Value = serde_json::from_str(text)?;
    let version = value
        .get("format_version")
        .and_then(|v| v.as_u64())
        .ok_or_else(|| Error::invalid("missing format_version"))?;
    if version != FORMAT_VERSION as u64 {
        return Err(Error::VersionMismatch {
            found: version as u32,
            supported: FORMAT_VERSION,
        });
    }
    from_file(serde_json::from_value(value)?)
}

pub fn save_model(predictor: &Predictor, path: &Path) -> Result<()> {
    let text = model_to_string(predictor)?;
    atomic_write(path, |w| {
        w.write_all(text.as_bytes())?;
        w.write_all(b"\n")?;
        Ok(())
    })
}

pub fn load_model(path: &Path) -> Result<Predictor> {
    let text = std::fs::read_to_string(path)?;
    model_from_str(&text).map_err(|e| match e {
        Error::VersionMismatch { .. } | Error::Io(_) => e,
        other => Error::Format {
            path: path.to_path_buf(),
            message: other.to_string(),
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn packed_matrix_detects_truncation() {
        let p = PackedMatrix::pack(1, 3, [1.0, 2.0, 3.0]);
        assert_eq!(p.unpack("x").unwrap(), vec![1.0, 2.0, 3.0]);
        let short = PackedMatrix {
            rows: 1,
            cols: 4,
            data: p.data.clone(),
        };
        assert!(short.unpack("x").is_err());
    }

    #[test]
    fn version_checked_first() {
        let err = model_from_str(r#"{"format_version": 7}"#).unwrap_err();
        assert!(matches!(err, Error::VersionMismatch { found: 7, supported: 1 }));
        assert!(model_from_str("{").is_err());
    }
}
