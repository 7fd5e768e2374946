//! Feature datasets: CSV ingestion, fold manifests, synthetic blobs and
//! DCASE-style meta conversion.
//!
//! Feature CSV rows are `segment_id,label,f1,...,fN`, optionally preceded by a
//! header. Floats are written in shortest round-trip form, so
//! `load_features(write_features(d)) == d` bit for bit.

use std::collections::{HashMap, HashSet};
use std::io::Write;
use std::path::{Path, PathBuf};

use ndarray::{Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::SeededStream;
use crate::svm::class_order;

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    features: Array2<f64>,
    labels: Vec<String>,
    segment_ids: Vec<String>,
    folds: Option<Vec<usize>>,
}

impl Dataset {
    pub fn new(features: Array2<f64>, labels: Vec<String>, segment_ids: Vec<String>) -> Result<Self> {
        let n = features.nrows();
        if labels.len() != n || segment_ids.len() != n {
            return Err(Error::invalid(format!(
                "dataset has {n} rows but {} labels and {} segment ids",
                labels.len(),
                segment_ids.len()
            )));
        }
        if n == 0 || features.ncols() == 0 {
            return Err(Error::invalid("dataset must have at least one row and one feature"));
        }
        if let Some(index) = features.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { index });
        }
        Ok(Dataset {
            features,
            labels,
            segment_ids,
            folds: None,
        })
    }

    /// Attaches a 1-based fold index per row; indices must be contiguous from 1.
    pub fn with_folds(mut self, folds: Vec<usize>) -> Result<Self> {
        if folds.len() != self.len() {
            return Err(Error::invalid(format!(
                "fold assignment has {} entries for {} rows",
                folds.len(),
                self.len()
            )));
        }
        check_contiguous(&folds)?;
        self.folds = Some(folds);
        Ok(self)
    }

    pub fn len(&self) -> usize {
        self.features.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dim(&self) -> usize {
        self.features.ncols()
    }

    pub fn features(&self) -> ArrayView2<'_, f64> {
        self.features.view()
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn segment_ids(&self) -> &[String] {
        &self.segment_ids
    }

    pub fn folds(&self) -> Option<&[usize]> {
        self.folds.as_deref()
    }

    pub fn fold_count(&self) -> usize {
        self.folds.as_ref().map_or(0, |f| f.iter().copied().max().unwrap_or(0))
    }

    /// Distinct labels in order of first appearance.
    pub fn class_labels(&self) -> Vec<String> {
        class_order(&self.labels)
    }

    /// Rows at `indices`, in that order, without fold assignment.
    pub fn select(&self, indices: &[usize]) -> (Array2<f64>, Vec<String>) {
        (
            self.features.select(Axis(0), indices),
            indices.iter().map(|&i| self.labels[i].clone()).collect(),
        )
    }
}

fn check_contiguous(folds: &[usize]) -> Result<()> {
    let distinct: HashSet<usize> = folds.iter().copied().collect();
    let k = distinct.len();
    if (1..=k).any(|f| !distinct.contains(&f)) {
        let mut got: Vec<usize> = distinct.into_iter().collect();
        got.sort_unstable();
        return Err(Error::invalid(format!(
            "fold indices must be contiguous from 1, got {got:?}"
        )));
    }
    Ok(())
}

fn parse_float(cell: &str) -> Option<f64> {
    cell.trim().parse::<f64>().ok().filter(|v| v.is_finite())
}

/// Reads a feature CSV. The header row is optional and detected by a
/// non-numeric cell past the label column.
pub fn load_features(path: &Path) -> Result<Dataset> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| csv_error(path, e))?;

    let mut dim: Option<usize> = None;
    let mut values: Vec<f64> = Vec::new();
    let mut labels = Vec::new();
    let mut ids = Vec::new();
    let mut first = true;

    for record in reader.records() {
        let record = record.map_err(|e| csv_error(path, e))?;
        let line = record.position().map_or(0, |p| p.line());
        if record.len() == 1 && record[0].is_empty() {
            continue;
        }
        if first {
            first = false;
            if record.len() > 2 && record.iter().skip(2).any(|c| parse_float(c).is_none()) {
                continue;
            }
        }
        if record.len() < 3 {
            return Err(parse_error(path, line, "expected segment_id,label and at least one feature"));
        }
        let n = record.len() - 2;
        match dim {
            None => dim = Some(n),
            Some(d) if d != n => {
                return Err(parse_error(path, line, format!("row has {n} features, expected {d}")));
            }
            _ => {}
        }
        for (col, cell) in record.iter().enumerate().skip(2) {
            let v = parse_float(cell).ok_or_else(|| {
                parse_error(path, line, format!("column {}: '{cell}' is not a finite number", col + 1))
            })?;
            values.push(v);
        }
        ids.push(record[0].to_string());
        labels.push(record[1].to_string());
    }

    let dim = dim.ok_or_else(|| Error::Format {
        path: path.to_path_buf(),
        message: "no data rows".into(),
    })?;
    let features = Array2::from_shape_vec((ids.len(), dim), values).expect("row widths checked");
    Dataset::new(features, labels, ids)
}

/// Writes `segment_id,label,f1..fN` with a header row.
pub fn write_features(dataset: &Dataset, path: &Path) -> Result<()> {
    atomic_write(path, |out| {
        let mut w = csv::WriterBuilder::new().from_writer(out);
        let mut header = vec!["segment_id".to_string(), "label".to_string()];
        header.extend((1..=dataset.dim()).map(|j| format!("f{j}")));
        w.write_record(&header).map_err(|e| csv_error(path, e))?;
        let mut record: Vec<String> = Vec::with_capacity(dataset.dim() + 2);
        for (i, row) in dataset.features.axis_iter(Axis(0)).enumerate() {
            record.clear();
            record.push(dataset.segment_ids[i].clone());
            record.push(dataset.labels[i].clone());
            record.extend(row.iter().map(|v| format_float(*v)));
            w.write_record(&record).map_err(|e| csv_error(path, e))?;
        }
        w.flush()?;
        Ok(())
    })
}

/// Shortest decimal text that parses back to the same `f64`.
pub fn format_float(v: f64) -> String {
    format!("{v:?}")
}

/// Reads `segment_id,fold_index` lines and returns the fold of every dataset row.
pub fn load_fold_manifest(path: &Path, dataset: &Dataset) -> Result<Vec<usize>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| csv_error(path, e))?;

    let index: HashMap<&str, usize> = dataset
        .segment_ids
        .iter()
        .enumerate()
        .map(|(i, s)| (s.as_str(), i))
        .collect();
    let mut folds: Vec<Option<usize>> = vec![None; dataset.len()];
    let mut first = true;

    for record in reader.records() {
        let record = record.map_err(|e| csv_error(path, e))?;
        let line = record.position().map_or(0, |p| p.line());
        if record.len() == 1 && record[0].is_empty() {
            continue;
        }
        if record.len() != 2 {
            return Err(parse_error(path, line, "expected segment_id,fold_index"));
        }
        let fold = record[1].parse::<usize>();
        if std::mem::take(&mut first) && fold.is_err() {
            continue;
        }
        let fold = match fold {
            Ok(f) if f >= 1 => f,
            _ => return Err(parse_error(path, line, format!("invalid fold index '{}'", &record[1]))),
        };
        let row = *index
            .get(&record[0])
            .ok_or_else(|| parse_error(path, line, format!("unknown segment_id '{}'", &record[0])))?;
        if folds[row].replace(fold).is_some() {
            return Err(parse_error(path, line, format!("duplicate segment_id '{}'", &record[0])));
        }
    }

    let mut out = Vec::with_capacity(folds.len());
    for (i, f) in folds.into_iter().enumerate() {
        out.push(f.ok_or_else(|| Error::Format {
            path: path.to_path_buf(),
            message: format!("segment '{}' has no fold assignment", dataset.segment_ids[i]),
        })?);
    }
    check_contiguous(&out).map_err(|e| Error::Format {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    check_training_classes(dataset.labels(), &out)?;
    Ok(out)
}

/// Every fold's training complement must contain at least two classes.
pub fn check_training_classes(labels: &[String], folds: &[usize]) -> Result<()> {
    let k = folds.iter().copied().max().unwrap_or(0);
    for fold in 1..=k {
        let classes: HashSet<&str> = labels
            .iter()
            .zip(folds)
            .filter(|(_, &f)| f != fold)
            .map(|(l, _)| l.as_str())
            .collect();
        if classes.len() < 2 {
            return Err(Error::Fold {
                fold,
                message: format!("training split has {} class(es), need at least 2", classes.len()),
            });
        }
    }
    Ok(())
}

pub fn write_fold_manifest(dataset: &Dataset, path: &Path) -> Result<()> {
    let folds = dataset
        .folds()
        .ok_or_else(|| Error::invalid("dataset has no fold assignment"))?;
    atomic_write(path, |out| {
        let mut w = csv::WriterBuilder::new().from_writer(out);
        for (id, f) in dataset.segment_ids.iter().zip(folds) {
            w.write_record([id.as_str(), &f.to_string()]).map_err(|e| csv_error(path, e))?;
        }
        w.flush()?;
        Ok(())
    })
}

/// Parameters of [`make_synthetic`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub class_count: usize,
    pub per_class: usize,
    pub dim: usize,
    pub separation: f64,
    pub seed: u64,
    pub folds: usize,
}

impl SyntheticSpec {
    pub fn new(class_count: usize, per_class: usize, dim: usize, separation: f64, seed: u64) -> Self {
        SyntheticSpec {
            class_count,
            per_class,
            dim,
            separation,
            seed,
            folds: 4,
        }
    }
}

/// Class centers pairwise at least `separation` apart: a scaled simplex
/// (`e_k * sep / sqrt 2`) when classes fit in the dimension, a cubic lattice
/// with spacing `sep` otherwise.
fn class_centers(spec: &SyntheticSpec) -> Vec<Vec<f64>> {
    let (k, d, sep) = (spec.class_count, spec.dim, spec.separation);
    if k <= d {
        let a = sep / std::f64::consts::SQRT_2;
        (0..k)
            .map(|c| {
                let mut v = vec![0.0; d];
                v[c] = a;
                v
            })
            .collect()
    } else {
        let mut side = 2usize;
        while side.checked_pow(d as u32).is_some_and(|cells| cells < k) {
            side += 1;
        }
        (0..k)
            .map(|c| {
                let mut v = vec![0.0; d];
                let mut rest = c;
                for x in v.iter_mut() {
                    *x = (rest % side) as f64 * sep;
                    rest /= side;
                }
                v
            })
            .collect()
    }
}

/// Isotropic unit-variance Gaussian blobs, grouped by class, folds assigned
/// round-robin over rows.
pub fn make_synthetic(spec: &SyntheticSpec) -> Result<Dataset> {
    if spec.class_count == 0 || spec.per_class == 0 || spec.dim == 0 || spec.folds == 0 {
        return Err(Error::invalid("synthetic class count, size, dimension and folds must be positive"));
    }
    if !(spec.separation.is_finite() && spec.separation >= 0.0) {
        return Err(Error::invalid("separation must be finite and >= 0"));
    }
    let centers = class_centers(spec);
    let n = spec.class_count * spec.per_class;
    let mut stream = SeededStream::new(spec.seed);
    let mut values = Vec::with_capacity(n * spec.dim);
    let mut labels = Vec::with_capacity(n);
    let mut ids = Vec::with_capacity(n);
    let width = (spec.class_count.max(2) - 1).to_string().len();
    for (c, center) in centers.iter().enumerate() {
        for _ in 0..spec.per_class {
            values.extend(center.iter().map(|m| m + stream.next_standard_normal()));
            labels.push(format!("class{c:0width$}"));
            ids.push(format!("seg{:06}", ids.len()));
        }
    }
    let folds = (0..n).map(|i| i % spec.folds + 1).collect();
    let features = Array2::from_shape_vec((n, spec.dim), values).expect("sized above");
    Dataset::new(features, labels, ids)?.with_folds(folds)
}

/// One line of a DCASE-style meta file: `path<TAB>label[<TAB>...]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MetaEntry {
    pub segment_id: String,
    pub label: String,
}

/// Parses tab-separated meta text; the segment id is the file stem of the path.
pub fn parse_meta(text: &str, path: &Path) -> Result<Vec<MetaEntry>> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim_end_matches('\r');
        if line.trim().is_empty() {
            continue;
        }
        let mut cols = line.split('\t');
        let (audio, label) = match (cols.next(), cols.next()) {
            (Some(a), Some(l)) if !a.trim().is_empty() && !l.trim().is_empty() => (a.trim(), l.trim()),
            _ => return Err(parse_error(path, i as u64 + 1, "expected path<TAB>label")),
        };
        let stem = Path::new(audio)
            .file_stem()
            .and_then(|s| s.to_str())
            .unwrap_or(audio)
            .to_string();
        out.push(MetaEntry {
            segment_id: stem,
            label: label.to_string(),
        });
    }
    Ok(out)
}

/// Writes the `segment_id,label` skeleton a feature extractor appends columns to.
pub fn write_meta_skeleton(entries: &[MetaEntry], path: &Path) -> Result<()> {
    atomic_write(path, |out| {
        let mut w = csv::WriterBuilder::new().from_writer(out);
        for e in entries {
            w.write_record([e.segment_id.as_str(), e.label.as_str()])
                .map_err(|err| csv_error(path, err))?;
        }
        w.flush()?;
        Ok(())
    })
}

/// Writes `segment_id,fold` lines for the given entries.
pub fn write_meta_manifest(entries: &[MetaEntry], fold: usize, path: &Path) -> Result<()> {
    atomic_write(path, |out| {
        let mut w = csv::WriterBuilder::new().from_writer(out);
        for e in entries {
            w.write_record([e.segment_id.as_str(), &fold.to_string()])
                .map_err(|err| csv_error(path, err))?;
        }
        w.flush()?;
        Ok(())
    })
}

/// Writes through a temporary file in the destination directory and renames
/// it into place, so a failed write leaves no partial file.
pub fn atomic_write<F>(path: &Path, write: F) -> Result<()>
where
    F: FnOnce(&mut dyn Write) -> Result<()>,
{
    let dir = path
        .parent()
        .filter(|p| !p.as_os_str().is_empty())
        .unwrap_or(Path::new("."));
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    {
        let mut buf = std::io::BufWriter::new(tmp.as_file_mut());
        write(&mut buf)?;
        buf.flush()?;
    }
    tmp.persist(path).map_err(|e| e.error)?;
    Ok(())
}

fn parse_error(path: &Path, line: u64, message: impl Into<String>) -> Error {
    Error::Parse {
        path: PathBuf::from(path),
        line,
        message: message.into(),
    }
}

fn csv_error(path: &Path, err: csv::Error) -> Error {
    let line = err.position().map_or(0, |p| p.line());
    match err.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => parse_error(path, line, format!("{other:?}")),
    }
}
