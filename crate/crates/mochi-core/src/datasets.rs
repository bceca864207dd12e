//! Deterministic toy data: Gaussian class clusters around unit-vector
//! centers, plus CSV ingestion and stratified splitting. The CSV schema
//! (`label,c0,c1,...`) is shared with the analysis module's embedding dumps.

use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::queue::ClassLabel;
use crate::rng::RngKey;
use crate::vecspace::RawVector;

/// Key-tree domain tag for dataset generation, so its streams never collide
/// with the trainer's.
const DOMAIN_DATASET: u64 = 0xDA7A;

/// Generator parameters for [`make_sphere_clusters`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SphereClusterSpec {
    pub classes: usize,
    pub per_class: usize,
    pub input_dim: usize,
    /// Centers are re-drawn until all pairwise dot products fall below
    /// `1 - separation`.
    pub separation: f64,
    /// Standard deviation of the per-coordinate Gaussian around each center.
    pub spread: f64,
    pub seed: u64,
}

/// Labeled raw-space samples, with the generator spec attached when the set
/// was synthesized rather than loaded.
#[derive(Debug, Clone)]
pub struct ToyDataset {
    pub inputs: Vec<RawVector>,
    pub labels: Vec<ClassLabel>,
    pub generator: Option<SphereClusterSpec>,
}

impl ToyDataset {
    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.inputs.first().map_or(0, |v| v.dim())
    }

    /// Write as `label,c0,...,c{d-1}` rows. Floats are printed in shortest
    /// round-trip form, so loading reproduces the values exactly.
    pub fn save_csv(&self, path: &Path) -> Result<()> {
        write_labeled_csv(path, &self.labels, self.inputs.iter().map(|v| v.coords()))
    }
}

/// Shared writer for the `label,c0..c{d-1}` schema.
pub fn write_labeled_csv<'a, I>(path: &Path, labels: &[ClassLabel], rows: I) -> Result<()>
where
    I: IntoIterator<Item = &'a [f64]>,
{
    let mut rows_iter = rows.into_iter().peekable();
    let d = rows_iter.peek().map_or(0, |r| r.len());
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    let header: Vec<String> = std::iter::once("label".to_string())
        .chain((0..d).map(|i| format!("c{i}")))
        .collect();
    writeln!(out, "{}", header.join(","))?;
    for (label, row) in labels.iter().zip(rows_iter) {
        let mut line = label.to_string();
        for v in row {
            line.push(',');
            line.push_str(&v.to_string());
        }
        writeln!(out, "{line}")?;
    }
    out.flush()?;
    Ok(())
}

/// Sample `classes` unit-vector centers with rejection until all pairwise
/// dot products sit below `1 - separation`, then scatter `per_class`
/// Gaussian samples around each. Deterministic per seed; classes are
/// generated from per-class derived keys.
pub fn make_sphere_clusters(spec: &SphereClusterSpec) -> Result<ToyDataset> {
    const REJECTION_BUDGET: usize = 100_000;
    if spec.classes < 2 {
        return Err(Error::ConfigInvalid(format!(
            "need at least 2 classes, got {}",
            spec.classes
        )));
    }
    if spec.input_dim < 2 {
        return Err(Error::BadDimension(spec.input_dim));
    }
    if spec.separation <= 0.0 || spec.separation.is_nan() {
        return Err(Error::ConfigInvalid(format!(
            "separation must be positive, got {}",
            spec.separation
        )));
    }
    if spec.input_dim < spec.classes {
        log::warn!(
            "input_dim {} below class count {}; centers may be hard to separate",
            spec.input_dim,
            spec.classes
        );
    }

    let root = RngKey::from_seed(spec.seed).child(DOMAIN_DATASET);
    let mut centers: Vec<Vec<f64>> = Vec::with_capacity(spec.classes);
    let mut center_rng = root.child(0).stream();
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    let threshold = 1.0 - spec.separation;
    let mut attempts = 0usize;
    while centers.len() < spec.classes {
        if attempts >= REJECTION_BUDGET {
            return Err(Error::RejectionBudgetExceeded {
                budget: REJECTION_BUDGET,
            });
        }
        attempts += 1;
        let raw: Vec<f64> = (0..spec.input_dim)
            .map(|_| normal.sample(&mut center_rng))
            .collect();
        let norm: f64 = raw.iter().map(|c| c * c).sum::<f64>().sqrt();
        if norm <= 1e-12 {
            continue;
        }
        let candidate: Vec<f64> = raw.iter().map(|c| c / norm).collect();
        let ok = centers.iter().all(|c| {
            let d: f64 = c.iter().zip(&candidate).map(|(a, b)| a * b).sum();
            d < threshold
        });
        if ok {
            centers.push(candidate);
        }
    }

    let mut inputs = Vec::with_capacity(spec.classes * spec.per_class);
    let mut labels = Vec::with_capacity(spec.classes * spec.per_class);
    for (c, center) in centers.iter().enumerate() {
        let mut rng = root.child(1).child(c as u64).stream();
        for _ in 0..spec.per_class {
            let coords: Vec<f64> = center
                .iter()
                .map(|&m| m + spec.spread * normal.sample(&mut rng))
                .collect();
            inputs.push(RawVector::new(coords)?);
            labels.push(c as ClassLabel);
        }
    }
    Ok(ToyDataset {
        inputs,
        labels,
        generator: Some(spec.clone()),
    })
}

/// Load a `label,c0..c{d-1}` CSV. The dimension is inferred from the header;
/// labels parse as integers.
pub fn load_csv(path: &Path) -> Result<ToyDataset> {
    let file = std::fs::File::open(path)?;
    let mut lines = BufReader::new(file).lines().enumerate();

    let (_, header) = lines.next().ok_or(Error::ParseError {
        line: 1,
        message: "empty file".into(),
    })?;
    let header = header?;
    let cols: Vec<&str> = header.trim_end().split(',').collect();
    if cols.first() != Some(&"label") {
        return Err(Error::ParseError {
            line: 1,
            message: format!("header must start with 'label', got '{header}'"),
        });
    }
    let d = cols.len() - 1;
    if d < 2 {
        return Err(Error::BadDimension(d));
    }
    for (i, col) in cols[1..].iter().enumerate() {
        if *col != format!("c{i}") {
            return Err(Error::ParseError {
                line: 1,
                message: format!("expected column c{i}, got '{col}'"),
            });
        }
    }

    let mut inputs = Vec::new();
    let mut labels = Vec::new();
    for (idx, line) in lines {
        let line_no = idx + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.trim_end().split(',').collect();
        if fields.len() != d + 1 {
            return Err(Error::InconsistentWidth {
                line: line_no,
                expected: d + 1,
                got: fields.len(),
            });
        }
        let label: ClassLabel = fields[0].parse().map_err(|e| Error::ParseError {
            line: line_no,
            message: format!("bad label '{}': {e}", fields[0]),
        })?;
        let coords = fields[1..]
            .iter()
            .map(|f| {
                f.parse::<f64>().map_err(|e| Error::ParseError {
                    line: line_no,
                    message: format!("bad value '{f}': {e}"),
                })
            })
            .collect::<Result<Vec<f64>>>()?;
        inputs.push(RawVector::new(coords)?);
        labels.push(label);
    }
    Ok(ToyDataset {
        inputs,
        labels,
        generator: None,
    })
}

/// Stratified split: every class is shuffled with a seeded permutation and
/// cut as close to `train_fraction` as rounding allows, keeping at least one
/// sample on each side.
pub fn split(dataset: &ToyDataset, train_fraction: f64, seed: u64) -> Result<(ToyDataset, ToyDataset)> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::ConfigInvalid(format!(
            "train_fraction must lie in (0, 1), got {train_fraction}"
        )));
    }
    let mut by_class: Vec<(ClassLabel, Vec<usize>)> = Vec::new();
    for (i, &label) in dataset.labels.iter().enumerate() {
        match by_class.iter_mut().find(|(l, _)| *l == label) {
            Some((_, v)) => v.push(i),
            None => by_class.push((label, vec![i])),
        }
    }
    by_class.sort_by_key(|(l, _)| *l);
    for (label, members) in &by_class {
        if members.len() < 2 {
            return Err(Error::ClassTooSmall {
                label: *label,
                count: members.len(),
            });
        }
    }

    let root = RngKey::from_seed(seed).child(DOMAIN_DATASET).child(2);
    let mut train_idx = Vec::new();
    let mut test_idx = Vec::new();
    for (label, members) in &by_class {
        let mut members = members.clone();
        let mut rng = root.child(*label as u64).stream();
        // Fisher-Yates
        for i in (1..members.len()).rev() {
            let j = rng.random_range(0..=i);
            members.swap(i, j);
        }
        let exact = train_fraction * members.len() as f64;
        let count = (exact.round() as usize).clamp(1, members.len() - 1);
        train_idx.extend_from_slice(&members[..count]);
        test_idx.extend_from_slice(&members[count..]);
    }

    let take = |idx: &[usize]| ToyDataset {
        inputs: idx.iter().map(|&i| dataset.inputs[i].clone()).collect(),
        labels: idx.iter().map(|&i| dataset.labels[i]).collect(),
        generator: dataset.generator.clone(),
    };
    Ok((take(&train_idx), take(&test_idx)))
}
