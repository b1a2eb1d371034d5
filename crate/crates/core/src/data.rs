//! Dataset ingestion, label handling, splitting, and feature scaling.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use faer::Mat;
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::{seeded_rng, SPLIT_STREAM};

/// Feature matrix (`L×N`) with integer class labels.
///
/// `labels` hold the original label values from the source file;
/// `class_labels` is their sorted distinct set.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    name: String,
    features: Mat<f64>,
    labels: Vec<i64>,
    class_labels: Vec<i64>,
}

impl Dataset {
    pub fn new(name: impl Into<String>, features: Mat<f64>, labels: Vec<i64>) -> Result<Self> {
        if features.nrows() == 0 {
            return Err(Error::invalid("dataset has no samples"));
        }
        if labels.len() != features.nrows() {
            return Err(Error::Shape {
                what: "labels",
                expected: features.nrows(),
                actual: labels.len(),
            });
        }
        for j in 0..features.ncols() {
            for i in 0..features.nrows() {
                if !features[(i, j)].is_finite() {
                    return Err(Error::data(
                        None,
                        format!("non-finite feature at sample {i}, column {j}"),
                    ));
                }
            }
        }
        let class_labels = LabelCodec::fit(&labels).classes;
        Ok(Dataset {
            name: name.into(),
            features,
            labels,
            class_labels,
        })
    }

    /// Builds a dataset from row-major feature rows.
    pub fn from_rows(name: impl Into<String>, rows: &[Vec<f64>], labels: Vec<i64>) -> Result<Self> {
        let n = rows.first().map_or(0, Vec::len);
        if let Some(bad) = rows.iter().position(|r| r.len() != n) {
            return Err(Error::Shape {
                what: "feature row",
                expected: n,
                actual: rows[bad].len(),
            });
        }
        let features = Mat::from_fn(rows.len(), n, |i, j| rows[i][j]);
        Dataset::new(name, features, labels)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn features(&self) -> &Mat<f64> {
        &self.features
    }

    pub fn labels(&self) -> &[i64] {
        &self.labels
    }

    pub fn class_labels(&self) -> &[i64] {
        &self.class_labels
    }

    /// `L`
    pub fn n_samples(&self) -> usize {
        self.features.nrows()
    }

    /// `N`
    pub fn n_features(&self) -> usize {
        self.features.ncols()
    }

    /// `Q`
    pub fn n_classes(&self) -> usize {
        self.class_labels.len()
    }

    pub fn row(&self, i: usize) -> Vec<f64> {
        (0..self.n_features()).map(|j| self.features[(i, j)]).collect()
    }

    /// Subset of samples in the given order.
    pub fn select(&self, indices: &[usize]) -> Result<Dataset> {
        let features = Mat::from_fn(indices.len(), self.n_features(), |i, j| {
            self.features[(indices[i], j)]
        });
        let labels = indices.iter().map(|&i| self.labels[i]).collect();
        Dataset::new(self.name.clone(), features, labels)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LabelColumn {
    First,
    Last,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Delimiter {
    Comma,
    /// Any run of spaces or tabs.
    Space,
    Tab,
}

impl FromStr for LabelColumn {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "first" => Ok(LabelColumn::First),
            "last" => Ok(LabelColumn::Last),
            other => Err(Error::invalid(format!("unknown label column `{other}`"))),
        }
    }
}

impl FromStr for Delimiter {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "comma" => Ok(Delimiter::Comma),
            "space" => Ok(Delimiter::Space),
            "tab" => Ok(Delimiter::Tab),
            other => Err(Error::invalid(format!("unknown delimiter `{other}`"))),
        }
    }
}

impl Delimiter {
    fn fields<'a>(&self, line: &'a str) -> Vec<&'a str> {
        match self {
            Delimiter::Comma => line.split(',').map(str::trim).collect(),
            Delimiter::Space => line.split_whitespace().collect(),
            Delimiter::Tab => line.split('\t').map(str::trim).collect(),
        }
    }
}

/// Integer labels pass through; a single letter maps `A..Z` (any case) to `0..25`.
fn parse_label(field: &str) -> Option<i64> {
    if let Ok(v) = field.parse::<i64>() {
        return Some(v);
    }
    let mut chars = field.chars();
    match (chars.next(), chars.next()) {
        (Some(c), None) if c.is_ascii_alphabetic() => {
            Some((c.to_ascii_uppercase() as u8 - b'A') as i64)
        }
        _ => None,
    }
}

pub fn load_delimited(
    path: impl AsRef<Path>,
    label_column: LabelColumn,
    delimiter: Delimiter,
) -> Result<Dataset> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    parse_delimited(&name, &text, label_column, delimiter)
}

/// Parses delimited text. Blank lines are skipped; every other line must
/// carry the same number of fields.
pub fn parse_delimited(
    name: &str,
    text: &str,
    label_column: LabelColumn,
    delimiter: Delimiter,
) -> Result<Dataset> {
    let mut values = Vec::new();
    let mut labels = Vec::new();
    let mut width: Option<usize> = None;

    for (idx, line) in text.lines().enumerate() {
        let line_no = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let fields = delimiter.fields(line);
        if fields.len() < 2 {
            return Err(Error::data(
                Some(line_no),
                "need at least one feature and a label",
            ));
        }
        match width {
            None => width = Some(fields.len()),
            Some(w) if w != fields.len() => {
                return Err(Error::data(
                    Some(line_no),
                    format!("expected {w} fields, found {}", fields.len()),
                ))
            }
            _ => {}
        }
        let (label_field, feature_fields) = match label_column {
            LabelColumn::First => (fields[0], &fields[1..]),
            LabelColumn::Last => (fields[fields.len() - 1], &fields[..fields.len() - 1]),
        };
        let label = parse_label(label_field).ok_or_else(|| {
            Error::data(Some(line_no), format!("unparsable label `{label_field}`"))
        })?;
        for field in feature_fields {
            let v: f64 = field.parse().map_err(|_| {
                Error::data(Some(line_no), format!("unparsable feature `{field}`"))
            })?;
            if !v.is_finite() {
                return Err(Error::data(Some(line_no), format!("non-finite feature `{field}`")));
            }
            values.push(v);
        }
        labels.push(label);
    }

    let Some(width) = width else {
        return Err(Error::data(None, "file contains no samples"));
    };
    let n = width - 1;
    let features = Mat::from_fn(labels.len(), n, |i, j| values[i * n + j]);
    Dataset::new(name, features, labels)
}

/// Seeded random partition into `(train, test)` of sizes
/// `round(L·train_fraction)` and the remainder.
pub fn split(dataset: &Dataset, train_fraction: f64, seed: u64) -> Result<(Dataset, Dataset)> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::invalid(format!(
            "train fraction must lie in (0, 1), got {train_fraction}"
        )));
    }
    let l = dataset.n_samples();
    let n_train = (l as f64 * train_fraction).round() as usize;
    if n_train == 0 || n_train >= l {
        return Err(Error::invalid(format!(
            "split of {l} samples at fraction {train_fraction} leaves an empty part"
        )));
    }
    let mut order: Vec<usize> = (0..l).collect();
    order.shuffle(&mut seeded_rng(seed, SPLIT_STREAM));
    let (train_idx, test_idx) = order.split_at(n_train);
    Ok((dataset.select(train_idx)?, dataset.select(test_idx)?))
}

/// Bijection between original label values and contiguous class indices,
/// ordered by label value.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelCodec {
    classes: Vec<i64>,
}

impl LabelCodec {
    pub fn fit(labels: &[i64]) -> Self {
        let mut classes = labels.to_vec();
        classes.sort_unstable();
        classes.dedup();
        LabelCodec { classes }
    }

    pub fn from_classes(classes: Vec<i64>) -> Self {
        LabelCodec::fit(&classes)
    }

    pub fn classes(&self) -> &[i64] {
        &self.classes
    }

    pub fn len(&self) -> usize {
        self.classes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.classes.is_empty()
    }

    pub fn encode(&self, label: i64) -> Option<usize> {
        self.classes.binary_search(&label).ok()
    }

    pub fn decode(&self, index: usize) -> Option<i64> {
        self.classes.get(index).copied()
    }
}

/// Remaps labels to `0..Q` by sorted order of the original values.
pub fn canonicalize_labels(dataset: &Dataset) -> (Vec<usize>, LabelCodec) {
    let codec = LabelCodec::fit(dataset.labels());
    let indices = dataset
        .labels()
        .iter()
        .map(|&l| codec.encode(l).expect("codec fitted on these labels"))
        .collect();
    (indices, codec)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Normalization {
    /// Per-feature zero mean, unit variance; constant features map to 0.
    ZScore,
    /// All features divided by the largest absolute training value.
    MaxAbs,
    None,
}

impl fmt::Display for Normalization {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Normalization::ZScore => "zscore",
            Normalization::MaxAbs => "maxabs",
            Normalization::None => "none",
        })
    }
}

impl FromStr for Normalization {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "zscore" => Ok(Normalization::ZScore),
            "maxabs" => Ok(Normalization::MaxAbs),
            "none" => Ok(Normalization::None),
            other => Err(Error::invalid(format!("unknown normalization `{other}`"))),
        }
    }
}

/// Affine per-feature map `x' = (x − shift) · scale`.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureScaler {
    pub kind: Normalization,
    pub shift: Vec<f64>,
    pub scale: Vec<f64>,
}

impl FeatureScaler {
    pub fn fit(kind: Normalization, features: &Mat<f64>) -> Self {
        let (l, n) = features.shape();
        let mut shift = vec![0.0; n];
        let mut scale = vec![1.0; n];
        match kind {
            Normalization::None => {}
            Normalization::ZScore => {
                for j in 0..n {
                    let col = features.col(j);
                    let mean = col.iter().sum::<f64>() / l as f64;
                    let var = col.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / l as f64;
                    shift[j] = mean;
                    scale[j] = if var > 0.0 { 1.0 / var.sqrt() } else { 0.0 };
                }
            }
            Normalization::MaxAbs => {
                let max = (0..n)
                    .flat_map(|j| features.col(j).iter().map(|v| v.abs()).collect::<Vec<_>>())
                    .fold(0.0_f64, f64::max);
                let factor = if max > 0.0 { 1.0 / max } else { 0.0 };
                scale.iter_mut().for_each(|s| *s = factor);
            }
        }
        FeatureScaler { kind, shift, scale }
    }

    pub fn n_features(&self) -> usize {
        self.shift.len()
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(self.shift.iter().zip(&self.scale))
            .map(|(v, (s, k))| (v - s) * k)
            .collect()
    }

    pub fn apply_matrix(&self, features: &Mat<f64>) -> Mat<f64> {
        Mat::from_fn(features.nrows(), features.ncols(), |i, j| {
            (features[(i, j)] - self.shift[j]) * self.scale[j]
        })
    }
}
