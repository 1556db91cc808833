//! Datasets: CSV ingestion with normalization, and seeded synthetic generators.

use std::collections::HashMap;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::models::{Example, Label};
use crate::scalar::Scalar;

/// Fraction of synthetic examples that go to the training split.
pub const TRAIN_FRACTION: f64 = 0.8;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "type")]
pub enum Task {
    Regression,
    Classification { n_classes: usize },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "source")]
pub enum Provenance {
    File { path: PathBuf },
    Synthetic { spec: SyntheticSpec, split: String },
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Normalization {
    #[default]
    None,
    /// Per-feature zero mean, unit variance.
    Standardize,
    /// Per-feature scaling to [0, 1].
    MinMax,
}

/// Per-feature affine map `x ← (x − shift) / scale`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormalizationStats {
    pub kind: Normalization,
    pub shift: Vec<f64>,
    pub scale: Vec<f64>,
}

impl NormalizationStats {
    /// Fit on raw feature rows. Constant features get scale 1.
    pub fn fit(kind: Normalization, rows: &[Vec<f64>]) -> Result<Self> {
        let d = rows.first().map_or(0, Vec::len);
        let n = rows.len() as f64;
        let mut shift = vec![0.0; d];
        let mut scale = vec![1.0; d];
        match kind {
            Normalization::None => {}
            Normalization::Standardize => {
                if rows.is_empty() {
                    return Err(invalid("rows", "cannot standardize an empty dataset"));
                }
                for j in 0..d {
                    let mean = rows.iter().map(|r| r[j]).sum::<f64>() / n;
                    let var = rows.iter().map(|r| (r[j] - mean).powi(2)).sum::<f64>() / n;
                    shift[j] = mean;
                    scale[j] = if var > 0.0 { var.sqrt() } else { 1.0 };
                }
            }
            Normalization::MinMax => {
                if rows.is_empty() {
                    return Err(invalid("rows", "cannot rescale an empty dataset"));
                }
                for j in 0..d {
                    let lo = rows.iter().map(|r| r[j]).fold(f64::INFINITY, f64::min);
                    let hi = rows.iter().map(|r| r[j]).fold(f64::NEG_INFINITY, f64::max);
                    shift[j] = lo;
                    scale[j] = if hi > lo { hi - lo } else { 1.0 };
                }
            }
        }
        Ok(Self { kind, shift, scale })
    }

    pub fn apply(&self, row: &mut [f64]) {
        for ((x, s), c) in row.iter_mut().zip(&self.shift).zip(&self.scale) {
            *x = (*x - s) / c;
        }
    }
}

/// Which CSV columns hold what.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CsvSchema {
    pub label_column: String,
    /// Feature columns in order; empty means every column except the label.
    pub feature_columns: Vec<String>,
    /// Class count for classification; `None` reads the label as a real target.
    pub n_classes: Option<usize>,
}

impl Default for CsvSchema {
    fn default() -> Self {
        Self {
            label_column: "label".into(),
            feature_columns: Vec::new(),
            n_classes: None,
        }
    }
}

/// A labelled example set with its metadata.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Dataset<T> {
    pub name: String,
    pub examples: Vec<Example<T>>,
    pub task: Task,
    pub input_dim: usize,
    pub provenance: Provenance,
    pub normalization: Option<NormalizationStats>,
}

impl<T: Scalar> Dataset<T> {
    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    pub fn n_classes(&self) -> Option<usize> {
        match self.task {
            Task::Classification { n_classes } => Some(n_classes),
            Task::Regression => None,
        }
    }

    /// Dimensions agree and labels fit the task.
    pub fn validate(&self) -> Result<()> {
        for (i, ex) in self.examples.iter().enumerate() {
            if ex.features.len() != self.input_dim {
                return Err(Error::Shape(format!(
                    "example {i} has {} features, dataset has {}",
                    ex.features.len(),
                    self.input_dim
                )));
            }
            match (ex.label, self.task) {
                (Label::Class(c), Task::Classification { n_classes }) if c < n_classes => {}
                (Label::Value(_), Task::Regression) => {}
                _ => return Err(Error::Shape(format!("example {i} has a label that does not fit the task"))),
            }
        }
        Ok(())
    }
}

/// Read a CSV with a header row, fitting `normalization` on this file.
///
/// Row numbers in errors count data records from 1 (the header is row 0).
pub fn load_csv<T: Scalar>(path: &Path, schema: &CsvSchema, normalization: Normalization) -> Result<Dataset<T>> {
    let (rows, labels) = read_rows(path, schema)?;
    let stats = NormalizationStats::fit(normalization, &rows)?;
    build_from_rows(path, schema, rows, labels, Some(stats))
}

/// Read a CSV and apply constants fitted elsewhere (the training split).
pub fn load_csv_with_stats<T: Scalar>(
    path: &Path,
    schema: &CsvSchema,
    stats: Option<&NormalizationStats>,
) -> Result<Dataset<T>> {
    let (rows, labels) = read_rows(path, schema)?;
    if let Some(s) = stats {
        if let Some(r) = rows.first() {
            if r.len() != s.shift.len() {
                return Err(Error::Shape(format!(
                    "{} has {} features, normalization expects {}",
                    path.display(),
                    r.len(),
                    s.shift.len()
                )));
            }
        }
    }
    build_from_rows(path, schema, rows, labels, stats.cloned())
}

fn read_rows(path: &Path, schema: &CsvSchema) -> Result<(Vec<Vec<f64>>, Vec<f64>)> {
    let data_err = |row: u64, reason: String| Error::Data {
        path: path.to_path_buf(),
        row,
        reason,
    };
    let mut reader = csv::ReaderBuilder::new().has_headers(true).flexible(true).from_path(path)?;
    let header = reader.headers()?.clone();
    let index: HashMap<&str, usize> = header.iter().enumerate().map(|(i, h)| (h.trim(), i)).collect();
    let label_idx = *index
        .get(schema.label_column.as_str())
        .ok_or_else(|| data_err(0, format!("no label column `{}`", schema.label_column)))?;
    let feature_idx: Vec<usize> = if schema.feature_columns.is_empty() {
        (0..header.len()).filter(|&i| i != label_idx).collect()
    } else {
        schema
            .feature_columns
            .iter()
            .map(|c| index.get(c.as_str()).copied().ok_or_else(|| data_err(0, format!("no feature column `{c}`"))))
            .collect::<Result<_>>()?
    };
    if feature_idx.is_empty() {
        return Err(data_err(0, "no feature columns".into()));
    }

    let mut rows = Vec::new();
    let mut labels = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let row = i as u64 + 1;
        let record = record?;
        if record.len() != header.len() {
            return Err(data_err(row, format!("expected {} fields, found {}", header.len(), record.len())));
        }
        let cell = |j: usize| -> Result<f64> {
            let raw = record[j].trim();
            match raw.parse::<f64>() {
                Ok(v) if v.is_finite() => Ok(v),
                _ => Err(data_err(row, format!("column `{}`: `{raw}` is not a finite number", &header[j]))),
            }
        };
        rows.push(feature_idx.iter().map(|&j| cell(j)).collect::<Result<Vec<_>>>()?);
        let label = cell(label_idx)?;
        if let Some(k) = schema.n_classes {
            if label.fract() != 0.0 || label < 0.0 || label >= k as f64 {
                return Err(data_err(row, format!("unknown label {label}; expected a class in 0..{k}")));
            }
        }
        labels.push(label);
    }
    if rows.is_empty() {
        return Err(data_err(0, "no data rows".into()));
    }
    Ok((rows, labels))
}

fn build_from_rows<T: Scalar>(
    path: &Path,
    schema: &CsvSchema,
    mut rows: Vec<Vec<f64>>,
    labels: Vec<f64>,
    stats: Option<NormalizationStats>,
) -> Result<Dataset<T>> {
    if let Some(s) = &stats {
        rows.iter_mut().for_each(|r| s.apply(r));
    }
    let input_dim = rows[0].len();
    let examples = rows
        .into_iter()
        .zip(labels)
        .map(|(r, y)| {
            let x = r.into_iter().map(T::from_f64_lossy).collect();
            match schema.n_classes {
                Some(_) => Example::classified(x, y as usize),
                None => Example::regression(x, T::from_f64_lossy(y)),
            }
        })
        .collect();
    let dataset = Dataset {
        name: path.file_stem().map_or_else(|| "csv".into(), |s| s.to_string_lossy().into_owned()),
        examples,
        task: schema
            .n_classes
            .map_or(Task::Regression, |n_classes| Task::Classification { n_classes }),
        input_dim,
        provenance: Provenance::File { path: path.to_path_buf() },
        normalization: stats,
    };
    dataset.validate()?;
    Ok(dataset)
}

/// Write a dataset in the layout `load_csv` reads with the default schema.
pub fn write_csv<T: Scalar>(dataset: &Dataset<T>, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let mut header: Vec<String> = (0..dataset.input_dim).map(|j| format!("x{j}")).collect();
    header.push("label".into());
    w.write_record(&header)?;
    for ex in &dataset.examples {
        let mut rec: Vec<String> = ex.features.iter().map(|v| v.to_f64_lossy().to_string()).collect();
        rec.push(match ex.label {
            Label::Class(c) => c.to_string(),
            Label::Value(y) => y.to_f64_lossy().to_string(),
        });
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SyntheticKind {
    LinearRegression,
    #[default]
    GaussianBlobs,
}

/// Generator settings.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticSpec {
    pub kind: SyntheticKind,
    /// Total examples before the 80/20 split.
    pub n: usize,
    pub d: usize,
    /// Classes (blobs only).
    pub k: usize,
    /// Target noise std (regression) or cluster std (blobs).
    pub noise: f64,
    /// Distance between blob centres in units of `noise` (blobs only).
    pub separation: f64,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            kind: SyntheticKind::GaussianBlobs,
            n: 12_500,
            d: 20,
            k: 5,
            noise: 1.0,
            separation: 3.0,
            seed: 0,
        }
    }
}

impl SyntheticSpec {
    pub fn problems(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.n < 2 {
            out.push(format!("n = {} must be >= 2 so both splits are non-empty", self.n));
        }
        if self.d < 1 {
            out.push("d must be >= 1".into());
        }
        if self.kind == SyntheticKind::GaussianBlobs && self.k < 2 {
            out.push(format!("k = {} must be >= 2 for blobs", self.k));
        }
        if !(self.noise >= 0.0 && self.noise.is_finite()) {
            out.push(format!("noise = {} must be finite and >= 0", self.noise));
        }
        if self.kind == SyntheticKind::GaussianBlobs && !(self.separation > 0.0 && self.separation.is_finite()) {
            out.push(format!("separation = {} must be finite and > 0", self.separation));
        }
        out
    }
}

/// Output of [`generate_synthetic`].
#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticData<T> {
    pub train: Dataset<T>,
    pub test: Dataset<T>,
    /// Regression: `[w*, b*]` (b* is 0). Blobs: centres, row-major `k×d`.
    pub truth: Vec<f64>,
}

/// Seeded generator with a seed-deterministic 80/20 shuffle split.
///
/// Regression draws `x ~ N(0, I)`, `w* ~ N(0, I)` and `y = w*ᵀx + noise·z`.
/// Blobs put class centres `separation·noise` apart (on scaled coordinate
/// axes when `k ≤ d`, random directions otherwise) and draw `x ~ N(c, noise²I)`.
pub fn generate_synthetic<T: Scalar>(spec: &SyntheticSpec) -> Result<SyntheticData<T>> {
    let problems = spec.problems();
    if !problems.is_empty() {
        return Err(Error::Config(problems));
    }
    let mut rng = ChaCha12Rng::seed_from_u64(spec.seed);
    let normal = |rng: &mut ChaCha12Rng| f64::standard_normal(rng);
    let d = spec.d;
    let (mut examples, truth, task): (Vec<Example<f64>>, Vec<f64>, Task) = match spec.kind {
        SyntheticKind::LinearRegression => {
            let w: Vec<f64> = (0..d).map(|_| normal(&mut rng)).collect();
            let ex = (0..spec.n)
                .map(|_| {
                    let x: Vec<f64> = (0..d).map(|_| normal(&mut rng)).collect();
                    let y = x.iter().zip(&w).map(|(a, b)| a * b).sum::<f64>() + spec.noise * normal(&mut rng);
                    Example::regression(x, y)
                })
                .collect();
            let mut truth = w;
            truth.push(0.0);
            (ex, truth, Task::Regression)
        }
        SyntheticKind::GaussianBlobs => {
            let k = spec.k;
            let radius = spec.separation * spec.noise.max(f64::MIN_POSITIVE) / std::f64::consts::SQRT_2;
            let mut centres = vec![0.0; k * d];
            for c in 0..k {
                let row = &mut centres[c * d..(c + 1) * d];
                if k <= d {
                    row[c] = radius;
                } else {
                    let dir: Vec<f64> = (0..d).map(|_| normal(&mut rng)).collect();
                    let norm = dir.iter().map(|v| v * v).sum::<f64>().sqrt().max(f64::MIN_POSITIVE);
                    row.iter_mut().zip(&dir).for_each(|(r, v)| *r = radius * v / norm);
                }
            }
            let ex = (0..spec.n)
                .map(|i| {
                    let c = i % k;
                    let x = (0..d).map(|j| centres[c * d + j] + spec.noise * normal(&mut rng)).collect();
                    Example::classified(x, c)
                })
                .collect();
            (ex, centres, Task::Classification { n_classes: k })
        }
    };
    examples.shuffle(&mut rng);
    let n_train = ((spec.n as f64 * TRAIN_FRACTION).round() as usize).clamp(1, spec.n - 1);
    let test_examples = examples.split_off(n_train);
    let name = match spec.kind {
        SyntheticKind::LinearRegression => "linear_regression",
        SyntheticKind::GaussianBlobs => "gaussian_blobs",
    };
    let make = |examples: Vec<Example<f64>>, split: &str| Dataset {
        name: format!("{name}-{split}"),
        examples: examples.into_iter().map(cast_example).collect(),
        task,
        input_dim: d,
        provenance: Provenance::Synthetic {
            spec: spec.clone(),
            split: split.into(),
        },
        normalization: None,
    };
    Ok(SyntheticData {
        train: make(examples, "train"),
        test: make(test_examples, "test"),
        truth,
    })
}

fn cast_example<T: Scalar>(ex: Example<f64>) -> Example<T> {
    let features = ex.features.into_iter().map(T::from_f64_lossy).collect();
    match ex.label {
        Label::Class(c) => Example::classified(features, c),
        Label::Value(y) => Example::regression(features, T::from_f64_lossy(y)),
    }
}
