//! Datasets, CSV ingestion, one-class splits and per-feature standardization.
//!
//! CSV dialect: comma separator, `.` decimal point, mandatory header row, no
//! quoting. Labels are `0` (normal) or `1` (anomaly).

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rng;

pub const DEFAULT_LABEL_COLUMN: &str = "label";

#[derive(Debug, Error)]
pub enum DataError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("empty file: {0}")]
    EmptyFile(String),
    #[error("row {row}, column \"{column}\": cannot parse {value:?} as a finite number")]
    NonNumeric {
        row: usize,
        column: String,
        value: String,
    },
    #[error("row {row}: label {value:?} is not 0 or 1")]
    BadLabel { row: usize, value: String },
    #[error("row {row}: expected {expected} cells, found {found}")]
    Ragged {
        row: usize,
        expected: usize,
        found: usize,
    },
    #[error("label column \"{0}\" not found in header")]
    MissingLabelColumn(String),
    #[error("dataset has no feature columns")]
    NoFeatures,
    #[error("dataset has no rows")]
    NoRows,
    #[error("non-finite feature value at row {row}, column {col}")]
    NonFinite { row: usize, col: usize },
    #[error("label vector has length {labels}, expected {rows}")]
    LabelLength { labels: usize, rows: usize },
    #[error("labels must be 0 or 1, found {0}")]
    LabelValue(u8),
    #[error("dimension mismatch: expected {expected} features, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("dataset has no labels")]
    Unlabeled,
    #[error("dataset contains no anomalies")]
    NoAnomalies,
    #[error("need at least 2 normal rows, found {0}")]
    TooFewNormals(usize),
    #[error("train fraction {0} must lie in (0, 1]")]
    BadFraction(f64),
    #[error("train fraction {fraction} of {normals} normals selects no rows")]
    EmptyTrain { fraction: f64, normals: usize },
    #[error("feature name count {names} does not match {cols} columns")]
    NameCount { names: usize, cols: usize },
}

/// Feature matrix with optional binary labels and column names.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    features: Array2<f64>,
    labels: Option<Vec<u8>>,
    feature_names: Option<Vec<String>>,
}

impl Dataset {
    pub fn new(features: Array2<f64>, labels: Option<Vec<u8>>) -> Result<Self, DataError> {
        let (n, d) = features.dim();
        if n == 0 {
            return Err(DataError::NoRows);
        }
        if d == 0 {
            return Err(DataError::NoFeatures);
        }
        if let Some(((row, col), _)) = features.indexed_iter().find(|(_, v)| !v.is_finite()) {
            return Err(DataError::NonFinite { row, col });
        }
        if let Some(l) = &labels {
            if l.len() != n {
                return Err(DataError::LabelLength {
                    labels: l.len(),
                    rows: n,
                });
            }
            if let Some(&bad) = l.iter().find(|&&v| v > 1) {
                return Err(DataError::LabelValue(bad));
            }
        }
        Ok(Self {
            features,
            labels,
            feature_names: None,
        })
    }

    pub fn unlabeled(features: Array2<f64>) -> Result<Self, DataError> {
        Self::new(features, None)
    }

    pub fn with_feature_names(mut self, names: Vec<String>) -> Result<Self, DataError> {
        if names.len() != self.n_features() {
            return Err(DataError::NameCount {
                names: names.len(),
                cols: self.n_features(),
            });
        }
        self.feature_names = Some(names);
        Ok(self)
    }

    pub fn features(&self) -> ArrayView2<'_, f64> {
        self.features.view()
    }

    pub fn row(&self, i: usize) -> ArrayView1<'_, f64> {
        self.features.row(i)
    }

    pub fn labels(&self) -> Option<&[u8]> {
        self.labels.as_deref()
    }

    pub fn feature_names(&self) -> Option<&[String]> {
        self.feature_names.as_deref()
    }

    pub fn n_rows(&self) -> usize {
        self.features.nrows()
    }

    pub fn n_features(&self) -> usize {
        self.features.ncols()
    }

    pub fn n_anomalies(&self) -> usize {
        self.labels
            .as_ref()
            .map_or(0, |l| l.iter().filter(|&&v| v == 1).count())
    }

    /// Rows `indices` (in the given order) as a new dataset.
    pub fn select_rows(&self, indices: &[usize]) -> Result<Self, DataError> {
        let features = self.features.select(Axis(0), indices);
        let labels = self
            .labels
            .as_ref()
            .map(|l| indices.iter().map(|&i| l[i]).collect());
        let mut out = Self::new(features, labels)?;
        out.feature_names = self.feature_names.clone();
        Ok(out)
    }

    pub(crate) fn check_dim(&self, expected: usize) -> Result<(), DataError> {
        if self.n_features() != expected {
            return Err(DataError::DimensionMismatch {
                expected,
                found: self.n_features(),
            });
        }
        Ok(())
    }

    /// Write in the loader's dialect. Values use the shortest representation
    /// that parses back to the same `f64`.
    pub fn to_csv_string(&self) -> String {
        let names: Vec<String> = match &self.feature_names {
            Some(n) => n.clone(),
            None => (0..self.n_features()).map(|j| format!("x{j}")).collect(),
        };
        let mut out = names.join(",");
        if self.labels.is_some() {
            out.push(',');
            out.push_str(DEFAULT_LABEL_COLUMN);
        }
        out.push('\n');
        for (i, row) in self.features.rows().into_iter().enumerate() {
            for (j, v) in row.iter().enumerate() {
                if j > 0 {
                    out.push(',');
                }
                let _ = write!(out, "{v}");
            }
            if let Some(l) = &self.labels {
                let _ = write!(out, ",{}", l[i]);
            }
            out.push('\n');
        }
        out
    }

    pub fn write_csv(&self, path: &Path) -> Result<(), DataError> {
        fs::write(path, self.to_csv_string()).map_err(|source| DataError::Io {
            path: path.display().to_string(),
            source,
        })
    }
}

/// Load a CSV file. When `label_column` is `None` every column is a feature.
pub fn load_csv(path: &Path, label_column: Option<&str>) -> Result<Dataset, DataError> {
    let text = fs::read_to_string(path).map_err(|source| DataError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_csv(&text, label_column).map_err(|e| match e {
        DataError::EmptyFile(_) => DataError::EmptyFile(path.display().to_string()),
        other => other,
    })
}

/// Parse CSV text. Data rows are numbered from 1 (the header is row 0).
pub fn parse_csv(text: &str, label_column: Option<&str>) -> Result<Dataset, DataError> {
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let header = lines
        .next()
        .ok_or_else(|| DataError::EmptyFile(String::new()))?;
    let columns: Vec<String> = header.split(',').map(|c| c.trim().to_string()).collect();
    let label_idx = match label_column {
        Some(name) => Some(
            columns
                .iter()
                .position(|c| c == name)
                .ok_or_else(|| DataError::MissingLabelColumn(name.to_string()))?,
        ),
        None => None,
    };
    let d = columns.len() - usize::from(label_idx.is_some());
    if d == 0 {
        return Err(DataError::NoFeatures);
    }

    let mut values = Vec::new();
    let mut labels = label_idx.map(|_| Vec::new());
    let mut n = 0;
    for (k, line) in lines.enumerate() {
        let row = k + 1;
        let cells: Vec<&str> = line.split(',').map(str::trim).collect();
        if cells.len() != columns.len() {
            return Err(DataError::Ragged {
                row,
                expected: columns.len(),
                found: cells.len(),
            });
        }
        for (j, cell) in cells.iter().enumerate() {
            if Some(j) == label_idx {
                let v = match *cell {
                    "0" | "0.0" => 0,
                    "1" | "1.0" => 1,
                    _ => {
                        return Err(DataError::BadLabel {
                            row,
                            value: cell.to_string(),
                        })
                    }
                };
                labels.as_mut().expect("label vector").push(v);
            } else {
                match cell.parse::<f64>() {
                    Ok(v) if v.is_finite() => values.push(v),
                    _ => {
                        return Err(DataError::NonNumeric {
                            row,
                            column: columns[j].clone(),
                            value: cell.to_string(),
                        })
                    }
                }
            }
        }
        n += 1;
    }
    if n == 0 {
        return Err(DataError::NoRows);
    }
    let names: Vec<String> = columns
        .iter()
        .enumerate()
        .filter(|(j, _)| Some(*j) != label_idx)
        .map(|(_, c)| c.clone())
        .collect();
    let features = Array2::from_shape_vec((n, d), values).expect("row-major shape");
    Dataset::new(features, labels)?.with_feature_names(names)
}

/// Train/test partition for one-class training.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OneClassSplit {
    pub train: Dataset,
    pub test: Dataset,
    /// Source row indices of `train`, ascending.
    pub train_indices: Vec<usize>,
    /// Source row indices of `test`, ascending.
    pub test_indices: Vec<usize>,
    pub seed: u64,
}

/// Draw `floor(train_fraction * #normals)` normals into the training set by a
/// seeded Fisher–Yates shuffle (ChaCha8, stream 0). Everything else, including
/// every anomaly, goes to the test set. Both sides keep source row order.
pub fn split_one_class(
    data: &Dataset,
    train_fraction: f64,
    seed: u64,
) -> Result<OneClassSplit, DataError> {
    if !(train_fraction > 0.0 && train_fraction <= 1.0) {
        return Err(DataError::BadFraction(train_fraction));
    }
    let labels = data.labels().ok_or(DataError::Unlabeled)?;
    let mut normals: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == 0).collect();
    if labels.iter().all(|&l| l == 0) {
        return Err(DataError::NoAnomalies);
    }
    if normals.len() < 2 {
        return Err(DataError::TooFewNormals(normals.len()));
    }
    let n_train = (train_fraction * normals.len() as f64).floor() as usize;
    if n_train == 0 {
        return Err(DataError::EmptyTrain {
            fraction: train_fraction,
            normals: normals.len(),
        });
    }
    rng::shuffle(&mut normals, &mut rng::stream(seed, 0));
    let mut train_indices = normals[..n_train].to_vec();
    train_indices.sort_unstable();
    let mut in_train = vec![false; labels.len()];
    for &i in &train_indices {
        in_train[i] = true;
    }
    let test_indices: Vec<usize> = (0..labels.len()).filter(|&i| !in_train[i]).collect();
    Ok(OneClassSplit {
        train: data.select_rows(&train_indices)?,
        test: data.select_rows(&test_indices)?,
        train_indices,
        test_indices,
        seed,
    })
}

/// Per-feature mean and population standard deviation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StandardizationParams {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl StandardizationParams {
    pub fn fit(train: ArrayView2<'_, f64>) -> Self {
        let n = train.nrows() as f64;
        let mean: Array1<f64> = train.sum_axis(Axis(0)) / n;
        let std = train
            .columns()
            .into_iter()
            .zip(mean.iter())
            .map(|(col, &m)| (col.iter().map(|v| (v - m).powi(2)).sum::<f64>() / n).sqrt())
            .collect();
        Self {
            mean: mean.to_vec(),
            std,
        }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    /// `(x - mean) / std`, or 0 where `std == 0`.
    pub fn transform_value(&self, j: usize, x: f64) -> f64 {
        if self.std[j] > 0.0 {
            (x - self.mean[j]) / self.std[j]
        } else {
            0.0
        }
    }

    pub fn transform(&self, x: ArrayView2<'_, f64>) -> Result<Array2<f64>, DataError> {
        if x.ncols() != self.dim() {
            return Err(DataError::DimensionMismatch {
                expected: self.dim(),
                found: x.ncols(),
            });
        }
        let mut out = x.to_owned();
        for mut row in out.rows_mut() {
            for (j, v) in row.iter_mut().enumerate() {
                *v = self.transform_value(j, *v);
            }
        }
        Ok(out)
    }

    pub fn transform_row(&self, x: ArrayView1<'_, f64>) -> Array1<f64> {
        x.iter()
            .enumerate()
            .map(|(j, &v)| self.transform_value(j, v))
            .collect()
    }
}

pub fn fit_standardizer(train: &Dataset) -> StandardizationParams {
    StandardizationParams::fit(train.features())
}

pub fn apply_standardizer(
    params: &StandardizationParams,
    data: &Dataset,
) -> Result<Dataset, DataError> {
    let features = params.transform(data.features())?;
    let mut out = Dataset::new(features, data.labels.clone())?;
    out.feature_names = data.feature_names.clone();
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn parses_labeled_csv() {
        let ds = parse_csv("a,b,label\n1,2,0\n3,4,0\n5,6,1\n", Some("label")).unwrap();
        assert_eq!((ds.n_rows(), ds.n_features()), (3, 2));
        assert_eq!(ds.labels(), Some(&[0u8, 0, 1][..]));
        assert_eq!(ds.feature_names().unwrap(), &["a", "b"]);
    }

    #[test]
    fn label_column_is_a_feature_when_not_designated() {
        let ds = parse_csv("a,b,label\n1,2,0\n3,4,0\n5,6,1\n", None).unwrap();
        assert_eq!(ds.n_features(), 3);
        assert!(ds.labels().is_none());
    }

    #[test]
    fn non_numeric_cell_names_row_and_column() {
        let err = parse_csv("a,b\n1,2\n3,abc\n", None).unwrap_err();
        match err {
            DataError::NonNumeric { row, column, .. } => {
                assert_eq!(row, 2);
                assert_eq!(column, "b");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn rejects_bad_labels_and_empty_input() {
        assert!(matches!(
            parse_csv("a,label\n1,2\n", Some("label")),
            Err(DataError::BadLabel { row: 1, .. })
        ));
        assert!(matches!(parse_csv("", None), Err(DataError::EmptyFile(_))));
        assert!(matches!(parse_csv("a,b\n", None), Err(DataError::NoRows)));
        assert!(matches!(
            parse_csv("a,b\n1,2,3\n", None),
            Err(DataError::Ragged { .. })
        ));
    }

    #[test]
    fn missing_file_is_an_io_error() {
        let err = load_csv(Path::new("/nonexistent/x.csv"), None).unwrap_err();
        assert!(matches!(err, DataError::Io { .. }));
    }

    fn ten_plus_three() -> Dataset {
        let features = Array2::from_shape_fn((13, 2), |(i, j)| (i * 2 + j) as f64);
        let mut labels = vec![0u8; 10];
        labels.extend([1, 1, 1]);
        Dataset::new(features, Some(labels)).unwrap()
    }

    #[test]
    fn half_split_sizes() {
        let s = split_one_class(&ten_plus_three(), 0.5, 7).unwrap();
        assert_eq!(s.train.n_rows(), 5);
        assert_eq!(s.train.n_anomalies(), 0);
        assert_eq!(s.test.n_rows(), 8);
        assert_eq!(s.test.n_anomalies(), 3);
    }

    #[test]
    fn full_fraction_leaves_only_anomalies_in_test() {
        let s = split_one_class(&ten_plus_three(), 1.0, 7).unwrap();
        assert_eq!(s.train.n_rows(), 10);
        assert_eq!(s.test.n_rows(), 3);
        assert_eq!(s.test.n_anomalies(), 3);
    }

    #[test]
    fn split_is_deterministic() {
        let a = split_one_class(&ten_plus_three(), 0.5, 7).unwrap();
        let b = split_one_class(&ten_plus_three(), 0.5, 7).unwrap();
        assert_eq!(a.train_indices, b.train_indices);
        assert_eq!(a.test_indices, b.test_indices);
        let c = split_one_class(&ten_plus_three(), 0.5, 8).unwrap();
        assert_eq!(c.train.n_rows(), 5);
    }

    #[test]
    fn split_errors() {
        let ds = ten_plus_three();
        assert!(matches!(
            split_one_class(&ds, 0.0, 1),
            Err(DataError::BadFraction(_))
        ));
        assert!(matches!(
            split_one_class(&ds, 0.05, 1),
            Err(DataError::EmptyTrain { .. })
        ));
        let all_normal = Dataset::new(Array2::zeros((4, 1)), Some(vec![0; 4])).unwrap();
        assert!(matches!(
            split_one_class(&all_normal, 0.5, 1),
            Err(DataError::NoAnomalies)
        ));
        let one_normal = Dataset::new(Array2::zeros((3, 1)), Some(vec![0, 1, 1])).unwrap();
        assert!(matches!(
            split_one_class(&one_normal, 0.5, 1),
            Err(DataError::TooFewNormals(1))
        ));
        let unlabeled = Dataset::unlabeled(Array2::zeros((3, 1))).unwrap();
        assert!(matches!(
            split_one_class(&unlabeled, 0.5, 1),
            Err(DataError::Unlabeled)
        ));
    }

    #[test]
    fn standardizer_uses_population_std() {
        let ds = Dataset::unlabeled(array![[1.0], [3.0]]).unwrap();
        let p = fit_standardizer(&ds);
        assert_eq!(p.mean, vec![2.0]);
        assert_eq!(p.std, vec![1.0]);
        assert_eq!(p.transform_value(0, 3.0), 1.0);
    }

    #[test]
    fn constant_feature_maps_to_zero() {
        let ds = Dataset::unlabeled(array![[5.0], [5.0], [5.0]]).unwrap();
        let p = fit_standardizer(&ds);
        assert_eq!(p.std, vec![0.0]);
        assert_eq!(p.transform_value(0, 123.0), 0.0);
    }

    #[test]
    fn standardizer_dimension_mismatch() {
        let p = fit_standardizer(&Dataset::unlabeled(array![[1.0, 2.0]]).unwrap());
        let other = Dataset::unlabeled(array![[1.0]]).unwrap();
        assert!(matches!(
            apply_standardizer(&p, &other),
            Err(DataError::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn dataset_invariants() {
        assert!(Dataset::unlabeled(array![[f64::NAN]]).is_err());
        assert!(Dataset::new(array![[1.0]], Some(vec![0, 1])).is_err());
        assert!(Dataset::new(array![[1.0]], Some(vec![2])).is_err());
        assert!(Dataset::unlabeled(Array2::zeros((0, 2))).is_err());
    }
}
