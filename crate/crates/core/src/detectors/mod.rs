//! One-class detectors behind a uniform fit/score interface.
//!
//! Every fitted detector maps a row to a real score where higher means more
//! anomalous. PCA and OCSVM standardize internally with parameters from the
//! training set; IForest and ECOD see raw features.

pub mod ecod;
pub mod iforest;
pub mod ocsvm;
pub mod pca;

use std::fmt;
use std::str::FromStr;

use ndarray::{Array2, ArrayView1, ArrayView2};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{DataError, Dataset};
pub use ecod::EcodModel;
pub use iforest::IsolationForest;
pub use ocsvm::{OcsvmError, OcsvmModel, SolverOptions};
pub use pca::PcaModel;

pub const MODEL_FORMAT: &str = "das-detector";
pub const MODEL_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum DetectorError {
    #[error(transparent)]
    Data(#[from] DataError),
    #[error("need at least 2 training rows, found {0}")]
    TooFewRows(usize),
    #[error("training data contains {0} anomaly labels")]
    LabeledAnomalies(usize),
    #[error("invalid hyperparameter: {0}")]
    Hyperparameter(String),
    #[error("ocsvm: {0}")]
    Ocsvm(#[from] OcsvmError),
    #[error("unknown detector kind {0:?} (expected iforest, pca, ecod or ocsvm)")]
    UnknownKind(String),
    #[error("model document: {0}")]
    Document(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DetectorKind {
    IForest,
    Pca,
    Ecod,
    Ocsvm,
}

impl DetectorKind {
    pub const ALL: [DetectorKind; 4] = [Self::IForest, Self::Pca, Self::Ecod, Self::Ocsvm];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::IForest => "iforest",
            Self::Pca => "pca",
            Self::Ecod => "ecod",
            Self::Ocsvm => "ocsvm",
        }
    }

    /// Conventional display name (`IForest`, `PCA`, ...).
    pub fn display_name(self) -> &'static str {
        match self {
            Self::IForest => "IForest",
            Self::Pca => "PCA",
            Self::Ecod => "ECOD",
            Self::Ocsvm => "OCSVM",
        }
    }
}

impl fmt::Display for DetectorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for DetectorKind {
    type Err = DetectorError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "iforest" => Ok(Self::IForest),
            "pca" => Ok(Self::Pca),
            "ecod" => Ok(Self::Ecod),
            "ocsvm" => Ok(Self::Ocsvm),
            other => Err(DetectorError::UnknownKind(other.to_string())),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IForestParams {
    pub n_trees: usize,
    /// `None` means `min(256, n)`.
    pub subsample_size: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PcaParams {
    pub variance_retained: f64,
    /// Scale features to unit variance before the decomposition (centering
    /// is always applied).
    pub standardize: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OcsvmParams {
    pub nu: f64,
    /// `None` means `1 / (d * mean feature variance)` on standardized data.
    pub gamma: Option<f64>,
    pub tolerance: f64,
    pub max_sweeps: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectorHyperparams {
    pub iforest: IForestParams,
    pub pca: PcaParams,
    pub ocsvm: OcsvmParams,
    pub seed: u64,
}

impl Default for DetectorHyperparams {
    fn default() -> Self {
        Self {
            iforest: IForestParams {
                n_trees: 100,
                subsample_size: None,
            },
            pca: PcaParams {
                variance_retained: 0.9,
                standardize: true,
            },
            ocsvm: OcsvmParams {
                nu: 0.5,
                gamma: None,
                tolerance: 1e-4,
                max_sweeps: 10,
            },
            seed: 0,
        }
    }
}

impl DetectorHyperparams {
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<(), DetectorError> {
        let bad = |m: String| Err(DetectorError::Hyperparameter(m));
        if self.iforest.n_trees == 0 {
            return bad("iforest n_trees must be >= 1".into());
        }
        if self.iforest.subsample_size == Some(0) {
            return bad("iforest subsample_size must be >= 1".into());
        }
        let v = self.pca.variance_retained;
        if !(v > 0.0 && v <= 1.0) {
            return bad(format!("pca variance_retained = {v} must lie in (0, 1]"));
        }
        let nu = self.ocsvm.nu;
        if !(nu > 0.0 && nu <= 1.0) {
            return bad(format!("ocsvm nu = {nu} must lie in (0, 1]"));
        }
        if let Some(g) = self.ocsvm.gamma {
            if !(g > 0.0 && g.is_finite()) {
                return bad(format!("ocsvm gamma = {g} must be positive"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "state", rename_all = "lowercase")]
pub enum DetectorModel {
    IForest(IsolationForest),
    Pca(PcaModel),
    Ecod(EcodModel),
    Ocsvm(OcsvmModel),
}

/// A trained score function.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FittedDetector {
    kind: DetectorKind,
    dim: usize,
    model: DetectorModel,
    /// Min and max of the scores on the training rows.
    train_score_range: (f64, f64),
}

impl FittedDetector {
    pub fn fit(
        kind: DetectorKind,
        train: &Dataset,
        hp: &DetectorHyperparams,
    ) -> Result<Self, DetectorError> {
        hp.validate()?;
        let n = train.n_rows();
        if n < 2 {
            return Err(DetectorError::TooFewRows(n));
        }
        if train.n_anomalies() > 0 {
            return Err(DetectorError::LabeledAnomalies(train.n_anomalies()));
        }
        let x = train.features();
        let model = match kind {
            DetectorKind::IForest => {
                let psi = hp.iforest.subsample_size.unwrap_or(256).min(n);
                DetectorModel::IForest(IsolationForest::fit(x, hp.iforest.n_trees, psi, hp.seed))
            }
            DetectorKind::Pca => DetectorModel::Pca(PcaModel::fit(
                x,
                hp.pca.variance_retained,
                hp.pca.standardize,
            )),
            DetectorKind::Ecod => DetectorModel::Ecod(EcodModel::fit(x)),
            DetectorKind::Ocsvm => DetectorModel::Ocsvm(OcsvmModel::fit(
                x,
                hp.ocsvm.nu,
                hp.ocsvm.gamma,
                hp.seed,
                SolverOptions {
                    tolerance: hp.ocsvm.tolerance,
                    max_sweeps: hp.ocsvm.max_sweeps,
                },
            )?),
        };
        let mut det = Self {
            kind,
            dim: train.n_features(),
            model,
            train_score_range: (0.0, 0.0),
        };
        let scores = det.score_matrix(x)?;
        let lo = scores.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        det.train_score_range = (lo, hi);
        Ok(det)
    }

    pub fn kind(&self) -> DetectorKind {
        self.kind
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn model(&self) -> &DetectorModel {
        &self.model
    }

    pub fn train_score_range(&self) -> (f64, f64) {
        self.train_score_range
    }

    /// Score of a single row; the caller guarantees the dimension.
    pub fn score_row(&self, x: ArrayView1<'_, f64>) -> f64 {
        match &self.model {
            DetectorModel::IForest(m) => m.score_row(x),
            DetectorModel::Pca(m) => m.score_row(x),
            DetectorModel::Ecod(m) => m.score_row(x),
            DetectorModel::Ocsvm(m) => m.score_row(x),
        }
    }

    pub fn score_matrix(&self, x: ArrayView2<'_, f64>) -> Result<Vec<f64>, DetectorError> {
        if x.ncols() != self.dim {
            return Err(DataError::DimensionMismatch {
                expected: self.dim,
                found: x.ncols(),
            }
            .into());
        }
        Ok(x.rows().into_iter().map(|r| self.score_row(r)).collect())
    }

    pub fn predict_score(&self, data: &Dataset) -> Result<Vec<f64>, DetectorError> {
        self.score_matrix(data.features())
    }

    /// Retained principal axes (rows) in the PCA model's standardized space.
    pub fn principal_components(&self) -> Option<&Array2<f64>> {
        match &self.model {
            DetectorModel::Pca(m) => Some(&m.components),
            _ => None,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(&ModelDocument {
            format: MODEL_FORMAT.to_string(),
            version: MODEL_VERSION,
            detector: self.clone(),
        })
        .expect("detector state serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, DetectorError> {
        let doc: ModelDocument =
            serde_json::from_str(text).map_err(|e| DetectorError::Document(e.to_string()))?;
        if doc.format != MODEL_FORMAT || doc.version != MODEL_VERSION {
            return Err(DetectorError::Document(format!(
                "unsupported format {} v{}",
                doc.format, doc.version
            )));
        }
        Ok(doc.detector)
    }
}

/// Versioned envelope for serialized detectors.
#[derive(Debug, Serialize, Deserialize)]
struct ModelDocument {
    format: String,
    version: u32,
    detector: FittedDetector,
}

pub fn fit(
    kind: DetectorKind,
    train: &Dataset,
    hp: &DetectorHyperparams,
) -> Result<FittedDetector, DetectorError> {
    FittedDetector::fit(kind, train, hp)
}

pub fn predict_score(det: &FittedDetector, x: &Dataset) -> Result<Vec<f64>, DetectorError> {
    det.predict_score(x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array2;

    fn blob(n: usize) -> Dataset {
        let x = Array2::from_shape_fn((n, 3), |(i, j)| {
            let t = (i * 31 + j * 17) as f64 * 0.7331;
            t.sin() + 0.3 * (t * 1.7).cos()
        });
        Dataset::unlabeled(x).unwrap()
    }

    #[test]
    fn kinds_round_trip_through_strings() {
        for k in DetectorKind::ALL {
            assert_eq!(k.as_str().parse::<DetectorKind>().unwrap(), k);
        }
        assert!("lof".parse::<DetectorKind>().is_err());
    }

    #[test]
    fn fit_is_deterministic_for_every_kind() {
        let train = blob(60);
        let hp = DetectorHyperparams::default().with_seed(3);
        for k in DetectorKind::ALL {
            let a = fit(k, &train, &hp).unwrap().predict_score(&train).unwrap();
            let b = fit(k, &train, &hp).unwrap().predict_score(&train).unwrap();
            let bits = |v: &[f64]| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
            assert_eq!(bits(&a), bits(&b), "{k}");
        }
    }

    #[test]
    fn train_range_brackets_train_scores() {
        let train = blob(40);
        for k in DetectorKind::ALL {
            let det = fit(k, &train, &DetectorHyperparams::default()).unwrap();
            let s = det.predict_score(&train).unwrap();
            let (lo, hi) = det.train_score_range();
            assert!(s.iter().all(|v| *v >= lo && *v <= hi));
        }
    }

    #[test]
    fn rejects_bad_inputs() {
        let one = Dataset::unlabeled(Array2::zeros((1, 2))).unwrap();
        assert!(matches!(
            fit(DetectorKind::Ecod, &one, &DetectorHyperparams::default()),
            Err(DetectorError::TooFewRows(1))
        ));
        let labeled = Dataset::new(Array2::zeros((3, 1)), Some(vec![0, 1, 0])).unwrap();
        assert!(matches!(
            fit(DetectorKind::Ecod, &labeled, &DetectorHyperparams::default()),
            Err(DetectorError::LabeledAnomalies(1))
        ));
        let mut hp = DetectorHyperparams::default();
        hp.ocsvm.nu = 0.0;
        assert!(fit(DetectorKind::Ocsvm, &blob(10), &hp).is_err());
        let det = fit(DetectorKind::Pca, &blob(10), &DetectorHyperparams::default()).unwrap();
        let wrong = Dataset::unlabeled(Array2::zeros((2, 4))).unwrap();
        assert!(det.predict_score(&wrong).is_err());
    }

    #[test]
    fn json_round_trip_preserves_scores() {
        let train = blob(30);
        for k in DetectorKind::ALL {
            let det = fit(k, &train, &DetectorHyperparams::default()).unwrap();
            let back = FittedDetector::from_json(&det.to_json()).unwrap();
            assert_eq!(det.predict_score(&train).unwrap(), back.predict_score(&train).unwrap());
        }
        assert!(FittedDetector::from_json("{\"format\":\"x\",\"version\":1}").is_err());
    }
}
