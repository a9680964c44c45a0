//! Enhancement classifier and score fusion.
//!
//! Training rows (label 0) and synthesized anomalies (label 1) form a
//! two-class set; a random forest trained on it supplies a second score,
//! and the fused score is the sum of both scores after min-max
//! normalization.

pub mod forest;

use ndarray::{concatenate, Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{DataError, Dataset};
use crate::detectors::{DetectorError, FittedDetector};
use crate::synthesis::SynthesizedSet;
pub use forest::{ForestParams, RandomForest};

pub const ENHANCED_FORMAT: &str = "das-enhanced";
pub const ENHANCED_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum EnhanceError {
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Detector(#[from] DetectorError),
    #[error("classifier needs both classes: {normals} normal and {anomalies} anomalous rows")]
    SingleClass { normals: usize, anomalies: usize },
    #[error("n_trees must be >= 1")]
    NoTrees,
    #[error("model document: {0}")]
    Document(String),
}

/// Training rows followed by synthesized rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AugmentedSet {
    pub features: Array2<f64>,
    pub labels: Vec<u8>,
}

impl AugmentedSet {
    pub fn n_rows(&self) -> usize {
        self.features.nrows()
    }

    pub fn n_synthetic(&self) -> usize {
        self.labels.iter().filter(|&&l| l == 1).count()
    }
}

/// Multiset union: duplicates are kept.
pub fn augment(train: &Dataset, syn: &SynthesizedSet) -> Result<AugmentedSet, EnhanceError> {
    if syn.dim() != train.n_features() {
        return Err(DataError::DimensionMismatch {
            expected: train.n_features(),
            found: syn.dim(),
        }
        .into());
    }
    let features = concatenate(Axis(0), &[train.features(), syn.points.view()]).expect("same width");
    let mut labels = vec![0u8; train.n_rows()];
    labels.resize(train.n_rows() + syn.len(), 1);
    Ok(AugmentedSet { features, labels })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnhancementClassifier {
    pub forest: RandomForest,
    pub params: ForestParams,
}

impl EnhancementClassifier {
    pub fn score(&self, x: ArrayView2<'_, f64>) -> Result<Vec<f64>, EnhanceError> {
        if x.ncols() != self.forest.n_features {
            return Err(DataError::DimensionMismatch {
                expected: self.forest.n_features,
                found: x.ncols(),
            }
            .into());
        }
        Ok(x.rows().into_iter().map(|r| self.forest.score_row(r)).collect())
    }
}

pub fn fit_enhancement(aug: &AugmentedSet, params: &ForestParams) -> Result<EnhancementClassifier, EnhanceError> {
    if params.n_trees == 0 {
        return Err(EnhanceError::NoTrees);
    }
    let anomalies = aug.n_synthetic();
    let normals = aug.n_rows() - anomalies;
    if anomalies == 0 || normals == 0 {
        return Err(EnhanceError::SingleClass { normals, anomalies });
    }
    Ok(EnhancementClassifier {
        forest: RandomForest::fit(aug.features.view(), &aug.labels, params),
        params: params.clone(),
    })
}

/// Min-max normalize into [0, 1]. Anchors default to the vector's own
/// extremes; values outside explicit anchors are clipped; a zero-width
/// range maps everything to 0.5.
pub fn min_max_normalize(scores: &[f64], anchors: Option<(f64, f64)>) -> Vec<f64> {
    let (lo, hi) = anchors.unwrap_or_else(|| extremes(scores));
    if !(hi > lo) {
        return vec![0.5; scores.len()];
    }
    let width = hi - lo;
    scores.iter().map(|s| ((s - lo) / width).clamp(0.0, 1.0)).collect()
}

fn extremes(scores: &[f64]) -> (f64, f64) {
    scores
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &s| (lo.min(s), hi.max(s)))
}

/// Elementwise sum of the two normalized components.
pub fn fuse(base: &[f64], clf: &[f64], base_anchor: Option<(f64, f64)>, clf_anchor: Option<(f64, f64)>) -> Vec<f64> {
    let a = min_max_normalize(base, base_anchor);
    let b = min_max_normalize(clf, clf_anchor);
    a.iter().zip(&b).map(|(x, y)| x + y).collect()
}

/// Where the fusion takes its normalization extremes from.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AnchorMode {
    /// Extremes of the batch being scored.
    #[default]
    Batch,
    /// Extremes recorded on the augmented training set at fit time.
    Train,
}

impl AnchorMode {
    pub fn parse(s: &str) -> Option<Self> {
        match s.trim() {
            "batch" => Some(Self::Batch),
            "train" => Some(Self::Train),
            _ => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Batch => "batch",
            Self::Train => "train",
        }
    }
}

/// A base detector paired with its enhancement classifier.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnhancedDetector {
    pub base: FittedDetector,
    pub classifier: EnhancementClassifier,
    pub base_norm: (f64, f64),
    pub clf_norm: (f64, f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComponentScores {
    pub base: Vec<f64>,
    pub classifier: Vec<f64>,
    pub fused: Vec<f64>,
}

impl EnhancedDetector {
    /// Fit the classifier on `aug` and record normalization anchors over it.
    pub fn fit(base: FittedDetector, aug: &AugmentedSet, params: &ForestParams) -> Result<Self, EnhanceError> {
        let classifier = fit_enhancement(aug, params)?;
        let base_scores = base.score_matrix(aug.features.view())?;
        let clf_scores = classifier.score(aug.features.view())?;
        Ok(Self {
            base,
            classifier,
            base_norm: extremes(&base_scores),
            clf_norm: extremes(&clf_scores),
        })
    }

    pub fn component_scores(&self, x: ArrayView2<'_, f64>, mode: AnchorMode) -> Result<ComponentScores, EnhanceError> {
        let base = self.base.score_matrix(x)?;
        let classifier = self.classifier.score(x)?;
        let fused = match mode {
            AnchorMode::Batch => fuse(&base, &classifier, None, None),
            AnchorMode::Train => fuse(&base, &classifier, Some(self.base_norm), Some(self.clf_norm)),
        };
        Ok(ComponentScores {
            base,
            classifier,
            fused,
        })
    }

    pub fn fused_score(&self, data: &Dataset, mode: AnchorMode) -> Result<Vec<f64>, EnhanceError> {
        Ok(self.component_scores(data.features(), mode)?.fused)
    }

    pub fn to_json(&self) -> String {
        serde_json::json!({
            "format": ENHANCED_FORMAT,
            "version": ENHANCED_VERSION,
            "enhanced": self,
        })
        .to_string()
    }

    pub fn from_json(text: &str) -> Result<Self, EnhanceError> {
        let mut v: serde_json::Value =
            serde_json::from_str(text).map_err(|e| EnhanceError::Document(e.to_string()))?;
        if v["format"] != ENHANCED_FORMAT || v["version"] != ENHANCED_VERSION {
            return Err(EnhanceError::Document("unsupported format or version".into()));
        }
        serde_json::from_value(v["enhanced"].take()).map_err(|e| EnhanceError::Document(e.to_string()))
    }
}

pub fn fused_score(ed: &EnhancedDetector, data: &Dataset, mode: AnchorMode) -> Result<Vec<f64>, EnhanceError> {
    ed.fused_score(data, mode)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::detectors::{DetectorHyperparams, DetectorKind};
    use crate::synthesis::{GeneratorTag, Provenance};
    use ndarray::{array, Array1};

    fn syn_from(points: Array2<f64>) -> SynthesizedSet {
        let d = points.ncols();
        let rows: Vec<(Array1<f64>, Provenance)> = points
            .rows()
            .into_iter()
            .map(|r| {
                (
                    r.to_owned(),
                    Provenance {
                        seed_index: None,
                        steps: 1,
                        base_score: None,
                    },
                )
            })
            .collect();
        let n = rows.len();
        SynthesizedSet::new(GeneratorTag::Das, d, n, rows)
    }

    #[test]
    fn augment_counts() {
        let train = Dataset::unlabeled(Array2::from_shape_fn((100, 2), |(i, j)| (i + j) as f64)).unwrap();
        let syn = syn_from(Array2::from_elem((10, 2), 500.0));
        let aug = augment(&train, &syn).unwrap();
        assert_eq!(aug.n_rows(), 110);
        assert_eq!(aug.labels.iter().map(|&l| l as usize).sum::<usize>(), 10);
        assert_eq!(aug.features.row(3), train.row(3));
    }

    #[test]
    fn augment_with_nothing_is_the_train_set() {
        let train = Dataset::unlabeled(array![[1.0], [2.0]]).unwrap();
        let aug = augment(&train, &syn_from(Array2::zeros((0, 1)))).unwrap();
        assert_eq!(aug.features, train.features());
        assert!(aug.labels.iter().all(|&l| l == 0));
    }

    #[test]
    fn augment_keeps_duplicates_and_checks_width() {
        let train = Dataset::unlabeled(array![[1.0], [2.0]]).unwrap();
        let aug = augment(&train, &syn_from(array![[1.0]])).unwrap();
        assert_eq!(aug.n_rows(), 3);
        assert!(augment(&train, &syn_from(array![[1.0, 2.0]])).is_err());
    }

    #[test]
    fn normalization_rules() {
        assert_eq!(min_max_normalize(&[1.0, 2.0, 3.0], None), vec![0.0, 0.5, 1.0]);
        assert_eq!(min_max_normalize(&[5.0, 5.0, 5.0], None), vec![0.5; 3]);
        assert_eq!(min_max_normalize(&[-5.0, 15.0], Some((0.0, 10.0))), vec![0.0, 1.0]);
    }

    #[test]
    fn fusion_examples() {
        assert_eq!(fuse(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0], None, None), vec![1.0; 3]);
        let fused = fuse(&[0.3, 0.9, 0.1], &[0.7; 3], None, None);
        assert!(fused[1] > fused[0] && fused[0] > fused[2]);
    }

    #[test]
    fn separable_toy_classifier() {
        let mut x = Vec::new();
        let mut y = Vec::new();
        for k in 0..20 {
            let e = (k as f64 - 10.0) * 0.01;
            x.push(e);
            y.push(0u8);
            if k % 2 == 0 {
                x.push(10.0 + e);
                y.push(1);
            }
        }
        let aug = AugmentedSet {
            features: Array2::from_shape_vec((x.len(), 1), x).unwrap(),
            labels: y,
        };
        let clf = fit_enhancement(&aug, &ForestParams::default()).unwrap();
        let s = clf.score(array![[0.0], [10.0]].view()).unwrap();
        assert!(s[0] < 0.5 && s[1] > 0.5);
        let again = fit_enhancement(&aug, &ForestParams::default()).unwrap();
        assert_eq!(clf, again);
    }

    #[test]
    fn single_class_is_rejected() {
        let aug = AugmentedSet {
            features: array![[0.0], [1.0]],
            labels: vec![0, 0],
        };
        assert!(matches!(fit_enhancement(&aug, &ForestParams::default()), Err(EnhanceError::SingleClass { .. })));
    }

    #[test]
    fn enhanced_detector_round_trips_and_fuses_in_range() {
        let train = Dataset::unlabeled(Array2::from_shape_fn((40, 2), |(i, j)| ((i * 7 + j * 3) % 11) as f64)).unwrap();
        let base = FittedDetector::fit(DetectorKind::Ecod, &train, &DetectorHyperparams::default()).unwrap();
        let aug = augment(&train, &syn_from(array![[30.0, 30.0], [-20.0, 25.0]])).unwrap();
        let params = ForestParams {
            n_trees: 10,
            ..ForestParams::default()
        };
        let ed = EnhancedDetector::fit(base, &aug, &params).unwrap();
        for mode in [AnchorMode::Batch, AnchorMode::Train] {
            let f = ed.fused_score(&train, mode).unwrap();
            assert!(f.iter().all(|v| (0.0..=2.0).contains(v)));
        }
        let back = EnhancedDetector::from_json(&ed.to_json()).unwrap();
        assert_eq!(back, ed);
    }
}
