//! Detector-aware hard-anomaly synthesis.
//!
//! A synthesis run takes the training set, a fitted detector and a requested
//! count, and returns points that are far from every training row yet score
//! like borderline normals under the detector:
//!
//! 1. Score the training rows and keep those at or above
//!    `seed_percentile` as seeds.
//! 2. For each draw, pick a seed uniformly and displace it along the
//!    policy's direction with a geometrically growing step. The first
//!    candidate that keeps `min_seed_distance` from all training rows and
//!    whose score stays inside the training-score quantile band is kept.
//!
//! Geometry (directions, step lengths, distances) lives in the training
//! set's standardized space. Candidates are emitted in raw feature units.

pub mod baselines;
pub mod policy;

use std::fmt::Write as _;
use std::sync::atomic::{AtomicUsize, Ordering};

use ndarray::{Array1, Array2, ArrayView1, Axis};
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{DataError, Dataset, StandardizationParams};
use crate::detectors::{DetectorError, DetectorModel, FittedDetector, PcaModel};
use crate::rng::{self, DasRng};
use crate::stats::quantile_sorted;
pub use baselines::{
    gaussian_noise_synthesis, random_uniform_synthesis, smote_interpolate, smote_synthesis,
};
pub use policy::{DirectionStrategy, MinDistance, PolicyViolation, SynthesisPolicy};

#[derive(Debug, Error)]
pub enum SynthesisError {
    #[error("invalid policy: {0}")]
    Policy(PolicyViolation),
    #[error(transparent)]
    Detector(#[from] DetectorError),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error("percentile {0} must lie in (0, 100)")]
    Percentile(f64),
    #[error("need more than {k} training rows for {k}-nearest-neighbour interpolation, found {rows}")]
    TooFewRows { rows: usize, k: usize },
    #[error("invalid parameter {name} = {value}")]
    Parameter { name: &'static str, value: f64 },
}

impl From<PolicyViolation> for SynthesisError {
    fn from(v: PolicyViolation) -> Self {
        Self::Policy(v)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GeneratorTag {
    Das,
    Gaussian,
    RandomUniform,
    Smote,
    AblationGeneric,
    AblationSimple,
    AblationRandom,
}

impl GeneratorTag {
    pub const ALL: [GeneratorTag; 7] = [
        Self::Das,
        Self::Gaussian,
        Self::RandomUniform,
        Self::Smote,
        Self::AblationGeneric,
        Self::AblationSimple,
        Self::AblationRandom,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Das => "das",
            Self::Gaussian => "gaussian",
            Self::RandomUniform => "random_uniform",
            Self::Smote => "smote",
            Self::AblationGeneric => "ablation_generic",
            Self::AblationSimple => "ablation_simple",
            Self::AblationRandom => "ablation_random",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        let s = s.trim().to_ascii_lowercase().replace('-', "_");
        Self::ALL.into_iter().find(|t| t.as_str() == s)
    }
}

impl std::fmt::Display for GeneratorTag {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Ablations of the detector-aware generator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Ablation {
    /// Random unit directions regardless of the detector.
    Generic,
    /// No detector queries: seeds by distance from the centroid, no score band.
    Simple,
    /// Seeds drawn from all training rows.
    Random,
}

impl Ablation {
    pub fn tag(self) -> GeneratorTag {
        match self {
            Self::Generic => GeneratorTag::AblationGeneric,
            Self::Simple => GeneratorTag::AblationSimple,
            Self::Random => GeneratorTag::AblationRandom,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    /// Training row the point was derived from, if any.
    pub seed_index: Option<usize>,
    /// Proposals tried for the accepted point (1 = first proposal).
    pub steps: usize,
    /// Base-detector score at acceptance, when the generator queried it.
    pub base_score: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RejectionCounts {
    pub too_close: usize,
    pub score_below_band: usize,
    pub score_above_band: usize,
    /// Draws whose step budget ran out.
    pub exhausted_draws: usize,
}

impl RejectionCounts {
    fn add(&mut self, other: &Self) {
        self.too_close += other.too_close;
        self.score_below_band += other.score_below_band;
        self.score_above_band += other.score_above_band;
        self.exhausted_draws += other.exhausted_draws;
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Shortfall {
    pub requested: usize,
    pub produced: usize,
    pub draws: usize,
}

/// Synthesized anomalies (implicitly labeled 1).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthesizedSet {
    pub points: Array2<f64>,
    pub provenance: Vec<Provenance>,
    pub generator: GeneratorTag,
    pub requested: usize,
    /// Present when fewer points than requested were accepted.
    pub shortfall: Option<Shortfall>,
    pub rejections: RejectionCounts,
    /// Detector score evaluations made while synthesizing.
    pub score_calls: usize,
}

impl SynthesizedSet {
    pub(crate) fn new(
        generator: GeneratorTag,
        dim: usize,
        requested: usize,
        rows: Vec<(Array1<f64>, Provenance)>,
    ) -> Self {
        let mut points = Array2::zeros((rows.len(), dim));
        let mut provenance = Vec::with_capacity(rows.len());
        for (i, (p, prov)) in rows.into_iter().enumerate() {
            points.row_mut(i).assign(&p);
            provenance.push(prov);
        }
        Self {
            points,
            provenance,
            generator,
            requested,
            shortfall: None,
            rejections: RejectionCounts::default(),
            score_calls: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.points.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dim(&self) -> usize {
        self.points.ncols()
    }

    /// CSV in the loader dialect, plus `seed_index`, `steps` and
    /// `base_score` columns. Missing provenance values are written as
    /// empty cells.
    pub fn to_csv_string(&self, feature_names: Option<&[String]>) -> String {
        let mut out = String::new();
        let names: Vec<String> = match feature_names {
            Some(n) => n.to_vec(),
            None => (0..self.dim()).map(|j| format!("x{j}")).collect(),
        };
        out.push_str(&names.join(","));
        out.push_str(",seed_index,steps,base_score\n");
        for (row, prov) in self.points.rows().into_iter().zip(&self.provenance) {
            for v in row {
                let _ = write!(out, "{v},");
            }
            if let Some(s) = prov.seed_index {
                let _ = write!(out, "{s}");
            }
            let _ = write!(out, ",{},", prov.steps);
            if let Some(s) = prov.base_score {
                let _ = write!(out, "{s}");
            }
            out.push('\n');
        }
        out
    }
}

/// Counts every detector evaluation made on its behalf.
pub struct ScoreProbe<'a> {
    det: &'a FittedDetector,
    calls: AtomicUsize,
}

impl<'a> ScoreProbe<'a> {
    pub fn new(det: &'a FittedDetector) -> Self {
        Self {
            det,
            calls: AtomicUsize::new(0),
        }
    }

    pub fn score_row(&self, x: ArrayView1<'_, f64>) -> f64 {
        self.calls.fetch_add(1, Ordering::Relaxed);
        self.det.score_row(x)
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::Relaxed)
    }

    pub fn detector(&self) -> &FittedDetector {
        self.det
    }
}

/// Indices of scores at or above the `percentile` quantile; the argmax when
/// nothing qualifies. Ties at the threshold are kept.
pub fn borderline_indices(scores: &[f64], percentile: f64) -> Result<Vec<usize>, SynthesisError> {
    if !(percentile > 0.0 && percentile < 100.0) {
        return Err(SynthesisError::Percentile(percentile));
    }
    let mut sorted = scores.to_vec();
    sorted.sort_by(f64::total_cmp);
    let threshold = quantile_sorted(&sorted, percentile / 100.0);
    let mut idx: Vec<usize> = (0..scores.len()).filter(|&i| scores[i] >= threshold).collect();
    if idx.is_empty() {
        let best = (0..scores.len())
            .max_by(|&a, &b| scores[a].total_cmp(&scores[b]))
            .expect("non-empty training scores");
        idx.push(best);
    }
    Ok(idx)
}

/// Training rows in the top `percentile` of the detector's scores.
pub fn select_borderline_seeds(
    det: &FittedDetector,
    train: &Dataset,
    percentile: f64,
) -> Result<Vec<usize>, SynthesisError> {
    let scores = det.predict_score(train)?;
    borderline_indices(&scores, percentile)
}

/// Mean distance from each training row to its nearest other row, in the
/// given (standardized) coordinates. At most 1000 evenly spaced rows are used
/// as queries.
pub fn mean_nearest_neighbor_distance(z: &Array2<f64>) -> f64 {
    let n = z.nrows();
    if n < 2 {
        return 0.0;
    }
    let queries: Vec<usize> = if n <= 1000 {
        (0..n).collect()
    } else {
        (0..1000).map(|k| k * n / 1000).collect()
    };
    let total: f64 = queries
        .par_iter()
        .map(|&i| {
            let zi = z.row(i);
            (0..n)
                .filter(|&j| j != i)
                .map(|j| squared_distance(zi, z.row(j)))
                .fold(f64::INFINITY, f64::min)
                .sqrt()
        })
        .sum();
    total / queries.len() as f64
}

fn squared_distance(a: ArrayView1<'_, f64>, b: ArrayView1<'_, f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x - y).powi(2)).sum()
}

fn random_unit(dim: usize, active: &[bool], rng: &mut DasRng) -> Array1<f64> {
    loop {
        let mut v: Array1<f64> = (0..dim)
            .map(|j| if active[j] { rng.sample(StandardNormal) } else { 0.0 })
            .collect();
        let norm = v.dot(&v).sqrt();
        if norm > 1e-12 {
            v /= norm;
            return v;
        }
        if !active.iter().any(|&a| a) {
            return v;
        }
    }
}

/// A candidate accepted by controlled extrapolation.
#[derive(Debug, Clone, PartialEq)]
pub struct Accepted {
    pub point: Array1<f64>,
    pub steps: usize,
    pub score: Option<f64>,
}

/// Everything controlled extrapolation needs about one training set and
/// detector, computed once per synthesis run.
pub struct SynthesisContext<'a> {
    probe: ScoreProbe<'a>,
    train: &'a Dataset,
    scaler: StandardizationParams,
    z_train: Array2<f64>,
    /// Non-constant features.
    active: Vec<bool>,
    centroid_z: Array1<f64>,
    train_scores: Option<Vec<f64>>,
    band: (Option<f64>, Option<f64>),
    min_distance: f64,
    /// Retained principal axes (rows) in standardized space.
    subspace: Option<Array2<f64>>,
    check_band: bool,
}

impl<'a> SynthesisContext<'a> {
    /// With `score_access == false` the detector is never queried and the
    /// score band is disabled.
    pub fn new(
        det: &'a FittedDetector,
        train: &'a Dataset,
        policy: &SynthesisPolicy,
        score_access: bool,
    ) -> Result<Self, SynthesisError> {
        policy.validate()?;
        train.check_dim(det.dim())?;
        let probe = ScoreProbe::new(det);
        let scaler = StandardizationParams::fit(train.features());
        let z_train = scaler.transform(train.features())?;
        let active: Vec<bool> = scaler.std.iter().map(|&s| s > 0.0).collect();
        let centroid_z = z_train.mean_axis(Axis(0)).expect("non-empty train");

        let (train_scores, band) = if score_access {
            let scores: Vec<f64> = train.features().rows().into_iter().map(|r| probe.score_row(r)).collect();
            let mut sorted = scores.clone();
            sorted.sort_by(f64::total_cmp);
            let (lo, hi) = policy.score_band;
            let lo = (lo > 0.0).then(|| quantile_sorted(&sorted, lo));
            let hi = (hi < 1.0).then(|| quantile_sorted(&sorted, hi));
            (Some(scores), (lo, hi))
        } else {
            (None, (None, None))
        };

        let min_distance = match policy.min_seed_distance {
            MinDistance::Absolute(d) => d,
            MinDistance::NnMultiple(0.0) => 0.0,
            MinDistance::NnMultiple(f) => f * mean_nearest_neighbor_distance(&z_train),
        };

        let subspace = (policy.direction == DirectionStrategy::PrincipalSubspace)
            .then(|| principal_axes(det, train, &scaler))
            .flatten();

        Ok(Self {
            probe,
            train,
            scaler,
            z_train,
            active,
            centroid_z,
            train_scores,
            band,
            min_distance,
            subspace,
            check_band: score_access,
        })
    }

    pub fn score_calls(&self) -> usize {
        self.probe.calls()
    }

    pub fn train_scores(&self) -> Option<&[f64]> {
        self.train_scores.as_deref()
    }

    /// Absolute minimum distance in standardized units.
    pub fn min_distance(&self) -> f64 {
        self.min_distance
    }

    /// Score bounds implied by the policy's quantile band.
    pub fn band(&self) -> (Option<f64>, Option<f64>) {
        self.band
    }

    pub fn standardizer(&self) -> &StandardizationParams {
        &self.scaler
    }

    /// Distance from a raw-unit point to its nearest training row, in
    /// standardized units.
    pub fn nearest_train_distance(&self, x: ArrayView1<'_, f64>) -> f64 {
        let z = self.scaler.transform_row(x);
        self.z_train
            .rows()
            .into_iter()
            .map(|r| squared_distance(r, z.view()))
            .fold(f64::INFINITY, f64::min)
            .sqrt()
    }

    /// Unit displacement (standardized space) for a ray strategy; `None` for
    /// coordinate recombination.
    pub fn direction(
        &self,
        strategy: DirectionStrategy,
        seed_index: usize,
        pool: &[usize],
        rng: &mut DasRng,
    ) -> Option<Array1<f64>> {
        let d = self.z_train.ncols();
        let seed_z = self.z_train.row(seed_index);
        let outward = &seed_z - &self.centroid_z;
        let normalize = |v: Array1<f64>, rng: &mut DasRng| {
            let n = v.dot(&v).sqrt();
            if n > 1e-12 {
                v / n
            } else {
                random_unit(d, &self.active, rng)
            }
        };
        match strategy {
            DirectionStrategy::CoordinateRecombination => None,
            DirectionStrategy::RandomUnit => Some(random_unit(d, &self.active, rng)),
            DirectionStrategy::CentroidOutward => Some(normalize(outward, rng)),
            DirectionStrategy::PrincipalSubspace => {
                let Some(basis) = self.subspace.as_ref().filter(|b| b.nrows() > 0) else {
                    return Some(random_unit(d, &self.active, rng));
                };
                let k = basis.nrows();
                let coef: Array1<f64> = (0..k).map(|_| rng.sample(StandardNormal)).collect();
                let mut v = normalize(basis.t().dot(&coef), rng);
                if v.dot(&outward) < 0.0 {
                    v = -v;
                }
                Some(v)
            }
            DirectionStrategy::BorderlinePeer => {
                let peer = pool
                    .iter()
                    .copied()
                    .filter(|&j| j != seed_index)
                    .map(|j| (j, squared_distance(seed_z, self.z_train.row(j))))
                    .filter(|(_, dist)| *dist > 0.0)
                    .min_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
                match peer {
                    Some((j, _)) => Some(normalize(&self.z_train.row(j) - &seed_z, rng)),
                    None => Some(normalize(outward, rng)),
                }
            }
        }
    }

    fn recombine(&self, seed_index: usize, swap_fraction: f64, rng: &mut DasRng) -> Array1<f64> {
        let x = self.train.features();
        let (n, d) = x.dim();
        let mut point = x.row(seed_index).to_owned();
        let k = ((swap_fraction * d as f64).round() as usize).clamp(1, d);
        let mut coords: Vec<usize> = (0..d).collect();
        for i in 0..k {
            let j = rng.random_range(i..d);
            coords.swap(i, j);
        }
        for &j in &coords[..k] {
            let donor = if n > 1 {
                let r = rng.random_range(0..n - 1);
                if r >= seed_index {
                    r + 1
                } else {
                    r
                }
            } else {
                seed_index
            };
            point[j] = x[[donor, j]];
        }
        point
    }

    fn step_point(&self, seed: ArrayView1<'_, f64>, dir: &Array1<f64>, step: f64) -> Array1<f64> {
        let mut p = seed.to_owned();
        for j in 0..p.len() {
            p[j] += step * self.scaler.std[j] * dir[j];
        }
        p
    }

    /// Displace one seed until a candidate satisfies the distance and score
    /// band constraints, or the step budget runs out.
    pub fn controlled_extrapolation(
        &self,
        seed_index: usize,
        pool: &[usize],
        policy: &SynthesisPolicy,
        rng: &mut DasRng,
        rejections: &mut RejectionCounts,
    ) -> Option<Accepted> {
        let seed = self.train.row(seed_index);
        let dir = self.direction(policy.direction, seed_index, pool, rng);
        let mut step = policy.step_init;
        for attempt in 1..=policy.max_steps {
            let candidate = match &dir {
                Some(u) => self.step_point(seed, u, step),
                None => self.recombine(seed_index, policy.swap_fraction, rng),
            };
            step *= policy.step_growth;
            if self.nearest_train_distance(candidate.view()) < self.min_distance {
                rejections.too_close += 1;
                continue;
            }
            let score = if self.check_band {
                let s = self.probe.score_row(candidate.view());
                if self.band.0.is_some_and(|lo| s < lo) {
                    rejections.score_below_band += 1;
                    continue;
                }
                if self.band.1.is_some_and(|hi| s > hi) {
                    rejections.score_above_band += 1;
                    continue;
                }
                Some(s)
            } else {
                None
            };
            return Some(Accepted {
                point: candidate,
                steps: attempt,
                score,
            });
        }
        rejections.exhausted_draws += 1;
        None
    }

    /// Seeds for the variant: borderline rows by detector score, all rows, or
    /// (without score access) rows far from the centroid.
    fn seed_pool(&self, policy: &SynthesisPolicy, ablation: Option<Ablation>) -> Result<Vec<usize>, SynthesisError> {
        match (ablation, &self.train_scores) {
            (Some(Ablation::Random), _) => Ok((0..self.train.n_rows()).collect()),
            (_, Some(scores)) => borderline_indices(scores, policy.seed_percentile),
            (_, None) => {
                let radial: Vec<f64> = self
                    .z_train
                    .rows()
                    .into_iter()
                    .map(|r| squared_distance(r, self.centroid_z.view()))
                    .collect();
                borderline_indices(&radial, policy.seed_percentile)
            }
        }
    }
}

/// Principal axes for the subspace strategy, expressed in the training
/// standardizer's coordinates. A PCA base detector contributes its own
/// retained axes; otherwise a 90%-variance PCA of the training set is used.
fn principal_axes(det: &FittedDetector, train: &Dataset, scaler: &StandardizationParams) -> Option<Array2<f64>> {
    let pca = match det.model() {
        DetectorModel::Pca(m) => m.clone(),
        _ => PcaModel::fit(train.features(), 0.9, true),
    };
    let k = pca.n_components();
    if k == 0 {
        return None;
    }
    let d = scaler.dim();
    // raw displacement = pca_scale * w; standardized = raw / std
    let mut axes = Array2::zeros((k, d));
    for r in 0..k {
        for j in 0..d {
            if scaler.std[j] > 0.0 {
                axes[[r, j]] = pca.scaler.std[j] * pca.components[[r, j]] / scaler.std[j];
            }
        }
    }
    // re-orthonormalize (Gram–Schmidt) so random coefficients stay isotropic
    for r in 0..k {
        for q in 0..r {
            let proj = axes.row(r).dot(&axes.row(q));
            let prev = axes.row(q).to_owned();
            axes.row_mut(r).scaled_add(-proj, &prev);
        }
        let norm = axes.row(r).dot(&axes.row(r)).sqrt();
        if norm > 1e-12 {
            axes.row_mut(r).mapv_inplace(|v| v / norm);
        }
    }
    Some(axes)
}

fn run_generator(
    n_samples: usize,
    det: &FittedDetector,
    train: &Dataset,
    policy: &SynthesisPolicy,
    ablation: Option<Ablation>,
) -> Result<SynthesizedSet, SynthesisError> {
    policy.validate()?;
    let mut policy = policy.clone();
    if ablation == Some(Ablation::Generic) {
        policy.direction = DirectionStrategy::RandomUnit;
    }
    let tag = ablation.map_or(GeneratorTag::Das, Ablation::tag);
    let ctx = SynthesisContext::new(det, train, &policy, ablation != Some(Ablation::Simple))?;
    let pool = ctx.seed_pool(&policy, ablation)?;

    let budget = n_samples.saturating_mul(policy.draw_budget);
    let chunk = n_samples.max(16);
    let mut accepted: Vec<(Array1<f64>, Provenance)> = Vec::with_capacity(n_samples);
    let mut rejections = RejectionCounts::default();
    let mut draws = 0;
    let mut start = 0;
    while accepted.len() < n_samples && start < budget {
        let end = (start + chunk).min(budget);
        let results: Vec<(usize, Option<Accepted>, RejectionCounts)> = (start..end)
            .into_par_iter()
            .map(|k| {
                let mut rng = rng::stream(policy.seed, k as u64);
                let seed_index = pool[rng.random_range(0..pool.len())];
                let mut rej = RejectionCounts::default();
                let got = ctx.controlled_extrapolation(seed_index, &pool, &policy, &mut rng, &mut rej);
                (seed_index, got, rej)
            })
            .collect();
        for (seed_index, got, rej) in results {
            if accepted.len() >= n_samples {
                break;
            }
            draws += 1;
            rejections.add(&rej);
            if let Some(a) = got {
                accepted.push((
                    a.point,
                    Provenance {
                        seed_index: Some(seed_index),
                        steps: a.steps,
                        base_score: a.score,
                    },
                ));
            }
        }
        start = end;
    }

    let produced = accepted.len();
    let mut set = SynthesizedSet::new(tag, train.n_features(), n_samples, accepted);
    set.rejections = rejections;
    set.score_calls = ctx.score_calls();
    if produced < n_samples {
        set.shortfall = Some(Shortfall {
            requested: n_samples,
            produced,
            draws,
        });
    }
    Ok(set)
}

/// Detector-aware hard anomalies: borderline seeds plus controlled
/// extrapolation along the policy's direction strategy. Returns fewer than
/// `n_samples` points only with a shortfall report.
pub fn generate_hard_anomalies(
    n_samples: usize,
    det: &FittedDetector,
    train: &Dataset,
    policy: &SynthesisPolicy,
) -> Result<SynthesizedSet, SynthesisError> {
    run_generator(n_samples, det, train, policy, None)
}

pub fn ablation_variant(
    ablation: Ablation,
    n_samples: usize,
    det: &FittedDetector,
    train: &Dataset,
    policy: &SynthesisPolicy,
) -> Result<SynthesizedSet, SynthesisError> {
    run_generator(n_samples, det, train, policy, Some(ablation))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::detectors::{DetectorHyperparams, DetectorKind};
    use ndarray::array;
    use rand_distr::Distribution;

    fn gaussian_train(n: usize, d: usize, seed: u64) -> Dataset {
        let mut rng = rng::stream(seed, 99);
        let x = Array2::from_shape_fn((n, d), |_| StandardNormal.sample(&mut rng));
        Dataset::unlabeled(x).unwrap()
    }

    fn fitted(kind: DetectorKind, train: &Dataset) -> FittedDetector {
        FittedDetector::fit(kind, train, &DetectorHyperparams::default().with_seed(5)).unwrap()
    }

    #[test]
    fn top_decile_of_ten_distinct_scores() {
        let scores: [f64; 10] = [0.1, 0.5, 0.3, 0.9, 0.2, 0.8, 0.4, 0.7, 0.6, 0.05];
        assert_eq!(borderline_indices(&scores, 90.0).unwrap(), vec![3]);
    }

    #[test]
    fn upper_half_of_ten_distinct_scores() {
        let scores: [f64; 10] = [0.1, 0.5, 0.3, 0.9, 0.2, 0.8, 0.4, 0.7, 0.6, 0.05];
        // oracle: sort descending, take the top five
        let mut order: Vec<usize> = (0..10).collect();
        order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
        let mut expected = order[..5].to_vec();
        expected.sort_unstable();
        assert_eq!(borderline_indices(&scores, 50.0).unwrap(), expected);
    }

    #[test]
    fn equal_scores_keep_every_index() {
        assert_eq!(borderline_indices(&[0.3; 6], 90.0).unwrap(), (0..6).collect::<Vec<_>>());
    }

    #[test]
    fn percentile_out_of_range() {
        assert!(matches!(borderline_indices(&[1.0], 0.0), Err(SynthesisError::Percentile(_))));
        assert!(matches!(borderline_indices(&[1.0], 100.0), Err(SynthesisError::Percentile(_))));
    }

    #[test]
    fn vacuous_constraints_accept_first_proposal() {
        let train = gaussian_train(80, 3, 1);
        let det = fitted(DetectorKind::IForest, &train);
        let mut policy = SynthesisPolicy::for_kind(DetectorKind::IForest);
        policy.score_band = (0.0, 1.0);
        policy.min_seed_distance = MinDistance::Absolute(0.0);
        let ctx = SynthesisContext::new(&det, &train, &policy, true).unwrap();
        let mut rej = RejectionCounts::default();
        let pool: Vec<usize> = (0..80).collect();
        let got = ctx
            .controlled_extrapolation(4, &pool, &policy, &mut rng::stream(0, 0), &mut rej)
            .unwrap();
        assert_eq!(got.steps, 1);
        assert_eq!(rej, RejectionCounts::default());
    }

    #[test]
    fn unreachable_constraint_with_one_step_fails() {
        let train = gaussian_train(80, 3, 1);
        let det = fitted(DetectorKind::IForest, &train);
        let mut policy = SynthesisPolicy::for_kind(DetectorKind::IForest);
        policy.max_steps = 1;
        policy.min_seed_distance = MinDistance::Absolute(1e6);
        let ctx = SynthesisContext::new(&det, &train, &policy, true).unwrap();
        let mut rej = RejectionCounts::default();
        let got = ctx.controlled_extrapolation(0, &[0], &policy, &mut rng::stream(0, 0), &mut rej);
        assert!(got.is_none());
        assert_eq!(rej.exhausted_draws, 1);
        assert_eq!(rej.too_close, 1);
    }

    #[test]
    fn zero_request_is_empty() {
        let train = gaussian_train(40, 2, 2);
        let det = fitted(DetectorKind::Ecod, &train);
        let set = generate_hard_anomalies(0, &det, &train, &SynthesisPolicy::for_kind(DetectorKind::Ecod)).unwrap();
        assert!(set.is_empty());
        assert!(set.shortfall.is_none());
        assert_eq!(set.dim(), 2);
    }

    #[test]
    fn generation_is_deterministic() {
        let train = gaussian_train(120, 4, 3);
        for kind in DetectorKind::ALL {
            let det = fitted(kind, &train);
            let policy = SynthesisPolicy::for_kind(kind).with_seed(11);
            let a = generate_hard_anomalies(12, &det, &train, &policy).unwrap();
            let b = generate_hard_anomalies(12, &det, &train, &policy).unwrap();
            assert_eq!(a, b, "{kind}");
        }
    }

    #[test]
    fn das_points_respect_constraints_and_provenance() {
        let train = gaussian_train(200, 3, 4);
        for kind in DetectorKind::ALL {
            let det = fitted(kind, &train);
            let policy = SynthesisPolicy::for_kind(kind).with_seed(2);
            let ctx = SynthesisContext::new(&det, &train, &policy, true).unwrap();
            let seeds = select_borderline_seeds(&det, &train, policy.seed_percentile).unwrap();
            let set = generate_hard_anomalies(20, &det, &train, &policy).unwrap();
            let (_, hi) = ctx.band();
            for (p, prov) in set.points.rows().into_iter().zip(&set.provenance) {
                assert!(ctx.nearest_train_distance(p) >= ctx.min_distance(), "{kind}");
                assert!(seeds.contains(&prov.seed_index.unwrap()), "{kind}");
                let s = det.score_row(p);
                assert_eq!(Some(s), prov.base_score);
                assert!(s <= hi.unwrap());
            }
        }
    }

    #[test]
    fn simple_variant_never_scores() {
        let train = gaussian_train(100, 3, 5);
        let det = fitted(DetectorKind::Pca, &train);
        let set = ablation_variant(Ablation::Simple, 10, &det, &train, &SynthesisPolicy::for_kind(DetectorKind::Pca)).unwrap();
        assert_eq!(set.score_calls, 0);
        assert!(set.provenance.iter().all(|p| p.base_score.is_none()));
        assert_eq!(set.generator, GeneratorTag::AblationSimple);
    }

    #[test]
    fn das_counts_score_calls() {
        let train = gaussian_train(100, 3, 5);
        let det = fitted(DetectorKind::Pca, &train);
        let set = generate_hard_anomalies(5, &det, &train, &SynthesisPolicy::for_kind(DetectorKind::Pca)).unwrap();
        assert!(set.score_calls >= 100);
    }

    #[test]
    fn generic_direction_ignores_detector_kind() {
        let train = gaussian_train(60, 4, 6);
        let policy = SynthesisPolicy::for_kind(DetectorKind::IForest);
        let dirs: Vec<Array1<f64>> = DetectorKind::ALL
            .iter()
            .map(|&k| {
                let det = fitted(k, &train);
                let ctx = SynthesisContext::new(&det, &train, &policy, true).unwrap();
                ctx.direction(DirectionStrategy::RandomUnit, 7, &[7, 8], &mut rng::stream(3, 3))
                    .unwrap()
            })
            .collect();
        assert!(dirs.windows(2).all(|w| w[0] == w[1]));
        assert!((dirs[0].dot(&dirs[0]) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn subspace_direction_stays_in_pca_span() {
        // rank-one data: the retained subspace is the single line y = 2x
        let x = Array2::from_shape_fn((50, 2), |(i, j)| {
            let t = i as f64 / 10.0;
            if j == 0 { t } else { 2.0 * t }
        });
        let train = Dataset::unlabeled(x).unwrap();
        let det = fitted(DetectorKind::Pca, &train);
        let policy = SynthesisPolicy::for_kind(DetectorKind::Pca);
        let ctx = SynthesisContext::new(&det, &train, &policy, true).unwrap();
        let u = ctx
            .direction(DirectionStrategy::PrincipalSubspace, 49, &[49], &mut rng::stream(0, 1))
            .unwrap();
        // both standardized coordinates move together along the data line
        assert!((u[0] - u[1]).abs() < 1e-9);
        assert!(u[0] > 0.0, "oriented away from the centroid");
        let p = ctx.step_point(train.row(49), &u, 3.0);
        assert!(det.score_row(p.view()) < 1e-12);
    }

    #[test]
    fn recombination_uses_training_values() {
        let train = Dataset::unlabeled(array![[0.0, 10.0], [1.0, 11.0], [2.0, 12.0], [3.0, 13.0]]).unwrap();
        let det = fitted(DetectorKind::Ecod, &train);
        let policy = SynthesisPolicy::for_kind(DetectorKind::Ecod);
        let ctx = SynthesisContext::new(&det, &train, &policy, true).unwrap();
        let mut rng = rng::stream(1, 1);
        for _ in 0..20 {
            let p = ctx.recombine(0, 0.5, &mut rng);
            let changed = (0..2).filter(|&j| p[j] != train.row(0)[j]).count();
            assert_eq!(changed, 1);
            for j in 0..2 {
                assert!(train.features().column(j).iter().any(|&v| v == p[j]));
            }
        }
    }
}
