use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::detectors::DetectorKind;

/// How a borderline seed is displaced during controlled extrapolation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DirectionStrategy {
    /// Away from the training centroid through the seed.
    CentroidOutward,
    /// Random direction inside the retained principal subspace, oriented
    /// away from the centroid.
    PrincipalSubspace,
    /// Replace a random subset of the seed's coordinates with values taken
    /// from other training rows; no step is taken.
    CoordinateRecombination,
    /// Toward the nearest other seed, i.e. along the boundary.
    BorderlinePeer,
    /// Uniformly random direction; ignores the detector.
    RandomUnit,
}

impl DirectionStrategy {
    pub const ALL: [DirectionStrategy; 5] = [
        Self::CentroidOutward,
        Self::PrincipalSubspace,
        Self::CoordinateRecombination,
        Self::BorderlinePeer,
        Self::RandomUnit,
    ];

    /// The detector-specific strategy.
    pub fn for_kind(kind: DetectorKind) -> Self {
        match kind {
            DetectorKind::IForest => Self::CentroidOutward,
            DetectorKind::Pca => Self::PrincipalSubspace,
            DetectorKind::Ecod => Self::CoordinateRecombination,
            DetectorKind::Ocsvm => Self::BorderlinePeer,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Self::CentroidOutward => "centroid_outward",
            Self::PrincipalSubspace => "principal_subspace",
            Self::CoordinateRecombination => "coordinate_recombination",
            Self::BorderlinePeer => "borderline_peer",
            Self::RandomUnit => "random_unit",
        }
    }
}

impl fmt::Display for DirectionStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for DirectionStrategy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|d| d.as_str() == s.trim())
            .ok_or_else(|| {
                let names: Vec<&str> = Self::ALL.iter().map(|d| d.as_str()).collect();
                format!("one of {}", names.join(", "))
            })
    }
}

/// Minimum distance from every training row a synthesized point must keep,
/// measured in standardized feature space.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MinDistance {
    /// Multiple of the mean nearest-neighbour distance within the training set.
    NnMultiple(f64),
    Absolute(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthesisPolicy {
    /// Seeds are training rows scoring at or above this percentile.
    pub seed_percentile: f64,
    /// First step length, in units of per-feature standard deviation.
    pub step_init: f64,
    pub step_growth: f64,
    pub max_steps: usize,
    /// Quantiles of the training scores bounding an accepted candidate's
    /// score. A lower quantile of 0 or upper quantile of 1 leaves that side
    /// open.
    pub score_band: (f64, f64),
    pub min_seed_distance: MinDistance,
    pub direction: DirectionStrategy,
    /// Fraction of coordinates replaced by coordinate recombination.
    pub swap_fraction: f64,
    /// Seed draws allowed per requested point before giving up.
    pub draw_budget: usize,
    pub seed: u64,
}

impl Default for SynthesisPolicy {
    fn default() -> Self {
        Self::for_kind(DetectorKind::IForest)
    }
}

/// A policy field outside its allowed range.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyViolation {
    pub key: &'static str,
    pub value: String,
    pub allowed: &'static str,
}

impl fmt::Display for PolicyViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} = {} is out of range (allowed: {})", self.key, self.value, self.allowed)
    }
}

impl SynthesisPolicy {
    pub fn for_kind(kind: DetectorKind) -> Self {
        Self {
            seed_percentile: 90.0,
            step_init: 0.5,
            step_growth: 1.5,
            max_steps: 20,
            score_band: (0.70, 0.999),
            min_seed_distance: MinDistance::NnMultiple(1.0),
            direction: DirectionStrategy::for_kind(kind),
            swap_fraction: 0.5,
            draw_budget: 10,
            seed: 0,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<(), PolicyViolation> {
        fn fail(key: &'static str, value: impl fmt::Display, allowed: &'static str) -> Result<(), PolicyViolation> {
            Err(PolicyViolation {
                key,
                value: value.to_string(),
                allowed,
            })
        }
        let p = self.seed_percentile;
        if !(p > 0.0 && p < 100.0) {
            return fail("seed_percentile", p, "(0, 100)");
        }
        if !(self.step_init > 0.0 && self.step_init.is_finite()) {
            return fail("step_init", self.step_init, "> 0");
        }
        if !(self.step_growth > 1.0 && self.step_growth.is_finite()) {
            return fail("step_growth", self.step_growth, "> 1");
        }
        if self.max_steps < 1 {
            return fail("max_steps", self.max_steps, ">= 1");
        }
        let (lo, hi) = self.score_band;
        if !(0.0..=1.0).contains(&lo) {
            return fail("score_band_lo", lo, "[0, 1] and below score_band_hi");
        }
        if !((0.0..=1.0).contains(&hi) && lo < hi) {
            return fail("score_band_hi", hi, "[0, 1] and above score_band_lo");
        }
        match self.min_seed_distance {
            MinDistance::NnMultiple(f) if !(f >= 0.0 && f.is_finite()) => {
                return fail("min_seed_distance_factor", f, ">= 0")
            }
            MinDistance::Absolute(d) if !(d >= 0.0 && d.is_finite()) => {
                return fail("min_seed_distance", d, ">= 0")
            }
            _ => {}
        }
        if !(self.swap_fraction > 0.0 && self.swap_fraction <= 1.0) {
            return fail("swap_fraction", self.swap_fraction, "(0, 1]");
        }
        if self.draw_budget < 1 {
            return fail("draw_budget", self.draw_budget, ">= 1");
        }
        Ok(())
    }
}
