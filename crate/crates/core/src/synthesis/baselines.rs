//! Detector-agnostic synthesis baselines: Gaussian noise around training
//! rows, uniform samples over an expanded bounding box, and SMOTE
//! interpolation. Point `k` uses stream `k` of the given seed.

use ndarray::{Array1, ArrayView1};
use rand::Rng;
use rand_distr::StandardNormal;

use super::{GeneratorTag, Provenance, SynthesisError, SynthesizedSet};
use crate::data::{Dataset, StandardizationParams};
use crate::rng;

/// Train row plus `N(0, (sigma_scale * std_j)^2)` noise per feature.
pub fn gaussian_noise_synthesis(
    train: &Dataset,
    n_samples: usize,
    sigma_scale: f64,
    seed: u64,
) -> Result<SynthesizedSet, SynthesisError> {
    if !(sigma_scale >= 0.0 && sigma_scale.is_finite()) {
        return Err(SynthesisError::Parameter {
            name: "sigma_scale",
            value: sigma_scale,
        });
    }
    let std = StandardizationParams::fit(train.features()).std;
    let n = train.n_rows();
    let rows = (0..n_samples)
        .map(|k| {
            let mut rng = rng::stream(seed, k as u64);
            let i = rng.random_range(0..n);
            let mut p = train.row(i).to_owned();
            for (j, v) in p.iter_mut().enumerate() {
                let z: f64 = rng.sample(StandardNormal);
                *v += sigma_scale * std[j] * z;
            }
            (
                p,
                Provenance {
                    seed_index: Some(i),
                    steps: 1,
                    base_score: None,
                },
            )
        })
        .collect();
    Ok(SynthesizedSet::new(GeneratorTag::Gaussian, train.n_features(), n_samples, rows))
}

/// Per-feature bounds `[min - e * range, max + e * range]`.
pub fn expanded_bounds(train: &Dataset, expansion: f64) -> Vec<(f64, f64)> {
    train
        .features()
        .columns()
        .into_iter()
        .map(|c| {
            let lo = c.iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = c.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let pad = expansion * (hi - lo);
            (lo - pad, hi + pad)
        })
        .collect()
}

/// Uniform samples over the expanded bounding box of the training set.
pub fn random_uniform_synthesis(
    train: &Dataset,
    n_samples: usize,
    expansion: f64,
    seed: u64,
) -> Result<SynthesizedSet, SynthesisError> {
    if !(expansion >= 0.0 && expansion.is_finite()) {
        return Err(SynthesisError::Parameter {
            name: "expansion",
            value: expansion,
        });
    }
    let bounds = expanded_bounds(train, expansion);
    let rows = (0..n_samples)
        .map(|k| {
            let mut rng = rng::stream(seed, k as u64);
            let p: Array1<f64> = bounds
                .iter()
                .map(|&(lo, hi)| if hi > lo { rng.random_range(lo..=hi) } else { lo })
                .collect();
            (
                p,
                Provenance {
                    seed_index: None,
                    steps: 1,
                    base_score: None,
                },
            )
        })
        .collect();
    Ok(SynthesizedSet::new(
        GeneratorTag::RandomUniform,
        train.n_features(),
        n_samples,
        rows,
    ))
}

/// `a + lambda * (b - a)`.
pub fn smote_interpolate(a: ArrayView1<'_, f64>, b: ArrayView1<'_, f64>, lambda: f64) -> Array1<f64> {
    a.iter().zip(b.iter()).map(|(x, y)| x + lambda * (y - x)).collect()
}

fn k_nearest(train: &Dataset, i: usize, k: usize) -> Vec<usize> {
    let a = train.row(i);
    let mut d: Vec<(f64, usize)> = (0..train.n_rows())
        .filter(|&j| j != i)
        .map(|j| {
            let dist: f64 = a.iter().zip(train.row(j).iter()).map(|(x, y)| (x - y).powi(2)).sum();
            (dist, j)
        })
        .collect();
    d.sort_by(|x, y| x.0.total_cmp(&y.0).then(x.1.cmp(&y.1)));
    d.truncate(k);
    d.into_iter().map(|(_, j)| j).collect()
}

/// SMOTE over the training rows: a random row, one of its `k_neighbors`
/// Euclidean nearest neighbours, and a uniform interpolation weight.
pub fn smote_synthesis(
    train: &Dataset,
    n_samples: usize,
    k_neighbors: usize,
    seed: u64,
) -> Result<SynthesizedSet, SynthesisError> {
    let n = train.n_rows();
    if k_neighbors == 0 || n <= k_neighbors {
        return Err(SynthesisError::TooFewRows {
            rows: n,
            k: k_neighbors,
        });
    }
    let mut neighbours: Vec<Option<Vec<usize>>> = vec![None; n];
    let mut rows = Vec::with_capacity(n_samples);
    for k in 0..n_samples {
        let mut rng = rng::stream(seed, k as u64);
        let i = rng.random_range(0..n);
        let nn = neighbours[i].get_or_insert_with(|| k_nearest(train, i, k_neighbors));
        let b = nn[rng.random_range(0..nn.len())];
        let lambda: f64 = rng.random();
        rows.push((
            smote_interpolate(train.row(i), train.row(b), lambda),
            Provenance {
                seed_index: Some(i),
                steps: 1,
                base_score: None,
            },
        ));
    }
    Ok(SynthesizedSet::new(GeneratorTag::Smote, train.n_features(), n_samples, rows))
}
