//! Planted benchmarks: synthetic datasets with a known anomaly mechanism.
//!
//! Normal data is a mixture of two correlated Gaussian clusters, each living
//! near a random low-dimensional subspace. Anomalies are one of:
//! * fringe: draws whose latent coordinates are scaled past the cluster edge,
//!   so they stay on the cluster's subspace,
//! * local: points on the cluster whose residual off the subspace is inflated
//!   (the correlation structure breaks while marginals stay typical),
//! * clustered: a small tight group sitting beside one cluster.

use std::fmt;
use std::str::FromStr;

use ndarray::{Array1, Array2};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::data::Dataset;
use crate::rng::{self, DasRng};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum AnomalyType {
    Fringe,
    Local,
    Clustered,
}

impl AnomalyType {
    pub const ALL: [AnomalyType; 3] = [Self::Fringe, Self::Local, Self::Clustered];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Fringe => "fringe",
            Self::Local => "local",
            Self::Clustered => "clustered",
        }
    }
}

impl fmt::Display for AnomalyType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for AnomalyType {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|a| a.as_str() == s)
            .ok_or_else(|| format!("unknown anomaly type {s:?}"))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlantedSpec {
    pub anomaly: AnomalyType,
    pub n_features: usize,
    pub n_normal: usize,
    pub anomaly_fraction: f64,
    pub seed: u64,
    /// Fringe anomalies scale the latent coordinates of a cluster draw by a
    /// factor drawn uniformly from this range; the off-subspace noise is
    /// left unscaled.
    pub fringe_scale: (f64, f64),
    /// Local anomalies multiply the off-subspace noise by this factor.
    pub local_noise_factor: f64,
    /// Latent-space distance of the anomaly cluster from its host cluster.
    pub cluster_offset: f64,
    /// Distance between the two cluster means.
    pub separation: f64,
    /// Isotropic noise around each cluster's subspace.
    pub noise_std: f64,
}

impl PlantedSpec {
    pub fn new(anomaly: AnomalyType, n_features: usize) -> Self {
        Self {
            anomaly,
            n_features,
            n_normal: 1000,
            anomaly_fraction: 0.05,
            seed: 7,
            fringe_scale: (1.8, 2.6),
            local_noise_factor: 4.0,
            cluster_offset: 3.5,
            separation: 7.0,
            noise_std: 0.3,
        }
    }

    /// `<anomaly>_d<dims>`, e.g. `fringe_d6`.
    pub fn name(&self) -> String {
        format!("{}_d{}", self.anomaly, self.n_features)
    }
}

/// Dimensionalities of the standard suite.
pub const SUITE_DIMS: [usize; 2] = [6, 16];

/// The six planted datasets: every anomaly type at both dimensionalities.
pub fn suite_specs() -> Vec<PlantedSpec> {
    AnomalyType::ALL
        .into_iter()
        .flat_map(|a| SUITE_DIMS.into_iter().map(move |d| PlantedSpec::new(a, d)))
        .collect()
}

/// Resolve a suite dataset by name.
pub fn suite_spec(name: &str) -> Option<PlantedSpec> {
    suite_specs().into_iter().find(|s| s.name() == name)
}

struct Cluster {
    mean: Array1<f64>,
    /// d x r loading matrix.
    loading: Array2<f64>,
}

impl Cluster {
    fn random(d: usize, r: usize, mean: Array1<f64>, rng: &mut DasRng) -> Self {
        let scale = 1.0 / (r as f64).sqrt();
        let loading = Array2::from_shape_fn((d, r), |_| scale * rng.sample::<f64, _>(StandardNormal));
        Self { mean, loading }
    }

    fn sample(&self, latent_scale: f64, noise_std: f64, rng: &mut DasRng) -> Array1<f64> {
        let r = self.loading.ncols();
        let z: Array1<f64> = (0..r).map(|_| latent_scale * rng.sample::<f64, _>(StandardNormal)).collect();
        let mut x = &self.mean + &self.loading.dot(&z);
        x.mapv_inplace(|v| v + noise_std * rng.sample::<f64, _>(StandardNormal));
        x
    }
}

fn random_unit(dim: usize, rng: &mut DasRng) -> Array1<f64> {
    loop {
        let v: Array1<f64> = (0..dim).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
        let n = v.dot(&v).sqrt();
        if n > 1e-9 {
            return v / n;
        }
    }
}

/// Generate a labeled planted dataset. Rows are normals first, then anomalies.
pub fn planted_dataset(spec: &PlantedSpec) -> Dataset {
    let d = spec.n_features;
    let r = (d / 3).max(2).min(d);
    let mut rng = rng::stream(spec.seed, d as u64);
    let c0 = Cluster::random(d, r, Array1::zeros(d), &mut rng);
    let c1 = Cluster::random(d, r, spec.separation * random_unit(d, &mut rng), &mut rng);
    let clusters = [c0, c1];
    let pick = |rng: &mut DasRng| usize::from(rng.random::<f64>() >= 0.6);

    let n_anom = ((spec.n_normal as f64 * spec.anomaly_fraction).round() as usize).max(1);
    let mut rows: Vec<Array1<f64>> = (0..spec.n_normal)
        .map(|_| clusters[pick(&mut rng)].sample(1.0, spec.noise_std, &mut rng))
        .collect();

    let mut arng = rng::stream(spec.seed, 1000 + spec.anomaly as u64);
    match spec.anomaly {
        AnomalyType::Fringe => {
            for _ in 0..n_anom {
                let c = &clusters[pick(&mut arng)];
                let s = arng.random_range(spec.fringe_scale.0..spec.fringe_scale.1);
                rows.push(c.sample(s, spec.noise_std, &mut arng));
            }
        }
        AnomalyType::Local => {
            for _ in 0..n_anom {
                let c = &clusters[pick(&mut arng)];
                rows.push(c.sample(1.0, spec.local_noise_factor * spec.noise_std, &mut arng));
            }
        }
        AnomalyType::Clustered => {
            let c = &clusters[0];
            let u = random_unit(r, &mut arng);
            let center = &c.mean + &(c.loading.dot(&u) * spec.cluster_offset) + &(random_unit(d, &mut arng) * 1.5);
            for _ in 0..n_anom {
                let jitter: Array1<f64> = (0..d).map(|_| 0.25 * arng.sample::<f64, _>(StandardNormal)).collect();
                rows.push(&center + &jitter);
            }
        }
    }

    let n = rows.len();
    let mut x = Array2::zeros((n, d));
    for (i, row) in rows.iter().enumerate() {
        x.row_mut(i).assign(row);
    }
    let labels: Vec<u8> = (0..n).map(|i| u8::from(i >= spec.n_normal)).collect();
    Dataset::new(x, Some(labels)).expect("planted data is finite")
}

/// One spherical Gaussian cluster plus a single outlier at distance `10`
/// (ten standard deviations) along a random direction; the outlier is the
/// last row.
pub fn single_outlier_dataset(n_normal: usize, n_features: usize, seed: u64) -> Dataset {
    let mut rng = rng::stream(seed, 0);
    let mut x = Array2::from_shape_fn((n_normal + 1, n_features), |_| rng.sample::<f64, _>(StandardNormal));
    let u = random_unit(n_features, &mut rng);
    x.row_mut(n_normal).assign(&(u * 10.0));
    let mut labels = vec![0u8; n_normal + 1];
    labels[n_normal] = 1;
    Dataset::new(x, Some(labels)).expect("finite")
}
