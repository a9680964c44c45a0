//! PCA reconstruction-error detector.

use nalgebra::{DMatrix, SymmetricEigen};
use ndarray::{Array2, ArrayView1, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::data::StandardizationParams;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PcaModel {
    /// Centering (and optionally scaling) applied before projection.
    pub scaler: StandardizationParams,
    /// Retained principal axes, one per row, in descending eigenvalue order.
    pub components: Array2<f64>,
    /// Eigenvalues of the training covariance, descending (all of them).
    pub eigenvalues: Vec<f64>,
}

impl PcaModel {
    /// Fit on `train`. With `standardize == false` only centering is applied.
    pub fn fit(train: ArrayView2<'_, f64>, variance_retained: f64, standardize: bool) -> Self {
        let mut scaler = StandardizationParams::fit(train);
        if !standardize {
            scaler.std = vec![1.0; scaler.dim()];
        }
        let z = scaler.transform(train).expect("fit dimension");
        let (n, d) = z.dim();
        let cov = z.t().dot(&z) / n as f64;
        let eig = SymmetricEigen::new(DMatrix::from_fn(d, d, |i, j| cov[[i, j]]));

        let mut order: Vec<usize> = (0..d).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));
        let eigenvalues: Vec<f64> = order.iter().map(|&k| eig.eigenvalues[k].max(0.0)).collect();

        let total: f64 = eigenvalues.iter().sum();
        let k = if total > 0.0 {
            let target = variance_retained * total * (1.0 - 1e-12);
            let mut cum = 0.0;
            let mut k = 0;
            for &ev in &eigenvalues {
                if cum >= target {
                    break;
                }
                cum += ev;
                k += 1;
            }
            k
        } else {
            0
        };
        let components = Array2::from_shape_fn((k, d), |(r, c)| eig.eigenvectors[(c, order[r])]);
        Self {
            scaler,
            components,
            eigenvalues,
        }
    }

    pub fn n_components(&self) -> usize {
        self.components.nrows()
    }

    /// Squared distance between the transformed point and its projection
    /// onto the retained subspace.
    pub fn score_row(&self, x: ArrayView1<'_, f64>) -> f64 {
        let z = self.scaler.transform_row(x);
        let coords = self.components.dot(&z);
        let recon = self.components.t().dot(&coords);
        z.iter().zip(recon.iter()).map(|(a, b)| (a - b).powi(2)).sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn sample() -> Array2<f64> {
        Array2::from_shape_fn((40, 3), |(i, j)| {
            let t = i as f64 * 0.37;
            match j {
                0 => t.sin() * 3.0 + 0.1 * (i % 3) as f64,
                1 => t.cos() + 0.05 * (i % 5) as f64,
                _ => 0.5 * t.sin() - 0.2 * t.cos() + 0.03 * (i % 7) as f64,
            }
        })
    }

    #[test]
    fn full_retention_keeps_every_axis() {
        let m = PcaModel::fit(sample().view(), 1.0, true);
        assert_eq!(m.n_components(), 3);
        for row in sample().rows() {
            assert!(m.score_row(row) < 1e-20);
        }
    }

    #[test]
    fn in_subspace_point_scores_zero() {
        let m = PcaModel::fit(sample().view(), 0.6, false);
        assert!(m.n_components() >= 1 && m.n_components() < 3);
        let axis = m.components.row(0);
        let x: Vec<f64> = (0..3).map(|j| m.scaler.mean[j] + 2.5 * axis[j]).collect();
        assert!(m.score_row(ndarray::ArrayView1::from(&x)) < 1e-24);
    }

    #[test]
    fn components_are_orthonormal() {
        let m = PcaModel::fit(sample().view(), 0.99, true);
        let g = m.components.dot(&m.components.t());
        for i in 0..g.nrows() {
            for j in 0..g.ncols() {
                let e = if i == j { 1.0 } else { 0.0 };
                assert!((g[[i, j]] - e).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn constant_data_has_no_components() {
        let m = PcaModel::fit(array![[1.0, 2.0], [1.0, 2.0]].view(), 0.9, true);
        assert_eq!(m.n_components(), 0);
        assert_eq!(m.score_row(array![1.0, 2.0].view()), 0.0);
    }
}
