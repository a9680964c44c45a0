//! Empirical-CDF outlier scoring.
//!
//! Per feature `j`, `F_j(x) = max(#{train <= x}, 1) / (n + 1)`. The feature
//! contributes `max(-ln F_j(x), -ln(1 - F_j(x)))` and the score is the sum
//! over features. Only ranks of the training values enter, so any strictly
//! increasing per-feature transform applied to train and query alike leaves
//! scores unchanged.

use ndarray::{ArrayView1, ArrayView2};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EcodModel {
    /// Sorted training values, one vector per feature.
    pub sorted_columns: Vec<Vec<f64>>,
}

impl EcodModel {
    pub fn fit(train: ArrayView2<'_, f64>) -> Self {
        let sorted_columns = train
            .columns()
            .into_iter()
            .map(|c| {
                let mut v = c.to_vec();
                v.sort_by(f64::total_cmp);
                v
            })
            .collect();
        Self { sorted_columns }
    }

    pub fn ecdf(&self, j: usize, x: f64) -> f64 {
        let col = &self.sorted_columns[j];
        let count = col.partition_point(|&v| v <= x).max(1);
        count as f64 / (col.len() + 1) as f64
    }

    pub fn feature_score(&self, j: usize, x: f64) -> f64 {
        let f = self.ecdf(j, x);
        (-f.ln()).max(-(1.0 - f).ln())
    }

    pub fn score_row(&self, x: ArrayView1<'_, f64>) -> f64 {
        x.iter()
            .enumerate()
            .map(|(j, &v)| self.feature_score(j, v))
            .sum()
    }
}
