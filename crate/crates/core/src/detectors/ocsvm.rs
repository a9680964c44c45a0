//! One-class SVM (nu formulation) with an RBF kernel.
//!
//! Dual: minimize `1/2 a' K a` subject to `0 <= a_i <= 1/(nu n)` and
//! `sum a_i = 1`, solved by pairwise coordinate descent on the maximal
//! violating pair. The anomaly score is `rho - sum_i a_i k(x_i, x)`, positive
//! outside the learned boundary.

use ndarray::{Array2, ArrayView1, ArrayView2};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::StandardizationParams;
use crate::rng;

#[derive(Debug, Error, PartialEq)]
pub enum OcsvmError {
    #[error("nu = {0} must lie in (0, 1]")]
    BadNu(f64),
    #[error("rbf gamma = {0} must be positive and finite")]
    BadGamma(f64),
    #[error("every training feature is constant; the default rbf gamma is undefined")]
    ZeroVariance,
    #[error("dual solver did not converge after {iterations} updates (max KKT violation {max_violation:.3e})")]
    NotConverged {
        iterations: usize,
        max_violation: f64,
    },
    #[error("empty kernel")]
    Empty,
}

/// Symmetric positive semi-definite kernel over `n` training points.
pub trait KernelMatrix {
    fn size(&self) -> usize;
    fn entry(&self, i: usize, j: usize) -> f64;
    fn column_into(&self, i: usize, out: &mut [f64]) {
        for (j, o) in out.iter_mut().enumerate() {
            *o = self.entry(i, j);
        }
    }
}

impl KernelMatrix for Array2<f64> {
    fn size(&self) -> usize {
        self.nrows()
    }

    fn entry(&self, i: usize, j: usize) -> f64 {
        self[[i, j]]
    }

    fn column_into(&self, i: usize, out: &mut [f64]) {
        for (o, v) in out.iter_mut().zip(self.column(i)) {
            *o = *v;
        }
    }
}

pub fn rbf(a: ArrayView1<'_, f64>, b: ArrayView1<'_, f64>, gamma: f64) -> f64 {
    let d2: f64 = a.iter().zip(b.iter()).map(|(x, y)| (x - y).powi(2)).sum();
    (-gamma * d2).exp()
}

/// Dense RBF Gram matrix.
pub fn rbf_gram(x: ArrayView2<'_, f64>, gamma: f64) -> Array2<f64> {
    let n = x.nrows();
    let mut k = Array2::zeros((n, n));
    for i in 0..n {
        k[[i, i]] = 1.0;
        for j in 0..i {
            let v = rbf(x.row(i), x.row(j), gamma);
            k[[i, j]] = v;
            k[[j, i]] = v;
        }
    }
    k
}

/// Kernel rows computed on demand, for training sets too large to hold a
/// dense Gram matrix.
pub struct LazyRbf<'a> {
    pub x: ArrayView2<'a, f64>,
    pub gamma: f64,
}

impl KernelMatrix for LazyRbf<'_> {
    fn size(&self) -> usize {
        self.x.nrows()
    }

    fn entry(&self, i: usize, j: usize) -> f64 {
        rbf(self.x.row(i), self.x.row(j), self.gamma)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DualSolution {
    pub alpha: Vec<f64>,
    pub rho: f64,
    pub iterations: usize,
    pub max_violation: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    pub tolerance: f64,
    /// Update budget in sweeps of `n` pair updates.
    pub max_sweeps: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            tolerance: 1e-4,
            max_sweeps: 10,
        }
    }
}

/// Solve the nu-one-class dual. The seed fixes the order in which the
/// initial feasible point fills coordinates up to the box bound.
pub fn ocsvm_fit_dual<K: KernelMatrix + ?Sized>(
    k: &K,
    nu: f64,
    seed: u64,
    opts: SolverOptions,
) -> Result<DualSolution, OcsvmError> {
    if !(nu > 0.0 && nu <= 1.0) {
        return Err(OcsvmError::BadNu(nu));
    }
    let n = k.size();
    if n == 0 {
        return Err(OcsvmError::Empty);
    }
    let c = 1.0 / (nu * n as f64);

    let mut order: Vec<usize> = (0..n).collect();
    rng::shuffle(&mut order, &mut rng::stream(seed, 0));
    let mut alpha = vec![0.0; n];
    let mut remaining = 1.0f64;
    for &i in &order {
        if remaining <= 0.0 {
            break;
        }
        let a = if remaining >= c { c } else { remaining };
        alpha[i] = a;
        remaining -= a;
    }

    let mut grad = vec![0.0; n];
    let mut col = vec![0.0; n];
    for i in 0..n {
        if alpha[i] > 0.0 {
            k.column_into(i, &mut col);
            for (g, kv) in grad.iter_mut().zip(&col) {
                *g += alpha[i] * kv;
            }
        }
    }

    let max_iter = opts.max_sweeps.saturating_mul(n).saturating_mul(n).max(1);
    let mut col_j = vec![0.0; n];
    let mut iterations = 0;
    let mut violation;
    loop {
        // i: coordinate that can grow with the smallest gradient;
        // j: coordinate that can shrink with the largest gradient.
        let mut up: Option<usize> = None;
        let mut down: Option<usize> = None;
        for t in 0..n {
            if alpha[t] < c && up.is_none_or(|u| grad[t] < grad[u]) {
                up = Some(t);
            }
            if alpha[t] > 0.0 && down.is_none_or(|d| grad[t] > grad[d]) {
                down = Some(t);
            }
        }
        violation = match (up, down) {
            (Some(i), Some(j)) => grad[j] - grad[i],
            _ => 0.0,
        };
        if violation < opts.tolerance {
            break;
        }
        if iterations >= max_iter {
            return Err(OcsvmError::NotConverged {
                iterations,
                max_violation: violation,
            });
        }
        let (i, j) = (up.expect("up"), down.expect("down"));
        k.column_into(i, &mut col);
        k.column_into(j, &mut col_j);
        let curvature = (col[i] + col_j[j] - 2.0 * col[j]).max(1e-12);
        let mut delta = violation / curvature;
        let room_i = c - alpha[i];
        let room_j = alpha[j];
        if delta >= room_i {
            delta = room_i;
        }
        if delta >= room_j {
            delta = room_j;
        }
        alpha[i] = if delta == room_i { c } else { alpha[i] + delta };
        alpha[j] = if delta == room_j { 0.0 } else { alpha[j] - delta };
        for t in 0..n {
            grad[t] += delta * (col[t] - col_j[t]);
        }
        iterations += 1;
    }

    let free: Vec<f64> = (0..n)
        .filter(|&t| alpha[t] > 0.0 && alpha[t] < c)
        .map(|t| grad[t])
        .collect();
    let rho = if free.is_empty() {
        // rho is bracketed by the bound coordinates
        let lb = (0..n)
            .filter(|&t| alpha[t] >= c)
            .map(|t| grad[t])
            .fold(f64::NEG_INFINITY, f64::max);
        let ub = (0..n)
            .filter(|&t| alpha[t] <= 0.0)
            .map(|t| grad[t])
            .fold(f64::INFINITY, f64::min);
        match (lb.is_finite(), ub.is_finite()) {
            (true, true) => 0.5 * (lb + ub),
            (true, false) => lb,
            (false, true) => ub,
            (false, false) => 0.0,
        }
    } else {
        free.iter().sum::<f64>() / free.len() as f64
    };

    Ok(DualSolution {
        alpha,
        rho,
        iterations,
        max_violation: violation,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OcsvmModel {
    pub scaler: StandardizationParams,
    pub gamma: f64,
    pub nu: f64,
    /// Standardized support vectors, one per row.
    pub support_vectors: Array2<f64>,
    pub dual_coef: Vec<f64>,
    pub rho: f64,
}

/// Dense Gram matrices are used up to this many training rows.
const DENSE_KERNEL_LIMIT: usize = 4000;

impl OcsvmModel {
    pub fn fit(
        train: ArrayView2<'_, f64>,
        nu: f64,
        gamma: Option<f64>,
        seed: u64,
        opts: SolverOptions,
    ) -> Result<Self, OcsvmError> {
        let scaler = StandardizationParams::fit(train);
        let z = scaler.transform(train).expect("fit dimension");
        let gamma = match gamma {
            Some(g) => g,
            None => {
                let d = z.ncols() as f64;
                let n = z.nrows() as f64;
                let mean_var = z
                    .columns()
                    .into_iter()
                    .map(|c| {
                        let m = c.sum() / n;
                        c.iter().map(|v| (v - m).powi(2)).sum::<f64>() / n
                    })
                    .sum::<f64>()
                    / d;
                if mean_var <= 0.0 {
                    return Err(OcsvmError::ZeroVariance);
                }
                1.0 / (d * mean_var)
            }
        };
        if !(gamma > 0.0 && gamma.is_finite()) {
            return Err(OcsvmError::BadGamma(gamma));
        }
        let sol = if z.nrows() <= DENSE_KERNEL_LIMIT {
            ocsvm_fit_dual(&rbf_gram(z.view(), gamma), nu, seed, opts)?
        } else {
            ocsvm_fit_dual(&LazyRbf { x: z.view(), gamma }, nu, seed, opts)?
        };
        let sv: Vec<usize> = (0..sol.alpha.len()).filter(|&i| sol.alpha[i] > 0.0).collect();
        Ok(Self {
            support_vectors: z.select(ndarray::Axis(0), &sv),
            dual_coef: sv.iter().map(|&i| sol.alpha[i]).collect(),
            rho: sol.rho,
            scaler,
            gamma,
            nu,
        })
    }

    pub fn decision_value(&self, z: ArrayView1<'_, f64>) -> f64 {
        self.support_vectors
            .rows()
            .into_iter()
            .zip(&self.dual_coef)
            .map(|(sv, a)| a * rbf(sv, z, self.gamma))
            .sum()
    }

    pub fn score_row(&self, x: ArrayView1<'_, f64>) -> f64 {
        let z = self.scaler.transform_row(x);
        self.rho - self.decision_value(z.view())
    }
}
