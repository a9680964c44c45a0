//! Ranking metrics and the benchmark aggregation statistics.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum StatsError {
    #[error("metrics need both classes: {n_pos} positives, {n_neg} negatives")]
    SingleClass { n_pos: usize, n_neg: usize },
    #[error("score and label vectors differ in length ({scores} vs {labels})")]
    LengthMismatch { scores: usize, labels: usize },
    #[error("t-test needs at least 2 observations, found {0}")]
    TooFewObservations(usize),
    #[error("non-finite value in input")]
    NonFinite,
    #[error("nothing to aggregate")]
    Empty,
}

fn check(scores: &[f64], labels: &[u8]) -> Result<(usize, usize), StatsError> {
    if scores.len() != labels.len() {
        return Err(StatsError::LengthMismatch {
            scores: scores.len(),
            labels: labels.len(),
        });
    }
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(StatsError::NonFinite);
    }
    let n_pos = labels.iter().filter(|&&l| l == 1).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(StatsError::SingleClass { n_pos, n_neg });
    }
    Ok((n_pos, n_neg))
}

/// Indices sorted by descending score, ties in index order.
fn descending_order(scores: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    idx
}

/// Area under the ROC curve as the Mann–Whitney statistic with midranks,
/// so each tied positive/negative pair counts one half.
pub fn auc_roc(scores: &[f64], labels: &[u8]) -> Result<f64, StatsError> {
    let (n_pos, n_neg) = check(scores, labels)?;
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut pos_rank_sum = 0.0;
    let mut start = 0;
    while start < idx.len() {
        let mut end = start + 1;
        while end < idx.len() && scores[idx[end]] == scores[idx[start]] {
            end += 1;
        }
        // ranks start+1 ..= end share their mean
        let mid_rank = (start + 1 + end) as f64 / 2.0;
        let pos_in_group = idx[start..end].iter().filter(|&&i| labels[i] == 1).count();
        pos_rank_sum += mid_rank * pos_in_group as f64;
        start = end;
    }
    let u = pos_rank_sum - (n_pos * (n_pos + 1)) as f64 / 2.0;
    Ok(u / (n_pos as f64 * n_neg as f64))
}

/// Average precision. Tied scores form one cut: precision is taken after the
/// whole tie group and credited to every positive in it.
pub fn auc_pr(scores: &[f64], labels: &[u8]) -> Result<f64, StatsError> {
    let (n_pos, _) = check(scores, labels)?;
    let idx = descending_order(scores);
    let mut tp = 0usize;
    let mut seen = 0usize;
    let mut total = 0.0;
    let mut start = 0;
    while start < idx.len() {
        let mut end = start + 1;
        while end < idx.len() && scores[idx[end]] == scores[idx[start]] {
            end += 1;
        }
        let pos_in_group = idx[start..end].iter().filter(|&&i| labels[i] == 1).count();
        tp += pos_in_group;
        seen += end - start;
        if pos_in_group > 0 {
            total += pos_in_group as f64 * (tp as f64 / seen as f64);
        }
        start = end;
    }
    Ok(total / n_pos as f64)
}

/// Linearly interpolated quantile (`q` in [0, 1]) of an ascending slice.
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    assert!(!sorted.is_empty(), "quantile of an empty sample");
    let pos = q.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    if frac == 0.0 {
        sorted[lo]
    } else {
        sorted[lo] + frac * (sorted[hi] - sorted[lo])
    }
}

/// Quantile of an unsorted sample.
pub fn quantile(values: &[f64], q: f64) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    quantile_sorted(&v, q)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricResult {
    pub auc_roc: f64,
    pub auc_pr: f64,
    pub n_pos: usize,
    pub n_neg: usize,
}

pub fn evaluate(scores: &[f64], labels: &[u8]) -> Result<MetricResult, StatsError> {
    let (n_pos, n_neg) = check(scores, labels)?;
    Ok(MetricResult {
        auc_roc: auc_roc(scores, labels)?,
        auc_pr: auc_pr(scores, labels)?,
        n_pos,
        n_neg,
    })
}

/// Natural log of the gamma function (Lanczos, g = 7, 9 terms).
pub fn ln_gamma(x: f64) -> f64 {
    const COEF: [f64; 9] = [
        0.999_999_999_999_809_9,
        676.520_368_121_885_1,
        -1_259.139_216_722_402_8,
        771.323_428_777_653_1,
        -176.615_029_162_140_6,
        12.507_343_278_686_905,
        -0.138_571_095_265_720_12,
        9.984_369_578_019_572e-6,
        1.505_632_735_149_311_6e-7,
    ];
    if x < 0.5 {
        // reflection
        let pi = std::f64::consts::PI;
        return (pi / (pi * x).sin()).ln() - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut a = COEF[0];
    let t = x + 7.5;
    for (i, c) in COEF.iter().enumerate().skip(1) {
        a += c / (x + i as f64);
    }
    0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + a.ln()
}

const BETA_CF_TOLERANCE: f64 = 1e-10;
const BETA_CF_MAX_TERMS: usize = 500;

/// Continued fraction for the incomplete beta function (modified Lentz).
fn beta_continued_fraction(a: f64, b: f64, x: f64) -> f64 {
    const TINY: f64 = 1e-300;
    let qab = a + b;
    let qap = a + 1.0;
    let qam = a - 1.0;
    let mut c = 1.0;
    let mut d = 1.0 - qab * x / qap;
    if d.abs() < TINY {
        d = TINY;
    }
    d = 1.0 / d;
    let mut h = d;
    for m in 1..=BETA_CF_MAX_TERMS {
        let m = m as f64;
        let m2 = 2.0 * m;
        let aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        h *= d * c;
        let aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let del = d * c;
        h *= del;
        if (del - 1.0).abs() < BETA_CF_TOLERANCE {
            break;
        }
    }
    h
}

/// Regularized incomplete beta `I_x(a, b)`.
pub fn regularized_incomplete_beta(a: f64, b: f64, x: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if x >= 1.0 {
        return 1.0;
    }
    let ln_front = ln_gamma(a + b) - ln_gamma(a) - ln_gamma(b) + a * x.ln() + b * (1.0 - x).ln();
    let front = ln_front.exp();
    if x < (a + 1.0) / (a + b + 2.0) {
        front * beta_continued_fraction(a, b, x) / a
    } else {
        1.0 - front * beta_continued_fraction(b, a, 1.0 - x) / b
    }
}

/// Student-t cumulative distribution function.
pub fn student_t_cdf(t: f64, df: f64) -> f64 {
    let x = df / (df + t * t);
    let tail = 0.5 * regularized_incomplete_beta(df / 2.0, 0.5, x);
    if t >= 0.0 {
        1.0 - tail
    } else {
        tail
    }
}

/// Student-t upper tail `P(T > t)`, computed without cancellation for large t.
pub fn student_t_sf(t: f64, df: f64) -> f64 {
    let x = df / (df + t * t);
    let tail = 0.5 * regularized_incomplete_beta(df / 2.0, 0.5, x);
    if t >= 0.0 {
        tail
    } else {
        1.0 - tail
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TTest {
    pub t: f64,
    pub p: f64,
}

/// One-sample t-test on paired differences against the alternative that the
/// mean difference is positive.
///
/// A zero standard deviation makes `t` infinite or undefined; then `p` is 0
/// for a positive mean, 1 for a negative mean and 0.5 for a zero mean.
pub fn paired_t_test_one_tailed(deltas: &[f64]) -> Result<TTest, StatsError> {
    let n = deltas.len();
    if n < 2 {
        return Err(StatsError::TooFewObservations(n));
    }
    if deltas.iter().any(|d| !d.is_finite()) {
        return Err(StatsError::NonFinite);
    }
    let nf = n as f64;
    let mean = deltas.iter().sum::<f64>() / nf;
    let var = deltas.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (nf - 1.0);
    let sd = var.sqrt();
    // identical deltas leave only rounding residue in the deviation sum
    if sd <= 8.0 * f64::EPSILON * mean.abs() {
        let (t, p) = if mean > 0.0 {
            (f64::INFINITY, 0.0)
        } else if mean < 0.0 {
            (f64::NEG_INFINITY, 1.0)
        } else {
            (0.0, 0.5)
        };
        return Ok(TTest { t, p });
    }
    let t = mean / (sd / nf.sqrt());
    Ok(TTest {
        t,
        p: student_t_sf(t, nf - 1.0),
    })
}

/// One row of the benchmark summary table for a detector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateSummary {
    pub baseline_mean: f64,
    pub enhanced_mean: f64,
    pub improv_abs: f64,
    /// Mean of per-dataset relative improvements, in percent, over datasets
    /// with a baseline above 1e-12. `None` when no dataset qualifies.
    pub improv_pct: Option<f64>,
    pub win_count: usize,
    pub total: usize,
    pub t_stat: Option<f64>,
    /// `None` with fewer than two datasets.
    pub p_value: Option<f64>,
}

const PCT_BASELINE_FLOOR: f64 = 1e-12;

pub fn aggregate(pairs: &[(f64, f64)]) -> Result<AggregateSummary, StatsError> {
    if pairs.is_empty() {
        return Err(StatsError::Empty);
    }
    let n = pairs.len() as f64;
    let deltas: Vec<f64> = pairs.iter().map(|(b, e)| e - b).collect();
    let rel: Vec<f64> = pairs
        .iter()
        .filter(|(b, _)| *b > PCT_BASELINE_FLOOR)
        .map(|(b, e)| (e - b) / b)
        .collect();
    let test = if pairs.len() >= 2 {
        Some(paired_t_test_one_tailed(&deltas)?)
    } else {
        None
    };
    Ok(AggregateSummary {
        baseline_mean: pairs.iter().map(|p| p.0).sum::<f64>() / n,
        enhanced_mean: pairs.iter().map(|p| p.1).sum::<f64>() / n,
        improv_abs: deltas.iter().sum::<f64>() / n,
        improv_pct: (!rel.is_empty()).then(|| 100.0 * rel.iter().sum::<f64>() / rel.len() as f64),
        win_count: pairs.iter().filter(|(b, e)| e > b).count(),
        total: pairs.len(),
        t_stat: test.map(|t| t.t),
        p_value: test.map(|t| t.p),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn roc_examples() {
        assert_eq!(auc_roc(&[0.9, 0.1], &[1, 0]).unwrap(), 1.0);
        assert_eq!(auc_roc(&[0.5, 0.5], &[1, 0]).unwrap(), 0.5);
        assert_eq!(auc_roc(&[0.8, 0.6, 0.7, 0.2], &[1, 0, 1, 0]).unwrap(), 1.0);
        assert_eq!(auc_roc(&[0.1, 0.9], &[1, 0]).unwrap(), 0.0);
    }

    #[test]
    fn pr_examples() {
        assert_eq!(auc_pr(&[0.9, 0.8, 0.2, 0.1], &[1, 1, 0, 0]).unwrap(), 1.0);
        let ap = auc_pr(&[0.9, 0.8, 0.7], &[1, 0, 1]).unwrap();
        assert!(close(ap, (1.0 + 2.0 / 3.0) / 2.0, 1e-15));
        let scores = [0.4; 10];
        let labels = [1, 1, 1, 0, 0, 0, 0, 0, 0, 0];
        assert!(close(auc_pr(&scores, &labels).unwrap(), 0.3, 1e-15));
    }

    #[test]
    fn metrics_reject_single_class() {
        assert_eq!(
            auc_roc(&[0.1, 0.2], &[1, 1]),
            Err(StatsError::SingleClass { n_pos: 2, n_neg: 0 })
        );
        assert!(auc_pr(&[0.1, 0.2], &[0, 0]).is_err());
        assert!(auc_pr(&[0.1], &[0, 1]).is_err());
    }

    #[test]
    fn quantile_interpolates() {
        let v = [4.0, 1.0, 3.0, 2.0, 5.0];
        assert_eq!(quantile(&v, 0.0), 1.0);
        assert_eq!(quantile(&v, 1.0), 5.0);
        assert_eq!(quantile(&v, 0.5), 3.0);
        assert_eq!(quantile(&v, 0.125), 1.5);
    }

    #[test]
    fn lgamma_known_values() {
        assert!(close(ln_gamma(1.0), 0.0, 1e-14));
        assert!(close(ln_gamma(5.0), 24f64.ln(), 1e-13));
        assert!(close(ln_gamma(0.5), std::f64::consts::PI.sqrt().ln(), 1e-14));
    }

    #[test]
    fn incomplete_beta_closed_forms() {
        // I_x(1, 1) = x; I_x(a, 1) = x^a
        for x in [0.1, 0.5, 0.93] {
            assert!(close(regularized_incomplete_beta(1.0, 1.0, x), x, 1e-12));
            assert!(close(regularized_incomplete_beta(2.5, 1.0, x), x.powf(2.5), 1e-12));
        }
    }

    #[test]
    fn t_cdf_cauchy_case() {
        // df = 1 is the Cauchy distribution
        for t in [-3.0, -0.5, 0.0, 1.0, 4.0] {
            let cauchy = 0.5 + f64::atan(t) / std::f64::consts::PI;
            assert!(close(student_t_cdf(t, 1.0), cauchy, 1e-10));
        }
    }

    #[test]
    fn t_test_examples() {
        let r = paired_t_test_one_tailed(&[1.0, -1.0]).unwrap();
        assert_eq!((r.t, r.p), (0.0, 0.5));
        let r = paired_t_test_one_tailed(&[1.0, 1.0, 1.0]).unwrap();
        assert_eq!(r.p, 0.0);
        let r = paired_t_test_one_tailed(&[-0.1, -0.1, -0.1]).unwrap();
        assert_eq!(r.p, 1.0);
        let r = paired_t_test_one_tailed(&[0.3, 0.1, 0.2, 0.4, 0.0]).unwrap();
        assert!(close(r.t, 2.8284, 1e-4));
        assert!(close(r.p, 0.0237, 1e-4));
        assert_eq!(
            paired_t_test_one_tailed(&[1.0]),
            Err(StatsError::TooFewObservations(1))
        );
    }

    #[test]
    fn aggregate_examples() {
        let s = aggregate(&[(0.5, 0.6), (0.4, 0.4)]).unwrap();
        assert!(close(s.improv_abs, 0.05, 1e-15));
        assert_eq!((s.win_count, s.total), (1, 2));
        assert!(close(s.improv_pct.unwrap(), 10.0, 1e-12));

        let s = aggregate(&[(0.3, 0.3), (0.7, 0.7), (0.2, 0.2)]).unwrap();
        assert_eq!(s.improv_abs, 0.0);
        assert_eq!(s.win_count, 0);
        assert_eq!(s.p_value, Some(0.5));

        let s = aggregate(&[(0.0, 0.1), (0.5, 0.5)]).unwrap();
        assert_eq!(s.improv_pct, Some(0.0));
        assert!(aggregate(&[]).is_err());
        assert_eq!(aggregate(&[(0.1, 0.2)]).unwrap().p_value, None);
    }
}
