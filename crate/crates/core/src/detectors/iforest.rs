//! Isolation forest.
//!
//! Each tree is grown on a subsample drawn without replacement, splitting on a
//! uniformly chosen feature at a uniform cut in `[min, max)` of the node
//! sample, up to height `ceil(log2(subsample_size))`. The anomaly score is
//! `2^(-E[h(x)] / c(subsample_size))`.

use ndarray::{ArrayView1, ArrayView2};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::rng;

const EULER_GAMMA: f64 = 0.577_215_664_9;

/// Harmonic number, exact for `i <= 10`, `ln(i) + gamma` beyond.
pub fn harmonic(i: usize) -> f64 {
    if i <= 10 {
        (1..=i).map(|k| 1.0 / k as f64).sum()
    } else {
        (i as f64).ln() + EULER_GAMMA
    }
}

/// Average path length of an unsuccessful BST search over `n` points.
pub fn average_path_length(n: usize) -> f64 {
    match n {
        0 | 1 => 0.0,
        _ => {
            let n1 = (n - 1) as f64;
            2.0 * harmonic(n - 1) - 2.0 * n1 / n as f64
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "node", rename_all = "snake_case")]
pub enum Node {
    Leaf {
        size: usize,
    },
    Split {
        feature: usize,
        threshold: f64,
        left: Box<Node>,
        right: Box<Node>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IsolationTree {
    pub root: Node,
}

impl IsolationTree {
    fn grow<R: Rng>(data: ArrayView2<'_, f64>, rows: &mut [usize], height_limit: usize, rng: &mut R) -> Self {
        Self {
            root: grow_node(data, rows, 0, height_limit, rng),
        }
    }

    /// Path length `h(x)`: edges to the external node plus `c(size)` for the
    /// points left unresolved in that node.
    pub fn path_length(&self, x: ArrayView1<'_, f64>) -> f64 {
        let mut node = &self.root;
        let mut depth = 0usize;
        loop {
            match node {
                Node::Leaf { size } => return depth as f64 + average_path_length(*size),
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    node = if x[*feature] < *threshold { left } else { right };
                    depth += 1;
                }
            }
        }
    }
}

fn grow_node<R: Rng>(
    data: ArrayView2<'_, f64>,
    rows: &mut [usize],
    depth: usize,
    height_limit: usize,
    rng: &mut R,
) -> Node {
    if depth >= height_limit || rows.len() <= 1 {
        return Node::Leaf { size: rows.len() };
    }
    // Features whose node sample is not constant; a constant node cannot be split.
    let ranges: Vec<(usize, f64, f64)> = (0..data.ncols())
        .filter_map(|j| {
            let (lo, hi) = rows.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &r| {
                let v = data[[r, j]];
                (lo.min(v), hi.max(v))
            });
            (hi > lo).then_some((j, lo, hi))
        })
        .collect();
    if ranges.is_empty() {
        return Node::Leaf { size: rows.len() };
    }
    let (feature, lo, hi) = ranges[rng.random_range(0..ranges.len())];
    let mut threshold = rng.random_range(lo..hi);
    if threshold <= lo {
        // keep at least one point on each side
        threshold = lo + (hi - lo) * 0.5;
    }
    let mut split = 0;
    for k in 0..rows.len() {
        if data[[rows[k], feature]] < threshold {
            rows.swap(k, split);
            split += 1;
        }
    }
    let (l, r) = rows.split_at_mut(split);
    Node::Split {
        feature,
        threshold,
        left: Box::new(grow_node(data, l, depth + 1, height_limit, rng)),
        right: Box::new(grow_node(data, r, depth + 1, height_limit, rng)),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IsolationForest {
    pub trees: Vec<IsolationTree>,
    pub subsample_size: usize,
}

impl IsolationForest {
    /// Tree `t` draws from stream `t` of `seed`.
    pub fn fit(data: ArrayView2<'_, f64>, n_trees: usize, subsample_size: usize, seed: u64) -> Self {
        let n = data.nrows();
        let psi = subsample_size.clamp(1, n);
        let height_limit = (psi as f64).log2().ceil().max(0.0) as usize;
        let trees = (0..n_trees)
            .map(|t| {
                let mut rng = rng::stream(seed, t as u64);
                let mut all: Vec<usize> = (0..n).collect();
                // partial Fisher–Yates: first psi entries are the subsample
                for i in 0..psi {
                    let j = rng.random_range(i..n);
                    all.swap(i, j);
                }
                let mut rows = all[..psi].to_vec();
                IsolationTree::grow(data, &mut rows, height_limit, &mut rng)
            })
            .collect();
        Self {
            trees,
            subsample_size: psi,
        }
    }

    pub fn expected_path_length(&self, x: ArrayView1<'_, f64>) -> f64 {
        self.trees.iter().map(|t| t.path_length(x)).sum::<f64>() / self.trees.len() as f64
    }

    pub fn score_row(&self, x: ArrayView1<'_, f64>) -> f64 {
        score_from_path_length(self.expected_path_length(x), self.subsample_size)
    }
}

/// `2^(-h / c(psi))`; with `c(psi) = 0` (single-point subsample) every
/// point is equally anomalous at 0.5.
pub fn score_from_path_length(h: f64, psi: usize) -> f64 {
    let c = average_path_length(psi);
    if c > 0.0 {
        2f64.powf(-h / c)
    } else {
        0.5
    }
}
