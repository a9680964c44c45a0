//! Binary random forest: CART trees on Gini impurity, bootstrap rows and a
//! random feature subset per split. The forest score is the fraction of
//! trees voting "anomaly".

use ndarray::{ArrayView1, ArrayView2};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::rng::{self, DasRng};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestParams {
    pub n_trees: usize,
    pub bootstrap: bool,
    /// Features examined per split; `None` means `ceil(sqrt(d))`.
    pub max_features: Option<usize>,
    pub min_samples_leaf: usize,
    /// `None` grows until leaves are pure.
    pub max_depth: Option<usize>,
    pub seed: u64,
}

impl Default for ForestParams {
    fn default() -> Self {
        Self {
            n_trees: 100,
            bootstrap: true,
            max_features: None,
            min_samples_leaf: 1,
            max_depth: None,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "node", rename_all = "snake_case")]
pub enum TreeNode {
    /// Majority class of the leaf's training rows (ties vote 0).
    Leaf { vote: u8 },
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionTree {
    pub nodes: Vec<TreeNode>,
}

impl DecisionTree {
    pub fn vote(&self, x: ArrayView1<'_, f64>) -> u8 {
        let mut i = 0;
        loop {
            match &self.nodes[i] {
                TreeNode::Leaf { vote } => return *vote,
                TreeNode::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => i = if x[*feature] <= *threshold { *left } else { *right },
            }
        }
    }

    pub fn depth(&self) -> usize {
        fn walk(nodes: &[TreeNode], i: usize) -> usize {
            match &nodes[i] {
                TreeNode::Leaf { .. } => 0,
                TreeNode::Split { left, right, .. } => 1 + walk(nodes, *left).max(walk(nodes, *right)),
            }
        }
        walk(&self.nodes, 0)
    }
}

struct Builder<'a> {
    x: ArrayView2<'a, f64>,
    y: &'a [u8],
    mtry: usize,
    min_leaf: usize,
    max_depth: Option<usize>,
    nodes: Vec<TreeNode>,
}

fn gini(pos: usize, n: usize) -> f64 {
    if n == 0 {
        return 0.0;
    }
    let p = pos as f64 / n as f64;
    2.0 * p * (1.0 - p)
}

impl Builder<'_> {
    fn leaf(&mut self, rows: &[usize]) -> usize {
        let pos = rows.iter().filter(|&&r| self.y[r] == 1).count();
        let vote = u8::from(2 * pos > rows.len());
        self.nodes.push(TreeNode::Leaf { vote });
        self.nodes.len() - 1
    }

    /// Best (weighted impurity, threshold) for one feature.
    fn best_threshold(&self, rows: &[usize], feature: usize, total_pos: usize) -> Option<(f64, f64)> {
        let mut vals: Vec<(f64, u8)> = rows.iter().map(|&r| (self.x[[r, feature]], self.y[r])).collect();
        vals.sort_by(|a, b| a.0.total_cmp(&b.0));
        let n = vals.len();
        let mut best: Option<(f64, f64)> = None;
        let mut left_pos = 0;
        for i in 0..n - 1 {
            left_pos += usize::from(vals[i].1);
            let nl = i + 1;
            if vals[i].0 == vals[i + 1].0 || nl < self.min_leaf || n - nl < self.min_leaf {
                continue;
            }
            let imp = nl as f64 * gini(left_pos, nl) + (n - nl) as f64 * gini(total_pos - left_pos, n - nl);
            if best.is_none_or(|(b, _)| imp < b) {
                let mut thr = 0.5 * (vals[i].0 + vals[i + 1].0);
                if thr >= vals[i + 1].0 {
                    thr = vals[i].0;
                }
                best = Some((imp, thr));
            }
        }
        best
    }

    fn grow(&mut self, rows: &mut [usize], depth: usize, rng: &mut DasRng) -> usize {
        let n = rows.len();
        let pos = rows.iter().filter(|&&r| self.y[r] == 1).count();
        if pos == 0 || pos == n || n < 2 * self.min_leaf || self.max_depth.is_some_and(|m| depth >= m) {
            return self.leaf(rows);
        }
        let d = self.x.ncols();
        let mut features: Vec<usize> = (0..d).collect();
        let mut best: Option<(f64, usize, f64)> = None;
        // Examine mtry random features; keep drawing if none of them can split.
        for k in 0..d {
            let j = rng.random_range(k..d);
            features.swap(k, j);
            let f = features[k];
            if let Some((imp, thr)) = self.best_threshold(rows, f, pos) {
                if best.is_none_or(|(b, _, _)| imp < b) {
                    best = Some((imp, f, thr));
                }
            }
            if k + 1 >= self.mtry && best.is_some() {
                break;
            }
        }
        let Some((_, feature, threshold)) = best else {
            return self.leaf(rows);
        };
        let mut split = 0;
        for k in 0..n {
            if self.x[[rows[k], feature]] <= threshold {
                rows.swap(k, split);
                split += 1;
            }
        }
        let id = self.nodes.len();
        self.nodes.push(TreeNode::Leaf { vote: 0 });
        let (l, r) = rows.split_at_mut(split);
        let left = self.grow(l, depth + 1, rng);
        let right = self.grow(r, depth + 1, rng);
        self.nodes[id] = TreeNode::Split {
            feature,
            threshold,
            left,
            right,
        };
        id
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RandomForest {
    pub trees: Vec<DecisionTree>,
    pub n_features: usize,
}

impl RandomForest {
    /// Tree `t` uses stream `t` of `params.seed` for both its bootstrap
    /// sample and its feature draws, so fitting in parallel is reproducible.
    pub fn fit(x: ArrayView2<'_, f64>, y: &[u8], params: &ForestParams) -> Self {
        let (n, d) = x.dim();
        let mtry = params
            .max_features
            .unwrap_or_else(|| (d as f64).sqrt().ceil() as usize)
            .clamp(1, d);
        let trees = (0..params.n_trees)
            .into_par_iter()
            .map(|t| {
                let mut rng = rng::stream(params.seed, t as u64);
                let mut rows: Vec<usize> = if params.bootstrap {
                    (0..n).map(|_| rng.random_range(0..n)).collect()
                } else {
                    (0..n).collect()
                };
                let mut b = Builder {
                    x,
                    y,
                    mtry,
                    min_leaf: params.min_samples_leaf.max(1),
                    max_depth: params.max_depth,
                    nodes: Vec::new(),
                };
                b.grow(&mut rows, 0, &mut rng);
                DecisionTree { nodes: b.nodes }
            })
            .collect();
        Self { trees, n_features: d }
    }

    /// Fraction of trees voting 1.
    pub fn score_row(&self, x: ArrayView1<'_, f64>) -> f64 {
        let votes: usize = self.trees.iter().map(|t| usize::from(t.vote(x))).sum();
        votes as f64 / self.trees.len() as f64
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn gini_values() {
        assert_eq!(gini(0, 4), 0.0);
        assert_eq!(gini(2, 4), 0.5);
        assert_eq!(gini(4, 4), 0.0);
    }

    #[test]
    fn single_tree_without_bootstrap_is_exact() {
        let x = array![[0.0], [1.0], [2.0], [3.0]];
        let y = [0, 0, 1, 1];
        let params = ForestParams {
            n_trees: 1,
            bootstrap: false,
            ..ForestParams::default()
        };
        let f = RandomForest::fit(x.view(), &y, &params);
        assert_eq!(f.trees[0].depth(), 1);
        for (row, &label) in x.rows().into_iter().zip(&y) {
            assert_eq!(f.score_row(row), f64::from(label));
        }
    }

    #[test]
    fn xor_needs_depth_two() {
        let x = array![[0.0, 0.0], [0.0, 1.0], [1.0, 0.0], [1.0, 1.0]];
        let y = [0, 1, 1, 0];
        let params = ForestParams {
            n_trees: 1,
            bootstrap: false,
            max_features: Some(2),
            ..ForestParams::default()
        };
        let f = RandomForest::fit(x.view(), &y, &params);
        for (row, &label) in x.rows().into_iter().zip(&y) {
            assert_eq!(f.score_row(row), f64::from(label));
        }
    }

    #[test]
    fn duplicate_points_with_both_labels_vote_normal() {
        let x = array![[1.0], [1.0], [5.0]];
        let y = [0, 1, 1];
        let params = ForestParams {
            n_trees: 1,
            bootstrap: false,
            ..ForestParams::default()
        };
        let f = RandomForest::fit(x.view(), &y, &params);
        assert_eq!(f.score_row(array![1.0].view()), 0.0);
        assert_eq!(f.score_row(array![5.0].view()), 1.0);
    }
}
