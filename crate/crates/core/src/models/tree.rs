//! CART regression trees with variance-reduction splits.
//!
//! Each node keeps one index list per feature, sorted by that feature's
//! value; splitting stably partitions every list, so the whole build costs
//! `O(n · p · depth)` after a single initial sort.

use ndarray::{ArrayView1, ArrayView2};
use rand::seq::index;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TreeParams {
    pub max_depth: usize,
    pub min_samples_split: usize,
    pub min_samples_leaf: usize,
}

impl Default for TreeParams {
    fn default() -> Self {
        TreeParams {
            max_depth: 10,
            min_samples_split: 2,
            min_samples_leaf: 1,
        }
    }
}

impl TreeParams {
    pub fn validate(&self) -> Result<()> {
        if self.max_depth < 1 {
            return Err(Error::Argument("max_depth must be >= 1".into()));
        }
        if self.min_samples_split < 2 {
            return Err(Error::Argument("min_samples_split must be >= 2".into()));
        }
        if self.min_samples_leaf < 1 {
            return Err(Error::Argument("min_samples_leaf must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "node", rename_all = "snake_case")]
pub enum Node {
    Leaf {
        value: f64,
        samples: usize,
    },
    /// Rows with `x[feature] <= threshold` go left.
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionTree {
    pub nodes: Vec<Node>,
}

impl RegressionTree {
    pub fn predict_row(&self, row: &[f64]) -> f64 {
        let mut i = 0;
        loop {
            match &self.nodes[i] {
                Node::Leaf { value, .. } => return *value,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => i = if row[*feature] <= *threshold { *left } else { *right },
            }
        }
    }

    pub fn depth(&self) -> usize {
        fn walk(nodes: &[Node], i: usize) -> usize {
            match &nodes[i] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + walk(nodes, *left).max(walk(nodes, *right)),
            }
        }
        walk(&self.nodes, 0)
    }

    pub fn n_leaves(&self) -> usize {
        self.nodes
            .iter()
            .filter(|n| matches!(n, Node::Leaf { .. }))
            .count()
    }
}

/// Per-split feature subsampling for random forests.
pub(crate) struct FeatureSampler<'a> {
    pub per_split: usize,
    pub rng: &'a mut ChaCha8Rng,
}

struct Builder<'a, 'r> {
    x: ArrayView2<'a, f64>,
    y: &'a [f64],
    params: &'a TreeParams,
    sampler: Option<FeatureSampler<'r>>,
    nodes: Vec<Node>,
}

struct BestSplit {
    feature: usize,
    threshold: f64,
    score: f64,
}

impl Builder<'_, '_> {
    fn candidate_features(&mut self) -> Vec<usize> {
        let p = self.x.ncols();
        match &mut self.sampler {
            Some(s) if s.per_split < p => {
                let mut f = index::sample(s.rng, p, s.per_split).into_vec();
                f.sort_unstable();
                f
            }
            _ => (0..p).collect(),
        }
    }

    fn best_split(&mut self, sorted: &[Vec<u32>], total: f64) -> Option<BestSplit> {
        let n = sorted[0].len();
        let min_leaf = self.params.min_samples_leaf;
        let parent = total * total / n as f64;
        let mut best: Option<BestSplit> = None;
        for f in self.candidate_features() {
            let order = &sorted[f];
            let mut left_sum = 0.0;
            for i in 0..n - 1 {
                let s = order[i] as usize;
                left_sum += self.y[s];
                let nl = i + 1;
                let nr = n - nl;
                if nl < min_leaf {
                    continue;
                }
                if nr < min_leaf {
                    break;
                }
                let xv = self.x[[s, f]];
                let xn = self.x[[order[i + 1] as usize, f]];
                if !(xv < xn) {
                    continue;
                }
                let right_sum = total - left_sum;
                let score = left_sum * left_sum / nl as f64 + right_sum * right_sum / nr as f64;
                if best.as_ref().is_none_or(|b| score > b.score) {
                    let mid = 0.5 * (xv + xn);
                    let threshold = if mid < xn { mid } else { xv };
                    best = Some(BestSplit {
                        feature: f,
                        threshold,
                        score,
                    });
                }
            }
        }
        best.filter(|b| b.score > parent)
    }

    fn build(&mut self, sorted: Vec<Vec<u32>>, depth: usize) -> usize {
        let n = sorted[0].len();
        let total: f64 = sorted[0].iter().map(|&s| self.y[s as usize]).sum();
        let mean = total / n as f64;
        let first = self.y[sorted[0][0] as usize];
        let pure = sorted[0].iter().all(|&s| self.y[s as usize] == first);
        let id = self.nodes.len();
        self.nodes.push(Node::Leaf {
            value: mean,
            samples: n,
        });
        if pure
            || depth >= self.params.max_depth
            || n < self.params.min_samples_split
            || n < 2 * self.params.min_samples_leaf
        {
            return id;
        }
        let Some(split) = self.best_split(&sorted, total) else {
            return id;
        };
        let (mut left, mut right) = (Vec::with_capacity(sorted.len()), Vec::with_capacity(sorted.len()));
        for list in sorted {
            let (l, r): (Vec<u32>, Vec<u32>) = list
                .into_iter()
                .partition(|&s| self.x[[s as usize, split.feature]] <= split.threshold);
            left.push(l);
            right.push(r);
        }
        let l = self.build(left, depth + 1);
        let r = self.build(right, depth + 1);
        self.nodes[id] = Node::Split {
            feature: split.feature,
            threshold: split.threshold,
            left: l,
            right: r,
        };
        id
    }
}

/// Fits a tree on the given sample rows (duplicates allowed, as produced by
/// bootstrap resampling).
pub(crate) fn fit_tree_on(
    x: ArrayView2<f64>,
    y: ArrayView1<f64>,
    samples: &[usize],
    params: &TreeParams,
    sampler: Option<FeatureSampler<'_>>,
) -> RegressionTree {
    let y_vec = y.to_vec();
    let sorted: Vec<Vec<u32>> = (0..x.ncols().max(1))
        .map(|f| {
            let mut idx: Vec<u32> = samples.iter().map(|&s| s as u32).collect();
            if f < x.ncols() {
                idx.sort_by(|&a, &b| x[[a as usize, f]].total_cmp(&x[[b as usize, f]]).then(a.cmp(&b)));
            }
            idx
        })
        .collect();
    let mut builder = Builder {
        x,
        y: &y_vec,
        params,
        sampler,
        nodes: Vec::new(),
    };
    if x.ncols() == 0 {
        let mean = samples.iter().map(|&s| y_vec[s]).sum::<f64>() / samples.len() as f64;
        return RegressionTree {
            nodes: vec![Node::Leaf {
                value: mean,
                samples: samples.len(),
            }],
        };
    }
    builder.build(sorted, 0);
    RegressionTree {
        nodes: builder.nodes,
    }
}

pub fn fit_tree(x: ArrayView2<f64>, y: ArrayView1<f64>, params: &TreeParams) -> RegressionTree {
    let samples: Vec<usize> = (0..x.nrows()).collect();
    fit_tree_on(x, y, &samples, params, None)
}
