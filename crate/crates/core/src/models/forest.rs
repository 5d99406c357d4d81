//! Bagged CART trees with per-split feature subsampling.

use ndarray::{ArrayView1, ArrayView2};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::tree::{self, FeatureSampler, RegressionTree, TreeParams};
use crate::error::{Error, Result};
use crate::seed;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ForestParams {
    pub n_estimators: usize,
    pub max_depth: usize,
    pub min_samples_split: usize,
    pub min_samples_leaf: usize,
    /// Fraction of features examined at each split.
    pub feature_subsample: f64,
    #[serde(default = "default_bootstrap")]
    pub bootstrap: bool,
}

fn default_bootstrap() -> bool {
    true
}

impl Default for ForestParams {
    fn default() -> Self {
        ForestParams {
            n_estimators: 100,
            max_depth: 10,
            min_samples_split: 2,
            min_samples_leaf: 1,
            feature_subsample: 0.5,
            bootstrap: true,
        }
    }
}

impl ForestParams {
    pub fn tree_params(&self) -> TreeParams {
        TreeParams {
            max_depth: self.max_depth,
            min_samples_split: self.min_samples_split,
            min_samples_leaf: self.min_samples_leaf,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_estimators < 1 {
            return Err(Error::Argument("n_estimators must be >= 1".into()));
        }
        if !(self.feature_subsample > 0.0 && self.feature_subsample <= 1.0) {
            return Err(Error::Argument(format!(
                "feature_subsample must lie in (0, 1], got {}",
                self.feature_subsample
            )));
        }
        self.tree_params().validate()
    }

    fn features_per_split(&self, p: usize) -> usize {
        ((self.feature_subsample * p as f64).round() as usize).clamp(1, p.max(1))
    }
}

pub fn fit_forest(
    x: ArrayView2<f64>,
    y: ArrayView1<f64>,
    params: &ForestParams,
    seed: u64,
) -> Vec<RegressionTree> {
    let n = x.nrows();
    let tp = params.tree_params();
    let per_split = params.features_per_split(x.ncols());
    (0..params.n_estimators)
        .into_par_iter()
        .map(|t| {
            let mut rng = seed::rng(seed::derive_indexed(seed, t as u64));
            let samples: Vec<usize> = if params.bootstrap {
                (0..n).map(|_| rng.random_range(0..n)).collect()
            } else {
                (0..n).collect()
            };
            let sampler = FeatureSampler {
                per_split,
                rng: &mut rng,
            };
            tree::fit_tree_on(x, y, &samples, &tp, Some(sampler))
        })
        .collect()
}

pub fn predict_row(trees: &[RegressionTree], row: &[f64]) -> f64 {
    trees.iter().map(|t| t.predict_row(row)).sum::<f64>() / trees.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{Array1, Array2};

    fn data() -> (Array2<f64>, Array1<f64>) {
        let x = Array2::from_shape_fn((60, 3), |(i, j)| ((i * (j + 3) * 7) % 23) as f64);
        let y = Array1::from_shape_fn(60, |i| x[[i, 0]] * 2.0 - x[[i, 2]] + (i % 3) as f64);
        (x, y)
    }

    #[test]
    fn single_unbagged_tree_equals_plain_tree() {
        let (x, y) = data();
        let p = ForestParams {
            n_estimators: 1,
            max_depth: 5,
            feature_subsample: 1.0,
            bootstrap: false,
            ..Default::default()
        };
        let forest = fit_forest(x.view(), y.view(), &p, 9);
        let plain = tree::fit_tree(x.view(), y.view(), &p.tree_params());
        assert_eq!(forest[0], plain);
        for r in x.rows() {
            let row = r.to_vec();
            assert_eq!(predict_row(&forest, &row), plain.predict_row(&row));
        }
    }

    #[test]
    fn identical_trees_average_to_one_tree() {
        let (x, y) = data();
        let t = tree::fit_tree(x.view(), y.view(), &TreeParams::default());
        let trees = vec![t.clone(); 5];
        for r in x.rows() {
            let row = r.to_vec();
            assert!((predict_row(&trees, &row) - t.predict_row(&row)).abs() < 1e-12);
        }
    }

    #[test]
    fn seeded_fits_are_reproducible() {
        let (x, y) = data();
        let p = ForestParams {
            n_estimators: 8,
            ..Default::default()
        };
        assert_eq!(fit_forest(x.view(), y.view(), &p, 3), fit_forest(x.view(), y.view(), &p, 3));
        assert_ne!(fit_forest(x.view(), y.view(), &p, 3), fit_forest(x.view(), y.view(), &p, 4));
    }
}
