//! Least-squares stagewise gradient boosting.
//!
//! Starts from `mean(y)`; every stage fits a depth-limited tree to the
//! current residuals on a row subsample and adds it scaled by the learning
//! rate.

use ndarray::{ArrayView1, ArrayView2};
use rand::seq::index;
use serde::{Deserialize, Serialize};

use super::tree::{self, RegressionTree, TreeParams};
use crate::error::{Error, Result};
use crate::seed;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoostingParams {
    pub learning_rate: f64,
    /// Zero stages leaves the constant `mean(y)` model.
    pub n_estimators: usize,
    pub max_depth: usize,
    pub subsample: f64,
}

impl Default for BoostingParams {
    fn default() -> Self {
        BoostingParams {
            learning_rate: 0.1,
            n_estimators: 100,
            max_depth: 3,
            subsample: 1.0,
        }
    }
}

impl BoostingParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Argument(format!(
                "learning_rate must be > 0, got {}",
                self.learning_rate
            )));
        }
        if !(self.subsample > 0.0 && self.subsample <= 1.0) {
            return Err(Error::Argument(format!(
                "subsample must lie in (0, 1], got {}",
                self.subsample
            )));
        }
        if self.max_depth < 1 {
            return Err(Error::Argument("max_depth must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoostedTrees {
    pub init: f64,
    pub learning_rate: f64,
    pub trees: Vec<RegressionTree>,
}

impl BoostedTrees {
    pub fn predict_row(&self, row: &[f64]) -> f64 {
        let mut s = self.init;
        for t in &self.trees {
            s += self.learning_rate * t.predict_row(row);
        }
        s
    }

    /// Predictions after each stage, starting with the constant model.
    pub fn staged_predict(&self, x: ArrayView2<f64>) -> Vec<Vec<f64>> {
        let rows: Vec<Vec<f64>> = x.rows().into_iter().map(|r| r.to_vec()).collect();
        let mut current = vec![self.init; rows.len()];
        let mut out = vec![current.clone()];
        for t in &self.trees {
            for (c, r) in current.iter_mut().zip(&rows) {
                *c += self.learning_rate * t.predict_row(r);
            }
            out.push(current.clone());
        }
        out
    }
}

pub fn fit_boosting(
    x: ArrayView2<f64>,
    y: ArrayView1<f64>,
    params: &BoostingParams,
    seed: u64,
) -> BoostedTrees {
    let n = x.nrows();
    let init = y.sum() / n as f64;
    let tp = TreeParams {
        max_depth: params.max_depth,
        min_samples_split: 2,
        min_samples_leaf: 1,
    };
    let rows: Vec<Vec<f64>> = x.rows().into_iter().map(|r| r.to_vec()).collect();
    let mut pred = vec![init; n];
    let mut resid = ndarray::Array1::<f64>::zeros(n);
    let n_sub = ((params.subsample * n as f64).round() as usize).clamp(1, n);
    let mut rng = seed::rng(seed);
    let mut trees = Vec::with_capacity(params.n_estimators);
    for _ in 0..params.n_estimators {
        for i in 0..n {
            resid[i] = y[i] - pred[i];
        }
        let samples: Vec<usize> = if n_sub < n {
            let mut s = index::sample(&mut rng, n, n_sub).into_vec();
            s.sort_unstable();
            s
        } else {
            (0..n).collect()
        };
        let t = tree::fit_tree_on(x, resid.view(), &samples, &tp, None);
        for (p, r) in pred.iter_mut().zip(&rows) {
            *p += params.learning_rate * t.predict_row(r);
        }
        trees.push(t);
    }
    BoostedTrees {
        init,
        learning_rate: params.learning_rate,
        trees,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{array, Array1, Array2};

    #[test]
    fn zero_stages_is_the_mean() {
        let x = array![[1.0], [2.0], [3.0], [4.0]];
        let y = array![1.0, 2.0, 3.0, 10.0];
        let p = BoostingParams {
            n_estimators: 0,
            ..Default::default()
        };
        let b = fit_boosting(x.view(), y.view(), &p, 0);
        assert_eq!(b.predict_row(&[100.0]), 4.0);
    }

    #[test]
    fn training_mse_never_increases_without_subsampling() {
        let x = Array2::from_shape_fn((120, 2), |(i, j)| ((i * (5 + j)) % 37) as f64);
        let y = Array1::from_shape_fn(120, |i| (x[[i, 0]] / 5.0).sin() * 20.0 + x[[i, 1]]);
        let p = BoostingParams {
            learning_rate: 0.1,
            n_estimators: 200,
            max_depth: 3,
            subsample: 1.0,
        };
        let b = fit_boosting(x.view(), y.view(), &p, 1);
        let mses: Vec<f64> = b
            .staged_predict(x.view())
            .iter()
            .map(|pred| pred.iter().zip(&y).map(|(p, t)| (p - t).powi(2)).sum::<f64>() / 120.0)
            .collect();
        for w in mses.windows(2) {
            assert!(w[1] <= w[0], "{} > {}", w[1], w[0]);
        }
    }

    #[test]
    fn subsampled_fit_is_seed_deterministic() {
        let x = Array2::from_shape_fn((50, 2), |(i, j)| ((i * (3 + j)) % 17) as f64);
        let y = x.column(0).to_owned();
        let p = BoostingParams {
            subsample: 0.5,
            n_estimators: 20,
            ..Default::default()
        };
        assert_eq!(fit_boosting(x.view(), y.view(), &p, 5), fit_boosting(x.view(), y.view(), &p, 5));
    }
}
