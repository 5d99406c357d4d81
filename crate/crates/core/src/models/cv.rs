//! Seeded k-fold cross-validation and exhaustive grid search.

use ndarray::{ArrayView1, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{
    default_feature_names, fit, BoostingParams, ForestParams, Hyperparams, ModelKind,
    ModelSpec, TreeParams,
};
use crate::error::{Error, Result};
use crate::seed;

/// Fold index for every row. The first `n % k` folds get one extra row.
pub fn fold_assignments(n: usize, k: usize, seed: u64) -> Result<Vec<usize>> {
    if k < 2 {
        return Err(Error::Argument(format!("k must be >= 2, got {k}")));
    }
    if n < k {
        return Err(Error::InsufficientData(format!("{n} rows cannot fill {k} folds")));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut seed::rng(seed));
    let (q, r) = (n / k, n % k);
    let mut folds = vec![0; n];
    let mut pos = 0;
    for f in 0..k {
        let size = q + usize::from(f < r);
        for &row in &order[pos..pos + size] {
            folds[row] = f;
        }
        pos += size;
    }
    Ok(folds)
}

/// Hyperparameter axes. `None` falls back to the shipped default for the
/// model kind; an explicitly empty axis makes the grid empty.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamGrid {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_depth: Option<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub min_samples_split: Option<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub min_samples_leaf: Option<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_estimators: Option<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub feature_subsample: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub learning_rate: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub subsample: Option<Vec<f64>>,
}

impl ParamGrid {
    /// The shipped search space for each model kind.
    pub fn default_for(kind: ModelKind) -> ParamGrid {
        let alphas = vec![1e-3, 1e-2, 1e-1, 1.0, 1e1, 1e2];
        match kind {
            ModelKind::Linear => ParamGrid::default(),
            ModelKind::Ridge | ModelKind::Lasso => ParamGrid {
                alpha: Some(alphas),
                ..Default::default()
            },
            ModelKind::DecisionTree => ParamGrid {
                max_depth: Some((2..=20).collect()),
                min_samples_split: Some((2..=10).collect()),
                min_samples_leaf: Some((1..=5).collect()),
                ..Default::default()
            },
            ModelKind::RandomForest => ParamGrid {
                n_estimators: Some(vec![50, 100, 200]),
                max_depth: Some((5..=20).collect()),
                min_samples_split: Some(vec![2, 5, 10]),
                min_samples_leaf: Some(vec![1]),
                feature_subsample: Some(vec![0.5]),
                ..Default::default()
            },
            ModelKind::GradientBoosting => ParamGrid {
                learning_rate: Some(vec![0.001, 0.01, 0.1]),
                n_estimators: Some(vec![100, 300, 500]),
                max_depth: Some(vec![3, 5, 10]),
                subsample: Some(vec![0.5, 0.75, 1.0]),
                ..Default::default()
            },
        }
    }

    /// Cartesian product in fixed axis order (first axis outermost).
    pub fn candidates(&self, kind: ModelKind) -> Vec<Hyperparams> {
        let d = ParamGrid::default_for(kind);
        fn pick<T: Clone>(own: &Option<Vec<T>>, default: &Option<Vec<T>>) -> Vec<T> {
            own.clone().or_else(|| default.clone()).unwrap_or_default()
        }
        let alpha = pick(&self.alpha, &d.alpha);
        let depth = pick(&self.max_depth, &d.max_depth);
        let split = pick(&self.min_samples_split, &d.min_samples_split);
        let leaf = pick(&self.min_samples_leaf, &d.min_samples_leaf);
        let n_est = pick(&self.n_estimators, &d.n_estimators);
        let feat = pick(&self.feature_subsample, &d.feature_subsample);
        let lr = pick(&self.learning_rate, &d.learning_rate);
        let sub = pick(&self.subsample, &d.subsample);

        let mut out = Vec::new();
        match kind {
            ModelKind::Linear => out.push(Hyperparams::Linear),
            ModelKind::Ridge => out.extend(alpha.iter().map(|&alpha| Hyperparams::Ridge { alpha })),
            ModelKind::Lasso => out.extend(alpha.iter().map(|&alpha| Hyperparams::Lasso { alpha })),
            ModelKind::DecisionTree => {
                for &max_depth in &depth {
                    for &min_samples_split in &split {
                        for &min_samples_leaf in &leaf {
                            out.push(Hyperparams::DecisionTree(TreeParams {
                                max_depth,
                                min_samples_split,
                                min_samples_leaf,
                            }));
                        }
                    }
                }
            }
            ModelKind::RandomForest => {
                for &n_estimators in &n_est {
                    for &max_depth in &depth {
                        for &min_samples_split in &split {
                            for &min_samples_leaf in &leaf {
                                for &feature_subsample in &feat {
                                    out.push(Hyperparams::RandomForest(ForestParams {
                                        n_estimators,
                                        max_depth,
                                        min_samples_split,
                                        min_samples_leaf,
                                        feature_subsample,
                                        bootstrap: true,
                                    }));
                                }
                            }
                        }
                    }
                }
            }
            ModelKind::GradientBoosting => {
                for &learning_rate in &lr {
                    for &n_estimators in &n_est {
                        for &max_depth in &depth {
                            for &subsample in &sub {
                                out.push(Hyperparams::GradientBoosting(BoostingParams {
                                    learning_rate,
                                    n_estimators,
                                    max_depth,
                                    subsample,
                                }));
                            }
                        }
                    }
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateScore {
    pub spec: ModelSpec,
    pub fold_mse: Vec<f64>,
    pub mean_mse: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CVResult {
    pub candidates: Vec<CandidateScore>,
    pub best_index: usize,
    pub best_spec: ModelSpec,
    pub fold_assignments: Vec<usize>,
}

/// Scores every candidate by mean held-out MSE over `k` seeded folds and
/// returns the minimizer (first in enumeration order on ties).
pub fn grid_search_cv(
    kind: ModelKind,
    grid: &ParamGrid,
    x: ArrayView2<f64>,
    y: ArrayView1<f64>,
    k: usize,
    seed: u64,
) -> Result<CVResult> {
    let candidates = grid.candidates(kind);
    if candidates.is_empty() {
        return Err(Error::Argument(format!("empty hyperparameter grid for {kind}")));
    }
    for c in &candidates {
        c.validate()?;
    }
    let folds = fold_assignments(x.nrows(), k, seed::derive(seed, "folds"))?;
    let model_seed = seed::derive(seed, "model");
    let names = default_feature_names(x.ncols());
    let split: Vec<(Vec<usize>, Vec<usize>)> = (0..k)
        .map(|f| {
            let (mut tr, mut te) = (Vec::new(), Vec::new());
            for (i, &fi) in folds.iter().enumerate() {
                if fi == f {
                    te.push(i)
                } else {
                    tr.push(i)
                }
            }
            (tr, te)
        })
        .collect();

    let jobs: Vec<(usize, usize)> = (0..candidates.len())
        .flat_map(|c| (0..k).map(move |f| (c, f)))
        .collect();
    let scores: Vec<f64> = jobs
        .par_iter()
        .map(|&(c, f)| {
            let (tr, te) = &split[f];
            let spec = ModelSpec::new(candidates[c].clone(), model_seed);
            let xt = x.select(Axis(0), tr);
            let yt = y.select(Axis(0), tr);
            let model = fit(&spec, xt.view(), yt.view(), &names)?;
            let xv = x.select(Axis(0), te);
            let yv = y.select(Axis(0), te);
            let pred = super::Predictor::predict(&model, xv.view())?;
            Ok(pred
                .iter()
                .zip(yv.iter())
                .map(|(p, t)| (p - t) * (p - t))
                .sum::<f64>()
                / te.len() as f64)
        })
        .collect::<Result<_>>()?;

    let scored: Vec<CandidateScore> = candidates
        .into_iter()
        .enumerate()
        .map(|(c, params)| {
            let fold_mse = scores[c * k..(c + 1) * k].to_vec();
            let mean_mse = fold_mse.iter().sum::<f64>() / k as f64;
            CandidateScore {
                spec: ModelSpec::new(params, model_seed),
                fold_mse,
                mean_mse,
            }
        })
        .collect();
    let mut best_index = 0;
    for (i, c) in scored.iter().enumerate() {
        if c.mean_mse < scored[best_index].mean_mse {
            best_index = i;
        }
    }
    Ok(CVResult {
        best_spec: scored[best_index].spec.clone(),
        best_index,
        candidates: scored,
        fold_assignments: folds,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{Array1, Array2};
    use proptest::prelude::*;
    use rand::Rng;
    use rand_distr::{Distribution, Normal};

    fn sizes(folds: &[usize], k: usize) -> Vec<usize> {
        (0..k).map(|f| folds.iter().filter(|&&x| x == f).count()).collect()
    }

    #[test]
    fn fold_sizes_for_103_rows() {
        let f = fold_assignments(103, 5, 1).unwrap();
        assert_eq!(sizes(&f, 5), vec![21, 21, 21, 20, 20]);
        assert!(fold_assignments(3, 5, 1).is_err());
        assert!(fold_assignments(10, 1, 1).is_err());
    }

    #[test]
    fn singleton_grid_and_empty_grid() {
        let x = Array2::from_shape_fn((20, 1), |(i, _)| i as f64);
        let y = x.column(0).mapv(|v| v * 3.0 + (v * 0.7).sin());
        let grid = ParamGrid {
            alpha: Some(vec![0.5]),
            ..Default::default()
        };
        let r = grid_search_cv(ModelKind::Ridge, &grid, x.view(), y.view(), 5, 2).unwrap();
        assert_eq!(r.best_spec.params, Hyperparams::Ridge { alpha: 0.5 });
        assert_eq!(r.candidates.len(), 1);
        let empty = ParamGrid {
            alpha: Some(vec![]),
            ..Default::default()
        };
        assert!(matches!(
            grid_search_cv(ModelKind::Ridge, &empty, x.view(), y.view(), 5, 2),
            Err(Error::Argument(_))
        ));
    }

    #[test]
    fn shipped_grid_sizes() {
        let g = ParamGrid::default();
        assert_eq!(g.candidates(ModelKind::Linear).len(), 1);
        assert_eq!(g.candidates(ModelKind::Ridge).len(), 6);
        assert_eq!(g.candidates(ModelKind::DecisionTree).len(), 19 * 9 * 5);
        assert_eq!(g.candidates(ModelKind::RandomForest).len(), 3 * 16 * 3);
        assert_eq!(g.candidates(ModelKind::GradientBoosting).len(), 81);
    }

    #[test]
    fn heavy_noise_prefers_stronger_ridge_penalty() {
        // Few rows, many weak features, large noise: shrinkage must win.
        let mut rng = crate::seed::rng(2024);
        let noise = Normal::new(0.0, 10.0).unwrap();
        let (n, p) = (40, 12);
        let x = Array2::from_shape_fn((n, p), |_| rng.random_range(-1.0..1.0));
        let y = Array1::from_shape_fn(n, |i| 0.3 * x[[i, 0]] + noise.sample(&mut rng));
        let grid = ParamGrid {
            alpha: Some(vec![1e-3, 1e2]),
            ..Default::default()
        };
        let r = grid_search_cv(ModelKind::Ridge, &grid, x.view(), y.view(), 5, 7).unwrap();
        assert_eq!(r.best_spec.params, Hyperparams::Ridge { alpha: 1e2 });
        assert!(r.candidates[1].mean_mse < r.candidates[0].mean_mse);
    }

    proptest! {
        #[test]
        fn folds_partition_rows(n in 5usize..400, k in 2usize..6, seed in any::<u64>()) {
            prop_assume!(n >= k);
            let f = fold_assignments(n, k, seed).unwrap();
            prop_assert_eq!(f.len(), n);
            let s = sizes(&f, k);
            prop_assert_eq!(s.iter().sum::<usize>(), n);
            prop_assert!(s.iter().max().unwrap() - s.iter().min().unwrap() <= 1);
        }
    }
}
