//! Regression models for next-year IRI: ordinary least squares, ridge,
//! lasso, CART regression trees, random forests and least-squares gradient
//! boosting, plus metrics, k-fold grid search and JSON persistence.
//!
//! Linear-family models standardize features with training-set mean and
//! population standard deviation; tree models use raw features.

pub mod boosting;
pub mod cv;
pub mod forest;
pub mod linalg;
pub mod linear;
pub mod metrics;
pub mod persist;
pub mod tree;

use ndarray::{Array1, ArrayView1, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use boosting::{BoostedTrees, BoostingParams};
pub use cv::{fold_assignments, grid_search_cv, CVResult, CandidateScore, ParamGrid};
pub use forest::ForestParams;
pub use linear::LinearModel;
pub use metrics::{evaluate, regression_metrics, EvalMetrics};
pub use persist::{load_model, save_model, ModelDocument};
pub use tree::{RegressionTree, TreeParams};

/// Anything that maps feature rows to a prediction.
pub trait Predictor: Sync {
    fn n_features(&self) -> usize;

    fn predict_row(&self, row: &[f64]) -> f64;

    fn predict(&self, x: ArrayView2<f64>) -> Result<Array1<f64>> {
        if x.ncols() != self.n_features() {
            return Err(Error::DimensionMismatch {
                expected: self.n_features(),
                actual: x.ncols(),
            });
        }
        let mut buf = vec![0.0; x.ncols()];
        Ok(x.rows()
            .into_iter()
            .map(|r| match r.as_slice() {
                Some(s) => self.predict_row(s),
                None => {
                    buf.iter_mut().zip(r.iter()).for_each(|(b, v)| *b = *v);
                    self.predict_row(&buf)
                }
            })
            .collect())
    }
}

impl<P: Predictor + Send + ?Sized> Predictor for Box<P> {
    fn n_features(&self) -> usize {
        (**self).n_features()
    }
    fn predict_row(&self, row: &[f64]) -> f64 {
        (**self).predict_row(row)
    }
}

impl<P: Predictor + ?Sized> Predictor for &P {
    fn n_features(&self) -> usize {
        (**self).n_features()
    }
    fn predict_row(&self, row: &[f64]) -> f64 {
        (**self).predict_row(row)
    }
}

/// Adapts a closure into a [`Predictor`] with a fixed input width.
pub struct FnPredictor<F> {
    n_features: usize,
    f: F,
}

impl<F: Fn(&[f64]) -> f64 + Sync> FnPredictor<F> {
    pub fn new(n_features: usize, f: F) -> Self {
        FnPredictor { n_features, f }
    }
}

impl<F: Fn(&[f64]) -> f64 + Sync> Predictor for FnPredictor<F> {
    fn n_features(&self) -> usize {
        self.n_features
    }
    fn predict_row(&self, row: &[f64]) -> f64 {
        (self.f)(row)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Linear,
    Ridge,
    Lasso,
    DecisionTree,
    RandomForest,
    GradientBoosting,
}

impl ModelKind {
    pub const ALL: [ModelKind; 6] = [
        ModelKind::Linear,
        ModelKind::Ridge,
        ModelKind::Lasso,
        ModelKind::DecisionTree,
        ModelKind::RandomForest,
        ModelKind::GradientBoosting,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ModelKind::Linear => "linear",
            ModelKind::Ridge => "ridge",
            ModelKind::Lasso => "lasso",
            ModelKind::DecisionTree => "decision_tree",
            ModelKind::RandomForest => "random_forest",
            ModelKind::GradientBoosting => "gradient_boosting",
        }
    }

    /// Row label used in model comparison reports.
    pub fn display_name(self) -> &'static str {
        match self {
            ModelKind::Linear => "Linear Regression (LR)",
            ModelKind::Ridge => "Ridge Regression (Ridge)",
            ModelKind::Lasso => "Lasso Regression (Lasso)",
            ModelKind::DecisionTree => "Decision Tree (DT)",
            ModelKind::RandomForest => "Random Forest (RF)",
            ModelKind::GradientBoosting => "Gradient Boosting (GBR)",
        }
    }
}

impl std::fmt::Display for ModelKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for ModelKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        ModelKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| Error::Argument(format!("unknown model kind `{s}`")))
    }
}

/// Hyperparameters, carried only for the kind they belong to.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Hyperparams {
    Linear,
    Ridge { alpha: f64 },
    Lasso { alpha: f64 },
    DecisionTree(TreeParams),
    RandomForest(ForestParams),
    GradientBoosting(BoostingParams),
}

impl Hyperparams {
    pub fn kind(&self) -> ModelKind {
        match self {
            Hyperparams::Linear => ModelKind::Linear,
            Hyperparams::Ridge { .. } => ModelKind::Ridge,
            Hyperparams::Lasso { .. } => ModelKind::Lasso,
            Hyperparams::DecisionTree(_) => ModelKind::DecisionTree,
            Hyperparams::RandomForest(_) => ModelKind::RandomForest,
            Hyperparams::GradientBoosting(_) => ModelKind::GradientBoosting,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Argument(m));
        match self {
            Hyperparams::Linear => Ok(()),
            Hyperparams::Ridge { alpha } | Hyperparams::Lasso { alpha } => {
                if *alpha >= 0.0 && alpha.is_finite() {
                    Ok(())
                } else {
                    bad(format!("alpha must be finite and >= 0, got {alpha}"))
                }
            }
            Hyperparams::DecisionTree(p) => p.validate(),
            Hyperparams::RandomForest(p) => p.validate(),
            Hyperparams::GradientBoosting(p) => p.validate(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    #[serde(flatten)]
    pub params: Hyperparams,
    pub seed: u64,
}

impl ModelSpec {
    pub fn new(params: Hyperparams, seed: u64) -> Self {
        ModelSpec { params, seed }
    }

    pub fn kind(&self) -> ModelKind {
        self.params.kind()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum FittedParams {
    Linear(LinearModel),
    Tree(RegressionTree),
    Forest { trees: Vec<RegressionTree> },
    Boosting(BoostedTrees),
}

/// A trained model: immutable, deterministic, safe to share across threads.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FittedModel {
    pub spec: ModelSpec,
    pub feature_names: Vec<String>,
    pub params: FittedParams,
}

impl FittedModel {
    pub fn kind(&self) -> ModelKind {
        self.spec.kind()
    }

    pub fn linear(&self) -> Option<&LinearModel> {
        match &self.params {
            FittedParams::Linear(m) => Some(m),
            _ => None,
        }
    }
}

impl Predictor for FittedModel {
    fn n_features(&self) -> usize {
        self.feature_names.len()
    }

    fn predict_row(&self, row: &[f64]) -> f64 {
        match &self.params {
            FittedParams::Linear(m) => m.predict_row(row),
            FittedParams::Tree(t) => t.predict_row(row),
            FittedParams::Forest { trees } => forest::predict_row(trees, row),
            FittedParams::Boosting(b) => b.predict_row(row),
        }
    }
}

/// Trains one model. `x` must be free of missing values.
pub fn fit(
    spec: &ModelSpec,
    x: ArrayView2<f64>,
    y: ArrayView1<f64>,
    feature_names: &[String],
) -> Result<FittedModel> {
    spec.params.validate()?;
    if x.nrows() != y.len() {
        return Err(Error::Argument(format!(
            "{} feature rows but {} targets",
            x.nrows(),
            y.len()
        )));
    }
    if x.nrows() == 0 {
        return Err(Error::Argument("cannot fit on empty data".into()));
    }
    if feature_names.len() != x.ncols() {
        return Err(Error::DimensionMismatch {
            expected: feature_names.len(),
            actual: x.ncols(),
        });
    }
    if x.iter().chain(y.iter()).any(|v| !v.is_finite()) {
        return Err(Error::Argument("training data contains missing or non-finite values".into()));
    }
    let params = match &spec.params {
        Hyperparams::Linear => FittedParams::Linear(linear::fit_ols(x, y)?),
        Hyperparams::Ridge { alpha } => FittedParams::Linear(linear::fit_ridge(x, y, *alpha)?),
        Hyperparams::Lasso { alpha } => FittedParams::Linear(linear::fit_lasso(x, y, *alpha)?),
        Hyperparams::DecisionTree(p) => FittedParams::Tree(tree::fit_tree(x, y, p)),
        Hyperparams::RandomForest(p) => FittedParams::Forest {
            trees: forest::fit_forest(x, y, p, spec.seed),
        },
        Hyperparams::GradientBoosting(p) => {
            FittedParams::Boosting(boosting::fit_boosting(x, y, p, spec.seed))
        }
    };
    Ok(FittedModel {
        spec: spec.clone(),
        feature_names: feature_names.to_vec(),
        params,
    })
}

/// Generic feature names `x0, x1, ...` for unnamed matrices.
pub fn default_feature_names(n: usize) -> Vec<String> {
    (0..n).map(|i| format!("x{i}")).collect()
}
