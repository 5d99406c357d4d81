//! Model-agnostic Shapley values.
//!
//! The value of a coalition `S` is the expected model output when features
//! in `S` are fixed to the explained instance and the rest are drawn from a
//! background sample (interventional baseline), or set to the background
//! mean (mean-imputation baseline).
//!
//! Exact mode enumerates all `2^M` coalitions; sampled mode averages
//! marginal contributions over random feature orderings. Both satisfy
//! `sum(phi) = f(x) - base_value` up to rounding.

use std::collections::HashMap;

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::seq::{index, SliceRandom};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::Predictor;
use crate::seed;

/// Largest feature count accepted by exact mode.
pub const EXACT_LIMIT: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ShapMode {
    Exact,
    Sampled,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Baseline {
    Interventional,
    MeanImputation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ShapConfig {
    pub mode: ShapMode,
    pub background_size: usize,
    pub n_permutations: usize,
    pub seed: u64,
    pub baseline: Baseline,
}

impl Default for ShapConfig {
    fn default() -> Self {
        ShapConfig {
            mode: ShapMode::Exact,
            background_size: 100,
            n_permutations: 2000,
            seed: 0,
            baseline: Baseline::Interventional,
        }
    }
}

/// Attributions for a batch of instances.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShapValues {
    pub feature_names: Vec<String>,
    pub base_value: f64,
    /// One row per instance, one column per feature.
    pub values: Array2<f64>,
    /// The explained instances, in raw feature units.
    pub data: Array2<f64>,
    /// Model output for each instance.
    pub predictions: Array1<f64>,
}

/// Draws `size` background rows without replacement, kept in table order.
/// Returns every row when `size >= n`.
pub fn sample_background(x: ArrayView2<f64>, size: usize, seed: u64) -> Array2<f64> {
    let n = x.nrows();
    if size >= n {
        return x.to_owned();
    }
    let mut idx = index::sample(&mut seed::rng(seed), n, size).into_vec();
    idx.sort_unstable();
    x.select(Axis(0), &idx)
}

/// Expected model output with features in `mask` taken from `x` and the
/// rest from each background row.
pub fn value_function<P: Predictor + ?Sized>(
    model: &P,
    x: &[f64],
    mask: &[bool],
    background: ArrayView2<f64>,
) -> f64 {
    let mut z = x.to_vec();
    let mut sum = 0.0;
    for b in background.rows() {
        for (j, zj) in z.iter_mut().enumerate() {
            *zj = if mask[j] { x[j] } else { b[j] };
        }
        sum += model.predict_row(&z);
    }
    sum / background.nrows() as f64
}

fn mask_bits(bits: u64, m: usize) -> Vec<bool> {
    (0..m).map(|j| bits >> j & 1 == 1).collect()
}

fn check_inputs<P: Predictor + ?Sized>(
    model: &P,
    m: usize,
    background: ArrayView2<f64>,
) -> Result<()> {
    if model.n_features() != m {
        return Err(Error::DimensionMismatch {
            expected: model.n_features(),
            actual: m,
        });
    }
    if background.ncols() != m {
        return Err(Error::DimensionMismatch {
            expected: m,
            actual: background.ncols(),
        });
    }
    if background.nrows() == 0 {
        return Err(Error::InsufficientData("empty background sample".into()));
    }
    Ok(())
}

/// `s!(M-s-1)!/M!` for every coalition size `s`.
fn shapley_weights(m: usize) -> Vec<f64> {
    let mut binom = 1.0;
    (0..m)
        .map(|s| {
            if s > 0 {
                binom = binom * (m - s) as f64 / s as f64;
            }
            1.0 / (m as f64 * binom)
        })
        .collect()
}

/// Exact Shapley values by full coalition enumeration. Returns
/// `(base_value, phi)`.
pub fn exact_shapley<P: Predictor + ?Sized>(
    model: &P,
    x: &[f64],
    background: ArrayView2<f64>,
) -> Result<(f64, Vec<f64>)> {
    let m = x.len();
    if m > EXACT_LIMIT {
        return Err(Error::ExactModeRefused {
            features: m,
            limit: EXACT_LIMIT,
        });
    }
    check_inputs(model, m, background)?;
    let v: Vec<f64> = (0..1u64 << m)
        .into_par_iter()
        .map(|bits| value_function(model, x, &mask_bits(bits, m), background))
        .collect();
    let w = shapley_weights(m);
    let mut phi = vec![0.0; m];
    for (i, p) in phi.iter_mut().enumerate() {
        let bit = 1u64 << i;
        for s in 0..1u64 << m {
            if s & bit == 0 {
                *p += w[s.count_ones() as usize] * (v[(s | bit) as usize] - v[s as usize]);
            }
        }
    }
    Ok((v[0], phi))
}

/// Monte Carlo Shapley values over `n_permutations` random orderings.
/// Coalition values are cached, so repeated prefixes cost nothing.
pub fn permutation_shapley<P: Predictor + ?Sized>(
    model: &P,
    x: &[f64],
    background: ArrayView2<f64>,
    n_permutations: usize,
    rng: &mut ChaCha8Rng,
) -> Result<(f64, Vec<f64>)> {
    let m = x.len();
    if m > 64 {
        return Err(Error::Argument(format!(
            "sampled mode supports at most 64 features, got {m}"
        )));
    }
    if n_permutations == 0 {
        return Err(Error::Argument("n_permutations must be >= 1".into()));
    }
    check_inputs(model, m, background)?;
    let mut cache: HashMap<u64, f64> = HashMap::new();
    let mut value = |bits: u64| {
        *cache
            .entry(bits)
            .or_insert_with(|| value_function(model, x, &mask_bits(bits, m), background))
    };
    let base = value(0);
    let mut phi = vec![0.0; m];
    let mut order: Vec<usize> = (0..m).collect();
    for _ in 0..n_permutations {
        order.shuffle(rng);
        let (mut bits, mut prev) = (0u64, base);
        for &j in &order {
            bits |= 1 << j;
            let cur = value(bits);
            phi[j] += cur - prev;
            prev = cur;
        }
    }
    phi.iter_mut().for_each(|p| *p /= n_permutations as f64);
    Ok((base, phi))
}

/// Explains every row of `instances`. Each instance gets its own seed, so
/// results do not depend on the thread count.
pub fn explain<P: Predictor + ?Sized>(
    model: &P,
    instances: ArrayView2<f64>,
    background: ArrayView2<f64>,
    feature_names: &[String],
    config: &ShapConfig,
) -> Result<ShapValues> {
    let m = instances.ncols();
    if feature_names.len() != m {
        return Err(Error::DimensionMismatch {
            expected: m,
            actual: feature_names.len(),
        });
    }
    if config.mode == ShapMode::Exact && m > EXACT_LIMIT {
        return Err(Error::ExactModeRefused {
            features: m,
            limit: EXACT_LIMIT,
        });
    }
    let bg = match config.baseline {
        Baseline::Interventional => background.to_owned(),
        Baseline::MeanImputation => {
            check_inputs(model, m, background)?;
            background.mean_axis(Axis(0)).unwrap().insert_axis(Axis(0))
        }
    };
    check_inputs(model, m, bg.view())?;
    let rows: Vec<(f64, Vec<f64>)> = (0..instances.nrows())
        .into_par_iter()
        .map(|i| {
            let x = instances.row(i).to_vec();
            match config.mode {
                ShapMode::Exact => exact_shapley(model, &x, bg.view()),
                ShapMode::Sampled => {
                    let mut rng = seed::rng(seed::derive_indexed(config.seed, i as u64));
                    permutation_shapley(model, &x, bg.view(), config.n_permutations, &mut rng)
                }
            }
        })
        .collect::<Result<_>>()?;
    let base_value = match rows.first() {
        Some((b, _)) => *b,
        None => value_function(model, &vec![0.0; m], &vec![false; m], bg.view()),
    };
    let mut values = Array2::zeros((rows.len(), m));
    for (i, (_, phi)) in rows.iter().enumerate() {
        values.row_mut(i).assign(&ArrayView1::from(phi.as_slice()));
    }
    Ok(ShapValues {
        feature_names: feature_names.to_vec(),
        base_value,
        values,
        data: instances.to_owned(),
        predictions: model.predict(instances)?,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureImportance {
    pub feature: String,
    pub mean_abs_shap: f64,
}

/// One dot of a beeswarm plot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BeeswarmPoint {
    pub feature: String,
    pub instance: usize,
    pub shap_value: f64,
    pub feature_value: f64,
    /// Feature value min-max scaled over the explained instances; 0.5 when
    /// the feature is constant.
    pub scaled_value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GlobalImportance {
    pub base_value: f64,
    /// Descending mean |phi|, ties broken by feature name.
    pub ranking: Vec<FeatureImportance>,
    pub points: Vec<BeeswarmPoint>,
}

pub fn summarize(shap: &ShapValues) -> GlobalImportance {
    let n = shap.values.nrows();
    let mut ranking: Vec<FeatureImportance> = shap
        .feature_names
        .iter()
        .enumerate()
        .map(|(j, name)| FeatureImportance {
            feature: name.clone(),
            mean_abs_shap: if n == 0 {
                0.0
            } else {
                shap.values.column(j).iter().map(|v| v.abs()).sum::<f64>() / n as f64
            },
        })
        .collect();
    ranking.sort_by(|a, b| {
        b.mean_abs_shap
            .total_cmp(&a.mean_abs_shap)
            .then_with(|| a.feature.cmp(&b.feature))
    });

    let mut points = Vec::with_capacity(n * shap.feature_names.len());
    for r in &ranking {
        let j = shap.feature_names.iter().position(|f| *f == r.feature).unwrap();
        let col = shap.data.column(j);
        let lo = col.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = col.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        for i in 0..n {
            let v = shap.data[[i, j]];
            points.push(BeeswarmPoint {
                feature: r.feature.clone(),
                instance: i,
                shap_value: shap.values[[i, j]],
                feature_value: v,
                scaled_value: if hi > lo { (v - lo) / (hi - lo) } else { 0.5 },
            });
        }
    }
    GlobalImportance {
        base_value: shap.base_value,
        ranking,
        points,
    }
}
