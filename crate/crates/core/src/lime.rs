//! LIME: local surrogate explanations.
//!
//! Around one instance we draw a neighborhood from per-feature training
//! statistics, weight each sample by an exponential kernel on its scaled
//! distance to the instance, and fit a weighted linear model on an
//! interpretable representation:
//!
//! * discretized mode: continuous features become "same quartile bin as the
//!   instance" indicators;
//! * undiscretized mode: continuous features are standardized, so weights
//!   divided by the training std read as per-unit effects.
//!
//! Categorical features are always "same category as the instance"
//! indicators.

use std::collections::BTreeMap;

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{self, DataTable};
use crate::error::{Error, Result};
use crate::models::linalg::lstsq_qr;
use crate::models::Predictor;
use crate::seed;

/// Integer-valued columns with at most this many distinct values are
/// treated as categorical unless configured otherwise.
pub const MAX_INFERRED_CATEGORIES: usize = 10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LimeConfig {
    pub n_samples: usize,
    /// Defaults to `0.75 * sqrt(n_features)`.
    pub kernel_width: Option<f64>,
    pub max_features: usize,
    pub n_bins: usize,
    pub discretize: bool,
    pub seed: u64,
    /// Overrides categorical inference when set.
    pub categorical_features: Option<Vec<String>>,
}

impl Default for LimeConfig {
    fn default() -> Self {
        LimeConfig {
            n_samples: 5000,
            kernel_width: None,
            max_features: 6,
            n_bins: 4,
            discretize: true,
            seed: 0,
            categorical_features: None,
        }
    }
}

impl LimeConfig {
    pub fn kernel_width_for(&self, n_features: usize) -> f64 {
        self.kernel_width
            .unwrap_or_else(|| 0.75 * (n_features as f64).sqrt())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FeatureStats {
    Continuous {
        name: String,
        mean: f64,
        std: f64,
        /// Interior quantile bin edges, strictly increasing.
        edges: Vec<f64>,
    },
    Categorical {
        name: String,
        values: Vec<f64>,
        labels: Vec<String>,
        frequencies: Vec<f64>,
    },
}

impl FeatureStats {
    pub fn name(&self) -> &str {
        match self {
            FeatureStats::Continuous { name, .. } | FeatureStats::Categorical { name, .. } => name,
        }
    }

    fn bin(edges: &[f64], v: f64) -> usize {
        edges.iter().filter(|&&e| v > e).count()
    }

    fn value_label(&self, v: f64) -> String {
        match self {
            FeatureStats::Categorical { values, labels, .. } => values
                .iter()
                .position(|&c| c == v)
                .map(|i| labels[i].clone())
                .unwrap_or_else(|| fmt_number(v)),
            FeatureStats::Continuous { .. } => format!("{v:.2}"),
        }
    }
}

fn fmt_number(v: f64) -> String {
    if v.fract() == 0.0 && v.abs() < 1e15 {
        format!("{}", v as i64)
    } else {
        format!("{v}")
    }
}

/// Training-set statistics that drive neighborhood sampling.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LimeStats {
    pub features: Vec<FeatureStats>,
}

impl LimeStats {
    /// `categorical[j]` marks feature `j`; `labels` maps a feature name to
    /// the category label for each integer code.
    pub fn from_matrix(
        x: ArrayView2<f64>,
        names: &[String],
        categorical: &[bool],
        labels: &BTreeMap<String, Vec<String>>,
        n_bins: usize,
    ) -> Result<LimeStats> {
        if names.len() != x.ncols() || categorical.len() != x.ncols() {
            return Err(Error::DimensionMismatch {
                expected: x.ncols(),
                actual: names.len().min(categorical.len()),
            });
        }
        if x.nrows() < 2 {
            return Err(Error::InsufficientData(format!(
                "LIME statistics need at least 2 rows, got {}",
                x.nrows()
            )));
        }
        if n_bins < 2 {
            return Err(Error::Argument(format!("n_bins must be >= 2, got {n_bins}")));
        }
        let features = names
            .iter()
            .enumerate()
            .map(|(j, name)| {
                let col: Vec<f64> = x.column(j).to_vec();
                if col.iter().any(|v| !v.is_finite()) {
                    return Err(Error::Argument(format!(
                        "feature `{name}` has missing values"
                    )));
                }
                if categorical[j] {
                    let mut counts: BTreeMap<i64, usize> = BTreeMap::new();
                    for &v in &col {
                        *counts.entry(v.round() as i64).or_default() += 1;
                    }
                    let values: Vec<f64> = counts.keys().map(|&k| k as f64).collect();
                    let frequencies = counts
                        .values()
                        .map(|&c| c as f64 / col.len() as f64)
                        .collect();
                    let labels = values
                        .iter()
                        .map(|&v| {
                            labels
                                .get(name)
                                .and_then(|l| l.get(v as usize))
                                .cloned()
                                .unwrap_or_else(|| fmt_number(v))
                        })
                        .collect();
                    Ok(FeatureStats::Categorical {
                        name: name.clone(),
                        values,
                        labels,
                        frequencies,
                    })
                } else {
                    let mut sorted = col.clone();
                    sorted.sort_by(f64::total_cmp);
                    let mut edges: Vec<f64> = (1..n_bins)
                        .map(|k| dataset::percentile_sorted(&sorted, k as f64 / n_bins as f64))
                        .collect();
                    edges.dedup();
                    Ok(FeatureStats::Continuous {
                        name: name.clone(),
                        mean: dataset::mean(&col),
                        std: dataset::sample_std(&col),
                        edges,
                    })
                }
            })
            .collect::<Result<_>>()?;
        Ok(LimeStats { features })
    }

    /// Builds statistics for `feature_names` of `table`. Encoded string
    /// columns and small integer-valued columns count as categorical
    /// unless `categorical_features` is given.
    pub fn from_table(
        table: &DataTable,
        feature_names: &[String],
        config: &LimeConfig,
    ) -> Result<LimeStats> {
        let idx = table.column_indices(feature_names)?;
        let x = table.rows().select(Axis(1), &idx);
        let categorical: Vec<bool> = match &config.categorical_features {
            Some(list) => feature_names.iter().map(|f| list.contains(f)).collect(),
            None => feature_names
                .iter()
                .enumerate()
                .map(|(j, f)| table.encodings().contains_key(f) || looks_categorical(x.column(j)))
                .collect(),
        };
        LimeStats::from_matrix(x.view(), feature_names, &categorical, table.encodings(), config.n_bins)
    }

    pub fn n_features(&self) -> usize {
        self.features.len()
    }
}

fn looks_categorical(col: ArrayView1<f64>) -> bool {
    let mut distinct: Vec<f64> = Vec::new();
    for &v in col {
        if !v.is_finite() || v.fract() != 0.0 {
            return false;
        }
        if !distinct.contains(&v) {
            distinct.push(v);
            if distinct.len() > MAX_INFERRED_CATEGORIES {
                return false;
            }
        }
    }
    true
}

/// `exp(-d^2 / width^2)`.
pub fn kernel_weight(distance: f64, width: f64) -> Result<f64> {
    if !(width > 0.0 && width.is_finite()) {
        return Err(Error::Argument(format!("kernel width must be > 0, got {width}")));
    }
    Ok((-(distance * distance) / (width * width)).exp())
}

/// Perturbed samples around one instance. Row 0 is the instance itself.
#[derive(Debug, Clone)]
pub struct Neighborhood {
    pub samples: Array2<f64>,
    pub interpretable: Array2<f64>,
    pub distances: Array1<f64>,
    pub warnings: Vec<String>,
}

pub fn perturb_neighborhood(
    x: &[f64],
    stats: &LimeStats,
    n_samples: usize,
    discretize: bool,
    rng: &mut ChaCha8Rng,
) -> Result<Neighborhood> {
    let m = stats.n_features();
    if x.len() != m {
        return Err(Error::DimensionMismatch {
            expected: m,
            actual: x.len(),
        });
    }
    if n_samples < 2 {
        return Err(Error::Argument(format!("n_samples must be >= 2, got {n_samples}")));
    }
    let mut warnings = Vec::new();
    let mut samples = Array2::zeros((n_samples, m));
    let mut interp = Array2::zeros((n_samples, m));
    let mut sq = Array1::<f64>::zeros(n_samples);
    for (j, fs) in stats.features.iter().enumerate() {
        match fs {
            FeatureStats::Continuous { name, mean, std, edges } => {
                if *std == 0.0 {
                    warnings.push(format!("feature `{name}` has zero variance; held constant"));
                }
                let x_bin = FeatureStats::bin(edges, x[j]);
                for i in 0..n_samples {
                    let z = if i == 0 || *std == 0.0 {
                        x[j]
                    } else {
                        let e: f64 = StandardNormal.sample(rng);
                        mean + std * e
                    };
                    samples[[i, j]] = z;
                    interp[[i, j]] = if discretize {
                        f64::from(u8::from(FeatureStats::bin(edges, z) == x_bin))
                    } else if *std > 0.0 {
                        (z - mean) / std
                    } else {
                        0.0
                    };
                    if *std > 0.0 {
                        sq[i] += ((z - x[j]) / std).powi(2);
                    }
                }
            }
            FeatureStats::Categorical { values, frequencies, .. } => {
                for i in 0..n_samples {
                    let z = if i == 0 {
                        x[j]
                    } else {
                        let u: f64 = rng.random();
                        let mut acc = 0.0;
                        let mut pick = values[values.len() - 1];
                        for (v, f) in values.iter().zip(frequencies) {
                            acc += f;
                            if u < acc {
                                pick = *v;
                                break;
                            }
                        }
                        pick
                    };
                    samples[[i, j]] = z;
                    let same = z == x[j];
                    interp[[i, j]] = f64::from(u8::from(same));
                    if !same {
                        sq[i] += 1.0;
                    }
                }
            }
        }
    }
    Ok(Neighborhood {
        samples,
        interpretable: interp,
        distances: sq.mapv(f64::sqrt),
        warnings,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Effect {
    Increases,
    Decreases,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Contribution {
    pub feature: String,
    pub condition: String,
    /// Surrogate coefficient on the interpretable feature.
    pub weight: f64,
    /// Weight per raw unit; set for continuous features in undiscretized mode.
    pub per_unit_weight: Option<f64>,
    pub effect: Effect,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalExplanation {
    pub instance: String,
    pub predicted_value: f64,
    pub intercept: f64,
    /// Surrogate output at the instance.
    pub local_prediction: f64,
    /// Kernel-weighted R² of the surrogate on the neighborhood; absent when
    /// the model is constant there.
    pub local_fit_r2: Option<f64>,
    /// Sorted by descending |weight|.
    pub contributions: Vec<Contribution>,
    pub warnings: Vec<String>,
}

/// Weighted least squares `y ~ 1 + z[:, cols]`. Returns
/// `(coefficients with intercept first, weighted SSE)`.
fn wls(
    z: ArrayView2<f64>,
    y: ArrayView1<f64>,
    sqrt_w: &Array1<f64>,
    cols: &[usize],
) -> Result<(Array1<f64>, f64)> {
    let n = z.nrows();
    let mut a = Array2::zeros((n, cols.len() + 1));
    for i in 0..n {
        a[[i, 0]] = sqrt_w[i];
        for (k, &c) in cols.iter().enumerate() {
            a[[i, k + 1]] = sqrt_w[i] * z[[i, c]];
        }
    }
    let b = &y * sqrt_w;
    let beta = lstsq_qr(a.view(), b.view())?;
    let resid = &b - &a.dot(&beta);
    Ok((beta, resid.dot(&resid)))
}

/// Greedy forward selection of up to `max_features` interpretable columns
/// by weighted SSE, then a weighted least-squares refit. Returns
/// `(selected columns, coefficients with intercept first)`.
pub fn fit_local_surrogate(
    z: ArrayView2<f64>,
    y: ArrayView1<f64>,
    weights: ArrayView1<f64>,
    max_features: usize,
) -> Result<(Vec<usize>, Array1<f64>)> {
    let sqrt_w = weights.mapv(f64::sqrt);
    let (mut beta, mut sse) = wls(z, y, &sqrt_w, &[])?;
    let tol = 1e-12 * sse;
    let mut selected: Vec<usize> = Vec::new();
    while selected.len() < max_features.min(z.ncols()) {
        let mut best: Option<(usize, Array1<f64>, f64)> = None;
        for c in (0..z.ncols()).filter(|c| !selected.contains(c)) {
            let mut cols = selected.clone();
            cols.push(c);
            if let Ok((b, s)) = wls(z, y, &sqrt_w, &cols) {
                if best.as_ref().is_none_or(|(_, _, bs)| s < *bs) {
                    best = Some((c, b, s));
                }
            }
        }
        match best {
            Some((c, b, s)) if sse - s > tol => {
                selected.push(c);
                beta = b;
                sse = s;
            }
            _ => break,
        }
    }
    Ok((selected, beta))
}

fn condition_label(fs: &FeatureStats, x: f64, discretize: bool) -> String {
    match fs {
        FeatureStats::Categorical { name, .. } => format!("{name} = {}", fs.value_label(x)),
        FeatureStats::Continuous { name, edges, .. } => {
            if !discretize || edges.is_empty() {
                return format!("{name} = {x:.2}");
            }
            let b = FeatureStats::bin(edges, x);
            if b == 0 {
                format!("{name} <= {:.2}", edges[0])
            } else if b == edges.len() {
                format!("{name} > {:.2}", edges[b - 1])
            } else {
                format!("{:.2} < {name} <= {:.2}", edges[b - 1], edges[b])
            }
        }
    }
}

pub fn explain_instance<P: Predictor + ?Sized>(
    model: &P,
    x: &[f64],
    instance: &str,
    stats: &LimeStats,
    config: &LimeConfig,
    rng: &mut ChaCha8Rng,
) -> Result<LocalExplanation> {
    let m = stats.n_features();
    if model.n_features() != m {
        return Err(Error::DimensionMismatch {
            expected: model.n_features(),
            actual: m,
        });
    }
    let width = config.kernel_width_for(m);
    let hood = perturb_neighborhood(x, stats, config.n_samples, config.discretize, rng)?;
    let fz = model.predict(hood.samples.view())?;
    let w = hood
        .distances
        .iter()
        .map(|&d| kernel_weight(d, width))
        .collect::<Result<Array1<f64>>>()?;
    let mut warnings = hood.warnings;

    let (selected, beta) = fit_local_surrogate(
        hood.interpretable.view(),
        fz.view(),
        w.view(),
        config.max_features,
    )?;
    if selected.is_empty() {
        warnings.push("no informative interpretable feature; surrogate is intercept only".into());
    }

    let z0 = hood.interpretable.row(0);
    let mut local_prediction = beta[0];
    let mut contributions: Vec<Contribution> = selected
        .iter()
        .enumerate()
        .map(|(k, &j)| {
            let weight = beta[k + 1];
            local_prediction += weight * z0[j];
            let fs = &stats.features[j];
            let per_unit_weight = match fs {
                FeatureStats::Continuous { std, .. } if !config.discretize && *std > 0.0 => {
                    Some(weight / std)
                }
                _ => None,
            };
            Contribution {
                feature: fs.name().to_string(),
                condition: condition_label(fs, x[j], config.discretize),
                weight,
                per_unit_weight,
                effect: if weight > 0.0 {
                    Effect::Increases
                } else {
                    Effect::Decreases
                },
            }
        })
        .collect();
    contributions.sort_by(|a, b| {
        b.weight
            .abs()
            .total_cmp(&a.weight.abs())
            .then_with(|| a.feature.cmp(&b.feature))
    });

    let w_sum = w.sum();
    let f_bar = w.dot(&fz) / w_sum;
    let ss_tot: f64 = w.iter().zip(&fz).map(|(wi, f)| wi * (f - f_bar).powi(2)).sum();
    let local_fit_r2 = (ss_tot > 0.0).then(|| {
        let ss_res: f64 = (0..fz.len())
            .map(|i| {
                let zi = hood.interpretable.row(i);
                let pred = beta[0]
                    + selected
                        .iter()
                        .enumerate()
                        .map(|(k, &j)| beta[k + 1] * zi[j])
                        .sum::<f64>();
                w[i] * (fz[i] - pred).powi(2)
            })
            .sum();
        1.0 - ss_res / ss_tot
    });

    Ok(LocalExplanation {
        instance: instance.to_string(),
        predicted_value: fz[0],
        intercept: beta[0],
        local_prediction,
        local_fit_r2,
        contributions,
        warnings,
    })
}

/// Explains every row of `instances`; row `i` uses a seed derived from
/// `config.seed` and `i`.
pub fn explain_rows<P: Predictor + ?Sized>(
    model: &P,
    instances: ArrayView2<f64>,
    keys: &[String],
    stats: &LimeStats,
    config: &LimeConfig,
) -> Result<Vec<LocalExplanation>> {
    if keys.len() != instances.nrows() {
        return Err(Error::DimensionMismatch {
            expected: instances.nrows(),
            actual: keys.len(),
        });
    }
    (0..instances.nrows())
        .into_par_iter()
        .map(|i| {
            let mut rng = seed::rng(seed::derive_indexed(config.seed, i as u64));
            explain_instance(model, &instances.row(i).to_vec(), &keys[i], stats, config, &mut rng)
        })
        .collect()
}
