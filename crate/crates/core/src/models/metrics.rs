use ndarray::{ArrayView1, ArrayView2};
use serde::{Deserialize, Serialize};

use super::Predictor;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalMetrics {
    pub mse: f64,
    pub mae: f64,
    pub r2: f64,
}

/// MSE, MAE and `R² = 1 - SS_res / SS_tot` (about `mean(y)`).
pub fn regression_metrics(y: ArrayView1<f64>, y_hat: ArrayView1<f64>) -> Result<EvalMetrics> {
    if y.len() != y_hat.len() {
        return Err(Error::DimensionMismatch {
            expected: y.len(),
            actual: y_hat.len(),
        });
    }
    if y.len() < 2 {
        return Err(Error::InsufficientData(format!(
            "metrics need at least 2 targets, got {}",
            y.len()
        )));
    }
    let n = y.len() as f64;
    let mean = y.sum() / n;
    let ss_tot: f64 = y.iter().map(|v| (v - mean) * (v - mean)).sum();
    if ss_tot == 0.0 {
        return Err(Error::UndefinedR2);
    }
    let (ss_res, abs_sum) = y
        .iter()
        .zip(y_hat.iter())
        .fold((0.0, 0.0), |(s, a), (t, p)| (s + (t - p) * (t - p), a + (t - p).abs()));
    Ok(EvalMetrics {
        mse: ss_res / n,
        mae: abs_sum / n,
        r2: 1.0 - ss_res / ss_tot,
    })
}

pub fn evaluate<P: Predictor + ?Sized>(
    model: &P,
    x: ArrayView2<f64>,
    y: ArrayView1<f64>,
) -> Result<EvalMetrics> {
    let pred = model.predict(x)?;
    regression_metrics(y, pred.view())
}
