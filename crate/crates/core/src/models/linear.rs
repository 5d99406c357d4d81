use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use super::linalg;
use crate::error::Result;

pub const LASSO_TOL: f64 = 1e-6;
pub const LASSO_MAX_SWEEPS: usize = 10_000;

/// Affine model in standardized feature space:
/// `y = intercept + Σ coef_j (x_j - mean_j) / scale_j`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearModel {
    pub means: Vec<f64>,
    pub scales: Vec<f64>,
    /// Coefficients on standardized features.
    pub coefficients: Vec<f64>,
    pub intercept: f64,
}

impl LinearModel {
    pub fn predict_row(&self, row: &[f64]) -> f64 {
        let mut s = self.intercept;
        for j in 0..self.coefficients.len() {
            s += self.coefficients[j] * (row[j] - self.means[j]) / self.scales[j];
        }
        s
    }

    /// Coefficients on the raw feature scale.
    pub fn raw_coefficients(&self) -> Vec<f64> {
        self.coefficients
            .iter()
            .zip(&self.scales)
            .map(|(c, s)| c / s)
            .collect()
    }

    pub fn raw_intercept(&self) -> f64 {
        self.intercept
            - self
                .raw_coefficients()
                .iter()
                .zip(&self.means)
                .map(|(c, m)| c * m)
                .sum::<f64>()
    }
}

pub(crate) struct Standardized {
    pub z: Array2<f64>,
    pub y: Array1<f64>,
    pub means: Vec<f64>,
    pub scales: Vec<f64>,
    pub y_mean: f64,
}

/// Centers and scales columns by population std; zero-variance columns keep
/// scale 1 and become all-zero.
pub(crate) fn standardize(x: ArrayView2<f64>, y: ArrayView1<f64>) -> Standardized {
    let n = x.nrows() as f64;
    let means: Vec<f64> = x.mean_axis(Axis(0)).expect("non-empty").to_vec();
    let scales: Vec<f64> = x
        .columns()
        .into_iter()
        .zip(&means)
        .map(|(c, m)| {
            let var = c.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / n;
            if var > 0.0 {
                var.sqrt()
            } else {
                1.0
            }
        })
        .collect();
    let mut z = x.to_owned();
    for (j, mut col) in z.columns_mut().into_iter().enumerate() {
        col.mapv_inplace(|v| (v - means[j]) / scales[j]);
    }
    // Exact zeros for constant columns, whatever rounding left behind.
    for (j, mut col) in z.columns_mut().into_iter().enumerate() {
        if x.column(j).iter().all(|&v| v == x[[0, j]]) {
            col.fill(0.0);
        }
    }
    let y_mean = y.sum() / n;
    Standardized {
        z,
        y: y.mapv(|v| v - y_mean),
        means,
        scales,
        y_mean,
    }
}

fn finish(s: Standardized, coefficients: Array1<f64>) -> LinearModel {
    LinearModel {
        means: s.means,
        scales: s.scales,
        coefficients: coefficients.to_vec(),
        intercept: s.y_mean,
    }
}

/// Ordinary least squares via Householder QR. Constant columns get a zero
/// coefficient and are left out of the solve.
pub fn fit_ols(x: ArrayView2<f64>, y: ArrayView1<f64>) -> Result<LinearModel> {
    let s = standardize(x, y);
    let live: Vec<usize> = (0..s.z.ncols())
        .filter(|&j| s.z.column(j).iter().any(|&v| v != 0.0))
        .collect();
    let sub = s.z.select(Axis(1), &live);
    let solved = linalg::lstsq_qr(sub.view(), s.y.view())?;
    let mut beta = Array1::zeros(s.z.ncols());
    for (k, &j) in live.iter().enumerate() {
        beta[j] = solved[k];
    }
    Ok(finish(s, beta))
}

/// Minimizes `||y - Zβ||² + alpha ||β||²`; the intercept is not penalized.
pub fn fit_ridge(x: ArrayView2<f64>, y: ArrayView1<f64>, alpha: f64) -> Result<LinearModel> {
    let s = standardize(x, y);
    let mut gram = s.z.t().dot(&s.z);
    for i in 0..gram.nrows() {
        gram[[i, i]] += alpha;
    }
    let rhs = s.z.t().dot(&s.y);
    let beta = if gram.nrows() == 0 {
        Array1::zeros(0)
    } else {
        linalg::cholesky_solve(&gram, &rhs)?
    };
    Ok(finish(s, beta))
}

pub fn soft_threshold(v: f64, t: f64) -> f64 {
    if v > t {
        v - t
    } else if v < -t {
        v + t
    } else {
        0.0
    }
}

/// Minimizes `(1/2n)||y - Zβ||² + alpha ||β||₁` by cyclic coordinate
/// descent. Stops when no coefficient moves by more than [`LASSO_TOL`] in a
/// sweep, or after [`LASSO_MAX_SWEEPS`] sweeps.
pub fn fit_lasso(x: ArrayView2<f64>, y: ArrayView1<f64>, alpha: f64) -> Result<LinearModel> {
    let s = standardize(x, y);
    let n = s.z.nrows() as f64;
    let p = s.z.ncols();
    let col_sq: Vec<f64> = s
        .z
        .columns()
        .into_iter()
        .map(|c| c.dot(&c) / n)
        .collect();
    let mut beta = Array1::<f64>::zeros(p);
    let mut resid = s.y.clone();
    for _ in 0..LASSO_MAX_SWEEPS {
        let mut max_change: f64 = 0.0;
        for j in 0..p {
            if col_sq[j] == 0.0 {
                continue;
            }
            let col = s.z.column(j);
            let old = beta[j];
            let rho = col.dot(&resid) / n + col_sq[j] * old;
            let new = soft_threshold(rho, alpha) / col_sq[j];
            if new != old {
                resid.scaled_add(old - new, &col);
                beta[j] = new;
                max_change = max_change.max((new - old).abs());
            }
        }
        if max_change < LASSO_TOL {
            break;
        }
    }
    Ok(finish(s, beta))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::error::Error;
    use approx::assert_abs_diff_eq;
    use ndarray::array;
    use proptest::prelude::*;

    #[test]
    fn ols_exact_line() {
        let x = array![[0.0], [1.0], [2.0], [3.0], [4.0]];
        let y = x.column(0).mapv(|v| 2.0 * v + 1.0);
        let m = fit_ols(x.view(), y.view()).unwrap();
        assert!((m.raw_coefficients()[0] - 2.0).abs() < 1e-9);
        assert!((m.raw_intercept() - 1.0).abs() < 1e-9);
        assert!((m.predict_row(&[10.0]) - 21.0).abs() < 1e-9);
    }

    #[test]
    fn ols_singular_design_reports_condition() {
        let x = array![[1.0, 2.0], [2.0, 4.0], [3.0, 6.0], [4.0, 8.0]];
        let y = array![1.0, 2.0, 3.0, 5.0];
        match fit_ols(x.view(), y.view()) {
            Err(Error::Singular { condition, .. }) => assert!(condition > 1e9),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn ols_constant_column_gets_zero_coefficient() {
        let x = array![[1.0, 0.0], [1.0, 1.0], [1.0, 2.0]];
        let m = fit_ols(x.view(), array![1.0, 3.0, 5.0].view()).unwrap();
        assert_eq!(m.coefficients[0], 0.0);
        assert_abs_diff_eq!(m.raw_coefficients()[1], 2.0, epsilon = 1e-12);
        assert_abs_diff_eq!(m.predict_row(&[1.0, 4.0]), 9.0, epsilon = 1e-12);
    }

    #[test]
    fn ridge_huge_alpha_shrinks_to_zero() {
        let x = array![[-1.0, 0.5], [0.0, -1.0], [1.0, 0.5], [2.0, 1.0], [-2.0, -1.0]];
        let y = array![-2.0, 0.5, 2.5, 3.0, -4.0];
        let m = fit_ridge(x.view(), y.view(), 1e9).unwrap();
        assert!(m.coefficients.iter().all(|c| c.abs() < 1e-6));
    }

    #[test]
    fn lasso_orthonormal_design_is_soft_thresholding() {
        // Centered, mutually orthogonal ±1 columns: Z'Z / n = I after scaling.
        let x = array![
            [1.0, 1.0, 1.0],
            [1.0, -1.0, -1.0],
            [-1.0, 1.0, -1.0],
            [-1.0, -1.0, 1.0],
            [1.0, 1.0, 1.0],
            [1.0, -1.0, -1.0],
            [-1.0, 1.0, -1.0],
            [-1.0, -1.0, 1.0]
        ];
        let y = array![3.0, 1.5, -0.2, -2.0, 2.6, 1.1, 0.3, -1.7];
        let ols = fit_ols(x.view(), y.view()).unwrap();
        for alpha in [0.0, 0.1, 0.5, 1.0, 5.0] {
            let l = fit_lasso(x.view(), y.view(), alpha).unwrap();
            for j in 0..3 {
                let expect = soft_threshold(ols.coefficients[j], alpha);
                assert!((l.coefficients[j] - expect).abs() < 1e-6, "alpha {alpha} coef {j}");
            }
        }
    }

    fn well_conditioned(seed: u64, n: usize, p: usize) -> (Array2<f64>, Array1<f64>) {
        use rand::Rng;
        let mut rng = crate::seed::rng(seed);
        let x = Array2::from_shape_fn((n, p), |_| rng.random_range(-1.0..1.0));
        let y = Array1::from_shape_fn(n, |i| {
            (0..p).map(|j| (j as f64 + 1.0) * x[[i, j]]).sum::<f64>() + rng.random_range(-0.1..0.1)
        });
        (x, y)
    }

    #[test]
    fn lasso_alpha_zero_matches_ols() {
        let (x, y) = well_conditioned(11, 200, 4);
        let ols = fit_ols(x.view(), y.view()).unwrap();
        let lasso = fit_lasso(x.view(), y.view(), 0.0).unwrap();
        for (a, b) in ols.coefficients.iter().zip(&lasso.coefficients) {
            assert!((a - b).abs() < 1e-6);
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn ridge_norm_non_increasing_in_alpha(seed in any::<u64>(), a in 0.0f64..50.0, b in 0.0f64..50.0) {
            let (x, y) = well_conditioned(seed, 30, 3);
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            let norm = |alpha| {
                let m = fit_ridge(x.view(), y.view(), alpha).unwrap();
                m.coefficients.iter().map(|c| c * c).sum::<f64>().sqrt()
            };
            prop_assert!(norm(hi) <= norm(lo) + 1e-12);
        }
    }
}
