//! Small dense solvers: Householder QR least squares and Cholesky.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};

use crate::error::{Error, Result};

/// Relative threshold on `|R_ii| / max |R_jj|` below which a column is
/// treated as linearly dependent.
const RANK_TOL: f64 = 1e-10;

/// Least-squares solution of `a * x ≈ b` via Householder QR.
///
/// Fails with [`Error::Singular`] when `a` is rank deficient; the reported
/// condition estimate is `max |R_ii| / min |R_ii|`.
pub fn lstsq_qr(a: ArrayView2<f64>, b: ArrayView1<f64>) -> Result<Array1<f64>> {
    let (m, n) = a.dim();
    if b.len() != m {
        return Err(Error::DimensionMismatch {
            expected: m,
            actual: b.len(),
        });
    }
    if n == 0 {
        return Ok(Array1::zeros(0));
    }
    if m < n {
        return Err(Error::Singular {
            message: format!("{m} rows cannot determine {n} coefficients"),
            condition: f64::INFINITY,
        });
    }
    let mut r = a.to_owned();
    let mut qtb = b.to_owned();
    for k in 0..n {
        let norm = r.column(k).slice(ndarray::s![k..]).iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm == 0.0 {
            continue;
        }
        let alpha = if r[[k, k]] > 0.0 { -norm } else { norm };
        let mut v: Vec<f64> = (k..m).map(|i| r[[i, k]]).collect();
        v[0] -= alpha;
        let vnorm2: f64 = v.iter().map(|x| x * x).sum();
        if vnorm2 == 0.0 {
            continue;
        }
        for j in k..n {
            let dot: f64 = v.iter().enumerate().map(|(i, vi)| vi * r[[k + i, j]]).sum();
            let f = 2.0 * dot / vnorm2;
            for (i, vi) in v.iter().enumerate() {
                r[[k + i, j]] -= f * vi;
            }
        }
        let dot: f64 = v.iter().enumerate().map(|(i, vi)| vi * qtb[k + i]).sum();
        let f = 2.0 * dot / vnorm2;
        for (i, vi) in v.iter().enumerate() {
            qtb[k + i] -= f * vi;
        }
    }
    let diag: Vec<f64> = (0..n).map(|i| r[[i, i]].abs()).collect();
    let max = diag.iter().copied().fold(0.0, f64::max);
    let min = diag.iter().copied().fold(f64::INFINITY, f64::min);
    if max == 0.0 || min <= RANK_TOL * max {
        let worst = diag
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.total_cmp(b.1))
            .map(|(i, _)| i)
            .unwrap_or(0);
        return Err(Error::Singular {
            message: format!("column {worst} is (nearly) linearly dependent on the others"),
            condition: if min == 0.0 { f64::INFINITY } else { max / min },
        });
    }
    let mut x = Array1::zeros(n);
    for i in (0..n).rev() {
        let mut s = qtb[i];
        for j in (i + 1)..n {
            s -= r[[i, j]] * x[j];
        }
        x[i] = s / r[[i, i]];
    }
    Ok(x)
}

/// Solves the symmetric positive definite system `a * x = b`.
pub fn cholesky_solve(a: &Array2<f64>, b: &Array1<f64>) -> Result<Array1<f64>> {
    let n = a.nrows();
    let mut l = Array2::<f64>::zeros((n, n));
    let scale = (0..n).map(|i| a[[i, i]].abs()).fold(0.0, f64::max);
    for j in 0..n {
        let mut d = a[[j, j]];
        for k in 0..j {
            d -= l[[j, k]] * l[[j, k]];
        }
        if d <= RANK_TOL * scale.max(f64::MIN_POSITIVE) {
            return Err(Error::Singular {
                message: format!("matrix not positive definite at pivot {j}"),
                condition: if d <= 0.0 { f64::INFINITY } else { scale / d },
            });
        }
        let djj = d.sqrt();
        l[[j, j]] = djj;
        for i in (j + 1)..n {
            let mut s = a[[i, j]];
            for k in 0..j {
                s -= l[[i, k]] * l[[j, k]];
            }
            l[[i, j]] = s / djj;
        }
    }
    let mut y = Array1::zeros(n);
    for i in 0..n {
        let mut s = b[i];
        for k in 0..i {
            s -= l[[i, k]] * y[k];
        }
        y[i] = s / l[[i, i]];
    }
    let mut x = Array1::zeros(n);
    for i in (0..n).rev() {
        let mut s = y[i];
        for k in (i + 1)..n {
            s -= l[[k, i]] * x[k];
        }
        x[i] = s / l[[i, i]];
    }
    Ok(x)
}
