//! Classical homoskedastic Anderson–Rubin test for linear IV models.
//!
//! With `u = y − X_t β₀` for the tested (endogenous) columns and the
//! exogenous columns `W` partialled out of `u` and `Z`,
//!
//! `AR = [ũᵀ P ũ / q] / [ũᵀ (I − P) ũ / (n − q − k)]`
//!
//! where `P` projects onto the partialled instruments and `k = dim W`.
//! Under normal errors `AR ~ F(q, n − q − k)` exactly.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;
use statrs::function::beta::checked_beta_reg;

use crate::data::Dataset;
use crate::error::{input, Error, Result};

#[derive(Debug, Clone, Serialize)]
pub struct ARResult {
    pub statistic: f64,
    pub df1: usize,
    pub df2: usize,
    pub critical_value: f64,
    pub p_value: f64,
    pub reject: bool,
    pub alpha: f64,
}

fn check_df(d1: usize, d2: usize) -> Result<()> {
    if d1 == 0 || d2 == 0 {
        return input(format!("F degrees of freedom must be positive, got ({d1}, {d2})"));
    }
    Ok(())
}

fn beta_cdf(y: f64, d1: usize, d2: usize) -> Result<f64> {
    checked_beta_reg(d1 as f64 / 2.0, d2 as f64 / 2.0, y).map_err(|e| Error::Input(e.to_string()))
}

/// `P(F(d1, d2) ≤ x)`.
pub fn f_cdf(x: f64, d1: usize, d2: usize) -> Result<f64> {
    check_df(d1, d2)?;
    if x.is_nan() {
        return input("F cdf evaluated at NaN");
    }
    if x <= 0.0 {
        return Ok(0.0);
    }
    if x.is_infinite() {
        return Ok(1.0);
    }
    let (a, b) = (d1 as f64 * x, d2 as f64);
    beta_cdf(a / (a + b), d1, d2)
}

/// Inverse of [`f_cdf`] by bisection on the incomplete-beta scale
/// `y = d1·x / (d1·x + d2)`.
pub fn f_quantile(p: f64, d1: usize, d2: usize) -> Result<f64> {
    check_df(d1, d2)?;
    if !(p > 0.0 && p < 1.0) {
        return input(format!("probability {p} outside (0, 1)"));
    }
    let (mut lo, mut hi) = (0.0_f64, 1.0_f64);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if beta_cdf(mid, d1, d2)? < p {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let y = 0.5 * (lo + hi);
    Ok(d2 as f64 * y / (d1 as f64 * (1.0 - y)))
}

/// Residual of `v` after least-squares projection on the columns of `w`.
fn partial_out(w: &DMatrix<f64>, v: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if w.ncols() == 0 {
        return Ok(v.clone());
    }
    let q = orthonormal_basis(w, "exogenous regressors")?;
    Ok(v - &q * q.tr_mul(v))
}

/// Thin-QR orthonormal basis; errors when the columns are rank deficient.
fn orthonormal_basis(a: &DMatrix<f64>, what: &str) -> Result<DMatrix<f64>> {
    let qr = a.clone().qr();
    let r = qr.r();
    let scale = (0..r.ncols()).map(|j| r[(j, j)].abs()).fold(0.0, f64::max);
    let tol = 1e-10 * scale.max(f64::MIN_POSITIVE);
    if (0..r.ncols()).any(|j| r[(j, j)].abs() <= tol) {
        return input(format!("{what} are rank deficient"));
    }
    Ok(qr.q())
}

/// AR test of `β = β₀` on the columns of `x` not listed in `exog`, with the
/// listed columns treated as exogenous controls.
pub fn ar_statistic(data: &Dataset, beta0: &[f64], exog: &[usize], alpha: f64) -> Result<ARResult> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::Config(format!("alpha = {alpha} outside (0, 1)")));
    }
    let p = data.p();
    let mut is_exog = vec![false; p];
    for &j in exog {
        if j >= p || is_exog[j] {
            return input(format!("exogenous column index {j} invalid or repeated"));
        }
        is_exog[j] = true;
    }
    let tested: Vec<usize> = (0..p).filter(|&j| !is_exog[j]).collect();
    if tested.len() != beta0.len() {
        return input(format!("β₀ has length {}, but {} columns are tested", beta0.len(), tested.len()));
    }
    let (n, q, k) = (data.n(), data.q(), exog.len());
    if n <= q + k {
        return input(format!("AR test needs n > q + k, got n = {n}, q = {q}, k = {k}"));
    }
    let mut u: DVector<f64> = data.y().clone();
    for (&j, &b) in tested.iter().zip(beta0) {
        u -= data.x().column(j) * b;
    }
    let w = data.x().select_columns(exog);
    let u_t = partial_out(&w, &DMatrix::from_column_slice(n, 1, u.as_slice()))?;
    let z_t = partial_out(&w, data.z())?;
    let basis = orthonormal_basis(&z_t, "partialled instruments")?;
    let proj = basis.tr_mul(&u_t);
    let explained = proj.norm_squared();
    let total = u_t.norm_squared();
    let resid = (total - explained).max(0.0);
    let df1 = q;
    let df2 = n - q - k;
    let statistic = if explained == 0.0 {
        0.0
    } else if resid == 0.0 {
        f64::INFINITY
    } else {
        (explained / df1 as f64) / (resid / df2 as f64)
    };
    let critical_value = f_quantile(1.0 - alpha, df1, df2)?;
    let p_value = 1.0 - f_cdf(statistic, df1, df2)?;
    Ok(ARResult { statistic, df1, df2, critical_value, p_value, reject: statistic > critical_value, alpha })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn tabulated_quantiles() {
        assert_abs_diff_eq!(f_quantile(0.95, 1, 10).unwrap(), 4.964_602_7, epsilon = 1e-6);
        assert_abs_diff_eq!(f_quantile(0.5, 7, 7).unwrap(), 1.0, epsilon = 1e-10);
        assert_abs_diff_eq!(f_quantile(0.95, 1, 1_000_000).unwrap(), 3.8415, epsilon = 1e-3);
    }

    #[test]
    fn quantile_round_trip() {
        for &(d1, d2) in &[(1, 5), (3, 40), (10, 989)] {
            for &p in &[0.01, 0.3, 0.9, 0.999] {
                let x = f_quantile(p, d1, d2).unwrap();
                assert_abs_diff_eq!(f_cdf(x, d1, d2).unwrap(), p, epsilon = 1e-7);
            }
        }
    }

    #[test]
    fn invalid_arguments() {
        assert!(f_quantile(1.0, 1, 1).is_err());
        assert!(f_quantile(0.5, 0, 1).is_err());
        assert_eq!(f_cdf(-1.0, 2, 3).unwrap(), 0.0);
    }

    #[test]
    fn orthogonal_residual_gives_zero() {
        let z = DMatrix::from_column_slice(4, 1, &[1.0, 1.0, -1.0, -1.0]);
        let x = DMatrix::from_column_slice(4, 1, &[0.0, 0.0, 0.0, 0.0]);
        let y = DVector::from_column_slice(&[1.0, -1.0, 1.0, -1.0]);
        let data = Dataset::new(y, x, z).unwrap();
        let r = ar_statistic(&data, &[0.0], &[], 0.05).unwrap();
        assert!(r.statistic < 1e-20);
        assert!(!r.reject);
        assert_eq!((r.df1, r.df2), (1, 3));
    }

    #[test]
    fn hand_computed_statistic() {
        // u = (1, 2, 3, 4), z = 1: explained = n·ū² = 25, total = 30.
        let z = DMatrix::from_element(4, 1, 1.0);
        let x = DMatrix::from_element(4, 1, 0.0);
        let y = DVector::from_column_slice(&[1.0, 2.0, 3.0, 4.0]);
        let data = Dataset::new(y, x, z).unwrap();
        let r = ar_statistic(&data, &[0.0], &[], 0.05).unwrap();
        assert_abs_diff_eq!(r.statistic, 25.0 / (5.0 / 3.0), epsilon = 1e-12);
    }

    #[test]
    fn rank_deficiency_and_sizes() {
        let z = DMatrix::from_row_slice(3, 2, &[1.0, 2.0, 1.0, 2.0, 1.0, 2.0]);
        let x = DMatrix::from_element(3, 1, 0.0);
        let y = DVector::from_column_slice(&[1.0, 0.0, 2.0]);
        let data = Dataset::new(y, x, z).unwrap();
        assert!(ar_statistic(&data, &[0.0], &[], 0.05).is_err());
        let z = DMatrix::from_element(2, 1, 1.0);
        let x = DMatrix::from_element(2, 1, 0.0);
        let data = Dataset::new(DVector::from_column_slice(&[1.0, 2.0]), x, z).unwrap();
        assert!(ar_statistic(&data, &[], &[0], 0.05).is_err());
    }
}
