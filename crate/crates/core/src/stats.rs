//! The moment vector `V`, the statistic `T_n(θ)`, the covariance estimator
//! `Σ̂(θ)` and their quantile-model analogues.
//!
//! Both models reduce to a per-observation weight `w_i(θ)`: the residual
//! `Y_i − g(X_i, θ)` for the mean model and `I[Y_i − g(X_i, θ) ≤ 0] − a_Q` for
//! the quantile model. Everything downstream is a function of `Z` and `w`.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::data::{Dataset, ModelSpec};
use crate::error::{input, Result};
use crate::linalg::{psd_factor, PsdFactor, SymMatrix};

/// Which moment condition the statistic is built from.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "kind", content = "a_q", rename_all = "snake_case")]
pub enum Moment {
    /// `E[Z (Y − g)] = 0`.
    Mean,
    /// `E[Z (I[Y − g ≤ 0] − a_Q)] = 0`.
    Quantile(f64),
}

impl Moment {
    pub(crate) fn validate(self) -> Result<()> {
        match self {
            Moment::Mean => Ok(()),
            Moment::Quantile(a) if a > 0.0 && a < 1.0 => Ok(()),
            Moment::Quantile(a) => input(format!("quantile level a_Q = {a} outside (0, 1)")),
        }
    }

    pub fn is_quantile(self) -> bool {
        matches!(self, Moment::Quantile(_))
    }
}

/// `Σ̂` (or `Σ̂_Q`), its PSD factor and the mean vector `μ̂`.
#[derive(Debug, Clone)]
pub struct SigmaEstimate {
    pub matrix: SymMatrix,
    pub factor: PsdFactor,
    pub mu_hat: DVector<f64>,
}

impl SigmaEstimate {
    pub fn from_matrix(matrix: SymMatrix, mu_hat: DVector<f64>) -> Result<Self> {
        let factor = psd_factor(&matrix)?;
        Ok(Self { matrix, factor, mu_hat })
    }

    pub fn dim(&self) -> usize {
        self.matrix.dim()
    }
}

/// `r_i = y_i − g(x_i, θ)`.
pub fn residuals(data: &Dataset, model: &ModelSpec, theta: &[f64]) -> Result<DVector<f64>> {
    model.check_theta(data, theta)?;
    if model.is_linear() {
        if theta.is_empty() {
            return Ok(data.y().clone());
        }
        let t = DVector::from_column_slice(theta);
        return Ok(data.y() - data.x() * t);
    }
    let mut r = data.y().clone();
    for i in 0..data.n() {
        r[i] -= model.eval_row(data, i, theta)?;
    }
    Ok(r)
}

/// `w_i = I[r_i ≤ 0] − a_Q`; a zero residual counts as `≤ 0`.
pub fn quantile_indicators(data: &Dataset, model: &ModelSpec, theta: &[f64], a_q: f64) -> Result<DVector<f64>> {
    Moment::Quantile(a_q).validate()?;
    let r = residuals(data, model, theta)?;
    Ok(indicators_from_residuals(&r, a_q))
}

pub(crate) fn indicators_from_residuals(r: &DVector<f64>, a_q: f64) -> DVector<f64> {
    r.map(|v| if v <= 0.0 { 1.0 - a_q } else { -a_q })
}

/// Per-observation weights for the chosen moment.
pub fn moment_weights(data: &Dataset, model: &ModelSpec, theta: &[f64], moment: Moment) -> Result<DVector<f64>> {
    moment.validate()?;
    let r = residuals(data, model, theta)?;
    Ok(match moment {
        Moment::Mean => r,
        Moment::Quantile(a) => indicators_from_residuals(&r, a),
    })
}

/// `V_j = n^{-1/2} Σ_i z_ij w_i`.
pub fn moment_from_weights(z: &DMatrix<f64>, w: &DVector<f64>) -> DVector<f64> {
    let n = w.len() as f64;
    z.tr_mul(w) / n.sqrt()
}

/// `Σ_j V_j²`, accumulated per instrument in observation order.
pub fn statistic_from_weights(z: &DMatrix<f64>, w: &DVector<f64>) -> f64 {
    moment_from_weights(z, w).norm_squared()
}

/// Sample covariance (divisor `n`) of the vectors `z_i·w_i`.
pub fn covariance_from_weights(z: &DMatrix<f64>, w: &DVector<f64>) -> Result<SigmaEstimate> {
    let n = w.len() as f64;
    let mut xi = z.clone();
    for mut col in xi.column_iter_mut() {
        col.component_mul_assign(w);
    }
    let mu = xi.row_sum().transpose() / n;
    let second = xi.tr_mul(&xi) / n;
    let cov = second - &mu * mu.transpose();
    SigmaEstimate::from_matrix(SymMatrix::new(cov)?, mu)
}

pub fn moment_vector(data: &Dataset, model: &ModelSpec, theta: &[f64]) -> Result<DVector<f64>> {
    let r = residuals(data, model, theta)?;
    Ok(moment_from_weights(data.z(), &r))
}

/// `T_n(θ) = n⁻¹ Σ_j (Σ_i Z_ij [Y_i − g(X_i, θ)])²`.
pub fn t_statistic(data: &Dataset, model: &ModelSpec, theta: &[f64]) -> Result<f64> {
    let r = residuals(data, model, theta)?;
    Ok(statistic_from_weights(data.z(), &r))
}

/// `Σ̂(θ)` with entries `n⁻¹ Σ_i Z_ij Z_ik r_i² − μ̂_j μ̂_k`.
pub fn sigma_hat(data: &Dataset, model: &ModelSpec, theta: &[f64]) -> Result<SigmaEstimate> {
    let r = residuals(data, model, theta)?;
    covariance_from_weights(data.z(), &r)
}

/// `T_Qn(θ) = n⁻¹ Σ_j (Σ_i Z_ij W_Qi(θ))²`.
pub fn tq_statistic(data: &Dataset, model: &ModelSpec, theta: &[f64], a_q: f64) -> Result<f64> {
    let w = quantile_indicators(data, model, theta, a_q)?;
    Ok(statistic_from_weights(data.z(), &w))
}

pub fn sigma_hat_q(data: &Dataset, model: &ModelSpec, theta: &[f64], a_q: f64) -> Result<SigmaEstimate> {
    let w = quantile_indicators(data, model, theta, a_q)?;
    covariance_from_weights(data.z(), &w)
}

/// Statistic and covariance estimate for either moment in one pass over the
/// residuals.
pub fn statistic_and_sigma(
    data: &Dataset,
    model: &ModelSpec,
    theta: &[f64],
    moment: Moment,
) -> Result<(f64, SigmaEstimate)> {
    let w = moment_weights(data, model, theta, moment)?;
    Ok((statistic_from_weights(data.z(), &w), covariance_from_weights(data.z(), &w)?))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ds(y: &[f64], x: &[f64], p: usize, z: &[f64], q: usize) -> Dataset {
        let n = y.len();
        Dataset::new(DVector::from_column_slice(y), DMatrix::from_row_slice(n, p, x), DMatrix::from_row_slice(n, q, z))
            .unwrap()
    }

    #[test]
    fn residuals_at_zero_are_outcomes() {
        let d = ds(&[1.0, 2.0, 3.0], &[1.0, 0.0, 2.0], 1, &[1.0, 1.0, 1.0], 1);
        let r = residuals(&d, &ModelSpec::linear(1), &[0.0]).unwrap();
        assert_eq!(r.as_slice(), d.y().as_slice());
    }

    #[test]
    fn residuals_vanish_on_exact_fit() {
        let d = ds(&[2.0, 4.0, -1.0], &[1.0, 2.0, -0.5], 1, &[1.0, 2.0, 3.0], 1);
        let r = residuals(&d, &ModelSpec::linear(1), &[2.0]).unwrap();
        assert!(r.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn single_residual_by_hand() {
        let d = ds(&[2.0, 0.0], &[1.0, 0.0], 1, &[1.0, 1.0], 1);
        let r = residuals(&d, &ModelSpec::linear(1), &[1.0]).unwrap();
        assert_eq!(r[0], 1.0);
    }

    #[test]
    fn non_finite_model_output_names_the_row() {
        let d = ds(&[1.0, 1.0, 1.0], &[1.0, 0.0, -1.0], 1, &[1.0, 1.0, 1.0], 1);
        let m = ModelSpec::custom(1, |x, _| 1.0 / x[0]);
        match residuals(&d, &m, &[0.0]) {
            Err(crate::Error::Evaluation { row, .. }) => assert_eq!(row, 1),
            other => panic!("expected an evaluation error, got {other:?}"),
        }
    }

    #[test]
    fn moment_vector_by_hand() {
        let cancel = ds(&[1.0, -1.0], &[], 0, &[1.0, 1.0], 1);
        assert_eq!(moment_vector(&cancel, &ModelSpec::zero(), &[]).unwrap()[0], 0.0);
        let d = ds(&[1.0, 1.0], &[], 0, &[1.0, 2.0], 1);
        let v = moment_vector(&d, &ModelSpec::zero(), &[]).unwrap();
        assert!((v[0] - 3.0 / 2f64.sqrt()).abs() < 1e-15);
        assert!((t_statistic(&d, &ModelSpec::zero(), &[]).unwrap() - 4.5).abs() < 1e-14);
    }

    #[test]
    fn sigma_hat_by_hand() {
        let d = ds(&[1.0, -1.0], &[], 0, &[1.0, 1.0], 1);
        let s = sigma_hat(&d, &ModelSpec::zero(), &[]).unwrap();
        assert_eq!(s.mu_hat[0], 0.0);
        assert_eq!(s.matrix.get(0, 0), 1.0);
    }

    #[test]
    fn zero_residuals_give_zero_sigma() {
        let d = ds(&[0.0, 0.0, 0.0], &[], 0, &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0], 2);
        let s = sigma_hat(&d, &ModelSpec::zero(), &[]).unwrap();
        assert!(s.matrix.as_matrix().iter().all(|v| *v == 0.0));
        assert!(s.mu_hat.iter().all(|v| *v == 0.0));
        assert!(s.factor.lower().iter().all(|v| *v == 0.0));
        assert_eq!(t_statistic(&d, &ModelSpec::zero(), &[]).unwrap(), 0.0);
    }

    #[test]
    fn indicators_follow_tie_convention() {
        let d = ds(&[-1.0, 1.0], &[], 0, &[1.0, 1.0], 1);
        let w = quantile_indicators(&d, &ModelSpec::zero(), &[], 0.5).unwrap();
        assert_eq!(w.as_slice(), &[0.5, -0.5]);
        let tie = ds(&[0.0, 3.0], &[], 0, &[1.0, 1.0], 1);
        let w = quantile_indicators(&tie, &ModelSpec::zero(), &[], 0.25).unwrap();
        assert_eq!(w[0], 0.75);
        let pos = ds(&[1.0, 2.0, 3.0], &[], 0, &[1.0, 1.0, 1.0], 1);
        let w = quantile_indicators(&pos, &ModelSpec::zero(), &[], 0.5).unwrap();
        assert!(w.iter().all(|v| *v == -0.5));
        assert!(quantile_indicators(&pos, &ModelSpec::zero(), &[], 1.0).is_err());
    }

    #[test]
    fn quantile_statistic_by_hand() {
        let d = ds(&[-1.0, 1.0], &[], 0, &[1.0, 1.0], 1);
        assert_eq!(tq_statistic(&d, &ModelSpec::zero(), &[], 0.5).unwrap(), 0.0);
        let both = ds(&[-1.0, -2.0], &[], 0, &[1.0, 1.0], 1);
        assert!((tq_statistic(&both, &ModelSpec::zero(), &[], 0.5).unwrap() - 0.5).abs() < 1e-15);
    }

    #[test]
    fn quantile_sigma_by_hand() {
        let d = ds(&[-1.0, 1.0], &[], 0, &[1.0, 1.0], 1);
        let s = sigma_hat_q(&d, &ModelSpec::zero(), &[], 0.5).unwrap();
        assert!((s.matrix.get(0, 0) - 0.25).abs() < 1e-15);
        let flat = ds(&[-1.0, -3.0, -2.0], &[], 0, &[2.0, 2.0, 2.0], 1);
        let s = sigma_hat_q(&flat, &ModelSpec::zero(), &[], 0.3).unwrap();
        assert!(s.matrix.get(0, 0).abs() < 1e-15);
    }
}
