//! Datasets, model specifications and parameter partitions.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{input, Error, Result};

/// Observations `{Y_i, X_i, Z_i}` for `i = 1..n`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    y: DVector<f64>,
    x: DMatrix<f64>,
    z: DMatrix<f64>,
}

impl Dataset {
    pub fn new(y: DVector<f64>, x: DMatrix<f64>, z: DMatrix<f64>) -> Result<Self> {
        let n = y.len();
        if n < 2 {
            return input(format!("need at least 2 observations, got {n}"));
        }
        if x.nrows() != n || z.nrows() != n {
            return input(format!("row counts differ: y has {n}, x has {}, z has {}", x.nrows(), z.nrows()));
        }
        if z.ncols() == 0 {
            return input("at least one instrument is required");
        }
        if y.iter().chain(x.iter()).chain(z.iter()).any(|v| !v.is_finite()) {
            return input("dataset contains non-finite values");
        }
        Ok(Self { y, x, z })
    }

    pub fn n(&self) -> usize {
        self.y.len()
    }

    /// Number of covariate columns.
    pub fn p(&self) -> usize {
        self.x.ncols()
    }

    /// Number of instruments.
    pub fn q(&self) -> usize {
        self.z.ncols()
    }

    pub fn y(&self) -> &DVector<f64> {
        &self.y
    }

    pub fn x(&self) -> &DMatrix<f64> {
        &self.x
    }

    pub fn z(&self) -> &DMatrix<f64> {
        &self.z
    }

    pub fn x_row(&self, i: usize) -> Vec<f64> {
        self.x.row(i).iter().copied().collect()
    }

    pub fn z_row(&self, i: usize) -> Vec<f64> {
        self.z.row(i).iter().copied().collect()
    }

    pub fn with_outcome(&self, y: DVector<f64>) -> Result<Self> {
        Self::new(y, self.x.clone(), self.z.clone())
    }

    pub fn with_instruments(&self, z: DMatrix<f64>) -> Result<Self> {
        Self::new(self.y.clone(), self.x.clone(), z)
    }

    /// Same data with every instrument multiplied by `c`.
    pub fn scale_instruments(&self, c: f64) -> Self {
        Self { y: self.y.clone(), x: self.x.clone(), z: &self.z * c }
    }
}

pub type ModelFn = Arc<dyn Fn(&[f64], &[f64]) -> f64 + Send + Sync>;
pub type GradientFn = Arc<dyn Fn(&[f64], &[f64]) -> Vec<f64> + Send + Sync>;

#[derive(Clone)]
enum Form {
    Linear,
    Custom { g: ModelFn, grad: Option<GradientFn> },
}

/// The regression function `g(x, θ)` of `Y = g(X, θ) + U`.
#[derive(Clone)]
pub struct ModelSpec {
    form: Form,
    dim: usize,
}

impl fmt::Debug for ModelSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.form {
            Form::Linear => write!(f, "ModelSpec::linear({})", self.dim),
            Form::Custom { grad, .. } => {
                write!(f, "ModelSpec::custom(dim = {}, gradient = {})", self.dim, grad.is_some())
            }
        }
    }
}

impl ModelSpec {
    /// `g(x, θ) = xᵀθ` with `θ ∈ ℝᵈ`; requires `p == d`.
    pub fn linear(d: usize) -> Self {
        Self { form: Form::Linear, dim: d }
    }

    /// `g ≡ 0` with an empty parameter vector.
    pub fn zero() -> Self {
        Self::linear(0)
    }

    pub fn custom<G>(d: usize, g: G) -> Self
    where
        G: Fn(&[f64], &[f64]) -> f64 + Send + Sync + 'static,
    {
        Self { form: Form::Custom { g: Arc::new(g), grad: None }, dim: d }
    }

    /// Attaches `∂g/∂θ`. Has no effect on linear models, whose gradient is
    /// built in.
    pub fn with_gradient<D>(mut self, grad: D) -> Self
    where
        D: Fn(&[f64], &[f64]) -> Vec<f64> + Send + Sync + 'static,
    {
        if let Form::Custom { grad: slot, .. } = &mut self.form {
            *slot = Some(Arc::new(grad));
        }
        self
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn is_linear(&self) -> bool {
        matches!(self.form, Form::Linear)
    }

    pub fn has_gradient(&self) -> bool {
        match &self.form {
            Form::Linear => true,
            Form::Custom { grad, .. } => grad.is_some(),
        }
    }

    pub fn eval(&self, x: &[f64], theta: &[f64]) -> f64 {
        match &self.form {
            Form::Linear => x.iter().zip(theta).map(|(a, b)| a * b).sum(),
            Form::Custom { g, .. } => g(x, theta),
        }
    }

    pub fn gradient(&self, x: &[f64], theta: &[f64]) -> Option<Vec<f64>> {
        match &self.form {
            Form::Linear => Some(x.to_vec()),
            Form::Custom { grad, .. } => grad.as_ref().map(|d| d(x, theta)),
        }
    }

    /// Compares the gradient against central finite differences with step
    /// `1e-6·(1 + |θ_k|)` at each probe row, to `1e-5` relative.
    pub fn check_gradient(&self, probes: &DMatrix<f64>, theta: &[f64]) -> Result<()> {
        if !self.has_gradient() {
            return Ok(());
        }
        for i in 0..probes.nrows() {
            let x: Vec<f64> = probes.row(i).iter().copied().collect();
            let analytic = self.gradient(&x, theta).expect("gradient present");
            if analytic.len() != self.dim {
                return input(format!("gradient has length {}, expected {}", analytic.len(), self.dim));
            }
            for k in 0..self.dim {
                let h = 1e-6 * (1.0 + theta[k].abs());
                let mut up = theta.to_vec();
                let mut down = theta.to_vec();
                up[k] += h;
                down[k] -= h;
                let numeric = (self.eval(&x, &up) - self.eval(&x, &down)) / (2.0 * h);
                let scale = numeric.abs().max(analytic[k].abs()).max(1.0);
                if (numeric - analytic[k]).abs() > 1e-5 * scale {
                    return input(format!(
                        "gradient component {k} at probe {i}: analytic {} vs numeric {numeric}",
                        analytic[k]
                    ));
                }
            }
        }
        Ok(())
    }

    pub(crate) fn check_theta(&self, data: &Dataset, theta: &[f64]) -> Result<()> {
        if theta.len() != self.dim {
            return input(format!("θ has length {}, model dimension is {}", theta.len(), self.dim));
        }
        if self.is_linear() && data.p() != self.dim {
            return input(format!(
                "linear model of dimension {} needs {} covariate columns, dataset has {}",
                self.dim,
                self.dim,
                data.p()
            ));
        }
        if theta.iter().any(|v| !v.is_finite()) {
            return input("θ has non-finite entries");
        }
        Ok(())
    }

    pub(crate) fn eval_row(&self, data: &Dataset, i: usize, theta: &[f64]) -> Result<f64> {
        let v = self.eval(&data.x_row(i), theta);
        if v.is_finite() {
            Ok(v)
        } else {
            Err(Error::Evaluation { row: i, message: format!("g(x, θ) = {v}") })
        }
    }
}

/// Split of `θ` into the tested block `𝒢` (held at `g0`) and the nuisance
/// block `β`.
#[derive(Debug, Clone, PartialEq)]
pub struct ThetaPartition {
    dim: usize,
    tested: Vec<usize>,
    nuisance: Vec<usize>,
    g0: Vec<f64>,
}

impl ThetaPartition {
    pub fn new(dim: usize, tested: Vec<usize>, g0: Vec<f64>) -> Result<Self> {
        if tested.len() != g0.len() {
            return input(format!("{} tested indices but {} hypothesised values", tested.len(), g0.len()));
        }
        let mut seen = vec![false; dim];
        for &t in &tested {
            if t >= dim {
                return input(format!("tested index {t} out of range for dimension {dim}"));
            }
            if seen[t] {
                return input(format!("tested index {t} listed twice"));
            }
            seen[t] = true;
        }
        if g0.iter().any(|v| !v.is_finite()) {
            return input("hypothesised values must be finite");
        }
        let nuisance = (0..dim).filter(|i| !seen[*i]).collect();
        Ok(Self { dim, tested, nuisance, g0 })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn tested(&self) -> &[usize] {
        &self.tested
    }

    pub fn nuisance(&self) -> &[usize] {
        &self.nuisance
    }

    pub fn g0(&self) -> &[f64] {
        &self.g0
    }

    /// `θ̃(b) = (𝒢₀, b)` in the original coordinate order.
    pub fn assemble(&self, b: &[f64]) -> Vec<f64> {
        let mut theta = vec![0.0; self.dim];
        for (&i, &v) in self.tested.iter().zip(&self.g0) {
            theta[i] = v;
        }
        for (&i, &v) in self.nuisance.iter().zip(b) {
            theta[i] = v;
        }
        theta
    }

    pub fn nuisance_of(&self, theta: &[f64]) -> Vec<f64> {
        self.nuisance.iter().map(|&i| theta[i]).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dataset_validation() {
        let y = DVector::from_vec(vec![1.0]);
        assert!(Dataset::new(y, DMatrix::zeros(1, 0), DMatrix::zeros(1, 1)).is_err());
        let y = DVector::from_vec(vec![1.0, 2.0]);
        assert!(Dataset::new(y.clone(), DMatrix::zeros(3, 0), DMatrix::zeros(2, 1)).is_err());
        assert!(Dataset::new(y.clone(), DMatrix::zeros(2, 0), DMatrix::zeros(2, 0)).is_err());
        let z = DMatrix::from_row_slice(2, 1, &[1.0, f64::INFINITY]);
        assert!(Dataset::new(y.clone(), DMatrix::zeros(2, 0), z).is_err());
        assert!(Dataset::new(y, DMatrix::zeros(2, 0), DMatrix::zeros(2, 1)).is_ok());
    }

    #[test]
    fn partition_assembles_in_original_order() {
        let p = ThetaPartition::new(3, vec![1], vec![7.0]).unwrap();
        assert_eq!(p.nuisance(), &[0, 2]);
        assert_eq!(p.assemble(&[1.0, 2.0]), vec![1.0, 7.0, 2.0]);
        assert_eq!(p.nuisance_of(&[1.0, 7.0, 2.0]), vec![1.0, 2.0]);
    }

    #[test]
    fn partition_validation() {
        assert!(ThetaPartition::new(2, vec![2], vec![0.0]).is_err());
        assert!(ThetaPartition::new(2, vec![0, 0], vec![0.0, 0.0]).is_err());
        assert!(ThetaPartition::new(2, vec![0], vec![]).is_err());
    }

    #[test]
    fn linear_gradient_agrees_with_finite_differences() {
        let probes = DMatrix::from_row_slice(3, 2, &[1.0, -2.0, 0.5, 3.0, -1.5, 0.25]);
        ModelSpec::linear(2).check_gradient(&probes, &[0.3, -1.2]).unwrap();
    }

    #[test]
    fn custom_gradient_check_catches_a_wrong_derivative() {
        let probes = DMatrix::from_row_slice(2, 1, &[0.5, -1.0]);
        let good =
            ModelSpec::custom(1, |x, t| (t[0] * x[0]).exp()).with_gradient(|x, t| vec![x[0] * (t[0] * x[0]).exp()]);
        good.check_gradient(&probes, &[0.5]).unwrap();
        let bad = ModelSpec::custom(1, |x, t| (t[0] * x[0]).exp()).with_gradient(|_, t| vec![t[0].exp()]);
        assert!(bad.check_gradient(&probes, &[0.5]).is_err());
    }
}
