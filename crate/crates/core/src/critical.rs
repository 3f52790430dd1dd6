//! Simulated null distribution of `T̂ = V̂′V̂`, `V̂ ~ N(0, Σ̂)`.
//!
//! One matrix of standard normals (the common random numbers) is drawn per
//! test invocation and reused for every `Σ̂(θ)`, which makes `ĉ_α(θ)` a
//! deterministic function of `θ`.

use nalgebra::DMatrix;

use crate::error::{input, Result};
use crate::linalg::mvn_quadratic_draws;
use crate::prob::empirical_quantile;
use crate::rng::{standard_normal_matrix, RngState};
use crate::stats::SigmaEstimate;

pub const DEFAULT_DRAWS: usize = 20_000;
pub const MIN_DRAWS: usize = 100;

#[derive(Debug, Clone)]
pub struct SimPlan {
    base_w: DMatrix<f64>,
    alpha: f64,
    seed: u64,
}

impl SimPlan {
    pub fn new(q: usize, draws: usize, alpha: f64, seed: u64) -> Result<Self> {
        if draws < MIN_DRAWS {
            return input(format!("need at least {MIN_DRAWS} simulation draws, got {draws}"));
        }
        if !(alpha > 0.0 && alpha < 1.0) {
            return input(format!("significance level {alpha} outside (0, 1)"));
        }
        if q == 0 {
            return input("simulation dimension must be positive");
        }
        let base_w = standard_normal_matrix(&mut RngState::new(seed), draws, q);
        Ok(Self { base_w, alpha, seed })
    }

    pub fn draws(&self) -> usize {
        self.base_w.nrows()
    }

    pub fn dim(&self) -> usize {
        self.base_w.ncols()
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn base_w(&self) -> &DMatrix<f64> {
        &self.base_w
    }
}

#[derive(Debug, Clone)]
pub struct NullSim {
    draws: Vec<f64>,
    c_alpha: f64,
}

impl NullSim {
    pub fn draws(&self) -> &[f64] {
        &self.draws
    }

    /// `ĉ_α`, the empirical `1 − α` quantile of the draws.
    pub fn c_alpha(&self) -> f64 {
        self.c_alpha
    }

    /// `(1 + #{r : draws[r] ≥ observed}) / (R + 1)`.
    pub fn p_value(&self, observed: f64) -> f64 {
        let exceed = self.draws.iter().filter(|&&d| d >= observed).count();
        (1 + exceed) as f64 / (self.draws.len() + 1) as f64
    }
}

pub fn simulate_null(sigma: &SigmaEstimate, plan: &SimPlan) -> Result<NullSim> {
    if sigma.factor.dim() != plan.dim() {
        return input(format!("Σ̂ has dimension {}, simulation plan has {}", sigma.factor.dim(), plan.dim()));
    }
    let draws = mvn_quadratic_draws(&sigma.factor, &plan.base_w)?;
    let c_alpha = empirical_quantile(&draws, 1.0 - plan.alpha)?;
    Ok(NullSim { draws, c_alpha })
}

pub fn p_value(sim: &NullSim, observed: f64) -> f64 {
    sim.p_value(observed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::SymMatrix;
    use nalgebra::DVector;
    use statrs::distribution::{ChiSquared, ContinuousCDF};

    fn sigma(m: SymMatrix) -> SigmaEstimate {
        let q = m.dim();
        SigmaEstimate::from_matrix(m, DVector::zeros(q)).unwrap()
    }

    #[test]
    fn degenerate_covariance_gives_zero_critical_value() {
        let plan = SimPlan::new(2, 500, 0.05, 1).unwrap();
        let sim = simulate_null(&sigma(SymMatrix::zeros(2)), &plan).unwrap();
        assert!(sim.draws().iter().all(|d| *d == 0.0));
        assert_eq!(sim.c_alpha(), 0.0);
    }

    #[test]
    fn identity_matches_chi_square_quantile() {
        let oracle = ChiSquared::new(1.0).unwrap().inverse_cdf(0.95);
        let plan = SimPlan::new(1, 100_000, 0.05, 2).unwrap();
        let sim = simulate_null(&sigma(SymMatrix::identity(1)), &plan).unwrap();
        assert!((sim.c_alpha() - oracle).abs() < 0.05, "{}", sim.c_alpha());
    }

    #[test]
    fn quadratic_scaling_of_critical_value() {
        let base = SymMatrix::from_rows(&[&[1.5, 0.3], &[0.3, 0.7]]).unwrap();
        let plan = SimPlan::new(2, 2_000, 0.05, 3).unwrap();
        let c0 = simulate_null(&sigma(base.clone()), &plan).unwrap().c_alpha();
        let c2 = simulate_null(&sigma(base.scaled(4.0)), &plan).unwrap().c_alpha();
        assert_eq!(c2, 4.0 * c0);
    }

    #[test]
    fn p_value_extremes() {
        let plan = SimPlan::new(1, 999, 0.05, 4).unwrap();
        let sim = simulate_null(&sigma(SymMatrix::identity(1)), &plan).unwrap();
        assert_eq!(sim.p_value(0.0), 1.0);
        let max = sim.draws().iter().cloned().fold(0.0, f64::max);
        assert_eq!(sim.p_value(max + 1.0), 1.0 / 1000.0);
    }

    #[test]
    fn p_value_at_median_is_one_half() {
        let plan = SimPlan::new(1, 1_001, 0.05, 5).unwrap();
        let sim = simulate_null(&sigma(SymMatrix::identity(1)), &plan).unwrap();
        let mut sorted = sim.draws().to_vec();
        sorted.sort_by(f64::total_cmp);
        let median = sorted[500];
        // Direct count: 501 draws are ≥ the median.
        let count = sorted.iter().filter(|&&d| d >= median).count();
        assert_eq!(count, 501);
        let p = sim.p_value(median);
        assert_eq!(p, 502.0 / 1002.0);
    }

    #[test]
    fn critical_value_nonincreasing_in_alpha() {
        let m = sigma(SymMatrix::from_rows(&[&[2.0, 0.5], &[0.5, 1.0]]).unwrap());
        let mut last = f64::INFINITY;
        for &a in &[0.01, 0.05, 0.1, 0.2, 0.5] {
            let plan = SimPlan::new(2, 5_000, a, 6).unwrap();
            let c = simulate_null(&m, &plan).unwrap().c_alpha();
            assert!(c <= last);
            last = c;
        }
    }

    #[test]
    fn plan_validation() {
        assert!(SimPlan::new(1, 99, 0.05, 0).is_err());
        assert!(SimPlan::new(1, 100, 1.0, 0).is_err());
        assert!(SimPlan::new(0, 100, 0.05, 0).is_err());
        let plan = SimPlan::new(2, 100, 0.05, 0).unwrap();
        assert!(simulate_null(&sigma(SymMatrix::identity(3)), &plan).is_err());
    }
}
