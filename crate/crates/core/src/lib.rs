//! Non-Studentized Anderson-Rubin-type inference for instrumental-variables
//! models.
//!
//! The statistic `T_n(θ) = n⁻¹ Σ_j (Σ_i Z_ij [Y_i − g(X_i, θ)])²` is compared
//! against the `1 − α` quantile of `V̂′V̂` with `V̂ ~ N(0, Σ̂(θ))`, obtained by
//! simulation. No matrix is inverted and no structural parameter has to be
//! estimated, so the test remains valid whether the instruments are strong or
//! weak. The same machinery covers quantile IV models (through the indicator
//! moment `I[Y − g ≤ 0] − a_Q`), composite hypotheses (by minimising
//! `T_n − ĉ_α` over nuisance parameters), and specification tests of a
//! parametric family against a nonparametric alternative.
//!
//! Module map:
//!
//! * [`linalg`], [`rng`], [`prob`]: PSD factorisation, deterministic normal
//!   draws, order statistics.
//! * [`data`], [`stats`]: datasets, model specifications, `T_n`, `Σ̂` and their
//!   quantile analogues.
//! * [`critical`]: simulated null distributions with common random numbers.
//! * [`inference`]: the simple, composite, shortcut and specification tests.
//! * [`theory`]: finite-sample error bounds and local-alternative power.
//! * [`anderson_rubin`]: the classical homoskedastic AR test used as a power
//!   baseline.

pub mod anderson_rubin;
pub mod critical;
pub mod data;
pub mod error;
pub mod inference;
pub mod linalg;
pub mod optimize;
pub mod prob;
pub mod rng;
pub mod stats;
pub mod theory;

pub use critical::{simulate_null, NullSim, SimPlan};
pub use data::{Dataset, ModelSpec, ThetaPartition};
pub use error::{Error, Result};
pub use inference::{
    estimate_theta, test_composite, test_composite_shortcut, test_simple, test_simple_quantile, test_specification,
    test_specification_quantile, Moment, OptimizerConfig, TestConfig, TestResult,
};
pub use linalg::{psd_factor, PsdFactor, SymMatrix};
pub use rng::{derive_seed, RngState};
pub use stats::SigmaEstimate;
