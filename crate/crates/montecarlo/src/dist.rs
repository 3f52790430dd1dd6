//! Mean-zero error distributions.

use std::fmt;
use std::str::FromStr;

use ivtest::RngState;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorDist {
    /// `U[−2, 2]`.
    Uniform,
    /// `0.75·N(0,1) + 0.25·N(2.5,1)`, shifted by `−0.625`.
    SkewedMixture,
    /// `0.75·N(0,1) + 0.25·N(4,1)`, shifted by `−1`.
    BimodalMixture,
    /// Laplace with scale 1.
    Laplace,
    /// Student t with 10 degrees of freedom.
    StudentT10,
    /// `exp(N₁) − exp(N₂)` with independent standard normals.
    LognormalDiff,
    /// `N(0, 1)`; not part of the published grids.
    Normal,
}

impl ErrorDist {
    /// The six distributions of the published tables, in row order.
    pub const TABLE_ORDER: [ErrorDist; 6] = [
        ErrorDist::Uniform,
        ErrorDist::SkewedMixture,
        ErrorDist::BimodalMixture,
        ErrorDist::Laplace,
        ErrorDist::StudentT10,
        ErrorDist::LognormalDiff,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ErrorDist::Uniform => "uniform",
            ErrorDist::SkewedMixture => "skewed_mixture",
            ErrorDist::BimodalMixture => "bimodal_mixture",
            ErrorDist::Laplace => "laplace",
            ErrorDist::StudentT10 => "student_t10",
            ErrorDist::LognormalDiff => "lognormal_diff",
            ErrorDist::Normal => "normal",
        }
    }

    /// Analytic variance.
    pub fn variance(self) -> f64 {
        let e = std::f64::consts::E;
        match self {
            ErrorDist::Uniform => 4.0 / 3.0,
            ErrorDist::SkewedMixture => 1.0 + 0.75 * 0.25 * 2.5 * 2.5,
            ErrorDist::BimodalMixture => 1.0 + 0.75 * 0.25 * 16.0,
            ErrorDist::Laplace => 2.0,
            ErrorDist::StudentT10 => 10.0 / 8.0,
            ErrorDist::LognormalDiff => 2.0 * (e - 1.0) * e,
            ErrorDist::Normal => 1.0,
        }
    }
}

impl fmt::Display for ErrorDist {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ErrorDist {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let all = ErrorDist::TABLE_ORDER.iter().copied().chain([ErrorDist::Normal]);
        for d in all {
            if d.name() == s {
                return Ok(d);
            }
        }
        Err(format!("unknown error distribution {s:?}"))
    }
}

fn mixture(rng: &mut RngState, shift: f64, center: f64) -> f64 {
    let component = rng.uniform() < 0.25;
    let n = rng.standard_normal();
    if component {
        n + shift - center
    } else {
        n - center
    }
}

pub fn draw_error(dist: ErrorDist, rng: &mut RngState) -> f64 {
    match dist {
        ErrorDist::Uniform => 4.0 * rng.uniform() - 2.0,
        ErrorDist::SkewedMixture => mixture(rng, 2.5, 0.625),
        ErrorDist::BimodalMixture => mixture(rng, 4.0, 1.0),
        ErrorDist::Laplace => {
            let u = rng.uniform();
            if u < 0.5 {
                (2.0 * u).ln()
            } else {
                -(2.0 * (1.0 - u)).ln()
            }
        }
        ErrorDist::StudentT10 => {
            let num = rng.standard_normal();
            let chi2: f64 = (0..10).map(|_| rng.standard_normal().powi(2)).sum();
            num / (chi2 / 10.0).sqrt()
        }
        ErrorDist::LognormalDiff => rng.standard_normal().exp() - rng.standard_normal().exp(),
        ErrorDist::Normal => rng.standard_normal(),
    }
}
