//! Experiment designs and their data-generating processes.
//!
//! Instruments are i.i.d. `N(0, 1)`. Power designs use
//! `X = c·Σ_j Z_j + V` with `V = (1 − ρ²)^{1/2} ε + ρU`, where `U` and `ε` are
//! independent draws from the design's error distribution.

use ivtest::{derive_seed, Dataset, RngState, ThetaPartition};
use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::dist::{draw_error, ErrorDist};
use crate::error::{McError, Result};

pub const TABLE_IDS: [u8; 5] = [1, 2, 3, 4, 5];
pub const DEFAULT_RHO: f64 = 0.75;
pub const Q_GRID: [usize; 4] = [1, 2, 5, 10];

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DesignKind {
    /// `Y = U`; the simple null `g ≡ 0` is true.
    Null,
    /// `Y = β₀X + U`; tests `β = 0`.
    Simple { beta0: f64 },
    /// `Y = β₁X₁ + β₂X₂ + U` with exogenous `X₂`; tests `β₁ = 0`.
    Composite { beta1: f64, beta2: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentDesign {
    pub table: Option<u8>,
    pub dist: ErrorDist,
    pub n: usize,
    pub q: usize,
    pub kind: DesignKind,
    pub c: f64,
    pub rho: f64,
    pub reps: usize,
    pub alpha: f64,
    pub draws: usize,
    pub base_seed: u64,
}

impl ExperimentDesign {
    pub fn new(dist: ErrorDist, n: usize, q: usize, kind: DesignKind, c: f64, reps: usize, base_seed: u64) -> Self {
        Self {
            table: None,
            dist,
            n,
            q,
            kind,
            c,
            rho: DEFAULT_RHO,
            reps,
            alpha: 0.05,
            draws: ivtest::critical::DEFAULT_DRAWS,
            base_seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(McError::Design(m));
        if self.q == 0 {
            return bad("q must be positive".into());
        }
        let k = usize::from(matches!(self.kind, DesignKind::Composite { .. }));
        if self.n <= self.q + k + 1 {
            return bad(format!("n = {} too small for q = {}", self.n, self.q));
        }
        if self.reps == 0 {
            return bad("reps must be positive".into());
        }
        if !(self.rho.abs() < 1.0) {
            return bad(format!("|rho| = {} must be below 1", self.rho.abs()));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return bad(format!("alpha = {} outside (0, 1)", self.alpha));
        }
        if self.draws < ivtest::critical::MIN_DRAWS {
            return bad(format!("draws = {} below {}", self.draws, ivtest::critical::MIN_DRAWS));
        }
        let coefs = match self.kind {
            DesignKind::Null => vec![],
            DesignKind::Simple { beta0 } => vec![beta0],
            DesignKind::Composite { beta1, beta2 } => vec![beta1, beta2],
        };
        if coefs.iter().chain([&self.c]).any(|v| !v.is_finite()) {
            return bad("coefficients must be finite".into());
        }
        Ok(())
    }

    /// Coefficient label used in tables: `β₀` or `β₁` (with `;β₂` when the two
    /// differ); empty for null designs.
    pub fn beta_label(&self) -> String {
        match self.kind {
            DesignKind::Null => String::new(),
            DesignKind::Simple { beta0 } => format!("{beta0}"),
            DesignKind::Composite { beta1, beta2 } if beta1 == beta2 => format!("{beta1}"),
            DesignKind::Composite { beta1, beta2 } => format!("{beta1};{beta2}"),
        }
    }

    pub fn c_label(&self) -> String {
        match self.kind {
            DesignKind::Null => String::new(),
            _ => format!("{}", self.c),
        }
    }
}

fn normal_row(rng: &mut RngState, q: usize, out: &mut DMatrix<f64>, i: usize) {
    for j in 0..q {
        out[(i, j)] = rng.standard_normal();
    }
}

/// `Z ~ N(0, I_q)`, `Y = U`, no covariates.
pub fn gen_null_data(n: usize, q: usize, dist: ErrorDist, rng: &mut RngState) -> Result<Dataset> {
    let mut z = DMatrix::zeros(n, q);
    let mut y = DVector::zeros(n);
    for i in 0..n {
        normal_row(rng, q, &mut z, i);
        y[i] = draw_error(dist, rng);
    }
    Ok(Dataset::new(y, DMatrix::zeros(n, 0), z)?)
}

fn endogenous(rng: &mut RngState, z: &DMatrix<f64>, i: usize, c: f64, rho: f64, dist: ErrorDist) -> (f64, f64) {
    let u = draw_error(dist, rng);
    let eps = draw_error(dist, rng);
    let v = (1.0 - rho * rho).sqrt() * eps + rho * u;
    let x = c * z.row(i).sum() + v;
    (x, u)
}

/// `Y = β₀X + U`, `X = c·Σ_j Z_j + V`.
pub fn gen_simple_power_data(
    n: usize,
    q: usize,
    beta0: f64,
    c: f64,
    rho: f64,
    dist: ErrorDist,
    rng: &mut RngState,
) -> Result<Dataset> {
    let mut z = DMatrix::zeros(n, q);
    let mut x = DMatrix::zeros(n, 1);
    let mut y = DVector::zeros(n);
    for i in 0..n {
        normal_row(rng, q, &mut z, i);
        let (xi, u) = endogenous(rng, &z, i, c, rho, dist);
        x[(i, 0)] = xi;
        y[i] = beta0 * xi + u;
    }
    Ok(Dataset::new(y, x, z)?)
}

/// A composite-design sample in the two layouts its tests need.
#[derive(Debug, Clone)]
pub struct CompositeData {
    /// Covariates `(X₁, X₂)` with instruments `(Z, X₂)`.
    pub tn: Dataset,
    /// Covariates `(X₁, X₂)` with instruments `Z`; `X₂` is partialled out.
    pub ar: Dataset,
    /// `β₁ = 0` tested, `β₂` nuisance.
    pub partition: ThetaPartition,
}

/// `Y = β₁X₁ + β₂X₂ + U` with `X₁` as in [`gen_simple_power_data`] and `X₂`
/// drawn from the error distribution.
#[allow(clippy::too_many_arguments)]
pub fn gen_composite_power_data(
    n: usize,
    q: usize,
    beta1: f64,
    beta2: f64,
    c: f64,
    rho: f64,
    dist: ErrorDist,
    rng: &mut RngState,
) -> Result<CompositeData> {
    let mut z = DMatrix::zeros(n, q);
    let mut x = DMatrix::zeros(n, 2);
    let mut y = DVector::zeros(n);
    for i in 0..n {
        normal_row(rng, q, &mut z, i);
        let (x1, u) = endogenous(rng, &z, i, c, rho, dist);
        let x2 = draw_error(dist, rng);
        x[(i, 0)] = x1;
        x[(i, 1)] = x2;
        y[i] = beta1 * x1 + beta2 * x2 + u;
    }
    let mut z_full = z.clone().insert_column(q, 0.0);
    z_full.set_column(q, &x.column(1));
    let tn = Dataset::new(y.clone(), x.clone(), z_full)?;
    let ar = Dataset::new(y, x, z)?;
    Ok(CompositeData { tn, ar, partition: ThetaPartition::new(2, vec![0], vec![0.0])? })
}

fn table_rows(table: u8) -> Result<(Vec<(usize, DesignKind)>, f64)> {
    let simple = |b| DesignKind::Simple { beta0: b };
    let composite = |b| DesignKind::Composite { beta1: b, beta2: b };
    Ok(match table {
        1 => (vec![(100, DesignKind::Null), (1000, DesignKind::Null)], 0.0),
        2 | 3 => (vec![(100, simple(1.0)), (1000, simple(0.20))], if table == 2 { 0.50 } else { 0.25 }),
        4 | 5 => (
            vec![(100, composite(1.0)), (1000, composite(1.0)), (1000, composite(0.20))],
            if table == 4 { 0.50 } else { 0.25 },
        ),
        _ => return Err(McError::Design(format!("table must be one of 1–5, got {table}"))),
    })
}

/// Every cell of a published table, in row order (distribution, then row,
/// then `q ∈ {1, 2, 5, 10}`). Cell `k` uses base seed
/// `derive_seed(derive_seed(seed, table), k)`.
pub fn table_designs(table: u8, reps: usize, seed: u64, draws: usize) -> Result<Vec<ExperimentDesign>> {
    let (rows, c) = table_rows(table)?;
    let table_seed = derive_seed(seed, u64::from(table));
    let mut out = Vec::new();
    for dist in ErrorDist::TABLE_ORDER {
        for &(n, kind) in &rows {
            for q in Q_GRID {
                let k = out.len() as u64;
                let mut d = ExperimentDesign::new(dist, n, q, kind, c, reps, derive_seed(table_seed, k));
                d.table = Some(table);
                d.draws = draws;
                d.validate()?;
                out.push(d);
            }
        }
    }
    Ok(out)
}
