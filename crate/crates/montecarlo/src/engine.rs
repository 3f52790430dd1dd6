//! Replication engine.

use std::time::Instant;

use ivtest::anderson_rubin::ar_statistic;
use ivtest::{derive_seed, test_composite_shortcut, test_simple, ModelSpec, OptimizerConfig, RngState, TestConfig};
use rayon::prelude::*;
use serde::Serialize;

use crate::design::{
    gen_composite_power_data, gen_null_data, gen_simple_power_data, table_designs, DesignKind, ExperimentDesign,
};
use crate::dist::ErrorDist;
use crate::error::{McError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum TestKind {
    /// `T_n` with simulated critical values; composite designs use the
    /// shortcut with fallback.
    Tn,
    /// Homoskedastic Anderson–Rubin F test.
    Ar,
}

impl TestKind {
    pub fn name(self) -> &'static str {
        match self {
            TestKind::Tn => "tn",
            TestKind::Ar => "ar",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TestRate {
    pub test: TestKind,
    pub rejections: usize,
    pub reps: usize,
    pub rate: f64,
    /// `√(p̂(1 − p̂)/reps)`.
    pub se: f64,
}

impl TestRate {
    pub fn new(test: TestKind, rejections: usize, reps: usize) -> Self {
        let rate = rejections as f64 / reps as f64;
        Self { test, rejections, reps, rate, se: (rate * (1.0 - rate) / reps as f64).sqrt() }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct CellResult {
    pub design: ExperimentDesign,
    pub rates: Vec<TestRate>,
    pub wall_time_secs: f64,
}

impl CellResult {
    pub fn rate(&self, test: TestKind) -> Option<&TestRate> {
        self.rates.iter().find(|r| r.test == test)
    }
}

fn tests_for(kind: DesignKind) -> &'static [TestKind] {
    match kind {
        DesignKind::Null => &[TestKind::Tn],
        _ => &[TestKind::Tn, TestKind::Ar],
    }
}

fn test_config(design: &ExperimentDesign, seed: u64) -> TestConfig {
    TestConfig {
        alpha: design.alpha,
        draws: design.draws,
        seed,
        optimizer: OptimizerConfig { stop_when_nonpositive: true, ..OptimizerConfig::default() },
    }
}

/// Reject flags of one replication, in the order of [`tests_for`].
fn replicate(design: &ExperimentDesign, r: usize) -> ivtest::Result<Vec<bool>> {
    let seed_r = derive_seed(design.base_seed, r as u64);
    let mut rng = RngState::new(derive_seed(seed_r, 0));
    let cfg = test_config(design, derive_seed(seed_r, 1));
    let (n, q) = (design.n, design.q);
    let to_core = |e: McError| match e {
        McError::Core(e) => e,
        other => ivtest::Error::Input(other.to_string()),
    };
    match design.kind {
        DesignKind::Null => {
            let data = gen_null_data(n, q, design.dist, &mut rng).map_err(to_core)?;
            Ok(vec![test_simple(&data, &ModelSpec::zero(), &[], &cfg)?.reject])
        }
        DesignKind::Simple { beta0 } => {
            let data =
                gen_simple_power_data(n, q, beta0, design.c, design.rho, design.dist, &mut rng).map_err(to_core)?;
            let tn = test_simple(&data, &ModelSpec::linear(1), &[0.0], &cfg)?.reject;
            let ar = ar_statistic(&data, &[0.0], &[], design.alpha)?.reject;
            Ok(vec![tn, ar])
        }
        DesignKind::Composite { beta1, beta2 } => {
            let d = gen_composite_power_data(n, q, beta1, beta2, design.c, design.rho, design.dist, &mut rng)
                .map_err(to_core)?;
            let tn = test_composite_shortcut(&d.tn, &ModelSpec::linear(2), &d.partition, &cfg)?.reject;
            let ar = ar_statistic(&d.ar, &[0.0], &[1], design.alpha)?.reject;
            Ok(vec![tn, ar])
        }
    }
}

/// Runs every replication of a cell in parallel. The result does not
/// depend on the number of worker threads.
pub fn run_cell(design: &ExperimentDesign) -> Result<CellResult> {
    design.validate()?;
    let start = Instant::now();
    let flags: Vec<ivtest::Result<Vec<bool>>> =
        (0..design.reps).into_par_iter().map(|r| replicate(design, r)).collect();
    let tests = tests_for(design.kind);
    let mut counts = vec![0usize; tests.len()];
    for (index, f) in flags.into_iter().enumerate() {
        let f = f.map_err(|source| McError::Replication { index, source })?;
        for (c, hit) in counts.iter_mut().zip(f) {
            *c += usize::from(hit);
        }
    }
    Ok(CellResult {
        design: design.clone(),
        rates: tests.iter().zip(counts).map(|(&t, k)| TestRate::new(t, k, design.reps)).collect(),
        wall_time_secs: start.elapsed().as_secs_f64(),
    })
}

/// All cells of a published table; `on_cell` sees each result as soon as it
/// is available.
pub fn replicate_table<F>(table: u8, reps: usize, seed: u64, draws: usize, mut on_cell: F) -> Result<Vec<CellResult>>
where
    F: FnMut(&CellResult),
{
    let designs = table_designs(table, reps, seed, draws)?;
    let mut out = Vec::with_capacity(designs.len());
    for d in &designs {
        let cell = run_cell(d)?;
        on_cell(&cell);
        out.push(cell);
    }
    Ok(out)
}

/// Paired comparison under a true composite null `β₁ = 0`: the simple test
/// at the true `(0, β₂)` and the composite shortcut test, on the same data
/// and the same simulation draws.
#[derive(Debug, Clone, Serialize)]
pub struct PairedSize {
    pub simple: TestRate,
    pub composite: TestRate,
    /// Replications where the composite test rejects and the simple test
    /// does not.
    pub composite_only: usize,
    /// Standard error of the paired difference of reject indicators.
    pub difference_se: f64,
}

#[allow(clippy::too_many_arguments)]
pub fn paired_composite_size(
    dist: ErrorDist,
    n: usize,
    q: usize,
    beta2: f64,
    c: f64,
    reps: usize,
    seed: u64,
    draws: usize,
) -> Result<PairedSize> {
    let mut design = ExperimentDesign::new(dist, n, q, DesignKind::Composite { beta1: 0.0, beta2 }, c, reps, seed);
    design.draws = draws;
    design.validate()?;
    let pairs: Vec<ivtest::Result<(bool, bool)>> = (0..reps)
        .into_par_iter()
        .map(|r| {
            let seed_r = derive_seed(seed, r as u64);
            let mut rng = RngState::new(derive_seed(seed_r, 0));
            let cfg = test_config(&design, derive_seed(seed_r, 1));
            let d = gen_composite_power_data(n, q, 0.0, beta2, c, design.rho, dist, &mut rng)
                .map_err(|e| ivtest::Error::Input(e.to_string()))?;
            let model = ModelSpec::linear(2);
            let s = test_simple(&d.tn, &model, &[0.0, beta2], &cfg)?.reject;
            let k = test_composite_shortcut(&d.tn, &model, &d.partition, &cfg)?.reject;
            Ok((s, k))
        })
        .collect();
    let (mut s, mut k, mut only, mut diff_sq) = (0usize, 0usize, 0usize, 0.0);
    for (index, p) in pairs.into_iter().enumerate() {
        let (a, b) = p.map_err(|source| McError::Replication { index, source })?;
        s += usize::from(a);
        k += usize::from(b);
        only += usize::from(b && !a);
        diff_sq += (f64::from(u8::from(b)) - f64::from(u8::from(a))).powi(2);
    }
    let mean_diff = (k as f64 - s as f64) / reps as f64;
    let var = (diff_sq / reps as f64 - mean_diff * mean_diff).max(0.0);
    Ok(PairedSize {
        simple: TestRate::new(TestKind::Tn, s, reps),
        composite: TestRate::new(TestKind::Tn, k, reps),
        composite_only: only,
        difference_se: (var / reps as f64).sqrt(),
    })
}
