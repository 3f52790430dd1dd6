//! Test procedures.
//!
//! * Simple hypotheses `H₀: θ = θ₀`: reject when `T_n(θ₀) > ĉ_α(θ₀)`.
//! * Composite hypotheses `H₀: 𝒢 = 𝒢₀`: reject when
//!   `min_b {T_n(θ̃(b)) − ĉ_α(θ̃(b))} > 0`, where `θ̃(b) = (𝒢₀, b)`.
//! * The shortcut replaces the minimum by its value at the restricted
//!   minimiser `θ̂` of `T_n`, falling back to the full search when
//!   `|T_n(θ̂) − ĉ_α(θ̂)| < 0.1·ĉ_α(θ̂)`.
//! * Specification tests minimise the same objective over the whole
//!   parameter box.
//!
//! Every evaluation inside one invocation reuses the same standard-normal
//! draws, so the objective is a deterministic function of `θ`.

use serde::Serialize;

use crate::critical::{simulate_null, SimPlan, DEFAULT_DRAWS, MIN_DRAWS};
use crate::data::{Dataset, ModelSpec, ThetaPartition};
use crate::error::{input, Error, Result};
use crate::optimize::{latin_hypercube, multistart, validate_bounds, Bounds, NelderMeadOptions};
use crate::rng::{derive_seed, RngState};
use crate::stats::{moment_weights, statistic_and_sigma, statistic_from_weights};

pub use crate::stats::Moment;

/// Relative closeness of `T_n(θ̂) − ĉ_α(θ̂)` to zero below which the shortcut
/// runs the full nuisance search.
pub const SHORTCUT_FALLBACK_RATIO: f64 = 0.1;

const START_STREAM: u64 = 0x5354_4152_5453; // "STARTS"

#[derive(Debug, Clone, Serialize)]
pub struct OptimizerConfig {
    /// Multistart count; doubled for quantile objectives.
    pub starts: usize,
    /// Iterations per start; `None` means `500·dim`.
    pub max_iters: Option<usize>,
    pub simplex_tol: f64,
    /// Box over the full parameter vector.
    pub bounds: Option<Bounds>,
    /// End the search as soon as the objective reaches `≤ 0`. The reject
    /// decision is unchanged (a non-positive value rules out rejection), but
    /// the reported point is then the first such point rather than the
    /// minimiser.
    pub stop_when_nonpositive: bool,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self { starts: 5, max_iters: None, simplex_tol: 1e-8, bounds: None, stop_when_nonpositive: false }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct TestConfig {
    pub alpha: f64,
    pub draws: usize,
    pub seed: u64,
    pub optimizer: OptimizerConfig,
}

impl Default for TestConfig {
    fn default() -> Self {
        Self { alpha: 0.05, draws: DEFAULT_DRAWS, seed: 0, optimizer: OptimizerConfig::default() }
    }
}

impl TestConfig {
    pub fn with_seed(seed: u64) -> Self {
        Self { seed, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::Config(format!("alpha = {} outside (0, 1)", self.alpha)));
        }
        if self.draws < MIN_DRAWS {
            return Err(Error::Config(format!("need at least {MIN_DRAWS} draws, got {}", self.draws)));
        }
        if self.optimizer.starts == 0 {
            return Err(Error::Config("optimizer needs at least one start".into()));
        }
        if !(self.optimizer.simplex_tol > 0.0) {
            return Err(Error::Config("simplex tolerance must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Simple,
    Composite,
    CompositeShortcut,
    Specification,
}

#[derive(Debug, Clone, Serialize)]
pub struct OptimizerTrace {
    pub starts: usize,
    pub evaluations: usize,
    pub converged_starts: usize,
    pub stopped_early: bool,
    pub bounds: Option<Bounds>,
}

#[derive(Debug, Clone, Serialize)]
pub struct Diagnostics {
    pub method: Method,
    pub moment: Moment,
    pub alpha: f64,
    pub draws: usize,
    pub seed: u64,
    pub clipped_mass: f64,
    /// `statistic − critical_value` at the decision point.
    pub objective: f64,
    pub fallback_used: bool,
    pub optimizer: Option<OptimizerTrace>,
}

#[derive(Debug, Clone, Serialize)]
pub struct TestResult {
    pub statistic: f64,
    pub critical_value: f64,
    pub p_value: f64,
    pub reject: bool,
    pub theta_at_decision: Vec<f64>,
    pub diagnostics: Diagnostics,
}

#[derive(Debug, Clone)]
pub struct ThetaEstimate {
    pub theta: Vec<f64>,
    pub converged: bool,
    pub evaluations: usize,
}

struct Point {
    statistic: f64,
    critical_value: f64,
    p_value: f64,
    clipped_mass: f64,
}

/// `T(θ)` and `ĉ_α(θ)` with one fixed simulation plan.
struct Evaluator<'a> {
    data: &'a Dataset,
    model: &'a ModelSpec,
    moment: Moment,
    plan: SimPlan,
}

impl<'a> Evaluator<'a> {
    fn new(data: &'a Dataset, model: &'a ModelSpec, moment: Moment, cfg: &TestConfig) -> Result<Self> {
        cfg.validate()?;
        moment.validate()?;
        let plan = SimPlan::new(data.q(), cfg.draws, cfg.alpha, cfg.seed)?;
        Ok(Self { data, model, moment, plan })
    }

    fn point(&self, theta: &[f64]) -> Result<Point> {
        let (statistic, sigma) = statistic_and_sigma(self.data, self.model, theta, self.moment)?;
        let sim = simulate_null(&sigma, &self.plan)?;
        Ok(Point {
            statistic,
            critical_value: sim.c_alpha(),
            p_value: sim.p_value(statistic),
            clipped_mass: sigma.factor.clipped_mass(),
        })
    }

    fn objective(&self, theta: &[f64]) -> Result<f64> {
        let (statistic, sigma) = statistic_and_sigma(self.data, self.model, theta, self.moment)?;
        Ok(statistic - simulate_null(&sigma, &self.plan)?.c_alpha())
    }

    fn result(
        &self,
        method: Method,
        theta: Vec<f64>,
        cfg: &TestConfig,
        fallback_used: bool,
        optimizer: Option<OptimizerTrace>,
    ) -> Result<TestResult> {
        let p = self.point(&theta)?;
        Ok(TestResult {
            statistic: p.statistic,
            critical_value: p.critical_value,
            p_value: p.p_value,
            reject: p.statistic > p.critical_value,
            theta_at_decision: theta,
            diagnostics: Diagnostics {
                method,
                moment: self.moment,
                alpha: cfg.alpha,
                draws: cfg.draws,
                seed: cfg.seed,
                clipped_mass: p.clipped_mass,
                objective: p.statistic - p.critical_value,
                fallback_used,
                optimizer,
            },
        })
    }
}

fn simple_with(
    data: &Dataset,
    model: &ModelSpec,
    theta0: &[f64],
    moment: Moment,
    cfg: &TestConfig,
) -> Result<TestResult> {
    let ev = Evaluator::new(data, model, moment, cfg)?;
    ev.result(Method::Simple, theta0.to_vec(), cfg, false, None)
}

/// Test of `H₀: θ = θ₀` in the mean model.
pub fn test_simple(data: &Dataset, model: &ModelSpec, theta0: &[f64], cfg: &TestConfig) -> Result<TestResult> {
    simple_with(data, model, theta0, Moment::Mean, cfg)
}

/// Test of `H₀: θ = θ₀` in the quantile model `P(U ≤ 0 | Z) = a_Q`.
pub fn test_simple_quantile(
    data: &Dataset,
    model: &ModelSpec,
    theta0: &[f64],
    a_q: f64,
    cfg: &TestConfig,
) -> Result<TestResult> {
    simple_with(data, model, theta0, Moment::Quantile(a_q), cfg)
}

fn check_partition(model: &ModelSpec, partition: &ThetaPartition) -> Result<()> {
    if partition.dim() != model.dim() {
        return input(format!("partition has dimension {}, model has {}", partition.dim(), model.dim()));
    }
    Ok(())
}

fn free_bounds(cfg: &TestConfig, partition: &ThetaPartition) -> Result<Option<Bounds>> {
    match &cfg.optimizer.bounds {
        None => Ok(None),
        Some(b) => {
            validate_bounds(b, partition.dim())?;
            Ok(Some(partition.nuisance().iter().map(|&i| b[i]).collect()))
        }
    }
}

/// Least-squares solution of `min_b ‖Zᵀ(y − X θ̃(b))‖²` for linear models.
fn linear_closed_form(data: &Dataset, partition: &ThetaPartition) -> Result<Vec<f64>> {
    let a = data.z().tr_mul(data.x());
    let mut c = data.z().tr_mul(data.y());
    for (&j, &g) in partition.tested().iter().zip(partition.g0()) {
        c -= a.column(j) * g;
    }
    let free = partition.nuisance();
    if free.is_empty() {
        return Ok(partition.assemble(&[]));
    }
    let a_free = a.select_columns(free);
    let svd = a_free.svd(true, true);
    let smax = svd.singular_values.max();
    let eps = (smax * 1e-12).max(f64::MIN_POSITIVE);
    let b = svd.solve(&c, eps).map_err(|e| Error::NotEstimable(e.to_string()))?;
    Ok(partition.assemble(b.as_slice()))
}

fn nm_options(cfg: &TestConfig, x0: &[f64], bounds: Option<&Bounds>, stop_below: Option<f64>) -> NelderMeadOptions {
    let dim = x0.len();
    let initial_step = match bounds {
        Some(b) => b.iter().map(|&(lo, hi)| 0.1 * (hi - lo)).collect(),
        None => x0.iter().map(|v| 0.1 * v.abs().max(1.0)).collect(),
    };
    NelderMeadOptions {
        max_iters: cfg.optimizer.max_iters.unwrap_or(500 * dim.max(1)),
        simplex_tol: cfg.optimizer.simplex_tol,
        bounds: bounds.cloned(),
        initial_step,
        stop_below,
    }
}

fn start_count(cfg: &TestConfig, moment: Moment) -> usize {
    if moment.is_quantile() {
        2 * cfg.optimizer.starts
    } else {
        cfg.optimizer.starts
    }
}

/// The anchor followed by perturbations of ±10%, ±20%, … of each
/// coordinate's scale, cycling through coordinates.
fn perturbed_starts(anchor: &[f64], count: usize, bounds: Option<&Bounds>) -> Vec<Vec<f64>> {
    let m = anchor.len();
    let mut out = vec![anchor.to_vec()];
    if m == 0 {
        return out;
    }
    for k in 1..count {
        let j = ((k - 1) / 2) % m;
        let ring = ((k - 1) / (2 * m) + 1) as f64;
        let sign = if (k - 1) % 2 == 0 { 1.0 } else { -1.0 };
        let mut p = anchor.to_vec();
        p[j] += sign * ring * 0.1 * anchor[j].abs().max(1.0);
        out.push(p);
    }
    for p in &mut out {
        crate::optimize::project(p, bounds);
    }
    out
}

fn starting_points(
    data: &Dataset,
    model: &ModelSpec,
    partition: &ThetaPartition,
    moment: Moment,
    cfg: &TestConfig,
    bounds: Option<&Bounds>,
) -> Result<Vec<Vec<f64>>> {
    let count = start_count(cfg, moment);
    if model.is_linear() {
        let theta = linear_closed_form(data, partition)?;
        return Ok(perturbed_starts(&partition.nuisance_of(&theta), count, bounds));
    }
    let b =
        bounds.ok_or_else(|| Error::Config("nonlinear models need optimizer bounds on the free coordinates".into()))?;
    if partition.nuisance().is_empty() {
        return Ok(vec![vec![]]);
    }
    let mut rng = RngState::new(derive_seed(cfg.seed, START_STREAM));
    Ok(latin_hypercube(b, count, &mut rng))
}

/// `θ̂ = argmin T_n(θ)` (or `T_Qn`) over the free coordinates.
pub fn estimate_theta(
    data: &Dataset,
    model: &ModelSpec,
    fixed: Option<&ThetaPartition>,
    moment: Moment,
    cfg: &TestConfig,
) -> Result<ThetaEstimate> {
    moment.validate()?;
    let all_free;
    let partition = match fixed {
        Some(p) => p,
        None => {
            all_free = ThetaPartition::new(model.dim(), vec![], vec![])?;
            &all_free
        }
    };
    check_partition(model, partition)?;
    if model.is_linear() && moment == Moment::Mean && cfg.optimizer.bounds.is_none() {
        model.check_theta(data, &vec![0.0; model.dim()])?;
        let theta = linear_closed_form(data, partition)?;
        return Ok(ThetaEstimate { theta, converged: true, evaluations: 0 });
    }
    let bounds = free_bounds(cfg, partition)?;
    let starts = starting_points(data, model, partition, moment, cfg, bounds.as_ref())?;
    let mut f = |b: &[f64]| -> Result<f64> {
        let theta = partition.assemble(b);
        let w = moment_weights(data, model, &theta, moment)?;
        Ok(statistic_from_weights(data.z(), &w))
    };
    let opts = nm_options(cfg, &starts[0], bounds.as_ref(), None);
    let (best, summary) = multistart(&mut f, &starts, &opts)?;
    Ok(ThetaEstimate {
        theta: partition.assemble(&best.x),
        converged: summary.converged_starts > 0,
        evaluations: summary.evaluations,
    })
}

struct Search {
    theta: Vec<f64>,
    value: f64,
    trace: OptimizerTrace,
}

fn search(
    ev: &Evaluator,
    partition: &ThetaPartition,
    cfg: &TestConfig,
    bounds: Option<&Bounds>,
    extra_start: Option<Vec<f64>>,
) -> Result<Search> {
    let mut starts = starting_points(ev.data, ev.model, partition, ev.moment, cfg, bounds)?;
    if let Some(s) = extra_start {
        starts.insert(0, s);
    }
    let stop = cfg.optimizer.stop_when_nonpositive.then_some(0.0);
    let mut f = |b: &[f64]| ev.objective(&partition.assemble(b));
    let opts = nm_options(cfg, &starts[0], bounds, stop);
    let (best, summary) = multistart(&mut f, &starts, &opts)?;
    Ok(Search {
        theta: partition.assemble(&best.x),
        value: best.value,
        trace: OptimizerTrace {
            starts: summary.starts,
            evaluations: summary.evaluations,
            converged_starts: summary.converged_starts,
            stopped_early: summary.stopped_early,
            bounds: bounds.cloned(),
        },
    })
}

fn composite_with(
    data: &Dataset,
    model: &ModelSpec,
    partition: &ThetaPartition,
    moment: Moment,
    cfg: &TestConfig,
) -> Result<TestResult> {
    check_partition(model, partition)?;
    let ev = Evaluator::new(data, model, moment, cfg)?;
    let bounds = free_bounds(cfg, partition)?;
    let s = search(&ev, partition, cfg, bounds.as_ref(), None)?;
    ev.result(Method::Composite, s.theta, cfg, false, Some(s.trace))
}

/// Full composite test: minimise `T_n(θ̃(b)) − ĉ_α(θ̃(b))` over the nuisance
/// parameters and reject when the minimum is positive.
pub fn test_composite(
    data: &Dataset,
    model: &ModelSpec,
    partition: &ThetaPartition,
    cfg: &TestConfig,
) -> Result<TestResult> {
    composite_with(data, model, partition, Moment::Mean, cfg)
}

pub fn test_composite_quantile(
    data: &Dataset,
    model: &ModelSpec,
    partition: &ThetaPartition,
    a_q: f64,
    cfg: &TestConfig,
) -> Result<TestResult> {
    composite_with(data, model, partition, Moment::Quantile(a_q), cfg)
}

fn shortcut_with(
    data: &Dataset,
    model: &ModelSpec,
    partition: &ThetaPartition,
    moment: Moment,
    cfg: &TestConfig,
) -> Result<TestResult> {
    check_partition(model, partition)?;
    let ev = Evaluator::new(data, model, moment, cfg)?;
    let theta_hat = estimate_theta(data, model, Some(partition), moment, cfg)?.theta;
    let at_hat = ev.point(&theta_hat)?;
    let value = at_hat.statistic - at_hat.critical_value;
    let close = value.abs() < SHORTCUT_FALLBACK_RATIO * at_hat.critical_value;
    if !close {
        return ev.result(Method::CompositeShortcut, theta_hat, cfg, false, None);
    }
    let bounds = free_bounds(cfg, partition)?;
    let anchor = partition.nuisance_of(&theta_hat);
    let s = search(&ev, partition, cfg, bounds.as_ref(), Some(anchor))?;
    let theta = if s.value < value { s.theta } else { theta_hat };
    ev.result(Method::CompositeShortcut, theta, cfg, true, Some(s.trace))
}

/// Composite test evaluated at the restricted minimiser `θ̂` of `T_n`, with
/// the full search as a fallback when the decision is close.
pub fn test_composite_shortcut(
    data: &Dataset,
    model: &ModelSpec,
    partition: &ThetaPartition,
    cfg: &TestConfig,
) -> Result<TestResult> {
    shortcut_with(data, model, partition, Moment::Mean, cfg)
}

pub fn test_composite_shortcut_quantile(
    data: &Dataset,
    model: &ModelSpec,
    partition: &ThetaPartition,
    a_q: f64,
    cfg: &TestConfig,
) -> Result<TestResult> {
    shortcut_with(data, model, partition, Moment::Quantile(a_q), cfg)
}

fn specification_with(
    data: &Dataset,
    model: &ModelSpec,
    bounds: &Bounds,
    moment: Moment,
    cfg: &TestConfig,
) -> Result<TestResult> {
    validate_bounds(bounds, model.dim())?;
    if bounds.iter().any(|(lo, hi)| !lo.is_finite() || !hi.is_finite()) {
        return input("specification tests need finite bounds on every coordinate");
    }
    let partition = ThetaPartition::new(model.dim(), vec![], vec![])?;
    let ev = Evaluator::new(data, model, moment, cfg)?;
    let s = search(&ev, &partition, cfg, Some(bounds), None)?;
    ev.result(Method::Specification, s.theta, cfg, false, Some(s.trace))
}

/// Test of the parametric family `g(·, θ), θ ∈ Θ` against a nonparametric
/// alternative: reject when `min_Θ {T_n(θ) − ĉ_α(θ)} > 0`.
pub fn test_specification(data: &Dataset, model: &ModelSpec, bounds: &Bounds, cfg: &TestConfig) -> Result<TestResult> {
    specification_with(data, model, bounds, Moment::Mean, cfg)
}

pub fn test_specification_quantile(
    data: &Dataset,
    model: &ModelSpec,
    a_q: f64,
    bounds: &Bounds,
    cfg: &TestConfig,
) -> Result<TestResult> {
    specification_with(data, model, bounds, Moment::Quantile(a_q), cfg)
}

/// Objective `T(θ) − ĉ_α(θ)` at an arbitrary point, with the same common
/// random numbers a test invocation with `cfg` would use.
pub fn objective_at(data: &Dataset, model: &ModelSpec, theta: &[f64], moment: Moment, cfg: &TestConfig) -> Result<f64> {
    Evaluator::new(data, model, moment, cfg)?.objective(theta)
}
