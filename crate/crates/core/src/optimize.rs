//! Derivative-free minimisation: Nelder–Mead on a box with multistart.
//!
//! The objectives minimised here (`T_n(θ) − ĉ_α(θ)` and step-function
//! quantile statistics) are continuous at best and never smooth, so no
//! gradients are used. Trial points outside the box are projected onto it.

use crate::error::{input, Result};
use crate::rng::RngState;

pub type Bounds = Vec<(f64, f64)>;

#[derive(Debug, Clone)]
pub struct NelderMeadOptions {
    pub max_iters: usize,
    /// Stop once the simplex fits in a ball of this radius, relative to
    /// `1 + ‖best‖∞`.
    pub simplex_tol: f64,
    pub bounds: Option<Bounds>,
    /// Initial edge length per coordinate.
    pub initial_step: Vec<f64>,
    /// Stop as soon as an evaluated value is `≤` this threshold.
    pub stop_below: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct Minimum {
    pub x: Vec<f64>,
    pub value: f64,
    pub evaluations: usize,
    pub iterations: usize,
    pub converged: bool,
    pub stopped_early: bool,
}

pub fn project(x: &mut [f64], bounds: Option<&Bounds>) {
    if let Some(b) = bounds {
        for (v, &(lo, hi)) in x.iter_mut().zip(b) {
            *v = v.clamp(lo, hi);
        }
    }
}

pub fn validate_bounds(bounds: &Bounds, dim: usize) -> Result<()> {
    if bounds.len() != dim {
        return input(format!("{} bounds given for {dim} coordinates", bounds.len()));
    }
    for (k, &(lo, hi)) in bounds.iter().enumerate() {
        if lo.is_nan() || hi.is_nan() || lo >= hi {
            return input(format!("bounds for coordinate {k} must satisfy lower < upper"));
        }
    }
    Ok(())
}

struct Counter<'a, F> {
    f: &'a mut F,
    evaluations: usize,
    stop_below: Option<f64>,
    hit: bool,
}

impl<F: FnMut(&[f64]) -> Result<f64>> Counter<'_, F> {
    fn eval(&mut self, x: &[f64]) -> Result<f64> {
        self.evaluations += 1;
        let v = (self.f)(x)?;
        // NaN is treated as +∞ so the simplex moves away from it.
        let v = if v.is_nan() { f64::INFINITY } else { v };
        if let Some(t) = self.stop_below {
            if v <= t {
                self.hit = true;
            }
        }
        Ok(v)
    }
}

/// Minimise `f` starting from `x0`.
pub fn nelder_mead<F>(f: &mut F, x0: &[f64], opts: &NelderMeadOptions) -> Result<Minimum>
where
    F: FnMut(&[f64]) -> Result<f64>,
{
    let dim = x0.len();
    let bounds = opts.bounds.as_ref();
    if let Some(b) = bounds {
        validate_bounds(b, dim)?;
    }
    let mut counter = Counter { f, evaluations: 0, stop_below: opts.stop_below, hit: false };

    let mut start = x0.to_vec();
    project(&mut start, bounds);
    let f0 = counter.eval(&start)?;
    if dim == 0 || counter.hit {
        return Ok(Minimum {
            x: start,
            value: f0,
            evaluations: counter.evaluations,
            iterations: 0,
            converged: dim == 0,
            stopped_early: counter.hit,
        });
    }

    let mut simplex: Vec<(Vec<f64>, f64)> = Vec::with_capacity(dim + 1);
    simplex.push((start.clone(), f0));
    for k in 0..dim {
        let mut v = start.clone();
        let step = opts.initial_step.get(k).copied().unwrap_or(0.1);
        v[k] += step;
        project(&mut v, bounds);
        if v[k] == start[k] {
            // Pinned against an upper bound: step inward instead.
            v[k] -= step;
            project(&mut v, bounds);
        }
        let fv = counter.eval(&v)?;
        simplex.push((v, fv));
        if counter.hit {
            break;
        }
    }

    let mut iterations = 0;
    let mut converged = false;
    while !counter.hit && iterations < opts.max_iters {
        simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
        let best = &simplex[0].0;
        let scale = 1.0 + best.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let diameter = simplex[1..]
            .iter()
            .map(|(v, _)| v.iter().zip(best).fold(0.0f64, |m, (a, b)| m.max((a - b).abs())))
            .fold(0.0f64, f64::max);
        if diameter <= opts.simplex_tol * scale {
            converged = true;
            break;
        }
        iterations += 1;

        let worst = simplex[dim].clone();
        let mut centroid = vec![0.0; dim];
        for (v, _) in &simplex[..dim] {
            for (c, x) in centroid.iter_mut().zip(v) {
                *c += x / dim as f64;
            }
        }
        let along = |t: f64| -> Vec<f64> {
            let mut p: Vec<f64> = centroid.iter().zip(&worst.0).map(|(c, w)| c + t * (c - w)).collect();
            project(&mut p, bounds);
            p
        };

        let reflected = along(1.0);
        let fr = counter.eval(&reflected)?;
        if counter.hit {
            simplex[dim] = (reflected, fr);
            break;
        }
        if fr < simplex[0].1 {
            let expanded = along(2.0);
            let fe = counter.eval(&expanded)?;
            simplex[dim] = if fe < fr { (expanded, fe) } else { (reflected, fr) };
            continue;
        }
        if fr < simplex[dim - 1].1 {
            simplex[dim] = (reflected, fr);
            continue;
        }
        let (contracted, fc) = if fr < worst.1 {
            let p = along(0.5);
            let fp = counter.eval(&p)?;
            (p, fp)
        } else {
            let p = along(-0.5);
            let fp = counter.eval(&p)?;
            (p, fp)
        };
        if fc < worst.1.min(fr) {
            simplex[dim] = (contracted, fc);
            continue;
        }
        if counter.hit {
            simplex[dim] = (contracted, fc);
            break;
        }
        // Shrink towards the best vertex.
        let anchor = simplex[0].0.clone();
        for vertex in simplex.iter_mut().skip(1) {
            let mut p: Vec<f64> = anchor.iter().zip(&vertex.0).map(|(a, v)| a + 0.5 * (v - a)).collect();
            project(&mut p, bounds);
            let fp = counter.eval(&p)?;
            *vertex = (p, fp);
            if counter.hit {
                break;
            }
        }
    }

    simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
    let (x, value) = simplex.swap_remove(0);
    Ok(Minimum { x, value, evaluations: counter.evaluations, iterations, converged, stopped_early: counter.hit })
}

#[derive(Debug, Clone, Default)]
pub struct MultistartSummary {
    pub starts: usize,
    pub evaluations: usize,
    pub converged_starts: usize,
    pub stopped_early: bool,
}

/// Runs [`nelder_mead`] from every start and keeps the smallest value. Ties
/// keep the earlier start. With `stop_below` set, the remaining starts are
/// skipped once the threshold is reached.
pub fn multistart<F>(f: &mut F, starts: &[Vec<f64>], opts: &NelderMeadOptions) -> Result<(Minimum, MultistartSummary)>
where
    F: FnMut(&[f64]) -> Result<f64>,
{
    if starts.is_empty() {
        return input("multistart needs at least one starting point");
    }
    let mut summary = MultistartSummary::default();
    let mut best: Option<Minimum> = None;
    for s in starts {
        let m = nelder_mead(f, s, opts)?;
        summary.starts += 1;
        summary.evaluations += m.evaluations;
        summary.converged_starts += usize::from(m.converged);
        let stop = m.stopped_early;
        if best.as_ref().is_none_or(|b| m.value < b.value) {
            best = Some(m);
        }
        if stop {
            summary.stopped_early = true;
            break;
        }
    }
    Ok((best.expect("at least one start"), summary))
}

/// `count` Latin-hypercube points in the box: each coordinate's range is cut
/// into `count` strata, each stratum is used once, with a uniform offset
/// inside it.
pub fn latin_hypercube(bounds: &Bounds, count: usize, rng: &mut RngState) -> Vec<Vec<f64>> {
    let dim = bounds.len();
    let mut points = vec![vec![0.0; dim]; count];
    for (k, &(lo, hi)) in bounds.iter().enumerate() {
        let mut strata: Vec<usize> = (0..count).collect();
        // Fisher–Yates with the deterministic stream.
        for i in (1..count).rev() {
            let j = (rng.next_u64() % (i as u64 + 1)) as usize;
            strata.swap(i, j);
        }
        for (p, &s) in points.iter_mut().zip(&strata) {
            let u = (s as f64 + rng.uniform()) / count as f64;
            p[k] = lo + u * (hi - lo);
        }
    }
    points
}
