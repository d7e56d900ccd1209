//! Euler–Maruyama on the time-changed clock.
//!
//! One step reads
//! `X(t_{k+1}) = X(t_k) + [b(X(t_k)) + B(X_{t_k})] h + sqrt(Δℓ_k) Z_k`
//! with `Δℓ_k = ℓ(t_{k+1}) - ℓ(t_k)` and `Z_k` standard normal, which has the
//! law of the increment of `W(ℓ(t))`.

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{domain, Result};
use crate::model::{FunctionalDrift, ModelSpec};
use crate::payoff::Payoff;
use crate::rng::{tags, PathRng, SeedStream};
use crate::segment::{trapezoid_vec, Interpolation, Segment, Trajectory};
use crate::stats::{Estimate, NestedEstimate};
use crate::subordinator::{sample_path, BernsteinSpec, Clock};

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverConfig {
    /// Requested step; snapped so that it divides `r0` (or `T` when `r0 = 0`).
    /// Defaults to `min(r0, 1)/64`, or `1/64` without delay.
    #[serde(default)]
    pub step: Option<f64>,
    #[serde(default)]
    pub interpolation: Interpolation,
}

impl SolverConfig {
    pub fn with_step(step: f64) -> Self {
        SolverConfig { step: Some(step), ..Default::default() }
    }
}

/// Uniform grid `t_k = k h` on `[0, T]` with `m = r0 / h` delay steps.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TimeGrid {
    pub r0: f64,
    pub horizon: f64,
    pub step: f64,
    pub delay_steps: usize,
    pub steps: usize,
}

impl TimeGrid {
    pub fn new(r0: f64, horizon: f64, requested: Option<f64>) -> Result<Self> {
        if !(horizon > 0.0 && horizon.is_finite()) {
            return domain(format!("T must be positive, got {horizon}"));
        }
        if !(r0 >= 0.0 && r0.is_finite()) {
            return domain(format!("r0 must be nonnegative, got {r0}"));
        }
        let req = requested.unwrap_or(if r0 > 0.0 { r0.min(1.0) / 64.0 } else { 1.0 / 64.0 });
        if !(req > 0.0 && req.is_finite()) {
            return domain(format!("step must be positive, got {req}"));
        }
        if r0 > 0.0 {
            let m = ((r0 / req) - 1e-9).ceil().max(1.0) as usize;
            let step = r0 / m as f64;
            let n = (horizon / step).round();
            if n < 1.0 || (n * step - horizon).abs() > 1e-9 * horizon {
                return domain(format!(
                    "T = {horizon} is not a multiple of the step {step} implied by r0 = {r0}"
                ));
            }
            Ok(TimeGrid { r0, horizon, step, delay_steps: m, steps: n as usize })
        } else {
            let n = ((horizon / req) - 1e-9).ceil().max(1.0) as usize;
            Ok(TimeGrid { r0, horizon, step: horizon / n as f64, delay_steps: 0, steps: n })
        }
    }

    /// `t_k`; the last node is `T` itself.
    #[inline]
    pub fn time(&self, k: usize) -> f64 {
        if k >= self.steps {
            self.horizon
        } else {
            k as f64 * self.step
        }
    }

    /// Index of the node at `t`, if `t` is on the grid.
    pub fn index_of(&self, t: f64) -> Option<usize> {
        let k = (t / self.step).round();
        if k >= 0.0 && (k * self.step - t).abs() <= 1e-9 * self.step.max(t.abs()) && k as usize <= self.steps {
            Some(k as usize)
        } else {
            None
        }
    }

    /// `Δℓ_k` for every step.
    pub fn increments(&self, clock: &dyn Clock) -> Result<Vec<f64>> {
        self.weighted_increments(clock, 0.0)
    }

    /// `∫_(t_k, t_{k+1}] e^{-rate s} dℓ(s)` for every step.
    pub fn weighted_increments(&self, clock: &dyn Clock, rate: f64) -> Result<Vec<f64>> {
        if clock.horizon() < self.horizon * (1.0 - 1e-12) {
            return domain(format!(
                "clock defined up to {} but the solver needs {}",
                clock.horizon(),
                self.horizon
            ));
        }
        Ok((0..self.steps)
            .map(|k| clock.weighted_increment(rate, self.time(k), self.time(k + 1)).max(0.0))
            .collect())
    }
}

/// Nodes of `ξ` on the solver's delay grid.
pub(crate) fn initial_nodes(model: &ModelSpec, xi: &Segment, grid: &TimeGrid) -> Result<Vec<f64>> {
    if xi.dim() != model.dim {
        return domain(format!("segment has dimension {}, model has {}", xi.dim(), model.dim));
    }
    if (xi.r0() - model.r0).abs() > 1e-12 * model.r0.max(1.0) {
        return domain(format!("segment has r0 = {}, model has {}", xi.r0(), model.r0));
    }
    Ok(xi.resample(grid.delay_steps).values().to_vec())
}

/// Running trapezoid of the last `m + 1` nodes, for the delay functional.
#[derive(Clone, Debug)]
pub(crate) struct DelayTracker {
    integral: Vec<f64>,
    dim: usize,
    m: usize,
    step: f64,
    active: bool,
}

impl DelayTracker {
    pub(crate) fn new(functional: &FunctionalDrift, buf: &[f64], dim: usize, m: usize, step: f64) -> Self {
        let active = !functional.is_zero() && m > 0;
        let mut integral = vec![0.0; dim];
        if active {
            trapezoid_vec(&buf[..(m + 1) * dim], dim, step, &mut integral);
        }
        DelayTracker { integral, dim, m, step, active }
    }

    /// `B` of the window ending at node `k + m`.
    #[inline]
    pub(crate) fn eval(&self, functional: &FunctionalDrift, buf: &[f64], k: usize, out: &mut [f64]) {
        match *functional {
            FunctionalDrift::Zero => out.iter_mut().for_each(|o| *o = 0.0),
            FunctionalDrift::Delay { c0, weight } => {
                let d = self.dim;
                let now = &buf[(k + self.m) * d..(k + self.m + 1) * d];
                for i in 0..d {
                    out[i] = c0 * now[i] + weight * self.integral[i];
                }
            }
        }
    }

    /// Moves from window `k` to window `k + 1`; node `k + m + 1` must be written.
    #[inline]
    pub(crate) fn advance(&mut self, buf: &[f64], k: usize) {
        if !self.active {
            return;
        }
        let (d, m, h) = (self.dim, self.m, self.step);
        if (k + 1) % m == 0 {
            let start = (k + 1) * d;
            trapezoid_vec(&buf[start..start + (m + 1) * d], d, h, &mut self.integral);
            return;
        }
        for i in 0..d {
            let add = buf[(k + m) * d + i] + buf[(k + m + 1) * d + i];
            let sub = buf[k * d + i] + buf[(k + 1) * d + i];
            self.integral[i] += 0.5 * h * (add - sub);
        }
    }
}

#[inline]
pub(crate) fn fill_normals(rng: &mut PathRng, z: &mut [f64]) {
    for zi in z.iter_mut() {
        *zi = rng.sample(StandardNormal);
    }
}

/// Runs the scheme in place; `buf` holds the initial nodes in front.
pub(crate) fn euler_into(model: &ModelSpec, grid: &TimeGrid, dl: &[f64], buf: &mut [f64], rng: &mut PathRng) {
    let d = model.dim;
    let m = grid.delay_steps;
    let h = grid.step;
    let mut drift = vec![0.0; d];
    let mut fdrift = vec![0.0; d];
    let mut z = vec![0.0; d];
    let with_functional = !model.functional.is_zero();
    let mut tracker = DelayTracker::new(&model.functional, buf, d, m, h);
    for k in 0..grid.steps {
        let cur = (k + m) * d;
        model.drift.eval(&buf[cur..cur + d], &mut drift);
        fill_normals(rng, &mut z);
        let sd = dl[k].sqrt();
        if with_functional {
            tracker.eval(&model.functional, buf, k, &mut fdrift);
            for i in 0..d {
                buf[cur + d + i] = buf[cur + i] + (drift[i] + fdrift[i]) * h + sd * z[i];
            }
            tracker.advance(buf, k);
        } else {
            for i in 0..d {
                buf[cur + d + i] = buf[cur + i] + drift[i] * h + sd * z[i];
            }
        }
    }
}

/// One trajectory of the functional SDE along `clock` on `[0, horizon]`.
pub fn solve_path(
    model: &ModelSpec,
    xi: &Segment,
    clock: &dyn Clock,
    horizon: f64,
    config: &SolverConfig,
    seed: SeedStream,
) -> Result<Trajectory> {
    let grid = TimeGrid::new(model.r0, horizon, config.step)?;
    let dl = grid.increments(clock)?;
    let init = initial_nodes(model, xi, &grid)?;
    let d = model.dim;
    let mut buf = vec![0.0; (grid.delay_steps + grid.steps + 1) * d];
    buf[..init.len()].copy_from_slice(&init);
    euler_into(model, &grid, &dl, &mut buf, &mut seed.rng());
    Ok(Trajectory::from_parts(
        model.r0,
        d,
        grid.step,
        grid.delay_steps,
        grid.steps,
        buf,
        config.interpolation,
    ))
}

fn terminal_payoff(
    model: &ModelSpec,
    grid: &TimeGrid,
    init: &[f64],
    dl: &[f64],
    payoff: &Payoff,
    buf: &mut Vec<f64>,
    seed: SeedStream,
) -> f64 {
    let d = model.dim;
    buf.resize((grid.delay_steps + grid.steps + 1) * d, 0.0);
    buf[..init.len()].copy_from_slice(init);
    euler_into(model, grid, dl, buf, &mut seed.rng());
    let start = grid.steps * d;
    payoff.eval_window(&buf[start..], d, grid.step, model.r0)
}

/// Payoff of `X_T` for each of `n_paths` Brownian streams along one clock.
pub fn inner_samples(
    model: &ModelSpec,
    xi: &Segment,
    clock: &dyn Clock,
    payoff: &Payoff,
    horizon: f64,
    n_paths: usize,
    config: &SolverConfig,
    seed: SeedStream,
) -> Result<Vec<f64>> {
    let grid = TimeGrid::new(model.r0, horizon, config.step)?;
    let dl = grid.increments(clock)?;
    let init = initial_nodes(model, xi, &grid)?;
    let brownian = seed.child(tags::BROWNIAN);
    Ok((0..n_paths)
        .into_par_iter()
        .map_init(Vec::new, |buf, i| {
            terminal_payoff(model, &grid, &init, &dl, payoff, buf, brownian.child(i as u64))
        })
        .collect())
}

/// Monte Carlo estimate of `P_T^ℓ f(ξ)`.
pub fn inner_mc(
    model: &ModelSpec,
    xi: &Segment,
    clock: &dyn Clock,
    payoff: &Payoff,
    horizon: f64,
    n_paths: usize,
    config: &SolverConfig,
    seed: SeedStream,
) -> Result<Estimate> {
    if n_paths < 2 {
        return domain("inner_mc needs at least two paths");
    }
    let v = inner_samples(model, xi, clock, payoff, horizon, n_paths, config, seed)?;
    Ok(Estimate::from_samples(&v))
}

/// Payoffs from `n_outer` subordinator paths times `n_inner` Brownian paths,
/// grouped by outer path.
pub fn nested_samples(
    model: &ModelSpec,
    xi: &Segment,
    spec: &BernsteinSpec,
    payoff: &Payoff,
    horizon: f64,
    n_outer: usize,
    n_inner: usize,
    config: &SolverConfig,
    seed: SeedStream,
) -> Result<Vec<f64>> {
    spec.validate()?;
    let grid = TimeGrid::new(model.r0, horizon, config.step)?;
    let init = initial_nodes(model, xi, &grid)?;
    let clocks = seed.child(tags::SUBORDINATOR);
    let brownian = seed.child(tags::BROWNIAN);
    let groups: Vec<Vec<f64>> = (0..n_outer)
        .into_par_iter()
        .map(|i| -> Result<Vec<f64>> {
            let path = sample_path(spec, horizon, grid.step, clocks.child(i as u64))?;
            let dl = grid.increments(&path)?;
            let stream = brownian.child(i as u64);
            let mut buf = Vec::new();
            Ok((0..n_inner)
                .map(|j| terminal_payoff(model, &grid, &init, &dl, payoff, &mut buf, stream.child(j as u64)))
                .collect())
        })
        .collect::<Result<_>>()?;
    Ok(groups.concat())
}

/// Nested Monte Carlo estimate of `P_T f(ξ) = E[P_T^ℓ f(ξ)|_{ℓ=S}]`.
pub fn semigroup_estimate(
    model: &ModelSpec,
    xi: &Segment,
    spec: &BernsteinSpec,
    payoff: &Payoff,
    horizon: f64,
    n_outer: usize,
    n_inner: usize,
    config: &SolverConfig,
    seed: SeedStream,
) -> Result<NestedEstimate> {
    if n_outer < 2 || n_inner < 2 {
        return domain("semigroup_estimate needs n_outer, n_inner >= 2");
    }
    let v = nested_samples(model, xi, spec, payoff, horizon, n_outer, n_inner, config, seed)?;
    Ok(NestedEstimate::from_groups(&v, n_outer, n_inner))
}
