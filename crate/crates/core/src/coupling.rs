//! Coupling by change of measure along a regularized clock `ℓ^ε`.
//!
//! `X` starts from `ξ` and `Y` from `η`, both driven by the same Brownian
//! increments. `Y` additionally receives the push
//! `λ(t)|ξ(0)-η(0)| unit(X-Y) dℓ^ε(t)` with `λ(t) = e^{-Kt}/D`,
//! `D = ∫_0^{T-r0} e^{-2Ks} dℓ^ε(s)`, and uses `B(X_t)` as its functional
//! drift, so that `Y = X` from the coupling time `τ ≤ T - r0` on.
//!
//! On the grid the push over step `k < n - m` is
//! `c_k = |ξ(0)-η(0)| (1+Kh)^{k+1} ∫_(t_k,t_{k+1}] e^{-2Ks}dℓ^ε / D`, the
//! counterpart of `λ` for the Euler factor `1+Kh`, so that for linear drifts
//! the gap closes exactly at `T - r0`. Later steps close whatever is left.
//! When the drift-only gap `X(t_{k+1}) - Y(t_{k+1})` is no longer than `c_k`
//! the push closes it exactly. Writing `s_k = (B(X_{t_k}) - B(Y_{t_k}))h + push_k`,
//! the density
//! `R = exp(M - QV/2)`, `M = -Σ ⟨s_k, ΔW_k⟩/Δℓ_k`, `QV = Σ |s_k|²/Δℓ_k`
//! turns `ΔW_k + s_k` into independent `N(0, Δℓ_k I)` increments, under which
//! `Y` is the Euler scheme started at `η`. Hence `E R = 1` and
//! `E[R f(X_T)] = E f(X^η_T)` hold exactly for the discretization.

use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::model::ModelSpec;
use crate::rng::{tags, SeedStream};
use crate::segment::{Segment, Trajectory};
use crate::solver::{fill_normals, initial_nodes, DelayTracker, SolverConfig, TimeGrid};
use crate::stats::compensated_sum;
use crate::subordinator::{sample_path, BernsteinSpec, Clock, RegularizedPath};

/// Relative slack allowed in the intermediate inequalities of the QV chain.
pub const CHAIN_RTOL: f64 = 1e-6;

/// `(e^{2Kt} - 1)/(2K)`, continuous at `K = 0`.
pub fn growth_factor(k: f64, t: f64) -> f64 {
    if k.abs() < 1e-12 {
        t
    } else {
        (2.0 * k * t).exp_m1() / (2.0 * k)
    }
}

/// `r0‖ξ-η‖₂² + (T+1)·growth_factor(K, T-r0)·|ξ(0)-η(0)|²`.
pub fn delay_term(model: &ModelSpec, xi: &Segment, eta: &Segment, horizon: f64) -> Result<f64> {
    let diff = xi.sub(eta)?;
    let d0: f64 = diff.at_zero().iter().map(|v| v * v).sum();
    let mut a = model.r0 * diff.norm2_sq();
    if d0 > 0.0 {
        a += (horizon + 1.0) * growth_factor(model.k, horizon - model.r0) * d0;
    }
    Ok(a)
}

/// `c · A / κ` under the conventions `1/0 = ∞` and `0·∞ = 0`.
pub(crate) fn over_kappa(c: f64, a: f64, kappa: f64) -> f64 {
    if c == 0.0 || a == 0.0 {
        0.0
    } else if kappa == 0.0 {
        f64::INFINITY
    } else {
        c * a / kappa
    }
}

fn check_times(model: &ModelSpec, clock: &dyn Clock, horizon: f64) -> Result<f64> {
    let span = horizon - model.r0;
    if !(span > 0.0) {
        return domain(format!("need T > r0, got T = {horizon}, r0 = {}", model.r0));
    }
    if clock.horizon() < horizon * (1.0 - 1e-12) {
        return domain(format!("clock defined up to {} but T = {horizon}", clock.horizon()));
    }
    Ok(span)
}

/// `λ(t) = e^{-Kt} / ∫_0^{T-r0} e^{-2Ks} dℓ^ε(s)`.
pub fn lambda_weight(model: &ModelSpec, reg: &RegularizedPath, horizon: f64, t: f64) -> Result<f64> {
    let span = check_times(model, reg, horizon)?;
    if !(t >= 0.0) {
        return domain(format!("t must be nonnegative, got {t}"));
    }
    let denom = reg.stieltjes_weighted_integral(model.k, 0.0, span)?;
    Ok((-model.k * t).exp() / denom)
}

/// `Γ(t) = e^{Kt} ∫_t^{T-r0} e^{-2Ks}dℓ^ε / ∫_0^{T-r0} e^{-2Ks}dℓ^ε`, zero past `T - r0`.
pub fn gamma_factor(model: &ModelSpec, reg: &RegularizedPath, horizon: f64, t: f64) -> Result<f64> {
    let span = check_times(model, reg, horizon)?;
    if !(t >= 0.0) {
        return domain(format!("t must be nonnegative, got {t}"));
    }
    if t >= span {
        return Ok(0.0);
    }
    let denom = reg.stieltjes_weighted_integral(model.k, 0.0, span)?;
    if t == 0.0 {
        return Ok(1.0);
    }
    let num = reg.stieltjes_weighted_integral(model.k, t, span)?;
    Ok((model.k * t).exp() * num / denom)
}

/// Pathwise bound on `⟨M⟩`:
/// `(2K₁²/κ)·delay_term + 2|ξ(0)-η(0)|² / ∫_0^{T-r0} e^{-2Kt}dℓ^ε`.
///
/// `ξ` and `η` must share a grid. Returns `+∞` when `κ = 0 < K₁`.
pub fn qv_bound(model: &ModelSpec, xi: &Segment, eta: &Segment, horizon: f64, clock: &dyn Clock) -> Result<f64> {
    let span = check_times(model, clock, horizon)?;
    let diff = xi.sub(eta)?;
    let d0: f64 = diff.at_zero().iter().map(|v| v * v).sum();
    let a = delay_term(model, xi, eta, horizon)?;
    let first = over_kappa(2.0 * model.k1 * model.k1, a, clock.kappa());
    let second = if d0 == 0.0 {
        0.0
    } else {
        2.0 * d0 / clock.stieltjes_weighted_integral(model.k, 0.0, span)?
    };
    Ok(first + second)
}

/// Pieces of the pathwise estimate of `⟨M⟩`, in the order they are chained.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct QvChain {
    /// `Σ |B(X_{t_k}) - B(Y_{t_k})|² h² / Δℓ_k`.
    pub functional_part: f64,
    /// `Σ |push_k|² / Δℓ_k`.
    pub push_part: f64,
    /// `|ξ(0)-η(0)|² (1+K⁺h)² / D`, the bound on `push_part`; the factor is 1 when `K ≤ 0`.
    pub push_bound: f64,
    /// `Σ ‖X_{t_k} - Y_{t_k}‖₂² h² / Δℓ_k`.
    pub weighted_gap: f64,
    /// `Σ ‖X_{t_k} - Y_{t_k}‖₂² h`.
    pub gap_integral: f64,
    /// `r0‖ξ-η‖₂² + (T+1)·growth_factor·|ξ(0)-η(0)|²`.
    pub gap_bound: f64,
    pub k1: f64,
    pub kappa: f64,
}

impl QvChain {
    /// Checks each link of the chain ending in [`qv_bound`].
    pub fn holds(&self, qv: f64) -> bool {
        let le = |a: f64, b: f64| a <= b + CHAIN_RTOL * b.abs() + 1e-12;
        let algebraic = le(qv, 2.0 * (self.functional_part + self.push_part));
        let push = le(self.push_part, self.push_bound);
        let lipschitz = le(self.functional_part, self.k1 * self.k1 * self.weighted_gap);
        let slope = self.kappa == 0.0 || le(self.weighted_gap, self.gap_integral / self.kappa);
        let gap = le(self.gap_integral, self.gap_bound);
        algebraic && push && lipschitz && slope && gap
    }
}

#[derive(Clone, Debug)]
pub struct CouplingRecord {
    pub x: Trajectory,
    pub y: Trajectory,
    /// Coupling time; `T` if the processes never met.
    pub tau: f64,
    pub coupled: bool,
    /// `Γ(t_k)` on the solver grid.
    pub gamma: Vec<f64>,
    pub m_terminal: f64,
    pub qv_terminal: f64,
    pub r: f64,
    pub qv_bound: f64,
    pub chain: QvChain,
    /// `max_k |X(t_k)-Y(t_k)| - |ξ(0)-η(0)|Γ(t_k)`.
    pub max_contraction_excess: f64,
    /// `X_T` and `Y_T` agree bit for bit.
    pub terminal_equal: bool,
    pub epsilon: f64,
    pub horizon: f64,
    pub r0: f64,
}

impl CouplingRecord {
    pub fn step(&self) -> f64 {
        self.x.step()
    }

    /// `τ ≤ T - r0 + 2h`.
    pub fn coupled_in_time(&self) -> bool {
        self.coupled && self.tau <= self.horizon - self.r0 + 2.0 * self.step()
    }

    pub fn summary(&self, run: usize) -> CouplingSummary {
        let log_r = girsanov_log_density(self);
        CouplingSummary {
            run,
            epsilon: self.epsilon,
            tau: self.tau,
            coupled: self.coupled_in_time(),
            r: self.r,
            log_r,
            m: self.m_terminal,
            qv: self.qv_terminal,
            qv_bound: self.qv_bound,
            margin: self.qv_bound - self.qv_terminal,
            chain_holds: self.chain.holds(self.qv_terminal),
            terminal_equal: self.terminal_equal,
            max_contraction_excess: self.max_contraction_excess,
            x_terminal: self.x.node(self.x.len() - 1).to_vec(),
        }
    }
}

/// Per-run numbers kept when trajectories are dropped.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CouplingSummary {
    pub run: usize,
    pub epsilon: f64,
    pub tau: f64,
    pub coupled: bool,
    pub r: f64,
    pub log_r: f64,
    pub m: f64,
    pub qv: f64,
    pub qv_bound: f64,
    pub margin: f64,
    pub chain_holds: bool,
    pub terminal_equal: bool,
    pub max_contraction_excess: f64,
    /// `X(T)`, equal to `Y(T)` when coupled.
    pub x_terminal: Vec<f64>,
}

/// `log R = M - ⟨M⟩/2`.
pub fn girsanov_log_density(record: &CouplingRecord) -> f64 {
    record.m_terminal - 0.5 * record.qv_terminal
}

fn window_gap_sq(bx: &[f64], by: &[f64], k: usize, m: usize, d: usize, h: f64) -> f64 {
    let node = |j: usize| -> f64 {
        (0..d).map(|i| {
            let v = bx[j * d + i] - by[j * d + i];
            v * v
        })
        .sum()
    };
    let now = node(k + m);
    if m == 0 {
        return now;
    }
    let mut acc = 0.5 * (node(k) + now);
    for j in k + 1..k + m {
        acc += node(j);
    }
    acc * h + now
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|a| a * a).sum::<f64>().sqrt()
}

/// Runs `X` from `ξ` and the pushed `Y` from `η` along `reg` up to `horizon`.
pub fn run_coupling(
    model: &ModelSpec,
    xi: &Segment,
    eta: &Segment,
    reg: &RegularizedPath,
    horizon: f64,
    config: &SolverConfig,
    seed: SeedStream,
) -> Result<CouplingRecord> {
    check_times(model, reg, horizon)?;
    let grid = TimeGrid::new(model.r0, horizon, config.step)?;
    let (d, m, h, n) = (model.dim, grid.delay_steps, grid.step, grid.steps);
    let n_c = n - m;
    let init_x = initial_nodes(model, xi, &grid)?;
    let init_y = initial_nodes(model, eta, &grid)?;
    let xi_g = Segment::from_values(model.r0, d, init_x.clone())?;
    let eta_g = Segment::from_values(model.r0, d, init_y.clone())?;

    let dl = grid.increments(reg)?;
    if let Some(k) = dl.iter().position(|v| !(*v > 0.0)) {
        return Err(Error::Numerical(format!("regularized clock has no increment on step {k}")));
    }
    let p2 = grid.weighted_increments(reg, 2.0 * model.k)?;
    let mut suffix = vec![0.0; n_c + 1];
    for k in (0..n_c).rev() {
        suffix[k] = suffix[k + 1] + p2[k];
    }
    let denom = suffix[0];
    let gamma: Vec<f64> = (0..=n)
        .map(|k| if k < n_c { (model.k * grid.time(k)).exp() * suffix[k] / denom } else { 0.0 })
        .collect();

    let delta0 = {
        let a = &init_x[m * d..];
        let b = &init_y[m * d..];
        a.iter().zip(b).map(|(p, q)| (p - q) * (p - q)).sum::<f64>().sqrt()
    };
    let tol = delta0 * 1e-8 + 1e-12;
    let growth = 1.0 + model.k * h;

    let len = (m + n + 1) * d;
    let mut bx = vec![0.0; len];
    let mut by = vec![0.0; len];
    bx[..init_x.len()].copy_from_slice(&init_x);
    by[..init_y.len()].copy_from_slice(&init_y);
    let mut tx = DelayTracker::new(&model.functional, &bx, d, m, h);
    let mut ty = DelayTracker::new(&model.functional, &by, d, m, h);
    let with_functional = !model.functional.is_zero();

    let mut rng = seed.rng();
    let mut z = vec![0.0; d];
    let mut drift_x = vec![0.0; d];
    let mut drift_y = vec![0.0; d];
    let mut fx = vec![0.0; d];
    let mut fy = vec![0.0; d];
    let mut gap = vec![0.0; d];
    let mut push = vec![0.0; d];

    let mut coupled_at: Option<usize> = (delta0 <= tol).then_some(0);

    let mut m_terms = Vec::with_capacity(n);
    let mut qv_terms = Vec::with_capacity(n);
    let mut f_terms = Vec::with_capacity(n);
    let mut p_terms = Vec::with_capacity(n);
    let mut wg_terms = Vec::with_capacity(n);
    let mut g_terms = Vec::with_capacity(n);
    let mut excess = f64::NEG_INFINITY;

    for k in 0..n {
        let cur = (k + m) * d;
        let next = cur + d;
        let dgap = norm_diff(&bx[cur..cur + d], &by[cur..cur + d]);
        excess = excess.max(dgap - delta0 * gamma[k]);

        model.drift.eval(&bx[cur..cur + d], &mut drift_x);
        fill_normals(&mut rng, &mut z);
        let sd = dl[k].sqrt();
        let segments_equal = coupled_at.is_some_and(|kt| k >= kt + m);
        if with_functional {
            tx.eval(&model.functional, &bx, k, &mut fx);
            if segments_equal {
                fy.copy_from_slice(&fx);
            } else {
                ty.eval(&model.functional, &by, k, &mut fy);
            }
        }
        for i in 0..d {
            bx[next + i] = bx[cur + i] + (drift_x[i] + fx[i]) * h + sd * z[i];
        }

        if coupled_at.is_some() {
            by[next..next + d].copy_from_slice(&bx[next..next + d]);
            push.iter_mut().for_each(|p| *p = 0.0);
        } else {
            model.drift.eval(&by[cur..cur + d], &mut drift_y);
            for i in 0..d {
                let y_free = by[cur + i] + (drift_y[i] + fx[i]) * h + sd * z[i];
                gap[i] = bx[next + i] - y_free;
                by[next + i] = y_free;
            }
            let c_k = if k < n_c { delta0 * growth.powi(k as i32 + 1) * p2[k] / denom } else { f64::INFINITY };
            if norm(&gap) <= c_k {
                push.copy_from_slice(&gap);
                for i in 0..d {
                    by[next + i] = bx[next + i];
                }
                coupled_at = Some(k + 1);
            } else {
                for i in 0..d {
                    push[i] = c_k * (bx[cur + i] - by[cur + i]) / dgap;
                    by[next + i] += push[i];
                }
                if norm_diff(&bx[next..next + d], &by[next..next + d]) <= tol {
                    for i in 0..d {
                        push[i] += bx[next + i] - by[next + i];
                        by[next + i] = bx[next + i];
                    }
                    coupled_at = Some(k + 1);
                }
            }
        }

        let mut s_dot_z = 0.0;
        let mut s_sq = 0.0;
        let mut f_sq = 0.0;
        for i in 0..d {
            let fd = (fx[i] - fy[i]) * h;
            let s = fd + push[i];
            s_dot_z += s * z[i];
            s_sq += s * s;
            f_sq += fd * fd;
        }
        m_terms.push(-s_dot_z / sd);
        qv_terms.push(s_sq / dl[k]);
        f_terms.push(f_sq / dl[k]);
        p_terms.push(push.iter().map(|p| p * p).sum::<f64>() / dl[k]);
        let g = if segments_equal { 0.0 } else { window_gap_sq(&bx, &by, k, m, d, h) };
        wg_terms.push(g * h * h / dl[k]);
        g_terms.push(g * h);

        if with_functional {
            tx.advance(&bx, k);
            ty.advance(&by, k);
        }
    }
    let last = (n + m) * d;
    excess = excess.max(norm_diff(&bx[last..last + d], &by[last..last + d]) - delta0 * gamma[n]);

    let m_terminal = compensated_sum(&m_terms);
    let qv_terminal = compensated_sum(&qv_terms);
    let d0_sq = delta0 * delta0;
    let chain = QvChain {
        functional_part: compensated_sum(&f_terms),
        push_part: compensated_sum(&p_terms),
        push_bound: if d0_sq == 0.0 { 0.0 } else { d0_sq * growth.max(1.0).powi(2) / denom },
        weighted_gap: compensated_sum(&wg_terms),
        gap_integral: compensated_sum(&g_terms),
        gap_bound: delay_term(model, &xi_g, &eta_g, horizon)?,
        k1: model.k1,
        kappa: reg.kappa(),
    };
    let bound = qv_bound(model, &xi_g, &eta_g, horizon, reg)?;
    let terminal_equal = bx[n * d..] == by[n * d..];
    let (tau, coupled) = match coupled_at {
        Some(k) => (grid.time(k), true),
        None => (horizon, false),
    };
    let x = Trajectory::from_parts(model.r0, d, h, m, n, bx, config.interpolation);
    let y = Trajectory::from_parts(model.r0, d, h, m, n, by, config.interpolation);
    Ok(CouplingRecord {
        x,
        y,
        tau,
        coupled,
        gamma,
        m_terminal,
        qv_terminal,
        r: (m_terminal - 0.5 * qv_terminal).exp(),
        qv_bound: bound,
        chain,
        max_contraction_excess: excess,
        terminal_equal,
        epsilon: reg.epsilon(),
        horizon,
        r0: model.r0,
    })
}

fn norm_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(p, q)| (p - q) * (p - q)).sum::<f64>().sqrt()
}

/// Regularized clock for coupling run `run`: a path on `[0, T+1]` smoothed with `ε`.
pub fn coupling_clock(
    spec: &BernsteinSpec,
    horizon: f64,
    step: f64,
    epsilon: f64,
    seed: SeedStream,
) -> Result<RegularizedPath> {
    let path = Arc::new(sample_path(spec, horizon + 1.0, step, seed)?);
    path.regularize(epsilon)
}

/// `n_runs` independent couplings, each on its own subordinator path.
#[allow(clippy::too_many_arguments)]
pub fn run_couplings(
    model: &ModelSpec,
    xi: &Segment,
    eta: &Segment,
    spec: &BernsteinSpec,
    horizon: f64,
    epsilon: f64,
    n_runs: usize,
    config: &SolverConfig,
    seed: SeedStream,
) -> Result<Vec<CouplingSummary>> {
    let grid = TimeGrid::new(model.r0, horizon, config.step)?;
    let clocks = seed.child(tags::SUBORDINATOR);
    let brownian = seed.child(tags::BROWNIAN);
    (0..n_runs)
        .into_par_iter()
        .map(|i| {
            let reg = coupling_clock(spec, horizon, grid.step, epsilon, clocks.child(i as u64))?;
            let rec = run_coupling(model, xi, eta, &reg, horizon, config, brownian.child(i as u64))?;
            Ok(rec.summary(i))
        })
        .collect()
}
