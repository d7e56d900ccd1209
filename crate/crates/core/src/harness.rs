//! Harnack-type bounds and their Monte Carlo verification.
//!
//! With `I = ∫_0^{T-r0} e^{-2Kt} dS(t)` and
//! `A = r0‖ξ-η‖₂² + (T+1)(e^{2K(T-r0)}-1)/(2K)·|ξ(0)-η(0)|²`:
//!
//! * log-Harnack: `P_T log f(η) ≤ log P_T f(ξ) + |ξ(0)-η(0)|² E[1/I] + (K₁²/κ) A`;
//! * power-Harnack: `(P_T f)^p(η) ≤ P_T f^p(ξ) · (E exp[p|ξ(0)-η(0)|²/((p-1)² I)])^{p-1} · exp[p K₁² A/((p-1)κ)]`;
//! * entropy and Pinsker: `2‖P_T(ξ,·) - P_T(η,·)‖²_var` is at most the log-Harnack addend.
//!
//! A verification passes when `rhs - lhs ≥ -3·sqrt(se_lhs² + se_rhs²)`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::coupling::{delay_term, over_kappa};
use crate::error::{domain, Result};
use crate::model::ModelSpec;
use crate::payoff::{BuiltinPayoff, Payoff};
use crate::rng::{tags, SeedStream};
use crate::segment::Segment;
use crate::solver::{nested_samples, SolverConfig, TimeGrid};
use crate::stats::{compensated_sum, ols_slope, Estimate, NestedEstimate};
use crate::subordinator::{exp_integral, sample_path, BernsteinSpec, Clock, LevyMeasure};

/// Share of the exponential-moment sum carried by its largest term above which
/// the estimate is treated as divergent.
pub const TAIL_SHARE_LIMIT: f64 = 0.25;

/// Monte Carlo sizes shared by the verifications.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct McParams {
    pub n_outer: usize,
    pub n_inner: usize,
    /// Subordinator paths for the moments of `1/I`.
    pub n_moment: usize,
    #[serde(default)]
    pub solver: SolverConfig,
}

impl Default for McParams {
    fn default() -> Self {
        McParams { n_outer: 200, n_inner: 500, n_moment: 100_000, solver: SolverConfig::default() }
    }
}

/// Estimate of `E[1/I]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MomentEstimate {
    pub mean: f64,
    pub stderr: f64,
    pub n: usize,
    /// Fraction of sampled paths with `I = 0`; any such path makes the moment infinite.
    pub zero_mass_fraction: f64,
    pub exact: bool,
}

/// Closed form of `I` for a deterministic clock `κt`.
fn deterministic_integral(kappa: f64, k: f64, span: f64) -> f64 {
    kappa * exp_integral(2.0 * k, 0.0, span)
}

/// Samples of `1/I` (`+∞` where `I = 0`), or `None` for a deterministic clock.
pub fn reciprocal_samples(
    spec: &BernsteinSpec,
    k: f64,
    span: f64,
    n_paths: usize,
    step: f64,
    seed: SeedStream,
) -> Result<Option<Vec<f64>>> {
    spec.validate()?;
    if !(span > 0.0) {
        return domain(format!("need T > r0, got T - r0 = {span}"));
    }
    if spec.is_deterministic() {
        return Ok(None);
    }
    if n_paths < 2 {
        return domain("moment estimate needs at least two paths");
    }
    let stream = seed.child(tags::MOMENT);
    let step = step.min(span);
    (0..n_paths)
        .into_par_iter()
        .map(|i| {
            let path = sample_path(spec, span, step, stream.child(i as u64))?;
            let integral = path.stieltjes_weighted_integral(k, 0.0, span)?;
            Ok(if integral > 0.0 { 1.0 / integral } else { f64::INFINITY })
        })
        .collect::<Result<Vec<f64>>>()
        .map(Some)
}

/// `E(∫_0^{T-r0} e^{-2Kt} dS(t))^{-1}`.
pub fn moment_inverse_estimate(
    spec: &BernsteinSpec,
    k: f64,
    horizon: f64,
    r0: f64,
    n_paths: usize,
    step: f64,
    seed: SeedStream,
) -> Result<MomentEstimate> {
    let span = horizon - r0;
    match reciprocal_samples(spec, k, span, n_paths, step, seed)? {
        None => {
            let i = deterministic_integral(spec.kappa, k, span);
            let mean = if i > 0.0 { 1.0 / i } else { f64::INFINITY };
            Ok(MomentEstimate { mean, stderr: 0.0, n: 1, zero_mass_fraction: (i == 0.0) as u8 as f64, exact: true })
        }
        Some(v) => Ok(moment_from_samples(&v)),
    }
}

fn moment_from_samples(v: &[f64]) -> MomentEstimate {
    let zeros = v.iter().filter(|x| x.is_infinite()).count();
    let n = v.len();
    if zeros > 0 {
        return MomentEstimate {
            mean: f64::INFINITY,
            stderr: 0.0,
            n,
            zero_mass_fraction: zeros as f64 / n as f64,
            exact: false,
        };
    }
    let e = Estimate::from_samples(v);
    MomentEstimate { mean: e.mean, stderr: e.stderr, n, zero_mass_fraction: 0.0, exact: false }
}

/// A bound value with Monte Carlo error; `value = +∞` means vacuous.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundEstimate {
    pub value: f64,
    pub stderr: f64,
    pub vacuous: bool,
}

impl BoundEstimate {
    fn new(value: f64, stderr: f64) -> Self {
        BoundEstimate { value, stderr: if value.is_finite() { stderr } else { 0.0 }, vacuous: value == f64::INFINITY }
    }
}

/// `ξ` and `η` on the solver's delay grid, with `|ξ(0)-η(0)|²` and `A`.
struct Geometry {
    delta0_sq: f64,
    delay_term: f64,
    span: f64,
    step: f64,
}

fn geometry(model: &ModelSpec, xi: &Segment, eta: &Segment, horizon: f64, solver: &SolverConfig) -> Result<Geometry> {
    let grid = TimeGrid::new(model.r0, horizon, solver.step)?;
    let span = horizon - model.r0;
    if !(span > 0.0) {
        return domain(format!("need T > r0, got T = {horizon}, r0 = {}", model.r0));
    }
    for s in [xi, eta] {
        if s.dim() != model.dim || (s.r0() - model.r0).abs() > 1e-12 * model.r0.max(1.0) {
            return domain("segment does not match the model's dimension or delay");
        }
    }
    let xi = xi.resample(grid.delay_steps);
    let eta = eta.resample(grid.delay_steps);
    let diff = xi.sub(&eta)?;
    let delta0_sq = diff.at_zero().iter().map(|v| v * v).sum();
    Ok(Geometry { delta0_sq, delay_term: delay_term(model, &xi, &eta, horizon)?, span, step: grid.step })
}

fn log_bound_from(model: &ModelSpec, g: &Geometry, kappa: f64, moment: &MomentEstimate) -> BoundEstimate {
    let k1_term = over_kappa(model.k1 * model.k1, g.delay_term, kappa);
    if g.delta0_sq == 0.0 {
        return BoundEstimate::new(k1_term, 0.0);
    }
    BoundEstimate::new(g.delta0_sq * moment.mean + k1_term, g.delta0_sq * moment.stderr)
}

/// `|ξ(0)-η(0)|² E[1/I] + (K₁²/κ) A`.
pub fn log_harnack_bound(
    model: &ModelSpec,
    xi: &Segment,
    eta: &Segment,
    horizon: f64,
    spec: &BernsteinSpec,
    n_paths: usize,
    solver: &SolverConfig,
    seed: SeedStream,
) -> Result<BoundEstimate> {
    let g = geometry(model, xi, eta, horizon, solver)?;
    let moment = if g.delta0_sq == 0.0 {
        MomentEstimate { mean: 0.0, stderr: 0.0, n: 0, zero_mass_fraction: 0.0, exact: true }
    } else {
        moment_inverse_estimate(spec, model.k, horizon, model.r0, n_paths, g.step, seed)?
    };
    Ok(log_bound_from(model, &g, spec.kappa, &moment))
}

/// The power-Harnack factor with its exponential-moment diagnostics.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PowerFactor {
    pub value: f64,
    pub stderr: f64,
    pub vacuous: bool,
    /// `log E exp[p|ξ(0)-η(0)|²/((p-1)² I)]`.
    pub log_exp_moment: f64,
    /// Largest single term's share of the exponential-moment sum.
    pub tail_share: f64,
    pub diverged: bool,
    /// Right-hand side of the density-ratio bound, both exponents using `p/(p-1)²`.
    pub density_ratio_rhs: f64,
}

/// `log mean exp(a_i)` with its delta-method standard error and the largest term's share.
fn log_mean_exp(a: &[f64]) -> (f64, f64, f64) {
    let max = a.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::INFINITY {
        return (f64::INFINITY, 0.0, 1.0);
    }
    let w: Vec<f64> = a.iter().map(|x| (x - max).exp()).collect();
    let e = Estimate::from_samples(&w);
    let total = compensated_sum(&w);
    (max + e.mean.ln(), e.stderr / e.mean, 1.0 / total)
}

fn power_from(model: &ModelSpec, g: &Geometry, kappa: f64, p: f64, recips: Option<&[f64]>, spec: &BernsteinSpec) -> PowerFactor {
    let c1 = p / ((p - 1.0) * (p - 1.0));
    let c2 = p / (p - 1.0);
    let k1_term = over_kappa(model.k1 * model.k1, g.delay_term, kappa);
    let (log_em, log_se, tail_share) = if g.delta0_sq == 0.0 {
        (0.0, 0.0, 0.0)
    } else {
        match recips {
            None => {
                let i = deterministic_integral(spec.kappa, model.k, g.span);
                let v = if i > 0.0 { c1 * g.delta0_sq / i } else { f64::INFINITY };
                (v, 0.0, 0.0)
            }
            Some(r) => {
                let a: Vec<f64> = r.iter().map(|x| c1 * g.delta0_sq * x).collect();
                log_mean_exp(&a)
            }
        }
    };
    let diverged = recips.is_some() && g.delta0_sq > 0.0 && (tail_share > TAIL_SHARE_LIMIT || !log_em.is_finite());
    let (value, stderr) = if diverged || k1_term.is_infinite() {
        (f64::INFINITY, 0.0)
    } else {
        let v = ((p - 1.0) * log_em + c2 * k1_term).exp();
        (v, v * (p - 1.0) * log_se)
    };
    let density_ratio_rhs = if diverged || k1_term.is_infinite() {
        f64::INFINITY
    } else {
        (log_em + c1 * k1_term).exp()
    };
    PowerFactor {
        value,
        stderr,
        vacuous: value == f64::INFINITY,
        log_exp_moment: log_em,
        tail_share,
        diverged,
        density_ratio_rhs,
    }
}

/// `(E exp[p/(p-1)²·|ξ(0)-η(0)|²/I])^{p-1} · exp[p/(p-1)·(K₁²/κ)·A]`.
#[allow(clippy::too_many_arguments)]
pub fn power_harnack_factor(
    model: &ModelSpec,
    xi: &Segment,
    eta: &Segment,
    horizon: f64,
    p: f64,
    spec: &BernsteinSpec,
    n_paths: usize,
    solver: &SolverConfig,
    seed: SeedStream,
) -> Result<PowerFactor> {
    check_p(p)?;
    let g = geometry(model, xi, eta, horizon, solver)?;
    let recips = if g.delta0_sq == 0.0 {
        None
    } else {
        reciprocal_samples(spec, model.k, g.span, n_paths, g.step, seed)?
    };
    Ok(power_from(model, &g, spec.kappa, p, recips.as_deref(), spec))
}

fn check_p(p: f64) -> Result<()> {
    if !(p > 1.0 && p.is_finite()) {
        return domain(format!("p must exceed 1, got {p}"));
    }
    Ok(())
}

/// One verified (or vacuous) inequality `lhs ≤ rhs`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VerificationReport {
    pub kind: String,
    pub lhs: f64,
    pub lhs_stderr: f64,
    pub rhs: f64,
    pub rhs_stderr: f64,
    pub margin: f64,
    pub pass: bool,
    pub vacuous: bool,
    pub p: Option<f64>,
    pub horizon: f64,
    pub xi0: Vec<f64>,
    pub eta0: Vec<f64>,
    pub xi_eta_norm: f64,
    pub n_outer: usize,
    pub n_inner: usize,
    pub n_moment: usize,
    pub seed: u64,
    pub model: String,
    pub notes: String,
}

impl VerificationReport {
    /// `rhs - lhs` against three combined standard errors.
    pub fn judge(&mut self) {
        self.vacuous = self.rhs == f64::INFINITY;
        self.margin = self.rhs - self.lhs;
        let se = (self.lhs_stderr * self.lhs_stderr + self.rhs_stderr * self.rhs_stderr).sqrt();
        self.pass = self.vacuous || (self.margin.is_finite() && self.margin >= -3.0 * se);
        if self.vacuous {
            self.rhs_stderr = 0.0;
            self.margin = f64::INFINITY;
        }
    }

    pub fn combined_stderr(&self) -> f64 {
        (self.lhs_stderr * self.lhs_stderr + self.rhs_stderr * self.rhs_stderr).sqrt()
    }
}

struct Context<'a> {
    model: &'a ModelSpec,
    xi: &'a Segment,
    eta: &'a Segment,
    horizon: f64,
    params: &'a McParams,
    seed: u64,
}

impl Context<'_> {
    fn report(&self, kind: &str, p: Option<f64>) -> Result<VerificationReport> {
        let diff = self.xi.resample(self.eta.intervals()).sub(self.eta)?;
        Ok(VerificationReport {
            kind: kind.to_string(),
            lhs: f64::NAN,
            lhs_stderr: 0.0,
            rhs: f64::NAN,
            rhs_stderr: 0.0,
            margin: f64::NAN,
            pass: false,
            vacuous: false,
            p,
            horizon: self.horizon,
            xi0: self.xi.at_zero().to_vec(),
            eta0: self.eta.at_zero().to_vec(),
            xi_eta_norm: diff.norm2(),
            n_outer: self.params.n_outer,
            n_inner: self.params.n_inner,
            n_moment: self.params.n_moment,
            seed: self.seed,
            model: self.model.describe(),
            notes: String::new(),
        })
    }

    fn samples(&self, start: &Segment, payoff: &Payoff, spec: &BernsteinSpec, tag: u64) -> Result<Vec<f64>> {
        nested_samples(
            self.model,
            start,
            spec,
            payoff,
            self.horizon,
            self.params.n_outer,
            self.params.n_inner,
            &self.params.solver,
            SeedStream::new(self.seed).child(tag),
        )
    }
}

fn require_checked(model: &ModelSpec) -> Result<()> {
    if !model.constants_checked() {
        return domain("model constants are unchecked; certify them with check_h or assume_constants");
    }
    Ok(())
}

fn nested(values: &[f64], params: &McParams) -> NestedEstimate {
    NestedEstimate::from_groups(values, params.n_outer, params.n_inner)
}

/// Checks `P_T log f(η) ≤ log P_T f(ξ) + bound` for a payoff with `f ≥ 1`.
#[allow(clippy::too_many_arguments)]
pub fn verify_log_harnack(
    model: &ModelSpec,
    xi: &Segment,
    eta: &Segment,
    payoff: &Payoff,
    horizon: f64,
    spec: &BernsteinSpec,
    params: &McParams,
    seed: u64,
) -> Result<VerificationReport> {
    require_checked(model)?;
    if payoff.lower_bound() < 1.0 {
        return domain("the log-Harnack inequality needs a payoff with f >= 1");
    }
    let ctx = Context { model, xi, eta, horizon, params, seed };
    let mut rep = ctx.report("log_harnack", None)?;
    let bound = log_harnack_bound(model, xi, eta, horizon, spec, params.n_moment, &params.solver, SeedStream::new(seed))?;
    let f_eta = ctx.samples(eta, payoff, spec, tags::START_ETA)?;
    let f_xi = ctx.samples(xi, payoff, spec, tags::START_XI)?;
    let log_eta: Vec<f64> = f_eta.iter().map(|v| v.ln()).collect();
    let lhs = nested(&log_eta, params);
    let pf = nested(&f_xi, params);
    rep.lhs = lhs.mean;
    rep.lhs_stderr = lhs.stderr;
    rep.rhs = pf.mean.ln() + bound.value;
    rep.rhs_stderr = ((pf.stderr / pf.mean).powi(2) + bound.stderr * bound.stderr).sqrt();
    rep.notes = format!("bound={} bound_stderr={}", bound.value, bound.stderr);
    rep.judge();
    Ok(rep)
}

/// Checks `(P_T f)^p(η) ≤ P_T f^p(ξ) · factor` for each `p`, sharing samples.
#[allow(clippy::too_many_arguments)]
pub fn verify_power_harnack_many(
    model: &ModelSpec,
    xi: &Segment,
    eta: &Segment,
    payoff: &Payoff,
    horizon: f64,
    ps: &[f64],
    spec: &BernsteinSpec,
    params: &McParams,
    seed: u64,
) -> Result<Vec<VerificationReport>> {
    for &p in ps {
        check_p(p)?;
    }
    require_checked(model)?;
    if payoff.lower_bound() < 0.0 {
        return domain("the power-Harnack inequality needs a payoff with f >= 0");
    }
    let ctx = Context { model, xi, eta, horizon, params, seed };
    let g = geometry(model, xi, eta, horizon, &params.solver)?;
    let recips = if g.delta0_sq == 0.0 {
        None
    } else {
        reciprocal_samples(spec, model.k, g.span, params.n_moment, g.step, SeedStream::new(seed))?
    };
    let f_eta = ctx.samples(eta, payoff, spec, tags::START_ETA)?;
    let f_xi = ctx.samples(xi, payoff, spec, tags::START_XI)?;
    let mean_eta = nested(&f_eta, params);
    ps.iter()
        .map(|&p| {
            let factor = power_from(model, &g, spec.kappa, p, recips.as_deref(), spec);
            let fp: Vec<f64> = f_xi.iter().map(|v| v.powf(p)).collect();
            let rhs_mc = nested(&fp, params);
            let mut rep = ctx.report("power_harnack", Some(p))?;
            rep.lhs = mean_eta.mean.powf(p);
            rep.lhs_stderr = p * mean_eta.mean.abs().powf(p - 1.0) * mean_eta.stderr;
            rep.rhs = rhs_mc.mean * factor.value;
            rep.rhs_stderr = ((rhs_mc.stderr * factor.value).powi(2) + (rhs_mc.mean * factor.stderr).powi(2)).sqrt();
            rep.notes = format!(
                "factor={} factor_stderr={} tail_share={} diverged={}",
                factor.value, factor.stderr, factor.tail_share, factor.diverged
            );
            rep.judge();
            Ok(rep)
        })
        .collect()
}

#[allow(clippy::too_many_arguments)]
pub fn verify_power_harnack(
    model: &ModelSpec,
    xi: &Segment,
    eta: &Segment,
    payoff: &Payoff,
    horizon: f64,
    p: f64,
    spec: &BernsteinSpec,
    params: &McParams,
    seed: u64,
) -> Result<VerificationReport> {
    Ok(verify_power_harnack_many(model, xi, eta, payoff, horizon, &[p], spec, params, seed)?.remove(0))
}

/// Binned total variation of the first coordinate of `X_T(0)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TvReport {
    pub report: VerificationReport,
    /// Plug-in binned TV; biased upward by sampling noise.
    pub tv_hat: f64,
    /// Estimated plug-in bias, `tv_hat - tv_lower`.
    pub noise_floor: f64,
    /// Sum of per-cell folded-normal corrected differences.
    pub tv_lower: f64,
    pub tv_stderr: f64,
    pub n_bins: usize,
    /// Density-ratio bound for the given `p`, reported without a left-hand side.
    pub density_ratio_rhs: Option<f64>,
}

/// `sup_A |P(A) - Q(A)|` over unions of cells of a fixed partition.
///
/// Cell edges are the pooled-sample quantiles at `i/n_bins`, so heavy tails
/// do not squeeze the mass into a few cells. Returns
/// `(tv_hat, tv_corrected, stderr)`. Each cell's observed difference `d` is
/// treated as `N(μ, σ²)` and `|μ|` is recovered by inverting the folded-normal
/// mean `E|d| = |d|`, clipped at zero.
pub fn binned_tv(a: &[f64], b: &[f64], n_bins: usize) -> (f64, f64, f64) {
    let mut pooled: Vec<f64> = a.iter().chain(b).copied().collect();
    pooled.sort_by(f64::total_cmp);
    let last = pooled.len() - 1;
    let mut edges: Vec<f64> = (1..n_bins)
        .map(|i| pooled[((i as f64 / n_bins as f64) * last as f64).round() as usize])
        .collect();
    edges.dedup();
    let cells = edges.len() + 1;
    let bin = |x: f64| edges.partition_point(|&e| e <= x);
    let mut ca = vec![0usize; cells];
    let mut cb = vec![0usize; cells];
    a.iter().for_each(|&x| ca[bin(x)] += 1);
    b.iter().for_each(|&x| cb[bin(x)] += 1);
    let (n, m) = (a.len() as f64, b.len() as f64);
    let mut tv = 0.0;
    let mut corrected = 0.0;
    let mut var = 0.0;
    for i in 0..cells {
        let p = ca[i] as f64 / n;
        let q = cb[i] as f64 / m;
        let pooled = (ca[i] + cb[i]) as f64 / (n + m);
        let d = (p - q).abs();
        tv += d;
        corrected += folded_mean_inverse(d, (pooled * (1.0 - pooled) * (1.0 / n + 1.0 / m)).sqrt());
        var += p * (1.0 - p) / n + q * (1.0 - q) / m;
    }
    (0.5 * tv, 0.5 * corrected, 0.5 * var.sqrt())
}

/// `E|μ + σZ|` for `μ ≥ 0`.
fn folded_mean(mu: f64, sigma: f64) -> f64 {
    let z = mu / sigma;
    sigma * (2.0 / std::f64::consts::PI).sqrt() * (-0.5 * z * z).exp() + mu * libm::erf(z / std::f64::consts::SQRT_2)
}

/// The `μ ≥ 0` with `E|μ + σZ| = d`, or 0 when `d` is below the `μ = 0` value.
fn folded_mean_inverse(d: f64, sigma: f64) -> f64 {
    if sigma == 0.0 {
        return d;
    }
    if d <= folded_mean(0.0, sigma) {
        return 0.0;
    }
    // folded_mean(μ) lies in [μ, μ + σ√(2/π)] and is increasing
    let (mut lo, mut hi) = ((d - sigma).max(0.0), d);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if folded_mean(mid, sigma) < d {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-15 * d {
            break;
        }
    }
    0.5 * (lo + hi)
}

/// Checks `2·TV² ≤ log-Harnack addend` with a bias-corrected binned TV lower bound.
#[allow(clippy::too_many_arguments)]
pub fn entropy_tv_report(
    model: &ModelSpec,
    xi: &Segment,
    eta: &Segment,
    horizon: f64,
    spec: &BernsteinSpec,
    params: &McParams,
    n_bins: usize,
    p: Option<f64>,
    seed: u64,
) -> Result<TvReport> {
    require_checked(model)?;
    if n_bins < 2 {
        return domain("need at least two bins");
    }
    if let Some(p) = p {
        check_p(p)?;
    }
    let n = params.n_outer * params.n_inner;
    let flat = McParams { n_outer: n, n_inner: 1, ..*params };
    let ctx = Context { model, xi, eta, horizon, params, seed };
    let coord = Payoff::from(BuiltinPayoff::Coordinate { index: 0 });
    let ctx_flat = Context { params: &flat, ..ctx };
    let a = ctx_flat.samples(xi, &coord, spec, tags::START_XI)?;
    let b = ctx_flat.samples(eta, &coord, spec, tags::START_ETA)?;
    let mut rep = ctx.report("tv", p)?;
    if a.iter().chain(&b).any(|v| !v.is_finite()) {
        rep.notes = "non-finite samples".into();
        rep.judge();
        return Ok(TvReport { report: rep, tv_hat: f64::NAN, noise_floor: f64::NAN, tv_lower: f64::NAN, tv_stderr: f64::NAN, n_bins, density_ratio_rhs: None });
    }
    let (tv_hat, tv_lower, tv_stderr) = binned_tv(&a, &b, n_bins);
    let noise_floor = tv_hat - tv_lower;
    let bound = log_harnack_bound(model, xi, eta, horizon, spec, params.n_moment, &params.solver, SeedStream::new(seed))?;
    rep.lhs = 2.0 * tv_lower * tv_lower;
    rep.lhs_stderr = 4.0 * tv_lower * tv_stderr;
    rep.rhs = bound.value;
    rep.rhs_stderr = bound.stderr;
    rep.notes = format!("tv_hat={tv_hat} noise_floor={noise_floor} tv_lower={tv_lower}");
    rep.judge();
    let density_ratio_rhs = match p {
        Some(p) => Some(
            power_harnack_factor(model, xi, eta, horizon, p, spec, params.n_moment, &params.solver, SeedStream::new(seed))?
                .density_ratio_rhs,
        ),
        None => None,
    };
    Ok(TvReport { report: rep, tv_hat, noise_floor, tv_lower, tv_stderr, n_bins, density_ratio_rhs })
}

/// Fitted decay of `m(s) = E[1/S(s)]` over spans `s = T - r0`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScalingReport {
    pub alpha: f64,
    pub c: f64,
    pub kappa: f64,
    pub spans: Vec<f64>,
    pub means: Vec<f64>,
    pub stderrs: Vec<f64>,
    /// `m(s)·κ·s`; only meaningful for `κ > 0`.
    pub drift_ratios: Vec<f64>,
    pub slope: f64,
    pub target_slope: f64,
    pub pass: bool,
    pub n_paths: usize,
    pub seed: u64,
}

pub const SCALING_SLOPE_TOL: f64 = 0.15;
pub const DEFAULT_SPANS: [f64; 4] = [0.5, 1.0, 2.0, 4.0];

/// Scaling of the moment term for `K = 0` and a stable subordinator with drift.
///
/// With `κ = 0` the log-log slope must be `-1/α ± 0.15`; with `κ > 0` every
/// `m(s)κs` must lie in `[0.5, 1]` up to three standard errors.
pub fn stable_scaling_check(
    model: &ModelSpec,
    spec: &BernsteinSpec,
    spans: &[f64],
    n_paths: usize,
    seed: u64,
) -> Result<ScalingReport> {
    if model.k.abs() >= 1e-12 {
        return domain(format!("the scaling check needs K = 0, got {}", model.k));
    }
    let LevyMeasure::Stable { alpha, c } = spec.levy else {
        return domain("the scaling check needs a stable subordinator");
    };
    if spans.len() < 2 || spans.iter().any(|s| !(*s > 0.0)) {
        return domain("need at least two positive spans");
    }
    let mut means = Vec::new();
    let mut stderrs = Vec::new();
    for (j, &s) in spans.iter().enumerate() {
        // with K = 0 the integral is S(s), sampled exactly in one cell
        let m = moment_inverse_estimate(spec, 0.0, model.r0 + s, model.r0, n_paths, s, SeedStream::new(seed).child(j as u64))?;
        means.push(m.mean);
        stderrs.push(m.stderr);
    }
    let lx: Vec<f64> = spans.iter().map(|s| s.ln()).collect();
    let ly: Vec<f64> = means.iter().map(|m| m.ln()).collect();
    let slope = ols_slope(&lx, &ly);
    let drift_ratios: Vec<f64> = spans.iter().zip(&means).map(|(s, m)| m * spec.kappa * s).collect();
    let pass = if spec.kappa == 0.0 {
        (slope + 1.0 / alpha).abs() <= SCALING_SLOPE_TOL
    } else {
        drift_ratios.iter().zip(spans.iter().zip(&stderrs)).all(|(r, (s, se))| {
            let tol = 3.0 * se * spec.kappa * s;
            *r >= 0.5 - tol && *r <= 1.0 + tol
        })
    };
    Ok(ScalingReport {
        alpha,
        c,
        kappa: spec.kappa,
        spans: spans.to_vec(),
        means,
        stderrs,
        drift_ratios,
        slope,
        target_slope: -1.0 / alpha,
        pass,
        n_paths,
        seed,
    })
}
