//! Subordinators: Bernstein functions, sample paths and their regularization.
//!
//! A sampled path is stored as `ℓ(t) = κ t + J(t)`, where `J` is a
//! right-continuous step function with finitely many atoms. For the
//! finite-activity families the atoms are the actual jumps. For the stable
//! family the increment over each grid cell `(t_i, t_{i+1}]` is sampled
//! exactly and placed as an atom at the cell midpoint, which keeps every Stieltjes
//! integral against the path an exact finite sum.

use std::sync::Arc;

use rand::Rng;
use rand_distr::{Distribution, Exp1, Poisson};
use serde::{Deserialize, Serialize};

use crate::error::{domain, Result};
use crate::rng::SeedStream;

/// Lévy measure families with closed-form Laplace exponents.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LevyMeasure {
    /// `ν(dx) = c α / Γ(1-α) x^{-1-α} dx`, so that `∫(1-e^{-ux})ν(dx) = c u^α`.
    Stable { alpha: f64, c: f64 },
    /// Poisson arrivals at `rate` with exponential jump sizes of the given mean.
    CompoundExp { rate: f64, mean: f64 },
    /// Poisson arrivals at `rate` with a fixed jump size.
    PointMass { rate: f64, jump_size: f64 },
    #[default]
    None,
}

/// Drift `κ` plus a Lévy measure; defines `φ(u) = κu + ∫(1-e^{-ux})ν(dx)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BernsteinSpec {
    pub kappa: f64,
    #[serde(default)]
    pub levy: LevyMeasure,
}

impl BernsteinSpec {
    pub fn new(kappa: f64, levy: LevyMeasure) -> Result<Self> {
        let spec = BernsteinSpec { kappa, levy };
        spec.validate()?;
        Ok(spec)
    }

    pub fn pure_drift(kappa: f64) -> Result<Self> {
        Self::new(kappa, LevyMeasure::None)
    }

    pub fn stable(alpha: f64, c: f64, kappa: f64) -> Result<Self> {
        Self::new(kappa, LevyMeasure::Stable { alpha, c })
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.kappa >= 0.0 && self.kappa.is_finite()) {
            return domain(format!("kappa must be finite and nonnegative, got {}", self.kappa));
        }
        match self.levy {
            LevyMeasure::Stable { alpha, c } => {
                if !(alpha > 0.0 && alpha < 1.0) {
                    return domain(format!("stable index must lie in (0,1), got {alpha}"));
                }
                if !(c > 0.0 && c.is_finite()) {
                    return domain(format!("stable scale must be positive, got {c}"));
                }
            }
            LevyMeasure::CompoundExp { rate, mean } => {
                if !(rate > 0.0 && rate.is_finite() && mean > 0.0 && mean.is_finite()) {
                    return domain("compound exponential needs rate > 0 and mean > 0");
                }
            }
            LevyMeasure::PointMass { rate, jump_size } => {
                if !(rate > 0.0 && rate.is_finite() && jump_size > 0.0 && jump_size.is_finite()) {
                    return domain("point mass needs rate > 0 and jump_size > 0");
                }
            }
            LevyMeasure::None => {}
        }
        Ok(())
    }

    /// Laplace exponent `φ(u)`.
    pub fn phi(&self, u: f64) -> Result<f64> {
        Ok(self.kappa * u + self.phi_tilde(u)?)
    }

    /// Laplace exponent of the driftless part, `φ(u) - κu`.
    pub fn phi_tilde(&self, u: f64) -> Result<f64> {
        if !(u > 0.0) {
            return domain(format!("Laplace exponent needs u > 0, got {u}"));
        }
        Ok(match self.levy {
            LevyMeasure::Stable { alpha, c } => c * u.powf(alpha),
            LevyMeasure::CompoundExp { rate, mean } => rate * u * mean / (1.0 + u * mean),
            LevyMeasure::PointMass { rate, jump_size } => -rate * (-u * jump_size).exp_m1(),
            LevyMeasure::None => 0.0,
        })
    }

    /// `∫(1∧x) ν(dx)`, finite for every built-in family.
    pub fn levy_integrability(&self) -> f64 {
        match self.levy {
            LevyMeasure::Stable { alpha, c } => c / libm::tgamma(2.0 - alpha),
            LevyMeasure::CompoundExp { rate, mean } => rate * mean * (-(-1.0 / mean).exp_m1()),
            LevyMeasure::PointMass { rate, jump_size } => rate * jump_size.min(1.0),
            LevyMeasure::None => 0.0,
        }
    }

    /// Finite-activity families record their jumps explicitly.
    pub fn has_jump_list(&self) -> bool {
        matches!(self.levy, LevyMeasure::CompoundExp { .. } | LevyMeasure::PointMass { .. })
    }

    /// True when `S(t) > 0` almost surely for every `t > 0`.
    pub fn strictly_positive(&self) -> bool {
        self.kappa > 0.0 || matches!(self.levy, LevyMeasure::Stable { .. })
    }

    pub fn is_deterministic(&self) -> bool {
        matches!(self.levy, LevyMeasure::None)
    }
}

/// Positive stable variate with `E e^{-uZ} = e^{-u^α}` (Kanter's representation).
pub fn one_sided_stable<R: Rng + ?Sized>(alpha: f64, rng: &mut R) -> f64 {
    let u = std::f64::consts::PI * open01(rng);
    let w: f64 = Exp1.sample(rng);
    let w = w.max(f64::MIN_POSITIVE);
    let a = (alpha * u).sin() / u.sin().powf(1.0 / alpha);
    let b = (((1.0 - alpha) * u).sin() / w).powf((1.0 - alpha) / alpha);
    a * b
}

fn open01<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    loop {
        let v: f64 = rng.random();
        if v > 0.0 {
            return v;
        }
    }
}

/// `∫_a^b e^{-rate t} dt` without cancellation for small `rate`.
#[inline]
pub fn exp_integral(rate: f64, a: f64, b: f64) -> f64 {
    let len = b - a;
    if len <= 0.0 {
        return 0.0;
    }
    if rate == 0.0 {
        return len;
    }
    (-rate * a).exp() * (-(-rate * len).exp_m1()) / rate
}

/// A recorded jump of a finite-activity path.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Jump {
    pub time: f64,
    pub size: f64,
}

/// Common interface of sampled and regularized clocks `t ↦ ℓ(t)`.
pub trait Clock: Send + Sync {
    fn value(&self, t: f64) -> f64;

    /// Right end of the interval on which the clock is defined.
    fn horizon(&self) -> f64;

    /// Drift parameter of the underlying subordinator.
    fn kappa(&self) -> f64;

    /// `∫_(a,b] e^{-rate t} dℓ(t)` without argument checks.
    fn weighted_increment(&self, rate: f64, a: f64, b: f64) -> f64;

    /// `∫_a^b e^{-2Kt} dℓ(t)`.
    fn stieltjes_weighted_integral(&self, k: f64, a: f64, b: f64) -> Result<f64> {
        if !(a >= 0.0 && a < b && b <= self.horizon() * (1.0 + 1e-12)) {
            return domain(format!(
                "need 0 <= a < b <= {}, got a={a}, b={b}",
                self.horizon()
            ));
        }
        Ok(self.weighted_increment(2.0 * k, a, b))
    }
}

/// One sampled path of a subordinator on `[0, horizon]`.
#[derive(Clone, Debug)]
pub struct SubordinatorPath {
    kappa: f64,
    horizon: f64,
    grid: Vec<f64>,
    values: Vec<f64>,
    jumps: Vec<Jump>,
    atom_times: Vec<f64>,
    atom_sizes: Vec<f64>,
    // atom_cum[i] = sum of the first i atom sizes
    atom_cum: Vec<f64>,
}

fn uniform_grid(horizon: f64, step: f64) -> Vec<f64> {
    let n = ((horizon / step) - 1e-9).ceil().max(1.0) as usize;
    let mut grid: Vec<f64> = (0..n).map(|i| i as f64 * step).collect();
    grid.push(horizon);
    grid
}

impl SubordinatorPath {
    fn build(kappa: f64, horizon: f64, mut grid: Vec<f64>, atoms: Vec<Jump>, record: bool) -> Self {
        let atom_times: Vec<f64> = atoms.iter().map(|j| j.time).collect();
        let atom_sizes: Vec<f64> = atoms.iter().map(|j| j.size).collect();
        let mut atom_cum = Vec::with_capacity(atoms.len() + 1);
        // Neumaier summation: one huge atom must not swallow the small ones after it
        let (mut acc, mut comp) = (0.0f64, 0.0f64);
        atom_cum.push(0.0);
        for &s in &atom_sizes {
            let t = acc + s;
            comp += if acc.abs() >= s.abs() { (acc - t) + s } else { (s - t) + acc };
            acc = t;
            atom_cum.push(acc + comp);
        }
        if record {
            grid.extend(atom_times.iter().copied());
            grid.sort_by(f64::total_cmp);
            grid.dedup();
        }
        let mut path = SubordinatorPath {
            kappa,
            horizon,
            grid,
            values: Vec::new(),
            jumps: if record { atoms } else { Vec::new() },
            atom_times,
            atom_sizes,
            atom_cum,
        };
        path.values = path.grid.iter().map(|&t| path.value(t)).collect();
        path
    }

    /// Deterministic path `ℓ(t) = κt`.
    pub fn pure_drift(kappa: f64, horizon: f64, step: f64) -> Result<Self> {
        check_horizon(horizon, step)?;
        if !(kappa >= 0.0) {
            return domain("kappa must be nonnegative");
        }
        Ok(Self::build(kappa, horizon, uniform_grid(horizon, step), Vec::new(), true))
    }

    /// Path `κt + Σ_{t_j <= t} size_j` from an explicit jump list.
    pub fn from_jumps(kappa: f64, horizon: f64, step: f64, mut jumps: Vec<Jump>) -> Result<Self> {
        check_horizon(horizon, step)?;
        if !(kappa >= 0.0) {
            return domain("kappa must be nonnegative");
        }
        for j in &jumps {
            if !(j.size > 0.0 && j.time > 0.0 && j.time <= horizon) {
                return domain(format!("invalid jump {j:?} on (0, {horizon}]"));
            }
        }
        jumps.sort_by(|a, b| a.time.total_cmp(&b.time));
        Ok(Self::build(kappa, horizon, uniform_grid(horizon, step), jumps, true))
    }

    pub fn kappa(&self) -> f64 {
        self.kappa
    }

    pub fn grid(&self) -> &[f64] {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Jumps recorded during sampling; empty for stable paths.
    pub fn jumps(&self) -> &[Jump] {
        &self.jumps
    }

    /// Atoms of the step part: jumps, or lumped stable cell increments.
    pub fn atoms(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.atom_times.iter().copied().zip(self.atom_sizes.iter().copied())
    }

    #[inline]
    fn atoms_upto(&self, t: f64) -> usize {
        self.atom_times.partition_point(|&s| s <= t)
    }

    #[inline]
    fn atoms_below(&self, t: f64) -> usize {
        self.atom_times.partition_point(|&s| s < t)
    }

    /// Step part `J(t)`.
    pub fn jump_part(&self, t: f64) -> f64 {
        self.atom_cum[self.atoms_upto(t)]
    }

    pub fn regularize(self: &Arc<Self>, epsilon: f64) -> Result<RegularizedPath> {
        RegularizedPath::new(Arc::clone(self), epsilon)
    }
}

fn check_horizon(horizon: f64, step: f64) -> Result<()> {
    if !(horizon > 0.0 && horizon.is_finite()) {
        return domain(format!("horizon must be positive, got {horizon}"));
    }
    if !(step > 0.0 && step.is_finite()) {
        return domain(format!("grid step must be positive, got {step}"));
    }
    Ok(())
}

impl Clock for SubordinatorPath {
    #[inline]
    fn value(&self, t: f64) -> f64 {
        self.kappa * t + self.jump_part(t)
    }

    fn horizon(&self) -> f64 {
        self.horizon
    }

    fn kappa(&self) -> f64 {
        self.kappa
    }

    fn weighted_increment(&self, rate: f64, a: f64, b: f64) -> f64 {
        let lo = self.atoms_upto(a);
        let hi = self.atoms_upto(b);
        let mut jumps = 0.0;
        for i in lo..hi {
            jumps += (-rate * self.atom_times[i]).exp() * self.atom_sizes[i];
        }
        self.kappa * exp_integral(rate, a, b) + jumps
    }
}

/// Samples a path on `[0, horizon]` with the given grid step.
///
/// Stable increments are drawn exactly per grid cell and placed as one atom at
/// the cell midpoint, so values on the grid are exact; compound Poisson families
/// draw an exact Poisson count with uniform arrival times.
pub fn sample_path(
    spec: &BernsteinSpec,
    horizon: f64,
    step: f64,
    seed: SeedStream,
) -> Result<SubordinatorPath> {
    spec.validate()?;
    check_horizon(horizon, step)?;
    let grid = uniform_grid(horizon, step);
    let mut rng = seed.rng();
    let path = match spec.levy {
        LevyMeasure::None => SubordinatorPath::build(spec.kappa, horizon, grid, Vec::new(), true),
        LevyMeasure::Stable { alpha, c } => {
            let mut atoms = Vec::with_capacity(grid.len() - 1);
            for w in grid.windows(2) {
                let dt = w[1] - w[0];
                let size = (c * dt).powf(1.0 / alpha) * one_sided_stable(alpha, &mut rng);
                if size > 0.0 {
                    atoms.push(Jump { time: 0.5 * (w[0] + w[1]), size });
                }
            }
            SubordinatorPath::build(spec.kappa, horizon, grid, atoms, false)
        }
        LevyMeasure::CompoundExp { rate, mean } => {
            let times = poisson_times(rate * horizon, horizon, &mut rng);
            let atoms = times
                .into_iter()
                .map(|time| {
                    let e: f64 = Exp1.sample(&mut rng);
                    Jump { time, size: mean * e.max(f64::MIN_POSITIVE) }
                })
                .collect();
            SubordinatorPath::build(spec.kappa, horizon, grid, atoms, true)
        }
        LevyMeasure::PointMass { rate, jump_size } => {
            let atoms = poisson_times(rate * horizon, horizon, &mut rng)
                .into_iter()
                .map(|time| Jump { time, size: jump_size })
                .collect();
            SubordinatorPath::build(spec.kappa, horizon, grid, atoms, true)
        }
    };
    Ok(path)
}

fn poisson_times<R: Rng + ?Sized>(mean: f64, horizon: f64, rng: &mut R) -> Vec<f64> {
    let count: f64 = Poisson::new(mean).expect("positive Poisson mean").sample(rng);
    let mut times: Vec<f64> = (0..count as usize)
        .map(|_| horizon * (1.0 - rng.random::<f64>()))
        .collect();
    times.sort_by(f64::total_cmp);
    times
}

/// `ℓ^ε(t) = (1/ε)∫_t^{t+ε} ℓ(s) ds + εt`, defined on `[0, horizon(ℓ) - ε]`.
///
/// With `ℓ = κs + J(s)` this is piecewise linear:
/// `ℓ^ε(t) = (κ+ε)t + κε/2 + J(t) + (1/ε) Σ_{t<t_i<=t+ε} ΔJ_i (t+ε-t_i)`.
#[derive(Clone, Debug)]
pub struct RegularizedPath {
    epsilon: f64,
    base: Arc<SubordinatorPath>,
    horizon: f64,
    eval_grid: Vec<f64>,
    eval_values: Vec<f64>,
    eval_derivatives: Vec<f64>,
}

impl RegularizedPath {
    pub fn new(base: Arc<SubordinatorPath>, epsilon: f64) -> Result<Self> {
        if !(epsilon > 0.0 && epsilon < 1.0) {
            return domain(format!("epsilon must lie in (0,1), got {epsilon}"));
        }
        let horizon = base.horizon - epsilon;
        if horizon <= 0.0 {
            return domain("path too short to regularize; sample it past the horizon by epsilon");
        }
        let mut reg = RegularizedPath {
            epsilon,
            base,
            horizon,
            eval_grid: Vec::new(),
            eval_values: Vec::new(),
            eval_derivatives: Vec::new(),
        };
        let mut grid: Vec<f64> = reg.base.grid.iter().copied().filter(|&t| t < horizon).collect();
        grid.push(horizon);
        reg.eval_values = grid.iter().map(|&t| reg.value(t)).collect();
        reg.eval_derivatives = grid.iter().map(|&t| reg.derivative(t)).collect();
        reg.eval_grid = grid;
        Ok(reg)
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn base(&self) -> &SubordinatorPath {
        &self.base
    }

    pub fn eval_grid(&self) -> &[f64] {
        &self.eval_grid
    }

    pub fn eval_values(&self) -> &[f64] {
        &self.eval_values
    }

    pub fn eval_derivatives(&self) -> &[f64] {
        &self.eval_derivatives
    }

    /// Right derivative `(ℓ(t+ε) - ℓ(t))/ε + ε`.
    pub fn derivative(&self, t: f64) -> f64 {
        let b = &self.base;
        let lo = b.atoms_upto(t);
        let hi = b.atoms_upto(t + self.epsilon);
        b.kappa + self.epsilon + b.atom_sizes[lo..hi].iter().sum::<f64>() / self.epsilon
    }

    /// Inverse `γ^ε(v)` of the strictly increasing map `ℓ^ε`.
    pub fn inverse(&self, v: f64) -> Result<f64> {
        let (mut lo, mut hi) = (0.0, self.horizon);
        let (mut f_lo, mut f_hi) = (self.value(lo), self.value(hi));
        if !(v >= f_lo && v <= f_hi) {
            return domain(format!("value {v} outside the range [{f_lo}, {f_hi}] of the clock"));
        }
        for _ in 0..200 {
            if hi - lo <= 1e-13 * hi.max(1.0) {
                break;
            }
            let mid = 0.5 * (lo + hi);
            let f_mid = self.value(mid);
            if f_mid < v {
                lo = mid;
                f_lo = f_mid;
            } else {
                hi = mid;
                f_hi = f_mid;
            }
        }
        // ℓ^ε is piecewise linear, so interpolation inside the bracket is exact.
        if f_hi > f_lo {
            Ok((lo + (v - f_lo) / (f_hi - f_lo) * (hi - lo)).clamp(lo, hi))
        } else {
            Ok(lo)
        }
    }
}

impl Clock for RegularizedPath {
    fn value(&self, t: f64) -> f64 {
        let b = &self.base;
        let eps = self.epsilon;
        let lo = b.atoms_upto(t);
        let hi = b.atoms_upto(t + eps);
        let mut window = 0.0;
        for i in lo..hi {
            window += b.atom_sizes[i] * (t + eps - b.atom_times[i]);
        }
        (b.kappa + eps) * t + 0.5 * b.kappa * eps + b.atom_cum[lo] + window / eps
    }

    fn horizon(&self) -> f64 {
        self.horizon
    }

    fn kappa(&self) -> f64 {
        self.base.kappa
    }

    fn weighted_increment(&self, rate: f64, a: f64, b: f64) -> f64 {
        let base = &self.base;
        let eps = self.epsilon;
        let lo = base.atoms_upto(a);
        let hi = base.atoms_below(b + eps);
        let mut window = 0.0;
        for i in lo..hi {
            let ti = base.atom_times[i];
            window += base.atom_sizes[i] * exp_integral(rate, (ti - eps).max(a), ti.min(b));
        }
        (base.kappa + eps) * exp_integral(rate, a, b) + window / eps
    }
}
