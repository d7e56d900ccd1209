//! Drift coefficients `b` and `B`, their constants `K` and `K₁`, and the
//! Yosida approximation of the dissipative part `b̃(x) = b(x) - Kx`.
//!
//! The built-in families carry exact constants:
//!
//! * `Linear { A }`: `K` is the largest eigenvalue of `(A + Aᵀ)/2`.
//! * `DissipativeCubic { k, a }`: `b(x) = kx - a x|x|²`, so `K = k`.
//! * `Delay { c0, weight }`: `B(ξ) = c0 ξ(0) + weight ∫ξ(s)ds`, and
//!   Cauchy–Schwarz gives `K₁ = sqrt(c0² + weight² r0)`.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::rng::SeedStream;
use crate::segment::{trapezoid_vec, Segment};

/// A pure point drift `x ↦ b(x)`. Implementations must not keep state.
pub type DriftFn = Arc<dyn Fn(&[f64], &mut [f64]) + Send + Sync>;

const RESOLVENT_MAX_ITER: usize = 200;

#[derive(Clone)]
pub enum PointDrift {
    Zero,
    Linear { matrix: DMatrix<f64> },
    DissipativeCubic { k: f64, a: f64 },
    /// `b^(ε)(x) = b̃^(ε)(x) + kx` built from `base`.
    Yosida { base: Box<PointDrift>, k: f64, epsilon: f64 },
    Custom(DriftFn),
}

impl fmt::Debug for PointDrift {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PointDrift::Zero => write!(f, "Zero"),
            PointDrift::Linear { matrix } => write!(f, "Linear({:?})", matrix.as_slice()),
            PointDrift::DissipativeCubic { k, a } => write!(f, "DissipativeCubic {{ k: {k}, a: {a} }}"),
            PointDrift::Yosida { base, k, epsilon } => {
                write!(f, "Yosida {{ base: {base:?}, k: {k}, epsilon: {epsilon} }}")
            }
            PointDrift::Custom(_) => write!(f, "Custom"),
        }
    }
}

impl PointDrift {
    /// Writes `b(x)` into `out`. Resolvent failures surface as NaN.
    pub fn eval(&self, x: &[f64], out: &mut [f64]) {
        match self {
            PointDrift::Zero => out.iter_mut().for_each(|o| *o = 0.0),
            PointDrift::Linear { matrix } => {
                let d = x.len();
                for (i, o) in out.iter_mut().enumerate() {
                    let mut acc = 0.0;
                    for j in 0..d {
                        acc += matrix[(i, j)] * x[j];
                    }
                    *o = acc;
                }
            }
            PointDrift::DissipativeCubic { k, a } => {
                let r2: f64 = x.iter().map(|v| v * v).sum();
                for (o, v) in out.iter_mut().zip(x) {
                    *o = k * v - a * v * r2;
                }
            }
            PointDrift::Yosida { base, k, epsilon } => {
                match resolvent(base, *k, *epsilon, x) {
                    Ok(y) => {
                        for ((o, yi), xi) in out.iter_mut().zip(&y).zip(x) {
                            *o = (yi - xi) / epsilon + k * xi;
                        }
                    }
                    Err(_) => out.iter_mut().for_each(|o| *o = f64::NAN),
                }
            }
            PointDrift::Custom(f) => f(x, out),
        }
    }

    /// `b(x) - kx`; for a Yosida drift with the same `k` this is `b̃^(ε)(x)` computed directly.
    pub fn eval_shifted(&self, k: f64, x: &[f64], out: &mut [f64]) {
        if let PointDrift::Yosida { base, k: kk, epsilon } = self {
            if *kk == k {
                match resolvent(base, k, *epsilon, x) {
                    Ok(y) => {
                        for ((o, yi), xi) in out.iter_mut().zip(&y).zip(x) {
                            *o = (yi - xi) / epsilon;
                        }
                    }
                    Err(_) => out.iter_mut().for_each(|o| *o = f64::NAN),
                }
                return;
            }
        }
        self.eval(x, out);
        for (o, xi) in out.iter_mut().zip(x) {
            *o -= k * xi;
        }
    }

    fn jacobian(&self, x: &[f64]) -> DMatrix<f64> {
        let d = x.len();
        match self {
            PointDrift::Zero => DMatrix::zeros(d, d),
            PointDrift::Linear { matrix } => matrix.clone(),
            PointDrift::DissipativeCubic { k, a } => {
                let r2: f64 = x.iter().map(|v| v * v).sum();
                DMatrix::from_fn(d, d, |i, j| {
                    let diag = if i == j { k - a * r2 } else { 0.0 };
                    diag - 2.0 * a * x[i] * x[j]
                })
            }
            _ => {
                let mut jac = DMatrix::zeros(d, d);
                let mut xp = x.to_vec();
                let mut fp = vec![0.0; d];
                let mut fm = vec![0.0; d];
                for j in 0..d {
                    let h = 1e-6 * (1.0 + x[j].abs());
                    xp[j] = x[j] + h;
                    self.eval(&xp, &mut fp);
                    xp[j] = x[j] - h;
                    self.eval(&xp, &mut fm);
                    xp[j] = x[j];
                    for i in 0..d {
                        jac[(i, j)] = (fp[i] - fm[i]) / (2.0 * h);
                    }
                }
                jac
            }
        }
    }
}

/// Solves `y - ε(b(y) - ky) = x` for `y`.
///
/// Newton with backtracking line search; falls back to the relaxed iteration
/// `y ← y - F(y)/(1+ε)` when a Newton direction fails to reduce the residual.
pub fn resolvent(base: &PointDrift, k: f64, epsilon: f64, x: &[f64]) -> Result<Vec<f64>> {
    let d = x.len();
    let scale = 1.0 + x.iter().map(|v| v * v).sum::<f64>().sqrt();
    let tol = 1e-13 * scale;
    let mut y = x.to_vec();
    let mut by = vec![0.0; d];
    let residual = |y: &[f64], by: &mut [f64]| -> (Vec<f64>, f64) {
        base.eval(y, by);
        let f: Vec<f64> = (0..d).map(|i| y[i] - epsilon * (by[i] - k * y[i]) - x[i]).collect();
        let n = f.iter().map(|v| v * v).sum::<f64>().sqrt();
        (f, n)
    };
    let (mut f, mut fnorm) = residual(&y, &mut by);
    for _ in 0..RESOLVENT_MAX_ITER {
        if fnorm <= tol {
            return Ok(y);
        }
        let jb = base.jacobian(&y);
        let jf = DMatrix::identity(d, d) - (jb - DMatrix::identity(d, d) * k) * epsilon;
        let rhs = -DVector::from_column_slice(&f);
        let mut improved = false;
        if let Some(step) = jf.lu().solve(&rhs) {
            let mut alpha = 1.0;
            for _ in 0..40 {
                let trial: Vec<f64> = (0..d).map(|i| y[i] + alpha * step[i]).collect();
                let (ft, nt) = residual(&trial, &mut by);
                if nt < fnorm {
                    y = trial;
                    f = ft;
                    fnorm = nt;
                    improved = true;
                    break;
                }
                alpha *= 0.5;
            }
        }
        if !improved {
            let theta = 1.0 / (1.0 + epsilon);
            for i in 0..d {
                y[i] -= theta * f[i];
            }
            let (ft, nt) = residual(&y, &mut by);
            f = ft;
            fnorm = nt;
        }
        if !fnorm.is_finite() {
            break;
        }
    }
    if fnorm <= tol * 1e3 {
        return Ok(y);
    }
    Err(Error::Numerical(format!(
        "resolvent did not converge after {RESOLVENT_MAX_ITER} iterations (residual {fnorm:e})"
    )))
}

/// Segment functional `B`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum FunctionalDrift {
    Zero,
    /// `B(ξ) = c0 ξ(0) + weight ∫_{-r0}^0 ξ(s) ds`.
    Delay { c0: f64, weight: f64 },
}

impl FunctionalDrift {
    pub fn is_zero(&self) -> bool {
        matches!(self, FunctionalDrift::Zero)
    }

    /// Evaluates `B` on a window of `m + 1` nodes ending at the present time.
    #[inline]
    pub fn eval_window(&self, window: &[f64], dim: usize, step: f64, out: &mut [f64]) {
        match *self {
            FunctionalDrift::Zero => out.iter_mut().for_each(|o| *o = 0.0),
            FunctionalDrift::Delay { c0, weight } => {
                trapezoid_vec(window, dim, step, out);
                let last = &window[window.len() - dim..];
                for (o, x) in out.iter_mut().zip(last) {
                    *o = c0 * x + weight * *o;
                }
            }
        }
    }

    pub fn eval(&self, xi: &Segment) -> Vec<f64> {
        let mut out = vec![0.0; xi.dim()];
        self.eval_window(xi.values(), xi.dim(), xi.step(), &mut out);
        out
    }

    pub fn lipschitz(&self, r0: f64) -> f64 {
        match *self {
            FunctionalDrift::Zero => 0.0,
            FunctionalDrift::Delay { c0, weight } => (c0 * c0 + weight * weight * r0).sqrt(),
        }
    }
}

/// Serializable drift families.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DriftDescriptor {
    Zero,
    Linear { matrix: Vec<Vec<f64>> },
    DissipativeCubic { k: f64, a: f64 },
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum FunctionalDescriptor {
    #[default]
    Zero,
    Delay {
        #[serde(default)]
        c0: f64,
        #[serde(default)]
        weight: f64,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelDescriptor {
    pub dim: usize,
    #[serde(default)]
    pub r0: f64,
    pub drift: DriftDescriptor,
    #[serde(default)]
    pub functional: FunctionalDescriptor,
}

/// `dX = b(X)dt + B(X_t)dt + dW(ℓ(t))` with constants from condition (H).
#[derive(Clone, Debug)]
pub struct ModelSpec {
    pub dim: usize,
    pub r0: f64,
    pub drift: PointDrift,
    pub functional: FunctionalDrift,
    /// One-sided Lipschitz constant of `b`.
    pub k: f64,
    /// Lipschitz constant of `B` in `‖·‖₂`.
    pub k1: f64,
    constants_checked: bool,
}

pub fn make_model(desc: &ModelDescriptor) -> Result<ModelSpec> {
    let d = desc.dim;
    if d == 0 {
        return domain("dimension must be positive");
    }
    if !(desc.r0 >= 0.0 && desc.r0.is_finite()) {
        return domain(format!("r0 must be nonnegative, got {}", desc.r0));
    }
    let (drift, k) = match &desc.drift {
        DriftDescriptor::Zero => (PointDrift::Zero, 0.0),
        DriftDescriptor::Linear { matrix } => {
            if matrix.len() != d || matrix.iter().any(|r| r.len() != d) {
                return domain(format!("linear drift needs a {d}x{d} matrix"));
            }
            let a = DMatrix::from_fn(d, d, |i, j| matrix[i][j]);
            if a.iter().any(|v| !v.is_finite()) {
                return domain("matrix entries must be finite");
            }
            let sym = (&a + a.transpose()) * 0.5;
            let k = sym.symmetric_eigenvalues().max();
            (PointDrift::Linear { matrix: a }, k)
        }
        DriftDescriptor::DissipativeCubic { k, a } => {
            if !(*a > 0.0) || !k.is_finite() {
                return domain("dissipative cubic needs a > 0 and finite k");
            }
            (PointDrift::DissipativeCubic { k: *k, a: *a }, *k)
        }
    };
    let functional = match desc.functional {
        FunctionalDescriptor::Zero => FunctionalDrift::Zero,
        FunctionalDescriptor::Delay { c0, weight } => {
            if !c0.is_finite() || !weight.is_finite() {
                return domain("delay coefficients must be finite");
            }
            FunctionalDrift::Delay { c0, weight }
        }
    };
    let k1 = functional.lipschitz(desc.r0);
    Ok(ModelSpec { dim: d, r0: desc.r0, drift, functional, k, k1, constants_checked: true })
}

/// Result of sampling condition (H) on random pairs.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HReport {
    /// `max ⟨x-y, b(x)-b(y)⟩ - K|x-y|²`.
    pub max_violation_b: f64,
    /// `max |B(ξ)-B(η)| - K₁‖ξ-η‖₂`.
    pub max_violation_functional: f64,
    pub n_pairs: usize,
}

impl HReport {
    pub const TOLERANCE: f64 = 1e-9;

    pub fn passed(&self) -> bool {
        self.max_violation_b <= Self::TOLERANCE && self.max_violation_functional <= Self::TOLERANCE
    }
}

impl ModelSpec {
    /// Model with a user drift; its constants are unverified until [`ModelSpec::certify`].
    pub fn custom(dim: usize, r0: f64, drift: DriftFn, functional: FunctionalDrift, k: f64, k1: f64) -> Result<Self> {
        if dim == 0 || !(r0 >= 0.0) || !(k1 >= 0.0) || !k.is_finite() {
            return domain("invalid custom model parameters");
        }
        Ok(ModelSpec { dim, r0, drift: PointDrift::Custom(drift), functional, k, k1, constants_checked: false })
    }

    pub fn constants_checked(&self) -> bool {
        self.constants_checked
    }

    /// Marks the constants as verified when `report` passed.
    pub fn certify(mut self, report: &HReport) -> Result<Self> {
        if !report.passed() {
            return domain(format!("condition (H) violated: {report:?}"));
        }
        self.constants_checked = true;
        Ok(self)
    }

    /// Accepts the declared constants without checking them.
    pub fn assume_constants(mut self) -> Self {
        self.constants_checked = true;
        self
    }

    pub fn drift_at(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        self.drift.eval(x, &mut out);
        out
    }

    /// `b̃(x) = b(x) - Kx`.
    pub fn shifted_drift_at(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        self.drift.eval_shifted(self.k, x, &mut out);
        out
    }

    pub fn functional_at(&self, xi: &Segment) -> Vec<f64> {
        self.functional.eval(xi)
    }

    /// Same model with `b` replaced by its Yosida approximation `b^(ε)`.
    pub fn yosida_approx(&self, epsilon: f64) -> Result<ModelSpec> {
        if !(epsilon > 0.0 && epsilon.is_finite()) {
            return domain(format!("Yosida parameter must be positive, got {epsilon}"));
        }
        let drift = PointDrift::Yosida { base: Box::new(self.drift.clone()), k: self.k, epsilon };
        Ok(ModelSpec { drift, ..self.clone() })
    }

    pub fn describe(&self) -> String {
        format!(
            "d={} r0={} b={:?} B={:?} K={} K1={}",
            self.dim, self.r0, self.drift, self.functional, self.k, self.k1
        )
    }
}

fn random_in_ball<R: Rng>(dim: usize, radius: f64, rng: &mut R) -> Vec<f64> {
    let dir: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
    let norm = dir.iter().map(|v| v * v).sum::<f64>().sqrt().max(1e-300);
    let r = radius * rng.random::<f64>().powf(1.0 / dim as f64);
    dir.into_iter().map(|v| v * r / norm).collect()
}

/// Samples `n_pairs` point pairs in the ball of `radius` and random segment pairs.
pub fn check_h(model: &ModelSpec, n_pairs: usize, radius: f64, seed: SeedStream) -> Result<HReport> {
    if n_pairs == 0 {
        return domain("check_h needs at least one pair");
    }
    let d = model.dim;
    let mut rng = seed.rng();
    let mut bx = vec![0.0; d];
    let mut by = vec![0.0; d];
    let mut worst_b = f64::NEG_INFINITY;
    for _ in 0..n_pairs {
        let x = random_in_ball(d, radius, &mut rng);
        let y = random_in_ball(d, radius, &mut rng);
        model.drift.eval(&x, &mut bx);
        model.drift.eval(&y, &mut by);
        let mut inner = 0.0;
        let mut dist2 = 0.0;
        for i in 0..d {
            inner += (x[i] - y[i]) * (bx[i] - by[i]);
            dist2 += (x[i] - y[i]) * (x[i] - y[i]);
        }
        worst_b = worst_b.max(inner - model.k * dist2);
    }
    let mut worst_f = f64::NEG_INFINITY;
    let intervals = if model.r0 > 0.0 { 16 } else { 0 };
    let nodes = (intervals + 1) * d;
    for _ in 0..n_pairs {
        let a: Vec<f64> = (0..nodes).map(|_| radius * (2.0 * rng.random::<f64>() - 1.0)).collect();
        let b: Vec<f64> = (0..nodes).map(|_| radius * (2.0 * rng.random::<f64>() - 1.0)).collect();
        let xi = Segment::from_values(model.r0, d, a)?;
        let eta = Segment::from_values(model.r0, d, b)?;
        let diff: f64 = model
            .functional_at(&xi)
            .iter()
            .zip(model.functional_at(&eta))
            .map(|(p, q)| (p - q) * (p - q))
            .sum::<f64>()
            .sqrt();
        worst_f = worst_f.max(diff - model.k1 * xi.sub(&eta)?.norm2());
    }
    Ok(HReport { max_violation_b: worst_b, max_violation_functional: worst_f, n_pairs })
}
