#![allow(dead_code)]

use subharnack::model::{make_model, DriftDescriptor, FunctionalDescriptor, ModelDescriptor, ModelSpec};

/// `∫_0^∞ g(x) dx` for `g` smooth on `(0,∞)`, via `x = e^y` and the trapezoid rule.
pub fn log_quad(g: impl Fn(f64) -> f64, y_lo: f64, y_hi: f64, dy: f64) -> f64 {
    let n = ((y_hi - y_lo) / dy).ceil() as usize;
    let h = (y_hi - y_lo) / n as f64;
    (0..=n)
        .map(|i| {
            let y = y_lo + i as f64 * h;
            let w = if i == 0 || i == n { 0.5 } else { 1.0 };
            w * g(y.exp()) * y.exp()
        })
        .sum::<f64>()
        * h
}

/// `∫_a^b g` by composite Simpson with `n` (even) panels.
pub fn simpson(g: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
    let h = (b - a) / n as f64;
    let mut s = g(a) + g(b);
    for i in 1..n {
        s += g(a + i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
    }
    s * h / 3.0
}

pub fn normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / std::f64::consts::SQRT_2)
}

pub fn mean_se(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1.0);
    (m, (var / n).sqrt())
}

pub fn model(dim: usize, r0: f64, drift: DriftDescriptor, functional: FunctionalDescriptor) -> ModelSpec {
    make_model(&ModelDescriptor { dim, r0, drift, functional }).unwrap()
}

/// `b ≡ 0`, `B ≡ 0`.
pub fn free(dim: usize, r0: f64) -> ModelSpec {
    model(dim, r0, DriftDescriptor::Zero, FunctionalDescriptor::Zero)
}

pub fn linear_1d(k: f64, r0: f64, weight: f64) -> ModelSpec {
    let functional = if weight == 0.0 {
        FunctionalDescriptor::Zero
    } else {
        FunctionalDescriptor::Delay { c0: 0.0, weight }
    };
    model(1, r0, DriftDescriptor::Linear { matrix: vec![vec![k]] }, functional)
}

/// The full delay model: `b(x) = -x/2`, `B(ξ) = 0.3∫ξ`, `r0 = 1/4`.
pub fn delay_model() -> ModelSpec {
    linear_1d(-0.5, 0.25, 0.3)
}
