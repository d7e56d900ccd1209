//! Test functions `f: 𝒞 → ℝ` applied to terminal segments.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::segment::{window_norm_sq, Segment};

/// Built-in payoffs. Those reading a single coordinate use `σ(0)_1`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum BuiltinPayoff {
    Constant { value: f64 },
    /// `σ(0)_i` (zero-based).
    Coordinate { index: usize },
    /// `|σ(0)|²`.
    SquaredNorm,
    /// `1 + |σ(0)|²`.
    OnePlusSquare,
    /// `exp(-|σ(0)|²)`.
    GaussianBump,
    /// `tanh(σ(0)_1)`.
    Tanh,
    /// `1 + tanh(σ(0)_1)`.
    TanhPlusOne,
    /// `1 + tanh²(σ(0)_1)`.
    OnePlusTanhSquare,
    /// `‖σ‖₂²`.
    SegmentNormSquared,
}

impl BuiltinPayoff {
    /// A guaranteed lower bound of the payoff, if known.
    pub fn lower_bound(&self) -> f64 {
        match *self {
            BuiltinPayoff::Constant { value } => value,
            BuiltinPayoff::Coordinate { .. } => f64::NEG_INFINITY,
            BuiltinPayoff::SquaredNorm | BuiltinPayoff::SegmentNormSquared => 0.0,
            BuiltinPayoff::OnePlusSquare | BuiltinPayoff::OnePlusTanhSquare => 1.0,
            BuiltinPayoff::GaussianBump | BuiltinPayoff::TanhPlusOne => 0.0,
            BuiltinPayoff::Tanh => -1.0,
        }
    }

    fn eval(&self, window: &[f64], dim: usize, step: f64) -> f64 {
        let now = &window[window.len() - dim..];
        let sq = || now.iter().map(|v| v * v).sum::<f64>();
        match *self {
            BuiltinPayoff::Constant { value } => value,
            BuiltinPayoff::Coordinate { index } => now[index],
            BuiltinPayoff::SquaredNorm => sq(),
            BuiltinPayoff::OnePlusSquare => 1.0 + sq(),
            BuiltinPayoff::GaussianBump => (-sq()).exp(),
            BuiltinPayoff::Tanh => now[0].tanh(),
            BuiltinPayoff::TanhPlusOne => 1.0 + now[0].tanh(),
            BuiltinPayoff::OnePlusTanhSquare => {
                let t = now[0].tanh();
                1.0 + t * t
            }
            BuiltinPayoff::SegmentNormSquared => window_norm_sq(window, dim, step),
        }
    }
}

pub type PayoffFn = Arc<dyn Fn(&Segment) -> f64 + Send + Sync>;

#[derive(Clone)]
pub enum Payoff {
    Builtin(BuiltinPayoff),
    /// User function; must be pure.
    Custom { f: PayoffFn, lower_bound: f64 },
}

impl fmt::Debug for Payoff {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Payoff::Builtin(b) => write!(f, "{b:?}"),
            Payoff::Custom { lower_bound, .. } => write!(f, "Custom(lower_bound={lower_bound})"),
        }
    }
}

impl From<BuiltinPayoff> for Payoff {
    fn from(b: BuiltinPayoff) -> Self {
        Payoff::Builtin(b)
    }
}

impl Payoff {
    pub fn custom(f: impl Fn(&Segment) -> f64 + Send + Sync + 'static, lower_bound: f64) -> Self {
        Payoff::Custom { f: Arc::new(f), lower_bound }
    }

    pub fn lower_bound(&self) -> f64 {
        match self {
            Payoff::Builtin(b) => b.lower_bound(),
            Payoff::Custom { lower_bound, .. } => *lower_bound,
        }
    }

    /// Evaluates on the `m + 1` nodes of a segment window.
    pub fn eval_window(&self, window: &[f64], dim: usize, step: f64, r0: f64) -> f64 {
        match self {
            Payoff::Builtin(b) => b.eval(window, dim, step),
            Payoff::Custom { f, .. } => match Segment::from_values(r0, dim, window.to_vec()) {
                Ok(seg) => f(&seg),
                Err(_) => f64::NAN,
            },
        }
    }

    pub fn eval(&self, seg: &Segment) -> f64 {
        self.eval_window(seg.values(), seg.dim(), seg.step(), seg.r0())
    }
}
