//! Python bindings: subordinators, models, segments, the coupling and the
//! Harnack-type checks. Reports come back as plain dicts.

use std::sync::Arc;

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use pyo3::types::{PyDict, PyList};

use subharnack::coupling::coupling_clock;
use subharnack::harness::{self, McParams};
use subharnack::rng::tags;
use subharnack::subordinator::{Clock, LevyMeasure};
use subharnack::{
    BernsteinSpec, BuiltinPayoff, CouplingSummary, Interpolation, ModelDescriptor, ModelSpec, Payoff, SeedStream,
    SolverConfig, SubordinatorPath, VerificationReport,
};

fn py_err(e: subharnack::Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

trait OrPy<T> {
    fn or_py(self) -> PyResult<T>;
}

impl<T> OrPy<T> for subharnack::Result<T> {
    fn or_py(self) -> PyResult<T> {
        self.map_err(py_err)
    }
}

/// Copies the named fields of `$v` into a new dict.
macro_rules! dict {
    ($py:expr, $v:expr; $($field:ident),+ $(,)?) => {{
        let d = PyDict::new($py);
        $(d.set_item(stringify!($field), $v.$field.clone())?;)+
        d
    }};
}

/// Deserializes a Python object through `json.dumps`.
fn from_py<T: serde::de::DeserializeOwned>(obj: &Bound<'_, PyAny>) -> PyResult<T> {
    let text: String = obj.py().import("json")?.call_method1("dumps", (obj,))?.extract()?;
    serde_json::from_str(&text).map_err(|e| PyValueError::new_err(e.to_string()))
}

fn solver(step: Option<f64>, linear: bool) -> SolverConfig {
    SolverConfig { step, interpolation: if linear { Interpolation::Linear } else { Interpolation::Step } }
}

/// A builtin payoff given by name (`"one_plus_square"`) or as a dict with a `kind` key.
fn payoff(obj: &Bound<'_, PyAny>) -> PyResult<Payoff> {
    let b: BuiltinPayoff = match obj.extract::<String>() {
        Ok(kind) => serde_json::from_value(serde_json::json!({ "kind": kind }))
            .map_err(|e| PyValueError::new_err(e.to_string()))?,
        Err(_) => from_py(obj)?,
    };
    Ok(b.into())
}

#[pyclass(name = "Subordinator", module = "subharnack", frozen)]
struct PySubordinator(BernsteinSpec);

#[pymethods]
impl PySubordinator {
    /// `{"kappa": ..., "levy": {"kind": "stable", "alpha": ..., "c": ...}}`.
    #[new]
    fn new(spec: &Bound<'_, PyAny>) -> PyResult<Self> {
        let s: BernsteinSpec = from_py(spec)?;
        s.validate().or_py()?;
        Ok(Self(s))
    }

    #[staticmethod]
    #[pyo3(signature = (alpha, c, kappa=0.0))]
    fn stable(alpha: f64, c: f64, kappa: f64) -> PyResult<Self> {
        BernsteinSpec::stable(alpha, c, kappa).map(Self).or_py()
    }

    #[staticmethod]
    #[pyo3(signature = (rate, mean, kappa=0.0))]
    fn compound_exp(rate: f64, mean: f64, kappa: f64) -> PyResult<Self> {
        BernsteinSpec::new(kappa, LevyMeasure::CompoundExp { rate, mean }).map(Self).or_py()
    }

    #[staticmethod]
    #[pyo3(signature = (rate, jump_size, kappa=0.0))]
    fn point_mass(rate: f64, jump_size: f64, kappa: f64) -> PyResult<Self> {
        BernsteinSpec::new(kappa, LevyMeasure::PointMass { rate, jump_size }).map(Self).or_py()
    }

    #[staticmethod]
    fn pure_drift(kappa: f64) -> PyResult<Self> {
        BernsteinSpec::pure_drift(kappa).map(Self).or_py()
    }

    #[getter]
    fn kappa(&self) -> f64 {
        self.0.kappa
    }

    /// Bernstein function `φ(u)`.
    fn phi(&self, u: f64) -> PyResult<f64> {
        self.0.phi(u).or_py()
    }

    /// One path on `[0, horizon]`.
    #[pyo3(signature = (horizon, seed, step=1.0/64.0))]
    fn sample(&self, py: Python<'_>, horizon: f64, seed: u64, step: f64) -> PyResult<PyClockPath> {
        let spec = self.0;
        let path = py.detach(|| subharnack::sample_path(&spec, horizon, step, SeedStream::new(seed))).or_py()?;
        Ok(PyClockPath(Arc::new(path)))
    }

    fn __repr__(&self) -> String {
        format!("Subordinator({:?})", self.0)
    }
}

#[pyclass(name = "ClockPath", module = "subharnack", frozen)]
struct PyClockPath(Arc<SubordinatorPath>);

#[pymethods]
impl PyClockPath {
    fn value(&self, t: f64) -> f64 {
        self.0.value(t)
    }

    #[getter]
    fn horizon(&self) -> f64 {
        self.0.horizon()
    }

    #[getter]
    fn grid(&self) -> Vec<f64> {
        self.0.grid().to_vec()
    }

    #[getter]
    fn values(&self) -> Vec<f64> {
        self.0.values().to_vec()
    }

    /// Regularized clock values `ℓ^ε(t)` at the given times.
    fn regularized(&self, epsilon: f64, times: Vec<f64>) -> PyResult<Vec<f64>> {
        let reg = self.0.regularize(epsilon).or_py()?;
        Ok(times.iter().map(|&t| reg.value(t)).collect())
    }
}

#[pyclass(name = "Model", module = "subharnack", frozen)]
struct PyModel(ModelSpec);

#[pymethods]
impl PyModel {
    /// `{"dim": 1, "r0": 0.25, "drift": {"kind": "linear", "matrix": [[-0.5]]},
    /// "functional": {"kind": "delay", "weight": 0.3}}`.
    #[new]
    fn new(desc: &Bound<'_, PyAny>) -> PyResult<Self> {
        let d: ModelDescriptor = from_py(desc)?;
        subharnack::make_model(&d).map(Self).or_py()
    }

    #[getter]
    fn dim(&self) -> usize {
        self.0.dim
    }

    #[getter]
    fn r0(&self) -> f64 {
        self.0.r0
    }

    /// One-sided Lipschitz constant of the point drift.
    #[getter]
    fn k(&self) -> f64 {
        self.0.k
    }

    /// Lipschitz constant of the functional drift.
    #[getter]
    fn k1(&self) -> f64 {
        self.0.k1
    }

    fn drift(&self, x: Vec<f64>) -> PyResult<Vec<f64>> {
        if x.len() != self.0.dim {
            return Err(PyValueError::new_err(format!("expected {} coordinates", self.0.dim)));
        }
        Ok(self.0.drift_at(&x))
    }

    fn functional(&self, xi: &PySegment) -> Vec<f64> {
        self.0.functional_at(&xi.0)
    }

    fn yosida(&self, epsilon: f64) -> PyResult<Self> {
        self.0.yosida_approx(epsilon).map(Self).or_py()
    }

    fn __repr__(&self) -> String {
        format!("Model({})", self.0.describe())
    }
}

#[pyclass(name = "Segment", module = "subharnack", frozen)]
struct PySegment(subharnack::Segment);

#[pymethods]
impl PySegment {
    /// Node values at uniform times from `-r0` to `0`, one row per node.
    #[new]
    #[pyo3(signature = (r0, nodes, linear=false))]
    fn new(r0: f64, nodes: Vec<Vec<f64>>, linear: bool) -> PyResult<Self> {
        let dim = nodes.first().map_or(0, Vec::len);
        if nodes.iter().any(|r| r.len() != dim) {
            return Err(PyValueError::new_err("all nodes need the same dimension"));
        }
        let seg = subharnack::Segment::from_values(r0, dim, nodes.concat()).or_py()?;
        Ok(Self(seg.with_interpolation(solver(None, linear).interpolation)))
    }

    #[staticmethod]
    fn constant(r0: f64, intervals: usize, value: Vec<f64>) -> PyResult<Self> {
        subharnack::Segment::constant(r0, intervals, &value).map(Self).or_py()
    }

    #[staticmethod]
    fn read_csv(path: &str) -> PyResult<Self> {
        subharnack::Segment::read_csv(path).map(Self).or_py()
    }

    #[getter]
    fn r0(&self) -> f64 {
        self.0.r0()
    }

    #[getter]
    fn dim(&self) -> usize {
        self.0.dim()
    }

    fn nodes(&self) -> Vec<Vec<f64>> {
        self.0.values().chunks(self.0.dim()).map(<[f64]>::to_vec).collect()
    }

    fn at_zero(&self) -> Vec<f64> {
        self.0.at_zero().to_vec()
    }

    fn eval(&self, s: f64) -> Vec<f64> {
        self.0.eval(s)
    }

    /// `‖σ‖₂`.
    fn norm2(&self) -> f64 {
        self.0.norm2()
    }
}

fn report_dict<'py>(py: Python<'py>, r: &VerificationReport) -> PyResult<Bound<'py, PyDict>> {
    Ok(dict!(py, r; kind, lhs, lhs_stderr, rhs, rhs_stderr, margin, pass, vacuous, p, horizon, xi0, eta0,
        xi_eta_norm, n_outer, n_inner, n_moment, seed, model, notes))
}

fn coupling_dict<'py>(py: Python<'py>, c: &CouplingSummary) -> PyResult<Bound<'py, PyDict>> {
    Ok(dict!(py, c; run, epsilon, tau, coupled, r, log_r, m, qv, qv_bound, margin, chain_holds, terminal_equal,
        max_contraction_excess, x_terminal))
}

fn params(n_outer: usize, n_inner: usize, n_moment: usize, step: Option<f64>) -> McParams {
    McParams { n_outer, n_inner, n_moment, solver: solver(step, false) }
}

/// One trajectory along a sampled clock: `(times, values)` with one row per node from `-r0`.
#[pyfunction]
#[pyo3(signature = (model, xi, clock, horizon, seed, step=None))]
fn solve_path(
    py: Python<'_>,
    model: &PyModel,
    xi: &PySegment,
    clock: &PyClockPath,
    horizon: f64,
    seed: u64,
    step: Option<f64>,
) -> PyResult<(Vec<f64>, Vec<Vec<f64>>)> {
    let cfg = solver(step, xi.0.interpolation() == Interpolation::Linear);
    let traj = py
        .detach(|| subharnack::solve_path(&model.0, &xi.0, clock.0.as_ref(), horizon, &cfg, SeedStream::new(seed)))
        .or_py()?;
    let times = (0..traj.len()).map(|i| traj.time(i)).collect();
    let values = (0..traj.len()).map(|i| traj.node(i).to_vec()).collect();
    Ok((times, values))
}

/// Nested Monte Carlo estimate of `P_T f(ξ)`.
#[pyfunction]
#[pyo3(signature = (model, xi, subordinator, payoff, horizon, n_outer, n_inner, seed, step=None))]
#[allow(clippy::too_many_arguments)]
fn semigroup<'py>(
    py: Python<'py>,
    model: &PyModel,
    xi: &PySegment,
    subordinator: &PySubordinator,
    payoff: &Bound<'py, PyAny>,
    horizon: f64,
    n_outer: usize,
    n_inner: usize,
    seed: u64,
    step: Option<f64>,
) -> PyResult<Bound<'py, PyDict>> {
    let f = self::payoff(payoff)?;
    let cfg = solver(step, false);
    let e = py
        .detach(|| {
            subharnack::semigroup_estimate(
                &model.0,
                &xi.0,
                &subordinator.0,
                &f,
                horizon,
                n_outer,
                n_inner,
                &cfg,
                SeedStream::new(seed),
            )
        })
        .or_py()?;
    Ok(dict!(py, e; mean, stderr, n_outer, n_inner, within_var, between_var, nan_count))
}

/// A single coupling on a fresh regularized clock.
#[pyfunction]
#[pyo3(signature = (model, xi, eta, subordinator, horizon, epsilon, seed, step=None))]
#[allow(clippy::too_many_arguments)]
fn run_coupling<'py>(
    py: Python<'py>,
    model: &PyModel,
    xi: &PySegment,
    eta: &PySegment,
    subordinator: &PySubordinator,
    horizon: f64,
    epsilon: f64,
    seed: u64,
    step: Option<f64>,
) -> PyResult<Bound<'py, PyDict>> {
    let cfg = solver(step, false);
    let rec = py
        .detach(|| {
            let grid = subharnack::TimeGrid::new(model.0.r0, horizon, step)?;
            let s = SeedStream::new(seed);
            let reg = coupling_clock(&subordinator.0, horizon, grid.step, epsilon, s.child(tags::SUBORDINATOR))?;
            subharnack::run_coupling(&model.0, &xi.0, &eta.0, &reg, horizon, &cfg, s.child(tags::BROWNIAN))
        })
        .or_py()?;
    let d = coupling_dict(py, &rec.summary(0))?;
    d.set_item("gamma", rec.gamma.clone())?;
    d.set_item("x", rec.x.values().chunks(rec.x.dim()).map(<[f64]>::to_vec).collect::<Vec<_>>())?;
    d.set_item("y", rec.y.values().chunks(rec.y.dim()).map(<[f64]>::to_vec).collect::<Vec<_>>())?;
    d.set_item("times", (0..rec.x.len()).map(|i| rec.x.time(i)).collect::<Vec<_>>())?;
    Ok(d)
}

/// `n_runs` independent couplings; same streams as the `couple` command.
#[pyfunction]
#[pyo3(signature = (model, xi, eta, subordinator, horizon, epsilon, n_runs, seed, step=None))]
#[allow(clippy::too_many_arguments)]
fn run_couplings<'py>(
    py: Python<'py>,
    model: &PyModel,
    xi: &PySegment,
    eta: &PySegment,
    subordinator: &PySubordinator,
    horizon: f64,
    epsilon: f64,
    n_runs: usize,
    seed: u64,
    step: Option<f64>,
) -> PyResult<Bound<'py, PyList>> {
    let cfg = solver(step, false);
    let rows = py
        .detach(|| {
            subharnack::run_couplings(
                &model.0,
                &xi.0,
                &eta.0,
                &subordinator.0,
                horizon,
                epsilon,
                n_runs,
                &cfg,
                SeedStream::new(seed),
            )
        })
        .or_py()?;
    let out = PyList::empty(py);
    for r in &rows {
        out.append(coupling_dict(py, r)?)?;
    }
    Ok(out)
}

/// Right-hand side of the log-Harnack inequality.
#[pyfunction]
#[pyo3(signature = (model, xi, eta, subordinator, horizon, n_paths, seed, step=None))]
#[allow(clippy::too_many_arguments)]
fn log_harnack_bound<'py>(
    py: Python<'py>,
    model: &PyModel,
    xi: &PySegment,
    eta: &PySegment,
    subordinator: &PySubordinator,
    horizon: f64,
    n_paths: usize,
    seed: u64,
    step: Option<f64>,
) -> PyResult<Bound<'py, PyDict>> {
    let cfg = solver(step, false);
    let b = py
        .detach(|| {
            harness::log_harnack_bound(&model.0, &xi.0, &eta.0, horizon, &subordinator.0, n_paths, &cfg, SeedStream::new(seed))
        })
        .or_py()?;
    Ok(dict!(py, b; value, stderr, vacuous))
}

/// Power-Harnack factor with its exponential-moment diagnostics.
#[pyfunction]
#[pyo3(signature = (model, xi, eta, subordinator, horizon, p, n_paths, seed, step=None))]
#[allow(clippy::too_many_arguments)]
fn power_harnack_factor<'py>(
    py: Python<'py>,
    model: &PyModel,
    xi: &PySegment,
    eta: &PySegment,
    subordinator: &PySubordinator,
    horizon: f64,
    p: f64,
    n_paths: usize,
    seed: u64,
    step: Option<f64>,
) -> PyResult<Bound<'py, PyDict>> {
    let cfg = solver(step, false);
    let f = py
        .detach(|| {
            harness::power_harnack_factor(
                &model.0,
                &xi.0,
                &eta.0,
                horizon,
                p,
                &subordinator.0,
                n_paths,
                &cfg,
                SeedStream::new(seed),
            )
        })
        .or_py()?;
    Ok(dict!(py, f; value, stderr, vacuous, log_exp_moment, tail_share, diverged, density_ratio_rhs))
}

/// Monte Carlo check of `P_T log f(η) ≤ log P_T f(ξ) + bound`.
#[pyfunction]
#[pyo3(signature = (model, xi, eta, subordinator, payoff, horizon, seed, n_outer=200, n_inner=500, n_moment=100_000, step=None))]
#[allow(clippy::too_many_arguments)]
fn verify_log_harnack<'py>(
    py: Python<'py>,
    model: &PyModel,
    xi: &PySegment,
    eta: &PySegment,
    subordinator: &PySubordinator,
    payoff: &Bound<'py, PyAny>,
    horizon: f64,
    seed: u64,
    n_outer: usize,
    n_inner: usize,
    n_moment: usize,
    step: Option<f64>,
) -> PyResult<Bound<'py, PyDict>> {
    let f = self::payoff(payoff)?;
    let mc = params(n_outer, n_inner, n_moment, step);
    let r = py
        .detach(|| harness::verify_log_harnack(&model.0, &xi.0, &eta.0, &f, horizon, &subordinator.0, &mc, seed))
        .or_py()?;
    report_dict(py, &r)
}

/// Monte Carlo checks of the power-Harnack inequality, one report per exponent.
#[pyfunction]
#[pyo3(signature = (model, xi, eta, subordinator, payoff, horizon, ps, seed, n_outer=200, n_inner=500, n_moment=100_000, step=None))]
#[allow(clippy::too_many_arguments)]
fn verify_power_harnack<'py>(
    py: Python<'py>,
    model: &PyModel,
    xi: &PySegment,
    eta: &PySegment,
    subordinator: &PySubordinator,
    payoff: &Bound<'py, PyAny>,
    horizon: f64,
    ps: Vec<f64>,
    seed: u64,
    n_outer: usize,
    n_inner: usize,
    n_moment: usize,
    step: Option<f64>,
) -> PyResult<Bound<'py, PyList>> {
    let f = self::payoff(payoff)?;
    let mc = params(n_outer, n_inner, n_moment, step);
    let reps = py
        .detach(|| {
            harness::verify_power_harnack_many(&model.0, &xi.0, &eta.0, &f, horizon, &ps, &subordinator.0, &mc, seed)
        })
        .or_py()?;
    let out = PyList::empty(py);
    for r in &reps {
        out.append(report_dict(py, r)?)?;
    }
    Ok(out)
}

/// Binned total variation of `X_T` from `ξ` and `η` against the entropy bound.
#[pyfunction]
#[pyo3(signature = (model, xi, eta, subordinator, horizon, seed, n_outer=200, n_inner=500, n_moment=100_000, n_bins=40, p=None, step=None))]
#[allow(clippy::too_many_arguments)]
fn entropy_tv<'py>(
    py: Python<'py>,
    model: &PyModel,
    xi: &PySegment,
    eta: &PySegment,
    subordinator: &PySubordinator,
    horizon: f64,
    seed: u64,
    n_outer: usize,
    n_inner: usize,
    n_moment: usize,
    n_bins: usize,
    p: Option<f64>,
    step: Option<f64>,
) -> PyResult<Bound<'py, PyDict>> {
    let mc = params(n_outer, n_inner, n_moment, step);
    let tv = py
        .detach(|| harness::entropy_tv_report(&model.0, &xi.0, &eta.0, horizon, &subordinator.0, &mc, n_bins, p, seed))
        .or_py()?;
    let d = dict!(py, tv; tv_hat, noise_floor, tv_lower, tv_stderr, n_bins, density_ratio_rhs);
    d.set_item("report", report_dict(py, &tv.report)?)?;
    Ok(d)
}

/// Decay of `E[1/S(s)]` over `spans` for a stable subordinator.
#[pyfunction]
#[pyo3(signature = (subordinator, spans, n_paths, seed))]
fn stable_scaling<'py>(
    py: Python<'py>,
    subordinator: &PySubordinator,
    spans: Vec<f64>,
    n_paths: usize,
    seed: u64,
) -> PyResult<Bound<'py, PyDict>> {
    let desc = ModelDescriptor {
        dim: 1,
        r0: 0.0,
        drift: subharnack::model::DriftDescriptor::Zero,
        functional: Default::default(),
    };
    let model = subharnack::make_model(&desc).or_py()?;
    let r = py
        .detach(|| harness::stable_scaling_check(&model, &subordinator.0, &spans, n_paths, seed))
        .or_py()?;
    Ok(dict!(py, r; alpha, c, kappa, spans, means, stderrs, drift_ratios, slope, target_slope, pass, n_paths, seed))
}

/// Runs the command-line tool in-process and returns its exit code.
#[pyfunction]
fn run_cli(py: Python<'_>, args: Vec<String>) -> i32 {
    let argv: Vec<String> = std::iter::once("subharnack".to_string()).chain(args).collect();
    py.detach(|| subharnack::cli::main_with_args(argv))
}

#[pymodule]
#[pyo3(name = "subharnack")]
fn subharnack_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PySubordinator>()?;
    m.add_class::<PyClockPath>()?;
    m.add_class::<PyModel>()?;
    m.add_class::<PySegment>()?;
    m.add_function(wrap_pyfunction!(solve_path, m)?)?;
    m.add_function(wrap_pyfunction!(semigroup, m)?)?;
    m.add_function(wrap_pyfunction!(run_coupling, m)?)?;
    m.add_function(wrap_pyfunction!(run_couplings, m)?)?;
    m.add_function(wrap_pyfunction!(log_harnack_bound, m)?)?;
    m.add_function(wrap_pyfunction!(power_harnack_factor, m)?)?;
    m.add_function(wrap_pyfunction!(verify_log_harnack, m)?)?;
    m.add_function(wrap_pyfunction!(verify_power_harnack, m)?)?;
    m.add_function(wrap_pyfunction!(entropy_tv, m)?)?;
    m.add_function(wrap_pyfunction!(stable_scaling, m)?)?;
    m.add_function(wrap_pyfunction!(run_cli, m)?)?;
    Ok(())
}
