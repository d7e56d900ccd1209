//! The segment space on `[-r0, 0]` with the norm
//! `‖ξ‖₂² = ∫_{-r0}^0 |ξ(s)|² ds + |ξ(0)|²`, and trajectories on `[-r0, T]`.
//!
//! Segments live on a uniform grid of `m` intervals. Integrals use the
//! composite trapezoid rule; evaluation between nodes follows the
//! [`Interpolation`] flag (right-continuous step by default).

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Interpolation {
    /// Right-continuous piecewise constant.
    #[default]
    Step,
    Linear,
}

/// Trapezoid integral of `|v(s)|²` over a window of `nodes` points of dimension `dim`.
#[inline]
pub(crate) fn trapezoid_sq(window: &[f64], dim: usize, step: f64) -> f64 {
    let nodes = window.len() / dim;
    if nodes < 2 {
        return 0.0;
    }
    let sq = |j: usize| -> f64 { window[j * dim..(j + 1) * dim].iter().map(|x| x * x).sum() };
    let mut acc = 0.5 * (sq(0) + sq(nodes - 1));
    for j in 1..nodes - 1 {
        acc += sq(j);
    }
    acc * step
}

/// Trapezoid integral of the vector function itself, written into `out`.
#[inline]
pub(crate) fn trapezoid_vec(window: &[f64], dim: usize, step: f64, out: &mut [f64]) {
    let nodes = window.len() / dim;
    out.iter_mut().for_each(|o| *o = 0.0);
    if nodes < 2 {
        return;
    }
    for j in 0..nodes {
        let w = if j == 0 || j == nodes - 1 { 0.5 } else { 1.0 };
        for (o, x) in out.iter_mut().zip(&window[j * dim..(j + 1) * dim]) {
            *o += w * x;
        }
    }
    out.iter_mut().for_each(|o| *o *= step);
}

/// Squared norm `∫|v|² + |v(0)|²` of a window ending at the present value.
#[inline]
pub(crate) fn window_norm_sq(window: &[f64], dim: usize, step: f64) -> f64 {
    let last = &window[window.len() - dim..];
    trapezoid_sq(window, dim, step) + last.iter().map(|x| x * x).sum::<f64>()
}

/// An element of the segment space.
#[derive(Clone, Debug, PartialEq)]
pub struct Segment {
    r0: f64,
    dim: usize,
    intervals: usize,
    values: Vec<f64>,
    interp: Interpolation,
}

impl Segment {
    /// Builds a segment from node values, row-major `(intervals + 1) × dim`.
    pub fn from_values(r0: f64, dim: usize, values: Vec<f64>) -> Result<Self> {
        if !(r0 >= 0.0 && r0.is_finite()) {
            return domain(format!("delay length must be nonnegative, got {r0}"));
        }
        if dim == 0 || values.is_empty() || values.len() % dim != 0 {
            return domain("segment values must be a nonempty multiple of the dimension");
        }
        let intervals = values.len() / dim - 1;
        if r0 == 0.0 && intervals != 0 {
            return domain("a segment with r0 = 0 holds a single point");
        }
        if r0 > 0.0 && intervals == 0 {
            return domain("a segment with r0 > 0 needs at least two nodes");
        }
        if values.iter().any(|v| !v.is_finite()) {
            return domain("segment values must be finite");
        }
        Ok(Segment { r0, dim, intervals, values, interp: Interpolation::Step })
    }

    pub fn from_fn(r0: f64, intervals: usize, dim: usize, f: impl Fn(f64) -> Vec<f64>) -> Result<Self> {
        let intervals = if r0 == 0.0 { 0 } else { intervals.max(1) };
        let mut values = Vec::with_capacity((intervals + 1) * dim);
        for j in 0..=intervals {
            let s = node_time(r0, intervals, j);
            let v = f(s);
            if v.len() != dim {
                return domain("segment function returned the wrong dimension");
            }
            values.extend(v);
        }
        Self::from_values(r0, dim, values)
    }

    pub fn constant(r0: f64, intervals: usize, value: &[f64]) -> Result<Self> {
        Self::from_fn(r0, intervals, value.len(), |_| value.to_vec())
    }

    pub fn with_interpolation(mut self, interp: Interpolation) -> Self {
        self.interp = interp;
        self
    }

    pub fn r0(&self) -> f64 {
        self.r0
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn intervals(&self) -> usize {
        self.intervals
    }

    pub fn interpolation(&self) -> Interpolation {
        self.interp
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn step(&self) -> f64 {
        if self.intervals == 0 {
            0.0
        } else {
            self.r0 / self.intervals as f64
        }
    }

    pub fn node_time(&self, j: usize) -> f64 {
        node_time(self.r0, self.intervals, j)
    }

    pub fn node(&self, j: usize) -> &[f64] {
        &self.values[j * self.dim..(j + 1) * self.dim]
    }

    /// `ξ(0)`, read directly from the last node.
    pub fn at_zero(&self) -> &[f64] {
        self.node(self.intervals)
    }

    /// `ξ(s)` for `s ∈ [-r0, 0]`.
    pub fn eval(&self, s: f64) -> Vec<f64> {
        eval_nodes(&self.values, self.dim, self.intervals, self.r0, s, self.interp)
    }

    pub fn norm2(&self) -> f64 {
        window_norm_sq(&self.values, self.dim, self.step()).sqrt()
    }

    pub fn norm2_sq(&self) -> f64 {
        window_norm_sq(&self.values, self.dim, self.step())
    }

    fn check_compatible(&self, other: &Segment) -> Result<()> {
        if self.dim != other.dim || self.intervals != other.intervals || self.r0 != other.r0 {
            return domain("segments live on different grids");
        }
        Ok(())
    }

    pub fn sub(&self, other: &Segment) -> Result<Segment> {
        self.check_compatible(other)?;
        let values = self.values.iter().zip(&other.values).map(|(a, b)| a - b).collect();
        Ok(Segment { values, ..self.clone() })
    }

    pub fn add(&self, other: &Segment) -> Result<Segment> {
        self.check_compatible(other)?;
        let values = self.values.iter().zip(&other.values).map(|(a, b)| a + b).collect();
        Ok(Segment { values, ..self.clone() })
    }

    pub fn scale(&self, c: f64) -> Segment {
        Segment { values: self.values.iter().map(|v| c * v).collect(), ..self.clone() }
    }

    /// Same function on a grid of `intervals` intervals; identity when the grid matches.
    pub fn resample(&self, intervals: usize) -> Segment {
        let intervals = if self.r0 == 0.0 { 0 } else { intervals.max(1) };
        if intervals == self.intervals {
            return self.clone();
        }
        let mut values = Vec::with_capacity((intervals + 1) * self.dim);
        for j in 0..intervals {
            values.extend(self.eval(node_time(self.r0, intervals, j)));
        }
        values.extend_from_slice(self.at_zero());
        Segment { intervals, values, ..self.clone() }
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        let mut header = vec!["s".to_string()];
        header.extend((1..=self.dim).map(|i| format!("x_{i}")));
        w.write_record(&header)?;
        for j in 0..=self.intervals {
            let mut row = vec![self.node_time(j).to_string()];
            row.extend(self.node(j).iter().map(|v| v.to_string()));
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }

    /// Reads a segment written as columns `s, x_1, ..., x_d` on a uniform grid.
    pub fn read_csv(path: impl AsRef<Path>) -> Result<Segment> {
        let path = path.as_ref();
        let mut r = csv::Reader::from_path(path)?;
        let mut times = Vec::new();
        let mut values = Vec::new();
        let mut dim = None;
        for (line, rec) in r.records().enumerate() {
            let rec = rec?;
            let parsed: std::result::Result<Vec<f64>, _> = rec.iter().map(|f| f.trim().parse::<f64>()).collect();
            let parsed = parsed.map_err(|e| {
                Error::Config(format!("{}: row {}: {e}", path.display(), line + 2))
            })?;
            if parsed.len() < 2 {
                return Err(Error::Config(format!("{}: row {} needs s and at least one value", path.display(), line + 2)));
            }
            let d = parsed.len() - 1;
            if *dim.get_or_insert(d) != d {
                return Err(Error::Config(format!("{}: row {} has the wrong width", path.display(), line + 2)));
            }
            times.push(parsed[0]);
            values.extend_from_slice(&parsed[1..]);
        }
        let dim = dim.ok_or_else(|| Error::Config(format!("{}: no rows", path.display())))?;
        let last = *times.last().unwrap();
        if last.abs() > 1e-12 {
            return Err(Error::Config(format!("{}: grid must end at s = 0", path.display())));
        }
        let r0 = -times[0];
        let m = times.len() - 1;
        for (j, &t) in times.iter().enumerate() {
            if (t - node_time(r0, m, j)).abs() > 1e-9 * r0.max(1.0) {
                return Err(Error::Config(format!("{}: grid is not uniform at row {}", path.display(), j + 2)));
            }
        }
        Segment::from_values(r0, dim, values)
    }
}

fn node_time(r0: f64, intervals: usize, j: usize) -> f64 {
    if intervals == 0 {
        0.0
    } else if j == intervals {
        0.0
    } else {
        -r0 + j as f64 * (r0 / intervals as f64)
    }
}

fn eval_nodes(values: &[f64], dim: usize, intervals: usize, r0: f64, s: f64, interp: Interpolation) -> Vec<f64> {
    let node = |j: usize| values[j * dim..(j + 1) * dim].to_vec();
    if intervals == 0 {
        return node(0);
    }
    let h = r0 / intervals as f64;
    let x = ((s + r0) / h).clamp(0.0, intervals as f64);
    let j = (x + 1e-9).floor() as usize;
    if j >= intervals {
        return node(intervals);
    }
    match interp {
        Interpolation::Step => node(j),
        Interpolation::Linear => {
            let w = (x - j as f64).max(0.0);
            let a = node(j);
            let b = node(j + 1);
            a.iter().zip(&b).map(|(p, q)| p + w * (q - p)).collect()
        }
    }
}

/// A path on `[-r0, T]` sampled on the uniform solver grid.
#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    r0: f64,
    dim: usize,
    step: f64,
    delay_steps: usize,
    steps: usize,
    values: Vec<f64>,
    interp: Interpolation,
}

impl Trajectory {
    pub(crate) fn from_parts(
        r0: f64,
        dim: usize,
        step: f64,
        delay_steps: usize,
        steps: usize,
        values: Vec<f64>,
        interp: Interpolation,
    ) -> Self {
        debug_assert_eq!(values.len(), (delay_steps + steps + 1) * dim);
        Trajectory { r0, dim, step, delay_steps, steps, values, interp }
    }

    pub fn r0(&self) -> f64 {
        self.r0
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn step(&self) -> f64 {
        self.step
    }

    pub fn horizon(&self) -> f64 {
        self.steps as f64 * self.step
    }

    /// Number of grid nodes on `[-r0, T]`.
    pub fn len(&self) -> usize {
        self.delay_steps + self.steps + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Time of node `i`, counting from `-r0`.
    pub fn time(&self, i: usize) -> f64 {
        (i as f64 - self.delay_steps as f64) * self.step
    }

    pub fn node(&self, i: usize) -> &[f64] {
        &self.values[i * self.dim..(i + 1) * self.dim]
    }

    /// `f(t)` at forward step `k` (time `k h`).
    pub fn at_step(&self, k: usize) -> &[f64] {
        self.node(k + self.delay_steps)
    }

    /// Window of nodes for the segment at forward step `k`.
    pub(crate) fn window(&self, k: usize) -> &[f64] {
        &self.values[k * self.dim..(k + self.delay_steps + 1) * self.dim]
    }

    /// `f(t)` for `t ∈ [-r0, T]`.
    pub fn eval(&self, t: f64) -> Vec<f64> {
        let total = self.delay_steps + self.steps;
        let span = total as f64 * self.step;
        eval_nodes(&self.values, self.dim, total, span, t - self.horizon(), self.interp)
    }

    /// Segment `f_t(s) = f(t + s)`.
    pub fn segment_at(&self, t: f64) -> Result<Segment> {
        let horizon = self.horizon();
        if !(t >= 0.0 && t <= horizon * (1.0 + 1e-12)) {
            return domain(format!("segment time {t} outside [0, {horizon}]"));
        }
        let k = (t / self.step).round();
        if (k * self.step - t).abs() <= 1e-9 * self.step && (k as usize) <= self.steps {
            return Ok(self.segment_at_step(k as usize));
        }
        let m = self.delay_steps;
        let mut values = Vec::with_capacity((m + 1) * self.dim);
        for j in 0..=m {
            let s = if j == m { 0.0 } else { -self.r0 + j as f64 * self.step };
            values.extend(self.eval(t + s));
        }
        Ok(Segment { r0: self.r0, dim: self.dim, intervals: m, values, interp: self.interp })
    }

    /// Segment at forward step `k`, copied bit-for-bit from the grid.
    pub fn segment_at_step(&self, k: usize) -> Segment {
        Segment {
            r0: self.r0,
            dim: self.dim,
            intervals: self.delay_steps,
            values: self.window(k).to_vec(),
            interp: self.interp,
        }
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        let mut header = vec!["t".to_string()];
        header.extend((1..=self.dim).map(|i| format!("x_{i}")));
        w.write_record(&header)?;
        for i in 0..self.len() {
            let mut row = vec![self.time(i).to_string()];
            row.extend(self.node(i).iter().map(|v| v.to_string()));
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }
}
