//! TOML experiment configuration.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::harness::{McParams, DEFAULT_SPANS};
use crate::model::{make_model, ModelDescriptor, ModelSpec};
use crate::payoff::BuiltinPayoff;
use crate::segment::{Interpolation, Segment};
use crate::solver::{SolverConfig, TimeGrid};
use crate::subordinator::BernsteinSpec;

/// Initial segment given inline or as a CSV file with columns `s, x_1, ..., x_d`.
///
/// Exactly one of the fields must be set. `nodes` lists the values at
/// uniformly spaced times from `-r0` to `0`.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SegmentSource {
    pub constant: Option<Vec<f64>>,
    pub nodes: Option<Vec<Vec<f64>>>,
    pub csv: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: Option<u64>,
    #[serde(rename = "T")]
    pub horizon: f64,
    pub model: ModelDescriptor,
    pub subordinator: BernsteinSpec,
    pub xi: Option<SegmentSource>,
    pub eta: Option<SegmentSource>,
    /// Exponents for the power inequality; `p` and `ps` are merged.
    pub p: Option<f64>,
    #[serde(default)]
    pub ps: Vec<f64>,
    #[serde(default = "default_epsilons")]
    pub epsilons: Vec<f64>,
    pub step: Option<f64>,
    #[serde(default)]
    pub interpolation: Interpolation,
    #[serde(default = "default_outer")]
    pub n_outer: usize,
    #[serde(default = "default_inner")]
    pub n_inner: usize,
    #[serde(default = "default_couplings")]
    pub n_couplings: usize,
    #[serde(default = "default_moment")]
    pub n_moment: usize,
    #[serde(default = "default_bins")]
    pub n_bins: usize,
    pub payoff: Option<BuiltinPayoff>,
    #[serde(default = "default_spans")]
    pub spans: Vec<f64>,
    pub output: Option<PathBuf>,
}

fn default_epsilons() -> Vec<f64> {
    vec![0.05]
}
fn default_outer() -> usize {
    200
}
fn default_inner() -> usize {
    500
}
fn default_couplings() -> usize {
    1000
}
fn default_moment() -> usize {
    100_000
}
fn default_bins() -> usize {
    40
}
fn default_spans() -> Vec<f64> {
    DEFAULT_SPANS.to_vec()
}

/// A parsed config with everything it references resolved.
#[derive(Clone, Debug)]
pub struct Experiment {
    pub config: ExperimentConfig,
    pub model: ModelSpec,
    pub grid: TimeGrid,
    pub seed: u64,
    /// Hex SHA-256 of the config text.
    pub config_hash: String,
    xi: Option<Segment>,
    eta: Option<Segment>,
}

pub fn hash_text(text: &str) -> String {
    Sha256::digest(text.as_bytes()).iter().map(|b| format!("{b:02x}")).collect()
}

fn cfg_err<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Config(msg.into()))
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn solver(&self) -> SolverConfig {
        SolverConfig { step: self.step, interpolation: self.interpolation }
    }

    pub fn mc_params(&self) -> McParams {
        McParams { n_outer: self.n_outer, n_inner: self.n_inner, n_moment: self.n_moment, solver: self.solver() }
    }

    /// `p` followed by `ps`, without duplicates.
    pub fn exponents(&self) -> Vec<f64> {
        let mut out: Vec<f64> = Vec::new();
        for &p in self.p.iter().chain(&self.ps) {
            if !out.contains(&p) {
                out.push(p);
            }
        }
        out
    }
}

impl Experiment {
    /// Parses and validates `text`; relative CSV paths resolve against `base`.
    pub fn from_text(text: &str, base: &Path, seed_override: Option<u64>) -> Result<Self> {
        let config = ExperimentConfig::parse(text)?;
        let seed = match seed_override.or(config.seed) {
            Some(s) => s,
            None => return cfg_err("missing field `seed` (set it in the config or pass --seed)"),
        };
        if !(config.horizon.is_finite() && config.horizon > config.model.r0) {
            return cfg_err(format!("field `T` must exceed r0 = {}, got {}", config.model.r0, config.horizon));
        }
        if config.epsilons.iter().any(|e| !(*e > 0.0 && *e < 1.0)) {
            return cfg_err("field `epsilons`: every entry must lie in (0, 1)");
        }
        if let Some(p) = config.exponents().into_iter().find(|p| !(*p > 1.0)) {
            return cfg_err(format!("field `p`: p must exceed 1, got {p}"));
        }
        config.subordinator.validate()?;
        let model = make_model(&config.model)?;
        let grid = TimeGrid::new(model.r0, config.horizon, config.step)?;
        let load = |name: &str, src: &Option<SegmentSource>| -> Result<Option<Segment>> {
            src.as_ref().map(|s| load_segment(name, s, &model, &grid, base, config.interpolation)).transpose()
        };
        let xi = load("xi", &config.xi)?;
        let eta = load("eta", &config.eta)?;
        Ok(Experiment { model, grid, seed, config_hash: hash_text(text), xi, eta, config })
    }

    pub fn load(path: &Path, seed_override: Option<u64>) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::from_text(&text, base, seed_override).map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn xi(&self) -> Result<&Segment> {
        self.xi.as_ref().ok_or_else(|| Error::Config("missing field `xi`".into()))
    }

    pub fn eta(&self) -> Result<&Segment> {
        self.eta.as_ref().ok_or_else(|| Error::Config("missing field `eta`".into()))
    }
}

fn load_segment(
    name: &str,
    src: &SegmentSource,
    model: &ModelSpec,
    grid: &TimeGrid,
    base: &Path,
    interp: Interpolation,
) -> Result<Segment> {
    let set = [src.constant.is_some(), src.nodes.is_some(), src.csv.is_some()];
    if set.iter().filter(|b| **b).count() != 1 {
        return cfg_err(format!("field `{name}`: set exactly one of `constant`, `nodes`, `csv`"));
    }
    let seg = if let Some(v) = &src.constant {
        Segment::constant(model.r0, grid.delay_steps, v)?
    } else if let Some(rows) = &src.nodes {
        if rows.is_empty() || (model.r0 > 0.0) != (rows.len() > 1) {
            return cfg_err(format!("field `{name}.nodes`: need one row when r0 = 0 and at least two otherwise"));
        }
        if rows.iter().any(|r| r.len() != model.dim) {
            return cfg_err(format!("field `{name}.nodes`: every row needs {} values", model.dim));
        }
        Segment::from_values(model.r0, model.dim, rows.concat())?
    } else {
        let path = base.join(src.csv.as_ref().unwrap());
        if !path.exists() {
            return cfg_err(format!("field `{name}.csv`: file {} does not exist", path.display()));
        }
        let seg = Segment::read_csv(&path)?;
        if (seg.r0() - model.r0).abs() > 1e-9 * model.r0.max(1.0) {
            return cfg_err(format!("field `{name}.csv`: segment spans r0 = {}, model has {}", seg.r0(), model.r0));
        }
        Segment::from_values(model.r0, seg.dim(), seg.values().to_vec())?
    };
    if seg.dim() != model.dim {
        return cfg_err(format!("field `{name}`: dimension {} does not match the model ({})", seg.dim(), model.dim));
    }
    Ok(seg.with_interpolation(interp))
}
