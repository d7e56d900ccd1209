//! The `subharnack` command-line runner.
//!
//! Every command reads a TOML config, writes CSV data and a versioned
//! `summary.json` into the output directory, and stamps each file with the
//! config hash and seed.
//!
//! Files written:
//!
//! * `simulate`: `trajectory.csv` (`t,x_1..x_d` from `t = -r0`), and with a
//!   payoff also `statistics.csv` (`payoff,mean,stderr,n_outer,n_inner,within_var,between_var,nan_count,config_hash,seed`).
//! * `couple`: `couplings.csv` (`run,epsilon,tau,R,M,QV,qv_bound,margin,coupled,terminal_equal,chain_holds,vacuous,config_hash,seed`).
//! * `verify`: `reports.csv` with one row per verification, plus `scaling.csv`
//!   (`span,mean,stderr,drift_ratio`) for `--which scaling`.

use std::io::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::json;

use crate::config::Experiment;
use crate::coupling::{run_couplings, CouplingSummary};
use crate::error::{Error, Result};
use crate::harness::{
    entropy_tv_report, stable_scaling_check, verify_log_harnack, verify_power_harnack_many, VerificationReport,
    SCALING_SLOPE_TOL,
};
use crate::payoff::{BuiltinPayoff, Payoff};
use crate::rng::{tags, SeedStream};
use crate::solver::{semigroup_estimate, solve_path};
use crate::stats::Estimate;
use crate::subordinator::sample_path;

pub const SCHEMA: u32 = 1;

#[derive(Debug, Parser)]
#[command(name = "subharnack", version, about = "Couplings and Harnack-type bounds for subordinated functional SDEs")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate one trajectory, and the semigroup when a payoff is configured.
    Simulate(Common),
    /// Run couplings for every configured epsilon.
    Couple(Common),
    /// Check inequalities; `--which` may be repeated or comma separated.
    Verify {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum, value_delimiter = ',', required = true)]
        which: Vec<Which>,
    },
}

#[derive(Debug, Args)]
pub struct Common {
    #[arg(long)]
    pub config: PathBuf,
    /// Overrides the seed in the config.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory; defaults to `output` in the config, then `out`.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Worker threads; results do not depend on it.
    #[arg(long)]
    pub jobs: Option<usize>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Which {
    Log,
    Power,
    Tv,
    Scaling,
}

/// Outcome of a command: `true` when every check passed or was vacuous.
pub fn run(cli: &Cli) -> Result<bool> {
    let common = match &cli.command {
        Command::Simulate(c) | Command::Couple(c) => c,
        Command::Verify { common, .. } => common,
    };
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(j) = common.jobs {
        if j == 0 {
            return Err(Error::Config("--jobs must be at least 1".into()));
        }
        builder = builder.num_threads(j);
    }
    let pool = builder.build().map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    let exp = Experiment::load(&common.config, common.seed)?;
    let out = common
        .out
        .clone()
        .or_else(|| exp.config.output.clone())
        .unwrap_or_else(|| PathBuf::from("out"));
    std::fs::create_dir_all(&out)?;
    pool.install(|| match &cli.command {
        Command::Simulate(_) => simulate(&exp, &out),
        Command::Couple(_) => couple(&exp, &out),
        Command::Verify { which, .. } => verify(&exp, which, &out),
    })
}

/// Entry point used by the binary; returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match run(&cli) {
        Ok(true) => 0,
        Ok(false) => 1,
        Err(e) => {
            eprintln!("error: {e}");
            2
        }
    }
}

fn fmt(v: f64) -> String {
    v.to_string()
}

fn write_json(path: &Path, value: &serde_json::Value) -> Result<()> {
    let mut f = std::fs::File::create(path)?;
    serde_json::to_writer_pretty(&mut f, value)?;
    writeln!(f)?;
    Ok(())
}

// JSON has no infinities; non-finite values are written as strings.
fn json_num(v: f64) -> serde_json::Value {
    if v.is_finite() {
        json!(v)
    } else {
        json!(fmt(v))
    }
}

fn simulate(exp: &Experiment, out: &Path) -> Result<bool> {
    let cfg = &exp.config;
    let xi = exp.xi()?;
    let seed = SeedStream::new(exp.seed);
    let solver = cfg.solver();
    let path = sample_path(&cfg.subordinator, cfg.horizon, exp.grid.step, seed.child(tags::SUBORDINATOR).child(0))?;
    let traj = solve_path(&exp.model, xi, &path, cfg.horizon, &solver, seed.child(tags::BROWNIAN).child(0).child(0))?;
    traj.write_csv(out.join("trajectory.csv"))?;
    let terminal = traj.node(traj.len() - 1).to_vec();
    let mut stats = serde_json::Value::Null;
    if let Some(p) = cfg.payoff {
        let est = semigroup_estimate(
            &exp.model,
            xi,
            &cfg.subordinator,
            &Payoff::from(p),
            cfg.horizon,
            cfg.n_outer,
            cfg.n_inner,
            &solver,
            seed,
        )?;
        let mut w = csv::Writer::from_path(out.join("statistics.csv"))?;
        w.write_record(["payoff", "mean", "stderr", "n_outer", "n_inner", "within_var", "between_var", "nan_count", "config_hash", "seed"])?;
        w.write_record([
            payoff_name(&p),
            fmt(est.mean),
            fmt(est.stderr),
            est.n_outer.to_string(),
            est.n_inner.to_string(),
            fmt(est.within_var),
            fmt(est.between_var),
            est.nan_count.to_string(),
            exp.config_hash.clone(),
            exp.seed.to_string(),
        ])?;
        w.flush()?;
        stats = json!({
            "payoff": payoff_name(&p),
            "mean": json_num(est.mean),
            "stderr": json_num(est.stderr),
            "n_outer": est.n_outer,
            "n_inner": est.n_inner,
        });
    }
    write_json(
        &out.join("summary.json"),
        &json!({
            "schema": SCHEMA,
            "command": "simulate",
            "config_hash": exp.config_hash,
            "seed": exp.seed,
            "T": cfg.horizon,
            "step": exp.grid.step,
            "steps": exp.grid.steps,
            "x_terminal": terminal,
            "statistics": stats,
        }),
    )?;
    println!("wrote {}", out.join("trajectory.csv").display());
    Ok(true)
}

fn payoff_name(p: &BuiltinPayoff) -> String {
    serde_json::to_string(p).unwrap_or_else(|_| format!("{p:?}"))
}

#[derive(Serialize)]
struct EpsilonSummary {
    epsilon: f64,
    n: usize,
    mean_r: f64,
    stderr_r: f64,
    mean_r_ok: bool,
    coupled_fraction: f64,
    terminal_equal_fraction: f64,
    qv_violations: usize,
    chain_violations: usize,
    max_tau: f64,
    worst_margin: String,
    vacuous: bool,
    pass: bool,
}

fn summarize(eps: f64, rows: &[CouplingSummary]) -> EpsilonSummary {
    let n = rows.len();
    let rs: Vec<f64> = rows.iter().map(|r| r.r).collect();
    let est = Estimate::from_samples(&rs);
    let frac = |f: &dyn Fn(&CouplingSummary) -> bool| rows.iter().filter(|r| f(r)).count() as f64 / n.max(1) as f64;
    let qv_violations = rows.iter().filter(|r| !(r.qv <= r.qv_bound)).count();
    let chain_violations = rows.iter().filter(|r| !r.chain_holds).count();
    let vacuous = rows.iter().any(|r| r.qv_bound == f64::INFINITY);
    let worst = rows.iter().map(|r| r.margin).fold(f64::INFINITY, f64::min);
    // a constant R (e.g. identical starts) has zero spread
    let mean_r_ok = (est.mean - 1.0).abs() <= 3.0 * est.stderr || (est.mean - 1.0).abs() <= 1e-12;
    let coupled_fraction = frac(&|r| r.coupled);
    let terminal_equal_fraction = frac(&|r| r.terminal_equal);
    EpsilonSummary {
        epsilon: eps,
        n,
        mean_r: est.mean,
        stderr_r: est.stderr,
        mean_r_ok,
        coupled_fraction,
        terminal_equal_fraction,
        qv_violations,
        chain_violations,
        max_tau: rows.iter().map(|r| r.tau).fold(0.0, f64::max),
        worst_margin: fmt(worst),
        vacuous,
        pass: mean_r_ok && qv_violations == 0 && chain_violations == 0 && coupled_fraction == 1.0 && terminal_equal_fraction == 1.0,
    }
}

fn couple(exp: &Experiment, out: &Path) -> Result<bool> {
    let cfg = &exp.config;
    let (xi, eta) = (exp.xi()?, exp.eta()?);
    let solver = cfg.solver();
    let mut w = csv::Writer::from_path(out.join("couplings.csv"))?;
    w.write_record([
        "run", "epsilon", "tau", "R", "M", "QV", "qv_bound", "margin", "coupled", "terminal_equal", "chain_holds", "vacuous",
        "config_hash", "seed",
    ])?;
    let mut summaries = Vec::new();
    for &eps in &cfg.epsilons {
        let rows = run_couplings(
            &exp.model,
            xi,
            eta,
            &cfg.subordinator,
            cfg.horizon,
            eps,
            cfg.n_couplings,
            &solver,
            SeedStream::new(exp.seed),
        )?;
        for r in &rows {
            w.write_record([
                r.run.to_string(),
                fmt(r.epsilon),
                fmt(r.tau),
                fmt(r.r),
                fmt(r.m),
                fmt(r.qv),
                fmt(r.qv_bound),
                fmt(r.margin),
                r.coupled.to_string(),
                r.terminal_equal.to_string(),
                r.chain_holds.to_string(),
                (r.qv_bound == f64::INFINITY).to_string(),
                exp.config_hash.clone(),
                exp.seed.to_string(),
            ])?;
        }
        let s = summarize(eps, &rows);
        println!(
            "{} epsilon={} mean_R={} stderr={} coupled={} qv_violations={}{}",
            if s.pass { "PASS" } else { "FAIL" },
            eps,
            s.mean_r,
            s.stderr_r,
            s.coupled_fraction,
            s.qv_violations,
            if s.vacuous { " (qv bound vacuous)" } else { "" }
        );
        summaries.push(s);
    }
    w.flush()?;
    let pass_count = summaries.iter().filter(|s| s.pass).count();
    let all = pass_count == summaries.len();
    let first = summaries.first();
    write_json(
        &out.join("summary.json"),
        &json!({
            "schema": SCHEMA,
            "command": "couple",
            "config_hash": exp.config_hash,
            "seed": exp.seed,
            "pass_count": pass_count,
            "fail_count": summaries.len() - pass_count,
            "vacuous_count": summaries.iter().filter(|s| s.vacuous).count(),
            "mean_R": first.map(|s| json_num(s.mean_r)),
            "stderr_R": first.map(|s| json_num(s.stderr_r)),
            "epsilons": summaries,
        }),
    )?;
    Ok(all)
}

fn verify(exp: &Experiment, which: &[Which], out: &Path) -> Result<bool> {
    let cfg = &exp.config;
    let params = cfg.mc_params();
    let mut reports: Vec<VerificationReport> = Vec::new();
    let mut extra = serde_json::Map::new();
    let mut done = Vec::new();
    for &w in which {
        if done.contains(&w) {
            continue;
        }
        done.push(w);
        match w {
            Which::Log => {
                let payoff = Payoff::from(cfg.payoff.unwrap_or(BuiltinPayoff::OnePlusTanhSquare));
                reports.push(verify_log_harnack(
                    &exp.model,
                    exp.xi()?,
                    exp.eta()?,
                    &payoff,
                    cfg.horizon,
                    &cfg.subordinator,
                    &params,
                    exp.seed,
                )?);
            }
            Which::Power => {
                let ps = cfg.exponents();
                if ps.is_empty() {
                    return Err(Error::Config("missing field `p` (needed by --which power)".into()));
                }
                let payoff = Payoff::from(cfg.payoff.unwrap_or(BuiltinPayoff::TanhPlusOne));
                reports.extend(verify_power_harnack_many(
                    &exp.model,
                    exp.xi()?,
                    exp.eta()?,
                    &payoff,
                    cfg.horizon,
                    &ps,
                    &cfg.subordinator,
                    &params,
                    exp.seed,
                )?);
            }
            Which::Tv => {
                let tv = entropy_tv_report(
                    &exp.model,
                    exp.xi()?,
                    exp.eta()?,
                    cfg.horizon,
                    &cfg.subordinator,
                    &params,
                    cfg.n_bins,
                    cfg.exponents().first().copied(),
                    exp.seed,
                )?;
                extra.insert(
                    "tv".into(),
                    json!({
                        "tv_hat": tv.tv_hat,
                        "noise_floor": tv.noise_floor,
                        "tv_lower": tv.tv_lower,
                        "tv_stderr": tv.tv_stderr,
                        "n_bins": tv.n_bins,
                        "density_ratio_rhs": tv.density_ratio_rhs.map(json_num),
                    }),
                );
                reports.push(tv.report);
            }
            Which::Scaling => {
                let s = stable_scaling_check(&exp.model, &cfg.subordinator, &cfg.spans, cfg.n_moment, exp.seed)?;
                let mut w = csv::Writer::from_path(out.join("scaling.csv"))?;
                w.write_record(["span", "mean", "stderr", "drift_ratio"])?;
                for i in 0..s.spans.len() {
                    w.write_record([fmt(s.spans[i]), fmt(s.means[i]), fmt(s.stderrs[i]), fmt(s.drift_ratios[i])])?;
                }
                w.flush()?;
                let margin = if s.kappa == 0.0 {
                    SCALING_SLOPE_TOL - (s.slope - s.target_slope).abs()
                } else {
                    s.drift_ratios.iter().map(|r| (r - 0.5).min(1.0 - r)).fold(f64::INFINITY, f64::min)
                };
                reports.push(VerificationReport {
                    kind: "scaling".into(),
                    lhs: s.slope,
                    lhs_stderr: 0.0,
                    rhs: s.target_slope,
                    rhs_stderr: 0.0,
                    margin,
                    pass: s.pass,
                    vacuous: false,
                    p: None,
                    horizon: cfg.horizon,
                    xi0: Vec::new(),
                    eta0: Vec::new(),
                    xi_eta_norm: 0.0,
                    n_outer: 0,
                    n_inner: 0,
                    n_moment: s.n_paths,
                    seed: exp.seed,
                    model: exp.model.describe(),
                    notes: format!("alpha={} c={} kappa={} drift_ratios={:?}", s.alpha, s.c, s.kappa, s.drift_ratios),
                });
            }
        }
    }
    let mut w = csv::Writer::from_path(out.join("reports.csv"))?;
    w.write_record([
        "kind", "p", "lhs", "lhs_stderr", "rhs", "rhs_stderr", "margin", "pass", "vacuous", "T", "xi_eta_norm", "n_outer",
        "n_inner", "n_moment", "notes", "config_hash", "seed",
    ])?;
    for r in &reports {
        w.write_record([
            r.kind.clone(),
            r.p.map(fmt).unwrap_or_default(),
            fmt(r.lhs),
            fmt(r.lhs_stderr),
            fmt(r.rhs),
            fmt(r.rhs_stderr),
            fmt(r.margin),
            r.pass.to_string(),
            r.vacuous.to_string(),
            fmt(r.horizon),
            fmt(r.xi_eta_norm),
            r.n_outer.to_string(),
            r.n_inner.to_string(),
            r.n_moment.to_string(),
            r.notes.clone(),
            exp.config_hash.clone(),
            exp.seed.to_string(),
        ])?;
        let tag = if r.vacuous {
            "VACUOUS"
        } else if r.pass {
            "PASS"
        } else {
            "FAIL"
        };
        let p = r.p.map(|p| format!(" p={p}")).unwrap_or_default();
        println!("{tag} {}{p} lhs={} rhs={} margin={}", r.kind, r.lhs, r.rhs, r.margin);
    }
    w.flush()?;
    let vacuous_count = reports.iter().filter(|r| r.vacuous).count();
    let pass_count = reports.iter().filter(|r| r.pass && !r.vacuous).count();
    let fail_count = reports.len() - pass_count - vacuous_count;
    let worst = reports.iter().map(|r| r.margin).fold(f64::INFINITY, f64::min);
    let rows: Vec<serde_json::Value> = reports
        .iter()
        .map(|r| {
            json!({
                "kind": r.kind,
                "p": r.p,
                "lhs": json_num(r.lhs),
                "lhs_stderr": json_num(r.lhs_stderr),
                "rhs": json_num(r.rhs),
                "rhs_stderr": json_num(r.rhs_stderr),
                "margin": json_num(r.margin),
                "pass": r.pass,
                "vacuous": r.vacuous,
                "notes": r.notes,
            })
        })
        .collect();
    let mut summary = json!({
        "schema": SCHEMA,
        "command": "verify",
        "which": done.iter().map(|w| format!("{w:?}").to_lowercase()).collect::<Vec<_>>(),
        "config_hash": exp.config_hash,
        "seed": exp.seed,
        "model": exp.model.describe(),
        "pass_count": pass_count,
        "fail_count": fail_count,
        "vacuous_count": vacuous_count,
        "worst_margin": json_num(worst),
        "reports": rows,
    });
    summary.as_object_mut().unwrap().extend(extra);
    write_json(&out.join("summary.json"), &summary)?;
    Ok(fail_count == 0)
}
