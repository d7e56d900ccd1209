//! Acceptance run: one PASS/FAIL line per criterion.

mod common;

use std::fs;
use std::process::Command;
use std::sync::Arc;
use std::time::Instant;

use rand::Rng;
use rand_distr::StandardNormal;
use subharnack::coupling::run_couplings;
use subharnack::harness::{
    entropy_tv_report, log_harnack_bound, moment_inverse_estimate, power_harnack_factor, stable_scaling_check,
    verify_log_harnack, verify_power_harnack_many, McParams, VerificationReport,
};
use subharnack::model::{DriftDescriptor, FunctionalDescriptor, ModelSpec};
use subharnack::subordinator::{sample_path, BernsteinSpec, Clock, LevyMeasure, SubordinatorPath};
use subharnack::{run_coupling, solve_path, BuiltinPayoff, Payoff, Segment, SeedStream, SolverConfig, TimeGrid};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome { pass, detail: detail.into() }
}

fn mean_se(v: &[f64]) -> (f64, f64) {
    common::mean_se(v)
}

// 1. Laplace transform of S(1) against e^{-φ(u)}.
fn subordinator_fidelity() -> Outcome {
    let start = Instant::now();
    let n = 100_000;
    let cases: [(&str, BernsteinSpec, fn(f64) -> f64); 2] = [
        ("stable(0.5,1)", BernsteinSpec::stable(0.5, 1.0, 0.0).unwrap(), |u| u.sqrt()),
        (
            "compound_exp(2,0.5)",
            BernsteinSpec::new(0.0, LevyMeasure::CompoundExp { rate: 2.0, mean: 0.5 }).unwrap(),
            |u| 2.0 * 0.5 * u / (1.0 + 0.5 * u),
        ),
    ];
    let mut ok = true;
    let mut worst: f64 = 0.0;
    for (j, (_, spec, phi)) in cases.iter().enumerate() {
        let seed = SeedStream::new(1000 + j as u64);
        let s: Vec<f64> = (0..n).map(|i| sample_path(spec, 1.0, 1.0, seed.child(i)).unwrap().value(1.0)).collect();
        for u in [0.5, 1.0, 2.0] {
            let v: Vec<f64> = s.iter().map(|x| (-u * x).exp()).collect();
            let (m, se) = mean_se(&v);
            let z = (m - (-phi(u)).exp()).abs() / se;
            worst = worst.max(z);
            ok &= z <= 3.0;
        }
    }
    let secs = start.elapsed().as_secs_f64();
    outcome(ok && secs < 60.0, format!("max |z| = {worst:.2} over 6 checks, N = {n}, {secs:.1}s"))
}

fn delay_setup() -> (ModelSpec, Segment, Segment, BernsteinSpec) {
    let m = common::delay_model();
    let xi = Segment::constant(0.25, 16, &[1.0]).unwrap();
    let eta = Segment::from_fn(0.25, 16, 1, |s| vec![-0.5 - 2.0 * s]).unwrap();
    (m, xi, eta, BernsteinSpec::stable(0.5, 1.0, 0.5).unwrap())
}

// 2-5 share one batch of 10⁴ couplings on the full delay model.
fn coupling_criteria() -> [Outcome; 4] {
    let (m, xi, eta, spec) = delay_setup();
    let start = Instant::now();
    let cfg = SolverConfig::default();
    let rows = run_couplings(&m, &xi, &eta, &spec, 1.0, 0.05, 10_000, &cfg, SeedStream::new(2)).unwrap();
    let secs = start.elapsed().as_secs_f64();
    let h = TimeGrid::new(0.25, 1.0, None).unwrap().step;
    let rs: Vec<f64> = rows.iter().map(|r| r.r).collect();
    let (mr, se) = mean_se(&rs);
    let c2 = outcome(
        (mr - 1.0).abs() <= 3.0 * se && secs < 300.0,
        format!("mean R = {mr:.4} ± {se:.4} over {} couplings, {secs:.1}s", rows.len()),
    );
    let qv_bad = rows.iter().filter(|r| !(r.qv <= r.qv_bound)).count();
    let chain_bad = rows.iter().filter(|r| !r.chain_holds).count();
    let c3 = outcome(
        qv_bad == 0 && chain_bad == 0,
        format!("QV > bound on {qv_bad} runs, intermediate chain broken on {chain_bad} runs"),
    );
    let late = rows.iter().filter(|r| !r.coupled).count();
    let unequal = rows.iter().filter(|r| !r.terminal_equal).count();
    let max_tau = rows.iter().map(|r| r.tau).fold(0.0, f64::max);
    let c4 = outcome(
        late == 0 && unequal == 0,
        format!("tau > T-r0+2h on {late} runs, unequal terminal segments on {unequal}, max tau = {max_tau}"),
    );
    let worst = rows.iter().map(|r| r.max_contraction_excess).fold(f64::NEG_INFINITY, f64::max);
    let (eq_ok, eq_err) = free_contraction_equality();
    let c5 = outcome(
        worst <= 10.0 * h && eq_ok,
        format!("max excess over |Δ0|Γ = {worst:.2e} (allowed {:.2e}); K=0 equality error {eq_err:.2e}", 10.0 * h),
    );
    [c2, c3, c4, c5]
}

/// `b ≡ 0`, `B ≡ 0`, `d = 1` on drift clocks: `|X-Y| = |Δ0|Γ` with `Γ` from clock values.
fn free_contraction_equality() -> (bool, f64) {
    let mut worst: f64 = 0.0;
    for (r0, kappa) in [(0.0, 1.0), (0.25, 1.0), (0.25, 0.3)] {
        let m = common::free(1, r0);
        let steps = if r0 > 0.0 { 16 } else { 0 };
        let xi = Segment::constant(r0, steps, &[1.0]).unwrap();
        let eta = Segment::constant(r0, steps, &[-1.0]).unwrap();
        let reg = Arc::new(SubordinatorPath::pure_drift(kappa, 2.0, 1.0 / 64.0).unwrap()).regularize(0.05).unwrap();
        let rec = run_coupling(&m, &xi, &eta, &reg, 1.0, &SolverConfig::default(), SeedStream::new(5)).unwrap();
        let span = 1.0 - r0;
        let total = reg.value(span) - reg.value(0.0);
        let h = rec.step();
        let n = (1.0 / h).round() as usize;
        for k in 0..=n {
            let t = if k == n { 1.0 } else { k as f64 * h };
            let want = if t >= span - 1e-12 { 0.0 } else { 2.0 * (reg.value(span) - reg.value(t)) / total };
            worst = worst.max(((rec.x.at_step(k)[0] - rec.y.at_step(k)[0]).abs() - want).abs());
        }
    }
    (worst <= 1e-6, worst)
}

fn gaussian_setup() -> (ModelSpec, Segment, Segment, BernsteinSpec) {
    let m = common::free(1, 0.0);
    let xi = Segment::constant(0.0, 0, &[0.0]).unwrap();
    let eta = Segment::constant(0.0, 0, &[1.0]).unwrap();
    (m, xi, eta, BernsteinSpec::pure_drift(1.0).unwrap())
}

fn grid_segments() -> Vec<(&'static str, Segment)> {
    vec![
        ("const 1", Segment::constant(0.25, 16, &[1.0]).unwrap()),
        ("ramp", Segment::from_fn(0.25, 16, 1, |s| vec![-2.0 * s]).unwrap()),
        ("const -0.5", Segment::constant(0.25, 16, &[-0.5]).unwrap()),
    ]
}

fn full_params() -> McParams {
    McParams { n_outer: 200, n_inner: 500, n_moment: 100_000, solver: SolverConfig::default() }
}

fn summarize(reports: &[VerificationReport]) -> (bool, usize, f64) {
    let pass = reports.iter().all(|r| r.pass);
    let vacuous = reports.iter().filter(|r| r.vacuous).count();
    let worst = reports
        .iter()
        .map(|r| {
            let se = r.combined_stderr();
            if se > 0.0 { r.margin / se } else if r.margin >= 0.0 { f64::INFINITY } else { f64::NEG_INFINITY }
        })
        .fold(f64::INFINITY, f64::min);
    (pass, vacuous, worst)
}

// 6 and 7.
fn harnack_criteria() -> [Outcome; 2] {
    let params = full_params();
    let log_payoff: Payoff = BuiltinPayoff::OnePlusSquare.into();
    let tanh_payoff: Payoff = BuiltinPayoff::OnePlusTanhSquare.into();
    let power_payoff: Payoff = BuiltinPayoff::TanhPlusOne.into();
    let ps = [1.5, 2.0, 4.0];
    let mut log_reports = Vec::new();
    let mut power_reports = Vec::new();
    let mut slowest: f64 = 0.0;

    let (m, xi, eta, spec) = gaussian_setup();
    for (a, b) in [(&xi, &eta), (&xi, &xi)] {
        let t = Instant::now();
        log_reports.push(verify_log_harnack(&m, a, b, &log_payoff, 1.0, &spec, &params, 60).unwrap());
        slowest = slowest.max(t.elapsed().as_secs_f64());
        let t = Instant::now();
        power_reports.extend(verify_power_harnack_many(&m, a, b, &power_payoff, 1.0, &ps, &spec, &params, 70).unwrap());
        slowest = slowest.max(t.elapsed().as_secs_f64());
    }

    let (m, _, _, spec) = delay_setup();
    let segs = grid_segments();
    let mut jensen = 0;
    for (i, (_, a)) in segs.iter().enumerate() {
        for (j, (_, b)) in segs.iter().enumerate() {
            let seed = 600 + (3 * i + j) as u64;
            let t = Instant::now();
            log_reports.push(verify_log_harnack(&m, a, b, &tanh_payoff, 1.0, &spec, &params, seed).unwrap());
            slowest = slowest.max(t.elapsed().as_secs_f64());
            let t = Instant::now();
            let reps = verify_power_harnack_many(&m, a, b, &power_payoff, 1.0, &ps, &spec, &params, seed + 100).unwrap();
            slowest = slowest.max(t.elapsed().as_secs_f64());
            if i == j {
                jensen += reps.iter().filter(|r| r.pass && r.notes.starts_with("factor=1 ")).count();
            }
            power_reports.extend(reps);
        }
    }
    let (lp, lv, lz) = summarize(&log_reports);
    let (pp, pv, pz) = summarize(&power_reports);
    // ξ = η: Gaussian pair plus the three diagonal grid pairs, three exponents each
    let jensen_total = 3 * 3;
    [
        outcome(
            lp && slowest < 300.0,
            format!("{} reports (Gaussian + 3x3 delay grid), {lv} vacuous, min margin/se = {lz:.2}, slowest run {slowest:.1}s", log_reports.len()),
        ),
        outcome(
            pp && jensen == jensen_total,
            format!("{} reports for p in {{1.5, 2, 4}}, {pv} vacuous, min margin/se = {pz:.2}, Jensen cases {jensen}/{jensen_total}", power_reports.len()),
        ),
    ]
}

// 8.
fn no_delay_reduction() -> Outcome {
    let m = common::linear_1d(-0.7, 0.0, 0.0);
    let k1_zero = m.k1 == 0.0;
    let xi = Segment::constant(0.0, 0, &[0.4]).unwrap();
    let eta = Segment::constant(0.0, 0, &[0.3]).unwrap();
    let cfg = SolverConfig::default();
    let d0 = (0.4f64 - 0.3).powi(2);
    let mut exact = true;
    for spec in [BernsteinSpec::stable(0.5, 1.0, 0.0).unwrap(), BernsteinSpec::stable(0.75, 1.0, 0.5).unwrap()] {
        let seed = SeedStream::new(8);
        let b = log_harnack_bound(&m, &xi, &eta, 1.0, &spec, 5000, &cfg, seed).unwrap();
        let mo = moment_inverse_estimate(&spec, m.k, 1.0, 0.0, 5000, 1.0 / 64.0, seed).unwrap();
        exact &= b.value == d0 * mo.mean;
        for p in [1.5, 2.0, 4.0] {
            let pf = power_harnack_factor(&m, &xi, &eta, 1.0, p, &spec, 5000, &cfg, seed).unwrap();
            exact &= !pf.diverged && pf.value == ((p - 1.0) * pf.log_exp_moment).exp();
        }
    }
    let spec = BernsteinSpec::stable(0.5, 1.0, 0.5).unwrap();
    let mut bitwise = true;
    for run in 0..20u64 {
        let clock = sample_path(&spec, 1.0, 1.0 / 64.0, SeedStream::new(run)).unwrap();
        let seed = SeedStream::new(500 + run);
        let traj = solve_path(&m, &xi, &clock, 1.0, &cfg, seed).unwrap();
        let grid = TimeGrid::new(0.0, 1.0, None).unwrap();
        let dl = grid.increments(&clock).unwrap();
        let mut rng = seed.rng();
        let mut x = 0.4f64;
        for k in 0..grid.steps {
            let z: f64 = rng.sample(StandardNormal);
            x = x + (-0.7 * x) * grid.step + dl[k].sqrt() * z;
            bitwise &= traj.at_step(k + 1)[0].to_bits() == x.to_bits();
        }
    }
    outcome(
        k1_zero && exact && bitwise,
        format!("K1 = 0: {k1_zero}; bounds equal delay-free forms exactly: {exact}; Euler bit-exact on 20 paths: {bitwise}"),
    )
}

// 9.
fn pinsker_tv() -> Outcome {
    let params = McParams { n_outer: 200, n_inner: 500, n_moment: 100_000, solver: SolverConfig::default() };
    let (m, xi, eta, spec) = gaussian_setup();
    let tv = entropy_tv_report(&m, &xi, &eta, 1.0, &spec, &params, 40, Some(2.0), 90).unwrap();
    let exact = libm::erf(1.0 / (2.0 * 2f64.sqrt()));
    let gauss_ok = tv.report.pass && (tv.tv_lower - exact).abs() <= 0.01;
    let (m, _, _, spec) = delay_setup();
    let segs = grid_segments();
    let mut delay_ok = true;
    let mut detail = Vec::new();
    for (i, (na, a)) in segs.iter().enumerate() {
        for (nb, b) in segs.iter().skip(i + 1) {
            let r = entropy_tv_report(&m, a, b, 1.0, &spec, &params, 40, None, 91 + i as u64).unwrap();
            delay_ok &= r.report.pass;
            detail.push(format!("{na}/{nb}: 2TV² = {:.3} <= {:.3}", r.report.lhs, r.report.rhs));
        }
    }
    outcome(
        gauss_ok && delay_ok,
        format!(
            "Gaussian TV lower = {:.4} vs erf = {exact:.4}, 2TV² = {:.3} <= {:.3}; delay: {}",
            tv.tv_lower,
            tv.report.lhs,
            tv.report.rhs,
            detail.join(", ")
        ),
    )
}

// 10.
fn scaling() -> Outcome {
    let m = common::free(1, 0.0);
    let spans = [0.5, 1.0, 2.0, 4.0];
    let mut ok = true;
    let mut parts = Vec::new();
    for alpha in [0.5, 0.75] {
        let spec = BernsteinSpec::stable(alpha, 1.0, 0.0).unwrap();
        let r = stable_scaling_check(&m, &spec, &spans, 100_000, 10).unwrap();
        ok &= r.pass && (r.slope + 1.0 / alpha).abs() <= 0.15;
        parts.push(format!("alpha={alpha}: slope {:.3} (target {:.3})", r.slope, -1.0 / alpha));
    }
    let spec = BernsteinSpec::stable(0.5, 1e-6, 1.0).unwrap();
    let r = stable_scaling_check(&m, &spec, &spans, 10_000, 11).unwrap();
    let worst = r.drift_ratios.iter().map(|q| (q - 1.0).abs()).fold(0.0, f64::max);
    ok &= worst <= 0.01;
    parts.push(format!("drift-dominated max |m·κ·s - 1| = {worst:.2e}"));
    outcome(ok, parts.join("; "))
}

// 11.
fn yosida_suite() -> Outcome {
    let cubic = common::model(2, 0.0, DriftDescriptor::DissipativeCubic { k: 0.5, a: 1.0 }, FunctionalDescriptor::Zero);
    let rot = common::model(
        2,
        0.0,
        DriftDescriptor::Linear { matrix: vec![vec![-0.2, 1.5], vec![-0.5, 0.4]] },
        FunctionalDescriptor::Zero,
    );
    let shifted = |m: &ModelSpec, x: &[f64]| {
        let mut out = vec![0.0; x.len()];
        m.drift.eval_shifted(m.k, x, &mut out);
        out
    };
    let norm = |v: &[f64]| v.iter().map(|a| a * a).sum::<f64>().sqrt();
    let mut rng = SeedStream::new(77).rng();
    let probes: Vec<Vec<f64>> = (0..500).map(|_| (0..2).map(|_| rng.random_range(-3.0..3.0)).collect()).collect();
    let mut shrink_ok = true;
    let mut worst_dissip = f64::NEG_INFINITY;
    for eps in [1.0, 0.1, 0.01, 0.001] {
        for m in [&cubic, &rot] {
            let y = m.yosida_approx(eps).unwrap();
            for w in probes.windows(2) {
                let (x, z) = (&w[0], &w[1]);
                shrink_ok &= norm(&shifted(&y, x)) <= norm(&shifted(m, x)) * (1.0 + 1e-10) + 1e-12;
                let (bx, bz) = (shifted(&y, x), shifted(&y, z));
                let inner: f64 = (0..2).map(|i| (x[i] - z[i]) * (bx[i] - bz[i])).sum();
                worst_dissip = worst_dissip.max(inner);
            }
        }
    }
    // closed form for the linear part L = A - K I: ((I - εL)^{-1} - I)/ε
    let a = nalgebra::DMatrix::from_row_slice(2, 2, &[-0.2, 1.5, -0.5, 0.4]);
    let l = &a - nalgebra::DMatrix::identity(2, 2) * rot.k;
    let mut closed_err: f64 = 0.0;
    for eps in [1.0, 0.1, 0.01] {
        let inv = (nalgebra::DMatrix::identity(2, 2) - &l * eps).try_inverse().unwrap();
        let y = rot.yosida_approx(eps).unwrap();
        for x in &probes {
            let want = (&inv - nalgebra::DMatrix::identity(2, 2)) * nalgebra::DVector::from_column_slice(x) / eps;
            let got = shifted(&y, x);
            closed_err = closed_err.max((0..2).map(|i| (got[i] - want[i]).abs() / (1.0 + want[i].abs())).fold(0.0, f64::max));
        }
    }
    let m1 = common::model(1, 0.0, DriftDescriptor::DissipativeCubic { k: 0.5, a: 1.0 }, FunctionalDescriptor::Zero);
    let xi = Segment::constant(0.0, 0, &[1.5]).unwrap();
    let spec = BernsteinSpec::stable(0.5, 1.0, 0.5).unwrap();
    let mut converges = true;
    let mut final_sup: f64 = 0.0;
    for probe in 0..10u64 {
        let clock = sample_path(&spec, 1.0, 1.0 / 64.0, SeedStream::new(probe)).unwrap();
        let seed = SeedStream::new(300 + probe);
        let exact = solve_path(&m1, &xi, &clock, 1.0, &SolverConfig::default(), seed).unwrap();
        let mut last = f64::INFINITY;
        for eps in [0.1, 0.01, 0.001] {
            let y = solve_path(&m1.yosida_approx(eps).unwrap(), &xi, &clock, 1.0, &SolverConfig::default(), seed).unwrap();
            let sup = exact.values().iter().zip(y.values()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            converges &= sup < last;
            last = sup;
        }
        final_sup = final_sup.max(last);
    }
    let ok = shrink_ok && worst_dissip <= 1e-9 && closed_err <= 1e-10 && converges;
    outcome(
        ok,
        format!(
            "|b̃ε| <= |b̃|: {shrink_ok}; max dissipativity violation {worst_dissip:.1e}; linear closed-form error {closed_err:.1e}; \
             sup trajectory gap decreasing on 10 probes: {converges} (at ε=0.001: {final_sup:.1e})"
        ),
    )
}

// 12.
fn cli_determinism() -> Outcome {
    let bin = env!("CARGO_BIN_EXE_subharnack");
    let dir = tempfile::tempdir().unwrap();
    let cfg = r#"
seed = 12
T = 1.0
p = 2.0
ps = [1.5, 4.0]
n_outer = 20
n_inner = 20
n_moment = 2000
n_couplings = 200
payoff = { kind = "one_plus_tanh_square" }
[model]
dim = 1
r0 = 0.25
drift = { kind = "linear", matrix = [[-0.5]] }
functional = { kind = "delay", weight = 0.3 }
[subordinator]
kappa = 0.5
levy = { kind = "stable", alpha = 0.5, c = 1.0 }
[xi]
constant = [1.0]
[eta]
constant = [-0.5]
"#;
    let path = dir.path().join("config.toml");
    fs::write(&path, cfg).unwrap();
    let commands: [&[&str]; 4] =
        [&["simulate"], &["couple"], &["verify", "--which", "log,power,tv"], &["verify", "--which", "scaling", "--seed", "3"]];
    let mut checked = 0;
    let mut same = true;
    for (c, cmd) in commands.iter().enumerate() {
        // scaling needs K = 0 and no delay; run it on its own config
        let config = if c == 3 {
            let p = dir.path().join("scaling.toml");
            fs::write(
                &p,
                "seed = 1\nT = 1.0\nn_moment = 5000\n[model]\ndim = 1\ndrift = { kind = \"zero\" }\n[subordinator]\nkappa = 0.0\nlevy = { kind = \"stable\", alpha = 0.5, c = 1.0 }\n",
            )
            .unwrap();
            p
        } else {
            path.clone()
        };
        let mut outputs = Vec::new();
        for (i, jobs) in ["1", "1", "3", "8"].iter().enumerate() {
            let out = dir.path().join(format!("out{c}_{i}"));
            let status = Command::new(bin)
                .arg(cmd[0])
                .arg("--config")
                .arg(&config)
                .args(&cmd[1..])
                .arg("--out")
                .arg(&out)
                .arg("--jobs")
                .arg(jobs)
                .output()
                .unwrap();
            if !status.status.success() {
                return outcome(false, format!("{cmd:?} exited with {}", status.status));
            }
            let mut files: Vec<_> = fs::read_dir(&out).unwrap().map(|e| e.unwrap().path()).collect();
            files.sort();
            outputs.push(files.iter().map(|f| fs::read(f).unwrap()).collect::<Vec<_>>());
        }
        same &= outputs.windows(2).all(|w| w[0] == w[1]) && !outputs[0].is_empty();
        checked += 1;
    }
    outcome(same, format!("{checked} commands, 2 repeated runs and --jobs 1/3/8: byte-identical = {same}"))
}

fn main() {
    // optional criterion numbers on the command line restrict the run
    let only: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let wanted = |ids: &[usize]| only.is_empty() || ids.iter().any(|i| only.contains(i));
    let start = Instant::now();
    let mut results: Vec<(usize, &str, Outcome)> = Vec::new();
    if wanted(&[1]) {
        results.push((1, "subordinator fidelity", subordinator_fidelity()));
    }
    if wanted(&[2, 3, 4, 5]) {
        let [c2, c3, c4, c5] = coupling_criteria();
        results.push((2, "Girsanov unit mean", c2));
        results.push((3, "pathwise QV bound", c3));
        results.push((4, "coupling success", c4));
        results.push((5, "contraction law", c5));
    }
    if wanted(&[6, 7]) {
        let [c6, c7] = harnack_criteria();
        results.push((6, "log-Harnack", c6));
        results.push((7, "power-Harnack", c7));
    }
    let singles: [(usize, &str, fn() -> Outcome); 5] = [
        (8, "no-delay reduction", no_delay_reduction),
        (9, "Pinsker/TV", pinsker_tv),
        (10, "stable scaling", scaling),
        (11, "Yosida suite", yosida_suite),
        (12, "determinism", cli_determinism),
    ];
    for (id, name, f) in singles {
        if wanted(&[id]) {
            results.push((id, name, f()));
        }
    }
    let mut failed = 0;
    for (id, name, o) in &results {
        println!("{} {id:>2} {name}: {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
        failed += (!o.pass) as usize;
    }
    println!("{} of {} criteria passed in {:.0}s", results.len() - failed, results.len(), start.elapsed().as_secs_f64());
    if failed > 0 {
        std::process::exit(1);
    }
}
