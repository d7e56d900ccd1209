mod common;

use std::sync::Arc;

use common::{log_quad, mean_se};
use proptest::prelude::*;
use subharnack::subordinator::{sample_path, BernsteinSpec, Clock, LevyMeasure, SubordinatorPath};
use subharnack::SeedStream;

fn terminal_values(spec: &BernsteinSpec, t: f64, step: f64, n: usize, seed: u64) -> Vec<f64> {
    let s = SeedStream::new(seed);
    (0..n).map(|i| sample_path(spec, t, step, s.child(i as u64)).unwrap().value(t)).collect()
}

#[test]
fn stable_exponent_matches_levy_quadrature() {
    for &(alpha, c) in &[(0.3, 1.0), (0.5, 1.0), (0.75, 2.5)] {
        let spec = BernsteinSpec::stable(alpha, c, 0.0).unwrap();
        let dens = c * alpha / libm::tgamma(1.0 - alpha);
        for &u in &[0.1, 1.0, 7.0] {
            let q = log_quad(|x| (-(-u * x).exp_m1()) * dens * x.powf(-1.0 - alpha), -80.0, 200.0, 0.005);
            let phi = spec.phi(u).unwrap();
            assert!((q - phi).abs() < 1e-7 * phi, "alpha={alpha} u={u}: {q} vs {phi}");
        }
    }
}

#[test]
fn compound_exponents_match_levy_quadrature() {
    let spec = BernsteinSpec::new(0.2, LevyMeasure::CompoundExp { rate: 3.0, mean: 0.5 }).unwrap();
    for &u in &[0.5, 1.0, 4.0] {
        let q = log_quad(|x| (1.0 - (-u * x).exp()) * 3.0 * 2.0 * (-2.0 * x).exp(), -60.0, 6.0, 0.002);
        assert!((spec.phi(u).unwrap() - 0.2 * u - q).abs() < 1e-8);
    }
    let pm = BernsteinSpec::new(0.0, LevyMeasure::PointMass { rate: 2.0, jump_size: 0.7 }).unwrap();
    assert!((pm.phi(1.5).unwrap() - 2.0 * (1.0 - (-1.05f64).exp())).abs() < 1e-14);
}

#[test]
fn laplace_transform_of_terminal_value() {
    let specs = [
        BernsteinSpec::stable(0.5, 1.0, 0.0).unwrap(),
        BernsteinSpec::stable(0.75, 1.0, 0.3).unwrap(),
        BernsteinSpec::new(0.1, LevyMeasure::CompoundExp { rate: 2.0, mean: 0.5 }).unwrap(),
    ];
    for (j, spec) in specs.iter().enumerate() {
        let t = 1.5;
        let s = terminal_values(spec, t, 0.25, 20_000, 100 + j as u64);
        for &u in &[0.5, 1.0, 2.0] {
            let v: Vec<f64> = s.iter().map(|x| (-u * x).exp()).collect();
            let (m, se) = mean_se(&v);
            let want = (-t * spec.phi(u).unwrap()).exp();
            assert!((m - want).abs() <= 4.0 * se, "{spec:?} u={u}: {m} vs {want} (se {se})");
        }
    }
}

#[test]
fn half_stable_law_and_inverse_moment() {
    // S(1) with E e^{-uS} = e^{-√u} has P(S <= x) = erfc(1/(2√x)) and E[1/S] = 2
    let spec = BernsteinSpec::stable(0.5, 1.0, 0.0).unwrap();
    let mut s = terminal_values(&spec, 1.0, 1.0, 20_000, 7);
    let inv: Vec<f64> = s.iter().map(|x| 1.0 / x).collect();
    let (m, se) = mean_se(&inv);
    assert!((m - 2.0).abs() <= 4.0 * se, "{m} ± {se}");
    s.sort_by(f64::total_cmp);
    let n = s.len() as f64;
    let ks = s
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = libm::erfc(1.0 / (2.0 * x.sqrt()));
            (f - i as f64 / n).abs().max((f - (i + 1) as f64 / n).abs())
        })
        .fold(0.0, f64::max);
    // 0.1% critical value of the Kolmogorov statistic
    assert!(ks * n.sqrt() < 1.95, "KS {ks}");
}

#[test]
fn inverse_moment_matches_gamma_formula() {
    // E[1/S(1)] = ∫_0^∞ e^{-c u^α} du
    for &(alpha, c) in &[(0.6, 1.0), (0.75, 2.0)] {
        let spec = BernsteinSpec::stable(alpha, c, 0.0).unwrap();
        let want = log_quad(|u| (-c * u.powf(alpha)).exp(), -40.0, 8.0, 0.002);
        assert!((want - libm::tgamma(1.0 + 1.0 / alpha) / c.powf(1.0 / alpha)).abs() < 1e-9);
        let inv: Vec<f64> = terminal_values(&spec, 1.0, 1.0, 20_000, 9).iter().map(|x| 1.0 / x).collect();
        let (m, se) = mean_se(&inv);
        assert!((m - want).abs() <= 4.0 * se, "alpha={alpha}: {m} vs {want}");
    }
}

#[test]
fn poisson_counts_pass_chi_square() {
    let (rate, t) = (2.5, 1.2);
    let spec = BernsteinSpec::new(0.0, LevyMeasure::PointMass { rate, jump_size: 1.0 }).unwrap();
    let n = 20_000;
    let counts: Vec<usize> = terminal_values(&spec, t, 0.1, n, 21).iter().map(|v| v.round() as usize).collect();
    let lam = rate * t;
    let top = 8;
    let mut obs = vec![0.0; top + 1];
    for c in counts {
        obs[c.min(top)] += 1.0;
    }
    let mut pmf: Vec<f64> = (0..top).map(|k| (-lam + k as f64 * lam.ln() - libm::lgamma(k as f64 + 1.0)).exp()).collect();
    pmf.push(1.0 - pmf.iter().sum::<f64>());
    let chi2: f64 = obs.iter().zip(&pmf).map(|(o, p)| (o - n as f64 * p).powi(2) / (n as f64 * p)).sum();
    // 0.1% critical value with 8 degrees of freedom
    assert!(chi2 < 26.12, "chi2 = {chi2}");
}

#[test]
fn compound_exp_jump_sizes_are_exponential() {
    let spec = BernsteinSpec::new(0.0, LevyMeasure::CompoundExp { rate: 50.0, mean: 0.4 }).unwrap();
    let path = sample_path(&spec, 10.0, 0.5, SeedStream::new(3)).unwrap();
    let sizes: Vec<f64> = path.jumps().iter().map(|j| j.size).collect();
    assert!(sizes.len() > 400);
    let (m, se) = mean_se(&sizes);
    assert!((m - 0.4).abs() < 4.0 * se);
}

#[test]
fn pure_drift_path_is_linear() {
    let spec = BernsteinSpec::pure_drift(1.7).unwrap();
    let p = sample_path(&spec, 2.0, 0.1, SeedStream::new(0)).unwrap();
    for &t in &[0.0, 0.35, 1.0, 2.0] {
        assert!((p.value(t) - 1.7 * t).abs() < 1e-14);
    }
    assert!((p.weighted_increment(0.0, 0.5, 1.5) - 1.7).abs() < 1e-14);
}

fn arb_spec() -> impl Strategy<Value = BernsteinSpec> {
    prop_oneof![
        (0.1f64..0.95, 0.1f64..3.0, 0.0f64..2.0).prop_map(|(a, c, k)| BernsteinSpec::stable(a, c, k).unwrap()),
        (0.1f64..5.0, 0.1f64..2.0, 0.0f64..2.0)
            .prop_map(|(r, m, k)| BernsteinSpec::new(k, LevyMeasure::CompoundExp { rate: r, mean: m }).unwrap()),
        (0.1f64..5.0, 0.1f64..2.0, 0.0f64..2.0)
            .prop_map(|(r, j, k)| BernsteinSpec::new(k, LevyMeasure::PointMass { rate: r, jump_size: j }).unwrap()),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn paths_are_nondecreasing(spec in arb_spec(), seed in any::<u64>(), step in 0.01f64..0.5) {
        let p = sample_path(&spec, 2.0, step, SeedStream::new(seed)).unwrap();
        let mut last = 0.0;
        for i in 0..=200 {
            let v = p.value(2.0 * i as f64 / 200.0);
            prop_assert!(v >= last);
            last = v;
        }
        prop_assert_eq!(p.value(0.0), 0.0);
    }

    #[test]
    fn regularized_clock_is_consistent(spec in arb_spec(), seed in any::<u64>(), eps in 0.01f64..0.5) {
        let base = Arc::new(sample_path(&spec, 2.0, 0.05, SeedStream::new(seed)).unwrap());
        let reg = base.regularize(eps).unwrap();
        let h = reg.horizon();
        prop_assert!((h - (2.0 - eps)).abs() < 1e-12);
        for i in 0..50 {
            let a = h * i as f64 / 50.0;
            let b = h * (i + 1) as f64 / 50.0;
            prop_assert!(reg.derivative(a) >= spec.kappa + eps);
            let inc = reg.value(b) - reg.value(a);
            // cancellation in the difference costs a few ulps of the value itself
            let slack = 4.0 * f64::EPSILON * reg.value(b).abs();
            prop_assert!(inc >= (spec.kappa + eps) * (b - a) * (1.0 - 1e-12) - slack);
            let w = reg.weighted_increment(0.0, a, b);
            prop_assert!((w - inc).abs() <= 1e-9 * (1.0 + inc.abs()) + slack);
            let t = 0.5 * (a + b);
            let v = reg.value(t);
            let back = reg.inverse(v).unwrap();
            // between atoms ℓ^ε rises at rate κ+ε only, so t is resolved to about ulp(v)/(κ+ε)
            let ulp = f64::EPSILON * v.abs().max(1.0);
            prop_assert!((back - t).abs() < 1e-9 + 4.0 * ulp / (spec.kappa + eps));
        }
        // ℓ^ε dominates ℓ from above in the limit sense: ℓ(t) <= ℓ^ε(t) - εt
        for i in 0..=20 {
            let t = h * i as f64 / 20.0;
            prop_assert!(base.value(t) <= reg.value(t) - eps * t + 1e-9 + 4.0 * f64::EPSILON * reg.value(t).abs());
        }
    }

    #[test]
    fn exponential_weights_bracket(spec in arb_spec(), seed in any::<u64>(), k in -1.0f64..1.0) {
        let p = sample_path(&spec, 1.0, 0.1, SeedStream::new(seed)).unwrap();
        let raw = p.value(1.0);
        let w = p.stieltjes_weighted_integral(k, 0.0, 1.0).unwrap();
        let (lo, hi) = if k >= 0.0 { ((-2.0 * k).exp(), 1.0) } else { (1.0, (-2.0 * k).exp()) };
        prop_assert!(w >= lo * raw * (1.0 - 1e-12) - 1e-14);
        prop_assert!(w <= hi * raw * (1.0 + 1e-12) + 1e-14);
    }
}

#[test]
fn from_jumps_places_atoms() {
    use subharnack::subordinator::Jump;
    let p = SubordinatorPath::from_jumps(0.5, 2.0, 0.25, vec![Jump { time: 1.0, size: 2.0 }]).unwrap();
    assert_eq!(p.value(0.999), 0.5 * 0.999);
    assert_eq!(p.value(1.0), 2.5);
}

#[test]
fn small_atoms_survive_a_huge_one() {
    use subharnack::subordinator::Jump;
    let mut jumps = vec![Jump { time: 0.01, size: 1e17 }];
    jumps.extend((1..=1000).map(|i| Jump { time: 0.01 + i as f64 * 1e-3, size: 10.0 }));
    let p = SubordinatorPath::from_jumps(0.0, 2.0, 0.05, jumps).unwrap();
    // naive accumulation rounds every +10 up to +16 (ulp(1e17) = 16)
    assert_eq!(p.value(1.5), 1e17 + 1e4);
}
