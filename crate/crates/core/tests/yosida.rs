mod common;

use nalgebra::DMatrix;
use proptest::prelude::*;
use subharnack::model::{DriftDescriptor, FunctionalDescriptor, ModelSpec};
use subharnack::subordinator::{sample_path, BernsteinSpec};
use subharnack::{solve_path, Segment, SeedStream, SolverConfig};

fn shifted(m: &ModelSpec, x: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; x.len()];
    m.drift.eval_shifted(m.k, x, &mut out);
    out
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|a| a * a).sum::<f64>().sqrt()
}

fn cubic() -> ModelSpec {
    common::model(2, 0.0, DriftDescriptor::DissipativeCubic { k: 0.5, a: 1.0 }, FunctionalDescriptor::Zero)
}

fn rotation() -> ModelSpec {
    let matrix = vec![vec![-0.2, 1.5], vec![-0.5, 0.4]];
    common::model(2, 0.0, DriftDescriptor::Linear { matrix }, FunctionalDescriptor::Zero)
}

fn arb_point() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-3.0f64..3.0, 2)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn approximation_is_smaller(x in arb_point(), eps in 0.001f64..2.0) {
        for m in [cubic(), rotation()] {
            let y = m.yosida_approx(eps).unwrap();
            prop_assert!(norm(&shifted(&y, &x)) <= norm(&shifted(&m, &x)) * (1.0 + 1e-10) + 1e-12);
        }
    }

    #[test]
    fn approximation_is_dissipative_and_lipschitz(x in arb_point(), z in arb_point(), eps in 0.001f64..2.0) {
        for m in [cubic(), rotation()] {
            let y = m.yosida_approx(eps).unwrap();
            let (bx, bz) = (shifted(&y, &x), shifted(&y, &z));
            let dx: Vec<f64> = x.iter().zip(&z).map(|(a, b)| a - b).collect();
            let db: Vec<f64> = bx.iter().zip(&bz).map(|(a, b)| a - b).collect();
            let inner: f64 = dx.iter().zip(&db).map(|(a, b)| a * b).sum();
            let d2 = norm(&dx).powi(2);
            prop_assert!(inner <= 1e-9 * d2.max(1.0), "inner {inner}");
            prop_assert!(norm(&db) <= 2.0 / eps * norm(&dx) * (1.0 + 1e-9) + 1e-12);
        }
    }

    #[test]
    fn linear_approximation_has_closed_form(x in arb_point(), eps in 0.001f64..2.0) {
        let m = rotation();
        let a = DMatrix::from_row_slice(2, 2, &[-0.2, 1.5, -0.5, 0.4]);
        let l = a - DMatrix::identity(2, 2) * m.k;
        let inv = (DMatrix::identity(2, 2) - l.clone() * eps).try_inverse().unwrap();
        let want = (inv - DMatrix::identity(2, 2)) * nalgebra::DVector::from_column_slice(&x) / eps;
        let got = shifted(&m.yosida_approx(eps).unwrap(), &x);
        for i in 0..2 {
            prop_assert!((got[i] - want[i]).abs() < 1e-10 * (1.0 + want[i].abs()));
        }
    }
}

#[test]
fn symmetric_part_gives_k() {
    let m = rotation();
    // eigenvalues of [[-0.2, 0.5], [0.5, 0.4]]
    let want = 0.1 + (0.09f64 + 0.25).sqrt();
    assert!((m.k - want).abs() < 1e-12);
}

#[test]
fn approximation_converges_pointwise() {
    let m = cubic();
    let x = [1.2, -0.7];
    let exact = shifted(&m, &x);
    let mut last = f64::INFINITY;
    for eps in [0.1, 0.01, 0.001, 0.0001] {
        let err = norm(&shifted(&m.yosida_approx(eps).unwrap(), &x).iter().zip(&exact).map(|(a, b)| a - b).collect::<Vec<_>>());
        assert!(err < last);
        last = err;
    }
    assert!(last < 1e-3 * norm(&exact));
}

#[test]
fn trajectories_converge_as_epsilon_shrinks() {
    let m = common::model(1, 0.0, DriftDescriptor::DissipativeCubic { k: 0.5, a: 1.0 }, FunctionalDescriptor::Zero);
    let xi = Segment::constant(0.0, 0, &[1.5]).unwrap();
    let spec = BernsteinSpec::stable(0.5, 1.0, 0.5).unwrap();
    let cfg = SolverConfig::default();
    for probe in 0..5u64 {
        let clock = sample_path(&spec, 1.0, 1.0 / 64.0, SeedStream::new(probe)).unwrap();
        let seed = SeedStream::new(1000 + probe);
        let exact = solve_path(&m, &xi, &clock, 1.0, &cfg, seed).unwrap();
        let mut last = f64::INFINITY;
        for eps in [0.1, 0.01, 0.001] {
            let y = solve_path(&m.yosida_approx(eps).unwrap(), &xi, &clock, 1.0, &cfg, seed).unwrap();
            let sup = exact.values().iter().zip(y.values()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            assert!(sup < last, "probe {probe}, eps {eps}: {sup} >= {last}");
            last = sup;
        }
        assert!(last < 0.05, "probe {probe}: {last}");
    }
}
