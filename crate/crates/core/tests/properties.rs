//! Randomized properties. The seed comes from `FLOWKIT_SEED` (default 0), so runs are reproducible.

use std::sync::Arc;

use proptest::prelude::*;
use proptest::test_runner::{Config, RngSeed};
use rug::{Integer, Rational};

use flowkit::cfrac::snap;
use flowkit::circle::{lattice_basis, rotation_number, CircleLift};
use flowkit::diffeo::fixtures::logistic_time_map;
use flowkit::diffeo::{DiffeoRef, Interval};
use flowkit::jet::Jet;
use flowkit::real::{from_ratio, pow2, real, rel_err, Real};
use flowkit::smoothing::Psi;
use flowkit::szekeres::{
    classify_pair, commutation_residual, path_to_identity, translation_time, ClassifyOptions, PairClassification,
    SzekeresField,
};

fn config(cases: u32) -> Config {
    let seed = std::env::var("FLOWKIT_SEED").ok().and_then(|s| s.parse().ok()).unwrap_or(0);
    Config { cases, rng_seed: RngSeed::Fixed(seed), failure_persistence: None, ..Config::default() }
}

fn time(t: &Real) -> DiffeoRef {
    Arc::new(logistic_time_map(t))
}

fn logistic_field() -> Arc<SzekeresField> {
    SzekeresField::of(time(&real(1))).unwrap()
}

proptest! {
    #![proptest_config(config(8))]

    #[test]
    fn field_is_invariant_under_f(x in 0.05f64..0.95) {
        let f = time(&real(1));
        let xi = logistic_field();
        let x = real(x);
        let df = f.jet(&x, 1).unwrap().coeffs[1].clone();
        let lhs = xi.value(&f.apply(&x).unwrap()).unwrap();
        let rhs = real(&df * xi.value(&x).unwrap());
        prop_assert!(rel_err(&lhs, &rhs, 0.0) < 1e-30);
    }

    #[test]
    fn half_time_maps_compose_to_f(x in 0.05f64..0.95) {
        let f = time(&real(1));
        let xi = logistic_field();
        let x = real(x);
        let half = from_ratio(1, 2);
        let y = real(&x + &xi.flow_jet(&x, &half, 0).unwrap().coeffs[0]);
        let z = real(&y + &xi.flow_jet(&y, &half, 0).unwrap().coeffs[0]);
        prop_assert!(rel_err(&z, &f.apply(&x).unwrap(), 0.0) < 1e-30);
        let whole = real(&x + &xi.flow_jet(&x, &real(1), 0).unwrap().coeffs[0]);
        prop_assert_eq!(whole, f.apply(&x).unwrap());
    }

    #[test]
    fn translation_time_is_antisymmetric_and_additive(a in 0.05f64..0.95, b in 0.05f64..0.95, c in 0.05f64..0.95) {
        let xi = logistic_field();
        let (a, b, c) = (real(a), real(b), real(c));
        let ab = translation_time(&xi, &a, &b).unwrap();
        let ba = translation_time(&xi, &b, &a).unwrap();
        let bc = translation_time(&xi, &b, &c).unwrap();
        let ac = translation_time(&xi, &a, &c).unwrap();
        prop_assert!(real(&ab + &ba).abs() < 1e-30);
        prop_assert!(real(real(&ab + &bc) - &ac).abs() < 1e-30);
        // closed form: T(x) = log(x/(1-x)) for ξ = x(1-x)
        let t = |x: &Real| real(x / real(1 - x)).ln();
        prop_assert!(real(&ab - real(t(&b) - t(&a))).abs() < 1e-30);
    }

    #[test]
    fn psi_is_an_increasing_reparametrization(x0 in 0.05f64..0.5, theta in 0.01f64..0.9) {
        let lo = real(0);
        let x0 = real(x0);
        let start = real(&x0 * (1.0 - theta));
        let psi = Psi::new(&lo, &x0, &start).unwrap();
        let floor = pow2(-200);
        prop_assert!(real(psi.value(&lo).unwrap() - &start).abs() < floor);
        prop_assert!(real(psi.value(&x0).unwrap() - &x0).abs() < real(&floor * 1024u32));
        prop_assert_eq!(psi.derivative(&x0).unwrap(), real(1));
        let slope = psi.min_slope(64).unwrap();
        prop_assert!(slope > 0 && slope == psi.eps);
    }
}

proptest! {
    #![proptest_config(config(4))]

    #[test]
    fn path_to_identity_commutes(alpha in 0.3f64..2.5, t in 0.0f64..1.0) {
        let alpha = real(alpha);
        let (f, g) = (time(&real(1)), time(&alpha));
        let c = classify_pair(f, g, &ClassifyOptions::default()).unwrap();
        let clean = matches!(c, PairClassification::Flow { .. } | PairClassification::Cyclic { .. });
        prop_assert!(clean, "classified as {}", c.variant());
        let (ft, gt) = path_to_identity(&c, &real(t), &Interval::unit()).unwrap();
        let r = commutation_residual(ft.as_ref(), gt.as_ref(), 0, &Interval::unit(), 8).unwrap();
        prop_assert!(r.value < 1e-10, "residual {}", r.value);
    }
}

proptest! {
    #![proptest_config(config(16))]

    #[test]
    fn rotation_number_is_additive_and_conjugacy_invariant(a in 0.0f64..1.0, b in 0.0f64..1.0, eps in 0.0f64..0.9) {
        let (ra, rb) = (real(a), real(b));
        let both = CircleLift::compose(&CircleLift::rotation(&ra), &CircleLift::rotation(&rb));
        let r = rotation_number(&both, 2000).unwrap();
        prop_assert!(real(&r.value - real(&ra + &rb)).abs() < 1e-8);
        let conj = CircleLift::conjugate(&CircleLift::sine(&real(eps)).unwrap(), &CircleLift::rotation(&ra));
        let r = rotation_number(&conj, 4000).unwrap();
        prop_assert!(real(&r.value - &ra).abs() < 1e-6, "{} vs {}", r.value, a);
    }
}

/// Determinant by cofactor expansion.
fn cofactor_det(m: &[Vec<Integer>]) -> Integer {
    if m.len() == 1 {
        return m[0][0].clone();
    }
    let mut acc = Integer::new();
    for j in 0..m.len() {
        let minor: Vec<Vec<Integer>> = m[1..]
            .iter()
            .map(|row| row.iter().enumerate().filter(|(c, _)| *c != j).map(|(_, v)| v.clone()).collect())
            .collect();
        let term = Integer::from(&m[0][j] * cofactor_det(&minor));
        if j % 2 == 0 {
            acc += term;
        } else {
            acc -= term;
        }
    }
    acc
}

proptest! {
    #![proptest_config(config(100))]

    #[test]
    fn lattice_basis_is_unimodular_and_adapted(k in 1i64..=60, nums in prop::collection::vec(0i64..60, 1..=5)) {
        let rho: Vec<Rational> = nums.iter().map(|&n| Rational::from((n % k, k))).collect();
        let b = lattice_basis(&rho).unwrap();
        let n = rho.len();
        let rows: Vec<Vec<Integer>> = (0..n).map(|i| b.columns.iter().map(|c| c[i].clone()).collect()).collect();
        prop_assert_eq!(cofactor_det(&rows).abs(), 1);
        let rho_of = |c: &[Integer]| {
            let mut s = Rational::new();
            for (ci, ri) in c.iter().zip(&rho) {
                s += Rational::from(ci * ri);
            }
            s
        };
        for c in &b.columns[1..] {
            prop_assert_eq!(rho_of(c).denom().clone(), 1);
        }
        // the first column generates the group: its rotation number has the full order
        let order = rho.iter().fold(Integer::from(1), |acc, r| acc.lcm(r.denom()));
        prop_assert_eq!(rho_of(&b.columns[0]).denom().clone(), order);
    }

    #[test]
    fn snapping_recovers_small_rationals(p in 0i64..200, q in 1i64..=64) {
        let g = num_integer::gcd(p, q);
        let got = snap(&from_ratio(p, q), 64, &real(1e-12));
        prop_assert_eq!(got, Some((p / g, q / g)));
    }

    #[test]
    fn jet_exp_log_and_inverse_round_trip(c in prop::collection::vec(-1.0f64..1.0, 6), x in -1.0f64..1.0) {
        let x = real(x);
        let mut coeffs: Vec<Real> = c.iter().map(|&v| real(v)).collect();
        coeffs[0] = real(coeffs[0].clone().abs() + 0.5);
        let u = Jet::new(x.clone(), coeffs.clone());
        let back = u.log().unwrap().exp().unwrap();
        for (a, b) in back.coeffs.iter().zip(&u.coeffs) {
            prop_assert!(real(a - b).abs() < 1e-60);
        }
        coeffs[1] = real(coeffs[1].clone().abs() + 0.5);
        let m = Jet::new(x.clone(), coeffs);
        let inv = m.invert().unwrap();
        let id = Jet::compose(&m, &inv).unwrap();
        prop_assert!(real(&id.coeffs[0] - &inv.base).abs() < 1e-60);
        prop_assert!(real(&id.coeffs[1] - 1u32).abs() < 1e-60);
        for v in &id.coeffs[2..] {
            prop_assert!(v.clone().abs() < 1e-60);
        }
    }
}
