//! Acceptance run: one PASS/FAIL line per criterion.
//!
//! `cargo test --test acceptance -- AC3 AC7` runs a subset.

use std::sync::Arc;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rug::{Integer, Rational};

use flowkit::circle::{lattice_basis, rotation_number, CircleLift};
use flowkit::diffeo::fixtures::{self, logistic_time_map, FixtureParams};
use flowkit::diffeo::{ck_norm_with, Composite, Diffeo, DiffeoRef, Field, Identity, Interval, Inverse, Iterate};
use flowkit::estimates::{
    alpha_sequence, beta_table, check_en_exponent, check_equivalence_lemma, check_exponent, check_ratio_lemma,
    check_series_phi, check_star_identity, geometric_abscissae, mu_phi_values, recursion_polynomials,
};
use flowkit::real::{chebyshev_points, from_ratio, one, pow2, real, rel_err, set_precision, zero, Real};
use flowkit::smoothing::{
    alpha_bound_ratio, approximate_clean, build_smoothed, find_nice_x0, verify_smallness, SmoothingOptions,
};
use flowkit::szekeres::{
    classify_pair, commutation_residual, path_to_identity, translation_time, ClassifyOptions, PairClassification,
    SzekeresField,
};

type Outcome = Result<(bool, String), Box<dyn std::error::Error>>;

fn time(t: Real) -> DiffeoRef {
    Arc::new(logistic_time_map(&t))
}

fn sqrt2() -> Real {
    real(2).sqrt()
}

fn fixture(name: &str) -> fixtures::Fixture {
    fixtures::fixture(name, &FixtureParams::default()).unwrap()
}

/// `‖a - b‖_0` on `[0, 1]`, sampled.
fn sup_distance(a: &dyn Diffeo, b: &dyn Diffeo, samples: usize) -> flowkit::Result<Real> {
    let r = ck_norm_with(|x, p| a.disp_jet(x, p)?.sub(&b.disp_jet(x, p)?), 0, &Interval::unit(), samples)?;
    Ok(r.value)
}

fn ac1() -> Outcome {
    let xi = SzekeresField::of(time(one()))?;
    let mut worst = 0.0f64;
    for x in chebyshev_points(&zero(), &one(), 50) {
        let exact = real(&x * real(1 - &x));
        worst = worst.max(rel_err(&xi.value(&x)?, &exact, 0.0));
    }
    Ok((worst <= 1e-12, format!("max rel error of ξ against x(1-x) on 50 points: {:.3e}", worst)))
}

fn ac2() -> Outcome {
    let xi = SzekeresField::of(time(one()))?;
    let mut analytic = 0.0f64;
    for x in chebyshev_points(&zero(), &one(), 50) {
        let exact = real(1 - real(&x * 2u32));
        analytic = analytic.max(rel_err(&xi.dvalue(&x)?, &exact, 1e-30));
    }
    let flat = SzekeresField::of(fixture("flat_boundary").maps[0].clone())?;
    let h = pow2(-60);
    let mut fd = 0.0f64;
    for x in chebyshev_points(&zero(), &one(), 50) {
        let up = flat.value(&real(&x + &h))?;
        let down = flat.value(&real(&x - &h))?;
        let central = real(up - down) / real(&h * 2u32);
        fd = fd.max(rel_err(&flat.dvalue(&x)?, &central, 1e-30));
    }
    Ok((
        analytic <= 1e-12 && fd <= 1e-8,
        format!("Dξ vs 1-2x: {:.3e}; flat_boundary Dξ vs central difference (h = 2^-60): {:.3e}", analytic, fd),
    ))
}

fn ac3() -> Outcome {
    let (f, g) = (time(one()), time(sqrt2()));
    let xf = SzekeresField::of(f.clone())?;
    let xg = SzekeresField::of(g.clone())?;
    let x = from_ratio(3, 10);
    let tau_gf = translation_time(&xf, &x, &g.apply(&x)?)?;
    let tau_fg = translation_time(&xg, &x, &f.apply(&x)?)?;
    let e1 = rel_err(&tau_gf, &sqrt2(), 0.0);
    let e2 = real(real(&tau_gf * &tau_fg) - 1u32).abs().to_f64();
    Ok((e1 <= 1e-10 && e2 <= 1e-10, format!("|τ(g/f) - √2|/√2 = {:.3e}, |τ(f/g)·τ(g/f) - 1| = {:.3e}", e1, e2)))
}

fn ac4() -> Outcome {
    let (f, g) = (time(real(3)), time(real(2)));
    let c = classify_pair(f.clone(), g.clone(), &ClassifyOptions::default())?;
    let PairClassification::Cyclic { p, q, r, s, .. } = c else {
        return Ok((false, format!("classified as {}", c.variant())));
    };
    let h: DiffeoRef = Arc::new(Composite::new(f.clone(), Arc::new(Inverse(g)))?);
    let h3 = Iterate { base: h, k: 3 };
    let dist = sup_distance(&h3, f.as_ref(), 64)?.to_f64();
    let ok = (p, q) == (2, 3) && r * q + s * p == 1 && dist <= 1e-10;
    Ok((ok, format!("CYCLIC p={} q={} r={} s={}; ‖(f∘g⁻¹)³ - f‖₀ = {:.3e}", p, q, r, s, dist)))
}

fn ac5() -> Outcome {
    let fx = fixture("oscillating");
    let (f, g) = (fx.maps[0].clone(), fx.maps[1].clone());
    let opts = SmoothingOptions::default();
    let c = approximate_clean(f, g, &real(1e-4), 2, &opts)?;
    let nf = c.report.norm_f.value.to_f64();
    let ng = c.report.norm_g.value.to_f64();
    let comm = commutation_residual(c.f_bar.as_ref(), c.g_bar.as_ref(), 0, &Interval::unit(), 16)?.value.to_f64();
    let field = &c.field;
    let lo = field.xi.domain().lo;
    let end_flat = field.jet(&lo, 8)?.is_zero();
    // ξ̄ is the Szekeres field itself on [x0, hi]
    let hi = field.xi.domain().hi;
    let mut same = true;
    for i in 0..=4u32 {
        let x = real(&field.x0 + real(&hi - &field.x0) * i / 4u32);
        same &= field.jet(&x, 2)?.coeffs == field.xi.jet(&x, 2)?.coeffs;
    }
    let ok = nf <= 1e-4 && ng <= 1e-4 && comm <= 1e-10 && end_flat && same;
    Ok((
        ok,
        format!(
            "‖f-f̄‖₂ = {:.3e}, ‖g-ḡ‖₂ = {:.3e}, commutation = {:.3e}, 8-jet at end zero: {}, ξ̄ = ξ on [x0, 1]: {}",
            nf, ng, comm, end_flat, same
        ),
    ))
}

fn ac6() -> Outcome {
    let f = fixture("flat_boundary").maps[0].clone();
    let xi = SzekeresField::of(f.clone())?;
    let opts = SmoothingOptions::default();
    let delta = from_ratio(1, 2);
    let nice = find_nice_x0(f.as_ref(), &xi, &delta, 3, &from_ratio(1, 5), &opts)?;
    let x0 = nice.x0.clone();
    let bound_ok = nice.bound_lhs <= nice.bound_rhs;
    let s = build_smoothed(xi, f.as_ref(), &x0, 3, &opts)?.with_nice(nice);
    let alpha_ratio = alpha_bound_ratio(&s, f.as_ref(), &delta, 64)?.to_f64();
    let small = verify_smallness(&s, f.as_ref(), &one(), 64)?;
    let theory = small.theoretical.clone().ok_or("no theoretical bound")?;
    let patch_ok = small.on_patch.value <= theory;
    let ok = x0 <= 0.2 && bound_ok && alpha_ratio <= 1.0 && patch_ok;
    Ok((
        ok,
        format!(
            "x0 = {:.6e}, nice bound {}, worst |α_i|/((i+1)|f(x0)-x0|^(1-δ)) = {:.3e}, ‖ξ̄‖₃ on patch {:.3e} ≤ {:.3e}: {}",
            x0.to_f64(),
            bound_ok,
            alpha_ratio,
            small.on_patch.value.to_f64(),
            theory.to_f64(),
            patch_ok
        ),
    ))
}

fn ac7() -> Outcome {
    let expected = ["0", "X1*X2", "3*X1*X3 + X2^2 + X1^2*X2"];
    let mut ok = true;
    let mut got = Vec::new();
    for (i, e) in expected.iter().enumerate() {
        let p = recursion_polynomials(i + 2).p.to_string();
        ok &= p == *e;
        got.push(p);
    }
    let alpha = alpha_sequence(5);
    ok &= alpha == [0, 0, 1, 5, 23];
    let mut star = true;
    for n in 1..=8 {
        star &= check_star_identity(n)?.pass;
    }
    let beta = beta_table(8);
    let diag = (1..=8).all(|n| beta[n - 1][n - 1] == 1);
    ok &= star && diag;
    Ok((ok, format!("P_2..P_4 = {:?}, α = {:?}, (*_n) n ≤ 8: {}, β_(n,n-1) = 1: {}", got, alpha, star, diag)))
}

fn ac8() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut worst = Vec::new();
    for name in ["hyperbolic", "flat_boundary"] {
        let f = fixture(name).maps[0].clone();
        let xi = SzekeresField::of(f.clone())?;
        let mut w = 0.0f64;
        for _ in 0..20 {
            let x = real(rng.gen_range(0.02..0.98));
            let m = mu_phi_values(f.as_ref(), &xi, 4, &x)?;
            w = m.lemma_residual.iter().cloned().fold(w, f64::max);
        }
        worst.push((name, w));
    }
    let ok = worst.iter().all(|(_, w)| *w <= 1e-8);
    Ok((ok, format!("max rel residual of μ_n = Φ_n - P_n(μ), n ≤ 4, 20 points: {:?}", worst)))
}

fn ac9() -> Outcome {
    let f = fixture("flat_boundary").maps[0].clone();
    let xi = SzekeresField::of(f.clone())?;
    let xs = geometric_abscissae(&from_ratio(1, 5), 16);
    let ratio = check_ratio_lemma(f.as_ref(), &xs, 256)?;
    let equiv = check_equivalence_lemma(f.as_ref(), &xi, &xs, 16)?;
    let rf = ratio.final_value.unwrap_or(f64::INFINITY);
    let ef = equiv.final_value.unwrap_or(f64::INFINITY);
    let mut ok = rf <= 0.01 && ef <= 0.01 && equiv.pass;
    let mut parts =
        vec![format!("ratio final {:.3e}", rf), format!("equivalence final {:.3e} pass {}", ef, equiv.pass)];
    for n in 1..=3 {
        let e = check_en_exponent(f.as_ref(), &xi, n, &xs)?;
        let control = check_exponent(f.as_ref(), &xi, n, &xs, (n + 1) as f64, 0.2, 16)?;
        ok &= e.pass && !control.pass;
        parts.push(format!("E{} {} (control {})", n, e.pass, if control.pass { "passed" } else { "failed" }));
    }
    Ok((ok, parts.join("; ")))
}

fn ac10() -> Outcome {
    let x = from_ratio(3, 10);
    let mut ok = true;
    let mut parts = Vec::new();
    for name in ["hyperbolic", "flat_boundary"] {
        let f = fixture(name).maps[0].clone();
        let xi = SzekeresField::of(f.clone())?;
        for n in 1..=3 {
            let s = check_series_phi(f.as_ref(), &xi, n, &x)?;
            ok &= s.rel_error <= 1e-8;
            parts.push(format!("{} n={}: {:.3e}", name, n, s.rel_error));
        }
    }
    Ok((ok, parts.join(", ")))
}

fn ac11() -> Outcome {
    let mut ok = true;
    let mut parts = Vec::new();
    for (f, g) in [(time(one()), time(sqrt2())), (time(real(3)), time(real(2)))] {
        let c = classify_pair(f.clone(), g.clone(), &ClassifyOptions::default())?;
        let id = Identity::unit();
        let mut worst = zero();
        let mut ends = zero();
        for i in 0..=4u32 {
            let t = from_ratio(i as i64, 4);
            let (ft, gt) = path_to_identity(&c, &t, &Interval::unit())?;
            worst = worst.max(&commutation_residual(ft.as_ref(), gt.as_ref(), 0, &Interval::unit(), 16)?.value);
            let e = match i {
                0 => sup_distance(ft.as_ref(), &id, 32)?.max(&sup_distance(gt.as_ref(), &id, 32)?),
                4 => sup_distance(ft.as_ref(), f.as_ref(), 32)?.max(&sup_distance(gt.as_ref(), g.as_ref(), 32)?),
                _ => zero(),
            };
            ends = ends.max(&e);
        }
        ok &= worst <= 1e-10 && ends <= 1e-10;
        parts.push(format!("{}: residual {:.3e}, endpoints {:.3e}", c.variant(), worst.to_f64(), ends.to_f64()));
    }
    Ok((ok, parts.join("; ")))
}

/// Determinant by cofactor expansion, independent of the library's elimination.
fn cofactor_det(m: &[Vec<Integer>]) -> Integer {
    let n = m.len();
    if n == 1 {
        return m[0][0].clone();
    }
    let mut acc = Integer::new();
    for j in 0..n {
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

fn ac12() -> Outcome {
    let r = rotation_number(&CircleLift::rotation(&from_ratio(3, 8)), 2000)?;
    let exact = r.exact == Some((3, 8));
    let target = real(sqrt2() - 1u32);
    let conj = CircleLift::conjugate(&CircleLift::sine(&from_ratio(1, 2))?, &CircleLift::rotation(&target));
    let rc = rotation_number(&conj, 2000)?;
    let err = real(&rc.value - &target).abs().to_f64();
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut good = 0;
    for _ in 0..100 {
        let n = rng.gen_range(1..=5usize);
        let k = rng.gen_range(1..=60i64);
        let rho: Vec<Rational> = (0..n).map(|_| Rational::from((rng.gen_range(0..k), k))).collect();
        let b = lattice_basis(&rho)?;
        // rows of the matrix are coordinates; columns are the basis vectors
        let rows: Vec<Vec<Integer>> = (0..n).map(|i| b.columns.iter().map(|c| c[i].clone()).collect()).collect();
        let unimodular = cofactor_det(&rows).abs() == 1;
        let kills = b.columns[1..].iter().all(|c| {
            let mut s = Rational::new();
            for (ci, ri) in c.iter().zip(&rho) {
                s += Rational::from(ci * ri);
            }
            *s.denom() == 1
        });
        if unimodular && kills {
            good += 1;
        }
    }
    let ok = exact && err <= 1e-8 && good == 100;
    Ok((
        ok,
        format!(
            "R_3/8 → {:?}; conjugated √2-1 error {:.3e} (N = 2000); lattice bases {}/100 exact",
            r.exact, err, good
        ),
    ))
}

fn main() {
    set_precision(256).unwrap();
    let criteria: [(&str, &str, fn() -> Outcome); 12] = [
        ("AC1", "flow recovery", ac1),
        ("AC2", "derivative series", ac2),
        ("AC3", "translation number", ac3),
        ("AC4", "rational pair", ac4),
        ("AC5", "smoothing pipeline", ac5),
        ("AC6", "nice x0 inequalities", ac6),
        ("AC7", "symbolic recursions", ac7),
        ("AC8", "pointwise identity", ac8),
        ("AC9", "estimate suite", ac9),
        ("AC10", "series check", ac10),
        ("AC11", "paths to identity", ac11),
        ("AC12", "circle", ac12),
    ];
    let filters: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = Vec::new();
    for (id, name, run) in criteria {
        if !filters.is_empty() && !filters.iter().any(|f| f == id) {
            continue;
        }
        let start = Instant::now();
        let (pass, detail) = match std::panic::catch_unwind(run) {
            Ok(Ok(v)) => v,
            Ok(Err(e)) => (false, format!("error: {}", e)),
            Err(_) => (false, "panicked".to_string()),
        };
        println!(
            "{} {} {}: {} ({:.1} s)",
            id,
            if pass { "PASS" } else { "FAIL" },
            name,
            detail,
            start.elapsed().as_secs_f64()
        );
        if !pass {
            failed.push(id);
        }
    }
    if !failed.is_empty() {
        println!("failed: {}", failed.join(", "));
        std::process::exit(1);
    }
}
