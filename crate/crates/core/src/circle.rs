//! Lifts of circle diffeomorphisms, rotation numbers and adapted bases of `Z^n`.

use std::fmt;

use rug::{Integer, Rational};

use crate::cfrac::convergents;
use crate::diffeo::{Interval, SmoothMap};
use crate::error::{Error, Result};
use crate::real::{linspace, one, pi, pow2, precision, real, zero, Real};

#[derive(Clone, Debug)]
enum Kind {
    /// `F` on `[0, 1]`, extended by `F(x + n) = F(x) + n`.
    Map(SmoothMap),
    Translate(Real),
    /// `φ ∘ inner ∘ φ^{-1}`.
    Conjugate(Box<CircleLift>, Box<CircleLift>),
    /// `outer ∘ inner`.
    Compose(Box<CircleLift>, Box<CircleLift>),
}

/// Degree-one lift of an orientation-preserving circle diffeomorphism.
#[derive(Clone, Debug)]
pub struct CircleLift {
    kind: Kind,
}

impl CircleLift {
    /// Checks `F(1) = F(0) + 1` and `DF > 0` on a grid of 64 points.
    pub fn from_map(map: SmoothMap) -> Result<CircleLift> {
        if map.domain.lo != 0 || map.domain.hi != 1 {
            return Err(Error::Precondition("a lift is given on [0, 1]".into()));
        }
        let gap = real(map.eval(&one())? - map.eval(&zero())?) - 1u32;
        if real(gap.abs_ref()) > pow2(-(precision() as i32) / 2) {
            return Err(Error::Precondition(format!("F(1) - F(0) - 1 = {:.3e}, not a degree-one lift", gap)));
        }
        for x in linspace(&zero(), &one(), 64) {
            if map.eval_jet(&x, 1)?.coeffs[1] <= 0 {
                return Err(Error::Precondition(format!("DF <= 0 at x = {}", x)));
            }
        }
        Ok(CircleLift { kind: Kind::Map(map) })
    }

    pub fn rotation(alpha: &Real) -> CircleLift {
        CircleLift { kind: Kind::Translate(alpha.clone()) }
    }

    pub fn conjugate(phi: &CircleLift, inner: &CircleLift) -> CircleLift {
        CircleLift { kind: Kind::Conjugate(Box::new(phi.clone()), Box::new(inner.clone())) }
    }

    /// `x + ε·sin(2πx)/(2π)`, a lift for `|ε| < 1`.
    pub fn sine(eps: &Real) -> Result<CircleLift> {
        use crate::expr::{Expr, Func};
        let two_pi = real(pi() * 2u32);
        let e = Expr::add(
            Expr::X,
            Expr::mul(Expr::Const(real(eps / &two_pi)), Expr::call(Func::Sin, Expr::mul(Expr::Const(two_pi), Expr::X))),
        );
        CircleLift::from_map(SmoothMap::from_expr(e, Interval::unit()))
    }

    pub fn compose(outer: &CircleLift, inner: &CircleLift) -> CircleLift {
        CircleLift { kind: Kind::Compose(Box::new(outer.clone()), Box::new(inner.clone())) }
    }

    /// `F(x)` and `DF(x)`.
    pub fn eval_d(&self, x: &Real) -> Result<(Real, Real)> {
        match &self.kind {
            Kind::Map(m) => {
                let n = real(x.floor_ref());
                let j = m.eval_jet(&real(x - &n), 1)?;
                Ok((real(&j.coeffs[0] + &n), j.coeffs[1].clone()))
            }
            Kind::Translate(a) => Ok((real(x + a), one())),
            Kind::Conjugate(phi, inner) => {
                let (u, du) = phi.inverse_d(x)?;
                let (v, dv) = inner.eval_d(&u)?;
                let (w, dw) = phi.eval_d(&v)?;
                Ok((w, dw * dv * du))
            }
            Kind::Compose(outer, inner) => {
                let (u, du) = inner.eval_d(x)?;
                let (v, dv) = outer.eval_d(&u)?;
                Ok((v, dv * du))
            }
        }
    }

    pub fn apply(&self, x: &Real) -> Result<Real> {
        Ok(self.eval_d(x)?.0)
    }

    /// `F^{-1}(y)` and its derivative, by safeguarded Newton inside `[y - F(0) - 1, y - F(0) + 1]`.
    pub fn inverse_d(&self, y: &Real) -> Result<(Real, Real)> {
        if let Kind::Translate(a) = &self.kind {
            return Ok((real(y - a), one()));
        }
        let c = self.apply(&zero())?;
        let mut lo = real(y - &c) - 1u32;
        let mut hi = real(y - &c) + 1u32;
        let mut x = real(y - &c);
        let tol = real(y.abs_ref()).max(&one()) * pow2(8 - precision() as i32);
        for _ in 0..(4 * precision() as usize) {
            let (v, dv) = self.eval_d(&x)?;
            let r = real(&v - y);
            if r > 0 {
                hi = x.clone();
            } else {
                lo = x.clone();
            }
            let step = real(&r / &dv);
            let mut next = real(&x - &step);
            if next <= lo || next >= hi {
                next = real(&lo + &hi) / 2u32;
            }
            let moved = real(&next - &x).abs();
            x = next;
            if moved <= tol || real(&hi - &lo) <= tol {
                let dv = self.eval_d(&x)?.1;
                return Ok((x, dv.recip()));
            }
        }
        Err(Error::NonConverged {
            what: format!("inverse of a circle lift at {}", y),
            iterations: 4 * precision() as usize,
        })
    }

    pub fn iterate(&self, x: &Real, n: usize) -> Result<Real> {
        let mut y = x.clone();
        for _ in 0..n {
            y = self.apply(&y)?;
        }
        Ok(y)
    }
}

#[derive(Clone, Debug)]
pub struct RotationOptions {
    pub tol: Real,
    pub q_max: i64,
    pub grid: usize,
}

impl Default for RotationOptions {
    fn default() -> Self {
        RotationOptions { tol: real(1e-9), q_max: 64, grid: 256 }
    }
}

#[derive(Clone, Debug)]
pub struct RotationReport {
    pub value: Real,
    /// `p/q` when the rational criterion fired.
    pub exact: Option<(i64, i64)>,
    pub iterations: usize,
    /// Convergents `p/q` of the average with `min |F^q - id - p|` on the grid.
    pub convergents: Vec<(i64, i64, Real)>,
}

impl fmt::Display for RotationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.exact {
            Some((p, q)) => writeln!(f, "rotation_number={}/{}", p, q)?,
            None => writeln!(f, "rotation_number={}", crate::real::fmt_sig(&self.value, 30))?,
        }
        writeln!(f, "iterations={}", self.iterations)?;
        for (p, q, r) in &self.convergents {
            writeln!(f, "convergent={}/{} min_residual={:.3e}", p, q, r)?;
        }
        Ok(())
    }
}

/// Weighted Birkhoff average of `F - id` along the orbit of `0`, with the bump weight
/// `exp(-1/(t(1-t)))`; rational values are snapped when a convergent `p/q` passes
/// `min |F^q - id - p| < tol` on the grid.
pub fn rotation_number(f: &CircleLift, iterations: usize) -> Result<RotationReport> {
    rotation_number_with(f, iterations, &RotationOptions::default())
}

pub fn rotation_number_with(f: &CircleLift, iterations: usize, opts: &RotationOptions) -> Result<RotationReport> {
    if iterations == 0 {
        return Err(Error::Precondition("at least one iteration is needed".into()));
    }
    let n = iterations;
    let mut x = zero();
    let mut num = zero();
    let mut den = zero();
    for i in 0..n {
        let y = f.apply(&x)?;
        let t = real((2 * i + 1) as u32) / (2 * n) as u32;
        let s = real(&t * real(1u32 - &t));
        let w = (-s.recip()).exp();
        num += real(&w * real(&y - &x));
        den += &w;
        x = y;
    }
    let value = if den.is_zero() { x / n as u32 } else { num / den };
    let mut table = Vec::new();
    let mut exact = None;
    let grid = linspace(&zero(), &one(), opts.grid.max(2));
    for (p, q) in convergents(&value, opts.q_max) {
        let mut min: Option<Real> = None;
        for g in &grid {
            let r = real(f.iterate(g, q as usize)? - g) - p;
            let r = r.abs();
            if min.as_ref().map(|m| r < *m).unwrap_or(true) {
                min = Some(r);
            }
        }
        let min = min.unwrap_or_else(zero);
        let hit = min < opts.tol;
        table.push((p, q, min));
        if hit {
            exact = Some((p, q));
            break;
        }
    }
    let value = match exact {
        Some((p, q)) => real(p) / q,
        None => value,
    };
    Ok(RotationReport { value, exact, iterations: n, convergents: table })
}

/// Columns `(f, g_2, …, g_n)` of a unimodular integer matrix.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LatticeBasis {
    pub columns: Vec<Vec<Integer>>,
    /// Order of the group generated by the rotation numbers.
    pub k: Integer,
    /// `k·ρ(f)`, a unit mod `k`.
    pub alpha: Integer,
    /// Inverse of `alpha` mod `k`.
    pub beta: Integer,
}

impl LatticeBasis {
    pub fn dim(&self) -> usize {
        self.columns.len()
    }

    pub fn determinant(&self) -> Integer {
        determinant(&self.columns)
    }

    /// `ρ` of column `i`, reduced into `[0, 1)`.
    pub fn rho_of(&self, i: usize, rho: &[Rational]) -> Rational {
        frac(&dot_rational(&self.columns[i], rho))
    }

    /// Integer CSV, one row per matrix row.
    pub fn to_csv(&self) -> String {
        let n = self.dim();
        let mut out = String::new();
        let header: Vec<String> =
            (0..n).map(|j| if j == 0 { "f".to_string() } else { format!("g{}", j + 1) }).collect();
        out.push_str(&header.join(","));
        out.push('\n');
        for i in 0..n {
            let row: Vec<String> = self.columns.iter().map(|c| c[i].to_string()).collect();
            out.push_str(&row.join(","));
            out.push('\n');
        }
        out
    }
}

/// Comma-separated rationals such as `1/2, 0, 2/3`.
pub fn parse_rho(text: &str) -> Result<Vec<Rational>> {
    text.split(',')
        .map(|t| {
            let t = t.trim();
            let bad = |e: &dyn fmt::Display| Error::Syntax { pos: 0, msg: format!("bad rational {t:?}: {e}") };
            match t.split_once('/') {
                Some((p, q)) => {
                    let p: Integer = p.trim().parse().map_err(|e| bad(&e))?;
                    let q: Integer = q.trim().parse().map_err(|e| bad(&e))?;
                    if q == 0 {
                        return Err(bad(&"zero denominator"));
                    }
                    Ok(Rational::from((p, q)))
                }
                None => Ok(Rational::from(t.parse::<Integer>().map_err(|e| bad(&e))?)),
            }
        })
        .collect()
}

fn frac(r: &Rational) -> Rational {
    let fl = Rational::from(r.floor_ref());
    Rational::from(r - &fl)
}

fn dot_rational(v: &[Integer], rho: &[Rational]) -> Rational {
    let mut acc = Rational::new();
    for (a, r) in v.iter().zip(rho) {
        acc += Rational::from(r * a);
    }
    acc
}

/// Exact determinant by fraction-free elimination.
pub fn determinant(columns: &[Vec<Integer>]) -> Integer {
    let n = columns.len();
    if n == 0 {
        return Integer::from(1);
    }
    let mut m: Vec<Vec<Integer>> = (0..n).map(|i| (0..n).map(|j| columns[j][i].clone()).collect()).collect();
    let mut sign = 1;
    let mut prev = Integer::from(1);
    for k in 0..n - 1 {
        if m[k][k] == 0 {
            let Some(p) = (k + 1..n).find(|&i| m[i][k] != 0) else {
                return Integer::new();
            };
            m.swap(k, p);
            sign = -sign;
        }
        for i in k + 1..n {
            for j in k + 1..n {
                let v = Integer::from(&m[i][j] * &m[k][k]) - Integer::from(&m[i][k] * &m[k][j]);
                m[i][j] = v / &prev;
            }
        }
        prev = m[k][k].clone();
    }
    let d = m[n - 1][n - 1].clone();
    if sign < 0 {
        -d
    } else {
        d
    }
}

/// Cofactors `c` with `Σ c_i v_i = gcd(v)`, and the gcd (nonnegative).
fn gcd_cofactors(v: &[Integer]) -> (Integer, Vec<Integer>) {
    let mut g = Integer::new();
    let mut c: Vec<Integer> = vec![Integer::new(); v.len()];
    for (i, vi) in v.iter().enumerate() {
        let (ng, s, t) = g.clone().extended_gcd(vi.clone(), Integer::new());
        for cj in c.iter_mut().take(i) {
            *cj *= &s;
        }
        c[i] = t;
        g = ng;
    }
    (g, c)
}

/// Unimodular matrix (as columns) whose first column is the primitive vector `f`.
fn complete_basis(f: &[Integer]) -> Vec<Vec<Integer>> {
    let n = f.len();
    let mut cols: Vec<Vec<Integer>> =
        (0..n).map(|j| (0..n).map(|i| Integer::from(if i == j { 1 } else { 0 })).collect()).collect();
    let mut v = f.to_vec();
    // rows 0 and i of v are combined by [[s, t], [-v_i/g, v_0/g]] (determinant 1), and the columns
    // 0 and i of the running matrix by its inverse, so that the running matrix maps e_1 to f
    for i in 1..n {
        if v[i] == 0 {
            continue;
        }
        let (g, s, t) = v[0].clone().extended_gcd(v[i].clone(), Integer::new());
        let a = Integer::from(&v[0] / &g);
        let b = Integer::from(&v[i] / &g);
        let (c0, ci) = (cols[0].clone(), cols[i].clone());
        for r in 0..n {
            cols[0][r] = Integer::from(&c0[r] * &a) + Integer::from(&ci[r] * &b);
            cols[i][r] = Integer::from(&ci[r] * &s) - Integer::from(&c0[r] * &t);
        }
        v[0] = g;
        v[i] = Integer::new();
    }
    if v[0] < 0 {
        for c in cols[0].iter_mut() {
            *c = -c.clone();
        }
    }
    cols
}

/// Basis `(f, g_2, …, g_n)` of `Z^n` with `ρ(f)` generating the group generated by `rho` and
/// `ρ(g_i) ≡ 0 (mod 1)`; `rho[i]` is the rotation number of the `i`-th standard generator.
pub fn lattice_basis(rho: &[Rational]) -> Result<LatticeBasis> {
    if rho.is_empty() {
        return Err(Error::Precondition("at least one generator is needed".into()));
    }
    let reduced: Vec<Rational> = rho.iter().map(frac).collect();
    let mut k = Integer::from(1);
    for r in &reduced {
        k.lcm_mut(r.denom());
    }
    lattice_basis_of_order(&reduced, &k)
}

/// As [`lattice_basis`], with the common denominator `k` given; inputs whose generated group
/// does not have order `k` are rejected.
pub fn lattice_basis_of_order(rho: &[Rational], k: &Integer) -> Result<LatticeBasis> {
    let n = rho.len();
    if n == 0 || *k < 1 {
        return Err(Error::Precondition("need n >= 1 and k >= 1".into()));
    }
    let mut nums = Vec::with_capacity(n);
    for r in rho {
        let kr = Rational::from(r * k);
        if *kr.denom() != 1 {
            return Err(Error::InconsistentTau(format!("{} is not a multiple of 1/{}", r, k)));
        }
        nums.push(kr.numer().clone());
    }
    let mut with_k = nums.clone();
    with_k.push(k.clone());
    let (g, cof) = gcd_cofactors(&with_k);
    if g != 1 {
        return Err(Error::InconsistentTau(format!(
            "rotation numbers generate a group of order {}/{}, not {}",
            k, g, k
        )));
    }
    let identity = || -> Vec<Vec<Integer>> {
        (0..n).map(|j| (0..n).map(|i| Integer::from(if i == j { 1 } else { 0 })).collect()).collect()
    };
    if *k == 1 {
        return Ok(LatticeBasis { columns: identity(), k: k.clone(), alpha: Integer::new(), beta: Integer::new() });
    }
    // h with k·ρ(h) a unit mod k (a standard generator when one qualifies, else the gcd
    // cofactors, for which k·ρ(h) ≡ 1), then f primitive on its ray
    let h: Vec<Integer> = match nums.iter().position(|a| Integer::from(a.gcd_ref(k)) == 1) {
        Some(i) => (0..n).map(|j| Integer::from(if i == j { 1 } else { 0 })).collect(),
        None => cof[..n].to_vec(),
    };
    let (d, _) = gcd_cofactors(&h);
    let f: Vec<Integer> = h.iter().map(|x| Integer::from(x / &d)).collect();
    let dot = |v: &[Integer]| -> Integer { v.iter().zip(&nums).map(|(a, b)| Integer::from(a * b)).sum() };
    let alpha = dot(&f).modulo(k);
    let beta = alpha.clone().invert(k).map_err(|_| Error::InconsistentTau("k·ρ(f) is not a unit mod k".into()))?;
    let mut cols = complete_basis(&f);
    for col in cols.iter_mut().skip(1) {
        let m = dot(col);
        let ni = -Integer::from(&beta * &m);
        for (c, fi) in col.iter_mut().zip(&f) {
            *c += Integer::from(&ni * fi);
        }
    }
    let basis = LatticeBasis { columns: cols, k: k.clone(), alpha, beta };
    let det = basis.determinant();
    if det != 1 && det != -1 {
        return Err(Error::InconsistentTau(format!("completed basis has determinant {}", det)));
    }
    for i in 1..n {
        if basis.rho_of(i, rho) != 0 {
            return Err(Error::InconsistentTau(format!("ρ(g_{}) is not an integer", i + 1)));
        }
    }
    Ok(basis)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diffeo::parse_map;
    use crate::real::from_ratio;

    fn q(p: i64, d: i64) -> Rational {
        Rational::from((p, d))
    }

    fn ints(v: &[i64]) -> Vec<Integer> {
        v.iter().map(|&x| Integer::from(x)).collect()
    }

    #[test]
    fn rational_rotation_snaps() {
        let r = rotation_number(&CircleLift::rotation(&from_ratio(3, 8)), 1000).unwrap();
        assert_eq!(r.exact, Some((3, 8)));
        assert_eq!(r.value, from_ratio(3, 8));
    }

    #[test]
    fn conjugated_rotation() {
        let alpha = real(2).sqrt() - 1u32;
        let phi = CircleLift::sine(&real(0.5)).unwrap();
        let f = CircleLift::conjugate(&phi, &CircleLift::rotation(&alpha));
        let x = from_ratio(1, 3);
        let back = phi.inverse_d(&phi.apply(&x).unwrap()).unwrap().0;
        assert!(real(back - &x).abs() < 1e-60);
        let r = rotation_number(&f, 2000).unwrap();
        assert!(r.exact.is_none());
        assert!(real(&r.value - &alpha).abs() < 1e-8, "{}", r);
    }

    #[test]
    fn not_a_lift() {
        assert!(CircleLift::from_map(parse_map("2*x", Interval::unit()).unwrap()).is_err());
        assert!(CircleLift::sine(&real(1.5)).is_err());
        assert!(CircleLift::from_map(parse_map("x + sin(x)/10", Interval::unit()).unwrap()).is_err());
    }

    #[test]
    fn basis_examples() {
        let b = lattice_basis(&[q(1, 3), q(0, 1)]).unwrap();
        assert_eq!(b.columns, vec![ints(&[1, 0]), ints(&[0, 1])]);
        let rho = [q(1, 2), q(1, 2)];
        let b = lattice_basis(&rho).unwrap();
        assert_eq!(b.columns[0], ints(&[1, 0]));
        assert_eq!(b.columns[1], ints(&[-1, 1]));
        assert_eq!(b.determinant(), 1);
        assert_eq!(b.rho_of(1, &rho), 0);
        let b = lattice_basis(&[q(0, 1), q(0, 1), q(0, 1)]).unwrap();
        assert_eq!(b.columns, vec![ints(&[1, 0, 0]), ints(&[0, 1, 0]), ints(&[0, 0, 1])]);
    }

    #[test]
    fn basis_order_mismatch() {
        assert!(matches!(
            lattice_basis_of_order(&[q(1, 2), q(0, 1)], &Integer::from(4)),
            Err(Error::InconsistentTau(_))
        ));
        assert!(matches!(lattice_basis_of_order(&[q(1, 3)], &Integer::from(4)), Err(Error::InconsistentTau(_))));
    }

    #[test]
    fn parses_rationals() {
        assert_eq!(parse_rho("1/2, 0,-2/4").unwrap(), vec![q(1, 2), q(0, 1), q(-1, 2)]);
        assert!(parse_rho("1/0").is_err());
        assert!(parse_rho("a").is_err());
    }

    #[test]
    fn determinant_small() {
        assert_eq!(determinant(&[ints(&[2, 1]), ints(&[3, 4])]), 5);
        assert_eq!(determinant(&[ints(&[0, 1]), ints(&[1, 0])]), -1);
    }
}
