//! Inversion, iteration, fixed points and sampled norms.

use crate::error::{Error, Result};
use crate::jet::{Jet, K_MAX};
use crate::real::{chebyshev_lobatto, linspace, pow2, precision, real, ulp, zero, Real};

use super::{Diffeo, Interval, SmoothMap, ZeroSet};

/// Solves `f(x) = y` by Newton steps in displacement form, safeguarded by a bisection bracket.
pub fn invert_at<D: Diffeo + ?Sized>(f: &D, y: &Real) -> Result<Real> {
    let dom = f.domain();
    if !dom.contains_loose(y) {
        return Err(Error::Domain(format!("y = {} outside [{}, {}]", y, dom.lo, dom.hi)));
    }
    if *y <= dom.lo || *y >= dom.hi {
        return Ok(dom.clamp(y.clone()));
    }
    let mut lo = dom.lo.clone();
    let mut hi = dom.hi.clone();
    let d_y = f.displacement(y)?;
    let mut x = dom.clamp(real(y - &d_y));
    let cap = 64 + 4 * precision() as usize;
    let tiny = ulp();
    for _ in 0..cap {
        let j = f.disp_jet(&x, 1)?;
        let g = real(&x - y) + &j.coeffs[0];
        if g.is_zero() {
            return Ok(x);
        }
        if g.is_sign_positive() {
            hi = x.clone();
        } else {
            lo = x.clone();
        }
        let slope = real(&j.coeffs[1] + 1u32);
        let mut next = if slope > 0 { real(&x - real(&g / &slope)) } else { real(&lo + &hi) / 2u32 };
        if next <= lo || next >= hi {
            next = real(&lo + &hi) / 2u32;
        }
        let step = real(&next - &x).abs();
        let scale = real(x.abs_ref()).max(&tiny);
        x = next;
        if step <= real(&scale * &tiny) * 4u32 || hi <= lo {
            return Ok(x);
        }
    }
    Err(Error::NonConverged { what: format!("inverse at y = {}", y), iterations: cap })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum IterMode {
    Plain,
    /// `max(f^i(x), f^{-i}(x))`
    Plus,
    /// `min(f^i(x), f^{-i}(x))`
    Minus,
}

pub fn iterate<D: Diffeo + ?Sized>(f: &D, x: &Real, i: i64, mode: IterMode) -> Result<Real> {
    if i == 0 {
        return Ok(x.clone());
    }
    let fwd = |k: i64| -> Result<Real> { Ok(real(x + &f.iterate_disp_jet(x, k, 0)?.coeffs[0])) };
    match mode {
        IterMode::Plain => fwd(i),
        IterMode::Plus => Ok(fwd(i)?.max(&fwd(-i)?)),
        IterMode::Minus => Ok(fwd(i)?.min(&fwd(-i)?)),
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Contact {
    /// Index of the first nonvanishing Taylor coefficient of `f - id`.
    Order(u32),
    /// Declared infinitely flat.
    Flat,
    /// No coefficient up to the jet cap stands out from rounding.
    Unresolved,
}

#[derive(Clone, Debug)]
pub struct FixedPoint {
    pub at: Real,
    pub contact: Contact,
}

#[derive(Clone, Debug)]
pub struct FixedPointReport {
    pub points: Vec<FixedPoint>,
    /// Open components of the complement with the sign of `f - id` there.
    pub components: Vec<(Interval, i8)>,
    /// Set when unresolved clusters of fixed points were merged.
    pub low_confidence: bool,
    /// `f = id`: every point is fixed.
    pub identity: bool,
    pub resolution: usize,
}

impl FixedPointReport {
    pub fn component_of(&self, x: &Real) -> Option<&(Interval, i8)> {
        self.components.iter().find(|(c, _)| *x > c.lo && *x < c.hi)
    }

    pub fn is_fixed(&self, x: &Real) -> bool {
        self.identity || self.points.iter().any(|p| p.at == *x)
    }
}

/// Contact order from the jet of `f - id` at `p`, with `r` a local length scale.
pub fn contact_order<D: Diffeo + ?Sized>(f: &D, p: &Real, r: &Real, declared_flat: bool) -> Result<Contact> {
    if declared_flat {
        return Ok(Contact::Flat);
    }
    let j = f.disp_jet(p, K_MAX)?;
    let mut scaled = Vec::with_capacity(j.coeffs.len());
    let mut w = real(1);
    for c in &j.coeffs {
        scaled.push(real(c.abs_ref()) * &w);
        w *= r;
    }
    let top = scaled.iter().fold(zero(), |m, s| m.max(s));
    if top.is_zero() {
        return Ok(Contact::Unresolved);
    }
    let floor = top * pow2(-(precision() as i32) / 2);
    for (n, s) in scaled.iter().enumerate() {
        if *s > floor {
            return Ok(Contact::Order(n as u32));
        }
    }
    Ok(Contact::Unresolved)
}

fn sign_of(v: &Real) -> i8 {
    if v.is_zero() {
        0
    } else if v.is_sign_positive() {
        1
    } else {
        -1
    }
}

/// Refines a sign change of `f - id` on `[a, b]` to working precision.
fn refine<D: Diffeo + ?Sized>(f: &D, mut a: Real, mut b: Real, sa: i8) -> Result<Real> {
    for _ in 0..(2 * precision() as usize) {
        let m = real(&a + &b) / 2u32;
        if m <= a || m >= b {
            break;
        }
        let s = sign_of(&f.displacement(&m)?);
        if s == 0 {
            return Ok(m);
        }
        if s == sa {
            a = m;
        } else {
            b = m;
        }
    }
    Ok(a)
}

/// Fixed points of `f` with contact orders and the sign of `f - id` on each component.
pub fn fixed_points<D: Diffeo + ?Sized>(f: &D, resolution: usize) -> Result<FixedPointReport> {
    let resolution = resolution.max(2);
    let dom = f.domain();
    if f.is_identity() {
        return Ok(FixedPointReport {
            points: vec![],
            components: vec![],
            low_confidence: false,
            identity: true,
            resolution,
        });
    }
    let (flat_l, flat_r) = f.flats();
    let mut low_confidence = false;
    let mut locs: Vec<(Real, bool)> = Vec::new();
    let zs = f.zeros();
    if zs.is_known() {
        let spacing = real(dom.width()) / resolution as u32;
        let (all, truncated) = zs.zeros_in(&dom.lo, &dom.hi, 4 * resolution);
        low_confidence |= truncated;
        // Keep zeros separated by at least the grid spacing; merge the rest into the nearest flat one.
        let mut kept: Vec<(Real, bool)> = Vec::new();
        for z in all.iter().rev() {
            match kept.last() {
                Some((prev, _)) if real(prev - &z.at) < spacing && !z.flat => low_confidence = true,
                _ => kept.push((z.at.clone(), z.flat)),
            }
        }
        kept.reverse();
        if let ZeroSet::Harmonic { .. } = zs {
            if kept.first().map(|(p, _)| *p != dom.lo).unwrap_or(true) && dom.lo <= 0 {
                kept.insert(0, (zero(), true));
                low_confidence = true;
            }
        }
        locs = kept;
    } else {
        let grid = linspace(&dom.lo, &dom.hi, resolution + 1);
        let vals: Vec<Real> = grid.iter().map(|x| f.displacement(x)).collect::<Result<_>>()?;
        for i in 0..grid.len() {
            let s = sign_of(&vals[i]);
            if s == 0 {
                locs.push((grid[i].clone(), false));
                continue;
            }
            if i + 1 < grid.len() {
                let sn = sign_of(&vals[i + 1]);
                if sn != 0 && sn != s {
                    locs.push((refine(f, grid[i].clone(), grid[i + 1].clone(), s)?, false));
                }
            }
            // A sharp dip in |f - id| between two same-sign neighbours may hide a touching zero.
            if i > 0 && i + 1 < grid.len() && sign_of(&vals[i - 1]) == s && sign_of(&vals[i + 1]) == s {
                let m = real(vals[i].abs_ref());
                if m < real(vals[i - 1].abs_ref()) * pow2(-20) && m < real(vals[i + 1].abs_ref()) * pow2(-20) {
                    low_confidence = true;
                }
            }
        }
    }
    for end in [&dom.lo, &dom.hi] {
        if !locs.iter().any(|(p, _)| p == end) {
            locs.push((end.clone(), false));
        }
    }
    locs.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    locs.dedup_by(|a, b| a.0 == b.0);

    let mut points = Vec::with_capacity(locs.len());
    for (i, (p, flat)) in locs.iter().enumerate() {
        let declared = *flat || (flat_l && *p == dom.lo) || (flat_r && *p == dom.hi);
        let left = if i > 0 { real(p - &locs[i - 1].0) } else { dom.width() };
        let right = if i + 1 < locs.len() { real(&locs[i + 1].0 - p) } else { dom.width() };
        let r = left.min(&right) / 4u32;
        let contact = contact_order(f, p, &r, declared)?;
        points.push(FixedPoint { at: p.clone(), contact });
    }
    let mut components = Vec::new();
    for w in locs.windows(2) {
        let (a, b) = (&w[0].0, &w[1].0);
        let mid = real(a + b) / 2u32;
        let s = sign_of(&f.displacement(&mid)?);
        if s == 0 {
            low_confidence = true;
        }
        components.push((Interval::new(a.clone(), b.clone()), s));
    }
    Ok(FixedPointReport { points, components, low_confidence, identity: false, resolution })
}

#[derive(Clone, Debug)]
pub struct NormReport {
    pub value: Real,
    pub argmax: Real,
    /// Derivative order attaining the maximum.
    pub order: usize,
    pub grid: usize,
}

/// Sampled `max_{i ≤ k} sup_J |D^i m|` on a Chebyshev–Lobatto grid.
pub fn ck_norm_with<F>(jet: F, k: usize, j: &Interval, samples: usize) -> Result<NormReport>
where
    F: Fn(&Real, usize) -> Result<Jet>,
{
    let samples = samples.max(16);
    let pts = if j.width().is_zero() { vec![j.lo.clone()] } else { chebyshev_lobatto(&j.lo, &j.hi, samples) };
    let mut best = NormReport { value: zero(), argmax: j.lo.clone(), order: 0, grid: samples };
    for x in &pts {
        let jj = jet(x, k)?;
        for i in 0..=k {
            let v = jj.derivative(i).abs();
            if v > best.value {
                best.value = v;
                best.argmax = x.clone();
                best.order = i;
            }
        }
    }
    Ok(best)
}

pub fn ck_norm(m: &SmoothMap, k: usize, j: &Interval, samples: usize) -> Result<NormReport> {
    if !j.is_subset_of(&m.domain) {
        return Err(Error::Domain("norm interval not inside the map's domain".into()));
    }
    ck_norm_with(|x, o| m.eval_jet(x, o), k, j, samples)
}

/// Checks endpoint fixing and positivity of the derivative on a grid; returns the sampled
/// minimum of `Df`.
pub fn check_orientation<D: Diffeo + ?Sized>(f: &D, grid: usize) -> Result<Real> {
    let dom = f.domain();
    let tol = real(&ulp() * 1024u32);
    for end in [&dom.lo, &dom.hi] {
        let d = f.displacement(end)?;
        if real(d.abs_ref()) > tol {
            return Err(Error::Precondition(format!("endpoint {} is moved by {}", end, d)));
        }
    }
    let mut min = real(f64::INFINITY);
    for x in linspace(&dom.lo, &dom.hi, grid.max(1024)) {
        let j = f.disp_jet(&x, 1)?;
        let d = real(&j.coeffs[1] + 1u32);
        if d < min {
            min = d;
        }
    }
    if min <= 0 {
        return Err(Error::Precondition(format!("derivative not positive (min {})", min)));
    }
    Ok(min)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diffeo::{fixtures, ExprMap, Identity};
    use crate::real::{from_ratio, one, pi, rel_err};

    #[test]
    fn inversion_examples() {
        let id = Identity::unit();
        assert_eq!(invert_at(&id, &real(0.3)).unwrap(), real(0.3));
        let sq = ExprMap::parse("x^2", Interval::unit()).unwrap();
        let x = invert_at(&sq, &from_ratio(49, 100)).unwrap();
        assert!(rel_err(&x, &from_ratio(7, 10), 0.0) < 1e-70);
        let f = fixtures::logistic_time_map(&one());
        let y = f.apply(&from_ratio(1, 4)).unwrap();
        let x = invert_at(&f, &y).unwrap();
        assert!(rel_err(&x, &from_ratio(1, 4), 0.0) < 1e-70);
    }

    #[test]
    fn iterate_modes() {
        let f = fixtures::logistic_time_map(&one());
        let x = from_ratio(1, 4);
        assert_eq!(iterate(&f, &x, 0, IterMode::Plus).unwrap(), x);
        let e = one().exp();
        let fwd = real(&x * &e) / (real(0.75) + real(&x * &e));
        let back = real(&x / &e) / (real(0.75) + real(&x / &e));
        assert!(rel_err(&iterate(&f, &x, 1, IterMode::Plus).unwrap(), &fwd, 0.0) < 1e-45);
        assert!(rel_err(&iterate(&f, &x, 1, IterMode::Minus).unwrap(), &back, 0.0) < 1e-45);
        assert!((fwd.to_f64() - 0.47536).abs() < 1e-5);
        assert!((back.to_f64() - 0.10923).abs() < 1e-5);
    }

    #[test]
    fn logistic_fixed_points() {
        let f = fixtures::logistic_time_map(&one());
        let rep = fixed_points(&f, 64).unwrap();
        assert_eq!(rep.points.len(), 2);
        assert_eq!(rep.points[0].contact, Contact::Order(1));
        assert_eq!(rep.points[1].contact, Contact::Order(1));
        assert_eq!(rep.components.len(), 1);
        assert_eq!(rep.components[0].1, 1);
        let id = Identity::unit();
        assert!(fixed_points(&id, 64).unwrap().identity);
    }

    #[test]
    fn grid_scan_finds_interior_crossing() {
        // f(x) = x + x(1-x)(x-1/3)/4 has an interior fixed point at 1/3
        let f = ExprMap::parse("x + x*(1-x)*(x-0.3)/4", Interval::unit()).unwrap();
        let rep = fixed_points(&f, 50).unwrap();
        assert_eq!(rep.points.len(), 3);
        assert!(rel_err(&rep.points[1].at, &from_ratio(3, 10), 0.0) < 1e-45);
        assert_eq!(rep.components[0].1, -1);
        assert_eq!(rep.components[1].1, 1);
    }

    #[test]
    fn norm_examples() {
        let c = crate::diffeo::parse_map("2.5", Interval::unit()).unwrap();
        assert_eq!(ck_norm(&c, 3, &Interval::unit(), 16).unwrap().value, real(2.5));
        let sq = crate::diffeo::parse_map("x^2", Interval::unit()).unwrap();
        assert_eq!(ck_norm(&sq, 2, &Interval::unit(), 16).unwrap().value, real(2));
        let dom = Interval::new(zero(), pi());
        let s = crate::diffeo::parse_map("sin(x)", dom.clone()).unwrap();
        let n = ck_norm(&s, 1, &dom, 16).unwrap().value;
        assert!(real(n - 1u32).abs() < 1e-70);
    }

    #[test]
    fn orientation() {
        let f = fixtures::logistic_time_map(&one());
        assert!(check_orientation(&f, 1024).unwrap() > 0);
        let bad = ExprMap::parse("x + 0.1", Interval::unit()).unwrap();
        assert!(check_orientation(&bad, 1024).is_err());
    }
}
