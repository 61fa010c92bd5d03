//! Smooth maps, vector fields and diffeomorphisms of a closed interval.

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::expr::{self, Expr};
use crate::jet::{series, Jet};
use crate::real::{one, real, ulp, zero, Real};

pub mod analysis;
pub mod fixtures;
pub mod flow;
pub mod maps;

pub use analysis::{
    check_orientation, ck_norm, ck_norm_with, fixed_points, invert_at, iterate, Contact, FixedPoint, FixedPointReport,
    IterMode, NormReport,
};
pub use flow::{flow_map, FlowOptions};
pub use maps::{Composite, Conjugated, ExprMap, FlowMap, Identity, Inverse, Isotopy, Iterate, Reflected};

#[derive(Clone, Debug, PartialEq)]
pub struct Interval {
    pub lo: Real,
    pub hi: Real,
}

impl Interval {
    pub fn new(lo: Real, hi: Real) -> Interval {
        assert!(lo <= hi, "interval endpoints out of order");
        Interval { lo, hi }
    }

    pub fn unit() -> Interval {
        Interval::new(zero(), one())
    }

    pub fn width(&self) -> Real {
        real(&self.hi - &self.lo)
    }

    pub fn contains(&self, x: &Real) -> bool {
        *x >= self.lo && *x <= self.hi
    }

    /// Membership up to a relative slack of a few ulps.
    pub fn contains_loose(&self, x: &Real) -> bool {
        let slack = real(&ulp() * 64u32) * (real(self.width()) + 1u32);
        *x >= real(&self.lo - &slack) && *x <= real(&self.hi + &slack)
    }

    pub fn clamp(&self, x: Real) -> Real {
        if x < self.lo {
            self.lo.clone()
        } else if x > self.hi {
            self.hi.clone()
        } else {
            x
        }
    }

    pub fn is_subset_of(&self, other: &Interval) -> bool {
        self.lo >= other.lo && self.hi <= other.hi
    }
}

/// A known zero of a vector field (equivalently a fixed point of its flow).
#[derive(Clone, Debug, PartialEq)]
pub struct Zero {
    pub at: Real,
    /// Order of vanishing; ignored when `flat` is set.
    pub multiplicity: u32,
    pub flat: bool,
}

/// Analytic declaration of the zero set of a field.
#[derive(Clone, Debug, PartialEq)]
pub enum ZeroSet {
    Unknown,
    Finite(Vec<Zero>),
    /// Zeros at `1/n` for every `n >= 1`, each of the given multiplicity, accumulating at a
    /// flat zero at `0`.
    Harmonic {
        multiplicity: u32,
    },
}

impl ZeroSet {
    pub fn is_known(&self) -> bool {
        !matches!(self, ZeroSet::Unknown)
    }

    /// The zero at `x`, if `x` is (to within rounding) one of the declared zeros.
    pub fn zero_at(&self, x: &Real) -> Option<Zero> {
        match self {
            ZeroSet::Unknown => None,
            ZeroSet::Finite(zs) => zs.iter().find(|z| z.at == *x).cloned(),
            ZeroSet::Harmonic { multiplicity } => {
                if x.is_zero() {
                    return Some(Zero { at: zero(), multiplicity: 0, flat: true });
                }
                if *x <= 0 || *x > 1 {
                    return None;
                }
                let n = real(x.recip_ref()).round();
                let at = real(n.recip_ref());
                if at == *x {
                    Some(Zero { at, multiplicity: *multiplicity, flat: false })
                } else {
                    None
                }
            }
        }
    }

    /// Declared zeros inside `[lo, hi]`, at most `limit` of them (largest first for the
    /// harmonic family).
    pub fn zeros_in(&self, lo: &Real, hi: &Real, limit: usize) -> (Vec<Zero>, bool) {
        match self {
            ZeroSet::Unknown => (vec![], false),
            ZeroSet::Finite(zs) => {
                let v: Vec<Zero> = zs.iter().filter(|z| z.at >= *lo && z.at <= *hi).cloned().collect();
                (v, false)
            }
            ZeroSet::Harmonic { multiplicity } => {
                let mut out = Vec::new();
                let mut truncated = false;
                let start = if *hi >= 1 { 1u64 } else { real(hi.recip_ref()).ceil().to_f64() as u64 };
                let mut n = start.max(1);
                loop {
                    let at = real(1) / n;
                    if at < *lo {
                        break;
                    }
                    if at <= *hi {
                        if out.len() >= limit {
                            truncated = true;
                            break;
                        }
                        out.push(Zero { at, multiplicity: *multiplicity, flat: false });
                    }
                    n += 1;
                }
                if *lo <= 0 && *hi >= 0 && !truncated {
                    out.push(Zero { at: zero(), multiplicity: 0, flat: true });
                }
                out.reverse();
                (out, truncated)
            }
        }
    }

    /// The open interval between consecutive declared zeros that contains `x`.
    pub fn component_of(&self, x: &Real, domain: &Interval) -> Option<Interval> {
        if self.zero_at(x).is_some() {
            return None;
        }
        match self {
            ZeroSet::Unknown => None,
            ZeroSet::Finite(zs) => {
                let mut a = domain.lo.clone();
                let mut b = domain.hi.clone();
                for z in zs {
                    if z.at < *x && z.at > a {
                        a = z.at.clone();
                    }
                    if z.at > *x && z.at < b {
                        b = z.at.clone();
                    }
                }
                Some(Interval::new(a, b))
            }
            ZeroSet::Harmonic { .. } => {
                if *x <= 0 || *x >= 1 {
                    return None;
                }
                let n = real(x.recip_ref()).floor();
                let b = real(n.recip_ref());
                let a = real(1) / (n + 1u32);
                Some(Interval::new(a, b))
            }
        }
    }
}

/// A smooth function on a closed interval given by an expression tree.
#[derive(Clone, Debug)]
pub struct SmoothMap {
    pub expr: Expr,
    disp: Option<Expr>,
    pub domain: Interval,
    pub flat_left: bool,
    pub flat_right: bool,
    pub source: String,
}

impl SmoothMap {
    pub fn from_expr(expr: Expr, domain: Interval) -> SmoothMap {
        let disp = expr.displacement_part();
        let source = expr.to_string();
        SmoothMap { expr, disp, domain, flat_left: false, flat_right: false, source }
    }

    pub fn with_flats(mut self, left: bool, right: bool) -> SmoothMap {
        self.flat_left = left;
        self.flat_right = right;
        self
    }

    pub fn with_source(mut self, source: impl Into<String>) -> SmoothMap {
        self.source = source.into();
        self
    }

    fn check_domain(&self, x: &Real) -> Result<()> {
        if self.domain.contains_loose(x) {
            Ok(())
        } else {
            Err(Error::Domain(format!("x = {} outside [{}, {}]", x, self.domain.lo, self.domain.hi)))
        }
    }

    pub fn eval(&self, x: &Real) -> Result<Real> {
        self.check_domain(x)?;
        self.expr.eval(x)
    }

    /// Jet at `x`; exact zero jets at endpoints declared flat.
    pub fn eval_jet(&self, x: &Real, order: usize) -> Result<Jet> {
        self.check_domain(x)?;
        if (self.flat_left && *x == self.domain.lo) || (self.flat_right && *x == self.domain.hi) {
            return Ok(Jet::zero(x, order));
        }
        self.expr.eval_jet(&Jet::variable(x, order))
    }

    /// `m(x) - x`, evaluated without cancellation when the expression reads `x + r`.
    pub fn displacement(&self, x: &Real) -> Result<Real> {
        self.check_domain(x)?;
        match &self.disp {
            Some(d) => d.eval(x),
            None => Ok(self.expr.eval(x)? - x),
        }
    }

    /// Jet of `m - id` at `x`; exact zero at endpoints declared flat.
    pub fn disp_jet(&self, x: &Real, order: usize) -> Result<Jet> {
        self.check_domain(x)?;
        if (self.flat_left && *x == self.domain.lo) || (self.flat_right && *x == self.domain.hi) {
            return Ok(Jet::zero(x, order));
        }
        let var = Jet::variable(x, order);
        match &self.disp {
            Some(d) => d.eval_jet(&var),
            None => self.expr.eval_jet(&var)?.sub(&var),
        }
    }
}

/// Parses `source` as a smooth map on `domain`.
pub fn parse_map(source: &str, domain: Interval) -> Result<SmoothMap> {
    let e = expr::parse(source)?;
    Ok(SmoothMap::from_expr(e, domain).with_source(source))
}

/// A vector field on an interval, in the one-dimensional chart convention.
pub trait Field: Send + Sync + fmt::Debug {
    fn domain(&self) -> Interval;

    /// Jet of the field at `x`.
    fn jet(&self, x: &Real, order: usize) -> Result<Jet>;

    fn value(&self, x: &Real) -> Result<Real> {
        Ok(self.jet(x, 0)?.coeffs[0].clone())
    }

    fn zeros(&self) -> ZeroSet {
        ZeroSet::Unknown
    }

    /// Whether all jets vanish at the left / right endpoint.
    fn flats(&self) -> (bool, bool) {
        (false, false)
    }

    /// Jet of `φ^t - id` at `x`.
    fn flow_disp_jet(&self, x: &Real, t: &Real, order: usize) -> Result<Jet> {
        flow::integrate(self, x, t, order, &FlowOptions::default())
    }

    fn label(&self) -> String;
}

pub type FieldRef = Arc<dyn Field>;

/// Expression-defined vector field with declared zeros.
#[derive(Clone, Debug)]
pub struct VectorField {
    pub map: SmoothMap,
    pub zero_set: ZeroSet,
}

impl VectorField {
    pub fn new(map: SmoothMap, zero_set: ZeroSet) -> VectorField {
        VectorField { map, zero_set }
    }

    pub fn parse(source: &str, domain: Interval) -> Result<VectorField> {
        Ok(VectorField::new(parse_map(source, domain)?, ZeroSet::Unknown))
    }
}

impl Field for VectorField {
    fn domain(&self) -> Interval {
        self.map.domain.clone()
    }

    fn jet(&self, x: &Real, order: usize) -> Result<Jet> {
        if let Some(z) = self.zero_set.zero_at(x) {
            if z.flat {
                return Ok(Jet::zero(x, order));
            }
        }
        self.map.eval_jet(x, order)
    }

    fn zeros(&self) -> ZeroSet {
        self.zero_set.clone()
    }

    fn flats(&self) -> (bool, bool) {
        (self.map.flat_left, self.map.flat_right)
    }

    fn label(&self) -> String {
        self.map.source.clone()
    }
}

/// An orientation-preserving diffeomorphism of a closed interval.
pub trait Diffeo: Send + Sync + fmt::Debug {
    fn domain(&self) -> Interval;

    /// Jet of `f - id` at `x`.
    fn disp_jet(&self, x: &Real, order: usize) -> Result<Jet>;

    /// Jet of `f^{-1} - id` at `y`.
    fn inverse_disp_jet(&self, y: &Real, order: usize) -> Result<Jet> {
        let x = analysis::invert_at(self, y)?;
        let d = self.disp_jet(&x, order)?;
        Ok(invert_disp(&d, y))
    }

    /// Jet of `f^k - id` at `x` (negative `k` iterates the inverse).
    fn iterate_disp_jet(&self, x: &Real, k: i64, order: usize) -> Result<Jet> {
        let mut acc = Jet::zero(x, order);
        let mut y = x.clone();
        for _ in 0..k.unsigned_abs() {
            let step = if k > 0 { self.disp_jet(&y, order)? } else { self.inverse_disp_jet(&y, order)? };
            acc = compose_disp(&step, &acc);
            y = real(x + &acc.coeffs[0]);
        }
        Ok(acc)
    }

    /// Declared flatness of `f - id` at the endpoints.
    fn flats(&self) -> (bool, bool) {
        (false, false)
    }

    /// Declared fixed-point set.
    fn zeros(&self) -> ZeroSet {
        ZeroSet::Unknown
    }

    /// `(ξ, t)` when the map is the time-`t` map of the field `ξ`.
    fn generator(&self) -> Option<(FieldRef, Real)> {
        None
    }

    fn is_identity(&self) -> bool {
        false
    }

    fn label(&self) -> String;

    fn displacement(&self, x: &Real) -> Result<Real> {
        Ok(self.disp_jet(x, 0)?.coeffs[0].clone())
    }

    fn apply(&self, x: &Real) -> Result<Real> {
        Ok(real(x + self.displacement(x)?))
    }

    fn jet(&self, x: &Real, order: usize) -> Result<Jet> {
        Ok(disp_to_map(&self.disp_jet(x, order)?))
    }
}

pub type DiffeoRef = Arc<dyn Diffeo>;

/// Jet of a map from the jet of its displacement.
pub fn disp_to_map(d: &Jet) -> Jet {
    let mut j = d.clone();
    j.coeffs[0] += &d.base;
    if j.order() >= 1 {
        j.coeffs[1] += 1u32;
    }
    j
}

/// Displacement jet from the jet of a map.
pub fn map_to_disp(m: &Jet) -> Jet {
    let mut j = m.clone();
    j.coeffs[0] -= &m.base;
    if j.order() >= 1 {
        j.coeffs[1] -= 1u32;
    }
    j
}

/// Displacement jet of `b ∘ a` at `x` from the displacement jets of `a` at `x` and of `b`
/// at `a(x)`. Constant and linear terms are formed without cancellation.
pub fn compose_disp(outer: &Jet, inner: &Jet) -> Jet {
    let p = inner.order();
    let mut d = inner.coeffs.clone();
    d[0] = zero();
    if p >= 1 {
        d[1] += 1u32;
    }
    let mut c = series::compose_shifted(&outer.coeffs, &d);
    for (ci, ai) in c.iter_mut().zip(&inner.coeffs) {
        *ci += ai;
    }
    Jet::new(inner.base.clone(), c)
}

/// Displacement jet of `f^{-1}` at `y = f(z)` from the displacement jet of `f` at `z`.
pub fn invert_disp(d: &Jet, y: &Real) -> Jet {
    let map = disp_to_map(d);
    let mut inv = match map.invert() {
        Ok(j) => j,
        Err(_) => return Jet::zero(y, d.order()),
    };
    inv.base = y.clone();
    inv.coeffs[0] = real(-&d.coeffs[0]);
    if d.order() >= 1 {
        let den = real(&d.coeffs[1] + 1u32);
        inv.coeffs[1] = real(-&d.coeffs[1]) / den;
    }
    inv
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::real::from_ratio;

    #[test]
    fn harmonic_components() {
        let z = ZeroSet::Harmonic { multiplicity: 2 };
        let c = z.component_of(&real(0.3), &Interval::unit()).unwrap();
        assert_eq!(c.lo, from_ratio(1, 4));
        assert_eq!(c.hi, from_ratio(1, 3));
        assert!(z.zero_at(&from_ratio(1, 5)).is_some());
        let (zs, truncated) = z.zeros_in(&from_ratio(1, 100), &one(), 1000);
        assert_eq!(zs.len(), 100);
        assert!(!truncated);
    }

    #[test]
    fn displacement_composition_matches_plain_composition() {
        let f = parse_map("x + x^2/4", Interval::unit()).unwrap();
        let x = real(0.3);
        let a = f.disp_jet(&x, 3).unwrap();
        let y = real(&x + &a.coeffs[0]);
        let b = f.disp_jet(&y, 3).unwrap();
        let via_disp = disp_to_map(&compose_disp(&b, &a));
        let direct = Jet::compose(&disp_to_map(&b), &disp_to_map(&a)).unwrap();
        for (u, v) in via_disp.coeffs.iter().zip(&direct.coeffs) {
            assert!(real(u - v).abs() < 1e-70);
        }
    }
}
