//! Concrete diffeomorphism types.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::jet::Jet;
use crate::real::{one, real, Real};

use super::{compose_disp, Diffeo, DiffeoRef, FieldRef, Interval, SmoothMap, ZeroSet};

/// A diffeomorphism given by an expression.
#[derive(Clone, Debug)]
pub struct ExprMap {
    pub map: SmoothMap,
    pub zero_set: ZeroSet,
}

impl ExprMap {
    pub fn new(map: SmoothMap) -> ExprMap {
        ExprMap { map, zero_set: ZeroSet::Unknown }
    }

    pub fn with_zeros(mut self, zero_set: ZeroSet) -> ExprMap {
        self.zero_set = zero_set;
        self
    }

    pub fn parse(source: &str, domain: Interval) -> Result<ExprMap> {
        Ok(ExprMap::new(super::parse_map(source, domain)?))
    }
}

impl Diffeo for ExprMap {
    fn domain(&self) -> Interval {
        self.map.domain.clone()
    }

    fn disp_jet(&self, x: &Real, order: usize) -> Result<Jet> {
        if let Some(z) = self.zero_set.zero_at(x) {
            if z.flat {
                return Ok(Jet::zero(x, order));
            }
        }
        self.map.disp_jet(x, order)
    }

    fn flats(&self) -> (bool, bool) {
        (self.map.flat_left, self.map.flat_right)
    }

    fn zeros(&self) -> ZeroSet {
        self.zero_set.clone()
    }

    fn label(&self) -> String {
        self.map.source.clone()
    }
}

/// The time-`t` map of a vector field.
#[derive(Clone, Debug)]
pub struct FlowMap {
    pub field: FieldRef,
    pub t: Real,
}

impl FlowMap {
    pub fn new(field: FieldRef, t: Real) -> FlowMap {
        FlowMap { field, t }
    }
}

impl Diffeo for FlowMap {
    fn domain(&self) -> Interval {
        self.field.domain()
    }

    fn disp_jet(&self, x: &Real, order: usize) -> Result<Jet> {
        self.field.flow_disp_jet(x, &self.t, order)
    }

    fn inverse_disp_jet(&self, y: &Real, order: usize) -> Result<Jet> {
        self.field.flow_disp_jet(y, &real(-&self.t), order)
    }

    fn iterate_disp_jet(&self, x: &Real, k: i64, order: usize) -> Result<Jet> {
        self.field.flow_disp_jet(x, &real(&self.t * k), order)
    }

    fn flats(&self) -> (bool, bool) {
        self.field.flats()
    }

    fn zeros(&self) -> ZeroSet {
        if self.t.is_zero() {
            ZeroSet::Unknown
        } else {
            self.field.zeros()
        }
    }

    fn generator(&self) -> Option<(FieldRef, Real)> {
        Some((self.field.clone(), self.t.clone()))
    }

    fn is_identity(&self) -> bool {
        self.t.is_zero()
    }

    fn label(&self) -> String {
        format!("time-{} map of {}", self.t.to_f64(), self.field.label())
    }
}

/// `f^{-1}`.
#[derive(Clone, Debug)]
pub struct Inverse(pub DiffeoRef);

impl Diffeo for Inverse {
    fn domain(&self) -> Interval {
        self.0.domain()
    }

    fn disp_jet(&self, x: &Real, order: usize) -> Result<Jet> {
        self.0.inverse_disp_jet(x, order)
    }

    fn inverse_disp_jet(&self, y: &Real, order: usize) -> Result<Jet> {
        self.0.disp_jet(y, order)
    }

    fn iterate_disp_jet(&self, x: &Real, k: i64, order: usize) -> Result<Jet> {
        self.0.iterate_disp_jet(x, -k, order)
    }

    fn flats(&self) -> (bool, bool) {
        self.0.flats()
    }

    fn zeros(&self) -> ZeroSet {
        self.0.zeros()
    }

    fn generator(&self) -> Option<(FieldRef, Real)> {
        self.0.generator().map(|(f, t)| (f, -t))
    }

    fn is_identity(&self) -> bool {
        self.0.is_identity()
    }

    fn label(&self) -> String {
        format!("({})^-1", self.0.label())
    }
}

/// `outer ∘ inner`.
#[derive(Clone, Debug)]
pub struct Composite {
    pub outer: DiffeoRef,
    pub inner: DiffeoRef,
}

impl Composite {
    pub fn new(outer: DiffeoRef, inner: DiffeoRef) -> Result<Composite> {
        if outer.domain() != inner.domain() {
            return Err(Error::Precondition("composition of maps on different domains".into()));
        }
        Ok(Composite { outer, inner })
    }
}

impl Diffeo for Composite {
    fn domain(&self) -> Interval {
        self.inner.domain()
    }

    fn disp_jet(&self, x: &Real, order: usize) -> Result<Jet> {
        let a = self.inner.disp_jet(x, order)?;
        let y = real(x + &a.coeffs[0]);
        let b = self.outer.disp_jet(&y, order)?;
        Ok(compose_disp(&b, &a))
    }

    fn inverse_disp_jet(&self, y: &Real, order: usize) -> Result<Jet> {
        let a = self.outer.inverse_disp_jet(y, order)?;
        let z = real(y + &a.coeffs[0]);
        let b = self.inner.inverse_disp_jet(&z, order)?;
        Ok(compose_disp(&b, &a))
    }

    fn flats(&self) -> (bool, bool) {
        let (a, b) = self.outer.flats();
        let (c, d) = self.inner.flats();
        (a && c, b && d)
    }

    fn generator(&self) -> Option<(FieldRef, Real)> {
        let (f1, t1) = self.outer.generator()?;
        let (f2, t2) = self.inner.generator()?;
        if Arc::ptr_eq(&f1, &f2) {
            Some((f1, t1 + t2))
        } else {
            None
        }
    }

    fn is_identity(&self) -> bool {
        self.outer.is_identity() && self.inner.is_identity()
    }

    fn label(&self) -> String {
        format!("({}) o ({})", self.outer.label(), self.inner.label())
    }
}

/// `f^k` for an integer `k`.
#[derive(Clone, Debug)]
pub struct Iterate {
    pub base: DiffeoRef,
    pub k: i64,
}

impl Diffeo for Iterate {
    fn domain(&self) -> Interval {
        self.base.domain()
    }

    fn disp_jet(&self, x: &Real, order: usize) -> Result<Jet> {
        self.base.iterate_disp_jet(x, self.k, order)
    }

    fn inverse_disp_jet(&self, y: &Real, order: usize) -> Result<Jet> {
        self.base.iterate_disp_jet(y, -self.k, order)
    }

    fn iterate_disp_jet(&self, x: &Real, k: i64, order: usize) -> Result<Jet> {
        self.base.iterate_disp_jet(x, self.k * k, order)
    }

    fn flats(&self) -> (bool, bool) {
        self.base.flats()
    }

    fn zeros(&self) -> ZeroSet {
        if self.k == 0 {
            ZeroSet::Unknown
        } else {
            self.base.zeros()
        }
    }

    fn generator(&self) -> Option<(FieldRef, Real)> {
        self.base.generator().map(|(f, t)| (f, t * self.k))
    }

    fn is_identity(&self) -> bool {
        self.k == 0 || self.base.is_identity()
    }

    fn label(&self) -> String {
        format!("({})^{}", self.base.label(), self.k)
    }
}

/// The linear isotopy `(1-t)·id + t·h`.
#[derive(Clone, Debug)]
pub struct Isotopy {
    pub h: DiffeoRef,
    pub t: Real,
}

impl Diffeo for Isotopy {
    fn domain(&self) -> Interval {
        self.h.domain()
    }

    fn disp_jet(&self, x: &Real, order: usize) -> Result<Jet> {
        if self.t.is_zero() {
            return Ok(Jet::zero(x, order));
        }
        Ok(self.h.disp_jet(x, order)?.scale(&self.t))
    }

    fn flats(&self) -> (bool, bool) {
        self.h.flats()
    }

    fn zeros(&self) -> ZeroSet {
        if self.t.is_zero() {
            ZeroSet::Unknown
        } else {
            self.h.zeros()
        }
    }

    fn generator(&self) -> Option<(FieldRef, Real)> {
        if self.t == 1 {
            self.h.generator()
        } else {
            None
        }
    }

    fn is_identity(&self) -> bool {
        self.t.is_zero() || self.h.is_identity()
    }

    fn label(&self) -> String {
        format!("isotopy t={} of {}", self.t.to_f64(), self.h.label())
    }
}

#[derive(Clone, Debug)]
pub struct Identity {
    pub domain: Interval,
}

impl Identity {
    pub fn unit() -> Identity {
        Identity { domain: Interval::unit() }
    }
}

impl Diffeo for Identity {
    fn domain(&self) -> Interval {
        self.domain.clone()
    }

    fn disp_jet(&self, x: &Real, order: usize) -> Result<Jet> {
        Ok(Jet::zero(x, order))
    }

    fn inverse_disp_jet(&self, y: &Real, order: usize) -> Result<Jet> {
        Ok(Jet::zero(y, order))
    }

    fn iterate_disp_jet(&self, x: &Real, _k: i64, order: usize) -> Result<Jet> {
        Ok(Jet::zero(x, order))
    }

    fn flats(&self) -> (bool, bool) {
        (true, true)
    }

    fn is_identity(&self) -> bool {
        true
    }

    fn label(&self) -> String {
        "id".into()
    }
}

/// `h_b^{-1} ∘ f ∘ h_b` on `[0,1]` with `h_b(y) = (1-b)y + b`, for `f` preserving `[b, 1]`.
#[derive(Clone, Debug)]
pub struct Conjugated {
    pub inner: DiffeoRef,
    pub b: Real,
}

impl Conjugated {
    fn to_inner(&self, y: &Real) -> Real {
        real(&one() - &self.b) * y + &self.b
    }

    fn pull(&self, d: Jet, y: &Real) -> Jet {
        let s = real(&one() - &self.b);
        let mut c = d.coeffs;
        let mut w = real(s.recip_ref());
        for ci in c.iter_mut() {
            *ci *= &w;
            w *= &s;
        }
        Jet::new(y.clone(), c)
    }
}

impl Diffeo for Conjugated {
    fn domain(&self) -> Interval {
        Interval::unit()
    }

    fn disp_jet(&self, y: &Real, order: usize) -> Result<Jet> {
        let d = self.inner.disp_jet(&self.to_inner(y), order)?;
        Ok(self.pull(d, y))
    }

    fn inverse_disp_jet(&self, y: &Real, order: usize) -> Result<Jet> {
        let d = self.inner.inverse_disp_jet(&self.to_inner(y), order)?;
        Ok(self.pull(d, y))
    }

    fn iterate_disp_jet(&self, y: &Real, k: i64, order: usize) -> Result<Jet> {
        let d = self.inner.iterate_disp_jet(&self.to_inner(y), k, order)?;
        Ok(self.pull(d, y))
    }

    fn flats(&self) -> (bool, bool) {
        (false, self.inner.flats().1)
    }

    fn label(&self) -> String {
        format!("rescaled [{}, 1] of {}", self.b.to_f64(), self.inner.label())
    }
}

/// Conjugation by the reflection `x ↦ lo + hi - x` of the domain.
#[derive(Clone, Debug)]
pub struct Reflected {
    pub inner: DiffeoRef,
}

impl Reflected {
    fn mirror(&self, x: &Real) -> Real {
        let d = self.inner.domain();
        real(&d.lo + &d.hi) - x
    }

    fn pull(d: Jet, x: &Real) -> Jet {
        let c = d.coeffs.into_iter().enumerate().map(|(n, c)| if n % 2 == 0 { -c } else { c }).collect();
        Jet::new(x.clone(), c)
    }
}

impl Diffeo for Reflected {
    fn domain(&self) -> Interval {
        self.inner.domain()
    }

    fn disp_jet(&self, x: &Real, order: usize) -> Result<Jet> {
        Ok(Reflected::pull(self.inner.disp_jet(&self.mirror(x), order)?, x))
    }

    fn inverse_disp_jet(&self, y: &Real, order: usize) -> Result<Jet> {
        Ok(Reflected::pull(self.inner.inverse_disp_jet(&self.mirror(y), order)?, y))
    }

    fn iterate_disp_jet(&self, x: &Real, k: i64, order: usize) -> Result<Jet> {
        Ok(Reflected::pull(self.inner.iterate_disp_jet(&self.mirror(x), k, order)?, x))
    }

    fn flats(&self) -> (bool, bool) {
        let (l, r) = self.inner.flats();
        (r, l)
    }

    fn zeros(&self) -> ZeroSet {
        match self.inner.zeros() {
            ZeroSet::Finite(zs) => {
                ZeroSet::Finite(zs.into_iter().rev().map(|z| super::Zero { at: self.mirror(&z.at), ..z }).collect())
            }
            _ => ZeroSet::Unknown,
        }
    }

    fn is_identity(&self) -> bool {
        self.inner.is_identity()
    }

    fn label(&self) -> String {
        format!("reflection of {}", self.inner.label())
    }
}
