//! Szekeres vector fields, translation numbers and classification of commuting pairs.
//!
//! On a component `(a, b)` of the complement of `Fix(f)` let `g = f^{∓1}`, the branch moving
//! points toward `a`. The field is recovered as the limit of pullbacks `(g^k)^* ν` of a local
//! model `ν` near `a`:
//!
//! * at a hyperbolic end (`Df(a) ≠ 1`) the model is `τ_a·(f - id)`, as in the classical formula;
//! * at a tangent end (`Df(a) = 1`) it is the order-`2m` central difference
//!   `Σ c_j (f^j - f^{-j})`, whose error is far below the working precision once the orbit is
//!   deep in the slow region near `a`.
//!
//! The number of orbit steps `k` is doubled until two successive estimates agree to `rel_tol`
//! and the change is non-increasing.

use std::collections::HashMap;
use std::fmt;
use std::sync::{Arc, Mutex};

use rug::Integer;

use crate::diffeo::{
    compose_disp, disp_to_map, fixed_points, invert_disp, Diffeo, DiffeoRef, Field, FixedPointReport, Interval, ZeroSet,
};
use crate::error::{Error, Result};
use crate::estimates::poly::recursion_levels;
use crate::jet::Jet;
use crate::real::{one, pow2, precision, real, zero, Real};

pub mod classify;
pub mod flow;

pub use classify::{classify_pair, commutation_residual, path_to_identity, ClassifyOptions, PairClassification};
pub use flow::{translation_time, SzekeresFlow};

#[derive(Clone, Debug)]
pub struct SzekeresOptions {
    pub k_max: usize,
    pub rel_tol: Real,
    /// Half-width `m` of the time stencil used at tangent ends.
    pub half_width: usize,
    /// Grid resolution for the fixed-point scan.
    pub resolution: usize,
}

impl Default for SzekeresOptions {
    fn default() -> Self {
        SzekeresOptions { k_max: 10_000, rel_tol: pow2(-(precision() as i32) / 2), half_width: 16, resolution: 256 }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum EndKind {
    Hyperbolic { df: Real, log_df: Real, tau: Real },
    Tangent,
}

/// A component `(a, b)` of the complement of the fixed-point set.
#[derive(Clone, Debug)]
pub struct Component {
    pub a: Real,
    pub b: Real,
    /// Sign of `f - id` on the component; positive means `g = f^{-1}`.
    pub sign: i8,
    pub end: EndKind,
}

impl Component {
    /// `log Df(a)`, the constant term of the derivative series.
    pub fn c1(&self) -> Real {
        match &self.end {
            EndKind::Hyperbolic { log_df, .. } => log_df.clone(),
            EndKind::Tangent => zero(),
        }
    }

    pub fn tau(&self) -> Real {
        match &self.end {
            EndKind::Hyperbolic { tau, .. } => tau.clone(),
            EndKind::Tangent => one(),
        }
    }
}

#[derive(Clone, Debug)]
pub struct Evaluation {
    pub jet: Jet,
    /// Orbit length at which the estimate converged (0 on the fixed-point set).
    pub iterations: usize,
}

/// Values of the series quantities at one point, all indexed from 1.
#[derive(Clone, Debug)]
pub struct SeriesValues {
    pub xi: Real,
    /// `μ_j = ξ^{j-1} D^j ξ`.
    pub mu: Vec<Real>,
    /// `Φ_j = (L_ξ)^{j-1} Dξ` from the partial sums plus the tail.
    pub big_phi: Vec<Real>,
    /// `φ_j` at the point.
    pub small_phi: Vec<Real>,
    /// Tail `Φ_j(g^k(x))` used to close each series.
    pub tail: Vec<Real>,
    /// Partial sums `Σ_{i<k} φ_j(g^i x)` (without tail).
    pub partial: Vec<Real>,
    /// Summands `φ_n(g^i x)` of the top level, and the orbit differences `g^i x - g^{i+1} x`.
    pub summands: Vec<Real>,
    pub gaps: Vec<Real>,
    pub iterations: usize,
}

pub struct SzekeresField {
    f: DiffeoRef,
    report: FixedPointReport,
    pub opts: SzekeresOptions,
    weights: Vec<Real>,
    ends: Mutex<Vec<(Real, EndKind)>>,
    cache: Mutex<HashMap<(String, usize), Evaluation>>,
}

impl fmt::Debug for SzekeresField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "SzekeresField({})", self.f.label())
    }
}

/// Weights `c_j`, `j = 1..m`, of the order-`2m` central difference `F'(0) ≈ Σ c_j (F(j) - F(-j))`.
pub fn central_weights(m: usize) -> Vec<Real> {
    let fact = |n: usize| Integer::from(Integer::factorial(n as u32));
    let mm = fact(m);
    (1..=m)
        .map(|j| {
            let num = Integer::from(&mm * &mm);
            let den = Integer::from(fact(m - j) * fact(m + j)) * j as u32;
            let w = real(&num) / real(&den);
            if j % 2 == 1 {
                w
            } else {
                -w
            }
        })
        .collect()
}

/// Lagrange basis values at `t` for the integer nodes `-m..=m`.
pub fn lagrange_weights(m: usize, t: &Real) -> Vec<Real> {
    let nodes: Vec<i64> = (-(m as i64)..=m as i64).collect();
    nodes
        .iter()
        .map(|&j| {
            let mut w = one();
            for &i in &nodes {
                if i != j {
                    w *= real(t - i);
                    w /= j - i;
                }
            }
            w
        })
        .collect()
}

fn key(x: &Real) -> String {
    x.to_string_radix(16, None)
}

/// Scale-aware size of a jet: `max_n |c_n| ℓ^n`.
fn binomial(n: usize, k: usize) -> Real {
    let mut b = one();
    for i in 0..k {
        b = b * (n - i) as u32 / (i + 1) as u32;
    }
    b
}

pub(crate) fn jet_size(c: &[Real], ell: &Real) -> Real {
    let mut w = one();
    let mut best = zero();
    for ci in c {
        let v = real(ci.abs_ref()) * &w;
        if v > best {
            best = v;
        }
        w *= ell;
    }
    best
}

pub(crate) fn jet_change(a: &[Real], b: &[Real], ell: &Real) -> Real {
    let d: Vec<Real> = a.iter().zip(b).map(|(x, y)| real(x - y)).collect();
    let size = jet_size(a, ell);
    if size.is_zero() {
        return jet_size(&d, ell);
    }
    jet_size(&d, ell) / size
}

/// Walk `x_{i+1} = g(x_i)` with jets of `g` at each point and of `g^i` at `x_0`.
pub(crate) struct Orbit {
    pub comp: Component,
    pub order: usize,
    pub xs: Vec<Real>,
    pub steps: Vec<Jet>,
    /// Map jets of `g^i` at `x_0`; kept in map form since `Dg^i` may be far from 1.
    pub acc: Vec<Jet>,
}

impl Orbit {
    pub(crate) fn new(comp: Component, x: &Real, order: usize) -> Orbit {
        Orbit { comp, order, xs: vec![x.clone()], steps: vec![], acc: vec![Jet::variable(x, order)] }
    }

    pub(crate) fn ensure(&mut self, field: &SzekeresField, n: usize) -> Result<()> {
        while self.xs.len() <= n {
            let i = self.xs.len() - 1;
            let s = field.g_step(&self.comp, &self.xs[i], self.order)?;
            let next = real(&self.xs[i] + &s.coeffs[0]);
            let acc = Jet::compose_unchecked(&disp_to_map(&s), &self.acc[i]);
            self.steps.push(s);
            self.xs.push(next);
            self.acc.push(acc);
        }
        Ok(())
    }

    /// Displacement jets at `x_k` of `g^j` and `g^{-j}` for `j = 1..=m`, truncated to `p`.
    pub(crate) fn local_iterates(&self, k: usize, m: usize, p: usize) -> (Vec<Jet>, Vec<Jet>) {
        let mut fwd = Vec::with_capacity(m);
        let mut acc = self.steps[k].truncate(p);
        fwd.push(acc.clone());
        for j in 1..m {
            acc = compose_disp(&self.steps[k + j].truncate(p), &acc);
            fwd.push(acc.clone());
        }
        let mut back = Vec::with_capacity(m);
        let mut chain = self.steps[k - 1].truncate(p);
        back.push(invert_disp(&chain, &self.xs[k]));
        for j in 2..=m {
            chain = compose_disp(&chain, &self.steps[k - j].truncate(p));
            back.push(invert_disp(&chain, &self.xs[k]));
        }
        (fwd, back)
    }
}

impl SzekeresField {
    pub fn new(f: DiffeoRef, opts: SzekeresOptions) -> Result<SzekeresField> {
        let report = fixed_points(f.as_ref(), opts.resolution)?;
        let weights = central_weights(opts.half_width);
        Ok(SzekeresField { f, report, opts, weights, ends: Mutex::new(Vec::new()), cache: Mutex::new(HashMap::new()) })
    }

    pub fn of(f: DiffeoRef) -> Result<Arc<SzekeresField>> {
        Ok(Arc::new(SzekeresField::new(f, SzekeresOptions::default())?))
    }

    pub fn source(&self) -> &DiffeoRef {
        &self.f
    }

    pub fn report(&self) -> &FixedPointReport {
        &self.report
    }

    pub fn is_fixed(&self, x: &Real) -> Result<bool> {
        if self.report.identity {
            return Ok(true);
        }
        if self.f.zeros().zero_at(x).is_some() || self.report.is_fixed(x) {
            return Ok(true);
        }
        Ok(self.f.displacement(x)?.is_zero())
    }

    pub(crate) fn declared_flat_at(&self, a: &Real) -> bool {
        let dom = self.f.domain();
        let (l, r) = self.f.flats();
        if (l && *a == dom.lo) || (r && *a == dom.hi) {
            return true;
        }
        matches!(self.f.zeros().zero_at(a), Some(z) if z.flat)
    }

    pub fn end_kind(&self, a: &Real) -> Result<EndKind> {
        if let Some((_, e)) = self.ends.lock().unwrap().iter().find(|(p, _)| p == a) {
            return Ok(e.clone());
        }
        let kind = if self.declared_flat_at(a) {
            EndKind::Tangent
        } else {
            let c1 = self.f.disp_jet(a, 1)?.coeffs[1].clone();
            if real(c1.abs_ref()) <= pow2(-(precision() as i32) / 2) {
                EndKind::Tangent
            } else {
                let log_df = real(c1.ln_1p_ref());
                let tau = real(&log_df / &c1);
                EndKind::Hyperbolic { df: c1 + 1u32, log_df, tau }
            }
        };
        self.ends.lock().unwrap().push((a.clone(), kind.clone()));
        Ok(kind)
    }

    /// The component containing `x`, or `None` on the fixed-point set.
    pub fn component(&self, x: &Real) -> Result<Option<Component>> {
        if self.is_fixed(x)? {
            return Ok(None);
        }
        let dom = self.f.domain();
        let zs = self.f.zeros();
        let iv = if zs.is_known() && !matches!(zs, ZeroSet::Finite(ref v) if v.is_empty()) {
            zs.component_of(x, &dom)
        } else {
            self.report.component_of(x).map(|(c, _)| c.clone())
        };
        let Some(iv) = iv else {
            return Err(Error::Precondition(format!("no component found for x = {}", x)));
        };
        let d = self.f.displacement(x)?;
        let sign = if d.is_sign_positive() { 1 } else { -1 };
        let end = self.end_kind(&iv.lo)?;
        Ok(Some(Component { a: iv.lo, b: iv.hi, sign, end }))
    }

    /// The degenerate component used at a fixed point `p` that is not declared flat.
    pub(crate) fn fixed_point_component(&self, p: &Real) -> Result<Component> {
        let end = self.end_kind(p)?;
        let sign = match &end {
            // contract toward p: g = f^{-1} when Df(p) > 1
            EndKind::Hyperbolic { df, .. } => {
                if *df > 1 {
                    1
                } else {
                    -1
                }
            }
            EndKind::Tangent => 1,
        };
        Ok(Component { a: p.clone(), b: p.clone(), sign, end })
    }

    pub(crate) fn g_step(&self, c: &Component, y: &Real, order: usize) -> Result<Jet> {
        if c.sign > 0 {
            self.f.inverse_disp_jet(y, order)
        } else {
            self.f.disp_jet(y, order)
        }
    }

    pub(crate) fn g_inv_step(&self, c: &Component, y: &Real, order: usize) -> Result<Jet> {
        if c.sign > 0 {
            self.f.disp_jet(y, order)
        } else {
            self.f.inverse_disp_jet(y, order)
        }
    }

    pub(crate) fn stencil(&self, c: &Component) -> usize {
        match c.end {
            EndKind::Tangent => self.opts.half_width,
            EndKind::Hyperbolic { .. } => 0,
        }
    }

    /// Next orbit length after `k`: doubled, but held where `x_k - a` is still resolved relative
    /// to `a`. `None` when neither `k_max` nor the precision allows progress.
    pub(crate) fn next_k(&self, orbit: &mut Orbit, k: usize, m: usize) -> Result<Option<usize>> {
        let target = 2 * k;
        if target > self.opts.k_max {
            return Ok(None);
        }
        orbit.ensure(self, target + m)?;
        let a = &orbit.comp.a;
        if a.is_zero() || orbit.comp.a == orbit.comp.b {
            return Ok(Some(target));
        }
        let floor = real(a.abs_ref()) * pow2(-(precision() as i32) / 2);
        let mut cap = target;
        while cap > k && real(&orbit.xs[cap + m] - a).abs() < floor {
            cap -= 1;
        }
        Ok(if cap > k { Some(cap) } else { None })
    }

    /// Jet of the local model at `x_k`, order `p`.
    pub(crate) fn local_model(&self, orbit: &Orbit, k: usize, p: usize) -> Result<Jet> {
        match &orbit.comp.end {
            EndKind::Hyperbolic { tau, .. } => Ok(self.f.disp_jet(&orbit.xs[k], p)?.scale(tau)),
            EndKind::Tangent => {
                let m = self.opts.half_width;
                let (fwd, back) = orbit.local_iterates(k, m, p);
                let mut acc = vec![zero(); p + 1];
                for j in 0..m {
                    for (n, a) in acc.iter_mut().enumerate() {
                        let d = real(&back[j].coeffs[n] - &fwd[j].coeffs[n]);
                        *a += d * &self.weights[j];
                    }
                }
                if orbit.comp.sign < 0 {
                    for a in acc.iter_mut() {
                        *a = real(-&*a);
                    }
                }
                Ok(Jet::new(orbit.xs[k].clone(), acc))
            }
        }
    }

    /// Pulls the local model at `x_k` back to `x_0` through `g^k`.
    fn pulled_back(&self, orbit: &Orbit, k: usize, p: usize) -> Result<Jet> {
        let local = self.local_model(orbit, k, p)?;
        let map = &orbit.acc[k];
        let dmap = map.diff();
        let comp = Jet::compose_unchecked(&local, &map.truncate(p));
        if dmap.coeffs[0].is_zero() {
            return Err(Error::DivisionNearZero(format!("Dg^{} at {}", k, orbit.xs[0])));
        }
        comp.div(&dmap)
    }

    pub(crate) fn length_scale(&self, x: &Real, c: &Component) -> Real {
        let dom = self.f.domain();
        let mut ell = real(x - &c.a);
        let right = real(&c.b - x);
        if right > 0 && right < ell {
            ell = right;
        }
        if ell <= 0 {
            ell = dom.width() / 4u32;
        }
        ell
    }

    /// Jet of the field at `x` to order `p`.
    pub fn evaluate(&self, x: &Real, p: usize) -> Result<Evaluation> {
        let ck = (key(x), p);
        if let Some(e) = self.cache.lock().unwrap().get(&ck) {
            return Ok(e.clone());
        }
        let e = self.evaluate_uncached(x, p)?;
        self.cache.lock().unwrap().insert(ck, e.clone());
        Ok(e)
    }

    fn evaluate_uncached(&self, x: &Real, p: usize) -> Result<Evaluation> {
        if self.report.identity {
            return Ok(Evaluation { jet: Jet::zero(x, p), iterations: 0 });
        }
        let comp = match self.component(x)? {
            Some(c) => c,
            None => {
                if self.declared_flat_at(x) {
                    return Ok(Evaluation { jet: Jet::zero(x, p), iterations: 0 });
                }
                let c = self.fixed_point_component(x)?;
                if c.end == EndKind::Tangent {
                    return Ok(Evaluation { jet: self.tangent_fixed_jet(x, p)?, iterations: 0 });
                }
                c
            }
        };
        if let Some(j) = self.slow_point_jet(x, &comp, p)? {
            return Ok(Evaluation { jet: j, iterations: 0 });
        }
        let m = self.stencil(&comp);
        let ell = self.length_scale(x, &comp);
        let mut orbit = Orbit::new(comp, x, p + 1);
        let mut k = m.max(4);
        let mut prev: Option<Jet> = None;
        let mut prev_change: Option<Real> = None;
        loop {
            orbit.ensure(self, k + m)?;
            let est = self.pulled_back(&orbit, k, p)?;
            if let Some(pj) = &prev {
                let change = jet_change(&est.coeffs, &pj.coeffs, &ell);
                let monotone = prev_change.as_ref().map(|c| change <= *c).unwrap_or(false);
                if change.is_zero() || (change <= self.opts.rel_tol && monotone) {
                    return Ok(Evaluation { jet: est, iterations: k });
                }
                prev_change = Some(change);
            }
            prev = Some(est);
            k = match self.next_k(&mut orbit, k, m)? {
                Some(next) => next,
                None => {
                    if let Some(j) = self.near_end_jet(x, &orbit.comp, p, |y, q| Ok(self.evaluate(y, q)?.jet))? {
                        return Ok(Evaluation { jet: j, iterations: k });
                    }
                    return Err(Error::NonConverged {
                        what: format!("Szekeres field at x = {} (rel_tol {:.3e})", x, self.opts.rel_tol.to_f64()),
                        iterations: k,
                    });
                }
            };
        }
    }

    /// For `x` stuck within the resolution floor of the end `a`, the jet at `a` (from `at_end`,
    /// taken 8 orders deeper) re-expanded at `x`.
    pub(crate) fn near_end_jet<F>(&self, x: &Real, comp: &Component, p: usize, at_end: F) -> Result<Option<Jet>>
    where
        F: Fn(&Real, usize) -> Result<Jet>,
    {
        let a = &comp.a;
        if a == x || comp.a == comp.b {
            return Ok(None);
        }
        let floor = real(a.abs_ref()) * pow2(-(precision() as i32) / 4);
        if real(x - a).abs() >= floor {
            return Ok(None);
        }
        if self.declared_flat_at(a) {
            return Ok(Some(Jet::zero(x, p)));
        }
        Ok(Some(at_end(a, p + 8)?.recenter(x, p)))
    }

    /// Where a step of `f` is below resolution relative to the distance to both ends, the orbit
    /// cannot be resolved in working precision; the interpolated flow through the orbit then
    /// reduces to the Newton series `log(I + T)(id)` at `x` itself, whose terms shrink by a
    /// factor of order `|Df - 1|` each.
    pub(crate) fn slow_point_jet(&self, x: &Real, comp: &Component, p: usize) -> Result<Option<Jet>> {
        let gate = pow2(-(precision() as i32) / 4);
        // four spare orders: each application of T loses one order at the top
        let q = p + 4;
        let d = self.f.disp_jet(x, q)?;
        let dist = real(x - &comp.a).abs().min(&real(x - &comp.b).abs());
        if real(d.coeffs[0].abs_ref()) > real(&dist * &gate) || real(d.coeffs[1].abs_ref()) > gate {
            return Ok(None);
        }
        let origin = zero();
        // Δ^m for m = 1..=q; Tφ = Σ_m (D^m φ/m!)·Δ^m, exact on polynomials of degree q and free of
        // the cancellation in φ(h + Δ) - φ(h)
        let mut powers = vec![d.coeffs.clone()];
        for _ in 1..q {
            let next = crate::jet::series::mul(powers.last().unwrap(), &d.coeffs);
            powers.push(next);
        }
        let mut term = Jet::variable(&origin, q);
        let mut out = Jet::zero(&origin, q);
        let eps = pow2(-(precision() as i32));
        let ell = self.length_scale(x, comp);
        for i in 1..=64u32 {
            let mut next = vec![zero(); q + 1];
            for (m, pw) in powers.iter().enumerate().map(|(m, pw)| (m + 1, pw)) {
                // D^m φ / m! has coefficients C(k+m, m)·φ_{k+m}
                let mut dm = vec![zero(); q + 1];
                let mut any = false;
                for k in 0..=q {
                    if k + m > q {
                        break;
                    }
                    let c = &term.coeffs[k + m];
                    if !c.is_zero() {
                        any = true;
                        dm[k] = real(c * binomial(k + m, m));
                    }
                }
                if !any {
                    continue;
                }
                for (n, v) in crate::jet::series::mul(&dm, pw).into_iter().enumerate() {
                    next[n] += v;
                }
            }
            term = Jet::new(origin.clone(), next);
            let w = real(1) / i;
            for (o, t) in out.coeffs.iter_mut().zip(&term.coeffs) {
                if i % 2 == 1 {
                    *o += real(t * &w);
                } else {
                    *o -= real(t * &w);
                }
            }
            if jet_size(&term.coeffs[..=p], &ell) <= real(jet_size(&out.coeffs[..=p], &ell) * &eps) {
                return Ok(Some(Jet::new(x.clone(), out.coeffs).truncate(p)));
            }
        }
        Ok(None)
    }

    /// Jet of the field at a fixed point where `Df = 1`: the formal logarithm of the jet of `f`.
    pub(crate) fn tangent_fixed_jet(&self, x: &Real, p: usize) -> Result<Jet> {
        let mut fj = disp_to_map(&self.f.disp_jet(x, p)?);
        fj.coeffs[0] = x.clone();
        Ok(formal_log(&fj))
    }

    pub fn value(&self, x: &Real) -> Result<Real> {
        Ok(self.evaluate(x, 0)?.jet.coeffs[0].clone())
    }

    /// Series quantities at `x` for levels `1..=n`, with the derivative series summed along the
    /// orbit of `g` and the polynomials of the induction applied pointwise.
    pub fn series(&self, x: &Real, n: usize) -> Result<SeriesValues> {
        if n == 0 {
            return Err(Error::Precondition("series level must be at least 1".into()));
        }
        let comp = self.component(x)?.ok_or_else(|| Error::Precondition(format!("x = {} is a fixed point", x)))?;
        let xi = self.value(x)?;
        let levels = recursion_levels(n);
        let m = self.stencil(&comp);
        let mut orbit = Orbit::new(comp.clone(), x, n + 1);
        let mut k = m.max(4);
        let mut prev: Option<SeriesValues> = None;
        let mut prev_change: Option<Real> = None;
        let noise = pow2(32 - precision() as i32);
        loop {
            orbit.ensure(self, k + m)?;
            let cur = self.series_at(&orbit, k, n, &xi, &levels)?;
            if let Some(pv) = &prev {
                let mut change = zero();
                for j in 0..n {
                    let scale =
                        real(cur.partial[j].abs_ref()) + real(cur.tail[j].abs_ref()) + real(cur.big_phi[j].abs_ref());
                    let d = real(&cur.big_phi[j] - &pv.big_phi[j]).abs();
                    let r = if scale.is_zero() { d } else { d / scale };
                    if r > change {
                        change = r;
                    }
                }
                let monotone = prev_change.as_ref().map(|c| change <= *c).unwrap_or(false);
                // changes at the rounding level drift without shrinking
                if change.is_zero() || (change <= self.opts.rel_tol && monotone) || change <= noise {
                    return Ok(cur);
                }
                prev_change = Some(change);
            }
            prev = Some(cur);
            k = match self.next_k(&mut orbit, k, m)? {
                Some(next) => next,
                None => {
                    return Err(Error::NonConverged { what: format!("derivative series at x = {}", x), iterations: k })
                }
            };
        }
    }

    fn series_at(
        &self,
        orbit: &Orbit,
        k: usize,
        n: usize,
        xi: &Real,
        levels: &[crate::estimates::poly::Recursion],
    ) -> Result<SeriesValues> {
        let comp = &orbit.comp;
        // Tail values Φ_j(x_k).
        let tail: Vec<Real> = match &comp.end {
            EndKind::Hyperbolic { log_df, .. } => {
                (1..=n).map(|j| if j == 1 { log_df.clone() } else { zero() }).collect()
            }
            EndKind::Tangent => {
                let model = self.local_model(orbit, k, n)?;
                let mut phi = model.diff();
                let mut out = vec![phi.coeffs[0].clone()];
                for _ in 1..n {
                    let d = phi.diff();
                    phi = d.mul(&model.truncate(d.order()))?;
                    out.push(phi.coeffs[0].clone());
                }
                out
            }
        };
        // Pointwise data along the orbit.
        let mut xis = Vec::with_capacity(k);
        let mut dlg: Vec<Vec<Real>> = Vec::with_capacity(k);
        let mut gaps = Vec::with_capacity(k);
        for i in 0..k {
            let dg = orbit.acc[i].coeffs[1].clone();
            xis.push(real(xi * &dg));
            let lg = disp_to_map(&orbit.steps[i]).nonlinearity()?;
            dlg.push(lg.derivatives());
            gaps.push(real(-&orbit.steps[i].coeffs[0]));
        }
        // mu[j][i] = μ_{j+1}(x_i)
        let mut mu: Vec<Vec<Real>> = Vec::with_capacity(n);
        let mut big_phi0 = Vec::with_capacity(n);
        let mut small_phi0 = Vec::with_capacity(n);
        let mut partial0 = Vec::with_capacity(n);
        let mut summands = Vec::new();
        for j in 1..=n {
            let lv = &levels[j - 1];
            let mut phis = Vec::with_capacity(k);
            for i in 0..k {
                let args: Vec<Real> = (0..j - 1).map(|l| mu[l][i].clone()).collect();
                let mut s = zero();
                let mut xpow = xis[i].clone();
                for q in 0..j {
                    let qv = lv.q[q].eval(&args);
                    if !qv.is_zero() {
                        s += real(&dlg[i][q] * &xpow) * qv;
                    }
                    xpow *= &xis[i];
                }
                phis.push(-s);
            }
            // suffix sums give Φ_j at every orbit point
            let mut big = vec![zero(); k + 1];
            big[k] = tail[j - 1].clone();
            for i in (0..k).rev() {
                big[i] = real(&big[i + 1] + &phis[i]);
            }
            let mut mus = Vec::with_capacity(k);
            for i in 0..k {
                let args: Vec<Real> = (0..j - 1).map(|l| mu[l][i].clone()).collect();
                mus.push(real(&big[i] - lv.p.eval(&args)));
            }
            big_phi0.push(big[0].clone());
            small_phi0.push(phis[0].clone());
            partial0.push(real(&big[0] - &tail[j - 1]));
            if j == n {
                summands = phis;
            }
            mu.push(mus);
        }
        Ok(SeriesValues {
            xi: xi.clone(),
            mu: mu.iter().map(|v| v[0].clone()).collect(),
            big_phi: big_phi0,
            small_phi: small_phi0,
            tail,
            partial: partial0,
            summands,
            gaps,
            iterations: k,
        })
    }

    /// `Dξ(x)` from the derivative series.
    pub fn dvalue(&self, x: &Real) -> Result<Real> {
        if self.is_fixed(x)? {
            let e = self.evaluate(x, 1)?;
            return Ok(e.jet.coeffs[1].clone());
        }
        // where the orbit cannot be resolved the series has no usable partial sums; its limit is
        // then the linear term of the Newton series at x
        if let Some(comp) = self.component(x)? {
            if let Some(j) = self.slow_point_jet(x, &comp, 1)? {
                return Ok(j.coeffs[1].clone());
            }
        }
        Ok(self.series(x, 1)?.big_phi[0].clone())
    }

    /// `D^n ξ(x)` by the induction `μ_n = Φ_n - P_n(μ_1, …, μ_{n-1})`, `D^n ξ = μ_n / ξ^{n-1}`.
    pub fn higher(&self, x: &Real, n: usize) -> Result<Real> {
        if n < 2 {
            return Err(Error::Precondition("higher derivatives start at n = 2".into()));
        }
        let s = self.series(x, n)?;
        let den = real(rug::ops::Pow::pow(&s.xi, (n - 1) as u32));
        if den.is_zero() || !den.is_finite() {
            return Err(Error::DivisionNearZero(format!("ξ^{} at x = {} (μ_{} = {})", n - 1, x, n, s.mu[n - 1])));
        }
        Ok(real(&s.mu[n - 1] / &den))
    }
}

impl Field for SzekeresField {
    fn domain(&self) -> Interval {
        self.f.domain()
    }

    fn jet(&self, x: &Real, order: usize) -> Result<Jet> {
        Ok(self.evaluate(x, order)?.jet)
    }

    fn zeros(&self) -> ZeroSet {
        self.f.zeros()
    }

    fn flats(&self) -> (bool, bool) {
        self.f.flats()
    }

    fn flow_disp_jet(&self, x: &Real, t: &Real, order: usize) -> Result<Jet> {
        self.flow_jet(x, t, order)
    }

    fn label(&self) -> String {
        format!("Szekeres field of {}", self.f.label())
    }
}

/// Formal logarithm of a map jet `F` fixing its base with `DF = 1`: the displacement jet `ξ`
/// with `exp(ξ) = F`, from `log(I + T)` where `Tφ = φ∘F - φ` raises the order of vanishing.
pub(crate) fn formal_log(fmap: &Jet) -> Jet {
    let n = fmap.order();
    let base = &fmap.base;
    let mut term = Jet::variable(base, n);
    let mut out = Jet::zero(base, n);
    for i in 1..=n.max(1) {
        let next = Jet::compose_unchecked(&term, fmap);
        term = Jet::new(base.clone(), next.coeffs.iter().zip(&term.coeffs).map(|(a, b)| real(a - b)).collect());
        let w = real(1) / i as u32;
        for (o, t) in out.coeffs.iter_mut().zip(&term.coeffs) {
            if i % 2 == 1 {
                *o += real(t * &w);
            } else {
                *o -= real(t * &w);
            }
        }
    }
    out.coeffs[0] = zero();
    out
}

/// Displacement jet of the time-`t` map of a field jet `ξ` vanishing to order 2 at its base:
/// `Σ t^n/n! (ξ∂)^n id - id`, a finite sum on jets.
pub(crate) fn formal_flow(xi: &Jet, t: &Real) -> Jet {
    let n = xi.order();
    let base = &xi.base;
    let mut term = Jet::variable(base, n);
    let mut out = Jet::zero(base, n);
    let mut coef = one();
    for i in 1..=n.max(1) {
        let mut d = term.diff().coeffs;
        d.resize(n + 1, zero());
        let dj = Jet::new(base.clone(), d);
        term = Jet::new(base.clone(), crate::jet::series::mul(&xi.coeffs, &dj.coeffs));
        coef = coef * t / i as u32;
        for (o, c) in out.coeffs.iter_mut().zip(&term.coeffs) {
            *o += real(c * &coef);
        }
    }
    out.coeffs[0] = zero();
    out
}

/// `(h^*ν)(x) = ν(h(x)) / Dh(x)` as a jet of order `order`.
pub fn pullback(nu: &dyn Field, h: &dyn Diffeo, x: &Real, order: usize) -> Result<Jet> {
    let hm = h.jet(x, order + 1)?;
    let y = hm.coeffs[0].clone();
    let nj = nu.jet(&y, order)?;
    let dh = hm.diff();
    if dh.coeffs[0].is_zero() {
        return Err(Error::DivisionNearZero(format!("Dh({}) vanishes", x)));
    }
    let comp = Jet::compose_unchecked(&nj, &hm.truncate(order));
    comp.div(&dh)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diffeo::fixtures;
    use crate::real::{from_ratio, rel_err};

    #[test]
    fn formal_log_of_a_parabolic_germ() {
        // x/(1 - x) is the time-1 map of x^2, and its time-t map is x/(1 - t x)
        let f = Jet::new(zero(), (0..8).map(|n| if n == 0 { zero() } else { one() }).collect());
        let xi = formal_log(&f);
        for (n, c) in xi.coeffs.iter().enumerate() {
            let want = if n == 2 { one() } else { zero() };
            assert!(real(c - want).abs() < 1e-70, "{} {}", n, c);
        }
        let t = from_ratio(3, 7);
        let flow = formal_flow(&xi, &t);
        for n in 2..8 {
            let want = real(rug::ops::Pow::pow(&t, (n - 1) as u32));
            assert!(real(&flow.coeffs[n] - want).abs() < 1e-70);
        }
        assert!(flow.coeffs[1].is_zero());
    }

    fn logistic() -> Arc<SzekeresField> {
        SzekeresField::of(Arc::new(fixtures::logistic_time_map(&one()))).unwrap()
    }

    #[test]
    fn weights_differentiate_polynomials() {
        // exact on t^3: derivative at 0 is 0; on t: 1
        let w = central_weights(4);
        let mut s = zero();
        for (j, c) in w.iter().enumerate() {
            s += real(c * (2 * (j as i64 + 1)));
        }
        assert!(real(s - 1u32).abs() < 1e-70);
        let l = lagrange_weights(3, &from_ratio(1, 3));
        let sum: Real = l.iter().fold(zero(), |a, b| a + b);
        assert!(real(sum - 1u32).abs() < 1e-70);
    }

    #[test]
    fn unresolved_steps_near_a_flat_end() {
        // steps of f near 0.003 are ~1e-145, far below the resolution of x itself
        let fx = fixtures::fixture("flat_boundary", &fixtures::FixtureParams::default()).unwrap();
        let xi = SzekeresField::of(fx.maps[0].clone()).unwrap();
        for x in [from_ratio(1, 80), from_ratio(3, 1000)] {
            let got = xi.jet(&x, 3).unwrap();
            let want = fx.field.jet(&x, 3).unwrap();
            for (a, b) in got.coeffs.iter().zip(&want.coeffs) {
                assert!(rel_err(a, b, 0.0) < 1e-60);
            }
        }
    }

    #[test]
    fn logistic_value_and_derivatives() {
        let xi = logistic();
        let x = from_ratio(3, 10);
        assert!(rel_err(&xi.value(&x).unwrap(), &from_ratio(21, 100), 0.0) < 1e-30);
        assert!(rel_err(&xi.dvalue(&x).unwrap(), &from_ratio(2, 5), 0.0) < 1e-30);
        assert!(rel_err(&xi.higher(&x, 2).unwrap(), &real(-2), 0.0) < 1e-25);
        assert!(xi.higher(&from_ratio(1, 2), 3).unwrap().abs() < 1e-25);
        assert_eq!(xi.value(&zero()).unwrap(), 0);
    }

    #[test]
    fn pullback_examples() {
        let f = crate::diffeo::VectorField::parse("x", Interval::new(zero(), real(4))).unwrap();
        let h = crate::diffeo::ExprMap::parse("2*x", Interval::new(zero(), real(4))).unwrap();
        let j = pullback(&f, &h, &real(1), 2).unwrap();
        assert_eq!(j.coeffs[0], 1);
        assert_eq!(j.coeffs[1], 1);
    }
}
