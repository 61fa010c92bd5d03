//! Boundary smoothing: a field that agrees with the Szekeres field away from a flat end and is
//! replaced near that end by a stretched, flattened copy, and the clean approximation built
//! from its flow.

use std::fmt;
use std::sync::Arc;

use crate::diffeo::{
    ck_norm_with, compose_disp, flow, invert_at, invert_disp, Conjugated, Diffeo, DiffeoRef, Field, FieldRef,
    FlowOptions, Interval, NormReport, Reflected, Zero, ZeroSet,
};
use crate::error::{Error, Result};
use crate::expr::{Expr, Func};
use crate::jet::{Jet, K_MAX};
use crate::quad::tanh_sinh;
use crate::real::{chebyshev_lobatto, linspace, one, pow2, precision, real, zero, Real};
use crate::szekeres::{classify_pair, ClassifyOptions, PairClassification, SzekeresField};

mod panel;

pub use panel::{Panel, Piecewise};

#[derive(Clone, Debug)]
pub struct SmoothingOptions {
    pub delta: Real,
    /// Halvings tried by the scan for `x0` (and for `a`).
    pub j_max: usize,
    /// Grid used for the argmax of `|f - id|` on `[0, x]`.
    pub argmax_grid: usize,
    /// Sample count for sampled `C^k` norms.
    pub norm_samples: usize,
    /// Chebyshev nodes for `D^k ξ` on `[f^{∓1}(x0), x0]`.
    pub y_nodes: usize,
    /// Chebyshev nodes per panel for the `α` tables.
    pub x_nodes: usize,
    pub flow: FlowOptions,
    pub classify: ClassifyOptions,
}

impl Default for SmoothingOptions {
    fn default() -> Self {
        SmoothingOptions {
            delta: real(0.5),
            j_max: 64,
            argmax_grid: 64,
            norm_samples: 16,
            y_nodes: 12,
            x_nodes: 32,
            flow: FlowOptions::default(),
            // two samples in each of the two largest components; translation times are the
            // dominant cost of the pipeline
            classify: ClassifyOptions { samples: 2, components: 2, ..ClassifyOptions::default() },
        }
    }
}

#[derive(Clone, Debug)]
pub struct NiceX0 {
    pub x0: Real,
    pub delta: Real,
    pub k: usize,
    /// `‖ξ‖_k` on `[f^{∓2}(x0), f^{±2}(x0)]`, sampled.
    pub bound_lhs: Real,
    /// `|f(x0) - x0|^{1-δ}`.
    pub bound_rhs: Real,
    pub candidates: usize,
}

/// The smooth step `ρ(t) = flat(t) / (flat(t) + flat(1 - t))`.
pub fn rho_expr() -> Expr {
    let f = Expr::call(Func::Flat, Expr::X);
    let g = Expr::call(Func::Flat, Expr::sub(Expr::Const(one()), Expr::X));
    Expr::div(f.clone(), Expr::add(f, g))
}

fn rho_jet(t: &Jet) -> Result<Jet> {
    if t.coeffs[0] <= 0 {
        return Ok(Jet::zero(&t.base, t.order()));
    }
    if t.coeffs[0] >= 1 {
        return Ok(Jet::constant(&t.base, one(), t.order()));
    }
    rho_expr().eval_jet(t)
}

/// Sampled `‖ρ‖_k` on `[0, 1]`.
pub fn rho_norm(k: usize, samples: usize) -> Result<Real> {
    let e = rho_expr();
    let r = ck_norm_with(|t, p| e.eval_jet(&Jet::variable(t, p)), k, &Interval::unit(), samples)?;
    Ok(r.value)
}

fn min_max_iterate(f: &dyn Diffeo, x: &Real, n: i64) -> Result<(Real, Real)> {
    let a = real(x + &f.iterate_disp_jet(x, n, 0)?.coeffs[0]);
    let b = real(x + &f.iterate_disp_jet(x, -n, 0)?.coeffs[0]);
    Ok(if a < b { (a, b) } else { (b, a) })
}

/// Scans `x = a·2^{-j}` for a point satisfying `‖ξ‖_{k,[f^{∓2}(x0), f^{±2}(x0)]} ≤ |f(x0) - x0|^{1-δ}`,
/// where `x0` is the argmax of `|f - id|` on `[0, x]`.
pub fn find_nice_x0(
    f: &dyn Diffeo,
    xi: &SzekeresField,
    delta: &Real,
    k: usize,
    a: &Real,
    opts: &SmoothingOptions,
) -> Result<NiceX0> {
    if *delta <= 0 || *delta >= 1 {
        return Err(Error::Precondition(format!("delta = {} must lie in (0, 1)", delta)));
    }
    let lo = f.domain().lo;
    if *a <= lo {
        return Err(Error::Precondition("a must lie inside the domain".into()));
    }
    let expo = real(1) - delta;
    let mut x = a.clone();
    for j in 0..=opts.j_max {
        if j > 0 {
            x = real(&lo + real(&x - &lo) / 2u32);
        }
        let mut best = zero();
        let mut x0 = None;
        for y in linspace(&lo, &x, opts.argmax_grid.max(2)).into_iter().skip(1) {
            let d = f.displacement(&y)?.abs();
            if d > best {
                best = d;
                x0 = Some(y);
            }
        }
        let Some(x0) = x0 else { continue };
        let (lo2, _) = min_max_iterate(f, &x0, 2)?;
        let (_, hi2) = min_max_iterate(f, &x0, 2)?;
        if lo2 <= lo {
            continue;
        }
        let rhs = (real(best.ln_ref()) * &expo).exp();
        // the grid is scanned from x0 outward so most failing candidates are rejected early
        let mut pts = chebyshev_lobatto(&lo2, &hi2, opts.norm_samples.max(16));
        pts.push(x0.clone());
        pts.sort_by(|p, q| real(p - &x0).abs().partial_cmp(&real(q - &x0).abs()).unwrap());
        let mut lhs = zero();
        for y in &pts {
            let jet = xi.jet(y, k)?;
            for i in 0..=k {
                lhs = lhs.max(&jet.derivative(i).abs());
            }
            if lhs > rhs {
                break;
            }
        }
        if lhs <= rhs {
            return Ok(NiceX0 { x0, delta: delta.clone(), k, bound_lhs: lhs, bound_rhs: rhs, candidates: j + 1 });
        }
    }
    Err(Error::NotFound(format!("no x0 below {} after {} halvings (k = {}, delta = {})", a, opts.j_max, k, delta)))
}

/// The reparametrization `ψ: [0, x0] → [f^{∓1}(x0), x0]`, identity to infinite order at `x0`.
///
/// `Dψ = ε + (1 - ε)·ρ((x - x0 + d)/d)` with `d = x0 - f^{∓1}(x0)`: nearly constant slope `ε` up to
/// `x0 - d`, then a smooth ramp to slope 1.
#[derive(Clone, Debug)]
pub struct Psi {
    pub lo: Real,
    pub x0: Real,
    pub start: Real,
    pub d: Real,
    pub eps: Real,
}

impl Psi {
    pub fn new(lo: &Real, x0: &Real, start: &Real) -> Result<Psi> {
        let d = real(x0 - start);
        let width = real(x0 - lo);
        if d <= 0 || d >= width {
            return Err(Error::PsiNotMonotone(format!("d = {} not inside (0, {})", d, width)));
        }
        let theta = real(&d / &width);
        let half = real(&theta / 2u32);
        let eps = real(&half / (real(1) - &half));
        if eps <= 0 {
            return Err(Error::PsiNotMonotone(format!("slope {} not positive", eps)));
        }
        Ok(Psi { lo: lo.clone(), x0: x0.clone(), start: start.clone(), d, eps })
    }

    fn ramp_start(&self) -> Real {
        real(&self.x0 - &self.d)
    }

    fn sigma(&self, x: &Real) -> Real {
        real(x - &self.ramp_start()) / &self.d
    }

    pub fn value(&self, x: &Real) -> Result<Real> {
        let lin = real(&self.start + real(x - &self.lo) * &self.eps);
        let s = self.sigma(x);
        if s <= 0 {
            return Ok(lin);
        }
        let r = rho_expr();
        let s = if s > 1 { one() } else { s };
        let q = tanh_sinh(|t| r.eval(t), &zero(), &s, &pow2(-(precision() as i32) / 2), 10)?;
        // past the ramp ρ = 1, so the integral grows linearly
        let extra = real(&self.sigma(x) - &s).max(&zero());
        let rint = q.value + extra;
        Ok(lin + real(real(1) - &self.eps) * &self.d * rint)
    }

    pub fn derivative(&self, x: &Real) -> Result<Real> {
        let s = self.sigma(x);
        let r = if s <= 0 {
            zero()
        } else if s >= 1 {
            one()
        } else {
            rho_expr().eval(&s)?
        };
        Ok(real(&self.eps + real(real(1) - &self.eps) * r))
    }

    /// Smallest sampled `Dψ` on `[lo, x0]`.
    pub fn min_slope(&self, samples: usize) -> Result<Real> {
        let mut best: Option<Real> = None;
        for x in linspace(&self.lo, &self.x0, samples.max(2)) {
            let d = self.derivative(&x)?;
            if best.as_ref().map(|b| d < *b).unwrap_or(true) {
                best = Some(d);
            }
        }
        Ok(best.unwrap())
    }
}

/// `ξ̄`: `ρ((x - lo)/(x0 - lo))·α_k(x)` on `[lo, x0]`, the Szekeres field `ξ` on `[x0, hi]`.
pub struct SmoothedField {
    pub xi: Arc<SzekeresField>,
    pub x0: Real,
    pub k: usize,
    pub psi: Psi,
    /// `α_0 … α_k` on `[lo, x0]`.
    pub alpha: Vec<Piecewise>,
    /// `D^{k-i} ξ(x0)`, the anchors of the `α_i`.
    pub anchors: Vec<Real>,
    pub nice: Option<NiceX0>,
    /// Sign of `ξ` on the component containing `x0`.
    pub sign: i8,
}

impl fmt::Debug for SmoothedField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "SmoothedField(x0 = {}, k = {})", self.x0.to_f64(), self.k)
    }
}

pub fn build_smoothed(
    xi: Arc<SzekeresField>,
    f: &dyn Diffeo,
    x0: &Real,
    k: usize,
    opts: &SmoothingOptions,
) -> Result<SmoothedField> {
    let dom = f.domain();
    let lo = dom.lo.clone();
    let fx0 = f.displacement(x0)?;
    if fx0.is_zero() {
        return Err(Error::Precondition(format!("x0 = {} is a fixed point", x0)));
    }
    let (start, _) = min_max_iterate(f, x0, 1)?;
    if start <= lo {
        return Err(Error::Precondition(format!("f^(-/+1)(x0) = {} is not above the end {}", start, lo)));
    }
    if real(x0 - &start) < real(x0.abs_ref()) * pow2(64 - precision() as i32) {
        return Err(Error::Precondition(format!("x0 - f^(-/+1)(x0) is below the working resolution at x0 = {}", x0)));
    }
    let psi = Psi::new(&lo, x0, &start)?;
    let top = xi.jet(x0, k)?;
    let anchors: Vec<Real> = (0..=k).map(|i| top.derivative(k - i)).collect();
    // D^k ξ on [start, x0], then α_0 = D^k ξ ∘ ψ tabulated on two panels.
    let dk = Panel::from_values(&start, x0, opts.y_nodes, |y| {
        if y == x0 {
            return Ok(top.derivative(k));
        }
        Ok(xi.jet(y, k)?.derivative(k))
    })?;
    let ramp = psi.ramp_start();
    let alpha0_at = |x: &Real| -> Result<Real> { Ok(dk.eval(&psi.value(x)?)) };
    let p_ramp = Panel::from_values(&ramp, x0, opts.x_nodes, alpha0_at)?;
    let p_flat = Panel::from_values(&lo, &ramp, opts.x_nodes, alpha0_at)?;
    let mut alpha = vec![Piecewise { panels: vec![p_flat, p_ramp] }];
    for i in 1..=k {
        let prev = &alpha[i - 1];
        let next = prev.antiderivative(x0, &anchors[i]);
        alpha.push(next);
    }
    let sign = if fx0.is_sign_positive() { 1 } else { -1 };
    Ok(SmoothedField { xi, x0: x0.clone(), k, psi, alpha, anchors, nice: None, sign })
}

impl SmoothedField {
    pub fn with_nice(mut self, nice: NiceX0) -> SmoothedField {
        self.nice = Some(nice);
        self
    }

    fn lo(&self) -> Real {
        self.xi.domain().lo
    }

    fn patch_jet(&self, x: &Real, order: usize) -> Result<Jet> {
        let lo = self.lo();
        if *x <= lo {
            return Ok(Jet::zero(x, order));
        }
        let width = real(&self.x0 - &lo);
        let mut t = Jet::variable(x, order);
        t.coeffs[0] = real(x - &lo) / &width;
        if order >= 1 {
            t.coeffs[1] = width.recip();
        }
        let r = rho_jet(&t)?;
        let a = self.alpha[self.k].jet(x, order);
        r.mul(&a)
    }

    /// `α_i(x)` on `[lo, x0]`.
    pub fn alpha_value(&self, i: usize, x: &Real) -> Real {
        self.alpha[i].eval(x)
    }

    /// Interior zeros of `ξ̄` in `(lo, x0)` whose jets vanish to order `K_MAX`, found at sign
    /// changes and local minima of `|α_k|` on a grid.
    pub fn flat_zeros(&self, grid: usize) -> Result<Vec<Real>> {
        let lo = self.lo();
        let pts = linspace(&lo, &self.x0, grid.max(3));
        let vals: Vec<Real> = pts.iter().map(|x| self.alpha[self.k].eval(x)).collect();
        let scale = vals.iter().fold(zero(), |m, v| m.max(&real(v.abs_ref())));
        let floor = real(&scale * pow2(-(precision() as i32) / 2));
        let mut out = Vec::new();
        for i in 1..pts.len() - 1 {
            let sign_change = vals[i - 1].is_sign_positive() != vals[i].is_sign_positive();
            let local_min = real(vals[i].abs_ref()) <= real(vals[i - 1].abs_ref())
                && real(vals[i].abs_ref()) <= real(vals[i + 1].abs_ref())
                && real(vals[i].abs_ref()) <= floor;
            if !(sign_change || local_min) {
                continue;
            }
            let at = if sign_change { self.bisect_zero(&pts[i - 1], &pts[i]) } else { pts[i].clone() };
            let j = self.patch_jet(&at, K_MAX)?;
            if j.coeffs.iter().all(|c| real(c.abs_ref()) <= floor) {
                out.push(at);
            }
        }
        Ok(out)
    }

    fn bisect_zero(&self, a: &Real, b: &Real) -> Real {
        let (mut a, mut b) = (a.clone(), b.clone());
        let sa = self.alpha[self.k].eval(&a).is_sign_positive();
        for _ in 0..precision() {
            let m = real(&a + &b) / 2u32;
            if self.alpha[self.k].eval(&m).is_sign_positive() == sa {
                a = m;
            } else {
                b = m;
            }
        }
        a
    }
}

impl Field for SmoothedField {
    fn domain(&self) -> Interval {
        self.xi.domain()
    }

    fn jet(&self, x: &Real, order: usize) -> Result<Jet> {
        if *x >= self.x0 {
            self.xi.jet(x, order)
        } else {
            self.patch_jet(x, order)
        }
    }

    fn zeros(&self) -> ZeroSet {
        let lo = self.lo();
        match self.xi.zeros() {
            ZeroSet::Finite(zs) => {
                let mut v = vec![Zero { at: lo, multiplicity: 0, flat: true }];
                v.extend(zs.into_iter().filter(|z| z.at >= self.x0));
                ZeroSet::Finite(v)
            }
            _ => ZeroSet::Unknown,
        }
    }

    fn flats(&self) -> (bool, bool) {
        (true, self.xi.flats().1)
    }

    fn label(&self) -> String {
        format!("smoothed field (x0 = {:.6e}, k = {})", self.x0.to_f64(), self.k)
    }
}

/// Time-`t` map of a smoothed field.
#[derive(Clone)]
pub struct SmoothedFlow {
    pub field: Arc<SmoothedField>,
    pub t: Real,
    pub opts: FlowOptions,
}

impl fmt::Debug for SmoothedFlow {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "SmoothedFlow(t = {})", self.t)
    }
}

impl SmoothedFlow {
    pub fn new(field: Arc<SmoothedField>, t: Real) -> SmoothedFlow {
        SmoothedFlow { field, t, opts: FlowOptions::default() }
    }

    fn flow_jet(&self, x: &Real, t: &Real, p: usize) -> Result<Jet> {
        if t.is_zero() {
            return Ok(Jet::zero(x, p));
        }
        let s = &self.field;
        let rightward = t.is_sign_positive() == (s.sign > 0);
        if rightward {
            if *x >= s.x0 {
                return s.xi.flow_jet(x, t, p);
            }
            let tr = flow::run(s.as_ref(), x, t, p, &[], Some(&s.x0), &self.opts)?;
            if !tr.stopped {
                return Ok(tr.end);
            }
            let y = real(x + &tr.end.coeffs[0]);
            let rest = s.xi.flow_jet(&y, &real(t - &tr.reached), p)?;
            Ok(compose_disp(&rest, &tr.end))
        } else {
            if *x <= s.x0 {
                return flow::integrate(s.as_ref(), x, t, p, &self.opts);
            }
            // the opposite-time map moves right; invert it
            let fwd = SmoothedFlow { field: s.clone(), t: real(-t), opts: self.opts.clone() };
            let y = invert_at(&fwd, x)?;
            Ok(invert_disp(&fwd.flow_jet(&y, &fwd.t, p)?, x))
        }
    }
}

impl Diffeo for SmoothedFlow {
    fn domain(&self) -> Interval {
        self.field.domain()
    }

    fn disp_jet(&self, x: &Real, order: usize) -> Result<Jet> {
        self.flow_jet(x, &self.t, order)
    }

    fn inverse_disp_jet(&self, y: &Real, order: usize) -> Result<Jet> {
        self.flow_jet(y, &real(-&self.t), order)
    }

    fn iterate_disp_jet(&self, x: &Real, k: i64, order: usize) -> Result<Jet> {
        self.flow_jet(x, &real(&self.t * k), order)
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
        Some((self.field.clone() as FieldRef, self.t.clone()))
    }

    fn is_identity(&self) -> bool {
        self.t.is_zero()
    }

    fn label(&self) -> String {
        format!("time-{} map of the {}", self.t.to_f64(), self.field.label())
    }
}

#[derive(Clone, Debug)]
pub struct SmallnessReport {
    pub eps: Real,
    /// `‖ξ̄‖_{k,[lo, f^{±2}(x0)]}`, sampled.
    pub measured: NormReport,
    /// `‖ξ̄‖_{k,[lo, x0]}`, sampled.
    pub on_patch: NormReport,
    /// `k(k+1)k!‖ρ‖_k·|f(x0) - x0|^{1-δ}/x0^k`, when `δ` is known.
    pub theoretical: Option<Real>,
    pub rho_norm: Real,
    pub pass: bool,
}

pub fn verify_smallness(s: &SmoothedField, f: &dyn Diffeo, eps: &Real, samples: usize) -> Result<SmallnessReport> {
    let lo = s.lo();
    let (_, hi2) = min_max_iterate(f, &s.x0, 2)?;
    let jet = |x: &Real, p: usize| s.jet(x, p);
    let measured = ck_norm_with(jet, s.k, &Interval::new(lo.clone(), hi2), samples)?;
    let on_patch = ck_norm_with(jet, s.k, &Interval::new(lo.clone(), s.x0.clone()), samples)?;
    let rho_norm = rho_norm(s.k, 256)?;
    let theoretical = match &s.nice {
        Some(n) => {
            let kf: u64 = (1..=s.k as u64).product();
            let gap = f.displacement(&s.x0)?.abs();
            let pow = real(gap.ln_ref()) * (real(1) - &n.delta);
            let width = real(&s.x0 - &lo);
            let xk = real(rug::ops::Pow::pow(&width, s.k as u32));
            Some(real(&rho_norm * (s.k as u64 * (s.k as u64 + 1) * kf)) * pow.exp() / xk)
        }
        None => None,
    };
    let pass = measured.value <= *eps;
    Ok(SmallnessReport { eps: eps.clone(), measured, on_patch, theoretical, rho_norm, pass })
}

/// Checks `|α_i(x)| ≤ (i+1)·|f(x0) - x0|^{1-δ}` on `samples` points of `[lo, x0]`; returns the
/// worst ratio of the two sides.
pub fn alpha_bound_ratio(s: &SmoothedField, f: &dyn Diffeo, delta: &Real, samples: usize) -> Result<Real> {
    let gap = f.displacement(&s.x0)?.abs();
    let rhs = (real(gap.ln_ref()) * (real(1) - delta)).exp();
    let mut worst = zero();
    for x in chebyshev_lobatto(&s.lo(), &s.x0, samples.max(2)) {
        for i in 0..=s.k {
            let r = real(s.alpha_value(i, &x).abs_ref()) / real(&rhs * (i as u32 + 1));
            if r > worst {
                worst = r;
            }
        }
    }
    Ok(worst)
}

#[derive(Clone, Debug)]
pub struct CleanReport {
    pub a: Real,
    pub x0: Real,
    pub delta: Real,
    pub k: usize,
    pub eta: Real,
    pub tau: Real,
    pub nice: NiceX0,
    pub norm_f: NormReport,
    pub norm_g: NormReport,
    pub smallness: SmallnessReport,
    pub rescaled: Option<Real>,
    pub swapped: bool,
    pub reflected: bool,
}

impl fmt::Display for CleanReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "a={:.17e}", self.a.to_f64())?;
        writeln!(f, "x0={:.17e}", self.x0.to_f64())?;
        writeln!(f, "delta={}", self.delta.to_f64())?;
        writeln!(f, "k={}", self.k)?;
        writeln!(f, "eta={:e}", self.eta.to_f64())?;
        writeln!(f, "tau={:.17e}", self.tau.to_f64())?;
        writeln!(f, "nice_lhs={:.6e}", self.nice.bound_lhs.to_f64())?;
        writeln!(f, "nice_rhs={:.6e}", self.nice.bound_rhs.to_f64())?;
        writeln!(f, "norm_f_minus_fbar={:.6e}", self.norm_f.value.to_f64())?;
        writeln!(f, "norm_f_grid={}", self.norm_f.grid)?;
        writeln!(f, "norm_g_minus_gbar={:.6e}", self.norm_g.value.to_f64())?;
        writeln!(f, "norm_g_grid={}", self.norm_g.grid)?;
        writeln!(f, "smallness={:.6e}", self.smallness.measured.value.to_f64())?;
        writeln!(f, "smallness_grid={}", self.smallness.measured.grid)?;
        if let Some(t) = &self.smallness.theoretical {
            writeln!(f, "smallness_bound={:.6e}", t.to_f64())?;
        }
        writeln!(f, "rescaled={}", self.rescaled.is_some())?;
        if let Some(b) = &self.rescaled {
            writeln!(f, "rescale_b={:.17e}", b.to_f64())?;
        }
        writeln!(f, "swapped={}", self.swapped)?;
        write!(f, "reflected={}", self.reflected)
    }
}

pub struct CleanApproximation {
    pub f_bar: DiffeoRef,
    pub g_bar: DiffeoRef,
    pub field: Arc<SmoothedField>,
    pub report: CleanReport,
}

/// Sampled `‖a - b‖_k` over `[lo, x0]` and `[x0, hi]` separately; the two maps only differ on the
/// first piece, which gets the finer grid.
fn split_diff_norm(a: &dyn Diffeo, b: &dyn Diffeo, k: usize, x0: &Real, samples: usize) -> Result<NormReport> {
    let dom = a.domain();
    let jet = |x: &Real, p: usize| a.disp_jet(x, p)?.sub(&b.disp_jet(x, p)?);
    let near = ck_norm_with(jet, k, &Interval::new(dom.lo.clone(), x0.clone()), 2 * samples)?;
    let far = ck_norm_with(jet, k, &Interval::new(x0.clone(), dom.hi.clone()), samples)?;
    let grid = near.grid + far.grid;
    let mut best = if far.value > near.value { far } else { near };
    best.grid = grid;
    Ok(best)
}

/// The end-flat clean approximation of a commuting pair lying in the flow of a Szekeres field.
pub fn approximate_clean(
    f: DiffeoRef,
    g: DiffeoRef,
    eta: &Real,
    k: usize,
    opts: &SmoothingOptions,
) -> Result<CleanApproximation> {
    let (fl, fr) = f.flats();
    let (gl, gr) = g.flats();
    if !(fl && gl) && fr && gr {
        let rf: DiffeoRef = Arc::new(Reflected { inner: f });
        let rg: DiffeoRef = Arc::new(Reflected { inner: g });
        let mut out = approximate_clean(rf, rg, eta, k, opts)?;
        out.f_bar = Arc::new(Reflected { inner: out.f_bar });
        out.g_bar = Arc::new(Reflected { inner: out.g_bar });
        out.report.reflected = true;
        return Ok(out);
    }
    if !(fl && gl) {
        return Err(Error::Precondition("both maps must be declared flat at a common end".into()));
    }
    let (xi, tau, swapped) = match classify_pair(f.clone(), g.clone(), &opts.classify)? {
        PairClassification::Flow { xi, alpha } => {
            if real(alpha.abs_ref()) < 1 {
                (xi, alpha, false)
            } else {
                match classify_pair(g.clone(), f.clone(), &opts.classify)? {
                    PairClassification::Flow { xi, alpha } => (xi, alpha, true),
                    other => return Err(Error::Precondition(format!("swapped pair classified as {}", other.variant()))),
                }
            }
        }
        PairClassification::Cyclic { p, q, .. } => {
            return Err(Error::Precondition(format!(
                "pair classified as CYCLIC (p = {}, q = {}), not FLOW; a cyclic pair is already clean, use path_to_identity",
                p, q
            )))
        }
        other => return Err(Error::Precondition(format!("pair classified as {}, not FLOW", other.variant()))),
    };
    let (base, other) = if swapped { (g.clone(), f.clone()) } else { (f.clone(), g.clone()) };
    let dom = base.domain();
    let lo = dom.lo.clone();
    let quarter = real(eta / 4u32);
    let id_norm = |m: &dyn Diffeo, hi: &Real| -> Result<Real> {
        Ok(ck_norm_with(|x, p| m.disp_jet(x, p), k, &Interval::new(lo.clone(), hi.clone()), opts.norm_samples)?.value)
    };
    let mut a = None;
    let mut cand = dom.hi.clone();
    for _ in 0..opts.j_max {
        cand = real(&lo + real(&cand - &lo) / 2u32);
        let (_, up) = min_max_iterate(base.as_ref(), &cand, 1)?;
        if id_norm(base.as_ref(), &up)? <= quarter && id_norm(other.as_ref(), &up)? <= quarter {
            a = Some(cand.clone());
            break;
        }
    }
    let a = a.ok_or_else(|| Error::NotFound(format!("no a with C^{} norms of f - id, g - id below eta/4", k)))?;
    let nice = find_nice_x0(base.as_ref(), &xi, &opts.delta, k, &a, opts)?;
    let field = Arc::new(build_smoothed(xi, base.as_ref(), &nice.x0, k, opts)?.with_nice(nice.clone()));
    let mut fb: DiffeoRef = Arc::new(SmoothedFlow { field: field.clone(), t: one(), opts: opts.flow.clone() });
    let mut gb: DiffeoRef = Arc::new(SmoothedFlow { field: field.clone(), t: tau.clone(), opts: opts.flow.clone() });
    let norm_f = split_diff_norm(base.as_ref(), fb.as_ref(), k, &field.x0, opts.norm_samples)?;
    let norm_g = split_diff_norm(other.as_ref(), gb.as_ref(), k, &field.x0, opts.norm_samples)?;
    let smallness = verify_smallness(&field, base.as_ref(), eta, opts.norm_samples)?;
    let mut report = CleanReport {
        a,
        x0: field.x0.clone(),
        delta: opts.delta.clone(),
        k,
        eta: eta.clone(),
        tau,
        nice,
        norm_f,
        norm_g,
        smallness,
        rescaled: None,
        swapped,
        reflected: false,
    };
    if report.norm_f.value > *eta || report.norm_g.value > *eta {
        return Err(Error::EtaNotMet(report.to_string().replace('\n', ", ")));
    }
    if dom.lo.is_zero() && dom.hi == 1 {
        if let Some(b) = field.flat_zeros(256)?.into_iter().reduce(|p, q| if q > p { q } else { p }) {
            fb = Arc::new(Conjugated { inner: fb, b: b.clone() });
            gb = Arc::new(Conjugated { inner: gb, b: b.clone() });
            report.rescaled = Some(b);
        }
    }
    if swapped {
        std::mem::swap(&mut fb, &mut gb);
    }
    Ok(CleanApproximation { f_bar: fb, g_bar: gb, field, report })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::real::from_ratio;

    #[test]
    fn rho_is_a_flat_step() {
        assert!(rho_jet(&Jet::variable(&zero(), 8)).unwrap().is_zero());
        let one_jet = rho_jet(&Jet::variable(&one(), 8)).unwrap();
        assert_eq!(one_jet.coeffs[0], 1);
        assert!(one_jet.coeffs[1..].iter().all(|c| c.is_zero()));
        let mid = rho_expr().eval(&from_ratio(1, 2)).unwrap();
        assert_eq!(mid, from_ratio(1, 2));
    }

    #[test]
    fn psi_endpoints() {
        let psi = Psi::new(&zero(), &from_ratio(1, 10), &from_ratio(99, 1000)).unwrap();
        assert!(real(psi.value(&zero()).unwrap() - from_ratio(99, 1000)).abs() < 1e-70);
        let end = psi.value(&from_ratio(1, 10)).unwrap();
        assert!(real(end - from_ratio(1, 10)).abs() < 1e-35);
        assert!(real(psi.derivative(&from_ratio(1, 10)).unwrap() - 1u32).abs() < 1e-70);
        assert!(psi.min_slope(1024).unwrap() > 0);
        // too wide a gap leaves no room for the ramp
        assert!(matches!(Psi::new(&zero(), &from_ratio(1, 10), &zero()), Err(Error::PsiNotMonotone(_))));
    }
}
