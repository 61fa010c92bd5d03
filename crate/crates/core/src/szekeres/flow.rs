//! Flow of a Szekeres field and the time coordinate along it.

use std::fmt;
use std::sync::Arc;

use crate::diffeo::{compose_disp, disp_to_map, map_to_disp, Diffeo, FieldRef, Interval, ZeroSet};
use crate::error::{Error, Result};
use crate::jet::Jet;
use crate::quad::gauss_legendre;
use crate::real::{one, pow2, precision, real, zero, Real};

use super::{formal_flow, jet_change, jet_size, lagrange_weights, Component, EndKind, Orbit, SzekeresField};

impl SzekeresField {
    /// Displacement jet of the time-`t` map of the field at `x`.
    ///
    /// `t = n + s` with `n` an integer and `|s| ≤ 1/2`; the integer part is applied as `f^n`, so
    /// integer times reproduce the iterates of `f` exactly.
    pub fn flow_jet(&self, x: &Real, t: &Real, order: usize) -> Result<Jet> {
        if t.is_zero() || self.report.identity {
            return Ok(Jet::zero(x, order));
        }
        let n = real(t.round_ref());
        let s = real(t - &n);
        let n = n.to_f64() as i64;
        let frac = if s.is_zero() { Jet::zero(x, order) } else { self.fractional_flow(x, &s, order)? };
        if n == 0 {
            return Ok(frac);
        }
        let y = real(x + &frac.coeffs[0]);
        let whole = self.f.iterate_disp_jet(&y, n, order)?;
        Ok(compose_disp(&whole, &frac))
    }

    /// Model of the time-`s` map at `x_k`: linear at a hyperbolic end, the interpolation of the
    /// iterates `f^j`, `|j| ≤ m`, at a tangent end.
    fn local_flow(&self, orbit: &Orbit, k: usize, s: &Real, p: usize) -> Jet {
        let xk = &orbit.xs[k];
        match &orbit.comp.end {
            EndKind::Hyperbolic { log_df, .. } => {
                let mut c = vec![zero(); p + 1];
                let lam = real(log_df * s).exp_m1();
                c[0] = real(xk - &orbit.comp.a) * &lam;
                if p >= 1 {
                    c[1] = lam;
                }
                Jet::new(xk.clone(), c)
            }
            EndKind::Tangent => {
                let m = self.opts.half_width;
                let (fwd, back) = orbit.local_iterates(k, m, p);
                let w = lagrange_weights(m, s);
                let mut c = vec![zero(); p + 1];
                for j in 1..=m {
                    // f^j is g^{-j} when g = f^{-1}
                    let (plus, minus) =
                        if orbit.comp.sign > 0 { (&back[j - 1], &fwd[j - 1]) } else { (&fwd[j - 1], &back[j - 1]) };
                    for (n, cn) in c.iter_mut().enumerate() {
                        *cn += real(&w[m + j] * &plus.coeffs[n]);
                        *cn += real(&w[m - j] * &minus.coeffs[n]);
                    }
                }
                Jet::new(xk.clone(), c)
            }
        }
    }

    /// Map jet at `x` of `G^{-(k-j)} ∘ Λ_s ∘ G^k`, which tends to `G^j ∘ φ^s`, together with
    /// the point reached by the back-walk.
    fn partial_conjugated_flow(&self, orbit: &Orbit, k: usize, j: usize, s: &Real, p: usize) -> Result<Jet> {
        let lam = disp_to_map(&self.local_flow(orbit, k, s, p));
        let inner = Jet::compose_unchecked(&lam, &orbit.acc[k].truncate(p));
        let z = lam.coeffs[0].clone();
        let mut back = Jet::variable(&z, p);
        let mut y = z;
        for _ in j..k {
            let st = self.g_inv_step(&orbit.comp, &y, p)?;
            y += &st.coeffs[0];
            back = Jet::compose_unchecked(&disp_to_map(&st), &back);
        }
        Ok(Jet::compose_unchecked(&back, &inner))
    }

    /// Finishes a partial estimate with the last `j` inverse steps, as a displacement jet.
    fn finish_conjugated_flow(&self, orbit: &Orbit, partial: &Jet, j: usize, p: usize) -> Result<Jet> {
        let mut y = partial.coeffs[0].clone();
        let mut back = Jet::variable(&y, p);
        for _ in 0..j {
            let st = self.g_inv_step(&orbit.comp, &y, p)?;
            y += &st.coeffs[0];
            back = Jet::compose_unchecked(&disp_to_map(&st), &back);
        }
        Ok(map_to_disp(&Jet::compose_unchecked(&back, partial)))
    }

    fn fractional_flow(&self, x: &Real, s: &Real, p: usize) -> Result<Jet> {
        let comp: Component = match self.component(x)? {
            Some(c) => c,
            None => {
                if self.declared_flat_at(x) {
                    return Ok(Jet::zero(x, p));
                }
                let c = self.fixed_point_component(x)?;
                if c.end == EndKind::Tangent {
                    return Ok(formal_flow(&self.tangent_fixed_jet(x, p)?, s));
                }
                c
            }
        };
        let m = self.stencil(&comp);
        let ell = self.length_scale(x, &comp);
        let mut orbit = Orbit::new(comp, x, p);
        let mut k = m.max(4);
        // Estimates are compared after walking back only to x_j: the steps near x are the
        // expensive ones and are then taken once. Differences there are rescaled by DG^j.
        let j = k / 2;
        orbit.ensure(self, k + m)?;
        let dg = real(orbit.acc[j].coeffs.get(1).map(|c| c.abs_ref()).map(real).unwrap_or_else(one));
        let ell = if dg.is_zero() || p == 0 { ell } else { real(&ell * &dg) };
        let xj = orbit.xs[j].clone();
        // compare displacements from x_j; changes below the resolution of x_j count as converged
        let rel = |v: &Jet| -> Vec<Real> {
            let mut c = v.coeffs.clone();
            c[0] -= &xj;
            c
        };
        let floor = real(xj.abs_ref()) * pow2(32 - precision() as i32);
        let mut prev: Option<Jet> = None;
        let mut prev_change: Option<Real> = None;
        loop {
            // a short orbit has not reached the linear regime of the model, and the back-walk
            // from a poor estimate can leave the interval; such estimates are skipped
            let est = match self.partial_conjugated_flow(&orbit, k, j, s, p) {
                Err(Error::Domain(_)) if k < self.opts.k_max / 2 => None,
                other => Some(other?),
            };
            if let Some(est) = est {
                if let Some(pj) = &prev {
                    let diff: Vec<Real> = est.coeffs.iter().zip(&pj.coeffs).map(|(a, b)| real(a - b)).collect();
                    let change = jet_change(&rel(&est), &rel(pj), &ell);
                    let monotone = prev_change.as_ref().map(|c| change <= *c).unwrap_or(false);
                    if change.is_zero() || (change <= self.opts.rel_tol && monotone) || jet_size(&diff, &ell) <= floor {
                        return self.finish_conjugated_flow(&orbit, &est, j, p);
                    }
                    prev_change = Some(change);
                }
                prev = Some(est);
            } else {
                prev = None;
                prev_change = None;
            }
            k = match self.next_k(&mut orbit, k, m)? {
                Some(next) => next,
                None => {
                    if let Some(j) = self.near_end_jet(x, &orbit.comp, p, |y, q| self.fractional_flow(y, s, q))? {
                        return Ok(j);
                    }
                    return Err(Error::NonConverged {
                        what: format!("Szekeres flow at x = {}, t = {}", x, s),
                        iterations: k,
                    });
                }
            };
        }
    }

    /// Value of the local model at a point `v` near the end of the component.
    fn model_value(&self, comp: &Component, v: &Real) -> Result<Real> {
        match &comp.end {
            EndKind::Hyperbolic { tau, .. } => Ok(self.f.displacement(v)? * tau),
            EndKind::Tangent => {
                let mut up = v.clone();
                let mut down = v.clone();
                let mut acc = zero();
                for c in &self.weights {
                    up = self.f.apply(&up)?;
                    down = up_inverse(self, &down)?;
                    acc += real(&up - &down) * c;
                }
                Ok(acc)
            }
        }
    }
}

fn up_inverse(field: &SzekeresField, y: &Real) -> Result<Real> {
    let d = field.f.inverse_disp_jet(y, 0)?;
    Ok(real(y + &d.coeffs[0]))
}

/// `T(y) - T(x)`, the time the flow of `ξ` takes to carry `x` to `y`.
///
/// Both points are first pushed `k` steps toward the end of their component, where `k` is the
/// orbit length at which the field converged; `1/ν` for the local model `ν` is then integrated
/// over the pushed interval, which stays away from the zeros of `ν`.
pub fn translation_time(field: &SzekeresField, x: &Real, y: &Real) -> Result<Real> {
    if x == y {
        return Ok(zero());
    }
    let (Some(cx), Some(cy)) = (field.component(x)?, field.component(y)?) else {
        return Err(Error::Precondition(format!("{} and {} must both lie off the fixed-point set", x, y)));
    };
    if cx.a != cy.a || cx.b != cy.b {
        return Err(Error::Precondition(format!("{} and {} lie in different components", x, y)));
    }
    let k = field.evaluate(x, 0)?.iterations.max(field.evaluate(y, 0)?.iterations);
    let push = |p: &Real| -> Result<Real> {
        let mut v = p.clone();
        for _ in 0..k {
            let st = field.g_step(&cx, &v, 0)?;
            v += &st.coeffs[0];
        }
        Ok(v)
    };
    let (xk, yk) = (push(x)?, push(y)?);
    let q = gauss_legendre(
        |v| {
            let nu = field.model_value(&cx, v)?;
            if nu.is_zero() {
                return Err(Error::DivisionNearZero(format!("local model vanishes at {}", v)));
            }
            Ok(nu.recip())
        },
        &xk,
        &yk,
        &field.opts.rel_tol,
        10,
    )?;
    Ok(q.value)
}

/// The time-`t` map of a Szekeres field.
#[derive(Clone)]
pub struct SzekeresFlow {
    pub field: Arc<SzekeresField>,
    pub t: Real,
}

impl SzekeresFlow {
    pub fn new(field: Arc<SzekeresField>, t: Real) -> SzekeresFlow {
        SzekeresFlow { field, t }
    }
}

impl fmt::Debug for SzekeresFlow {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "SzekeresFlow(t = {})", self.t)
    }
}

impl Diffeo for SzekeresFlow {
    fn domain(&self) -> Interval {
        self.field.source().domain()
    }

    fn disp_jet(&self, x: &Real, order: usize) -> Result<Jet> {
        self.field.flow_jet(x, &self.t, order)
    }

    fn inverse_disp_jet(&self, y: &Real, order: usize) -> Result<Jet> {
        self.field.flow_jet(y, &real(-&self.t), order)
    }

    fn iterate_disp_jet(&self, x: &Real, k: i64, order: usize) -> Result<Jet> {
        self.field.flow_jet(x, &real(&self.t * k), order)
    }

    fn flats(&self) -> (bool, bool) {
        self.field.source().flats()
    }

    fn zeros(&self) -> ZeroSet {
        if self.t.is_zero() {
            ZeroSet::Unknown
        } else {
            self.field.source().zeros()
        }
    }

    fn generator(&self) -> Option<(FieldRef, Real)> {
        Some((self.field.clone() as FieldRef, self.t.clone()))
    }

    fn is_identity(&self) -> bool {
        self.t.is_zero() || self.field.source().is_identity()
    }

    fn label(&self) -> String {
        format!("time-{} map of the Szekeres field of {}", self.t.to_f64(), self.field.source().label())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diffeo::fixtures;
    use crate::real::{from_ratio, one, rel_err};

    #[test]
    fn logistic_translation_and_flow() {
        let f: Arc<dyn Diffeo> = Arc::new(fixtures::logistic_time_map(&one()));
        let xi = SzekeresField::of(f.clone()).unwrap();
        let t = translation_time(&xi, &from_ratio(1, 4), &from_ratio(1, 2)).unwrap();
        assert!(rel_err(&t, &real(3).ln(), 0.0) < 1e-30, "{}", t);
        let x = from_ratio(3, 10);
        let fx = f.apply(&x).unwrap();
        assert!(rel_err(&translation_time(&xi, &x, &fx).unwrap(), &one(), 0.0) < 1e-30);
        // half-time map against the closed form
        let half = SzekeresFlow::new(xi.clone(), from_ratio(1, 2));
        let want = fixtures::logistic_time_map(&from_ratio(1, 2)).apply(&x).unwrap();
        assert!(rel_err(&half.apply(&x).unwrap(), &want, 0.0) < 1e-30);
        let back = SzekeresFlow::new(xi, from_ratio(-3, 2));
        let want = fixtures::logistic_time_map(&from_ratio(-3, 2)).apply(&x).unwrap();
        assert!(rel_err(&back.apply(&x).unwrap(), &want, 0.0) < 1e-30);
    }
}
