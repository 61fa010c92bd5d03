//! Flows of vector fields by a jet-transport Taylor method.
//!
//! The state is the spatial jet of the displacement `φ^s - id` at the starting point. Each step
//! expands the field at the current position, substitutes the bivariate displacement series and
//! reads off the time coefficients one order at a time. Step lengths follow the decay of the last
//! two time coefficients. Dense output at requested times comes from the step polynomials.

use crate::error::{Error, Result};
use crate::jet::Jet;
use crate::real::{log_abs, precision, real, zero, Real};

use super::{compose_disp, disp_to_map, Field};

#[derive(Clone, Debug)]
pub struct FlowOptions {
    /// Order of the time series per step.
    pub time_order: usize,
    /// Local error target is `2^-tol_bits` relative to the per-step displacement.
    pub tol_bits: u32,
    pub max_steps: usize,
}

impl Default for FlowOptions {
    fn default() -> Self {
        let bits = precision();
        FlowOptions { time_order: 28, tol_bits: bits * 5 / 8, max_steps: 200_000 }
    }
}

/// Result of a run with optional dense output and stopping point.
#[derive(Clone, Debug)]
pub struct Trajectory {
    /// Displacement jets at the requested checkpoint times.
    pub checkpoints: Vec<Jet>,
    /// Displacement jet at the time actually reached.
    pub end: Jet,
    /// Time reached (equals the requested time unless stopped).
    pub reached: Real,
    pub stopped: bool,
    pub steps: usize,
}

fn mul_trunc(a: &[Real], b: &[Real], out: &mut [Real]) {
    let p = out.len();
    for n in 0..p {
        let mut acc = zero();
        for k in 0..=n {
            acc += &a[k] * &b[n - k];
        }
        out[n] = acc;
    }
}

fn sup_log(v: &[Real]) -> f64 {
    v.iter().map(log_abs).fold(f64::NEG_INFINITY, f64::max)
}

/// Time series of the displacement over one step from a segment state.
fn step_series<F: Field + ?Sized>(field: &F, seg_base: &Real, u: &[Real], n_time: usize) -> Result<Vec<Vec<Real>>> {
    let plen = u.len();
    let p = plen - 1;
    let y0 = real(seg_base + &u[0]);
    let fj = field.jet(&y0, n_time + p)?;
    let pj = &fj.coeffs;
    let jmax = n_time + p;

    // w_0 = ε + U(ε) - U(0): zero constant term.
    let mut w0: Vec<Real> = u.to_vec();
    w0[0] = zero();
    if p >= 1 {
        w0[1] += 1u32;
    }
    // series[n] = time coefficient n of U, a spatial jet.
    let mut ts: Vec<Vec<Real>> = vec![u.to_vec()];
    // pw[j][n] = time coefficient n of w^j.
    let mut pw: Vec<Vec<Vec<Real>>> = vec![Vec::new(); jmax + 1];
    let mut tmp = vec![zero(); plen];
    for n in 0..n_time {
        let wn = if n == 0 { w0.clone() } else { ts[n].clone() };
        let mut unit = vec![zero(); plen];
        if n == 0 {
            unit[0] = real(1);
        }
        pw[0].push(unit);
        pw[1].push(wn);
        let jtop = (n + p).min(jmax);
        for j in 2..=jtop {
            let mut acc = vec![zero(); plen];
            for m in 0..=n {
                if pw[j - 1].len() <= n - m {
                    continue;
                }
                mul_trunc(&pw[1][m], &pw[j - 1][n - m], &mut tmp);
                for (a, t) in acc.iter_mut().zip(&tmp) {
                    *a += t;
                }
            }
            pw[j].push(acc);
        }
        for j in (jtop + 1).max(2)..=jmax {
            pw[j].push(vec![zero(); plen]);
        }
        let mut next = vec![zero(); plen];
        for j in 0..=jtop {
            if pj[j].is_zero() {
                continue;
            }
            for (a, w) in next.iter_mut().zip(&pw[j][n]) {
                *a += &pj[j] * w;
            }
        }
        for a in next.iter_mut() {
            *a /= (n + 1) as u32;
        }
        ts.push(next);
    }
    Ok(ts)
}

fn eval_series(ts: &[Vec<Real>], h: &Real) -> Vec<Real> {
    let plen = ts[0].len();
    let mut out = vec![zero(); plen];
    for coeff in ts.iter().rev() {
        for (o, c) in out.iter_mut().zip(coeff) {
            *o *= h;
            *o += c;
        }
    }
    out
}

fn scalar_eval(ts: &[Vec<Real>], h: &Real) -> (Real, Real) {
    let mut v = zero();
    let mut dv = zero();
    for coeff in ts.iter().rev() {
        dv *= h;
        dv += &v;
        v *= h;
        v += &coeff[0];
    }
    (v, dv)
}

/// Smallest `τ` in `(0, h]` (same sign as `h`) with `x(τ) = target`, if the step crosses it.
fn crossing(ts: &[Vec<Real>], seg_base: &Real, h: &Real, target: &Real) -> Option<Real> {
    let g = |tau: &Real| -> Real {
        let (v, _) = scalar_eval(ts, tau);
        real(seg_base + &v) - target
    };
    let g0 = g(&zero());
    let gh = g(h);
    if g0.is_zero() || (g0.is_sign_positive() == gh.is_sign_positive() && !gh.is_zero()) {
        return None;
    }
    // Bisection with Newton polishing on the step polynomial.
    let mut lo = zero();
    let mut hi = h.clone();
    let mut glo = g0;
    for _ in 0..(2 * precision() as usize) {
        let mid = real(&lo + &hi) / 2u32;
        if mid == lo || mid == hi {
            break;
        }
        let gm = g(&mid);
        if gm.is_zero() {
            return Some(mid);
        }
        if gm.is_sign_positive() == glo.is_sign_positive() {
            lo = mid;
            glo = gm;
        } else {
            hi = mid;
        }
    }
    Some(hi)
}

/// Core driver: integrates from `x` for time `t` with spatial order `p`.
pub fn run<F: Field + ?Sized>(
    field: &F,
    x: &Real,
    t: &Real,
    p: usize,
    checkpoints: &[Real],
    stop_at: Option<&Real>,
    opts: &FlowOptions,
) -> Result<Trajectory> {
    let mut prefix = Jet::zero(x, p);
    let mut seg_base = x.clone();
    let mut u = vec![zero(); p + 1];
    let mut s = zero();
    let mut out = Vec::with_capacity(checkpoints.len());
    let mut next_cp = 0usize;
    let forward = t.is_sign_positive();
    let log_tol = -(opts.tol_bits as f64) * std::f64::consts::LN_2;
    let mut steps = 0usize;
    let mut stopped = false;

    let current = |prefix: &Jet, seg_base: &Real, u: &[Real]| -> Jet {
        let seg = Jet::new(seg_base.clone(), u.to_vec());
        compose_disp(&seg, prefix)
    };

    // Checkpoints at time zero.
    while next_cp < checkpoints.len() && checkpoints[next_cp].is_zero() {
        out.push(Jet::zero(x, p));
        next_cp += 1;
    }

    while s != *t {
        if steps >= opts.max_steps {
            return Err(Error::StepUnderflow { at: format!("{} (step cap reached)", real(&seg_base + &u[0])) });
        }
        steps += 1;
        let ts = step_series(field, &seg_base, &u, opts.time_order)?;
        let remaining = real(t - &s);
        let n = opts.time_order;
        let scale = sup_log(&ts[1]);
        let mut log_h = f64::INFINITY;
        if scale.is_finite() {
            for m in [n - 1, n] {
                let c = sup_log(&ts[m]);
                if c.is_finite() {
                    log_h = log_h.min((log_tol + scale - c) / (m as f64 - 1.0));
                }
            }
        }
        let mut h = if log_h.is_finite() {
            let mag = real(log_h).exp();
            if forward {
                mag
            } else {
                -mag
            }
        } else {
            remaining.clone()
        };
        if real(h.abs_ref()) >= real(remaining.abs_ref()) {
            h = remaining.clone();
        }
        if h.is_zero() || real(h.abs_ref()) < (real(s.abs_ref()) + 1u32) * crate::real::ulp() {
            return Err(Error::StepUnderflow { at: format!("{}", real(&seg_base + &u[0])) });
        }
        let mut hit_stop = false;
        if let Some(target) = stop_at {
            if let Some(tau) = crossing(&ts, &seg_base, &h, target) {
                h = tau;
                hit_stop = true;
            }
        }
        // Dense output inside this step.
        let s_new = real(&s + &h);
        while next_cp < checkpoints.len() {
            let cp = &checkpoints[next_cp];
            let inside = if forward { *cp <= s_new } else { *cp >= s_new };
            if !inside {
                break;
            }
            let local = real(cp - &s);
            let uc = eval_series(&ts, &local);
            out.push(current(&prefix, &seg_base, &uc));
            next_cp += 1;
        }
        u = eval_series(&ts, &h);
        s = s_new;
        if hit_stop {
            if let Some(target) = stop_at {
                u[0] = real(target - &seg_base);
            }
            stopped = true;
            break;
        }
        // Restart the segment once its linear term drifts far from the identity.
        if p >= 1 && real(u[1].abs_ref()) > 0.5 {
            prefix = current(&prefix, &seg_base, &u);
            seg_base = real(x + &prefix.coeffs[0]);
            u = vec![zero(); p + 1];
        }
    }
    let end = current(&prefix, &seg_base, &u);
    for v in &end.coeffs {
        if !v.is_finite() {
            return Err(Error::NonFinite("flow integration".into()));
        }
    }
    Ok(Trajectory { checkpoints: out, end, reached: s, stopped, steps })
}

/// Displacement jet of the time-`t` map at `x`.
pub fn integrate<F: Field + ?Sized>(field: &F, x: &Real, t: &Real, p: usize, opts: &FlowOptions) -> Result<Jet> {
    if t.is_zero() {
        return Ok(Jet::zero(x, p));
    }
    Ok(run(field, x, t, p, &[], None, opts)?.end)
}

/// Jet of `x ↦ φ^t(x)` at `x`.
pub fn flow_map(field: &dyn Field, t: &Real, x: &Real, order: usize) -> Result<Jet> {
    Ok(disp_to_map(&field.flow_disp_jet(x, t, order)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diffeo::{Interval, VectorField};
    use crate::real::{from_ratio, one, rel_err};

    fn logistic_closed(t: &Real, x: &Real) -> Real {
        let e = t.clone().exp();
        let num = real(x * &e);
        let den = real(1) - x + real(x * &e);
        num / den
    }

    #[test]
    fn linear_field() {
        let f = VectorField::parse("x", Interval::new(zero(), real(2))).unwrap();
        let j = flow_map(&f, &one(), &from_ratio(1, 2), 2).unwrap();
        let e = one().exp();
        assert!(rel_err(&j.coeffs[0], &real(&e / 2u32), 0.0) < 1e-45);
        assert!(rel_err(&j.coeffs[1], &e, 0.0) < 1e-45);
        assert!(real(j.coeffs[2].abs_ref()) < 1e-45);
    }

    #[test]
    fn logistic_flow_matches_closed_form() {
        let f = VectorField::parse("x*(1-x)", Interval::unit()).unwrap();
        let x = from_ratio(1, 4);
        let j = flow_map(&f, &one(), &x, 1).unwrap();
        let exact = logistic_closed(&one(), &x);
        assert!(rel_err(&j.coeffs[0], &exact, 0.0) < 1e-45);
        // Dφ^t(x) = ξ(φ^t x)/ξ(x).
        let y = &j.coeffs[0];
        let d = real(y * real(1 - y)) / real(&x * real(1 - &x));
        assert!(rel_err(&j.coeffs[1], &d, 0.0) < 1e-45);
        let back = flow_map(&f, &real(-1), &x, 0).unwrap();
        assert!(rel_err(&back.coeffs[0], &logistic_closed(&real(-1), &x), 0.0) < 1e-45);
    }

    #[test]
    fn time_zero_is_identity() {
        let f = VectorField::parse("x*(1-x)", Interval::unit()).unwrap();
        let j = flow_map(&f, &zero(), &real(0.3), 3).unwrap();
        assert_eq!(j, Jet::variable(&real(0.3), 3));
    }

    #[test]
    fn dense_output_and_stop() {
        let f = VectorField::parse("x*(1-x)", Interval::unit()).unwrap();
        let x = from_ratio(1, 4);
        let cps: Vec<Real> = (1..=5).map(|i| real(i)).collect();
        let tr = run(&f, &x, &real(5), 1, &cps, None, &FlowOptions::default()).unwrap();
        for (i, j) in tr.checkpoints.iter().enumerate() {
            let exact = logistic_closed(&real(i as i32 + 1), &x);
            assert!(rel_err(&real(&x + &j.coeffs[0]), &exact, 0.0) < 1e-45);
        }
        let half = from_ratio(1, 2);
        let tr = run(&f, &x, &real(5), 0, &[], Some(&half), &FlowOptions::default()).unwrap();
        assert!(tr.stopped);
        // time from 1/4 to 1/2 is ln 3
        assert!(rel_err(&tr.reached, &real(3).ln(), 0.0) < 1e-45);
    }
}
