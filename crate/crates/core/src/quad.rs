//! Double-exponential (tanh-sinh) quadrature.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use crate::error::{Error, Result};
use crate::real::{pi, pow2, precision, real, zero, Real};

#[derive(Clone, Debug)]
pub struct Quadrature {
    pub value: Real,
    /// Difference between the last two refinement levels.
    pub error: Real,
    pub evaluations: usize,
    pub levels: usize,
}

/// `∫_a^b f`, refining until two successive levels agree to `tol` relative to the result.
///
/// Nodes cluster doubly exponentially at both endpoints, so integrands with integrable endpoint
/// singularities are handled.
pub fn tanh_sinh<F>(f: F, a: &Real, b: &Real, tol: &Real, max_levels: usize) -> Result<Quadrature>
where
    F: Fn(&Real) -> Result<Real>,
{
    if a == b {
        return Ok(Quadrature { value: zero(), error: zero(), evaluations: 0, levels: 0 });
    }
    let (lo, hi, sign) = if a < b { (a.clone(), b.clone(), 1) } else { (b.clone(), a.clone(), -1) };
    let half = real(&hi - &lo) / 2u32;
    let half_pi = pi() / 2u32;
    // Truncate where the node distance to an endpoint drops below the working precision.
    let bits = precision() as f64;
    let t_max = ((bits * std::f64::consts::LN_2 + 10.0) / std::f64::consts::FRAC_PI_2).asinh();
    let t_max = real(t_max);

    // Contribution of node t (both ±t when t > 0): weight times integrand values.
    let node = |t: &Real| -> Result<Real> {
        let s = real(t.sinh_ref()) * &half_pi;
        let c = real(t.cosh_ref()) * &half_pi;
        let ch = real(s.cosh_ref());
        // 1 - tanh(s) = 2 / (e^{2s} + 1), computed without cancellation.
        let e2 = real(&s * 2u32).exp();
        let dist = real(2u32) / (e2 + 1u32) * &half;
        let w = c / real(&ch * &ch) * &half;
        if dist.is_zero() {
            return Ok(zero());
        }
        let right = real(&hi - &dist);
        let left = real(&lo + &dist);
        let mut acc = f(&right)?;
        if !t.is_zero() {
            acc += f(&left)?;
        }
        Ok(acc * w)
    };

    let mut h = real(1);
    let mut evaluations = 0usize;
    let mut sum = node(&zero())?;
    evaluations += 1;
    let mut k = 1u64;
    loop {
        let t = real(&h * k);
        if t > t_max {
            break;
        }
        sum += node(&t)?;
        evaluations += 2;
        k += 1;
    }
    let mut estimate = real(&sum * &h);
    let mut error = real(estimate.abs_ref());
    for level in 1..=max_levels {
        h /= 2u32;
        // Only the odd multiples are new.
        let mut k = 1u64;
        loop {
            let t = real(&h * k);
            if t > t_max {
                break;
            }
            sum += node(&t)?;
            evaluations += 2;
            k += 2;
        }
        let next = real(&sum * &h);
        error = real(&next - &estimate).abs();
        estimate = next;
        if !estimate.is_finite() {
            return Err(Error::NonFinite("quadrature".into()));
        }
        if level >= 3 && error <= real(estimate.abs_ref()) * tol {
            let value = if sign > 0 { estimate } else { -estimate };
            return Ok(Quadrature { value, error, evaluations, levels: level });
        }
    }
    Err(Error::NonConverged {
        what: format!("tanh-sinh quadrature (last change {})", error.to_f64()),
        iterations: max_levels,
    })
}

/// Gauss–Legendre nodes and weights on `[-1, 1]`, cached per `(n, precision)`.
fn legendre_rule(n: usize) -> Arc<(Vec<Real>, Vec<Real>)> {
    static CACHE: OnceLock<Mutex<HashMap<(usize, u32), Arc<(Vec<Real>, Vec<Real>)>>>> = OnceLock::new();
    let key = (n, precision());
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    if let Some(r) = cache.lock().unwrap().get(&key) {
        return r.clone();
    }
    let mut nodes = Vec::with_capacity(n);
    let mut weights = Vec::with_capacity(n);
    let eps = pow2(-(precision() as i32) + 4);
    for i in 0..n {
        // Chebyshev-like initial guess, then Newton on P_n.
        let mut x = real(std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = zero();
        for _ in 0..100 {
            let (mut p0, mut p1) = (real(1), x.clone());
            for j in 2..=n {
                let p2 = (real(&x * &p1) * (2 * j as u32 - 1) - real(&p0 * (j as u32 - 1))) / j as u32;
                p0 = p1;
                p1 = p2;
            }
            // P_n'(x) = n (x P_n - P_{n-1}) / (x^2 - 1)
            dp = (real(&x * &p1) - &p0) * n as u32 / (real(&x * &x) - 1u32);
            let dx = real(&p1 / &dp);
            x -= &dx;
            if dx.abs() <= eps {
                break;
            }
        }
        let w = real(2) / ((real(1) - real(&x * &x)) * real(&dp * &dp));
        nodes.push(x);
        weights.push(w);
    }
    let r = Arc::new((nodes, weights));
    cache.lock().unwrap().insert(key, r.clone());
    r
}

fn gauss_panel<F>(f: &F, a: &Real, b: &Real, n: usize) -> Result<Real>
where
    F: Fn(&Real) -> Result<Real>,
{
    let rule = legendre_rule(n);
    let mid = real(a + b) / 2u32;
    let half = real(b - a) / 2u32;
    let mut acc = zero();
    for (x, w) in rule.0.iter().zip(&rule.1) {
        let v = f(&real(&mid + real(&half * x)))?;
        acc += v * w;
    }
    Ok(acc * half)
}

/// `∫_a^b f` for integrands analytic on a neighbourhood of `[a, b]`: 16- and 32-point
/// Gauss–Legendre rules are compared, bisecting the panel (at most `max_depth` times) until
/// they agree to `tol` relative to the result.
pub fn gauss_legendre<F>(f: F, a: &Real, b: &Real, tol: &Real, max_depth: usize) -> Result<Quadrature>
where
    F: Fn(&Real) -> Result<Real>,
{
    fn rec<F: Fn(&Real) -> Result<Real>>(
        f: &F,
        a: &Real,
        b: &Real,
        tol: &Real,
        depth: usize,
        evals: &mut usize,
    ) -> Result<(Real, Real, usize)> {
        let coarse = gauss_panel(f, a, b, 16)?;
        let fine = gauss_panel(f, a, b, 32)?;
        *evals += 48;
        let err = real(&fine - &coarse).abs();
        if !fine.is_finite() {
            return Err(Error::NonFinite("quadrature".into()));
        }
        if err <= real(fine.abs_ref()) * tol || err.is_zero() {
            return Ok((fine, err, 0));
        }
        if depth == 0 {
            return Err(Error::NonConverged {
                what: format!("Gauss-Legendre quadrature (last change {})", err.to_f64()),
                iterations: 0,
            });
        }
        let mid = real(a + b) / 2u32;
        let (l, el, dl) = rec(f, a, &mid, tol, depth - 1, evals)?;
        let (r, er, dr) = rec(f, &mid, b, tol, depth - 1, evals)?;
        Ok((l + r, el + er, 1 + dl.max(dr)))
    }
    if a == b {
        return Ok(Quadrature { value: zero(), error: zero(), evaluations: 0, levels: 0 });
    }
    let mut evaluations = 0;
    let (value, error, levels) = rec(&f, a, b, tol, max_depth, &mut evaluations)?;
    Ok(Quadrature { value, error, evaluations, levels })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::real::{from_ratio, one, pow2, rel_err};

    #[test]
    fn smooth_and_singular() {
        let tol = pow2(-200);
        let q = tanh_sinh(|x| Ok(x.clone().exp()), &zero(), &one(), &tol, 12).unwrap();
        assert!(rel_err(&q.value, &(one().exp() - 1u32), 0.0) < 1e-55);
        // ∫ du/(u(1-u)) over [1/4, 1/2] = ln 3
        let q =
            tanh_sinh(|u| Ok(real(u * real(1 - u)).recip()), &from_ratio(1, 4), &from_ratio(1, 2), &tol, 12).unwrap();
        assert!(rel_err(&q.value, &real(3).ln(), 0.0) < 1e-55);
        // reversed limits flip the sign; endpoint singularity 1/sqrt(x)
        let q = tanh_sinh(|x| Ok(x.clone().sqrt().recip()), &one(), &zero(), &pow2(-100), 12).unwrap();
        assert!(rel_err(&q.value, &real(-2), 0.0) < 1e-25);
    }

    #[test]
    fn gauss_rules() {
        let tol = pow2(-200);
        let q = gauss_legendre(|x| Ok(x.clone().exp()), &zero(), &one(), &tol, 8).unwrap();
        assert!(rel_err(&q.value, &(one().exp() - 1u32), 0.0) < 1e-55);
        let q = gauss_legendre(|u| Ok(real(u * real(1 - u)).recip()), &from_ratio(1, 4), &from_ratio(1, 2), &tol, 8)
            .unwrap();
        assert!(rel_err(&q.value, &real(3).ln(), 0.0) < 1e-55);
        let rule = legendre_rule(5);
        let total: Real = rule.1.iter().fold(zero(), |a, b| a + b);
        assert!(real(total - 2u32).abs() < 1e-70);
    }
}
