//! Polynomial tables on panels, with exact jets and antiderivatives.

use crate::error::Result;
use crate::jet::Jet;
use crate::real::{chebyshev_lobatto, pi, real, zero, Real};

/// Polynomial `Σ a_n s^n` in `s = (x - mid)/half` on `[lo, hi]`.
#[derive(Clone, Debug)]
pub struct Panel {
    pub lo: Real,
    pub hi: Real,
    pub coeffs: Vec<Real>,
}

impl Panel {
    /// Interpolates `f` at `n` Chebyshev extrema of `[lo, hi]`.
    pub fn from_values<F>(lo: &Real, hi: &Real, n: usize, mut f: F) -> Result<Panel>
    where
        F: FnMut(&Real) -> Result<Real>,
    {
        let n = n.max(2);
        let nodes = chebyshev_lobatto(lo, hi, n);
        // nodes are increasing, so node i sits at cos(π(n-1-i)/(n-1))
        let mut vals = Vec::with_capacity(n);
        for x in &nodes {
            vals.push(f(x)?);
        }
        vals.reverse();
        let m = n - 1;
        let pi = pi();
        let mut cheb = vec![zero(); n];
        for (k, ck) in cheb.iter_mut().enumerate() {
            let mut acc = zero();
            for (j, v) in vals.iter().enumerate() {
                let theta = real(&pi * ((j * k) % (2 * m)) as u32) / m as u32;
                let mut term = real(v * theta.cos());
                if j == 0 || j == m {
                    term /= 2u32;
                }
                acc += term;
            }
            acc *= 2u32;
            acc /= m as u32;
            if k == 0 || k == m {
                acc /= 2u32;
            }
            *ck = acc;
        }
        Ok(Panel { lo: lo.clone(), hi: hi.clone(), coeffs: chebyshev_to_monomial(&cheb) })
    }

    fn mid(&self) -> Real {
        real(&self.lo + &self.hi) / 2u32
    }

    fn half(&self) -> Real {
        real(&self.hi - &self.lo) / 2u32
    }

    fn s(&self, x: &Real) -> Real {
        real(x - &self.mid()) / self.half()
    }

    pub fn eval(&self, x: &Real) -> Real {
        let s = self.s(x);
        let mut acc = zero();
        for a in self.coeffs.iter().rev() {
            acc *= &s;
            acc += a;
        }
        acc
    }

    /// Taylor jet at `x`; exact, since the table is a polynomial.
    pub fn jet(&self, x: &Real, order: usize) -> Jet {
        let s0 = self.s(x);
        // repeated synthetic division gives the coefficients in powers of (s - s0)
        let mut work = self.coeffs.clone();
        let deg = work.len();
        let mut out = vec![zero(); order + 1];
        let inv_half = self.half().recip();
        let mut scale = real(1);
        for (m, slot) in out.iter_mut().enumerate().take(deg.min(order + 1)) {
            for i in (m + 1..deg).rev() {
                let t = real(&work[i] * &s0);
                work[i - 1] += t;
            }
            *slot = real(&work[m] * &scale);
            scale *= &inv_half;
        }
        Jet::new(x.clone(), out)
    }

    /// Antiderivative in `x` vanishing at `mid`.
    fn integral(&self) -> Panel {
        let half = self.half();
        let mut c = vec![zero(); self.coeffs.len() + 1];
        for (n, a) in self.coeffs.iter().enumerate() {
            c[n + 1] = real(a * &half) / (n as u32 + 1);
        }
        Panel { lo: self.lo.clone(), hi: self.hi.clone(), coeffs: c }
    }
}

/// Chebyshev series `Σ c_k T_k(s)` to monomials in `s`.
fn chebyshev_to_monomial(cheb: &[Real]) -> Vec<Real> {
    let n = cheb.len();
    let mut out = vec![zero(); n];
    let mut prev = vec![zero(); n];
    let mut cur = vec![zero(); n];
    prev[0] = real(1);
    if n > 1 {
        cur[1] = real(1);
    }
    for (k, ck) in cheb.iter().enumerate() {
        let t = if k == 0 { &prev } else { &cur };
        for (o, tk) in out.iter_mut().zip(t) {
            *o += real(ck * tk);
        }
        if k >= 1 && k + 1 < n {
            // T_{k+1} = 2 s T_k - T_{k-1}
            let mut next = vec![zero(); n];
            for i in 0..n {
                if i >= 1 {
                    next[i] += real(&cur[i - 1] * 2u32);
                }
                next[i] -= &prev[i];
            }
            prev = std::mem::replace(&mut cur, next);
        }
    }
    out
}

/// Panels covering an interval left to right.
#[derive(Clone, Debug)]
pub struct Piecewise {
    pub panels: Vec<Panel>,
}

impl Piecewise {
    fn locate(&self, x: &Real) -> &Panel {
        self.panels.iter().find(|p| *x <= p.hi).unwrap_or_else(|| self.panels.last().unwrap())
    }

    pub fn eval(&self, x: &Real) -> Real {
        self.locate(x).eval(x)
    }

    pub fn jet(&self, x: &Real, order: usize) -> Jet {
        self.locate(x).jet(x, order)
    }

    /// Continuous antiderivative taking the value `at_value` at `at` (inside the last panel).
    pub fn antiderivative(&self, at: &Real, at_value: &Real) -> Piecewise {
        let mut out: Vec<Panel> = self.panels.iter().map(Panel::integral).collect();
        let last = out.len() - 1;
        let shift = real(at_value - &out[last].eval(at));
        out[last].coeffs[0] += shift;
        for i in (0..last).rev() {
            let left_of_next = out[i + 1].eval(&out[i + 1].lo.clone());
            let shift = real(&left_of_next - &out[i].eval(&out[i].hi.clone()));
            out[i].coeffs[0] += shift;
        }
        Piecewise { panels: out }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::real::from_ratio;

    #[test]
    fn reproduces_polynomials_and_integrates() {
        let (lo, hi) = (from_ratio(1, 10), from_ratio(7, 10));
        let p = Panel::from_values(&lo, &hi, 8, |x| Ok(real(x * x) * x - real(x * 2u32) + 1u32)).unwrap();
        let x = from_ratio(1, 3);
        let want = real(&x * &x) * &x - real(&x * 2u32) + 1u32;
        assert!(real(p.eval(&x) - &want).abs() < 1e-60);
        let j = p.jet(&x, 4);
        assert!(real(&j.coeffs[1] - (real(&x * &x) * 3u32 - 2u32)).abs() < 1e-60);
        assert!(real(&j.coeffs[3] - 1u32).abs() < 1e-60);
        assert!(real(j.coeffs[4].abs_ref()) < 1e-60);
        let pw = Piecewise { panels: vec![p.clone()] };
        let a = pw.antiderivative(&hi, &zero());
        // ∫_x^hi (t^3 - 2t + 1) dt
        let prim = |t: &Real| real(t * t) * t * t / 4u32 - real(t * t) + t;
        let want = real(prim(&x) - prim(&hi));
        assert!(real(a.eval(&x) - want).abs() < 1e-60);
    }
}
