//! Truncated Taylor expansions. `coeffs[n]` holds `D^n f(base) / n!`.

use rug::ops::Pow;

use crate::error::{Error, Result};
use crate::real::{one, real, zero, Real};

/// Largest supported jet order.
pub const K_MAX: usize = 16;

/// Coefficient-level kernels shared by [`Jet`] and the flow integrator.
pub mod series {
    use super::*;

    pub fn zeros(n: usize) -> Vec<Real> {
        (0..n).map(|_| zero()).collect()
    }

    pub fn add(a: &[Real], b: &[Real]) -> Vec<Real> {
        a.iter().zip(b).map(|(x, y)| real(x + y)).collect()
    }

    pub fn sub(a: &[Real], b: &[Real]) -> Vec<Real> {
        a.iter().zip(b).map(|(x, y)| real(x - y)).collect()
    }

    pub fn scale(a: &[Real], s: &Real) -> Vec<Real> {
        a.iter().map(|x| real(x * s)).collect()
    }

    /// n-th coefficient of the product.
    pub fn mul_coeff(a: &[Real], b: &[Real], n: usize) -> Real {
        let mut acc = zero();
        for k in 0..=n {
            acc += &a[k] * &b[n - k];
        }
        acc
    }

    pub fn mul(a: &[Real], b: &[Real]) -> Vec<Real> {
        (0..a.len()).map(|n| mul_coeff(a, b, n)).collect()
    }

    pub fn div(a: &[Real], b: &[Real]) -> Vec<Real> {
        let mut c: Vec<Real> = Vec::with_capacity(a.len());
        for n in 0..a.len() {
            let mut acc = a[n].clone();
            for k in 1..=n {
                acc -= &b[k] * &c[n - k];
            }
            c.push(acc / &b[0]);
        }
        c
    }

    pub fn exp(a: &[Real]) -> Vec<Real> {
        let mut e = vec![real(a[0].exp_ref())];
        for n in 1..a.len() {
            let mut acc = zero();
            for k in 1..=n {
                acc += real(&a[k] * &e[n - k]) * k as u32;
            }
            e.push(acc / n as u32);
        }
        e
    }

    pub fn log(a: &[Real]) -> Vec<Real> {
        let mut l = vec![real(a[0].ln_ref())];
        for n in 1..a.len() {
            let mut acc = zero();
            for k in 1..n {
                acc += real(&l[k] * &a[n - k]) * k as u32;
            }
            let v = (real(&a[n] * n as u32) - acc) / n as u32;
            l.push(v / &a[0]);
        }
        l
    }

    pub fn sin_cos(a: &[Real]) -> (Vec<Real>, Vec<Real>) {
        let (s0, c0) = real(&a[0]).sin_cos(zero());
        let mut s = vec![s0];
        let mut c = vec![c0];
        for n in 1..a.len() {
            let mut sa = zero();
            let mut ca = zero();
            for k in 1..=n {
                let ka = real(&a[k] * k as u32);
                sa += &ka * &c[n - k];
                ca += &ka * &s[n - k];
            }
            s.push(sa / n as u32);
            c.push(-ca / n as u32);
        }
        (s, c)
    }

    /// `a^r` for real `r`, requires `a[0] > 0` unless `r` is a non-negative integer.
    pub fn powr(a: &[Real], r: &Real) -> Vec<Real> {
        let mut p = vec![real((&a[0]).pow(r))];
        for n in 1..a.len() {
            let mut acc = zero();
            for k in 1..=n {
                let w = real(r * k as u32) - (n - k) as u32;
                acc += real(&a[k] * &p[n - k]) * w;
            }
            p.push(acc / real(&a[0] * n as u32));
        }
        p
    }

    pub fn powi(a: &[Real], e: u32) -> Vec<Real> {
        let mut result = zeros(a.len());
        result[0] = one();
        let mut base = a.to_vec();
        let mut e = e;
        while e > 0 {
            if e & 1 == 1 {
                result = mul(&result, &base);
            }
            e >>= 1;
            if e > 0 {
                base = mul(&base, &base);
            }
        }
        result
    }

    /// Substitutes `d` (zero constant term) into the polynomial with coefficients `outer`.
    pub fn compose_shifted(outer: &[Real], d: &[Real]) -> Vec<Real> {
        let n = d.len();
        let mut r = zeros(n);
        for j in (0..outer.len().min(n)).rev() {
            r = mul(&r, d);
            r[0] += &outer[j];
        }
        r
    }

    /// Evaluates the truncated series at offset `h`.
    pub fn eval(a: &[Real], h: &Real) -> Real {
        let mut acc = zero();
        for c in a.iter().rev() {
            acc *= h;
            acc += c;
        }
        acc
    }
}

/// Truncated Taylor expansion at `base`.
#[derive(Clone, Debug, PartialEq)]
pub struct Jet {
    pub base: Real,
    pub coeffs: Vec<Real>,
}

impl Jet {
    pub fn new(base: Real, coeffs: Vec<Real>) -> Jet {
        assert!(!coeffs.is_empty(), "a jet needs at least one coefficient");
        Jet { base, coeffs }
    }

    pub fn constant(base: &Real, value: Real, order: usize) -> Jet {
        let mut coeffs = series::zeros(order + 1);
        coeffs[0] = value;
        Jet::new(base.clone(), coeffs)
    }

    pub fn zero(base: &Real, order: usize) -> Jet {
        Jet::constant(base, zero(), order)
    }

    /// Jet of the identity map `x`.
    pub fn variable(base: &Real, order: usize) -> Jet {
        let mut j = Jet::constant(base, base.clone(), order);
        if order >= 1 {
            j.coeffs[1] = one();
        }
        j
    }

    /// Builds a jet from raw derivatives `D^n f(base)`.
    pub fn from_derivatives(base: &Real, derivs: &[Real]) -> Jet {
        let mut fact = one();
        let coeffs = derivs
            .iter()
            .enumerate()
            .map(|(n, d)| {
                if n > 1 {
                    fact *= n as u32;
                }
                real(d / &fact)
            })
            .collect();
        Jet::new(base.clone(), coeffs)
    }

    pub fn order(&self) -> usize {
        self.coeffs.len() - 1
    }

    pub fn value(&self) -> &Real {
        &self.coeffs[0]
    }

    /// `D^n f(base)`.
    pub fn derivative(&self, n: usize) -> Real {
        let mut d = self.coeffs[n].clone();
        for i in 2..=n {
            d *= i as u32;
        }
        d
    }

    pub fn derivatives(&self) -> Vec<Real> {
        (0..=self.order()).map(|n| self.derivative(n)).collect()
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.iter().all(|c| c.is_zero())
    }

    pub fn truncate(&self, order: usize) -> Jet {
        let mut coeffs = self.coeffs.clone();
        coeffs.truncate(order + 1);
        while coeffs.len() < order + 1 {
            coeffs.push(zero());
        }
        Jet::new(self.base.clone(), coeffs)
    }

    fn check(&self, other: &Jet) -> Result<()> {
        if self.order() != other.order() {
            return Err(Error::Mismatch(format!("orders {} and {}", self.order(), other.order())));
        }
        if self.base != other.base {
            return Err(Error::Mismatch(format!("bases {} and {}", self.base, other.base)));
        }
        Ok(())
    }

    fn with(&self, coeffs: Vec<Real>, what: &str) -> Result<Jet> {
        if coeffs.iter().any(|c| !c.is_finite()) {
            return Err(Error::NonFinite(format!("jet {what}")));
        }
        Ok(Jet::new(self.base.clone(), coeffs))
    }

    pub fn add(&self, other: &Jet) -> Result<Jet> {
        self.check(other)?;
        self.with(series::add(&self.coeffs, &other.coeffs), "add")
    }

    pub fn sub(&self, other: &Jet) -> Result<Jet> {
        self.check(other)?;
        self.with(series::sub(&self.coeffs, &other.coeffs), "sub")
    }

    pub fn mul(&self, other: &Jet) -> Result<Jet> {
        self.check(other)?;
        self.with(series::mul(&self.coeffs, &other.coeffs), "mul")
    }

    pub fn div(&self, other: &Jet) -> Result<Jet> {
        self.check(other)?;
        if other.coeffs[0].is_zero() {
            return Err(Error::Domain("division by a jet with zero constant term".into()));
        }
        self.with(series::div(&self.coeffs, &other.coeffs), "div")
    }

    pub fn neg(&self) -> Jet {
        Jet::new(self.base.clone(), self.coeffs.iter().map(|c| real(-c)).collect())
    }

    pub fn scale(&self, s: &Real) -> Jet {
        Jet::new(self.base.clone(), series::scale(&self.coeffs, s))
    }

    pub fn add_scalar(&self, s: &Real) -> Jet {
        let mut j = self.clone();
        j.coeffs[0] += s;
        j
    }

    pub fn exp(&self) -> Result<Jet> {
        self.with(series::exp(&self.coeffs), "exp")
    }

    pub fn log(&self) -> Result<Jet> {
        if self.coeffs[0] <= 0 {
            return Err(Error::Domain(format!("log of non-positive value {}", self.coeffs[0])));
        }
        self.with(series::log(&self.coeffs), "log")
    }

    /// `log(1 + self)`, keeping the constant term accurate when it is tiny.
    pub fn ln_1p(&self) -> Result<Jet> {
        let mut j = self.add_scalar(&one()).log()?;
        j.coeffs[0] = real(self.coeffs[0].ln_1p_ref());
        Ok(j)
    }

    pub fn sin(&self) -> Result<Jet> {
        self.with(series::sin_cos(&self.coeffs).0, "sin")
    }

    pub fn cos(&self) -> Result<Jet> {
        self.with(series::sin_cos(&self.coeffs).1, "cos")
    }

    /// `self^r`; non-integer exponents need a positive constant term.
    pub fn powr(&self, r: &Real) -> Result<Jet> {
        if r.is_integer() && *r >= 0 {
            let e = r.to_u32_saturating().unwrap_or(u32::MAX);
            return Ok(self.powi(e));
        }
        if self.coeffs[0] <= 0 {
            return Err(Error::Domain(format!("power {r} of non-positive value {}", self.coeffs[0])));
        }
        self.with(series::powr(&self.coeffs, r), "power")
    }

    pub fn powi(&self, e: u32) -> Jet {
        Jet::new(self.base.clone(), series::powi(&self.coeffs, e))
    }

    /// Jet of `outer ∘ inner` at `inner.base`.
    pub fn compose(outer: &Jet, inner: &Jet) -> Result<Jet> {
        if outer.order() != inner.order() {
            return Err(Error::Mismatch(format!("orders {} and {}", outer.order(), inner.order())));
        }
        if outer.base != inner.coeffs[0] {
            return Err(Error::Mismatch(format!(
                "outer base {} differs from inner value {}",
                outer.base, inner.coeffs[0]
            )));
        }
        Ok(Jet::compose_unchecked(outer, inner))
    }

    /// Composition that trusts the caller about the base point.
    pub fn compose_unchecked(outer: &Jet, inner: &Jet) -> Jet {
        let mut d = inner.coeffs.clone();
        d[0] = zero();
        Jet::new(inner.base.clone(), series::compose_shifted(&outer.coeffs, &d))
    }

    /// Jet of the local inverse, based at `self.coeffs[0]`.
    pub fn invert(&self) -> Result<Jet> {
        let k = self.order();
        if k >= 1 && self.coeffs[1].is_zero() {
            return Err(Error::Domain("inverse of a jet with zero linear coefficient".into()));
        }
        let mut result = series::zeros(k + 1);
        result[0] = self.base.clone();
        if k == 0 {
            return Ok(Jet::new(self.coeffs[0].clone(), result));
        }
        // d solves sum_{j>=1} a_j d^j = w, fixed one order per sweep.
        let a1 = &self.coeffs[1];
        let mut d = series::zeros(k + 1);
        d[1] = real(a1.recip_ref());
        let mut higher = self.coeffs.clone();
        higher[0] = zero();
        higher[1] = zero();
        for _ in 1..k {
            let mut rhs = series::compose_shifted(&higher, &d);
            for c in rhs.iter_mut() {
                *c = real(-&*c);
            }
            rhs[1] += 1u32;
            d = rhs.iter().map(|c| real(c / a1)).collect();
            d[0] = zero();
        }
        for n in 1..=k {
            result[n] = d[n].clone();
        }
        let base = self.coeffs[0].clone();
        if result.iter().any(|c| !c.is_finite()) {
            return Err(Error::NonFinite("jet inverse".into()));
        }
        Ok(Jet::new(base, result))
    }

    /// Jet (one order lower) of the derivative function.
    pub fn diff(&self) -> Jet {
        let k = self.order();
        if k == 0 {
            return Jet::zero(&self.base, 0);
        }
        let coeffs = (1..=k).map(|n| real(&self.coeffs[n] * n as u32)).collect();
        Jet::new(self.base.clone(), coeffs)
    }

    /// Jet (one order higher) of the antiderivative with value `c0` at the base.
    pub fn integrate(&self, c0: Real) -> Jet {
        let mut coeffs = vec![c0];
        for (n, c) in self.coeffs.iter().enumerate() {
            coeffs.push(real(c / (n + 1) as u32));
        }
        Jet::new(self.base.clone(), coeffs)
    }

    /// Value of the Taylor polynomial at `base + h`.
    pub fn eval_offset(&self, h: &Real) -> Real {
        series::eval(&self.coeffs, h)
    }

    /// Taylor polynomial re-expanded at `x`, truncated to `order`.
    pub fn recenter(&self, x: &Real, order: usize) -> Jet {
        let h = real(x - &self.base);
        let mut work = self.coeffs.clone();
        let deg = work.len();
        let mut out = series::zeros(order + 1);
        for (m, slot) in out.iter_mut().enumerate().take(deg) {
            for i in (m + 1..deg).rev() {
                let t = real(&work[i] * &h);
                work[i - 1] += t;
            }
            *slot = work[m].clone();
        }
        Jet::new(x.clone(), out)
    }

    /// Jet of `L g = D^2 g / D g`, two orders below `self`.
    pub fn nonlinearity(&self) -> Result<Jet> {
        let d = self.diff();
        let dd = d.diff();
        dd.div(&d.truncate(dd.order()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::real::from_ratio;

    fn j(base: i64, cs: &[(i64, i64)]) -> Jet {
        Jet::new(real(base), cs.iter().map(|&(p, q)| from_ratio(p, q)).collect())
    }

    fn close(a: &Jet, b: &Jet, tol: f64) -> bool {
        a.coeffs.len() == b.coeffs.len()
            && a.coeffs.iter().zip(&b.coeffs).all(|(x, y)| real(x - y).abs().to_f64() <= tol)
    }

    #[test]
    fn product_of_polynomials() {
        let x = Jet::variable(&zero(), 2);
        let one_minus = x.neg().add_scalar(&one());
        assert_eq!(x.mul(&one_minus).unwrap(), j(0, &[(0, 1), (1, 1), (-1, 1)]));
    }

    #[test]
    fn geometric_series() {
        let x = Jet::variable(&zero(), 3);
        let den = x.neg().add_scalar(&one());
        let num = Jet::constant(&zero(), one(), 3);
        assert_eq!(num.div(&den).unwrap(), j(0, &[(1, 1), (1, 1), (1, 1), (1, 1)]));
    }

    #[test]
    fn sine_times_exponential() {
        let x = Jet::variable(&zero(), 3);
        let p = x.sin().unwrap().mul(&x.exp().unwrap()).unwrap();
        // (x - x^3/6)(1 + x + x^2/2 + x^3/6) = x + x^2 + x^3/3 + ...
        assert!(close(&p, &j(0, &[(0, 1), (1, 1), (1, 1), (1, 3)]), 1e-70));
    }

    #[test]
    fn elementary_functions() {
        let x = Jet::variable(&zero(), 3);
        assert!(close(&x.exp().unwrap(), &j(0, &[(1, 1), (1, 1), (1, 2), (1, 6)]), 1e-70));
        let lg = x.add_scalar(&one()).log().unwrap();
        assert!(close(&lg, &j(0, &[(0, 1), (1, 1), (-1, 2), (1, 3)]), 1e-70));
        let y = Jet::variable(&zero(), 4).add_scalar(&real(2));
        let round = y.log().unwrap().exp().unwrap();
        assert!(close(&round, &y, 1e-70));
        assert!(Jet::variable(&zero(), 2).log().is_err());
    }

    #[test]
    fn composition_examples() {
        let x = Jet::variable(&zero(), 3);
        let two_x = x.scale(&real(2));
        let sin = x.sin().unwrap();
        let c = Jet::compose(&sin, &two_x).unwrap();
        assert!(close(&c, &j(0, &[(0, 1), (2, 1), (0, 1), (-4, 3)]), 1e-70));
        assert_eq!(Jet::compose(&sin, &x).unwrap(), sin);

        let x2 = Jet::variable(&zero(), 2);
        let inner = x2.add(&x2.powi(2)).unwrap();
        let outer = x2.exp().unwrap();
        let c = Jet::compose(&outer, &inner).unwrap();
        assert!(close(&c, &j(0, &[(1, 1), (1, 1), (3, 2)]), 1e-70));
        assert!(Jet::compose(&outer, &inner.add_scalar(&one())).is_err());
    }

    #[test]
    fn inversion_examples() {
        let x = Jet::variable(&zero(), 3);
        assert!(close(&x.scale(&real(2)).invert().unwrap(), &j(0, &[(0, 1), (1, 2), (0, 1), (0, 1)]), 1e-70));
        assert_eq!(x.invert().unwrap(), x);
        let q = x.add(&x.powi(2)).unwrap();
        assert!(close(&q.invert().unwrap(), &j(0, &[(0, 1), (1, 1), (-1, 1), (2, 1)]), 1e-70));
        assert!(x.powi(2).invert().is_err());
    }

    #[test]
    fn mismatched_jets_are_rejected() {
        let a = Jet::variable(&zero(), 2);
        let b = Jet::variable(&one(), 2);
        let c = Jet::variable(&zero(), 3);
        assert!(matches!(a.add(&b), Err(Error::Mismatch(_))));
        assert!(matches!(a.mul(&c), Err(Error::Mismatch(_))));
        assert!(a.div(&a).is_err());
    }
}
