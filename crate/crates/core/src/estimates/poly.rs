//! Multivariate polynomials with integer coefficients and the `P_n`, `Q_{n,q}` recursions.

use std::collections::BTreeMap;
use std::fmt;

use crate::real::{real, zero, Real};

/// Polynomial in `X_1 … X_m`; exponent vectors map to nonzero coefficients.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct IntPolynomial {
    pub vars: usize,
    pub terms: BTreeMap<Vec<u32>, i64>,
}

impl IntPolynomial {
    pub fn zero(vars: usize) -> IntPolynomial {
        IntPolynomial { vars, terms: BTreeMap::new() }
    }

    pub fn constant(vars: usize, c: i64) -> IntPolynomial {
        let mut p = IntPolynomial::zero(vars);
        p.add_term(vec![0; vars], c);
        p
    }

    /// `X_i` (1-based).
    pub fn var(vars: usize, i: usize) -> IntPolynomial {
        let mut e = vec![0; vars];
        e[i - 1] = 1;
        let mut p = IntPolynomial::zero(vars);
        p.add_term(e, 1);
        p
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    fn add_term(&mut self, e: Vec<u32>, c: i64) {
        if c == 0 {
            return;
        }
        let v = self.terms.entry(e.clone()).or_insert(0);
        *v += c;
        if *v == 0 {
            self.terms.remove(&e);
        }
    }

    /// Same polynomial viewed in more variables.
    pub fn widen(&self, vars: usize) -> IntPolynomial {
        assert!(vars >= self.vars);
        let mut p = IntPolynomial::zero(vars);
        for (e, c) in &self.terms {
            let mut e2 = e.clone();
            e2.resize(vars, 0);
            p.add_term(e2, *c);
        }
        p
    }

    pub fn add(&self, other: &IntPolynomial) -> IntPolynomial {
        let vars = self.vars.max(other.vars);
        let mut p = self.widen(vars);
        for (e, c) in &other.widen(vars).terms {
            p.add_term(e.clone(), *c);
        }
        p
    }

    pub fn scale(&self, s: i64) -> IntPolynomial {
        let mut p = IntPolynomial::zero(self.vars);
        for (e, c) in &self.terms {
            p.add_term(e.clone(), c * s);
        }
        p
    }

    pub fn mul(&self, other: &IntPolynomial) -> IntPolynomial {
        let vars = self.vars.max(other.vars);
        let a = self.widen(vars);
        let b = other.widen(vars);
        let mut p = IntPolynomial::zero(vars);
        for (ea, ca) in &a.terms {
            for (eb, cb) in &b.terms {
                let e: Vec<u32> = ea.iter().zip(eb).map(|(x, y)| x + y).collect();
                p.add_term(e, ca * cb);
            }
        }
        p
    }

    /// `∂/∂X_i` (1-based).
    pub fn partial(&self, i: usize) -> IntPolynomial {
        let mut p = IntPolynomial::zero(self.vars);
        for (e, c) in &self.terms {
            let k = e[i - 1];
            if k > 0 {
                let mut e2 = e.clone();
                e2[i - 1] -= 1;
                p.add_term(e2, c * k as i64);
            }
        }
        p
    }

    pub fn eval(&self, xs: &[Real]) -> Real {
        let mut acc = zero();
        for (e, c) in &self.terms {
            let mut t = real(*c);
            for (x, k) in xs.iter().zip(e) {
                if *k > 0 {
                    t *= real(rug::ops::Pow::pow(x, *k));
                }
            }
            acc += t;
        }
        acc
    }

    /// Substitutes `X_i := X^i`, returning the coefficients by degree in `X`.
    pub fn substitute_powers(&self) -> BTreeMap<u32, i64> {
        let mut out = BTreeMap::new();
        for (e, c) in &self.terms {
            let deg: u32 = e.iter().enumerate().map(|(i, k)| (i as u32 + 1) * k).sum();
            *out.entry(deg).or_insert(0) += c;
        }
        out.retain(|_, c| *c != 0);
        out
    }

    pub fn coefficients_nonnegative(&self) -> bool {
        self.terms.values().all(|c| *c >= 0)
    }

    fn total_degree(e: &[u32]) -> u32 {
        e.iter().sum()
    }
}

impl fmt::Display for IntPolynomial {
    /// Terms in ascending total degree, then lexicographically: `3*X1*X3 + X2^2 + X1^2*X2`.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.terms.is_empty() {
            return write!(f, "0");
        }
        let mut terms: Vec<(&Vec<u32>, &i64)> = self.terms.iter().collect();
        terms.sort_by(|a, b| {
            IntPolynomial::total_degree(a.0).cmp(&IntPolynomial::total_degree(b.0)).then_with(|| b.0.cmp(a.0))
        });
        for (n, (e, c)) in terms.into_iter().enumerate() {
            let mut factors: Vec<String> = Vec::new();
            for (i, k) in e.iter().enumerate() {
                match k {
                    0 => {}
                    1 => factors.push(format!("X{}", i + 1)),
                    _ => factors.push(format!("X{}^{}", i + 1, k)),
                }
            }
            let mag = c.abs();
            let body = match (mag, factors.is_empty()) {
                (_, true) => mag.to_string(),
                (1, false) => factors.join("*"),
                _ => format!("{}*{}", mag, factors.join("*")),
            };
            if n == 0 {
                if *c < 0 {
                    write!(f, "-")?;
                }
                write!(f, "{}", body)?;
            } else {
                write!(f, " {} {}", if *c < 0 { "-" } else { "+" }, body)?;
            }
        }
        Ok(())
    }
}

/// `P_n` and `Q_{n,0} … Q_{n,n-1}`, polynomials in `n - 1` variables.
#[derive(Clone, Debug)]
pub struct Recursion {
    pub n: usize,
    pub p: IntPolynomial,
    pub q: Vec<IntPolynomial>,
}

/// `(i-1)·X_1·X_i + X_{i+1}`, the Lie derivative of `X_i` along the field.
fn lie_of_var(vars: usize, i: usize) -> IntPolynomial {
    let next = IntPolynomial::var(vars, i + 1);
    if i == 1 {
        return next;
    }
    IntPolynomial::var(vars, 1).mul(&IntPolynomial::var(vars, i)).scale(i as i64 - 1).add(&next)
}

/// Builds the recursions up to level `n` (inclusive), returning every level from 1.
pub fn recursion_levels(n: usize) -> Vec<Recursion> {
    assert!(n >= 1);
    let mut levels = vec![Recursion { n: 1, p: IntPolynomial::zero(0), q: vec![IntPolynomial::constant(0, 1)] }];
    for m in 1..n {
        let cur = &levels[m - 1];
        let vars = m; // level m+1 lives in X_1..X_m
        let x1 = IntPolynomial::var(vars, 1);
        let xm = IntPolynomial::var(vars, m);
        let mut p = x1.mul(&xm).scale(m as i64 - 1);
        for i in 1..m {
            p = p.add(&cur.p.widen(vars).partial(i).mul(&lie_of_var(vars, i)));
        }
        let mut q = Vec::with_capacity(m + 1);
        for qi in 0..=m {
            let mut acc = IntPolynomial::zero(vars);
            if qi >= 1 {
                acc = acc.add(&cur.q[qi - 1].widen(vars));
            }
            if qi < m {
                let base = cur.q[qi].widen(vars);
                acc = acc.add(&x1.mul(&base).scale(qi as i64 + 1));
                for i in 1..m {
                    acc = acc.add(&lie_of_var(vars, i).mul(&base.partial(i)));
                }
            }
            q.push(acc);
        }
        levels.push(Recursion { n: m + 1, p, q });
    }
    levels
}

pub fn recursion_polynomials(n: usize) -> Recursion {
    recursion_levels(n).pop().unwrap()
}

/// `α_n` from `α_1 = 0`, `α_{n+1} = n - 1 + n·α_n`.
pub fn alpha_sequence(n: usize) -> Vec<i64> {
    let mut a = vec![0i64];
    for m in 1..n {
        let prev = a[m - 1];
        a.push(m as i64 - 1 + m as i64 * prev);
    }
    a
}

/// `β_{n,q}` from `β_{1,0} = 1` and the three recursions.
pub fn beta_table(n: usize) -> Vec<Vec<i64>> {
    let mut b = vec![vec![1i64]];
    for m in 1..n {
        let prev = &b[m - 1];
        let mut row = Vec::with_capacity(m + 1);
        for q in 0..=m {
            let v = if q == 0 {
                m as i64 * prev[0]
            } else if q == m {
                prev[m - 1]
            } else {
                prev[q - 1] + m as i64 * prev[q]
            };
            row.push(v);
        }
        b.push(row);
    }
    b
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn low_levels() {
        let lv = recursion_levels(4);
        assert!(lv[1].p.is_zero());
        assert_eq!(lv[2].p.to_string(), "X1*X2");
        assert_eq!(lv[3].p.to_string(), "3*X1*X3 + X2^2 + X1^2*X2");
        assert_eq!(lv[2].q[2], IntPolynomial::constant(2, 1));
    }

    #[test]
    fn alpha_and_beta() {
        assert_eq!(alpha_sequence(6), vec![0, 0, 1, 5, 23, 119]);
        assert_eq!(beta_table(4)[3], vec![6, 11, 6, 1]);
    }
}
