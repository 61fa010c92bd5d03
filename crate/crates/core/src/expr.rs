//! Expression trees over `x` with the functions exp, log, sin, cos and flat.
//!
//! Grammar:
//! ```text
//! expr   := term (("+"|"-") term)*
//! term   := factor (("*"|"/") factor)*
//! factor := atom ("^" integer)?
//! atom   := "x" | decimal | ident "(" expr ")" | "(" expr ")"
//! ```

use std::fmt;

use crate::error::{Error, Result};
use crate::jet::Jet;
use crate::real::{one, parse_decimal, real, zero, Real};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Func {
    Exp,
    Log,
    Sin,
    Cos,
    /// `exp(-1/e)` for `e > 0`, zero otherwise.
    Flat,
}

impl Func {
    fn name(self) -> &'static str {
        match self {
            Func::Exp => "exp",
            Func::Log => "log",
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Flat => "flat",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Expr {
    X,
    Const(Real),
    Add(Box<Expr>, Box<Expr>),
    Sub(Box<Expr>, Box<Expr>),
    Mul(Box<Expr>, Box<Expr>),
    Div(Box<Expr>, Box<Expr>),
    Pow(Box<Expr>, i32),
    Call(Func, Box<Expr>),
}

impl Expr {
    pub fn constant(c: Real) -> Expr {
        Expr::Const(c)
    }

    pub fn add(a: Expr, b: Expr) -> Expr {
        Expr::Add(Box::new(a), Box::new(b))
    }

    pub fn sub(a: Expr, b: Expr) -> Expr {
        Expr::Sub(Box::new(a), Box::new(b))
    }

    pub fn mul(a: Expr, b: Expr) -> Expr {
        Expr::Mul(Box::new(a), Box::new(b))
    }

    pub fn div(a: Expr, b: Expr) -> Expr {
        Expr::Div(Box::new(a), Box::new(b))
    }

    pub fn pow(a: Expr, n: i32) -> Expr {
        Expr::Pow(Box::new(a), n)
    }

    pub fn call(f: Func, a: Expr) -> Expr {
        Expr::Call(f, Box::new(a))
    }

    pub fn depends_on_x(&self) -> bool {
        match self {
            Expr::X => true,
            Expr::Const(_) => false,
            Expr::Add(a, b) | Expr::Sub(a, b) | Expr::Mul(a, b) | Expr::Div(a, b) => {
                a.depends_on_x() || b.depends_on_x()
            }
            Expr::Pow(a, _) | Expr::Call(_, a) => a.depends_on_x(),
        }
    }

    /// Splits `x + r`, `r + x` and `x - r` so that `f - x` can be evaluated without cancellation.
    pub fn displacement_part(&self) -> Option<Expr> {
        match self {
            Expr::Add(a, b) if **a == Expr::X => Some((**b).clone()),
            Expr::Add(a, b) if **b == Expr::X => Some((**a).clone()),
            Expr::Sub(a, b) if **a == Expr::X => Some(Expr::mul(Expr::Const(real(-1)), (**b).clone())),
            _ => None,
        }
    }

    pub fn eval(&self, x: &Real) -> Result<Real> {
        let v = match self {
            Expr::X => x.clone(),
            Expr::Const(c) => c.clone(),
            Expr::Add(a, b) => a.eval(x)? + b.eval(x)?,
            Expr::Sub(a, b) => a.eval(x)? - b.eval(x)?,
            Expr::Mul(a, b) => a.eval(x)? * b.eval(x)?,
            Expr::Div(a, b) => {
                let d = b.eval(x)?;
                if d.is_zero() {
                    return Err(Error::Domain(format!("division by zero at x = {x}")));
                }
                a.eval(x)? / d
            }
            Expr::Pow(a, n) => {
                let v = a.eval(x)?;
                if *n < 0 && v.is_zero() {
                    return Err(Error::Domain(format!("negative power of zero at x = {x}")));
                }
                real(rug::ops::Pow::pow(&v, *n))
            }
            Expr::Call(f, a) => {
                let v = a.eval(x)?;
                match f {
                    Func::Exp => v.exp(),
                    Func::Log => {
                        if v <= 0 {
                            return Err(Error::Domain(format!("log of {v} at x = {x}")));
                        }
                        v.ln()
                    }
                    Func::Sin => v.sin(),
                    Func::Cos => v.cos(),
                    Func::Flat => {
                        if v <= 0 {
                            zero()
                        } else {
                            (-v.recip()).exp()
                        }
                    }
                }
            }
        };
        if !v.is_finite() {
            return Err(Error::NonFinite(format!("expression at x = {x}")));
        }
        Ok(v)
    }

    /// Jet of the expression composed with the jet `input`.
    pub fn eval_jet(&self, input: &Jet) -> Result<Jet> {
        let j = match self {
            Expr::X => input.clone(),
            Expr::Const(c) => Jet::constant(&input.base, c.clone(), input.order()),
            Expr::Add(a, b) => a.eval_jet(input)?.add(&b.eval_jet(input)?)?,
            Expr::Sub(a, b) => a.eval_jet(input)?.sub(&b.eval_jet(input)?)?,
            Expr::Mul(a, b) => a.eval_jet(input)?.mul(&b.eval_jet(input)?)?,
            Expr::Div(a, b) => a.eval_jet(input)?.div(&b.eval_jet(input)?)?,
            Expr::Pow(a, n) => {
                let v = a.eval_jet(input)?;
                let p = v.powi(n.unsigned_abs());
                if *n < 0 {
                    Jet::constant(&input.base, one(), input.order()).div(&p)?
                } else {
                    p
                }
            }
            Expr::Call(f, a) => {
                let v = a.eval_jet(input)?;
                match f {
                    Func::Exp => v.exp()?,
                    Func::Log => v.log()?,
                    Func::Sin => v.sin()?,
                    Func::Cos => v.cos()?,
                    Func::Flat => {
                        if v.coeffs[0] <= 0 {
                            Jet::zero(&input.base, input.order())
                        } else {
                            let inv = Jet::constant(&input.base, real(-1), input.order()).div(&v)?;
                            inv.exp()?
                        }
                    }
                }
            }
        };
        Ok(j)
    }

    /// Folds `x`-free subtrees into constants, surfacing domain errors.
    pub fn fold(self) -> Result<Expr> {
        if !self.depends_on_x() {
            return Ok(Expr::Const(self.eval(&zero())?));
        }
        Ok(match self {
            Expr::Add(a, b) => Expr::add(a.fold()?, b.fold()?),
            Expr::Sub(a, b) => Expr::sub(a.fold()?, b.fold()?),
            Expr::Mul(a, b) => Expr::mul(a.fold()?, b.fold()?),
            Expr::Div(a, b) => {
                let den = b.fold()?;
                if matches!(&den, Expr::Const(c) if c.is_zero()) {
                    return Err(Error::Domain("division by the constant zero".into()));
                }
                Expr::div(a.fold()?, den)
            }
            Expr::Pow(a, n) => Expr::pow(a.fold()?, n),
            Expr::Call(f, a) => Expr::call(f, a.fold()?),
            other => other,
        })
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::X => write!(f, "x"),
            Expr::Const(c) => {
                if c.is_integer() && c.clone().abs() < 1e15 {
                    write!(f, "{}", c.to_f64() as i64)
                } else {
                    write!(f, "{}", crate::real::fmt_sig(c, 40))
                }
            }
            Expr::Add(a, b) => write!(f, "({a}+{b})"),
            Expr::Sub(a, b) => write!(f, "({a}-{b})"),
            Expr::Mul(a, b) => write!(f, "{a}*{b}"),
            Expr::Div(a, b) => write!(f, "{a}/({b})"),
            Expr::Pow(a, n) => write!(f, "({a})^{n}"),
            Expr::Call(func, a) => write!(f, "{}({a})", func.name()),
        }
    }
}

struct Parser<'a> {
    src: &'a [u8],
    pos: usize,
}

impl<'a> Parser<'a> {
    fn err<T>(&self, msg: impl Into<String>) -> Result<T> {
        Err(Error::Syntax { pos: self.pos, msg: msg.into() })
    }

    fn skip_ws(&mut self) {
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&mut self) -> Option<u8> {
        self.skip_ws();
        self.src.get(self.pos).copied()
    }

    fn expect(&mut self, c: u8) -> Result<()> {
        if self.peek() == Some(c) {
            self.pos += 1;
            Ok(())
        } else {
            self.err(format!("expected '{}'", c as char))
        }
    }

    fn expr(&mut self) -> Result<Expr> {
        let mut lhs = self.term()?;
        loop {
            match self.peek() {
                Some(b'+') => {
                    self.pos += 1;
                    lhs = Expr::add(lhs, self.term()?);
                }
                Some(b'-') => {
                    self.pos += 1;
                    lhs = Expr::sub(lhs, self.term()?);
                }
                _ => return Ok(lhs),
            }
        }
    }

    fn term(&mut self) -> Result<Expr> {
        let mut lhs = self.factor()?;
        loop {
            match self.peek() {
                Some(b'*') => {
                    self.pos += 1;
                    lhs = Expr::mul(lhs, self.factor()?);
                }
                Some(b'/') => {
                    self.pos += 1;
                    lhs = Expr::div(lhs, self.factor()?);
                }
                _ => return Ok(lhs),
            }
        }
    }

    fn factor(&mut self) -> Result<Expr> {
        let base = self.atom()?;
        if self.peek() == Some(b'^') {
            self.pos += 1;
            self.skip_ws();
            let start = self.pos;
            if self.src.get(self.pos) == Some(&b'-') {
                self.pos += 1;
            }
            while self.pos < self.src.len() && self.src[self.pos].is_ascii_digit() {
                self.pos += 1;
            }
            let text = std::str::from_utf8(&self.src[start..self.pos]).unwrap_or("");
            return match text.parse::<i32>() {
                Ok(n) => Ok(Expr::pow(base, n)),
                Err(_) => {
                    self.pos = start;
                    self.err("expected an integer exponent")
                }
            };
        }
        Ok(base)
    }

    fn atom(&mut self) -> Result<Expr> {
        match self.peek() {
            Some(b'(') => {
                self.pos += 1;
                let e = self.expr()?;
                self.expect(b')')?;
                Ok(e)
            }
            Some(c) if c.is_ascii_digit() || c == b'.' => self.number(),
            Some(c) if c.is_ascii_alphabetic() => {
                let start = self.pos;
                while self.pos < self.src.len() && self.src[self.pos].is_ascii_alphanumeric() {
                    self.pos += 1;
                }
                let ident = std::str::from_utf8(&self.src[start..self.pos]).unwrap_or("");
                let func = match ident {
                    "x" => return Ok(Expr::X),
                    "exp" => Func::Exp,
                    "log" => Func::Log,
                    "sin" => Func::Sin,
                    "cos" => Func::Cos,
                    "flat" => Func::Flat,
                    other => {
                        self.pos = start;
                        return self.err(format!("unknown identifier {other:?}"));
                    }
                };
                self.expect(b'(')?;
                let arg = self.expr()?;
                self.expect(b')')?;
                Ok(Expr::call(func, arg))
            }
            Some(c) => self.err(format!("unexpected character '{}'", c as char)),
            None => self.err("unexpected end of input"),
        }
    }

    fn number(&mut self) -> Result<Expr> {
        let start = self.pos;
        let mut digits = 0;
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_digit() {
            self.pos += 1;
            digits += 1;
        }
        if self.src.get(self.pos) == Some(&b'.') {
            self.pos += 1;
            while self.pos < self.src.len() && self.src[self.pos].is_ascii_digit() {
                self.pos += 1;
                digits += 1;
            }
        }
        if digits == 0 {
            self.pos = start;
            return self.err("malformed number");
        }
        let text = std::str::from_utf8(&self.src[start..self.pos]).unwrap_or("");
        Ok(Expr::Const(parse_decimal(text)?))
    }
}

/// Parses and constant-folds an expression.
pub fn parse(source: &str) -> Result<Expr> {
    let mut p = Parser { src: source.as_bytes(), pos: 0 };
    let e = p.expr()?;
    if p.peek().is_some() {
        return p.err("trailing input");
    }
    e.fold()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::real::from_ratio;

    #[test]
    fn precedence_and_powers() {
        let e = parse("1 + 2*x^2 - x/4").unwrap();
        let v = e.eval(&real(2)).unwrap();
        assert_eq!(v, real(1 + 8) - from_ratio(1, 2));
        assert_eq!(parse("(x+1)^-2").unwrap().eval(&one()).unwrap(), from_ratio(1, 4));
    }

    #[test]
    fn syntax_errors_carry_positions() {
        for bad in ["x*(1-x", "flat(x)*sin(3.14159.../x)^2", "2**x", "foo(x)", "x^1.5", "", "-x"] {
            assert!(matches!(parse(bad), Err(Error::Syntax { .. })), "{bad}");
        }
        match parse("x + y") {
            Err(Error::Syntax { pos, .. }) => assert_eq!(pos, 4),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn constant_folding_reports_domain_errors() {
        assert!(matches!(parse("x + log(0)"), Err(Error::Domain(_))));
        assert!(matches!(parse("x/(1-1)"), Err(Error::Domain(_))));
        assert_eq!(parse("x*log(1)").unwrap(), Expr::mul(Expr::X, Expr::Const(zero())));
    }

    #[test]
    fn flat_jets() {
        let e = parse("flat(x)").unwrap();
        let j0 = e.eval_jet(&Jet::variable(&zero(), 8)).unwrap();
        assert!(j0.is_zero());
        let half = from_ratio(1, 2);
        let j = e.eval_jet(&Jet::variable(&half, 1)).unwrap();
        let e2 = real(-2).exp();
        assert!((j.coeffs[0].clone() - &e2).abs() < 1e-70);
        assert!((j.coeffs[1].clone() - e2 * 4u32).abs() < 1e-70);
        assert!(e.eval_jet(&Jet::variable(&real(-1), 3)).unwrap().is_zero());
    }

    #[test]
    fn logistic_field_jet() {
        let e = parse("x*(1-x)").unwrap();
        let j = e.eval_jet(&Jet::variable(&zero(), 2)).unwrap();
        assert_eq!(j.coeffs, vec![zero(), one(), real(-1)]);
    }

    #[test]
    fn displacement_split() {
        let e = parse("x + x^2").unwrap();
        assert_eq!(e.displacement_part().unwrap(), Expr::pow(Expr::X, 2));
        assert!(parse("x^2").unwrap().displacement_part().is_none());
    }
}
