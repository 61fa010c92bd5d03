//! Model families of fields and their time maps.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::expr::{Expr, Func};
use crate::real::{one, pi, real, zero, Real};

use super::{DiffeoRef, ExprMap, FieldRef, FlowMap, Interval, SmoothMap, VectorField, Zero, ZeroSet};

#[derive(Clone, Debug)]
pub struct FixtureParams {
    /// Hyperbolic family: `ξ = c·x^p·(1-x)^q`.
    pub c: Real,
    pub p: u32,
    pub q: u32,
    /// Second time; defaults per family.
    pub alpha: Option<Real>,
    /// Amplitude for the rotation-like family.
    pub eps: Real,
}

impl Default for FixtureParams {
    fn default() -> Self {
        FixtureParams { c: one(), p: 1, q: 1, alpha: None, eps: real(0.5) }
    }
}

#[derive(Clone, Debug)]
pub struct Fixture {
    pub name: String,
    pub field: FieldRef,
    /// Time-1 and time-α maps.
    pub maps: Vec<DiffeoRef>,
    pub alpha: Real,
}

pub const NAMES: [&str; 4] = ["hyperbolic", "flat_boundary", "oscillating", "rotation_like"];

fn x() -> Expr {
    Expr::X
}

fn c(v: Real) -> Expr {
    Expr::Const(v)
}

fn finite_zeros(list: &[(Real, u32, bool)]) -> ZeroSet {
    ZeroSet::Finite(list.iter().map(|(at, m, f)| Zero { at: at.clone(), multiplicity: *m, flat: *f }).collect())
}

/// `x(1-x)` on `[0,1]`.
pub fn logistic_field() -> VectorField {
    let e = Expr::mul(x(), Expr::sub(c(one()), x()));
    let map = SmoothMap::from_expr(e, Interval::unit()).with_source("x*(1-x)");
    VectorField::new(map, finite_zeros(&[(zero(), 1, false), (one(), 1, false)]))
}

/// Closed-form time-`ct` map of `c·x(1-x)`: `x + x(1-x)K/(1+Kx)` with `K = e^{ct} - 1`.
pub fn logistic_time_map_scaled(c_: &Real, t: &Real) -> ExprMap {
    let k = real(c_ * t).exp_m1();
    let r = Expr::div(
        Expr::mul(Expr::mul(x(), Expr::sub(c(one()), x())), c(k.clone())),
        Expr::add(c(one()), Expr::mul(c(k), x())),
    );
    let e = Expr::add(x(), r);
    let map = SmoothMap::from_expr(e, Interval::unit());
    ExprMap::new(map).with_zeros(finite_zeros(&[(zero(), 1, false), (one(), 1, false)]))
}

pub fn logistic_time_map(t: &Real) -> ExprMap {
    logistic_time_map_scaled(&one(), t)
}

/// `c·x^p·(1-x)^q`.
pub fn hyperbolic_field(c_: &Real, p: u32, q: u32) -> VectorField {
    let e =
        Expr::mul(c(c_.clone()), Expr::mul(Expr::pow(x(), p as i32), Expr::pow(Expr::sub(c(one()), x()), q as i32)));
    let map = SmoothMap::from_expr(e, Interval::unit());
    VectorField::new(map, finite_zeros(&[(zero(), p, false), (one(), q, false)]))
}

/// `flat(x)·(1-x)^2`, infinitely flat at 0.
pub fn flat_boundary_field() -> VectorField {
    let e = Expr::mul(Expr::call(Func::Flat, x()), Expr::pow(Expr::sub(c(one()), x()), 2));
    let map = SmoothMap::from_expr(e, Interval::unit()).with_flats(true, false).with_source("flat(x)*(1-x)^2");
    VectorField::new(map, finite_zeros(&[(zero(), 0, true), (one(), 2, false)]))
}

/// `flat(x)·sin(π/x)^2`: double zeros at every `1/n`, flat at 0.
pub fn oscillating_field() -> VectorField {
    let e = Expr::mul(Expr::call(Func::Flat, x()), Expr::pow(Expr::call(Func::Sin, Expr::div(c(pi()), x())), 2));
    let map = SmoothMap::from_expr(e, Interval::unit()).with_flats(true, false).with_source("flat(x)*sin(pi/x)^2");
    VectorField::new(map, ZeroSet::Harmonic { multiplicity: 2 })
}

/// `1 + ε·cos(2πx)` on a wide chart: its time maps are lifts of circle diffeomorphisms with
/// rotation number `t·sqrt(1-ε²)`.
pub fn rotation_like_field(eps: &Real) -> VectorField {
    let two_pi = real(pi() * 2u32);
    let e = Expr::add(c(one()), Expr::mul(c(eps.clone()), Expr::call(Func::Cos, Expr::mul(c(two_pi), x()))));
    let wide = real(1u64 << 40);
    let map = SmoothMap::from_expr(e, Interval::new(real(-&wide), wide));
    VectorField::new(map, ZeroSet::Finite(vec![]))
}

pub fn fixture(name: &str, params: &FixtureParams) -> Result<Fixture> {
    let sqrt2 = real(2).sqrt();
    let (field, maps, alpha): (FieldRef, Vec<DiffeoRef>, Real) = match name {
        "hyperbolic" => {
            if params.p == 0 || params.q == 0 || params.c <= 0 {
                return Err(Error::Config("hyperbolic fixture needs p, q >= 1 and c > 0".into()));
            }
            let alpha = params.alpha.clone().unwrap_or(sqrt2);
            if params.p == 1 && params.q == 1 {
                let field: FieldRef = Arc::new(hyperbolic_field(&params.c, 1, 1));
                let f: DiffeoRef = Arc::new(logistic_time_map_scaled(&params.c, &one()));
                let g: DiffeoRef = Arc::new(logistic_time_map_scaled(&params.c, &alpha));
                (field, vec![f, g], alpha)
            } else {
                let field: FieldRef = Arc::new(hyperbolic_field(&params.c, params.p, params.q));
                let maps = flow_pair(&field, &alpha);
                (field, maps, alpha)
            }
        }
        "flat_boundary" => {
            let alpha = params.alpha.clone().unwrap_or(sqrt2 - 1u32);
            let field: FieldRef = Arc::new(flat_boundary_field());
            let maps = flow_pair(&field, &alpha);
            (field, maps, alpha)
        }
        "oscillating" => {
            let alpha = params.alpha.clone().unwrap_or(sqrt2 - 1u32);
            let field: FieldRef = Arc::new(oscillating_field());
            let maps = flow_pair(&field, &alpha);
            (field, maps, alpha)
        }
        "rotation_like" => {
            if params.eps <= -1 || params.eps >= 1 {
                return Err(Error::Config("rotation_like fixture needs |eps| < 1".into()));
            }
            let alpha = params.alpha.clone().unwrap_or(sqrt2 - 1u32);
            let field: FieldRef = Arc::new(rotation_like_field(&params.eps));
            let maps = flow_pair(&field, &alpha);
            (field, maps, alpha)
        }
        other => return Err(Error::Config(format!("unknown fixture '{}' (expected one of {:?})", other, NAMES))),
    };
    Ok(Fixture { name: name.to_string(), field, maps, alpha })
}

fn flow_pair(field: &FieldRef, alpha: &Real) -> Vec<DiffeoRef> {
    vec![Arc::new(FlowMap::new(field.clone(), one())), Arc::new(FlowMap::new(field.clone(), alpha.clone()))]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diffeo::{fixed_points, Contact, Diffeo};
    use crate::real::{from_ratio, rel_err};

    #[test]
    fn hyperbolic_time_one() {
        let fx = fixture("hyperbolic", &FixtureParams::default()).unwrap();
        let y = fx.maps[0].apply(&from_ratio(1, 4)).unwrap();
        assert!((y.to_f64() - 0.475367).abs() < 1e-5);
        // the closed form agrees with the integrated flow
        let flow = FlowMap::new(fx.field.clone(), one());
        let z = flow.apply(&from_ratio(1, 4)).unwrap();
        assert!(rel_err(&y, &z, 0.0) < 1e-45);
    }

    #[test]
    fn flat_boundary_jets_vanish() {
        let fx = fixture("flat_boundary", &FixtureParams::default()).unwrap();
        assert!(fx.field.jet(&zero(), 8).unwrap().is_zero());
        assert!(fx.maps[0].disp_jet(&zero(), 8).unwrap().is_zero());
    }

    #[test]
    fn oscillating_fixed_points() {
        let fx = fixture("oscillating", &FixtureParams::default()).unwrap();
        let rep = fixed_points(fx.maps[0].as_ref(), 64).unwrap();
        assert_eq!(rep.points[0].contact, Contact::Flat);
        assert!(rep.low_confidence);
        for n in 1..=4 {
            let at = real(1) / n as u32;
            let p = rep.points.iter().find(|p| p.at == at).expect("zero 1/n reported");
            assert_eq!(p.contact, Contact::Order(2));
        }
    }

    #[test]
    fn unknown_name() {
        assert!(matches!(fixture("nope", &FixtureParams::default()), Err(Error::Config(_))));
    }
}
