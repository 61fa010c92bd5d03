//! Continued-fraction convergents and rational snapping.

use crate::real::{real, Real};

/// Convergents `p/q` of `x` with `q <= q_max`, in order.
pub fn convergents(x: &Real, q_max: i64) -> Vec<(i64, i64)> {
    let mut out = Vec::new();
    let (mut p0, mut q0, mut p1, mut q1) = (0i64, 1i64, 1i64, 0i64);
    let mut r = x.clone();
    for _ in 0..128 {
        let a = real(r.floor_ref());
        let Some(ai) = a.to_integer().and_then(|z| z.to_i64()) else {
            break;
        };
        let (p2, q2) = match (
            ai.checked_mul(p1).and_then(|v| v.checked_add(p0)),
            ai.checked_mul(q1).and_then(|v| v.checked_add(q0)),
        ) {
            (Some(p), Some(q)) => (p, q),
            _ => break,
        };
        if q2 > q_max {
            break;
        }
        out.push((p2, q2));
        let frac = r - &a;
        if frac.is_zero() {
            break;
        }
        r = frac.recip();
        (p0, q0, p1, q1) = (p1, q1, p2, q2);
    }
    out
}

/// The first convergent with denominator at most `q_max` lying within `tol` of `x`.
pub fn snap(x: &Real, q_max: i64, tol: &Real) -> Option<(i64, i64)> {
    convergents(x, q_max).into_iter().find(|&(p, q)| real(x - real(p) / q).abs() < *tol)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::real::from_ratio;

    #[test]
    fn golden_and_rational() {
        let phi = (real(5).sqrt() + 1u32) / 2u32;
        let c = convergents(&phi, 100);
        assert_eq!(c.last(), Some(&(144, 89)));
        assert_eq!(snap(&from_ratio(3, 8), 64, &real(1e-9)), Some((3, 8)));
        assert_eq!(snap(&from_ratio(-2, 3), 64, &real(1e-9)), Some((-2, 3)));
        assert_eq!(snap(&real(2).sqrt(), 64, &real(1e-9)), None);
    }
}
