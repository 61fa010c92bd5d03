//! Configurable-precision real numbers backed by MPFR.

use std::sync::atomic::{AtomicU32, Ordering};

use rug::float::Constant;
use rug::Assign;
pub use rug::Float as Real;

use crate::error::{Error, Result};

static PRECISION: AtomicU32 = AtomicU32::new(256);

/// Default mantissa width in bits.
pub const DEFAULT_PRECISION: u32 = 256;

/// Current global mantissa width in bits.
pub fn precision() -> u32 {
    PRECISION.load(Ordering::Relaxed)
}

/// Sets the global mantissa width. Values below 64 are rejected.
pub fn set_precision(bits: u32) -> Result<()> {
    if bits < 64 {
        return Err(Error::Config(format!("precision {bits} below the 64-bit floor")));
    }
    PRECISION.store(bits, Ordering::Relaxed);
    Ok(())
}

/// A real at the global precision.
pub fn real<T>(value: T) -> Real
where
    Real: Assign<T>,
{
    Real::with_val(precision(), value)
}

pub fn zero() -> Real {
    real(0)
}

pub fn one() -> Real {
    real(1)
}

pub fn pi() -> Real {
    real(Constant::Pi)
}

/// `2^e` at the global precision.
pub fn pow2(e: i32) -> Real {
    let mut r = one();
    r <<= e;
    r
}

/// Unit roundoff `2^(1-p)`.
pub fn ulp() -> Real {
    pow2(1 - precision() as i32)
}

/// Parses a decimal literal such as `3.25`, `-1e-3` or `0.125`.
pub fn parse_decimal(text: &str) -> Result<Real> {
    let parsed =
        Real::parse(text.trim()).map_err(|e| Error::Syntax { pos: 0, msg: format!("bad number {text:?}: {e}") })?;
    Ok(real(parsed))
}

/// Parses a decimal literal or a ratio `p/q` of decimals.
pub fn parse_number(text: &str) -> Result<Real> {
    match text.split_once('/') {
        Some((p, q)) => {
            let q = parse_decimal(q)?;
            if q.is_zero() {
                return Err(Error::Syntax { pos: 0, msg: format!("zero denominator in {text:?}") });
            }
            Ok(parse_decimal(p)? / q)
        }
        None => parse_decimal(text),
    }
}

/// Rejects NaN and infinities.
pub fn finite(x: Real, what: &str) -> Result<Real> {
    if x.is_finite() {
        Ok(x)
    } else {
        Err(Error::NonFinite(what.to_string()))
    }
}

pub fn from_ratio(p: i64, q: i64) -> Real {
    real(p) / q
}

/// Relative distance `|a-b| / max(|b|, floor)`.
pub fn rel_err(a: &Real, b: &Real, floor: f64) -> f64 {
    let d = real(a - b).abs();
    let scale = real(b.abs_ref()).max(&real(floor));
    (d / scale).to_f64()
}

/// Formats with `digits` significant decimal digits in scientific notation.
pub fn fmt_sig(x: &Real, digits: usize) -> String {
    if x.is_zero() {
        return format!("{:.*e}", digits.saturating_sub(1), 0.0f64);
    }
    // rug counts the precision of `e` formatting in significant digits
    format!("{:.*e}", digits.max(1), x)
}

/// `log2 |x|` that survives magnitudes far outside the f64 range.
pub fn log_abs(x: &Real) -> f64 {
    if x.is_zero() {
        return f64::NEG_INFINITY;
    }
    real(x.abs_ref()).ln().to_f64()
}

/// Chebyshev points of the first kind mapped to `[lo, hi]`, in increasing order.
pub fn chebyshev_points(lo: &Real, hi: &Real, n: usize) -> Vec<Real> {
    let half = real(hi - lo) / 2u32;
    let mid = real(hi + lo) / 2u32;
    let pi = pi();
    (0..n)
        .rev()
        .map(|i| {
            let theta = real(&pi * (2 * i + 1) as u32) / (2 * n) as u32;
            real(&mid + real(&half * theta.cos()))
        })
        .collect()
}

/// Chebyshev points including both endpoints (extrema grid), increasing.
pub fn chebyshev_lobatto(lo: &Real, hi: &Real, n: usize) -> Vec<Real> {
    assert!(n >= 2);
    let half = real(hi - lo) / 2u32;
    let mid = real(hi + lo) / 2u32;
    let pi = pi();
    (0..n)
        .rev()
        .map(|i| {
            if i == 0 {
                hi.clone()
            } else if i == n - 1 {
                lo.clone()
            } else {
                let theta = real(&pi * i as u32) / (n - 1) as u32;
                real(&mid + real(&half * theta.cos()))
            }
        })
        .collect()
}

/// Evenly spaced points including both endpoints.
pub fn linspace(lo: &Real, hi: &Real, n: usize) -> Vec<Real> {
    assert!(n >= 2);
    let step = real(hi - lo) / (n - 1) as u32;
    (0..n).map(|i| if i == n - 1 { hi.clone() } else { real(lo + real(&step * i as u32)) }).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn decimal_parsing_is_exact_for_dyadics() {
        assert_eq!(parse_decimal("0.375").unwrap(), real(3) / 8u32);
        assert!(parse_decimal("1.2.3").is_err());
    }

    #[test]
    fn huge_negative_exponents_stay_finite() {
        let tiny = real(-1.0e8).exp();
        assert!(tiny.is_finite() && !tiny.is_zero());
        assert!((log_abs(&tiny) + 1.0e8).abs() < 1e-6);
    }

    #[test]
    fn chebyshev_grid_is_increasing_and_interior() {
        let pts = chebyshev_points(&zero(), &one(), 50);
        assert_eq!(pts.len(), 50);
        assert!(pts.windows(2).all(|w| w[0] < w[1]));
        assert!(pts[0] > 0 && pts[49] < 1);
    }

    #[test]
    fn significant_digits() {
        let s = fmt_sig(&(real(2).sqrt()), 30);
        assert_eq!(s, "1.41421356237309504880168872421e0");
        assert_eq!(fmt_sig(&zero(), 30), "0.00000000000000000000000000000e0");
        assert_eq!(fmt_sig(&(real(-1) / 8u32), 3), "-1.25e-1");
    }
}
