//! Computational toolkit for commuting diffeomorphisms of a closed interval.
//!
//! The library evaluates Szekeres vector fields, relative translation numbers and
//! boundary-smoothed approximations of commuting pairs, together with the derivative
//! estimates that control them, in configurable-precision arithmetic.

pub mod cfrac;
pub mod circle;
pub mod diffeo;
pub mod error;
pub mod estimates;
pub mod expr;
pub mod jet;
pub mod quad;
pub mod real;
pub mod smoothing;
pub mod szekeres;

pub use error::{Error, Result};
pub use jet::Jet;
pub use real::Real;
