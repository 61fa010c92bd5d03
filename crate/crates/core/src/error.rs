use thiserror::Error;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum Error {
    #[error("syntax error at {pos}: {msg}")]
    Syntax { pos: usize, msg: String },
    #[error("domain violation: {0}")]
    Domain(String),
    #[error("jet mismatch: {0}")]
    Mismatch(String),
    #[error("non-finite value in {0}")]
    NonFinite(String),
    #[error("NON_CONVERGED after {iterations} iterations: {what}")]
    NonConverged { what: String, iterations: usize },
    #[error("DIVISION_NEAR_ZERO: {0}")]
    DivisionNearZero(String),
    #[error("step-size underflow at x = {at}")]
    StepUnderflow { at: String },
    #[error("NOT_FOUND: {0}")]
    NotFound(String),
    #[error("PSI_NOT_MONOTONE: {0}")]
    PsiNotMonotone(String),
    #[error("INCONSISTENT_TAU: {0}")]
    InconsistentTau(String),
    #[error("ETA_NOT_MET: {0}")]
    EtaNotMet(String),
    #[error("precondition failed: {0}")]
    Precondition(String),
    #[error("configuration error: {0}")]
    Config(String),
}

pub type Result<T> = std::result::Result<T, Error>;
