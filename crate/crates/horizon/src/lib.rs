//! Exact discrete-time laboratory for optimal stopping and linear reflected
//! BSDEs under a random horizon `τ` that is not a stopping time of the base
//! filtration.
//!
//! The base filtration lives on a non-recombining binary tree
//! ([`fspace`]). A joint law of (path, τ) builds the progressively enlarged
//! filtration and its derived processes ([`random_time`]). On top sit the
//! projection operators ([`projections`]), Snell envelopes ([`snell`]),
//! RBSDE solvers ([`rbsde`]), norm estimates ([`norms`]), and the scenario
//! runner used by the command-line tool ([`scenario`], [`report`]).

pub mod calibration;
pub mod corpus;
pub mod fspace;
pub mod lattice;
pub mod norms;
pub mod projections;
pub mod random_time;
pub mod rbsde;
pub mod report;
pub mod scalar;
pub mod scenario;
pub mod snell;

pub use fspace::{FProcess, Filtration, FilteredSpace, StoppingRule};
pub use random_time::{GProcess, Mode, RandomTimeModel};
pub use scalar::{Rational, Scalar};

/// Numeric backend: exact rationals or `f64`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Backend {
    #[default]
    Rational,
    Float,
}

/// Default cap on the number of stopping rules a brute-force search may visit.
pub const DEFAULT_BUDGET: u128 = 1 << 24;

#[derive(Debug, thiserror::Error)]
pub enum HorizonError {
    #[error("invalid input: {0}")]
    Invalid(String),
    #[error("model validation failed: {0}")]
    Validation(String),
    #[error("enumeration budget exceeded: {needed} rules needed, budget {budget}")]
    Budget { needed: u128, budget: u128 },
    #[error("division by zero at {0}")]
    ZeroDivision(String),
    #[error("parse error at line {line}, column {column}: {msg}")]
    Parse { line: usize, column: usize, msg: String },
}

pub type Result<T> = std::result::Result<T, HorizonError>;
