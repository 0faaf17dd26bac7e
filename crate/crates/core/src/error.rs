//! Error type shared by all modules.

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// Argument outside the domain of a function (e.g. `x > delta`).
    #[error("domain error: {0}")]
    Domain(String),
    /// Malformed or inconsistent arguments.
    #[error("argument error: {0}")]
    Argument(String),
    /// A numerical routine failed to reach its tolerance.
    #[error("numeric error: {0}")]
    Numeric(String),
    /// An analysis could not produce a conclusion (bracket failure, no critical exponent, ...).
    #[error("analysis error: {0}")]
    Analysis(String),
    /// Homological equation has a nonzero mean on the right-hand side.
    #[error("solvability error: mean {mean:e} exceeds {tol:e}")]
    Solvability { mean: f64, tol: f64 },
    /// Exact resonance found while certifying a frequency.
    #[error("resonance at k = {witness:?}")]
    Resonance { witness: Vec<i64> },
    /// A KAM hypothesis failed numerically.
    #[error("hypothesis {name} failed: {detail}")]
    Hypothesis { name: String, detail: String },
    /// Averaged Hessian not invertible.
    #[error("nondegeneracy error: {0}")]
    Nondegeneracy(String),
    /// The KAM iteration stopped converging.
    #[error("divergence at step {step}: {detail}")]
    Divergence { step: usize, detail: String },
    /// Internal invariant broken (e.g. divisor below certificate floor).
    #[error("internal consistency error: {0}")]
    Consistency(String),
}

pub type Result<T> = std::result::Result<T, Error>;
