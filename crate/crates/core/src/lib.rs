//! Numerical toolkit for finitely differentiable KAM theory.
//!
//! The crate is organised bottom-up:
//!
//! * [`modulus`] – moduli of continuity and their structural properties,
//! * [`regularity`] – Dini-type integrals, critical exponents and remaining moduli,
//! * [`jackson`] – the analytic smoothing operator and periodic trig polynomials,
//! * [`diophantine`] – lattice certificates for frequency vectors,
//! * [`kam`] – a desk-scale frequency-preserving KAM iteration.
//!
//! With the default `parallel` feature grid work is spread over rayon's pool;
//! without it every loop runs sequentially and produces identical numbers.

pub mod diophantine;
pub mod error;
pub mod fit;
pub mod jackson;
pub mod kam;
pub mod modulus;
pub mod par;
pub mod quad;
pub mod regularity;
pub mod torus;

pub use error::{Error, Result};
