//! Computable layer of explicit reciprocity for Lubin-Tate formal groups:
//! exact capped-precision local fields and division towers, truncated
//! formal Laurent series, the Lubin-Tate group with its logarithm and
//! invariant derivative, the Frobenius/trace/norm operators, Coleman unit
//! systems and Coates-Wiles homomorphisms, evaluation maps, finite-level
//! measures with Gauss sums and descent maps, and the residue pairing.

pub mod coates_wiles;
pub mod distributions;
pub mod error;
pub mod evaluation;
pub mod json;
pub mod lubin_tate;
pub mod operators;
pub mod padic;
pub mod residue;
pub mod series;
pub mod suite;

pub use error::{Error, Result};
