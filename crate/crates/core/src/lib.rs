//! Sequential mediated learning when each discovery may exhaust a finite supply of evidence.
//!
//! Everything is generic over [`Scalar`]: exact rationals for proofs and tables, `f64` for
//! simulation and plotting.

pub mod beliefs;
pub mod designer;
pub mod grid;
pub mod oracle;
pub mod rng;
pub mod scalar;
pub mod sim;
pub mod supply;
pub mod thresholds;
pub mod witness;

pub use scalar::Scalar;

/// Exact rational scalar.
pub type Exact = num_rational::BigRational;
