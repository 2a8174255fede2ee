//! Numerical construction and certification of quasi-plurisubharmonic
//! extensions from a complex submanifold `V ⊂ X` admitting a holomorphic
//! retraction.
//!
//! The pipeline regularizes a quasi-psh function `φ` on `V` to smooth
//! `φ_m`, extends each locally as `φ_m ∘ r + A·h` (with `h` the squared
//! distance to `V`), glues against a log-singular reference function `νF`
//! by a pointwise maximum, and certifies positivity of `ω + i∂∂̄Φ_m` on
//! sample grids.

pub mod error;
pub mod distance;
pub mod geometry;
pub mod models;
pub mod qpsh;
pub mod extension;
pub mod cli;

pub use error::{Error, Result};
