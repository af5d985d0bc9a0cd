//! Numerical laboratory for the Emergence of dynamical systems.
//!
//! The crate is organised by task:
//!
//! * [`dynsys`] the built-in systems, Jacobians, inverse branches and orbits;
//! * [`transport`] discrete probability measures and exact Wasserstein-1;
//! * [`emergence`] Birkhoff clouds, k-median covering numbers and scaling fits;
//! * [`jets`] jets of parameter families and the covered-domain verifier;
//! * [`sinks`] periodic orbits, stability classes and sink censuses.

// `!(x > 0.0)` is used deliberately to reject NaN along with nonpositive values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod dynsys;
pub mod emergence;
pub mod error;
pub mod interval;
pub mod jets;
pub mod sinks;
pub mod transport;

pub use error::{Error, Result};
