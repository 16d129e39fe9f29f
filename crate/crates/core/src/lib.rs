//! Discrete fractional p-Laplacian on bounded 1D/2D boxes, the singular
//! problem `(-Delta_p)^s u = omega / u^alpha` through its regularized
//! approximation chain, and the sharp Sobolev-type constants built from its
//! solutions.

pub mod chain;
pub mod cli;
pub mod config;
pub mod constants;
pub mod domain;
pub mod error;
pub mod io;
pub mod ops;
pub mod props;
pub mod rng;
pub mod solver;

pub use error::{FssError, Result};
