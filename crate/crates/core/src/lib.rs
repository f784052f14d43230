//! Numerical laboratory for degenerate real and complex `k`-Hessian equations.
//!
//! The crate collects the algebra of elementary symmetric functions on
//! Gårding cones, the linearization of `log σ_k`, a gallery of degenerate
//! model data with their predicted regularity, a finite-difference solver for
//! the doubly radial real Dirichlet problem, and probes that turn solved
//! fields into regularity verdicts.

pub mod config;
pub mod error;
pub mod gallery;
pub mod kv;
pub mod linearization;
pub mod probe;
pub mod quadrature;
pub mod radial;
pub mod rng;
pub mod runner;
pub mod suites;
pub mod symmetric;

pub use error::{Error, Result};
