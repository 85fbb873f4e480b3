//! Transport-map preconditioned unadjusted Langevin samplers.
//!
//! The crate provides target densities, invertible transport maps (analytic and
//! learned monotone triangular maps), Langevin-type samplers that run either in
//! target space or in the reference space of a map, and diagnostics for the
//! resulting chains.

pub mod basis;
pub mod diagnostics;
pub mod error;
pub mod experiments;
pub mod linalg;
pub mod map_learning;
pub mod optim;
pub mod plot;
pub mod samplers;
pub mod targets;
pub mod theory_checks;
pub mod transport;

pub use error::{Error, Result};
