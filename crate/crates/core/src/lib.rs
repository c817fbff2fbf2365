//! Replicable learners for large-margin halfspaces.

pub mod data;
pub mod error;
pub mod exec;
pub mod harness;
pub mod learners;
pub mod linalg;
pub mod projection;
pub mod rng;
pub mod rounding;
pub mod solvers;

pub use error::{Error, Result};
