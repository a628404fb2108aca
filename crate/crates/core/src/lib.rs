//! Filtered schemes for time-dependent second-order Hamilton-Jacobi-Bellman
//! equations: monotone and high-order one-step schemes, policy iteration,
//! and a convergence-study harness.

pub mod error;
pub mod filter;
pub mod grid;
pub mod harness;
pub mod highorder;
pub mod howard;
pub mod monotone;
pub mod problem;
pub mod scheme;
pub mod stencil;

pub use error::{Error, Result};
