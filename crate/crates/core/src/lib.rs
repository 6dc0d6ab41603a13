//! Hierarchical sparse solver built on low-rank elimination of fill-in
//! blocks, with a simulated distributed-memory runtime.

pub mod block;
pub mod cli;
pub mod csr;
pub mod dense;
pub mod error;
pub mod factor;
pub mod krylov;
pub mod parallel;
pub mod partition;
pub mod problems;

pub use error::{Error, Result};
