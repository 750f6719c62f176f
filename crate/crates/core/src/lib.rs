//! Two-time-scale stochastic optimization.
//!
//! [`solver`] holds the averaged two-time-scale method and the classic
//! baseline against an abstract oracle. [`synthetic`], [`tdc`], [`lqr`] and
//! [`regmdp`] are problem packs with exact ground truth; [`harness`] runs
//! replicated experiments and writes CSV.

pub mod error;
pub mod harness;
pub mod numerics;
pub mod solver;
pub mod synthetic;
pub mod tdc;
pub mod lqr;
pub mod regmdp;

pub use error::{Error, Result};
