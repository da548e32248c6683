//! Sparse accelerated exponential weights.
//!
//! An online optimizer confined to an l1-ball (the [`subroutine`]) is restarted in
//! shrinking balls centered at hard-truncated running averages ([`saew`]). For strongly
//! convex risks with a sparse minimizer this turns a `1/√T` slow-rate method into a
//! `d0/T` fast-rate one whose averaged estimate is sparse.

pub mod baselines;
pub mod bounds;
pub mod calibration;
pub mod error;
pub mod exec;
pub mod harness;
pub mod losses;
pub mod primitives;
pub mod rng;
pub mod saew;
pub mod subroutine;

pub use error::{Error, Result};
pub use primitives::{ball_contains, excess_l2, l1_norm, DenseVector, L1Ball, ProblemParams};
