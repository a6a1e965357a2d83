//! Estimation of multivariate stationary processes through algebraic
//! Riccati equations built from autocovariances.

// `!(x > 0.0)` is used on purpose so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod asymptotics;
pub mod autocov;
pub mod error;
pub mod estimation;
pub mod experiments;
pub mod linalg;
pub mod models;
pub mod riccati;

pub use error::{Error, Result};
