//! Superreplication pricing in discrete-time multi-asset tree markets with
//! proportional transaction costs, with tools for the continuous-time limit.
//!
//! Every numerical type is generic over [`Scalar`] (`f32` or `f64`); the
//! aliases below fix the precision.

// NaN-rejecting `!(x > y)` guards and index loops over parallel arrays are
// deliberate in the numerical kernels.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod basis;
pub mod construction;
pub mod corridor;
pub mod error;
pub mod limit;
pub mod linalg;
pub mod lp;
pub mod model;
pub mod pricer;
pub mod scalar;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type Matrix64 = linalg::Matrix<f64>;
pub type SimplexBasis64 = basis::SimplexBasis<f64>;
pub type MarketSpec64 = model::MarketSpec<f64>;
pub type Payoff64 = model::Payoff<f64>;
pub type VolatilityCorridor64 = corridor::VolatilityCorridor<f64>;
pub type LinearProgram64 = lp::LinearProgram<f64>;

pub type Matrix32 = linalg::Matrix<f32>;
pub type SimplexBasis32 = basis::SimplexBasis<f32>;
pub type MarketSpec32 = model::MarketSpec<f32>;
pub type Payoff32 = model::Payoff<f32>;
pub type VolatilityCorridor32 = corridor::VolatilityCorridor<f32>;
pub type LinearProgram32 = lp::LinearProgram<f32>;
