//! Multilevel Monte Carlo pricing of knock-out barrier options under CIR
//! and CEV dynamics.
//!
//! Paths are simulated for the Lamperti transform `Y = phi(X)`, which has
//! constant noise, with a drift-implicit Euler scheme. Barrier monitoring
//! uses Brownian-bridge survival factors on every step, and the coarse level
//! of each MLMC pair is interpolated at the fine midpoints so that both
//! levels use the same bridge step.
//!
//! Models, schemes and pricing are generic over [`Real`] (`f32` or `f64`);
//! the aliases below fix `f64`. The special functions and extreme-value laws
//! work in `f64` and `Complex64` only.

// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod extremes;
pub mod models;
pub mod pricing;
pub mod real;
pub mod rng;
pub mod schemes;
pub mod specfun;
pub mod studies;

pub use error::{Error, Result};
pub use real::Real;

pub type CirParams = models::CirParams<f64>;
pub type CevParams = models::CevParams<f64>;
pub type ModelSpec = models::ModelSpec<f64>;
pub type LampertiDynamics = models::LampertiDynamics<f64>;
pub type BarrierContract = models::BarrierContract<f64>;
pub type Problem = pricing::Problem<f64>;
pub type BrownianSkeleton = schemes::BrownianSkeleton<f64>;
pub type CoupledLevelSample = schemes::CoupledLevelSample<f64>;
