//! Estimation of the sum functional `L(θ) = Σ θᵢ` in the sparse Gaussian
//! sequence model `y_j = θ_j + σ ξ_j`.
//!
//! The model, rate and estimator code is generic over [`Real`] (`f32` or
//! `f64`); the aliases below fix the scalar to `f64`, which is what the
//! Monte Carlo harness and the CLI use.

pub mod error;
pub mod estimators;
pub mod harness;
pub mod model;
pub mod quadrature;
pub mod rates;
mod scalar;
pub mod tailbounds;

pub use error::{Error, Result};
pub use scalar::Real;

pub type SparseSignal = model::SparseSignal<f64>;
pub type ObservationVector = model::ObservationVector<f64>;
pub type SelectionTrace = estimators::SelectionTrace<f64>;
pub type RateQuery = rates::RateQuery<f64>;
pub type LowerBoundQuery = rates::LowerBoundQuery<f64>;
pub type LowerBound = rates::LowerBound<f64>;

pub type SparseSignal32 = model::SparseSignal<f32>;
pub type ObservationVector32 = model::ObservationVector<f32>;
