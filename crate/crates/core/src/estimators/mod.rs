//! Thresholded estimators of `L(θ)`: the minimax estimator for known `s`, the
//! collection indexed by `s`, Lepski selection over it, the robust noise
//! estimate and the fully adaptive estimator built on it.

mod config;
mod linear;
mod noise;
mod selection;
mod sums;

pub use config::{
    minimal_theoretical_beta, EstimatorConfig, Preset, PRACTICAL_ALPHA, PRACTICAL_BETA, THEORETICAL_ALPHA,
};
pub use linear::{collection_estimator, collection_estimator_unknown_sigma, oracle_estimator};
pub use noise::{sigma_hat, sigma_hat_with_fraction};
pub use selection::{
    adaptive_estimator, adaptive_estimator_unknown_sigma, adaptive_fit, adaptive_fit_unknown_sigma, select_s_hat,
    AdaptiveFit, PairTest, SelectionTrace,
};
