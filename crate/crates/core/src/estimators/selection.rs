//! Lepski-type selection over the estimator collection.
//!
//! Estimates are formed for `s = 1, …, s₀` with `s₀ = ⌊√(d·log(d)/2)⌋ + 1`.
//! Member `s₀` and every larger index are the plain sum, so tests against
//! `s′ > s₀` compare the same estimate against a larger threshold and are
//! implied by the `s′ = s₀` test; they are not run.

use serde::Serialize;

use crate::error::{invalid, Result};
use crate::model::ObservationVector;
use crate::rates::{adaptive_log_factor, s_zero};
use crate::scalar::Real;

use super::config::EstimatorConfig;
use super::linear::{collection_threshold, thresholded_sum};
use super::noise::sigma_hat;
use super::sums::ThresholdSums;

/// One pairwise comparison `|L̂_s − L̂_{s′}| ≤ ω_{s′}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(bound = "T: Real")]
pub struct PairTest<T> {
    pub s: usize,
    pub s_prime: usize,
    pub difference: T,
    pub threshold: T,
    pub passed: bool,
}

/// Full record of one selection run.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(bound = "T: Real")]
pub struct SelectionTrace<T> {
    pub d: usize,
    pub s_zero: usize,
    /// `estimates[s − 1] = L̂_s` for `s = 1, …, s₀`.
    pub estimates: Vec<T>,
    /// `thresholds[s − 1] = ω_s` for `s = 1, …, s₀`; `ω₁` is never a test
    /// threshold and is kept for indexing.
    pub thresholds: Vec<T>,
    pub s_hat: usize,
    /// Tests in evaluation order. Each candidate `s` stops at its first
    /// failed test.
    pub tests: Vec<PairTest<T>>,
    /// Set when no candidate passed and `ŝ = s₀` by convention.
    pub fallback_used: bool,
}

impl<T: Real> SelectionTrace<T> {
    /// `L̂_ŝ`.
    pub fn selected_estimate(&self) -> T {
        self.estimates[self.s_hat - 1]
    }
}

/// Estimate and selected index without the pairwise test record.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdaptiveFit<T> {
    pub estimate: T,
    pub s_hat: usize,
    pub fallback_used: bool,
    /// `σ̂` for the unknown-noise path.
    pub sigma_hat: Option<T>,
}

struct Collection<T> {
    estimates: Vec<T>,
    thresholds: Vec<T>,
}

fn build_collection<T: Real>(y: &[T], scale: T, cfg: &EstimatorConfig) -> Collection<T> {
    let d = y.len();
    let s0 = s_zero(d);
    let sums = ThresholdSums::new(y);
    let alpha = T::of(cfg.alpha);
    let beta = T::of(cfg.beta);
    let mut estimates = Vec::with_capacity(s0);
    let mut thresholds = Vec::with_capacity(s0);
    for s in 1..=s0 {
        estimates.push(thresholded_sum(&sums, collection_threshold(d, s, scale, alpha)));
        let st = T::of_usize(s);
        // Same operation order as rates::omega, so a known σ gives identical bits.
        let phi = scale * scale * st * st * adaptive_log_factor::<T>(d, s);
        thresholds.push((beta * phi).sqrt());
    }
    Collection { estimates, thresholds }
}

/// Smallest admissible candidate, or `(s₀, true)` when there is none.
fn select_index<T: Real>(c: &Collection<T>, mut record: Option<&mut Vec<PairTest<T>>>) -> (usize, bool) {
    let s0 = c.estimates.len();
    'candidates: for s in 1..s0 {
        for s_prime in s + 1..=s0 {
            let difference = (c.estimates[s - 1] - c.estimates[s_prime - 1]).abs();
            let threshold = c.thresholds[s_prime - 1];
            let passed = difference <= threshold;
            if let Some(rec) = record.as_deref_mut() {
                rec.push(PairTest {
                    s,
                    s_prime,
                    difference,
                    threshold,
                    passed,
                });
            }
            if !passed {
                continue 'candidates;
            }
        }
        return (s, false);
    }
    (s0, true)
}

fn check_input<T: Real>(y: &ObservationVector<T>) -> Result<()> {
    if y.dim() < 3 {
        return invalid(format!("adaptive selection needs d >= 3, got d={}", y.dim()));
    }
    Ok(())
}

fn check_sigma<T: Real>(sigma: T) -> Result<()> {
    if !(sigma > T::zero()) || !sigma.is_finite() {
        return invalid("sigma must be positive and finite");
    }
    Ok(())
}

fn trace_with_scale<T: Real>(y: &ObservationVector<T>, scale: T, cfg: &EstimatorConfig) -> SelectionTrace<T> {
    let collection = build_collection(y.values(), scale, cfg);
    let mut tests = Vec::new();
    let (s_hat, fallback_used) = select_index(&collection, Some(&mut tests));
    SelectionTrace {
        d: y.dim(),
        s_zero: collection.estimates.len(),
        estimates: collection.estimates,
        thresholds: collection.thresholds,
        s_hat,
        tests,
        fallback_used,
    }
}

fn fit_with_scale<T: Real>(y: &ObservationVector<T>, scale: T, cfg: &EstimatorConfig) -> AdaptiveFit<T> {
    let collection = build_collection(y.values(), scale, cfg);
    let (s_hat, fallback_used) = select_index(&collection, None);
    AdaptiveFit {
        estimate: collection.estimates[s_hat - 1],
        s_hat,
        fallback_used,
        sigma_hat: None,
    }
}

/// Selected index `ŝ` with the full test record, for known `σ`.
pub fn select_s_hat<T: Real>(y: &ObservationVector<T>, sigma: T, cfg: &EstimatorConfig) -> Result<SelectionTrace<T>> {
    check_input(y)?;
    check_sigma(sigma)?;
    Ok(trace_with_scale(y, sigma, cfg))
}

/// Adaptive estimator `L̂ = L̂_ŝ` for known `σ`.
pub fn adaptive_estimator<T: Real>(
    y: &ObservationVector<T>,
    sigma: T,
    cfg: &EstimatorConfig,
) -> Result<(T, SelectionTrace<T>)> {
    let trace = select_s_hat(y, sigma, cfg)?;
    Ok((trace.selected_estimate(), trace))
}

/// Fully adaptive estimator `L̂′ = L̂′_ŝ′`: `σ̂` is computed once and drives
/// both the hard thresholds and the test thresholds.
pub fn adaptive_estimator_unknown_sigma<T: Real>(
    y: &ObservationVector<T>,
    cfg: &EstimatorConfig,
) -> Result<(T, SelectionTrace<T>, T)> {
    check_input(y)?;
    let scale = sigma_hat(y)?;
    let trace = trace_with_scale(y, scale, cfg);
    Ok((trace.selected_estimate(), trace, scale))
}

/// [`adaptive_estimator`] without recording the pairwise tests.
pub fn adaptive_fit<T: Real>(y: &ObservationVector<T>, sigma: T, cfg: &EstimatorConfig) -> Result<AdaptiveFit<T>> {
    check_input(y)?;
    check_sigma(sigma)?;
    Ok(fit_with_scale(y, sigma, cfg))
}

/// [`adaptive_estimator_unknown_sigma`] without recording the pairwise tests.
pub fn adaptive_fit_unknown_sigma<T: Real>(y: &ObservationVector<T>, cfg: &EstimatorConfig) -> Result<AdaptiveFit<T>> {
    check_input(y)?;
    let scale = sigma_hat(y)?;
    let mut fit = fit_with_scale(y, scale, cfg);
    fit.sigma_hat = Some(scale);
    Ok(fit)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimators::collection_estimator;
    use crate::model::{sample_observation, RngStream, SparseSignal};

    fn brute_force_select(estimates: &[f64], thresholds: &[f64]) -> usize {
        let s0 = estimates.len();
        (1..s0)
            .find(|&s| (s + 1..=s0).all(|sp| (estimates[s - 1] - estimates[sp - 1]).abs() <= thresholds[sp - 1]))
            .unwrap_or(s0)
    }

    #[test]
    fn zero_observation_selects_one() {
        let y = ObservationVector::new(vec![0.0; 50]).unwrap();
        let trace = select_s_hat(&y, 1.0, &EstimatorConfig::practical()).unwrap();
        assert_eq!(trace.s_hat, 1);
        assert!(!trace.fallback_used);
        assert!(trace.estimates.iter().all(|&e| e == 0.0));
        assert_eq!(trace.tests.len(), trace.s_zero - 1);
    }

    #[test]
    fn trace_replays_and_matches_brute_force() {
        let cfg = EstimatorConfig::practical();
        for r in 0..200u64 {
            let d = 30 + (r as usize % 7) * 40;
            let k = (r as usize * 7) % 12;
            let theta = SparseSignal::from_entries(d, (0..k).map(|i| (i * 3 % d, 1.5 + (i as f64) * 0.8))).unwrap();
            let y = sample_observation(&theta, 1.0, &RngStream::new(99, r)).unwrap();
            let (est, trace) = adaptive_estimator(&y, 1.0, &cfg).unwrap();
            assert_eq!(trace.s_hat, brute_force_select(&trace.estimates, &trace.thresholds));
            assert_eq!(est, trace.estimates[trace.s_hat - 1]);
            assert_eq!(est, collection_estimator(&y, trace.s_hat, 1.0, &cfg).unwrap());
            if trace.fallback_used {
                assert_eq!(trace.s_hat, trace.s_zero);
            } else {
                for sp in trace.s_hat + 1..=trace.s_zero {
                    let diff = (trace.estimates[trace.s_hat - 1] - trace.estimates[sp - 1]).abs();
                    assert!(diff <= trace.thresholds[sp - 1]);
                }
                // Every smaller candidate has a recorded failure.
                for s in 1..trace.s_hat {
                    assert!(trace.tests.iter().any(|t| t.s == s && !t.passed));
                }
            }
            let fit = adaptive_fit(&y, 1.0, &cfg).unwrap();
            assert_eq!((fit.estimate, fit.s_hat, fit.fallback_used), (est, trace.s_hat, trace.fallback_used));
        }
    }

    #[test]
    fn fallback_when_every_candidate_fails() {
        // β tiny: any nonzero difference fails, and a large coordinate
        // separates the thresholded members from the full sum.
        let cfg = EstimatorConfig::custom(4.0, 1e-12).unwrap();
        let mut v = vec![0.5; 40];
        v[0] = 1e3;
        let y = ObservationVector::new(v).unwrap();
        let trace = select_s_hat(&y, 1.0, &cfg).unwrap();
        assert!(trace.fallback_used);
        assert_eq!(trace.s_hat, trace.s_zero);
    }

    #[test]
    fn thresholds_match_rate_module() {
        let cfg = EstimatorConfig::theoretical();
        let y = ObservationVector::new(vec![0.3; 64]).unwrap();
        let trace = select_s_hat(&y, 2.0, &cfg).unwrap();
        for (i, &w) in trace.thresholds.iter().enumerate() {
            let q = crate::rates::RateQuery::new(64, i + 1, 2.0).unwrap();
            assert_eq!(w, crate::rates::omega(&q, cfg.beta));
        }
    }

    #[test]
    fn unknown_sigma_zero_input() {
        let y = ObservationVector::new(vec![0.0; 40]).unwrap();
        let (est, trace, sh) = adaptive_estimator_unknown_sigma(&y, &EstimatorConfig::practical()).unwrap();
        assert_eq!((est, trace.s_hat, sh), (0.0, 1, 0.0));
    }

    #[test]
    fn unknown_sigma_equals_known_at_sigma_hat() {
        let cfg = EstimatorConfig::practical();
        for r in 0..50u64 {
            let theta = SparseSignal::<f64>::from_entries(300, [(1, 6.0), (2, -4.0)]).unwrap();
            let y = sample_observation(&theta, 1.0, &RngStream::new(3, r)).unwrap();
            let (est_u, trace_u, sh) = adaptive_estimator_unknown_sigma(&y, &cfg).unwrap();
            let (est_k, trace_k) = adaptive_estimator(&y, sh, &cfg).unwrap();
            assert_eq!(est_u.to_bits(), est_k.to_bits());
            assert_eq!(trace_u, trace_k);
        }
    }

    #[test]
    fn rejects_small_inputs() {
        let y = ObservationVector::new(vec![1.0, 2.0]).unwrap();
        assert!(select_s_hat(&y, 1.0, &EstimatorConfig::practical()).is_err());
        let y = ObservationVector::new(vec![1.0, 2.0, 3.0]).unwrap();
        assert!(select_s_hat(&y, 0.0, &EstimatorConfig::practical()).is_err());
    }
}
