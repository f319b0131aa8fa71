use crate::error::{invalid, Result};
use crate::model::ObservationVector;
use crate::rates::{adaptive_log_factor, is_below_sqrt_d, is_thresholded_regime, minimax_log_factor};
use crate::scalar::Real;

use super::config::EstimatorConfig;
use super::noise::sigma_hat;
use super::sums::ThresholdSums;

fn check_sparsity(d: usize, s: usize) -> Result<()> {
    if s == 0 || s > d {
        return invalid(format!("need 1 <= s <= d, got s={s}, d={d}"));
    }
    Ok(())
}

fn check_sigma<T: Real>(sigma: T) -> Result<()> {
    if !(sigma > T::zero()) || !sigma.is_finite() {
        return invalid("sigma must be positive and finite");
    }
    Ok(())
}

/// Squared hard threshold `2σ² log(1 + d/s²)` of the minimax estimator, or
/// `None` when `s ≥ √d` and the estimator is the plain sum.
pub(crate) fn oracle_threshold<T: Real>(d: usize, s: usize, sigma: T) -> Option<T> {
    is_below_sqrt_d(d, s).then(|| T::of(2.0) * sigma * sigma * minimax_log_factor::<T>(d, s))
}

/// Squared hard threshold `α·scale²·log(1 + d·log(d)/s²)` of the collection
/// member with index `s`, or `None` when `s > √(d·log(d)/2)`.
pub(crate) fn collection_threshold<T: Real>(d: usize, s: usize, scale: T, alpha: T) -> Option<T> {
    is_thresholded_regime(d, s).then(|| alpha * scale * scale * adaptive_log_factor::<T>(d, s))
}

pub(crate) fn thresholded_sum<T: Real>(sums: &ThresholdSums<T>, threshold: Option<T>) -> T {
    match threshold {
        Some(t) => sums.sum_above(t),
        None => sums.full_sum(),
    }
}

/// Minimax estimator for known `s`: `Σ y_j 1{y_j² > 2σ² log(1 + d/s²)}` when
/// `s < √d`, the plain sum otherwise.
pub fn oracle_estimator<T: Real>(y: &ObservationVector<T>, s: usize, sigma: T) -> Result<T> {
    let d = y.dim();
    check_sparsity(d, s)?;
    check_sigma(sigma)?;
    let sums = ThresholdSums::new(y.values());
    Ok(thresholded_sum(&sums, oracle_threshold(d, s, sigma)))
}

/// Member `s` of the estimator collection: threshold
/// `α σ² log(1 + d·log(d)/s²)` when `s ≤ √(d·log(d)/2)`, plain sum otherwise.
pub fn collection_estimator<T: Real>(
    y: &ObservationVector<T>,
    s: usize,
    sigma: T,
    cfg: &EstimatorConfig,
) -> Result<T> {
    let d = y.dim();
    check_sparsity(d, s)?;
    check_sigma(sigma)?;
    let sums = ThresholdSums::new(y.values());
    Ok(thresholded_sum(&sums, collection_threshold(d, s, sigma, T::of(cfg.alpha))))
}

/// [`collection_estimator`] with `σ` replaced by [`sigma_hat`] in the
/// threshold.
pub fn collection_estimator_unknown_sigma<T: Real>(
    y: &ObservationVector<T>,
    s: usize,
    cfg: &EstimatorConfig,
) -> Result<T> {
    let d = y.dim();
    check_sparsity(d, s)?;
    let scale = sigma_hat(y)?;
    let sums = ThresholdSums::new(y.values());
    Ok(thresholded_sum(&sums, collection_threshold(d, s, scale, T::of(cfg.alpha))))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn obs(v: Vec<f64>) -> ObservationVector<f64> {
        ObservationVector::new(v).unwrap()
    }

    #[test]
    fn oracle_hand_example() {
        let mut v = vec![0.0; 100];
        v[0] = 10.0;
        v[1] = 0.1;
        assert_eq!(oracle_estimator(&obs(v), 1, 1.0).unwrap(), 10.0);
        // Threshold² = 2 log 101 ≈ 9.2302; 3.03² = 9.18 stays below.
        let mut v = vec![0.0; 100];
        v[0] = 3.03;
        v[1] = -3.04;
        assert_eq!(oracle_estimator(&obs(v), 1, 1.0).unwrap(), -3.04);
    }

    #[test]
    fn oracle_full_sum_regime() {
        let v: Vec<f64> = (0..100).map(|i| (i as f64 * 0.37).sin()).collect();
        let plain: f64 = v.iter().sum();
        for s in [10, 11, 50, 100] {
            let est = oracle_estimator(&obs(v.clone()), s, 1.0).unwrap();
            assert!((est - plain).abs() <= 1e-12 * v.len() as f64);
        }
        assert_eq!(oracle_estimator(&obs(vec![0.0; 100]), 3, 1.0).unwrap(), 0.0);
    }

    #[test]
    fn collection_regimes() {
        let cfg = EstimatorConfig::practical();
        let v: Vec<f64> = (0..200).map(|i| 3.0 * (i as f64 * 1.3).cos()).collect();
        let plain: f64 = v.iter().sum();
        // √(200 log 200 / 2) ≈ 23.02.
        let est = collection_estimator(&obs(v.clone()), 24, 1.0, &cfg).unwrap();
        assert!((est - plain).abs() <= 1e-10);
        let small = collection_estimator(&obs(v.clone()), 23, 1.0, &cfg).unwrap();
        let t = 4.0 * (200.0 * 200f64.ln() / 529.0).ln_1p();
        let naive: f64 = v.iter().filter(|x| *x * *x > t).sum();
        assert!((small - naive).abs() <= 1e-10);
    }

    #[test]
    fn vanishing_sigma_recovers_functional() {
        let cfg = EstimatorConfig::practical();
        let mut v = vec![0.0; 50];
        v[3] = 1.5;
        v[20] = -0.25;
        v[41] = 7.0;
        for s in 1..=50 {
            let est = collection_estimator(&obs(v.clone()), s, 1e-150, &cfg).unwrap();
            assert!((est - 8.25).abs() < 1e-12);
        }
    }

    #[test]
    fn errors() {
        let cfg = EstimatorConfig::practical();
        let y = obs(vec![1.0; 10]);
        assert!(oracle_estimator(&y, 0, 1.0).is_err());
        assert!(oracle_estimator(&y, 11, 1.0).is_err());
        assert!(oracle_estimator(&y, 1, 0.0).is_err());
        assert!(collection_estimator(&y, 1, -1.0, &cfg).is_err());
        assert!(collection_estimator_unknown_sigma(&y, 0, &cfg).is_err());
    }

    #[test]
    fn unknown_sigma_zero_input() {
        let cfg = EstimatorConfig::practical();
        let y = obs(vec![0.0; 30]);
        for s in 1..=30 {
            assert_eq!(collection_estimator_unknown_sigma(&y, s, &cfg).unwrap(), 0.0);
        }
    }
}
