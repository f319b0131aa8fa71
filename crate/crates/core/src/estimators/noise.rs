use crate::error::{invalid, Result};
use crate::model::ObservationVector;
use crate::scalar::Real;

/// Robust noise level `σ̂ = 9·(⌊d/2⌋⁻¹ Σ_{j ≤ ⌊d/2⌋} y²_(j))^{1/2}`, where
/// `y²_(1) ≤ … ≤ y²_(d)` are the sorted squared observations.
///
/// The factor 9 makes it an over-estimate: with high probability
/// `σ ≤ σ̂ ≤ 10σ` whenever fewer than half of the coordinates carry signal.
pub fn sigma_hat<T: Real>(y: &ObservationVector<T>) -> Result<T> {
    let d = y.dim();
    if d < 2 {
        return invalid("sigma_hat needs d >= 2");
    }
    Ok(lower_square_mean_root(y.values(), d / 2))
}

/// [`sigma_hat`] averaging the `⌊fraction·d⌋` smallest squares instead of the
/// lower half. The constant 9 is kept.
pub fn sigma_hat_with_fraction<T: Real>(y: &ObservationVector<T>, fraction: f64) -> Result<T> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return invalid(format!("fraction must lie in (0, 1], got {fraction}"));
    }
    let k = (fraction * y.dim() as f64).floor() as usize;
    if k == 0 {
        return invalid("fraction selects no observations");
    }
    Ok(lower_square_mean_root(y.values(), k))
}

fn lower_square_mean_root<T: Real>(values: &[T], k: usize) -> T {
    let mut squares: Vec<T> = values.iter().map(|&v| v * v).collect();
    squares.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
    let sum = squares[..k].iter().fold(T::zero(), |acc, &sq| acc + sq);
    T::of(9.0) * (sum / T::of_usize(k)).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn obs(v: Vec<f64>) -> ObservationVector<f64> {
        ObservationVector::new(v).unwrap()
    }

    #[test]
    fn examples() {
        assert_eq!(sigma_hat(&obs(vec![0.0; 8])).unwrap(), 0.0);
        let ones: Vec<f64> = (0..11).map(|i| if i % 2 == 0 { 1.0 } else { -1.0 }).collect();
        assert_eq!(sigma_hat(&obs(ones)).unwrap(), 9.0);
        assert!(sigma_hat(&obs(vec![1.0])).is_err());
    }

    #[test]
    fn uses_floor_half_for_odd_d() {
        // Squares sorted: 1, 4, 9, 16, 25; ⌊5/2⌋ = 2 → mean 2.5.
        let y = obs(vec![5.0, -1.0, 3.0, 2.0, -4.0]);
        assert!((sigma_hat(&y).unwrap() - 9.0 * 2.5f64.sqrt()).abs() < 1e-14);
        let y4 = sigma_hat_with_fraction(&y, 0.8).unwrap();
        assert!((y4 - 9.0 * 7.5f64.sqrt()).abs() < 1e-14);
        assert_eq!(sigma_hat_with_fraction(&y, 0.5).unwrap(), sigma_hat(&y).unwrap());
        assert!(sigma_hat_with_fraction(&y, 0.0).is_err());
        assert!(sigma_hat_with_fraction(&y, 0.1).is_err());
    }

    #[test]
    fn positive_when_enough_nonzero() {
        // d = 7 averages the ⌊7/2⌋ = 3 smallest squares, so σ̂ > 0 needs at
        // most two exact zeros.
        let y = obs(vec![0.0, 0.0, 0.5, 1.0, 2.0, 3.0, 4.0]);
        assert!(sigma_hat(&y).unwrap() > 0.0);
        let y = obs(vec![0.0, 0.0, 0.0, 1.5, 2.0, 3.0, 4.0]);
        assert_eq!(sigma_hat(&y).unwrap(), 0.0);
    }
}
