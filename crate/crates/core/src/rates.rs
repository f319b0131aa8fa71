//! Closed-form rates, thresholds and lower-bound quantities.
//!
//! All logarithms are natural. `log(1+x)` is always evaluated with `ln_1p`.

use serde::Serialize;

use crate::error::{invalid, Result};
use crate::scalar::Real;

/// Arguments `(d, s, σ)` of the rate functions. Requires `d ≥ 3` and
/// `1 ≤ s ≤ d`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateQuery<T> {
    d: usize,
    s: usize,
    sigma: T,
}

impl<T: Real> RateQuery<T> {
    pub fn new(d: usize, s: usize, sigma: T) -> Result<Self> {
        if d < 3 {
            return invalid(format!("rates need d >= 3, got d={d}"));
        }
        if s == 0 || s > d {
            return invalid(format!("rates need 1 <= s <= d, got s={s}, d={d}"));
        }
        if !(sigma > T::zero()) || !sigma.is_finite() {
            return invalid("sigma must be positive and finite");
        }
        Ok(Self { d, s, sigma })
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn s(&self) -> usize {
        self.s
    }

    pub fn sigma(&self) -> T {
        self.sigma
    }
}

fn log_d<T: Real>(d: usize) -> T {
    T::of((d as f64).ln())
}

/// `log(1 + d·log(d)/s²)`, the logarithmic factor of the adaptive rate.
pub fn adaptive_log_factor<T: Real>(d: usize, s: usize) -> T {
    let s2 = T::of_usize(s) * T::of_usize(s);
    (T::of_usize(d) * log_d::<T>(d) / s2).ln_1p()
}

/// `log(1 + d/s²)`, the logarithmic factor of the minimax rate.
pub fn minimax_log_factor<T: Real>(d: usize, s: usize) -> T {
    let s2 = T::of_usize(s) * T::of_usize(s);
    (T::of_usize(d) / s2).ln_1p()
}

/// `Φᴸ(σ, s) = σ² s² log(1 + d·log(d)/s²)`.
pub fn phi_l<T: Real>(q: &RateQuery<T>) -> T {
    let s = T::of_usize(q.s);
    q.sigma * q.sigma * s * s * adaptive_log_factor::<T>(q.d, q.s)
}

/// Representative minimax rate `σ² s² log(1 + d/s²)`, without the absolute
/// constants.
pub fn psi_star<T: Real>(q: &RateQuery<T>) -> T {
    let s = T::of_usize(q.s);
    q.sigma * q.sigma * s * s * minimax_log_factor::<T>(q.d, q.s)
}

/// `Φᴸ/ψ*`, computed as the ratio of the two logarithmic factors so that σ
/// and s² cancel exactly.
pub fn phi_ratio<T: Real>(q: &RateQuery<T>) -> T {
    adaptive_log_factor::<T>(q.d, q.s) / minimax_log_factor::<T>(q.d, q.s)
}

/// Lepski threshold `ω_s = √(β Φᴸ(σ, s))`.
pub fn omega<T: Real>(q: &RateQuery<T>, beta: T) -> T {
    (beta * phi_l(q)).sqrt()
}

/// `⌊√(d·log(d)/2)⌋ + 1`, the index of the first full-sum member of the
/// estimator collection.
pub fn s_zero(d: usize) -> usize {
    let x = d as f64 * (d as f64).ln() / 2.0;
    let mut k = x.sqrt().floor() as usize;
    // Repair the floor where sqrt rounds across an integer.
    while ((k + 1) * (k + 1)) as f64 <= x {
        k += 1;
    }
    while k > 0 && (k * k) as f64 > x {
        k -= 1;
    }
    k + 1
}

/// Whether `s ≤ √(d·log(d)/2)`, decided as `s² ≤ d·log(d)/2`.
pub fn is_thresholded_regime(d: usize, s: usize) -> bool {
    let s2 = (s as f64) * (s as f64);
    s2 <= d as f64 * (d as f64).ln() / 2.0
}

/// Whether `s < √d`, decided on integers as `s² < d`.
pub fn is_below_sqrt_d(d: usize, s: usize) -> bool {
    (s as u128) * (s as u128) < d as u128
}

/// Arguments of the sparsity lower bound: `d ≥ 6`, `a ∈ [1/4, 1/2)`,
/// `d^a ≤ s ≤ d`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LowerBoundQuery<T> {
    d: usize,
    a: T,
    s: usize,
    sigma: T,
}

fn check_exponent<T: Real>(a: T) -> Result<()> {
    if !(a >= T::of(0.25) && a < T::of(0.5)) {
        return invalid(format!("lower bound needs a in [1/4, 1/2), got a={a}"));
    }
    Ok(())
}

/// `s ≥ d^a`, with a relative slack of 1e-12 so that exact powers such as
/// `256^{1/4} = 4` are not lost to `powf` rounding.
pub fn meets_sparsity_floor(d: usize, a: f64, s: usize) -> bool {
    s as f64 >= (d as f64).powf(a) * (1.0 - 1e-12)
}

/// Smallest integer `s` with `s ≥ d^a`.
pub fn ceil_power(d: usize, a: f64) -> usize {
    let mut s = (d as f64).powf(a).ceil().max(1.0) as usize;
    while s > 1 && meets_sparsity_floor(d, a, s - 1) {
        s -= 1;
    }
    while !meets_sparsity_floor(d, a, s) {
        s += 1;
    }
    s
}

impl<T: Real> LowerBoundQuery<T> {
    pub fn new(d: usize, a: T, s: usize, sigma: T) -> Result<Self> {
        if d < 6 {
            return invalid(format!("lower bound needs d >= 6, got d={d}"));
        }
        check_exponent(a)?;
        if s > d || !meets_sparsity_floor(d, a.to_f64_lossy(), s) {
            return invalid(format!("lower bound needs d^a <= s <= d, got s={s}, d={d}, a={a}"));
        }
        if !(sigma > T::zero()) || !sigma.is_finite() {
            return invalid("sigma must be positive and finite");
        }
        Ok(Self { d, a, s, sigma })
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn a(&self) -> T {
        self.a
    }

    pub fn s(&self) -> usize {
        self.s
    }

    pub fn sigma(&self) -> T {
        self.sigma
    }

    pub fn rate_query(&self) -> RateQuery<T> {
        RateQuery {
            d: self.d,
            s: self.s,
            sigma: self.sigma,
        }
    }
}

/// Spike magnitude (in units of σ) of the least favourable prior:
/// `ρ = √((1/2 − a)·log(1 + d·log(d)/s²))`.
pub fn rho_lower_bound<T: Real>(d: usize, s: usize, a: T) -> Result<T> {
    check_exponent(a)?;
    if d < 3 || s == 0 || s > d {
        return invalid(format!("rho needs d >= 3 and 1 <= s <= d, got s={s}, d={d}"));
    }
    Ok(((T::of(0.5) - a) * adaptive_log_factor::<T>(d, s)).sqrt())
}

/// `log((1 + (s/d)(e^{ρ²} − 1))^s)` with `e^{ρ²} = (1 + d·log(d)/s²)^{1/2−a}`
/// substituted so no raw exponential of `ρ²` is formed.
pub(crate) fn log_chi2_lower_prior<T: Real>(d: usize, s: usize, a: T) -> T {
    let exp_rho2_minus_one = ((T::of(0.5) - a) * adaptive_log_factor::<T>(d, s)).exp_m1();
    let frac = T::of_usize(s) / T::of_usize(d);
    T::of_usize(s) * (frac * exp_rho2_minus_one).ln_1p()
}

/// All quantities of the two-hypothesis lower bound.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LowerBound<T> {
    /// `(1/2 − a)/4 · qτ/(1+qτ) · (1 − τ(χ̄ + 1))`.
    pub bound: T,
    /// `q = s² d^{1/2−3a} log(1 + d·log(d)/s²)`.
    pub q_weight: T,
    /// `τ = 1/(2(d^{1/2−a} + 1))`.
    pub tau: T,
    /// `χ̄ = (1 + (s/d)(e^{ρ²} − 1))^s`, an upper bound on the χ² divergence
    /// between the spike mixture and the null.
    pub chi2_bound: T,
}

impl<T: Real> LowerBound<T> {
    /// The `(1/2 − a)/40` floor the bound is guaranteed to clear.
    pub fn floor(a: T) -> T {
        (T::of(0.5) - a) / T::of(40.0)
    }
}

pub fn lower_bound_value<T: Real>(q: &LowerBoundQuery<T>) -> LowerBound<T> {
    let d = T::of_usize(q.d);
    let s = T::of_usize(q.s);
    let a = q.a;
    let half = T::of(0.5);
    let q_weight = s * s * d.powf(half - T::of(3.0) * a) * adaptive_log_factor::<T>(q.d, q.s);
    let tau = T::one() / (T::of(2.0) * (d.powf(half - a) + T::one()));
    let chi2_bound = log_chi2_lower_prior(q.d, q.s, a).exp();
    let qt = q_weight * tau;
    let bound = (half - a) / T::of(4.0) * qt / (T::one() + qt) * (T::one() - tau * (chi2_bound + T::one()));
    LowerBound {
        bound,
        q_weight,
        tau,
        chi2_bound,
    }
}
