use crate::error::{invalid, Result};
use crate::estimators::EstimatorConfig;
use crate::model::{sample_from_spike_prior, RngStream, SparseSignal};
use crate::rates::{adaptive_log_factor, rho_lower_bound, LowerBoundQuery};
use crate::scalar::Real;

use super::spec::FamilySpec;

/// How a family member produces its signal in a replicate.
#[derive(Debug, Clone, PartialEq)]
pub enum MemberSignal {
    /// The same signal in every replicate, stored densely.
    Fixed(Vec<f64>),
    /// A fresh draw from the spike prior with the given `ρ`.
    SpikePrior { rho: f64 },
    /// A fresh draw from `N(0, a² I_d)`; `a = 0` is the zero signal.
    GaussianPrior { a: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Member {
    pub id: String,
    pub signal: MemberSignal,
}

impl Member {
    /// Dense signal for one replicate. Random members draw from `stream`.
    pub fn draw(&self, d: usize, s: usize, sigma: f64, stream: &RngStream) -> Result<Vec<f64>> {
        match &self.signal {
            MemberSignal::Fixed(v) => Ok(v.clone()),
            &MemberSignal::SpikePrior { rho } => Ok(sample_from_spike_prior(d, s, rho, sigma, stream)?.to_dense()),
            &MemberSignal::GaussianPrior { a } if a == 0.0 => Ok(vec![0.0; d]),
            // Same draws as `sample_from_gaussian_prior`, without the sparse map.
            &MemberSignal::GaussianPrior { a } => {
                let mut gen = stream.generator();
                Ok((0..d).map(|_| a * f64::standard_normal(&mut gen)).collect())
            }
        }
    }
}

/// Default spike multipliers `{0.5, 1, √α, 2√α}`.
///
/// These bracket the known-σ threshold. The unknown-σ rule thresholds at the scale of σ̂,
/// which is several times σ, so its worst case needs an explicit grid reaching past `2√α·σ̂/σ`.
pub fn default_lambdas(config: &EstimatorConfig) -> Vec<f64> {
    let r = config.alpha.sqrt();
    vec![0.5, 1.0, r, 2.0 * r]
}

/// `s` spikes of height `λσ√log(1 + d·log(d)/s²)` on coordinates `0..s`.
pub fn spike_signal(d: usize, s: usize, sigma: f64, lambda: f64) -> Vec<f64> {
    let height = lambda * sigma * adaptive_log_factor::<f64>(d, s).sqrt();
    let mut v = vec![0.0; d];
    v[..s].fill(height);
    v
}

/// Expands a family at `(d, s, σ)` into its members.
pub fn members(family: &FamilySpec, d: usize, s: usize, sigma: f64, config: &EstimatorConfig) -> Result<Vec<Member>> {
    if s == 0 || s > d {
        return invalid(format!("need 1 <= s <= d, got s={s}, d={d}"));
    }
    let zero = || Member {
        id: "zero".into(),
        signal: MemberSignal::Fixed(vec![0.0; d]),
    };
    Ok(match family {
        FamilySpec::Zero => vec![zero()],
        FamilySpec::Spikes { lambdas } => {
            let lambdas = lambdas.clone().unwrap_or_else(|| default_lambdas(config));
            if lambdas.iter().any(|l| !l.is_finite()) {
                return invalid("spike multipliers must be finite");
            }
            std::iter::once(zero())
                .chain(lambdas.iter().map(|&l| Member {
                    id: format!("spikes:lambda={l}"),
                    signal: MemberSignal::Fixed(spike_signal(d, s, sigma, l)),
                }))
                .collect()
        }
        &FamilySpec::LowerBoundPrior { a } => {
            LowerBoundQuery::new(d, a, s, sigma)?;
            vec![Member {
                id: format!("lower_bound_prior:a={a}"),
                signal: MemberSignal::SpikePrior {
                    rho: rho_lower_bound(d, s, a)?,
                },
            }]
        }
        &FamilySpec::GaussianPrior { a } => {
            if !(a >= 0.0) || !a.is_finite() {
                return invalid("gaussian prior scale must be nonnegative and finite");
            }
            vec![Member {
                id: format!("gaussian_prior:a={a}"),
                signal: MemberSignal::GaussianPrior { a },
            }]
        }
        FamilySpec::Custom { signals } => {
            if signals.is_empty() {
                return invalid("custom family needs at least one signal");
            }
            signals
                .iter()
                .enumerate()
                .map(|(i, sig)| {
                    if sig.entries.keys().any(|&k| k == 0) {
                        return invalid("custom signal indices are 1-based");
                    }
                    let theta = SparseSignal::from_entries(d, sig.entries.iter().map(|(&k, &v)| (k - 1, v)))?;
                    if !theta.is_in_sparsity_class(s) {
                        return invalid(format!(
                            "custom signal {i} has {} nonzeros, more than s={s}",
                            theta.support_size()
                        ));
                    }
                    Ok(Member {
                        id: sig.id.clone().unwrap_or_else(|| format!("custom:{i}")),
                        signal: MemberSignal::Fixed(theta.to_dense()),
                    })
                })
                .collect::<Result<_>>()?
        }
    })
}
