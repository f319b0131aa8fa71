//! Ground-truth data model: sparse signals, the Gaussian observation process
//! and the sum functional.
//!
//! Indices are 0-based in the Rust API and 1-based in every serialized
//! artifact (JSON signal files, CSV output).

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{invalid, Result};
use crate::scalar::Real;

/// A vector `θ ∈ ℝᵈ` stored by its support. Entries absent from the map are
/// zero; stored entries are never zero.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseSignal<T> {
    dim: usize,
    entries: BTreeMap<usize, T>,
}

impl<T: Real> SparseSignal<T> {
    /// The zero vector of dimension `dim`.
    pub fn zero(dim: usize) -> Result<Self> {
        if dim == 0 {
            return invalid("signal dimension must be positive");
        }
        Ok(Self {
            dim,
            entries: BTreeMap::new(),
        })
    }

    /// Builds a signal from `(index, value)` pairs with 0-based indices.
    /// Zero values are dropped; a repeated index keeps the last value.
    pub fn from_entries(dim: usize, entries: impl IntoIterator<Item = (usize, T)>) -> Result<Self> {
        let mut signal = Self::zero(dim)?;
        for (index, value) in entries {
            if index >= dim {
                return invalid(format!("index {index} out of range for dimension {dim}"));
            }
            if !value.is_finite() {
                return invalid(format!("entry {index} is not finite"));
            }
            if value == T::zero() {
                signal.entries.remove(&index);
            } else {
                signal.entries.insert(index, value);
            }
        }
        Ok(signal)
    }

    pub fn from_dense(values: &[T]) -> Result<Self> {
        Self::from_entries(values.len(), values.iter().copied().enumerate())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// `‖θ‖₀`.
    pub fn support_size(&self) -> usize {
        self.entries.len()
    }

    /// Membership in the class of vectors with at most `s` nonzero entries.
    pub fn is_in_sparsity_class(&self, s: usize) -> bool {
        self.support_size() <= s
    }

    /// Iterates `(0-based index, value)` over the support in index order.
    pub fn iter(&self) -> impl Iterator<Item = (usize, T)> + '_ {
        self.entries.iter().map(|(&i, &v)| (i, v))
    }

    pub fn get(&self, index: usize) -> T {
        self.entries.get(&index).copied().unwrap_or_else(T::zero)
    }

    pub fn to_dense(&self) -> Vec<T> {
        let mut out = vec![T::zero(); self.dim];
        for (i, v) in self.iter() {
            out[i] = v;
        }
        out
    }

    /// Multiplies every entry by `c`.
    pub fn scaled(&self, c: T) -> Result<Self> {
        Self::from_entries(self.dim, self.iter().map(|(i, v)| (i, v * c)))
    }
}

/// `L(θ) = Σᵢ θᵢ`, summed in index order.
pub fn linear_functional<T: Real>(theta: &SparseSignal<T>) -> T {
    theta.iter().fold(T::zero(), |acc, (_, v)| acc + v)
}

#[derive(Serialize, Deserialize)]
struct SignalRepr<T> {
    dim: usize,
    entries: BTreeMap<String, T>,
}

impl<T: Real> Serialize for SparseSignal<T> {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        // JSON object keys sort lexically; numeric order is restored on read.
        let repr = SignalRepr {
            dim: self.dim,
            entries: self.iter().map(|(i, v)| ((i + 1).to_string(), v)).collect(),
        };
        repr.serialize(serializer)
    }
}

impl<'de, T: Real> Deserialize<'de> for SparseSignal<T> {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        use serde::de::Error as _;
        let repr = SignalRepr::<T>::deserialize(deserializer)?;
        let mut entries = Vec::with_capacity(repr.entries.len());
        for (key, value) in repr.entries {
            let index: usize = key
                .trim()
                .parse()
                .map_err(|_| D::Error::custom(format!("entry key {key:?} is not an index")))?;
            if index == 0 {
                return Err(D::Error::custom("entry indices are 1-based"));
            }
            entries.push((index - 1, value));
        }
        SparseSignal::from_entries(repr.dim, entries).map_err(D::Error::custom)
    }
}

/// Observation vector `y = θ + σξ`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ObservationRepr<T>", into = "ObservationRepr<T>")]
#[serde(bound(serialize = "T: Real", deserialize = "T: Real"))]
pub struct ObservationVector<T> {
    values: Vec<T>,
    /// Noise level used by the simulator; estimators never read it.
    sigma_true: Option<T>,
}

#[derive(Serialize, Deserialize)]
struct ObservationRepr<T> {
    dim: usize,
    values: Vec<T>,
    #[serde(default)]
    sigma: Option<T>,
}

impl<T: Real> TryFrom<ObservationRepr<T>> for ObservationVector<T> {
    type Error = crate::error::Error;

    fn try_from(repr: ObservationRepr<T>) -> Result<Self> {
        if repr.values.len() != repr.dim {
            return invalid(format!(
                "observation has dim {} but {} values",
                repr.dim,
                repr.values.len()
            ));
        }
        let obs = Self::new(repr.values)?;
        match repr.sigma {
            Some(s) if s > T::zero() => Ok(obs.with_sigma(s)),
            Some(_) => invalid("sigma must be positive"),
            None => Ok(obs),
        }
    }
}

impl<T: Real> From<ObservationVector<T>> for ObservationRepr<T> {
    fn from(obs: ObservationVector<T>) -> Self {
        Self {
            dim: obs.values.len(),
            values: obs.values,
            sigma: obs.sigma_true,
        }
    }
}

impl<T: Real> ObservationVector<T> {
    pub fn new(values: Vec<T>) -> Result<Self> {
        if values.is_empty() {
            return invalid("observation vector must be non-empty");
        }
        if values.iter().any(|v| !v.is_finite()) {
            return invalid("observation values must be finite");
        }
        Ok(Self {
            values,
            sigma_true: None,
        })
    }

    pub fn with_sigma(mut self, sigma: T) -> Self {
        self.sigma_true = Some(sigma);
        self
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn sigma_true(&self) -> Option<T> {
        self.sigma_true
    }

    pub fn scaled(&self, c: T) -> Self {
        Self {
            values: self.values.iter().map(|&v| v * c).collect(),
            sigma_true: self.sigma_true.map(|s| s * c),
        }
    }

    /// Reorders coordinates so that `out[i] = self[perm[i]]`.
    pub fn permuted(&self, perm: &[usize]) -> Result<Self> {
        if perm.len() != self.dim() {
            return invalid("permutation length does not match dimension");
        }
        let mut seen = vec![false; perm.len()];
        for &p in perm {
            if p >= perm.len() || std::mem::replace(&mut seen[p], true) {
                return invalid("not a permutation");
            }
        }
        Ok(Self {
            values: perm.iter().map(|&p| self.values[p]).collect(),
            sigma_true: self.sigma_true,
        })
    }
}

/// Identifies one reproducible random stream.
///
/// The generator is ChaCha8 keyed by `seed` through
/// [`SeedableRng::seed_from_u64`], with the ChaCha stream word set to
/// `stream_id`. Draws depend only on `(seed, stream_id)`, so replicates can
/// be evaluated in any order or on any thread.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RngStream {
    pub seed: u64,
    pub stream_id: u64,
}

impl RngStream {
    pub fn new(seed: u64, stream_id: u64) -> Self {
        Self { seed, stream_id }
    }

    /// A fresh generator positioned at the start of the stream.
    pub fn generator(&self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(self.stream_id);
        rng
    }

    /// A stream for a different purpose within the same replicate, keyed by
    /// `tag`. Distinct tags give unrelated keys.
    pub fn child(&self, tag: u64) -> Self {
        Self {
            seed: splitmix64(self.seed ^ splitmix64(tag.wrapping_add(0x5851_f42d_4c95_7f2d))),
            stream_id: self.stream_id,
        }
    }
}

/// SplitMix64 finalizer, used for all seed and stream-id derivation.
pub fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Draws `y_j = θ_j + σ ξ_j` with `ξ_j` taken in index order from `rng`.
pub fn sample_observation<T: Real>(
    theta: &SparseSignal<T>,
    sigma: T,
    rng: &RngStream,
) -> Result<ObservationVector<T>> {
    if !(sigma > T::zero()) || !sigma.is_finite() {
        return invalid("sigma must be positive and finite");
    }
    let mut gen = rng.generator();
    let values = (0..theta.dim())
        .map(|j| theta.get(j) + sigma * T::standard_normal(&mut gen))
        .collect();
    Ok(ObservationVector {
        values,
        sigma_true: Some(sigma),
    })
}

/// Draws from the spike prior: a uniformly random support of size `s` with
/// every supported entry equal to `σρ`.
pub fn sample_from_spike_prior<T: Real>(
    d: usize,
    s: usize,
    rho: T,
    sigma: T,
    rng: &RngStream,
) -> Result<SparseSignal<T>> {
    if s == 0 || s > d {
        return invalid(format!("spike prior needs 1 <= s <= d, got s={s}, d={d}"));
    }
    if !(rho > T::zero()) || !(sigma > T::zero()) {
        return invalid("spike prior needs rho > 0 and sigma > 0");
    }
    let mut gen = rng.generator();
    let support = random_subset(d, s, &mut gen);
    let magnitude = sigma * rho;
    SparseSignal::from_entries(d, support.into_iter().map(|i| (i, magnitude)))
}

/// Partial Fisher–Yates shuffle: the first `s` slots of a shuffled `0..d`.
pub(crate) fn random_subset<R: Rng + ?Sized>(d: usize, s: usize, rng: &mut R) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..d).collect();
    for i in 0..s {
        let j = rng.random_range(i..d);
        idx.swap(i, j);
    }
    idx.truncate(s);
    idx
}

/// Dense draw `θ ~ N(0, a² I_d)`, stored with full support.
pub fn sample_from_gaussian_prior<T: Real>(d: usize, a: T, rng: &RngStream) -> Result<SparseSignal<T>> {
    if !(a > T::zero()) {
        return invalid("gaussian prior scale must be positive");
    }
    let mut gen = rng.generator();
    let values: Vec<T> = (0..d).map(|_| a * T::standard_normal(&mut gen)).collect();
    SparseSignal::from_dense(&values)
}
