use crate::scalar::Real;

/// Observations sorted by decreasing `y²` with prefix sums of `y`, so that
/// every hard-threshold sum `Σ y_j 1{y_j² > t}` is one binary search.
///
/// Ties in `y²` are broken by `y`, which makes the sorted sequence, and
/// hence every sum, independent of the input order.
pub(crate) struct ThresholdSums<T> {
    squares: Vec<T>,
    prefix: Vec<T>,
}

impl<T: Real> ThresholdSums<T> {
    pub(crate) fn new(y: &[T]) -> Self {
        let mut pairs: Vec<(T, T)> = y.iter().map(|&v| (v * v, v)).collect();
        pairs.sort_by(|a, b| {
            b.0.partial_cmp(&a.0)
                .unwrap_or(std::cmp::Ordering::Equal)
                .then(b.1.partial_cmp(&a.1).unwrap_or(std::cmp::Ordering::Equal))
        });
        let mut prefix = Vec::with_capacity(pairs.len() + 1);
        let mut acc = T::zero();
        prefix.push(acc);
        for &(_, v) in &pairs {
            acc = acc + v;
            prefix.push(acc);
        }
        Self {
            squares: pairs.into_iter().map(|(sq, _)| sq).collect(),
            prefix,
        }
    }

    /// `Σ y_j 1{y_j² > threshold}`.
    pub(crate) fn sum_above(&self, threshold: T) -> T {
        let k = self.squares.partition_point(|&sq| sq > threshold);
        self.prefix[k]
    }

    pub(crate) fn full_sum(&self) -> T {
        self.prefix[self.squares.len()]
    }
}
