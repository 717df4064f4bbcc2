//! Nadaraya-Watson classifier restricted to the `k` nearest training samples.
//!
//! With a compact kernel and `k` at least the number of samples inside the
//! bandwidth, predictions coincide with [`RegularModel`](crate::RegularModel).
//! A smaller `k` can only lower `κ`, so the reported bounds are conservative.

use std::sync::Arc;

use crate::bounds::{total_bound, total_bound_tail, BoundBreakdown, BoundConfig};
use crate::dataset::LabeledDataset;
use crate::error::{NwcError, Result};
use crate::estimate::{ClassPredictor, PredictionWithBounds, ProbabilisticClassifier, ProbabilityEstimate};
use crate::kdtree::{KdTree, Neighbor};
use crate::kernel::KernelSpec;
use crate::scalar::Scalar;

/// Neighbour count used when none is configured.
pub const DEFAULT_K: usize = 50;

#[derive(Debug, Clone)]
pub struct LocalizedModel<T> {
    data: Arc<LabeledDataset<T>>,
    tree: KdTree<T>,
    kernel: KernelSpec<T>,
    k: usize,
    k_clamped: bool,
}

impl<T: Scalar> LocalizedModel<T> {
    /// Builds the k-d tree. A `k` larger than the training set is clamped to
    /// `n` and flagged via [`k_was_clamped`](Self::k_was_clamped).
    pub fn fit(data: impl Into<Arc<LabeledDataset<T>>>, kernel: KernelSpec<T>, k: usize) -> Result<Self> {
        if k == 0 {
            return Err(NwcError::param("k", "must be at least 1"));
        }
        let data = data.into();
        let tree = KdTree::build(data.features(), data.dim());
        let k_clamped = k > data.len();
        Ok(LocalizedModel {
            k: k.min(data.len()),
            k_clamped,
            data,
            tree,
            kernel,
        })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn k_was_clamped(&self) -> bool {
        self.k_clamped
    }

    pub fn kernel(&self) -> &KernelSpec<T> {
        &self.kernel
    }

    pub fn data(&self) -> &LabeledDataset<T> {
        &self.data
    }

    pub fn tree(&self) -> &KdTree<T> {
        &self.tree
    }

    /// `k` nearest training samples, nearest first.
    pub fn knn(&self, y: &[T], k: usize) -> Result<Vec<Neighbor<T>>> {
        self.check_dim(y)?;
        Ok(self.tree.knn(y, k))
    }

    fn estimate_from(&self, neighbors: &mut [Neighbor<T>]) -> ProbabilityEstimate<T> {
        // Accumulate in training order so sums match the linear scan exactly.
        neighbors.sort_unstable_by_key(|n| n.index);
        let mut sums = vec![T::zero(); self.data.num_classes()];
        for n in neighbors.iter() {
            let w = self.kernel.weight_sq(n.squared_distance);
            if w > T::zero() {
                let c = self.data.label(n.index);
                sums[c] = sums[c] + w;
            }
        }
        ProbabilityEstimate::from_class_sums(sums)
    }
}

/// Bound for a localized estimate. Its `κ` never exceeds the full-scan `κ`,
/// so for `κ ≥ 1` the result is at least the full-scan bound.
pub fn total_bound_localized<T: Scalar>(
    est: &ProbabilityEstimate<T>,
    cfg: &BoundConfig<T>,
    kernel: &KernelSpec<T>,
) -> Result<BoundBreakdown<T>> {
    total_bound(est, cfg, kernel)
}

impl<T: Scalar> ClassPredictor<T> for LocalizedModel<T> {
    fn dim(&self) -> usize {
        self.data.dim()
    }

    fn num_classes(&self) -> usize {
        self.data.num_classes()
    }

    fn predict_class(&self, y: &[T]) -> Result<Option<usize>> {
        Ok(self.predict_proba(y)?.predicted_class())
    }
}

impl<T: Scalar> ProbabilisticClassifier<T> for LocalizedModel<T> {
    fn predict_proba(&self, y: &[T]) -> Result<ProbabilityEstimate<T>> {
        let mut nn = self.knn(y, self.k)?;
        Ok(self.estimate_from(&mut nn))
    }

    fn predict_with_bounds(&self, y: &[T], cfg: &BoundConfig<T>) -> Result<PredictionWithBounds<T>> {
        let mut nn = self.knn(y, self.k)?;
        let estimate = self.estimate_from(&mut nn);
        let bound = if self.kernel.is_compact() {
            total_bound_localized(&estimate, cfg, &self.kernel)?
        } else if estimate.abstained {
            total_bound_tail(&estimate, cfg, &self.kernel, &[], &[])?
        } else {
            let distances: Vec<T> = nn.iter().map(Neighbor::distance).collect();
            let weights: Vec<T> = nn
                .iter()
                .map(|n| self.kernel.weight_sq(n.squared_distance) / estimate.kappa)
                .collect();
            total_bound_tail(&estimate, cfg, &self.kernel, &weights, &distances)?
        };
        Ok(PredictionWithBounds { estimate, bound })
    }
}
