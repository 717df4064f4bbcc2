//! Linear-scan Nadaraya-Watson classifier.

use std::sync::Arc;

use crate::bounds::{total_bound, total_bound_tail, BoundConfig};
use crate::dataset::LabeledDataset;
use crate::error::Result;
use crate::estimate::{ClassPredictor, PredictionWithBounds, ProbabilisticClassifier, ProbabilityEstimate};
use crate::kernel::KernelSpec;
use crate::scalar::Scalar;

/// Stores the training set; every query scans all samples.
#[derive(Debug, Clone)]
pub struct RegularModel<T> {
    data: Arc<LabeledDataset<T>>,
    kernel: KernelSpec<T>,
}

impl<T: Scalar> RegularModel<T> {
    pub fn fit(data: impl Into<Arc<LabeledDataset<T>>>, kernel: KernelSpec<T>) -> Self {
        RegularModel {
            data: data.into(),
            kernel,
        }
    }

    pub fn data(&self) -> &LabeledDataset<T> {
        &self.data
    }

    pub fn kernel(&self) -> &KernelSpec<T> {
        &self.kernel
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// Squared distance to sample `i`, abandoned (returning `None`) once it
    /// exceeds `limit`.
    #[inline]
    fn squared_distance_within(&self, y: &[T], i: usize, limit: T) -> Option<T> {
        let mut acc = T::zero();
        for (&a, &b) in y.iter().zip(self.data.row(i)) {
            let d = a - b;
            acc = acc + d * d;
            if acc > limit {
                return None;
            }
        }
        Some(acc)
    }

    fn class_sums(&self, y: &[T]) -> Vec<T> {
        let mut sums = vec![T::zero(); self.data.num_classes()];
        let limit = if self.kernel.is_compact() {
            self.kernel.bandwidth() * self.kernel.bandwidth()
        } else {
            T::infinity()
        };
        for i in 0..self.data.len() {
            if let Some(d2) = self.squared_distance_within(y, i, limit) {
                let w = self.kernel.weight_sq(d2);
                if w > T::zero() {
                    sums[self.data.label(i)] = sums[self.data.label(i)] + w;
                }
            }
        }
        sums
    }

    /// Scan without the early-exit on the running distance.
    #[doc(hidden)]
    pub fn class_sums_exhaustive(&self, y: &[T]) -> Vec<T> {
        let mut sums = vec![T::zero(); self.data.num_classes()];
        for (row, &c) in self.data.rows().zip(self.data.labels()) {
            let d2 = crate::scalar::squared_distance(y, row);
            sums[c] = sums[c] + self.kernel.weight_sq(d2);
        }
        sums
    }
}

impl<T: Scalar> ClassPredictor<T> for RegularModel<T> {
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

impl<T: Scalar> ProbabilisticClassifier<T> for RegularModel<T> {
    fn predict_proba(&self, y: &[T]) -> Result<ProbabilityEstimate<T>> {
        self.check_dim(y)?;
        Ok(ProbabilityEstimate::from_class_sums(self.class_sums(y)))
    }

    fn predict_with_bounds(&self, y: &[T], cfg: &BoundConfig<T>) -> Result<PredictionWithBounds<T>> {
        let estimate = self.predict_proba(y)?;
        let bound = if self.kernel.is_compact() {
            total_bound(&estimate, cfg, &self.kernel)?
        } else {
            let distances: Vec<T> = self.data.rows().map(|r| crate::scalar::distance(y, r)).collect();
            let kappa = estimate.kappa;
            let weights: Vec<T> = if kappa > T::zero() {
                distances.iter().map(|&d| self.kernel.weight(d) / kappa).collect()
            } else {
                Vec::new()
            };
            let distances = if weights.is_empty() { Vec::new() } else { distances };
            total_bound_tail(&estimate, cfg, &self.kernel, &weights, &distances)?
        };
        Ok(PredictionWithBounds { estimate, bound })
    }
}
