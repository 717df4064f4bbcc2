//! Prediction types and the traits shared by the three classifier variants.

use rayon::prelude::*;

use crate::bounds::{BoundBreakdown, BoundConfig};
use crate::error::{NwcError, Result};
use crate::scalar::Scalar;

/// Class-probability vector and the local kernel mass `κ` behind it.
///
/// When `κ = 0` no training sample carries weight at the query; the estimate
/// is then flagged as abstained and `probs` holds the uniform vector, which
/// must not be read as a prediction.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbabilityEstimate<T> {
    pub probs: Vec<T>,
    pub kappa: T,
    pub abstained: bool,
}

impl<T: Scalar> ProbabilityEstimate<T> {
    /// Normalises per-class kernel sums by their total.
    pub fn from_class_sums(sums: Vec<T>) -> Self {
        let kappa: T = sums.iter().copied().sum();
        if kappa > T::zero() {
            let probs = sums.into_iter().map(|s| s / kappa).collect();
            ProbabilityEstimate {
                probs,
                kappa,
                abstained: false,
            }
        } else {
            Self::abstain(sums.len())
        }
    }

    pub fn abstain(num_classes: usize) -> Self {
        let u = T::one() / T::count(num_classes);
        ProbabilityEstimate {
            probs: vec![u; num_classes],
            kappa: T::zero(),
            abstained: true,
        }
    }

    /// Argmax with ties going to the lowest class index; `None` on abstention.
    pub fn predicted_class(&self) -> Option<usize> {
        if self.abstained {
            return None;
        }
        argmax(&self.probs)
    }

    /// Largest class probability; `None` on abstention.
    pub fn confidence(&self) -> Option<T> {
        self.predicted_class().map(|c| self.probs[c])
    }
}

pub(crate) fn argmax<T: PartialOrd + Copy>(values: &[T]) -> Option<usize> {
    let mut best: Option<(usize, T)> = None;
    for (i, &v) in values.iter().enumerate() {
        match best {
            Some((_, b)) if !(v > b) => {}
            _ => best = Some((i, v)),
        }
    }
    best.map(|(i, _)| i)
}

/// An estimate together with its high-probability error bound. The bound
/// applies to every class entry of the estimate.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictionWithBounds<T> {
    pub estimate: ProbabilityEstimate<T>,
    pub bound: BoundBreakdown<T>,
}

impl<T: Scalar> PredictionWithBounds<T> {
    pub fn predicted_class(&self) -> Option<usize> {
        self.estimate.predicted_class()
    }
}

/// Anything that maps a query point to a class (or abstains).
pub trait ClassPredictor<T: Scalar>: Sync {
    fn dim(&self) -> usize;

    fn num_classes(&self) -> usize;

    fn predict_class(&self, y: &[T]) -> Result<Option<usize>>;

    fn check_dim(&self, y: &[T]) -> Result<()> {
        if y.len() == self.dim() {
            Ok(())
        } else {
            Err(NwcError::DimensionMismatch {
                expected: self.dim(),
                actual: y.len(),
            })
        }
    }
}

/// Kernel classifiers that produce probability estimates and bounds.
pub trait ProbabilisticClassifier<T: Scalar>: ClassPredictor<T> {
    fn predict_proba(&self, y: &[T]) -> Result<ProbabilityEstimate<T>>;

    fn predict_with_bounds(&self, y: &[T], cfg: &BoundConfig<T>) -> Result<PredictionWithBounds<T>>;

    /// Evaluates each query independently, in parallel. Output order follows
    /// the input order.
    fn predict_batch(&self, queries: &[Vec<T>]) -> Result<Vec<ProbabilityEstimate<T>>> {
        queries.par_iter().map(|q| self.predict_proba(q)).collect()
    }

    fn predict_batch_with_bounds(
        &self,
        queries: &[Vec<T>],
        cfg: &BoundConfig<T>,
    ) -> Result<Vec<PredictionWithBounds<T>>> {
        queries
            .par_iter()
            .map(|q| self.predict_with_bounds(q, cfg))
            .collect()
    }
}
