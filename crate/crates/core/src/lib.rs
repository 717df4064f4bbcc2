//! Nadaraya-Watson classification with per-query error bounds.
//!
//! Three variants share one estimator:
//!
//! * [`RegularModel`] scans every training sample per query,
//! * [`LocalizedModel`] restricts the estimate to the `k` nearest samples
//!   found with a k-d tree,
//! * [`DyadicModel`] bins the training set into a hashed grid and returns
//!   cell majorities (no bounds).
//!
//! The regular and localized variants attach to every estimate a bound on
//! `|p_c(y) − p̂_c(y)|` holding with probability at least `1 − δ`
//! ([`bounds`]). Numeric code is generic over [`Scalar`]; the aliases at the
//! crate root fix it to `f64`.

// `!(x > 0)` style checks deliberately reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bounds;
pub mod calibration;
pub mod cli;
pub mod dataset;
pub mod dyadic;
pub mod error;
pub mod estimate;
pub mod eval;
pub mod kdtree;
pub mod kernel;
pub mod localized;
pub mod model_io;
pub mod regular;
pub mod rng;
pub mod scalar;
pub mod synthetic;

pub use bounds::{BoundBreakdown, BoundConfig, Regime, TailParams, TailRule};
pub use dataset::{CsvOptions, LabelColumn, LabeledDataset};
pub use dyadic::DyadicModel;
pub use error::{NwcError, Result};
pub use estimate::{ClassPredictor, PredictionWithBounds, ProbabilisticClassifier, ProbabilityEstimate};
pub use kdtree::KdTree;
pub use kernel::{KernelFamily, KernelSpec};
pub use localized::LocalizedModel;
pub use regular::RegularModel;
pub use scalar::Scalar;

pub type Dataset = LabeledDataset<f64>;
pub type Kernel = KernelSpec<f64>;
pub type Regular = RegularModel<f64>;
pub type Localized = LocalizedModel<f64>;
pub type Dyadic = DyadicModel<f64>;
pub type Bounds = BoundConfig<f64>;
pub type Estimate = ProbabilityEstimate<f64>;
pub type Prediction = PredictionWithBounds<f64>;
