//! Data-driven choice of the bound parameters: Lipschitz-constant estimate,
//! overlapping-versus-separable detection, and bandwidth search.

use std::sync::Arc;

use serde::Serialize;

use crate::bounds::BoundConfig;
use crate::dataset::{stratified_indices, LabeledDataset};
use crate::error::{NwcError, Result};
use crate::estimate::ProbabilisticClassifier;
use crate::kdtree::KdTree;
use crate::kernel::{KernelFamily, KernelSpec};
use crate::localized::LocalizedModel;
use crate::regular::RegularModel;
use crate::scalar::{distance, Scalar};

/// Default probability threshold for the Lipschitz estimate.
pub const DEFAULT_PROB_THRESHOLD: f64 = 0.1;

/// Default intra/global distance ratio below which data counts as separable.
pub const DEFAULT_SEPARABLE_RATIO: f64 = 0.5;

/// Which same-label pair sets the distance scale of the Lipschitz estimate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PairRule {
    /// Closest pair of distinct same-label samples.
    #[default]
    Closest,
    /// Farthest pair of same-label samples.
    Farthest,
}

/// `L̂ = P_t / ‖y − y'‖` for the same-label pair selected by `rule`.
///
/// With `subsample = Some((size, seed))` the estimate runs on a stratified
/// subsample.
pub fn estimate_lipschitz<T: Scalar>(
    ds: &LabeledDataset<T>,
    prob_threshold: f64,
    rule: PairRule,
    subsample: Option<(usize, u64)>,
) -> Result<f64> {
    if !(prob_threshold > 0.0 && prob_threshold <= 1.0) {
        return Err(NwcError::param("prob_threshold", "must lie in (0, 1]"));
    }
    let owned;
    let ds = match subsample {
        Some((size, seed)) if size < ds.len() => {
            owned = ds.subset(&stratified_indices(ds, size, seed)?)?;
            &owned
        }
        _ => ds,
    };
    let scale = match rule {
        PairRule::Closest => closest_same_label(ds)?,
        PairRule::Farthest => farthest_same_label(ds)?,
    };
    Ok(prob_threshold / scale)
}

fn class_members<T: Scalar>(ds: &LabeledDataset<T>) -> Vec<Vec<usize>> {
    let mut members = vec![Vec::new(); ds.num_classes()];
    for (i, &c) in ds.labels().iter().enumerate() {
        members[c].push(i);
    }
    members
}

fn closest_same_label<T: Scalar>(ds: &LabeledDataset<T>) -> Result<f64> {
    let mut best = f64::INFINITY;
    let mut duplicate: Option<(usize, usize)> = None;
    let mut any_pair = false;
    for members in class_members(ds) {
        if members.len() < 2 {
            continue;
        }
        any_pair = true;
        let sub = ds.subset(&members)?;
        let tree = KdTree::build(sub.features(), sub.dim());
        for (local, row) in sub.rows().enumerate() {
            // Grow the neighbour count until a non-coincident sample shows up.
            let mut k = 2;
            loop {
                let nn = tree.knn(row, k);
                if let Some(hit) = nn.iter().find(|n| n.squared_distance > T::zero()) {
                    best = best.min(hit.distance().as_f64());
                    break;
                }
                if duplicate.is_none() {
                    if let Some(other) = nn.iter().find(|n| n.index != local) {
                        duplicate = Some((members[local].min(members[other.index]), members[local].max(members[other.index])));
                    }
                }
                if k >= sub.len() {
                    break;
                }
                k = (2 * k).min(sub.len());
            }
        }
    }
    if !any_pair {
        return Err(NwcError::InvalidDataset(
            "no class has two samples; a same-label distance is undefined".into(),
        ));
    }
    if best.is_finite() {
        Ok(best)
    } else {
        let (first, second) = duplicate.unwrap_or((0, 0));
        Err(NwcError::CoincidentPair { first, second })
    }
}

fn farthest_same_label<T: Scalar>(ds: &LabeledDataset<T>) -> Result<f64> {
    let mut best = 0.0f64;
    let mut witness = None;
    for members in class_members(ds) {
        for (a, &i) in members.iter().enumerate() {
            for &j in &members[a + 1..] {
                witness.get_or_insert((i, j));
                best = best.max(distance(ds.row(i), ds.row(j)).as_f64());
            }
        }
    }
    match witness {
        None => Err(NwcError::InvalidDataset(
            "no class has two samples; a same-label distance is undefined".into(),
        )),
        Some((first, second)) if best == 0.0 => Err(NwcError::CoincidentPair { first, second }),
        Some(_) => Ok(best),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum DistributionRegime {
    Overlapping,
    Separable,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RegimeReport {
    pub regime: DistributionRegime,
    pub max_intra_class: f64,
    pub max_global: f64,
    /// Smallest inter-class distance in the sample; only for separable data.
    pub margin: Option<f64>,
    pub sample_size: usize,
    pub note: Option<String>,
}

/// Compares the largest within-class distance with the largest overall
/// distance on a stratified subsample. Separable iff
/// `max_intra < ratio · max_global`.
pub fn detect_regime<T: Scalar>(
    ds: &LabeledDataset<T>,
    sample_size: usize,
    seed: u64,
    ratio: f64,
) -> Result<RegimeReport> {
    if sample_size < 2 {
        return Err(NwcError::param("sample_size", "must be at least 2"));
    }
    if !(ratio > 0.0 && ratio <= 1.0) {
        return Err(NwcError::param("ratio", "must lie in (0, 1]"));
    }
    let idx = stratified_indices(ds, sample_size.min(ds.len()), seed)?;
    let mut max_intra = 0.0f64;
    let mut max_global = 0.0f64;
    let mut min_inter = f64::INFINITY;
    for (a, &i) in idx.iter().enumerate() {
        for &j in &idx[a + 1..] {
            let d = distance(ds.row(i), ds.row(j)).as_f64();
            max_global = max_global.max(d);
            if ds.label(i) == ds.label(j) {
                max_intra = max_intra.max(d);
            } else {
                min_inter = min_inter.min(d);
            }
        }
    }
    let classes_seen = {
        let mut seen = vec![false; ds.num_classes()];
        idx.iter().for_each(|&i| seen[ds.label(i)] = true);
        seen.into_iter().filter(|&s| s).count()
    };
    let (regime, margin, note) = if classes_seen < 2 {
        (
            DistributionRegime::Overlapping,
            None,
            Some("single class in sample; reported as overlapping".to_string()),
        )
    } else if max_intra < ratio * max_global && min_inter > 0.0 {
        (DistributionRegime::Separable, Some(min_inter), None)
    } else {
        (DistributionRegime::Overlapping, None, None)
    };
    Ok(RegimeReport {
        regime,
        max_intra_class: max_intra,
        max_global,
        margin,
        sample_size: idx.len(),
        note,
    })
}

/// Which estimator the bandwidth search fits.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SearchVariant {
    Regular,
    Localized { k: usize },
}

/// Settings for [`optimize_bandwidth`].
#[derive(Debug, Clone)]
pub struct BandwidthSearch {
    pub family: KernelFamily,
    /// Weight `r` of accuracy in `J = r·A − (1 − r)·B`.
    pub weight: f64,
    pub lower: f64,
    pub upper: f64,
    /// Number of searched evaluations, excluding `probes`.
    pub budget: usize,
    /// Extra bandwidths evaluated alongside the search.
    pub probes: Vec<f64>,
}

impl Default for BandwidthSearch {
    fn default() -> Self {
        BandwidthSearch {
            family: KernelFamily::Epanechnikov,
            weight: 0.95,
            lower: 0.01,
            upper: 10.0,
            budget: 30,
            probes: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TraceEntry {
    pub bandwidth: f64,
    pub accuracy: f64,
    pub mean_bound: f64,
    pub score: f64,
    pub abstentions: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BandwidthSearchResult {
    pub best: TraceEntry,
    /// Evaluations in the order they were made.
    pub trace: Vec<TraceEntry>,
}

/// Objective `J = r·A − (1 − r)·B`.
pub fn objective(weight: f64, accuracy: f64, mean_bound: f64) -> f64 {
    weight * accuracy - (1.0 - weight) * mean_bound
}

const GOLDEN: f64 = 0.618_033_988_749_894_8;
const RESTARTS: usize = 3;

/// Maximises `J` over `log λ` with golden-section search restarted in three
/// equal sub-ranges. Validation abstentions count as errors with bound 1.
pub fn optimize_bandwidth<T: Scalar>(
    variant: SearchVariant,
    train: &LabeledDataset<T>,
    val: &LabeledDataset<T>,
    cfg: &BoundConfig<T>,
    search: &BandwidthSearch,
) -> Result<BandwidthSearchResult> {
    if !(search.lower > 0.0 && search.upper > search.lower) {
        return Err(NwcError::param("bandwidth range", "need 0 < lower < upper"));
    }
    if search.budget < 3 {
        return Err(NwcError::param("budget", "need at least 3 evaluations"));
    }
    if !(0.0..=1.0).contains(&search.weight) {
        return Err(NwcError::param("weight", "must lie in [0, 1]"));
    }
    if train.dim() != val.dim() {
        return Err(NwcError::DimensionMismatch {
            expected: train.dim(),
            actual: val.dim(),
        });
    }
    let train = Arc::new(train.clone());
    let queries: Vec<Vec<T>> = val.rows().map(<[T]>::to_vec).collect();
    let mut trace = Vec::new();
    let mut eval = |log_bw: f64| -> Result<f64> {
        let entry = evaluate_bandwidth(variant, &train, &queries, val.labels(), cfg, search, log_bw.exp())?;
        trace.push(entry);
        Ok(entry.score)
    };

    let (lo, hi) = (search.lower.ln(), search.upper.ln());
    let width = (hi - lo) / RESTARTS as f64;
    let mut remaining = search.budget;
    for r in 0..RESTARTS {
        let share = remaining / (RESTARTS - r);
        remaining -= share;
        let (a, b) = (lo + width * r as f64, lo + width * (r + 1) as f64);
        golden_section(a, b, share, &mut eval)?;
    }
    for &p in &search.probes {
        if !(p > 0.0) {
            return Err(NwcError::param("probes", "bandwidths must be positive"));
        }
        eval(p.ln())?;
    }

    if trace.iter().all(|e| e.abstentions == val.len()) {
        let tree = KdTree::build(train.features(), train.dim());
        let min_nn = queries
            .iter()
            .map(|q| tree.knn(q, 1)[0].distance().as_f64())
            .fold(f64::INFINITY, f64::min);
        return Err(NwcError::AllAbstained { min_nn_distance: min_nn });
    }
    let best = *trace
        .iter()
        .reduce(|a, b| if b.score > a.score { b } else { a })
        .expect("budget guarantees evaluations");
    Ok(BandwidthSearchResult { best, trace })
}

fn golden_section<F>(mut a: f64, mut b: f64, evals: usize, f: &mut F) -> Result<()>
where
    F: FnMut(f64) -> Result<f64>,
{
    match evals {
        0 => return Ok(()),
        1 => {
            f(0.5 * (a + b))?;
            return Ok(());
        }
        _ => {}
    }
    let mut x1 = b - GOLDEN * (b - a);
    let mut x2 = a + GOLDEN * (b - a);
    let mut f1 = f(x1)?;
    let mut f2 = f(x2)?;
    for _ in 2..evals {
        if f1 >= f2 {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - GOLDEN * (b - a);
            f1 = f(x1)?;
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + GOLDEN * (b - a);
            f2 = f(x2)?;
        }
    }
    Ok(())
}

fn evaluate_bandwidth<T: Scalar>(
    variant: SearchVariant,
    train: &Arc<LabeledDataset<T>>,
    queries: &[Vec<T>],
    labels: &[usize],
    cfg: &BoundConfig<T>,
    search: &BandwidthSearch,
    bandwidth: f64,
) -> Result<TraceEntry> {
    let kernel = KernelSpec::new(search.family, T::lit(bandwidth))?;
    let preds = match variant {
        SearchVariant::Regular => RegularModel::fit(train.clone(), kernel).predict_batch_with_bounds(queries, cfg)?,
        SearchVariant::Localized { k } => {
            LocalizedModel::fit(train.clone(), kernel, k)?.predict_batch_with_bounds(queries, cfg)?
        }
    };
    let n = labels.len().max(1) as f64;
    let correct = preds
        .iter()
        .zip(labels)
        .filter(|(p, &c)| p.predicted_class() == Some(c))
        .count();
    let abstentions = preds.iter().filter(|p| p.estimate.abstained).count();
    let mean_bound = preds.iter().map(|p| p.bound.total.as_f64()).sum::<f64>() / n;
    let accuracy = correct as f64 / n;
    Ok(TraceEntry {
        bandwidth,
        accuracy,
        mean_bound,
        score: objective(search.weight, accuracy, mean_bound),
        abstentions,
    })
}
