//! Metrics, calibration error, cumulative recall curves and runtime scaling.

use std::fmt;
use std::io::Write;
use std::time::Instant;

use serde::Serialize;

use crate::dataset::LabeledDataset;
use crate::error::{NwcError, Result};
use crate::estimate::{ClassPredictor, PredictionWithBounds};
use crate::scalar::Scalar;
use crate::synthetic::{generate_overlapping, InputBox, LogisticGroundTruth};

/// Per-query view used by the metrics: the predicted class, the estimated
/// probability of that class, and its total bound. Predictors without
/// probabilities or bounds leave those fields empty.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Scored {
    pub predicted: Option<usize>,
    pub confidence: Option<f64>,
    pub bound: Option<f64>,
}

impl Scored {
    pub fn from_prediction<T: Scalar>(p: &PredictionWithBounds<T>) -> Self {
        Scored {
            predicted: p.predicted_class(),
            confidence: p.estimate.confidence().map(Scalar::as_f64),
            bound: Some(p.bound.total.as_f64()),
        }
    }

    /// Class-only prediction, e.g. from the grid variant.
    pub fn class_only(predicted: Option<usize>) -> Self {
        Scored {
            predicted,
            confidence: None,
            bound: None,
        }
    }

    pub fn abstained(&self) -> bool {
        self.predicted.is_none()
    }
}

pub fn score_all<T: Scalar>(preds: &[PredictionWithBounds<T>]) -> Vec<Scored> {
    preds.iter().map(Scored::from_prediction).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricsReport {
    pub total: usize,
    /// Correct predictions over all queries; abstentions count as wrong.
    pub accuracy: f64,
    pub weighted_precision: f64,
    pub weighted_recall: f64,
    pub precision: Vec<f64>,
    pub recall: Vec<f64>,
    pub support: Vec<usize>,
    /// Rows are true classes, columns predicted classes. Abstained queries
    /// are left out and tallied in `abstained_by_class`.
    pub confusion: Vec<Vec<usize>>,
    pub abstained_by_class: Vec<usize>,
    pub abstentions: usize,
    pub type1: usize,
    pub type2: usize,
    /// Fraction of queries that are correct and free of a Type II flag.
    pub effective_accuracy: f64,
    pub ece: f64,
    /// Mean total bound over queries that carry one.
    pub mean_bound: Option<f64>,
    pub prob_threshold: f64,
}

pub const DEFAULT_PROB_THRESHOLD: f64 = 0.5;
pub const DEFAULT_ECE_BINS: usize = 10;

/// Type I: wrong or abstained prediction. Type II: the predicted class could
/// fall below `prob_threshold` within its bound, i.e. `p̂ − total <
/// prob_threshold`; abstentions carry the vacuous bound and are counted too.
pub fn evaluate(scored: &[Scored], labels: &[usize], num_classes: usize, prob_threshold: f64) -> Result<MetricsReport> {
    if scored.len() != labels.len() {
        return Err(NwcError::LengthMismatch(format!("expected {} entries, got {}", labels.len(), scored.len())));
    }
    if let Some(&bad) = labels.iter().find(|&&c| c >= num_classes) {
        return Err(NwcError::InvalidDataset(format!("label {bad} is not below {num_classes}")));
    }
    let n = labels.len();
    let mut confusion = vec![vec![0usize; num_classes]; num_classes];
    let mut abstained_by_class = vec![0usize; num_classes];
    let mut support = vec![0usize; num_classes];
    let (mut type1, mut type2, mut effective) = (0, 0, 0);
    for (s, &c) in scored.iter().zip(labels) {
        support[c] += 1;
        let ii = is_type2(s, prob_threshold);
        type2 += usize::from(ii);
        match s.predicted {
            Some(p) if p < num_classes => {
                confusion[c][p] += 1;
                if p == c {
                    effective += usize::from(!ii);
                } else {
                    type1 += 1;
                }
            }
            Some(p) => {
                return Err(NwcError::InvalidDataset(format!("predicted class {p} is not below {num_classes}")));
            }
            None => {
                abstained_by_class[c] += 1;
                type1 += 1;
            }
        }
    }
    let nf = n.max(1) as f64;
    let correct: usize = (0..num_classes).map(|c| confusion[c][c]).sum();
    let predicted: Vec<usize> = (0..num_classes).map(|p| confusion.iter().map(|row| row[p]).sum()).collect();
    let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
    let precision: Vec<f64> = (0..num_classes).map(|c| ratio(confusion[c][c], predicted[c])).collect();
    let recall: Vec<f64> = (0..num_classes).map(|c| ratio(confusion[c][c], support[c])).collect();
    let weighted = |v: &[f64]| v.iter().zip(&support).map(|(x, &s)| x * s as f64).sum::<f64>() / nf;

    let (conf, hit): (Vec<f64>, Vec<bool>) = scored
        .iter()
        .zip(labels)
        .filter_map(|(s, &c)| Some((s.confidence?, s.predicted == Some(c))))
        .unzip();
    let bounds: Vec<f64> = scored.iter().filter_map(|s| s.bound).collect();
    Ok(MetricsReport {
        total: n,
        accuracy: correct as f64 / nf,
        weighted_precision: weighted(&precision),
        weighted_recall: weighted(&recall),
        precision,
        recall,
        support,
        confusion,
        abstentions: abstained_by_class.iter().sum(),
        abstained_by_class,
        type1,
        type2,
        effective_accuracy: effective as f64 / nf,
        ece: expected_calibration_error(&conf, &hit, DEFAULT_ECE_BINS)?,
        mean_bound: (!bounds.is_empty()).then(|| bounds.iter().sum::<f64>() / bounds.len() as f64),
        prob_threshold,
    })
}

fn is_type2(s: &Scored, prob_threshold: f64) -> bool {
    match (s.predicted, s.confidence, s.bound) {
        (None, _, _) => true,
        (Some(_), Some(p), Some(b)) => p - b < prob_threshold,
        _ => false,
    }
}

/// Equal-width binned ECE over `[0, 1]`; a confidence of exactly 1 falls in
/// the last bin. Empty input gives 0.
pub fn expected_calibration_error(confidences: &[f64], correct: &[bool], bins: usize) -> Result<f64> {
    if confidences.len() != correct.len() {
        return Err(NwcError::LengthMismatch(format!("expected {} entries, got {}", confidences.len(), correct.len())));
    }
    if bins == 0 {
        return Err(NwcError::param("bins", "must be positive"));
    }
    if confidences.is_empty() {
        return Ok(0.0);
    }
    let mut count = vec![0usize; bins];
    let mut conf_sum = vec![0.0f64; bins];
    let mut hits = vec![0usize; bins];
    for (&p, &ok) in confidences.iter().zip(correct) {
        let b = ((p.clamp(0.0, 1.0) * bins as f64) as usize).min(bins - 1);
        count[b] += 1;
        conf_sum[b] += p;
        hits[b] += usize::from(ok);
    }
    let n = confidences.len() as f64;
    Ok((0..bins)
        .filter(|&b| count[b] > 0)
        .map(|b| (hits[b] as f64 - conf_sum[b]).abs() / n)
        .sum())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub enum Ranking {
    /// Total bound, with abstentions ranked as bound 1.
    #[default]
    BoundWidth,
    /// `1 − max p̂`, with abstentions ranked as 1.
    OneMinusConfidence,
}

impl Ranking {
    pub fn name(self) -> &'static str {
        match self {
            Ranking::BoundWidth => "bound_width",
            Ranking::OneMinusConfidence => "one_minus_confidence",
        }
    }

    fn key(self, s: &Scored) -> f64 {
        if s.abstained() {
            return 1.0;
        }
        match self {
            Ranking::BoundWidth => s.bound.unwrap_or(1.0),
            Ranking::OneMinusConfidence => 1.0 - s.confidence.unwrap_or(0.0),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CumulativeRecallCurve {
    pub ranking: Ranking,
    /// `(fraction flagged, fraction of errors captured)`, starting at `(0, 0)`.
    pub points: Vec<(f64, f64)>,
    pub errors: usize,
    /// No errors at all: the curve is flat at zero.
    pub degenerate: bool,
}

impl CumulativeRecallCurve {
    /// Fraction of errors among the top `x` fraction of queries.
    pub fn recall_at(&self, x: f64) -> f64 {
        let n = self.points.len() - 1;
        let k = ((x.clamp(0.0, 1.0) * n as f64) + 1e-9).floor() as usize;
        self.points[k.min(n)].1
    }
}

/// Ranks queries by descending uncertainty (ties by query index) and tracks
/// the share of misclassifications captured.
pub fn cumulative_recall(scored: &[Scored], labels: &[usize], ranking: Ranking) -> Result<CumulativeRecallCurve> {
    if scored.len() != labels.len() {
        return Err(NwcError::LengthMismatch(format!("expected {} entries, got {}", labels.len(), scored.len())));
    }
    let wrong: Vec<bool> = scored.iter().zip(labels).map(|(s, &c)| s.predicted != Some(c)).collect();
    let keys: Vec<f64> = scored.iter().map(|s| ranking.key(s)).collect();
    let mut order: Vec<usize> = (0..scored.len()).collect();
    order.sort_by(|&a, &b| keys[b].total_cmp(&keys[a]).then(a.cmp(&b)));
    let errors = wrong.iter().filter(|&&w| w).count();
    let n = scored.len().max(1) as f64;
    let mut points = Vec::with_capacity(scored.len() + 1);
    points.push((0.0, 0.0));
    let mut caught = 0usize;
    for (i, &q) in order.iter().enumerate() {
        caught += usize::from(wrong[q]);
        let y = if errors == 0 { 0.0 } else { caught as f64 / errors as f64 };
        points.push(((i + 1) as f64 / n, y));
    }
    Ok(CumulativeRecallCurve {
        ranking,
        points,
        errors,
        degenerate: errors == 0,
    })
}

/// Fraction of queries whose estimate lies within its total bound of the true
/// class probabilities, in every class.
pub fn bound_coverage<T: Scalar>(preds: &[PredictionWithBounds<T>], truth: &[Vec<f64>]) -> Result<f64> {
    if preds.len() != truth.len() {
        return Err(NwcError::LengthMismatch(format!("expected {} entries, got {}", truth.len(), preds.len())));
    }
    if preds.is_empty() {
        return Ok(1.0);
    }
    let covered = preds
        .iter()
        .zip(truth)
        .filter(|(p, t)| {
            let b = p.bound.total.as_f64();
            p.estimate.abstained
                || p.estimate
                    .probs
                    .iter()
                    .zip(t.iter())
                    .all(|(e, &t)| (e.as_f64() - t).abs() <= b)
        })
        .count();
    Ok(covered as f64 / preds.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ScalingRow {
    pub n: usize,
    /// Median fit time in seconds.
    pub fit_seconds: f64,
    /// Median over repeats of the mean per-query time, in seconds.
    pub query_seconds: f64,
    /// Standard deviation of the per-query time across repeats.
    pub query_std: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScalingTable {
    pub rows: Vec<ScalingRow>,
    /// Least-squares slope of `ln(query time)` against `ln n`.
    pub query_slope: f64,
    pub fit_slope: f64,
    /// Every repeat produced the same predictions.
    pub deterministic: bool,
}

pub struct BenchmarkPlan<'a> {
    pub sizes: &'a [usize],
    pub dim: usize,
    pub queries: usize,
    pub repeats: usize,
    pub seed: u64,
}

/// Times `fit` and per-query prediction on synthetic overlapping data for
/// each training size. One warm-up run per size is discarded; repeats run
/// sequentially.
pub fn scaling_benchmark<F>(plan: &BenchmarkPlan<'_>, fit: F) -> Result<ScalingTable>
where
    F: Fn(&LabeledDataset<f64>) -> Result<Box<dyn ClassPredictor<f64>>>,
{
    if plan.repeats < 3 {
        return Err(NwcError::param("repeats", "need at least 3"));
    }
    if plan.sizes.is_empty() || plan.sizes.windows(2).any(|w| w[0] >= w[1]) {
        return Err(NwcError::param("sizes", "must be non-empty and strictly increasing"));
    }
    if plan.queries == 0 {
        return Err(NwcError::param("queries", "must be positive"));
    }
    let bx = InputBox::cube(plan.dim, 0.0, 10.0)?;
    let truth = LogisticGroundTruth::with_lipschitz(0.15, &bx)?;
    let (qset, _) = generate_overlapping::<f64>(&truth, plan.queries, &bx, plan.seed.wrapping_add(1))?;
    let queries: Vec<&[f64]> = qset.rows().collect();

    let mut rows = Vec::with_capacity(plan.sizes.len());
    let mut deterministic = true;
    for &n in plan.sizes {
        let (train, _) = generate_overlapping::<f64>(&truth, n, &bx, plan.seed)?;
        let mut fit_times = Vec::with_capacity(plan.repeats);
        let mut query_times = Vec::with_capacity(plan.repeats);
        let mut reference: Option<Vec<Option<usize>>> = None;
        for rep in 0..=plan.repeats {
            let start = Instant::now();
            let model = fit(&train)?;
            let fit_time = start.elapsed().as_secs_f64();
            let start = Instant::now();
            let preds = queries
                .iter()
                .map(|q| model.predict_class(q))
                .collect::<Result<Vec<_>>>()?;
            let query_time = start.elapsed().as_secs_f64() / queries.len() as f64;
            match &reference {
                Some(r) => deterministic &= *r == preds,
                None => reference = Some(preds),
            }
            if rep > 0 {
                fit_times.push(fit_time);
                query_times.push(query_time);
            }
        }
        rows.push(ScalingRow {
            n,
            fit_seconds: median(&mut fit_times),
            query_std: std_dev(&query_times),
            query_seconds: median(&mut query_times),
        });
    }
    let ln_n: Vec<f64> = rows.iter().map(|r| (r.n as f64).ln()).collect();
    let slope_of = |f: fn(&ScalingRow) -> f64| {
        let ys: Vec<f64> = rows.iter().map(|r| f(r).max(1e-12).ln()).collect();
        least_squares_slope(&ln_n, &ys)
    };
    Ok(ScalingTable {
        query_slope: slope_of(|r| r.query_seconds),
        fit_slope: slope_of(|r| r.fit_seconds),
        rows,
        deterministic,
    })
}

fn median(v: &mut [f64]) -> f64 {
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    if v.len() % 2 == 1 {
        v[m]
    } else {
        0.5 * (v[m - 1] + v[m])
    }
}

fn std_dev(v: &[f64]) -> f64 {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n).sqrt()
}

/// Slope of the ordinary least-squares line through `(x, y)`; 0 for fewer
/// than two distinct `x`.
pub fn least_squares_slope(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    if sxx > 0.0 {
        sxy / sxx
    } else {
        0.0
    }
}

pub fn write_metrics_csv<W: Write>(report: &MetricsReport, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["metric", "value"])?;
    let mut put = |k: &str, v: String| w.write_record([k, v.as_str()]);
    put("total", report.total.to_string())?;
    put("accuracy", report.accuracy.to_string())?;
    put("weighted_precision", report.weighted_precision.to_string())?;
    put("weighted_recall", report.weighted_recall.to_string())?;
    put("abstentions", report.abstentions.to_string())?;
    put("type1", report.type1.to_string())?;
    put("type2", report.type2.to_string())?;
    put("effective_accuracy", report.effective_accuracy.to_string())?;
    put("ece", report.ece.to_string())?;
    put("mean_bound", report.mean_bound.map_or_else(String::new, |b| b.to_string()))?;
    for c in 0..report.precision.len() {
        put(&format!("precision_{c}"), report.precision[c].to_string())?;
        put(&format!("recall_{c}"), report.recall[c].to_string())?;
        put(&format!("support_{c}"), report.support[c].to_string())?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_confusion_csv<W: Write>(report: &MetricsReport, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let c = report.confusion.len();
    let mut header = vec!["true".to_string()];
    header.extend((0..c).map(|p| format!("pred_{p}")));
    header.push("abstained".into());
    w.write_record(&header)?;
    for (t, row) in report.confusion.iter().enumerate() {
        let mut rec = vec![t.to_string()];
        rec.extend(row.iter().map(usize::to_string));
        rec.push(report.abstained_by_class[t].to_string());
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_crc_csv<W: Write>(curves: &[CumulativeRecallCurve], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["ranking", "fraction_flagged", "fraction_errors"])?;
    for curve in curves {
        for &(x, y) in &curve.points {
            w.write_record([curve.ranking.name(), &x.to_string(), &y.to_string()])?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn write_scaling_csv<W: Write>(variant: &str, table: &ScalingTable, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["variant", "n", "fit_seconds", "query_seconds", "query_std"])?;
    for r in &table.rows {
        w.write_record([
            variant,
            &r.n.to_string(),
            &r.fit_seconds.to_string(),
            &r.query_seconds.to_string(),
            &r.query_std.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

impl fmt::Display for MetricsReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "queries            {}", self.total)?;
        writeln!(f, "accuracy           {:.4}", self.accuracy)?;
        writeln!(f, "weighted precision {:.4}", self.weighted_precision)?;
        writeln!(f, "weighted recall    {:.4}", self.weighted_recall)?;
        writeln!(f, "abstentions        {}", self.abstentions)?;
        writeln!(f, "type I errors      {}", self.type1)?;
        writeln!(f, "type II errors     {} (threshold {})", self.type2, self.prob_threshold)?;
        writeln!(f, "effective accuracy {:.4}", self.effective_accuracy)?;
        writeln!(f, "ECE                {:.4}", self.ece)?;
        match self.mean_bound {
            Some(b) => writeln!(f, "mean bound         {b:.4}"),
            None => writeln!(f, "mean bound         n/a"),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn s(pred: usize, conf: f64, bound: f64) -> Scored {
        Scored {
            predicted: Some(pred),
            confidence: Some(conf),
            bound: Some(bound),
        }
    }

    #[test]
    fn all_correct_and_confident() {
        let scored = vec![s(0, 0.9, 0.1), s(1, 0.8, 0.3), s(1, 1.0, 0.5)];
        let r = evaluate(&scored, &[0, 1, 1], 2, 0.5).unwrap();
        assert_eq!((r.type1, r.type2, r.accuracy), (0, 0, 1.0));
        assert_eq!(r.effective_accuracy, 1.0);
    }

    #[test]
    fn type2_rule() {
        let r = evaluate(&[s(0, 0.9, 0.45)], &[0], 2, 0.5).unwrap();
        assert_eq!((r.type1, r.type2), (0, 1));
        assert_eq!(r.effective_accuracy, 0.0);
        let r = evaluate(&[s(0, 0.9, 0.4)], &[0], 2, 0.5).unwrap();
        assert_eq!(r.type2, 0);
    }

    #[test]
    fn abstentions_are_errors() {
        let scored = vec![s(0, 1.0, 0.0), Scored { predicted: None, confidence: None, bound: Some(1.0) }];
        let r = evaluate(&scored, &[0, 0], 2, 0.5).unwrap();
        assert_eq!(r.accuracy, 0.5);
        assert_eq!((r.abstentions, r.type1, r.type2), (1, 1, 1));
        assert_eq!(r.confusion.iter().flatten().sum::<usize>(), 1);
        assert_eq!(r.mean_bound, Some(0.5));
        assert!(evaluate(&scored, &[0], 2, 0.5).is_err());
    }

    #[test]
    fn hand_computed_metrics() {
        // true: 0 0 0 1 1 2 ; pred: 0 0 1 1 2 2
        let preds = [0, 0, 1, 1, 2, 2].map(|p| Scored::class_only(Some(p)));
        let r = evaluate(&preds, &[0, 0, 0, 1, 1, 2], 3, 0.5).unwrap();
        assert!((r.accuracy - 4.0 / 6.0).abs() < 1e-15);
        assert_eq!(r.precision, vec![1.0, 0.5, 0.5]);
        assert!((r.recall[0] - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(r.recall[1..], [0.5, 1.0]);
        assert!((r.weighted_precision - (3.0 + 1.0 + 0.5) / 6.0).abs() < 1e-15);
        assert_eq!(r.type2, 0);
        assert_eq!(r.mean_bound, None);
    }

    #[test]
    fn chance_accuracy() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let c = 4;
        let n = 8000;
        let labels: Vec<usize> = (0..n).map(|i| i % c).collect();
        let preds: Vec<Scored> = (0..n).map(|_| Scored::class_only(Some(rng.random_range(0..c)))).collect();
        let r = evaluate(&preds, &labels, c, 0.5).unwrap();
        let sd = (0.25 * 0.75 / n as f64).sqrt();
        assert!((r.accuracy - 0.25).abs() < 3.0 * sd, "{}", r.accuracy);
    }

    #[test]
    fn ece_trivial_cases() {
        assert_eq!(expected_calibration_error(&[1.0; 10], &[true; 10], 10).unwrap(), 0.0);
        let half: Vec<bool> = (0..10).map(|i| i % 2 == 0).collect();
        assert!((expected_calibration_error(&[1.0; 10], &half, 10).unwrap() - 0.5).abs() < 1e-15);
        // One bin at 0.65 with 3/4 correct, one at 0.95 with 1/2 correct.
        let e = expected_calibration_error(&[0.62, 0.68, 0.62, 0.68, 0.9, 1.0], &[true, true, true, false, true, false], 10)
            .unwrap();
        let oracle = (4.0 / 6.0) * (0.75f64 - 0.65).abs() + (2.0 / 6.0) * (0.5f64 - 0.95).abs();
        assert!((e - oracle).abs() < 1e-12);
    }

    #[test]
    fn ece_of_oracle_predictions_vanishes() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let n = 5000;
        let mut conf = Vec::with_capacity(n);
        let mut hit = Vec::with_capacity(n);
        for _ in 0..n {
            let p: f64 = rng.random_range(0.5..1.0);
            conf.push(p);
            hit.push(rng.random::<f64>() < p);
        }
        assert!(expected_calibration_error(&conf, &hit, 10).unwrap() <= 0.02);
    }

    #[test]
    fn crc_perfect_ranking() {
        let labels = vec![0; 10];
        let scored: Vec<Scored> = (0..10)
            .map(|i| if i % 4 == 1 { s(1, 0.6, 0.9) } else { s(0, 0.9, 0.1) })
            .collect();
        let crc = cumulative_recall(&scored, &labels, Ranking::BoundWidth).unwrap();
        assert_eq!(crc.errors, 3);
        assert_eq!(crc.recall_at(0.3), 1.0);
        assert!(crc.recall_at(0.2) < 1.0);
        let zero = cumulative_recall(&scored, &[0, 1, 0, 0, 0, 1, 0, 0, 0, 1], Ranking::BoundWidth).unwrap();
        assert!(zero.degenerate);
        assert!(zero.points.iter().all(|p| p.1 == 0.0));
    }

    #[test]
    fn crc_uninformative_ranking_is_diagonal() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let n = 4000;
        let labels = vec![0; n];
        let scored: Vec<Scored> = (0..n)
            .map(|_| {
                let wrong = rng.random::<f64>() < 0.3;
                s(usize::from(wrong), 0.7, rng.random())
            })
            .collect();
        let crc = cumulative_recall(&scored, &labels, Ranking::BoundWidth).unwrap();
        let e = crc.errors as f64;
        for x in [0.1, 0.25, 0.5, 0.75] {
            // Hypergeometric spread of errors in the top x fraction.
            let sd = (x * (1.0 - x) * (n as f64 - e) / (e * (n as f64 - 1.0))).sqrt();
            assert!((crc.recall_at(x) - x).abs() < 3.0 * sd, "x={x}");
        }
    }

    #[test]
    fn crc_one_minus_confidence_and_abstention_rank_first() {
        let scored = vec![s(0, 0.9, 0.1), Scored::class_only(None), s(0, 0.55, 0.2)];
        let crc = cumulative_recall(&scored, &[1, 0, 1], Ranking::OneMinusConfidence).unwrap();
        assert_eq!(crc.points[1].1, 1.0 / 3.0);
        assert_eq!(crc.points[2].1, 2.0 / 3.0);
    }

    #[test]
    fn slope_fit() {
        let x = [1.0, 2.0, 3.0];
        assert!((least_squares_slope(&x, &[2.0, 4.0, 6.0]) - 2.0).abs() < 1e-12);
        assert_eq!(least_squares_slope(&[1.0, 1.0], &[0.0, 3.0]), 0.0);
    }

    #[test]
    fn benchmark_validates_and_runs() {
        use crate::kernel::{KernelFamily, KernelSpec};
        use crate::regular::RegularModel;
        let fit = |ds: &LabeledDataset<f64>| -> Result<Box<dyn ClassPredictor<f64>>> {
            Ok(Box::new(RegularModel::fit(ds.clone(), KernelSpec::new(KernelFamily::Epanechnikov, 1.0)?)))
        };
        let plan = BenchmarkPlan { sizes: &[100, 200], dim: 2, queries: 20, repeats: 3, seed: 1 };
        let t = scaling_benchmark(&plan, fit).unwrap();
        assert_eq!(t.rows.len(), 2);
        assert!(t.deterministic);
        assert!(scaling_benchmark(&BenchmarkPlan { repeats: 2, ..plan }, fit).is_err());
        assert!(scaling_benchmark(&BenchmarkPlan { sizes: &[200, 100], ..plan }, fit).is_err());
    }

    #[test]
    fn csv_outputs() {
        let preds = [0, 1].map(|p| Scored::class_only(Some(p)));
        let r = evaluate(&preds, &[0, 0], 2, 0.5).unwrap();
        let mut buf = Vec::new();
        write_confusion_csv(&r, &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "true,pred_0,pred_1,abstained\n0,1,1,0\n1,0,0,0\n");
        let mut buf = Vec::new();
        write_metrics_csv(&r, &mut buf).unwrap();
        assert!(String::from_utf8(buf).unwrap().contains("accuracy,0.5\n"));
    }

    fn arb_case() -> impl Strategy<Value = (Vec<Scored>, Vec<usize>)> {
        (1usize..60).prop_flat_map(|n| {
            (
                prop::collection::vec((prop::option::of(0usize..3), 0.0f64..1.0, 0.0f64..1.0), n),
                prop::collection::vec(0usize..3, n),
            )
                .prop_map(|(raw, labels)| {
                    let scored = raw
                        .into_iter()
                        .map(|(p, c, b)| Scored {
                            predicted: p,
                            confidence: p.map(|_| c),
                            bound: Some(if p.is_none() { 1.0 } else { b }),
                        })
                        .collect();
                    (scored, labels)
                })
        })
    }

    proptest! {
        #[test]
        fn report_invariants((scored, labels) in arb_case()) {
            let r = evaluate(&scored, &labels, 3, 0.5).unwrap();
            let answered = scored.iter().filter(|s| !s.abstained()).count();
            prop_assert_eq!(r.confusion.iter().flatten().sum::<usize>(), answered);
            let trace: usize = (0..3).map(|c| r.confusion[c][c]).sum();
            prop_assert!((r.accuracy - trace as f64 / labels.len() as f64).abs() < 1e-12);
            prop_assert!((r.weighted_recall - r.accuracy).abs() < 1e-12);
            prop_assert!(r.type1 <= r.total && r.type2 <= r.total);
            prop_assert!((0.0..=1.0).contains(&r.ece));
        }

        #[test]
        fn crc_monotone_with_endpoint((scored, labels) in arb_case(), by_conf in any::<bool>()) {
            let ranking = if by_conf { Ranking::OneMinusConfidence } else { Ranking::BoundWidth };
            let crc = cumulative_recall(&scored, &labels, ranking).unwrap();
            for w in crc.points.windows(2) {
                prop_assert!(w[1].0 >= w[0].0 && w[1].1 >= w[0].1);
            }
            if crc.errors > 0 {
                prop_assert_eq!(crc.points.last().unwrap().1, 1.0);
            }
        }

        #[test]
        fn ece_permutation_invariant(v in prop::collection::vec((0.0f64..=1.0, any::<bool>()), 1..80), seed in any::<u64>()) {
            let (conf, hit): (Vec<f64>, Vec<bool>) = v.iter().copied().unzip();
            let mut perm: Vec<usize> = (0..v.len()).collect();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            for i in (1..perm.len()).rev() {
                perm.swap(i, rng.random_range(0..=i));
            }
            let pc: Vec<f64> = perm.iter().map(|&i| conf[i]).collect();
            let ph: Vec<bool> = perm.iter().map(|&i| hit[i]).collect();
            let a = expected_calibration_error(&conf, &hit, 10).unwrap();
            let b = expected_calibration_error(&pc, &ph, 10).unwrap();
            prop_assert!((a - b).abs() < 1e-12);
        }
    }
}
