//! Labelled datasets: storage, CSV ingestion, splits and stratified sampling.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;

use crate::error::{NwcError, Result};
use crate::rng::{substream, Stream};
use crate::scalar::Scalar;

/// Row-major `n × d` feature matrix with dense integer labels in `0..C`.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset<T> {
    features: Vec<T>,
    labels: Vec<usize>,
    dim: usize,
    num_classes: usize,
}

impl<T: Scalar> LabeledDataset<T> {
    /// Builds a dataset from flat row-major features.
    pub fn new(features: Vec<T>, labels: Vec<usize>, dim: usize, num_classes: usize) -> Result<Self> {
        if labels.is_empty() {
            return Err(NwcError::InvalidDataset("dataset must contain at least one sample".into()));
        }
        if dim == 0 {
            return Err(NwcError::InvalidDataset("feature dimension must be positive".into()));
        }
        if features.len() != labels.len() * dim {
            return Err(NwcError::InvalidDataset(format!(
                "{} feature values do not form {} rows of dimension {dim}",
                features.len(),
                labels.len()
            )));
        }
        if num_classes == 0 {
            return Err(NwcError::InvalidDataset("number of classes must be positive".into()));
        }
        if let Some((i, &c)) = labels.iter().enumerate().find(|(_, &c)| c >= num_classes) {
            return Err(NwcError::InvalidDataset(format!(
                "label {c} of sample {i} is not below the class count {num_classes}"
            )));
        }
        if let Some(pos) = features.iter().position(|v| !v.is_finite()) {
            return Err(NwcError::InvalidDataset(format!(
                "non-finite feature in sample {} column {}",
                pos / dim,
                pos % dim
            )));
        }
        Ok(LabeledDataset {
            features,
            labels,
            dim,
            num_classes,
        })
    }

    /// Builds a dataset from rows, inferring `C = max label + 1`.
    pub fn from_rows(rows: Vec<Vec<T>>, labels: Vec<usize>) -> Result<Self> {
        let c = labels.iter().max().map_or(1, |&m| m + 1);
        Self::from_rows_with_classes(rows, labels, c)
    }

    pub fn from_rows_with_classes(rows: Vec<Vec<T>>, labels: Vec<usize>, num_classes: usize) -> Result<Self> {
        let dim = rows.first().map_or(0, Vec::len);
        if rows.len() != labels.len() {
            return Err(NwcError::InvalidDataset(format!(
                "{} rows but {} labels",
                rows.len(),
                labels.len()
            )));
        }
        if let Some(i) = rows.iter().position(|r| r.len() != dim) {
            return Err(NwcError::InvalidDataset(format!(
                "row {i} has dimension {} but row 0 has {dim}",
                rows[i].len()
            )));
        }
        Self::new(rows.into_iter().flatten().collect(), labels, dim, num_classes)
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[T] {
        &self.features[i * self.dim..(i + 1) * self.dim]
    }

    pub fn rows(&self) -> impl ExactSizeIterator<Item = &[T]> + '_ {
        self.features.chunks_exact(self.dim)
    }

    #[inline]
    pub fn label(&self, i: usize) -> usize {
        self.labels[i]
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn features(&self) -> &[T] {
        &self.features
    }

    /// One-hot encoding of sample `i`'s label.
    pub fn one_hot(&self, i: usize) -> Vec<T> {
        let mut v = vec![T::zero(); self.num_classes];
        v[self.labels[i]] = T::one();
        v
    }

    /// Number of samples per class.
    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.num_classes];
        for &c in &self.labels {
            counts[c] += 1;
        }
        counts
    }

    /// New dataset made of the given sample indices, in that order.
    pub fn subset(&self, indices: &[usize]) -> Result<Self> {
        let mut features = Vec::with_capacity(indices.len() * self.dim);
        let mut labels = Vec::with_capacity(indices.len());
        for &i in indices {
            features.extend_from_slice(self.row(i));
            labels.push(self.labels[i]);
        }
        Self::new(features, labels, self.dim, self.num_classes)
    }

    /// Overrides the class count, e.g. when a split lost the largest label.
    pub fn with_num_classes(mut self, num_classes: usize) -> Result<Self> {
        if self.labels.iter().any(|&c| c >= num_classes) {
            return Err(NwcError::InvalidDataset(format!(
                "labels exceed requested class count {num_classes}"
            )));
        }
        self.num_classes = num_classes;
        Ok(self)
    }

    /// Writes the dataset as headerless CSV with the label in the last column.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(writer);
        let mut record = Vec::with_capacity(self.dim + 1);
        for (row, &label) in self.rows().zip(&self.labels) {
            record.clear();
            record.extend(row.iter().map(|v| v.to_string()));
            record.push(label.to_string());
            w.write_record(&record)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn write_csv_path(&self, path: impl AsRef<Path>) -> Result<()> {
        self.write_csv(File::create(path)?)
    }
}

/// Which column carries the class label.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum LabelColumn {
    #[default]
    Last,
    Index(usize),
}

/// CSV ingestion options. The defaults read the MIT-BIH heartbeat layout:
/// no header, 187 features, trailing label.
#[derive(Debug, Clone, Default)]
pub struct CsvOptions {
    pub label_column: LabelColumn,
    pub feature_truncation: Option<usize>,
    pub has_header: bool,
    pub num_classes: Option<usize>,
}

/// Reads a labelled dataset from a CSV file.
pub fn load_csv<T: Scalar>(path: impl AsRef<Path>, opts: &CsvOptions) -> Result<LabeledDataset<T>> {
    read_csv(File::open(path)?, opts)
}

/// Reads a labelled dataset from any CSV source.
pub fn read_csv<T: Scalar, R: Read>(reader: R, opts: &CsvOptions) -> Result<LabeledDataset<T>> {
    if opts.feature_truncation == Some(0) {
        return Err(NwcError::param("feature_truncation", "must be positive"));
    }
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(opts.has_header)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let mut features = Vec::new();
    let mut labels = Vec::new();
    let mut width: Option<usize> = None;
    let mut dim = 0;
    for (i, record) in rdr.records().enumerate() {
        let row = i + 1 + usize::from(opts.has_header);
        let record = record?;
        if record.len() == 1 && record.get(0) == Some("") {
            continue;
        }
        match width {
            None => width = Some(record.len()),
            Some(w) if w != record.len() => {
                return Err(NwcError::MalformedRow {
                    row,
                    reason: format!("expected {w} columns, found {}", record.len()),
                })
            }
            _ => {}
        }
        if record.len() < 2 {
            return Err(NwcError::MalformedRow {
                row,
                reason: "need at least one feature column and a label column".into(),
            });
        }
        let label_idx = match opts.label_column {
            LabelColumn::Last => record.len() - 1,
            LabelColumn::Index(j) if j < record.len() => j,
            LabelColumn::Index(j) => {
                return Err(NwcError::MalformedRow {
                    row,
                    reason: format!("label column {j} out of range"),
                })
            }
        };
        labels.push(parse_label(record.get(label_idx).unwrap_or(""), row)?);
        let keep = opts
            .feature_truncation
            .unwrap_or(usize::MAX)
            .min(record.len() - 1);
        dim = keep;
        for (j, field) in record.iter().enumerate().filter(|&(j, _)| j != label_idx).take(keep) {
            let v: T = field.parse().map_err(|_| NwcError::MalformedRow {
                row,
                reason: format!("column {j}: `{field}` is not a number"),
            })?;
            if !v.is_finite() {
                return Err(NwcError::MalformedRow {
                    row,
                    reason: format!("column {j}: non-finite value"),
                });
            }
            features.push(v);
        }
    }
    if labels.is_empty() {
        return Err(NwcError::InvalidDataset("CSV contains no data rows".into()));
    }
    let inferred = labels.iter().max().map_or(1, |&m| m + 1);
    let num_classes = match opts.num_classes {
        Some(c) if c < inferred => {
            return Err(NwcError::InvalidDataset(format!(
                "label {} exceeds requested class count {c}",
                inferred - 1
            )))
        }
        Some(c) => c,
        None => inferred,
    };
    LabeledDataset::new(features, labels, dim, num_classes)
}

/// Labels may be written as floats (`2.0`) but must be exact non-negative
/// integers.
fn parse_label(field: &str, row: usize) -> Result<usize> {
    if let Ok(v) = field.parse::<usize>() {
        return Ok(v);
    }
    let v: f64 = field.parse().map_err(|_| NwcError::MalformedRow {
        row,
        reason: format!("label `{field}` is not a number"),
    })?;
    if !(v >= 0.0) || v.fract() != 0.0 || v > u32::MAX as f64 {
        return Err(NwcError::MalformedRow {
            row,
            reason: format!("label `{field}` is not a non-negative integer"),
        });
    }
    Ok(v as usize)
}

/// Reads unlabelled query points; an empty file yields no rows.
pub fn read_query_csv<T: Scalar, R: Read>(reader: R, has_header: bool) -> Result<Vec<Vec<T>>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(has_header)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let mut rows = Vec::new();
    for (i, record) in rdr.records().enumerate() {
        let row = i + 1 + usize::from(has_header);
        let record = record?;
        let parsed = record
            .iter()
            .enumerate()
            .map(|(j, f)| {
                f.parse::<T>().ok().filter(|v| v.is_finite()).ok_or_else(|| NwcError::MalformedRow {
                    row,
                    reason: format!("column {j}: `{f}` is not a finite number"),
                })
            })
            .collect::<Result<Vec<T>>>()?;
        rows.push(parsed);
    }
    Ok(rows)
}

/// Splits into `(train, test)`. The test side receives `round(n · fraction)`
/// samples, or per-class rounded shares when stratified.
pub fn train_test_split<T: Scalar>(
    ds: &LabeledDataset<T>,
    test_fraction: f64,
    seed: u64,
    stratified: bool,
) -> Result<(LabeledDataset<T>, LabeledDataset<T>)> {
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(NwcError::param("test_fraction", "must lie in (0, 1)"));
    }
    let mut rng = substream(seed, Stream::Split);
    let n = ds.len();
    let test_idx: Vec<usize> = if stratified {
        let by_class = indices_by_class(ds);
        let quotas = largest_remainder_quotas(&by_class, n, (n as f64 * test_fraction).round() as usize);
        let mut chosen = Vec::new();
        for (mut members, quota) in by_class.into_values().zip(quotas) {
            members.shuffle(&mut rng);
            chosen.extend_from_slice(&members[..quota]);
        }
        chosen
    } else {
        let mut all: Vec<usize> = (0..n).collect();
        all.shuffle(&mut rng);
        all.truncate((n as f64 * test_fraction).round() as usize);
        all
    };
    if test_idx.is_empty() || test_idx.len() == n {
        return Err(NwcError::EmptyPartition(format!(
            "test fraction {test_fraction} of {n} samples leaves one side empty"
        )));
    }
    let mut in_test = vec![false; n];
    for &i in &test_idx {
        in_test[i] = true;
    }
    let mut test_idx = test_idx;
    test_idx.sort_unstable();
    let train_idx: Vec<usize> = (0..n).filter(|&i| !in_test[i]).collect();
    Ok((ds.subset(&train_idx)?, ds.subset(&test_idx)?))
}

/// Draws `size` samples without replacement keeping class proportions within
/// one sample of `size · proportion`.
pub fn stratified_sample<T: Scalar>(ds: &LabeledDataset<T>, size: usize, seed: u64) -> Result<LabeledDataset<T>> {
    ds.subset(&stratified_indices(ds, size, seed)?)
}

pub(crate) fn stratified_indices<T: Scalar>(ds: &LabeledDataset<T>, size: usize, seed: u64) -> Result<Vec<usize>> {
    if size == 0 || size > ds.len() {
        return Err(NwcError::param(
            "size",
            format!("must lie in 1..={}, got {size}", ds.len()),
        ));
    }
    let mut rng = substream(seed, Stream::Sampling);
    let by_class = indices_by_class(ds);
    let quotas = largest_remainder_quotas(&by_class, ds.len(), size);
    let mut chosen = Vec::with_capacity(size);
    for (mut members, quota) in by_class.into_values().zip(quotas) {
        members.shuffle(&mut rng);
        chosen.extend_from_slice(&members[..quota]);
    }
    chosen.shuffle(&mut rng);
    Ok(chosen)
}

fn indices_by_class<T: Scalar>(ds: &LabeledDataset<T>) -> BTreeMap<usize, Vec<usize>> {
    let mut map: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (i, &c) in ds.labels().iter().enumerate() {
        map.entry(c).or_default().push(i);
    }
    map
}

/// Hamilton apportionment of `total` draws across classes.
fn largest_remainder_quotas(by_class: &BTreeMap<usize, Vec<usize>>, n: usize, total: usize) -> Vec<usize> {
    let exact: Vec<f64> = by_class
        .values()
        .map(|m| m.len() as f64 * total as f64 / n as f64)
        .collect();
    let mut quotas: Vec<usize> = exact.iter().map(|q| q.floor() as usize).collect();
    let mut remaining = total - quotas.iter().sum::<usize>();
    let mut order: Vec<usize> = (0..exact.len()).collect();
    order.sort_by(|&a, &b| {
        let ra = exact[a] - exact[a].floor();
        let rb = exact[b] - exact[b].floor();
        rb.partial_cmp(&ra).unwrap_or(std::cmp::Ordering::Equal).then(a.cmp(&b))
    });
    for &j in order.iter().cycle() {
        if remaining == 0 {
            break;
        }
        let cap = by_class.values().nth(j).map_or(0, Vec::len);
        if quotas[j] < cap {
            quotas[j] += 1;
            remaining -= 1;
        }
    }
    quotas
}

/// Per-dimension min-max scaling to `[0, 1]`, fitted on one dataset and
/// applied to others. Constant dimensions map to 0.
#[derive(Debug, Clone, PartialEq)]
pub struct MinMaxScaler<T> {
    min: Vec<T>,
    range: Vec<T>,
}

impl<T: Scalar> MinMaxScaler<T> {
    pub fn fit(ds: &LabeledDataset<T>) -> Self {
        let d = ds.dim();
        let mut min = vec![T::infinity(); d];
        let mut max = vec![T::neg_infinity(); d];
        for row in ds.rows() {
            for j in 0..d {
                min[j] = min[j].min(row[j]);
                max[j] = max[j].max(row[j]);
            }
        }
        let range = min.iter().zip(&max).map(|(&lo, &hi)| hi - lo).collect();
        MinMaxScaler { min, range }
    }

    pub fn transform_point(&self, y: &mut [T]) {
        for ((v, &lo), &r) in y.iter_mut().zip(&self.min).zip(&self.range) {
            *v = if r > T::zero() { (*v - lo) / r } else { T::zero() };
        }
    }

    pub fn transform(&self, ds: &LabeledDataset<T>) -> Result<LabeledDataset<T>> {
        let mut features = ds.features().to_vec();
        for row in features.chunks_exact_mut(ds.dim()) {
            self.transform_point(row);
        }
        LabeledDataset::new(features, ds.labels().to_vec(), ds.dim(), ds.num_classes())
    }
}

/// Draws a uniformly random index permutation; used by tests and benchmarks.
pub fn random_permutation<R: Rng>(n: usize, rng: &mut R) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(rng);
    idx
}
