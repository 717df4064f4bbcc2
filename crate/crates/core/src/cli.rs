//! Command-line front end. Options come from flags and an optional TOML file
//! given with `--config`; flags take precedence.

use std::collections::BTreeSet;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::bounds::{BoundConfig, Regime, TailRule, DEFAULT_SIGMA};
use crate::calibration::{
    detect_regime, estimate_lipschitz, optimize_bandwidth, BandwidthSearch, DistributionRegime, PairRule,
    SearchVariant, DEFAULT_PROB_THRESHOLD as DEFAULT_LIPSCHITZ_THRESHOLD, DEFAULT_SEPARABLE_RATIO,
};
use crate::dataset::{
    read_csv, read_query_csv, stratified_sample, train_test_split, CsvOptions, LabelColumn, LabeledDataset, MinMaxScaler,
};
use crate::error::{NwcError, Result};
use crate::eval::{
    bound_coverage, cumulative_recall, evaluate, scaling_benchmark, score_all, write_confusion_csv, write_crc_csv,
    write_metrics_csv, write_scaling_csv, BenchmarkPlan, Ranking, Scored, DEFAULT_PROB_THRESHOLD,
};
use crate::kernel::KernelFamily;
use crate::localized::DEFAULT_K;
use crate::model_io::{FittedModel, ModelBundle, ModelSpec, Variant};
use crate::synthetic::{
    generate_margin, generate_overlapping, min_interclass_distance, InputBox, LogisticGroundTruth, MarginClusterConfig,
    MarginLayout,
};

pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_DATA: i32 = 3;

const DEFAULT_BANDWIDTH: f64 = 0.2;
const DEFAULT_DELTA: f64 = 0.05;
const DEFAULT_RESOLUTION: u32 = 6;

#[derive(Debug, Parser)]
#[command(name = "nwc", version, about = "Nadaraya-Watson classification with per-query error bounds")]
pub struct Cli {
    /// TOML file with default option values; flags override it.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic dataset plus a metadata sidecar.
    Datagen(DatagenArgs),
    /// Validate a model configuration and save it as a bundle.
    Fit(FitArgs),
    /// Predict query points with per-query bounds.
    Predict(PredictArgs),
    /// Evaluate on a labelled test set.
    Eval(EvalArgs),
    /// Time fitting and querying across training sizes.
    Bench(BenchArgs),
    /// Estimate the Lipschitz constant, detect the regime, search the bandwidth.
    Calibrate(CalibrateArgs),
}

/// Options shared by every subcommand that fits a model.
#[derive(Debug, Clone, Default, Args, Deserialize)]
#[serde(default)]
pub struct ModelOpts {
    /// regular, localized or dyadic.
    #[arg(long)]
    pub variant: Option<String>,
    /// Kernel family name.
    #[arg(long)]
    pub kernel: Option<String>,
    #[arg(long)]
    pub bandwidth: Option<f64>,
    /// Use the gaussian kernel with infinite support (needs --tail-cutoff and --diameter).
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub untruncated: Option<bool>,
    /// Neighbour count of the localized variant.
    #[arg(long)]
    pub k: Option<usize>,
    /// Grid resolution m of the dyadic variant (2^m cells per dimension).
    #[arg(long)]
    pub resolution: Option<u32>,
}

/// Bound parameters.
#[derive(Debug, Clone, Default, Args, Deserialize)]
#[serde(default)]
pub struct BoundOpts {
    #[arg(long, conflicts_with = "margin")]
    pub lipschitz: Option<f64>,
    #[arg(long)]
    pub margin: Option<f64>,
    #[arg(long)]
    pub delta: Option<f64>,
    #[arg(long)]
    pub sigma: Option<f64>,
    /// Tail cut-off distance for the untruncated gaussian.
    #[arg(long)]
    pub tail_cutoff: Option<f64>,
    /// Input-space diameter for the untruncated gaussian.
    #[arg(long)]
    pub diameter: Option<f64>,
    /// Use the distance-weighted tail rule instead of the weight-mass rule.
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub distance_weighted_tail: Option<bool>,
}

/// Training-data options.
#[derive(Debug, Clone, Default, Args, Deserialize)]
#[serde(default)]
pub struct DataOpts {
    #[arg(long)]
    pub train: Option<PathBuf>,
    /// Keep only the first N feature columns.
    #[arg(long)]
    pub truncate_features: Option<usize>,
    /// Label column index (default: last column).
    #[arg(long)]
    pub label_index: Option<usize>,
    /// Input files start with a header row.
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub header: Option<bool>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Min-max scale features to [0, 1] using training-set ranges.
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub min_max_scale: Option<bool>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum DataKind {
    Overlapping,
    Margin,
}

#[derive(Debug, Clone, Args)]
pub struct DatagenArgs {
    /// Inferred from --lipschitz or --margin when omitted.
    #[arg(long, value_enum)]
    pub kind: Option<DataKind>,
    #[arg(long)]
    pub lipschitz: Option<f64>,
    #[arg(long)]
    pub margin: Option<f64>,
    /// Sample count (overlapping) or points per class (margin).
    #[arg(long, default_value_t = 10_000)]
    pub n: usize,
    #[arg(long, default_value_t = 2)]
    pub dim: usize,
    #[arg(long, default_value_t = 5)]
    pub classes: usize,
    #[arg(long, default_value_t = 1.0)]
    pub radius: f64,
    #[arg(long)]
    pub box_lo: Option<f64>,
    #[arg(long)]
    pub box_hi: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct FitArgs {
    #[command(flatten)]
    pub data: DataOpts,
    #[command(flatten)]
    pub model: ModelOpts,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct PredictArgs {
    #[command(flatten)]
    pub data: DataOpts,
    #[command(flatten)]
    pub model: ModelOpts,
    #[command(flatten)]
    pub bounds: BoundOpts,
    /// Saved model bundle; replaces --train and the model flags.
    #[arg(long)]
    pub model_file: Option<PathBuf>,
    /// Query points, one per row.
    #[arg(long)]
    pub test: Option<PathBuf>,
    /// The query file carries a label column, which is dropped.
    #[arg(long)]
    pub labeled_queries: bool,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct EvalArgs {
    #[command(flatten)]
    pub data: DataOpts,
    #[command(flatten)]
    pub model: ModelOpts,
    #[command(flatten)]
    pub bounds: BoundOpts,
    /// Labelled test set.
    #[arg(long)]
    pub test: Option<PathBuf>,
    /// Stratified training subsample size.
    #[arg(long)]
    pub train_size: Option<usize>,
    /// Metadata sidecar written by `datagen`; adds a bound-coverage rate.
    #[arg(long)]
    pub oracle: Option<PathBuf>,
    #[arg(long, default_value_t = DEFAULT_PROB_THRESHOLD)]
    pub prob_threshold: f64,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct BenchArgs {
    #[command(flatten)]
    pub model: ModelOpts,
    /// Comma-separated, strictly increasing training sizes.
    #[arg(long, value_delimiter = ',', default_values_t = [1_000usize, 10_000, 100_000])]
    pub sizes: Vec<usize>,
    #[arg(long, default_value_t = 2)]
    pub dim: usize,
    #[arg(long, default_value_t = 1_000)]
    pub queries: usize,
    #[arg(long, default_value_t = 3)]
    pub repeats: usize,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PairRuleArg {
    Closest,
    Farthest,
}

#[derive(Debug, Clone, Args)]
pub struct CalibrateArgs {
    #[command(flatten)]
    pub data: DataOpts,
    #[command(flatten)]
    pub model: ModelOpts,
    #[command(flatten)]
    pub bounds: BoundOpts,
    /// Validation set for the bandwidth search; split from --train if absent.
    #[arg(long)]
    pub val: Option<PathBuf>,
    #[arg(long, default_value_t = 0.2)]
    pub val_fraction: f64,
    /// Probability threshold P_t of the Lipschitz estimate.
    #[arg(long, default_value_t = DEFAULT_LIPSCHITZ_THRESHOLD)]
    pub prob_threshold: f64,
    #[arg(long, value_enum, default_value_t = PairRuleArg::Closest)]
    pub pair_rule: PairRuleArg,
    /// Stratified subsample size for the Lipschitz estimate.
    #[arg(long)]
    pub subsample: Option<usize>,
    #[arg(long, default_value_t = 1_000)]
    pub regime_sample: usize,
    #[arg(long, default_value_t = DEFAULT_SEPARABLE_RATIO)]
    pub ratio: f64,
    /// Also run the bandwidth search.
    #[arg(long)]
    pub search: bool,
    #[arg(long, default_value_t = 30)]
    pub budget: usize,
    #[arg(long, default_value_t = 0.01)]
    pub lower: f64,
    #[arg(long, default_value_t = 10.0)]
    pub upper: f64,
    /// Accuracy weight r of the search objective.
    #[arg(long, default_value_t = 0.95)]
    pub weight: f64,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

const CONFIG_KEYS: &[&str] = &[
    "variant",
    "kernel",
    "bandwidth",
    "untruncated",
    "k",
    "resolution",
    "lipschitz",
    "margin",
    "delta",
    "sigma",
    "tail_cutoff",
    "diameter",
    "distance_weighted_tail",
    "train",
    "truncate_features",
    "label_index",
    "header",
    "seed",
    "min_max_scale",
];

/// Option values read from a `--config` file.
#[derive(Debug, Default)]
pub struct FileConfig {
    model: ModelOpts,
    bounds: BoundOpts,
    data: DataOpts,
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let table: toml::Table =
            toml::from_str(text).map_err(|e| NwcError::param("config", format!("not valid TOML: {e}")))?;
        let known: BTreeSet<&str> = CONFIG_KEYS.iter().copied().collect();
        if let Some(bad) = table.keys().find(|k| !known.contains(k.as_str())) {
            return Err(NwcError::param("config", format!("unknown key '{bad}'")));
        }
        let value = toml::Value::Table(table);
        let part = |what: &str| NwcError::param("config", format!("bad {what} value"));
        Ok(FileConfig {
            model: value.clone().try_into().map_err(|_| part("model"))?,
            bounds: value.clone().try_into().map_err(|_| part("bound"))?,
            data: value.try_into().map_err(|_| part("data"))?,
        })
    }
}

impl ModelOpts {
    fn merge(self, file: &ModelOpts) -> ModelOpts {
        ModelOpts {
            variant: self.variant.or_else(|| file.variant.clone()),
            kernel: self.kernel.or_else(|| file.kernel.clone()),
            bandwidth: self.bandwidth.or(file.bandwidth),
            untruncated: self.untruncated.or(file.untruncated),
            k: self.k.or(file.k),
            resolution: self.resolution.or(file.resolution),
        }
    }

    fn spec(&self) -> Result<ModelSpec> {
        let spec = ModelSpec {
            variant: self.variant.as_deref().unwrap_or("regular").parse()?,
            family: self.kernel.as_deref().unwrap_or("epanechnikov").parse::<KernelFamily>()?,
            bandwidth: self.bandwidth.unwrap_or(DEFAULT_BANDWIDTH),
            truncate: !self.untruncated.unwrap_or(false),
            k: self.k.unwrap_or(DEFAULT_K),
            resolution: self.resolution.unwrap_or(DEFAULT_RESOLUTION),
        };
        spec.validate()?;
        Ok(spec)
    }
}

impl BoundOpts {
    fn merge(self, file: &BoundOpts) -> BoundOpts {
        BoundOpts {
            lipschitz: self.lipschitz.or(file.lipschitz),
            margin: self.margin.or(file.margin),
            delta: self.delta.or(file.delta),
            sigma: self.sigma.or(file.sigma),
            tail_cutoff: self.tail_cutoff.or(file.tail_cutoff),
            diameter: self.diameter.or(file.diameter),
            distance_weighted_tail: self.distance_weighted_tail.or(file.distance_weighted_tail),
        }
    }

    fn requested(&self) -> bool {
        self.lipschitz.is_some() || self.margin.is_some() || self.delta.is_some() || self.sigma.is_some()
    }

    /// Bound configuration for `spec`; `None` for the grid variant, which
    /// refuses any bound flag.
    fn config(&self, spec: &ModelSpec) -> Result<Option<BoundConfig<f64>>> {
        if spec.variant == Variant::Dyadic {
            if self.requested() {
                return Err(NwcError::Unsupported(
                    "the dyadic variant predicts cell majorities and carries no probability bounds; \
                     drop --delta/--lipschitz/--margin/--sigma or use the regular or localized variant"
                        .into(),
                ));
            }
            return Ok(None);
        }
        let regime = match (self.lipschitz, self.margin) {
            (Some(l), None) => Regime::Lipschitz(l),
            (None, Some(g)) => Regime::Margin(g),
            (Some(_), Some(_)) => return Err(NwcError::param("regime", "give either --lipschitz or --margin, not both")),
            (None, None) => return Err(NwcError::param("regime", "bounds need --lipschitz or --margin")),
        };
        let mut cfg = BoundConfig::new(regime, self.delta.unwrap_or(DEFAULT_DELTA))?
            .with_sigma(self.sigma.unwrap_or(DEFAULT_SIGMA))?;
        match (self.tail_cutoff, self.diameter) {
            (Some(c), Some(d)) => cfg = cfg.with_tail(c, d)?,
            (None, None) => {}
            _ => return Err(NwcError::param("tail", "--tail-cutoff and --diameter go together")),
        }
        if self.distance_weighted_tail.unwrap_or(false) {
            cfg = cfg.with_tail_rule(TailRule::DistanceWeighted);
        }
        cfg.check_kernel(&spec.kernel()?)?;
        Ok(Some(cfg))
    }
}

impl DataOpts {
    fn merge(self, file: &DataOpts) -> DataOpts {
        DataOpts {
            train: self.train.or_else(|| file.train.clone()),
            truncate_features: self.truncate_features.or(file.truncate_features),
            label_index: self.label_index.or(file.label_index),
            header: self.header.or(file.header),
            seed: self.seed.or(file.seed),
            min_max_scale: self.min_max_scale.or(file.min_max_scale),
        }
    }

    fn csv_options(&self, num_classes: Option<usize>) -> Result<CsvOptions> {
        if self.truncate_features == Some(0) {
            return Err(NwcError::param("truncate_features", "must be positive"));
        }
        Ok(CsvOptions {
            label_column: self.label_index.map_or(LabelColumn::Last, LabelColumn::Index),
            feature_truncation: self.truncate_features,
            has_header: self.header.unwrap_or(false),
            num_classes,
        })
    }

    fn train_path(&self) -> Result<&Path> {
        self.train.as_deref().ok_or_else(|| NwcError::param("train", "a training CSV is required (--train)"))
    }

    fn seed(&self) -> u64 {
        self.seed.unwrap_or(0)
    }

    fn scaled(&self) -> bool {
        self.min_max_scale.unwrap_or(false)
    }

    /// Training data, scaled when requested, plus the fitted scaler.
    fn load_train(&self) -> Result<(LabeledDataset<f64>, Option<MinMaxScaler<f64>>)> {
        let ds = read_labeled(self.train_path()?, &self.csv_options(None)?)?;
        scale_train(ds, self.scaled())
    }
}

fn scale_train(ds: LabeledDataset<f64>, scale: bool) -> Result<(LabeledDataset<f64>, Option<MinMaxScaler<f64>>)> {
    if !scale {
        return Ok((ds, None));
    }
    let scaler = MinMaxScaler::fit(&ds);
    Ok((scaler.transform(&ds)?, Some(scaler)))
}

fn scale_queries(queries: &mut [Vec<f64>], scaler: &Option<MinMaxScaler<f64>>) {
    if let Some(s) = scaler {
        queries.iter_mut().for_each(|q| s.transform_point(q));
    }
}

fn require<'a>(value: &'a Option<PathBuf>, flag: &'static str) -> Result<&'a Path> {
    value.as_deref().ok_or_else(|| NwcError::param(flag, format!("--{flag} is required")))
}

fn read_labeled(path: &Path, opts: &CsvOptions) -> Result<LabeledDataset<f64>> {
    read_csv(fs::File::open(path).map_err(|e| io_context(path, e))?, opts)
}

fn io_context(path: &Path, e: std::io::Error) -> NwcError {
    NwcError::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display())))
}

/// Renders the whole output in memory first, so a failure leaves no partial
/// file behind.
fn write_atomic(path: &Path, write: impl FnOnce(&mut Vec<u8>) -> Result<()>) -> Result<()> {
    let mut buf = Vec::new();
    write(&mut buf)?;
    fs::write(path, buf).map_err(|e| io_context(path, e))
}

pub fn run(cli: Cli) -> Result<()> {
    let file = match &cli.config {
        Some(p) => FileConfig::load(p)?,
        None => FileConfig::default(),
    };
    match cli.command {
        Command::Datagen(a) => cmd_datagen(a, &file),
        Command::Fit(a) => cmd_fit(a, &file),
        Command::Predict(a) => cmd_predict(a, &file),
        Command::Eval(a) => cmd_eval(a, &file),
        Command::Bench(a) => cmd_bench(a, &file),
        Command::Calibrate(a) => cmd_calibrate(a, &file),
    }
}

/// Contents of the `.meta.json` sidecar next to generated data.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Sidecar {
    Overlapping {
        seed: u64,
        n: usize,
        bounds: InputBox,
        truth: LogisticGroundTruth,
        lipschitz: f64,
    },
    Margin {
        seed: u64,
        points_per_class: usize,
        bounds: InputBox,
        layout: MarginLayout,
        observed_margin: f64,
    },
}

impl Sidecar {
    /// True class probabilities at a test point with label `label`.
    fn probabilities(&self, y: &[f64], label: usize, num_classes: usize) -> Vec<f64> {
        match self {
            Sidecar::Overlapping { truth, .. } => truth.probabilities(y).to_vec(),
            Sidecar::Margin { .. } => (0..num_classes).map(|c| f64::from(u8::from(c == label))).collect(),
        }
    }
}

pub fn sidecar_path(data: &Path) -> PathBuf {
    let mut s = data.as_os_str().to_owned();
    s.push(".meta.json");
    PathBuf::from(s)
}

fn cmd_datagen(a: DatagenArgs, file: &FileConfig) -> Result<()> {
    let out = require(&a.out, "out")?.to_path_buf();
    let seed = a.seed.or(file.data.seed).unwrap_or(0);
    let lipschitz = a.lipschitz.or(file.bounds.lipschitz);
    let margin = a.margin.or(file.bounds.margin);
    let kind = match (a.kind, lipschitz, margin) {
        (Some(k), _, _) => k,
        (None, Some(_), None) => DataKind::Overlapping,
        (None, None, Some(_)) => DataKind::Margin,
        _ => return Err(NwcError::param("kind", "give --kind, or exactly one of --lipschitz and --margin")),
    };
    let lo = a.box_lo.unwrap_or(0.0);
    let (ds, sidecar) = match kind {
        DataKind::Overlapping => {
            let l = lipschitz.ok_or_else(|| NwcError::param("lipschitz", "overlapping data needs --lipschitz"))?;
            let bx = InputBox::cube(a.dim, lo, a.box_hi.unwrap_or(lo + 10.0))?;
            let truth = LogisticGroundTruth::with_lipschitz(l, &bx)?;
            let (ds, truth) = generate_overlapping::<f64>(&truth, a.n, &bx, seed)?;
            println!("w = {:?}\nb = {}\nk = {}\nL = {}", truth.w, truth.b, truth.k, truth.lipschitz());
            let lipschitz = truth.lipschitz();
            (ds, Sidecar::Overlapping { seed, n: a.n, bounds: bx, truth, lipschitz })
        }
        DataKind::Margin => {
            let g = margin.ok_or_else(|| NwcError::param("margin", "margin data needs --margin"))?;
            let per_axis = (a.classes as f64).powf(1.0 / a.dim.max(1) as f64).ceil();
            let auto_hi = lo + 2.0 * a.radius + 2.0 * per_axis * (g + 2.0 * a.radius);
            let cfg = MarginClusterConfig {
                margin: g,
                num_classes: a.classes,
                radius: a.radius,
                points_per_class: a.n,
                bounds: InputBox::cube(a.dim, lo, a.box_hi.unwrap_or(auto_hi))?,
            };
            let (ds, layout) = generate_margin::<f64>(&cfg, seed)?;
            let observed = min_interclass_distance(&ds).unwrap_or(f64::INFINITY);
            println!("gamma = {g}\nr = {}\nobserved margin = {observed}", a.radius);
            let sidecar = Sidecar::Margin {
                seed,
                points_per_class: a.n,
                bounds: cfg.bounds,
                layout,
                observed_margin: observed,
            };
            (ds, sidecar)
        }
    };
    let meta = serde_json::to_vec_pretty(&sidecar)?;
    write_atomic(&out, |buf| ds.write_csv(buf))?;
    fs::write(sidecar_path(&out), meta)?;
    Ok(())
}

fn cmd_fit(a: FitArgs, file: &FileConfig) -> Result<()> {
    let data = a.data.merge(&file.data);
    let spec = a.model.merge(&file.model).spec()?;
    let out = require(&a.out, "out")?;
    let train = data.train_path()?;
    let (ds, _) = scale_train(read_labeled(train, &data.csv_options(None)?)?, data.scaled())?;
    let model = FittedModel::fit(&spec, Arc::new(ds.clone()))?;
    if let FittedModel::Localized(m) = &model {
        warn_clamped(m.k_was_clamped(), m.k());
    }
    let bundle = ModelBundle {
        spec,
        num_classes: ds.num_classes(),
        dim: ds.dim(),
        dataset: fs::canonicalize(train)?,
        label_column: data.label_index.map_or(LabelColumn::Last, LabelColumn::Index),
        feature_truncation: data.truncate_features,
        has_header: data.header.unwrap_or(false),
        scaled: data.scaled(),
    };
    write_atomic(out, |buf| bundle.write(buf))
}

fn warn_clamped(clamped: bool, k: usize) {
    if clamped {
        eprintln!("warning: k exceeds the training size; using k = {k}");
    }
}

fn read_queries(path: &Path, labeled: bool, data: &DataOpts, dim: usize) -> Result<Vec<Vec<f64>>> {
    let text = fs::read(path).map_err(|e| io_context(path, e))?;
    let header = data.header.unwrap_or(false);
    let mut rows: Vec<Vec<f64>> = if labeled {
        let opts = data.csv_options(None)?;
        if text.iter().all(u8::is_ascii_whitespace) {
            Vec::new()
        } else {
            let ds: LabeledDataset<f64> = read_csv(text.as_slice(), &opts)?;
            return Ok(ds.rows().map(<[f64]>::to_vec).collect());
        }
    } else {
        read_query_csv(text.as_slice(), header)?
    };
    if let Some(t) = data.truncate_features {
        rows.iter_mut().for_each(|r| r.truncate(t));
    }
    if let Some((i, r)) = rows.iter().enumerate().find(|(_, r)| r.len() != dim) {
        return Err(NwcError::MalformedRow {
            row: i + 1 + usize::from(header),
            reason: format!("query has {} features, the model expects {dim}", r.len()),
        });
    }
    Ok(rows)
}

fn cmd_predict(a: PredictArgs, file: &FileConfig) -> Result<()> {
    let data = a.data.merge(&file.data);
    let bounds_opts = a.bounds.merge(&file.bounds);
    let out = require(&a.out, "out")?;
    let test = require(&a.test, "test")?;
    let (spec, model, scaler) = match &a.model_file {
        Some(p) => {
            let bundle = ModelBundle::load(p)?;
            let base = p.parent().map(Path::to_path_buf);
            bounds_opts.config(&bundle.spec)?;
            let (model, scaler) = bundle.restore::<f64>(base.as_deref())?;
            (bundle.spec.clone(), model, scaler)
        }
        None => {
            let spec = a.model.merge(&file.model).spec()?;
            bounds_opts.config(&spec)?;
            let (ds, scaler) = data.load_train()?;
            let model = FittedModel::fit(&spec, Arc::new(ds))?;
            (spec, model, scaler)
        }
    };
    if let FittedModel::Localized(m) = &model {
        warn_clamped(m.k_was_clamped(), m.k());
    }
    let cfg = bounds_opts.config(&spec)?;
    let clf = model.classifier();
    let mut queries = read_queries(test, a.labeled_queries, &data, clf.dim())?;
    scale_queries(&mut queries, &scaler);
    let c = clf.num_classes();
    match cfg {
        Some(cfg) => {
            let preds = model.predict_with_bounds(&queries, &cfg)?;
            write_atomic(out, |buf| write_predictions(&preds, c, buf))
        }
        None => {
            let classes = queries.iter().map(|q| clf.predict_class(q)).collect::<Result<Vec<_>>>()?;
            write_atomic(out, |buf| {
                let mut w = csv::Writer::from_writer(buf);
                w.write_record(["class", "abstained"])?;
                for p in classes {
                    w.write_record([p.map_or_else(String::new, |c| c.to_string()), p.is_none().to_string()])?;
                }
                w.flush()?;
                Ok(())
            })
        }
    }
}

/// Per-query CSV: class probabilities, predicted class, `κ` and the bound
/// breakdown.
pub fn write_predictions<W: Write>(preds: &[crate::PredictionWithBounds<f64>], num_classes: usize, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let mut header: Vec<String> = (0..num_classes).map(|c| format!("p_hat_{c}")).collect();
    header.extend(["class", "kappa", "bias", "sampling", "total", "abstained"].map(String::from));
    w.write_record(&header)?;
    for p in preds {
        let mut rec: Vec<String> = p.estimate.probs.iter().map(f64::to_string).collect();
        rec.push(p.predicted_class().map_or_else(String::new, |c| c.to_string()));
        rec.push(p.estimate.kappa.to_string());
        rec.push(p.bound.bias.to_string());
        rec.push(p.bound.sampling.to_string());
        rec.push(p.bound.total.to_string());
        rec.push(p.estimate.abstained.to_string());
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

fn cmd_eval(a: EvalArgs, file: &FileConfig) -> Result<()> {
    let data = a.data.merge(&file.data);
    let spec = a.model.merge(&file.model).spec()?;
    let cfg = a.bounds.merge(&file.bounds).config(&spec)?;
    let out = require(&a.out, "out")?;
    let test_path = require(&a.test, "test")?;
    if !(0.0..=1.0).contains(&a.prob_threshold) {
        return Err(NwcError::param("prob_threshold", "must lie in [0, 1]"));
    }
    let oracle: Option<Sidecar> = match &a.oracle {
        Some(p) => Some(serde_json::from_slice(&fs::read(p).map_err(|e| io_context(p, e))?)?),
        None => None,
    };
    let (mut train, scaler) = data.load_train()?;
    if let Some(size) = a.train_size {
        if size < train.len() {
            train = stratified_sample(&train, size, data.seed())?;
        }
    }
    let c = train.num_classes();
    let test = read_labeled(test_path, &data.csv_options(Some(c))?)?;
    let c = c.max(test.num_classes());
    let mut queries: Vec<Vec<f64>> = test.rows().map(<[f64]>::to_vec).collect();
    scale_queries(&mut queries, &scaler);
    let model = FittedModel::fit(&spec, Arc::new(train))?;
    if let FittedModel::Localized(m) = &model {
        warn_clamped(m.k_was_clamped(), m.k());
    }

    let started = std::time::Instant::now();
    let (scored, preds) = match &cfg {
        Some(cfg) => {
            let preds = model.predict_with_bounds(&queries, cfg)?;
            (score_all(&preds), Some(preds))
        }
        None => {
            let clf = model.classifier();
            let s = queries
                .iter()
                .map(|q| clf.predict_class(q).map(Scored::class_only))
                .collect::<Result<Vec<_>>>()?;
            (s, None)
        }
    };
    let elapsed = started.elapsed().as_secs_f64();
    let report = evaluate(&scored, test.labels(), c, a.prob_threshold)?;
    let coverage = match (&oracle, &preds) {
        (Some(o), Some(p)) => {
            // The oracle lives in the original, unscaled coordinates.
            let truth: Vec<Vec<f64>> = test
                .rows()
                .zip(test.labels())
                .map(|(q, &l)| o.probabilities(q, l, c))
                .collect();
            Some(bound_coverage(p, &truth)?)
        }
        _ => None,
    };
    let curves = [Ranking::BoundWidth, Ranking::OneMinusConfidence]
        .into_iter()
        .map(|r| cumulative_recall(&scored, test.labels(), r))
        .collect::<Result<Vec<_>>>()?;

    let mut metrics = Vec::new();
    write_metrics_csv(&report, &mut metrics)?;
    if let Some(cov) = coverage {
        writeln!(metrics, "bound_coverage,{cov}")?;
    }
    let mut confusion = Vec::new();
    write_confusion_csv(&report, &mut confusion)?;
    let mut crc = Vec::new();
    write_crc_csv(&curves, &mut crc)?;
    let mut summary = format!("variant            {}\n{report}", spec.variant);
    if let Some(cov) = coverage {
        summary.push_str(&format!("bound coverage     {cov:.4}\n"));
    }
    summary.push_str(&format!("top 10% recall     {:.4}\n", curves[0].recall_at(0.1)));
    let mut predictions = Vec::new();
    if let Some(p) = &preds {
        write_predictions(p, c, &mut predictions)?;
    }

    fs::create_dir_all(out)?;
    fs::write(out.join("metrics.csv"), metrics)?;
    fs::write(out.join("confusion.csv"), confusion)?;
    fs::write(out.join("crc.csv"), crc)?;
    fs::write(out.join("summary.txt"), &summary)?;
    if preds.is_some() {
        fs::write(out.join("predictions.csv"), predictions)?;
    }
    print!("{summary}");
    println!("prediction time    {elapsed:.3} s");
    Ok(())
}

fn cmd_bench(a: BenchArgs, file: &FileConfig) -> Result<()> {
    let spec = a.model.merge(&file.model).spec()?;
    let out = require(&a.out, "out")?;
    let plan = BenchmarkPlan {
        sizes: &a.sizes,
        dim: a.dim,
        queries: a.queries,
        repeats: a.repeats,
        seed: a.seed.or(file.data.seed).unwrap_or(0),
    };
    let table = scaling_benchmark(&plan, |ds| {
        let model = FittedModel::fit(&spec, Arc::new(ds.clone()))?;
        Ok(match model {
            FittedModel::Regular(m) => Box::new(m) as Box<dyn crate::ClassPredictor<f64>>,
            FittedModel::Localized(m) => Box::new(m),
            FittedModel::Dyadic(m) => Box::new(m),
        })
    })?;
    write_atomic(out, |buf| write_scaling_csv(spec.variant.name(), &table, buf))?;
    println!("variant          {}", spec.variant);
    println!("query slope      {:.3}", table.query_slope);
    println!("fit slope        {:.3}", table.fit_slope);
    Ok(())
}

fn cmd_calibrate(a: CalibrateArgs, file: &FileConfig) -> Result<()> {
    let data = a.data.merge(&file.data);
    let model = a.model.merge(&file.model);
    let bounds = a.bounds.merge(&file.bounds);
    let out = require(&a.out, "out")?;
    let spec = model.spec()?;
    let variant = match spec.variant {
        Variant::Regular => SearchVariant::Regular,
        Variant::Localized => SearchVariant::Localized { k: spec.k },
        Variant::Dyadic if a.search => {
            return Err(NwcError::Unsupported("the bandwidth search needs the regular or localized variant".into()))
        }
        Variant::Dyadic => SearchVariant::Regular,
    };
    let search = BandwidthSearch {
        family: spec.family,
        weight: a.weight,
        lower: a.lower,
        upper: a.upper,
        budget: a.budget,
        probes: bounds_probe(&model),
    };
    if a.search && (search.budget < 3 || !(search.lower > 0.0 && search.upper > search.lower)) {
        return Err(NwcError::param("search", "need --budget >= 3 and 0 < --lower < --upper"));
    }
    let seed = data.seed();
    let (ds, scaler) = data.load_train()?;
    let rule = match a.pair_rule {
        PairRuleArg::Closest => PairRule::Closest,
        PairRuleArg::Farthest => PairRule::Farthest,
    };
    let l_hat = estimate_lipschitz(&ds, a.prob_threshold, rule, a.subsample.map(|s| (s, seed)));
    let report = detect_regime(&ds, a.regime_sample, seed, a.ratio)?;

    let mut regime_csv = Vec::new();
    {
        let mut w = csv::Writer::from_writer(&mut regime_csv);
        w.write_record(["key", "value"])?;
        let regime = match report.regime {
            DistributionRegime::Overlapping => "overlapping",
            DistributionRegime::Separable => "separable",
        };
        w.write_record(["regime", regime])?;
        w.write_record(["max_intra_class", &report.max_intra_class.to_string()])?;
        w.write_record(["max_global", &report.max_global.to_string()])?;
        w.write_record(["margin", &report.margin.map_or_else(String::new, |m| m.to_string())])?;
        w.write_record(["sample_size", &report.sample_size.to_string()])?;
        w.write_record(["lipschitz_estimate", &l_hat.as_ref().map_or_else(|_| String::new(), f64::to_string)])?;
        w.write_record(["prob_threshold", &a.prob_threshold.to_string()])?;
        w.flush()?;
    }
    println!("regime             {:?}", report.regime);
    if let Some(m) = report.margin {
        println!("margin             {m}");
    }
    if let Some(n) = &report.note {
        println!("note               {n}");
    }
    match &l_hat {
        Ok(l) => println!("lipschitz estimate {l}"),
        Err(e) => println!("lipschitz estimate unavailable: {e}"),
    }

    let mut trace_csv = None;
    if a.search {
        let regime = match (bounds.lipschitz, bounds.margin, report.margin) {
            (Some(l), _, _) => Regime::Lipschitz(l),
            (None, Some(g), _) => Regime::Margin(g),
            (None, None, Some(g)) if report.regime == DistributionRegime::Separable => Regime::Margin(g),
            _ => match &l_hat {
                Ok(l) => Regime::Lipschitz(*l),
                Err(e) => {
                    return Err(NwcError::param("lipschitz", format!("no estimate available ({e}); pass --lipschitz")))
                }
            },
        };
        let cfg = BoundConfig::new(regime, bounds.delta.unwrap_or(DEFAULT_DELTA))?
            .with_sigma(bounds.sigma.unwrap_or(DEFAULT_SIGMA))?;
        let (train, val) = match &a.val {
            Some(p) => {
                let val = read_labeled(p, &data.csv_options(Some(ds.num_classes()))?)?;
                let val = match &scaler {
                    Some(s) => s.transform(&val)?,
                    None => val,
                };
                (ds.clone(), val)
            }
            None => train_test_split(&ds, a.val_fraction, seed, true)?,
        };
        let result = optimize_bandwidth(variant, &train, &val, &cfg, &search)?;
        let mut buf = Vec::new();
        {
            let mut w = csv::Writer::from_writer(&mut buf);
            w.write_record(["bandwidth", "accuracy", "mean_bound", "score", "abstentions"])?;
            for e in &result.trace {
                w.write_record([
                    e.bandwidth.to_string(),
                    e.accuracy.to_string(),
                    e.mean_bound.to_string(),
                    e.score.to_string(),
                    e.abstentions.to_string(),
                ])?;
            }
            w.flush()?;
        }
        println!("best bandwidth     {}", result.best.bandwidth);
        println!("best objective     {}", result.best.score);
        trace_csv = Some(buf);
    }

    fs::create_dir_all(out)?;
    fs::write(out.join("regime.csv"), regime_csv)?;
    if let Some(t) = trace_csv {
        fs::write(out.join("bandwidth_trace.csv"), t)?;
    }
    Ok(())
}

/// A bandwidth given explicitly is evaluated alongside the search.
fn bounds_probe(model: &ModelOpts) -> Vec<f64> {
    model.bandwidth.into_iter().collect()
}
