//! Variant selection and a small versioned model bundle.
//!
//! A bundle is a two-column `key,value` CSV that references the training
//! CSV by path and records everything needed to refit the model from it.

use std::fmt;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::Arc;

use crate::bounds::BoundConfig;
use crate::dataset::{load_csv, CsvOptions, LabelColumn, LabeledDataset, MinMaxScaler};
use crate::dyadic::DyadicModel;
use crate::error::{NwcError, Result};
use crate::estimate::{ClassPredictor, PredictionWithBounds, ProbabilisticClassifier};
use crate::kernel::{KernelFamily, KernelSpec};
use crate::localized::LocalizedModel;
use crate::regular::RegularModel;
use crate::scalar::Scalar;

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Variant {
    Regular,
    Localized,
    Dyadic,
}

impl Variant {
    pub fn name(self) -> &'static str {
        match self {
            Variant::Regular => "regular",
            Variant::Localized => "localized",
            Variant::Dyadic => "dyadic",
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Variant {
    type Err = NwcError;

    fn from_str(s: &str) -> Result<Self> {
        [Variant::Regular, Variant::Localized, Variant::Dyadic]
            .into_iter()
            .find(|v| v.name() == s)
            .ok_or_else(|| NwcError::param("variant", format!("unknown variant '{s}'")))
    }
}

/// Hyperparameters of a model, independent of the data.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelSpec {
    pub variant: Variant,
    pub family: KernelFamily,
    pub bandwidth: f64,
    pub truncate: bool,
    pub k: usize,
    pub resolution: u32,
}

impl ModelSpec {
    pub fn kernel<T: Scalar>(&self) -> Result<KernelSpec<T>> {
        KernelSpec::with_truncation(self.family, T::lit(self.bandwidth), self.truncate)
    }

    /// Checks every parameter the variant will use, without data.
    pub fn validate(&self) -> Result<()> {
        match self.variant {
            Variant::Regular => self.kernel::<f64>().map(drop),
            Variant::Localized => {
                if self.k == 0 {
                    return Err(NwcError::param("k", "must be at least 1"));
                }
                self.kernel::<f64>().map(drop)
            }
            Variant::Dyadic => {
                if self.resolution == 0 {
                    return Err(NwcError::param("resolution", "must be at least 1"));
                }
                if self.resolution > crate::dyadic::MAX_RESOLUTION {
                    return Err(NwcError::Capacity(format!(
                        "resolution {} exceeds the supported maximum of {}",
                        self.resolution,
                        crate::dyadic::MAX_RESOLUTION
                    )));
                }
                Ok(())
            }
        }
    }
}

/// A fitted model of any variant.
pub enum FittedModel<T> {
    Regular(RegularModel<T>),
    Localized(LocalizedModel<T>),
    Dyadic(DyadicModel<T>),
}

impl<T: Scalar> FittedModel<T> {
    pub fn fit(spec: &ModelSpec, data: Arc<LabeledDataset<T>>) -> Result<Self> {
        spec.validate()?;
        Ok(match spec.variant {
            Variant::Regular => FittedModel::Regular(RegularModel::fit(data, spec.kernel()?)),
            Variant::Localized => FittedModel::Localized(LocalizedModel::fit(data, spec.kernel()?, spec.k)?),
            Variant::Dyadic => FittedModel::Dyadic(DyadicModel::fit(&data, spec.resolution)?),
        })
    }

    pub fn classifier(&self) -> &dyn ClassPredictor<T> {
        match self {
            FittedModel::Regular(m) => m,
            FittedModel::Localized(m) => m,
            FittedModel::Dyadic(m) => m,
        }
    }

    /// The probabilistic view; `None` for the grid variant.
    pub fn probabilistic(&self) -> Option<&dyn ProbabilisticClassifier<T>> {
        match self {
            FittedModel::Regular(m) => Some(m),
            FittedModel::Localized(m) => Some(m),
            FittedModel::Dyadic(_) => None,
        }
    }

    pub fn predict_with_bounds(&self, queries: &[Vec<T>], cfg: &BoundConfig<T>) -> Result<Vec<PredictionWithBounds<T>>> {
        self.probabilistic()
            .ok_or_else(|| {
                NwcError::Unsupported(
                    "the dyadic variant returns cell majorities only and has no probability bounds".into(),
                )
            })?
            .predict_batch_with_bounds(queries, cfg)
    }
}

/// Model hyperparameters plus a reference to the training CSV.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelBundle {
    pub spec: ModelSpec,
    pub num_classes: usize,
    pub dim: usize,
    pub dataset: PathBuf,
    pub label_column: LabelColumn,
    pub feature_truncation: Option<usize>,
    pub has_header: bool,
    /// Features were min-max scaled with ranges fitted on the training set.
    pub scaled: bool,
}

impl ModelBundle {
    pub fn csv_options(&self) -> CsvOptions {
        CsvOptions {
            label_column: self.label_column,
            feature_truncation: self.feature_truncation,
            has_header: self.has_header,
            num_classes: Some(self.num_classes),
        }
    }

    pub fn write<W: Write>(&self, writer: W) -> Result<()> {
        let s = &self.spec;
        let label = match self.label_column {
            LabelColumn::Last => "last".to_string(),
            LabelColumn::Index(i) => i.to_string(),
        };
        let rows = [
            ("format", "nwc-model".to_string()),
            ("version", FORMAT_VERSION.to_string()),
            ("variant", s.variant.to_string()),
            ("kernel", s.family.to_string()),
            ("bandwidth", format!("{:?}", s.bandwidth)),
            ("truncate", s.truncate.to_string()),
            ("k", s.k.to_string()),
            ("resolution", s.resolution.to_string()),
            ("num_classes", self.num_classes.to_string()),
            ("dim", self.dim.to_string()),
            ("dataset", self.dataset.to_string_lossy().into_owned()),
            ("label_column", label),
            ("feature_truncation", self.feature_truncation.map_or_else(String::new, |t| t.to_string())),
            ("has_header", self.has_header.to_string()),
            ("scaled", self.scaled.to_string()),
        ];
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["key", "value"])?;
        for (k, v) in rows {
            w.write_record([k, v.as_str()])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        self.write(std::fs::File::create(path)?)
    }

    pub fn read<R: Read>(reader: R) -> Result<Self> {
        let mut map = std::collections::HashMap::new();
        for rec in csv::Reader::from_reader(reader).records() {
            let rec = rec?;
            if rec.len() != 2 {
                return Err(NwcError::InvalidDataset("model bundle rows need exactly two fields".into()));
            }
            map.insert(rec[0].to_string(), rec[1].to_string());
        }
        let get = |k: &str| {
            map.get(k)
                .map(String::as_str)
                .ok_or_else(|| NwcError::InvalidDataset(format!("model bundle is missing '{k}'")))
        };
        fn parse<V: FromStr>(key: &str, v: &str) -> Result<V> {
            v.parse()
                .map_err(|_| NwcError::InvalidDataset(format!("model bundle field '{key}' has bad value '{v}'")))
        }
        if get("format")? != "nwc-model" {
            return Err(NwcError::InvalidDataset("not a model bundle".into()));
        }
        let version: u32 = parse("version", get("version")?)?;
        if version != FORMAT_VERSION {
            return Err(NwcError::InvalidDataset(format!(
                "model bundle version {version} is not supported (expected {FORMAT_VERSION})"
            )));
        }
        let spec = ModelSpec {
            variant: get("variant")?.parse()?,
            family: get("kernel")?.parse()?,
            bandwidth: parse("bandwidth", get("bandwidth")?)?,
            truncate: parse("truncate", get("truncate")?)?,
            k: parse("k", get("k")?)?,
            resolution: parse("resolution", get("resolution")?)?,
        };
        let label_column = match get("label_column")? {
            "last" => LabelColumn::Last,
            v => LabelColumn::Index(parse("label_column", v)?),
        };
        let feature_truncation = match get("feature_truncation")? {
            "" => None,
            v => Some(parse("feature_truncation", v)?),
        };
        Ok(ModelBundle {
            spec,
            num_classes: parse("num_classes", get("num_classes")?)?,
            dim: parse("dim", get("dim")?)?,
            dataset: PathBuf::from(get("dataset")?),
            label_column,
            feature_truncation,
            has_header: parse("has_header", get("has_header")?)?,
            scaled: parse("scaled", get("scaled")?)?,
        })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::read(std::fs::File::open(path)?)
    }

    /// Reloads the referenced training data and refits. A relative dataset
    /// path is resolved against `base`. The scaler, if any, must be applied
    /// to queries before prediction.
    pub fn restore<T: Scalar>(&self, base: Option<&Path>) -> Result<(FittedModel<T>, Option<MinMaxScaler<T>>)> {
        let path = match base {
            Some(b) if self.dataset.is_relative() => b.join(&self.dataset),
            _ => self.dataset.clone(),
        };
        let data: LabeledDataset<T> = load_csv(path, &self.csv_options())?;
        if data.dim() != self.dim {
            return Err(NwcError::DimensionMismatch {
                expected: self.dim,
                actual: data.dim(),
            });
        }
        let (data, scaler) = if self.scaled {
            let scaler = MinMaxScaler::fit(&data);
            (scaler.transform(&data)?, Some(scaler))
        } else {
            (data, None)
        };
        Ok((FittedModel::fit(&self.spec, Arc::new(data))?, scaler))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bounds::BoundConfig;

    fn spec(variant: Variant) -> ModelSpec {
        ModelSpec {
            variant,
            family: KernelFamily::Quartic,
            bandwidth: 0.1 + 0.2,
            truncate: true,
            k: 7,
            resolution: 3,
        }
    }

    #[test]
    fn variant_names() {
        for v in [Variant::Regular, Variant::Localized, Variant::Dyadic] {
            assert_eq!(v.name().parse::<Variant>().unwrap(), v);
        }
        assert!("grid".parse::<Variant>().is_err());
    }

    #[test]
    fn bundle_round_trip_restores_predictions() {
        let dir = tempfile::tempdir().unwrap();
        let rows: Vec<Vec<f64>> = (0..40).map(|i| vec![(i as f64 * 0.37).sin(), (i as f64 * 0.11).cos()]).collect();
        let labels: Vec<usize> = (0..40).map(|i| i % 3).collect();
        let ds = LabeledDataset::from_rows(rows, labels).unwrap();
        ds.write_csv_path(dir.path().join("train.csv")).unwrap();
        let queries: Vec<Vec<f64>> = (0..15).map(|i| vec![(i as f64 * 0.5).sin(), 0.3]).collect();
        for variant in [Variant::Regular, Variant::Localized, Variant::Dyadic] {
            let bundle = ModelBundle {
                spec: spec(variant),
                num_classes: 3,
                dim: 2,
                dataset: PathBuf::from("train.csv"),
                label_column: LabelColumn::Last,
                feature_truncation: None,
                has_header: false,
                scaled: false,
            };
            let path = dir.path().join("model.csv");
            bundle.save(&path).unwrap();
            let back = ModelBundle::load(&path).unwrap();
            assert_eq!(back, bundle);
            assert_eq!(back.spec.bandwidth.to_bits(), (0.1f64 + 0.2).to_bits());
            let direct = FittedModel::fit(&bundle.spec, Arc::new(ds.clone())).unwrap();
            let (restored, _) = back.restore::<f64>(Some(dir.path())).unwrap();
            for q in &queries {
                assert_eq!(
                    direct.classifier().predict_class(q).unwrap(),
                    restored.classifier().predict_class(q).unwrap()
                );
            }
            let cfg = BoundConfig::lipschitz(0.5, 0.05).unwrap();
            match variant {
                Variant::Dyadic => assert!(restored.predict_with_bounds(&queries, &cfg).is_err()),
                _ => assert_eq!(
                    direct.predict_with_bounds(&queries, &cfg).unwrap(),
                    restored.predict_with_bounds(&queries, &cfg).unwrap()
                ),
            }
        }
    }

    #[test]
    fn rejects_bad_bundles() {
        assert!(ModelBundle::read("key,value\nformat,other\n".as_bytes()).is_err());
        let mut buf = Vec::new();
        ModelBundle {
            spec: spec(Variant::Regular),
            num_classes: 2,
            dim: 1,
            dataset: PathBuf::from("x.csv"),
            label_column: LabelColumn::Index(0),
            feature_truncation: Some(4),
            has_header: true,
            scaled: true,
        }
        .write(&mut buf)
        .unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(ModelBundle::read(text.as_bytes()).is_ok());
        assert!(ModelBundle::read(text.replace("version,1", "version,9").as_bytes()).is_err());
        assert!(ModelBundle::read(text.replace("quartic", "rbf").as_bytes()).is_err());
    }

    #[test]
    fn spec_validation() {
        assert!(ModelSpec { k: 0, ..spec(Variant::Localized) }.validate().is_err());
        assert!(ModelSpec { resolution: 40, ..spec(Variant::Dyadic) }.validate().is_err());
        assert!(ModelSpec { bandwidth: -1.0, ..spec(Variant::Regular) }.validate().is_err());
        // The grid ignores the kernel entirely.
        assert!(ModelSpec { bandwidth: -1.0, ..spec(Variant::Dyadic) }.validate().is_ok());
    }
}
