//! Flat `key = value` run configuration.
//!
//! ```text
//! # comment
//! dataset.kind = synthetic
//! n_list = 100, 300, 1000
//! ```
//!
//! Lists are comma separated. Unknown and repeated keys are rejected, and
//! every value is parsed before any computation starts.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::datasets::{load_abalone, load_wine, DatasetKind, RawTable, WineVariant};
use crate::error::{Error, Result};
use crate::experiments::{
    DataSource, ExperimentConfig, ModelFamily, ModelSpec, DEFAULT_MC_SAMPLES,
};
use crate::relu_net::{LogSchedule, TrainConfig};

/// Environment variable that overrides `base_seed`.
pub const SEED_ENV: &str = "BENIGN_LAB_SEED";

pub const KNOWN_KEYS: &[&str] = &[
    "dataset.kind",
    "dataset.path",
    "d",
    "n_list",
    "n_test",
    "m",
    "lr",
    "iterations",
    "noise_std",
    "gamma_list",
    "seeds",
    "base_seed",
    "mc_samples",
    "log_schedule",
    "out_dir",
    "abalone_columns",
    "wine_variant",
    "constant_C",
    "eps",
    "delta",
    "gamma",
    "n",
    "f_eps_norm",
    "model",
    "diagnostics",
];

#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunConfig {
    entries: BTreeMap<String, String>,
}

impl FromStr for RunConfig {
    type Err = Error;

    fn from_str(text: &str) -> Result<Self> {
        let mut entries = BTreeMap::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::config(line, format!("line {}: expected `key = value`", idx + 1))
            })?;
            let (key, value) = (key.trim(), value.trim());
            if !KNOWN_KEYS.contains(&key) {
                return Err(Error::config(key, format!("line {}: unknown key", idx + 1)));
            }
            if entries.insert(key.to_string(), value.to_string()).is_some() {
                return Err(Error::config(
                    key,
                    format!("line {}: key given twice", idx + 1),
                ));
            }
        }
        Ok(RunConfig { entries })
    }
}

impl RunConfig {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        std::fs::read_to_string(path.as_ref())
            .map_err(|e| Error::at_path(path.as_ref(), e))?
            .parse()
    }

    /// Sets a key, validating the name.
    pub fn set(&mut self, key: &str, value: impl Into<String>) -> Result<()> {
        if !KNOWN_KEYS.contains(&key) {
            return Err(Error::config(key, "unknown key"));
        }
        self.entries.insert(key.to_string(), value.into());
        Ok(())
    }

    pub fn contains(&self, key: &str) -> bool {
        self.entries.contains_key(key)
    }

    pub fn raw(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(String::as_str)
    }

    fn parse_value<T: FromStr>(key: &str, v: &str) -> Result<T>
    where
        T::Err: std::fmt::Display,
    {
        v.trim()
            .parse()
            .map_err(|e: T::Err| Error::config(key, format!("cannot parse `{v}`: {e}")))
    }

    pub fn get<T: FromStr>(&self, key: &str) -> Result<Option<T>>
    where
        T::Err: std::fmt::Display,
    {
        self.raw(key).map(|v| Self::parse_value(key, v)).transpose()
    }

    pub fn get_or<T: FromStr>(&self, key: &str, default: T) -> Result<T>
    where
        T::Err: std::fmt::Display,
    {
        Ok(self.get(key)?.unwrap_or(default))
    }

    pub fn require<T: FromStr>(&self, key: &str) -> Result<T>
    where
        T::Err: std::fmt::Display,
    {
        self.get(key)?
            .ok_or_else(|| Error::config(key, "required key is missing"))
    }

    pub fn list<T: FromStr>(&self, key: &str) -> Result<Option<Vec<T>>>
    where
        T::Err: std::fmt::Display,
    {
        self.raw(key)
            .map(|v| {
                v.split(',')
                    .map(|item| Self::parse_value(key, item))
                    .collect::<Result<Vec<T>>>()
                    .and_then(|items| {
                        if items.is_empty() {
                            Err(Error::config(key, "empty list"))
                        } else {
                            Ok(items)
                        }
                    })
            })
            .transpose()
    }

    /// `base_seed`, overridden by the `BENIGN_LAB_SEED` environment variable.
    pub fn base_seed(&self) -> Result<u64> {
        match std::env::var(SEED_ENV) {
            Ok(v) => Self::parse_value(SEED_ENV, &v),
            Err(_) => self.get_or("base_seed", 0),
        }
    }

    pub fn out_dir(&self) -> PathBuf {
        PathBuf::from(self.raw("out_dir").unwrap_or("."))
    }

    pub fn dataset_kind(&self) -> Result<DatasetKind> {
        self.get_or("dataset.kind", DatasetKind::Synthetic)
    }

    /// Loads the real table named by `dataset.kind` and `dataset.path`.
    ///
    /// Without `dataset.path` the file is looked up in `data/` under its UCI
    /// name.
    pub fn load_raw(&self) -> Result<RawTable> {
        let kind = self.dataset_kind()?;
        let path = |default: &str| {
            self.raw("dataset.path")
                .map(PathBuf::from)
                .unwrap_or_else(|| Path::new("data").join(default))
        };
        match kind {
            DatasetKind::Synthetic => {
                Err(Error::config("dataset.kind", "synthetic data has no file"))
            }
            DatasetKind::Abalone => {
                let cols: Option<Vec<usize>> = self.list("abalone_columns")?;
                load_abalone(path("abalone.data"), cols.as_deref())
            }
            DatasetKind::Wine => {
                let variant: WineVariant = self.get_or("wine_variant", WineVariant::Red)?;
                load_wine(path(variant.default_file_name()))
            }
        }
    }

    pub fn train_config(&self) -> Result<TrainConfig> {
        let lr: f64 = self.get_or("lr", 0.1)?;
        if !(lr > 0.0 && lr.is_finite()) {
            return Err(Error::config("lr", "must be positive"));
        }
        let iterations: u64 = self.get_or("iterations", 1000)?;
        if iterations == 0 {
            return Err(Error::config("iterations", "must be at least 1"));
        }
        Ok(TrainConfig {
            lr,
            iterations,
            schedule: self.get_or("log_schedule", LogSchedule::default())?,
            diagnostics: self.get_or("diagnostics", false)?,
        })
    }

    /// Validates every experiment key and loads real data if requested.
    pub fn experiment(&self) -> Result<ExperimentConfig> {
        let kind = self.dataset_kind()?;
        let data = match kind {
            DatasetKind::Synthetic => {
                let d: usize = self.get_or("d", 3)?;
                if d < 2 {
                    return Err(Error::config("d", "must be at least 2"));
                }
                DataSource::Synthetic { d }
            }
            _ => {
                let raw = self.load_raw()?;
                if let Some(d) = self.get::<usize>("d")? {
                    if d != raw.dim() {
                        return Err(Error::config(
                            "d",
                            format!("dataset has {} features, config says {d}", raw.dim()),
                        ));
                    }
                }
                let n_test: usize = self.get_or("n_test", 1000)?;
                DataSource::Real { raw, n_test }
            }
        };
        let model = match self.get_or("model", ModelFamily::Nn)? {
            ModelFamily::Nn => {
                let width: usize = self.get_or("m", 4096)?;
                if width == 0 || !width.is_multiple_of(2) {
                    return Err(Error::config("m", "must be even and positive"));
                }
                ModelSpec::Nn {
                    width,
                    train: self.train_config()?,
                }
            }
            ModelFamily::Krr => ModelSpec::Krr {
                gammas: self.require_list("gamma_list")?,
            },
        };
        let cfg = ExperimentConfig {
            data,
            model,
            n_list: self.require_list("n_list")?,
            seeds: self.get_or("seeds", 1)?,
            base_seed: self.base_seed()?,
            noise_std: self.get_or("noise_std", 0.2)?,
            mc_samples: self.get_or("mc_samples", DEFAULT_MC_SAMPLES)?,
        };
        cfg.validate().map_err(|e| match e {
            Error::InvalidArgument(msg) => Error::config(guess_key(&msg), msg),
            other => other,
        })?;
        Ok(cfg)
    }

    pub fn require_list<T: FromStr>(&self, key: &str) -> Result<Vec<T>>
    where
        T::Err: std::fmt::Display,
    {
        self.list(key)?
            .ok_or_else(|| Error::config(key, "required key is missing"))
    }
}

/// Maps an experiment validation message back to the config key it concerns.
fn guess_key(msg: &str) -> &'static str {
    const KEYS: &[(&str, &str)] = &[
        ("n_list", "n_list"),
        ("seeds", "seeds"),
        ("noise_std", "noise_std"),
        ("mc_samples", "mc_samples"),
        ("n_test", "n_test"),
        ("gamma_list", "gamma_list"),
        ("lr", "lr"),
        ("d must", "d"),
        ("m must", "m"),
    ];
    KEYS.iter()
        .find(|(needle, _)| msg.contains(needle))
        .map_or("n_list", |(_, key)| key)
}
