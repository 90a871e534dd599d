//! Synthetic sphere regression data, UCI Abalone / Wine Quality loaders,
//! train-statistics standardization, label-noise injection and splits.

use std::fmt;
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::Rng as _;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::rng::{derive_seed, rng_from_seed, tag};
use crate::sphere::sample_with;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum DatasetKind {
    Synthetic,
    Abalone,
    Wine,
}

impl DatasetKind {
    pub fn name(self) -> &'static str {
        match self {
            DatasetKind::Synthetic => "synthetic",
            DatasetKind::Abalone => "abalone",
            DatasetKind::Wine => "wine",
        }
    }
}

impl fmt::Display for DatasetKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for DatasetKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "synthetic" => Ok(DatasetKind::Synthetic),
            "abalone" => Ok(DatasetKind::Abalone),
            "wine" => Ok(DatasetKind::Wine),
            other => Err(Error::invalid(format!("unknown dataset kind `{other}`"))),
        }
    }
}

/// Features with noisy training targets and, when known, the clean targets.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    pub features: DMatrix<f64>,
    pub targets_noisy: Vec<f64>,
    pub targets_clean: Option<Vec<f64>>,
    pub kind: DatasetKind,
    pub noise_std: f64,
}

impl LabeledDataset {
    pub fn n(&self) -> usize {
        self.features.nrows()
    }

    pub fn dim(&self) -> usize {
        self.features.ncols()
    }
}

/// The regression function of the synthetic task: the last coordinate,
/// an order-1 spherical harmonic.
pub fn synthetic_target(x: &[f64]) -> f64 {
    x[x.len() - 1]
}

fn add_noise(clean: &[f64], noise_std: f64, seed: u64) -> Vec<f64> {
    if noise_std == 0.0 {
        return clean.to_vec();
    }
    let mut rng = rng_from_seed(seed);
    clean
        .iter()
        .map(|&c| c + noise_std * rng.sample::<f64, _>(StandardNormal))
        .collect()
}

/// `n` uniform points on S^{d-1} labelled by `x_d` plus `N(0, noise_std^2)`.
pub fn make_synthetic(d: usize, n: usize, noise_std: f64, seed: u64) -> Result<LabeledDataset> {
    if !(noise_std >= 0.0 && noise_std.is_finite()) {
        return Err(Error::invalid(format!("noise_std = {noise_std}")));
    }
    let x = sample_with(&mut rng_from_seed(derive_seed(seed, tag::DATA, &[])), d, n)?;
    let clean: Vec<f64> = (0..n).map(|i| x[(i, d - 1)]).collect();
    let noisy = add_noise(&clean, noise_std, derive_seed(seed, tag::NOISE, &[]));
    Ok(LabeledDataset {
        features: x.into_inner(),
        targets_noisy: noisy,
        targets_clean: Some(clean),
        kind: DatasetKind::Synthetic,
        noise_std,
    })
}

/// Parsed numeric table before any splitting or scaling.
#[derive(Debug, Clone, PartialEq)]
pub struct RawTable {
    pub kind: DatasetKind,
    pub feature_names: Vec<String>,
    /// Row-major, `rows x feature_names.len()`.
    pub features: Vec<Vec<f64>>,
    pub targets: Vec<f64>,
}

impl RawTable {
    pub fn rows(&self) -> usize {
        self.targets.len()
    }

    pub fn dim(&self) -> usize {
        self.feature_names.len()
    }
}

pub const ABALONE_MEASUREMENTS: [&str; 7] = [
    "length",
    "diameter",
    "height",
    "whole_weight",
    "shucked_weight",
    "viscera_weight",
    "shell_weight",
];

/// Which Wine Quality file a path is expected to hold.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WineVariant {
    Red,
    White,
}

impl WineVariant {
    pub fn default_file_name(self) -> &'static str {
        match self {
            WineVariant::Red => "winequality-red.csv",
            WineVariant::White => "winequality-white.csv",
        }
    }
}

impl std::str::FromStr for WineVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "red" => Ok(WineVariant::Red),
            "white" => Ok(WineVariant::White),
            other => Err(Error::invalid(format!("unknown wine variant `{other}`"))),
        }
    }
}

fn parse_field(field: &str, line: usize, column: usize) -> Result<f64> {
    let v: f64 = field.trim().parse().map_err(|_| Error::Parse {
        line,
        message: format!("column {} is not a number: `{field}`", column + 1),
    })?;
    if !v.is_finite() {
        return Err(Error::Parse {
            line,
            message: format!("column {} is not finite", column + 1),
        });
    }
    Ok(v)
}

fn csv_error(e: csv::Error) -> Error {
    let line = e.position().map_or(0, |p| p.line() as usize);
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::Parse {
            line,
            message: format!("{other:?}"),
        },
    }
}

/// Reads the UCI Abalone file: comma separated, no header, 9 columns
/// (sex, 7 physical measurements, rings). The categorical sex column is
/// dropped; `columns` selects measurements by index into
/// [`ABALONE_MEASUREMENTS`] (all seven when `None`).
pub fn read_abalone<R: Read>(reader: R, columns: Option<&[usize]>) -> Result<RawTable> {
    let all: Vec<usize> = (0..ABALONE_MEASUREMENTS.len()).collect();
    let keep = columns.unwrap_or(&all);
    if keep.is_empty() || keep.iter().any(|&c| c >= ABALONE_MEASUREMENTS.len()) {
        return Err(Error::invalid(format!(
            "abalone columns must be a non-empty subset of 0..{}",
            ABALONE_MEASUREMENTS.len()
        )));
    }
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_reader(reader);
    let mut features = Vec::new();
    let mut targets = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(csv_error)?;
        let line = rec.position().map_or(0, |p| p.line() as usize);
        if rec.len() == 1 && rec[0].trim().is_empty() {
            continue;
        }
        if rec.len() != 9 {
            return Err(Error::Format(format!(
                "line {line}: expected 9 columns, found {}",
                rec.len()
            )));
        }
        let numeric: Vec<f64> = (1..9)
            .map(|c| parse_field(&rec[c], line, c))
            .collect::<Result<_>>()?;
        features.push(keep.iter().map(|&c| numeric[c]).collect());
        targets.push(numeric[7]);
    }
    if targets.is_empty() {
        return Err(Error::Format("abalone file has no rows".into()));
    }
    Ok(RawTable {
        kind: DatasetKind::Abalone,
        feature_names: keep
            .iter()
            .map(|&c| ABALONE_MEASUREMENTS[c].to_string())
            .collect(),
        features,
        targets,
    })
}

pub fn load_abalone(path: impl AsRef<Path>, columns: Option<&[usize]>) -> Result<RawTable> {
    read_abalone(
        File::open(path.as_ref()).map_err(|e| Error::at_path(path.as_ref(), e))?,
        columns,
    )
}

/// Reads a UCI Wine Quality file: semicolon separated with a header row,
/// 11 physico-chemical features and the quality score.
pub fn read_wine<R: Read>(reader: R) -> Result<RawTable> {
    let mut rdr = csv::ReaderBuilder::new()
        .delimiter(b';')
        .has_headers(true)
        .flexible(true)
        .from_reader(reader);
    let header = rdr.headers().map_err(csv_error)?.clone();
    if header.len() == 1 && header[0].trim().is_empty() {
        return Err(Error::Format("wine file is empty".into()));
    }
    if header.len() != 12 {
        return Err(Error::Format(format!(
            "header: expected 12 columns, found {}",
            header.len()
        )));
    }
    let mut features = Vec::new();
    let mut targets = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(csv_error)?;
        let line = rec.position().map_or(0, |p| p.line() as usize);
        if rec.len() != 12 {
            return Err(Error::Format(format!(
                "line {line}: expected 12 columns, found {}",
                rec.len()
            )));
        }
        let row: Vec<f64> = (0..12)
            .map(|c| parse_field(&rec[c], line, c))
            .collect::<Result<_>>()?;
        targets.push(row[11]);
        features.push(row[..11].to_vec());
    }
    Ok(RawTable {
        kind: DatasetKind::Wine,
        feature_names: header
            .iter()
            .take(11)
            .map(|s| s.trim().to_string())
            .collect(),
        features,
        targets,
    })
}

pub fn load_wine(path: impl AsRef<Path>) -> Result<RawTable> {
    read_wine(File::open(path.as_ref()).map_err(|e| Error::at_path(path.as_ref(), e))?)
}

/// Per-column affine maps fitted on the training rows.
#[derive(Debug, Clone, PartialEq)]
pub struct Standardizer {
    pub feature_mean: Vec<f64>,
    pub feature_std: Vec<f64>,
    pub target_mean: f64,
    pub target_std: f64,
}

fn mean_std(values: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    let n = values.clone().count() as f64;
    let mean = values.clone().sum::<f64>() / n;
    let var = values.map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    // constant columns are centered but left unscaled
    let std = if var > 0.0 { var.sqrt() } else { 1.0 };
    (mean, std)
}

impl Standardizer {
    /// Fits means and population standard deviations.
    pub fn fit(features: &[Vec<f64>], targets: &[f64]) -> Self {
        let d = features.first().map_or(0, Vec::len);
        let (feature_mean, feature_std) = (0..d)
            .map(|c| mean_std(features.iter().map(move |r| r[c])))
            .unzip();
        let (target_mean, target_std) = mean_std(targets.iter().copied());
        Standardizer {
            feature_mean,
            feature_std,
            target_mean,
            target_std,
        }
    }

    pub fn features(&self, row: &[f64]) -> Vec<f64> {
        row.iter()
            .zip(self.feature_mean.iter().zip(&self.feature_std))
            .map(|(v, (m, s))| (v - m) / s)
            .collect()
    }

    pub fn target(&self, y: f64) -> f64 {
        (y - self.target_mean) / self.target_std
    }

    pub fn unstandardize_features(&self, row: &[f64]) -> Vec<f64> {
        row.iter()
            .zip(self.feature_mean.iter().zip(&self.feature_std))
            .map(|(v, (m, s))| v * s + m)
            .collect()
    }

    pub fn unstandardize_target(&self, y: f64) -> f64 {
        y * self.target_std + self.target_mean
    }
}

/// Disjoint train/test split of a real dataset. Test targets are clean.
#[derive(Debug, Clone, PartialEq)]
pub struct SplitPair {
    pub train: LabeledDataset,
    pub test: LabeledDataset,
    pub train_rows: Vec<usize>,
    pub test_rows: Vec<usize>,
    pub scaling: Standardizer,
}

/// Random disjoint split; features and targets standardized with training
/// statistics; Gaussian noise with standard deviation `noise_std` (in
/// standardized units) added to the training targets only.
pub fn prepare_real(
    raw: &RawTable,
    n_train: usize,
    n_test: usize,
    noise_std: f64,
    seed: u64,
) -> Result<SplitPair> {
    if n_train == 0 {
        return Err(Error::invalid("n_train must be positive"));
    }
    if n_train + n_test > raw.rows() {
        return Err(Error::invalid(format!(
            "requested {n_train} train + {n_test} test rows but the table has {}",
            raw.rows()
        )));
    }
    if !(noise_std >= 0.0 && noise_std.is_finite()) {
        return Err(Error::invalid(format!("noise_std = {noise_std}")));
    }
    let mut order: Vec<usize> = (0..raw.rows()).collect();
    order.shuffle(&mut rng_from_seed(derive_seed(seed, tag::SPLIT, &[])));
    let train_rows = order[..n_train].to_vec();
    let test_rows = order[n_train..n_train + n_test].to_vec();

    let pick_x = |rows: &[usize]| {
        rows.iter()
            .map(|&r| raw.features[r].clone())
            .collect::<Vec<_>>()
    };
    let pick_y = |rows: &[usize]| rows.iter().map(|&r| raw.targets[r]).collect::<Vec<_>>();
    let scaling = Standardizer::fit(&pick_x(&train_rows), &pick_y(&train_rows));

    let build = |rows: &[usize], noise: f64, noise_seed: u64| {
        let d = raw.dim();
        let mut features = DMatrix::zeros(rows.len(), d);
        for (i, &r) in rows.iter().enumerate() {
            for (j, v) in scaling.features(&raw.features[r]).into_iter().enumerate() {
                features[(i, j)] = v;
            }
        }
        let clean: Vec<f64> = rows
            .iter()
            .map(|&r| scaling.target(raw.targets[r]))
            .collect();
        LabeledDataset {
            features,
            targets_noisy: add_noise(&clean, noise, noise_seed),
            targets_clean: Some(clean),
            kind: raw.kind,
            noise_std: noise,
        }
    };
    Ok(SplitPair {
        train: build(&train_rows, noise_std, derive_seed(seed, tag::NOISE, &[])),
        test: build(&test_rows, 0.0, 0),
        train_rows,
        test_rows,
        scaling,
    })
}

/// Writes `split,row,feat_0..feat_{d-1},target_clean,target_noisy`.
pub fn write_split_csv<W: Write>(mut out: W, split: &SplitPair) -> std::io::Result<()> {
    let d = split.train.dim();
    let feats: Vec<String> = (0..d).map(|j| format!("feat_{j}")).collect();
    writeln!(
        out,
        "split,row,{},target_clean,target_noisy",
        feats.join(",")
    )?;
    for (name, set, rows) in [
        ("train", &split.train, &split.train_rows),
        ("test", &split.test, &split.test_rows),
    ] {
        let clean = set.targets_clean.as_deref().unwrap_or(&set.targets_noisy);
        for (i, &r) in rows.iter().enumerate() {
            let vals: Vec<String> = set
                .features
                .row(i)
                .iter()
                .map(|v| format!("{v:e}"))
                .collect();
            writeln!(
                out,
                "{name},{r},{},{:e},{:e}",
                vals.join(","),
                clean[i],
                set.targets_noisy[i]
            )?;
        }
    }
    Ok(())
}

/// Schema summary printed by `data check`.
#[derive(Debug, Clone, PartialEq)]
pub struct SchemaReport {
    pub kind: DatasetKind,
    pub rows: usize,
    pub features: Vec<String>,
    pub target_min: f64,
    pub target_max: f64,
}

pub fn check_schema(raw: &RawTable) -> SchemaReport {
    let (lo, hi) = raw
        .targets
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
            (lo.min(v), hi.max(v))
        });
    SchemaReport {
        kind: raw.kind,
        rows: raw.rows(),
        features: raw.feature_names.clone(),
        target_min: lo,
        target_max: hi,
    }
}
