//! Risk curves across sample sizes, excess-risk estimation, crossing-point
//! detection and aggregation, and the gradient-descent schedule quantities.

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::datasets::{
    make_synthetic, prepare_real, synthetic_target, DatasetKind, LabeledDataset, RawTable,
};
use crate::error::{Error, Result};
use crate::krr::krr_complexity_sweep;
use crate::ntk::SpectrumEntry;
use crate::relu_net::{forward, init_antisymmetric, train, TrainConfig, TwoLayerNet};
use crate::rng::{derive_seed, tag};
use crate::special::ln_factorial;
use crate::sphere::{row_major, sample_sphere};

/// Default number of Monte-Carlo points per synthetic excess-risk evaluation.
pub const DEFAULT_MC_SAMPLES: usize = 20_000;

/// Anything that maps a batch of inputs (rows) to predictions.
pub trait Predictor {
    fn predict(&self, x: &DMatrix<f64>) -> Result<Vec<f64>>;
}

impl Predictor for TwoLayerNet {
    fn predict(&self, x: &DMatrix<f64>) -> Result<Vec<f64>> {
        forward(self, x)
    }
}

/// The identically zero function.
#[derive(Debug, Clone, Copy, Default)]
pub struct ZeroPredictor;

impl Predictor for ZeroPredictor {
    fn predict(&self, x: &DMatrix<f64>) -> Result<Vec<f64>> {
        Ok(vec![0.0; x.nrows()])
    }
}

/// Wraps a pointwise function of one input row.
pub struct FnPredictor<F>(pub F);

impl<F: Fn(&[f64]) -> f64> Predictor for FnPredictor<F> {
    fn predict(&self, x: &DMatrix<f64>) -> Result<Vec<f64>> {
        let d = x.ncols();
        Ok(row_major(x).chunks_exact(d).map(|r| (self.0)(r)).collect())
    }
}

/// How excess risk is estimated.
#[derive(Debug, Clone, PartialEq)]
pub enum ExcessEval {
    /// Fresh uniform points on S^{d-1} scored against `x_d`.
    MonteCarlo { d: usize, samples: usize, seed: u64 },
    /// Held-out inputs with clean targets.
    HeldOut {
        features: DMatrix<f64>,
        clean_targets: Vec<f64>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EvalSource {
    MonteCarlo,
    HeldOut,
}

/// A fixed evaluation sample, reused at every point of one curve.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalSet {
    features: DMatrix<f64>,
    targets: Vec<f64>,
    source: EvalSource,
}

impl ExcessEval {
    /// Held-out evaluation on a test split; its targets must be clean.
    pub fn held_out(test: &LabeledDataset) -> Result<Self> {
        let clean = test
            .targets_clean
            .clone()
            .ok_or_else(|| Error::invalid("test split has no clean targets"))?;
        Ok(ExcessEval::HeldOut {
            features: test.features.clone(),
            clean_targets: clean,
        })
    }

    pub fn materialize(&self) -> Result<EvalSet> {
        match self {
            ExcessEval::MonteCarlo { d, samples, seed } => {
                if *samples == 0 {
                    return Err(Error::invalid(
                        "Monte-Carlo evaluation needs at least one sample",
                    ));
                }
                let x = sample_sphere(*d, *samples, *seed)?;
                let targets = (0..*samples).map(|i| x[(i, d - 1)]).collect();
                Ok(EvalSet {
                    features: x.into_inner(),
                    targets,
                    source: EvalSource::MonteCarlo,
                })
            }
            ExcessEval::HeldOut {
                features,
                clean_targets,
            } => {
                if features.nrows() != clean_targets.len() {
                    return Err(Error::invalid(
                        "held-out features and targets differ in length",
                    ));
                }
                if clean_targets.is_empty() {
                    return Err(Error::invalid("held-out split is empty"));
                }
                Ok(EvalSet {
                    features: features.clone(),
                    targets: clean_targets.clone(),
                    source: EvalSource::HeldOut,
                })
            }
        }
    }
}

impl EvalSet {
    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }

    pub fn features(&self) -> &DMatrix<f64> {
        &self.features
    }

    pub fn targets(&self) -> &[f64] {
        &self.targets
    }

    pub fn source(&self) -> EvalSource {
        self.source
    }

    pub(crate) fn row_major(&self) -> Vec<f64> {
        row_major(&self.features)
    }

    pub(crate) fn check_dim(&self, d: usize) -> Result<()> {
        if self.features.ncols() != d {
            return Err(Error::invalid(format!(
                "evaluation inputs have {} columns, model expects {d}",
                self.features.ncols()
            )));
        }
        Ok(())
    }

    /// Mean squared distance between `preds` and the evaluation targets.
    pub fn excess_of(&self, preds: &[f64]) -> f64 {
        preds
            .iter()
            .zip(&self.targets)
            .map(|(p, t)| (p - t) * (p - t))
            .sum::<f64>()
            / self.targets.len() as f64
    }
}

/// `|f - f*|^2` in L2: a Monte-Carlo mean on synthetic data, or the
/// clean-target held-out MSE on real data (not corrected for label noise
/// intrinsic to the dataset).
pub fn excess_risk_estimate<P: Predictor + ?Sized>(
    predictor: &P,
    kind: DatasetKind,
    eval: &EvalSet,
) -> Result<f64> {
    if kind != DatasetKind::Synthetic && eval.source != EvalSource::HeldOut {
        return Err(Error::invalid(format!(
            "{kind} data needs a held-out split for excess-risk estimation"
        )));
    }
    let preds = predictor.predict(&eval.features)?;
    if preds.len() != eval.len() {
        return Err(Error::numeric(
            "predictor returned the wrong number of values",
        ));
    }
    let v = eval.excess_of(&preds);
    if !v.is_finite() {
        return Err(Error::numeric("excess risk is not finite"));
    }
    Ok(v)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ModelFamily {
    Nn,
    Krr,
}

impl ModelFamily {
    pub fn name(self) -> &'static str {
        match self {
            ModelFamily::Nn => "nn",
            ModelFamily::Krr => "krr",
        }
    }
}

impl fmt::Display for ModelFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ModelFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "nn" => Ok(ModelFamily::Nn),
            "krr" => Ok(ModelFamily::Krr),
            other => Err(Error::invalid(format!(
                "unknown model '{other}' (expected nn or krr)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CurveMeta {
    pub dataset: DatasetKind,
    pub model: ModelFamily,
    pub n: usize,
    /// Network width for `nn` curves.
    pub width: Option<usize>,
    /// Regularization grid for `krr` curves, indexed by the iteration column.
    pub gammas: Vec<f64>,
    pub seed: u64,
    pub lr: Option<f64>,
    pub noise_std: f64,
}

/// Empirical and excess risk at logged iterations (or gamma ranks).
#[derive(Debug, Clone, PartialEq)]
pub struct RiskCurve {
    pub iterations: Vec<u64>,
    pub empirical: Vec<f64>,
    pub excess: Vec<f64>,
    pub meta: CurveMeta,
}

impl RiskCurve {
    pub fn new(meta: CurveMeta) -> Self {
        RiskCurve {
            iterations: Vec::new(),
            empirical: Vec::new(),
            excess: Vec::new(),
            meta,
        }
    }

    pub fn len(&self) -> usize {
        self.iterations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.iterations.is_empty()
    }

    pub fn push(&mut self, iteration: u64, empirical: f64, excess: f64) -> Result<()> {
        if let Some(&last) = self.iterations.last() {
            if iteration <= last {
                return Err(Error::invalid(format!(
                    "iteration {iteration} does not follow {last}"
                )));
            }
        }
        if !(empirical >= 0.0 && excess >= 0.0) {
            return Err(Error::numeric(format!(
                "risks must be nonnegative, got ({empirical}, {excess})"
            )));
        }
        self.iterations.push(iteration);
        self.empirical.push(empirical);
        self.excess.push(excess);
        Ok(())
    }

    /// Value written to the `m_or_gamma_rank` column for point `i`.
    fn complexity_label(&self, i: usize) -> String {
        match self.meta.model {
            ModelFamily::Nn => self.meta.width.map(|m| m.to_string()).unwrap_or_default(),
            ModelFamily::Krr => self
                .meta
                .gammas
                .get(self.iterations[i] as usize)
                .map(|g| format!("{g:e}"))
                .unwrap_or_default(),
        }
    }
}

/// First logged point after which excess risk stays at or above empirical risk.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CrossingPoint {
    pub found: bool,
    /// Position in the curve; meaningful only when `found`.
    pub index: usize,
    pub iteration: u64,
    pub risk_at_cross: f64,
}

impl CrossingPoint {
    pub const NOT_FOUND: CrossingPoint = CrossingPoint {
        found: false,
        index: 0,
        iteration: 0,
        risk_at_cross: f64::NAN,
    };
}

pub fn detect_crossing(curve: &RiskCurve) -> CrossingPoint {
    let above = |i: usize| curve.excess[i] >= curve.empirical[i];
    let len = curve.len();
    if len == 0 || !above(len - 1) {
        return CrossingPoint::NOT_FOUND;
    }
    let mut start = len - 1;
    while start > 0 && above(start - 1) {
        start -= 1;
    }
    CrossingPoint {
        found: true,
        index: start,
        iteration: curve.iterations[start],
        risk_at_cross: curve.excess[start],
    }
}

/// Crossings of all runs sharing `(dataset, model, n)`.
#[derive(Debug, Clone, PartialEq)]
pub struct CrossingGroup {
    pub dataset: DatasetKind,
    pub model: ModelFamily,
    pub n: usize,
    pub crossings: Vec<CrossingPoint>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CrossingStats {
    pub mean_iteration: f64,
    pub std_iteration: f64,
    pub mean_risk: f64,
    pub std_risk: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CrossingSummary {
    pub dataset: DatasetKind,
    pub model: ModelFamily,
    pub n: usize,
    pub runs: usize,
    pub found_fraction: f64,
    /// Statistics over the runs that found a crossing; `None` if none did.
    pub stats: Option<CrossingStats>,
}

/// Population mean and standard deviation (divide by `k`).
fn mean_std(v: &[f64]) -> (f64, f64) {
    let k = v.len() as f64;
    let mean = v.iter().sum::<f64>() / k;
    let var = v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / k;
    (mean, var.sqrt())
}

/// Groups crossings of `curves` by `(dataset, model, n)` in sorted order.
pub fn group_crossings(curves: &[RiskCurve]) -> Vec<CrossingGroup> {
    let mut groups: Vec<CrossingGroup> = Vec::new();
    let mut sorted: Vec<&RiskCurve> = curves.iter().collect();
    sorted.sort_by_key(|c| (c.meta.dataset, c.meta.model, c.meta.n, c.meta.seed));
    for c in sorted {
        let cp = detect_crossing(c);
        match groups.last_mut() {
            Some(g) if (g.dataset, g.model, g.n) == (c.meta.dataset, c.meta.model, c.meta.n) => {
                g.crossings.push(cp)
            }
            _ => groups.push(CrossingGroup {
                dataset: c.meta.dataset,
                model: c.meta.model,
                n: c.meta.n,
                crossings: vec![cp],
            }),
        }
    }
    groups
}

pub fn aggregate_crossings(groups: &[CrossingGroup]) -> Result<Vec<CrossingSummary>> {
    groups
        .iter()
        .map(|g| {
            if g.crossings.is_empty() {
                return Err(Error::invalid(format!("crossing group n={} is empty", g.n)));
            }
            let found: Vec<&CrossingPoint> = g.crossings.iter().filter(|c| c.found).collect();
            let stats = (!found.is_empty()).then(|| {
                let iters: Vec<f64> = found.iter().map(|c| c.iteration as f64).collect();
                let risks: Vec<f64> = found.iter().map(|c| c.risk_at_cross).collect();
                let (mean_iteration, std_iteration) = mean_std(&iters);
                let (mean_risk, std_risk) = mean_std(&risks);
                CrossingStats {
                    mean_iteration,
                    std_iteration,
                    mean_risk,
                    std_risk,
                }
            });
            Ok(CrossingSummary {
                dataset: g.dataset,
                model: g.model,
                n: g.n,
                runs: g.crossings.len(),
                found_fraction: found.len() as f64 / g.crossings.len() as f64,
                stats,
            })
        })
        .collect()
}

/// `eps, L_eps, lambda_eps, T_eps = (2/lambda_eps) log(2/sqrt eps)` and the
/// smallest `U` with `(8 T_eps / d)^U / U! <= sqrt(eps) / 14`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScheduleQuantities {
    pub eps: f64,
    pub l_eps: u64,
    pub lambda_eps: f64,
    pub t_eps: f64,
    pub u_eps: u64,
}

/// Smallest `U >= 0` with `U ln c - ln U! <= ln target`.
pub fn factorial_decay_index(c: f64, target: f64) -> Result<u64> {
    if !(c > 0.0 && c.is_finite() && target > 0.0) {
        return Err(Error::invalid(format!(
            "factorial decay needs c > 0 and target > 0, got {c}, {target}"
        )));
    }
    let (lc, lt) = (c.ln(), target.ln());
    const MAX_U: u64 = 100_000_000;
    let mut log_term = 0.0;
    for u in 0..MAX_U {
        if log_term <= lt {
            return Ok(u);
        }
        log_term += lc - ((u + 1) as f64).ln();
    }
    Err(Error::Convergence {
        terms: MAX_U as usize,
        partial_sum: log_term,
    })
}

/// `lambda_eps` is the `l_eps`-th largest eigenvalue counted with
/// multiplicity among `spectrum`.
pub fn schedule_quantities(
    eps: f64,
    d: usize,
    spectrum: &[SpectrumEntry],
    l_eps: u64,
) -> Result<ScheduleQuantities> {
    if !(eps > 0.0 && eps < 4.0) {
        return Err(Error::invalid(format!("eps must lie in (0, 4), got {eps}")));
    }
    if l_eps == 0 {
        return Err(Error::invalid("L_eps counts from 1"));
    }
    let mut sorted: Vec<SpectrumEntry> = spectrum.to_vec();
    sorted.sort_by(|a, b| {
        b.eigenvalue
            .total_cmp(&a.eigenvalue)
            .then(a.order.cmp(&b.order))
    });
    let mut seen = 0u64;
    let mut lambda = None;
    for e in &sorted {
        seen = seen.saturating_add(e.multiplicity);
        if seen >= l_eps {
            lambda = Some(e.eigenvalue);
            break;
        }
    }
    let lambda_eps = lambda.ok_or_else(|| {
        Error::invalid(format!(
            "L_eps = {l_eps} exceeds the {seen} eigenvalues of the computed spectrum"
        ))
    })?;
    // Eigenvalues above the highest computed order could interleave.
    let max_order = spectrum.iter().map(|e| e.order).max().unwrap_or(0);
    let tail = spectrum
        .iter()
        .filter(|e| e.order + 1 >= max_order && e.eigenvalue > 0.0)
        .map(|e| e.eigenvalue)
        .fold(0.0f64, f64::max);
    if lambda_eps <= tail {
        return Err(Error::invalid(format!(
            "L_eps = {l_eps} reaches the truncated tail of the spectrum; raise max_h"
        )));
    }
    if lambda_eps <= 0.0 {
        return Err(Error::numeric("lambda_eps is zero"));
    }
    let t_eps = 2.0 / lambda_eps * (2.0 / eps.sqrt()).ln();
    let u_eps = factorial_decay_index(8.0 * t_eps / d as f64, eps.sqrt() / 14.0)?;
    Ok(ScheduleQuantities {
        eps,
        l_eps,
        lambda_eps,
        t_eps,
        u_eps,
    })
}

/// `ln((c^U)/U!)` for checking a given index directly.
pub fn factorial_decay_log_term(c: f64, u: u64) -> f64 {
    u as f64 * c.ln() - ln_factorial(u as usize)
}

/// Where the training data of each cell comes from.
#[derive(Debug, Clone, PartialEq)]
pub enum DataSource {
    Synthetic { d: usize },
    Real { raw: RawTable, n_test: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub enum ModelSpec {
    Nn {
        width: usize,
        train: TrainConfig,
    },
    /// Non-increasing regularization grid; the curve's iteration column holds
    /// the rank in this list.
    Krr {
        gammas: Vec<f64>,
    },
}

impl ModelSpec {
    pub fn family(&self) -> ModelFamily {
        match self {
            ModelSpec::Nn { .. } => ModelFamily::Nn,
            ModelSpec::Krr { .. } => ModelFamily::Krr,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub data: DataSource,
    pub model: ModelSpec,
    pub n_list: Vec<usize>,
    /// Number of seeds per sample size; seed indices are `0..seeds`.
    pub seeds: u64,
    pub base_seed: u64,
    pub noise_std: f64,
    pub mc_samples: usize,
}

impl ExperimentConfig {
    pub fn dataset_kind(&self) -> DatasetKind {
        match &self.data {
            DataSource::Synthetic { .. } => DatasetKind::Synthetic,
            DataSource::Real { raw, .. } => raw.kind,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_list.is_empty() || self.n_list.contains(&0) {
            return Err(Error::invalid("n_list must hold positive sample sizes"));
        }
        if self.seeds == 0 {
            return Err(Error::invalid("seeds must be at least 1"));
        }
        if !(self.noise_std >= 0.0 && self.noise_std.is_finite()) {
            return Err(Error::invalid(format!("noise_std = {}", self.noise_std)));
        }
        match &self.data {
            DataSource::Synthetic { d } => {
                if *d < 2 {
                    return Err(Error::invalid("d must be at least 2"));
                }
                if self.mc_samples == 0 {
                    return Err(Error::invalid("mc_samples must be positive"));
                }
            }
            DataSource::Real { raw, n_test } => {
                if *n_test == 0 {
                    return Err(Error::invalid("real data needs n_test > 0 for excess risk"));
                }
                let max_n = self.n_list.iter().max().copied().unwrap_or(0);
                if max_n + n_test > raw.rows() {
                    return Err(Error::invalid(format!(
                        "n = {max_n} plus n_test = {n_test} exceeds the {} available rows",
                        raw.rows()
                    )));
                }
            }
        }
        match &self.model {
            ModelSpec::Nn { width, train } => {
                if *width == 0 || width % 2 != 0 {
                    return Err(Error::invalid(format!(
                        "m must be even and positive, got {width}"
                    )));
                }
                if !(train.lr > 0.0) || train.iterations == 0 {
                    return Err(Error::invalid("lr and iterations must be positive"));
                }
            }
            ModelSpec::Krr { gammas } => {
                if gammas.is_empty() || gammas.iter().any(|g| !(*g > 0.0 && g.is_finite())) {
                    return Err(Error::invalid("gamma_list must hold positive values"));
                }
                if gammas.windows(2).any(|w| w[1] > w[0]) {
                    return Err(Error::invalid("gamma_list must be non-increasing"));
                }
            }
        }
        Ok(())
    }

    /// Cells in canonical order: by sample size, then seed index.
    pub fn cells(&self) -> Vec<Cell> {
        let mut order: Vec<(usize, usize)> = self.n_list.iter().copied().enumerate().collect();
        order.sort_by_key(|&(i, n)| (n, i));
        order
            .into_iter()
            .flat_map(|(n_index, n)| {
                (0..self.seeds).map(move |seed_index| Cell {
                    n,
                    n_index: n_index as u64,
                    seed_index,
                })
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Cell {
    pub n: usize,
    pub n_index: u64,
    pub seed_index: u64,
}

impl Cell {
    pub fn seed(&self, base: u64, stage: &str) -> u64 {
        derive_seed(base, stage, &[self.n_index, self.seed_index])
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CellFailure {
    pub n: usize,
    pub seed: u64,
    pub error: String,
    pub exit_code: i32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentOutcome {
    pub curves: Vec<RiskCurve>,
    pub failures: Vec<CellFailure>,
}

fn run_cell(cfg: &ExperimentConfig, cell: Cell) -> Result<RiskCurve> {
    let data_seed = cell.seed(cfg.base_seed, tag::DATA);
    let (train_set, eval) = match &cfg.data {
        DataSource::Synthetic { d } => {
            let ds = make_synthetic(*d, cell.n, cfg.noise_std, data_seed)?;
            let eval = ExcessEval::MonteCarlo {
                d: *d,
                samples: cfg.mc_samples,
                seed: cell.seed(cfg.base_seed, tag::EVAL),
            };
            (ds, eval)
        }
        DataSource::Real { raw, n_test } => {
            let split = prepare_real(raw, cell.n, *n_test, cfg.noise_std, data_seed)?;
            let eval = ExcessEval::held_out(&split.test)?;
            (split.train, eval)
        }
    };
    let eval = eval.materialize()?;
    match &cfg.model {
        ModelSpec::Nn { width, train: tc } => {
            let (net, _) =
                init_antisymmetric(*width, train_set.dim(), cell.seed(cfg.base_seed, tag::INIT))?;
            Ok(train(net, &train_set, tc, &eval, cell.seed_index)?.curve)
        }
        ModelSpec::Krr { gammas } => {
            let records = krr_complexity_sweep(&train_set, gammas, &eval)?;
            let mut curve = RiskCurve::new(CurveMeta {
                dataset: train_set.kind,
                model: ModelFamily::Krr,
                n: cell.n,
                width: None,
                gammas: gammas.clone(),
                seed: cell.seed_index,
                lr: None,
                noise_std: cfg.noise_std,
            });
            for (rank, r) in records.iter().enumerate() {
                curve.push(rank as u64, r.empirical_risk, r.excess_risk)?;
            }
            Ok(curve)
        }
    }
}

/// Runs every `(n, seed)` cell on the current rayon pool. Failed cells are
/// reported without aborting the others; output order is canonical.
pub fn run_risk_curves(cfg: &ExperimentConfig) -> Result<ExperimentOutcome> {
    cfg.validate()?;
    let results: Vec<(Cell, Result<RiskCurve>)> = cfg
        .cells()
        .into_par_iter()
        .map(|cell| (cell, run_cell(cfg, cell)))
        .collect();
    let mut outcome = ExperimentOutcome {
        curves: Vec::new(),
        failures: Vec::new(),
    };
    for (cell, r) in results {
        match r {
            Ok(c) => outcome.curves.push(c),
            Err(e) => outcome.failures.push(CellFailure {
                n: cell.n,
                seed: cell.seed_index,
                exit_code: e.exit_code(),
                error: e.to_string(),
            }),
        }
    }
    Ok(outcome)
}

fn csv_text(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// Writes the curves table, preceded by `#` comment lines describing the
/// estimators.
pub fn write_curves_csv<W: Write>(mut out: W, curves: &[RiskCurve]) -> std::io::Result<()> {
    writeln!(out, "# excess_risk: synthetic = Monte-Carlo mean of (f(x) - x_d)^2 on fixed uniform points per curve")?;
    writeln!(out, "# excess_risk: abalone/wine = held-out MSE against clean targets, not corrected for intrinsic noise")?;
    writeln!(out, "# m_or_gamma_rank: width for nn; gamma value for krr, whose iteration column is the gamma rank")?;
    writeln!(
        out,
        "dataset,model,n,m_or_gamma_rank,seed,iteration,empirical_risk,excess_risk"
    )?;
    for c in curves {
        for i in 0..c.len() {
            writeln!(
                out,
                "{},{},{},{},{},{},{:e},{:e}",
                c.meta.dataset,
                c.meta.model,
                c.meta.n,
                c.complexity_label(i),
                c.meta.seed,
                c.iterations[i],
                c.empirical[i],
                c.excess[i]
            )?;
        }
    }
    Ok(())
}

/// Writes the crossings table; statistics of groups without any crossing
/// are left empty.
pub fn write_crossings_csv<W: Write>(mut out: W, rows: &[CrossingSummary]) -> std::io::Result<()> {
    writeln!(
        out,
        "# std: population standard deviation (divide by the number of runs that crossed)"
    )?;
    writeln!(out, "dataset,model,n,runs,found_fraction,mean_cross_iter,std_cross_iter,mean_cross_risk,std_cross_risk")?;
    for r in rows {
        let stats = match r.stats {
            Some(s) => format!(
                "{},{},{:e},{:e}",
                s.mean_iteration, s.std_iteration, s.mean_risk, s.std_risk
            ),
            None => ",,,".to_string(),
        };
        writeln!(
            out,
            "{},{},{},{},{},{stats}",
            r.dataset, r.model, r.n, r.runs, r.found_fraction
        )?;
    }
    Ok(())
}

pub fn write_failures_csv<W: Write>(mut out: W, failures: &[CellFailure]) -> std::io::Result<()> {
    writeln!(out, "n,seed,exit_code,error")?;
    for f in failures {
        writeln!(
            out,
            "{},{},{},{}",
            f.n,
            f.seed,
            f.exit_code,
            csv_text(&f.error)
        )?;
    }
    Ok(())
}

/// Reads a curves table written by [`write_curves_csv`]. Rows sharing
/// `(dataset, model, n, seed)` form one curve, in order of appearance.
pub fn read_curves_csv<R: std::io::Read>(reader: R) -> Result<Vec<RiskCurve>> {
    const HEADER: [&str; 8] = [
        "dataset",
        "model",
        "n",
        "m_or_gamma_rank",
        "seed",
        "iteration",
        "empirical_risk",
        "excess_risk",
    ];
    let mut rdr = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_reader(reader);
    let header = rdr
        .headers()
        .map_err(|e| Error::Format(e.to_string()))?
        .clone();
    if header.iter().collect::<Vec<_>>() != HEADER {
        return Err(Error::Format(format!(
            "expected header `{}`, found `{}`",
            HEADER.join(","),
            header.iter().collect::<Vec<_>>().join(",")
        )));
    }
    let mut curves: Vec<RiskCurve> = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| Error::Format(e.to_string()))?;
        let line = rec.position().map_or(0, |p| p.line() as usize);
        let field = |i: usize| rec.get(i).unwrap_or("");
        let parse_err = |what: &str| Error::Parse {
            line,
            message: format!("bad {what}: `{}`", rec.iter().collect::<Vec<_>>().join(",")),
        };
        let dataset: DatasetKind = field(0).parse().map_err(|_| parse_err("dataset"))?;
        let model: ModelFamily = field(1).parse().map_err(|_| parse_err("model"))?;
        let n: usize = field(2).parse().map_err(|_| parse_err("n"))?;
        let seed: u64 = field(4).parse().map_err(|_| parse_err("seed"))?;
        let iteration: u64 = field(5).parse().map_err(|_| parse_err("iteration"))?;
        let empirical: f64 = field(6).parse().map_err(|_| parse_err("empirical_risk"))?;
        let excess: f64 = field(7).parse().map_err(|_| parse_err("excess_risk"))?;
        let same = |c: &RiskCurve| {
            (c.meta.dataset, c.meta.model, c.meta.n, c.meta.seed) == (dataset, model, n, seed)
        };
        if !curves.last().is_some_and(same) {
            curves.push(RiskCurve::new(CurveMeta {
                dataset,
                model,
                n,
                width: None,
                gammas: Vec::new(),
                seed,
                lr: None,
                noise_std: f64::NAN,
            }));
        }
        let c = curves.last_mut().expect("just pushed");
        match model {
            ModelFamily::Nn => c.meta.width = field(3).parse().ok(),
            ModelFamily::Krr => c
                .meta
                .gammas
                .push(field(3).parse().map_err(|_| parse_err("gamma"))?),
        }
        c.push(iteration, empirical, excess)
            .map_err(|e| Error::Parse {
                line,
                message: e.to_string(),
            })?;
    }
    Ok(curves)
}

/// Excess risk of the zero predictor for the synthetic task, `1/d`.
pub fn synthetic_null_excess(d: usize) -> f64 {
    1.0 / d as f64
}

/// `f*` as a predictor.
pub fn synthetic_regression_function() -> FnPredictor<fn(&[f64]) -> f64> {
    FnPredictor(synthetic_target)
}
