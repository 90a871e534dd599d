//! Two-layer ReLU network `f_W(x) = (1/sqrt m) sum_j a_j max(0, w_j . x)` with
//! fixed output signs, antisymmetric initialization and full-batch gradient
//! descent on the hidden layer.

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use nalgebra::DMatrix;
use rand_distr::{Distribution, StandardNormal};

use crate::datasets::LabeledDataset;
use crate::error::{Error, Result};
use crate::experiments::{CurveMeta, EvalSet, ModelFamily, RiskCurve};
use crate::linalg;
use crate::ntk::gram_empirical;
use crate::rng::rng_from_seed;
use crate::sphere::row_major;

/// Empirical risk above which training is declared divergent.
pub const DIVERGENCE_THRESHOLD: f64 = 1e6;
/// Largest training set for which Gram diagnostics are computed.
pub const DIAGNOSTICS_MAX_N: usize = 2000;

#[derive(Debug, Clone, PartialEq)]
pub struct TwoLayerNet {
    hidden: DMatrix<f64>,
    out_signs: Vec<f64>,
}

/// Hidden weights at iteration 0.
#[derive(Debug, Clone, PartialEq)]
pub struct InitSnapshot(DMatrix<f64>);

impl InitSnapshot {
    pub fn weights(&self) -> &DMatrix<f64> {
        &self.0
    }
}

impl TwoLayerNet {
    /// Builds a network from explicit weights (`m x d`) and signs in `{-1, +1}`.
    pub fn new(hidden: DMatrix<f64>, out_signs: Vec<f64>) -> Result<Self> {
        let m = hidden.nrows();
        if m == 0 || !m.is_multiple_of(2) {
            return Err(Error::invalid(format!(
                "width must be even and positive, got {m}"
            )));
        }
        if hidden.ncols() == 0 {
            return Err(Error::invalid("input dimension must be positive"));
        }
        if out_signs.len() != m {
            return Err(Error::invalid(format!(
                "{} output signs for width {m}",
                out_signs.len()
            )));
        }
        if out_signs.iter().any(|&a| a != 1.0 && a != -1.0) {
            return Err(Error::invalid("output signs must be -1 or +1"));
        }
        if hidden.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("hidden weights must be finite"));
        }
        Ok(TwoLayerNet { hidden, out_signs })
    }

    pub fn width(&self) -> usize {
        self.hidden.nrows()
    }

    pub fn dim(&self) -> usize {
        self.hidden.ncols()
    }

    pub fn hidden(&self) -> &DMatrix<f64> {
        &self.hidden
    }

    pub fn out_signs(&self) -> &[f64] {
        &self.out_signs
    }

    /// Mutable hidden weights; output signs stay fixed.
    pub fn hidden_mut(&mut self) -> &mut DMatrix<f64> {
        &mut self.hidden
    }

    pub fn snapshot(&self) -> InitSnapshot {
        InitSnapshot(self.hidden.clone())
    }
}

/// Rows `j` and `j + m/2` share a Gaussian weight vector and carry opposite
/// output signs, so the network is identically zero.
pub fn init_antisymmetric(m: usize, d: usize, seed: u64) -> Result<(TwoLayerNet, InitSnapshot)> {
    if m == 0 || !m.is_multiple_of(2) {
        return Err(Error::invalid(format!(
            "width must be even and positive, got {m}"
        )));
    }
    if d == 0 {
        return Err(Error::invalid("input dimension must be positive"));
    }
    let half = m / 2;
    let mut rng = rng_from_seed(seed);
    let mut hidden = DMatrix::zeros(m, d);
    let mut signs = vec![0.0; m];
    for j in 0..half {
        for k in 0..d {
            let w: f64 = StandardNormal.sample(&mut rng);
            hidden[(j, k)] = w;
            hidden[(j + half, k)] = w;
        }
        let a = if rand::Rng::gen::<bool>(&mut rng) {
            1.0
        } else {
            -1.0
        };
        signs[j] = a;
        signs[j + half] = -a;
    }
    let net = TwoLayerNet {
        hidden,
        out_signs: signs,
    };
    let snap = net.snapshot();
    Ok((net, snap))
}

fn check_inputs(net: &TwoLayerNet, x: &DMatrix<f64>) -> Result<()> {
    if x.ncols() != net.dim() {
        return Err(Error::invalid(format!(
            "inputs have {} columns, network expects {}",
            x.ncols(),
            net.dim()
        )));
    }
    Ok(())
}

/// Shared kernel for prediction and gradient evaluation over row-major
/// inputs. `w` is the column-major `m x d` weight slice, so each input
/// coordinate touches one contiguous column.
struct Pass<'a> {
    w: &'a [f64],
    a: &'a [f64],
    m: usize,
    d: usize,
    z: Vec<f64>,
    mask: Vec<f64>,
}

const LANES: usize = 8;

impl<'a> Pass<'a> {
    fn new(net: &'a TwoLayerNet) -> Self {
        let m = net.width();
        Pass {
            w: net.hidden.as_slice(),
            a: &net.out_signs,
            m,
            d: net.dim(),
            z: vec![0.0; m],
            mask: vec![0.0; m],
        }
    }

    /// Network output at `x`; also fills the activation mask. The output
    /// is summed in `LANES` fixed partial sums, so the order never varies.
    #[inline(always)]
    fn activate(&mut self, x: &[f64]) -> f64 {
        let m = self.m;
        let (first, rest) = self.w.split_at(m);
        for (zj, &wj) in self.z.iter_mut().zip(first) {
            *zj = wj * x[0];
        }
        for (col, &xk) in rest.chunks_exact(m).zip(&x[1..]) {
            for (zj, &wj) in self.z.iter_mut().zip(col) {
                *zj += wj * xk;
            }
        }
        let mut lanes = [0.0f64; LANES];
        let mut zc = self.z.chunks_exact(LANES);
        let mut ac = self.a.chunks_exact(LANES);
        let mut mc = self.mask.chunks_exact_mut(LANES);
        for ((z, a), mk) in (&mut zc).zip(&mut ac).zip(&mut mc) {
            for l in 0..LANES {
                let on = z[l] > 0.0;
                mk[l] = if on { 1.0 } else { 0.0 };
                lanes[l] += a[l] * if on { z[l] } else { 0.0 };
            }
        }
        let mut s: f64 = lanes.iter().sum();
        for ((z, a), mk) in zc
            .remainder()
            .iter()
            .zip(ac.remainder())
            .zip(mc.into_remainder())
        {
            let on = *z > 0.0;
            *mk = if on { 1.0 } else { 0.0 };
            s += a * if on { *z } else { 0.0 };
        }
        s / (m as f64).sqrt()
    }

    #[inline(always)]
    fn predict_body(&mut self, xs: &[f64], out: &mut [f64]) {
        for (i, x) in xs.chunks_exact(self.d).enumerate() {
            out[i] = self.activate(x);
        }
    }

    /// Fills `preds` and accumulates `acc_j = sum_i xi_i 1{w_j . x_i > 0} x_i`
    /// (column-major `m x d`) with residuals `xi = y - f`.
    #[inline(always)]
    fn residual_body(&mut self, xs: &[f64], y: &[f64], preds: &mut [f64], acc: &mut [f64]) {
        let m = self.m;
        acc.iter_mut().for_each(|v| *v = 0.0);
        for (i, x) in xs.chunks_exact(self.d).enumerate() {
            let f = self.activate(x);
            preds[i] = f;
            let xi = y[i] - f;
            if xi == 0.0 {
                continue;
            }
            for (col, &xk) in acc.chunks_exact_mut(m).zip(x) {
                let c = xi * xk;
                for (g, &on) in col.iter_mut().zip(&self.mask) {
                    *g += c * on;
                }
            }
        }
    }

    // The vectorized variants run the same operations in the same order
    // (no fused multiply-add), so results are bit-identical to the fallback.
    #[cfg(target_arch = "x86_64")]
    #[target_feature(enable = "avx2")]
    unsafe fn predict_avx2(&mut self, xs: &[f64], out: &mut [f64]) {
        self.predict_body(xs, out)
    }

    #[cfg(target_arch = "x86_64")]
    #[target_feature(enable = "avx2")]
    unsafe fn residual_avx2(&mut self, xs: &[f64], y: &[f64], preds: &mut [f64], acc: &mut [f64]) {
        self.residual_body(xs, y, preds, acc)
    }

    fn predict(&mut self, xs: &[f64], out: &mut [f64]) {
        #[cfg(target_arch = "x86_64")]
        if std::arch::is_x86_feature_detected!("avx2") {
            // SAFETY: the CPU supports AVX2.
            return unsafe { self.predict_avx2(xs, out) };
        }
        self.predict_body(xs, out)
    }

    fn residual_pass(&mut self, xs: &[f64], y: &[f64], preds: &mut [f64], acc: &mut [f64]) {
        #[cfg(target_arch = "x86_64")]
        if std::arch::is_x86_feature_detected!("avx2") {
            // SAFETY: the CPU supports AVX2.
            return unsafe { self.residual_avx2(xs, y, preds, acc) };
        }
        self.residual_body(xs, y, preds, acc)
    }
}

/// Converts accumulated sums into `grad_{w_j} = -(2 a_j / (n sqrt m)) acc_j`.
fn scale_gradient(acc: &mut [f64], a: &[f64], n: usize) {
    let m = a.len();
    let c = -2.0 / (n as f64 * (m as f64).sqrt());
    for col in acc.chunks_exact_mut(m) {
        for (g, &aj) in col.iter_mut().zip(a) {
            *g *= c * aj;
        }
    }
}

pub fn forward(net: &TwoLayerNet, x: &DMatrix<f64>) -> Result<Vec<f64>> {
    check_inputs(net, x)?;
    let xs = row_major(x);
    let mut out = vec![0.0; x.nrows()];
    Pass::new(net).predict(&xs, &mut out);
    Ok(out)
}

/// Gradient of the empirical risk with respect to the hidden weights.
pub fn grad_empirical(net: &TwoLayerNet, x: &DMatrix<f64>, y: &[f64]) -> Result<DMatrix<f64>> {
    check_inputs(net, x)?;
    let n = x.nrows();
    if y.len() != n {
        return Err(Error::invalid(format!(
            "{} targets for {n} inputs",
            y.len()
        )));
    }
    if n == 0 {
        return Err(Error::invalid("empty training set"));
    }
    let xs = row_major(x);
    let mut preds = vec![0.0; n];
    let mut acc = vec![0.0; net.width() * net.dim()];
    Pass::new(net).residual_pass(&xs, y, &mut preds, &mut acc);
    scale_gradient(&mut acc, &net.out_signs, n);
    Ok(DMatrix::from_vec(net.width(), net.dim(), acc))
}

fn apply_step(net: &mut TwoLayerNet, grad: &[f64], lr: f64) -> Result<()> {
    if grad.iter().any(|g| !g.is_finite()) {
        return Err(Error::numeric("gradient has non-finite entries"));
    }
    for (w, g) in net.hidden.as_mut_slice().iter_mut().zip(grad) {
        *w -= lr * g;
    }
    Ok(())
}

/// One full-batch step `W <- W - lr grad`.
pub fn gd_step(mut net: TwoLayerNet, x: &DMatrix<f64>, y: &[f64], lr: f64) -> Result<TwoLayerNet> {
    if !(lr >= 0.0 && lr.is_finite()) {
        return Err(Error::invalid(format!(
            "learning rate must be nonnegative, got {lr}"
        )));
    }
    let g = grad_empirical(&net, x, y)?;
    apply_step(&mut net, g.as_slice(), lr)?;
    Ok(net)
}

/// Largest row drift `max_j |w_j - w_j(0)|` and the radius `32 sqrt(d/m)`.
pub fn weight_drift(net: &TwoLayerNet, snapshot: &InitSnapshot) -> Result<(f64, f64)> {
    if net.hidden.shape() != snapshot.0.shape() {
        return Err(Error::invalid("snapshot shape does not match the network"));
    }
    let diff = &net.hidden - &snapshot.0;
    let max = diff.row_iter().map(|r| r.norm()).fold(0.0f64, f64::max);
    Ok((max, drift_radius(net.dim(), net.width())))
}

pub fn drift_radius(d: usize, m: usize) -> f64 {
    32.0 * (d as f64 / m as f64).sqrt()
}

/// Which iterations are evaluated during training.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LogSchedule {
    /// `0..=10` together with `ceil(ratio^k)` for every `k`.
    Geometric {
        ratio: f64,
    },
    /// Every `step`-th iteration.
    Linear {
        step: u64,
    },
    All,
}

impl Default for LogSchedule {
    fn default() -> Self {
        LogSchedule::Geometric { ratio: 1.25 }
    }
}

impl LogSchedule {
    /// Ascending logged iterations in `0..=iters`; always includes both ends.
    pub fn points(&self, iters: u64) -> Vec<u64> {
        let mut pts: Vec<u64> = match *self {
            LogSchedule::All => (0..=iters).collect(),
            LogSchedule::Linear { step } => (0..=iters).step_by(step.max(1) as usize).collect(),
            LogSchedule::Geometric { ratio } => {
                let mut v: Vec<u64> = (0..=iters.min(10)).collect();
                let mut k = 0i32;
                loop {
                    let p = ratio.powi(k).ceil();
                    if p > iters as f64 {
                        break;
                    }
                    v.push(p as u64);
                    k += 1;
                }
                v
            }
        };
        pts.push(iters);
        pts.sort_unstable();
        pts.dedup();
        pts
    }
}

impl fmt::Display for LogSchedule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LogSchedule::Geometric { ratio } => write!(f, "geometric:{ratio}"),
            LogSchedule::Linear { step } => write!(f, "linear:{step}"),
            LogSchedule::All => write!(f, "all"),
        }
    }
}

impl FromStr for LogSchedule {
    type Err = Error;

    /// Accepts `geometric`, `geometric:<ratio>`, `linear:<step>` or `all`.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let (head, arg) = match s.split_once(':') {
            Some((h, a)) => (h.trim(), Some(a.trim())),
            None => (s, None),
        };
        let bad = || Error::invalid(format!("unrecognized log schedule '{s}'"));
        match (head, arg) {
            ("all", None) => Ok(LogSchedule::All),
            ("geometric", None) => Ok(LogSchedule::default()),
            ("geometric", Some(a)) => {
                let ratio: f64 = a.parse().map_err(|_| bad())?;
                if !(ratio > 1.0 && ratio.is_finite()) {
                    return Err(Error::invalid(format!(
                        "geometric ratio must exceed 1, got {a}"
                    )));
                }
                Ok(LogSchedule::Geometric { ratio })
            }
            ("linear", Some(a)) => {
                let step: u64 = a.parse().map_err(|_| bad())?;
                if step == 0 {
                    return Err(Error::invalid("linear step must be positive"));
                }
                Ok(LogSchedule::Linear { step })
            }
            _ => Err(bad()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    pub lr: f64,
    pub iterations: u64,
    pub schedule: LogSchedule,
    /// Record empirical-Gram minimum eigenvalue and weight drift at logged
    /// iterations (skipped above [`DIAGNOSTICS_MAX_N`] samples).
    pub diagnostics: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DiagnosticRow {
    pub iteration: u64,
    /// `None` when the eigen-solve was skipped for size.
    pub min_eig_empirical_gram: Option<f64>,
    pub max_drift: f64,
    pub drift_radius: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct DiagnosticsTrace {
    pub rows: Vec<DiagnosticRow>,
    pub gram_skipped: bool,
}

impl DiagnosticsTrace {
    /// Writes `iteration,min_eig_empirical_gram,max_drift,drift_radius`;
    /// skipped eigenvalues are left empty.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(
            out,
            "iteration,min_eig_empirical_gram,max_drift,drift_radius"
        )?;
        for r in &self.rows {
            let eig = r
                .min_eig_empirical_gram
                .map(|v| format!("{v:e}"))
                .unwrap_or_default();
            writeln!(
                out,
                "{},{eig},{:e},{:e}",
                r.iteration, r.max_drift, r.drift_radius
            )?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutput {
    pub curve: RiskCurve,
    pub diagnostics: DiagnosticsTrace,
    pub net: TwoLayerNet,
}

/// Full-batch gradient descent on the noisy training targets.
///
/// At each logged iteration `t` the curve records the empirical risk of
/// `W(t)` and its excess risk on `eval`. `seed` is recorded in the curve
/// metadata only.
pub fn train(
    mut net: TwoLayerNet,
    dataset: &LabeledDataset,
    cfg: &TrainConfig,
    eval: &EvalSet,
    seed: u64,
) -> Result<TrainOutput> {
    if cfg.iterations == 0 {
        return Err(Error::invalid("iterations must be at least 1"));
    }
    if !(cfg.lr > 0.0 && cfg.lr.is_finite()) {
        return Err(Error::invalid(format!(
            "learning rate must be positive, got {}",
            cfg.lr
        )));
    }
    check_inputs(&net, &dataset.features)?;
    eval.check_dim(net.dim())?;
    let n = dataset.n();
    let y = &dataset.targets_noisy;
    if y.len() != n || n == 0 {
        return Err(Error::invalid("training targets do not match features"));
    }

    let snapshot = net.snapshot();
    let xs = row_major(&dataset.features);
    let eval_xs = eval.row_major();
    let log = cfg.schedule.points(cfg.iterations);
    let mut next_log = 0usize;

    let mut preds = vec![0.0; n];
    let mut eval_preds = vec![0.0; eval.len()];
    let mut acc = vec![0.0; net.width() * net.dim()];
    let mut curve = RiskCurve::new(CurveMeta {
        dataset: dataset.kind,
        model: ModelFamily::Nn,
        n,
        width: Some(net.width()),
        gammas: Vec::new(),
        seed,
        lr: Some(cfg.lr),
        noise_std: dataset.noise_std,
    });
    let mut diagnostics = DiagnosticsTrace {
        rows: Vec::new(),
        gram_skipped: cfg.diagnostics && n > DIAGNOSTICS_MAX_N,
    };

    for t in 0..=cfg.iterations {
        Pass::new(&net).residual_pass(&xs, y, &mut preds, &mut acc);
        let risk = preds
            .iter()
            .zip(y)
            .map(|(f, y)| (y - f) * (y - f))
            .sum::<f64>()
            / n as f64;
        if !risk.is_finite() || risk > DIVERGENCE_THRESHOLD {
            return Err(Error::Divergence {
                iteration: t as usize,
                risk,
            });
        }
        if next_log < log.len() && log[next_log] == t {
            next_log += 1;
            Pass::new(&net).predict(&eval_xs, &mut eval_preds);
            curve.push(t, risk, eval.excess_of(&eval_preds))?;
            if cfg.diagnostics {
                let (max_drift, radius) = weight_drift(&net, &snapshot)?;
                let eig = if n <= DIAGNOSTICS_MAX_N {
                    let g = gram_empirical(&net.hidden, &dataset.features)?;
                    Some(linalg::min_eigenvalue(g.matrix())?)
                } else {
                    None
                };
                diagnostics.rows.push(DiagnosticRow {
                    iteration: t,
                    min_eig_empirical_gram: eig,
                    max_drift,
                    drift_radius: radius,
                });
            }
        }
        if t < cfg.iterations {
            scale_gradient(&mut acc, &net.out_signs, n);
            apply_step(&mut net, &acc, cfg.lr)?;
        }
    }
    Ok(TrainOutput {
        curve,
        diagnostics,
        net,
    })
}
