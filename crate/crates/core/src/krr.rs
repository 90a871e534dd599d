//! Closed-form kernel ridge regression with the NTK.
//!
//! The regularized empirical-risk minimizer over the kernel's RKHS is
//! `f(x) = sum_i alpha_i kappa(x_i, x)` with `(H + n gamma I) alpha = y`.
//! Its training residual is `y - H alpha = n gamma alpha`, which gives the
//! identity checked by [`residual_identity`]:
//!
//! `R(f) = (gamma^2 / n) |(H/n + gamma I)^{-1} y|^2`.

use nalgebra::{DMatrix, DVector};
use std::io::Write;

use crate::datasets::{DatasetKind, LabeledDataset};
use crate::error::{Error, Result};
use crate::experiments::{excess_risk_estimate, EvalSet, Predictor};
use crate::ntk::{gram_analytic, kernel_matrix, GramMatrix};
use crate::sphere::UnitMatrix;

#[derive(Debug, Clone, PartialEq)]
pub struct KrrModel {
    pub gamma: f64,
    pub train_inputs: UnitMatrix,
    pub dual_coeffs: DVector<f64>,
    /// Diagonal shift added when the first factorization attempt failed.
    pub jitter: Option<f64>,
}

fn check_targets(y: &[f64], n: usize) -> Result<()> {
    if y.len() != n {
        return Err(Error::invalid(format!(
            "{} targets for {n} inputs",
            y.len()
        )));
    }
    if let Some(i) = y.iter().position(|v| !v.is_finite()) {
        return Err(Error::invalid(format!("target {i} is not finite")));
    }
    Ok(())
}

/// Solves `(H + n gamma I) alpha = y` by Cholesky, retrying once with a
/// `1e-12 trace / n` diagonal jitter.
fn solve_dual(gram: &DMatrix<f64>, y: &[f64], gamma: f64) -> Result<(DVector<f64>, Option<f64>)> {
    let n = gram.nrows();
    let mut a = gram.clone();
    for i in 0..n {
        a[(i, i)] += n as f64 * gamma;
    }
    let rhs = DVector::from_column_slice(y);
    if let Some(ch) = a.clone().cholesky() {
        return Ok((ch.solve(&rhs), None));
    }
    let jitter = 1e-12 * a.trace() / n as f64;
    for i in 0..n {
        a[(i, i)] += jitter;
    }
    let ch = a
        .cholesky()
        .ok_or_else(|| Error::numeric("dual system is not positive definite"))?;
    Ok((ch.solve(&rhs), Some(jitter)))
}

/// Fits KRR on `(x, y)` with regularization `gamma > 0`.
pub fn krr_fit(x: &UnitMatrix, y: &[f64], gamma: f64) -> Result<KrrModel> {
    krr_fit_with_gram(x, &gram_analytic(x), y, gamma)
}

/// As [`krr_fit`], reusing a precomputed analytic Gram matrix of `x`.
pub fn krr_fit_with_gram(
    x: &UnitMatrix,
    gram: &GramMatrix,
    y: &[f64],
    gamma: f64,
) -> Result<KrrModel> {
    if !(gamma > 0.0 && gamma.is_finite()) {
        return Err(Error::invalid(format!(
            "gamma must be positive, got {gamma}"
        )));
    }
    if gram.n() != x.n() {
        return Err(Error::invalid("Gram matrix does not match the inputs"));
    }
    check_targets(y, x.n())?;
    let (dual_coeffs, jitter) = solve_dual(gram.matrix(), y, gamma)?;
    if dual_coeffs.iter().any(|v| !v.is_finite()) {
        return Err(Error::numeric("dual coefficients are not finite"));
    }
    Ok(KrrModel {
        gamma,
        train_inputs: x.clone(),
        dual_coeffs,
        jitter,
    })
}

/// `f(x) = sum_i alpha_i kappa(x_i, x)` for every row of `x_eval`.
pub fn krr_predict(model: &KrrModel, x_eval: &UnitMatrix) -> Result<Vec<f64>> {
    let k = kernel_matrix(x_eval, &model.train_inputs)?;
    Ok((k * &model.dual_coeffs).iter().copied().collect())
}

impl KrrModel {
    /// Predictions at the training inputs, `H alpha`.
    pub fn fitted_values(&self, gram: &GramMatrix) -> Vec<f64> {
        (gram.matrix() * &self.dual_coeffs)
            .iter()
            .copied()
            .collect()
    }
}

/// Rows off the unit sphere are projected onto it before evaluation.
impl Predictor for KrrModel {
    fn predict(&self, x: &DMatrix<f64>) -> Result<Vec<f64>> {
        let unit = UnitMatrix::new(x.clone()).or_else(|_| UnitMatrix::normalized(x.clone()))?;
        krr_predict(self, &unit)
    }
}

/// Mean squared residual `(1/n) sum (f_i - y_i)^2`.
pub fn empirical_risk(predictions: &[f64], targets: &[f64]) -> Result<f64> {
    if predictions.len() != targets.len() {
        return Err(Error::invalid(format!(
            "{} predictions for {} targets",
            predictions.len(),
            targets.len()
        )));
    }
    if targets.is_empty() {
        return Err(Error::invalid("empty risk evaluation"));
    }
    let sum: f64 = predictions
        .iter()
        .zip(targets)
        .map(|(p, t)| (p - t) * (p - t))
        .sum();
    Ok(sum / targets.len() as f64)
}

/// Returns `(direct empirical risk, (gamma^2/n) |(H/n + gamma I)^{-1} y|^2)`.
///
/// The right side is solved independently of the fit, by LU on `H/n + gamma I`.
pub fn residual_identity(model: &KrrModel, y: &[f64]) -> Result<(f64, f64)> {
    let x = &model.train_inputs;
    let n = x.n();
    check_targets(y, n)?;
    let lhs = empirical_risk(&krr_predict(model, x)?, y)?;

    let gamma = model.gamma;
    let mut a = gram_analytic(x).into_matrix() / n as f64;
    for i in 0..n {
        a[(i, i)] += gamma;
    }
    let z = a
        .lu()
        .solve(&DVector::from_column_slice(y))
        .ok_or_else(|| Error::numeric("H/n + gamma I is singular"))?;
    let rhs = gamma * gamma / n as f64 * z.norm_squared();
    Ok((lhs, rhs))
}

/// Upper bound on the training risk of a KRR fit given the measured minimum
/// Gram eigenvalue: `(gamma^2/n) |y|^2 / (gamma + lambda_min/n)^2`.
pub fn empirical_risk_bound(gamma: f64, y: &[f64], lambda_min: f64) -> f64 {
    let n = y.len() as f64;
    let y2: f64 = y.iter().map(|v| v * v).sum();
    gamma * gamma / n * y2 / (gamma + lambda_min / n).powi(2)
}

/// Inputs to the KRR parameter-regime checker.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KrrAssumptionInputs {
    pub eps: f64,
    pub delta: f64,
    pub gamma: f64,
    pub d: usize,
    pub n: usize,
    /// RKHS norm of the approximating function; the caller supplies it.
    pub f_eps_norm: f64,
    /// Absolute constant of the sample-covariance concentration bound.
    pub c: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Relation {
    AtMost,
    AtLeast,
}

/// One evaluated inequality `lhs (<= | >=) rhs`.
#[derive(Debug, Clone, PartialEq)]
pub struct Inequality {
    pub clause: &'static str,
    pub description: &'static str,
    pub lhs: f64,
    pub relation: Relation,
    pub rhs: f64,
    pub satisfied: bool,
}

impl Inequality {
    fn new(
        clause: &'static str,
        description: &'static str,
        lhs: f64,
        relation: Relation,
        rhs: f64,
    ) -> Self {
        let satisfied = match relation {
            Relation::AtMost => lhs <= rhs,
            Relation::AtLeast => lhs >= rhs,
        };
        Inequality {
            clause,
            description,
            lhs,
            relation,
            rhs,
            satisfied,
        }
    }
}

/// Clause verdicts (i) overfitting, (ii) approximation, (iii) estimation.
#[derive(Debug, Clone, PartialEq)]
pub struct AssumptionReport {
    pub inequalities: Vec<Inequality>,
}

impl AssumptionReport {
    pub fn clause_satisfied(&self, clause: &str) -> bool {
        self.inequalities
            .iter()
            .filter(|q| q.clause == clause)
            .all(|q| q.satisfied)
    }

    pub fn all_satisfied(&self) -> bool {
        self.inequalities.iter().all(|q| q.satisfied)
    }

    pub fn write_text<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        for q in &self.inequalities {
            let rel = match q.relation {
                Relation::AtMost => "<=",
                Relation::AtLeast => ">=",
            };
            writeln!(
                out,
                "({}) {:<34} {:>14.6e} {rel} {:<14.6e} {}",
                q.clause,
                q.description,
                q.lhs,
                q.rhs,
                if q.satisfied { "ok" } else { "FAIL" }
            )?;
        }
        for clause in ["i", "ii", "iii"] {
            writeln!(
                out,
                "clause ({clause}): {}",
                if self.clause_satisfied(clause) {
                    "satisfied"
                } else {
                    "violated"
                }
            )?;
        }
        Ok(())
    }
}

pub fn check_assumption_krr(p: &KrrAssumptionInputs) -> AssumptionReport {
    let (d, n) = (p.d as f64, p.n as f64);
    let shrink = p.gamma / (p.gamma + 1.0 / (5.0 * d));
    let inequalities = vec![
        Inequality::new(
            "i",
            "exp(-d) <= delta/4",
            (-d).exp(),
            Relation::AtMost,
            p.delta / 4.0,
        ),
        Inequality::new(
            "i",
            "sqrt(n) - C sqrt(d) >= 2 sqrt(n/5)",
            n.sqrt() - p.c * d.sqrt(),
            Relation::AtLeast,
            2.0 / 5f64.sqrt() * n.sqrt(),
        ),
        Inequality::new(
            "i",
            "(gamma/(gamma + 1/(5d)))^2 <= eps",
            shrink * shrink,
            Relation::AtMost,
            p.eps,
        ),
        Inequality::new(
            "ii",
            "gamma |f_eps|_H^2 <= eps/8",
            p.gamma * p.f_eps_norm * p.f_eps_norm,
            Relation::AtMost,
            p.eps / 8.0,
        ),
        Inequality::new(
            "iii",
            "n >= 16(1+1/g)^2 log(4/delta)/(g^2 eps)",
            n,
            Relation::AtLeast,
            16.0 * (1.0 + 1.0 / p.gamma).powi(2) * (4.0 / p.delta).ln()
                / (p.gamma * p.gamma * p.eps),
        ),
    ];
    AssumptionReport { inequalities }
}

/// One point of a KRR complexity sweep.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepRecord {
    pub gamma: f64,
    pub n: usize,
    pub empirical_risk: f64,
    pub excess_risk: f64,
    pub lambda_min: f64,
}

/// Fits KRR for every `gamma`, reusing one Gram matrix. Empirical risk is
/// measured on the noisy training targets; excess risk on `eval`. Real-data
/// features are projected onto the sphere, which the kernel requires.
pub fn krr_complexity_sweep(
    dataset: &LabeledDataset,
    gammas: &[f64],
    eval: &EvalSet,
) -> Result<Vec<SweepRecord>> {
    if let Some(g) = gammas.iter().find(|g| !(**g > 0.0)) {
        return Err(Error::invalid(format!("gamma must be positive, got {g}")));
    }
    let x = match dataset.kind {
        DatasetKind::Synthetic => UnitMatrix::new(dataset.features.clone())?,
        _ => UnitMatrix::normalized(dataset.features.clone())?,
    };
    let gram = gram_analytic(&x);
    let lambda_min = gram.min_eigenvalue()?;
    gammas
        .iter()
        .map(|&gamma| {
            let model = krr_fit_with_gram(&x, &gram, &dataset.targets_noisy, gamma)?;
            let fitted = model.fitted_values(&gram);
            Ok(SweepRecord {
                gamma,
                n: x.n(),
                empirical_risk: empirical_risk(&fitted, &dataset.targets_noisy)?,
                excess_risk: excess_risk_estimate(&model, dataset.kind, eval)?,
                lambda_min,
            })
        })
        .collect()
}

/// Writes `gamma,n,empirical_risk,excess_risk,lambda_min` rows.
pub fn write_sweep_csv<W: Write>(mut out: W, records: &[SweepRecord]) -> std::io::Result<()> {
    writeln!(out, "gamma,n,empirical_risk,excess_risk,lambda_min")?;
    for r in records {
        writeln!(
            out,
            "{:e},{},{:e},{:e},{:e}",
            r.gamma, r.n, r.empirical_risk, r.excess_risk, r.lambda_min
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datasets::make_synthetic;
    use crate::experiments::ExcessEval;
    use crate::rng::rng_from_seed;
    use crate::sphere::sample_sphere;
    use proptest::prelude::*;
    use rand::Rng;

    fn e(d: usize, i: usize) -> Vec<f64> {
        let mut v = vec![0.0; d];
        v[i] = 1.0;
        v
    }

    #[test]
    fn single_point_fit() {
        let x = UnitMatrix::from_rows(&[e(3, 0)]).unwrap();
        let m = krr_fit(&x, &[1.0], 0.5).unwrap();
        assert!((m.dual_coeffs[0] - 1.0).abs() < 1e-15);
        let p = krr_predict(&m, &x).unwrap();
        assert!((p[0] - 0.5).abs() < 1e-15);
        let anti = UnitMatrix::from_rows(&[vec![-1.0, 0.0, 0.0]]).unwrap();
        assert!(krr_predict(&m, &anti).unwrap()[0].abs() < 1e-15);
        let (lhs, rhs) = residual_identity(&m, &[1.0]).unwrap();
        assert!((lhs - 0.25).abs() < 1e-15 && (rhs - 0.25).abs() < 1e-15);
    }

    #[test]
    fn zero_targets_give_zero_predictor() {
        let x = sample_sphere(3, 10, 1).unwrap();
        let m = krr_fit(&x, &[0.0; 10], 0.1).unwrap();
        assert!(m.dual_coeffs.iter().all(|&a| a == 0.0));
        let eval = sample_sphere(3, 5, 2).unwrap();
        assert!(krr_predict(&m, &eval).unwrap().iter().all(|&v| v == 0.0));
        assert_eq!(residual_identity(&m, &[0.0; 10]).unwrap(), (0.0, 0.0));
    }

    #[test]
    fn orthogonal_pair_fit() {
        let x = UnitMatrix::from_rows(&[e(3, 0), e(3, 2)]).unwrap();
        let m = krr_fit(&x, &[1.0, 1.0], 0.25).unwrap();
        assert!((m.dual_coeffs[0] - 1.0).abs() < 1e-15);
        assert!((m.dual_coeffs[1] - 1.0).abs() < 1e-15);
        let p = krr_predict(&m, &x).unwrap();
        assert!((p[0] - 0.5).abs() < 1e-15 && (p[1] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn fit_validates_inputs() {
        let x = sample_sphere(3, 4, 1).unwrap();
        assert!(krr_fit(&x, &[1.0; 4], 0.0).is_err());
        assert!(krr_fit(&x, &[1.0; 3], 0.1).is_err());
        assert!(krr_fit(&x, &[1.0, f64::NAN, 0.0, 0.0], 0.1).is_err());
    }

    #[test]
    fn prediction_at_training_points_matches_gram_product() {
        let x = sample_sphere(4, 30, 3).unwrap();
        let y: Vec<f64> = (0..30).map(|i| (i as f64 * 0.3).sin()).collect();
        let gram = gram_analytic(&x);
        let m = krr_fit_with_gram(&x, &gram, &y, 1e-3).unwrap();
        let a = krr_predict(&m, &x).unwrap();
        let b = m.fitted_values(&gram);
        for (u, v) in a.iter().zip(&b) {
            assert!((u - v).abs() < 1e-10);
        }
    }

    #[test]
    fn empirical_risk_examples() {
        assert_eq!(empirical_risk(&[1.0, 2.0], &[1.0, 2.0]).unwrap(), 0.0);
        assert_eq!(empirical_risk(&[0.5], &[1.0]).unwrap(), 0.25);
        assert_eq!(empirical_risk(&[0.0, 1.0], &[1.0, 0.0]).unwrap(), 1.0);
        assert!(matches!(
            empirical_risk(&[0.0], &[1.0, 0.0]),
            Err(Error::InvalidArgument(_))
        ));
    }

    #[test]
    fn residual_identity_random_instance() {
        let x = sample_sphere(3, 50, 7).unwrap();
        let mut rng = rng_from_seed(8);
        let y: Vec<f64> = (0..50).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let m = krr_fit(&x, &y, 0.01).unwrap();
        let (lhs, rhs) = residual_identity(&m, &y).unwrap();
        assert!((lhs - rhs).abs() <= 1e-8 * lhs.max(1e-12), "{lhs} {rhs}");
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn risk_respects_measured_eigenvalue_bound(seed in any::<u64>(), n in 2usize..120, lg in -4.0f64..0.0) {
            let gamma = 10f64.powf(lg);
            let ds = make_synthetic(3, n, 0.2, seed).unwrap();
            let x = UnitMatrix::new(ds.features.clone()).unwrap();
            let gram = gram_analytic(&x);
            let m = krr_fit_with_gram(&x, &gram, &ds.targets_noisy, gamma).unwrap();
            let risk = empirical_risk(&m.fitted_values(&gram), &ds.targets_noisy).unwrap();
            let bound = empirical_risk_bound(gamma, &ds.targets_noisy, gram.min_eigenvalue().unwrap());
            prop_assert!(risk <= bound * (1.0 + 1e-9));
            let (lhs, rhs) = residual_identity(&m, &ds.targets_noisy).unwrap();
            prop_assert!((lhs - rhs).abs() <= 1e-8 * lhs.max(1e-12));
        }
    }

    #[test]
    fn tiny_gamma_interpolates() {
        let ds = make_synthetic(3, 40, 0.2, 4).unwrap();
        let x = UnitMatrix::new(ds.features.clone()).unwrap();
        let gram = gram_analytic(&x);
        let m = krr_fit_with_gram(&x, &gram, &ds.targets_noisy, 1e-10).unwrap();
        let risk = empirical_risk(&m.fitted_values(&gram), &ds.targets_noisy).unwrap();
        assert!(risk < 1e-10, "{risk}");
    }

    fn mc_eval(d: usize) -> EvalSet {
        ExcessEval::MonteCarlo {
            d,
            samples: 20_000,
            seed: 99,
        }
        .materialize()
        .unwrap()
    }

    #[test]
    fn sweep_is_monotone_and_deterministic() {
        let ds = make_synthetic(3, 150, 0.2, 5).unwrap();
        let gammas = [1e2, 1.0, 1e-1, 1e-1, 1e-2, 1e-3, 1e-4];
        let eval = mc_eval(3);
        let recs = krr_complexity_sweep(&ds, &gammas, &eval).unwrap();
        assert_eq!(recs.len(), gammas.len());
        for w in recs.windows(2) {
            assert!(w[1].empirical_risk <= w[0].empirical_risk + 1e-15);
        }
        assert_eq!(recs[2], recs[3]);
        assert_eq!(recs, krr_complexity_sweep(&ds, &gammas, &eval).unwrap());
        assert!(krr_complexity_sweep(&ds, &[1.0, -1.0], &eval).is_err());
    }

    #[test]
    fn huge_gamma_predicts_zero() {
        let ds = make_synthetic(3, 60, 0.2, 6).unwrap();
        let recs = krr_complexity_sweep(&ds, &[1e12], &mc_eval(3)).unwrap();
        let mean_y2 = ds.targets_noisy.iter().map(|v| v * v).sum::<f64>() / 60.0;
        assert!((recs[0].empirical_risk - mean_y2).abs() < 1e-9);
        assert!((recs[0].excess_risk - 1.0 / 3.0).abs() < 0.01);
    }

    #[test]
    fn synthetic_fit_respects_bound_with_measured_eigenvalue() {
        let ds = make_synthetic(3, 500, 0.2, 7).unwrap();
        let gamma = 1e-4;
        let recs = krr_complexity_sweep(&ds, &[gamma], &mc_eval(3)).unwrap();
        let r = recs[0];
        let bound = empirical_risk_bound(gamma, &ds.targets_noisy, r.lambda_min);
        assert!(r.empirical_risk <= bound);
        // lambda_min is bounded by the 1/2 diagonal, far below n/(5d).
        assert!(r.lambda_min <= 0.5);
    }

    #[test]
    fn assumption_examples() {
        let base = KrrAssumptionInputs {
            eps: 0.04,
            delta: 0.01,
            gamma: 1e9,
            d: 10,
            n: 1000,
            f_eps_norm: 1.0,
            c: 1.0,
        };
        let r = check_assumption_krr(&base);
        assert!(!r.inequalities[2].satisfied);
        assert!(!r.clause_satisfied("i"));

        let r = check_assumption_krr(&KrrAssumptionInputs {
            gamma: 1e-3,
            ..base
        });
        let q = &r.inequalities[2];
        assert!((q.lhs - (1.0f64 / 21.0).powi(2)).abs() < 1e-12);
        assert!(q.satisfied);

        let r = check_assumption_krr(&KrrAssumptionInputs {
            n: 10,
            gamma: 0.1,
            eps: 0.04,
            delta: 0.1,
            ..base
        });
        let q = &r.inequalities[4];
        let want = 16.0 * 121.0 * 40f64.ln() / (0.01 * 0.04);
        assert!((q.rhs - want).abs() < 1e-6 * want);
        assert!((q.rhs - 1.785e7).abs() < 1e5);
        assert!(!r.clause_satisfied("iii"));
    }

    #[test]
    fn sweep_csv_header() {
        let mut buf = Vec::new();
        write_sweep_csv(&mut buf, &[]).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "gamma,n,empirical_risk,excess_risk,lambda_min\n"
        );
    }
}
