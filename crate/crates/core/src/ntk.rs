//! The arc-cosine neural tangent kernel of a two-layer ReLU network, its Gram
//! matrices, and the spectrum of the associated integral operator on the
//! sphere.
//!
//! For unit vectors the kernel depends only on `t = x . x'`:
//!
//! ```text
//! kappa(t) = t * (1/2 - arccos(t) / (2 pi))
//! ```
//!
//! The operator `H f(x) = E_{x'}[f(x') kappa(x . x')]` is diagonal in the
//! spherical harmonics. Order-`h` harmonics form an eigenspace of dimension
//! `N(d, h)` whose eigenvalue is obtained from the Funk-Hecke formula.

use std::f64::consts::{LN_2, PI};
use std::io::{self, Write};

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::linalg;
use crate::special::{ln_beta, ln_binomial, ln_double_factorial, ln_factorial};
use crate::sphere::{mc_expectation, row_major, UnitMatrix};

/// Norm tolerance on inputs to [`ntk_eval`].
pub const INPUT_UNIT_TOL: f64 = 1e-9;
/// Highest order accepted by [`legendre`].
pub const MAX_LEGENDRE_ORDER: usize = 60;
pub const DEFAULT_SERIES_TOL: f64 = 1e-12;
/// Term cap for the even-order eigenvalue series.
pub const MAX_SERIES_TERMS: usize = 10_000_000;

/// The kernel as a function of the dot product; `t` is clamped to `[-1, 1]`.
pub fn kappa(t: f64) -> f64 {
    let t = t.clamp(-1.0, 1.0);
    t * (0.5 - t.acos() / (2.0 * PI))
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Kernel value from two unit vectors. The angle comes from
/// `2 atan2(|x - x'|, |x + x'|)`, which stays accurate for nearly parallel
/// and nearly antipodal pairs where `arccos` loses half the digits.
fn kappa_pair(x: &[f64], xp: &[f64]) -> f64 {
    let (mut diff, mut sum, mut t) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(xp) {
        diff += (a - b) * (a - b);
        sum += (a + b) * (a + b);
        t += a * b;
    }
    let angle = 2.0 * diff.sqrt().atan2(sum.sqrt());
    t.clamp(-1.0, 1.0) * (0.5 - angle / (2.0 * PI))
}

fn check_unit(x: &[f64], what: &str) -> Result<()> {
    let norm = dot(x, x).sqrt();
    if !((norm - 1.0).abs() <= INPUT_UNIT_TOL) {
        return Err(Error::invalid(format!(
            "{what} has norm {norm}, expected 1"
        )));
    }
    Ok(())
}

/// `kappa(x, x')` for unit vectors `x`, `x'`.
pub fn ntk_eval(x: &[f64], xp: &[f64]) -> Result<f64> {
    if x.len() != xp.len() {
        return Err(Error::invalid(format!(
            "dimension mismatch: {} vs {}",
            x.len(),
            xp.len()
        )));
    }
    check_unit(x, "x")?;
    check_unit(xp, "x'")?;
    Ok(kappa_pair(x, xp))
}

/// Power series of the kernel in `t`, keeping `terms` summands of the
/// `r >= 1` tail:
///
/// `t/4 + t^2/(2 pi) + 1/(2 pi) sum_{r=1}^{terms} t^{2r+2} / (B(1/2, r) r (1 + 2r))`.
pub fn ntk_taylor(t: f64, terms: usize) -> Result<f64> {
    if !(t.abs() <= 1.0) {
        return Err(Error::invalid(format!("|t| must be at most 1, got {t}")));
    }
    let t2 = t * t;
    let mut power = t2 * t2;
    let mut tail = 0.0;
    for r in 1..=terms {
        let rf = r as f64;
        let coeff = (-ln_beta(0.5, rf)).exp() / (rf * (1.0 + 2.0 * rf));
        tail += coeff * power;
        power *= t2;
    }
    Ok(t / 4.0 + (t2 + tail) / (2.0 * PI))
}

/// Where a Gram matrix came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GramKind {
    /// Infinite-width kernel `kappa(x_i, x_j)`.
    Analytic,
    /// Finite-width kernel of a network with the given number of neurons.
    Empirical { width: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct GramMatrix {
    matrix: DMatrix<f64>,
    kind: GramKind,
}

impl GramMatrix {
    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.matrix
    }

    pub fn kind(&self) -> GramKind {
        self.kind
    }

    pub fn n(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn min_eigenvalue(&self) -> Result<f64> {
        min_eigenvalue(self)
    }
}

/// `[kappa(a_i, b_j)]` between the rows of two unit matrices.
pub fn kernel_matrix(a: &UnitMatrix, b: &UnitMatrix) -> Result<DMatrix<f64>> {
    if a.dim() != b.dim() {
        return Err(Error::invalid(format!(
            "dimension mismatch: {} vs {}",
            a.dim(),
            b.dim()
        )));
    }
    let d = a.dim();
    let (ra, rb) = (a.to_row_major(), b.to_row_major());
    let rows: Vec<Vec<f64>> = ra
        .par_chunks_exact(d)
        .map(|xi| rb.chunks_exact(d).map(|xj| kappa_pair(xi, xj)).collect())
        .collect();
    Ok(DMatrix::from_fn(a.n(), b.n(), |i, j| rows[i][j]))
}

/// Analytic NTK Gram matrix `H_ij = kappa(x_i, x_j)`.
pub fn gram_analytic(x: &UnitMatrix) -> GramMatrix {
    let n = x.n();
    let d = x.dim();
    let rm = x.to_row_major();
    let rows: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let xi = &rm[i * d..(i + 1) * d];
            (0..=i)
                .map(|j| {
                    if i == j {
                        0.5
                    } else {
                        kappa_pair(xi, &rm[j * d..(j + 1) * d])
                    }
                })
                .collect()
        })
        .collect();
    let matrix = DMatrix::from_fn(n, n, |i, j| if j <= i { rows[i][j] } else { rows[j][i] });
    GramMatrix {
        matrix,
        kind: GramKind::Analytic,
    }
}

/// Empirical NTK Gram of a width-`m` network with hidden weights `w` (`m x d`):
///
/// `H_W = (1/m) (X X^T) o (phi'(X W^T) phi'(W X^T))`, with `phi'(z) = 1{z > 0}`.
///
/// Activation patterns are packed into bit sets so the `n x n x m` pattern
/// overlap costs `n^2 m / 64` word operations.
pub fn gram_empirical(w: &DMatrix<f64>, x: &DMatrix<f64>) -> Result<GramMatrix> {
    let (m, d) = w.shape();
    if m == 0 {
        return Err(Error::invalid("network has no neurons"));
    }
    if x.ncols() != d {
        return Err(Error::invalid(format!(
            "inputs have {} columns, weights have {d}",
            x.ncols()
        )));
    }
    let n = x.nrows();
    let words = m.div_ceil(64);
    let (wr, xr) = (row_major(w), row_major(x));
    let patterns: Vec<Vec<u64>> = xr
        .par_chunks_exact(d)
        .map(|xi| {
            let mut bits = vec![0u64; words];
            for (j, wj) in wr.chunks_exact(d).enumerate() {
                if dot(wj, xi) > 0.0 {
                    bits[j / 64] |= 1 << (j % 64);
                }
            }
            bits
        })
        .collect();
    let rows: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let xi = &xr[i * d..(i + 1) * d];
            (0..=i)
                .map(|j| {
                    let shared: u32 = patterns[i]
                        .iter()
                        .zip(&patterns[j])
                        .map(|(a, b)| (a & b).count_ones())
                        .sum();
                    dot(xi, &xr[j * d..(j + 1) * d]) * f64::from(shared) / m as f64
                })
                .collect()
        })
        .collect();
    let matrix = DMatrix::from_fn(n, n, |i, j| if j <= i { rows[i][j] } else { rows[j][i] });
    Ok(GramMatrix {
        matrix,
        kind: GramKind::Empirical { width: m },
    })
}

/// Smallest eigenvalue of a Gram matrix.
pub fn min_eigenvalue(g: &GramMatrix) -> Result<f64> {
    linalg::min_eigenvalue(&g.matrix)
}

/// Legendre polynomial `P_h(d; z)` of order `h` in `d` dimensions, from the
/// explicit sum
///
/// `h! Gamma((d-1)/2) sum_{r=0}^{h/2} (-1/4)^r (1-z^2)^r z^{h-2r} / (r! (h-2r)! Gamma(r + (d-1)/2))`.
///
/// The alternating sum cancels badly for large `h`, hence the order cap.
pub fn legendre(d: usize, h: usize, z: f64) -> Result<f64> {
    if d < 2 {
        return Err(Error::invalid(format!("dimension d = {d}, need d >= 2")));
    }
    if h > MAX_LEGENDRE_ORDER {
        return Err(Error::UnsupportedOrder {
            order: h,
            max: MAX_LEGENDRE_ORDER,
        });
    }
    if !(z.abs() <= 1.0 + 1e-12) {
        return Err(Error::invalid(format!("|z| must be at most 1, got {z}")));
    }
    let z = z.clamp(-1.0, 1.0);
    let a = (d as f64 - 1.0) / 2.0;
    let one_minus = 1.0 - z * z;
    let mut total = 0.0;
    for r in 0..=h / 2 {
        let ln_coeff = (ln_factorial(h) - ln_factorial(h - 2 * r))
            + (statrs::function::gamma::ln_gamma(a)
                - statrs::function::gamma::ln_gamma(a + r as f64))
            - ln_factorial(r)
            - 2.0 * r as f64 * LN_2;
        let sign = if r % 2 == 0 { 1.0 } else { -1.0 };
        total += sign * ln_coeff.exp() * one_minus.powi(r as i32) * z.powi((h - 2 * r) as i32);
    }
    Ok(total)
}

/// Dimension `N(d, h)` of the order-`h` spherical harmonics on S^{d-1}.
pub fn multiplicity(d: usize, h: usize) -> Result<u64> {
    if d < 2 {
        return Err(Error::invalid(format!("dimension d = {d}, need d >= 2")));
    }
    match h {
        0 => Ok(1),
        1 => Ok(d as u64),
        _ => {
            // (2h + d - 2) C(h + d - 3, h - 1) / h
            let top = (h + d - 3) as u128;
            let k = (h - 1) as u128;
            let mut binom: u128 = 1;
            for i in 0..k {
                binom = binom
                    .checked_mul(top - i)
                    .ok_or_else(|| Error::numeric("multiplicity overflows"))?
                    / (i + 1);
            }
            let n = binom
                .checked_mul((2 * h + d - 2) as u128)
                .ok_or_else(|| Error::numeric("multiplicity overflows"))?
                / h as u128;
            u64::try_from(n).map_err(|_| Error::numeric("multiplicity overflows"))
        }
    }
}

/// Eigenvalue `mu_h / |S^{d-1}|` of the kernel operator on order-`h`
/// spherical harmonics.
///
/// Closed forms cover `h <= 2` and odd `h`. Even `h >= 4` sums
///
/// ```text
/// h B(h, (d-1)/2) / (2^{h+1} pi B((d-1)/2, 1/2))
///   * sum_{r >= h/2 - 1} C(2r+2, h) B(r + 3/2 - h/2, h + (d-1)/2) / (B(1/2, r) r (1 + 2r))
/// ```
///
/// until a term contributes less than `tol` relative to the running sum,
/// then adds an Euler-Maclaurin estimate of the remainder using the terms'
/// `r^{-(d/2 + 1)}` decay.
pub fn eigenvalue(d: usize, h: usize, tol: f64) -> Result<f64> {
    if d < 2 {
        return Err(Error::invalid(format!("dimension d = {d}, need d >= 2")));
    }
    if !(tol > 0.0) {
        return Err(Error::invalid("tolerance must be positive"));
    }
    let df = d as f64;
    Ok(match h {
        0 => {
            let denom = if d.is_multiple_of(2) { PI.ln() } else { LN_2 };
            let ln_ratio =
                ln_double_factorial(d as i64 - 2) - ln_double_factorial(d as i64 - 1) - denom;
            (2.0 * ln_ratio).exp()
        }
        1 => 1.0 / (4.0 * df),
        2 => {
            let a = (df - 1.0) / 2.0;
            let lead = (ln_beta(a, 2.0) - ln_beta(a, 0.5)).exp() / (8.0 * PI);
            lead * ((ln_beta(df / 2.0, 0.5)).exp() + (ln_beta(df / 2.0 + 1.0, 0.5)).exp())
        }
        h if h % 2 == 1 => 0.0,
        h => even_order_series(d, h, tol)?,
    })
}

fn even_order_series(d: usize, h: usize, tol: f64) -> Result<f64> {
    let (df, hf) = (d as f64, h as f64);
    let a = (df - 1.0) / 2.0;
    let ln_prefactor = hf.ln() + ln_beta(hf, a) - (hf + 1.0) * LN_2 - PI.ln() - ln_beta(a, 0.5);
    let offset = 1.5 - hf / 2.0;
    let width = hf + a;

    let r0 = h / 2 - 1;
    let ln_first = {
        let r = r0 as f64;
        ln_binomial(2 * r0 + 2, h) - ln_beta(0.5, r) - r.ln() - (1.0 + 2.0 * r).ln()
            + ln_beta(r + offset, width)
    };
    let mut term = ln_first.exp();
    let mut sum = term;
    let mut r = r0;
    loop {
        let rf = r as f64;
        let ratio = ((2.0 * rf + 4.0) * (2.0 * rf + 3.0))
            / ((2.0 * rf + 4.0 - hf) * (2.0 * rf + 3.0 - hf))
            * ((rf + 0.5) / rf)
            * (rf * (1.0 + 2.0 * rf) / ((rf + 1.0) * (2.0 * rf + 3.0)))
            * ((rf + offset) / (rf + offset + width));
        term *= ratio;
        r += 1;
        sum += term;
        if term <= tol * sum {
            break;
        }
        if r - r0 >= MAX_SERIES_TERMS {
            return Err(Error::Convergence {
                terms: r - r0,
                partial_sum: ln_prefactor.exp() * sum,
            });
        }
    }
    let p = df / 2.0 + 1.0;
    let rf = r as f64;
    let remainder = term * rf.powf(p) * (rf + 0.5).powf(1.0 - p) / (p - 1.0);
    Ok(ln_prefactor.exp() * (sum + remainder))
}

/// One eigenspace of the kernel operator.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpectrumEntry {
    pub order: usize,
    pub eigenvalue: f64,
    pub multiplicity: u64,
}

/// Eigenvalues and multiplicities for orders `0..=max_h`.
pub fn spectrum(d: usize, max_h: usize, tol: f64) -> Result<Vec<SpectrumEntry>> {
    if max_h < 1 {
        return Err(Error::invalid("max_h must be at least 1"));
    }
    (0..=max_h)
        .map(|h| {
            Ok(SpectrumEntry {
                order: h,
                eigenvalue: eigenvalue(d, h, tol)?,
                multiplicity: multiplicity(d, h)?,
            })
        })
        .collect()
}

/// Entry with the largest eigenvalue (lowest order on ties).
pub fn top_entry(entries: &[SpectrumEntry]) -> Option<SpectrumEntry> {
    entries.iter().copied().reduce(|best, e| {
        if e.eigenvalue > best.eigenvalue {
            e
        } else {
            best
        }
    })
}

/// Writes `h,eigenvalue,multiplicity` rows.
pub fn write_spectrum_csv<W: Write>(mut out: W, entries: &[SpectrumEntry]) -> io::Result<()> {
    writeln!(out, "h,eigenvalue,multiplicity")?;
    for e in entries {
        writeln!(out, "{},{:e},{}", e.order, e.eigenvalue, e.multiplicity)?;
    }
    Ok(())
}

/// Monte-Carlo estimate of `(H f)(x) = E_{x'}[f(x') kappa(x . x')]`.
pub fn operator_apply_mc<F>(x: &[f64], f: F, samples: usize, seed: u64) -> Result<f64>
where
    F: Fn(&[f64]) -> f64,
{
    check_unit(x, "evaluation point")?;
    mc_expectation(|xp| f(xp) * kappa(dot(x, xp)), x.len(), samples, seed)
}
