//! Uniform sampling on the unit sphere S^{d-1} and Monte-Carlo expectations.

use std::ops::Deref;

use nalgebra::DMatrix;
use rand::Rng as _;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::rng::{rng_from_seed, Rng};

/// Row tolerance for the unit-norm invariant.
pub const UNIT_TOL: f64 = 1e-12;

/// An `n x d` matrix whose rows lie on S^{d-1}.
#[derive(Debug, Clone, PartialEq)]
pub struct UnitMatrix(DMatrix<f64>);

impl UnitMatrix {
    /// Wraps `m` after checking every row has unit norm within [`UNIT_TOL`].
    pub fn new(m: DMatrix<f64>) -> Result<Self> {
        check_shape(m.ncols(), m.nrows())?;
        for (i, row) in m.row_iter().enumerate() {
            let norm = row.norm();
            if !((norm - 1.0).abs() <= UNIT_TOL) {
                return Err(Error::invalid(format!(
                    "row {i} has norm {norm}, expected 1"
                )));
            }
        }
        Ok(UnitMatrix(m))
    }

    /// Projects every row of `m` onto the sphere.
    pub fn normalized(mut m: DMatrix<f64>) -> Result<Self> {
        check_shape(m.ncols(), m.nrows())?;
        for i in 0..m.nrows() {
            let norm = m.row(i).norm();
            if !(norm > 0.0 && norm.is_finite()) {
                return Err(Error::invalid(format!("row {i} cannot be normalized")));
            }
            m.row_mut(i).unscale_mut(norm);
        }
        Ok(UnitMatrix(m))
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let d = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != d) {
            return Err(Error::invalid("rows have unequal lengths"));
        }
        let m = DMatrix::from_fn(rows.len(), d, |i, j| rows[i][j]);
        UnitMatrix::new(m)
    }

    pub fn n(&self) -> usize {
        self.0.nrows()
    }

    pub fn dim(&self) -> usize {
        self.0.ncols()
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn into_inner(self) -> DMatrix<f64> {
        self.0
    }

    pub fn row_vec(&self, i: usize) -> Vec<f64> {
        self.0.row(i).iter().copied().collect()
    }

    /// Row-major copy of the entries.
    pub fn to_row_major(&self) -> Vec<f64> {
        row_major(&self.0)
    }
}

impl Deref for UnitMatrix {
    type Target = DMatrix<f64>;

    fn deref(&self) -> &DMatrix<f64> {
        &self.0
    }
}

pub(crate) fn row_major(m: &DMatrix<f64>) -> Vec<f64> {
    m.transpose().as_slice().to_vec()
}

fn check_shape(d: usize, n: usize) -> Result<()> {
    if d < 2 {
        return Err(Error::invalid(format!("dimension d = {d}, need d >= 2")));
    }
    if n == 0 {
        return Err(Error::invalid("need at least one point"));
    }
    Ok(())
}

/// Writes one uniform point of S^{d-1} into `out` (normalized Gaussian).
pub fn sample_point(rng: &mut Rng, out: &mut [f64]) {
    loop {
        let mut sq = 0.0;
        for v in out.iter_mut() {
            *v = rng.sample(StandardNormal);
            sq += *v * *v;
        }
        if sq > 0.0 {
            let norm = sq.sqrt();
            out.iter_mut().for_each(|v| *v /= norm);
            return;
        }
    }
}

pub(crate) fn sample_with(rng: &mut Rng, d: usize, n: usize) -> Result<UnitMatrix> {
    check_shape(d, n)?;
    let mut data = vec![0.0; n * d];
    for row in data.chunks_exact_mut(d) {
        sample_point(rng, row);
    }
    Ok(UnitMatrix(DMatrix::from_row_slice(n, d, &data)))
}

/// Draws `n` i.i.d. uniform points on S^{d-1}.
pub fn sample_sphere(d: usize, n: usize, seed: u64) -> Result<UnitMatrix> {
    sample_with(&mut rng_from_seed(seed), d, n)
}

/// Monte-Carlo estimate of `E[f(x)]` for `x` uniform on S^{d-1}.
///
/// Points are streamed, so memory use is `O(d)` regardless of `samples`.
pub fn mc_expectation<F>(f: F, d: usize, samples: usize, seed: u64) -> Result<f64>
where
    F: Fn(&[f64]) -> f64,
{
    check_shape(d, samples)?;
    let mut rng = rng_from_seed(seed);
    let mut x = vec![0.0; d];
    let mut sum = 0.0;
    for i in 0..samples {
        sample_point(&mut rng, &mut x);
        let v = f(&x);
        if !v.is_finite() {
            return Err(Error::numeric(format!(
                "integrand returned {v} at sample {i}"
            )));
        }
        sum += v;
    }
    Ok(sum / samples as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn dot(a: &[f64], b: &[f64]) -> f64 {
        a.iter().zip(b).map(|(x, y)| x * y).sum()
    }

    #[test]
    fn rejects_bad_shapes() {
        assert!(matches!(
            sample_sphere(1, 5, 0),
            Err(Error::InvalidArgument(_))
        ));
        assert!(matches!(
            sample_sphere(3, 0, 0),
            Err(Error::InvalidArgument(_))
        ));
        assert!(mc_expectation(|_| 1.0, 3, 0, 0).is_err());
    }

    #[test]
    fn single_point_has_unit_norm() {
        let x = sample_sphere(3, 1, 42).unwrap();
        assert!((x.row(0).norm() - 1.0).abs() <= 1e-12);
    }

    #[test]
    fn coordinates_are_centered() {
        let x = sample_sphere(3, 100_000, 1).unwrap();
        for j in 0..3 {
            assert!(x.column(j).mean().abs() < 0.01);
        }
    }

    #[test]
    fn squared_dot_of_pairs_is_one_over_d() {
        let x = sample_sphere(3, 100_000, 2).unwrap().to_row_major();
        let mean = x
            .chunks_exact(6)
            .map(|p| dot(&p[..3], &p[3..]).powi(2))
            .sum::<f64>()
            / 50_000.0;
        assert!((mean - 1.0 / 3.0).abs() < 0.01, "{mean}");
    }

    #[test]
    fn same_seed_is_bit_identical() {
        let a = sample_sphere(5, 50, 9).unwrap();
        let b = sample_sphere(5, 50, 9).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, sample_sphere(5, 50, 10).unwrap());
    }

    #[test]
    fn scaled_covariance_approaches_identity() {
        for &d in &[3usize, 6] {
            let samples = 20_000;
            let x = sample_sphere(d, samples, 77).unwrap();
            let cov = x.transpose() * x.as_matrix() / samples as f64;
            let tol = 5.0 / (samples as f64).sqrt();
            for i in 0..d {
                for j in 0..d {
                    let target = if i == j { 1.0 } else { 0.0 };
                    assert!((d as f64 * cov[(i, j)] - target).abs() <= tol);
                }
            }
        }
    }

    #[test]
    fn mc_of_constant_is_exact() {
        assert_eq!(mc_expectation(|_| 1.0, 4, 1000, 3).unwrap(), 1.0);
    }

    #[test]
    fn mc_of_odd_coordinate_vanishes() {
        let v = mc_expectation(|x| x[0], 3, 200_000, 4).unwrap();
        assert!(v.abs() < 0.01);
    }

    #[test]
    fn mc_of_squared_coordinate_matches_grid_quadrature() {
        // Midpoint rule in spherical coordinates on S^2.
        let (nt, np) = (400, 800);
        let mut grid = 0.0;
        for a in 0..nt {
            let theta = (a as f64 + 0.5) * PI / nt as f64;
            for b in 0..np {
                let phi = (b as f64 + 0.5) * 2.0 * PI / np as f64;
                let x1 = theta.sin() * phi.cos();
                grid += x1 * x1 * theta.sin();
            }
        }
        grid *= (PI / nt as f64) * (2.0 * PI / np as f64) / (4.0 * PI);
        assert!((grid - 1.0 / 3.0).abs() < 1e-4);

        let mc = mc_expectation(|x| x[0] * x[0], 3, 200_000, 5).unwrap();
        assert!((mc - grid).abs() < 0.01, "{mc} vs {grid}");
    }

    #[test]
    fn mc_reports_offending_sample() {
        let err =
            mc_expectation(|x| if x[0] > 0.0 { f64::NAN } else { 0.0 }, 3, 100, 6).unwrap_err();
        assert!(matches!(err, Error::Numeric(msg) if msg.contains("sample")));
    }

    #[test]
    fn unit_matrix_validation() {
        assert!(UnitMatrix::from_rows(&[vec![1.0, 0.0], vec![0.6, 0.8]]).is_ok());
        assert!(UnitMatrix::from_rows(&[vec![1.0, 0.1]]).is_err());
        let m = UnitMatrix::normalized(DMatrix::from_row_slice(1, 2, &[3.0, 4.0])).unwrap();
        assert!((m[(0, 0)] - 0.6).abs() < 1e-15);
    }
}
