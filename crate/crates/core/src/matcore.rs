//! Dense matrix primitives: the column-major `vec` convention, matrix norms
//! and the two proximal operators used by the solver.

use std::fmt;
use std::ops::{Add, Mul, Sub};

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Relative cutoff below which a singular value is reported as zero.
pub const RANK_TOLERANCE: f64 = 1e-12;

const POWER_REL_TOL: f64 = 1e-10;
const POWER_MAX_ITER: usize = 10_000;

/// A dense `p x q` real matrix with finite entries.
///
/// Storage is column-major, so the backing slice *is* `vec(M)`.
#[derive(Clone, PartialEq)]
pub struct Mat(DMatrix<f64>);

impl fmt::Debug for Mat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Mat{}x{}", self.rows(), self.cols())?;
        f.debug_list()
            .entries(self.0.row_iter().map(|r| r.iter().copied().collect::<Vec<_>>()))
            .finish()
    }
}

fn check_finite(values: &[f64]) -> Result<()> {
    match values.iter().position(|v| !v.is_finite()) {
        None => Ok(()),
        Some(k) => Err(Error::InvalidInput(format!(
            "non-finite matrix entry at vec index {k}"
        ))),
    }
}

impl Mat {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Mat(DMatrix::zeros(rows, cols))
    }

    pub fn identity(n: usize) -> Self {
        Mat(DMatrix::identity(n, n))
    }

    pub fn from_diagonal(values: &[f64]) -> Result<Self> {
        check_finite(values)?;
        let n = values.len();
        Ok(Mat(DMatrix::from_fn(n, n, |i, j| if i == j { values[i] } else { 0.0 })))
    }

    /// Builds a matrix from nested rows; rejects ragged or empty input.
    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let p = rows.len();
        let q = rows.first().map(|r| r.as_ref().len()).unwrap_or(0);
        if p == 0 || q == 0 {
            return Err(Error::InvalidInput("matrix must be non-empty".into()));
        }
        if let Some(bad) = rows.iter().position(|r| r.as_ref().len() != q) {
            return Err(Error::InvalidInput(format!(
                "row {} has {} entries, expected {q}",
                bad + 1,
                rows[bad].as_ref().len()
            )));
        }
        let flat: Vec<f64> = rows.iter().flat_map(|r| r.as_ref().iter().copied()).collect();
        Self::from_row_major(p, q, flat)
    }

    pub fn from_row_major(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        Self::check_len(rows, cols, data.len())?;
        check_finite(&data)?;
        Ok(Mat(DMatrix::from_row_slice(rows, cols, &data)))
    }

    /// Inverse of [`vec`]: entry `i + rows * j` becomes `M[i, j]`.
    pub fn from_col_major(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        Self::check_len(rows, cols, data.len())?;
        check_finite(&data)?;
        Ok(Mat(DMatrix::from_vec(rows, cols, data)))
    }

    pub fn from_matrix(m: DMatrix<f64>) -> Result<Self> {
        if m.nrows() == 0 || m.ncols() == 0 {
            return Err(Error::InvalidInput("matrix must be non-empty".into()));
        }
        check_finite(m.as_slice())?;
        Ok(Mat(m))
    }

    /// Panics if `f` produces a non-finite value.
    pub fn from_fn(rows: usize, cols: usize, f: impl FnMut(usize, usize) -> f64) -> Self {
        let m = DMatrix::from_fn(rows, cols, f);
        assert!(
            m.iter().all(|v| v.is_finite()),
            "Mat::from_fn produced a non-finite entry"
        );
        Mat(m)
    }

    pub(crate) fn wrap(m: DMatrix<f64>) -> Self {
        debug_assert!(m.iter().all(|v| v.is_finite()));
        Mat(m)
    }

    fn check_len(rows: usize, cols: usize, len: usize) -> Result<()> {
        if rows == 0 || cols == 0 {
            return Err(Error::InvalidInput("matrix must be non-empty".into()));
        }
        if rows * cols != len {
            return Err(Error::InvalidInput(format!(
                "{rows}x{cols} matrix needs {} entries, got {len}",
                rows * cols
            )));
        }
        Ok(())
    }

    pub fn rows(&self) -> usize {
        self.0.nrows()
    }

    pub fn cols(&self) -> usize {
        self.0.ncols()
    }

    pub fn shape(&self) -> (usize, usize) {
        self.0.shape()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.0[(i, j)]
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.0
    }

    /// Column-major entries, identical to [`vec`].
    pub fn as_col_major(&self) -> &[f64] {
        self.0.as_slice()
    }

    pub fn to_row_major(&self) -> Vec<f64> {
        self.0.transpose().as_slice().to_vec()
    }

    pub fn transpose(&self) -> Mat {
        Mat(self.0.transpose())
    }

    pub fn scale(&self, c: f64) -> Mat {
        Mat::wrap(&self.0 * c)
    }

    /// `<M, N> = tr(M^T N)`.
    pub fn inner(&self, other: &Mat) -> f64 {
        assert_eq!(self.shape(), other.shape(), "inner product shape mismatch");
        self.0.dot(&other.0)
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.0.norm()
    }

    pub fn l1_norm(&self) -> f64 {
        self.0.iter().map(|v| v.abs()).sum()
    }

    pub fn max_abs(&self) -> f64 {
        self.0.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn count_nonzero(&self) -> usize {
        self.0.iter().filter(|v| **v != 0.0).count()
    }

    pub fn is_zero(&self) -> bool {
        self.0.iter().all(|v| *v == 0.0)
    }

    pub fn svd(&self) -> SvdFactors {
        SvdFactors::of(self)
    }

    pub fn singular_values(&self) -> Vec<f64> {
        let mut s: Vec<f64> = to_faer(self).singular_values();
        s.sort_by(|a, b| b.total_cmp(a));
        s
    }

    pub fn rank(&self) -> usize {
        numerical_rank(&self.singular_values())
    }
}

impl Add for &Mat {
    type Output = Mat;
    fn add(self, rhs: &Mat) -> Mat {
        Mat::wrap(&self.0 + &rhs.0)
    }
}

impl Sub for &Mat {
    type Output = Mat;
    fn sub(self, rhs: &Mat) -> Mat {
        Mat::wrap(&self.0 - &rhs.0)
    }
}

impl Mul for &Mat {
    type Output = Mat;
    fn mul(self, rhs: &Mat) -> Mat {
        Mat::wrap(&self.0 * &rhs.0)
    }
}

/// Thin SVD `M = U diag(s) V^T` with `s` sorted nonincreasing.
#[derive(Clone, Debug)]
pub struct SvdFactors {
    pub left: DMatrix<f64>,
    pub singulars: Vec<f64>,
    pub right: DMatrix<f64>,
}

impl SvdFactors {
    pub fn of(m: &Mat) -> Self {
        let a = to_faer(m);
        let svd = a.thin_svd();
        let (u, s, v) = (svd.u(), svd.s_diagonal(), svd.v());
        let r = s.nrows();
        let mut order: Vec<usize> = (0..r).collect();
        order.sort_by(|&x, &y| s.read(y).total_cmp(&s.read(x)));
        let left = DMatrix::from_fn(u.nrows(), r, |i, k| u.read(i, order[k]));
        let right = DMatrix::from_fn(v.nrows(), r, |j, k| v.read(j, order[k]));
        let singulars = order.iter().map(|&k| s.read(k).max(0.0)).collect();
        SvdFactors {
            left,
            singulars,
            right,
        }
    }

    pub fn rank(&self) -> usize {
        numerical_rank(&self.singulars)
    }

    /// `U diag(s) V^T` using the supplied singular values in place of the stored ones.
    pub fn recompose_with(&self, singulars: &[f64]) -> Mat {
        let (p, q) = (self.left.nrows(), self.right.nrows());
        let mut out = DMatrix::zeros(p, q);
        for (k, &s) in singulars.iter().enumerate() {
            if s == 0.0 {
                continue;
            }
            let u = self.left.column(k);
            let v = self.right.column(k);
            out.ger(s, &u, &v, 1.0);
        }
        Mat::wrap(out)
    }

    pub fn recompose(&self) -> Mat {
        self.recompose_with(&self.singulars)
    }
}

fn to_faer(m: &Mat) -> faer::Mat<f64> {
    faer::Mat::from_fn(m.rows(), m.cols(), |i, j| m.0[(i, j)])
}

/// Count of singular values above `RANK_TOLERANCE` times the largest.
pub fn numerical_rank(singulars: &[f64]) -> usize {
    let top = singulars.iter().fold(0.0_f64, |m, &s| m.max(s));
    if top <= 0.0 {
        return 0;
    }
    singulars.iter().filter(|&&s| s > RANK_TOLERANCE * top).count()
}

/// Column-major stacking: output index `i + p * j` holds `M[i, j]`.
pub fn vec(m: &Mat) -> Vec<f64> {
    m.as_col_major().to_vec()
}

pub fn nuclear_norm(m: &Mat) -> f64 {
    m.singular_values().iter().sum()
}

/// Largest singular value by power iteration on `M^T M`.
pub fn spectral_norm(m: &Mat) -> f64 {
    let a = m.as_matrix();
    let q = a.ncols();
    if a.iter().all(|v| *v == 0.0) {
        return 0.0;
    }
    // Deterministic, non-degenerate start vector.
    let mut v = nalgebra::DVector::from_fn(q, |j, _| 1.0 + 0.5 * ((j as f64 + 1.0) * 0.618_033_988_749_895).fract());
    v.normalize_mut();
    let mut lambda = 0.0;
    for _ in 0..POWER_MAX_ITER {
        let av = a * &v;
        let next_lambda = av.norm_squared();
        let mut w = a.tr_mul(&av);
        let wn = w.norm();
        if wn == 0.0 {
            // v landed in the null space; the start vector was orthogonal to the row space.
            return 0.0;
        }
        w /= wn;
        v = w;
        let converged = (next_lambda - lambda).abs() <= POWER_REL_TOL * next_lambda;
        lambda = next_lambda;
        if converged {
            break;
        }
    }
    // Final Rayleigh quotient at the last normalized iterate.
    let av = a * &v;
    av.norm_squared().max(lambda).sqrt()
}

/// Singular value thresholding: the proximal operator of `tau * ||.||_*`.
pub fn svt(m: &Mat, tau: f64) -> Mat {
    svt_with_singulars(m, tau).0
}

/// [`svt`] that also returns the shrunk singular values (nonincreasing).
pub fn svt_with_singulars(m: &Mat, tau: f64) -> (Mat, Vec<f64>) {
    assert!(tau >= 0.0, "threshold must be nonnegative");
    let factors = m.svd();
    let shrunk: Vec<f64> = factors.singulars.iter().map(|s| (s - tau).max(0.0)).collect();
    if shrunk.iter().all(|s| *s == 0.0) {
        return (Mat::zeros(m.rows(), m.cols()), shrunk);
    }
    if tau == 0.0 {
        return (m.clone(), shrunk);
    }
    (factors.recompose_with(&shrunk), shrunk)
}

/// Entrywise `sign(m) * (|m| - tau)_+`, the proximal operator of `tau * ||.||_{1,1}`.
pub fn soft_threshold(m: &Mat, tau: f64) -> Mat {
    assert!(tau >= 0.0, "threshold must be nonnegative");
    Mat::wrap(m.0.map(|v| soft(v, tau)))
}

#[inline]
pub(crate) fn soft(v: f64, tau: f64) -> f64 {
    if v > tau {
        v - tau
    } else if v < -tau {
        v + tau
    } else {
        0.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Mat {
        Mat::from_fn(rows, cols, |_, _| rng.gen_range(-1.0..1.0))
    }

    #[test]
    fn vec_is_column_major() {
        let m = Mat::from_rows(&[[1.0, 2.0], [3.0, 4.0]]).unwrap();
        assert_eq!(vec(&m), vec![1.0, 3.0, 2.0, 4.0]);
        let back = Mat::from_col_major(2, 2, vec(&m)).unwrap();
        assert_eq!(back, m);
    }

    #[test]
    fn orthogonal_pair_has_zero_inner_product() {
        let m = Mat::identity(2);
        let n = Mat::from_rows(&[[0.0, 1.0], [1.0, 0.0]]).unwrap();
        let dot: f64 = vec(&m).iter().zip(vec(&n)).map(|(a, b)| a * b).sum();
        assert_eq!(dot, 0.0);
        assert_eq!(m.inner(&n), 0.0);
        assert_eq!((&m.transpose() * &n).as_matrix().trace(), 0.0);
    }

    #[test]
    fn vec_inner_product_matches_trace() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let m = random(4, 3, &mut rng);
        let n = random(4, 3, &mut rng);
        let via_vec: f64 = vec(&m).iter().zip(vec(&n)).map(|(a, b)| a * b).sum();
        let trace = (&m.transpose() * &n).as_matrix().trace();
        assert!((via_vec - trace).abs() < 1e-14);
        let self_dot: f64 = vec(&m).iter().map(|v| v * v).sum();
        assert!((self_dot - m.frobenius_norm().powi(2)).abs() < 1e-14);
    }

    #[test]
    fn rejects_non_finite_and_ragged() {
        assert!(Mat::from_rows(&[vec![1.0, f64::NAN]]).is_err());
        assert!(Mat::from_rows(&[vec![1.0, 2.0], vec![3.0]]).is_err());
        assert!(Mat::from_row_major(2, 2, vec![1.0; 3]).is_err());
        assert!(Mat::from_col_major(0, 2, vec![]).is_err());
    }

    #[test]
    fn nuclear_norm_basics() {
        assert!((nuclear_norm(&Mat::identity(2)) - 2.0).abs() < 1e-14);
        let u = [0.6, 0.8];
        let v = [1.0 / 2f64.sqrt(), 0.0, -1.0 / 2f64.sqrt()];
        let rank_one = Mat::from_fn(2, 3, |i, j| u[i] * v[j]);
        assert!((nuclear_norm(&rank_one) - 1.0).abs() < 1e-12);
        // PSD: nuclear norm equals trace.
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let a = random(4, 4, &mut rng);
        let psd = &a * &a.transpose();
        assert!((nuclear_norm(&psd) - psd.as_matrix().trace()).abs() < 1e-10);
    }

    #[test]
    fn svt_shrinks_diagonal() {
        let m = Mat::from_diagonal(&[3.0, 1.0]).unwrap();
        let out = svt(&m, 2.0);
        let expected = Mat::from_diagonal(&[1.0, 0.0]).unwrap();
        assert!((&out - &expected).frobenius_norm() < 1e-12);
        assert_eq!(out.rank(), 1);
    }

    #[test]
    fn svt_zero_threshold_is_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let m = random(5, 4, &mut rng);
        assert_eq!(svt(&m, 0.0), m);
    }

    #[test]
    fn svt_rank_counts_singulars_above_threshold() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let m = random(6, 5, &mut rng);
        let s = m.singular_values();
        for tau in [0.05, 0.3, 0.8, 1.5] {
            let expected = s.iter().filter(|&&v| v > tau).count();
            assert_eq!(svt(&m, tau).rank(), expected);
        }
        assert!(svt(&m, s[0] + 1e-9).is_zero());
    }

    #[test]
    fn soft_threshold_entrywise() {
        let m = Mat::from_rows(&[[2.0, -0.5], [0.0, 1.0]]).unwrap();
        let out = soft_threshold(&m, 1.0);
        assert_eq!(out, Mat::from_rows(&[[1.0, 0.0], [0.0, 0.0]]).unwrap());
        assert_eq!(soft_threshold(&m, 0.0), m);
        let neg = soft_threshold(&Mat::from_rows(&[[-3.0]]).unwrap(), 1.0);
        assert_eq!(neg.get(0, 0), -2.0);
    }

    #[test]
    fn spectral_norm_basics() {
        let d = Mat::from_diagonal(&[3.0, 1.0]).unwrap();
        assert!((spectral_norm(&d) - 3.0).abs() < 1e-12);
        assert_eq!(spectral_norm(&Mat::zeros(3, 2)), 0.0);
        // A start vector of all ones is orthogonal to this matrix's top right singular vector.
        let tricky = Mat::from_rows(&[[1.0, -1.0]]).unwrap();
        assert!((spectral_norm(&tricky) - 2f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn svd_factors_are_orthonormal_and_reconstruct() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for (p, q) in [(5, 3), (3, 5), (4, 4)] {
            let m = random(p, q, &mut rng);
            let f = m.svd();
            let r = f.singulars.len();
            let utu = f.left.tr_mul(&f.left);
            let vtv = f.right.tr_mul(&f.right);
            assert!((utu - DMatrix::identity(r, r)).norm() < 1e-10);
            assert!((vtv - DMatrix::identity(r, r)).norm() < 1e-10);
            assert!(f.singulars.windows(2).all(|w| w[0] >= w[1]));
            let err = (&f.recompose() - &m).frobenius_norm();
            assert!(err <= 1e-8 * (1.0 + m.frobenius_norm()));
        }
    }

    #[test]
    fn numerical_rank_threshold() {
        assert_eq!(numerical_rank(&[]), 0);
        assert_eq!(numerical_rank(&[0.0, 0.0]), 0);
        assert_eq!(numerical_rank(&[1.0, 1e-13]), 1);
        assert_eq!(numerical_rank(&[1.0, 1e-11]), 2);
    }
}
