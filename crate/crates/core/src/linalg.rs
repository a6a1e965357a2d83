//! Dense symmetric linear algebra used throughout the crate.
//!
//! Matrix functions (exponential, logarithm, square root) all go through a
//! symmetric eigendecomposition `A = Q diag(λ) Qᵀ`, so `expm_sym` and
//! `logm_spd` are exact inverses up to rounding. Everything here targets the
//! small dense regime (n ≤ ~10).

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Mat = DMatrix<f64>;

/// Relative asymmetry accepted before symmetrizing.
pub const SYMMETRY_TOL: f64 = 1e-8;

/// Eigendecomposition of a symmetric matrix with eigenvalues in ascending order.
#[derive(Debug, Clone)]
pub struct SymEig {
    pub q: Mat,
    pub lambda: DVector<f64>,
}

impl SymEig {
    /// Rebuild `Q diag(f(λ)) Qᵀ`.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> Mat {
        let d = DMatrix::from_diagonal(&self.lambda.map(f));
        let out = &self.q * d * self.q.transpose();
        symmetric_part(&out)
    }

    pub fn min(&self) -> f64 {
        self.lambda.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.lambda.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DefinitenessReport {
    pub min_eigenvalue: f64,
    pub is_psd: bool,
    pub is_pd: bool,
    pub tolerance_used: f64,
}

pub fn zeros(n: usize) -> Mat {
    DMatrix::zeros(n, n)
}

pub fn identity(n: usize) -> Mat {
    DMatrix::identity(n, n)
}

/// `(A + Aᵀ)/2`, no checks.
pub fn symmetric_part(a: &Mat) -> Mat {
    (a + a.transpose()) * 0.5
}

fn check_square_finite(a: &Mat) -> Result<()> {
    if !a.is_square() {
        return Err(Error::invalid(format!("expected a square matrix, got {}x{}", a.nrows(), a.ncols())));
    }
    if a.iter().any(|x| !x.is_finite()) {
        return Err(Error::invalid("matrix has non-finite entries"));
    }
    Ok(())
}

/// Symmetrize `a`, rejecting inputs whose asymmetry exceeds
/// `SYMMETRY_TOL * ‖a‖` or which contain non-finite entries.
pub fn symmetrize_checked(a: &Mat) -> Result<Mat> {
    check_square_finite(a)?;
    let skew = spectral_norm(&(a - a.transpose())) * 0.5;
    let scale = spectral_norm(a);
    if skew > SYMMETRY_TOL * scale.max(f64::MIN_POSITIVE) && skew > 0.0 {
        return Err(Error::invalid(format!("matrix is not symmetric (skew part norm {skew:e}, norm {scale:e})")));
    }
    Ok(symmetric_part(a))
}

pub fn sym_eig(a: &Mat) -> Result<SymEig> {
    let s = symmetrize_checked(a)?;
    Ok(sym_eig_unchecked(s))
}

pub(crate) fn sym_eig_unchecked(s: Mat) -> SymEig {
    let n = s.nrows();
    let eig = s.symmetric_eigen();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
    let lambda = DVector::from_iterator(n, order.iter().map(|&i| eig.eigenvalues[i]));
    let mut q = DMatrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        q.set_column(dst, &eig.eigenvectors.column(src));
    }
    SymEig { q, lambda }
}

pub fn expm_sym(a: &Mat) -> Result<Mat> {
    Ok(sym_eig(a)?.map(f64::exp))
}

/// Matrix logarithm of a symmetric positive definite matrix.
pub fn logm_spd(a: &Mat) -> Result<Mat> {
    let eig = sym_eig(a)?;
    let min = eig.min();
    if !(min > 0.0) {
        return Err(Error::Domain { min_eigenvalue: min });
    }
    Ok(eig.map(f64::ln))
}

/// Symmetric square root of a PSD matrix; eigenvalues below zero
/// (rounding noise) are clamped to zero.
pub fn sqrtm_psd(a: &Mat) -> Result<Mat> {
    let eig = sym_eig(a)?;
    let tol = default_tolerance(a);
    if eig.min() < -tol {
        return Err(Error::Domain { min_eigenvalue: eig.min() });
    }
    Ok(eig.map(|l| l.max(0.0).sqrt()))
}

/// Default definiteness tolerance `1e-9 * max(1, ‖a‖)`.
pub fn default_tolerance(a: &Mat) -> f64 {
    1e-9 * spectral_norm(a).max(1.0)
}

pub fn definiteness(a: &Mat, tol: f64) -> DefinitenessReport {
    let s = symmetric_part(a);
    let min_eigenvalue = if s.nrows() == 0 { f64::INFINITY } else { sym_eig_unchecked(s).min() };
    DefinitenessReport {
        min_eigenvalue,
        is_psd: min_eigenvalue > -tol,
        is_pd: min_eigenvalue > tol,
        tolerance_used: tol,
    }
}

pub fn definiteness_default(a: &Mat) -> DefinitenessReport {
    definiteness(a, default_tolerance(a))
}

/// Induced 2-norm (largest singular value).
pub fn spectral_norm(a: &Mat) -> f64 {
    if a.is_empty() {
        return 0.0;
    }
    if a.iter().all(|x| *x == 0.0) {
        return 0.0;
    }
    a.clone().svd(false, false).singular_values.iter().copied().fold(0.0, f64::max)
}

/// Column-major stacking `vec(A)`.
pub fn vec(a: &Mat) -> DVector<f64> {
    DVector::from_column_slice(a.as_slice())
}

/// Inverse of [`vec`] for an `n×n` matrix.
pub fn unvec(v: &[f64], n: usize) -> Mat {
    assert_eq!(v.len(), n * n, "unvec: length {} is not {}²", v.len(), n);
    DMatrix::from_column_slice(n, n, v)
}

/// The `n²×n²` permutation `P` with `P·vec(A) = vec(Aᵀ)` (commutation matrix).
pub fn transpose_permutation(n: usize) -> Mat {
    let mut p = DMatrix::zeros(n * n, n * n);
    // vec(A)[i + j n] = A[i, j];  vec(Aᵀ)[j + i n] = A[i, j]
    for i in 0..n {
        for j in 0..n {
            p[(j + i * n, i + j * n)] = 1.0;
        }
    }
    p
}

/// Solve `AᵀX + XA + Q = 0` through the Kronecker form.
pub fn solve_lyapunov(a: &Mat, q: &Mat) -> Result<Mat> {
    let n = a.nrows();
    let eye = identity(n);
    let at = a.transpose();
    let k = eye.kronecker(&at) + at.kronecker(&eye);
    let rhs = -vec(q);
    let x = k.lu().solve(&rhs).ok_or_else(|| Error::invalid("Lyapunov operator is singular"))?;
    Ok(symmetric_part(&unvec(x.as_slice(), n)))
}

/// Solve the Stein equation `X = Φ X Φᵀ + Σ`.
pub fn solve_stein(phi: &Mat, sigma: &Mat) -> Result<Mat> {
    let n = phi.nrows();
    let k = identity(n * n) - phi.kronecker(phi);
    let x = k
        .lu()
        .solve(&vec(sigma))
        .ok_or_else(|| Error::InvalidModel("Stein operator is singular (unit-modulus eigenvalue)".into()))?;
    Ok(symmetric_part(&unvec(x.as_slice(), n)))
}

/// Integer matrix power by repeated squaring.
pub fn mat_pow(a: &Mat, mut k: u32) -> Mat {
    let mut base = a.clone();
    let mut acc = identity(a.nrows());
    while k > 0 {
        if k & 1 == 1 {
            acc = &acc * &base;
        }
        k >>= 1;
        if k > 0 {
            base = &base * &base;
        }
    }
    acc
}

/// Row-major nested-array (de)serialization for `DMatrix<f64>`.
pub mod rowmajor {
    use super::Mat;
    use serde::{de::Error as _, Deserialize, Deserializer, Serialize, Serializer};

    pub fn to_rows(m: &Mat) -> Vec<Vec<f64>> {
        m.row_iter().map(|r| r.iter().copied().collect()).collect()
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Mat, String> {
        let nrows = rows.len();
        let ncols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != ncols) {
            return Err("ragged matrix rows".into());
        }
        Ok(Mat::from_fn(nrows, ncols, |i, j| rows[i][j]))
    }

    pub fn serialize<S: Serializer>(m: &Mat, s: S) -> Result<S::Ok, S::Error> {
        to_rows(m).serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Mat, D::Error> {
        let rows = Vec::<Vec<f64>>::deserialize(d)?;
        from_rows(&rows).map_err(D::Error::custom)
    }

    pub mod option {
        use super::*;

        pub fn serialize<S: Serializer>(m: &Option<Mat>, s: S) -> Result<S::Ok, S::Error> {
            m.as_ref().map(to_rows).serialize(s)
        }

        pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<Mat>, D::Error> {
            let rows = Option::<Vec<Vec<f64>>>::deserialize(d)?;
            rows.map(|r| from_rows(&r).map_err(D::Error::custom)).transpose()
        }
    }

    pub mod list {
        use super::*;

        pub fn serialize<S: Serializer>(ms: &[Mat], s: S) -> Result<S::Ok, S::Error> {
            ms.iter().map(to_rows).collect::<Vec<_>>().serialize(s)
        }

        pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<Mat>, D::Error> {
            let all = Vec::<Vec<Vec<f64>>>::deserialize(d)?;
            all.iter().map(|r| from_rows(r).map_err(D::Error::custom)).collect()
        }
    }
}
