//! Dense symmetric/SPD matrix helpers shared by the divergence and
//! augmentation code.
//!
//! Matrix log/exp are taken through the symmetric eigendecomposition (for an
//! SPD matrix this coincides with its SVD), so `sym_exp` of a symmetric
//! matrix is SPD by construction. Linear systems go through Cholesky solves;
//! nothing in this crate forms an inverse by Gaussian elimination.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum LinalgError {
    #[error("symmetric eigensolver did not converge")]
    EigenNonConvergence,
    #[error("matrix log undefined: eigenvalue {0} is not positive")]
    NonPositiveEigenvalue(f64),
    #[error("matrix is not symmetric positive definite")]
    NotSpd,
}

/// (M + Mᵀ)/2.
pub fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

pub fn is_symmetric(m: &DMatrix<f64>, tol: f64) -> bool {
    if m.nrows() != m.ncols() {
        return false;
    }
    for i in 0..m.nrows() {
        for j in (i + 1)..m.ncols() {
            if (m[(i, j)] - m[(j, i)]).abs() > tol {
                return false;
            }
        }
    }
    true
}

/// Eigendecomposition of a symmetric matrix, pairs unsorted.
pub fn sym_eigen(m: &DMatrix<f64>) -> Result<(DVector<f64>, DMatrix<f64>), LinalgError> {
    let eig = m
        .clone()
        .try_symmetric_eigen(f64::EPSILON, 0)
        .ok_or(LinalgError::EigenNonConvergence)?;
    Ok((eig.eigenvalues, eig.eigenvectors))
}

fn eigen_map(
    m: &DMatrix<f64>,
    f: impl Fn(f64) -> Result<f64, LinalgError>,
) -> Result<DMatrix<f64>, LinalgError> {
    let (vals, vecs) = sym_eigen(m)?;
    let mut mapped = DVector::zeros(vals.len());
    for (i, &v) in vals.iter().enumerate() {
        mapped[i] = f(v)?;
    }
    let out = &vecs * DMatrix::from_diagonal(&mapped) * vecs.transpose();
    Ok(symmetrize(&out))
}

/// Matrix logarithm of an SPD matrix: V (log Λ) Vᵀ.
pub fn spd_log(m: &DMatrix<f64>) -> Result<DMatrix<f64>, LinalgError> {
    eigen_map(m, |v| {
        if v <= 0.0 {
            Err(LinalgError::NonPositiveEigenvalue(v))
        } else {
            Ok(v.ln())
        }
    })
}

/// Matrix exponential of a symmetric matrix: V (exp Λ) Vᵀ. Result is SPD.
pub fn sym_exp(m: &DMatrix<f64>) -> Result<DMatrix<f64>, LinalgError> {
    eigen_map(m, |v| Ok(v.exp()))
}

/// [`sym_exp`] with the result spectrum clamped to `[min_eigenvalue,
/// max_eigenvalue]`, projecting repeated multiplicative updates onto a
/// compact SPD domain.
pub fn sym_exp_clamped(
    m: &DMatrix<f64>,
    min_eigenvalue: f64,
    max_eigenvalue: f64,
) -> Result<DMatrix<f64>, LinalgError> {
    eigen_map(m, |v| Ok(v.exp().clamp(min_eigenvalue, max_eigenvalue)))
}

pub fn min_eigenvalue(m: &DMatrix<f64>) -> Result<f64, LinalgError> {
    let (vals, _) = sym_eigen(m)?;
    Ok(vals.iter().copied().fold(f64::INFINITY, f64::min))
}

/// Cholesky factorization; `None` when the matrix is not positive definite.
pub fn spd_cholesky(m: &DMatrix<f64>) -> Option<Cholesky<f64, Dyn>> {
    Cholesky::new(m.clone())
}

/// log |Σ| from the Cholesky factor of Σ.
pub fn cholesky_log_det(chol: &Cholesky<f64, Dyn>) -> f64 {
    chol.l().diagonal().iter().map(|d| 2.0 * d.ln()).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn random_spd(dim: usize, seed: u64) -> DMatrix<f64> {
        use rand::Rng;
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let a = DMatrix::from_fn(dim, dim, |_, _| rng.random::<f64>() - 0.5);
        &a * a.transpose() + DMatrix::identity(dim, dim) * 0.5
    }

    #[test]
    fn log_exp_round_trip() {
        for seed in 0..5 {
            let m = random_spd(4, seed);
            let back = sym_exp(&spd_log(&m).unwrap()).unwrap();
            assert_relative_eq!(m, back, epsilon = 1e-10);
        }
    }

    #[test]
    fn exp_of_symmetric_is_spd() {
        let s = DMatrix::from_row_slice(2, 2, &[0.0, 3.0, 3.0, -1.0]);
        let e = sym_exp(&s).unwrap();
        assert!(min_eigenvalue(&e).unwrap() > 0.0);
        assert!(is_symmetric(&e, 1e-12));
    }

    #[test]
    fn log_rejects_indefinite() {
        let s = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -2.0]);
        assert!(matches!(
            spd_log(&s),
            Err(LinalgError::NonPositiveEigenvalue(_))
        ));
    }

    #[test]
    fn log_det_matches_eigenvalues() {
        let m = random_spd(3, 11);
        let chol = spd_cholesky(&m).unwrap();
        let (vals, _) = sym_eigen(&m).unwrap();
        let expected: f64 = vals.iter().map(|v| v.ln()).sum();
        assert_relative_eq!(cholesky_log_det(&chol), expected, epsilon = 1e-10);
    }
}
