//! Log-Cholesky coordinates for covariance matrices.
//!
//! `θ` lists the lower triangle of the Cholesky factor row by row,
//! `(0,0), (1,0), (1,1), (2,0), ...`, with diagonal entries replaced by their
//! logarithm. Every `θ ∈ R^{d(d+1)/2}` maps to an SPD matrix.

use nalgebra::DMatrix;

use super::{CovMatrix, KernelError};

pub fn tri_len(d: usize) -> usize {
    d * (d + 1) / 2
}

/// Position of `(i, j)`, `i >= j`, in `θ`.
#[inline]
pub fn tri_index(i: usize, j: usize) -> usize {
    debug_assert!(i >= j);
    i * (i + 1) / 2 + j
}

fn dim_for_len(len: usize) -> Option<usize> {
    (1..=64).find(|&d| tri_len(d) == len)
}

#[derive(Debug, Clone, PartialEq)]
pub struct LogCholVector(Vec<f64>);

impl LogCholVector {
    pub fn new(theta: Vec<f64>) -> Result<Self, KernelError> {
        if dim_for_len(theta.len()).is_none() {
            return Err(KernelError::Param(format!("length {} is not d(d+1)/2", theta.len())));
        }
        Ok(LogCholVector(theta))
    }

    pub fn zeros(d: usize) -> Self {
        LogCholVector(vec![0.0; tri_len(d)])
    }

    pub fn dim(&self) -> usize {
        dim_for_len(self.0.len()).expect("length checked at construction")
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }
}

pub fn log_chol_encode(cov: &CovMatrix) -> LogCholVector {
    let d = cov.dim();
    let l = cov.lower();
    let mut theta = vec![0.0; tri_len(d)];
    for i in 0..d {
        for j in 0..i {
            theta[tri_index(i, j)] = l[(i, j)];
        }
        theta[tri_index(i, i)] = l[(i, i)].ln();
    }
    LogCholVector(theta)
}

pub fn log_chol_decode(theta: &LogCholVector) -> Result<CovMatrix, KernelError> {
    if theta.0.iter().any(|v| !v.is_finite()) {
        return Err(KernelError::Param("non-finite log-Cholesky entry".into()));
    }
    let d = theta.dim();
    let lower = DMatrix::from_fn(d, d, |i, j| match i.cmp(&j) {
        std::cmp::Ordering::Greater => theta.0[tri_index(i, j)],
        std::cmp::Ordering::Equal => theta.0[tri_index(i, i)].exp(),
        std::cmp::Ordering::Less => 0.0,
    });
    CovMatrix::from_lower_factor(lower)
}

fn check_len(theta: &LogCholVector, d: usize) -> Result<(), KernelError> {
    if theta.0.len() != tri_len(d) {
        return Err(KernelError::Dimension { expected: tri_len(d), found: theta.0.len() });
    }
    Ok(())
}

/// `Σ_i (d − i + 2) θ_ii` (1-based `i`), the correction used in MH targets.
///
/// This omits the constant `d ln 2` of the full determinant, which cancels
/// in every acceptance ratio; see [`log_chol_log_jacobian_exact`].
pub fn log_chol_log_jacobian(theta: &LogCholVector, d: usize) -> Result<f64, KernelError> {
    check_len(theta, d)?;
    Ok((0..d).map(|i| (d - i + 1) as f64 * theta.0[tri_index(i, i)]).sum())
}

/// Full `log |det ∂vech(Σ)/∂θ|`, i.e. [`log_chol_log_jacobian`] plus `d ln 2`.
pub fn log_chol_log_jacobian_exact(theta: &LogCholVector, d: usize) -> Result<f64, KernelError> {
    Ok(log_chol_log_jacobian(theta, d)? + d as f64 * std::f64::consts::LN_2)
}
