//! Gaussian kernels on masked sub-blocks.
//!
//! Everything the samplers evaluate goes through [`MaskedFactor`]: the
//! Cholesky factor of the principal sub-matrix of a covariance selected by a
//! row's observed coordinates. Factors are keyed by the covariance's version
//! stamp and the mask in [`FactorCache`].

mod logchol;
mod wishart;

pub use logchol::{
    log_chol_decode, log_chol_encode, log_chol_log_jacobian, log_chol_log_jacobian_exact, tri_index, tri_len,
    LogCholVector,
};
pub use wishart::{inv_wishart_log_ratio, inv_wishart_logpdf, inv_wishart_sample, InvWishart, IwNorm};

use std::collections::HashMap;
use std::sync::atomic::{AtomicU64, Ordering};

use nalgebra::{Cholesky, DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use thiserror::Error;

use crate::data::Mask;

pub(crate) const LN_2PI: f64 = 1.837_877_066_409_345_3;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum KernelError {
    #[error("matrix is not symmetric positive definite: {0}")]
    NotSpd(String),
    #[error("dimension mismatch: expected {expected}, found {found}")]
    Dimension { expected: usize, found: usize },
    #[error("domain error: {0}")]
    Domain(String),
    #[error("invalid parameter: {0}")]
    Param(String),
}

/// Solves `L Lᵀ X = B` given the lower factor `L`.
pub(crate) fn chol_solve(lower: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    let y = lower.solve_lower_triangular(b).expect("factor has positive diagonal");
    lower.transpose().solve_upper_triangular(&y).expect("factor has positive diagonal")
}

static NEXT_STAMP: AtomicU64 = AtomicU64::new(1);

fn next_stamp() -> u64 {
    NEXT_STAMP.fetch_add(1, Ordering::Relaxed)
}

/// Cholesky with a single diagonal jitter of `1e-10 * trace / d` on failure.
fn factorize(m: &DMatrix<f64>) -> Result<(DMatrix<f64>, DMatrix<f64>), KernelError> {
    if let Some(c) = Cholesky::new(m.clone()) {
        return Ok((m.clone(), c.unpack()));
    }
    let d = m.nrows();
    let jitter = 1e-10 * m.trace() / d as f64;
    if !(jitter > 0.0) {
        return Err(KernelError::NotSpd("non-positive trace".into()));
    }
    let jittered = m + DMatrix::identity(d, d) * jitter;
    Cholesky::new(jittered.clone())
        .map(|c| (jittered, c.unpack()))
        .ok_or_else(|| KernelError::NotSpd("Cholesky failed after jitter".into()))
}

/// Symmetric positive definite matrix with its lower Cholesky factor.
#[derive(Debug, Clone)]
pub struct CovMatrix {
    matrix: DMatrix<f64>,
    lower: DMatrix<f64>,
    stamp: u64,
}

impl PartialEq for CovMatrix {
    fn eq(&self, other: &Self) -> bool {
        self.matrix == other.matrix
    }
}

impl CovMatrix {
    pub fn new(matrix: DMatrix<f64>) -> Result<Self, KernelError> {
        let d = matrix.nrows();
        if d == 0 || matrix.ncols() != d {
            return Err(KernelError::Dimension { expected: d, found: matrix.ncols() });
        }
        if matrix.iter().any(|v| !v.is_finite()) {
            return Err(KernelError::NotSpd("non-finite entry".into()));
        }
        let scale = matrix.amax().max(f64::MIN_POSITIVE);
        for i in 0..d {
            for j in 0..i {
                if (matrix[(i, j)] - matrix[(j, i)]).abs() > 1e-12 * scale {
                    return Err(KernelError::NotSpd(format!("asymmetric at ({i},{j})")));
                }
            }
        }
        let sym = (&matrix + matrix.transpose()) * 0.5;
        let (matrix, lower) = factorize(&sym)?;
        Ok(CovMatrix { matrix, lower, stamp: next_stamp() })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self, KernelError> {
        let d = rows.len();
        if let Some(r) = rows.iter().find(|r| r.len() != d) {
            return Err(KernelError::Dimension { expected: d, found: r.len() });
        }
        Self::new(DMatrix::from_fn(d, d, |i, j| rows[i][j]))
    }

    /// `L Lᵀ` for a lower-triangular `L` with positive diagonal.
    pub fn from_lower_factor(lower: DMatrix<f64>) -> Result<Self, KernelError> {
        let d = lower.nrows();
        if lower.ncols() != d || (0..d).any(|i| !(lower[(i, i)] > 0.0)) {
            return Err(KernelError::NotSpd("factor must be square with positive diagonal".into()));
        }
        let lower = lower.lower_triangle();
        let mut m = &lower * lower.transpose();
        for i in 0..d {
            for j in 0..i {
                m[(j, i)] = m[(i, j)];
            }
        }
        Ok(CovMatrix { matrix: m, lower, stamp: next_stamp() })
    }

    pub fn identity(d: usize) -> Self {
        Self::new(DMatrix::identity(d, d)).expect("identity is SPD")
    }

    pub fn diagonal(diag: &[f64]) -> Result<Self, KernelError> {
        Self::new(DMatrix::from_diagonal(&DVector::from_column_slice(diag)))
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn lower(&self) -> &DMatrix<f64> {
        &self.lower
    }

    /// Identifies this exact matrix value for caching.
    pub fn stamp(&self) -> u64 {
        self.stamp
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.matrix[(i, j)]
    }

    pub fn log_det(&self) -> f64 {
        2.0 * (0..self.dim()).map(|i| self.lower[(i, i)].ln()).sum::<f64>()
    }

    pub fn inverse(&self) -> DMatrix<f64> {
        chol_solve(&self.lower, &DMatrix::identity(self.dim(), self.dim()))
    }

    pub fn eigenvalues_ascending(&self) -> Vec<f64> {
        let mut ev: Vec<f64> = self.matrix.clone().symmetric_eigenvalues().iter().copied().collect();
        ev.sort_by(f64::total_cmp);
        ev
    }

    pub fn sub_block(&self, idx: &[usize]) -> DMatrix<f64> {
        DMatrix::from_fn(idx.len(), idx.len(), |a, b| self.matrix[(idx[a], idx[b])])
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        (0..self.dim()).map(|i| self.matrix.row(i).iter().copied().collect()).collect()
    }

    /// `self + c * I`.
    pub fn add_identity(&self, c: f64) -> Result<Self, KernelError> {
        Self::new(&self.matrix + DMatrix::identity(self.dim(), self.dim()) * c)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GaussParams {
    pub mean: Vec<f64>,
    pub cov: CovMatrix,
}

impl GaussParams {
    pub fn new(mean: Vec<f64>, cov: CovMatrix) -> Result<Self, KernelError> {
        if mean.len() != cov.dim() {
            return Err(KernelError::Dimension { expected: cov.dim(), found: mean.len() });
        }
        Ok(GaussParams { mean, cov })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }
}

/// Cholesky factor of the observed sub-block of a covariance.
#[derive(Debug, Clone)]
pub struct MaskedFactor {
    observed: Vec<usize>,
    lower: DMatrix<f64>,
    /// `-(d_o log 2π + log det Σ_oo) / 2`
    log_norm: f64,
}

impl MaskedFactor {
    pub fn new(cov: &CovMatrix, mask: Mask) -> Result<Self, KernelError> {
        if mask.dim() != cov.dim() {
            return Err(KernelError::Dimension { expected: cov.dim(), found: mask.dim() });
        }
        if mask.is_empty_pattern() {
            return Err(KernelError::Domain("no observed coordinates".into()));
        }
        let observed = mask.observed_indices();
        let lower = if mask.is_complete() { cov.lower.clone() } else { factorize(&cov.sub_block(&observed))?.1 };
        let log_det = 2.0 * (0..observed.len()).map(|i| lower[(i, i)].ln()).sum::<f64>();
        let log_norm = -0.5 * (observed.len() as f64 * LN_2PI + log_det);
        Ok(MaskedFactor { observed, lower, log_norm })
    }

    pub fn observed(&self) -> &[usize] {
        &self.observed
    }

    pub fn n_observed(&self) -> usize {
        self.observed.len()
    }

    pub fn lower(&self) -> &DMatrix<f64> {
        &self.lower
    }

    /// `-(d_o log 2π + log det Σ_oo) / 2`
    pub fn log_norm(&self) -> f64 {
        self.log_norm
    }

    /// `(x - μ_o)ᵀ Σ_oo⁻¹ (x - μ_o)` where `mean` is the full-length mean.
    #[inline]
    pub fn mahalanobis(&self, x_obs: &[f64], mean: &[f64]) -> f64 {
        let n = self.observed.len();
        debug_assert_eq!(x_obs.len(), n);
        let mut z = [0.0f64; 16];
        let mut heap;
        let z: &mut [f64] = if n <= 16 {
            &mut z[..n]
        } else {
            heap = vec![0.0; n];
            &mut heap
        };
        let mut q = 0.0;
        for i in 0..n {
            let mut r = x_obs[i] - mean[self.observed[i]];
            for j in 0..i {
                r -= self.lower[(i, j)] * z[j];
            }
            z[i] = r / self.lower[(i, i)];
            q += z[i] * z[i];
        }
        q
    }

    #[inline]
    pub fn logpdf(&self, x_obs: &[f64], mean: &[f64]) -> f64 {
        self.log_norm - 0.5 * self.mahalanobis(x_obs, mean)
    }

    /// Σ_oo⁻¹
    pub fn precision(&self) -> DMatrix<f64> {
        let n = self.n_observed();
        chol_solve(&self.lower, &DMatrix::identity(n, n))
    }
}

/// Per-worker cache of observed-block factors for one covariance at a time.
#[derive(Debug, Default)]
pub struct FactorCache {
    stamp: Option<u64>,
    factors: HashMap<Mask, MaskedFactor>,
}

impl FactorCache {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn get(&mut self, cov: &CovMatrix, mask: Mask) -> Result<&MaskedFactor, KernelError> {
        if self.stamp != Some(cov.stamp()) {
            self.factors.clear();
            self.stamp = Some(cov.stamp());
        }
        if !self.factors.contains_key(&mask) {
            self.factors.insert(mask, MaskedFactor::new(cov, mask)?);
        }
        Ok(&self.factors[&mask])
    }

    pub fn len(&self) -> usize {
        self.factors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.factors.is_empty()
    }
}

fn check_obs_len(x_obs: &[f64], mask: Mask) -> Result<(), KernelError> {
    if x_obs.len() != mask.n_observed() {
        return Err(KernelError::Dimension { expected: mask.n_observed(), found: x_obs.len() });
    }
    Ok(())
}

/// Log-density of the observed coordinates under `params` restricted to them.
pub fn marginal_logpdf(x_obs: &[f64], mask: Mask, params: &GaussParams) -> Result<f64, KernelError> {
    check_obs_len(x_obs, mask)?;
    Ok(MaskedFactor::new(&params.cov, mask)?.logpdf(x_obs, &params.mean))
}

/// Law of the missing block given the observed one.
pub fn conditional_params(x_obs: &[f64], mask: Mask, params: &GaussParams) -> Result<GaussParams, KernelError> {
    check_obs_len(x_obs, mask)?;
    if mask.is_complete() || mask.is_empty_pattern() {
        return Err(KernelError::Domain("need at least one observed and one missing coordinate".into()));
    }
    let obs = mask.observed_indices();
    let mis = mask.missing_indices();
    let s = params.cov.matrix();
    let s_oo = params.cov.sub_block(&obs);
    let s_mo = DMatrix::from_fn(mis.len(), obs.len(), |a, b| s[(mis[a], obs[b])]);
    let s_mm = params.cov.sub_block(&mis);
    let chol = Cholesky::new(s_oo).ok_or_else(|| KernelError::NotSpd("observed block".into()))?;
    let resid = DVector::from_iterator(obs.len(), obs.iter().zip(x_obs).map(|(&j, x)| x - params.mean[j]));
    // Σ_oo⁻¹ Σ_om
    let gain_t = chol.solve(&s_mo.transpose());
    let mean: Vec<f64> = mis.iter().enumerate().map(|(a, &j)| params.mean[j] + gain_t.column(a).dot(&resid)).collect();
    let cov = s_mm - &s_mo * gain_t;
    GaussParams::new(mean, CovMatrix::new(cov)?)
}

/// Weighted Gaussian atoms sharing one covariance.
#[derive(Debug, Clone, PartialEq)]
pub struct SharedMixture {
    weights: Vec<f64>,
    means: Vec<Vec<f64>>,
    cov: CovMatrix,
}

impl SharedMixture {
    pub fn new(weights: Vec<f64>, means: Vec<Vec<f64>>, cov: CovMatrix) -> Result<Self, KernelError> {
        if weights.is_empty() {
            return Err(KernelError::Param("empty atom list".into()));
        }
        if weights.len() != means.len() {
            return Err(KernelError::Dimension { expected: weights.len(), found: means.len() });
        }
        if let Some(m) = means.iter().find(|m| m.len() != cov.dim()) {
            return Err(KernelError::Dimension { expected: cov.dim(), found: m.len() });
        }
        let total: f64 = weights.iter().sum();
        if weights.iter().any(|w| !(*w >= 0.0)) || (total - 1.0).abs() > 1e-9 {
            return Err(KernelError::Param(format!("weights are not a simplex (sum {total})")));
        }
        Ok(SharedMixture { weights, means, cov })
    }

    pub fn single(params: GaussParams) -> Self {
        SharedMixture { weights: vec![1.0], means: vec![params.mean], cov: params.cov }
    }

    pub fn dim(&self) -> usize {
        self.cov.dim()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn means(&self) -> &[Vec<f64>] {
        &self.means
    }

    pub fn cov(&self) -> &CovMatrix {
        &self.cov
    }

    pub fn marginal_logpdf_with(&self, factor: &MaskedFactor, x_obs: &[f64]) -> f64 {
        log_sum_exp(
            self.weights
                .iter()
                .zip(&self.means)
                .filter(|(w, _)| **w > 0.0)
                .map(|(w, m)| w.ln() + factor.logpdf(x_obs, m)),
        )
    }

    pub fn logpdf(&self, x: &[f64]) -> f64 {
        let factor = MaskedFactor::new(&self.cov, Mask::all_observed(self.dim())).expect("complete mask");
        self.marginal_logpdf_with(&factor, x)
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let u: f64 = rng.random();
        let k = categorical_index(&self.weights, u);
        mvn_sample_lower(&self.means[k], &self.cov.lower, rng)
    }

    /// Overall mean and covariance of the mixture.
    pub fn moments(&self) -> (Vec<f64>, DMatrix<f64>) {
        let d = self.dim();
        let mut mean = vec![0.0; d];
        for (w, m) in self.weights.iter().zip(&self.means) {
            for j in 0..d {
                mean[j] += w * m[j];
            }
        }
        let mut cov = self.cov.matrix().clone();
        for (w, m) in self.weights.iter().zip(&self.means) {
            for a in 0..d {
                for b in 0..d {
                    cov[(a, b)] += w * (m[a] - mean[a]) * (m[b] - mean[b]);
                }
            }
        }
        (mean, cov)
    }
}

/// `log Σ_k w_k φ(x_obs; μ_k, Σ)` over the observed block.
pub fn mixture_marginal_logpdf(x_obs: &[f64], mask: Mask, atoms: &SharedMixture) -> Result<f64, KernelError> {
    check_obs_len(x_obs, mask)?;
    let factor = MaskedFactor::new(&atoms.cov, mask)?;
    Ok(atoms.marginal_logpdf_with(&factor, x_obs))
}

pub fn log_sum_exp(terms: impl Iterator<Item = f64>) -> f64 {
    let terms: Vec<f64> = terms.collect();
    let max = terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY || !max.is_finite() {
        return max;
    }
    max + terms.iter().map(|t| (t - max).exp()).sum::<f64>().ln()
}

/// Inverse-CDF draw over unnormalized nonnegative weights, in index order.
pub fn categorical_index(weights: &[f64], u: f64) -> usize {
    let total: f64 = weights.iter().sum();
    let target = u * total;
    let mut acc = 0.0;
    let mut last_positive = 0;
    for (k, w) in weights.iter().enumerate() {
        if *w > 0.0 {
            last_positive = k;
        }
        acc += w;
        if target < acc {
            return k;
        }
    }
    last_positive
}

pub(crate) fn mvn_sample_lower<R: Rng + ?Sized>(mean: &[f64], lower: &DMatrix<f64>, rng: &mut R) -> Vec<f64> {
    let d = mean.len();
    let z: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
    (0..d).map(|i| mean[i] + (0..=i).map(|j| lower[(i, j)] * z[j]).sum::<f64>()).collect()
}

pub fn mvn_sample<R: Rng + ?Sized>(params: &GaussParams, rng: &mut R) -> Vec<f64> {
    mvn_sample_lower(&params.mean, params.cov.lower(), rng)
}

pub fn mvn_logpdf(x: &[f64], params: &GaussParams) -> Result<f64, KernelError> {
    marginal_logpdf(x, Mask::all_observed(params.dim()), params)
}
