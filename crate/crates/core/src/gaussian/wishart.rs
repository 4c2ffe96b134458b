//! Inverse-Wishart density and sampling.

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::{ChiSquared, Distribution, StandardNormal};
use statrs::function::gamma::ln_gamma;

use super::{chol_solve, CovMatrix, KernelError};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IwNorm {
    /// Include the normalizing constant.
    Full,
    /// Drop every term that does not depend on the covariance argument.
    Kernel,
}

fn ln_mv_gamma(d: usize, a: f64) -> f64 {
    let df = d as f64;
    df * (df - 1.0) / 4.0 * std::f64::consts::PI.ln()
        + (1..=d).map(|j| ln_gamma(a + (1.0 - j as f64) / 2.0)).sum::<f64>()
}

/// Inverse-Wishart law `W⁻¹(Ψ, ν)` with precomputed normalizer.
#[derive(Debug, Clone)]
pub struct InvWishart {
    scale: CovMatrix,
    dof: f64,
    log_norm: f64,
}

impl InvWishart {
    pub fn new(scale: CovMatrix, dof: f64) -> Result<Self, KernelError> {
        let d = scale.dim() as f64;
        if !(dof > d - 1.0) {
            return Err(KernelError::Param(format!("dof {dof} must exceed d - 1 = {}", d - 1.0)));
        }
        let log_norm =
            0.5 * dof * scale.log_det() - 0.5 * dof * d * std::f64::consts::LN_2 - ln_mv_gamma(scale.dim(), 0.5 * dof);
        Ok(InvWishart { scale, dof, log_norm })
    }

    pub fn scale(&self) -> &CovMatrix {
        &self.scale
    }

    pub fn dof(&self) -> f64 {
        self.dof
    }

    /// `-(ν + d + 1)/2 · log|Σ| − tr(Ψ Σ⁻¹)/2`
    pub fn log_kernel(&self, cov: &CovMatrix) -> Result<f64, KernelError> {
        let d = self.scale.dim();
        if cov.dim() != d {
            return Err(KernelError::Dimension { expected: d, found: cov.dim() });
        }
        let trace = chol_solve(cov.lower(), self.scale.matrix()).trace();
        Ok(-0.5 * (self.dof + d as f64 + 1.0) * cov.log_det() - 0.5 * trace)
    }

    pub fn logpdf(&self, cov: &CovMatrix) -> Result<f64, KernelError> {
        Ok(self.log_norm + self.log_kernel(cov)?)
    }

    /// `E[Σ] = Ψ / (ν − d − 1)`, defined for `ν > d + 1`.
    pub fn mean(&self) -> Option<DMatrix<f64>> {
        let denom = self.dof - self.scale.dim() as f64 - 1.0;
        (denom > 0.0).then(|| self.scale.matrix() / denom)
    }

    /// Bartlett draw of `W ~ Wishart(Ψ⁻¹, ν)`, returned as `W⁻¹`.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<CovMatrix, KernelError> {
        let d = self.scale.dim();
        let psi_inv = CovMatrix::new(self.scale.inverse())?;
        let l = psi_inv.lower();
        let mut a = DMatrix::zeros(d, d);
        for i in 0..d {
            let chi = ChiSquared::new(self.dof - i as f64).map_err(|e| KernelError::Param(e.to_string()))?;
            a[(i, i)] = chi.sample(rng).sqrt();
            for j in 0..i {
                a[(i, j)] = rng.sample(StandardNormal);
            }
        }
        let la = l * a;
        let w = &la * la.transpose();
        let w = CovMatrix::new((&w + w.transpose()) * 0.5)?;
        CovMatrix::new(w.inverse())
    }
}

pub fn inv_wishart_logpdf(cov: &CovMatrix, scale: &CovMatrix, dof: f64, norm: IwNorm) -> Result<f64, KernelError> {
    let iw = InvWishart::new(scale.clone(), dof)?;
    match norm {
        IwNorm::Full => iw.logpdf(cov),
        IwNorm::Kernel => iw.log_kernel(cov),
    }
}

/// `log p(a) − log p(b)` under `W⁻¹(scale, dof)`.
pub fn inv_wishart_log_ratio(a: &CovMatrix, b: &CovMatrix, scale: &CovMatrix, dof: f64) -> Result<f64, KernelError> {
    let iw = InvWishart::new(scale.clone(), dof)?;
    Ok(iw.log_kernel(a)? - iw.log_kernel(b)?)
}

pub fn inv_wishart_sample<R: Rng + ?Sized>(scale: &CovMatrix, dof: f64, rng: &mut R) -> Result<CovMatrix, KernelError> {
    InvWishart::new(scale.clone(), dof)?.sample(rng)
}
