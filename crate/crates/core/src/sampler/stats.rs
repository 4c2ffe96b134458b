//! Joint log-likelihood of a labelled dataset, and the per-pattern
//! sufficient statistics that make repeated evaluation cheap inside
//! Metropolis loops.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};

use super::SamplerError;
use crate::data::{Mask, MaskedDataset, MaskedSample};
use crate::gaussian::{chol_solve, CovMatrix, FactorCache, KernelError, MaskedFactor};

fn check_labels(n: usize, z: &[usize], k: usize) -> Result<(), SamplerError> {
    if z.len() != n {
        return Err(SamplerError::Config(format!("{} labels for {n} rows", z.len())));
    }
    match z.iter().position(|&label| label >= k) {
        Some(row) => Err(SamplerError::Labels { row, label: z[row], k }),
        None => Ok(()),
    }
}

/// `Σ_i log φ(x_i^(o); μ_{z_i}^(o), Σ_oo)`, evaluated row by row.
pub fn joint_loglik(
    data: &MaskedDataset,
    z: &[usize],
    centers: &[Vec<f64>],
    sigma: &CovMatrix,
) -> Result<f64, SamplerError> {
    check_labels(data.len(), z, centers.len())?;
    let mut cache = FactorCache::new();
    let mut total = 0.0;
    for (row, &k) in data.rows().iter().zip(z) {
        total += cache.get(sigma, row.mask())?.logpdf(row.project(), &centers[k]);
    }
    Ok(total)
}

/// Same value as [`joint_loglik`], from precomputed scatter.
pub fn joint_loglik_fast(stats: &ScatterStats, sigma: &CovMatrix) -> Result<f64, SamplerError> {
    stats.loglik(sigma)
}

#[derive(Debug, Clone)]
struct Block {
    mask: Mask,
    observed: Vec<usize>,
    n: usize,
    scatter: DMatrix<f64>,
}

/// Residual scatter `Σ (x_o − μ_o)(x_o − μ_o)ᵀ` and row count per pattern,
/// residuals taken around each row's own center. With centers and labels
/// held fixed this determines the likelihood as a function of `Σ`.
#[derive(Debug, Clone)]
pub struct ScatterStats {
    d: usize,
    blocks: Vec<Block>,
}

impl ScatterStats {
    pub fn empty(d: usize) -> Self {
        ScatterStats { d, blocks: Vec::new() }
    }

    pub fn collect(data: &MaskedDataset, z: &[usize], centers: &[Vec<f64>]) -> Result<Self, SamplerError> {
        check_labels(data.len(), z, centers.len())?;
        let mut map: BTreeMap<Mask, Block> = BTreeMap::new();
        let mut r = Vec::with_capacity(data.dim());
        for (row, &k) in data.rows().iter().zip(z) {
            let mask = row.mask();
            let b = map.entry(mask).or_insert_with(|| {
                let observed = mask.observed_indices();
                let m = observed.len();
                Block { mask, observed, n: 0, scatter: DMatrix::zeros(m, m) }
            });
            let center = &centers[k];
            r.clear();
            r.extend(row.project().iter().zip(&b.observed).map(|(x, &j)| x - center[j]));
            b.n += 1;
            let m = r.len();
            for a in 0..m {
                for c in 0..=a {
                    b.scatter[(a, c)] += r[a] * r[c];
                }
            }
        }
        let blocks = map
            .into_values()
            .map(|mut b| {
                b.scatter.fill_upper_triangle_with_lower_triangle();
                b
            })
            .collect();
        Ok(ScatterStats { d: data.dim(), blocks })
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn n_rows(&self) -> usize {
        self.blocks.iter().map(|b| b.n).sum()
    }

    /// `Σ_m [n_m log_norm_m − tr(Σ_m⁻¹ S_m)/2]`
    pub fn loglik(&self, sigma: &CovMatrix) -> Result<f64, SamplerError> {
        if sigma.dim() != self.d {
            return Err(KernelError::Dimension { expected: self.d, found: sigma.dim() }.into());
        }
        let mut total = 0.0;
        for b in &self.blocks {
            let f = MaskedFactor::new(sigma, b.mask)?;
            total += b.n as f64 * f.log_norm() - 0.5 * chol_solve(f.lower(), &b.scatter).trace();
        }
        Ok(total)
    }
}

/// Log-likelihood of one cluster's rows as a function of its center,
/// `c − μᵀAμ/2 + bᵀμ`, for a fixed covariance.
#[derive(Debug, Clone)]
pub struct ClusterQuad {
    a: DMatrix<f64>,
    b: DVector<f64>,
    c: f64,
    n: usize,
}

struct QuadBlock {
    observed: Vec<usize>,
    n: usize,
    sum: DVector<f64>,
    outer: DMatrix<f64>,
}

impl ClusterQuad {
    pub fn from_rows<'a>(
        rows: impl IntoIterator<Item = &'a MaskedSample>,
        sigma: &CovMatrix,
    ) -> Result<Self, SamplerError> {
        let d = sigma.dim();
        let mut map: BTreeMap<Mask, QuadBlock> = BTreeMap::new();
        for row in rows {
            if row.dim() != d {
                return Err(KernelError::Dimension { expected: d, found: row.dim() }.into());
            }
            let mask = row.mask();
            let q = map.entry(mask).or_insert_with(|| {
                let observed = mask.observed_indices();
                let m = observed.len();
                QuadBlock { observed, n: 0, sum: DVector::zeros(m), outer: DMatrix::zeros(m, m) }
            });
            let x = row.project();
            q.n += 1;
            for a in 0..x.len() {
                q.sum[a] += x[a];
                for c in 0..x.len() {
                    q.outer[(a, c)] += x[a] * x[c];
                }
            }
        }
        let mut a = DMatrix::zeros(d, d);
        let mut b = DVector::zeros(d);
        let mut c = 0.0;
        let mut n = 0;
        for (mask, q) in map {
            let f = MaskedFactor::new(sigma, mask)?;
            let p = f.precision();
            let ps = &p * &q.sum;
            let nf = q.n as f64;
            for (i, &oi) in q.observed.iter().enumerate() {
                b[oi] += ps[i];
                for (j, &oj) in q.observed.iter().enumerate() {
                    a[(oi, oj)] += nf * p[(i, j)];
                }
            }
            c += nf * f.log_norm() - 0.5 * p.component_mul(&q.outer).sum();
            n += q.n;
        }
        Ok(ClusterQuad { a, b, c, n })
    }

    pub fn n_rows(&self) -> usize {
        self.n
    }

    /// Summed observed-block precision `A`.
    pub fn precision(&self) -> &DMatrix<f64> {
        &self.a
    }

    /// Linear coefficient `b`.
    pub fn linear(&self) -> &DVector<f64> {
        &self.b
    }

    pub fn loglik(&self, mu: &[f64]) -> f64 {
        let d = self.b.len();
        let mut quad = 0.0;
        let mut lin = 0.0;
        for i in 0..d {
            lin += self.b[i] * mu[i];
            let mut row = 0.0;
            for j in 0..d {
                row += self.a[(i, j)] * mu[j];
            }
            quad += mu[i] * row;
        }
        self.c - 0.5 * quad + lin
    }
}
