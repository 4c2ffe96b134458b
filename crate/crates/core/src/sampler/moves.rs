//! The moves that make up one sweep.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use super::stats::{ClusterQuad, ScatterStats};
use super::{JacobianTerm, MixtureState, NewClusterWeight, PriorHyper, SamplerConfig, SamplerError};
use crate::data::{MaskedDataset, MaskedSample};
use crate::gaussian::{
    categorical_index, log_chol_decode, log_chol_encode, log_chol_log_jacobian, mvn_sample_lower, CovMatrix,
    FactorCache, InvWishart, LogCholVector, MaskedFactor,
};

/// Accepted and proposed counts of a Metropolis run.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct MhStats {
    pub accepted: usize,
    pub proposed: usize,
}

impl MhStats {
    pub fn rate(&self) -> Option<f64> {
        (self.proposed > 0).then(|| self.accepted as f64 / self.proposed as f64)
    }

    pub fn merge(&mut self, other: MhStats) {
        self.accepted += other.accepted;
        self.proposed += other.proposed;
    }
}

/// Max-shifted exponentials of `logw` into `w`. `-inf` entries get weight 0.
/// Returns `false` when no entry is finite.
fn softmax_into(logw: &[f64], w: &mut Vec<f64>) -> bool {
    let max = logw.iter().copied().filter(|v| v.is_finite()).fold(f64::NEG_INFINITY, f64::max);
    w.clear();
    if !max.is_finite() {
        return false;
    }
    w.extend(logw.iter().map(|&l| if l.is_finite() { (l - max).exp() } else { 0.0 }));
    true
}

/// Draw from the posterior of a center under `N(μ0, τ0² I)` given one row.
fn draw_center_given_row<R: Rng + ?Sized>(
    factor: &MaskedFactor,
    x_obs: &[f64],
    prior: &PriorHyper,
    rng: &mut R,
) -> Result<Vec<f64>, SamplerError> {
    let d = prior.dim();
    let inv_tau2 = 1.0 / (prior.tau0 * prior.tau0);
    let p = factor.precision();
    let px = &p * DVector::from_column_slice(x_obs);
    let mut lambda = DMatrix::identity(d, d) * inv_tau2;
    let mut h = DVector::from_iterator(d, prior.mu0.iter().map(|m| m * inv_tau2));
    for (i, &oi) in factor.observed().iter().enumerate() {
        h[oi] += px[i];
        for (j, &oj) in factor.observed().iter().enumerate() {
            lambda[(oi, oj)] += p[(i, j)];
        }
    }
    let cov = CovMatrix::new(CovMatrix::new(lambda)?.inverse())?;
    let mean = cov.matrix() * h;
    Ok(mvn_sample_lower(mean.as_slice(), cov.lower(), rng))
}

struct RowScorer {
    predictive: CovMatrix,
    log_alpha: f64,
    cache: FactorCache,
    pred_cache: FactorCache,
    logw: Vec<f64>,
}

impl RowScorer {
    fn new(sigma: &CovMatrix, prior: &PriorHyper) -> Result<Self, SamplerError> {
        Ok(RowScorer {
            predictive: sigma.add_identity(prior.tau0 * prior.tau0)?,
            log_alpha: prior.alpha.ln(),
            cache: FactorCache::new(),
            pred_cache: FactorCache::new(),
            logw: Vec::new(),
        })
    }

    /// Fills `w` with unnormalized weights for every existing cluster and,
    /// last, a new one. `counts` must already exclude the row. Under the
    /// single-draw rule the candidate center is returned.
    #[allow(clippy::too_many_arguments)]
    fn score<R: Rng + ?Sized>(
        &mut self,
        row: &MaskedSample,
        index: usize,
        counts: &[usize],
        state: &MixtureState,
        prior: &PriorHyper,
        rule: NewClusterWeight,
        rng: &mut R,
        w: &mut Vec<f64>,
    ) -> Result<Option<Vec<f64>>, SamplerError> {
        let x = row.project();
        let factor = self.cache.get(&state.sigma, row.mask())?;
        self.logw.clear();
        self.logw.extend(counts.iter().zip(&state.centers).map(|(&c, mu)| {
            if c > 0 {
                (c as f64).ln() + factor.logpdf(x, mu)
            } else {
                f64::NEG_INFINITY
            }
        }));
        let candidate = match rule {
            NewClusterWeight::SingleDraw => {
                let mu_new = mvn_sample_lower(&prior.mu0, self.predictive.lower(), rng);
                self.logw.push(self.log_alpha + factor.logpdf(x, &mu_new));
                Some(mu_new)
            }
            NewClusterWeight::Collapsed => {
                let f = self.pred_cache.get(&self.predictive, row.mask())?;
                self.logw.push(self.log_alpha + f.logpdf(x, &prior.mu0));
                None
            }
        };
        if !softmax_into(&self.logw, w) {
            return Err(SamplerError::DegenerateWeights { row: index });
        }
        Ok(candidate)
    }

    fn new_center<R: Rng + ?Sized>(
        &mut self,
        row: &MaskedSample,
        sigma: &CovMatrix,
        prior: &PriorHyper,
        rng: &mut R,
    ) -> Result<Vec<f64>, SamplerError> {
        let factor = self.cache.get(sigma, row.mask())?;
        draw_center_given_row(factor, row.project(), prior, rng)
    }
}

/// Probabilities of each existing cluster and, last, of a new cluster for
/// row `i` with every other label held fixed. Under
/// [`NewClusterWeight::SingleDraw`] the candidate center used for the last
/// slot is returned too.
pub fn assignment_probs<R: Rng + ?Sized>(
    state: &MixtureState,
    data: &MaskedDataset,
    prior: &PriorHyper,
    i: usize,
    rule: NewClusterWeight,
    rng: &mut R,
) -> Result<(Vec<f64>, Option<Vec<f64>>), SamplerError> {
    let mut counts = state.counts();
    counts[state.z[i]] -= 1;
    let mut scorer = RowScorer::new(&state.sigma, prior)?;
    let mut w = Vec::new();
    let candidate = scorer.score(data.row(i), i, &counts, state, prior, rule, rng, &mut w)?;
    let total: f64 = w.iter().sum();
    Ok((w.into_iter().map(|v| v / total).collect(), candidate))
}

/// Reassigns every row in index order. Each row is removed from its cluster
/// and scored against every occupied cluster (`log n_k` plus the log-density
/// of its observed block) and against a new cluster (`log α` plus the
/// [`NewClusterWeight`] score). Clusters emptied along the way keep their
/// slot with weight zero until [`relabel_compact`].
pub fn update_assignments<R: Rng + ?Sized>(
    state: &mut MixtureState,
    data: &MaskedDataset,
    prior: &PriorHyper,
    rule: NewClusterWeight,
    rng: &mut R,
) -> Result<(), SamplerError> {
    let mut counts = state.counts();
    let mut scorer = RowScorer::new(&state.sigma, prior)?;
    let mut w = Vec::with_capacity(state.k() + 1);
    for i in 0..data.len() {
        let row = data.row(i);
        counts[state.z[i]] -= 1;
        let candidate = scorer.score(row, i, &counts, state, prior, rule, rng, &mut w)?;
        let u: f64 = rng.random();
        let k = categorical_index(&w, u);
        if k == state.k() {
            let mu_new = match candidate {
                Some(mu) => mu,
                None => scorer.new_center(row, &state.sigma, prior, rng)?,
            };
            state.centers.push(mu_new);
            counts.push(0);
        }
        state.z[i] = k;
        counts[k] += 1;
    }
    Ok(())
}

/// Drops empty clusters and renumbers the rest, keeping their relative
/// order. Returns the number of clusters removed.
pub fn relabel_compact(state: &mut MixtureState) -> usize {
    let counts = state.counts();
    let mut map = vec![usize::MAX; counts.len()];
    let mut next = 0;
    for (k, &c) in counts.iter().enumerate() {
        if c > 0 {
            map[k] = next;
            next += 1;
        }
    }
    let removed = counts.len() - next;
    if removed > 0 {
        let mut k = 0;
        state.centers.retain(|_| {
            k += 1;
            counts[k - 1] > 0
        });
        for label in &mut state.z {
            *label = map[*label];
        }
    }
    removed
}

/// Target for one center: `log φ(μ − μ0; τ0² I)` plus the log-likelihood of
/// the cluster's rows.
#[derive(Debug, Clone)]
pub struct MuTarget {
    quad: ClusterQuad,
    mu0: Vec<f64>,
    inv_tau2: f64,
    log_norm: f64,
}

impl MuTarget {
    pub fn new(quad: ClusterQuad, prior: &PriorHyper) -> Self {
        let tau2 = prior.tau0 * prior.tau0;
        let d = prior.dim() as f64;
        MuTarget {
            quad,
            mu0: prior.mu0.clone(),
            inv_tau2: 1.0 / tau2,
            log_norm: -0.5 * d * (2.0 * std::f64::consts::PI * tau2).ln(),
        }
    }

    pub fn logpdf(&self, mu: &[f64]) -> f64 {
        let dist2: f64 = mu.iter().zip(&self.mu0).map(|(a, b)| (a - b).powi(2)).sum();
        self.log_norm - 0.5 * self.inv_tau2 * dist2 + self.quad.loglik(mu)
    }

    /// Random-walk Metropolis from `init`; `visit` sees the state after each step.
    pub fn run_with<R: Rng + ?Sized>(
        &self,
        init: &[f64],
        steps: usize,
        scale: f64,
        rng: &mut R,
        mut visit: impl FnMut(&[f64]),
    ) -> (Vec<f64>, MhStats) {
        let mut mu = init.to_vec();
        let mut cur = self.logpdf(&mu);
        let mut prop = mu.clone();
        let mut stats = MhStats::default();
        for _ in 0..steps {
            for (p, m) in prop.iter_mut().zip(&mu) {
                *p = m + scale * rng.sample::<f64, _>(StandardNormal);
            }
            let u: f64 = rng.random();
            let l = self.logpdf(&prop);
            stats.proposed += 1;
            if u <= (l - cur).exp() {
                mu.copy_from_slice(&prop);
                cur = l;
                stats.accepted += 1;
            }
            visit(&mu);
        }
        (mu, stats)
    }

    pub fn run<R: Rng + ?Sized>(&self, init: &[f64], steps: usize, scale: f64, rng: &mut R) -> (Vec<f64>, MhStats) {
        self.run_with(init, steps, scale, rng, |_| {})
    }
}

/// Metropolis update of one center given all rows of `data` as its members.
pub fn mh_mu<R: Rng + ?Sized>(
    data: &MaskedDataset,
    prior: &PriorHyper,
    sigma: &CovMatrix,
    mu_init: &[f64],
    steps: usize,
    step_scale: f64,
    rng: &mut R,
) -> Result<Vec<f64>, SamplerError> {
    if steps == 0 {
        return Err(SamplerError::Config("mh_mu needs at least one step".into()));
    }
    let target = MuTarget::new(ClusterQuad::from_rows(data.rows(), sigma)?, prior);
    Ok(target.run(mu_init, steps, step_scale, rng).0)
}

/// Refreshes the center of every cluster with more than
/// `config.min_cluster_update` rows.
pub fn update_centers<R: Rng + ?Sized>(
    state: &mut MixtureState,
    data: &MaskedDataset,
    prior: &PriorHyper,
    config: &SamplerConfig,
    rng: &mut R,
) -> Result<MhStats, SamplerError> {
    let mut stats = MhStats::default();
    if config.mh_steps_mu == 0 {
        return Ok(stats);
    }
    for (k, rows) in state.members().into_iter().enumerate() {
        if rows.len() <= config.min_cluster_update {
            continue;
        }
        let quad = ClusterQuad::from_rows(rows.iter().map(|&i| data.row(i)), &state.sigma)?;
        let (mu, s) = MuTarget::new(quad, prior).run(&state.centers[k], config.mh_steps_mu, config.mh_step_mu, rng);
        state.centers[k] = mu;
        stats.merge(s);
    }
    Ok(stats)
}

/// Target for the shared covariance in log-Cholesky coordinates:
/// inverse-Wishart log-kernel plus joint log-likelihood plus, unless
/// omitted, the log-Jacobian of the coordinate change.
#[derive(Debug)]
pub struct SigmaTarget<'a> {
    stats: &'a ScatterStats,
    iw: InvWishart,
    jacobian: JacobianTerm,
}

impl<'a> SigmaTarget<'a> {
    pub fn new(stats: &'a ScatterStats, prior: &PriorHyper, jacobian: JacobianTerm) -> Result<Self, SamplerError> {
        Ok(SigmaTarget { stats, iw: InvWishart::new(prior.psi0.clone(), prior.nu0)?, jacobian })
    }

    fn at(&self, cov: &CovMatrix, theta: &LogCholVector) -> Result<f64, SamplerError> {
        let jac = match self.jacobian {
            JacobianTerm::Included => log_chol_log_jacobian(theta, cov.dim())?,
            JacobianTerm::Omitted => 0.0,
        };
        Ok(self.iw.log_kernel(cov)? + self.stats.loglik(cov)? + jac)
    }

    pub fn logpdf(&self, theta: &LogCholVector) -> Result<(f64, CovMatrix), SamplerError> {
        let cov = log_chol_decode(theta)?;
        Ok((self.at(&cov, theta)?, cov))
    }

    pub fn run_with<R: Rng + ?Sized>(
        &self,
        init: &CovMatrix,
        steps: usize,
        scale: f64,
        rng: &mut R,
        mut visit: impl FnMut(&CovMatrix),
    ) -> Result<(CovMatrix, MhStats), SamplerError> {
        let mut theta = log_chol_encode(init);
        let mut sigma = init.clone();
        let mut cur = self.at(&sigma, &theta)?;
        if !cur.is_finite() {
            return Err(SamplerError::Config("covariance target is not finite at the starting value".into()));
        }
        let mut prop = theta.clone();
        let mut stats = MhStats::default();
        for _ in 0..steps {
            for (p, t) in prop.as_mut_slice().iter_mut().zip(theta.as_slice()) {
                *p = t + scale * rng.sample::<f64, _>(StandardNormal);
            }
            let u: f64 = rng.random();
            stats.proposed += 1;
            if let Ok((l, cov)) = self.logpdf(&prop) {
                if u <= (l - cur).exp() {
                    theta.as_mut_slice().copy_from_slice(prop.as_slice());
                    sigma = cov;
                    cur = l;
                    stats.accepted += 1;
                }
            }
            visit(&sigma);
        }
        Ok((sigma, stats))
    }

    pub fn run<R: Rng + ?Sized>(
        &self,
        init: &CovMatrix,
        steps: usize,
        scale: f64,
        rng: &mut R,
    ) -> Result<(CovMatrix, MhStats), SamplerError> {
        self.run_with(init, steps, scale, rng, |_| {})
    }
}

/// Metropolis refresh of the shared covariance; a no-op when
/// `config.mh_steps_sigma` is zero.
pub fn update_shared_sigma<R: Rng + ?Sized>(
    state: &mut MixtureState,
    data: &MaskedDataset,
    prior: &PriorHyper,
    config: &SamplerConfig,
    rng: &mut R,
) -> Result<MhStats, SamplerError> {
    if config.mh_steps_sigma == 0 {
        return Ok(MhStats::default());
    }
    let stats = ScatterStats::collect(data, &state.z, &state.centers)?;
    let target = SigmaTarget::new(&stats, prior, config.jacobian)?;
    let (sigma, s) = target.run(&state.sigma, config.mh_steps_sigma, config.mh_step_sigma, rng)?;
    state.sigma = sigma;
    Ok(s)
}
