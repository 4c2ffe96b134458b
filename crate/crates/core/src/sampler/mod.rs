//! Dirichlet-process Gaussian mixture with one shared covariance.
//!
//! Every likelihood term reads only the observed coordinates of a row, so the
//! missingness mechanism never enters the fit. A sweep runs, in order:
//! reassignment of every row ([`update_assignments`]), removal of empty
//! clusters ([`relabel_compact`]), random-walk Metropolis updates of the
//! centers ([`update_centers`]) and of the shared covariance in log-Cholesky
//! coordinates ([`update_shared_sigma`]).
//!
//! Labels are 0-based in memory and 1-based in files.

mod io;
mod moves;
mod stats;

use rand::Rng;
use thiserror::Error;

use crate::config::{format_matrix, format_vector, ConfigError, KvConfig};
use crate::data::{DataError, MaskedDataset};
use crate::gaussian::{mvn_sample_lower, CovMatrix, InvWishart, KernelError};

pub(crate) use io::diagnostics_csv;
pub use io::{read_draws_dir, write_draws_dir};
pub use moves::{
    assignment_probs, mh_mu, relabel_compact, update_assignments, update_centers, update_shared_sigma, MhStats,
    MuTarget, SigmaTarget,
};
pub use stats::{joint_loglik, joint_loglik_fast, ClusterQuad, ScatterStats};

#[derive(Debug, Error)]
pub enum SamplerError {
    #[error("invalid sampler setting: {0}")]
    Config(String),
    #[error(transparent)]
    Kernel(#[from] KernelError),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error("joint log-likelihood is not finite at sweep {sweep}")]
    NonFiniteLogLik { sweep: usize },
    #[error("row {row}: every assignment weight is zero or undefined")]
    DegenerateWeights { row: usize },
    #[error("label {label} at row {row} but only {k} centers")]
    Labels { row: usize, label: usize, k: usize },
    #[error(transparent)]
    ConfigFile(#[from] ConfigError),
    #[error("{path}: {msg}")]
    Format { path: String, msg: String },
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq)]
pub struct PriorHyper {
    pub alpha: f64,
    pub mu0: Vec<f64>,
    pub tau0: f64,
    pub nu0: f64,
    pub psi0: CovMatrix,
}

impl PriorHyper {
    pub fn dim(&self) -> usize {
        self.mu0.len()
    }

    pub fn validate(&self) -> Result<(), SamplerError> {
        let d = self.dim();
        let bad = |m: String| Err(SamplerError::Config(m));
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return bad(format!("alpha must be positive, got {}", self.alpha));
        }
        if d == 0 || self.mu0.iter().any(|v| !v.is_finite()) {
            return bad("mu0 must be a nonempty finite vector".into());
        }
        if !(self.tau0 > 0.0 && self.tau0.is_finite()) {
            return bad(format!("tau0 must be positive, got {}", self.tau0));
        }
        if self.psi0.dim() != d {
            return bad(format!("psi0 is {0}x{0} but mu0 has length {d}", self.psi0.dim()));
        }
        if !(self.nu0 > d as f64 - 1.0) {
            return bad(format!("nu0 must exceed d - 1 = {}, got {}", d - 1, self.nu0));
        }
        Ok(())
    }

    /// Data-scaled defaults: `α = 1`, `μ0` the observed column means,
    /// `τ0` twice the largest observed column sd, `ν0 = d + 4` and `Ψ0` the
    /// diagonal of observed column variances.
    pub fn defaults_for(data: &MaskedDataset) -> Result<Self, SamplerError> {
        let d = data.dim();
        let mut means = Vec::with_capacity(d);
        let mut vars = Vec::with_capacity(d);
        for j in 0..d {
            let col = data.observed_column(j);
            let n = col.len() as f64;
            let mean = if col.is_empty() { 0.0 } else { col.iter().sum::<f64>() / n };
            let var = if col.len() < 2 { 1.0 } else { col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0) };
            means.push(mean);
            vars.push(if var > 0.0 && var.is_finite() { var } else { 1.0 });
        }
        let max_sd = vars.iter().copied().fold(0.0, f64::max).sqrt();
        let prior = PriorHyper {
            alpha: 1.0,
            mu0: means,
            tau0: 2.0 * max_sd,
            nu0: d as f64 + 4.0,
            psi0: CovMatrix::diagonal(&vars)?,
        };
        prior.validate()?;
        Ok(prior)
    }

    pub fn to_config(&self, cfg: &mut KvConfig) {
        cfg.set("prior.alpha", self.alpha);
        cfg.set("prior.mu0", format_vector(&self.mu0));
        cfg.set("prior.tau0", self.tau0);
        cfg.set("prior.nu0", self.nu0);
        cfg.set("prior.psi0", format_matrix(&self.psi0.to_rows()));
    }

    /// `self` with every `prior.*` key present in `cfg` overriding it.
    pub fn overridden(&self, cfg: &KvConfig) -> Result<Self, SamplerError> {
        let psi0 = match cfg.matrix("prior.psi0")? {
            Some(rows) => CovMatrix::from_rows(&rows)?,
            None => self.psi0.clone(),
        };
        let prior = PriorHyper {
            alpha: cfg.parsed_or("prior.alpha", self.alpha)?,
            mu0: cfg.vector("prior.mu0")?.unwrap_or_else(|| self.mu0.clone()),
            tau0: cfg.parsed_or("prior.tau0", self.tau0)?,
            nu0: cfg.parsed_or("prior.nu0", self.nu0)?,
            psi0,
        };
        prior.validate()?;
        Ok(prior)
    }

    pub fn from_config(cfg: &KvConfig) -> Result<Self, SamplerError> {
        let missing = |k: &str| ConfigError::Missing(k.into());
        let prior = PriorHyper {
            alpha: cfg.required("prior.alpha")?,
            mu0: cfg.vector("prior.mu0")?.ok_or_else(|| missing("prior.mu0"))?,
            tau0: cfg.required("prior.tau0")?,
            nu0: cfg.required("prior.nu0")?,
            psi0: CovMatrix::from_rows(&cfg.matrix("prior.psi0")?.ok_or_else(|| missing("prior.psi0"))?)?,
        };
        prior.validate()?;
        Ok(prior)
    }
}

/// Weight given to opening a new cluster for a row.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NewClusterWeight {
    /// Draw one candidate center from `N(μ0, Σ + τ0² I)` and score the row
    /// against it; the candidate becomes the new center if chosen.
    SingleDraw,
    /// Score the row under `N(μ0, Σ + τ0² I)` directly; a chosen new center
    /// is drawn from its posterior given the row.
    Collapsed,
}

/// Whether the log-Cholesky Jacobian enters the covariance target.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum JacobianTerm {
    Included,
    Omitted,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SamplerConfig {
    pub t_total: usize,
    pub t_burn: usize,
    pub thin: usize,
    pub mh_steps_mu: usize,
    pub mh_step_mu: f64,
    /// Zero leaves the covariance fixed.
    pub mh_steps_sigma: usize,
    pub mh_step_sigma: f64,
    /// Centers of clusters with at most this many rows are not updated.
    pub min_cluster_update: usize,
    pub seed: u64,
    pub new_cluster: NewClusterWeight,
    pub jacobian: JacobianTerm,
    /// Labels are initialized uniformly on `0..init_clusters`.
    pub init_clusters: usize,
    /// Starting covariance; drawn from the inverse-Wishart prior when absent.
    pub sigma_init: Option<CovMatrix>,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        SamplerConfig {
            t_total: 3000,
            t_burn: 1000,
            thin: 2,
            mh_steps_mu: 25,
            mh_step_mu: 0.15,
            mh_steps_sigma: 25,
            mh_step_sigma: 0.05,
            min_cluster_update: 10,
            seed: 1,
            new_cluster: NewClusterWeight::SingleDraw,
            jacobian: JacobianTerm::Included,
            init_clusters: 5,
            sigma_init: None,
        }
    }
}

impl SamplerConfig {
    pub fn validate(&self) -> Result<(), SamplerError> {
        let bad = |m: &str| Err(SamplerError::Config(m.into()));
        if self.t_total == 0 {
            return bad("t_total must be positive");
        }
        if self.t_burn >= self.t_total {
            return bad("t_burn must be smaller than t_total");
        }
        if self.thin == 0 {
            return bad("thin must be positive");
        }
        if self.init_clusters == 0 {
            return bad("init_clusters must be positive");
        }
        if !(self.mh_step_mu > 0.0 && self.mh_step_mu.is_finite()) {
            return bad("mh_step_mu must be positive");
        }
        if !(self.mh_step_sigma > 0.0 && self.mh_step_sigma.is_finite()) {
            return bad("mh_step_sigma must be positive");
        }
        Ok(())
    }

    /// Number of states a completed run saves.
    pub fn n_saved(&self) -> usize {
        (self.t_total - self.t_burn) / self.thin
    }

    pub fn saves(&self, sweep: usize) -> bool {
        sweep > self.t_burn && (sweep - self.t_burn).is_multiple_of(self.thin)
    }

    pub fn to_config(&self, cfg: &mut KvConfig) {
        cfg.set("sampler.t_total", self.t_total);
        cfg.set("sampler.t_burn", self.t_burn);
        cfg.set("sampler.thin", self.thin);
        cfg.set("sampler.mh_steps_mu", self.mh_steps_mu);
        cfg.set("sampler.mh_step_mu", self.mh_step_mu);
        cfg.set("sampler.mh_steps_sigma", self.mh_steps_sigma);
        cfg.set("sampler.mh_step_sigma", self.mh_step_sigma);
        cfg.set("sampler.min_cluster_update", self.min_cluster_update);
        cfg.set("sampler.seed", self.seed);
        cfg.set(
            "sampler.new_cluster",
            match self.new_cluster {
                NewClusterWeight::SingleDraw => "single_draw",
                NewClusterWeight::Collapsed => "collapsed",
            },
        );
        cfg.set(
            "sampler.jacobian",
            match self.jacobian {
                JacobianTerm::Included => "included",
                JacobianTerm::Omitted => "omitted",
            },
        );
        cfg.set("sampler.init_clusters", self.init_clusters);
        if let Some(s) = &self.sigma_init {
            cfg.set("sampler.sigma_init", format_matrix(&s.to_rows()));
        }
    }

    /// Defaults overridden by every `sampler.*` key present.
    pub fn from_config(cfg: &KvConfig) -> Result<Self, SamplerError> {
        let def = SamplerConfig::default();
        let new_cluster = match cfg.get("sampler.new_cluster").unwrap_or("single_draw") {
            "single_draw" => NewClusterWeight::SingleDraw,
            "collapsed" => NewClusterWeight::Collapsed,
            other => return Err(SamplerError::Config(format!("unknown sampler.new_cluster {other:?}"))),
        };
        let jacobian = match cfg.get("sampler.jacobian").unwrap_or("included") {
            "included" => JacobianTerm::Included,
            "omitted" => JacobianTerm::Omitted,
            other => return Err(SamplerError::Config(format!("unknown sampler.jacobian {other:?}"))),
        };
        let sigma_init = cfg.matrix("sampler.sigma_init")?.map(|r| CovMatrix::from_rows(&r)).transpose()?;
        let out = SamplerConfig {
            t_total: cfg.parsed_or("sampler.t_total", def.t_total)?,
            t_burn: cfg.parsed_or("sampler.t_burn", def.t_burn)?,
            thin: cfg.parsed_or("sampler.thin", def.thin)?,
            mh_steps_mu: cfg.parsed_or("sampler.mh_steps_mu", def.mh_steps_mu)?,
            mh_step_mu: cfg.parsed_or("sampler.mh_step_mu", def.mh_step_mu)?,
            mh_steps_sigma: cfg.parsed_or("sampler.mh_steps_sigma", def.mh_steps_sigma)?,
            mh_step_sigma: cfg.parsed_or("sampler.mh_step_sigma", def.mh_step_sigma)?,
            min_cluster_update: cfg.parsed_or("sampler.min_cluster_update", def.min_cluster_update)?,
            seed: cfg.parsed_or("sampler.seed", def.seed)?,
            new_cluster,
            jacobian,
            init_clusters: cfg.parsed_or("sampler.init_clusters", def.init_clusters)?,
            sigma_init,
        };
        out.validate()?;
        Ok(out)
    }
}

/// Labels, centers and the shared covariance.
#[derive(Debug, Clone, PartialEq)]
pub struct MixtureState {
    pub z: Vec<usize>,
    pub centers: Vec<Vec<f64>>,
    pub sigma: CovMatrix,
}

impl MixtureState {
    pub fn k(&self) -> usize {
        self.centers.len()
    }

    pub fn n(&self) -> usize {
        self.z.len()
    }

    pub fn dim(&self) -> usize {
        self.sigma.dim()
    }

    pub fn counts(&self) -> Vec<usize> {
        let mut c = vec![0; self.k()];
        for &k in &self.z {
            c[k] += 1;
        }
        c
    }

    /// Rows grouped by label.
    pub fn members(&self) -> Vec<Vec<usize>> {
        let mut m = vec![Vec::new(); self.k()];
        for (i, &k) in self.z.iter().enumerate() {
            m[k].push(i);
        }
        m
    }

    /// Labels in range, no empty cluster, consistent dimensions.
    pub fn check(&self) -> Result<(), SamplerError> {
        let k = self.k();
        for (row, &label) in self.z.iter().enumerate() {
            if label >= k {
                return Err(SamplerError::Labels { row, label, k });
            }
        }
        if let Some(e) = self.counts().iter().position(|&c| c == 0) {
            return Err(SamplerError::Config(format!("cluster {} is empty", e + 1)));
        }
        if self.centers.iter().any(|c| c.len() != self.dim()) {
            return Err(SamplerError::Config("center length differs from covariance dimension".into()));
        }
        Ok(())
    }

    /// Mixture weights `n_k / n`.
    pub fn weights(&self) -> Vec<f64> {
        let n = self.n() as f64;
        self.counts().into_iter().map(|c| c as f64 / n).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SavedDraw {
    pub sweep: usize,
    pub state: MixtureState,
}

/// One line of the per-sweep trace.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepDiag {
    pub sweep: usize,
    pub k: usize,
    pub loglik: f64,
    pub mu: MhStats,
    pub sigma: MhStats,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorDraws {
    pub draws: Vec<SavedDraw>,
    pub prior: PriorHyper,
    pub config: SamplerConfig,
    pub diagnostics: Vec<SweepDiag>,
}

impl PosteriorDraws {
    pub fn dim(&self) -> usize {
        self.prior.dim()
    }

    /// Pooled acceptance rates `(centers, covariance)` over the whole run.
    pub fn acceptance(&self) -> (Option<f64>, Option<f64>) {
        let mut mu = MhStats::default();
        let mut sigma = MhStats::default();
        for d in &self.diagnostics {
            mu.merge(d.mu);
            sigma.merge(d.sigma);
        }
        (mu.rate(), sigma.rate())
    }
}

/// Starting state: uniform labels on `0..init_clusters`, centers from
/// `N(μ0, τ0 I)`, covariance from the prior unless given.
pub fn init_state<R: Rng + ?Sized>(
    n: usize,
    prior: &PriorHyper,
    config: &SamplerConfig,
    rng: &mut R,
) -> Result<MixtureState, SamplerError> {
    let z: Vec<usize> = (0..n).map(|_| rng.random_range(0..config.init_clusters)).collect();
    let k = z.iter().copied().max().map_or(0, |m| m + 1);
    let init_cov = CovMatrix::diagonal(&vec![prior.tau0; prior.dim()])?;
    let centers = (0..k).map(|_| mvn_sample_lower(&prior.mu0, init_cov.lower(), rng)).collect();
    let sigma = match &config.sigma_init {
        Some(s) => s.clone(),
        None => InvWishart::new(prior.psi0.clone(), prior.nu0)?.sample(rng)?,
    };
    Ok(MixtureState { z, centers, sigma })
}

pub fn run_sampler<R: Rng + ?Sized>(
    data: &MaskedDataset,
    prior: &PriorHyper,
    config: &SamplerConfig,
    rng: &mut R,
) -> Result<PosteriorDraws, SamplerError> {
    prior.validate()?;
    config.validate()?;
    if data.is_empty() {
        return Err(SamplerError::Config("dataset has no rows".into()));
    }
    if data.dim() != prior.dim() {
        return Err(SamplerError::Config(format!(
            "data dimension {} differs from prior dimension {}",
            data.dim(),
            prior.dim()
        )));
    }
    if let Some(s) = &config.sigma_init {
        if s.dim() != data.dim() {
            return Err(SamplerError::Config("sigma_init has the wrong dimension".into()));
        }
    }
    let mut state = init_state(data.len(), prior, config, rng)?;
    let mut draws = Vec::with_capacity(config.n_saved());
    let mut diagnostics = Vec::with_capacity(config.t_total);
    for sweep in 1..=config.t_total {
        update_assignments(&mut state, data, prior, config.new_cluster, rng)?;
        relabel_compact(&mut state);
        let mu = update_centers(&mut state, data, prior, config, rng)?;
        let sigma = update_shared_sigma(&mut state, data, prior, config, rng)?;
        let loglik = joint_loglik_fast(&ScatterStats::collect(data, &state.z, &state.centers)?, &state.sigma)?;
        if !loglik.is_finite() {
            return Err(SamplerError::NonFiniteLogLik { sweep });
        }
        diagnostics.push(SweepDiag { sweep, k: state.k(), loglik, mu, sigma });
        if config.saves(sweep) {
            draws.push(SavedDraw { sweep, state: state.clone() });
        }
    }
    Ok(PosteriorDraws { draws, prior: prior.clone(), config: config.clone(), diagnostics })
}

/// Mean of `series` and its standard error from `batches` equal batch means.
pub fn batch_means(series: &[f64], batches: usize) -> (f64, f64) {
    let n = series.len();
    let mean = series.iter().sum::<f64>() / n as f64;
    let size = n / batches.max(1);
    if batches < 2 || size == 0 {
        return (mean, f64::NAN);
    }
    let means: Vec<f64> =
        (0..batches).map(|b| series[b * size..(b + 1) * size].iter().sum::<f64>() / size as f64).collect();
    let grand = means.iter().sum::<f64>() / batches as f64;
    let var = means.iter().map(|m| (m - grand).powi(2)).sum::<f64>() / (batches - 1) as f64;
    (mean, (var / batches as f64).sqrt())
}
