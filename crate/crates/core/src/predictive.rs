//! Fresh complete samples from a fitted posterior, and the estimators
//! applied to them and to the masked data directly.

use std::fmt;
use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use rand::Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::data::{fmt_f64, CompleteDataset, DataError, MaskedDataset};
use crate::gaussian::{categorical_index, mvn_sample_lower, KernelError, SharedMixture};
use crate::mdm::normal_cdf;
use crate::rng;
use crate::sampler::{MixtureState, PosteriorDraws};

#[derive(Debug, Error)]
pub enum PredictiveError {
    #[error("no posterior draws")]
    NoDraws,
    #[error("empty sample")]
    EmptySample,
    #[error("target {target}: {msg}")]
    Target { target: String, msg: String },
    #[error(transparent)]
    Kernel(#[from] KernelError),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error("{path}: {msg}")]
    Format { path: String, msg: String },
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

/// Mixture with weights `n_k / n` read off one saved state.
pub fn state_mixture(state: &MixtureState) -> Result<SharedMixture, KernelError> {
    SharedMixture::new(state.weights(), state.centers.clone(), state.sigma.clone())
}

pub fn posterior_mixtures(draws: &PosteriorDraws) -> Result<Vec<SharedMixture>, PredictiveError> {
    if draws.draws.is_empty() {
        return Err(PredictiveError::NoDraws);
    }
    Ok(draws.draws.iter().map(|d| state_mixture(&d.state)).collect::<Result<_, _>>()?)
}

#[derive(Debug, Clone, PartialEq)]
pub struct GeneratedSample {
    pub rows: CompleteDataset,
    /// `(draw index, cluster index)` behind each row.
    pub provenance: Vec<(usize, usize)>,
}

/// Each row picks a saved draw uniformly, a cluster with probability
/// `n_k / n`, then draws from `N(μ_k, Σ)`. The mass a new cluster would get
/// under the Dirichlet process is ignored. Row `i` uses its own random
/// stream, so rows are generated in parallel without changing the result.
pub fn generate<R: Rng + ?Sized>(
    draws: &PosteriorDraws,
    n_out: usize,
    rng: &mut R,
) -> Result<GeneratedSample, PredictiveError> {
    let mixtures = posterior_mixtures(draws)?;
    let d = draws.dim();
    let base: u64 = rng.random();
    let rows: Vec<(Vec<f64>, (usize, usize))> = (0..n_out)
        .into_par_iter()
        .map(|i| {
            let mut r = rng::stream(base, i as u64);
            let t = r.random_range(0..mixtures.len());
            let m = &mixtures[t];
            let k = categorical_index(m.weights(), r.random());
            (mvn_sample_lower(&m.means()[k], m.cov().lower(), &mut r), (t, k))
        })
        .collect();
    let mut flat = Vec::with_capacity(n_out * d);
    let mut provenance = Vec::with_capacity(n_out);
    for (x, p) in rows {
        flat.extend(x);
        provenance.push(p);
    }
    Ok(GeneratedSample { rows: CompleteDataset::new(d, flat)?, provenance })
}

/// `(1/T) Σ_t Σ_k (n_k/n) φ(x; μ_k, Σ)` over saved draws.
pub fn posterior_mean_density(draws: &PosteriorDraws, x: &[f64]) -> Result<f64, PredictiveError> {
    let mixtures = posterior_mixtures(draws)?;
    Ok(mixtures.iter().map(|m| m.logpdf(x).exp()).sum::<f64>() / mixtures.len() as f64)
}

/// Marginal CDF of coordinate `j` under the equal-weight average of `parts`.
pub fn marginal_cdf(parts: &[SharedMixture], j: usize, x: f64) -> f64 {
    let total: f64 = parts
        .iter()
        .map(|m| {
            let sd = m.cov().get(j, j).sqrt();
            m.weights().iter().zip(m.means()).map(|(w, mu)| w * normal_cdf((x - mu[j]) / sd)).sum::<f64>()
        })
        .sum();
    total / parts.len() as f64
}

/// Inverse of [`marginal_cdf`] by bisection, to about 1e-12 absolute.
pub fn marginal_quantile(parts: &[SharedMixture], j: usize, p: f64) -> f64 {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for m in parts {
        let sd = m.cov().get(j, j).sqrt();
        for mu in m.means() {
            lo = lo.min(mu[j] - 40.0 * sd);
            hi = hi.max(mu[j] + 40.0 * sd);
        }
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if marginal_cdf(parts, j, mid) < p {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-12 {
            break;
        }
    }
    0.5 * (lo + hi)
}

/// A scalar summary of a distribution over `R^d`. Coordinates are 0-based.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Target {
    Mean(usize),
    Corr(usize, usize),
    Quantile(usize, f64),
}

impl Target {
    pub fn statistic(&self) -> String {
        match self {
            Target::Mean(_) => "mean".into(),
            Target::Corr(..) => "corr".into(),
            Target::Quantile(_, p) => format!("q{p}"),
        }
    }

    /// 1-based coordinates, `:`-separated.
    pub fn coords(&self) -> String {
        match self {
            Target::Mean(j) | Target::Quantile(j, _) => (j + 1).to_string(),
            Target::Corr(a, b) => format!("{}:{}", a + 1, b + 1),
        }
    }

    /// Short metric name such as `mean_x1`, `corr_x1_x2` or `q0.1_x1`.
    pub fn label(&self) -> String {
        match self {
            Target::Corr(a, b) => format!("corr_x{}_x{}", a + 1, b + 1),
            _ => format!("{}_x{}", self.statistic(), self.coords()),
        }
    }

    pub fn validate(&self, d: usize) -> Result<(), PredictiveError> {
        let err = |msg: String| Err(PredictiveError::Target { target: self.to_string(), msg });
        match *self {
            Target::Mean(j) if j >= d => err(format!("coordinate {} outside 1..={d}", j + 1)),
            Target::Corr(a, b) if a >= d || b >= d => err(format!("coordinates outside 1..={d}")),
            Target::Quantile(j, _) if j >= d => err(format!("coordinate {} outside 1..={d}", j + 1)),
            Target::Quantile(_, p) if !(p > 0.0 && p < 1.0) => err(format!("probability {p} outside (0, 1)")),
            _ => Ok(()),
        }
    }
}

/// `mean:1`, `corr:1:2`, `quantile:1:0.1` with 1-based coordinates.
impl fmt::Display for Target {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Target::Mean(j) => write!(f, "mean:{}", j + 1),
            Target::Corr(a, b) => write!(f, "corr:{}:{}", a + 1, b + 1),
            Target::Quantile(j, p) => write!(f, "quantile:{}:{p}", j + 1),
        }
    }
}

impl FromStr for Target {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let parts: Vec<&str> = s.trim().split(':').map(str::trim).collect();
        let coord = |t: &str| match t.parse::<usize>() {
            Ok(c) if c >= 1 => Ok(c - 1),
            _ => Err(format!("bad coordinate {t:?} in {s:?}")),
        };
        match parts.as_slice() {
            ["mean", j] => Ok(Target::Mean(coord(j)?)),
            ["corr", a, b] => Ok(Target::Corr(coord(a)?, coord(b)?)),
            ["quantile", j, p] => {
                let p: f64 = p.parse().map_err(|_| format!("bad probability in {s:?}"))?;
                Ok(Target::Quantile(coord(j)?, p))
            }
            _ => Err(format!("unknown target {s:?}")),
        }
    }
}

pub fn default_targets() -> Vec<Target> {
    vec![Target::Mean(0), Target::Corr(0, 1), Target::Quantile(0, 0.1)]
}

/// Parses a comma-separated target list.
pub fn parse_targets(s: &str) -> Result<Vec<Target>, String> {
    s.split(',').filter(|t| !t.trim().is_empty()).map(str::parse).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Flag {
    Ok,
    TooFewRows,
    ConstantColumn,
    NeverObserved,
}

impl Flag {
    pub fn as_str(&self) -> &'static str {
        match self {
            Flag::Ok => "",
            Flag::TooFewRows => "too_few_rows",
            Flag::ConstantColumn => "constant_column",
            Flag::NeverObserved => "never_observed",
        }
    }

    fn parse(s: &str) -> Option<Flag> {
        [Flag::Ok, Flag::TooFewRows, Flag::ConstantColumn, Flag::NeverObserved].into_iter().find(|f| f.as_str() == s)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Estimate {
    pub target: Target,
    /// Absent exactly when `flag` is not [`Flag::Ok`].
    pub value: Option<f64>,
    pub flag: Flag,
}

impl Estimate {
    fn from(target: Target, r: Result<f64, Flag>) -> Self {
        match r {
            Ok(v) => Estimate { target, value: Some(v), flag: Flag::Ok },
            Err(flag) => Estimate { target, value: None, flag },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Report {
    pub entries: Vec<Estimate>,
}

impl Report {
    pub fn get(&self, target: &Target) -> Option<&Estimate> {
        self.entries.iter().find(|e| &e.target == target)
    }

    pub fn value(&self, target: &Target) -> Option<f64> {
        self.get(target).and_then(|e| e.value)
    }

    /// Long format: `statistic,coords,value,flag`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("statistic,coords,value,flag\n");
        for e in &self.entries {
            let v = e.value.map(fmt_f64).unwrap_or_default();
            let _ = writeln!(out, "{},{},{},{}", e.target.statistic(), e.target.coords(), v, e.flag.as_str());
        }
        out
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<(), PredictiveError> {
        std::fs::write(path, self.to_csv())?;
        Ok(())
    }

    pub fn read_csv(path: impl AsRef<Path>) -> Result<Report, PredictiveError> {
        let path = path.as_ref();
        let err = |msg: String| PredictiveError::Format { path: path.display().to_string(), msg };
        let mut rdr = csv::Reader::from_path(path).map_err(|e| err(e.to_string()))?;
        let mut entries = Vec::new();
        for rec in rdr.records() {
            let rec = rec.map_err(|e| err(e.to_string()))?;
            if rec.len() != 4 {
                return Err(err("expected 4 fields".into()));
            }
            let coords = &rec[1];
            let spec = match &rec[0] {
                "mean" => format!("mean:{coords}"),
                "corr" => format!("corr:{coords}"),
                q if q.starts_with('q') => format!("quantile:{coords}:{}", &q[1..]),
                other => return Err(err(format!("unknown statistic {other:?}"))),
            };
            let target: Target = spec.parse().map_err(err)?;
            let flag = Flag::parse(&rec[3]).ok_or_else(|| err(format!("unknown flag {:?}", &rec[3])))?;
            let value = match &rec[2] {
                "" => None,
                v => Some(v.parse::<f64>().map_err(|e| err(e.to_string()))?),
            };
            entries.push(Estimate { target, value, flag });
        }
        Ok(Report { entries })
    }
}

/// Type-7 quantile (linear interpolation between order statistics) of
/// sorted data.
pub fn quantile_type7(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    let h = (n - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(n - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

fn mean(xs: &[f64]) -> Result<f64, Flag> {
    if xs.is_empty() {
        return Err(Flag::NeverObserved);
    }
    Ok(xs.iter().sum::<f64>() / xs.len() as f64)
}

fn quantile(xs: &[f64], p: f64) -> Result<f64, Flag> {
    if xs.is_empty() {
        return Err(Flag::NeverObserved);
    }
    let mut sorted = xs.to_vec();
    sorted.sort_by(f64::total_cmp);
    Ok(quantile_type7(&sorted, p))
}

/// Sample Pearson correlation of paired values.
pub fn pearson(pairs: &[(f64, f64)]) -> Result<f64, Flag> {
    if pairs.len() < 3 {
        return Err(Flag::TooFewRows);
    }
    let n = pairs.len() as f64;
    let (mx, my) = pairs.iter().fold((0.0, 0.0), |(a, b), (x, y)| (a + x / n, b + y / n));
    let (mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0);
    for (x, y) in pairs {
        sxx += (x - mx) * (x - mx);
        syy += (y - my) * (y - my);
        sxy += (x - mx) * (y - my);
    }
    if sxx <= 0.0 || syy <= 0.0 {
        return Err(Flag::ConstantColumn);
    }
    Ok((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

fn check_targets(targets: &[Target], d: usize) -> Result<(), PredictiveError> {
    targets.iter().try_for_each(|t| t.validate(d))
}

/// Means, Pearson correlations and type-7 quantiles of a complete sample.
pub fn estimate(sample: &CompleteDataset, targets: &[Target]) -> Result<Report, PredictiveError> {
    if sample.is_empty() {
        return Err(PredictiveError::EmptySample);
    }
    check_targets(targets, sample.dim())?;
    let entries = targets
        .iter()
        .map(|&t| {
            let r = match t {
                Target::Mean(j) => mean(&sample.column(j)),
                Target::Quantile(j, p) => quantile(&sample.column(j), p),
                Target::Corr(a, b) => {
                    let pairs: Vec<(f64, f64)> = sample.rows().map(|r| (r[a], r[b])).collect();
                    pearson(&pairs)
                }
            };
            Estimate::from(t, r)
        })
        .collect();
    Ok(Report { entries })
}

/// Available-case statistics: each coordinate over the rows where it is
/// observed, correlations over rows where both are observed.
pub fn naive_baseline(data: &MaskedDataset, targets: &[Target]) -> Result<Report, PredictiveError> {
    if data.is_empty() {
        return Err(PredictiveError::EmptySample);
    }
    check_targets(targets, data.dim())?;
    let entries = targets
        .iter()
        .map(|&t| {
            let r = match t {
                Target::Mean(j) => mean(&data.observed_column(j)),
                Target::Quantile(j, p) => quantile(&data.observed_column(j), p),
                Target::Corr(a, b) => {
                    let pairs: Vec<(f64, f64)> =
                        data.rows().iter().filter_map(|r| Some((r.get(a)?, r.get(b)?))).collect();
                    pearson(&pairs)
                }
            };
            Estimate::from(t, r)
        })
        .collect();
    Ok(Report { entries })
}

/// Targets evaluated on the equal-weight average of `parts` itself rather
/// than on a sample from it.
pub fn functional_estimate(parts: &[SharedMixture], targets: &[Target]) -> Result<Report, PredictiveError> {
    let Some(first) = parts.first() else {
        return Err(PredictiveError::NoDraws);
    };
    let d = first.dim();
    check_targets(targets, d)?;
    let np = parts.len() as f64;
    let mut mu = vec![0.0; d];
    let mut second = nalgebra::DMatrix::<f64>::zeros(d, d);
    for m in parts {
        let (pm, pc) = m.moments();
        for a in 0..d {
            mu[a] += pm[a] / np;
            for b in 0..d {
                second[(a, b)] += (pc[(a, b)] + pm[a] * pm[b]) / np;
            }
        }
    }
    let entries = targets
        .iter()
        .map(|&t| {
            let r = match t {
                Target::Mean(j) => Ok(mu[j]),
                Target::Quantile(j, p) => Ok(marginal_quantile(parts, j, p)),
                Target::Corr(a, b) => {
                    let cov = |x: usize, y: usize| second[(x, y)] - mu[x] * mu[y];
                    Ok(cov(a, b) / (cov(a, a) * cov(b, b)).sqrt())
                }
            };
            Estimate::from(t, r)
        })
        .collect();
    Ok(Report { entries })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{Mask, MaskedSample};
    use crate::gaussian::CovMatrix;
    use crate::rng::seeded;
    use crate::sampler::{PriorHyper, SamplerConfig, SavedDraw};
    use statrs::distribution::{ContinuousCDF, Normal};

    fn draws_of(states: Vec<MixtureState>) -> PosteriorDraws {
        let d = states[0].dim();
        PosteriorDraws {
            draws: states.into_iter().enumerate().map(|(i, state)| SavedDraw { sweep: i + 1, state }).collect(),
            prior: PriorHyper {
                alpha: 1.0,
                mu0: vec![0.0; d],
                tau0: 1.0,
                nu0: d as f64 + 2.0,
                psi0: CovMatrix::identity(d),
            },
            config: SamplerConfig::default(),
            diagnostics: Vec::new(),
        }
    }

    fn single(mu: Vec<f64>, cov: CovMatrix) -> MixtureState {
        MixtureState { z: vec![0; 4], centers: vec![mu], sigma: cov }
    }

    #[test]
    fn generate_single_cluster_mean() {
        let mu = vec![1.5, -2.0, 0.25];
        let draws = draws_of(vec![single(mu.clone(), CovMatrix::identity(3))]);
        let g = generate(&draws, 100_000, &mut seeded(1)).unwrap();
        assert_eq!(g.rows.len(), 100_000);
        for j in 0..3 {
            let m = g.rows.column(j).iter().sum::<f64>() / 1e5;
            assert!((m - mu[j]).abs() < 0.02, "{m}");
        }
        assert!(g.provenance.iter().all(|&p| p == (0, 0)));
    }

    #[test]
    fn generate_balances_two_draws() {
        let c = 5.0;
        let draws =
            draws_of(vec![single(vec![c, 0.0], CovMatrix::identity(2)), single(vec![-c, 0.0], CovMatrix::identity(2))]);
        let g = generate(&draws, 100_000, &mut seeded(2)).unwrap();
        let share = g.rows.column(0).iter().filter(|&&x| x > 0.0).count() as f64 / 1e5;
        assert!((share - 0.5).abs() < 0.01);
        let from_first = g.provenance.iter().filter(|p| p.0 == 0).count() as f64 / 1e5;
        assert!((from_first - 0.5).abs() < 0.01);
    }

    #[test]
    fn generate_respects_cluster_sizes_and_provenance() {
        let state =
            MixtureState { z: vec![0, 1, 1, 1], centers: vec![vec![-10.0], vec![10.0]], sigma: CovMatrix::identity(1) };
        let draws = draws_of(vec![state.clone(), single(vec![0.0], CovMatrix::identity(1))]);
        let g = generate(&draws, 40_000, &mut seeded(3)).unwrap();
        for (row, &(t, k)) in g.rows.rows().zip(&g.provenance) {
            assert!(t < 2 && k < draws.draws[t].state.k());
            if t == 0 {
                assert_eq!(row[0] > 0.0, k == 1);
            }
        }
        let n0 = g.provenance.iter().filter(|p| p.0 == 0).count() as f64;
        let n01 = g.provenance.iter().filter(|p| **p == (0, 1)).count() as f64;
        assert!((n01 / n0 - 0.75).abs() < 0.02);
    }

    #[test]
    fn generate_is_deterministic() {
        let draws = draws_of(vec![single(vec![0.0, 0.0], CovMatrix::identity(2))]);
        let a = generate(&draws, 500, &mut seeded(4)).unwrap();
        let b = generate(&draws, 500, &mut seeded(4)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn posterior_mean_density_single_gaussian() {
        let cov = CovMatrix::from_rows(&[vec![2.0, 0.3], vec![0.3, 1.0]]).unwrap();
        let draws = draws_of(vec![single(vec![1.0, 2.0], cov.clone())]);
        let x = [0.5, 1.0];
        let got = posterior_mean_density(&draws, &x).unwrap();
        let inv = cov.inverse();
        let r = nalgebra::DVector::from_vec(vec![-0.5, -1.0]);
        let q = (r.transpose() * inv * &r)[(0, 0)];
        let expect = (-0.5 * q).exp() / (2.0 * std::f64::consts::PI * cov.matrix().determinant().sqrt());
        assert!((got - expect).abs() < 1e-14);
    }

    #[test]
    fn posterior_mean_density_integrates_to_one() {
        let state = MixtureState {
            z: vec![0, 0, 1],
            centers: vec![vec![0.0, 0.0], vec![2.0, -1.0]],
            sigma: CovMatrix::from_rows(&[vec![1.0, 0.5], vec![0.5, 0.8]]).unwrap(),
        };
        let draws = draws_of(vec![state, single(vec![-1.0, 1.0], CovMatrix::identity(2))]);
        let (lo, hi, steps) = (-11.0, 11.0, 400);
        let h = (hi - lo) / steps as f64;
        let mut total = 0.0;
        for a in 0..steps {
            for b in 0..steps {
                let x = [lo + (a as f64 + 0.5) * h, lo + (b as f64 + 0.5) * h];
                let v = posterior_mean_density(&draws, &x).unwrap();
                assert!(v >= 0.0);
                total += v * h * h;
            }
        }
        assert!((total - 1.0).abs() < 1e-3, "{total}");
        let at_center = posterior_mean_density(&draws, &[-1.0, 1.0]).unwrap();
        let far = posterior_mean_density(&draws, &[-11.0, 11.0]).unwrap();
        assert!(at_center >= far);
    }

    #[test]
    fn mixture_quantile_inverts_cdf() {
        let m = SharedMixture::new(vec![0.3, 0.7], vec![vec![-2.0], vec![1.0]], CovMatrix::identity(1)).unwrap();
        for p in [0.01, 0.1, 0.5, 0.9] {
            let q = marginal_quantile(std::slice::from_ref(&m), 0, p);
            assert!((marginal_cdf(std::slice::from_ref(&m), 0, q) - p).abs() < 1e-10);
        }
        let g = SharedMixture::single(crate::gaussian::GaussParams::new(vec![0.0], CovMatrix::identity(1)).unwrap());
        let q = marginal_quantile(&[g], 0, 0.1);
        assert!((q - Normal::standard().inverse_cdf(0.1)).abs() < 1e-9);
    }

    #[test]
    fn type7_quantile_values() {
        let s = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(quantile_type7(&s, 0.5), 2.5);
        assert!((quantile_type7(&s, 0.1) - 1.3).abs() < 1e-15);
        assert_eq!(quantile_type7(&[7.0], 0.3), 7.0);
        assert_eq!(quantile_type7(&s, 1.0 - 1e-17), 4.0);
    }

    #[test]
    fn standard_normal_quantile_estimates() {
        let truth = Normal::standard().inverse_cdf(0.1);
        let mut ests: Vec<f64> = (0..20)
            .map(|seed| {
                let mut r = seeded(seed);
                let rows: Vec<Vec<f64>> = (0..1000).map(|_| vec![r.sample(rand_distr::StandardNormal)]).collect();
                let data = CompleteDataset::from_rows(1, &rows).unwrap();
                estimate(&data, &[Target::Quantile(0, 0.1)]).unwrap().entries[0].value.unwrap()
            })
            .collect();
        ests.sort_by(f64::total_cmp);
        let median = 0.5 * (ests[9] + ests[10]);
        assert!((median - truth).abs() < 0.15);
    }

    #[test]
    fn degenerate_correlations_are_flagged() {
        let lin = CompleteDataset::from_rows(2, &[vec![1.0, 3.0], vec![2.0, 5.0], vec![4.0, 9.0]]).unwrap();
        assert!((estimate(&lin, &[Target::Corr(0, 1)]).unwrap().entries[0].value.unwrap() - 1.0).abs() < 1e-15);
        let flat = CompleteDataset::from_rows(2, &[vec![1.0, 3.0], vec![1.0, 5.0], vec![1.0, 9.0]]).unwrap();
        let e = &estimate(&flat, &[Target::Corr(0, 1)]).unwrap().entries[0];
        assert_eq!((e.value, e.flag), (None, Flag::ConstantColumn));
        let two = CompleteDataset::from_rows(2, &[vec![1.0, 3.0], vec![2.0, 5.0]]).unwrap();
        assert_eq!(estimate(&two, &[Target::Corr(0, 1)]).unwrap().entries[0].flag, Flag::TooFewRows);
    }

    #[test]
    fn target_validation_and_parsing() {
        let data = CompleteDataset::from_rows(2, &[vec![1.0, 3.0]]).unwrap();
        assert!(estimate(&data, &[Target::Quantile(0, 1.0)]).is_err());
        assert!(estimate(&data, &[Target::Quantile(0, 0.0)]).is_err());
        assert!(estimate(&data, &[Target::Mean(2)]).is_err());
        let ts = parse_targets("mean:1, corr:1:2,quantile:1:0.1").unwrap();
        assert_eq!(ts, default_targets());
        for t in &ts {
            assert_eq!(&t.to_string().parse::<Target>().unwrap(), t);
        }
        assert_eq!(ts.iter().map(Target::label).collect::<Vec<_>>(), ["mean_x1", "corr_x1_x2", "q0.1_x1"]);
        assert!("median:1".parse::<Target>().is_err());
        assert!("mean:0".parse::<Target>().is_err());
    }

    #[test]
    fn naive_equals_estimate_without_masks() {
        let mut r = seeded(6);
        let rows: Vec<Vec<f64>> = (0..200).map(|_| (0..3).map(|_| r.random::<f64>()).collect()).collect();
        let data = CompleteDataset::from_rows(3, &rows).unwrap();
        let ts = [Target::Mean(2), Target::Corr(0, 2), Target::Quantile(1, 0.3)];
        assert_eq!(naive_baseline(&data.to_masked(), &ts).unwrap(), estimate(&data, &ts).unwrap());
    }

    #[test]
    fn naive_uses_available_cases() {
        let m = |obs: Vec<f64>, mask: &str| MaskedSample::new(obs, Mask::parse(mask).unwrap()).unwrap();
        let data = MaskedDataset::from_samples(
            2,
            vec![
                m(vec![1.0, 2.0], "00"),
                m(vec![3.0], "01"),
                m(vec![10.0], "10"),
                m(vec![5.0, 4.0], "00"),
                m(vec![2.0, 1.0], "00"),
            ],
        )
        .unwrap();
        let r = naive_baseline(&data, &[Target::Mean(0), Target::Mean(1), Target::Corr(0, 1)]).unwrap();
        assert_eq!(r.entries[0].value, Some(11.0 / 4.0));
        assert_eq!(r.entries[1].value, Some(17.0 / 4.0));
        let pairs = [(1.0, 2.0), (5.0, 4.0), (2.0, 1.0)];
        assert_eq!(r.entries[2].value, Some(pearson(&pairs).unwrap()));

        let never = MaskedDataset::from_samples(2, vec![m(vec![1.0], "01")]).unwrap();
        let r = naive_baseline(&never, &[Target::Mean(1)]).unwrap();
        assert_eq!(r.entries[0].flag, Flag::NeverObserved);
    }

    #[test]
    fn naive_mean_unbiased_under_mcar() {
        let mut r = seeded(8);
        let mut rows = Vec::new();
        for _ in 0..20_000 {
            let x: f64 = r.sample(rand_distr::StandardNormal);
            let y: f64 = 0.7 * x + r.sample::<f64, _>(rand_distr::StandardNormal);
            rows.push(if r.random::<f64>() < 0.5 {
                MaskedSample::new(vec![y], Mask::parse("10").unwrap()).unwrap()
            } else {
                MaskedSample::complete(&[x, y]).unwrap()
            });
        }
        let data = MaskedDataset::from_samples(2, rows).unwrap();
        let v = naive_baseline(&data, &[Target::Mean(0)]).unwrap().entries[0].value.unwrap();
        // sd of the mean with about 10^4 rows is 0.01
        assert!(v.abs() < 0.04, "{v}");
    }

    #[test]
    fn report_csv_round_trip() {
        let data = CompleteDataset::from_rows(2, &[vec![1.0, 3.0], vec![1.0, 5.0], vec![1.0, 9.0]]).unwrap();
        let r = estimate(&data, &[Target::Mean(1), Target::Corr(0, 1), Target::Quantile(1, 0.25)]).unwrap();
        let text = r.to_csv();
        assert!(text.starts_with("statistic,coords,value,flag\nmean,2,"));
        assert!(text.contains("corr,1:2,,constant_column"));
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("r.csv");
        r.write_csv(&path).unwrap();
        assert_eq!(Report::read_csv(&path).unwrap(), r);
    }

    #[test]
    fn functional_estimate_of_single_gaussian() {
        let cov = CovMatrix::from_rows(&[vec![1.0, 0.7], vec![0.7, 1.0]]).unwrap();
        let g = SharedMixture::single(crate::gaussian::GaussParams::new(vec![0.5, 0.0], cov).unwrap());
        let r = functional_estimate(&[g], &default_targets()).unwrap();
        assert!((r.value(&Target::Mean(0)).unwrap() - 0.5).abs() < 1e-15);
        assert!((r.value(&Target::Corr(0, 1)).unwrap() - 0.7).abs() < 1e-12);
        let q = 0.5 + Normal::standard().inverse_cdf(0.1);
        assert!((r.value(&Target::Quantile(0, 0.1)).unwrap() - q).abs() < 1e-9);
    }
}
