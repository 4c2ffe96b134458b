//! Scenario distributions and missing-data mechanisms.
//!
//! [`ScenarioSpec`] describes the complete-data law, [`MdmSpec`] the
//! conditional law of the mask given the complete point. Masking a dataset
//! draws each row's pattern from its own random stream (`rng::stream(base, i)`
//! with `base` taken once from the caller's generator), so row `i` gets the
//! same mask whatever order rows are visited in.

use std::fmt;
use std::sync::Arc;

use nalgebra::DMatrix;
use rand::Rng;
use statrs::function::erf::erfc;
use thiserror::Error;

use crate::config::{format_matrix, format_vector, ConfigError, KvConfig};
use crate::data::{CompleteDataset, DataError, Mask, MaskedDataset, MaskedSample};
use crate::gaussian::{categorical_index, mvn_sample_lower, CovMatrix, GaussParams, KernelError, SharedMixture};
use crate::rng;

#[derive(Debug, Error)]
pub enum MdmError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("dimension mismatch: expected {expected}, found {found}")]
    Dimension { expected: usize, found: usize },
    #[error(transparent)]
    Kernel(#[from] KernelError),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    ConfigFile(#[from] ConfigError),
}

/// Standard normal CDF via the complementary error function.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / std::f64::consts::SQRT_2)
}

/// `G(x) = max(Φ(x), 2δ)`.
pub fn g_func(x: f64, delta: f64) -> Result<f64, MdmError> {
    check_delta(delta)?;
    Ok(normal_cdf(x).max(2.0 * delta))
}

fn check_delta(delta: f64) -> Result<(), MdmError> {
    if !(delta > 0.0 && delta < 0.5) {
        return Err(MdmError::Config(format!("delta {delta} outside (0, 1/2)")));
    }
    Ok(())
}

/// Probability vector over a pattern list as a function of the complete point.
pub type PatternProbFn = Arc<dyn Fn(&[f64]) -> Vec<f64> + Send + Sync>;

/// Conditional law of the mask given the complete point.
#[derive(Clone)]
pub enum MdmSpec {
    /// Three patterns `000`, `010`, `100` with probabilities
    /// `(G(x1)+G(x2))/3`, `(2-G(x1))/3`, `(1-G(x2))/3`, `G = max(Φ, 2δ)`.
    StepMar3d { delta: f64 },
    /// The same three patterns with `G(x) = x` clamped to `[0, 1]`, for data
    /// with uniform marginals.
    UniformMar3d,
    /// Pattern probabilities independent of the data.
    Mcar { patterns: Vec<Mask>, probs: Vec<f64> },
    /// Arbitrary pattern list with a user-supplied probability function.
    TablePattern { patterns: Vec<Mask>, prob_fn: PatternProbFn },
}

impl fmt::Debug for MdmSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MdmSpec::StepMar3d { delta } => write!(f, "StepMar3d {{ delta: {delta} }}"),
            MdmSpec::UniformMar3d => f.write_str("UniformMar3d"),
            MdmSpec::Mcar { patterns, probs } => write!(f, "Mcar {{ patterns: {patterns:?}, probs: {probs:?} }}"),
            MdmSpec::TablePattern { patterns, .. } => write!(f, "TablePattern {{ patterns: {patterns:?} }}"),
        }
    }
}

fn step_patterns() -> Vec<Mask> {
    ["000", "010", "100"].iter().map(|s| Mask::parse(s).expect("literal mask")).collect()
}

impl MdmSpec {
    pub fn step_mar3d(delta: f64) -> Result<Self, MdmError> {
        check_delta(delta)?;
        Ok(MdmSpec::StepMar3d { delta })
    }

    /// Every mask observed with probability one.
    pub fn fully_observed(d: usize) -> Self {
        MdmSpec::Mcar { patterns: vec![Mask::all_observed(d)], probs: vec![1.0] }
    }

    pub fn validate(&self) -> Result<(), MdmError> {
        match self {
            MdmSpec::StepMar3d { delta } => check_delta(*delta),
            MdmSpec::UniformMar3d => Ok(()),
            MdmSpec::Mcar { patterns, probs } => {
                check_patterns(patterns)?;
                if probs.len() != patterns.len() {
                    return Err(MdmError::Config("one probability per pattern required".into()));
                }
                check_simplex(probs)
            }
            MdmSpec::TablePattern { patterns, .. } => check_patterns(patterns),
        }
    }

    pub fn dim(&self) -> usize {
        self.patterns()[0].dim()
    }

    pub fn patterns(&self) -> Vec<Mask> {
        match self {
            MdmSpec::StepMar3d { .. } | MdmSpec::UniformMar3d => step_patterns(),
            MdmSpec::Mcar { patterns, .. } | MdmSpec::TablePattern { patterns, .. } => patterns.clone(),
        }
    }

    /// Probabilities over [`MdmSpec::patterns`] at the complete point `x`.
    pub fn pattern_probs(&self, x: &[f64]) -> Result<Vec<f64>, MdmError> {
        let d = self.dim();
        if x.len() != d {
            return Err(MdmError::Dimension { expected: d, found: x.len() });
        }
        let probs = match self {
            MdmSpec::StepMar3d { delta } => {
                let g1 = g_func(x[0], *delta)?;
                let g2 = g_func(x[1], *delta)?;
                step_probs(g1, g2)
            }
            MdmSpec::UniformMar3d => step_probs(x[0].clamp(0.0, 1.0), x[1].clamp(0.0, 1.0)),
            MdmSpec::Mcar { probs, .. } => probs.clone(),
            MdmSpec::TablePattern { patterns, prob_fn } => {
                let p = prob_fn(x);
                if p.len() != patterns.len() {
                    return Err(MdmError::Dimension { expected: patterns.len(), found: p.len() });
                }
                check_simplex(&p)?;
                p
            }
        };
        Ok(probs)
    }

    /// Draws a pattern for `x` with a uniform variate `u`.
    pub fn draw_pattern(&self, x: &[f64], u: f64) -> Result<Mask, MdmError> {
        let probs = self.pattern_probs(x)?;
        Ok(self.patterns()[categorical_index(&probs, u)])
    }

    pub fn to_config(&self, cfg: &mut KvConfig) {
        match self {
            MdmSpec::StepMar3d { delta } => {
                cfg.set("mdm.kind", "step_mar3d");
                cfg.set("mdm.delta", delta);
            }
            MdmSpec::UniformMar3d => cfg.set("mdm.kind", "uniform_mar3d"),
            MdmSpec::Mcar { patterns, probs } => {
                cfg.set("mdm.kind", "mcar");
                cfg.set("mdm.patterns", patterns.iter().map(ToString::to_string).collect::<Vec<_>>().join(";"));
                cfg.set("mdm.probs", format_vector(probs));
            }
            MdmSpec::TablePattern { patterns, .. } => {
                cfg.set("mdm.kind", "table");
                cfg.set("mdm.patterns", patterns.iter().map(ToString::to_string).collect::<Vec<_>>().join(";"));
            }
        }
    }

    pub fn from_config(cfg: &KvConfig) -> Result<Self, MdmError> {
        let kind = cfg.get("mdm.kind").unwrap_or("step_mar3d");
        let spec = match kind {
            "step_mar3d" => MdmSpec::StepMar3d { delta: cfg.parsed_or("mdm.delta", 0.05)? },
            "uniform_mar3d" => MdmSpec::UniformMar3d,
            "mcar" => {
                let patterns = cfg
                    .get("mdm.patterns")
                    .ok_or_else(|| ConfigError::Missing("mdm.patterns".into()))?
                    .split(';')
                    .map(Mask::parse)
                    .collect::<Result<Vec<_>, _>>()?;
                let probs = cfg.vector("mdm.probs")?.ok_or_else(|| ConfigError::Missing("mdm.probs".into()))?;
                MdmSpec::Mcar { patterns, probs }
            }
            other => return Err(MdmError::Config(format!("unknown mdm.kind {other:?}"))),
        };
        spec.validate()?;
        Ok(spec)
    }
}

fn step_probs(g1: f64, g2: f64) -> Vec<f64> {
    vec![(g1 + g2) / 3.0, (2.0 - g1) / 3.0, (1.0 - g2) / 3.0]
}

fn check_patterns(patterns: &[Mask]) -> Result<(), MdmError> {
    let Some(first) = patterns.first() else {
        return Err(MdmError::Config("empty pattern list".into()));
    };
    if let Some(p) = patterns.iter().find(|p| p.is_empty_pattern()) {
        return Err(MdmError::Config(format!("all-missing pattern {p} not allowed")));
    }
    if patterns.iter().any(|p| p.dim() != first.dim()) {
        return Err(MdmError::Config("patterns of different lengths".into()));
    }
    Ok(())
}

fn check_simplex(p: &[f64]) -> Result<(), MdmError> {
    let total: f64 = p.iter().sum();
    if p.iter().any(|v| !(*v >= 0.0)) || (total - 1.0).abs() > 1e-12 {
        return Err(MdmError::Config(format!("probabilities {p:?} are not a simplex")));
    }
    Ok(())
}

/// Masks every row of `data` under `spec`.
pub fn apply_mdm<R: Rng + ?Sized>(
    data: &CompleteDataset,
    spec: &MdmSpec,
    rng: &mut R,
) -> Result<MaskedDataset, MdmError> {
    spec.validate()?;
    if spec.dim() != data.dim() {
        return Err(MdmError::Dimension { expected: spec.dim(), found: data.dim() });
    }
    let base: u64 = rng.random();
    let rows = data
        .rows()
        .enumerate()
        .map(|(i, x)| {
            let u: f64 = rng::stream(base, i as u64).random();
            let mask = spec.draw_pattern(x, u)?;
            let observed = mask.observed_indices().iter().map(|&j| x[j]).collect();
            Ok(MaskedSample::new(observed, mask)?)
        })
        .collect::<Result<Vec<_>, MdmError>>()?;
    Ok(MaskedDataset::from_samples(data.dim(), rows)?)
}

/// Σ with unit diagonal and correlation 0.7 between the first two coordinates.
pub fn reference_covariance() -> CovMatrix {
    CovMatrix::from_rows(&[vec![1.0, 0.7, 0.0], vec![0.7, 1.0, 0.0], vec![0.0, 0.0, 1.0]]).expect("SPD literal")
}

#[derive(Debug, Clone, PartialEq)]
pub enum Scenario {
    Gauss3d {
        cov: CovMatrix,
    },
    GaussMixture3d {
        weights: Vec<f64>,
        means: Vec<Vec<f64>>,
        cov: CovMatrix,
    },
    /// Gaussian copula with correlation `rho` between coordinates 1 and 2,
    /// coordinate 3 independent, all marginals Uniform(0, 1).
    UniformCopula3d {
        rho: f64,
    },
}

impl Scenario {
    pub fn gauss3d() -> Self {
        Scenario::Gauss3d { cov: reference_covariance() }
    }

    /// Weights 0.3/0.4/0.3 with means `(-3,0,0)`, `(0,3,0)`, `(-3,0,0)`;
    /// the first and third means coincide on purpose.
    pub fn reference_mixture() -> Self {
        Scenario::GaussMixture3d {
            weights: vec![0.3, 0.4, 0.3],
            means: vec![vec![-3.0, 0.0, 0.0], vec![0.0, 3.0, 0.0], vec![-3.0, 0.0, 0.0]],
            cov: reference_covariance(),
        }
    }

    pub fn uniform_copula() -> Self {
        Scenario::UniformCopula3d { rho: 0.7 }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Scenario::Gauss3d { .. } => "gauss3d",
            Scenario::GaussMixture3d { .. } => "gauss_mixture3d",
            Scenario::UniformCopula3d { .. } => "uniform_copula3d",
        }
    }

    pub fn dim(&self) -> usize {
        3
    }

    /// The complete-data density when it is a Gaussian mixture.
    pub fn gaussian_truth(&self) -> Option<SharedMixture> {
        match self {
            Scenario::Gauss3d { cov } => {
                Some(SharedMixture::single(GaussParams::new(vec![0.0; 3], cov.clone()).expect("dimensions agree")))
            }
            Scenario::GaussMixture3d { weights, means, cov } => {
                SharedMixture::new(weights.clone(), means.clone(), cov.clone()).ok()
            }
            Scenario::UniformCopula3d { .. } => None,
        }
    }

    fn copula_cov(rho: f64) -> Result<CovMatrix, MdmError> {
        Ok(CovMatrix::from_rows(&[vec![1.0, rho, 0.0], vec![rho, 1.0, 0.0], vec![0.0, 0.0, 1.0]])?)
    }

    pub fn validate(&self) -> Result<(), MdmError> {
        match self {
            Scenario::Gauss3d { cov } if cov.dim() != 3 => {
                Err(MdmError::Config("Gauss3d needs a 3x3 covariance".into()))
            }
            Scenario::GaussMixture3d { weights, means, cov } => {
                if cov.dim() != 3 || means.iter().any(|m| m.len() != 3) || means.len() != weights.len() {
                    return Err(MdmError::Config("mixture dimensions must be 3".into()));
                }
                let total: f64 = weights.iter().sum();
                if weights.iter().any(|w| !(*w >= 0.0)) || (total - 1.0).abs() > 1e-12 {
                    return Err(MdmError::Config(format!("mixture weights sum to {total}")));
                }
                Ok(())
            }
            Scenario::UniformCopula3d { rho } => {
                if !(rho.abs() < 1.0) {
                    return Err(MdmError::Config(format!("copula rho {rho} outside (-1, 1)")));
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }

    /// One draw from the complete-data law.
    pub fn sample_point<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        match self {
            Scenario::Gauss3d { cov } => mvn_sample_lower(&[0.0; 3], cov.lower(), rng),
            Scenario::GaussMixture3d { weights, means, cov } => {
                let k = categorical_index(weights, rng.random());
                mvn_sample_lower(&means[k], cov.lower(), rng)
            }
            Scenario::UniformCopula3d { rho } => {
                let cov = Self::copula_cov(*rho).expect("validated rho");
                mvn_sample_lower(&[0.0; 3], cov.lower(), rng).into_iter().map(normal_cdf).collect()
            }
        }
    }

    /// Draws `n` points.
    pub fn sample<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Result<CompleteDataset, MdmError> {
        self.validate()?;
        let mut buf = Vec::with_capacity(n * 3);
        match self {
            Scenario::UniformCopula3d { rho } => {
                let cov = Self::copula_cov(*rho)?;
                for _ in 0..n {
                    buf.extend(mvn_sample_lower(&[0.0; 3], cov.lower(), rng).into_iter().map(normal_cdf));
                }
            }
            _ => {
                for _ in 0..n {
                    buf.extend(self.sample_point(rng));
                }
            }
        }
        Ok(CompleteDataset::new(3, buf)?)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioSpec {
    pub scenario: Scenario,
    pub n: usize,
    pub seed: u64,
}

impl ScenarioSpec {
    pub fn to_config(&self, cfg: &mut KvConfig) {
        cfg.set("scenario.kind", self.scenario.name());
        cfg.set("scenario.n", self.n);
        cfg.set("scenario.seed", self.seed);
        match &self.scenario {
            Scenario::Gauss3d { cov } => cfg.set("gauss.cov", format_matrix(&cov.to_rows())),
            Scenario::GaussMixture3d { weights, means, cov } => {
                cfg.set("mixture.weights", format_vector(weights));
                cfg.set("mixture.means", format_matrix(means));
                cfg.set("mixture.cov", format_matrix(&cov.to_rows()));
            }
            Scenario::UniformCopula3d { rho } => cfg.set("copula.rho", rho),
        }
    }

    pub fn from_config(cfg: &KvConfig) -> Result<Self, MdmError> {
        let kind = cfg.get("scenario.kind").unwrap_or("gauss3d");
        let cov_or_default = |key: &str| -> Result<CovMatrix, MdmError> {
            match cfg.matrix(key)? {
                Some(rows) => Ok(CovMatrix::from_rows(&rows)?),
                None => Ok(reference_covariance()),
            }
        };
        let scenario = match kind {
            "gauss3d" => Scenario::Gauss3d { cov: cov_or_default("gauss.cov")? },
            "gauss_mixture3d" => {
                let Scenario::GaussMixture3d { weights, means, .. } = Scenario::reference_mixture() else {
                    unreachable!()
                };
                Scenario::GaussMixture3d {
                    weights: cfg.vector("mixture.weights")?.unwrap_or(weights),
                    means: cfg.matrix("mixture.means")?.unwrap_or(means),
                    cov: cov_or_default("mixture.cov")?,
                }
            }
            "uniform_copula3d" => Scenario::UniformCopula3d { rho: cfg.parsed_or("copula.rho", 0.7)? },
            other => return Err(MdmError::Config(format!("unknown scenario.kind {other:?}"))),
        };
        scenario.validate()?;
        Ok(ScenarioSpec { scenario, n: cfg.parsed_or("scenario.n", 1000)?, seed: cfg.parsed_or("scenario.seed", 1)? })
    }
}

/// `n` i.i.d. draws from the scenario, deterministic given the generator.
pub fn simulate_complete<R: Rng + ?Sized>(spec: &ScenarioSpec, rng: &mut R) -> Result<CompleteDataset, MdmError> {
    spec.scenario.sample(spec.n, rng)
}

/// Sample covariance with divisor `n − 1`.
pub fn sample_covariance(data: &CompleteDataset) -> DMatrix<f64> {
    let d = data.dim();
    let n = data.len() as f64;
    let mut mean = vec![0.0; d];
    for r in data.rows() {
        for j in 0..d {
            mean[j] += r[j] / n;
        }
    }
    let mut c = DMatrix::zeros(d, d);
    for r in data.rows() {
        for a in 0..d {
            for b in 0..d {
                c[(a, b)] += (r[a] - mean[a]) * (r[b] - mean[b]) / (n - 1.0);
            }
        }
    }
    c
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;

    #[test]
    fn g_func_values() {
        assert!((g_func(8.0, 0.05).unwrap() - 1.0).abs() < 1e-15);
        assert_eq!(g_func(-10.0, 0.05).unwrap(), 0.1);
        assert!((g_func(0.0, 0.05).unwrap() - 0.5).abs() < 1e-16);
        assert!(g_func(0.0, 0.5).is_err());
        assert!(g_func(0.0, 0.0).is_err());
    }

    #[test]
    fn normal_cdf_reference_values() {
        // Φ(-1.2815515655446004) = 0.1, Φ(1.959963984540054) = 0.975
        assert!((normal_cdf(-1.281_551_565_544_600_4) - 0.1).abs() < 1e-10);
        assert!((normal_cdf(1.959_963_984_540_054) - 0.975).abs() < 1e-10);
        assert!(normal_cdf(-40.0) >= 0.0);
    }

    #[test]
    fn step_probs_examples() {
        let spec = MdmSpec::step_mar3d(0.05).unwrap();
        let p = spec.pattern_probs(&[0.0, 0.0, 4.0]).unwrap();
        for (a, b) in p.iter().zip([1.0 / 3.0, 0.5, 1.0 / 6.0]) {
            assert!((a - b).abs() < 1e-15);
        }
        let p = spec.pattern_probs(&[-10.0, -10.0, 0.0]).unwrap();
        for (a, b) in p.iter().zip([0.2 / 3.0, 1.9 / 3.0, 0.9 / 3.0]) {
            assert!((a - b).abs() < 1e-15);
        }
        assert!(spec.pattern_probs(&[0.0, 0.0]).is_err());
    }

    #[test]
    fn degenerate_mcar() {
        let spec = MdmSpec::Mcar {
            patterns: vec![Mask::parse("000").unwrap(), Mask::parse("010").unwrap(), Mask::parse("100").unwrap()],
            probs: vec![1.0, 0.0, 0.0],
        };
        assert_eq!(spec.pattern_probs(&[5.0, -1.0, 2.0]).unwrap(), vec![1.0, 0.0, 0.0]);
    }

    #[test]
    fn mdm_validation() {
        assert!(MdmSpec::step_mar3d(0.7).is_err());
        let bad = MdmSpec::Mcar { patterns: vec![Mask::parse("11").unwrap()], probs: vec![1.0] };
        assert!(bad.validate().is_err());
        let bad = MdmSpec::Mcar { patterns: vec![Mask::parse("00").unwrap()], probs: vec![0.9] };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn identity_mechanism_passes_through() {
        let mut rng = seeded(3);
        let data = Scenario::gauss3d().sample(50, &mut rng).unwrap();
        let masked = apply_mdm(&data, &MdmSpec::fully_observed(3), &mut rng).unwrap();
        assert_eq!(masked, data.to_masked());
    }

    #[test]
    fn masking_is_deterministic_and_valid() {
        let data = Scenario::gauss3d().sample(500, &mut seeded(1)).unwrap();
        let spec = MdmSpec::step_mar3d(0.05).unwrap();
        let a = apply_mdm(&data, &spec, &mut seeded(2)).unwrap();
        let b = apply_mdm(&data, &spec, &mut seeded(2)).unwrap();
        assert_eq!(a, b);
        assert!(a.validate().is_ok());
        assert!(a.rows().iter().all(|r| !r.mask().is_empty_pattern()));
        assert!(a.pattern_census().len() > 1);
    }

    #[test]
    fn table_pattern_checks_output() {
        let spec = MdmSpec::TablePattern {
            patterns: vec![Mask::parse("00").unwrap(), Mask::parse("01").unwrap()],
            prob_fn: Arc::new(|x: &[f64]| if x[0] > 0.0 { vec![1.0, 0.0] } else { vec![0.4, 0.6] }),
        };
        assert_eq!(spec.pattern_probs(&[1.0, 0.0]).unwrap(), vec![1.0, 0.0]);
        assert_eq!(spec.draw_pattern(&[-1.0, 0.0], 0.5).unwrap().to_string(), "01");
    }

    #[test]
    fn config_round_trip() {
        for scenario in [Scenario::gauss3d(), Scenario::reference_mixture(), Scenario::uniform_copula()] {
            let spec = ScenarioSpec { scenario, n: 77, seed: 9 };
            let mut cfg = KvConfig::new();
            spec.to_config(&mut cfg);
            let back = ScenarioSpec::from_config(&KvConfig::parse(&cfg.to_string()).unwrap()).unwrap();
            assert_eq!(back, spec);
        }
        let mut cfg = KvConfig::new();
        MdmSpec::step_mar3d(0.05).unwrap().to_config(&mut cfg);
        assert!(matches!(MdmSpec::from_config(&cfg).unwrap(), MdmSpec::StepMar3d { delta } if delta == 0.05));
    }

    #[test]
    fn mixture_rejects_bad_weights() {
        let Scenario::GaussMixture3d { means, cov, .. } = Scenario::reference_mixture() else { unreachable!() };
        let s = Scenario::GaussMixture3d { weights: vec![0.3, 0.3, 0.3], means, cov };
        assert!(s.validate().is_err());
    }

    #[test]
    fn gauss3d_sample_covariance() {
        let data = Scenario::gauss3d().sample(20_000, &mut seeded(4)).unwrap();
        let c = sample_covariance(&data);
        assert!((c[(0, 1)] - 0.7).abs() < 0.03);
        assert!((c[(2, 2)] - 1.0).abs() < 0.05);
    }
}
