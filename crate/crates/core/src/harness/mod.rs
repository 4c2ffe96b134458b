//! Experiment orchestration behind the `bayes-mar` command line.
//!
//! An experiment is described by one flat config file (see [`crate::config`])
//! holding `scenario.*`, `mdm.*`, `prior.*`, `sampler.*` and `experiment.*`
//! keys. Every run directory gets a `manifest.cfg` with the full effective
//! config, from which the run can be repeated.
//!
//! All randomness derives from `experiment.seed` (or `--seed`). Replication
//! `r` uses `derive_seed(seed, r)` and each stage inside it derives its own
//! child seed from that, so replications can run in any order.

mod commands;
mod plot;
pub mod selftest;

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::config::{ConfigError, KvConfig};
use crate::data::{fmt_f64, DataError};
use crate::divergences::{DivergenceError, EnergyEstimator};
use crate::gaussian::KernelError;
use crate::mdm::{MdmError, MdmSpec, Scenario, ScenarioSpec};
use crate::predictive::{default_targets, functional_estimate, parse_targets, PredictiveError, Target};
use crate::sampler::{SamplerConfig, SamplerError};

pub use commands::{
    cmd_evaluate, cmd_fit, cmd_generate, cmd_scenario, cmd_simulate, run_replication, EvaluateInputs, ExtraMethod,
    ScenarioOutcome,
};
pub use plot::{boxplot_svg, plot_tables};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("config: {0}")]
    Config(String),
    #[error(transparent)]
    ConfigFile(#[from] ConfigError),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Mdm(#[from] MdmError),
    #[error(transparent)]
    Sampler(#[from] SamplerError),
    #[error(transparent)]
    Predictive(#[from] PredictiveError),
    #[error(transparent)]
    Divergence(#[from] DivergenceError),
    #[error(transparent)]
    Kernel(#[from] KernelError),
    #[error("{path}: {msg}")]
    Format { path: String, msg: String },
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> HarnessError + '_ {
    move |source| HarnessError::Io { path: path.display().to_string(), source }
}

/// Writes `contents` to a sibling temporary file and renames it into place.
pub fn write_atomic(path: &Path, contents: impl AsRef<[u8]>) -> Result<(), HarnessError> {
    if let Some(dir) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(io_err(dir))?;
    }
    let name = path.file_name().and_then(|s| s.to_str()).unwrap_or("out");
    let tmp = path.with_file_name(format!(".{name}.tmp"));
    fs::write(&tmp, contents).map_err(io_err(&tmp))?;
    fs::rename(&tmp, path).map_err(io_err(path))
}

/// Stage tags mixed into a replication seed.
pub(crate) mod tag {
    pub const DATA: u64 = 1;
    pub const MASK: u64 = 2;
    pub const FIT_MISSING: u64 = 3;
    pub const GEN_MISSING: u64 = 4;
    pub const FIT_COMPLETE: u64 = 5;
    pub const GEN_COMPLETE: u64 = 6;
    pub const REFERENCE: u64 = 7;
    pub const HELLINGER: u64 = 8;
}

#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub scenario: ScenarioSpec,
    pub mdm: MdmSpec,
    /// `prior.*` keys laid over the data-dependent defaults at fit time.
    pub prior_overrides: KvConfig,
    pub sampler: SamplerConfig,
    pub replications: usize,
    pub n_generate: usize,
    /// Size of the fresh truth sample the energy distance is measured against.
    pub reference_n: usize,
    pub targets: Vec<Target>,
    pub energy: EnergyEstimator,
    /// Draws for the Hellinger distance to the truth; 0 disables it.
    pub hellinger_n_mc: usize,
    /// Saved draws (evenly spaced) averaged into the posterior mean density.
    pub density_draws: usize,
    pub svg: bool,
    pub out: PathBuf,
}

impl ExperimentConfig {
    pub fn from_config(cfg: &KvConfig) -> Result<Self, HarnessError> {
        let seed: u64 = cfg.parsed_or("experiment.seed", 1)?;
        let mut scenario = ScenarioSpec::from_config(cfg)?;
        scenario.seed = seed;
        let mut sampler = SamplerConfig::from_config(cfg)?;
        sampler.seed = seed;
        let mut prior_overrides = KvConfig::new();
        for (k, v) in cfg.entries() {
            if k.starts_with("prior.") {
                prior_overrides.set(k, v);
            }
        }
        let targets = match cfg.get("experiment.targets") {
            Some(s) => parse_targets(s).map_err(HarnessError::Config)?,
            None => default_targets(),
        };
        let energy = match cfg.get("experiment.energy").unwrap_or("v") {
            "v" => EnergyEstimator::VStatistic,
            "u" => EnergyEstimator::UWithin,
            other => return Err(HarnessError::Config(format!("experiment.energy must be v or u, got {other:?}"))),
        };
        let exp = ExperimentConfig {
            seed,
            mdm: MdmSpec::from_config(cfg)?,
            prior_overrides,
            replications: cfg.parsed_or("experiment.replications", 10)?,
            n_generate: cfg.parsed_or("experiment.n_generate", 2000)?,
            reference_n: cfg.parsed_or("experiment.reference_n", 1000)?,
            targets,
            energy,
            hellinger_n_mc: cfg.parsed_or("experiment.hellinger_n_mc", 20_000)?,
            density_draws: cfg.parsed_or("experiment.density_draws", 50)?,
            svg: cfg.parsed_or("experiment.svg", false)?,
            out: PathBuf::from(cfg.get("experiment.out").unwrap_or("out")),
            scenario,
            sampler,
        };
        exp.validate()?;
        Ok(exp)
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let bad = |m: &str| Err(HarnessError::Config(m.into()));
        if self.replications == 0 {
            return bad("experiment.replications must be at least 1");
        }
        if self.n_generate == 0 || self.reference_n == 0 {
            return bad("experiment.n_generate and experiment.reference_n must be at least 1");
        }
        if self.density_draws == 0 {
            return bad("experiment.density_draws must be at least 1");
        }
        if self.scenario.n == 0 {
            return bad("scenario.n must be at least 1");
        }
        if self.mdm.dim() != self.scenario.scenario.dim() {
            return bad("mdm and scenario dimensions differ");
        }
        for t in &self.targets {
            t.validate(self.scenario.scenario.dim())?;
        }
        self.sampler.validate()?;
        Ok(())
    }

    /// Every key with defaults resolved. Output paths are not included, so
    /// manifests do not depend on where a run was written.
    pub fn to_config(&self) -> KvConfig {
        let mut cfg = KvConfig::new();
        self.scenario.to_config(&mut cfg);
        self.mdm.to_config(&mut cfg);
        self.sampler.to_config(&mut cfg);
        for (k, v) in self.prior_overrides.entries() {
            cfg.set(k, v);
        }
        cfg.set("experiment.seed", self.seed);
        cfg.set("experiment.replications", self.replications);
        cfg.set("experiment.n_generate", self.n_generate);
        cfg.set("experiment.reference_n", self.reference_n);
        cfg.set("experiment.targets", self.targets.iter().map(ToString::to_string).collect::<Vec<_>>().join(","));
        cfg.set("experiment.energy", if self.energy == EnergyEstimator::UWithin { "u" } else { "v" });
        cfg.set("experiment.hellinger_n_mc", self.hellinger_n_mc);
        cfg.set("experiment.density_draws", self.density_draws);
        cfg.set("experiment.svg", self.svg);
        cfg
    }

    /// Loads `path` (or an empty config), applies `key=value` overrides and
    /// `--seed`/`--out`.
    pub fn load(
        path: Option<&Path>,
        sets: &[String],
        seed: Option<u64>,
        out: Option<&Path>,
    ) -> Result<Self, HarnessError> {
        let mut cfg = match path {
            Some(p) => KvConfig::read(p)?,
            None => KvConfig::new(),
        };
        for s in sets {
            let (k, v) =
                s.split_once('=').ok_or_else(|| HarnessError::Config(format!("--set expects KEY=VALUE, got {s:?}")))?;
            cfg.set(k.trim(), v.trim());
        }
        if let Some(s) = seed {
            cfg.set("experiment.seed", s);
        }
        if let Some(o) = out {
            cfg.set("experiment.out", o.display());
        }
        Self::from_config(&cfg)
    }

    pub fn truth_available(&self) -> bool {
        self.scenario.scenario.gaussian_truth().is_some()
    }

    /// Metric names in output order.
    pub fn metrics(&self) -> Vec<String> {
        let mut m: Vec<String> = self.targets.iter().map(Target::label).collect();
        m.extend(self.targets.iter().map(|t| format!("fn_{}", t.label())));
        m.push("energy".into());
        if self.truth_available() && self.hellinger_n_mc > 0 {
            m.push("hellinger_sq".into());
        }
        m
    }
}

/// True value of each target under the scenario's complete-data law.
pub fn truth_values(scenario: &Scenario, targets: &[Target]) -> Result<Vec<f64>, HarnessError> {
    if let Some(mix) = scenario.gaussian_truth() {
        let r = functional_estimate(std::slice::from_ref(&mix), targets)?;
        return Ok(r.entries.iter().map(|e| e.value.unwrap_or(f64::NAN)).collect());
    }
    let Scenario::UniformCopula3d { rho } = scenario else { unreachable!("non-Gaussian scenarios are copulas") };
    Ok(targets
        .iter()
        .map(|t| match *t {
            Target::Mean(_) => 0.5,
            Target::Quantile(_, p) => p,
            Target::Corr(a, b) if (a.min(b), a.max(b)) == (0, 1) => 6.0 / std::f64::consts::PI * (rho / 2.0).asin(),
            Target::Corr(a, b) if a == b => 1.0,
            Target::Corr(..) => 0.0,
        })
        .collect())
}

pub const METHOD_MISSING: &str = "sampler_missing";
pub const METHOD_COMPLETE: &str = "sampler_complete";
pub const METHOD_NAIVE: &str = "naive";

pub const FLAG_NA: &str = "not_applicable";
pub const FLAG_FAILED: &str = "failed";

/// One line of `results.csv`.
#[derive(Debug, Clone, PartialEq)]
pub struct ResultRow {
    pub replication: usize,
    pub method: String,
    pub metric: String,
    pub value: Option<f64>,
    pub truth: Option<f64>,
    /// `value − truth` when both exist.
    pub error: Option<f64>,
    pub flag: String,
}

impl ResultRow {
    pub fn new(
        replication: usize,
        method: &str,
        metric: &str,
        value: Option<f64>,
        truth: Option<f64>,
        flag: &str,
    ) -> Self {
        let error = value.zip(truth).map(|(v, t)| v - t);
        ResultRow { replication, method: method.into(), metric: metric.into(), value, truth, error, flag: flag.into() }
    }
}

pub const RESULTS_HEADER: &str = "replication,method,metric,value,truth,error,flag";

fn opt(v: Option<f64>) -> String {
    v.map(fmt_f64).unwrap_or_default()
}

pub fn results_csv(rows: &[ResultRow]) -> String {
    let mut w = csv::WriterBuilder::new().from_writer(Vec::new());
    let header: Vec<&str> = RESULTS_HEADER.split(',').collect();
    w.write_record(&header).expect("in-memory write");
    for r in rows {
        w.write_record([
            r.replication.to_string(),
            r.method.clone(),
            r.metric.clone(),
            opt(r.value),
            opt(r.truth),
            opt(r.error),
            r.flag.clone(),
        ])
        .expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory write")).expect("utf-8 fields")
}

pub fn read_results_csv(path: impl AsRef<Path>) -> Result<Vec<ResultRow>, HarnessError> {
    let path = path.as_ref();
    let fmt = |msg: String| HarnessError::Format { path: path.display().to_string(), msg };
    let mut rdr = csv::Reader::from_path(path).map_err(|e| fmt(e.to_string()))?;
    let header = rdr.headers().map_err(|e| fmt(e.to_string()))?.iter().collect::<Vec<_>>().join(",");
    if header != RESULTS_HEADER {
        return Err(fmt(format!("unexpected header {header:?}")));
    }
    let num = |s: &str| -> Result<Option<f64>, HarnessError> {
        if s.is_empty() {
            Ok(None)
        } else {
            s.parse().map(Some).map_err(|_| fmt(format!("bad number {s:?}")))
        }
    };
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| fmt(e.to_string()))?;
        out.push(ResultRow {
            replication: rec[0].parse().map_err(|_| fmt(format!("bad replication {:?}", &rec[0])))?,
            method: rec[1].to_string(),
            metric: rec[2].to_string(),
            value: num(&rec[3])?,
            truth: num(&rec[4])?,
            error: num(&rec[5])?,
            flag: rec[6].to_string(),
        });
    }
    Ok(out)
}

/// Aggregate of one `(method, metric)` cell over replications.
#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub method: String,
    pub metric: String,
    pub n_ok: usize,
    pub n_failed: usize,
    pub median_value: Option<f64>,
    pub iqr_value: Option<f64>,
    pub median_abs_error: Option<f64>,
    pub iqr_abs_error: Option<f64>,
}

pub const SUMMARY_HEADER: &str = "method,metric,n_ok,n_failed,median_value,iqr_value,median_abs_error,iqr_abs_error";

fn median_iqr(mut v: Vec<f64>) -> (Option<f64>, Option<f64>) {
    if v.is_empty() {
        return (None, None);
    }
    v.sort_by(f64::total_cmp);
    let q = |p| crate::predictive::quantile_type7(&v, p);
    (Some(q(0.5)), Some(q(0.75) - q(0.25)))
}

/// Groups rows by `(method, metric)` in first-appearance order.
pub fn summarize(rows: &[ResultRow]) -> Vec<SummaryRow> {
    let mut keys: Vec<(String, String)> = Vec::new();
    for r in rows {
        let k = (r.method.clone(), r.metric.clone());
        if !keys.contains(&k) {
            keys.push(k);
        }
    }
    keys.into_iter()
        .map(|(method, metric)| {
            let cell: Vec<&ResultRow> = rows.iter().filter(|r| r.method == method && r.metric == metric).collect();
            let values: Vec<f64> = cell.iter().filter_map(|r| r.value).collect();
            let errors: Vec<f64> = cell.iter().filter_map(|r| r.error.map(f64::abs)).collect();
            let (median_value, iqr_value) = median_iqr(values.clone());
            let (median_abs_error, iqr_abs_error) = median_iqr(errors);
            SummaryRow {
                n_ok: values.len(),
                n_failed: cell.iter().filter(|r| r.flag == FLAG_FAILED).count(),
                method,
                metric,
                median_value,
                iqr_value,
                median_abs_error,
                iqr_abs_error,
            }
        })
        .collect()
}

pub fn summary_csv(rows: &[SummaryRow]) -> String {
    let mut out = format!("{SUMMARY_HEADER}\n");
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            r.method,
            r.metric,
            r.n_ok,
            r.n_failed,
            opt(r.median_value),
            opt(r.iqr_value),
            opt(r.median_abs_error),
            opt(r.iqr_abs_error)
        );
    }
    out
}

pub fn read_summary_csv(path: impl AsRef<Path>) -> Result<Vec<SummaryRow>, HarnessError> {
    let path = path.as_ref();
    let fmt = |msg: String| HarnessError::Format { path: path.display().to_string(), msg };
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    let mut lines = text.lines();
    if lines.next() != Some(SUMMARY_HEADER) {
        return Err(fmt("unexpected header".into()));
    }
    let num = |s: &str| -> Result<Option<f64>, HarnessError> {
        if s.is_empty() {
            Ok(None)
        } else {
            s.parse().map(Some).map_err(|_| fmt(format!("bad number {s:?}")))
        }
    };
    let count = |s: &str| s.parse::<usize>().map_err(|_| fmt(format!("bad count {s:?}")));
    lines
        .map(|line| {
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 8 {
                return Err(fmt(format!("expected 8 fields in {line:?}")));
            }
            Ok(SummaryRow {
                method: f[0].into(),
                metric: f[1].into(),
                n_ok: count(f[2])?,
                n_failed: count(f[3])?,
                median_value: num(f[4])?,
                iqr_value: num(f[5])?,
                median_abs_error: num(f[6])?,
                iqr_abs_error: num(f[7])?,
            })
        })
        .collect()
}
