use std::fs;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rayon::prelude::*;

use super::{
    io_err, plot, results_csv, summarize, summary_csv, tag, truth_values, write_atomic, ExperimentConfig, HarnessError,
    ResultRow, SummaryRow, FLAG_FAILED, FLAG_NA, METHOD_COMPLETE, METHOD_MISSING, METHOD_NAIVE,
};
use crate::config::KvConfig;
use crate::data::{
    read_complete_csv, read_masked_csv, write_complete_csv, write_masked_csv, CompleteDataset, MaskedDataset,
};
use crate::divergences::{energy_distance, hellinger_mc, DensityModel};
use crate::gaussian::SharedMixture;
use crate::mdm::{apply_mdm, simulate_complete};
use crate::predictive::{
    estimate, functional_estimate, generate, naive_baseline, posterior_mixtures, Flag, Report, Target,
};
use crate::rng::{derive_seed, seeded};
use crate::sampler::{diagnostics_csv, read_draws_dir, run_sampler, write_draws_dir, PosteriorDraws, PriorHyper};

/// Token written for absent cells.
pub const ABSENT: &str = "NA";

/// An externally produced complete (imputed) dataset scored like the
/// built-in methods. `{rep}` in the path is replaced by the replication
/// number.
#[derive(Debug, Clone, PartialEq)]
pub struct ExtraMethod {
    pub name: String,
    pub path: String,
}

impl ExtraMethod {
    pub fn path_for(&self, rep: usize) -> PathBuf {
        PathBuf::from(self.path.replace("{rep}", &rep.to_string()))
    }
}

impl FromStr for ExtraMethod {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let (name, path) = s.split_once('=').ok_or_else(|| format!("expected NAME=PATH, got {s:?}"))?;
        let name = name.trim();
        let reserved = [METHOD_MISSING, METHOD_COMPLETE, METHOD_NAIVE];
        if name.is_empty() || name.contains(',') || reserved.contains(&name) {
            return Err(format!("invalid method name {name:?}"));
        }
        Ok(ExtraMethod { name: name.into(), path: path.trim().into() })
    }
}

fn rep_seed(exp: &ExperimentConfig, rep: usize) -> u64 {
    derive_seed(exp.seed, rep as u64)
}

fn manifest(exp: &ExperimentConfig, command: &str) -> KvConfig {
    let mut cfg = exp.to_config();
    cfg.set("run.command", command);
    cfg.set("run.version", env!("CARGO_PKG_VERSION"));
    cfg
}

fn write_manifest(cfg: &KvConfig, dir: &Path) -> Result<(), HarnessError> {
    write_atomic(&dir.join("manifest.cfg"), cfg.to_string())
}

/// Runs `write` against a temporary sibling of `path`, then renames.
fn atomic_with<E>(path: &Path, write: impl FnOnce(&Path) -> Result<(), E>) -> Result<(), HarnessError>
where
    HarnessError: From<E>,
{
    let name = path.file_name().and_then(|s| s.to_str()).unwrap_or("out");
    let tmp = path.with_file_name(format!(".{name}.tmp"));
    write(&tmp)?;
    fs::rename(&tmp, path).map_err(io_err(path))
}

fn simulate_rep(exp: &ExperimentConfig, rep: usize) -> Result<(CompleteDataset, MaskedDataset), HarnessError> {
    let s = rep_seed(exp, rep);
    let complete = simulate_complete(&exp.scenario, &mut seeded(derive_seed(s, tag::DATA)))?;
    let masked = apply_mdm(&complete, &exp.mdm, &mut seeded(derive_seed(s, tag::MASK)))?;
    Ok((complete, masked))
}

/// Writes `complete.csv`, `masked.csv` and `manifest.cfg` for replication 1
/// of the experiment.
pub fn cmd_simulate(exp: &ExperimentConfig) -> Result<(CompleteDataset, MaskedDataset), HarnessError> {
    let (complete, masked) = simulate_rep(exp, 1)?;
    fs::create_dir_all(&exp.out).map_err(io_err(&exp.out))?;
    atomic_with(&exp.out.join("complete.csv"), |p| write_complete_csv(&complete, p))?;
    atomic_with(&exp.out.join("masked.csv"), |p| write_masked_csv(&masked, p, ABSENT))?;
    write_manifest(&manifest(exp, "simulate"), &exp.out)?;
    Ok((complete, masked))
}

fn fit(exp: &ExperimentConfig, data: &MaskedDataset, seed: u64) -> Result<PosteriorDraws, HarnessError> {
    let prior = PriorHyper::defaults_for(data)?.overridden(&exp.prior_overrides)?;
    Ok(run_sampler(data, &prior, &exp.sampler, &mut seeded(seed))?)
}

/// Fits the sampler to a masked CSV and writes the draws directory plus a
/// manifest with the resolved prior.
pub fn cmd_fit(exp: &ExperimentConfig, data_path: &Path) -> Result<PosteriorDraws, HarnessError> {
    let data = read_masked_csv(data_path, ABSENT)?;
    let draws = fit(exp, &data, derive_seed(rep_seed(exp, 1), tag::FIT_MISSING))?;
    write_draws_dir(&draws, &exp.out)?;
    let mut cfg = manifest(exp, "fit");
    draws.prior.to_config(&mut cfg);
    cfg.set("run.data", data_path.display());
    write_manifest(&cfg, &exp.out)?;
    Ok(draws)
}

/// Draws `n_out` complete rows (default `experiment.n_generate`) into
/// `generated.csv`.
pub fn cmd_generate(
    exp: &ExperimentConfig,
    draws_dir: &Path,
    n_out: Option<usize>,
) -> Result<CompleteDataset, HarnessError> {
    let draws = read_draws_dir(draws_dir)?;
    let n = n_out.unwrap_or(exp.n_generate);
    if n == 0 {
        return Err(HarnessError::Config("n_out must be at least 1".into()));
    }
    let gen = generate(&draws, n, &mut seeded(derive_seed(rep_seed(exp, 1), tag::GEN_MISSING)))?;
    fs::create_dir_all(&exp.out).map_err(io_err(&exp.out))?;
    atomic_with(&exp.out.join("generated.csv"), |p| write_complete_csv(&gen.rows, p))?;
    let mut cfg = manifest(exp, "generate");
    cfg.set("run.draws", draws_dir.display());
    cfg.set("run.n_out", n);
    write_manifest(&cfg, &exp.out)?;
    Ok(gen.rows)
}

enum Cell {
    Value(f64),
    Flag(&'static str),
}

type Scores = Vec<(String, Cell)>;

fn report_cells(prefix: &str, r: &Report) -> Scores {
    r.entries
        .iter()
        .map(|e| {
            let cell = match (e.value, e.flag) {
                (Some(v), Flag::Ok) => Cell::Value(v),
                (_, f) => Cell::Flag(f.as_str()),
            };
            (format!("{prefix}{}", e.target.label()), cell)
        })
        .collect()
}

/// Truth per metric name: the target truths, shared by the `fn_` metrics.
struct Truth(Vec<(String, f64)>);

impl Truth {
    fn new(targets: &[Target], values: &[f64]) -> Self {
        let mut v = Vec::new();
        for (t, &x) in targets.iter().zip(values) {
            v.push((t.label(), x));
            v.push((format!("fn_{}", t.label()), x));
        }
        Truth(v)
    }

    fn get(&self, metric: &str) -> Option<f64> {
        self.0.iter().find(|(m, _)| m == metric).map(|(_, x)| *x).filter(|x| x.is_finite())
    }
}

fn rows_for(
    metrics: &[String],
    rep: usize,
    method: &str,
    scores: &Result<Scores, HarnessError>,
    truth: &Truth,
) -> Vec<ResultRow> {
    metrics
        .iter()
        .map(|m| {
            let t = truth.get(m);
            match scores {
                Err(_) => ResultRow::new(rep, method, m, None, t, FLAG_FAILED),
                Ok(s) => match s.iter().find(|(k, _)| k == m).map(|(_, c)| c) {
                    Some(Cell::Value(v)) => ResultRow::new(rep, method, m, Some(*v), t, ""),
                    Some(Cell::Flag(f)) => ResultRow::new(rep, method, m, None, t, f),
                    None => ResultRow::new(rep, method, m, None, t, FLAG_NA),
                },
            }
        })
        .collect()
}

/// `m` draws spaced evenly through the saved sequence.
fn thin_mixtures(all: &[SharedMixture], m: usize) -> Vec<SharedMixture> {
    let t = all.len();
    let m = m.min(t);
    (0..m).map(|i| all[i * t / m].clone()).collect()
}

fn truth_model(exp: &ExperimentConfig) -> Option<DensityModel> {
    exp.scenario.scenario.gaussian_truth().map(|m| {
        if m.weights().len() == 1 {
            DensityModel::SingleGauss(m)
        } else {
            DensityModel::GaussMixtureShared(m)
        }
    })
}

/// Scores derived from posterior draws: functionals and, when the truth is
/// a Gaussian mixture, the squared Hellinger distance of the posterior mean
/// density to it.
fn draw_scores(exp: &ExperimentConfig, draws: &PosteriorDraws, hellinger_seed: u64) -> Result<Scores, HarnessError> {
    let mixtures = posterior_mixtures(draws)?;
    let mut s = report_cells("fn_", &functional_estimate(&mixtures, &exp.targets)?);
    if let (Some(truth), true) = (truth_model(exp), exp.hellinger_n_mc > 0) {
        let avg = DensityModel::PosteriorAverage(thin_mixtures(&mixtures, exp.density_draws));
        let h = hellinger_mc(&avg, &truth, exp.hellinger_n_mc, &mut seeded(hellinger_seed))?;
        s.push(("hellinger_sq".into(), Cell::Value(h.value)));
    }
    Ok(s)
}

fn sample_scores(
    exp: &ExperimentConfig,
    sample: &CompleteDataset,
    reference: &CompleteDataset,
) -> Result<Scores, HarnessError> {
    let mut s = report_cells("", &estimate(sample, &exp.targets)?);
    s.push(("energy".into(), Cell::Value(energy_distance(sample, reference, exp.energy)?)));
    Ok(s)
}

struct SamplerRun<'a> {
    method: &'a str,
    fit_tag: u64,
    gen_tag: u64,
}

fn sampler_method(
    exp: &ExperimentConfig,
    run: &SamplerRun,
    data: &MaskedDataset,
    seed: u64,
    reference: &CompleteDataset,
    dir: Option<&Path>,
) -> Result<Scores, HarnessError> {
    let draws = fit(exp, data, derive_seed(seed, run.fit_tag))?;
    if let Some(dir) = dir {
        let dir = dir.join(run.method);
        let mut cfg = KvConfig::new();
        draws.prior.to_config(&mut cfg);
        draws.config.to_config(&mut cfg);
        write_atomic(&dir.join("fit.cfg"), cfg.to_string())?;
        write_atomic(&dir.join("diagnostics.csv"), diagnostics_csv(&draws.diagnostics))?;
    }
    let gen = generate(&draws, exp.n_generate, &mut seeded(derive_seed(seed, run.gen_tag)))?;
    let mut s = sample_scores(exp, &gen.rows, reference)?;
    s.extend(draw_scores(exp, &draws, derive_seed(seed, tag::HELLINGER + run.fit_tag))?);
    Ok(s)
}

fn complete_cases(data: &MaskedDataset) -> Result<CompleteDataset, HarnessError> {
    let flat: Vec<f64> =
        data.rows().iter().filter(|r| r.mask().is_complete()).flat_map(|r| r.project().iter().copied()).collect();
    Ok(CompleteDataset::new(data.dim(), flat)?)
}

fn naive_method(
    exp: &ExperimentConfig,
    data: &MaskedDataset,
    reference: &CompleteDataset,
) -> Result<Scores, HarnessError> {
    let mut s = report_cells("", &naive_baseline(data, &exp.targets)?);
    let cc = complete_cases(data)?;
    let energy = if cc.is_empty() {
        Cell::Flag("no_complete_cases")
    } else {
        Cell::Value(energy_distance(&cc, reference, exp.energy)?)
    };
    s.push(("energy".into(), energy));
    Ok(s)
}

fn guarded(f: impl FnOnce() -> Result<Scores, HarnessError>) -> Result<Scores, HarnessError> {
    catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
        let msg = p
            .downcast_ref::<String>()
            .cloned()
            .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
            .unwrap_or_else(|| "panic".into());
        Err(HarnessError::Config(format!("panicked: {msg}")))
    })
}

/// One replication: simulate, score every method, and (with `dir`) write
/// `rep_NNN/` atomically. A failing method gets `failed` rows and a line in
/// the returned error list; the other methods are unaffected.
pub fn run_replication(
    exp: &ExperimentConfig,
    rep: usize,
    extras: &[ExtraMethod],
    dir: Option<&Path>,
) -> (Vec<ResultRow>, Vec<String>) {
    let seed = rep_seed(exp, rep);
    let metrics = exp.metrics();
    let rep_dir = dir.map(|d| d.join(format!("rep_{rep:03}")));
    let truth = Truth::new(&exp.targets, &truth_values(&exp.scenario.scenario, &exp.targets).unwrap_or_default());
    let setup = simulate_rep(exp, rep).and_then(|(c, m)| {
        let r = exp.scenario.scenario.sample(exp.reference_n, &mut seeded(derive_seed(seed, tag::REFERENCE)))?;
        Ok((c, m, r))
    });
    let mut methods: Vec<(String, Result<Scores, HarnessError>)> = Vec::new();
    match &setup {
        Err(e) => {
            let names = [METHOD_MISSING, METHOD_COMPLETE, METHOD_NAIVE].map(String::from);
            for name in names.into_iter().chain(extras.iter().map(|x| x.name.clone())) {
                methods.push((name, Err(HarnessError::Config(format!("simulation: {e}")))));
            }
        }
        Ok((complete, masked, reference)) => {
            let missing = SamplerRun { method: METHOD_MISSING, fit_tag: tag::FIT_MISSING, gen_tag: tag::GEN_MISSING };
            let full = SamplerRun { method: METHOD_COMPLETE, fit_tag: tag::FIT_COMPLETE, gen_tag: tag::GEN_COMPLETE };
            let rd = rep_dir.as_deref();
            methods
                .push((METHOD_MISSING.into(), guarded(|| sampler_method(exp, &missing, masked, seed, reference, rd))));
            methods.push((
                METHOD_COMPLETE.into(),
                guarded(|| sampler_method(exp, &full, &complete.to_masked(), seed, reference, rd)),
            ));
            methods.push((METHOD_NAIVE.into(), guarded(|| naive_method(exp, masked, reference))));
            for x in extras {
                let scores = guarded(|| sample_scores(exp, &read_complete_csv(x.path_for(rep))?, reference));
                methods.push((x.name.clone(), scores));
            }
        }
    }
    let mut rows = Vec::new();
    let mut errors = Vec::new();
    for (name, scores) in &methods {
        rows.extend(rows_for(&metrics, rep, name, scores, &truth));
        if let Err(e) = scores {
            errors.push(format!("replication {rep}, {name}: {e}"));
        }
    }
    if let Some(d) = &rep_dir {
        let written = write_atomic(&d.join("results.csv"), results_csv(&rows)).and_then(|_| {
            let path = d.join("errors.txt");
            if errors.is_empty() {
                Ok(())
            } else {
                write_atomic(&path, errors.join("\n") + "\n")
            }
        });
        if let Err(e) = written {
            errors.push(format!("replication {rep}: writing outputs: {e}"));
        }
    }
    (rows, errors)
}

#[derive(Debug, Clone)]
pub struct ScenarioOutcome {
    pub rows: Vec<ResultRow>,
    pub summary: Vec<SummaryRow>,
    pub errors: Vec<String>,
}

/// All replications on a pool of `jobs` threads (rayon's default when
/// `None`), then `results.csv`, `summary.csv`, `plotdata/` and the manifest.
pub fn cmd_scenario(
    exp: &ExperimentConfig,
    extras: &[ExtraMethod],
    jobs: Option<usize>,
) -> Result<ScenarioOutcome, HarnessError> {
    fs::create_dir_all(&exp.out).map_err(io_err(&exp.out))?;
    let mut cfg = manifest(exp, "scenario");
    for x in extras {
        cfg.set(&format!("run.extra.{}", x.name), &x.path);
    }
    write_manifest(&cfg, &exp.out)?;
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(j) = jobs {
        builder = builder.num_threads(j.max(1));
    }
    let pool = builder.build().map_err(|e| HarnessError::Config(format!("thread pool: {e}")))?;
    let per_rep: Vec<(Vec<ResultRow>, Vec<String>)> = pool.install(|| {
        (1..=exp.replications).into_par_iter().map(|r| run_replication(exp, r, extras, Some(&exp.out))).collect()
    });
    let mut rows = Vec::new();
    let mut errors = Vec::new();
    for (r, e) in per_rep {
        rows.extend(r);
        errors.extend(e);
    }
    let summary = summarize(&rows);
    write_atomic(&exp.out.join("results.csv"), results_csv(&rows))?;
    write_atomic(&exp.out.join("summary.csv"), summary_csv(&summary))?;
    for (name, text) in plot::plot_tables(exp, &rows) {
        write_atomic(&exp.out.join("plotdata").join(&name), text)?;
    }
    if exp.svg {
        for (name, svg) in plot::plot_svgs(exp, &rows) {
            write_atomic(&exp.out.join("plotdata").join(&name), svg)?;
        }
    }
    Ok(ScenarioOutcome { rows, summary, errors })
}

#[derive(Debug, Clone, Default)]
pub struct EvaluateInputs {
    pub generated: PathBuf,
    /// Compared against this sample when given, otherwise against a fresh
    /// sample from the configured scenario.
    pub reference: Option<PathBuf>,
    /// Draws behind `generated`, for functionals and the Hellinger distance.
    pub draws: Option<PathBuf>,
    pub method: String,
    pub extras: Vec<ExtraMethod>,
}

/// Scores a generated sample (and any extra methods) and writes
/// `report.csv` in the `results.csv` schema with replication 1.
pub fn cmd_evaluate(exp: &ExperimentConfig, inputs: &EvaluateInputs) -> Result<Vec<ResultRow>, HarnessError> {
    let generated = read_complete_csv(&inputs.generated)?;
    let (reference, truth_vals) = match &inputs.reference {
        Some(p) => {
            let r = read_complete_csv(p)?;
            let truth: Vec<f64> =
                estimate(&r, &exp.targets)?.entries.iter().map(|e| e.value.unwrap_or(f64::NAN)).collect();
            (r, truth)
        }
        None => {
            let seed = derive_seed(rep_seed(exp, 1), tag::REFERENCE);
            let r = exp.scenario.scenario.sample(exp.reference_n, &mut seeded(seed))?;
            (r, truth_values(&exp.scenario.scenario, &exp.targets)?)
        }
    };
    if generated.dim() != reference.dim() {
        return Err(HarnessError::Config(format!(
            "dimension mismatch: generated {} vs reference {}",
            generated.dim(),
            reference.dim()
        )));
    }
    let truth = Truth::new(&exp.targets, &truth_vals);
    let metrics = exp.metrics();
    let method = if inputs.method.is_empty() { "generated" } else { inputs.method.as_str() };
    let mut scores = sample_scores(exp, &generated, &reference);
    if let (Ok(s), Some(dir)) = (&mut scores, &inputs.draws) {
        let draws = read_draws_dir(dir)?;
        s.extend(draw_scores(exp, &draws, derive_seed(rep_seed(exp, 1), tag::HELLINGER))?);
    }
    let scores = scores?;
    let mut rows = rows_for(&metrics, 1, method, &Ok(scores), &truth);
    for x in &inputs.extras {
        let s = read_complete_csv(x.path_for(1))
            .map_err(HarnessError::from)
            .and_then(|d| sample_scores(exp, &d, &reference));
        if let Err(e) = &s {
            eprintln!("{}: {e}", x.name);
        }
        rows.extend(rows_for(&metrics, 1, &x.name, &s, &truth));
    }
    fs::create_dir_all(&exp.out).map_err(io_err(&exp.out))?;
    write_atomic(&exp.out.join("report.csv"), results_csv(&rows))?;
    let mut cfg = manifest(exp, "evaluate");
    cfg.set("run.generated", inputs.generated.display());
    if let Some(r) = &inputs.reference {
        cfg.set("run.reference", r.display());
    }
    if let Some(d) = &inputs.draws {
        cfg.set("run.draws", d.display());
    }
    write_manifest(&cfg, &exp.out)?;
    Ok(rows)
}
