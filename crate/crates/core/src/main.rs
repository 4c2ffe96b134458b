use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use bayes_mar::harness::selftest::{run_selftest, SelftestOptions};
use bayes_mar::harness::{
    cmd_evaluate, cmd_fit, cmd_generate, cmd_scenario, cmd_simulate, summary_csv, EvaluateInputs, ExperimentConfig,
    ExtraMethod,
};
use clap::{Args, Parser, Subcommand};

/// Density estimation under MAR missingness with a Dirichlet-process
/// Gaussian mixture.
#[derive(Parser)]
#[command(name = "bayes-mar", version)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args)]
struct Common {
    /// Flat `key = value` config file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Master seed; overrides `experiment.seed`.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory; overrides `experiment.out`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Extra `KEY=VALUE` config entries, applied after the file.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    sets: Vec<String>,
}

impl Common {
    fn load(&self) -> anyhow::Result<ExperimentConfig> {
        ExperimentConfig::load(self.config.as_deref(), &self.sets, self.seed, self.out.as_deref())
            .context("loading configuration")
    }
}

#[derive(Subcommand)]
enum Cmd {
    /// Simulate complete data and its masked version.
    Simulate {
        #[command(flatten)]
        common: Common,
    },
    /// Run the sampler on a masked CSV (`NA` marks absent cells).
    Fit {
        #[arg(long)]
        data: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Draw complete rows from a fitted draws directory.
    Generate {
        #[arg(long)]
        draws: PathBuf,
        /// Number of rows; defaults to `experiment.n_generate`.
        #[arg(long)]
        n: Option<usize>,
        #[command(flatten)]
        common: Common,
    },
    /// Score a generated sample against a reference file or the scenario truth.
    Evaluate {
        #[arg(long)]
        generated: PathBuf,
        #[arg(long)]
        reference: Option<PathBuf>,
        /// Draws directory behind the generated sample.
        #[arg(long)]
        draws: Option<PathBuf>,
        #[arg(long, default_value = "generated")]
        method: String,
        /// External imputation `NAME=PATH`, scored like the others.
        #[arg(long = "extra-method", value_name = "NAME=PATH")]
        extra: Vec<ExtraMethod>,
        #[command(flatten)]
        common: Common,
    },
    /// Full pipeline over replications.
    Scenario {
        /// Concurrent replications.
        #[arg(long)]
        jobs: Option<usize>,
        /// External imputation `NAME=PATH`; `{rep}` is replaced by the replication number.
        #[arg(long = "extra-method", value_name = "NAME=PATH")]
        extra: Vec<ExtraMethod>,
        #[command(flatten)]
        common: Common,
    },
    /// Run the built-in invariant suites.
    Selftest {
        #[arg(long)]
        jobs: Option<usize>,
        #[arg(long, hide = true)]
        inject_jacobian_flip: bool,
    },
}

fn run(cli: Cli) -> anyhow::Result<ExitCode> {
    match cli.cmd {
        Cmd::Simulate { common } => {
            let exp = common.load()?;
            let (complete, masked) = cmd_simulate(&exp)?;
            let absent = masked.rows().iter().map(|r| r.mask().n_missing()).sum::<usize>();
            println!("wrote {} rows ({} absent cells) to {}", complete.len(), absent, exp.out.display());
        }
        Cmd::Fit { data, common } => {
            let exp = common.load()?;
            let draws = cmd_fit(&exp, &data).with_context(|| format!("fitting {}", data.display()))?;
            let (mu, sigma) = draws.acceptance();
            let k = draws.diagnostics.last().map_or(0, |d| d.k);
            println!(
                "{} draws saved to {}; final K = {k}; acceptance mu {:?}, sigma {:?}",
                draws.draws.len(),
                exp.out.display(),
                mu,
                sigma
            );
        }
        Cmd::Generate { draws, n, common } => {
            let exp = common.load()?;
            let rows = cmd_generate(&exp, &draws, n)?;
            println!("wrote {} rows to {}", rows.len(), exp.out.join("generated.csv").display());
        }
        Cmd::Evaluate { generated, reference, draws, method, extra, common } => {
            let exp = common.load()?;
            let inputs = EvaluateInputs { generated, reference, draws, method, extras: extra };
            let rows = cmd_evaluate(&exp, &inputs)?;
            for r in rows {
                let v = r.value.map(|v| format!("{v:.6}")).unwrap_or_else(|| r.flag.clone());
                println!("{:<12} {:<16} {v}", r.method, r.metric);
            }
        }
        Cmd::Scenario { jobs, extra, common } => {
            let exp = common.load()?;
            let outcome = cmd_scenario(&exp, &extra, jobs)?;
            print!("{}", summary_csv(&outcome.summary));
            for e in &outcome.errors {
                eprintln!("{e}");
            }
        }
        Cmd::Selftest { jobs, inject_jacobian_flip } => {
            if let Some(j) = jobs {
                rayon::ThreadPoolBuilder::new().num_threads(j.max(1)).build_global()?;
            }
            let report = run_selftest(&SelftestOptions { jacobian_flip: inject_jacobian_flip });
            print!("{}", report.table());
            return Ok(if report.all_passed() { ExitCode::SUCCESS } else { ExitCode::FAILURE });
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
