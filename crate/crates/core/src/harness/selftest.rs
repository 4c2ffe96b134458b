//! Fast in-process invariant suites behind `bayes-mar selftest`.

use std::fmt::Write as _;
use std::time::Instant;

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::data::{read_masked_csv_from, write_masked_csv_to, CompleteDataset};
use crate::divergences::{
    energy_distance, hellinger_mc, hellinger_tilde_mc, kl_mc, kl_tilde_mc, DensityModel, EnergyEstimator,
};
use crate::gaussian::{
    log_chol_decode, log_chol_encode, log_chol_log_jacobian_exact, tri_index, tri_len, CovMatrix, GaussParams,
    LogCholVector, SharedMixture,
};
use crate::mdm::{apply_mdm, MdmSpec, Scenario};
use crate::predictive::generate;
use crate::rng::{seeded, SimRng};
use crate::sampler::{batch_means, run_sampler, JacobianTerm, PriorHyper, SamplerConfig, ScatterStats, SigmaTarget};

#[derive(Debug, Clone, Copy, Default)]
pub struct SelftestOptions {
    /// Negates the analytic log-Jacobian inside the Jacobian suite, which
    /// must then fail.
    pub jacobian_flip: bool,
}

#[derive(Debug, Clone)]
pub struct SuiteResult {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
    pub seconds: f64,
}

#[derive(Debug, Clone)]
pub struct SelftestReport {
    pub suites: Vec<SuiteResult>,
}

impl SelftestReport {
    pub fn all_passed(&self) -> bool {
        self.suites.iter().all(|s| s.passed)
    }

    pub fn table(&self) -> String {
        let w = self.suites.iter().map(|s| s.name.len()).max().unwrap_or(5).max(5);
        let mut out = format!("{:<w$}  result  seconds  detail\n", "suite");
        for s in &self.suites {
            let r = if s.passed { "PASS" } else { "FAIL" };
            let _ = writeln!(out, "{:<w$}  {r:<6}  {:>7.2}  {}", s.name, s.seconds, s.detail);
        }
        out
    }
}

type Outcome = Result<String, String>;

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn random_spd(d: usize, r: &mut SimRng) -> CovMatrix {
    let a = DMatrix::from_fn(d, d, |_, _| r.random_range(-1.0..1.0));
    CovMatrix::new(&a * a.transpose() + DMatrix::identity(d, d) * 0.2).expect("shifted Gram matrix is SPD")
}

fn mechanism() -> Outcome {
    let delta = 0.05;
    let mdm = MdmSpec::step_mar3d(delta).map_err(|e| e.to_string())?;
    let full = mdm.patterns().iter().position(|m| m.is_complete()).ok_or("no complete pattern")?;
    let mut r = seeded(11);
    let (mut worst_sum, mut min_full) = (0.0f64, f64::INFINITY);
    for _ in 0..10_000 {
        let x: Vec<f64> = (0..3).map(|_| 3.0 * r.sample::<f64, _>(StandardNormal)).collect();
        let p = mdm.pattern_probs(&x).map_err(|e| e.to_string())?;
        if p.iter().any(|v| *v < 0.0) {
            return Err(format!("negative probability at {x:?}"));
        }
        worst_sum = worst_sum.max((p.iter().sum::<f64>() - 1.0).abs());
        min_full = min_full.min(p[full]);
    }
    check(
        worst_sum <= 1e-12 && min_full >= 4.0 * delta / 3.0 - 1e-12,
        format!("max |sum-1| {worst_sum:.1e}, min P(full) {min_full:.4}"),
    )
}

fn log_cholesky() -> Outcome {
    let mut r = seeded(12);
    let mut worst = 0.0f64;
    for i in 0..200 {
        let s = random_spd(1 + i % 5, &mut r);
        let back = log_chol_decode(&log_chol_encode(&s)).map_err(|e| e.to_string())?;
        worst = worst.max((back.matrix() - s.matrix()).amax());
    }
    check(worst <= 1e-10, format!("round trip sup error {worst:.1e}"))
}

/// `vech(Σ(θ))` in the same order as `θ`.
fn vech(theta: &[f64]) -> Vec<f64> {
    let cov = log_chol_decode(&LogCholVector::new(theta.to_vec()).expect("valid length")).expect("always SPD");
    let d = cov.dim();
    let mut out = vec![0.0; tri_len(d)];
    for i in 0..d {
        for j in 0..=i {
            out[tri_index(i, j)] = cov.get(i, j);
        }
    }
    out
}

/// Central-difference `log |det ∂vech(Σ)/∂θ|`.
fn fd_log_jacobian(theta: &[f64]) -> f64 {
    let m = theta.len();
    let h = 1e-6;
    let mut jac = DMatrix::zeros(m, m);
    for c in 0..m {
        let mut up = theta.to_vec();
        let mut dn = theta.to_vec();
        up[c] += h;
        dn[c] -= h;
        let (a, b) = (vech(&up), vech(&dn));
        for row in 0..m {
            jac[(row, c)] = (a[row] - b[row]) / (2.0 * h);
        }
    }
    jac.determinant().abs().ln()
}

fn jacobian(opts: &SelftestOptions) -> Outcome {
    let mut r = seeded(13);
    let mut worst = 0.0f64;
    for i in 0..50 {
        let d = 1 + i % 4;
        let theta: Vec<f64> = (0..tri_len(d)).map(|_| 0.5 * r.sample::<f64, _>(StandardNormal)).collect();
        let v = LogCholVector::new(theta.clone()).map_err(|e| e.to_string())?;
        let mut analytic = log_chol_log_jacobian_exact(&v, d).map_err(|e| e.to_string())?;
        if opts.jacobian_flip {
            analytic = -analytic;
        }
        let fd = fd_log_jacobian(&theta);
        worst = worst.max((analytic - fd).abs() / fd.abs().max(1.0));
    }
    check(worst <= 1e-4, format!("max relative error {worst:.1e}"))
}

fn gauss3_pair(seed: u64) -> (DensityModel, DensityModel) {
    let mut r = seeded(seed);
    let mut one = || {
        let cov = random_spd(3, &mut r);
        let mean = (0..3).map(|_| r.random_range(-1.0..1.0)).collect();
        DensityModel::gaussian(GaussParams::new(mean, cov).expect("dimension 3"))
    };
    (one(), one())
}

fn kl_sandwich() -> Outcome {
    let mdm = MdmSpec::step_mar3d(0.05).map_err(|e| e.to_string())?;
    for s in 0..5 {
        let (p, q) = gauss3_pair(100 + s);
        let kt = kl_tilde_mc(&p, &q, &mdm, 20_000, &mut seeded(s)).map_err(|e| e.to_string())?;
        let k = kl_mc(&p, &q, 20_000, &mut seeded(s)).map_err(|e| e.to_string())?;
        let se = (kt.std_error.powi(2) + k.std_error.powi(2)).sqrt();
        if kt.value < -3.0 * kt.std_error || kt.value > k.value + 3.0 * se {
            return Err(format!("pair {s}: KL~ {:.4} KL {:.4}", kt.value, k.value));
        }
    }
    Ok("5 pairs".into())
}

fn hellinger_sandwich() -> Outcome {
    let delta = 0.05;
    let mdm = MdmSpec::step_mar3d(delta).map_err(|e| e.to_string())?;
    for s in 0..5 {
        let (p, q) = gauss3_pair(100 + s);
        let ht = hellinger_tilde_mc(&p, &q, &mdm, 20_000, &mut seeded(s)).map_err(|e| e.to_string())?;
        let h = hellinger_mc(&p, &q, 20_000, &mut seeded(s)).map_err(|e| e.to_string())?;
        let se = (ht.std_error.powi(2) + h.std_error.powi(2)).sqrt();
        if delta * h.value > ht.value + 3.0 * se || ht.value > h.value + 3.0 * se {
            return Err(format!("pair {s}: H~2 {:.4} H2 {:.4}", ht.value, h.value));
        }
    }
    Ok("5 pairs".into())
}

fn energy() -> Outcome {
    let zero = CompleteDataset::from_rows(1, &[vec![0.0]]).map_err(|e| e.to_string())?;
    let one = CompleteDataset::from_rows(1, &[vec![1.0]]).map_err(|e| e.to_string())?;
    let two = energy_distance(&zero, &one, EnergyEstimator::VStatistic).map_err(|e| e.to_string())?;
    let a = Scenario::gauss3d().sample(500, &mut seeded(14)).map_err(|e| e.to_string())?;
    let same = energy_distance(&a, &a, EnergyEstimator::VStatistic).map_err(|e| e.to_string())?;
    check(two == 2.0 && same == 0.0, format!("E(0,1) = {two}, E(a,a) = {same}"))
}

fn sampler_mean() -> Outcome {
    let n = 200;
    let mut r = seeded(15);
    let rows: Vec<Vec<f64>> = (0..n)
        .map(|_| vec![1.0 + r.sample::<f64, _>(StandardNormal), -0.5 + r.sample::<f64, _>(StandardNormal)])
        .collect();
    let data = CompleteDataset::from_rows(2, &rows).map_err(|e| e.to_string())?.to_masked();
    let prior = PriorHyper { alpha: 1e-12, mu0: vec![0.0, 0.0], tau0: 2.0, nu0: 5.0, psi0: CovMatrix::identity(2) };
    let config = SamplerConfig {
        t_total: 2000,
        t_burn: 200,
        thin: 1,
        mh_steps_sigma: 0,
        init_clusters: 1,
        sigma_init: Some(CovMatrix::identity(2)),
        ..SamplerConfig::default()
    };
    let draws = run_sampler(&data, &prior, &config, &mut seeded(16)).map_err(|e| e.to_string())?;
    let prec = 1.0 / (prior.tau0 * prior.tau0) + n as f64;
    let mut detail = String::new();
    let mut ok = true;
    for j in 0..2 {
        let trace: Vec<f64> = draws.draws.iter().map(|d| d.state.centers[d.state.z[0]][j]).collect();
        let (m, se) = batch_means(&trace, 20);
        let post = rows.iter().map(|x| x[j]).sum::<f64>() / prec;
        ok &= (m - post).abs() <= 3.0 * se;
        let _ = write!(detail, "mu{} {m:.4} vs {post:.4} (se {se:.4}) ", j + 1);
    }
    check(ok, detail.trim_end().into())
}

/// Prior-only covariance chain; returns `|mean − Ψ0/(ν0−d−1)| / se` per
/// diagonal entry.
pub fn prior_sigma_chain_z(jacobian: JacobianTerm, steps: usize, seed: u64) -> Result<Vec<f64>, String> {
    let d = 2;
    let psi0 = CovMatrix::diagonal(&[1.0, 2.0]).map_err(|e| e.to_string())?;
    let prior = PriorHyper { alpha: 1.0, mu0: vec![0.0; d], tau0: 1.0, nu0: 7.0, psi0: psi0.clone() };
    let stats = ScatterStats::empty(d);
    let target = SigmaTarget::new(&stats, &prior, jacobian).map_err(|e| e.to_string())?;
    let mut traces: Vec<Vec<f64>> = (0..d).map(|_| Vec::with_capacity(steps)).collect();
    let start = CovMatrix::diagonal(&[0.25, 0.5]).map_err(|e| e.to_string())?;
    target
        .run_with(&start, steps, 0.35, &mut seeded(seed), |s| {
            for (j, t) in traces.iter_mut().enumerate() {
                t.push(s.get(j, j));
            }
        })
        .map_err(|e| e.to_string())?;
    let denom = prior.nu0 - d as f64 - 1.0;
    Ok(traces
        .iter()
        .enumerate()
        .map(|(j, t)| {
            let (m, se) = batch_means(&t[steps / 10..], 25);
            (m - psi0.get(j, j) / denom).abs() / se
        })
        .collect())
}

fn sigma_prior() -> Outcome {
    let with = prior_sigma_chain_z(JacobianTerm::Included, 200_000, 17)?;
    let without = prior_sigma_chain_z(JacobianTerm::Omitted, 200_000, 17)?;
    let passes = with.iter().all(|z| *z <= 3.0);
    let ablated_fails = without.iter().any(|z| *z > 3.0);
    check(passes && ablated_fails, format!("z with Jacobian {with:.2?}, without {without:.2?}"))
}

fn determinism() -> Outcome {
    let mdm = MdmSpec::step_mar3d(0.05).map_err(|e| e.to_string())?;
    let run = || -> Result<(String, CompleteDataset), String> {
        let c = Scenario::gauss3d().sample(100, &mut seeded(18)).map_err(|e| e.to_string())?;
        let m = apply_mdm(&c, &mdm, &mut seeded(19)).map_err(|e| e.to_string())?;
        let mut buf = Vec::new();
        write_masked_csv_to(&m, &mut buf, "NA").map_err(|e| e.to_string())?;
        let prior = PriorHyper::defaults_for(&m).map_err(|e| e.to_string())?;
        let config = SamplerConfig { t_total: 40, t_burn: 20, ..SamplerConfig::default() };
        let draws = run_sampler(&m, &prior, &config, &mut seeded(20)).map_err(|e| e.to_string())?;
        let gen = generate(&draws, 200, &mut seeded(21)).map_err(|e| e.to_string())?;
        Ok((String::from_utf8(buf).map_err(|e| e.to_string())?, gen.rows))
    };
    let (a, b) = (run()?, run()?);
    check(a == b, "simulate, mask, fit, generate repeated".into())
}

fn csv_roundtrip() -> Outcome {
    let c = Scenario::gauss3d().sample(200, &mut seeded(22)).map_err(|e| e.to_string())?;
    let m = apply_mdm(&c, &MdmSpec::step_mar3d(0.05).map_err(|e| e.to_string())?, &mut seeded(23))
        .map_err(|e| e.to_string())?;
    let mut buf = Vec::new();
    write_masked_csv_to(&m, &mut buf, "NA").map_err(|e| e.to_string())?;
    let back = read_masked_csv_from(buf.as_slice(), "NA").map_err(|e| e.to_string())?;
    check(back == m, format!("{} rows", m.len()))
}

fn divergence_identity() -> Outcome {
    let mix =
        SharedMixture::new(vec![0.5, 0.5], vec![vec![0.0; 3], vec![1.0, -1.0, 0.5]], random_spd(3, &mut seeded(24)))
            .map_err(|e| e.to_string())?;
    let p = DensityModel::GaussMixtureShared(mix);
    let mdm = MdmSpec::step_mar3d(0.05).map_err(|e| e.to_string())?;
    let e = kl_tilde_mc(&p, &p, &mdm, 10_000, &mut seeded(25)).map_err(|e| e.to_string())?;
    check(e.value == 0.0 && e.std_error == 0.0, format!("KL~(p,p) = {}", e.value))
}

pub fn run_selftest(opts: &SelftestOptions) -> SelftestReport {
    let suites: Vec<(&'static str, Box<dyn Fn() -> Outcome>)> = vec![
        ("mechanism", Box::new(mechanism)),
        ("log_cholesky", Box::new(log_cholesky)),
        ("jacobian", Box::new(move || jacobian(opts))),
        ("kl_sandwich", Box::new(kl_sandwich)),
        ("hellinger_sandwich", Box::new(hellinger_sandwich)),
        ("divergence_identity", Box::new(divergence_identity)),
        ("energy_distance", Box::new(energy)),
        ("sampler_mean", Box::new(sampler_mean)),
        ("sigma_prior_chain", Box::new(sigma_prior)),
        ("determinism", Box::new(determinism)),
        ("csv_roundtrip", Box::new(csv_roundtrip)),
    ];
    let suites = suites
        .into_iter()
        .map(|(name, f)| {
            let t = Instant::now();
            let (passed, detail) = match f() {
                Ok(d) => (true, d),
                Err(d) => (false, d),
            };
            SuiteResult { name, passed, detail, seconds: t.elapsed().as_secs_f64() }
        })
        .collect();
    SelftestReport { suites }
}
