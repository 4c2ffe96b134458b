//! Directory form of [`PosteriorDraws`]:
//!
//! ```text
//! fit.cfg                  prior and sampler settings
//! diagnostics.csv          one line per sweep
//! draws/draw_000002.csv    one file per saved sweep, long format
//! ```
//!
//! Draw files have the header `field,i,j,value` with rows `label,i,,k`,
//! `center,k,j,value` and `sigma,i,j,value`, all indices 1-based.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use super::{MhStats, MixtureState, PosteriorDraws, PriorHyper, SamplerConfig, SamplerError, SavedDraw, SweepDiag};
use crate::config::KvConfig;
use crate::data::fmt_f64;
use crate::gaussian::CovMatrix;

const DIAG_HEADER: &str = "sweep,k,loglik,mu_accepted,mu_proposed,mu_rate,sigma_accepted,sigma_proposed,sigma_rate";

fn fmt_rate(s: MhStats) -> String {
    s.rate().map(fmt_f64).unwrap_or_default()
}

pub(crate) fn draw_csv(state: &MixtureState) -> String {
    let mut out = String::from("field,i,j,value\n");
    for (i, k) in state.z.iter().enumerate() {
        let _ = writeln!(out, "label,{},,{}", i + 1, k + 1);
    }
    for (k, c) in state.centers.iter().enumerate() {
        for (j, v) in c.iter().enumerate() {
            let _ = writeln!(out, "center,{},{},{}", k + 1, j + 1, fmt_f64(*v));
        }
    }
    let d = state.sigma.dim();
    for i in 0..d {
        for j in 0..d {
            let _ = writeln!(out, "sigma,{},{},{}", i + 1, j + 1, fmt_f64(state.sigma.get(i, j)));
        }
    }
    out
}

pub(crate) fn diagnostics_csv(diag: &[SweepDiag]) -> String {
    let mut out = format!("{DIAG_HEADER}\n");
    for s in diag {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{}",
            s.sweep,
            s.k,
            fmt_f64(s.loglik),
            s.mu.accepted,
            s.mu.proposed,
            fmt_rate(s.mu),
            s.sigma.accepted,
            s.sigma.proposed,
            fmt_rate(s.sigma)
        );
    }
    out
}

pub fn write_draws_dir(draws: &PosteriorDraws, dir: impl AsRef<Path>) -> Result<(), SamplerError> {
    let dir = dir.as_ref();
    let draw_dir = dir.join("draws");
    fs::create_dir_all(&draw_dir)?;
    let mut cfg = KvConfig::new();
    draws.prior.to_config(&mut cfg);
    draws.config.to_config(&mut cfg);
    cfg.write(dir.join("fit.cfg"))?;
    fs::write(dir.join("diagnostics.csv"), diagnostics_csv(&draws.diagnostics))?;
    for d in &draws.draws {
        fs::write(draw_dir.join(format!("draw_{:06}.csv", d.sweep)), draw_csv(&d.state))?;
    }
    Ok(())
}

fn format_err(path: &Path, msg: impl Into<String>) -> SamplerError {
    SamplerError::Format { path: path.display().to_string(), msg: msg.into() }
}

fn parse_index(path: &Path, line: usize, s: &str, max: usize) -> Result<usize, SamplerError> {
    match s.parse::<usize>() {
        Ok(v) if v >= 1 && v <= max => Ok(v - 1),
        _ => Err(format_err(path, format!("line {line}: bad index {s:?}"))),
    }
}

fn parse_value(path: &Path, line: usize, s: &str) -> Result<f64, SamplerError> {
    s.parse::<f64>().map_err(|_| format_err(path, format!("line {line}: bad number {s:?}")))
}

fn read_records(path: &Path) -> Result<Vec<csv::StringRecord>, SamplerError> {
    let mut rdr =
        csv::ReaderBuilder::new().has_headers(true).from_path(path).map_err(|e| format_err(path, e.to_string()))?;
    rdr.records().collect::<Result<_, _>>().map_err(|e| format_err(path, e.to_string()))
}

fn read_draw(path: &Path, d: usize) -> Result<MixtureState, SamplerError> {
    let mut z: Vec<Option<usize>> = Vec::new();
    let mut centers: Vec<Vec<Option<f64>>> = Vec::new();
    let mut sigma = vec![vec![None; d]; d];
    for (n, rec) in read_records(path)?.iter().enumerate() {
        let line = n + 2;
        if rec.len() != 4 {
            return Err(format_err(path, format!("line {line}: expected 4 fields")));
        }
        match &rec[0] {
            "label" => {
                let i = parse_index(path, line, &rec[1], usize::MAX)?;
                let k = parse_index(path, line, &rec[3], usize::MAX)?;
                if z.len() <= i {
                    z.resize(i + 1, None);
                }
                z[i] = Some(k);
            }
            "center" => {
                let k = parse_index(path, line, &rec[1], usize::MAX)?;
                let j = parse_index(path, line, &rec[2], d)?;
                if centers.len() <= k {
                    centers.resize(k + 1, vec![None; d]);
                }
                centers[k][j] = Some(parse_value(path, line, &rec[3])?);
            }
            "sigma" => {
                let i = parse_index(path, line, &rec[1], d)?;
                let j = parse_index(path, line, &rec[2], d)?;
                sigma[i][j] = Some(parse_value(path, line, &rec[3])?);
            }
            other => return Err(format_err(path, format!("line {line}: unknown field {other:?}"))),
        }
    }
    let incomplete = || format_err(path, "incomplete draw");
    let z: Vec<usize> = z.into_iter().collect::<Option<_>>().ok_or_else(incomplete)?;
    let centers: Vec<Vec<f64>> = centers
        .into_iter()
        .map(|c| c.into_iter().collect::<Option<_>>())
        .collect::<Option<_>>()
        .ok_or_else(incomplete)?;
    let sigma: Vec<Vec<f64>> = sigma
        .into_iter()
        .map(|r| r.into_iter().collect::<Option<_>>())
        .collect::<Option<_>>()
        .ok_or_else(incomplete)?;
    let state = MixtureState { z, centers, sigma: CovMatrix::from_rows(&sigma)? };
    state.check().map_err(|e| format_err(path, e.to_string()))?;
    Ok(state)
}

fn read_diagnostics(path: &Path) -> Result<Vec<SweepDiag>, SamplerError> {
    let mut out = Vec::new();
    for (n, rec) in read_records(path)?.iter().enumerate() {
        let line = n + 2;
        if rec.len() != 9 {
            return Err(format_err(path, format!("line {line}: expected 9 fields")));
        }
        let int = |c: usize| rec[c].parse::<usize>().map_err(|_| format_err(path, format!("line {line}: bad count")));
        out.push(SweepDiag {
            sweep: int(0)?,
            k: int(1)?,
            loglik: parse_value(path, line, &rec[2])?,
            mu: MhStats { accepted: int(3)?, proposed: int(4)? },
            sigma: MhStats { accepted: int(6)?, proposed: int(7)? },
        });
    }
    Ok(out)
}

pub fn read_draws_dir(dir: impl AsRef<Path>) -> Result<PosteriorDraws, SamplerError> {
    let dir = dir.as_ref();
    let cfg = KvConfig::read(dir.join("fit.cfg"))?;
    let prior = PriorHyper::from_config(&cfg)?;
    let config = SamplerConfig::from_config(&cfg)?;
    let diagnostics = read_diagnostics(&dir.join("diagnostics.csv"))?;
    let mut files: Vec<(usize, std::path::PathBuf)> = Vec::new();
    for entry in fs::read_dir(dir.join("draws"))? {
        let path = entry?.path();
        let name = path.file_name().and_then(|s| s.to_str()).unwrap_or_default();
        if let Some(sweep) = name.strip_prefix("draw_").and_then(|s| s.strip_suffix(".csv")) {
            let sweep = sweep.parse().map_err(|_| format_err(&path, "bad draw file name"))?;
            files.push((sweep, path));
        }
    }
    files.sort();
    let draws = files
        .into_iter()
        .map(|(sweep, path)| Ok(SavedDraw { sweep, state: read_draw(&path, prior.dim())? }))
        .collect::<Result<Vec<_>, SamplerError>>()?;
    if draws.is_empty() {
        return Err(format_err(dir, "no draws found"));
    }
    Ok(PosteriorDraws { draws, prior, config, diagnostics })
}
