//! Long-format plot data, one CSV per figure type, and bare SVG boxplots.
//!
//! Every table has the header `scenario,n,method,replication,metric,value,truth`
//! so tables from several runs (different `n`, different scenarios) can be
//! concatenated before plotting.

use std::fmt::Write as _;

use super::{ExperimentConfig, ResultRow};
use crate::data::fmt_f64;
use crate::predictive::{quantile_type7, Target};

const HEADER: &str = "scenario,n,method,replication,metric,value,truth";

struct Table {
    file: &'static str,
    rows: Vec<(String, usize, String, f64, Option<f64>)>,
}

fn tables(exp: &ExperimentConfig, rows: &[ResultRow]) -> Vec<Table> {
    let labels: Vec<String> = exp.targets.iter().map(Target::label).collect();
    let quantiles: Vec<String> =
        exp.targets.iter().filter(|t| matches!(t, Target::Quantile(..))).map(Target::label).collect();
    let pick = |file, keep: &dyn Fn(&ResultRow) -> bool, negate: bool, rename: Option<&str>| Table {
        file,
        rows: rows
            .iter()
            .filter(|r| keep(r))
            .filter_map(|r| {
                let v = r.value?;
                let metric = rename.map(String::from).unwrap_or_else(|| r.metric.clone());
                Some((r.method.clone(), r.replication, metric, if negate { -v } else { v }, r.truth))
            })
            .collect(),
    };
    vec![
        pick("estimates.csv", &|r| labels.contains(&r.metric), false, None),
        pick("quantile.csv", &|r| quantiles.contains(&r.metric), false, None),
        pick("energy.csv", &|r| r.metric == "energy", true, Some("neg_energy")),
        pick("hellinger.csv", &|r| r.metric == "hellinger_sq", false, None),
    ]
}

pub fn plot_tables(exp: &ExperimentConfig, rows: &[ResultRow]) -> Vec<(String, String)> {
    let scenario = exp.scenario.scenario.name();
    let n = exp.scenario.n;
    tables(exp, rows)
        .into_iter()
        .map(|t| {
            let mut out = format!("{HEADER}\n");
            for (method, rep, metric, v, truth) in &t.rows {
                let truth = truth.map(fmt_f64).unwrap_or_default();
                let _ = writeln!(out, "{scenario},{n},{method},{rep},{metric},{},{truth}", fmt_f64(*v));
            }
            (t.file.to_string(), out)
        })
        .collect()
}

/// One SVG per (table, metric), boxes grouped by method.
pub(crate) fn plot_svgs(exp: &ExperimentConfig, rows: &[ResultRow]) -> Vec<(String, String)> {
    let mut out = Vec::new();
    for t in tables(exp, rows) {
        let stem = t.file.trim_end_matches(".csv");
        let mut metrics: Vec<&String> = Vec::new();
        for r in &t.rows {
            if !metrics.contains(&&r.2) {
                metrics.push(&r.2);
            }
        }
        for m in metrics {
            let mut groups: Vec<(String, Vec<f64>)> = Vec::new();
            for (method, _, metric, v, _) in &t.rows {
                if metric != m {
                    continue;
                }
                match groups.iter_mut().find(|g| &g.0 == method) {
                    Some(g) => g.1.push(*v),
                    None => groups.push((method.clone(), vec![*v])),
                }
            }
            let title = format!("{} n={} {m}", exp.scenario.scenario.name(), exp.scenario.n);
            out.push((format!("{stem}_{m}.svg"), boxplot_svg(&title, &groups)));
        }
    }
    out
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Box from first to third quartile, median bar, whiskers to min and max.
pub fn boxplot_svg(title: &str, groups: &[(String, Vec<f64>)]) -> String {
    let (w_box, left, top, h) = (120.0, 70.0, 40.0, 240.0);
    let width = left + w_box * groups.len().max(1) as f64 + 20.0;
    let height = top + h + 50.0;
    let all: Vec<f64> = groups.iter().flat_map(|g| g.1.iter().copied()).filter(|v| v.is_finite()).collect();
    let lo = all.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = all.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let (lo, hi) = if all.is_empty() {
        (0.0, 1.0)
    } else if hi - lo < 1e-12 {
        (lo - 0.5, hi + 0.5)
    } else {
        (lo - 0.05 * (hi - lo), hi + 0.05 * (hi - lo))
    };
    let y = |v: f64| top + h * (hi - v) / (hi - lo);
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(s, r#"<text x="{left}" y="20" font-size="13">{}</text>"#, escape(title));
    let _ = writeln!(s, r#"<line x1="{left}" y1="{top}" x2="{left}" y2="{}" stroke="black"/>"#, top + h);
    for i in 0..=4 {
        let v = lo + (hi - lo) * i as f64 / 4.0;
        let _ = writeln!(s, r#"<text x="{}" y="{:.1}" text-anchor="end">{v:.3}</text>"#, left - 5.0, y(v) + 4.0);
    }
    for (gi, (name, values)) in groups.iter().enumerate() {
        let cx = left + w_box * (gi as f64 + 0.5);
        let _ = writeln!(s, r#"<text x="{cx}" y="{}" text-anchor="middle">{}</text>"#, top + h + 20.0, escape(name));
        let mut v: Vec<f64> = values.iter().copied().filter(|x| x.is_finite()).collect();
        if v.is_empty() {
            continue;
        }
        v.sort_by(f64::total_cmp);
        let q = |p| quantile_type7(&v, p);
        let (q1, med, q3) = (q(0.25), q(0.5), q(0.75));
        let (min, max) = (v[0], v[v.len() - 1]);
        let half = w_box * 0.3;
        let _ = writeln!(s, r#"<line x1="{cx}" y1="{:.1}" x2="{cx}" y2="{:.1}" stroke="black"/>"#, y(max), y(min));
        let _ = writeln!(
            s,
            r##"<rect x="{:.1}" y="{:.1}" width="{:.1}" height="{:.1}" fill="#cfe0f3" stroke="black"/>"##,
            cx - half,
            y(q3),
            2.0 * half,
            (y(q1) - y(q3)).max(0.5)
        );
        let _ = writeln!(
            s,
            r#"<line x1="{:.1}" y1="{:.1}" x2="{:.1}" y2="{:.1}" stroke="black" stroke-width="2"/>"#,
            cx - half,
            y(med),
            cx + half,
            y(med)
        );
    }
    s.push_str("</svg>\n");
    s
}
