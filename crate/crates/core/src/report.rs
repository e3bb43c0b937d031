//! CSV, SVG and text renderings of solver output, and atomic file writes.

use std::fmt::Write as _;
use std::fs;
use std::io::{self, Write as _};
use std::path::Path;

use crate::math::log_space;
use crate::search::{Criterion, MetricResult, MetricStatus, SampleSizeResult};
use crate::simulate::PerformanceSummary;
use crate::surrogate::{gp_fit, LearningCurveModel, BAND_Z};

pub const SUMMARY_HEADER: &str = "n,metric,R,failures,mean,sd,q20,q20_se";
pub const CURVE_HEADER: &str = "n,y,se,gp_mean,gp_sd";

/// Real formatted at 15 significant digits in shortest form; empty for `None`.
pub fn fmt_real(x: Option<f64>) -> String {
    match x {
        Some(v) if v.is_finite() => {
            let rounded: f64 = format!("{v:.14e}").parse().expect("formatted float parses");
            format!("{rounded}")
        }
        Some(v) => format!("{v}"),
        None => String::new(),
    }
}

pub fn summaries_csv(summaries: &[PerformanceSummary]) -> String {
    let mut out = String::from(SUMMARY_HEADER);
    out.push('\n');
    for s in summaries {
        for m in &s.metrics {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{}",
                s.n,
                m.metric,
                s.replicates,
                m.failures,
                fmt_real(m.mean),
                fmt_real(m.sd),
                fmt_real(m.quantile),
                fmt_real(m.quantile_se)
            );
        }
    }
    out
}

fn refit(metric: &MetricResult) -> Option<LearningCurveModel> {
    gp_fit(&metric.observations).ok()
}

/// Learning-curve export for one metric: observations with the GP posterior.
pub fn curve_csv(metric: &MetricResult) -> String {
    let model = refit(metric);
    let mut out = String::from(CURVE_HEADER);
    out.push('\n');
    for o in &metric.observations {
        let (mean, sd) = match &model {
            Some(m) => {
                let (a, b) = m.predict(o.n);
                (Some(a), Some(b))
            }
            None => (None, None),
        };
        let _ = writeln!(
            out,
            "{},{},{},{},{}",
            o.n,
            fmt_real(Some(o.y)),
            fmt_real(Some(o.se)),
            fmt_real(mean),
            fmt_real(sd)
        );
    }
    out
}

pub fn text_report(result: &SampleSizeResult) -> String {
    let mut out = String::new();
    let criterion = match result.criterion {
        Criterion::Mean => "mean".to_string(),
        Criterion::Assurance { delta } => format!("assurance {delta}"),
    };
    let _ = writeln!(out, "Sample size report");
    let _ = writeln!(out, "criterion: {criterion}");
    let _ = writeln!(out, "strategy: {}", result.strategy_tag);
    let _ = writeln!(out, "seed: {}", result.master_seed);
    let g = &result.generator;
    let _ = writeln!(
        out,
        "generator: p = {}, intercept {:.4}, scale {:.4}, performance {:.4} (target {})",
        g.p(),
        g.intercept,
        g.coefficient_scale,
        g.achieved_performance,
        g.spec.target_performance
    );
    if let Some(prev) = g.achieved_prevalence {
        let _ = writeln!(out, "prevalence: {prev:.4} (target {})", g.spec.target_prevalence);
    }
    let _ = writeln!(out);
    for m in &result.metrics {
        let _ = write!(out, "{} (threshold {}): ", m.metric, fmt_real(Some(m.threshold)));
        match m.status {
            MetricStatus::Solved => {
                let _ = writeln!(
                    out,
                    "n = {} [80% band {}..{}]",
                    m.n_required.unwrap_or(0),
                    m.ci_low.unwrap_or(0),
                    m.ci_high.unwrap_or(0)
                );
            }
            MetricStatus::AlreadySatisfied => {
                let _ = writeln!(out, "met at the smallest size, n = {}", result.n_min);
            }
            MetricStatus::Unreachable => {
                let _ = write!(out, "unreachable within n <= {}", result.n_max);
                if let Some(c) = &m.ceiling {
                    let _ = write!(out, " (statistic {:.4} +/- {:.4} at n = {})", c.statistic, c.se, c.n);
                }
                let _ = writeln!(out);
            }
        }
    }
    let _ = writeln!(out);
    match result.n_required {
        Some(n) => {
            let _ = writeln!(out, "recommended n: {n}");
        }
        None => {
            let _ = writeln!(out, "recommended n: none (all targets unreachable)");
        }
    }
    if let Some(epv) = &result.baselines.epv {
        let _ = writeln!(out, "EPV {} baseline: {}", epv.input.epv, epv.n);
    }
    if let Some(c) = &result.confirmation {
        for check in &c.checks {
            let _ = writeln!(
                out,
                "confirmation at n = {} (R = {}): {} = {} +/- {} -> {}",
                c.n,
                c.replicates,
                check.metric,
                fmt_real(check.statistic),
                fmt_real(check.se),
                if check.passed { "ok" } else { "not confirmed" }
            );
        }
    }
    if !result.flags.is_empty() {
        let flags: Vec<String> = result
            .flags
            .iter()
            .map(|f| serde_json::to_value(f).unwrap().as_str().unwrap().to_string())
            .collect();
        let _ = writeln!(out, "flags: {}", flags.join(", "));
    }
    let _ = writeln!(
        out,
        "iterations: {}, replicate fits: {}",
        result.iterations, result.total_replicate_fits
    );
    out
}

const PANEL_W: f64 = 480.0;
const PANEL_H: f64 = 320.0;
const MARGIN: f64 = 50.0;

/// One panel per metric: observations with error bars, GP mean and 80% band,
/// threshold line and recommended `n`.
pub fn plot_svg(result: &SampleSizeResult) -> String {
    let panels = result.metrics.len().max(1);
    let width = PANEL_W * panels as f64;
    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{PANEL_H}" viewBox="0 0 {width} {PANEL_H}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(svg, r#"<rect width="100%" height="100%" fill="white"/>"#);
    for (i, m) in result.metrics.iter().enumerate() {
        panel(&mut svg, m, result, i as f64 * PANEL_W);
    }
    svg.push_str("</svg>\n");
    svg
}

fn panel(svg: &mut String, m: &MetricResult, result: &SampleSizeResult, x0: f64) {
    let (lo_n, hi_n) = (result.n_min as f64, result.n_max as f64);
    let grid = log_space(lo_n, hi_n, 120);
    let curve: Vec<(f64, f64, f64)> = match refit(m) {
        Some(model) => grid
            .iter()
            .map(|&n| {
                let (mu, sd) = model.predict(n);
                (n, mu, sd)
            })
            .collect(),
        None => Vec::new(),
    };
    let mut ys: Vec<f64> = m
        .observations
        .iter()
        .flat_map(|o| [o.y - o.se, o.y + o.se])
        .chain(curve.iter().flat_map(|c| [c.1 - BAND_Z * c.2, c.1 + BAND_Z * c.2]))
        .chain(std::iter::once(m.threshold))
        .filter(|v| v.is_finite())
        .collect();
    ys.sort_by(f64::total_cmp);
    let (y_lo, y_hi) = match (ys.first(), ys.last()) {
        (Some(&a), Some(&b)) if b > a => (a, b),
        (Some(&a), _) => (a - 0.5, a + 0.5),
        _ => (0.0, 1.0),
    };
    let px = |n: f64| x0 + MARGIN + (n.ln() - lo_n.ln()) / (hi_n.ln() - lo_n.ln()) * (PANEL_W - 1.5 * MARGIN);
    let py = |y: f64| PANEL_H - MARGIN - (y - y_lo) / (y_hi - y_lo) * (PANEL_H - 1.5 * MARGIN);

    let _ = writeln!(
        svg,
        r#"<text x="{:.1}" y="16" font-size="13">{}</text>"#,
        x0 + MARGIN,
        m.metric
    );
    let _ = writeln!(
        svg,
        r##"<rect x="{:.1}" y="{:.1}" width="{:.1}" height="{:.1}" fill="none" stroke="#888"/>"##,
        px(lo_n),
        py(y_hi),
        px(hi_n) - px(lo_n),
        py(y_lo) - py(y_hi)
    );
    for n in [lo_n, hi_n] {
        let _ = writeln!(
            svg,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{}</text>"#,
            px(n),
            PANEL_H - MARGIN + 14.0,
            n
        );
    }
    for y in [y_lo, y_hi] {
        let _ = writeln!(
            svg,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="end">{:.3}</text>"#,
            px(lo_n) - 4.0,
            py(y) + 4.0,
            y
        );
    }
    if !curve.is_empty() {
        let upper = curve
            .iter()
            .map(|c| format!("{:.1},{:.1}", px(c.0), py(c.1 + BAND_Z * c.2)));
        let lower = curve
            .iter()
            .rev()
            .map(|c| format!("{:.1},{:.1}", px(c.0), py(c.1 - BAND_Z * c.2)));
        let band: Vec<String> = upper.chain(lower).collect();
        let _ = writeln!(
            svg,
            r##"<polygon points="{}" fill="#9ecae1" fill-opacity="0.5" stroke="none"/>"##,
            band.join(" ")
        );
        let mean: Vec<String> = curve
            .iter()
            .map(|c| format!("{:.1},{:.1}", px(c.0), py(c.1)))
            .collect();
        let _ = writeln!(
            svg,
            r##"<polyline points="{}" fill="none" stroke="#08519c" stroke-width="1.5"/>"##,
            mean.join(" ")
        );
    }
    let _ = writeln!(
        svg,
        r##"<line x1="{:.1}" y1="{:.1}" x2="{:.1}" y2="{:.1}" stroke="#d62728" stroke-dasharray="4 3"/>"##,
        px(lo_n),
        py(m.threshold),
        px(hi_n),
        py(m.threshold)
    );
    for o in &m.observations {
        let (x, y) = (px(o.n), py(o.y));
        let _ = writeln!(
            svg,
            r#"<line x1="{x:.1}" y1="{:.1}" x2="{x:.1}" y2="{:.1}" stroke="black"/>"#,
            py(o.y - o.se),
            py(o.y + o.se)
        );
        let _ = writeln!(svg, r#"<circle cx="{x:.1}" cy="{y:.1}" r="2.5" fill="black"/>"#);
    }
    if let Some(n) = m.n_required {
        let x = px(n as f64);
        let _ = writeln!(
            svg,
            r##"<line x1="{x:.1}" y1="{:.1}" x2="{x:.1}" y2="{:.1}" stroke="#2ca02c"/>"##,
            py(y_lo),
            py(y_hi)
        );
        let _ = writeln!(
            svg,
            r##"<text x="{:.1}" y="{:.1}" fill="#2ca02c">n = {n}</text>"##,
            x + 3.0,
            py(y_hi) + 12.0
        );
    }
}

/// Writes `contents` to a temporary sibling file and renames it into place.
pub fn write_atomic(path: &Path, contents: &str) -> io::Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let name = path
        .file_name()
        .ok_or_else(|| io::Error::new(io::ErrorKind::InvalidInput, "path has no file name"))?;
    let tmp = dir.join(format!(".{}.tmp{}", name.to_string_lossy(), std::process::id()));
    let result = (|| {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(contents.as_bytes())?;
        f.sync_all()?;
        fs::rename(&tmp, path)
    })();
    if result.is_err() {
        let _ = fs::remove_file(&tmp);
    }
    result
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn real_formatting() {
        assert_eq!(fmt_real(None), "");
        assert_eq!(fmt_real(Some(0.1 + 0.2)), "0.3");
        assert_eq!(fmt_real(Some(2.0)), "2");
        assert_eq!(fmt_real(Some(1.0 / 3.0)), "0.333333333333333");
    }

    #[test]
    fn atomic_write_replaces() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("out.txt");
        write_atomic(&p, "one").unwrap();
        write_atomic(&p, "two").unwrap();
        assert_eq!(fs::read_to_string(&p).unwrap(), "two");
        assert_eq!(fs::read_dir(dir.path()).unwrap().count(), 1);
    }
}
