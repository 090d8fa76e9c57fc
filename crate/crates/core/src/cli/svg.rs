//! SVG line-chart grids and text tables for `report`.

use std::collections::BTreeMap;
use std::fmt::Write;

use crate::evaluate::{MetricsRow, Representation, SummaryRow};
use crate::models::ModelFamily;

const PANEL_W: f64 = 260.0;
const PANEL_H: f64 = 180.0;
const MARGIN_L: f64 = 48.0;
const MARGIN_T: f64 = 40.0;
const GAP: f64 = 36.0;
const LABEL_COL: f64 = 110.0;
const COLORS: &[&str] = &["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e"];

/// Max-drop cell text. Negative drops are improvements and render as `*(+x)`.
pub fn format_drop(drop: Option<f64>) -> String {
    match drop {
        None => "n/a".into(),
        Some(d) if d < 0.0 => format!("*(+{:.3})", -d),
        Some(d) => format!("{d:.3}"),
    }
}

fn format_avg(mean: Option<f64>, std: Option<f64>) -> String {
    match (mean, std) {
        (Some(m), Some(s)) => format!("{m:.3} ± {s:.3}"),
        (Some(m), None) => format!("{m:.3}"),
        _ => "n/a".into(),
    }
}

fn rep_rank(name: &str) -> (usize, String) {
    let pos = name
        .parse::<Representation>()
        .ok()
        .and_then(|r| Representation::ALL.iter().position(|&x| x == r))
        .unwrap_or(usize::MAX);
    (pos, name.to_string())
}

fn regime_rank(name: &str) -> (usize, String) {
    let pos = if name == "year_agnostic" {
        0
    } else if name.starts_with("fixed_window") {
        1
    } else if name == "prior_year" {
        2
    } else if name == "full_history" {
        3
    } else {
        4
    };
    (pos, name.to_string())
}

fn model_rank(name: &str) -> (usize, String) {
    let pos = name
        .parse::<ModelFamily>()
        .map(|m| m as usize)
        .unwrap_or(usize::MAX);
    (pos, name.to_string())
}

fn distinct<'a>(names: impl Iterator<Item = &'a str>, rank: fn(&str) -> (usize, String)) -> Vec<String> {
    let mut v: Vec<(usize, String)> = names.map(rank).collect();
    v.sort();
    v.dedup();
    v.into_iter().map(|(_, s)| s).collect()
}

fn esc(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

struct Series {
    points: Vec<(i32, f64, f64)>,
    /// Year-agnostic cells: mean and std over folds.
    level: Option<(f64, f64)>,
}

fn mean_std(v: &[f64]) -> (f64, f64) {
    let m = v.iter().sum::<f64>() / v.len() as f64;
    let var = v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / v.len() as f64;
    (m, var.sqrt())
}

/// One grid of panels for `task`: representations as columns, regimes as
/// rows, one series per model. Each panel is a `<g class="panel">`.
pub fn render_task_svg(rows: &[MetricsRow], task: &str, switch_year: Option<i32>) -> String {
    let rows: Vec<&MetricsRow> = rows.iter().filter(|r| r.task == task).collect();
    let reps = distinct(rows.iter().map(|r| r.representation.as_str()), rep_rank);
    let regimes = distinct(rows.iter().map(|r| r.regime.as_str()), regime_rank);
    let models = distinct(rows.iter().map(|r| r.model.as_str()), model_rank);

    let mut series: BTreeMap<(&str, &str, &str), Series> = BTreeMap::new();
    let mut folds: BTreeMap<(&str, &str, &str), Vec<f64>> = BTreeMap::new();
    for r in &rows {
        let key = (r.representation.as_str(), r.regime.as_str(), r.model.as_str());
        let s = series.entry(key).or_insert(Series {
            points: Vec::new(),
            level: None,
        });
        if r.is_year_result() {
            if let (Some(y), Some(a)) = (r.test_year, r.auroc) {
                s.points.push((y, a, r.stderr.unwrap_or(0.0)));
            }
        } else if r.is_fold_result() {
            if let Some(a) = r.auroc {
                folds.entry(key).or_default().push(a);
            }
        }
    }
    for (key, v) in &folds {
        if let Some(s) = series.get_mut(key) {
            s.level = Some(mean_std(v));
        }
    }

    let years: Vec<i32> = rows.iter().filter(|r| r.is_year_result()).filter_map(|r| r.test_year).collect();
    let (x0, x1) = match (years.iter().min(), years.iter().max()) {
        (Some(&a), Some(&b)) if a < b => (f64::from(a) - 0.5, f64::from(b) + 0.5),
        (Some(&a), _) => (f64::from(a) - 1.0, f64::from(a) + 1.0),
        _ => (0.0, 1.0),
    };
    let lowest = series
        .values()
        .flat_map(|s| s.points.iter().map(|p| p.1 - p.2).chain(s.level.map(|l| l.0 - l.1)))
        .fold(0.5f64, f64::min);
    let y0 = ((lowest - 0.05) * 10.0).floor() / 10.0;
    let y0 = y0.max(0.0);
    let y1 = 1.0;

    let width = LABEL_COL + reps.len() as f64 * (PANEL_W + GAP) + MARGIN_L;
    let height = MARGIN_T + regimes.len() as f64 * (PANEL_H + GAP) + 40.0;
    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width:.0}" height="{height:.0}" viewBox="0 0 {width:.0} {height:.0}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(out, r#"<title>AUROC by test year: {}</title>"#, esc(task));
    let _ = writeln!(out, r#"<rect width="100%" height="100%" fill="white"/>"#);
    for (ci, rep) in reps.iter().enumerate() {
        let x = LABEL_COL + MARGIN_L + ci as f64 * (PANEL_W + GAP) + PANEL_W / 2.0;
        let _ = writeln!(out, r#"<text class="col-label" x="{x:.1}" y="20" text-anchor="middle" font-weight="bold">{}</text>"#, esc(rep));
    }
    for (ri, regime) in regimes.iter().enumerate() {
        let y = MARGIN_T + ri as f64 * (PANEL_H + GAP) + PANEL_H / 2.0;
        let _ = writeln!(out, r#"<text class="row-label" x="8" y="{y:.1}" font-weight="bold">{}</text>"#, esc(regime));
    }

    for (ri, regime) in regimes.iter().enumerate() {
        for (ci, rep) in reps.iter().enumerate() {
            let ox = LABEL_COL + MARGIN_L + ci as f64 * (PANEL_W + GAP);
            let oy = MARGIN_T + ri as f64 * (PANEL_H + GAP);
            let sx = |v: f64| ox + (v - x0) / (x1 - x0) * PANEL_W;
            let sy = |v: f64| oy + (y1 - v.clamp(y0, y1)) / (y1 - y0) * PANEL_H;
            let _ = writeln!(out, r#"<g class="panel" data-representation="{}" data-regime="{}">"#, esc(rep), esc(regime));
            if let Some(sw) = switch_year {
                let (a, b) = (f64::from(sw) - 0.5, f64::from(sw) + 0.5);
                if b > x0 && a < x1 {
                    let (a, b) = (sx(a.max(x0)), sx(b.min(x1)));
                    let _ = writeln!(out, r##"<rect class="switch" x="{a:.1}" y="{oy:.1}" width="{:.1}" height="{PANEL_H:.1}" fill="#bbbbbb" fill-opacity="0.35"/>"##, b - a);
                }
            }
            let _ = writeln!(out, r#"<rect x="{ox:.1}" y="{oy:.1}" width="{PANEL_W:.1}" height="{PANEL_H:.1}" fill="none" stroke="black"/>"#);
            let mut tick = (y0 * 10.0).round() as i32;
            while f64::from(tick) / 10.0 <= y1 + 1e-9 {
                let v = f64::from(tick) / 10.0;
                let y = sy(v);
                let _ = writeln!(out, r##"<line x1="{ox:.1}" y1="{y:.1}" x2="{:.1}" y2="{y:.1}" stroke="#e0e0e0"/>"##, ox + PANEL_W);
                let _ = writeln!(out, r#"<text x="{:.1}" y="{:.1}" text-anchor="end">{v:.1}</text>"#, ox - 4.0, y + 4.0);
                tick += 1;
            }
            let first = x0.ceil() as i32;
            let last = x1.floor() as i32;
            let step = if last - first > 8 { 2 } else { 1 };
            for yr in (first..=last).step_by(step) {
                let x = sx(f64::from(yr));
                let _ = writeln!(out, r#"<text x="{x:.1}" y="{:.1}" text-anchor="middle">{yr}</text>"#, oy + PANEL_H + 14.0);
            }
            for (mi, model) in models.iter().enumerate() {
                let Some(s) = series.get(&(rep.as_str(), regime.as_str(), model.as_str())) else {
                    continue;
                };
                let color = COLORS[mi % COLORS.len()];
                let _ = writeln!(out, r#"<g class="series" data-model="{}" stroke="{color}" fill="{color}">"#, esc(model));
                if let Some((m, sd)) = s.level {
                    let (a, b) = (sx(x0), sx(x1));
                    let _ = writeln!(out, r#"<rect x="{a:.1}" y="{:.1}" width="{:.1}" height="{:.1}" fill-opacity="0.15" stroke="none"/>"#, sy(m + sd), b - a, sy(m - sd) - sy(m + sd));
                    let _ = writeln!(out, r#"<line class="level" x1="{a:.1}" y1="{:.1}" x2="{b:.1}" y2="{:.1}" stroke-width="1.5" stroke-dasharray="5 3"/>"#, sy(m), sy(m));
                }
                if !s.points.is_empty() {
                    let path: Vec<String> = s.points.iter().map(|&(y, a, _)| format!("{:.1},{:.1}", sx(f64::from(y)), sy(a))).collect();
                    let _ = writeln!(out, r#"<polyline points="{}" fill="none" stroke-width="1.5"/>"#, path.join(" "));
                    for &(y, a, e) in &s.points {
                        let x = sx(f64::from(y));
                        let _ = writeln!(out, r#"<line class="errbar" x1="{x:.1}" y1="{:.1}" x2="{x:.1}" y2="{:.1}"/>"#, sy(a + e), sy(a - e));
                        let _ = writeln!(out, r#"<circle cx="{x:.1}" cy="{:.1}" r="2.5"/>"#, sy(a));
                    }
                }
                let _ = writeln!(out, "</g>");
            }
            let _ = writeln!(out, "</g>");
        }
    }
    let ly = height - 16.0;
    for (mi, model) in models.iter().enumerate() {
        let color = COLORS[mi % COLORS.len()];
        let x = LABEL_COL + MARGIN_L + mi as f64 * 80.0;
        let _ = writeln!(out, r#"<line x1="{x:.1}" y1="{ly:.1}" x2="{:.1}" y2="{ly:.1}" stroke="{color}" stroke-width="2"/>"#, x + 20.0);
        let _ = writeln!(out, r#"<text x="{:.1}" y="{:.1}">{}</text>"#, x + 24.0, ly + 4.0, esc(model));
    }
    out.push_str("</svg>\n");
    out
}

/// Markdown tables, one per task and regime: representations as rows, average
/// AUROC and max drop per model as columns.
pub fn render_tables(summary: &[SummaryRow]) -> String {
    let tasks = distinct(summary.iter().map(|r| r.task.as_str()), |s| (0, s.to_string()));
    let mut out = String::new();
    for task in &tasks {
        let rows: Vec<&SummaryRow> = summary.iter().filter(|r| &r.task == task).collect();
        let regimes = distinct(rows.iter().map(|r| r.regime.as_str()), regime_rank);
        let reps = distinct(rows.iter().map(|r| r.representation.as_str()), rep_rank);
        let models = distinct(rows.iter().map(|r| r.model.as_str()), model_rank);
        for regime in &regimes {
            let _ = writeln!(out, "## {task} / {regime}\n");
            let mut header = String::from("| representation |");
            let mut rule = String::from("|---|");
            for m in &models {
                let _ = write!(header, " {m} average AUROC | {m} max drop |");
                rule.push_str("---|---|");
            }
            let _ = writeln!(out, "{header}\n{rule}");
            for rep in &reps {
                let mut line = format!("| {rep} |");
                for m in &models {
                    let cell = rows
                        .iter()
                        .find(|r| &r.regime == regime && &r.representation == rep && &r.model == m);
                    let (avg, drop) = match cell {
                        Some(r) => (format_avg(r.average_auroc_mean, r.average_auroc_std), format_drop(r.max_drop)),
                        None => ("n/a".into(), "n/a".into()),
                    };
                    let _ = write!(line, " {avg} | {drop} |");
                }
                let _ = writeln!(out, "{line}");
            }
            out.push('\n');
        }
    }
    if let Some(method) = summary.first().map(|r| r.stderr_method.as_str()) {
        let _ = writeln!(out, "Standard errors: {method}. `*(+x)` marks a cell whose worst later year beat the first test year by x.");
    }
    out
}
