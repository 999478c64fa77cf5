//! Static SVG charts rendered from an explanation bundle directory.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use serde::Deserialize;
use thiserror::Error;

use crate::explain::ForcePlotData;

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("no explanation bundle at {0}")]
    MissingBundle(PathBuf),
    #[error("{file}: {reason}")]
    Malformed { file: String, reason: String },
    #[error("{0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = ReportError> = std::result::Result<T, E>;

pub const POSITIVE: &str = "#e0245e";
pub const NEGATIVE: &str = "#1d7fd6";
const BAR: &str = "#4c72b0";
const REST: &str = "#b0b0b0";

#[derive(Debug, Clone, PartialEq, Deserialize)]
pub struct LimeRanking {
    pub feature: String,
    pub weight: f64,
}

#[derive(Debug, Deserialize)]
struct LimeFile {
    top_k: Vec<LimeRanking>,
}

/// Parsed contents of a bundle directory. Per-instance maps are keyed by
/// the file stem after its prefix, `<output>_<date>[_<feature>]`.
#[derive(Debug, Default, Clone, PartialEq)]
pub struct BundleContents {
    pub importance: BTreeMap<usize, Vec<(String, f64)>>,
    pub by_asset: BTreeMap<usize, Vec<(String, f64)>>,
    pub by_indicator: BTreeMap<usize, Vec<(String, f64)>>,
    pub force: BTreeMap<String, ForcePlotData>,
    pub lime: BTreeMap<String, Vec<LimeRanking>>,
}

fn malformed(file: &str, reason: impl ToString) -> ReportError {
    ReportError::Malformed {
        file: file.to_string(),
        reason: reason.to_string(),
    }
}

fn parse_pairs(file: &str, text: &str) -> Result<Vec<(String, f64)>> {
    let mut lines = text.lines();
    lines.next().ok_or_else(|| malformed(file, "empty file"))?;
    lines
        .enumerate()
        .map(|(i, line)| {
            let (name, value) = line
                .rsplit_once(',')
                .ok_or_else(|| malformed(file, format!("line {}: expected name,value", i + 2)))?;
            let v: f64 = value
                .parse()
                .map_err(|e| malformed(file, format!("line {}: {e}", i + 2)))?;
            Ok((name.to_string(), v))
        })
        .collect()
}

/// Splits `<output>_<date>[_<feature>]`.
pub fn parse_key(file: &str, stem: &str) -> Result<(usize, NaiveDate, Option<String>)> {
    let bad = || malformed(file, "expected <output>_<date>[_<feature>]");
    let (k, rest) = stem.split_once('_').ok_or_else(bad)?;
    let k = k.parse().map_err(|e| malformed(file, e))?;
    let date = rest.get(..10).ok_or_else(bad)?;
    let date = NaiveDate::parse_from_str(date, "%Y-%m-%d").map_err(|e| malformed(file, e))?;
    let feature = match &rest[10..] {
        "" => None,
        f => Some(f.strip_prefix('_').filter(|f| !f.is_empty()).ok_or_else(bad)?.to_string()),
    };
    Ok((k, date, feature))
}

/// Reads every recognized file of a bundle directory. Unknown files are
/// ignored; a missing or empty directory is an error.
pub fn read_bundle(dir: &Path) -> Result<BundleContents> {
    let entries = std::fs::read_dir(dir).map_err(|_| ReportError::MissingBundle(dir.to_path_buf()))?;
    let mut names: Vec<String> = entries
        .filter_map(|e| e.ok())
        .filter_map(|e| e.file_name().into_string().ok())
        .collect();
    names.sort();
    let mut out = BundleContents::default();
    let mut seen = false;
    for name in names {
        let path = dir.join(&name);
        if let Some(stem) = name.strip_prefix("importance_").and_then(|s| s.strip_suffix(".csv")) {
            let text = std::fs::read_to_string(&path)?;
            let pairs = parse_pairs(&name, &text)?;
            let (k, map) = if let Some(k) = stem.strip_suffix("_by_asset") {
                (k, &mut out.by_asset)
            } else if let Some(k) = stem.strip_suffix("_by_indicator") {
                (k, &mut out.by_indicator)
            } else {
                (stem, &mut out.importance)
            };
            let k: usize = k.parse().map_err(|e| malformed(&name, e))?;
            map.insert(k, pairs);
            seen = true;
        } else if let Some(rest) = name.strip_prefix("force_").and_then(|s| s.strip_suffix(".json")) {
            parse_key(&name, rest)?;
            let text = std::fs::read_to_string(&path)?;
            let data: ForcePlotData = serde_json::from_str(&text).map_err(|e| malformed(&name, e))?;
            out.force.insert(rest.to_string(), data);
            seen = true;
        } else if let Some(rest) = name.strip_prefix("lime_").and_then(|s| s.strip_suffix(".json")) {
            parse_key(&name, rest)?;
            let text = std::fs::read_to_string(&path)?;
            let data: LimeFile = serde_json::from_str(&text).map_err(|e| malformed(&name, e))?;
            out.lime.insert(rest.to_string(), data.top_k);
            seen = true;
        }
    }
    if !seen {
        return Err(ReportError::MissingBundle(dir.to_path_buf()));
    }
    Ok(out)
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

fn header(out: &mut String, width: f64, height: f64, title: &str) {
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width:.0}" height="{height:.0}" viewBox="0 0 {width:.0} {height:.0}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(out, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        out,
        r#"<text x="{:.1}" y="20" text-anchor="middle" font-size="14">{}</text>"#,
        width / 2.0,
        escape(title)
    );
}

/// Horizontal bar chart in the given order. Negative values extend left of
/// the zero line and are drawn in the negative color when `signed`.
pub fn bar_chart_svg(title: &str, items: &[(String, f64)], signed: bool) -> String {
    let (label_w, plot_w, row_h, top) = (180.0, 460.0, 22.0, 36.0);
    let width = label_w + plot_w + 90.0;
    let height = top + row_h * items.len() as f64 + 16.0;
    let lo = items.iter().map(|i| i.1).fold(0.0f64, f64::min);
    let hi = items.iter().map(|i| i.1).fold(0.0f64, f64::max);
    let span = if hi - lo > 0.0 { hi - lo } else { 1.0 };
    let sx = |v: f64| label_w + (v - lo) / span * plot_w;

    let mut out = String::new();
    header(&mut out, width, height, title);
    for (i, (name, v)) in items.iter().enumerate() {
        let y = top + row_h * i as f64;
        let (x0, x1) = (sx(0.0).min(sx(*v)), sx(0.0).max(sx(*v)));
        let color = if !signed {
            BAR
        } else if *v >= 0.0 {
            POSITIVE
        } else {
            NEGATIVE
        };
        let _ = writeln!(
            out,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="end">{}</text>"#,
            label_w - 6.0,
            y + 15.0,
            escape(name)
        );
        let _ = writeln!(
            out,
            r#"<rect x="{x0:.2}" y="{:.1}" width="{:.2}" height="{:.1}" fill="{color}"/>"#,
            y + 3.0,
            x1 - x0,
            row_h - 6.0
        );
        let _ = writeln!(
            out,
            r#"<text x="{:.2}" y="{:.1}">{v:.4}</text>"#,
            x1 + 4.0,
            y + 15.0
        );
    }
    let z = sx(0.0);
    let _ = writeln!(
        out,
        r#"<line x1="{z:.2}" y1="{top:.1}" x2="{z:.2}" y2="{:.1}" stroke="black"/>"#,
        height - 16.0
    );
    out.push_str("</svg>\n");
    out
}

/// Force plot: positive segments rise from the base value, negative ones
/// fall back, and the remainder (single-feature plots) closes the gap to f(x).
pub fn force_plot_svg(title: &str, data: &ForcePlotData) -> String {
    let mut segments: Vec<(&str, f64, &str)> = Vec::new();
    segments.extend(data.positive.iter().map(|(n, p)| (n.as_str(), *p, POSITIVE)));
    segments.extend(data.negative.iter().map(|(n, p)| (n.as_str(), *p, NEGATIVE)));
    if data.rest != 0.0 {
        segments.push(("other features", data.rest, REST));
    }
    let mut cursor = data.base_value;
    let mut spans = Vec::with_capacity(segments.len());
    let (mut lo, mut hi) = (data.base_value.min(data.fx), data.base_value.max(data.fx));
    for (name, p, color) in &segments {
        let next = cursor + p;
        lo = lo.min(next);
        hi = hi.max(next);
        spans.push((*name, cursor, next, *color, *p));
        cursor = next;
    }
    let span = if hi - lo > 0.0 { hi - lo } else { 1.0 };
    let (left, plot_w) = (40.0, 720.0);
    let width = left * 2.0 + plot_w;
    let height = 90.0 + 18.0 * spans.len() as f64;
    let sx = |v: f64| left + (v - lo) / span * plot_w;

    let mut out = String::new();
    header(&mut out, width, height, title);
    for (i, (name, a, b, color, p)) in spans.iter().enumerate() {
        let (x0, x1) = (sx(a.min(*b)), sx(a.max(*b)));
        let _ = writeln!(
            out,
            r#"<rect x="{x0:.2}" y="40" width="{:.2}" height="18" fill="{color}" stroke="white" stroke-width="0.5"/>"#,
            x1 - x0
        );
        let _ = writeln!(
            out,
            r#"<text x="{left:.1}" y="{:.1}" fill="{color}">{} = {p:+.5}</text>"#,
            88.0 + 18.0 * i as f64,
            escape(name)
        );
    }
    for (label, v) in [("base value", data.base_value), ("f(x)", data.fx)] {
        let x = sx(v);
        let _ = writeln!(out, r#"<line x1="{x:.2}" y1="34" x2="{x:.2}" y2="64" stroke="black"/>"#);
        let _ = writeln!(
            out,
            r#"<text x="{x:.2}" y="{}" text-anchor="middle">{label} {v:.4}</text>"#,
            if label == "f(x)" { 32 } else { 76 }
        );
    }
    out.push_str("</svg>\n");
    out
}

#[derive(Debug, Default, Clone, PartialEq)]
pub struct ReportOutcome {
    pub written: Vec<String>,
    pub notices: Vec<String>,
}

/// Renders every chart the bundle supports into `out_dir`.
pub fn render_report(bundle: &BundleContents, out_dir: &Path) -> Result<ReportOutcome> {
    std::fs::create_dir_all(out_dir)?;
    let mut outcome = ReportOutcome::default();
    let mut emit = |name: String, svg: String| -> Result<()> {
        std::fs::write(out_dir.join(&name), svg)?;
        outcome.written.push(name);
        Ok(())
    };
    for (k, items) in &bundle.importance {
        emit(
            format!("importance_{k}.svg"),
            bar_chart_svg(&format!("Permutation importance, output {k}"), items, false),
        )?;
    }
    for (k, items) in &bundle.by_asset {
        emit(
            format!("importance_{k}_by_asset.svg"),
            bar_chart_svg(&format!("Importance by asset, output {k}"), items, false),
        )?;
    }
    for (k, items) in &bundle.by_indicator {
        emit(
            format!("importance_{k}_by_indicator.svg"),
            bar_chart_svg(&format!("Importance by indicator, output {k}"), items, false),
        )?;
    }
    for (stem, data) in &bundle.force {
        let title = match &data.feature {
            Some(f) => format!("SHAP force plot {stem}, {f} only"),
            None => format!("SHAP force plot {stem}"),
        };
        emit(format!("force_{stem}.svg"), force_plot_svg(&title, data))?;
    }
    for (stem, ranking) in &bundle.lime {
        let items: Vec<(String, f64)> = ranking.iter().map(|r| (r.feature.clone(), r.weight)).collect();
        emit(
            format!("lime_{stem}.svg"),
            bar_chart_svg(&format!("LIME top features {stem}"), &items, true),
        )?;
    }
    if bundle.force.is_empty() {
        outcome.notices.push("no force plot data in bundle; force plots skipped".into());
    }
    if bundle.lime.is_empty() {
        outcome.notices.push("no LIME explanations in bundle; LIME charts skipped".into());
    }
    Ok(outcome)
}
