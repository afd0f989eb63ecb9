//! Aggregation and rendering of evaluation reports.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::EvaluationReport;

/// Label used for the cross-ROI rows of a summary.
pub const ALL_ROIS: &str = "all";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub roi: String,
    pub method: String,
    pub p: Option<f64>,
    pub pearson: f64,
    pub two_v_two: f64,
    pub count: usize,
}

impl SummaryRow {
    pub fn label(&self) -> String {
        match self.p {
            Some(p) => format!("{}(p={p})", self.method),
            None => self.method.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub rows: Vec<SummaryRow>,
}

/// Sums of Pearson and 2v2 scores and the number of reports.
type Totals = (f64, f64, usize);

/// Means over subjects, per ROI and across all ROIs, for each method and
/// `p`. Rows keep the order in which methods first appear.
pub fn aggregate(reports: &[EvaluationReport]) -> Result<Summary> {
    if reports.is_empty() {
        return Err(Error::EmptyReports);
    }
    let mut order: Vec<(String, Option<u64>)> = Vec::new();
    let mut rois: Vec<String> = Vec::new();
    let mut sums: BTreeMap<(String, String, Option<u64>), Totals> = BTreeMap::new();
    for r in reports {
        let key = (r.method.clone(), r.p.map(f64::to_bits));
        if !order.contains(&key) {
            order.push(key.clone());
        }
        if !rois.contains(&r.roi) {
            rois.push(r.roi.clone());
        }
        for roi in [r.roi.as_str(), ALL_ROIS] {
            let e = sums
                .entry((roi.to_string(), key.0.clone(), key.1))
                .or_default();
            e.0 += r.pearson;
            e.1 += r.two_v_two;
            e.2 += 1;
        }
    }
    let mut rows = Vec::new();
    for roi in std::iter::once(ALL_ROIS.to_string()).chain(rois) {
        for (method, p) in &order {
            if let Some(&(pc, tv, count)) = sums.get(&(roi.clone(), method.clone(), *p)) {
                rows.push(SummaryRow {
                    roi: roi.clone(),
                    method: method.clone(),
                    p: p.map(f64::from_bits),
                    pearson: pc / count as f64,
                    two_v_two: tv / count as f64,
                    count,
                });
            }
        }
    }
    Ok(Summary { rows })
}

fn opt(p: Option<f64>) -> String {
    p.map(|v| v.to_string()).unwrap_or_default()
}

fn csv_err(e: csv::Error) -> Error {
    Error::Format(format!("csv: {e}"))
}

pub fn reports_csv(reports: &[EvaluationReport]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([
        "subject",
        "roi",
        "method",
        "p",
        "pearson",
        "two_v_two",
        "lambda",
        "n_test",
        "v_voxels",
    ])
    .map_err(csv_err)?;
    for r in reports {
        w.write_record([
            r.subject.clone(),
            r.roi.clone(),
            r.method.clone(),
            opt(r.p),
            r.pearson.to_string(),
            r.two_v_two.to_string(),
            r.lambda.to_string(),
            r.n_test.to_string(),
            r.v_voxels.to_string(),
        ])
        .map_err(csv_err)?;
    }
    finish(w)
}

pub fn summary_csv(summary: &Summary) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["roi", "method", "p", "pearson", "two_v_two", "count"])
        .map_err(csv_err)?;
    for r in &summary.rows {
        w.write_record([
            r.roi.clone(),
            r.method.clone(),
            opt(r.p),
            r.pearson.to_string(),
            r.two_v_two.to_string(),
            r.count.to_string(),
        ])
        .map_err(csv_err)?;
    }
    finish(w)
}

fn finish(w: csv::Writer<Vec<u8>>) -> Result<String> {
    let bytes = w
        .into_inner()
        .map_err(|e| Error::Format(format!("csv: {e}")))?;
    String::from_utf8(bytes).map_err(|e| Error::Format(e.to_string()))
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
}

const PALETTE: [&str; 8] = [
    "#4c72b0", "#dd8452", "#55a868", "#c44e52", "#8172b3", "#937860", "#da8bc3", "#8c8c8c",
];

/// Grouped bar chart of mean Pearson correlation, one group per ROI.
pub fn render_svg(summary: &Summary) -> String {
    let mut labels: Vec<String> = Vec::new();
    let mut groups: Vec<String> = Vec::new();
    for r in &summary.rows {
        let l = r.label();
        if !labels.contains(&l) {
            labels.push(l);
        }
        if !groups.contains(&r.roi) {
            groups.push(r.roi.clone());
        }
    }
    let bar = 14.0;
    let gap = 24.0;
    let group_w = bar * labels.len() as f64 + gap;
    let left = 50.0;
    let top = 20.0;
    let plot_h = 240.0;
    let legend_h = 16.0 * labels.len() as f64;
    let width = left + group_w * groups.len() as f64 + 20.0;
    let height = top + plot_h + 40.0 + legend_h;

    let max = summary.rows.iter().map(|r| r.pearson).fold(0.0, f64::max);
    let min = summary.rows.iter().map(|r| r.pearson).fold(0.0, f64::min);
    let span = (max - min).max(1e-9);
    let y = |v: f64| top + plot_h * (max - v) / span;

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width:.0}" height="{height:.0}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let zero = y(0.0);
    let _ = writeln!(
        s,
        r#"<line x1="{left}" y1="{zero:.2}" x2="{:.2}" y2="{zero:.2}" stroke="black"/>"#,
        width - 10.0
    );
    let _ = writeln!(
        s,
        r#"<text x="4" y="{:.2}">{:.3}</text><text x="4" y="{:.2}">{:.3}</text>"#,
        y(max) + 4.0,
        max,
        zero + 4.0,
        0.0
    );
    for (g, roi) in groups.iter().enumerate() {
        let x0 = left + gap / 2.0 + g as f64 * group_w;
        for r in summary.rows.iter().filter(|r| &r.roi == roi) {
            let i = labels.iter().position(|l| *l == r.label()).unwrap_or(0);
            let (a, b) = (y(r.pearson), zero);
            let _ = writeln!(
                s,
                r#"<rect x="{:.2}" y="{:.2}" width="{bar}" height="{:.2}" fill="{}"><title>{} {}: {}</title></rect>"#,
                x0 + i as f64 * bar,
                a.min(b),
                (a - b).abs(),
                PALETTE[i % PALETTE.len()],
                escape(roi),
                escape(&r.label()),
                r.pearson
            );
        }
        let _ = writeln!(
            s,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
            x0 + bar * labels.len() as f64 / 2.0,
            top + plot_h + 16.0,
            escape(roi)
        );
    }
    for (i, l) in labels.iter().enumerate() {
        let ly = top + plot_h + 36.0 + 16.0 * i as f64;
        let _ = writeln!(
            s,
            r#"<rect x="{left}" y="{:.2}" width="10" height="10" fill="{}"/><text x="{:.2}" y="{:.2}">{}</text>"#,
            ly - 9.0,
            PALETTE[i % PALETTE.len()],
            left + 14.0,
            ly,
            escape(l)
        );
    }
    s.push_str("</svg>\n");
    s
}

fn write(path: PathBuf, contents: &str) -> Result<()> {
    fs::write(&path, contents).map_err(|e| Error::io(&path, e))
}

pub fn read_reports_json(path: &Path) -> Result<Vec<EvaluationReport>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Parse(format!("{}: {e}", path.display())))
}

/// Writes `summary.csv` and `figure.svg` for already-computed reports.
pub fn write_summary(dir: &Path, reports: &[EvaluationReport]) -> Result<Summary> {
    let summary = aggregate(reports)?;
    write(dir.join("summary.csv"), &summary_csv(&summary)?)?;
    write(dir.join("figure.svg"), &render_svg(&summary))?;
    Ok(summary)
}

/// Writes `reports.json`, `reports.csv`, `summary.csv` and `figure.svg`.
pub fn write_outputs(dir: &Path, reports: &[EvaluationReport]) -> Result<Summary> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let json = serde_json::to_string_pretty(reports).map_err(|e| Error::Format(e.to_string()))?;
    write(dir.join("reports.json"), &(json + "\n"))?;
    write(dir.join("reports.csv"), &reports_csv(reports)?)?;
    write_summary(dir, reports)
}
