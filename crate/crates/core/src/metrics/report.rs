use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use super::{psnr_display, EvalResult};
use crate::error::Result;
use crate::trainer::CurveLog;

pub const SUMMARY_CSV: &str = "summary.csv";
pub const CURVES_SVG: &str = "curves.svg";

/// Paths written by [`emit_report`].
#[derive(Debug, Clone, PartialEq)]
pub struct ReportFiles {
    pub summary: PathBuf,
    pub plot: Option<PathBuf>,
}

/// Writes `summary.csv` (one row per image plus a mean row) and, when the
/// curve has records, `curves.svg` with the best epoch of each panel marked.
pub fn emit_report(results: &EvalResult, curve: &CurveLog, out_dir: &Path) -> Result<ReportFiles> {
    fs::create_dir_all(out_dir)?;
    let summary = out_dir.join(SUMMARY_CSV);
    let mut w = csv::Writer::from_path(&summary)?;
    w.write_record(["image", "psnr_db", "ssim"])?;
    for s in &results.images {
        w.write_record([s.name.clone(), format!("{:.6}", psnr_display(s.psnr)), format!("{:.6}", s.ssim)])?;
    }
    if let (Some(p), Some(s)) = (results.mean_psnr(), results.mean_ssim()) {
        w.write_record(["mean".to_string(), format!("{:.6}", psnr_display(p)), format!("{s:.6}")])?;
    }
    w.flush()?;

    let plot = if curve.records.is_empty() {
        None
    } else {
        let path = out_dir.join(CURVES_SVG);
        fs::write(&path, curve_svg(curve))?;
        Some(path)
    };
    Ok(ReportFiles { summary, plot })
}

struct Series<'a> {
    title: &'a str,
    unit: &'a str,
    /// Mark the largest value, otherwise the smallest.
    maximize: bool,
    points: Vec<(f64, f64)>,
}

const PANEL_W: f64 = 360.0;
const PANEL_H: f64 = 240.0;
const MARGIN: f64 = 48.0;

fn panel(svg: &mut String, s: &Series<'_>, x0: f64) {
    let _ = writeln!(svg, r#"<g transform="translate({x0},0)">"#);
    let _ = writeln!(
        svg,
        r#"<text x="{}" y="20" text-anchor="middle" font-size="14">{}</text>"#,
        MARGIN + PANEL_W / 2.0,
        s.title
    );
    let _ = writeln!(
        svg,
        r##"<rect x="{MARGIN}" y="{MARGIN}" width="{PANEL_W}" height="{PANEL_H}" fill="none" stroke="#888"/>"##
    );
    if s.points.is_empty() {
        let _ = writeln!(svg, "</g>");
        return;
    }
    let (xmin, xmax) = s.points.iter().fold((f64::MAX, f64::MIN), |(a, b), p| (a.min(p.0), b.max(p.0)));
    let (ymin, ymax) = s.points.iter().fold((f64::MAX, f64::MIN), |(a, b), p| (a.min(p.1), b.max(p.1)));
    let xs = if xmax > xmin { xmax - xmin } else { 1.0 };
    let ys = if ymax > ymin { ymax - ymin } else { 1.0 };
    let px = |x: f64| MARGIN + (x - xmin) / xs * PANEL_W;
    let py = |y: f64| MARGIN + PANEL_H - (y - ymin) / ys * PANEL_H;
    let pts: Vec<String> = s.points.iter().map(|&(x, y)| format!("{:.2},{:.2}", px(x), py(y))).collect();
    let _ = writeln!(
        svg,
        r##"<polyline fill="none" stroke="#1f77b4" stroke-width="2" points="{}"/>"##,
        pts.join(" ")
    );
    let _ = writeln!(
        svg,
        r#"<text x="{MARGIN}" y="{}" font-size="11">{ymin:.4}</text><text x="{MARGIN}" y="{}" font-size="11">{ymax:.4}</text>"#,
        MARGIN + PANEL_H + 14.0,
        MARGIN - 4.0
    );
    let better = |a: f64, b: f64| if s.maximize { a > b } else { a < b };
    let best = s
        .points
        .iter()
        .copied()
        .reduce(|b, p| if better(p.1, b.1) { p } else { b })
        .expect("non-empty");
    let tag = if s.maximize { "max" } else { "min" };
    let _ = writeln!(
        svg,
        r##"<circle class="{tag}" cx="{:.2}" cy="{:.2}" r="4" fill="#d62728"/>"##,
        px(best.0),
        py(best.1)
    );
    let _ = writeln!(
        svg,
        r#"<text class="{tag}-label" x="{:.2}" y="{:.2}" font-size="11" text-anchor="middle">{tag} {:.4}{} @ epoch {}</text>"#,
        px(best.0).clamp(MARGIN + 60.0, MARGIN + PANEL_W - 60.0),
        (py(best.1) - 8.0).max(MARGIN + 12.0),
        best.1,
        s.unit,
        best.0
    );
    let _ = writeln!(svg, "</g>");
}

fn curve_svg(curve: &CurveLog) -> String {
    let epochs = |f: &dyn Fn(&crate::trainer::CurveRecord) -> Option<f64>| -> Vec<(f64, f64)> {
        curve
            .records
            .iter()
            .filter_map(|r| f(r).filter(|v| v.is_finite()).map(|v| (r.epoch as f64, v)))
            .collect()
    };
    let mut panels = vec![
        Series {
            title: "Validation PSNR",
            unit: " dB",
            maximize: true,
            points: epochs(&|r| r.val_psnr.map(psnr_display)),
        },
        Series {
            title: "Validation SSIM",
            unit: "",
            maximize: true,
            points: epochs(&|r| r.val_ssim),
        },
    ];
    if panels.iter().all(|p| p.points.is_empty()) {
        // no validation set: plot the training loss instead
        panels = vec![Series {
            title: "Training loss",
            unit: "",
            maximize: false,
            points: epochs(&|r| Some(r.mean_loss)),
        }];
    }
    let width = panels.len() as f64 * (PANEL_W + 2.0 * MARGIN);
    let height = PANEL_H + 2.0 * MARGIN;
    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}">"#
    );
    for (i, p) in panels.iter().enumerate() {
        panel(&mut svg, p, i as f64 * (PANEL_W + 2.0 * MARGIN));
    }
    svg.push_str("</svg>\n");
    svg
}
