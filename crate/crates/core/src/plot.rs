//! Dependency-free SVG charts: residual accuracy curves and horizontal
//! importance bars with the equal-importance reference line.
//!
//! Output is plain text built with fixed-precision formatting, so identical
//! inputs always give byte-identical files.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::eval::{CurvePoint, EvaluationEntry, ImportanceTable};

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 420.0;
const MARGIN_LEFT: f64 = 60.0;
const MARGIN_RIGHT: f64 = 180.0;
const MARGIN_TOP: f64 = 36.0;
const MARGIN_BOTTOM: f64 = 48.0;

const PALETTE: [&str; 8] =
    ["#1b9e77", "#d95f02", "#7570b3", "#e7298a", "#66a61e", "#e6ab02", "#a6761d", "#666666"];

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

fn header(out: &mut String, width: f64, height: f64, title: &str) {
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width:.0}" height="{height:.0}" viewBox="0 0 {width:.0} {height:.0}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(out, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        out,
        r#"<text x="{:.1}" y="20" text-anchor="middle" font-size="13">{}</text>"#,
        width / 2.0,
        escape(title)
    );
}

/// Fraction of ties within each residual threshold, one line per curve.
pub fn accuracy_svg(title: &str, curves: &[(String, Vec<CurvePoint>)]) -> String {
    let mut out = String::new();
    header(&mut out, WIDTH, HEIGHT, title);
    let x_max = curves
        .iter()
        .flat_map(|(_, c)| c.iter().map(|p| p.threshold))
        .fold(0.0f64, f64::max)
        .max(1e-12);
    let plot_w = WIDTH - MARGIN_LEFT - MARGIN_RIGHT;
    let plot_h = HEIGHT - MARGIN_TOP - MARGIN_BOTTOM;
    let sx = |x: f64| MARGIN_LEFT + plot_w * x / x_max;
    let sy = |y: f64| MARGIN_TOP + plot_h * (1.0 - y);

    let _ = writeln!(
        out,
        r##"<rect x="{MARGIN_LEFT:.1}" y="{MARGIN_TOP:.1}" width="{plot_w:.1}" height="{plot_h:.1}" fill="none" stroke="#333"/>"##
    );
    for k in 0..=5 {
        let f = k as f64 / 5.0;
        let _ = writeln!(
            out,
            r##"<line x1="{:.1}" y1="{:.1}" x2="{:.1}" y2="{:.1}" stroke="#ddd"/><text x="{:.1}" y="{:.1}" text-anchor="end">{f:.1}</text>"##,
            MARGIN_LEFT,
            sy(f),
            MARGIN_LEFT + plot_w,
            sy(f),
            MARGIN_LEFT - 6.0,
            sy(f) + 4.0
        );
        let x = x_max * f;
        let _ = writeln!(
            out,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{}</text>"#,
            sx(x),
            MARGIN_TOP + plot_h + 16.0,
            tick(x)
        );
    }
    let _ = writeln!(
        out,
        r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">absolute residual threshold</text>"#,
        MARGIN_LEFT + plot_w / 2.0,
        HEIGHT - 10.0
    );
    let _ = writeln!(
        out,
        r#"<text x="14" y="{:.1}" text-anchor="middle" transform="rotate(-90 14 {:.1})">fraction of ties within threshold</text>"#,
        MARGIN_TOP + plot_h / 2.0,
        MARGIN_TOP + plot_h / 2.0
    );
    for (k, (label, curve)) in curves.iter().enumerate() {
        let color = PALETTE[k % PALETTE.len()];
        let mut points = String::new();
        for p in curve {
            let _ = write!(points, "{:.2},{:.2} ", sx(p.threshold), sy(p.fraction));
        }
        let _ = writeln!(
            out,
            r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="1.5"/>"#,
            points.trim_end()
        );
        let ly = MARGIN_TOP + 14.0 + 16.0 * k as f64;
        let lx = WIDTH - MARGIN_RIGHT + 12.0;
        let _ = writeln!(
            out,
            r#"<line x1="{lx:.1}" y1="{ly:.1}" x2="{:.1}" y2="{ly:.1}" stroke="{color}" stroke-width="2"/><text x="{:.1}" y="{:.1}">{}</text>"#,
            lx + 18.0,
            lx + 24.0,
            ly + 4.0,
            escape(label)
        );
    }
    out.push_str("</svg>\n");
    out
}

fn tick(x: f64) -> String {
    if x == 0.0 {
        "0".into()
    } else if x >= 10.0 {
        format!("{x:.0}")
    } else if x >= 1.0 {
        format!("{x:.1}")
    } else {
        format!("{x:.3}")
    }
}

/// Horizontal bars, most important first, with a dashed vertical line at the
/// equal-importance value.
pub fn importance_svg(title: &str, table: &ImportanceTable) -> String {
    let mut order: Vec<usize> = (0..table.features.len()).collect();
    order.sort_by(|&a, &b| table.importances[b].total_cmp(&table.importances[a]).then(a.cmp(&b)));
    let bar_h = 16.0;
    let label_w = 90.0;
    let plot_w = WIDTH - label_w - 40.0;
    let height = MARGIN_TOP + MARGIN_BOTTOM + bar_h * order.len() as f64 + 8.0;
    let mut out = String::new();
    header(&mut out, WIDTH, height, title);
    let x_max = table
        .importances
        .iter()
        .copied()
        .fold(table.null_line, f64::max)
        .max(1e-12)
        * 1.05;
    let sx = |x: f64| label_w + plot_w * x / x_max;
    for (row, &k) in order.iter().enumerate() {
        let y = MARGIN_TOP + 4.0 + bar_h * row as f64;
        let v = table.importances[k];
        let _ = writeln!(
            out,
            r##"<text x="{:.1}" y="{:.1}" text-anchor="end">{}</text><rect x="{label_w:.1}" y="{:.1}" width="{:.2}" height="{:.1}" fill="#4c72b0"/><text x="{:.1}" y="{:.1}">{v:.3}</text>"##,
            label_w - 6.0,
            y + bar_h * 0.7,
            escape(&table.features[k]),
            y + 2.0,
            sx(v) - label_w,
            bar_h - 4.0,
            sx(v) + 4.0,
            y + bar_h * 0.7
        );
    }
    let bottom = MARGIN_TOP + 4.0 + bar_h * order.len() as f64;
    let _ = writeln!(
        out,
        r##"<line x1="{:.2}" y1="{MARGIN_TOP:.1}" x2="{:.2}" y2="{bottom:.1}" stroke="#c44e52" stroke-dasharray="4 3"/><text x="{:.2}" y="{:.1}" fill="#c44e52">1/p = {:.3}</text>"##,
        sx(table.null_line),
        sx(table.null_line),
        sx(table.null_line) + 4.0,
        bottom + 14.0,
        table.null_line
    );
    let _ = writeln!(
        out,
        r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">importance ({})</text>"#,
        label_w + plot_w / 2.0,
        height - 10.0,
        match table.source {
            crate::eval::ImportanceSource::Impurity => "mean impurity decrease",
            crate::eval::ImportanceSource::AbsCoefficient => "share of absolute standardized coefficients",
        }
    );
    out.push_str("</svg>\n");
    out
}

pub fn accuracy_csv(curves: &[(String, Vec<CurvePoint>)]) -> String {
    let mut out = String::from("model,threshold,fraction\n");
    for (label, curve) in curves {
        for p in curve {
            let _ = writeln!(out, "{label},{},{}", p.threshold, p.fraction);
        }
    }
    out
}

pub fn importance_csv(table: &ImportanceTable) -> String {
    let mut out = String::from("feature,importance,null_line\n");
    for (f, v) in table.features.iter().zip(&table.importances) {
        let _ = writeln!(out, "{f},{v},{}", table.null_line);
    }
    out
}

/// Files written by [`emit_plots`], or the reason nothing was written.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PlotOutput {
    pub files: Vec<PathBuf>,
    pub notice: Option<String>,
}

/// One accuracy chart covering every entry plus one importance chart per
/// entry, each with its underlying CSV.
pub fn emit_plots(entries: &[EvaluationEntry], dir: &Path) -> std::io::Result<PlotOutput> {
    if entries.is_empty() {
        return Ok(PlotOutput {
            files: Vec::new(),
            notice: Some("no models were fitted; no plots written".into()),
        });
    }
    fs::create_dir_all(dir)?;
    let mut files = Vec::new();
    let mut write = |name: String, body: String| -> std::io::Result<()> {
        let path = dir.join(name);
        fs::write(&path, body)?;
        files.push(path);
        Ok(())
    };
    let curves: Vec<(String, Vec<CurvePoint>)> =
        entries.iter().map(|e| (e.id.clone(), e.curve.clone())).collect();
    write("accuracy.svg".into(), accuracy_svg("Prediction accuracy", &curves))?;
    write("accuracy.csv".into(), accuracy_csv(&curves))?;
    for e in entries {
        write(format!("importance_{}.svg", e.id), importance_svg(&e.id, &e.importance))?;
        write(format!("importance_{}.csv", e.id), importance_csv(&e.importance))?;
    }
    Ok(PlotOutput { files, notice: None })
}
