//! Output rendering: delimited tables, structured record files and SVG
//! graphics (heatmaps, curvature profiles, top-k score curves).
//!
//! Every table starts with a `# config <hash>` comment so artifacts from
//! different runs are distinguishable. Heatmaps embed their numeric values as
//! an SVG comment, making the image self-describing without a plot viewer.

use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::Path;

use crate::curvature::{CurvatureProfile, EvaluationGrid, LogRatioCurve};
use crate::ranking::{CValueMatrix, ElementCount, RankedPair};

/// Writes a comment-headed delimited table.
pub fn write_table(
    path: &Path,
    config_hash: &str,
    columns: &[&str],
    rows: impl IntoIterator<Item = Vec<String>>,
) -> io::Result<()> {
    let mut text = String::new();
    let _ = writeln!(text, "# config {config_hash}");
    let _ = writeln!(text, "{}", columns.join(","));
    for row in rows {
        let _ = writeln!(text, "{}", row.join(","));
    }
    fs::write(path, text)
}

/// Fixed-precision float format used in all tables; keeps outputs byte-stable.
pub fn fmt(v: f64) -> String {
    format!("{v:.6e}")
}

pub fn write_matrix_csv(path: &Path, config_hash: &str, matrix: &CValueMatrix) -> io::Result<()> {
    let m = matrix.size();
    let mut columns = vec!["element"];
    for el in &matrix.elements {
        columns.push(el.as_str());
    }
    let rows = (0..m).map(|i| {
        let mut row = Vec::with_capacity(m + 1);
        row.push(matrix.elements[i].clone());
        for j in 0..m {
            if matrix.is_present(i, j) {
                row.push(fmt(matrix.get(i, j)));
            } else {
                row.push("absent".to_string());
            }
        }
        row
    });
    write_table(path, config_hash, &columns, rows)
}

pub fn write_matrix_json(path: &Path, matrix: &CValueMatrix) -> io::Result<()> {
    let obj = serde_json::json!({
        "material": matrix.material,
        "kind": matrix.kind,
        "elements": matrix.elements,
        "values": (0..matrix.size())
            .map(|i| (0..matrix.size()).map(|j| matrix.get(i, j)).collect::<Vec<_>>())
            .collect::<Vec<_>>(),
        "coverage": (0..matrix.size())
            .map(|i| (0..matrix.size()).map(|j| matrix.coverage(i, j)).collect::<Vec<_>>())
            .collect::<Vec<_>>(),
    });
    fs::write(path, serde_json::to_string_pretty(&obj).expect("serializable"))
}

pub fn write_ranked_csv(path: &Path, config_hash: &str, ranked: &[RankedPair]) -> io::Result<()> {
    write_table(
        path,
        config_hash,
        &["rank", "pair", "c_value", "scaled_c_value"],
        ranked.iter().map(|r| {
            vec![
                r.rank.to_string(),
                format!("{}/{}", r.elements.0, r.elements.1),
                fmt(r.c_value),
                fmt(r.scaled_c_value),
            ]
        }),
    )
}

pub fn write_ranked_jsonl(path: &Path, ranked: &[RankedPair]) -> io::Result<()> {
    let mut text = String::new();
    for r in ranked {
        let _ = writeln!(text, "{}", serde_json::to_string(r).expect("serializable"));
    }
    fs::write(path, text)
}

pub fn write_frequency_csv(
    path: &Path,
    config_hash: &str,
    counts: &[ElementCount],
) -> io::Result<()> {
    write_table(
        path,
        config_hash,
        &["element", "count", "first_rank"],
        counts.iter().map(|c| {
            vec![
                c.element.clone(),
                c.count.to_string(),
                c.first_rank.to_string(),
            ]
        }),
    )
}

/// Per-pair curve dump: position, log-ratio, scaled log-ratio, curvature,
/// threshold and the above-threshold flag at every grid point.
pub fn write_curve_dump(
    path: &Path,
    config_hash: &str,
    grid: &EvaluationGrid,
    curve: &LogRatioCurve,
    profile: &CurvatureProfile,
) -> io::Result<()> {
    let scaled = curve.scaled_values();
    write_table(
        path,
        config_hash,
        &["x", "g", "scaled_g", "kappa", "threshold", "above"],
        (0..grid.len()).map(|i| {
            vec![
                fmt(grid.points()[i]),
                fmt(curve.g[i]),
                fmt(scaled[i]),
                fmt(profile.kappa[i]),
                fmt(profile.threshold),
                if profile.kappa[i] >= profile.threshold {
                    "1".to_string()
                } else {
                    "0".to_string()
                },
            ]
        }),
    )
}

/// Per-element fit diagnostics row.
pub struct FitDiagnosticsRow {
    pub element: String,
    pub x: f64,
    pub y: f64,
    pub eta: f64,
    pub mu: f64,
    pub pearson: f64,
}

pub fn write_diagnostics_csv(
    path: &Path,
    config_hash: &str,
    rows: &[FitDiagnosticsRow],
) -> io::Result<()> {
    write_table(
        path,
        config_hash,
        &["element", "x", "y", "eta", "mu", "pearson_residual"],
        rows.iter().map(|r| {
            vec![
                r.element.clone(),
                fmt(r.x),
                fmt(r.y),
                fmt(r.eta),
                fmt(r.mu),
                fmt(r.pearson),
            ]
        }),
    )
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// White-to-dark-blue ramp over [0, 1].
fn ramp(v: f64) -> String {
    let v = v.clamp(0.0, 1.0);
    let lerp = |a: f64, b: f64| (a + (b - a) * v).round() as u8;
    format!("#{:02x}{:02x}{:02x}", lerp(255.0, 8.0), lerp(255.0, 48.0), lerp(255.0, 107.0))
}

const ABSENT_FILL: &str = "#d9d9d9";

/// Renders a symmetric c-value matrix as an SVG heatmap. Expects entries in
/// [0, 1] (scaled or accumulated matrices); absent cells are drawn gray.
pub fn heatmap_svg(matrix: &CValueMatrix, config_hash: &str) -> String {
    let m = matrix.size();
    let cell = 22.0;
    let label_space = 46.0;
    let title_space = 24.0;
    let width = label_space + m as f64 * cell + 10.0;
    let height = title_space + label_space + m as f64 * cell + 10.0;

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r##"<svg xmlns="http://www.w3.org/2000/svg" width="{width:.0}" height="{height:.0}" viewBox="0 0 {width:.0} {height:.0}">"##
    );
    let _ = writeln!(svg, "<!-- config {config_hash} -->");
    let _ = writeln!(svg, "<!-- values (row-major, `absent` = no coverage):");
    for i in 0..m {
        let cells: Vec<String> = (0..m)
            .map(|j| {
                if matrix.is_present(i, j) {
                    format!("{:.6}", matrix.get(i, j))
                } else {
                    "absent".to_string()
                }
            })
            .collect();
        let _ = writeln!(svg, "  {}: {}", matrix.elements[i], cells.join(" "));
    }
    let _ = writeln!(svg, "-->");
    let _ = writeln!(
        svg,
        r##"<text x="{x}" y="16" font-family="sans-serif" font-size="13" font-weight="bold">{title}</text>"##,
        x = label_space,
        title = xml_escape(&matrix.material)
    );

    let x0 = label_space;
    let y0 = title_space + label_space;
    for i in 0..m {
        // Row and column labels.
        let _ = writeln!(
            svg,
            r##"<text x="{x:.1}" y="{y:.1}" font-family="sans-serif" font-size="10" text-anchor="end">{t}</text>"##,
            x = x0 - 4.0,
            y = y0 + i as f64 * cell + cell * 0.7,
            t = xml_escape(&matrix.elements[i])
        );
        let cx = x0 + i as f64 * cell + cell * 0.5;
        let cy = y0 - 6.0;
        let _ = writeln!(
            svg,
            r##"<text x="{cx:.1}" y="{cy:.1}" font-family="sans-serif" font-size="10" text-anchor="start" transform="rotate(-60 {cx:.1} {cy:.1})">{t}</text>"##,
            t = xml_escape(&matrix.elements[i])
        );
        for j in 0..m {
            let fill = if matrix.is_present(i, j) {
                ramp(matrix.get(i, j))
            } else {
                ABSENT_FILL.to_string()
            };
            let _ = writeln!(
                svg,
                r##"<rect x="{x:.1}" y="{y:.1}" width="{cell:.1}" height="{cell:.1}" fill="{fill}" stroke="#ffffff" stroke-width="0.5"/>"##,
                x = x0 + j as f64 * cell,
                y = y0 + i as f64 * cell,
            );
        }
    }
    svg.push_str("</svg>\n");
    svg
}

/// Curvature profile plot: κ over position with the dashed threshold line,
/// shaded exceedance intervals and optional known-anomaly markers.
pub fn profile_svg(
    profile: &CurvatureProfile,
    grid: &EvaluationGrid,
    known: &[f64],
    config_hash: &str,
) -> String {
    let width = 720.0;
    let height = 300.0;
    let ml = 50.0;
    let mr = 15.0;
    let mt = 28.0;
    let mb = 34.0;
    let pw = width - ml - mr;
    let ph = height - mt - mb;

    let kmax = profile
        .kappa
        .iter()
        .cloned()
        .fold(f64::NEG_INFINITY, f64::max)
        .max(profile.threshold)
        .max(1e-12);
    let sx = |x: f64| ml + x * pw;
    let sy = |k: f64| mt + ph * (1.0 - (k / kmax).clamp(0.0, 1.0));

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r##"<svg xmlns="http://www.w3.org/2000/svg" width="{width:.0}" height="{height:.0}" viewBox="0 0 {width:.0} {height:.0}">"##
    );
    let _ = writeln!(svg, "<!-- config {config_hash} -->");
    let _ = writeln!(
        svg,
        r##"<text x="{ml}" y="18" font-family="sans-serif" font-size="13" font-weight="bold">curvature of log({}/{})</text>"##,
        xml_escape(&profile.pair.0),
        xml_escape(&profile.pair.1)
    );
    // Shaded exceedance intervals.
    for &(s, e) in &profile.intervals {
        let _ = writeln!(
            svg,
            r##"<rect x="{x:.2}" y="{mt}" width="{w:.2}" height="{ph}" fill="#4a90d9" opacity="0.25"/>"##,
            x = sx(s),
            w = (sx(e) - sx(s)).max(0.5),
        );
    }
    // Axes.
    let _ = writeln!(
        svg,
        r##"<line x1="{ml}" y1="{y}" x2="{x2}" y2="{y}" stroke="#333" stroke-width="1"/>"##,
        y = mt + ph,
        x2 = ml + pw
    );
    let _ = writeln!(
        svg,
        r##"<line x1="{ml}" y1="{mt}" x2="{ml}" y2="{y2}" stroke="#333" stroke-width="1"/>"##,
        y2 = mt + ph
    );
    for tick in [0.0, 0.25, 0.5, 0.75, 1.0] {
        let _ = writeln!(
            svg,
            r##"<text x="{x:.1}" y="{y:.1}" font-family="sans-serif" font-size="10" text-anchor="middle">{tick}</text>"##,
            x = sx(tick),
            y = mt + ph + 14.0,
        );
    }
    let _ = writeln!(
        svg,
        r##"<text x="{x}" y="{y:.1}" font-family="sans-serif" font-size="10" text-anchor="end">{v:.3}</text>"##,
        x = ml - 4.0,
        y = mt + 8.0,
        v = kmax
    );
    // Curvature polyline.
    let mut pts = String::new();
    for (i, &x) in grid.points().iter().enumerate() {
        let _ = write!(pts, "{:.2},{:.2} ", sx(x), sy(profile.kappa[i]));
    }
    let _ = writeln!(
        svg,
        r##"<polyline points="{pts}" fill="none" stroke="#1f4e8c" stroke-width="1.2"/>"##
    );
    // Threshold.
    let _ = writeln!(
        svg,
        r##"<line x1="{ml}" y1="{y:.2}" x2="{x2}" y2="{y:.2}" stroke="#c0392b" stroke-width="1" stroke-dasharray="6 4"/>"##,
        y = sy(profile.threshold),
        x2 = ml + pw
    );
    // Known anomaly markers.
    for &k in known {
        let _ = writeln!(
            svg,
            r##"<circle cx="{x:.2}" cy="{y:.2}" r="3.5" fill="#c0392b"/>"##,
            x = sx(k),
            y = mt + ph
        );
    }
    // Detected interval midpoints.
    for &(s, e) in &profile.intervals {
        let _ = writeln!(
            svg,
            r##"<circle cx="{x:.2}" cy="{y:.2}" r="3.5" fill="#2458a6"/>"##,
            x = sx(0.5 * (s + e)),
            y = mt + ph - 10.0
        );
    }
    svg.push_str("</svg>\n");
    svg
}

const CURVE_COLORS: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#17becf", "#7f7f7f",
];

/// Rank-vs-value curves of the top c-values per material.
pub fn top_curves_svg(curves: &[(String, Vec<f64>)], config_hash: &str) -> String {
    let width = 660.0;
    let height = 330.0;
    let ml = 60.0;
    let mr = 150.0;
    let mt = 24.0;
    let mb = 36.0;
    let pw = width - ml - mr;
    let ph = height - mt - mb;
    let k = curves.iter().map(|(_, v)| v.len()).max().unwrap_or(1).max(2);
    let vmax = curves
        .iter()
        .flat_map(|(_, v)| v.iter().cloned())
        .fold(f64::NEG_INFINITY, f64::max)
        .max(1e-12);

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r##"<svg xmlns="http://www.w3.org/2000/svg" width="{width:.0}" height="{height:.0}" viewBox="0 0 {width:.0} {height:.0}">"##
    );
    let _ = writeln!(svg, "<!-- config {config_hash} -->");
    let _ = writeln!(
        svg,
        r##"<text x="{ml}" y="16" font-family="sans-serif" font-size="13" font-weight="bold">top-ranked c-values per material</text>"##
    );
    let _ = writeln!(
        svg,
        r##"<line x1="{ml}" y1="{y}" x2="{x2}" y2="{y}" stroke="#333"/>"##,
        y = mt + ph,
        x2 = ml + pw
    );
    let _ = writeln!(
        svg,
        r##"<line x1="{ml}" y1="{mt}" x2="{ml}" y2="{y2}" stroke="#333"/>"##,
        y2 = mt + ph
    );
    let _ = writeln!(
        svg,
        r##"<text x="{x:.1}" y="{y:.1}" font-family="sans-serif" font-size="10" text-anchor="middle">rank</text>"##,
        x = ml + pw / 2.0,
        y = mt + ph + 26.0
    );
    let _ = writeln!(
        svg,
        r##"<text x="{x}" y="{y}" font-family="sans-serif" font-size="10" text-anchor="end">{vmax:.4}</text>"##,
        x = ml - 4.0,
        y = mt + 8.0
    );
    for (idx, (material, values)) in curves.iter().enumerate() {
        let color = CURVE_COLORS[idx % CURVE_COLORS.len()];
        let mut pts = String::new();
        for (r, &v) in values.iter().enumerate() {
            let x = ml + pw * r as f64 / (k - 1) as f64;
            let y = mt + ph * (1.0 - (v / vmax).clamp(0.0, 1.0));
            let _ = write!(pts, "{x:.2},{y:.2} ");
        }
        let _ = writeln!(
            svg,
            r##"<polyline points="{pts}" fill="none" stroke="{color}" stroke-width="1.5"/>"##
        );
        let ly = mt + 14.0 * idx as f64 + 8.0;
        let _ = writeln!(
            svg,
            r##"<line x1="{x1}" y1="{ly}" x2="{x2}" y2="{ly}" stroke="{color}" stroke-width="2"/>"##,
            x1 = ml + pw + 8.0,
            x2 = ml + pw + 28.0
        );
        let _ = writeln!(
            svg,
            r##"<text x="{x}" y="{y}" font-family="sans-serif" font-size="10">{t}</text>"##,
            x = ml + pw + 32.0,
            y = ly + 3.0,
            t = xml_escape(material)
        );
    }
    svg.push_str("</svg>\n");
    svg
}
