//! Minimal SVG line charts for learning curves.

use std::fmt::Write;

use crate::active::ExperimentLog;

const PANEL_W: f64 = 420.0;
const PANEL_H: f64 = 300.0;
const MARGIN: f64 = 50.0;
const PALETTE: [&str; 8] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#e377c2", "#17becf"];

#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub name: String,
    pub points: Vec<(f64, f64)>,
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn nice_range(lo: f64, hi: f64) -> (f64, f64) {
    if !(lo.is_finite() && hi.is_finite()) {
        return (0.0, 1.0);
    }
    if hi - lo < 1e-12 {
        return (lo - 0.5, hi + 0.5);
    }
    (lo, hi)
}

/// One chart panel drawn at `(ox, oy)`; y is fixed to [0, 1].
fn panel(out: &mut String, ox: f64, oy: f64, x_label: &str, series: &[Series], threshold: Option<f64>, log_x: bool) {
    let tx = |x: f64| if log_x { x.max(1e-9).log10() } else { x };
    let xs: Vec<f64> = series.iter().flat_map(|s| s.points.iter().map(|p| tx(p.0))).collect();
    let (x0, x1) = nice_range(
        xs.iter().copied().fold(f64::INFINITY, f64::min),
        xs.iter().copied().fold(f64::NEG_INFINITY, f64::max),
    );
    let (pw, ph) = (PANEL_W - 2.0 * MARGIN, PANEL_H - 2.0 * MARGIN);
    let px = |x: f64| ox + MARGIN + (tx(x) - x0) / (x1 - x0) * pw;
    let py = |y: f64| oy + MARGIN + (1.0 - y.clamp(0.0, 1.0)) * ph;

    let _ = writeln!(
        out,
        r##"<rect x="{}" y="{}" width="{pw}" height="{ph}" fill="none" stroke="#444"/>"##,
        ox + MARGIN,
        oy + MARGIN
    );
    for t in 0..=4 {
        let y = t as f64 / 4.0;
        let _ = writeln!(
            out,
            r#"<text x="{}" y="{}" font-size="10" text-anchor="end">{y:.2}</text>"#,
            ox + MARGIN - 4.0,
            py(y) + 3.0
        );
    }
    for t in 0..=4 {
        let xv = x0 + (x1 - x0) * t as f64 / 4.0;
        let shown = if log_x { 10f64.powf(xv) } else { xv };
        let label = if shown.abs() >= 100.0 { format!("{shown:.0}") } else { format!("{shown:.3}") };
        let x = ox + MARGIN + pw * t as f64 / 4.0;
        let _ = writeln!(
            out,
            r#"<text x="{x}" y="{}" font-size="10" text-anchor="middle">{label}</text>"#,
            oy + MARGIN + ph + 14.0
        );
    }
    let _ = writeln!(
        out,
        r#"<text x="{}" y="{}" font-size="12" text-anchor="middle">{}</text>"#,
        ox + MARGIN + pw / 2.0,
        oy + PANEL_H - 12.0,
        escape(x_label)
    );
    let _ = writeln!(
        out,
        r#"<text x="{}" y="{}" font-size="12" transform="rotate(-90 {0} {1})" text-anchor="middle">mIoU</text>"#,
        ox + 14.0,
        oy + MARGIN + ph / 2.0
    );
    if let Some(t) = threshold {
        let _ = writeln!(
            out,
            r##"<line x1="{}" x2="{}" y1="{y}" y2="{y}" stroke="#888" stroke-dasharray="5,4"/>"##,
            ox + MARGIN,
            ox + MARGIN + pw,
            y = py(t)
        );
    }
    for (k, s) in series.iter().enumerate() {
        let color = PALETTE[k % PALETTE.len()];
        let pts: Vec<String> = s.points.iter().map(|&(x, y)| format!("{:.2},{:.2}", px(x), py(y))).collect();
        let _ = writeln!(
            out,
            r#"<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{}"/>"#,
            pts.join(" ")
        );
        let _ = writeln!(
            out,
            r#"<text x="{}" y="{}" font-size="10" fill="{color}">{}</text>"#,
            ox + MARGIN + 6.0,
            oy + MARGIN + 12.0 + 12.0 * k as f64,
            escape(&s.name)
        );
    }
}

/// mIoU against labeled area and against labeled fraction, side by side,
/// with an optional horizontal target line.
pub fn curves_svg(title: &str, logs: &[(String, &ExperimentLog)], threshold: Option<f64>, log_area: bool) -> String {
    let by = |f: fn(&crate::active::LogRow) -> f64| -> Vec<Series> {
        logs.iter()
            .map(|(name, log)| Series {
                name: name.clone(),
                points: log.rows.iter().map(|r| (f(r), r.miou)).collect(),
            })
            .collect()
    };
    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{}" height="{}" font-family="sans-serif">"#,
        2.0 * PANEL_W,
        PANEL_H + 20.0
    );
    let _ = writeln!(out, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        out,
        r#"<text x="{}" y="16" font-size="14" text-anchor="middle">{}</text>"#,
        PANEL_W,
        escape(title)
    );
    let area_label = if log_area { "labeled area (m², log)" } else { "labeled area (m²)" };
    panel(&mut out, 0.0, 20.0, area_label, &by(|r| r.labeled_area_m2), threshold, log_area);
    panel(&mut out, PANEL_W, 20.0, "labeled fraction", &by(|r| r.labeled_fraction), threshold, false);
    out.push_str("</svg>\n");
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::active::LogRow;

    fn log() -> ExperimentLog {
        ExperimentLog {
            fingerprint: String::new(),
            class_count: 2,
            rows: (0..3)
                .map(|c| LogRow {
                    cycle: c,
                    labeled_points: 10 * (c + 1),
                    labeled_fraction: 0.01 * (c + 1) as f64,
                    labeled_area_m2: 5.0 * (c + 1) as f64,
                    miou: 0.5 + 0.1 * c as f64,
                    per_class: vec![None; 2],
                    wall_seconds: 0.0,
                })
                .collect(),
            notes: vec![],
            selections: vec![],
        }
    }

    #[test]
    fn svg_has_both_panels_and_rule() {
        let l = log();
        let svg = curves_svg("a<b", &[("avg_ent".into(), &l), ("random".into(), &l)], Some(0.6), true);
        assert!(svg.starts_with("<svg"));
        assert!(svg.trim_end().ends_with("</svg>"));
        assert_eq!(svg.matches("<polyline").count(), 4);
        assert_eq!(svg.matches("stroke-dasharray").count(), 2);
        assert!(svg.contains("a&lt;b"));
    }

    #[test]
    fn single_point_series_is_finite() {
        let mut l = log();
        l.rows.truncate(1);
        let svg = curves_svg("t", &[("x".into(), &l)], None, false);
        assert!(!svg.contains("NaN") && !svg.contains("inf"));
    }
}
