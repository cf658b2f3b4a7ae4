//! Standalone SVG figures and readers for the CSVs they are drawn from.

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::eval::{BoxStats, CurvePoint, RocCurve};

const WIDTH: f64 = 480.0;
const HEIGHT: f64 = 400.0;
const MARGIN: f64 = 56.0;
const COLORS: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"];

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

struct Frame {
    x0: f64,
    x1: f64,
    y0: f64,
    y1: f64,
}

impl Frame {
    fn px(&self, x: f64) -> f64 {
        MARGIN + (x - self.x0) / (self.x1 - self.x0) * (WIDTH - 2.0 * MARGIN)
    }

    fn py(&self, y: f64) -> f64 {
        HEIGHT - MARGIN - (y - self.y0) / (self.y1 - self.y0) * (HEIGHT - 2.0 * MARGIN)
    }
}

fn open(out: &mut String, title: &str, x_label: &str, y_label: &str) {
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(out, r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);
    let _ = writeln!(
        out,
        r#"<text x="{}" y="24" text-anchor="middle" font-size="14">{}</text>"#,
        WIDTH / 2.0,
        escape(title)
    );
    let _ = writeln!(
        out,
        r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#,
        WIDTH / 2.0,
        HEIGHT - 14.0,
        escape(x_label)
    );
    let _ = writeln!(
        out,
        r#"<text x="16" y="{}" text-anchor="middle" transform="rotate(-90 16 {})">{}</text>"#,
        HEIGHT / 2.0,
        HEIGHT / 2.0,
        escape(y_label)
    );
}

fn axes(out: &mut String, f: &Frame, y_ticks: &[f64]) {
    let _ = writeln!(
        out,
        r#"<rect x="{MARGIN}" y="{MARGIN}" width="{}" height="{}" fill="none" stroke="black"/>"#,
        WIDTH - 2.0 * MARGIN,
        HEIGHT - 2.0 * MARGIN
    );
    for &t in y_ticks {
        let y = f.py(t);
        let _ = writeln!(
            out,
            r##"<line x1="{MARGIN}" y1="{y:.2}" x2="{:.2}" y2="{y:.2}" stroke="#ddd"/><text x="{}" y="{:.2}" text-anchor="end">{t}</text>"##,
            WIDTH - MARGIN,
            MARGIN - 6.0,
            y + 4.0
        );
    }
}

/// ROC curves with their AUC in the legend and the chance diagonal.
pub fn roc_svg(curves: &[(String, RocCurve, Option<f64>)]) -> String {
    let f = Frame {
        x0: 0.0,
        x1: 1.0,
        y0: 0.0,
        y1: 1.0,
    };
    let mut out = String::new();
    open(&mut out, "ROC", "False positive rate", "True positive rate");
    let ticks = [0.0, 0.25, 0.5, 0.75, 1.0];
    axes(&mut out, &f, &ticks);
    for &t in &ticks {
        let _ = writeln!(
            out,
            r#"<text x="{:.2}" y="{}" text-anchor="middle">{t}</text>"#,
            f.px(t),
            HEIGHT - MARGIN + 16.0
        );
    }
    let _ = writeln!(
        out,
        r##"<line x1="{:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke="#999" stroke-dasharray="4 4"/>"##,
        f.px(0.0),
        f.py(0.0),
        f.px(1.0),
        f.py(1.0)
    );
    for (i, (name, roc, auc)) in curves.iter().enumerate() {
        let color = COLORS[i % COLORS.len()];
        let points: Vec<String> = roc
            .fpr
            .iter()
            .zip(&roc.tpr)
            .map(|(&x, &y)| format!("{:.2},{:.2}", f.px(x), f.py(y)))
            .collect();
        let _ = writeln!(
            out,
            r#"<polyline fill="none" stroke="{color}" stroke-width="2" points="{}"/>"#,
            points.join(" ")
        );
        let label = match auc {
            Some(a) => format!("{name} (AUC {:.2}%)", 100.0 * a),
            None => name.clone(),
        };
        let ly = f.py(0.0) - 14.0 - 16.0 * (curves.len() - 1 - i) as f64;
        let _ = writeln!(
            out,
            r#"<line x1="{:.2}" y1="{ly:.2}" x2="{:.2}" y2="{ly:.2}" stroke="{color}" stroke-width="2"/><text x="{:.2}" y="{:.2}">{}</text>"#,
            f.px(0.45),
            f.px(0.52),
            f.px(0.54),
            ly + 4.0,
            escape(&label)
        );
    }
    out.push_str("</svg>\n");
    out
}

/// Tukey boxplots, one per labeled group; outliers drawn as circles.
pub fn boxplot_svg(title: &str, y_label: &str, boxes: &[(String, BoxStats)]) -> String {
    let (mut lo, mut hi) = boxes
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), (_, b)| (lo.min(b.min), hi.max(b.max)));
    if !lo.is_finite() {
        (lo, hi) = (0.0, 1.0);
    }
    if hi - lo < 1e-9 {
        lo -= 0.05;
        hi += 0.05;
    }
    let pad = 0.05 * (hi - lo);
    let f = Frame {
        x0: 0.0,
        x1: boxes.len().max(1) as f64,
        y0: lo - pad,
        y1: hi + pad,
    };
    let mut out = String::new();
    open(&mut out, title, "", y_label);
    let ticks: Vec<f64> = (0..=4).map(|i| f.y0 + (f.y1 - f.y0) * i as f64 / 4.0).collect();
    let rounded: Vec<f64> = ticks.iter().map(|t| (t * 1000.0).round() / 1000.0).collect();
    axes(&mut out, &f, &rounded);
    let half = 0.25;
    for (i, (name, b)) in boxes.iter().enumerate() {
        let c = i as f64 + 0.5;
        let (xl, xr, xc) = (f.px(c - half), f.px(c + half), f.px(c));
        let _ = writeln!(
            out,
            r#"<rect x="{xl:.2}" y="{:.2}" width="{:.2}" height="{:.2}" fill="{}" fill-opacity="0.3" stroke="black"/>"#,
            f.py(b.q3),
            xr - xl,
            f.py(b.q1) - f.py(b.q3),
            COLORS[0]
        );
        let _ = writeln!(
            out,
            r#"<line x1="{xl:.2}" y1="{0:.2}" x2="{xr:.2}" y2="{0:.2}" stroke="black" stroke-width="2"/>"#,
            f.py(b.median)
        );
        for (from, to) in [(b.q3, b.whisker_high), (b.q1, b.whisker_low)] {
            let _ = writeln!(
                out,
                r#"<line x1="{xc:.2}" y1="{:.2}" x2="{xc:.2}" y2="{:.2}" stroke="black"/><line x1="{:.2}" y1="{1:.2}" x2="{:.2}" y2="{1:.2}" stroke="black"/>"#,
                f.py(from),
                f.py(to),
                f.px(c - half / 2.0),
                f.px(c + half / 2.0)
            );
        }
        for &o in &b.outliers {
            let _ = writeln!(out, r#"<circle cx="{xc:.2}" cy="{:.2}" r="3" fill="none" stroke="black"/>"#, f.py(o));
        }
        let _ = writeln!(
            out,
            r#"<text x="{xc:.2}" y="{}" text-anchor="middle">{}</text>"#,
            HEIGHT - MARGIN + 16.0,
            escape(name)
        );
    }
    out.push_str("</svg>\n");
    out
}

fn csv_rows<'a>(text: &'a str, header: &str) -> Result<impl Iterator<Item = (usize, Vec<&'a str>)>> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h.trim() == header => {}
        _ => return Err(Error::data(format!("expected CSV header `{header}`"))),
    }
    Ok(lines
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| (i + 1, l.split(',').map(str::trim).collect())))
}

fn field<T: std::str::FromStr>(row: &[&str], i: usize, line: usize) -> Result<T> {
    row.get(i)
        .and_then(|v| v.parse().ok())
        .ok_or_else(|| Error::data(format!("CSV line {line}: bad field {}", i + 1)))
}

/// Reads `threshold,fpr,tpr`.
pub fn read_roc_csv(text: &str) -> Result<RocCurve> {
    let mut roc = RocCurve {
        thresholds: Vec::new(),
        fpr: Vec::new(),
        tpr: Vec::new(),
    };
    for (line, row) in csv_rows(text, "threshold,fpr,tpr")? {
        roc.thresholds.push(field(&row, 0, line)?);
        roc.fpr.push(field(&row, 1, line)?);
        roc.tpr.push(field(&row, 2, line)?);
    }
    Ok(roc)
}

/// Reads `fraction,repeat,metric,value`.
pub fn read_learning_curve_csv(text: &str) -> Result<Vec<CurvePoint>> {
    csv_rows(text, "fraction,repeat,metric,value")?
        .map(|(line, row)| {
            Ok(CurvePoint {
                fraction: field(&row, 0, line)?,
                repeat: field(&row, 1, line)?,
                metric: field(&row, 2, line)?,
                value: field(&row, 3, line)?,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::Label;
    use crate::eval::{boxplot, roc_auc, write_learning_curve_csv, write_roc_csv};

    #[test]
    fn roc_csv_round_trips_including_infinite_threshold() {
        let truth = [Label::Defective, Label::Functional, Label::Defective, Label::Functional];
        let (roc, _) = roc_auc(&[0.9, 0.8, 0.3, -1.0], &truth).unwrap();
        let mut buf = Vec::new();
        write_roc_csv(&mut buf, &roc).unwrap();
        assert_eq!(read_roc_csv(std::str::from_utf8(&buf).unwrap()).unwrap(), roc);
        assert!(read_roc_csv("a,b\n1,2").is_err());
    }

    #[test]
    fn learning_curve_csv_round_trips() {
        let pts = vec![CurvePoint {
            fraction: 0.25,
            repeat: 3,
            metric: "auc".into(),
            value: 0.8125,
        }];
        let mut buf = Vec::new();
        write_learning_curve_csv(&mut buf, &pts).unwrap();
        assert_eq!(read_learning_curve_csv(std::str::from_utf8(&buf).unwrap()).unwrap(), pts);
    }

    #[test]
    fn svgs_are_well_formed_documents() {
        let truth = [Label::Defective, Label::Functional];
        let (roc, auc) = roc_auc(&[1.0, 0.0], &truth).unwrap();
        let svg = roc_svg(&[("mono <1>".into(), roc, Some(auc))]);
        assert!(svg.starts_with("<svg") && svg.trim_end().ends_with("</svg>"));
        assert!(svg.contains("AUC 100.00%") && svg.contains("mono &lt;1&gt;"));
        let b = boxplot(&[0.5, 0.6, 0.7, 0.65, 0.1]).unwrap();
        let svg = boxplot_svg("F1", "macro F1", &[("25%".into(), b.clone())]);
        assert_eq!(svg.matches("<circle").count(), b.outliers.len());
        assert_eq!(svg.matches("<svg").count(), 1);
    }
}
