//! CSV tables and standalone SVG charts. Output depends only on the data,
//! so equal inputs give equal bytes.

use std::fmt::Write as _;
use std::io;
use std::path::Path;

/// Fixed-precision number formatting for table cells.
pub fn num(v: f64) -> String {
    format!("{v:.4}")
}

/// RFC 4180 table: header row, CRLF line ends, quoting only where needed.
pub fn csv_bytes(header: &[&str], rows: &[Vec<String>]) -> Result<Vec<u8>, csv::Error> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::CRLF)
        .quote_style(csv::QuoteStyle::Necessary)
        .from_writer(Vec::new());
    w.write_record(header)?;
    for r in rows {
        w.write_record(r)?;
    }
    w.into_inner().map_err(|e| csv::Error::from(e.into_error()))
}

pub fn write_csv(path: &Path, header: &[&str], rows: &[Vec<String>]) -> io::Result<()> {
    let bytes = csv_bytes(header, rows).map_err(io::Error::other)?;
    std::fs::write(path, bytes)
}

#[derive(Clone, Debug, PartialEq)]
pub struct Series {
    pub name: String,
    pub points: Vec<(f64, f64)>,
}

const W: f64 = 640.0;
const H: f64 = 400.0;
const LEFT: f64 = 60.0;
const RIGHT: f64 = 20.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 50.0;
const COLOURS: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"];

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

fn frame(out: &mut String, title: &str, x_label: &str, y_label: &str) {
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(out, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let _ = writeln!(out, r#"<text x="{}" y="22" text-anchor="middle" font-size="14">{}</text>"#, W / 2.0, escape(title));
    let (x0, y0, x1) = (LEFT, H - BOTTOM, W - RIGHT);
    let _ = writeln!(out, r#"<line x1="{x0}" y1="{y0}" x2="{x1}" y2="{y0}" stroke="black"/>"#);
    let _ = writeln!(out, r#"<line x1="{x0}" y1="{y0}" x2="{x0}" y2="{TOP}" stroke="black"/>"#);
    let _ = writeln!(out, r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#, (x0 + x1) / 2.0, H - 12.0, escape(x_label));
    let _ = writeln!(
        out,
        r#"<text x="16" y="{}" text-anchor="middle" transform="rotate(-90 16 {})">{}</text>"#,
        (TOP + y0) / 2.0,
        (TOP + y0) / 2.0,
        escape(y_label)
    );
}

fn bounds(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = values.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
    if !lo.is_finite() {
        (0.0, 1.0)
    } else if hi - lo < 1e-12 {
        (lo - 0.5, hi + 0.5)
    } else {
        (lo, hi)
    }
}

fn ticks(out: &mut String, (lo, hi): (f64, f64), vertical: bool) {
    for k in 0..=4 {
        let v = lo + (hi - lo) * k as f64 / 4.0;
        let label = format!("{v:.2}");
        if vertical {
            let y = H - BOTTOM - (H - BOTTOM - TOP) * k as f64 / 4.0;
            let _ = writeln!(out, r#"<text x="{}" y="{:.2}" text-anchor="end">{label}</text>"#, LEFT - 6.0, y + 4.0);
        } else {
            let x = LEFT + (W - LEFT - RIGHT) * k as f64 / 4.0;
            let _ = writeln!(out, r#"<text x="{x:.2}" y="{}" text-anchor="middle">{label}</text>"#, H - BOTTOM + 16.0);
        }
    }
}

/// One polyline per series with point markers and a legend.
pub fn line_chart(title: &str, x_label: &str, y_label: &str, series: &[Series]) -> String {
    let mut out = String::new();
    frame(&mut out, title, x_label, y_label);
    let xs = bounds(series.iter().flat_map(|s| s.points.iter().map(|p| p.0)));
    let ys = bounds(series.iter().flat_map(|s| s.points.iter().map(|p| p.1)));
    if series.iter().any(|s| !s.points.is_empty()) {
        ticks(&mut out, xs, false);
        ticks(&mut out, ys, true);
    }
    let px = |x: f64| LEFT + (x - xs.0) / (xs.1 - xs.0) * (W - LEFT - RIGHT);
    let py = |y: f64| H - BOTTOM - (y - ys.0) / (ys.1 - ys.0) * (H - BOTTOM - TOP);
    for (k, s) in series.iter().enumerate() {
        let c = COLOURS[k % COLOURS.len()];
        let pts: Vec<String> = s.points.iter().map(|&(x, y)| format!("{:.2},{:.2}", px(x), py(y))).collect();
        if !pts.is_empty() {
            let _ = writeln!(out, r#"<polyline fill="none" stroke="{c}" stroke-width="2" points="{}"/>"#, pts.join(" "));
        }
        for &(x, y) in &s.points {
            let _ = writeln!(out, r#"<circle cx="{:.2}" cy="{:.2}" r="3" fill="{c}"/>"#, px(x), py(y));
        }
        let ly = TOP + 14.0 * k as f64;
        let _ = writeln!(out, r#"<rect x="{}" y="{}" width="10" height="10" fill="{c}"/>"#, W - 150.0, ly - 9.0);
        let _ = writeln!(out, r#"<text x="{}" y="{ly}">{}</text>"#, W - 135.0, escape(&s.name));
    }
    out.push_str("</svg>\n");
    out
}

/// Vertical bars, one per labelled value.
pub fn bar_chart(title: &str, x_label: &str, y_label: &str, bars: &[(String, f64)]) -> String {
    let mut out = String::new();
    frame(&mut out, title, x_label, y_label);
    let ys = bounds(bars.iter().map(|b| b.1).chain([0.0]));
    if !bars.is_empty() {
        ticks(&mut out, ys, true);
    }
    let py = |y: f64| H - BOTTOM - (y - ys.0) / (ys.1 - ys.0) * (H - BOTTOM - TOP);
    let slot = (W - LEFT - RIGHT) / bars.len().max(1) as f64;
    for (k, (label, v)) in bars.iter().enumerate() {
        let x = LEFT + slot * k as f64 + slot * 0.15;
        let (top, base) = (py(v.max(0.0)), py(v.min(0.0)));
        let _ = writeln!(
            out,
            r#"<rect x="{x:.2}" y="{top:.2}" width="{:.2}" height="{:.2}" fill="{}"/>"#,
            slot * 0.7,
            base - top,
            COLOURS[0]
        );
        let _ = writeln!(
            out,
            r#"<text x="{:.2}" y="{}" text-anchor="middle">{}</text>"#,
            x + slot * 0.35,
            H - BOTTOM + 16.0,
            escape(label)
        );
    }
    out.push_str("</svg>\n");
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn five_points_give_six_lines() {
        let rows: Vec<Vec<String>> = (0..5).map(|k| vec![num(k as f64), num(1.5 * k as f64)]).collect();
        let b = String::from_utf8(csv_bytes(&["x", "y"], &rows).unwrap()).unwrap();
        assert_eq!(b.matches("\r\n").count(), 6);
        assert!(b.starts_with("x,y\r\n0.0000,0.0000\r\n"));
    }

    #[test]
    fn quoting_follows_rfc4180() {
        let b = csv_bytes(&["a"], &[vec!["x,\"y\"".into()]]).unwrap();
        assert_eq!(b, b"a\r\n\"x,\"\"y\"\"\"\r\n");
    }

    #[test]
    fn empty_inputs_still_render() {
        assert_eq!(csv_bytes(&["a", "b"], &[]).unwrap(), b"a,b\r\n");
        let s = line_chart("t", "x", "y", &[]);
        assert!(s.starts_with("<svg") && s.ends_with("</svg>\n"));
        assert!(!s.contains("polyline"));
        let s = bar_chart("t", "x", "y", &[]);
        assert!(s.ends_with("</svg>\n"));
    }

    #[test]
    fn charts_are_deterministic_and_escaped() {
        let s = vec![Series { name: "a<b".into(), points: vec![(0.0, 1.0), (1.0, 2.0)] }];
        let a = line_chart("t&t", "x", "y", &s);
        assert_eq!(a, line_chart("t&t", "x", "y", &s));
        assert!(a.contains("a&lt;b") && a.contains("t&amp;t"));
    }
}
