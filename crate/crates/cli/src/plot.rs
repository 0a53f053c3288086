//! Minimal static SVG charts.

use std::fmt::Write as _;

const W: f64 = 640.0;
const H: f64 = 400.0;
const MARGIN: f64 = 60.0;

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn header(title: &str) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<text x="{}" y="24" text-anchor="middle" font-size="14">{}</text>"#,
        W / 2.0,
        escape(title)
    );
    s
}

fn span(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = values.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
    if !lo.is_finite() {
        return (0.0, 1.0);
    }
    if hi > lo {
        (lo, hi)
    } else {
        (lo - 0.5, hi + 0.5)
    }
}

/// Line chart with a marker on `highlight` (an index into `points`).
pub fn line_chart(title: &str, x_label: &str, y_label: &str, points: &[(f64, f64)], highlight: Option<usize>) -> String {
    let mut s = header(title);
    let (x0, x1) = span(points.iter().map(|p| p.0));
    let (y0, y1) = span(points.iter().map(|p| p.1));
    let px = |x: f64| MARGIN + (x - x0) / (x1 - x0) * (W - 2.0 * MARGIN);
    let py = |y: f64| H - MARGIN - (y - y0) / (y1 - y0) * (H - 2.0 * MARGIN);
    let _ = writeln!(
        s,
        r#"<line x1="{m}" y1="{b}" x2="{r}" y2="{b}" stroke="black"/><line x1="{m}" y1="{t}" x2="{m}" y2="{b}" stroke="black"/>"#,
        m = MARGIN,
        b = H - MARGIN,
        r = W - MARGIN,
        t = MARGIN
    );
    for k in 0..=4 {
        let fx = x0 + (x1 - x0) * f64::from(k) / 4.0;
        let fy = y0 + (y1 - y0) * f64::from(k) / 4.0;
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{:.2}</text>"#,
            px(fx),
            H - MARGIN + 18.0,
            fx
        );
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="end">{:.3}</text>"#,
            MARGIN - 6.0,
            py(fy) + 4.0,
            fy
        );
    }
    let path: Vec<String> = points.iter().map(|&(x, y)| format!("{:.2},{:.2}", px(x), py(y))).collect();
    let _ = writeln!(
        s,
        r#"<polyline fill="none" stroke="steelblue" stroke-width="2" points="{}"/>"#,
        path.join(" ")
    );
    if let Some(&(x, y)) = highlight.and_then(|i| points.get(i)) {
        let _ = writeln!(
            s,
            r#"<circle cx="{:.2}" cy="{:.2}" r="5" fill="firebrick"/><text x="{:.2}" y="{:.2}">{:.2}, {:.3}</text>"#,
            px(x),
            py(y),
            px(x) + 8.0,
            py(y) - 8.0,
            x,
            y
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#,
        W / 2.0,
        H - 16.0,
        escape(x_label)
    );
    let _ = writeln!(
        s,
        r#"<text x="16" y="{}" text-anchor="middle" transform="rotate(-90 16 {})">{}</text>"#,
        H / 2.0,
        H / 2.0,
        escape(y_label)
    );
    s.push_str("</svg>\n");
    s
}

/// Horizontal bars, one per (label, value), in the given order.
pub fn bar_chart(title: &str, bars: &[(String, f64)]) -> String {
    let mut s = header(title);
    let label_w = 150.0;
    let left = MARGIN + label_w;
    let (lo, hi) = span(bars.iter().map(|b| b.1).chain([0.0]));
    let px = |v: f64| left + (v - lo) / (hi - lo) * (W - left - MARGIN);
    let n = bars.len().max(1) as f64;
    let row_h = (H - 2.0 * MARGIN) / n;
    let zero = px(0.0);
    for (i, (label, v)) in bars.iter().enumerate() {
        let y = MARGIN + i as f64 * row_h;
        let (a, b) = if *v >= 0.0 { (zero, px(*v)) } else { (px(*v), zero) };
        let _ = writeln!(
            s,
            r#"<rect x="{:.2}" y="{:.2}" width="{:.2}" height="{:.2}" fill="{}"/>"#,
            a,
            y + row_h * 0.15,
            (b - a).max(0.5),
            row_h * 0.7,
            if *v >= 0.0 { "steelblue" } else { "indianred" }
        );
        let _ = writeln!(
            s,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="end">{}</text>"#,
            left - 6.0,
            y + row_h * 0.5 + 4.0,
            escape(label)
        );
        let _ = writeln!(
            s,
            r#"<text x="{:.2}" y="{:.2}">{:.4}</text>"#,
            b.max(a) + 4.0,
            y + row_h * 0.5 + 4.0,
            v
        );
    }
    let _ = writeln!(
        s,
        r#"<line x1="{zero:.2}" y1="{}" x2="{zero:.2}" y2="{}" stroke="black"/>"#,
        MARGIN,
        H - MARGIN
    );
    s.push_str("</svg>\n");
    s
}
