//! Static log-log rate plot.

use std::fmt::Write;

const W: f64 = 640.0;
const H: f64 = 440.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 20.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 50.0;

pub struct Series<'a> {
    pub label: &'a str,
    pub points: &'a [(f64, f64)],
    /// `(slope, intercept)` of the fitted line in log-log coordinates.
    pub fit: Option<(f64, f64)>,
}

const COLOURS: [&str; 4] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd"];

/// Median error against n on log-log axes with fitted lines.
pub fn loglog(title: &str, stamp: &str, series: &[Series<'_>]) -> String {
    let pts = series.iter().flat_map(|s| s.points.iter()).filter(|p| p.0 > 0.0 && p.1 > 0.0);
    let (mut x0, mut x1, mut y0, mut y1) = (f64::MAX, f64::MIN, f64::MAX, f64::MIN);
    for &(x, y) in pts {
        x0 = x0.min(x.ln());
        x1 = x1.max(x.ln());
        y0 = y0.min(y.ln());
        y1 = y1.max(y.ln());
    }
    if x0 > x1 {
        (x0, x1, y0, y1) = (0.0, 1.0, 0.0, 1.0);
    }
    let pad = |lo: f64, hi: f64| {
        let p = ((hi - lo) * 0.08).max(0.05);
        (lo - p, hi + p)
    };
    let (x0, x1) = pad(x0, x1);
    let (y0, y1) = pad(y0, y1);
    let sx = |lx: f64| LEFT + (lx - x0) / (x1 - x0) * (W - LEFT - RIGHT);
    let sy = |ly: f64| H - BOTTOM - (ly - y0) / (y1 - y0) * (H - TOP - BOTTOM);

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, "<!-- {stamp} -->");
    let _ = writeln!(s, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let _ = writeln!(s, r#"<text x="{}" y="22" text-anchor="middle" font-size="14">{}</text>"#, W / 2.0, escape(title));
    let _ = writeln!(
        s,
        r#"<rect x="{LEFT}" y="{TOP}" width="{}" height="{}" fill="none" stroke="black"/>"#,
        W - LEFT - RIGHT,
        H - TOP - BOTTOM
    );
    for (lx, label) in decade_ticks(x0, x1) {
        let x = sx(lx);
        let _ = writeln!(s, r#"<line x1="{x:.1}" y1="{}" x2="{x:.1}" y2="{}" stroke="black"/>"#, H - BOTTOM, H - BOTTOM + 5.0);
        let _ = writeln!(s, r#"<text x="{x:.1}" y="{}" text-anchor="middle">{label}</text>"#, H - BOTTOM + 18.0);
    }
    for (ly, label) in decade_ticks(y0, y1) {
        let y = sy(ly);
        let _ = writeln!(s, r#"<line x1="{}" y1="{y:.1}" x2="{LEFT}" y2="{y:.1}" stroke="black"/>"#, LEFT - 5.0);
        let _ = writeln!(s, r#"<text x="{}" y="{:.1}" text-anchor="end">{label}</text>"#, LEFT - 8.0, y + 4.0);
    }
    let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="middle">n</text>"#, (LEFT + W - RIGHT) / 2.0, H - 10.0);
    let _ = writeln!(
        s,
        r#"<text x="16" y="{0}" text-anchor="middle" transform="rotate(-90 16 {0})">median L1(q) error</text>"#,
        (TOP + H - BOTTOM) / 2.0
    );

    for (k, ser) in series.iter().enumerate() {
        let c = COLOURS[k % COLOURS.len()];
        for &(x, y) in ser.points.iter().filter(|p| p.0 > 0.0 && p.1 > 0.0) {
            let _ = writeln!(s, r#"<circle cx="{:.1}" cy="{:.1}" r="4" fill="{c}"/>"#, sx(x.ln()), sy(y.ln()));
        }
        let mut legend = ser.label.to_string();
        if let Some((b, a)) = ser.fit {
            let (la, lb) = (x0, x1);
            let _ = writeln!(
                s,
                r#"<line x1="{:.1}" y1="{:.1}" x2="{:.1}" y2="{:.1}" stroke="{c}" stroke-dasharray="6 4"/>"#,
                sx(la),
                sy(a + b * la),
                sx(lb),
                sy(a + b * lb)
            );
            let _ = write!(legend, " (slope {b:.3})");
        }
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}" fill="{c}">{}</text>"#,
            LEFT + 10.0,
            TOP + 18.0 + 16.0 * k as f64,
            escape(&legend)
        );
    }
    s.push_str("</svg>\n");
    s
}

fn decade_ticks(lo: f64, hi: f64) -> Vec<(f64, String)> {
    let (a, b) = (lo / std::f64::consts::LN_10, hi / std::f64::consts::LN_10);
    let mut out = Vec::new();
    // 1, 2 and 5 per decade
    for e in (a.floor() as i32)..=(b.ceil() as i32) {
        for m in [1.0, 2.0, 5.0] {
            let v: f64 = m * 10f64.powi(e);
            let lv = v.ln();
            if lv >= lo && lv <= hi {
                out.push((lv, trim(v).to_string()));
            }
        }
    }
    out
}

fn trim(v: f64) -> String {
    if v >= 1.0 {
        format!("{v:.0}")
    } else {
        let s = format!("{v:.6}");
        s.trim_end_matches('0').to_string()
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn plot_is_well_formed() {
        let pts = [(128.0, 0.3), (256.0, 0.24), (512.0, 0.19), (1024.0, 0.15)];
        let svg = loglog(
            "a < b",
            "stamp",
            &[Series {
                label: "mean",
                points: &pts,
                fit: Some((-0.33, 0.4)),
            }],
        );
        assert!(svg.starts_with("<svg") && svg.ends_with("</svg>\n"));
        assert_eq!(svg.matches("<circle").count(), 4);
        assert!(svg.contains("a &lt; b") && svg.contains("slope -0.330"));
        assert!(svg.contains(">500<") || svg.contains(">200<"));
    }
}
