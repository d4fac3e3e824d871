//! Minimal self-contained SVG scatter and line plots.

use std::fmt::Write;

use mdecomp::DataMatrix;

const WIDTH: f64 = 800.0;
const HEIGHT: f64 = 600.0;
const MARGIN: f64 = 60.0;
pub const PALETTE: [&str; 6] = [
    "#1b9e77", "#d95f02", "#7570b3", "#e7298a", "#66a61e", "#e6ab02",
];

struct Frame {
    x: (f64, f64),
    y: (f64, f64),
}

impl Frame {
    fn new(xs: impl Iterator<Item = f64> + Clone, ys: impl Iterator<Item = f64> + Clone) -> Self {
        Frame {
            x: padded_range(xs),
            y: padded_range(ys),
        }
    }

    fn px(&self, x: f64) -> f64 {
        MARGIN + (x - self.x.0) / (self.x.1 - self.x.0) * (WIDTH - 2.0 * MARGIN)
    }

    fn py(&self, y: f64) -> f64 {
        HEIGHT - MARGIN - (y - self.y.0) / (self.y.1 - self.y.0) * (HEIGHT - 2.0 * MARGIN)
    }
}

fn padded_range(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = values.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| {
        (lo.min(v), hi.max(v))
    });
    if !lo.is_finite() {
        return (0.0, 1.0);
    }
    let pad = if hi > lo { 0.05 * (hi - lo) } else { 0.5 };
    (lo - pad, hi + pad)
}

fn header(out: &mut String, title: &str) {
    let _ = writeln!(
        out,
        r#"<?xml version="1.0" encoding="UTF-8"?>
<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">
<rect width="100%" height="100%" fill="white"/>
<text x="{}" y="30" font-family="sans-serif" font-size="16" text-anchor="middle">{}</text>"#,
        WIDTH / 2.0,
        escape(title)
    );
}

fn axes(out: &mut String, frame: &Frame, x_label: &str, y_label: &str) {
    let (l, r) = (MARGIN, WIDTH - MARGIN);
    let (t, b) = (MARGIN, HEIGHT - MARGIN);
    let _ = writeln!(
        out,
        r#"<rect x="{l}" y="{t}" width="{}" height="{}" fill="none" stroke="black"/>"#,
        r - l,
        b - t
    );
    for (v, anchor, x) in [(frame.x.0, "start", l), (frame.x.1, "end", r)] {
        let _ = writeln!(
            out,
            r#"<text x="{x}" y="{}" font-family="sans-serif" font-size="11" text-anchor="{anchor}">{v:.3}</text>"#,
            b + 16.0
        );
    }
    for (v, y) in [(frame.y.0, b), (frame.y.1, t + 10.0)] {
        let _ = writeln!(
            out,
            r#"<text x="{}" y="{y}" font-family="sans-serif" font-size="11" text-anchor="end">{v:.3}</text>"#,
            l - 4.0
        );
    }
    let _ = writeln!(
        out,
        r#"<text x="{}" y="{}" font-family="sans-serif" font-size="13" text-anchor="middle">{}</text>"#,
        WIDTH / 2.0,
        HEIGHT - 20.0,
        escape(x_label)
    );
    let _ = writeln!(
        out,
        r#"<text x="18" y="{}" font-family="sans-serif" font-size="13" text-anchor="middle" transform="rotate(-90 18 {})">{}</text>"#,
        HEIGHT / 2.0,
        HEIGHT / 2.0,
        escape(y_label)
    );
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

/// The two columns to plot: both for `d = 2`, the two of largest variance
/// (lower index first) for `d > 2`, and the single column against the row
/// index for `d = 1`.
pub fn projection(data: &DataMatrix) -> (Option<usize>, usize) {
    match data.d() {
        1 => (None, 0),
        2 => (Some(0), 1),
        d => {
            let var = |j: usize| {
                let c = data.column(j);
                let m = c.iter().sum::<f64>() / c.len().max(1) as f64;
                c.iter().map(|v| (v - m).powi(2)).sum::<f64>()
            };
            let mut cols: Vec<usize> = (0..d).collect();
            cols.sort_by(|&a, &b| var(b).total_cmp(&var(a)).then(a.cmp(&b)));
            let (a, b) = (cols[0].min(cols[1]), cols[0].max(cols[1]));
            (Some(a), b)
        }
    }
}

/// Points colored by label, projected by [`projection`].
pub fn scatter(data: &DataMatrix, labels: &[usize], title: &str) -> String {
    let (xc, yc) = projection(data);
    let point = |i: usize| -> (f64, f64) {
        let row = data.row(i);
        (xc.map_or(i as f64, |c| row[c]), row[yc])
    };
    let pts: Vec<(f64, f64)> = (0..data.n()).map(point).collect();
    let frame = Frame::new(pts.iter().map(|p| p.0), pts.iter().map(|p| p.1));
    let mut out = String::new();
    header(&mut out, title);
    let x_label = xc.map_or("row index".to_string(), |c| format!("column {c}"));
    axes(&mut out, &frame, &x_label, &format!("column {yc}"));
    for (&(x, y), &l) in pts.iter().zip(labels) {
        let _ = writeln!(
            out,
            r#"<circle cx="{:.2}" cy="{:.2}" r="3" fill="{}" fill-opacity="0.8"/>"#,
            frame.px(x),
            frame.py(y),
            PALETTE[l % PALETTE.len()]
        );
    }
    let k = labels.iter().max().map_or(0, |m| m + 1);
    for l in 0..k {
        let y = MARGIN + 14.0 + 16.0 * l as f64;
        let _ = writeln!(
            out,
            r#"<circle cx="{}" cy="{y}" r="5" fill="{}"/><text x="{}" y="{}" font-family="sans-serif" font-size="12">cluster {l}</text>"#,
            WIDTH - MARGIN - 80.0,
            PALETTE[l % PALETTE.len()],
            WIDTH - MARGIN - 70.0,
            y + 4.0
        );
    }
    out.push_str("</svg>\n");
    out
}

/// One polyline per named series over a shared x grid.
pub fn curves(x: &[f64], series: &[(&str, &[f64])], title: &str) -> String {
    let frame = Frame::new(
        x.iter().copied(),
        series
            .iter()
            .flat_map(|(_, ys)| ys.iter().copied())
            .chain(std::iter::once(0.0)),
    );
    let mut out = String::new();
    header(&mut out, title);
    axes(&mut out, &frame, "x", "density");
    for (s, (name, ys)) in series.iter().enumerate() {
        let color = PALETTE[s % PALETTE.len()];
        let mut points = String::new();
        for (&xi, &yi) in x.iter().zip(ys.iter()) {
            let _ = write!(points, "{:.2},{:.2} ", frame.px(xi), frame.py(yi));
        }
        let _ = writeln!(
            out,
            r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="1.5"/>"#,
            points.trim_end()
        );
        let y = MARGIN + 14.0 + 16.0 * s as f64;
        let _ = writeln!(
            out,
            r#"<line x1="{}" y1="{y}" x2="{}" y2="{y}" stroke="{color}" stroke-width="2"/><text x="{}" y="{}" font-family="sans-serif" font-size="12">{}</text>"#,
            WIDTH - MARGIN - 150.0,
            WIDTH - MARGIN - 130.0,
            WIDTH - MARGIN - 125.0,
            y + 4.0,
            escape(name)
        );
    }
    out.push_str("</svg>\n");
    out
}
