//! Minimal SVG emitters for attribution heatmaps, profiles and scatter plots.

use std::fmt::Write as _;

use ndarray::ArrayView2;

const MARGIN: f64 = 40.0;

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn header(w: f64, h: f64, title: &str) -> String {
    format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" viewBox=\"0 0 {w} {h}\">\n\
         <rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n\
         <text x=\"{MARGIN}\" y=\"20\" font-family=\"sans-serif\" font-size=\"13\">{}</text>\n",
        escape(title)
    )
}

/// Blue for positive, red for negative, white at zero; `v` in `[-1, 1]`.
fn diverging(v: f64) -> String {
    let v = v.clamp(-1.0, 1.0);
    let fade = |c: f64| (255.0 - (255.0 - c) * v.abs()).round() as u8;
    if v >= 0.0 {
        format!("#{:02x}{:02x}{:02x}", fade(33.0), fade(102.0), fade(172.0))
    } else {
        format!("#{:02x}{:02x}{:02x}", fade(178.0), fade(24.0), fade(43.0))
    }
}

/// Heatmap of a `T × D` matrix: time down the rows, species across.
pub fn heatmap(values: ArrayView2<'_, f64>, title: &str) -> String {
    let (t, d) = values.dim();
    let cell = (600.0 / d.max(1) as f64).clamp(2.0, 20.0);
    let (w, h) = (2.0 * MARGIN + cell * d as f64, 2.0 * MARGIN + cell * t as f64);
    let scale = values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let mut out = header(w, h, title);
    for ((i, j), v) in values.indexed_iter() {
        let c = if scale > 0.0 { diverging(v / scale) } else { diverging(0.0) };
        let _ = writeln!(
            out,
            "<rect x=\"{:.2}\" y=\"{:.2}\" width=\"{cell:.2}\" height=\"{cell:.2}\" fill=\"{c}\"/>",
            MARGIN + j as f64 * cell,
            MARGIN + i as f64 * cell
        );
    }
    let _ = writeln!(out, "<text x=\"{MARGIN}\" y=\"{:.0}\" font-family=\"sans-serif\" font-size=\"11\">species →, time ↓, max |value| {scale:.3e}</text>", h - 12.0);
    out.push_str("</svg>\n");
    out
}

fn extent(v: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = v.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), x| (a.min(x), b.max(x)));
    if !lo.is_finite() {
        (0.0, 1.0)
    } else if hi - lo < 1e-12 {
        (lo - 0.5, hi + 0.5)
    } else {
        (lo, hi)
    }
}

/// Line plot of `y` against `x`.
pub fn profile(x: &[f64], y: &[f64], title: &str) -> String {
    let (w, h) = (480.0, 320.0);
    let (x0, x1) = extent(x.iter().copied());
    let (y0, y1) = extent(y.iter().copied());
    let px = |v: f64| MARGIN + (v - x0) / (x1 - x0) * (w - 2.0 * MARGIN);
    let py = |v: f64| h - MARGIN - (v - y0) / (y1 - y0) * (h - 2.0 * MARGIN);
    let mut out = header(w, h, title);
    let points: Vec<String> = x.iter().zip(y).map(|(a, b)| format!("{:.2},{:.2}", px(*a), py(*b))).collect();
    let _ = writeln!(out, "<polyline fill=\"none\" stroke=\"#2166ac\" stroke-width=\"2\" points=\"{}\"/>", points.join(" "));
    let _ = writeln!(
        out,
        "<text x=\"{MARGIN}\" y=\"{:.0}\" font-family=\"sans-serif\" font-size=\"11\">x {x0:.3}..{x1:.3}, y {y0:.3}..{y1:.3}</text>",
        h - 12.0
    );
    out.push_str("</svg>\n");
    out
}

/// Scatter of 2-D points colored by binary label (1 = red).
pub fn scatter(points: ArrayView2<'_, f64>, labels: &[u8], title: &str) -> String {
    let (w, h) = (480.0, 480.0);
    let (x0, x1) = extent(points.column(0).iter().copied());
    let (y0, y1) = extent(points.column(1).iter().copied());
    let mut out = header(w, h, title);
    for (r, l) in points.rows().into_iter().zip(labels) {
        let color = if *l == 1 { "#b2182b" } else { "#2166ac" };
        let _ = writeln!(
            out,
            "<circle cx=\"{:.2}\" cy=\"{:.2}\" r=\"3\" fill=\"{color}\" fill-opacity=\"0.7\"/>",
            MARGIN + (r[0] - x0) / (x1 - x0) * (w - 2.0 * MARGIN),
            h - MARGIN - (r[1] - y0) / (y1 - y0) * (h - 2.0 * MARGIN)
        );
    }
    out.push_str("</svg>\n");
    out
}
