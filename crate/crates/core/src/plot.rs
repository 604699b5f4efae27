//! Static SVG charts: reliability diagrams, sparsification curves and 2-D
//! scatter plots of a clustering. Output is plain text with fixed number
//! formatting, so identical input gives identical bytes.

use std::fmt::Write;

use crate::error::{Error, Result};
use crate::metrics::CalibrationReport;
use crate::pipeline::MetricCurve;
use crate::problem::ClusteringTask;

const WIDTH: f64 = 480.0;
const HEIGHT: f64 = 400.0;
const MARGIN: f64 = 50.0;
const PALETTE: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf",
];
const GREY: &str = "#b0b0b0";

/// Maps data coordinates onto the plot area.
struct Frame {
    x0: f64,
    x1: f64,
    y0: f64,
    y1: f64,
}

impl Frame {
    fn x(&self, v: f64) -> f64 {
        MARGIN + (v - self.x0) / (self.x1 - self.x0) * (WIDTH - 2.0 * MARGIN)
    }

    fn y(&self, v: f64) -> f64 {
        HEIGHT - MARGIN - (v - self.y0) / (self.y1 - self.y0) * (HEIGHT - 2.0 * MARGIN)
    }
}

fn header(out: &mut String, title: &str) {
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(
        out,
        r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#
    );
    let _ = writeln!(
        out,
        r#"<text x="{:.1}" y="24" text-anchor="middle" font-size="14">{}</text>"#,
        WIDTH / 2.0,
        escape(title)
    );
}

fn axes(out: &mut String, f: &Frame, x_label: &str, y_label: &str) {
    let (l, r, b, t) = (f.x(f.x0), f.x(f.x1), f.y(f.y0), f.y(f.y1));
    let _ = writeln!(
        out,
        r#"<path class="axes" d="M{l:.1},{t:.1} L{l:.1},{b:.1} L{r:.1},{b:.1}" fill="none" stroke="black"/>"#
    );
    for i in 0..=4 {
        let fx = f.x0 + (f.x1 - f.x0) * i as f64 / 4.0;
        let fy = f.y0 + (f.y1 - f.y0) * i as f64 / 4.0;
        let _ = writeln!(
            out,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{fx:.2}</text>"#,
            f.x(fx),
            b + 16.0
        );
        let _ = writeln!(
            out,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="end">{fy:.2}</text>"#,
            l - 6.0,
            f.y(fy) + 4.0
        );
    }
    let _ = writeln!(
        out,
        r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{}</text>"#,
        (l + r) / 2.0,
        HEIGHT - 10.0,
        escape(x_label)
    );
    let _ = writeln!(
        out,
        r#"<text x="14" y="{:.1}" text-anchor="middle" transform="rotate(-90 14 {:.1})">{}</text>"#,
        (t + b) / 2.0,
        (t + b) / 2.0,
        escape(y_label)
    );
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
}

fn polyline(f: &Frame, xs: &[f64], ys: &[f64], color: &str, dashed: bool, class: &str) -> String {
    let pts: Vec<String> = xs
        .iter()
        .zip(ys)
        .map(|(&x, &y)| format!("{:.1},{:.1}", f.x(x), f.y(y)))
        .collect();
    let dash = if dashed {
        r#" stroke-dasharray="6,4""#
    } else {
        ""
    };
    format!(
        r#"<polyline class="{class}" points="{}" fill="none" stroke="{color}" stroke-width="2"{dash}/>"#,
        pts.join(" ")
    )
}

/// Reliability diagram: the diagonal plus one marker per populated bin at
/// (mean predicted p, empirical correct fraction).
pub fn reliability_svg(report: &CalibrationReport, title: &str) -> String {
    let f = Frame {
        x0: 0.0,
        x1: 1.0,
        y0: 0.0,
        y1: 1.0,
    };
    let mut out = String::new();
    header(&mut out, title);
    axes(&mut out, &f, "predicted probability", "fraction correct");
    let _ = writeln!(
        out,
        r#"<line class="diagonal" x1="{:.1}" y1="{:.1}" x2="{:.1}" y2="{:.1}" stroke="{GREY}" stroke-dasharray="4,4"/>"#,
        f.x(0.0),
        f.y(0.0),
        f.x(1.0),
        f.y(1.0)
    );
    for b in &report.bins {
        if let (Some(p), Some(e)) = (b.mean_predicted_p, b.empirical_correct_fraction) {
            let _ = writeln!(
                out,
                r#"<circle class="marker" cx="{:.1}" cy="{:.1}" r="5" fill="{}"><title>n={}</title></circle>"#,
                f.x(p),
                f.y(e),
                PALETTE[0],
                b.n_solutions
            );
        }
    }
    let _ = writeln!(
        out,
        r#"<text x="{:.1}" y="{:.1}">ECE {:.4}</text>"#,
        MARGIN + 10.0,
        MARGIN + 10.0,
        report.ece
    );
    out.push_str("</svg>\n");
    out
}

/// One solid (predicted order) and one dashed (oracle order) polyline per
/// metric.
pub fn sparsification_svg(curves: &[MetricCurve], title: &str) -> Result<String> {
    if curves.is_empty() {
        return Err(Error::invalid("no sparsification curves to plot"));
    }
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    let mut x1: f64 = 0.0;
    for mc in curves {
        let c = &mc.curve;
        for v in c.metric_predicted.iter().chain(&c.metric_oracle) {
            lo = lo.min(*v);
            hi = hi.max(*v);
        }
        x1 = x1.max(c.fractions_removed.last().copied().unwrap_or(0.0));
    }
    if !(lo.is_finite() && hi.is_finite()) {
        return Err(Error::invalid(
            "sparsification curves contain no finite values",
        ));
    }
    let pad = ((hi - lo) * 0.05).max(0.01);
    let f = Frame {
        x0: 0.0,
        x1: if x1 > 0.0 { x1 } else { 1.0 },
        y0: lo - pad,
        y1: hi + pad,
    };
    let mut out = String::new();
    header(&mut out, title);
    axes(
        &mut out,
        &f,
        "fraction of tasks removed",
        "metric on remaining tasks",
    );
    for (i, mc) in curves.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let c = &mc.curve;
        let _ = writeln!(
            out,
            "{}",
            polyline(
                &f,
                &c.fractions_removed,
                &c.metric_predicted,
                color,
                false,
                "predicted"
            )
        );
        let _ = writeln!(
            out,
            "{}",
            polyline(
                &f,
                &c.fractions_removed,
                &c.metric_oracle,
                color,
                true,
                "oracle"
            )
        );
        let _ = writeln!(
            out,
            r#"<text x="{:.1}" y="{:.1}" fill="{color}">{}</text>"#,
            WIDTH - MARGIN - 110.0,
            MARGIN + 16.0 * (i as f64 + 1.0),
            escape(&mc.metric)
        );
    }
    out.push_str("</svg>\n");
    Ok(out)
}

/// Points in the first two dimensions, colored by label; `None` is drawn in
/// grey.
pub fn scatter_svg(t: &ClusteringTask, labels: &[Option<usize>], title: &str) -> Result<String> {
    if labels.len() != t.n_points() {
        return Err(Error::DimensionMismatch {
            expected: t.n_points(),
            actual: labels.len(),
        });
    }
    let coord = |p: &[f64], d: usize| p.get(d).copied().unwrap_or(0.0);
    let range = |d: usize| {
        let vals = t.points().iter().map(|p| coord(p, d));
        let lo = vals.clone().fold(f64::INFINITY, f64::min);
        let hi = vals.fold(f64::NEG_INFINITY, f64::max);
        let pad = ((hi - lo) * 0.05).max(0.5);
        (lo - pad, hi + pad)
    };
    let ((x0, x1), (y0, y1)) = (range(0), range(1));
    let f = Frame { x0, x1, y0, y1 };
    let mut out = String::new();
    header(&mut out, title);
    axes(&mut out, &f, "x1", "x2");
    for (p, l) in t.points().iter().zip(labels) {
        let (class, color) = match l {
            Some(c) => ("point", PALETTE[c % PALETTE.len()]),
            None => ("removed", GREY),
        };
        let _ = writeln!(
            out,
            r#"<circle class="{class}" cx="{:.1}" cy="{:.1}" r="5" fill="{color}"/>"#,
            f.x(coord(p, 0)),
            f.y(coord(p, 1))
        );
    }
    out.push_str("</svg>\n");
    Ok(out)
}
