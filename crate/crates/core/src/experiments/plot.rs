//! Minimal self-contained SVG line plots (no external assets).

use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};

pub struct Series<'a> {
    pub label: &'a str,
    /// (x, y) points; non-finite points are dropped.
    pub points: Vec<(f64, f64)>,
}

const W: f64 = 640.0;
const H: f64 = 480.0;
const MARGIN: f64 = 60.0;
const COLORS: [&str; 5] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e"];

/// Write a line plot. Log-scaled axes drop nonpositive coordinates.
pub fn line_plot_svg(
    path: &Path,
    title: &str,
    xlabel: &str,
    ylabel: &str,
    series: &[Series],
    logx: bool,
    logy: bool,
) -> Result<()> {
    let tx = |v: f64| if logx { v.ln() } else { v };
    let ty = |v: f64| if logy { v.ln() } else { v };
    let mut pts_all = Vec::new();
    for s in series {
        for &(x, y) in &s.points {
            if !x.is_finite() || !y.is_finite() {
                continue;
            }
            if (logx && x <= 0.0) || (logy && y <= 0.0) {
                continue;
            }
            pts_all.push((tx(x), ty(y)));
        }
    }
    if pts_all.is_empty() {
        return Err(Error::validation("nothing to plot"));
    }
    let (mut x0, mut x1) = (f64::INFINITY, f64::NEG_INFINITY);
    let (mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY);
    for &(x, y) in &pts_all {
        x0 = x0.min(x);
        x1 = x1.max(x);
        y0 = y0.min(y);
        y1 = y1.max(y);
    }
    if x1 == x0 {
        x1 = x0 + 1.0;
    }
    if y1 == y0 {
        y1 = y0 + 1.0;
    }
    let sx = |v: f64| MARGIN + (tx(v) - x0) / (x1 - x0) * (W - 2.0 * MARGIN);
    let sy = |v: f64| H - MARGIN - (ty(v) - y0) / (y1 - y0) * (H - 2.0 * MARGIN);

    let mut svg = String::new();
    svg.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{W}\" height=\"{H}\" viewBox=\"0 0 {W} {H}\">\n"
    ));
    svg.push_str("<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n");
    svg.push_str(&format!(
        "<text x=\"{}\" y=\"24\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"16\">{}</text>\n",
        W / 2.0,
        xml_escape(title)
    ));
    // Axes.
    svg.push_str(&format!(
        "<line x1=\"{m}\" y1=\"{b}\" x2=\"{r}\" y2=\"{b}\" stroke=\"black\"/>\n<line x1=\"{m}\" y1=\"{t}\" x2=\"{m}\" y2=\"{b}\" stroke=\"black\"/>\n",
        m = MARGIN,
        b = H - MARGIN,
        r = W - MARGIN,
        t = MARGIN
    ));
    let fmt = |v: f64| {
        if v == 0.0 || (v.abs() >= 0.01 && v.abs() < 10_000.0) {
            format!("{v:.3}")
        } else {
            format!("{v:.2e}")
        }
    };
    let (inv_x0, inv_x1) = if logx { (x0.exp(), x1.exp()) } else { (x0, x1) };
    let (inv_y0, inv_y1) = if logy { (y0.exp(), y1.exp()) } else { (y0, y1) };
    svg.push_str(&format!(
        "<text x=\"{}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"11\">{}</text>\n",
        MARGIN,
        H - MARGIN + 16.0,
        fmt(inv_x0)
    ));
    svg.push_str(&format!(
        "<text x=\"{}\" y=\"{}\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"11\">{}</text>\n",
        W - MARGIN,
        H - MARGIN + 16.0,
        fmt(inv_x1)
    ));
    svg.push_str(&format!(
        "<text x=\"{}\" y=\"{}\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"11\">{}</text>\n",
        MARGIN - 6.0,
        H - MARGIN,
        fmt(inv_y0)
    ));
    svg.push_str(&format!(
        "<text x=\"{}\" y=\"{}\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"11\">{}</text>\n",
        MARGIN - 6.0,
        MARGIN + 4.0,
        fmt(inv_y1)
    ));
    svg.push_str(&format!(
        "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"13\">{}</text>\n",
        W / 2.0,
        H - 12.0,
        xml_escape(&if logx { format!("{xlabel} (log)") } else { xlabel.to_string() })
    ));
    svg.push_str(&format!(
        "<text x=\"16\" y=\"{}\" transform=\"rotate(-90 16 {})\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"13\">{}</text>\n",
        H / 2.0,
        H / 2.0,
        xml_escape(&if logy { format!("{ylabel} (log)") } else { ylabel.to_string() })
    ));

    for (si, s) in series.iter().enumerate() {
        let color = COLORS[si % COLORS.len()];
        let pts: Vec<String> = s
            .points
            .iter()
            .filter(|(x, y)| {
                x.is_finite() && y.is_finite() && !(logx && *x <= 0.0) && !(logy && *y <= 0.0)
            })
            .map(|&(x, y)| format!("{:.2},{:.2}", sx(x), sy(y)))
            .collect();
        if pts.is_empty() {
            continue;
        }
        svg.push_str(&format!(
            "<polyline fill=\"none\" stroke=\"{color}\" stroke-width=\"1.5\" points=\"{}\"/>\n",
            pts.join(" ")
        ));
        svg.push_str(&format!(
            "<text x=\"{}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"12\" fill=\"{color}\">{}</text>\n",
            W - MARGIN - 150.0,
            MARGIN + 16.0 * (si + 1) as f64,
            xml_escape(s.label)
        ));
    }
    svg.push_str("</svg>\n");

    let mut f = std::fs::File::create(path)
        .map_err(|e| Error::ingestion(path.display().to_string(), e.to_string()))?;
    f.write_all(svg.as_bytes())
        .map_err(|e| Error::ingestion(path.display().to_string(), e.to_string()))?;
    Ok(())
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}
