//! Minimal SVG figures: 1D histograms, joint heatmaps and log-log curves.

use std::fmt::Write;

use crate::qubit_errors::ExceedanceCurve;
use crate::stats::JointHistogram;

const W: f64 = 480.0;
const H: f64 = 360.0;
const ML: f64 = 64.0;
const MR: f64 = 16.0;
const MT: f64 = 32.0;
const MB: f64 = 48.0;
const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf"];

fn esc(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn open(title: &str, xlabel: &str, ylabel: &str) -> String {
    let mut s = String::new();
    let _ = write!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="12">"#
    );
    let _ = write!(s, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let _ = write!(s, r#"<text x="{}" y="20" text-anchor="middle" font-size="14">{}</text>"#, W / 2.0, esc(title));
    let _ = write!(s, r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#, ML + (W - ML - MR) / 2.0, H - 10.0, esc(xlabel));
    let _ = write!(
        s,
        r#"<text x="16" y="{y}" text-anchor="middle" transform="rotate(-90 16 {y})">{}</text>"#,
        esc(ylabel),
        y = MT + (H - MT - MB) / 2.0
    );
    let _ = write!(s, r#"<rect x="{ML}" y="{MT}" width="{}" height="{}" fill="none" stroke="black"/>"#, W - ML - MR, H - MT - MB);
    s
}

fn px(x: f64, lo: f64, hi: f64) -> f64 {
    ML + (x - lo) / (hi - lo) * (W - ML - MR)
}

fn py(y: f64, lo: f64, hi: f64) -> f64 {
    H - MB - (y - lo) / (hi - lo) * (H - MT - MB)
}

fn x_ticks(s: &mut String, ticks: &[(f64, String)], lo: f64, hi: f64) {
    for (v, label) in ticks {
        let x = px(*v, lo, hi);
        let _ = write!(s, r#"<line x1="{x}" y1="{}" x2="{x}" y2="{}" stroke="black"/>"#, H - MB, H - MB + 4.0);
        let _ = write!(s, r#"<text x="{x}" y="{}" text-anchor="middle">{label}</text>"#, H - MB + 16.0);
    }
}

fn y_ticks(s: &mut String, ticks: &[(f64, String)], lo: f64, hi: f64) {
    for (v, label) in ticks {
        let y = py(*v, lo, hi);
        let _ = write!(s, r#"<line x1="{}" y1="{y}" x2="{ML}" y2="{y}" stroke="black"/>"#, ML - 4.0);
        let _ = write!(s, r#"<text x="{}" y="{}" text-anchor="end">{label}</text>"#, ML - 6.0, y + 4.0);
    }
}

fn linear_ticks(lo: f64, hi: f64, n: usize) -> Vec<(f64, String)> {
    (0..=n).map(|i| lo + (hi - lo) * i as f64 / n as f64).map(|v| (v, format!("{v:.2}"))).collect()
}

/// Histogram of values over [lo, hi) with `bins` bins.
pub fn histogram(values: &[f64], lo: f64, hi: f64, bins: usize, title: &str, xlabel: &str) -> String {
    let bins = bins.max(1);
    let mut counts = vec![0u64; bins];
    for &v in values {
        if v >= lo && v < hi {
            counts[(((v - lo) / (hi - lo)) * bins as f64) as usize % bins] += 1;
        }
    }
    let top = counts.iter().copied().max().unwrap_or(0).max(1) as f64;
    let mut s = open(title, xlabel, "counts");
    let bw = (hi - lo) / bins as f64;
    for (i, &c) in counts.iter().enumerate() {
        if c == 0 {
            continue;
        }
        let x0 = px(lo + i as f64 * bw, lo, hi);
        let x1 = px(lo + (i + 1) as f64 * bw, lo, hi);
        let y = py(c as f64, 0.0, top);
        let _ = write!(s, r#"<rect x="{x0}" y="{y}" width="{}" height="{}" fill="{}"/>"#, x1 - x0, H - MB - y, PALETTE[0]);
    }
    x_ticks(&mut s, &linear_ticks(lo, hi, 4), lo, hi);
    y_ticks(&mut s, &linear_ticks(0.0, top, 4).into_iter().map(|(v, _)| (v, format!("{v:.0}"))).collect::<Vec<_>>(), 0.0, top);
    s.push_str("</svg>\n");
    s
}

/// Joint histogram as a heatmap with log-scaled shading.
pub fn joint_heatmap(h: &JointHistogram, title: &str) -> String {
    let mut s = open(title, &format!("Δq {} (e)", h.qubit_a), &format!("Δq {} (e)", h.qubit_b));
    let top = (h.counts.iter().copied().max().unwrap_or(0).max(1) as f64).ln_1p();
    let cell_w = (W - ML - MR) / h.bins as f64;
    let cell_h = (H - MT - MB) / h.bins as f64;
    for ia in 0..h.bins {
        for ib in 0..h.bins {
            let c = h.counts[ia * h.bins + ib];
            if c == 0 {
                continue;
            }
            let f = (c as f64).ln_1p() / top;
            let shade = (255.0 * (1.0 - f)).round() as u8;
            let x = ML + ia as f64 * cell_w;
            let y = H - MB - (ib + 1) as f64 * cell_h;
            let _ = write!(s, r#"<rect x="{x}" y="{y}" width="{cell_w}" height="{cell_h}" fill="rgb({shade},{shade},255)"/>"#);
        }
    }
    let ticks = linear_ticks(-0.5, 0.5, 4);
    x_ticks(&mut s, &ticks, -0.5, 0.5);
    y_ticks(&mut s, &ticks, -0.5, 0.5);
    s.push_str("</svg>\n");
    s
}

/// Exceedance fractions against level on log-log axes, one line per curve.
pub fn exceedance(curves: &[ExceedanceCurve], title: &str) -> String {
    let pts: Vec<(f64, f64)> = curves.iter().flat_map(|c| c.points.iter().map(|p| (p.level, p.fraction))).filter(|p| p.0 > 0.0).collect();
    let (xlo, xhi) = pts.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), p| (a.min(p.0.log10()), b.max(p.0.log10())));
    let (xlo, xhi) = if xlo < xhi { (xlo.floor(), xhi.ceil()) } else { (-12.0, 0.0) };
    let ymin = pts.iter().filter(|p| p.1 > 0.0).map(|p| p.1.log10()).fold(0.0f64, f64::min).floor().min(-1.0);
    let (ylo, yhi) = (ymin, 0.0);
    let mut s = open(title, "error level", "fraction of events above level");
    for (k, c) in curves.iter().enumerate() {
        let color = PALETTE[k % PALETTE.len()];
        let path: Vec<String> = c
            .points
            .iter()
            .filter(|p| p.level > 0.0 && p.fraction > 0.0)
            .map(|p| format!("{:.2},{:.2}", px(p.level.log10(), xlo, xhi), py(p.fraction.log10().max(ylo), ylo, yhi)))
            .collect();
        if path.len() > 1 {
            let _ = write!(s, r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="1.5"/>"#, path.join(" "));
        }
        let _ = write!(
            s,
            r#"<text x="{}" y="{}" fill="{color}">{}-{} ({:?})</text>"#,
            W - MR - 150.0,
            MT + 16.0 + 14.0 * k as f64,
            esc(&c.pair.0),
            esc(&c.pair.1),
            c.kind
        );
    }
    let dec = |lo: f64, hi: f64| (lo as i32..=hi as i32).map(|d| (d as f64, format!("1e{d}"))).collect::<Vec<_>>();
    x_ticks(&mut s, &dec(xlo, xhi), xlo, xhi);
    y_ticks(&mut s, &dec(ylo, yhi), ylo, yhi);
    s.push_str("</svg>\n");
    s
}

/// Scatter of (x, y) samples with an optional model curve.
pub fn scatter_with_curve(samples: &[(f64, f64)], curve: &[(f64, f64)], title: &str, xlabel: &str, ylabel: &str) -> String {
    let all = samples.iter().chain(curve);
    let (xlo, xhi, ylo, yhi) = all.fold((f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY), |a, p| {
        (a.0.min(p.0), a.1.max(p.0), a.2.min(p.1), a.3.max(p.1))
    });
    let (xlo, xhi) = if xlo < xhi { (xlo, xhi) } else { (0.0, 1.0) };
    let (ylo, yhi) = if ylo < yhi { (ylo, yhi) } else { (0.0, 1.0) };
    let mut s = open(title, xlabel, ylabel);
    for &(x, y) in samples {
        let _ = write!(s, r#"<circle cx="{:.2}" cy="{:.2}" r="2" fill="{}"/>"#, px(x, xlo, xhi), py(y, ylo, yhi), PALETTE[0]);
    }
    if curve.len() > 1 {
        let path: Vec<String> = curve.iter().map(|&(x, y)| format!("{:.2},{:.2}", px(x, xlo, xhi), py(y, ylo, yhi))).collect();
        let _ = write!(s, r#"<polyline points="{}" fill="none" stroke="{}" stroke-width="1.5"/>"#, path.join(" "), PALETTE[1]);
    }
    let fmt = |v: f64| if v.abs() >= 1e3 || (v != 0.0 && v.abs() < 1e-2) { format!("{v:.1e}") } else { format!("{v:.2}") };
    x_ticks(&mut s, &(0..=4).map(|i| xlo + (xhi - xlo) * i as f64 / 4.0).map(|v| (v, fmt(v))).collect::<Vec<_>>(), xlo, xhi);
    y_ticks(&mut s, &(0..=4).map(|i| ylo + (yhi - ylo) * i as f64 / 4.0).map(|v| (v, fmt(v))).collect::<Vec<_>>(), ylo, yhi);
    s.push_str("</svg>\n");
    s
}
