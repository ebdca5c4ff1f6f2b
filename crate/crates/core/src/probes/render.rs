//! CSV tables and standalone SVG bar charts for sweep and audit reports.

use std::fmt::Write;

use super::privacy::PrivacyAuditReport;
use super::sweep::{FlipOrientation, FlipSweepReport, Histogram, RangeSweepReport};

pub fn flip_csv(r: &FlipSweepReport) -> String {
    let mut out = String::from("seed,flip_point,orientation,transitions\n");
    for rec in &r.records {
        let point = rec.flip_point.map(|p| p.to_string()).unwrap_or_default();
        let orient = match rec.orientation {
            Some(FlipOrientation::LowToHigh) => "low_to_high",
            Some(FlipOrientation::HighToLow) => "high_to_low",
            None => "",
        };
        writeln!(out, "{},{point},{orient},{}", rec.seed, rec.transitions).unwrap();
    }
    out
}

pub fn range_csv(r: &RangeSweepReport) -> String {
    let mut out = String::from("seed,min,max,range\n");
    for rec in &r.records {
        writeln!(out, "{},{},{},{}", rec.seed, rec.min, rec.max, rec.range).unwrap();
    }
    out
}

pub fn histogram_csv(h: &Histogram) -> String {
    let mut out = String::from("bin_start,bin_end,count\n");
    for (i, c) in h.counts.iter().enumerate() {
        let (lo, hi) = h.edges(i);
        writeln!(out, "{},{},{c}", round(lo), round(hi)).unwrap();
    }
    out
}

pub fn audit_csv(r: &PrivacyAuditReport) -> String {
    let mut out = String::from("index,max_similarity,above_threshold\n");
    for (i, s) in r.max_similarities.iter().enumerate() {
        writeln!(out, "{i},{s},{}", (*s > r.threshold) as u8).unwrap();
    }
    out
}

/// Bin edges print without floating-point noise (`0.15`, not `0.15000000000000002`).
fn round(v: f64) -> f64 {
    (v * 1e9).round() / 1e9
}

/// Bar chart of `h` as a self-contained SVG document.
pub fn histogram_svg(h: &Histogram, title: &str, x_label: &str) -> String {
    const W: f64 = 640.0;
    const H: f64 = 360.0;
    const L: f64 = 56.0;
    const R: f64 = 16.0;
    const T: f64 = 36.0;
    const B: f64 = 56.0;
    let plot_w = W - L - R;
    let plot_h = H - T - B;
    let peak = h.counts.iter().copied().max().unwrap_or(0).max(1) as f64;
    let bw = plot_w / h.counts.len() as f64;

    let mut s = String::new();
    writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="11">"#
    )
    .unwrap();
    writeln!(s, r#"<rect width="{W}" height="{H}" fill="white"/>"#).unwrap();
    writeln!(s, r#"<text x="{}" y="22" text-anchor="middle" font-size="14">{}</text>"#, W / 2.0, escape(title)).unwrap();
    for (i, &c) in h.counts.iter().enumerate() {
        let bh = plot_h * c as f64 / peak;
        let x = L + i as f64 * bw;
        writeln!(
            s,
            r##"<rect x="{:.2}" y="{:.2}" width="{:.2}" height="{:.2}" fill="#4472c4" stroke="white"><title>{}</title></rect>"##,
            x,
            T + plot_h - bh,
            bw,
            bh,
            c
        )
        .unwrap();
    }
    let axis_y = T + plot_h;
    writeln!(s, r#"<line x1="{L}" y1="{axis_y}" x2="{}" y2="{axis_y}" stroke="black"/>"#, W - R).unwrap();
    writeln!(s, r#"<line x1="{L}" y1="{T}" x2="{L}" y2="{axis_y}" stroke="black"/>"#).unwrap();
    let label_every = h.counts.len().div_ceil(10).max(1);
    for i in (0..=h.counts.len()).step_by(label_every) {
        let x = L + i as f64 * bw;
        let v = round(h.start + i as f64 * h.width);
        writeln!(s, r#"<text x="{x:.2}" y="{}" text-anchor="middle">{v}</text>"#, axis_y + 16.0).unwrap();
    }
    writeln!(s, r#"<text x="{L}" y="{}" text-anchor="end" dx="-4">{}</text>"#, T + 4.0, peak as usize).unwrap();
    writeln!(s, r#"<text x="{L}" y="{axis_y}" text-anchor="end" dx="-4">0</text>"#).unwrap();
    writeln!(s, r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#, L + plot_w / 2.0, H - 14.0, escape(x_label)).unwrap();
    s.push_str("</svg>\n");
    s
}

fn escape(t: &str) -> String {
    t.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}
