//! Minimal SVG charts: ROC curves and per-fold lift bars.

use std::fmt::Write as _;

const W: f64 = 480.0;
const H: f64 = 480.0;
const PAD: f64 = 50.0;

/// ROC points from (0,0) to (1,1); higher score means predicted positive.
pub fn roc_points(scores: &[f64], labels: &[u8]) -> Vec<(f64, f64)> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let pos = labels.iter().filter(|&&y| y == 1).count().max(1) as f64;
    let neg = labels.iter().filter(|&&y| y != 1).count().max(1) as f64;
    let mut pts = vec![(0.0, 0.0)];
    let (mut tp, mut fp) = (0.0, 0.0);
    let mut i = 0;
    while i < order.len() {
        let s = scores[order[i]];
        while i < order.len() && scores[order[i]] == s {
            if labels[order[i]] == 1 {
                tp += 1.0;
            } else {
                fp += 1.0;
            }
            i += 1;
        }
        pts.push((fp / neg, tp / pos));
    }
    // Thin to keep files small.
    let step = (pts.len() / 400).max(1);
    let last = *pts.last().expect("non-empty");
    let mut out: Vec<(f64, f64)> = pts.into_iter().step_by(step).collect();
    if out.last() != Some(&last) {
        out.push(last);
    }
    out
}

fn header(title: &str) -> String {
    let mut s = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{W}\" height=\"{H}\" viewBox=\"0 0 {W} {H}\">\n\
         <rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n\
         <text x=\"{}\" y=\"24\" font-family=\"sans-serif\" font-size=\"15\" text-anchor=\"middle\">{}</text>\n",
        W / 2.0,
        escape(title)
    );
    let _ = writeln!(
        s,
        "<rect x=\"{PAD}\" y=\"{PAD}\" width=\"{}\" height=\"{}\" fill=\"none\" stroke=\"black\"/>",
        W - 2.0 * PAD,
        H - 2.0 * PAD
    );
    s
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn sx(x: f64) -> f64 {
    PAD + x * (W - 2.0 * PAD)
}

fn sy(y: f64) -> f64 {
    H - PAD - y * (H - 2.0 * PAD)
}

/// ROC curves, one polyline per `(name, points)`.
pub fn roc_svg(title: &str, curves: &[(String, Vec<(f64, f64)>)]) -> String {
    const COLORS: [&str; 4] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd"];
    let mut s = header(title);
    let _ = writeln!(
        s,
        "<line x1=\"{}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"#aaa\" stroke-dasharray=\"4 4\"/>",
        sx(0.0),
        sy(0.0),
        sx(1.0),
        sy(1.0)
    );
    for (i, (name, pts)) in curves.iter().enumerate() {
        let color = COLORS[i % COLORS.len()];
        let path: Vec<String> = pts.iter().map(|&(x, y)| format!("{:.2},{:.2}", sx(x), sy(y))).collect();
        let _ = writeln!(s, "<polyline fill=\"none\" stroke=\"{color}\" stroke-width=\"2\" points=\"{}\"/>", path.join(" "));
        let ly = sy(0.1) - 18.0 * i as f64;
        let _ = writeln!(
            s,
            "<text x=\"{}\" y=\"{ly:.1}\" font-family=\"sans-serif\" font-size=\"13\" fill=\"{color}\">{}</text>",
            sx(0.55),
            escape(name)
        );
    }
    let _ = writeln!(s, "<text x=\"{}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"12\" text-anchor=\"middle\">false positive rate</text>", W / 2.0, H - 15.0);
    let _ = writeln!(s, "<text x=\"15\" y=\"{}\" font-family=\"sans-serif\" font-size=\"12\" transform=\"rotate(-90 15 {})\" text-anchor=\"middle\">true positive rate</text>", H / 2.0, H / 2.0);
    s.push_str("</svg>\n");
    s
}

/// Grouped bars of (label, good-approval delta, bad-rejection delta).
pub fn lift_svg(title: &str, bars: &[(String, f64, f64)]) -> String {
    let mut s = header(title);
    let max = bars.iter().flat_map(|b| [b.1.abs(), b.2.abs()]).fold(1e-9, f64::max);
    let zero = 0.5;
    let _ = writeln!(s, "<line x1=\"{}\" y1=\"{:.2}\" x2=\"{}\" y2=\"{:.2}\" stroke=\"black\"/>", sx(0.0), sy(zero), sx(1.0), sy(zero));
    let slot = 1.0 / bars.len().max(1) as f64;
    for (i, (label, good, bad)) in bars.iter().enumerate() {
        for (j, (v, color)) in [(*good, "#2ca02c"), (*bad, "#d62728")].into_iter().enumerate() {
            let x0 = i as f64 * slot + slot * (0.15 + 0.35 * j as f64);
            let h = 0.45 * v / max;
            let (top, bottom) = if h >= 0.0 { (zero + h, zero) } else { (zero, zero + h) };
            let _ = writeln!(
                s,
                "<rect x=\"{:.2}\" y=\"{:.2}\" width=\"{:.2}\" height=\"{:.2}\" fill=\"{color}\"><title>{v:.3}</title></rect>",
                sx(x0),
                sy(top),
                sx(x0 + 0.3 * slot) - sx(x0),
                sy(bottom) - sy(top)
            );
        }
        let _ = writeln!(
            s,
            "<text x=\"{:.2}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"11\" text-anchor=\"middle\">{}</text>",
            sx((i as f64 + 0.5) * slot),
            H - PAD + 16.0,
            escape(label)
        );
    }
    let _ = writeln!(s, "<text x=\"{}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"12\" fill=\"#2ca02c\">good approvals / 100</text>", sx(0.02), sy(0.95));
    let _ = writeln!(s, "<text x=\"{}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"12\" fill=\"#d62728\">bad rejections / 100</text>", sx(0.02), sy(0.95) + 16.0);
    s.push_str("</svg>\n");
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn roc_runs_corner_to_corner() {
        let pts = roc_points(&[0.9, 0.8, 0.3, 0.1], &[1, 0, 1, 0]);
        assert_eq!(pts.first(), Some(&(0.0, 0.0)));
        assert_eq!(pts.last(), Some(&(1.0, 1.0)));
        assert_eq!(pts[1], (0.0, 0.5));
    }

    #[test]
    fn svgs_are_well_formed_enough() {
        let r = roc_svg("a < b", &[("x".into(), vec![(0.0, 0.0), (1.0, 1.0)])]);
        assert!(r.starts_with("<svg") && r.trim_end().ends_with("</svg>") && r.contains("a &lt; b"));
        let l = lift_svg("lift", &[("fold 0".into(), 2.0, -1.0)]);
        assert_eq!(l.matches("<rect").count(), 4);
    }
}
