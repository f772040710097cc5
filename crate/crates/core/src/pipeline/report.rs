//! Minimal SVG plots for the analysis report.

use std::fmt::Write;

use crate::stats::Dendrogram;

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 480.0;
const MARGIN: f64 = 60.0;
const PALETTE: [&str; 8] =
    ["#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f"];

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

fn header(title: &str) -> String {
    format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{WIDTH}\" height=\"{HEIGHT}\" \
         viewBox=\"0 0 {WIDTH} {HEIGHT}\" font-family=\"sans-serif\" font-size=\"11\">\n\
         <rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n\
         <text x=\"{}\" y=\"24\" text-anchor=\"middle\" font-size=\"14\">{}</text>\n",
        WIDTH / 2.0,
        escape(title)
    )
}

fn scale(lo: f64, hi: f64, out_lo: f64, out_hi: f64) -> impl Fn(f64) -> f64 {
    let span = if hi > lo { hi - lo } else { 1.0 };
    move |v| out_lo + (v - lo) / span * (out_hi - out_lo)
}

/// Scatter of the first two components, coloured by cluster.
pub fn pca_svg(models: &[String], xy: &[(f64, f64)], clusters: &[usize], ratio: &[f64]) -> String {
    let mut s = header("Sparse PCA projection");
    let (xmin, xmax) = xy.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |a, p| (a.0.min(p.0), a.1.max(p.0)));
    let (ymin, ymax) = xy.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |a, p| (a.0.min(p.1), a.1.max(p.1)));
    let pad = |lo: f64, hi: f64| {
        let d = ((hi - lo) * 0.1).max(1e-9);
        (lo - d, hi + d)
    };
    let (xmin, xmax) = pad(xmin, xmax);
    let (ymin, ymax) = pad(ymin, ymax);
    let sx = scale(xmin, xmax, MARGIN, WIDTH - MARGIN);
    let sy = scale(ymin, ymax, HEIGHT - MARGIN, MARGIN);
    let _ = writeln!(
        s,
        "<rect x=\"{MARGIN}\" y=\"{MARGIN}\" width=\"{}\" height=\"{}\" fill=\"none\" stroke=\"#999\"/>",
        WIDTH - 2.0 * MARGIN,
        HEIGHT - 2.0 * MARGIN
    );
    let pct = |i: usize| ratio.get(i).map_or(0.0, |r| r * 100.0);
    let _ = writeln!(
        s,
        "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\">PC1 ({:.1}%)</text>",
        WIDTH / 2.0,
        HEIGHT - 20.0,
        pct(0)
    );
    let _ = writeln!(
        s,
        "<text x=\"18\" y=\"{}\" text-anchor=\"middle\" transform=\"rotate(-90 18 {})\">PC2 ({:.1}%)</text>",
        HEIGHT / 2.0,
        HEIGHT / 2.0,
        pct(1)
    );
    for ((name, &(x, y)), &c) in models.iter().zip(xy).zip(clusters) {
        let (px, py) = (sx(x), sy(y));
        let _ = writeln!(
            s,
            "<circle cx=\"{px:.2}\" cy=\"{py:.2}\" r=\"5\" fill=\"{}\"/>\
             <text x=\"{:.2}\" y=\"{:.2}\">{}</text>",
            PALETTE[c % PALETTE.len()],
            px + 7.0,
            py + 4.0,
            escape(name)
        );
    }
    s.push_str("</svg>\n");
    s
}

/// Dendrogram with leaves along the bottom and merge height upwards.
pub fn dendrogram_svg(d: &Dendrogram, models: &[String]) -> String {
    let mut s = header("Complete-linkage dendrogram");
    let order = d.leaf_order();
    let n = d.n_leaves;
    let top = d.steps.iter().map(|st| st.height).fold(0.0, f64::max);
    let step_x = (WIDTH - 2.0 * MARGIN) / n.max(2).saturating_sub(1) as f64;
    let base = HEIGHT - MARGIN - 40.0;
    let sy = scale(0.0, top, base, MARGIN);
    // (x, height) of every node id
    let mut pos = vec![(0.0, 0.0); n + d.steps.len()];
    for (slot, &leaf) in order.iter().enumerate() {
        pos[leaf] = (MARGIN + slot as f64 * step_x, 0.0);
        let _ = writeln!(
            s,
            "<text x=\"{0:.2}\" y=\"{1:.2}\" text-anchor=\"end\" transform=\"rotate(-60 {0:.2} {1:.2})\">{2}</text>",
            pos[leaf].0,
            base + 12.0,
            escape(&models[leaf])
        );
    }
    for (k, st) in d.steps.iter().enumerate() {
        let (xa, ha) = pos[st.a];
        let (xb, hb) = pos[st.b];
        let y = sy(st.height);
        let _ = writeln!(
            s,
            "<path d=\"M{xa:.2},{:.2}V{y:.2}H{xb:.2}V{:.2}\" fill=\"none\" stroke=\"#333\"/>",
            sy(ha),
            sy(hb)
        );
        pos[n + k] = ((xa + xb) / 2.0, st.height);
    }
    let _ = writeln!(
        s,
        "<line x1=\"{0}\" y1=\"{1:.2}\" x2=\"{0}\" y2=\"{2:.2}\" stroke=\"#999\"/>\
         <text x=\"{3}\" y=\"{2:.2}\" text-anchor=\"end\">{4:.3}</text>",
        MARGIN - 10.0,
        base,
        MARGIN,
        MARGIN - 14.0,
        top
    );
    s.push_str("</svg>\n");
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats::complete_linkage;
    use nalgebra::DMatrix;

    #[test]
    fn svgs_are_well_formed_enough() {
        let d = complete_linkage(&DMatrix::from_row_slice(3, 3, &[0.0, 1.0, 2.0, 1.0, 0.0, 3.0, 2.0, 3.0, 0.0]))
            .unwrap();
        let names: Vec<String> = ["a<1>", "b", "c"].iter().map(|s| s.to_string()).collect();
        let svg = dendrogram_svg(&d, &names);
        assert!(svg.starts_with("<svg") && svg.ends_with("</svg>\n"));
        assert_eq!(svg.matches("<path").count(), 2);
        assert!(svg.contains("a&lt;1&gt;"));
        let svg = pca_svg(&names, &[(0.0, 1.0), (1.0, 0.0), (0.5, 0.5)], &[0, 1, 0], &[0.6, 0.3]);
        assert_eq!(svg.matches("<circle").count(), 3);
        assert!(svg.contains("PC1 (60.0%)"));
    }
}
