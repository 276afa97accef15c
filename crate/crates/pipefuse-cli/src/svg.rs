//! Minimal histogram SVG emission for match reports. Display only.

use crate::formats::Histogram;

/// Render a histogram as a standalone SVG bar chart.
pub fn histogram_svg(h: &Histogram, title: &str) -> String {
    let (w, hgt, margin) = (640.0, 360.0, 40.0);
    let plot_w = w - 2.0 * margin;
    let plot_h = hgt - 2.0 * margin;
    let max = h.counts.iter().copied().max().unwrap_or(0).max(1) as f64;
    let nbins = h.counts.len() as f64;

    let mut s = String::new();
    s.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{hgt}\" \
         viewBox=\"0 0 {w} {hgt}\">\n"
    ));
    s.push_str(&format!(
        "  <text x=\"{}\" y=\"20\" text-anchor=\"middle\" font-family=\"sans-serif\" \
         font-size=\"14\">{title}</text>\n",
        w / 2.0
    ));
    for (i, &count) in h.counts.iter().enumerate() {
        let bar_h = count as f64 / max * plot_h;
        let x = margin + i as f64 / nbins * plot_w;
        let y = hgt - margin - bar_h;
        s.push_str(&format!(
            "  <rect x=\"{x:.2}\" y=\"{y:.2}\" width=\"{:.2}\" height=\"{bar_h:.2}\" \
             fill=\"#4878a8\"/>\n",
            plot_w / nbins - 1.0
        ));
    }
    // axis line and end labels
    s.push_str(&format!(
        "  <line x1=\"{margin}\" y1=\"{0}\" x2=\"{1}\" y2=\"{0}\" stroke=\"black\"/>\n",
        hgt - margin,
        w - margin
    ));
    let label = |x: f64, text: String| {
        format!(
            "  <text x=\"{x:.2}\" y=\"{}\" text-anchor=\"middle\" font-family=\"sans-serif\" \
             font-size=\"11\">{text}</text>\n",
            hgt - margin + 16.0
        )
    };
    s.push_str(&label(margin, format!("{:.1}", h.edges[0])));
    s.push_str(&label(
        w - margin,
        format!("{:.1}", h.edges.last().unwrap()),
    ));
    s.push_str(&label(w / 2.0, format!("n = {}", h.total())));
    s.push_str("</svg>\n");
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn emits_well_formed_svg() {
        let mut h = Histogram::diou();
        for v in [0.5, 0.6, 0.6, 0.95] {
            h.add(v);
        }
        let svg = histogram_svg(&h, "scores");
        assert!(svg.starts_with("<svg"));
        assert!(svg.ends_with("</svg>\n"));
        assert_eq!(svg.matches("<rect").count(), 40);
        assert!(svg.contains("n = 4"));
    }
}
