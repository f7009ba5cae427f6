//! Minimal static SVG charts for the exported CSV data. No interactivity, no
//! dependencies; enough to eyeball calibration curves, probability timelines
//! and importance rankings.

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 480.0;
const MARGIN: f64 = 56.0;

const PALETTE: [&str; 6] = [
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf",
];

pub struct LineSeries<'a> {
    pub name: &'a str,
    pub points: &'a [(f64, f64)],
}

fn bounds(series: &[LineSeries<'_>]) -> (f64, f64, f64, f64) {
    let mut x = (f64::INFINITY, f64::NEG_INFINITY);
    let mut y = (f64::INFINITY, f64::NEG_INFINITY);
    for s in series {
        for (px, py) in s.points {
            x = (x.0.min(*px), x.1.max(*px));
            y = (y.0.min(*py), y.1.max(*py));
        }
    }
    if !x.0.is_finite() || x.0 == x.1 {
        x = (x.0.min(0.0), x.0.max(1.0));
    }
    if !y.0.is_finite() || y.0 == y.1 {
        y = (y.0.min(0.0), y.0.max(1.0));
    }
    (x.0, x.1, y.0, y.1)
}

/// Multi-series line chart; `diagonal` adds the y=x reference line used by
/// reliability diagrams.
pub fn line_chart(title: &str, series: &[LineSeries<'_>], diagonal: bool) -> String {
    let (x0, x1, y0, y1) = bounds(series);
    let sx = |x: f64| MARGIN + (x - x0) / (x1 - x0) * (WIDTH - 2.0 * MARGIN);
    let sy = |y: f64| HEIGHT - MARGIN - (y - y0) / (y1 - y0) * (HEIGHT - 2.0 * MARGIN);
    let mut svg = String::new();
    svg.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{WIDTH}\" height=\"{HEIGHT}\" viewBox=\"0 0 {WIDTH} {HEIGHT}\">\n"
    ));
    svg.push_str("<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n");
    svg.push_str(&format!(
        "<text x=\"{}\" y=\"24\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"16\">{}</text>\n",
        WIDTH / 2.0,
        escape(title)
    ));
    // axes
    svg.push_str(&format!(
        "<line x1=\"{m}\" y1=\"{b}\" x2=\"{r}\" y2=\"{b}\" stroke=\"black\"/>\n<line x1=\"{m}\" y1=\"{t}\" x2=\"{m}\" y2=\"{b}\" stroke=\"black\"/>\n",
        m = MARGIN,
        b = HEIGHT - MARGIN,
        r = WIDTH - MARGIN,
        t = MARGIN
    ));
    for (frac, anchor) in [(0.0, x0), (1.0, x1)] {
        svg.push_str(&format!(
            "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"11\">{anchor:.3}</text>\n",
            MARGIN + frac * (WIDTH - 2.0 * MARGIN),
            HEIGHT - MARGIN + 18.0
        ));
    }
    for (frac, anchor) in [(0.0, y0), (1.0, y1)] {
        svg.push_str(&format!(
            "<text x=\"{}\" y=\"{}\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"11\">{anchor:.3}</text>\n",
            MARGIN - 6.0,
            HEIGHT - MARGIN - frac * (HEIGHT - 2.0 * MARGIN) + 4.0
        ));
    }
    if diagonal {
        svg.push_str(&format!(
            "<line x1=\"{}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"#999\" stroke-dasharray=\"4 3\"/>\n",
            sx(x0.max(y0)),
            sy(x0.max(y0)),
            sx(x1.min(y1)),
            sy(x1.min(y1))
        ));
    }
    for (k, s) in series.iter().enumerate() {
        let color = PALETTE[k % PALETTE.len()];
        let path: Vec<String> = s
            .points
            .iter()
            .map(|(x, y)| format!("{:.2},{:.2}", sx(*x), sy(*y)))
            .collect();
        svg.push_str(&format!(
            "<polyline fill=\"none\" stroke=\"{color}\" stroke-width=\"1.5\" points=\"{}\"/>\n",
            path.join(" ")
        ));
        svg.push_str(&format!(
            "<text x=\"{}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"12\" fill=\"{color}\">{}</text>\n",
            WIDTH - MARGIN + 4.0,
            MARGIN + 16.0 * k as f64,
            escape(s.name)
        ));
    }
    svg.push_str("</svg>\n");
    svg
}

/// Horizontal bar chart, items drawn top to bottom in the given order.
pub fn bar_chart(title: &str, items: &[(String, f64)]) -> String {
    let max = items.iter().map(|(_, v)| v.abs()).fold(1e-12, f64::max);
    let row_h = ((HEIGHT - 2.0 * MARGIN) / items.len().max(1) as f64).min(26.0);
    let label_w = 190.0;
    let mut svg = String::new();
    svg.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{WIDTH}\" height=\"{HEIGHT}\" viewBox=\"0 0 {WIDTH} {HEIGHT}\">\n"
    ));
    svg.push_str("<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n");
    svg.push_str(&format!(
        "<text x=\"{}\" y=\"24\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"16\">{}</text>\n",
        WIDTH / 2.0,
        escape(title)
    ));
    for (k, (name, value)) in items.iter().enumerate() {
        let y = MARGIN + k as f64 * row_h;
        let w = value.abs() / max * (WIDTH - label_w - 2.0 * MARGIN);
        svg.push_str(&format!(
            "<text x=\"{}\" y=\"{}\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"11\">{}</text>\n",
            label_w - 6.0,
            y + row_h * 0.65,
            escape(name)
        ));
        svg.push_str(&format!(
            "<rect x=\"{label_w}\" y=\"{}\" width=\"{w:.2}\" height=\"{:.2}\" fill=\"{}\"/>\n",
            y + row_h * 0.15,
            row_h * 0.7,
            if *value >= 0.0 { PALETTE[0] } else { PALETTE[1] }
        ));
        svg.push_str(&format!(
            "<text x=\"{}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"11\">{value:.4}</text>\n",
            label_w + w + 6.0,
            y + row_h * 0.65
        ));
    }
    svg.push_str("</svg>\n");
    svg
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}
