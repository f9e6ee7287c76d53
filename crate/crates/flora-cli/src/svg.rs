//! Minimal SVG line-plot writer. No plotting dependency: the output is a
//! fixed-size viewport with axes, one polyline per series, and a legend.

pub struct Series {
    pub label: String,
    pub points: Vec<(f64, f64)>,
}

const WIDTH: f64 = 800.0;
const HEIGHT: f64 = 500.0;
const MARGIN_L: f64 = 70.0;
const MARGIN_R: f64 = 150.0;
const MARGIN_T: f64 = 40.0;
const MARGIN_B: f64 = 50.0;
const PALETTE: [&str; 6] = [
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b",
];

pub fn line_plot(title: &str, x_label: &str, y_label: &str, series: &[Series]) -> String {
    let points = series.iter().flat_map(|s| s.points.iter());
    let (mut x_min, mut x_max) = (f64::INFINITY, f64::NEG_INFINITY);
    let (mut y_min, mut y_max) = (f64::INFINITY, f64::NEG_INFINITY);
    for &(x, y) in points {
        x_min = x_min.min(x);
        x_max = x_max.max(x);
        y_min = y_min.min(y);
        y_max = y_max.max(y);
    }
    if !x_min.is_finite() {
        x_min = 0.0;
        x_max = 1.0;
        y_min = 0.0;
        y_max = 1.0;
    }
    if x_max == x_min {
        x_max = x_min + 1.0;
    }
    if y_max == y_min {
        y_max = y_min + 1.0;
    }

    let plot_w = WIDTH - MARGIN_L - MARGIN_R;
    let plot_h = HEIGHT - MARGIN_T - MARGIN_B;
    let sx = move |x: f64| MARGIN_L + (x - x_min) / (x_max - x_min) * plot_w;
    let sy = move |y: f64| MARGIN_T + plot_h - (y - y_min) / (y_max - y_min) * plot_h;

    let mut out = String::new();
    out.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" viewBox=\"0 0 {WIDTH} {HEIGHT}\" \
         font-family=\"sans-serif\" font-size=\"13\">\n"
    ));
    out.push_str(&format!(
        "  <text x=\"{}\" y=\"22\" text-anchor=\"middle\" font-size=\"16\">{}</text>\n",
        MARGIN_L + plot_w / 2.0,
        escape(title)
    ));
    // Axes.
    out.push_str(&format!(
        "  <line x1=\"{l}\" y1=\"{b}\" x2=\"{r}\" y2=\"{b}\" stroke=\"black\"/>\n  \
         <line x1=\"{l}\" y1=\"{t}\" x2=\"{l}\" y2=\"{b}\" stroke=\"black\"/>\n",
        l = MARGIN_L,
        r = MARGIN_L + plot_w,
        t = MARGIN_T,
        b = MARGIN_T + plot_h
    ));
    out.push_str(&format!(
        "  <text x=\"{}\" y=\"{}\" text-anchor=\"middle\">{}</text>\n",
        MARGIN_L + plot_w / 2.0,
        HEIGHT - 12.0,
        escape(x_label)
    ));
    out.push_str(&format!(
        "  <text x=\"16\" y=\"{}\" text-anchor=\"middle\" transform=\"rotate(-90 16 {})\">{}</text>\n",
        MARGIN_T + plot_h / 2.0,
        MARGIN_T + plot_h / 2.0,
        escape(y_label)
    ));
    // Extent labels.
    out.push_str(&format!(
        "  <text x=\"{l}\" y=\"{y}\" text-anchor=\"middle\">{v}</text>\n",
        l = MARGIN_L,
        y = MARGIN_T + plot_h + 18.0,
        v = fmt_tick(x_min)
    ));
    out.push_str(&format!(
        "  <text x=\"{r}\" y=\"{y}\" text-anchor=\"middle\">{v}</text>\n",
        r = MARGIN_L + plot_w,
        y = MARGIN_T + plot_h + 18.0,
        v = fmt_tick(x_max)
    ));
    out.push_str(&format!(
        "  <text x=\"{x}\" y=\"{b}\" text-anchor=\"end\">{v}</text>\n",
        x = MARGIN_L - 8.0,
        b = MARGIN_T + plot_h + 4.0,
        v = fmt_tick(y_min)
    ));
    out.push_str(&format!(
        "  <text x=\"{x}\" y=\"{t}\" text-anchor=\"end\">{v}</text>\n",
        x = MARGIN_L - 8.0,
        t = MARGIN_T + 4.0,
        v = fmt_tick(y_max)
    ));

    for (i, s) in series.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let mut path = String::new();
        for &(x, y) in &s.points {
            if !path.is_empty() {
                path.push(' ');
            }
            path.push_str(&format!("{:.2},{:.2}", sx(x), sy(y)));
        }
        out.push_str(&format!(
            "  <polyline fill=\"none\" stroke=\"{color}\" stroke-width=\"1.5\" points=\"{path}\"/>\n"
        ));
        let ly = MARGIN_T + 16.0 + i as f64 * 20.0;
        out.push_str(&format!(
            "  <line x1=\"{x}\" y1=\"{y}\" x2=\"{x2}\" y2=\"{y}\" stroke=\"{color}\" stroke-width=\"3\"/>\n",
            x = WIDTH - MARGIN_R + 12.0,
            x2 = WIDTH - MARGIN_R + 34.0,
            y = ly - 4.0
        ));
        out.push_str(&format!(
            "  <text x=\"{x}\" y=\"{y}\">{label}</text>\n",
            x = WIDTH - MARGIN_R + 40.0,
            y = ly,
            label = escape(&s.label)
        ));
    }
    out.push_str("</svg>\n");
    out
}

fn fmt_tick(v: f64) -> String {
    if v == v.trunc() && v.abs() < 1e9 {
        format!("{v:.0}")
    } else {
        format!("{v:.3}")
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn plot_contains_all_series() {
        let series = vec![
            Series {
                label: "a".to_string(),
                points: vec![(0.0, 1.0), (1.0, 2.0)],
            },
            Series {
                label: "b".to_string(),
                points: vec![(0.0, 2.0), (1.0, 1.0)],
            },
        ];
        let svg = line_plot("t", "x", "y", &series);
        assert_eq!(svg.matches("<polyline").count(), 2);
        assert!(svg.contains(">a</text>"));
        assert!(svg.contains(">b</text>"));
        assert_eq!(svg, line_plot("t", "x", "y", &series));
    }

    #[test]
    fn degenerate_input_still_renders() {
        let svg = line_plot("t", "x", "y", &[]);
        assert!(svg.starts_with("<svg"));
        let flat = vec![Series {
            label: "c".to_string(),
            points: vec![(1.0, 5.0), (1.0, 5.0)],
        }];
        assert!(line_plot("t", "x", "y", &flat).contains("polyline"));
    }
}
