//! Minimal static line charts: a single polyline with axis labels,
//! dependency-free and byte-deterministic.

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 400.0;
const MARGIN: f64 = 60.0;

pub fn line_chart(title: &str, xs: &[f64], ys: &[f64]) -> String {
    assert_eq!(xs.len(), ys.len());
    let (x_min, x_max) = padded_range(xs);
    let (y_min, y_max) = padded_range(ys);
    let map_x = |x: f64| MARGIN + (x - x_min) / (x_max - x_min) * (WIDTH - 2.0 * MARGIN);
    let map_y = |y: f64| HEIGHT - MARGIN - (y - y_min) / (y_max - y_min) * (HEIGHT - 2.0 * MARGIN);

    let mut points = String::new();
    for (x, y) in xs.iter().zip(ys.iter()) {
        points.push_str(&format!("{:.2},{:.2} ", map_x(*x), map_y(*y)));
    }

    let mut out = String::new();
    out.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" viewBox=\"0 0 {WIDTH} {HEIGHT}\">\n"
    ));
    out.push_str("<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n");
    out.push_str(&format!(
        "<text x=\"{:.0}\" y=\"24\" font-family=\"monospace\" font-size=\"16\" \
         text-anchor=\"middle\">{title}</text>\n",
        WIDTH / 2.0
    ));
    // axes
    out.push_str(&format!(
        "<line x1=\"{m}\" y1=\"{b}\" x2=\"{r}\" y2=\"{b}\" stroke=\"black\"/>\n",
        m = MARGIN,
        b = HEIGHT - MARGIN,
        r = WIDTH - MARGIN
    ));
    out.push_str(&format!(
        "<line x1=\"{m}\" y1=\"{t}\" x2=\"{m}\" y2=\"{b}\" stroke=\"black\"/>\n",
        m = MARGIN,
        t = MARGIN,
        b = HEIGHT - MARGIN
    ));
    // min/max labels
    out.push_str(&format!(
        "<text x=\"{:.0}\" y=\"{:.0}\" font-family=\"monospace\" font-size=\"11\">{}</text>\n",
        MARGIN,
        HEIGHT - MARGIN + 16.0,
        fmt_tick(x_min)
    ));
    out.push_str(&format!(
        "<text x=\"{:.0}\" y=\"{:.0}\" font-family=\"monospace\" font-size=\"11\" \
         text-anchor=\"end\">{}</text>\n",
        WIDTH - MARGIN,
        HEIGHT - MARGIN + 16.0,
        fmt_tick(x_max)
    ));
    out.push_str(&format!(
        "<text x=\"{:.0}\" y=\"{:.0}\" font-family=\"monospace\" font-size=\"11\" \
         text-anchor=\"end\">{}</text>\n",
        MARGIN - 4.0,
        HEIGHT - MARGIN,
        fmt_tick(y_min)
    ));
    out.push_str(&format!(
        "<text x=\"{:.0}\" y=\"{:.0}\" font-family=\"monospace\" font-size=\"11\" \
         text-anchor=\"end\">{}</text>\n",
        MARGIN - 4.0,
        MARGIN + 4.0,
        fmt_tick(y_max)
    ));
    out.push_str(&format!(
        "<polyline fill=\"none\" stroke=\"#1f77b4\" stroke-width=\"1.5\" points=\"{}\"/>\n",
        points.trim_end()
    ));
    out.push_str("</svg>\n");
    out
}

fn padded_range(values: &[f64]) -> (f64, f64) {
    let mut min = f64::INFINITY;
    let mut max = f64::NEG_INFINITY;
    for v in values {
        min = min.min(*v);
        max = max.max(*v);
    }
    if !min.is_finite() || !max.is_finite() {
        return (0.0, 1.0);
    }
    if min == max {
        let pad = min.abs().max(1.0) * 1e-3;
        (min - pad, max + pad)
    } else {
        (min, max)
    }
}

fn fmt_tick(v: f64) -> String {
    if v == 0.0 {
        "0".to_string()
    } else if v.abs() >= 0.01 && v.abs() < 10_000.0 {
        format!("{v:.4}")
    } else {
        format!("{v:.3e}")
    }
}
