//! Static SVG charts for experiment output.
//!
//! Plots are generated directly as SVG text: line charts (optionally
//! log-scaled per axis) and the stability-region map. The scenario name and
//! config hash are embedded in a footer line for provenance.

const WIDTH: f64 = 800.0;
const HEIGHT: f64 = 520.0;
const MARGIN_LEFT: f64 = 72.0;
const MARGIN_RIGHT: f64 = 24.0;
const MARGIN_TOP: f64 = 44.0;
const MARGIN_BOTTOM: f64 = 58.0;

const PALETTE: [&str; 8] = [
    "#0072b2", "#d55e00", "#009e73", "#cc79a7", "#e69f00", "#56b4e9", "#b22222", "#444444",
];

/// One polyline of a chart.
#[derive(Debug, Clone)]
pub struct PlotSeries {
    pub name: String,
    pub points: Vec<(f64, f64)>,
}

/// A complete line chart description.
#[derive(Debug, Clone)]
pub struct PlotSpec {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub log_x: bool,
    pub log_y: bool,
    pub series: Vec<PlotSeries>,
    /// Provenance line drawn under the chart (scenario name, config hash).
    pub footer: String,
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

fn fmt_tick(v: f64) -> String {
    if v == 0.0 {
        return "0".into();
    }
    let a = v.abs();
    if !(1e-3..1e4).contains(&a) {
        return format!("{v:e}");
    }
    // Ticks are multiples of 1/2/5 * 10^k; rounding removes float residue.
    format!("{}", (v * 1e9).round() / 1e9)
}

/// Tick positions for a linear axis: multiples of a 1-2-5 step.
fn linear_ticks(min: f64, max: f64) -> Vec<f64> {
    let range = max - min;
    if range <= 0.0 || !range.is_finite() {
        return vec![min];
    }
    let raw = range / 5.0;
    let mag = 10f64.powf(raw.log10().floor());
    let step = [1.0, 2.0, 5.0, 10.0]
        .iter()
        .map(|m| m * mag)
        .find(|s| range / s <= 6.0)
        .unwrap_or(mag);
    let first = (min / step).ceil() * step;
    let mut ticks = Vec::new();
    let mut t = first;
    while t <= max + 1e-9 * range {
        ticks.push(t);
        t += step;
    }
    ticks
}

/// Decade ticks for a log axis.
fn log_ticks(min: f64, max: f64) -> Vec<f64> {
    let lo = min.log10().floor() as i32;
    let hi = max.log10().ceil() as i32;
    (lo..=hi).map(|k| 10f64.powi(k)).collect()
}

struct Axis {
    min: f64,
    max: f64,
    log: bool,
}

impl Axis {
    fn transform(&self, v: f64) -> f64 {
        if self.log {
            v.log10()
        } else {
            v
        }
    }

    fn fraction(&self, v: f64) -> f64 {
        let (lo, hi) = (self.transform(self.min), self.transform(self.max));
        if hi == lo {
            return 0.5;
        }
        (self.transform(v) - lo) / (hi - lo)
    }

    fn ticks(&self) -> Vec<f64> {
        if self.log {
            log_ticks(self.min, self.max)
        } else {
            linear_ticks(self.min, self.max)
        }
    }
}

fn data_bounds(series: &[PlotSeries], log_x: bool, log_y: bool) -> Option<(Axis, Axis)> {
    let mut xs: Vec<f64> = Vec::new();
    let mut ys: Vec<f64> = Vec::new();
    for s in series {
        for &(x, y) in &s.points {
            if !x.is_finite() || !y.is_finite() {
                continue;
            }
            if (log_x && x <= 0.0) || (log_y && y <= 0.0) {
                continue;
            }
            xs.push(x);
            ys.push(y);
        }
    }
    if xs.is_empty() {
        return None;
    }
    let (mut x_min, mut x_max) = bounds(&xs);
    let (mut y_min, mut y_max) = bounds(&ys);
    if !log_x {
        pad(&mut x_min, &mut x_max);
    }
    if !log_y {
        pad(&mut y_min, &mut y_max);
    }
    Some((
        Axis {
            min: x_min,
            max: x_max,
            log: log_x,
        },
        Axis {
            min: y_min,
            max: y_max,
            log: log_y,
        },
    ))
}

fn bounds(v: &[f64]) -> (f64, f64) {
    let min = v.iter().copied().fold(f64::INFINITY, f64::min);
    let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    (min, max)
}

fn pad(min: &mut f64, max: &mut f64) {
    let span = (*max - *min).max(1e-12 * (1.0 + min.abs()));
    *min -= 0.05 * span;
    *max += 0.05 * span;
}

/// Renders a line chart as an SVG document.
pub fn render(spec: &PlotSpec) -> String {
    let plot_w = WIDTH - MARGIN_LEFT - MARGIN_RIGHT;
    let plot_h = HEIGHT - MARGIN_TOP - MARGIN_BOTTOM;
    let mut svg = String::with_capacity(16 * 1024);
    svg.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{WIDTH}\" height=\"{HEIGHT}\" \
         viewBox=\"0 0 {WIDTH} {HEIGHT}\" font-family=\"sans-serif\">\n"
    ));
    svg.push_str("<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n");
    svg.push_str(&format!(
        "<text x=\"{}\" y=\"24\" text-anchor=\"middle\" font-size=\"16\">{}</text>\n",
        WIDTH / 2.0,
        xml_escape(&spec.title)
    ));

    let Some((x_axis, y_axis)) = data_bounds(&spec.series, spec.log_x, spec.log_y) else {
        svg.push_str(&format!(
            "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\">no finite data</text>\n</svg>\n",
            WIDTH / 2.0,
            HEIGHT / 2.0
        ));
        return svg;
    };

    let map_x = |v: f64| MARGIN_LEFT + x_axis.fraction(v) * plot_w;
    let map_y = |v: f64| MARGIN_TOP + (1.0 - y_axis.fraction(v)) * plot_h;

    // Grid and ticks.
    for t in x_axis.ticks() {
        let x = map_x(t);
        svg.push_str(&format!(
            "<line x1=\"{x:.2}\" y1=\"{}\" x2=\"{x:.2}\" y2=\"{}\" stroke=\"#dddddd\"/>\n",
            MARGIN_TOP,
            MARGIN_TOP + plot_h
        ));
        svg.push_str(&format!(
            "<text x=\"{x:.2}\" y=\"{}\" text-anchor=\"middle\" font-size=\"11\">{}</text>\n",
            MARGIN_TOP + plot_h + 16.0,
            fmt_tick(t)
        ));
    }
    for t in y_axis.ticks() {
        let y = map_y(t);
        svg.push_str(&format!(
            "<line x1=\"{}\" y1=\"{y:.2}\" x2=\"{}\" y2=\"{y:.2}\" stroke=\"#dddddd\"/>\n",
            MARGIN_LEFT,
            MARGIN_LEFT + plot_w
        ));
        svg.push_str(&format!(
            "<text x=\"{}\" y=\"{:.2}\" text-anchor=\"end\" font-size=\"11\">{}</text>\n",
            MARGIN_LEFT - 6.0,
            y + 4.0,
            fmt_tick(t)
        ));
    }

    // Frame.
    svg.push_str(&format!(
        "<rect x=\"{}\" y=\"{}\" width=\"{plot_w}\" height=\"{plot_h}\" fill=\"none\" stroke=\"#333333\"/>\n",
        MARGIN_LEFT, MARGIN_TOP
    ));
    svg.push_str(&format!(
        "<clipPath id=\"plot-area\"><rect x=\"{}\" y=\"{}\" width=\"{plot_w}\" height=\"{plot_h}\"/></clipPath>\n",
        MARGIN_LEFT, MARGIN_TOP
    ));

    // Axis labels.
    svg.push_str(&format!(
        "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\" font-size=\"13\">{}</text>\n",
        MARGIN_LEFT + plot_w / 2.0,
        HEIGHT - 14.0,
        xml_escape(&spec.x_label)
    ));
    svg.push_str(&format!(
        "<text x=\"18\" y=\"{}\" text-anchor=\"middle\" font-size=\"13\" \
         transform=\"rotate(-90 18 {})\">{}</text>\n",
        MARGIN_TOP + plot_h / 2.0,
        MARGIN_TOP + plot_h / 2.0,
        xml_escape(&spec.y_label)
    ));

    // Series.
    svg.push_str("<g clip-path=\"url(#plot-area)\">\n");
    for (i, s) in spec.series.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let mut path = String::new();
        let mut any = false;
        for &(x, y) in &s.points {
            if !x.is_finite()
                || !y.is_finite()
                || (spec.log_x && x <= 0.0)
                || (spec.log_y && y <= 0.0)
            {
                continue;
            }
            path.push_str(&format!("{:.2},{:.2} ", map_x(x), map_y(y)));
            any = true;
        }
        if any {
            svg.push_str(&format!(
                "<polyline points=\"{}\" fill=\"none\" stroke=\"{color}\" stroke-width=\"1.6\"/>\n",
                path.trim_end()
            ));
            // Point markers keep sparse sweeps readable.
            if s.points.len() <= 32 {
                for &(x, y) in &s.points {
                    if x.is_finite() && y.is_finite() && (!spec.log_y || y > 0.0) {
                        svg.push_str(&format!(
                            "<circle cx=\"{:.2}\" cy=\"{:.2}\" r=\"3\" fill=\"{color}\"/>\n",
                            map_x(x),
                            map_y(y)
                        ));
                    }
                }
            }
        }
    }
    svg.push_str("</g>\n");

    // Legend.
    let legend_x = MARGIN_LEFT + plot_w - 170.0;
    let mut legend_y = MARGIN_TOP + 14.0;
    for (i, s) in spec.series.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        svg.push_str(&format!(
            "<line x1=\"{legend_x}\" y1=\"{legend_y}\" x2=\"{}\" y2=\"{legend_y}\" \
             stroke=\"{color}\" stroke-width=\"2\"/>\n",
            legend_x + 22.0
        ));
        svg.push_str(&format!(
            "<text x=\"{}\" y=\"{}\" font-size=\"12\">{}</text>\n",
            legend_x + 28.0,
            legend_y + 4.0,
            xml_escape(&s.name)
        ));
        legend_y += 16.0;
    }

    svg.push_str(&format!(
        "<text x=\"{}\" y=\"{}\" font-size=\"10\" fill=\"#777777\">{}</text>\n",
        MARGIN_LEFT,
        HEIGHT - 2.0,
        xml_escape(&spec.footer)
    ));
    svg.push_str("</svg>\n");
    svg
}

fn region_color(label: &str) -> &'static str {
    match label {
        "I_II" => "#7fbf7b",
        "III" => "#d9f0d3",
        "IV" => "#fdb863",
        "V" => "#d7191c",
        _ => "#555555",
    }
}

/// Renders the stability-region map: colored cells plus the analytic
/// boundary curves.
pub fn render_region_map(
    gamma_a: &[f64],
    b: &[f64],
    labels: &[String],
    curves: &[(&str, Vec<(f64, f64)>)],
    epsilon: f64,
    footer: &str,
) -> String {
    let plot_w = WIDTH - MARGIN_LEFT - MARGIN_RIGHT;
    let plot_h = HEIGHT - MARGIN_TOP - MARGIN_BOTTOM;
    let (x_min, x_max) = bounds(gamma_a);
    let (y_min, y_max) = bounds(b);
    let nx = gamma_a.len();
    let ny = b.len();
    let map_x = |v: f64| MARGIN_LEFT + (v - x_min) / (x_max - x_min) * plot_w;
    let map_y = |v: f64| MARGIN_TOP + (1.0 - (v - y_min) / (y_max - y_min)) * plot_h;

    let mut svg = String::with_capacity(64 * 1024);
    svg.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{WIDTH}\" height=\"{HEIGHT}\" \
         viewBox=\"0 0 {WIDTH} {HEIGHT}\" font-family=\"sans-serif\">\n"
    ));
    svg.push_str("<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n");
    svg.push_str(&format!(
        "<text x=\"{}\" y=\"24\" text-anchor=\"middle\" font-size=\"16\">Stability regions (epsilon = {epsilon})</text>\n",
        WIDTH / 2.0
    ));

    let cell_w = plot_w / (nx.max(2) - 1) as f64;
    let cell_h = plot_h / (ny.max(2) - 1) as f64;
    for (j, &bv) in b.iter().enumerate() {
        for (i, &gv) in gamma_a.iter().enumerate() {
            let label = &labels[j * nx + i];
            let x = map_x(gv) - cell_w / 2.0;
            let y = map_y(bv) - cell_h / 2.0;
            svg.push_str(&format!(
                "<rect x=\"{x:.2}\" y=\"{y:.2}\" width=\"{cell_w:.2}\" height=\"{cell_h:.2}\" fill=\"{}\"/>\n",
                region_color(label)
            ));
        }
    }

    svg.push_str(&format!(
        "<clipPath id=\"map-area\"><rect x=\"{}\" y=\"{}\" width=\"{plot_w}\" height=\"{plot_h}\"/></clipPath>\n",
        MARGIN_LEFT, MARGIN_TOP
    ));
    svg.push_str("<g clip-path=\"url(#map-area)\">\n");
    for (i, (name, curve)) in curves.iter().enumerate() {
        let color = if *name == "boundary_stability" {
            "#000000"
        } else {
            "#b22222"
        };
        let dash = if i == 0 {
            ""
        } else {
            " stroke-dasharray=\"6 3\""
        };
        let mut path = String::new();
        for &(x, y) in curve {
            if x.is_finite() && y.is_finite() {
                path.push_str(&format!("{:.2},{:.2} ", map_x(x), map_y(y)));
            }
        }
        svg.push_str(&format!(
            "<polyline points=\"{}\" fill=\"none\" stroke=\"{color}\" stroke-width=\"1.8\"{dash}/>\n",
            path.trim_end()
        ));
    }
    svg.push_str("</g>\n");

    svg.push_str(&format!(
        "<rect x=\"{}\" y=\"{}\" width=\"{plot_w}\" height=\"{plot_h}\" fill=\"none\" stroke=\"#333333\"/>\n",
        MARGIN_LEFT, MARGIN_TOP
    ));
    for t in linear_ticks(x_min, x_max) {
        svg.push_str(&format!(
            "<text x=\"{:.2}\" y=\"{}\" text-anchor=\"middle\" font-size=\"11\">{}</text>\n",
            map_x(t),
            MARGIN_TOP + plot_h + 16.0,
            fmt_tick(t)
        ));
    }
    for t in linear_ticks(y_min, y_max) {
        svg.push_str(&format!(
            "<text x=\"{}\" y=\"{:.2}\" text-anchor=\"end\" font-size=\"11\">{}</text>\n",
            MARGIN_LEFT - 6.0,
            map_y(t) + 4.0,
            fmt_tick(t)
        ));
    }
    svg.push_str(&format!(
        "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\" font-size=\"13\">gamma * a</text>\n",
        MARGIN_LEFT + plot_w / 2.0,
        HEIGHT - 14.0
    ));
    svg.push_str(&format!(
        "<text x=\"18\" y=\"{}\" text-anchor=\"middle\" font-size=\"13\" \
         transform=\"rotate(-90 18 {})\">b</text>\n",
        MARGIN_TOP + plot_h / 2.0,
        MARGIN_TOP + plot_h / 2.0
    ));

    // Region legend.
    let mut legend_y = MARGIN_TOP + 14.0;
    for label in ["I_II", "III", "IV", "V", "Border"] {
        svg.push_str(&format!(
            "<rect x=\"{}\" y=\"{}\" width=\"14\" height=\"10\" fill=\"{}\" stroke=\"#333333\"/>\n",
            MARGIN_LEFT + plot_w - 90.0,
            legend_y - 9.0,
            region_color(label)
        ));
        svg.push_str(&format!(
            "<text x=\"{}\" y=\"{}\" font-size=\"12\">{}</text>\n",
            MARGIN_LEFT + plot_w - 70.0,
            legend_y,
            label
        ));
        legend_y += 16.0;
    }

    svg.push_str(&format!(
        "<text x=\"{}\" y=\"{}\" font-size=\"10\" fill=\"#777777\">{}</text>\n",
        MARGIN_LEFT,
        HEIGHT - 2.0,
        xml_escape(footer)
    ));
    svg.push_str("</svg>\n");
    svg
}
