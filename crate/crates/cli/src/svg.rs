//! Convergence chart emission.
//!
//! One SVG line chart: x is the trial size on a log2 axis, y the Type I
//! error. Each series draws its mean as a polyline over a shaded band
//! between the 2.5th and 97.5th percentiles; a grey horizontal band marks
//! alpha +/- the Monte Carlo error for L sequences and a dashed line marks
//! alpha itself.

use randtrial_core::harness::mc_bound_half_width;
use randtrial_core::{Error, Result};

const WIDTH: f64 = 960.0;
const HEIGHT: f64 = 540.0;
const MARGIN_LEFT: f64 = 72.0;
const MARGIN_RIGHT: f64 = 230.0;
const MARGIN_TOP: f64 = 32.0;
const MARGIN_BOTTOM: f64 = 56.0;

const SERIES_COLORS: &[&str] = &[
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#17becf", "#7f7f7f",
];

/// One plotted series: (n, mean, p2.5, p97.5) per point, sorted by n.
#[derive(Clone, Debug)]
pub struct ChartSeries {
    pub label: String,
    pub points: Vec<ChartPoint>,
}

#[derive(Clone, Copy, Debug)]
pub struct ChartPoint {
    pub n: usize,
    pub mean: f64,
    pub p2_5: f64,
    pub p97_5: f64,
}

/// The documented axis mapping, exposed so chart coordinates can be checked
/// against the source data.
#[derive(Clone, Copy, Debug)]
pub struct AxisTransform {
    log_n_min: f64,
    log_n_max: f64,
    y_min: f64,
    y_max: f64,
}

impl AxisTransform {
    /// Horizontal pixel for a trial size (log2 interpolation).
    pub fn x(&self, n: f64) -> f64 {
        let span = self.log_n_max - self.log_n_min;
        let t = if span > 0.0 {
            (n.log2() - self.log_n_min) / span
        } else {
            0.5
        };
        MARGIN_LEFT + t * (WIDTH - MARGIN_LEFT - MARGIN_RIGHT)
    }

    /// Vertical pixel for a Type I error value (linear).
    pub fn y(&self, v: f64) -> f64 {
        let h = HEIGHT - MARGIN_TOP - MARGIN_BOTTOM;
        MARGIN_TOP + h - (v - self.y_min) / (self.y_max - self.y_min) * h
    }
}

/// A rendered chart plus the transform that produced its coordinates.
pub struct Chart {
    pub svg: String,
    pub transform: AxisTransform,
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn fmt(v: f64) -> String {
    format!("{v:.3}")
}

/// Render the chart. Errors on an empty series list or series without points.
pub fn render(series: &[ChartSeries], alpha: f64, l: u64) -> Result<Chart> {
    if series.is_empty() || series.iter().all(|s| s.points.is_empty()) {
        return Err(Error::InvalidInput("nothing to plot".into()));
    }
    for s in series {
        if s.points.is_empty() {
            return Err(Error::InvalidInput(format!("series `{}` has no points", s.label)));
        }
        debug_assert!(s.points.windows(2).all(|w| w[0].n < w[1].n));
    }

    let hw = mc_bound_half_width(alpha, l);
    let n_min = series.iter().flat_map(|s| &s.points).map(|p| p.n).min().unwrap();
    let n_max = series.iter().flat_map(|s| &s.points).map(|p| p.n).max().unwrap();
    let v_max = series
        .iter()
        .flat_map(|s| &s.points)
        .map(|p| p.p97_5)
        .fold(alpha + hw, f64::max);

    let transform = AxisTransform {
        log_n_min: (n_min as f64).log2(),
        log_n_max: (n_max as f64).log2(),
        y_min: 0.0,
        y_max: (v_max * 1.15).max(2.0 * alpha),
    };
    let t = &transform;

    let mut svg = String::new();
    svg.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{WIDTH}\" height=\"{HEIGHT}\" \
         viewBox=\"0 0 {WIDTH} {HEIGHT}\">\n"
    ));
    svg.push_str(&format!(
        "<rect x=\"0\" y=\"0\" width=\"{WIDTH}\" height=\"{HEIGHT}\" fill=\"#ffffff\"/>\n"
    ));

    // Grey Monte Carlo band around alpha.
    let band_top = t.y(alpha + hw);
    let band_bottom = t.y(alpha - hw);
    svg.push_str(&format!(
        "<rect x=\"{}\" y=\"{}\" width=\"{}\" height=\"{}\" fill=\"#bbbbbb\" fill-opacity=\"0.5\"/>\n",
        fmt(MARGIN_LEFT),
        fmt(band_top),
        fmt(WIDTH - MARGIN_LEFT - MARGIN_RIGHT),
        fmt(band_bottom - band_top),
    ));

    // Axes.
    let x0 = MARGIN_LEFT;
    let x1 = WIDTH - MARGIN_RIGHT;
    let y0 = HEIGHT - MARGIN_BOTTOM;
    svg.push_str(&format!(
        "<line x1=\"{}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"#000000\"/>\n",
        fmt(x0), fmt(y0), fmt(x1), fmt(y0)
    ));
    svg.push_str(&format!(
        "<line x1=\"{}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"#000000\"/>\n",
        fmt(x0), fmt(MARGIN_TOP), fmt(x0), fmt(y0)
    ));

    // x ticks at every distinct n in the data (log2 axis).
    let mut ticks: Vec<usize> = series.iter().flat_map(|s| &s.points).map(|p| p.n).collect();
    ticks.sort_unstable();
    ticks.dedup();
    for &n in &ticks {
        let x = t.x(n as f64);
        svg.push_str(&format!(
            "<line x1=\"{}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"#000000\"/>\n",
            fmt(x), fmt(y0), fmt(x), fmt(y0 + 6.0)
        ));
        svg.push_str(&format!(
            "<text x=\"{}\" y=\"{}\" font-size=\"12\" text-anchor=\"middle\">{n}</text>\n",
            fmt(x), fmt(y0 + 20.0)
        ));
    }
    svg.push_str(&format!(
        "<text x=\"{}\" y=\"{}\" font-size=\"13\" text-anchor=\"middle\">n (log2 scale)</text>\n",
        fmt((x0 + x1) / 2.0),
        fmt(HEIGHT - 14.0)
    ));

    // y ticks: five even divisions.
    for i in 0..=4 {
        let v = transform.y_min + (transform.y_max - transform.y_min) * f64::from(i) / 4.0;
        let y = t.y(v);
        svg.push_str(&format!(
            "<line x1=\"{}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"#000000\"/>\n",
            fmt(x0 - 6.0), fmt(y), fmt(x0), fmt(y)
        ));
        svg.push_str(&format!(
            "<text x=\"{}\" y=\"{}\" font-size=\"12\" text-anchor=\"end\">{}</text>\n",
            fmt(x0 - 10.0),
            fmt(y + 4.0),
            fmt(v)
        ));
    }
    svg.push_str(&format!(
        "<text x=\"16\" y=\"{}\" font-size=\"13\" transform=\"rotate(-90 16 {})\" \
         text-anchor=\"middle\">type I error</text>\n",
        fmt((MARGIN_TOP + y0) / 2.0),
        fmt((MARGIN_TOP + y0) / 2.0)
    ));

    // Percentile bands first, then the mean lines on top.
    for (i, s) in series.iter().enumerate() {
        let color = SERIES_COLORS[i % SERIES_COLORS.len()];
        let mut pts = String::new();
        for p in &s.points {
            pts.push_str(&format!("{},{} ", fmt(t.x(p.n as f64)), fmt(t.y(p.p97_5))));
        }
        for p in s.points.iter().rev() {
            pts.push_str(&format!("{},{} ", fmt(t.x(p.n as f64)), fmt(t.y(p.p2_5))));
        }
        svg.push_str(&format!(
            "<polygon points=\"{}\" fill=\"{color}\" fill-opacity=\"0.18\" stroke=\"none\"/>\n",
            pts.trim_end()
        ));
    }
    for (i, s) in series.iter().enumerate() {
        let color = SERIES_COLORS[i % SERIES_COLORS.len()];
        let pts: Vec<String> = s
            .points
            .iter()
            .map(|p| format!("{},{}", fmt(t.x(p.n as f64)), fmt(t.y(p.mean))))
            .collect();
        svg.push_str(&format!(
            "<polyline points=\"{}\" fill=\"none\" stroke=\"{color}\" stroke-width=\"1.8\"/>\n",
            pts.join(" ")
        ));
    }

    // Dashed reference line at alpha, on top of the series.
    let y_alpha = t.y(alpha);
    svg.push_str(&format!(
        "<line x1=\"{}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"#333333\" \
         stroke-dasharray=\"6,4\" stroke-width=\"1.2\"/>\n",
        fmt(x0), fmt(y_alpha), fmt(x1), fmt(y_alpha)
    ));

    // Legend in the right margin.
    let legend_x = x1 + 14.0;
    for (i, s) in series.iter().enumerate() {
        let color = SERIES_COLORS[i % SERIES_COLORS.len()];
        let y = MARGIN_TOP + 14.0 + 18.0 * i as f64;
        svg.push_str(&format!(
            "<rect x=\"{}\" y=\"{}\" width=\"14\" height=\"4\" fill=\"{color}\"/>\n",
            fmt(legend_x),
            fmt(y - 4.0)
        ));
        svg.push_str(&format!(
            "<text x=\"{}\" y=\"{}\" font-size=\"11\">{}</text>\n",
            fmt(legend_x + 20.0),
            fmt(y),
            xml_escape(&s.label)
        ));
    }

    svg.push_str("</svg>\n");
    Ok(Chart { svg, transform })
}
