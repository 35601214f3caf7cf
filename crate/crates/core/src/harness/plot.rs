use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use super::{OutputError, TraceEvent, TraceRecord};

const WIDTH: f64 = 800.0;
const HEIGHT: f64 = 450.0;
const MARGIN_LEFT: f64 = 60.0;
const MARGIN_RIGHT: f64 = 130.0;
const MARGIN_TOP: f64 = 20.0;
const MARGIN_BOTTOM: f64 = 45.0;

// (stroke colour, dash pattern) per subflow, cycled.
const STYLES: &[(&str, &str)] = &[
    ("#1f77b4", ""),
    ("#d62728", "6 3"),
    ("#2ca02c", "2 2"),
    ("#9467bd", "8 3 2 3"),
];

struct Axis {
    min: f64,
    max: f64,
    lo_px: f64,
    hi_px: f64,
}

impl Axis {
    fn new(min: f64, max: f64, lo_px: f64, hi_px: f64) -> Self {
        // A degenerate range still needs a nonzero span.
        let max = if max > min { max } else { min + 1.0 };
        Axis { min, max, lo_px, hi_px }
    }

    fn px(&self, v: f64) -> f64 {
        self.lo_px + (v - self.min) / (self.max - self.min) * (self.hi_px - self.lo_px)
    }

    fn ticks(&self) -> Vec<f64> {
        let span = self.max - self.min;
        let raw = span / 5.0;
        let mag = 10f64.powf(raw.log10().floor());
        let step = [1.0, 2.0, 5.0, 10.0]
            .iter()
            .map(|m| m * mag)
            .find(|s| *s >= raw)
            .unwrap_or(10.0 * mag);
        let mut out = Vec::new();
        let mut v = (self.min / step).ceil() * step;
        while v <= self.max + step * 1e-9 {
            out.push(v);
            v += step;
        }
        out
    }
}

fn fmt_tick(v: f64) -> String {
    let s = format!("{v:.3}");
    s.trim_end_matches('0').trim_end_matches('.').to_string()
}

/// Congestion window against time as a standalone SVG document.
pub fn render_svg(records: &[TraceRecord]) -> String {
    let t_max = records.iter().map(|r| r.time).fold(0.0, f64::max);
    let t_min = records.iter().map(|r| r.time).fold(t_max, f64::min);
    let w_max = records.iter().map(|r| r.cwnd).fold(0.0, f64::max);
    let x = Axis::new(t_min, t_max, MARGIN_LEFT, WIDTH - MARGIN_RIGHT);
    let y = Axis::new(0.0, (w_max * 1.05).max(1.0), HEIGHT - MARGIN_BOTTOM, MARGIN_TOP);

    let mut by_subflow: BTreeMap<usize, Vec<&TraceRecord>> = BTreeMap::new();
    for r in records {
        by_subflow.entry(r.subflow).or_default().push(r);
    }

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(svg, r#"<rect width="100%" height="100%" fill="white"/>"#);

    // Axes and grid.
    let (x0, x1, y0, y1) = (x.lo_px, x.hi_px, y.lo_px, y.hi_px);
    let _ = writeln!(svg, r##"<g stroke="#ddd" stroke-width="0.5">"##);
    for t in x.ticks() {
        let p = x.px(t);
        let _ = writeln!(svg, r#"<line x1="{p:.2}" y1="{y0:.2}" x2="{p:.2}" y2="{y1:.2}"/>"#);
    }
    for w in y.ticks() {
        let p = y.px(w);
        let _ = writeln!(svg, r#"<line x1="{x0:.2}" y1="{p:.2}" x2="{x1:.2}" y2="{p:.2}"/>"#);
    }
    let _ = writeln!(svg, "</g>");
    let _ = writeln!(
        svg,
        r#"<path d="M{x0:.2},{y1:.2} V{y0:.2} H{x1:.2}" fill="none" stroke="black"/>"#
    );
    for t in x.ticks() {
        let _ = writeln!(
            svg,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
            x.px(t),
            y0 + 15.0,
            fmt_tick(t)
        );
    }
    for w in y.ticks() {
        let _ = writeln!(
            svg,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="end">{}</text>"#,
            x0 - 6.0,
            y.px(w) + 4.0,
            fmt_tick(w)
        );
    }
    let _ = writeln!(
        svg,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">time (s)</text>"#,
        (x0 + x1) / 2.0,
        HEIGHT - 8.0
    );
    let _ = writeln!(
        svg,
        r#"<text transform="translate(15 {:.2}) rotate(-90)" text-anchor="middle">cwnd (MSS)</text>"#,
        (y0 + y1) / 2.0
    );

    for (k, (subflow, recs)) in by_subflow.iter().enumerate() {
        let (color, dash) = STYLES[k % STYLES.len()];
        let points: Vec<String> = recs
            .iter()
            .map(|r| format!("{:.2},{:.2}", x.px(r.time), y.px(r.cwnd)))
            .collect();
        let dash_attr = if dash.is_empty() {
            String::new()
        } else {
            format!(r#" stroke-dasharray="{dash}""#)
        };
        let _ = writeln!(
            svg,
            r#"<polyline class="subflow" data-subflow="{subflow}" points="{}" fill="none" stroke="{color}" stroke-width="1.5"{dash_attr}/>"#,
            points.join(" ")
        );
        for r in recs.iter().filter(|r| r.event != TraceEvent::Sample) {
            let (px, py) = (x.px(r.time), y.px(r.cwnd));
            let _ = writeln!(svg, "{}", marker(r.event, px, py, color));
        }
        let ly = MARGIN_TOP + 14.0 * k as f64 + 6.0;
        let lx = WIDTH - MARGIN_RIGHT + 10.0;
        let _ = writeln!(
            svg,
            r#"<line x1="{lx:.2}" y1="{ly:.2}" x2="{:.2}" y2="{ly:.2}" stroke="{color}" stroke-width="1.5"{dash_attr}/><text x="{:.2}" y="{:.2}">subflow {subflow}</text>"#,
            lx + 24.0,
            lx + 28.0,
            ly + 4.0
        );
    }

    let legend_top = MARGIN_TOP + 14.0 * by_subflow.len() as f64 + 16.0;
    for (i, ev) in [
        TraceEvent::FastRetransmit,
        TraceEvent::Rto,
        TraceEvent::SpuriousDetected,
        TraceEvent::Restore,
    ]
    .into_iter()
    .enumerate()
    {
        let ly = legend_top + 14.0 * i as f64;
        let lx = WIDTH - MARGIN_RIGHT + 22.0;
        let _ = writeln!(svg, "{}", marker(ev, lx, ly, "black"));
        let _ = writeln!(svg, r#"<text x="{:.2}" y="{:.2}">{ev}</text>"#, lx + 16.0, ly + 4.0);
    }
    svg.push_str("</svg>\n");
    svg
}

fn marker(ev: TraceEvent, x: f64, y: f64, color: &str) -> String {
    let class = ev.name();
    match ev {
        TraceEvent::FastRetransmit => format!(
            r#"<circle class="{class}" cx="{x:.2}" cy="{y:.2}" r="3" fill="none" stroke="{color}"/>"#
        ),
        TraceEvent::Rto => format!(
            r#"<path class="{class}" d="M{:.2},{:.2} l6,6 m0,-6 l-6,6" stroke="{color}"/>"#,
            x - 3.0,
            y - 3.0
        ),
        TraceEvent::SpuriousDetected => format!(
            r#"<path class="{class}" d="M{x:.2},{:.2} l4,7 h-8 z" fill="{color}"/>"#,
            y - 4.0
        ),
        TraceEvent::Restore => format!(
            r#"<rect class="{class}" x="{:.2}" y="{:.2}" width="6" height="6" fill="none" stroke="{color}"/>"#,
            x - 3.0,
            y - 3.0
        ),
        TraceEvent::Sample => String::new(),
    }
}

pub fn emit_plot(records: &[TraceRecord], path: impl AsRef<Path>) -> Result<(), OutputError> {
    if records.is_empty() {
        return Err(OutputError::EmptyTrace);
    }
    let path = path.as_ref();
    std::fs::write(path, render_svg(records)).map_err(|source| OutputError::Io {
        path: path.to_path_buf(),
        source,
    })
}
