//! Top-down SVG overlay of the generated, estimated, and executed paths
//! around the target: the visual artifact for eyeballing a run
//! (`overlay.svg`). Byte-deterministic for fixed input.

use crate::metrics::PoseSeries;
use std::fmt::Write as _;

#[derive(Debug, thiserror::Error)]
pub enum OverlayError {
    #[error("no trajectories to draw")]
    EmptyInput,
}

const WIDTH: f64 = 800.0;
const HEIGHT: f64 = 800.0;
const MARGIN: f64 = 70.0;

struct Path<'a> {
    label: &'static str,
    color: &'static str,
    dash: Option<&'static str>,
    series: &'a PoseSeries,
}

/// Renders a standalone SVG document: one polyline per present trajectory
/// (reference, estimated, executed), a gray circle at the target, a legend,
/// and meter-spaced axis ticks.
pub fn render_overlay(
    reference: Option<&PoseSeries>,
    estimated: Option<&PoseSeries>,
    executed: Option<&PoseSeries>,
    target: [f64; 3],
) -> Result<String, OverlayError> {
    let mut paths: Vec<Path> = Vec::new();
    if let Some(series) = reference {
        paths.push(Path {
            label: "reference",
            color: "#e0a800",
            dash: None,
            series,
        });
    }
    if let Some(series) = estimated {
        paths.push(Path {
            label: "estimated",
            color: "#2f9e44",
            dash: Some("6 4"),
            series,
        });
    }
    if let Some(series) = executed {
        paths.push(Path {
            label: "executed",
            color: "#1c7ed6",
            dash: None,
            series,
        });
    }
    if paths.iter().all(|p| p.series.positions.is_empty()) {
        return Err(OverlayError::EmptyInput);
    }

    let mut min_x = target[0];
    let mut max_x = target[0];
    let mut min_y = target[1];
    let mut max_y = target[1];
    for path in &paths {
        for p in &path.series.positions {
            min_x = min_x.min(p.x);
            max_x = max_x.max(p.x);
            min_y = min_y.min(p.y);
            max_y = max_y.max(p.y);
        }
    }
    let span_x = (max_x - min_x).max(1e-6);
    let span_y = (max_y - min_y).max(1e-6);
    let pad = 0.05 * span_x.max(span_y);
    let (min_x, max_x) = (min_x - pad, max_x + pad);
    let (min_y, max_y) = (min_y - pad, max_y + pad);
    let scale = ((WIDTH - 2.0 * MARGIN) / (max_x - min_x))
        .min((HEIGHT - 2.0 * MARGIN) / (max_y - min_y));
    // World +y is up; SVG +y is down.
    let to_px = |x: f64, y: f64| -> (f64, f64) {
        (
            MARGIN + (x - min_x) * scale,
            HEIGHT - MARGIN - (y - min_y) * scale,
        )
    };

    let mut svg = String::new();
    writeln!(
        svg,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{WIDTH}\" height=\"{HEIGHT}\" \
         viewBox=\"0 0 {WIDTH} {HEIGHT}\">"
    )
    .unwrap();
    writeln!(svg, "  <rect width=\"{WIDTH}\" height=\"{HEIGHT}\" fill=\"#ffffff\"/>").unwrap();

    // Axis ticks on a 1-2-5 ladder, in meters.
    let tick = nice_step((max_x - min_x).max(max_y - min_y) / 8.0);
    writeln!(svg, "  <g font-family=\"sans-serif\" font-size=\"12\" fill=\"#555555\">").unwrap();
    let mut x = (min_x / tick).ceil() * tick;
    while x <= max_x {
        let (px, _) = to_px(x, min_y);
        writeln!(
            svg,
            "    <line x1=\"{px:.2}\" y1=\"{:.2}\" x2=\"{px:.2}\" y2=\"{:.2}\" stroke=\"#cccccc\"/>",
            MARGIN,
            HEIGHT - MARGIN
        )
        .unwrap();
        writeln!(
            svg,
            "    <text x=\"{px:.2}\" y=\"{:.2}\" text-anchor=\"middle\">{} m</text>",
            HEIGHT - MARGIN + 18.0,
            trim_float(x)
        )
        .unwrap();
        x += tick;
    }
    let mut y = (min_y / tick).ceil() * tick;
    while y <= max_y {
        let (_, py) = to_px(min_x, y);
        writeln!(
            svg,
            "    <line x1=\"{:.2}\" y1=\"{py:.2}\" x2=\"{:.2}\" y2=\"{py:.2}\" stroke=\"#cccccc\"/>",
            MARGIN,
            WIDTH - MARGIN
        )
        .unwrap();
        writeln!(
            svg,
            "    <text x=\"{:.2}\" y=\"{py:.2}\" text-anchor=\"end\">{} m</text>",
            MARGIN - 8.0,
            trim_float(y)
        )
        .unwrap();
        y += tick;
    }
    writeln!(svg, "  </g>").unwrap();

    // Target marker.
    let (tx, ty) = to_px(target[0], target[1]);
    writeln!(
        svg,
        "  <circle cx=\"{tx:.2}\" cy=\"{ty:.2}\" r=\"8\" fill=\"#9e9e9e\"/>"
    )
    .unwrap();

    for path in &paths {
        let points: Vec<String> = path
            .series
            .positions
            .iter()
            .map(|p| {
                let (px, py) = to_px(p.x, p.y);
                format!("{px:.2},{py:.2}")
            })
            .collect();
        let dash = match path.dash {
            Some(d) => format!(" stroke-dasharray=\"{d}\""),
            None => String::new(),
        };
        writeln!(
            svg,
            "  <polyline fill=\"none\" stroke=\"{}\" stroke-width=\"2\"{} points=\"{}\"/>",
            path.color,
            dash,
            points.join(" ")
        )
        .unwrap();
    }

    // Legend.
    writeln!(svg, "  <g font-family=\"sans-serif\" font-size=\"14\">").unwrap();
    for (i, path) in paths.iter().enumerate() {
        let y = MARGIN / 2.0 + 18.0 * i as f64;
        writeln!(
            svg,
            "    <line x1=\"{:.2}\" y1=\"{y:.2}\" x2=\"{:.2}\" y2=\"{y:.2}\" stroke=\"{}\" stroke-width=\"3\"/>",
            MARGIN,
            MARGIN + 30.0,
            path.color
        )
        .unwrap();
        writeln!(
            svg,
            "    <text x=\"{:.2}\" y=\"{:.2}\">{}</text>",
            MARGIN + 38.0,
            y + 5.0,
            path.label
        )
        .unwrap();
    }
    writeln!(svg, "  </g>").unwrap();
    writeln!(svg, "</svg>").unwrap();
    Ok(svg)
}

/// Rounds up to a 1-2-5 ladder step.
fn nice_step(raw: f64) -> f64 {
    let magnitude = 10f64.powf(raw.abs().max(1e-12).log10().floor());
    let normalized = raw / magnitude;
    let factor = if normalized <= 1.0 {
        1.0
    } else if normalized <= 2.0 {
        2.0
    } else if normalized <= 5.0 {
        5.0
    } else {
        10.0
    };
    factor * magnitude
}

fn trim_float(v: f64) -> String {
    let s = format!("{v:.2}");
    s.trim_end_matches('0').trim_end_matches('.').to_string()
}
