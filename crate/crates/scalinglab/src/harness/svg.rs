//! SVG rendering of error-versus-compute curves and Pareto frontiers.

use std::fmt::Write as _;

use thiserror::Error;

use crate::analysis::{
    config_summaries, pareto_frontier, ConfigSummary, ExperimentGrid, ParetoPoint,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PlotKind {
    ErrorVsFlops,
    Frontier,
}

impl std::str::FromStr for PlotKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "error_vs_flops" => Ok(PlotKind::ErrorVsFlops),
            "frontier" => Ok(PlotKind::Frontier),
            other => Err(format!(
                "unknown plot kind `{other}` (expected error_vs_flops or frontier)"
            )),
        }
    }
}

#[derive(Debug, Error)]
pub enum PlotError {
    #[error("grid has no rows")]
    EmptyGrid,
    #[error("all points share one FLOPs value; log axis is degenerate")]
    DegenerateAxis,
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

const WIDTH: f64 = 860.0;
const HEIGHT: f64 = 560.0;
const MARGIN_LEFT: f64 = 70.0;
const MARGIN_RIGHT: f64 = 220.0;
const MARGIN_TOP: f64 = 30.0;
const MARGIN_BOTTOM: f64 = 50.0;
// Zero error cannot sit on a log axis; clamp to a visible floor.
const ERROR_FLOOR: f64 = 1e-4;

const PALETTE: [&str; 8] = [
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#17becf",
];

fn escape(text: &str) -> String {
    text.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
}

struct LogAxes {
    x_min: f64,
    x_max: f64,
    y_min: f64,
    y_max: f64,
}

impl LogAxes {
    fn x(&self, flops: f64) -> f64 {
        let t = (flops.log10() - self.x_min) / (self.x_max - self.x_min);
        MARGIN_LEFT + t * (WIDTH - MARGIN_LEFT - MARGIN_RIGHT)
    }

    fn y(&self, error: f64) -> f64 {
        let t = (error.max(ERROR_FLOOR).log10() - self.y_min) / (self.y_max - self.y_min);
        HEIGHT - MARGIN_BOTTOM - t * (HEIGHT - MARGIN_TOP - MARGIN_BOTTOM)
    }
}

/// Render the grid as an SVG document string.
///
/// Both axes are log10. One polyline per (model size, strategy) series;
/// the frontier kind overlays the non-dominated points.
pub fn emit_plot(grid: &ExperimentGrid, kind: PlotKind) -> Result<String, PlotError> {
    if grid.rows.is_empty() {
        return Err(PlotError::EmptyGrid);
    }
    let summaries = config_summaries(grid);
    let flops_values: Vec<f64> = summaries.iter().map(|s| s.mean_flops).collect();
    let x_lo = flops_values.iter().cloned().fold(f64::INFINITY, f64::min);
    let x_hi = flops_values
        .iter()
        .cloned()
        .fold(f64::NEG_INFINITY, f64::max);
    if x_lo <= 0.0 || x_lo == x_hi {
        return Err(PlotError::DegenerateAxis);
    }
    let errors: Vec<f64> = summaries
        .iter()
        .map(|s| s.mean_error.max(ERROR_FLOOR))
        .collect();
    let mut y_lo = errors.iter().cloned().fold(f64::INFINITY, f64::min).log10();
    let mut y_hi = errors
        .iter()
        .cloned()
        .fold(f64::NEG_INFINITY, f64::max)
        .log10();
    if y_lo == y_hi {
        y_lo -= 0.5;
        y_hi += 0.5;
    }
    let axes = LogAxes {
        x_min: x_lo.log10(),
        x_max: x_hi.log10(),
        y_min: y_lo,
        y_max: y_hi,
    };

    // Series keyed by (model size, strategy), points ordered by FLOPs.
    let mut series: Vec<((u64, String), Vec<&ConfigSummary>)> = Vec::new();
    for summary in &summaries {
        let key = (summary.key.model_size, summary.key.strategy.clone());
        match series.iter_mut().find(|(k, _)| *k == key) {
            Some((_, points)) => points.push(summary),
            None => series.push((key, vec![summary])),
        }
    }
    for (_, points) in series.iter_mut() {
        points.sort_by(|a, b| a.mean_flops.total_cmp(&b.mean_flops));
    }

    let mut svg = String::new();
    let _ = writeln!(svg, r#"<?xml version="1.0" encoding="UTF-8"?>"#);
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">"#
    );
    let _ = writeln!(
        svg,
        r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#
    );

    // Axis frame and decade ticks.
    let x0 = MARGIN_LEFT;
    let x1 = WIDTH - MARGIN_RIGHT;
    let y0 = HEIGHT - MARGIN_BOTTOM;
    let y1 = MARGIN_TOP;
    let _ = writeln!(
        svg,
        r#"<line x1="{x0}" y1="{y0}" x2="{x1}" y2="{y0}" stroke="black"/><line x1="{x0}" y1="{y0}" x2="{x0}" y2="{y1}" stroke="black"/>"#
    );
    let mut decade = axes.x_min.ceil() as i64;
    while (decade as f64) <= axes.x_max {
        let x = axes.x(10f64.powi(decade as i32));
        let _ = writeln!(
            svg,
            r##"<line x1="{x:.2}" y1="{y0}" x2="{x:.2}" y2="{}" stroke="#dddddd"/><text x="{x:.2}" y="{}" font-size="11" text-anchor="middle">1e{decade}</text>"##,
            y1,
            y0 + 16.0
        );
        decade += 1;
    }
    let mut decade = axes.y_min.ceil() as i64;
    while (decade as f64) <= axes.y_max {
        let y = axes.y(10f64.powi(decade as i32));
        let _ = writeln!(
            svg,
            r##"<line x1="{x0}" y1="{y:.2}" x2="{x1}" y2="{y:.2}" stroke="#dddddd"/><text x="{}" y="{y:.2}" font-size="11" text-anchor="end">1e{decade}</text>"##,
            x0 - 6.0
        );
        decade += 1;
    }
    let _ = writeln!(
        svg,
        r#"<text x="{:.2}" y="{:.2}" font-size="12" text-anchor="middle">FLOPs (log10)</text>"#,
        (x0 + x1) / 2.0,
        HEIGHT - 12.0
    );
    let _ = writeln!(
        svg,
        r#"<text x="16" y="{:.2}" font-size="12" text-anchor="middle" transform="rotate(-90 16 {:.2})">error rate (log10)</text>"#,
        (y0 + y1) / 2.0,
        (y0 + y1) / 2.0
    );

    for (index, ((model_size, strategy), points)) in series.iter().enumerate() {
        let color = PALETTE[index % PALETTE.len()];
        let coords: Vec<String> = points
            .iter()
            .map(|p| format!("{:.2},{:.2}", axes.x(p.mean_flops), axes.y(p.mean_error)))
            .collect();
        let _ = writeln!(
            svg,
            r#"<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{}"/>"#,
            coords.join(" ")
        );
        for p in points {
            let _ = writeln!(
                svg,
                r#"<circle cx="{:.2}" cy="{:.2}" r="3" fill="{color}"/>"#,
                axes.x(p.mean_flops),
                axes.y(p.mean_error)
            );
        }
        let legend_y = MARGIN_TOP + 16.0 * index as f64;
        let _ = writeln!(
            svg,
            r#"<text x="{:.2}" y="{legend_y:.2}" font-size="12" fill="{color}">{} @ {}</text>"#,
            x1 + 12.0,
            escape(strategy),
            model_size
        );
    }

    if kind == PlotKind::Frontier {
        let points: Vec<ParetoPoint> = summaries
            .iter()
            .map(|s| ParetoPoint {
                flops: s.mean_flops,
                error: s.mean_error.max(ERROR_FLOOR),
                label: s.key.to_string(),
            })
            .collect();
        let frontier = pareto_frontier(&points).expect("non-empty summaries");
        let coords: Vec<String> = frontier
            .iter()
            .map(|p| format!("{:.2},{:.2}", axes.x(p.flops), axes.y(p.error)))
            .collect();
        let _ = writeln!(
            svg,
            r#"<polyline fill="none" stroke="black" stroke-width="1.2" stroke-dasharray="5,4" points="{}"/>"#,
            coords.join(" ")
        );
        for p in &frontier {
            let _ = writeln!(
                svg,
                r#"<circle cx="{:.2}" cy="{:.2}" r="5.5" fill="none" stroke="black" stroke-width="1.5"/>"#,
                axes.x(p.flops),
                axes.y(p.error)
            );
        }
    }
    svg.push_str("</svg>\n");
    Ok(svg)
}

pub fn write_plot(
    grid: &ExperimentGrid,
    kind: PlotKind,
    path: &std::path::Path,
) -> Result<(), PlotError> {
    std::fs::write(path, emit_plot(grid, kind)?)?;
    Ok(())
}
