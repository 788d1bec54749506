//! Chart descriptions and a minimal static SVG rendering.
//!
//! The focal line is drawn in a saturated color with a thicker stroke;
//! context lines are gray and dashed.

use std::fmt::Write;

use chrono::NaiveDate;
use guardrail_core::GuardrailSet;
use serde::{Deserialize, Serialize};

use crate::dataset::{TimeSeriesDataset, TransformKind};
use crate::engine::{EngineError, Result};

pub const VIEW_WIDTH: f64 = 720.0;
pub const VIEW_HEIGHT: f64 = 405.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FocalSeries {
    pub item_id: String,
    pub display_name: String,
    pub values: Vec<f64>,
    pub color_role: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Stroke {
    pub color: String,
    pub width: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dash: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChartStyle {
    pub focal: Stroke,
    pub context: Stroke,
}

impl Default for ChartStyle {
    fn default() -> Self {
        Self {
            focal: Stroke { color: "#d6336c".into(), width: 2.5, dash: None },
            context: Stroke { color: "#9e9e9e".into(), width: 1.25, dash: Some("5 4".into()) },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Axes {
    pub x: Vec<NaiveDate>,
    pub y_label: String,
    pub y_units: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChartSpec {
    pub dataset_id: String,
    pub focal: FocalSeries,
    /// Absent for the focal-only control chart.
    pub guardrails: Option<GuardrailSet>,
    pub style: ChartStyle,
    pub axes: Axes,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub caption: Option<String>,
}

fn y_axis(ds: &TimeSeriesDataset) -> (String, String) {
    if ds.has_applied(TransformKind::PercentChangeFromStart) {
        ("Change since start".into(), "%".into())
    } else if ds.has_applied(TransformKind::PerMillion) {
        ("Value".into(), "per million people".into())
    } else {
        ("Value".into(), String::new())
    }
}

impl ChartSpec {
    pub fn new(ds: &TimeSeriesDataset, focal: &str, guardrails: Option<GuardrailSet>) -> Result<Self> {
        let item = ds
            .item(focal)
            .ok_or_else(|| EngineError::not_found(format!("unknown item `{focal}` in dataset `{}`", ds.dataset_id)))?;
        let (y_label, y_units) = y_axis(ds);
        let caption =
            guardrails.as_ref().map(|g| format!("{} with {} context", item.display_name, g.strategy.kind.as_str()));
        Ok(Self {
            dataset_id: ds.dataset_id.clone(),
            focal: FocalSeries {
                item_id: item.item_id.clone(),
                display_name: item.display_name.clone(),
                values: item.values.clone(),
                color_role: "focal".into(),
            },
            guardrails,
            style: ChartStyle::default(),
            axes: Axes { x: ds.timesteps.clone(), y_label, y_units },
            caption,
        })
    }
}

fn escape(text: &str) -> String {
    text.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

const LEFT: f64 = 56.0;
const RIGHT: f64 = 120.0;
const TOP: f64 = 24.0;
const BOTTOM: f64 = 36.0;

struct Scale {
    lo: f64,
    hi: f64,
    steps: usize,
}

impl Scale {
    fn x(&self, t: usize) -> f64 {
        let width = VIEW_WIDTH - LEFT - RIGHT;
        LEFT + if self.steps <= 1 { 0.0 } else { width * t as f64 / (self.steps - 1) as f64 }
    }

    fn y(&self, v: f64) -> f64 {
        let height = VIEW_HEIGHT - TOP - BOTTOM;
        let span = if self.hi > self.lo { self.hi - self.lo } else { 1.0 };
        TOP + height * (1.0 - (v - self.lo) / span)
    }

    fn path(&self, values: &[f64]) -> String {
        let mut d = String::new();
        for (t, &v) in values.iter().enumerate() {
            let _ = write!(d, "{}{:.2},{:.2}", if t == 0 { "M" } else { " L" }, self.x(t), self.y(v));
        }
        d
    }
}

fn stroke_attrs(stroke: &Stroke) -> String {
    let mut attrs = format!(r#"fill="none" stroke="{}" stroke-width="{}""#, stroke.color, stroke.width);
    if let Some(dash) = &stroke.dash {
        let _ = write!(attrs, r#" stroke-dasharray="{dash}""#);
    }
    attrs
}

/// Static 720×405 rendering: context paths under the focal path, a text
/// label at the end of every line, and min/max axis annotations.
pub fn render_svg(chart: &ChartSpec) -> String {
    let context = chart.guardrails.as_ref().map_or(&[][..], |g| &g.context[..]);
    let all = chart.focal.values.iter().chain(context.iter().flat_map(|c| &c.values)).copied();
    let (lo, hi) = all.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
    let (lo, hi) = if lo.is_finite() { (lo, hi) } else { (0.0, 1.0) };
    let scale = Scale { lo, hi, steps: chart.axes.x.len().max(chart.focal.values.len()) };

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" viewBox="0 0 {VIEW_WIDTH} {VIEW_HEIGHT}" font-family="sans-serif" font-size="11">"#
    );
    if let Some(caption) = &chart.caption {
        let _ = writeln!(svg, r#"<title>{}</title>"#, escape(caption));
    }
    let (x0, x1) = (LEFT, VIEW_WIDTH - RIGHT);
    let (y0, y1) = (TOP, VIEW_HEIGHT - BOTTOM);
    let _ = writeln!(
        svg,
        r##"<g class="axes" stroke="#444" stroke-width="1"><line x1="{x0}" y1="{y1}" x2="{x1}" y2="{y1}"/><line x1="{x0}" y1="{y0}" x2="{x0}" y2="{y1}"/></g>"##
    );
    let units = if chart.axes.y_units.is_empty() { String::new() } else { format!(" ({})", chart.axes.y_units) };
    let _ = writeln!(
        svg,
        r#"<text class="y-label" x="12" y="{:.2}" transform="rotate(-90 12 {:.2})" text-anchor="middle">{}{}</text>"#,
        (y0 + y1) / 2.0,
        (y0 + y1) / 2.0,
        escape(&chart.axes.y_label),
        escape(&units)
    );
    for v in [lo, hi] {
        let _ = writeln!(
            svg,
            r#"<text class="y-tick" x="{:.2}" y="{:.2}" text-anchor="end">{}</text>"#,
            x0 - 4.0,
            scale.y(v) + 4.0,
            format_tick(v)
        );
    }
    if let (Some(first), Some(last)) = (chart.axes.x.first(), chart.axes.x.last()) {
        let _ = writeln!(svg, r#"<text class="x-tick" x="{x0}" y="{:.2}">{first}</text>"#, y1 + 16.0);
        let _ = writeln!(svg, r#"<text class="x-tick" x="{x1}" y="{:.2}" text-anchor="end">{last}</text>"#, y1 + 16.0);
    }

    let label = |svg: &mut String, class: &str, values: &[f64], text: &str, color: &str| {
        if let Some(&v) = values.last() {
            let _ = writeln!(
                svg,
                r#"<text class="{class}-label" x="{:.2}" y="{:.2}" fill="{color}">{}</text>"#,
                scale.x(values.len() - 1) + 6.0,
                scale.y(v) + 4.0,
                escape(text)
            );
        }
    };
    for series in context {
        let _ = writeln!(
            svg,
            r#"<path class="context" d="{}" {}/>"#,
            scale.path(&series.values),
            stroke_attrs(&chart.style.context)
        );
        label(&mut svg, "context", &series.values, &series.label, &chart.style.context.color);
    }
    let _ = writeln!(
        svg,
        r#"<path class="focal" d="{}" {}/>"#,
        scale.path(&chart.focal.values),
        stroke_attrs(&chart.style.focal)
    );
    label(&mut svg, "focal", &chart.focal.values, &chart.focal.display_name, &chart.style.focal.color);
    svg.push_str("</svg>\n");
    svg
}

fn format_tick(v: f64) -> String {
    if v.abs() >= 1000.0 {
        format!("{v:.0}")
    } else {
        format!("{v:.1}")
    }
}
