//! Deterministic SVG renderings of study results.
//!
//! Three figure styles cover the usual presentation: an outcome-path
//! comparison (treated solid, synthetic dashed), a placebo "spaghetti" gap
//! plot (treated emphasized over light placebo strokes), and a ratio bar
//! chart. Everything is emitted as standalone SVG text with no external
//! assets, scripts, or fonts beyond generic families, and identical inputs
//! always produce byte-identical documents — the files are meant to be
//! committed and diffed.

use thiserror::Error;

/// Errors from the SVG renderers.
#[derive(Debug, Error, PartialEq, Eq)]
pub enum SvgError {
    /// No series (or a series without points) was provided.
    #[error("nothing to plot: empty series set or a series without points")]
    EmptySeries,
    /// A coordinate was NaN or infinite where a finite value is required.
    #[error("series '{label}' contains a non-finite coordinate")]
    NonFinitePoint { label: String },
}

/// Visual role of a series; controls stroke style and legend treatment.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SeriesKind {
    /// The unit under study: solid, heavy, dark stroke.
    Treated,
    /// Its synthetic counterpart: dashed, accented stroke.
    Synthetic,
    /// Background comparison runs: light, thin strokes.
    Placebo,
}

impl SeriesKind {
    fn class(self) -> &'static str {
        match self {
            SeriesKind::Treated => "treated",
            SeriesKind::Synthetic => "synthetic",
            SeriesKind::Placebo => "placebo",
        }
    }

    fn stroke(self) -> &'static str {
        match self {
            SeriesKind::Treated => "#1a1a1a",
            SeriesKind::Synthetic => "#d62728",
            SeriesKind::Placebo => "#b8cfe0",
        }
    }

    fn stroke_width(self) -> &'static str {
        match self {
            SeriesKind::Treated => "2.5",
            SeriesKind::Synthetic => "2",
            SeriesKind::Placebo => "1",
        }
    }

    fn dash(self) -> Option<&'static str> {
        match self {
            SeriesKind::Synthetic => Some("6 3"),
            _ => None,
        }
    }
}

/// One line in a line plot.
#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    /// Legend / tooltip label.
    pub label: String,
    /// (x, y) data points in drawing order.
    pub points: Vec<(f64, f64)>,
    /// Visual role.
    pub kind: SeriesKind,
}

/// Layout and annotation options for line plots.
#[derive(Debug, Clone, PartialEq)]
pub struct PlotOptions {
    pub title: String,
    pub width: u32,
    pub height: u32,
    /// Draw a dashed vertical rule at this x (e.g. the intervention time).
    pub vline_x: Option<f64>,
    /// Draw a thin horizontal rule at this y (e.g. zero for gap plots).
    pub hline_y: Option<f64>,
}

impl Default for PlotOptions {
    fn default() -> Self {
        PlotOptions {
            title: String::new(),
            width: 840,
            height: 520,
            vline_x: None,
            hline_y: None,
        }
    }
}

/// Layout options for bar charts.
#[derive(Debug, Clone, PartialEq)]
pub struct BarOptions {
    pub title: String,
    pub width: u32,
    pub height: u32,
    /// Bar drawn with the emphasis fill (e.g. the treated unit).
    pub highlight: Option<String>,
}

impl Default for BarOptions {
    fn default() -> Self {
        BarOptions {
            title: String::new(),
            width: 840,
            height: 520,
            highlight: None,
        }
    }
}

fn escape_xml(raw: &str) -> String {
    let mut out = String::with_capacity(raw.len());
    for c in raw.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\'' => out.push_str("&apos;"),
            _ => out.push(c),
        }
    }
    out
}

/// Short decimal form for tick and bar labels: round to 4 decimal places
/// and let the float display itself (no trailing zeros).
fn fmt_num(v: f64) -> String {
    let r = (v * 1e4).round() / 1e4;
    if r == 0.0 {
        "0".to_string() // avoid "-0"
    } else {
        format!("{r}")
    }
}

/// Pixel coordinates are emitted with two decimals.
fn px(v: f64) -> String {
    format!("{v:.2}")
}

struct Frame {
    left: f64,
    top: f64,
    plot_w: f64,
    plot_h: f64,
    x_min: f64,
    x_span: f64,
    y_min: f64,
    y_span: f64,
}

impl Frame {
    fn new(width: u32, height: u32, xs: (f64, f64), ys: (f64, f64)) -> Frame {
        let (mut x_min, mut x_max) = xs;
        let (mut y_min, mut y_max) = ys;
        // Degenerate extents still need a non-zero span to map through.
        if x_max - x_min <= 0.0 {
            x_min -= 1.0;
            x_max += 1.0;
        }
        if y_max - y_min <= 0.0 {
            y_min -= 1.0;
            y_max += 1.0;
        } else {
            // Breathing room so extreme points do not sit on the frame.
            let pad = (y_max - y_min) * 0.05;
            y_min -= pad;
            y_max += pad;
        }
        let left = 64.0;
        let top = 46.0;
        Frame {
            left,
            top,
            plot_w: width as f64 - left - 24.0,
            plot_h: height as f64 - top - 56.0,
            x_min,
            x_span: x_max - x_min,
            y_min,
            y_span: y_max - y_min,
        }
    }

    fn x(&self, v: f64) -> f64 {
        self.left + (v - self.x_min) / self.x_span * self.plot_w
    }

    fn y(&self, v: f64) -> f64 {
        self.top + (1.0 - (v - self.y_min) / self.y_span) * self.plot_h
    }

    fn bottom(&self) -> f64 {
        self.top + self.plot_h
    }

    fn right(&self) -> f64 {
        self.left + self.plot_w
    }
}

fn document_open(width: u32, height: u32, title: &str) -> String {
    let mut out = String::new();
    out.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{width}\" height=\"{height}\" \
         viewBox=\"0 0 {width} {height}\" font-family=\"sans-serif\">\n"
    ));
    out.push_str(&format!(
        "  <rect x=\"0\" y=\"0\" width=\"{width}\" height=\"{height}\" fill=\"#ffffff\"/>\n"
    ));
    if !title.is_empty() {
        out.push_str(&format!(
            "  <text class=\"title\" x=\"{}\" y=\"24\" font-size=\"16\" text-anchor=\"middle\" \
             fill=\"#1a1a1a\">{}</text>\n",
            px(width as f64 / 2.0),
            escape_xml(title)
        ));
    }
    out
}

fn axes_with_ticks(out: &mut String, frame: &Frame) {
    out.push_str(&format!(
        "  <line class=\"axis\" x1=\"{}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"#444444\" stroke-width=\"1\"/>\n",
        px(frame.left),
        px(frame.bottom()),
        px(frame.right()),
        px(frame.bottom())
    ));
    out.push_str(&format!(
        "  <line class=\"axis\" x1=\"{}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"#444444\" stroke-width=\"1\"/>\n",
        px(frame.left),
        px(frame.top),
        px(frame.left),
        px(frame.bottom())
    ));
    for i in 0..5 {
        let frac = i as f64 / 4.0;
        let xv = frame.x_min + frac * frame.x_span;
        let xp = frame.x(xv);
        out.push_str(&format!(
            "  <line class=\"tick\" x1=\"{}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"#444444\" stroke-width=\"1\"/>\n",
            px(xp),
            px(frame.bottom()),
            px(xp),
            px(frame.bottom() + 5.0)
        ));
        out.push_str(&format!(
            "  <text class=\"tick-label\" x=\"{}\" y=\"{}\" font-size=\"11\" text-anchor=\"middle\" fill=\"#444444\">{}</text>\n",
            px(xp),
            px(frame.bottom() + 18.0),
            fmt_num(xv)
        ));
        let yv = frame.y_min + frac * frame.y_span;
        let yp = frame.y(yv);
        out.push_str(&format!(
            "  <line class=\"tick\" x1=\"{}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"#444444\" stroke-width=\"1\"/>\n",
            px(frame.left - 5.0),
            px(yp),
            px(frame.left),
            px(yp)
        ));
        out.push_str(&format!(
            "  <text class=\"tick-label\" x=\"{}\" y=\"{}\" font-size=\"11\" text-anchor=\"end\" fill=\"#444444\">{}</text>\n",
            px(frame.left - 8.0),
            px(yp + 4.0),
            fmt_num(yv)
        ));
    }
}

/// Render a line plot.
///
/// Fails with [`SvgError::EmptySeries`] when `series` is empty or any
/// series has no points, and with [`SvgError::NonFinitePoint`] on NaN or
/// infinite coordinates. Output is a standalone SVG document whose bytes
/// depend only on the arguments.
pub fn emit_svg(series: &[Series], opts: &PlotOptions) -> Result<String, SvgError> {
    if series.is_empty() || series.iter().any(|s| s.points.is_empty()) {
        return Err(SvgError::EmptySeries);
    }
    for s in series {
        if s.points.iter().any(|(x, y)| !x.is_finite() || !y.is_finite()) {
            return Err(SvgError::NonFinitePoint {
                label: s.label.clone(),
            });
        }
    }

    let mut x_min = f64::INFINITY;
    let mut x_max = f64::NEG_INFINITY;
    let mut y_min = f64::INFINITY;
    let mut y_max = f64::NEG_INFINITY;
    for s in series {
        for &(x, y) in &s.points {
            x_min = x_min.min(x);
            x_max = x_max.max(x);
            y_min = y_min.min(y);
            y_max = y_max.max(y);
        }
    }
    if let Some(v) = opts.vline_x {
        x_min = x_min.min(v);
        x_max = x_max.max(v);
    }
    if let Some(h) = opts.hline_y {
        y_min = y_min.min(h);
        y_max = y_max.max(h);
    }
    let frame = Frame::new(opts.width, opts.height, (x_min, x_max), (y_min, y_max));

    let mut out = document_open(opts.width, opts.height, &opts.title);
    axes_with_ticks(&mut out, &frame);

    if let Some(h) = opts.hline_y {
        out.push_str(&format!(
            "  <line class=\"reference\" x1=\"{}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"#888888\" stroke-width=\"1\"/>\n",
            px(frame.left),
            px(frame.y(h)),
            px(frame.right()),
            px(frame.y(h))
        ));
    }
    if let Some(v) = opts.vline_x {
        out.push_str(&format!(
            "  <line class=\"intervention\" x1=\"{}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"#666666\" stroke-width=\"1\" stroke-dasharray=\"4 3\"/>\n",
            px(frame.x(v)),
            px(frame.top),
            px(frame.x(v)),
            px(frame.bottom())
        ));
    }

    // Placebos first so emphasized strokes draw on top of the spaghetti.
    let draw_order = series
        .iter()
        .filter(|s| s.kind == SeriesKind::Placebo)
        .chain(series.iter().filter(|s| s.kind != SeriesKind::Placebo));
    for s in draw_order {
        let points: Vec<String> = s
            .points
            .iter()
            .map(|&(x, y)| format!("{},{}", px(frame.x(x)), px(frame.y(y))))
            .collect();
        let dash = s
            .kind
            .dash()
            .map(|d| format!(" stroke-dasharray=\"{d}\""))
            .unwrap_or_default();
        out.push_str(&format!(
            "  <polyline class=\"{}\" data-label=\"{}\" fill=\"none\" stroke=\"{}\" stroke-width=\"{}\"{} points=\"{}\"/>\n",
            s.kind.class(),
            escape_xml(&s.label),
            s.kind.stroke(),
            s.kind.stroke_width(),
            dash,
            points.join(" ")
        ));
    }

    // Legend: one entry per emphasized series, one summary for placebos.
    let mut legend: Vec<(String, SeriesKind)> = series
        .iter()
        .filter(|s| s.kind != SeriesKind::Placebo)
        .map(|s| (s.label.clone(), s.kind))
        .collect();
    let placebo_count = series
        .iter()
        .filter(|s| s.kind == SeriesKind::Placebo)
        .count();
    if placebo_count > 0 {
        legend.push((format!("{placebo_count} placebo runs"), SeriesKind::Placebo));
    }
    for (i, (label, kind)) in legend.iter().enumerate() {
        let y = frame.top + 14.0 + i as f64 * 18.0;
        let x0 = frame.right() - 170.0;
        let dash = kind
            .dash()
            .map(|d| format!(" stroke-dasharray=\"{d}\""))
            .unwrap_or_default();
        out.push_str(&format!(
            "  <line class=\"legend-sample\" x1=\"{}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"{}\" stroke-width=\"{}\"{}/>\n",
            px(x0),
            px(y - 4.0),
            px(x0 + 26.0),
            px(y - 4.0),
            kind.stroke(),
            kind.stroke_width(),
            dash
        ));
        out.push_str(&format!(
            "  <text class=\"legend-label\" x=\"{}\" y=\"{}\" font-size=\"12\" fill=\"#1a1a1a\">{}</text>\n",
            px(x0 + 32.0),
            px(y),
            escape_xml(label)
        ));
    }

    out.push_str("</svg>\n");
    Ok(out)
}

/// Render a bar chart of (label, value) pairs.
///
/// Values must be non-negative; positive infinity is allowed and is drawn
/// as a full-height bar annotated `inf` (a perfect pre-intervention fit
/// produces an infinite RMSPE ratio). NaN or negative values are rejected.
/// The bar named by `opts.highlight` gets the emphasis fill.
pub fn emit_bar_svg(bars: &[(String, f64)], opts: &BarOptions) -> Result<String, SvgError> {
    if bars.is_empty() {
        return Err(SvgError::EmptySeries);
    }
    for (label, v) in bars {
        if v.is_nan() || *v < 0.0 {
            return Err(SvgError::NonFinitePoint {
                label: label.clone(),
            });
        }
    }
    let finite_max = bars
        .iter()
        .map(|(_, v)| *v)
        .filter(|v| v.is_finite())
        .fold(0.0f64, f64::max);
    // Scale: finite bars against the largest finite value; infinite bars
    // fill the panel. An all-infinite chart still needs a positive scale.
    let scale_max = if finite_max > 0.0 { finite_max } else { 1.0 };

    let frame = Frame::new(opts.width, opts.height, (0.0, 1.0), (0.0, scale_max));
    let mut out = document_open(opts.width, opts.height, &opts.title);

    // y axis with ticks; the x axis carries one label per bar instead.
    out.push_str(&format!(
        "  <line class=\"axis\" x1=\"{}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"#444444\" stroke-width=\"1\"/>\n",
        px(frame.left),
        px(frame.bottom()),
        px(frame.right()),
        px(frame.bottom())
    ));
    out.push_str(&format!(
        "  <line class=\"axis\" x1=\"{}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"#444444\" stroke-width=\"1\"/>\n",
        px(frame.left),
        px(frame.top),
        px(frame.left),
        px(frame.bottom())
    ));
    for i in 0..5 {
        let frac = i as f64 / 4.0;
        let yv = frame.y_min + frac * frame.y_span;
        let yp = frame.y(yv);
        out.push_str(&format!(
            "  <text class=\"tick-label\" x=\"{}\" y=\"{}\" font-size=\"11\" text-anchor=\"end\" fill=\"#444444\">{}</text>\n",
            px(frame.left - 8.0),
            px(yp + 4.0),
            fmt_num(yv)
        ));
    }

    let n = bars.len() as f64;
    let slot = frame.plot_w / n;
    let bar_w = slot * 0.7;
    for (i, (label, value)) in bars.iter().enumerate() {
        let x = frame.left + slot * (i as f64 + 0.15);
        let (top_y, text) = if value.is_finite() {
            (frame.y(*value), fmt_num(*value))
        } else {
            (frame.top, "inf".to_string())
        };
        let fill = if opts.highlight.as_deref() == Some(label.as_str()) {
            "#d62728"
        } else {
            "#7f7f7f"
        };
        out.push_str(&format!(
            "  <rect class=\"bar\" data-label=\"{}\" x=\"{}\" y=\"{}\" width=\"{}\" height=\"{}\" fill=\"{}\"/>\n",
            escape_xml(label),
            px(x),
            px(top_y),
            px(bar_w),
            px(frame.bottom() - top_y),
            fill
        ));
        out.push_str(&format!(
            "  <text class=\"bar-value\" x=\"{}\" y=\"{}\" font-size=\"11\" text-anchor=\"middle\" fill=\"#1a1a1a\">{}</text>\n",
            px(x + bar_w / 2.0),
            px(top_y - 5.0),
            text
        ));
        out.push_str(&format!(
            "  <text class=\"bar-label\" x=\"{}\" y=\"{}\" font-size=\"10\" text-anchor=\"middle\" fill=\"#444444\">{}</text>\n",
            px(x + bar_w / 2.0),
            px(frame.bottom() + 16.0),
            escape_xml(label)
        ));
    }

    out.push_str("</svg>\n");
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn flat(label: &str, kind: SeriesKind) -> Series {
        Series {
            label: label.to_string(),
            points: (0..10).map(|i| (2000.0 + i as f64, 5.0)).collect(),
            kind,
        }
    }

    fn count(haystack: &str, needle: &str) -> usize {
        haystack.matches(needle).count()
    }

    #[test]
    fn single_flat_series_emits_exactly_one_polyline() {
        let svg = emit_svg(&[flat("only", SeriesKind::Treated)], &PlotOptions::default()).unwrap();
        assert_eq!(count(&svg, "<polyline"), 1);
        assert!(svg.starts_with("<svg xmlns=\"http://www.w3.org/2000/svg\""));
        assert!(svg.trim_end().ends_with("</svg>"));
    }

    #[test]
    fn identical_inputs_produce_identical_bytes() {
        let series = vec![
            flat("a", SeriesKind::Treated),
            flat("b", SeriesKind::Synthetic),
        ];
        let opts = PlotOptions {
            title: "comparison".into(),
            vline_x: Some(2004.0),
            ..PlotOptions::default()
        };
        assert_eq!(
            emit_svg(&series, &opts).unwrap(),
            emit_svg(&series, &opts).unwrap()
        );
        let bars = vec![("a".to_string(), 1.5), ("b".to_string(), 0.5)];
        let bopts = BarOptions::default();
        assert_eq!(
            emit_bar_svg(&bars, &bopts).unwrap(),
            emit_bar_svg(&bars, &bopts).unwrap()
        );
    }

    #[test]
    fn placebo_set_renders_one_polyline_each_with_treated_stroke_distinct() {
        let mut series = vec![flat("treated", SeriesKind::Treated)];
        for i in 0..14 {
            series.push(flat(&format!("p{i:02}"), SeriesKind::Placebo));
        }
        let svg = emit_svg(&series, &PlotOptions::default()).unwrap();
        assert_eq!(count(&svg, "<polyline"), 15);
        assert_eq!(count(&svg, "<polyline class=\"treated\""), 1);
        assert_eq!(count(&svg, "<polyline class=\"placebo\""), 14);

        // The treated stroke value must differ from every placebo stroke.
        let treated_stroke = SeriesKind::Treated.stroke();
        let placebo_stroke = SeriesKind::Placebo.stroke();
        assert_ne!(treated_stroke, placebo_stroke);
        for line in svg.lines().filter(|l| l.contains("<polyline")) {
            if line.contains("class=\"placebo\"") {
                assert!(line.contains(&format!("stroke=\"{placebo_stroke}\"")));
                assert!(!line.contains(&format!("stroke=\"{treated_stroke}\"")));
            }
        }
    }

    #[test]
    fn empty_inputs_are_rejected() {
        assert_eq!(
            emit_svg(&[], &PlotOptions::default()).unwrap_err(),
            SvgError::EmptySeries
        );
        let hollow = Series {
            label: "hollow".into(),
            points: vec![],
            kind: SeriesKind::Treated,
        };
        assert_eq!(
            emit_svg(&[hollow], &PlotOptions::default()).unwrap_err(),
            SvgError::EmptySeries
        );
        assert_eq!(
            emit_bar_svg(&[], &BarOptions::default()).unwrap_err(),
            SvgError::EmptySeries
        );
    }

    #[test]
    fn non_finite_coordinates_are_rejected() {
        let bad = Series {
            label: "nan".into(),
            points: vec![(0.0, f64::NAN)],
            kind: SeriesKind::Treated,
        };
        assert!(matches!(
            emit_svg(&[bad], &PlotOptions::default()),
            Err(SvgError::NonFinitePoint { label }) if label == "nan"
        ));
        assert!(matches!(
            emit_bar_svg(&[("x".to_string(), f64::NAN)], &BarOptions::default()),
            Err(SvgError::NonFinitePoint { .. })
        ));
        assert!(matches!(
            emit_bar_svg(&[("x".to_string(), -1.0)], &BarOptions::default()),
            Err(SvgError::NonFinitePoint { .. })
        ));
    }

    #[test]
    fn intervention_rule_and_zero_line_are_drawn_on_request() {
        let opts = PlotOptions {
            vline_x: Some(2005.0),
            hline_y: Some(0.0),
            ..PlotOptions::default()
        };
        let svg = emit_svg(&[flat("t", SeriesKind::Treated)], &opts).unwrap();
        assert_eq!(count(&svg, "class=\"intervention\""), 1);
        assert_eq!(count(&svg, "class=\"reference\""), 1);
        let bare = emit_svg(&[flat("t", SeriesKind::Treated)], &PlotOptions::default()).unwrap();
        assert_eq!(count(&bare, "class=\"intervention\""), 0);
    }

    #[test]
    fn labels_and_titles_are_xml_escaped() {
        let series = Series {
            label: "a<b&c>\"d\"".into(),
            points: vec![(0.0, 1.0), (1.0, 2.0)],
            kind: SeriesKind::Treated,
        };
        let opts = PlotOptions {
            title: "x < y & z".into(),
            ..PlotOptions::default()
        };
        let svg = emit_svg(&[series], &opts).unwrap();
        assert!(svg.contains("a&lt;b&amp;c&gt;&quot;d&quot;"));
        assert!(svg.contains("x &lt; y &amp; z"));
    }

    #[test]
    fn infinite_ratio_bars_fill_the_panel_and_say_inf() {
        let bars = vec![
            ("exact-fit".to_string(), f64::INFINITY),
            ("ordinary".to_string(), 2.33),
        ];
        let opts = BarOptions {
            highlight: Some("exact-fit".to_string()),
            ..BarOptions::default()
        };
        let svg = emit_bar_svg(&bars, &opts).unwrap();
        assert_eq!(count(&svg, "<rect class=\"bar\""), 2);
        assert!(svg.contains(">inf</text>"));
        assert!(svg.contains(">2.33</text>"));
        // Highlighted bar uses the emphasis fill exactly once.
        assert_eq!(count(&svg, "fill=\"#d62728\""), 1);
    }

    #[test]
    fn flat_and_single_point_extents_do_not_break_the_mapping() {
        // A constant series and a single-point series both have degenerate
        // extents; the mapping must stay finite.
        let single = Series {
            label: "dot".into(),
            points: vec![(3.0, 7.0)],
            kind: SeriesKind::Treated,
        };
        let svg = emit_svg(&[single], &PlotOptions::default()).unwrap();
        assert!(!svg.contains("NaN"));
        assert!(!svg.contains("inf"));
    }
}
