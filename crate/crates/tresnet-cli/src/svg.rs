//! Deterministic standalone SVG line charts.
//!
//! Charts are stacked panels, each with axis lines, min/max labels, a
//! legend, and one polyline per series. All coordinates are formatted with
//! fixed precision, so identical inputs produce identical bytes.

pub const PALETTE: [&str; 6] = [
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b",
];

#[derive(Debug, Clone)]
pub struct Series {
    pub name: String,
    /// Non-finite points are dropped at render time.
    pub points: Vec<(f64, f64)>,
}

impl Series {
    pub fn new(name: impl Into<String>, points: Vec<(f64, f64)>) -> Self {
        Series {
            name: name.into(),
            points,
        }
    }

    /// Builds points from y-values against their indices, skipping `None`.
    pub fn from_values(name: impl Into<String>, values: &[Option<f64>]) -> Self {
        let points = values
            .iter()
            .enumerate()
            .filter_map(|(i, v)| v.map(|y| (i as f64, y)))
            .collect();
        Series::new(name, points)
    }
}

#[derive(Debug, Clone)]
pub struct Panel {
    pub title: String,
    pub series: Vec<Series>,
}

const MARGIN_LEFT: f64 = 64.0;
const MARGIN_RIGHT: f64 = 16.0;
const MARGIN_TOP: f64 = 26.0;
const MARGIN_BOTTOM: f64 = 30.0;

fn escape(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    for ch in text.chars() {
        match ch {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\'' => out.push_str("&apos;"),
            _ => out.push(ch),
        }
    }
    out
}

fn label(value: f64) -> String {
    let mut s = format!("{value:.4}");
    while s.ends_with('0') {
        s.pop();
    }
    if s.ends_with('.') {
        s.pop();
    }
    if s == "-0" {
        s = "0".into();
    }
    s
}

fn finite_points(series: &Series) -> impl Iterator<Item = (f64, f64)> + '_ {
    series
        .points
        .iter()
        .copied()
        .filter(|(x, y)| x.is_finite() && y.is_finite())
}

/// Renders the panels stacked vertically into one standalone SVG document.
pub fn render(panels: &[Panel], width: usize, panel_height: usize) -> String {
    let total_height = panel_height * panels.len().max(1);
    let mut out = String::new();
    out.push_str("<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n");
    out.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{width}\" height=\"{total_height}\" \
         viewBox=\"0 0 {width} {total_height}\">\n"
    ));
    out.push_str(&format!(
        "<rect x=\"0\" y=\"0\" width=\"{width}\" height=\"{total_height}\" fill=\"#ffffff\"/>\n"
    ));

    for (index, panel) in panels.iter().enumerate() {
        render_panel(&mut out, panel, width as f64, panel_height as f64, index);
    }

    out.push_str("</svg>\n");
    out
}

fn render_panel(out: &mut String, panel: &Panel, width: f64, height: f64, index: usize) {
    let top = height * index as f64;
    let plot_left = MARGIN_LEFT;
    let plot_right = width - MARGIN_RIGHT;
    let plot_top = top + MARGIN_TOP;
    let plot_bottom = top + height - MARGIN_BOTTOM;

    // Shared data ranges across the panel's series.
    let mut xs: Vec<f64> = Vec::new();
    let mut ys: Vec<f64> = Vec::new();
    for s in &panel.series {
        for (x, y) in finite_points(s) {
            xs.push(x);
            ys.push(y);
        }
    }
    let (x_lo, x_hi) = range_of(&xs);
    let (mut y_lo, mut y_hi) = range_of(&ys);
    let pad = (y_hi - y_lo) * 0.05;
    y_lo -= pad;
    y_hi += pad;

    let sx = |x: f64| plot_left + (x - x_lo) / (x_hi - x_lo) * (plot_right - plot_left);
    let sy = |y: f64| plot_bottom - (y - y_lo) / (y_hi - y_lo) * (plot_bottom - plot_top);

    out.push_str(&format!(
        "<text x=\"{:.2}\" y=\"{:.2}\" font-family=\"sans-serif\" font-size=\"13\" \
         fill=\"#000000\">{}</text>\n",
        plot_left,
        top + 16.0,
        escape(&panel.title)
    ));

    // Axis lines.
    out.push_str(&format!(
        "<line x1=\"{:.2}\" y1=\"{:.2}\" x2=\"{:.2}\" y2=\"{:.2}\" stroke=\"#333333\" \
         stroke-width=\"1\"/>\n",
        plot_left, plot_bottom, plot_right, plot_bottom
    ));
    out.push_str(&format!(
        "<line x1=\"{:.2}\" y1=\"{:.2}\" x2=\"{:.2}\" y2=\"{:.2}\" stroke=\"#333333\" \
         stroke-width=\"1\"/>\n",
        plot_left, plot_top, plot_left, plot_bottom
    ));

    // Axis extent labels.
    let axis_text = |x: f64, y: f64, anchor: &str, text: &str| {
        format!(
            "<text x=\"{x:.2}\" y=\"{y:.2}\" font-family=\"sans-serif\" font-size=\"10\" \
             fill=\"#333333\" text-anchor=\"{anchor}\">{}</text>\n",
            escape(text)
        )
    };
    out.push_str(&axis_text(
        plot_left - 6.0,
        plot_top + 4.0,
        "end",
        &label(y_hi),
    ));
    out.push_str(&axis_text(
        plot_left - 6.0,
        plot_bottom,
        "end",
        &label(y_lo),
    ));
    out.push_str(&axis_text(
        plot_left,
        plot_bottom + 14.0,
        "start",
        &label(x_lo),
    ));
    out.push_str(&axis_text(
        plot_right,
        plot_bottom + 14.0,
        "end",
        &label(x_hi),
    ));

    // Legend, right-aligned along the panel header.
    let mut legend_x = plot_right;
    for (i, s) in panel.series.iter().enumerate().rev() {
        let color = PALETTE[i % PALETTE.len()];
        legend_x -= 9.0 * s.name.chars().count().max(3) as f64;
        out.push_str(&format!(
            "<text x=\"{:.2}\" y=\"{:.2}\" font-family=\"sans-serif\" font-size=\"11\" \
             fill=\"{color}\">{}</text>\n",
            legend_x,
            top + 16.0,
            escape(&s.name)
        ));
    }

    for (i, s) in panel.series.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let mut points = String::new();
        for (x, y) in finite_points(s) {
            points.push_str(&format!("{:.2},{:.2} ", sx(x), sy(y)));
        }
        if points.is_empty() {
            continue;
        }
        points.pop();
        out.push_str(&format!(
            "<polyline fill=\"none\" stroke=\"{color}\" stroke-width=\"1\" points=\"{points}\"/>\n"
        ));
    }
}

fn range_of(values: &[f64]) -> (f64, f64) {
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !lo.is_finite() || !hi.is_finite() {
        return (0.0, 1.0);
    }
    if lo == hi {
        return (lo - 0.5, hi + 0.5);
    }
    (lo, hi)
}

/// Minimal well-formedness scan for the documents this module emits: tags
/// balance, attributes are quoted, `&` only starts a known entity.
pub fn check_well_formed(xml: &str) -> Result<(), String> {
    let mut stack: Vec<String> = Vec::new();
    let mut rest = xml;
    // Skip the declaration.
    if let Some(stripped) = rest.strip_prefix("<?xml") {
        let end = stripped.find("?>").ok_or("unterminated declaration")?;
        rest = &stripped[end + 2..];
    }
    let mut chars = rest.char_indices().peekable();
    while let Some((i, ch)) = chars.next() {
        match ch {
            '<' => {
                let close = rest[i..].find('>').ok_or("unterminated tag")? + i;
                let inner = &rest[i + 1..close];
                if let Some(name) = inner.strip_prefix('/') {
                    let open = stack.pop().ok_or("closing tag without opener")?;
                    if open != name.trim() {
                        return Err(format!("tag mismatch: <{open}> closed by </{name}>"));
                    }
                } else if !inner.ends_with('/') {
                    let name = inner.split_whitespace().next().ok_or("empty tag")?;
                    stack.push(name.to_string());
                }
                check_attribute_quotes(inner)?;
                while let Some(&(j, _)) = chars.peek() {
                    if j > close {
                        break;
                    }
                    chars.next();
                }
            }
            '>' => return Err("stray '>' outside a tag".into()),
            '&' => {
                let known = ["&amp;", "&lt;", "&gt;", "&quot;", "&apos;"];
                if !known.iter().any(|e| rest[i..].starts_with(e)) {
                    return Err(format!("bare '&' at byte {i}"));
                }
            }
            _ => {}
        }
    }
    if !stack.is_empty() {
        return Err(format!("unclosed tags: {stack:?}"));
    }
    Ok(())
}

fn check_attribute_quotes(tag_inner: &str) -> Result<(), String> {
    let quotes = tag_inner.chars().filter(|&c| c == '"').count();
    if quotes % 2 != 0 {
        return Err(format!("odd quote count in <{tag_inner}>"));
    }
    Ok(())
}
