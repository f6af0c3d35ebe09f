use std::fmt::Write as _;
use std::path::Path;

use super::{IoError, LabeledMatrix};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ColorScheme {
    /// Binary when every present value is 0 or 1, sequential otherwise.
    #[default]
    Auto,
    Binary,
    /// Dark for small values; values are rescaled to the observed range,
    /// except that data inside `[0, 1]` is treated as p-values on that scale.
    Sequential,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HeatmapOptions {
    pub scheme: ColorScheme,
    /// Keep only the first `n` rows.
    pub max_rows: Option<usize>,
    /// Columns removed by label.
    pub drop_columns: Vec<String>,
    pub cell_size: u32,
    pub title: Option<String>,
}

impl Default for HeatmapOptions {
    fn default() -> Self {
        Self {
            scheme: ColorScheme::Auto,
            max_rows: None,
            drop_columns: Vec::new(),
            cell_size: 18,
            title: None,
        }
    }
}

const SIGNAL_COLOR: &str = "#b2182b";
const NO_SIGNAL_COLOR: &str = "#f7f7f7";
const MISSING_COLOR: &str = "#bdbdbd";
const LOW: (f64, f64, f64) = (8.0, 48.0, 107.0);
const HIGH: (f64, f64, f64) = (247.0, 251.0, 255.0);

fn escape(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\'' => out.push_str("&apos;"),
            c => out.push(c),
        }
    }
    out
}

fn ramp(t: f64) -> String {
    let t = t.clamp(0.0, 1.0);
    let mix = |a: f64, b: f64| (a + (b - a) * t).round() as u8;
    format!("#{:02x}{:02x}{:02x}", mix(LOW.0, HIGH.0), mix(LOW.1, HIGH.1), mix(LOW.2, HIGH.2))
}

/// Renders a labeled matrix as a standalone SVG document: one `rect` per
/// cell, row labels on the left, column labels along the bottom.
pub fn render_heatmap_svg(m: &LabeledMatrix, opts: &HeatmapOptions) -> String {
    let rows: Vec<usize> = (0..m.row_names.len()).take(opts.max_rows.unwrap_or(usize::MAX)).collect();
    let cols: Vec<usize> = (0..m.col_names.len())
        .filter(|&j| !opts.drop_columns.contains(&m.col_names[j]))
        .collect();
    let present: Vec<f64> = rows
        .iter()
        .flat_map(|&i| cols.iter().filter_map(move |&j| m.values[(i, j)]))
        .filter(|v| v.is_finite())
        .collect();
    let binary = match opts.scheme {
        ColorScheme::Binary => true,
        ColorScheme::Sequential => false,
        ColorScheme::Auto => present.iter().all(|&v| v == 0.0 || v == 1.0),
    };
    let (lo, hi) = if present.iter().all(|v| (0.0..=1.0).contains(v)) {
        (0.0, 1.0)
    } else {
        let lo = present.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = present.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        (lo, hi)
    };
    let color = |v: Option<f64>| -> String {
        match v {
            None => MISSING_COLOR.into(),
            Some(v) if v.is_nan() => MISSING_COLOR.into(),
            Some(v) if binary => (if v >= 0.5 { SIGNAL_COLOR } else { NO_SIGNAL_COLOR }).into(),
            Some(v) => ramp(if hi > lo { (v - lo) / (hi - lo) } else { 0.0 }),
        }
    };

    let cell = opts.cell_size.max(4);
    let font = (cell * 2 / 3).max(6);
    let char_w = f64::from(font) * 0.6;
    let longest = |names: &mut dyn Iterator<Item = &String>| names.map(|s| s.chars().count()).max().unwrap_or(0);
    let left = (longest(&mut rows.iter().map(|&i| &m.row_names[i])) as f64 * char_w).ceil() as u32 + 8;
    let bottom = (longest(&mut cols.iter().map(|&j| &m.col_names[j])) as f64 * char_w).ceil() as u32 + 8;
    let top = if opts.title.is_some() { font * 2 + 4 } else { 4 };
    let width = left + cell * cols.len() as u32 + 4;
    let height = top + cell * rows.len() as u32 + bottom;

    let mut s = String::new();
    let _ = writeln!(s, r#"<?xml version="1.0" encoding="UTF-8"?>"#);
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{width}" height="{height}" viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="{font}">"#
    );
    if let Some(title) = &opts.title {
        let _ = writeln!(s, r#"<text x="{left}" y="{}">{}</text>"#, font + 2, escape(title));
    }
    let _ = writeln!(s, r##"<g stroke="#ffffff" stroke-width="1">"##);
    for (r, &i) in rows.iter().enumerate() {
        for (c, &j) in cols.iter().enumerate() {
            let v = m.values[(i, j)];
            let label = v.map_or_else(|| "NA".to_string(), super::format_real);
            let _ = writeln!(
                s,
                r#"<rect x="{}" y="{}" width="{cell}" height="{cell}" fill="{}"><title>{} / {}: {}</title></rect>"#,
                left + c as u32 * cell,
                top + r as u32 * cell,
                color(v),
                escape(&m.row_names[i]),
                escape(&m.col_names[j]),
                label
            );
        }
    }
    let _ = writeln!(s, "</g>");
    for (r, &i) in rows.iter().enumerate() {
        let y = top + r as u32 * cell + cell / 2;
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{y}" text-anchor="end" dominant-baseline="middle">{}</text>"#,
            left - 4,
            escape(&m.row_names[i])
        );
    }
    let y0 = top + rows.len() as u32 * cell + 4;
    for (c, &j) in cols.iter().enumerate() {
        let x = left + c as u32 * cell + cell / 2;
        let _ = writeln!(
            s,
            r#"<text x="{x}" y="{y0}" transform="rotate(90 {x} {y0})" dominant-baseline="middle">{}</text>"#,
            escape(&m.col_names[j])
        );
    }
    s.push_str("</svg>\n");
    s
}

pub fn emit_heatmap_svg(m: &LabeledMatrix, path: impl AsRef<Path>, opts: &HeatmapOptions) -> Result<(), IoError> {
    let path = path.as_ref();
    std::fs::write(path, render_heatmap_svg(m, opts)).map_err(|e| IoError::file(path, e))
}
