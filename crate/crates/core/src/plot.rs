//! Minimal SVG heatmaps and bar charts.

use std::fmt::Write;

use nalgebra::DMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Palette {
    /// White to dark blue.
    Sequential,
    /// Blue through white to red, centered on zero.
    Diverging,
}

fn lerp(a: u8, b: u8, t: f64) -> u8 {
    (a as f64 + (b as f64 - a as f64) * t).round() as u8
}

fn color(value: f64, lo: f64, hi: f64, palette: Palette) -> String {
    if !value.is_finite() {
        return "#cccccc".into();
    }
    let t = if hi > lo {
        ((value - lo) / (hi - lo)).clamp(0.0, 1.0)
    } else {
        0.5
    };
    let (r, g, b) = match palette {
        Palette::Sequential => (lerp(247, 8, t), lerp(251, 48, t), lerp(255, 107, t)),
        Palette::Diverging if t < 0.5 => {
            let u = t / 0.5;
            (lerp(33, 247, u), lerp(102, 247, u), lerp(172, 247, u))
        }
        Palette::Diverging => {
            let u = (t - 0.5) / 0.5;
            (lerp(247, 178, u), lerp(247, 24, u), lerp(247, 43, u))
        }
    };
    format!("#{r:02x}{g:02x}{b:02x}")
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Grid of colored cells with row and column labels. Cells show their value
/// when the grid is small.
pub fn heatmap_svg(
    title: &str,
    row_labels: &[String],
    col_labels: &[String],
    values: &DMatrix<f64>,
    range: (f64, f64),
    palette: Palette,
) -> String {
    let (rows, cols) = values.shape();
    let cell = if rows * cols > 400 { 6.0 } else { 36.0 };
    let left = 110.0;
    let top = 40.0;
    let width = left + cell * cols as f64 + 20.0;
    let height = top + cell * rows as f64 + 60.0;
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width:.0}" height="{height:.0}" font-family="sans-serif" font-size="10">"#
    );
    let _ = writeln!(
        s,
        r#"<text x="{left:.0}" y="20" font-size="13">{}</text>"#,
        escape(title)
    );
    for i in 0..rows {
        let y = top + cell * i as f64;
        if cell >= 10.0 || i % 10 == 0 {
            let label = row_labels.get(i).map_or(String::new(), |l| escape(l));
            let _ = writeln!(
                s,
                r#"<text x="{:.1}" y="{:.1}" text-anchor="end">{label}</text>"#,
                left - 4.0,
                y + cell * 0.5 + 3.0
            );
        }
        for j in 0..cols {
            let x = left + cell * j as f64;
            let v = values[(i, j)];
            let _ = writeln!(
                s,
                r#"<rect x="{x:.1}" y="{y:.1}" width="{cell:.1}" height="{cell:.1}" fill="{}"><title>{v:.4}</title></rect>"#,
                color(v, range.0, range.1, palette)
            );
            if cell >= 30.0 && v.is_finite() {
                let _ = writeln!(
                    s,
                    r#"<text x="{:.1}" y="{:.1}" text-anchor="middle" font-size="9">{v:.2}</text>"#,
                    x + cell * 0.5,
                    y + cell * 0.5 + 3.0
                );
            }
        }
    }
    let base = top + cell * rows as f64 + 12.0;
    for (j, l) in col_labels.iter().enumerate() {
        let x = left + cell * (j as f64 + 0.5);
        let _ = writeln!(
            s,
            r#"<text x="{x:.1}" y="{base:.1}" text-anchor="end" transform="rotate(-45 {x:.1} {base:.1})">{}</text>"#,
            escape(l)
        );
    }
    s.push_str("</svg>\n");
    s
}

/// Vertical bars with optional ± error whiskers, on a 0..1 axis.
pub fn bar_chart_svg(title: &str, labels: &[String], values: &[f64], errors: &[Option<f64>]) -> String {
    let bar = 60.0;
    let gap = 30.0;
    let left = 50.0;
    let top = 40.0;
    let plot_h = 200.0;
    let width = left + (bar + gap) * values.len() as f64 + gap;
    let height = top + plot_h + 40.0;
    let y_of = |v: f64| top + plot_h * (1.0 - v.clamp(0.0, 1.0));
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width:.0}" height="{height:.0}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(
        s,
        r#"<text x="{left:.0}" y="20" font-size="13">{}</text>"#,
        escape(title)
    );
    for tick in [0.0, 0.25, 0.5, 0.75, 1.0] {
        let y = y_of(tick);
        let _ = writeln!(
            s,
            r##"<line x1="{left:.0}" x2="{:.0}" y1="{y:.1}" y2="{y:.1}" stroke="#dddddd"/><text x="{:.0}" y="{:.1}" text-anchor="end">{tick:.2}</text>"##,
            width - gap,
            left - 4.0,
            y + 4.0
        );
    }
    for (i, v) in values.iter().enumerate() {
        let x = left + gap + (bar + gap) * i as f64;
        let y = y_of(*v);
        let _ = writeln!(
            s,
            r##"<rect x="{x:.1}" y="{y:.1}" width="{bar:.0}" height="{:.1}" fill="#4a78b0"><title>{v:.4}</title></rect>"##,
            top + plot_h - y
        );
        if let Some(Some(e)) = errors.get(i) {
            let cx = x + bar * 0.5;
            let _ = writeln!(
                s,
                r#"<line x1="{cx:.1}" x2="{cx:.1}" y1="{:.1}" y2="{:.1}" stroke="black"/>"#,
                y_of(v + e),
                y_of(v - e)
            );
        }
        let label = labels.get(i).map_or(String::new(), |l| escape(l));
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{label}</text>"#,
            x + bar * 0.5,
            top + plot_h + 16.0
        );
    }
    s.push_str("</svg>\n");
    s
}
