//! Dependency-free SVG plots: heatmaps with a fixed colormap and line plots
//! with reference overlays. The plotted values are embedded as a CSV table
//! in the SVG metadata so figures stay diffable and self-describing.

use std::fmt::Write as _;

/// Fixed nine-stop colormap (dark blue -> green -> yellow), linearly
/// interpolated.
const COLORMAP: [(u8, u8, u8); 9] = [
    (68, 1, 84),
    (71, 44, 122),
    (59, 81, 139),
    (44, 113, 142),
    (33, 144, 141),
    (39, 173, 129),
    (92, 200, 99),
    (170, 220, 50),
    (253, 231, 37),
];

fn color_at(t: f64) -> (u8, u8, u8) {
    let t = t.clamp(0.0, 1.0) * (COLORMAP.len() - 1) as f64;
    let i = (t.floor() as usize).min(COLORMAP.len() - 2);
    let f = t - i as f64;
    let (r0, g0, b0) = COLORMAP[i];
    let (r1, g1, b1) = COLORMAP[i + 1];
    (
        (r0 as f64 + f * (r1 as f64 - r0 as f64)).round() as u8,
        (g0 as f64 + f * (g1 as f64 - g0 as f64)).round() as u8,
        (b0 as f64 + f * (b1 as f64 - b0 as f64)).round() as u8,
    )
}

fn fmt_num(v: f64) -> String {
    if v == 0.0 {
        "0".to_string()
    } else if v.abs() >= 1e4 || v.abs() < 1e-3 {
        format!("{v:.3e}")
    } else {
        format!("{v:.4}")
    }
}

/// Heatmap of `values` (row-major, `ny` rows by `nx` columns; row 0 is the
/// lowest y) over `[x0, x1] x [y0, y1]`.
pub fn heatmap(
    title: &str,
    x_range: (f64, f64),
    y_range: (f64, f64),
    nx: usize,
    ny: usize,
    values: &[f64],
) -> String {
    assert_eq!(values.len(), nx * ny);
    let vmin = values.iter().cloned().fold(f64::INFINITY, f64::min);
    let vmax = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let span = (vmax - vmin).max(f64::MIN_POSITIVE);
    let (w, h) = (560.0, 480.0);
    let (m_left, m_top, m_right, m_bottom) = (60.0, 40.0, 80.0, 40.0);
    let pw = w - m_left - m_right;
    let ph = h - m_top - m_bottom;
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}">"#
    );
    let _ = writeln!(s, "<metadata><![CDATA[");
    let _ = writeln!(s, "title,{title}");
    let _ = writeln!(s, "x0,{};x1,{};y0,{};y1,{}", x_range.0, x_range.1, y_range.0, y_range.1);
    let _ = writeln!(s, "nx,{nx};ny,{ny};min,{vmin};max,{vmax}");
    for row in 0..ny {
        let line: Vec<String> = (0..nx).map(|c| format!("{}", values[row * nx + c])).collect();
        let _ = writeln!(s, "{}", line.join(","));
    }
    let _ = writeln!(s, "]]></metadata>");
    let _ = writeln!(
        s,
        r#"<text x="{}" y="24" font-family="monospace" font-size="14">{}</text>"#,
        m_left, title
    );
    let cw = pw / nx as f64;
    let ch = ph / ny as f64;
    for row in 0..ny {
        for col in 0..nx {
            let v = values[row * nx + col];
            let (r, g, b) = color_at((v - vmin) / span);
            let x = m_left + col as f64 * cw;
            // svg y grows downward; row 0 is the lowest y value
            let y = m_top + ph - (row + 1) as f64 * ch;
            let _ = writeln!(
                s,
                r##"<rect x="{x:.2}" y="{y:.2}" width="{:.2}" height="{:.2}" fill="rgb({r},{g},{b})"/>"##,
                cw + 0.3,
                ch + 0.3
            );
        }
    }
    // axes labels and min/max annotation
    let _ = writeln!(
        s,
        r#"<text x="{}" y="{}" font-family="monospace" font-size="11">{}</text>"#,
        m_left,
        h - 12.0,
        format_args!("x: [{}, {}]", fmt_num(x_range.0), fmt_num(x_range.1))
    );
    let _ = writeln!(
        s,
        r#"<text x="8" y="{}" font-family="monospace" font-size="11" transform="rotate(-90 14 {})">{}</text>"#,
        m_top + ph / 2.0,
        m_top + ph / 2.0,
        format_args!("y: [{}, {}]", fmt_num(y_range.0), fmt_num(y_range.1))
    );
    // colorbar
    let bar_x = w - m_right + 16.0;
    let steps = 40;
    for k in 0..steps {
        let t = k as f64 / (steps - 1) as f64;
        let (r, g, b) = color_at(t);
        let y = m_top + ph * (1.0 - t);
        let _ = writeln!(
            s,
            r##"<rect x="{bar_x:.1}" y="{:.2}" width="14" height="{:.2}" fill="rgb({r},{g},{b})"/>"##,
            y - ph / steps as f64,
            ph / steps as f64 + 0.4
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{:.1}" y="{}" font-family="monospace" font-size="10">max {}</text>"#,
        bar_x - 6.0,
        m_top - 6.0,
        fmt_num(vmax)
    );
    let _ = writeln!(
        s,
        r#"<text x="{:.1}" y="{}" font-family="monospace" font-size="10">min {}</text>"#,
        bar_x - 6.0,
        m_top + ph + 14.0,
        fmt_num(vmin)
    );
    s.push_str("</svg>\n");
    s
}

pub struct Series<'a> {
    pub label: &'a str,
    pub x: &'a [f64],
    pub y: &'a [f64],
    pub color: &'a str,
}

/// Line plot with one or more overlaid series.
pub fn line_plot(title: &str, series: &[Series]) -> String {
    let (w, h) = (560.0, 400.0);
    let (m_left, m_top, m_right, m_bottom) = (60.0, 40.0, 24.0, 48.0);
    let pw = w - m_left - m_right;
    let ph = h - m_top - m_bottom;
    let mut xmin = f64::INFINITY;
    let mut xmax = f64::NEG_INFINITY;
    let mut ymin = f64::INFINITY;
    let mut ymax = f64::NEG_INFINITY;
    for sr in series {
        for &v in sr.x {
            xmin = xmin.min(v);
            xmax = xmax.max(v);
        }
        for &v in sr.y {
            ymin = ymin.min(v);
            ymax = ymax.max(v);
        }
    }
    if !(ymax > ymin) {
        ymax = ymin + 1.0;
    }
    let ypad = 0.05 * (ymax - ymin);
    ymin -= ypad;
    ymax += ypad;
    let sx = |v: f64| m_left + (v - xmin) / (xmax - xmin).max(f64::MIN_POSITIVE) * pw;
    let sy = |v: f64| m_top + ph - (v - ymin) / (ymax - ymin) * ph;
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}">"#
    );
    let _ = writeln!(s, "<metadata><![CDATA[");
    let _ = writeln!(s, "title,{title}");
    for sr in series {
        let _ = writeln!(s, "series,{}", sr.label);
        for (xv, yv) in sr.x.iter().zip(sr.y.iter()) {
            let _ = writeln!(s, "{xv},{yv}");
        }
    }
    let _ = writeln!(s, "]]></metadata>");
    let _ = writeln!(
        s,
        r#"<text x="{m_left}" y="24" font-family="monospace" font-size="14">{title}</text>"#
    );
    let _ = writeln!(
        s,
        r##"<rect x="{m_left}" y="{m_top}" width="{pw}" height="{ph}" fill="none" stroke="#888"/>"##
    );
    for (i, sr) in series.iter().enumerate() {
        let mut path = String::new();
        for (k, (xv, yv)) in sr.x.iter().zip(sr.y.iter()).enumerate() {
            let cmd = if k == 0 { 'M' } else { 'L' };
            let _ = write!(path, "{cmd}{:.2},{:.2} ", sx(*xv), sy(*yv));
        }
        let _ = writeln!(
            s,
            r#"<path d="{path}" fill="none" stroke="{}" stroke-width="1.6"/>"#,
            sr.color
        );
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="{:.1}" font-family="monospace" font-size="11" fill="{}">{}</text>"#,
            m_left + 8.0,
            m_top + 16.0 + 14.0 * i as f64,
            sr.color,
            sr.label
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{m_left}" y="{:.1}" font-family="monospace" font-size="10">[{}, {}]</text>"#,
        h - 12.0,
        fmt_num(xmin),
        fmt_num(xmax)
    );
    let _ = writeln!(
        s,
        r#"<text x="6" y="{:.1}" font-family="monospace" font-size="10">[{}, {}]</text>"#,
        m_top + 10.0,
        fmt_num(ymin),
        fmt_num(ymax)
    );
    s.push_str("</svg>\n");
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn heatmap_contains_data_table_and_annotations() {
        let vals: Vec<f64> = (0..12).map(|i| i as f64).collect();
        let svg = heatmap("t", (-1.0, 1.0), (0.0, 3.0), 4, 3, &vals);
        assert!(svg.contains("<metadata>"));
        assert!(svg.contains("min 0"));
        assert!(svg.contains("max 11"));
        assert!(svg.contains("nx,4;ny,3"));
    }

    #[test]
    fn line_plot_renders_each_series() {
        let x = [0.0, 1.0, 2.0];
        let y1 = [0.0, 1.0, 0.5];
        let y2 = [0.1, 0.9, 0.6];
        let svg = line_plot(
            "m",
            &[
                Series { label: "estimate", x: &x, y: &y1, color: "#c33" },
                Series { label: "reference", x: &x, y: &y2, color: "#33c" },
            ],
        );
        assert_eq!(svg.matches("<path").count(), 2);
        assert!(svg.contains("estimate"));
        assert!(svg.contains("reference"));
    }
}
