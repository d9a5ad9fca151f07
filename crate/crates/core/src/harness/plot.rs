use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::stats::least_squares_slope;

use super::table::Table;

#[derive(Debug, Clone, PartialEq, Default)]
pub struct PlotOptions {
    pub log_x: bool,
    pub log_y: bool,
    pub title: Option<String>,
}

impl PlotOptions {
    pub fn log_log() -> Self {
        Self {
            log_x: true,
            log_y: true,
            title: None,
        }
    }
}

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 420.0;
const LEFT: f64 = 80.0;
const RIGHT: f64 = 170.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 60.0;
const COLORS: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf"];

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

struct Axis {
    lo: f64,
    hi: f64,
    log: bool,
}

impl Axis {
    fn new(values: impl Iterator<Item = f64>, log: bool, name: &str) -> Result<Self> {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for v in values {
            if log && !(v > 0.0) {
                return Err(Error::param(format!("log axis needs positive values; `{name}` has {v}")));
            }
            let t = if log { v.log10() } else { v };
            if t.is_finite() {
                lo = lo.min(t);
                hi = hi.max(t);
            }
        }
        if !lo.is_finite() {
            return Err(Error::param(format!("column `{name}` has no finite values")));
        }
        if hi == lo {
            lo -= 0.5;
            hi += 0.5;
        }
        Ok(Self { lo, hi, log })
    }

    fn unit(&self, v: f64) -> f64 {
        let t = if self.log { v.log10() } else { v };
        (t - self.lo) / (self.hi - self.lo)
    }

    fn label(&self, frac: f64) -> String {
        let t = self.lo + frac * (self.hi - self.lo);
        let v = if self.log { 10f64.powf(t) } else { t };
        format!("{v:.3e}")
    }
}

/// Standalone SVG line chart of `y_cols` against `x_col`.
///
/// On log-log axes each series is annotated with its least-squares slope in
/// log space. Output depends only on the inputs.
pub fn render_plot(table: &Table, x_col: &str, y_cols: &[&str], opts: &PlotOptions) -> Result<String> {
    if table.rows.len() < 2 {
        return Err(Error::param(format!("a plot needs at least 2 rows, got {}", table.rows.len())));
    }
    if y_cols.is_empty() {
        return Err(Error::param("no y columns to plot"));
    }
    let xs = table.column(x_col)?;
    let series: Vec<(&str, Vec<f64>)> = y_cols
        .iter()
        .map(|c| table.column(c).map(|v| (*c, v)))
        .collect::<Result<_>>()?;
    let x_axis = Axis::new(xs.iter().copied(), opts.log_x, x_col)?;
    let y_axis = Axis::new(series.iter().flat_map(|(_, v)| v.iter().copied()), opts.log_y, "y")?;

    let plot_w = WIDTH - LEFT - RIGHT;
    let plot_h = HEIGHT - TOP - BOTTOM;
    let px = |x: f64| LEFT + x_axis.unit(x) * plot_w;
    let py = |y: f64| TOP + (1.0 - y_axis.unit(y)) * plot_h;

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(svg, r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);
    if let Some(title) = &opts.title {
        let _ = writeln!(svg, r#"<text x="{:.2}" y="24" text-anchor="middle" font-size="14">{}</text>"#, LEFT + plot_w / 2.0, escape(title));
    }
    let _ = writeln!(
        svg,
        r#"<rect x="{LEFT:.2}" y="{TOP:.2}" width="{plot_w:.2}" height="{plot_h:.2}" fill="none" stroke="black"/>"#
    );
    for i in 0..=4 {
        let f = i as f64 / 4.0;
        let x = LEFT + f * plot_w;
        let y = TOP + (1.0 - f) * plot_h;
        let _ = writeln!(svg, r#"<line x1="{x:.2}" y1="{:.2}" x2="{x:.2}" y2="{:.2}" stroke="black"/>"#, TOP + plot_h, TOP + plot_h + 5.0);
        let _ = writeln!(svg, r#"<text x="{x:.2}" y="{:.2}" text-anchor="middle">{}</text>"#, TOP + plot_h + 18.0, x_axis.label(f));
        let _ = writeln!(svg, r#"<line x1="{:.2}" y1="{y:.2}" x2="{LEFT:.2}" y2="{y:.2}" stroke="black"/>"#, LEFT - 5.0);
        let _ = writeln!(svg, r#"<text x="{:.2}" y="{:.2}" text-anchor="end">{}</text>"#, LEFT - 8.0, y + 4.0, y_axis.label(f));
    }
    let scale = |log: bool| if log { " (log)" } else { "" };
    let _ = writeln!(
        svg,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{}{}</text>"#,
        LEFT + plot_w / 2.0,
        HEIGHT - 16.0,
        escape(x_col),
        scale(opts.log_x)
    );

    for (i, (name, ys)) in series.iter().enumerate() {
        let color = COLORS[i % COLORS.len()];
        let points: Vec<String> = xs
            .iter()
            .zip(ys)
            .filter(|(x, y)| x.is_finite() && y.is_finite())
            .map(|(x, y)| format!("{:.2},{:.2}", px(*x), py(*y)))
            .collect();
        let _ = writeln!(svg, r#"<polyline fill="none" stroke="{color}" stroke-width="2" points="{}"/>"#, points.join(" "));
        for p in &points {
            let (cx, cy) = p.split_once(',').expect("formatted pair");
            let _ = writeln!(svg, r#"<circle cx="{cx}" cy="{cy}" r="3" fill="{color}"/>"#);
        }
        let ly = TOP + 14.0 + 36.0 * i as f64;
        let lx = WIDTH - RIGHT + 12.0;
        let _ = writeln!(svg, r#"<line x1="{lx:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke="{color}" stroke-width="2"/>"#, ly - 4.0, lx + 18.0, ly - 4.0);
        let _ = writeln!(svg, r#"<text x="{:.2}" y="{ly:.2}">{}</text>"#, lx + 24.0, escape(name));
        if opts.log_x && opts.log_y {
            let lx_vals: Vec<f64> = xs.iter().map(|x| x.log10()).collect();
            let ly_vals: Vec<f64> = ys.iter().map(|y| y.log10()).collect();
            if let Some((slope, _)) = least_squares_slope(&lx_vals, &ly_vals) {
                let _ = writeln!(
                    svg,
                    r#"<text x="{:.2}" y="{:.2}" class="slope" data-series="{}" data-slope="{slope:.6}">slope {slope:.3}</text>"#,
                    lx + 24.0,
                    ly + 15.0,
                    escape(name)
                );
            }
        }
    }
    svg.push_str("</svg>\n");
    Ok(svg)
}

pub fn emit_plot(table: &Table, x_col: &str, y_cols: &[&str], path: &Path, opts: &PlotOptions) -> Result<()> {
    let svg = render_plot(table, x_col, y_cols, opts)?;
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent)?;
    }
    std::fs::write(path, svg)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::table::Cell;

    fn table(xs: &[f64], ys: &[&[f64]]) -> Table {
        let mut cols = vec!["x".to_string()];
        cols.extend((0..ys.len()).map(|i| format!("y{i}")));
        let mut t = Table::new(cols);
        for (r, x) in xs.iter().enumerate() {
            let mut row = vec![Cell::Real(*x)];
            row.extend(ys.iter().map(|y| Cell::Real(y[r])));
            t.push(row).unwrap();
        }
        t
    }

    #[test]
    fn two_points_one_segment_per_series() {
        let t = table(&[1.0, 2.0], &[&[3.0, 4.0], &[1.0, 0.5]]);
        let svg = render_plot(&t, "x", &["y0", "y1"], &PlotOptions::default()).unwrap();
        assert_eq!(svg.matches("<polyline").count(), 2);
        for line in svg.lines().filter(|l| l.starts_with("<polyline")) {
            let pts = line.split("points=\"").nth(1).unwrap();
            assert_eq!(pts.trim_end_matches("\"/>").split(' ').count(), 2);
        }
        assert_eq!(svg, render_plot(&t, "x", &["y0", "y1"], &PlotOptions::default()).unwrap());
    }

    #[test]
    fn log_log_slope_annotation() {
        let xs = [50.0, 100.0, 200.0, 400.0];
        let ys: Vec<f64> = xs.iter().map(|x: &f64| 3.0 * x.powf(-0.5)).collect();
        let t = table(&xs, &[&ys]);
        let svg = render_plot(&t, "x", &["y0"], &PlotOptions::log_log()).unwrap();
        assert!(svg.contains(r#"data-slope="-0.500000""#), "{svg}");
    }

    #[test]
    fn errors() {
        let t = table(&[1.0, 2.0], &[&[1.0, 2.0]]);
        assert!(matches!(render_plot(&t, "x", &["nope"], &PlotOptions::default()), Err(Error::MissingColumn(_))));
        assert!(matches!(render_plot(&t, "nope", &["y0"], &PlotOptions::default()), Err(Error::MissingColumn(_))));
        let one = table(&[1.0], &[&[1.0]]);
        assert!(render_plot(&one, "x", &["y0"], &PlotOptions::default()).is_err());
        let neg = table(&[1.0, 2.0], &[&[-1.0, 2.0]]);
        assert!(render_plot(&neg, "x", &["y0"], &PlotOptions::log_log()).is_err());
    }
}
