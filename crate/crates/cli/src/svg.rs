//! Power-curve export: CSV table and a standalone SVG line chart.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rmpower_core::power::{CurveRow, CurveTable};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SvgError {
    #[error("power curve has no points")]
    Empty,
    #[error("cannot write {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 420.0;
const LEFT: f64 = 60.0;
const RIGHT: f64 = 130.0;
const TOP: f64 = 20.0;
const BOTTOM: f64 = 50.0;
const PALETTE: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf", "#8c564b", "#e377c2",
];

/// `f,n_total,power` rows; floats use the shortest exact representation.
pub fn curve_csv(rows: &[CurveRow]) -> String {
    let mut s = String::from("f,n_total,power\n");
    for r in rows {
        writeln!(s, "{},{},{}", r.f, r.n_total, r.power).unwrap();
    }
    s
}

pub fn read_curve_csv(text: &str) -> Result<Vec<CurveRow>, csv::Error> {
    csv::Reader::from_reader(text.as_bytes()).deserialize().collect()
}

fn nice_step(span: f64, target: usize) -> f64 {
    let raw = span / target as f64;
    let mag = 10f64.powf(raw.log10().floor());
    let norm = raw / mag;
    let nice = if norm <= 1.0 {
        1.0
    } else if norm <= 2.0 {
        2.0
    } else if norm <= 5.0 {
        5.0
    } else {
        10.0
    };
    (nice * mag).max(1.0)
}

pub fn render_curve_svg(curve: &CurveTable) -> Result<String, SvgError> {
    if curve.rows.is_empty() {
        return Err(SvgError::Empty);
    }
    let n_min = curve.rows.iter().map(|r| r.n_total).min().unwrap() as f64;
    let n_max = curve.rows.iter().map(|r| r.n_total).max().unwrap() as f64;
    let (x_lo, x_hi) = if n_max > n_min { (n_min, n_max) } else { (n_min - 1.0, n_max + 1.0) };
    let plot_w = WIDTH - LEFT - RIGHT;
    let plot_h = HEIGHT - TOP - BOTTOM;
    let sx = |n: f64| LEFT + (n - x_lo) / (x_hi - x_lo) * plot_w;
    let sy = |p: f64| TOP + (1.0 - p.clamp(0.0, 1.0)) * plot_h;

    let mut s = String::new();
    writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    )
    .unwrap();
    writeln!(s, r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#).unwrap();

    for i in 0..=5 {
        let p = i as f64 / 5.0;
        let y = sy(p);
        writeln!(
            s,
            r##"<line x1="{LEFT}" y1="{y:.2}" x2="{:.2}" y2="{y:.2}" stroke="#dddddd"/>"##,
            LEFT + plot_w
        )
        .unwrap();
        writeln!(s, r#"<text x="{:.2}" y="{:.2}" text-anchor="end">{p:.1}</text>"#, LEFT - 6.0, y + 4.0).unwrap();
    }
    let step = nice_step(x_hi - x_lo, 6);
    let mut tick = (x_lo / step).ceil() * step;
    while tick <= x_hi + 1e-9 {
        let x = sx(tick);
        writeln!(
            s,
            r#"<text x="{x:.2}" y="{:.2}" text-anchor="middle">{tick}</text>"#,
            TOP + plot_h + 18.0
        )
        .unwrap();
        tick += step;
    }
    writeln!(
        s,
        r#"<rect x="{LEFT}" y="{TOP}" width="{plot_w}" height="{plot_h}" fill="none" stroke="black"/>"#
    )
    .unwrap();
    writeln!(
        s,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">Total sample size N</text>"#,
        LEFT + plot_w / 2.0,
        HEIGHT - 10.0
    )
    .unwrap();
    writeln!(
        s,
        r#"<text x="16" y="{:.2}" text-anchor="middle" transform="rotate(-90 16 {:.2})">Power</text>"#,
        TOP + plot_h / 2.0,
        TOP + plot_h / 2.0
    )
    .unwrap();

    for (i, f) in curve.effect_sizes().into_iter().enumerate() {
        let colour = PALETTE[i % PALETTE.len()];
        let pts: Vec<(f64, f64)> = curve.series(f).map(|r| (sx(r.n_total as f64), sy(r.power))).collect();
        if pts.len() == 1 {
            writeln!(
                s,
                r#"<circle class="marker" cx="{:.2}" cy="{:.2}" r="4" fill="{colour}"/>"#,
                pts[0].0, pts[0].1
            )
            .unwrap();
        } else {
            let coords: Vec<String> = pts.iter().map(|(x, y)| format!("{x:.2},{y:.2}")).collect();
            writeln!(
                s,
                r#"<polyline fill="none" stroke="{colour}" stroke-width="2" points="{}"/>"#,
                coords.join(" ")
            )
            .unwrap();
        }
        let ly = TOP + 10.0 + 18.0 * i as f64;
        let lx = LEFT + plot_w + 12.0;
        writeln!(
            s,
            r#"<line x1="{lx}" y1="{ly}" x2="{}" y2="{ly}" stroke="{colour}" stroke-width="2"/>"#,
            lx + 20.0
        )
        .unwrap();
        writeln!(s, r#"<text class="legend" x="{}" y="{}">f = {f}</text>"#, lx + 26.0, ly + 4.0).unwrap();
    }
    s.push_str("</svg>\n");
    Ok(s)
}

/// Writes the SVG to `path` and the CSV table next to it (same stem,
/// `.csv` extension). Returns the CSV path.
pub fn emit_curve_svg(curve: &CurveTable, path: &Path) -> Result<PathBuf, SvgError> {
    let svg = render_curve_svg(curve)?;
    let write = |p: &Path, body: &str| {
        std::fs::write(p, body).map_err(|source| SvgError::Io {
            path: p.to_path_buf(),
            source,
        })
    };
    write(path, &svg)?;
    let csv_path = path.with_extension("csv");
    write(&csv_path, &curve_csv(&curve.rows))?;
    Ok(csv_path)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn step_rounding() {
        assert_eq!(nice_step(200.0, 6), 50.0);
        assert_eq!(nice_step(3.0, 6), 1.0);
        assert_eq!(nice_step(1000.0, 6), 200.0);
    }

    #[test]
    fn empty_curve_rejected() {
        assert!(matches!(render_curve_svg(&CurveTable::default()), Err(SvgError::Empty)));
    }
}
