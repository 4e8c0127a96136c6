//! Embedding scatter export: labelled points as CSV and SVG, plus the silhouette score of
//! the real/fake grouping.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::features::FeatureRow;
use crate::manifest::Label;

const REAL_COLOR: &str = "#1f77b4";
const FAKE_COLOR: &str = "#d62728";

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Mean silhouette coefficient of the two label groups under Euclidean distance.
///
/// A point alone in its group scores 0, and so does a point whose intra- and
/// inter-group mean distances are both zero. Returns 0 when a group is empty.
pub fn silhouette(points: &[(Vec<f64>, Label)]) -> f64 {
    let count = |l: Label| points.iter().filter(|p| p.1 == l).count();
    let sizes = [count(Label::Real), count(Label::Fake)];
    if sizes.contains(&0) {
        return 0.0;
    }
    let total: f64 = points
        .iter()
        .enumerate()
        .map(|(i, (p, label))| {
            let own = sizes[*label as usize];
            if own == 1 {
                return 0.0;
            }
            let (mut same, mut other) = (0.0, 0.0);
            for (j, (q, l)) in points.iter().enumerate() {
                if i == j {
                    continue;
                }
                if l == label {
                    same += dist(p, q);
                } else {
                    other += dist(p, q);
                }
            }
            let a = same / (own - 1) as f64;
            let b = other / sizes[label.other() as usize] as f64;
            let m = a.max(b);
            if m == 0.0 {
                0.0
            } else {
                (b - a) / m
            }
        })
        .sum();
    total / points.len() as f64
}

fn require_2d(rows: &[FeatureRow]) -> Result<()> {
    if let Some(r) = rows.iter().find(|r| r.point.dim() != 2) {
        return Err(Error::ShapeMismatch {
            expected: "2-dimensional features for a scatter plot (reduce the dimension first; that step is not provided)".into(),
            actual: format!("{} coordinates for `{}`", r.point.dim(), r.id),
        });
    }
    Ok(())
}

pub fn points_csv(rows: &[FeatureRow]) -> Result<String> {
    require_2d(rows)?;
    let mut out = String::from("e1,e2,label\n");
    for r in rows {
        writeln!(out, "{},{},{}", r.point.coords[0], r.point.coords[1], r.label).unwrap();
    }
    Ok(out)
}

pub fn scatter_svg(rows: &[FeatureRow]) -> Result<String> {
    require_2d(rows)?;
    const SIZE: f64 = 480.0;
    const PAD: f64 = 40.0;
    let (mut lo, mut hi) = ([f64::INFINITY; 2], [f64::NEG_INFINITY; 2]);
    for r in rows {
        for k in 0..2 {
            lo[k] = lo[k].min(r.point.coords[k]);
            hi[k] = hi[k].max(r.point.coords[k]);
        }
    }
    let span = |k: usize| {
        let s = hi[k] - lo[k];
        if s > 0.0 && s.is_finite() {
            s
        } else {
            1.0
        }
    };
    let project = |k: usize, v: f64| {
        let t = if lo[k].is_finite() { (v - lo[k]) / span(k) } else { 0.5 };
        PAD + t * (SIZE - 2.0 * PAD)
    };

    let mut svg = String::new();
    writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{SIZE}" height="{SIZE}" viewBox="0 0 {SIZE} {SIZE}">"#
    )
    .unwrap();
    writeln!(svg, r#"<rect width="100%" height="100%" fill="white"/>"#).unwrap();
    writeln!(
        svg,
        r##"<rect x="{PAD}" y="{PAD}" width="{w}" height="{w}" fill="none" stroke="#888"/>"##,
        w = SIZE - 2.0 * PAD
    )
    .unwrap();
    for r in rows {
        let x = project(0, r.point.coords[0]);
        let y = SIZE - project(1, r.point.coords[1]);
        let color = match r.label {
            Label::Real => REAL_COLOR,
            Label::Fake => FAKE_COLOR,
        };
        writeln!(
            svg,
            r#"<circle cx="{x:.2}" cy="{y:.2}" r="3" fill="{color}" fill-opacity="0.7"><title>{}</title></circle>"#,
            xml_escape(&r.id)
        )
        .unwrap();
    }
    for (i, (label, color)) in [("real", REAL_COLOR), ("fake", FAKE_COLOR)].iter().enumerate() {
        let y = 16.0 + 16.0 * i as f64;
        writeln!(
            svg,
            r#"<circle cx="{PAD}" cy="{y}" r="4" fill="{color}"/><text x="{}" y="{}" font-family="sans-serif" font-size="12">{label}</text>"#,
            PAD + 8.0,
            y + 4.0
        )
        .unwrap();
    }
    svg.push_str("</svg>\n");
    Ok(svg)
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlotOutput {
    pub silhouette: f64,
    pub points: usize,
}

/// Writes `<out>.svg` and `<out>.csv` next to each other and returns the silhouette.
pub fn write_plot(rows: &[FeatureRow], svg_path: &Path, csv_path: &Path) -> Result<PlotOutput> {
    let svg = scatter_svg(rows)?;
    let csv = points_csv(rows)?;
    fs::write(svg_path, svg).map_err(|e| Error::io(svg_path, e))?;
    fs::write(csv_path, csv).map_err(|e| Error::io(csv_path, e))?;
    let pts: Vec<(Vec<f64>, Label)> = rows
        .iter()
        .map(|r| (r.point.coords.clone(), r.label))
        .collect();
    Ok(PlotOutput {
        silhouette: silhouette(&pts),
        points: rows.len(),
    })
}
