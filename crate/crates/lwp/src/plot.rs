//! Hand-written SVG: accuracy heatmaps per mode and a BWT bar chart.
//! Coordinates are printed with six decimals so output bytes are stable.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::results::{collect_metrics, mean, summarize, CellMetrics};

const CELL: f64 = 60.0;
const MARGIN: f64 = 70.0;

struct Svg {
    body: String,
}

impl Svg {
    fn new(width: f64, height: f64) -> Self {
        let mut body = String::new();
        writeln!(
            body,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width:.6}" height="{height:.6}" viewBox="0 0 {width:.6} {height:.6}">"#
        )
        .unwrap();
        writeln!(body, r##"<rect x="0.000000" y="0.000000" width="{width:.6}" height="{height:.6}" fill="#ffffff"/>"##).unwrap();
        Self { body }
    }

    fn rect(&mut self, x: f64, y: f64, w: f64, h: f64, fill: &str) {
        writeln!(
            self.body,
            r##"<rect x="{x:.6}" y="{y:.6}" width="{w:.6}" height="{h:.6}" fill="{fill}" stroke="#333333" stroke-width="0.500000"/>"##
        )
        .unwrap();
    }

    fn text(&mut self, x: f64, y: f64, size: f64, anchor: &str, s: &str) {
        writeln!(
            self.body,
            r#"<text x="{x:.6}" y="{y:.6}" font-family="sans-serif" font-size="{size:.6}" text-anchor="{anchor}">{}</text>"#,
            escape(s)
        )
        .unwrap();
    }

    fn finish(mut self) -> String {
        self.body.push_str("</svg>\n");
        self.body
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

/// White at 0 to dark blue at 1.
fn shade(v: f64) -> String {
    let v = if v.is_finite() { v.clamp(0.0, 1.0) } else { 0.0 };
    let c = |lo: f64| (255.0 + (lo - 255.0) * v).round() as u8;
    format!("#{:02x}{:02x}{:02x}", c(8.0), c(48.0), c(107.0))
}

/// Element-wise mean of lower-triangular accuracy matrices.
pub fn mean_accuracy(cells: &[&CellMetrics]) -> Vec<Vec<f64>> {
    let t = cells.iter().map(|c| c.accuracy_matrix.len()).max().unwrap_or(0);
    (0..t)
        .map(|r| {
            (0..=r)
                .map(|i| {
                    let v: Vec<f64> = cells
                        .iter()
                        .filter_map(|c| c.accuracy_matrix.get(r).and_then(|row| row.get(i)).copied())
                        .collect();
                    mean(&v)
                })
                .collect()
        })
        .collect()
}

/// Row `t` is the model after task `t`, column `i` the evaluated task.
pub fn heatmap_svg(mode: &str, acc: &[Vec<f64>], seeds: usize) -> String {
    let t = acc.len().max(1) as f64;
    let mut svg = Svg::new(MARGIN + t * CELL + 20.0, MARGIN + t * CELL + 20.0);
    svg.text(
        MARGIN + t * CELL / 2.0,
        22.0,
        14.0,
        "middle",
        &format!("{mode}: test accuracy (mean of {seeds} seed(s))"),
    );
    for (r, row) in acc.iter().enumerate() {
        let y = MARGIN + r as f64 * CELL;
        svg.text(MARGIN - 8.0, y + CELL / 2.0 + 4.0, 11.0, "end", &format!("after {}", r + 1));
        for (i, &v) in row.iter().enumerate() {
            let x = MARGIN + i as f64 * CELL;
            svg.rect(x, y, CELL, CELL, &shade(v));
            svg.text(x + CELL / 2.0, y + CELL / 2.0 + 4.0, 11.0, "middle", &format!("{v:.3}"));
        }
    }
    for i in 0..acc.len() {
        svg.text(
            MARGIN + i as f64 * CELL + CELL / 2.0,
            MARGIN - 8.0,
            11.0,
            "middle",
            &format!("task {}", i + 1),
        );
    }
    svg.finish()
}

/// One group per mode with a bar per seed; the label gives the mean.
pub fn bwt_svg(cells: &[CellMetrics]) -> String {
    let summary = summarize(cells);
    let groups: Vec<(&str, Vec<f64>)> = summary
        .iter()
        .map(|s| {
            let v = cells
                .iter()
                .filter(|c| c.mode == s.mode)
                .map(|c| c.bwt.unwrap_or(0.0))
                .collect();
            (s.mode.as_str(), v)
        })
        .collect();
    let bar = 14.0;
    let gap = 30.0;
    let width: f64 = groups.iter().map(|(_, v)| v.len() as f64 * bar + gap).sum::<f64>() + 2.0 * MARGIN;
    let height = 320.0;
    let plot_h = 200.0;
    let top = 50.0;
    let extent = groups
        .iter()
        .flat_map(|(_, v)| v.iter())
        .fold(0.0f64, |m, v| m.max(v.abs()))
        .max(1e-3);
    let zero = top + plot_h / 2.0;
    let scale = plot_h / 2.0 / extent;

    let mut svg = Svg::new(width, height);
    svg.text(width / 2.0, 24.0, 14.0, "middle", "Backward transfer per seed");
    svg.rect(MARGIN - 4.0, zero, width - 2.0 * MARGIN + 8.0, 0.5, "#333333");
    svg.text(MARGIN - 8.0, top + 4.0, 10.0, "end", &format!("{extent:.3}"));
    svg.text(MARGIN - 8.0, zero + 4.0, 10.0, "end", "0");
    svg.text(MARGIN - 8.0, top + plot_h + 4.0, 10.0, "end", &format!("{:.3}", -extent));
    let mut x = MARGIN + gap / 2.0;
    for (k, (mode, vals)) in groups.iter().enumerate() {
        let start = x;
        for &v in vals {
            let h = v.abs() * scale;
            let y = if v >= 0.0 { zero - h } else { zero };
            svg.rect(x, y, bar, h, PALETTE[k % PALETTE.len()]);
            x += bar;
        }
        let mid = (start + x) / 2.0;
        svg.text(mid, top + plot_h + 24.0, 11.0, "middle", mode);
        svg.text(mid, top + plot_h + 40.0, 10.0, "middle", &format!("mean {:.4}", mean(vals)));
        x += gap;
    }
    svg.finish()
}

const PALETTE: [&str; 4] = ["#1b9e77", "#d95f02", "#7570b3", "#e7298a"];

/// Writes `plots/heatmap_<mode>.svg` for each mode and `plots/bwt.svg`.
/// Returns the written paths.
pub fn plot_progression(results: &Path) -> Result<Vec<PathBuf>> {
    let cells = collect_metrics(results)?;
    write_plots(&cells, &results.join("plots"))
}

pub fn write_plots(cells: &[CellMetrics], dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir).map_err(Error::io(dir))?;
    let mut written = Vec::new();
    for s in summarize(cells) {
        let of: Vec<&CellMetrics> = cells.iter().filter(|c| c.mode == s.mode).collect();
        let path = dir.join(format!("heatmap_{}.svg", s.mode));
        fs::write(&path, heatmap_svg(&s.mode, &mean_accuracy(&of), of.len())).map_err(Error::io(&path))?;
        written.push(path);
    }
    let path = dir.join("bwt.svg");
    fs::write(&path, bwt_svg(cells)).map_err(Error::io(&path))?;
    written.push(path);
    Ok(written)
}
