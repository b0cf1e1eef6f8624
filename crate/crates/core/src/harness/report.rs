//! Metric CSVs, summaries and plots.
//!
//! Metric files are CSV with the header `frame,camera,metric,value`.
//! Values are written in shortest round-trip form, so reading a file back
//! gives the exact numbers. MMD values are the square root of the biased
//! squared MMD averaged over the kernel scales.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use super::io::write_atomic;
use crate::error::{Error, Result};
use crate::evalkit::ViewSelection;

pub const METRIC_HEADER: &str = "frame,camera,metric,value";

/// Rows whose frame and camera hold this marker form the summary block.
pub const SUMMARY_MARKER: &str = "summary";

#[derive(Debug, Clone, PartialEq)]
pub struct MetricRow {
    pub frame_id: String,
    pub camera_id: String,
    pub metric: String,
    pub value: f64,
}

pub fn rows_to_csv(rows: &[MetricRow]) -> String {
    let mut out = String::from(METRIC_HEADER);
    out.push('\n');
    for r in rows {
        let _ = writeln!(out, "{},{},{},{}", r.frame_id, r.camera_id, r.metric, r.value);
    }
    out
}

pub fn rows_from_csv(text: &str) -> Result<Vec<MetricRow>> {
    let mut lines = text.lines();
    if lines.next() != Some(METRIC_HEADER) {
        return Err(Error::Data(format!("metric file must start with {METRIC_HEADER:?}")));
    }
    lines
        .enumerate()
        .filter(|(_, l)| !l.is_empty())
        .map(|(n, l)| {
            let f: Vec<&str> = l.split(',').collect();
            let value = f.get(3).and_then(|v| v.parse().ok());
            match (f.len(), value) {
                (4, Some(value)) => Ok(MetricRow {
                    frame_id: f[0].into(),
                    camera_id: f[1].into(),
                    metric: f[2].into(),
                    value,
                }),
                _ => Err(Error::Data(format!("metric line {}: {l:?}", n + 2))),
            }
        })
        .collect()
}

pub fn save_rows(path: &Path, rows: &[MetricRow]) -> Result<()> {
    write_atomic(path, rows_to_csv(rows).as_bytes())
}

pub fn load_rows(path: &Path) -> Result<Vec<MetricRow>> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Data(format!("cannot read metrics {}: {e}", path.display())))?;
    rows_from_csv(&text)
}

/// Per-frame means over cameras plus one summary row per metric (the mean
/// of that metric's per-frame values).
#[derive(Debug, Clone, PartialEq)]
pub struct MetricReport {
    pub per_frame: Vec<MetricRow>,
    pub summary: BTreeMap<String, f64>,
}

impl MetricReport {
    pub fn from_rows(rows: &[MetricRow]) -> Self {
        // (frame, metric) -> (sum, count), keyed in sorted order
        let mut acc: BTreeMap<(String, String), (f64, usize)> = BTreeMap::new();
        for r in rows.iter().filter(|r| r.frame_id != SUMMARY_MARKER) {
            let e = acc.entry((r.frame_id.clone(), r.metric.clone())).or_insert((0.0, 0));
            e.0 += r.value;
            e.1 += 1;
        }
        let per_frame: Vec<MetricRow> = acc
            .into_iter()
            .map(|((frame_id, metric), (sum, n))| MetricRow {
                frame_id,
                camera_id: "mean".into(),
                metric,
                value: sum / n as f64,
            })
            .collect();
        let mut sums: BTreeMap<String, (f64, usize)> = BTreeMap::new();
        for r in &per_frame {
            let e = sums.entry(r.metric.clone()).or_insert((0.0, 0));
            e.0 += r.value;
            e.1 += 1;
        }
        MetricReport {
            per_frame,
            summary: sums.into_iter().map(|(m, (s, n))| (m, s / n as f64)).collect(),
        }
    }

    pub fn rows(&self) -> Vec<MetricRow> {
        let mut out = self.per_frame.clone();
        out.extend(self.summary.iter().map(|(m, v)| MetricRow {
            frame_id: SUMMARY_MARKER.into(),
            camera_id: SUMMARY_MARKER.into(),
            metric: m.clone(),
            value: *v,
        }));
        out
    }

    pub fn to_csv(&self) -> String {
        rows_to_csv(&self.rows())
    }

    /// Summary rows of a report file.
    pub fn summary_of(rows: &[MetricRow]) -> BTreeMap<String, f64> {
        rows.iter()
            .filter(|r| r.frame_id == SUMMARY_MARKER)
            .map(|r| (r.metric.clone(), r.value))
            .collect()
    }
}

fn esc(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Scatter plot of per-camera ambiguity against regret.
pub fn ambiguity_regret_svg(sel: &ViewSelection) -> String {
    let (w, h, m) = (480.0, 360.0, 50.0);
    let xs: Vec<f64> = sel.scores.iter().map(|s| s.ambiguity).collect();
    let ys: Vec<f64> = sel.scores.iter().map(|s| s.regret).collect();
    let span = |v: &[f64]| {
        let lo = v.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if hi > lo { (lo, hi) } else { (lo - 1.0, lo + 1.0) }
    };
    let ((x0, x1), (y0, y1)) = (span(&xs), span(&ys));
    let px = |x: f64| m + (x - x0) / (x1 - x0) * (w - 2.0 * m);
    let py = |y: f64| h - m - (y - y0) / (y1 - y0) * (h - 2.0 * m);
    let mut s = String::new();
    let _ = writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" font-family="sans-serif" font-size="11">"#);
    let _ = writeln!(s, r#"<rect width="{w}" height="{h}" fill="white"/>"#);
    let _ = writeln!(s, r#"<line x1="{m}" y1="{0}" x2="{1}" y2="{0}" stroke="black"/>"#, h - m, w - m);
    let _ = writeln!(s, r#"<line x1="{m}" y1="{m}" x2="{m}" y2="{0}" stroke="black"/>"#, h - m);
    let _ = writeln!(s, r#"<text x="{0}" y="{1}" text-anchor="middle">ambiguity (mm)  [{x0:.2}, {x1:.2}]</text>"#, w / 2.0, h - 15.0);
    let _ = writeln!(s, r#"<text x="15" y="{0}" transform="rotate(-90 15 {0})" text-anchor="middle">regret (mm)  [{y0:.2}, {y1:.2}]</text>"#, h / 2.0);
    for (i, sc) in sel.scores.iter().enumerate() {
        let (x, y) = (px(xs[i]), py(ys[i]));
        let _ = writeln!(s, r#"<circle cx="{x:.2}" cy="{y:.2}" r="4" fill="steelblue"/>"#);
        let _ = writeln!(s, r#"<text x="{:.2}" y="{:.2}">{}</text>"#, x + 6.0, y - 6.0, esc(&sc.camera_id));
    }
    s.push_str("</svg>\n");
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    fn r(f: &str, c: &str, m: &str, v: f64) -> MetricRow {
        MetricRow {
            frame_id: f.into(),
            camera_id: c.into(),
            metric: m.into(),
            value: v,
        }
    }

    #[test]
    fn csv_round_trips_exactly() {
        let rows = vec![r("f0", "cam0", "a", 0.1 + 0.2), r("f1", "cam1", "b", 1e-300), r("f1", "cam2", "b", -3.5)];
        assert_eq!(rows_from_csv(&rows_to_csv(&rows)).unwrap(), rows);
        assert!(rows_from_csv("x\n").is_err());
        assert!(rows_from_csv(&format!("{METRIC_HEADER}\nf,c,m\n")).is_err());
    }

    #[test]
    fn report_averages_cameras_then_frames() {
        let rows = vec![r("f0", "a", "m", 1.0), r("f0", "b", "m", 3.0), r("f1", "a", "m", 6.0)];
        let rep = MetricReport::from_rows(&rows);
        assert_eq!(rep.per_frame.len(), 2);
        assert_eq!(rep.per_frame[0].value, 2.0);
        assert_eq!(rep.summary["m"], 4.0);
        let back = rows_from_csv(&rep.to_csv()).unwrap();
        assert_eq!(MetricReport::summary_of(&back)["m"], 4.0);
        // a report of a report keeps its numbers
        assert_eq!(MetricReport::from_rows(&back), rep);
    }
}
