//! CSV traces, JSON sidecars and small SVG line charts.

use std::fmt::Write as _;
use std::fs::{self, File};
use std::io::BufWriter;
use std::path::Path;

use serde::Serialize;

use crate::env::{DayRecord, EpisodeTrace};
use crate::epidemic::Compartment;
use crate::{Error, Result};

pub const TRACE_HEADER: [&str; 12] = [
    "day",
    "susceptible",
    "exposed",
    "asymptomatic",
    "presymptomatic",
    "infected_mild",
    "infected_severe",
    "hospitalized",
    "recovered",
    "deceased",
    "below_poverty_line",
    "doses_given",
];

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    File::create(path).map(BufWriter::new).map_err(|e| Error::io(path, e))
}

pub fn write_trace_csv(trace: &EpisodeTrace, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_writer(create(path)?);
    w.write_record(TRACE_HEADER)?;
    for d in &trace.days {
        let mut row = Vec::with_capacity(TRACE_HEADER.len());
        row.push(d.day.to_string());
        row.extend(d.counts.iter().map(|c| c.to_string()));
        row.push(d.below_poverty_line.to_string());
        row.push(d.doses_given.to_string());
        w.write_record(&row)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_trace_csv(path: &Path) -> Result<EpisodeTrace> {
    let mut r = csv::Reader::from_path(path)?;
    if r.headers()?.iter().ne(TRACE_HEADER) {
        return Err(Error::config(format!("{}: unexpected trace header", path.display())));
    }
    let mut days = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let field = |i: usize| -> Result<usize> {
            rec.get(i)
                .and_then(|s| s.parse().ok())
                .ok_or_else(|| Error::config(format!("{}: bad value in column {}", path.display(), TRACE_HEADER[i])))
        };
        let mut counts = [0usize; Compartment::COUNT];
        for (k, c) in counts.iter_mut().enumerate() {
            *c = field(k + 1)?;
        }
        days.push(DayRecord {
            day: field(0)? as u32,
            counts,
            below_poverty_line: field(10)?,
            doses_given: field(11)?,
        });
    }
    let population = days.first().map(|d| d.counts.iter().sum()).unwrap_or(0);
    Ok(EpisodeTrace { population, days })
}

pub fn write_json<T: Serialize>(value: &T, path: &Path) -> Result<()> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value)?;
    std::io::Write::flush(&mut w).map_err(|e| Error::io(path, e))
}

#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub label: String,
    /// One value per day, starting at day 0.
    pub values: Vec<f64>,
}

const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"];

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

/// Rounds the axis maximum up to 1, 2 or 5 times a power of ten.
fn nice_ceiling(x: f64) -> f64 {
    if x <= 0.0 {
        return 1.0;
    }
    let mag = 10f64.powf(x.log10().floor());
    [1.0, 2.0, 5.0, 10.0]
        .into_iter()
        .map(|m| m * mag)
        .find(|v| *v >= x)
        .unwrap_or(10.0 * mag)
}

/// Renders day-indexed series as an SVG line chart.
pub fn render_plot_svg(title: &str, y_label: &str, series: &[Series]) -> Result<String> {
    let days = series.iter().map(|s| s.values.len()).max().unwrap_or(0);
    if days == 0 {
        return Err(Error::config(format!("plot '{title}' has no data")));
    }
    if series.iter().flat_map(|s| &s.values).any(|v| !v.is_finite()) {
        return Err(Error::config(format!("plot '{title}' contains non-finite values")));
    }
    let (width, height) = (760.0, 420.0);
    let (left, right, top, bottom) = (70.0, 170.0, 40.0, 50.0);
    let (pw, ph) = (width - left - right, height - top - bottom);
    let x_max = (days - 1).max(1) as f64;
    let y_max = nice_ceiling(series.iter().flat_map(|s| &s.values).copied().fold(0.0, f64::max));
    let px = |d: f64| left + pw * d / x_max;
    let py = |v: f64| top + ph * (1.0 - v / y_max);

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(svg, r#"<rect width="{width}" height="{height}" fill="white"/>"#);
    let _ = writeln!(
        svg,
        r#"<text x="{}" y="22" text-anchor="middle" font-size="15">{}</text>"#,
        left + pw / 2.0,
        escape(title)
    );
    let _ = writeln!(
        svg,
        r#"<line x1="{left}" y1="{}" x2="{}" y2="{}" stroke="black"/>"#,
        top + ph,
        left + pw,
        top + ph
    );
    let _ = writeln!(svg, r#"<line x1="{left}" y1="{top}" x2="{left}" y2="{}" stroke="black"/>"#, top + ph);

    let step = if x_max > 50.0 { 10 } else { 5 };
    for d in (0..days).step_by(step) {
        let x = px(d as f64);
        let _ = writeln!(
            svg,
            r#"<line x1="{x:.1}" y1="{}" x2="{x:.1}" y2="{}" stroke="black"/><text x="{x:.1}" y="{}" text-anchor="middle">{d}</text>"#,
            top + ph,
            top + ph + 5.0,
            top + ph + 19.0
        );
    }
    for k in 0..=5 {
        let v = y_max * k as f64 / 5.0;
        let y = py(v);
        let _ = writeln!(
            svg,
            r##"<line x1="{}" y1="{y:.1}" x2="{}" y2="{y:.1}" stroke="#dddddd"/><text x="{}" y="{:.1}" text-anchor="end">{}</text>"##,
            left,
            left + pw,
            left - 6.0,
            y + 4.0,
            v
        );
    }
    let _ = writeln!(
        svg,
        r#"<text x="{}" y="{}" text-anchor="middle">day</text>"#,
        left + pw / 2.0,
        height - 10.0
    );
    let _ = writeln!(
        svg,
        r#"<text x="16" y="{}" text-anchor="middle" transform="rotate(-90 16 {})">{}</text>"#,
        top + ph / 2.0,
        top + ph / 2.0,
        escape(y_label)
    );

    for (i, s) in series.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let points: Vec<String> = s
            .values
            .iter()
            .enumerate()
            .map(|(d, v)| format!("{:.1},{:.1}", px(d as f64), py(*v)))
            .collect();
        let _ = writeln!(
            svg,
            r#"<polyline fill="none" stroke="{color}" stroke-width="1.8" points="{}"/>"#,
            points.join(" ")
        );
        let ly = top + 10.0 + 20.0 * i as f64;
        let lx = left + pw + 15.0;
        let _ = writeln!(
            svg,
            r#"<line x1="{lx}" y1="{ly}" x2="{}" y2="{ly}" stroke="{color}" stroke-width="3"/><text x="{}" y="{}">{}</text>"#,
            lx + 20.0,
            lx + 26.0,
            ly + 4.0,
            escape(&s.label)
        );
    }
    svg.push_str("</svg>\n");
    Ok(svg)
}

pub fn emit_plot_svg(path: &Path, title: &str, y_label: &str, series: &[Series]) -> Result<()> {
    let svg = render_plot_svg(title, y_label, series)?;
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    fs::write(path, svg).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn trace() -> EpisodeTrace {
        let days = (0..4)
            .map(|day| {
                let mut counts = [0; Compartment::COUNT];
                counts[0] = 10 - day as usize;
                counts[7] = day as usize;
                DayRecord {
                    day,
                    counts,
                    below_poverty_line: 2 * day as usize,
                    doses_given: day as usize,
                }
            })
            .collect();
        EpisodeTrace { population: 10, days }
    }

    #[test]
    fn trace_csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("nested/trace.csv");
        let t = trace();
        write_trace_csv(&t, &path).unwrap();
        let text = fs::read_to_string(&path).unwrap();
        assert!(text.starts_with(&TRACE_HEADER.join(",")));
        assert_eq!(read_trace_csv(&path).unwrap(), t);
    }

    #[test]
    fn bad_header_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.csv");
        fs::write(&path, "day,s\n0,1\n").unwrap();
        assert!(read_trace_csv(&path).is_err());
    }

    #[test]
    fn svg_lists_every_series() {
        let s = [
            Series { label: "a<b".into(), values: vec![0.0, 3.0, 1.0] },
            Series { label: "flat".into(), values: vec![0.0; 3] },
        ];
        let svg = render_plot_svg("t & u", "people", &s).unwrap();
        assert_eq!(svg.matches("<polyline").count(), 2);
        assert!(svg.contains("a&lt;b") && svg.contains("t &amp; u"));
        assert!(render_plot_svg("empty", "y", &[]).is_err());
        let nan = [Series { label: "x".into(), values: vec![f64::NAN] }];
        assert!(render_plot_svg("nan", "y", &nan).is_err());
    }

    #[test]
    fn nice_axis() {
        assert_eq!(nice_ceiling(0.0), 1.0);
        assert_eq!(nice_ceiling(3.2), 5.0);
        assert_eq!(nice_ceiling(120.0), 200.0);
        assert_eq!(nice_ceiling(1000.0), 1000.0);
    }
}
