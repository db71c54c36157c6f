//! Report export: smoothed reward tables and SVG learning curves.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use super::experiment::mean_stderr;
use super::record::{RunRecord, UpdateRow};
use crate::error::{Error, Result};

/// Points in the trailing smoothing window.
pub const SMOOTHING_WINDOW: usize = 30;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ReportFormat {
    Csv,
    Svg,
}

impl FromStr for ReportFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(ReportFormat::Csv),
            "svg" => Ok(ReportFormat::Svg),
            _ => Err(Error::Config(format!("unknown report format '{s}' (csv, svg)"))),
        }
    }
}

/// Records of one configuration, one per seed.
#[derive(Clone, Debug, PartialEq)]
pub struct Series {
    pub label: String,
    pub records: Vec<RunRecord>,
}

/// Trailing moving average; the window is clipped at the start of the series.
pub fn smooth(values: &[f64], window: usize) -> Vec<f64> {
    let window = window.max(1);
    (0..values.len())
        .map(|i| {
            let part = &values[(i + 1).saturating_sub(window)..=i];
            // Summing offsets from the first value keeps constant series exact.
            part[0] + part.iter().map(|v| v - part[0]).sum::<f64>() / part.len() as f64
        })
        .collect()
}

/// Cross-seed mean and standard error of each seed's smoothed reward, by row position.
pub fn smoothed_band(series: &Series) -> Vec<(f64, f64, f64)> {
    let smoothed: Vec<Vec<f64>> = series
        .records
        .iter()
        .map(|r| smooth(&r.column(|x| x.mean_episode_reward), SMOOTHING_WINDOW))
        .collect();
    let longest = series.records.iter().map(|r| r.rows().len()).max().unwrap_or(0);
    (0..longest)
        .map(|i| {
            let xs: Vec<f64> = series.records.iter().filter_map(|r| r.rows().get(i)).map(|r| r.timesteps as f64).collect();
            let ys: Vec<f64> = smoothed.iter().filter_map(|s| s.get(i).copied()).collect();
            let (m, se) = mean_stderr(&ys);
            (mean_stderr(&xs).0, m, se)
        })
        .collect()
}

const CSV_HEADER: [&str; 13] = [
    "series",
    "seed",
    "update",
    "timesteps",
    "mean_episode_reward",
    "mean_kl",
    "clip_fraction",
    "policy_loss",
    "value_loss",
    "l2_loss",
    "smoothed_reward",
    "series_smoothed_reward",
    "series_smoothed_stderr",
];

pub fn report_csv(series: &[Series]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let err = |e: csv::Error| Error::Config(format!("report csv: {e}"));
    w.write_record(CSV_HEADER).map_err(err)?;
    for s in series {
        let band = smoothed_band(s);
        for rec in &s.records {
            let own = smooth(&rec.column(|x| x.mean_episode_reward), SMOOTHING_WINDOW);
            for (i, row) in rec.rows().iter().enumerate() {
                w.write_record([
                    s.label.clone(),
                    rec.seed.to_string(),
                    row.update.to_string(),
                    row.timesteps.to_string(),
                    row.mean_episode_reward.to_string(),
                    row.mean_kl.to_string(),
                    row.clip_fraction.to_string(),
                    row.policy_loss.to_string(),
                    row.value_loss.to_string(),
                    row.l2_loss.to_string(),
                    own[i].to_string(),
                    band[i].1.to_string(),
                    band[i].2.to_string(),
                ])
                .map_err(err)?;
            }
        }
    }
    let bytes = w.into_inner().map_err(|e| Error::Config(format!("report csv: {e}")))?;
    Ok(String::from_utf8(bytes).expect("csv output is UTF-8"))
}

/// Reads the raw columns of a report back into series.
pub fn parse_report_csv(text: &str) -> Result<Vec<Series>> {
    let err = |e: csv::Error| Error::Config(format!("report csv: {e}"));
    let mut r = csv::Reader::from_reader(text.as_bytes());
    if r.headers().map_err(err)?.iter().ne(CSV_HEADER) {
        return Err(Error::Config("report csv has an unexpected header".into()));
    }
    let mut out: Vec<Series> = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(err)?;
        let num = |i: usize| -> Result<f64> {
            rec[i].parse().map_err(|_| Error::Config(format!("report csv: bad number '{}'", &rec[i])))
        };
        let int = |i: usize| -> Result<usize> {
            rec[i].parse().map_err(|_| Error::Config(format!("report csv: bad integer '{}'", &rec[i])))
        };
        let label = rec[0].to_string();
        let seed: u64 = rec[1].parse().map_err(|_| Error::Config(format!("report csv: bad seed '{}'", &rec[1])))?;
        let row = UpdateRow {
            update: int(2)?,
            timesteps: int(3)?,
            mean_episode_reward: num(4)?,
            mean_kl: num(5)?,
            clip_fraction: num(6)?,
            policy_loss: num(7)?,
            value_loss: num(8)?,
            l2_loss: num(9)?,
        };
        let series = match out.iter_mut().position(|s| s.label == label) {
            Some(i) => &mut out[i],
            None => {
                out.push(Series {
                    label: label.clone(),
                    records: Vec::new(),
                });
                out.last_mut().expect("just pushed")
            }
        };
        let record = match series.records.iter_mut().position(|r| r.seed == seed) {
            Some(i) => &mut series.records[i],
            None => {
                series.records.push(RunRecord::new("", "", seed));
                series.records.last_mut().expect("just pushed")
            }
        };
        record.push(row)?;
    }
    Ok(out)
}

const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf"];

pub fn report_svg(series: &[Series]) -> String {
    let (w, h, left, right, top, bottom) = (800.0, 480.0, 70.0, 20.0, 20.0, 50.0);
    let bands: Vec<_> = series.iter().map(smoothed_band).collect();
    let all = bands.iter().flatten();
    let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for &(x, m, se) in all {
        x0 = x0.min(x);
        x1 = x1.max(x);
        y0 = y0.min(m - se);
        y1 = y1.max(m + se);
    }
    if !x0.is_finite() {
        (x0, x1, y0, y1) = (0.0, 1.0, 0.0, 1.0);
    }
    if x1 - x0 < 1e-12 {
        x1 = x0 + 1.0;
    }
    if y1 - y0 < 1e-12 {
        y0 -= 0.5;
        y1 += 0.5;
    }
    let px = |x: f64| left + (x - x0) / (x1 - x0) * (w - left - right);
    let py = |y: f64| h - bottom - (y - y0) / (y1 - y0) * (h - top - bottom);

    let mut svg = String::new();
    let _ = writeln!(svg, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}">"#);
    let _ = writeln!(svg, r#"<rect width="{w}" height="{h}" fill="white"/>"#);
    let _ = writeln!(
        svg,
        r#"<g stroke="black" fill="none"><line x1="{left}" y1="{b}" x2="{r}" y2="{b}"/><line x1="{left}" y1="{top}" x2="{left}" y2="{b}"/></g>"#,
        b = h - bottom,
        r = w - right
    );
    let _ = writeln!(
        svg,
        r#"<g font-family="sans-serif" font-size="12"><text x="{left}" y="{}">{x0:.0}</text><text x="{}" y="{}" text-anchor="end">{x1:.0}</text><text x="{}" y="{}" text-anchor="end">{y0:.3}</text><text x="{}" y="{}" text-anchor="end">{y1:.3}</text><text x="{}" y="{}" text-anchor="middle">timesteps</text><text x="14" y="{}" transform="rotate(-90 14 {})" text-anchor="middle">reward</text></g>"#,
        h - bottom + 16.0,
        w - right,
        h - bottom + 16.0,
        left - 4.0,
        h - bottom,
        left - 4.0,
        top + 10.0,
        (w + left) / 2.0,
        h - 10.0,
        h / 2.0,
        h / 2.0
    );
    for (k, (s, band)) in series.iter().zip(&bands).enumerate() {
        let color = PALETTE[k % PALETTE.len()];
        if band.is_empty() {
            continue;
        }
        let mut poly = String::new();
        for &(x, m, se) in band {
            let _ = write!(poly, "{:.2},{:.2} ", px(x), py(m + se));
        }
        for &(x, m, se) in band.iter().rev() {
            let _ = write!(poly, "{:.2},{:.2} ", px(x), py(m - se));
        }
        let _ = writeln!(svg, r#"<polygon points="{}" fill="{color}" fill-opacity="0.2" stroke="none"/>"#, poly.trim_end());
        let line: Vec<String> = band.iter().map(|&(x, m, _)| format!("{:.2},{:.2}", px(x), py(m))).collect();
        let _ = writeln!(
            svg,
            r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="1.5"/>"#,
            line.join(" ")
        );
        let ly = top + 16.0 * (k as f64 + 1.0);
        let _ = writeln!(
            svg,
            r#"<text x="{}" y="{ly}" font-family="sans-serif" font-size="12" fill="{color}">{}</text>"#,
            left + 10.0,
            escape(&s.label)
        );
    }
    svg.push_str("</svg>\n");
    svg
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Writes `report.csv` or `report.svg` into `out_dir`.
pub fn export_report(series: &[Series], format: ReportFormat, out_dir: &Path) -> Result<PathBuf> {
    if series.iter().all(|s| s.records.is_empty()) {
        return Err(Error::Config("nothing to report: no run records".into()));
    }
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let (name, body) = match format {
        ReportFormat::Csv => ("report.csv", report_csv(series)?),
        ReportFormat::Svg => ("report.svg", report_svg(series)),
    };
    let path = out_dir.join(name);
    std::fs::write(&path, body).map_err(|e| Error::io(&path, e))?;
    Ok(path)
}

fn find_records(dir: &Path, found: &mut Vec<PathBuf>) -> Result<()> {
    let entries = std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut paths: Vec<PathBuf> = entries
        .map(|e| e.map(|e| e.path()).map_err(|e| Error::io(dir, e)))
        .collect::<Result<_>>()?;
    paths.sort();
    for p in paths {
        if p.is_dir() {
            find_records(&p, found)?;
        } else if p.file_name().is_some_and(|n| n == "record.csv") {
            found.push(p);
        }
    }
    Ok(())
}

/// Loads every `record.csv` below `dir`, one series per experiment directory.
pub fn load_runs(dir: &Path) -> Result<Vec<Series>> {
    let mut files = Vec::new();
    find_records(dir, &mut files)?;
    let mut groups: BTreeMap<String, Vec<RunRecord>> = BTreeMap::new();
    for f in files {
        let experiment = f.parent().and_then(Path::parent).unwrap_or(dir);
        let label = match experiment.strip_prefix(dir) {
            Ok(rel) if !rel.as_os_str().is_empty() => rel.display().to_string(),
            _ => dir.file_name().map_or_else(|| "run".into(), |n| n.to_string_lossy().into_owned()),
        };
        groups.entry(label).or_default().push(RunRecord::load(&f)?);
    }
    Ok(groups.into_iter().map(|(label, records)| Series { label, records }).collect())
}
