use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{Metrics, Result, StationPoint, StationReport};

pub const REPORT_HEADER: &str = "y,k_plus_rans,k_plus_hat,k_plus_dns,band_lo,band_hi";
pub const SUMMARY_FILE: &str = "summary.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StationSummary {
    pub id: String,
    /// Per-station CSV, relative to the report directory.
    pub file: String,
    pub points: usize,
    pub mae_baseline: f64,
    pub mae_corrected: f64,
    pub improvement_factor: Option<f64>,
    pub coverage: f64,
    pub mean_band_width: f64,
}

/// Metrics pooled over every point of every station.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub stations: usize,
    pub points: usize,
    pub mae_baseline: f64,
    pub mae_corrected: f64,
    pub improvement_factor: Option<f64>,
    pub coverage: f64,
    pub mean_band_width: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub stations: Vec<StationSummary>,
    pub aggregate: Aggregate,
}

impl Summary {
    pub fn from_reports(reports: &[StationReport]) -> Self {
        let stations = reports
            .iter()
            .map(|r| StationSummary {
                id: r.id.clone(),
                file: station_file(&r.id),
                points: r.points.len(),
                mae_baseline: r.mae_baseline,
                mae_corrected: r.mae_corrected,
                improvement_factor: r.improvement_factor,
                coverage: r.coverage,
                mean_band_width: r.mean_band_width,
            })
            .collect();
        let pooled: Vec<StationPoint> = reports.iter().flat_map(|r| r.points.iter().copied()).collect();
        let m = Metrics::of(&pooled);
        Self {
            stations,
            aggregate: Aggregate {
                stations: reports.len(),
                points: pooled.len(),
                mae_baseline: m.mae_baseline,
                mae_corrected: m.mae_corrected,
                improvement_factor: m.improvement_factor(),
                coverage: m.coverage,
                mean_band_width: m.mean_band_width,
            },
        }
    }
}

/// `synthetic@3` → `station_synthetic_3.csv`
fn station_file(id: &str) -> String {
    let safe: String = id
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '.' { c } else { '_' })
        .collect();
    format!("station_{safe}.csv")
}

fn write_station(path: &Path, points: &[StationPoint]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "{REPORT_HEADER}")?;
    for p in points {
        writeln!(
            w,
            "{},{},{},{},{},{}",
            p.y, p.k_plus_rans, p.k_plus_hat, p.k_plus_dns, p.band_lo, p.band_hi
        )?;
    }
    w.flush()?;
    Ok(())
}

/// Writes one CSV per station plus `summary.json` into `dir`.
pub fn write_report(dir: &Path, reports: &[StationReport]) -> Result<Summary> {
    std::fs::create_dir_all(dir)?;
    let summary = Summary::from_reports(reports);
    for (r, s) in reports.iter().zip(&summary.stations) {
        write_station(&dir.join(&s.file), &r.points)?;
    }
    let mut text = serde_json::to_string_pretty(&summary)?;
    text.push('\n');
    std::fs::write(summary_path(dir), text)?;
    Ok(summary)
}

fn summary_path(dir: &Path) -> PathBuf {
    dir.join(SUMMARY_FILE)
}

pub fn read_summary(dir: &Path) -> Result<Summary> {
    Ok(serde_json::from_str(&std::fs::read_to_string(summary_path(dir))?)?)
}
