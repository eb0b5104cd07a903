//! Plot-ready campaign output. Frequencies are written in Hz.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::bayes::PosteriorGrid;
use crate::error::Result;
use crate::physics::angular_to_hz;
use crate::protocols::CampaignResult;

/// One row of the trace CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub timestamp: f64,
    #[serde(rename = "T")]
    pub t: f64,
    pub offset: f64,
    pub n: u32,
    #[serde(rename = "N")]
    pub big_n: u32,
    pub m: u32,
    #[serde(rename = "M")]
    pub big_m: u32,
    pub omega_mean_hz: f64,
    pub omega_err_hz: f64,
    pub wall_time: f64,
}

pub fn trace_rows(result: &CampaignResult) -> Vec<TraceRow> {
    result
        .records
        .iter()
        .zip(&result.estimate_history)
        .map(|(r, e)| TraceRow {
            timestamp: r.timestamp,
            t: r.cycle.interrogation_time,
            offset: r.cycle.analysis_offset,
            n: r.outcome.xx_even,
            big_n: r.outcome.xx_shots,
            m: r.outcome.xy_even,
            big_m: r.outcome.xy_shots,
            omega_mean_hz: angular_to_hz(e.omega_mean),
            omega_err_hz: angular_to_hz(e.omega_err),
            wall_time: r.wall_time,
        })
        .collect()
}

/// Trace as CSV text with a header row.
pub fn trace_csv(result: &CampaignResult) -> Result<Vec<u8>> {
    let mut writer = csv::Writer::from_writer(Vec::new());
    for row in trace_rows(result) {
        writer.serialize(row)?;
    }
    writer.flush()?;
    Ok(writer.into_inner().map_err(|e| e.into_error())?)
}

/// Parses a trace written by [`trace_csv`].
pub fn read_trace<R: std::io::Read>(reader: R) -> Result<Vec<TraceRow>> {
    let mut reader = csv::Reader::from_reader(reader);
    let rows = reader.deserialize().collect::<std::result::Result<Vec<TraceRow>, _>>()?;
    Ok(rows)
}

/// Campaign summary in Hz.
#[derive(Debug, Clone, Serialize)]
pub struct CampaignSummary {
    pub units: &'static str,
    pub cycles: usize,
    pub omega_mean: f64,
    pub omega_err: f64,
    pub phi0_mean_rad: f64,
    pub phi0_err_rad: f64,
    /// Hz/√Hz.
    pub sensitivity: f64,
    /// Median single-measurement sensitivity at T_max, Hz/√Hz.
    pub tracking_sensitivity: Option<f64>,
    pub total_wall_time_s: f64,
}

impl CampaignSummary {
    pub fn new(result: &CampaignResult) -> Self {
        let e = result.final_estimate;
        Self {
            units: "Hz",
            cycles: result.records.len(),
            omega_mean: angular_to_hz(e.omega_mean),
            omega_err: angular_to_hz(e.omega_err),
            phi0_mean_rad: e.phi0_mean,
            phi0_err_rad: e.phi0_err,
            sensitivity: angular_to_hz(result.sensitivity),
            tracking_sensitivity: result.tracking_sensitivity().map(angular_to_hz),
            total_wall_time_s: result.total_wall_time,
        }
    }
}

/// Cell masses of a posterior as CSV (omega_hz, phi0, mass).
pub fn posterior_csv(grid: &PosteriorGrid) -> Result<Vec<u8>> {
    let mut writer = csv::Writer::from_writer(Vec::new());
    writer.write_record(["omega_hz", "phi0", "mass"])?;
    let masses = grid.masses();
    let n = grid.n_phi0();
    for (k, mass) in masses.iter().enumerate() {
        let (i, j) = (k / n, k % n);
        writer.write_record([
            angular_to_hz(grid.omega(i)).to_string(),
            grid.phi0(j).to_string(),
            mass.to_string(),
        ])?;
    }
    writer.flush()?;
    Ok(writer.into_inner().map_err(|e| e.into_error())?)
}

/// Writes `bytes` to a temporary sibling and renames it over `path`, so a
/// failed write never leaves a partial file behind.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    let tmp = dir.join(format!(".{name}.tmp{}", std::process::id()));
    let result = (|| {
        let mut file = fs::File::create(&tmp)?;
        file.write_all(bytes)?;
        file.sync_all()?;
        fs::rename(&tmp, path)
    })();
    if result.is_err() {
        let _ = fs::remove_file(&tmp);
    }
    Ok(result?)
}

/// Serializes `value` as pretty JSON and writes it atomically.
pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_vec_pretty(value)?;
    text.push(b'\n');
    write_atomic(path, &text)
}
