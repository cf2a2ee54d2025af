//! Error maps over a grid of dephasing times.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::config::{ConfigFile, SweepGrid};
use crate::dynamics::DephasingParams;
use crate::error::{Error, Result};
use crate::gate::{run_dephasing_points, CnotConfig, GateRunResult, InputLabel, ResolvedGate};
use crate::parallel;

/// Label used for the per-point worst case in the `input` column.
pub const WORST_LABEL: &str = "max";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub tau_e_s: f64,
    pub tau_n_s: f64,
    /// `00`..`11`, or `max` for the worst case at this point.
    pub input: String,
    /// NaN when the point failed.
    #[serde(with = "nan_as_null")]
    pub error: f64,
    pub status: String,
}

mod nan_as_null {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_f64(*v)
        } else {
            s.serialize_none()
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::NAN))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub schema_version: u32,
    pub config_sha256: String,
    pub config: ConfigFile,
    /// T
    pub b_ac: f64,
    pub grid: SweepGrid,
    /// Sorted by `(tau_e, tau_n, input)`, inputs before the worst case.
    pub rows: Vec<SweepRow>,
}

impl SweepResult {
    pub fn failures(&self) -> usize {
        self.rows.iter().filter(|r| r.status != "ok" && r.input == WORST_LABEL).count()
    }

    /// Worst case at grid point `(i_e, i_n)`.
    pub fn worst(&self, i_e: usize, i_n: usize) -> f64 {
        let (e, n) = (self.grid.tau_e_s[i_e], self.grid.tau_n_s[i_n]);
        self.rows
            .iter()
            .find(|r| r.tau_e_s == e && r.tau_n_s == n && r.input == WORST_LABEL)
            .map_or(f64::NAN, |r| r.error)
    }
}

fn row(tau_e_s: f64, tau_n_s: f64, input: &str, error: f64, status: &str) -> SweepRow {
    SweepRow { tau_e_s, tau_n_s, input: input.to_string(), error, status: status.to_string() }
}

fn ok_rows(tau_e_s: f64, tau_n_s: f64, runs: &[GateRunResult]) -> Vec<SweepRow> {
    let mut rows: Vec<SweepRow> = runs.iter().map(|r| row(tau_e_s, tau_n_s, r.input.as_str(), r.error, "ok")).collect();
    rows.push(row(tau_e_s, tau_n_s, WORST_LABEL, runs.iter().map(|r| r.error).fold(0.0, f64::max), "ok"));
    rows
}

fn failed_rows(tau_e_s: f64, tau_n_s: f64, e: &Error) -> Vec<SweepRow> {
    log::warn!("sweep point tau_e = {tau_e_s:e} s, tau_n = {tau_n_s:e} s failed: {e}");
    let status = format!("failed: {e}");
    InputLabel::ALL
        .iter()
        .map(|l| l.as_str())
        .chain([WORST_LABEL])
        .map(|l| row(tau_e_s, tau_n_s, l, f64::NAN, &status))
        .collect()
}

fn rates(point: (f64, f64)) -> Result<DephasingParams> {
    DephasingParams::from_times(point.0 * 1e6, point.1 * 1e6)
}

/// Rows for a contiguous group of points, evolved as one batch. If the
/// batch fails, points are retried one by one so that only the failing ones
/// are marked.
fn chunk_rows(cfg: &CnotConfig, gate: &ResolvedGate, chunk: &[(f64, f64)]) -> Vec<SweepRow> {
    let batch = chunk.iter().map(|&p| rates(p)).collect::<Result<Vec<_>>>();
    if let Ok(Ok(all)) = batch.map(|r| run_dephasing_points(cfg, gate, &r)) {
        return chunk.iter().zip(&all).flat_map(|(&(e, n), runs)| ok_rows(e, n, runs)).collect();
    }
    chunk
        .iter()
        .flat_map(|&(e, n)| match rates((e, n)).and_then(|r| run_dephasing_points(cfg, gate, &[r])) {
            Ok(runs) => ok_rows(e, n, &runs[0]),
            Err(err) => failed_rows(e, n, &err),
        })
        .collect()
}

/// Calibrates once, then evaluates every grid point. Failed points become
/// rows with a `failed` status instead of aborting the sweep.
pub fn run_sweep(file: &ConfigFile, grid: &SweepGrid, parallelism: usize) -> Result<SweepResult> {
    file.validate()?;
    let cfg = file.cnot()?;
    let gate = cfg.resolve()?;
    let points = grid.points();
    let workers = parallelism.clamp(1, points.len().max(1));
    log::info!("sweeping {} points with {} worker(s)", points.len(), workers);
    let chunks: Vec<&[(f64, f64)]> = points.chunks(points.len().div_ceil(workers).max(1)).collect();
    let rows: Vec<SweepRow> =
        parallel::map(&chunks, workers, |c| chunk_rows(&cfg, &gate, c)).into_iter().flatten().collect();
    Ok(SweepResult {
        schema_version: crate::config::SCHEMA_VERSION,
        config_sha256: file.sha256(),
        config: file.clone(),
        b_ac: gate.b_ac,
        grid: grid.clone(),
        rows,
    })
}

fn num(x: f64) -> String {
    if x.is_nan() {
        "NaN".to_string()
    } else {
        format!("{x:.16e}")
    }
}

/// Long-format table, `tau_e_s,tau_n_s,input,error`.
pub fn csv_string(result: &SweepResult) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "# config_sha256={}", result.config_sha256);
    let _ = writeln!(out, "# b_ac_t={}", num(result.b_ac));
    out.push_str("tau_e_s,tau_n_s,input,error\n");
    for r in &result.rows {
        let _ = writeln!(out, "{},{},{},{}", num(r.tau_e_s), num(r.tau_n_s), r.input, num(r.error));
    }
    for r in result.rows.iter().filter(|r| r.input == WORST_LABEL && r.status != "ok") {
        let _ = writeln!(out, "# {} {} {}", num(r.tau_e_s), num(r.tau_n_s), r.status);
    }
    out
}

/// Worst-case matrix: one row per τ_n, one column per τ_e.
pub fn contour_string(result: &SweepResult) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "# config_sha256={}", result.config_sha256);
    out.push_str("tau_n_s");
    for &e in &result.grid.tau_e_s {
        let _ = write!(out, ",{}", num(e));
    }
    out.push('\n');
    for (i_n, &n) in result.grid.tau_n_s.iter().enumerate() {
        out.push_str(&num(n));
        for i_e in 0..result.grid.tau_e_s.len() {
            let _ = write!(out, ",{}", num(result.worst(i_e, i_n)));
        }
        out.push('\n');
    }
    out
}

pub fn json_string(result: &SweepResult) -> Result<String> {
    Ok(serde_json::to_string_pretty(result)?)
}

pub fn emit_csv(result: &SweepResult, path: &Path) -> Result<()> {
    Ok(std::fs::write(path, csv_string(result))?)
}

pub fn emit_contour(result: &SweepResult, path: &Path) -> Result<()> {
    Ok(std::fs::write(path, contour_string(result))?)
}

pub fn emit_json(result: &SweepResult, path: &Path) -> Result<()> {
    Ok(std::fs::write(path, json_string(result)?)?)
}

/// Hash recorded in the first line of an emitted CSV or contour file.
pub fn embedded_hash(text: &str) -> Option<&str> {
    text.lines().next()?.strip_prefix("# config_sha256=")
}
