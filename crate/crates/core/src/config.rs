//! JSON configuration documents.
//!
//! Every field is optional; missing fields take their defaults. Dephasing
//! times are given in seconds and an absent time switches that channel off.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::adiabaticity::{PairSelection, DEFAULT_GAP_FLOOR};
use crate::dynamics::{DephasingParams, IntegratorConfig};
use crate::error::{Error, Result};
use crate::gate::{CnotConfig, DriveSetting, ErrorMetric, DEFAULT_A2, DEFAULT_DELTA_A1};
use crate::hamiltonian::PhysicalConstants;
use crate::pulses::{ProfileKind, StageDurations};

pub const SCHEMA_VERSION: u32 = 1;
pub const MAX_GRID_AXIS: usize = 64;

/// Log-spaced axis `[min, max]` with `count` points, or explicit `values`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AxisSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub min: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub count: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub values: Option<Vec<f64>>,
}

impl AxisSpec {
    pub fn log(min: f64, max: f64, count: usize) -> Self {
        AxisSpec { min: Some(min), max: Some(max), count: Some(count), values: None }
    }

    pub fn explicit(values: Vec<f64>) -> Self {
        AxisSpec { min: None, max: None, count: None, values: Some(values) }
    }

    fn resolve(&self, name: &str) -> Result<Vec<f64>> {
        let values = match (&self.values, self.min, self.max, self.count) {
            (Some(v), None, None, None) => v.clone(),
            (None, Some(lo), Some(hi), Some(n)) => log_space(lo, hi, n)
                .ok_or_else(|| Error::Config(format!("sweep.{name}: need 0 < min < max and count >= 2 (or min == max, count 1)")))?,
            _ => return Err(Error::Config(format!("sweep.{name}: give either values or all of min, max, count"))),
        };
        if values.is_empty() || values.len() > MAX_GRID_AXIS {
            return Err(Error::Config(format!("sweep.{name}: {} points, allowed 1..={MAX_GRID_AXIS}", values.len())));
        }
        if values.iter().any(|&v| !(v > 0.0 && v.is_finite())) {
            return Err(Error::Config(format!("sweep.{name}: values must be positive and finite")));
        }
        if values.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Config(format!("sweep.{name}: values must be strictly increasing")));
        }
        Ok(values)
    }
}

/// `count` points from `min` to `max`, evenly spaced in log10.
pub fn log_space(min: f64, max: f64, count: usize) -> Option<Vec<f64>> {
    if !(min > 0.0 && max.is_finite()) || count == 0 {
        return None;
    }
    if count == 1 {
        return (min == max).then(|| vec![min]);
    }
    if !(max > min) {
        return None;
    }
    let (a, b) = (min.log10(), max.log10());
    Some(
        (0..count)
            .map(|k| match k {
                0 => min,
                k if k == count - 1 => max,
                k => 10f64.powf(a + (b - a) * k as f64 / (count - 1) as f64),
            })
            .collect(),
    )
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    /// s
    pub tau_e: AxisSpec,
    /// s
    pub tau_n: AxisSpec,
}

impl Default for SweepSpec {
    fn default() -> Self {
        SweepSpec { tau_e: AxisSpec::log(1e-6, 1e-2, 12), tau_n: AxisSpec::log(1e-4, 1e2, 12) }
    }
}

/// Resolved sweep axes in seconds.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepGrid {
    pub tau_e_s: Vec<f64>,
    pub tau_n_s: Vec<f64>,
}

impl SweepGrid {
    pub fn new(tau_e_s: Vec<f64>, tau_n_s: Vec<f64>) -> Result<Self> {
        let tau_e_s = AxisSpec::explicit(tau_e_s).resolve("tau_e")?;
        let tau_n_s = AxisSpec::explicit(tau_n_s).resolve("tau_n")?;
        Ok(SweepGrid { tau_e_s, tau_n_s })
    }

    pub fn len(&self) -> usize {
        self.tau_e_s.len() * self.tau_n_s.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Grid points ordered by `(tau_e, tau_n)`.
    pub fn points(&self) -> Vec<(f64, f64)> {
        self.tau_e_s.iter().flat_map(|&e| self.tau_n_s.iter().map(move |&n| (e, n))).collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ThetaSpec {
    pub n_samples: usize,
    /// u
    pub gap_floor: f64,
    pub selection: PairSelection,
}

impl Default for ThetaSpec {
    fn default() -> Self {
        ThetaSpec { n_samples: 2001, gap_floor: DEFAULT_GAP_FLOOR, selection: PairSelection::Register }
    }
}

/// On-disk configuration document.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ConfigFile {
    pub schema_version: u32,
    pub constants: PhysicalConstants,
    /// T
    pub b_z: f64,
    /// u
    pub a2: f64,
    /// u
    pub delta_a1: f64,
    /// u
    pub j_max: f64,
    pub profile: ProfileKind,
    /// μs
    pub durations: StageDurations,
    pub b_ac: DriveSetting,
    /// Electron dephasing time, s.
    pub tau_e: Option<f64>,
    /// Nuclear dephasing time, s.
    pub tau_n: Option<f64>,
    pub integrator: IntegratorConfig,
    pub error_metric: ErrorMetric,
    pub theta: ThetaSpec,
    pub sweep: SweepSpec,
}

impl Default for ConfigFile {
    fn default() -> Self {
        let d = CnotConfig::default();
        ConfigFile {
            schema_version: SCHEMA_VERSION,
            constants: d.constants,
            b_z: d.b_z,
            a2: DEFAULT_A2,
            delta_a1: DEFAULT_DELTA_A1,
            j_max: d.j_max,
            profile: d.profile,
            durations: d.durations,
            b_ac: d.b_ac,
            tau_e: None,
            tau_n: None,
            integrator: d.integrator,
            error_metric: d.error_metric,
            theta: ThetaSpec::default(),
            sweep: SweepSpec::default(),
        }
    }
}

/// Seconds to μs, with `None` meaning no dephasing.
fn tau_us(name: &str, tau_s: Option<f64>) -> Result<f64> {
    match tau_s {
        None => Ok(f64::INFINITY),
        Some(t) if t > 0.0 && !t.is_nan() => Ok(t * 1e6),
        Some(t) => Err(Error::Config(format!("{name} must be > 0 s, got {t}"))),
    }
}

impl ConfigFile {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: ConfigFile = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json(&text).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(Error::Config(format!(
                "schema_version {} is not supported (expected {SCHEMA_VERSION})",
                self.schema_version
            )));
        }
        if self.theta.n_samples < 2 || !(self.theta.gap_floor > 0.0) {
            return Err(Error::Config("theta needs n_samples >= 2 and gap_floor > 0".into()));
        }
        self.grid()?;
        self.cnot()?.validate()
    }

    pub fn dephasing(&self) -> Result<DephasingParams> {
        DephasingParams::from_times(tau_us("tau_e", self.tau_e)?, tau_us("tau_n", self.tau_n)?)
    }

    pub fn cnot(&self) -> Result<CnotConfig> {
        Ok(CnotConfig {
            constants: self.constants,
            b_z: self.b_z,
            a2: self.a2,
            delta_a1: self.delta_a1,
            j_max: self.j_max,
            profile: self.profile,
            durations: self.durations,
            b_ac: self.b_ac,
            dephasing: self.dephasing()?,
            integrator: self.integrator,
            error_metric: self.error_metric,
        })
    }

    pub fn grid(&self) -> Result<SweepGrid> {
        Ok(SweepGrid { tau_e_s: self.sweep.tau_e.resolve("tau_e")?, tau_n_s: self.sweep.tau_n.resolve("tau_n")? })
    }

    /// Canonical JSON of the fully resolved document.
    pub fn canonical_json(&self) -> String {
        serde_json::to_string(self).expect("config serialises")
    }

    pub fn sha256(&self) -> String {
        let digest = Sha256::digest(self.canonical_json().as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_document_gives_defaults() {
        let cfg = ConfigFile::from_json("{}").unwrap();
        assert_eq!(cfg, ConfigFile::default());
        let c = cfg.cnot().unwrap();
        assert_eq!(c.durations.as_array(), [9.0, 0.14, 7.5989, 0.14, 9.0]);
        assert_eq!(c.j_max, 810.0);
        assert_eq!(c.profile, ProfileKind::Linsin);
        assert!(c.dephasing.is_zero());
        let g = cfg.grid().unwrap();
        assert_eq!((g.tau_e_s.len(), g.tau_n_s.len()), (12, 12));
        assert_eq!(g.tau_e_s[0], 1e-6);
        assert_eq!(g.tau_n_s[11], 1e2);
    }

    #[test]
    fn unknown_key_is_named() {
        let err = ConfigFile::from_json(r#"{"tau_x": 1.0}"#).unwrap_err();
        assert!(matches!(err, Error::Config(ref m) if m.contains("tau_x")), "{err}");
        let err = ConfigFile::from_json(r#"{"durations": {"stage9": 1.0}}"#).unwrap_err();
        assert!(err.to_string().contains("stage9"));
    }

    #[test]
    fn zero_dephasing_time_is_rejected() {
        for doc in [r#"{"tau_e": 0}"#, r#"{"tau_n": -1e-3}"#] {
            assert!(matches!(ConfigFile::from_json(doc), Err(Error::Config(_))), "{doc}");
        }
    }

    #[test]
    fn dephasing_times_convert_to_microseconds() {
        let cfg = ConfigFile::from_json(r#"{"tau_e": 5e-4, "tau_n": 5e-2}"#).unwrap();
        let d = cfg.dephasing().unwrap();
        assert!((d.tau_e() - 500.0).abs() < 1e-9);
        assert!((d.tau_n() - 5e4).abs() < 1e-6);
    }

    #[test]
    fn j_max_past_crossing_is_rejected() {
        assert!(matches!(ConfigFile::from_json(r#"{"j_max": 820}"#), Err(Error::Config(_))));
    }

    #[test]
    fn wrong_schema_version() {
        assert!(ConfigFile::from_json(r#"{"schema_version": 7}"#).is_err());
    }

    #[test]
    fn grid_limits() {
        let doc = r#"{"sweep": {"tau_e": {"min": 1e-6, "max": 1e-2, "count": 65}, "tau_n": {"values": [1.0]}}}"#;
        assert!(ConfigFile::from_json(doc).is_err());
        let doc = r#"{"sweep": {"tau_e": {"values": [2e-6, 1e-6]}, "tau_n": {"values": [1.0]}}}"#;
        assert!(ConfigFile::from_json(doc).is_err());
        let doc = r#"{"sweep": {"tau_e": {"values": [1e-6], "min": 1e-6}, "tau_n": {"values": [1.0]}}}"#;
        assert!(ConfigFile::from_json(doc).is_err());
    }

    #[test]
    fn hash_tracks_content() {
        let a = ConfigFile::default();
        let mut b = a.clone();
        assert_eq!(a.sha256(), b.sha256());
        b.tau_e = Some(1e-3);
        assert_ne!(a.sha256(), b.sha256());
        assert_eq!(a.sha256().len(), 64);
    }

    #[test]
    fn round_trips_through_json() {
        let mut a = ConfigFile::default();
        a.b_ac = DriveSetting::Fixed(7e-4);
        a.tau_e = Some(2e-6);
        let b = ConfigFile::from_json(&a.canonical_json()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn log_space_endpoints_and_ratio() {
        let v = log_space(1e-4, 1e2, 7).unwrap();
        assert_eq!(v.len(), 7);
        for w in v.windows(2) {
            assert!((w[1] / w[0] - 10.0).abs() < 1e-9);
        }
        assert!(log_space(1.0, 0.5, 3).is_none());
    }
}
