//! Result rows, CSV/JSON rendering and run manifests.
//!
//! Floats are written as the shortest decimal that round-trips. Everything
//! that goes into a data file is a pure function of the command line, so a
//! replay reproduces it byte for byte; wall-clock times only appear in the
//! separate manifest file.

use std::fs;
use std::path::{Path, PathBuf};

use hbell::bell::{ChValue, EventScheme, ProbabilityPath, Settings};
use hbell::fock::TruncationPolicy;
use hbell::optimize::{setting_residual, OptResult};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::CliError;

/// One result row; the CSV column order is the field order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Row {
    pub p: f64,
    pub ch: f64,
    pub alpha1: f64,
    pub phi1: f64,
    #[serde(rename = "R1")]
    pub r1: f64,
    pub alpha2: f64,
    pub phi2: f64,
    #[serde(rename = "R2")]
    pub r2: f64,
    pub alpha1p: f64,
    pub phi1p: f64,
    #[serde(rename = "R1p")]
    pub r1p: f64,
    pub alpha2p: f64,
    pub phi2p: f64,
    #[serde(rename = "R2p")]
    pub r2p: f64,
    pub residual_max: Option<f64>,
    pub eta: f64,
    pub scheme: String,
    /// Empty for rows that involve no search.
    pub converged: Option<bool>,
}

#[allow(dead_code)]
pub const COLUMNS: [&str; 18] = [
    "p",
    "ch",
    "alpha1",
    "phi1",
    "R1",
    "alpha2",
    "phi2",
    "R2",
    "alpha1p",
    "phi1p",
    "R1p",
    "alpha2p",
    "phi2p",
    "R2p",
    "residual_max",
    "eta",
    "scheme",
    "converged",
];

impl Row {
    pub fn from_settings(p: f64, ch: f64, s: &Settings, eta: f64, scheme: EventScheme) -> Self {
        let residual_max = s
            .as_array()
            .iter()
            .filter_map(|x| setting_residual(scheme, eta, x))
            .reduce(f64::max);
        Row {
            p,
            ch,
            alpha1: s.a.alpha,
            phi1: s.a.phi,
            r1: s.a.r,
            alpha2: s.b.alpha,
            phi2: s.b.phi,
            r2: s.b.r,
            alpha1p: s.a_prime.alpha,
            phi1p: s.a_prime.phi,
            r1p: s.a_prime.r,
            alpha2p: s.b_prime.alpha,
            phi2p: s.b_prime.phi,
            r2p: s.b_prime.r,
            residual_max,
            eta,
            scheme: scheme.label(),
            converged: None,
        }
    }

    pub fn from_opt(p: f64, r: &OptResult, eta: f64, scheme: EventScheme) -> Self {
        Row {
            residual_max: r.residual_max(),
            converged: Some(r.best_converged),
            ..Row::from_settings(p, r.best.value, &r.settings, eta, scheme)
        }
    }

    pub fn from_value(p: f64, v: &ChValue, s: &Settings, eta: f64, scheme: EventScheme) -> Self {
        Row::from_settings(p, v.value, s, eta, scheme)
    }
}

/// Serialize records as CSV (`,` delimiter, LF line ends, header first).
pub fn to_csv<T: Serialize>(records: &[T]) -> Result<String, CliError> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(Vec::new());
    for r in records {
        w.serialize(r).map_err(|e| CliError::Io(e.to_string()))?;
    }
    let bytes = w.into_inner().map_err(|e| CliError::Io(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| CliError::Io(e.to_string()))
}

#[allow(dead_code)]
pub fn from_csv<T: for<'de> Deserialize<'de>>(text: &str) -> Result<Vec<T>, CliError> {
    csv::Reader::from_reader(text.as_bytes())
        .deserialize()
        .collect::<Result<Vec<T>, _>>()
        .map_err(|e| CliError::Io(e.to_string()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutputRecord {
    pub path: PathBuf,
    pub format: String,
    pub sha256: String,
}

/// Everything needed to reproduce a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    /// Full argument list after config expansion, program name excluded.
    pub argv: Vec<String>,
    /// Directory the arguments' relative paths refer to.
    pub workdir: PathBuf,
    pub seed: Option<u64>,
    pub truncation: TruncationPolicy,
    /// Probability routes that produced the results.
    pub provenance: Vec<ProbabilityPath>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub started_at: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub finished_at: Option<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub outputs: Vec<OutputRecord>,
}

/// A JSON result file: the manifest (without timestamps), rows in the CSV
/// schema and command-specific details.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JsonDocument {
    pub manifest: RunManifest,
    pub rows: Vec<Row>,
    pub details: serde_json::Value,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

pub fn write_file(path: &Path, contents: &str) -> Result<(), CliError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| CliError::Io(format!("{}: {e}", dir.display())))?;
    }
    fs::write(path, contents).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

pub fn now_rfc3339() -> String {
    time::OffsetDateTime::now_utc()
        .format(&time::format_description::well_known::Rfc3339)
        .unwrap_or_default()
}

#[cfg(test)]
mod tests {
    use super::*;
    use hbell::Setting;

    fn row() -> Row {
        let s = Settings::onoff_primed_off(Setting::new(0.69, 1.5707963267948966, 0.4764));
        Row::from_settings(0.1, 0.1 + 0.2, &s, 1.0, EventScheme::SinglePhotonDm)
    }

    #[test]
    fn csv_header_and_shortest_floats() {
        let text = to_csv(&[row()]).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), COLUMNS.join(","));
        let data = lines.next().unwrap();
        assert!(data.starts_with("0.1,0.30000000000000004,0.69,1.5707963267948966,0.4764,"), "{data}");
        assert!(data.ends_with(",1.0,single_photon_dm,"), "{data}");
        assert!(!text.contains('\r'));
        assert_eq!(from_csv::<Row>(&text).unwrap(), vec![row()]);
    }

    #[test]
    fn hash_is_hex() {
        let h = sha256_hex(b"abc");
        assert_eq!(h, "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
    }
}
