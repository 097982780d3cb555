//! On-disk formats.
//!
//! Scan CSV: `point_index,phase_rad,duration_s,singles1,singles2,coincidences,histogram_file`,
//! one row per point, `phase_rad` being `δ1 + δ2`. Each histogram goes to
//! `<stem>_hist/point_NNNN.csv` (`bin_center_ps,count`), referenced
//! relative to the scan CSV. Floats are written in shortest round-trip
//! form, so equal inputs give equal bytes.

use std::fs;
use std::path::{Path, PathBuf};

use franson::montecarlo::{CountRecord, Histogram};
use franson::PhaseSetting;
use serde::{de::DeserializeOwned, Deserialize, Serialize};

use crate::error::CliError;

pub const SCAN_COLUMNS: [&str; 7] = [
    "point_index",
    "phase_rad",
    "duration_s",
    "singles1",
    "singles2",
    "coincidences",
    "histogram_file",
];

pub const NET_COLUMNS: [&str; 6] = [
    "point_index",
    "phase_rad",
    "duration_s",
    "raw_coincidences",
    "accidentals",
    "net_coincidences",
];

pub const ENVELOPE_COLUMNS: [&str; 5] = [
    "path_mismatch_um",
    "visibility",
    "visibility_uncertainty",
    "raw_visibility",
    "accidentals_per_point",
];

/// Environment variable naming the directory relative output prefixes
/// are resolved against.
pub const OUT_DIR_ENV: &str = "FRANSON_OUT_DIR";

/// Where relative output prefixes go: `$FRANSON_OUT_DIR` if set.
pub fn resolve_output(prefix: &Path) -> PathBuf {
    if prefix.is_absolute() {
        return prefix.to_path_buf();
    }
    match std::env::var_os(OUT_DIR_ENV) {
        Some(dir) if !dir.is_empty() => Path::new(&dir).join(prefix),
        _ => prefix.to_path_buf(),
    }
}

/// `prefix` with `suffix` appended to its file name.
pub fn with_suffix(prefix: &Path, suffix: &str) -> PathBuf {
    let mut name = prefix.file_name().map(|n| n.to_os_string()).unwrap_or_default();
    name.push(suffix);
    prefix.with_file_name(name)
}

pub fn stem(prefix: &Path) -> String {
    prefix
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| "out".into())
}

fn ensure_parent(path: &Path) -> Result<(), CliError> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent).map_err(|e| CliError::io(parent, e))?;
        }
    }
    Ok(())
}

pub fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    ensure_parent(path)?;
    fs::write(path, text).map_err(|e| CliError::io(path, e))
}

pub fn read_text(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|e| CliError::io(path, e))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value).expect("serializable output");
    text.push('\n');
    write_text(path, &text)
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T, CliError> {
    let text = read_text(path)?;
    serde_json::from_str(&text).map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))
}

/// Renders a header and rows as CSV with `\n` line ends.
pub fn csv_text<I>(header: &[&str], rows: I) -> String
where
    I: IntoIterator<Item = Vec<String>>,
{
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(Vec::new());
    w.write_record(header).expect("in-memory write");
    for row in rows {
        w.write_record(&row).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 fields")
}

pub fn histogram_csv(h: &Histogram) -> String {
    csv_text(
        &["bin_center_ps", "count"],
        h.iter().map(|(center, count)| vec![center.to_string(), count.to_string()]),
    )
}

/// Writes the scan CSV at `<prefix>.csv` and its histograms; returns every
/// file written, relative to the CSV's directory.
pub fn write_scan(prefix: &Path, records: &[CountRecord]) -> Result<Vec<String>, CliError> {
    let csv_path = with_suffix(prefix, ".csv");
    let stem = stem(prefix);
    let base = csv_path.parent().map(Path::to_path_buf).unwrap_or_default();
    let mut written = vec![format!("{stem}.csv")];
    let mut rows = Vec::with_capacity(records.len());
    for (k, r) in records.iter().enumerate() {
        let rel = format!("{stem}_hist/point_{k:04}.csv");
        write_text(&base.join(&rel), &histogram_csv(&r.histogram))?;
        rows.push(vec![
            k.to_string(),
            r.setting.phase_sum().to_string(),
            r.duration_s.to_string(),
            r.singles1.to_string(),
            r.singles2.to_string(),
            r.windowed_coincidences.to_string(),
            rel.clone(),
        ]);
        written.push(rel);
    }
    write_text(&csv_path, &csv_text(&SCAN_COLUMNS, rows))?;
    Ok(written)
}

fn schema_error(path: &Path, row: u64, column: &str, message: impl std::fmt::Display) -> CliError {
    CliError::Validation(format!("{}: row {row}, column {column}: {message}", path.display()))
}

fn csv_error(path: &Path, e: csv::Error) -> CliError {
    let row = e.position().map(|p| p.line());
    match e.into_kind() {
        csv::ErrorKind::Io(io) => CliError::io(path, io),
        kind => match row {
            Some(row) => schema_error(path, row, "*", format!("{kind:?}")),
            None => CliError::Validation(format!("{}: {kind:?}", path.display())),
        },
    }
}

fn parse_field<T: std::str::FromStr>(path: &Path, row: u64, column: &str, raw: &str) -> Result<T, CliError> {
    raw.parse::<T>()
        .map_err(|_| schema_error(path, row, column, format!("cannot parse `{raw}`")))
}

/// Reads a scan CSV. Histograms are not loaded; records carry an empty one.
/// Rows are numbered as file lines, the header being row 1.
pub fn read_scan(path: &Path) -> Result<Vec<CountRecord>, CliError> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .flexible(true)
        .from_path(path)
        .map_err(|e| csv_error(path, e))?;
    let header = reader.headers().map_err(|e| csv_error(path, e))?.clone();
    if header.iter().ne(SCAN_COLUMNS) {
        return Err(schema_error(
            path,
            1,
            "*",
            format!("expected header `{}`, got `{}`", SCAN_COLUMNS.join(","), header.iter().collect::<Vec<_>>().join(",")),
        ));
    }
    let mut out = Vec::new();
    for rec in reader.records() {
        let rec = rec.map_err(|e| csv_error(path, e))?;
        let row = rec.position().map_or(0, |p| p.line());
        if rec.len() != SCAN_COLUMNS.len() {
            return Err(schema_error(
                path,
                row,
                "*",
                format!("expected {} fields, got {}", SCAN_COLUMNS.len(), rec.len()),
            ));
        }
        let field = |k: usize| parse_field::<f64>(path, row, SCAN_COLUMNS[k], &rec[k]);
        let count = |k: usize| parse_field::<u64>(path, row, SCAN_COLUMNS[k], &rec[k]);
        count(0)?;
        let phase = field(1)?;
        let duration = field(2)?;
        if !phase.is_finite() {
            return Err(schema_error(path, row, SCAN_COLUMNS[1], "must be finite"));
        }
        if !(duration.is_finite() && duration >= 0.0) {
            return Err(schema_error(path, row, SCAN_COLUMNS[2], "must be finite and >= 0"));
        }
        out.push(CountRecord {
            setting: PhaseSetting {
                delta1: 0.0,
                delta2: phase,
                path_mismatch_um: 0.0,
            },
            duration_s: duration,
            singles1: count(3)?,
            singles2: count(4)?,
            windowed_coincidences: count(5)?,
            offwindow_coincidences: 0,
            histogram: Histogram::new(1, 0).expect("valid bin width"),
        });
    }
    Ok(out)
}

/// Accidentals file written by the `accidentals` command.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccidentalsFile {
    pub seed: u64,
    pub scenario_hash: String,
    pub count: u64,
    pub duration_s: f64,
    pub rate_hz: f64,
    pub interval_s: f64,
    pub per_interval: f64,
    pub per_interval_uncertainty: f64,
    pub singles_hz: [f64; 2],
    /// `R1·R2·τ·T` for the measured singles.
    pub analytic_bound_per_interval: f64,
    pub window_ps: i64,
    pub window_center_ps: i64,
}

/// What a command ran with; enough to run it again.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "command", rename_all = "snake_case")]
pub enum RunSpec {
    Scan {
        points: usize,
        duration_s: f64,
        histogram_bin_ps: i64,
        histogram_span_ps: i64,
    },
    Accidentals {
        duration_s: f64,
        interval_s: f64,
    },
    Envelope {
        mismatches_um: Vec<f64>,
        points: usize,
        duration_s: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub version: String,
    pub seed: u64,
    pub scenario_name: String,
    pub scenario_hash: String,
    pub run: RunSpec,
    /// Data files, relative to the manifest's directory.
    pub outputs: Vec<String>,
    /// Full canonical scenario text.
    pub scenario: String,
}
