//! Command implementations. Each command has a pure part returning values
//! (used by tests and by the library) and a part writing files.

use std::path::{Path, PathBuf};

use franson::analysis::{
    bell_report, bootstrap_net_visibility, fit_envelope, fit_fringe, fourier_significant_frequencies,
    subtract_accidentals, AccidentalEstimate, BootstrapSummary, EnvelopeFit, EnvelopePoint, FitError, FourierReport,
    FringeFit, NetScan,
};
use franson::montecarlo::calibration::{calibrate, Calibration, CalibrationTargets};
use franson::montecarlo::{accidental_bound, measure_accidentals, run_scan, AccidentalMeasurement, CountRecord, ScanOptions};
use franson::rng::derive_seed;
use franson::{BellReport, Scenario};
use serde::{Deserialize, Serialize};

use crate::error::CliError;
use crate::files::{
    csv_text, read_json, read_scan, with_suffix, write_json, write_scan, write_text, AccidentalsFile, Manifest, RunSpec,
    ENVELOPE_COLUMNS, NET_COLUMNS,
};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

pub fn load_scenario(path: Option<&Path>) -> Result<Scenario, CliError> {
    match path {
        Some(p) => Ok(Scenario::load(p)?),
        None => Ok(Scenario::geneva1998()),
    }
}

fn manifest_path(prefix: &Path) -> PathBuf {
    with_suffix(prefix, ".manifest.json")
}

fn write_manifest(prefix: &Path, scenario: &Scenario, seed: u64, run: RunSpec, outputs: Vec<String>) -> Result<PathBuf, CliError> {
    let path = manifest_path(prefix);
    let manifest = Manifest {
        version: VERSION.into(),
        seed,
        scenario_name: scenario.name.clone(),
        scenario_hash: scenario.hash(),
        run,
        outputs,
        scenario: scenario.to_text(),
    };
    write_json(&path, &manifest)?;
    Ok(path)
}

// ---- scan ----

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScanRequest {
    pub points: usize,
    pub duration_s: f64,
    pub seed: u64,
    pub options: ScanOptions,
}

pub fn scan(scenario: &Scenario, req: &ScanRequest) -> Result<Vec<CountRecord>, CliError> {
    if req.points == 0 {
        return Err(CliError::Validation("empty scan: --points must be at least 1".into()));
    }
    Ok(run_scan(scenario, &scenario.scan_settings(req.points), req.duration_s, req.seed, &req.options)?)
}

/// Writes `<prefix>.csv`, its histograms and `<prefix>.manifest.json`.
pub fn scan_to_files(scenario: &Scenario, req: &ScanRequest, prefix: &Path) -> Result<Vec<CountRecord>, CliError> {
    let records = scan(scenario, req)?;
    let outputs = write_scan(prefix, &records)?;
    let run = RunSpec::Scan {
        points: req.points,
        duration_s: req.duration_s,
        histogram_bin_ps: req.options.histogram_bin_ps,
        histogram_span_ps: req.options.histogram_span_ps,
    };
    write_manifest(prefix, scenario, req.seed, run, outputs)?;
    Ok(records)
}

// ---- accidentals ----

pub fn accidentals(
    scenario: &Scenario,
    duration_s: f64,
    interval_s: f64,
    seed: u64,
    workers: Option<usize>,
) -> Result<AccidentalsFile, CliError> {
    if !(interval_s.is_finite() && interval_s > 0.0) {
        return Err(CliError::Validation(format!("--interval must be positive, got {interval_s}")));
    }
    if !(duration_s.is_finite() && duration_s > 0.0) {
        return Err(CliError::Validation(format!("--duration must be positive, got {duration_s}")));
    }
    let m: AccidentalMeasurement = measure_accidentals(scenario, duration_s, seed, workers)?;
    let (per_interval, err) = m.per_interval(interval_s);
    let singles_hz = [m.singles[0] as f64 / duration_s, m.singles[1] as f64 / duration_s];
    Ok(AccidentalsFile {
        seed,
        scenario_hash: scenario.hash(),
        count: m.count,
        duration_s,
        rate_hz: m.rate_hz(),
        interval_s,
        per_interval,
        per_interval_uncertainty: err,
        singles_hz,
        analytic_bound_per_interval: accidental_bound(singles_hz[0], singles_hz[1], m.window_ps, interval_s),
        window_ps: m.window_ps,
        window_center_ps: m.window_center_ps,
    })
}

/// Writes `<prefix>.json` and `<prefix>.manifest.json`.
pub fn accidentals_to_files(
    scenario: &Scenario,
    duration_s: f64,
    interval_s: f64,
    seed: u64,
    workers: Option<usize>,
    prefix: &Path,
) -> Result<AccidentalsFile, CliError> {
    let out = accidentals(scenario, duration_s, interval_s, seed, workers)?;
    let path = with_suffix(prefix, ".json");
    write_json(&path, &out)?;
    let run = RunSpec::Accidentals { duration_s, interval_s };
    write_manifest(prefix, scenario, seed, run, vec![format!("{}.json", crate::files::stem(prefix))])?;
    Ok(out)
}

// ---- analyze ----

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AnalyzeOptions {
    pub k_sigma: f64,
    /// Parametric bootstrap replicas; 0 skips the bootstrap.
    pub bootstrap_replicas: usize,
    pub bootstrap_seed: u64,
}

impl Default for AnalyzeOptions {
    fn default() -> Self {
        AnalyzeOptions {
            k_sigma: franson::analysis::DEFAULT_SIGNIFICANCE,
            bootstrap_replicas: 0,
            bootstrap_seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Analysis {
    pub accidentals: AccidentalEstimate,
    pub raw_fit: FringeFit,
    pub net_fit: FringeFit,
    pub fourier: Option<FourierReport>,
    /// Why the Fourier check could not run, if it could not.
    pub fourier_error: Option<String>,
    pub bootstrap: Option<BootstrapSummary>,
    pub report: BellReport,
    #[serde(skip)]
    pub net: Option<NetScan>,
}

pub fn analyze(
    records: &[CountRecord],
    accidentals: &AccidentalEstimate,
    accidental_count: u64,
    options: &AnalyzeOptions,
) -> Result<Analysis, CliError> {
    let raw_fit = fit_fringe(records)?;
    let net = subtract_accidentals(records, accidentals)?;
    let (fourier, fourier_error) = match fourier_significant_frequencies(records, options.k_sigma) {
        Ok(f) => (Some(f), None),
        Err(e @ (FitError::InsufficientData(_) | FitError::InvalidInput(_))) => (None, Some(e.to_string())),
        Err(e) => return Err(e.into()),
    };
    let bootstrap = if options.bootstrap_replicas > 0 {
        Some(bootstrap_net_visibility(
            records,
            accidentals,
            accidental_count,
            options.bootstrap_replicas,
            options.bootstrap_seed,
        )?)
    } else {
        None
    };
    let report = bell_report(&raw_fit, &net.fit, accidentals.per_interval)?;
    Ok(Analysis {
        accidentals: *accidentals,
        raw_fit,
        net_fit: net.fit,
        fourier,
        fourier_error,
        bootstrap,
        report,
        net: Some(net),
    })
}

pub fn net_counts_csv(records: &[CountRecord], net: &NetScan, accidentals: &AccidentalEstimate) -> String {
    let rows = records.iter().zip(&net.points).enumerate().map(|(k, (r, p))| {
        let subtracted = accidentals.per_interval * r.duration_s / accidentals.interval_s;
        vec![
            k.to_string(),
            p.phase_rad.to_string(),
            r.duration_s.to_string(),
            r.windowed_coincidences.to_string(),
            subtracted.to_string(),
            p.value.to_string(),
        ]
    });
    csv_text(&NET_COLUMNS, rows)
}

/// Reads the scan CSV and accidentals JSON, writes `<prefix>.report.json`
/// (the Bell report), `<prefix>.net.csv` and `<prefix>.analysis.json`.
pub fn analyze_files(scan_csv: &Path, accidentals_json: &Path, options: &AnalyzeOptions, prefix: &Path) -> Result<Analysis, CliError> {
    let records = read_scan(scan_csv)?;
    let acc: AccidentalsFile = read_json(accidentals_json)?;
    if !(acc.duration_s > 0.0 && acc.interval_s > 0.0) {
        return Err(CliError::Validation(format!(
            "{}: duration_s and interval_s must be positive",
            accidentals_json.display()
        )));
    }
    let estimate = AccidentalEstimate::from_count(acc.count, acc.duration_s, acc.interval_s);
    let analysis = analyze(&records, &estimate, acc.count, options)?;
    write_json(&with_suffix(prefix, ".report.json"), &analysis.report)?;
    if let Some(net) = &analysis.net {
        write_text(&with_suffix(prefix, ".net.csv"), &net_counts_csv(&records, net, &estimate))?;
    }
    write_json(&with_suffix(prefix, ".analysis.json"), &analysis)?;
    Ok(analysis)
}

// ---- envelope ----

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvelopeRow {
    pub path_mismatch_um: f64,
    /// Net (accidental-subtracted) visibility.
    pub visibility: f64,
    pub visibility_uncertainty: f64,
    pub raw_visibility: f64,
    /// Pooled accidental level per point.
    pub accidentals_per_point: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnvelopeRequest {
    pub mismatches_um: Vec<f64>,
    pub points: usize,
    pub duration_s: f64,
    pub seed: u64,
    pub workers: Option<usize>,
}

/// One scan per mismatch (seed family `envelope`, index = position in the
/// list). The accidental level does not depend on the mismatch, so it is
/// estimated once from the shifted-window counts of all scans together and
/// subtracted from each before its fringe fit.
pub fn envelope_rows(scenario: &Scenario, req: &EnvelopeRequest) -> Result<Vec<EnvelopeRow>, CliError> {
    if req.mismatches_um.is_empty() {
        return Err(CliError::Validation("--mismatch-list is empty".into()));
    }
    if req.points == 0 {
        return Err(CliError::Validation("empty scan: --points must be at least 1".into()));
    }
    if !(req.duration_s.is_finite() && req.duration_s > 0.0) {
        return Err(CliError::Validation(format!("--duration must be positive, got {}", req.duration_s)));
    }
    let options = ScanOptions {
        workers: req.workers,
        ..ScanOptions::default()
    };
    let mut scans = Vec::with_capacity(req.mismatches_um.len());
    for (k, &m) in req.mismatches_um.iter().enumerate() {
        let mut sc = scenario.clone();
        sc.path_mismatch_um = m;
        sc.validate()?;
        let seed = derive_seed(req.seed, "envelope", k as u64);
        scans.push(run_scan(&sc, &sc.scan_settings(req.points), req.duration_s, seed, &options)?);
    }
    let all = scans.iter().flatten();
    let off: u64 = all.clone().map(|r| r.offwindow_coincidences).sum();
    let total_s: f64 = all.map(|r| r.duration_s).sum();
    let acc = AccidentalEstimate::from_count(off, total_s, req.duration_s);
    let mut rows = Vec::with_capacity(scans.len());
    for (records, &m) in scans.iter().zip(&req.mismatches_um) {
        let raw = fit_fringe(records)?;
        let net = subtract_accidentals(records, &acc)?;
        rows.push(EnvelopeRow {
            path_mismatch_um: m,
            visibility: net.fit.visibility,
            visibility_uncertainty: net.fit.visibility_uncertainty,
            raw_visibility: raw.visibility,
            accidentals_per_point: acc.per_interval,
        });
    }
    Ok(rows)
}

pub fn fit_rows(rows: &[EnvelopeRow], center_wavelength_nm: f64) -> Result<EnvelopeFit, CliError> {
    let points: Vec<EnvelopePoint> = rows
        .iter()
        .map(|r| EnvelopePoint {
            path_mismatch_um: r.path_mismatch_um,
            visibility: r.visibility,
            uncertainty: Some(r.visibility_uncertainty),
        })
        .collect();
    Ok(fit_envelope(&points, center_wavelength_nm)?)
}

pub fn envelope_csv(rows: &[EnvelopeRow]) -> String {
    let rows = rows.iter().map(|r| {
        vec![
            r.path_mismatch_um.to_string(),
            r.visibility.to_string(),
            r.visibility_uncertainty.to_string(),
            r.raw_visibility.to_string(),
            r.accidentals_per_point.to_string(),
        ]
    });
    csv_text(&ENVELOPE_COLUMNS, rows)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvelopeReport {
    pub seed: u64,
    pub scenario_hash: String,
    pub configured_coherence_length_um: f64,
    pub rows: Vec<EnvelopeRow>,
    pub fit: EnvelopeFit,
}

/// Writes `<prefix>.csv` (and the manifest) before fitting, so the
/// per-mismatch visibilities survive a failed fit; then `<prefix>.json`.
pub fn envelope_to_files(scenario: &Scenario, req: &EnvelopeRequest, prefix: &Path) -> Result<EnvelopeReport, CliError> {
    let rows = envelope_rows(scenario, req)?;
    let stem = crate::files::stem(prefix);
    write_text(&with_suffix(prefix, ".csv"), &envelope_csv(&rows))?;
    let run = RunSpec::Envelope {
        mismatches_um: req.mismatches_um.clone(),
        points: req.points,
        duration_s: req.duration_s,
    };
    write_manifest(
        prefix,
        scenario,
        req.seed,
        run,
        vec![format!("{stem}.csv"), format!("{stem}.json")],
    )?;
    let fit = fit_rows(&rows, scenario.spectral.center_wavelength_nm)?;
    let report = EnvelopeReport {
        seed: req.seed,
        scenario_hash: scenario.hash(),
        configured_coherence_length_um: scenario.spectral.coherence_length_um,
        rows,
        fit,
    };
    write_json(&with_suffix(prefix, ".json"), &report)?;
    Ok(report)
}

// ---- replay ----

/// Re-runs the command recorded in `manifest_path`, writing under
/// `out_dir` with the original file names.
pub fn replay(manifest_path: &Path, out_dir: &Path, workers: Option<usize>) -> Result<Manifest, CliError> {
    let manifest: Manifest = read_json(manifest_path)?;
    let scenario = Scenario::from_text(&manifest.scenario)?;
    if scenario.hash() != manifest.scenario_hash {
        return Err(CliError::Validation(format!(
            "{}: scenario text does not match scenario_hash",
            manifest_path.display()
        )));
    }
    let name = manifest_path
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default();
    let stem = name
        .strip_suffix(".manifest.json")
        .ok_or_else(|| CliError::Validation(format!("{}: not a *.manifest.json file", manifest_path.display())))?;
    let prefix = out_dir.join(stem);
    match &manifest.run {
        RunSpec::Scan {
            points,
            duration_s,
            histogram_bin_ps,
            histogram_span_ps,
        } => {
            let req = ScanRequest {
                points: *points,
                duration_s: *duration_s,
                seed: manifest.seed,
                options: ScanOptions {
                    histogram_bin_ps: *histogram_bin_ps,
                    histogram_span_ps: *histogram_span_ps,
                    workers,
                },
            };
            scan_to_files(&scenario, &req, &prefix)?;
        }
        RunSpec::Accidentals { duration_s, interval_s } => {
            accidentals_to_files(&scenario, *duration_s, *interval_s, manifest.seed, workers, &prefix)?;
        }
        RunSpec::Envelope {
            mismatches_um,
            points,
            duration_s,
        } => {
            let req = EnvelopeRequest {
                mismatches_um: mismatches_um.clone(),
                points: *points,
                duration_s: *duration_s,
                seed: manifest.seed,
                workers,
            };
            envelope_to_files(&scenario, &req, &prefix)?;
        }
    }
    Ok(manifest)
}

// ---- calibrate ----

/// Calibrates against the scenario's own targets, or the bundled ones if
/// it has none.
pub fn calibrate_scenario(scenario: &Scenario) -> Result<(Calibration, Scenario), CliError> {
    let targets = scenario
        .calibration
        .targets
        .unwrap_or_else(CalibrationTargets::geneva1998);
    let cal = calibrate(scenario, &targets)?;
    let calibrated = cal.apply(scenario);
    Ok((cal, calibrated))
}
