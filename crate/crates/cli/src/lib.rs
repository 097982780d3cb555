//! `franson` command-line driver: scenario files in, CSV/JSON artifacts out.

pub mod commands;
pub mod error;
pub mod files;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use franson::montecarlo::ScanOptions;

pub use error::CliError;

use commands::{AnalyzeOptions, EnvelopeRequest, ScanRequest};
use files::resolve_output;

#[derive(Debug, Parser)]
#[command(name = "franson", version, about = "Two-photon fringe simulation and analysis")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate a phase scan; writes <out>.csv, histograms and a manifest.
    Scan(ScanArgs),
    /// Count coincidences in the delayed window at the base setting.
    Accidentals(AccidentalsArgs),
    /// Fit a scan, subtract accidentals and write the Bell report.
    Analyze(AnalyzeArgs),
    /// Scan several path mismatches and fit the coherence envelope.
    Envelope(EnvelopeArgs),
    /// Re-run the command recorded in a manifest.
    Replay(ReplayArgs),
    /// Fit pair rate, coupling and converter range to the scenario's targets.
    Calibrate(CalibrateArgs),
}

#[derive(Debug, Args)]
pub struct SimArgs {
    /// Scenario file; the bundled geneva1998 scenario if omitted.
    pub scenario: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Worker threads (default: all cores). Does not change any output.
    #[arg(long)]
    pub workers: Option<usize>,
}

#[derive(Debug, Args)]
pub struct ScanArgs {
    #[command(flatten)]
    pub sim: SimArgs,
    #[arg(long, default_value_t = 25)]
    pub points: usize,
    /// Seconds per point.
    #[arg(long, default_value_t = 20.0)]
    pub duration: f64,
    /// Output prefix, relative to $FRANSON_OUT_DIR when that is set.
    #[arg(long, default_value = "scan")]
    pub out: PathBuf,
    #[arg(long, default_value_t = 50)]
    pub bin_ps: i64,
    #[arg(long, default_value_t = 3000)]
    pub span_ps: i64,
}

#[derive(Debug, Args)]
pub struct AccidentalsArgs {
    #[command(flatten)]
    pub sim: SimArgs,
    #[arg(long, default_value_t = 20.0)]
    pub duration: f64,
    /// Interval the count is also reported per.
    #[arg(long, default_value_t = 20.0)]
    pub interval: f64,
    #[arg(long, default_value = "accidentals")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct AnalyzeArgs {
    pub scan_csv: PathBuf,
    pub accidentals_json: PathBuf,
    #[arg(long, default_value = "analysis")]
    pub out: PathBuf,
    /// Fourier significance in standard deviations.
    #[arg(long, default_value_t = franson::analysis::DEFAULT_SIGNIFICANCE)]
    pub k_sigma: f64,
    /// Parametric bootstrap replicas for the net visibility (0: none).
    #[arg(long, default_value_t = 0)]
    pub bootstrap: usize,
    #[arg(long, default_value_t = 0)]
    pub bootstrap_seed: u64,
}

#[derive(Debug, Args)]
pub struct EnvelopeArgs {
    #[command(flatten)]
    pub sim: SimArgs,
    /// Comma-separated path mismatches in µm.
    #[arg(long, value_delimiter = ',', required = true)]
    pub mismatch_list: Vec<f64>,
    #[arg(long, default_value_t = 25)]
    pub points: usize,
    #[arg(long, default_value_t = 2.0)]
    pub duration: f64,
    #[arg(long, default_value = "envelope")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ReplayArgs {
    pub manifest: PathBuf,
    /// Directory for the reproduced files (same names as the original).
    #[arg(long)]
    pub out_dir: PathBuf,
    #[arg(long)]
    pub workers: Option<usize>,
}

#[derive(Debug, Args)]
pub struct CalibrateArgs {
    pub scenario: Option<PathBuf>,
    /// Write the calibrated scenario here.
    #[arg(long)]
    pub write: Option<PathBuf>,
}

/// Runs a parsed command; returns the text to print on success.
pub fn run(cli: Cli) -> Result<String, CliError> {
    match cli.command {
        Command::Scan(a) => {
            let scenario = commands::load_scenario(a.sim.scenario.as_deref())?;
            let req = ScanRequest {
                points: a.points,
                duration_s: a.duration,
                seed: a.sim.seed,
                options: ScanOptions {
                    histogram_bin_ps: a.bin_ps,
                    histogram_span_ps: a.span_ps,
                    workers: a.sim.workers,
                },
            };
            let prefix = resolve_output(&a.out);
            let records = commands::scan_to_files(&scenario, &req, &prefix)?;
            let total: u64 = records.iter().map(|r| r.windowed_coincidences).sum();
            Ok(format!(
                "scan: {} points, {} windowed coincidences -> {}",
                records.len(),
                total,
                files::with_suffix(&prefix, ".csv").display()
            ))
        }
        Command::Accidentals(a) => {
            let scenario = commands::load_scenario(a.sim.scenario.as_deref())?;
            let prefix = resolve_output(&a.out);
            let r = commands::accidentals_to_files(&scenario, a.duration, a.interval, a.sim.seed, a.sim.workers, &prefix)?;
            Ok(format!(
                "accidentals: {} in {} s ({:.2} ± {:.2} per {} s, bound {:.1}) -> {}",
                r.count,
                r.duration_s,
                r.per_interval,
                r.per_interval_uncertainty,
                r.interval_s,
                r.analytic_bound_per_interval,
                files::with_suffix(&prefix, ".json").display()
            ))
        }
        Command::Analyze(a) => {
            let prefix = resolve_output(&a.out);
            let options = AnalyzeOptions {
                k_sigma: a.k_sigma,
                bootstrap_replicas: a.bootstrap,
                bootstrap_seed: a.bootstrap_seed,
            };
            let r = commands::analyze_files(&a.scan_csv, &a.accidentals_json, &options, &prefix)?.report;
            Ok(format!(
                "raw V = {:.4} ± {:.4}, net V = {:.4} ± {:.4}, {:.2} sigma above {:.4} -> {}",
                r.raw_visibility,
                r.raw_visibility_uncertainty,
                r.net_visibility,
                r.net_visibility_uncertainty,
                r.sigma_violation,
                r.threshold,
                files::with_suffix(&prefix, ".report.json").display()
            ))
        }
        Command::Envelope(a) => {
            let scenario = commands::load_scenario(a.sim.scenario.as_deref())?;
            let req = EnvelopeRequest {
                mismatches_um: a.mismatch_list,
                points: a.points,
                duration_s: a.duration,
                seed: a.sim.seed,
                workers: a.sim.workers,
            };
            let prefix = resolve_output(&a.out);
            let r = commands::envelope_to_files(&scenario, &req, &prefix)?;
            Ok(format!(
                "L_c = {:.3} ± {:.3} µm, half visibility at {:.2} µm -> {}",
                r.fit.coherence_length_um,
                r.fit.coherence_length_uncertainty_um,
                r.fit.half_mismatch_um,
                files::with_suffix(&prefix, ".json").display()
            ))
        }
        Command::Replay(a) => {
            let out_dir = resolve_output(&a.out_dir);
            let m = commands::replay(&a.manifest, &out_dir, a.workers)?;
            Ok(format!("replayed {} files into {}", m.outputs.len(), out_dir.display()))
        }
        Command::Calibrate(a) => {
            let scenario = commands::load_scenario(a.scenario.as_deref())?;
            let (cal, calibrated) = commands::calibrate_scenario(&scenario)?;
            if let Some(path) = &a.write {
                calibrated.save(resolve_output(path))?;
            }
            Ok(serde_json::to_string_pretty(&cal).expect("serializable calibration"))
        }
    }
}
