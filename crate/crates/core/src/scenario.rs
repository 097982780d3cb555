//! Experiment description and its text file format.
//!
//! A scenario file is line oriented: `section.key_unit = value`, `#` starts
//! a comment, blank lines are ignored. Keys missing from a file take the
//! component defaults; unknown or repeated keys are rejected with the line
//! number. [`Scenario::to_text`] writes every key in a fixed order, so
//! serializing and loading again is the identity.
//!
//! ```text
//! name = geneva1998
//! fiber1.length_km = 8.1
//! fiber1.loss_db = 5.6
//! electronics.window_ps = 400
//! spectral.convention = paper-calibrated
//! ```

use std::f64::consts::TAU;
use std::fmt::Write as _;
use std::path::Path;

use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::model::{BandwidthConvention, PhaseSetting, Sign, SpectralParams, VisibilityParams, PAPER_CALIBRATED_FACTOR};
use crate::montecarlo::calibration::CalibrationTargets;
use crate::montecarlo::{
    DetectorParams, DispersionMode, ElectronicsParams, FiberChannel, InterferometerParams, InvalidParameter,
    SourceParams, Station,
};

const GENEVA1998: &str = include_str!("../scenarios/geneva1998.scenario");

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("{field} ({component}): {constraint}")]
    Validation {
        field: String,
        component: &'static str,
        constraint: String,
    },
}

impl ScenarioError {
    fn validation(prefix: &str, component: &'static str, e: InvalidParameter) -> Self {
        ScenarioError::Validation {
            field: format!("{prefix}.{}", e.field),
            component,
            constraint: e.constraint,
        }
    }
}

/// Provenance of the calibrated source and converter settings.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct CalibrationBlock {
    pub note: String,
    pub targets: Option<CalibrationTargets>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub name: String,
    pub source: SourceParams,
    pub fibers: [FiberChannel; 2],
    pub interferometers: [InterferometerParams; 2],
    pub detectors: [DetectorParams; 2],
    pub electronics: ElectronicsParams,
    pub spectral: SpectralParams,
    pub visibility: VisibilityParams,
    /// Residual mismatch between the interferometers during a scan, µm.
    pub path_mismatch_um: f64,
    pub calibration: CalibrationBlock,
}

impl Default for Scenario {
    fn default() -> Self {
        Scenario {
            name: "unnamed".into(),
            source: SourceParams::default(),
            fibers: [FiberChannel::default(); 2],
            interferometers: [InterferometerParams::default(); 2],
            detectors: [
                DetectorParams::default(),
                DetectorParams {
                    dark_rate_hz: 110e3,
                    ..DetectorParams::default()
                },
            ],
            electronics: ElectronicsParams::default(),
            spectral: SpectralParams::default(),
            visibility: VisibilityParams::default(),
            path_mismatch_um: 0.0,
            calibration: CalibrationBlock::default(),
        }
    }
}

impl Scenario {
    /// The bundled reconstruction of the 10.9 km Geneva experiment.
    pub fn geneva1998() -> Scenario {
        Scenario::from_text(GENEVA1998).expect("bundled scenario is valid")
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Scenario, ScenarioError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| ScenarioError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Scenario::from_text(&text)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), ScenarioError> {
        let path = path.as_ref();
        std::fs::write(path, self.to_text()).map_err(|source| ScenarioError::Io {
            path: path.display().to_string(),
            source,
        })
    }

    pub fn fiber(&self, s: Station) -> &FiberChannel {
        &self.fibers[s.index()]
    }

    pub fn interferometer(&self, s: Station) -> &InterferometerParams {
        &self.interferometers[s.index()]
    }

    pub fn detector(&self, s: Station) -> &DetectorParams {
        &self.detectors[s.index()]
    }

    /// Setting given by the interferometer phases and the configured mismatch.
    pub fn base_setting(&self) -> PhaseSetting {
        PhaseSetting {
            delta1: self.interferometers[0].phase_rad,
            delta2: self.interferometers[1].phase_rad,
            path_mismatch_um: self.path_mismatch_um,
        }
    }

    /// `points` settings stepping the second interferometer uniformly
    /// over one period, starting from the base setting.
    pub fn scan_settings(&self, points: usize) -> Vec<PhaseSetting> {
        let base = self.base_setting();
        (0..points)
            .map(|k| PhaseSetting {
                delta2: base.delta2 + TAU * k as f64 / points as f64,
                ..base
            })
            .collect()
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        self.source
            .validate()
            .map_err(|e| ScenarioError::validation("source", "SourceParams", e))?;
        for s in Station::BOTH {
            let n = s.number();
            self.fiber(s)
                .validate()
                .map_err(|e| ScenarioError::validation(&format!("fiber{n}"), "FiberChannel", e))?;
            self.interferometer(s)
                .validate()
                .map_err(|e| ScenarioError::validation(&format!("interferometer{n}"), "InterferometerParams", e))?;
            self.detector(s)
                .validate()
                .map_err(|e| ScenarioError::validation(&format!("detector{n}"), "DetectorParams", e))?;
        }
        self.electronics
            .validate()
            .map_err(|e| ScenarioError::validation("electronics", "ElectronicsParams", e))?;

        let fail = |field: &str, component, constraint: String| {
            Err(ScenarioError::Validation {
                field: field.into(),
                component,
                constraint,
            })
        };
        let imbalance = self.interferometers[0].arm_imbalance_ps;
        if self.interferometers[1].arm_imbalance_ps != imbalance {
            return fail(
                "interferometer2.arm_imbalance_ps",
                "InterferometerParams",
                format!(
                    "both interferometers must share the same imbalance ({} vs {})",
                    imbalance, self.interferometers[1].arm_imbalance_ps
                ),
            );
        }
        if self.electronics.window_ps >= imbalance {
            return fail(
                "electronics.window_ps",
                "ElectronicsParams",
                format!(
                    "window {} ps must be shorter than the arm imbalance {} ps, otherwise satellite peaks fall inside it",
                    self.electronics.window_ps, imbalance
                ),
            );
        }
        if self.electronics.accidental_delay_ps().abs() < imbalance + self.electronics.window_ps {
            return fail(
                "electronics.accidental_delay_ns",
                "ElectronicsParams",
                "shifted window must clear the satellite peaks".into(),
            );
        }
        if !self.path_mismatch_um.is_finite() {
            return fail("scan.path_mismatch_um", "Scenario", "must be finite".into());
        }
        if !(self.spectral.coherence_length_um > 0.0 && self.spectral.coherence_length_um.is_finite()) {
            return fail("spectral", "SpectralParams", "coherence length must be positive".into());
        }
        Ok(())
    }

    /// Canonical text form; every key, fixed order.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "# franson scenario");
        for field in fields() {
            let _ = writeln!(out, "{} = {}", field.key, (field.get)(self));
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Scenario, ScenarioError> {
        let table = fields();
        let mut seen = vec![false; table.len()];
        let mut raw = RawSpectral::from(&SpectralParams::default());
        let mut sc = Scenario::default();
        for (n, line) in text.lines().enumerate() {
            let line_no = n + 1;
            let content = strip_comment(line).trim();
            if content.is_empty() {
                continue;
            }
            let (key, value) = content.split_once('=').ok_or_else(|| ScenarioError::Parse {
                line: line_no,
                message: format!("expected `key = value`, got `{content}`"),
            })?;
            let key = key.trim();
            let value = unquote(value.trim());
            let parse_err = |message: String| ScenarioError::Parse { line: line_no, message };
            if let Some(spectral_key) = key.strip_prefix("spectral.") {
                raw.set(spectral_key, value)
                    .map_err(|m| parse_err(format!("{key}: {m}")))?;
                continue;
            }
            let idx = table
                .iter()
                .position(|f| f.key == key)
                .ok_or_else(|| parse_err(format!("unknown key `{key}`")))?;
            if seen[idx] {
                return Err(parse_err(format!("duplicate key `{key}`")));
            }
            seen[idx] = true;
            (table[idx].set)(&mut sc, value).map_err(|m| parse_err(format!("{key}: {m}")))?;
        }
        sc.spectral = raw.build()?;
        sc.validate()?;
        Ok(sc)
    }

    /// SHA-256 of the canonical text, hex encoded.
    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.to_text().as_bytes());
        digest.iter().fold(String::with_capacity(64), |mut s, b| {
            let _ = write!(s, "{b:02x}");
            s
        })
    }
}

fn strip_comment(line: &str) -> &str {
    // `#` inside a quoted value is kept
    let mut in_quotes = false;
    for (i, c) in line.char_indices() {
        match c {
            '"' => in_quotes = !in_quotes,
            '#' if !in_quotes => return &line[..i],
            _ => {}
        }
    }
    line
}

fn unquote(v: &str) -> &str {
    v.strip_prefix('"').and_then(|s| s.strip_suffix('"')).unwrap_or(v)
}

fn quote(v: &str) -> String {
    format!("\"{}\"", v.replace('"', "'"))
}

struct RawSpectral {
    center: f64,
    bandwidth: f64,
    convention: String,
    factor: f64,
    seen: Vec<&'static str>,
}

impl RawSpectral {
    fn from(s: &SpectralParams) -> Self {
        let factor = match s.convention {
            BandwidthConvention::PaperCalibrated { factor } => factor,
            BandwidthConvention::GaussianFwhm => PAPER_CALIBRATED_FACTOR,
        };
        RawSpectral {
            center: s.center_wavelength_nm,
            bandwidth: s.bandwidth_fwhm_nm,
            convention: s.convention.name().to_string(),
            factor,
            seen: Vec::new(),
        }
    }

    fn set(&mut self, key: &str, value: &str) -> Result<(), String> {
        let name: &'static str = match key {
            "center_wavelength_nm" => {
                self.center = num(value)?;
                "center_wavelength_nm"
            }
            "bandwidth_fwhm_nm" => {
                self.bandwidth = num(value)?;
                "bandwidth_fwhm_nm"
            }
            "convention" => {
                self.convention = value.to_string();
                "convention"
            }
            "convention_factor" => {
                self.factor = num(value)?;
                "convention_factor"
            }
            _ => return Err("unknown key".into()),
        };
        if self.seen.contains(&name) {
            return Err("duplicate key".into());
        }
        self.seen.push(name);
        Ok(())
    }

    fn build(&self) -> Result<SpectralParams, ScenarioError> {
        let to_err = |e: crate::model::ModelError| ScenarioError::Validation {
            field: "spectral".into(),
            component: "SpectralParams",
            constraint: e.to_string(),
        };
        let conv = BandwidthConvention::from_name(&self.convention, self.factor).map_err(to_err)?;
        SpectralParams::from_bandwidth(self.center, self.bandwidth, conv).map_err(to_err)
    }
}

fn num(v: &str) -> Result<f64, String> {
    v.parse::<f64>().map_err(|_| format!("expected a number, got `{v}`"))
}

fn int(v: &str) -> Result<i64, String> {
    v.parse::<i64>().map_err(|_| format!("expected an integer, got `{v}`"))
}

fn sign(v: &str) -> Result<Sign, String> {
    match v {
        "+" | "plus" => Ok(Sign::Plus),
        "-" | "minus" => Ok(Sign::Minus),
        _ => Err(format!("expected `+` or `-`, got `{v}`")),
    }
}

fn station(v: &str) -> Result<Station, String> {
    v.parse::<u8>()
        .ok()
        .and_then(Station::from_number)
        .ok_or_else(|| format!("expected 1 or 2, got `{v}`"))
}

struct Field {
    key: &'static str,
    get: fn(&Scenario) -> String,
    set: fn(&mut Scenario, &str) -> Result<(), String>,
}

macro_rules! f64_field {
    ($key:expr, $($path:tt)+) => {
        Field {
            key: $key,
            get: |s| format!("{}", s.$($path)+),
            set: |s, v| {
                s.$($path)+ = num(v)?;
                Ok(())
            },
        }
    };
}

macro_rules! target_field {
    ($key:expr, $($path:tt)+) => {
        Field {
            key: $key,
            get: |s| s.calibration.targets.map(|t| format!("{}", t.$($path)+)).unwrap_or_default(),
            set: |s, v| {
                if v.is_empty() {
                    return Ok(());
                }
                let t = s.calibration.targets.get_or_insert_with(CalibrationTargets::default);
                t.$($path)+ = num(v)?;
                Ok(())
            },
        }
    };
}

macro_rules! station_fields {
    ($i:tt, $n:literal) => {
        [
            f64_field!(concat!("fiber", $n, ".length_km"), fibers[$i].length_km),
            f64_field!(concat!("fiber", $n, ".loss_db"), fibers[$i].loss_db),
            f64_field!(concat!("fiber", $n, ".group_index"), fibers[$i].group_index),
            Field {
                key: concat!("fiber", $n, ".dispersion_mode"),
                get: |s| s.fibers[$i].dispersion_mode.name().to_string(),
                set: |s, v| {
                    s.fibers[$i].dispersion_mode = DispersionMode::from_name(v)
                        .ok_or_else(|| format!("expected `lumped` or `analytic`, got `{v}`"))?;
                    Ok(())
                },
            },
            f64_field!(concat!("fiber", $n, ".lumped_jitter_fwhm_ps"), fibers[$i].lumped_jitter_fwhm_ps),
            f64_field!(concat!("fiber", $n, ".dispersion_slope_ps_per_nm2_km"), fibers[$i].dispersion_slope),
            f64_field!(concat!("fiber", $n, ".zero_dispersion_wavelength_nm"), fibers[$i].zero_dispersion_wavelength_nm),
            f64_field!(concat!("interferometer", $n, ".phase_rad"), interferometers[$i].phase_rad),
            Field {
                key: concat!("interferometer", $n, ".arm_imbalance_ps"),
                get: |s| s.interferometers[$i].arm_imbalance_ps.to_string(),
                set: |s, v| {
                    s.interferometers[$i].arm_imbalance_ps = int(v)?;
                    Ok(())
                },
            },
            Field {
                key: concat!("interferometer", $n, ".detector_port"),
                get: |s| s.interferometers[$i].detector_port.symbol().to_string(),
                set: |s, v| {
                    s.interferometers[$i].detector_port = sign(v)?;
                    Ok(())
                },
            },
            f64_field!(concat!("detector", $n, ".efficiency"), detectors[$i].efficiency),
            f64_field!(concat!("detector", $n, ".dark_rate_hz"), detectors[$i].dark_rate_hz),
            f64_field!(concat!("detector", $n, ".jitter_fwhm_ps"), detectors[$i].jitter_fwhm_ps),
            f64_field!(concat!("detector", $n, ".dead_time_ns"), detectors[$i].dead_time_ns),
            f64_field!(concat!("detector", $n, ".afterpulse_probability"), detectors[$i].afterpulse_probability),
            f64_field!(concat!("detector", $n, ".afterpulse_delay_ns"), detectors[$i].afterpulse_delay_ns),
        ]
    };
}

fn fields() -> Vec<Field> {
    let mut v = vec![
        Field {
            key: "name",
            get: |s| s.name.clone(),
            set: |s, v| {
                s.name = v.to_string();
                Ok(())
            },
        },
        f64_field!("source.pair_rate_hz", source.pair_rate_hz),
        f64_field!("source.coupling_efficiency", source.coupling_efficiency),
        f64_field!("source.pump_wavelength_nm", source.pump_wavelength_nm),
        f64_field!("source.split_probability", source.split_probability),
    ];
    v.extend(station_fields!(0, "1"));
    v.extend(station_fields!(1, "2"));
    v.extend([
        f64_field!("electronics.chain_jitter_fwhm_ps", electronics.chain_jitter_fwhm_ps),
        Field {
            key: "electronics.window_ps",
            get: |s| s.electronics.window_ps.to_string(),
            set: |s, v| {
                s.electronics.window_ps = int(v)?;
                Ok(())
            },
        },
        f64_field!("electronics.tphc_dead_time_us", electronics.tphc_dead_time_us),
        f64_field!("electronics.tphc_range_ns", electronics.tphc_range_ns),
        f64_field!("electronics.stop_delay_ns", electronics.stop_delay_ns),
        Field {
            key: "electronics.start_station",
            get: |s| s.electronics.start_station.number().to_string(),
            set: |s, v| {
                s.electronics.start_station = station(v)?;
                Ok(())
            },
        },
        f64_field!("electronics.accidental_delay_ns", electronics.accidental_delay_ns),
        // spectral.* keys are handled separately; these getters keep the
        // canonical output complete
        Field {
            key: "spectral.center_wavelength_nm",
            get: |s| format!("{}", s.spectral.center_wavelength_nm),
            set: |_, _| unreachable!(),
        },
        Field {
            key: "spectral.bandwidth_fwhm_nm",
            get: |s| format!("{}", s.spectral.bandwidth_fwhm_nm),
            set: |_, _| unreachable!(),
        },
        Field {
            key: "spectral.convention",
            get: |s| s.spectral.convention.name().to_string(),
            set: |_, _| unreachable!(),
        },
        Field {
            key: "spectral.convention_factor",
            get: |s| match s.spectral.convention {
                BandwidthConvention::PaperCalibrated { factor } => format!("{factor}"),
                BandwidthConvention::GaussianFwhm => format!("{PAPER_CALIBRATED_FACTOR}"),
            },
            set: |_, _| unreachable!(),
        },
        Field {
            key: "visibility.apparatus",
            get: |s| format!("{}", s.visibility.apparatus_visibility),
            set: |s, v| {
                s.visibility = VisibilityParams::new(num(v)?).map_err(|e| e.to_string())?;
                Ok(())
            },
        },
        f64_field!("scan.path_mismatch_um", path_mismatch_um),
        Field {
            key: "calibration.note",
            get: |s| quote(&s.calibration.note),
            set: |s, v| {
                s.calibration.note = v.to_string();
                Ok(())
            },
        },
        target_field!("calibration.target_singles1_hz", singles_hz[0]),
        target_field!("calibration.target_singles2_hz", singles_hz[1]),
        target_field!("calibration.target_accidentals", accidentals_per_interval),
        target_field!("calibration.target_raw_visibility", raw_visibility),
        target_field!("calibration.target_net_visibility", net_visibility),
        target_field!("calibration.interval_s", interval_s),
    ]);
    v
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bundled_scenario_loads() {
        let s = Scenario::geneva1998();
        assert_eq!(s.name, "geneva1998");
        assert_eq!(s.fibers[0].length_km, 8.1);
        assert_eq!(s.fibers[0].loss_db, 5.6);
        assert_eq!(s.fibers[1].length_km, 9.3);
        assert_eq!(s.fibers[1].loss_db, 4.9);
        assert_eq!(s.detectors[0].efficiency, 0.15);
        assert_eq!(s.detectors[0].dark_rate_hz, 100e3);
        assert_eq!(s.detectors[1].dark_rate_hz, 110e3);
        assert_eq!(s.detectors[0].jitter_fwhm_ps, 200.0);
        assert_eq!(s.electronics.window_ps, 400);
        assert_eq!(s.electronics.tphc_dead_time_us, 4.0);
        assert_eq!(s.interferometers[0].arm_imbalance_ps, 1000);
        assert_eq!(s.source.pump_wavelength_nm, 655.7);
        assert_eq!(s.spectral.bandwidth_fwhm_nm, 90.0);
        assert!((s.spectral.coherence_length_um - 10.2).abs() < 0.01);
        assert!((s.electronics.difference_jitter_fwhm_ps() - 450.0).abs() < 1e-9);
        let lumped = s.fibers[0].lumped_jitter_fwhm_ps + s.fibers[1].lumped_jitter_fwhm_ps;
        assert!((lumped - 400.0).abs() < 1e-9);
    }

    #[test]
    fn text_round_trip() {
        let s = Scenario::geneva1998();
        let back = Scenario::from_text(&s.to_text()).unwrap();
        assert_eq!(s, back);
        assert_eq!(s.hash(), back.hash());
    }

    #[test]
    fn negative_loss_names_field() {
        let text = Scenario::geneva1998().to_text().replace("fiber1.loss_db = 5.6", "fiber1.loss_db = -1");
        let err = Scenario::from_text(&text).unwrap_err();
        let msg = err.to_string();
        assert!(matches!(err, ScenarioError::Validation { .. }));
        assert!(msg.contains("fiber1.loss_db") && msg.contains("FiberChannel"), "{msg}");
    }

    #[test]
    fn window_wider_than_imbalance_rejected() {
        let text = Scenario::geneva1998()
            .to_text()
            .replace("electronics.window_ps = 400", "electronics.window_ps = 2000");
        match Scenario::from_text(&text) {
            Err(ScenarioError::Validation { field, .. }) => assert_eq!(field, "electronics.window_ps"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn unknown_and_duplicate_keys() {
        let err = Scenario::from_text("name = x\nfiber1.colour = red\n").unwrap_err();
        assert!(matches!(err, ScenarioError::Parse { line: 2, .. }), "{err}");
        let err = Scenario::from_text("fiber1.loss_db = 1\nfiber1.loss_db = 2\n").unwrap_err();
        assert!(matches!(err, ScenarioError::Parse { line: 2, .. }), "{err}");
        let err = Scenario::from_text("fiber1.loss_db 1\n").unwrap_err();
        assert!(matches!(err, ScenarioError::Parse { line: 1, .. }), "{err}");
        let err = Scenario::from_text("spectral.convention = lorentzian\n").unwrap_err();
        assert!(err.to_string().contains("lorentzian"));
    }

    #[test]
    fn unequal_imbalance_rejected() {
        let mut s = Scenario::geneva1998();
        s.interferometers[1].arm_imbalance_ps = 1200;
        assert!(s.validate().is_err());
    }

    #[test]
    fn comments_and_quotes() {
        let s = Scenario::from_text("# header\nname = \"a # b\"  # trailing\n").unwrap();
        assert_eq!(s.name, "a # b");
    }

    #[test]
    fn scan_settings_cover_one_period() {
        let s = Scenario::geneva1998();
        let set = s.scan_settings(4);
        let d: Vec<f64> = set.iter().map(|p| p.delta2).collect();
        assert_eq!(d.len(), 4);
        assert!((d[1] - d[0] - TAU / 4.0).abs() < 1e-12);
        assert!((d[3] - d[0] - 3.0 * TAU / 4.0).abs() < 1e-12);
    }
}
