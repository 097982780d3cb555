//! Closed-form two-photon statistics for a pair of unbalanced interferometers.
//!
//! With post-selection on the central arrival-time peak, the probability of
//! a joint detection at output `i` of interferometer 1 and output `j` of
//! interferometer 2 (`i, j = ±1`) is
//!
//! ```text
//! P(i,j) = 1/4 · (1 + i·j·V·E(Δ)·cos(δ1 + δ2))
//! E(Δ)   = exp(-(λ·Δ / (2π·Lc))²)
//! ```
//!
//! where `V` is the lumped apparatus visibility and `E` the coherence
//! envelope, with `λ`, `Δ` and `Lc` all expressed in micrometres.
//!
//! Everything here is a pure function and serves as the reference for the
//! Monte Carlo in [`crate::montecarlo`].

use std::f64::consts::{FRAC_1_SQRT_2, LN_2, PI};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Bell threshold on two-photon visibility, `1/√2`.
pub const BELL_THRESHOLD: f64 = FRAC_1_SQRT_2;

/// Default factor for the `paper-calibrated` bandwidth convention. It ties
/// a 90 nm FWHM bandwidth at 1310 nm to a 10.2 µm coherence length.
pub const PAPER_CALIBRATED_FACTOR: f64 = 0.535;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("invalid parameter {field}: {reason}")]
    InvalidParameter { field: &'static str, reason: String },
    #[error("undefined input: {0}")]
    UndefinedInput(&'static str),
    #[error("visibility uncertainty must be positive, got {0}")]
    InvalidUncertainty(f64),
    #[error("unknown bandwidth convention `{0}` (expected `gaussian-fwhm` or `paper-calibrated`)")]
    UnknownConvention(String),
}

fn invalid(field: &'static str, reason: impl Into<String>) -> ModelError {
    ModelError::InvalidParameter {
        field,
        reason: reason.into(),
    }
}

/// How a spectral FWHM maps onto a coherence length, `Lc = k·λ²/Δλ`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum BandwidthConvention {
    /// `k = 2 ln2 / π` for a Gaussian spectrum.
    GaussianFwhm,
    /// `k` supplied by the scenario.
    PaperCalibrated { factor: f64 },
}

impl BandwidthConvention {
    pub fn factor(&self) -> f64 {
        match *self {
            BandwidthConvention::GaussianFwhm => 2.0 * LN_2 / PI,
            BandwidthConvention::PaperCalibrated { factor } => factor,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            BandwidthConvention::GaussianFwhm => "gaussian-fwhm",
            BandwidthConvention::PaperCalibrated { .. } => "paper-calibrated",
        }
    }

    /// Parses a convention name; `paper-calibrated` takes `factor`.
    pub fn from_name(name: &str, factor: f64) -> Result<Self, ModelError> {
        match name {
            "gaussian-fwhm" => Ok(BandwidthConvention::GaussianFwhm),
            "paper-calibrated" => Ok(BandwidthConvention::PaperCalibrated { factor }),
            other => Err(ModelError::UnknownConvention(other.to_string())),
        }
    }
}

impl FromStr for BandwidthConvention {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::from_name(s, PAPER_CALIBRATED_FACTOR)
    }
}

impl fmt::Display for BandwidthConvention {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Coherence length in µm for a centre wavelength and FWHM bandwidth in nm.
pub fn coherence_length_from_bandwidth(
    center_wavelength_nm: f64,
    bandwidth_fwhm_nm: f64,
    convention: BandwidthConvention,
) -> Result<f64, ModelError> {
    check_positive("center_wavelength", center_wavelength_nm)?;
    check_positive("bandwidth_fwhm", bandwidth_fwhm_nm)?;
    check_positive("convention factor", convention.factor())?;
    let lc_nm = convention.factor() * center_wavelength_nm * center_wavelength_nm / bandwidth_fwhm_nm;
    Ok(lc_nm * 1e-3)
}

/// Inverse of [`coherence_length_from_bandwidth`]; returns the FWHM in nm.
pub fn bandwidth_from_coherence_length(
    center_wavelength_nm: f64,
    coherence_length_um: f64,
    convention: BandwidthConvention,
) -> Result<f64, ModelError> {
    check_positive("center_wavelength", center_wavelength_nm)?;
    check_positive("coherence_length", coherence_length_um)?;
    check_positive("convention factor", convention.factor())?;
    Ok(convention.factor() * center_wavelength_nm * center_wavelength_nm / (coherence_length_um * 1e3))
}

fn check_positive(field: &'static str, value: f64) -> Result<(), ModelError> {
    if value.is_finite() && value > 0.0 {
        Ok(())
    } else {
        Err(invalid(field, format!("must be finite and > 0, got {value}")))
    }
}

/// Single-photon spectrum: centre, FWHM and the derived coherence length.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpectralParams {
    pub center_wavelength_nm: f64,
    pub bandwidth_fwhm_nm: f64,
    pub coherence_length_um: f64,
    pub convention: BandwidthConvention,
}

impl SpectralParams {
    pub fn from_bandwidth(
        center_wavelength_nm: f64,
        bandwidth_fwhm_nm: f64,
        convention: BandwidthConvention,
    ) -> Result<Self, ModelError> {
        let coherence_length_um =
            coherence_length_from_bandwidth(center_wavelength_nm, bandwidth_fwhm_nm, convention)?;
        Ok(SpectralParams {
            center_wavelength_nm,
            bandwidth_fwhm_nm,
            coherence_length_um,
            convention,
        })
    }

    pub fn from_coherence_length(
        center_wavelength_nm: f64,
        coherence_length_um: f64,
        convention: BandwidthConvention,
    ) -> Result<Self, ModelError> {
        let bandwidth_fwhm_nm =
            bandwidth_from_coherence_length(center_wavelength_nm, coherence_length_um, convention)?;
        Ok(SpectralParams {
            center_wavelength_nm,
            bandwidth_fwhm_nm,
            coherence_length_um,
            convention,
        })
    }

    pub fn center_wavelength_um(&self) -> f64 {
        self.center_wavelength_nm * 1e-3
    }
}

impl Default for SpectralParams {
    /// 1310 nm, 90 nm FWHM, Gaussian convention.
    fn default() -> Self {
        SpectralParams::from_bandwidth(1310.0, 90.0, BandwidthConvention::GaussianFwhm)
            .expect("default spectrum is valid")
    }
}

/// Interferometer phases in radians, and the path mismatch between the two
/// interferometers in µm that drives the coherence envelope.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct PhaseSetting {
    pub delta1: f64,
    pub delta2: f64,
    pub path_mismatch_um: f64,
}

impl PhaseSetting {
    pub fn new(delta1: f64, delta2: f64, path_mismatch_um: f64) -> Result<Self, ModelError> {
        for (field, v) in [
            ("delta1", delta1),
            ("delta2", delta2),
            ("path_mismatch", path_mismatch_um),
        ] {
            if !v.is_finite() {
                return Err(invalid(field, format!("must be finite, got {v}")));
            }
        }
        Ok(PhaseSetting {
            delta1,
            delta2,
            path_mismatch_um,
        })
    }

    /// `δ1 + δ2`, the phase the fringes depend on.
    pub fn phase_sum(&self) -> f64 {
        self.delta1 + self.delta2
    }
}

/// Output label of one analyzer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Sign {
    Plus,
    Minus,
}

impl Sign {
    pub fn value(self) -> f64 {
        match self {
            Sign::Plus => 1.0,
            Sign::Minus => -1.0,
        }
    }

    pub fn flip(self) -> Sign {
        match self {
            Sign::Plus => Sign::Minus,
            Sign::Minus => Sign::Plus,
        }
    }

    pub fn symbol(self) -> char {
        match self {
            Sign::Plus => '+',
            Sign::Minus => '-',
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct OutcomeLabel {
    pub i: Sign,
    pub j: Sign,
}

impl OutcomeLabel {
    /// In the order `++, +-, -+, --`.
    pub const ALL: [OutcomeLabel; 4] = [
        OutcomeLabel::new(Sign::Plus, Sign::Plus),
        OutcomeLabel::new(Sign::Plus, Sign::Minus),
        OutcomeLabel::new(Sign::Minus, Sign::Plus),
        OutcomeLabel::new(Sign::Minus, Sign::Minus),
    ];

    pub const fn new(i: Sign, j: Sign) -> Self {
        OutcomeLabel { i, j }
    }

    /// Position in [`OutcomeLabel::ALL`].
    pub fn index(&self) -> usize {
        match (self.i, self.j) {
            (Sign::Plus, Sign::Plus) => 0,
            (Sign::Plus, Sign::Minus) => 1,
            (Sign::Minus, Sign::Plus) => 2,
            (Sign::Minus, Sign::Minus) => 3,
        }
    }

    pub fn product(&self) -> f64 {
        self.i.value() * self.j.value()
    }

    pub fn flipped(&self) -> Self {
        OutcomeLabel::new(self.i.flip(), self.j.flip())
    }
}

impl fmt::Display for OutcomeLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}{}", self.i.symbol(), self.j.symbol())
    }
}

/// The lumped apparatus visibility `V ∈ [0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VisibilityParams {
    pub apparatus_visibility: f64,
}

impl VisibilityParams {
    pub fn new(apparatus_visibility: f64) -> Result<Self, ModelError> {
        if (0.0..=1.0).contains(&apparatus_visibility) {
            Ok(VisibilityParams {
                apparatus_visibility,
            })
        } else {
            Err(invalid(
                "apparatus_visibility",
                format!("must lie in [0, 1], got {apparatus_visibility}"),
            ))
        }
    }
}

impl Default for VisibilityParams {
    fn default() -> Self {
        VisibilityParams {
            apparatus_visibility: 1.0,
        }
    }
}

/// Gaussian coherence envelope `exp(-(λ·Δ/(2π·Lc))²)`, all lengths in µm.
pub fn envelope(path_mismatch_um: f64, spec: &SpectralParams) -> f64 {
    let x = spec.center_wavelength_um() * path_mismatch_um / (2.0 * PI * spec.coherence_length_um);
    (-x * x).exp()
}

/// Path mismatch (µm) at which the envelope falls to one half.
pub fn half_envelope_mismatch(spec: &SpectralParams) -> f64 {
    2.0 * PI * spec.coherence_length_um * LN_2.sqrt() / spec.center_wavelength_um()
}

/// Effective two-photon visibility `V·E(Δ)` for a setting.
pub fn effective_visibility(phases: &PhaseSetting, spec: &SpectralParams, vis: &VisibilityParams) -> f64 {
    vis.apparatus_visibility * envelope(phases.path_mismatch_um, spec)
}

/// Post-selected joint detection probability for one outcome pair.
pub fn coincidence_probability(
    outcome: OutcomeLabel,
    phases: &PhaseSetting,
    spec: &SpectralParams,
    vis: &VisibilityParams,
) -> f64 {
    let v = effective_visibility(phases, spec, vis);
    0.25 * (1.0 + outcome.product() * v * phases.phase_sum().cos())
}

/// The four post-selected probabilities, indexed like [`OutcomeLabel::ALL`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JointDistribution(pub [f64; 4]);

impl JointDistribution {
    pub fn get(&self, outcome: OutcomeLabel) -> f64 {
        self.0[outcome.index()]
    }

    pub fn total(&self) -> f64 {
        self.0.iter().sum()
    }
}

pub fn joint_outcome_distribution(
    phases: &PhaseSetting,
    spec: &SpectralParams,
    vis: &VisibilityParams,
) -> JointDistribution {
    // The ± terms cancel pairwise, so build the table from a shared
    // correlation term to keep the sum exactly 1.
    let c = 0.25 * effective_visibility(phases, spec, vis) * phases.phase_sum().cos();
    JointDistribution([0.25 + c, 0.25 - c, 0.25 - c, 0.25 + c])
}

/// Visibility seen on raw counts when a flat background of `mean_accidentals`
/// sits under `mean_true_coincidences` signal counts: `V·S/(S+A)`.
pub fn raw_visibility_with_accidentals(
    net_visibility: f64,
    mean_true_coincidences: f64,
    mean_accidentals: f64,
) -> Result<f64, ModelError> {
    if !(0.0..=1.0).contains(&net_visibility) {
        return Err(invalid("net_visibility", format!("must lie in [0, 1], got {net_visibility}")));
    }
    if !(mean_true_coincidences >= 0.0) {
        return Err(invalid("mean_true_coincidences", "must be >= 0"));
    }
    if !(mean_accidentals >= 0.0) {
        return Err(invalid("mean_accidentals", "must be >= 0"));
    }
    let total = mean_true_coincidences + mean_accidentals;
    if total == 0.0 {
        return Err(ModelError::UndefinedInput("true coincidences plus accidentals is zero"));
    }
    Ok(net_visibility * mean_true_coincidences / total)
}

/// Signal level `S` that dilutes `net_visibility` down to `raw_visibility`
/// under `mean_accidentals` background, i.e. the inverse of
/// [`raw_visibility_with_accidentals`] in `S`.
pub fn true_coincidences_for_raw_visibility(
    net_visibility: f64,
    raw_visibility: f64,
    mean_accidentals: f64,
) -> Result<f64, ModelError> {
    if !(raw_visibility >= 0.0 && raw_visibility < net_visibility) {
        return Err(invalid(
            "raw_visibility",
            format!("must lie in [0, net_visibility), got {raw_visibility}"),
        ));
    }
    Ok(mean_accidentals * raw_visibility / (net_visibility - raw_visibility))
}

/// Signed number of standard deviations by which `visibility` exceeds the
/// Bell threshold `1/√2`.
pub fn bell_violation_sigma(visibility: f64, visibility_uncertainty: f64) -> Result<f64, ModelError> {
    if !(visibility_uncertainty > 0.0) {
        return Err(ModelError::InvalidUncertainty(visibility_uncertainty));
    }
    Ok((visibility - BELL_THRESHOLD) / visibility_uncertainty)
}
