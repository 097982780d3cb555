//! Fringe fitting and accidental subtraction.
//!
//! The model `C(φ) = M·(1 + V·cos(φ + φ0))` is fitted in the equivalent
//! form `M + a·cos φ + b·sin φ` (`a = M·V·cos φ0`, `b = -M·V·sin φ0`), which
//! stays well conditioned when V approaches zero. V, φ0 and their
//! uncertainties are then read off the fitted `(M, a, b)` and covariance.

use std::f64::consts::{PI, TAU};

use serde::{Deserialize, Serialize};

use super::lsq::levenberg_marquardt;
use super::FitError;
use crate::montecarlo::CountRecord;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FringeFit {
    pub mean_level: f64,
    pub mean_level_uncertainty: f64,
    pub visibility: f64,
    pub visibility_uncertainty: f64,
    pub phase_offset: f64,
    pub chi_square_per_dof: f64,
    /// Visibility more than three standard deviations above 1.
    pub flagged: bool,
}

/// One fringe sample: phase sum, value, and the count the weight comes from.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FringePoint {
    pub phase_rad: f64,
    pub value: f64,
    pub weight_count: f64,
}

/// Accidental level measured over `interval_s`, with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AccidentalEstimate {
    pub per_interval: f64,
    pub uncertainty: f64,
    pub interval_s: f64,
}

impl AccidentalEstimate {
    /// Poisson estimate from `count` accidentals seen in `duration_s`,
    /// expressed per `interval_s`.
    pub fn from_count(count: u64, duration_s: f64, interval_s: f64) -> Self {
        let scale = interval_s / duration_s;
        AccidentalEstimate {
            per_interval: count as f64 * scale,
            uncertainty: (count as f64).sqrt() * scale,
            interval_s,
        }
    }

    fn for_duration(&self, duration_s: f64) -> (f64, f64) {
        let scale = duration_s / self.interval_s;
        (self.per_interval * scale, self.uncertainty * scale)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetScan {
    pub points: Vec<FringePoint>,
    pub fit: FringeFit,
}

/// Largest arc of the circle not covered by the phases.
fn phase_coverage(phases: &[f64]) -> f64 {
    let mut p: Vec<f64> = phases.iter().map(|x| x.rem_euclid(TAU)).collect();
    p.sort_by(f64::total_cmp);
    let mut gap = p[0] + TAU - p[p.len() - 1];
    for w in p.windows(2) {
        gap = gap.max(w[1] - w[0]);
    }
    TAU - gap
}

/// Weighted fit of arbitrary fringe samples with weights `1/max(weight_count, 1)`.
/// `extra_mean_variance` is added to the variance of M (used for the
/// accidental estimate, which shifts every point by the same amount).
fn fit_weighted(points: &[FringePoint], extra_mean_variance: f64) -> Result<FringeFit, FitError> {
    if points.len() < 5 {
        return Err(FitError::InsufficientData(format!("need at least 5 points, got {}", points.len())));
    }
    if points.iter().any(|p| !p.phase_rad.is_finite() || !p.value.is_finite() || !p.weight_count.is_finite()) {
        return Err(FitError::InvalidInput("non-finite phase or count".into()));
    }
    let phases: Vec<f64> = points.iter().map(|p| p.phase_rad).collect();
    if phase_coverage(&phases) <= PI {
        return Err(FitError::InsufficientData("phases span no more than half a fringe period".into()));
    }
    let y: Vec<f64> = points.iter().map(|p| p.value).collect();
    let w: Vec<f64> = points.iter().map(|p| 1.0 / p.weight_count.max(1.0)).collect();

    // initial guess from the discrete Fourier components
    let n = points.len() as f64;
    let m0 = y.iter().sum::<f64>() / n;
    let a0 = 2.0 / n * phases.iter().zip(&y).map(|(p, v)| v * p.cos()).sum::<f64>();
    let b0 = 2.0 / n * phases.iter().zip(&y).map(|(p, v)| v * p.sin()).sum::<f64>();

    let model = |phi: f64, p: &[f64], g: &mut [f64]| {
        let (s, c) = phi.sin_cos();
        g[0] = 1.0;
        g[1] = c;
        g[2] = s;
        p[0] + p[1] * c + p[2] * s
    };
    let r = levenberg_marquardt(model, &phases, &y, &w, &[m0, a0, b0])?;
    let (m, a, b) = (r.params[0], r.params[1], r.params[2]);
    if m <= 0.0 {
        return Err(FitError::InvalidInput(format!("fitted mean level {m} is not positive")));
    }
    let cov = &r.covariance;
    let var_m = cov[(0, 0)] + extra_mean_variance;
    let amp = a.hypot(b);
    let v = amp / m;
    let var_v = if amp > 0.0 {
        // gradient of sqrt(a² + b²)/M
        let g = [-amp / (m * m), a / (amp * m), b / (amp * m)];
        let mut var = 0.0;
        for i in 0..3 {
            for j in 0..3 {
                let c = if i == 0 && j == 0 { var_m } else { cov[(i, j)] };
                var += g[i] * c * g[j];
            }
        }
        var
    } else {
        0.5 * (cov[(1, 1)] + cov[(2, 2)]) / (m * m)
    };
    let sigma_v = var_v.sqrt();
    let dof = points.len() as f64 - 3.0;
    Ok(FringeFit {
        mean_level: m,
        mean_level_uncertainty: var_m.sqrt(),
        visibility: v,
        visibility_uncertainty: sigma_v,
        phase_offset: (-b).atan2(a),
        chi_square_per_dof: r.chi_square / dof,
        flagged: v > 1.0 + 3.0 * sigma_v,
    })
}

/// Fits arbitrary fringe samples.
pub fn fit_fringe_points(points: &[FringePoint]) -> Result<FringeFit, FitError> {
    fit_weighted(points, 0.0)
}

fn raw_points(records: &[CountRecord]) -> Vec<FringePoint> {
    records
        .iter()
        .map(|r| FringePoint {
            phase_rad: r.setting.phase_sum(),
            value: r.windowed_coincidences as f64,
            weight_count: r.windowed_coincidences as f64,
        })
        .collect()
}

/// Fit of the windowed coincidences against `δ1 + δ2`.
pub fn fit_fringe(records: &[CountRecord]) -> Result<FringeFit, FitError> {
    fit_weighted(&raw_points(records), 0.0)
}

/// Removes the accidental level from every point (scaled to its duration,
/// not clamped) and refits. Weights stay those of the raw counts; the
/// accidental estimate's own error enters through the mean level.
pub fn subtract_accidentals(records: &[CountRecord], accidentals: &AccidentalEstimate) -> Result<NetScan, FitError> {
    if !(accidentals.per_interval >= 0.0 && accidentals.uncertainty >= 0.0 && accidentals.interval_s > 0.0) {
        return Err(FitError::InvalidInput(
            "accidentals must be >= 0 with a positive interval".into(),
        ));
    }
    let mut points = raw_points(records);
    let mut err_sum = 0.0;
    for (p, r) in points.iter_mut().zip(records) {
        let (mean, err) = accidentals.for_duration(r.duration_s);
        p.value -= mean;
        err_sum += err;
    }
    // every point moves together, so the mean level carries the full error
    let err = err_sum / points.len().max(1) as f64;
    let fit = fit_weighted(&points, err * err)?;
    Ok(NetScan { points, fit })
}
