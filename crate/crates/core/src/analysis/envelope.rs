//! Coherence-envelope fit `V(Δ) = V0·exp(-(λΔ/(2π·Lc))²)`.

use std::f64::consts::{LN_2, PI};

use serde::{Deserialize, Serialize};

use super::lsq::levenberg_marquardt;
use super::FitError;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnvelopePoint {
    pub path_mismatch_um: f64,
    pub visibility: f64,
    /// Weights are `1/σ²` when every point carries one, uniform otherwise.
    pub uncertainty: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnvelopeFit {
    pub v0: f64,
    pub v0_uncertainty: f64,
    pub coherence_length_um: f64,
    pub coherence_length_uncertainty_um: f64,
    /// Mismatch at which the fitted envelope drops to one half.
    pub half_mismatch_um: f64,
    pub chi_square_per_dof: f64,
}

pub fn fit_envelope(points: &[EnvelopePoint], center_wavelength_nm: f64) -> Result<EnvelopeFit, FitError> {
    if points.len() < 5 {
        return Err(FitError::InsufficientData(format!(
            "need at least 5 mismatch points, got {}",
            points.len()
        )));
    }
    if !(center_wavelength_nm > 0.0) {
        return Err(FitError::InvalidInput("wavelength must be positive".into()));
    }
    if points
        .iter()
        .any(|p| !p.path_mismatch_um.is_finite() || !p.visibility.is_finite())
    {
        return Err(FitError::InvalidInput("non-finite mismatch or visibility".into()));
    }
    let lambda = center_wavelength_nm * 1e-3;
    let x: Vec<f64> = points.iter().map(|p| p.path_mismatch_um).collect();
    let y: Vec<f64> = points.iter().map(|p| p.visibility).collect();
    let w: Vec<f64> = if points.iter().all(|p| p.uncertainty.is_some_and(|s| s > 0.0)) {
        points.iter().map(|p| p.uncertainty.unwrap().powi(-2)).collect()
    } else {
        vec![1.0; points.len()]
    };
    let max_abs = x.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let distinct = {
        let mut v: Vec<f64> = x.iter().map(|d| d.abs()).collect();
        v.sort_by(f64::total_cmp);
        v.dedup();
        v.len()
    };
    if distinct < 2 || max_abs == 0.0 {
        return Err(FitError::InsufficientData("mismatches do not vary".into()));
    }

    // start from a log-linear regression of ln V on Δ²
    let v0 = y.iter().cloned().fold(f64::MIN, f64::max).max(1e-6);
    let (mut sxx, mut sxy, mut sx, mut sy, mut n) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for (&d, &v) in x.iter().zip(&y) {
        if v > 0.05 * v0 {
            let (u, l) = (d * d, v.ln());
            sxx += u * u;
            sxy += u * l;
            sx += u;
            sy += l;
            n += 1.0;
        }
    }
    let slope = if n >= 2.0 { (n * sxy - sx * sy) / (n * sxx - sx * sx) } else { f64::NAN };
    let lc0 = if slope.is_finite() && slope < 0.0 {
        lambda / (2.0 * PI * (-slope).sqrt())
    } else {
        lambda * max_abs / (2.0 * PI)
    };

    let model = |d: f64, p: &[f64], g: &mut [f64]| {
        let k = lambda / (2.0 * PI * p[1]);
        let e = (-(k * d).powi(2)).exp();
        g[0] = e;
        // ∂/∂Lc of exp(-(λd/2πLc)²) = e·2(kd)²/Lc
        g[1] = p[0] * e * 2.0 * (k * d).powi(2) / p[1];
        p[0] * e
    };
    let r = levenberg_marquardt(model, &x, &y, &w, &[v0, lc0])?;
    let (v0, lc) = (r.params[0], r.params[1].abs());
    let half = 2.0 * PI * lc * LN_2.sqrt() / lambda;
    if max_abs < half {
        return Err(FitError::InsufficientData(format!(
            "largest mismatch {max_abs} µm does not reach the half-decay point {half:.1} µm"
        )));
    }
    let dof = (points.len() as f64 - 2.0).max(1.0);
    Ok(EnvelopeFit {
        v0,
        v0_uncertainty: r.covariance[(0, 0)].sqrt(),
        coherence_length_um: lc,
        coherence_length_uncertainty_um: r.covariance[(1, 1)].sqrt(),
        half_mismatch_um: half,
        chi_square_per_dof: r.chi_square / dof,
    })
}
