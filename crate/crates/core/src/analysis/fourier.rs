//! Fourier check of a uniformly sampled fringe.

use std::f64::consts::TAU;

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use super::FitError;
use crate::montecarlo::CountRecord;

/// Threshold in standard deviations above the mean of the other bins.
pub const DEFAULT_SIGNIFICANCE: f64 = 5.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SignificantFrequency {
    /// DFT bin index.
    pub bin: usize,
    /// Cycles per 2π of phase sum.
    pub cycles_per_period: f64,
    pub magnitude: f64,
    pub threshold: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FourierReport {
    pub count: usize,
    pub significant: Vec<SignificantFrequency>,
    /// Magnitudes of bins `1..=N/2`.
    pub magnitudes: Vec<f64>,
    /// Phase step between consecutive points.
    pub phase_step: f64,
}

/// Counts DFT bins (zero frequency excluded, one-sided) whose magnitude
/// exceeds `mean + k·std` of all other non-zero bins. A tiny floor relative
/// to the zero-frequency term keeps rounding noise on exact data from
/// qualifying.
pub fn fourier_significant_frequencies(records: &[CountRecord], k_sigma: f64) -> Result<FourierReport, FitError> {
    let phases: Vec<f64> = records.iter().map(|r| r.setting.phase_sum()).collect();
    let values: Vec<f64> = records.iter().map(|r| r.windowed_coincidences as f64).collect();
    fourier_of_samples(&phases, &values, k_sigma)
}

pub(crate) fn fourier_of_samples(phases: &[f64], values: &[f64], k_sigma: f64) -> Result<FourierReport, FitError> {
    let n = values.len();
    if n < 4 {
        return Err(FitError::InsufficientData(format!("need at least 4 points, got {n}")));
    }
    let step = phases[1] - phases[0];
    let tol = 1e-9 * step.abs().max(1e-12);
    if step == 0.0 || phases.windows(2).any(|w| ((w[1] - w[0]) - step).abs() > tol) {
        return Err(FitError::InvalidInput("phase settings are not uniformly spaced".into()));
    }
    let mut buf: Vec<Complex<f64>> = values.iter().map(|&v| Complex::new(v, 0.0)).collect();
    FftPlanner::new().plan_fft_forward(n).process(&mut buf);
    let dc = buf[0].norm();
    let magnitudes: Vec<f64> = buf[1..=n / 2].iter().map(|c| c.norm()).collect();
    let floor = 1e-9 * dc + 1e-12;
    let mut significant = Vec::new();
    for (i, &mag) in magnitudes.iter().enumerate() {
        let others: Vec<f64> = magnitudes
            .iter()
            .enumerate()
            .filter(|(j, _)| *j != i)
            .map(|(_, &m)| m)
            .collect();
        let threshold = if others.is_empty() {
            floor
        } else {
            let mean = others.iter().sum::<f64>() / others.len() as f64;
            let var = others.iter().map(|m| (m - mean).powi(2)).sum::<f64>() / others.len() as f64;
            (mean + k_sigma * var.sqrt()).max(floor)
        };
        if mag > threshold {
            let bin = i + 1;
            significant.push(SignificantFrequency {
                bin,
                cycles_per_period: bin as f64 * TAU / (n as f64 * step.abs()),
                magnitude: mag,
                threshold,
            });
        }
    }
    Ok(FourierReport {
        count: significant.len(),
        significant,
        magnitudes,
        phase_step: step,
    })
}
