//! Parametric bootstrap of the net visibility: every point's count (and the
//! accidental count) is redrawn from a Poisson law with the observed mean,
//! then the subtraction and fit are repeated.

use rand_distr::{Distribution, Poisson};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{subtract_accidentals, AccidentalEstimate, FitError};
use crate::montecarlo::CountRecord;
use crate::rng::stream;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BootstrapSummary {
    pub replicas: usize,
    /// Replicas whose fit failed and were left out.
    pub failed: usize,
    pub mean: f64,
    pub std_dev: f64,
}

fn poisson<R: rand::Rng + ?Sized>(mean: f64, rng: &mut R) -> f64 {
    if mean <= 0.0 {
        0.0
    } else {
        Poisson::new(mean).map(|p| p.sample(rng)).unwrap_or(mean)
    }
}

/// `accidental_count` is the raw count behind the estimate; it is redrawn
/// and rescaled to the estimate's interval.
pub fn bootstrap_net_visibility(
    records: &[CountRecord],
    accidentals: &AccidentalEstimate,
    accidental_count: u64,
    replicas: usize,
    seed: u64,
) -> Result<BootstrapSummary, FitError> {
    if replicas < 2 {
        return Err(FitError::InsufficientData("need at least 2 bootstrap replicas".into()));
    }
    let scale = if accidental_count > 0 {
        accidentals.per_interval / accidental_count as f64
    } else {
        0.0
    };
    let values: Vec<Option<f64>> = (0..replicas)
        .into_par_iter()
        .map(|k| {
            let mut rng = stream(seed, "bootstrap", k as u64);
            let resampled: Vec<CountRecord> = records
                .iter()
                .map(|r| CountRecord {
                    windowed_coincidences: poisson(r.windowed_coincidences as f64, &mut rng) as u64,
                    ..r.clone()
                })
                .collect();
            let a = poisson(accidental_count as f64, &mut rng);
            let est = AccidentalEstimate {
                per_interval: a * scale,
                uncertainty: a.sqrt() * scale,
                interval_s: accidentals.interval_s,
            };
            subtract_accidentals(&resampled, &est).ok().map(|n| n.fit.visibility)
        })
        .collect();
    let ok: Vec<f64> = values.iter().flatten().copied().collect();
    if ok.len() < 2 {
        return Err(FitError::InsufficientData("fewer than 2 bootstrap fits succeeded".into()));
    }
    let mean = ok.iter().sum::<f64>() / ok.len() as f64;
    let var = ok.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (ok.len() - 1) as f64;
    Ok(BootstrapSummary {
        replicas,
        failed: replicas - ok.len(),
        mean,
        std_dev: var.sqrt(),
    })
}
