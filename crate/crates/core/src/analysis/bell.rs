use serde::{Deserialize, Serialize};

use super::{FitError, FringeFit};
use crate::model::{bell_violation_sigma, BELL_THRESHOLD};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BellReport {
    pub raw_visibility: f64,
    pub raw_visibility_uncertainty: f64,
    pub net_visibility: f64,
    pub net_visibility_uncertainty: f64,
    pub accidentals_per_interval: f64,
    pub threshold: f64,
    /// `(net_visibility - threshold) / net_visibility_uncertainty`.
    pub sigma_violation: f64,
}

pub fn bell_report(raw: &FringeFit, net: &FringeFit, accidentals_per_interval: f64) -> Result<BellReport, FitError> {
    let sigma = bell_violation_sigma(net.visibility, net.visibility_uncertainty)
        .map_err(|e| FitError::InvalidInput(e.to_string()))?;
    Ok(BellReport {
        raw_visibility: raw.visibility,
        raw_visibility_uncertainty: raw.visibility_uncertainty,
        net_visibility: net.visibility,
        net_visibility_uncertainty: net.visibility_uncertainty,
        accidentals_per_interval,
        threshold: BELL_THRESHOLD,
        sigma_violation: sigma,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fit(v: f64, s: f64) -> FringeFit {
        FringeFit {
            mean_level: 100.0,
            mean_level_uncertainty: 1.0,
            visibility: v,
            visibility_uncertainty: s,
            phase_offset: 0.0,
            chi_square_per_dof: 1.0,
            flagged: false,
        }
    }

    #[test]
    fn geneva_numbers() {
        let r = bell_report(&fit(0.46, 0.02), &fit(0.816, 0.011), 150.0).unwrap();
        assert!((r.sigma_violation - 9.8994).abs() < 1e-4);
        assert_eq!(r.sigma_violation, (r.net_visibility - r.threshold) / r.net_visibility_uncertainty);
    }

    #[test]
    fn at_threshold_and_below() {
        let r = bell_report(&fit(0.3, 0.02), &fit(BELL_THRESHOLD, 0.02), 0.0).unwrap();
        assert_eq!(r.sigma_violation, 0.0);
        let r = bell_report(&fit(0.3, 0.02), &fit(0.6, 0.02), 0.0).unwrap();
        assert!((r.sigma_violation + 5.3553).abs() < 1e-4);
    }

    #[test]
    fn zero_uncertainty_rejected() {
        assert!(bell_report(&fit(0.5, 0.0), &fit(0.8, 0.0), 0.0).is_err());
    }
}
