//! Free-running Geiger-mode photon counter: efficiency, timing jitter, dark
//! counts, non-paralyzable dead time and optional afterpulsing.

use std::cmp::Reverse;
use std::collections::BinaryHeap;

use rand::Rng;
use rand_distr::{Distribution, Exp1, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{ensure, InvalidParameter, Station};
use crate::units::{fwhm_to_sigma, PS_PER_NS, PS_PER_S};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectorParams {
    pub efficiency: f64,
    pub dark_rate_hz: f64,
    pub jitter_fwhm_ps: f64,
    pub dead_time_ns: f64,
    pub afterpulse_probability: f64,
    /// Mean delay of an afterpulse after the end of the dead time.
    pub afterpulse_delay_ns: f64,
}

impl Default for DetectorParams {
    fn default() -> Self {
        DetectorParams {
            efficiency: 0.15,
            dark_rate_hz: 100e3,
            jitter_fwhm_ps: 200.0,
            dead_time_ns: 1000.0,
            afterpulse_probability: 0.0,
            afterpulse_delay_ns: 1000.0,
        }
    }
}

impl DetectorParams {
    pub fn validate(&self) -> Result<(), InvalidParameter> {
        ensure((0.0..=1.0).contains(&self.efficiency), "efficiency", || {
            format!("must lie in [0, 1], got {}", self.efficiency)
        })?;
        ensure(self.dark_rate_hz.is_finite() && self.dark_rate_hz >= 0.0, "dark_rate_hz", || {
            format!("must be >= 0, got {}", self.dark_rate_hz)
        })?;
        ensure(self.jitter_fwhm_ps.is_finite() && self.jitter_fwhm_ps >= 0.0, "jitter_fwhm_ps", || {
            format!("must be >= 0, got {}", self.jitter_fwhm_ps)
        })?;
        ensure(self.dead_time_ns.is_finite() && self.dead_time_ns >= 0.0, "dead_time_ns", || {
            format!("must be >= 0, got {}", self.dead_time_ns)
        })?;
        ensure((0.0..1.0).contains(&self.afterpulse_probability), "afterpulse_probability", || {
            format!("must lie in [0, 1), got {}", self.afterpulse_probability)
        })?;
        ensure(self.afterpulse_delay_ns.is_finite() && self.afterpulse_delay_ns >= 0.0, "afterpulse_delay_ns", || {
            format!("must be >= 0, got {}", self.afterpulse_delay_ns)
        })
    }

    pub fn dead_time_ps(&self) -> i64 {
        (self.dead_time_ns * PS_PER_NS).round() as i64
    }
}

/// What caused a detector firing. Kept for diagnostics only; the
/// coincidence logic never looks at it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Origin {
    Photon,
    Dark,
    Afterpulse,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TimeTag {
    pub station: Station,
    pub time_ps: i64,
    pub origin: Origin,
}

/// Full detection: efficiency thinning of `arrivals` followed by
/// [`register`]. `arrivals` must be sorted.
pub fn detect<R: Rng + ?Sized>(
    det: &DetectorParams,
    station: Station,
    arrivals: &[i64],
    duration_s: f64,
    rng: &mut R,
) -> Vec<TimeTag> {
    let kept: Vec<i64> = if det.efficiency >= 1.0 {
        arrivals.to_vec()
    } else {
        arrivals
            .iter()
            .copied()
            .filter(|_| rng.random::<f64>() < det.efficiency)
            .collect()
    };
    register(det, station, &kept, duration_s, rng)
}

/// Turns photons that will fire the diode into tags: adds timing jitter,
/// merges the dark-count stream over `[0, duration_s)`, then enforces the
/// dead time (and schedules afterpulses).
pub fn register<R: Rng + ?Sized>(
    det: &DetectorParams,
    station: Station,
    firing_photons: &[i64],
    duration_s: f64,
    rng: &mut R,
) -> Vec<TimeTag> {
    let sigma = fwhm_to_sigma(det.jitter_fwhm_ps);
    let mut candidates: Vec<(i64, Origin)> = Vec::with_capacity(
        firing_photons.len() + (det.dark_rate_hz * duration_s * 1.01) as usize + 16,
    );
    for &t in firing_photons {
        let jitter = if sigma > 0.0 {
            let z: f64 = StandardNormal.sample(rng);
            (z * sigma).round() as i64
        } else {
            0
        };
        candidates.push((t + jitter, Origin::Photon));
    }
    if det.dark_rate_hz > 0.0 && duration_s > 0.0 {
        let end = duration_s * PS_PER_S;
        let gap = PS_PER_S / det.dark_rate_hz;
        let mut t = 0.0f64;
        loop {
            let e: f64 = Exp1.sample(rng);
            t += e * gap;
            if t >= end {
                break;
            }
            candidates.push((t as i64, Origin::Dark));
        }
    }
    candidates.sort_unstable();
    apply_dead_time(det, station, &candidates, duration_s, rng)
}

fn apply_dead_time<R: Rng + ?Sized>(
    det: &DetectorParams,
    station: Station,
    candidates: &[(i64, Origin)],
    duration_s: f64,
    rng: &mut R,
) -> Vec<TimeTag> {
    let dead = det.dead_time_ps();
    let end_ps = (duration_s * PS_PER_S) as i64;
    let ap_mean = det.afterpulse_delay_ns * PS_PER_NS;
    let mut pending: BinaryHeap<Reverse<i64>> = BinaryHeap::new();
    let mut out = Vec::with_capacity(candidates.len());
    let mut live_from = i64::MIN;
    let mut i = 0;
    loop {
        let next_candidate = candidates.get(i).copied();
        let next_pulse = pending.peek().map(|r| r.0);
        let (t, origin) = match (next_candidate, next_pulse) {
            (None, None) => break,
            (Some(c), None) => {
                i += 1;
                c
            }
            (Some(c), Some(p)) if c.0 <= p => {
                i += 1;
                c
            }
            (_, Some(p)) => {
                pending.pop();
                (p, Origin::Afterpulse)
            }
        };
        // strict increase even for a zero dead time
        if t < live_from || out.last().is_some_and(|last: &TimeTag| last.time_ps >= t) {
            continue;
        }
        out.push(TimeTag {
            station,
            time_ps: t,
            origin,
        });
        live_from = t.saturating_add(dead);
        if det.afterpulse_probability > 0.0 && rng.random::<f64>() < det.afterpulse_probability {
            let e: f64 = Exp1.sample(rng);
            let when = live_from + (e * ap_mean).round() as i64;
            if when < end_ps {
                pending.push(Reverse(when));
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;

    fn quiet() -> DetectorParams {
        DetectorParams {
            efficiency: 1.0,
            dark_rate_hz: 0.0,
            jitter_fwhm_ps: 0.0,
            dead_time_ns: 1000.0,
            afterpulse_probability: 0.0,
            afterpulse_delay_ns: 100.0,
        }
    }

    #[test]
    fn blind_detector_is_silent() {
        let det = DetectorParams {
            efficiency: 0.0,
            dark_rate_hz: 0.0,
            ..quiet()
        };
        let arrivals: Vec<i64> = (0..1000).map(|k| k * 10_000_000).collect();
        assert!(detect(&det, Station::One, &arrivals, 1.0, &mut stream(1, "det", 0)).is_empty());
    }

    #[test]
    fn dark_count_total() {
        let det = DetectorParams {
            efficiency: 0.0,
            dark_rate_hz: 100e3,
            dead_time_ns: 0.0,
            ..quiet()
        };
        let tags = detect(&det, Station::One, &[], 20.0, &mut stream(2, "det", 0));
        let n = tags.len() as f64;
        assert!((n - 2.0e6).abs() < 6e3, "{n}");
        assert!(tags.iter().all(|t| t.origin == Origin::Dark));
    }

    #[test]
    fn dead_time_merges_close_photons() {
        let tags = detect(&quiet(), Station::Two, &[5_000, 6_000], 1e-3, &mut stream(3, "det", 0));
        assert_eq!(tags.len(), 1);
        assert_eq!(tags[0].time_ps, 5_000);
        assert_eq!(tags[0].station, Station::Two);
    }

    #[test]
    fn non_paralyzable_rate() {
        // measured = r / (1 + r·τ) for Poisson input
        let det = DetectorParams {
            dark_rate_hz: 200e3,
            ..quiet()
        };
        let tags = register(&det, Station::One, &[], 5.0, &mut stream(4, "det", 0));
        let measured = tags.len() as f64 / 5.0;
        let expected = 200e3 / (1.0 + 200e3 * 1e-6);
        assert!((measured - expected).abs() < 4.0 * (expected / 5.0).sqrt(), "{measured} {expected}");
        assert!(tags.windows(2).all(|w| w[1].time_ps - w[0].time_ps >= 1_000_000));
    }

    #[test]
    fn afterpulses_follow_dead_time() {
        let det = DetectorParams {
            afterpulse_probability: 0.5,
            afterpulse_delay_ns: 50.0,
            ..quiet()
        };
        let arrivals: Vec<i64> = (0..20_000).map(|k| 1_000 + k * 50_000_000).collect();
        let tags = register(&det, Station::One, &arrivals, 1.0, &mut stream(5, "det", 0));
        let after: Vec<_> = tags.iter().filter(|t| t.origin == Origin::Afterpulse).collect();
        // P(n afterpulses in a chain) is geometric: mean p/(1-p) = 1 per photon
        let per_photon = after.len() as f64 / arrivals.len() as f64;
        assert!((per_photon - 1.0).abs() < 0.05, "{per_photon}");
        assert!(tags.windows(2).all(|w| w[1].time_ps - w[0].time_ps >= 1_000_000));
    }

    #[test]
    fn jitter_width() {
        let det = DetectorParams {
            jitter_fwhm_ps: 200.0,
            dead_time_ns: 0.0,
            ..quiet()
        };
        let arrivals: Vec<i64> = (0..100_000).map(|k| k * 1_000_000).collect();
        let tags = register(&det, Station::One, &arrivals, 1.0, &mut stream(6, "det", 0));
        assert_eq!(tags.len(), arrivals.len());
        let var = tags
            .iter()
            .zip(&arrivals)
            .map(|(t, a)| ((t.time_ps - a) as f64).powi(2))
            .sum::<f64>()
            / arrivals.len() as f64;
        let sigma = 200.0 / 2.354_820_045;
        assert!((var.sqrt() / sigma - 1.0).abs() < 0.02);
    }

    #[test]
    fn validation() {
        let det = DetectorParams {
            afterpulse_probability: 1.0,
            ..DetectorParams::default()
        };
        assert_eq!(det.validate().unwrap_err().field, "afterpulse_probability");
    }
}
