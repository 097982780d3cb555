//! Analytic rate model and the one-time source/converter calibration.
//!
//! The forward model ([`predict`]) gives expected singles, coincidence and
//! accidental rates for a scenario in closed form (plus a 1-D quadrature
//! over the pair detuning). [`calibrate`] inverts it in three steps:
//!
//! 1. the collected pair flux `R·c` is chosen so that the predicted
//!    singles (dark counts included, non-paralyzable dead time applied)
//!    match both targets in the relative least-squares sense;
//! 2. the converter range is set so that the predicted accidentals in the
//!    shifted window match the target, the converter dead time being the
//!    only mechanism that pulls them below `R1·R2·τ·T`;
//! 3. the per-photon coupling `c` is set so that the true coincidences
//!    dilute the net visibility down to the raw target, which separates
//!    `R` from `c`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::fiber::PhotonInFlight;
use super::Station;
use crate::model::{envelope, true_coincidences_for_raw_visibility};
use crate::scenario::Scenario;
use crate::units::{fwhm_to_sigma, normal_cdf, PS_PER_NS, PS_PER_S, PS_PER_US};

/// Measured quantities the calibration reproduces.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct CalibrationTargets {
    pub singles_hz: [f64; 2],
    pub accidentals_per_interval: f64,
    pub raw_visibility: f64,
    pub net_visibility: f64,
    pub interval_s: f64,
}

impl CalibrationTargets {
    /// 164/167 kHz singles, 150 accidentals and V = 0.46 raw, 0.816 net per 20 s.
    pub fn geneva1998() -> Self {
        CalibrationTargets {
            singles_hz: [164e3, 167e3],
            accidentals_per_interval: 150.0,
            raw_visibility: 0.46,
            net_visibility: 0.816,
            interval_s: 20.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CalibrationError {
    #[error("invalid target {field}: {reason}")]
    InvalidTarget { field: &'static str, reason: String },
    #[error("target {0} cannot be reached with this scenario")]
    Unreachable(&'static str),
}

/// Expected rates for a scenario, averaged over the fringe phase.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    /// Registered singles rates after dead time.
    pub singles_hz: [f64; 2],
    /// Fraction of interfering pairs whose difference lands in the window.
    pub window_fraction: f64,
    /// Same for both satellite peaks together, per satellite pair.
    pub satellite_fraction: f64,
    /// Fraction of time the converter accepts starts.
    pub tphc_live_fraction: f64,
    pub true_coincidence_rate_hz: f64,
    /// Satellite leakage into the central window.
    pub satellite_rate_hz: f64,
    pub accidental_rate_hz: f64,
    /// Visibility at the scan's residual mismatch, before dilution.
    pub effective_visibility: f64,
    pub raw_visibility: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    pub pair_rate_hz: f64,
    pub coupling_efficiency: f64,
    pub tphc_range_ns: f64,
    pub prediction: Prediction,
}

impl Calibration {
    pub fn apply(&self, scenario: &Scenario) -> Scenario {
        let mut s = scenario.clone();
        s.source.pair_rate_hz = self.pair_rate_hz;
        s.source.coupling_efficiency = self.coupling_efficiency;
        s.electronics.tphc_range_ns = self.tphc_range_ns;
        s
    }
}

fn survival(scenario: &Scenario, s: Station) -> f64 {
    scenario.fiber(s).transmittance() * scenario.detector(s).efficiency
}

/// Raw (pre dead time) and registered rate of one detector for a collected
/// flux `flux = R·c`.
fn detector_rates(scenario: &Scenario, s: Station, flux: f64) -> (f64, f64) {
    let raw = scenario.detector(s).dark_rate_hz + flux * survival(scenario, s) / 2.0;
    let tau = scenario.detector(s).dead_time_ns * PS_PER_NS / PS_PER_S;
    (raw, raw / (1.0 + raw * tau))
}

/// Probability that the pair difference, offset by `center_ps`, lands in
/// the window. Detector and chain jitters are Gaussian; the dispersion term
/// is integrated over the detuning.
fn window_fraction(scenario: &Scenario, center_ps: f64) -> f64 {
    let el = &scenario.electronics;
    let chain = fwhm_to_sigma(el.chain_jitter_fwhm_ps);
    let var: f64 = Station::BOTH
        .iter()
        .map(|&s| fwhm_to_sigma(scenario.detector(s).jitter_fwhm_ps).powi(2) + chain * chain)
        .sum();
    let sigma = var.sqrt();
    let half = el.window_ps as f64 / 2.0;
    let spectral_sigma = fwhm_to_sigma(scenario.spectral.bandwidth_fwhm_nm);
    let degenerate = scenario.source.degenerate_wavelength_nm();
    let inside = |z: f64| {
        let photon = |sign: f64| PhotonInFlight {
            emission_ps: 0,
            wavelength_nm: degenerate + sign * z * spectral_sigma,
            standardized_detuning: sign * z,
        };
        let mu = center_ps + scenario.fibers[1].dispersion_offset_ps(&photon(-1.0))
            - scenario.fibers[0].dispersion_offset_ps(&photon(1.0));
        if sigma > 0.0 {
            normal_cdf((half - mu) / sigma) - normal_cdf((-half - mu) / sigma)
        } else if mu.abs() <= half {
            1.0
        } else {
            0.0
        }
    };
    // Simpson over z in [-8, 8]
    let n = 1600;
    let h = 16.0 / n as f64;
    let mut acc = 0.0;
    for k in 0..=n {
        let z = -8.0 + k as f64 * h;
        let w = if k == 0 || k == n {
            1.0
        } else if k % 2 == 1 {
            4.0
        } else {
            2.0
        };
        acc += w * inside(z) * (-0.5 * z * z).exp();
    }
    acc * h / 3.0 / (2.0 * std::f64::consts::PI).sqrt()
}

/// A detector's registered stream: Poisson firings at `raw_per_ps`
/// thinned by a non-paralyzable dead time, i.e. a renewal process with
/// intervals `dead + Exp(raw)`.
#[derive(Debug, Clone, Copy)]
struct Stream {
    raw_per_ps: f64,
    dead_ps: f64,
}

impl Stream {
    fn of(scenario: &Scenario, s: Station, flux: f64) -> Stream {
        Stream {
            raw_per_ps: detector_rates(scenario, s, flux).0 / PS_PER_S,
            dead_ps: scenario.detector(s).dead_time_ns * PS_PER_NS,
        }
    }

    fn mean_interval(&self) -> f64 {
        self.dead_ps + 1.0 / self.raw_per_ps
    }

    /// `∫₀ᵘ P(interval > v) dv`.
    fn survival_integral(&self, u: f64) -> f64 {
        if u <= self.dead_ps {
            u.max(0.0)
        } else {
            self.dead_ps + (1.0 - (-self.raw_per_ps * (u - self.dead_ps)).exp()) / self.raw_per_ps
        }
    }

    /// CDF of the time from an arbitrary instant to the next firing.
    fn recurrence_cdf(&self, u: f64) -> f64 {
        if self.raw_per_ps <= 0.0 {
            return 0.0;
        }
        self.survival_integral(u) / self.mean_interval()
    }

    /// `E[min(R, g)]` for the forward recurrence time `R`.
    fn mean_truncated_recurrence(&self, g: f64) -> f64 {
        if self.raw_per_ps <= 0.0 {
            return g;
        }
        let (t, r) = (self.dead_ps, self.raw_per_ps);
        let integral = if g <= t {
            g * g / 2.0
        } else {
            t * t / 2.0 + t * (g - t) + (g - t) / r - (1.0 - (-r * (g - t)).exp()) / (r * r)
        };
        g - integral / self.mean_interval()
    }

    /// Mean remaining dead time seen at an arbitrary instant.
    fn mean_residual_dead(&self) -> f64 {
        let busy = self.raw_per_ps * self.dead_ps;
        busy / (1.0 + busy) * self.dead_ps / 2.0
    }
}

/// Offset of a stop at `t2 - t1 = diff_ps` from the earliest convertible stop.
fn stop_offset_ps(scenario: &Scenario, diff_ps: f64) -> f64 {
    let el = &scenario.electronics;
    let offset = match el.start_station {
        Station::One => diff_ps,
        Station::Two => -diff_ps,
    };
    el.stop_delay_ns * PS_PER_NS + offset
}

/// Accepted starts per ps for a converter range `range_ps`. After a start
/// the converter waits for the first stop (or the end of the range), then
/// stays dead; the next accepted start is the first start firing after that.
fn accepted_start_rate(scenario: &Scenario, start: Stream, stop: Stream, range_ps: f64) -> f64 {
    if start.raw_per_ps <= 0.0 {
        return 0.0;
    }
    let dead = scenario.electronics.tphc_dead_time_us * PS_PER_US;
    let busy = stop.mean_truncated_recurrence(range_ps) + stop.recurrence_cdf(range_ps) * dead;
    let cycle = if busy > start.dead_ps {
        busy + 1.0 / start.raw_per_ps + start.mean_residual_dead()
    } else {
        start.mean_interval()
    };
    1.0 / cycle
}

/// Probability that the first stop after a start lands in the window
/// centred on `diff_ps`.
fn first_stop_in_window(scenario: &Scenario, stop: Stream, diff_ps: f64) -> f64 {
    let half = scenario.electronics.window_ps as f64 / 2.0;
    let a = stop_offset_ps(scenario, diff_ps) - half;
    stop.recurrence_cdf(a + 2.0 * half) - stop.recurrence_cdf(a)
}

fn streams(scenario: &Scenario, flux: f64) -> (Stream, Stream) {
    let s = scenario.electronics.start_station;
    (Stream::of(scenario, s, flux), Stream::of(scenario, s.other(), flux))
}

pub fn predict(scenario: &Scenario) -> Prediction {
    let src = &scenario.source;
    let el = &scenario.electronics;
    let flux = src.pair_rate_hz * src.coupling_efficiency;
    let rates = Station::BOTH.map(|s| detector_rates(scenario, s, flux));
    let singles = [rates[0].1, rates[1].1];
    // chance that a photon finds its detector live
    let live = rates.map(|(raw, reg)| if raw > 0.0 { reg / raw } else { 1.0 });

    let (start, stop) = streams(scenario, flux);
    let accepted = accepted_start_rate(scenario, start, stop, el.tphc_range_ns * PS_PER_NS);
    let m_start = singles[el.start_station.index()] / PS_PER_S;
    let tphc_live = if m_start > 0.0 { accepted / m_start } else { 1.0 };

    let imbalance = scenario.interferometers[0].arm_imbalance_ps as f64;
    let f_w = window_fraction(scenario, 0.0);
    let f_sat = window_fraction(scenario, imbalance) + window_fraction(scenario, -imbalance);

    let both = src.pair_rate_hz
        * src.split_probability
        * src.coupling_efficiency.powi(2)
        * survival(scenario, Station::One)
        * survival(scenario, Station::Two)
        * live[0]
        * live[1]
        * tphc_live
        // no unrelated stop may come first
        * (1.0 - stop.recurrence_cdf(stop_offset_ps(scenario, 0.0) - el.window_ps as f64 / 2.0));
    // SS or LL (1/2) times a phase-averaged port pair (1/4)
    let true_rate = both * f_w / 8.0;
    // each satellite 1/4 times 1/4
    let sat_rate = both * f_sat / 16.0;
    let shift = el.accidental_delay_ps() as f64;
    let acc_rate = accepted * PS_PER_S * first_stop_in_window(scenario, stop, shift);

    let v_eff = scenario.visibility.apparatus_visibility * envelope(scenario.path_mismatch_um, &scenario.spectral);
    let total = true_rate + sat_rate + acc_rate;
    Prediction {
        singles_hz: singles,
        window_fraction: f_w,
        satellite_fraction: f_sat,
        tphc_live_fraction: tphc_live,
        true_coincidence_rate_hz: true_rate,
        satellite_rate_hz: sat_rate,
        accidental_rate_hz: acc_rate,
        effective_visibility: v_eff,
        raw_visibility: if total > 0.0 { v_eff * true_rate / total } else { 0.0 },
    }
}

fn check_targets(t: &CalibrationTargets) -> Result<(), CalibrationError> {
    let bad = |field, reason: &str| {
        Err(CalibrationError::InvalidTarget {
            field,
            reason: reason.into(),
        })
    };
    if !t.singles_hz.iter().all(|r| r.is_finite() && *r > 0.0) {
        return bad("singles_hz", "must be > 0");
    }
    if !(t.accidentals_per_interval > 0.0 && t.accidentals_per_interval.is_finite()) {
        return bad("accidentals_per_interval", "must be > 0");
    }
    if !(t.interval_s > 0.0 && t.interval_s.is_finite()) {
        return bad("interval_s", "must be > 0");
    }
    if !(t.net_visibility > 0.0 && t.net_visibility <= 1.0) {
        return bad("net_visibility", "must lie in (0, 1]");
    }
    if !(t.raw_visibility > 0.0 && t.raw_visibility < t.net_visibility) {
        return bad("raw_visibility", "must lie in (0, net_visibility)");
    }
    Ok(())
}

/// Golden-section minimum of a unimodal function on `[lo, hi]`.
fn golden_min(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> f64 {
    let r = (5f64.sqrt() - 1.0) / 2.0;
    for _ in 0..200 {
        let a = hi - r * (hi - lo);
        let b = lo + r * (hi - lo);
        if f(a) < f(b) {
            hi = b;
        } else {
            lo = a;
        }
    }
    0.5 * (lo + hi)
}

/// Root of an increasing function on `[lo, hi]`.
fn bisect(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> f64 {
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if f(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

pub fn calibrate(scenario: &Scenario, targets: &CalibrationTargets) -> Result<Calibration, CalibrationError> {
    check_targets(targets)?;
    let el = &scenario.electronics;

    // 1. collected flux from the singles
    let mut bracket = [f64::INFINITY, 0.0f64];
    for s in Station::BOTH {
        let det = scenario.detector(s);
        let tau = det.dead_time_ns * PS_PER_NS / PS_PER_S;
        let target = targets.singles_hz[s.index()];
        if target * tau >= 1.0 {
            return Err(CalibrationError::Unreachable("singles_hz"));
        }
        let photons = target / (1.0 - target * tau) - det.dark_rate_hz;
        let per_flux = survival(scenario, s) / 2.0;
        if photons <= 0.0 || per_flux <= 0.0 {
            return Err(CalibrationError::Unreachable("singles_hz"));
        }
        let x = photons / per_flux;
        bracket = [bracket[0].min(x), bracket[1].max(x)];
    }
    let misfit = |flux: f64| {
        Station::BOTH
            .iter()
            .map(|&s| {
                let t = targets.singles_hz[s.index()];
                ((detector_rates(scenario, s, flux).1 - t) / t).powi(2)
            })
            .sum::<f64>()
    };
    let flux = if bracket[1] > bracket[0] {
        golden_min(misfit, bracket[0], bracket[1])
    } else {
        bracket[0]
    };
    // 2. converter range from the accidentals
    let (start, stop) = streams(scenario, flux);
    let shift = el.accidental_delay_ps() as f64;
    let per_start = first_stop_in_window(scenario, stop, shift) * PS_PER_S * targets.interval_s;
    // accidentals fall as the range grows; find where they cross the target
    let excess = |g: f64| targets.accidentals_per_interval - accepted_start_rate(scenario, start, stop, g) * per_start;
    // smallest range that still converts the shifted window
    let lo = el.stop_delay_ns * PS_PER_NS + shift.abs() + el.window_ps as f64;
    let hi = 1e6 * PS_PER_US;
    if excess(lo) > 0.0 || excess(hi) < 0.0 {
        return Err(CalibrationError::Unreachable("accidentals_per_interval"));
    }
    let range_ps = bisect(excess, lo, hi);

    // 3. split flux into pair rate and coupling from the visibility dilution
    let mut probe = scenario.clone();
    probe.source.coupling_efficiency = 1.0;
    probe.source.pair_rate_hz = flux;
    probe.electronics.tphc_range_ns = range_ps / PS_PER_NS;
    let p = predict(&probe);
    let kappa = p.satellite_rate_hz / p.true_coincidence_rate_hz;
    let accidentals = p.accidental_rate_hz * targets.interval_s;
    let v = targets.net_visibility;
    let diluted = targets.raw_visibility * (1.0 + kappa);
    let signal = true_coincidences_for_raw_visibility(v, diluted, accidentals)
        .map_err(|_| CalibrationError::Unreachable("raw_visibility"))?
        * targets.raw_visibility
        / diluted;
    // with c = 1 the prediction is flux·(...); the true rate scales as R·c² = flux·c
    let coupling = signal / (p.true_coincidence_rate_hz * targets.interval_s);
    if !(coupling > 0.0 && coupling <= 1.0) {
        return Err(CalibrationError::Unreachable("raw_visibility"));
    }
    let mut calibrated = probe;
    calibrated.source.coupling_efficiency = coupling;
    calibrated.source.pair_rate_hz = flux / coupling;
    Ok(Calibration {
        pair_rate_hz: flux / coupling,
        coupling_efficiency: coupling,
        tphc_range_ns: range_ps / PS_PER_NS,
        prediction: predict(&calibrated),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn window_fraction_without_dispersion_is_gaussian() {
        let mut s = Scenario::geneva1998();
        for f in &mut s.fibers {
            f.lumped_jitter_fwhm_ps = 0.0;
        }
        let chain = fwhm_to_sigma(s.electronics.chain_jitter_fwhm_ps);
        let det = fwhm_to_sigma(200.0);
        let sigma = (2.0 * chain * chain + 2.0 * det * det).sqrt();
        let expected = normal_cdf(200.0 / sigma) - normal_cdf(-200.0 / sigma);
        assert!((window_fraction(&s, 0.0) - expected).abs() < 1e-9);
    }

    #[test]
    fn recurrence_of_poisson_stream() {
        // zero dead time: forward recurrence is exponential
        let st = Stream {
            raw_per_ps: 1e-6,
            dead_ps: 0.0,
        };
        assert!((st.recurrence_cdf(1e6) - (1.0 - (-1.0f64).exp())).abs() < 1e-12);
        let g = 2e6;
        let expected = (1.0 - (-2.0f64).exp()) / 1e-6;
        assert!((st.mean_truncated_recurrence(g) - expected).abs() < 1e-6);
    }

    #[test]
    fn recurrence_with_dead_time() {
        let st = Stream {
            raw_per_ps: 2e-7,
            dead_ps: 1e6,
        };
        // density is flat at 1/E[I] below the dead time
        let d = st.recurrence_cdf(400.0) / 400.0;
        assert!((d - 1.0 / st.mean_interval()).abs() < 1e-18);
        assert!((st.recurrence_cdf(1e12) - 1.0).abs() < 1e-9);
        // E[min(R, ∞)] = E[I²]/(2E[I])
        let m = st.mean_interval();
        let second = 1e12 + 2e6 / 2e-7 + 2.0 / 4e-14;
        assert!((st.mean_truncated_recurrence(1e12) / (second / (2.0 * m)) - 1.0).abs() < 1e-6);
    }

    #[test]
    fn calibration_reproduces_targets() {
        let s = Scenario::geneva1998();
        let t = CalibrationTargets::geneva1998();
        let c = calibrate(&s, &t).unwrap();
        let p = c.prediction;
        for k in 0..2 {
            assert!((p.singles_hz[k] / t.singles_hz[k] - 1.0).abs() < 0.06, "{:?}", p.singles_hz);
        }
        assert!((p.accidental_rate_hz * 20.0 - 150.0).abs() < 1e-6 * 150.0);
        assert!((p.raw_visibility - 0.46).abs() < 1e-6, "{}", p.raw_visibility);
        assert!(c.coupling_efficiency > 0.0 && c.coupling_efficiency < 1.0);
    }
}
