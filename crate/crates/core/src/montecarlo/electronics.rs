//! Signal chain after the detectors and the start-stop time converter.
//!
//! The time-to-pulse-height converter (TPHC) accepts a start from one
//! station and the first stop from the other. The stop input sits behind a
//! fixed delay line so that stops up to `stop_delay` earlier than the start
//! can still be converted. A conversion that sees no stop within the range
//! is reset when the range elapses; a completed conversion is followed by
//! the converter dead time. Starts arriving while busy are lost.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{ensure, InvalidParameter, SimulationError, Station, TimeTag};
use crate::units::{fwhm_to_sigma, PS_PER_NS, PS_PER_US};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ElectronicsParams {
    /// Per-channel jitter of the optical relay and timing electronics.
    pub chain_jitter_fwhm_ps: f64,
    /// Full width of the coincidence window.
    pub window_ps: i64,
    pub tphc_dead_time_us: f64,
    /// How long a started conversion waits for a stop.
    pub tphc_range_ns: f64,
    /// Delay line in front of the stop input.
    pub stop_delay_ns: f64,
    pub start_station: Station,
    /// Extra delay used to move the true-coincidence peak out of the window.
    pub accidental_delay_ns: f64,
}

impl Default for ElectronicsParams {
    fn default() -> Self {
        ElectronicsParams {
            // two equal channels whose difference has 450 ps FWHM
            chain_jitter_fwhm_ps: 450.0 / std::f64::consts::SQRT_2,
            window_ps: 400,
            tphc_dead_time_us: 4.0,
            tphc_range_ns: 100.0,
            stop_delay_ns: 10.0,
            start_station: Station::One,
            accidental_delay_ns: 5.0,
        }
    }
}

impl ElectronicsParams {
    pub fn validate(&self) -> Result<(), InvalidParameter> {
        ensure(self.chain_jitter_fwhm_ps.is_finite() && self.chain_jitter_fwhm_ps >= 0.0, "chain_jitter_fwhm_ps", || {
            format!("must be >= 0, got {}", self.chain_jitter_fwhm_ps)
        })?;
        ensure(self.window_ps > 0, "window_ps", || format!("must be > 0, got {}", self.window_ps))?;
        ensure(self.tphc_dead_time_us.is_finite() && self.tphc_dead_time_us >= 0.0, "tphc_dead_time_us", || {
            format!("must be >= 0, got {}", self.tphc_dead_time_us)
        })?;
        ensure(self.tphc_range_ns.is_finite() && self.tphc_range_ns > 0.0, "tphc_range_ns", || {
            format!("must be > 0, got {}", self.tphc_range_ns)
        })?;
        ensure(self.stop_delay_ns.is_finite() && self.stop_delay_ns >= 0.0, "stop_delay_ns", || {
            format!("must be >= 0, got {}", self.stop_delay_ns)
        })?;
        ensure(self.stop_delay_ns < self.tphc_range_ns, "stop_delay_ns", || {
            format!("must be below tphc_range_ns ({}), got {}", self.tphc_range_ns, self.stop_delay_ns)
        })?;
        ensure(self.accidental_delay_ns.is_finite(), "accidental_delay_ns", || "must be finite".into())?;
        let (lo, hi) = self.convertible_differences_ps();
        let half = self.window_ps as f64 / 2.0;
        ensure(lo <= -half && half <= hi, "window_ps", || {
            "window must lie inside the converter range".into()
        })?;
        let shifted = self.accidental_delay_ns * PS_PER_NS;
        ensure(lo <= shifted - half && shifted + half <= hi, "accidental_delay_ns", || {
            "shifted window must lie inside the converter range".into()
        })
    }

    /// Interval of `t2 - t1` differences the converter can register.
    pub fn convertible_differences_ps(&self) -> (f64, f64) {
        let early = self.stop_delay_ns * PS_PER_NS;
        let late = (self.tphc_range_ns - self.stop_delay_ns) * PS_PER_NS;
        match self.start_station {
            Station::One => (-early, late),
            Station::Two => (-late, early),
        }
    }

    /// FWHM of the difference of two independent chain jitters.
    pub fn difference_jitter_fwhm_ps(&self) -> f64 {
        self.chain_jitter_fwhm_ps * std::f64::consts::SQRT_2
    }

    pub fn accidental_delay_ps(&self) -> i64 {
        (self.accidental_delay_ns * PS_PER_NS).round() as i64
    }

    pub fn tphc(&self) -> Tphc {
        Tphc {
            start_station: self.start_station,
            dead_ps: (self.tphc_dead_time_us * PS_PER_US).round() as i64,
            range_ps: (self.tphc_range_ns * PS_PER_NS).round() as i64,
            stop_delay_ps: (self.stop_delay_ns * PS_PER_NS).round() as i64,
        }
    }

    /// Whether a `t2 - t1` difference falls in a window of the configured
    /// width centred on `center_ps` (edges included).
    pub fn in_window(&self, difference_ps: i64, center_ps: i64) -> bool {
        2 * (difference_ps - center_ps).abs() <= self.window_ps
    }
}

/// Adds per-tag chain jitter and restores time order.
pub fn relay<R: Rng + ?Sized>(tags: &mut [TimeTag], chain_jitter_fwhm_ps: f64, rng: &mut R) {
    let sigma = fwhm_to_sigma(chain_jitter_fwhm_ps);
    if sigma <= 0.0 {
        return;
    }
    for tag in tags.iter_mut() {
        let z: f64 = StandardNormal.sample(rng);
        tag.time_ps += (z * sigma).round() as i64;
    }
    tags.sort_by_key(|t| t.time_ps);
}

/// Start-stop converter state machine.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Tphc {
    pub start_station: Station,
    pub dead_ps: i64,
    pub range_ps: i64,
    pub stop_delay_ps: i64,
}

impl Tphc {
    /// Runs the converter over two sorted tag streams and returns the
    /// converted differences, always expressed as `t2 - t1`.
    pub fn convert(&self, tags1: &[TimeTag], tags2: &[TimeTag]) -> Vec<i64> {
        let (starts, stops) = match self.start_station {
            Station::One => (tags1, tags2),
            Station::Two => (tags2, tags1),
        };
        let sign = match self.start_station {
            Station::One => 1,
            Station::Two => -1,
        };
        let mut out = Vec::new();
        let mut j = 0usize;
        let mut live_from = i64::MIN;
        for start in starts {
            let s = start.time_ps;
            if s < live_from {
                continue;
            }
            // stop times as seen by the converter are shifted by the delay line
            let earliest = s - self.stop_delay_ps;
            while j < stops.len() && stops[j].time_ps < earliest {
                j += 1;
            }
            match stops.get(j) {
                Some(stop) if stop.time_ps - earliest <= self.range_ps => {
                    out.push(sign * (stop.time_ps - s));
                    live_from = stop.time_ps + self.stop_delay_ps + self.dead_ps;
                }
                _ => {
                    live_from = s + self.range_ps;
                }
            }
        }
        out
    }
}

/// Histogram of `t2 - t1` with bins centred on multiples of the bin width.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Histogram {
    pub bin_width_ps: i64,
    /// Number of bins either side of the zero bin.
    pub half_bins: i64,
    pub counts: Vec<u64>,
}

impl Histogram {
    pub fn new(bin_width_ps: i64, span_ps: i64) -> Result<Self, SimulationError> {
        if bin_width_ps <= 0 {
            return Err(SimulationError::InvalidBinWidth(bin_width_ps));
        }
        let half_bins = span_ps.max(0) / bin_width_ps;
        Ok(Histogram {
            bin_width_ps,
            half_bins,
            counts: vec![0; (2 * half_bins + 1) as usize],
        })
    }

    pub fn from_differences(diffs: &[i64], bin_width_ps: i64, span_ps: i64) -> Result<Self, SimulationError> {
        let mut h = Histogram::new(bin_width_ps, span_ps)?;
        for &d in diffs {
            h.add(d);
        }
        Ok(h)
    }

    pub fn add(&mut self, difference_ps: i64) {
        let k = div_round(difference_ps, self.bin_width_ps);
        if k.abs() <= self.half_bins {
            self.counts[(k + self.half_bins) as usize] += 1;
        }
    }

    pub fn bin_center_ps(&self, index: usize) -> i64 {
        (index as i64 - self.half_bins) * self.bin_width_ps
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    /// Counts in bins whose centres lie in `[lo_ps, hi_ps]`.
    pub fn area(&self, lo_ps: i64, hi_ps: i64) -> u64 {
        self.counts
            .iter()
            .enumerate()
            .filter(|(i, _)| {
                let c = self.bin_center_ps(*i);
                c >= lo_ps && c <= hi_ps
            })
            .map(|(_, c)| *c)
            .sum()
    }

    pub fn iter(&self) -> impl Iterator<Item = (i64, u64)> + '_ {
        self.counts.iter().enumerate().map(|(i, &c)| (self.bin_center_ps(i), c))
    }
}

/// Rounds half away from zero.
fn div_round(a: i64, b: i64) -> i64 {
    let q = a / b;
    let r = a % b;
    if 2 * r.abs() >= b {
        q + a.signum()
    } else {
        q
    }
}

/// Histogram of converted `t2 - t1` differences within `±span_ps`.
pub fn coincidence_histogram(
    tags1: &[TimeTag],
    tags2: &[TimeTag],
    electronics: &ElectronicsParams,
    bin_width_ps: i64,
    span_ps: i64,
) -> Result<Histogram, SimulationError> {
    let diffs = electronics.tphc().convert(tags1, tags2);
    Histogram::from_differences(&diffs, bin_width_ps, span_ps)
}

/// Number of converted differences inside the window around `window_center_ps`.
pub fn windowed_coincidences(
    tags1: &[TimeTag],
    tags2: &[TimeTag],
    electronics: &ElectronicsParams,
    window_center_ps: i64,
) -> u64 {
    electronics
        .tphc()
        .convert(tags1, tags2)
        .into_iter()
        .filter(|&d| electronics.in_window(d, window_center_ps))
        .count() as u64
}

/// `R1·R2·τ·T`, the accidental count with no converter dead time.
pub fn accidental_bound(rate1_hz: f64, rate2_hz: f64, window_ps: i64, duration_s: f64) -> f64 {
    rate1_hz * rate2_hz * window_ps as f64 * 1e-12 * duration_s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::montecarlo::Origin;

    fn tags(station: Station, times: &[i64]) -> Vec<TimeTag> {
        times
            .iter()
            .map(|&t| TimeTag {
                station,
                time_ps: t,
                origin: Origin::Photon,
            })
            .collect()
    }

    fn fast() -> ElectronicsParams {
        ElectronicsParams {
            tphc_dead_time_us: 1.0,
            tphc_range_ns: 100.0,
            stop_delay_ns: 10.0,
            ..ElectronicsParams::default()
        }
    }

    #[test]
    fn empty_streams_give_empty_histogram() {
        let h = coincidence_histogram(&[], &[], &fast(), 50, 3000).unwrap();
        assert_eq!(h.total(), 0);
        assert_eq!(h.counts.len(), 121);
    }

    #[test]
    fn rejects_bad_bin_width() {
        assert_eq!(
            coincidence_histogram(&[], &[], &fast(), 0, 3000),
            Err(SimulationError::InvalidBinWidth(0))
        );
    }

    #[test]
    fn disjoint_streams_give_nothing() {
        let a = tags(Station::One, &[0, 10_000_000]);
        let b = tags(Station::Two, &[5_000_000, 15_000_000]);
        assert_eq!(windowed_coincidences(&a, &b, &fast(), 0), 0);
    }

    #[test]
    fn start_stop_semantics() {
        let e = fast();
        // start at 0, stops at -5 ns (inside delay line), +1 ns
        let a = tags(Station::One, &[100_000, 200_000_000]);
        let b = tags(Station::Two, &[95_000, 101_000, 200_000_300]);
        let d = e.tphc().convert(&a, &b);
        // first stop is the earlier one
        assert_eq!(d, vec![-5_000, 300]);
    }

    #[test]
    fn converter_dead_time_drops_starts() {
        let e = fast();
        // second start lands inside the 1 us dead time after the first stop
        let a = tags(Station::One, &[0, 500_000, 3_000_000]);
        let b = tags(Station::Two, &[100, 500_100, 3_000_100]);
        let d = e.tphc().convert(&a, &b);
        assert_eq!(d, vec![100, 100]);
    }

    #[test]
    fn unanswered_start_blocks_for_range() {
        let e = fast();
        // start at 0 waits until 90 ns (range minus stop delay) in real time
        let a = tags(Station::One, &[0, 50_000, 200_000]);
        let b = tags(Station::Two, &[200_500]);
        let d = e.tphc().convert(&a, &b);
        assert_eq!(d, vec![500]);
    }

    #[test]
    fn station_two_start_reports_same_sign() {
        let mut e = fast();
        let a = tags(Station::One, &[1_000]);
        let b = tags(Station::Two, &[1_300]);
        assert_eq!(e.tphc().convert(&a, &b), vec![300]);
        e.start_station = Station::Two;
        assert_eq!(e.tphc().convert(&a, &b), vec![300]);
    }

    #[test]
    fn window_edges_inclusive() {
        let e = fast();
        assert!(e.in_window(200, 0));
        assert!(e.in_window(-200, 0));
        assert!(!e.in_window(201, 0));
        assert!(e.in_window(5_100, 5_000));
    }

    #[test]
    fn histogram_bins_centred() {
        let h = Histogram::from_differences(&[-1000, -1024, 0, 24, 26, 1000, 5000], 50, 3000).unwrap();
        assert_eq!(h.total(), 6);
        let at = |c: i64| h.iter().find(|(x, _)| *x == c).unwrap().1;
        assert_eq!(at(-1000), 2);
        assert_eq!(at(0), 2);
        assert_eq!(at(50), 1);
        assert_eq!(at(1000), 1);
    }

    #[test]
    fn bound_for_quoted_singles() {
        let b = accidental_bound(164e3, 167e3, 400, 20.0);
        assert!((b - 219.1).abs() < 0.1);
    }

    #[test]
    fn validation_rules() {
        assert!(ElectronicsParams::default().validate().is_ok());
        let e = ElectronicsParams {
            window_ps: 0,
            ..ElectronicsParams::default()
        };
        assert_eq!(e.validate().unwrap_err().field, "window_ps");
        let e = ElectronicsParams {
            accidental_delay_ns: 500.0,
            ..ElectronicsParams::default()
        };
        assert_eq!(e.validate().unwrap_err().field, "accidental_delay_ns");
    }
}
