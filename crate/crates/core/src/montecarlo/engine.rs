//! Scan-point driver.
//!
//! [`simulate_point`] does not generate every crystal pair. Each photon
//! independently survives collection, fiber loss and detector efficiency,
//! so the pairs that leave at least one photon at a detector form a
//! thinned Poisson process. The engine emits that process directly and
//! draws which photons survive conditionally. [`simulate_point_reference`]
//! follows every pair through every stage; the two agree in distribution
//! and the test suite checks it.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::detector::{detect, register};
use super::electronics::{relay, Histogram};
use super::fiber::{propagate, PhotonInFlight};
use super::interferometer::{sample_single, sample_with_distribution, PathPort};
use super::source::{emit_pairs, emit_pairs_at_rate, route_at_coupler, PairEvent, Routing};
use super::{SimulationError, Station, TimeTag};
use crate::model::{joint_outcome_distribution, OutcomeLabel, PhaseSetting};
use crate::rng::{derive_seed, stream};
use crate::scenario::Scenario;
use crate::units::fwhm_to_sigma;

/// Longest stretch simulated in one piece by [`measure_accidentals`].
pub const MAX_CHUNK_S: f64 = 20.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScanOptions {
    pub histogram_bin_ps: i64,
    /// Histogram covers `±span`.
    pub histogram_span_ps: i64,
    /// Worker threads; `None` uses the global pool.
    pub workers: Option<usize>,
}

impl Default for ScanOptions {
    fn default() -> Self {
        ScanOptions {
            histogram_bin_ps: 50,
            histogram_span_ps: 3000,
            workers: None,
        }
    }
}

/// Counts for one scan point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CountRecord {
    pub setting: PhaseSetting,
    pub duration_s: f64,
    pub singles1: u64,
    pub singles2: u64,
    pub windowed_coincidences: u64,
    /// Counts in the window shifted by the accidental delay.
    pub offwindow_coincidences: u64,
    pub histogram: Histogram,
}

impl CountRecord {
    pub fn singles(&self, s: Station) -> u64 {
        match s {
            Station::One => self.singles1,
            Station::Two => self.singles2,
        }
    }
}

/// Raw output of one simulated point.
#[derive(Debug, Clone, PartialEq)]
pub struct PointSimulation {
    pub tags: [Vec<TimeTag>; 2],
    /// Converted `t2 - t1` differences, in conversion order.
    pub differences: Vec<i64>,
}

impl PointSimulation {
    pub fn record(
        &self,
        scenario: &Scenario,
        setting: PhaseSetting,
        duration_s: f64,
        options: &ScanOptions,
    ) -> Result<CountRecord, SimulationError> {
        let el = &scenario.electronics;
        let shift = el.accidental_delay_ps();
        Ok(CountRecord {
            setting,
            duration_s,
            singles1: self.tags[0].len() as u64,
            singles2: self.tags[1].len() as u64,
            windowed_coincidences: self.differences.iter().filter(|&&d| el.in_window(d, 0)).count() as u64,
            offwindow_coincidences: self.differences.iter().filter(|&&d| el.in_window(d, shift)).count() as u64,
            histogram: Histogram::from_differences(&self.differences, options.histogram_bin_ps, options.histogram_span_ps)?,
        })
    }
}

fn check_duration(duration_s: f64) -> Result<(), SimulationError> {
    if duration_s.is_finite() && duration_s >= 0.0 {
        Ok(())
    } else {
        Err(SimulationError::InvalidDuration(duration_s))
    }
}

fn check_scenario(scenario: &Scenario) -> Result<(), SimulationError> {
    scenario.validate().map_err(|e| SimulationError::Scenario(e.to_string()))
}

/// The two photons of a pair as they enter the fibers. Photon 1 is on the
/// blue side of degeneracy for a positive detuning.
fn pair_photons(pair: &PairEvent, degenerate_nm: f64, sigma_nm: f64) -> [PhotonInFlight; 2] {
    let z = if sigma_nm > 0.0 { pair.detuning_nm / sigma_nm } else { 0.0 };
    [
        PhotonInFlight {
            emission_ps: pair.emission_ps,
            wavelength_nm: degenerate_nm + pair.detuning_nm,
            standardized_detuning: z,
        },
        PhotonInFlight {
            emission_ps: pair.emission_ps,
            wavelength_nm: degenerate_nm - pair.detuning_nm,
            standardized_detuning: -z,
        },
    ]
}

/// Which photons of a pair reach a detector-side port and fire.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Survivors {
    First,
    Second,
    Both,
}

#[derive(Debug, Clone, Copy)]
struct Class {
    routing: Routing,
    alive: Survivors,
    weight: f64,
}

/// All routing/survival combinations with at least one photon surviving,
/// given per-station survival probabilities.
fn survival_classes(split: f64, a: [f64; 2]) -> Vec<Class> {
    let mut out = Vec::with_capacity(9);
    let mut push = |routing, a1: f64, a2: f64, w: f64| {
        for (alive, p) in [
            (Survivors::First, a1 * (1.0 - a2)),
            (Survivors::Second, (1.0 - a1) * a2),
            (Survivors::Both, a1 * a2),
        ] {
            let weight = w * p;
            if weight > 0.0 {
                out.push(Class { routing, alive, weight });
            }
        }
    };
    push(Routing::Split, a[0], a[1], split);
    push(Routing::BothTo(Station::One), a[0], a[0], (1.0 - split) / 2.0);
    push(Routing::BothTo(Station::Two), a[1], a[1], (1.0 - split) / 2.0);
    out
}

fn pick_class<'a, R: Rng + ?Sized>(classes: &'a [Class], total: f64, rng: &mut R) -> &'a Class {
    let u = rng.random::<f64>() * total;
    let mut acc = 0.0;
    for c in classes {
        acc += c.weight;
        if u < acc {
            return c;
        }
    }
    classes.last().expect("non-empty class table")
}

/// Arrival of a photon at its station's detector, delay matched, if it
/// leaves through the detector port.
fn arrival(scenario: &Scenario, station: Station, photon: &PhotonInFlight, pp: PathPort) -> Option<i64> {
    let interf = scenario.interferometer(station);
    if pp.port != interf.detector_port {
        return None;
    }
    let offset = scenario.fiber(station).dispersion_offset_ps(photon).round() as i64;
    Some(photon.emission_ps + offset + pp.delay_ps(interf.arm_imbalance_ps))
}

/// Detector, relay and converter stages shared by both pipelines.
fn finish_point(
    scenario: &Scenario,
    mut arrivals: [Vec<i64>; 2],
    duration_s: f64,
    seed: u64,
    index: u64,
    with_efficiency: bool,
) -> PointSimulation {
    let mut tags: [Vec<TimeTag>; 2] = [Vec::new(), Vec::new()];
    for s in Station::BOTH {
        let k = s.index();
        arrivals[k].sort_unstable();
        let det = scenario.detector(s);
        let mut rng = stream(seed, ["detector1", "detector2"][k], index);
        let mut t = if with_efficiency {
            detect(det, s, &arrivals[k], duration_s, &mut rng)
        } else {
            register(det, s, &arrivals[k], duration_s, &mut rng)
        };
        let mut rng = stream(seed, ["chain1", "chain2"][k], index);
        relay(&mut t, scenario.electronics.chain_jitter_fwhm_ps, &mut rng);
        tags[k] = t;
    }
    let differences = scenario.electronics.tphc().convert(&tags[0], &tags[1]);
    PointSimulation { tags, differences }
}

/// Simulates one scan point. Streams are keyed by `(seed, point_index)`,
/// so the result does not depend on which other points are run.
pub fn simulate_point(
    scenario: &Scenario,
    setting: &PhaseSetting,
    duration_s: f64,
    seed: u64,
    point_index: u64,
) -> Result<PointSimulation, SimulationError> {
    check_duration(duration_s)?;
    check_scenario(scenario)?;
    let src = &scenario.source;
    let a = Station::BOTH.map(|s| {
        src.coupling_efficiency * scenario.fiber(s).transmittance() * scenario.detector(s).efficiency
    });
    let classes = survival_classes(src.split_probability, a);
    let q: f64 = classes.iter().map(|c| c.weight).sum();
    let mut arrivals: [Vec<i64>; 2] = [Vec::new(), Vec::new()];
    if q > 0.0 {
        let mut pair_rng = stream(seed, "pairs", point_index);
        let pairs = emit_pairs_at_rate(src.pair_rate_hz * q, &scenario.spectral, duration_s, &mut pair_rng);
        let table = joint_outcome_distribution(setting, &scenario.spectral, &scenario.visibility).0;
        let degenerate = src.degenerate_wavelength_nm();
        let sigma = fwhm_to_sigma(scenario.spectral.bandwidth_fwhm_nm);
        let mut rng = stream(seed, "optics", point_index);
        for pair in &pairs {
            let photons = pair_photons(pair, degenerate, sigma);
            let class = pick_class(&classes, q, &mut rng);
            let keep = |n: usize| match class.alive {
                Survivors::First => n == 0,
                Survivors::Second => n == 1,
                Survivors::Both => true,
            };
            match class.routing {
                Routing::Split => {
                    let (pp1, pp2) = sample_with_distribution(&table, &mut rng);
                    for (n, (s, pp)) in [(Station::One, pp1), (Station::Two, pp2)].into_iter().enumerate() {
                        if keep(n) {
                            if let Some(t) = arrival(scenario, s, &photons[n], pp) {
                                arrivals[s.index()].push(t);
                            }
                        }
                    }
                }
                Routing::BothTo(s) => {
                    for (n, photon) in photons.iter().enumerate() {
                        if keep(n) {
                            let pp = sample_single(&mut rng);
                            if let Some(t) = arrival(scenario, s, photon, pp) {
                                arrivals[s.index()].push(t);
                            }
                        }
                    }
                }
            }
        }
    }
    Ok(finish_point(scenario, arrivals, duration_s, seed, point_index, false))
}

/// Stage-by-stage pipeline: every crystal pair is emitted, routed,
/// collected, propagated and detected with explicit Bernoulli draws.
/// Slow; kept as the reference the fast engine is tested against.
pub fn simulate_point_reference(
    scenario: &Scenario,
    setting: &PhaseSetting,
    duration_s: f64,
    seed: u64,
    point_index: u64,
) -> Result<PointSimulation, SimulationError> {
    check_duration(duration_s)?;
    check_scenario(scenario)?;
    let src = &scenario.source;
    let mut pair_rng = stream(seed, "reference-pairs", point_index);
    let pairs = emit_pairs(src, &scenario.spectral, duration_s, &mut pair_rng);
    let table = joint_outcome_distribution(setting, &scenario.spectral, &scenario.visibility).0;
    let degenerate = src.degenerate_wavelength_nm();
    let sigma = fwhm_to_sigma(scenario.spectral.bandwidth_fwhm_nm);
    let mut rng = stream(seed, "reference-optics", point_index);
    let mut arrivals: [Vec<i64>; 2] = [Vec::new(), Vec::new()];
    for pair in &pairs {
        let photons = pair_photons(pair, degenerate, sigma);
        let routing = route_at_coupler(src.split_probability, &mut rng);
        let stations = match routing {
            Routing::Split => [Station::One, Station::Two],
            Routing::BothTo(s) => [s, s],
        };
        let mut alive = [false; 2];
        let mut fiber_out = [0i64; 2];
        for n in 0..2 {
            if rng.random::<f64>() >= src.coupling_efficiency {
                continue;
            }
            let fiber = scenario.fiber(stations[n]);
            if let Some(t) = propagate(fiber, &photons[n], &mut rng) {
                alive[n] = true;
                fiber_out[n] = t - fiber.nominal_delay_ps().round() as i64;
            }
        }
        let ports = match routing {
            Routing::Split if alive[0] && alive[1] => {
                let (a, b) = sample_with_distribution(&table, &mut rng);
                [a, b]
            }
            _ => [sample_single(&mut rng), sample_single(&mut rng)],
        };
        for n in 0..2 {
            if !alive[n] {
                continue;
            }
            let s = stations[n];
            let interf = scenario.interferometer(s);
            if ports[n].port == interf.detector_port {
                arrivals[s.index()].push(fiber_out[n] + ports[n].delay_ps(interf.arm_imbalance_ps));
            }
        }
    }
    Ok(finish_point(scenario, arrivals, duration_s, seed, point_index, true))
}

fn in_pool<T: Send>(workers: Option<usize>, job: impl FnOnce() -> T + Send) -> Result<T, SimulationError> {
    match workers {
        None => Ok(job()),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n.max(1))
                .build()
                .map_err(|e| SimulationError::Scenario(format!("thread pool: {e}")))?;
            Ok(pool.install(job))
        }
    }
}

/// One record per setting; point `k` uses streams keyed by `(seed, k)`.
pub fn run_scan(
    scenario: &Scenario,
    settings: &[PhaseSetting],
    duration_s: f64,
    seed: u64,
    options: &ScanOptions,
) -> Result<Vec<CountRecord>, SimulationError> {
    check_duration(duration_s)?;
    check_scenario(scenario)?;
    Histogram::new(options.histogram_bin_ps, options.histogram_span_ps)?;
    in_pool(options.workers, || {
        settings
            .par_iter()
            .enumerate()
            .map(|(k, setting)| {
                simulate_point(scenario, setting, duration_s, seed, k as u64)?
                    .record(scenario, *setting, duration_s, options)
            })
            .collect::<Result<Vec<_>, _>>()
    })?
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccidentalMeasurement {
    /// Counts in the shifted window.
    pub count: u64,
    pub duration_s: f64,
    pub singles: [u64; 2],
    pub window_ps: i64,
    pub window_center_ps: i64,
}

impl AccidentalMeasurement {
    pub fn rate_hz(&self) -> f64 {
        if self.duration_s > 0.0 {
            self.count as f64 / self.duration_s
        } else {
            0.0
        }
    }

    /// Mean count per `interval_s`, with its Poisson standard error.
    pub fn per_interval(&self, interval_s: f64) -> (f64, f64) {
        if self.duration_s <= 0.0 {
            return (0.0, 0.0);
        }
        let scale = interval_s / self.duration_s;
        (self.count as f64 * scale, (self.count as f64).sqrt() * scale)
    }

    pub fn singles_rate_hz(&self, s: Station) -> f64 {
        if self.duration_s > 0.0 {
            self.singles[s.index()] as f64 / self.duration_s
        } else {
            0.0
        }
    }
}

/// Counts in the window displaced by the accidental delay, at the
/// scenario's base setting. Long runs are split into equal chunks of at
/// most [`MAX_CHUNK_S`].
pub fn measure_accidentals(
    scenario: &Scenario,
    duration_s: f64,
    seed: u64,
    workers: Option<usize>,
) -> Result<AccidentalMeasurement, SimulationError> {
    check_duration(duration_s)?;
    check_scenario(scenario)?;
    let chunks = ((duration_s / MAX_CHUNK_S).ceil() as u64).max(1);
    let chunk_s = duration_s / chunks as f64;
    let family = derive_seed(seed, "accidentals", 0);
    let setting = scenario.base_setting();
    let el = &scenario.electronics;
    let center = el.accidental_delay_ps();
    let parts = in_pool(workers, || {
        (0..chunks)
            .into_par_iter()
            .map(|k| {
                let sim = simulate_point(scenario, &setting, chunk_s, family, k)?;
                let count = sim.differences.iter().filter(|&&d| el.in_window(d, center)).count() as u64;
                Ok((count, [sim.tags[0].len() as u64, sim.tags[1].len() as u64]))
            })
            .collect::<Result<Vec<_>, SimulationError>>()
    })??;
    let mut out = AccidentalMeasurement {
        count: 0,
        duration_s,
        singles: [0, 0],
        window_ps: el.window_ps,
        window_center_ps: center,
    };
    for (c, s) in parts {
        out.count += c;
        out.singles[0] += s[0];
        out.singles[1] += s[1];
    }
    Ok(out)
}

/// Pair-level port statistics: split pairs whose photons both reach a
/// detector are followed with their labels, and those whose arrival
/// difference (including detector and chain jitter) falls in the central
/// window are tallied by output-port pair, indexed like
/// [`OutcomeLabel::ALL`]. Both ports of each analyzer are observed; dark
/// counts and dead time play no part. Stops after `events` tallies.
pub fn tally_port_pairs(
    scenario: &Scenario,
    setting: &PhaseSetting,
    events: u64,
    seed: u64,
    point_index: u64,
) -> Result<[u64; 4], SimulationError> {
    check_scenario(scenario)?;
    let table = joint_outcome_distribution(setting, &scenario.spectral, &scenario.visibility).0;
    let src = &scenario.source;
    let degenerate = src.degenerate_wavelength_nm();
    let sigma = fwhm_to_sigma(scenario.spectral.bandwidth_fwhm_nm);
    let jitter = Station::BOTH.map(|s| {
        let d = fwhm_to_sigma(scenario.detector(s).jitter_fwhm_ps);
        let c = fwhm_to_sigma(scenario.electronics.chain_jitter_fwhm_ps);
        (d * d + c * c).sqrt()
    });
    let a = Station::BOTH.map(|s| src.coupling_efficiency * scenario.fiber(s).transmittance() * scenario.detector(s).efficiency);
    if events > 0 && a[0] * a[1] * src.split_probability <= 0.0 {
        return Err(SimulationError::Scenario("no pair can reach both detectors".into()));
    }
    let mut rng = stream(seed, "port-tally", point_index);
    let mut counts = [0u64; 4];
    let mut tallied = 0;
    while tallied < events {
        let pair = PairEvent {
            emission_ps: 0,
            detuning_nm: sigma * rand_distr::Distribution::<f64>::sample(&rand_distr::StandardNormal, &mut rng),
        };
        if rng.random::<f64>() >= src.split_probability
            || rng.random::<f64>() >= a[0]
            || rng.random::<f64>() >= a[1]
        {
            continue;
        }
        let photons = pair_photons(&pair, degenerate, sigma);
        let (pp1, pp2) = sample_with_distribution(&table, &mut rng);
        let mut t = [0.0; 2];
        for (n, (s, pp)) in [(Station::One, pp1), (Station::Two, pp2)].into_iter().enumerate() {
            let interf = scenario.interferometer(s);
            let z: f64 = rand_distr::Distribution::sample(&rand_distr::StandardNormal, &mut rng);
            t[n] = scenario.fiber(s).dispersion_offset_ps(&photons[n])
                + pp.delay_ps(interf.arm_imbalance_ps) as f64
                + z * jitter[n];
        }
        let d = (t[1] - t[0]).round() as i64;
        if scenario.electronics.in_window(d, 0) {
            let label = OutcomeLabel::new(pp1.port, pp2.port);
            counts[label.index()] += 1;
            tallied += 1;
        }
    }
    Ok(counts)
}

/// Expected number of pairs per second (before thinning) that leave at
/// least one photon at a detector.
pub fn productive_pair_rate_hz(scenario: &Scenario) -> f64 {
    let src = &scenario.source;
    let a = Station::BOTH.map(|s| src.coupling_efficiency * scenario.fiber(s).transmittance() * scenario.detector(s).efficiency);
    src.pair_rate_hz * survival_classes(src.split_probability, a).iter().map(|c| c.weight).sum::<f64>()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn class_weights_sum_to_survival_probability() {
        let a = [0.3, 0.1];
        let split = 0.5;
        let q: f64 = survival_classes(split, a).iter().map(|c| c.weight).sum();
        let none = split * (1.0 - a[0]) * (1.0 - a[1])
            + 0.25 * (1.0 - a[0]).powi(2)
            + 0.25 * (1.0 - a[1]).powi(2);
        assert!((q - (1.0 - none)).abs() < 1e-15);
    }

    #[test]
    fn empty_scan_is_empty() {
        let s = Scenario::geneva1998();
        let r = run_scan(&s, &[], 1.0, 1, &ScanOptions::default()).unwrap();
        assert!(r.is_empty());
    }

    #[test]
    fn negative_duration_rejected() {
        let s = Scenario::geneva1998();
        assert!(matches!(
            simulate_point(&s, &s.base_setting(), -1.0, 1, 0),
            Err(SimulationError::InvalidDuration(_))
        ));
    }
}
