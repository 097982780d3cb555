//! Pair source and 3-dB coupler.

use rand::Rng;
use rand_distr::{Distribution, Exp1, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{ensure, InvalidParameter, Station};
use crate::model::SpectralParams;
use crate::units::{fwhm_to_sigma, PS_PER_S};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SourceParams {
    /// Pairs generated per second in the crystal.
    pub pair_rate_hz: f64,
    pub pump_wavelength_nm: f64,
    /// Probability that the coupler sends the two photons to different fibers.
    pub split_probability: f64,
    /// Per-photon probability of being collected into the source fiber.
    pub coupling_efficiency: f64,
}

impl Default for SourceParams {
    fn default() -> Self {
        SourceParams {
            pair_rate_hz: 1e6,
            pump_wavelength_nm: 655.7,
            split_probability: 0.5,
            coupling_efficiency: 1.0,
        }
    }
}

impl SourceParams {
    pub fn validate(&self) -> Result<(), InvalidParameter> {
        ensure(self.pair_rate_hz.is_finite() && self.pair_rate_hz >= 0.0, "pair_rate_hz", || {
            format!("must be finite and >= 0, got {}", self.pair_rate_hz)
        })?;
        ensure(self.pump_wavelength_nm.is_finite() && self.pump_wavelength_nm > 0.0, "pump_wavelength_nm", || {
            format!("must be > 0, got {}", self.pump_wavelength_nm)
        })?;
        ensure((0.0..=1.0).contains(&self.split_probability), "split_probability", || {
            format!("must lie in [0, 1], got {}", self.split_probability)
        })?;
        ensure((0.0..=1.0).contains(&self.coupling_efficiency), "coupling_efficiency", || {
            format!("must lie in [0, 1], got {}", self.coupling_efficiency)
        })
    }

    /// Degenerate signal/idler wavelength, twice the pump wavelength.
    pub fn degenerate_wavelength_nm(&self) -> f64 {
        2.0 * self.pump_wavelength_nm
    }
}

/// One down-converted pair. Photon 1 sits at `λ0 + detuning`, photon 2 at
/// `λ0 - detuning`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairEvent {
    pub emission_ps: i64,
    pub detuning_nm: f64,
}

/// Poisson stream of pairs over `[0, duration_s)` at `rate_hz`, with a
/// Gaussian detuning whose FWHM is the single-photon bandwidth.
pub fn emit_pairs_at_rate<R: Rng + ?Sized>(
    rate_hz: f64,
    spectral: &SpectralParams,
    duration_s: f64,
    rng: &mut R,
) -> Vec<PairEvent> {
    if !(rate_hz > 0.0) || !(duration_s > 0.0) {
        return Vec::new();
    }
    let sigma_nm = fwhm_to_sigma(spectral.bandwidth_fwhm_nm);
    let end_ps = duration_s * PS_PER_S;
    let mean_gap_ps = PS_PER_S / rate_hz;
    let mut out = Vec::with_capacity((rate_hz * duration_s * 1.01 + 16.0) as usize);
    let mut t = 0.0f64;
    loop {
        let gap: f64 = Exp1.sample(rng);
        t += gap * mean_gap_ps;
        if t >= end_ps {
            break;
        }
        let z: f64 = StandardNormal.sample(rng);
        out.push(PairEvent {
            emission_ps: t as i64,
            detuning_nm: z * sigma_nm,
        });
    }
    out
}

pub fn emit_pairs<R: Rng + ?Sized>(
    source: &SourceParams,
    spectral: &SpectralParams,
    duration_s: f64,
    rng: &mut R,
) -> Vec<PairEvent> {
    emit_pairs_at_rate(source.pair_rate_hz, spectral, duration_s, rng)
}

/// Where the coupler sends a pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Routing {
    Split,
    BothTo(Station),
}

pub fn route_at_coupler<R: Rng + ?Sized>(split_probability: f64, rng: &mut R) -> Routing {
    if rng.random::<f64>() < split_probability {
        Routing::Split
    } else if rng.random::<bool>() {
        Routing::BothTo(Station::One)
    } else {
        Routing::BothTo(Station::Two)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;

    fn spectral() -> SpectralParams {
        SpectralParams::default()
    }

    #[test]
    fn zero_rate_is_empty() {
        let src = SourceParams {
            pair_rate_hz: 0.0,
            ..SourceParams::default()
        };
        assert!(emit_pairs(&src, &spectral(), 1.0, &mut stream(1, "pairs", 0)).is_empty());
    }

    #[test]
    fn poisson_count_within_four_sigma() {
        let src = SourceParams {
            pair_rate_hz: 1e6,
            ..SourceParams::default()
        };
        let pairs = emit_pairs(&src, &spectral(), 1.0, &mut stream(11, "pairs", 0));
        let n = pairs.len() as f64;
        assert!((n - 1e6).abs() < 4e3, "{n}");
        assert!(pairs.windows(2).all(|w| w[0].emission_ps <= w[1].emission_ps));
        assert!(pairs.iter().all(|p| (0..1_000_000_000_000).contains(&p.emission_ps)));
    }

    #[test]
    fn detuning_width_matches_bandwidth() {
        let src = SourceParams {
            pair_rate_hz: 2e5,
            ..SourceParams::default()
        };
        let pairs = emit_pairs(&src, &spectral(), 1.0, &mut stream(5, "pairs", 0));
        let n = pairs.len() as f64;
        let var = pairs.iter().map(|p| p.detuning_nm * p.detuning_nm).sum::<f64>() / n;
        let sigma = fwhm_to_sigma(90.0);
        // relative error of a sample variance is sqrt(2/n)
        assert!((var / (sigma * sigma) - 1.0).abs() < 4.0 * (2.0 / n).sqrt());
    }

    #[test]
    fn deterministic_for_seed() {
        let src = SourceParams::default();
        let a = emit_pairs(&src, &spectral(), 0.01, &mut stream(3, "pairs", 9));
        let b = emit_pairs(&src, &spectral(), 0.01, &mut stream(3, "pairs", 9));
        assert_eq!(a, b);
    }

    #[test]
    fn coupler_routing_statistics() {
        let mut rng = stream(2, "coupler", 0);
        assert!((0..1000).all(|_| route_at_coupler(1.0, &mut rng) == Routing::Split));
        let n = 1_000_000;
        let mut split = 0usize;
        let mut to1 = 0usize;
        for _ in 0..n {
            match route_at_coupler(0.5, &mut rng) {
                Routing::Split => split += 1,
                Routing::BothTo(Station::One) => to1 += 1,
                Routing::BothTo(Station::Two) => {}
            }
        }
        let f = split as f64 / n as f64;
        assert!((f - 0.5).abs() < 0.002, "{f}");
        let g = to1 as f64 / (n - split) as f64;
        assert!((g - 0.5).abs() < 0.003, "{g}");
    }

    #[test]
    fn validation() {
        assert!(SourceParams::default().validate().is_ok());
        let bad = SourceParams {
            split_probability: 1.5,
            ..SourceParams::default()
        };
        assert_eq!(bad.validate().unwrap_err().field, "split_probability");
        let bad = SourceParams {
            pair_rate_hz: -1.0,
            ..SourceParams::default()
        };
        assert_eq!(bad.validate().unwrap_err().field, "pair_rate_hz");
    }
}
