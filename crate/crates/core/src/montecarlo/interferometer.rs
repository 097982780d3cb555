//! Unbalanced analyzers and the two-photon path/port sampler.
//!
//! Path pairs are drawn uniformly from {SS, LL, SL, LS}. Only SS and LL are
//! indistinguishable in arrival time and interfere; their ports follow the
//! post-selected two-photon distribution. SL and LS are satellite events
//! with independent, unbiased ports.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{ensure, InvalidParameter};
use crate::model::{joint_outcome_distribution, OutcomeLabel, PhaseSetting, Sign, SpectralParams, VisibilityParams};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ArmPath {
    Short,
    Long,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct PathPort {
    pub path: ArmPath,
    pub port: Sign,
}

impl PathPort {
    /// Extra delay picked up in the analyzer.
    pub fn delay_ps(&self, arm_imbalance_ps: i64) -> i64 {
        match self.path {
            ArmPath::Short => 0,
            ArmPath::Long => arm_imbalance_ps,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InterferometerParams {
    pub phase_rad: f64,
    pub arm_imbalance_ps: i64,
    /// Output port that carries the detector.
    pub detector_port: Sign,
}

impl Default for InterferometerParams {
    fn default() -> Self {
        InterferometerParams {
            phase_rad: 0.0,
            arm_imbalance_ps: 1000,
            detector_port: Sign::Plus,
        }
    }
}

impl InterferometerParams {
    pub fn validate(&self) -> Result<(), InvalidParameter> {
        ensure(self.phase_rad.is_finite(), "phase_rad", || "must be finite".into())?;
        ensure(self.arm_imbalance_ps > 0, "arm_imbalance_ps", || {
            format!("must be > 0, got {}", self.arm_imbalance_ps)
        })
    }
}

fn uniform_path_port<R: Rng + ?Sized>(rng: &mut R) -> PathPort {
    let bits: u32 = rng.random();
    PathPort {
        path: if bits & 1 == 0 { ArmPath::Short } else { ArmPath::Long },
        port: if bits & 2 == 0 { Sign::Plus } else { Sign::Minus },
    }
}

/// Path and port of a photon that has no interfering partner.
pub fn sample_single<R: Rng + ?Sized>(rng: &mut R) -> PathPort {
    uniform_path_port(rng)
}

/// Samples paths and ports for a split pair under a given setting.
pub fn sample_paths_and_ports<R: Rng + ?Sized>(
    phases: &PhaseSetting,
    spec: &SpectralParams,
    vis: &VisibilityParams,
    rng: &mut R,
) -> (PathPort, PathPort) {
    let dist = joint_outcome_distribution(phases, spec, vis);
    sample_with_distribution(&dist.0, rng)
}

/// As [`sample_paths_and_ports`] with the port table precomputed; the
/// engine calls this once per pair.
pub(crate) fn sample_with_distribution<R: Rng + ?Sized>(table: &[f64; 4], rng: &mut R) -> (PathPort, PathPort) {
    let path_pair: u32 = rng.random_range(0..4);
    match path_pair {
        0 | 1 => {
            let path = if path_pair == 0 { ArmPath::Short } else { ArmPath::Long };
            let u: f64 = rng.random();
            let mut acc = 0.0;
            let mut chosen = OutcomeLabel::ALL[3];
            for (outcome, p) in OutcomeLabel::ALL.iter().zip(table) {
                acc += p;
                if u < acc {
                    chosen = *outcome;
                    break;
                }
            }
            (
                PathPort { path, port: chosen.i },
                PathPort { path, port: chosen.j },
            )
        }
        _ => {
            let (p1, p2) = if path_pair == 2 {
                (ArmPath::Short, ArmPath::Long)
            } else {
                (ArmPath::Long, ArmPath::Short)
            };
            let bits: u32 = rng.random();
            let port = |b: u32| if b == 0 { Sign::Plus } else { Sign::Minus };
            (
                PathPort { path: p1, port: port(bits & 1) },
                PathPort { path: p2, port: port((bits >> 1) & 1) },
            )
        }
    }
}
