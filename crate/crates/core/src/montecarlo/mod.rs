//! Seeded event-level simulation of the optical chain.
//!
//! Pipeline per scan point: pair emission → coupler routing → fiber
//! propagation → interferometer path/port sampling → detection with dark
//! counts and dead time → electronics jitter → start-stop (TPHC)
//! coincidence conversion.
//!
//! Times are integer picoseconds. Tags are delay-matched: the nominal
//! group delay of each link is removed, so a pair whose photons both take
//! the short arms shows up at a time difference near zero.

pub mod calibration;
pub mod detector;
pub mod electronics;
pub mod engine;
pub mod fiber;
pub mod interferometer;
pub mod source;

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use detector::{detect, register, DetectorParams, Origin, TimeTag};
pub use electronics::{
    accidental_bound, coincidence_histogram, windowed_coincidences, ElectronicsParams, Histogram, Tphc,
};
pub use engine::{
    measure_accidentals, run_scan, simulate_point, AccidentalMeasurement, CountRecord,
    PointSimulation, ScanOptions,
};
pub use fiber::{propagate, DispersionMode, FiberChannel, PhotonInFlight};
pub use interferometer::{sample_paths_and_ports, ArmPath, InterferometerParams, PathPort};
pub use source::{emit_pairs, route_at_coupler, PairEvent, Routing, SourceParams};

/// One of the two analyzer stations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Station {
    One,
    Two,
}

impl Station {
    pub const BOTH: [Station; 2] = [Station::One, Station::Two];

    /// 0 for station 1, 1 for station 2.
    pub fn index(self) -> usize {
        match self {
            Station::One => 0,
            Station::Two => 1,
        }
    }

    pub fn number(self) -> u8 {
        self.index() as u8 + 1
    }

    pub fn from_number(n: u8) -> Option<Station> {
        match n {
            1 => Some(Station::One),
            2 => Some(Station::Two),
            _ => None,
        }
    }

    pub fn other(self) -> Station {
        match self {
            Station::One => Station::Two,
            Station::Two => Station::One,
        }
    }
}

impl fmt::Display for Station {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.number())
    }
}

/// A parameter outside its allowed range. `field` is relative to the
/// owning component (e.g. `loss_db`), the scenario layer adds the section.
#[derive(Debug, Clone, PartialEq, Error)]
#[error("{field}: {constraint}")]
pub struct InvalidParameter {
    pub field: &'static str,
    pub constraint: String,
}

pub(crate) fn ensure(cond: bool, field: &'static str, constraint: impl FnOnce() -> String) -> Result<(), InvalidParameter> {
    if cond {
        Ok(())
    } else {
        Err(InvalidParameter {
            field,
            constraint: constraint(),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimulationError {
    #[error("invalid parameter {0}")]
    InvalidParameter(#[from] InvalidParameter),
    #[error("histogram bin width must be positive, got {0} ps")]
    InvalidBinWidth(i64),
    #[error("invalid scenario: {0}")]
    Scenario(String),
    #[error("duration must be finite and >= 0, got {0} s")]
    InvalidDuration(f64),
}
