//! Event-level Monte Carlo and statistical reduction for Franson-type
//! energy-time Bell tests over lossy, dispersive fiber links.
//!
//! The crate is split into four layers:
//!
//! - [`model`]: closed-form two-photon coincidence statistics, the
//!   coherence envelope, visibility algebra and the Bell criterion.
//! - [`montecarlo`]: a seeded, deterministic simulation of the optical
//!   chain from pair emission down to start-stop coincidence electronics.
//! - [`analysis`]: fringe fitting, Fourier verification, accidental
//!   subtraction, envelope extraction and Bell reporting.
//! - [`scenario`]: the experiment description, its text file format and
//!   the bundled `geneva1998` scenario.

pub mod analysis;
pub mod model;
pub mod montecarlo;
pub mod rng;
pub mod scenario;
pub mod units;

pub use analysis::{BellReport, FitError, FringeFit};
pub use model::{ModelError, OutcomeLabel, PhaseSetting, SpectralParams, VisibilityParams};
pub use montecarlo::{CountRecord, TimeTag};
pub use scenario::{Scenario, ScenarioError};
