//! Statistical reduction of scan data: fringe fits, the Fourier check,
//! accidental subtraction, the coherence envelope, histogram peaks and the
//! Bell report.

mod bell;
mod bootstrap;
mod envelope;
mod fourier;
mod fringe;
mod lsq;
mod peaks;

use thiserror::Error;

pub use bell::{bell_report, BellReport};
pub use bootstrap::{bootstrap_net_visibility, BootstrapSummary};
pub use envelope::{fit_envelope, EnvelopeFit, EnvelopePoint};
pub use peaks::{fit_three_peaks, PeakFit};
pub use fourier::{fourier_significant_frequencies, FourierReport, SignificantFrequency, DEFAULT_SIGNIFICANCE};
pub use fringe::{
    fit_fringe, fit_fringe_points, subtract_accidentals, AccidentalEstimate, FringeFit, FringePoint, NetScan,
};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FitError {
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("fit did not converge after {iterations} iterations (chi-square {chi_square}, parameters {params:?})")]
    NonConvergence {
        iterations: usize,
        chi_square: f64,
        params: Vec<f64>,
    },
    #[error("invalid input: {0}")]
    InvalidInput(String),
}
