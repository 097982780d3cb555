//! Physical constants and unit conversions shared across the crate.
//!
//! Internally, times are integer picoseconds and wavelengths are
//! nanometres unless a name says otherwise.

/// Speed of light in vacuum, m/s.
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// FWHM / sigma for a Gaussian, `2 sqrt(2 ln 2)`.
pub const FWHM_PER_SIGMA: f64 = 2.354_820_045_030_949_3;

pub const PS_PER_S: f64 = 1e12;
pub const PS_PER_NS: f64 = 1e3;
pub const PS_PER_US: f64 = 1e6;

#[inline]
pub fn fwhm_to_sigma(fwhm: f64) -> f64 {
    fwhm / FWHM_PER_SIGMA
}

#[inline]
pub fn seconds_to_ps(s: f64) -> i64 {
    (s * PS_PER_S).round() as i64
}

/// Power transmittance of a lossy element, `10^(-loss/10)`.
#[inline]
pub fn db_to_transmittance(loss_db: f64) -> f64 {
    10f64.powf(-loss_db / 10.0)
}

/// Standard normal CDF.
#[inline]
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / std::f64::consts::SQRT_2)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fwhm_factor() {
        let expected = 2.0 * (2.0 * std::f64::consts::LN_2).sqrt();
        assert!((FWHM_PER_SIGMA - expected).abs() < 1e-15);
    }

    #[test]
    fn transmittance_of_link_losses() {
        assert!((db_to_transmittance(5.6) - 0.275_422_870_3).abs() < 1e-9);
        assert!((db_to_transmittance(4.9) - 0.323_593_656_9).abs() < 1e-9);
        assert_eq!(db_to_transmittance(0.0), 1.0);
    }

    #[test]
    fn normal_cdf_reference_points() {
        assert!((normal_cdf(0.0) - 0.5).abs() < 1e-15);
        assert!((normal_cdf(1.0) - 0.841_344_746_068_542_9).abs() < 1e-12);
        assert!((normal_cdf(-3.0) - 0.001_349_898_031_630_094_6).abs() < 1e-12);
    }
}
