//! Three-peak decomposition of a coincidence histogram: satellites at
//! `∓separation`, the interfering peak at 0, a flat background, and a
//! common Gaussian width. Bin contents are modelled as integrals of the
//! Gaussians over the bin, so areas are in counts.

use serde::{Deserialize, Serialize};

use super::lsq::levenberg_marquardt;
use super::FitError;
use crate::montecarlo::Histogram;
use crate::units::normal_cdf;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PeakFit {
    pub background_per_bin: f64,
    /// Left satellite, central peak, right satellite.
    pub areas: [f64; 3],
    pub area_covariance: [[f64; 3]; 3],
    pub centers_ps: [f64; 3],
    pub center_uncertainties_ps: [f64; 3],
    pub sigma_ps: f64,
    pub chi_square_per_dof: f64,
}

impl PeakFit {
    pub fn area_uncertainties(&self) -> [f64; 3] {
        [0, 1, 2].map(|k| self.area_covariance[k][k].sqrt())
    }

    /// `Σ wₖ·areaₖ` and its standard deviation.
    pub fn combination(&self, w: [f64; 3]) -> (f64, f64) {
        let value = (0..3).map(|k| w[k] * self.areas[k]).sum();
        let var: f64 = (0..3)
            .flat_map(|a| (0..3).map(move |b| (a, b)))
            .map(|(a, b)| w[a] * w[b] * self.area_covariance[a][b])
            .sum();
        (value, var.max(0.0).sqrt())
    }
}

fn density(z: f64) -> f64 {
    (-0.5 * z * z).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

/// Fits the histogram with Poisson weights `1/max(n, 1)`, starting from
/// `initial_sigma_ps`.
pub fn fit_three_peaks(hist: &Histogram, separation_ps: f64, initial_sigma_ps: f64) -> Result<PeakFit, FitError> {
    if !(separation_ps > 0.0 && initial_sigma_ps > 0.0) {
        return Err(FitError::InvalidInput("separation and initial width must be positive".into()));
    }
    let (x, y): (Vec<f64>, Vec<f64>) = hist.iter().map(|(c, n)| (c as f64, n as f64)).unzip();
    if x.len() < 9 {
        return Err(FitError::InsufficientData(format!("need at least 9 bins, got {}", x.len())));
    }
    if x.first().copied().unwrap_or(0.0) > -separation_ps || x.last().copied().unwrap_or(0.0) < separation_ps {
        return Err(FitError::InsufficientData("histogram span does not reach the satellites".into()));
    }
    let w: Vec<f64> = y.iter().map(|n| 1.0 / n.max(1.0)).collect();
    let half = hist.bin_width_ps as f64 / 2.0;

    let edge: Vec<f64> = x
        .iter()
        .zip(&y)
        .filter(|(c, _)| c.abs() > separation_ps + 3.0 * initial_sigma_ps)
        .map(|(_, n)| *n)
        .collect();
    let bg0 = if edge.is_empty() {
        0.0
    } else {
        edge.iter().sum::<f64>() / edge.len() as f64
    };
    let area0 = |center: f64| -> f64 {
        x.iter()
            .zip(&y)
            .filter(|(c, _)| (*c - center).abs() <= separation_ps / 2.0)
            .map(|(_, n)| n - bg0)
            .sum::<f64>()
            .max(1.0)
    };
    let p0 = [
        bg0,
        area0(-separation_ps),
        area0(0.0),
        area0(separation_ps),
        -separation_ps,
        0.0,
        separation_ps,
        initial_sigma_ps,
    ];

    let model = |c: f64, p: &[f64], g: &mut [f64]| -> f64 {
        let sigma = p[7];
        g[0] = 1.0;
        g[7] = 0.0;
        let mut f = p[0];
        for k in 0..3 {
            let zl = (c - half - p[4 + k]) / sigma;
            let zh = (c + half - p[4 + k]) / sigma;
            let mass = normal_cdf(zh) - normal_cdf(zl);
            let (dl, dh) = (density(zl), density(zh));
            f += p[1 + k] * mass;
            g[1 + k] = mass;
            g[4 + k] = p[1 + k] * (dl - dh) / sigma;
            g[7] += p[1 + k] * (dl * zl - dh * zh) / sigma;
        }
        f
    };
    let fit = levenberg_marquardt(model, &x, &y, &w, &p0)?;
    let p = &fit.params;
    let cov = &fit.covariance;
    let dof = x.len().saturating_sub(p.len()).max(1) as f64;
    let mut area_covariance = [[0.0; 3]; 3];
    for (a, row) in area_covariance.iter_mut().enumerate() {
        for (b, v) in row.iter_mut().enumerate() {
            *v = cov[(1 + a, 1 + b)];
        }
    }
    Ok(PeakFit {
        background_per_bin: p[0],
        areas: [p[1], p[2], p[3]],
        area_covariance,
        centers_ps: [p[4], p[5], p[6]],
        center_uncertainties_ps: [4, 5, 6].map(|k| cov[(k, k)].sqrt()),
        sigma_ps: p[7].abs(),
        chi_square_per_dof: fit.chi_square / dof,
    })
}
