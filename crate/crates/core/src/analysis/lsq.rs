//! Weighted Levenberg-Marquardt for small parameter counts.

use nalgebra::{DMatrix, DVector};

use super::FitError;

#[derive(Debug, Clone)]
pub(crate) struct LsqResult {
    pub params: Vec<f64>,
    /// `(JᵀWJ)⁻¹` at the solution.
    pub covariance: DMatrix<f64>,
    pub chi_square: f64,
}

const MAX_ITERATIONS: usize = 500;

fn chi_square<F>(model: &F, x: &[f64], y: &[f64], w: &[f64], p: &[f64], grad: &mut [f64]) -> f64
where
    F: Fn(f64, &[f64], &mut [f64]) -> f64,
{
    x.iter()
        .zip(y)
        .zip(w)
        .map(|((&xi, &yi), &wi)| {
            let r = yi - model(xi, p, grad);
            wi * r * r
        })
        .sum()
}

/// Minimizes `Σ w·(y - f(x; p))²`. `model(x, p, grad)` returns `f` and
/// writes `∂f/∂p` into `grad`.
pub(crate) fn levenberg_marquardt<F>(model: F, x: &[f64], y: &[f64], w: &[f64], p0: &[f64]) -> Result<LsqResult, FitError>
where
    F: Fn(f64, &[f64], &mut [f64]) -> f64,
{
    let n = p0.len();
    let mut p = p0.to_vec();
    let mut grad = vec![0.0; n];
    let mut chi2 = chi_square(&model, x, y, w, &p, &mut grad);
    if !chi2.is_finite() {
        return Err(FitError::InvalidInput("non-finite residuals at the starting point".into()));
    }
    let mut lambda = 1e-3;
    let mut converged = false;
    let mut iterations = 0;
    while iterations < MAX_ITERATIONS {
        iterations += 1;
        let mut jtj = DMatrix::<f64>::zeros(n, n);
        let mut jtr = DVector::<f64>::zeros(n);
        for ((&xi, &yi), &wi) in x.iter().zip(y).zip(w) {
            let r = yi - model(xi, &p, &mut grad);
            for a in 0..n {
                jtr[a] += wi * grad[a] * r;
                for b in 0..n {
                    jtj[(a, b)] += wi * grad[a] * grad[b];
                }
            }
        }
        let mut improved = false;
        while lambda < 1e16 {
            let mut damped = jtj.clone();
            for a in 0..n {
                damped[(a, a)] += lambda * jtj[(a, a)].max(1e-300);
            }
            let Some(step) = damped.lu().solve(&jtr) else {
                lambda *= 10.0;
                continue;
            };
            let trial: Vec<f64> = p.iter().zip(step.iter()).map(|(a, b)| a + b).collect();
            let trial_chi2 = chi_square(&model, x, y, w, &trial, &mut grad);
            if trial_chi2.is_finite() && trial_chi2 <= chi2 {
                let small_step = step
                    .iter()
                    .zip(&p)
                    .all(|(s, v)| s.abs() <= 1e-12 * (v.abs() + 1e-12));
                let small_gain = chi2 - trial_chi2 <= 1e-14 * chi2.max(1e-300);
                p = trial;
                chi2 = trial_chi2;
                lambda = (lambda / 10.0).max(1e-12);
                improved = true;
                converged = small_step || small_gain;
                break;
            }
            lambda *= 10.0;
        }
        if !improved {
            // no downhill step exists at any damping: we are at the minimum
            converged = true;
        }
        if converged {
            break;
        }
    }
    if !converged || p.iter().any(|v| !v.is_finite()) {
        return Err(FitError::NonConvergence {
            iterations,
            chi_square: chi2,
            params: p,
        });
    }
    let mut jtj = DMatrix::<f64>::zeros(n, n);
    for (&xi, &wi) in x.iter().zip(w) {
        model(xi, &p, &mut grad);
        for a in 0..n {
            for b in 0..n {
                jtj[(a, b)] += wi * grad[a] * grad[b];
            }
        }
    }
    let covariance = jtj
        .try_inverse()
        .ok_or_else(|| FitError::InvalidInput("singular normal matrix; parameters are not identifiable".into()))?;
    Ok(LsqResult {
        params: p,
        covariance,
        chi_square: chi2,
    })
}
