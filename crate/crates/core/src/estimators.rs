//! Running estimators and the convergence metrics used across ensembles.

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Plain and importance-reweighted averages of an observable along a path.
///
/// Weights are supplied per sample; they need only be proportional to
/// `1/mu`, since constant factors cancel in the ratio.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunningEstimator {
    sum_g: f64,
    sum_wg: f64,
    sum_w: f64,
    n: u64,
}

impl RunningEstimator {
    pub fn new() -> Self {
        Self::default()
    }

    #[inline]
    pub fn push(&mut self, g: f64, w: f64) {
        self.sum_g += g;
        self.sum_wg += w * g;
        self.sum_w += w;
        self.n += 1;
    }

    pub fn count(&self) -> u64 {
        self.n
    }

    /// `(1/n) sum_k g(X_k)`.
    pub fn psi(&self) -> Result<f64> {
        if self.n == 0 {
            return Err(Error::NotEnoughSamples("psi", 1));
        }
        Ok(self.sum_g / self.n as f64)
    }

    /// `sum_k w(X_k) g(X_k) / sum_k w(X_k)`.
    pub fn psi_reweighted(&self) -> Result<f64> {
        if self.n == 0 {
            return Err(Error::NotEnoughSamples("psi_reweighted", 1));
        }
        Ok(self.sum_wg / self.sum_w)
    }
}

/// Importance weights proportional to `1/mu_i`, scaled so the largest is 1.
///
/// A uniform target therefore yields weights exactly 1, making the
/// reweighted estimator coincide with the plain one.
pub fn importance_weights(mu: &[f64]) -> Result<Vec<f64>> {
    if let Some(i) = mu.iter().position(|m| !(m.is_finite() && *m > 0.0)) {
        return Err(Error::InvalidDistribution(format!("weight undefined for mu[{i}] = {}", mu[i])));
    }
    let min = mu.iter().copied().fold(f64::INFINITY, f64::min);
    Ok(mu.iter().map(|&m| if m == min { 1.0 } else { min / m }).collect())
}

const MASS_TOL: f64 = 1e-9;

/// Total variation distance `(1/2) sum_i |x_i - mu_i|`.
pub fn tvd(x: &[f64], mu: &[f64]) -> Result<f64> {
    if x.len() != mu.len() {
        return Err(Error::InvalidDistribution(format!("lengths {} and {} differ", x.len(), mu.len())));
    }
    for v in [x, mu] {
        let s: f64 = v.iter().sum();
        if (s - 1.0).abs() > MASS_TOL {
            return Err(Error::InvalidDistribution(format!("entries sum to {s}")));
        }
    }
    Ok(0.5 * x.iter().zip(mu).map(|(a, b)| (a - b).abs()).sum::<f64>())
}

/// Mean squared error of `estimates` about `truth`.
pub fn mse(estimates: &[f64], truth: f64) -> Result<f64> {
    if estimates.is_empty() {
        return Err(Error::NotEnoughSamples("mse", 1));
    }
    Ok(estimates.iter().map(|e| (e - truth).powi(2)).sum::<f64>() / estimates.len() as f64)
}

/// Sample mean and its standard error (zero for a single value).
pub fn mean_and_se(values: &[f64]) -> Result<(f64, f64)> {
    let k = values.len();
    if k == 0 {
        return Err(Error::NotEnoughSamples("mean", 1));
    }
    let mean = values.iter().sum::<f64>() / k as f64;
    if k == 1 {
        return Ok((mean, 0.0));
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (k - 1) as f64;
    Ok((mean, (var / k as f64).sqrt()))
}

/// Monte Carlo estimate of the limiting covariance of `sqrt(n)(x_n - mu)`.
#[derive(Debug, Clone)]
pub struct CltCovariance {
    /// `n` times the unbiased sample covariance across runs.
    pub matrix: DMatrix<f64>,
    /// Standard error of each entry of `matrix`.
    pub std_err: DMatrix<f64>,
}

/// Scaled sample covariance of the measures `samples` (one per run) observed at step `n`.
pub fn empirical_clt_covariance(samples: &[Vec<f64>], n: u64) -> Result<CltCovariance> {
    let k = samples.len();
    if k < 2 {
        return Err(Error::NotEnoughSamples("empirical covariance", 2));
    }
    let dim = samples[0].len();
    if samples.iter().any(|s| s.len() != dim) {
        return Err(Error::InvalidDistribution("samples have differing lengths".into()));
    }
    let mut mean = vec![0.0; dim];
    for s in samples {
        for (m, v) in mean.iter_mut().zip(s) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= k as f64);
    let centred: Vec<Vec<f64>> = samples.iter().map(|s| s.iter().zip(&mean).map(|(v, m)| v - m).collect()).collect();
    let scale = n as f64;
    let mut matrix = DMatrix::zeros(dim, dim);
    let mut std_err = DMatrix::zeros(dim, dim);
    for i in 0..dim {
        for j in i..dim {
            let prods: Vec<f64> = centred.iter().map(|c| c[i] * c[j]).collect();
            let sum: f64 = prods.iter().sum();
            let cov = sum / (k - 1) as f64;
            let avg = sum / k as f64;
            let spread = prods.iter().map(|p| (p - avg).powi(2)).sum::<f64>() / (k - 1) as f64;
            let se = scale * (spread / k as f64).sqrt();
            matrix[(i, j)] = scale * cov;
            matrix[(j, i)] = scale * cov;
            std_err[(i, j)] = se;
            std_err[(j, i)] = se;
        }
    }
    Ok(CltCovariance { matrix, std_err })
}
