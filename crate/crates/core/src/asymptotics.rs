//! Limiting covariances of the empirical measure and derived quantities.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::chain::{ReversibleKernel, Spectrum};
use crate::error::{Error, Result};

const ERGODIC_TOL: f64 = 1e-10;

fn check_ergodic(spec: &Spectrum) -> Result<()> {
    let lambda = spec.eigenvalues();
    let n = lambda.len();
    if n >= 2 && lambda[n - 2] >= 1.0 - ERGODIC_TOL {
        return Err(Error::NonErgodic { slem: lambda[n - 2].abs().max(lambda[0].abs()) });
    }
    Ok(())
}

/// `1 + lambda`, clamped at zero for eigenvalues rounding below -1.
fn one_plus(lambda: f64) -> f64 {
    (1.0 + lambda).max(0.0)
}

/// Reduction factor `1 / (2 alpha (1 + lambda) + 1)`.
fn shrink(alpha: f64, lambda: f64) -> f64 {
    1.0 / (2.0 * alpha * one_plus(lambda) + 1.0)
}

/// `(1 + lambda) / (1 - lambda)`.
fn base_weight(lambda: f64) -> f64 {
    one_plus(lambda) / (1.0 - lambda)
}

fn assemble(spec: &Spectrum, coefficients: &[f64]) -> DMatrix<f64> {
    let n = spec.n();
    let mut m = DMatrix::zeros(n, n);
    for (k, &c) in coefficients.iter().enumerate() {
        let u = spec.left().column(k);
        m += (u * u.transpose()) * c;
    }
    (&m + m.transpose()) * 0.5
}

/// Limiting covariance of the base chain's empirical measure,
/// `sum_{k<N} (1+lambda_k)/(1-lambda_k) u_k u_k^T`.
pub fn covariance_u(spec: &Spectrum) -> Result<DMatrix<f64>> {
    check_ergodic(spec)?;
    let lambda = spec.eigenvalues();
    let coeffs: Vec<f64> = lambda[..lambda.len() - 1].iter().map(|&l| base_weight(l)).collect();
    Ok(assemble(spec, &coeffs))
}

/// `V(alpha) = sum_k c_k u_k u_k^T`.
#[derive(Debug, Clone)]
pub struct AsymptoticCovariance {
    pub alpha: f64,
    /// `c_k = (1+lambda_k) / ((1-lambda_k)(2 alpha (1+lambda_k) + 1))` for `k < N`.
    pub coefficients: Vec<f64>,
    pub matrix: DMatrix<f64>,
    /// False for negative `alpha`, where no limit theorem is available.
    pub within_theory: bool,
}

pub fn covariance_v(spec: &Spectrum, alpha: f64) -> Result<AsymptoticCovariance> {
    check_ergodic(spec)?;
    if !alpha.is_finite() {
        return Err(Error::InvalidAlpha(alpha));
    }
    let lambda = spec.eigenvalues();
    let inner = &lambda[..lambda.len() - 1];
    if alpha < 0.0 {
        if let Some(&l) = inner.iter().find(|&&l| 2.0 * alpha * one_plus(l) + 1.0 <= 0.0) {
            return Err(Error::OutOfTheory {
                alpha,
                reason: format!("2 alpha (1 + lambda) + 1 is not positive for lambda = {l}"),
            });
        }
    }
    let coefficients: Vec<f64> = inner.iter().map(|&l| shrink(alpha, l) * base_weight(l)).collect();
    let matrix = assemble(spec, &coefficients);
    Ok(AsymptoticCovariance { alpha, coefficients, matrix, within_theory: alpha >= 0.0 })
}

/// `U` from the fundamental matrix `Z = (I - P + 1 mu^T)^{-1}`:
/// `U = D Z + Z^T D - D - mu mu^T`. Uses no eigen-decomposition.
pub fn covariance_u_fundamental(k: &ReversibleKernel) -> Result<DMatrix<f64>> {
    let n = k.n();
    let mu = DVector::from_column_slice(k.mu());
    let ones = DVector::from_element(n, 1.0);
    let a = DMatrix::identity(n, n) - k.to_dense() + &ones * mu.transpose();
    let z = a.try_inverse().ok_or(Error::NonErgodic { slem: 1.0 })?;
    let d = DMatrix::from_diagonal(&mu);
    let u = &d * &z + z.transpose() * &d - &d - &mu * mu.transpose();
    Ok((&u + u.transpose()) * 0.5)
}

/// Controls for [`covariance_v_integral`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadratureOptions {
    /// Width of the first panel; later panels grow geometrically.
    pub first_panel: f64,
    pub growth: f64,
    /// Integration horizon; derived from `tail_tol` when absent.
    pub horizon: Option<f64>,
    /// Bound on the max-entry norm of the neglected tail.
    pub tail_tol: f64,
}

impl Default for QuadratureOptions {
    fn default() -> Self {
        Self { first_panel: 0.05, growth: 1.25, horizon: None, tail_tol: 1e-12 }
    }
}

// 10-point Gauss-Legendre nodes and weights on [-1, 1].
const GL_NODES: [f64; 5] = [
    0.148_874_338_981_631_2,
    0.433_395_394_129_247_2,
    0.679_409_568_299_024_4,
    0.865_063_366_688_984_5,
    0.973_906_528_517_171_7,
];
const GL_WEIGHTS: [f64; 5] = [
    0.295_524_224_714_752_9,
    0.269_266_719_309_996_4,
    0.219_086_362_515_982,
    0.149_451_349_150_580_6,
    0.066_671_344_308_688_1,
];

/// `V(alpha) = int_0^inf e^{t(J + I/2)} U e^{t(J + I/2)^T} dt` by panel
/// Gauss-Legendre quadrature.
///
/// `U` and `J` are formed directly from `P` and `mu`; the spectrum only
/// supplies the slowest decay rate for the tail bound
/// `(mu_max/mu_min) |U|_F e^{2 s T} / (2|s|)`, `s = max_{i<N} (zeta_i + 1/2)`.
pub fn covariance_v_integral(
    k: &ReversibleKernel,
    spec: &Spectrum,
    alpha: f64,
    opts: QuadratureOptions,
) -> Result<DMatrix<f64>> {
    check_ergodic(spec)?;
    let n = k.n();
    let u = covariance_u_fundamental(k)?;
    let mu = DVector::from_column_slice(k.mu());
    let ones = DVector::from_element(n, 1.0);
    let a = (&mu * ones.transpose()) * (2.0 * alpha) - k.to_dense().transpose() * alpha
        - DMatrix::identity(n, n) * (alpha + 0.5);

    let lambda = spec.eigenvalues();
    let s = lambda[..n - 1].iter().map(|&l| -0.5 - alpha * one_plus(l)).fold(f64::NEG_INFINITY, f64::max);
    if s >= 0.0 {
        return Err(Error::OutOfTheory { alpha, reason: "integrand does not decay".into() });
    }
    let mu_ratio = mu.max() / mu.min();
    let scale = mu_ratio * u.norm() / (2.0 * s.abs());
    let tail = |t: f64| scale * (2.0 * s * t).exp();
    let needed = (scale / opts.tail_tol).ln() / (2.0 * s.abs());
    let horizon = match opts.horizon {
        Some(h) if tail(h) > opts.tail_tol => {
            return Err(Error::QuadratureHorizon { horizon: h, suggested: needed });
        }
        Some(h) => h,
        None => needed.max(opts.first_panel),
    };

    let mut total = DMatrix::zeros(n, n);
    let mut lo = 0.0;
    let mut width = opts.first_panel;
    while lo < horizon {
        let hi = (lo + width).min(horizon);
        let mid = 0.5 * (lo + hi);
        let half = 0.5 * (hi - lo);
        for (&x, &w) in GL_NODES.iter().zip(&GL_WEIGHTS) {
            for t in [mid - half * x, mid + half * x] {
                let e = (&a * t).exp();
                total += (&e * &u * e.transpose()) * (w * half);
            }
        }
        lo = hi;
        width *= opts.growth;
    }
    Ok((&total + total.transpose()) * 0.5)
}

/// Orthonormal basis of `{x : 1^T x = 0}` (Helmert columns).
fn zero_sum_basis(n: usize) -> DMatrix<f64> {
    let mut q = DMatrix::zeros(n, n - 1);
    for k in 1..n {
        let norm = ((k * (k + 1)) as f64).sqrt();
        for i in 0..k {
            q[(i, k - 1)] = 1.0 / norm;
        }
        q[(k, k - 1)] = -(k as f64) / norm;
    }
    q
}

/// Smallest eigenvalue of `V_b - V_a` on the zero-sum subspace. Positive
/// means `V_a` lies strictly below `V_b` there.
pub fn loewner_gap(v_a: &DMatrix<f64>, v_b: &DMatrix<f64>) -> f64 {
    let n = v_a.nrows();
    if n < 2 {
        return 0.0;
    }
    let q = zero_sum_basis(n);
    let m = q.transpose() * (v_b - v_a) * &q;
    let m = (&m + m.transpose()) * 0.5;
    SymmetricEigen::new(m).eigenvalues.min()
}

/// `g^T V g`.
pub fn sampling_variance(g: &[f64], v: &DMatrix<f64>) -> f64 {
    let g = DVector::from_column_slice(g);
    (g.transpose() * v * &g)[(0, 0)]
}

/// Variance reduction of `g` relative to the base chain.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Reduction {
    /// `E[1/(2 alpha (1+Lambda) + 1)]`, `Lambda = lambda_i` w.p. proportional to `(g^T u_i)^2`.
    pub bound: f64,
    /// `g^T V(alpha) g / g^T V(0) g`.
    pub ratio: f64,
}

pub fn reduction_bound(g: &[f64], spec: &Spectrum, alpha: f64) -> Result<Reduction> {
    check_ergodic(spec)?;
    let n = spec.n();
    if g.len() != n {
        return Err(Error::Config(format!("observable has {} entries for {n} states", g.len())));
    }
    let gv = DVector::from_column_slice(g);
    let lambda = spec.eigenvalues();
    let proj: Vec<f64> = (0..n - 1).map(|k| spec.left().column(k).dot(&gv).powi(2)).collect();
    let g_norm = g.iter().map(|x| x.abs()).sum::<f64>();
    let u_scale = spec.left().columns(0, n - 1).amax();
    let negligible = (1e-12 * g_norm * u_scale).powi(2);
    let mass: f64 = proj.iter().sum();
    if proj.iter().all(|&p| p <= negligible) || mass == 0.0 {
        return Err(Error::UndefinedLambda);
    }
    // Dividing by the summed weights, rather than trusting them to add up
    // to 1, makes alpha = 0 give exactly 1; a single weight is exactly 1.
    let weights: Vec<f64> = proj.iter().map(|p| p / mass).collect();
    let total: f64 = weights.iter().sum();
    let a: Vec<f64> = lambda[..n - 1].iter().map(|&l| shrink(alpha, l)).collect();
    let b: Vec<f64> = lambda[..n - 1].iter().map(|&l| base_weight(l)).collect();
    let bound = weights.iter().zip(&a).map(|(w, ai)| w * ai).sum::<f64>() / total;
    let num: f64 = (0..n - 1).map(|k| weights[k] * a[k] * b[k]).sum();
    let den: f64 = (0..n - 1).map(|k| weights[k] * b[k]).sum();
    Ok(Reduction { bound, ratio: num / den })
}
