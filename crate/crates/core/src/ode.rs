//! Mean-field dynamics `dx/dt = pi(x) - x`, its Lyapunov function and the
//! linearisation at the target.

use nalgebra::DMatrix;

use crate::chain::{ReversibleKernel, Spectrum};
use crate::error::{Error, Result};
use crate::kernel::{repel, stationary_with_mass, Repellence, Workspace};

/// `h(x) = pi(x) - x`.
pub fn drift(k: &ReversibleKernel, x: &[f64], p: Repellence) -> Result<Vec<f64>> {
    let mut out = vec![0.0; k.n()];
    drift_into(k, x, p, &mut Workspace::default(), &mut out)?;
    Ok(out)
}

/// Writes `h(x)` to `out` and returns `w(x)`, which falls out of the same pass.
fn drift_into(k: &ReversibleKernel, x: &[f64], p: Repellence, ws: &mut Workspace, out: &mut [f64]) -> Result<f64> {
    let w = stationary_with_mass(k, x, p, ws, out)?;
    for (h, xi) in out.iter_mut().zip(x) {
        *h -= xi;
    }
    Ok(w)
}

/// `w(x) = sum_ij mu_i P_ij r_i r_j`, `r = (x/mu)^{-alpha}`.
pub fn lyapunov(k: &ReversibleKernel, x: &[f64], p: Repellence) -> Result<f64> {
    let (r, pr) = repel_terms(k, x, p)?;
    Ok(k.mu().iter().zip(&r).zip(&pr).map(|((m, ri), pri)| m * ri * pri).sum())
}

fn repel_terms(k: &ReversibleKernel, x: &[f64], p: Repellence) -> Result<(Vec<f64>, Vec<f64>)> {
    let n = k.n();
    if x.len() != n {
        return Err(Error::InvalidDistribution(format!("length {} does not match {n} states", x.len())));
    }
    if let Some(node) = x.iter().position(|v| !(v.is_finite() && *v > 0.0)) {
        return Err(Error::Domain { node, value: x[node] });
    }
    let mu = k.mu();
    let r: Vec<f64> = (0..n).map(|i| repel(x[i] / mu[i], p.alpha())).collect();
    let pr = (0..n)
        .map(|i| {
            let (cols, probs) = k.row(i);
            cols.iter().zip(probs).map(|(&j, &pij)| pij * r[j]).sum()
        })
        .collect();
    Ok((r, pr))
}

/// Both evaluations of `dw/dt` along the flow.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LyapunovDerivative {
    /// `grad w(x) . h(x)` with the analytic gradient.
    pub gradient_form: f64,
    /// `-(2 alpha / w) Var_x[Z]`, `Z_i = w pi_i / x_i` drawn with probability `x_i`.
    pub variance_form: f64,
}

const DERIVATIVE_REL_TOL: f64 = 1e-9;

/// Computes `dw/dt` two ways and fails if they disagree beyond `1e-9`
/// relative (plus a rounding floor scaled to the size of the summands).
pub fn lyapunov_derivative(k: &ReversibleKernel, x: &[f64], p: Repellence) -> Result<LyapunovDerivative> {
    let n = k.n();
    let alpha = p.alpha();
    let mu = k.mu();
    let (r, pr) = repel_terms(k, x, p)?;
    let w: f64 = (0..n).map(|i| mu[i] * r[i] * pr[i]).sum();
    let h = drift(k, x, p)?;

    // dw/dx_i = -2 alpha mu_i r_i (P r)_i / x_i, using detailed balance.
    let grad: Vec<f64> = (0..n).map(|i| -2.0 * alpha * mu[i] * r[i] * pr[i] / x[i]).collect();
    let gradient_form: f64 = grad.iter().zip(&h).map(|(g, hi)| g * hi).sum();

    let pi: Vec<f64> = h.iter().zip(x).map(|(hi, xi)| hi + xi).collect();
    let z: Vec<f64> = (0..n).map(|i| w * pi[i] / x[i]).collect();
    let mean: f64 = x.iter().zip(&z).map(|(xi, zi)| xi * zi).sum();
    let var: f64 = x.iter().zip(&z).map(|(xi, zi)| xi * (zi - mean).powi(2)).sum();
    let variance_form = -2.0 * alpha * var / w;

    let scale: f64 = grad.iter().zip(pi.iter().zip(x)).map(|(g, (a, b))| g.abs() * (a + b)).sum();
    let floor = 64.0 * f64::EPSILON * scale;
    let diff = (gradient_form - variance_form).abs();
    if diff > DERIVATIVE_REL_TOL * gradient_form.abs().max(variance_form.abs()) + floor {
        return Err(Error::Consistency(format!(
            "dw/dt mismatch: gradient form {gradient_form:e}, variance form {variance_form:e}"
        )));
    }
    Ok(LyapunovDerivative { gradient_form, variance_form })
}

/// Sampled solution of the mean-field ODE.
#[derive(Debug, Clone)]
pub struct OdeTrajectory {
    /// Times of the stored states.
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
    /// `w` at the stored states.
    pub lyapunov: Vec<f64>,
    /// `w` after every accepted step, starting at `x0`.
    pub lyapunov_steps: Vec<f64>,
    /// Smallest coordinate seen at any accepted step.
    pub min_entry: f64,
}

impl OdeTrajectory {
    pub fn final_state(&self) -> &[f64] {
        self.states.last().expect("trajectory holds at least the initial state")
    }
}

/// Integration controls.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OdeOptions {
    pub horizon: f64,
    pub dt: f64,
    /// Store every `stride`-th state (the final state is always stored).
    pub stride: usize,
}

impl Default for OdeOptions {
    fn default() -> Self {
        Self { horizon: 200.0, dt: 0.01, stride: 100 }
    }
}

const MIN_DT: f64 = 1e-12;

/// Classical fixed-step RK4. A step that would produce a non-positive
/// coordinate is retried with half the step size until it stays interior.
pub fn integrate(k: &ReversibleKernel, x0: &[f64], p: Repellence, opts: OdeOptions) -> Result<OdeTrajectory> {
    if !(opts.dt > 0.0 && opts.dt.is_finite()) || !(opts.horizon >= 0.0 && opts.horizon.is_finite()) {
        return Err(Error::Config(format!("need dt > 0 and T >= 0 (got dt={}, T={})", opts.dt, opts.horizon)));
    }
    let n = k.n();
    let stride = opts.stride.max(1);
    let mut ws = Workspace::default();
    let mut x = x0.to_vec();
    let mut k1 = vec![0.0; n];
    let mut k2 = vec![0.0; n];
    let mut k3 = vec![0.0; n];
    let mut k4 = vec![0.0; n];
    let mut tmp = vec![0.0; n];
    let mut next = vec![0.0; n];

    let w0 = drift_into(k, &x, p, &mut ws, &mut k1)?;
    let mut traj = OdeTrajectory {
        times: vec![0.0],
        states: vec![x.clone()],
        lyapunov: vec![w0],
        lyapunov_steps: vec![w0],
        min_entry: x.iter().copied().fold(f64::INFINITY, f64::min),
    };
    let steps = (opts.horizon / opts.dt).round() as u64;
    let mut t = 0.0;
    // `k1` always holds the drift at the current `x`.
    let mut w = w0;
    for s in 1..=steps {
        let target = s as f64 * opts.dt;
        // A regular step uses h = dt exactly, so it is a fixed map of x.
        let mut first = true;
        let mut frozen = false;
        while first || t < target {
            let full = if first { opts.dt } else { target - t };
            let mut h = full;
            loop {
                if h < MIN_DT {
                    return Err(Error::Integration { t, min_dt: MIN_DT });
                }
                if rk4_stage(k, &x, p, h, &k1, [&mut k2, &mut k3, &mut k4], &mut tmp, &mut next, &mut ws)? {
                    break;
                }
                h *= 0.5;
            }
            frozen = first && h == full && next == x;
            std::mem::swap(&mut x, &mut next);
            t = if h == full { target } else { t + h };
            if !frozen {
                w = drift_into(k, &x, p, &mut ws, &mut k1)?;
            }
            first = false;
        }
        let last = if frozen { steps } else { s };
        traj.min_entry = x.iter().copied().fold(traj.min_entry, f64::min);
        for s in s..=last {
            // Once a full step maps x to itself, so does every later one.
            traj.lyapunov_steps.push(w);
            if s % stride as u64 == 0 || s == steps {
                traj.times.push(s as f64 * opts.dt);
                traj.states.push(x.clone());
                traj.lyapunov.push(w);
            }
        }
        if frozen {
            break;
        }
    }
    Ok(traj)
}

/// One RK4 step of size `h`; returns false (leaving `next` unspecified) if an
/// intermediate or final point leaves the open simplex.
#[allow(clippy::too_many_arguments)]
fn rk4_stage(
    k: &ReversibleKernel,
    x: &[f64],
    p: Repellence,
    h: f64,
    k1: &[f64],
    [k2, k3, k4]: [&mut Vec<f64>; 3],
    tmp: &mut [f64],
    next: &mut [f64],
    ws: &mut Workspace,
) -> Result<bool> {
    let interior = |v: &[f64]| v.iter().all(|&e| e > 0.0);
    for i in 0..x.len() {
        tmp[i] = x[i] + 0.5 * h * k1[i];
    }
    if !interior(tmp) {
        return Ok(false);
    }
    drift_into(k, tmp, p, ws, k2)?;
    for i in 0..x.len() {
        tmp[i] = x[i] + 0.5 * h * k2[i];
    }
    if !interior(tmp) {
        return Ok(false);
    }
    drift_into(k, tmp, p, ws, k3)?;
    for i in 0..x.len() {
        tmp[i] = x[i] + h * k3[i];
    }
    if !interior(tmp) {
        return Ok(false);
    }
    drift_into(k, tmp, p, ws, k4)?;
    for i in 0..x.len() {
        next[i] = x[i] + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
    }
    Ok(interior(next))
}

/// Analytic linearisation of the drift at `mu`.
#[derive(Debug, Clone)]
pub struct Jacobian {
    /// `2 alpha mu 1^T - alpha P^T - (alpha + 1) I`.
    pub matrix: DMatrix<f64>,
    /// `zeta_i = -1 - alpha (1 + lambda_i)` for `i < N`, and `zeta_N = -1`,
    /// in the order of the spectrum. Right eigenvectors are the `u_i`.
    pub eigenvalues: Vec<f64>,
}

pub fn jacobian_at_mu(k: &ReversibleKernel, spec: &Spectrum, p: Repellence) -> Jacobian {
    let n = k.n();
    let a = p.alpha();
    let mu = nalgebra::DVector::from_column_slice(k.mu());
    let ones = nalgebra::DVector::from_element(n, 1.0);
    let matrix = (&mu * ones.transpose()) * (2.0 * a) - k.to_dense().transpose() * a - DMatrix::identity(n, n) * (a + 1.0);
    let lambda = spec.eigenvalues();
    let eigenvalues = (0..n).map(|i| if i + 1 == n { -1.0 } else { -1.0 - a * (1.0 + lambda[i]) }).collect();
    Jacobian { matrix, eigenvalues }
}

/// Central-difference Jacobian of `h` at `mu` on raw (unnormalised) coordinates.
///
/// The step along coordinate `j` is `min(step, mu_j / 10)`.
pub fn jacobian_fd(k: &ReversibleKernel, p: Repellence, step: f64) -> Result<DMatrix<f64>> {
    if !(1e-7..=1e-3).contains(&step) {
        return Err(Error::Config(format!("finite-difference step {step} outside [1e-7, 1e-3]")));
    }
    let n = k.n();
    let mu = k.mu();
    let mut jac = DMatrix::zeros(n, n);
    let mut ws = Workspace::default();
    let mut plus = vec![0.0; n];
    let mut minus = vec![0.0; n];
    for j in 0..n {
        let s = step.min(mu[j] / 10.0);
        let mut xp = mu.to_vec();
        let mut xm = mu.to_vec();
        xp[j] += s;
        xm[j] -= s;
        drift_into(k, &xp, p, &mut ws, &mut plus)?;
        drift_into(k, &xm, p, &mut ws, &mut minus)?;
        for i in 0..n {
            jac[(i, j)] = (plus[i] - minus[i]) / (2.0 * s);
        }
    }
    Ok(jac)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chain::compute_spectrum;
    use approx::assert_abs_diff_eq;

    fn flat_two_state() -> ReversibleKernel {
        ReversibleKernel::from_dense(&DMatrix::from_element(2, 2, 0.5), &[0.5, 0.5]).unwrap()
    }

    fn alpha(a: f64) -> Repellence {
        Repellence::new(a).unwrap()
    }

    #[test]
    fn frozen_shortcut_matches_plain_stepping() {
        let p = ReversibleKernel::from_dense(
            &DMatrix::from_row_slice(3, 3, &[0.2, 0.5, 0.3, 0.5, 0.1, 0.4, 0.3, 0.4, 0.3]),
            &[1.0 / 3.0; 3],
        )
        .unwrap();
        let opts = OdeOptions { horizon: 60.0, dt: 0.01, stride: 1 };
        for a in [0.5, -0.25] {
            let traj = integrate(&p, &[0.7, 0.2, 0.1], alpha(a), opts).unwrap();
            let mut ws = Workspace::default();
            let mut x = vec![0.7, 0.2, 0.1];
            let (mut k1, mut k2, mut k3, mut k4) = (vec![0.0; 3], vec![0.0; 3], vec![0.0; 3], vec![0.0; 3]);
            let (mut tmp, mut next) = (vec![0.0; 3], vec![0.0; 3]);
            let mut frozen_at = None;
            for s in 1..=6000u32 {
                drift_into(&p, &x, alpha(a), &mut ws, &mut k1).unwrap();
                let ok = rk4_stage(&p, &x, alpha(a), opts.dt, &k1, [&mut k2, &mut k3, &mut k4], &mut tmp, &mut next, &mut ws);
                assert!(ok.unwrap());
                if next == x && frozen_at.is_none() {
                    frozen_at = Some(s);
                }
                std::mem::swap(&mut x, &mut next);
                assert_eq!(traj.states[s as usize], x);
            }
            assert!(frozen_at.is_some_and(|s| s < 6000), "trajectory never froze");
        }
    }

    #[test]
    fn frozen_state_fills_the_remaining_grid() {
        let k = flat_two_state();
        let opts = OdeOptions { horizon: 1.0, dt: 0.1, stride: 3 };
        let traj = integrate(&k, &[0.5, 0.5], alpha(1.0), opts).unwrap();
        assert_eq!(traj.lyapunov_steps.len(), 11);
        assert_eq!(traj.times, vec![0.0, 0.30000000000000004, 0.6000000000000001, 0.9, 1.0]);
        assert!(traj.states.iter().all(|x| x == &vec![0.5, 0.5]));
    }

    #[test]
    fn drift_examples() {
        let k = flat_two_state();
        assert_eq!(drift(&k, &[0.5, 0.5], alpha(1.0)).unwrap(), vec![0.0, 0.0]);
        let h = drift(&k, &[0.25, 0.75], alpha(1.0)).unwrap();
        assert_abs_diff_eq!(h[0], 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(h[1], -0.5, epsilon = 1e-15);
        let h0 = drift(&k, &[0.1, 0.9], alpha(0.0)).unwrap();
        assert_abs_diff_eq!(h0[0], 0.4, epsilon = 1e-15);
    }

    #[test]
    fn lyapunov_examples() {
        let k = flat_two_state();
        assert_abs_diff_eq!(lyapunov(&k, &[0.5, 0.5], alpha(3.0)).unwrap(), 1.0, epsilon = 1e-15);
        assert_eq!(lyapunov(&k, &[0.1, 0.9], alpha(0.0)).unwrap(), 1.0);
        assert_abs_diff_eq!(lyapunov(&k, &[0.25, 0.75], alpha(1.0)).unwrap(), 16.0 / 9.0, epsilon = 1e-14);
    }

    #[test]
    fn derivative_examples() {
        let k = flat_two_state();
        let at_mu = lyapunov_derivative(&k, &[0.5, 0.5], alpha(1.0)).unwrap();
        assert_eq!(at_mu.gradient_form, 0.0);
        let flat = lyapunov_derivative(&k, &[0.3, 0.7], alpha(0.0)).unwrap();
        assert_eq!(flat.gradient_form, 0.0);
        let d = lyapunov_derivative(&k, &[0.25, 0.75], alpha(1.0)).unwrap();
        assert!(d.gradient_form < 0.0);
        assert!((d.gradient_form - d.variance_form).abs() <= 1e-12 * d.gradient_form.abs());
    }

    #[test]
    fn equilibrium_is_fixed() {
        let k = flat_two_state();
        let tr = integrate(&k, &[0.5, 0.5], alpha(2.0), OdeOptions { horizon: 5.0, ..Default::default() }).unwrap();
        assert_eq!(tr.final_state(), &[0.5, 0.5]);
    }

    #[test]
    fn two_state_converges() {
        let k = flat_two_state();
        let coarse = integrate(&k, &[0.25, 0.75], alpha(1.0), OdeOptions { horizon: 50.0, dt: 0.01, stride: 1000 }).unwrap();
        let fine = integrate(&k, &[0.25, 0.75], alpha(1.0), OdeOptions { horizon: 50.0, dt: 0.001, stride: 10000 }).unwrap();
        assert!((coarse.final_state()[0] - 0.5).abs() < 1e-8);
        assert!((coarse.final_state()[0] - fine.final_state()[0]).abs() < 1e-12);
        assert!(coarse.lyapunov_steps.windows(2).all(|w| w[1] <= w[0] + 1e-10));
        assert_eq!(coarse.lyapunov_steps.len(), 5001);
    }

    #[test]
    fn jacobian_at_zero_alpha_is_minus_identity() {
        let k = flat_two_state();
        let spec = compute_spectrum(&k).unwrap();
        let j = jacobian_at_mu(&k, &spec, alpha(0.0));
        assert_eq!(j.matrix, -DMatrix::identity(2, 2));
        assert!(j.eigenvalues.iter().all(|&z| z == -1.0));
        let fd = jacobian_fd(&k, alpha(0.0), 1e-5).unwrap();
        assert!((fd + DMatrix::identity(2, 2)).amax() < 1e-6);
    }

    #[test]
    fn jacobian_eigenvalue_formula() {
        let k = flat_two_state();
        let spec = compute_spectrum(&k).unwrap();
        let j = jacobian_at_mu(&k, &spec, alpha(2.0));
        assert_abs_diff_eq!(j.eigenvalues[0], -3.0, epsilon = 1e-14);
        assert_eq!(j.eigenvalues[1], -1.0);
        let fd = jacobian_fd(&k, alpha(2.0), 1e-5).unwrap();
        assert!((fd - &j.matrix).amax() < 1e-6);
    }

    #[test]
    fn bad_inputs() {
        let k = flat_two_state();
        assert!(jacobian_fd(&k, alpha(1.0), 1e-2).is_err());
        assert!(integrate(&k, &[0.5, 0.5], alpha(1.0), OdeOptions { dt: 0.0, ..Default::default() }).is_err());
        assert!(matches!(drift(&k, &[0.0, 1.0], alpha(1.0)), Err(Error::Domain { .. })));
    }
}
