//! The self-repellent kernel
//! `K_ij[x] = P_ij (x_j/mu_j)^{-alpha} / sum_k P_ik (x_k/mu_k)^{-alpha}`
//! and its stationary measure.
//!
//! Every function accepts raw positive vectors: the kernel is invariant under
//! `x -> c x`, so callers may pass unnormalised visit counts.

use nalgebra::DMatrix;

use crate::chain::ReversibleKernel;
use crate::error::{Error, Result};

/// Strength of self-repellence. Values in `(-0.5, 0)` are accepted but lie
/// outside the range where the asymptotic theory applies.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Repellence {
    alpha: f64,
}

impl Repellence {
    pub fn new(alpha: f64) -> Result<Self> {
        if !(alpha.is_finite() && alpha > -0.5) {
            return Err(Error::InvalidAlpha(alpha));
        }
        Ok(Self { alpha })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    /// True for `alpha >= 0`.
    pub fn within_theory(&self) -> bool {
        self.alpha >= 0.0
    }
}

/// `t^{-alpha}` with exact shortcuts for common exponents.
#[inline]
pub(crate) fn repel(t: f64, alpha: f64) -> f64 {
    if alpha == 0.0 {
        1.0
    } else if alpha == 1.0 {
        1.0 / t
    } else if alpha == 2.0 {
        let s = 1.0 / t;
        s * s
    } else if alpha == 0.5 {
        1.0 / t.sqrt()
    } else if alpha == -0.25 {
        t.sqrt().sqrt()
    } else {
        t.powf(-alpha)
    }
}

#[inline]
fn in_safe_range(r: f64) -> bool {
    const LO: f64 = 7.124_576_406_741_286e-218; // exp(-500)
    const HI: f64 = 1.403_592_217_852_837_6e217; // exp(500)
    (LO..=HI).contains(&r)
}

/// Unnormalised weights `P_ij r_j` over the support of a row, written to
/// `out`; returns their sum. `ratio(j)` yields `x_j / mu_j`.
///
/// Falls back to shifted log-space evaluation when some power would leave
/// `[e^-500, e^500]`; the shift cancels on normalisation.
#[inline]
pub(crate) fn row_weights(
    cols: &[usize],
    probs: &[f64],
    alpha: f64,
    ratio: impl Fn(usize) -> f64,
    out: &mut Vec<f64>,
) -> f64 {
    out.clear();
    let mut total = 0.0;
    let mut safe = true;
    for (&j, &p) in cols.iter().zip(probs) {
        let r = repel(ratio(j), alpha);
        safe &= in_safe_range(r);
        let w = p * r;
        out.push(w);
        total += w;
    }
    if safe {
        return total;
    }
    let logs: Vec<f64> = cols.iter().map(|&j| -alpha * ratio(j).ln()).collect();
    let shift = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    out.clear();
    total = 0.0;
    for (l, &p) in logs.iter().zip(probs) {
        let w = p * (l - shift).exp();
        out.push(w);
        total += w;
    }
    total
}

fn check_interior(x: &[f64], n: usize) -> Result<()> {
    if x.len() != n {
        return Err(Error::InvalidDistribution(format!("length {} does not match {n} states", x.len())));
    }
    match x.iter().position(|v| !(v.is_finite() && *v > 0.0)) {
        Some(node) => Err(Error::Domain { node, value: x[node] }),
        None => Ok(()),
    }
}

/// Row `i` of `K[x]` as `(column, probability)` pairs over the support of `P`.
pub fn kernel_row(k: &ReversibleKernel, x: &[f64], i: usize, p: Repellence) -> Result<Vec<(usize, f64)>> {
    let n = k.n();
    if i >= n {
        return Err(Error::NodeOutOfRange { node: i, node_count: n });
    }
    if x.len() != n {
        return Err(Error::InvalidDistribution(format!("length {} does not match {n} states", x.len())));
    }
    let (cols, probs) = k.row(i);
    if let Some(&j) = cols.iter().find(|&&j| !(x[j].is_finite() && x[j] > 0.0)) {
        return Err(Error::Domain { node: j, value: x[j] });
    }
    let mu = k.mu();
    let mut w = Vec::with_capacity(cols.len());
    let total = row_weights(cols, probs, p.alpha(), |j| x[j] / mu[j], &mut w);
    Ok(cols.iter().zip(w).map(|(&j, wj)| (j, wj / total)).collect())
}

/// Full matrix `K[x]`.
pub fn kernel_matrix(k: &ReversibleKernel, x: &[f64], p: Repellence) -> Result<DMatrix<f64>> {
    check_interior(x, k.n())?;
    let n = k.n();
    let mut m = DMatrix::zeros(n, n);
    for i in 0..n {
        for (j, v) in kernel_row(k, x, i, p)? {
            m[(i, j)] = v;
        }
    }
    Ok(m)
}

/// Inverse-CDF draw over `(node, probability)` pairs in the given order.
///
/// Zero-probability entries are never selected; if rounding leaves `u` past
/// the final cumulative sum the last supported node is returned.
pub fn sample_from_row(row: &[(usize, f64)], u: f64) -> usize {
    let mut acc = 0.0;
    let mut last = row.first().map(|&(j, _)| j).unwrap_or(0);
    for &(j, p) in row {
        if p <= 0.0 {
            continue;
        }
        acc += p;
        last = j;
        if u < acc {
            return j;
        }
    }
    last
}

/// Same rule on unnormalised weights with total `total`.
#[inline]
pub(crate) fn sample_weighted(cols: &[usize], weights: &[f64], total: f64, u: f64) -> usize {
    let target = u * total;
    let mut acc = 0.0;
    let mut last = cols[0];
    for (&j, &w) in cols.iter().zip(weights) {
        if w <= 0.0 {
            continue;
        }
        acc += w;
        last = j;
        if target < acc {
            return j;
        }
    }
    last
}

/// Next state from node `i` given the measure `x` and a uniform draw `u` in `[0, 1)`.
pub fn sample_next(k: &ReversibleKernel, x: &[f64], p: Repellence, i: usize, u: f64) -> Result<usize> {
    Ok(sample_from_row(&kernel_row(k, x, i, p)?, u))
}

/// Reusable buffers for repeated evaluation of `pi(x)`.
#[derive(Debug, Clone, Default)]
pub struct Workspace {
    r: Vec<f64>,
    logs: Vec<f64>,
}

/// Stationary distribution of `K[x]`:
/// `pi_i(x)` proportional to `mu_i r_i sum_j P_ij r_j` with `r = (x/mu)^{-alpha}`.
pub fn stationary_of(k: &ReversibleKernel, x: &[f64], p: Repellence) -> Result<Vec<f64>> {
    let mut out = vec![0.0; k.n()];
    stationary_into(k, x, p, &mut Workspace::default(), &mut out)?;
    Ok(out)
}

/// Allocation-free variant of [`stationary_of`].
pub fn stationary_into(
    k: &ReversibleKernel,
    x: &[f64],
    p: Repellence,
    ws: &mut Workspace,
    out: &mut [f64],
) -> Result<()> {
    stationary_with_mass(k, x, p, ws, out).map(|_| ())
}

/// [`stationary_into`] that also returns the normalising mass
/// `sum_i mu_i r_i (P r)_i`, which is the Lyapunov value at `x`.
pub(crate) fn stationary_with_mass(
    k: &ReversibleKernel,
    x: &[f64],
    p: Repellence,
    ws: &mut Workspace,
    out: &mut [f64],
) -> Result<f64> {
    let n = k.n();
    check_interior(x, n)?;
    let mu = k.mu();
    let alpha = p.alpha();
    ws.r.clear();
    let mut safe = true;
    for i in 0..n {
        let r = repel(x[i] / mu[i], alpha);
        safe &= in_safe_range(r);
        ws.r.push(r);
    }
    let mut shift = 0.0;
    if !safe {
        ws.logs.clear();
        ws.logs.extend((0..n).map(|i| -alpha * (x[i] / mu[i]).ln()));
        shift = ws.logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        for (r, l) in ws.r.iter_mut().zip(&ws.logs) {
            *r = (l - shift).exp();
        }
    }
    let mut total = 0.0;
    for i in 0..n {
        let (cols, probs) = k.row(i);
        let pr: f64 = cols.iter().zip(probs).map(|(&j, &pij)| pij * ws.r[j]).sum();
        let v = mu[i] * ws.r[i] * pr;
        out[i] = v;
        total += v;
    }
    for v in out.iter_mut() {
        *v /= total;
    }
    Ok(if shift == 0.0 { total } else { total * (2.0 * shift).exp() })
}

/// `max_ij |K_ij[c x] - K_ij[x]|`.
pub fn verify_scale_invariance(k: &ReversibleKernel, x: &[f64], p: Repellence, c: f64) -> Result<f64> {
    if !(c.is_finite() && c > 0.0) {
        return Err(Error::Config(format!("scale factor must be positive, got {c}")));
    }
    let scaled: Vec<f64> = x.iter().map(|v| c * v).collect();
    let a = kernel_matrix(k, x, p)?;
    let b = kernel_matrix(k, &scaled, p)?;
    Ok((a - b).amax())
}
