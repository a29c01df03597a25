//! Time-reversible base chains `(P, mu)` and their spectral decomposition.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};
use crate::graph::Graph;

/// Row-stochastic transition matrix together with the distribution it is
/// meant to be reversible for.
///
/// Rows are stored sparsely; [`ReversibleKernel::to_dense`] materialises the
/// full matrix for spectral work.
#[derive(Debug, Clone, PartialEq)]
pub struct ReversibleKernel {
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<f64>,
    mu: Vec<f64>,
    aperiodic: bool,
}

/// Row sums and target mass may deviate by this much on input; both are then
/// renormalised.
const INPUT_TOL: f64 = 1e-9;

impl ReversibleKernel {
    /// Builds a kernel from `(i, j, P_ij)` triples. Missing entries are zero.
    ///
    /// Only stochasticity is checked here; detailed balance is reported by
    /// [`verify_dbe`] and enforced by [`compute_spectrum`].
    pub fn from_triplets(n: usize, triplets: &[(usize, usize, f64)], mu: &[f64]) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidKernel("empty state space".into()));
        }
        let mut rows: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
        for &(i, j, p) in triplets {
            if i >= n || j >= n {
                return Err(Error::NodeOutOfRange { node: i.max(j), node_count: n });
            }
            if !(p.is_finite() && p >= 0.0) {
                return Err(Error::InvalidKernel(format!("entry ({i}, {j}) = {p}")));
            }
            if p > 0.0 {
                rows[i].push((j, p));
            }
        }
        for (i, row) in rows.iter_mut().enumerate() {
            row.sort_by_key(|&(j, _)| j);
            if row.windows(2).any(|w| w[0].0 == w[1].0) {
                return Err(Error::InvalidKernel(format!("row {i} repeats a column")));
            }
        }
        Self::from_rows(rows, mu)
    }

    pub fn from_dense(p: &DMatrix<f64>, mu: &[f64]) -> Result<Self> {
        if p.nrows() != p.ncols() {
            return Err(Error::InvalidKernel(format!("{}x{} matrix is not square", p.nrows(), p.ncols())));
        }
        let n = p.nrows();
        let triplets: Vec<_> = (0..n).flat_map(|i| (0..n).map(move |j| (i, j))).map(|(i, j)| (i, j, p[(i, j)])).collect();
        Self::from_triplets(n, &triplets, mu)
    }

    fn from_rows(mut rows: Vec<Vec<(usize, f64)>>, mu: &[f64]) -> Result<Self> {
        let n = rows.len();
        let mu = normalize_distribution(mu, n)?;
        for (i, row) in rows.iter_mut().enumerate() {
            let sum: f64 = row.iter().map(|&(_, p)| p).sum();
            if (sum - 1.0).abs() > INPUT_TOL {
                return Err(Error::InvalidKernel(format!("row {i} sums to {sum}")));
            }
            // Deviations at the level of summation rounding are left alone so
            // that entries given by exact formulas keep their values.
            if (sum - 1.0).abs() > row.len() as f64 * f64::EPSILON {
                for entry in row.iter_mut() {
                    entry.1 /= sum;
                }
            }
        }
        let mut row_ptr = Vec::with_capacity(n + 1);
        let mut cols = Vec::new();
        let mut vals = Vec::new();
        row_ptr.push(0);
        for row in &rows {
            for &(j, p) in row {
                cols.push(j);
                vals.push(p);
            }
            row_ptr.push(cols.len());
        }
        let aperiodic = rows.iter().enumerate().any(|(i, row)| row.iter().any(|&(j, _)| j == i))
            || !support_is_bipartite(&rows);
        Ok(Self { row_ptr, cols, vals, mu, aperiodic })
    }

    pub fn n(&self) -> usize {
        self.mu.len()
    }

    pub fn mu(&self) -> &[f64] {
        &self.mu
    }

    /// Column indices and probabilities of row `i`, ascending by column.
    pub fn row(&self, i: usize) -> (&[usize], &[f64]) {
        let range = self.row_ptr[i]..self.row_ptr[i + 1];
        (&self.cols[range.clone()], &self.vals[range])
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (cols, vals) = self.row(i);
        cols.binary_search(&j).map(|pos| vals[pos]).unwrap_or(0.0)
    }

    /// Non-zero entries as `(i, j, P_ij)`, row-major.
    pub fn triplets(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.n()).flat_map(move |i| {
            let (cols, vals) = self.row(i);
            cols.iter().zip(vals).map(move |(&j, &p)| (i, j, p))
        })
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let n = self.n();
        let mut p = DMatrix::zeros(n, n);
        for (i, j, v) in self.triplets() {
            p[(i, j)] = v;
        }
        p
    }

    /// Some state holds with positive probability, or the support graph has an odd cycle.
    pub fn is_aperiodic(&self) -> bool {
        self.aperiodic
    }

    /// Every state reaches every other along positive entries.
    pub fn is_irreducible(&self) -> bool {
        let n = self.n();
        let reach = |transpose: bool| {
            let mut adj = vec![Vec::new(); n];
            for (i, j, _) in self.triplets() {
                if transpose {
                    adj[j].push(i);
                } else {
                    adj[i].push(j);
                }
            }
            let mut seen = vec![false; n];
            let mut stack = vec![0];
            seen[0] = true;
            while let Some(u) = stack.pop() {
                for &v in &adj[u] {
                    if !seen[v] {
                        seen[v] = true;
                        stack.push(v);
                    }
                }
            }
            seen.into_iter().all(|s| s)
        };
        reach(false) && reach(true)
    }
}

fn support_is_bipartite(rows: &[Vec<(usize, f64)>]) -> bool {
    let n = rows.len();
    let mut colour: Vec<Option<bool>> = vec![None; n];
    for start in 0..n {
        if colour[start].is_some() {
            continue;
        }
        colour[start] = Some(false);
        let mut stack = vec![start];
        while let Some(u) = stack.pop() {
            let cu = colour[u].unwrap();
            for &(v, _) in &rows[u] {
                match colour[v] {
                    None => {
                        colour[v] = Some(!cu);
                        stack.push(v);
                    }
                    Some(cv) if cv == cu => return false,
                    Some(_) => {}
                }
            }
        }
    }
    true
}

/// Checks length, strict positivity and unit mass (within input tolerance),
/// returning the exactly renormalised vector.
pub fn normalize_distribution(v: &[f64], n: usize) -> Result<Vec<f64>> {
    if v.len() != n {
        return Err(Error::InvalidDistribution(format!("length {} does not match {n} states", v.len())));
    }
    if let Some((i, x)) = v.iter().enumerate().find(|(_, x)| !(x.is_finite() && **x > 0.0)) {
        return Err(Error::InvalidDistribution(format!("entry {i} = {x} is not strictly positive")));
    }
    let sum: f64 = v.iter().sum();
    if (sum - 1.0).abs() > INPUT_TOL {
        return Err(Error::InvalidDistribution(format!("entries sum to {sum}")));
    }
    Ok(if sum == 1.0 { v.to_vec() } else { v.iter().map(|x| x / sum).collect() })
}

/// Simple random walk: `P_ij = a_ij / deg(i)`, `mu` proportional to degree.
pub fn build_srw(g: &Graph) -> Result<ReversibleKernel> {
    g.ensure_connected()?;
    let deg = g.degrees();
    let total: f64 = deg.iter().sum();
    let mu: Vec<f64> = deg.iter().map(|d| d / total).collect();
    let rows = (0..g.node_count())
        .map(|i| g.neighbors(i).iter().map(|&(j, a)| (j, a / deg[i])).collect())
        .collect();
    ReversibleKernel::from_rows(rows, &mu)
}

/// Metropolis-Hastings walk over the simple-random-walk proposal.
///
/// `P_ij = a_ij * min(1/deg(i), (mu_j/mu_i)/deg(j))` off the diagonal, the
/// remainder on the diagonal. For a uniform target this is exactly
/// `a_ij * min(1/deg(i), 1/deg(j))`.
pub fn build_mhrw(g: &Graph, target: &[f64]) -> Result<ReversibleKernel> {
    g.ensure_connected()?;
    let n = g.node_count();
    let mu = normalize_distribution(target, n)?;
    let deg = g.degrees();
    let mut rows = Vec::with_capacity(n);
    for i in 0..n {
        let mut row: Vec<(usize, f64)> = g
            .neighbors(i)
            .iter()
            .map(|&(j, a)| (j, a * (1.0 / deg[i]).min((mu[j] / mu[i]) / deg[j])))
            .collect();
        let off: f64 = row.iter().map(|&(_, p)| p).sum();
        let hold = 1.0 - off;
        // Rounding residue of a row that should hold with probability zero.
        if hold > 16.0 * f64::EPSILON {
            let pos = row.partition_point(|&(j, _)| j < i);
            row.insert(pos, (i, hold));
        }
        rows.push(row);
    }
    ReversibleKernel::from_rows(rows, &mu)
}

/// Largest detailed-balance violation `max |mu_i P_ij - mu_j P_ji|`.
pub fn verify_dbe(k: &ReversibleKernel) -> f64 {
    let mu = k.mu();
    k.triplets()
        .map(|(i, j, p)| (mu[i] * p - mu[j] * k.get(j, i)).abs())
        .fold(0.0, f64::max)
}

/// Eigen-decomposition of a reversible kernel.
///
/// Column `k` of `left` is `u_k`, column `k` of `right` is `v_k`, with
/// `u_k^T P = lambda_k u_k^T`, `P v_k = lambda_k v_k` and `u_k^T v_j = delta_kj`.
/// The last pair is exactly `(mu, 1)`.
#[derive(Debug, Clone)]
pub struct Spectrum {
    eigenvalues: Vec<f64>,
    left: DMatrix<f64>,
    right: DMatrix<f64>,
    mu: Vec<f64>,
}

/// Tolerated asymmetry of `D^{1/2} P D^{-1/2}` before a kernel is declared non-reversible.
pub const SYMMETRY_TOL: f64 = 1e-8;
const ERGODIC_TOL: f64 = 1e-10;

impl Spectrum {
    pub fn n(&self) -> usize {
        self.eigenvalues.len()
    }

    /// Ascending; the last entry is exactly 1.
    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn left(&self) -> &DMatrix<f64> {
        &self.left
    }

    pub fn right(&self) -> &DMatrix<f64> {
        &self.right
    }

    pub fn u(&self, k: usize) -> DVector<f64> {
        self.left.column(k).into_owned()
    }

    pub fn v(&self, k: usize) -> DVector<f64> {
        self.right.column(k).into_owned()
    }

    pub fn mu(&self) -> &[f64] {
        &self.mu
    }

    /// `sum_k lambda_k v_k u_k^T`, which reproduces `P`.
    pub fn reconstruct(&self) -> DMatrix<f64> {
        let lambda = DMatrix::from_diagonal(&DVector::from_column_slice(&self.eigenvalues));
        &self.right * lambda * self.left.transpose()
    }

    /// Builds a spectrum from an orthonormal eigenbasis `phi` (columns) of the
    /// symmetrised kernel, sorted ascending with the stationary direction last.
    pub(crate) fn from_symmetric_basis(eigenvalues: Vec<f64>, phi: &DMatrix<f64>, mu: &[f64]) -> Self {
        let n = mu.len();
        let sqrt_mu: Vec<f64> = mu.iter().map(|m| m.sqrt()).collect();
        let mut left = DMatrix::zeros(n, n);
        let mut right = DMatrix::zeros(n, n);
        for k in 0..n {
            let mut v: Vec<f64> = (0..n).map(|i| phi[(i, k)] / sqrt_mu[i]).collect();
            if sign_flip_needed(&v) {
                v.iter_mut().for_each(|x| *x = -*x);
            }
            for i in 0..n {
                right[(i, k)] = v[i];
                left[(i, k)] = v[i] * mu[i];
            }
        }
        let mut eigenvalues = eigenvalues;
        eigenvalues[n - 1] = 1.0;
        left.column_mut(n - 1).copy_from_slice(mu);
        right.column_mut(n - 1).fill(1.0);
        Self { eigenvalues, left, right, mu: mu.to_vec() }
    }
}

/// The entry of largest magnitude should be positive; near-ties go to the first index.
fn sign_flip_needed(v: &[f64]) -> bool {
    let max = v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    let lead = v.iter().find(|x| x.abs() >= max * (1.0 - 1e-9)).copied().unwrap_or(0.0);
    lead < 0.0
}

/// Spectral decomposition through the symmetric similarity `S = D^{1/2} P D^{-1/2}`.
pub fn compute_spectrum(k: &ReversibleKernel) -> Result<Spectrum> {
    let n = k.n();
    let sqrt_mu: Vec<f64> = k.mu().iter().map(|m| m.sqrt()).collect();
    let mut s = DMatrix::zeros(n, n);
    for (i, j, p) in k.triplets() {
        s[(i, j)] = sqrt_mu[i] * p / sqrt_mu[j];
    }
    let residual = (0..n)
        .flat_map(|i| (0..i).map(move |j| (i, j)))
        .map(|(i, j)| (s[(i, j)] - s[(j, i)]).abs())
        .fold(0.0, f64::max);
    if residual > SYMMETRY_TOL {
        return Err(Error::NonReversible { residual });
    }
    let sym = (&s + s.transpose()) * 0.5;
    let eig = SymmetricEigen::new(sym);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let eigenvalues: Vec<f64> = order.iter().map(|&k| eig.eigenvalues[k]).collect();
    let phi = DMatrix::from_fn(n, n, |i, c| eig.eigenvectors[(i, order[c])]);
    Ok(Spectrum::from_symmetric_basis(eigenvalues, &phi, k.mu()))
}

/// Second largest eigenvalue modulus, `max(|lambda_1|, |lambda_{N-1}|)`.
pub fn slem(s: &Spectrum) -> Result<f64> {
    let lambda = s.eigenvalues();
    let n = lambda.len();
    if n < 2 {
        return Ok(0.0);
    }
    let value = lambda[0].abs().max(lambda[n - 2].abs());
    if lambda[0] <= -1.0 + ERGODIC_TOL || lambda[n - 2] >= 1.0 - ERGODIC_TOL {
        return Err(Error::NonErgodic { slem: value });
    }
    Ok(value)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{complete, path};
    use approx::assert_abs_diff_eq;

    fn two_state(p: f64, q: f64) -> ReversibleKernel {
        let m = DMatrix::from_row_slice(2, 2, &[1.0 - p, p, q, 1.0 - q]);
        ReversibleKernel::from_dense(&m, &[q / (p + q), p / (p + q)]).unwrap()
    }

    #[test]
    fn srw_on_path() {
        let k = build_srw(&path(3).unwrap()).unwrap();
        assert_eq!(k.mu(), &[0.25, 0.5, 0.25]);
        assert_eq!(k.get(1, 0), 0.5);
        assert_eq!(k.get(0, 1), 1.0);
    }

    #[test]
    fn srw_on_triangle() {
        let k = build_srw(&complete(3).unwrap()).unwrap();
        for i in 0..3 {
            assert_abs_diff_eq!(k.mu()[i], 1.0 / 3.0, epsilon = 1e-15);
            for j in 0..3 {
                assert_eq!(k.get(i, j), if i == j { 0.0 } else { 0.5 });
            }
        }
        assert!(k.is_aperiodic());
    }

    #[test]
    fn single_edge_is_periodic() {
        let k = build_srw(&path(2).unwrap()).unwrap();
        assert_eq!(k.to_dense(), DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]));
        assert_eq!(k.mu(), &[0.5, 0.5]);
        assert!(!k.is_aperiodic());
        let spec = compute_spectrum(&k).unwrap();
        assert!(matches!(slem(&spec), Err(Error::NonErgodic { .. })));
    }

    #[test]
    fn mhrw_uniform_path() {
        let k = build_mhrw(&path(3).unwrap(), &[1.0 / 3.0; 3]).unwrap();
        assert_eq!(k.get(0, 1), 0.5);
        assert_eq!(k.get(0, 0), 0.5);
        assert_eq!(k.get(1, 2), 0.5);
        assert_eq!(k.get(1, 1), 0.0);
        assert!(verify_dbe(&k) <= 1e-12);
    }

    #[test]
    fn mhrw_regular_graph_has_no_holding() {
        let k = build_mhrw(&complete(5).unwrap(), &[0.2; 5]).unwrap();
        for i in 0..5 {
            assert_eq!(k.get(i, i), 0.0);
            assert_eq!(k.get(i, (i + 1) % 5), 0.25);
        }
    }

    #[test]
    fn mhrw_with_degree_target_is_srw() {
        let g = crate::graph::parse_edge_list("0 1\n1 2\n2 0\n2 3\n").unwrap();
        let srw = build_srw(&g).unwrap();
        let mh = build_mhrw(&g, srw.mu()).unwrap();
        assert!((srw.to_dense() - mh.to_dense()).amax() < 1e-15);
    }

    #[test]
    fn mhrw_rejects_bad_targets() {
        let g = path(3).unwrap();
        assert!(matches!(build_mhrw(&g, &[0.5, 0.5, 0.0]), Err(Error::InvalidDistribution(_))));
        assert!(matches!(build_mhrw(&g, &[0.5, 0.5]), Err(Error::InvalidDistribution(_))));
    }

    #[test]
    fn dbe_violation_by_hand() {
        let p = DMatrix::from_row_slice(2, 2, &[0.5, 0.5, 0.25, 0.75]);
        let ok = ReversibleKernel::from_dense(&p, &[1.0 / 3.0, 2.0 / 3.0]).unwrap();
        assert!(verify_dbe(&ok) < 1e-16);
        let bad = ReversibleKernel::from_dense(&p, &[0.5, 0.5]).unwrap();
        assert_abs_diff_eq!(verify_dbe(&bad), 0.125, epsilon = 1e-16);
        assert!(matches!(compute_spectrum(&bad), Err(Error::NonReversible { .. })));
    }

    #[test]
    fn disconnected_graph_rejected() {
        let g = Graph::from_edges(4, &[(0, 1, 1.0), (2, 3, 1.0)]).unwrap();
        assert_eq!(build_srw(&g).unwrap_err(), Error::Disconnected { components: 2 });
    }

    #[test]
    fn two_state_spectrum() {
        let spec = compute_spectrum(&two_state(0.5, 0.5)).unwrap();
        assert_abs_diff_eq!(spec.eigenvalues()[0], 0.0, epsilon = 1e-15);
        assert_eq!(spec.eigenvalues()[1], 1.0);
        assert_abs_diff_eq!(spec.u(0)[0], 0.5, epsilon = 1e-14);
        assert_abs_diff_eq!(spec.u(0)[1], -0.5, epsilon = 1e-14);
        assert_abs_diff_eq!(spec.v(0)[0], 1.0, epsilon = 1e-14);
        assert_abs_diff_eq!(spec.v(0)[1], -1.0, epsilon = 1e-14);
        assert!(slem(&spec).unwrap().abs() < 1e-15);
    }

    #[test]
    fn complete_graph_spectrum() {
        let n = 6;
        let spec = compute_spectrum(&build_srw(&complete(n).unwrap()).unwrap()).unwrap();
        for &l in &spec.eigenvalues()[..n - 1] {
            assert_abs_diff_eq!(l, -1.0 / (n as f64 - 1.0), epsilon = 1e-12);
        }
        assert_abs_diff_eq!(slem(&spec).unwrap(), 0.2, epsilon = 1e-12);
    }

    #[test]
    fn biorthogonality_and_reconstruction() {
        let g = crate::graph::parse_edge_list("0 1\n1 2\n2 3\n3 0\n0 2\n3 4\n").unwrap();
        let k = build_mhrw(&g, &[0.1, 0.3, 0.2, 0.25, 0.15]).unwrap();
        let spec = compute_spectrum(&k).unwrap();
        let gram = spec.left().transpose() * spec.right();
        assert!((gram - DMatrix::identity(5, 5)).amax() < 1e-10);
        assert!((spec.reconstruct() - k.to_dense()).amax() < 1e-12);
        assert_eq!(spec.u(4).as_slice(), k.mu());
        assert!(spec.v(4).iter().all(|&x| x == 1.0));
    }

    #[test]
    fn slem_takes_largest_modulus() {
        let phi = DMatrix::identity(3, 3);
        let spec = Spectrum::from_symmetric_basis(vec![-0.9, 0.3, 1.0], &phi, &[1.0 / 3.0; 3]);
        assert_abs_diff_eq!(slem(&spec).unwrap(), 0.9, epsilon = 1e-15);
    }

    #[test]
    fn sign_rule() {
        assert!(!sign_flip_needed(&[0.1, 0.9, -0.3]));
        assert!(sign_flip_needed(&[0.1, -0.9, 0.3]));
        assert!(sign_flip_needed(&[-0.5, 0.5]));
        assert!(!sign_flip_needed(&[0.5, -0.5]));
    }

    #[test]
    fn input_rows_are_validated() {
        let p = DMatrix::from_row_slice(2, 2, &[0.5, 0.4, 0.5, 0.5]);
        assert!(matches!(ReversibleKernel::from_dense(&p, &[0.5, 0.5]), Err(Error::InvalidKernel(_))));
        let neg = DMatrix::from_row_slice(2, 2, &[1.5, -0.5, 0.5, 0.5]);
        assert!(matches!(ReversibleKernel::from_dense(&neg, &[0.5, 0.5]), Err(Error::InvalidKernel(_))));
    }
}
