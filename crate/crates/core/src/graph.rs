//! Undirected weighted graphs with dense node ids.
//!
//! Ingestion remaps arbitrary integer ids onto `0..N` in ascending order of the
//! original id, so the result does not depend on the order of the input lines.
//! The original ids are retained as labels for reporting.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::io::BufRead;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Immutable undirected graph without self-loops or parallel edges.
#[derive(Debug, Clone, PartialEq)]
pub struct Graph {
    adjacency: Vec<Vec<(usize, f64)>>,
    labels: Vec<i64>,
    edge_count: usize,
}

impl Graph {
    /// Builds a graph on `node_count` nodes labelled `0..node_count`.
    ///
    /// Repeated edges (in either orientation) collapse onto the first
    /// occurrence. Self-loops and non-positive weights are rejected.
    pub fn from_edges(node_count: usize, edges: &[(usize, usize, f64)]) -> Result<Self> {
        let labels = (0..node_count as i64).collect();
        Self::from_labelled_edges(labels, edges.iter().copied())
    }

    fn from_labelled_edges(
        labels: Vec<i64>,
        edges: impl IntoIterator<Item = (usize, usize, f64)>,
    ) -> Result<Self> {
        let n = labels.len();
        let mut canonical: BTreeMap<(usize, usize), f64> = BTreeMap::new();
        for (i, j, w) in edges {
            for node in [i, j] {
                if node >= n {
                    return Err(Error::NodeOutOfRange { node, node_count: n });
                }
            }
            if i == j {
                return Err(Error::SelfLoop { line: 0, node: labels[i] });
            }
            if !(w.is_finite() && w > 0.0) {
                return Err(Error::Config(format!("edge ({i}, {j}) has non-positive weight {w}")));
            }
            canonical.entry((i.min(j), i.max(j))).or_insert(w);
        }
        if canonical.is_empty() {
            return Err(Error::EmptyGraph);
        }
        let mut adjacency = vec![Vec::new(); n];
        for (&(i, j), &w) in &canonical {
            adjacency[i].push((j, w));
            adjacency[j].push((i, w));
        }
        for row in &mut adjacency {
            row.sort_by_key(|&(j, _)| j);
        }
        Ok(Self { adjacency, labels, edge_count: canonical.len() })
    }

    pub fn node_count(&self) -> usize {
        self.adjacency.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edge_count
    }

    /// Original id of every node, indexed by dense id.
    pub fn labels(&self) -> &[i64] {
        &self.labels
    }

    /// Neighbours of `i` with edge weights, sorted by neighbour id.
    pub fn neighbors(&self, i: usize) -> &[(usize, f64)] {
        &self.adjacency[i]
    }

    pub fn weight(&self, i: usize, j: usize) -> Option<f64> {
        let row = self.adjacency.get(i)?;
        row.binary_search_by_key(&j, |&(k, _)| k).ok().map(|pos| row[pos].1)
    }

    /// Sum of incident edge weights.
    pub fn degree(&self, i: usize) -> Result<f64> {
        let row = self
            .adjacency
            .get(i)
            .ok_or(Error::NodeOutOfRange { node: i, node_count: self.node_count() })?;
        Ok(row.iter().map(|&(_, w)| w).sum())
    }

    pub fn degrees(&self) -> Vec<f64> {
        self.adjacency.iter().map(|row| row.iter().map(|&(_, w)| w).sum()).collect()
    }

    /// Every edge once, as `(i, j, weight)` with `i < j`, in lexicographic order.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        self.adjacency
            .iter()
            .enumerate()
            .flat_map(|(i, row)| row.iter().filter(move |&&(j, _)| j > i).map(move |&(j, w)| (i, j, w)))
    }

    /// Connected components, each sorted ascending, ordered by smallest member.
    pub fn components(&self) -> Vec<Vec<usize>> {
        let n = self.node_count();
        let mut seen = vec![false; n];
        let mut out = Vec::new();
        let mut queue = VecDeque::new();
        for start in 0..n {
            if seen[start] {
                continue;
            }
            seen[start] = true;
            queue.push_back(start);
            let mut members = Vec::new();
            while let Some(u) = queue.pop_front() {
                members.push(u);
                for &(v, _) in &self.adjacency[u] {
                    if !seen[v] {
                        seen[v] = true;
                        queue.push_back(v);
                    }
                }
            }
            members.sort_unstable();
            out.push(members);
        }
        out
    }

    pub fn is_connected(&self) -> bool {
        self.components().len() == 1
    }

    /// Returns an error naming the component count unless the graph is connected.
    pub fn ensure_connected(&self) -> Result<()> {
        match self.components().len() {
            1 => Ok(()),
            components => Err(Error::Disconnected { components }),
        }
    }

    /// True when the graph admits a proper 2-colouring.
    pub fn is_bipartite(&self) -> bool {
        let n = self.node_count();
        let mut colour: Vec<Option<bool>> = vec![None; n];
        let mut queue = VecDeque::new();
        for start in 0..n {
            if colour[start].is_some() {
                continue;
            }
            colour[start] = Some(false);
            queue.push_back(start);
            while let Some(u) = queue.pop_front() {
                let cu = colour[u].unwrap();
                for &(v, _) in &self.adjacency[u] {
                    match colour[v] {
                        None => {
                            colour[v] = Some(!cu);
                            queue.push_back(v);
                        }
                        Some(cv) if cv == cu => return false,
                        Some(_) => {}
                    }
                }
            }
        }
        true
    }

    /// Subgraph induced by `nodes` (ascending dense ids), relabelled contiguously.
    fn induced(&self, nodes: &[usize]) -> Result<Self> {
        let mut remap = vec![usize::MAX; self.node_count()];
        for (new, &old) in nodes.iter().enumerate() {
            remap[old] = new;
        }
        let labels = nodes.iter().map(|&i| self.labels[i]).collect();
        let edges: Vec<_> = self
            .edges()
            .filter(|&(i, j, _)| remap[i] != usize::MAX && remap[j] != usize::MAX)
            .map(|(i, j, w)| (remap[i], remap[j], w))
            .collect();
        Self::from_labelled_edges(labels, edges)
    }
}

/// Reads a whitespace-separated edge list.
///
/// Lines whose first non-blank character is `#` are comments, blank lines are
/// skipped, and every other line must hold exactly two integer node ids.
pub fn load_edge_list<R: BufRead>(reader: R) -> Result<Graph> {
    let mut pairs = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line.map_err(|e| Error::Parse { line: line_no, message: e.to_string() })?;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let tokens: Vec<&str> = line.split_whitespace().collect();
        if tokens.len() != 2 {
            return Err(Error::Parse {
                line: line_no,
                message: format!("expected two node ids, found {} tokens", tokens.len()),
            });
        }
        let mut ids = [0i64; 2];
        for (slot, tok) in ids.iter_mut().zip(&tokens) {
            *slot = tok.parse().map_err(|_| Error::Parse {
                line: line_no,
                message: format!("invalid node id {tok:?}"),
            })?;
        }
        if ids[0] == ids[1] {
            return Err(Error::SelfLoop { line: line_no, node: ids[0] });
        }
        pairs.push((ids[0], ids[1]));
    }
    if pairs.is_empty() {
        return Err(Error::EmptyGraph);
    }
    let labels: Vec<i64> = pairs
        .iter()
        .flat_map(|&(a, b)| [a, b])
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let index: BTreeMap<i64, usize> = labels.iter().enumerate().map(|(i, &l)| (l, i)).collect();
    let edges = pairs.iter().map(|(a, b)| (index[a], index[b], 1.0));
    Graph::from_labelled_edges(labels, edges)
}

/// Convenience wrapper around [`load_edge_list`] for in-memory text.
pub fn parse_edge_list(text: &str) -> Result<Graph> {
    load_edge_list(text.as_bytes())
}

/// Subgraph induced by the largest connected component.
///
/// Ties go to the component holding the smallest original id. Dense ids in
/// the result keep the relative order of the input.
pub fn largest_connected_component(g: &Graph) -> Graph {
    let components = g.components();
    if components.len() == 1 {
        return g.clone();
    }
    let best = components
        .iter()
        .max_by(|a, b| {
            let min_label = |c: &Vec<usize>| c.iter().map(|&i| g.labels[i]).min().unwrap();
            a.len().cmp(&b.len()).then_with(|| min_label(b).cmp(&min_label(a)))
        })
        .expect("graph has at least one node");
    g.induced(best).expect("a component of a graph with edges keeps at least one edge")
}

/// Uniform random simple graph with exactly `m` edges on `n` nodes, reduced to
/// its largest connected component.
pub fn erdos_renyi(n: usize, m: usize, seed: u64) -> Result<Graph> {
    let max = n.saturating_mul(n.saturating_sub(1)) / 2;
    if m > max {
        return Err(Error::InfeasibleEdgeCount { nodes: n, edges: m, max });
    }
    if m == 0 {
        return Err(Error::EmptyGraph);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut picked = rand::seq::index::sample(&mut rng, max, m).into_vec();
    picked.sort_unstable();
    let edges: Vec<_> = picked
        .into_iter()
        .map(|k| {
            let (i, j) = pair_from_index(n, k);
            (i, j, 1.0)
        })
        .collect();
    let g = Graph::from_edges(n, &edges)?;
    Ok(largest_connected_component(&g))
}

/// Inverse of the row-major enumeration of pairs `(i, j)`, `i < j`.
fn pair_from_index(n: usize, mut k: usize) -> (usize, usize) {
    let mut i = 0;
    while k >= n - 1 - i {
        k -= n - 1 - i;
        i += 1;
    }
    (i, i + 1 + k)
}

/// Complete graph on `n >= 2` nodes.
pub fn complete(n: usize) -> Result<Graph> {
    let edges: Vec<_> = (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j, 1.0))).collect();
    Graph::from_edges(n, &edges)
}

/// Path `0 - 1 - ... - (n-1)`.
pub fn path(n: usize) -> Result<Graph> {
    let edges: Vec<_> = (1..n).map(|i| (i - 1, i, 1.0)).collect();
    Graph::from_edges(n, &edges)
}

/// Random connected graph: a random recursive tree plus independent extra
/// edges with probability `extra`. Weights are 1, or uniform on `[0.5, 2)`
/// when `weighted` is set.
pub fn random_connected<R: Rng + ?Sized>(n: usize, extra: f64, weighted: bool, rng: &mut R) -> Result<Graph> {
    if n < 2 {
        return Err(Error::Config(format!("random connected graph needs n >= 2, got {n}")));
    }
    let weight = |rng: &mut R| if weighted { rng.random_range(0.5..2.0) } else { 1.0 };
    let mut edges = Vec::new();
    for v in 1..n {
        let u = rng.random_range(0..v);
        let w = weight(rng);
        edges.push((u, v, w));
    }
    for i in 0..n {
        for j in i + 1..n {
            if rng.random::<f64>() < extra {
                let w = weight(rng);
                edges.push((i, j, w));
            }
        }
    }
    Graph::from_edges(n, &edges)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn edge_set(g: &Graph) -> Vec<(usize, usize)> {
        g.edges().map(|(i, j, _)| (i, j)).collect()
    }

    #[test]
    fn loads_with_comments() {
        let g = parse_edge_list("# c\n0 1\n1 2").unwrap();
        assert_eq!(g.node_count(), 3);
        assert_eq!(edge_set(&g), vec![(0, 1), (1, 2)]);
    }

    #[test]
    fn reversed_duplicates_collapse() {
        let g = parse_edge_list("0 1\n1 0").unwrap();
        assert_eq!(g.node_count(), 2);
        assert_eq!(g.edge_count(), 1);
    }

    #[test]
    fn self_loop_rejected_with_line() {
        assert_eq!(parse_edge_list("0 0").unwrap_err(), Error::SelfLoop { line: 1, node: 0 });
        assert_eq!(parse_edge_list("# x\n1 2\n5 5\n").unwrap_err(), Error::SelfLoop { line: 3, node: 5 });
    }

    #[test]
    fn malformed_lines_report_line_number() {
        match parse_edge_list("0 1\n1 x\n") {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
        match parse_edge_list("0 1 2\n") {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 1),
            other => panic!("unexpected {other:?}"),
        }
        assert_eq!(parse_edge_list("# only comments\n\n").unwrap_err(), Error::EmptyGraph);
    }

    #[test]
    fn crlf_and_sparse_ids() {
        let g = parse_edge_list("10\t20\r\n20 7\r\n").unwrap();
        assert_eq!(g.labels(), &[7, 10, 20]);
        assert_eq!(edge_set(&g), vec![(0, 2), (1, 2)]);
    }

    #[test]
    fn lcc_picks_largest_component() {
        let g = Graph::from_edges(5, &[(0, 1, 1.0), (2, 3, 1.0), (3, 4, 1.0)]).unwrap();
        let lcc = largest_connected_component(&g);
        assert_eq!(lcc.node_count(), 3);
        assert_eq!(lcc.labels(), &[2, 3, 4]);
        assert_eq!(edge_set(&lcc), vec![(0, 1), (1, 2)]);
        assert!(lcc.is_connected());
    }

    #[test]
    fn lcc_tie_goes_to_smallest_label() {
        let g = parse_edge_list("8 9\n3 4\n").unwrap();
        let lcc = largest_connected_component(&g);
        assert_eq!(lcc.labels(), &[3, 4]);
    }

    #[test]
    fn lcc_of_connected_is_identity() {
        let g = path(4).unwrap();
        assert_eq!(largest_connected_component(&g), g);
        let single = parse_edge_list("0 1").unwrap();
        assert_eq!(largest_connected_component(&single), single);
    }

    #[test]
    fn degrees() {
        let g = path(3).unwrap();
        assert_eq!(g.degree(1).unwrap(), 2.0);
        assert_eq!(g.degree(0).unwrap(), 1.0);
        assert!(matches!(g.degree(3), Err(Error::NodeOutOfRange { .. })));
        let w = Graph::from_edges(3, &[(0, 1, 2.0), (1, 2, 3.0)]).unwrap();
        assert_eq!(w.degree(1).unwrap(), 5.0);
    }

    #[test]
    fn erdos_renyi_complete_and_deterministic() {
        let k4 = erdos_renyi(4, 6, 1).unwrap();
        assert_eq!(k4.edge_count(), 6);
        assert_eq!(k4.node_count(), 4);
        let a = erdos_renyi(50, 120, 9).unwrap();
        let b = erdos_renyi(50, 120, 9).unwrap();
        assert_eq!(a, b);
        assert!(a.is_connected());
        assert!(matches!(erdos_renyi(4, 7, 0), Err(Error::InfeasibleEdgeCount { .. })));
    }

    #[test]
    fn erdos_renyi_large_instance_is_connected() {
        let g = erdos_renyi(889, 3927, 2023).unwrap();
        assert!(g.node_count() <= 889);
        assert!(g.is_connected());
    }

    #[test]
    fn pair_enumeration_is_bijective() {
        let n = 7;
        let mut seen = BTreeSet::new();
        for k in 0..n * (n - 1) / 2 {
            let (i, j) = pair_from_index(n, k);
            assert!(i < j && j < n);
            assert!(seen.insert((i, j)));
        }
    }

    #[test]
    fn bipartite_detection() {
        assert!(path(5).unwrap().is_bipartite());
        assert!(!complete(3).unwrap().is_bipartite());
    }
}
