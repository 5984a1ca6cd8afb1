//! Patrol environments: strongly connected directed graphs with integer
//! travel times, target visit distributions, and the two built-in datasets
//! (a lattice with self loops and a 12-location city map).

use std::collections::VecDeque;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{PatrolError, Result};

/// Tolerance on `Σπ = 1` accepted by [`VisitDistribution::new`].
pub const DISTRIBUTION_SUM_TOL: f64 = 1e-12;

/// Weighted directed graph on nodes `0..n`.
///
/// Weights are positive integers on edges and zero elsewhere. Unweighted
/// graphs carry all-ones weights so every algorithm runs the same code path.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SurveillanceGraph {
    n: usize,
    // row-major n×n, 0 = no edge
    weights: Vec<u32>,
}

impl SurveillanceGraph {
    /// Builds a graph from `(from, to, weight)` triples.
    ///
    /// Rejects out-of-range nodes, zero weights, duplicate edges and edge
    /// sets that are not strongly connected.
    pub fn from_edges(n: usize, edges: &[(usize, usize, u32)]) -> Result<Self> {
        if n == 0 {
            return Err(PatrolError::InvalidGraph("graph has no nodes".into()));
        }
        let mut weights = vec![0u32; n * n];
        for &(i, j, w) in edges {
            if i >= n || j >= n {
                return Err(PatrolError::InvalidGraph(format!(
                    "edge ({i},{j}) out of range for n={n}"
                )));
            }
            if w == 0 {
                return Err(PatrolError::InvalidGraph(format!(
                    "edge ({i},{j}) has non-positive weight"
                )));
            }
            if weights[i * n + j] != 0 {
                return Err(PatrolError::InvalidGraph(format!("duplicate edge ({i},{j})")));
            }
            weights[i * n + j] = w;
        }
        let g = Self { n, weights };
        if !g.is_strongly_connected() {
            return Err(PatrolError::InvalidGraph("edge set is not strongly connected".into()));
        }
        Ok(g)
    }

    /// Builds a graph from an n×n row-major weight table; zero entries mean no edge.
    pub fn from_weight_table(n: usize, table: &[u32]) -> Result<Self> {
        if table.len() != n * n {
            return Err(PatrolError::DimensionMismatch { expected: n * n, got: table.len() });
        }
        let edges: Vec<_> = (0..n)
            .flat_map(|i| (0..n).map(move |j| (i, j)))
            .filter_map(|(i, j)| {
                let w = table[i * n + j];
                (w > 0).then_some((i, j, w))
            })
            .collect();
        Self::from_edges(n, &edges)
    }

    /// Builds an unweighted graph (unit travel times).
    pub fn unweighted(n: usize, edges: &[(usize, usize)]) -> Result<Self> {
        let e: Vec<_> = edges.iter().map(|&(i, j)| (i, j, 1)).collect();
        Self::from_edges(n, &e)
    }

    /// Complete digraph, optionally with self loops, unit weights.
    pub fn complete(n: usize, self_loops: bool) -> Result<Self> {
        let edges: Vec<_> = (0..n)
            .flat_map(|i| (0..n).map(move |j| (i, j)))
            .filter(|&(i, j)| self_loops || i != j)
            .collect();
        Self::unweighted(n, &edges)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn has_edge(&self, i: usize, j: usize) -> bool {
        self.weights[i * self.n + j] != 0
    }

    /// Travel time of edge `(i, j)`, or `None` off the edge set.
    pub fn weight(&self, i: usize, j: usize) -> Option<u32> {
        match self.weights[i * self.n + j] {
            0 => None,
            w => Some(w),
        }
    }

    /// Binary adjacency matrix, row-major.
    pub fn adjacency(&self) -> Vec<u8> {
        self.weights.iter().map(|&w| u8::from(w != 0)).collect()
    }

    /// Weight matrix as reals, zero off the edge set.
    pub fn weight_matrix(&self) -> nalgebra::DMatrix<f64> {
        nalgebra::DMatrix::from_fn(self.n, self.n, |i, j| f64::from(self.weights[i * self.n + j]))
    }

    pub fn out_neighbors(&self, i: usize) -> impl Iterator<Item = usize> + '_ {
        (0..self.n).filter(move |&j| self.has_edge(i, j))
    }

    pub fn out_degree(&self, i: usize) -> usize {
        self.out_neighbors(i).count()
    }

    pub fn max_out_degree(&self) -> usize {
        (0..self.n).map(|i| self.out_degree(i)).max().unwrap_or(0)
    }

    /// All edges as `(from, to, weight)` in row-major order.
    pub fn edges(&self) -> Vec<(usize, usize, u32)> {
        (0..self.n)
            .flat_map(|i| (0..self.n).map(move |j| (i, j)))
            .filter_map(|(i, j)| self.weight(i, j).map(|w| (i, j, w)))
            .collect()
    }

    pub fn edge_count(&self) -> usize {
        self.weights.iter().filter(|&&w| w != 0).count()
    }

    pub fn max_weight(&self) -> u32 {
        self.weights.iter().copied().max().unwrap_or(0)
    }

    pub fn is_unweighted(&self) -> bool {
        self.weights.iter().all(|&w| w <= 1)
    }

    /// True when the edge set (not the weights) is symmetric.
    pub fn is_symmetric(&self) -> bool {
        (0..self.n).all(|i| (0..self.n).all(|j| self.has_edge(i, j) == self.has_edge(j, i)))
    }

    pub fn has_all_self_loops(&self) -> bool {
        (0..self.n).all(|i| self.has_edge(i, i))
    }

    /// Forward and backward BFS from node 0 both reach every node.
    pub fn is_strongly_connected(&self) -> bool {
        let n = self.n;
        let reach = |forward: bool| {
            let mut seen = vec![false; n];
            let mut queue = VecDeque::from([0usize]);
            seen[0] = true;
            while let Some(u) = queue.pop_front() {
                for v in 0..n {
                    let e = if forward { self.has_edge(u, v) } else { self.has_edge(v, u) };
                    if e && !seen[v] {
                        seen[v] = true;
                        queue.push_back(v);
                    }
                }
            }
            seen.into_iter().all(|s| s)
        };
        reach(true) && reach(false)
    }

    /// Shortest travel time from `i` to every node (Dijkstra), `None` if unreachable.
    /// The entry for `i` itself is 0.
    pub fn shortest_times_from(&self, i: usize) -> Vec<Option<u64>> {
        let n = self.n;
        let mut dist: Vec<Option<u64>> = vec![None; n];
        let mut done = vec![false; n];
        dist[i] = Some(0);
        for _ in 0..n {
            let u = (0..n)
                .filter(|&u| !done[u] && dist[u].is_some())
                .min_by_key(|&u| dist[u].unwrap());
            let Some(u) = u else { break };
            done[u] = true;
            let du = dist[u].unwrap();
            for (v, w) in self.out_neighbors(u).map(|v| (v, self.weight(u, v).unwrap())) {
                let cand = du + u64::from(w);
                if dist[v].is_none_or(|d| cand < d) {
                    dist[v] = Some(cand);
                }
            }
        }
        dist
    }

    /// Graphviz text, one `i -> j [label=w]` line per edge.
    pub fn to_dot(&self) -> String {
        let mut out = String::from("digraph patrol {\n");
        for i in 0..self.n {
            let _ = writeln!(out, "  {i};");
        }
        for (i, j, w) in self.edges() {
            let _ = writeln!(out, "  {i} -> {j} [label={w}];");
        }
        out.push_str("}\n");
        out
    }
}

/// Target stationary distribution: strictly positive, sums to one.
#[derive(Debug, Clone, PartialEq)]
pub struct VisitDistribution(Vec<f64>);

impl VisitDistribution {
    pub fn new(pi: Vec<f64>) -> Result<Self> {
        if pi.is_empty() {
            return Err(PatrolError::InvalidDistribution("empty vector".into()));
        }
        if let Some(bad) = pi.iter().find(|&&p| !(p > 0.0) || !p.is_finite()) {
            return Err(PatrolError::InvalidDistribution(format!(
                "entries must be positive and finite, found {bad}"
            )));
        }
        let sum: f64 = pi.iter().sum();
        if (sum - 1.0).abs() > DISTRIBUTION_SUM_TOL {
            return Err(PatrolError::InvalidDistribution(format!(
                "entries sum to {sum}, not 1"
            )));
        }
        Ok(Self(pi))
    }

    /// Normalizes positive weights (e.g. crime counts) into a distribution.
    pub fn from_weights(w: &[f64]) -> Result<Self> {
        let sum: f64 = w.iter().sum();
        if !(sum > 0.0) {
            return Err(PatrolError::InvalidDistribution("weights must have positive sum".into()));
        }
        Self::new(w.iter().map(|x| x / sum).collect())
    }

    pub fn uniform(n: usize) -> Self {
        Self(vec![1.0 / n as f64; n])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn to_dvector(&self) -> nalgebra::DVector<f64> {
        nalgebra::DVector::from_column_slice(&self.0)
    }

    pub fn min(&self) -> f64 {
        self.0.iter().copied().fold(f64::INFINITY, f64::min)
    }
}

impl std::ops::Index<usize> for VisitDistribution {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

/// `rows × cols` 4-neighbour lattice with unit weights; node `r*cols + c`.
pub fn make_grid(rows: usize, cols: usize, self_loops: bool) -> Result<SurveillanceGraph> {
    if rows == 0 || cols == 0 {
        return Err(PatrolError::InvalidArgument("grid needs rows, cols >= 1".into()));
    }
    let id = |r: usize, c: usize| r * cols + c;
    let mut edges = Vec::new();
    for r in 0..rows {
        for c in 0..cols {
            if self_loops {
                edges.push((id(r, c), id(r, c)));
            }
            if c + 1 < cols {
                edges.push((id(r, c), id(r, c + 1)));
                edges.push((id(r, c + 1), id(r, c)));
            }
            if r + 1 < rows {
                edges.push((id(r, c), id(r + 1, c)));
                edges.push((id(r + 1, c), id(r, c)));
            }
        }
    }
    SurveillanceGraph::unweighted(rows * cols, &edges)
}

/// Uniform visit distribution over the nodes of `g`.
pub fn grid_uniform_pi(g: &SurveillanceGraph) -> VisitDistribution {
    VisitDistribution::uniform(g.n())
}

/// Location labels of the city dataset, in table order.
pub const SF_LABELS: [&str; 12] = ["A", "B", "C", "D", "E", "F", "G", "H", "I", "J", "K", "L"];

/// Quantized by-car travel times in minutes, rows = from, columns = to.
#[rustfmt::skip]
pub const SF_TRAVEL_TIMES: [[u32; 12]; 12] = [
    [1, 3, 3, 5, 4, 6, 3, 5, 7, 4, 6, 6],
    [3, 1, 5, 4, 2, 4, 4, 5, 5, 3, 5, 5],
    [3, 5, 1, 7, 6, 8, 3, 4, 9, 4, 8, 7],
    [6, 4, 7, 1, 5, 6, 4, 7, 5, 6, 6, 7],
    [4, 3, 6, 5, 1, 3, 5, 5, 6, 3, 4, 4],
    [6, 4, 8, 5, 3, 1, 6, 7, 3, 6, 2, 3],
    [2, 5, 3, 5, 6, 7, 1, 5, 7, 5, 7, 8],
    [3, 5, 2, 7, 6, 7, 3, 1, 9, 3, 7, 5],
    [8, 6, 9, 4, 6, 4, 6, 9, 1, 8, 5, 7],
    [4, 3, 4, 6, 3, 5, 5, 3, 7, 1, 5, 3],
    [6, 4, 8, 6, 4, 2, 6, 6, 4, 5, 1, 3],
    [6, 4, 6, 6, 3, 3, 6, 4, 5, 3, 2, 1],
];

/// Recorded crime counts per location; the visit distribution is proportional.
pub const SF_CRIME_COUNTS: [u32; 12] = [133, 90, 89, 87, 83, 83, 74, 64, 48, 43, 38, 34];

/// The 12-location complete city graph and its crime-proportional distribution.
pub fn sf_dataset() -> (SurveillanceGraph, VisitDistribution) {
    let table: Vec<u32> = SF_TRAVEL_TIMES.iter().flatten().copied().collect();
    let g = SurveillanceGraph::from_weight_table(12, &table).expect("built-in table is valid");
    let total: u32 = SF_CRIME_COUNTS.iter().sum();
    let pi = SF_CRIME_COUNTS.iter().map(|&c| f64::from(c) / f64::from(total)).collect();
    (g, VisitDistribution::new(pi).expect("built-in distribution is valid"))
}

/// On-disk JSON form: `{n, edges: [[i, j, w], ...], pi: [...]}`, 0-based.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GraphFile {
    pub n: usize,
    pub edges: Vec<[u64; 3]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pi: Option<Vec<f64>>,
}

impl GraphFile {
    pub fn from_parts(g: &SurveillanceGraph, pi: Option<&VisitDistribution>) -> Self {
        Self {
            n: g.n(),
            edges: g
                .edges()
                .into_iter()
                .map(|(i, j, w)| [i as u64, j as u64, u64::from(w)])
                .collect(),
            pi: pi.map(|p| p.as_slice().to_vec()),
        }
    }

    pub fn into_parts(self) -> Result<(SurveillanceGraph, Option<VisitDistribution>)> {
        let edges = self
            .edges
            .iter()
            .map(|&[i, j, w]| {
                let w = u32::try_from(w)
                    .map_err(|_| PatrolError::InvalidGraph(format!("weight {w} too large")))?;
                Ok((i as usize, j as usize, w))
            })
            .collect::<Result<Vec<_>>>()?;
        let g = SurveillanceGraph::from_edges(self.n, &edges)?;
        let pi = match self.pi {
            Some(p) => {
                if p.len() != g.n() {
                    return Err(PatrolError::DimensionMismatch { expected: g.n(), got: p.len() });
                }
                Some(VisitDistribution::new(p)?)
            }
            None => None,
        };
        Ok((g, pi))
    }
}

pub fn graph_to_json(g: &SurveillanceGraph, pi: Option<&VisitDistribution>) -> Result<String> {
    Ok(serde_json::to_string_pretty(&GraphFile::from_parts(g, pi))?)
}

pub fn graph_from_json(text: &str) -> Result<(SurveillanceGraph, Option<VisitDistribution>)> {
    serde_json::from_str::<GraphFile>(text)?.into_parts()
}

pub fn load_graph(path: &Path) -> Result<(SurveillanceGraph, Option<VisitDistribution>)> {
    graph_from_json(&std::fs::read_to_string(path)?)
}

/// Reads a distribution stored either as a bare JSON array or as `{"pi": [...]}`.
pub fn distribution_from_json(text: &str) -> Result<VisitDistribution> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum PiFile {
        Bare(Vec<f64>),
        Wrapped { pi: Vec<f64> },
    }
    let v = match serde_json::from_str::<PiFile>(text)? {
        PiFile::Bare(v) | PiFile::Wrapped { pi: v } => v,
    };
    VisitDistribution::new(v)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_3x3_with_loops() {
        let g = make_grid(3, 3, true).unwrap();
        assert_eq!(g.n(), 9);
        assert_eq!(g.edge_count(), 24 + 9);
        assert!(g.has_all_self_loops());
        assert!(g.is_symmetric());
        assert!(g.is_unweighted());
    }

    #[test]
    fn grid_single_node() {
        let g = make_grid(1, 1, true).unwrap();
        assert_eq!(g.n(), 1);
        assert_eq!(g.edges(), vec![(0, 0, 1)]);
    }

    #[test]
    fn grid_single_node_without_loop_is_trivially_connected() {
        let g = make_grid(1, 1, false).unwrap();
        assert_eq!(g.edge_count(), 0);
    }

    #[test]
    fn grid_2x2_without_loops() {
        let g = make_grid(2, 2, false).unwrap();
        assert_eq!(g.n(), 4);
        assert_eq!(g.edge_count(), 8);
        assert!(g.is_strongly_connected());
        assert!((0..4).all(|i| !g.has_edge(i, i)));
    }

    #[test]
    fn grid_edge_count_formula() {
        for r in 1..6 {
            for c in 1..6 {
                let lattice = 2 * (r * (c - 1) + c * (r - 1));
                assert_eq!(make_grid(r, c, false).unwrap().edge_count(), lattice);
                assert_eq!(make_grid(r, c, true).unwrap().edge_count(), lattice + r * c);
            }
        }
    }

    #[test]
    fn sf_table_entries() {
        let (g, pi) = sf_dataset();
        assert_eq!(g.n(), 12);
        assert_eq!(g.edge_count(), 144);
        // A -> D and D -> A differ
        assert_eq!(g.weight(0, 3), Some(5));
        assert_eq!(g.weight(3, 0), Some(6));
        assert!((0..12).all(|i| g.weight(i, i) == Some(1)));
        assert_eq!(g.max_weight(), 9);
        assert_eq!(pi[0], 133.0 / 866.0);
        assert_eq!(pi[11], 34.0 / 866.0);
        for (i, row) in SF_TRAVEL_TIMES.iter().enumerate() {
            for (j, &w) in row.iter().enumerate() {
                assert_eq!(g.weight(i, j), Some(w));
            }
        }
    }

    #[test]
    fn uniform_pi() {
        let g = make_grid(3, 3, true).unwrap();
        let pi = grid_uniform_pi(&g);
        assert!(pi.as_slice().iter().all(|&p| p == 1.0 / 9.0));
        assert_eq!(grid_uniform_pi(&make_grid(1, 1, true).unwrap()).as_slice(), &[1.0]);
        let (sf, _) = sf_dataset();
        assert!(grid_uniform_pi(&sf).as_slice().iter().all(|&p| p == 1.0 / 12.0));
    }

    #[test]
    fn rejects_disconnected() {
        let err = SurveillanceGraph::unweighted(3, &[(0, 1), (1, 0), (2, 2)]).unwrap_err();
        assert!(matches!(err, PatrolError::InvalidGraph(_)));
    }

    #[test]
    fn rejects_zero_weight_and_duplicates() {
        assert!(SurveillanceGraph::from_edges(2, &[(0, 1, 0), (1, 0, 1)]).is_err());
        assert!(SurveillanceGraph::from_edges(2, &[(0, 1, 1), (0, 1, 1), (1, 0, 1)]).is_err());
    }

    #[test]
    fn distribution_checks() {
        assert!(VisitDistribution::new(vec![0.5, 0.5]).is_ok());
        assert!(VisitDistribution::new(vec![1.0, 0.0]).is_err());
        assert!(VisitDistribution::new(vec![0.5, 0.4]).is_err());
        assert!(VisitDistribution::new(vec![]).is_err());
    }

    #[test]
    fn json_round_trip() {
        let (g, pi) = sf_dataset();
        let text = graph_to_json(&g, Some(&pi)).unwrap();
        let (g2, pi2) = graph_from_json(&text).unwrap();
        assert_eq!(g, g2);
        assert_eq!(pi2.unwrap(), pi);
    }

    #[test]
    fn json_without_pi() {
        let (g, pi) = graph_from_json(r#"{"n":2,"edges":[[0,1,2],[1,0,3]]}"#).unwrap();
        assert_eq!(g.weight(0, 1), Some(2));
        assert!(pi.is_none());
    }

    #[test]
    fn dot_output_lists_edges() {
        let g = make_grid(1, 2, false).unwrap();
        let dot = g.to_dot();
        assert!(dot.starts_with("digraph"));
        assert!(dot.contains("0 -> 1 [label=1];"));
        assert!(dot.contains("1 -> 0 [label=1];"));
    }

    #[test]
    fn shortest_times() {
        let g = SurveillanceGraph::from_edges(3, &[(0, 1, 2), (1, 2, 3), (2, 0, 1), (0, 2, 7)]).unwrap();
        let d = g.shortest_times_from(0);
        assert_eq!(d, vec![Some(0), Some(2), Some(5)]);
    }
}
