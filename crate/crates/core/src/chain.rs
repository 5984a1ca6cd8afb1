//! Transition matrices: validation, stationary distributions, reversibility,
//! and a Metropolis–Hastings construction of a feasible starting chain.

use std::collections::VecDeque;
use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{PatrolError, Result};
use crate::graph::{SurveillanceGraph, VisitDistribution};

pub const ROW_SUM_TOL: f64 = 1e-9;
pub const STATIONARY_TOL: f64 = 1e-8;
pub const DETAILED_BALANCE_TOL: f64 = 1e-8;

/// Square matrix of transition probabilities.
///
/// Construction only checks shape and finiteness; stochasticity and support
/// are reported by [`validate`] so that near-miss matrices can be diagnosed.
#[derive(Debug, Clone, PartialEq)]
pub struct StrategyMatrix(DMatrix<f64>);

impl StrategyMatrix {
    pub fn new(p: DMatrix<f64>) -> Result<Self> {
        if p.nrows() != p.ncols() {
            return Err(PatrolError::InvalidMatrix(format!(
                "matrix is {}x{}, expected square",
                p.nrows(),
                p.ncols()
            )));
        }
        if p.nrows() == 0 {
            return Err(PatrolError::InvalidMatrix("empty matrix".into()));
        }
        if p.iter().any(|x| !x.is_finite()) {
            return Err(PatrolError::InvalidMatrix("non-finite entry".into()));
        }
        Ok(Self(p))
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        if let Some(r) = rows.iter().find(|r| r.len() != n) {
            return Err(PatrolError::DimensionMismatch { expected: n, got: r.len() });
        }
        Self::new(DMatrix::from_fn(n, n, |i, j| rows[i][j]))
    }

    pub fn identity(n: usize) -> Self {
        Self(DMatrix::identity(n, n))
    }

    /// Rank-one chain `1 πᵀ`: every row equals π.
    pub fn rank_one(pi: &VisitDistribution) -> Self {
        let n = pi.len();
        Self(DMatrix::from_fn(n, n, |_, j| pi[j]))
    }

    pub fn n(&self) -> usize {
        self.0.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.0
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.0[(i, j)]
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        (0..self.n()).map(|i| self.0.row(i).iter().copied().collect()).collect()
    }

    /// True when the digraph `{(i,j) : p_ij > 0}` is strongly connected.
    pub fn is_irreducible(&self) -> bool {
        support_strongly_connected(&self.0)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        for i in 0..self.n() {
            let row: Vec<String> = (0..self.n()).map(|j| format!("{:e}", self.0[(i, j)])).collect();
            let _ = writeln!(out, "{}", row.join(","));
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let rows = text
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with('#'))
            .map(|l| {
                l.split(',')
                    .map(|t| {
                        t.trim()
                            .parse::<f64>()
                            .map_err(|e| PatrolError::Parse(format!("bad number {t:?}: {e}")))
                    })
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        Self::from_rows(&rows)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(&ChainFile { n: self.n(), rows: self.rows() })?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let f: ChainFile = serde_json::from_str(text)?;
        if f.rows.len() != f.n {
            return Err(PatrolError::DimensionMismatch { expected: f.n, got: f.rows.len() });
        }
        Self::from_rows(&f.rows)
    }
}

/// JSON form of a strategy: `{n, rows: [[...], ...]}`.
#[derive(Debug, Serialize, Deserialize)]
pub struct ChainFile {
    pub n: usize,
    pub rows: Vec<Vec<f64>>,
}

pub(crate) fn support_strongly_connected(p: &DMatrix<f64>) -> bool {
    let n = p.nrows();
    let reach = |forward: bool| {
        let mut seen = vec![false; n];
        let mut queue = VecDeque::from([0usize]);
        seen[0] = true;
        while let Some(u) = queue.pop_front() {
            for v in 0..n {
                let e = if forward { p[(u, v)] > 0.0 } else { p[(v, u)] > 0.0 };
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

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ValidationReport {
    pub row_stochastic: bool,
    pub support_ok: bool,
    pub irreducible: bool,
    /// `None` when no target distribution was supplied.
    pub stationary_ok: Option<bool>,
    pub reversible: Option<bool>,
    /// Largest violation over every check that was run.
    pub max_violation: f64,
}

impl ValidationReport {
    /// All checks that were run passed.
    pub fn all_ok(&self) -> bool {
        self.row_stochastic
            && self.support_ok
            && self.irreducible
            && self.stationary_ok.unwrap_or(true)
            && self.reversible.unwrap_or(true)
    }
}

/// `‖πᵀP − πᵀ‖_∞`.
pub fn stationarity_residual(p: &StrategyMatrix, pi: &VisitDistribution) -> f64 {
    let n = p.n();
    (0..n)
        .map(|j| {
            let s: f64 = (0..n).map(|i| pi[i] * p.get(i, j)).sum();
            (s - pi[j]).abs()
        })
        .fold(0.0, f64::max)
}

/// `max_ij |π_i p_ij − π_j p_ji|`.
pub fn detailed_balance_residual(p: &StrategyMatrix, pi: &VisitDistribution) -> f64 {
    let n = p.n();
    let mut worst = 0.0f64;
    for i in 0..n {
        for j in (i + 1)..n {
            worst = worst.max((pi[i] * p.get(i, j) - pi[j] * p.get(j, i)).abs());
        }
    }
    worst
}

pub fn validate(
    p: &StrategyMatrix,
    g: &SurveillanceGraph,
    pi: Option<&VisitDistribution>,
) -> Result<ValidationReport> {
    let n = p.n();
    if g.n() != n {
        return Err(PatrolError::DimensionMismatch { expected: g.n(), got: n });
    }
    if let Some(pi) = pi {
        if pi.len() != n {
            return Err(PatrolError::DimensionMismatch { expected: n, got: pi.len() });
        }
    }
    let m = p.matrix();
    let mut max_violation = 0.0f64;

    let row_dev = (0..n)
        .map(|i| (m.row(i).sum() - 1.0).abs())
        .fold(0.0, f64::max);
    let neg = m.iter().map(|&x| (-x).max(0.0)).fold(0.0, f64::max);
    max_violation = max_violation.max(row_dev).max(neg);
    let row_stochastic = row_dev <= ROW_SUM_TOL && neg == 0.0;

    let off_support = (0..n)
        .flat_map(|i| (0..n).map(move |j| (i, j)))
        .filter(|&(i, j)| !g.has_edge(i, j))
        .map(|(i, j)| m[(i, j)].abs())
        .fold(0.0, f64::max);
    max_violation = max_violation.max(off_support);
    let support_ok = off_support == 0.0;

    let irreducible = p.is_irreducible();

    let (stationary_ok, reversible) = match pi {
        Some(pi) => {
            let s = stationarity_residual(p, pi);
            let r = detailed_balance_residual(p, pi);
            max_violation = max_violation.max(s).max(r);
            (Some(s <= STATIONARY_TOL), Some(r <= DETAILED_BALANCE_TOL))
        }
        None => (None, None),
    };

    Ok(ValidationReport { row_stochastic, support_ok, irreducible, stationary_ok, reversible, max_violation })
}

/// Unique stationary distribution of an irreducible chain.
///
/// Solves `(Pᵀ − I) π = 0` with the last equation replaced by `1ᵀπ = 1`.
pub fn stationary_distribution(p: &StrategyMatrix) -> Result<VisitDistribution> {
    if !p.is_irreducible() {
        return Err(PatrolError::Reducible("support digraph is not strongly connected".into()));
    }
    let n = p.n();
    let mut a = p.matrix().transpose() - DMatrix::identity(n, n);
    let mut b = DVector::zeros(n);
    for j in 0..n {
        a[(n - 1, j)] = 1.0;
    }
    b[n - 1] = 1.0;
    let x = a
        .lu()
        .solve(&b)
        .ok_or_else(|| PatrolError::Numerical("singular stationary system".into()))?;
    if x.iter().any(|&v| !(v > 0.0)) {
        return Err(PatrolError::Numerical("stationary solve produced a non-positive entry".into()));
    }
    let sum = x.sum();
    VisitDistribution::new(x.iter().map(|v| v / sum).collect())
}

pub fn is_reversible(p: &StrategyMatrix, pi: &VisitDistribution) -> bool {
    detailed_balance_residual(p, pi) <= DETAILED_BALANCE_TOL
}

/// Metropolis–Hastings chain with stationary distribution `pi`.
///
/// Proposals are uniform over out-neighbours other than the node itself and
/// accepted with probability `min(1, π_j d_i / (π_i d_j))`; rejected mass
/// stays on the self loop.
pub fn metropolis_hastings(g: &SurveillanceGraph, pi: &VisitDistribution) -> Result<StrategyMatrix> {
    let n = g.n();
    if pi.len() != n {
        return Err(PatrolError::DimensionMismatch { expected: n, got: pi.len() });
    }
    if !g.has_all_self_loops() {
        return Err(PatrolError::InvalidGraph("Metropolis-Hastings needs a self loop at every node".into()));
    }
    if !g.is_symmetric() {
        return Err(PatrolError::InvalidGraph("Metropolis-Hastings needs a symmetric edge set".into()));
    }
    let deg: Vec<usize> = (0..n).map(|i| g.out_neighbors(i).filter(|&j| j != i).count()).collect();
    let mut p = DMatrix::zeros(n, n);
    for i in 0..n {
        let mut moved = 0.0;
        for j in g.out_neighbors(i).filter(|&j| j != i) {
            let ratio = (pi[j] * deg[i] as f64) / (pi[i] * deg[j] as f64);
            let pij = ratio.min(1.0) / deg[i] as f64;
            p[(i, j)] = pij;
            moved += pij;
        }
        // moved can exceed 1 by an ulp when every proposal is accepted
        p[(i, i)] = (1.0 - moved).max(0.0);
    }
    StrategyMatrix::new(p)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::make_grid;

    fn two_cycle() -> StrategyMatrix {
        StrategyMatrix::from_rows(&[vec![0.0, 1.0], vec![1.0, 0.0]]).unwrap()
    }

    #[test]
    fn identity_is_reducible() {
        let g = SurveillanceGraph::complete(2, true).unwrap();
        let r = validate(&StrategyMatrix::identity(2), &g, None).unwrap();
        assert!(r.row_stochastic);
        assert!(!r.irreducible);
        assert!(!r.all_ok());
    }

    #[test]
    fn two_cycle_all_flags() {
        let g = SurveillanceGraph::complete(2, false).unwrap();
        let pi = VisitDistribution::uniform(2);
        let r = validate(&two_cycle(), &g, Some(&pi)).unwrap();
        assert!(r.all_ok());
        assert_eq!(r.stationary_ok, Some(true));
        assert_eq!(r.reversible, Some(true));
    }

    #[test]
    fn short_row_detected() {
        let g = SurveillanceGraph::complete(2, true).unwrap();
        let p = StrategyMatrix::from_rows(&[vec![0.499, 0.5], vec![0.5, 0.5]]).unwrap();
        let r = validate(&p, &g, None).unwrap();
        assert!(!r.row_stochastic);
        assert!((r.max_violation - 1e-3).abs() < 1e-12);
    }

    #[test]
    fn off_support_detected() {
        let g = SurveillanceGraph::complete(2, false).unwrap();
        let p = StrategyMatrix::from_rows(&[vec![0.5, 0.5], vec![1.0, 0.0]]).unwrap();
        assert!(!validate(&p, &g, None).unwrap().support_ok);
    }

    #[test]
    fn dimension_mismatch() {
        let g = SurveillanceGraph::complete(3, true).unwrap();
        assert!(matches!(
            validate(&two_cycle(), &g, None),
            Err(PatrolError::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn stationary_of_two_cycle_and_rank_one() {
        let pi = stationary_distribution(&two_cycle()).unwrap();
        assert!((pi[0] - 0.5).abs() < 1e-15 && (pi[1] - 0.5).abs() < 1e-15);

        let target = VisitDistribution::new(vec![0.2, 0.3, 0.5]).unwrap();
        let got = stationary_distribution(&StrategyMatrix::rank_one(&target)).unwrap();
        for i in 0..3 {
            assert!((got[i] - target[i]).abs() < 1e-14);
        }
    }

    #[test]
    fn stationary_rejects_reducible() {
        assert!(matches!(
            stationary_distribution(&StrategyMatrix::identity(3)),
            Err(PatrolError::Reducible(_))
        ));
    }

    #[test]
    fn reversibility_examples() {
        let sym = StrategyMatrix::from_rows(&[
            vec![0.2, 0.5, 0.3],
            vec![0.5, 0.1, 0.4],
            vec![0.3, 0.4, 0.3],
        ])
        .unwrap();
        assert!(is_reversible(&sym, &VisitDistribution::uniform(3)));
        let cycle = StrategyMatrix::from_rows(&[
            vec![0.0, 1.0, 0.0],
            vec![0.0, 0.0, 1.0],
            vec![1.0, 0.0, 0.0],
        ])
        .unwrap();
        assert!(!is_reversible(&cycle, &VisitDistribution::uniform(3)));
    }

    #[test]
    fn mh_two_node_hand_values() {
        let g = SurveillanceGraph::complete(2, true).unwrap();
        let pi = VisitDistribution::new(vec![2.0 / 3.0, 1.0 / 3.0]).unwrap();
        let p = metropolis_hastings(&g, &pi).unwrap();
        assert!((p.get(0, 1) - 0.5).abs() < 1e-15);
        assert!((p.get(0, 0) - 0.5).abs() < 1e-15);
        assert!((p.get(1, 0) - 1.0).abs() < 1e-15);
        assert!(p.get(1, 1).abs() < 1e-15);
        assert!(stationarity_residual(&p, &pi) < 1e-15);
    }

    #[test]
    fn mh_complete_uniform() {
        let n = 5;
        let g = SurveillanceGraph::complete(n, true).unwrap();
        let p = metropolis_hastings(&g, &VisitDistribution::uniform(n)).unwrap();
        for i in 0..n {
            for j in 0..n {
                let expect = if i == j { 0.0 } else { 1.0 / (n - 1) as f64 };
                assert!((p.get(i, j) - expect).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn mh_requires_loops_and_symmetry() {
        let g = make_grid(2, 2, false).unwrap();
        assert!(metropolis_hastings(&g, &VisitDistribution::uniform(4)).is_err());
        let g = SurveillanceGraph::unweighted(2, &[(0, 0), (1, 1), (0, 1), (1, 0)]).unwrap();
        assert!(metropolis_hastings(&g, &VisitDistribution::uniform(2)).is_ok());
        let g = SurveillanceGraph::unweighted(3, &[(0, 0), (1, 1), (2, 2), (0, 1), (1, 2), (2, 0)]).unwrap();
        assert!(metropolis_hastings(&g, &VisitDistribution::uniform(3)).is_err());
    }

    #[test]
    fn csv_and_json_round_trip() {
        let p = StrategyMatrix::from_rows(&[vec![0.25, 0.75], vec![1.0 / 3.0, 2.0 / 3.0]]).unwrap();
        assert_eq!(StrategyMatrix::from_csv(&p.to_csv()).unwrap(), p);
        assert_eq!(StrategyMatrix::from_json(&p.to_json().unwrap()).unwrap(), p);
        assert!(StrategyMatrix::from_csv("0.5,0.5\n1.0\n").is_err());
        assert!(StrategyMatrix::from_csv("0.5,abc\n1.0,0\n").is_err());
    }
}
