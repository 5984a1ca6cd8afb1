//! Hitting-time statistics.
//!
//! * single-robot mean hitting matrices, unit and weighted travel times;
//! * the Kemeny constant by the eigenvalue route, independent of the
//!   hitting-matrix route;
//! * team hitting times for several independent robots, solved matrix-free
//!   over the Kronecker product chain;
//! * pursuer–evader meeting times, with finiteness decided on the product
//!   graph and reported in-band.

use nalgebra::{Complex, DMatrix, DVector};
use serde::Serialize;

use crate::chain::{stationary_distribution, StrategyMatrix};
use crate::error::{PatrolError, Result};
use crate::graph::{SurveillanceGraph, VisitDistribution};
use crate::par;

/// Eigenvalues closer than this to 1 are treated as the Perron root.
pub const PERRON_TOL: f64 = 1e-9;

/// Default budget on `n^(N+1)` for team hitting tables.
pub const TEAM_ENTRY_CAP: u128 = 1_000_000;

#[derive(Debug, Clone, Serialize)]
pub struct HittingSummary {
    /// Mean hitting matrix, `m[(i, j)] = E[T_ij]`.
    #[serde(serialize_with = "ser_matrix")]
    pub m: DMatrix<f64>,
    /// Kemeny constant (unit weights) or weighted mean hitting time.
    pub kemeny: f64,
    /// Diagonal of `m`: expected return times.
    pub expected_returns: Vec<f64>,
}

fn ser_matrix<S: serde::Serializer>(m: &DMatrix<f64>, s: S) -> std::result::Result<S::Ok, S::Error> {
    use serde::ser::SerializeSeq;
    let mut seq = s.serialize_seq(Some(m.nrows()))?;
    for i in 0..m.nrows() {
        let row: Vec<f64> = m.row(i).iter().copied().collect();
        seq.serialize_element(&row)?;
    }
    seq.end()
}

/// Solves `m_ij = r_i + Σ_{k≠j} p_ik m_kj` for every `(i, j)`.
///
/// One deleted-column solve per target: `(I − P₋ⱼ) m₋ⱼ = r₋ⱼ`, then the
/// diagonal entry from the same recursion.
fn hitting_matrix(p: &DMatrix<f64>, r: &DVector<f64>) -> Result<DMatrix<f64>> {
    let n = p.nrows();
    let columns = par::map_indexed(n, |j| -> Result<DVector<f64>> {
        let keep: Vec<usize> = (0..n).filter(|&k| k != j).collect();
        let mut col = DVector::zeros(n);
        if !keep.is_empty() {
            let a = DMatrix::from_fn(n - 1, n - 1, |a, b| {
                let v = -p[(keep[a], keep[b])];
                if a == b { 1.0 + v } else { v }
            });
            let rhs = DVector::from_fn(n - 1, |a, _| r[keep[a]]);
            let x = a
                .lu()
                .solve(&rhs)
                .ok_or_else(|| PatrolError::Reducible(format!("target {j} is not reachable from every node")))?;
            for (a, &k) in keep.iter().enumerate() {
                col[k] = x[a];
            }
        }
        col[j] = r[j] + keep.iter().map(|&k| p[(j, k)] * col[k]).sum::<f64>();
        if col.iter().any(|v| !v.is_finite() || *v <= 0.0) {
            return Err(PatrolError::Reducible(format!("hitting times to {j} are not finite")));
        }
        Ok(col)
    });
    let mut m = DMatrix::zeros(n, n);
    for (j, c) in columns.into_iter().enumerate() {
        m.set_column(j, &c?);
    }
    Ok(m)
}

fn require_irreducible(p: &StrategyMatrix) -> Result<()> {
    if p.is_irreducible() {
        Ok(())
    } else {
        Err(PatrolError::Reducible("support digraph is not strongly connected".into()))
    }
}

/// Mean hitting matrix `M = 11ᵀ + P(M − diag M)` and the Kemeny constant `(Mπ)₁`.
pub fn mean_hitting_times(p: &StrategyMatrix) -> Result<HittingSummary> {
    require_irreducible(p)?;
    let n = p.n();
    let pi = stationary_distribution(p)?;
    let m = hitting_matrix(p.matrix(), &DVector::from_element(n, 1.0))?;
    let kemeny = (0..n).map(|j| pi[j] * m[(0, j)]).sum();
    let expected_returns = m.diagonal().iter().copied().collect();
    Ok(HittingSummary { m, kemeny, expected_returns })
}

/// `1 + Σ_{j≥2} 1/(1 − λ_j)` over the complex spectrum of `P`.
pub fn kemeny_constant(p: &StrategyMatrix) -> Result<f64> {
    require_irreducible(p)?;
    let schur = nalgebra::linalg::Schur::try_new(p.matrix().clone(), 1e-14, 100_000)
        .ok_or_else(|| PatrolError::Numerical("Schur decomposition did not converge".into()))?;
    let eig = schur.complex_eigenvalues();
    let one = Complex::new(1.0, 0.0);
    let perron = eig
        .iter()
        .enumerate()
        .min_by(|a, b| (a.1 - one).norm().total_cmp(&(b.1 - one).norm()))
        .map(|(k, _)| k)
        .ok_or_else(|| PatrolError::Numerical("empty spectrum".into()))?;
    if (eig[perron] - one).norm() > PERRON_TOL {
        return Err(PatrolError::Numerical(format!(
            "no eigenvalue within {PERRON_TOL:e} of 1 (closest {})",
            eig[perron]
        )));
    }
    let mut total = Complex::new(1.0, 0.0);
    for (k, lambda) in eig.iter().enumerate() {
        if k != perron {
            let d = one - lambda;
            if d.norm() < PERRON_TOL {
                return Err(PatrolError::Reducible("eigenvalue 1 is not simple".into()));
            }
            total += one / d;
        }
    }
    Ok(total.re)
}

/// `(P∘W)1`: expected travel time of one step from each node.
pub fn expected_step_times(p: &StrategyMatrix, g: &SurveillanceGraph) -> Result<DVector<f64>> {
    let n = p.n();
    if g.n() != n {
        return Err(PatrolError::DimensionMismatch { expected: g.n(), got: n });
    }
    let mut r = DVector::zeros(n);
    for i in 0..n {
        for j in 0..n {
            let pij = p.get(i, j);
            if pij != 0.0 {
                let w = g.weight(i, j).ok_or_else(|| {
                    PatrolError::InvalidMatrix(format!("p[{i}][{j}] > 0 outside the edge set"))
                })?;
                r[i] += pij * f64::from(w);
            }
        }
    }
    Ok(r)
}

/// Weighted mean hitting matrix `Mʷ = (P∘W)11ᵀ + P(Mʷ − diag Mʷ)`.
///
/// `kemeny` holds `Σ_ij π_i π_j mʷ_ij`, which factors as
/// `(πᵀ(P∘W)1) · M(P)`.
pub fn weighted_mean_hitting_times(p: &StrategyMatrix, g: &SurveillanceGraph) -> Result<HittingSummary> {
    require_irreducible(p)?;
    let r = expected_step_times(p, g)?;
    let pi = stationary_distribution(p)?;
    let m = hitting_matrix(p.matrix(), &r)?;
    let n = p.n();
    let mut kemeny = 0.0;
    for i in 0..n {
        for j in 0..n {
            kemeny += pi[i] * pi[j] * m[(i, j)];
        }
    }
    #[cfg(debug_assertions)]
    {
        let unit = hitting_matrix(p.matrix(), &DVector::from_element(n, 1.0))?;
        let k: f64 = (0..n).map(|j| pi[j] * unit[(0, j)]).sum();
        let c: f64 = (0..n).map(|i| pi[i] * r[i]).sum();
        debug_assert!(
            (kemeny - c * k).abs() <= 1e-8 * kemeny.abs().max(1.0),
            "weighted factorization violated: {kemeny} vs {}",
            c * k
        );
    }
    let expected_returns = m.diagonal().iter().copied().collect();
    Ok(HittingSummary { m, kemeny, expected_returns })
}

/// `πᵀ(P∘W)1`: mean travel time of one step in stationarity.
pub fn mean_step_time(p: &StrategyMatrix, g: &SurveillanceGraph, pi: &VisitDistribution) -> Result<f64> {
    let r = expected_step_times(p, g)?;
    Ok((0..p.n()).map(|i| pi[i] * r[i]).sum())
}

#[derive(Debug, Clone, Serialize)]
pub struct TeamHittingTable {
    pub robots: usize,
    pub n: usize,
    /// `n^N × n`; row index `Σ_h i_h n^(N−1−h)`, so the last robot cycles fastest.
    #[serde(serialize_with = "ser_matrix")]
    pub m: DMatrix<f64>,
}

impl TeamHittingTable {
    /// Row index of a configuration of robot locations.
    pub fn row_of(&self, config: &[usize]) -> usize {
        config.iter().fold(0, |acc, &i| acc * self.n + i)
    }

    pub fn get(&self, config: &[usize], target: usize) -> f64 {
        self.m[(self.row_of(config), target)]
    }
}

/// Applies `P¹ ⊗ … ⊗ Pᴺ` to a vector over configurations without forming it.
fn kron_apply(ps: &[&DMatrix<f64>], x: &[f64], scratch: &mut Vec<f64>) -> Vec<f64> {
    let n = ps[0].nrows();
    let total = x.len();
    let mut cur = x.to_vec();
    scratch.resize(total, 0.0);
    // axis h has stride n^(N-1-h)
    for (h, p) in ps.iter().enumerate() {
        let stride = n.pow((ps.len() - 1 - h) as u32);
        let block = stride * n;
        for out in scratch.iter_mut() {
            *out = 0.0;
        }
        for base in (0..total).step_by(block) {
            for off in 0..stride {
                for i in 0..n {
                    let mut acc = 0.0;
                    for k in 0..n {
                        let pik = p[(i, k)];
                        if pik != 0.0 {
                            acc += pik * cur[base + k * stride + off];
                        }
                    }
                    scratch[base + i * stride + off] = acc;
                }
            }
        }
        std::mem::swap(&mut cur, scratch);
    }
    cur
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// BiCGSTAB for `A x = b` with a matrix-free operator.
fn bicgstab<F: FnMut(&[f64]) -> Vec<f64>>(mut apply: F, b: &[f64], tol: f64, max_iter: usize) -> Result<Vec<f64>> {
    let len = b.len();
    let bnorm = dot(b, b).sqrt().max(f64::MIN_POSITIVE);
    let mut x = b.to_vec();
    let ax = apply(&x);
    let mut r: Vec<f64> = b.iter().zip(&ax).map(|(bi, ai)| bi - ai).collect();
    let r_hat = r.clone();
    let (mut rho, mut alpha, mut omega) = (1.0, 1.0, 1.0);
    let mut v = vec![0.0; len];
    let mut p = vec![0.0; len];
    let mut res = dot(&r, &r).sqrt() / bnorm;
    for _ in 0..max_iter {
        if res <= tol {
            return Ok(x);
        }
        let rho_new = dot(&r_hat, &r);
        if rho_new.abs() < 1e-300 {
            break;
        }
        let beta = (rho_new / rho) * (alpha / omega);
        rho = rho_new;
        for k in 0..len {
            p[k] = r[k] + beta * (p[k] - omega * v[k]);
        }
        v = apply(&p);
        alpha = rho / dot(&r_hat, &v);
        let s: Vec<f64> = (0..len).map(|k| r[k] - alpha * v[k]).collect();
        if dot(&s, &s).sqrt() / bnorm <= tol {
            for k in 0..len {
                x[k] += alpha * p[k];
            }
            return Ok(x);
        }
        let t = apply(&s);
        let tt = dot(&t, &t);
        if tt == 0.0 {
            break;
        }
        omega = dot(&t, &s) / tt;
        for k in 0..len {
            x[k] += alpha * p[k] + omega * s[k];
            r[k] = s[k] - omega * t[k];
        }
        res = dot(&r, &r).sqrt() / bnorm;
    }
    // verify the true residual before giving up
    let ax = apply(&x);
    let true_res = b.iter().zip(&ax).map(|(bi, ai)| (bi - ai).powi(2)).sum::<f64>().sqrt() / bnorm;
    if true_res <= tol * 10.0 {
        Ok(x)
    } else {
        Err(PatrolError::NotConverged { iterations: max_iter, residual: true_res })
    }
}

/// Mean time until at least one of `N` independent robots reaches each target.
///
/// Solves `vec(M) = (I − (I ⊗ P¹ ⊗ … ⊗ Pᴺ)(I − E))⁻¹ 1` one target column at a
/// time with a matrix-free Krylov solver.
pub fn team_hitting_times(ps: &[StrategyMatrix], cap: u128) -> Result<TeamHittingTable> {
    let robots = ps.len();
    if robots == 0 {
        return Err(PatrolError::InvalidArgument("at least one robot is required".into()));
    }
    let n = ps[0].n();
    for p in ps {
        if p.n() != n {
            return Err(PatrolError::DimensionMismatch { expected: n, got: p.n() });
        }
        require_irreducible(p)?;
    }
    let entries = (n as u128).checked_pow(robots as u32 + 1).unwrap_or(u128::MAX);
    if entries > cap {
        return Err(PatrolError::BudgetExceeded { entries, cap });
    }
    let configs = n.pow(robots as u32);
    let mats: Vec<&DMatrix<f64>> = ps.iter().map(|p| p.matrix()).collect();
    let contains = |c: usize, j: usize| {
        let mut c = c;
        for _ in 0..robots {
            if c % n == j {
                return true;
            }
            c /= n;
        }
        false
    };
    let columns = par::map_indexed(n, |j| -> Result<Vec<f64>> {
        let mask: Vec<f64> = (0..configs).map(|c| if contains(c, j) { 0.0 } else { 1.0 }).collect();
        let mut scratch = Vec::new();
        let apply = |x: &[f64]| {
            let masked: Vec<f64> = x.iter().zip(&mask).map(|(a, m)| a * m).collect();
            let kx = kron_apply(&mats, &masked, &mut scratch);
            x.iter().zip(&kx).map(|(a, b)| a - b).collect::<Vec<f64>>()
        };
        let b = vec![1.0; configs];
        let x = bicgstab(apply, &b, 1e-13, 20 * configs + 200)?;
        if x.iter().any(|v| !v.is_finite() || *v < 1.0 - 1e-9) {
            return Err(PatrolError::Numerical(format!("team hitting solve for target {j} is singular")));
        }
        Ok(x)
    });
    let mut m = DMatrix::zeros(configs, n);
    for (j, col) in columns.into_iter().enumerate() {
        let col = col?;
        for (c, v) in col.into_iter().enumerate() {
            m[(c, j)] = v;
        }
    }
    Ok(TeamHittingTable { robots, n, m })
}

#[derive(Debug, Clone, Serialize)]
pub struct MeetingSummary {
    /// `m[(i, j)]`: pursuer starts at `i`, evader at `j`; `+∞` where not finite.
    #[serde(serialize_with = "ser_matrix")]
    pub m: DMatrix<f64>,
    pub finite: Vec<Vec<bool>>,
    /// `π_pᵀ M π_e`, when both distributions are supplied.
    pub expected: Option<f64>,
}

/// Pair states `(k, h)`, `k ≠ h`, from which the agents meet with probability one.
///
/// A pair state is bad if it cannot reach the diagonal, or can reach such a
/// state through off-diagonal moves.
pub(crate) fn meeting_good_states(pp: &DMatrix<f64>, pe: &DMatrix<f64>) -> Vec<bool> {
    let n = pp.nrows();
    let idx = |a: usize, b: usize| a * n + b;
    // predecessors in the product graph
    let mut preds: Vec<Vec<usize>> = vec![Vec::new(); n * n];
    for i in 0..n {
        for j in 0..n {
            for k in 0..n {
                if pp[(i, k)] <= 0.0 {
                    continue;
                }
                for h in 0..n {
                    if pe[(j, h)] > 0.0 {
                        preds[idx(k, h)].push(idx(i, j));
                    }
                }
            }
        }
    }
    // states that can reach the diagonal (diagonal absorbs)
    let mut reaches = vec![false; n * n];
    let mut stack: Vec<usize> = (0..n).map(|k| idx(k, k)).collect();
    for &s in &stack {
        reaches[s] = true;
    }
    while let Some(s) = stack.pop() {
        for &q in &preds[s] {
            if q / n != q % n && !reaches[q] {
                reaches[q] = true;
                stack.push(q);
            }
        }
    }
    // bad: off-diagonal states that reach a non-reaching state via off-diagonal moves
    let mut bad = vec![false; n * n];
    let mut stack: Vec<usize> = (0..n * n).filter(|&s| !reaches[s]).collect();
    for &s in &stack {
        bad[s] = true;
    }
    while let Some(s) = stack.pop() {
        for &q in &preds[s] {
            if q / n != q % n && !bad[q] {
                bad[q] = true;
                stack.push(q);
            }
        }
    }
    (0..n * n).map(|s| s / n != s % n && !bad[s]).collect()
}

/// Mean meeting times `M = 11ᵀ + Pᵖ(M − diag M)Pᵉᵀ` of a pursuer and an evader.
///
/// Entries that are infinite (the agents fail to meet with positive
/// probability) are reported as `+∞` with `finite = false`.
pub fn meeting_times(
    pp: &StrategyMatrix,
    pe: &StrategyMatrix,
    pi_p: Option<&VisitDistribution>,
    pi_e: Option<&VisitDistribution>,
) -> Result<MeetingSummary> {
    let n = pp.n();
    if pe.n() != n {
        return Err(PatrolError::DimensionMismatch { expected: n, got: pe.n() });
    }
    for pi in [pi_p, pi_e].into_iter().flatten() {
        if pi.len() != n {
            return Err(PatrolError::DimensionMismatch { expected: n, got: pi.len() });
        }
    }
    let (a, b) = (pp.matrix(), pe.matrix());
    let good = meeting_good_states(a, b);
    let states: Vec<usize> = (0..n * n).filter(|&s| good[s]).collect();
    let mut pos = vec![usize::MAX; n * n];
    for (k, &s) in states.iter().enumerate() {
        pos[s] = k;
    }
    let kron = |s: usize, t: usize| a[(s / n, t / n)] * b[(s % n, t % n)];
    let dim = states.len();
    let values = if dim > 0 {
        let sys = DMatrix::from_fn(dim, dim, |r, c| {
            let v = -kron(states[r], states[c]);
            if r == c { 1.0 + v } else { v }
        });
        sys.lu()
            .solve(&DVector::from_element(dim, 1.0))
            .ok_or_else(|| PatrolError::Numerical("singular meeting-time system".into()))?
    } else {
        DVector::zeros(0)
    };
    let mut m = DMatrix::from_element(n, n, f64::INFINITY);
    let mut finite = vec![vec![false; n]; n];
    for i in 0..n {
        for j in 0..n {
            let s = i * n + j;
            let mut acc = 1.0;
            let mut ok = true;
            for k in 0..n {
                if a[(i, k)] <= 0.0 {
                    continue;
                }
                for h in 0..n {
                    if b[(j, h)] <= 0.0 || k == h {
                        continue;
                    }
                    let t = k * n + h;
                    if pos[t] == usize::MAX {
                        ok = false;
                    } else {
                        acc += kron(s, t) * values[pos[t]];
                    }
                }
            }
            if ok {
                m[(i, j)] = acc;
                finite[i][j] = true;
            }
        }
    }
    let expected = match (pi_p, pi_e) {
        (Some(pp_), Some(pe_)) => {
            let mut total = 0.0;
            for i in 0..n {
                for j in 0..n {
                    let w = pp_[i] * pe_[j];
                    if w > 0.0 {
                        total += w * m[(i, j)];
                    }
                }
            }
            Some(total)
        }
        _ => None,
    };
    Ok(MeetingSummary { m, finite, expected })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_cycle() -> StrategyMatrix {
        StrategyMatrix::from_rows(&[vec![0.0, 1.0], vec![1.0, 0.0]]).unwrap()
    }

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn two_cycle_hitting() {
        let h = mean_hitting_times(&two_cycle()).unwrap();
        assert_eq!(h.m, DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 1.0, 2.0]));
        assert!(close(h.kemeny, 1.5, 1e-15));
        assert!(close(kemeny_constant(&two_cycle()).unwrap(), 1.5, 1e-12));
    }

    #[test]
    fn uniform_rank_one_kemeny_is_n() {
        for n in 1..7 {
            let p = StrategyMatrix::rank_one(&VisitDistribution::uniform(n));
            assert!(close(kemeny_constant(&p).unwrap(), n as f64, 1e-10));
            assert!(close(mean_hitting_times(&p).unwrap().kemeny, n as f64, 1e-10));
        }
    }

    #[test]
    fn reducible_inputs_rejected() {
        let p = StrategyMatrix::identity(3);
        assert!(matches!(mean_hitting_times(&p), Err(PatrolError::Reducible(_))));
        assert!(matches!(kemeny_constant(&p), Err(PatrolError::Reducible(_))));
    }

    #[test]
    fn weighted_two_cycle_by_hand() {
        let g = SurveillanceGraph::from_edges(2, &[(0, 1, 2), (1, 0, 3)]).unwrap();
        let h = weighted_mean_hitting_times(&two_cycle(), &g).unwrap();
        assert!(close(h.m[(0, 1)], 2.0, 1e-14));
        assert!(close(h.m[(1, 0)], 3.0, 1e-14));
        assert!(close(h.m[(0, 0)], 5.0, 1e-14));
        assert!(close(h.m[(1, 1)], 5.0, 1e-14));
        assert!(close(h.kemeny, 3.75, 1e-14));
    }

    #[test]
    fn weighted_rejects_off_edge_mass() {
        let g = SurveillanceGraph::from_edges(2, &[(0, 1, 2), (1, 0, 3)]).unwrap();
        let p = StrategyMatrix::from_rows(&[vec![0.5, 0.5], vec![1.0, 0.0]]).unwrap();
        assert!(weighted_mean_hitting_times(&p, &g).is_err());
    }

    #[test]
    fn team_two_cycles_by_hand() {
        let t = team_hitting_times(&[two_cycle(), two_cycle()], TEAM_ENTRY_CAP).unwrap();
        assert_eq!(t.m.nrows(), 4);
        assert!(close(t.get(&[0, 1], 0), 1.0, 1e-12));
        assert!(close(t.get(&[0, 0], 0), 2.0, 1e-12));
        assert!(close(t.get(&[1, 1], 0), 1.0, 1e-12));
        assert!(t.m.iter().all(|&v| v >= 1.0 - 1e-12));
    }

    #[test]
    fn team_budget() {
        let p = StrategyMatrix::rank_one(&VisitDistribution::uniform(9));
        let four = vec![p.clone(); 4];
        assert!(team_hitting_times(&four, TEAM_ENTRY_CAP).is_ok());
        let six = vec![p; 6];
        assert!(matches!(
            team_hitting_times(&six, TEAM_ENTRY_CAP),
            Err(PatrolError::BudgetExceeded { .. })
        ));
    }

    #[test]
    fn team_single_robot_matches_single_hitting() {
        let p = StrategyMatrix::from_rows(&[
            vec![0.1, 0.6, 0.3],
            vec![0.4, 0.2, 0.4],
            vec![0.5, 0.25, 0.25],
        ])
        .unwrap();
        let t = team_hitting_times(std::slice::from_ref(&p), TEAM_ENTRY_CAP).unwrap();
        let h = mean_hitting_times(&p).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                assert!(close(t.m[(i, j)], h.m[(i, j)], 1e-10));
            }
        }
    }

    #[test]
    fn meeting_two_cycles_without_loops() {
        let s = meeting_times(&two_cycle(), &two_cycle(), None, None).unwrap();
        assert!(s.finite[0][0] && s.finite[1][1]);
        assert!(!s.finite[0][1] && !s.finite[1][0]);
        assert_eq!(s.m[(0, 0)], 1.0);
        assert_eq!(s.m[(0, 1)], f64::INFINITY);
        let pi = VisitDistribution::uniform(2);
        assert_eq!(meeting_times(&two_cycle(), &two_cycle(), Some(&pi), Some(&pi)).unwrap().expected, Some(f64::INFINITY));
    }

    #[test]
    fn meeting_with_loops_is_finite() {
        let lazy = StrategyMatrix::from_rows(&[vec![0.5, 0.5], vec![0.5, 0.5]]).unwrap();
        let s = meeting_times(&lazy, &lazy, None, None).unwrap();
        assert!(s.finite.iter().flatten().all(|&f| f));
        // meet each step with probability 1/2
        assert!(s.m.iter().all(|&v| close(v, 2.0, 1e-12)));
    }

    #[test]
    fn meeting_against_stationary_evader_is_hitting() {
        let p = StrategyMatrix::from_rows(&[
            vec![0.0, 0.7, 0.3],
            vec![0.2, 0.3, 0.5],
            vec![0.6, 0.4, 0.0],
        ])
        .unwrap();
        let s = meeting_times(&p, &StrategyMatrix::identity(3), None, None).unwrap();
        let h = mean_hitting_times(&p).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                assert!(close(s.m[(i, j)], h.m[(i, j)], 1e-12));
            }
        }
    }

    #[test]
    fn meeting_with_partially_transient_escape_is_infinite() {
        // pursuer on node 0 may jump into the 1<->2 cycle in step with the
        // evader and then never meet it
        let pp = StrategyMatrix::from_rows(&[
            vec![0.5, 0.5, 0.0],
            vec![0.0, 0.0, 1.0],
            vec![0.0, 1.0, 0.0],
        ])
        .unwrap();
        let pe = StrategyMatrix::from_rows(&[
            vec![0.0, 0.0, 1.0],
            vec![0.0, 0.0, 1.0],
            vec![0.0, 1.0, 0.0],
        ])
        .unwrap();
        let s = meeting_times(&pp, &pe, None, None).unwrap();
        // from (0, 1): with prob. 1/2 move to (1, 2), which alternates with the
        // evader forever; with prob. 1/2 to (0, 2)
        assert!(!s.finite[0][1]);
        assert!(s.m[(0, 1)].is_infinite());
    }
}
