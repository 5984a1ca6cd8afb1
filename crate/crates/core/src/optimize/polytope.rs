//! The feasible set of strategies and Euclidean projection onto it.
//!
//! Decision variables are the transition probabilities on the graph's edges,
//! in row-major edge order. The set is the intersection of an affine
//! subspace (row sums, stationarity, optionally detailed balance) and the
//! box `x ≥ ε`. Projections solve the dual by semismooth Newton, with
//! Dykstra's alternating scheme as a fallback.

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use crate::chain::StrategyMatrix;
use crate::error::{PatrolError, Result};
use crate::graph::{SurveillanceGraph, VisitDistribution};

pub const DYKSTRA_TOL: f64 = 1e-10;
pub const DYKSTRA_MAX_SWEEPS: usize = 10_000;
/// Feasibility tolerance checked on every projection output.
pub const FEASIBILITY_TOL: f64 = 1e-8;
const NEWTON_TOL: f64 = 1e-12;
const NEWTON_MAX_ITER: usize = 1000;
/// Newton gives up after this many iterations without a new best residual.
const NEWTON_PATIENCE: usize = 50;

#[derive(Debug, Clone)]
pub struct FeasibleSpec {
    pub graph: SurveillanceGraph,
    pub pi: VisitDistribution,
    /// Lower bound on every supported transition probability.
    pub epsilon: f64,
    pub reversible: bool,
}

impl FeasibleSpec {
    pub fn new(graph: SurveillanceGraph, pi: VisitDistribution, epsilon: f64, reversible: bool) -> Result<Self> {
        if pi.len() != graph.n() {
            return Err(PatrolError::DimensionMismatch { expected: graph.n(), got: pi.len() });
        }
        if !(epsilon >= 0.0) || epsilon * graph.max_out_degree() as f64 > 1.0 {
            return Err(PatrolError::Infeasible(format!(
                "epsilon {epsilon} incompatible with max out-degree {}",
                graph.max_out_degree()
            )));
        }
        Ok(Self { graph, pi, epsilon, reversible })
    }

    pub fn n(&self) -> usize {
        self.graph.n()
    }
}

/// Precomputed projector onto `{x : Cx = d}` plus the box bound.
#[derive(Debug, Clone)]
pub struct Polytope {
    n: usize,
    support: Vec<(usize, usize)>,
    epsilon: f64,
    c: DMatrix<f64>,
    d: DVector<f64>,
    /// Orthonormal basis of the row space of `C`, one column per direction.
    row_basis: DMatrix<f64>,
    /// Minimum-norm solution `C⁺d`.
    offset: DVector<f64>,
}

impl Polytope {
    pub fn new(spec: &FeasibleSpec) -> Result<Self> {
        let g = &spec.graph;
        let n = g.n();
        let pi = &spec.pi;
        let support: Vec<(usize, usize)> = g.edges().into_iter().map(|(i, j, _)| (i, j)).collect();
        let m = support.len();
        let mut index = vec![usize::MAX; n * n];
        for (k, &(i, j)) in support.iter().enumerate() {
            index[i * n + j] = k;
        }
        let mut rows: Vec<(Vec<(usize, f64)>, f64)> = Vec::new();
        for i in 0..n {
            let r = (0..n).filter(|&j| g.has_edge(i, j)).map(|j| (index[i * n + j], 1.0)).collect();
            rows.push((r, 1.0));
        }
        for j in 0..n {
            let r = (0..n).filter(|&i| g.has_edge(i, j)).map(|i| (index[i * n + j], pi[i])).collect();
            rows.push((r, pi[j]));
        }
        if spec.reversible {
            for i in 0..n {
                for j in (i + 1)..n {
                    match (g.has_edge(i, j), g.has_edge(j, i)) {
                        (true, true) => rows.push((
                            vec![(index[i * n + j], pi[i]), (index[j * n + i], -pi[j])],
                            0.0,
                        )),
                        (true, false) => rows.push((vec![(index[i * n + j], 1.0)], 0.0)),
                        (false, true) => rows.push((vec![(index[j * n + i], 1.0)], 0.0)),
                        (false, false) => {}
                    }
                }
            }
        }
        let mut c = DMatrix::zeros(rows.len(), m);
        let mut d = DVector::zeros(rows.len());
        for (r, (entries, rhs)) in rows.into_iter().enumerate() {
            for (k, v) in entries {
                c[(r, k)] = v;
            }
            d[r] = rhs;
        }
        // row space of C from the eigenvectors of CᵀC
        let eig = c.tr_mul(&c).symmetric_eigen();
        let lmax = eig.eigenvalues.amax();
        let tol = lmax * 1e-12 * (m.max(c.nrows()) as f64);
        let keep: Vec<usize> = (0..m).filter(|&k| eig.eigenvalues[k] > tol).collect();
        let row_basis = DMatrix::from_fn(m, keep.len(), |a, b| eig.eigenvectors[(a, keep[b])]);
        let lambda = DVector::from_iterator(keep.len(), keep.iter().map(|&k| eig.eigenvalues[k]));
        // C⁺d = B Λ⁻¹ Bᵀ Cᵀ d, refined once against roundoff
        let pinv = |r: &DVector<f64>| &row_basis * row_basis.tr_mul(&c.tr_mul(r)).component_div(&lambda);
        let mut offset = pinv(&d);
        offset += pinv(&(&d - &c * &offset));
        let residual = (&c * &offset - &d).amax();
        if residual > FEASIBILITY_TOL {
            return Err(PatrolError::Infeasible(format!(
                "equality constraints are inconsistent (residual {residual:.2e})"
            )));
        }
        Ok(Self { n, support, epsilon: spec.epsilon, c, d, row_basis, offset })
    }

    pub fn dim(&self) -> usize {
        self.support.len()
    }

    pub fn support(&self) -> &[(usize, usize)] {
        &self.support
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn to_matrix(&self, x: &DVector<f64>) -> DMatrix<f64> {
        let mut p = DMatrix::zeros(self.n, self.n);
        for (k, &(i, j)) in self.support.iter().enumerate() {
            p[(i, j)] = x[k];
        }
        p
    }

    pub fn from_matrix(&self, p: &DMatrix<f64>) -> DVector<f64> {
        DVector::from_iterator(self.support.len(), self.support.iter().map(|&(i, j)| p[(i, j)]))
    }

    /// Orthogonal projection onto the affine set.
    pub fn project_affine(&self, x: &DVector<f64>) -> DVector<f64> {
        let coef = self.row_basis.tr_mul(x);
        x - &self.row_basis * coef + &self.offset
    }

    /// Projection of a direction onto the tangent space of the affine set.
    pub fn project_tangent(&self, v: &DVector<f64>) -> DVector<f64> {
        let coef = self.row_basis.tr_mul(v);
        v - &self.row_basis * coef
    }

    fn project_box(&self, x: &DVector<f64>) -> DVector<f64> {
        x.map(|v| v.max(self.epsilon))
    }

    /// `‖Cx − d‖_∞`.
    pub fn affine_residual(&self, x: &DVector<f64>) -> f64 {
        (&self.c * x - &self.d).amax()
    }

    /// Euclidean projection onto the polytope.
    ///
    /// Semismooth Newton on the dual of `min ½‖x − q‖²` subject to the
    /// equalities and `x ≥ ε`; the primal point `max(ε, q − Bν)` is exact
    /// once the active set settles. Falls back to [`Polytope::project_dykstra`]
    /// if Newton stalls.
    pub fn project(&self, q: &DVector<f64>) -> Result<DVector<f64>> {
        let mut nu = DVector::zeros(self.row_basis.ncols());
        self.project_warm(q, &mut nu)
    }

    /// As [`Polytope::project`], starting the dual iteration from `nu` and
    /// leaving the final multipliers there.
    pub fn project_warm(&self, q: &DVector<f64>, nu: &mut DVector<f64>) -> Result<DVector<f64>> {
        let (x, ok) = self.project_newton(q, nu);
        if ok {
            return Ok(x);
        }
        nu.fill(0.0);
        match self.project_dykstra(q) {
            Ok(y) => Ok(y),
            Err(e) => {
                if self.affine_residual(&x) <= FEASIBILITY_TOL {
                    Ok(x)
                } else {
                    Err(e)
                }
            }
        }
    }

    /// The Newton solve alone: the last iterate (always inside the box) and
    /// whether it meets the equalities to [`FEASIBILITY_TOL`].
    pub fn project_newton(&self, q: &DVector<f64>, nu: &mut DVector<f64>) -> (DVector<f64>, bool) {
        let b = &self.row_basis;
        let r = b.ncols();
        if nu.len() != r {
            *nu = DVector::zeros(r);
        }
        let e = b.tr_mul(&self.offset);
        let eps = self.epsilon;
        let tol = NEWTON_TOL * q.amax().max(1.0);
        let mut z = q - b * &*nu;
        let mut x = z.map(|v| v.max(eps));
        let mut g = b.tr_mul(&x) - &e;
        let mut best = f64::INFINITY;
        let mut since_best = 0;
        for _ in 0..NEWTON_MAX_ITER {
            let gmax = g.amax();
            if gmax <= tol {
                break;
            }
            if gmax < best {
                best = gmax;
                since_best = 0;
            } else {
                since_best += 1;
                let patience = if best <= 1e-2 * FEASIBILITY_TOL { 5 } else { NEWTON_PATIENCE };
                if since_best > patience {
                    break;
                }
            }
            let mut h = DMatrix::<f64>::zeros(r, r);
            for k in (0..z.len()).filter(|&k| z[k] > eps) {
                let row = b.row(k).transpose();
                h.ger(1.0, &row, &row, 1.0);
            }
            let mu = 1e-10 * h.diagonal().amax().max(1.0);
            for a in 0..r {
                h[(a, a)] += mu;
            }
            let Some(chol) = h.cholesky() else { break };
            let delta = chol.solve(&g);
            let s = b * &delta;
            let Some(t) = exact_dual_step(&z, &s, eps, delta.dot(&e)) else { break };
            if !(t > 0.0) {
                break;
            }
            *nu += &delta * t;
            z = q - b * &*nu;
            x = z.map(|v| v.max(eps));
            g = b.tr_mul(&x) - &e;
        }
        if g.amax() > tol {
            if let Some(y) = self.polish(&x) {
                x = y;
            }
        }
        let ok = self.affine_residual(&x) <= FEASIBILITY_TOL;
        (x, ok)
    }

    /// Smallest change of the free coordinates of `x` (those above `ε`) that
    /// restores the equalities; `None` if it would leave the box.
    fn polish(&self, x: &DVector<f64>) -> Option<DVector<f64>> {
        let b = &self.row_basis;
        let r = b.ncols();
        let e = b.tr_mul(&self.offset);
        let g = b.tr_mul(x) - &e;
        let free: Vec<usize> = (0..x.len()).filter(|&k| x[k] > self.epsilon).collect();
        let mut h = DMatrix::<f64>::zeros(r, r);
        for &k in &free {
            let row = b.row(k).transpose();
            h.ger(1.0, &row, &row, 1.0);
        }
        let eig = h.symmetric_eigen();
        let cut = eig.eigenvalues.amax().max(1.0) * 1e-12;
        let coef = eig.eigenvectors.tr_mul(&g);
        let lam = &eig.eigenvectors * DVector::from_fn(r, |a, _| {
            let l = eig.eigenvalues[a];
            if l > cut { coef[a] / l } else { 0.0 }
        });
        let shift = b * lam;
        let mut y = x.clone();
        for &k in &free {
            y[k] -= shift[k];
        }
        let ok = free.iter().all(|&k| y[k] >= self.epsilon) && self.affine_residual(&y) <= self.affine_residual(x);
        ok.then_some(y)
    }

    /// Dykstra's alternating projections between the affine set and the box,
    /// stopped when successive iterates differ by at most [`DYKSTRA_TOL`] and
    /// the equalities hold to [`FEASIBILITY_TOL`].
    pub fn project_dykstra(&self, q: &DVector<f64>) -> Result<DVector<f64>> {
        let mut x = q.clone();
        let mut corr = DVector::zeros(q.len());
        let mut sweeps = 0;
        loop {
            let y = self.project_affine(&x);
            let shifted = &y + &corr;
            let x_next = self.project_box(&shifted);
            corr = shifted - &x_next;
            let change = (&x_next - &x).amax();
            x = x_next;
            sweeps += 1;
            if change <= DYKSTRA_TOL && self.affine_residual(&x) <= FEASIBILITY_TOL {
                return Ok(x);
            }
            if sweeps >= DYKSTRA_MAX_SWEEPS {
                if self.affine_residual(&x) <= FEASIBILITY_TOL {
                    return Ok(x);
                }
                return Err(PatrolError::NotConverged { iterations: sweeps, residual: change });
            }
        }
    }

    /// Uniform random support-respecting matrix, rows normalized, projected.
    pub fn random_point<R: Rng>(&self, rng: &mut R) -> Result<DVector<f64>> {
        let mut x = DVector::from_fn(self.dim(), |_, _| rng.random::<f64>());
        let mut sums = vec![0.0; self.n];
        for (k, &(i, _)) in self.support.iter().enumerate() {
            sums[i] += x[k];
        }
        for (k, &(i, _)) in self.support.iter().enumerate() {
            x[k] /= sums[i];
        }
        self.project(&x)
    }
}

/// Maximizer of the concave piecewise-quadratic dual along `ν + tΔ`.
///
/// With `z = q − Bν` and `s = BΔ` the directional derivative is
/// `Σ_k s_k max(ε, z_k − t s_k) − Δᵀe`, piecewise linear and nonincreasing in
/// `t`; its root is found between consecutive breakpoints.
fn exact_dual_step(z: &DVector<f64>, s: &DVector<f64>, eps: f64, de: f64) -> Option<f64> {
    let deriv = |t: f64| z.iter().zip(s.iter()).map(|(&zk, &sk)| sk * (zk - t * sk).max(eps)).sum::<f64>() - de;
    let d0 = deriv(0.0);
    if !(d0 > 0.0) {
        return Some(0.0);
    }
    let mut breaks: Vec<f64> = z
        .iter()
        .zip(s.iter())
        .filter(|(_, &sk)| sk != 0.0)
        .map(|(&zk, &sk)| (zk - eps) / sk)
        .filter(|&t| t > 0.0 && t.is_finite())
        .collect();
    breaks.sort_by(f64::total_cmp);
    // first breakpoint where the derivative is no longer positive
    let idx = breaks.partition_point(|&t| deriv(t) > 0.0);
    let (lo, dlo) = if idx == 0 { (0.0, d0) } else { (breaks[idx - 1], deriv(breaks[idx - 1])) };
    if idx < breaks.len() {
        let hi = breaks[idx];
        let dhi = deriv(hi);
        return Some(if dlo - dhi > 0.0 { lo + dlo * (hi - lo) / (dlo - dhi) } else { hi });
    }
    // beyond the last breakpoint the slope is −Σ s_k² over free coordinates
    let probe = lo + 1.0;
    let slope = z
        .iter()
        .zip(s.iter())
        .filter(|(&zk, &sk)| zk - probe * sk > eps)
        .map(|(_, &sk)| sk * sk)
        .sum::<f64>();
    (slope > 0.0).then(|| lo + dlo / slope)
}

/// Euclidean projection of `q` onto the feasible polytope of `spec`.
/// Entries of `q` off the edge set are ignored.
pub fn project(q: &DMatrix<f64>, spec: &FeasibleSpec) -> Result<StrategyMatrix> {
    if q.nrows() != spec.n() || q.ncols() != spec.n() {
        return Err(PatrolError::DimensionMismatch { expected: spec.n(), got: q.nrows() });
    }
    let poly = Polytope::new(spec)?;
    let x = poly.project(&poly.from_matrix(q))?;
    StrategyMatrix::new(poly.to_matrix(&x))
}
