//! Entropy rate and the maxentropic construction.
//!
//! On a symmetric graph with self loops everywhere, the chain with the
//! largest entropy rate for a prescribed stationary distribution `π` is
//! `Φ(x*) = diag(Ax*)⁻¹ A diag(x*)`, where `x*` is the unique positive root of
//! `φ(x) = diag(x) A x = π`. The root is found by a fixed-step linear
//! iteration that needs one matrix–vector product per step.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::chain::{stationarity_residual, StrategyMatrix};
use crate::error::{PatrolError, Result};
use crate::graph::{SurveillanceGraph, VisitDistribution};

/// Stationarity tolerance accepted by entropy evaluations.
pub const ENTROPY_STATIONARY_TOL: f64 = 1e-6;
pub const DEFAULT_TOL: f64 = 1e-10;
pub const DEFAULT_MAX_ITER: usize = 1_000_000;

/// `x log x` with the continuous extension `0 log 0 = 0`.
pub fn xlogx(x: f64) -> f64 {
    if x > 0.0 { x * x.ln() } else { 0.0 }
}

/// Shannon entropy (nats) of a probability vector.
pub fn shannon(p: &[f64]) -> f64 {
    -p.iter().map(|&x| xlogx(x)).sum::<f64>()
}

/// `−Σ_i π_i Σ_j p_ij log p_ij` in nats.
pub fn entropy_rate(p: &StrategyMatrix, pi: &VisitDistribution) -> Result<f64> {
    if pi.len() != p.n() {
        return Err(PatrolError::DimensionMismatch { expected: p.n(), got: pi.len() });
    }
    let residual = stationarity_residual(p, pi);
    if residual > ENTROPY_STATIONARY_TOL {
        return Err(PatrolError::NotStationary { residual });
    }
    Ok(entropy_rate_unchecked(p.matrix(), pi.as_slice()))
}

pub(crate) fn entropy_rate_unchecked(p: &DMatrix<f64>, pi: &[f64]) -> f64 {
    let n = p.nrows();
    -(0..n)
        .map(|i| pi[i] * (0..n).map(|j| xlogx(p[(i, j)])).sum::<f64>())
        .sum::<f64>()
}

#[derive(Debug, Clone, Serialize)]
pub struct MaxentropicSolution {
    pub x_star: Vec<f64>,
    #[serde(skip)]
    pub p_star: StrategyMatrix,
    /// Optimal entropy rate from the closed-form value expression.
    pub value: f64,
    pub iterations: usize,
    /// `‖φ(x*) − π‖_∞`.
    pub residual: f64,
    /// Residual after each iteration; index 0 is the starting point.
    #[serde(skip)]
    pub residual_trace: Vec<f64>,
}

fn unit_diagonal_adjacency(g: &SurveillanceGraph) -> Result<DMatrix<f64>> {
    if !g.is_symmetric() {
        return Err(PatrolError::InvalidGraph("maxentropic construction needs a symmetric adjacency".into()));
    }
    if !g.has_all_self_loops() {
        return Err(PatrolError::InvalidGraph("maxentropic construction needs self loops at every node".into()));
    }
    let n = g.n();
    Ok(DMatrix::from_fn(n, n, |i, j| if g.has_edge(i, j) { 1.0 } else { 0.0 }))
}

/// `φ(x) = diag(x) A x`.
pub fn maxentropic_vector_map(a: &DMatrix<f64>, x: &DVector<f64>) -> DVector<f64> {
    x.component_mul(&(a * x))
}

/// `Φ(x) = diag(Ax)⁻¹ A diag(x)`.
pub fn maxentropic_matrix_map(a: &DMatrix<f64>, x: &DVector<f64>) -> DMatrix<f64> {
    let ax = a * x;
    DMatrix::from_fn(a.nrows(), a.ncols(), |i, j| a[(i, j)] * x[j] / ax[i])
}

/// `−2 xᵀ A diag(x) log x + πᵀ log π`.
pub fn maxentropic_value(a: &DMatrix<f64>, x: &DVector<f64>, pi: &[f64]) -> f64 {
    let xlog = x.map(|v| v * v.ln());
    let first = x.dot(&(a * xlog));
    let second: f64 = pi.iter().map(|&p| p * p.ln()).sum();
    -2.0 * first + second
}

/// Solves `φ(x) = π` from a caller-supplied positive start.
pub fn solve_inverse_vector_map(
    a: &DMatrix<f64>,
    pi: &VisitDistribution,
    x0: DVector<f64>,
    tol: f64,
    max_iter: usize,
) -> Result<(DVector<f64>, usize, Vec<f64>)> {
    let target = pi.to_dvector();
    let sqrt_pi = target.map(f64::sqrt);
    let eta = (a * &sqrt_pi).max();
    let step = 1.0 / (2.0 * eta);
    let mut x = x0;
    let mut trace = Vec::new();
    for k in 0..=max_iter {
        let r = maxentropic_vector_map(a, &x) - &target;
        let res = r.amax();
        trace.push(res);
        if res <= tol {
            return Ok((x, k, trace));
        }
        if k == max_iter {
            return Err(PatrolError::NotConverged { iterations: max_iter, residual: res });
        }
        x -= r * step;
    }
    unreachable!()
}

/// Standard start `x⁰ = π / √(max_i Σ_j a_ij π_j)`.
pub fn default_start(a: &DMatrix<f64>, pi: &VisitDistribution) -> DVector<f64> {
    let p = pi.to_dvector();
    let scale = (a * &p).max().sqrt();
    p / scale
}

/// Chain with the maximum entropy rate among chains on `g` with stationary `pi`.
pub fn maximize_entropy_rate(
    g: &SurveillanceGraph,
    pi: &VisitDistribution,
    tol: f64,
    max_iter: usize,
) -> Result<MaxentropicSolution> {
    if pi.len() != g.n() {
        return Err(PatrolError::DimensionMismatch { expected: g.n(), got: pi.len() });
    }
    let a = unit_diagonal_adjacency(g)?;
    let x0 = default_start(&a, pi);
    let (x, iterations, residual_trace) = solve_inverse_vector_map(&a, pi, x0, tol, max_iter)?;
    let p_star = StrategyMatrix::new(maxentropic_matrix_map(&a, &x))?;
    let value = maxentropic_value(&a, &x, pi.as_slice());
    let residual = *residual_trace.last().unwrap();
    Ok(MaxentropicSolution { x_star: x.iter().copied().collect(), p_star, value, iterations, residual, residual_trace })
}

/// Entropy rate of the returned chain minus the closed-form optimal value.
pub fn entropy_rate_gap(sol: &MaxentropicSolution, pi: &VisitDistribution) -> Result<f64> {
    Ok(entropy_rate(&sol.p_star, pi)? - sol.value)
}
