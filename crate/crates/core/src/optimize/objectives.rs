//! Objective functions with analytic gradients, evaluated on matrices whose
//! stationary distribution is the fixed target `π`.
//!
//! All objectives are minimized; a value of `+∞` marks a point the line
//! search must reject (reducible chain, infinite meeting time, loss of
//! positive definiteness).

use nalgebra::{DMatrix, DVector};

use crate::chain::{support_strongly_connected, StrategyMatrix};
use crate::graph::{SurveillanceGraph, VisitDistribution};
use crate::hitting::meeting_good_states;
use crate::returntime;

pub trait Objective: Sync {
    fn value(&self, p: &DMatrix<f64>) -> f64;
    /// `None` when the value is infinite.
    fn value_and_grad(&self, p: &DMatrix<f64>) -> Option<(f64, DMatrix<f64>)>;
}

/// Fundamental matrix `Z = (I − P + 1πᵀ)⁻¹`, or `None` for reducible `P`.
fn fundamental(p: &DMatrix<f64>, pi: &[f64]) -> Option<DMatrix<f64>> {
    if !support_strongly_connected(p) {
        return None;
    }
    let n = p.nrows();
    let a = DMatrix::from_fn(n, n, |i, j| if i == j { 1.0 } else { 0.0 } - p[(i, j)] + pi[j]);
    let z = a.try_inverse()?;
    let t = z.trace();
    (t.is_finite() && t > 0.0).then_some(z)
}

/// Kemeny constant `M(P) = Tr(Z)`; `∂/∂p_ij = (Z²)_ji`.
pub struct Kemeny {
    pub pi: Vec<f64>,
}

impl Objective for Kemeny {
    fn value(&self, p: &DMatrix<f64>) -> f64 {
        fundamental(p, &self.pi).map_or(f64::INFINITY, |z| z.trace())
    }

    fn value_and_grad(&self, p: &DMatrix<f64>) -> Option<(f64, DMatrix<f64>)> {
        let z = fundamental(p, &self.pi)?;
        let z2 = &z * &z;
        Some((z.trace(), z2.transpose()))
    }
}

/// Trace form `Tr((I − Π^½ P Π^{-½} + √π√πᵀ)⁻¹)` used for reversible chains.
///
/// For reversible `P` the inner matrix is symmetric positive definite; a
/// failed Cholesky factorization marks the point infeasible.
pub struct TraceKemeny {
    pub pi: Vec<f64>,
}

impl TraceKemeny {
    fn inner(&self, p: &DMatrix<f64>) -> Option<DMatrix<f64>> {
        if !support_strongly_connected(p) {
            return None;
        }
        let n = p.nrows();
        let s: Vec<f64> = self.pi.iter().map(|v| v.sqrt()).collect();
        let x = DMatrix::from_fn(n, n, |i, j| {
            let id = if i == j { 1.0 } else { 0.0 };
            id - s[i] * p[(i, j)] / s[j] + s[i] * s[j]
        });
        let sym = (&x + x.transpose()) * 0.5;
        sym.cholesky()?;
        let inv = x.try_inverse()?;
        let t = inv.trace();
        (t.is_finite() && t > 0.0).then_some(inv)
    }
}

impl Objective for TraceKemeny {
    fn value(&self, p: &DMatrix<f64>) -> f64 {
        self.inner(p).map_or(f64::INFINITY, |inv| inv.trace())
    }

    fn value_and_grad(&self, p: &DMatrix<f64>) -> Option<(f64, DMatrix<f64>)> {
        let inv = self.inner(p)?;
        let y = &inv * &inv;
        let n = p.nrows();
        let s: Vec<f64> = self.pi.iter().map(|v| v.sqrt()).collect();
        // d Tr(X⁻¹) = Tr(X⁻² Π^½ dP Π^{-½})
        let grad = DMatrix::from_fn(n, n, |i, j| y[(j, i)] * s[i] / s[j]);
        Some((inv.trace(), grad))
    }
}

/// `(πᵀ(P∘W)1) · K(P)` with `K` either the fundamental-matrix or trace form.
pub struct WeightedKemeny<K: Objective> {
    pub pi: Vec<f64>,
    pub weights: DMatrix<f64>,
    pub base: K,
}

impl<K: Objective> WeightedKemeny<K> {
    fn step_time(&self, p: &DMatrix<f64>) -> f64 {
        let n = p.nrows();
        (0..n)
            .map(|i| self.pi[i] * (0..n).map(|j| p[(i, j)] * self.weights[(i, j)]).sum::<f64>())
            .sum()
    }
}

impl<K: Objective> Objective for WeightedKemeny<K> {
    fn value(&self, p: &DMatrix<f64>) -> f64 {
        let k = self.base.value(p);
        if k.is_finite() { self.step_time(p) * k } else { f64::INFINITY }
    }

    fn value_and_grad(&self, p: &DMatrix<f64>) -> Option<(f64, DMatrix<f64>)> {
        let (k, gk) = self.base.value_and_grad(p)?;
        let c = self.step_time(p);
        let n = p.nrows();
        let grad = DMatrix::from_fn(n, n, |i, j| k * self.pi[i] * self.weights[(i, j)] + c * gk[(i, j)]);
        Some((c * k, grad))
    }
}

/// Expected meeting time `π_pᵀ M π_e` against a fixed evader.
pub struct Meeting {
    pub pi_p: Vec<f64>,
    pub pi_e: Vec<f64>,
    pub evader: DMatrix<f64>,
}

impl Meeting {
    /// Returns `(A, m)` with `A = I − (Pᵖ ⊗ Pᵉ)(I − E)` and `m = A⁻¹1`, or `None`
    /// when some weighted start has infinite meeting time.
    fn solve(&self, p: &DMatrix<f64>) -> Option<(DMatrix<f64>, DVector<f64>)> {
        let n = p.nrows();
        let good = meeting_good_states(p, &self.evader);
        if (0..n * n).any(|s| s / n != s % n && !good[s]) {
            return None;
        }
        let q = &self.evader;
        let a = DMatrix::from_fn(n * n, n * n, |s, t| {
            let (i, j) = (s / n, s % n);
            let (k, h) = (t / n, t % n);
            let id = if s == t { 1.0 } else { 0.0 };
            if k == h { id } else { id - p[(i, k)] * q[(j, h)] }
        });
        let lu = a.clone().lu();
        let m = lu.solve(&DVector::from_element(n * n, 1.0))?;
        m.iter().all(|v| v.is_finite() && *v >= 1.0 - 1e-9).then_some((a, m))
    }

    fn weights(&self, n: usize) -> DVector<f64> {
        DVector::from_fn(n * n, |s, _| self.pi_p[s / n] * self.pi_e[s % n])
    }
}

impl Objective for Meeting {
    fn value(&self, p: &DMatrix<f64>) -> f64 {
        let n = p.nrows();
        self.solve(p).map_or(f64::INFINITY, |(_, m)| self.weights(n).dot(&m))
    }

    fn value_and_grad(&self, p: &DMatrix<f64>) -> Option<(f64, DMatrix<f64>)> {
        let n = p.nrows();
        let (a, m) = self.solve(p)?;
        let w = self.weights(n);
        let lambda = a.transpose().lu().solve(&w)?;
        // dJ = λᵀ dK (I − E) m, K = Pᵖ ⊗ Pᵉ  ⇒  ∇ = Λ Pᵉ M̃ᵀ
        let lam = DMatrix::from_fn(n, n, |i, j| lambda[i * n + j]);
        let mt = DMatrix::from_fn(n, n, |k, h| if k == h { 0.0 } else { m[k * n + h] });
        let grad = lam * &self.evader * mt.transpose();
        Some((w.dot(&m), grad))
    }
}

/// Negated truncated return-time entropy (maximization as minimization).
pub struct NegReturnEntropy {
    pub graph: SurveillanceGraph,
    pub pi: VisitDistribution,
    pub horizon: usize,
}

impl Objective for NegReturnEntropy {
    fn value(&self, p: &DMatrix<f64>) -> f64 {
        let Ok(sm) = StrategyMatrix::new(p.clone()) else { return f64::INFINITY };
        returntime::truncated_entropy_unchecked(&sm, &self.graph, &self.pi, self.horizon)
            .map_or(f64::INFINITY, |h| -h)
    }

    fn value_and_grad(&self, p: &DMatrix<f64>) -> Option<(f64, DMatrix<f64>)> {
        let sm = StrategyMatrix::new(p.clone()).ok()?;
        let g = returntime::adjoint_unchecked(&sm, &self.graph, &self.pi, self.horizon).ok()?;
        Some((-g.value, -g.grad))
    }
}
