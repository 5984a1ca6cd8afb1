//! First hitting/return time distributions on graphs with integer travel
//! times, the truncated return-time entropy, and its gradient.
//!
//! With `F_k(i, j) = Pr(Tʷ_ij = k)` the distributions obey the delayed
//! recursion
//!
//! ```text
//! F_k(i, j) = p_ij [k = w_ij] + Σ_{h ≠ j} p_ih F_{k − w_ih}(h, j),   F_k = 0 for k ≤ 0.
//! ```
//!
//! Column `j` only ever reads column `j` of earlier slices, so every routine
//! here works one target column at a time and keeps at most `max w` slices of
//! that column alive unless the full series is requested.

use nalgebra::DMatrix;
use serde::Serialize;

use crate::chain::{stationarity_residual, StrategyMatrix};
use crate::entropy::{xlogx, ENTROPY_STATIONARY_TOL};
use crate::error::{PatrolError, Result};
use crate::graph::{SurveillanceGraph, VisitDistribution};
use crate::par;

/// Rounds real travel times to integer multiples of `unit`, never below 1.
pub fn quantize_weights(w_real: &DMatrix<f64>, unit: f64) -> Result<Vec<u32>> {
    if !(unit > 0.0) || !unit.is_finite() {
        return Err(PatrolError::InvalidArgument(format!("quantization unit must be positive, got {unit}")));
    }
    w_real
        .transpose()
        .iter()
        .map(|&w| {
            if !(w > 0.0) || !w.is_finite() {
                return Err(PatrolError::InvalidArgument(format!("travel time must be positive, got {w}")));
            }
            let q = (w / unit).round().max(1.0);
            if q > f64::from(u32::MAX) {
                return Err(PatrolError::InvalidArgument(format!("travel time {w} overflows")));
            }
            Ok(q as u32)
        })
        .collect()
}

/// Horizon `N_η = ⌊w_max / (min_i π_i · η)⌋`.
///
/// By Markov's inequality and `E[Tʷ_ii] = πᵀ(P∘W)1 / π_i ≤ w_max / π_i`,
/// every feasible chain leaves at most `η` return mass beyond `N_η`.
pub fn truncation_horizon(g: &SurveillanceGraph, pi: &VisitDistribution, eta: f64) -> Result<usize> {
    if !(eta > 0.0 && eta <= 1.0) {
        return Err(PatrolError::InvalidArgument(format!("eta must lie in (0, 1], got {eta}")));
    }
    if pi.len() != g.n() {
        return Err(PatrolError::DimensionMismatch { expected: g.n(), got: pi.len() });
    }
    let raw = f64::from(g.max_weight()) / (pi.min() * eta);
    // absorb representation error, e.g. 1/((1/9)·0.1) = 89.999…
    let n = (raw * (1.0 + 1e-12)).floor();
    Ok((n as usize).max(1))
}

/// `buf[dst..dst+len] += a · buf[src..src+len]` for non-overlapping ranges.
fn axpy(buf: &mut [f64], dst: usize, src: usize, len: usize, a: f64) {
    let (d, s) = if dst < src {
        let (lo, hi) = buf.split_at_mut(src);
        (&mut lo[dst..dst + len], &hi[..len])
    } else {
        let (lo, hi) = buf.split_at_mut(dst);
        (&mut hi[..len], &lo[src..src + len])
    };
    for (x, y) in d.iter_mut().zip(s) {
        *x += a * y;
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0; 4];
    let (ac, bc) = (a.chunks_exact(4), b.chunks_exact(4));
    let tail: f64 = ac.remainder().iter().zip(bc.remainder()).map(|(x, y)| x * y).sum();
    for (x, y) in ac.zip(bc) {
        for l in 0..4 {
            acc[l] += x[l] * y[l];
        }
    }
    acc.iter().sum::<f64>() + tail
}

/// Sparse row view of a chain on a graph: `(h, p_ih, w_ih)` for `p_ih > 0`.
struct RowSupport {
    rows: Vec<Vec<(usize, f64, usize)>>,
    /// Incoming edges per node: `(i, p_ih, w_ih)`.
    cols: Vec<Vec<(usize, f64, usize)>>,
    max_w: usize,
}

impl RowSupport {
    fn new(p: &StrategyMatrix, g: &SurveillanceGraph) -> Result<Self> {
        let n = p.n();
        if g.n() != n {
            return Err(PatrolError::DimensionMismatch { expected: g.n(), got: n });
        }
        let mut rows = vec![Vec::new(); n];
        let mut cols = vec![Vec::new(); n];
        let mut max_w = 1;
        for i in 0..n {
            for h in 0..n {
                let pih = p.get(i, h);
                if pih > 0.0 {
                    let w = g.weight(i, h).ok_or_else(|| {
                        PatrolError::InvalidMatrix(format!("p[{i}][{h}] > 0 outside the edge set"))
                    })? as usize;
                    max_w = max_w.max(w);
                    rows[i].push((h, pih, w));
                    cols[h].push((i, pih, w));
                }
            }
        }
        Ok(Self { rows, cols, max_w })
    }

    fn n(&self) -> usize {
        self.rows.len()
    }

    /// Runs the recursion for target `j`, calling `sink(k, f_k)` for k = 1..=horizon.
    fn column<F: FnMut(usize, &[f64])>(&self, j: usize, horizon: usize, mut sink: F) {
        let n = self.n();
        // ring slot (k & mask) holds f_k; slots not yet written read as zero,
        // which covers f_k for k ≤ 0 because depth > max_w
        let depth = (self.max_w + 1).next_power_of_two();
        let mask = depth - 1;
        let mut ring = vec![0.0; depth * n];
        // edges avoiding j in CSR form, edges into j kept apart
        let mut offsets = Vec::with_capacity(n + 1);
        let mut entries: Vec<(usize, f64, usize)> = Vec::new();
        let mut into_j: Vec<(usize, f64, usize)> = Vec::new();
        offsets.push(0);
        for (i, row) in self.rows.iter().enumerate() {
            for &(h, pih, w) in row {
                if h == j {
                    into_j.push((i, pih, w));
                } else {
                    entries.push((h, pih, w));
                }
            }
            offsets.push(entries.len());
        }
        for k in 1..=horizon {
            let slot = (k & mask) * n;
            for i in 0..n {
                let mut acc = 0.0;
                for &(h, pih, w) in &entries[offsets[i]..offsets[i + 1]] {
                    acc += pih * ring[(k.wrapping_sub(w) & mask) * n + h];
                }
                ring[slot + i] = acc;
            }
            if k <= self.max_w {
                for &(i, pih, w) in &into_j {
                    if w == k {
                        ring[slot + i] += pih;
                    }
                }
            }
            sink(k, &ring[slot..slot + n]);
        }
    }

    /// Runs the recursion for all targets at once, calling `sink(k, F_k)` with
    /// `F_k` row-major (`i·n + j`).
    fn slices<F: FnMut(usize, &[f64])>(&self, horizon: usize, mut sink: F) {
        let n = self.n();
        let nn = n * n;
        let depth = (self.max_w + 1).next_power_of_two();
        let mask = depth - 1;
        let mut ring = vec![0.0; depth * nn];
        for k in 1..=horizon {
            let slot = (k & mask) * nn;
            ring[slot..slot + nn].fill(0.0);
            for (i, row) in self.rows.iter().enumerate() {
                let dst = slot + i * n;
                for &(h, pih, w) in row {
                    let src = (k.wrapping_sub(w) & mask) * nn + h * n;
                    // column h gets only the direct term p_ih·1{k = w_ih}
                    let keep = ring[dst + h];
                    axpy(&mut ring, dst, src, n, pih);
                    ring[dst + h] = if k == w { keep + pih } else { keep };
                }
            }
            sink(k, &ring[slot..slot + nn]);
        }
    }

    /// Full history `f[(k−1)·n + i]` for target `j`.
    fn column_history(&self, j: usize, horizon: usize) -> Vec<f64> {
        let n = self.n();
        let mut hist = vec![0.0; horizon * n];
        self.column(j, horizon, |k, f| hist[(k - 1) * n..k * n].copy_from_slice(f));
        hist
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ReturnTimeSeries {
    pub horizon: usize,
    /// `f[k − 1][(i, j)] = F_k(i, j)`; empty unless the full series was requested.
    #[serde(skip)]
    pub f: Vec<DMatrix<f64>>,
    /// `returns[i][k − 1] = F_k(i, i)`.
    pub returns: Vec<Vec<f64>>,
    /// `1 − Σ_{k≤N} F_k(i, i)`: return mass beyond the horizon.
    pub tail_bound: Vec<f64>,
}

impl ReturnTimeSeries {
    /// CSV with header `k,node0,node1,...` and one row per time step.
    pub fn histogram_csv(&self) -> String {
        let n = self.returns.len();
        let mut out = String::from("k");
        for i in 0..n {
            out.push_str(&format!(",node{i}"));
        }
        out.push('\n');
        for k in 0..self.horizon {
            out.push_str(&(k + 1).to_string());
            for row in &self.returns {
                out.push_str(&format!(",{:e}", row[k]));
            }
            out.push('\n');
        }
        out
    }
}

fn check_horizon(horizon: usize) -> Result<()> {
    if horizon < 1 {
        return Err(PatrolError::InvalidArgument("horizon must be at least 1".into()));
    }
    Ok(())
}

/// Return-time probabilities `F_k(i, i)`, k = 1..=horizon, per node.
pub fn return_probabilities(p: &StrategyMatrix, g: &SurveillanceGraph, horizon: usize) -> Result<Vec<Vec<f64>>> {
    check_horizon(horizon)?;
    let sup = RowSupport::new(p, g)?;
    let n = sup.n();
    let mut out = vec![Vec::with_capacity(horizon); n];
    sup.slices(horizon, |_, f| {
        for (i, r) in out.iter_mut().enumerate() {
            r.push(f[i * n + i]);
        }
    });
    Ok(out)
}

/// Full series `F_1..F_N` together with the return diagonals and tails.
pub fn return_time_distribution(p: &StrategyMatrix, g: &SurveillanceGraph, horizon: usize) -> Result<ReturnTimeSeries> {
    check_horizon(horizon)?;
    let sup = RowSupport::new(p, g)?;
    let n = sup.n();
    let mut f = Vec::with_capacity(horizon);
    sup.slices(horizon, |_, fk| f.push(DMatrix::from_row_slice(n, n, fk)));
    let returns: Vec<Vec<f64>> = (0..n).map(|i| f.iter().map(|m| m[(i, i)]).collect()).collect();
    let tail_bound = returns.iter().map(|r| (1.0 - r.iter().sum::<f64>()).max(0.0)).collect();
    Ok(ReturnTimeSeries { horizon, f, returns, tail_bound })
}

fn check_stationary(p: &StrategyMatrix, pi: &VisitDistribution) -> Result<()> {
    if pi.len() != p.n() {
        return Err(PatrolError::DimensionMismatch { expected: p.n(), got: pi.len() });
    }
    let residual = stationarity_residual(p, pi);
    if residual > ENTROPY_STATIONARY_TOL {
        return Err(PatrolError::NotStationary { residual });
    }
    Ok(())
}

/// Truncated return-time entropy `−Σ_i π_i Σ_{k≤N} F_k(i,i) log F_k(i,i)`, nats.
pub fn return_time_entropy(
    p: &StrategyMatrix,
    g: &SurveillanceGraph,
    pi: &VisitDistribution,
    horizon: usize,
) -> Result<f64> {
    check_stationary(p, pi)?;
    truncated_entropy_unchecked(p, g, pi, horizon)
}

pub(crate) fn truncated_entropy_unchecked(
    p: &StrategyMatrix,
    g: &SurveillanceGraph,
    pi: &VisitDistribution,
    horizon: usize,
) -> Result<f64> {
    check_horizon(horizon)?;
    let sup = RowSupport::new(p, g)?;
    let n = sup.n();
    let mut h = 0.0;
    sup.slices(horizon, |_, f| {
        for i in 0..n {
            h -= pi[i] * xlogx(f[i * n + i]);
        }
    });
    Ok(h)
}

#[derive(Debug, Clone)]
pub struct EntropyGradient {
    pub value: f64,
    /// `∂H/∂p_uv` on the support of `P`, zero elsewhere.
    pub grad: DMatrix<f64>,
}

/// `d(x log x)/dx`, taken as 0 at structural zeros.
fn dxlogx(x: f64) -> f64 {
    if x > 0.0 { x.ln() + 1.0 } else { 0.0 }
}

/// Gradient of the truncated entropy by forward sensitivity propagation.
///
/// For each supported `(u, v)` the sensitivities `∂F_k(·, j)/∂p_uv` are
/// pushed through the same delayed recursion as the distributions.
/// `π` is held fixed as the weight vector.
pub fn return_time_entropy_gradient(
    p: &StrategyMatrix,
    g: &SurveillanceGraph,
    pi: &VisitDistribution,
    horizon: usize,
) -> Result<EntropyGradient> {
    check_stationary(p, pi)?;
    check_horizon(horizon)?;
    let sup = RowSupport::new(p, g)?;
    let n = sup.n();
    let hist: Vec<Vec<f64>> = par::map_indexed(n, |j| sup.column_history(j, horizon));
    let value = -(0..n)
        .map(|j| pi[j] * (0..horizon).map(|k| xlogx(hist[j][k * n + j])).sum::<f64>())
        .sum::<f64>();
    let params: Vec<(usize, usize, usize)> = (0..n)
        .flat_map(|u| sup.rows[u].iter().map(move |&(v, _, w)| (u, v, w)))
        .collect();
    let depth = sup.max_w + 1;
    let partials = par::map_indexed(params.len(), |idx| {
        let (u, v, wuv) = params[idx];
        let mut total = 0.0;
        let mut ring = vec![0.0; depth * n];
        for j in 0..n {
            let f = &hist[j];
            ring.iter_mut().for_each(|x| *x = 0.0);
            for k in 1..=horizon {
                let slot = (k % depth) * n;
                for i in 0..n {
                    let mut acc = 0.0;
                    if i == u {
                        if v == j {
                            if k == wuv {
                                acc += 1.0;
                            }
                        } else if wuv < k {
                            acc += f[(k - wuv - 1) * n + v];
                        }
                    }
                    for &(h, pih, w) in &sup.rows[i] {
                        if h != j && w < k {
                            acc += pih * ring[((k - w) % depth) * n + h];
                        }
                    }
                    ring[slot + i] = acc;
                }
                total -= pi[j] * dxlogx(f[(k - 1) * n + j]) * ring[slot + j];
            }
        }
        total
    });
    let mut grad = DMatrix::zeros(n, n);
    for (&(u, v, _), d) in params.iter().zip(partials) {
        grad[(u, v)] = d;
    }
    Ok(EntropyGradient { value, grad })
}

/// Same gradient by reverse-mode (adjoint) propagation: one backward sweep per
/// target column, so the cost matches a single objective evaluation.
pub fn return_time_entropy_gradient_adjoint(
    p: &StrategyMatrix,
    g: &SurveillanceGraph,
    pi: &VisitDistribution,
    horizon: usize,
) -> Result<EntropyGradient> {
    check_stationary(p, pi)?;
    adjoint_unchecked(p, g, pi, horizon)
}

pub(crate) fn adjoint_unchecked(
    p: &StrategyMatrix,
    g: &SurveillanceGraph,
    pi: &VisitDistribution,
    horizon: usize,
) -> Result<EntropyGradient> {
    check_horizon(horizon)?;
    let sup = RowSupport::new(p, g)?;
    let n = sup.n();
    let mw = sup.max_w;
    let nn = n * n;
    // F_k in slice k − 1 + mw; the first mw slices are the zeros F_{1−mw..0}
    let mut f = vec![0.0; (horizon + mw) * nn];
    sup.slices(horizon, |k, fk| f[(k - 1 + mw) * nn..(k + mw) * nn].copy_from_slice(fk));
    let value = -(1..=horizon)
        .map(|k| (0..n).map(|j| pi[j] * xlogx(f[(k - 1 + mw) * nn + j * n + j])).sum::<f64>())
        .sum::<f64>();
    // lambda slice k − 1 holds ∂H/∂F_k; slices past the horizon stay zero
    let mut lambda = vec![0.0; (horizon + mw) * nn];
    let mut grad = DMatrix::zeros(n, n);
    for k in (1..=horizon).rev() {
        let base = (k - 1) * nn;
        for h in 0..n {
            let dst = base + h * n;
            // F_k(h, j) feeds F_{k+w}(i, j) for j ≠ h
            for &(i, pih, w) in &sup.cols[h] {
                axpy(&mut lambda, dst, (k + w - 1) * nn + i * n, n, pih);
            }
            lambda[dst + h] = -pi[h] * dxlogx(f[(k - 1 + mw) * nn + h * n + h]);
        }
        for (u, row) in sup.rows.iter().enumerate() {
            let lu = &lambda[base + u * n..base + (u + 1) * n];
            for &(v, _, w) in row {
                let fv = &f[(k + mw - w - 1) * nn + v * n..(k + mw - w - 1) * nn + (v + 1) * n];
                let dot = dot(lu, fv) - lu[v] * fv[v];
                grad[(u, v)] += if k == w { dot + lu[v] } else { dot };
            }
        }
    }
    Ok(EntropyGradient { value, grad })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{make_grid, sf_dataset};

    fn two_cycle() -> StrategyMatrix {
        StrategyMatrix::from_rows(&[vec![0.0, 1.0], vec![1.0, 0.0]]).unwrap()
    }

    #[test]
    fn quantize_examples() {
        let w = DMatrix::from_row_slice(1, 2, &[2.4, 0.3]);
        assert_eq!(quantize_weights(&w, 1.0).unwrap(), vec![2, 1]);
        assert!(quantize_weights(&DMatrix::from_row_slice(1, 1, &[0.0]), 1.0).is_err());
        assert!(quantize_weights(&DMatrix::from_row_slice(1, 1, &[1.0]), 0.0).is_err());
        let (g, _) = sf_dataset();
        let real = g.weight_matrix();
        let q = quantize_weights(&real, 1.0).unwrap();
        let table: Vec<u32> = crate::graph::SF_TRAVEL_TIMES.iter().flatten().copied().collect();
        assert_eq!(q, table);
    }

    #[test]
    fn horizon_examples() {
        let (g, pi) = sf_dataset();
        assert_eq!(truncation_horizon(&g, &pi, 0.1).unwrap(), 2292);
        let grid = make_grid(3, 3, true).unwrap();
        let u = VisitDistribution::uniform(9);
        assert_eq!(truncation_horizon(&grid, &u, 0.1).unwrap(), 90);
        assert_eq!(truncation_horizon(&grid, &u, 1.0).unwrap(), 9);
        assert!(truncation_horizon(&grid, &u, 0.0).is_err());
        assert!(truncation_horizon(&grid, &u, 1.5).is_err());
    }

    #[test]
    fn two_cycle_returns_at_two() {
        let g = SurveillanceGraph::complete(2, false).unwrap();
        let s = return_time_distribution(&two_cycle(), &g, 6).unwrap();
        assert_eq!(s.returns[0], vec![0.0, 1.0, 0.0, 0.0, 0.0, 0.0]);
        assert_eq!(s.tail_bound[0], 0.0);
        assert_eq!(s.f[0][(0, 1)], 1.0);
        let pi = VisitDistribution::uniform(2);
        assert_eq!(return_time_entropy(&two_cycle(), &g, &pi, 6).unwrap(), 0.0);
    }

    #[test]
    fn weighted_two_cycle_returns_at_five() {
        let g = SurveillanceGraph::from_edges(2, &[(0, 1, 2), (1, 0, 3)]).unwrap();
        let s = return_time_distribution(&two_cycle(), &g, 10).unwrap();
        for k in 1..=10 {
            let expect = if k == 5 { 1.0 } else { 0.0 };
            assert_eq!(s.returns[0][k - 1], expect);
            assert_eq!(s.returns[1][k - 1], expect);
        }
        assert_eq!(s.f[1][(0, 1)], 1.0);
        assert_eq!(s.f[2][(1, 0)], 1.0);
    }

    #[test]
    fn zero_horizon_rejected() {
        let g = SurveillanceGraph::complete(2, false).unwrap();
        assert!(return_time_distribution(&two_cycle(), &g, 0).is_err());
    }

    #[test]
    fn entropy_rejects_non_stationary() {
        let g = SurveillanceGraph::complete(2, true).unwrap();
        let pi = VisitDistribution::new(vec![0.9, 0.1]).unwrap();
        let p = StrategyMatrix::rank_one(&VisitDistribution::uniform(2));
        assert!(matches!(return_time_entropy(&p, &g, &pi, 10), Err(PatrolError::NotStationary { .. })));
    }

    #[test]
    fn two_state_geometric_entropy() {
        let g = SurveillanceGraph::complete(2, true).unwrap();
        let pi = VisitDistribution::uniform(2);
        let p = StrategyMatrix::rank_one(&pi);
        let h = return_time_entropy(&p, &g, &pi, 200).unwrap();
        assert!((h - 2.0 * 2f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn forward_and_adjoint_gradients_agree() {
        let (g, pi) = sf_dataset();
        let g4 = SurveillanceGraph::from_edges(
            3,
            &[(0, 0, 1), (0, 1, 2), (1, 2, 1), (2, 0, 3), (1, 0, 2), (2, 2, 1), (1, 1, 1)],
        )
        .unwrap();
        let _ = (g, pi);
        let p = StrategyMatrix::from_rows(&[
            vec![0.3, 0.7, 0.0],
            vec![0.25, 0.25, 0.5],
            vec![0.6, 0.0, 0.4],
        ])
        .unwrap();
        let pi = crate::chain::stationary_distribution(&p).unwrap();
        let a = return_time_entropy_gradient(&p, &g4, &pi, 40).unwrap();
        let b = return_time_entropy_gradient_adjoint(&p, &g4, &pi, 40).unwrap();
        assert!((a.value - b.value).abs() < 1e-13);
        for i in 0..3 {
            for j in 0..3 {
                assert!((a.grad[(i, j)] - b.grad[(i, j)]).abs() < 1e-11, "{i},{j}");
            }
        }
        assert_eq!(a.grad[(0, 2)], 0.0);
    }
}
