//! Seeded Monte Carlo for patrol chains.
//!
//! The generator is ChaCha8 (`rand_chacha` 0.9). A trajectory is fully
//! determined by `(seed, stream)`; batch samplers give each block of samples
//! its own stream so results do not depend on the worker count.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::chain::{support_strongly_connected, StrategyMatrix, ROW_SUM_TOL};
use crate::entropy::xlogx;
use crate::error::{PatrolError, Result};
use crate::graph::{SurveillanceGraph, VisitDistribution};
use crate::par;

pub const PRNG_NAME: &str = "ChaCha8Rng (rand_chacha 0.9)";
/// Samples per RNG stream in the batch samplers.
pub const BLOCK: usize = 4096;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Trajectory {
    pub states: Vec<usize>,
    /// `clock[k]` is the travel time elapsed when `states[k]` is reached.
    pub clock: Vec<u64>,
    pub seed: u64,
    pub stream: u64,
}

impl Trajectory {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("step,state,clock\n");
        for (k, (s, c)) in self.states.iter().zip(&self.clock).enumerate() {
            out.push_str(&format!("{k},{s},{c}\n"));
        }
        out
    }
}

/// Mean with its CLT standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Estimate {
    pub mean: f64,
    pub se: f64,
    pub samples: usize,
}

impl Estimate {
    pub fn from_samples<I: IntoIterator<Item = f64>>(xs: I) -> Result<Self> {
        let (mut n, mut mean, mut m2) = (0usize, 0.0, 0.0);
        for x in xs {
            n += 1;
            let d = x - mean;
            mean += d / n as f64;
            m2 += d * (x - mean);
        }
        if n == 0 {
            return Err(PatrolError::InvalidArgument("no samples".into()));
        }
        let se = if n > 1 { (m2 / (n - 1) as f64 / n as f64).sqrt() } else { f64::INFINITY };
        Ok(Self { mean, se, samples: n })
    }

    /// `|mean − value| ≤ k·SE`.
    pub fn within(&self, value: f64, k: f64) -> bool {
        (self.mean - value).abs() <= k * self.se
    }
}

/// Row-wise cumulative tables for inverse-CDF sampling.
struct Sampler {
    rows: Vec<Vec<(usize, f64)>>,
    weights: Vec<u32>,
    n: usize,
}

impl Sampler {
    fn new(p: &StrategyMatrix, g: &SurveillanceGraph) -> Result<Self> {
        let n = p.n();
        if g.n() != n {
            return Err(PatrolError::DimensionMismatch { expected: g.n(), got: n });
        }
        let m = p.matrix();
        let mut rows = Vec::with_capacity(n);
        for i in 0..n {
            let mut acc = 0.0;
            let mut row = Vec::new();
            for j in 0..n {
                let v = m[(i, j)];
                if v < 0.0 {
                    return Err(PatrolError::InvalidMatrix(format!("negative entry at ({i},{j})")));
                }
                if v > 0.0 {
                    if !g.has_edge(i, j) {
                        return Err(PatrolError::InvalidMatrix(format!("({i},{j}) is not an edge")));
                    }
                    acc += v;
                    row.push((j, acc));
                }
            }
            if (acc - 1.0).abs() > ROW_SUM_TOL {
                return Err(PatrolError::InvalidMatrix(format!("row {i} sums to {acc}")));
            }
            rows.push(row);
        }
        if !support_strongly_connected(m) {
            return Err(PatrolError::Reducible("support digraph is not strongly connected".into()));
        }
        let weights = (0..n * n).map(|s| g.weight(s / n, s % n).unwrap_or(0)).collect();
        Ok(Self { rows, weights, n })
    }

    fn step<R: Rng>(&self, rng: &mut R, i: usize) -> usize {
        let row = &self.rows[i];
        let u: f64 = rng.random::<f64>() * row.last().map_or(1.0, |e| e.1);
        let k = row.partition_point(|&(_, c)| c <= u);
        row[k.min(row.len() - 1)].0
    }

    fn weight(&self, i: usize, j: usize) -> u64 {
        u64::from(self.weights[i * self.n + j])
    }
}

fn rng_for(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

fn check_node(i: usize, n: usize) -> Result<()> {
    if i >= n {
        return Err(PatrolError::InvalidArgument(format!("node {i} out of range for n = {n}")));
    }
    Ok(())
}

/// Samples `steps` transitions starting at `start` (stream 0).
pub fn simulate(p: &StrategyMatrix, g: &SurveillanceGraph, start: usize, steps: usize, seed: u64) -> Result<Trajectory> {
    simulate_stream(p, g, start, steps, seed, 0)
}

pub fn simulate_stream(
    p: &StrategyMatrix,
    g: &SurveillanceGraph,
    start: usize,
    steps: usize,
    seed: u64,
    stream: u64,
) -> Result<Trajectory> {
    let sampler = Sampler::new(p, g)?;
    check_node(start, sampler.n)?;
    Ok(run(&sampler, start, steps, seed, stream))
}

fn run(sampler: &Sampler, start: usize, steps: usize, seed: u64, stream: u64) -> Trajectory {
    let mut rng = rng_for(seed, stream);
    let mut states = Vec::with_capacity(steps + 1);
    let mut clock = Vec::with_capacity(steps + 1);
    let (mut s, mut t) = (start, 0u64);
    states.push(s);
    clock.push(t);
    for _ in 0..steps {
        let next = sampler.step(&mut rng, s);
        t += sampler.weight(s, next);
        s = next;
        states.push(s);
        clock.push(t);
    }
    Trajectory { states, clock, seed, stream }
}

/// `count` independent trajectories on streams `0..count`.
pub fn simulate_many(
    p: &StrategyMatrix,
    g: &SurveillanceGraph,
    start: usize,
    steps: usize,
    seed: u64,
    count: usize,
) -> Result<Vec<Trajectory>> {
    let sampler = Sampler::new(p, g)?;
    check_node(start, sampler.n)?;
    Ok(par::map_indexed(count, |k| run(&sampler, start, steps, seed, k as u64)))
}

/// Visit frequencies with batch-means standard errors (20 batches per trajectory).
#[derive(Debug, Clone, Serialize)]
pub struct VisitFrequency {
    pub freq: Vec<f64>,
    pub se: Vec<f64>,
}

pub fn empirical_visit_frequency(trajs: &[Trajectory], n: usize) -> Result<VisitFrequency> {
    const BATCHES: usize = 20;
    let mut counts = vec![0u64; n];
    let mut batch_freqs: Vec<Vec<f64>> = Vec::new();
    let mut total = 0u64;
    for tr in trajs {
        let len = tr.states.len();
        for &s in &tr.states {
            check_node(s, n)?;
            counts[s] += 1;
        }
        total += len as u64;
        if len >= BATCHES {
            let b = len / BATCHES;
            for chunk in tr.states.chunks_exact(b).take(BATCHES) {
                let mut f = vec![0.0; n];
                for &s in chunk {
                    f[s] += 1.0 / b as f64;
                }
                batch_freqs.push(f);
            }
        }
    }
    if total == 0 {
        return Err(PatrolError::InvalidArgument("no samples".into()));
    }
    let freq: Vec<f64> = counts.iter().map(|&c| c as f64 / total as f64).collect();
    let se = (0..n)
        .map(|i| Estimate::from_samples(batch_freqs.iter().map(|f| f[i])).map_or(f64::INFINITY, |e| e.se))
        .collect();
    Ok(VisitFrequency { freq, se })
}

/// Burn-in used before collecting return times: `⌈10 / min π⌉` steps.
pub fn burn_in_steps(pi: &VisitDistribution) -> usize {
    (10.0 / pi.min()).ceil() as usize
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct Histogram {
    pub counts: BTreeMap<u64, u64>,
}

impl Histogram {
    pub fn total(&self) -> u64 {
        self.counts.values().sum()
    }

    pub fn mean(&self) -> Result<Estimate> {
        Estimate::from_samples(
            self.counts.iter().flat_map(|(&v, &c)| std::iter::repeat_n(v as f64, c as usize)),
        )
    }

    /// Plug-in Shannon entropy in nats.
    pub fn entropy(&self) -> f64 {
        let t = self.total() as f64;
        -self.counts.values().map(|&c| xlogx(c as f64 / t)).sum::<f64>()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("value,count\n");
        for (v, c) in &self.counts {
            out.push_str(&format!("{v},{c}\n"));
        }
        out
    }

    fn merge(&mut self, other: Histogram) {
        for (v, c) in other.counts {
            *self.counts.entry(v).or_default() += c;
        }
    }
}

/// Return times (travel-time units) between successive visits to `node`,
/// skipping the first `burn_in` steps of every trajectory.
pub fn empirical_return_histogram(trajs: &[Trajectory], node: usize, burn_in: usize) -> Result<Histogram> {
    let mut h = Histogram::default();
    for tr in trajs {
        let mut last: Option<u64> = None;
        for (k, (&s, &c)) in tr.states.iter().zip(&tr.clock).enumerate() {
            if k < burn_in || s != node {
                continue;
            }
            if let Some(prev) = last {
                *h.counts.entry(c - prev).or_default() += 1;
            }
            last = Some(c);
        }
    }
    if h.total() == 0 {
        return Err(PatrolError::InvalidArgument(format!("no returns to node {node} observed")));
    }
    Ok(h)
}

/// First hitting time of `j` (at a step `k ≥ 1`) in each trajectory starting at `i`.
pub fn empirical_mean_hitting(trajs: &[Trajectory], i: usize, j: usize) -> Result<Estimate> {
    let mut xs = Vec::new();
    for tr in trajs.iter().filter(|t| t.states.first() == Some(&i)) {
        let k = tr.states.iter().skip(1).position(|&s| s == j).ok_or_else(|| {
            PatrolError::InvalidArgument(format!("trajectory (stream {}) never reaches {j}", tr.stream))
        })?;
        xs.push(tr.clock[k + 1] as f64);
    }
    Estimate::from_samples(xs)
}

fn blocks(samples: usize) -> usize {
    samples.div_ceil(BLOCK)
}

/// Independent samples of the travel time from `i` until `j` is first reached.
///
/// Samples that exceed `max_steps` are reported as an error.
pub fn sample_hitting_times(
    p: &StrategyMatrix,
    g: &SurveillanceGraph,
    i: usize,
    j: usize,
    samples: usize,
    seed: u64,
    max_steps: usize,
) -> Result<Vec<u64>> {
    let sampler = Sampler::new(p, g)?;
    check_node(i, sampler.n)?;
    check_node(j, sampler.n)?;
    let chunks = par::map_indexed(blocks(samples), |b| {
        let mut rng = rng_for(seed, b as u64);
        let len = BLOCK.min(samples - b * BLOCK);
        let mut out = Vec::with_capacity(len);
        for _ in 0..len {
            let (mut s, mut t) = (i, 0u64);
            let mut hit = false;
            for _ in 0..max_steps {
                let next = sampler.step(&mut rng, s);
                t += sampler.weight(s, next);
                s = next;
                if s == j {
                    hit = true;
                    break;
                }
            }
            if !hit {
                return Err(PatrolError::NotConverged { iterations: max_steps, residual: f64::NAN });
            }
            out.push(t);
        }
        Ok(out)
    });
    let mut all = Vec::with_capacity(samples);
    for c in chunks {
        all.extend(c?);
    }
    Ok(all)
}

/// Independent return-time samples at `node` (the chain restarts there, so
/// successive returns are i.i.d. by the strong Markov property).
pub fn sample_return_histogram(
    p: &StrategyMatrix,
    g: &SurveillanceGraph,
    node: usize,
    samples: usize,
    seed: u64,
    max_steps: usize,
) -> Result<Histogram> {
    let times = sample_hitting_times(p, g, node, node, samples, seed, max_steps)?;
    let mut h = Histogram::default();
    for t in times {
        *h.counts.entry(t).or_default() += 1;
    }
    Ok(h)
}

/// Meeting time (steps) of an independent pursuer and evader started at
/// `starts = (i, j)`; a meeting is the first `k ≥ 1` with equal positions.
pub fn empirical_meeting(
    pp: &StrategyMatrix,
    pe: &StrategyMatrix,
    starts: (usize, usize),
    samples: usize,
    seed: u64,
    max_steps: usize,
) -> Result<Estimate> {
    let n = pp.n();
    if pe.n() != n {
        return Err(PatrolError::DimensionMismatch { expected: n, got: pe.n() });
    }
    let full = SurveillanceGraph::complete(n, true)?;
    let sp = Sampler::new(pp, &full)?;
    let se = Sampler::new(pe, &full)?;
    check_node(starts.0, n)?;
    check_node(starts.1, n)?;
    let chunks = par::map_indexed(blocks(samples), |b| {
        let mut rng = rng_for(seed, b as u64);
        let len = BLOCK.min(samples - b * BLOCK);
        let mut out = Vec::with_capacity(len);
        for _ in 0..len {
            let (mut x, mut y) = starts;
            let mut met = None;
            for k in 1..=max_steps {
                x = sp.step(&mut rng, x);
                y = se.step(&mut rng, y);
                if x == y {
                    met = Some(k);
                    break;
                }
            }
            let k = met.ok_or(PatrolError::NotConverged { iterations: max_steps, residual: f64::NAN })?;
            out.push(k as f64);
        }
        Ok::<_, PatrolError>(out)
    });
    let mut all = Vec::with_capacity(samples);
    for c in chunks {
        all.extend(c?);
    }
    Estimate::from_samples(all)
}

/// Merges histograms (order-independent).
pub fn merge_histograms<I: IntoIterator<Item = Histogram>>(hs: I) -> Histogram {
    let mut out = Histogram::default();
    for h in hs {
        out.merge(h);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_cycle() -> (StrategyMatrix, SurveillanceGraph) {
        let g = SurveillanceGraph::unweighted(2, &[(0, 1), (1, 0)]).unwrap();
        (StrategyMatrix::from_rows(&[vec![0.0, 1.0], vec![1.0, 0.0]]).unwrap(), g)
    }

    #[test]
    fn two_cycle_alternates() {
        let (p, g) = two_cycle();
        let t = simulate(&p, &g, 0, 4, 1).unwrap();
        assert_eq!(t.states, vec![0, 1, 0, 1, 0]);
        assert_eq!(t.clock, vec![0, 1, 2, 3, 4]);
        let h = empirical_return_histogram(&[t], 0, 0).unwrap();
        assert_eq!(h.counts.into_iter().collect::<Vec<_>>(), vec![(2, 2)]);
    }

    #[test]
    fn reducible_and_bad_start_rejected() {
        let g = SurveillanceGraph::complete(2, true).unwrap();
        assert!(matches!(simulate(&StrategyMatrix::identity(2), &g, 0, 3, 0), Err(PatrolError::Reducible(_))));
        let (p, g) = two_cycle();
        assert!(simulate(&p, &g, 5, 3, 0).is_err());
    }

    #[test]
    fn seeded_runs_repeat() {
        let g = SurveillanceGraph::complete(3, true).unwrap();
        let p = StrategyMatrix::from_rows(&[vec![0.2, 0.5, 0.3], vec![0.1, 0.1, 0.8], vec![0.6, 0.3, 0.1]]).unwrap();
        let a = simulate(&p, &g, 1, 500, 42).unwrap();
        let b = simulate(&p, &g, 1, 500, 42).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.states, simulate(&p, &g, 1, 500, 43).unwrap().states);
    }

    #[test]
    fn weighted_clock_follows_edges() {
        let g = SurveillanceGraph::from_edges(2, &[(0, 1, 2), (1, 0, 3)]).unwrap();
        let p = StrategyMatrix::from_rows(&[vec![0.0, 1.0], vec![1.0, 0.0]]).unwrap();
        let t = simulate(&p, &g, 0, 3, 0).unwrap();
        assert_eq!(t.clock, vec![0, 2, 5, 7]);
        let e = empirical_mean_hitting(&[t], 0, 0).unwrap();
        assert_eq!(e.mean, 5.0);
    }

    #[test]
    fn estimate_from_samples() {
        let e = Estimate::from_samples([1.0, 2.0, 3.0, 4.0]).unwrap();
        assert!((e.mean - 2.5).abs() < 1e-15);
        assert!((e.se - (5.0f64 / 3.0 / 4.0).sqrt()).abs() < 1e-15);
        assert!(Estimate::from_samples(Vec::<f64>::new()).is_err());
    }
}
