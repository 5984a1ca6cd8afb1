//! Strategy synthesis by multi-start projected gradient over the feasible
//! polytope.
//!
//! | problem | objective | routine |
//! |---|---|---|
//! | mean hitting, general chains | `M(P)` | [`minimize_mean_hitting`] |
//! | mean hitting, reversible | trace form, optionally × `πᵀ(P∘W)1` | [`minimize_mean_hitting_reversible`] |
//! | weighted mean hitting, general | `Mʷ(P)` | [`minimize_weighted_mean_hitting`] |
//! | expected meeting time | `π_pᵀ M π_e` | [`minimize_meeting_time`] |
//! | return-time entropy | truncated `H_ret` (maximized) | [`maximize_return_entropy`] |
//!
//! Restarts run in parallel; each owns an RNG stream derived from the seed
//! and its index, so results do not depend on scheduling.

pub mod objectives;
pub mod pgd;
pub mod polytope;

use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::chain::{metropolis_hastings, StrategyMatrix};
use crate::error::{PatrolError, Result};
use crate::graph::VisitDistribution;
use crate::par;
use crate::returntime::truncation_horizon;

use objectives::{Kemeny, Meeting, NegReturnEntropy, Objective, TraceKemeny, WeightedKemeny};
pub use pgd::PgdOptions;
pub use polytope::{project, FeasibleSpec, Polytope};

/// Default number of random restarts for nonconvex problems.
pub const DEFAULT_RESTARTS: usize = 100;
/// Default minimum transition probability for return-time entropy.
pub const DEFAULT_EPSILON_RTE: f64 = 1e-3;

#[derive(Debug, Clone, Serialize)]
pub struct OptimizeResult {
    #[serde(skip)]
    pub p: StrategyMatrix,
    pub objective: f64,
    /// Number of starting points that were run.
    pub restarts: usize,
    pub best_restart: usize,
    /// Iterations of the winning run.
    pub iterations: usize,
    pub converged: bool,
    /// Objective after each accepted step of the winning run.
    pub history: Vec<f64>,
    /// Final objective of every start (`+∞` for starts that were rejected).
    pub start_objectives: Vec<f64>,
}

impl OptimizeResult {
    /// Largest relative difference between finite start objectives and the best.
    pub fn relative_spread(&self) -> f64 {
        self.start_objectives
            .iter()
            .filter(|v| v.is_finite())
            .map(|v| ((v - self.objective) / self.objective).abs())
            .fold(0.0, f64::max)
    }
}

/// Starting point `index`: 0 is the Metropolis–Hastings chain when the graph
/// admits one, every other index a projected random matrix.
fn start_point(poly: &Polytope, spec: &FeasibleSpec, seed: u64, index: usize, with_mh: bool) -> Result<DVector<f64>> {
    if with_mh && index == 0 {
        let mh = metropolis_hastings(&spec.graph, &spec.pi)?;
        return poly.project(&poly.from_matrix(mh.matrix()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    poly.random_point(&mut rng)
}

fn admits_mh(spec: &FeasibleSpec) -> bool {
    spec.graph.is_symmetric() && spec.graph.has_all_self_loops()
}

/// Runs descent from `starts` points and keeps the best (ties to the lower index).
fn multistart(
    obj: &dyn Objective,
    spec: &FeasibleSpec,
    random_starts: usize,
    seed: u64,
    opts: &PgdOptions,
    sign: f64,
) -> Result<OptimizeResult> {
    let poly = Polytope::new(spec)?;
    let with_mh = admits_mh(spec);
    let total = random_starts + usize::from(with_mh);
    if total == 0 {
        return Err(PatrolError::InvalidArgument("at least one start is required".into()));
    }
    let runs = par::map_indexed(total, |k| {
        let index = if with_mh { k } else { k + 1 };
        let Ok(x0) = start_point(&poly, spec, seed, index, with_mh) else {
            return Ok(None);
        };
        pgd::descend(obj, &poly, x0, opts)
    });
    let mut best: Option<(usize, pgd::Descent)> = None;
    let mut start_objectives = Vec::with_capacity(total);
    for (k, run) in runs.into_iter().enumerate() {
        match run? {
            Some(d) => {
                start_objectives.push(sign * d.objective);
                if best.as_ref().is_none_or(|(_, b)| d.objective < b.objective) {
                    best = Some((k, d));
                }
            }
            None => start_objectives.push(f64::INFINITY),
        }
    }
    let (best_restart, d) = best.ok_or_else(|| {
        PatrolError::Infeasible("no starting point has a finite objective".into())
    })?;
    Ok(OptimizeResult {
        p: StrategyMatrix::new(poly.to_matrix(&d.x))?,
        objective: sign * d.objective,
        restarts: total,
        best_restart,
        iterations: d.iterations,
        converged: d.converged,
        history: d.history.iter().map(|v| sign * v).collect(),
        start_objectives,
    })
}

/// Minimum Kemeny constant over chains with stationary `π` on the graph.
pub fn minimize_mean_hitting(spec: &FeasibleSpec, restarts: usize, seed: u64, opts: &PgdOptions) -> Result<OptimizeResult> {
    let obj = Kemeny { pi: spec.pi.as_slice().to_vec() };
    multistart(&obj, spec, restarts, seed, opts, 1.0)
}

/// Minimum (weighted) mean hitting time over reversible chains.
///
/// Convex in the unweighted case: one start decides the answer and two extra
/// random starts are run as a cross-check (see [`OptimizeResult::relative_spread`]).
pub fn minimize_mean_hitting_reversible(
    spec: &FeasibleSpec,
    weighted: bool,
    seed: u64,
    opts: &PgdOptions,
) -> Result<OptimizeResult> {
    if !spec.reversible {
        return Err(PatrolError::InvalidArgument("reversible solve needs a reversible feasible set".into()));
    }
    let pi = spec.pi.as_slice().to_vec();
    let base = TraceKemeny { pi: pi.clone() };
    if weighted {
        let obj = WeightedKemeny { pi, weights: spec.graph.weight_matrix(), base };
        multistart(&obj, spec, 2, seed, opts, 1.0)
    } else {
        multistart(&base, spec, 2, seed, opts, 1.0)
    }
}

/// Minimum weighted mean hitting time `(πᵀ(P∘W)1) · M(P)` over general chains.
pub fn minimize_weighted_mean_hitting(
    spec: &FeasibleSpec,
    restarts: usize,
    seed: u64,
    opts: &PgdOptions,
) -> Result<OptimizeResult> {
    let pi = spec.pi.as_slice().to_vec();
    let obj = WeightedKemeny { pi: pi.clone(), weights: spec.graph.weight_matrix(), base: Kemeny { pi } };
    multistart(&obj, spec, restarts, seed, opts, 1.0)
}

/// Pursuer strategy minimizing the expected meeting time with a given evader.
pub fn minimize_meeting_time(
    spec: &FeasibleSpec,
    evader: &StrategyMatrix,
    pi_e: &VisitDistribution,
    restarts: usize,
    seed: u64,
    opts: &PgdOptions,
) -> Result<OptimizeResult> {
    let n = spec.n();
    if evader.n() != n || pi_e.len() != n {
        return Err(PatrolError::DimensionMismatch { expected: n, got: evader.n() });
    }
    let obj = Meeting {
        pi_p: spec.pi.as_slice().to_vec(),
        pi_e: pi_e.as_slice().to_vec(),
        evader: evader.matrix().clone(),
    };
    multistart(&obj, spec, restarts, seed, opts, 1.0)
}

/// Locally maximal truncated return-time entropy at horizon `N_η`.
pub fn maximize_return_entropy(
    spec: &FeasibleSpec,
    eta: f64,
    restarts: usize,
    seed: u64,
    opts: &PgdOptions,
) -> Result<OptimizeResult> {
    if !(spec.epsilon > 0.0) {
        return Err(PatrolError::InvalidArgument("return-time entropy needs epsilon > 0".into()));
    }
    let horizon = truncation_horizon(&spec.graph, &spec.pi, eta)?;
    maximize_return_entropy_at(spec, horizon, restarts, seed, opts)
}

/// As [`maximize_return_entropy`] with an explicit horizon.
pub fn maximize_return_entropy_at(
    spec: &FeasibleSpec,
    horizon: usize,
    restarts: usize,
    seed: u64,
    opts: &PgdOptions,
) -> Result<OptimizeResult> {
    let obj = NegReturnEntropy { graph: spec.graph.clone(), pi: spec.pi.clone(), horizon };
    multistart(&obj, spec, restarts, seed, opts, -1.0)
}
