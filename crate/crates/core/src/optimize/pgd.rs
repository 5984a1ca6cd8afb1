//! Projected gradient descent with Armijo backtracking along the projection arc.

use nalgebra::DVector;

use super::objectives::Objective;
use super::polytope::Polytope;
use crate::error::Result;

#[derive(Debug, Clone, Copy)]
pub struct PgdOptions {
    pub max_iter: usize,
    /// Stop when `‖x − proj(x − ∇f)‖₂` falls below this.
    pub grad_tol: f64,
    pub initial_step: f64,
    pub shrink: f64,
    /// Armijo sufficient-decrease parameter.
    pub armijo: f64,
    /// Give up on an iteration when the trial step falls below this.
    pub min_step: f64,
    /// Start each line search at the last accepted step over `shrink`
    /// (capped at `initial_step`) instead of at `initial_step`.
    pub warm_step: bool,
}

impl Default for PgdOptions {
    fn default() -> Self {
        Self { max_iter: 5000, grad_tol: 1e-8, initial_step: 1.0, shrink: 0.5, armijo: 1e-4, min_step: 1e-14, warm_step: true }
    }
}

#[derive(Debug, Clone)]
pub struct Descent {
    pub x: DVector<f64>,
    pub objective: f64,
    pub iterations: usize,
    pub converged: bool,
    pub history: Vec<f64>,
}

/// Runs projected gradient descent from a feasible `x0`.
///
/// Returns `Ok(None)` when the objective is infinite at `x0`.
pub fn descend(obj: &dyn Objective, poly: &Polytope, x0: DVector<f64>, opts: &PgdOptions) -> Result<Option<Descent>> {
    let mut x = x0;
    let mut history = Vec::new();
    let mut converged = false;
    let mut iterations = 0;
    let mut nu = DVector::zeros(0);
    let Some((mut f, mut grad)) = obj.value_and_grad(&poly.to_matrix(&x)) else {
        return Ok(None);
    };
    history.push(f);
    let mut t0 = opts.initial_step;
    while iterations < opts.max_iter {
        let g = poly.from_matrix(&grad);
        // stationarity is measured with the full step
        if let Ok(full) = poly.project_warm(&(&x - &g * opts.initial_step), &mut nu) {
            if (&full - &x).norm() <= opts.grad_tol {
                converged = true;
                break;
            }
        }
        let mut t = t0;
        let mut accepted = None;
        while t >= opts.min_step {
            let Ok(trial) = poly.project_warm(&(&x - &g * t), &mut nu) else {
                t *= opts.shrink;
                continue;
            };
            let step = &trial - &x;
            let ft = obj.value(&poly.to_matrix(&trial));
            if ft.is_finite() && ft <= f + opts.armijo * g.dot(&step) {
                if opts.warm_step {
                    t0 = (t / opts.shrink).min(opts.initial_step);
                }
                accepted = Some(trial);
                break;
            }
            t *= opts.shrink;
        }
        let Some(next) = accepted else {
            break;
        };
        iterations += 1;
        x = next;
        match obj.value_and_grad(&poly.to_matrix(&x)) {
            Some((fv, gv)) => {
                f = fv;
                grad = gv;
            }
            None => break,
        }
        history.push(f);
    }
    Ok(Some(Descent { x, objective: f, iterations, converged, history }))
}
