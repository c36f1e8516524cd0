use serde::{Deserialize, Serialize};

use super::{trajectory_cost, trajectory_costs, BezierCurve, CostEvaluation, FoldTask};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrajectoryLmSettings {
    pub max_iterations: usize,
    /// Stop once an accepted step improves the cost by less than this
    /// fraction.
    pub tolerance: f64,
    /// Damping increases tried within one iteration before giving up.
    pub max_rejections: usize,
}

impl Default for TrajectoryLmSettings {
    fn default() -> Self {
        Self { max_iterations: 50, tolerance: 1e-4, max_rejections: 6 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LmLogEntry {
    pub iteration: usize,
    pub lambda: f64,
    pub candidate_cost: f64,
    pub accepted: bool,
    /// Best cost after this candidate.
    pub cost: f64,
    /// Whether the gradient was re-estimated by finite differences (as
    /// opposed to a secant update) before this candidate.
    pub fresh_gradient: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryResult {
    pub curves: Vec<BezierCurve>,
    pub x: Vec<f64>,
    pub initial: CostEvaluation,
    pub last: CostEvaluation,
    pub iterations: usize,
    pub simulations: usize,
    pub log: Vec<LmLogEntry>,
}

fn norm2(v: &[f64]) -> f64 {
    v.iter().map(|a| a * a).sum()
}

/// Forward differences with step `δ`, falling back to a backward difference
/// for infeasible samples. Errors when every sample is infeasible.
fn fd_gradient(task: &FoldTask, x: &[f64], c: f64, sims: &mut usize) -> Result<Vec<f64>> {
    let n = x.len();
    let shifted = |sign: f64, js: &[usize]| -> Vec<Vec<f64>> {
        js.iter()
            .map(|&j| {
                let mut y = x.to_vec();
                y[j] += sign * task.delta;
                y
            })
            .collect()
    };
    let all: Vec<usize> = (0..n).collect();
    let fwd = trajectory_costs(task, &shifted(1.0, &all))?;
    *sims += n;
    let mut g = vec![0.0; n];
    let missing: Vec<usize> = all.iter().copied().filter(|&j| !fwd[j].feasible).collect();
    for j in 0..n {
        if fwd[j].feasible {
            g[j] = (fwd[j].cost - c) / task.delta;
        }
    }
    if !missing.is_empty() {
        let back = trajectory_costs(task, &shifted(-1.0, &missing))?;
        *sims += missing.len();
        let mut any = missing.len() < n;
        for (k, &j) in missing.iter().enumerate() {
            if back[k].feasible {
                g[j] = (c - back[k].cost) / task.delta;
                any = true;
            }
        }
        if !any {
            return Err(Error::OptimizationStalled("every finite-difference sample diverged".into()));
        }
    }
    Ok(g)
}

/// Secant Levenberg-Marquardt on the scalar residual `C(x)`: the gradient is
/// estimated from `δ`-perturbed simulations, updated by Broyden's rule after
/// accepted steps, and re-estimated when a secant direction fails.
pub fn optimize_trajectory(task: &FoldTask) -> Result<TrajectoryResult> {
    task.validate()?;
    let s = task.lm;
    let mut x = task.initial_x()?;
    let initial = trajectory_cost(task, &x)?;
    let mut sims = 1;
    if !initial.feasible {
        return Err(Error::OptimizationStalled("initial trajectory diverged".into()));
    }
    let mut current = initial;
    let mut g = fd_gradient(task, &x, current.cost, &mut sims)?;
    let mut fresh = true;
    let mut lambda = f64::NAN;
    let mut log = Vec::new();
    let mut iterations = 0;

    while iterations < s.max_iterations {
        iterations += 1;
        let gg = norm2(&g);
        if !(gg > 0.0) {
            break;
        }
        if !lambda.is_finite() {
            // First step moves the control points by about δ.
            lambda = (gg.sqrt() * current.cost / task.delta - gg).max(1e-12 * gg);
        }
        let mut accepted = None;
        let used_fresh = fresh;
        let mut tries = 0;
        while tries < s.max_rejections {
            tries += 1;
            let step: Vec<f64> = g.iter().map(|gi| -gi * current.cost / (gg + lambda)).collect();
            let cand: Vec<f64> = x.iter().zip(&step).map(|(a, b)| a + b).collect();
            let eval = trajectory_cost(task, &cand)?;
            sims += 1;
            let ok = eval.feasible && eval.cost < current.cost;
            log.push(LmLogEntry {
                iteration: iterations,
                lambda,
                candidate_cost: eval.cost,
                accepted: ok,
                cost: if ok { eval.cost } else { current.cost },
                fresh_gradient: used_fresh,
            });
            if ok {
                accepted = Some((cand, step, eval));
                break;
            }
            lambda *= 4.0;
            if tries == s.max_rejections && !used_fresh {
                // The secant model may be stale: re-estimate and retry.
                g = fd_gradient(task, &x, current.cost, &mut sims)?;
                fresh = true;
                tries = 0;
                break;
            }
        }
        if tries == 0 {
            continue;
        }
        let Some((cand, step, eval)) = accepted else {
            break;
        };
        let improvement = (current.cost - eval.cost) / current.cost;
        let predicted: f64 = g.iter().zip(&step).map(|(a, b)| a * b).sum();
        let ss = norm2(&step);
        let correction = (eval.cost - current.cost) - predicted;
        for (gi, si) in g.iter_mut().zip(&step) {
            *gi += correction * si / ss;
        }
        fresh = false;
        x = cand;
        current = eval;
        lambda /= 3.0;
        if improvement < s.tolerance {
            break;
        }
    }
    Ok(TrajectoryResult { curves: task.curves(&x)?, x, initial, last: current, iterations, simulations: sims, log })
}
