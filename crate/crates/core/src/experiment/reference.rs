//! Reference value `f(x_hat)` from long multi-restart gradient descent.

use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::ReferenceSpec;
use crate::error::{Error, Result};
use crate::linalg::norm_sq;
use crate::optim::{gd_step, stream_rng, GdState};
use crate::oracle::{full_value_gradient, FiniteSum, Oracle};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RestartOutcome {
    pub f: f64,
    pub grad_norm_sq: f64,
    pub steps: u64,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceSolution {
    pub x_hat: Vec<f64>,
    pub f_hat: f64,
    pub restarts: Vec<RestartOutcome>,
    /// Set when some benchmark run reached a lower objective than GD did.
    pub improved_by_runs: bool,
    /// Known optimal value of the problem, when there is one.
    pub fstar: Option<f64>,
}

fn restart_point(d: usize, k: usize, seed: u64) -> Vec<f64> {
    if k == 0 {
        return vec![0.0; d];
    }
    let mut rng = stream_rng(seed, 16 + k as u64);
    (0..d).map(|_| StandardNormal.sample(&mut rng)).collect()
}

/// Best objective over `spec.restarts` runs of GD with `eta = 1/L`, each
/// stopped at `||grad f||^2 <= spec.grad_tol` or after its pass budget.
/// Restart 0 starts at the origin, the others at standard Gaussian points.
pub fn reference_solution<P: FiniteSum + ?Sized>(
    problem: &P,
    spec: &ReferenceSpec,
    fstar: Option<f64>,
) -> Result<ReferenceSolution> {
    if spec.restarts == 0 {
        return Err(Error::invalid("reference needs at least one restart"));
    }
    let eta = 1.0 / problem.smoothness().l;
    let d = problem.dim();
    let outcomes: Vec<(Vec<f64>, RestartOutcome)> = (0..spec.restarts)
        .into_par_iter()
        .map(|k| {
            let mut oracle = Oracle::new(problem);
            let mut state = GdState::new(restart_point(d, k, spec.seed), eta);
            let mut converged = false;
            for _ in 0..spec.passes_per_restart {
                let (_, g) = full_value_gradient(problem, &state.x);
                if norm_sq(&g) <= spec.grad_tol {
                    converged = true;
                    break;
                }
                gd_step(&mut state, &mut oracle)?;
            }
            let (f, g) = full_value_gradient(problem, &state.x);
            let gn = norm_sq(&g);
            let outcome = RestartOutcome {
                f,
                grad_norm_sq: gn,
                steps: state.t,
                converged: converged || gn <= spec.grad_tol,
            };
            Ok((state.x, outcome))
        })
        .collect::<Result<_>>()?;
    let best = outcomes
        .iter()
        .enumerate()
        .filter(|(_, (_, o))| o.f.is_finite())
        .min_by(|a, b| a.1 .1.f.total_cmp(&b.1 .1.f))
        .map(|(i, _)| i)
        .ok_or(Error::Empty("no finite reference restart"))?;
    Ok(ReferenceSolution {
        x_hat: outcomes[best].0.clone(),
        f_hat: outcomes[best].1.f,
        restarts: outcomes.into_iter().map(|(_, o)| o).collect(),
        improved_by_runs: false,
        fstar,
    })
}
