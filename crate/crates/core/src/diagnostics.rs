//! Executable checks of the ingredients of the SAGA analysis: finite
//! differences, exact enumeration of the estimator's mean and second moment,
//! the Lyapunov function `R^t`, and gradient dominance.
//!
//! Every expectation here is computed by enumerating all outcomes, never by
//! sampling.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::linalg::{dist_sq, dot, norm, norm_sq};
use crate::optim::{SagaState, Variant};
use crate::oracle::{full_value_gradient, objective, FiniteSum, Oracle};
use crate::problems::PlQuadratic;

/// Slack used for exact inequalities and identities.
pub const EXACT_TOL: f64 = 1e-12;

/// Machine-readable result of one check.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckReport {
    pub name: String,
    pub inputs_digest: String,
    pub margin: f64,
    pub pass: bool,
}

impl CheckReport {
    pub fn new(name: impl Into<String>, inputs: &[&[f64]], margin: f64, pass: bool) -> Self {
        CheckReport {
            name: name.into(),
            inputs_digest: digest_f64(inputs),
            margin,
            pass,
        }
    }
}

/// SHA-256 over the little-endian bytes of every slice, in order.
pub fn digest_f64(parts: &[&[f64]]) -> String {
    let mut h = Sha256::new();
    for part in parts {
        h.update((part.len() as u64).to_le_bytes());
        for v in *part {
            h.update(v.to_le_bytes());
        }
    }
    hex::encode(h.finalize())
}

/// Default central-difference step `1e-6 (1 + ||x||)`.
pub fn default_fd_step(x: &[f64]) -> f64 {
    1e-6 * (1.0 + norm(x))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GradCheck {
    pub max_rel_err: f64,
    pub worst_coord: usize,
}

fn fd_compare(
    mut f: impl FnMut(&[f64]) -> f64,
    analytic: &[f64],
    x: &[f64],
    h: f64,
) -> Result<GradCheck> {
    if !(h > 0.0) {
        return Err(Error::invalid("finite-difference step must be positive"));
    }
    let fx = f(x);
    let amax = analytic.iter().fold(0.0f64, |m, a| m.max(a.abs()));
    // Coordinates far below the overall scale are compared against it instead.
    let floor = (1e-3 * (fx.abs() + amax)).max(f64::MIN_POSITIVE);
    let mut xp = x.to_vec();
    let mut best = GradCheck {
        max_rel_err: 0.0,
        worst_coord: 0,
    };
    for k in 0..x.len() {
        xp[k] = x[k] + h;
        let up = f(&xp);
        xp[k] = x[k] - h;
        let down = f(&xp);
        xp[k] = x[k];
        let fd = (up - down) / (2.0 * h);
        let err = (analytic[k] - fd).abs() / analytic[k].abs().max(fd.abs()).max(floor);
        if err > best.max_rel_err || !err.is_finite() {
            best = GradCheck {
                max_rel_err: err,
                worst_coord: k,
            };
        }
    }
    Ok(best)
}

/// Worst per-coordinate relative error between the analytic full gradient
/// and central differences of the objective.
pub fn grad_check<P: FiniteSum + ?Sized>(problem: &P, x: &[f64], h: f64) -> Result<GradCheck> {
    check_dim(problem, x)?;
    let (_, g) = full_value_gradient(problem, x);
    fd_compare(|y| objective(problem, y), &g, x, h)
}

/// As [`grad_check`] for a single component `f_i`.
pub fn component_grad_check<P: FiniteSum + ?Sized>(
    problem: &P,
    i: usize,
    x: &[f64],
    h: f64,
) -> Result<GradCheck> {
    check_dim(problem, x)?;
    if i >= problem.n() {
        return Err(Error::IndexOutOfRange {
            index: i,
            n: problem.n(),
        });
    }
    let mut g = vec![0.0; x.len()];
    problem.component(i, x, &mut g);
    let mut scratch = vec![0.0; x.len()];
    fd_compare(|y| problem.component(i, y, &mut scratch), &g, x, h)
}

fn check_dim<P: FiniteSum + ?Sized>(problem: &P, x: &[f64]) -> Result<()> {
    if x.len() != problem.dim() {
        return Err(Error::DimensionMismatch {
            expected: problem.dim(),
            got: x.len(),
        });
    }
    Ok(())
}

/// Mean of the component gradients as the estimator sees them: with the
/// regularizer for plain SAGA, without it for Reg-SAGA.
fn estimator_target<P: FiniteSum + ?Sized>(problem: &P, state: &SagaState) -> Vec<f64> {
    let x = state.x();
    let (_, mut g) = full_value_gradient(problem, x);
    if state.variant() == Variant::RegSaga {
        let mut r = vec![0.0; x.len()];
        if problem.regularizer(x, &mut r).is_some() {
            g.iter_mut().zip(&r).for_each(|(gk, rk)| *gk -= rk);
        }
    }
    g
}

/// Calls `visit` with every index tuple in `[n]^b`, in lexicographic order.
fn for_each_tuple(n: usize, b: usize, mut visit: impl FnMut(&[usize]) -> Result<()>) -> Result<()> {
    let total = (n as u128).checked_pow(b as u32).unwrap_or(u128::MAX);
    if total > 1 << 20 {
        return Err(Error::invalid(format!(
            "{n}^{b} outcomes is too many to enumerate"
        )));
    }
    let mut idx = vec![0usize; b];
    loop {
        visit(&idx)?;
        let mut k = b;
        loop {
            if k == 0 {
                return Ok(());
            }
            k -= 1;
            idx[k] += 1;
            if idx[k] < n {
                break;
            }
            idx[k] = 0;
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Unbiasedness {
    pub mean_estimate: Vec<f64>,
    pub target: Vec<f64>,
    /// `|| mean v - grad f ||`.
    pub error: f64,
    pub pass: bool,
}

/// Exact mean of `v^t` over all `n^b` index batches at the current state.
pub fn unbiasedness<P: FiniteSum + ?Sized>(
    state: &SagaState,
    problem: &P,
    b: usize,
) -> Result<Unbiasedness> {
    let d = problem.dim();
    let mut sum = vec![0.0; d];
    let mut count = 0u64;
    for_each_tuple(problem.n(), b, |batch| {
        let v = state.estimator(problem, batch)?;
        sum.iter_mut().zip(&v).for_each(|(s, vk)| *s += vk);
        count += 1;
        Ok(())
    })?;
    let mean: Vec<f64> = sum.iter().map(|s| s / count as f64).collect();
    let target = estimator_target(problem, state);
    let error = dist_sq(&mean, &target).sqrt();
    let pass = error <= EXACT_TOL * norm(&target).max(1.0);
    Ok(Unbiasedness {
        mean_estimate: mean,
        target,
        error,
        pass,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VarianceCheck {
    /// Exact `E ||v^t||^2`.
    pub lhs: f64,
    /// `2 ||grad f||^2 + (2 L^2 / (n b)) sum_i ||x - alpha_i||^2`.
    pub rhs: f64,
    pub slack: f64,
    pub holds: bool,
}

/// Second-moment bound on the estimator at the current state. Needs a state
/// that tracks anchor points.
pub fn variance_bound_check<P: FiniteSum + ?Sized>(
    state: &SagaState,
    problem: &P,
    b: usize,
) -> Result<VarianceCheck> {
    let spread = state
        .anchors()
        .spread_sq(state.x())
        .ok_or_else(|| Error::invalid("variance check needs tracked anchor points"))?;
    let mut sum = 0.0;
    let mut count = 0u64;
    for_each_tuple(problem.n(), b, |batch| {
        sum += norm_sq(&state.estimator(problem, batch)?);
        count += 1;
        Ok(())
    })?;
    let lhs = sum / count as f64;
    let l = problem.smoothness().l;
    let grad = estimator_target(problem, state);
    let rhs = 2.0 * norm_sq(&grad) + 2.0 * l * l / (problem.n() * b) as f64 * spread;
    let slack = rhs - lhs;
    Ok(VarianceCheck {
        lhs,
        rhs,
        slack,
        holds: slack >= -EXACT_TOL * rhs.max(1.0),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LyapunovSnapshot {
    pub t: u64,
    pub f_val: f64,
    /// `(c_t / n) sum_i ||x^t - alpha_i^t||^2`.
    pub anchor_spread: f64,
    pub r: f64,
}

pub fn lyapunov_snapshot<P: FiniteSum + ?Sized>(
    state: &SagaState,
    problem: &P,
    c_t: f64,
) -> Result<LyapunovSnapshot> {
    let spread = state
        .anchors()
        .spread_sq(state.x())
        .ok_or_else(|| Error::invalid("Lyapunov tracking needs tracked anchor points"))?;
    let f_val = objective(problem, state.x());
    let anchor_spread = c_t / problem.n() as f64 * spread;
    Ok(LyapunovSnapshot {
        t: state.t(),
        f_val,
        anchor_spread,
        r: f_val + anchor_spread,
    })
}

/// Runs `c.len() - 1` steps of batch size `b`, recording `R^t` every
/// `stride` steps and at the end. `c[t]` is the recursion value at step `t`.
pub fn lyapunov_trace<P: FiniteSum + ?Sized>(
    oracle: &mut Oracle<'_, P>,
    state: &mut SagaState,
    c: &[f64],
    b: usize,
    stride: usize,
) -> Result<Vec<LyapunovSnapshot>> {
    if stride == 0 {
        return Err(Error::invalid("snapshot stride must be positive"));
    }
    if c.is_empty() {
        return Err(Error::Empty("c_t schedule"));
    }
    let steps = c.len() - 1;
    let problem = oracle.problem();
    let mut out = vec![lyapunov_snapshot(state, problem, c[0])?];
    for t in 1..=steps {
        state.step(oracle, b)?;
        if t % stride == 0 || t == steps {
            out.push(lyapunov_snapshot(state, problem, c[t])?);
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LyapunovStep {
    pub r_t: f64,
    /// `E[R^{t+1} | state]` over all `(i_t, j_t)`.
    pub expected_r_next: f64,
    /// `Gamma_t ||grad f(x^t)||^2`.
    pub required_decrease: f64,
    /// `R^t - Gamma_t ||grad f||^2 - E[R^{t+1}]`.
    pub slack: f64,
    pub holds: bool,
}

/// One-step Lyapunov descent with the expectation over all `n^2` pairs
/// `(i_t, j_t)` taken exactly from the current state.
pub fn lyapunov_descent_exact<P: FiniteSum + ?Sized>(
    state: &SagaState,
    problem: &P,
    c_t: f64,
    c_next: f64,
    gamma_t: f64,
) -> Result<LyapunovStep> {
    if state.variant() != Variant::Saga {
        return Err(Error::invalid(
            "exact Lyapunov check is defined for plain SAGA",
        ));
    }
    let n = problem.n();
    let r_t = lyapunov_snapshot(state, problem, c_t)?.r;
    let (_, grad) = full_value_gradient(problem, state.x());
    let mut sum = 0.0;
    for i in 0..n {
        for j in 0..n {
            let mut next = state.clone();
            let mut scratch = Oracle::new(problem);
            next.update_with(&mut scratch, &[i], &[j])?;
            sum += lyapunov_snapshot(&next, problem, c_next)?.r;
        }
    }
    let expected_r_next = sum / (n * n) as f64;
    let required_decrease = gamma_t * norm_sq(&grad);
    let slack = r_t - required_decrease - expected_r_next;
    let holds = slack >= -EXACT_TOL * r_t.abs().max(1.0);
    Ok(LyapunovStep {
        r_t,
        expected_r_next,
        required_decrease,
        slack,
        holds,
    })
}

/// Slack of `f(x) <= f(y) + <grad f(y), x - y> + (L/2) ||x - y||^2`.
pub fn descent_lemma_slack<P: FiniteSum + ?Sized>(problem: &P, x: &[f64], y: &[f64]) -> f64 {
    let l = problem.smoothness().l;
    let fx = objective(problem, x);
    let (fy, gy) = full_value_gradient(problem, y);
    let diff: Vec<f64> = x.iter().zip(y).map(|(a, b)| a - b).collect();
    fy + dot(&gy, &diff) + 0.5 * l * norm_sq(&diff) - fx
}

/// `||grad f_i(x) - grad f_i(y)|| / ||x - y||`.
pub fn lipschitz_ratio<P: FiniteSum + ?Sized>(problem: &P, i: usize, x: &[f64], y: &[f64]) -> f64 {
    let mut gx = vec![0.0; x.len()];
    let mut gy = vec![0.0; x.len()];
    problem.component(i, x, &mut gx);
    problem.component(i, y, &mut gy);
    (dist_sq(&gx, &gy) / dist_sq(x, y)).sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlAudit {
    /// Largest `(f(x) - f*) / ||grad f(x)||^2` seen.
    pub worst_ratio: f64,
    pub tau: f64,
    /// Samples at the optimum, where the ratio is `0/0`.
    pub excluded: usize,
    pub pass: bool,
}

/// Audits gradient dominance against a known optimal value.
pub fn pl_audit_with<P: FiniteSum + ?Sized>(
    problem: &P,
    fstar: f64,
    tau: f64,
    samples: &[Vec<f64>],
) -> Result<PlAudit> {
    if samples.is_empty() {
        return Err(Error::Empty("PL audit samples"));
    }
    let mut worst = 0.0f64;
    let mut excluded = 0;
    for x in samples {
        check_dim(problem, x)?;
        let (f, g) = full_value_gradient(problem, x);
        let gap = f - fstar;
        let gn = norm_sq(&g);
        if gn == 0.0 {
            if gap > EXACT_TOL * (1.0 + fstar.abs()) {
                return Err(Error::PlViolation { gap });
            }
            excluded += 1;
            continue;
        }
        worst = worst.max(gap / gn);
    }
    Ok(PlAudit {
        worst_ratio: worst,
        tau,
        excluded,
        pass: worst <= tau * (1.0 + EXACT_TOL),
    })
}

pub fn pl_audit(problem: &PlQuadratic, samples: &[Vec<f64>]) -> Result<PlAudit> {
    pl_audit_with(problem, problem.fstar(), problem.tau(), samples)
}

/// `count` standard Gaussian points around `center`, scaled by `scale`.
pub fn gaussian_samples(center: &[f64], scale: f64, count: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            center
                .iter()
                .map(|c| {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    c + scale * z
                })
                .collect()
        })
        .collect()
}

/// The diagnostics run by `saga-bench check`: finite differences on both
/// bundled problem families, exact unbiasedness and second-moment checks along
/// SAGA and Minibatch-SAGA runs, exact Lyapunov descent, a PL audit and the
/// step-size bound. Deterministic in `seed`.
pub fn standard_suite(seed: u64) -> Result<Vec<CheckReport>> {
    use crate::data::make_synthetic_classification;
    use crate::optim::{theory_step_size, SagaConfig};
    use crate::problems::{make_pl_quadratic, LinearModelProblem, RegularizerParams};
    use crate::theory::{check_gamma_bound, run_recursion, TheoryParams};

    let mut out = Vec::new();

    let ds = make_synthetic_classification(200, 10, 1.0, 1.0, seed)?;
    let logistic = LinearModelProblem::from_dataset(&ds, Some(RegularizerParams::default()))?;
    let quad = make_pl_quadratic(16, 6, 4, seed)?;
    for (name, problem, scale) in [
        (
            "grad_check/logistic+regularizer",
            &logistic as &dyn FiniteSum,
            1.0,
        ),
        ("grad_check/pl-quadratic", &quad as &dyn FiniteSum, 1.0),
    ] {
        let samples = gaussian_samples(&vec![0.0; problem.dim()], scale, 100, seed ^ 0x9e37);
        let mut worst = 0.0f64;
        for x in &samples {
            worst = worst.max(grad_check(problem, x, default_fd_step(x))?.max_rel_err);
        }
        let flat: Vec<f64> = samples.concat();
        out.push(CheckReport::new(
            name,
            &[&flat],
            1e-5 - worst,
            worst <= 1e-5,
        ));
    }

    let small = make_pl_quadratic(8, 3, 3, seed)?;
    let eta = theory_step_size(8, small.smoothness().l, 1);
    let x0 = vec![1.0, -1.0, 0.5];
    let mut oracle = Oracle::new(&small);
    let mut state = SagaState::cold_start(
        &mut oracle,
        &x0,
        SagaConfig::new(eta, seed).track_points(true),
    )?;
    let (mut worst_bias, mut worst_slack) = (0.0f64, f64::INFINITY);
    for _ in 0..50 {
        worst_bias = worst_bias.max(unbiasedness(&state, &small, 1)?.error);
        worst_slack = worst_slack.min(variance_bound_check(&state, &small, 1)?.slack);
        crate::optim::saga_step(&mut state, &mut oracle)?;
    }
    out.push(CheckReport::new(
        "unbiasedness/saga",
        &[&x0],
        EXACT_TOL - worst_bias,
        worst_bias <= EXACT_TOL,
    ));
    out.push(CheckReport::new(
        "variance_bound/saga",
        &[&x0],
        worst_slack,
        worst_slack >= -EXACT_TOL,
    ));

    let tiny = make_pl_quadratic(4, 2, 2, seed)?;
    let eta = theory_step_size(4, tiny.smoothness().l, 2);
    let x0 = vec![2.0, -1.0];
    let mut oracle = Oracle::new(&tiny);
    let mut state = SagaState::cold_start(
        &mut oracle,
        &x0,
        SagaConfig::new(eta, seed).track_points(true),
    )?;
    let (mut worst_bias, mut worst_slack) = (0.0f64, f64::INFINITY);
    for _ in 0..20 {
        worst_bias = worst_bias.max(unbiasedness(&state, &tiny, 2)?.error);
        worst_slack = worst_slack.min(variance_bound_check(&state, &tiny, 2)?.slack);
        state.step(&mut oracle, 2)?;
    }
    out.push(CheckReport::new(
        "unbiasedness/minibatch-b2",
        &[&x0],
        EXACT_TOL - worst_bias,
        worst_bias <= EXACT_TOL,
    ));
    out.push(CheckReport::new(
        "variance_bound/minibatch-b2",
        &[&x0],
        worst_slack,
        worst_slack >= -EXACT_TOL,
    ));

    let steps = 20;
    let params = TheoryParams::at_theory_step(4, tiny.smoothness().l, steps, 1);
    let trace = run_recursion(&params)?;
    let mut oracle = Oracle::new(&tiny);
    let mut state = SagaState::cold_start(
        &mut oracle,
        &x0,
        SagaConfig::new(params.eta, seed).track_points(true),
    )?;
    let mut worst = f64::INFINITY;
    for t in 0..steps {
        let step =
            lyapunov_descent_exact(&state, &tiny, trace.c[t], trace.c[t + 1], trace.gamma[t])?;
        worst = worst.min(step.slack);
        crate::optim::saga_step(&mut state, &mut oracle)?;
    }
    out.push(CheckReport::new(
        "lyapunov_descent/exact",
        &[&x0],
        worst,
        worst >= -EXACT_TOL,
    ));

    let rank_deficient = make_pl_quadratic(20, 8, 5, seed)?;
    let samples = gaussian_samples(rank_deficient.xstar(), 1.0, 1000, seed);
    let audit = pl_audit(&rank_deficient, &samples)?;
    out.push(CheckReport::new(
        "pl_audit/rank-deficient",
        &[&samples.concat()],
        audit.tau - audit.worst_ratio,
        audit.pass,
    ));

    for n in [10usize, 100, 1000] {
        let chk = check_gamma_bound(&TheoryParams::at_theory_step(n, 1.0, 10 * n, 1))?;
        out.push(CheckReport::new(
            format!("gamma_bound/n={n}"),
            &[&[n as f64]],
            chk.margin,
            chk.pass,
        ));
    }
    Ok(out)
}
