//! The `c_t` recursion, descent coefficients `Gamma_t`, the prescribed step
//! sizes, and IFO-count predictions.
//!
//! With `b = 1`:
//!
//! ```text
//! c_T = 0
//! c_t = c_{t+1} (1 - theta) + eta^2 L^3,      theta = 1/n - eta beta - 2 eta^2 L^2
//! Gamma_t = eta - c_{t+1} eta / beta - eta^2 L - 2 c_{t+1} eta^2
//! ```
//!
//! For a minibatch of `b` draws with replacement the refresh probability of an
//! anchor is `p = 1 - (1 - 1/n)^b` and the variance terms shrink by `1/b`:
//! `theta = p - eta beta - 2 eta^2 L^2 / b`, increment `eta^2 L^3 / b`.

use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TheoryParams {
    pub n: usize,
    pub l: f64,
    pub eta: f64,
    pub beta: f64,
    pub t_horizon: usize,
    pub b: usize,
    pub tau: Option<f64>,
    pub k: Option<usize>,
}

impl TheoryParams {
    /// Prescribed `eta = b / (3 L n^(2/3))`, `beta = L / n^(1/3)`.
    pub fn at_theory_step(n: usize, l: f64, t_horizon: usize, b: usize) -> Self {
        let (eta, beta) = theoretical_step(n, l, b);
        TheoryParams {
            n,
            l,
            eta,
            beta,
            t_horizon,
            b,
            tau: None,
            k: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 || self.t_horizon == 0 || self.b == 0 {
            return Err(Error::invalid("n, T and b must be positive"));
        }
        if !(self.l > 0.0 && self.eta > 0.0) || !self.l.is_finite() || !self.eta.is_finite() {
            return Err(Error::invalid("L and eta must be positive and finite"));
        }
        if !(self.beta > 0.0) || !self.beta.is_finite() {
            return Err(Error::invalid(format!(
                "beta must be positive, got {}",
                self.beta
            )));
        }
        Ok(())
    }

    /// Probability that a given anchor is refreshed in one step.
    pub fn refresh_probability(&self) -> f64 {
        let inv_n = 1.0 / self.n as f64;
        if self.b == 1 {
            inv_n
        } else {
            -(self.b as f64 * (-inv_n).ln_1p()).exp_m1()
        }
    }

    pub fn theta(&self) -> f64 {
        let b = self.b as f64;
        self.refresh_probability()
            - self.eta * self.beta
            - 2.0 * self.eta * self.eta * self.l * self.l / b
    }

    /// Additive term `eta^2 L^3 / b` of the recursion.
    pub fn increment(&self) -> f64 {
        self.eta * self.eta * self.l.powi(3) / self.b as f64
    }

    /// `Gamma_t` given `c_{t+1}`.
    pub fn gamma(&self, c_next: f64) -> f64 {
        let eta = self.eta;
        eta - c_next * eta / self.beta - eta * eta * self.l - 2.0 * c_next * eta * eta
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecursionTrace {
    /// `c[t]` for `t = 0..=T`; `c[T] = 0`.
    pub c: Vec<f64>,
    /// `gamma[t] = Gamma_t` for `t = 0..T`.
    pub gamma: Vec<f64>,
    pub gamma_n: f64,
}

impl RecursionTrace {
    pub fn c_max(&self) -> f64 {
        self.c.iter().copied().fold(0.0, f64::max)
    }
}

/// Backward recursion from `c_T = 0`.
///
/// Each `c_t` is carried as an unevaluated sum `hi + lo` so rounding does not
/// build up over long horizons.
pub fn run_recursion(params: &TheoryParams) -> Result<RecursionTrace> {
    params.validate()?;
    let big_t = params.t_horizon;
    let theta = params.theta();
    let q = params.increment();
    let mut c = vec![0.0; big_t + 1];
    let mut gamma = vec![0.0; big_t];
    let (mut hi, mut lo) = (0.0f64, 0.0f64);
    for t in (0..big_t).rev() {
        gamma[t] = params.gamma(c[t + 1]);
        // c_t = c_{t+1} + (q - theta c_{t+1})
        let delta = (-theta).mul_add(hi, q) - theta * lo;
        let (s, e) = two_sum(hi, delta);
        let (h, l) = two_sum(s, e + lo);
        hi = h;
        lo = l;
        c[t] = hi + lo;
    }
    let gamma_n = gamma.iter().copied().fold(f64::INFINITY, f64::min);
    Ok(RecursionTrace { c, gamma, gamma_n })
}

fn two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    let bb = s - a;
    let e = (a - (s - bb)) + (b - bb);
    (s, e)
}

/// `c_t = q (1 - (1 - theta)^(T - t)) / theta`; `None` unless `theta > 0`.
pub fn closed_form(params: &TheoryParams, t: usize) -> Option<f64> {
    let theta = params.theta();
    if !(theta > 0.0) || t > params.t_horizon || theta >= 1.0 {
        return None;
    }
    let m = (params.t_horizon - t) as f64;
    let frac = -(m * (-theta).ln_1p()).exp_m1();
    Some(params.increment() * frac / theta)
}

/// `(eta, beta) = (b / (3 L n^(2/3)), L / n^(1/3))`.
pub fn theoretical_step(n: usize, l: f64, b: usize) -> (f64, f64) {
    let cbrt = (n as f64).cbrt();
    let n23 = cbrt * cbrt;
    if b > 1 && b as f64 >= n23 {
        log::warn!("minibatch size {b} is not below n^(2/3) = {n23:.3}; the step-size guarantee does not apply");
    }
    (b as f64 / (3.0 * l * n23), l / cbrt)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GammaCheck {
    pub gamma_n: f64,
    pub bound: f64,
    /// `gamma_n - bound`.
    pub margin: f64,
    pub c_max: f64,
    pub c_bound: f64,
    pub theta: f64,
    /// Worst ratios of the three parts of `eta - Gamma_t` to
    /// `eta/4`, `eta/3`, `eta/6`; each must be at most 1.
    pub part_ratios: [f64; 3],
    pub pass: bool,
}

/// Relative slack for equalities reached at `n = 1`.
const BOUND_SLACK: f64 = 1e-12;

/// Checks `gamma_n >= b / (12 L n^(2/3))`, `c_t <= L / (4 n^(1/3))` and the
/// three partial inequalities behind them.
pub fn check_gamma_bound(params: &TheoryParams) -> Result<GammaCheck> {
    let trace = run_recursion(params)?;
    let n = params.n as f64;
    let (l, eta, beta) = (params.l, params.eta, params.beta);
    let cbrt = n.cbrt();
    let bound = params.b as f64 / (12.0 * l * cbrt * cbrt);
    let c_bound = l / (4.0 * cbrt);
    let c_max = trace.c_max();
    let part_ratios = [
        c_max * eta / beta / (eta / 4.0),
        eta * eta * l / (eta / 3.0),
        2.0 * c_max * eta * eta / (eta / 6.0),
    ];
    let pass = trace.gamma_n >= bound * (1.0 - BOUND_SLACK)
        && c_max <= c_bound * (1.0 + BOUND_SLACK)
        && part_ratios.iter().all(|&r| r <= 1.0 + BOUND_SLACK);
    Ok(GammaCheck {
        gamma_n: trace.gamma_n,
        bound,
        margin: trace.gamma_n - bound,
        c_max,
        c_bound,
        theta: params.theta(),
        part_ratios,
        pass,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Gd,
    Sgd,
    Saga,
    MinibatchSaga,
    GdSaga,
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "gd" => Method::Gd,
            "sgd" => Method::Sgd,
            "saga" | "reg-saga" => Method::Saga,
            "minibatch-saga" => Method::MinibatchSaga,
            "gd-saga" => Method::GdSaga,
            other => return Err(Error::invalid(format!("unknown method `{other}`"))),
        })
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::Gd => "gd",
            Method::Sgd => "sgd",
            Method::Saga => "saga",
            Method::MinibatchSaga => "minibatch-saga",
            Method::GdSaga => "gd-saga",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BudgetQuery {
    pub method: Method,
    pub n: usize,
    pub eps: f64,
    pub l: f64,
    /// `f(x^0) - f*`.
    pub delta: f64,
    pub tau: Option<f64>,
    pub b: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IfoBudget {
    /// Rate expression with unit constants.
    pub order: f64,
    /// Count with the constants of the corresponding guarantee, where one is
    /// stated.
    pub explicit: Option<f64>,
}

/// Inner length `ceil(24 L tau n^(2/3))` of a GD-SAGA epoch.
pub fn gd_saga_inner_steps(n: usize, l: f64, tau: f64) -> u64 {
    let c = (n as f64).cbrt();
    (24.0 * l * tau * c * c).ceil() as u64
}

/// Oracle calls of one GD-SAGA epoch: `n + 3T`.
pub fn gd_saga_epoch_cost(n: usize, l: f64, tau: f64) -> u64 {
    n as u64 + 3 * gd_saga_inner_steps(n, l, tau)
}

pub fn ifo_budget(q: &BudgetQuery) -> Result<IfoBudget> {
    if q.n == 0 || q.b == 0 || !(q.eps > 0.0) || !(q.l > 0.0) || !(q.delta >= 0.0) {
        return Err(Error::invalid(
            "budget query needs n, b, eps, L > 0 and delta >= 0",
        ));
    }
    let n = q.n as f64;
    let c = n.cbrt();
    let n23 = c * c;
    Ok(match q.method {
        Method::Gd => IfoBudget {
            order: n / q.eps,
            explicit: Some(n * (2.0 * q.l * q.delta / q.eps).ceil()),
        },
        Method::Sgd => IfoBudget {
            order: 1.0 / (q.eps * q.eps),
            explicit: None,
        },
        Method::Saga => IfoBudget {
            order: n + n23 / q.eps,
            explicit: Some(n + 3.0 * (12.0 * q.l * n23 * q.delta / q.eps).ceil()),
        },
        Method::MinibatchSaga => {
            let b = q.b as f64;
            IfoBudget {
                order: n + n23 / q.eps,
                explicit: Some(n + 3.0 * b * (12.0 * q.l * n23 * q.delta / (b * q.eps)).ceil()),
            }
        }
        Method::GdSaga => {
            let tau = q
                .tau
                .ok_or_else(|| Error::invalid("gd-saga budget needs tau"))?;
            let epochs = (q.delta / q.eps).log2().ceil().max(1.0);
            IfoBudget {
                order: (n + tau * n23) * (1.0 / q.eps).ln().max(1.0),
                explicit: Some(epochs * gd_saga_epoch_cost(q.n, q.l, tau) as f64),
            }
        }
    })
}
