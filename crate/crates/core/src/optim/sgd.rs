use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::{stream_rng, SgdSchedule, SAMPLING_STREAM, WARM_PASS_STREAM};
use crate::error::{Error, Result};
use crate::linalg::{add_assign, all_finite, norm};
use crate::oracle::{FiniteSum, Oracle};

#[derive(Debug, Clone)]
pub struct SgdState {
    pub x: Vec<f64>,
    pub t: u64,
    pub schedule: SgdSchedule,
    rng: ChaCha8Rng,
    grad: Vec<f64>,
    reg_grad: Vec<f64>,
}

impl SgdState {
    pub fn new(x0: Vec<f64>, schedule: SgdSchedule, seed: u64) -> Self {
        let d = x0.len();
        SgdState {
            x: x0,
            t: 0,
            schedule,
            rng: stream_rng(seed, SAMPLING_STREAM),
            grad: vec![0.0; d],
            reg_grad: vec![0.0; d],
        }
    }

    /// Step size of the next step.
    pub fn eta(&self, n: usize) -> f64 {
        self.schedule.eta(self.t, n)
    }
}

/// `x <- x - eta_t (grad f_i(x) + grad r(x))` for uniform `i`; one IFO call.
pub fn sgd_step<P: FiniteSum + ?Sized>(
    state: &mut SgdState,
    oracle: &mut Oracle<'_, P>,
) -> Result<()> {
    let n = oracle.n();
    let i = state.rng.random_range(0..n);
    oracle.component_into(i, &state.x, &mut state.grad)?;
    if oracle
        .problem()
        .regularizer(&state.x, &mut state.reg_grad)
        .is_some()
    {
        add_assign(&mut state.grad, &state.reg_grad);
    }
    if !all_finite(&state.grad) {
        return Err(Error::Divergence {
            t: state.t,
            norm: norm(&state.grad),
        });
    }
    let eta = state.schedule.eta(state.t, n);
    for (xk, gk) in state.x.iter_mut().zip(&state.grad) {
        *xk = *xk - eta * gk;
    }
    state.t += 1;
    Ok(())
}

/// One SGD pass without replacement with constant step `eta`, visiting a
/// seeded permutation. Costs `n` IFO calls.
///
/// `visit(i, grad_i, point)` sees each component gradient (without `grad r`)
/// and the point it was evaluated at, before the step is taken; SAGA uses it
/// to fill its anchors.
pub fn sgd_warm_pass<P, F>(
    oracle: &mut Oracle<'_, P>,
    x: &mut [f64],
    eta: f64,
    seed: u64,
    mut visit: F,
) -> Result<()>
where
    P: FiniteSum + ?Sized,
    F: FnMut(usize, &[f64], &[f64]),
{
    let n = oracle.n();
    let d = oracle.dim();
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut stream_rng(seed, WARM_PASS_STREAM));
    let mut grad = vec![0.0; d];
    let mut reg_grad = vec![0.0; d];
    for (t, &i) in order.iter().enumerate() {
        oracle.component_into(i, x, &mut grad)?;
        visit(i, &grad, x);
        if oracle.problem().regularizer(x, &mut reg_grad).is_some() {
            add_assign(&mut grad, &reg_grad);
        }
        if !all_finite(&grad) {
            return Err(Error::Divergence {
                t: t as u64,
                norm: norm(&grad),
            });
        }
        for (xk, gk) in x.iter_mut().zip(&grad) {
            *xk = *xk - eta * gk;
        }
    }
    Ok(())
}
