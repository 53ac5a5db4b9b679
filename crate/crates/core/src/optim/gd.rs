use crate::error::{Error, Result};
use crate::linalg::{all_finite, norm};
use crate::oracle::{FiniteSum, Oracle};

#[derive(Debug, Clone)]
pub struct GdState {
    pub x: Vec<f64>,
    pub t: u64,
    pub eta: f64,
}

impl GdState {
    pub fn new(x0: Vec<f64>, eta: f64) -> Self {
        GdState { x: x0, t: 0, eta }
    }
}

/// `x <- x - eta * grad f(x)`; costs `n` IFO calls.
pub fn gd_step<P: FiniteSum + ?Sized>(
    state: &mut GdState,
    oracle: &mut Oracle<'_, P>,
) -> Result<()> {
    let grad = oracle.full_gradient(&state.x)?;
    if !all_finite(&grad) {
        return Err(Error::Divergence {
            t: state.t,
            norm: norm(&grad),
        });
    }
    for (xk, gk) in state.x.iter_mut().zip(&grad) {
        *xk = *xk - state.eta * gk;
    }
    state.t += 1;
    Ok(())
}
