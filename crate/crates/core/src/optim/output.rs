//! Uniform output selection over `{x^0, ..., x^{T-1}}`.
//!
//! The index is drawn before the run starts, so only one `d`-vector is kept.
//! [`select_output`] uses the same single draw on a retained trace and picks
//! the same index for the same generator state.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct OutputSelector {
    index: u64,
    horizon: u64,
    picked: Option<Vec<f64>>,
}

impl OutputSelector {
    pub fn new(horizon: u64, rng: &mut ChaCha8Rng) -> Result<Self> {
        if horizon == 0 {
            return Err(Error::Empty("output trace"));
        }
        Ok(OutputSelector {
            index: rng.random_range(0..horizon),
            horizon,
            picked: None,
        })
    }

    pub fn index(&self) -> u64 {
        self.index
    }

    pub fn horizon(&self) -> u64 {
        self.horizon
    }

    /// Offer iterate `x^t`; kept only if `t` is the drawn index.
    pub fn observe(&mut self, t: u64, x: &[f64]) {
        if t == self.index {
            self.picked = Some(x.to_vec());
        }
    }

    pub fn finish(self) -> Result<Vec<f64>> {
        self.picked
            .ok_or(Error::Empty("selected iterate was never observed"))
    }
}

/// Picks `trace[k]` with `k` uniform on `0..trace.len()`.
pub fn select_output<'a>(trace: &'a [Vec<f64>], rng: &mut ChaCha8Rng) -> Result<&'a [f64]> {
    if trace.is_empty() {
        return Err(Error::Empty("output trace"));
    }
    let k = rng.random_range(0..trace.len() as u64) as usize;
    Ok(&trace[k])
}
