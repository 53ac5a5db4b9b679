//! Optimizers over a [`FiniteSum`](crate::oracle::FiniteSum): gradient
//! descent, SGD, SAGA, Reg-SAGA, Minibatch-SAGA and GD-SAGA.
//!
//! Every stochastic method owns a seeded [`ChaCha8Rng`]; the trajectory is a
//! pure function of `(problem, config, seed)`. Index sampling, output
//! selection and the warm pass each draw from their own ChaCha stream.

mod gd;
mod gd_saga;
mod output;
mod saga;
mod schedule;
mod sgd;

pub use gd::{gd_step, GdState};
pub use gd_saga::{gd_saga, run_saga, GdSagaConfig, GdSagaOutput, SagaRun};
pub use output::{select_output, OutputSelector};
pub use saga::{
    minibatch_saga_step, reg_saga_step, saga_step, AnchorStorage, AnchorTable, SagaConfig,
    SagaState, Variant,
};
pub use schedule::SgdSchedule;
pub use sgd::{sgd_step, sgd_warm_pass, SgdState};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub(crate) const SAMPLING_STREAM: u64 = 0;
pub(crate) const OUTPUT_STREAM: u64 = 1;
pub(crate) const WARM_PASS_STREAM: u64 = 2;

pub(crate) fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Theory-prescribed constant step `b / (3 L n^(2/3))`; `b = 1` is plain SAGA.
pub fn theory_step_size(n: usize, l: f64, b: usize) -> f64 {
    crate::theory::theoretical_step(n, l, b).0
}
