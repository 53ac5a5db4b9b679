//! Whole SAGA runs with random output, and GD-SAGA restarts.

use serde::{Deserialize, Serialize};

use super::{
    stream_rng, AnchorStorage, OutputSelector, SagaConfig, SagaState, Variant, OUTPUT_STREAM,
};
use crate::error::{Error, Result};
use crate::oracle::{FiniteSum, Oracle};
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, PartialEq)]
pub struct SagaRun {
    /// Uniform pick from `{x^0, ..., x^{T-1}}`.
    pub x_out: Vec<f64>,
    pub output_index: u64,
    pub x_last: Vec<f64>,
}

fn run_epoch<P: FiniteSum + ?Sized>(
    state: &mut SagaState,
    oracle: &mut Oracle<'_, P>,
    steps: u64,
    b: usize,
    out_rng: &mut ChaCha8Rng,
) -> Result<SagaRun> {
    let mut sel = OutputSelector::new(steps, out_rng)?;
    let output_index = sel.index();
    for t in 0..steps {
        sel.observe(t, state.x());
        state.step(oracle, b)?;
    }
    Ok(SagaRun {
        x_out: sel.finish()?,
        output_index,
        x_last: state.x().to_vec(),
    })
}

/// Cold-start SAGA (or Minibatch-SAGA for `b > 1`) for `steps` iterations.
pub fn run_saga<P: FiniteSum + ?Sized>(
    oracle: &mut Oracle<'_, P>,
    x0: &[f64],
    cfg: SagaConfig,
    steps: u64,
    b: usize,
) -> Result<SagaRun> {
    let mut state = SagaState::cold_start(oracle, x0, cfg)?;
    let mut out_rng = stream_rng(cfg.seed, OUTPUT_STREAM);
    run_epoch(&mut state, oracle, steps, b, &mut out_rng)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GdSagaConfig {
    pub epochs: usize,
    pub inner_steps: u64,
    pub eta: f64,
    #[serde(default = "one")]
    pub b: usize,
    pub variant: Variant,
    pub storage: AnchorStorage,
    pub seed: u64,
}

fn one() -> usize {
    1
}

#[derive(Debug, Clone)]
pub struct GdSagaOutput {
    /// `x^0, x^1, ..., x^K`.
    pub iterates: Vec<Vec<f64>>,
}

impl GdSagaOutput {
    pub fn last(&self) -> &[f64] {
        self.iterates.last().expect("at least x^0")
    }
}

/// `K` SAGA epochs of `T` steps; each epoch re-pins all anchors to the
/// incoming iterate and hands its random output to the next epoch.
pub fn gd_saga<P: FiniteSum + ?Sized>(
    oracle: &mut Oracle<'_, P>,
    x0: &[f64],
    cfg: GdSagaConfig,
) -> Result<GdSagaOutput> {
    if cfg.epochs == 0 || cfg.inner_steps == 0 {
        return Err(Error::invalid("GD-SAGA needs K >= 1 and T >= 1"));
    }
    let saga_cfg = SagaConfig {
        eta: cfg.eta,
        variant: cfg.variant,
        storage: cfg.storage,
        track_points: false,
        seed: cfg.seed,
    };
    let mut state = SagaState::cold_start(oracle, x0, saga_cfg)?;
    let mut out_rng = stream_rng(cfg.seed, OUTPUT_STREAM);
    let mut iterates = vec![x0.to_vec()];
    for k in 0..cfg.epochs {
        if k > 0 {
            let incoming = iterates[k].clone();
            state.restart(oracle, &incoming)?;
        }
        let run = run_epoch(&mut state, oracle, cfg.inner_steps, cfg.b, &mut out_rng)?;
        iterates.push(run.x_out);
    }
    Ok(GdSagaOutput { iterates })
}
