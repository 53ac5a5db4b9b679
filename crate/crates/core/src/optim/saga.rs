//! SAGA state and its update, shared by plain SAGA, Reg-SAGA and the
//! minibatch variant.
//!
//! One step with index batch `I` (drawn with replacement) and refresh batch
//! `J`:
//!
//! ```text
//! v     = mean_{i in I} (grad f_i(x) - grad f_i(alpha_i)) + g
//! x'    = x - eta * v                      (Reg-SAGA: x - eta * (v + grad r(x)))
//! alpha_j = x,  g -= (grad f_j(alpha_j_old) - grad f_j(x)) / n   for distinct j in J
//! ```
//!
//! Anchors are written with the pre-update iterate. Plain SAGA folds the
//! regularizer into every component; Reg-SAGA keeps it out of the anchors and
//! `g`.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{sgd_warm_pass, stream_rng, SAMPLING_STREAM};
use crate::error::{Error, Result};
use crate::linalg::{add_assign, all_finite, dist_sq, norm};
use crate::oracle::{FiniteSum, Oracle};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Variant {
    /// Regularizer folded into each component.
    Saga,
    /// Regularizer gradient applied fresh at every step, outside the anchors.
    RegSaga,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AnchorStorage {
    /// `n x d` stored gradients.
    Dense,
    /// One `l'(alpha_i^T z_i)` per component; needs linear structure.
    Scalar,
}

impl AnchorStorage {
    /// Floats needed to hold the anchor gradients.
    pub fn required_len(self, n: usize, d: usize) -> usize {
        match self {
            AnchorStorage::Dense => n * d,
            AnchorStorage::Scalar => n,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SagaConfig {
    pub eta: f64,
    pub variant: Variant,
    pub storage: AnchorStorage,
    /// Keep the anchor points `alpha_i` themselves (`n x d`), needed by the
    /// Lyapunov and variance diagnostics.
    pub track_points: bool,
    pub seed: u64,
}

impl SagaConfig {
    pub fn new(eta: f64, seed: u64) -> Self {
        SagaConfig {
            eta,
            variant: Variant::Saga,
            storage: AnchorStorage::Dense,
            track_points: false,
            seed,
        }
    }

    pub fn variant(mut self, variant: Variant) -> Self {
        self.variant = variant;
        self
    }

    pub fn storage(mut self, storage: AnchorStorage) -> Self {
        self.storage = storage;
        self
    }

    pub fn track_points(mut self, yes: bool) -> Self {
        self.track_points = yes;
        self
    }
}

/// Stored anchor information for every component.
#[derive(Debug, Clone)]
pub struct AnchorTable {
    n: usize,
    d: usize,
    storage: AnchorStorage,
    grads: Vec<f64>,
    points: Option<Vec<f64>>,
}

impl AnchorTable {
    fn new(n: usize, d: usize, storage: AnchorStorage, track_points: bool) -> Self {
        AnchorTable {
            n,
            d,
            storage,
            grads: vec![0.0; storage.required_len(n, d)],
            points: track_points.then(|| vec![0.0; n * d]),
        }
    }

    pub fn storage(&self) -> AnchorStorage {
        self.storage
    }

    /// Number of floats held for anchor gradients.
    pub fn stored_len(&self) -> usize {
        self.grads.len()
    }

    /// Writes `grad f_i(alpha_i)` (as stored) into `out`.
    pub fn gradient_into<P: FiniteSum + ?Sized>(&self, problem: &P, i: usize, out: &mut [f64]) {
        match self.storage {
            AnchorStorage::Dense => out.copy_from_slice(&self.grads[i * self.d..(i + 1) * self.d]),
            AnchorStorage::Scalar => {
                let lin = problem
                    .linear()
                    .expect("scalar anchors need linear structure");
                lin.row(i).scatter(self.grads[i], out);
            }
        }
    }

    /// Stored scalar `l'(alpha_i^T z_i)`, for scalar storage.
    pub fn scalar(&self, i: usize) -> Option<f64> {
        (self.storage == AnchorStorage::Scalar).then(|| self.grads[i])
    }

    pub fn point(&self, i: usize) -> Option<&[f64]> {
        self.points
            .as_ref()
            .map(|p| &p[i * self.d..(i + 1) * self.d])
    }

    /// `sum_i ||x - alpha_i||^2`, when points are tracked.
    pub fn spread_sq(&self, x: &[f64]) -> Option<f64> {
        let pts = self.points.as_ref()?;
        Some(pts.chunks_exact(self.d).map(|a| dist_sq(x, a)).sum())
    }

    /// `(1/n) sum_i grad f_i(alpha_i)` recomputed from the table.
    pub fn average_gradient<P: FiniteSum + ?Sized>(&self, problem: &P) -> Vec<f64> {
        let mut sum = vec![0.0; self.d];
        let mut tmp = vec![0.0; self.d];
        self.gradient_into(problem, 0, &mut sum);
        for i in 1..self.n {
            self.gradient_into(problem, i, &mut tmp);
            add_assign(&mut sum, &tmp);
        }
        let nf = self.n as f64;
        sum.iter_mut().for_each(|s| *s /= nf);
        sum
    }

    fn set_point(&mut self, i: usize, x: &[f64]) {
        let d = self.d;
        if let Some(p) = self.points.as_mut() {
            p[i * d..(i + 1) * d].copy_from_slice(x);
        }
    }
}

#[derive(Debug, Clone)]
struct Buffers {
    sum_x: Vec<f64>,
    sum_a: Vec<f64>,
    tmp: Vec<f64>,
    reg: Vec<f64>,
    dir: Vec<f64>,
}

impl Buffers {
    fn new(d: usize) -> Self {
        Buffers {
            sum_x: vec![0.0; d],
            sum_a: vec![0.0; d],
            tmp: vec![0.0; d],
            reg: vec![0.0; d],
            dir: vec![0.0; d],
        }
    }
}

#[derive(Debug, Clone)]
pub struct SagaState {
    x: Vec<f64>,
    g: Vec<f64>,
    anchors: AnchorTable,
    t: u64,
    eta: f64,
    variant: Variant,
    rng: ChaCha8Rng,
    bufs: Buffers,
}

impl SagaState {
    fn empty<P: FiniteSum + ?Sized>(problem: &P, x0: &[f64], cfg: &SagaConfig) -> Result<Self> {
        let (n, d) = (problem.n(), problem.dim());
        if x0.len() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                got: x0.len(),
            });
        }
        if !(cfg.eta >= 0.0) || !cfg.eta.is_finite() {
            return Err(Error::invalid(format!(
                "step size must be finite and >= 0, got {}",
                cfg.eta
            )));
        }
        if cfg.storage == AnchorStorage::Scalar {
            if problem.linear().is_none() {
                return Err(Error::invalid("scalar anchors need a linear-model problem"));
            }
            if cfg.variant == Variant::Saga && problem.has_regularizer() {
                return Err(Error::invalid(
                    "scalar anchors cannot hold a folded regularizer; use Reg-SAGA",
                ));
            }
        }
        Ok(SagaState {
            x: x0.to_vec(),
            g: vec![0.0; d],
            anchors: AnchorTable::new(n, d, cfg.storage, cfg.track_points),
            t: 0,
            eta: cfg.eta,
            variant: cfg.variant,
            rng: stream_rng(cfg.seed, SAMPLING_STREAM),
            bufs: Buffers::new(d),
        })
    }

    /// All anchors at `x0`, `g = (1/n) sum_i grad f_i(x0)`; `n` IFO calls.
    pub fn cold_start<P: FiniteSum + ?Sized>(
        oracle: &mut Oracle<'_, P>,
        x0: &[f64],
        cfg: SagaConfig,
    ) -> Result<Self> {
        let mut state = Self::empty(oracle.problem(), x0, &cfg)?;
        state.pin_anchors(oracle)?;
        Ok(state)
    }

    /// One SGD pass without replacement (step `warm_eta`) fills the anchors
    /// at the points it visits and produces `x0`; `n` IFO calls.
    pub fn warm_start<P: FiniteSum + ?Sized>(
        oracle: &mut Oracle<'_, P>,
        x0: &[f64],
        cfg: SagaConfig,
        warm_eta: f64,
    ) -> Result<Self> {
        let problem = oracle.problem();
        let mut state = Self::empty(problem, x0, &cfg)?;
        let fold = state.folds(problem);
        let d = problem.dim();
        let mut reg = vec![0.0; d];
        let mut x = x0.to_vec();
        let anchors = &mut state.anchors;
        sgd_warm_pass(oracle, &mut x, warm_eta, cfg.seed, |i, grad, point| {
            match anchors.storage {
                AnchorStorage::Dense => {
                    let slot = &mut anchors.grads[i * d..(i + 1) * d];
                    slot.copy_from_slice(grad);
                    if fold {
                        problem.regularizer(point, &mut reg);
                        add_assign(slot, &reg);
                    }
                }
                AnchorStorage::Scalar => {
                    let lin = problem.linear().expect("checked in empty()");
                    anchors.grads[i] = lin.loss_derivative(i, lin.row(i).dot(point));
                }
            }
            anchors.set_point(i, point);
        })?;
        state.x = x;
        state.g = state.anchors.average_gradient(problem);
        Ok(state)
    }

    /// Re-pins every anchor to `x` and restarts the iteration count, keeping
    /// the random stream. `n` IFO calls.
    pub fn restart<P: FiniteSum + ?Sized>(
        &mut self,
        oracle: &mut Oracle<'_, P>,
        x: &[f64],
    ) -> Result<()> {
        if x.len() != self.x.len() {
            return Err(Error::DimensionMismatch {
                expected: self.x.len(),
                got: x.len(),
            });
        }
        self.x.copy_from_slice(x);
        self.t = 0;
        self.pin_anchors(oracle)
    }

    fn pin_anchors<P: FiniteSum + ?Sized>(&mut self, oracle: &mut Oracle<'_, P>) -> Result<()> {
        let problem = oracle.problem();
        let n = problem.n();
        let d = problem.dim();
        let fold = self.folds(problem);
        if fold {
            problem.regularizer(&self.x, &mut self.bufs.reg);
        }
        for i in 0..n {
            match self.anchors.storage {
                AnchorStorage::Dense => {
                    let slot = &mut self.anchors.grads[i * d..(i + 1) * d];
                    oracle.component_into(i, &self.x, slot)?;
                    if fold {
                        add_assign(slot, &self.bufs.reg);
                    }
                }
                AnchorStorage::Scalar => {
                    self.anchors.grads[i] = oracle.scalar_surrogate(i, &self.x)?;
                }
            }
            self.anchors.set_point(i, &self.x);
        }
        self.g = self.anchors.average_gradient(problem);
        Ok(())
    }

    fn folds<P: FiniteSum + ?Sized>(&self, problem: &P) -> bool {
        self.variant == Variant::Saga && problem.has_regularizer()
    }

    pub fn x(&self) -> &[f64] {
        &self.x
    }

    /// Maintained running average of anchor gradients.
    pub fn g(&self) -> &[f64] {
        &self.g
    }

    pub fn anchors(&self) -> &AnchorTable {
        &self.anchors
    }

    pub fn t(&self) -> u64 {
        self.t
    }

    pub fn eta(&self) -> f64 {
        self.eta
    }

    pub fn variant(&self) -> Variant {
        self.variant
    }

    /// Component gradient as SAGA sees it (with `grad r` when folded).
    fn saga_component<P: FiniteSum + ?Sized>(
        &self,
        problem: &P,
        i: usize,
        x: &[f64],
        reg: &[f64],
        fold: bool,
        out: &mut [f64],
    ) {
        problem.component(i, x, out);
        if fold {
            add_assign(out, reg);
        }
    }

    fn estimate_into<P: FiniteSum + ?Sized>(
        &self,
        problem: &P,
        batch: &[usize],
        bufs: &mut Buffers,
        v: &mut [f64],
    ) {
        let fold = self.folds(problem);
        if fold {
            problem.regularizer(&self.x, &mut bufs.reg);
        }
        for (k, &i) in batch.iter().enumerate() {
            self.saga_component(problem, i, &self.x, &bufs.reg, fold, &mut bufs.tmp);
            if k == 0 {
                bufs.sum_x.copy_from_slice(&bufs.tmp);
            } else {
                add_assign(&mut bufs.sum_x, &bufs.tmp);
            }
            self.anchors.gradient_into(problem, i, &mut bufs.tmp);
            if k == 0 {
                bufs.sum_a.copy_from_slice(&bufs.tmp);
            } else {
                add_assign(&mut bufs.sum_a, &bufs.tmp);
            }
        }
        let b = batch.len() as f64;
        for k in 0..v.len() {
            v[k] = bufs.sum_x[k] / b - (bufs.sum_a[k] / b - self.g[k]);
        }
    }

    /// The variance-reduced estimate `v` for a given index batch, without
    /// changing the state or counting oracle calls.
    pub fn estimator<P: FiniteSum + ?Sized>(
        &self,
        problem: &P,
        batch: &[usize],
    ) -> Result<Vec<f64>> {
        check_batch(problem.n(), batch)?;
        let mut bufs = Buffers::new(self.x.len());
        let mut v = vec![0.0; self.x.len()];
        self.estimate_into(problem, batch, &mut bufs, &mut v);
        Ok(v)
    }

    /// One update with explicit index batch and refresh set. Costs
    /// `2 |batch| + |distinct refresh|` IFO calls.
    pub fn update_with<P: FiniteSum + ?Sized>(
        &mut self,
        oracle: &mut Oracle<'_, P>,
        batch: &[usize],
        refresh: &[usize],
    ) -> Result<()> {
        let problem = oracle.problem();
        let n = problem.n();
        check_batch(n, batch)?;
        check_batch(n, refresh)?;
        let mut bufs = std::mem::replace(&mut self.bufs, Buffers::new(0));
        let mut dir = std::mem::take(&mut bufs.dir);
        self.estimate_into(problem, batch, &mut bufs, &mut dir);
        let fold = self.folds(problem);
        if self.variant == Variant::RegSaga && problem.regularizer(&self.x, &mut bufs.reg).is_some()
        {
            add_assign(&mut dir, &bufs.reg);
        }
        if !all_finite(&dir) {
            let norm = norm(&dir);
            bufs.dir = dir;
            self.bufs = bufs;
            return Err(Error::Divergence { t: self.t, norm });
        }
        oracle.charge(2 * batch.len() as u64);

        let nf = n as f64;
        let d = self.x.len();
        for (k, &j) in refresh.iter().enumerate() {
            if refresh[..k].contains(&j) {
                continue;
            }
            match self.anchors.storage {
                AnchorStorage::Dense => {
                    oracle.component_into(j, &self.x, &mut bufs.tmp)?;
                    if fold {
                        add_assign(&mut bufs.tmp, &bufs.reg);
                    }
                    let old = &mut self.anchors.grads[j * d..(j + 1) * d];
                    if n == 1 {
                        self.g.copy_from_slice(&bufs.tmp);
                    } else {
                        for k in 0..d {
                            self.g[k] = self.g[k] - (old[k] - bufs.tmp[k]) / nf;
                        }
                    }
                    old.copy_from_slice(&bufs.tmp);
                }
                AnchorStorage::Scalar => {
                    let s_new = oracle.scalar_surrogate(j, &self.x)?;
                    let s_old = self.anchors.grads[j];
                    let row = problem.linear().expect("checked at construction").row(j);
                    if n == 1 {
                        row.scatter(s_new, &mut self.g);
                    } else {
                        for (&idx, &z) in row.indices.iter().zip(row.values) {
                            self.g[idx] = self.g[idx] - (s_old * z - s_new * z) / nf;
                        }
                    }
                    self.anchors.grads[j] = s_new;
                }
            }
            self.anchors.set_point(j, &self.x);
        }

        for (xk, dk) in self.x.iter_mut().zip(&dir) {
            *xk = *xk - self.eta * dk;
        }
        bufs.dir = dir;
        self.bufs = bufs;
        self.t += 1;
        if !all_finite(&self.x) {
            return Err(Error::Divergence {
                t: self.t,
                norm: norm(&self.x),
            });
        }
        Ok(())
    }

    /// Draws `b` indices for the estimate, then `b` refresh indices, all
    /// uniform with replacement from the sampling stream.
    pub fn step<P: FiniteSum + ?Sized>(
        &mut self,
        oracle: &mut Oracle<'_, P>,
        b: usize,
    ) -> Result<()> {
        let n = oracle.n();
        if b == 0 || b > n {
            return Err(Error::invalid(format!(
                "minibatch size {b} must lie in 1..={n}"
            )));
        }
        let batch: Vec<usize> = (0..b).map(|_| self.rng.random_range(0..n)).collect();
        let refresh: Vec<usize> = (0..b).map(|_| self.rng.random_range(0..n)).collect();
        self.update_with(oracle, &batch, &refresh)
    }
}

fn check_batch(n: usize, batch: &[usize]) -> Result<()> {
    if batch.is_empty() {
        return Err(Error::invalid("empty index batch"));
    }
    if let Some(&i) = batch.iter().find(|&&i| i >= n) {
        return Err(Error::IndexOutOfRange { index: i, n });
    }
    Ok(())
}

/// One SAGA iteration: uniform `i_t`, then `j_t`; three IFO calls.
pub fn saga_step<P: FiniteSum + ?Sized>(
    state: &mut SagaState,
    oracle: &mut Oracle<'_, P>,
) -> Result<()> {
    if state.variant != Variant::Saga {
        return Err(Error::invalid("saga_step on a Reg-SAGA state"));
    }
    state.step(oracle, 1)
}

/// One Reg-SAGA iteration: `x <- x - eta (v + grad r(x))`.
pub fn reg_saga_step<P: FiniteSum + ?Sized>(
    state: &mut SagaState,
    oracle: &mut Oracle<'_, P>,
) -> Result<()> {
    if state.variant != Variant::RegSaga {
        return Err(Error::invalid("reg_saga_step on a plain SAGA state"));
    }
    state.step(oracle, 1)
}

/// One Minibatch-SAGA iteration with batch size `b`; at most `3b` IFO calls.
pub fn minibatch_saga_step<P: FiniteSum + ?Sized>(
    state: &mut SagaState,
    oracle: &mut Oracle<'_, P>,
    b: usize,
) -> Result<()> {
    state.step(oracle, b)
}
