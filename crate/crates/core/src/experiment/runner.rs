//! Runs every (run, seed) cell of a config and writes traces plus a manifest.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::config::{Algorithm, BuiltProblem, ExperimentConfig, InitMode, RunSpec, StepPolicy};
use super::reference::{reference_solution, ReferenceSolution};
use super::{Row, SCHEMA};
use crate::error::{Error, Result};
use crate::linalg::norm_sq;
use crate::optim::{
    gd_step, sgd_step, sgd_warm_pass, stream_rng, theory_step_size, AnchorStorage, GdState,
    OutputSelector, SagaConfig, SagaState, SgdSchedule, SgdState, Variant, OUTPUT_STREAM,
};
use crate::oracle::{full_value_gradient, FiniteSum, Oracle};
use crate::theory::gd_saga_inner_steps;

/// One (run, grid point, seed) combination.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub run_index: usize,
    pub label: String,
    pub algorithm: Algorithm,
    pub seed: u64,
    pub schedule: Option<SgdSchedule>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "state", rename_all = "kebab-case")]
pub enum RunStatus {
    Ok,
    Diverged { t: u64, norm: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct CellResult {
    pub cell: Cell,
    pub rows: Vec<Row>,
    pub status: RunStatus,
    /// Iterate when the run stopped (the last finite one on divergence).
    pub x_final: Vec<f64>,
}

impl CellResult {
    pub fn final_row(&self) -> Option<&Row> {
        self.rows.last()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestRun {
    pub label: String,
    pub algorithm: Algorithm,
    pub seed: u64,
    pub file: String,
    pub sha256: String,
    pub status: RunStatus,
    pub ifo_calls: u64,
    pub final_f: f64,
    pub final_grad_norm_sq: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridChoice {
    pub run_index: usize,
    pub label: String,
    pub median_final_f: f64,
    /// Every grid point with its median final objective, in grid order.
    pub candidates: Vec<(String, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub schema: String,
    pub library_version: String,
    pub config_digest: String,
    pub problem_digest: String,
    pub n: usize,
    pub d: usize,
    pub f_hat: f64,
    pub reference: ReferenceSolution,
    pub runs: Vec<ManifestRun>,
    pub sgd_grid: Vec<GridChoice>,
}

#[derive(Debug, Clone)]
pub struct ExperimentOutput {
    pub manifest: Manifest,
    pub manifest_path: PathBuf,
    pub results: Vec<CellResult>,
}

impl ExperimentOutput {
    pub fn any_diverged(&self) -> bool {
        self.results.iter().any(|r| r.status != RunStatus::Ok)
    }
}

/// Shortest round-trip form, switching to exponent notation outside [1e-4, 1e6).
/// SHA-256 of the config as JSON, with the output directory blanked so the
/// digest identifies the experiment rather than where it was written.
pub fn config_digest(config: &ExperimentConfig) -> Result<String> {
    let mut c = config.clone();
    c.output_dir = PathBuf::new();
    Ok(hex::encode(Sha256::digest(serde_json::to_vec(&c)?)))
}

fn fmt_num(v: f64) -> String {
    let a = v.abs();
    if a == 0.0 || (1e-4..1e6).contains(&a) {
        format!("{v}")
    } else {
        format!("{v:e}")
    }
}

/// Expands runs, grid points and seeds into cells, in config order.
pub fn cells(config: &ExperimentConfig) -> Vec<Cell> {
    let mut out = Vec::new();
    for (run_index, run) in config.runs.iter().enumerate() {
        let base = match run.algorithm {
            Algorithm::MinibatchSaga => format!("minibatch-saga-b{}", run.b),
            a => a.name().to_string(),
        };
        let points: Vec<(String, Option<SgdSchedule>)> = match &run.step {
            StepPolicy::SgdGrid { eta0, etap } => eta0
                .iter()
                .flat_map(|&e0| etap.iter().map(move |&ep| (e0, ep)))
                .map(|(e0, ep)| {
                    (
                        format!("{base}-eta0_{}-etap_{}", fmt_num(e0), fmt_num(ep)),
                        Some(SgdSchedule::t_inverse(e0, ep)),
                    )
                })
                .collect(),
            StepPolicy::Schedule { eta0, etap } => {
                vec![(
                    format!("{base}-eta0_{}-etap_{}", fmt_num(*eta0), fmt_num(*etap)),
                    Some(SgdSchedule::t_inverse(*eta0, *etap)),
                )]
            }
            StepPolicy::Constant { eta } => vec![(format!("{base}-eta_{}", fmt_num(*eta)), None)],
            StepPolicy::Theory => vec![(format!("{base}-theory"), None)],
        };
        for (label, schedule) in points {
            for &seed in &config.seeds {
                out.push(Cell {
                    run_index,
                    label: label.clone(),
                    algorithm: run.algorithm,
                    seed,
                    schedule,
                });
            }
        }
    }
    out
}

struct Recorder<'p> {
    problem: &'p dyn FiniteSum,
    stride: u64,
    next_mark: u64,
    rows: Vec<Row>,
    start: Option<Instant>,
}

impl<'p> Recorder<'p> {
    fn new(problem: &'p dyn FiniteSum, stride: u64, wall_clock: bool) -> Self {
        Recorder {
            problem,
            stride,
            next_mark: 0,
            rows: Vec::new(),
            start: wall_clock.then(Instant::now),
        }
    }

    /// Records if the IFO count reached the next mark, or unconditionally.
    fn offer(&mut self, t: u64, calls: u64, x: &[f64], eta: f64, force: bool) {
        if !force && calls < self.next_mark {
            return;
        }
        if self
            .rows
            .last()
            .is_some_and(|r| r.t == t && r.ifo_calls == calls)
        {
            return;
        }
        let (f, g) = full_value_gradient(self.problem, x);
        let wall_ns = self.start.map_or(0, |s| s.elapsed().as_nanos() as u64);
        self.rows.push(Row {
            t,
            ifo_calls: calls,
            f,
            grad_norm_sq: norm_sq(&g),
            eta_t: eta,
            wall_ns,
        });
        self.next_mark = (calls / self.stride + 1) * self.stride;
    }

    /// Records `x` at `(t, calls)`, replacing a row already there.
    fn replace_at(&mut self, t: u64, calls: u64, x: &[f64], eta: f64) {
        if self
            .rows
            .last()
            .is_some_and(|r| r.t == t && r.ifo_calls == calls)
        {
            self.rows.pop();
        }
        self.offer(t, calls, x, eta, true);
    }
}

struct CellContext<'a> {
    config: &'a ExperimentConfig,
    run: &'a RunSpec,
    problem: &'a dyn FiniteSum,
    budget: u64,
    stride: u64,
}

/// Runs one cell, starting from the origin.
pub fn run_cell(
    config: &ExperimentConfig,
    problem: &BuiltProblem,
    cell: &Cell,
) -> Result<CellResult> {
    let p = problem.as_dyn();
    let n = p.n();
    let ctx = CellContext {
        config,
        run: &config.runs[cell.run_index],
        problem: p,
        budget: (config.budget_passes * n as f64).ceil() as u64,
        stride: config.stride.unwrap_or((n as u64 / 10).max(1)),
    };
    let mut rec = Recorder::new(p, ctx.stride, config.record_wall_clock);
    let mut x_final = vec![0.0; p.dim()];
    let outcome = match cell.algorithm {
        Algorithm::Gd => drive_gd(&ctx, cell, &mut rec, &mut x_final),
        Algorithm::Sgd => drive_sgd(&ctx, cell, &mut rec, &mut x_final),
        _ => drive_saga(&ctx, cell, &mut rec, &mut x_final),
    };
    // A finite iterate can still overflow the objective; treat that as divergence too.
    let blown = rec
        .rows
        .iter()
        .find(|r| !(r.f.is_finite() && r.grad_norm_sq.is_finite()));
    let outcome = match (outcome, blown) {
        (Ok(()), Some(r)) => Err(Error::Divergence {
            t: r.t,
            norm: norm_sq(&x_final).sqrt(),
        }),
        (o, _) => o,
    };
    let status = match outcome {
        Ok(()) => RunStatus::Ok,
        Err(Error::Divergence { t, norm }) => {
            log::warn!("{} seed {} diverged at t = {t}", cell.label, cell.seed);
            RunStatus::Diverged { t, norm }
        }
        Err(e) => return Err(e),
    };
    Ok(CellResult {
        cell: cell.clone(),
        rows: rec.rows,
        status,
        x_final,
    })
}

fn warm_or_zero<P: FiniteSum + ?Sized>(
    ctx: &CellContext<'_>,
    oracle: &mut Oracle<'_, P>,
    seed: u64,
) -> Result<Vec<f64>> {
    let mut x = vec![0.0; ctx.problem.dim()];
    if ctx.run.init == InitMode::SgdWarmPass {
        sgd_warm_pass(oracle, &mut x, ctx.config.warm_eta, seed, |_, _, _| {})?;
    }
    Ok(x)
}

fn drive_gd(
    ctx: &CellContext<'_>,
    cell: &Cell,
    rec: &mut Recorder<'_>,
    x_final: &mut Vec<f64>,
) -> Result<()> {
    let mut oracle = Oracle::new(ctx.problem);
    let n = ctx.problem.n() as u64;
    let eta = match ctx.run.step {
        StepPolicy::Constant { eta } => eta,
        _ => 1.0 / ctx.problem.smoothness().l,
    };
    let x0 = warm_or_zero(ctx, &mut oracle, cell.seed)?;
    let mut state = GdState::new(x0, eta);
    rec.offer(0, oracle.calls(), &state.x, eta, true);
    let res = loop {
        if oracle.calls() + n > ctx.budget {
            break Ok(());
        }
        if let Err(e) = gd_step(&mut state, &mut oracle) {
            break Err(e);
        }
        *x_final = state.x.clone();
        rec.offer(state.t, oracle.calls(), &state.x, eta, false);
    };
    *x_final = state.x.clone();
    rec.offer(state.t, oracle.calls(), &state.x, eta, true);
    res
}

fn drive_sgd(
    ctx: &CellContext<'_>,
    cell: &Cell,
    rec: &mut Recorder<'_>,
    x_final: &mut Vec<f64>,
) -> Result<()> {
    let mut oracle = Oracle::new(ctx.problem);
    let n = ctx.problem.n();
    let schedule = cell
        .schedule
        .ok_or_else(|| Error::invalid("sgd cell without a schedule"))?;
    let x0 = warm_or_zero(ctx, &mut oracle, cell.seed)?;
    let mut state = SgdState::new(x0, schedule, cell.seed);
    rec.offer(0, oracle.calls(), &state.x, state.eta(n), true);
    let res = loop {
        if oracle.calls() + 1 > ctx.budget {
            break Ok(());
        }
        let eta = state.eta(n);
        let before = state.x.clone();
        if let Err(e) = sgd_step(&mut state, &mut oracle) {
            *x_final = before;
            rec.offer(state.t, oracle.calls(), x_final, eta, true);
            return Err(e);
        }
        rec.offer(state.t, oracle.calls(), &state.x, eta, false);
    };
    *x_final = state.x.clone();
    rec.offer(state.t, oracle.calls(), &state.x, state.eta(n), true);
    res
}

fn saga_eta(ctx: &CellContext<'_>, b: usize) -> f64 {
    match ctx.run.step {
        StepPolicy::Constant { eta } => eta,
        _ => theory_step_size(ctx.problem.n(), ctx.problem.smoothness().l, b),
    }
}

fn drive_saga(
    ctx: &CellContext<'_>,
    cell: &Cell,
    rec: &mut Recorder<'_>,
    x_final: &mut Vec<f64>,
) -> Result<()> {
    let p = ctx.problem;
    let n = p.n();
    let b = match cell.algorithm {
        Algorithm::MinibatchSaga => ctx.run.b,
        _ => 1,
    };
    let variant = match cell.algorithm {
        Algorithm::RegSaga => Variant::RegSaga,
        _ => Variant::Saga,
    };
    let storage = if variant == Variant::RegSaga && p.linear().is_some() {
        AnchorStorage::Scalar
    } else {
        AnchorStorage::Dense
    };
    let eta = saga_eta(ctx, b);
    let cfg = SagaConfig {
        eta,
        variant,
        storage,
        track_points: false,
        seed: cell.seed,
    };
    let mut oracle = Oracle::new(p);
    let mut state = match ctx.run.init {
        InitMode::Cold => SagaState::cold_start(&mut oracle, &vec![0.0; p.dim()], cfg)?,
        InitMode::SgdWarmPass => {
            SagaState::warm_start(&mut oracle, &vec![0.0; p.dim()], cfg, ctx.config.warm_eta)?
        }
    };
    rec.offer(0, oracle.calls(), state.x(), eta, true);
    let step_cost = 3 * b as u64;
    let mut t_total = 0u64;

    if cell.algorithm == Algorithm::GdSaga {
        let tau = ctx.run.tau.or(p.smoothness().tau);
        let inner = match (ctx.run.inner_steps, tau) {
            (Some(t), _) => t,
            (None, Some(tau)) => gd_saga_inner_steps(n, p.smoothness().l, tau),
            (None, None) => return Err(Error::invalid("gd-saga needs tau or inner_steps")),
        };
        let mut out_rng = stream_rng(cell.seed, OUTPUT_STREAM);
        let mut epoch = 0usize;
        let mut x_out = state.x().to_vec();
        let res = (|| -> Result<()> {
            loop {
                if ctx.run.epochs.is_some_and(|k| epoch >= k) {
                    return Ok(());
                }
                let restart_cost = if epoch == 0 { 0 } else { n as u64 };
                if oracle.calls() + restart_cost + step_cost * inner > ctx.budget {
                    return Ok(());
                }
                if epoch > 0 {
                    state.restart(&mut oracle, &x_out)?;
                }
                let mut sel = OutputSelector::new(inner, &mut out_rng)?;
                for t in 0..inner {
                    sel.observe(t, state.x());
                    state.step(&mut oracle, b)?;
                    t_total += 1;
                    rec.offer(t_total, oracle.calls(), state.x(), eta, false);
                }
                // The epoch's random output is the next starting point.
                x_out = sel.finish()?;
                rec.replace_at(t_total, oracle.calls(), &x_out, eta);
                epoch += 1;
            }
        })();
        *x_final = x_out;
        rec.offer(t_total, oracle.calls(), x_final, eta, true);
        return res;
    }
    let res = (|| -> Result<()> {
        while oracle.calls() + step_cost <= ctx.budget {
            *x_final = state.x().to_vec();
            state.step(&mut oracle, b)?;
            t_total += 1;
            rec.offer(t_total, oracle.calls(), state.x(), eta, false);
        }
        Ok(())
    })();
    if res.is_ok() {
        *x_final = state.x().to_vec();
    }
    rec.offer(t_total, oracle.calls(), x_final, eta, true);
    res
}

/// Median of the final objective per grid point, and the best point, for
/// every SGD grid run.
fn choose_grid(config: &ExperimentConfig, results: &[CellResult]) -> Vec<GridChoice> {
    let mut out = Vec::new();
    for (run_index, run) in config.runs.iter().enumerate() {
        if !matches!(run.step, StepPolicy::SgdGrid { .. }) {
            continue;
        }
        let mut labels: Vec<String> = Vec::new();
        for r in results.iter().filter(|r| r.cell.run_index == run_index) {
            if !labels.contains(&r.cell.label) {
                labels.push(r.cell.label.clone());
            }
        }
        let candidates: Vec<(String, f64)> = labels
            .iter()
            .map(|label| {
                let finals: Vec<f64> = results
                    .iter()
                    .filter(|r| r.cell.run_index == run_index && &r.cell.label == label)
                    .map(|r| match (&r.status, r.final_row()) {
                        (RunStatus::Ok, Some(row)) => row.f,
                        _ => f64::INFINITY,
                    })
                    .collect();
                (label.clone(), super::summary::median(&finals))
            })
            .collect();
        if let Some((label, med)) = candidates
            .iter()
            .filter(|(_, m)| m.is_finite())
            .min_by(|a, b| a.1.total_cmp(&b.1))
            .cloned()
        {
            out.push(GridChoice {
                run_index,
                label,
                median_final_f: med,
                candidates,
            });
        }
    }
    out
}

fn file_name(cell: &Cell) -> String {
    let safe: String = cell
        .label
        .chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || c == '-' || c == '.' || c == '_' {
                c
            } else {
                '_'
            }
        })
        .collect();
    format!("{safe}_seed{}.csv", cell.seed)
}

/// Writes one trace with its schema line.
pub fn write_trace(path: &Path, cell: &Cell, n: usize, f_hat: f64, rows: &[Row]) -> Result<()> {
    let mut buf = Vec::new();
    writeln!(
        buf,
        "# {SCHEMA} algorithm={} label={} seed={} n={n} f_hat={f_hat}",
        cell.algorithm.name(),
        cell.label,
        cell.seed
    )?;
    {
        let mut w = csv::Writer::from_writer(&mut buf);
        for row in rows {
            w.serialize(row)?;
        }
        w.flush()?;
    }
    fs::write(path, buf)?;
    Ok(())
}

fn sha256_file(path: &Path) -> Result<String> {
    Ok(hex::encode(Sha256::digest(fs::read(path)?)))
}

/// Runs all cells (in parallel), computes the reference value, and writes
/// one CSV per cell plus `manifest.json` into the output directory.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentOutput> {
    config.validate()?;
    let problem = BuiltProblem::build(&config.problem)?;
    let p = problem.as_dyn();
    let cells = cells(config);
    let results: Vec<CellResult> = cells
        .par_iter()
        .map(|c| run_cell(config, &problem, c))
        .collect::<Result<_>>()?;

    let mut reference = reference_solution(p, &config.reference, problem.fstar())?;
    // The reference is an incumbent: nothing a run reached may beat it.
    let best_run = results
        .iter()
        .flat_map(|r| r.rows.iter().map(|row| row.f))
        .filter(|f| f.is_finite())
        .fold(f64::INFINITY, f64::min);
    if best_run < reference.f_hat {
        reference.f_hat = best_run;
        reference.improved_by_runs = true;
    }
    let f_hat = reference.f_hat;

    fs::create_dir_all(&config.output_dir)?;
    let mut runs = Vec::with_capacity(results.len());
    for r in &results {
        let file = file_name(&r.cell);
        let path = config.output_dir.join(&file);
        write_trace(&path, &r.cell, p.n(), f_hat, &r.rows)?;
        let last = r.final_row().cloned().unwrap_or_default();
        runs.push(ManifestRun {
            label: r.cell.label.clone(),
            algorithm: r.cell.algorithm,
            seed: r.cell.seed,
            sha256: sha256_file(&path)?,
            file,
            status: r.status.clone(),
            ifo_calls: last.ifo_calls,
            final_f: last.f,
            final_grad_norm_sq: last.grad_norm_sq,
        });
    }
    let manifest = Manifest {
        schema: SCHEMA.to_string(),
        library_version: env!("CARGO_PKG_VERSION").to_string(),
        config_digest: config_digest(config)?,
        problem_digest: hex::encode(Sha256::digest(problem.digest_bytes())),
        n: p.n(),
        d: p.dim(),
        f_hat,
        reference,
        runs,
        sgd_grid: choose_grid(config, &results),
    };
    let manifest_path = config.output_dir.join("manifest.json");
    let mut json = serde_json::to_vec_pretty(&manifest)?;
    json.push(b'\n');
    fs::write(&manifest_path, json)?;
    Ok(ExperimentOutput {
        manifest,
        manifest_path,
        results,
    })
}
