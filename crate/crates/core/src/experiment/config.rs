//! Experiment configuration, deserialized from JSON.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::data::{load_libsvm, make_synthetic_classification};
use crate::error::{Error, Result};
use crate::oracle::FiniteSum;
use crate::problems::{make_pl_quadratic, LinearModelProblem, PlQuadratic, RegularizerParams};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ProblemSpec {
    /// Regularized logistic regression on a libsvm file (gzip allowed).
    Libsvm {
        path: PathBuf,
        #[serde(default)]
        dim: Option<usize>,
        #[serde(default = "default_lambda")]
        lambda: f64,
        #[serde(default = "default_alpha")]
        alpha: f64,
    },
    /// Regularized logistic regression on two Gaussian clusters.
    Synthetic {
        n: usize,
        d: usize,
        separation: f64,
        noise: f64,
        data_seed: u64,
        #[serde(default = "default_lambda")]
        lambda: f64,
        #[serde(default = "default_alpha")]
        alpha: f64,
    },
    /// Least squares with known optimum, for GD-SAGA.
    PlQuadratic {
        n: usize,
        d: usize,
        rank: usize,
        seed: u64,
    },
}

fn default_lambda() -> f64 {
    RegularizerParams::default().lambda
}

fn default_alpha() -> f64 {
    RegularizerParams::default().alpha
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Algorithm {
    Gd,
    Sgd,
    Saga,
    RegSaga,
    MinibatchSaga,
    GdSaga,
}

impl Algorithm {
    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Gd => "gd",
            Algorithm::Sgd => "sgd",
            Algorithm::Saga => "saga",
            Algorithm::RegSaga => "reg-saga",
            Algorithm::MinibatchSaga => "minibatch-saga",
            Algorithm::GdSaga => "gd-saga",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        serde_json::from_value(serde_json::Value::String(s.to_string()))
            .map_err(|_| Error::invalid(format!("unknown algorithm `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "policy", rename_all = "kebab-case", deny_unknown_fields)]
pub enum StepPolicy {
    Constant {
        eta: f64,
    },
    /// `1/L` for GD, `b / (3 L n^(2/3))` for the SAGA family.
    Theory,
    /// `eta_t = eta0 / (1 + etap floor(t/n))`.
    Schedule {
        eta0: f64,
        #[serde(default)]
        etap: f64,
    },
    /// One SGD run per grid point; the point with the lowest median final
    /// objective over seeds is reported as the tuned baseline.
    SgdGrid {
        eta0: Vec<f64>,
        etap: Vec<f64>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InitMode {
    #[default]
    Cold,
    SgdWarmPass,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSpec {
    pub algorithm: Algorithm,
    pub step: StepPolicy,
    #[serde(default = "one")]
    pub b: usize,
    /// GD-SAGA restarts; by default as many as the budget allows.
    #[serde(default)]
    pub epochs: Option<usize>,
    /// GD-SAGA epoch length; by default `ceil(24 L tau n^(2/3))`.
    #[serde(default)]
    pub inner_steps: Option<u64>,
    /// Overrides the problem's gradient-dominance constant.
    #[serde(default)]
    pub tau: Option<f64>,
    #[serde(default)]
    pub init: InitMode,
}

fn one() -> usize {
    1
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReferenceSpec {
    #[serde(default = "default_restarts")]
    pub restarts: usize,
    /// GD budget per restart, in passes over the data.
    #[serde(default = "default_reference_passes")]
    pub passes_per_restart: u64,
    #[serde(default = "default_reference_tol")]
    pub grad_tol: f64,
    #[serde(default)]
    pub seed: u64,
}

fn default_restarts() -> usize {
    5
}

fn default_reference_passes() -> u64 {
    2000
}

fn default_reference_tol() -> f64 {
    1e-10
}

impl Default for ReferenceSpec {
    fn default() -> Self {
        ReferenceSpec {
            restarts: default_restarts(),
            passes_per_restart: default_reference_passes(),
            grad_tol: default_reference_tol(),
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub problem: ProblemSpec,
    pub runs: Vec<RunSpec>,
    #[serde(default)]
    pub seeds: Vec<u64>,
    /// IFO budget per run, in multiples of `n`, initialization included.
    pub budget_passes: f64,
    /// IFO calls between metric rows; defaults to `n / 10`.
    #[serde(default)]
    pub stride: Option<u64>,
    pub output_dir: PathBuf,
    /// Step size of the SGD warm pass.
    #[serde(default = "default_warm_eta")]
    pub warm_eta: f64,
    /// Fill the `wall_ns` column; off by default so outputs are byte-stable.
    #[serde(default)]
    pub record_wall_clock: bool,
    #[serde(default)]
    pub reference: ReferenceSpec,
}

fn default_warm_eta() -> f64 {
    0.1
}

impl ExperimentConfig {
    /// The desk-scale nonconvex benchmark: synthetic n = 5000, d = 50 with the
    /// default regularizer, Reg-SAGA at the theory step against a tuned SGD
    /// grid, both warm-started, 10 seeds, 15 passes.
    pub fn synthetic_benchmark(output_dir: impl Into<PathBuf>) -> Self {
        let run = |algorithm, step| RunSpec {
            algorithm,
            step,
            b: 1,
            epochs: None,
            inner_steps: None,
            tau: None,
            init: InitMode::SgdWarmPass,
        };
        ExperimentConfig {
            problem: ProblemSpec::Synthetic {
                n: 5000,
                d: 50,
                separation: 2.0,
                noise: 1.0,
                data_seed: 7,
                lambda: default_lambda(),
                alpha: default_alpha(),
            },
            runs: vec![
                run(Algorithm::RegSaga, StepPolicy::Theory),
                run(
                    Algorithm::Sgd,
                    StepPolicy::SgdGrid {
                        eta0: vec![0.5, 0.1, 0.05, 0.01],
                        etap: vec![0.0, 1.0, 10.0],
                    },
                ),
            ],
            seeds: (0..10).collect(),
            budget_passes: 15.0,
            stride: None,
            output_dir: output_dir.into(),
            warm_eta: 0.1,
            record_wall_clock: false,
            reference: ReferenceSpec::default(),
        }
    }

    pub fn from_json_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        serde_json::from_str(&text).map_err(|e| Error::invalid(format!("{}: {e}", path.display())))
    }

    pub fn validate(&self) -> Result<()> {
        if self.runs.is_empty() {
            return Err(Error::invalid("config lists no runs"));
        }
        if self.seeds.is_empty() {
            return Err(Error::invalid("config lists no seeds"));
        }
        if !(self.budget_passes > 0.0) || !self.budget_passes.is_finite() {
            return Err(Error::invalid("budget_passes must be positive"));
        }
        if self.stride == Some(0) {
            return Err(Error::invalid("stride must be positive"));
        }
        if !(self.warm_eta > 0.0) {
            return Err(Error::invalid("warm_eta must be positive"));
        }
        if self.reference.restarts == 0 || self.reference.passes_per_restart < 100 {
            return Err(Error::invalid(
                "reference needs >= 1 restart and >= 100 passes",
            ));
        }
        match &self.problem {
            ProblemSpec::Libsvm {
                path,
                lambda,
                alpha,
                ..
            } => {
                if !path.exists() {
                    return Err(Error::invalid(format!(
                        "dataset {} does not exist",
                        path.display()
                    )));
                }
                RegularizerParams {
                    lambda: *lambda,
                    alpha: *alpha,
                }
                .validate()?;
            }
            ProblemSpec::Synthetic {
                n,
                d,
                lambda,
                alpha,
                ..
            } => {
                if *n == 0 || *d == 0 {
                    return Err(Error::invalid("synthetic problem needs n, d >= 1"));
                }
                RegularizerParams {
                    lambda: *lambda,
                    alpha: *alpha,
                }
                .validate()?;
            }
            ProblemSpec::PlQuadratic { n, d, rank, .. } => {
                if *rank == 0 || *rank > (*n).min(*d) {
                    return Err(Error::invalid("rank must lie in 1..=min(n, d)"));
                }
            }
        }
        let is_quadratic = matches!(self.problem, ProblemSpec::PlQuadratic { .. });
        for run in &self.runs {
            if run.b == 0 {
                return Err(Error::invalid("minibatch size must be >= 1"));
            }
            match (&run.step, run.algorithm) {
                (StepPolicy::SgdGrid { eta0, etap }, Algorithm::Sgd) => {
                    if eta0.is_empty() || etap.is_empty() {
                        return Err(Error::invalid("SGD grid must be non-empty"));
                    }
                }
                (StepPolicy::SgdGrid { .. }, a) | (StepPolicy::Schedule { .. }, a)
                    if a != Algorithm::Sgd =>
                {
                    return Err(Error::invalid(format!(
                        "{} takes a constant or theory step",
                        a.name()
                    )));
                }
                (StepPolicy::Theory, Algorithm::Sgd) => {
                    return Err(Error::invalid(
                        "sgd has no theory step; use a schedule or grid",
                    ));
                }
                (StepPolicy::Constant { eta }, _) if !(*eta > 0.0) => {
                    return Err(Error::invalid("constant step must be positive"));
                }
                _ => {}
            }
            if run.algorithm == Algorithm::GdSaga
                && run.tau.is_none()
                && !is_quadratic
                && run.inner_steps.is_none()
            {
                return Err(Error::invalid(
                    "gd-saga needs tau (from the problem or an override) or inner_steps",
                ));
            }
            if run.algorithm == Algorithm::RegSaga && is_quadratic {
                log::warn!("reg-saga on a problem without a regularizer behaves as saga");
            }
        }
        Ok(())
    }
}

/// A constructed problem.
#[derive(Debug, Clone)]
pub enum BuiltProblem {
    Linear(LinearModelProblem),
    Quadratic(PlQuadratic),
}

impl BuiltProblem {
    pub fn build(spec: &ProblemSpec) -> Result<Self> {
        Ok(match spec {
            ProblemSpec::Libsvm {
                path,
                dim,
                lambda,
                alpha,
            } => {
                let mut ds = load_libsvm(path)?;
                if let Some(d) = dim {
                    ds = ds.with_dim(*d)?;
                }
                BuiltProblem::Linear(LinearModelProblem::from_dataset(
                    &ds,
                    Some(RegularizerParams {
                        lambda: *lambda,
                        alpha: *alpha,
                    }),
                )?)
            }
            ProblemSpec::Synthetic {
                n,
                d,
                separation,
                noise,
                data_seed,
                lambda,
                alpha,
            } => {
                let ds = make_synthetic_classification(*n, *d, *separation, *noise, *data_seed)?;
                BuiltProblem::Linear(LinearModelProblem::from_dataset(
                    &ds,
                    Some(RegularizerParams {
                        lambda: *lambda,
                        alpha: *alpha,
                    }),
                )?)
            }
            ProblemSpec::PlQuadratic { n, d, rank, seed } => {
                BuiltProblem::Quadratic(make_pl_quadratic(*n, *d, *rank, *seed)?)
            }
        })
    }

    pub fn as_dyn(&self) -> &dyn FiniteSum {
        match self {
            BuiltProblem::Linear(p) => p,
            BuiltProblem::Quadratic(p) => p,
        }
    }

    /// Known optimal value, when there is one.
    pub fn fstar(&self) -> Option<f64> {
        match self {
            BuiltProblem::Linear(_) => None,
            BuiltProblem::Quadratic(p) => Some(p.fstar()),
        }
    }

    pub fn digest_bytes(&self) -> Vec<u8> {
        match self {
            BuiltProblem::Linear(p) => p.digest_bytes(),
            BuiltProblem::Quadratic(p) => {
                let mut out = Vec::new();
                for i in 0..p.n() {
                    p.design_row(i)
                        .iter()
                        .for_each(|v| out.extend_from_slice(&v.to_le_bytes()));
                }
                p.targets()
                    .iter()
                    .for_each(|v| out.extend_from_slice(&v.to_le_bytes()));
                out
            }
        }
    }
}
