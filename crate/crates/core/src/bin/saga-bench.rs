//! Command-line front end: `run`, `summarize`, `check`, `theory`.
//!
//! Exit codes: 0 success, 2 validation error, 3 divergence, 1 anything else.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use nonconvex_saga::diagnostics::standard_suite;
use nonconvex_saga::experiment::{
    run_experiment, summarize_files, Algorithm, ExperimentConfig, InitMode, ProblemSpec,
    ReferenceSpec, RunSpec, StepPolicy,
};
use nonconvex_saga::theory::{
    check_gamma_bound, closed_form, ifo_budget, run_recursion, BudgetQuery, Method, TheoryParams,
};
use nonconvex_saga::Error;

#[derive(Parser)]
#[command(
    name = "saga-bench",
    version,
    about = "SAGA-family benchmarks, checks and step-size theory"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment grid and write traces plus a manifest.
    Run(RunArgs),
    /// Median/IQR summary of trace files at every pass over the data.
    Summarize {
        #[arg(required = true)]
        files: Vec<PathBuf>,
        /// Also write the summary as CSV.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Run the diagnostics suite; one JSON report per line.
    Check {
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Evaluate the c_t recursion and step-size bounds.
    Theory(TheoryArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum AlgoArg {
    Gd,
    Sgd,
    Saga,
    RegSaga,
    MinibatchSaga,
    GdSaga,
}

impl From<AlgoArg> for Algorithm {
    fn from(a: AlgoArg) -> Self {
        match a {
            AlgoArg::Gd => Algorithm::Gd,
            AlgoArg::Sgd => Algorithm::Sgd,
            AlgoArg::Saga => Algorithm::Saga,
            AlgoArg::RegSaga => Algorithm::RegSaga,
            AlgoArg::MinibatchSaga => Algorithm::MinibatchSaga,
            AlgoArg::GdSaga => Algorithm::GdSaga,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum InitArg {
    Cold,
    SgdWarmPass,
}

#[derive(Args)]
struct RunArgs {
    /// JSON config; flags below override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    /// First seed of the run.
    #[arg(long)]
    seed: u64,
    /// Number of consecutive seeds starting at `--seed`.
    #[arg(long, default_value_t = 1)]
    num_seeds: u64,
    #[arg(long)]
    out: Option<PathBuf>,
    /// libsvm dataset (plain or gzip).
    #[arg(long, conflicts_with = "synthetic")]
    libsvm: Option<PathBuf>,
    /// Feature dimension override for `--libsvm`.
    #[arg(long)]
    dim: Option<usize>,
    /// Synthetic data as `n,d,separation,noise`.
    #[arg(long, value_delimiter = ',')]
    synthetic: Option<Vec<f64>>,
    #[arg(long, default_value_t = 0)]
    data_seed: u64,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    alpha: Option<f64>,
    /// Algorithms to run (replaces the config's runs).
    #[arg(long, value_enum)]
    algorithm: Vec<AlgoArg>,
    /// Constant step size.
    #[arg(long, conflicts_with_all = ["theory_step", "eta0"])]
    eta: Option<f64>,
    /// Use the prescribed step (`1/L` for gd).
    #[arg(long)]
    theory_step: bool,
    /// SGD t-inverse schedule start.
    #[arg(long)]
    eta0: Option<f64>,
    #[arg(long, default_value_t = 0.0)]
    etap: f64,
    #[arg(long, default_value_t = 1)]
    b: usize,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    inner_steps: Option<u64>,
    #[arg(long)]
    tau: Option<f64>,
    #[arg(long, value_enum)]
    init: Option<InitArg>,
    #[arg(long)]
    budget_passes: Option<f64>,
    #[arg(long)]
    stride: Option<u64>,
    #[arg(long)]
    warm_eta: Option<f64>,
    /// Fill the wall_ns column.
    #[arg(long)]
    wall_clock: bool,
}

#[derive(Args)]
struct TheoryArgs {
    #[arg(long)]
    n: usize,
    #[arg(long, default_value_t = 1.0)]
    l: f64,
    /// Horizon; defaults to 10 n.
    #[arg(long)]
    t: Option<usize>,
    #[arg(long, default_value_t = 1)]
    b: usize,
    #[arg(long)]
    tau: Option<f64>,
    /// Target accuracy for IFO predictions.
    #[arg(long, default_value_t = 1e-3)]
    eps: f64,
    /// Include the full c_t and Gamma_t sequences.
    #[arg(long)]
    full: bool,
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Divergence { .. } => 3,
        Error::Io(_) => 1,
        _ => 2,
    }
}

fn build_config(args: &RunArgs) -> Result<ExperimentConfig, Error> {
    let mut cfg = match &args.config {
        Some(path) => ExperimentConfig::from_json_file(path)?,
        None => {
            let out = args
                .out
                .clone()
                .ok_or_else(|| Error::invalid("--out is required without --config"))?;
            ExperimentConfig {
                problem: ProblemSpec::PlQuadratic {
                    n: 1,
                    d: 1,
                    rank: 1,
                    seed: 0,
                },
                runs: Vec::new(),
                seeds: Vec::new(),
                budget_passes: 10.0,
                stride: None,
                output_dir: out,
                warm_eta: 0.1,
                record_wall_clock: false,
                reference: ReferenceSpec::default(),
            }
        }
    };
    let (lambda, alpha) = (args.lambda.unwrap_or(0.001), args.alpha.unwrap_or(1.0));
    if let Some(path) = &args.libsvm {
        cfg.problem = ProblemSpec::Libsvm {
            path: path.clone(),
            dim: args.dim,
            lambda,
            alpha,
        };
    } else if let Some(s) = &args.synthetic {
        if s.len() != 4 {
            return Err(Error::invalid("--synthetic takes n,d,separation,noise"));
        }
        cfg.problem = ProblemSpec::Synthetic {
            n: s[0] as usize,
            d: s[1] as usize,
            separation: s[2],
            noise: s[3],
            data_seed: args.data_seed,
            lambda,
            alpha,
        };
    } else if args.config.is_none() {
        return Err(Error::invalid("give --config, --libsvm or --synthetic"));
    }
    if !args.algorithm.is_empty() {
        let step = match (args.eta, args.eta0) {
            (Some(eta), _) => StepPolicy::Constant { eta },
            (None, Some(eta0)) => StepPolicy::Schedule {
                eta0,
                etap: args.etap,
            },
            (None, None) => StepPolicy::Theory,
        };
        let init = match args.init {
            Some(InitArg::SgdWarmPass) => InitMode::SgdWarmPass,
            _ => InitMode::Cold,
        };
        cfg.runs = args
            .algorithm
            .iter()
            .map(|&a| RunSpec {
                algorithm: a.into(),
                step: step.clone(),
                b: args.b,
                epochs: args.epochs,
                inner_steps: args.inner_steps,
                tau: args.tau,
                init,
            })
            .collect();
    }
    cfg.seeds = (args.seed..args.seed + args.num_seeds.max(1)).collect();
    if let Some(out) = &args.out {
        cfg.output_dir = out.clone();
    }
    if let Some(p) = args.budget_passes {
        cfg.budget_passes = p;
    }
    if args.stride.is_some() {
        cfg.stride = args.stride;
    }
    if let Some(w) = args.warm_eta {
        cfg.warm_eta = w;
    }
    cfg.record_wall_clock |= args.wall_clock;
    Ok(cfg)
}

fn cmd_run(args: &RunArgs) -> Result<u8, Error> {
    let cfg = build_config(args)?;
    let out = run_experiment(&cfg)?;
    for r in &out.manifest.runs {
        println!(
            "{:<40} seed {:<4} ifo {:>10}  f {:.6e}  |grad|^2 {:.3e}  {:?}",
            r.label, r.seed, r.ifo_calls, r.final_f, r.final_grad_norm_sq, r.status
        );
    }
    println!(
        "f_hat {:.10e}; manifest {}",
        out.manifest.f_hat,
        out.manifest_path.display()
    );
    Ok(if out.any_diverged() { 3 } else { 0 })
}

fn cmd_summarize(files: &[PathBuf], csv: Option<&PathBuf>) -> Result<u8, Error> {
    let summary = summarize_files(files)?;
    print!("{}", summary.to_table());
    if let Some(path) = csv {
        std::fs::write(path, summary.to_csv()?)?;
    }
    Ok(0)
}

fn cmd_check(seed: u64) -> Result<u8, Error> {
    let reports = standard_suite(seed)?;
    let mut ok = true;
    for r in &reports {
        println!("{}", serde_json::to_string(r)?);
        ok &= r.pass;
    }
    Ok(if ok { 0 } else { 1 })
}

fn cmd_theory(a: &TheoryArgs) -> Result<u8, Error> {
    let mut params = TheoryParams::at_theory_step(a.n, a.l, a.t.unwrap_or(10 * a.n), a.b);
    params.tau = a.tau;
    let trace = run_recursion(&params)?;
    let chk = check_gamma_bound(&params)?;
    let closed_err = (0..=params.t_horizon)
        .filter_map(|t| {
            closed_form(&params, t).map(|c| (c - trace.c[t]).abs() / c.abs().max(f64::MIN_POSITIVE))
        })
        .fold(None, |m: Option<f64>, e| Some(m.map_or(e, |m| m.max(e))));
    let budgets: Vec<_> = [
        Method::Gd,
        Method::Sgd,
        Method::Saga,
        Method::MinibatchSaga,
        Method::GdSaga,
    ]
    .into_iter()
    .filter_map(|method| {
        let q = BudgetQuery {
            method,
            n: a.n,
            eps: a.eps,
            l: a.l,
            delta: 1.0,
            tau: a.tau,
            b: a.b,
        };
        ifo_budget(&q).ok().map(
            |b| json!({"method": method.to_string(), "order": b.order, "explicit": b.explicit}),
        )
    })
    .collect();
    let mut report = json!({
        "params": params,
        "theta": params.theta(),
        "gamma_check": chk,
        "closed_form_max_rel_err": closed_err,
        "ifo_budget": budgets,
    });
    if a.full {
        report["trace"] = serde_json::to_value(&trace)?;
    }
    println!("{}", serde_json::to_string_pretty(&report)?);
    Ok(if chk.pass { 0 } else { 1 })
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Run(args) => cmd_run(args),
        Command::Summarize { files, csv } => cmd_summarize(files, csv.as_ref()),
        Command::Check { seed } => cmd_check(*seed),
        Command::Theory(args) => cmd_theory(args),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
