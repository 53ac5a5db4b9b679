mod common;

use std::path::Path;

use nonconvex_saga::data::make_synthetic_classification;
use nonconvex_saga::experiment::{
    read_trace, reference_solution, run_experiment, summarize, Algorithm, ExperimentConfig,
    InitMode, ProblemSpec, ReferenceSpec, RunSpec, RunStatus, StepPolicy,
};
use nonconvex_saga::problems::{make_pl_quadratic, LinearModelProblem};
use nonconvex_saga::Error;

fn run(algorithm: Algorithm, step: StepPolicy) -> RunSpec {
    RunSpec {
        algorithm,
        step,
        b: 1,
        epochs: None,
        inner_steps: None,
        tau: None,
        init: InitMode::Cold,
    }
}

fn small_config(dir: &Path) -> ExperimentConfig {
    ExperimentConfig {
        problem: ProblemSpec::Synthetic {
            n: 200,
            d: 8,
            separation: 1.0,
            noise: 1.0,
            data_seed: 3,
            lambda: 0.001,
            alpha: 1.0,
        },
        runs: vec![
            run(Algorithm::Gd, StepPolicy::Theory),
            run(Algorithm::Saga, StepPolicy::Theory),
            RunSpec {
                init: InitMode::SgdWarmPass,
                ..run(Algorithm::RegSaga, StepPolicy::Constant { eta: 0.5 })
            },
            RunSpec {
                b: 4,
                ..run(Algorithm::MinibatchSaga, StepPolicy::Theory)
            },
            RunSpec {
                epochs: Some(2),
                tau: Some(50.0),
                ..run(Algorithm::GdSaga, StepPolicy::Theory)
            },
            run(
                Algorithm::Sgd,
                StepPolicy::SgdGrid {
                    eta0: vec![0.5, 0.1],
                    etap: vec![0.0, 1.0],
                },
            ),
        ],
        seeds: vec![0, 1],
        budget_passes: 6.0,
        stride: None,
        output_dir: dir.to_path_buf(),
        warm_eta: 0.1,
        record_wall_clock: false,
        reference: ReferenceSpec {
            restarts: 2,
            passes_per_restart: 300,
            ..ReferenceSpec::default()
        },
    }
}

#[test]
fn reruns_are_byte_identical() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let ra = run_experiment(&small_config(a.path())).unwrap();
    let rb = run_experiment(&small_config(b.path())).unwrap();
    assert_eq!(ra.manifest.runs.len(), 2 * (5 + 4));
    for (x, y) in ra.manifest.runs.iter().zip(&rb.manifest.runs) {
        assert_eq!(x.file, y.file);
        let bytes_a = std::fs::read(a.path().join(&x.file)).unwrap();
        let bytes_b = std::fs::read(b.path().join(&y.file)).unwrap();
        assert!(bytes_a == bytes_b, "{} differs", x.file);
        assert_eq!(x.sha256, y.sha256);
    }
    assert_eq!(ra.manifest.config_digest, rb.manifest.config_digest);
    assert_eq!(ra.manifest.problem_digest, rb.manifest.problem_digest);
}

#[test]
fn traces_respect_budget_stride_and_schema() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let out = run_experiment(&cfg).unwrap();
    let budget = (cfg.budget_passes * 200.0).ceil() as u64;
    for r in &out.manifest.runs {
        let trace = read_trace(&dir.path().join(&r.file)).unwrap();
        assert_eq!(trace.header.n, 200);
        assert_eq!(trace.header.f_hat, out.manifest.f_hat);
        assert!(trace
            .rows
            .windows(2)
            .all(|w| w[0].ifo_calls <= w[1].ifo_calls));
        assert!(trace.rows.last().unwrap().ifo_calls <= budget);
        assert!(trace.rows.iter().all(|row| row.wall_ns == 0));
        assert_eq!(r.status, RunStatus::Ok);
        // incumbent: nothing recorded lies below the reference value
        assert!(trace.rows.iter().all(|row| row.f >= out.manifest.f_hat));
    }
    let grid = &out.manifest.sgd_grid[0];
    assert_eq!(grid.candidates.len(), 4);
    let best = grid
        .candidates
        .iter()
        .map(|c| c.1)
        .fold(f64::INFINITY, f64::min);
    assert_eq!(grid.median_final_f, best);
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&out.manifest_path).unwrap()).unwrap();
    assert_eq!(manifest["schema"], "saga-run-v1");
}

#[test]
fn gradient_descent_on_single_component_quadratic_contracts() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = ExperimentConfig {
        problem: ProblemSpec::PlQuadratic {
            n: 1,
            d: 3,
            rank: 1,
            seed: 5,
        },
        runs: vec![run(Algorithm::Gd, StepPolicy::Theory)],
        seeds: vec![0],
        budget_passes: 50.0,
        stride: Some(1),
        output_dir: dir.path().to_path_buf(),
        warm_eta: 0.1,
        record_wall_clock: false,
        reference: ReferenceSpec::default(),
    };
    let out = run_experiment(&cfg).unwrap();
    let trace = read_trace(&dir.path().join(&out.manifest.runs[0].file)).unwrap();
    assert_eq!(trace.rows.len(), 51);
    let g: Vec<f64> = trace.rows.iter().map(|r| r.grad_norm_sq).collect();
    for w in g.windows(2) {
        assert!(w[1] < w[0] || w[1] == 0.0, "{} -> {}", w[0], w[1]);
    }
    assert!(*g.last().unwrap() < 1e-20);
}

#[test]
fn divergent_runs_are_flagged() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small_config(dir.path());
    cfg.runs = vec![run(Algorithm::Saga, StepPolicy::Constant { eta: 1e300 })];
    let out = run_experiment(&cfg).unwrap();
    assert!(out.any_diverged());
    assert!(matches!(
        out.manifest.runs[0].status,
        RunStatus::Diverged { .. }
    ));
}

#[test]
fn invalid_configs_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small_config(dir.path());
    cfg.runs = vec![run(Algorithm::Sgd, StepPolicy::Theory)];
    assert!(matches!(
        run_experiment(&cfg),
        Err(Error::InvalidParameter(_))
    ));
    let mut cfg = small_config(dir.path());
    cfg.seeds.clear();
    assert!(run_experiment(&cfg).is_err());
    let mut cfg = small_config(dir.path());
    cfg.problem = ProblemSpec::Libsvm {
        path: dir.path().join("missing.libsvm"),
        dim: None,
        lambda: 0.0,
        alpha: 1.0,
    };
    assert!(run_experiment(&cfg).is_err());
}

#[test]
fn summaries_do_not_depend_on_file_order() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_experiment(&small_config(dir.path())).unwrap();
    let mut traces: Vec<_> = out
        .manifest
        .runs
        .iter()
        .map(|r| read_trace(&dir.path().join(&r.file)).unwrap())
        .collect();
    let forward = summarize(&traces).unwrap();
    traces.reverse();
    let backward = summarize(&traces).unwrap();
    assert_eq!(forward.to_csv().unwrap(), backward.to_csv().unwrap());
    // checkpoints are the last recorded value at or before k n
    let gd = traces
        .iter()
        .find(|t| t.header.label == "gd-theory")
        .unwrap();
    let row = forward
        .rows
        .iter()
        .find(|r| r.label == "gd-theory" && r.passes == 3)
        .unwrap();
    let at = gd
        .rows
        .iter()
        .filter(|r| r.ifo_calls <= 600)
        .last()
        .unwrap();
    assert_eq!(row.gap_median, at.f - out.manifest.f_hat);
}

#[test]
fn unknown_schema_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("old.csv");
    std::fs::write(&path, "# saga-run-v0 algorithm=gd label=x seed=0 n=1 f_hat=0\nt,ifo_calls,f,grad_norm_sq,eta_t,wall_ns\n").unwrap();
    assert!(matches!(read_trace(&path), Err(Error::Schema(_))));
}

#[test]
fn reference_recovers_the_known_optimum() {
    let p = make_pl_quadratic(20, 6, 6, 2).unwrap();
    let spec = ReferenceSpec {
        restarts: 3,
        passes_per_restart: 5000,
        grad_tol: 1e-24,
        seed: 1,
    };
    let r = reference_solution(&p, &spec, Some(p.fstar())).unwrap();
    assert!((r.f_hat - p.fstar()).abs() <= 1e-10);
}

#[test]
fn convex_restarts_agree() {
    let ds = make_synthetic_classification(150, 5, 1.0, 1.5, 9).unwrap();
    let p = LinearModelProblem::from_dataset(&ds, None).unwrap();
    let spec = ReferenceSpec {
        restarts: 4,
        passes_per_restart: 20000,
        grad_tol: 1e-20,
        seed: 3,
    };
    let r = reference_solution(&p, &spec, None).unwrap();
    let fs: Vec<f64> = r.restarts.iter().map(|o| o.f).collect();
    let spread = fs.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
        - fs.iter().cloned().fold(f64::INFINITY, f64::min);
    assert!(spread <= 1e-8, "restart values {fs:?}");
}

#[test]
fn synthetic_benchmark_config_is_valid() {
    let cfg = ExperimentConfig::synthetic_benchmark("out");
    cfg.validate().unwrap();
    let text = serde_json::to_string(&cfg).unwrap();
    let back: ExperimentConfig = serde_json::from_str(&text).unwrap();
    assert_eq!(serde_json::to_string(&back).unwrap(), text);
}
