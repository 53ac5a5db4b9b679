//! A small experiment grid from JSON, run in parallel and summarized per pass.
//!
//! The same config works with the CLI:
//!     saga-bench run --config grid.json --seed 0 --num-seeds 3

use nonconvex_saga::experiment::{run_experiment, summarize_files, ExperimentConfig};

const CONFIG: &str = r#"{
  "problem": { "kind": "pl-quadratic", "n": 64, "d": 16, "rank": 10, "seed": 1 },
  "runs": [
    { "algorithm": "gd", "step": { "policy": "theory" } },
    { "algorithm": "sgd", "step": { "policy": "schedule", "eta0": 0.01, "etap": 1.0 } },
    { "algorithm": "saga", "step": { "policy": "theory" } },
    { "algorithm": "minibatch-saga", "step": { "policy": "theory" }, "b": 4 },
    { "algorithm": "gd-saga", "step": { "policy": "theory" }, "epochs": 3 }
  ],
  "seeds": [0, 1, 2],
  "budget_passes": 40,
  "output_dir": "PLACEHOLDER"
}"#;

fn main() -> nonconvex_saga::Result<()> {
    let out = std::env::temp_dir().join("experiment_grid");
    let mut cfg: ExperimentConfig = serde_json::from_str(CONFIG).expect("config parses");
    cfg.output_dir = out.clone();
    let result = run_experiment(&cfg)?;
    println!("manifest: {}", result.manifest_path.display());

    let files: Vec<_> = result
        .manifest
        .runs
        .iter()
        .map(|r| out.join(&r.file))
        .collect();
    let summary = summarize_files(&files)?;
    // every fifth pass keeps the table short
    let table = summary.to_table();
    for (k, line) in table.lines().enumerate() {
        if k == 0
            || line
                .split_whitespace()
                .nth(1)
                .is_some_and(|p| p.parse::<u64>().is_ok_and(|p| p % 5 == 0))
        {
            println!("{line}");
        }
    }
    Ok(())
}
