//! Smallest end-to-end use: build a problem, run SAGA, look at the result.

use nonconvex_saga::data::make_synthetic_classification;
use nonconvex_saga::optim::{run_saga, theory_step_size, SagaConfig};
use nonconvex_saga::oracle::full_value_gradient;
use nonconvex_saga::problems::{LinearModelProblem, RegularizerParams};
use nonconvex_saga::{FiniteSum, Oracle};

fn main() -> nonconvex_saga::Result<()> {
    let data = make_synthetic_classification(500, 10, 1.0, 1.0, 42)?;
    let problem = LinearModelProblem::from_dataset(&data, Some(RegularizerParams::default()))?;
    let n = problem.n();
    let eta = theory_step_size(n, problem.smoothness().l, 1);

    let x0 = vec![0.0; problem.dim()];
    let mut oracle = Oracle::new(&problem);
    let steps = 20 * n as u64;
    let run = run_saga(&mut oracle, &x0, SagaConfig::new(eta, 1), steps, 1)?;

    let (f0, g0) = full_value_gradient(&problem, &x0);
    let (f, g) = full_value_gradient(&problem, &run.x_out);
    let sq = |v: &[f64]| v.iter().map(|a| a * a).sum::<f64>();
    println!(
        "eta = {eta:.4e}, {steps} steps, {} IFO calls (n + 3T = {})",
        oracle.calls(),
        n as u64 + 3 * steps
    );
    println!("f: {f0:.6} -> {f:.6}");
    println!(
        "|grad f|^2: {:.3e} -> {:.3e} (output iterate #{})",
        sq(&g0),
        sq(&g),
        run.output_index
    );
    println!("training accuracy {:.3}", problem.accuracy(&run.x_out));
    Ok(())
}
