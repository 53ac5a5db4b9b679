//! Runs the built-in diagnostics and prints one JSON report per check, then a
//! gradient check and a Lyapunov trace on a problem of your own.

use nonconvex_saga::diagnostics::{default_fd_step, grad_check, lyapunov_trace, standard_suite};
use nonconvex_saga::optim::{SagaConfig, SagaState};
use nonconvex_saga::problems::make_pl_quadratic;
use nonconvex_saga::theory::{run_recursion, TheoryParams};
use nonconvex_saga::{FiniteSum, Oracle};

fn main() -> nonconvex_saga::Result<()> {
    let seed = std::env::args()
        .nth(1)
        .map_or(0, |s| s.parse().expect("seed"));
    let reports = standard_suite(seed)?;
    for r in &reports {
        println!("{}", serde_json::to_string(r).expect("report serializes"));
    }
    let failed = reports.iter().filter(|r| !r.pass).count();
    println!("{} checks, {failed} failed", reports.len());

    let p = make_pl_quadratic(16, 6, 4, seed)?;
    let x = [0.3; 6];
    let gc = grad_check(&p, &x, default_fd_step(&x))?;
    println!(
        "\nPL quadratic grad check: max rel err {:.2e} at coordinate {}",
        gc.max_rel_err, gc.worst_coord
    );

    // R^t = f(x^t) + c_t * anchor spread, with c_t from the recursion
    let params = TheoryParams::at_theory_step(p.n(), p.smoothness().l, 40 * p.n(), 1);
    let c = run_recursion(&params)?.c;
    let mut oracle = Oracle::new(&p);
    let mut state = SagaState::cold_start(
        &mut oracle,
        &[1.0; 6],
        SagaConfig::new(params.eta, seed).track_points(true),
    )?;
    let trace = lyapunov_trace(&mut oracle, &mut state, &c, 1, 8 * p.n())?;
    for s in &trace {
        println!(
            "t = {:>4}  f = {:.6e}  spread = {:.3e}  R = {:.6e}",
            s.t, s.f_val, s.anchor_spread, s.r
        );
    }
    Ok(())
}
