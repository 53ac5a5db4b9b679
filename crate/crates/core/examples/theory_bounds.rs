//! The c_t recursion, the gamma_n bound and predicted IFO budgets.

use nonconvex_saga::theory::{
    check_gamma_bound, closed_form, ifo_budget, run_recursion, BudgetQuery, Method, TheoryParams,
};

fn main() -> nonconvex_saga::Result<()> {
    println!(
        "{:>6} {:>12} {:>12} {:>12} {:>12} {:>10}",
        "n", "gamma_n", "bound", "c_max", "c bound", "cf err"
    );
    for n in [2, 10, 100, 1000, 10000] {
        let params = TheoryParams::at_theory_step(n, 1.0, 10 * n, 1);
        let trace = run_recursion(&params)?;
        let check = check_gamma_bound(&params)?;
        let cf_err = (0..=params.t_horizon)
            .filter_map(|t| closed_form(&params, t).map(|c| ((c - trace.c[t]) / c).abs()))
            .filter(|e| e.is_finite())
            .fold(0.0, f64::max);
        println!(
            "{n:>6} {:>12.4e} {:>12.4e} {:>12.4e} {:>12.4e} {cf_err:>10.1e}",
            check.gamma_n, check.bound, check.c_max, check.c_bound
        );
    }

    println!("\nIFO budgets at eps = 1e-4, L = 1, Delta = 1:");
    for n in [1_000usize, 1_000_000] {
        for method in [Method::Gd, Method::Sgd, Method::Saga] {
            let q = BudgetQuery {
                method,
                n,
                eps: 1e-4,
                l: 1.0,
                delta: 1.0,
                tau: None,
                b: 1,
            };
            let b = ifo_budget(&q)?;
            println!(
                "  n = {n:>8}  {method:<6} order {:>10.3e}  explicit {:?}",
                b.order, b.explicit
            );
        }
    }
    Ok(())
}
