//! GD-SAGA on a gradient-dominated least-squares problem.
//!
//! Each epoch restarts SAGA from the previous epoch's output with
//! `T = ceil(24 L tau n^(2/3))` inner steps, which should at least halve the
//! suboptimality per epoch in expectation.
//!
//!     cargo run --release --example gd_saga_pl -- [seeds]

use nonconvex_saga::optim::{gd_saga, theory_step_size, AnchorStorage, GdSagaConfig, Variant};
use nonconvex_saga::oracle::objective;
use nonconvex_saga::problems::make_pl_quadratic;
use nonconvex_saga::theory::gd_saga_inner_steps;
use nonconvex_saga::{FiniteSum, Oracle};

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    if v.len() % 2 == 0 {
        0.5 * (v[m - 1] + v[m])
    } else {
        v[m]
    }
}

fn main() -> nonconvex_saga::Result<()> {
    let seeds: u64 = std::env::args()
        .nth(1)
        .map_or(20, |s| s.parse().expect("seed count"));
    let p = make_pl_quadratic(32, 16, 12, 0)?;
    let (n, l, tau) = (p.n(), p.smoothness().l, p.tau());
    let epochs = 5;
    let cfg = |seed| GdSagaConfig {
        epochs,
        inner_steps: gd_saga_inner_steps(n, l, tau),
        eta: theory_step_size(n, l, 1),
        b: 1,
        variant: Variant::Saga,
        storage: AnchorStorage::Dense,
        seed,
    };
    println!(
        "n = {n}, L = {l:.4}, tau = {tau:.4}, T = {}, eta = {:.3e}",
        cfg(0).inner_steps,
        cfg(0).eta
    );

    let x0 = vec![0.0; p.dim()];
    let gap0 = objective(&p, &x0) - p.fstar();
    let mut gaps = vec![Vec::new(); epochs + 1];
    for seed in 0..seeds {
        let mut oracle = Oracle::new(&p);
        let out = gd_saga(&mut oracle, &x0, cfg(seed))?;
        for (k, x) in out.iterates.iter().enumerate() {
            gaps[k].push(objective(&p, x) - p.fstar());
        }
    }
    for k in 1..=epochs {
        let ratios: Vec<f64> = (0..seeds as usize)
            .map(|s| gaps[k][s] / gaps[k - 1][s])
            .collect();
        println!(
            "epoch {k}: median gap {:.4e}, median ratio {:.3}",
            median(gaps[k].clone()),
            median(ratios)
        );
    }
    println!(
        "f(x^5) - f* vs 1.5 * 2^-5 * (f(x^0) - f*): {:.4e} vs {:.4e}",
        median(gaps[epochs].clone()),
        1.5 * gap0 / 32.0
    );
    Ok(())
}
