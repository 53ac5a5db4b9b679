//! Minibatch SAGA at `eta = b / (3 L n^(2/3))` for several batch sizes, at a
//! fixed IFO budget. Larger batches take proportionally larger steps, so the
//! progress per IFO call stays roughly level until `b` nears `n^(2/3)`.

use nonconvex_saga::data::make_synthetic_classification;
use nonconvex_saga::optim::{minibatch_saga_step, theory_step_size, SagaConfig, SagaState};
use nonconvex_saga::oracle::full_value_gradient;
use nonconvex_saga::problems::{LinearModelProblem, RegularizerParams};
use nonconvex_saga::{FiniteSum, Oracle};

fn main() -> nonconvex_saga::Result<()> {
    let data = make_synthetic_classification(1000, 20, 1.0, 1.0, 3)?;
    let p = LinearModelProblem::from_dataset(&data, Some(RegularizerParams::default()))?;
    let (n, l) = (p.n(), p.smoothness().l);
    let budget = 30 * n as u64;

    println!(
        "{:>3} {:>10} {:>8} {:>12} {:>12}",
        "b", "eta", "steps", "f", "|grad|^2"
    );
    for b in [1, 2, 4, 8, 16, 32] {
        let eta = theory_step_size(n, l, b);
        let mut oracle = Oracle::new(&p);
        let mut state =
            SagaState::cold_start(&mut oracle, &vec![0.0; p.dim()], SagaConfig::new(eta, 11))?;
        while oracle.calls() + 3 * b as u64 <= budget {
            minibatch_saga_step(&mut state, &mut oracle, b)?;
        }
        let (f, g) = full_value_gradient(&p, state.x());
        let gn: f64 = g.iter().map(|v| v * v).sum();
        println!("{b:>3} {eta:>10.3e} {:>8} {f:>12.6} {gn:>12.4e}", state.t());
    }
    Ok(())
}
