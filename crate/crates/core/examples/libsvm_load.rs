//! Load a libsvm file (plain or gzip) and fit the regularized logistic model.
//!
//!     cargo run --release --example libsvm_load -- path/to/data.libsvm
//!
//! Without an argument the bundled 100-line fixture is used.

use std::path::PathBuf;

use nonconvex_saga::data::load_libsvm;
use nonconvex_saga::optim::{run_saga, theory_step_size, SagaConfig};
use nonconvex_saga::oracle::full_value_gradient;
use nonconvex_saga::problems::{LinearModelProblem, RegularizerParams};
use nonconvex_saga::{FiniteSum, Oracle};

fn main() -> nonconvex_saga::Result<()> {
    let path = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| {
            PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/sample.libsvm")
        });
    let ds = load_libsvm(&path)?;
    let positives = ds.labels.iter().filter(|&&y| y > 0.0).count();
    let nnz: usize = ds.rows.iter().map(|r| r.indices.len()).sum();
    println!(
        "{}: {} rows, d = {}, {} nnz, {} positive",
        ds.provenance,
        ds.len(),
        ds.d,
        nnz,
        positives
    );

    let p = LinearModelProblem::from_dataset(&ds, Some(RegularizerParams::default()))?;
    let eta = theory_step_size(p.n(), p.smoothness().l, 1);
    let mut oracle = Oracle::new(&p);
    let run = run_saga(
        &mut oracle,
        &vec![0.0; p.dim()],
        SagaConfig::new(eta, 0),
        50 * p.n() as u64,
        1,
    )?;
    let (f, g) = full_value_gradient(&p, &run.x_out);
    println!(
        "after {} IFO calls: f = {f:.6}, |grad|^2 = {:.3e}, accuracy = {:.3}",
        oracle.calls(),
        g.iter().map(|v| v * v).sum::<f64>(),
        p.accuracy(&run.x_out)
    );
    Ok(())
}
