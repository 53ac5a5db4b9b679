//! Finite-sum problem abstraction and incremental first-order oracle (IFO)
//! accounting.
//!
//! A problem is `f(x) = (1/n) * sum_i f_i(x) + r(x)` where the regularizer
//! `r` is optional. One IFO call is one evaluation of `(f_i(x), grad f_i(x))`
//! for a single index `i`; regularizer evaluations are free.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Smoothness data shared by every component.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SmoothnessInfo {
    /// Lipschitz constant of every `grad f_i` and of `grad r`.
    pub l: f64,
    /// Uniform bound on `||grad f_i||`, only used by SGD rate predictions.
    pub sigma: Option<f64>,
    /// Gradient-dominance constant: `f(x) - f* <= tau * ||grad f(x)||^2`.
    pub tau: Option<f64>,
}

impl SmoothnessInfo {
    pub fn new(l: f64) -> Self {
        SmoothnessInfo {
            l,
            sigma: None,
            tau: None,
        }
    }
}

/// Borrowed sparse row of a feature matrix, 0-based indices.
#[derive(Debug, Clone, Copy)]
pub struct SparseRow<'a> {
    pub indices: &'a [usize],
    pub values: &'a [f64],
}

impl SparseRow<'_> {
    pub fn dot(&self, x: &[f64]) -> f64 {
        self.indices
            .iter()
            .zip(self.values)
            .map(|(&j, v)| v * x[j])
            .sum()
    }

    pub fn norm_sq(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum()
    }

    /// Overwrites `out` with `scale * row` (dense).
    pub fn scatter(&self, scale: f64, out: &mut [f64]) {
        out.fill(0.0);
        for (&j, v) in self.indices.iter().zip(self.values) {
            out[j] = scale * v;
        }
    }
}

/// Components of the form `f_i(x) = l_i(x^T z_i)`, whose gradients are
/// `l_i'(x^T z_i) * z_i`. Lets anchors be stored as one scalar each.
pub trait LinearStructure {
    fn row(&self, i: usize) -> SparseRow<'_>;

    /// Derivative of the `i`-th loss with respect to the margin `x^T z_i`.
    fn loss_derivative(&self, i: usize, margin: f64) -> f64;
}

/// The finite-sum objective. Implementations must be deterministic.
pub trait FiniteSum: Sync {
    /// Number of components.
    fn n(&self) -> usize;

    /// Dimension of the decision variable.
    fn dim(&self) -> usize;

    /// Returns `f_i(x)` and overwrites `grad` with `grad f_i(x)`.
    ///
    /// Callers guarantee `i < n()` and `x.len() == grad.len() == dim()`;
    /// use [`Oracle`] for checked, counted access.
    fn component(&self, i: usize, x: &[f64], grad: &mut [f64]) -> f64;

    /// Returns `r(x)` and overwrites `grad` with `grad r(x)`, or `None` when
    /// the problem has no separate regularizer (in which case `grad` is left
    /// untouched).
    fn regularizer(&self, _x: &[f64], _grad: &mut [f64]) -> Option<f64> {
        None
    }

    fn has_regularizer(&self) -> bool {
        false
    }

    fn smoothness(&self) -> SmoothnessInfo;

    /// Rank-one gradient structure, when available.
    fn linear(&self) -> Option<&dyn LinearStructure> {
        None
    }
}

/// Monotone count of IFO calls made during one run.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct IfoCounter {
    calls: u64,
}

impl IfoCounter {
    pub fn calls(&self) -> u64 {
        self.calls
    }

    fn add(&mut self, k: u64) {
        self.calls += k;
    }
}

/// Checked, counted access to a problem. One oracle belongs to one run.
pub struct Oracle<'p, P: ?Sized> {
    problem: &'p P,
    counter: IfoCounter,
}

impl<'p, P: FiniteSum + ?Sized> Oracle<'p, P> {
    pub fn new(problem: &'p P) -> Self {
        Oracle {
            problem,
            counter: IfoCounter::default(),
        }
    }

    pub fn problem(&self) -> &'p P {
        self.problem
    }

    pub fn counter(&self) -> IfoCounter {
        self.counter
    }

    pub fn calls(&self) -> u64 {
        self.counter.calls
    }

    pub fn n(&self) -> usize {
        self.problem.n()
    }

    pub fn dim(&self) -> usize {
        self.problem.dim()
    }

    fn check_index(&self, i: usize) -> Result<()> {
        let n = self.problem.n();
        if i >= n {
            return Err(Error::IndexOutOfRange { index: i, n });
        }
        Ok(())
    }

    fn check_dim(&self, len: usize) -> Result<()> {
        let d = self.problem.dim();
        if len != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                got: len,
            });
        }
        Ok(())
    }

    /// `(f_i(x), grad f_i(x))`; costs one IFO call.
    pub fn eval_component(&mut self, i: usize, x: &[f64]) -> Result<(f64, Vec<f64>)> {
        let mut grad = vec![0.0; self.problem.dim()];
        let value = self.component_into(i, x, &mut grad)?;
        Ok((value, grad))
    }

    /// Like [`eval_component`](Self::eval_component) but writes into `grad`.
    pub fn component_into(&mut self, i: usize, x: &[f64], grad: &mut [f64]) -> Result<f64> {
        self.check_index(i)?;
        self.check_dim(x.len())?;
        self.check_dim(grad.len())?;
        self.counter.add(1);
        Ok(self.problem.component(i, x, grad))
    }

    /// `l'(x^T z_i)` for linear-structured problems; costs one IFO call.
    pub fn scalar_surrogate(&mut self, i: usize, x: &[f64]) -> Result<f64> {
        self.check_index(i)?;
        self.check_dim(x.len())?;
        let lin = self
            .problem
            .linear()
            .ok_or_else(|| Error::invalid("problem has no linear-model structure"))?;
        self.counter.add(1);
        Ok(lin.loss_derivative(i, lin.row(i).dot(x)))
    }

    /// `(1/n) sum_i grad f_i(x) + grad r(x)`; costs exactly `n` IFO calls.
    pub fn full_gradient(&mut self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_dim(x.len())?;
        let grad = full_value_gradient(self.problem, x).1;
        self.counter.add(self.problem.n() as u64);
        Ok(grad)
    }

    /// Records `k` oracle-equivalent evaluations made outside
    /// [`component_into`](Self::component_into), e.g. anchor gradients
    /// reconstructed from stored data.
    pub(crate) fn charge(&mut self, k: u64) {
        self.counter.add(k);
    }
}

/// Uncounted evaluation of `f(x)` and `grad f(x)`, for instrumentation and
/// diagnostics.
///
/// The component sum starts from the first gradient and is divided by `n`,
/// so for `n = 1` the result is bit-identical to that single component
/// (plus `grad r`).
pub fn full_value_gradient<P: FiniteSum + ?Sized>(problem: &P, x: &[f64]) -> (f64, Vec<f64>) {
    let n = problem.n();
    let d = problem.dim();
    let mut sum = vec![0.0; d];
    let mut scratch = vec![0.0; d];
    let mut value = problem.component(0, x, &mut sum);
    for i in 1..n {
        value += problem.component(i, x, &mut scratch);
        crate::linalg::add_assign(&mut sum, &scratch);
    }
    let nf = n as f64;
    value /= nf;
    for s in sum.iter_mut() {
        *s /= nf;
    }
    if let Some(rv) = problem.regularizer(x, &mut scratch) {
        value += rv;
        crate::linalg::add_assign(&mut sum, &scratch);
    }
    (value, sum)
}

/// Uncounted objective value.
pub fn objective<P: FiniteSum + ?Sized>(problem: &P, x: &[f64]) -> f64 {
    let d = problem.dim();
    let mut scratch = vec![0.0; d];
    let mut value = 0.0;
    for i in 0..problem.n() {
        value += problem.component(i, x, &mut scratch);
    }
    value /= problem.n() as f64;
    if let Some(rv) = problem.regularizer(x, &mut scratch) {
        value += rv;
    }
    value
}

/// Problem defined by a closure, handy for toy problems and tests.
pub struct FnProblem<F> {
    n: usize,
    d: usize,
    smoothness: SmoothnessInfo,
    f: F,
}

impl<F> FnProblem<F>
where
    F: Fn(usize, &[f64], &mut [f64]) -> f64 + Sync,
{
    pub fn new(n: usize, d: usize, smoothness: SmoothnessInfo, f: F) -> Result<Self> {
        if n == 0 || d == 0 {
            return Err(Error::Empty("problem needs n >= 1 and d >= 1"));
        }
        Ok(FnProblem {
            n,
            d,
            smoothness,
            f,
        })
    }
}

impl<F> FiniteSum for FnProblem<F>
where
    F: Fn(usize, &[f64], &mut [f64]) -> f64 + Sync,
{
    fn n(&self) -> usize {
        self.n
    }

    fn dim(&self) -> usize {
        self.d
    }

    fn component(&self, i: usize, x: &[f64], grad: &mut [f64]) -> f64 {
        (self.f)(i, x, grad)
    }

    fn smoothness(&self) -> SmoothnessInfo {
        self.smoothness
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    // f_i(x) = 0.5 * (x - c_i)^2 elementwise, c_i = i
    fn shifted(n: usize, d: usize) -> FnProblem<impl Fn(usize, &[f64], &mut [f64]) -> f64 + Sync> {
        FnProblem::new(
            n,
            d,
            SmoothnessInfo::new(1.0),
            |i, x: &[f64], g: &mut [f64]| {
                let mut v = 0.0;
                for k in 0..x.len() {
                    let r = x[k] - i as f64 - k as f64;
                    g[k] = r;
                    v += 0.5 * r * r;
                }
                v
            },
        )
        .unwrap()
    }

    #[test]
    fn counts_one_call_per_component() {
        let p = shifted(3, 2);
        let mut o = Oracle::new(&p);
        o.eval_component(0, &[0.0, 0.0]).unwrap();
        o.eval_component(2, &[1.0, 0.0]).unwrap();
        assert_eq!(o.calls(), 2);
        o.full_gradient(&[0.0, 0.0]).unwrap();
        assert_eq!(o.calls(), 5);
    }

    #[test]
    fn rejects_bad_index_and_dimension() {
        let p = shifted(3, 2);
        let mut o = Oracle::new(&p);
        assert!(matches!(
            o.eval_component(3, &[0.0, 0.0]),
            Err(Error::IndexOutOfRange { index: 3, n: 3 })
        ));
        assert!(matches!(
            o.eval_component(0, &[0.0]),
            Err(Error::DimensionMismatch {
                expected: 2,
                got: 1
            })
        ));
        assert!(matches!(
            o.full_gradient(&[0.0; 3]),
            Err(Error::DimensionMismatch { .. })
        ));
        assert_eq!(o.calls(), 0);
    }

    #[test]
    fn full_gradient_of_single_component_is_that_component() {
        let p = shifted(1, 3);
        let x = [0.3, -1.7, 2.2];
        let mut o = Oracle::new(&p);
        let (_, gi) = o.eval_component(0, &x).unwrap();
        let g = o.full_gradient(&x).unwrap();
        assert_eq!(gi, g);
    }

    #[test]
    fn full_gradient_is_component_mean() {
        let p = shifted(7, 4);
        let x = [0.5, -0.25, 1.0, 3.0];
        let mut o = Oracle::new(&p);
        let g = o.full_gradient(&x).unwrap();
        // direct summation oracle
        let mut expect = [0.0; 4];
        for i in 0..7 {
            for k in 0..4 {
                expect[k] += x[k] - i as f64 - k as f64;
            }
        }
        for k in 0..4 {
            assert!((g[k] - expect[k] / 7.0).abs() <= 1e-14 * (1.0 + expect[k].abs()));
        }
    }

    #[test]
    fn objective_matches_value_from_full_evaluation() {
        let p = shifted(5, 2);
        let x = [1.5, -0.5];
        let (v, _) = full_value_gradient(&p, &x);
        assert!((v - objective(&p, &x)).abs() < 1e-14);
    }
}
