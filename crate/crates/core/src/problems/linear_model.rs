use serde::{Deserialize, Serialize};

use crate::data::{normalize_rows, Dataset};
use crate::error::{Error, Result};
use crate::oracle::{FiniteSum, LinearStructure, SmoothnessInfo, SparseRow};

/// `log(1 + exp(-u))` without overflow, where `u = y * x^T z`.
pub fn logistic_loss(u: f64) -> f64 {
    if u > 0.0 {
        (-u).exp().ln_1p()
    } else {
        -u + u.exp().ln_1p()
    }
}

/// `1 / (1 + exp(u))`, stable for large `|u|`.
fn neg_sigmoid(u: f64) -> f64 {
    if u >= 0.0 {
        let e = (-u).exp();
        e / (1.0 + e)
    } else {
        1.0 / (1.0 + u.exp())
    }
}

/// Derivative of `m -> log(1 + exp(-y m))` at margin `m`: `-y / (1 + exp(y m))`.
pub fn logistic_derivative(y: f64, margin: f64) -> f64 {
    -y * neg_sigmoid(y * margin)
}

/// `(log(1 + exp(-y x^T z)), -y s z)` with `s = 1 / (1 + exp(y x^T z))`.
pub fn logistic_component(z: &[f64], y: f64, x: &[f64]) -> Result<(f64, Vec<f64>)> {
    if z.len() != x.len() {
        return Err(Error::DimensionMismatch {
            expected: z.len(),
            got: x.len(),
        });
    }
    let m = crate::linalg::dot(x, z);
    let lp = logistic_derivative(y, m);
    Ok((logistic_loss(y * m), z.iter().map(|zj| lp * zj).collect()))
}

/// Lipschitz constant of the logistic gradient for rows with norm at most
/// `max_row_norm`: `max sigma'(u) = 1/4`.
pub fn logistic_smoothness(max_row_norm: f64) -> f64 {
    0.25 * max_row_norm * max_row_norm
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegularizerParams {
    pub lambda: f64,
    pub alpha: f64,
}

impl Default for RegularizerParams {
    fn default() -> Self {
        RegularizerParams {
            lambda: 0.001,
            alpha: 1.0,
        }
    }
}

impl RegularizerParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda >= 0.0) || !(self.alpha > 0.0) {
            return Err(Error::invalid(format!(
                "regularizer needs lambda >= 0 and alpha > 0, got {self:?}"
            )));
        }
        Ok(())
    }
}

/// `r(x) = lambda * sum_j alpha x_j^2 / (1 + alpha x_j^2)`; writes the gradient
/// `2 lambda alpha x_j / (1 + alpha x_j^2)^2` into `grad`.
pub fn nonconvex_regularizer(params: &RegularizerParams, x: &[f64], grad: &mut [f64]) -> f64 {
    let RegularizerParams { lambda, alpha } = *params;
    let mut value = 0.0;
    for (g, &xj) in grad.iter_mut().zip(x) {
        let ax2 = alpha * xj * xj;
        let den = 1.0 + ax2;
        value += ax2 / den;
        *g = 2.0 * lambda * alpha * xj / (den * den);
    }
    lambda * value
}

/// `max |r''|` per coordinate, attained at 0: `2 lambda alpha`.
pub fn regularizer_smoothness(params: &RegularizerParams) -> f64 {
    2.0 * params.lambda * params.alpha
}

/// `max |r'|` per coordinate, attained at `alpha x^2 = 1/3`.
fn regularizer_slope_bound(params: &RegularizerParams) -> f64 {
    let u: f64 = 1.0 / 3.0;
    2.0 * params.lambda * params.alpha.sqrt() * u.sqrt() / ((1.0 + u) * (1.0 + u))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Loss {
    Logistic,
}

/// `f(x) = (1/n) sum_i log(1 + exp(-y_i x^T z_i)) + r(x)` with unit-norm rows
/// stored in CSR form.
#[derive(Debug, Clone)]
pub struct LinearModelProblem {
    row_ptr: Vec<usize>,
    indices: Vec<usize>,
    values: Vec<f64>,
    labels: Vec<f64>,
    d: usize,
    loss: Loss,
    reg: Option<RegularizerParams>,
}

impl LinearModelProblem {
    /// Builds the problem from a dataset, normalizing rows that are not
    /// already unit norm. `reg = None` drops the regularizer entirely.
    pub fn from_dataset(ds: &Dataset, reg: Option<RegularizerParams>) -> Result<Self> {
        if ds.is_empty() || ds.d == 0 {
            return Err(Error::Empty("dataset has no rows or no features"));
        }
        if let Some(r) = &reg {
            r.validate()?;
        }
        let unit = ds.rows.iter().all(|r| (r.norm() - 1.0).abs() <= 1e-12);
        let normalized;
        let ds = if unit {
            ds
        } else {
            normalized = normalize_rows(ds)?;
            &normalized
        };
        let nnz = ds.rows.iter().map(|r| r.indices.len()).sum();
        let mut row_ptr = Vec::with_capacity(ds.len() + 1);
        let mut indices = Vec::with_capacity(nnz);
        let mut values = Vec::with_capacity(nnz);
        row_ptr.push(0);
        for row in &ds.rows {
            indices.extend_from_slice(&row.indices);
            values.extend_from_slice(&row.values);
            row_ptr.push(indices.len());
        }
        Ok(LinearModelProblem {
            row_ptr,
            indices,
            values,
            labels: ds.labels.clone(),
            d: ds.d,
            loss: Loss::Logistic,
            reg,
        })
    }

    pub fn loss(&self) -> Loss {
        self.loss
    }

    pub fn regularizer_params(&self) -> Option<RegularizerParams> {
        self.reg
    }

    pub fn labels(&self) -> &[f64] {
        &self.labels
    }

    /// `l'(x^T z_i)`: the scalar from which `grad f_i(x) = l' z_i` is rebuilt.
    pub fn scalar_gradient_surrogate(&self, i: usize, x: &[f64]) -> f64 {
        let m = self.row(i).dot(x);
        self.loss_derivative(i, m)
    }

    /// Fraction of rows with `sign(x^T z_i) == y_i`.
    pub fn accuracy(&self, x: &[f64]) -> f64 {
        let hits = (0..self.n())
            .filter(|&i| self.row(i).dot(x) * self.labels[i] > 0.0)
            .count();
        hits as f64 / self.n() as f64
    }

    /// Bytes identifying the problem data, for manifests.
    pub fn digest_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(8 * (self.values.len() * 2 + self.labels.len() + 4));
        out.extend_from_slice(&(self.d as u64).to_le_bytes());
        for &p in &self.row_ptr {
            out.extend_from_slice(&(p as u64).to_le_bytes());
        }
        for &j in &self.indices {
            out.extend_from_slice(&(j as u64).to_le_bytes());
        }
        for v in self.values.iter().chain(&self.labels) {
            out.extend_from_slice(&v.to_le_bytes());
        }
        if let Some(r) = self.reg {
            out.extend_from_slice(&r.lambda.to_le_bytes());
            out.extend_from_slice(&r.alpha.to_le_bytes());
        }
        out
    }
}

impl LinearStructure for LinearModelProblem {
    fn row(&self, i: usize) -> SparseRow<'_> {
        let (a, b) = (self.row_ptr[i], self.row_ptr[i + 1]);
        SparseRow {
            indices: &self.indices[a..b],
            values: &self.values[a..b],
        }
    }

    fn loss_derivative(&self, i: usize, margin: f64) -> f64 {
        logistic_derivative(self.labels[i], margin)
    }
}

impl FiniteSum for LinearModelProblem {
    fn n(&self) -> usize {
        self.labels.len()
    }

    fn dim(&self) -> usize {
        self.d
    }

    fn component(&self, i: usize, x: &[f64], grad: &mut [f64]) -> f64 {
        let row = self.row(i);
        let y = self.labels[i];
        let m = row.dot(x);
        row.scatter(logistic_derivative(y, m), grad);
        logistic_loss(y * m)
    }

    fn regularizer(&self, x: &[f64], grad: &mut [f64]) -> Option<f64> {
        self.reg.as_ref().map(|r| nonconvex_regularizer(r, x, grad))
    }

    fn has_regularizer(&self) -> bool {
        self.reg.is_some()
    }

    /// `L = L_loss + L_reg`; `sigma` bounds `||grad f_i + grad r||`.
    fn smoothness(&self) -> SmoothnessInfo {
        let max_norm = (0..self.n())
            .map(|i| self.row(i).norm_sq().sqrt())
            .fold(0.0f64, f64::max);
        let (l_reg, slope) = match &self.reg {
            Some(r) => (regularizer_smoothness(r), regularizer_slope_bound(r)),
            None => (0.0, 0.0),
        };
        SmoothnessInfo {
            l: logistic_smoothness(max_norm) + l_reg,
            sigma: Some(max_norm + slope * (self.d as f64).sqrt()),
            tau: None,
        }
    }

    fn linear(&self) -> Option<&dyn LinearStructure> {
        Some(self)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::make_synthetic_classification;
    use crate::linalg::norm;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn rel_err(a: f64, b: f64) -> f64 {
        (a - b).abs() / a.abs().max(b.abs()).max(1e-8)
    }

    #[test]
    fn logistic_at_origin() {
        let z = [0.6, 0.0, -0.8];
        for y in [1.0, -1.0] {
            let (v, g) = logistic_component(&z, y, &[0.0; 3]).unwrap();
            assert!((v - 2f64.ln()).abs() < 1e-15);
            for (gj, zj) in g.iter().zip(&z) {
                assert_eq!(*gj, -y * zj / 2.0);
            }
        }
    }

    #[test]
    fn logistic_saturated_margin_does_not_overflow() {
        // series oracle: log1p(e) = e - e^2/2 + ..., e = exp(-50)
        let e = (-50f64).exp();
        let expect = e - e * e / 2.0;
        let z = [1.0];
        let (v, g) = logistic_component(&z, 1.0, &[50.0]).unwrap();
        assert!(rel_err(v, expect) < 1e-15, "{v} vs {expect}");
        assert!(norm(&g) <= e);
        let (v, g) = logistic_component(&z, -1.0, &[50.0]).unwrap();
        assert!(rel_err(v, 50.0 + expect) < 1e-15);
        assert!(v.is_finite() && g.iter().all(|x| x.is_finite()));
        let (v, _) = logistic_component(&z, -1.0, &[800.0]).unwrap();
        assert_eq!(v, 800.0);
    }

    #[test]
    fn logistic_gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..100 {
            let d = 4;
            let mut z: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
            let zn = norm(&z);
            z.iter_mut().for_each(|v| *v /= zn);
            let y = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
            let x: Vec<f64> = (0..d).map(|_| rng.random_range(-3.0..3.0)).collect();
            let (_, g) = logistic_component(&z, y, &x).unwrap();
            let h = 1e-6 * (1.0 + norm(&x));
            for k in 0..d {
                let mut xp = x.clone();
                let mut xm = x.clone();
                xp[k] += h;
                xm[k] -= h;
                let fd = (logistic_component(&z, y, &xp).unwrap().0
                    - logistic_component(&z, y, &xm).unwrap().0)
                    / (2.0 * h);
                assert!((g[k] - fd).abs() <= 1e-5 * g[k].abs().max(fd.abs()).max(1e-3));
            }
        }
    }

    #[test]
    fn regularizer_values() {
        let p = RegularizerParams {
            lambda: 1.0,
            alpha: 1.0,
        };
        let mut g = [0.0];
        assert_eq!(nonconvex_regularizer(&p, &[1.0], &mut g), 0.5);
        assert_eq!(g, [0.5]);
        let mut g = [9.0; 3];
        assert_eq!(nonconvex_regularizer(&p, &[0.0; 3], &mut g), 0.0);
        assert_eq!(g, [0.0; 3]);
    }

    #[test]
    fn regularizer_is_even_and_bounded() {
        let p = RegularizerParams {
            lambda: 0.3,
            alpha: 2.0,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut g = [0.0; 5];
        for _ in 0..100 {
            let x: Vec<f64> = (0..5).map(|_| rng.random_range(-50.0..50.0)).collect();
            let neg: Vec<f64> = x.iter().map(|v| -v).collect();
            let a = nonconvex_regularizer(&p, &x, &mut g);
            let b = nonconvex_regularizer(&p, &neg, &mut g);
            assert_eq!(a, b);
            assert!(a >= 0.0 && a <= p.lambda * 5.0);
        }
    }

    #[test]
    fn smoothness_constants_match_one_dimensional_maximization() {
        // grid search for max sigma(u)(1 - sigma(u)) and max |r''| via differences of r'
        let mut best: f64 = 0.0;
        for k in -20000..=20000 {
            let u = k as f64 * 1e-3;
            let s = 1.0 / (1.0 + (-u).exp());
            best = best.max(s * (1.0 - s));
        }
        assert!((best - logistic_smoothness(1.0)).abs() < 1e-12);

        let p = RegularizerParams {
            lambda: 0.001,
            alpha: 1.0,
        };
        let mut best: f64 = 0.0;
        let h = 1e-5;
        let mut g1 = [0.0];
        let mut g2 = [0.0];
        for k in -5000..=5000 {
            let x = k as f64 * 1e-3;
            nonconvex_regularizer(&p, &[x + h], &mut g1);
            nonconvex_regularizer(&p, &[x - h], &mut g2);
            best = best.max(((g1[0] - g2[0]) / (2.0 * h)).abs());
        }
        assert!((best - 0.002).abs() < 1e-9, "{best}");
        assert_eq!(regularizer_smoothness(&p), 0.002);
    }

    #[test]
    fn surrogate_rebuilds_component_gradient_exactly() {
        let ds = make_synthetic_classification(40, 6, 1.0, 1.0, 2).unwrap();
        let p = LinearModelProblem::from_dataset(&ds, Some(RegularizerParams::default())).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut g = vec![0.0; 6];
        let mut rebuilt = vec![0.0; 6];
        for _ in 0..100 {
            let i = rng.random_range(0..40);
            let x: Vec<f64> = (0..6).map(|_| rng.random_range(-2.0..2.0)).collect();
            p.component(i, &x, &mut g);
            p.row(i)
                .scatter(p.scalar_gradient_surrogate(i, &x), &mut rebuilt);
            assert_eq!(g, rebuilt);
        }
        for i in 0..40 {
            assert_eq!(
                p.scalar_gradient_surrogate(i, &[0.0; 6]),
                -p.labels()[i] / 2.0
            );
        }
    }

    #[test]
    fn surrogate_saturates_monotonically() {
        let mut prev = f64::INFINITY;
        for k in 0..60 {
            let m = k as f64;
            let lp = logistic_derivative(1.0, m).abs();
            assert!(lp <= prev);
            prev = lp;
        }
        assert!(prev < 1e-25);
    }

    #[test]
    fn composite_smoothness_is_sum() {
        let ds = make_synthetic_classification(30, 4, 1.0, 1.0, 1).unwrap();
        let p = LinearModelProblem::from_dataset(&ds, Some(RegularizerParams::default())).unwrap();
        assert!((p.smoothness().l - 0.252).abs() < 1e-12);
        let p = LinearModelProblem::from_dataset(&ds, None).unwrap();
        assert!((p.smoothness().l - 0.25).abs() < 1e-12);
    }
}
