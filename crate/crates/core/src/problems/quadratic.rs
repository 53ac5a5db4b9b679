use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::linalg::dot;
use crate::oracle::{FiniteSum, LinearStructure, SmoothnessInfo, SparseRow};

/// Least squares `f(x) = (1/n) sum_i (a_i^T x - b_i)^2`, possibly rank
/// deficient, with its gradient-dominance constant and optimal value.
///
/// With `H = (1/n) A^T A`, `f(x) - f* = e^T H e` and `||grad f||^2 = 4 e^T H^2 e`
/// for `e` in the row space, so `tau = 1 / (4 lambda_min^+(H))`.
#[derive(Debug, Clone)]
pub struct PlQuadratic {
    n: usize,
    d: usize,
    design: Vec<f64>,
    targets: Vec<f64>,
    all_indices: Vec<usize>,
    l: f64,
    tau: f64,
    fstar: f64,
    xstar: Vec<f64>,
}

impl PlQuadratic {
    /// `design` is `n x d`, row-major.
    pub fn from_design(n: usize, d: usize, design: Vec<f64>, targets: Vec<f64>) -> Result<Self> {
        if n == 0 || d == 0 {
            return Err(Error::Empty("quadratic needs n >= 1 and d >= 1"));
        }
        if design.len() != n * d {
            return Err(Error::DimensionMismatch {
                expected: n * d,
                got: design.len(),
            });
        }
        if targets.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: targets.len(),
            });
        }
        let a = DMatrix::from_row_slice(n, d, &design);
        let h = (a.transpose() * &a) / n as f64;
        let eig = h.symmetric_eigen();
        let lmax = eig.eigenvalues.iter().cloned().fold(0.0f64, f64::max);
        if lmax <= 0.0 {
            return Err(Error::invalid("design matrix is zero"));
        }
        let cutoff = lmax * 1e-10;
        let lmin_pos = eig
            .eigenvalues
            .iter()
            .cloned()
            .filter(|&v| v > cutoff)
            .fold(f64::INFINITY, f64::min);
        let tau = 1.0 / (4.0 * lmin_pos);

        let b = DVector::from_column_slice(&targets);
        let svd = a.clone().svd(true, true);
        let xs = svd
            .solve(&b, 1e-12 * svd.singular_values.max())
            .map_err(|e| Error::invalid(e.to_string()))?;
        let xstar: Vec<f64> = xs.iter().cloned().collect();

        let l = (0..n)
            .map(|i| {
                let row = &design[i * d..(i + 1) * d];
                2.0 * dot(row, row)
            })
            .fold(0.0f64, f64::max);
        let mut p = PlQuadratic {
            n,
            d,
            design,
            targets,
            all_indices: (0..d).collect(),
            l,
            tau,
            fstar: 0.0,
            xstar,
        };
        p.fstar = crate::oracle::objective(&p, &p.xstar.clone());
        Ok(p)
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn fstar(&self) -> f64 {
        self.fstar
    }

    /// A minimizer (the minimum-norm one unless constructed otherwise).
    pub fn xstar(&self) -> &[f64] {
        &self.xstar
    }

    pub fn design_row(&self, i: usize) -> &[f64] {
        &self.design[i * self.d..(i + 1) * self.d]
    }

    pub fn targets(&self) -> &[f64] {
        &self.targets
    }

    /// Eigenvalues of `(1/n) A^T A`, ascending.
    pub fn hessian_spectrum(&self) -> Vec<f64> {
        let a = DMatrix::from_row_slice(self.n, self.d, &self.design);
        let h = (a.transpose() * &a) / self.n as f64;
        let mut ev: Vec<f64> = h.symmetric_eigen().eigenvalues.iter().cloned().collect();
        ev.sort_by(f64::total_cmp);
        ev
    }
}

impl LinearStructure for PlQuadratic {
    fn row(&self, i: usize) -> SparseRow<'_> {
        SparseRow {
            indices: &self.all_indices,
            values: self.design_row(i),
        }
    }

    fn loss_derivative(&self, i: usize, margin: f64) -> f64 {
        2.0 * (margin - self.targets[i])
    }
}

impl FiniteSum for PlQuadratic {
    fn n(&self) -> usize {
        self.n
    }

    fn dim(&self) -> usize {
        self.d
    }

    fn component(&self, i: usize, x: &[f64], grad: &mut [f64]) -> f64 {
        let row = self.row(i);
        let r = row.dot(x) - self.targets[i];
        row.scatter(2.0 * r, grad);
        r * r
    }

    fn smoothness(&self) -> SmoothnessInfo {
        SmoothnessInfo {
            l: self.l,
            sigma: None,
            tau: Some(self.tau),
        }
    }

    fn linear(&self) -> Option<&dyn LinearStructure> {
        Some(self)
    }
}

fn orthonormal_columns(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    let g = DMatrix::from_fn(rows, cols, |_, _| StandardNormal.sample(rng));
    g.qr().q().columns(0, cols).into_owned()
}

/// Random least-squares instance `A = U S V^T` of the given rank with
/// consistent targets `b = A x_true`, so `f* = 0`.
///
/// Singular values are `sqrt(n) * s_k` with `s_k` evenly spaced in `[0.5, 1]`,
/// which puts the nonzero Hessian eigenvalues in `[0.25, 1]` regardless of `n`.
/// `rank < d` gives a singular Hessian that is still gradient dominated.
pub fn make_pl_quadratic(n: usize, d: usize, rank: usize, seed: u64) -> Result<PlQuadratic> {
    if rank == 0 || rank > n.min(d) {
        return Err(Error::invalid(format!(
            "rank {rank} must lie in 1..={}",
            n.min(d)
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let u = orthonormal_columns(n, rank, &mut rng);
    let v = orthonormal_columns(d, rank, &mut rng);
    let s = DMatrix::from_fn(rank, rank, |i, j| {
        if i != j {
            0.0
        } else if rank == 1 {
            (n as f64).sqrt()
        } else {
            (n as f64).sqrt() * (0.5 + 0.5 * i as f64 / (rank - 1) as f64)
        }
    });
    let a = u * s * v.transpose();
    let mut design = Vec::with_capacity(n * d);
    for i in 0..n {
        for j in 0..d {
            design.push(a[(i, j)]);
        }
    }
    let x_true: Vec<f64> = (0..d).map(|_| StandardNormal.sample(&mut rng)).collect();
    let targets: Vec<f64> = (0..n)
        .map(|i| dot(&design[i * d..(i + 1) * d], &x_true))
        .collect();
    let mut p = PlQuadratic::from_design(n, d, design, targets)?;
    // residual at x_true is exactly zero: the targets use the same dot product
    p.xstar = x_true;
    p.fstar = crate::oracle::objective(&p, &p.xstar.clone());
    debug_assert_eq!(p.fstar, 0.0);
    Ok(p)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::full_value_gradient;
    use rand::Rng;

    fn max_pl_ratio(p: &PlQuadratic, samples: usize, seed: u64) -> f64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut worst: f64 = 0.0;
        for _ in 0..samples {
            let x: Vec<f64> = (0..p.dim())
                .map(|_| rng.sample::<f64, _>(StandardNormal) * 3.0)
                .collect();
            let (f, g) = full_value_gradient(p, &x);
            let gn: f64 = g.iter().map(|v| v * v).sum();
            if gn > 0.0 {
                worst = worst.max((f - p.fstar()) / gn);
            }
        }
        worst
    }

    #[test]
    fn identity_design_has_tau_n_over_four() {
        for n in [1usize, 4, 9] {
            let mut design = vec![0.0; n * n];
            for i in 0..n {
                design[i * n + i] = 1.0;
            }
            let p = PlQuadratic::from_design(n, n, design, vec![1.0; n]).unwrap();
            assert!((p.tau() - n as f64 / 4.0).abs() < 1e-12 * n as f64);
            assert!(p.fstar().abs() < 1e-24);
            // brute-force: ratio (f - f*)/||grad||^2 is exactly tau everywhere
            let r = max_pl_ratio(&p, 200, 1);
            assert!((r - p.tau()).abs() < 1e-9 * p.tau());
        }
    }

    #[test]
    fn least_squares_identity_component() {
        let p = PlQuadratic::from_design(1, 2, vec![1.0, 0.0], vec![0.0]).unwrap();
        let mut g = [0.0; 2];
        assert_eq!(p.component(0, &[1.0, 0.0], &mut g), 1.0);
        assert_eq!(g, [2.0, 0.0]);
    }

    #[test]
    fn spectrum_matches_construction() {
        let p = make_pl_quadratic(32, 16, 12, 3).unwrap();
        let ev = p.hessian_spectrum();
        let nonzero: Vec<f64> = ev.iter().cloned().filter(|&v| v > 1e-9).collect();
        assert_eq!(nonzero.len(), 12);
        assert!((nonzero[0] - 0.25).abs() < 1e-10);
        assert!((nonzero[11] - 1.0).abs() < 1e-10);
        assert!((p.tau() - 1.0).abs() < 1e-9);
        assert_eq!(p.fstar(), 0.0);
    }

    #[test]
    fn full_rank_orthogonal_case() {
        let p = make_pl_quadratic(8, 8, 8, 5).unwrap();
        assert_eq!(
            p.hessian_spectrum().iter().filter(|&&v| v > 1e-9).count(),
            8
        );
        assert!(max_pl_ratio(&p, 1000, 2) <= p.tau() * (1.0 + 1e-12));
    }

    #[test]
    fn rank_deficient_instance_is_still_gradient_dominated() {
        let p = make_pl_quadratic(20, 10, 4, 7).unwrap();
        let ev = p.hessian_spectrum();
        assert!(ev[0].abs() < 1e-12, "Hessian should be singular");
        let worst = max_pl_ratio(&p, 1000, 3);
        assert!(worst <= p.tau() + 1e-12, "{worst} > {}", p.tau());
    }

    #[test]
    fn same_seed_same_problem() {
        let a = make_pl_quadratic(10, 6, 3, 42).unwrap();
        let b = make_pl_quadratic(10, 6, 3, 42).unwrap();
        assert_eq!(a.design, b.design);
        assert_eq!(a.targets, b.targets);
        assert_eq!(a.tau().to_bits(), b.tau().to_bits());
    }

    #[test]
    fn invalid_rank_is_rejected() {
        assert!(make_pl_quadratic(5, 4, 0, 1).is_err());
        assert!(make_pl_quadratic(5, 4, 5, 1).is_err());
    }
}
