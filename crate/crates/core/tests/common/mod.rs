//! Reference computations for the integration tests, built only from the raw
//! `FiniteSum` component interface.

#![allow(dead_code)]

use nonconvex_saga::FiniteSum;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

pub fn sq(v: &[f64]) -> f64 {
    v.iter().map(|a| a * a).sum()
}

pub fn dist_sq(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// `grad f_i(x)` plus the regularizer gradient, i.e. the component that plain
/// SAGA samples.
pub fn folded_component(p: &dyn FiniteSum, i: usize, x: &[f64]) -> (f64, Vec<f64>) {
    let mut g = vec![0.0; p.dim()];
    let mut f = p.component(i, x, &mut g);
    let mut gr = vec![0.0; p.dim()];
    if let Some(r) = p.regularizer(x, &mut gr) {
        f += r;
        g.iter_mut().zip(&gr).for_each(|(a, b)| *a += b);
    }
    (f, g)
}

/// Loss-only component gradient.
pub fn loss_component(p: &dyn FiniteSum, i: usize, x: &[f64]) -> Vec<f64> {
    let mut g = vec![0.0; p.dim()];
    p.component(i, x, &mut g);
    g
}

pub fn value_and_gradient(p: &dyn FiniteSum, x: &[f64]) -> (f64, Vec<f64>) {
    let n = p.n() as f64;
    let mut f = 0.0;
    let mut g = vec![0.0; p.dim()];
    for i in 0..p.n() {
        let (fi, gi) = folded_component(p, i, x);
        f += fi;
        g.iter_mut().zip(&gi).for_each(|(a, b)| *a += b);
    }
    (f / n, g.into_iter().map(|v| v / n).collect())
}

pub fn value(p: &dyn FiniteSum, x: &[f64]) -> f64 {
    value_and_gradient(p, x).0
}

/// Central differences, normwise relative error.
pub fn fd_relative_error(p: &dyn FiniteSum, x: &[f64]) -> f64 {
    let h = 1e-5 * (1.0 + sq(x).sqrt());
    let (_, g) = value_and_gradient(p, x);
    let mut y = x.to_vec();
    let fd: Vec<f64> = (0..x.len())
        .map(|k| {
            y[k] = x[k] + h;
            let up = value(p, &y);
            y[k] = x[k] - h;
            let down = value(p, &y);
            y[k] = x[k];
            (up - down) / (2.0 * h)
        })
        .collect();
    dist_sq(&fd, &g).sqrt() / sq(&g).sqrt().max(1e-8)
}

pub fn gaussian_points(d: usize, count: usize, scale: f64, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            (0..d)
                .map(|_| {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    scale * z
                })
                .collect::<Vec<f64>>()
        })
        .collect()
}

pub fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    if v.len() % 2 == 0 {
        0.5 * (v[m - 1] + v[m])
    } else {
        v[m]
    }
}

/// Plain recursion `c_t = c_{t+1} (1 - theta) + q` in ordinary f64 arithmetic.
pub fn naive_recursion(theta: f64, q: f64, horizon: usize) -> Vec<f64> {
    let mut c = vec![0.0; horizon + 1];
    for t in (0..horizon).rev() {
        c[t] = c[t + 1] * (1.0 - theta) + q;
    }
    c
}

/// `q (1 - (1 - theta)^m) / theta`, with the power taken through `ln_1p` so
/// that small `theta` keeps its digits.
pub fn geometric_closed_form(theta: f64, q: f64, m: usize) -> f64 {
    q * -((m as f64) * (-theta).ln_1p()).exp_m1() / theta
}
