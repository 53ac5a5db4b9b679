mod common;

use common::*;
use nonconvex_saga::data::{
    make_synthetic_classification, parse_libsvm_str, write_libsvm, Dataset, SparseVec,
};
use nonconvex_saga::optim::{
    gd_step, minibatch_saga_step, reg_saga_step, saga_step, AnchorStorage, GdState, SagaConfig,
    SagaState, SgdSchedule, Variant,
};
use nonconvex_saga::problems::{
    make_pl_quadratic, nonconvex_regularizer, regularizer_smoothness, LinearModelProblem,
    RegularizerParams,
};
use nonconvex_saga::theory::{check_gamma_bound, TheoryParams};
use nonconvex_saga::{FiniteSum, LinearStructure, Oracle};
use proptest::prelude::*;

fn logistic(n: usize, d: usize, lambda: f64, seed: u64) -> LinearModelProblem {
    let ds = make_synthetic_classification(n, d, 1.0, 1.0, seed).unwrap();
    LinearModelProblem::from_dataset(&ds, Some(RegularizerParams { lambda, alpha: 1.0 })).unwrap()
}

fn point(d: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-3.0..3.0f64, d)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn estimator_is_unbiased(n in 1usize..6, b in 1usize..3, warm in 0usize..30, seed in any::<u64>()) {
        let p = logistic(n, 3, 0.2, seed % 1000);
        let mut o = Oracle::new(&p);
        let mut s = SagaState::cold_start(&mut o, &[1.0, -0.5, 2.0], SagaConfig::new(0.3, seed)).unwrap();
        for _ in 0..warm {
            s.step(&mut o, b.min(n)).unwrap();
        }
        let b = b.min(n);
        let mut mean = vec![0.0; 3];
        let mut count = 0.0;
        let mut batch = vec![0; b];
        let total = n.pow(b as u32);
        for code in 0..total {
            let mut c = code;
            for slot in batch.iter_mut() {
                *slot = c % n;
                c /= n;
            }
            let v = s.estimator(&p, &batch).unwrap();
            mean.iter_mut().zip(&v).for_each(|(m, vk)| *m += vk);
            count += 1.0;
        }
        mean.iter_mut().for_each(|m| *m /= count);
        let (_, g) = value_and_gradient(&p, s.x());
        prop_assert!(dist_sq(&mean, &g).sqrt() <= 1e-12 * sq(&g).sqrt().max(1.0));
    }

    #[test]
    fn running_average_tracks_anchor_gradients(
        n in 2usize..40,
        steps in 100usize..600,
        b in 1usize..4,
        seed in any::<u64>(),
        scalar in any::<bool>(),
    ) {
        let p = logistic(n, 4, 0.05, seed % 997);
        let cfg = if scalar {
            SagaConfig::new(0.2, seed).variant(Variant::RegSaga).storage(AnchorStorage::Scalar)
        } else {
            SagaConfig::new(0.2, seed)
        };
        let mut o = Oracle::new(&p);
        let mut s = SagaState::cold_start(&mut o, &[0.5; 4], cfg).unwrap();
        for t in 1..=steps {
            s.step(&mut o, b.min(n)).unwrap();
            if t % 100 == 0 {
                let recomputed = s.anchors().average_gradient(&p);
                let err = dist_sq(&recomputed, s.g()).sqrt();
                prop_assert!(err <= 1e-9 * sq(&recomputed).sqrt().max(1e-300), "step {t}: {err:e}");
            }
        }
    }

    #[test]
    fn single_component_saga_is_gradient_descent(d in 1usize..6, eta in 0.01..2.0f64, seed in any::<u64>()) {
        let p = logistic(1, d, 0.05, seed % 500);
        let x0 = vec![0.7; d];
        let mut og = Oracle::new(&p);
        let mut gd = GdState::new(x0.clone(), eta);
        let mut os = Oracle::new(&p);
        let mut s = SagaState::cold_start(&mut os, &x0, SagaConfig::new(eta, seed)).unwrap();
        for _ in 0..50 {
            gd_step(&mut gd, &mut og).unwrap();
            saga_step(&mut s, &mut os).unwrap();
            prop_assert_eq!(gd.x.as_slice(), s.x());
        }
    }

    #[test]
    fn unit_minibatch_is_saga(n in 1usize..30, seed in any::<u64>()) {
        let p = logistic(n, 3, 0.01, seed % 300);
        let (mut o1, mut o2) = (Oracle::new(&p), Oracle::new(&p));
        let mut a = SagaState::cold_start(&mut o1, &[0.1; 3], SagaConfig::new(0.1, seed)).unwrap();
        let mut m = SagaState::cold_start(&mut o2, &[0.1; 3], SagaConfig::new(0.1, seed)).unwrap();
        for _ in 0..60 {
            saga_step(&mut a, &mut o1).unwrap();
            minibatch_saga_step(&mut m, &mut o2, 1).unwrap();
        }
        prop_assert_eq!(a.x(), m.x());
        prop_assert_eq!(o1.calls(), o2.calls());
    }

    #[test]
    fn unregularized_reg_saga_is_saga(n in 1usize..30, seed in any::<u64>()) {
        let p = logistic(n, 3, 0.0, seed % 300);
        let (mut o1, mut o2) = (Oracle::new(&p), Oracle::new(&p));
        let mut a = SagaState::cold_start(&mut o1, &[0.1; 3], SagaConfig::new(0.1, seed)).unwrap();
        let cfg = SagaConfig::new(0.1, seed).variant(Variant::RegSaga).storage(AnchorStorage::Scalar);
        let mut r = SagaState::cold_start(&mut o2, &[0.1; 3], cfg).unwrap();
        for _ in 0..60 {
            saga_step(&mut a, &mut o1).unwrap();
            reg_saga_step(&mut r, &mut o2).unwrap();
        }
        prop_assert_eq!(a.x(), r.x());
    }

    #[test]
    fn ifo_cost_is_exact(n in 1usize..50, t in 0u64..200, b in 1usize..6, seed in any::<u64>()) {
        let p = logistic(n, 2, 0.01, 1);
        let mut o = Oracle::new(&p);
        let mut s = SagaState::cold_start(&mut o, &[0.0; 2], SagaConfig::new(0.1, seed)).unwrap();
        for _ in 0..t {
            saga_step(&mut s, &mut o).unwrap();
        }
        prop_assert_eq!(o.calls(), n as u64 + 3 * t);

        let b = b.min(n);
        let before = o.calls();
        minibatch_saga_step(&mut s, &mut o, b).unwrap();
        let spent = o.calls() - before;
        prop_assert!(spent >= 2 * b as u64 + 1 && spent <= 3 * b as u64);

        let mut og = Oracle::new(&p);
        let mut g = GdState::new(vec![0.0; 2], 0.1);
        for _ in 0..t.min(20) {
            gd_step(&mut g, &mut og).unwrap();
        }
        prop_assert_eq!(og.calls(), n as u64 * t.min(20));
    }

    #[test]
    fn trajectories_are_determined_by_seed(seed in any::<u64>(), b in 1usize..4) {
        let p = logistic(20, 3, 0.01, 4);
        let run = |seed| {
            let mut o = Oracle::new(&p);
            let mut s = SagaState::cold_start(&mut o, &[0.2; 3], SagaConfig::new(0.3, seed)).unwrap();
            let mut xs = Vec::new();
            for _ in 0..40 {
                s.step(&mut o, b).unwrap();
                xs.push(s.x().to_vec());
            }
            xs
        };
        prop_assert_eq!(run(seed), run(seed));
        prop_assert_ne!(run(seed), run(seed.wrapping_add(1)));
    }

    #[test]
    fn descent_lemma_holds_along_iterates(seed in any::<u64>(), quadratic in any::<bool>(), eta in 0.05..1.5f64) {
        let lp = logistic(25, 4, 0.01, seed % 100);
        let qp = make_pl_quadratic(25, 4, 3, seed % 100).unwrap();
        let p: &dyn FiniteSum = if quadratic { &qp } else { &lp };
        let eta = eta / p.smoothness().l;
        let mut o = Oracle::new(p);
        let mut s = SagaState::cold_start(&mut o, &[1.0, -1.0, 0.5, 0.0], SagaConfig::new(eta, seed)).unwrap();
        let l = p.smoothness().l;
        for _ in 0..100 {
            let y = s.x().to_vec();
            saga_step(&mut s, &mut o).unwrap();
            let x = s.x();
            let (fy, gy) = value_and_gradient(p, &y);
            let step: Vec<f64> = x.iter().zip(&y).map(|(a, b)| a - b).collect();
            let rhs = fy + gy.iter().zip(&step).map(|(g, d)| g * d).sum::<f64>() + 0.5 * l * sq(&step);
            let fx = value(p, x);
            prop_assert!(fx <= rhs + 1e-12 * rhs.abs().max(1.0), "{fx} > {rhs}");
        }
    }

    #[test]
    fn pl_inequality_holds(seed in 0u64..50, x in point(6), scale in 0.01..100.0f64) {
        let p = make_pl_quadratic(12, 6, 4, seed).unwrap();
        let x: Vec<f64> = x.iter().map(|v| v * scale).collect();
        let (f, g) = value_and_gradient(&p, &x);
        let gap = f - p.fstar();
        prop_assert!(gap <= p.tau() * sq(&g) * (1.0 + 1e-12) + 1e-12 * f.abs().max(1e-300));
    }

    #[test]
    fn component_gradients_are_lipschitz(seed in 0u64..50, x in point(5), y in point(5), i in 0usize..20) {
        let p = logistic(20, 5, 0.3, seed);
        let l = p.smoothness().l;
        let gx = folded_component(&p, i, &x).1;
        let gy = folded_component(&p, i, &y).1;
        prop_assert!(dist_sq(&gx, &gy).sqrt() <= l * dist_sq(&x, &y).sqrt() * (1.0 + 1e-12) + 1e-15);
    }

    #[test]
    fn regularizer_is_bounded_and_smooth(lambda in 0.0..2.0f64, alpha in 0.01..10.0f64, x in point(4), y in point(4)) {
        let params = RegularizerParams { lambda, alpha };
        let mut gx = vec![0.0; 4];
        let mut gy = vec![0.0; 4];
        let mut g0 = vec![0.0; 4];
        let rx = nonconvex_regularizer(&params, &x, &mut gx);
        let ry = nonconvex_regularizer(&params, &y, &mut gy);
        prop_assert_eq!(nonconvex_regularizer(&params, &[0.0; 4], &mut g0), 0.0);
        prop_assert!(rx >= 0.0 && ry >= 0.0);
        prop_assert!(rx <= lambda * 4.0 && ry <= lambda * 4.0);
        let lreg = regularizer_smoothness(&params);
        prop_assert!((lreg - 2.0 * lambda * alpha).abs() <= 1e-15 * lreg.max(1.0));
        prop_assert!(dist_sq(&gx, &gy).sqrt() <= lreg * dist_sq(&x, &y).sqrt() * (1.0 + 1e-12) + 1e-15);
    }

    #[test]
    fn linear_gradient_is_surrogate_times_row(seed in 0u64..100, x in point(6), i in 0usize..15) {
        let p = logistic(15, 6, 0.0, seed);
        let g = loss_component(&p, i, &x);
        let s = p.scalar_gradient_surrogate(i, &x);
        let mut expect = vec![0.0; 6];
        p.row(i).scatter(s, &mut expect);
        prop_assert_eq!(g, expect);
    }

    #[test]
    fn schedule_follows_t_inverse(eta0 in 1e-4..10.0f64, etap in 0.0..5.0f64, t in 0u64..100_000, n in 1usize..5000) {
        let s = SgdSchedule::t_inverse(eta0, etap);
        let expect = eta0 / (1.0 + etap * (t / n as u64) as f64);
        prop_assert_eq!(s.eta(t, n), expect);
        prop_assert_eq!(s.is_fixed(), etap == 0.0);
    }

    #[test]
    fn gamma_is_monotone_in_next_weight(n in 2usize..5000, l in 0.1..10.0f64, c in 0.0..1.0f64, dc in 1e-9..1.0f64) {
        let params = TheoryParams::at_theory_step(n, l, 10, 1);
        prop_assert!(params.gamma(c + dc) <= params.gamma(c));
    }

    #[test]
    fn gamma_bound_holds_log_uniformly(logn in 0.31..4.0f64, l in prop::sample::select(vec![0.25, 1.0, 4.0])) {
        let n = 10f64.powf(logn).round() as usize;
        let chk = check_gamma_bound(&TheoryParams::at_theory_step(n.max(2), l, 10 * n.max(2), 1)).unwrap();
        prop_assert!(chk.pass, "n = {n}: gamma_n {} < {}", chk.gamma_n, chk.bound);
    }

    #[test]
    fn libsvm_round_trips(rows in prop::collection::vec(
        (any::<bool>(), prop::collection::btree_map(0usize..500, -1e6..1e6f64, 0..12)), 1..50)) {
        let ds = Dataset {
            labels: rows.iter().map(|(y, _)| if *y { 1.0 } else { -1.0 }).collect(),
            rows: rows
                .iter()
                .map(|(_, m)| SparseVec { indices: m.keys().copied().collect(), values: m.values().copied().collect() })
                .collect(),
            d: 0,
            provenance: String::new(),
        };
        let text = write_libsvm(&ds);
        let back = parse_libsvm_str(&text).unwrap();
        prop_assert_eq!(&back.rows, &ds.rows);
        prop_assert_eq!(&back.labels, &ds.labels);
        prop_assert_eq!(write_libsvm(&back), text);
    }

    #[test]
    fn parser_never_panics(text in "[-+0-9:. #a-z\\n\\t]{0,300}") {
        match parse_libsvm_str(&text) {
            Ok(_) => {}
            Err(nonconvex_saga::Error::Parse { line, .. }) => prop_assert!(line >= 1 && line <= text.lines().count().max(1)),
            Err(e) => prop_assert!(false, "unexpected error kind {e}"),
        }
    }
}
