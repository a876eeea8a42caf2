mod common;

use common::{draws, q};
use horizon::calibration::committed_ledger;
use horizon::corpus::{instance_rng, random_data, random_model, FAMILIES};
use horizon::norms::{
    a_norm, d_norm, f_side_estimate, m_norm, random_horizon_estimate, s_norm, weighted_p_estimate, Window, RANDOM_HORIZON_ESTIMATE,
};
use horizon::random_time::constant_hazard;
use horizon::rbsde::{solve_f, solve_g, Horizon, RBSDEData};
use horizon::snell::MeasureKind;
use horizon::{FProcess, GProcess, Rational};
use proptest::prelude::*;
use rand::Rng;

type Norm = fn(&Window, &GProcess<f64>, f64) -> f64;

fn norms(dt: f64) -> Vec<Box<dyn Fn(&Window, &GProcess<f64>, f64) -> f64>> {
    let plain: [Norm; 3] = [d_norm, m_norm, a_norm];
    let mut out: Vec<Box<dyn Fn(&Window, &GProcess<f64>, f64) -> f64>> =
        plain.into_iter().map(|f| Box::new(f) as Box<dyn Fn(&Window, &GProcess<f64>, f64) -> f64>).collect();
    out.push(Box::new(move |w, z, p| s_norm(w, z, dt, p)));
    out
}

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-12 * (1.0 + a.abs().max(b.abs()))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn norm_axioms(d in draws(1, 5, None), p in 1.0f64..4.0, c in -4.0f64..4.0, qt in any::<bool>()) {
        let (m, mut rng) = d.rational();
        let n = m.depth();
        let kind = if qt { MeasureKind::QTilde } else { MeasureKind::P };
        let win = Window::under(&m, kind, n);
        let mut draw = || GProcess::from_fn(n, |_, _| rng.gen_range(-2.0..2.0));
        let (x, y) = (draw(), draw());
        let sum = x.map(|t, atom, v| v + y.get(t, atom));
        let scaled = x.map(|_, _, v| c * v);
        for norm in norms(0.25) {
            let (nx, ny) = (norm(&win, &x, p), norm(&win, &y, p));
            prop_assert!(nx >= 0.0);
            prop_assert!(close(norm(&win, &scaled, p), c.abs() * nx));
            prop_assert!(norm(&win, &sum, p) <= nx + ny + 1e-12);
            prop_assert_eq!(norm(&win, &GProcess::constant(n, 0.0), p), 0.0);
        }
    }

    #[test]
    fn weighted_estimates_hold_under_the_frozen_constants(d in draws(2, 6, Some(true)), p_idx in 0usize..3) {
        let p = [1.5, 2.0, 3.0][p_idx];
        let ledger = committed_ledger();
        let (m, mut rng) = d.rational();
        let data: RBSDEData<Rational> = random_data(&mut rng, m.depth(), Horizon::Finite(m.depth()), p);
        let sol = solve_g(&m, &data).unwrap();
        let rec = weighted_p_estimate(&m, &data, &sol, p);
        prop_assert!(rec.ratio <= ledger.constant(&rec.id, Some(p), None, None).unwrap());
        let fs = solve_f(&m, &data).unwrap();
        let rec = f_side_estimate(&m, &data, &fs, p);
        prop_assert!(rec.ratio <= ledger.constant(&rec.id, Some(p), None, None).unwrap());
    }
}

#[test]
fn constant_kernel_on_a_hazard_model() {
    // h ≡ 1, f = S = 0: Y ≡ 1 on [0, τ] and Z, M, K vanish, so the weighted
    // left side is sup Ẽ^{1/p} = 1, while Δ = E[V^F_N]^{1/p} = 1 because
    // G_0 = 1 and Ẽ_N = 0 on a closed model.
    let ledger = committed_ledger();
    for depth in 2..=6 {
        for (num, den) in [(1, 4), (1, 2), (2, 3)] {
            let m = constant_hazard::<Rational>(depth, q(1, 4), q(num, den), true).unwrap();
            let zero = FProcess::constant(depth, q(0, 1));
            let data = RBSDEData::new(zero.clone(), Some(zero), FProcess::constant(depth, q(1, 1)), Horizon::Random, 2.0);
            let sol = solve_g(&m, &data).unwrap();
            assert!(sol.y.slices().iter().flatten().all(|y| y == &q(1, 1)));
            for p in [1.5, 2.0, 3.0] {
                let rec = random_horizon_estimate(&m, &data, &sol, p).unwrap();
                assert!((rec.lhs - 1.0).abs() < 1e-12 && (rec.rhs - 1.0).abs() < 1e-12, "{rec:?}");
                assert!(rec.ratio <= ledger.constant(RANDOM_HORIZON_ESTIMATE, Some(p), None, None).unwrap());
            }
        }
    }
}

#[test]
fn ratios_do_not_grow_with_depth() {
    let limit = committed_ledger().constant(RANDOM_HORIZON_ESTIMATE, Some(2.0), None, None).unwrap();
    let mut worst_by_depth = Vec::new();
    for depth in 4..=10 {
        let mut worst = 0.0f64;
        for i in 0..8u64 {
            let mut rng = instance_rng(900 + depth as u64, i);
            let family = FAMILIES[i as usize % FAMILIES.len()];
            let m = random_model::<f64>(&mut rng, family, depth, true, true).unwrap();
            let data: RBSDEData<f64> = random_data(&mut rng, depth, Horizon::Random, 2.0);
            let sol = solve_g(&m, &data).unwrap();
            assert!(sol.diagnostics.worst() < 1e-9);
            worst = worst.max(random_horizon_estimate(&m, &data, &sol, 2.0).unwrap().ratio);
        }
        worst_by_depth.push(worst);
    }
    assert!(worst_by_depth.iter().all(|r| *r <= limit), "{worst_by_depth:?} against {limit}");
    let (first, last) = (worst_by_depth[0], worst_by_depth[worst_by_depth.len() - 1]);
    assert!(last <= 2.0 * first, "{worst_by_depth:?}");
}

