mod common;

use common::{draws, q};
use horizon::corpus::random_process;
use horizon::projections::{
    check_reduction, class_d_transfer, g_projection_identity, integrability_transfer, reconstruct, reduce_g_to_f, ReductionPair,
};
use horizon::{FProcess, GProcess, Rational};
use num_traits::Zero;
use proptest::prelude::*;
use rand::Rng;

fn random_stopped(rng: &mut rand_chacha::ChaCha8Rng, n: usize) -> GProcess<Rational> {
    let x: FProcess<Rational> = random_process(rng, n, -6, 6);
    let k: FProcess<Rational> = random_process(rng, n, -6, 6);
    GProcess::stopped(n, |t, a| x.at(t, a).clone(), |s, a| k.at(s, a).clone())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn reduction_round_trips(d in draws(1, 6, None)) {
        let (m, mut rng) = d.rational();
        let n = m.depth();
        let x = random_stopped(&mut rng, n);
        let pair = reduce_g_to_f(&m, &x).unwrap();
        let rep = check_reduction(&m, &x, &pair);
        prop_assert_eq!((rep.reconstruction, rep.decomposition, rep.duality, rep.k_f_projection), (0.0, 0.0, 0.0, 0.0));

        // Pair → process → pair, compared where G > 0 and on the death diagonal.
        let x_f: FProcess<Rational> = random_process(&mut rng, n, -6, 6);
        let k_pr = FProcess::from_fn(n, |s, a| if s == 0 { q(0, 1) } else { q(rng.gen_range(-6..=6), 8) + &q(a as i64 % 3, 1) });
        let given = ReductionPair { x_f: x_f.clone(), k_pr: k_pr.clone(), k_op: k_pr.clone(), k_f: FProcess::constant(n, q(0, 1)) };
        let back = reduce_g_to_f(&m, &reconstruct(&given)).unwrap();
        for t in 0..=n {
            for a in 0..1usize << t {
                if !m.g().at(t, a).is_zero() {
                    prop_assert_eq!(back.x_f.at(t, a), x_f.at(t, a));
                }
                if t > 0 {
                    prop_assert_eq!(back.k_pr.at(t, a), k_pr.at(t, a));
                }
            }
        }
    }

    #[test]
    fn reduction_is_unique(d in draws(1, 5, None)) {
        // Two processes that agree on every atom of positive mass have the same pair there.
        let (m, mut rng) = d.rational();
        let n = m.depth();
        let xf: FProcess<Rational> = random_process(&mut rng, n, -6, 6);
        let k: FProcess<Rational> = random_process(&mut rng, n, -6, 6);
        let bump = |v: &Rational, null: bool| if null { v.clone() + &q(1, 1) } else { v.clone() };
        let fiber_null = |s: usize, a: usize| m.p().g_masses(s)[horizon::random_time::GAtom::Dead { s, a }.index(s)].is_zero();
        let x = GProcess::stopped(n, |t, a| xf.at(t, a).clone(), |s, a| k.at(s, a).clone());
        let y = GProcess::stopped(n, |t, a| bump(xf.at(t, a), m.g().at(t, a).is_zero()), |s, a| bump(k.at(s, a), fiber_null(s, a)));
        let (px, py) = (reduce_g_to_f(&m, &x).unwrap(), reduce_g_to_f(&m, &y).unwrap());
        for t in 0..=n {
            for a in 0..1usize << t {
                if !m.g().at(t, a).is_zero() {
                    prop_assert_eq!(px.x_f.at(t, a), py.x_f.at(t, a));
                }
                if t > 0 && !fiber_null(t, a) {
                    prop_assert_eq!(px.k_op.at(t, a), py.k_op.at(t, a));
                }
            }
        }
    }

    #[test]
    fn projection_identity(d in draws(1, 6, None)) {
        let (m, mut rng) = d.rational();
        let n = m.depth();
        let x: Vec<Vec<Rational>> = (0..1usize << n).map(|_| (0..=n + 1).map(|_| q(rng.gen_range(-8..=8), 4)).collect()).collect();
        prop_assert_eq!(g_projection_identity(&m, &x), 0.0);
    }

    #[test]
    fn integrability_and_class_d(d in draws(1, 3, None), qexp in 1.0f64..4.0) {
        let (m, mut rng) = d.rational();
        let x = random_stopped(&mut rng, m.depth());
        prop_assert!(integrability_transfer(&m, &x, qexp).unwrap().sandwich);
        let cutoffs = [q(0, 1), q(1, 4), q(1, 2), q(1, 1)];
        prop_assert!(class_d_transfer(&m, &x, &cutoffs, 1 << 20).unwrap() <= q(0, 1));
    }
}

#[test]
fn zero_process_has_zero_pair() {
    let m = horizon::random_time::model_m2::<Rational>();
    let pair = reduce_g_to_f(&m, &GProcess::constant(2, q(0, 1))).unwrap();
    for x in [&pair.x_f, &pair.k_pr, &pair.k_op, &pair.k_f] {
        assert!(x.slices().iter().flatten().all(|v| v.is_zero()));
    }
    let rep = integrability_transfer(&m, &GProcess::constant(2, q(0, 1)), 2.0).unwrap();
    assert!(rep.sandwich);
}
