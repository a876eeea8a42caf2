mod common;

use common::{draws, q};
use horizon::corpus::random_data;
use horizon::random_time::{g_width, GAtom};
use horizon::rbsde::{
    compare_solutions, snell_representation_gap, solve_bsde, solve_f, solve_g, solve_random_horizon, transform_f_to_g, Horizon,
    RBSDEData, RBSDESolution, SolutionGap,
};
use horizon::{FProcess, Mode, Rational, RandomTimeModel};
use num_traits::Zero;
use proptest::prelude::*;
use rand::Rng;

fn horizon_for(m: &RandomTimeModel<Rational>, frac: f64) -> Horizon {
    let n = m.depth();
    if m.mode() == Mode::Closed && frac > 0.9 {
        Horizon::Random
    } else {
        Horizon::Finite(((n as f64) * frac).round().max(1.0) as usize)
    }
}

/// Atoms of positive `Q̃_T` mass.
fn charged(m: &RandomTimeModel<Rational>, big_t: usize) -> Vec<(usize, usize)> {
    let qt = m.qtilde(big_t);
    (0..=big_t).flat_map(|t| {
        let masses = qt.g_masses(t);
        (0..g_width(t)).filter(move |&i| !masses[i].is_zero()).map(move |i| (t, i))
    }).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn solutions_are_unique(d in draws(1, 5, Some(true)), frac in 0.0f64..=1.0) {
        let (m, mut rng) = d.rational();
        let data: RBSDEData<Rational> = random_data(&mut rng, m.depth(), horizon_for(&m, frac), 2.0);
        let direct = solve_g(&m, &data).unwrap();
        let via_f = transform_f_to_g(&m, &solve_f(&m, &data).unwrap(), &data).unwrap();
        prop_assert_eq!(direct.diagnostics.worst(), 0.0);
        prop_assert_eq!(via_f.diagnostics.worst(), 0.0);
        let gap = compare_solutions(&m, &direct, &via_f);
        prop_assert_eq!((gap.y, gap.k), (0.0, 0.0));
        prop_assert_eq!(snell_representation_gap(&m, &data, &direct).unwrap(), 0.0);
    }

    #[test]
    fn comparison(d in draws(1, 5, Some(true)), frac in 0.0f64..=1.0) {
        let (m, mut rng) = d.rational();
        let n = m.depth();
        let lo: RBSDEData<Rational> = random_data(&mut rng, n, horizon_for(&m, frac), 2.0);
        let bump = |rng: &mut rand_chacha::ChaCha8Rng| FProcess::from_fn(n, |_, _| q(rng.gen_range(0..=3), 8));
        let (bf, bs, bh) = (bump(&mut rng), bump(&mut rng), bump(&mut rng));
        let add = |x: &FProcess<Rational>, y: &FProcess<Rational>| x.map(|t, a, v| v.clone() + y.at(t, a));
        let hi = RBSDEData {
            f: add(&lo.f, &bf),
            barrier: lo.barrier.as_ref().map(|s| add(s, &bs)),
            h: add(&add(&lo.h, &bs), &bh),
            ..lo.clone()
        };
        let (y1, y2) = (solve_g(&m, &lo).unwrap(), solve_g(&m, &hi).unwrap());
        for (t, i) in charged(&m, y1.horizon) {
            prop_assert!(y1.y.slice(t)[i] <= y2.y.slice(t)[i]);
        }
    }

    #[test]
    fn frozen_data_on_a_longer_window(d in draws(1, 5, Some(true)), big_t in 1usize..=5) {
        let (m, mut rng) = d.rational();
        let n = m.depth();
        let big_t = big_t.min(n);
        let data: RBSDEData<Rational> = random_data(&mut rng, n, Horizon::Finite(big_t), 2.0);
        let short = solve_g(&m, &data).unwrap();
        let long = solve_g(&m, &RBSDEData { horizon: Horizon::Finite(n), ..data.truncated(big_t) }).unwrap();
        prop_assert_eq!(compare_solutions(&m, &short, &long), SolutionGap::default());
    }

    #[test]
    fn skorokhod_condition(d in draws(1, 5, Some(true)), frac in 0.0f64..=1.0) {
        let (m, mut rng) = d.rational();
        let data: RBSDEData<Rational> = random_data(&mut rng, m.depth(), horizon_for(&m, frac), 2.0);
        let sol = solve_g(&m, &data).unwrap();
        prop_assert_eq!(sol.diagnostics.skorokhod_residual, 0.0);
        let s = data.barrier.as_ref().unwrap();
        for (t, i) in charged(&m, sol.horizon) {
            if t == 0 {
                continue;
            }
            let atom = GAtom::from_index(t, i);
            let dk = RBSDESolution::increment(&sol.k, t, atom);
            prop_assert!(dk >= q(0, 1));
            if dk > q(0, 1) {
                let parent = atom.parent(t);
                let GAtom::Alive(a) = parent else { panic!("reflection after death") };
                prop_assert_eq!(sol.y.get(t - 1, parent), s.at(t - 1, a));
            }
        }
    }

    #[test]
    fn plain_bsde_has_no_reflection(d in draws(1, 5, Some(true)), frac in 0.0f64..=1.0) {
        let (m, mut rng) = d.rational();
        let data: RBSDEData<Rational> = random_data(&mut rng, m.depth(), horizon_for(&m, frac), 2.0);
        let plain = RBSDEData { barrier: None, ..data };
        let sol = solve_bsde(&m, &plain).unwrap();
        prop_assert!(sol.k.slices().iter().flatten().all(|k| k.is_zero()));
        prop_assert_eq!(sol.diagnostics.worst(), 0.0);
    }
}

#[test]
fn m2_truncation_log() {
    let m = horizon::random_time::model_m2::<Rational>();
    let d = RBSDEData::new(
        FProcess::constant(2, q(1, 10)),
        Some(FProcess::from_fn(2, |t, _| q(-2 * t as i64, 10))),
        FProcess::from_fn(2, |t, a| q(1, 2) + m.space().driver().at(t, a).clone() * &q(1, 10)),
        Horizon::Random,
        2.0,
    );
    let log = solve_random_horizon(&m, &d).unwrap().truncation;
    assert!(log.windows(2).all(|w| w[1].gap <= w[0].gap), "{log:?}");
    assert_eq!(log.last().unwrap().gap, 0.0);
}

#[test]
fn stopping_at_the_last_date_is_the_finite_solve() {
    let q = common::q;
    for depth in 1..=5 {
        let space = horizon::FilteredSpace::<Rational>::uniform(depth, q(1, 4)).unwrap();
        let mut law = vec![q(0, 1); depth + 2];
        law[depth] = q(1, 1);
        let m = RandomTimeModel::independent(space, &law).unwrap();
        let mut rng = horizon::corpus::instance_rng(17, depth as u64);
        let d: RBSDEData<Rational> = random_data(&mut rng, depth, Horizon::Random, 2.0);
        let random = solve_random_horizon(&m, &d).unwrap().solution;
        let finite = solve_g(&m, &RBSDEData { horizon: Horizon::Finite(depth), ..d }).unwrap();
        assert_eq!(compare_solutions(&m, &random, &finite), SolutionGap::default());
    }
}
