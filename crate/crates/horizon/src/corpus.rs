//! Seeded random generators for models, RBSDE data and martingale triplets.
//!
//! Every value is a small dyadic or integer ratio, so the same instance can
//! be built exactly in either backend. Instance `i` of a corpus draws from
//! its own ChaCha stream, which keeps instances independent of each other
//! and of the order in which they are built.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::fspace::{FProcess, FilteredSpace};
use crate::random_time::RandomTimeModel;
use crate::rbsde::{Horizon, RBSDEData};
use crate::scalar::Scalar;
use crate::Result;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Family {
    /// Immersion: `F`-adapted hazard.
    Cox,
    /// Hazard tilted by the next increment of `W`.
    Lookahead,
    /// `τ` independent of the tree.
    Independent,
    /// Unstructured joint table.
    Joint,
}

pub const FAMILIES: [Family; 4] = [Family::Cox, Family::Lookahead, Family::Independent, Family::Joint];

/// The random stream of instance `index` under `seed`.
pub fn instance_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

fn ratio<S: Scalar>(n: i64, d: i64) -> S {
    S::from_ratio(n, d)
}

/// Random or uniform path probabilities, as integer weights `1..=4` normalised.
fn path_probs<S: Scalar>(rng: &mut ChaCha8Rng, depth: usize, uniform: bool) -> Vec<S> {
    let n = 1usize << depth;
    if uniform {
        return vec![ratio(1, n as i64); n];
    }
    let w: Vec<i64> = (0..n).map(|_| rng.gen_range(1..=4)).collect();
    let total: i64 = w.iter().sum();
    w.into_iter().map(|x| ratio(x, total)).collect()
}

/// Draw a model of the given family. Time step `1/4`.
///
/// Hazards stay below one before `N`, so the positivity conditions of the
/// model always hold; `closed` forces `τ ≤ N`.
pub fn random_model<S: Scalar>(
    rng: &mut ChaCha8Rng,
    family: Family,
    depth: usize,
    closed: bool,
    uniform: bool,
) -> Result<RandomTimeModel<S>> {
    let space = FilteredSpace::new(depth, ratio(1, 4), path_probs(rng, depth, uniform))?;
    let last = |t: usize| closed && t == depth;
    match family {
        Family::Cox => {
            let hz = FProcess::from_fn(depth, |t, _| if last(t) { S::one() } else { ratio(rng.gen_range(1..=6), 8) });
            RandomTimeModel::cox(space, &hz)
        }
        Family::Lookahead => {
            let hz = FProcess::from_fn(depth, |t, _| if last(t) { S::one() } else { ratio(rng.gen_range(1..=4), 8) });
            let tilt = ratio(rng.gen_range(1..=3), 4);
            RandomTimeModel::lookahead(space, &hz, &tilt)
        }
        Family::Independent => {
            let mut law: Vec<i64> = (0..=depth + 1).map(|k| if k == 0 { 0 } else { rng.gen_range(1..=4) }).collect();
            if closed {
                law[depth + 1] = 0;
            }
            let total: i64 = law.iter().sum();
            let law: Vec<S> = law.into_iter().map(|x| ratio(x, total)).collect();
            RandomTimeModel::independent(space, &law)
        }
        Family::Joint => {
            let w = space
                .path_prob()
                .iter()
                .map(|pp| {
                    let row: Vec<i64> = (0..=depth + 1)
                        .map(|k| match k {
                            0 => 0,
                            k if k == depth + 1 => i64::from(!closed) * rng.gen_range(1..=3),
                            k if k == depth => rng.gen_range(1..=3),
                            _ => rng.gen_range(0..=3),
                        })
                        .collect();
                    let total: i64 = row.iter().sum();
                    row.into_iter().map(|x| pp.clone() * &ratio(x, total)).collect()
                })
                .collect();
            RandomTimeModel::from_joint(space, w)
        }
    }
}

/// Node-wise values `k/8` with `k` in `lo..=hi`.
pub fn random_process<S: Scalar>(rng: &mut ChaCha8Rng, depth: usize, lo: i64, hi: i64) -> FProcess<S> {
    FProcess::from_fn(depth, |_, _| ratio(rng.gen_range(lo..=hi), 8))
}

/// Random `(f, S, h)` with `h ≥ S` on every node, so the data also
/// qualifies for truncation under the random horizon.
pub fn random_data<S: Scalar>(rng: &mut ChaCha8Rng, depth: usize, horizon: Horizon, p: f64) -> RBSDEData<S> {
    let f = random_process(rng, depth, -4, 4);
    let s: FProcess<S> = random_process(rng, depth, -4, 4);
    let h = FProcess::from_fn(depth, |t, a| {
        let bump: S = ratio(rng.gen_range(0..=4), 8);
        s.at(t, a).clone() + &bump
    });
    RBSDEData::new(f, Some(s), h, horizon, p)
}

/// A second data set near `data`: node-wise moves of at most `1/4`, with `h ≥ S` kept.
pub fn perturb<S: Scalar>(rng: &mut ChaCha8Rng, data: &RBSDEData<S>) -> RBSDEData<S> {
    let mut jiggle = |x: &FProcess<S>| x.map(|_, _, v| v.clone() + &ratio(rng.gen_range(-2..=2), 8));
    let f = jiggle(&data.f);
    let s = data.barrier.as_ref().map(&mut jiggle);
    let h0 = jiggle(&data.h);
    let h = match &s {
        Some(s) => h0.map(|t, a, v| S::max_of(v, s.at(t, a))),
        None => h0,
    };
    RBSDEData::new(f, s, h, data.horizon, data.p)
}

/// `(H, X, M)` on a uniform tree: `M` has increments `g_{t−1} ε_t` with a
/// random predictable `g`, `X` is random and `H = u X` with `|u| ≤ 1`.
pub struct MartingaleTriplet<S> {
    pub h: FProcess<S>,
    pub x: FProcess<S>,
    pub m: FProcess<S>,
}

pub fn random_triplet<S: Scalar>(rng: &mut ChaCha8Rng, depth: usize) -> MartingaleTriplet<S> {
    let x: FProcess<S> = random_process(rng, depth, -8, 8);
    let h = x.map(|_, _, v: &S| v.clone() * &ratio::<S>(rng.gen_range(-4..=4), 4));
    let g: FProcess<S> = random_process(rng, depth, -8, 8);
    let mut m = FProcess::constant(depth, S::zero());
    for t in 1..=depth {
        for c in 0..1usize << t {
            let step = g.at(t - 1, c >> 1).clone();
            let step = if c & 1 == 0 { step } else { -step };
            m.set(t, c, m.at(t - 1, c >> 1).clone() + &step);
        }
    }
    MartingaleTriplet { h, x, m }
}

/// Draw the model of instance `index`: family by rotation, depth in
/// `min_depth..=max_depth`, closed with probability one half.
pub fn corpus_model<S: Scalar>(
    rng: &mut ChaCha8Rng,
    index: usize,
    min_depth: usize,
    max_depth: usize,
    uniform: bool,
) -> Result<(Family, bool, RandomTimeModel<S>)> {
    let family = FAMILIES[index % FAMILIES.len()];
    let depth = rng.gen_range(min_depth..=max_depth);
    let closed = rng.gen_bool(0.5);
    let model = random_model(rng, family, depth, closed, uniform)?;
    Ok((family, closed, model))
}

/// Stable hex digest of a model and a list of processes.
pub fn fingerprint<S: Scalar>(model: &RandomTimeModel<S>, processes: &[&FProcess<S>]) -> String {
    let mut h = Sha256::new();
    let n = model.depth();
    h.update(format!("depth={n};"));
    for (path, k, w) in model.p().outcomes() {
        h.update(format!("{path},{k},{};", w.to_f64()));
    }
    for p in processes {
        for v in p.slices().iter().flatten() {
            h.update(format!("{};", v.to_f64()));
        }
        h.update("|");
    }
    hex(&h.finalize())
}

pub fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::random_time::Mode;
    use crate::scalar::Rational;

    #[test]
    fn every_family_validates_in_both_modes() {
        let mut rng = instance_rng(7, 0);
        for family in FAMILIES {
            for closed in [false, true] {
                for uniform in [false, true] {
                    let m = random_model::<Rational>(&mut rng, family, 4, closed, uniform).unwrap();
                    assert_eq!(m.mode() == Mode::Closed, closed, "{family:?}");
                }
            }
        }
    }

    #[test]
    fn streams_are_reproducible() {
        let a: FProcess<Rational> = random_process(&mut instance_rng(3, 5), 3, -4, 4);
        let b: FProcess<Rational> = random_process(&mut instance_rng(3, 5), 3, -4, 4);
        let c: FProcess<Rational> = random_process(&mut instance_rng(3, 6), 3, -4, 4);
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn data_keeps_h_above_barrier() {
        let mut rng = instance_rng(1, 1);
        let d = random_data::<Rational>(&mut rng, 4, Horizon::Random, 2.0);
        let e = perturb(&mut rng, &d);
        for x in [&d, &e] {
            let s = x.barrier.as_ref().unwrap();
            for t in 0..=4 {
                for a in 0..1usize << t {
                    assert!(x.h.at(t, a) >= s.at(t, a));
                }
            }
        }
    }

    #[test]
    fn triplet_is_dominated_martingale() {
        let space = FilteredSpace::<Rational>::uniform(4, ratio(1, 4)).unwrap();
        let tr = random_triplet::<Rational>(&mut instance_rng(2, 0), 4);
        assert_eq!(crate::fspace::martingale_defect(&space, &tr.m, space.path_prob()).unwrap(), 0.0);
        assert!(crate::norms::martingale_inequality(&space, &tr.h, &tr.x, &tr.m, 4.0, 4.0).is_ok());
    }
}
