//! Random instances shared by the property tests.

#![allow(dead_code)]

use horizon::corpus::{instance_rng, random_model, FAMILIES};
use horizon::{RandomTimeModel, Rational, Scalar};
use proptest::prelude::*;
use rand_chacha::ChaCha8Rng;

/// A corpus draw: seed, family, depth, mode and path law.
#[derive(Clone, Debug)]
pub struct Draw {
    pub seed: u64,
    pub family: usize,
    pub depth: usize,
    pub closed: bool,
    pub uniform: bool,
}

impl Draw {
    pub fn build<S: Scalar>(&self) -> (RandomTimeModel<S>, ChaCha8Rng) {
        let mut rng = instance_rng(self.seed, self.family as u64);
        let m = random_model(&mut rng, FAMILIES[self.family], self.depth, self.closed, self.uniform)
            .expect("corpus models validate");
        (m, rng)
    }

    pub fn rational(&self) -> (RandomTimeModel<Rational>, ChaCha8Rng) {
        self.build()
    }
}

pub fn draws(min_depth: usize, max_depth: usize, uniform: Option<bool>) -> impl Strategy<Value = Draw> {
    let uni = match uniform {
        Some(u) => Just(u).boxed(),
        None => any::<bool>().boxed(),
    };
    (any::<u64>(), 0..FAMILIES.len(), min_depth..=max_depth, any::<bool>(), uni)
        .prop_map(|(seed, family, depth, closed, uniform)| Draw { seed, family, depth, closed, uniform })
}

pub fn q(n: i64, d: i64) -> Rational {
    Rational::from_ratio(n, d)
}
