//! A generic finite information tree used by the backward inductions.
//!
//! Both the base filtration (binary tree) and the enlarged filtration
//! (binary tree with a death branch at each step) are flattened into a
//! `Lattice`: per-time node lists with parent links, children lists and
//! masses under one measure. Processes on a lattice are `Vec<Vec<S>>`
//! indexed like `FProcess` / `GProcess` slices.

use crate::fspace::{FProcess, Filtration, FilteredSpace, StoppingRule};
use crate::random_time::{g_width, outcome_index, FullMeasure, GAtom, GProcess};
use crate::scalar::{sum, Scalar};
use crate::{HorizonError, Result};

#[derive(Clone, Debug)]
pub struct Lattice<S> {
    kind: Filtration,
    depth: usize,
    horizon: usize,
    children: Vec<Vec<Vec<usize>>>,
    mass: Vec<Vec<S>>,
    terminal: Vec<Vec<bool>>,
}

impl<S: Scalar> Lattice<S> {
    /// Base tree under path weights `w`, frozen at `horizon`.
    pub fn f(space: &FilteredSpace<S>, w: &[S], horizon: usize) -> Result<Self> {
        let n = space.depth();
        if horizon > n {
            return Err(HorizonError::Invalid(format!("horizon {horizon} exceeds depth {n}")));
        }
        let mass = crate::fspace::atom_masses(w, n);
        let children = (0..=n)
            .map(|t| {
                (0..1usize << t)
                    .map(|a| if t < n { vec![2 * a, 2 * a + 1] } else { Vec::new() })
                    .collect()
            })
            .collect();
        let terminal = (0..=n).map(|t| vec![t >= horizon; 1usize << t]).collect();
        Ok(Lattice { kind: Filtration::F, depth: n, horizon, children, mass, terminal })
    }

    /// Enlarged tree under a measure on outcomes, with window `[0, horizon ∧ τ]`.
    pub fn g(measure: &FullMeasure<S>, horizon: usize) -> Result<Self> {
        let n = measure.depth();
        if horizon > n {
            return Err(HorizonError::Invalid(format!("horizon {horizon} exceeds depth {n}")));
        }
        let mass = (0..=n).map(|t| measure.g_masses(t)).collect();
        let children = (0..=n)
            .map(|t| {
                (0..g_width(t))
                    .map(|i| {
                        if t == n {
                            return Vec::new();
                        }
                        let u = t + 1;
                        match GAtom::from_index(t, i) {
                            GAtom::Alive(a) => vec![
                                GAtom::Alive(2 * a).index(u),
                                GAtom::Alive(2 * a + 1).index(u),
                                GAtom::Dead { s: u, a: 2 * a }.index(u),
                                GAtom::Dead { s: u, a: 2 * a + 1 }.index(u),
                            ],
                            GAtom::Dead { s, a } => vec![
                                GAtom::Dead { s, a: 2 * a }.index(u),
                                GAtom::Dead { s, a: 2 * a + 1 }.index(u),
                            ],
                        }
                    })
                    .collect()
            })
            .collect();
        let terminal = (0..=n)
            .map(|t| {
                (0..g_width(t))
                    .map(|i| t >= horizon || matches!(GAtom::from_index(t, i), GAtom::Dead { .. }))
                    .collect()
            })
            .collect();
        Ok(Lattice { kind: Filtration::G, depth: n, horizon, children, mass, terminal })
    }

    pub fn kind(&self) -> Filtration {
        self.kind
    }

    pub fn depth(&self) -> usize {
        self.depth
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn width(&self, t: usize) -> usize {
        self.mass[t].len()
    }

    pub fn mass(&self, t: usize, i: usize) -> &S {
        &self.mass[t][i]
    }

    pub fn children(&self, t: usize, i: usize) -> &[usize] {
        &self.children[t][i]
    }

    pub fn is_terminal(&self, t: usize, i: usize) -> bool {
        self.terminal[t][i]
    }

    /// Node containing the outcome `(path, τ = k)` at time `t`.
    pub fn node_of(&self, t: usize, path: usize, k: usize) -> usize {
        match self.kind {
            Filtration::F => path >> (self.depth - t),
            Filtration::G => outcome_index(self.depth, t, path, k),
        }
    }

    /// `E[x_{t+1} | node]`, `None` on null nodes.
    pub fn cond_next(&self, x_next: &[S], t: usize, i: usize) -> Option<S> {
        let m = &self.mass[t][i];
        if m.is_zero() {
            return None;
        }
        let num = sum(self.children[t][i].iter().map(|&c| self.mass[t + 1][c].clone() * &x_next[c]));
        Some(num / m)
    }

    /// Lattice shape of an `F`- or `G`-process, checked against the kind.
    pub fn check_shape(&self, x: &[Vec<S>]) -> Result<()> {
        if x.len() != self.depth + 1 || (0..=self.depth).any(|t| x[t].len() != self.width(t)) {
            return Err(HorizonError::Invalid("process shape does not match the filtration".into()));
        }
        Ok(())
    }

    /// Number of stopping rules on `[from, horizon]`, saturating.
    pub fn rule_count(&self, from: usize) -> u128 {
        let mut cnt: Vec<u128> = vec![1; self.width(self.depth)];
        for t in (from..self.depth).rev() {
            cnt = (0..self.width(t))
                .map(|i| {
                    if self.terminal[t][i] {
                        1
                    } else {
                        self.children[t][i]
                            .iter()
                            .fold(1u128, |acc, &c| acc.saturating_mul(cnt[c]))
                            .saturating_add(1)
                    }
                })
                .collect();
        }
        (0..self.width(from)).fold(1u128, |acc, i| acc.saturating_mul(cnt[i]))
    }

    /// Visit every stop-flag assignment on `[from, horizon]` (terminal nodes stop).
    pub fn for_each_rule(
        &self,
        from: usize,
        budget: u128,
        mut visit: impl FnMut(&[Vec<bool>]),
    ) -> Result<u128> {
        let needed = self.rule_count(from);
        if needed > budget {
            return Err(HorizonError::Budget { needed, budget });
        }
        let mut flags: Vec<Vec<bool>> = (0..=self.depth).map(|t| vec![false; self.width(t)]).collect();
        let mut pending: Vec<(usize, usize)> = (0..self.width(from)).rev().map(|i| (from, i)).collect();
        let mut count = 0u128;
        self.rec(&mut flags, &mut pending, &mut count, &mut visit);
        Ok(count)
    }

    fn rec(
        &self,
        flags: &mut Vec<Vec<bool>>,
        pending: &mut Vec<(usize, usize)>,
        count: &mut u128,
        visit: &mut dyn FnMut(&[Vec<bool>]),
    ) {
        let Some((t, i)) = pending.pop() else {
            *count += 1;
            visit(flags);
            return;
        };
        flags[t][i] = true;
        self.rec(flags, pending, count, visit);
        flags[t][i] = false;
        if !self.terminal[t][i] {
            let ch = &self.children[t][i];
            for &c in ch.iter().rev() {
                pending.push((t + 1, c));
            }
            self.rec(flags, pending, count, visit);
            for _ in ch {
                pending.pop();
            }
        }
        pending.push((t, i));
    }

    /// `E[reward_θ | node]` for every node at time `from`, `θ` given by stop flags.
    pub fn rule_value(&self, reward: &[Vec<S>], flags: &[Vec<bool>], from: usize) -> Vec<Option<S>> {
        let mut val: Vec<S> = reward[self.depth].clone();
        let mut out = Vec::new();
        for t in (from..=self.depth).rev() {
            let cur: Vec<Option<S>> = (0..self.width(t))
                .map(|i| {
                    if flags[t][i] || self.terminal[t][i] {
                        if self.mass[t][i].is_zero() {
                            None
                        } else {
                            Some(reward[t][i].clone())
                        }
                    } else {
                        self.cond_next(&val, t, i)
                    }
                })
                .collect();
            if t == from {
                out = cur;
                break;
            }
            val = cur.into_iter().zip(&reward[t]).map(|(v, r)| v.unwrap_or_else(|| r.clone())).collect();
        }
        out
    }

    /// Stopping time along an outcome for the given flags.
    pub fn time_on_outcome(&self, flags: &[Vec<bool>], from: usize, path: usize, k: usize) -> usize {
        for t in from..=self.depth {
            let i = self.node_of(t, path, k);
            if flags[t][i] || self.terminal[t][i] {
                return t;
            }
        }
        self.depth
    }
}

/// Lattice slices of an `F`-process.
pub fn f_slices<S: Scalar>(x: &FProcess<S>) -> Vec<Vec<S>> {
    x.slices().to_vec()
}

/// Lattice slices of a `G`-process.
pub fn g_slices<S: Scalar>(x: &GProcess<S>) -> Vec<Vec<S>> {
    x.slices().to_vec()
}

/// Convert lattice stop flags to a `StoppingRule` (alive atoms only for `G`).
pub fn flags_to_rule(kind: Filtration, flags: &[Vec<bool>], from: usize, to: usize) -> StoppingRule {
    StoppingRule::first_hitting(kind, flags.len() - 1, from, to, |t, a| flags[t][a])
}
