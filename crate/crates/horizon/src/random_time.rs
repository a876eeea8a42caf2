//! The random horizon `τ`, the progressively enlarged filtration `G`, and
//! the processes attached to them: `G`, `G̃`, `D^{o,F}`, `m`, `Ẽ`, `Z̃`,
//! `N^G`, `𝒯(·)`, `Q̃`, `V^F`, `Ṽ^(a)`.
//!
//! # Layout of `G`-processes
//!
//! The `G_t`-atoms are `ALIVE(a)` (τ > t, prefix `a` of length `t`) and
//! `DEAD(s, a)` (τ = s ≤ t). A time-`t` slice is a flat vector of length
//! `(t + 1)·2^t`: alive atoms first, then one block of `2^t` entries per
//! death time `s = 1..=t`. Atoms of zero mass hold `0`.
//!
//! The model requires `τ ≥ 1`, so `G_0 = 1` and every stochastic integral is
//! a sum over `s = 1..=t`.

use crate::fspace::{path_label, stochastic_exponential, FProcess, FilteredSpace};
use crate::scalar::{discrepancy, sum, Scalar};
use crate::{HorizonError, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    /// `P(τ > N) > 0`; horizons of the form `T ∧ τ`.
    Open,
    /// `τ ≤ N` almost surely; horizon `τ`.
    Closed,
}

/// A `G_t`-atom.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum GAtom {
    Alive(usize),
    Dead { s: usize, a: usize },
}

/// Number of `G_t`-atoms.
pub fn g_width(t: usize) -> usize {
    (t + 1) << t
}

impl GAtom {
    pub fn index(&self, t: usize) -> usize {
        match *self {
            GAtom::Alive(a) => a,
            GAtom::Dead { s, a } => (s << t) + a,
        }
    }

    pub fn from_index(t: usize, i: usize) -> GAtom {
        let s = i >> t;
        let a = i & ((1usize << t) - 1);
        if s == 0 {
            GAtom::Alive(a)
        } else {
            GAtom::Dead { s, a }
        }
    }

    /// The `G_{t−1}`-atom containing this `G_t`-atom.
    pub fn parent(&self, t: usize) -> GAtom {
        match *self {
            GAtom::Alive(a) => GAtom::Alive(a >> 1),
            GAtom::Dead { s, a } if s == t => GAtom::Alive(a >> 1),
            GAtom::Dead { s, a } => GAtom::Dead { s, a: a >> 1 },
        }
    }

    pub fn prefix(&self) -> usize {
        match *self {
            GAtom::Alive(a) | GAtom::Dead { a, .. } => a,
        }
    }

    pub fn label(&self, t: usize) -> String {
        match *self {
            GAtom::Alive(a) => format!("A:{}", path_label(a, t)),
            GAtom::Dead { s, a } => format!("D{s}:{}", path_label(a, t)),
        }
    }
}

/// Index of the `G_t`-atom containing the outcome `(path, τ = k)`.
pub fn outcome_index(depth: usize, t: usize, path: usize, k: usize) -> usize {
    let a = path >> (depth - t);
    if k <= t {
        (k << t) + a
    } else {
        a
    }
}

/// A `G`-adapted process in the flat layout described in the module docs.
#[derive(Clone, Debug, PartialEq)]
pub struct GProcess<S> {
    v: Vec<Vec<S>>,
}

impl<S: Scalar> GProcess<S> {
    pub fn from_fn(depth: usize, mut f: impl FnMut(usize, GAtom) -> S) -> Self {
        let v = (0..=depth)
            .map(|t| (0..g_width(t)).map(|i| f(t, GAtom::from_index(t, i))).collect())
            .collect();
        GProcess { v }
    }

    /// Process stopped at `τ`: `alive(t, a)` before death, `at_death(s, a_s)` from `s` on.
    pub fn stopped(
        depth: usize,
        mut alive: impl FnMut(usize, usize) -> S,
        mut at_death: impl FnMut(usize, usize) -> S,
    ) -> Self {
        let death: Vec<Vec<S>> = (0..=depth)
            .map(|s| {
                if s == 0 {
                    Vec::new()
                } else {
                    (0..1usize << s).map(|a| at_death(s, a)).collect()
                }
            })
            .collect();
        GProcess::from_fn(depth, |t, atom| match atom {
            GAtom::Alive(a) => alive(t, a),
            GAtom::Dead { s, a } => death[s][a >> (t - s)].clone(),
        })
    }

    pub fn constant(depth: usize, c: S) -> Self {
        GProcess::from_fn(depth, |_, _| c.clone())
    }

    pub fn from_slices(v: Vec<Vec<S>>) -> Result<Self> {
        if v.is_empty() || v.iter().enumerate().any(|(t, row)| row.len() != g_width(t)) {
            return Err(HorizonError::Invalid("G-process slices have the wrong shape".into()));
        }
        Ok(GProcess { v })
    }

    pub fn slices(&self) -> &[Vec<S>] {
        &self.v
    }

    pub fn into_slices(self) -> Vec<Vec<S>> {
        self.v
    }

    pub fn depth(&self) -> usize {
        self.v.len() - 1
    }

    pub fn slice(&self, t: usize) -> &[S] {
        &self.v[t]
    }

    pub fn get(&self, t: usize, atom: GAtom) -> &S {
        &self.v[t][atom.index(t)]
    }

    pub fn alive(&self, t: usize, a: usize) -> &S {
        &self.v[t][a]
    }

    /// Value frozen at the death time `s` on prefix `a` of length `s`.
    pub fn at_death(&self, s: usize, a: usize) -> &S {
        &self.v[s][(s << s) + a]
    }

    pub fn on_outcome(&self, t: usize, path: usize, k: usize) -> &S {
        &self.v[t][outcome_index(self.depth(), t, path, k)]
    }

    pub fn set(&mut self, t: usize, atom: GAtom, x: S) {
        let i = atom.index(t);
        self.v[t][i] = x;
    }

    pub fn map<T: Scalar>(&self, mut f: impl FnMut(usize, GAtom, &S) -> T) -> GProcess<T> {
        GProcess::from_fn(self.depth(), |t, atom| f(t, atom, self.get(t, atom)))
    }

    /// `X^T`: the process frozen after time `horizon`.
    pub fn stop_at(&self, horizon: usize) -> GProcess<S> {
        GProcess::from_fn(self.depth(), |t, atom| {
            if t <= horizon {
                return self.get(t, atom).clone();
            }
            let a = atom.prefix() >> (t - horizon);
            let frozen = match atom {
                GAtom::Dead { s, .. } if s <= horizon => GAtom::Dead { s, a },
                _ => GAtom::Alive(a),
            };
            self.get(horizon, frozen).clone()
        })
    }

    /// True when the process is constant after death.
    pub fn is_stopped_at_tau(&self) -> bool {
        (1..=self.depth()).all(|t| {
            (1..=t).all(|s| {
                (0..1usize << t).all(|a| self.get(t, GAtom::Dead { s, a }) == self.at_death(s, a >> (t - s)))
            })
        })
    }

    pub fn to_f64(&self) -> GProcess<f64> {
        self.map(|_, _, x| x.to_f64())
    }
}

// ---------------------------------------------------------------------------
// Measures on the enlarged space
// ---------------------------------------------------------------------------

/// Weights on outcomes `(path, k)`, `k ∈ 0..=N+1` (`N+1` means alive at `N`).
#[derive(Clone, Debug, PartialEq)]
pub struct FullMeasure<S> {
    depth: usize,
    w: Vec<Vec<S>>,
}

impl<S: Scalar> FullMeasure<S> {
    pub fn weight(&self, path: usize, k: usize) -> &S {
        &self.w[path][k]
    }

    pub fn depth(&self) -> usize {
        self.depth
    }

    pub fn total(&self) -> S {
        sum(self.w.iter().flat_map(|r| r.iter().cloned()))
    }

    /// Iterate over outcomes with positive weight.
    pub fn outcomes(&self) -> impl Iterator<Item = (usize, usize, &S)> + '_ {
        self.w.iter().enumerate().flat_map(|(p, row)| {
            row.iter().enumerate().filter(|(_, x)| !x.is_zero()).map(move |(k, x)| (p, k, x))
        })
    }

    /// Mass of each `G_t`-atom.
    pub fn g_masses(&self, t: usize) -> Vec<S> {
        let mut m = vec![S::zero(); g_width(t)];
        for (p, k, x) in self.outcomes() {
            let i = outcome_index(self.depth, t, p, k);
            m[i] = m[i].clone() + x;
        }
        m
    }

    pub fn to_f64(&self) -> FullMeasure<f64> {
        FullMeasure { depth: self.depth, w: self.w.iter().map(|r| r.iter().map(|x| x.to_f64()).collect()).collect() }
    }

    /// Path marginal (the restriction to `F_N`).
    pub fn path_marginal(&self) -> Vec<S> {
        self.w.iter().map(|r| sum(r.iter().cloned())).collect()
    }

    pub fn expect(&self, mut f: impl FnMut(usize, usize) -> S) -> S {
        sum(self.outcomes().map(|(p, k, x)| x.clone() * &f(p, k)))
    }

    /// `E[X_{t2} | G_t]` on every `G_t`-atom (`None` on null atoms).
    pub fn cond_g(&self, x_t2: &[S], t2: usize, t: usize) -> Vec<Option<S>> {
        let mut num = vec![S::zero(); g_width(t)];
        let mut den = vec![S::zero(); g_width(t)];
        for (p, k, x) in self.outcomes() {
            let i = outcome_index(self.depth, t, p, k);
            let j = outcome_index(self.depth, t2, p, k);
            num[i] = num[i].clone() + &(x.clone() * &x_t2[j]);
            den[i] = den[i].clone() + x;
        }
        num.into_iter()
            .zip(den)
            .map(|(n, d)| if d.is_zero() { None } else { Some(n / &d) })
            .collect()
    }

    /// Largest one-step conditional drift of `X` over `t < horizon`.
    pub fn martingale_defect(&self, x: &GProcess<S>, horizon: usize) -> f64 {
        let mut worst = 0.0f64;
        for t in 0..horizon.min(self.depth) {
            let e = self.cond_g(x.slice(t + 1), t + 1, t);
            for (i, v) in e.iter().enumerate() {
                if let Some(v) = v {
                    worst = worst.max(discrepancy(v, &x.slice(t)[i]));
                }
            }
        }
        worst
    }
}

// ---------------------------------------------------------------------------
// The model
// ---------------------------------------------------------------------------

#[derive(Clone, Debug)]
pub struct RandomTimeModel<S: Scalar> {
    space: FilteredSpace<S>,
    p: FullMeasure<S>,
    mode: Mode,
    g: FProcess<S>,
    gt: FProcess<S>,
    dd: FProcess<S>,
}

impl<S: Scalar> RandomTimeModel<S> {
    /// Validate a joint weight table `weights[path][k]`, `k ∈ 0..=N+1`.
    pub fn from_joint(space: FilteredSpace<S>, weights: Vec<Vec<S>>) -> Result<Self> {
        let n = space.depth();
        if weights.len() != space.n_paths() || weights.iter().any(|r| r.len() != n + 2) {
            return Err(HorizonError::Validation(format!(
                "joint table must have {} rows of {} entries",
                space.n_paths(),
                n + 2
            )));
        }
        for (p, row) in weights.iter().enumerate() {
            if row.iter().any(|x| x.is_negative()) {
                return Err(HorizonError::Validation(format!(
                    "negative weight on path {}",
                    path_label(p, n)
                )));
            }
            if !row[0].is_zero() {
                return Err(HorizonError::Validation(format!(
                    "τ = 0 carries weight on path {}; the model requires τ ≥ 1",
                    path_label(p, n)
                )));
            }
            let marg = sum(row.iter().cloned());
            if !crate::scalar::close(&marg, &space.path_prob()[p], 1e-12) {
                return Err(HorizonError::Validation(format!(
                    "weights on path {} sum to {:?}, path probability is {:?}",
                    path_label(p, n),
                    marg,
                    space.path_prob()[p]
                )));
            }
        }
        let p = FullMeasure { depth: n, w: weights };
        let mode = if p.w.iter().all(|r| r[n + 1].is_zero()) { Mode::Closed } else { Mode::Open };

        // survival processes from cumulative tail sums per path
        let mut tail: Vec<Vec<S>> = Vec::with_capacity(space.n_paths());
        for row in &p.w {
            let mut acc = vec![S::zero(); n + 3];
            for k in (0..n + 2).rev() {
                acc[k] = acc[k + 1].clone() + &row[k];
            }
            tail.push(acc);
        }
        let cond = |t: usize, a: usize, f: &dyn Fn(&[S]) -> S| -> S {
            let gap = n - t;
            let num = sum(((a << gap)..((a + 1) << gap)).map(|path| f(&tail[path])));
            num / space.atom_prob(t, a)
        };
        let g = FProcess::from_fn(n, |t, a| cond(t, a, &|r| r[t + 1].clone()));
        let gt = FProcess::from_fn(n, |t, a| cond(t, a, &|r| r[t].clone()));
        let dd = FProcess::from_fn(n, |t, a| cond(t, a, &|r| r[t].clone() - &r[t + 1]));

        for t in 0..=n {
            for a in 0..1usize << t {
                let need_g = t < n || mode == Mode::Open;
                if need_g && !g.at(t, a).is_positive() {
                    return Err(HorizonError::Validation(format!(
                        "positivity fails: G_{t} = 0 at atom {:?}",
                        path_label(a, t)
                    )));
                }
                if !gt.at(t, a).is_positive() {
                    return Err(HorizonError::Validation(format!(
                        "positivity fails: G̃_{t} = 0 at atom {:?}",
                        path_label(a, t)
                    )));
                }
            }
        }
        Ok(RandomTimeModel { space, p, mode, g, gt, dd })
    }

    /// `τ` independent of `F` with law `law[k]`, `k ∈ 0..=N+1`.
    pub fn independent(space: FilteredSpace<S>, law: &[S]) -> Result<Self> {
        let n = space.depth();
        if law.len() != n + 2 {
            return Err(HorizonError::Validation(format!("law must have {} entries", n + 2)));
        }
        let w = space
            .path_prob()
            .iter()
            .map(|pp| law.iter().map(|l| pp.clone() * l).collect())
            .collect();
        Self::from_joint(space, w)
    }

    /// Cox construction with `F`-adapted hazard `λ_t ∈ [0, 1]`, `t ≥ 1`.
    pub fn cox(space: FilteredSpace<S>, hazard: &FProcess<S>) -> Result<Self> {
        let n = space.depth();
        let w = (0..space.n_paths())
            .map(|path| {
                let lam: Vec<S> = (0..=n).map(|t| hazard.on_path(path, t).clone()).collect();
                hazard_row(&space.path_prob()[path], &lam, n)
            })
            .collect::<Result<Vec<_>>>()?;
        Self::from_joint(space, w)
    }

    /// Non-immersion family: the hazard at `t` is tilted by the sign of the
    /// next increment, `λ̃_t = λ_t (1 + θ ε_{t+1})` for `t < N`.
    pub fn lookahead(space: FilteredSpace<S>, hazard: &FProcess<S>, tilt: &S) -> Result<Self> {
        let n = space.depth();
        let w = (0..space.n_paths())
            .map(|path| {
                let lam: Vec<S> = (0..=n)
                    .map(|t| {
                        let base = hazard.on_path(path, t).clone();
                        if t == 0 || t == n {
                            return base;
                        }
                        let up = (path >> (n - t - 1)) & 1 == 0;
                        let eps = if up { S::one() } else { -S::one() };
                        base * &(S::one() + &(tilt.clone() * &eps))
                    })
                    .collect();
                hazard_row(&space.path_prob()[path], &lam, n)
            })
            .collect::<Result<Vec<_>>>()?;
        Self::from_joint(space, w)
    }

    pub fn space(&self) -> &FilteredSpace<S> {
        &self.space
    }

    pub fn depth(&self) -> usize {
        self.space.depth()
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn p(&self) -> &FullMeasure<S> {
        &self.p
    }

    /// `(G, G̃, ΔD^{o,F})`.
    pub fn survival_processes(&self) -> (&FProcess<S>, &FProcess<S>, &FProcess<S>) {
        (&self.g, &self.gt, &self.dd)
    }

    pub fn g(&self) -> &FProcess<S> {
        &self.g
    }

    pub fn g_tilde(&self) -> &FProcess<S> {
        &self.gt
    }

    pub fn d_dof(&self) -> &FProcess<S> {
        &self.dd
    }

    /// `D^{o,F}_t = Σ_{s≤t} ΔD^{o,F}_s`.
    pub fn d_of(&self) -> FProcess<S> {
        cumulate(&self.dd, |t, a| self.dd.at(t, a).clone())
    }

    /// `m = G + D^{o,F}`.
    pub fn martingale_m(&self) -> FProcess<S> {
        let dof = self.d_of();
        FProcess::from_fn(self.depth(), |t, a| self.g.at(t, a).clone() + dof.at(t, a))
    }

    /// `Ẽ_t = Π_{s≤t} (1 − ΔD^{o,F}_s / G̃_s)`.
    pub fn epsilon_tilde(&self) -> FProcess<S> {
        product(self.depth(), |t, a| S::one() - &(self.dd.at(t, a).clone() / self.gt.at(t, a)))
    }

    /// `ℰ(G_−^{-1}·m)_t = Π_{s≤t} G̃_s / G_{s−1}`.
    pub fn exp_m(&self) -> FProcess<S> {
        product(self.depth(), |t, a| self.gt.at(t, a).clone() / self.g.at(t - 1, a >> 1))
    }

    /// `Z̃ = 1 / ℰ(G_−^{-1}·m)` as an `F`-process.
    pub fn z_tilde_f(&self) -> FProcess<S> {
        product(self.depth(), |t, a| self.g.at(t - 1, a >> 1).clone() / self.gt.at(t, a))
    }

    /// `Z̃^{T∧τ}` as a `G`-process and the measure `Q̃ = Z̃_{T∧τ}·P`.
    pub fn z_tilde_and_qtilde(&self, horizon: usize) -> Result<(GProcess<S>, FullMeasure<S>)> {
        let n = self.depth();
        if horizon > n {
            return Err(HorizonError::Invalid(format!("horizon {horizon} exceeds depth {n}")));
        }
        let z = self.z_tilde_f();
        let zg = GProcess::from_fn(n, |t, atom| {
            let (u, a) = match atom {
                GAtom::Alive(a) => (t.min(horizon), a >> (t - t.min(horizon))),
                GAtom::Dead { s, a } => {
                    let u = s.min(horizon);
                    (u, a >> (t - u))
                }
            };
            z.at(u, a).clone()
        });
        Ok((zg, self.qtilde(horizon)))
    }

    /// `Q̃` on outcomes: `P(path, k)·Z̃_{T∧k}(path)`.
    pub fn qtilde(&self, horizon: usize) -> FullMeasure<S> {
        let n = self.depth();
        let z = self.z_tilde_f();
        let w = self
            .p
            .w
            .iter()
            .enumerate()
            .map(|(path, row)| {
                row.iter()
                    .enumerate()
                    .map(|(k, x)| {
                        let u = k.min(horizon);
                        x.clone() * z.on_path(path, u)
                    })
                    .collect()
            })
            .collect();
        FullMeasure { depth: n, w }
    }

    /// `D = 1_{[τ,∞)}`.
    pub fn default_indicator(&self) -> GProcess<S> {
        GProcess::stopped(self.depth(), |_, _| S::zero(), |_, _| S::one())
    }

    /// Stop an `F`-process at `τ`.
    pub fn stop_f(&self, x: &FProcess<S>) -> GProcess<S> {
        GProcess::stopped(self.depth(), |t, a| x.at(t, a).clone(), |s, a| x.at(s, a).clone())
    }

    /// `N^G = D − G̃^{-1} I_{]0,τ]}·D^{o,F}`.
    pub fn n_g(&self) -> GProcess<S> {
        let comp = cumulate(&self.dd, |t, a| self.dd.at(t, a).clone() / self.gt.at(t, a));
        GProcess::stopped(
            self.depth(),
            |t, a| -comp.at(t, a).clone(),
            |s, a| S::one() - comp.at(s, a),
        )
    }

    /// `ΔN^G` on the step into an alive atom (`alive = true`) or into death.
    pub fn dn_g(&self, t: usize, a: usize, alive: bool) -> S {
        let h = self.dd.at(t, a).clone() / self.gt.at(t, a);
        if alive {
            -h
        } else {
            S::one() - &h
        }
    }

    /// `H·N^G` for an `F`-optional integrand `H` (integrand `H_s` at step `s`).
    pub fn integrate_n_g(&self, h: &FProcess<S>) -> GProcess<S> {
        self.integrate_g(
            |s, a| Some(h.at(s, a).clone()),
            |s, a| self.dn_g(s, a, true),
            |s, a| self.dn_g(s, a, false),
        )
        .expect("integrand is total")
    }

    /// `Σ_{s ≤ t∧τ} H_s ΔX_s` for a semimartingale given by its increments on
    /// alive and death steps. `H` may be undefined (`None`) only where the
    /// increment vanishes; such terms count as zero.
    pub fn integrate_g(
        &self,
        h: impl Fn(usize, usize) -> Option<S>,
        d_alive: impl Fn(usize, usize) -> S,
        d_death: impl Fn(usize, usize) -> S,
    ) -> Result<GProcess<S>> {
        let n = self.depth();
        let masses: Vec<Vec<S>> = (0..=n).map(|t| self.p.g_masses(t)).collect();
        // An undefined integrand is tolerated on steps into atoms of null mass.
        let term = |s: usize, a: usize, dx: S, target: GAtom| -> Result<S> {
            if dx.is_zero() || masses[s][target.index(s)].is_zero() {
                return Ok(S::zero());
            }
            h(s, a).map(|hv| hv * &dx).ok_or_else(|| {
                HorizonError::ZeroDivision(format!("integrand undefined at t={s}, atom {}", path_label(a, s)))
            })
        };
        let mut alive: Vec<Vec<S>> = vec![vec![S::zero()]];
        let mut death: Vec<Vec<S>> = vec![Vec::new()];
        for s in 1..=n {
            let mut al = Vec::with_capacity(1 << s);
            let mut de = Vec::with_capacity(1 << s);
            for a in 0..1usize << s {
                let prev = alive[s - 1][a >> 1].clone();
                al.push(prev.clone() + &term(s, a, d_alive(s, a), GAtom::Alive(a))?);
                de.push(prev + &term(s, a, d_death(s, a), GAtom::Dead { s, a })?);
            }
            alive.push(al);
            death.push(de);
        }
        Ok(GProcess::stopped(n, |t, a| alive[t][a].clone(), |s, a| death[s][a].clone()))
    }

    /// `𝒯(M) = M^τ − G̃^{-1} I_{]0,τ]}·[M, m]` for an `F`-martingale `M`.
    pub fn transform_t(&self, m_proc: &FProcess<S>) -> Result<GProcess<S>> {
        let defect = crate::fspace::martingale_defect(&self.space, m_proc, self.space.path_prob())?;
        if defect > 0.0 && (S::EXACT || defect > 1e-10) {
            return Err(HorizonError::Invalid(format!(
                "input is not an F-martingale (drift {defect:e})"
            )));
        }
        Ok(self.transform_t_semimartingale(m_proc))
    }

    /// The same transform applied to any `F`-semimartingale `L`.
    pub fn transform_t_semimartingale(&self, l: &FProcess<S>) -> GProcess<S> {
        let m = self.martingale_m();
        let comp = cumulate(l, |t, a| l.increment(t, a) * &m.increment(t, a) / self.gt.at(t, a));
        GProcess::stopped(
            self.depth(),
            |t, a| l.at(t, a).clone() - comp.at(t, a),
            |s, a| l.at(s, a).clone() - comp.at(s, a),
        )
    }

    /// `V^F = 1 − Ẽ`.
    pub fn v_f(&self) -> FProcess<S> {
        self.epsilon_tilde().map(|_, _, e| S::one() - e)
    }

    /// `Ṽ^(a)` with increments `1 − (1 − ΔD^{o,F}/G̃)^a` (floating point).
    pub fn v_tilde(&self, a_exp: f64) -> FProcess<f64> {
        cumulate(&self.dd.to_f64(), |t, a| {
            let x = (self.dd.at(t, a).clone() / self.gt.at(t, a)).to_f64();
            1.0 - (1.0 - x).powf(a_exp)
        })
    }

    /// Largest gap in `G = G_0 ℰ(G_−^{-1}·m) Ẽ`.
    pub fn decomposition_defect(&self) -> f64 {
        let e = self.exp_m();
        let et = self.epsilon_tilde();
        let g0 = self.g.at(0, 0).clone();
        let mut worst = 0.0f64;
        for t in 0..=self.depth() {
            for a in 0..1usize << t {
                let rhs = g0.clone() * e.at(t, a) * et.at(t, a);
                worst = worst.max(discrepancy(self.g.at(t, a), &rhs));
            }
        }
        worst
    }
}

/// One joint-table row from a path hazard sequence `λ_1..λ_N`.
fn hazard_row<S: Scalar>(pp: &S, lam: &[S], n: usize) -> Result<Vec<S>> {
    let mut row = vec![S::zero(); n + 2];
    let mut surv = pp.clone();
    for t in 1..=n {
        let l = &lam[t];
        if l.is_negative() || *l > S::one() {
            return Err(HorizonError::Validation(format!(
                "hazard {l:?} at t={t} outside [0, 1]"
            )));
        }
        row[t] = surv.clone() * l;
        surv = surv * &(S::one() - l);
    }
    row[n + 1] = surv;
    Ok(row)
}

/// `C_t = Σ_{s=1}^t inc(s, a_s)`.
pub fn cumulate<S: Scalar, T: Scalar>(shape: &FProcess<T>, inc: impl Fn(usize, usize) -> S) -> FProcess<S> {
    let n = shape.depth();
    let mut c = FProcess::constant(n, S::zero());
    for t in 1..=n {
        for a in 0..1usize << t {
            let v = c.at(t - 1, a >> 1).clone() + &inc(t, a);
            c.set(t, a, v);
        }
    }
    c
}

/// `P_t = Π_{s=1}^t fac(s, a_s)`.
pub fn product<S: Scalar>(depth: usize, fac: impl Fn(usize, usize) -> S) -> FProcess<S> {
    let mut c = FProcess::constant(depth, S::one());
    for t in 1..=depth {
        for a in 0..1usize << t {
            let v = c.at(t - 1, a >> 1).clone() * &fac(t, a);
            c.set(t, a, v);
        }
    }
    c
}

/// `ℰ(X)` re-exported for callers working on model processes.
pub fn exponential<S: Scalar>(x: &FProcess<S>) -> FProcess<S> {
    stochastic_exponential(x)
}

// ---------------------------------------------------------------------------
// Named examples
// ---------------------------------------------------------------------------

/// The two-step look-ahead example: uniform tree, `τ ∈ {1, 2}`,
/// `P(τ = 1 | path) = 0.8, 0.2, 0.6, 0.4` on `uu, ud, du, dd`.
pub fn model_m2<S: Scalar>() -> RandomTimeModel<S> {
    let space = FilteredSpace::uniform(2, S::one()).expect("valid space");
    let p1 = [(4, 5), (1, 5), (3, 5), (2, 5)];
    let quarter = S::from_ratio(1, 4);
    let w = p1
        .iter()
        .map(|&(n, d)| {
            let x = S::from_ratio(n, d);
            vec![S::zero(), quarter.clone() * &x, quarter.clone() * &(S::one() - &x), S::zero()]
        })
        .collect();
    RandomTimeModel::from_joint(space, w).expect("valid model")
}

/// Cox model with constant hazard on a uniform tree.
pub fn constant_hazard<S: Scalar>(depth: usize, dt: S, lambda: S, closed: bool) -> Result<RandomTimeModel<S>> {
    let space = FilteredSpace::uniform(depth, dt)?;
    let hz = FProcess::from_fn(depth, |t, _| {
        if closed && t == depth {
            S::one()
        } else {
            lambda.clone()
        }
    });
    RandomTimeModel::cox(space, &hz)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scalar::Rational;
    use num_traits::Zero;

    fn q(n: i64, d: i64) -> Rational {
        Rational::from_ratio(n, d)
    }

    #[test]
    fn m2_survival_and_m() {
        let m = model_m2::<Rational>();
        assert_eq!(m.mode(), Mode::Closed);
        assert_eq!(*m.g().at(1, 0), q(1, 2));
        assert_eq!(*m.g().at(1, 1), q(1, 2));
        let dd2: Vec<_> = m.d_dof().slice(2).to_vec();
        assert_eq!(dd2, vec![q(1, 5), q(4, 5), q(2, 5), q(3, 5)]);
        assert!(m.g().slice(2).iter().all(|g| g.is_zero()));
        let mm = m.martingale_m();
        assert_eq!(*mm.at(1, 0), q(1, 1));
        assert_eq!(mm.slice(2).to_vec(), vec![q(7, 10), q(13, 10), q(9, 10), q(11, 10)]);
        let et = m.epsilon_tilde();
        assert_eq!(*et.at(1, 1), q(1, 2));
        assert!(et.slice(2).iter().all(|e| e.is_zero()));
        let e = m.exp_m();
        assert_eq!(e.slice(2).to_vec(), vec![q(2, 5), q(8, 5), q(4, 5), q(6, 5)]);
        assert_eq!(m.decomposition_defect(), 0.0);
    }

    #[test]
    fn m2_qtilde_mass() {
        let m = model_m2::<Rational>();
        let (z, qt) = m.z_tilde_and_qtilde(2).unwrap();
        assert_eq!(qt.total(), q(1, 1));
        assert_eq!(*z.at_death(2, 0), q(5, 2));
        assert_eq!(*z.at_death(2, 3), q(5, 6));
    }

    #[test]
    fn g_atom_roundtrip() {
        for t in 0..4 {
            for i in 0..g_width(t) {
                assert_eq!(GAtom::from_index(t, i).index(t), i);
            }
        }
    }
}
