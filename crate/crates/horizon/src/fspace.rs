//! The base filtered space: a non-recombining binary tree of depth `N`.
//!
//! An `F_t`-atom is a path prefix of length `t`, encoded as an integer
//! `a ∈ 0..2^t` whose most significant bit is the first step. Bit `0` is an
//! up move (`+√Δt`), bit `1` a down move, so the children of `a` are `2a`
//! (up) and `2a + 1` (down).

use crate::scalar::Scalar;
use crate::{HorizonError, Result};

/// Largest supported depth. Trees are stored in full, so memory grows like `2^N`.
pub const MAX_DEPTH: usize = 16;

#[derive(Clone, Debug)]
pub struct FilteredSpace<S: Scalar> {
    depth: usize,
    dt: S,
    sqrt_dt: S,
    path_prob: Vec<S>,
    atom_prob: Vec<Vec<S>>,
    w: FProcess<S>,
}

/// Adapted process: `v[t][a]` for `t ∈ 0..=N`, `a ∈ 0..2^t`.
#[derive(Clone, Debug, PartialEq)]
pub struct FProcess<S> {
    v: Vec<Vec<S>>,
}

impl<S: Clone> FProcess<S> {
    pub fn from_fn(depth: usize, mut f: impl FnMut(usize, usize) -> S) -> Self {
        let v = (0..=depth)
            .map(|t| (0..1usize << t).map(|a| f(t, a)).collect())
            .collect();
        FProcess { v }
    }

    /// Build from explicit slices; slice `t` must have `2^t` entries.
    pub fn from_slices(v: Vec<Vec<S>>) -> Result<Self> {
        for (t, s) in v.iter().enumerate() {
            if s.len() != 1usize << t {
                return Err(HorizonError::Invalid(format!(
                    "process slice at t={t} has {} entries, expected {}",
                    s.len(),
                    1usize << t
                )));
            }
        }
        Ok(FProcess { v })
    }

    pub fn depth(&self) -> usize {
        self.v.len() - 1
    }

    pub fn at(&self, t: usize, a: usize) -> &S {
        &self.v[t][a]
    }

    pub fn slice(&self, t: usize) -> &[S] {
        &self.v[t]
    }

    pub fn set(&mut self, t: usize, a: usize, x: S) {
        self.v[t][a] = x;
    }

    pub fn map<T: Clone>(&self, mut f: impl FnMut(usize, usize, &S) -> T) -> FProcess<T> {
        FProcess::from_fn(self.depth(), |t, a| f(t, a, &self.v[t][a]))
    }

    pub fn slices(&self) -> &[Vec<S>] {
        &self.v
    }
}

impl<S: Scalar> FProcess<S> {
    pub fn constant(depth: usize, c: S) -> Self {
        FProcess::from_fn(depth, |_, _| c.clone())
    }

    /// `X_t − X_{t−1}` at atom `a` of time `t ≥ 1`.
    pub fn increment(&self, t: usize, a: usize) -> S {
        self.v[t][a].clone() - &self.v[t - 1][a >> 1]
    }

    /// Value seen along a full path at time `t`.
    pub fn on_path(&self, path: usize, t: usize) -> &S {
        &self.v[t][path >> (self.depth() - t)]
    }

    pub fn to_f64(&self) -> FProcess<f64> {
        self.map(|_, _, x| x.to_f64())
    }
}

/// Which filtration a stopping rule or envelope refers to.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
pub enum Filtration {
    F,
    G,
}

impl<S: Scalar> FilteredSpace<S> {
    pub fn uniform(depth: usize, dt: S) -> Result<Self> {
        let p = S::one() / &S::from_i64(1i64 << depth.min(62));
        Self::new(depth, dt, vec![p; 1usize << depth.min(MAX_DEPTH)])
    }

    pub fn new(depth: usize, dt: S, path_prob: Vec<S>) -> Result<Self> {
        if depth == 0 || depth > MAX_DEPTH {
            return Err(HorizonError::Invalid(format!(
                "depth must be in 1..={MAX_DEPTH}, got {depth}"
            )));
        }
        if !dt.is_positive() {
            return Err(HorizonError::Invalid("time step must be positive".into()));
        }
        let sqrt_dt = dt.sqrt_exact().ok_or_else(|| {
            HorizonError::Invalid(format!(
                "time step {dt:?} has no exact square root in this backend"
            ))
        })?;
        if path_prob.len() != 1usize << depth {
            return Err(HorizonError::Invalid(format!(
                "expected {} path probabilities, got {}",
                1usize << depth,
                path_prob.len()
            )));
        }
        if let Some(i) = path_prob.iter().position(|p| !p.is_positive()) {
            return Err(HorizonError::Invalid(format!(
                "path probability of path {} is not positive",
                path_label(i, depth)
            )));
        }
        let total = crate::scalar::sum(path_prob.iter().cloned());
        if !crate::scalar::close(&total, &S::one(), 1e-12) {
            return Err(HorizonError::Invalid(format!(
                "path probabilities sum to {total:?}, not 1"
            )));
        }
        let atom_prob = atom_masses(&path_prob, depth);
        let w = FProcess::from_fn(depth, |t, a| {
            let downs = a.count_ones() as i64;
            sqrt_dt.clone() * &S::from_i64(t as i64 - 2 * downs)
        });
        Ok(FilteredSpace { depth, dt, sqrt_dt, path_prob, atom_prob, w })
    }

    pub fn depth(&self) -> usize {
        self.depth
    }

    pub fn dt(&self) -> &S {
        &self.dt
    }

    pub fn sqrt_dt(&self) -> &S {
        &self.sqrt_dt
    }

    pub fn n_paths(&self) -> usize {
        1usize << self.depth
    }

    pub fn path_prob(&self) -> &[S] {
        &self.path_prob
    }

    /// `P(a)` for an `F_t`-atom.
    pub fn atom_prob(&self, t: usize, a: usize) -> &S {
        &self.atom_prob[t][a]
    }

    pub fn driver(&self) -> &FProcess<S> {
        &self.w
    }

    /// `ΔW` on the step that ends at atom `a` (any time `t ≥ 1`).
    pub fn dw(&self, a: usize) -> S {
        if a & 1 == 0 {
            self.sqrt_dt.clone()
        } else {
            -self.sqrt_dt.clone()
        }
    }

    /// Path prefix of length `t`.
    pub fn prefix(&self, path: usize, t: usize) -> usize {
        path >> (self.depth - t)
    }

    /// True when every one-step transition is fair, so `W` is a martingale.
    pub fn has_martingale_driver(&self) -> bool {
        (0..self.depth).all(|t| {
            (0..1usize << t).all(|a| {
                self.atom_prob[t + 1][2 * a] == self.atom_prob[t + 1][2 * a + 1]
            })
        })
    }
}

/// Human-readable label of an atom: `u`/`d` string of length `t`.
pub fn path_label(a: usize, t: usize) -> String {
    (0..t)
        .map(|i| if (a >> (t - 1 - i)) & 1 == 0 { 'u' } else { 'd' })
        .collect()
}

/// Parse a `u`/`d` string into an atom index.
pub fn parse_path(s: &str) -> Option<usize> {
    let mut a = 0usize;
    for c in s.chars() {
        a = match c {
            'u' | 'U' => a << 1,
            'd' | 'D' => (a << 1) | 1,
            _ => return None,
        };
    }
    Some(a)
}

/// Atom masses at every time from path weights.
pub fn atom_masses<S: Scalar>(path_w: &[S], depth: usize) -> Vec<Vec<S>> {
    let mut out: Vec<Vec<S>> = vec![Vec::new(); depth + 1];
    out[depth] = path_w.to_vec();
    for t in (0..depth).rev() {
        out[t] = (0..1usize << t)
            .map(|a| out[t + 1][2 * a].clone() + &out[t + 1][2 * a + 1])
            .collect();
    }
    out
}

// ---------------------------------------------------------------------------
// Conditional expectations and decompositions
// ---------------------------------------------------------------------------

/// `E[X_s | F_t]` for `X_s` given on the `F_s`-atoms, under path weights `w`.
pub fn cond_expect<S: Scalar>(
    space: &FilteredSpace<S>,
    x_s: &[S],
    s: usize,
    t: usize,
    w: &[S],
) -> Result<Vec<S>> {
    let n = space.depth();
    if t > s || s > n {
        return Err(HorizonError::Invalid(format!(
            "conditioning time {t} must not exceed {s} ≤ {n}"
        )));
    }
    if x_s.len() != 1usize << s || w.len() != 1usize << n {
        return Err(HorizonError::Invalid("slice length mismatch".into()));
    }
    let masses = atom_masses(w, n);
    let gap = s - t;
    (0..1usize << t)
        .map(|a| {
            let mass = &masses[t][a];
            if mass.is_zero() {
                return Err(HorizonError::ZeroDivision(format!(
                    "atom {} at t={t} has zero mass",
                    path_label(a, t)
                )));
            }
            let num = crate::scalar::sum(
                ((a << gap)..((a + 1) << gap)).map(|b| masses[s][b].clone() * &x_s[b]),
            );
            Ok(num / mass)
        })
        .collect()
}

/// One-step predictions `E[X_{t+1} | F_t]` for `t < N`.
pub fn one_step_expect<S: Scalar>(space: &FilteredSpace<S>, x: &FProcess<S>, w: &[S]) -> Result<Vec<Vec<S>>> {
    (0..space.depth())
        .map(|t| cond_expect(space, x.slice(t + 1), t + 1, t, w))
        .collect()
}

/// Doob decomposition `X = X_0 + M + A` with `M` a martingale and `A`
/// predictable, both null at zero.
pub fn doob_meyer<S: Scalar>(
    space: &FilteredSpace<S>,
    x: &FProcess<S>,
    w: &[S],
) -> Result<(FProcess<S>, FProcess<S>)> {
    let n = space.depth();
    let pred = one_step_expect(space, x, w)?;
    let mut m = FProcess::constant(n, S::zero());
    let mut a_proc = FProcess::constant(n, S::zero());
    for t in 1..=n {
        for a in 0..1usize << t {
            let p = a >> 1;
            let e = &pred[t - 1][p];
            let dm = x.at(t, a).clone() - e;
            let da = e.clone() - x.at(t - 1, p);
            m.set(t, a, m.at(t - 1, p).clone() + &dm);
            a_proc.set(t, a, a_proc.at(t - 1, p).clone() + &da);
        }
    }
    Ok((m, a_proc))
}

/// Discrete Doléans-Dade exponential `ℰ(X)_t = Π_{s≤t} (1 + ΔX_s)`.
pub fn stochastic_exponential<S: Scalar>(x: &FProcess<S>) -> FProcess<S> {
    let n = x.depth();
    let mut e = FProcess::constant(n, S::one());
    for t in 1..=n {
        for a in 0..1usize << t {
            let v = e.at(t - 1, a >> 1).clone() * &(S::one() + &x.increment(t, a));
            e.set(t, a, v);
        }
    }
    e
}

/// Discrete bracket `[X, Y]_t = Σ_{s≤t} ΔX_s ΔY_s`.
pub fn bracket<S: Scalar>(x: &FProcess<S>, y: &FProcess<S>) -> FProcess<S> {
    let n = x.depth();
    let mut b = FProcess::constant(n, S::zero());
    for t in 1..=n {
        for a in 0..1usize << t {
            let v = b.at(t - 1, a >> 1).clone() + &(x.increment(t, a) * &y.increment(t, a));
            b.set(t, a, v);
        }
    }
    b
}

/// Largest one-step conditional drift of `X` (zero for a martingale).
pub fn martingale_defect<S: Scalar>(space: &FilteredSpace<S>, x: &FProcess<S>, w: &[S]) -> Result<f64> {
    let pred = one_step_expect(space, x, w)?;
    let mut worst = 0.0f64;
    for (t, row) in pred.iter().enumerate() {
        for (a, e) in row.iter().enumerate() {
            worst = worst.max(crate::scalar::discrepancy(e, x.at(t, a)));
        }
    }
    Ok(worst)
}

// ---------------------------------------------------------------------------
// Stopping rules
// ---------------------------------------------------------------------------

/// A stopping time as a first-hitting stop set.
///
/// `stop[t][a]` is true exactly on the atoms where the rule stops. For a
/// `G`-rule the flags describe the decision on the alive atoms; on a path
/// that dies at `k` the stopping time is `min(θ^F, k)`.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct StoppingRule {
    pub filtration: Filtration,
    pub from: usize,
    pub to: usize,
    pub stop: Vec<Vec<bool>>,
}

impl StoppingRule {
    /// The constant rule `θ ≡ t` on the window `[from, to]`.
    pub fn constant(filtration: Filtration, depth: usize, from: usize, to: usize, t: usize) -> Self {
        let stop = (0..=depth)
            .map(|s| vec![s == t; 1usize << s])
            .collect();
        StoppingRule { filtration, from, to, stop }
    }

    /// Canonical rule from a per-atom stop predicate: stop at the first atom
    /// in `[from, to]` where `pred` holds, or at `to`.
    pub fn first_hitting(
        filtration: Filtration,
        depth: usize,
        from: usize,
        to: usize,
        mut pred: impl FnMut(usize, usize) -> bool,
    ) -> Self {
        let mut stop: Vec<Vec<bool>> = (0..=depth).map(|s| vec![false; 1usize << s]).collect();
        let mut live: Vec<usize> = (0..1usize << from).collect();
        for t in from..=to {
            let mut next = Vec::new();
            for &a in &live {
                if t == to || pred(t, a) {
                    stop[t][a] = true;
                } else {
                    next.push(2 * a);
                    next.push(2 * a + 1);
                }
            }
            live = next;
        }
        StoppingRule { filtration, from, to, stop }
    }

    /// Rule from per-path stopping instants; fails if the instants are not adapted.
    pub fn from_path_times(
        filtration: Filtration,
        depth: usize,
        from: usize,
        to: usize,
        times: &[usize],
    ) -> Result<Self> {
        let mut stop: Vec<Vec<bool>> = (0..=depth).map(|s| vec![false; 1usize << s]).collect();
        for (path, &t) in times.iter().enumerate() {
            if t > depth {
                return Err(HorizonError::Invalid(format!("stopping instant {t} beyond depth")));
            }
            stop[t][path >> (depth - t)] = true;
        }
        let rule = StoppingRule { filtration, from, to, stop };
        rule.validate()?;
        if (0..times.len()).any(|p| rule.time_on_path(p) != times[p]) {
            return Err(HorizonError::Invalid("stopping instants are not adapted".into()));
        }
        Ok(rule)
    }

    pub fn depth(&self) -> usize {
        self.stop.len() - 1
    }

    /// Stopping instant on a full path (base filtration semantics).
    pub fn time_on_path(&self, path: usize) -> usize {
        let n = self.depth();
        (self.from..=self.to)
            .find(|&t| self.stop[t][path >> (n - t)])
            .unwrap_or(self.to)
    }

    /// Stopping instant on an outcome `(path, τ = k)` of the enlarged space.
    pub fn time_on_outcome(&self, path: usize, k: usize) -> usize {
        let t = self.time_on_path(path);
        match self.filtration {
            Filtration::F => t,
            Filtration::G => t.min(k),
        }
    }

    /// Check the rule stops exactly once on every path inside its window.
    pub fn validate(&self) -> Result<()> {
        let n = self.depth();
        if self.from > self.to || self.to > n {
            return Err(HorizonError::Invalid(format!(
                "window [{}, {}] outside [0, {n}]",
                self.from, self.to
            )));
        }
        for path in 0..1usize << n {
            let hits = (0..=n).filter(|&t| self.stop[t][path >> (n - t)]).count();
            let inside = (self.from..=self.to)
                .filter(|&t| self.stop[t][path >> (n - t)])
                .count();
            if hits != 1 || inside != 1 {
                return Err(HorizonError::Invalid(format!(
                    "rule stops {hits} times on path {}",
                    path_label(path, n)
                )));
            }
        }
        Ok(())
    }

    /// Pointwise order on paths.
    pub fn le_on_paths(&self, other: &StoppingRule) -> bool {
        (0..1usize << self.depth()).all(|p| self.time_on_path(p) <= other.time_on_path(p))
    }
}

/// Number of stopping rules on a subtree of height `h`: `R(0) = 1`,
/// `R(h) = 1 + R(h−1)^2`. Saturates at `u128::MAX`.
pub fn subtree_rule_count(h: usize) -> u128 {
    let mut r: u128 = 1;
    for _ in 0..h {
        r = r.checked_mul(r).and_then(|x| x.checked_add(1)).unwrap_or(u128::MAX);
    }
    r
}

/// Number of rules on the window `[from, to]` of a depth-`depth` tree.
pub fn rule_count(from: usize, to: usize) -> u128 {
    let per = subtree_rule_count(to - from);
    let mut total: u128 = 1;
    for _ in 0..(1u128 << from.min(127)) {
        total = total.checked_mul(per).unwrap_or(u128::MAX);
        if total == u128::MAX || per == 1 {
            break;
        }
    }
    total
}

/// Visit every canonical stopping rule with values in `[from, to]`.
///
/// Refuses when the count exceeds `budget`. Returns the number visited.
pub fn for_each_stopping_rule(
    depth: usize,
    filtration: Filtration,
    from: usize,
    to: usize,
    budget: u128,
    mut visit: impl FnMut(&StoppingRule),
) -> Result<u128> {
    if from > to || to > depth {
        return Err(HorizonError::Invalid(format!(
            "window [{from}, {to}] outside [0, {depth}]"
        )));
    }
    let needed = rule_count(from, to);
    if needed > budget {
        return Err(HorizonError::Budget { needed, budget });
    }
    let mut rule = StoppingRule {
        filtration,
        from,
        to,
        stop: (0..=depth).map(|s| vec![false; 1usize << s]).collect(),
    };
    let mut pending: Vec<(usize, usize)> = (0..1usize << from).rev().map(|a| (from, a)).collect();
    let mut count: u128 = 0;
    fn rec(
        rule: &mut StoppingRule,
        pending: &mut Vec<(usize, usize)>,
        count: &mut u128,
        visit: &mut dyn FnMut(&StoppingRule),
    ) {
        let Some((t, a)) = pending.pop() else {
            *count += 1;
            visit(rule);
            return;
        };
        rule.stop[t][a] = true;
        rec(rule, pending, count, visit);
        rule.stop[t][a] = false;
        if t < rule.to {
            pending.push((t + 1, 2 * a + 1));
            pending.push((t + 1, 2 * a));
            rec(rule, pending, count, visit);
            pending.pop();
            pending.pop();
        }
        pending.push((t, a));
    }
    rec(&mut rule, &mut pending, &mut count, &mut visit);
    Ok(count)
}

/// Collect every canonical rule on `[from, to]`.
pub fn enumerate_stopping_rules(
    depth: usize,
    filtration: Filtration,
    from: usize,
    to: usize,
    budget: u128,
) -> Result<Vec<StoppingRule>> {
    let mut out = Vec::new();
    for_each_stopping_rule(depth, filtration, from, to, budget, |r| out.push(r.clone()))?;
    Ok(out)
}
