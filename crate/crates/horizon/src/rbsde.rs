//! Linear reflected BSDEs on the enlarged tree and their base-filtration
//! counterparts.
//!
//! Conventions:
//! * `ΔY_t = −f_{t−1}Δt + Z_tΔW_t + ΔM_t − ΔK_t` on every step `t ≤ T∧τ`;
//! * `Z_t` is the `Q̃`-projection of the one-step martingale increment on
//!   `ΔW^τ_t` (zero when `ΔW` carries no mass), `M` takes the rest;
//! * the reflection is decided at `t−1` and charged as `ΔK_t`.

use serde::{Deserialize, Serialize};

use crate::fspace::FProcess;
use crate::lattice::Lattice;
use crate::random_time::{g_width, FullMeasure, GAtom, GProcess, Mode, RandomTimeModel};
use crate::scalar::{discrepancy, Scalar};
use crate::snell::snell_backward;
use crate::{HorizonError, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "kind", content = "t")]
pub enum Horizon {
    /// `T∧τ` for a fixed `T`.
    Finite(usize),
    /// `τ` itself (closed models only).
    Random,
}

impl Horizon {
    /// Last time of the window on the tree.
    pub fn window(&self, depth: usize) -> usize {
        match *self {
            Horizon::Finite(t) => t,
            Horizon::Random => depth,
        }
    }
}

#[derive(Clone, Debug)]
pub struct RBSDEData<S: Scalar> {
    /// Driver rate, charged as `f_tΔt` on the step `t → t+1`.
    pub f: FProcess<S>,
    /// Barrier; `None` is the `−∞` barrier (plain BSDE).
    pub barrier: Option<FProcess<S>>,
    /// Terminal kernel: `ξ = h_{T∧τ}`.
    pub h: FProcess<S>,
    pub horizon: Horizon,
    pub p: f64,
}

impl<S: Scalar> RBSDEData<S> {
    pub fn new(f: FProcess<S>, barrier: Option<FProcess<S>>, h: FProcess<S>, horizon: Horizon, p: f64) -> Self {
        RBSDEData { f, barrier, h, horizon, p }
    }

    /// Data scaled by `c` (the barrier too).
    pub fn scaled(&self, c: &S) -> Self {
        RBSDEData {
            f: self.f.map(|_, _, x| x.clone() * c),
            barrier: self.barrier.as_ref().map(|s| s.map(|_, _, x| x.clone() * c)),
            h: self.h.map(|_, _, x| x.clone() * c),
            horizon: self.horizon,
            p: self.p,
        }
    }

    /// `(f I_{[0,n[}, S^n, h^n)`: the data frozen at `n`.
    pub fn truncated(&self, n: usize) -> Self {
        let freeze = |x: &FProcess<S>| {
            FProcess::from_fn(x.depth(), |t, a| if t <= n { x.at(t, a).clone() } else { x.at(n, a >> (t - n)).clone() })
        };
        RBSDEData {
            f: self.f.map(|t, _, x| if t < n { x.clone() } else { S::zero() }),
            barrier: self.barrier.as_ref().map(freeze),
            h: freeze(&self.h),
            horizon: self.horizon,
            p: self.p,
        }
    }

    /// `ξ` on a terminal node of the window.
    fn xi(&self, t: usize, atom: GAtom) -> S {
        match atom {
            GAtom::Alive(a) => self.h.at(t, a).clone(),
            GAtom::Dead { s, a } => self.h.at(s, a >> (t - s)).clone(),
        }
    }

    /// Reward value `S_t`, or `None` for the `−∞` barrier.
    fn barrier_at(&self, t: usize, a: usize) -> Option<&S> {
        self.barrier.as_ref().map(|s| s.at(t, a))
    }
}

/// Check shapes, the horizon against the mode, the driver, and `ξ ≥ S_{T∧τ}`.
pub fn validate<S: Scalar>(model: &RandomTimeModel<S>, data: &RBSDEData<S>) -> Result<()> {
    let n = model.depth();
    let shapes_ok = data.f.depth() == n
        && data.h.depth() == n
        && data.barrier.as_ref().map_or(true, |s| s.depth() == n);
    if !shapes_ok {
        return Err(HorizonError::Validation("data depth does not match the model".into()));
    }
    if !(data.p > 1.0) {
        return Err(HorizonError::Validation(format!("p must exceed 1, got {}", data.p)));
    }
    match data.horizon {
        Horizon::Finite(t) if t > n => {
            return Err(HorizonError::Validation(format!("horizon {t} exceeds depth {n}")));
        }
        Horizon::Random if model.mode() != Mode::Closed => {
            return Err(HorizonError::Validation("a random horizon needs a closed model".into()));
        }
        _ => {}
    }
    if !model.space().has_martingale_driver() {
        return Err(HorizonError::Validation("the driver W is not a martingale under P".into()));
    }
    let big_t = data.horizon.window(n);
    if let Some(s) = &data.barrier {
        for (path, k, _) in model.p().outcomes() {
            let u = k.min(big_t);
            let a = path >> (n - u);
            if data.h.at(u, a) < s.at(u, a) {
                return Err(HorizonError::Validation(format!(
                    "terminal value below the barrier at t={u}, atom {}",
                    crate::fspace::path_label(a, u)
                )));
            }
        }
    }
    Ok(())
}

#[derive(Clone, Debug, Default, Serialize, PartialEq)]
pub struct Diagnostics {
    /// `max |(Y_{t−1} − S_{t−1}) ΔK_t|`.
    pub skorokhod_residual: f64,
    /// Largest gap in the one-step dynamics.
    pub equation_residual: f64,
    /// `max (S − Y)^+` before the horizon, together with any decrease of `K`.
    pub barrier_violation: f64,
    /// Largest one-step drift of `M`.
    pub martingale_defect: f64,
}

impl Diagnostics {
    pub fn worst(&self) -> f64 {
        self.skorokhod_residual
            .max(self.equation_residual)
            .max(self.barrier_violation)
            .max(self.martingale_defect)
    }
}

/// Quadruple on the enlarged tree; `Z` holds the step values, `M` and `K`
/// are cumulative, all frozen after `T∧τ`.
#[derive(Clone, Debug)]
pub struct RBSDESolution<S: Scalar> {
    pub horizon: usize,
    pub y: GProcess<S>,
    pub z: GProcess<S>,
    pub m: GProcess<S>,
    pub k: GProcess<S>,
    pub diagnostics: Diagnostics,
}

impl<S: Scalar> RBSDESolution<S> {
    /// `X_t − X_{t−1}` along the tree (`0` at `t = 0`).
    pub fn increment(x: &GProcess<S>, t: usize, atom: GAtom) -> S {
        if t == 0 {
            return S::zero();
        }
        x.get(t, atom).clone() - x.get(t - 1, atom.parent(t))
    }

    pub fn to_f64(&self) -> RBSDESolution<f64> {
        RBSDESolution {
            horizon: self.horizon,
            y: self.y.to_f64(),
            z: self.z.to_f64(),
            m: self.m.to_f64(),
            k: self.k.to_f64(),
            diagnostics: self.diagnostics.clone(),
        }
    }

    /// Rows `t, atom, mass, Y, Z, ΔM, ΔK` on the window.
    pub fn table(&self, masses: &[Vec<S>]) -> String {
        let mut out = String::from("t,atom,mass,Y,Z,dM,dK\n");
        for t in 0..=self.horizon {
            for i in 0..g_width(t) {
                let atom = GAtom::from_index(t, i);
                out.push_str(&format!(
                    "{t},{},{},{},{},{},{}\n",
                    atom.label(t),
                    masses[t][i].to_f64(),
                    self.y.get(t, atom).to_f64(),
                    self.z.get(t, atom).to_f64(),
                    Self::increment(&self.m, t, atom).to_f64(),
                    Self::increment(&self.k, t, atom).to_f64(),
                ));
            }
        }
        out
    }
}

fn zeros<S: Scalar>(n: usize) -> Vec<Vec<S>> {
    (0..=n).map(|t| vec![S::zero(); g_width(t)]).collect()
}

/// `ΔW` on the step into a `G_t`-atom.
fn dw_into<S: Scalar>(model: &RandomTimeModel<S>, t: usize, atom: GAtom) -> S {
    let a = match atom {
        GAtom::Alive(a) => a,
        GAtom::Dead { s, a } => a >> (t - s),
    };
    model.space().dw(a)
}

/// Accumulate increments along the tree and freeze after `big_t`.
fn cumulate_g<S: Scalar>(n: usize, big_t: usize, inc: &[Vec<S>]) -> Result<GProcess<S>> {
    let mut acc = zeros::<S>(n);
    for t in 1..=n {
        for i in 0..g_width(t) {
            let atom = GAtom::from_index(t, i);
            let parent = atom.parent(t).index(t - 1);
            acc[t][i] = acc[t - 1][parent].clone() + &inc[t][i];
        }
    }
    Ok(GProcess::from_slices(acc)?.stop_at(big_t))
}

/// Whether the step into this `G_t`-atom belongs to the window (`t ≤ τ`).
fn live_step(t: usize, atom: GAtom) -> bool {
    match atom {
        GAtom::Alive(_) => true,
        GAtom::Dead { s, .. } => s == t,
    }
}

/// `Q̃_T` and its lattice.
fn qtilde_lattice<S: Scalar>(model: &RandomTimeModel<S>, big_t: usize) -> Result<(FullMeasure<S>, Lattice<S>)> {
    let q = model.qtilde(big_t);
    let lat = Lattice::g(&q, big_t)?;
    Ok((q, lat))
}

/// Solve on the enlarged tree under `Q̃_T` by backward induction.
pub fn solve_g<S: Scalar>(model: &RandomTimeModel<S>, data: &RBSDEData<S>) -> Result<RBSDESolution<S>> {
    validate(model, data)?;
    let n = model.depth();
    let big_t = data.horizon.window(n);
    let (q, lat) = qtilde_lattice(model, big_t)?;
    let dt = model.space().dt().clone();
    let mut y = zeros::<S>(n);
    let mut z = zeros::<S>(n);
    let mut dm = zeros::<S>(n);
    let mut dk = zeros::<S>(n);
    for t in (0..=big_t).rev() {
        for i in 0..g_width(t) {
            let atom = GAtom::from_index(t, i);
            if lat.is_terminal(t, i) {
                y[t][i] = data.xi(t, atom);
                continue;
            }
            let GAtom::Alive(a) = atom else {
                unreachable!("dead atoms are terminal")
            };
            let Some(ey) = lat.cond_next(&y[t + 1], t, i) else {
                // null atom: any finite value will do
                y[t][i] = data.h.at(t, a).clone();
                continue;
            };
            let cont = ey.clone() + &(data.f.at(t, a).clone() * &dt);
            let (yt, push) = match data.barrier_at(t, a) {
                Some(s) if *s > cont => (s.clone(), s.clone() - &cont),
                _ => (cont, S::zero()),
            };
            y[t][i] = yt;
            let children = lat.children(t, i);
            let mut num = S::zero();
            let mut den = S::zero();
            for &c in children {
                let mass = lat.mass(t + 1, c);
                if mass.is_zero() {
                    continue;
                }
                let w = dw_into(model, t + 1, GAtom::from_index(t + 1, c));
                num = num + &(mass.clone() * &(y[t + 1][c].clone() - &ey) * &w);
                den = den + &(mass.clone() * &w * &w);
            }
            let zv = if den.is_zero() { S::zero() } else { num / &den };
            for &c in children {
                let w = dw_into(model, t + 1, GAtom::from_index(t + 1, c));
                z[t + 1][c] = zv.clone();
                dm[t + 1][c] = y[t + 1][c].clone() - &ey - &(zv.clone() * &w);
                dk[t + 1][c] = push.clone();
            }
        }
    }
    let yg = GProcess::from_slices(y)?.stop_at(big_t);
    let zg = GProcess::from_slices(z)?;
    let mg = cumulate_g(n, big_t, &dm)?;
    let kg = cumulate_g(n, big_t, &dk)?;
    let mut sol = RBSDESolution { horizon: big_t, y: yg, z: zg, m: mg, k: kg, diagnostics: Diagnostics::default() };
    sol.diagnostics = check_solution(model, data, &sol, &q, &lat);
    Ok(sol)
}

/// Residuals of a candidate quadruple on atoms of positive `Q̃_T`-mass.
pub fn check_solution<S: Scalar>(
    model: &RandomTimeModel<S>,
    data: &RBSDEData<S>,
    sol: &RBSDESolution<S>,
    q: &FullMeasure<S>,
    lat: &Lattice<S>,
) -> Diagnostics {
    let big_t = sol.horizon;
    let dt = model.space().dt().clone();
    let mut d = Diagnostics::default();
    for t in 0..=big_t {
        for i in 0..g_width(t) {
            if lat.mass(t, i).is_zero() {
                continue;
            }
            let atom = GAtom::from_index(t, i);
            if let (GAtom::Alive(a), true) = (atom, t < big_t) {
                if let Some(s) = data.barrier_at(t, a) {
                    let gap = (s.clone() - sol.y.get(t, atom)).to_f64();
                    d.barrier_violation = d.barrier_violation.max(gap);
                }
            }
            if t == 0 {
                continue;
            }
            let dy = RBSDESolution::increment(&sol.y, t, atom);
            let dmv = RBSDESolution::increment(&sol.m, t, atom);
            let dkv = RBSDESolution::increment(&sol.k, t, atom);
            let zv = sol.z.get(t, atom).clone();
            let rhs = if live_step(t, atom) {
                let pa = atom.prefix() >> 1;
                let f_prev = data.f.at(t - 1, pa).clone() * &dt;
                if let Some(s) = data.barrier_at(t - 1, pa) {
                    let y_prev = sol.y.get(t - 1, GAtom::Alive(pa));
                    let r = ((y_prev.clone() - s) * &dkv).to_f64().abs();
                    d.skorokhod_residual = d.skorokhod_residual.max(r);
                }
                if dkv < S::zero() {
                    d.barrier_violation = d.barrier_violation.max(-dkv.to_f64());
                }
                -f_prev + &(zv * &dw_into(model, t, atom)) + &dmv - &dkv
            } else {
                // frozen after death
                zv + &dmv + &dkv
            };
            d.equation_residual = d.equation_residual.max(discrepancy(&dy, &rhs));
        }
    }
    d.martingale_defect = q.martingale_defect(&sol.m, big_t);
    d
}

/// Base-filtration triple `(Y^F, Z^F, K^F)` on `[0, T]`.
#[derive(Clone, Debug)]
pub struct FSolution<S: Scalar> {
    pub horizon: usize,
    pub y: FProcess<S>,
    pub z: FProcess<S>,
    pub k: FProcess<S>,
    pub diagnostics: Diagnostics,
}

/// `Y_t = Ẽ_T h_T + Σ (Ẽf Δt + h ΔV^F) + K_T − K_t − Σ Z ΔW` with barrier `ẼS`.
pub fn solve_f<S: Scalar>(model: &RandomTimeModel<S>, data: &RBSDEData<S>) -> Result<FSolution<S>> {
    validate(model, data)?;
    let n = model.depth();
    let big_t = data.horizon.window(n);
    let space = model.space();
    let lat = Lattice::f(space, space.path_prob(), big_t)?;
    let et = model.epsilon_tilde();
    let vf = model.v_f();
    let dt = space.dt().clone();
    let mut y: Vec<Vec<S>> = (0..=n).map(|t| vec![S::zero(); 1 << t]).collect();
    let mut z = y.clone();
    let mut dk = y.clone();
    let mut resid = 0.0f64;
    for a in 0..1usize << big_t {
        y[big_t][a] = et.at(big_t, a).clone() * data.h.at(big_t, a);
    }
    for t in (0..big_t).rev() {
        let next: Vec<S> = (0..1usize << (t + 1))
            .map(|c| y[t + 1][c].clone() + &(data.h.at(t + 1, c).clone() * &vf.increment(t + 1, c)))
            .collect();
        for a in 0..1usize << t {
            let ey = lat.cond_next(&next, t, a).ok_or_else(|| HorizonError::ZeroDivision("null base atom".into()))?;
            let cont = ey.clone() + &(et.at(t, a).clone() * data.f.at(t, a) * &dt);
            let (yt, push) = match data.barrier_at(t, a) {
                Some(s) => {
                    let sf = et.at(t, a).clone() * s;
                    if sf > cont {
                        (sf.clone(), sf - &cont)
                    } else {
                        (cont, S::zero())
                    }
                }
                None => (cont, S::zero()),
            };
            y[t][a] = yt;
            let (u, d) = (2 * a, 2 * a + 1);
            let (wu, wd) = (space.dw(u), space.dw(d));
            let zv = (next[u].clone() - &next[d]) / &(wu.clone() - &wd);
            for c in [u, d] {
                z[t + 1][c] = zv.clone();
                dk[t + 1][c] = push.clone();
                let w = space.dw(c);
                resid = resid.max(discrepancy(&(next[c].clone() - &ey), &(zv.clone() * &w)));
            }
        }
    }
    let freeze = |v: Vec<Vec<S>>| -> Result<FProcess<S>> {
        let x = FProcess::from_slices(v)?;
        Ok(FProcess::from_fn(n, |t, a| {
            if t <= big_t {
                x.at(t, a).clone()
            } else {
                x.at(big_t, a >> (t - big_t)).clone()
            }
        }))
    };
    let y = freeze(y)?;
    let z = FProcess::from_slices(z)?;
    let k = crate::random_time::cumulate(&y, |t, a| dk[t][a].clone());
    let k = FProcess::from_fn(n, |t, a| if t <= big_t { k.at(t, a).clone() } else { k.at(big_t, a >> (t - big_t)).clone() });
    let mut diagnostics = Diagnostics { equation_residual: resid, ..Diagnostics::default() };
    for t in 0..big_t {
        for a in 0..1usize << t {
            if let Some(s) = data.barrier_at(t, a) {
                let sf = et.at(t, a).clone() * s;
                diagnostics.barrier_violation = diagnostics.barrier_violation.max((sf.clone() - y.at(t, a)).to_f64());
                let r = ((y.at(t, a).clone() - &sf) * &k.increment(t + 1, 2 * a)).to_f64().abs();
                diagnostics.skorokhod_residual = diagnostics.skorokhod_residual.max(r);
            }
        }
    }
    Ok(FSolution { horizon: big_t, y, z, k, diagnostics })
}

/// Build the enlarged-tree quadruple from the base triple:
/// `Y = Y^F/Ẽ` before `T∧τ`, `Z = Z^F/Ẽ_−`, `K = Ẽ_−^{-1}·K^F`,
/// `M = (h − Y^F/Ẽ)·N^G`.
pub fn transform_f_to_g<S: Scalar>(
    model: &RandomTimeModel<S>,
    fs: &FSolution<S>,
    data: &RBSDEData<S>,
) -> Result<RBSDESolution<S>> {
    let n = model.depth();
    let big_t = fs.horizon;
    let (q, lat) = qtilde_lattice(model, big_t)?;
    let et = model.epsilon_tilde();
    let mut y = zeros::<S>(n);
    let mut z = zeros::<S>(n);
    let mut dm = zeros::<S>(n);
    let mut dk = zeros::<S>(n);
    for t in 0..=big_t {
        for i in 0..g_width(t) {
            let atom = GAtom::from_index(t, i);
            y[t][i] = match atom {
                GAtom::Alive(a) if t < big_t => {
                    let e = et.at(t, a);
                    if e.is_zero() {
                        S::zero()
                    } else {
                        fs.y.at(t, a).clone() / e
                    }
                }
                _ => data.xi(t, atom),
            };
            if t == 0 || !live_step(t, atom) {
                continue;
            }
            let a = atom.prefix();
            let ep = et.at(t - 1, a >> 1);
            if ep.is_zero() {
                continue;
            }
            z[t][i] = fs.z.at(t, a).clone() / ep;
            dk[t][i] = fs.k.increment(t, a) / ep;
            dm[t][i] = match atom {
                GAtom::Alive(_) => {
                    let e = et.at(t, a);
                    if e.is_zero() {
                        S::zero()
                    } else {
                        (data.h.at(t, a).clone() - &(fs.y.at(t, a).clone() / e)) * &model.dn_g(t, a, true)
                    }
                }
                GAtom::Dead { .. } => {
                    // (Y^F/Ẽ)_t ΔN_t = Y^F_t / Ẽ_{t−1} on the death step
                    data.h.at(t, a).clone() * &model.dn_g(t, a, false) - &(fs.y.at(t, a).clone() / ep)
                }
            };
        }
    }
    let yg = GProcess::from_slices(y)?.stop_at(big_t);
    let zg = GProcess::from_slices(z)?;
    let mg = cumulate_g(n, big_t, &dm)?;
    let kg = cumulate_g(n, big_t, &dk)?;
    let mut sol = RBSDESolution { horizon: big_t, y: yg, z: zg, m: mg, k: kg, diagnostics: Diagnostics::default() };
    sol.diagnostics = check_solution(model, data, &sol, &q, &lat);
    Ok(sol)
}

#[derive(Clone, Debug, Default, Serialize, PartialEq)]
pub struct SolutionGap {
    pub y: f64,
    pub z: f64,
    pub m: f64,
    pub k: f64,
}

/// Atom-wise gaps between two quadruples on atoms of positive `Q̃_T`-mass.
pub fn compare_solutions<S: Scalar>(model: &RandomTimeModel<S>, a: &RBSDESolution<S>, b: &RBSDESolution<S>) -> SolutionGap {
    let big_t = a.horizon.max(b.horizon);
    let q = model.qtilde(big_t);
    let mut gap = SolutionGap::default();
    for t in 0..=big_t {
        let masses = q.g_masses(t);
        for (i, mass) in masses.iter().enumerate() {
            if mass.is_zero() {
                continue;
            }
            gap.y = gap.y.max(discrepancy(&a.y.slice(t)[i], &b.y.slice(t)[i]));
            gap.z = gap.z.max(discrepancy(&a.z.slice(t)[i], &b.z.slice(t)[i]));
            gap.m = gap.m.max(discrepancy(&a.m.slice(t)[i], &b.m.slice(t)[i]));
            gap.k = gap.k.max(discrepancy(&a.k.slice(t)[i], &b.k.slice(t)[i]));
        }
    }
    gap
}

/// A value below every attainable payoff; stands in for the `−∞` barrier.
fn payoff_floor<S: Scalar>(data: &RBSDEData<S>, dt: &S) -> S {
    let mut total = S::one();
    for t in 0..=data.f.depth() {
        for a in 0..1usize << t {
            total = total + &(data.f.at(t, a).abs() * dt) + &data.h.at(t, a).abs();
        }
    }
    -(total * &S::from_i64(2))
}

/// `Y_t + ∫_0^t f ds` against the `(G, Q̃_T)` Snell envelope of
/// `∫_0^θ f ds + S_θ 1_{θ<T∧τ} + ξ 1_{θ=T∧τ}`.
pub fn snell_representation_gap<S: Scalar>(
    model: &RandomTimeModel<S>,
    data: &RBSDEData<S>,
    sol: &RBSDESolution<S>,
) -> Result<f64> {
    let n = model.depth();
    let big_t = sol.horizon;
    let (_, lat) = qtilde_lattice(model, big_t)?;
    let dt = model.space().dt().clone();
    let running = crate::random_time::cumulate(&data.f, |t, a| {
        if t == 0 {
            S::zero()
        } else {
            data.f.at(t - 1, a >> 1).clone() * &dt
        }
    });
    let floor = payoff_floor(data, &dt);
    let run_g = model.stop_f(&running);
    let reward: Vec<Vec<S>> = (0..=n)
        .map(|t| {
            (0..g_width(t))
                .map(|i| {
                    let atom = GAtom::from_index(t, i);
                    let r = run_g.get(t, atom).clone();
                    match atom {
                        GAtom::Alive(a) if t < big_t => r + data.barrier_at(t, a).unwrap_or(&floor),
                        _ if t <= big_t => r + &data.xi(t, atom),
                        _ => S::zero(),
                    }
                })
                .collect()
        })
        .collect();
    let env = snell_backward(&lat, &reward, 0)?;
    let mut worst = 0.0f64;
    for t in 0..=big_t {
        for i in 0..g_width(t) {
            if lat.mass(t, i).is_zero() {
                continue;
            }
            let atom = GAtom::from_index(t, i);
            let lhs = sol.y.get(t, atom).clone() + run_g.get(t, atom);
            worst = worst.max(discrepancy(&lhs, &env.envelope[t][i]));
        }
    }
    Ok(worst)
}

/// `Y^F` against the `(F, P)` Snell envelope of
/// `∫f^F ds + ∫h dV^F + S^F_σ 1_{σ<T} + ξ^F 1_{σ=T}`.
pub fn f_snell_representation_gap<S: Scalar>(
    model: &RandomTimeModel<S>,
    data: &RBSDEData<S>,
    fs: &FSolution<S>,
) -> Result<f64> {
    let n = model.depth();
    let big_t = fs.horizon;
    let space = model.space();
    let lat = Lattice::f(space, space.path_prob(), big_t)?;
    let et = model.epsilon_tilde();
    let vf = model.v_f();
    let dt = space.dt().clone();
    let acc = crate::random_time::cumulate(&data.f, |t, a| {
        if t == 0 {
            S::zero()
        } else {
            et.at(t - 1, a >> 1).clone() * data.f.at(t - 1, a >> 1) * &dt + &(data.h.at(t, a).clone() * &vf.increment(t, a))
        }
    });
    let floor = payoff_floor(data, &dt);
    let reward: Vec<Vec<S>> = (0..=n)
        .map(|t| {
            (0..1usize << t)
                .map(|a| {
                    let base = acc.at(t, a).clone();
                    if t < big_t {
                        base + &data.barrier_at(t, a).map_or(floor.clone(), |s| et.at(t, a).clone() * s)
                    } else if t == big_t {
                        base + &(et.at(t, a).clone() * data.h.at(t, a))
                    } else {
                        S::zero()
                    }
                })
                .collect()
        })
        .collect();
    let env = snell_backward(&lat, &reward, 0)?;
    let mut worst = 0.0f64;
    for t in 0..=big_t {
        for a in 0..1usize << t {
            let lhs = fs.y.at(t, a).clone() + acc.at(t, a);
            worst = worst.max(discrepancy(&lhs, &env.envelope[t][a]));
        }
    }
    Ok(worst)
}

/// `E^{Q̃}[Σ_{t≤s<T∧τ} f_sΔt + ξ | G_t]` by direct outcome sums (no reflection).
pub fn conditional_integral<S: Scalar>(model: &RandomTimeModel<S>, data: &RBSDEData<S>) -> GProcess<S> {
    let n = model.depth();
    let big_t = data.horizon.window(n);
    let q = model.qtilde(big_t);
    let dt = model.space().dt().clone();
    let mut num = zeros::<S>(n);
    let mut den = zeros::<S>(n);
    for (path, k, w) in q.outcomes() {
        let end = k.min(big_t);
        let payoff = |t: usize| {
            let mut v = data.h.at(end, path >> (n - end)).clone();
            for s in t..end {
                v = v + &(data.f.at(s, path >> (n - s)).clone() * &dt);
            }
            v
        };
        for t in 0..=n {
            let i = crate::random_time::outcome_index(n, t, path, k);
            num[t][i] = num[t][i].clone() + &(w.clone() * &payoff(t.min(end)));
            den[t][i] = den[t][i].clone() + w;
        }
    }
    GProcess::from_fn(n, |t, atom| {
        let i = atom.index(t);
        if den[t][i].is_zero() {
            S::zero()
        } else {
            num[t][i].clone() / &den[t][i]
        }
    })
}

/// Residual of the weighted equation satisfied by
/// `(YẼ^{1/p}, ZẼ_−^{1/p}, Ẽ_−^{1/p}·K, Ẽ_−^{1/p}·M)` (floating point):
/// `ΔỸ = −Y_tẼ_{t−1}^{1/p}ΔṼ^{(1/p)} − Ẽ_{t−1}^{1/p}(fΔt + ΔK − ΔM − ZΔW)`.
pub fn weighted_equation_residual<S: Scalar>(
    model: &RandomTimeModel<S>,
    data: &RBSDEData<S>,
    sol: &RBSDESolution<S>,
    p: f64,
) -> f64 {
    let q_exp = 1.0 / p;
    let big_t = sol.horizon;
    let et = model.epsilon_tilde().to_f64();
    let vq = model.v_tilde(q_exp);
    let dt = model.space().dt().to_f64();
    let masses: Vec<Vec<S>> = {
        let q = model.qtilde(big_t);
        (0..=big_t).map(|t| q.g_masses(t)).collect()
    };
    let mut worst = 0.0f64;
    for t in 1..=big_t {
        for i in 0..g_width(t) {
            let atom = GAtom::from_index(t, i);
            if masses[t][i].is_zero() || !live_step(t, atom) {
                continue;
            }
            let a = atom.prefix();
            let pa = a >> 1;
            let e_prev = et.at(t - 1, pa).powf(q_exp);
            let e_now = et.at(t, a).max(0.0).powf(q_exp);
            let y_now = sol.y.get(t, atom).to_f64();
            let y_prev = sol.y.get(t - 1, GAtom::Alive(pa)).to_f64();
            let lhs = y_now * e_now - y_prev * e_prev;
            let dm = RBSDESolution::increment(&sol.m, t, atom).to_f64();
            let dk = RBSDESolution::increment(&sol.k, t, atom).to_f64();
            let z = sol.z.get(t, atom).to_f64();
            let w = dw_into(model, t, atom).to_f64();
            let rhs = -y_now * e_prev * vq.increment(t, a) - e_prev * data.f.at(t - 1, pa).to_f64() * dt - e_prev * dk
                + e_prev * dm
                + e_prev * z * w;
            worst = worst.max((lhs - rhs).abs());
        }
    }
    worst
}

#[derive(Clone, Debug, Serialize)]
pub struct TruncationStep {
    pub n: usize,
    /// Weighted norm of the difference with the full solution.
    pub gap: f64,
}

#[derive(Clone, Debug)]
pub struct RandomHorizonSolution<S: Scalar> {
    pub solution: RBSDESolution<S>,
    pub truncation: Vec<TruncationStep>,
    pub weighted_residual: f64,
}

/// Horizon `τ` on a closed model, with the truncated sequence
/// `(f I_{[0,n[}, S^n, h^n)`, `n = 0..=N`, logged against the full solution.
pub fn solve_random_horizon<S: Scalar>(model: &RandomTimeModel<S>, data: &RBSDEData<S>) -> Result<RandomHorizonSolution<S>> {
    if data.horizon != Horizon::Random {
        return Err(HorizonError::Validation("solve_random_horizon needs the random horizon".into()));
    }
    let solution = solve_g(model, data)?;
    let n = model.depth();
    let mut truncation = Vec::with_capacity(n + 1);
    for cut in 0..=n {
        let tr = solve_g(model, &data.truncated(cut))?;
        let gap = crate::norms::weighted_difference_norm(model, &tr, &solution, data.p);
        truncation.push(TruncationStep { n: cut, gap });
    }
    let weighted_residual = weighted_equation_residual(model, data, &solution, data.p);
    Ok(RandomHorizonSolution { solution, truncation, weighted_residual })
}

/// Plain BSDE (`−∞` barrier): `K ≡ 0`.
pub fn solve_bsde<S: Scalar>(model: &RandomTimeModel<S>, data: &RBSDEData<S>) -> Result<RBSDESolution<S>> {
    if data.barrier.is_some() {
        return Err(HorizonError::Validation("solve_bsde takes no barrier".into()));
    }
    solve_g(model, data)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::random_time::{constant_hazard, model_m2};
    use crate::scalar::Rational;
    use num_traits::Zero;

    fn q(n: i64, d: i64) -> Rational {
        Rational::from_ratio(n, d)
    }

    fn m2_data() -> RBSDEData<Rational> {
        RBSDEData::new(
            FProcess::constant(2, q(0, 1)),
            Some(FProcess::from_fn(2, |t, _| q(3 * (2 - t as i64), 10))),
            FProcess::constant(2, q(1, 2)),
            Horizon::Finite(2),
            2.0,
        )
    }

    #[test]
    fn constant_terminal() {
        let m = model_m2::<Rational>();
        let d = RBSDEData::new(FProcess::constant(2, q(0, 1)), None, FProcess::constant(2, q(1, 1)), Horizon::Finite(2), 2.0);
        let s = solve_g(&m, &d).unwrap();
        assert!(s.y.slices().iter().flatten().all(|v| *v == q(1, 1)));
        assert!(s.z.slices().iter().chain(s.m.slices()).chain(s.k.slices()).flatten().all(|v| v.is_zero()));
    }

    #[test]
    fn deterministic_integral() {
        let m = constant_hazard(3, q(1, 1), q(0, 1), false).unwrap();
        let d = RBSDEData::new(FProcess::constant(3, q(1, 1)), None, FProcess::constant(3, q(0, 1)), Horizon::Finite(3), 2.0);
        let s = solve_g(&m, &d).unwrap();
        for t in 0..=3 {
            assert_eq!(*s.y.alive(t, 0), q(3 - t as i64, 1));
        }
        assert!(s.k.slices().iter().flatten().all(|v| v.is_zero()));
    }

    #[test]
    fn m2_running_instance() {
        let m = model_m2::<Rational>();
        let d = m2_data();
        let g = solve_g(&m, &d).unwrap();
        assert_eq!(g.diagnostics.worst(), 0.0);
        assert_eq!(snell_representation_gap(&m, &d, &g).unwrap(), 0.0);
        let f = solve_f(&m, &d).unwrap();
        assert_eq!(f.diagnostics.worst(), 0.0);
        assert_eq!(f_snell_representation_gap(&m, &d, &f).unwrap(), 0.0);
        let t = transform_f_to_g(&m, &f, &d).unwrap();
        assert_eq!(t.diagnostics.worst(), 0.0);
        assert_eq!(compare_solutions(&m, &g, &t), SolutionGap::default());
    }

    #[test]
    fn f_side_constant_kernel() {
        let m = model_m2::<Rational>();
        let d = RBSDEData::new(FProcess::constant(2, q(0, 1)), None, FProcess::constant(2, q(3, 1)), Horizon::Finite(2), 2.0);
        let f = solve_f(&m, &d).unwrap();
        let v = m.v_f();
        // c·E[Ẽ_T + V_T − V_t | F_t] = c·(1 − V_t) = c·Ẽ_t
        for t in 0..=2 {
            for a in 0..1usize << t {
                assert_eq!(*f.y.at(t, a), q(3, 1) * (q(1, 1) - v.at(t, a)));
            }
        }
    }

    #[test]
    fn bsde_matches_outcome_sums() {
        let m = model_m2::<Rational>();
        let d = RBSDEData::new(
            FProcess::from_fn(2, |t, a| q(1 + t as i64 + a as i64, 7)),
            None,
            FProcess::from_fn(2, |t, a| q(a as i64 - t as i64, 3)),
            Horizon::Finite(2),
            2.0,
        );
        let s = solve_bsde(&m, &d).unwrap();
        let oracle = conditional_integral(&m, &d);
        let qm = m.qtilde(2);
        for t in 0..=2 {
            for (i, mass) in qm.g_masses(t).iter().enumerate() {
                if !mass.is_zero() {
                    assert_eq!(s.y.slice(t)[i], oracle.slice(t)[i]);
                }
            }
        }
    }

    #[test]
    fn random_horizon_on_m2() {
        let m = model_m2::<Rational>();
        let d = RBSDEData::new(
            FProcess::constant(2, q(1, 10)),
            Some(FProcess::from_fn(2, |t, _| q(-2 * t as i64, 10))),
            FProcess::from_fn(2, |t, a| q(1, 2) + m.space().driver().at(t, a).clone() * &q(1, 10)),
            Horizon::Random,
            2.0,
        );
        let r = solve_random_horizon(&m, &d).unwrap();
        assert_eq!(r.solution.diagnostics.worst(), 0.0);
        assert!(r.weighted_residual < 1e-12);
        assert_eq!(r.truncation.last().unwrap().gap, 0.0);
        let f = solve_f(&m, &d).unwrap();
        let t = transform_f_to_g(&m, &f, &d).unwrap();
        assert_eq!(compare_solutions(&m, &r.solution, &t), SolutionGap::default());
    }
}
