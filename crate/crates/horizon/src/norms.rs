//! Norms on the windows `[0, σ]`, the data functionals `Δ_Q̃` and
//! `Δ_{P⊗V^F}`, the a-priori estimate checks, and the expectation
//! inequalities they rest on.
//!
//! Norms involve fractional powers, so everything here is evaluated in
//! `f64`; exact inputs are converted once. The few statements that are
//! identities (expectations under `Q̃` rewritten under `P`) are checked in
//! the input backend and report exact discrepancies.

use serde::{Deserialize, Serialize};

use crate::fspace::{FProcess, FilteredSpace};
use crate::random_time::{FullMeasure, GAtom, GProcess, Mode, RandomTimeModel};
use crate::rbsde::{FSolution, Horizon, RBSDEData, RBSDESolution};
use crate::scalar::{discrepancy, sum, Scalar};
use crate::snell::MeasureKind;
use crate::{HorizonError, Result};

pub const FINITE_Q_ESTIMATE: &str = "finite_q_estimate";
pub const FINITE_Q_STABILITY: &str = "finite_q_stability";
pub const WEIGHTED_P_ESTIMATE: &str = "weighted_p_estimate";
pub const WEIGHTED_P_STABILITY: &str = "weighted_p_stability";
pub const RANDOM_HORIZON_ESTIMATE: &str = "random_horizon_estimate";
pub const RANDOM_HORIZON_STABILITY: &str = "random_horizon_stability";
pub const F_SIDE_ESTIMATE: &str = "f_side_estimate";
pub const MARTINGALE_INEQUALITY: &str = "martingale_inequality";

/// Every estimate id, in ledger order.
pub const ESTIMATE_IDS: [&str; 8] = [
    FINITE_Q_ESTIMATE,
    FINITE_Q_STABILITY,
    WEIGHTED_P_ESTIMATE,
    WEIGHTED_P_STABILITY,
    RANDOM_HORIZON_ESTIMATE,
    RANDOM_HORIZON_STABILITY,
    F_SIDE_ESTIMATE,
    MARTINGALE_INEQUALITY,
];

// ---------------------------------------------------------------------------
// Windows and pathwise norms
// ---------------------------------------------------------------------------

/// Outcome weights of one measure, with the window `[0, T∧τ]`.
#[derive(Clone, Debug)]
pub struct Window {
    horizon: usize,
    cells: Vec<(usize, usize, f64)>,
}

impl Window {
    pub fn new<S: Scalar>(measure: &FullMeasure<S>, horizon: usize) -> Self {
        let cells = measure.outcomes().map(|(p, k, w)| (p, k, w.to_f64())).collect();
        Window { horizon, cells }
    }

    pub fn under<S: Scalar>(model: &RandomTimeModel<S>, kind: MeasureKind, horizon: usize) -> Self {
        match kind {
            MeasureKind::P => Self::new(model.p(), horizon),
            MeasureKind::QTilde => Self::new(&model.qtilde(horizon), horizon),
        }
    }

    /// `E[x]` for a pathwise functional `x(path, k, T∧k)`.
    pub fn expect(&self, mut x: impl FnMut(usize, usize, usize) -> f64) -> f64 {
        self.cells.iter().map(|&(path, k, w)| w * x(path, k, k.min(self.horizon))).sum()
    }

    /// `‖x‖_{L^p}`.
    pub fn lp(&self, p: f64, mut x: impl FnMut(usize, usize, usize) -> f64) -> f64 {
        self.expect(|path, k, e| x(path, k, e).abs().powf(p)).powf(1.0 / p)
    }
}

fn on<S: Scalar>(x: &GProcess<S>, t: usize, path: usize, k: usize) -> f64 {
    x.on_outcome(t, path, k).to_f64()
}

fn step<S: Scalar>(x: &GProcess<S>, t: usize, path: usize, k: usize) -> f64 {
    on(x, t, path, k) - on(x, t - 1, path, k)
}

/// `‖Y‖_𝔻 = ‖sup_{t≤σ} |Y_t|‖_p`.
pub fn d_norm<S: Scalar>(win: &Window, y: &GProcess<S>, p: f64) -> f64 {
    win.lp(p, |path, k, e| (0..=e).map(|t| on(y, t, path, k).abs()).fold(0.0, f64::max))
}

/// `‖Z‖_𝕊 = ‖(Σ_{t≤σ} Z_t² Δt)^{1/2}‖_p`.
pub fn s_norm<S: Scalar>(win: &Window, z: &GProcess<S>, dt: f64, p: f64) -> f64 {
    win.lp(p, |path, k, e| (1..=e).map(|t| on(z, t, path, k).powi(2) * dt).sum::<f64>().sqrt())
}

/// `‖M‖_{ℳ^p} = ‖[M]_σ^{1/2}‖_p`.
pub fn m_norm<S: Scalar>(win: &Window, m: &GProcess<S>, p: f64) -> f64 {
    win.lp(p, |path, k, e| (1..=e).map(|t| step(m, t, path, k).powi(2)).sum::<f64>().sqrt())
}

/// `‖K‖_𝒜 = ‖Var_σ(K)‖_p`.
pub fn a_norm<S: Scalar>(win: &Window, k_proc: &GProcess<S>, p: f64) -> f64 {
    win.lp(p, |path, k, e| (1..=e).map(|t| step(k_proc, t, path, k).abs()).sum::<f64>())
}

#[derive(Clone, Debug, Serialize, PartialEq)]
pub struct NormSuite {
    pub p: f64,
    pub measure: MeasureKind,
    /// Discounted by `Ẽ^{1/p}` (`Ẽ_−^{1/p}` for `Z`, `M`, `K`).
    pub weighted: bool,
    pub horizon: usize,
    pub d_norm: f64,
    pub s_norm: f64,
    pub m_norm: f64,
    pub a_norm: f64,
    /// `‖Y‖_𝔻 + ‖Z‖_𝕊 + ‖M‖_ℳ + ‖K‖_𝒜`.
    pub combined: f64,
}

/// `(YẼ^{1/p}, ZẼ_−^{1/p}, Ẽ_−^{1/p}·M, Ẽ_−^{1/p}·K)`.
pub fn discounted<S: Scalar, T: Scalar>(model: &RandomTimeModel<S>, sol: &RBSDESolution<T>, p: f64) -> RBSDESolution<f64> {
    discounted_view(&model.epsilon_tilde().to_f64(), &sol.to_f64(), p)
}

/// Norms of a quadruple on its window, under `P` or `Q̃_σ`.
pub fn compute_norms<S: Scalar, T: Scalar>(
    model: &RandomTimeModel<S>,
    sol: &RBSDESolution<T>,
    measure: MeasureKind,
    weighted: bool,
    p: f64,
) -> NormSuite {
    let win = Window::under(model, measure, sol.horizon);
    let dt = model.space().dt().to_f64();
    let x = if weighted { discounted(model, sol, p) } else { sol.to_f64() };
    let d = d_norm(&win, &x.y, p);
    let s = s_norm(&win, &x.z, dt, p);
    let m = m_norm(&win, &x.m, p);
    let a = a_norm(&win, &x.k, p);
    NormSuite {
        p,
        measure,
        weighted,
        horizon: sol.horizon,
        d_norm: d,
        s_norm: s,
        m_norm: m,
        a_norm: a,
        combined: d + s + m + a,
    }
}

/// Componentwise difference of two quadruples.
pub fn difference<S: Scalar>(a: &RBSDESolution<S>, b: &RBSDESolution<S>) -> RBSDESolution<f64> {
    let sub = |x: &GProcess<S>, y: &GProcess<S>| x.map(|t, atom, v| (v.clone() - y.get(t, atom)).to_f64());
    RBSDESolution {
        horizon: a.horizon.max(b.horizon),
        y: sub(&a.y, &b.y),
        z: sub(&a.z, &b.z),
        m: sub(&a.m, &b.m),
        k: sub(&a.k, &b.k),
        diagnostics: Default::default(),
    }
}

/// Weighted `P`-norm of `a − b` (all four components).
pub fn weighted_difference_norm<S: Scalar>(
    model: &RandomTimeModel<S>,
    a: &RBSDESolution<S>,
    b: &RBSDESolution<S>,
    p: f64,
) -> f64 {
    compute_norms(model, &difference(a, b), MeasureKind::P, true, p).combined
}

fn discounted_view(et: &FProcess<f64>, sol: &RBSDESolution<f64>, p: f64) -> RBSDESolution<f64> {
    let n = et.depth();
    let q = 1.0 / p;
    let w_now = |t: usize, atom: GAtom| et.at(t, atom.prefix()).max(0.0).powf(q);
    let w_prev = |t: usize, atom: GAtom| et.at(t - 1, atom.prefix() >> 1).max(0.0).powf(q);
    let integral = |x: &GProcess<f64>| {
        let mut acc = GProcess::constant(n, 0.0);
        for t in 1..=n {
            for i in 0..crate::random_time::g_width(t) {
                let atom = GAtom::from_index(t, i);
                let v = acc.get(t - 1, atom.parent(t)) + w_prev(t, atom) * RBSDESolution::increment(x, t, atom);
                acc.set(t, atom, v);
            }
        }
        acc
    };
    RBSDESolution {
        horizon: sol.horizon,
        y: GProcess::from_fn(n, |t, atom| sol.y.get(t, atom) * w_now(t, atom)),
        z: GProcess::from_fn(n, |t, atom| if t == 0 { 0.0 } else { sol.z.get(t, atom) * w_prev(t, atom) }),
        m: integral(&sol.m),
        k: integral(&sol.k),
        diagnostics: Default::default(),
    }
}

// ---------------------------------------------------------------------------
// Data functionals
// ---------------------------------------------------------------------------

/// Which part of the barrier enters a data functional.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BarrierPart {
    /// `S⁺`.
    Positive,
    /// `|S|`.
    Absolute,
}

impl BarrierPart {
    fn apply(self, s: f64) -> f64 {
        match self {
            BarrierPart::Positive => s.max(0.0),
            BarrierPart::Absolute => s.abs(),
        }
    }
}

/// Data triple converted to `f64`; the barrier is optional.
#[derive(Clone, Debug)]
pub struct FloatData {
    pub f: FProcess<f64>,
    pub barrier: Option<FProcess<f64>>,
    pub h: FProcess<f64>,
    pub horizon: Horizon,
}

impl FloatData {
    pub fn of<S: Scalar>(d: &RBSDEData<S>) -> Self {
        FloatData { f: d.f.to_f64(), barrier: d.barrier.as_ref().map(|s| s.to_f64()), h: d.h.to_f64(), horizon: d.horizon }
    }

    /// `(δf, δS, δh)`; both barriers must be present or both absent.
    pub fn difference<S: Scalar>(a: &RBSDEData<S>, b: &RBSDEData<S>) -> Result<Self> {
        let sub = |x: &FProcess<S>, y: &FProcess<S>| x.map(|t, i, v| (v.clone() - y.at(t, i)).to_f64());
        let barrier = match (&a.barrier, &b.barrier) {
            (Some(x), Some(y)) => Some(sub(x, y)),
            (None, None) => None,
            _ => return Err(HorizonError::Validation("cannot subtract a finite barrier from −∞".into())),
        };
        Ok(FloatData { f: sub(&a.f, &b.f), barrier, h: sub(&a.h, &b.h), horizon: a.horizon })
    }

    /// `(0, S, 0)`.
    pub fn barrier_only(&self) -> Self {
        let depth = self.f.depth();
        FloatData {
            f: FProcess::constant(depth, 0.0),
            barrier: self.barrier.clone(),
            h: FProcess::constant(depth, 0.0),
            horizon: self.horizon,
        }
    }
}

/// `Δ_Q̃(ξ, f, S) = ‖ξ‖_{L^p(Q̃)} + ‖∫_0^{T∧τ}|f|ds‖_{L^p(Q̃)} + ‖S‖_{𝔻_{T∧τ}(Q̃)}`.
pub fn delta_qtilde<S: Scalar>(model: &RandomTimeModel<S>, data: &FloatData, p: f64, part: BarrierPart) -> f64 {
    let n = model.depth();
    let big_t = data.horizon.window(n);
    let win = Window::under(model, MeasureKind::QTilde, big_t);
    let dt = model.space().dt().to_f64();
    let at = |x: &FProcess<f64>, t: usize, path: usize| *x.at(t, path >> (n - t));
    let xi = win.lp(p, |path, _, e| at(&data.h, e, path));
    let fi = win.lp(p, |path, _, e| (0..e).map(|t| at(&data.f, t, path).abs() * dt).sum());
    let si = match &data.barrier {
        Some(s) => win.lp(p, |path, _, e| (0..=e).map(|t| part.apply(at(s, t, path))).fold(0.0, f64::max)),
        None => 0.0,
    };
    xi + fi + si
}

/// `Δ_{P⊗V^F}(f, h, S) = (E[Σ_s X_s^p ΔV^F_s])^{1/p}` with
/// `X_s = Σ_{u<s}|f_u|Δt + |h_s| + sup_{u≤s} S_u` (part applied to `S`).
pub fn delta_pv<S: Scalar>(model: &RandomTimeModel<S>, data: &FloatData, p: f64, part: BarrierPart) -> f64 {
    let space = model.space();
    let n = model.depth();
    let vf = model.v_f().to_f64();
    let dt = space.dt().to_f64();
    let mut total = 0.0;
    for (path, pp) in space.path_prob().iter().enumerate() {
        let pp = pp.to_f64();
        let mut run = 0.0;
        let mut sup_s = 0.0f64;
        if let Some(s) = &data.barrier {
            sup_s = part.apply(*s.on_path(path, 0));
        }
        for t in 1..=n {
            run += data.f.on_path(path, t - 1).abs() * dt;
            if let Some(s) = &data.barrier {
                sup_s = sup_s.max(part.apply(*s.on_path(path, t)));
            }
            let x = run + data.h.on_path(path, t).abs() + sup_s;
            total += pp * x.powf(p) * vf.increment(t, path >> (n - t));
        }
    }
    total.powf(1.0 / p)
}

// ---------------------------------------------------------------------------
// Estimates
// ---------------------------------------------------------------------------

/// One side-by-side evaluation of an a-priori inequality `lhs ≤ C·rhs`.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct EstimateRecord {
    pub id: String,
    pub p: f64,
    pub lhs: f64,
    pub rhs: f64,
    pub ratio: f64,
}

impl EstimateRecord {
    pub fn new(id: &str, p: f64, lhs: f64, rhs: f64) -> Self {
        EstimateRecord { id: id.to_string(), p, lhs, rhs, ratio: ratio(lhs, rhs) }
    }
}

/// `lhs / rhs` with `0/0 = 0` and `x/0 = ∞`.
pub fn ratio(lhs: f64, rhs: f64) -> f64 {
    if rhs > 0.0 {
        lhs / rhs
    } else if lhs == 0.0 {
        0.0
    } else {
        f64::INFINITY
    }
}

/// `|||(Y,Z,M,K)|||_{Q̃,p} ≤ C Δ_Q̃(ξ, f, S⁺)`.
pub fn finite_q_estimate<S: Scalar>(model: &RandomTimeModel<S>, data: &RBSDEData<S>, sol: &RBSDESolution<S>, p: f64) -> EstimateRecord {
    let lhs = compute_norms(model, sol, MeasureKind::QTilde, false, p).combined;
    let rhs = delta_qtilde(model, &FloatData::of(data), p, BarrierPart::Positive);
    EstimateRecord::new(FINITE_Q_ESTIMATE, p, lhs, rhs)
}

/// Shared right side of the two-solution estimates:
/// `Δ(δ) + (‖δS‖ Σ_i Δ(data_i, S_i⁺))^{1/2}`.
fn stability_rhs(delta: f64, ds: f64, d1: f64, d2: f64) -> f64 {
    delta + (ds * (d1 + d2)).sqrt()
}

/// `‖δY‖_𝔻 + ‖δZ‖_𝕊 + ‖δM‖_ℳ` under `Q̃` against `Δ_Q̃(δ) + √(‖δS‖_𝔻 ΣΔ_Q̃)`.
pub fn finite_q_stability<S: Scalar>(
    model: &RandomTimeModel<S>,
    first: (&RBSDEData<S>, &RBSDESolution<S>),
    second: (&RBSDEData<S>, &RBSDESolution<S>),
    p: f64,
) -> Result<EstimateRecord> {
    let d = difference(first.1, second.1);
    let norms = compute_norms(model, &d, MeasureKind::QTilde, false, p);
    let lhs = norms.d_norm + norms.s_norm + norms.m_norm;
    let dd = FloatData::difference(first.0, second.0)?;
    let rhs = stability_rhs(
        delta_qtilde(model, &dd, p, BarrierPart::Absolute),
        delta_qtilde(model, &dd.barrier_only(), p, BarrierPart::Absolute),
        delta_qtilde(model, &FloatData::of(first.0), p, BarrierPart::Positive),
        delta_qtilde(model, &FloatData::of(second.0), p, BarrierPart::Positive),
    );
    Ok(EstimateRecord::new(FINITE_Q_STABILITY, p, lhs, rhs))
}

/// Discounted quadruple under `P` against `Δ_Q̃(ξ, f, S⁺)`.
pub fn weighted_p_estimate<S: Scalar>(model: &RandomTimeModel<S>, data: &RBSDEData<S>, sol: &RBSDESolution<S>, p: f64) -> EstimateRecord {
    let lhs = compute_norms(model, sol, MeasureKind::P, true, p).combined;
    let rhs = delta_qtilde(model, &FloatData::of(data), p, BarrierPart::Positive);
    EstimateRecord::new(WEIGHTED_P_ESTIMATE, p, lhs, rhs)
}

/// Discounted `(δY, δZ, δM, 0)` under `P` against the `Q̃` two-term bound.
pub fn weighted_p_stability<S: Scalar>(
    model: &RandomTimeModel<S>,
    first: (&RBSDEData<S>, &RBSDESolution<S>),
    second: (&RBSDEData<S>, &RBSDESolution<S>),
    p: f64,
) -> Result<EstimateRecord> {
    let d = difference(first.1, second.1);
    let norms = compute_norms(model, &d, MeasureKind::P, true, p);
    let lhs = norms.d_norm + norms.s_norm + norms.m_norm;
    let dd = FloatData::difference(first.0, second.0)?;
    let rhs = stability_rhs(
        delta_qtilde(model, &dd, p, BarrierPart::Absolute),
        delta_qtilde(model, &dd.barrier_only(), p, BarrierPart::Absolute),
        delta_qtilde(model, &FloatData::of(first.0), p, BarrierPart::Positive),
        delta_qtilde(model, &FloatData::of(second.0), p, BarrierPart::Positive),
    );
    Ok(EstimateRecord::new(WEIGHTED_P_STABILITY, p, lhs, rhs))
}

fn require_random(model_mode: Mode, data_horizon: Horizon) -> Result<()> {
    if model_mode != Mode::Closed || data_horizon != Horizon::Random {
        return Err(HorizonError::Validation("random-horizon estimates need a closed model and horizon τ".into()));
    }
    Ok(())
}

/// Discounted quadruple on `[0, τ]` under `P` against `Δ_{P⊗V^F}(f, h, S⁺)`.
pub fn random_horizon_estimate<S: Scalar>(
    model: &RandomTimeModel<S>,
    data: &RBSDEData<S>,
    sol: &RBSDESolution<S>,
    p: f64,
) -> Result<EstimateRecord> {
    require_random(model.mode(), data.horizon)?;
    let lhs = compute_norms(model, sol, MeasureKind::P, true, p).combined;
    let rhs = delta_pv(model, &FloatData::of(data), p, BarrierPart::Positive);
    Ok(EstimateRecord::new(RANDOM_HORIZON_ESTIMATE, p, lhs, rhs))
}

/// Discounted `(δY, δZ, δM, 0)` on `[0, τ]` against
/// `Δ_{P⊗V^F}(δ) + √(Δ_{P⊗V^F}(0, 0, δS) Σ_i Δ_{P⊗V^F}(data_i, S_i⁺))`.
pub fn random_horizon_stability<S: Scalar>(
    model: &RandomTimeModel<S>,
    first: (&RBSDEData<S>, &RBSDESolution<S>),
    second: (&RBSDEData<S>, &RBSDESolution<S>),
    p: f64,
) -> Result<EstimateRecord> {
    require_random(model.mode(), first.0.horizon)?;
    let d = difference(first.1, second.1);
    let norms = compute_norms(model, &d, MeasureKind::P, true, p);
    let lhs = norms.d_norm + norms.s_norm + norms.m_norm;
    let dd = FloatData::difference(first.0, second.0)?;
    let rhs = stability_rhs(
        delta_pv(model, &dd, p, BarrierPart::Absolute),
        delta_pv(model, &dd.barrier_only(), p, BarrierPart::Absolute),
        delta_pv(model, &FloatData::of(first.0), p, BarrierPart::Positive),
        delta_pv(model, &FloatData::of(second.0), p, BarrierPart::Positive),
    );
    Ok(EstimateRecord::new(RANDOM_HORIZON_STABILITY, p, lhs, rhs))
}

/// `‖Y^F‖_𝔻 + ‖Z^F‖_𝕊 + ‖K^F_T‖_{L^p}` under `P` against
/// `‖∫|f^F|ds + ∫|h|dV^F + |ξ^F| + sup (S^F)⁺‖_{L^p(P)}`.
pub fn f_side_estimate<S: Scalar>(model: &RandomTimeModel<S>, data: &RBSDEData<S>, fs: &FSolution<S>, p: f64) -> EstimateRecord {
    let space = model.space();
    let n = model.depth();
    let big_t = fs.horizon;
    let dt = space.dt().to_f64();
    let et = model.epsilon_tilde().to_f64();
    let vf = model.v_f().to_f64();
    let y = fs.y.to_f64();
    let z = fs.z.to_f64();
    let k = fs.k.to_f64();
    let fd = FloatData::of(data);
    let mut sums = [0.0f64; 4];
    for (path, pp) in space.path_prob().iter().enumerate() {
        let pp = pp.to_f64();
        let pre = |t: usize| path >> (n - t);
        let sup_y = (0..=big_t).map(|t| y.at(t, pre(t)).abs()).fold(0.0, f64::max);
        let zz = (1..=big_t).map(|t| z.at(t, pre(t)).powi(2) * dt).sum::<f64>().sqrt();
        let kk = k.at(big_t, pre(big_t)).abs();
        let mut data_sum = (et.at(big_t, pre(big_t)) * fd.h.at(big_t, pre(big_t))).abs();
        for t in 0..big_t {
            data_sum += (et.at(t, pre(t)) * fd.f.at(t, pre(t))).abs() * dt;
        }
        for t in 1..=big_t {
            data_sum += fd.h.at(t, pre(t)).abs() * vf.increment(t, pre(t));
        }
        if let Some(s) = &fd.barrier {
            data_sum += (0..=big_t).map(|t| (et.at(t, pre(t)) * s.at(t, pre(t))).max(0.0)).fold(0.0, f64::max);
        }
        sums[0] += pp * sup_y.powf(p);
        sums[1] += pp * zz.powf(p);
        sums[2] += pp * kk.powf(p);
        sums[3] += pp * data_sum.powf(p);
    }
    let r = |x: f64| x.powf(1.0 / p);
    EstimateRecord::new(F_SIDE_ESTIMATE, p, r(sums[0]) + r(sums[1]) + r(sums[2]), r(sums[3]))
}

/// Both sides of `‖sup|(H·M)|‖_r ≤ κ ‖sup|X|‖_a ‖[M]_N^{1/2}‖_b` under `P`.
#[derive(Clone, Debug, Serialize, PartialEq)]
pub struct MartingaleInequality {
    pub r: f64,
    pub a: f64,
    pub b: f64,
    pub lhs: f64,
    pub sup_x: f64,
    pub bracket: f64,
    pub ratio: f64,
}

/// `H` is given at its measurability time: `h.at(t, ·)` multiplies
/// `ΔM_{t+1}` and must satisfy `|h_t| ≤ |x_t|`.
pub fn martingale_inequality<S: Scalar>(
    space: &FilteredSpace<S>,
    h: &FProcess<S>,
    x: &FProcess<S>,
    m: &FProcess<S>,
    a: f64,
    b: f64,
) -> Result<MartingaleInequality> {
    if !(a > 1.0 && b > 1.0) {
        return Err(HorizonError::Validation(format!("exponents must exceed 1, got a={a}, b={b}")));
    }
    let r = 1.0 / (1.0 / a + 1.0 / b);
    let n = space.depth();
    if h.depth() != n || x.depth() != n || m.depth() != n {
        return Err(HorizonError::Validation("process depth does not match the space".into()));
    }
    for t in 0..n {
        for i in 0..1usize << t {
            if h.at(t, i).abs() > x.at(t, i).abs() {
                return Err(HorizonError::Validation(format!(
                    "domination |H| ≤ |X_−| fails at t={}, atom {}",
                    t + 1,
                    crate::fspace::path_label(i, t)
                )));
            }
        }
    }
    let defect = crate::fspace::martingale_defect(space, m, space.path_prob())?;
    if defect > 0.0 && (S::EXACT || defect > 1e-10) {
        return Err(HorizonError::Validation(format!("M is not a martingale (drift {defect:e})")));
    }
    let (hf, xf, mf) = (h.to_f64(), x.to_f64(), m.to_f64());
    let mut sums = [0.0f64; 3];
    for (path, pp) in space.path_prob().iter().enumerate() {
        let pp = pp.to_f64();
        let mut integral = 0.0f64;
        let mut sup_int = 0.0f64;
        let mut sup_x = xf.on_path(path, 0).abs();
        let mut qv = 0.0;
        for t in 1..=n {
            let dm = mf.on_path(path, t) - mf.on_path(path, t - 1);
            integral += hf.on_path(path, t - 1) * dm;
            sup_int = sup_int.max(integral.abs());
            sup_x = sup_x.max(xf.on_path(path, t).abs());
            qv += dm * dm;
        }
        sums[0] += pp * sup_int.powf(r);
        sums[1] += pp * sup_x.powf(a);
        sums[2] += pp * qv.sqrt().powf(b);
    }
    let lhs = sums[0].powf(1.0 / r);
    let sup_x = sums[1].powf(1.0 / a);
    let bracket = sums[2].powf(1.0 / b);
    Ok(MartingaleInequality { r, a, b, lhs, sup_x, bracket, ratio: ratio(lhs, sup_x * bracket) })
}

// ---------------------------------------------------------------------------
// Survival bounds and Q̃-to-P identities
// ---------------------------------------------------------------------------

#[derive(Clone, Debug, Default, Serialize, PartialEq)]
pub struct SurvivalBounds {
    /// `max (E^Q̃[D^{o,F}_{T∧τ} − D^{o,F}_{(t∧τ)−} | G_t] − G̃_{t∧τ})⁺`.
    pub compensator_excess: f64,
    /// `max (G̃ − 1)⁺`.
    pub survival_excess: f64,
    /// `max (E[Σ_{t∧τ<s≤T∧τ} ΔD^{o,F}_s / G̃_s | G_t] − 1)⁺`.
    pub hazard_sum_excess: f64,
    /// Largest decrease of `max(a,1) G̃^{-1}·D^{o,F} − Ṽ^(a)`, exact for `a ∈ {1, 2, 3}`.
    pub monotone_defect: f64,
    /// The same for fractional `a`, in floating point.
    pub monotone_defect_fractional: f64,
}

/// Atom-wise bounds on the compensator of `τ`, for every `0 < t ≤ T ≤ N`.
pub fn survival_bounds<S: Scalar>(model: &RandomTimeModel<S>) -> SurvivalBounds {
    let n = model.depth();
    let (_, gt, dd) = model.survival_processes();
    let dof = model.d_of();
    let mut out = SurvivalBounds::default();
    let width = crate::random_time::g_width;
    let excess = |x: S| x.pos_part().to_f64();

    for t in 0..=n {
        for a in 0..1usize << t {
            out.survival_excess = out.survival_excess.max(excess(gt.at(t, a).clone() - S::one()));
        }
    }
    for big_t in 1..=n {
        let q = model.qtilde(big_t);
        for t in 1..=big_t {
            let mut num = vec![S::zero(); width(t)];
            let mut den = vec![S::zero(); width(t)];
            let mut bound = vec![S::zero(); width(t)];
            for (path, k, w) in q.outcomes() {
                let i = crate::random_time::outcome_index(n, t, path, k);
                let hi = k.min(big_t);
                let lo = k.min(t);
                let v = dof.on_path(path, hi).clone() - dof.on_path(path, lo - 1);
                num[i] = num[i].clone() + &(w.clone() * &v);
                den[i] = den[i].clone() + w;
                bound[i] = gt.on_path(path, lo).clone();
            }
            for i in 0..width(t) {
                if !den[i].is_zero() {
                    out.compensator_excess = out.compensator_excess.max(excess(num[i].clone() / &den[i] - &bound[i]));
                }
            }
            let mut num = vec![S::zero(); width(t)];
            let mut den = vec![S::zero(); width(t)];
            for (path, k, w) in model.p().outcomes() {
                let i = crate::random_time::outcome_index(n, t, path, k);
                let v = sum((k.min(t) + 1..=k.min(big_t)).map(|s| {
                    let a = path >> (n - s);
                    dd.at(s, a).clone() / gt.at(s, a)
                }));
                num[i] = num[i].clone() + &(w.clone() * &v);
                den[i] = den[i].clone() + w;
            }
            for i in 0..width(t) {
                if !den[i].is_zero() {
                    out.hazard_sum_excess = out.hazard_sum_excess.max(excess(num[i].clone() / &den[i] - S::one()));
                }
            }
        }
    }
    for t in 1..=n {
        for a in 0..1usize << t {
            let x = dd.at(t, a).clone() / gt.at(t, a);
            for e in 1..=3i64 {
                let mut pow = S::one();
                for _ in 0..e {
                    pow = pow * &(S::one() - &x);
                }
                let inc = S::from_i64(e) * &x - &(S::one() - &pow);
                out.monotone_defect = out.monotone_defect.max(excess(-inc));
            }
            let xf = x.to_f64();
            for e in [0.25, 0.5, 1.5, 2.5] {
                let inc = f64::max(e, 1.0) * xf - (1.0 - (1.0 - xf).powf(e));
                if inc < -1e-14 {
                    out.monotone_defect_fractional = out.monotone_defect_fractional.max(-inc);
                }
            }
        }
    }
    out
}

/// Gaps of the three ways of computing `E^Q̃[X_{T∧τ}]` under `P`.
#[derive(Clone, Debug, Default, Serialize, PartialEq)]
pub struct QTildeIdentities {
    /// `E^Q̃[X_{T∧τ}]` vs `E[G_0 Σ_{s≤T} X_s ΔV^F_s + G_0 X_T Ẽ_T + X_0(1 − G_0)]`.
    pub optional_gap: f64,
    /// `E^Q̃[X_{T∧τ}]` vs `E[X_0 + G_0 Σ_{s≤T} Ẽ_{s−1} ΔX_s]` (nondecreasing `X` only).
    pub increasing_gap: Option<f64>,
    /// `‖Σ Ẽ_{s−1}ΔX_s‖_{L^r(P)}` and `r G_0^{-1/r} ‖X_{T∧τ}‖_{L^r(Q̃)}`
    /// (nondecreasing `X` with `X_0 = 0` only).
    pub lr_sides: Option<(f64, f64)>,
}

pub fn qtilde_identities<S: Scalar>(model: &RandomTimeModel<S>, x: &FProcess<S>, big_t: usize, r: f64) -> QTildeIdentities {
    let space = model.space();
    let n = model.depth();
    let q = model.qtilde(big_t);
    let et = model.epsilon_tilde();
    let vf = model.v_f();
    let g0 = model.g().at(0, 0).clone();
    let x0 = x.at(0, 0).clone();
    let lhs = q.expect(|path, k| x.on_path(path, k.min(big_t)).clone());
    let paths = space.path_prob();
    let e_p = |f: &dyn Fn(usize) -> S| sum(paths.iter().enumerate().map(|(path, pp)| pp.clone() * &f(path)));
    let optional = e_p(&|path| {
        let integral = sum((1..=big_t).map(|s| x.on_path(path, s).clone() * &vf.increment(s, path >> (n - s))));
        g0.clone() * &integral + &(g0.clone() * x.on_path(path, big_t) * et.on_path(path, big_t))
            + &(x0.clone() * &(S::one() - &g0))
    });
    let increasing = (0..n).all(|t| (0..1usize << (t + 1)).all(|c| x.at(t + 1, c) >= x.at(t, c >> 1)));
    let weighted_sum = |path: usize| {
        sum((1..=big_t).map(|s| et.on_path(path, s - 1).clone() * &(x.on_path(path, s).clone() - x.on_path(path, s - 1))))
    };
    let increasing_gap = (increasing && !x0.is_negative()).then(|| {
        let rhs = e_p(&|path| x0.clone() + &(g0.clone() * &weighted_sum(path)));
        discrepancy(&lhs, &rhs)
    });
    let lr_sides = (increasing && x0.is_zero()).then(|| {
        let l = paths
            .iter()
            .enumerate()
            .map(|(path, pp)| pp.to_f64() * weighted_sum(path).to_f64().abs().powf(r))
            .sum::<f64>()
            .powf(1.0 / r);
        let qx = q
            .outcomes()
            .map(|(path, k, w)| w.to_f64() * x.on_path(path, k.min(big_t)).to_f64().abs().powf(r))
            .sum::<f64>()
            .powf(1.0 / r);
        (l, r * g0.to_f64().powf(-1.0 / r) * qx)
    });
    QTildeIdentities { optional_gap: discrepancy(&lhs, &optional), increasing_gap, lr_sides }
}

/// `κ(a) = 3^{1/a} (5 + max(a, 1/a)^{1/a})`.
pub fn kappa(a: f64) -> f64 {
    3f64.powf(1.0 / a) * (5.0 + a.max(1.0 / a).powf(1.0 / a))
}

/// Left and right sides of the four weighted `P`-versus-`Q̃` inequalities.
#[derive(Clone, Debug, Default, Serialize, PartialEq)]
pub struct WeightedInequalities {
    /// `E[sup Ẽ_s|Y_s|^p]` vs `G_0^{-1} E^Q̃[sup |Y_s|^p]`.
    pub sup: (f64, f64),
    /// `E[(Σ Ẽ_{s−1}^a ΔK_s)^{1/a}]` vs `κ(a)/G_0 E^Q̃[K^{1/a} + Σ G̃_s (ΔK_s)^{1/a}]`.
    pub increasing: (f64, f64),
    /// `E[(Σ Ẽ_{s−1}^{2/p} H_s ΔN_s²)^{p/2}]` vs the `G`-optional bound.
    pub bracket_g: (f64, f64),
    /// The same for `F`-optional `H` with the `D^{o,F}` bound.
    pub bracket_f: (f64, f64),
}

impl WeightedInequalities {
    /// Smallest `rhs − lhs` relative to `1 + rhs`.
    pub fn slack(&self) -> f64 {
        [self.sup, self.increasing, self.bracket_g, self.bracket_f]
            .iter()
            .map(|(l, r)| (r - l) / (1.0 + r.abs()))
            .fold(f64::INFINITY, f64::min)
    }
}

/// `K` must be nondecreasing with `K_0 = 0`; `hg` and `hf` nonnegative.
#[allow(clippy::too_many_arguments)]
pub fn weighted_inequalities<S: Scalar>(
    model: &RandomTimeModel<S>,
    big_t: usize,
    y: &GProcess<S>,
    k_proc: &GProcess<S>,
    hg: &GProcess<S>,
    hf: &FProcess<S>,
    p: f64,
    a: f64,
) -> WeightedInequalities {
    let n = model.depth();
    let pw = Window::under(model, MeasureKind::P, big_t);
    let qw = Window::under(model, MeasureKind::QTilde, big_t);
    let g0 = model.g().at(0, 0).to_f64();
    let et = model.epsilon_tilde().to_f64();
    let gt = model.g_tilde().to_f64();
    let dd = model.d_dof().to_f64();
    let e = |t: usize, path: usize| *et.at(t, path >> (n - t));
    let g_tilde = |t: usize, path: usize| *gt.at(t, path >> (n - t));
    let dn = |s: usize, path: usize, k: usize| model.dn_g(s, path >> (n - s), s != k).to_f64();

    let sup_l = pw.expect(|path, k, end| (0..=end).map(|s| e(s, path) * on(y, s, path, k).abs().powf(p)).fold(0.0, f64::max));
    let sup_r = qw.expect(|path, k, end| (0..=end).map(|s| on(y, s, path, k).abs().powf(p)).fold(0.0, f64::max)) / g0;

    let inc_l = pw.expect(|path, k, end| {
        (1..=end).map(|s| e(s - 1, path).powf(a) * step(k_proc, s, path, k)).sum::<f64>().powf(1.0 / a)
    });
    let inc_r = kappa(a) / g0
        * qw.expect(|path, k, end| {
            on(k_proc, end, path, k).powf(1.0 / a)
                + (1..=end).map(|s| g_tilde(s, path) * step(k_proc, s, path, k).powf(1.0 / a)).sum::<f64>()
        });

    let two_p = 2.0 / p;
    let hgv = |s: usize, path: usize, k: usize| on(hg, s, path, k);
    let hfv = |s: usize, path: usize| hf.at(s, path >> (n - s)).to_f64();
    let bracket = |hv: &dyn Fn(usize, usize, usize) -> f64, weighted: bool, path: usize, k: usize, end: usize| {
        (1..=end)
            .map(|s| {
                let w = if weighted { e(s - 1, path).powf(two_p) } else { 1.0 };
                w * hv(s, path, k) * dn(s, path, k).powi(2)
            })
            .sum::<f64>()
            .powf(p / 2.0)
    };
    let hg_fn = |s: usize, path: usize, k: usize| hgv(s, path, k);
    let hf_fn = |s: usize, path: usize, _k: usize| hfv(s, path);
    let bg_l = pw.expect(|path, k, end| bracket(&hg_fn, true, path, k, end));
    let bg_r = kappa(two_p) / g0
        * qw.expect(|path, k, end| {
            bracket(&hg_fn, false, path, k, end)
                + (1..=end).map(|s| hgv(s, path, k).powf(p / 2.0) * g_tilde(s, path) * dn(s, path, k).abs()).sum::<f64>()
        });
    let bf_l = pw.expect(|path, k, end| bracket(&hf_fn, true, path, k, end));
    let bf_r = kappa(two_p) / g0
        * qw.expect(|path, k, end| {
            let before = (1..=big_t.min(k.saturating_sub(1)))
                .map(|s| hfv(s, path).powf(p / 2.0) * dd.at(s, path >> (n - s)))
                .sum::<f64>();
            bracket(&hf_fn, false, path, k, end) + 2.0 * before
        });
    WeightedInequalities { sup: (sup_l, sup_r), increasing: (inc_l, inc_r), bracket_g: (bg_l, bg_r), bracket_f: (bf_l, bf_r) }
}

/// `|E^{Q̃_T}[X_{T∧τ}] − G_0 E[Σ_{s≤N} X_s ΔV^F_s]|` against `2 c sup G_T`,
/// where `c = sup X / ℰ(G_−^{-1}·m)`.
#[derive(Clone, Debug, Serialize, PartialEq)]
pub struct LimitGap {
    pub horizon: usize,
    pub gap: f64,
    pub bound: f64,
}

/// Limit gaps on a closed model for `T = 0..=N`; `X ≥ 0` with `X_0 = 0`.
pub fn qtilde_limit_gaps<S: Scalar>(model: &RandomTimeModel<S>, x: &FProcess<S>) -> Result<Vec<LimitGap>> {
    if model.mode() != Mode::Closed {
        return Err(HorizonError::Validation("limit gaps need a closed model".into()));
    }
    let n = model.depth();
    let vf = model.v_f();
    let g0 = model.g().at(0, 0).clone();
    let paths = model.space().path_prob();
    let limit = g0
        * &sum(paths.iter().enumerate().map(|(path, pp)| {
            pp.clone() * &sum((1..=n).map(|s| x.on_path(path, s).clone() * &vf.increment(s, path >> (n - s))))
        }));
    let em = model.exp_m();
    let c = (0..=n)
        .flat_map(|t| (0..1usize << t).map(move |a| (t, a)))
        .filter(|&(t, a)| !em.at(t, a).is_zero())
        .map(|(t, a)| (x.at(t, a).clone() / em.at(t, a)).to_f64())
        .fold(0.0, f64::max);
    Ok((0..=n)
        .map(|big_t| {
            let q = model.qtilde(big_t);
            let v = q.expect(|path, k| x.on_path(path, k.min(big_t)).clone());
            let sup_g = model.g().slice(big_t).iter().map(|g| g.to_f64()).fold(0.0, f64::max);
            LimitGap { horizon: big_t, gap: discrepancy(&v, &limit), bound: 2.0 * c * sup_g }
        })
        .collect())
}
