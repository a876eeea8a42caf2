//! Projections between `F` and `G`, the `G → F` reduction pair, the
//! integrability and class-D transfers, and the stopping-time lift.

use serde::Serialize;

use crate::fspace::{FProcess, Filtration, StoppingRule};
use crate::random_time::{g_width, outcome_index, GAtom, GProcess, Mode, RandomTimeModel};
use crate::scalar::{discrepancy, Scalar};
use crate::{HorizonError, Result};

/// `X^G = X^F` before `τ`, `X^G_τ = k^(pr)_τ`, and the `μ = P⊗D` split of `k^(pr)`.
///
/// The kernels are stored on the diagonal: `k_pr.at(s, a)` is the value
/// taken when `τ = s` on the prefix `a`. Entries at `s = 0` are unused.
#[derive(Clone, Debug, PartialEq)]
pub struct ReductionPair<S> {
    pub x_f: FProcess<S>,
    pub k_pr: FProcess<S>,
    pub k_op: FProcess<S>,
    pub k_f: FProcess<S>,
}

/// `E[X_t | F_t]` under `P`.
pub fn optional_projection_f<S: Scalar>(model: &RandomTimeModel<S>, x: &GProcess<S>) -> FProcess<S> {
    let n = model.depth();
    let space = model.space();
    let mut out = FProcess::constant(n, S::zero());
    for t in 0..=n {
        let masses = model.p().g_masses(t);
        let mut num = vec![S::zero(); 1usize << t];
        for (i, m) in masses.iter().enumerate() {
            let a = GAtom::from_index(t, i).prefix();
            num[a] = num[a].clone() + &(m.clone() * &x.slice(t)[i]);
        }
        for (a, v) in num.into_iter().enumerate() {
            out.set(t, a, v / space.atom_prob(t, a));
        }
    }
    out
}

/// Optional and predictable dual projections of a `G`-adapted finite-variation process.
///
/// Returns the cumulated processes with increments `E[ΔV_t | F_t]` and `E[ΔV_t | F_{t−1}]`.
pub fn dual_projections<S: Scalar>(
    model: &RandomTimeModel<S>,
    v: &GProcess<S>,
) -> (FProcess<S>, FProcess<S>) {
    let n = model.depth();
    let space = model.space();
    let mut opt = FProcess::constant(n, S::zero());
    let mut pred = FProcess::constant(n, S::zero());
    for t in 1..=n {
        let masses = model.p().g_masses(t);
        let mut num = vec![S::zero(); 1usize << t];
        for (i, m) in masses.iter().enumerate() {
            let atom = GAtom::from_index(t, i);
            let dv = v.slice(t)[i].clone() - v.get(t - 1, atom.parent(t));
            let a = atom.prefix();
            num[a] = num[a].clone() + &(m.clone() * &dv);
        }
        for a in 0..1usize << t {
            let inc = num[a].clone() / space.atom_prob(t, a);
            opt.set(t, a, opt.at(t - 1, a >> 1).clone() + &inc);
        }
        for a in 0..1usize << (t - 1) {
            let joint = num[2 * a].clone() + &num[2 * a + 1];
            let inc = joint / space.atom_prob(t - 1, a);
            for c in [2 * a, 2 * a + 1] {
                pred.set(t, c, pred.at(t - 1, a).clone() + &inc);
            }
        }
    }
    (opt, pred)
}

/// Compute the reduction pair of a `G`-process stopped at `τ`.
pub fn reduce_g_to_f<S: Scalar>(model: &RandomTimeModel<S>, x: &GProcess<S>) -> Result<ReductionPair<S>> {
    let n = model.depth();
    if x.depth() != n {
        return Err(HorizonError::Invalid("process depth does not match the model".into()));
    }
    if !x.is_stopped_at_tau() {
        return Err(HorizonError::Invalid("process is not stopped at τ".into()));
    }
    // X^F = o,F(X^G 1_{[0,τ[}) / G, computed from atom masses.
    let alive_part = x.map(|_, atom, v| match atom {
        GAtom::Alive(_) => v.clone(),
        GAtom::Dead { .. } => S::zero(),
    });
    let proj = optional_projection_f(model, &alive_part);
    let g = model.g();
    let x_f = FProcess::from_fn(n, |t, a| {
        let gv = g.at(t, a);
        if gv.is_zero() {
            S::zero()
        } else {
            proj.at(t, a).clone() / gv
        }
    });
    let k_pr = FProcess::from_fn(n, |s, a| if s == 0 { S::zero() } else { x.at_death(s, a).clone() });
    // μ-optional projection: weighted average of k^(pr) over the fibre {τ = s}
    // inside each F_s-atom; off the support of μ it is left equal to k^(pr).
    let k_op = FProcess::from_fn(n, |s, a| {
        if s == 0 {
            return S::zero();
        }
        let fiber = model.p().g_masses(s)[GAtom::Dead { s, a }.index(s)].clone();
        if fiber.is_zero() {
            k_pr.at(s, a).clone()
        } else {
            fiber.clone() * k_pr.at(s, a) / &fiber
        }
    });
    let k_f = FProcess::from_fn(n, |s, a| k_pr.at(s, a).clone() - k_op.at(s, a));
    Ok(ReductionPair { x_f, k_pr, k_op, k_f })
}

/// `X^F I_{[0,τ[} + k^(pr)·D`.
pub fn reconstruct<S: Scalar>(pair: &ReductionPair<S>) -> GProcess<S> {
    GProcess::stopped(
        pair.x_f.depth(),
        |t, a| pair.x_f.at(t, a).clone(),
        |s, a| pair.k_pr.at(s, a).clone(),
    )
}

/// Checks attached to a reduction pair, as largest discrepancies.
#[derive(Clone, Debug, Serialize)]
pub struct ReductionReport {
    /// `X^G` against the reconstruction, on atoms of positive mass.
    pub reconstruction: f64,
    /// `(X^G)^τ = (X^F)^τ + (k^(pr) − X^F)·D`.
    pub decomposition: f64,
    /// Duality of `k^(op)` against every atom indicator of `O(F)`.
    pub duality: f64,
    /// `k^(F)` has zero `μ`-optional projection.
    pub k_f_projection: f64,
}

pub fn check_reduction<S: Scalar>(
    model: &RandomTimeModel<S>,
    x: &GProcess<S>,
    pair: &ReductionPair<S>,
) -> ReductionReport {
    let n = model.depth();
    let rec = reconstruct(pair);
    let mut reconstruction = 0.0f64;
    let mut decomposition = 0.0f64;
    for t in 0..=n {
        let masses = model.p().g_masses(t);
        for i in 0..g_width(t) {
            if masses[i].is_zero() {
                continue;
            }
            let atom = GAtom::from_index(t, i);
            reconstruction = reconstruction.max(discrepancy(&rec.slice(t)[i], &x.slice(t)[i]));
            let rhs = match atom {
                GAtom::Alive(a) => pair.x_f.at(t, a).clone(),
                GAtom::Dead { s, a } => {
                    let a_s = a >> (t - s);
                    let xf = pair.x_f.at(s, a_s).clone();
                    xf.clone() + &(pair.k_pr.at(s, a_s).clone() - &xf)
                }
            };
            decomposition = decomposition.max(discrepancy(&rhs, &x.slice(t)[i]));
        }
    }
    let mut duality = 0.0f64;
    let mut k_f_projection = 0.0f64;
    for s in 1..=n {
        let masses = model.p().g_masses(s);
        for a in 0..1usize << s {
            let mu = &masses[GAtom::Dead { s, a }.index(s)];
            let lhs = mu.clone() * pair.k_pr.at(s, a);
            let rhs = mu.clone() * pair.k_op.at(s, a);
            duality = duality.max(discrepancy(&lhs, &rhs));
            k_f_projection = k_f_projection.max(discrepancy(&(mu.clone() * pair.k_f.at(s, a)), &S::zero()));
        }
    }
    ReductionReport { reconstruction, decomposition, duality, k_f_projection }
}

/// Both sides of `E[X | G_t] 1_{t<τ} = G_t^{-1} E[X 1_{t<τ} | F_t] 1_{t<τ}`
/// for a random variable `X[path][k]`; returns the largest gap over `t`
/// and alive atoms of positive mass.
pub fn g_projection_identity<S: Scalar>(model: &RandomTimeModel<S>, x: &[Vec<S>]) -> f64 {
    let n = model.depth();
    let p = model.p();
    let mut worst = 0.0f64;
    for t in 0..=n {
        let masses = p.g_masses(t);
        let mut num_g = vec![S::zero(); 1usize << t];
        let mut num_f = vec![S::zero(); 1usize << t];
        for (path, k, w) in p.outcomes() {
            let i = outcome_index(n, t, path, k);
            let a = path >> (n - t);
            if i == a && k > t {
                let v = w.clone() * &x[path][k];
                num_g[a] = num_g[a].clone() + &v;
                num_f[a] = num_f[a].clone() + &v;
            }
        }
        for a in 0..1usize << t {
            if masses[a].is_zero() {
                continue;
            }
            let lhs = num_g[a].clone() / &masses[a];
            let rhs = num_f[a].clone() / model.space().atom_prob(t, a) / model.g().at(t, a);
            worst = worst.max(discrepancy(&lhs, &rhs));
        }
    }
    worst
}

/// The three quantities of the integrability transfer and the sandwich check.
#[derive(Clone, Debug, Serialize)]
pub struct IntegrabilityReport {
    pub q: f64,
    /// `E[sup_t |X^G_t|^q]`.
    pub sup_xg: f64,
    /// `‖k^(pr)‖^q` in `L^q(P⊗D)`.
    pub k_norm: f64,
    /// `E[Σ_t sup_{s<t} |X^F_s|^q ΔD^{o,F}_t]`, plus the survival term in open mode.
    pub xf_term: f64,
    /// `max ≤ sum ≤ 2·max` for `sup_xg` against `k_norm + xf_term`.
    pub sandwich: bool,
}

pub fn integrability_transfer<S: Scalar>(
    model: &RandomTimeModel<S>,
    x: &GProcess<S>,
    q: f64,
) -> Result<IntegrabilityReport> {
    if q < 1.0 {
        return Err(HorizonError::Invalid(format!("exponent q = {q} must be at least 1")));
    }
    let pair = reduce_g_to_f(model, x)?;
    let n = model.depth();
    let pw = |v: &S| v.to_f64().abs().powf(q);
    let mut sup_xg = 0.0;
    let mut k_norm = 0.0;
    for (path, k, w) in model.p().outcomes() {
        let w = w.to_f64();
        let sup = (0..=n).map(|t| pw(x.on_outcome(t, path, k))).fold(0.0, f64::max);
        sup_xg += w * sup;
        if k <= n {
            k_norm += w * pw(pair.k_pr.on_path(path, k));
        }
    }
    let space = model.space();
    let mut xf_term = 0.0;
    for path in 0..space.n_paths() {
        let pp = space.path_prob()[path].to_f64();
        let mut run = 0.0f64;
        for t in 1..=n {
            run = run.max(pw(pair.x_f.on_path(path, t - 1)));
            xf_term += pp * run * model.d_dof().on_path(path, t).to_f64();
        }
        if model.mode() == Mode::Open {
            run = run.max(pw(pair.x_f.on_path(path, n)));
            xf_term += pp * run * model.g().on_path(path, n).to_f64();
        }
    }
    let total = k_norm + xf_term;
    let tol = 1e-12 * (1.0 + sup_xg);
    let sandwich = sup_xg <= total + tol && total <= 2.0 * sup_xg + tol;
    Ok(IntegrabilityReport { q, sup_xg, k_norm, xf_term, sandwich })
}

/// Class-D transfer: for every `F`-rule `σ` and cutoff `c`,
/// `E[|X^F_σ| G_σ 1_{|X^F_σ|G_σ > c}] ≤ E[|X^G_σ| 1_{σ<τ} 1_{|X^G_σ| > c}]`.
/// Returns the largest `lhs − rhs` (nonpositive when the transfer holds).
pub fn class_d_transfer<S: Scalar>(
    model: &RandomTimeModel<S>,
    x: &GProcess<S>,
    cutoffs: &[S],
    budget: u128,
) -> Result<S> {
    let pair = reduce_g_to_f(model, x)?;
    let n = model.depth();
    let space = model.space();
    let mut worst: Option<S> = None;
    crate::fspace::for_each_stopping_rule(n, Filtration::F, 0, n, budget, |rule| {
        for c in cutoffs {
            let mut lhs = S::zero();
            for path in 0..space.n_paths() {
                let t = rule.time_on_path(path);
                let v = pair.x_f.on_path(path, t).abs() * model.g().on_path(path, t);
                if &v > c {
                    lhs = lhs + &(space.path_prob()[path].clone() * &v);
                }
            }
            let mut rhs = S::zero();
            for (path, k, w) in model.p().outcomes() {
                let t = rule.time_on_path(path);
                if t < k {
                    let v = x.on_outcome(t, path, k).abs();
                    if &v > c {
                        rhs = rhs + &(w.clone() * &v);
                    }
                }
            }
            let gap = lhs - &rhs;
            if worst.as_ref().map_or(true, |w| &gap > w) {
                worst = Some(gap);
            }
        }
    })?;
    Ok(worst.unwrap_or_else(S::zero))
}

/// Lift a `G`-rule `σ^G` with `σ_1 ≤ σ^G ≤ σ_2 ∧ τ` to an `F`-rule
/// `σ^F` with `σ_1 ≤ σ^F ≤ σ_2` and `σ^F ∧ τ = σ^G`.
pub fn lift_stopping_time<S: Scalar>(
    model: &RandomTimeModel<S>,
    sigma_g: &StoppingRule,
    sigma_1: &StoppingRule,
    sigma_2: &StoppingRule,
) -> Result<StoppingRule> {
    let n = model.depth();
    if sigma_g.filtration != Filtration::G || sigma_1.filtration != Filtration::F || sigma_2.filtration != Filtration::F {
        return Err(HorizonError::Invalid("expected one G-rule and two F-rules".into()));
    }
    for r in [sigma_g, sigma_1, sigma_2] {
        r.validate()?;
    }
    for (path, k, _) in model.p().outcomes() {
        let g = sigma_g.time_on_outcome(path, k);
        if sigma_1.time_on_path(path) > g || g > sigma_2.time_on_path(path).min(k) {
            return Err(HorizonError::Invalid(format!(
                "ordering σ1 ≤ σG ≤ σ2 ∧ τ fails on outcome ({}, {k})",
                crate::fspace::path_label(path, n)
            )));
        }
    }
    // An F-time agreeing with σ^G before τ: the same stop flags read in F.
    let sigma = StoppingRule { filtration: Filtration::F, ..sigma_g.clone() };
    let times: Vec<usize> = (0..1usize << n)
        .map(|p| sigma.time_on_path(p).max(sigma_1.time_on_path(p)).min(sigma_2.time_on_path(p)))
        .collect();
    let from = sigma_1.from.min(sigma_g.from);
    let to = sigma_2.to.max(sigma_g.to);
    let lifted = StoppingRule::from_path_times(Filtration::F, n, from, to, &times)?;
    for (path, k, _) in model.p().outcomes() {
        let f = lifted.time_on_path(path);
        if f < sigma_1.time_on_path(path) || f > sigma_2.time_on_path(path) || f.min(k) != sigma_g.time_on_outcome(path, k) {
            return Err(HorizonError::Invalid("lifted rule fails its defining conditions".into()));
        }
    }
    Ok(lifted)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::random_time::{constant_hazard, model_m2};
    use crate::scalar::Rational;

    fn q(n: i64, d: i64) -> Rational {
        Rational::from_ratio(n, d)
    }

    #[test]
    fn projection_of_alive_indicator_is_g() {
        let m = model_m2::<Rational>();
        let ind = GProcess::stopped(2, |_, _| q(1, 1), |_, _| q(0, 1));
        assert_eq!(&optional_projection_f(&m, &ind), m.g());
        let closed = GProcess::from_fn(2, |t, atom| match atom {
            GAtom::Alive(_) => q(1, 1),
            GAtom::Dead { s, .. } => if s == t { q(1, 1) } else { q(0, 1) },
        });
        assert_eq!(&optional_projection_f(&m, &closed), m.g_tilde());
    }

    #[test]
    fn dual_projection_of_default_indicator() {
        let m = model_m2::<Rational>();
        let (opt, _) = dual_projections(&m, &m.default_indicator());
        assert_eq!(*opt.at(1, 0), q(1, 2));
        let inc: Vec<_> = (0..4).map(|a| opt.increment(2, a)).collect();
        assert_eq!(inc, vec![q(1, 5), q(4, 5), q(2, 5), q(3, 5)]);
        let cox = constant_hazard(3, q(1, 1), q(1, 2), false).unwrap();
        let (opt, pred) = dual_projections(&cox, &cox.default_indicator());
        for t in 1..=3 {
            assert_eq!(opt.increment(t, 0), q(1, 1 << t));
            assert_eq!(pred.increment(t, 0), q(1, 1 << t));
        }
    }

    #[test]
    fn default_indicator_pair() {
        let m = model_m2::<Rational>();
        let pair = reduce_g_to_f(&m, &m.default_indicator()).unwrap();
        assert!(pair.x_f.slices().iter().flatten().all(|v| *v == q(0, 1)));
        assert_eq!(*pair.k_pr.at(2, 3), q(1, 1));
        assert_eq!(*pair.k_op.at(1, 0), q(1, 1));
        assert!(pair.k_f.slices().iter().flatten().all(|v| *v == q(0, 1)));
    }

    #[test]
    fn stopped_driver_pair() {
        let m = constant_hazard(3, q(1, 1), q(1, 3), false).unwrap();
        let w = m.space().driver().clone();
        let pair = reduce_g_to_f(&m, &m.stop_f(&w)).unwrap();
        assert_eq!(pair.x_f, w);
        for s in 1..=3 {
            for a in 0..1usize << s {
                assert_eq!(pair.k_pr.at(s, a), w.at(s, a));
            }
        }
    }

    #[test]
    fn rejects_unstopped_process() {
        let m = model_m2::<Rational>();
        let x = GProcess::from_fn(2, |t, _| q(t as i64, 1));
        assert!(reduce_g_to_f(&m, &x).is_err());
    }

    #[test]
    fn lift_constant_and_capped_rules() {
        let m = model_m2::<Rational>();
        let g1 = StoppingRule::constant(Filtration::G, 2, 0, 1, 1);
        let lo = StoppingRule::constant(Filtration::F, 2, 0, 0, 0);
        let hi = StoppingRule::constant(Filtration::F, 2, 2, 2, 2);
        let lifted = lift_stopping_time(&m, &g1, &lo, &hi).unwrap();
        assert!((0..4).all(|p| lifted.time_on_path(p) == 1));
        // first time W ≤ −√Δt, capped at τ
        let hit = StoppingRule::first_hitting(Filtration::G, 2, 0, 2, |t, a| {
            *m.space().driver().at(t, a) <= q(-1, 1)
        });
        let lifted = lift_stopping_time(&m, &hit, &lo, &hi).unwrap();
        for (path, k, _) in m.p().outcomes() {
            assert_eq!(lifted.time_on_path(path).min(k), hit.time_on_outcome(path, k));
        }
    }
}
