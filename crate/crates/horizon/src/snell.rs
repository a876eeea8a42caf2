//! Snell envelopes by backward induction, a brute-force stopping oracle,
//! and the `G → F` transforms of envelopes and optimal times.

use serde::{Deserialize, Serialize};

use crate::fspace::{FProcess, Filtration, StoppingRule};
use crate::lattice::{flags_to_rule, Lattice};
use crate::projections::{reduce_g_to_f, ReductionPair};
use crate::random_time::{cumulate, GAtom, GProcess, RandomTimeModel};
use crate::scalar::{discrepancy, Scalar};
use crate::{HorizonError, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum MeasureKind {
    P,
    QTilde,
}

/// Build the lattice for a filtration/measure pair on the window `[0, horizon]`.
///
/// Under `Q̃` the measure is `Q̃_T` with `T = horizon`; on `F` the path
/// marginal is used.
pub fn lattice_for<S: Scalar>(
    model: &RandomTimeModel<S>,
    filtration: Filtration,
    measure: MeasureKind,
    horizon: usize,
) -> Result<Lattice<S>> {
    let full = match measure {
        MeasureKind::P => model.p().clone(),
        MeasureKind::QTilde => model.qtilde(horizon),
    };
    match filtration {
        Filtration::F => Lattice::f(model.space(), &full.path_marginal(), horizon),
        Filtration::G => Lattice::g(&full, horizon),
    }
}

#[derive(Clone, Debug)]
pub struct SnellResult<S> {
    /// Envelope on `[from, horizon]`; other entries hold the reward.
    pub envelope: Vec<Vec<S>>,
    /// One-step predictions `E[S_{t+1} | node]` (`None` at terminal or null nodes).
    pub continuation: Vec<Vec<Option<S>>>,
    pub min_flags: Vec<Vec<bool>>,
    pub max_flags: Vec<Vec<bool>>,
    pub minimal_time: StoppingRule,
    pub maximal_time: StoppingRule,
    /// Envelope at the `from` nodes (`None` on null nodes).
    pub optimal_value: Vec<Option<S>>,
    pub from: usize,
}

/// `S_t = max(X_t, E[S_{t+1} | ·_t])` with `S = X` on terminal nodes.
///
/// The minimal optimal rule stops at the first node with `S = X`; the
/// maximal one stops before the first strict decrease of the predictable
/// part of `S`.
pub fn snell_backward<S: Scalar>(lat: &Lattice<S>, reward: &[Vec<S>], from: usize) -> Result<SnellResult<S>> {
    lat.check_shape(reward)?;
    let n = lat.depth();
    if from > lat.horizon() {
        return Err(HorizonError::Invalid(format!(
            "window [{from}, {}] is empty",
            lat.horizon()
        )));
    }
    let mut env: Vec<Vec<S>> = reward.to_vec();
    let mut cont: Vec<Vec<Option<S>>> = (0..=n).map(|t| vec![None; lat.width(t)]).collect();
    let mut min_flags: Vec<Vec<bool>> = (0..=n).map(|t| vec![false; lat.width(t)]).collect();
    let mut max_flags = min_flags.clone();
    for t in (from..=n).rev() {
        for i in 0..lat.width(t) {
            if lat.is_terminal(t, i) {
                min_flags[t][i] = true;
                max_flags[t][i] = true;
                continue;
            }
            match lat.cond_next(&env[t + 1], t, i) {
                None => {
                    min_flags[t][i] = true;
                    max_flags[t][i] = true;
                }
                Some(c) => {
                    let r = &reward[t][i];
                    let s = S::max_of(r, &c);
                    min_flags[t][i] = &s == r;
                    max_flags[t][i] = c < s;
                    env[t][i] = s;
                    cont[t][i] = Some(c);
                }
            }
        }
    }
    let optimal_value = (0..lat.width(from))
        .map(|i| (!lat.mass(from, i).is_zero()).then(|| env[from][i].clone()))
        .collect();
    let minimal_time = flags_to_rule(lat.kind(), &min_flags, from, lat.horizon());
    let maximal_time = flags_to_rule(lat.kind(), &max_flags, from, lat.horizon());
    Ok(SnellResult {
        envelope: env,
        continuation: cont,
        min_flags,
        max_flags,
        minimal_time,
        maximal_time,
        optimal_value,
        from,
    })
}

#[derive(Clone, Debug)]
pub struct BruteForce<S> {
    pub value: Vec<Option<S>>,
    /// Stop flags of the rules attaining the maximum at every `from` node.
    pub argmax: Vec<Vec<Vec<bool>>>,
    pub visited: u128,
}

/// Maximise `E[X_θ | node]` over every stopping rule on the window.
pub fn brute_force_snell<S: Scalar>(
    lat: &Lattice<S>,
    reward: &[Vec<S>],
    from: usize,
    budget: u128,
) -> Result<BruteForce<S>> {
    lat.check_shape(reward)?;
    let width = lat.width(from);
    let mut best: Vec<Option<S>> = vec![None; width];
    let mut argmax: Vec<Vec<Vec<bool>>> = Vec::new();
    let visited = lat.for_each_rule(from, budget, |flags| {
        let v = lat.rule_value(reward, flags, from);
        let mut improved = false;
        let mut all_tie = true;
        for i in 0..width {
            if let Some(x) = &v[i] {
                match &best[i] {
                    Some(b) if x < b => all_tie = false,
                    Some(b) if x == b => {}
                    _ => {
                        best[i] = Some(x.clone());
                        improved = true;
                    }
                }
            }
        }
        if improved {
            argmax.clear();
        }
        if improved || all_tie {
            let attains = (0..width).all(|i| match (&v[i], &best[i]) {
                (Some(x), Some(b)) => x == b,
                _ => true,
            });
            if attains {
                argmax.push(flags.to_vec());
            }
        }
    })?;
    // An argmax set collected before the final improvement is stale; rescan.
    argmax.retain(|flags| {
        let v = lat.rule_value(reward, flags, from);
        (0..width).all(|i| match (&v[i], &best[i]) {
            (Some(x), Some(b)) => x == b,
            _ => true,
        })
    });
    Ok(BruteForce { value: best, argmax, visited })
}

/// Stopping instant of lattice flags on every outcome of positive `P`-mass.
pub fn times_on_outcomes<S: Scalar>(
    model: &RandomTimeModel<S>,
    lat: &Lattice<S>,
    flags: &[Vec<bool>],
    from: usize,
) -> Vec<(usize, usize, usize)> {
    model
        .p()
        .outcomes()
        .map(|(p, k, _)| (p, k, lat.time_on_outcome(flags, from, p, k)))
        .collect()
}

// ---------------------------------------------------------------------------
// Transforms
// ---------------------------------------------------------------------------

/// Left and right sides of an envelope identity with their gap.
#[derive(Clone, Debug)]
pub struct TransformCertificate<S: Scalar> {
    pub lhs: GProcess<S>,
    pub rhs: GProcess<S>,
    pub f_envelope: FProcess<S>,
    /// Largest gap on atoms of positive mass at times `≤ horizon`.
    pub discrepancy: f64,
}

fn max_gap<S: Scalar>(lat: &Lattice<S>, a: &GProcess<S>, b: &GProcess<S>, horizon: usize) -> f64 {
    let mut worst = 0.0f64;
    for t in 0..=horizon {
        for i in 0..lat.width(t) {
            if !lat.mass(t, i).is_zero() {
                worst = worst.max(discrepancy(&a.slice(t)[i], &b.slice(t)[i]));
            }
        }
    }
    worst
}

/// `V = k^(op)·D^{o,F}`.
fn v_process<S: Scalar>(model: &RandomTimeModel<S>, pair: &ReductionPair<S>) -> FProcess<S> {
    cumulate(model.d_dof(), |t, a| pair.k_op.at(t, a).clone() * model.d_dof().at(t, a))
}

/// Snell envelope of a stopped `G`-reward under `(G, P)` against its
/// representation through the `(F, P)` envelope of `X^F G + k^(op)·D^{o,F}`.
pub fn snell_transform_gp<S: Scalar>(model: &RandomTimeModel<S>, xg: &GProcess<S>) -> Result<TransformCertificate<S>> {
    let n = model.depth();
    let pair = reduce_g_to_f(model, xg)?;
    let v = v_process(model, &pair);
    let g = model.g();
    let reward_f = FProcess::from_fn(n, |t, a| pair.x_f.at(t, a).clone() * g.at(t, a) + v.at(t, a));
    let lat_f = lattice_for(model, Filtration::F, MeasureKind::P, n)?;
    let sf = snell_backward(&lat_f, reward_f.slices(), 0)?;
    let sf = FProcess::from_slices(sf.envelope)?;

    let lat_g = lattice_for(model, Filtration::G, MeasureKind::P, n)?;
    let lhs = GProcess::from_slices(snell_backward(&lat_g, xg.slices(), 0)?.envelope)?;

    let m = model.martingale_m();
    let gt = model.g_tilde();
    let dtm = |s: usize, a: usize| {
        let dm = m.increment(s, a);
        dm.clone() - &(dm.clone() * &dm / gt.at(s, a))
    };
    let t_m_part = model.integrate_g(
        |s, a| {
            let gp = g.at(s - 1, a >> 1);
            Some(v.at(s - 1, a >> 1).clone() / &(gp.clone() * gp))
        },
        dtm,
        dtm,
    )?;
    // (V/G)_s ΔN_s equals V_s/G̃_s on a death step, defined even where G_s = 0.
    let n_part = model.integrate_g(
        |_, _| Some(S::one()),
        |s, a| {
            let gs = g.at(s, a);
            if gs.is_zero() {
                return S::zero();
            }
            (pair.k_op.at(s, a).clone() + &(v.at(s, a).clone() / gs)) * &model.dn_g(s, a, true)
        },
        |s, a| pair.k_op.at(s, a).clone() * &model.dn_g(s, a, false) + &(v.at(s, a).clone() / gt.at(s, a)),
    )?;
    let rhs = GProcess::from_fn(n, |t, atom| {
        let base = match atom {
            GAtom::Alive(a) => {
                let gv = g.at(t, a);
                if gv.is_zero() {
                    S::zero()
                } else {
                    sf.at(t, a).clone() / gv
                }
            }
            GAtom::Dead { s, a } => pair.k_f.at(s, a >> (t - s)).clone(),
        };
        base + &t_m_part.get(t, atom).clone() + n_part.get(t, atom)
    });
    let discrepancy = max_gap(&lat_g, &lhs, &rhs, n);
    Ok(TransformCertificate { lhs, rhs, f_envelope: sf, discrepancy })
}

/// Snell envelope of `(X^G)^T` under `(G, Q̃_T)` against its representation
/// through the `(F, P)` envelope of `(X^F Ẽ + k^(op)·V^F)^T`.
pub fn snell_transform_gq<S: Scalar>(
    model: &RandomTimeModel<S>,
    xg: &GProcess<S>,
    horizon: usize,
) -> Result<TransformCertificate<S>> {
    let n = model.depth();
    let pair = reduce_g_to_f(model, xg)?;
    let et = model.epsilon_tilde();
    let vf = model.v_f();
    let j = cumulate(&vf, |t, a| pair.k_op.at(t, a).clone() * &vf.increment(t, a));
    let reward_f = FProcess::from_fn(n, |t, a| pair.x_f.at(t, a).clone() * et.at(t, a) + j.at(t, a));
    let lat_f = lattice_for(model, Filtration::F, MeasureKind::P, horizon)?;
    let sf = FProcess::from_slices(snell_backward(&lat_f, reward_f.slices(), 0)?.envelope)?;

    let lat_g = lattice_for(model, Filtration::G, MeasureKind::QTilde, horizon)?;
    let stopped = xg.stop_at(horizon);
    let lhs = GProcess::from_slices(snell_backward(&lat_g, stopped.slices(), 0)?.envelope)?;

    // (J/Ẽ)_s ΔN_s equals J_s/Ẽ_{s−1} on a death step.
    let n_part = model.integrate_g(
        |_, _| Some(S::one()),
        |s, a| {
            let e = et.at(s, a);
            if e.is_zero() {
                return S::zero();
            }
            (pair.k_op.at(s, a).clone() + &(j.at(s, a).clone() / e)) * &model.dn_g(s, a, true)
        },
        |s, a| {
            let ep = et.at(s - 1, a >> 1);
            let jump = if ep.is_zero() { S::zero() } else { j.at(s, a).clone() / ep };
            pair.k_op.at(s, a).clone() * &model.dn_g(s, a, false) + &jump
        },
    )?;
    let rhs = GProcess::from_fn(n, |t, atom| {
        let base = match atom {
            GAtom::Alive(a) => {
                let e = et.at(t, a);
                if e.is_zero() {
                    S::zero()
                } else {
                    sf.at(t, a).clone() / e
                }
            }
            GAtom::Dead { s, a } => pair.k_f.at(s, a >> (t - s)).clone(),
        };
        base + n_part.get(t, atom)
    })
    .stop_at(horizon);
    let discrepancy = max_gap(&lat_g, &lhs, &rhs, horizon);
    Ok(TransformCertificate { lhs, rhs, f_envelope: sf, discrepancy })
}

#[derive(Clone, Debug, Serialize)]
pub struct OptimalTimeReport {
    /// Outcomes where the minimal times disagree.
    pub minimal_mismatches: usize,
    /// Outcomes where the maximal times disagree.
    pub maximal_mismatches: usize,
    pub outcomes: usize,
}

/// Compare `θ^G_* = θ^F_* ∧ τ` and `θ̃^G = θ̃^F ∧ τ` on every outcome of positive mass.
pub fn optimal_time_correspondence<S: Scalar>(model: &RandomTimeModel<S>, xg: &GProcess<S>) -> Result<OptimalTimeReport> {
    let n = model.depth();
    let pair = reduce_g_to_f(model, xg)?;
    let v = v_process(model, &pair);
    let g = model.g();
    let reward_f = FProcess::from_fn(n, |t, a| pair.x_f.at(t, a).clone() * g.at(t, a) + v.at(t, a));
    let lat_f = lattice_for(model, Filtration::F, MeasureKind::P, n)?;
    let lat_g = lattice_for(model, Filtration::G, MeasureKind::P, n)?;
    let sf = snell_backward(&lat_f, reward_f.slices(), 0)?;
    let sg = snell_backward(&lat_g, xg.slices(), 0)?;
    let mut report = OptimalTimeReport { minimal_mismatches: 0, maximal_mismatches: 0, outcomes: 0 };
    for (path, k, _) in model.p().outcomes() {
        report.outcomes += 1;
        let gmin = lat_g.time_on_outcome(&sg.min_flags, 0, path, k);
        let gmax = lat_g.time_on_outcome(&sg.max_flags, 0, path, k);
        let fmin = lat_f.time_on_outcome(&sf.min_flags, 0, path, k).min(k);
        let fmax = lat_f.time_on_outcome(&sf.max_flags, 0, path, k).min(k);
        report.minimal_mismatches += usize::from(gmin != fmin);
        report.maximal_mismatches += usize::from(gmax != fmax);
    }
    Ok(report)
}

#[derive(Clone, Debug, Serialize)]
pub struct IdentityReport {
    /// `L Ẽ^{-1} I_{[0,τ[} + L Ẽ^{-1}·N^G = L_0 + Ẽ_−^{-1}·L^τ`.
    pub over_epsilon: f64,
    /// The `L / G` identity through `𝒯(m)`, `𝒯(L)` and `N^G`.
    pub over_g: f64,
    /// `−V^τ/G^τ` for `V = k·D^{o,F}`.
    pub v_over_g: f64,
    /// Atom/identity pairs skipped because a term is undefined (`G = 0` or `Ẽ = 0`).
    pub skipped: usize,
}

/// Steps `(s, prefix, alive)` leading to a `G`-atom at time `t`.
fn steps_to(t: usize, atom: GAtom) -> Vec<(usize, usize, bool)> {
    match atom {
        GAtom::Alive(a) => (1..=t).map(|s| (s, a >> (t - s), true)).collect(),
        GAtom::Dead { s: d, a } => (1..=d).map(|s| (s, a >> (t - s), s < d)).collect(),
    }
}

/// Evaluate the three semimartingale identities on every `G`-atom of positive mass.
///
/// On a death step the `N^G` jumps are evaluated in closed form,
/// `(L/Ẽ)_s ΔN_s = L_s/Ẽ_{s−1}` and `(L/G)_s ΔN_s = L_s/G̃_s`, which stay
/// defined where `G_s = 0`.
pub fn semimartingale_identities<S: Scalar>(
    model: &RandomTimeModel<S>,
    l: &FProcess<S>,
    k: &FProcess<S>,
) -> Result<IdentityReport> {
    let n = model.depth();
    let g = model.g();
    let gt = model.g_tilde();
    let et = model.epsilon_tilde();
    let dd = model.d_dof();
    let m = model.martingale_m();
    let tm = model.transform_t_semimartingale(&m);
    let tl = model.transform_t_semimartingale(l);
    let v = cumulate(dd, |t, a| k.at(t, a).clone() * dd.at(t, a));
    let ratio = |x: S, y: &S| (!y.is_zero()).then(|| x / y);
    let mut report = IdentityReport { over_epsilon: 0.0, over_g: 0.0, v_over_g: 0.0, skipped: 0 };

    for t in 0..=n {
        let masses = model.p().g_masses(t);
        for (i, mass) in masses.iter().enumerate() {
            if mass.is_zero() {
                continue;
            }
            let atom = GAtom::from_index(t, i);
            let steps = steps_to(t, atom);
            let (alive_now, last) = match atom {
                GAtom::Alive(a) => (true, (t, a)),
                GAtom::Dead { s, a } => (false, (s, a >> (t - s))),
            };
            // Value of a stopped G-process right after step s along this atom.
            let path_atom = |s: usize, a: usize, alive: bool| if alive { GAtom::Alive(a) } else { GAtom::Dead { s, a } };

            let first = (|| {
                let lhs_state = if alive_now { ratio(l.at(last.0, last.1).clone(), et.at(last.0, last.1))? } else { S::zero() };
                let mut lhs = lhs_state;
                let mut rhs = l.at(0, 0).clone();
                for &(s, a, alive) in &steps {
                    let ep = et.at(s - 1, a >> 1);
                    lhs = lhs
                        + &if alive {
                            ratio(l.at(s, a).clone(), et.at(s, a))? * &model.dn_g(s, a, true)
                        } else {
                            ratio(l.at(s, a).clone(), ep)?
                        };
                    rhs = rhs + &ratio(l.increment(s, a), ep)?;
                }
                Some(discrepancy(&lhs, &rhs))
            })();
            let second = (|| {
                let lhs = if alive_now { ratio(l.at(last.0, last.1).clone(), g.at(last.0, last.1))? } else { S::zero() };
                let mut rhs = ratio(l.at(0, 0).clone(), g.at(0, 0))?;
                for &(s, a, alive) in &steps {
                    let p = a >> 1;
                    let gp = g.at(s - 1, p);
                    let here = path_atom(s, a, alive);
                    let dtm = tm.get(s, here).clone() - tm.alive(s - 1, p);
                    let dtl = tl.get(s, here).clone() - tl.alive(s - 1, p);
                    let jump = if alive {
                        ratio(l.at(s, a).clone(), g.at(s, a))? * &model.dn_g(s, a, true)
                    } else {
                        ratio(l.at(s, a).clone(), gt.at(s, a))?
                    };
                    rhs = rhs - &(ratio(l.at(s - 1, p).clone(), &(gp.clone() * gp))? * &dtm) + &ratio(dtl, gp)? - &jump;
                }
                Some(discrepancy(&lhs, &rhs))
            })();
            let third = (|| {
                let lhs = -ratio(v.at(last.0, last.1).clone(), g.at(last.0, last.1))?;
                let mut rhs = -ratio(v.at(0, 0).clone(), g.at(0, 0))?;
                for &(s, a, alive) in &steps {
                    let p = a >> 1;
                    let gp = g.at(s - 1, p);
                    let here = path_atom(s, a, alive);
                    let dtm = tm.get(s, here).clone() - tm.alive(s - 1, p);
                    let integrand = k.at(s, a).clone() + &ratio(v.at(s, a).clone(), g.at(s, a))?;
                    rhs = rhs + &(ratio(v.at(s - 1, p).clone(), &(gp.clone() * gp))? * &dtm)
                        - &ratio(integrand * dd.at(s, a), gt.at(s, a))?;
                }
                Some(discrepancy(&lhs, &rhs))
            })();
            for (slot, r) in [first, second, third].into_iter().enumerate() {
                let target = match slot {
                    0 => &mut report.over_epsilon,
                    1 => &mut report.over_g,
                    _ => &mut report.v_over_g,
                };
                match r {
                    Some(d) => *target = target.max(d),
                    None => report.skipped += 1,
                }
            }
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::random_time::{constant_hazard, model_m2};
    use crate::scalar::Rational;

    fn q(n: i64, d: i64) -> Rational {
        Rational::from_ratio(n, d)
    }

    fn m2_reward() -> GProcess<Rational> {
        GProcess::stopped(2, |t, _| q(2 - t as i64, 1), |_, _| q(1, 2))
    }

    #[test]
    fn constant_reward() {
        let m = model_m2::<Rational>();
        let lat = lattice_for(&m, Filtration::G, MeasureKind::P, 2).unwrap();
        let x = GProcess::constant(2, q(3, 1));
        let s = snell_backward(&lat, x.slices(), 0).unwrap();
        assert!(s.envelope.iter().flatten().all(|v| *v == q(3, 1)));
        assert_eq!(s.minimal_time.time_on_path(0), 0);
        assert_eq!(s.maximal_time.time_on_path(0), 2);
    }

    #[test]
    fn m2_backward_matches_enumeration() {
        let m = model_m2::<Rational>();
        for (filt, meas) in [
            (Filtration::G, MeasureKind::P),
            (Filtration::G, MeasureKind::QTilde),
        ] {
            let lat = lattice_for(&m, filt, meas, 2).unwrap();
            let x = m2_reward();
            let s = snell_backward(&lat, x.slices(), 0).unwrap();
            let b = brute_force_snell(&lat, x.slices(), 0, crate::DEFAULT_BUDGET).unwrap();
            assert_eq!(s.optimal_value, b.value);
            assert!(b.argmax.iter().any(|f| lat.rule_value(x.slices(), f, 0) == b.value));
        }
    }

    #[test]
    fn m2_transform_certificates() {
        let m = model_m2::<Rational>();
        let x = m2_reward();
        assert_eq!(snell_transform_gp(&m, &x).unwrap().discrepancy, 0.0);
        for t in 0..=2 {
            assert_eq!(snell_transform_gq(&m, &x, t).unwrap().discrepancy, 0.0);
        }
        let r = optimal_time_correspondence(&m, &x).unwrap();
        assert_eq!((r.minimal_mismatches, r.maximal_mismatches), (0, 0));
    }

    #[test]
    fn identities_on_m2_and_cox() {
        let m = model_m2::<Rational>();
        let mm = m.martingale_m();
        let one = FProcess::constant(2, q(1, 1));
        let r = semimartingale_identities(&m, &mm, &one).unwrap();
        assert_eq!((r.over_epsilon, r.over_g, r.v_over_g), (0.0, 0.0, 0.0));
        let c = constant_hazard(3, q(1, 1), q(1, 2), false).unwrap();
        let w = c.space().driver().clone();
        let r = semimartingale_identities(&c, &w, &w).unwrap();
        assert_eq!((r.over_epsilon, r.over_g, r.v_over_g, r.skipped), (0.0, 0.0, 0.0, 0));
    }

    #[test]
    fn lookahead_model_transforms() {
        use crate::fspace::FilteredSpace;
        let probs: Vec<Rational> = [3, 1, 2, 2, 1, 4, 2, 1].iter().map(|&w| q(w, 16)).collect();
        let space = FilteredSpace::new(3, q(1, 4), probs).unwrap();
        let hz = FProcess::from_fn(3, |t, a| q(1 + ((t + a) % 3) as i64, 6));
        let model = RandomTimeModel::lookahead(space, &hz, &q(1, 2)).unwrap();
        let w = model.space().driver().clone();
        let x = GProcess::stopped(
            3,
            |t, a| q(1, 1) + w.at(t, a).clone() * &q(2, 1) - &q(t as i64, 4),
            |s, a| w.at(s, a).clone() + &q(1, 3),
        );
        assert_eq!(snell_transform_gp(&model, &x).unwrap().discrepancy, 0.0);
        for t in 0..=3 {
            assert_eq!(snell_transform_gq(&model, &x, t).unwrap().discrepancy, 0.0);
        }
        let r = optimal_time_correspondence(&model, &x).unwrap();
        assert_eq!((r.minimal_mismatches, r.maximal_mismatches), (0, 0));
        let r = semimartingale_identities(&model, &w, &w).unwrap();
        assert_eq!((r.over_epsilon, r.over_g, r.v_over_g, r.skipped), (0.0, 0.0, 0.0, 0));
    }
}
