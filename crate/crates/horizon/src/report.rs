//! Verification suites and the deterministic report written by the runner.
//!
//! Each suite turns a model and data set into named checks `value ≤ limit`.
//! Exact identities get the limit `0` on the rational backend and the run
//! tolerance on the float one. Suites may run on several threads; the
//! report keeps the order in which they were requested.

use serde::Serialize;

use crate::calibration::{self, CheckReport, CorpusSpec, Ledger};
use crate::fspace::{cond_expect, FProcess, Filtration};
use crate::norms::{self, EstimateRecord, LimitGap, NormSuite};
use crate::projections::{check_reduction, g_projection_identity, reduce_g_to_f};
use crate::random_time::{g_width, GAtom, GProcess, Mode, RandomTimeModel};
use crate::rbsde::{self, Horizon, RBSDEData, TruncationStep};
use crate::scalar::{discrepancy, Rational, Scalar};
use crate::scenario::{Scenario, Suite};
use crate::snell::{self, lattice_for, MeasureKind};
use crate::{Backend, HorizonError, Result};

pub const REPORT_SCHEMA: &str = "horizon-rbsde/report/1";

#[derive(Clone, Debug, Serialize, PartialEq)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub limit: f64,
    pub passed: bool,
}

#[derive(Clone, Debug)]
pub struct Table {
    pub name: String,
    pub csv: String,
}

#[derive(Clone, Debug, Serialize)]
pub struct SuiteReport {
    pub suite: Suite,
    pub passed: bool,
    pub checks: Vec<Check>,
    pub details: serde_json::Value,
    #[serde(skip)]
    pub tables: Vec<Table>,
}

#[derive(Clone, Debug, Serialize)]
pub struct ModelSummary {
    pub depth: usize,
    pub dt: f64,
    pub mode: Mode,
    pub outcomes: usize,
    pub immersion: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct Report {
    pub schema: &'static str,
    pub scenario: String,
    pub backend: Backend,
    pub seed: u64,
    pub horizon: Horizon,
    pub model: ModelSummary,
    pub passed: bool,
    pub suites: Vec<SuiteReport>,
}

impl Report {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serialises");
        s.push('\n');
        s
    }

    pub fn tables(&self) -> impl Iterator<Item = &Table> {
        self.suites.iter().flat_map(|s| &s.tables)
    }
}

/// Settings that are not part of the scenario file.
#[derive(Clone, Debug)]
pub struct RunOptions {
    pub backend: Option<Backend>,
    pub jobs: usize,
    pub budget: Option<u128>,
    pub ledger: Ledger,
}

impl Default for RunOptions {
    fn default() -> Self {
        RunOptions { backend: None, jobs: 1, budget: None, ledger: calibration::committed_ledger() }
    }
}

/// Run every requested suite of a scenario.
pub fn run(sc: &Scenario, opts: &RunOptions) -> Result<Report> {
    match opts.backend.unwrap_or(sc.run.backend) {
        Backend::Rational => run_typed::<Rational>(sc, opts),
        Backend::Float => run_typed::<f64>(sc, opts),
    }
}

/// Everything a suite needs besides the model and the data.
#[derive(Clone, Debug)]
pub struct SuiteSettings {
    pub p: Vec<f64>,
    /// Limit for quantities computed in floating point (and for every check on the float backend).
    pub tolerance: f64,
    pub budget: u128,
    pub brute_force: bool,
    pub corpus: Option<CorpusSpec>,
    pub ledger: Ledger,
    pub jobs: usize,
}

impl SuiteSettings {
    pub fn new(p: Vec<f64>) -> Self {
        SuiteSettings {
            p,
            tolerance: 1e-10,
            budget: crate::DEFAULT_BUDGET,
            brute_force: true,
            corpus: None,
            ledger: calibration::committed_ledger(),
            jobs: 1,
        }
    }
}

/// Run one suite on a model and data set.
pub fn run_suite<S: Scalar>(
    model: &RandomTimeModel<S>,
    data: &RBSDEData<S>,
    suite: Suite,
    settings: &SuiteSettings,
) -> Result<SuiteReport> {
    Ctx::new(model, data, settings).run_suite(suite)
}

fn run_typed<S: Scalar>(sc: &Scenario, opts: &RunOptions) -> Result<Report> {
    let model: RandomTimeModel<S> = sc.model()?;
    let data = sc.data(&model);
    rbsde::validate(&model, &data)?;
    if sc.run.suites.contains(&Suite::InfiniteHorizonConvergence) && model.mode() != Mode::Closed {
        return Err(HorizonError::Validation("the infinite-horizon suite needs a closed model".into()));
    }
    let settings = SuiteSettings {
        p: sc.run.p.clone(),
        tolerance: sc.run.tolerance,
        budget: opts.budget.unwrap_or_else(|| sc.budget()),
        brute_force: sc.run.brute_force,
        corpus: sc.run.corpus.clone(),
        ledger: opts.ledger.clone(),
        jobs: opts.jobs.max(1),
    };
    let ctx = Ctx::new(&model, &data, &settings);
    let suites = &sc.run.suites;
    let jobs = settings.jobs.min(suites.len());
    let results: Vec<(usize, Result<SuiteReport>)> = std::thread::scope(|scope| {
        let ctx = &ctx;
        let handles: Vec<_> = (0..jobs)
            .map(|j| {
                scope.spawn(move || {
                    (j..suites.len()).step_by(jobs).map(|i| (i, ctx.run_suite(suites[i]))).collect::<Vec<_>>()
                })
            })
            .collect();
        handles.into_iter().flat_map(|h| h.join().expect("suite worker panicked")).collect()
    });
    let mut results = results;
    results.sort_by_key(|(i, _)| *i);
    let suites = results.into_iter().map(|(_, r)| r).collect::<Result<Vec<_>>>()?;
    let m = model.martingale_m();
    let immersion = (0..=model.depth()).all(|t| m.slice(t).iter().all(|x| x == m.at(0, 0)));
    Ok(Report {
        schema: REPORT_SCHEMA,
        scenario: sc.name.clone(),
        backend: if S::EXACT { Backend::Rational } else { Backend::Float },
        seed: sc.run.seed,
        horizon: data.horizon,
        model: ModelSummary {
            depth: model.depth(),
            dt: model.space().dt().to_f64(),
            mode: model.mode(),
            outcomes: model.p().outcomes().count(),
            immersion,
        },
        passed: suites.iter().all(|s| s.passed),
        suites,
    })
}

struct Ctx<'a, S: Scalar> {
    model: &'a RandomTimeModel<S>,
    data: &'a RBSDEData<S>,
    settings: &'a SuiteSettings,
    /// Limit for identities that hold exactly.
    exact: f64,
    /// Limit for quantities computed in floating point.
    tol: f64,
}

impl<'a, S: Scalar> Ctx<'a, S> {
    fn new(model: &'a RandomTimeModel<S>, data: &'a RBSDEData<S>, settings: &'a SuiteSettings) -> Self {
        let tol = settings.tolerance;
        Ctx { model, data, settings, exact: if S::EXACT { 0.0 } else { tol }, tol }
    }
}

#[derive(Default)]
struct Checks(Vec<Check>);

impl Checks {
    fn push(&mut self, name: &str, value: f64, limit: f64) {
        self.0.push(Check { name: name.to_string(), value, limit, passed: value <= limit });
    }
}

fn finish(suite: Suite, checks: Checks, details: serde_json::Value, tables: Vec<Table>) -> SuiteReport {
    let passed = checks.0.iter().all(|c| c.passed);
    SuiteReport { suite, passed, checks: checks.0, details, tables }
}

impl<S: Scalar> Ctx<'_, S> {
    fn run_suite(&self, suite: Suite) -> Result<SuiteReport> {
        match suite {
            Suite::Identities => self.identities(),
            Suite::Snell => self.snell(),
            Suite::Rbsde => self.rbsde(),
            Suite::Estimates => self.estimates(),
            Suite::InfiniteHorizonConvergence => self.infinite(),
        }
    }

    fn n(&self) -> usize {
        self.model.depth()
    }

    fn window(&self) -> usize {
        self.data.horizon.window(self.n())
    }

    /// Reward stopped at `τ`: the barrier (or `h`) before death, `h` at death.
    fn stopped_reward(&self) -> GProcess<S> {
        let alive = self.data.barrier.as_ref().unwrap_or(&self.data.h);
        GProcess::stopped(self.n(), |t, a| alive.at(t, a).clone(), |s, a| self.data.h.at(s, a).clone())
    }

    /// `Σ_{1≤s≤t} |h_s|`: nonnegative, nondecreasing and null at zero.
    fn increasing_part(&self) -> FProcess<S> {
        crate::random_time::cumulate(&self.data.h, |t, a| if t == 0 { S::zero() } else { self.data.h.at(t, a).abs() })
    }

    fn identities(&self) -> Result<SuiteReport> {
        let (model, data, n) = (self.model, self.data, self.n());
        let space = model.space();
        let mut c = Checks::default();
        c.push("decomposition", model.decomposition_defect(), self.exact);
        c.push("m_martingale", crate::fspace::martingale_defect(space, &model.martingale_m(), space.path_prob())?, self.exact);
        // E[h_N | F_t] is an F-martingale for any path law.
        let terminal = data.h.slice(n).to_vec();
        let mart = FProcess::from_slices(
            (0..=n).map(|t| cond_expect(space, &terminal, n, t, space.path_prob())).collect::<Result<Vec<_>>>()?,
        )?;
        let tm = model.transform_t(&mart)?;
        c.push("transform_martingale", model.p().martingale_defect(&tm, n), self.exact);
        c.push("n_g_martingale", model.p().martingale_defect(&model.n_g(), n), self.exact);
        c.push("h_dot_n_g_martingale", model.p().martingale_defect(&model.integrate_n_g(&data.f), n), self.exact);

        let xg = self.stopped_reward();
        let pair = reduce_g_to_f(model, &xg)?;
        let red = check_reduction(model, &xg, &pair);
        c.push("reduction_reconstruction", red.reconstruction, self.exact);
        c.push("reduction_decomposition", red.decomposition, self.exact);
        c.push("reduction_duality", red.duality, self.exact);
        c.push("reduction_k_f_projection", red.k_f_projection, self.exact);
        let x_rv: Vec<Vec<S>> = (0..space.n_paths())
            .map(|path| (0..=n + 1).map(|k| data.h.on_path(path, n).clone() + &S::from_i64(k as i64)).collect())
            .collect();
        c.push("g_projection", g_projection_identity(model, &x_rv), self.exact);

        let sm = snell::semimartingale_identities(model, &data.h, &data.f)?;
        c.push("semimartingale_over_epsilon", sm.over_epsilon, self.exact);
        c.push("semimartingale_over_g", sm.over_g, self.exact);
        c.push("semimartingale_v_over_g", sm.v_over_g, self.exact);

        let big_t = self.window();
        let qi = norms::qtilde_identities(model, &data.h, big_t, data.p);
        c.push("qtilde_optional", qi.optional_gap, self.exact);
        let inc = norms::qtilde_identities(model, &self.increasing_part(), big_t, data.p);
        c.push("qtilde_increasing", inc.increasing_gap.unwrap_or(f64::NAN), self.exact);
        let (l, r) = inc.lr_sides.unwrap_or((f64::NAN, f64::NAN));
        c.push("qtilde_lr_excess", (l - r).max(0.0), self.tol * (1.0 + r.abs()));

        let sb = norms::survival_bounds(model);
        c.push("survival_compensator_excess", sb.compensator_excess, self.exact);
        c.push("survival_excess", sb.survival_excess, self.exact);
        c.push("survival_hazard_sum_excess", sb.hazard_sum_excess, self.exact);
        c.push("survival_monotone_defect", sb.monotone_defect, self.exact);
        c.push("survival_monotone_defect_fractional", sb.monotone_defect_fractional, self.tol);
        let details = serde_json::json!({ "reduction": red, "semimartingale": sm, "qtilde": qi, "survival": sb });
        Ok(finish(Suite::Identities, c, details, Vec::new()))
    }

    fn snell(&self) -> Result<SuiteReport> {
        let (model, n, big_t) = (self.model, self.n(), self.window());
        let mut c = Checks::default();
        let xg = self.stopped_reward();
        let gp = snell::snell_transform_gp(model, &xg)?;
        c.push("transform_gp", gp.discrepancy, self.exact);
        let gq = snell::snell_transform_gq(model, &xg, big_t)?;
        c.push("transform_gq", gq.discrepancy, self.exact);
        let ot = snell::optimal_time_correspondence(model, &xg)?;
        c.push("minimal_time_mismatches", ot.minimal_mismatches as f64, 0.0);
        c.push("maximal_time_mismatches", ot.maximal_mismatches as f64, 0.0);

        let alive = self.data.barrier.as_ref().unwrap_or(&self.data.h);
        let mut oracle = serde_json::Map::new();
        if self.settings.brute_force {
            for filt in [Filtration::F, Filtration::G] {
                for meas in [MeasureKind::P, MeasureKind::QTilde] {
                    let lat = lattice_for(model, filt, meas, big_t)?;
                    let reward = match filt {
                        Filtration::F => alive.slices(),
                        Filtration::G => xg.slices(),
                    };
                    let dp = snell::snell_backward(&lat, reward, 0)?;
                    let bf = snell::brute_force_snell(&lat, reward, 0, self.settings.budget)?;
                    let gap = dp
                        .optimal_value
                        .iter()
                        .zip(&bf.value)
                        .map(|(a, b)| match (a, b) {
                            (Some(a), Some(b)) => discrepancy(a, b),
                            (None, None) => 0.0,
                            _ => f64::INFINITY,
                        })
                        .fold(0.0, f64::max);
                    let name = format!("oracle_{filt:?}_{meas:?}").to_lowercase();
                    c.push(&name, gap, self.exact);
                    oracle.insert(name, serde_json::json!({ "rules_visited": bf.visited as f64 }));
                }
            }
        }
        let lat = lattice_for(model, Filtration::G, MeasureKind::P, n)?;
        let env = snell::snell_backward(&lat, xg.slices(), 0)?;
        let mut csv = String::from("t,atom,mass,reward,envelope,transform_rhs\n");
        for t in 0..=n {
            for i in 0..g_width(t) {
                let atom = GAtom::from_index(t, i);
                csv.push_str(&format!(
                    "{t},{},{},{},{},{}\n",
                    atom.label(t),
                    lat.mass(t, i).to_f64(),
                    xg.slice(t)[i].to_f64(),
                    env.envelope[t][i].to_f64(),
                    gp.rhs.slice(t)[i].to_f64()
                ));
            }
        }
        let details = serde_json::json!({ "optimal_times": ot, "oracle": oracle });
        Ok(finish(Suite::Snell, c, details, vec![Table { name: "envelope.csv".into(), csv }]))
    }

    fn solution_checks(&self, c: &mut Checks, prefix: &str, d: &rbsde::Diagnostics) {
        c.push(&format!("{prefix}skorokhod_residual"), d.skorokhod_residual, self.exact);
        c.push(&format!("{prefix}equation_residual"), d.equation_residual, self.exact);
        c.push(&format!("{prefix}barrier_violation"), d.barrier_violation, self.exact);
        c.push(&format!("{prefix}martingale_defect"), d.martingale_defect, self.exact);
    }

    fn rbsde(&self) -> Result<SuiteReport> {
        let (model, data) = (self.model, self.data);
        let mut c = Checks::default();
        let g = rbsde::solve_g(model, data)?;
        self.solution_checks(&mut c, "g_", &g.diagnostics);
        let f = rbsde::solve_f(model, data)?;
        self.solution_checks(&mut c, "f_", &f.diagnostics);
        let t = rbsde::transform_f_to_g(model, &f, data)?;
        let gap = rbsde::compare_solutions(model, &g, &t);
        c.push("transform_y", gap.y, self.exact);
        c.push("transform_k", gap.k, self.exact);
        c.push("transform_z", gap.z, self.exact.max(1e-10));
        c.push("transform_m", gap.m, self.exact.max(1e-10));
        c.push("g_snell_representation", rbsde::snell_representation_gap(model, data, &g)?, self.exact);
        c.push("f_snell_representation", rbsde::f_snell_representation_gap(model, data, &f)?, self.exact);
        let masses = model.qtilde(g.horizon);
        let masses: Vec<Vec<S>> = (0..=self.n()).map(|t| masses.g_masses(t)).collect();
        let details = serde_json::json!({
            "horizon": g.horizon,
            "y0": g.y.alive(0, 0).to_f64(),
            "y0_f": f.y.at(0, 0).to_f64(),
            "transform_gap": gap,
        });
        Ok(finish(Suite::Rbsde, c, details, vec![Table { name: "solution.csv".into(), csv: g.table(&masses) }]))
    }

    /// The scenario data shifted up by `1/8`, used as the second data set of the stability estimates.
    fn partner(&self) -> RBSDEData<S> {
        let shift = S::from_ratio(1, 8);
        let up = |x: &FProcess<S>| x.map(|_, _, v| v.clone() + &shift);
        let d = self.data;
        RBSDEData::new(up(&d.f), d.barrier.as_ref().map(up), up(&d.h), d.horizon, d.p)
    }

    fn estimates(&self) -> Result<SuiteReport> {
        let (model, data) = (self.model, self.data);
        let mut c = Checks::default();
        let d2 = self.partner();
        let s1 = rbsde::solve_g(model, data)?;
        let s2 = rbsde::solve_g(model, &d2)?;
        let fs = rbsde::solve_f(model, data)?;
        let random = model.mode() == Mode::Closed && data.horizon == Horizon::Random;
        let mut records: Vec<calibration::Sample> = Vec::new();
        let mut norm_suites: Vec<NormSuite> = Vec::new();
        for &p in &self.settings.p {
            let mut rec: Vec<EstimateRecord> = vec![
                norms::finite_q_estimate(model, data, &s1, p),
                norms::finite_q_stability(model, (data, &s1), (&d2, &s2), p)?,
                norms::weighted_p_estimate(model, data, &s1, p),
                norms::weighted_p_stability(model, (data, &s1), (&d2, &s2), p)?,
            ];
            if random {
                rec.push(norms::random_horizon_estimate(model, data, &s1, p)?);
                rec.push(norms::random_horizon_stability(model, (data, &s1), (&d2, &s2), p)?);
            }
            rec.push(norms::f_side_estimate(model, data, &fs, p));
            records.extend(rec.into_iter().map(calibration::Sample::from));
            for (kind, weighted) in [(MeasureKind::QTilde, false), (MeasureKind::P, false), (MeasureKind::P, true)] {
                norm_suites.push(norms::compute_norms(model, &s1, kind, weighted, p));
            }
            let hg = model.stop_f(&data.h.map(|_, _, v| v.abs()));
            let hf = data.f.map(|_, _, v| v.abs());
            let wi = norms::weighted_inequalities(model, s1.horizon, &s1.y, &s1.k, &hg, &hf, p, p);
            c.push(&format!("weighted_inequalities_deficit_p{p}"), (-wi.slack()).max(0.0), self.tol);
        }
        if model.space().has_martingale_driver() {
            let w = model.space().driver();
            for (a, b) in [(4.0, 4.0), (2.0, 4.0), (3.0, 6.0)] {
                let mi = norms::martingale_inequality(model.space(), w, w, w, a, b)?;
                records.push(calibration::Sample {
                    id: norms::MARTINGALE_INEQUALITY.into(),
                    p: None,
                    a: Some(a),
                    b: Some(b),
                    lhs: mi.lhs,
                    rhs: mi.sup_x * mi.bracket,
                    ratio: mi.ratio,
                });
            }
        }
        let mut csv = String::from("id,p,a,b,lhs,rhs,ratio,frozen_constant\n");
        let opt = |x: Option<f64>| x.map_or(String::new(), |v| v.to_string());
        let mut uncalibrated = Vec::new();
        for r in &records {
            let frozen = self.settings.ledger.constant(&r.id, r.p, r.a, r.b);
            let label = match (r.p, r.a, r.b) {
                (Some(p), _, _) => format!("{}_p{p}", r.id),
                (None, Some(a), Some(b)) => format!("{}_a{a}_b{b}", r.id),
                _ => r.id.clone(),
            };
            match frozen {
                Some(k) => c.push(&label, r.ratio, k),
                None => uncalibrated.push(label),
            }
            csv.push_str(&format!(
                "{},{},{},{},{},{},{},{}\n",
                r.id,
                opt(r.p),
                opt(r.a),
                opt(r.b),
                r.lhs,
                r.rhs,
                r.ratio,
                opt(frozen)
            ));
        }
        let corpus: Option<CheckReport> = match &self.settings.corpus {
            Some(spec) => {
                let rep = calibration::check(&self.settings.ledger, spec, self.settings.jobs)?;
                c.push("corpus_violations", rep.violations.len() as f64, 0.0);
                c.push("corpus_shared_instances", rep.shared_instances as f64, 0.0);
                c.push("corpus_rescale_error", rep.worst_rescale_error, 1e-9);
                Some(rep)
            }
            None => None,
        };
        let details = serde_json::json!({
            "records": records,
            "norms": norm_suites,
            "uncalibrated": uncalibrated,
            "ledger_hash": self.settings.ledger.corpus_hash,
            "corpus": corpus,
        });
        Ok(finish(Suite::Estimates, c, details, vec![Table { name: "estimates.csv".into(), csv }]))
    }

    fn infinite(&self) -> Result<SuiteReport> {
        let model = self.model;
        let n = self.n();
        let mut data = self.data.clone();
        data.horizon = Horizon::Random;
        rbsde::validate(model, &data)?;
        let mut c = Checks::default();
        let rh = rbsde::solve_random_horizon(model, &data)?;
        self.solution_checks(&mut c, "", &rh.solution.diagnostics);
        c.push("weighted_equation_residual", rh.weighted_residual, self.tol);
        let f = rbsde::solve_f(model, &data)?;
        let t = rbsde::transform_f_to_g(model, &f, &data)?;
        let gap = rbsde::compare_solutions(model, &rh.solution, &t);
        c.push("f_representation_y", gap.y, self.exact);
        c.push("f_representation_k", gap.k, self.exact);
        c.push("f_representation_z", gap.z, self.exact.max(1e-10));
        c.push("f_representation_m", gap.m, self.exact.max(1e-10));
        c.push("snell_representation", rbsde::snell_representation_gap(model, &data, &rh.solution)?, self.exact);

        let cauchy = cauchy_envelope(model, &data)?;
        let gaps: Vec<f64> = rh.truncation.iter().map(|s| s.gap).collect();
        // The gap to the limit need not shrink step by step; it stays under the tail diameter.
        let above = gaps.iter().zip(&cauchy).map(|(g, d)| g - d).fold(0.0, f64::max);
        c.push("truncation_above_diameter", above, self.tol);
        c.push("cauchy_increase", monotone_excess(&cauchy), self.tol);
        c.push("final_cauchy_diameter", *cauchy.last().expect("nonempty"), self.tol);
        c.push("final_truncation_gap", *gaps.last().expect("nonempty"), self.tol);
        let limits = norms::qtilde_limit_gaps(model, &self.increasing_part())?;
        let excess = limits.iter().map(|l| l.gap - l.bound).fold(f64::NEG_INFINITY, f64::max);
        c.push("limit_gap_excess", excess.max(0.0), self.tol);

        let mut trunc = String::from("n,gap,cauchy\n");
        for (s, ch) in rh.truncation.iter().zip(&cauchy) {
            trunc.push_str(&format!("{},{},{}\n", s.n, s.gap, ch));
        }
        let mut lim = String::from("horizon,gap,bound\n");
        for l in &limits {
            lim.push_str(&format!("{},{},{}\n", l.horizon, l.gap, l.bound));
        }
        let details = serde_json::json!({
            "depth": n,
            "truncation": rh.truncation,
            "cauchy": cauchy,
            "limit_gaps": limits,
        });
        let tables = vec![
            Table { name: "truncation.csv".into(), csv: trunc },
            Table { name: "limit_gaps.csv".into(), csv: lim },
        ];
        Ok(finish(Suite::InfiniteHorizonConvergence, c, details, tables))
    }
}

/// Tail diameter `sup_{i, j ≥ n} |||Y^i − Y^j|||` of the truncated solutions, `n = 0..=N`.
pub fn cauchy_envelope<S: Scalar>(model: &RandomTimeModel<S>, data: &RBSDEData<S>) -> Result<Vec<f64>> {
    let n = model.depth();
    let sols = (0..=n).map(|k| rbsde::solve_g(model, &data.truncated(k))).collect::<Result<Vec<_>>>()?;
    let mut diam = vec![0.0; n + 1];
    for i in (0..=n).rev() {
        let row = (i..=n).map(|j| norms::weighted_difference_norm(model, &sols[i], &sols[j], data.p)).fold(0.0, f64::max);
        diam[i] = if i == n { row } else { row.max(diam[i + 1]) };
    }
    Ok(diam)
}

/// Largest increase `x_{i+1} − x_i` of a sequence that should be nonincreasing.
pub fn monotone_excess(x: &[f64]) -> f64 {
    x.windows(2).map(|w| w[1] - w[0]).fold(0.0, f64::max)
}

/// Truncation gaps of a random-horizon solve, for callers outside the suite.
pub fn truncation_log<S: Scalar>(model: &RandomTimeModel<S>, data: &RBSDEData<S>) -> Result<Vec<TruncationStep>> {
    Ok(rbsde::solve_random_horizon(model, data)?.truncation)
}

/// Limit gaps for the constant-hazard family used by the convergence checks.
pub fn constant_hazard_limit_gaps(depth: usize, lambda: (i64, i64)) -> Result<Vec<LimitGap>> {
    let model = crate::random_time::constant_hazard::<Rational>(depth, Rational::from_ratio(1, 4), Rational::from_ratio(lambda.0, lambda.1), true)?;
    // X_t = t / N keeps X / ℰ(G_−^{-1}·m) ≤ 1, since m is constant under a hazard model.
    let x = FProcess::from_fn(depth, |t, _| Rational::from_ratio(t as i64, depth as i64));
    norms::qtilde_limit_gaps(&model, &x)
}
