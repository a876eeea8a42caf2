//! Constants ledger for the a-priori estimates.
//!
//! The estimates only assert that some constant exists. A calibration run
//! evaluates every inequality on a seeded corpus, records the largest
//! ratio `lhs/rhs` per (estimate, exponent), and freezes `1.5×` that
//! maximum. Later runs on fresh corpora check the frozen values as
//! regressions.

use std::collections::{BTreeMap, BTreeSet};

use rand::Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::corpus::{self, fingerprint, instance_rng, random_data, random_triplet};
use crate::fspace::FProcess;
use crate::norms::{self, EstimateRecord, MARTINGALE_INEQUALITY};
use crate::random_time::{Mode, RandomTimeModel};
use crate::rbsde::{solve_f, solve_g, Horizon, RBSDEData};
use crate::scalar::{Rational, Scalar};
use crate::{Backend, HorizonError, Result};

pub const LEDGER_SCHEMA: u32 = 1;
/// Safety factor applied to the corpus maximum.
pub const SAFETY_FACTOR: f64 = 1.5;
/// Data scalings used by the invariance check.
pub const RESCALE_EXPONENTS: [i32; 2] = [3, -3];

fn default_p() -> Vec<f64> {
    vec![1.5, 2.0, 3.0]
}

fn default_pairs() -> Vec<[f64; 2]> {
    vec![[4.0, 4.0], [2.0, 4.0], [3.0, 6.0]]
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorpusSpec {
    pub instances: usize,
    pub min_depth: usize,
    pub max_depth: usize,
    pub seed: u64,
    #[serde(default = "default_p")]
    pub p_values: Vec<f64>,
    /// Exponent pairs `(a, b)` of the martingale inequality.
    #[serde(default = "default_pairs")]
    pub exponent_pairs: Vec<[f64; 2]>,
    #[serde(default)]
    pub backend: Backend,
}

impl CorpusSpec {
    pub fn new(instances: usize, min_depth: usize, max_depth: usize, seed: u64) -> Self {
        CorpusSpec {
            instances,
            min_depth,
            max_depth,
            seed,
            p_values: default_p(),
            exponent_pairs: default_pairs(),
            backend: Backend::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.instances == 0 {
            return Err(HorizonError::Validation("the corpus is empty".into()));
        }
        if self.min_depth < 1 || self.max_depth > 8 || self.min_depth > self.max_depth {
            return Err(HorizonError::Validation(format!(
                "depth range {}..={} must lie in 1..=8",
                self.min_depth, self.max_depth
            )));
        }
        if self.p_values.is_empty() || self.p_values.iter().any(|p| !(*p > 1.0)) {
            return Err(HorizonError::Validation("p values must be nonempty and exceed 1".into()));
        }
        if self.exponent_pairs.iter().any(|[a, b]| !(*a > 1.0 && *b > 1.0)) {
            return Err(HorizonError::Validation("exponent pairs must exceed 1".into()));
        }
        Ok(())
    }
}

/// One evaluated inequality, keyed by estimate id and exponents.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub id: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub p: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub a: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub b: Option<f64>,
    pub lhs: f64,
    pub rhs: f64,
    pub ratio: f64,
}

impl Sample {
    fn key(&self) -> Key {
        Key::new(&self.id, self.p, self.a, self.b)
    }
}

impl From<EstimateRecord> for Sample {
    fn from(r: EstimateRecord) -> Self {
        Sample { id: r.id, p: Some(r.p), a: None, b: None, lhs: r.lhs, rhs: r.rhs, ratio: r.ratio }
    }
}

/// Ordered key; exponents are compared through their bit patterns.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord)]
struct Key(String, Option<u64>, Option<u64>, Option<u64>);

impl Key {
    fn new(id: &str, p: Option<f64>, a: Option<f64>, b: Option<f64>) -> Self {
        let bits = |x: Option<f64>| x.map(f64::to_bits);
        Key(id.to_string(), bits(p), bits(a), bits(b))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LedgerEntry {
    pub theorem_id: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub p: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub a: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub b: Option<f64>,
    pub max_ratio: f64,
    pub frozen_constant: f64,
    /// Number of samples behind the maximum.
    pub instances: usize,
    pub corpus_hash: String,
}

impl LedgerEntry {
    fn key(&self) -> Key {
        Key::new(&self.theorem_id, self.p, self.a, self.b)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Ledger {
    pub schema: u32,
    pub corpus: CorpusSpec,
    pub corpus_hash: String,
    pub entries: Vec<LedgerEntry>,
}

impl Ledger {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("ledger serialises");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let ledger: Ledger = serde_json::from_str(text).map_err(|e| HorizonError::Parse {
            line: e.line(),
            column: e.column(),
            msg: e.to_string(),
        })?;
        if ledger.schema != LEDGER_SCHEMA {
            return Err(HorizonError::Validation(format!("unsupported ledger schema {}", ledger.schema)));
        }
        Ok(ledger)
    }

    pub fn constant(&self, id: &str, p: Option<f64>, a: Option<f64>, b: Option<f64>) -> Option<f64> {
        let key = Key::new(id, p, a, b);
        self.entries.iter().find(|e| e.key() == key).map(|e| e.frozen_constant)
    }
}

/// The ledger committed with the crate.
pub fn committed_ledger() -> Ledger {
    Ledger::from_json(include_str!("../data/constants.json")).expect("committed ledger parses")
}

/// Everything drawn for one corpus instance.
pub struct Instance<S: Scalar> {
    pub model: RandomTimeModel<S>,
    pub finite: RBSDEData<S>,
    pub finite_partner: RBSDEData<S>,
    /// Random-horizon data (closed models only).
    pub random: Option<(RBSDEData<S>, RBSDEData<S>)>,
    pub triplet: corpus::MartingaleTriplet<S>,
}

impl<S: Scalar> Instance<S> {
    pub fn draw(spec: &CorpusSpec, index: usize) -> Result<Self> {
        let mut rng = instance_rng(spec.seed, index as u64);
        let (_, _, model) = corpus::corpus_model(&mut rng, index, spec.min_depth, spec.max_depth, true)?;
        let n = model.depth();
        let big_t = rng.gen_range(1..=n);
        let finite = random_data(&mut rng, n, Horizon::Finite(big_t), 2.0);
        let finite_partner = corpus::perturb(&mut rng, &finite);
        let random = (model.mode() == Mode::Closed).then(|| {
            let d = random_data(&mut rng, n, Horizon::Random, 2.0);
            let e = corpus::perturb(&mut rng, &d);
            (d, e)
        });
        let triplet = random_triplet(&mut rng, n);
        Ok(Instance { model, finite, finite_partner, random, triplet })
    }

    pub fn fingerprint(&self) -> String {
        let mut procs: Vec<&FProcess<S>> = vec![&self.finite.f, &self.finite.h, &self.finite_partner.f, &self.finite_partner.h];
        procs.extend(self.finite.barrier.iter());
        procs.extend([&self.triplet.h, &self.triplet.x, &self.triplet.m]);
        fingerprint(&self.model, &procs)
    }

    /// Every inequality at every exponent, with the data scaled by `c`.
    pub fn samples(&self, spec: &CorpusSpec, c: &S) -> Result<Vec<Sample>> {
        let model = &self.model;
        let d1 = self.finite.scaled(c);
        let d2 = self.finite_partner.scaled(c);
        let s1 = solve_g(model, &d1)?;
        let s2 = solve_g(model, &d2)?;
        let fs = solve_f(model, &d1)?;
        let random = match &self.random {
            Some((r1, r2)) => {
                let (r1, r2) = (r1.scaled(c), r2.scaled(c));
                let (t1, t2) = (solve_g(model, &r1)?, solve_g(model, &r2)?);
                Some((r1, t1, r2, t2))
            }
            None => None,
        };
        let mut out = Vec::new();
        for &p in &spec.p_values {
            out.push(norms::finite_q_estimate(model, &d1, &s1, p).into());
            out.push(norms::finite_q_stability(model, (&d1, &s1), (&d2, &s2), p)?.into());
            out.push(norms::weighted_p_estimate(model, &d1, &s1, p).into());
            out.push(norms::weighted_p_stability(model, (&d1, &s1), (&d2, &s2), p)?.into());
            if let Some((r1, t1, r2, t2)) = &random {
                out.push(norms::random_horizon_estimate(model, r1, t1, p)?.into());
                out.push(norms::random_horizon_stability(model, (r1, t1), (r2, t2), p)?.into());
            }
            out.push(norms::f_side_estimate(model, &d1, &fs, p).into());
        }
        let tr = &self.triplet;
        let h = tr.h.map(|_, _, v| v.clone() * c);
        let x = tr.x.map(|_, _, v| v.clone() * c);
        for &[a, b] in &spec.exponent_pairs {
            let mi = norms::martingale_inequality(model.space(), &h, &x, &tr.m, a, b)?;
            out.push(Sample {
                id: MARTINGALE_INEQUALITY.to_string(),
                p: None,
                a: Some(a),
                b: Some(b),
                lhs: mi.lhs,
                rhs: mi.sup_x * mi.bracket,
                ratio: mi.ratio,
            });
        }
        Ok(out)
    }
}

/// Samples of one instance at scale one, plus the worst relative change
/// of any ratio under the rescalings.
#[derive(Clone, Debug)]
pub struct InstanceReport {
    pub index: usize,
    pub fingerprint: String,
    pub samples: Vec<Sample>,
    pub rescale_error: f64,
}

fn pow10<S: Scalar>(e: i32) -> S {
    let ten = 10i64.pow(e.unsigned_abs());
    if e >= 0 {
        S::from_i64(ten)
    } else {
        S::from_ratio(1, ten)
    }
}

fn relative_change(a: f64, b: f64) -> f64 {
    if a == b {
        return 0.0;
    }
    if !a.is_finite() || !b.is_finite() {
        return f64::INFINITY;
    }
    (a - b).abs() / a.abs().max(b.abs())
}

fn evaluate_typed<S: Scalar>(spec: &CorpusSpec, index: usize, rescale: bool) -> Result<InstanceReport> {
    let inst = Instance::<S>::draw(spec, index)?;
    let samples = inst.samples(spec, &S::one())?;
    let mut rescale_error = 0.0f64;
    if rescale {
        for e in RESCALE_EXPONENTS {
            let scaled = inst.samples(spec, &pow10::<S>(e))?;
            for (x, y) in samples.iter().zip(&scaled) {
                rescale_error = rescale_error.max(relative_change(x.ratio, y.ratio));
            }
        }
    }
    Ok(InstanceReport { index, fingerprint: inst.fingerprint(), samples, rescale_error })
}

pub fn evaluate_instance(spec: &CorpusSpec, index: usize, rescale: bool) -> Result<InstanceReport> {
    match spec.backend {
        Backend::Rational => evaluate_typed::<Rational>(spec, index, rescale),
        Backend::Float => evaluate_typed::<f64>(spec, index, rescale),
    }
}

/// Evaluate the whole corpus on `jobs` threads; results come back in index order.
pub fn evaluate_corpus(spec: &CorpusSpec, rescale: bool, jobs: usize) -> Result<Vec<InstanceReport>> {
    spec.validate()?;
    let jobs = jobs.clamp(1, spec.instances);
    let chunks: Vec<Result<Vec<InstanceReport>>> = std::thread::scope(|scope| {
        let handles: Vec<_> = (0..jobs)
            .map(|j| {
                scope.spawn(move || {
                    (j..spec.instances).step_by(jobs).map(|i| evaluate_instance(spec, i, rescale)).collect::<Result<Vec<_>>>()
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("worker panicked")).collect()
    });
    let mut all = Vec::with_capacity(spec.instances);
    for c in chunks {
        all.extend(c?);
    }
    all.sort_by_key(|r| r.index);
    Ok(all)
}

/// Fingerprints of a corpus without solving anything.
pub fn corpus_fingerprints(spec: &CorpusSpec) -> Result<Vec<String>> {
    spec.validate()?;
    (0..spec.instances)
        .map(|i| match spec.backend {
            Backend::Rational => Instance::<Rational>::draw(spec, i).map(|x| x.fingerprint()),
            Backend::Float => Instance::<f64>::draw(spec, i).map(|x| x.fingerprint()),
        })
        .collect()
}

fn corpus_hash<'a>(fingerprints: impl IntoIterator<Item = &'a String>) -> String {
    let mut h = Sha256::new();
    for f in fingerprints {
        h.update(f.as_bytes());
        h.update(b"\n");
    }
    corpus::hex(&h.finalize())
}

pub fn default_jobs() -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get())
}

/// Run the calibration corpus and freeze `SAFETY_FACTOR ×` the maximum ratio per key.
pub fn calibrate(spec: &CorpusSpec, jobs: usize) -> Result<Ledger> {
    let reports = evaluate_corpus(spec, false, jobs)?;
    let hash = corpus_hash(reports.iter().map(|r| &r.fingerprint));
    let mut maxima: BTreeMap<Key, (Sample, usize)> = BTreeMap::new();
    for s in reports.iter().flat_map(|r| &r.samples) {
        if !s.ratio.is_finite() {
            return Err(HorizonError::Validation(format!("{} has an unbounded ratio on the corpus", s.id)));
        }
        let e = maxima.entry(s.key()).or_insert_with(|| (s.clone(), 0));
        e.1 += 1;
        if s.ratio > e.0.ratio {
            e.0 = s.clone();
        }
    }
    let order = |id: &str| norms::ESTIMATE_IDS.iter().position(|x| *x == id).unwrap_or(usize::MAX);
    let mut entries: Vec<LedgerEntry> = maxima
        .into_values()
        .map(|(s, count)| LedgerEntry {
            theorem_id: s.id.clone(),
            p: s.p,
            a: s.a,
            b: s.b,
            max_ratio: s.ratio,
            frozen_constant: s.ratio * SAFETY_FACTOR,
            instances: count,
            corpus_hash: hash.clone(),
        })
        .collect();
    entries.sort_by(|x, y| order(&x.theorem_id).cmp(&order(&y.theorem_id)).then(x.key().cmp(&y.key())));
    Ok(Ledger { schema: LEDGER_SCHEMA, corpus: spec.clone(), corpus_hash: hash, entries })
}

#[derive(Clone, Debug, Serialize)]
pub struct Violation {
    pub instance: usize,
    pub id: String,
    pub p: Option<f64>,
    pub a: Option<f64>,
    pub b: Option<f64>,
    pub ratio: f64,
    pub frozen_constant: Option<f64>,
}

#[derive(Clone, Debug, Serialize)]
pub struct CheckReport {
    pub instances: usize,
    pub samples: usize,
    pub corpus_hash: String,
    /// Instances that also occur in the calibration corpus.
    pub shared_instances: usize,
    pub violations: Vec<Violation>,
    /// Largest ratio over frozen constant, per ledger entry order.
    pub worst_usage: f64,
    pub worst_rescale_error: f64,
    pub ids_covered: Vec<String>,
}

impl CheckReport {
    pub fn passed(&self, rescale_tolerance: f64) -> bool {
        self.violations.is_empty() && self.shared_instances == 0 && self.worst_rescale_error <= rescale_tolerance
    }
}

/// Evaluate a fresh corpus against the frozen constants of `ledger`.
pub fn check(ledger: &Ledger, spec: &CorpusSpec, jobs: usize) -> Result<CheckReport> {
    let reports = evaluate_corpus(spec, true, jobs)?;
    let known: BTreeSet<String> = corpus_fingerprints(&ledger.corpus)?.into_iter().collect();
    let shared_instances = reports.iter().filter(|r| known.contains(&r.fingerprint)).count();
    let mut violations = Vec::new();
    let mut worst_usage = 0.0f64;
    let mut worst_rescale_error = 0.0f64;
    let mut ids = BTreeSet::new();
    let mut samples = 0;
    for r in &reports {
        worst_rescale_error = worst_rescale_error.max(r.rescale_error);
        for s in &r.samples {
            samples += 1;
            ids.insert(s.id.clone());
            let frozen = ledger.constant(&s.id, s.p, s.a, s.b);
            match frozen {
                Some(c) if s.ratio <= c => worst_usage = worst_usage.max(norms::ratio(s.ratio, c)),
                _ => violations.push(Violation {
                    instance: r.index,
                    id: s.id.clone(),
                    p: s.p,
                    a: s.a,
                    b: s.b,
                    ratio: s.ratio,
                    frozen_constant: frozen,
                }),
            }
        }
    }
    Ok(CheckReport {
        instances: reports.len(),
        samples,
        corpus_hash: corpus_hash(reports.iter().map(|r| &r.fingerprint)),
        shared_instances,
        violations,
        worst_usage,
        worst_rescale_error,
        ids_covered: ids.into_iter().collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn micro() -> CorpusSpec {
        CorpusSpec::new(10, 2, 3, 11)
    }

    #[test]
    fn empty_corpus_is_refused() {
        let spec = CorpusSpec::new(0, 2, 3, 1);
        assert!(matches!(calibrate(&spec, 1), Err(HorizonError::Validation(_))));
    }

    #[test]
    fn micro_corpus_gives_finite_constants() {
        let ledger = calibrate(&micro(), 2).unwrap();
        assert!(!ledger.entries.is_empty());
        for e in &ledger.entries {
            assert!(e.frozen_constant.is_finite() && e.frozen_constant >= e.max_ratio, "{e:?}");
        }
    }

    #[test]
    fn calibration_is_deterministic_across_job_counts() {
        let a = calibrate(&micro(), 1).unwrap().to_json();
        let b = calibrate(&micro(), 3).unwrap().to_json();
        assert_eq!(a, b);
        assert_eq!(Ledger::from_json(&a).unwrap().to_json(), a);
    }

    #[test]
    fn committed_ledger_covers_every_estimate() {
        let ledger = committed_ledger();
        for id in norms::ESTIMATE_IDS {
            assert!(ledger.entries.iter().any(|e| e.theorem_id == id), "{id} missing");
        }
    }
}
