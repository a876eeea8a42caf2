//! Scenario files: a model, RBSDE data as expression trees, and a run plan.
//!
//! Numbers may be JSON numbers (read through their shortest decimal form,
//! so `0.1` is exactly `1/10`) or strings `"a/b"`. Expressions are
//! numbers, the variables `"t"` (step index) and `"W"` (driver value), or
//! prefix lists `[op, arg, ...]` with `op` one of `+ - * max min`.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::calibration::CorpusSpec;
use crate::corpus::{self, Family};
use crate::fspace::{parse_path, FProcess, FilteredSpace};
use crate::random_time::{constant_hazard, RandomTimeModel};
use crate::rbsde::{Horizon, RBSDEData};
use crate::scalar::Scalar;
use crate::{Backend, HorizonError, Result};

pub const SCENARIO_SCHEMA: u32 = 1;

/// An exact number `num/den`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "serde_json::Value", into = "String")]
pub struct Num {
    pub num: i64,
    pub den: i64,
}

impl Num {
    pub fn to_scalar<S: Scalar>(&self) -> S {
        S::from_ratio(self.num, self.den)
    }

    fn parse(text: &str) -> std::result::Result<Self, String> {
        let text = text.trim();
        if let Some((a, b)) = text.split_once('/') {
            let num = a.trim().parse::<i64>().map_err(|e| format!("bad numerator in {text:?}: {e}"))?;
            let den = b.trim().parse::<i64>().map_err(|e| format!("bad denominator in {text:?}: {e}"))?;
            if den == 0 {
                return Err(format!("zero denominator in {text:?}"));
            }
            return Ok(Num { num, den });
        }
        let (neg, body) = match text.strip_prefix('-') {
            Some(rest) => (true, rest),
            None => (false, text),
        };
        let (int, frac) = body.split_once('.').unwrap_or((body, ""));
        if int.is_empty() && frac.is_empty() || !int.chars().chain(frac.chars()).all(|c| c.is_ascii_digit()) {
            return Err(format!("not a number: {text:?}"));
        }
        let frac = frac.trim_end_matches('0');
        if frac.len() > 15 {
            return Err(format!("{text:?} has more than 15 decimals; write it as a/b"));
        }
        let den = 10i64.pow(frac.len() as u32);
        let digits = format!("{int}{frac}");
        let mag = if digits.is_empty() { 0 } else { digits.parse::<i64>().map_err(|e| format!("{text:?}: {e}"))? };
        Ok(Num { num: if neg { -mag } else { mag }, den })
    }
}

impl TryFrom<serde_json::Value> for Num {
    type Error = String;

    fn try_from(v: serde_json::Value) -> std::result::Result<Self, String> {
        match v {
            serde_json::Value::Number(n) => match n.as_i64() {
                Some(i) => Ok(Num { num: i, den: 1 }),
                None => Num::parse(&n.as_f64().ok_or("number out of range")?.to_string()),
            },
            serde_json::Value::String(s) => Num::parse(&s),
            other => Err(format!("expected a number, found {other}")),
        }
    }
}

impl From<Num> for String {
    fn from(n: Num) -> String {
        n.to_string()
    }
}

impl fmt::Display for Num {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.den == 1 {
            write!(f, "{}", self.num)
        } else {
            write!(f, "{}/{}", self.num, self.den)
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Op {
    Add,
    Sub,
    Mul,
    Max,
    Min,
}

/// Data expression over the step index `t` and the driver `W_t`.
#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(try_from = "serde_json::Value")]
pub enum Expr {
    Const(Num),
    T,
    W,
    Apply(Op, Vec<Expr>),
}

impl TryFrom<serde_json::Value> for Expr {
    type Error = String;

    fn try_from(v: serde_json::Value) -> std::result::Result<Self, String> {
        use serde_json::Value;
        match v {
            Value::String(s) if s == "t" => Ok(Expr::T),
            Value::String(s) if s == "W" => Ok(Expr::W),
            Value::Array(items) => {
                let mut it = items.into_iter();
                let op = match it.next() {
                    Some(Value::String(op)) => match op.as_str() {
                        "+" => Op::Add,
                        "-" => Op::Sub,
                        "*" => Op::Mul,
                        "max" => Op::Max,
                        "min" => Op::Min,
                        _ => return Err(format!("unknown operator {op:?}")),
                    },
                    _ => return Err("an expression list must start with an operator".into()),
                };
                let args = it.map(Expr::try_from).collect::<std::result::Result<Vec<_>, _>>()?;
                if args.is_empty() || (op == Op::Sub && args.len() > 2) {
                    return Err("operator has the wrong number of arguments".into());
                }
                Ok(Expr::Apply(op, args))
            }
            other => Num::try_from(other).map(Expr::Const),
        }
    }
}

impl Expr {
    pub fn eval<S: Scalar>(&self, t: usize, w: &S) -> S {
        match self {
            Expr::Const(n) => n.to_scalar(),
            Expr::T => S::from_i64(t as i64),
            Expr::W => w.clone(),
            Expr::Apply(op, args) => {
                let vals: Vec<S> = args.iter().map(|a| a.eval(t, w)).collect();
                let mut it = vals.into_iter();
                let first = it.next().expect("nonempty");
                match op {
                    Op::Sub if args.len() == 1 => -first,
                    Op::Sub => first - &it.next().expect("two arguments"),
                    Op::Add => it.fold(first, |a, b| a + &b),
                    Op::Mul => it.fold(first, |a, b| a * &b),
                    Op::Max => it.fold(first, |a, b| S::max_of(&a, &b)),
                    Op::Min => it.fold(first, |a, b| S::min_of(&a, &b)),
                }
            }
        }
    }

    pub fn process<S: Scalar>(&self, space: &FilteredSpace<S>) -> FProcess<S> {
        let w = space.driver();
        FProcess::from_fn(space.depth(), |t, a| self.eval(t, w.at(t, a)))
    }
}

/// `τ` value in a joint table entry: an integer or `"alive"` (`τ > N`).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Deserialize)]
#[serde(untagged)]
pub enum TauSpec {
    At(usize),
    Label(AliveLabel),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AliveLabel {
    Alive,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JointEntry {
    pub path: String,
    pub tau: TauSpec,
    pub weight: Num,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Generator {
    /// The two-step look-ahead model.
    M2,
    Cox { hazard: Expr },
    Lookahead { hazard: Expr, tilt: Num },
    Independent { law: Vec<Num> },
    ConstantHazard { lambda: Num, closed: bool },
    /// A corpus draw; the seed defaults to the run seed.
    Random { family: Family, closed: bool, seed: Option<u64> },
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    pub depth: usize,
    #[serde(default = "quarter")]
    pub dt: Num,
    pub path_prob: Option<Vec<Num>>,
    pub joint: Option<Vec<JointEntry>>,
    pub generator: Option<Generator>,
}

fn quarter() -> Num {
    Num { num: 1, den: 4 }
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataSpec {
    #[serde(default = "zero_expr")]
    pub f: Expr,
    #[serde(default)]
    pub barrier: Option<Expr>,
    pub h: Expr,
}

fn zero_expr() -> Expr {
    Expr::Const(Num { num: 0, den: 1 })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Suite {
    Identities,
    Snell,
    Rbsde,
    Estimates,
    InfiniteHorizonConvergence,
}

impl Suite {
    pub fn name(&self) -> &'static str {
        match self {
            Suite::Identities => "identities",
            Suite::Snell => "snell",
            Suite::Rbsde => "rbsde",
            Suite::Estimates => "estimates",
            Suite::InfiniteHorizonConvergence => "infinite-horizon-convergence",
        }
    }
}

fn default_p_list() -> Vec<f64> {
    vec![2.0]
}

fn default_tolerance() -> f64 {
    1e-10
}

fn default_suites() -> Vec<Suite> {
    vec![Suite::Identities, Suite::Snell, Suite::Rbsde, Suite::Estimates]
}

fn yes() -> bool {
    true
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSpec {
    #[serde(default = "default_p_list")]
    pub p: Vec<f64>,
    /// Defaults to `T = N`.
    pub horizon: Option<Horizon>,
    #[serde(default = "default_suites")]
    pub suites: Vec<Suite>,
    #[serde(default)]
    pub backend: Backend,
    /// Allowed discrepancy for the float backend (the rational one demands 0).
    #[serde(default = "default_tolerance")]
    pub tolerance: f64,
    pub budget: Option<u128>,
    #[serde(default)]
    pub seed: u64,
    /// Compare backward induction against exhaustive rule search.
    #[serde(default = "yes")]
    pub brute_force: bool,
    /// Fresh corpus checked against the committed constants by the estimates suite.
    pub corpus: Option<CorpusSpec>,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    #[serde(default = "schema")]
    pub schema: u32,
    #[serde(default)]
    pub name: String,
    pub model: ModelSpec,
    pub data: DataSpec,
    pub run: RunSpec,
}

fn schema() -> u32 {
    SCENARIO_SCHEMA
}

pub fn parse_error(e: serde_json::Error) -> HorizonError {
    HorizonError::Parse { line: e.line(), column: e.column(), msg: e.to_string() }
}

impl Scenario {
    pub fn parse(text: &str) -> Result<Self> {
        let sc: Scenario = serde_json::from_str(text).map_err(parse_error)?;
        sc.validate()?;
        Ok(sc)
    }

    /// Checks that need no model.
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(HorizonError::Validation(m));
        if self.schema != SCENARIO_SCHEMA {
            return bad(format!("unsupported scenario schema {}", self.schema));
        }
        if self.model.joint.is_some() == self.model.generator.is_some() {
            return bad("give exactly one of `joint` and `generator`".into());
        }
        if self.run.p.is_empty() || self.run.p.iter().any(|p| !(*p > 1.0)) {
            return bad("every p must exceed 1".into());
        }
        if self.run.suites.is_empty() {
            return bad("no suites requested".into());
        }
        if !(self.run.tolerance >= 0.0) {
            return bad("tolerance must be nonnegative".into());
        }
        if let Some(c) = &self.run.corpus {
            c.validate()?;
        }
        Ok(())
    }

    pub fn horizon(&self) -> Horizon {
        self.run.horizon.unwrap_or(Horizon::Finite(self.model.depth))
    }

    pub fn budget(&self) -> u128 {
        self.run.budget.unwrap_or(crate::DEFAULT_BUDGET)
    }

    pub fn model<S: Scalar>(&self) -> Result<RandomTimeModel<S>> {
        let spec = &self.model;
        let n = spec.depth;
        let dt: S = spec.dt.to_scalar();
        let space = match &spec.path_prob {
            Some(pp) => {
                if pp.len() != 1usize << n.min(20) {
                    return Err(HorizonError::Validation(format!("path_prob needs {} entries", 1usize << n.min(20))));
                }
                FilteredSpace::new(n, dt.clone(), pp.iter().map(Num::to_scalar).collect())?
            }
            None => FilteredSpace::uniform(n, dt.clone())?,
        };
        if let Some(entries) = &spec.joint {
            return joint_model(space, entries, spec.path_prob.is_some());
        }
        match spec.generator.as_ref().expect("validated") {
            Generator::M2 => {
                if n != 2 {
                    return Err(HorizonError::Validation("the m2 generator has depth 2".into()));
                }
                let quarter = |x: (i64, i64)| S::from_ratio(x.0, 4 * x.1);
                let w = [(4, 5), (1, 5), (3, 5), (2, 5)]
                    .iter()
                    .map(|&(a, b)| vec![S::zero(), quarter((a, b)), quarter((b - a, b)), S::zero()])
                    .collect();
                RandomTimeModel::from_joint(space, w)
            }
            Generator::Cox { hazard } => RandomTimeModel::cox(space.clone(), &hazard.process(&space)),
            Generator::Lookahead { hazard, tilt } => {
                RandomTimeModel::lookahead(space.clone(), &hazard.process(&space), &tilt.to_scalar())
            }
            Generator::Independent { law } => {
                let law: Vec<S> = law.iter().map(Num::to_scalar).collect();
                RandomTimeModel::independent(space, &law)
            }
            Generator::ConstantHazard { lambda, closed } => {
                if spec.path_prob.is_some() {
                    return Err(HorizonError::Validation("constant_hazard uses the uniform tree".into()));
                }
                constant_hazard(n, dt, lambda.to_scalar(), *closed)
            }
            Generator::Random { family, closed, seed } => {
                let mut rng = corpus::instance_rng(seed.unwrap_or(self.run.seed), 0);
                let m: RandomTimeModel<S> = corpus::random_model(&mut rng, *family, n, *closed, spec.path_prob.is_none())?;
                // Keep the time step of the scenario.
                let space = FilteredSpace::new(n, dt, m.space().path_prob().to_vec())?;
                let w = (0..space.n_paths()).map(|p| (0..=n + 1).map(|k| m.p().weight(p, k).clone()).collect()).collect();
                RandomTimeModel::from_joint(space, w)
            }
        }
    }

    pub fn data<S: Scalar>(&self, model: &RandomTimeModel<S>) -> RBSDEData<S> {
        let space = model.space();
        let d = &self.data;
        RBSDEData::new(
            d.f.process(space),
            d.barrier.as_ref().map(|b| b.process(space)),
            d.h.process(space),
            self.horizon(),
            self.run.p[0],
        )
    }
}

fn joint_model<S: Scalar>(space: FilteredSpace<S>, entries: &[JointEntry], explicit_paths: bool) -> Result<RandomTimeModel<S>> {
    let n = space.depth();
    let mut w = vec![vec![S::zero(); n + 2]; space.n_paths()];
    for e in entries {
        let path = parse_path(&e.path)
            .filter(|_| e.path.len() == n)
            .ok_or_else(|| HorizonError::Validation(format!("path {:?} is not a word of length {n} over u/d", e.path)))?;
        let k = match e.tau {
            TauSpec::At(k) if k >= 1 && k <= n => k,
            TauSpec::At(k) => return Err(HorizonError::Validation(format!("τ = {k} is outside 1..={n}"))),
            TauSpec::Label(AliveLabel::Alive) => n + 1,
        };
        w[path][k] = w[path][k].clone() + &e.weight.to_scalar::<S>();
    }
    if explicit_paths {
        return RandomTimeModel::from_joint(space, w);
    }
    // Path probabilities follow from the table.
    let probs: Vec<S> = w.iter().map(|r| crate::scalar::sum(r.iter().cloned())).collect();
    let space = FilteredSpace::new(n, space.dt().clone(), probs)?;
    RandomTimeModel::from_joint(space, w)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::random_time::{model_m2, Mode};
    use crate::scalar::Rational;

    #[test]
    fn numbers_are_exact() {
        let n: Num = serde_json::from_str("0.1").unwrap();
        assert_eq!(n, Num { num: 1, den: 10 });
        let n: Num = serde_json::from_str("\"-3/8\"").unwrap();
        assert_eq!(n, Num { num: -3, den: 8 });
        let n: Num = serde_json::from_str("-2.50").unwrap();
        assert_eq!(n, Num { num: -25, den: 10 });
        assert!(serde_json::from_str::<Num>("\"1/0\"").is_err());
    }

    #[test]
    fn expressions_evaluate() {
        let e: Expr = serde_json::from_str(r#"["max", ["+", "t", ["*", 0.5, "W"]], ["-", 1]]"#).unwrap();
        assert_eq!(e.eval::<Rational>(2, &Rational::from_ratio(-2, 1)), Rational::from_ratio(1, 1));
        assert_eq!(e.eval::<Rational>(0, &Rational::from_ratio(-4, 1)), Rational::from_ratio(-1, 1));
        assert!(serde_json::from_str::<Expr>(r#"["pow", 1, 2]"#).is_err());
    }

    #[test]
    fn m2_generator_matches_named_model() {
        let text = r#"{"model": {"depth": 2, "dt": 1, "generator": {"kind": "m2"}},
                       "data": {"h": 1}, "run": {}}"#;
        let sc = Scenario::parse(text).unwrap();
        let m: RandomTimeModel<Rational> = sc.model().unwrap();
        let reference = model_m2::<Rational>();
        assert_eq!(m.p().outcomes().collect::<Vec<_>>(), reference.p().outcomes().collect::<Vec<_>>());
    }

    #[test]
    fn joint_table_builds_path_probabilities() {
        let text = r#"{"model": {"depth": 1, "joint": [
            {"path": "u", "tau": 1, "weight": "1/4"}, {"path": "u", "tau": "alive", "weight": "1/4"},
            {"path": "d", "tau": "alive", "weight": 0.5}]},
            "data": {"h": "W"}, "run": {"suites": ["rbsde"]}}"#;
        let sc = Scenario::parse(text).unwrap();
        let m: RandomTimeModel<Rational> = sc.model().unwrap();
        assert_eq!(m.mode(), Mode::Open);
        assert_eq!(*m.g().at(1, 0), Rational::from_ratio(1, 2));
    }

    #[test]
    fn errors_carry_positions() {
        let err = Scenario::parse("{\n  \"model\": {\"depth\": 2,,}\n}").unwrap_err();
        assert!(matches!(err, HorizonError::Parse { line: 2, .. }), "{err:?}");
        let err = Scenario::parse(r#"{"model": {"depth": 2}, "data": {"h": 0}, "run": {"suites": ["nope"]}}"#).unwrap_err();
        assert!(matches!(err, HorizonError::Parse { .. }));
        let err = Scenario::parse(r#"{"model": {"depth": 2}, "data": {"h": 0}, "run": {}}"#).unwrap_err();
        assert!(matches!(err, HorizonError::Validation(_)));
    }
}
