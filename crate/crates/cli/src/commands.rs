//! The subcommands as library functions. Each takes JSON input and returns
//! an [`Outcome`] whose body is the JSON the binary prints.

use std::sync::Arc;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use treecode_core::bounds::{
    audit_code, distance_tradeoff, dyadic_alphabet_bound, ghk_construction_bound,
    ghk_distance_bound, imm_rate_upper, layered_alphabet_bound, rate_bound_deficient,
    rate_bound_plain, AuditSubject,
};
use treecode_core::code::{make_systematic, tabulate, Caps, Codebook, TreeCode};
use treecode_core::constructions::{find_tree_code, random_code_search};
use treecode_core::entropy::ledger_replay;
use treecode_core::formats::{CodeRecipe, CodeSource, ImmChoice, PartitionSource, TableFile};
use treecode_core::partitions::{
    validate_laminar, ChsScales, DeficiencyLedger, ImmediacySpec, LaminarPartition, LedgerEntry,
    PartitionFile,
};
use treecode_core::rational::{fmt_q, Interval, Q};
use treecode_core::verify::{
    check_chs_condition, check_eks_condition, check_ghk_condition, check_immediacy_function,
    check_neighborhood_decoding, check_tree_distance, check_tree_distance_messages, tree_distance,
    GhkParams, Imm, ImmScope,
};
use treecode_core::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Json,
    Text,
}

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub seed: u64,
    pub caps: Caps,
    pub format: Format,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 0,
            caps: Caps::default(),
            format: Format::Json,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Pass,
    Fail,
}

#[derive(Debug, Clone)]
pub struct Outcome {
    pub status: Status,
    pub body: Value,
}

impl Outcome {
    fn pass(body: Value) -> Self {
        Outcome {
            status: Status::Pass,
            body,
        }
    }

    fn judged(pass: bool, body: Value) -> Self {
        Outcome {
            status: if pass { Status::Pass } else { Status::Fail },
            body,
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self.status {
            Status::Pass => 0,
            Status::Fail => 2,
        }
    }

    pub fn render(&self, format: Format) -> String {
        match format {
            Format::Json => serde_json::to_string_pretty(&self.body).expect("serializable") + "\n",
            Format::Text => {
                let mut out = String::new();
                render_text(&self.body, "", &mut out);
                out
            }
        }
    }
}

fn render_text(v: &Value, prefix: &str, out: &mut String) {
    match v {
        Value::Object(map) => {
            for (k, v) in map {
                let key = if prefix.is_empty() {
                    k.clone()
                } else {
                    format!("{prefix}.{k}")
                };
                render_text(v, &key, out);
            }
        }
        Value::Array(items) if items.iter().all(|i| !i.is_object() && !i.is_array()) => {
            let parts: Vec<String> = items.iter().map(scalar).collect();
            out.push_str(&format!("{prefix}: [{}]\n", parts.join(", ")));
        }
        Value::Array(items) => {
            for (i, v) in items.iter().enumerate() {
                render_text(v, &format!("{prefix}[{i}]"), out);
            }
        }
        other => out.push_str(&format!("{prefix}: {}\n", scalar(other))),
    }
}

fn scalar(v: &Value) -> String {
    match v {
        Value::String(s) => s.clone(),
        other => other.to_string(),
    }
}

/// Exit code for a library error.
pub fn exit_code_for(e: &Error) -> i32 {
    match e {
        Error::CapExceeded { .. } => 3,
        Error::RefusedUnverified(_) | Error::SearchFailed(_) => 2,
        Error::InvalidParameter(_)
        | Error::Structural { .. }
        | Error::Divisibility { .. }
        | Error::NotSystematic { .. }
        | Error::NotOnline { .. }
        | Error::Precondition(_)
        | Error::Format(_) => 4,
    }
}

fn to_value<T: Serialize>(v: &T) -> Value {
    serde_json::to_value(v).expect("serializable")
}

fn parse<T: for<'de> Deserialize<'de>>(input: &str, what: &str) -> Result<T> {
    serde_json::from_str(input).map_err(|e| Error::Format(format!("{what}: {e}")))
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum BuildInput {
    Code(CodeSource),
    Partition(PartitionSource),
}

/// Builds a code or partition from a recipe. EKS recipes come back with
/// their block codes; other codes come back tabulated.
pub fn cmd_build(input: &str, cfg: &RunConfig) -> Result<Outcome> {
    match parse::<BuildInput>(input, "build recipe")? {
        BuildInput::Code(src) => {
            if let Some(p) = src.eks_params()? {
                return Ok(Outcome::pass(to_value(&CodeRecipe::EksParams(p))));
            }
            let code = src.load()?;
            let table = tabulate(&code, &cfg.caps)?;
            Ok(Outcome::pass(to_value(&TableFile::from_code(&table)?)))
        }
        BuildInput::Partition(src) => {
            let (p, ledger) = src.load()?;
            let report = validate_laminar(&p)?;
            Ok(Outcome::judged(
                report.passed(),
                json!({
                    "partition": PartitionFile::from_partition(&p)?,
                    "ledger": ledger.map(|l| l.to_entries()),
                    "ell": p.ell(),
                    "validation": report,
                }),
            ))
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(rename_all = "snake_case")]
enum ImmArg {
    Linear,
    Exp,
    DoubleExp,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
enum ImmInput {
    Named(ImmArg),
    Values(Vec<u64>),
}

impl ImmInput {
    fn imm(&self) -> Imm {
        match self {
            ImmInput::Named(ImmArg::Linear) => Imm::Linear,
            ImmInput::Named(ImmArg::Exp) => Imm::Exp,
            ImmInput::Named(ImmArg::DoubleExp) => Imm::DoubleExp,
            ImmInput::Values(v) => Imm::Values(v.clone()),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, Deserialize)]
#[serde(rename_all = "snake_case")]
enum ScopeArg {
    #[default]
    Every,
    FirstOnly,
}

#[derive(Debug, Deserialize)]
#[serde(tag = "property", rename_all = "snake_case")]
enum Check {
    TreeDistance {
        #[serde(with = "treecode_core::rational::serde_q")]
        delta: Q,
    },
    TreeDistanceMessages {
        #[serde(with = "treecode_core::rational::serde_q")]
        delta: Q,
    },
    Distance,
    Immediacy {
        imm: ImmInput,
        #[serde(with = "treecode_core::rational::serde_q")]
        delta: Q,
        #[serde(default)]
        scope: ScopeArg,
    },
    Neighborhood {
        partition: PartitionSource,
        #[serde(default)]
        ledger: Option<Vec<LedgerEntry>>,
    },
    Eks {
        #[serde(with = "treecode_core::rational::serde_q")]
        delta: Q,
        k: u32,
    },
    Ghk {
        n: usize,
        m: usize,
        #[serde(with = "treecode_core::rational::serde_q")]
        delta: Q,
    },
    Chs {
        m: usize,
        l1: u64,
        shift: i64,
    },
    Online,
    Systematic,
}

#[derive(Debug, Deserialize)]
struct VerifyInput {
    code: CodeSource,
    check: Check,
}

fn load_partition(
    src: &PartitionSource,
    entries: Option<&[LedgerEntry]>,
) -> Result<(LaminarPartition, Option<DeficiencyLedger>)> {
    let (p, carried) = src.load()?;
    let ledger = match entries {
        Some(e) => Some(DeficiencyLedger::from_entries(&p, e)?),
        None => carried,
    };
    Ok((p, ledger))
}

/// Runs one certifier on one code.
pub fn cmd_verify(input: &str, cfg: &RunConfig) -> Result<Outcome> {
    let req: VerifyInput = parse(input, "verify request")?;
    let code = req.code.load()?;
    let caps = &cfg.caps;
    let verdict = |v: treecode_core::verify::Verdict| Outcome::judged(v.pass, to_value(&v));
    Ok(match req.check {
        Check::TreeDistance { delta } => verdict(check_tree_distance(&code, &delta, caps)?),
        Check::TreeDistanceMessages { delta } => {
            verdict(check_tree_distance_messages(&code, &delta, caps)?)
        }
        Check::Distance => {
            let d = tree_distance(&code, caps)?;
            Outcome::pass(
                json!({ "property": "distance", "code": code.name(), "delta": fmt_q(&d) }),
            )
        }
        Check::Immediacy { imm, delta, scope } => {
            let scope = match scope {
                ScopeArg::Every => ImmScope::Every,
                ScopeArg::FirstOnly => ImmScope::FirstOnly,
            };
            verdict(check_immediacy_function(
                &code,
                &imm.imm(),
                &delta,
                scope,
                caps,
            )?)
        }
        Check::Neighborhood { partition, ledger } => {
            let (p, ledger) = load_partition(&partition, ledger.as_deref())?;
            let r = check_neighborhood_decoding(&code, &p, ledger.as_ref(), caps)?;
            Outcome::judged(r.verdict.pass, to_value(&r))
        }
        Check::Eks { delta, k } => verdict(check_eks_condition(&code, &delta, k, caps)?),
        Check::Ghk { n, m, delta } => verdict(check_ghk_condition(
            &code,
            &GhkParams::new(n, m, delta)?,
            caps,
        )?),
        Check::Chs { m, l1, shift } => {
            let r = check_chs_condition(&code, &ChsScales::new(l1 as u128, shift, m)?, caps)?;
            Outcome::judged(r.verdict.pass, to_value(&r))
        }
        Check::Online => {
            let book = Codebook::materialize(&code, caps)?;
            let v = book.online_violation();
            Outcome::judged(
                v.is_none(),
                json!({
                    "property": "online",
                    "pass": v.is_none(),
                    "witness": v.map(|(x, y, pos)| json!({
                        "x": book.message(x), "y": book.message(y), "position": pos + 1
                    })),
                }),
            )
        }
        Check::Systematic => {
            let book = Codebook::materialize(&code, caps)?;
            let v = book.systematic_violation();
            Outcome::judged(
                v.is_none(),
                json!({ "property": "systematic", "pass": v.is_none(), "position": v.map(|p| p + 1) }),
            )
        }
    })
}

fn q_field(params: &Value, name: &str) -> Result<Q> {
    match params.get(name) {
        Some(Value::String(s)) => treecode_core::rational::parse_q(s),
        Some(Value::Number(n)) if n.is_i64() => Ok(Q::from_integer(n.as_i64().unwrap() as i128)),
        _ => Err(Error::invalid(format!(
            "missing rational parameter {name:?}"
        ))),
    }
}

fn u_field(params: &Value, name: &str) -> Result<u64> {
    params
        .get(name)
        .and_then(Value::as_u64)
        .ok_or_else(|| Error::invalid(format!("missing integer parameter {name:?}")))
}

fn opt_q(params: &Value, name: &str) -> Result<Option<Q>> {
    params.get(name).map(|_| q_field(params, name)).transpose()
}

/// Evaluates a named bound. `measured`, when given, is compared with it.
pub fn cmd_bound(formula: &str, params: &str) -> Result<Outcome> {
    let p: Value = parse(params, "bound parameters")?;
    let measured = opt_q(&p, "measured")?.map(Interval::exact);
    let attach = |r: treecode_core::bounds::BoundReport| match &measured {
        Some(m) => r.with_measured(m.clone()),
        None => r,
    };
    let judged = |r: treecode_core::bounds::BoundReport| {
        let ok = r.satisfied != Some(false);
        Outcome::judged(ok, to_value(&r))
    };
    Ok(match formula {
        "laminar_alphabet" | "deficient_alphabet" => {
            let alpha = q_field(&p, "alpha")?;
            let ell = u_field(&p, "ell")?;
            let lg_in = q_field(&p, "lg_sigma_in")?;
            let value = if formula == "laminar_alphabet" {
                rate_bound_plain(&alpha, ell, &lg_in)
            } else {
                let d = u_field(&p, "d")? as u128;
                let n = u_field(&p, "n")? as u128;
                if n == 0 {
                    return Err(Error::invalid("n must be positive"));
                }
                rate_bound_deficient(&alpha, ell, d, n, &lg_in)
            };
            let vacuous = value <= Q::from_integer(0);
            let mut body = json!({
                "formula": formula,
                "direction": "at_least",
                "value": fmt_q(&value),
                "vacuous": vacuous,
            });
            let mut ok = true;
            if let Some(m) = &measured {
                ok = m.lo >= value;
                body["measured"] = json!(fmt_q(&m.lo));
                body["satisfied"] = json!(ok);
            }
            Outcome::judged(ok, body)
        }
        "dyadic_alphabet" => judged(attach(dyadic_alphabet_bound(u_field(&p, "k")?))),
        "layered_alphabet" => judged(attach(layered_alphabet_bound(u_field(&p, "m")?))),
        "imm_rate" => {
            let imm: ImmChoice =
                serde_json::from_value(p.get("imm").cloned().unwrap_or(Value::Null))
                    .map_err(|e| Error::Format(format!("imm: {e}")))?;
            let t = p.get("t").and_then(Value::as_u64).map(|t| t as u32);
            let spec = ImmediacySpec::new(imm.kind(), q_field(&p, "delta")?, t)?;
            let r = imm_rate_upper(&spec, u_field(&p, "n")? as u128)?;
            Outcome::pass(to_value(&r))
        }
        "window_ratio" => {
            let r = ghk_distance_bound(
                u_field(&p, "n")? as u128,
                u_field(&p, "m")? as u128,
                &q_field(&p, "delta")?,
                &Interval::exact(q_field(&p, "ratio")?),
            )?;
            Outcome::judged(r.report.satisfied != Some(false), to_value(&r))
        }
        "window_construction" => {
            let r = ghk_construction_bound(
                u_field(&p, "n")? as u128,
                u_field(&p, "k0")?,
                &q_field(&p, "epsilon")?,
            )?;
            Outcome::judged(r.report.satisfied != Some(false), to_value(&r))
        }
        "distance_tradeoff" => {
            let r = distance_tradeoff(
                u_field(&p, "n")? as u128,
                u_field(&p, "m")? as u128,
                &q_field(&p, "delta")?,
                &q_field(&p, "ratio")?,
            )?;
            match r {
                Some(r) => judged(r),
                None => Outcome::pass(json!({ "formula": "distance_tradeoff", "unbounded": true })),
            }
        }
        other => return Err(Error::invalid(format!("unknown formula {other:?}"))),
    })
}

/// Formula names accepted by [`cmd_bound`].
pub const FORMULAS: &[&str] = &[
    "laminar_alphabet",
    "deficient_alphabet",
    "dyadic_alphabet",
    "layered_alphabet",
    "imm_rate",
    "window_ratio",
    "window_construction",
    "distance_tradeoff",
];

#[derive(Debug, Deserialize)]
struct AuditInput {
    code: CodeSource,
    partition: PartitionSource,
    #[serde(default)]
    ledger: Option<Vec<LedgerEntry>>,
}

/// Verifies a code against a partition, compares its alphabet with the
/// implied bound and replays the entropy ledger on its systematic version.
/// The full-prefix code is audited structurally when it is too long to
/// enumerate.
pub fn cmd_audit(input: &str, cfg: &RunConfig) -> Result<Outcome> {
    let req: AuditInput = parse(input, "audit request")?;
    let (p, ledger) = load_partition(&req.partition, req.ledger.as_deref())?;
    let caps = &cfg.caps;
    if let CodeSource::Recipe(CodeRecipe::Trivial { n }) = req.code {
        if n as u32 > caps.max_message_bits {
            let a = audit_code(AuditSubject::Trivial { n }, &p, ledger.as_ref(), caps)?;
            return Ok(Outcome::judged(
                a.satisfied(),
                json!({ "audit": a, "entropy": null }),
            ));
        }
    }
    let code = req.code.load()?;
    let a = audit_code(AuditSubject::Code(&code), &p, ledger.as_ref(), caps)?;
    let book = Codebook::materialize(&code, caps)?;
    let sys: Arc<dyn TreeCode> = if book.systematic_violation().is_none() {
        code
    } else {
        Arc::new(make_systematic(code)?)
    };
    let l = ledger_replay(&sys, &p, ledger.as_ref(), caps)?;
    Ok(Outcome::judged(
        a.satisfied() && l.pass,
        json!({ "audit": a, "entropy": l }),
    ))
}

#[derive(Debug, Clone, Copy, Default, Deserialize)]
#[serde(rename_all = "snake_case")]
enum SearchMethod {
    #[default]
    Random,
    Backtrack,
}

#[derive(Debug, Deserialize)]
struct SearchInput {
    n: usize,
    sigma_out: u64,
    #[serde(with = "treecode_core::rational::serde_q")]
    delta: Q,
    #[serde(default = "default_trials")]
    trials: u64,
    #[serde(default)]
    method: SearchMethod,
}

fn default_trials() -> u64 {
    4096
}

/// Searches for a binary-input tree code of depth `n` over `sigma_out`
/// symbols reaching distance `delta`.
pub fn cmd_search(input: &str, cfg: &RunConfig) -> Result<Outcome> {
    let req: SearchInput = parse(input, "search request")?;
    match req.method {
        SearchMethod::Random => {
            let out = random_code_search(
                req.n,
                req.sigma_out,
                &req.delta,
                req.trials,
                cfg.seed,
                None,
                &cfg.caps,
            )?;
            let reached = out.delta >= req.delta;
            Ok(Outcome::judged(
                reached,
                json!({
                    "method": "random",
                    "seed": cfg.seed,
                    "target": fmt_q(&req.delta),
                    "delta": fmt_q(&out.delta),
                    "reached": reached,
                    "trial": out.trial,
                    "trials_run": out.trials_run,
                    "code": TableFile::from_code(&out.code)?,
                }),
            ))
        }
        SearchMethod::Backtrack => {
            let found = find_tree_code(req.n, req.sigma_out, &req.delta, &cfg.caps)?;
            let delta = found
                .as_ref()
                .map(|c| tree_distance(c, &cfg.caps))
                .transpose()?;
            Ok(Outcome::judged(
                found.is_some(),
                json!({
                    "method": "backtrack",
                    "target": fmt_q(&req.delta),
                    "reached": found.is_some(),
                    "delta": delta.map(|d| fmt_q(&d)),
                    "code": found.map(|c| TableFile::from_code(&c)).transpose()?,
                }),
            ))
        }
    }
}

/// Runs the built-in acceptance checks.
pub fn cmd_selftest(cfg: &RunConfig) -> Outcome {
    let results = crate::selftest::run_all(&cfg.caps);
    let pass = results.iter().all(|r| r.pass);
    Outcome::judged(pass, json!({ "criteria": results }))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn text_rendering_flattens_keys() {
        let o = Outcome::pass(json!({"a": {"b": 1, "c": [1, 2]}, "d": [{"e": "x"}]}));
        assert_eq!(o.render(Format::Text), "a.b: 1\na.c: [1, 2]\nd[0].e: x\n");
    }

    #[test]
    fn error_exit_codes() {
        let cap = Error::CapExceeded {
            what: "x",
            needed: 2,
            cap: 1,
        };
        assert_eq!(exit_code_for(&cap), 3);
        assert_eq!(exit_code_for(&Error::RefusedUnverified("x".into())), 2);
        assert_eq!(exit_code_for(&Error::invalid("x")), 4);
        let err = cmd_build(r#"{"kind":"trivial","n":30}"#, &RunConfig::default()).unwrap_err();
        assert_eq!(exit_code_for(&err), 3);
    }

    #[test]
    fn distance_and_systematic_checks() {
        let cfg = RunConfig::default();
        let out = cmd_verify(
            r#"{"code":{"kind":"identity","n":3},"check":{"property":"distance"}}"#,
            &cfg,
        )
        .unwrap();
        assert_eq!(out.body["delta"], "1/3");
        let out = cmd_verify(
            r#"{"code":{"kind":"trivial","n":3},"check":{"property":"systematic"}}"#,
            &cfg,
        )
        .unwrap();
        assert_eq!(out.status, Status::Pass);
        let out = cmd_search(
            r#"{"n":2,"sigma_out":2,"delta":"1","method":"backtrack"}"#,
            &cfg,
        )
        .unwrap();
        assert_eq!(out.exit_code(), 2);
    }
}
