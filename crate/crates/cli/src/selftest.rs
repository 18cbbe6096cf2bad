//! Acceptance checks run by `treecode selftest` and the acceptance test
//! target. Every audit performed along the way is kept so the final check
//! can confirm none of them came out unsatisfied.

use std::time::{Duration, Instant};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use treecode_core::bounds::{
    audit_code, dyadic_alphabet_bound, ghk_construction_bound, ghk_distance_bound, imm_rate_upper,
    layered_alphabet_bound, rate_bound_deficient, rate_bound_plain, AuditReport, AuditSubject,
};
use treecode_core::code::{
    make_systematic, rate, trivial_code, Alphabet, Caps, Codebook, FnCode, TableCode, TreeCode,
};
use treecode_core::constructions::EksParams;
use treecode_core::entropy::{
    ledger_replay, verify_data_processing, EntropyLedger, FiniteJoint, TOLERANCE,
};
use treecode_core::partitions::{
    build_from_imm, chs_partition, divisibility_rows, eks_partition, ghk_partition,
    validate_laminar, DeficiencyLedger, ImmKind, ImmediacySpec, LaminarPartition,
};
use treecode_core::rational::{fmt_q, q, Interval, Q};
use treecode_core::verify::{
    check_eks_condition, check_eks_condition_in, check_ghk_condition, check_ghk_condition_in,
    check_neighborhood_decoding, check_tree_distance, GhkParams, Scope,
};
use treecode_core::{Error, Result};

use crate::commands::{cmd_build, cmd_search, RunConfig};

#[derive(Debug, Clone, Serialize)]
pub struct CriterionResult {
    pub id: u32,
    pub name: &'static str,
    pub pass: bool,
    pub detail: String,
    pub elapsed_ms: u128,
    pub limit_ms: u128,
}

/// One audit, with whether the code had passed neighborhood decoding.
#[derive(Debug, Clone)]
struct AuditRecord {
    code: String,
    verified: bool,
    satisfied: Option<bool>,
}

#[derive(Default)]
struct Sentinel {
    records: Vec<AuditRecord>,
    refused: usize,
}

impl Sentinel {
    fn audit(
        &mut self,
        subject: AuditSubject<'_>,
        p: &LaminarPartition,
        ledger: Option<&DeficiencyLedger>,
        caps: &Caps,
    ) -> Result<Option<AuditReport>> {
        match audit_code(subject, p, ledger, caps) {
            Ok(a) => {
                let satisfied = match (a.report.satisfied, a.systematic.satisfied) {
                    (Some(true), Some(true)) => Some(true),
                    (Some(false), _) | (_, Some(false)) => Some(false),
                    _ => None,
                };
                self.records.push(AuditRecord {
                    code: a.code.clone(),
                    verified: true,
                    satisfied,
                });
                Ok(Some(a))
            }
            Err(Error::RefusedUnverified(_)) => {
                self.refused += 1;
                Ok(None)
            }
            Err(e) => Err(e),
        }
    }
}

type Check = fn(&Caps, &mut Sentinel) -> Result<(bool, String)>;

const CRITERIA: &[(u32, &str, u64, Check)] = &[
    (
        1,
        "trivial code distance and rate",
        1,
        trivial_code_distance,
    ),
    (2, "layered construction end to end", 60, eks_end_to_end),
    (
        3,
        "partition from an immediacy function",
        1,
        imm_partition_arithmetic,
    ),
    (4, "bound formulas", 1, bound_formulas),
    (5, "data processing lemma", 10, data_processing),
    (6, "entropy ledger replay", 120, entropy_ledger),
    (7, "condition checkers agree with decoding", 120, reductions),
    (
        8,
        "window bound at construction parameters",
        1,
        window_bound,
    ),
    (9, "seeded runs are byte-identical", 30, determinism),
    (
        10,
        "no verified code falls below its bound",
        120,
        soundness_sentinel,
    ),
];

/// Runs every check in order; the last one reads the audits of the others.
pub fn run_all(caps: &Caps) -> Vec<CriterionResult> {
    let mut sentinel = Sentinel::default();
    CRITERIA
        .iter()
        .map(|&(id, name, limit_s, check)| {
            let start = Instant::now();
            let outcome = check(caps, &mut sentinel);
            let elapsed = start.elapsed();
            let limit = Duration::from_secs(limit_s);
            let (mut pass, mut detail) = match outcome {
                Ok(r) => r,
                Err(e) => (false, format!("error: {e}")),
            };
            if elapsed > limit {
                pass = false;
                detail = format!("{detail}; exceeded {limit_s} s");
            }
            CriterionResult {
                id,
                name,
                pass,
                detail,
                elapsed_ms: elapsed.as_millis(),
                limit_ms: limit.as_millis(),
            }
        })
        .collect()
}

fn trivial_code_distance(caps: &Caps, _: &mut Sentinel) -> Result<(bool, String)> {
    let mut ok = true;
    for n in [4usize, 6, 8] {
        let c = trivial_code(n)?;
        ok &= check_tree_distance(&c, &q(1, 1), caps)?.pass;
        for above in [q(1001, 1000), q(3, 2), q(2, 1)] {
            let v = check_tree_distance(&c, &above, caps)?;
            ok &= !v.pass && v.witness.as_ref().is_some_and(|w| w.recheck(&c));
        }
        ok &= rate(&c) == Interval::exact(Q::new(1, n as i128));
    }
    Ok((
        ok,
        "n = 4, 6, 8: distance 1 passes, 1001/1000, 3/2, 2 fail, rate 1/n".into(),
    ))
}

const EKS_SEED: u64 = 2024;

fn eks_end_to_end(caps: &Caps, sentinel: &mut Sentinel) -> Result<(bool, String)> {
    let half = q(1, 2);
    let params = EksParams::build(3, &half, None, EKS_SEED)?;
    let certified = params.family.iter().all(|c| c.recertify() >= half);
    let code = params.code()?;
    let online = Codebook::materialize(&code, caps)?
        .online_violation()
        .is_none();
    let cond = check_eks_condition(&code, &half, 3, caps)?.pass;
    let p = eks_partition(3)?;
    let nb = check_neighborhood_decoding(&code, &p, None, caps)?
        .verdict
        .pass;
    let audit = sentinel.audit(AuditSubject::Code(&code), &p, None, caps)?;
    let bound_ok = dyadic_alphabet_bound(3).bound == Interval::exact(q(3, 2));
    let audit_ok = audit.as_ref().is_some_and(|a| {
        a.report.bound == Interval::exact(q(3, 2)) && a.report.satisfied == Some(true)
    });
    let measured = audit.map(|a| a.report.measured.map(|m| m.to_string()).unwrap_or_default());
    Ok((
        certified && online && cond && nb && bound_ok && audit_ok,
        format!(
            "b = {}, family certified {certified}, online {online}, condition {cond}, decoding {nb}, lg|Σ| = {} >= 3/2",
            params.b,
            measured.unwrap_or_else(|| "refused".into())
        ),
    ))
}

fn imm_partition_arithmetic(_: &Caps, _: &mut Sentinel) -> Result<(bool, String)> {
    let spec = ImmediacySpec::new(ImmKind::Exp, q(1, 2), None)?;
    let p = build_from_imm(&spec, 2)?;
    let lens: Vec<usize> = std::iter::once(p.base()[0].len())
        .chain((1..=2).map(|i| p.level(i)[0].len()))
        .collect();
    let lf: Vec<usize> = (1..=2).map(|i| p.level(i)[0].lf().len()).collect();
    let uniform = (1..=2).all(|i| {
        p.level(i)
            .iter()
            .all(|b| b.len() == lens[i] && b.lf().len() == lf[i - 1])
    }) && p.base().iter().all(|b| b.len() == lens[0]);
    let valid = validate_laminar(&p)?.passed();
    let rows = divisibility_rows(&spec, 2)?;
    let divisible = rows.len() == 2 && rows.iter().all(|r| r.holds);
    let ok = p.n() == 128
        && lens == [2, 16, 128]
        && lf == [2, 16]
        && uniform
        && p.alpha() == q(1, 8)
        && valid
        && divisible;
    Ok((
        ok,
        format!(
            "n = {}, block lengths {lens:?}, lf sizes {lf:?}, α = {}, valid {valid}, divisibility {divisible}",
            p.n(),
            fmt_q(&p.alpha())
        ),
    ))
}

fn bound_formulas(_: &Caps, _: &mut Sentinel) -> Result<(bool, String)> {
    let exp = ImmediacySpec::new(ImmKind::Exp, q(1, 2), None)?;
    let r = imm_rate_upper(&exp, 128)?;
    let closed = r.closed_form.as_ref().map(|c| c.bound.clone());
    let rate_ok = closed == Some(Interval::exact(q(4, 1)));
    let alphabet_ok = r.kappa == 2 && r.ell == 2 && r.alphabet.bound == Interval::exact(q(1, 4));
    let layered_ok = (1..=12u64).all(|m| {
        let v = Q::new(m as i128 - 1, 4);
        rate_bound_deficient(&q(1, 4), m, 1 << 10, 1 << 10, &q(1, 1)) == v
            && layered_alphabet_bound(m).bound == Interval::exact(v)
    });
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let identity_ok = (0..100).all(|_| {
        let alpha = Q::new(rng.gen_range(1..=16), rng.gen_range(1..=64));
        let ell = rng.gen_range(0..=40);
        let n = rng.gen_range(1..=1u128 << 20);
        let lg_in = Q::new(rng.gen_range(1..=32), rng.gen_range(1..=4));
        rate_bound_deficient(&alpha, ell, 0, n, &lg_in) == rate_bound_plain(&alpha, ell, &lg_in)
    });
    Ok((
        rate_ok && alphabet_ok && layered_ok && identity_ok,
        format!(
            "rate bound at δ = 1/2, n = 128: {}; alphabet ℓ/2^(1+κ) = {}; (m-1)/4 for m <= 12 {layered_ok}; D = 0 identity on 100 tuples {identity_ok}",
            closed.map(|c| c.to_string()).unwrap_or_default(),
            r.alphabet.bound
        ),
    ))
}

/// A joint over `(A, B, C)` with `A = f(B) = g(C)`.
fn function_pair_joint(rng: &mut ChaCha8Rng) -> FiniteJoint {
    let na = rng.gen_range(1..=3u64);
    let nb = rng.gen_range(1..=5u64);
    let nc = rng.gen_range(1..=5u64);
    let f: Vec<u64> = (0..nb).map(|_| rng.gen_range(0..na)).collect();
    let g: Vec<u64> = (0..nc).map(|_| rng.gen_range(0..na)).collect();
    let mut pairs: Vec<(u64, u64)> = (0..nb)
        .flat_map(|b| (0..nc).map(move |c| (b, c)))
        .filter(|&(b, c)| f[b as usize] == g[c as usize])
        .collect();
    pairs.shuffle(rng);
    pairs.truncate(rng.gen_range(1..=pairs.len().max(1)));
    if pairs.is_empty() {
        // f(0) has no partner; map C to it.
        return FiniteJoint::uniform(
            vec!["a".into(), "b".into(), "c".into()],
            vec![vec![f[0], 0, 0]],
        )
        .expect("valid joint");
    }
    let weights: Vec<i128> = pairs.iter().map(|_| rng.gen_range(1..=9)).collect();
    let total: i128 = weights.iter().sum();
    let support = pairs
        .iter()
        .zip(&weights)
        .map(|(&(b, c), &w)| (vec![f[b as usize], b, c], Q::new(w, total)))
        .collect();
    FiniteJoint::new(vec!["a".into(), "b".into(), "c".into()], support).expect("valid joint")
}

fn data_processing(_: &Caps, _: &mut Sentinel) -> Result<(bool, String)> {
    let mut rng = ChaCha8Rng::seed_from_u64(41);
    let mut worst_info = f64::INFINITY;
    let mut worst_entropy = f64::INFINITY;
    let mut all = true;
    for _ in 0..1000 {
        let j = function_pair_joint(&mut rng);
        let r = verify_data_processing(&j, &["a"], &["b"], &["c"])?;
        all &= r.information_margin >= -TOLERANCE && r.entropy_margin >= -TOLERANCE;
        worst_info = worst_info.min(r.information_margin);
        worst_entropy = worst_entropy.min(r.entropy_margin);
    }
    // A is a fresh bit, so it is a function of neither B nor C.
    let bad = FiniteJoint::uniform(
        vec!["a".into(), "b".into(), "c".into()],
        (0..8).map(|i| vec![i & 1, (i >> 1) & 1, i >> 2]).collect(),
    )?;
    let rejected = matches!(
        verify_data_processing(&bad, &["a"], &["b"], &["c"]),
        Err(Error::Precondition(_))
    );
    Ok((
        all && rejected,
        format!(
            "1000 joints, min I(B:C) - H(A) = {worst_info:.3e}, min H(B)+H(C)-H(B,C)-H(A) = {worst_entropy:.3e}, precondition rejected {rejected}"
        ),
    ))
}

fn ledger_ok(l: &EntropyLedger) -> bool {
    l.pass
        && l.levels.iter().all(|t| t.slack >= -TOLERANCE)
        && l.top_margin >= -TOLERANCE
        && l.base_margin >= -TOLERANCE
        && l.support_margin >= -TOLERANCE
        && l.chain_margin >= -TOLERANCE
}

fn min_slack(l: &EntropyLedger) -> f64 {
    l.levels
        .iter()
        .skip(1)
        .map(|t| t.slack)
        .fold(f64::INFINITY, f64::min)
}

/// The full-prefix code with `x_5` hidden from positions 6..8: decoding
/// fails only at the rightmost block of the layered partition at `n = 8`.
pub fn tail_masked_code() -> FnCode {
    FnCode::new(
        "tail-masked(n=8)",
        8,
        Alphabet::binary(),
        Alphabet::pow2(8),
        |x| {
            let full = trivial_code(8).expect("n <= 63").encode(x);
            (0..8)
                .map(|j| if j < 5 { full[j] } else { full[j] & !(1 << 3) })
                .collect()
        },
    )
}

fn entropy_ledger(caps: &Caps, sentinel: &mut Sentinel) -> Result<(bool, String)> {
    let p = eks_partition(3)?;
    let plain = rate_bound_plain(&q(1, 2), 3, &q(1, 1));
    let mut ok = true;
    let mut notes = Vec::new();

    let eks = EksParams::build(3, &q(1, 2), None, EKS_SEED)?.code()?;
    let codes: Vec<(&str, Box<dyn TreeCode>)> = vec![
        ("trivial", Box::new(trivial_code(8)?)),
        ("layered", Box::new(eks)),
    ];
    for (name, code) in &codes {
        sentinel.audit(AuditSubject::Code(code.as_ref()), &p, None, caps)?;
        let sys = make_systematic(code.as_ref())?;
        let l = ledger_replay(&sys, &p, None, caps)?;
        let bound_match = l.derived_bound == Interval::exact(plain);
        ok &= ledger_ok(&l) && bound_match && l.top_margin >= -TOLERANCE;
        notes.push(format!(
            "{name}: min slack {:.3}, bound {}",
            min_slack(&l),
            l.derived_bound
        ));
    }

    let (cp, ledger) = chs_partition(1, 2, -1)?;
    let tail = tail_masked_code();
    let decodes = check_neighborhood_decoding(&tail, &cp, Some(&ledger), caps)?
        .verdict
        .pass;
    sentinel.audit(AuditSubject::Code(&tail), &cp, Some(&ledger), caps)?;
    let sys = make_systematic(&tail)?;
    let l = ledger_replay(&sys, &cp, Some(&ledger), caps)?;
    let expected = rate_bound_deficient(
        &cp.alpha(),
        cp.ell() as u64,
        ledger.budget_used(),
        cp.n() as u128,
        &q(1, 1),
    );
    let bound_match = l.derived_bound == Interval::exact(expected);
    ok &= decodes && ledger_ok(&l) && bound_match;
    notes.push(format!(
        "layered-scale n = {}, D = {}: chain margin {:.3}, bound {}",
        cp.n(),
        ledger.budget_used(),
        l.chain_margin,
        l.derived_bound
    ));
    Ok((ok, notes.join("; ")))
}

/// Full-prefix codes with every position relabeled by a seeded bijection.
fn relabeled_prefix_code(n: usize, seed: u64, forget_bit: Option<usize>) -> FnCode {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let perms: Vec<Vec<u64>> = (0..n)
        .map(|k| {
            let mut v: Vec<u64> = (0..1u64 << (k + 1)).collect();
            v.shuffle(&mut rng);
            v
        })
        .collect();
    let name = match forget_bit {
        None => format!("relabeled-prefix(seed={seed})"),
        Some(i) => format!("forgetful-prefix(seed={seed}, x_{})", i + 1),
    };
    FnCode::new(
        name,
        n,
        Alphabet::binary(),
        Alphabet::pow2(n as u32),
        move |x| {
            let mut rank = 0u64;
            (0..x.len())
                .map(|k| {
                    rank = rank * 2 + x[k] as u64;
                    let mut r = rank;
                    if let Some(i) = forget_bit {
                        if k >= 2 && i <= k {
                            r &= !(1 << (k - i));
                        }
                    }
                    perms[k][r as usize]
                })
                .collect()
        },
    )
}

fn reductions(caps: &Caps, sentinel: &mut Sentinel) -> Result<(bool, String)> {
    let half = q(1, 2);
    let p = eks_partition(3)?;
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut eks_agree = 0;
    let mut eks_expected = 0;
    for i in 0..20u64 {
        let base = EksParams::build(3, &half, None, 100 + i)?;
        let satisfying = i < 10;
        let params = if satisfying {
            base
        } else {
            let mut rows = vec![2u32];
            rows.extend((3..=4).filter(|_| rng.gen_bool(0.5)));
            base.ablate(&rows)?
        };
        let code = params.code()?;
        let cond = check_eks_condition(&code, &half, 3, caps)?;
        let nb = check_neighborhood_decoding(&code, &p, None, caps)?;
        let mut agree = cond.pass == nb.verdict.pass;
        for b in nb.failing_blocks() {
            agree &= !check_eks_condition_in(&code, &half, 3, Scope::Block(b), caps)?.pass;
        }
        eks_agree += agree as usize;
        eks_expected += (nb.verdict.pass == satisfying) as usize;
        if nb.verdict.pass {
            sentinel.audit(AuditSubject::Code(&code), &p, None, caps)?;
        }
    }

    let params = GhkParams::new(8, 2, half)?;
    let gp = ghk_partition(8, 2, &half)?;
    let mut ghk_agree = 0;
    let mut ghk_expected = 0;
    for i in 0..20u64 {
        let satisfying = i < 10;
        let code = relabeled_prefix_code(8, 500 + i, (!satisfying).then_some((i % 2) as usize));
        let cond = check_ghk_condition(&code, &params, caps)?;
        let nb = check_neighborhood_decoding(&code, &gp, None, caps)?;
        let mut agree = cond.pass == nb.verdict.pass;
        for b in nb.failing_blocks() {
            agree &= !check_ghk_condition_in(&code, &params, Scope::Block(b), caps)?.pass;
        }
        ghk_agree += agree as usize;
        ghk_expected += (nb.verdict.pass == satisfying) as usize;
        if nb.verdict.pass {
            sentinel.audit(AuditSubject::Code(&code), &gp, None, caps)?;
        }
    }
    Ok((
        eks_agree == 20 && ghk_agree == 20 && eks_expected == 20 && ghk_expected == 20,
        format!(
            "layered: {eks_agree}/20 agree, {eks_expected}/20 as constructed; window family: {ghk_agree}/20 agree, {ghk_expected}/20 as constructed"
        ),
    ))
}

fn window_bound(_: &Caps, _: &mut Sentinel) -> Result<(bool, String)> {
    let r = ghk_construction_bound(1 << 16, 16, &q(1, 2))?;
    let sat = r.report.satisfied == Some(true)
        && r.kappa == 15
        && r.ell == 1
        && r.report.bound == Interval::exact(q(1, 1 << 15))
        && r.report.measured == Some(Interval::exact(q(33, 32)));
    let bad = ghk_distance_bound(1 << 16, 2, &q(1, 2), &Interval::exact(q(1, 1)))?;
    let unsat = bad.report.satisfied == Some(false);
    Ok((
        sat && unsat,
        format!(
            "construction: ratio 33/32 vs {} -> {:?}; n = 2^16, m = 2, δ = 1/2: ratio 1 vs {} -> {:?}",
            r.report.bound, r.report.satisfied, bad.report.bound, bad.report.satisfied
        ),
    ))
}

fn determinism(caps: &Caps, _: &mut Sentinel) -> Result<(bool, String)> {
    let cfg = RunConfig {
        seed: 99,
        caps: *caps,
        ..RunConfig::default()
    };
    let recipe = r#"{"kind":"eks","k":3,"delta":"1/2","seed":17}"#;
    let search = r#"{"n":5,"sigma_out":4,"delta":"1/2","trials":3000}"#;
    let run = |cfg: &RunConfig| -> Result<(String, String)> {
        Ok((
            cmd_build(recipe, cfg)?.render(cfg.format),
            cmd_search(search, cfg)?.render(cfg.format),
        ))
    };
    let first = run(&cfg)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(1)
        .build()
        .map_err(|e| Error::invalid(e.to_string()))?;
    let second = pool.install(|| run(&cfg))?;
    let third = run(&cfg)?;
    let same = first == second && second == third;
    Ok((
        same,
        format!(
            "build {} bytes, search {} bytes, identical across 3 runs (one single-threaded): {same}",
            first.0.len(),
            first.1.len()
        ),
    ))
}

fn soundness_sentinel(caps: &Caps, sentinel: &mut Sentinel) -> Result<(bool, String)> {
    // Random small tables against two partitions; only verified ones are audited.
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let parts = [eks_partition(2)?, ghk_partition(4, 1, &q(1, 2))?];
    for i in 0..200 {
        let sigma = [2u64, 3, 4, 6, 8, 16][i % 6];
        let edges = TableCode::edge_count(4, 2).expect("small");
        let table: Vec<u64> = (0..edges).map(|_| rng.gen_range(0..sigma)).collect();
        let code = TableCode::new(4, 2, Alphabet::new(sigma)?, table)?;
        for p in &parts {
            sentinel.audit(AuditSubject::Code(&code), p, None, caps)?;
        }
    }
    for seed in 0..10 {
        let code = relabeled_prefix_code(4, seed, None);
        for p in &parts {
            sentinel.audit(AuditSubject::Code(&code), p, None, caps)?;
        }
    }
    for k in 1..=3 {
        let code = EksParams::build(k, &q(1, 2), None, EKS_SEED)?.code()?;
        sentinel.audit(AuditSubject::Code(&code), &eks_partition(k)?, None, caps)?;
    }
    let exp = build_from_imm(&ImmediacySpec::new(ImmKind::Exp, q(1, 2), None)?, 2)?;
    sentinel.audit(AuditSubject::Trivial { n: 128 }, &exp, None, caps)?;
    let dexp = build_from_imm(&ImmediacySpec::new(ImmKind::DoubleExp, q(1, 2), None)?, 1)?;
    sentinel.audit(AuditSubject::Trivial { n: dexp.n() }, &dexp, None, caps)?;
    let big = ghk_partition(1 << 16, 512, &q(1, 1 << 14))?;
    sentinel.audit(AuditSubject::Trivial { n: 1 << 16 }, &big, None, caps)?;

    let violations: Vec<&AuditRecord> = sentinel
        .records
        .iter()
        .filter(|r| r.verified && r.satisfied == Some(false))
        .collect();
    let undecided = sentinel
        .records
        .iter()
        .filter(|r| r.satisfied.is_none())
        .count();
    let ok = violations.is_empty() && undecided == 0 && !sentinel.records.is_empty();
    Ok((
        ok,
        format!(
            "{} audits of verified codes, {} unsatisfied, {undecided} undecided, {} unverified refused{}",
            sentinel.records.len(),
            violations.len(),
            sentinel.refused,
            violations.first().map(|r| format!(", first: {}", r.code)).unwrap_or_default()
        ),
    ))
}
