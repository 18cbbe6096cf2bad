//! Exact evaluation of the alphabet-size and rate bounds, and audits that
//! join a verified code to the bound its partition implies.
//!
//! Values that involve `lg` of a non-power-of-two are carried as certified
//! intervals. A bound is "satisfied" only when the measured interval lies
//! entirely on the right side of the bound interval.

use std::collections::BTreeMap;

use serde::Serialize;

use crate::code::{Caps, TreeCode};
use crate::error::{Error, Result};
use crate::partitions::{
    ghk_levels, validate_laminar, DeficiencyLedger, ImmKind, ImmediacySpec, LaminarPartition,
};
use crate::rational::{self, fmt_q, lg, pow2, Interval, Q};
use crate::verify::check_neighborhood_decoding;

/// Which bound a report evaluates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum FormulaId {
    /// `lg|Σ| >= α·ℓ·lg|Σ_in|` for `(α, ℓ)`-immediacy codes.
    LaminarAlphabet,
    /// `lg|Σ| >= α·(ℓ - D/n)·lg|Σ_in|` for `D`-deficient ones.
    DeficientAlphabet,
    /// `lg|Σ| >= ℓ / 2^(1+κ)` for codes with an immediacy function.
    ImmAlphabet,
    /// `ρ <= 4t / (δ·Imm⁻¹(n/2))`.
    ImmRateGeneral,
    /// `ρ <= 4·lg(4/δ) / (δ·lg(n/2))` for `Imm(k) = 2^k`.
    ImmRateExp,
    /// `ρ <= 4·⌈lg lg(8/δ)⌉ / (δ·lg lg(n/2))` for `Imm(k) = 2^(2^k)`.
    ImmRateDoubleExp,
    /// `lg|Σ| >= (m-1)/4` for the layered-scale construction.
    LayeredAlphabet,
    /// `lg|Σ| >= k/2` for the dyadic construction on `2^k` positions.
    DyadicAlphabet,
    /// `lg|Σ|/lg|Σ_in| >= 2^-κ·ℓ >= δ·lg(n/2m) / (2·lg(2/δ))`.
    WindowRatio,
    /// `δ / lg(2/δ) <= 2·(lg|Σ|/lg|Σ_in|) / lg(n/2m)`.
    DistanceTradeoff,
}

/// Which side of the bound the measured value must lie on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    /// measured >= bound
    AtLeast,
    /// measured <= bound
    AtMost,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct BoundReport {
    pub formula: FormulaId,
    pub direction: Direction,
    /// Named inputs as `"p/q"` strings.
    pub inputs: BTreeMap<String, String>,
    pub bound: Interval,
    /// See [`BoundReport::rounded`].
    #[serde(with = "crate::rational::serde_q")]
    pub value: Q,
    pub measured: Option<Interval>,
    /// `None` without a measurement, or when the intervals overlap.
    pub satisfied: Option<bool>,
    /// Lower bounds `<= 0` on `lg|Σ|`, or rate upper bounds `>= 1`.
    pub vacuous: bool,
}

impl BoundReport {
    fn new(formula: FormulaId, direction: Direction, bound: Interval) -> Self {
        let value = match direction {
            Direction::AtLeast => bound.lo,
            Direction::AtMost => bound.hi,
        };
        BoundReport {
            formula,
            direction,
            inputs: BTreeMap::new(),
            bound,
            value,
            measured: None,
            satisfied: None,
            vacuous: false,
        }
    }

    fn input(mut self, name: &str, v: &Q) -> Self {
        self.inputs.insert(name.to_string(), fmt_q(v));
        self
    }

    fn vacuous_if(mut self, v: bool) -> Self {
        self.vacuous = v;
        self
    }

    /// The bound as one number, rounded so the stated inequality stays
    /// true: lower bounds round down and upper bounds round up. Verdicts
    /// compare against the whole interval instead.
    pub fn rounded(&self) -> Q {
        self.value
    }

    /// Attaches a measurement and decides the comparison.
    pub fn with_measured(mut self, m: Interval) -> Self {
        self.satisfied = match self.direction {
            Direction::AtLeast if m.lo >= self.bound.hi => Some(true),
            Direction::AtLeast if m.hi < self.bound.lo => Some(false),
            Direction::AtMost if m.hi <= self.bound.lo => Some(true),
            Direction::AtMost if m.lo > self.bound.hi => Some(false),
            _ => None,
        };
        self.measured = Some(m);
        self
    }
}

/// `α·ℓ·lg|Σ_in|`.
pub fn rate_bound_plain(alpha: &Q, ell: u64, lg_sigma_in: &Q) -> Q {
    alpha * Q::from_integer(ell as i128) * lg_sigma_in
}

/// `α·(ℓ - D/n)·lg|Σ_in|`; may be non-positive, in which case it says
/// nothing.
pub fn rate_bound_deficient(alpha: &Q, ell: u64, d: u128, n: u128, lg_sigma_in: &Q) -> Q {
    assert!(n >= 1, "n must be positive");
    alpha * (Q::from_integer(ell as i128) - Q::new(d as i128, n as i128)) * lg_sigma_in
}

fn alphabet_report(formula: FormulaId, value: Interval) -> BoundReport {
    let vacuous = value.hi <= Q::from_integer(0);
    BoundReport::new(formula, Direction::AtLeast, value).vacuous_if(vacuous)
}

/// `k/2`: the alphabet bound for the dyadic `(1/2, k)` partition with
/// binary input. This bounds `lg|Σ|`, not `|Σ|`.
pub fn dyadic_alphabet_bound(k: u64) -> BoundReport {
    let v = rate_bound_plain(&Q::new(1, 2), k, &Q::from_integer(1));
    alphabet_report(FormulaId::DyadicAlphabet, Interval::exact(v))
        .input("k", &Q::from_integer(k as i128))
}

/// `(m-1)/4`: the deficient bound with `α = 1/4`, `ℓ = m` and `D = n`.
pub fn layered_alphabet_bound(m: u64) -> BoundReport {
    let v = rate_bound_deficient(&Q::new(1, 4), m, 1, 1, &Q::from_integer(1));
    alphabet_report(FormulaId::LayeredAlphabet, Interval::exact(v))
        .input("m", &Q::from_integer(m as i128))
}

/// `⌈lg lg z⌉` for rational `z > 2`, computed exactly as the least `k >= 0`
/// with `z <= 2^(2^k)`.
pub fn ceil_lg_lg(z: &Q) -> Result<u32> {
    if *z <= Q::from_integer(2) {
        return Err(Error::invalid("lg lg z needs z > 2"));
    }
    (0..7u32)
        .find(|&k| *z <= pow2(1i64 << k))
        .ok_or_else(|| Error::invalid("argument too large"))
}

fn lg_of(iv: &Interval) -> Interval {
    Interval {
        lo: lg(&iv.lo).lo,
        hi: lg(&iv.hi).hi,
    }
}

/// Rate upper bounds for codes with an immediacy function.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ImmRateReport {
    pub kappa: u32,
    pub t: u32,
    pub ell: u64,
    /// `ℓ / 2^(1+κ)` as a lower bound on `lg|Σ|`.
    pub alphabet: BoundReport,
    /// `4t / (δ·Imm⁻¹(n/2))`.
    pub general: BoundReport,
    /// The closed form for the exponential kinds.
    pub closed_form: Option<BoundReport>,
}

/// Evaluates the rate upper bounds at `n`, which must equal `2·Imm(ℓt)` for
/// some `ℓ >= 1`.
pub fn imm_rate_upper(spec: &ImmediacySpec, n: u128) -> Result<ImmRateReport> {
    let t = spec.t as u64;
    let ell = (1..=128u64)
        .take_while(|&l| spec.imm(l * t).is_some())
        .find(|&l| spec.imm(l * t).and_then(|v| v.checked_mul(2)) == Some(n))
        .ok_or_else(|| Error::invalid(format!("n = {n} is not 2·Imm(ℓ·{t}) for any ℓ >= 1")))?;
    let delta = spec.delta;
    let qn = Q::from_integer(n as i128);
    let alpha = pow2(-(spec.kappa as i64 + 1));
    let alphabet = alphabet_report(
        FormulaId::ImmAlphabet,
        Interval::exact(rate_bound_plain(&alpha, ell, &Q::from_integer(1))),
    )
    .input("ell", &Q::from_integer(ell as i128))
    .input("kappa", &Q::from_integer(spec.kappa as i128));

    let rate = |formula, v: Interval| {
        let vacuous = v.lo >= Q::from_integer(1);
        BoundReport::new(formula, Direction::AtMost, v)
            .vacuous_if(vacuous)
            .input("delta", &delta)
            .input("n", &qn)
    };
    // Imm⁻¹(n/2) = ℓt.
    let general = rate(
        FormulaId::ImmRateGeneral,
        Interval::exact(
            Q::from_integer(4 * t as i128) / (delta * Q::from_integer((ell * t) as i128)),
        ),
    )
    .input("t", &Q::from_integer(t as i128));

    let closed_form = match spec.kind {
        ImmKind::Exp => {
            let num = lg(&(Q::from_integer(4) / delta)).scale(&Q::from_integer(4));
            let den = lg(&(qn / 2)).scale(&delta);
            Some(rate(FormulaId::ImmRateExp, num.div_pos(&den)))
        }
        ImmKind::DoubleExp => {
            let c = ceil_lg_lg(&(Q::from_integer(8) / delta))?;
            let lglg = lg_of(&lg(&(qn / 2)));
            let den = lglg.scale(&delta);
            Some(rate(
                FormulaId::ImmRateDoubleExp,
                Interval::exact(Q::from_integer(4 * c as i128)).div_pos(&den),
            ))
        }
        ImmKind::Custom(_) => None,
    };
    Ok(ImmRateReport {
        kappa: spec.kappa,
        t: spec.t,
        ell,
        alphabet,
        general,
        closed_form,
    })
}

/// Evaluates `2^-κ·ℓ` and `δ·lg(n/2m) / (2·lg(2/δ))` and compares the
/// supplied `lg|Σ|/lg|Σ_in|` with the first of them, which is the bound the
/// partition actually yields. The second is reported for reference and is
/// never larger.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct WindowReport {
    pub kappa: u32,
    pub ell: u64,
    pub report: BoundReport,
    /// `δ·lg(n/2m) / (2·lg(2/δ))`.
    pub weaker_form: Interval,
    pub chain_holds: bool,
}

pub fn ghk_distance_bound(n: u128, m: u128, delta: &Q, ratio: &Interval) -> Result<WindowReport> {
    let (kappa, ell) = ghk_levels(n, m, delta)?;
    let ell = ell as u64;
    let strong = pow2(-(kappa as i64)) * Q::from_integer(ell as i128);
    let lg_ratio = Q::from_integer((n.trailing_zeros() - m.trailing_zeros() - 1) as i128);
    let weaker_form =
        Interval::exact(delta * lg_ratio / 2).div_pos(&lg(&(Q::from_integer(2) / delta)));
    let report = alphabet_report(FormulaId::WindowRatio, Interval::exact(strong))
        .input("n", &Q::from_integer(n as i128))
        .input("m", &Q::from_integer(m as i128))
        .input("delta", delta)
        .with_measured(ratio.clone());
    Ok(WindowReport {
        kappa,
        ell,
        chain_holds: weaker_form.hi <= strong,
        report,
        weaker_form,
    })
}

/// The window bound at the parameters of the constant-rate construction:
/// `Σ_in = {0,1}^(lg n/ε)`, `Σ = {0,1}^(1 + lg n/ε)`, `δ = ε/(32·k_0·lg n)`,
/// `m = (k_0/ε)·lg n`.
pub fn ghk_construction_bound(n: u128, k0: u64, epsilon: &Q) -> Result<WindowReport> {
    if !rational::is_power_of_two(n) {
        return Err(Error::invalid("n must be a power of two"));
    }
    let lg_n = n.trailing_zeros() as i128;
    if !(lg_n as u128).is_power_of_two() || !k0.is_power_of_two() {
        return Err(Error::invalid("lg n and k_0 must be powers of two"));
    }
    if *epsilon.numer() != 1 || !(*epsilon.denom() as u128).is_power_of_two() {
        return Err(Error::invalid("1/ε must be a power of two"));
    }
    let lg_in = Q::from_integer(lg_n) / epsilon;
    let ratio = (lg_in + 1) / lg_in;
    let delta = epsilon / Q::from_integer(32 * k0 as i128 * lg_n);
    let m = (Q::from_integer(k0 as i128) / epsilon) * Q::from_integer(lg_n);
    ghk_distance_bound(n, *m.numer() as u128, &delta, &Interval::exact(ratio))
}

/// `δ/lg(2/δ)` against `2·ratio/lg(n/2m)`. Reports `None` when `m = n/2`,
/// where the right side is unbounded.
pub fn distance_tradeoff(n: u128, m: u128, delta: &Q, ratio: &Q) -> Result<Option<BoundReport>> {
    ghk_levels(n, m, delta)?;
    let lg_ratio = (n.trailing_zeros() - m.trailing_zeros() - 1) as i128;
    if lg_ratio == 0 {
        return Ok(None);
    }
    let bound = Q::from_integer(2) * ratio / Q::from_integer(lg_ratio);
    let measured = Interval::exact(*delta).div_pos(&lg(&(Q::from_integer(2) / delta)));
    Ok(Some(
        BoundReport::new(
            FormulaId::DistanceTradeoff,
            Direction::AtMost,
            Interval::exact(bound),
        )
        .input("n", &Q::from_integer(n as i128))
        .input("m", &Q::from_integer(m as i128))
        .input("delta", delta)
        .input("ratio", ratio)
        .with_measured(measured),
    ))
}

/// What is being audited.
pub enum AuditSubject<'a> {
    /// A concrete code; neighborhood decoding is verified exhaustively.
    Code(&'a dyn TreeCode),
    /// The full-prefix code of length `n`, too long to enumerate. Every
    /// block with `max rg > max lf` decodes because that symbol carries the
    /// whole prefix.
    Trivial { n: usize },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct AuditReport {
    pub code: String,
    /// How neighborhood decoding was established.
    pub verification: String,
    /// `lg|Σ|` against the bound.
    pub report: BoundReport,
    /// `lg|Σ'| = lg|Σ| + lg|Σ_in|` of the systematic version, against the
    /// bound plus `lg|Σ_in|`.
    pub systematic: BoundReport,
    pub deficiency: u128,
}

impl AuditReport {
    /// Satisfied on both the original and the systematic alphabet.
    pub fn satisfied(&self) -> bool {
        self.report.satisfied == Some(true) && self.systematic.satisfied == Some(true)
    }
}

/// Compares the measured alphabet of a verified code with the bound its
/// partition and ledger imply. Codes that fail verification are refused.
pub fn audit_code(
    subject: AuditSubject<'_>,
    p: &LaminarPartition,
    ledger: Option<&DeficiencyLedger>,
    caps: &Caps,
) -> Result<AuditReport> {
    let validation = validate_laminar(p)?;
    if !validation.passed() {
        return Err(Error::Precondition("partition fails validation".into()));
    }
    let (name, n, lg_sigma, lg_in, verification) = match subject {
        AuditSubject::Code(code) => {
            let nb = check_neighborhood_decoding(code, p, ledger, caps)?;
            if !nb.verdict.pass {
                let at = nb.verdict.witness.as_ref().and_then(|w| w.block);
                return Err(Error::RefusedUnverified(format!(
                    "{} fails neighborhood decoding at {at:?}",
                    code.name()
                )));
            }
            (
                code.name(),
                code.n(),
                code.output_alphabet().lg(),
                code.input_alphabet().lg(),
                "exhaustive".to_string(),
            )
        }
        AuditSubject::Trivial { n } => {
            if n != p.n() {
                return Err(Error::invalid("code length does not match the partition"));
            }
            for i in 1..=p.ell() {
                for (idx, b) in p.level(i).iter().enumerate() {
                    let skip = ledger.is_some_and(|l| {
                        l.contains(crate::partitions::BlockRef {
                            level: i,
                            index: idx,
                        })
                    });
                    if !skip && b.rg().last() < b.lf().last() {
                        return Err(Error::RefusedUnverified(format!(
                            "block {idx} at level {i} ends its right part before its left part"
                        )));
                    }
                }
            }
            (
                format!("trivial(n={n})"),
                n,
                Interval::exact(Q::from_integer(n as i128)),
                Interval::exact(Q::from_integer(1)),
                "structural".to_string(),
            )
        }
    };
    if n != p.n() {
        return Err(Error::invalid("code length does not match the partition"));
    }
    let d = ledger.map_or(0, DeficiencyLedger::budget_used);
    let coeff = p.alpha() * (Q::from_integer(p.ell() as i128) - Q::new(d as i128, n as i128));
    let bound = lg_in.scale(&coeff);
    let formula = if ledger.is_some() {
        FormulaId::DeficientAlphabet
    } else {
        FormulaId::LaminarAlphabet
    };
    let base = |v: Interval| {
        alphabet_report(formula, v)
            .input("alpha", &p.alpha())
            .input("ell", &Q::from_integer(p.ell() as i128))
            .input("D", &Q::from_integer(d as i128))
            .input("n", &Q::from_integer(n as i128))
    };
    let report = base(bound.clone()).with_measured(lg_sigma.clone());
    let systematic = base(bound.add(&lg_in)).with_measured(lg_sigma.add(&lg_in));
    Ok(AuditReport {
        code: name,
        verification,
        report,
        systematic,
        deficiency: d,
    })
}
