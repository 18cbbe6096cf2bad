//! Tagged and laminar partitions of `[n]`, deficiency ledgers, and builders
//! for the interval partitions used by known tree-code constructions.
//!
//! Index sets are sorted lists of 1-based positions. Builders only ever emit
//! intervals, but the types hold arbitrary sets so that the validator can be
//! pointed at adversarial input.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rational::{self, pow2, Q};

/// Largest `n` any builder will materialize.
pub const MAX_MATERIALIZED_N: u128 = 1 << 24;

/// A block with its ordered split into a left part and a right part.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TaggedBlock {
    lf: Vec<usize>,
    rg: Vec<usize>,
}

impl TaggedBlock {
    /// Builds a block from explicit parts. Parts are sorted; emptiness and
    /// overlap are left for [`validate_laminar`] to report.
    pub fn new(mut lf: Vec<usize>, mut rg: Vec<usize>) -> Self {
        lf.sort_unstable();
        rg.sort_unstable();
        TaggedBlock { lf, rg }
    }

    /// The interval `[lo, hi]` with `lf = [lo, lf_hi]`.
    pub fn interval(lo: usize, lf_hi: usize, hi: usize) -> Self {
        TaggedBlock {
            lf: (lo..=lf_hi).collect(),
            rg: (lf_hi + 1..=hi).collect(),
        }
    }

    pub fn lf(&self) -> &[usize] {
        &self.lf
    }

    pub fn rg(&self) -> &[usize] {
        &self.rg
    }

    pub fn len(&self) -> usize {
        self.lf.len() + self.rg.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// `lf ∪ rg`, sorted.
    pub fn members(&self) -> Vec<usize> {
        let mut all: Vec<usize> = self.lf.iter().chain(&self.rg).copied().collect();
        all.sort_unstable();
        all
    }

    /// `(lo, lf_hi, hi)` when the block is an interval whose left part is a
    /// prefix of it.
    pub fn as_interval(&self) -> Option<(usize, usize, usize)> {
        let lo = *self.lf.first()?;
        let lf_hi = *self.lf.last()?;
        let hi = *self.rg.last()?;
        let contiguous = |v: &[usize]| v.windows(2).all(|w| w[1] == w[0] + 1);
        (contiguous(&self.lf) && contiguous(&self.rg) && self.rg[0] == lf_hi + 1)
            .then_some((lo, lf_hi, hi))
    }

    pub fn contains(&self, pos: usize) -> bool {
        self.lf.binary_search(&pos).is_ok() || self.rg.binary_search(&pos).is_ok()
    }
}

/// The tower `P_0, P_1, …, P_ℓ` with the declared size ratio `α`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LaminarPartition {
    n: usize,
    alpha: Q,
    base: Vec<Vec<usize>>,
    tagged: Vec<Vec<TaggedBlock>>,
}

impl LaminarPartition {
    /// Assembles a partition without checking it; see [`validate_laminar`].
    pub fn new(n: usize, alpha: Q, base: Vec<Vec<usize>>, tagged: Vec<Vec<TaggedBlock>>) -> Self {
        let base = base
            .into_iter()
            .map(|mut b| {
                b.sort_unstable();
                b
            })
            .collect();
        LaminarPartition {
            n,
            alpha,
            base,
            tagged,
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn alpha(&self) -> Q {
        self.alpha
    }

    /// Number of tagged levels.
    pub fn ell(&self) -> usize {
        self.tagged.len()
    }

    /// `P_0`.
    pub fn base(&self) -> &[Vec<usize>] {
        &self.base
    }

    /// `P_i` for `1 <= i <= ℓ`.
    pub fn level(&self, i: usize) -> &[TaggedBlock] {
        assert!(i >= 1 && i <= self.ell(), "tagged levels are 1..=ell");
        &self.tagged[i - 1]
    }

    /// Blocks of `P_i` as plain sets, for any `0 <= i <= ℓ`.
    pub fn level_sets(&self, i: usize) -> Vec<Vec<usize>> {
        if i == 0 {
            self.base.clone()
        } else {
            self.level(i).iter().map(TaggedBlock::members).collect()
        }
    }

    /// Index of the block of `P_i` containing position `n` (1 <= i <= ℓ).
    pub fn rightmost_block(&self, i: usize) -> Option<usize> {
        self.level(i).iter().position(|b| b.contains(self.n))
    }

    pub fn block_count(&self) -> usize {
        self.base.len() + self.tagged.iter().map(Vec::len).sum::<usize>()
    }
}

/// Reference to a block in a partition: `level` is 1-based, `index` is the
/// 0-based position of the block in that level's list.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct BlockRef {
    pub level: usize,
    pub index: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct PropertyCheck {
    pub holds: bool,
    pub first_violation: Option<Violation>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Violation {
    pub block: BlockRef,
    pub detail: String,
}

impl PropertyCheck {
    fn from_violation(v: Option<Violation>) -> Self {
        PropertyCheck {
            holds: v.is_none(),
            first_violation: v,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ValidationReport {
    pub size_property: PropertyCheck,
    pub laminar_property: PropertyCheck,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.size_property.holds && self.laminar_property.holds
    }
}

fn check_cover(n: usize, level: usize, sets: &[&[usize]]) -> Result<Vec<usize>> {
    let structural = |reason: String| Error::Structural { level, reason };
    let mut owner = vec![usize::MAX; n + 1];
    for (idx, set) in sets.iter().enumerate() {
        if set.is_empty() {
            return Err(structural(format!("block {idx} has an empty part")));
        }
        for &p in set.iter() {
            if p == 0 || p > n {
                return Err(structural(format!("index {p} outside [1, {n}]")));
            }
            if owner[p] != usize::MAX {
                return Err(structural(format!("index {p} appears twice")));
            }
            owner[p] = idx;
        }
    }
    if let Some(p) = (1..=n).find(|&p| owner[p] == usize::MAX) {
        return Err(structural(format!("index {p} is not covered")));
    }
    Ok(owner)
}

/// Checks that every level partitions `[n]`, then the size and laminar
/// properties of every tagged block.
///
/// Structural problems come back as `Err`; property failures are reported
/// in the `Ok` value with the first violating block.
pub fn validate_laminar(p: &LaminarPartition) -> Result<ValidationReport> {
    if p.n == 0 {
        return Err(Error::Structural {
            level: 0,
            reason: "n must be positive".into(),
        });
    }
    if p.alpha <= Q::from_integer(0) || p.alpha > Q::from_integer(1) {
        return Err(Error::Structural {
            level: 0,
            reason: format!("alpha {} outside (0, 1]", rational::fmt_q(&p.alpha)),
        });
    }
    let base: Vec<&[usize]> = p.base.iter().map(Vec::as_slice).collect();
    let mut owners = vec![check_cover(p.n, 0, &base)?];
    for (i, level) in p.tagged.iter().enumerate() {
        // lf and rg of each block are checked as separate sets: this catches
        // empty parts and lf/rg overlap along with the cover condition.
        let parts: Vec<&[usize]> = level
            .iter()
            .flat_map(|b| [b.lf.as_slice(), b.rg.as_slice()])
            .collect();
        let part_owner = check_cover(p.n, i + 1, &parts)?;
        owners.push(part_owner.into_iter().map(|o| o / 2).collect());
    }

    let mut size_violation = None;
    let mut laminar_violation = None;
    for (i, level) in p.tagged.iter().enumerate() {
        let prev_sizes: Vec<usize> = if i == 0 {
            p.base.iter().map(Vec::len).collect()
        } else {
            p.tagged[i - 1].iter().map(TaggedBlock::len).collect()
        };
        let prev_owner = &owners[i];
        for (idx, b) in level.iter().enumerate() {
            let at = BlockRef {
                level: i + 1,
                index: idx,
            };
            if size_violation.is_none()
                && Q::from_integer(b.lf.len() as i128) < p.alpha * Q::from_integer(b.len() as i128)
            {
                size_violation = Some(Violation {
                    block: at,
                    detail: format!(
                        "|lf| = {} < {} · {}",
                        b.lf.len(),
                        rational::fmt_q(&p.alpha),
                        b.len()
                    ),
                });
            }
            if laminar_violation.is_none() {
                for (name, part) in [("lf", &b.lf), ("rg", &b.rg)] {
                    let mut touched: Vec<usize> = part.iter().map(|&e| prev_owner[e]).collect();
                    touched.sort_unstable();
                    touched.dedup();
                    let covered: usize = touched.iter().map(|&o| prev_sizes[o]).sum();
                    if covered != part.len() {
                        laminar_violation = Some(Violation {
                            block: at,
                            detail: format!(
                                "{name} is not a union of level-{} blocks (touches {} blocks covering {covered} positions, part has {})",
                                i,
                                touched.len(),
                                part.len()
                            ),
                        });
                        break;
                    }
                }
            }
        }
    }
    Ok(ValidationReport {
        size_property: PropertyCheck::from_violation(size_violation),
        laminar_property: PropertyCheck::from_violation(laminar_violation),
    })
}

/// Deficiency sets `S_1, …, S_ℓ` (block indices per tagged level).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DeficiencyLedger {
    sets: Vec<Vec<usize>>,
    budget_used: u128,
}

impl DeficiencyLedger {
    pub fn empty(ell: usize) -> Self {
        DeficiencyLedger {
            sets: vec![Vec::new(); ell],
            budget_used: 0,
        }
    }

    /// `sets[i - 1]` lists block indices of `P_i`.
    pub fn new(p: &LaminarPartition, sets: Vec<Vec<usize>>) -> Result<Self> {
        if sets.len() != p.ell() {
            return Err(Error::invalid(format!(
                "ledger has {} levels, partition has {}",
                sets.len(),
                p.ell()
            )));
        }
        let mut budget_used = 0u128;
        let mut clean = Vec::with_capacity(sets.len());
        for (i, mut s) in sets.into_iter().enumerate() {
            s.sort_unstable();
            s.dedup();
            let level = p.level(i + 1);
            for &idx in &s {
                let b = level.get(idx).ok_or_else(|| {
                    Error::invalid(format!("ledger block {idx} is not in level {}", i + 1))
                })?;
                budget_used += b.len() as u128;
            }
            clean.push(s);
        }
        Ok(DeficiencyLedger {
            sets: clean,
            budget_used,
        })
    }

    pub fn ell(&self) -> usize {
        self.sets.len()
    }

    /// `S_i` for `1 <= i <= ℓ`.
    pub fn set(&self, i: usize) -> &[usize] {
        &self.sets[i - 1]
    }

    pub fn contains(&self, block: BlockRef) -> bool {
        block.level >= 1
            && block.level <= self.sets.len()
            && self.sets[block.level - 1]
                .binary_search(&block.index)
                .is_ok()
    }

    /// `Σ_i Σ_{B ∈ S_i} |B|`.
    pub fn budget_used(&self) -> u128 {
        self.budget_used
    }

    /// Total size of the deficient blocks at level `i`.
    pub fn level_budget(&self, p: &LaminarPartition, i: usize) -> u128 {
        self.set(i)
            .iter()
            .map(|&idx| p.level(i)[idx].len() as u128)
            .sum()
    }
}

/// `κ = ⌊lg(2/δ)⌋` for `δ ∈ (0, 1)`, so that `2^{-κ} < δ <= 2^{1-κ}`.
pub fn kappa(delta: &Q) -> Result<u32> {
    if *delta <= Q::from_integer(0) || *delta >= Q::from_integer(1) {
        return Err(Error::invalid(format!(
            "delta {} must lie in (0, 1)",
            rational::fmt_q(delta)
        )));
    }
    let k = rational::floor_lg(&(Q::from_integer(2) / delta));
    Ok(k as u32)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ImmKind {
    /// `Imm(k) = 2^k`.
    Exp,
    /// `Imm(k) = 2^(2^k)`.
    DoubleExp,
    /// `Imm(k) = values[k]`, starting at `k = 0`.
    Custom(Vec<u128>),
}

/// An immediacy function together with the distance it is paired with and
/// the derived `κ` and step `t`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ImmediacySpec {
    pub kind: ImmKind,
    pub delta: Q,
    pub kappa: u32,
    pub t: u32,
}

impl ImmediacySpec {
    /// Derives `κ` and, for the exponential kinds, `t(δ)`. Custom kinds must
    /// supply `t`.
    pub fn new(kind: ImmKind, delta: Q, t: Option<u32>) -> Result<Self> {
        let kappa = kappa(&delta)?;
        let t = match (&kind, t) {
            (ImmKind::Exp, None) => 1 + kappa,
            (ImmKind::DoubleExp, None) => {
                rational::ceil_lg(&Q::from_integer(kappa as i128 + 2)) as u32
            }
            (ImmKind::Custom(values), Some(t)) => {
                if values.windows(2).any(|w| w[1] < w[0]) || values.first() == Some(&0) {
                    return Err(Error::invalid("custom Imm must be positive and monotone"));
                }
                t
            }
            (ImmKind::Custom(_), None) => {
                return Err(Error::invalid("custom Imm needs an explicit t"))
            }
            (_, Some(t)) => t,
        };
        if t == 0 {
            return Err(Error::invalid("t must be positive"));
        }
        Ok(ImmediacySpec {
            kind,
            delta,
            kappa,
            t,
        })
    }

    pub fn imm(&self, k: u64) -> Option<u128> {
        match &self.kind {
            ImmKind::Exp => 1u128
                .checked_shl(u32::try_from(k).ok()?)
                .filter(|_| k < 128),
            ImmKind::DoubleExp => {
                let e = 1u128
                    .checked_shl(u32::try_from(k).ok()?)
                    .filter(|_| k < 128)?;
                (e < 128).then(|| 1u128 << e)
            }
            ImmKind::Custom(v) => v.get(k as usize).copied(),
        }
    }
}

/// One row of the divisibility table for level `j`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct DivisibilityRow {
    pub j: usize,
    /// `2^{-κ} · Imm(jt)`.
    #[serde(with = "crate::rational::serde_q")]
    pub lf_len: Q,
    /// `2 · Imm((j-1)t)`.
    pub prev_block_len: u128,
    pub holds: bool,
}

/// Evaluates the divisibility requirement for `1 <= j <= ell`.
pub fn divisibility_rows(spec: &ImmediacySpec, ell: usize) -> Result<Vec<DivisibilityRow>> {
    let scale = pow2(-(spec.kappa as i64));
    (1..=ell)
        .map(|j| {
            let too_big = || Error::invalid(format!("Imm({}) overflows", j as u64 * spec.t as u64));
            let cur = spec.imm(j as u64 * spec.t as u64).ok_or_else(too_big)?;
            let prev = spec
                .imm((j as u64 - 1) * spec.t as u64)
                .ok_or_else(too_big)?;
            let lf_len = scale * Q::from_integer(i128::try_from(cur).map_err(|_| too_big())?);
            let prev_block_len = prev.checked_mul(2).ok_or_else(too_big)?;
            let holds = rational::is_integer(&lf_len)
                && (*lf_len.numer() as u128).is_multiple_of(prev_block_len);
            Ok(DivisibilityRow {
                j,
                lf_len,
                prev_block_len,
                holds,
            })
        })
        .collect()
}

fn interval_level(n: usize, len: usize, lf_len: usize) -> Vec<TaggedBlock> {
    (0..n / len)
        .map(|b| TaggedBlock::interval(b * len + 1, b * len + lf_len, (b + 1) * len))
        .collect()
}

fn plain_level(n: usize, len: usize) -> Vec<Vec<usize>> {
    (0..n / len)
        .map(|b| (b * len + 1..=(b + 1) * len).collect())
        .collect()
}

fn check_materializable(n: u128) -> Result<usize> {
    if n > MAX_MATERIALIZED_N {
        Err(Error::CapExceeded {
            what: "partition size n",
            needed: n,
            cap: MAX_MATERIALIZED_N,
        })
    } else {
        Ok(n as usize)
    }
}

/// The `(2^{-(κ+1)}, ℓ)`-laminar partition of `[2·Imm(ℓt)]` into
/// consecutive blocks of length `2·Imm(jt)`, left parts being the leftmost
/// `2^{-κ}·Imm(jt)` positions.
pub fn build_from_imm(spec: &ImmediacySpec, ell: usize) -> Result<LaminarPartition> {
    if ell == 0 {
        return Err(Error::invalid("ell must be positive"));
    }
    let rows = divisibility_rows(spec, ell)?;
    if let Some(bad) = rows.iter().find(|r| !r.holds) {
        return Err(Error::Divisibility {
            j: bad.j,
            reason: format!(
                "2^-{}·Imm({}) = {} must be an integer divisible by 2·Imm({}) = {}",
                spec.kappa,
                bad.j as u64 * spec.t as u64,
                rational::fmt_q(&bad.lf_len),
                (bad.j as u64 - 1) * spec.t as u64,
                bad.prev_block_len
            ),
        });
    }
    let imm = |j: usize| spec.imm(j as u64 * spec.t as u64).expect("checked above");
    let n = check_materializable(2 * imm(ell))?;
    let base = plain_level(n, 2 * imm(0) as usize);
    let tagged = rows
        .iter()
        .map(|r| interval_level(n, 2 * imm(r.j) as usize, *r.lf_len.numer() as usize))
        .collect();
    Ok(LaminarPartition::new(
        n,
        pow2(-(spec.kappa as i64 + 1)),
        base,
        tagged,
    ))
}

/// The `(1/2, k)`-laminar partition of `[2^k]` into dyadic blocks.
pub fn eks_partition(k: u32) -> Result<LaminarPartition> {
    if k == 0 {
        return Err(Error::invalid("k must be at least 1"));
    }
    let n = check_materializable(
        1u128
            .checked_shl(k)
            .filter(|_| k < 100)
            .unwrap_or(u128::MAX),
    )?;
    let base = plain_level(n, 1);
    let tagged = (1..=k)
        .map(|i| interval_level(n, 1 << i, 1 << (i - 1)))
        .collect();
    Ok(LaminarPartition::new(n, Q::new(1, 2), base, tagged))
}

/// Length scales `ℓ_1, …, ℓ_{m+1}` with `ℓ_1 = 2^{e_1}` and
/// `ℓ_{i+1} = ℓ_i² / 2^{shift}`, kept as base-2 exponents so that the
/// original (non-materializable) scales can still be used in bounds.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ChsScales {
    pub growth_shift: i64,
    /// `exponents[i - 1] = lg ℓ_i` for `1 <= i <= m + 1`.
    pub exponents: Vec<i64>,
}

impl ChsScales {
    pub fn new(l1: u128, growth_shift: i64, m: usize) -> Result<Self> {
        if !rational::is_power_of_two(l1) || l1 < 2 {
            return Err(Error::invalid(format!(
                "l1 = {l1} must be a power of two >= 2"
            )));
        }
        let mut exponents = vec![l1.trailing_zeros() as i64];
        for _ in 0..m {
            let e = *exponents.last().unwrap();
            let next = e
                .checked_mul(2)
                .and_then(|v| v.checked_sub(growth_shift))
                .filter(|&v| v < (1 << 40))
                .ok_or_else(|| Error::invalid("scale exponent overflow"))?;
            exponents.push(next);
        }
        let scales = ChsScales {
            growth_shift,
            exponents,
        };
        scales.check_shape()?;
        Ok(scales)
    }

    pub fn m(&self) -> usize {
        self.exponents.len() - 1
    }

    /// `lg ℓ_i`.
    pub fn lg_scale(&self, i: usize) -> i64 {
        self.exponents[i - 1]
    }

    /// `lg n = lg ℓ_{m+1}`.
    pub fn lg_n(&self) -> i64 {
        *self.exponents.last().unwrap()
    }

    /// `ℓ_i` when it fits.
    pub fn scale(&self, i: usize) -> Option<u128> {
        let e = self.lg_scale(i);
        (0..127).contains(&e).then(|| 1u128 << e)
    }

    fn check_shape(&self) -> Result<()> {
        let m = self.m();
        for i in 1..=m + 1 {
            // P_{i-1} has blocks of length ℓ_i / 2.
            if self.lg_scale(i) < 1 {
                return Err(Error::invalid(format!("ℓ_{i}/2 is not an integer")));
            }
            if self.lg_scale(i) > self.lg_n() {
                return Err(Error::invalid(format!("ℓ_{i} does not divide n")));
            }
        }
        for i in 1..=m {
            // lf of a P_i block has ℓ_{i+1}/8 positions and must be a union
            // of P_{i-1} blocks of length ℓ_i/2.
            if self.lg_scale(i + 1) < 3 {
                return Err(Error::invalid(format!("ℓ_{}/8 is not an integer", i + 1)));
            }
            if self.lg_scale(i) - 1 > self.lg_scale(i + 1) - 3 {
                return Err(Error::invalid(format!(
                    "ℓ_{i}/2 does not divide ℓ_{}/8",
                    i + 1
                )));
            }
        }
        Ok(())
    }

    /// `Σ_{i=1}^{m} ℓ_{i+1} / 2`: total size of the rightmost blocks.
    pub fn rightmost_budget(&self) -> Option<u128> {
        (1..=self.m()).try_fold(0u128, |acc, i| acc.checked_add(self.scale(i + 1)? / 2))
    }
}

/// The `(1/4, m)`-laminar partition with `P_{i-1}` made of blocks of length
/// `ℓ_i / 2` (first quarter on the left), and the ledger whose `S_i` holds
/// the rightmost block of `P_i`.
pub fn chs_partition(
    m: usize,
    l1: u128,
    growth_shift: i64,
) -> Result<(LaminarPartition, DeficiencyLedger)> {
    let scales = ChsScales::new(l1, growth_shift, m)?;
    if scales.lg_n() > MAX_MATERIALIZED_N.trailing_zeros() as i64 {
        return Err(Error::CapExceeded {
            what: "partition size n",
            needed: scales.scale(m + 1).unwrap_or(u128::MAX),
            cap: MAX_MATERIALIZED_N,
        });
    }
    let n = 1usize << scales.lg_n();
    let len = |i: usize| 1usize << (scales.lg_scale(i) - 1);
    let base = plain_level(n, len(1));
    let tagged: Vec<Vec<TaggedBlock>> = (1..=m)
        .map(|i| interval_level(n, len(i + 1), len(i + 1) / 4))
        .collect();
    let p = LaminarPartition::new(n, Q::new(1, 4), base, tagged);
    let sets = (1..=m)
        .map(|i| vec![p.rightmost_block(i).expect("level covers n")])
        .collect();
    let ledger = DeficiencyLedger::new(&p, sets)?;
    Ok((p, ledger))
}

/// `(κ, ℓ)` with `ℓ = 1 + ⌊lg(n/(2m)) / κ⌋`.
pub fn ghk_levels(n: u128, m: u128, delta: &Q) -> Result<(u32, usize)> {
    if !rational::is_power_of_two(n) || !rational::is_power_of_two(m) {
        return Err(Error::invalid("n and m must be powers of two"));
    }
    if 2 * m > n {
        return Err(Error::invalid("need 2m <= n"));
    }
    let kappa = kappa(delta)?;
    let lg_ratio = (n.trailing_zeros() - m.trailing_zeros() - 1) as usize;
    Ok((kappa, 1 + lg_ratio / kappa as usize))
}

/// The `(2^{-κ}, ℓ)`-laminar partition: `P_0` singletons, `P_i` blocks of
/// length `n / 2^{κ(ℓ-i)}` with the smallest `2^{-κ}` fraction on the left.
pub fn ghk_partition(n: u128, m: u128, delta: &Q) -> Result<LaminarPartition> {
    let (kappa, ell) = ghk_levels(n, m, delta)?;
    let n = check_materializable(n)?;
    let lg_n = n.trailing_zeros() as i64;
    let mut tagged = Vec::with_capacity(ell);
    for i in 1..=ell {
        let lg_len = lg_n - kappa as i64 * (ell - i) as i64;
        if lg_len < kappa as i64 {
            return Err(Error::invalid(format!(
                "level {i} blocks of length 2^{lg_len} cannot give a left part of 2^-{kappa} of them"
            )));
        }
        let len = 1usize << lg_len;
        tagged.push(interval_level(n, len, len >> kappa));
    }
    Ok(LaminarPartition::new(
        n,
        pow2(-(kappa as i64)),
        plain_level(n, 1),
        tagged,
    ))
}

/// Interval block in the partition file format.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IntervalBlock {
    pub lo: usize,
    pub hi: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lf_hi: Option<usize>,
}

/// `{"n": …, "alpha": "p/q", "levels": [[{"lo","hi","lf_hi"}, …], …]}`;
/// level 0 blocks carry no `lf_hi`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PartitionFile {
    pub n: usize,
    #[serde(with = "crate::rational::serde_q")]
    pub alpha: Q,
    pub levels: Vec<Vec<IntervalBlock>>,
}

impl PartitionFile {
    pub fn from_partition(p: &LaminarPartition) -> Result<Self> {
        let mut levels = Vec::with_capacity(p.ell() + 1);
        let base = p
            .base
            .iter()
            .map(|b| {
                let contiguous = b.windows(2).all(|w| w[1] == w[0] + 1);
                match (b.first(), b.last()) {
                    (Some(&lo), Some(&hi)) if contiguous => Ok(IntervalBlock {
                        lo,
                        hi,
                        lf_hi: None,
                    }),
                    _ => Err(Error::Format("level 0 has a non-interval block".into())),
                }
            })
            .collect::<Result<Vec<_>>>()?;
        levels.push(base);
        for (i, level) in p.tagged.iter().enumerate() {
            levels.push(
                level
                    .iter()
                    .map(|b| {
                        b.as_interval()
                            .map(|(lo, lf_hi, hi)| IntervalBlock {
                                lo,
                                hi,
                                lf_hi: Some(lf_hi),
                            })
                            .ok_or_else(|| {
                                Error::Format(format!("level {} has a non-interval block", i + 1))
                            })
                    })
                    .collect::<Result<Vec<_>>>()?,
            );
        }
        Ok(PartitionFile {
            n: p.n,
            alpha: p.alpha,
            levels,
        })
    }

    pub fn into_partition(self) -> Result<LaminarPartition> {
        let mut levels = self.levels.into_iter();
        let base = levels
            .next()
            .ok_or_else(|| Error::Format("partition needs level 0".into()))?
            .into_iter()
            .map(|b| {
                if b.lo == 0 || b.hi < b.lo {
                    return Err(Error::Format(format!("bad interval [{}, {}]", b.lo, b.hi)));
                }
                Ok((b.lo..=b.hi).collect())
            })
            .collect::<Result<Vec<Vec<usize>>>>()?;
        let tagged = levels
            .enumerate()
            .map(|(i, level)| {
                level
                    .into_iter()
                    .map(|b| {
                        let lf_hi = b.lf_hi.ok_or_else(|| {
                            Error::Format(format!("level {} block lacks lf_hi", i + 1))
                        })?;
                        if b.lo == 0 || lf_hi < b.lo || b.hi < lf_hi {
                            return Err(Error::Format(format!(
                                "bad tagged interval lo={} lf_hi={lf_hi} hi={}",
                                b.lo, b.hi
                            )));
                        }
                        Ok(TaggedBlock::interval(b.lo, lf_hi, b.hi))
                    })
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(LaminarPartition::new(self.n, self.alpha, base, tagged))
    }
}

/// One entry of the ledger file: `{"level": i, "blocks": [indices]}`, block
/// indices being 0-based positions in that level's list.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LedgerEntry {
    pub level: usize,
    pub blocks: Vec<usize>,
}

impl DeficiencyLedger {
    pub fn to_entries(&self) -> Vec<LedgerEntry> {
        self.sets
            .iter()
            .enumerate()
            .map(|(i, s)| LedgerEntry {
                level: i + 1,
                blocks: s.clone(),
            })
            .collect()
    }

    pub fn from_entries(p: &LaminarPartition, entries: &[LedgerEntry]) -> Result<Self> {
        let mut sets = vec![Vec::new(); p.ell()];
        for e in entries {
            if e.level == 0 || e.level > p.ell() {
                return Err(Error::invalid(format!(
                    "ledger level {} outside 1..={}",
                    e.level,
                    p.ell()
                )));
            }
            sets[e.level - 1].extend(&e.blocks);
        }
        DeficiencyLedger::new(p, sets)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rational::q;

    #[test]
    fn exp_partition_arithmetic() {
        let spec = ImmediacySpec::new(ImmKind::Exp, q(1, 2), None).unwrap();
        assert_eq!((spec.kappa, spec.t), (2, 3));
        let p = build_from_imm(&spec, 2).unwrap();
        assert_eq!(p.n(), 128);
        assert_eq!(p.alpha(), q(1, 8));
        assert_eq!(p.base()[0].len(), 2);
        assert_eq!(p.level(1)[0].len(), 16);
        assert_eq!(p.level(1)[0].lf().len(), 2);
        assert_eq!(p.level(2)[0].len(), 128);
        assert_eq!(p.level(2)[0].lf().len(), 16);
        assert!(validate_laminar(&p).unwrap().passed());

        let p1 = build_from_imm(&spec, 1).unwrap();
        assert_eq!((p1.n(), p1.ell()), (16, 1));
    }

    #[test]
    fn double_exp_t() {
        let spec = ImmediacySpec::new(ImmKind::DoubleExp, q(1, 2), None).unwrap();
        assert_eq!(spec.t, 2);
        let p = build_from_imm(&spec, 1).unwrap();
        assert_eq!(p.n(), 32);
        assert!(validate_laminar(&p).unwrap().passed());
    }

    #[test]
    fn custom_odd_imm_is_rejected() {
        let spec = ImmediacySpec::new(ImmKind::Custom(vec![1, 3, 9]), q(3, 4), Some(1)).unwrap();
        assert_eq!(spec.kappa, 1);
        assert!(matches!(
            build_from_imm(&spec, 1),
            Err(Error::Divisibility { j: 1, .. })
        ));
        assert!(ImmediacySpec::new(ImmKind::Custom(vec![1, 3]), q(1, 2), None).is_err());
        assert!(ImmediacySpec::new(ImmKind::Custom(vec![4, 3]), q(1, 2), Some(1)).is_err());
    }

    #[test]
    fn kappa_brackets_delta() {
        for (num, den) in [(1, 2), (1, 3), (2, 3), (1, 16), (9, 10), (1, 1000)] {
            let d = q(num, den);
            let k = kappa(&d).unwrap() as i64;
            assert!(pow2(-k) < d && d <= pow2(1 - k), "{num}/{den}");
        }
        assert!(kappa(&q(1, 1)).is_err());
        assert!(kappa(&q(0, 1)).is_err());
    }

    #[test]
    fn eks_dyadic_blocks() {
        let p = eks_partition(3).unwrap();
        assert_eq!(p.n(), 8);
        assert_eq!(p.level(2)[0].members(), vec![1, 2, 3, 4]);
        assert_eq!(p.level(2)[1].members(), vec![5, 6, 7, 8]);
        assert_eq!(p.level(2)[0].lf(), &[1, 2]);
        let p1 = eks_partition(1).unwrap();
        assert_eq!(p1.level(1)[0].lf(), &[1]);
        assert_eq!(p1.level(1)[0].rg(), &[2]);
        assert!(validate_laminar(&p).unwrap().passed());
    }

    #[test]
    fn eks_block_count_closed_form() {
        for k in 1..=10u32 {
            let p = eks_partition(k).unwrap();
            assert_eq!(p.block_count(), (1usize << (k + 1)) - 1);
            for i in 1..=k as usize {
                for b in p.level(i) {
                    assert_eq!(
                        Q::from_integer(b.lf().len() as i128),
                        q(1, 2) * Q::from_integer(b.len() as i128)
                    );
                }
            }
        }
    }

    #[test]
    fn chs_paper_scales_are_symbolic() {
        let s = ChsScales::new(1 << 20, 10, 4).unwrap();
        for i in 1..=5 {
            // ℓ_i = 2^10 · 32^(2^i)
            assert_eq!(s.lg_scale(i), 10 + 5 * (1i64 << i));
        }
        assert!(chs_partition(4, 1 << 20, 10).is_err());
    }

    #[test]
    fn chs_desk_partition() {
        let (p, ledger) = chs_partition(1, 64, 4).unwrap();
        assert_eq!(p.n(), 256);
        assert_eq!(p.base()[0].len(), 32);
        assert_eq!(p.level(1).len(), 2);
        assert_eq!(p.level(1)[0].len(), 128);
        assert_eq!(p.level(1)[0].lf().len(), 32);
        assert_eq!(ledger.set(1), &[1]);
        assert_eq!(ledger.budget_used(), 128);
        assert!(validate_laminar(&p).unwrap().passed());

        let (p0, l0) = chs_partition(0, 64, 4).unwrap();
        assert_eq!(p0.ell(), 0);
        assert_eq!(l0.budget_used(), 0);

        assert!(chs_partition(1, 48, 4).is_err());
        assert!(chs_partition(1, 64, 9).is_err());
    }

    #[test]
    fn ghk_levels_and_blocks() {
        let p = ghk_partition(1 << 10, 1 << 3, &q(1, 2)).unwrap();
        assert_eq!(p.ell(), 4);
        let lens: Vec<usize> = (1..=4).map(|i| p.level(i)[0].len()).collect();
        assert_eq!(lens, vec![16, 64, 256, 1024]);
        for i in 1..=4 {
            assert_eq!(p.level(i)[0].lf().len() * 4, p.level(i)[0].len());
        }
        assert!(validate_laminar(&p).unwrap().passed());

        let p = ghk_partition(16, 8, &q(1, 2)).unwrap();
        assert_eq!(p.ell(), 1);

        // κ = 3 does not divide lg(n/2m) = 4.
        let p = ghk_partition(1 << 10, 1 << 5, &q(1, 5)).unwrap();
        assert_eq!(p.ell(), 2);
        assert!(validate_laminar(&p).unwrap().passed());
    }

    #[test]
    fn validator_catches_laminar_and_size_failures() {
        // lf of the top block straddles the two halves of P_1.
        let base: Vec<Vec<usize>> = (1..=4).map(|i| vec![i]).collect();
        let l1 = vec![
            TaggedBlock::interval(1, 1, 2),
            TaggedBlock::interval(3, 3, 4),
        ];
        let bad_top = vec![TaggedBlock::interval(1, 3, 4)];
        let p = LaminarPartition::new(4, q(1, 2), base.clone(), vec![l1.clone(), bad_top]);
        let r = validate_laminar(&p).unwrap();
        assert!(r.size_property.holds);
        assert!(!r.laminar_property.holds);
        assert_eq!(
            r.laminar_property.first_violation.unwrap().block,
            BlockRef { level: 2, index: 0 }
        );

        let top = vec![TaggedBlock::interval(1, 1, 4)];
        let p = LaminarPartition::new(4, q(1, 2), base, vec![top]);
        let r = validate_laminar(&p).unwrap();
        assert!(!r.size_property.holds);
    }

    #[test]
    fn validator_structural_errors() {
        let overlap = LaminarPartition::new(3, q(1, 2), vec![vec![1, 2], vec![2, 3]], vec![]);
        assert!(matches!(
            validate_laminar(&overlap),
            Err(Error::Structural { level: 0, .. })
        ));
        let outside = LaminarPartition::new(2, q(1, 2), vec![vec![1, 2, 3]], vec![]);
        assert!(matches!(
            validate_laminar(&outside),
            Err(Error::Structural { .. })
        ));
        let empty_lf = LaminarPartition::new(
            2,
            q(1, 2),
            vec![vec![1], vec![2]],
            vec![vec![TaggedBlock::new(vec![], vec![1, 2])]],
        );
        assert!(matches!(
            validate_laminar(&empty_lf),
            Err(Error::Structural { level: 1, .. })
        ));
    }

    #[test]
    fn partition_file_round_trip() {
        let p = eks_partition(3).unwrap();
        let f = PartitionFile::from_partition(&p).unwrap();
        let text = serde_json::to_string(&f).unwrap();
        assert!(text.contains("\"alpha\":\"1/2\""));
        let back: PartitionFile = serde_json::from_str(&text).unwrap();
        assert_eq!(back.into_partition().unwrap(), p);
    }

    #[test]
    fn ledger_rejects_foreign_blocks() {
        let p = eks_partition(2).unwrap();
        assert!(DeficiencyLedger::new(&p, vec![vec![5], vec![]]).is_err());
        let l = DeficiencyLedger::from_entries(
            &p,
            &[LedgerEntry {
                level: 2,
                blocks: vec![0],
            }],
        )
        .unwrap();
        assert_eq!(l.budget_used(), 4);
        assert!(l.contains(BlockRef { level: 2, index: 0 }));
    }
}
