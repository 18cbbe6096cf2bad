//! Exhaustive certifiers for tree distance, immediacy conditions and
//! neighborhood decoding.
//!
//! Every check enumerates all messages of the code, so it is guarded by
//! [`Caps`]. Pairs `(x, y)` are visited with `x < y` in rank order, then by
//! position, and the reported witness is always the first failing case in
//! that order regardless of thread count.

use std::collections::HashMap;

use rayon::prelude::*;
use serde::Serialize;

use crate::code::{hamming, meets, Caps, Codebook, TreeCode};
use crate::error::{Error, Result};
use crate::partitions::{
    ghk_levels, validate_laminar, BlockRef, ChsScales, DeficiencyLedger, LaminarPartition,
};
use crate::rational::{self, Q};

/// What a witness pair is claimed to satisfy before the window is compared.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Premise {
    /// `x` and `y` agree before `s` and differ at `s`.
    FirstDivergence { s: usize },
    /// `x_s != y_s`.
    DifferAt { s: usize },
    /// `x` and `y` agree on `[lo, s)` and differ at `s`.
    LeftmostFrom { lo: usize, s: usize },
    /// `x` and `y` differ somewhere on `positions`.
    DifferOn { positions: Vec<usize> },
}

impl Premise {
    pub fn holds(&self, x: &[u32], y: &[u32]) -> bool {
        let at = |p: usize| p >= 1 && p <= x.len() && x[p - 1] != y[p - 1];
        match self {
            Premise::FirstDivergence { s } => at(*s) && x[..s - 1] == y[..s - 1],
            Premise::DifferAt { s } => at(*s),
            Premise::LeftmostFrom { lo, s } => {
                at(*s) && *lo >= 1 && lo <= s && x[lo - 1..s - 1] == y[lo - 1..s - 1]
            }
            Premise::DifferOn { positions } => positions.iter().any(|&p| at(p)),
        }
    }
}

/// A counterexample: the premise holds for `(x, y)` but the codewords
/// disagree on fewer than `required` positions of `window`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Witness {
    pub x: Vec<u32>,
    pub y: Vec<u32>,
    pub premise: Premise,
    /// 1-based positions compared.
    pub window: Vec<usize>,
    pub measured: usize,
    #[serde(with = "crate::rational::serde_q")]
    pub required: Q,
    pub block: Option<BlockRef>,
}

impl Witness {
    /// Re-evaluates the inequality from scratch on `code`.
    pub fn recheck(&self, code: &dyn TreeCode) -> bool {
        if !self.premise.holds(&self.x, &self.y) {
            return false;
        }
        let (cx, cy) = (code.encode(&self.x), code.encode(&self.y));
        let measured = self
            .window
            .iter()
            .filter(|&&p| cx[p - 1] != cy[p - 1])
            .count();
        measured == self.measured && !meets(measured, &self.required)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Verdict {
    pub property: String,
    pub pass: bool,
    pub witness: Option<Witness>,
}

impl Verdict {
    fn from_witness(property: impl Into<String>, witness: Option<Witness>) -> Self {
        Verdict {
            property: property.into(),
            pass: witness.is_none(),
            witness,
        }
    }
}

fn materialize(code: &dyn TreeCode, caps: &Caps) -> Result<Codebook> {
    Codebook::materialize(code, caps)
}

fn pair_budget(book: &Codebook, per_pair: u128, caps: &Caps) -> Result<()> {
    let m = book.len() as u128;
    caps.check("pair evaluations", m * m.saturating_sub(1) / 2 * per_pair)
}

/// Runs `f(x, y)` over all `x < y` and returns the first witness in rank
/// order.
fn first_pair_witness<F>(book: &Codebook, f: F) -> Option<Witness>
where
    F: Fn(usize, usize) -> Option<Witness> + Sync,
{
    (0..book.len())
        .into_par_iter()
        .find_map_first(|x| (x + 1..book.len()).find_map(|y| f(x, y)))
}

fn first_divergence(x: &[u32], y: &[u32]) -> usize {
    x.iter().zip(y).position(|(a, b)| a != b).expect("distinct") + 1
}

/// Tree distance over all same-depth vertex pairs: for every pair of
/// messages with first divergence `s` and every depth `d >= s`, the
/// codewords disagree on at least `δ(d - s + 1)` of the positions `s..=d`.
pub fn check_tree_distance(code: &dyn TreeCode, delta: &Q, caps: &Caps) -> Result<Verdict> {
    let book = materialize(code, caps)?;
    pair_budget(&book, book.n() as u128, caps)?;
    let n = book.n();
    let w = first_pair_witness(&book, |xi, yi| {
        let (x, y) = (book.message(xi), book.message(yi));
        let s = first_divergence(&x, &y);
        let (cx, cy) = (book.word(xi), book.word(yi));
        let mut count = 0;
        for d in s..=n {
            count += usize::from(cx[d - 1] != cy[d - 1]);
            let required = delta * Q::from_integer((d - s + 1) as i128);
            if !meets(count, &required) {
                return Some(Witness {
                    x,
                    y,
                    premise: Premise::FirstDivergence { s },
                    window: (s..=d).collect(),
                    measured: count,
                    required,
                    block: None,
                });
            }
        }
        None
    });
    Ok(Verdict::from_witness("tree_distance", w))
}

/// Tree distance measured on full-length codewords only: the relative
/// distance on `s..=n` is at least `δ` for every message pair.
///
/// This is implied by [`check_tree_distance`] but not equivalent to it: a
/// pair of vertices can collide at a shallow depth and still be far apart
/// once extended to depth `n`.
pub fn check_tree_distance_messages(
    code: &dyn TreeCode,
    delta: &Q,
    caps: &Caps,
) -> Result<Verdict> {
    let book = materialize(code, caps)?;
    pair_budget(&book, book.n() as u128, caps)?;
    let n = book.n();
    let w = first_pair_witness(&book, |xi, yi| {
        let (x, y) = (book.message(xi), book.message(yi));
        let s = first_divergence(&x, &y);
        let measured = hamming(&book.word(xi)[s - 1..], &book.word(yi)[s - 1..]);
        let required = delta * Q::from_integer((n - s + 1) as i128);
        (!meets(measured, &required)).then(|| Witness {
            x,
            y,
            premise: Premise::FirstDivergence { s },
            window: (s..=n).collect(),
            measured,
            required,
            block: None,
        })
    });
    Ok(Verdict::from_witness("tree_distance_messages", w))
}

/// Exact tree distance: the least `disagreements / (d - s + 1)` over all
/// message pairs with first divergence `s` and all depths `d >= s`.
///
/// `check_tree_distance(code, δ)` passes exactly when `δ` is at most this.
/// Returns 1 for codes with a single message.
pub fn tree_distance(code: &dyn TreeCode, caps: &Caps) -> Result<Q> {
    let book = materialize(code, caps)?;
    pair_budget(&book, book.n() as u128, caps)?;
    Ok(book_distance_above(&book, &Q::from_integer(-1)).unwrap_or(Q::from_integer(1)))
}

/// Tree distance of a materialized code if it exceeds `floor`, else `None`.
/// Pairs are abandoned as soon as they drive the minimum to `floor`.
pub(crate) fn book_distance_above(book: &Codebook, floor: &Q) -> Option<Q> {
    let n = book.n();
    let (fnum, fden) = (*floor.numer(), *floor.denom());
    // Running minimum kept as an unreduced fraction; comparisons cross-multiply.
    let (mut bnum, mut bden) = (1i128, 1i128);
    for xi in 0..book.len() {
        let x = book.message(xi);
        for yi in xi + 1..book.len() {
            let s = first_divergence(&x, &book.message(yi));
            let (cx, cy) = (book.word(xi), book.word(yi));
            let mut count = 0i128;
            for d in s..=n {
                count += i128::from(cx[d - 1] != cy[d - 1]);
                let len = (d - s + 1) as i128;
                if count * bden < bnum * len {
                    (bnum, bden) = (count, len);
                    if bnum * fden <= fnum * bden {
                        return None;
                    }
                }
            }
        }
    }
    Some(Q::new(bnum, bden))
}

/// An immediacy function `k ↦ Imm(k)` for `k >= 1`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Imm {
    /// `Imm(k) = k`.
    Linear,
    /// `Imm(k) = 2^k`.
    Exp,
    /// `Imm(k) = 2^(2^k)`.
    DoubleExp,
    /// `Imm(k) = values[k - 1]`.
    Values(Vec<u64>),
}

impl Imm {
    /// Window lengths `Imm(1), Imm(2), …` that fit in `limit`.
    fn windows(&self, limit: usize) -> Result<Vec<usize>> {
        let limit = limit as u64;
        let v: Vec<u64> = match self {
            Imm::Linear => (1..=limit).collect(),
            Imm::Exp => (1..63)
                .map(|k| 1u64 << k)
                .take_while(|&w| w <= limit)
                .collect(),
            Imm::DoubleExp => (1..6)
                .map(|k| 1u64 << (1u64 << k))
                .take_while(|&w| w <= limit)
                .collect(),
            Imm::Values(values) => {
                if values.contains(&0) || values.windows(2).any(|p| p[1] < p[0]) {
                    return Err(Error::invalid(
                        "immediacy function must be positive and non-decreasing",
                    ));
                }
                values.iter().copied().take_while(|&w| w <= limit).collect()
            }
        };
        Ok(v.into_iter().map(|w| w as usize).collect())
    }
}

/// Which disagreement positions the window condition is imposed at.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ImmScope {
    /// Every `s` with `x_s != y_s`.
    Every,
    /// Only the first divergence.
    FirstOnly,
}

/// For every pair, every disagreement position `s` (per `scope`) and every
/// `k` with `s + Imm(k) <= n + 1`: the codewords disagree on at least
/// `δ·Imm(k)` positions of the half-open window `[s, s + Imm(k))`.
pub fn check_immediacy_function(
    code: &dyn TreeCode,
    imm: &Imm,
    delta: &Q,
    scope: ImmScope,
    caps: &Caps,
) -> Result<Verdict> {
    let n = code.n();
    let windows = imm.windows(n)?;
    let book = materialize(code, caps)?;
    pair_budget(&book, (n * windows.len().max(1)) as u128 * n as u128, caps)?;
    let w = first_pair_witness(&book, |xi, yi| {
        let (x, y) = (book.message(xi), book.message(yi));
        let (cx, cy) = (book.word(xi), book.word(yi));
        let starts: Vec<usize> = match scope {
            ImmScope::Every => (1..=n).filter(|&s| x[s - 1] != y[s - 1]).collect(),
            ImmScope::FirstOnly => vec![first_divergence(&x, &y)],
        };
        for s in starts {
            for &len in windows.iter().filter(|&&len| s + len <= n + 1) {
                let measured = hamming(&cx[s - 1..s - 1 + len], &cy[s - 1..s - 1 + len]);
                let required = delta * Q::from_integer(len as i128);
                if !meets(measured, &required) {
                    let premise = match scope {
                        ImmScope::Every => Premise::DifferAt { s },
                        ImmScope::FirstOnly => Premise::FirstDivergence { s },
                    };
                    return Some(Witness {
                        x,
                        y,
                        premise,
                        window: (s..s + len).collect(),
                        measured,
                        required,
                        block: None,
                    });
                }
            }
        }
        None
    });
    Ok(Verdict::from_witness("immediacy_function", w))
}

/// Outcome of neighborhood decoding at one block.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct BlockOutcome {
    pub block: BlockRef,
    /// Listed in the deficiency ledger and therefore not checked.
    pub deficient: bool,
    pub pass: bool,
    pub witness: Option<Witness>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct NeighborhoodReport {
    pub verdict: Verdict,
    pub blocks: Vec<BlockOutcome>,
}

impl NeighborhoodReport {
    pub fn failing_blocks(&self) -> Vec<BlockRef> {
        self.blocks
            .iter()
            .filter(|b| !b.pass)
            .map(|b| b.block)
            .collect()
    }

    pub fn outcome(&self, block: BlockRef) -> Option<&BlockOutcome> {
        self.blocks.iter().find(|b| b.block == block)
    }
}

fn project<T: Copy>(word: &[T], positions: &[usize]) -> Vec<T> {
    positions.iter().map(|&p| word[p - 1]).collect()
}

/// First pair `(x, y)` in rank order with `x_lf != y_lf` and equal
/// codewords on `rg`.
fn block_collision(book: &Codebook, lf: &[usize], rg: &[usize]) -> Option<(usize, usize)> {
    struct Group {
        first: usize,
        first_lf: Vec<u32>,
        partner: Option<usize>,
    }
    let mut groups: HashMap<Vec<u64>, Group> = HashMap::new();
    for idx in 0..book.len() {
        let key = project(book.word(idx), rg);
        let lf_val = project(&book.message(idx), lf);
        match groups.get_mut(&key) {
            None => {
                groups.insert(
                    key,
                    Group {
                        first: idx,
                        first_lf: lf_val,
                        partner: None,
                    },
                );
            }
            Some(g) if g.partner.is_none() && g.first_lf != lf_val => g.partner = Some(idx),
            Some(_) => {}
        }
    }
    groups
        .values()
        .filter_map(|g| g.partner.map(|p| (g.first, p)))
        .min()
}

fn check_partition_ready(p: &LaminarPartition, ledger: Option<&DeficiencyLedger>) -> Result<()> {
    let report = validate_laminar(p)?;
    if !report.passed() {
        return Err(Error::Precondition(format!(
            "partition fails validation: {report:?}"
        )));
    }
    if let Some(l) = ledger {
        if l.ell() != p.ell() {
            return Err(Error::invalid("ledger does not match the partition depth"));
        }
        for i in 1..=l.ell() {
            if l.set(i).iter().any(|&b| b >= p.level(i).len()) {
                return Err(Error::invalid(format!(
                    "ledger names a missing block at level {i}"
                )));
            }
        }
    }
    Ok(())
}

/// Checks `x_lf(B) != y_lf(B) ⇒ c(x)_rg(B) != c(y)_rg(B)` at every tagged
/// block not listed in `ledger`.
pub fn check_neighborhood_decoding(
    code: &dyn TreeCode,
    p: &LaminarPartition,
    ledger: Option<&DeficiencyLedger>,
    caps: &Caps,
) -> Result<NeighborhoodReport> {
    if code.n() != p.n() {
        return Err(Error::invalid(format!(
            "code length {} does not match partition size {}",
            code.n(),
            p.n()
        )));
    }
    check_partition_ready(p, ledger)?;
    let book = materialize(code, caps)?;
    caps.check(
        "message × block evaluations",
        book.len() as u128 * (p.ell() as u128) * p.n() as u128,
    )?;
    let refs: Vec<BlockRef> = (1..=p.ell())
        .flat_map(|level| (0..p.level(level).len()).map(move |index| BlockRef { level, index }))
        .collect();
    let blocks: Vec<BlockOutcome> = refs
        .par_iter()
        .map(|&at| {
            let deficient = ledger.is_some_and(|l| l.contains(at));
            if deficient {
                return BlockOutcome {
                    block: at,
                    deficient,
                    pass: true,
                    witness: None,
                };
            }
            let b = &p.level(at.level)[at.index];
            let witness = block_collision(&book, b.lf(), b.rg()).map(|(xi, yi)| Witness {
                x: book.message(xi),
                y: book.message(yi),
                premise: Premise::DifferOn {
                    positions: b.lf().to_vec(),
                },
                window: b.rg().to_vec(),
                measured: 0,
                required: Q::from_integer(1),
                block: Some(at),
            });
            BlockOutcome {
                block: at,
                deficient,
                pass: witness.is_none(),
                witness,
            }
        })
        .collect();
    let first = blocks.iter().find_map(|b| b.witness.clone());
    Ok(NeighborhoodReport {
        verdict: Verdict::from_witness("neighborhood_decoding", first),
        blocks,
    })
}

/// Pairs of a codeword restriction to `rg(B)` and the `x_lf(B)` it decodes to.
pub type DecodingTable = Vec<(Vec<u64>, Vec<u32>)>;

/// The decoding map `φ_B`: every codeword restriction to `rg(B)` with the
/// unique `x_lf(B)` it came from. `None` if the block does not decode.
pub fn decoding_table(
    code: &dyn TreeCode,
    p: &LaminarPartition,
    block: BlockRef,
    caps: &Caps,
) -> Result<Option<DecodingTable>> {
    if block.level == 0 || block.level > p.ell() || block.index >= p.level(block.level).len() {
        return Err(Error::invalid(format!("no block {block:?}")));
    }
    let b = &p.level(block.level)[block.index];
    let book = materialize(code, caps)?;
    let mut table: HashMap<Vec<u64>, Vec<u32>> = HashMap::new();
    for idx in 0..book.len() {
        let key = project(book.word(idx), b.rg());
        let val = project(&book.message(idx), b.lf());
        if *table.entry(key).or_insert_with(|| val.clone()) != val {
            return Ok(None);
        }
    }
    let mut rows: Vec<_> = table.into_iter().collect();
    rows.sort();
    Ok(Some(rows))
}

/// Restricts a construction-specific check to the cases the reduction to
/// neighborhood decoding uses for one block.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scope {
    All,
    Block(BlockRef),
}

fn lg_exact(n: usize, what: &str) -> Result<u32> {
    if n.is_power_of_two() {
        Ok(n.trailing_zeros())
    } else {
        Err(Error::invalid(format!(
            "{what} = {n} must be a power of two"
        )))
    }
}

/// For every pair, every disagreement `s'` and every `0 <= ℓ < k` with
/// `s' <= n - 2^ℓ`: with `s = ⌈s'/2^ℓ⌉·2^ℓ`, the codewords disagree on at
/// least `δ·2^ℓ` positions of `(s, s + 2^ℓ]`.
///
/// Witnesses whose `s'` lies in the left half of its dyadic block of length
/// `2^(ℓ+1)` name that block (level `ℓ + 1`).
pub fn check_eks_condition(code: &dyn TreeCode, delta: &Q, k: u32, caps: &Caps) -> Result<Verdict> {
    check_eks_condition_in(code, delta, k, Scope::All, caps)
}

pub fn check_eks_condition_in(
    code: &dyn TreeCode,
    delta: &Q,
    k: u32,
    scope: Scope,
    caps: &Caps,
) -> Result<Verdict> {
    let n = code.n();
    if lg_exact(n, "n")? != k {
        return Err(Error::invalid(format!("n = {n} is not 2^{k}")));
    }
    let book = materialize(code, caps)?;
    pair_budget(&book, (n * n * k.max(1) as usize) as u128, caps)?;
    let implied = |s_prime: usize, ell: u32| {
        let half = 1usize << ell;
        ((s_prime - 1) % (2 * half) < half).then(|| BlockRef {
            level: ell as usize + 1,
            index: (s_prime - 1) / (2 * half),
        })
    };
    let w = first_pair_witness(&book, |xi, yi| {
        let (x, y) = (book.message(xi), book.message(yi));
        let (cx, cy) = (book.word(xi), book.word(yi));
        for s_prime in (1..=n).filter(|&s| x[s - 1] != y[s - 1]) {
            for ell in 0..k {
                let len = 1usize << ell;
                if s_prime + len > n {
                    continue;
                }
                let block = implied(s_prime, ell);
                if let Scope::Block(b) = scope {
                    if block != Some(b) {
                        continue;
                    }
                }
                let s = s_prime.div_ceil(len) * len;
                let measured = hamming(&cx[s..s + len], &cy[s..s + len]);
                let required = delta * Q::from_integer(len as i128);
                if !meets(measured, &required) {
                    return Some(Witness {
                        x,
                        y,
                        premise: Premise::DifferAt { s: s_prime },
                        window: (s + 1..=s + len).collect(),
                        measured,
                        required,
                        block,
                    });
                }
            }
        }
        None
    });
    Ok(Verdict::from_witness("eks_condition", w))
}

/// Shape of the condition for one block-size window family.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct GhkParams {
    pub n: usize,
    pub m: usize,
    #[serde(with = "crate::rational::serde_q")]
    pub delta: Q,
}

impl GhkParams {
    /// `n` and `m` powers of two with `2m <= n`.
    pub fn new(n: usize, m: usize, delta: Q) -> Result<Self> {
        ghk_levels(n as u128, m as u128, &delta)?;
        Ok(GhkParams { n, m, delta })
    }

    /// Parameters of the construction itself: `m = (k_0/ε)·lg n` with
    /// `lg n`, `k_0` and `1/ε` powers of two.
    pub fn from_construction(n: usize, k0: u64, epsilon: &Q, delta: Q) -> Result<Self> {
        let lg_n = lg_exact(n, "n")? as u64;
        if !lg_n.is_power_of_two() || !k0.is_power_of_two() {
            return Err(Error::invalid("lg n and k_0 must be powers of two"));
        }
        if *epsilon.numer() != 1 || !(*epsilon.denom() as u128).is_power_of_two() {
            return Err(Error::invalid("1/ε must be a power of two"));
        }
        let m = (k0 as u128) * (*epsilon.denom() as u128) * lg_n as u128;
        let m = usize::try_from(m).map_err(|_| Error::invalid("m too large"))?;
        Self::new(n, m, delta)
    }

    /// `(κ, ℓ)` of the matching partition.
    pub fn levels(&self) -> (u32, usize) {
        ghk_levels(self.n as u128, self.m as u128, &self.delta).expect("checked in constructor")
    }

    /// Level whose blocks have length `2^(t+1)`, if any.
    pub fn level_of_t(&self, t: u32) -> Option<usize> {
        let (kappa, ell) = self.levels();
        let lg_n = self.n.trailing_zeros() as i64;
        (1..=ell).find(|&j| lg_n - kappa as i64 * (ell - j) as i64 - 1 == t as i64)
    }

    pub fn t_of_level(&self, j: usize) -> u32 {
        let (kappa, ell) = self.levels();
        self.n.trailing_zeros() - kappa * (ell - j) as u32 - 1
    }
}

/// For every pair, every `t` with `lg m <= t <= lg n - 1` and every
/// disagreement `i <= n - 2^t`: with `i_0 = ⌊(i-1)/2^t⌋·2^t`, the
/// codewords disagree on at least `δ·2^(t+1)` positions of
/// `(i_0, i_0 + 2^(t+1)]`.
///
/// Witnesses whose window is a block of the matching partition and whose
/// `i` lies in that block's left part name the block.
pub fn check_ghk_condition(
    code: &dyn TreeCode,
    params: &GhkParams,
    caps: &Caps,
) -> Result<Verdict> {
    check_ghk_condition_in(code, params, Scope::All, caps)
}

pub fn check_ghk_condition_in(
    code: &dyn TreeCode,
    params: &GhkParams,
    scope: Scope,
    caps: &Caps,
) -> Result<Verdict> {
    let n = code.n();
    if n != params.n {
        return Err(Error::invalid("code length does not match the parameters"));
    }
    let lg_n = n.trailing_zeros();
    let lg_m = params.m.trailing_zeros();
    let (kappa, _) = params.levels();
    let book = materialize(code, caps)?;
    pair_budget(&book, (n * n * (lg_n - lg_m).max(1) as usize) as u128, caps)?;
    let implied = |i: usize, t: u32| {
        let len = 1usize << (t + 1);
        let level = params.level_of_t(t)?;
        ((i - 1) % len < len >> kappa).then_some(BlockRef {
            level,
            index: (i - 1) / len,
        })
    };
    let w = first_pair_witness(&book, |xi, yi| {
        let (x, y) = (book.message(xi), book.message(yi));
        let (cx, cy) = (book.word(xi), book.word(yi));
        for i in (1..=n).filter(|&i| x[i - 1] != y[i - 1]) {
            for t in lg_m..lg_n {
                let step = 1usize << t;
                if i + step > n {
                    continue;
                }
                let block = implied(i, t);
                if let Scope::Block(b) = scope {
                    if block != Some(b) {
                        continue;
                    }
                }
                let i0 = (i - 1) / step * step;
                let hi = (i0 + 2 * step).min(n);
                let measured = hamming(&cx[i0..hi], &cy[i0..hi]);
                let required = params.delta * Q::from_integer(2 * step as i128);
                if !meets(measured, &required) {
                    return Some(Witness {
                        x,
                        y,
                        premise: Premise::DifferAt { s: i },
                        window: (i0 + 1..=hi).collect(),
                        measured,
                        required,
                        block,
                    });
                }
            }
        }
        None
    });
    Ok(Verdict::from_witness("ghk_condition", w))
}

/// Result of the layered-scale condition together with whether the scales
/// are large enough for the condition to imply neighborhood decoding.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ChsReport {
    pub verdict: Verdict,
    /// Every `ℓ_i` with `2 <= i <= m + 1` exceeds 8. Below that the window
    /// lower bound can be met by disagreements outside the block.
    pub lemma_precondition_holds: bool,
}

/// For `2 <= i <= m + 1`, every non-rightmost block `B` of `P_{i-1}` (length
/// `ℓ_i/2`) on which `x` and `y` differ, with `s` the leftmost disagreement
/// in `B`, and every `d` with `ℓ_{i-1}/2 <= d <= ℓ_i/2`: the codewords
/// disagree on at least `d/3` positions of `[s, s + d]`.
pub fn check_chs_condition(
    code: &dyn TreeCode,
    scales: &ChsScales,
    caps: &Caps,
) -> Result<ChsReport> {
    let n = code.n();
    let m = scales.m();
    if scales.lg_n() > 62 || n != 1usize << scales.lg_n() {
        return Err(Error::invalid(format!(
            "code length {n} does not match 2^{}",
            scales.lg_n()
        )));
    }
    let scale = |i: usize| 1usize << scales.lg_scale(i);
    let book = materialize(code, caps)?;
    pair_budget(&book, (m.max(1) * n * n) as u128, caps)?;
    let w = first_pair_witness(&book, |xi, yi| {
        let (x, y) = (book.message(xi), book.message(yi));
        let (cx, cy) = (book.word(xi), book.word(yi));
        for i in 2..=m + 1 {
            let len = scale(i) / 2;
            for lo in (1..=n - len).step_by(len) {
                let Some(s) = (lo..lo + len).find(|&p| x[p - 1] != y[p - 1]) else {
                    continue;
                };
                for d in scale(i - 1) / 2..=len {
                    if s + d > n {
                        break;
                    }
                    let measured = hamming(&cx[s - 1..s + d], &cy[s - 1..s + d]);
                    let required = Q::new(d as i128, 3);
                    if !meets(measured, &required) {
                        return Some(Witness {
                            x,
                            y,
                            premise: Premise::LeftmostFrom { lo, s },
                            window: (s..=s + d).collect(),
                            measured,
                            required,
                            block: Some(BlockRef {
                                level: i - 1,
                                index: (lo - 1) / len,
                            }),
                        });
                    }
                }
            }
        }
        None
    });
    let lemma_precondition_holds = (2..=m + 1).all(|i| scales.lg_scale(i) > 3);
    Ok(ChsReport {
        verdict: Verdict::from_witness("chs_condition", w),
        lemma_precondition_holds,
    })
}

/// `δ` rendered for reports.
pub fn describe_delta(delta: &Q) -> String {
    rational::fmt_q(delta)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::code::{trivial_code, Alphabet, FnCode, IdentityCode};
    use crate::partitions::{chs_partition, eks_partition, ghk_partition};
    use crate::rational::q;

    fn caps() -> Caps {
        Caps::default()
    }

    #[test]
    fn trivial_code_has_distance_one() {
        for n in [1, 2, 4, 6] {
            let c = trivial_code(n).unwrap();
            assert!(check_tree_distance(&c, &q(1, 1), &caps()).unwrap().pass);
            let v = check_tree_distance(&c, &q(1001, 1000), &caps()).unwrap();
            assert!(!v.pass);
            assert!(v.witness.unwrap().recheck(&c));
        }
    }

    #[test]
    fn vertex_and_message_forms_differ() {
        // Siblings collide at depth 1 but differ at depth 2.
        let c = FnCode::new(
            "late",
            2,
            Alphabet::binary(),
            Alphabet::new(4).unwrap(),
            |x| vec![0, 2 * x[0] as u64 + x[1] as u64],
        );
        assert!(
            check_tree_distance_messages(&c, &q(1, 2), &caps())
                .unwrap()
                .pass
        );
        let v = check_tree_distance(&c, &q(1, 2), &caps()).unwrap();
        assert!(!v.pass);
        let w = v.witness.unwrap();
        assert_eq!(w.window, vec![1]);
        assert!(w.recheck(&c));
    }

    #[test]
    fn exact_distance_matches_threshold_check() {
        let c = FnCode::new(
            "mix",
            4,
            Alphabet::binary(),
            Alphabet::new(4).unwrap(),
            |x| {
                (0..4)
                    .map(|j| (x[j] + if j > 0 { 2 * x[j - 1] } else { 0 }) as u64)
                    .collect()
            },
        );
        let d = tree_distance(&c, &caps()).unwrap();
        assert!(check_tree_distance(&c, &d, &caps()).unwrap().pass);
        let above = d + Q::new(1, 1000);
        assert!(!check_tree_distance(&c, &above, &caps()).unwrap().pass);
        assert_eq!(
            tree_distance(&trivial_code(5).unwrap(), &caps()).unwrap(),
            q(1, 1)
        );
    }

    #[test]
    fn identity_fails_windows_of_two() {
        let c = IdentityCode::new(4, 2).unwrap();
        let v = check_immediacy_function(
            &c,
            &Imm::Values(vec![2, 2]),
            &q(1, 1),
            ImmScope::Every,
            &caps(),
        )
        .unwrap();
        assert!(!v.pass);
        let w = v.witness.unwrap();
        assert_eq!(w.measured, 1);
        assert!(w.recheck(&c));
    }

    #[test]
    fn linear_first_only_matches_tree_distance() {
        let c = FnCode::new(
            "mix",
            4,
            Alphabet::binary(),
            Alphabet::new(4).unwrap(),
            |x| {
                (0..4)
                    .map(|j| (x[j] ^ if j > 0 { x[j - 1] } else { 0 }) as u64 + 2 * x[0] as u64)
                    .collect()
            },
        );
        for d in [q(1, 3), q(1, 2), q(2, 3), q(1, 1)] {
            let a = check_tree_distance(&c, &d, &caps()).unwrap();
            let b = check_immediacy_function(&c, &Imm::Linear, &d, ImmScope::FirstOnly, &caps())
                .unwrap();
            assert_eq!(a.pass, b.pass);
            assert_eq!(a.witness.map(|w| w.window), b.witness.map(|w| w.window));
        }
    }

    #[test]
    fn non_monotone_imm_rejected() {
        let c = IdentityCode::new(3, 2).unwrap();
        assert!(check_immediacy_function(
            &c,
            &Imm::Values(vec![2, 1]),
            &q(1, 2),
            ImmScope::Every,
            &caps()
        )
        .is_err());
    }

    #[test]
    fn neighborhood_trivial_and_identity() {
        let p = eks_partition(2).unwrap();
        let t = check_neighborhood_decoding(&trivial_code(4).unwrap(), &p, None, &caps()).unwrap();
        assert!(t.verdict.pass);
        assert_eq!(t.blocks.len(), 3);

        let id = IdentityCode::new(4, 2).unwrap();
        let r = check_neighborhood_decoding(&id, &p, None, &caps()).unwrap();
        assert!(!r.verdict.pass);
        assert!(r
            .failing_blocks()
            .contains(&BlockRef { level: 2, index: 0 }));
        for b in &r.blocks {
            if let Some(w) = &b.witness {
                assert!(w.recheck(&id));
            }
        }
    }

    #[test]
    fn decoding_table_inverts_trivial_code() {
        let p = eks_partition(2).unwrap();
        let c = trivial_code(4).unwrap();
        let top = BlockRef { level: 2, index: 0 };
        let rows = decoding_table(&c, &p, top, &caps()).unwrap().unwrap();
        for (rg, lf) in rows {
            // Positions 3 and 4 carry the whole prefix; the top two bits are x_1 x_2.
            assert_eq!(lf, vec![(rg[0] >> 3) as u32 & 1, (rg[0] >> 2) as u32 & 1]);
        }
        let id = IdentityCode::new(4, 2).unwrap();
        assert!(decoding_table(&id, &p, top, &caps()).unwrap().is_none());
    }

    #[test]
    fn eks_condition_on_trivial_and_identity() {
        let c = trivial_code(8).unwrap();
        assert!(check_eks_condition(&c, &q(1, 1), 3, &caps()).unwrap().pass);
        let id = IdentityCode::new(8, 2).unwrap();
        let v = check_eks_condition(&id, &q(1, 2), 3, &caps()).unwrap();
        let w = v.witness.unwrap();
        assert!(w.recheck(&id));
        assert_eq!(w.block, Some(BlockRef { level: 1, index: 3 }));
    }

    #[test]
    fn ghk_trivial_passes_and_reduction_holds() {
        let params = GhkParams::new(8, 2, q(1, 2)).unwrap();
        assert_eq!(params.levels(), (2, 1));
        let c = trivial_code(8).unwrap();
        assert!(check_ghk_condition(&c, &params, &caps()).unwrap().pass);
        let p = ghk_partition(8, 2, &q(1, 2)).unwrap();
        assert!(
            check_neighborhood_decoding(&c, &p, None, &caps())
                .unwrap()
                .verdict
                .pass
        );
    }

    #[test]
    fn ghk_shape_from_construction() {
        let p = GhkParams::from_construction(1 << 16, 16, &q(1, 2), q(1, 1 << 14)).unwrap();
        assert_eq!(p.m, 512);
        assert!(GhkParams::from_construction(1 << 8, 16, &q(1, 2), q(1, 4)).is_err());
        assert!(GhkParams::from_construction(1 << 16, 16, &q(1, 3), q(1, 4)).is_err());
    }

    #[test]
    fn ghk_collision_in_rg_fails_both() {
        // Positions 3.. forget x_1.
        let params = GhkParams::new(8, 2, q(1, 2)).unwrap();
        let c = FnCode::new("forget", 8, Alphabet::binary(), Alphabet::pow2(8), |x| {
            let full = trivial_code(8).unwrap().encode(x);
            full.into_iter()
                .enumerate()
                .map(|(j, w)| if j >= 2 { w & !(1 << 7) } else { w })
                .collect()
        });
        let g = check_ghk_condition(&c, &params, &caps()).unwrap();
        assert!(!g.pass);
        assert!(g.witness.as_ref().unwrap().recheck(&c));
        let p = ghk_partition(8, 2, &q(1, 2)).unwrap();
        let nb = check_neighborhood_decoding(&c, &p, None, &caps()).unwrap();
        let bad = nb.failing_blocks();
        assert_eq!(bad, vec![BlockRef { level: 1, index: 0 }]);
        assert!(
            !check_ghk_condition_in(&c, &params, Scope::Block(bad[0]), &caps())
                .unwrap()
                .pass
        );
    }

    #[test]
    fn chs_rightmost_violation_is_exempt() {
        // l1 = 2, shift -1: ℓ = (2, 8), P_1 blocks of 4 with lf of size 1.
        let scales = ChsScales::new(2, -1, 1).unwrap();
        let (p, ledger) = chs_partition(1, 2, -1).unwrap();
        // Positions 6..8 forget x_5, so only the rightmost block fails.
        let c = FnCode::new("tail", 8, Alphabet::binary(), Alphabet::pow2(8), |x| {
            let full = trivial_code(8).unwrap().encode(x);
            (0..8)
                .map(|j| if j < 5 { full[j] } else { full[j] & !(1 << 3) })
                .collect()
        });
        let r = check_chs_condition(&c, &scales, &caps()).unwrap();
        assert!(r.verdict.pass);
        assert!(!r.lemma_precondition_holds);
        assert!(
            check_neighborhood_decoding(&c, &p, Some(&ledger), &caps())
                .unwrap()
                .verdict
                .pass
        );
        assert!(
            !check_neighborhood_decoding(&c, &p, None, &caps())
                .unwrap()
                .verdict
                .pass
        );
    }

    #[test]
    fn chs_small_scale_does_not_imply_decoding() {
        // Disagreements only at s and at the first position past the block.
        let scales = ChsScales::new(2, -1, 1).unwrap();
        let (p, ledger) = chs_partition(1, 2, -1).unwrap();
        let c = FnCode::new("skip", 8, Alphabet::binary(), Alphabet::pow2(8), |x| {
            let full = trivial_code(8).unwrap().encode(x);
            (0..8)
                .map(|j| match j {
                    1..=3 => full[j] & !(1 << 7),
                    _ => full[j],
                })
                .collect()
        });
        let r = check_chs_condition(&c, &scales, &caps()).unwrap();
        assert!(r.verdict.pass);
        let nb = check_neighborhood_decoding(&c, &p, Some(&ledger), &caps()).unwrap();
        assert!(!nb.verdict.pass);
    }

    #[test]
    fn chs_collision_fails_condition() {
        let scales = ChsScales::new(2, -1, 1).unwrap();
        let c = IdentityCode::new(8, 2).unwrap();
        let r = check_chs_condition(&c, &scales, &caps()).unwrap();
        assert!(!r.verdict.pass);
        assert!(r.verdict.witness.unwrap().recheck(&c));
    }

    #[test]
    fn caps_are_enforced() {
        let c = trivial_code(12).unwrap();
        let tight = Caps {
            max_message_bits: 20,
            max_evaluations: 1000,
        };
        assert!(matches!(
            check_tree_distance(&c, &q(1, 1), &tight),
            Err(Error::CapExceeded { .. })
        ));
    }
}
