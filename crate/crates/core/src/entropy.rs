//! Exact distributions over small outcome spaces, Shannon entropy in bits,
//! and the level-by-level entropy ledger for laminar immediacy codes.

use std::collections::{BTreeMap, HashMap};

use rayon::prelude::*;
use serde::Serialize;

use crate::code::{Caps, Codebook, TreeCode};
use crate::error::{Error, Result};
use crate::partitions::{validate_laminar, BlockRef, DeficiencyLedger, LaminarPartition};
use crate::rational::{fmt_q, to_f64, Interval, Q};

/// Tolerance for every entropy inequality.
pub const TOLERANCE: f64 = 1e-9;

/// Compensated summation.
#[derive(Debug, Default, Clone, Copy)]
struct Neumaier {
    sum: f64,
    c: f64,
}

impl Neumaier {
    fn add(&mut self, v: f64) {
        let t = self.sum + v;
        if self.sum.abs() >= v.abs() {
            self.c += (self.sum - t) + v;
        } else {
            self.c += (v - t) + self.sum;
        }
        self.sum = t;
    }

    fn value(self) -> f64 {
        self.sum + self.c
    }
}

/// `-p·lg p` for exact `p = num/den`.
fn plogp(p: &Q) -> f64 {
    if *p.numer() == 0 {
        return 0.0;
    }
    let lg_inv = (*p.denom() as f64).log2() - (*p.numer() as f64).log2();
    to_f64(p) * lg_inv
}

/// Entropy of an empirical distribution given by counts summing to `total`.
fn entropy_of_counts<'a>(counts: impl Iterator<Item = &'a u64>, total: u64) -> f64 {
    let mut acc = Neumaier::default();
    for &c in counts {
        if c > 0 {
            acc.add(c as f64 * (c as f64).log2());
        }
    }
    (total as f64).log2() - acc.value() / total as f64
}

/// A joint distribution over named discrete variables with exact
/// probabilities.
#[derive(Debug, Clone, PartialEq)]
pub struct FiniteJoint {
    names: Vec<String>,
    support: Vec<(Vec<u64>, Q)>,
}

impl FiniteJoint {
    /// Duplicate outcomes are merged and zero-probability ones dropped.
    pub fn new(names: Vec<String>, support: Vec<(Vec<u64>, Q)>) -> Result<Self> {
        let mut merged: BTreeMap<Vec<u64>, Q> = BTreeMap::new();
        let mut total = Q::from_integer(0);
        for (tuple, p) in support {
            if tuple.len() != names.len() {
                return Err(Error::invalid("outcome arity does not match the variables"));
            }
            if *p.numer() < 0 {
                return Err(Error::invalid("negative probability"));
            }
            total += p;
            *merged.entry(tuple).or_insert_with(|| Q::from_integer(0)) += p;
        }
        if total != Q::from_integer(1) {
            return Err(Error::invalid(format!(
                "probabilities sum to {}",
                fmt_q(&total)
            )));
        }
        let mut seen = names.clone();
        seen.sort();
        seen.dedup();
        if seen.len() != names.len() {
            return Err(Error::invalid("duplicate variable name"));
        }
        Ok(FiniteJoint {
            names,
            support: merged
                .into_iter()
                .filter(|(_, p)| *p.numer() != 0)
                .collect(),
        })
    }

    /// Uniform over the listed outcomes, counting repeats with multiplicity.
    pub fn uniform(names: Vec<String>, outcomes: Vec<Vec<u64>>) -> Result<Self> {
        if outcomes.is_empty() {
            return Err(Error::invalid("empty support"));
        }
        let p = Q::new(1, outcomes.len() as i128);
        Self::new(names, outcomes.into_iter().map(|t| (t, p)).collect())
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn support(&self) -> &[(Vec<u64>, Q)] {
        &self.support
    }

    fn indices(&self, vars: &[&str]) -> Result<Vec<usize>> {
        vars.iter()
            .map(|v| {
                self.names
                    .iter()
                    .position(|n| n == v)
                    .ok_or_else(|| Error::invalid(format!("unknown variable {v}")))
            })
            .collect()
    }

    /// Exact marginal on `vars`.
    pub fn marginal(&self, vars: &[&str]) -> Result<BTreeMap<Vec<u64>, Q>> {
        let idx = self.indices(vars)?;
        let mut m: BTreeMap<Vec<u64>, Q> = BTreeMap::new();
        for (t, p) in &self.support {
            let key: Vec<u64> = idx.iter().map(|&i| t[i]).collect();
            *m.entry(key).or_insert_with(|| Q::from_integer(0)) += p;
        }
        Ok(m)
    }

    /// `H(vars)` in bits. The empty set has entropy 0.
    pub fn joint_entropy(&self, vars: &[&str]) -> Result<f64> {
        let m = self.marginal(vars)?;
        let mut acc = Neumaier::default();
        for p in m.values() {
            acc.add(plogp(p));
        }
        Ok(acc.value())
    }

    /// `H(a | given)`.
    pub fn conditional_entropy(&self, a: &[&str], given: &[&str]) -> Result<f64> {
        let both: Vec<&str> = a.iter().chain(given).copied().collect();
        Ok(self.joint_entropy(&both)? - self.joint_entropy(given)?)
    }
}

/// `H(vars)` in bits.
pub fn entropy(dist: &FiniteJoint, vars: &[&str]) -> Result<f64> {
    if vars.is_empty() {
        return Err(Error::invalid("entropy of an empty variable set"));
    }
    dist.joint_entropy(vars)
}

/// `I(a : b | cond)`; `cond` may be empty.
pub fn mutual_information(
    dist: &FiniteJoint,
    a: &[&str],
    b: &[&str],
    cond: &[&str],
) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::invalid("mutual information needs non-empty sets"));
    }
    let overlap = |x: &[&str], y: &[&str]| x.iter().any(|v| y.contains(v));
    if overlap(a, b) || overlap(a, cond) || overlap(b, cond) {
        return Err(Error::invalid("variable sets overlap"));
    }
    let h = |parts: &[&[&str]]| dist.joint_entropy(&parts.concat());
    Ok(h(&[a, cond])? + h(&[b, cond])? - h(&[a, b, cond])? - h(&[cond])?)
}

#[derive(Debug, Clone, Serialize)]
pub struct DataProcessingReport {
    pub h_a: f64,
    pub i_bc: f64,
    /// `I(B:C) - H(A)`.
    pub information_margin: f64,
    /// `H(B) + H(C) - H(B,C) - H(A)`.
    pub entropy_margin: f64,
    pub pass: bool,
}

/// Checks `I(B:C) >= H(A)` and `H(B) + H(C) >= H(B,C) + H(A)` when `A` is a
/// function of `B` and of `C`. A joint where that fails is rejected.
pub fn verify_data_processing(
    dist: &FiniteJoint,
    a: &[&str],
    b: &[&str],
    c: &[&str],
) -> Result<DataProcessingReport> {
    let h_ab = dist.conditional_entropy(a, b)?;
    let h_ac = dist.conditional_entropy(a, c)?;
    if h_ab >= TOLERANCE || h_ac >= TOLERANCE {
        return Err(Error::Precondition(format!(
            "A is not determined by B and by C: H(A|B) = {h_ab:e}, H(A|C) = {h_ac:e}"
        )));
    }
    let h_a = entropy(dist, a)?;
    let i_bc = mutual_information(dist, b, c, &[])?;
    let bc: Vec<&str> = b.iter().chain(c).copied().collect();
    let entropy_margin = entropy(dist, b)? + entropy(dist, c)? - entropy(dist, &bc)? - h_a;
    let information_margin = i_bc - h_a;
    Ok(DataProcessingReport {
        h_a,
        i_bc,
        information_margin,
        entropy_margin,
        pass: information_margin >= -TOLERANCE && entropy_margin >= -TOLERANCE,
    })
}

/// Per-block terms of the ledger at one level.
#[derive(Debug, Clone, Serialize)]
pub struct BlockTerm {
    pub block: BlockRef,
    pub deficient: bool,
    pub h_block: f64,
    pub h_lf: f64,
    pub h_rg: f64,
    /// `H(Y_lf) + H(Y_rg) - |lf|·lg|Σ_in| - H(Y_B)`.
    pub lf_margin: f64,
    /// `H(Y_lf) + H(Y_rg) - α·|B|·lg|Σ_in| - H(Y_B)`; for deficient blocks
    /// the subtracted term is dropped.
    pub margin: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct LevelTerm {
    pub level: usize,
    /// `Σ_{B ∈ P_i} H(Y_B)`.
    pub t: f64,
    /// `α·lg|Σ_in|·(n - Σ_{B ∈ S_i} |B|)`; zero at level 0.
    pub required_decrement: f64,
    /// `T_{i-1} - T_i - required_decrement`; zero at level 0.
    pub slack: f64,
    pub blocks: Vec<BlockTerm>,
}

#[derive(Debug, Clone, Serialize)]
pub struct EntropyLedger {
    pub code: String,
    pub n: usize,
    pub ell: usize,
    #[serde(with = "crate::rational::serde_q")]
    pub alpha: Q,
    pub lg_sigma_in: f64,
    /// `lg|Σ'|` of the systematic code.
    pub lg_sigma_systematic: f64,
    pub deficiency: u128,
    pub levels: Vec<LevelTerm>,
    /// `H(Y) = n·lg|Σ_in|`.
    pub h_y: f64,
    /// `Σ_k H(Y_k)`.
    pub singleton_sum: f64,
    /// `T_ℓ - n·lg|Σ_in|`.
    pub top_margin: f64,
    /// `Σ_k H(Y_k) - T_0`.
    pub base_margin: f64,
    /// `n·lg|Σ'| - Σ_k H(Y_k)`.
    pub support_margin: f64,
    /// `T_0 - T_ℓ - α·lg|Σ_in|·(nℓ - D)`.
    pub chain_margin: f64,
    /// `α·(ℓ - D/n)·lg|Σ_in|`, the alphabet bound the chain yields.
    pub derived_bound: Interval,
    /// `T_0/n - lg|Σ_in|`, the entropic quantity the chain bounds from
    /// below; it never exceeds `lg|Σ'| - lg|Σ_in|`.
    pub entropic_alphabet: f64,
    pub failures: Vec<String>,
    pub pass: bool,
}

impl EntropyLedger {
    pub fn t(&self, i: usize) -> f64 {
        self.levels[i].t
    }
}

/// Replays the entropy chain on the uniform message distribution of a
/// systematic code. Inequalities that fail are listed in `failures`; they
/// are expected only when the code is not an immediacy code for `p`.
pub fn ledger_replay(
    code: &dyn TreeCode,
    p: &LaminarPartition,
    ledger: Option<&DeficiencyLedger>,
    caps: &Caps,
) -> Result<EntropyLedger> {
    if code.n() != p.n() {
        return Err(Error::invalid("code length does not match the partition"));
    }
    let report = validate_laminar(p)?;
    if !report.passed() {
        return Err(Error::Precondition("partition fails validation".into()));
    }
    if let Some(l) = ledger {
        if l.ell() != p.ell() {
            return Err(Error::invalid("ledger depth does not match the partition"));
        }
    }
    let book = Codebook::materialize(code, caps)?;
    if let Some(pos) = book.systematic_violation() {
        return Err(Error::NotSystematic { position: pos + 1 });
    }

    let n = p.n();
    let ell = p.ell();
    let alpha = p.alpha();
    let lg_in = code.input_alphabet().bits();
    let lg_out = code.output_alphabet().bits();

    // Every position set whose entropy is needed, deduplicated.
    let mut sets: BTreeMap<Vec<usize>, usize> = BTreeMap::new();
    let mut intern = |s: Vec<usize>| {
        let next = sets.len();
        *sets.entry(s).or_insert(next)
    };
    let base_ids: Vec<usize> = p.base().iter().map(|b| intern(b.clone())).collect();
    let singleton_ids: Vec<usize> = (1..=n).map(|k| intern(vec![k])).collect();
    let mut level_ids = Vec::with_capacity(ell);
    for i in 1..=ell {
        let ids: Vec<(usize, usize, usize)> = p
            .level(i)
            .iter()
            .map(|b| {
                (
                    intern(b.members()),
                    intern(b.lf().to_vec()),
                    intern(b.rg().to_vec()),
                )
            })
            .collect();
        level_ids.push(ids);
    }
    let mut ordered: Vec<(Vec<usize>, usize)> = sets.into_iter().collect();
    ordered.sort_by_key(|(_, id)| *id);
    let positions: Vec<Vec<usize>> = ordered.into_iter().map(|(s, _)| s).collect();

    let total = book.len();
    let tallies = tally(&book, &positions);
    let h: Vec<f64> = tallies
        .iter()
        .map(|t| entropy_of_counts(t.values(), total as u64))
        .collect();

    let alpha_f = to_f64(&alpha);
    let mut levels = Vec::with_capacity(ell + 1);
    let t0: f64 = sum(base_ids.iter().map(|&i| h[i]));
    levels.push(LevelTerm {
        level: 0,
        t: t0,
        required_decrement: 0.0,
        slack: 0.0,
        blocks: Vec::new(),
    });
    let mut failures = Vec::new();
    for i in 1..=ell {
        let mut blocks = Vec::new();
        let mut deficient_size = 0usize;
        for (idx, (b_id, lf_id, rg_id)) in level_ids[i - 1].iter().copied().enumerate() {
            let block = BlockRef {
                level: i,
                index: idx,
            };
            let tb = &p.level(i)[idx];
            let deficient = ledger.is_some_and(|l| l.contains(block));
            if deficient {
                deficient_size += tb.len();
            }
            let pair = h[lf_id] + h[rg_id] - h[b_id];
            let lf_margin = pair - tb.lf().len() as f64 * lg_in;
            let margin = if deficient {
                pair
            } else {
                pair - alpha_f * tb.len() as f64 * lg_in
            };
            if margin < -TOLERANCE {
                failures.push(format!("block {idx} at level {i}: margin {margin:.3e}"));
            }
            blocks.push(BlockTerm {
                block,
                deficient,
                h_block: h[b_id],
                h_lf: h[lf_id],
                h_rg: h[rg_id],
                lf_margin,
                margin,
            });
        }
        let t = sum(blocks.iter().map(|b| b.h_block));
        let required = alpha_f * lg_in * (n - deficient_size) as f64;
        let slack = levels[i - 1].t - t - required;
        if slack < -TOLERANCE {
            failures.push(format!("level {i}: slack {slack:.3e}"));
        }
        levels.push(LevelTerm {
            level: i,
            t,
            required_decrement: required,
            slack,
            blocks,
        });
    }

    let h_y = n as f64 * lg_in;
    let singleton_sum = sum(singleton_ids.iter().map(|&i| h[i]));
    let top_margin = levels[ell].t - h_y;
    let base_margin = singleton_sum - t0;
    let support_margin = n as f64 * lg_out - singleton_sum;
    for (what, v) in [
        ("top level below H(Y)", top_margin),
        ("level 0 above the singleton sum", base_margin),
        ("singleton sum above n·lg|Σ'|", support_margin),
    ] {
        if v < -TOLERANCE {
            failures.push(format!("{what}: {v:.3e}"));
        }
    }

    let deficiency = ledger.map_or(0, DeficiencyLedger::budget_used);
    let chain_margin =
        t0 - levels[ell].t - alpha_f * lg_in * ((n * ell) as f64 - deficiency as f64);
    if chain_margin < -TOLERANCE {
        failures.push(format!("telescoped chain: {chain_margin:.3e}"));
    }
    let coeff = alpha * (Q::from_integer(ell as i128) - Q::new(deficiency as i128, n as i128));
    let derived_bound = code.input_alphabet().lg().scale(&coeff);
    Ok(EntropyLedger {
        code: code.name(),
        n,
        ell,
        alpha,
        lg_sigma_in: lg_in,
        lg_sigma_systematic: lg_out,
        deficiency,
        levels,
        h_y,
        singleton_sum,
        top_margin,
        base_margin,
        support_margin,
        chain_margin,
        derived_bound,
        entropic_alphabet: t0 / n as f64 - lg_in,
        pass: failures.is_empty(),
        failures,
    })
}

fn sum(it: impl Iterator<Item = f64>) -> f64 {
    let mut acc = Neumaier::default();
    it.for_each(|v| acc.add(v));
    acc.value()
}

type Tally = HashMap<Vec<u64>, u64>;

/// Counts of each restriction over all codewords, split by message ranges
/// and merged.
fn tally(book: &Codebook, positions: &[Vec<usize>]) -> Vec<Tally> {
    let empty = || vec![Tally::new(); positions.len()];
    (0..book.len())
        .into_par_iter()
        .fold(empty, |mut acc, idx| {
            let w = book.word(idx);
            for (t, pos) in acc.iter_mut().zip(positions) {
                let key: Vec<u64> = pos.iter().map(|&k| w[k - 1]).collect();
                *t.entry(key).or_insert(0) += 1;
            }
            acc
        })
        .reduce(empty, |mut a, b| {
            for (x, y) in a.iter_mut().zip(b) {
                for (k, c) in y {
                    *x.entry(k).or_insert(0) += c;
                }
            }
            a
        })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bounds::{rate_bound_deficient, rate_bound_plain};
    use crate::code::{make_systematic, trivial_code, Alphabet, FnCode, IdentityCode};
    use crate::partitions::{chs_partition, eks_partition};
    use crate::rational::q;

    fn names(v: &[&str]) -> Vec<String> {
        v.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn basic_entropies() {
        let d = FiniteJoint::uniform(names(&["x"]), (0..3).map(|i| vec![i]).collect()).unwrap();
        assert!((entropy(&d, &["x"]).unwrap() - 3f64.log2()).abs() < 1e-12);
        let c = FiniteJoint::uniform(names(&["x"]), vec![vec![5]; 4]).unwrap();
        assert_eq!(entropy(&c, &["x"]).unwrap(), 0.0);
        let bits: Vec<Vec<u64>> = (0..8).map(|i| vec![i & 1, (i >> 1) & 1, i >> 2]).collect();
        let u = FiniteJoint::uniform(names(&["a", "b", "c"]), bits).unwrap();
        assert!((entropy(&u, &["a", "b", "c"]).unwrap() - 3.0).abs() < 1e-12);
        assert!(mutual_information(&u, &["a"], &["b"], &[]).unwrap().abs() < 1e-12);
        assert!(entropy(&u, &[]).is_err());
        assert!(mutual_information(&u, &["a"], &["a"], &[]).is_err());
    }

    #[test]
    fn rejects_bad_joints() {
        assert!(FiniteJoint::new(names(&["x"]), vec![(vec![0], q(1, 2))]).is_err());
        assert!(
            FiniteJoint::new(names(&["x"]), vec![(vec![0], q(3, 2)), (vec![1], q(-1, 2))]).is_err()
        );
        assert!(FiniteJoint::new(names(&["x", "x"]), vec![(vec![0, 0], q(1, 1))]).is_err());
    }

    #[test]
    fn data_processing_examples() {
        let same =
            FiniteJoint::uniform(names(&["a", "b", "c"]), vec![vec![0, 0, 0], vec![1, 1, 1]])
                .unwrap();
        let r = verify_data_processing(&same, &["a"], &["b"], &["c"]).unwrap();
        assert!((r.i_bc - 1.0).abs() < 1e-12 && r.information_margin.abs() < 1e-12 && r.pass);

        let indep: Vec<Vec<u64>> = (0..4).map(|i| vec![0, i & 1, i >> 1]).collect();
        let d = FiniteJoint::uniform(names(&["a", "b", "c"]), indep).unwrap();
        assert!(
            verify_data_processing(&d, &["a"], &["b"], &["c"])
                .unwrap()
                .pass
        );

        let not_fn: Vec<Vec<u64>> = (0..4).map(|i| vec![i & 1, i >> 1, 0]).collect();
        let d = FiniteJoint::uniform(names(&["a", "b", "c"]), not_fn).unwrap();
        assert!(matches!(
            verify_data_processing(&d, &["a"], &["b"], &["c"]),
            Err(Error::Precondition(_))
        ));
    }

    #[test]
    fn trivial_ledger_matches_plain_bound() {
        let c = make_systematic(trivial_code(8).unwrap()).unwrap();
        let p = eks_partition(3).unwrap();
        let l = ledger_replay(&c, &p, None, &Caps::default()).unwrap();
        assert!(l.pass, "{:?}", l.failures);
        assert_eq!(l.levels.len(), 4);
        assert!(l.levels.iter().all(|t| t.slack >= -TOLERANCE));
        assert_eq!(l.derived_bound, Interval::exact(q(3, 2)));
        assert_eq!(
            l.derived_bound,
            Interval::exact(rate_bound_plain(&q(1, 2), 3, &q(1, 1)))
        );
        assert!(l.entropic_alphabet >= 1.5 - TOLERANCE);
        assert!((l.t(3) - 8.0).abs() < 1e-9);
    }

    #[test]
    fn identity_ledger_fails() {
        let c = make_systematic(IdentityCode::new(8, 2).unwrap()).unwrap();
        let p = eks_partition(3).unwrap();
        let l = ledger_replay(&c, &p, None, &Caps::default()).unwrap();
        assert!(!l.pass);
        assert!(l.levels[1].slack < -0.5);
        assert!(l.levels[1]
            .blocks
            .iter()
            .all(|b| (b.lf_margin + 1.0).abs() < 1e-9));
    }

    #[test]
    fn rejects_non_systematic() {
        let c = FnCode::new("parity", 8, Alphabet::binary(), Alphabet::binary(), |x| {
            let mut acc = 0;
            x.iter()
                .map(|&b| {
                    acc ^= b as u64;
                    acc
                })
                .collect()
        });
        let p = eks_partition(3).unwrap();
        assert!(matches!(
            ledger_replay(&c, &p, None, &Caps::default()),
            Err(Error::NotSystematic { .. })
        ));
    }

    #[test]
    fn zero_level_partition() {
        let c = make_systematic(trivial_code(4).unwrap()).unwrap();
        let p = LaminarPartition::new(4, q(1, 2), (1..=4).map(|k| vec![k]).collect(), Vec::new());
        let l = ledger_replay(&c, &p, None, &Caps::default()).unwrap();
        assert!(l.pass);
        assert_eq!(l.levels.len(), 1);
        assert_eq!(l.derived_bound, Interval::exact(q(0, 1)));
    }

    #[test]
    fn deficient_chain_on_layered_partition() {
        let (p, ledger) = chs_partition(1, 2, -1).unwrap();
        let c = make_systematic(trivial_code(p.n()).unwrap()).unwrap();
        let l = ledger_replay(&c, &p, Some(&ledger), &Caps::default()).unwrap();
        assert!(l.pass, "{:?}", l.failures);
        let d = ledger.budget_used();
        assert_eq!(
            l.derived_bound,
            Interval::exact(rate_bound_deficient(
                &p.alpha(),
                p.ell() as u64,
                d,
                p.n() as u128,
                &q(1, 1)
            ))
        );
    }
}
