//! Alphabets, messages and tree codes.
//!
//! A tree code of depth `n` is an online encoder `Σ_in^n → Σ^n`: the `j`-th
//! output character may depend only on the first `j` input characters.
//! Positions are 1-based in every public report and file format and 0-based
//! in slices.

use std::fmt;
use std::sync::Arc;

use num_traits::Zero;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rational::{self, Interval, Q};

/// Size of a symbol set. Powers of two are stored by exponent so that
/// alphabets like `{0,1}^128` can be described even when their symbols do
/// not fit a machine word.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Alphabet {
    size: AlphabetSize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
enum AlphabetSize {
    Pow2(u32),
    Other(u64),
}

impl Alphabet {
    pub fn new(size: u64) -> Result<Self> {
        if size == 0 {
            return Err(Error::invalid("alphabet size must be at least 1"));
        }
        if size.is_power_of_two() {
            Ok(Self::pow2(size.trailing_zeros()))
        } else {
            Ok(Alphabet {
                size: AlphabetSize::Other(size),
            })
        }
    }

    pub fn pow2(bits: u32) -> Self {
        Alphabet {
            size: AlphabetSize::Pow2(bits),
        }
    }

    pub fn binary() -> Self {
        Self::pow2(1)
    }

    /// Number of symbols, when it fits a `u64`.
    pub fn size(&self) -> Option<u64> {
        match self.size {
            AlphabetSize::Pow2(b) if b < 64 => Some(1u64 << b),
            AlphabetSize::Pow2(_) => None,
            AlphabetSize::Other(s) => Some(s),
        }
    }

    /// `lg |Σ|` when it is an integer.
    pub fn exact_bits(&self) -> Option<u32> {
        match self.size {
            AlphabetSize::Pow2(b) => Some(b),
            AlphabetSize::Other(_) => None,
        }
    }

    /// `lg |Σ|` as a certified bracket (exact for powers of two).
    pub fn lg(&self) -> Interval {
        match self.size {
            AlphabetSize::Pow2(b) => Interval::exact(Q::from_integer(b as i128)),
            AlphabetSize::Other(s) => rational::lg(&Q::from_integer(s as i128)),
        }
    }

    pub fn bits(&self) -> f64 {
        match self.size {
            AlphabetSize::Pow2(b) => b as f64,
            AlphabetSize::Other(s) => (s as f64).log2(),
        }
    }

    /// The alphabet `self × other`.
    pub fn product(&self, other: &Alphabet) -> Result<Alphabet> {
        match (self.size, other.size) {
            (AlphabetSize::Pow2(a), AlphabetSize::Pow2(b)) => Ok(Alphabet::pow2(a + b)),
            _ => {
                let (a, b) = (self.size(), other.size());
                match (a, b) {
                    (Some(a), Some(b)) => a
                        .checked_mul(b)
                        .ok_or_else(|| Error::invalid("product alphabet too large"))
                        .and_then(Alphabet::new),
                    _ => Err(Error::invalid("product alphabet too large")),
                }
            }
        }
    }

    pub fn contains(&self, sym: u64) -> bool {
        self.size().is_none_or(|s| sym < s)
    }
}

impl fmt::Display for Alphabet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.size {
            AlphabetSize::Pow2(b) if b < 64 => write!(f, "{}", 1u64 << b),
            AlphabetSize::Pow2(b) => write!(f, "2^{b}"),
            AlphabetSize::Other(s) => write!(f, "{s}"),
        }
    }
}

/// Limits on exhaustive work.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Caps {
    /// Largest message space, in bits, that may be materialized.
    pub max_message_bits: u32,
    /// Largest number of elementary evaluations (pair × position, message ×
    /// block, ...) a single check may perform.
    pub max_evaluations: u64,
}

impl Default for Caps {
    fn default() -> Self {
        Caps {
            max_message_bits: 20,
            max_evaluations: 1 << 24,
        }
    }
}

impl Caps {
    pub fn check(&self, what: &'static str, needed: u128) -> Result<()> {
        if needed > self.max_evaluations as u128 {
            Err(Error::CapExceeded {
                what,
                needed,
                cap: self.max_evaluations as u128,
            })
        } else {
            Ok(())
        }
    }
}

/// All strings of length `n` over `{0, …, q-1}`, ranked lexicographically
/// with position 1 most significant.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MessageSpace {
    pub n: usize,
    pub q: u32,
}

impl MessageSpace {
    pub fn new(n: usize, q: u32) -> Self {
        MessageSpace { n, q }
    }

    /// `q^n`, if it fits.
    pub fn count(&self) -> Option<u128> {
        (self.q as u128).checked_pow(self.n as u32)
    }

    pub fn bits(&self) -> f64 {
        self.n as f64 * (self.q as f64).log2()
    }

    /// Size of the space, refusing anything larger than `2^max_message_bits`.
    pub fn checked_count(&self, caps: &Caps) -> Result<usize> {
        let limit = 1u128 << caps.max_message_bits;
        match self.count() {
            Some(c) if c <= limit => Ok(c as usize),
            other => Err(Error::CapExceeded {
                what: "message space",
                needed: other.unwrap_or(u128::MAX),
                cap: limit,
            }),
        }
    }

    pub fn unrank(&self, mut idx: u64) -> Vec<u32> {
        let mut x = vec![0u32; self.n];
        for slot in x.iter_mut().rev() {
            *slot = (idx % self.q as u64) as u32;
            idx /= self.q as u64;
        }
        x
    }

    pub fn rank(&self, x: &[u32]) -> u64 {
        x.iter()
            .fold(0u64, |acc, &s| acc * self.q as u64 + s as u64)
    }
}

/// An online encoder from `Σ_in^n` to `Σ^n`.
///
/// Symbols are opaque integers below the alphabet size.
pub trait TreeCode: Send + Sync {
    fn n(&self) -> usize;
    fn input_alphabet(&self) -> Alphabet;
    fn output_alphabet(&self) -> Alphabet;

    /// Encodes a whole message of length `n`.
    fn encode(&self, x: &[u32]) -> Vec<u64>;

    /// Emits the character at position `prefix.len()` (1-based) given only
    /// the prefix read so far.
    fn emit(&self, prefix: &[u32]) -> u64 {
        assert!(!prefix.is_empty() && prefix.len() <= self.n());
        let mut padded = prefix.to_vec();
        padded.resize(self.n(), 0);
        self.encode(&padded)[prefix.len() - 1]
    }

    fn name(&self) -> String {
        "code".to_string()
    }

    fn message_space(&self) -> MessageSpace {
        let q = self
            .input_alphabet()
            .size()
            .expect("input alphabet must fit a machine word");
        MessageSpace::new(self.n(), q as u32)
    }
}

impl<T: TreeCode + ?Sized> TreeCode for Arc<T> {
    fn n(&self) -> usize {
        (**self).n()
    }
    fn input_alphabet(&self) -> Alphabet {
        (**self).input_alphabet()
    }
    fn output_alphabet(&self) -> Alphabet {
        (**self).output_alphabet()
    }
    fn encode(&self, x: &[u32]) -> Vec<u64> {
        (**self).encode(x)
    }
    fn emit(&self, prefix: &[u32]) -> u64 {
        (**self).emit(prefix)
    }
    fn name(&self) -> String {
        (**self).name()
    }
}

impl<T: TreeCode + ?Sized> TreeCode for &T {
    fn n(&self) -> usize {
        (**self).n()
    }
    fn input_alphabet(&self) -> Alphabet {
        (**self).input_alphabet()
    }
    fn output_alphabet(&self) -> Alphabet {
        (**self).output_alphabet()
    }
    fn encode(&self, x: &[u32]) -> Vec<u64> {
        (**self).encode(x)
    }
    fn emit(&self, prefix: &[u32]) -> u64 {
        (**self).emit(prefix)
    }
    fn name(&self) -> String {
        (**self).name()
    }
}

/// Rate `lg|Σ_in| / lg|Σ|`; for binary input this is `1/lg|Σ|`.
pub fn rate(code: &dyn TreeCode) -> Interval {
    let num = code.input_alphabet().lg();
    let den = code.output_alphabet().lg();
    num.div_pos(&den)
}

/// The code that writes the whole prefix on every edge.
///
/// Character `j` is the `n`-bit word whose top `j` bits are `x_1 … x_j`
/// and whose remaining bits are zero.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TrivialCode {
    n: usize,
}

pub fn trivial_code(n: usize) -> Result<TrivialCode> {
    if n == 0 || n > 63 {
        return Err(Error::invalid(format!(
            "trivial code needs 1 <= n <= 63 to tabulate symbols, got {n}"
        )));
    }
    Ok(TrivialCode { n })
}

impl TreeCode for TrivialCode {
    fn n(&self) -> usize {
        self.n
    }
    fn input_alphabet(&self) -> Alphabet {
        Alphabet::binary()
    }
    fn output_alphabet(&self) -> Alphabet {
        Alphabet::pow2(self.n as u32)
    }
    fn encode(&self, x: &[u32]) -> Vec<u64> {
        assert_eq!(x.len(), self.n);
        let mut acc = 0u64;
        x.iter()
            .enumerate()
            .map(|(i, &b)| {
                acc |= (b as u64 & 1) << (self.n - 1 - i);
                acc
            })
            .collect()
    }
    fn emit(&self, prefix: &[u32]) -> u64 {
        prefix.iter().enumerate().fold(0u64, |acc, (i, &b)| {
            acc | (b as u64 & 1) << (self.n - 1 - i)
        })
    }
    fn name(&self) -> String {
        format!("trivial(n={})", self.n)
    }
}

/// `c(x)_j = x_j`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct IdentityCode {
    n: usize,
    q: u32,
}

impl IdentityCode {
    pub fn new(n: usize, q: u32) -> Result<Self> {
        if n == 0 || q == 0 {
            return Err(Error::invalid("identity code needs n >= 1 and q >= 1"));
        }
        Ok(IdentityCode { n, q })
    }
}

impl TreeCode for IdentityCode {
    fn n(&self) -> usize {
        self.n
    }
    fn input_alphabet(&self) -> Alphabet {
        Alphabet::new(self.q as u64).expect("q >= 1")
    }
    fn output_alphabet(&self) -> Alphabet {
        self.input_alphabet()
    }
    fn encode(&self, x: &[u32]) -> Vec<u64> {
        x.iter().map(|&s| s as u64).collect()
    }
    fn emit(&self, prefix: &[u32]) -> u64 {
        *prefix.last().expect("non-empty prefix") as u64
    }
    fn name(&self) -> String {
        format!("identity(n={}, q={})", self.n, self.q)
    }
}

/// An explicitly tabulated tree: one label per edge in level order.
///
/// Edges at depth `j` come after all edges at depths `< j` and are ordered
/// by the rank of the length-`j` prefix they end.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TableCode {
    n: usize,
    q: u32,
    sigma_out: Alphabet,
    table: Vec<u64>,
    offsets: Vec<usize>,
}

fn level_offsets(n: usize, q: u32) -> Option<Vec<usize>> {
    let mut offsets = Vec::with_capacity(n + 1);
    let mut acc = 0usize;
    let mut width = 1usize;
    for _ in 0..n {
        offsets.push(acc);
        width = width.checked_mul(q as usize)?;
        acc = acc.checked_add(width)?;
    }
    offsets.push(acc);
    Some(offsets)
}

impl TableCode {
    pub fn new(n: usize, q: u32, sigma_out: Alphabet, table: Vec<u64>) -> Result<Self> {
        if n == 0 || q == 0 {
            return Err(Error::invalid("table code needs n >= 1 and q >= 1"));
        }
        let offsets = level_offsets(n, q).ok_or_else(|| Error::invalid("tree too large"))?;
        if table.len() != offsets[n] {
            return Err(Error::Format(format!(
                "table has {} labels, a depth-{n} tree over {q} inputs has {}",
                table.len(),
                offsets[n]
            )));
        }
        if let Some(bad) = table.iter().find(|&&s| !sigma_out.contains(s)) {
            return Err(Error::Format(format!(
                "label {bad} outside output alphabet of size {sigma_out}"
            )));
        }
        Ok(TableCode {
            n,
            q,
            sigma_out,
            table,
            offsets,
        })
    }

    pub fn labels(&self) -> &[u64] {
        &self.table
    }

    pub fn edge_count(n: usize, q: u32) -> Option<usize> {
        level_offsets(n, q).map(|o| o[n])
    }
}

impl TreeCode for TableCode {
    fn n(&self) -> usize {
        self.n
    }
    fn input_alphabet(&self) -> Alphabet {
        Alphabet::new(self.q as u64).expect("q >= 1")
    }
    fn output_alphabet(&self) -> Alphabet {
        self.sigma_out
    }
    fn encode(&self, x: &[u32]) -> Vec<u64> {
        assert_eq!(x.len(), self.n);
        let mut rank = 0usize;
        (0..self.n)
            .map(|j| {
                rank = rank * self.q as usize + x[j] as usize;
                self.table[self.offsets[j] + rank]
            })
            .collect()
    }
    fn emit(&self, prefix: &[u32]) -> u64 {
        let j = prefix.len();
        let rank = prefix
            .iter()
            .fold(0usize, |acc, &s| acc * self.q as usize + s as usize);
        self.table[self.offsets[j - 1] + rank]
    }
    fn name(&self) -> String {
        format!("table(n={}, q={}, |Σ|={})", self.n, self.q, self.sigma_out)
    }
}

/// The code `x ↦ ((c(x)_k, x_k))_k` over `Σ × Σ_in`.
///
/// The pair is packed as `c(x)_k · |Σ_in| + x_k`.
#[derive(Debug, Clone)]
pub struct SystematicCode<C> {
    inner: C,
    q: u64,
    sigma_out: Alphabet,
}

pub fn make_systematic<C: TreeCode>(code: C) -> Result<SystematicCode<C>> {
    let q = code
        .input_alphabet()
        .size()
        .ok_or_else(|| Error::invalid("input alphabet too large"))?;
    let sigma_out = code.output_alphabet().product(&code.input_alphabet())?;
    if sigma_out.size().is_none() {
        return Err(Error::invalid(
            "systematic alphabet does not fit 64-bit symbols",
        ));
    }
    Ok(SystematicCode {
        inner: code,
        q,
        sigma_out,
    })
}

impl<C: TreeCode> SystematicCode<C> {
    pub fn inner(&self) -> &C {
        &self.inner
    }
}

impl<C: TreeCode> TreeCode for SystematicCode<C> {
    fn n(&self) -> usize {
        self.inner.n()
    }
    fn input_alphabet(&self) -> Alphabet {
        self.inner.input_alphabet()
    }
    fn output_alphabet(&self) -> Alphabet {
        self.sigma_out
    }
    fn encode(&self, x: &[u32]) -> Vec<u64> {
        self.inner
            .encode(x)
            .into_iter()
            .zip(x)
            .map(|(c, &s)| c * self.q + s as u64)
            .collect()
    }
    fn emit(&self, prefix: &[u32]) -> u64 {
        self.inner.emit(prefix) * self.q + *prefix.last().unwrap() as u64
    }
    fn name(&self) -> String {
        format!("systematic({})", self.inner.name())
    }
}

type EncodeFn = dyn Fn(&[u32]) -> Vec<u64> + Send + Sync;

/// A code given by an arbitrary encoding closure. Used for synthetic and
/// ablated codes; nothing guarantees the online property.
#[derive(Clone)]
pub struct FnCode {
    n: usize,
    sigma_in: Alphabet,
    sigma_out: Alphabet,
    name: String,
    f: Arc<EncodeFn>,
}

impl FnCode {
    pub fn new(
        name: impl Into<String>,
        n: usize,
        sigma_in: Alphabet,
        sigma_out: Alphabet,
        f: impl Fn(&[u32]) -> Vec<u64> + Send + Sync + 'static,
    ) -> Self {
        FnCode {
            n,
            sigma_in,
            sigma_out,
            name: name.into(),
            f: Arc::new(f),
        }
    }
}

impl fmt::Debug for FnCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("FnCode")
            .field("name", &self.name)
            .field("n", &self.n)
            .finish()
    }
}

impl TreeCode for FnCode {
    fn n(&self) -> usize {
        self.n
    }
    fn input_alphabet(&self) -> Alphabet {
        self.sigma_in
    }
    fn output_alphabet(&self) -> Alphabet {
        self.sigma_out
    }
    fn encode(&self, x: &[u32]) -> Vec<u64> {
        (self.f)(x)
    }
    fn name(&self) -> String {
        self.name.clone()
    }
}

/// Every codeword of a code, indexed by message rank.
#[derive(Debug, Clone)]
pub struct Codebook {
    space: MessageSpace,
    sigma_out: Alphabet,
    words: Vec<u64>,
}

impl Codebook {
    pub fn materialize(code: &dyn TreeCode, caps: &Caps) -> Result<Self> {
        let space = code.message_space();
        let count = space.checked_count(caps)?;
        let n = space.n;
        let mut words = vec![0u64; count * n];
        words
            .par_chunks_mut(n)
            .enumerate()
            .for_each(|(idx, chunk)| {
                let w = code.encode(&space.unrank(idx as u64));
                chunk.copy_from_slice(&w);
            });
        Ok(Codebook {
            space,
            sigma_out: code.output_alphabet(),
            words,
        })
    }

    pub fn n(&self) -> usize {
        self.space.n
    }

    pub fn space(&self) -> MessageSpace {
        self.space
    }

    pub fn output_alphabet(&self) -> Alphabet {
        self.sigma_out
    }

    /// Number of messages.
    pub fn len(&self) -> usize {
        self.words.len() / self.space.n
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn word(&self, idx: usize) -> &[u64] {
        let n = self.space.n;
        &self.words[idx * n..(idx + 1) * n]
    }

    pub fn message(&self, idx: usize) -> Vec<u32> {
        self.space.unrank(idx as u64)
    }

    /// First violation of the online property, as
    /// `(x_rank, y_rank, position)` with `position` 1-based: `x` and `y`
    /// share the prefix up to `position` yet their codewords differ there.
    pub fn online_violation(&self) -> Option<(usize, usize, usize)> {
        let n = self.space.n;
        let q = self.space.q as usize;
        let total = self.len();
        // Messages sharing a length-j prefix form a contiguous run of q^(n-j).
        for j in 1..=n {
            let run = q.pow((n - j) as u32);
            for start in (0..total).step_by(run) {
                let head = self.word(start)[j - 1];
                if let Some(off) = (start + 1..start + run).find(|&y| self.word(y)[j - 1] != head) {
                    return Some((start, off, j));
                }
            }
        }
        None
    }

    /// First position at which the output symbol does not determine the
    /// input symbol (1-based), if any.
    pub fn systematic_violation(&self) -> Option<usize> {
        use std::collections::HashMap;
        let n = self.space.n;
        (1..=n).find(|&k| {
            let mut seen: HashMap<u64, u32> = HashMap::new();
            (0..self.len()).any(|idx| {
                let xk = self.message(idx)[k - 1];
                let sym = self.word(idx)[k - 1];
                *seen.entry(sym).or_insert(xk) != xk
            })
        })
    }
}

/// Tabulates an online code into level-order edge labels.
pub fn tabulate(code: &dyn TreeCode, caps: &Caps) -> Result<TableCode> {
    let book = Codebook::materialize(code, caps)?;
    if let Some((_, _, position)) = book.online_violation() {
        return Err(Error::NotOnline { position });
    }
    let space = book.space();
    let (n, q) = (space.n, space.q as usize);
    let mut table = Vec::with_capacity(TableCode::edge_count(n, space.q).unwrap_or(0));
    for j in 1..=n {
        let run = q.pow((n - j) as u32);
        for start in (0..book.len()).step_by(run) {
            table.push(book.word(start)[j - 1]);
        }
    }
    TableCode::new(n, space.q, code.output_alphabet(), table)
}

/// Divergence point and relative distance of two codewords past it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DivergentDistance {
    /// First index (1-based) where the messages differ.
    pub s: usize,
    /// Hamming disagreements of the codewords on positions `s..=n`.
    pub disagreements: usize,
    /// `n - s + 1`.
    pub length: usize,
    #[serde(with = "crate::rational::serde_q")]
    pub relative_distance: Q,
}

pub fn divergent_distance(code: &dyn TreeCode, x: &[u32], y: &[u32]) -> Result<DivergentDistance> {
    let n = code.n();
    if x.len() != n || y.len() != n {
        return Err(Error::invalid(format!("messages must have length {n}")));
    }
    let s = x
        .iter()
        .zip(y)
        .position(|(a, b)| a != b)
        .ok_or_else(|| Error::invalid("messages are equal; no divergence point"))?
        + 1;
    let (cx, cy) = (code.encode(x), code.encode(y));
    let disagreements = hamming(&cx[s - 1..], &cy[s - 1..]);
    let length = n - s + 1;
    Ok(DivergentDistance {
        s,
        disagreements,
        length,
        relative_distance: Q::new(disagreements as i128, length as i128),
    })
}

pub fn hamming<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    a.iter().zip(b).filter(|(x, y)| x != y).count()
}

/// `true` iff `count >= threshold` for a non-negative rational threshold.
pub(crate) fn meets(count: usize, threshold: &Q) -> bool {
    if threshold.is_zero() {
        return true;
    }
    Q::from_integer(count as i128) >= *threshold
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rational::q;

    #[test]
    fn alphabet_sizes() {
        let a = Alphabet::new(8).unwrap();
        assert_eq!(a.exact_bits(), Some(3));
        assert_eq!(a.size(), Some(8));
        let b = Alphabet::new(3).unwrap();
        assert_eq!(b.exact_bits(), None);
        assert_eq!(a.product(&b).unwrap().size(), Some(24));
        assert_eq!(Alphabet::pow2(128).size(), None);
        assert!(Alphabet::new(0).is_err());
    }

    #[test]
    fn trivial_characters_hold_whole_prefix() {
        let c = trivial_code(3).unwrap();
        assert_eq!(c.encode(&[1, 0, 1]), vec![0b100, 0b100, 0b101]);
        assert_eq!(c.output_alphabet().size(), Some(8));
        assert_eq!(rate(&c), Interval::exact(q(1, 3)));
        assert_eq!(rate(&trivial_code(1).unwrap()), Interval::exact(q(1, 1)));
        assert!(trivial_code(0).is_err());
    }

    #[test]
    fn trivial_divergence_at_last_position() {
        let c = trivial_code(3).unwrap();
        let d = divergent_distance(&c, &[0, 0, 0], &[0, 0, 1]).unwrap();
        assert_eq!(d.s, 3);
        assert_eq!(d.relative_distance, q(1, 1));
        assert!(divergent_distance(&c, &[0, 1, 0], &[0, 1, 0]).is_err());
    }

    #[test]
    fn systematic_alphabet_is_product() {
        let inner = FnCode::new(
            "four",
            3,
            Alphabet::binary(),
            Alphabet::new(4).unwrap(),
            |x| x.iter().map(|&b| 3 * b as u64).collect(),
        );
        let s = make_systematic(inner).unwrap();
        assert_eq!(s.output_alphabet().size(), Some(8));

        let id = make_systematic(IdentityCode::new(4, 2).unwrap()).unwrap();
        assert_eq!(id.output_alphabet().size(), Some(4));
        // (x_k, x_k) packed as 2·x_k + x_k
        assert_eq!(id.encode(&[1, 0, 1, 1]), vec![3, 0, 3, 3]);
    }

    #[test]
    fn table_round_trip_through_tabulate() {
        let c = trivial_code(4).unwrap();
        let t = tabulate(&c, &Caps::default()).unwrap();
        assert_eq!(t.labels().len(), 2 + 4 + 8 + 16);
        for idx in 0..16u64 {
            let x = c.message_space().unrank(idx);
            assert_eq!(t.encode(&x), c.encode(&x));
            for j in 1..=4 {
                assert_eq!(t.emit(&x[..j]), c.emit(&x[..j]));
            }
        }
    }

    #[test]
    fn non_online_code_is_detected() {
        // Position 1 peeks at x_2.
        let c = FnCode::new("peek", 3, Alphabet::binary(), Alphabet::binary(), |x| {
            vec![x[1] as u64, x[1] as u64, x[2] as u64]
        });
        let book = Codebook::materialize(&c, &Caps::default()).unwrap();
        assert_eq!(book.online_violation().map(|v| v.2), Some(1));
        assert!(matches!(
            tabulate(&c, &Caps::default()),
            Err(Error::NotOnline { position: 1 })
        ));
    }

    #[test]
    fn message_ranks() {
        let s = MessageSpace::new(3, 3);
        assert_eq!(s.unrank(5), vec![0, 1, 2]);
        assert_eq!(s.rank(&[2, 2, 2]), 26);
        let caps = Caps {
            max_message_bits: 4,
            ..Caps::default()
        };
        assert!(MessageSpace::new(5, 2).checked_count(&caps).is_err());
        assert_eq!(MessageSpace::new(4, 2).checked_count(&caps).unwrap(), 16);
    }
}
