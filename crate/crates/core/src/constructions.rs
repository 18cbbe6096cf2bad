//! Block error-correcting codes, the layered dyadic tree code, and a seeded
//! random search over tree-code labelings.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::code::{hamming, Alphabet, Caps, Codebook, TableCode, TreeCode};
use crate::error::{Error, Result};
use crate::partitions::eks_partition;
use crate::rational::{self, Q};
use crate::verify::{self, check_neighborhood_decoding, NeighborhoodReport};

/// Cell widths tried in order when none is given.
pub const B_SCHEDULE: [u32; 5] = [2, 3, 4, 6, 8];

/// Largest block length the factory will search and certify.
pub const MAX_ECC_ELL: usize = 10;

/// Candidate words tried per random attempt when the word space is too
/// large to enumerate.
const SAMPLES_PER_ATTEMPT: usize = 1 << 18;
const ATTEMPTS: u64 = 8;
const ENUMERABLE_BITS: u32 = 20;

/// An injective map `{0,1}^ℓ → ({0,1}^b)^ℓ` with a certified distance.
///
/// Codeword `i` encodes the message whose bits, read with `x_1` most
/// significant, spell `i`. Cells are `b`-bit integers.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlockCode {
    ell: usize,
    b: u32,
    #[serde(with = "crate::rational::serde_q")]
    delta: Q,
    words: Vec<Vec<u64>>,
}

impl BlockCode {
    /// `0 ↦ 0^b`, `1 ↦ 1^b`.
    pub fn repetition(b: u32) -> Result<Self> {
        check_b(b)?;
        BlockCode::from_words(1, b, vec![vec![0], vec![(1u64 << b) - 1]])
    }

    /// Certifies `words` by exhaustive pairwise comparison.
    pub fn from_words(ell: usize, b: u32, words: Vec<Vec<u64>>) -> Result<Self> {
        check_b(b)?;
        if ell == 0 || ell > MAX_ECC_ELL {
            return Err(Error::invalid(format!(
                "block length {ell} outside 1..={MAX_ECC_ELL}"
            )));
        }
        if words.len() != 1 << ell || words.iter().any(|w| w.len() != ell) {
            return Err(Error::Format(format!(
                "a length-{ell} block code needs {} words of {ell} cells",
                1usize << ell
            )));
        }
        if words.iter().flatten().any(|&c| c >> b != 0) {
            return Err(Error::Format(format!("cell wider than {b} bits")));
        }
        let min = min_pair_distance(&words);
        if min == 0 {
            return Err(Error::invalid("block code is not injective"));
        }
        Ok(BlockCode {
            ell,
            b,
            delta: Q::new(min as i128, ell as i128),
            words,
        })
    }

    pub fn ell(&self) -> usize {
        self.ell
    }

    pub fn b(&self) -> u32 {
        self.b
    }

    /// Certified relative distance.
    pub fn delta(&self) -> Q {
        self.delta
    }

    pub fn words(&self) -> &[Vec<u64>] {
        &self.words
    }

    pub fn encode(&self, bits: &[u32]) -> &[u64] {
        assert_eq!(bits.len(), self.ell);
        let idx = bits
            .iter()
            .fold(0usize, |acc, &b| (acc << 1) | (b as usize & 1));
        &self.words[idx]
    }

    /// Recomputes the distance with a plain double loop.
    pub fn recertify(&self) -> Q {
        Q::new(min_pair_distance(&self.words) as i128, self.ell as i128)
    }
}

fn check_b(b: u32) -> Result<()> {
    if b == 0 || b > 16 {
        Err(Error::invalid(format!("cell width {b} outside 1..=16")))
    } else {
        Ok(())
    }
}

fn min_pair_distance(words: &[Vec<u64>]) -> usize {
    (0..words.len())
        .into_par_iter()
        .map(|i| {
            (i + 1..words.len())
                .map(|j| hamming(&words[i], &words[j]))
                .min()
                .unwrap_or(usize::MAX)
        })
        .min()
        .unwrap_or(usize::MAX)
}

fn word_from_index(mut v: u64, ell: usize, b: u32) -> Vec<u64> {
    let mask = (1u64 << b) - 1;
    let mut w = vec![0u64; ell];
    for cell in w.iter_mut().rev() {
        *cell = v & mask;
        v >>= b;
    }
    w
}

/// Greedy selection: walk candidates in order, keep each one at distance
/// at least `need` from everything kept so far.
fn greedy(
    candidates: impl Iterator<Item = Vec<u64>>,
    count: usize,
    need: usize,
) -> Option<Vec<Vec<u64>>> {
    let mut chosen: Vec<Vec<u64>> = Vec::with_capacity(count);
    for c in candidates {
        if chosen.iter().all(|w| hamming(w, &c) >= need) {
            chosen.push(c);
            if chosen.len() == count {
                return Some(chosen);
            }
        }
    }
    None
}

/// Searches for a length-`ell` code over `b`-bit cells with distance at
/// least `delta`. The zero message always maps to the zero word.
pub fn search_block_code(ell: usize, b: u32, delta: &Q, seed: u64) -> Result<BlockCode> {
    check_b(b)?;
    if *delta <= Q::from_integer(0) || *delta >= Q::from_integer(1) {
        return Err(Error::invalid("delta must lie in (0, 1)"));
    }
    if ell == 1 {
        return BlockCode::repetition(b);
    }
    if ell == 0 || ell > MAX_ECC_ELL {
        return Err(Error::invalid(format!(
            "block length {ell} outside 1..={MAX_ECC_ELL}"
        )));
    }
    let need = rational::ceil_q(&(delta * Q::from_integer(ell as i128))) as usize;
    let count = 1usize << ell;
    let bits = b * ell as u32;
    for attempt in 0..ATTEMPTS {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(((ell as u64) << 40) | ((b as u64) << 32) | attempt);
        let zero = vec![0u64; ell];
        let found = if bits <= ENUMERABLE_BITS {
            let mut order: Vec<u64> = (1..1u64 << bits).collect();
            order.shuffle(&mut rng);
            greedy(
                std::iter::once(zero).chain(order.into_iter().map(|v| word_from_index(v, ell, b))),
                count,
                need,
            )
        } else {
            let samples = (0..SAMPLES_PER_ATTEMPT)
                .map(|_| word_from_index(rng.gen::<u64>() & ((1u64 << bits) - 1), ell, b));
            greedy(std::iter::once(zero).chain(samples), count, need)
        };
        if let Some(words) = found {
            let code = BlockCode::from_words(ell, b, words)?;
            debug_assert!(code.delta() >= *delta);
            return Ok(code);
        }
    }
    Err(Error::SearchFailed(format!(
        "no length-{ell} code with distance {} over {b}-bit cells found; try a larger b",
        rational::fmt_q(delta)
    )))
}

/// One block code per length `1..=max_ell`, all over the same cell width.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EccFamily {
    pub b: u32,
    #[serde(with = "crate::rational::serde_q")]
    pub delta: Q,
    pub codes: Vec<BlockCode>,
}

impl EccFamily {
    pub fn get(&self, ell: usize) -> Option<&BlockCode> {
        self.codes.iter().find(|c| c.ell() == ell)
    }
}

/// Codes of every length `1..=max_ell` with distance at least `delta`,
/// trying each width in [`B_SCHEDULE`] until all lengths succeed.
pub fn ecc_family(delta: &Q, max_ell: usize, seed: u64) -> Result<EccFamily> {
    let lengths: Vec<usize> = (1..=max_ell).collect();
    family_for(delta, &lengths, None, seed)
}

fn family_for(delta: &Q, lengths: &[usize], b: Option<u32>, seed: u64) -> Result<EccFamily> {
    let widths: Vec<u32> = match b {
        Some(b) => vec![b],
        None => B_SCHEDULE.to_vec(),
    };
    let mut last_err = Error::invalid("empty width schedule");
    for b in widths {
        let codes: Result<Vec<BlockCode>> = lengths
            .iter()
            .map(|&ell| search_block_code(ell, b, delta, seed))
            .collect();
        match codes {
            Ok(codes) => {
                return Ok(EccFamily {
                    b,
                    delta: *delta,
                    codes,
                })
            }
            Err(e) => last_err = e,
        }
    }
    Err(last_err)
}

/// The layered dyadic construction on `n = 2^k` positions.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EksParams {
    pub k: u32,
    pub b: u32,
    #[serde(with = "crate::rational::serde_q")]
    pub delta: Q,
    pub seed: u64,
    /// `family[i]` has block length `2^i` for `0 <= i < k`.
    pub family: Vec<BlockCode>,
    /// Table rows (in `2..=k+1`) replaced by zero cells.
    #[serde(default)]
    pub zeroed_rows: Vec<u32>,
}

impl EksParams {
    /// Builds the family `ECC_{2^i}`, `0 <= i < k`, searching widths from
    /// [`B_SCHEDULE`] when `b` is `None`.
    pub fn build(k: u32, delta: &Q, b: Option<u32>, seed: u64) -> Result<Self> {
        if k == 0 || k > 8 {
            return Err(Error::invalid(format!(
                "k = {k} outside the supported range"
            )));
        }
        let lengths: Vec<usize> = (0..k).map(|i| 1usize << i).collect();
        if lengths.iter().any(|&l| l > MAX_ECC_ELL) {
            return Err(Error::invalid(format!(
                "k = {k} needs block length {}",
                1 << (k - 1)
            )));
        }
        let fam = family_for(delta, &lengths, b, seed)?;
        if fam.b * (k + 1) > 64 {
            return Err(Error::invalid("output symbols would exceed 64 bits"));
        }
        Ok(EksParams {
            k,
            b: fam.b,
            delta: *delta,
            seed,
            family: fam.codes,
            zeroed_rows: Vec::new(),
        })
    }

    pub fn n(&self) -> usize {
        1 << self.k
    }

    /// The same construction with the given rows zeroed.
    pub fn ablate(&self, rows: &[u32]) -> Result<Self> {
        if let Some(r) = rows.iter().find(|&&r| r < 2 || r > self.k + 1) {
            return Err(Error::invalid(format!(
                "row {r} outside 2..={}",
                self.k + 1
            )));
        }
        let mut out = self.clone();
        out.zeroed_rows = rows.to_vec();
        out.zeroed_rows.sort_unstable();
        out.zeroed_rows.dedup();
        Ok(out)
    }

    fn check(&self) -> Result<()> {
        if self.family.len() != self.k as usize
            || self
                .family
                .iter()
                .enumerate()
                .any(|(i, c)| c.ell() != 1 << i || c.b() != self.b)
        {
            return Err(Error::invalid("family does not match k and b"));
        }
        Ok(())
    }

    pub fn code(&self) -> Result<EksCode> {
        self.check()?;
        Ok(EksCode {
            params: self.clone(),
        })
    }
}

/// Encodes by building the `(k+1) × n` table of `b`-bit cells: row 1 holds
/// `ECC_1(x_j)`, row `i >= 2` holds `2^(i-2)` zero cells followed by
/// `ECC_{2^(i-2)}` of consecutive dyadic blocks. Column `j` is packed into
/// symbol `j` with row 1 in the lowest bits.
pub fn eks_encode(params: &EksParams, x: &[u32]) -> Vec<u64> {
    let n = params.n();
    assert_eq!(x.len(), n, "message length must be 2^k");
    let b = params.b;
    let mut out = vec![0u64; n];
    for (j, sym) in out.iter_mut().enumerate() {
        *sym = params.family[0].encode(&x[j..=j])[0];
    }
    for row in 2..=params.k + 1 {
        if params.zeroed_rows.contains(&row) {
            continue;
        }
        let len = 1usize << (row - 2);
        let code = &params.family[(row - 2) as usize];
        let shift = b * (row - 1);
        for block in 1..n / len {
            let cells = code.encode(&x[(block - 1) * len..block * len]);
            for (off, &cell) in cells.iter().enumerate() {
                out[block * len + off] |= cell << shift;
            }
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EksCode {
    params: EksParams,
}

impl EksCode {
    pub fn params(&self) -> &EksParams {
        &self.params
    }
}

impl TreeCode for EksCode {
    fn n(&self) -> usize {
        self.params.n()
    }
    fn input_alphabet(&self) -> Alphabet {
        Alphabet::binary()
    }
    fn output_alphabet(&self) -> Alphabet {
        Alphabet::pow2(self.params.b * (self.params.k + 1))
    }
    fn encode(&self, x: &[u32]) -> Vec<u64> {
        eks_encode(&self.params, x)
    }
    fn name(&self) -> String {
        let mut s = format!(
            "eks(k={}, b={}, δ={}, seed={})",
            self.params.k,
            self.params.b,
            rational::fmt_q(&self.params.delta),
            self.params.seed
        );
        if !self.params.zeroed_rows.is_empty() {
            s.push_str(&format!(" zeroed rows {:?}", self.params.zeroed_rows));
        }
        s
    }
}

/// Neighborhood decoding of the construction against the dyadic partition.
pub fn check_eks_is_immediacy_code(params: &EksParams, caps: &Caps) -> Result<NeighborhoodReport> {
    let code = params.code()?;
    let p = eks_partition(params.k)?;
    check_neighborhood_decoding(&code, &p, None, caps)
}

/// Outcome of [`random_code_search`].
#[derive(Debug, Clone)]
pub struct SearchOutcome {
    pub code: TableCode,
    /// Exact tree distance of `code`.
    pub delta: Q,
    /// Trial that produced `code`; `None` for the seeded labeling.
    pub trial: Option<u64>,
    pub trials_run: u64,
}

const TRIAL_CHUNK: u64 = 1024;

/// Labels for one trial. When `|Σ|` is at least the input size, siblings
/// get distinct labels: any labeling with two equal siblings has distance
/// zero and is not worth sampling.
fn random_labels(n: usize, q: u32, sigma: u64, seed: u64, trial: u64) -> Vec<u64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(trial);
    let edges = TableCode::edge_count(n, q).expect("checked by caller");
    let mut labels = Vec::with_capacity(edges);
    let symbols: Vec<u64> = (0..sigma).collect();
    while labels.len() < edges {
        if sigma >= q as u64 {
            labels.extend(symbols.choose_multiple(&mut rng, q as usize).copied());
        } else {
            labels.extend((0..q).map(|_| rng.gen_range(0..sigma)));
        }
    }
    labels
}

/// Samples `trials` random labelings of the depth-`n` binary tree over
/// `sigma_out` symbols and returns the one with the largest exact tree
/// distance (ties go to the earliest trial). Stops after the chunk in which
/// `target_delta` is reached. `initial`, if given, is scored first and is
/// only replaced by a strictly better trial.
pub fn random_code_search(
    n: usize,
    sigma_out: u64,
    target_delta: &Q,
    trials: u64,
    seed: u64,
    initial: Option<TableCode>,
    caps: &Caps,
) -> Result<SearchOutcome> {
    let q = 2u32;
    let sigma = Alphabet::new(sigma_out)?;
    if n == 0 || TableCode::edge_count(n, q).is_none() {
        return Err(Error::invalid("bad depth"));
    }
    let evals = (1u128 << n).pow(2) / 2 * n as u128;
    caps.check("search pair evaluations per trial", evals)?;
    let score = |code: &TableCode, floor: &Q| -> Result<Option<Q>> {
        let book = Codebook::materialize(code, caps)?;
        Ok(verify::book_distance_above(&book, floor))
    };

    let mut best: Option<SearchOutcome> = None;
    if let Some(code) = initial {
        if code.n() != n || code.output_alphabet() != sigma {
            return Err(Error::invalid("seed labeling has the wrong shape"));
        }
        let delta = score(&code, &Q::from_integer(-1))?.expect("floor below every ratio");
        best = Some(SearchOutcome {
            code,
            delta,
            trial: None,
            trials_run: 0,
        });
    }
    let mut done = 0u64;
    while done < trials {
        if best.as_ref().is_some_and(|b| b.delta >= *target_delta) {
            break;
        }
        let end = (done + TRIAL_CHUNK).min(trials);
        let floor = best.as_ref().map_or(Q::from_integer(-1), |b| b.delta);
        let chunk_best = (done..end)
            .into_par_iter()
            .map(|t| -> Result<Option<(Q, u64, TableCode)>> {
                let labels = random_labels(n, q, sigma_out, seed, t);
                let code = TableCode::new(n, q, sigma, labels)?;
                Ok(score(&code, &floor)?.map(|d| (d, t, code)))
            })
            .collect::<Result<Vec<_>>>()?
            .into_iter()
            .flatten()
            .reduce(|a, b| {
                if b.0 > a.0 || (b.0 == a.0 && b.1 < a.1) {
                    b
                } else {
                    a
                }
            });
        if let Some((delta, t, code)) = chunk_best {
            best = Some(SearchOutcome {
                code,
                delta,
                trial: Some(t),
                trials_run: 0,
            });
        }
        done = end;
    }
    let mut out = match best {
        Some(b) => b,
        None => {
            // Every trial scored zero; report the first one.
            let labels = random_labels(n, q, sigma_out, seed, 0);
            let code = TableCode::new(n, q, sigma, labels)?;
            let delta = score(&code, &Q::from_integer(-1))?.expect("floor below every ratio");
            SearchOutcome {
                code,
                delta,
                trial: Some(0),
                trials_run: 0,
            }
        }
    };
    out.trials_run = done;
    Ok(out)
}

/// Largest tree distance over every labeling of the depth-`n` binary tree
/// with `sigma_out` symbols, by full enumeration.
pub fn exhaustive_best_distance(n: usize, sigma_out: u64, caps: &Caps) -> Result<Q> {
    let edges = TableCode::edge_count(n, 2).ok_or_else(|| Error::invalid("bad depth"))?;
    let total = (sigma_out as u128)
        .checked_pow(edges as u32)
        .ok_or_else(|| Error::invalid("labeling count overflows"))?;
    caps.check("labelings", total * (1u128 << n).pow(2) * n as u128)?;
    let sigma = Alphabet::new(sigma_out)?;
    let best = (0..total as u64)
        .into_par_iter()
        .map(|mut idx| {
            let mut labels = vec![0u64; edges];
            for l in labels.iter_mut() {
                *l = idx % sigma_out;
                idx /= sigma_out;
            }
            let code = TableCode::new(n, 2, sigma, labels).expect("valid labels");
            let book = Codebook::materialize(&code, caps).expect("within caps");
            verify::book_distance_above(&book, &Q::from_integer(-1))
                .expect("floor below every ratio")
        })
        .max()
        .unwrap_or(Q::from_integer(0));
    Ok(best)
}

/// Backtracking search for a binary tree code of depth `n` over `sigma_out`
/// symbols with tree distance at least `delta`.
///
/// Edges are labeled in level order and every new label is checked against
/// all same-depth vertices labeled before it. The first root edge is fixed
/// to symbol 0 since relabeling symbols preserves distance. `Ok(None)`
/// means no such code exists.
pub fn find_tree_code(
    n: usize,
    sigma_out: u64,
    delta: &Q,
    caps: &Caps,
) -> Result<Option<TableCode>> {
    let edges = TableCode::edge_count(n, 2).ok_or_else(|| Error::invalid("bad depth"))?;
    let sigma = Alphabet::new(sigma_out)?;
    // Vertex v at depth d (1-based) with rank r sits at offset 2^d - 2 + r.
    let offset = |d: usize| (1usize << d) - 2;
    let mut labels = vec![u64::MAX; edges];
    let mut nodes: u64 = 0;

    // Checks the new edge at depth d, rank r against ranks 0..r at depth d.
    let consistent = |labels: &[u64], d: usize, r: usize| -> bool {
        for other in 0..r {
            // First divergence: highest differing bit of the two ranks.
            let s = d - (usize::BITS - (other ^ r).leading_zeros()) as usize + 1;
            let mut count = 0i128;
            for depth in s..=d {
                let (a, b) = (r >> (d - depth), other >> (d - depth));
                count += i128::from(labels[offset(depth) + a] != labels[offset(depth) + b]);
            }
            if Q::from_integer(count) < delta * Q::from_integer((d - s + 1) as i128) {
                return false;
            }
        }
        true
    };

    fn rec(
        pos: usize,
        labels: &mut Vec<u64>,
        sigma_out: u64,
        nodes: &mut u64,
        caps: &Caps,
        consistent: &dyn Fn(&[u64], usize, usize) -> bool,
    ) -> Result<bool> {
        if pos == labels.len() {
            return Ok(true);
        }
        *nodes += 1;
        caps.check("backtracking nodes", *nodes as u128)?;
        let d = (usize::BITS - (pos + 2).leading_zeros()) as usize - 1;
        let r = pos + 2 - (1 << d);
        let choices = if pos == 0 { 1 } else { sigma_out };
        for sym in 0..choices {
            labels[pos] = sym;
            // Every pair at depth d must still meet the bound at depth d.
            if consistent(labels, d, r) && rec(pos + 1, labels, sigma_out, nodes, caps, consistent)?
            {
                return Ok(true);
            }
        }
        labels[pos] = u64::MAX;
        Ok(false)
    }

    if rec(0, &mut labels, sigma_out, &mut nodes, caps, &consistent)? {
        Ok(Some(TableCode::new(n, 2, sigma, labels)?))
    } else {
        Ok(None)
    }
}
