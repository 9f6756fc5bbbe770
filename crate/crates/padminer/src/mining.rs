//! Mining of frequent, cohesive, compressing sequential patterns.
//!
//! Patterns are gapped subsequences of the discrete windows. A pattern is kept
//! when it is long enough, ranks in the top-k by duration-constrained support,
//! and saves bits when the covered windows are re-encoded with the pattern
//! replaced by a marker symbol (Huffman description length).

use std::collections::{BTreeMap, BTreeSet, BinaryHeap, HashMap};

use serde::{Deserialize, Serialize};

use crate::discretize::{symbols_to_letters, DiscreteSequenceDB, Symbol};
use crate::error::{Error, Result};

/// Tolerance for the `span / |X| <= rdur` comparison.
const RDUR_EPS: f64 = 1e-9;

/// Marker token standing in for a removed pattern occurrence in a residual.
const MARKER: i64 = -1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SequentialPattern {
    pub symbols: Vec<Symbol>,
    /// Plain subsequence support (number of covered windows, gaps unbounded).
    pub support: usize,
    /// Support under the relative-duration constraint; this is what ranking uses.
    pub support_rdur: usize,
    /// `support_rdur / |db|`; the embedding feature value.
    pub rsupport: f64,
    pub bits_saved: f64,
}

impl SequentialPattern {
    pub fn letters(&self) -> String {
        symbols_to_letters(&self.symbols)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MiningConfig {
    /// Maximum number of patterns kept (top-k by support_rdur).
    pub k: usize,
    pub min_len: usize,
    /// Minimum relative duration (cohesion); 1.0 means consecutive only.
    pub rdur: f64,
}

impl Default for MiningConfig {
    fn default() -> Self {
        Self {
            k: 10_000,
            min_len: 3,
            rdur: 1.2,
        }
    }
}

impl MiningConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k < 1 {
            return Err(Error::InvalidMiningConfig("k must be >= 1".into()));
        }
        if self.min_len < 1 {
            return Err(Error::InvalidMiningConfig("min_len must be >= 1".into()));
        }
        if self.rdur < 1.0 {
            return Err(Error::InvalidMiningConfig("rdur must be >= 1.0".into()));
        }
        Ok(())
    }
}

/// Does `span / len <= rdur` hold, within tolerance.
pub fn rdur_ok(span: usize, len: usize, rdur: f64) -> bool {
    span as f64 <= rdur * len as f64 + RDUR_EPS
}

/// Gapped subsequence test. The empty pattern occurs in everything.
pub fn occurs(pattern: &[Symbol], sequence: &[Symbol]) -> bool {
    let mut it = sequence.iter();
    pattern.iter().all(|p| it.any(|s| s == p))
}

/// Minimal occurrence span (`last - first + 1`) over all occurrences, or
/// `None` when the pattern does not occur. The empty pattern has span 0.
pub fn min_duration(pattern: &[Symbol], sequence: &[Symbol]) -> Option<usize> {
    if pattern.is_empty() {
        return Some(0);
    }
    best_occurrence(pattern, sequence).map(|(span, _)| span)
}

/// Greedy leftmost match of `pattern` starting exactly at `start`.
/// Returns matched positions, or `None` if no match fits.
fn greedy_from(pattern: &[Symbol], sequence: &[Symbol], start: usize) -> Option<Vec<usize>> {
    if sequence[start] != pattern[0] {
        return None;
    }
    let mut positions = Vec::with_capacity(pattern.len());
    positions.push(start);
    let mut j = start + 1;
    for p in &pattern[1..] {
        loop {
            if j >= sequence.len() {
                return None;
            }
            if sequence[j] == *p {
                positions.push(j);
                j += 1;
                break;
            }
            j += 1;
        }
    }
    Some(positions)
}

/// The minimal-span occurrence; among equal spans the earliest start wins.
/// Returns `(span, start)`.
fn best_occurrence(pattern: &[Symbol], sequence: &[Symbol]) -> Option<(usize, usize)> {
    let mut best: Option<(usize, usize)> = None;
    for start in 0..sequence.len() {
        if let Some(pos) = greedy_from(pattern, sequence, start) {
            let span = pos[pos.len() - 1] - start + 1;
            if best.is_none_or(|(bs, _)| span < bs) {
                best = Some((span, start));
            }
        }
    }
    best
}

/// Indices of database sequences whose minimal occurrence span satisfies the
/// relative-duration bound. Each window counts once.
pub fn cover_rdur(pattern: &[Symbol], db: &DiscreteSequenceDB, rdur: f64) -> Vec<usize> {
    db.sequences
        .iter()
        .enumerate()
        .filter(|(_, (_, seq))| {
            min_duration(pattern, seq).is_some_and(|span| rdur_ok(span, pattern.len(), rdur))
        })
        .map(|(i, _)| i)
        .collect()
}

/// Plain subsequence cover (no duration constraint).
pub fn cover(pattern: &[Symbol], db: &DiscreteSequenceDB) -> Vec<usize> {
    db.sequences
        .iter()
        .enumerate()
        .filter(|(_, (_, seq))| occurs(pattern, seq))
        .map(|(i, _)| i)
        .collect()
}

/// Total encoded size in bits of a corpus with the given symbol counts under
/// an optimal (Huffman) code. A corpus with at most one distinct symbol costs
/// zero bits; the code table itself is not charged.
pub fn huffman_total_bits<I: IntoIterator<Item = u64>>(counts: I) -> u64 {
    let mut heap: BinaryHeap<std::cmp::Reverse<u64>> = counts
        .into_iter()
        .filter(|&c| c > 0)
        .map(std::cmp::Reverse)
        .collect();
    if heap.len() <= 1 {
        return 0;
    }
    let mut total = 0u64;
    while heap.len() > 1 {
        let a = heap.pop().unwrap().0;
        let b = heap.pop().unwrap().0;
        total += a + b;
        heap.push(std::cmp::Reverse(a + b));
    }
    total
}

/// The sequence with one occurrence of the pattern (minimal-span, earliest)
/// replaced by a single marker. Gap symbols inside the span stay in place.
pub fn residual(pattern: &[Symbol], sequence: &[Symbol]) -> Vec<i64> {
    let Some((_, start)) = best_occurrence(pattern, sequence) else {
        return sequence.iter().map(|&s| s as i64).collect();
    };
    let positions = greedy_from(pattern, sequence, start).unwrap();
    let mut matched = vec![false; sequence.len()];
    for &p in &positions {
        matched[p] = true;
    }
    let mut out = Vec::with_capacity(sequence.len());
    for (i, &s) in sequence.iter().enumerate() {
        if matched[i] {
            if i == positions[0] {
                out.push(MARKER);
            }
        } else {
            out.push(s as i64);
        }
    }
    out
}

/// Bits saved by encoding the covered windows with the pattern factored out:
/// `sum DL(S) - (|X| * log2(alphabet) + sum DL(S | X))`, description lengths
/// by Huffman coding over the concatenated (residual) corpus.
pub fn bits_saved(pattern: &[Symbol], db: &DiscreteSequenceDB) -> Result<f64> {
    let cov = cover(pattern, db);
    if cov.is_empty() || pattern.is_empty() {
        return Err(Error::EmptyCover);
    }
    let mut orig_counts: HashMap<i64, u64> = HashMap::new();
    let mut res_counts: HashMap<i64, u64> = HashMap::new();
    for &idx in &cov {
        let seq = &db.sequences[idx].1;
        for &s in seq {
            *orig_counts.entry(s as i64).or_insert(0) += 1;
        }
        for t in residual(pattern, seq) {
            *res_counts.entry(t).or_insert(0) += 1;
        }
    }
    let dl_orig = huffman_total_bits(orig_counts.into_values());
    let dl_res = huffman_total_bits(res_counts.into_values());
    let pattern_cost = pattern.len() as f64 * (db.alphabet_size as f64).log2();
    Ok(dl_orig as f64 - (pattern_cost + dl_res as f64))
}

/// Ranking key: higher support_rdur first, then shorter, then lexicographic.
#[derive(Debug, Clone, PartialEq, Eq)]
struct Ranked {
    support_rdur: usize,
    symbols: Vec<Symbol>,
}

impl Ord for Ranked {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        other
            .support_rdur
            .cmp(&self.support_rdur)
            .then(self.symbols.len().cmp(&other.symbols.len()))
            .then(self.symbols.cmp(&other.symbols))
    }
}

impl PartialOrd for Ranked {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

/// Match states of one sequence under the current prefix: for every position
/// where the prefix can end, the latest position where it can start. Ends are
/// strictly increasing.
#[derive(Debug, Clone)]
struct SeqStates {
    seq: usize,
    states: Vec<(u32, u32)>, // (end, best_start)
}

type Projection = Vec<SeqStates>;

fn min_span(states: &[(u32, u32)]) -> usize {
    states
        .iter()
        .map(|&(e, s)| (e - s + 1) as usize)
        .min()
        .unwrap_or(usize::MAX)
}

/// Grow every covered sequence by one symbol, producing the projections of all
/// single-symbol extensions in one scan. States whose gap count can no longer
/// satisfy the duration bound for any extension are dropped.
fn extend_all(
    db: &DiscreteSequenceDB,
    proj: &Projection,
    new_len: usize,
    gap_budget: usize,
) -> BTreeMap<Symbol, Projection> {
    let mut children: BTreeMap<Symbol, Projection> = BTreeMap::new();
    let mut per_symbol: HashMap<Symbol, Vec<(u32, u32)>> = HashMap::new();
    for entry in proj {
        per_symbol.clear();
        let seq = &db.sequences[entry.seq].1;
        let mut state_idx = 0;
        let mut run_best: Option<u32> = None;
        let first_end = entry.states[0].0 as usize;
        for (j, &s) in seq.iter().enumerate().skip(first_end + 1) {
            while state_idx < entry.states.len() && (entry.states[state_idx].0 as usize) < j {
                let bs = entry.states[state_idx].1;
                run_best = Some(run_best.map_or(bs, |r| r.max(bs)));
                state_idx += 1;
            }
            let Some(best_start) = run_best else { continue };
            let gaps = (j as u32 - best_start + 1) as usize - new_len;
            if gaps > gap_budget {
                continue;
            }
            per_symbol.entry(s).or_default().push((j as u32, best_start));
        }
        for (sym, states) in per_symbol.drain() {
            children.entry(sym).or_default().push(SeqStates {
                seq: entry.seq,
                states,
            });
        }
    }
    // drain order of the hash map is arbitrary; restore sequence order
    for proj in children.values_mut() {
        proj.sort_by_key(|s| s.seq);
    }
    children
}

/// Projections of all single symbols.
fn singletons(db: &DiscreteSequenceDB) -> BTreeMap<Symbol, Projection> {
    let mut children: BTreeMap<Symbol, Projection> = BTreeMap::new();
    for (idx, (_, seq)) in db.sequences.iter().enumerate() {
        let mut per_symbol: HashMap<Symbol, Vec<(u32, u32)>> = HashMap::new();
        for (j, &s) in seq.iter().enumerate() {
            per_symbol.entry(s).or_default().push((j as u32, j as u32));
        }
        for (sym, states) in per_symbol {
            children
                .entry(sym)
                .or_default()
                .push(SeqStates { seq: idx, states });
        }
    }
    for proj in children.values_mut() {
        proj.sort_by_key(|s| s.seq);
    }
    children
}

/// Mine the interesting patterns of a sequence database: depth-first
/// pattern growth over pseudo prefix-projections with top-k heap pruning,
/// followed by the description-length filter.
///
/// The result is exactly the set of patterns with `|X| >= min_len` and
/// positive `bits_saved` among the top-k by `support_rdur` (ties broken
/// toward shorter, then lexicographically smaller patterns), ordered by that
/// same ranking.
pub fn mine_interesting_patterns(
    db: &DiscreteSequenceDB,
    config: &MiningConfig,
) -> Result<Vec<SequentialPattern>> {
    config.validate()?;
    if db.is_empty() {
        return Ok(Vec::new());
    }
    let max_len = db.sequence_length();
    if config.min_len > max_len {
        return Ok(Vec::new());
    }
    // total gaps of any occurrence satisfying the duration bound for a
    // pattern of any length are capped by (rdur - 1) * max_len
    let gap_budget = ((config.rdur - 1.0) * max_len as f64 + RDUR_EPS).floor() as usize;

    let mut topk: BTreeSet<Ranked> = BTreeSet::new();
    let threshold = |topk: &BTreeSet<Ranked>| {
        if topk.len() == config.k {
            topk.iter().next_back().map_or(0, |r| r.support_rdur)
        } else {
            0
        }
    };

    let mut stack: Vec<(Vec<Symbol>, Projection)> = Vec::new();
    for (sym, proj) in singletons(db).into_iter().rev() {
        stack.push((vec![sym], proj));
    }

    while let Some((pattern, proj)) = stack.pop() {
        if pattern.len() >= config.min_len {
            let support_rdur = proj
                .iter()
                .filter(|s| rdur_ok(min_span(&s.states), pattern.len(), config.rdur))
                .count();
            if support_rdur > 0 {
                let candidate = Ranked {
                    support_rdur,
                    symbols: pattern.clone(),
                };
                if topk.len() < config.k {
                    topk.insert(candidate);
                } else if let Some(worst) = topk.iter().next_back() {
                    if candidate < *worst {
                        topk.insert(candidate);
                        topk.pop_last();
                    }
                }
            }
        }
        if pattern.len() == max_len {
            continue;
        }
        // plain-cover support of the prefix bounds support_rdur of every
        // extension; prune strictly below the heap threshold
        let thr = threshold(&topk);
        if proj.len() < thr {
            continue;
        }
        for (sym, child_proj) in extend_all(db, &proj, pattern.len() + 1, gap_budget)
            .into_iter()
            .rev()
        {
            if child_proj.len() < threshold(&topk) {
                continue;
            }
            let mut child = pattern.clone();
            child.push(sym);
            stack.push((child, child_proj));
        }
    }

    let total = db.len() as f64;
    let mut result = Vec::new();
    for ranked in &topk {
        let saved = bits_saved(&ranked.symbols, db)?;
        if saved > 0.0 {
            result.push(SequentialPattern {
                symbols: ranked.symbols.clone(),
                support: cover(&ranked.symbols, db).len(),
                support_rdur: ranked.support_rdur,
                rsupport: ranked.support_rdur as f64 / total,
                bits_saved: saved,
            });
        }
    }
    Ok(result)
}
