//! Sparse pattern-based embedding of windows.
//!
//! Row = window, column = pattern; a cell holds the pattern's relative support
//! when the pattern occurs in the window (under the same duration constraint
//! used during mining) and is absent otherwise.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::discretize::{DiscreteSequenceDB, Symbol};
use crate::error::{Error, Result};
use crate::mining::{min_duration, rdur_ok, SequentialPattern};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatternEmbedding {
    pub source_series_id: String,
    pub pattern_ids: Vec<String>,
    pub window_starts: Vec<usize>,
    /// Per window: sorted `(column, value)` entries; zeros are not stored.
    pub rows: Vec<Vec<(u32, f64)>>,
}

impl PatternEmbedding {
    pub fn column_count(&self) -> usize {
        self.pattern_ids.len()
    }

    pub fn stored_entries(&self) -> usize {
        self.rows.iter().map(Vec::len).sum()
    }

    /// Materialize one row densely.
    pub fn dense_row(&self, row: usize) -> Vec<f64> {
        let mut out = vec![0.0; self.pattern_ids.len()];
        for &(col, v) in &self.rows[row] {
            out[col as usize] = v;
        }
        out
    }

    pub fn dense(&self) -> Vec<Vec<f64>> {
        (0..self.rows.len()).map(|r| self.dense_row(r)).collect()
    }
}

struct TrieNode {
    sym: Symbol,
    children: Vec<usize>,
    /// Columns of the patterns ending here (duplicates share a node).
    patterns: Vec<usize>,
    depth: usize,
}

fn build_trie(patterns: &[SequentialPattern]) -> Vec<TrieNode> {
    let mut nodes = vec![TrieNode {
        sym: 0,
        children: Vec::new(),
        patterns: Vec::new(),
        depth: 0,
    }];
    for (col, p) in patterns.iter().enumerate() {
        let mut cur = 0;
        for (d, &s) in p.symbols.iter().enumerate() {
            let next = nodes[cur].children.iter().copied().find(|&c| nodes[c].sym == s);
            cur = match next {
                Some(c) => c,
                None => {
                    let idx = nodes.len();
                    nodes.push(TrieNode {
                        sym: s,
                        children: Vec::new(),
                        patterns: Vec::new(),
                        depth: d + 1,
                    });
                    nodes[cur].children.push(idx);
                    idx
                }
            };
        }
        nodes[cur].patterns.push(col);
    }
    nodes
}

/// Immutable inputs shared by the whole trie walk over one sequence.
struct MatchCtx<'a> {
    trie: &'a [TrieNode],
    seq: &'a [Symbol],
    rdur: f64,
    patterns: &'a [SequentialPattern],
}

/// Walk the pattern trie over one sequence, extending the prefix match states
/// one symbol at a time and abandoning a subtree as soon as no occurrence of
/// the prefix remains.
fn match_trie(
    ctx: &MatchCtx,
    node: usize,
    states: &[(u32, u32)],
    row: &mut Vec<(u32, f64)>,
    // one scratch state buffer per trie depth, reused across the whole DFS
    pool: &mut Vec<Vec<(u32, u32)>>,
) {
    let n = &ctx.trie[node];
    if !n.patterns.is_empty() {
        let span = states.iter().map(|&(e, s)| (e - s + 1) as usize).min();
        if let Some(span) = span {
            if rdur_ok(span, n.depth, ctx.rdur) {
                for &col in &n.patterns {
                    row.push((col as u32, ctx.patterns[col].rsupport));
                }
            }
        }
    }
    if n.children.is_empty() {
        return;
    }
    if pool.len() <= n.depth {
        pool.resize_with(n.depth + 1, Vec::new);
    }
    let mut child_states = std::mem::take(&mut pool[n.depth]);
    for &child in &n.children {
        let sym = ctx.trie[child].sym;
        child_states.clear();
        if node == 0 {
            for (j, &s) in ctx.seq.iter().enumerate() {
                if s == sym {
                    child_states.push((j as u32, j as u32));
                }
            }
        } else {
            let mut idx = 0;
            let mut run_best: Option<u32> = None;
            let first_end = states[0].0 as usize;
            for (j, &s) in ctx.seq.iter().enumerate().skip(first_end + 1) {
                while idx < states.len() && (states[idx].0 as usize) < j {
                    let bs = states[idx].1;
                    run_best = Some(run_best.map_or(bs, |r| r.max(bs)));
                    idx += 1;
                }
                if s == sym {
                    if let Some(bs) = run_best {
                        child_states.push((j as u32, bs));
                    }
                }
            }
        }
        if !child_states.is_empty() {
            match_trie(ctx, child, &child_states, row, pool);
        }
    }
    pool[n.depth] = child_states;
}

fn check_geometry(patterns: &[SequentialPattern], db: &DiscreteSequenceDB) -> Result<()> {
    let max_len = db.sequence_length();
    for p in patterns {
        if p.symbols.len() > max_len {
            return Err(Error::GeometryMismatch(format!(
                "pattern {} longer than window sequences ({})",
                p.letters(),
                max_len
            )));
        }
        if p.symbols.iter().any(|&s| s as usize >= db.alphabet_size) {
            return Err(Error::GeometryMismatch(format!(
                "pattern {} uses symbols outside alphabet {}",
                p.letters(),
                db.alphabet_size
            )));
        }
    }
    Ok(())
}

/// Fast embedding: shared-prefix trie matching with early abandoning.
/// Elementwise identical to [`naive_embedding`].
pub fn create_embedding(
    patterns: &[SequentialPattern],
    db: &DiscreteSequenceDB,
    rdur: f64,
) -> Result<PatternEmbedding> {
    check_geometry(patterns, db)?;
    let trie = build_trie(patterns);
    let rows: Vec<Vec<(u32, f64)>> = db
        .sequences
        .par_iter()
        .map(|(_, seq)| {
            let ctx = MatchCtx { trie: &trie, seq, rdur, patterns };
            let mut row = Vec::new();
            let mut pool = Vec::new();
            match_trie(&ctx, 0, &[], &mut row, &mut pool);
            row.sort_by_key(|&(c, _)| c);
            row
        })
        .collect();
    Ok(PatternEmbedding {
        source_series_id: db.source_series_id.clone(),
        pattern_ids: patterns.iter().map(|p| p.letters()).collect(),
        window_starts: db.window_starts(),
        rows,
    })
}

/// Reference double loop over (window, pattern); used by tests and benchmarks.
pub fn naive_embedding(
    patterns: &[SequentialPattern],
    db: &DiscreteSequenceDB,
    rdur: f64,
) -> Result<PatternEmbedding> {
    check_geometry(patterns, db)?;
    let rows = db
        .sequences
        .iter()
        .map(|(_, seq)| {
            let mut row = Vec::new();
            for (col, p) in patterns.iter().enumerate() {
                if let Some(span) = min_duration(&p.symbols, seq) {
                    if rdur_ok(span, p.symbols.len(), rdur) {
                        row.push((col as u32, p.rsupport));
                    }
                }
            }
            row
        })
        .collect();
    Ok(PatternEmbedding {
        source_series_id: db.source_series_id.clone(),
        pattern_ids: patterns.iter().map(|p| p.letters()).collect(),
        window_starts: db.window_starts(),
        rows,
    })
}

/// Column-wise concatenation of per-sensor embeddings sharing one window axis.
/// Pattern ids are namespaced by their source series.
pub fn concatenate_embeddings(per_sensor: &[PatternEmbedding]) -> Result<PatternEmbedding> {
    let Some(first) = per_sensor.first() else {
        return Err(Error::GeometryMismatch("no embeddings to concatenate".into()));
    };
    for e in per_sensor {
        if e.window_starts != first.window_starts {
            return Err(Error::GeometryMismatch(format!(
                "window axes differ between `{}` and `{}`",
                first.source_series_id, e.source_series_id
            )));
        }
    }
    let mut pattern_ids = Vec::new();
    let mut rows: Vec<Vec<(u32, f64)>> = vec![Vec::new(); first.window_starts.len()];
    let mut offset = 0u32;
    for e in per_sensor {
        for pid in &e.pattern_ids {
            pattern_ids.push(format!("{}:{}", e.source_series_id, pid));
        }
        for (r, row) in e.rows.iter().enumerate() {
            for &(c, v) in row {
                rows[r].push((offset + c, v));
            }
        }
        offset += e.pattern_ids.len() as u32;
    }
    Ok(PatternEmbedding {
        source_series_id: "concat".into(),
        pattern_ids,
        window_starts: first.window_starts.clone(),
        rows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sym(s: &str) -> Vec<Symbol> {
        s.bytes().map(|b| (b - b'a') as Symbol).collect()
    }

    fn db_from(seqs: &[&str], alphabet: usize) -> DiscreteSequenceDB {
        DiscreteSequenceDB {
            source_series_id: "s".into(),
            alphabet_size: alphabet,
            sequences: seqs.iter().enumerate().map(|(i, s)| (i, sym(s))).collect(),
        }
    }

    fn pat(s: &str, rsupport: f64) -> SequentialPattern {
        SequentialPattern {
            symbols: sym(s),
            support: 0,
            support_rdur: 0,
            rsupport,
            bits_saved: 1.0,
        }
    }

    #[test]
    fn present_and_absent_cells() {
        let db = db_from(&["abcx", "xxab", "bbbb"], 5);
        let patterns = vec![pat("abc", 0.4), pat("ab", 0.7)];
        let e = create_embedding(&patterns, &db, 1.2).unwrap();
        assert_eq!(e.dense_row(0), vec![0.4, 0.7]);
        assert_eq!(e.dense_row(1), vec![0.0, 0.7]);
        assert_eq!(e.dense_row(2), vec![0.0, 0.0]);
    }

    #[test]
    fn fast_matches_naive_on_random_instances() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        for _ in 0..100 {
            let alphabet = rng.gen_range(2..=5usize);
            let n_seq = rng.gen_range(1..=30);
            let len = rng.gen_range(3..=10);
            let db = DiscreteSequenceDB {
                source_series_id: "r".into(),
                alphabet_size: alphabet,
                sequences: (0..n_seq)
                    .map(|i| {
                        (
                            i,
                            (0..len)
                                .map(|_| rng.gen_range(0..alphabet) as Symbol)
                                .collect(),
                        )
                    })
                    .collect(),
            };
            let n_pat = rng.gen_range(1..=12);
            let patterns: Vec<SequentialPattern> = (0..n_pat)
                .map(|_| {
                    let plen = rng.gen_range(1..=4.min(len));
                    SequentialPattern {
                        symbols: (0..plen)
                            .map(|_| rng.gen_range(0..alphabet) as Symbol)
                            .collect(),
                        support: 0,
                        support_rdur: 0,
                        rsupport: rng.gen_range(0.01..1.0),
                        bits_saved: 1.0,
                    }
                })
                .collect();
            let rdur = [1.0, 1.2, 2.0][rng.gen_range(0..3)];
            let fast = create_embedding(&patterns, &db, rdur).unwrap();
            let naive = naive_embedding(&patterns, &db, rdur).unwrap();
            assert_eq!(fast.rows, naive.rows);
        }
    }

    #[test]
    fn empty_pattern_set_gives_empty_rows() {
        let db = db_from(&["abc"], 3);
        let e = create_embedding(&[], &db, 1.2).unwrap();
        assert_eq!(e.column_count(), 0);
        assert!(e.rows.iter().all(Vec::is_empty));
    }

    #[test]
    fn single_cell_embedding() {
        let db = db_from(&["ab"], 2);
        let e = create_embedding(&[pat("ab", 0.5)], &db, 1.0).unwrap();
        assert_eq!(e.rows, vec![vec![(0, 0.5)]]);
    }

    #[test]
    fn geometry_mismatch_errors() {
        let db = db_from(&["ab"], 2);
        assert!(create_embedding(&[pat("abc", 0.5)], &db, 1.0).is_err());
        assert!(create_embedding(&[pat("ad", 0.5)], &db, 1.0).is_err());
    }

    #[test]
    fn concatenation_column_counts() {
        let db = db_from(&["abce", "eeab"], 5);
        let mut e1 = create_embedding(&[pat("ab", 0.5), pat("abc", 0.2), pat("bc", 0.3)], &db, 1.2)
            .unwrap();
        e1.source_series_id = "s1".into();
        let mut e2 = create_embedding(
            &[pat("a", 0.9), pat("b", 0.9), pat("c", 0.4), pat("e", 0.6)],
            &db,
            1.2,
        )
        .unwrap();
        e2.source_series_id = "s2".into();
        let cat = concatenate_embeddings(&[e1.clone(), e2]).unwrap();
        assert_eq!(cat.column_count(), 7);
        assert!(cat.pattern_ids[0].starts_with("s1:"));
        assert!(cat.pattern_ids[3].starts_with("s2:"));

        let single = concatenate_embeddings(&[e1.clone()]).unwrap();
        assert_eq!(single.rows, e1.rows);
    }

    #[test]
    fn concatenation_rejects_misaligned_windows() {
        let db1 = db_from(&["abcx", "xxab"], 5);
        let db2 = db_from(&["abcx"], 5);
        let e1 = create_embedding(&[pat("ab", 0.5)], &db1, 1.2).unwrap();
        let e2 = create_embedding(&[pat("ab", 0.5)], &db2, 1.2).unwrap();
        assert!(concatenate_embeddings(&[e1, e2]).is_err());
    }
}
