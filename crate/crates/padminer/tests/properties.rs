//! Randomized invariants, complementing the oracle-equivalence tests in the
//! acceptance suite.

use proptest::prelude::*;

use padminer::discretize::{
    fit_bins, sax_window, Binning, DiscreteSequenceDB, SaxConfig, Symbol,
};
use padminer::embedding::{create_embedding, naive_embedding, PatternEmbedding};
use padminer::mining::{mine_interesting_patterns, occurs, MiningConfig, SequentialPattern};
use padminer::scoring::fpof_scores;
use padminer::series::{
    cap_quantile, min_max_normalize, nearest_rank_quantile, sliding_windows_len, TimeSeries,
    WindowSpec,
};

fn series(values: Vec<f64>) -> TimeSeries {
    TimeSeries {
        id: "p".into(),
        entity_id: "e".into(),
        sensor_type: "s".into(),
        start_time: 0,
        sample_interval: 60,
        values,
    }
}

fn db_strategy() -> impl Strategy<Value = DiscreteSequenceDB> {
    (2usize..=5, 4usize..=10, 1usize..=20).prop_flat_map(|(alpha, len, n_seqs)| {
        proptest::collection::vec(
            proptest::collection::vec(0..alpha as Symbol, len),
            n_seqs,
        )
        .prop_map(move |seqs| DiscreteSequenceDB {
            source_series_id: "prop".into(),
            alphabet_size: alpha,
            sequences: seqs.into_iter().enumerate().collect(),
        })
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn mined_patterns_satisfy_contract(
        db in db_strategy(),
        min_len in 1usize..=4,
        rdur in prop_oneof![Just(1.0), Just(1.2), Just(2.0)],
        k in 1usize..=50,
    ) {
        let config = MiningConfig { k, min_len, rdur };
        let patterns = mine_interesting_patterns(&db, &config).unwrap();
        prop_assert!(patterns.len() <= k);
        for p in &patterns {
            prop_assert!(p.symbols.len() >= min_len);
            prop_assert!(p.bits_saved > 0.0);
            prop_assert!(p.support_rdur <= p.support);
            prop_assert!(p.support <= db.len());
            prop_assert!((p.rsupport - p.support_rdur as f64 / db.len() as f64).abs() < 1e-12);
            // plain support is exactly the number of covering sequences
            let cover = db.sequences.iter().filter(|(_, s)| occurs(&p.symbols, s)).count();
            prop_assert_eq!(p.support, cover);
        }
        // ranking: support_rdur desc, then length asc, then lexicographic
        for w in patterns.windows(2) {
            let a = (std::cmp::Reverse(w[0].support_rdur), w[0].symbols.len(), &w[0].symbols);
            let b = (std::cmp::Reverse(w[1].support_rdur), w[1].symbols.len(), &w[1].symbols);
            prop_assert!(a <= b);
        }
    }

    #[test]
    fn fast_embedding_matches_naive(
        db in db_strategy(),
        pattern_syms in proptest::collection::vec(
            proptest::collection::vec(0..5 as Symbol, 1..=5), 1..=10),
        rdur in prop_oneof![Just(1.0), Just(1.2), Just(2.0)],
    ) {
        let patterns: Vec<SequentialPattern> = pattern_syms
            .into_iter()
            .filter(|s| s.iter().all(|&x| (x as usize) < db.alphabet_size))
            .filter(|s| s.len() <= db.sequence_length())
            .map(|symbols| SequentialPattern {
                symbols,
                support: 0,
                support_rdur: 0,
                rsupport: 0.5,
                bits_saved: 1.0,
            })
            .collect();
        let fast = create_embedding(&patterns, &db, rdur).unwrap();
        let naive = naive_embedding(&patterns, &db, rdur).unwrap();
        prop_assert_eq!(fast.rows, naive.rows);
    }

    #[test]
    fn sax_window_shape_and_alphabet(
        values in proptest::collection::vec(0.0f64..1.0, 64),
        paa_win in prop_oneof![Just(1usize), Just(2), Just(4), Just(8)],
        no_bins in 2usize..=8,
    ) {
        let config = SaxConfig { paa_win, no_bins, binning: Binning::Global };
        let s = series(values.clone());
        prop_assume!(values.iter().any(|&v| (v - values[0]).abs() > 1e-12));
        let bins = fit_bins(&s, &config, 0).unwrap();
        let word = sax_window(&values[..16], &config, &bins);
        prop_assert_eq!(word.len(), 16 / paa_win);
        prop_assert!(word.iter().all(|&sym| (sym as usize) < no_bins));
    }

    #[test]
    fn quantile_and_normalization_invariants(
        values in proptest::collection::vec(-100.0f64..100.0, 2..60),
        q in 0.01f64..=1.0,
    ) {
        let cap = nearest_rank_quantile(&values, q);
        prop_assert!(values.contains(&cap));
        prop_assert!(cap <= nearest_rank_quantile(&values, 1.0));
        let capped = cap_quantile(&series(values.clone()), q).unwrap();
        prop_assert!(capped.values.iter().all(|&v| v <= cap));
        if let Ok(norm) = min_max_normalize(&capped) {
            let min = norm.values.iter().cloned().fold(f64::INFINITY, f64::min);
            let max = norm.values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            prop_assert!(min.abs() < 1e-12 && (max - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn sliding_window_count(
        n in 1usize..200,
        length in 1usize..50,
        increment in 1usize..10,
    ) {
        prop_assume!(increment <= length && length <= n);
        let spec = WindowSpec::new(length, increment).unwrap();
        let windows = sliding_windows_len(n, &spec).unwrap();
        let expected = (n - length) / increment + 1;
        prop_assert_eq!(windows.len(), expected);
        for (s, e) in windows {
            prop_assert_eq!(e - s, length);
            prop_assert!(e <= n);
        }
    }

    #[test]
    fn fpof_scores_bounded(
        rows in proptest::collection::vec(
            proptest::collection::vec((0u32..6, 0.01f64..=1.0), 0..6), 1..20),
    ) {
        let mut rows = rows;
        for r in &mut rows {
            r.sort_by_key(|&(c, _)| c);
            r.dedup_by_key(|&mut (c, _)| c);
        }
        let embedding = PatternEmbedding {
            source_series_id: "prop".into(),
            pattern_ids: (0..6).map(|i| format!("p{i}")).collect(),
            window_starts: (0..rows.len()).collect(),
            rows,
        };
        let scores = fpof_scores(&embedding).unwrap();
        for (i, &sc) in scores.scores.iter().enumerate() {
            prop_assert!((0.0..=1.0).contains(&sc));
            if embedding.rows[i].is_empty() {
                prop_assert!((sc - 1.0).abs() < 1e-12);
            }
        }
    }
}
