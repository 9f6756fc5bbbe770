//! Recovering inter-device edges from feature-based time-series similarity.
//!
//! Each series is summarized by a density fingerprint (time x value grid of
//! log-scaled counts) and a value histogram. Pairs below both distance
//! thresholds enter a sparse similarity matrix; frequent relation types are
//! then mined greedily (separate-and-conquer) and gate the final edge set.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::series::{Dataset, Edge, Entity, NetworkGraph, TimeSeries};

/// Time x value grid of `log(count + 1)` cells.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Fingerprint {
    /// `columns x bins` cells, row-major by column.
    pub cells: Vec<f64>,
    pub columns: usize,
    pub bins: usize,
}

/// Normalized value histogram; fractions sum to 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistogramSummary {
    pub fractions: Vec<f64>,
}

/// Sparse symmetric pair map with both distances, plus the metadata needed
/// for relation mining.
#[derive(Debug, Clone, Default)]
pub struct SimilarityMatrix {
    /// Keyed by (series_a, series_b) with series_a < series_b.
    pub entries: BTreeMap<(String, String), (f64, f64)>,
}

/// An unordered sensor-type pair with its device-pair support.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RelationType {
    pub type_a: String,
    pub type_b: String,
    pub support: usize,
}

impl RelationType {
    pub fn key(type_a: &str, type_b: &str) -> (String, String) {
        if type_a <= type_b {
            (type_a.to_string(), type_b.to_string())
        } else {
            (type_b.to_string(), type_a.to_string())
        }
    }
}

/// Count samples per (interval column, value bin) cell and log-scale.
/// Columns cover `ceil(duration / interval)`; the final column may be short.
/// Value bins are equal-width over `[0, 1]` (the series is normalized).
pub fn create_fingerprint(series: &TimeSeries, interval: i64, bins: usize) -> Result<Fingerprint> {
    if interval < series.sample_interval {
        return Err(Error::IntervalTooFine {
            interval,
            sample: series.sample_interval,
        });
    }
    let samples_per_column = (interval / series.sample_interval) as usize;
    let columns = series.len().div_ceil(samples_per_column);
    let mut counts = vec![0u32; columns * bins];
    for (i, &v) in series.values.iter().enumerate() {
        let col = i / samples_per_column;
        let bin = ((v * bins as f64) as usize).min(bins - 1);
        counts[col * bins + bin] += 1;
    }
    Ok(Fingerprint {
        cells: counts.iter().map(|&c| (c as f64 + 1.0).ln()).collect(),
        columns,
        bins,
    })
}

/// Sum of absolute cell differences between two log-scaled grids.
pub fn dist_fp(a: &Fingerprint, b: &Fingerprint) -> Result<f64> {
    if a.columns != b.columns || a.bins != b.bins {
        return Err(Error::ShapeMismatch);
    }
    Ok(a.cells
        .iter()
        .zip(&b.cells)
        .map(|(x, y)| (x - y).abs())
        .sum())
}

/// Equal-width histogram over `[0, 1]` with counts normalized by series length.
pub fn create_histogram(series: &TimeSeries, bins: usize) -> HistogramSummary {
    let mut counts = vec![0u32; bins];
    for &v in &series.values {
        let bin = ((v * bins as f64) as usize).min(bins - 1);
        counts[bin] += 1;
    }
    let n = series.len() as f64;
    HistogramSummary {
        fractions: counts.iter().map(|&c| c as f64 / n).collect(),
    }
}

/// L1 distance between normalized histograms; in `[0, 2]`.
pub fn dist_hist(a: &HistogramSummary, b: &HistogramSummary) -> Result<f64> {
    if a.fractions.len() != b.fractions.len() {
        return Err(Error::ShapeMismatch);
    }
    Ok(a.fractions
        .iter()
        .zip(&b.fractions)
        .map(|(x, y)| (x - y).abs())
        .sum())
}

/// Distance thresholds, absolute or as a "most similar" quantile level (e.g.
/// 0.99 keeps pairs below the 1% smallest distances).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Threshold {
    Absolute(f64),
    /// Level q in (0, 1): the cut is the (1 - q) nearest-rank quantile of
    /// the pairwise distance distribution.
    Quantile(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimilarityParams {
    pub interval: i64,
    pub bins_f: usize,
    pub bins_h: usize,
    pub t_f: Threshold,
    pub t_h: Threshold,
}

impl Default for SimilarityParams {
    fn default() -> Self {
        Self {
            interval: 24 * 3600,
            bins_f: 5,
            bins_h: 100,
            t_f: Threshold::Quantile(0.99),
            t_h: Threshold::Quantile(0.95),
        }
    }
}

/// Number of sampled pairwise distances used for quantile threshold
/// estimation when the full pair set is large.
const QUANTILE_SAMPLE: usize = 100_000;

fn resolve_threshold(t: Threshold, sorted_sample: &[f64], level_to_cut: impl Fn(f64) -> f64) -> f64 {
    match t {
        Threshold::Absolute(v) => v,
        Threshold::Quantile(q) => {
            let frac = level_to_cut(q);
            let rank = (frac * sorted_sample.len() as f64).ceil() as usize;
            sorted_sample[rank.clamp(1, sorted_sample.len()) - 1]
        }
    }
}

/// Similarity-matrix entry: ordered series-id pair with both distances.
type PairEntry = ((String, String), (f64, f64));

/// Precomputed summaries for one series.
#[derive(Debug, Clone)]
pub struct SeriesSummary {
    pub series_id: String,
    pub entity_id: String,
    pub sensor_type: String,
    pub fingerprint: Fingerprint,
    pub histogram: HistogramSummary,
}

pub fn summarize(series: &[&TimeSeries], params: &SimilarityParams) -> Result<Vec<SeriesSummary>> {
    series
        .iter()
        .map(|s| {
            Ok(SeriesSummary {
                series_id: s.id.clone(),
                entity_id: s.entity_id.clone(),
                sensor_type: s.sensor_type.clone(),
                fingerprint: create_fingerprint(s, params.interval, params.bins_f)?,
                histogram: create_histogram(s, params.bins_h),
            })
        })
        .collect()
}

/// All-pairs distance scan with thresholding. Quantile thresholds are
/// estimated from up to 10^5 uniformly sampled pairs (exact when fewer).
pub fn build_similarity_matrix(
    summaries: &[SeriesSummary],
    params: &SimilarityParams,
    seed: u64,
) -> Result<SimilarityMatrix> {
    let n = summaries.len();
    if n < 2 {
        return Ok(SimilarityMatrix::default());
    }
    let total_pairs = n * (n - 1) / 2;

    let needs_quantile = matches!(params.t_f, Threshold::Quantile(_))
        || matches!(params.t_h, Threshold::Quantile(_));
    let (t_f, t_h) = if needs_quantile {
        let mut pairs: Vec<(usize, usize)> = Vec::new();
        if total_pairs <= QUANTILE_SAMPLE {
            for i in 0..n {
                for j in i + 1..n {
                    pairs.push((i, j));
                }
            }
        } else {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut all: Vec<(usize, usize)> = Vec::with_capacity(total_pairs);
            for i in 0..n {
                for j in i + 1..n {
                    all.push((i, j));
                }
            }
            pairs = all
                .choose_multiple(&mut rng, QUANTILE_SAMPLE)
                .copied()
                .collect();
        }
        let dists: Vec<(f64, f64)> = pairs
            .par_iter()
            .map(|&(i, j)| {
                (
                    dist_fp(&summaries[i].fingerprint, &summaries[j].fingerprint).unwrap_or(f64::INFINITY),
                    dist_hist(&summaries[i].histogram, &summaries[j].histogram).unwrap_or(f64::INFINITY),
                )
            })
            .collect();
        let mut fp_sample: Vec<f64> = dists.iter().map(|d| d.0).collect();
        let mut hist_sample: Vec<f64> = dists.iter().map(|d| d.1).collect();
        fp_sample.sort_by(|a, b| a.partial_cmp(b).unwrap());
        hist_sample.sort_by(|a, b| a.partial_cmp(b).unwrap());
        (
            resolve_threshold(params.t_f, &fp_sample, |q| 1.0 - q),
            resolve_threshold(params.t_h, &hist_sample, |q| 1.0 - q),
        )
    } else {
        (
            resolve_threshold(params.t_f, &[], |q| q),
            resolve_threshold(params.t_h, &[], |q| q),
        )
    };

    let per_row: Vec<Vec<PairEntry>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut out = Vec::new();
            for j in i + 1..n {
                let d_f = match dist_fp(&summaries[i].fingerprint, &summaries[j].fingerprint) {
                    Ok(d) => d,
                    Err(_) => continue,
                };
                if d_f >= t_f {
                    continue;
                }
                let d_h = match dist_hist(&summaries[i].histogram, &summaries[j].histogram) {
                    Ok(d) => d,
                    Err(_) => continue,
                };
                if d_h >= t_h {
                    continue;
                }
                let key = if summaries[i].series_id <= summaries[j].series_id {
                    (summaries[i].series_id.clone(), summaries[j].series_id.clone())
                } else {
                    (summaries[j].series_id.clone(), summaries[i].series_id.clone())
                };
                out.push((key, (d_f, d_h)));
            }
            out
        })
        .collect();

    let mut entries = BTreeMap::new();
    for row in per_row {
        entries.extend(row);
    }
    Ok(SimilarityMatrix { entries })
}

#[derive(Debug, Clone)]
struct RelationRow {
    device_a: String,
    device_b: String,
    type_key: (String, String),
}

fn relation_rows(matrix: &SimilarityMatrix, meta: &HashMap<String, (String, String)>) -> Vec<RelationRow> {
    let mut rows = Vec::new();
    for (sid_a, sid_b) in matrix.entries.keys() {
        let Some((dev_a, ty_a)) = meta.get(sid_a) else { continue };
        let Some((dev_b, ty_b)) = meta.get(sid_b) else { continue };
        if dev_a == dev_b {
            continue; // intra-device pairs carry no relation information
        }
        let (device_a, device_b) = if dev_a <= dev_b {
            (dev_a.clone(), dev_b.clone())
        } else {
            (dev_b.clone(), dev_a.clone())
        };
        rows.push(RelationRow {
            device_a,
            device_b,
            type_key: RelationType::key(ty_a, ty_b),
        });
    }
    rows
}

/// Greedy separate-and-conquer mining of frequent relation types.
///
/// Repeatedly picks the type pair connecting the most distinct device pairs,
/// removes every row of those device pairs, and stops once at least
/// `coverage` of the initial rows are covered. Supports are non-redundant:
/// each is counted after earlier types removed their device pairs.
pub fn find_frequent_relation_types(
    matrix: &SimilarityMatrix,
    dataset: &Dataset,
    coverage: f64,
) -> Vec<RelationType> {
    let meta: HashMap<String, (String, String)> = dataset
        .series
        .values()
        .map(|s| (s.id.clone(), (s.entity_id.clone(), s.sensor_type.clone())))
        .collect();
    let mut rows = relation_rows(matrix, &meta);
    let min_cover = (rows.len() as f64 * (1.0 - coverage)).floor();
    let mut result = Vec::new();
    while rows.len() as f64 > min_cover && !rows.is_empty() {
        // support per type = distinct device pairs connected through it
        let mut supports: BTreeMap<(String, String), BTreeSet<(String, String)>> = BTreeMap::new();
        for r in &rows {
            supports
                .entry(r.type_key.clone())
                .or_default()
                .insert((r.device_a.clone(), r.device_b.clone()));
        }
        // max support; ties resolved by lexicographic type pair
        let (best_type, device_pairs) = supports
            .into_iter()
            .max_by(|(ka, a), (kb, b)| a.len().cmp(&b.len()).then(kb.cmp(ka)))
            .unwrap();
        result.push(RelationType {
            type_a: best_type.0.clone(),
            type_b: best_type.1.clone(),
            support: device_pairs.len(),
        });
        rows.retain(|r| !device_pairs.contains(&(r.device_a.clone(), r.device_b.clone())));
    }
    result
}

/// Entity-level network: an edge per similar sensor pair whose type pair is a
/// frequent relation. Intra-device pairs never create edges.
pub fn build_network(
    matrix: &SimilarityMatrix,
    dataset: &Dataset,
    relations: &[RelationType],
) -> NetworkGraph {
    let frequent: BTreeSet<(String, String)> = relations
        .iter()
        .map(|r| RelationType::key(&r.type_a, &r.type_b))
        .collect();
    let meta: HashMap<String, (String, String)> = dataset
        .series
        .values()
        .map(|s| (s.id.clone(), (s.entity_id.clone(), s.sensor_type.clone())))
        .collect();
    let mut edges = Vec::new();
    for ((sid_a, sid_b), (d_f, d_h)) in &matrix.entries {
        let Some((dev_a, ty_a)) = meta.get(sid_a) else { continue };
        let Some((dev_b, ty_b)) = meta.get(sid_b) else { continue };
        if dev_a == dev_b {
            continue;
        }
        if !frequent.contains(&RelationType::key(ty_a, ty_b)) {
            continue;
        }
        let (entity_a, entity_b, series_a, series_b) = if dev_a <= dev_b {
            (dev_a.clone(), dev_b.clone(), sid_a.clone(), sid_b.clone())
        } else {
            (dev_b.clone(), dev_a.clone(), sid_b.clone(), sid_a.clone())
        };
        edges.push(Edge {
            entity_a,
            entity_b,
            series_a,
            series_b,
            dist_fp: *d_f,
            dist_hist: *d_h,
        });
    }
    NetworkGraph { edges }
}

/// Extend an entity with the similar series of its connected devices.
pub fn extend_entity(entity: &Entity, graph: &NetworkGraph) -> Entity {
    let mut sensors = entity.sensors.clone();
    let own: BTreeSet<&String> = entity.sensors.iter().collect();
    let mut added = BTreeSet::new();
    for edge in graph.neighbors(&entity.id) {
        let (own_series, other_series) = if edge.entity_a == entity.id {
            (&edge.series_a, &edge.series_b)
        } else {
            (&edge.series_b, &edge.series_a)
        };
        if own.contains(own_series) && !own.contains(other_series) {
            added.insert(other_series.clone());
        }
    }
    sensors.extend(added);
    Entity {
        id: entity.id.clone(),
        entity_type: entity.entity_type.clone(),
        sensors,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeMap as Map;

    fn ts(id: &str, entity: &str, ty: &str, values: Vec<f64>) -> TimeSeries {
        TimeSeries {
            id: id.into(),
            entity_id: entity.into(),
            sensor_type: ty.into(),
            start_time: 0,
            sample_interval: 300,
            values,
        }
    }

    #[test]
    fn fingerprint_grid_shape() {
        // 98 days of 5-minute samples at a 24 h interval: ceil(28224/288) = 98 columns
        let s = ts("a", "d1", "t", vec![0.5; 28224]);
        let fp = create_fingerprint(&s, 24 * 3600, 4).unwrap();
        assert_eq!(fp.columns, 98);
        assert_eq!(fp.bins, 4);
        // constant series: one nonzero bin per column
        for col in 0..fp.columns {
            let nonzero = (0..4)
                .filter(|&b| fp.cells[col * 4 + b] > 0.0)
                .count();
            assert_eq!(nonzero, 1);
        }
    }

    #[test]
    fn fingerprint_interval_too_fine() {
        let s = ts("a", "d1", "t", vec![0.5; 10]);
        assert!(create_fingerprint(&s, 100, 4).is_err());
    }

    #[test]
    fn dist_fp_basics() {
        let s1 = ts("a", "d1", "t", vec![0.1, 0.9, 0.4, 0.6]);
        let s2 = ts("b", "d2", "t", vec![0.9, 0.1, 0.6, 0.4]);
        let f1 = create_fingerprint(&s1, 600, 4).unwrap();
        let f2 = create_fingerprint(&s2, 600, 4).unwrap();
        assert_eq!(dist_fp(&f1, &f1).unwrap(), 0.0);
        assert_eq!(dist_fp(&f1, &f2).unwrap(), dist_fp(&f2, &f1).unwrap());
    }

    #[test]
    fn dist_fp_log_scaling_single_cell() {
        // counts 0 vs e-1 -> |ln(1) - ln(e)| = 1
        let a = Fingerprint {
            cells: vec![(0f64 + 1.0).ln()],
            columns: 1,
            bins: 1,
        };
        let b = Fingerprint {
            cells: vec![(std::f64::consts::E - 1.0 + 1.0).ln()],
            columns: 1,
            bins: 1,
        };
        assert!((dist_fp(&a, &b).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn histogram_phase_invariance_and_bounds() {
        let values: Vec<f64> = (0..100).map(|i| (i % 10) as f64 / 9.0).collect();
        let mut shifted = values.clone();
        shifted.rotate_right(37);
        let h1 = create_histogram(&ts("a", "d1", "t", values), 10);
        let h2 = create_histogram(&ts("b", "d2", "t", shifted), 10);
        assert_eq!(dist_hist(&h1, &h2).unwrap(), 0.0);

        // disjoint supports -> total variation bound 2
        let lo = create_histogram(&ts("a", "d1", "t", vec![0.1; 50]), 10);
        let hi = create_histogram(&ts("b", "d2", "t", vec![0.9; 50]), 10);
        assert!((dist_hist(&lo, &hi).unwrap() - 2.0).abs() < 1e-12);
    }

    #[test]
    fn histogram_uniform_vs_point_mass() {
        let h_uniform = HistogramSummary {
            fractions: vec![0.25; 4],
        };
        let h_point = HistogramSummary {
            fractions: vec![1.0, 0.0, 0.0, 0.0],
        };
        assert!((dist_hist(&h_uniform, &h_point).unwrap() - 1.5).abs() < 1e-12);
    }

    fn toy_dataset() -> (Dataset, Vec<TimeSeries>) {
        let mk = |i: usize, seed: u64| -> Vec<f64> {
            (0..240)
                .map(|j| {
                    
                    ((j as u64 * 2654435761 + seed * 97 + i as u64) % 1000) as f64 / 1000.0
                })
                .collect()
        };
        let shared: Vec<f64> = (0..240)
            .map(|j| 0.5 + 0.5 * (2.0 * std::f64::consts::PI * j as f64 / 24.0).sin())
            .collect();
        let all = vec![
            ts("d1.load", "d1", "load", shared.clone()),
            ts("d2.load", "d2", "load", shared.clone()),
            ts("d1.noise", "d1", "aux", mk(1, 5)),
            ts("d2.noise", "d2", "aux", mk(2, 9)),
            ts("d3.noise", "d3", "aux", mk(3, 13)),
        ];
        let mut series = Map::new();
        for s in &all {
            series.insert(s.id.clone(), s.clone());
        }
        let entities = vec![
            Entity { id: "d1".into(), entity_type: "A".into(), sensors: vec!["d1.load".into(), "d1.noise".into()] },
            Entity { id: "d2".into(), entity_type: "A".into(), sensors: vec!["d2.load".into(), "d2.noise".into()] },
            Entity { id: "d3".into(), entity_type: "B".into(), sensors: vec!["d3.noise".into()] },
        ];
        (Dataset { entities, series }, all)
    }

    #[test]
    fn copied_sensor_pair_detected() {
        let (dataset, all) = toy_dataset();
        let params = SimilarityParams {
            interval: 3600,
            bins_f: 4,
            bins_h: 20,
            t_f: Threshold::Absolute(0.5),
            t_h: Threshold::Absolute(0.1),
        };
        let refs: Vec<&TimeSeries> = all.iter().collect();
        let summaries = summarize(&refs, &params).unwrap();
        let matrix = build_similarity_matrix(&summaries, &params, 0).unwrap();
        assert!(matrix
            .entries
            .contains_key(&("d1.load".to_string(), "d2.load".to_string())));

        let relations = find_frequent_relation_types(&matrix, &dataset, 0.95);
        assert_eq!(relations.len(), 1);
        assert_eq!(relations[0].type_a, "load");
        assert_eq!(relations[0].support, 1);

        let graph = build_network(&matrix, &dataset, &relations);
        assert_eq!(graph.edges.len(), 1);

        let ext = extend_entity(dataset.entity("d1").unwrap(), &graph);
        assert!(ext.sensors.contains(&"d2.load".to_string()));
        assert_eq!(ext.sensors.len(), 3);

        // isolated device unchanged
        let iso = extend_entity(dataset.entity("d3").unwrap(), &graph);
        assert_eq!(iso.sensors, vec!["d3.noise".to_string()]);
    }

    #[test]
    fn zero_thresholds_empty_matrix() {
        let (_, all) = toy_dataset();
        let params = SimilarityParams {
            interval: 3600,
            bins_f: 4,
            bins_h: 20,
            t_f: Threshold::Absolute(0.0),
            t_h: Threshold::Absolute(0.0),
        };
        let refs: Vec<&TimeSeries> = all.iter().collect();
        let summaries = summarize(&refs, &params).unwrap();
        let matrix = build_similarity_matrix(&summaries, &params, 0).unwrap();
        assert!(matrix.entries.is_empty());
    }

    #[test]
    fn no_frequent_relations_no_edges() {
        let (dataset, all) = toy_dataset();
        let params = SimilarityParams {
            interval: 3600,
            bins_f: 4,
            bins_h: 20,
            t_f: Threshold::Absolute(0.5),
            t_h: Threshold::Absolute(0.1),
        };
        let refs: Vec<&TimeSeries> = all.iter().collect();
        let summaries = summarize(&refs, &params).unwrap();
        let matrix = build_similarity_matrix(&summaries, &params, 0).unwrap();
        let graph = build_network(&matrix, &dataset, &[]);
        assert!(graph.edges.is_empty());
    }

    #[test]
    fn separate_and_conquer_two_types() {
        // planted: type-P edges on 10 device pairs, type-Q on 3
        let mut entries = BTreeMap::new();
        let mut series = Map::new();
        let add =
            |entries: &mut BTreeMap<(String, String), (f64, f64)>, series: &mut Map<String, TimeSeries>, i: usize, ty: &str| {
                let a = format!("{ty}{i}a.s");
                let b = format!("{ty}{i}b.s");
                series.insert(a.clone(), ts(&a, &format!("{ty}{i}a"), ty, vec![0.0; 4]));
                series.insert(b.clone(), ts(&b, &format!("{ty}{i}b"), ty, vec![0.0; 4]));
                entries.insert((a, b), (0.0, 0.0));
            };
        for i in 0..10 {
            add(&mut entries, &mut series, i, "P");
        }
        for i in 0..3 {
            add(&mut entries, &mut series, i, "Q");
        }
        let dataset = Dataset {
            entities: Vec::new(),
            series,
        };
        let matrix = SimilarityMatrix { entries };
        let relations = find_frequent_relation_types(&matrix, &dataset, 0.95);
        assert_eq!(relations.len(), 2);
        assert_eq!((relations[0].type_a.as_str(), relations[0].support), ("P", 10));
        assert_eq!((relations[1].type_a.as_str(), relations[1].support), ("Q", 3));
        // supports are nonincreasing
        assert!(relations[0].support >= relations[1].support);
    }
}
