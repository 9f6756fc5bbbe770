//! Core time-series data model, preprocessing and sliding windows.
//!
//! A [`TimeSeries`] is a regularly sampled sequence of sensor values. An
//! [`Entity`] (device) groups several series that start and stop at the same
//! time. Preprocessing follows the usual telemetry pipeline: quantile cap,
//! min-max normalization and a straight-line filter.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A single sensor: values sampled at a fixed interval starting at `start_time`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeSeries {
    pub id: String,
    pub entity_id: String,
    pub sensor_type: String,
    /// Epoch seconds of the first sample.
    pub start_time: i64,
    /// Seconds between consecutive samples; always > 0.
    pub sample_interval: i64,
    pub values: Vec<f64>,
}

impl TimeSeries {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Total covered duration in seconds.
    pub fn duration(&self) -> i64 {
        self.values.len() as i64 * self.sample_interval
    }

    pub fn timestamp_at(&self, index: usize) -> i64 {
        self.start_time + index as i64 * self.sample_interval
    }
}

/// A device: a named group of sensor series with aligned time axes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Entity {
    pub id: String,
    pub entity_type: String,
    /// Ids of member [`TimeSeries`].
    pub sensors: Vec<String>,
}

/// A collection of entities plus the backing series, keyed by series id.
#[derive(Debug, Clone, Default)]
pub struct Dataset {
    pub entities: Vec<Entity>,
    pub series: BTreeMap<String, TimeSeries>,
}

impl Dataset {
    pub fn entity(&self, id: &str) -> Option<&Entity> {
        self.entities.iter().find(|e| e.id == id)
    }

    pub fn series_of(&self, entity: &Entity) -> Vec<&TimeSeries> {
        entity
            .sensors
            .iter()
            .filter_map(|sid| self.series.get(sid))
            .collect()
    }
}

/// An edge between two entities, recovered from a similar sensor pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Edge {
    pub entity_a: String,
    pub entity_b: String,
    pub series_a: String,
    pub series_b: String,
    pub dist_fp: f64,
    pub dist_hist: f64,
}

/// Recovered device network: entities plus similarity edges.
///
/// Edges are stored once per unordered entity pair + series pair, with the
/// lexicographically smaller entity id first. Entity-level self loops are
/// never created.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct NetworkGraph {
    pub edges: Vec<Edge>,
}

impl NetworkGraph {
    pub fn neighbors(&self, entity_id: &str) -> Vec<&Edge> {
        self.edges
            .iter()
            .filter(|e| e.entity_a == entity_id || e.entity_b == entity_id)
            .collect()
    }
}

/// Sliding-window geometry: window length `length` and increment `increment`,
/// both in samples.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct WindowSpec {
    pub length: usize,
    pub increment: usize,
}

impl WindowSpec {
    pub fn new(length: usize, increment: usize) -> Result<Self> {
        if increment == 0 || increment > length {
            return Err(Error::InvalidWindowSpec(format!(
                "need 1 <= increment <= length, got increment={increment}, length={length}"
            )));
        }
        Ok(Self { length, increment })
    }

    /// Increment 1, the recommended default.
    pub fn with_length(length: usize) -> Result<Self> {
        Self::new(length, 1)
    }
}

/// Half-open index ranges `[start, start + l)` of all sliding windows.
///
/// Produces `ceil((n - l + 1) / t)` windows for a series of length `n`.
pub fn sliding_windows(series: &TimeSeries, spec: &WindowSpec) -> Result<Vec<(usize, usize)>> {
    sliding_windows_len(series.len(), spec).map_err(|_| Error::SeriesTooShort {
        id: series.id.clone(),
        len: series.len(),
        window: spec.length,
    })
}

/// Same as [`sliding_windows`] but on a bare length.
pub fn sliding_windows_len(n: usize, spec: &WindowSpec) -> Result<Vec<(usize, usize)>> {
    if n < spec.length {
        return Err(Error::SeriesTooShort {
            id: String::new(),
            len: n,
            window: spec.length,
        });
    }
    Ok((0..=n - spec.length)
        .step_by(spec.increment)
        .map(|s| (s, s + spec.length))
        .collect())
}

/// Nearest-rank quantile: the value at 1-based index `ceil(q * n)` of the
/// sorted data.
pub fn nearest_rank_quantile(values: &[f64], q: f64) -> f64 {
    debug_assert!(!values.is_empty());
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let rank = (q * sorted.len() as f64).ceil() as usize;
    sorted[rank.max(1) - 1]
}

/// Cap every value above the `q` nearest-rank quantile at that quantile.
pub fn cap_quantile(series: &TimeSeries, q: f64) -> Result<TimeSeries> {
    if series.values.is_empty() {
        return Err(Error::EmptySeries(series.id.clone()));
    }
    assert!(q > 0.0 && q <= 1.0, "quantile must be in (0, 1]");
    let cap = nearest_rank_quantile(&series.values, q);
    let mut out = series.clone();
    for v in &mut out.values {
        if *v > cap {
            *v = cap;
        }
    }
    Ok(out)
}

/// Min-max normalize to `[0, 1]`. Errors on constant series; those are
/// filtered out by the straight-line test downstream.
pub fn min_max_normalize(series: &TimeSeries) -> Result<TimeSeries> {
    if series.values.is_empty() {
        return Err(Error::EmptySeries(series.id.clone()));
    }
    let min = series.values.iter().cloned().fold(f64::INFINITY, f64::min);
    let max = series
        .values
        .iter()
        .cloned()
        .fold(f64::NEG_INFINITY, f64::max);
    if max <= min {
        return Err(Error::ConstantSeries {
            id: series.id.clone(),
        });
    }
    let range = max - min;
    let mut out = series.clone();
    for v in &mut out.values {
        *v = (*v - min) / range;
    }
    Ok(out)
}

/// Pearson correlation of the values against the sample index, which equals
/// the correlation with the best least-squares line.
pub fn index_correlation(values: &[f64]) -> Option<f64> {
    let n = values.len() as f64;
    if values.len() < 2 {
        return None;
    }
    let mean_y = values.iter().sum::<f64>() / n;
    let mean_x = (values.len() as f64 - 1.0) / 2.0;
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for (i, &y) in values.iter().enumerate() {
        let dx = i as f64 - mean_x;
        let dy = y - mean_y;
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if syy == 0.0 {
        return None; // constant
    }
    Some(sxy / (sxx * syy).sqrt())
}

/// True when the series is (close to) a straight line: |Pearson r| against the
/// index exceeds the threshold. Constant series count as straight lines.
pub fn is_straight_line(series: &TimeSeries, r_threshold: f64) -> bool {
    match index_correlation(&series.values) {
        Some(r) => r.abs() >= r_threshold,
        None => true,
    }
}

/// Fill gaps by forward-fill then back-fill. Rejects series with more than
/// 20% missing samples, or with no values at all.
pub fn fill_missing(id: &str, raw: &[Option<f64>]) -> Result<Vec<f64>> {
    let total = raw.len();
    let missing = raw.iter().filter(|v| v.is_none()).count();
    if total == 0 || missing == total {
        return Err(Error::EmptySeries(id.to_string()));
    }
    if missing as f64 > 0.2 * total as f64 {
        return Err(Error::TooManyMissing {
            id: id.to_string(),
            missing,
            total,
        });
    }
    let mut out = Vec::with_capacity(total);
    let mut last: Option<f64> = None;
    for v in raw {
        if let Some(x) = v {
            last = Some(*x);
        }
        out.push(last);
    }
    // back-fill the leading gap
    let first = out.iter().flatten().next().copied().unwrap();
    Ok(out.into_iter().map(|v| v.unwrap_or(first)).collect())
}

/// Standard preprocessing: cap at the 99% quantile, then min-max normalize.
///
/// Returns `None` for series rejected by the straight-line filter (threshold
/// 0.98) or with zero range.
pub fn preprocess(series: &TimeSeries) -> Result<Option<TimeSeries>> {
    let capped = cap_quantile(series, 0.99)?;
    let normalized = match min_max_normalize(&capped) {
        Ok(s) => s,
        Err(Error::ConstantSeries { .. }) => return Ok(None),
        Err(e) => return Err(e),
    };
    if is_straight_line(&normalized, 0.98) {
        return Ok(None);
    }
    Ok(Some(normalized))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ts(values: Vec<f64>) -> TimeSeries {
        TimeSeries {
            id: "s".into(),
            entity_id: "e".into(),
            sensor_type: "t".into(),
            start_time: 0,
            sample_interval: 300,
            values,
        }
    }

    #[test]
    fn window_counts_match_formula() {
        let spec = WindowSpec::new(5, 1).unwrap();
        let w = sliding_windows(&ts((0..10).map(|x| x as f64).collect()), &spec).unwrap();
        assert_eq!(w.len(), 6);
        assert_eq!(w[0], (0, 5));
        assert_eq!(w[5], (5, 10));

        let spec = WindowSpec::new(10, 1).unwrap();
        let w = sliding_windows(&ts((0..10).map(|x| x as f64).collect()), &spec).unwrap();
        assert_eq!(w.len(), 1);
    }

    #[test]
    fn window_count_98_day_series() {
        // 98 days of 5-minute samples
        let spec = WindowSpec::new(288, 1).unwrap();
        let w = sliding_windows_len(28224, &spec).unwrap();
        assert_eq!(w.len(), 27937);
    }

    #[test]
    fn too_short_series_errors() {
        let spec = WindowSpec::new(5, 1).unwrap();
        assert!(sliding_windows(&ts(vec![1.0, 2.0]), &spec).is_err());
    }

    #[test]
    fn invalid_spec_rejected() {
        assert!(WindowSpec::new(5, 0).is_err());
        assert!(WindowSpec::new(5, 6).is_err());
        assert!(WindowSpec::new(5, 5).is_ok());
    }

    #[test]
    fn cap_quantile_nearest_rank() {
        // q=0.75, n=4 -> rank ceil(3)=3 -> sorted[2]=3
        let capped = cap_quantile(&ts(vec![1.0, 2.0, 3.0, 100.0]), 0.75).unwrap();
        assert_eq!(capped.values, vec![1.0, 2.0, 3.0, 3.0]);
    }

    #[test]
    fn cap_quantile_constant_and_identity() {
        let c = cap_quantile(&ts(vec![4.0; 5]), 0.99).unwrap();
        assert_eq!(c.values, vec![4.0; 5]);
        let full = cap_quantile(&ts(vec![1.0, 5.0, 2.0]), 1.0).unwrap();
        assert_eq!(full.values, vec![1.0, 5.0, 2.0]);
    }

    #[test]
    fn cap_quantile_idempotent() {
        let s = ts(vec![3.0, 9.0, 1.0, 4.0, 1.0, 5.0, 9.0, 2.0, 6.0]);
        let once = cap_quantile(&s, 0.8).unwrap();
        let twice = cap_quantile(&once, 0.8).unwrap();
        assert_eq!(once.values, twice.values);
    }

    #[test]
    fn normalize_endpoints() {
        let n = min_max_normalize(&ts(vec![0.0, 5.0, 10.0])).unwrap();
        assert_eq!(n.values, vec![0.0, 0.5, 1.0]);
        let n = min_max_normalize(&ts(vec![-1.0, 0.0, 3.0])).unwrap();
        assert_eq!(n.values, vec![0.0, 0.25, 1.0]);
        assert!(min_max_normalize(&ts(vec![2.0, 2.0, 2.0])).is_err());
    }

    #[test]
    fn normalize_idempotent() {
        let s = ts(vec![3.0, 9.0, 1.0, 4.0]);
        let once = min_max_normalize(&s).unwrap();
        let twice = min_max_normalize(&once).unwrap();
        for (a, b) in once.values.iter().zip(&twice.values) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn straight_line_detection() {
        let line = ts((0..100).map(|i| 2.0 * i as f64 + 1.0).collect());
        assert!(is_straight_line(&line, 0.98));

        // pure sine over 16 periods: |r| well below 0.1
        let n = 400;
        let sine = ts((0..n)
            .map(|i| (2.0 * std::f64::consts::PI * 16.0 * i as f64 / n as f64).sin())
            .collect());
        let r = index_correlation(&sine.values).unwrap();
        assert!(r.abs() < 0.1, "sine r = {r}");
        assert!(!is_straight_line(&sine, 0.98));

        // line plus tiny noise stays a line
        let noisy = ts((0..100)
            .map(|i| i as f64 + 0.001 * 100.0 * ((i * 7919 % 97) as f64 / 97.0 - 0.5))
            .collect());
        let r = index_correlation(&noisy.values).unwrap();
        assert!(r > 0.99, "noisy line r = {r}");

        assert!(is_straight_line(&ts(vec![5.0; 10]), 0.98));
    }

    #[test]
    fn straight_line_invariant_under_normalization() {
        let s = ts(vec![3.0, 9.0, 1.0, 4.0, 1.0, 5.0, 9.0, 2.0, 6.0]);
        let n = min_max_normalize(&s).unwrap();
        let r1 = index_correlation(&s.values).unwrap();
        let r2 = index_correlation(&n.values).unwrap();
        assert!((r1 - r2).abs() < 1e-12);
    }

    #[test]
    fn fill_missing_rules() {
        let raw = [
            None,
            Some(2.0),
            Some(3.0),
            None,
            Some(5.0),
            Some(6.0),
            Some(7.0),
            Some(8.0),
            Some(9.0),
            Some(10.0),
        ];
        let filled = fill_missing("s", &raw).unwrap();
        assert_eq!(
            filled,
            vec![2.0, 2.0, 3.0, 3.0, 5.0, 6.0, 7.0, 8.0, 9.0, 10.0]
        );

        let raw: Vec<Option<f64>> = (0..10).map(|i| (i < 7).then_some(1.0)).collect();
        assert!(matches!(
            fill_missing("s", &raw),
            Err(Error::TooManyMissing { .. })
        ));
        assert!(fill_missing("s", &[None, None]).is_err());
    }
}
