//! Window anomaly scores from pattern embeddings: FPOF and isolation forest.

use serde::{Deserialize, Serialize};

use crate::embedding::PatternEmbedding;
use crate::error::{Error, Result};

pub mod iforest;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScoreSource {
    Fpof,
    Iforest,
}

/// Per-window anomaly scores; higher means more anomalous.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnomalyScoreSeries {
    pub window_starts: Vec<usize>,
    pub scores: Vec<f64>,
    pub source: ScoreSource,
    pub sensor_id: Option<String>,
}

/// Frequent pattern outlier factor: `fpof(w)` is the mean relative support of
/// the patterns occurring in the window; the anomaly score is `1 - fpof(w)`.
///
/// The embedding must store rsupport values (the default), so a row sum over
/// the sparse entries is exactly the fpof numerator.
pub fn fpof_scores(embedding: &PatternEmbedding) -> Result<AnomalyScoreSeries> {
    let p = embedding.column_count();
    if p == 0 {
        return Err(Error::EmptyPatternSet);
    }
    let scores = embedding
        .rows
        .iter()
        .map(|row| {
            let fpof = row.iter().map(|&(_, v)| v).sum::<f64>() / p as f64;
            1.0 - fpof
        })
        .collect();
    Ok(AnomalyScoreSeries {
        window_starts: embedding.window_starts.clone(),
        scores,
        source: ScoreSource::Fpof,
        sensor_id: Some(embedding.source_series_id.clone()),
    })
}

/// Per-sensor score matrix for localisation: one independent FPOF row per
/// sensor. Sensors without any mined pattern yield `None` (unscored) and are
/// excluded from aggregates.
pub fn per_sensor_scores(
    embeddings: &[PatternEmbedding],
) -> Result<Vec<Option<AnomalyScoreSeries>>> {
    embeddings
        .iter()
        .map(|e| {
            if e.column_count() == 0 {
                Ok(None)
            } else {
                fpof_scores(e).map(Some)
            }
        })
        .collect()
}

/// Entity-level score: max over the scored sensors per window.
pub fn aggregate_max(per_sensor: &[Option<AnomalyScoreSeries>]) -> Result<AnomalyScoreSeries> {
    let scored: Vec<&AnomalyScoreSeries> = per_sensor.iter().flatten().collect();
    let Some(first) = scored.first() else {
        return Err(Error::NoPatterns);
    };
    let mut scores = first.scores.clone();
    for s in &scored[1..] {
        if s.window_starts != first.window_starts {
            return Err(Error::GeometryMismatch(
                "per-sensor score series are misaligned".into(),
            ));
        }
        for (acc, v) in scores.iter_mut().zip(&s.scores) {
            if *v > *acc {
                *acc = *v;
            }
        }
    }
    Ok(AnomalyScoreSeries {
        window_starts: first.window_starts.clone(),
        scores,
        source: first.source,
        sensor_id: None,
    })
}
