//! Point-adjust evaluation of window scores against point labels.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scoring::AnomalyScoreSeries;
use crate::series::WindowSpec;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdPoint {
    pub threshold: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationResult {
    pub curve: Vec<ThresholdPoint>,
    pub best_f1: f64,
    pub best_threshold: f64,
    pub best_precision: f64,
    pub best_recall: f64,
    pub runtime_secs: f64,
}

/// Spread window scores onto the point axis: each point gets the max score of
/// the windows covering it.
pub fn window_scores_to_points(
    scores: &AnomalyScoreSeries,
    spec: &WindowSpec,
    n_points: usize,
) -> Vec<f64> {
    let mut out = vec![f64::NEG_INFINITY; n_points];
    for (&start, &score) in scores.window_starts.iter().zip(&scores.scores) {
        for p in out.iter_mut().skip(start).take(spec.length) {
            if score > *p {
                *p = score;
            }
        }
    }
    // points outside every window (possible with increment > 1) score lowest
    let min = out
        .iter()
        .copied()
        .filter(|v| v.is_finite())
        .fold(f64::INFINITY, f64::min);
    let fill = if min.is_finite() { min } else { 0.0 };
    for p in &mut out {
        if !p.is_finite() {
            *p = fill;
        }
    }
    out
}

/// Contiguous runs of `true` in the label vector, as half-open ranges.
fn label_segments(labels: &[bool]) -> Vec<(usize, usize)> {
    let mut segments = Vec::new();
    let mut start = None;
    for (i, &l) in labels.iter().enumerate() {
        match (l, start) {
            (true, None) => start = Some(i),
            (false, Some(s)) => {
                segments.push((s, i));
                start = None;
            }
            _ => {}
        }
    }
    if let Some(s) = start {
        segments.push((s, labels.len()));
    }
    segments
}

fn prf(tp: usize, fp: usize, fn_: usize) -> (f64, f64, f64) {
    let precision = if tp + fp == 0 {
        0.0
    } else {
        tp as f64 / (tp + fp) as f64
    };
    let recall = if tp + fn_ == 0 {
        0.0
    } else {
        tp as f64 / (tp + fn_) as f64
    };
    let f1 = if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    };
    (precision, recall, f1)
}

/// Point-level precision/recall/F1 at one threshold with segment adjustment:
/// a detection anywhere inside a labelled segment marks the whole segment.
pub fn point_adjust_f1_at(
    point_scores: &[f64],
    labels: &[bool],
    segments: &[(usize, usize)],
    threshold: f64,
) -> (f64, f64, f64) {
    let mut pred: Vec<bool> = point_scores.iter().map(|&s| s >= threshold).collect();
    for &(s, e) in segments {
        if pred[s..e].iter().any(|&p| p) {
            for p in &mut pred[s..e] {
                *p = true;
            }
        }
    }
    let mut tp = 0;
    let mut fp = 0;
    let mut fn_ = 0;
    for (&p, &l) in pred.iter().zip(labels) {
        match (p, l) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, true) => fn_ += 1,
            _ => {}
        }
    }
    prf(tp, fp, fn_)
}

/// Sweep every distinct score value as a threshold and report the best F1.
pub fn evaluate_point_adjust(
    scores: &AnomalyScoreSeries,
    labels: &[bool],
    spec: &WindowSpec,
) -> Result<EvaluationResult> {
    if labels.is_empty() || !labels.iter().any(|&l| l) {
        return Err(Error::NoLabels);
    }
    let started = std::time::Instant::now();
    let point_scores = window_scores_to_points(scores, spec, labels.len());
    let segments = label_segments(labels);

    let mut thresholds: Vec<f64> = point_scores.clone();
    thresholds.sort_by(|a, b| a.partial_cmp(b).unwrap());
    thresholds.dedup();

    let mut curve = Vec::with_capacity(thresholds.len());
    let mut best = ThresholdPoint {
        threshold: thresholds[0],
        precision: 0.0,
        recall: 0.0,
        f1: -1.0,
    };
    for &t in &thresholds {
        let (precision, recall, f1) = point_adjust_f1_at(&point_scores, labels, &segments, t);
        let point = ThresholdPoint {
            threshold: t,
            precision,
            recall,
            f1,
        };
        if f1 > best.f1 {
            best = point.clone();
        }
        curve.push(point);
    }
    Ok(EvaluationResult {
        curve,
        best_f1: best.f1,
        best_threshold: best.threshold,
        best_precision: best.precision,
        best_recall: best.recall,
        runtime_secs: started.elapsed().as_secs_f64(),
    })
}
