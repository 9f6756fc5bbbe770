//! In-repo isolation forest over dense embedding rows.
//!
//! Deterministic under a fixed seed: per-tree generators are derived from the
//! master seed, so the model is independent of scheduling.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scoring::{AnomalyScoreSeries, ScoreSource};

pub const DEFAULT_TREES: usize = 500;
pub const DEFAULT_SUBSAMPLE: usize = 256;

const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Node {
    Split {
        feature: usize,
        value: f64,
        left: usize,
        right: usize,
    },
    Leaf {
        size: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub nodes: Vec<Node>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IsolationForestModel {
    pub trees: Vec<Tree>,
    pub subsample: usize,
    pub features: usize,
    pub seed: u64,
}

/// Average unsuccessful-search path length in a BST of n nodes; the score
/// normalizer `c(n)`.
pub fn average_path_length(n: usize) -> f64 {
    match n {
        0 | 1 => 0.0,
        2 => 1.0,
        n => {
            let h = ((n - 1) as f64).ln() + EULER_GAMMA;
            2.0 * h - 2.0 * (n - 1) as f64 / n as f64
        }
    }
}

fn build_tree(
    rows: &[Vec<f64>],
    indices: &[usize],
    features: usize,
    max_depth: usize,
    rng: &mut ChaCha8Rng,
) -> Tree {
    let mut nodes = Vec::new();
    build_node(rows, indices, features, 0, max_depth, rng, &mut nodes);
    Tree { nodes }
}

fn build_node(
    rows: &[Vec<f64>],
    indices: &[usize],
    features: usize,
    depth: usize,
    max_depth: usize,
    rng: &mut ChaCha8Rng,
    nodes: &mut Vec<Node>,
) -> usize {
    if indices.len() <= 1 || depth >= max_depth {
        nodes.push(Node::Leaf {
            size: indices.len(),
        });
        return nodes.len() - 1;
    }
    // pick a feature with spread; give up after a bounded number of draws
    let mut split: Option<(usize, f64)> = None;
    for _ in 0..features.max(8) {
        let f = rng.gen_range(0..features);
        let mut min = f64::INFINITY;
        let mut max = f64::NEG_INFINITY;
        for &i in indices {
            let v = rows[i][f];
            min = min.min(v);
            max = max.max(v);
        }
        if max > min {
            split = Some((f, rng.gen_range(min..max)));
            break;
        }
    }
    let Some((feature, value)) = split else {
        // all candidate features constant on this subsample
        nodes.push(Node::Leaf {
            size: indices.len(),
        });
        return nodes.len() - 1;
    };
    let left_idx: Vec<usize> = indices.iter().copied().filter(|&i| rows[i][feature] < value).collect();
    let right_idx: Vec<usize> = indices.iter().copied().filter(|&i| rows[i][feature] >= value).collect();
    let slot = nodes.len();
    nodes.push(Node::Leaf { size: 0 }); // placeholder
    let left = build_node(rows, &left_idx, features, depth + 1, max_depth, rng, nodes);
    let right = build_node(rows, &right_idx, features, depth + 1, max_depth, rng, nodes);
    nodes[slot] = Node::Split {
        feature,
        value,
        left,
        right,
    };
    slot
}

/// Fit an isolation forest on dense rows.
pub fn iforest_fit(rows: &[Vec<f64>], trees: usize, seed: u64) -> Result<IsolationForestModel> {
    if rows.len() < 2 {
        return Err(Error::GeometryMismatch(
            "isolation forest needs at least 2 rows".into(),
        ));
    }
    let features = rows[0].len();
    let subsample = DEFAULT_SUBSAMPLE.min(rows.len());
    let max_depth = (subsample as f64).log2().ceil() as usize;
    let built: Vec<Tree> = (0..trees)
        .into_par_iter()
        .map(|t| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(t as u64));
            let mut indices: Vec<usize> = (0..rows.len()).collect();
            // partial Fisher-Yates for the subsample
            for i in 0..subsample {
                let j = rng.gen_range(i..indices.len());
                indices.swap(i, j);
            }
            indices.truncate(subsample);
            build_tree(rows, &indices, features, max_depth, &mut rng)
        })
        .collect();
    Ok(IsolationForestModel {
        trees: built,
        subsample,
        features,
        seed,
    })
}

fn path_length(tree: &Tree, row: &[f64]) -> f64 {
    let mut node = 0;
    let mut depth = 0.0;
    loop {
        match &tree.nodes[node] {
            Node::Leaf { size } => return depth + average_path_length(*size),
            Node::Split {
                feature,
                value,
                left,
                right,
            } => {
                node = if row[*feature] < *value { *left } else { *right };
                depth += 1.0;
            }
        }
    }
}

/// Score rows with a fitted model: `2^(-E[h(x)] / c(subsample))`, in (0, 1).
pub fn iforest_score_rows(model: &IsolationForestModel, rows: &[Vec<f64>]) -> Result<Vec<f64>> {
    for row in rows {
        if row.len() != model.features {
            return Err(Error::ArityMismatch {
                expected: model.features,
                got: row.len(),
            });
        }
    }
    let c = average_path_length(model.subsample);
    Ok(rows
        .par_iter()
        .map(|row| {
            let mean_depth: f64 = model
                .trees
                .iter()
                .map(|t| path_length(t, row))
                .sum::<f64>()
                / model.trees.len() as f64;
            2f64.powf(-mean_depth / c)
        })
        .collect())
}

/// Convenience: fit + score on the same rows, packaged as a score series.
pub fn iforest_scores(
    model: &IsolationForestModel,
    rows: &[Vec<f64>],
    window_starts: Vec<usize>,
) -> Result<AnomalyScoreSeries> {
    let scores = iforest_score_rows(model, rows)?;
    Ok(AnomalyScoreSeries {
        window_starts,
        scores,
        source: ScoreSource::Iforest,
        sensor_id: None,
    })
}
