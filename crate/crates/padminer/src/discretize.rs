//! SAX discretization: PAA block averaging followed by binning.
//!
//! Three binning strategies are supported: `global` (equal-width bins over the
//! whole series, the default), `local` (equal-width bins per window) and
//! `kmeans` (1-D k-means centroids over all values).

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::series::{sliding_windows, TimeSeries, WindowSpec};

pub type Symbol = u16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Binning {
    Global,
    Local,
    Kmeans,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SaxConfig {
    /// How many raw values are averaged per output symbol.
    pub paa_win: usize,
    /// Alphabet size.
    pub no_bins: usize,
    pub binning: Binning,
}

impl SaxConfig {
    pub fn new(paa_win: usize, no_bins: usize, binning: Binning) -> Self {
        Self {
            paa_win,
            no_bins,
            binning,
        }
    }

    /// Validate against a window length. Requires `length % paa_win == 0`,
    /// at least two symbols per window and at least two bins.
    pub fn validate(&self, window_length: usize) -> Result<()> {
        if self.paa_win == 0 || !window_length.is_multiple_of(self.paa_win) {
            return Err(Error::InvalidSaxConfig(format!(
                "window length {window_length} not divisible by paa_win {}",
                self.paa_win
            )));
        }
        if window_length / self.paa_win < 2 {
            return Err(Error::InvalidSaxConfig(format!(
                "window length {window_length} / paa_win {} yields fewer than 2 symbols",
                self.paa_win
            )));
        }
        if self.no_bins < 2 {
            return Err(Error::InvalidSaxConfig(format!(
                "no_bins must be >= 2, got {}",
                self.no_bins
            )));
        }
        Ok(())
    }

    pub fn no_symbols(&self, window_length: usize) -> usize {
        window_length / self.paa_win
    }
}

/// Fitted binning: boundaries for global bins, centroids for k-means, nothing
/// for local (bins are computed per window).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum BinTable {
    /// `no_bins - 1` strictly increasing cut points.
    Global { boundaries: Vec<f64> },
    Local,
    /// `no_bins` sorted centroids.
    Kmeans { centroids: Vec<f64> },
}

/// One discrete sequence per sliding window, in window order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscreteSequenceDB {
    pub source_series_id: String,
    pub alphabet_size: usize,
    /// (window start index, symbols); every symbol list has the same length.
    pub sequences: Vec<(usize, Vec<Symbol>)>,
}

impl DiscreteSequenceDB {
    pub fn len(&self) -> usize {
        self.sequences.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sequences.is_empty()
    }

    pub fn sequence_length(&self) -> usize {
        self.sequences.first().map_or(0, |(_, s)| s.len())
    }

    pub fn window_starts(&self) -> Vec<usize> {
        self.sequences.iter().map(|(s, _)| *s).collect()
    }
}

/// Render symbols as letters `a, b, c, ...` for human inspection.
pub fn symbols_to_letters(symbols: &[Symbol]) -> String {
    symbols
        .iter()
        .map(|&s| {
            if s < 26 {
                (b'a' + s as u8) as char
            } else {
                '?'
            }
        })
        .collect()
}

fn equal_width_boundaries(min: f64, max: f64, no_bins: usize) -> Vec<f64> {
    let width = (max - min) / no_bins as f64;
    (1..no_bins).map(|i| min + i as f64 * width).collect()
}

/// Fit a bin table on the whole series.
///
/// `global` spans `[min, max]` of the series with equal-width bins; `kmeans`
/// runs seeded 1-D k-means (k-means++ init, 100 iterations) and falls back to
/// global bins when it fails to converge.
pub fn fit_bins(series: &TimeSeries, config: &SaxConfig, seed: u64) -> Result<BinTable> {
    if series.values.is_empty() {
        return Err(Error::EmptySeries(series.id.clone()));
    }
    match config.binning {
        Binning::Local => Ok(BinTable::Local),
        Binning::Global => {
            let min = series.values.iter().cloned().fold(f64::INFINITY, f64::min);
            let max = series
                .values
                .iter()
                .cloned()
                .fold(f64::NEG_INFINITY, f64::max);
            Ok(BinTable::Global {
                boundaries: equal_width_boundaries(min, max, config.no_bins),
            })
        }
        Binning::Kmeans => match kmeans_1d(&series.values, config.no_bins, seed, 100) {
            Some(centroids) => Ok(BinTable::Kmeans { centroids }),
            None => {
                eprintln!(
                    "warning: k-means binning did not converge for `{}`; falling back to global bins",
                    series.id
                );
                let min = series.values.iter().cloned().fold(f64::INFINITY, f64::min);
                let max = series
                    .values
                    .iter()
                    .cloned()
                    .fold(f64::NEG_INFINITY, f64::max);
                Ok(BinTable::Global {
                    boundaries: equal_width_boundaries(min, max, config.no_bins),
                })
            }
        },
    }
}

/// Seeded 1-D k-means with k-means++ style initialization. Returns sorted
/// centroids, or `None` if the assignment did not stabilize within `max_iter`.
fn kmeans_1d(values: &[f64], k: usize, seed: u64, max_iter: usize) -> Option<Vec<f64>> {
    let mut rng = StdRng::seed_from_u64(seed);
    let mut centroids = Vec::with_capacity(k);
    centroids.push(values[rng.gen_range(0..values.len())]);
    while centroids.len() < k {
        // k-means++: sample proportionally to squared distance to the nearest centroid
        let d2: Vec<f64> = values
            .iter()
            .map(|v| {
                centroids
                    .iter()
                    .map(|c| (v - c) * (v - c))
                    .fold(f64::INFINITY, f64::min)
            })
            .collect();
        let total: f64 = d2.iter().sum();
        if total == 0.0 {
            // fewer distinct values than clusters; pad with duplicates
            centroids.push(centroids[0]);
            continue;
        }
        let mut target = rng.gen::<f64>() * total;
        let mut chosen = values.len() - 1;
        for (i, d) in d2.iter().enumerate() {
            target -= d;
            if target <= 0.0 {
                chosen = i;
                break;
            }
        }
        centroids.push(values[chosen]);
    }
    centroids.sort_by(|a, b| a.partial_cmp(b).unwrap());

    let mut assignment = vec![usize::MAX; values.len()];
    for _ in 0..max_iter {
        let mut changed = false;
        let mut sums = vec![0.0; k];
        let mut counts = vec![0usize; k];
        for (i, v) in values.iter().enumerate() {
            let mut best = 0;
            let mut best_d = f64::INFINITY;
            for (j, c) in centroids.iter().enumerate() {
                let d = (v - c).abs();
                if d < best_d {
                    best_d = d;
                    best = j;
                }
            }
            if assignment[i] != best {
                assignment[i] = best;
                changed = true;
            }
            sums[best] += v;
            counts[best] += 1;
        }
        for j in 0..k {
            if counts[j] > 0 {
                centroids[j] = sums[j] / counts[j] as f64;
            }
        }
        centroids.sort_by(|a, b| a.partial_cmp(b).unwrap());
        if !changed {
            return Some(centroids);
        }
    }
    None
}

/// Map a value to a bin given global boundaries. Values on a boundary go to
/// the higher bin.
fn lookup_bin(boundaries: &[f64], value: f64) -> Symbol {
    let mut bin = 0;
    for b in boundaries {
        if value >= *b {
            bin += 1;
        } else {
            break;
        }
    }
    bin as Symbol
}

fn nearest_centroid(centroids: &[f64], value: f64) -> Symbol {
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for (j, c) in centroids.iter().enumerate() {
        let d = (value - c).abs();
        if d < best_d {
            best_d = d;
            best = j;
        }
    }
    best as Symbol
}

/// SAX transform of one window: PAA block means, then bin lookup.
pub fn sax_window(window: &[f64], config: &SaxConfig, bins: &BinTable) -> Vec<Symbol> {
    debug_assert_eq!(window.len() % config.paa_win, 0);
    let means: Vec<f64> = window
        .chunks_exact(config.paa_win)
        .map(|chunk| chunk.iter().sum::<f64>() / config.paa_win as f64)
        .collect();
    match bins {
        BinTable::Global { boundaries } => {
            means.iter().map(|&m| lookup_bin(boundaries, m)).collect()
        }
        BinTable::Kmeans { centroids } => {
            means.iter().map(|&m| nearest_centroid(centroids, m)).collect()
        }
        BinTable::Local => {
            let min = window.iter().cloned().fold(f64::INFINITY, f64::min);
            let max = window.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            if max <= min {
                // zero-range window: emit the middle symbol everywhere
                let mid = (config.no_bins / 2) as Symbol;
                return vec![mid; means.len()];
            }
            let boundaries = equal_width_boundaries(min, max, config.no_bins);
            means
                .iter()
                .map(|&m| {
                    let b = lookup_bin(&boundaries, m);
                    // the window maximum lands in the top bin
                    b.min(config.no_bins as Symbol - 1)
                })
                .collect()
        }
    }
}

/// Build the discrete sequence database: one SAX sequence per sliding window.
pub fn build_sequence_db(
    series: &TimeSeries,
    window_spec: &WindowSpec,
    config: &SaxConfig,
    bins: &BinTable,
) -> Result<DiscreteSequenceDB> {
    config.validate(window_spec.length)?;
    let windows = sliding_windows(series, window_spec)?;
    let sequences = windows
        .into_iter()
        .map(|(s, e)| (s, sax_window(&series.values[s..e], config, bins)))
        .collect();
    Ok(DiscreteSequenceDB {
        source_series_id: series.id.clone(),
        alphabet_size: config.no_bins,
        sequences,
    })
}
