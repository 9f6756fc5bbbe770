//! End-to-end orchestration: network recovery, entity extension, per-sensor
//! mining and embedding, scoring, evaluation and run-directory output.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::discretize::{build_sequence_db, fit_bins, Binning, SaxConfig};
use crate::embedding::{concatenate_embeddings, create_embedding, PatternEmbedding};
use crate::error::{Error, Result};
use crate::eval::{evaluate_point_adjust, EvaluationResult};
use crate::ingest::IngestResult;
use crate::mining::{mine_interesting_patterns, MiningConfig, SequentialPattern};
use crate::network::{
    build_network, build_similarity_matrix, extend_entity, find_frequent_relation_types,
    summarize, RelationType, SimilarityParams,
};
use crate::scoring::iforest::{iforest_fit, iforest_score_rows, DEFAULT_TREES};
use crate::scoring::{
    aggregate_max, per_sensor_scores, AnomalyScoreSeries, ScoreSource,
};
use crate::series::{preprocess, Dataset, NetworkGraph, TimeSeries, WindowSpec};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkConfig {
    /// When false, entities are scored on their own sensors only.
    pub enabled: bool,
    #[serde(flatten)]
    pub params: SimilarityParams,
    pub coverage: f64,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        Self {
            enabled: true,
            params: SimilarityParams::default(),
            coverage: 0.95,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub window_length: usize,
    pub window_increment: usize,
    /// PAA block size; 0 means `window_length / 10` (the shipped default of
    /// 10 symbols per window).
    pub paa_win: usize,
    pub no_bins: usize,
    pub binning: Binning,
    pub mining: MiningConfig,
    pub scoring: ScoreSource,
    pub trees: usize,
    pub network: NetworkConfig,
    pub seed: u64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            window_length: 100,
            window_increment: 1,
            paa_win: 0,
            no_bins: 5,
            binning: Binning::Global,
            mining: MiningConfig::default(),
            scoring: ScoreSource::Fpof,
            trees: DEFAULT_TREES,
            network: NetworkConfig::default(),
            seed: 0,
        }
    }
}

impl PipelineConfig {
    pub fn window_spec(&self) -> Result<WindowSpec> {
        WindowSpec::new(self.window_length, self.window_increment)
    }

    pub fn effective_paa_win(&self) -> usize {
        if self.paa_win == 0 {
            (self.window_length / 10).max(1)
        } else {
            self.paa_win
        }
    }

    pub fn sax_config(&self) -> SaxConfig {
        SaxConfig::new(self.effective_paa_win(), self.no_bins, self.binning)
    }

    pub fn validate(&self) -> Result<()> {
        self.window_spec()?;
        self.sax_config().validate(self.window_length)?;
        self.mining.validate()?;
        if self.trees == 0 {
            return Err(Error::Config("trees must be >= 1".into()));
        }
        if !(0.0..=1.0).contains(&self.network.coverage) {
            return Err(Error::Config("coverage must be in [0, 1]".into()));
        }
        Ok(())
    }

    pub fn from_json_file(path: &Path) -> Result<Self> {
        let config: Self = serde_json::from_str(&fs::read_to_string(path)?)?;
        config.validate()?;
        Ok(config)
    }
}

/// Everything one `run_bad` invocation produces.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub entity_scores: AnomalyScoreSeries,
    /// (series id, scores) per sensor; `None` when no patterns were mined.
    pub per_sensor: Vec<(String, Option<AnomalyScoreSeries>)>,
    pub patterns: BTreeMap<String, Vec<SequentialPattern>>,
    pub embeddings: Vec<PatternEmbedding>,
    pub graph: NetworkGraph,
    pub relations: Vec<RelationType>,
}

fn preprocessed_series(dataset: &Dataset) -> Result<Vec<TimeSeries>> {
    let mut out = Vec::new();
    for s in dataset.series.values() {
        if let Some(p) = preprocess(s)? {
            out.push(p);
        }
    }
    Ok(out)
}

/// Mine + embed one preprocessed sensor series.
fn sensor_embedding(
    series: &TimeSeries,
    config: &PipelineConfig,
) -> Result<(Vec<SequentialPattern>, PatternEmbedding)> {
    let spec = config.window_spec()?;
    let sax = config.sax_config();
    let bins = fit_bins(series, &sax, config.seed)?;
    let db = build_sequence_db(series, &spec, &sax, &bins)?;
    let patterns = mine_interesting_patterns(&db, &config.mining)?;
    let embedding = create_embedding(&patterns, &db, config.mining.rdur)?;
    Ok((patterns, embedding))
}

/// Full detection run for one entity: recover the network, extend the entity
/// with its neighbors' similar series, mine and embed per sensor, then score
/// per the configured mode.
pub fn run_bad(dataset: &Dataset, target_entity: &str, config: &PipelineConfig) -> Result<RunOutput> {
    config.validate()?;
    let entity = dataset
        .entity(target_entity)
        .ok_or_else(|| Error::EntityNotFound(target_entity.to_string()))?;

    let preprocessed = preprocessed_series(dataset)?;
    let by_id: BTreeMap<&str, &TimeSeries> =
        preprocessed.iter().map(|s| (s.id.as_str(), s)).collect();

    let (graph, relations) = if config.network.enabled {
        let refs: Vec<&TimeSeries> = preprocessed.iter().collect();
        let summaries = summarize(&refs, &config.network.params)?;
        let matrix = build_similarity_matrix(&summaries, &config.network.params, config.seed)?;
        let relations = find_frequent_relation_types(&matrix, dataset, config.network.coverage);
        (build_network(&matrix, dataset, &relations), relations)
    } else {
        (NetworkGraph::default(), Vec::new())
    };
    let extended = extend_entity(entity, &graph);

    let mut patterns = BTreeMap::new();
    let mut embeddings = Vec::new();
    for sid in &extended.sensors {
        // sensors rejected by preprocessing (straight lines) are skipped
        let Some(series) = by_id.get(sid.as_str()) else { continue };
        let (p, e) = sensor_embedding(series, config)?;
        patterns.insert(sid.clone(), p);
        embeddings.push(e);
    }
    if embeddings.is_empty() || patterns.values().all(Vec::is_empty) {
        return Err(Error::NoPatterns);
    }

    let (entity_scores, per_sensor) = match config.scoring {
        ScoreSource::Fpof => {
            let per = per_sensor_scores(&embeddings)?;
            let agg = aggregate_max(&per)?;
            let named = embeddings
                .iter()
                .zip(per)
                .map(|(e, s)| (e.source_series_id.clone(), s))
                .collect();
            (agg, named)
        }
        ScoreSource::Iforest => {
            let concat = concatenate_embeddings(&embeddings)?;
            let rows = concat.dense();
            let model = iforest_fit(&rows, config.trees, config.seed)?;
            let scores = iforest_score_rows(&model, &rows)?;
            let agg = AnomalyScoreSeries {
                window_starts: concat.window_starts.clone(),
                scores,
                source: ScoreSource::Iforest,
                sensor_id: None,
            };
            // per-sensor localisation still comes from FPOF
            let per = per_sensor_scores(&embeddings)?;
            let named = embeddings
                .iter()
                .zip(per)
                .map(|(e, s)| (e.source_series_id.clone(), s))
                .collect();
            (agg, named)
        }
    };

    Ok(RunOutput {
        entity_scores,
        per_sensor,
        patterns,
        embeddings,
        graph,
        relations,
    })
}

/// Exhaustive grid over (window length, paa_win, no_bins).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamGrid {
    pub window_lengths: Vec<usize>,
    /// 0 entries mean "window_length / 10".
    pub paa_wins: Vec<usize>,
    pub no_bins: Vec<usize>,
}

/// Sweep the grid, evaluating each valid configuration with point-adjust F1.
/// Ties break toward the smaller window, then fewer bins.
pub fn grid_search(
    ingested: &IngestResult,
    target_entity: &str,
    base: &PipelineConfig,
    grid: &ParamGrid,
) -> Result<(PipelineConfig, EvaluationResult)> {
    let labels = ingested.labels.as_deref().ok_or(Error::NoLabels)?;
    if grid.window_lengths.is_empty() || grid.paa_wins.is_empty() || grid.no_bins.is_empty() {
        return Err(Error::EmptyGrid);
    }
    let mut best: Option<(PipelineConfig, EvaluationResult)> = None;
    let mut evaluated = 0usize;
    for &wl in &grid.window_lengths {
        for &pw in &grid.paa_wins {
            for &nb in &grid.no_bins {
                let mut config = base.clone();
                config.window_length = wl;
                config.paa_win = pw;
                config.no_bins = nb;
                if config.validate().is_err() {
                    continue;
                }
                let output = match run_bad(&ingested.dataset, target_entity, &config) {
                    Ok(o) => o,
                    Err(Error::NoPatterns) => continue,
                    Err(e) => return Err(e),
                };
                let spec = config.window_spec()?;
                let result = evaluate_point_adjust(&output.entity_scores, labels, &spec)?;
                evaluated += 1;
                let better = match &best {
                    None => true,
                    Some((bc, br)) => {
                        result.best_f1 > br.best_f1
                            || (result.best_f1 == br.best_f1
                                && (wl, nb) < (bc.window_length, bc.no_bins))
                    }
                };
                if better {
                    best = Some((config, result));
                }
            }
        }
    }
    if evaluated == 0 {
        return Err(Error::EmptyGrid);
    }
    Ok(best.unwrap())
}

/// Write all run artifacts into `dir`.
pub fn write_run_dir(
    dir: &Path,
    output: &RunOutput,
    config: &PipelineConfig,
    dataset: &Dataset,
    eval: Option<&EvaluationResult>,
) -> Result<()> {
    fs::create_dir_all(dir.join("patterns"))?;
    fs::create_dir_all(dir.join("embedding"))?;

    for (sensor, patterns) in &output.patterns {
        let mut f = fs::File::create(dir.join("patterns").join(format!("{sensor}.jsonl")))?;
        for p in patterns {
            writeln!(f, "{}", serde_json::to_string(p)?)?;
        }
    }

    for e in &output.embeddings {
        let mut w = csv::Writer::from_path(
            dir.join("embedding").join(format!("{}.csv", e.source_series_id)),
        )?;
        let mut header = vec!["window_start".to_string()];
        header.extend(e.pattern_ids.iter().cloned());
        w.write_record(&header)?;
        for (i, &start) in e.window_starts.iter().enumerate() {
            let mut record = vec![start.to_string()];
            record.extend(e.dense_row(i).iter().map(|v| format!("{v}")));
            w.write_record(&record)?;
        }
        w.flush()?;
    }

    {
        let mut w = csv::Writer::from_path(dir.join("scores.csv"))?;
        let mut header = vec!["window_start".to_string(), "entity_score".to_string()];
        for (sid, _) in &output.per_sensor {
            header.push(sid.clone());
        }
        w.write_record(&header)?;
        for (i, &start) in output.entity_scores.window_starts.iter().enumerate() {
            let mut record = vec![start.to_string(), format!("{}", output.entity_scores.scores[i])];
            for (_, scores) in &output.per_sensor {
                record.push(match scores {
                    Some(s) => format!("{}", s.scores[i]),
                    None => String::new(),
                });
            }
            w.write_record(&record)?;
        }
        w.flush()?;
    }

    {
        let mut w = csv::Writer::from_path(dir.join("edges.csv"))?;
        w.write_record([
            "device_a", "device_b", "series_a", "series_b", "type_a", "type_b", "dist_fp",
            "dist_hist",
        ])?;
        for e in &output.graph.edges {
            let type_of = |sid: &str| {
                dataset
                    .series
                    .get(sid)
                    .map(|s| s.sensor_type.clone())
                    .unwrap_or_default()
            };
            w.write_record([
                e.entity_a.clone(),
                e.entity_b.clone(),
                e.series_a.clone(),
                e.series_b.clone(),
                type_of(&e.series_a),
                type_of(&e.series_b),
                format!("{}", e.dist_fp),
                format!("{}", e.dist_hist),
            ])?;
        }
        w.flush()?;
    }

    {
        let mut w = csv::Writer::from_path(dir.join("relations.csv"))?;
        w.write_record(["type_a", "type_b", "support"])?;
        for r in &output.relations {
            w.write_record([r.type_a.clone(), r.type_b.clone(), r.support.to_string()])?;
        }
        w.flush()?;
    }

    if let Some(result) = eval {
        fs::write(dir.join("eval.json"), serde_json::to_string_pretty(result)?)?;
    }
    fs::write(
        dir.join("config.resolved.json"),
        serde_json::to_string_pretty(config)?,
    )?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::series::Entity;
    use std::collections::BTreeMap as Map;

    fn periodic(id: &str, entity: &str, n: usize, phase: f64) -> TimeSeries {
        TimeSeries {
            id: id.into(),
            entity_id: entity.into(),
            sensor_type: "sig".into(),
            start_time: 0,
            sample_interval: 300,
            values: (0..n)
                .map(|i| {
                    let t = i as f64 / 20.0 * 2.0 * std::f64::consts::PI + phase;
                    0.5 + 0.4 * t.sin() + 0.02 * ((i * 7919 % 101) as f64 / 101.0)
                })
                .collect(),
        }
    }

    fn single_entity_dataset(n: usize) -> Dataset {
        let s = periodic("e1.sig", "e1", n, 0.0);
        let mut series = Map::new();
        series.insert(s.id.clone(), s);
        Dataset {
            entities: vec![Entity {
                id: "e1".into(),
                entity_type: "device".into(),
                sensors: vec!["e1.sig".into()],
            }],
            series,
        }
    }

    fn small_config() -> PipelineConfig {
        PipelineConfig {
            window_length: 40,
            window_increment: 5,
            paa_win: 4,
            no_bins: 4,
            mining: MiningConfig {
                k: 100,
                min_len: 2,
                rdur: 1.2,
            },
            network: NetworkConfig {
                enabled: false,
                ..Default::default()
            },
            ..Default::default()
        }
    }

    #[test]
    fn single_sensor_fpof_matches_module_composition() {
        let dataset = single_entity_dataset(400);
        let config = small_config();
        let output = run_bad(&dataset, "e1", &config).unwrap();

        // by hand: discretize -> mine -> embed -> fpof on the same series
        let series = preprocess(dataset.series.get("e1.sig").unwrap())
            .unwrap()
            .unwrap();
        let (patterns, embedding) = sensor_embedding(&series, &config).unwrap();
        assert!(!patterns.is_empty());
        let expected = crate::scoring::fpof_scores(&embedding).unwrap();
        assert_eq!(output.entity_scores.scores, expected.scores);
        assert_eq!(output.entity_scores.window_starts, expected.window_starts);
    }

    #[test]
    fn network_disabled_equals_empty_graph() {
        let dataset = single_entity_dataset(400);
        let mut config = small_config();
        let a = run_bad(&dataset, "e1", &config).unwrap();
        config.network.enabled = true;
        // a single preprocessed series yields no pairs, hence no edges either
        let b = run_bad(&dataset, "e1", &config).unwrap();
        assert_eq!(a.entity_scores.scores, b.entity_scores.scores);
        assert!(a.graph.edges.is_empty() && b.graph.edges.is_empty());
    }

    #[test]
    fn determinism_same_seed_same_output() {
        let dataset = single_entity_dataset(400);
        let mut config = small_config();
        config.scoring = ScoreSource::Iforest;
        config.trees = 50;
        let a = run_bad(&dataset, "e1", &config).unwrap();
        let b = run_bad(&dataset, "e1", &config).unwrap();
        assert_eq!(a.entity_scores.scores, b.entity_scores.scores);
    }

    #[test]
    fn missing_entity_errors() {
        let dataset = single_entity_dataset(400);
        assert!(matches!(
            run_bad(&dataset, "nope", &small_config()),
            Err(Error::EntityNotFound(_))
        ));
    }

    #[test]
    fn config_roundtrip_and_defaults() {
        let config = PipelineConfig::default();
        let json = serde_json::to_string(&config).unwrap();
        let back: PipelineConfig = serde_json::from_str(&json).unwrap();
        assert_eq!(config, back);

        // partial config files pick up the shipped defaults
        let partial: PipelineConfig = serde_json::from_str(r#"{"no_bins": 7}"#).unwrap();
        assert_eq!(partial.no_bins, 7);
        assert_eq!(partial.mining.k, 10_000);
        assert_eq!(partial.mining.rdur, 1.2);
        assert_eq!(partial.trees, 500);
        assert_eq!(partial.network.coverage, 0.95);
    }

    #[test]
    fn grid_search_singleton_and_tie_breaks() {
        let dataset = single_entity_dataset(400);
        let n = dataset.series.get("e1.sig").unwrap().len();
        let labels: Vec<bool> = (0..n).map(|i| (200..220).contains(&i)).collect();
        let ingested = IngestResult {
            dataset,
            labels: Some(labels),
        };
        let base = small_config();
        let singleton = ParamGrid {
            window_lengths: vec![40],
            paa_wins: vec![4],
            no_bins: vec![4],
        };
        let (best, result) = grid_search(&ingested, "e1", &base, &singleton).unwrap();
        assert_eq!(best.window_length, 40);
        assert!(result.best_f1 >= 0.0);

        let empty = ParamGrid {
            window_lengths: vec![],
            paa_wins: vec![4],
            no_bins: vec![4],
        };
        assert!(matches!(
            grid_search(&ingested, "e1", &base, &empty),
            Err(Error::EmptyGrid)
        ));
    }

    #[test]
    fn run_dir_files_written() {
        let dataset = single_entity_dataset(400);
        let config = small_config();
        let output = run_bad(&dataset, "e1", &config).unwrap();
        let dir = tempfile::tempdir().unwrap();
        write_run_dir(dir.path(), &output, &config, &dataset, None).unwrap();
        assert!(dir.path().join("scores.csv").exists());
        assert!(dir.path().join("edges.csv").exists());
        assert!(dir.path().join("relations.csv").exists());
        assert!(dir.path().join("config.resolved.json").exists());
        assert!(dir.path().join("patterns").join("e1.sig.jsonl").exists());
        assert!(dir.path().join("embedding").join("e1.sig.csv").exists());
    }
}
