//! Command-line surface for the detection pipeline.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use padminer::discretize::{build_sequence_db, fit_bins, symbols_to_letters};
use padminer::embedding::create_embedding;
use padminer::error::Error;
use padminer::eval::evaluate_point_adjust;
use padminer::ingest::{ingest_csv_dir, ingest_nab, ingest_smd, Format, IngestResult};
use padminer::mining::mine_interesting_patterns;
use padminer::network::{build_similarity_matrix, dist_fp, summarize, Fingerprint};
use padminer::pipeline::{grid_search, run_bad, write_run_dir, ParamGrid, PipelineConfig};
use padminer::series::TimeSeries;

#[derive(Parser)]
#[command(name = "padminer", version, about = "Pattern-based anomaly detection for networks of multivariate time series")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// JSON config file; unset fields keep the shipped defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// RNG seed; overrides the config file and PADMINER_SEED.
    #[arg(long, global = true)]
    seed: Option<u64>,
}

#[derive(Args, Clone)]
struct InputArgs {
    /// Data path: a directory (csv), a data CSV (nab) or a matrix file (smd).
    #[arg(long)]
    input: PathBuf,

    /// Input format.
    #[arg(long, default_value = "csv")]
    format: String,

    /// Label file (nab: window JSON; smd: 0/1 lines).
    #[arg(long)]
    labels: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Read a dataset and print a summary.
    Ingest {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        input: InputArgs,
    },
    /// Discretize one series into sliding-window symbol sequences.
    Discretize {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        input: InputArgs,
        /// Series id; defaults to the first series.
        #[arg(long)]
        series: Option<String>,
    },
    /// Mine interesting sequential patterns of one series.
    Mine {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        input: InputArgs,
        #[arg(long)]
        series: Option<String>,
    },
    /// Build the pattern embedding of one series (CSV on stdout).
    Embed {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        input: InputArgs,
        #[arg(long)]
        series: Option<String>,
    },
    /// Score one entity's windows (mine + embed + FPOF/iforest).
    Score {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        input: InputArgs,
        #[arg(long)]
        entity: Option<String>,
        /// Run directory for the outputs.
        #[arg(long, default_value = "padminer-run")]
        out: PathBuf,
    },
    /// Recover the device similarity network (edges + relation types).
    BuildNetwork {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        input: InputArgs,
        #[arg(long, default_value = "padminer-run")]
        out: PathBuf,
    },
    /// End-to-end detection for one entity, writing a run directory.
    Detect {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        input: InputArgs,
        #[arg(long)]
        entity: Option<String>,
        #[arg(long, default_value = "padminer-run")]
        out: PathBuf,
    },
    /// Detect and evaluate against labels with point-adjust F1.
    Evaluate {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        input: InputArgs,
        #[arg(long)]
        entity: Option<String>,
        #[arg(long, default_value = "padminer-run")]
        out: PathBuf,
    },
    /// Sweep a parameter grid and report the best configuration.
    GridSearch {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        input: InputArgs,
        #[arg(long)]
        entity: Option<String>,
        /// Comma-separated window lengths.
        #[arg(long, value_delimiter = ',', default_value = "100")]
        window_lengths: Vec<usize>,
        /// Comma-separated PAA block sizes (0 = window/10).
        #[arg(long, value_delimiter = ',', default_value = "0")]
        paa_wins: Vec<usize>,
        /// Comma-separated alphabet sizes.
        #[arg(long, value_delimiter = ',', default_value = "5")]
        no_bins: Vec<usize>,
        #[arg(long, default_value = "padminer-run")]
        out: PathBuf,
    },
    /// Pairwise-similarity throughput benchmark on synthetic fingerprints.
    Bench {
        #[command(flatten)]
        common: Common,
        /// Number of synthetic series.
        #[arg(long, default_value_t = 1000)]
        series: usize,
    },
}

fn load_config(common: &Common) -> Result<PipelineConfig, Error> {
    let mut config = match &common.config {
        Some(path) => PipelineConfig::from_json_file(path)?,
        None => PipelineConfig::default(),
    };
    if common.config.is_none() || std::env::var("PADMINER_SEED").is_ok() {
        if let Ok(s) = std::env::var("PADMINER_SEED") {
            config.seed = s
                .parse()
                .map_err(|_| Error::Config(format!("bad PADMINER_SEED `{s}`")))?;
        }
    }
    if let Some(seed) = common.seed {
        config.seed = seed;
    }
    Ok(config)
}

fn load_input(input: &InputArgs) -> Result<IngestResult, Error> {
    let format: Format = input.format.parse()?;
    match format {
        Format::Csv => ingest_csv_dir(&input.input),
        Format::Nab => {
            let labels = input
                .labels
                .as_ref()
                .ok_or_else(|| Error::Config("nab format requires --labels".into()))?;
            ingest_nab(&input.input, labels)
        }
        Format::Smd => ingest_smd(&input.input, input.labels.as_deref()),
    }
}

fn pick_series<'a>(
    ingested: &'a IngestResult,
    series: &Option<String>,
) -> Result<&'a TimeSeries, Error> {
    match series {
        Some(id) => ingested
            .dataset
            .series
            .get(id)
            .ok_or_else(|| Error::Config(format!("series `{id}` not found"))),
        None => ingested
            .dataset
            .series
            .values()
            .next()
            .ok_or_else(|| Error::Config("dataset holds no series".into())),
    }
}

fn pick_entity(ingested: &IngestResult, entity: &Option<String>) -> Result<String, Error> {
    match entity {
        Some(id) => Ok(id.clone()),
        None => ingested
            .dataset
            .entities
            .first()
            .map(|e| e.id.clone())
            .ok_or_else(|| Error::Config("dataset holds no entities".into())),
    }
}

fn preprocessed(series: &TimeSeries) -> Result<TimeSeries, Error> {
    padminer::series::preprocess(series)?.ok_or_else(|| {
        Error::Config(format!(
            "series `{}` was rejected by preprocessing (constant or straight line)",
            series.id
        ))
    })
}

fn run(cli: Cli) -> Result<(), Error> {
    match cli.command {
        Command::Ingest { input, .. } => {
            let ingested = load_input(&input)?;
            let total: usize = ingested.dataset.series.values().map(|s| s.len()).sum();
            println!(
                "entities: {}  series: {}  values: {}  labelled: {}",
                ingested.dataset.entities.len(),
                ingested.dataset.series.len(),
                total,
                ingested
                    .labels
                    .as_ref()
                    .map_or("no".to_string(), |l| format!(
                        "yes ({} anomalous points)",
                        l.iter().filter(|&&x| x).count()
                    ))
            );
        }
        Command::Discretize { common, input, series } => {
            let config = load_config(&common)?;
            let ingested = load_input(&input)?;
            let s = preprocessed(pick_series(&ingested, &series)?)?;
            let sax = config.sax_config();
            let bins = fit_bins(&s, &sax, config.seed)?;
            let db = build_sequence_db(&s, &config.window_spec()?, &sax, &bins)?;
            for (start, seq) in &db.sequences {
                println!("{start},{}", symbols_to_letters(seq));
            }
        }
        Command::Mine { common, input, series } => {
            let config = load_config(&common)?;
            let ingested = load_input(&input)?;
            let s = preprocessed(pick_series(&ingested, &series)?)?;
            let sax = config.sax_config();
            let bins = fit_bins(&s, &sax, config.seed)?;
            let db = build_sequence_db(&s, &config.window_spec()?, &sax, &bins)?;
            let patterns = mine_interesting_patterns(&db, &config.mining)?;
            for p in &patterns {
                println!("{}", serde_json::to_string(p)?);
            }
        }
        Command::Embed { common, input, series } => {
            let config = load_config(&common)?;
            let ingested = load_input(&input)?;
            let s = preprocessed(pick_series(&ingested, &series)?)?;
            let sax = config.sax_config();
            let bins = fit_bins(&s, &sax, config.seed)?;
            let db = build_sequence_db(&s, &config.window_spec()?, &sax, &bins)?;
            let patterns = mine_interesting_patterns(&db, &config.mining)?;
            let embedding = create_embedding(&patterns, &db, config.mining.rdur)?;
            let mut out = String::from("window_start");
            for pid in &embedding.pattern_ids {
                out.push(',');
                out.push_str(pid);
            }
            println!("{out}");
            for (i, start) in embedding.window_starts.iter().enumerate() {
                let row = embedding
                    .dense_row(i)
                    .iter()
                    .map(|v| v.to_string())
                    .collect::<Vec<_>>()
                    .join(",");
                println!("{start},{row}");
            }
        }
        Command::Score { common, input, entity, out }
        | Command::Detect { common, input, entity, out } => {
            let config = load_config(&common)?;
            let ingested = load_input(&input)?;
            let target = pick_entity(&ingested, &entity)?;
            let output = run_bad(&ingested.dataset, &target, &config)?;
            write_run_dir(&out, &output, &config, &ingested.dataset, None)?;
            println!(
                "scored {} windows of `{target}`; outputs in {}",
                output.entity_scores.scores.len(),
                out.display()
            );
        }
        Command::BuildNetwork { common, input, out } => {
            let config = load_config(&common)?;
            let ingested = load_input(&input)?;
            let mut kept = Vec::new();
            for s in ingested.dataset.series.values() {
                if let Some(p) = padminer::series::preprocess(s)? {
                    kept.push(p);
                }
            }
            let refs: Vec<&TimeSeries> = kept.iter().collect();
            let summaries = summarize(&refs, &config.network.params)?;
            let matrix = build_similarity_matrix(&summaries, &config.network.params, config.seed)?;
            let relations = padminer::network::find_frequent_relation_types(
                &matrix,
                &ingested.dataset,
                config.network.coverage,
            );
            let graph = padminer::network::build_network(&matrix, &ingested.dataset, &relations);
            std::fs::create_dir_all(&out)?;
            let empty = padminer::pipeline::RunOutput {
                entity_scores: padminer::scoring::AnomalyScoreSeries {
                    window_starts: vec![],
                    scores: vec![],
                    source: padminer::scoring::ScoreSource::Fpof,
                    sensor_id: None,
                },
                per_sensor: vec![],
                patterns: Default::default(),
                embeddings: vec![],
                graph,
                relations,
            };
            write_run_dir(&out, &empty, &config, &ingested.dataset, None)?;
            println!(
                "similar pairs: {}  relation types: {}  edges: {}",
                matrix.entries.len(),
                empty.relations.len(),
                empty.graph.edges.len()
            );
        }
        Command::Evaluate { common, input, entity, out } => {
            let config = load_config(&common)?;
            let ingested = load_input(&input)?;
            let labels = ingested.labels.clone().ok_or(Error::NoLabels)?;
            let target = pick_entity(&ingested, &entity)?;
            let output = run_bad(&ingested.dataset, &target, &config)?;
            let result =
                evaluate_point_adjust(&output.entity_scores, &labels, &config.window_spec()?)?;
            write_run_dir(&out, &output, &config, &ingested.dataset, Some(&result))?;
            println!(
                "best F1 {:.4} at threshold {:.6} (precision {:.4}, recall {:.4})",
                result.best_f1, result.best_threshold, result.best_precision, result.best_recall
            );
        }
        Command::GridSearch {
            common,
            input,
            entity,
            window_lengths,
            paa_wins,
            no_bins,
            out,
        } => {
            let base = load_config(&common)?;
            let ingested = load_input(&input)?;
            let target = pick_entity(&ingested, &entity)?;
            let grid = ParamGrid {
                window_lengths,
                paa_wins,
                no_bins,
            };
            let (best, result) = grid_search(&ingested, &target, &base, &grid)?;
            let output = run_bad(&ingested.dataset, &target, &best)?;
            write_run_dir(&out, &output, &best, &ingested.dataset, Some(&result))?;
            println!(
                "best F1 {:.4} with window {} / paa {} / bins {}",
                result.best_f1,
                best.window_length,
                best.effective_paa_win(),
                best.no_bins
            );
        }
        Command::Bench { common, series } => {
            use rand::{Rng, SeedableRng};
            let config = load_config(&common)?;
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(config.seed);
            let fps: Vec<Fingerprint> = (0..series)
                .map(|_| Fingerprint {
                    cells: (0..490).map(|_| rng.gen::<f64>() * 5.0).collect(),
                    columns: 98,
                    bins: 5,
                })
                .collect();
            let pairs = series * (series - 1) / 2;
            let start = std::time::Instant::now();
            let mut checksum = 0.0f64;
            for i in 0..series {
                for j in i + 1..series {
                    checksum += dist_fp(&fps[i], &fps[j])?;
                }
            }
            let elapsed = start.elapsed().as_secs_f64();
            println!(
                "{pairs} pairs in {elapsed:.3}s = {:.0} pairs/s (checksum {checksum:.1})",
                pairs as f64 / elapsed
            );
        }
    }
    Ok(())
}

fn exit_code_for(err: &Error) -> ExitCode {
    match err {
        Error::Config(_)
        | Error::EmptyGrid
        | Error::InvalidWindowSpec(_)
        | Error::InvalidSaxConfig(_)
        | Error::InvalidMiningConfig(_) => ExitCode::from(1),
        _ => ExitCode::from(2),
    }
}

fn main() -> ExitCode {
    if let Ok(threads) = std::env::var("PADMINER_THREADS") {
        if let Ok(n) = threads.parse::<usize>() {
            let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
        }
    }
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code_for(&e)
        }
    }
}
