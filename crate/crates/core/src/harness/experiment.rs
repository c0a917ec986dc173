use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;

use crate::active::{active_loop, Acquisition, Oracle, RunRecord};
use crate::error::{MaladyError, Result};
use crate::graph::build_graph;

use super::config::ExperimentConfig;
use super::metrics::mean_std;

/// Mean and spread of accuracy at one labeled-set size.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CurvePoint {
    pub num_labeled: usize,
    pub mean: f64,
    pub std: f64,
    pub runs: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SeedFailure {
    pub seed: u64,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Aggregate {
    pub config_hash: String,
    pub acquisition: Acquisition,
    pub num_points: usize,
    pub num_classes: usize,
    pub seeds: Vec<u64>,
    pub failures: Vec<SeedFailure>,
    pub curve: Vec<CurvePoint>,
    pub final_mean: f64,
    pub final_std: f64,
}

#[derive(Debug, Clone)]
pub struct ExperimentReport {
    pub directory: PathBuf,
    pub records: Vec<RunRecord>,
    pub aggregate: Aggregate,
}

#[derive(Serialize)]
struct SeedSummary<'a> {
    config_hash: &'a str,
    seed: u64,
    acquisition: Acquisition,
    mean_accuracy: f64,
    final_accuracy: f64,
    exhausted: bool,
    queries: Vec<usize>,
    wall_time_seconds: f64,
}

/// Builds the graph once, runs one active-learning loop per seed (in
/// parallel), and writes everything under `<output>/<config hash>/`.
///
/// A failing seed is recorded in `aggregate.json`; the other seeds still run.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentReport> {
    config.validate()?;
    let dataset = config.dataset.load(None)?;
    let labels = dataset.labels.clone().expect("checked by load");
    let num_classes = dataset.num_classes();
    let graph = build_graph(&dataset.features, &config.kernel)?;
    let oracle = Oracle::new(labels.clone(), num_classes)?;
    let ssl = config.ssl_config(&labels, num_classes);

    let hash = config.hash();
    let directory = config.output.join(&hash);
    fs::create_dir_all(&directory).map_err(|e| MaladyError::io(&directory, e))?;
    let config_json = serde_json::to_string_pretty(config)?;
    write_file(&directory.join("config.json"), config_json.as_bytes())?;

    let outcomes: Vec<(u64, Result<RunRecord>)> = config
        .seeds
        .par_iter()
        .map(|&seed| {
            let start = Instant::now();
            let result = active_loop(&graph, &oracle, config.budget, &ssl, seed, config.acquisition)
                .and_then(|out| {
                    write_seed_files(&directory, &hash, &out.record, start.elapsed().as_secs_f64())?;
                    Ok(out.record)
                });
            (seed, result)
        })
        .collect();

    let mut records = Vec::new();
    let mut failures = Vec::new();
    for (seed, outcome) in outcomes {
        match outcome {
            Ok(record) => records.push(record),
            Err(e) => failures.push(SeedFailure {
                seed,
                error: e.to_string(),
            }),
        }
    }
    let aggregate = aggregate(&hash, config, graph.n(), num_classes, &records, failures);
    write_file(
        &directory.join("aggregate.json"),
        serde_json::to_string_pretty(&aggregate)?.as_bytes(),
    )?;
    write_file(&directory.join("curve.csv"), &curve_csv(&records)?)?;
    Ok(ExperimentReport {
        directory,
        records,
        aggregate,
    })
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|e| MaladyError::io(path, e))
}

/// `seed,iteration,num_labeled,query_index,accuracy` rows.
pub fn record_csv(record: &RunRecord) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["seed", "iteration", "num_labeled", "query_index", "accuracy"])
        .map_err(csv_error)?;
    for row in &record.iterations {
        w.write_record([
            record.seed.to_string(),
            row.iteration.to_string(),
            row.num_labeled.to_string(),
            row.query_index.map(|q| q.to_string()).unwrap_or_default(),
            row.accuracy.to_string(),
        ])
        .map_err(csv_error)?;
    }
    w.into_inner().map_err(|e| MaladyError::InvalidState(e.to_string()))
}

fn csv_error(e: csv::Error) -> MaladyError {
    MaladyError::InvalidState(format!("csv encoding failed: {e}"))
}

fn write_seed_files(dir: &Path, hash: &str, record: &RunRecord, seconds: f64) -> Result<()> {
    write_file(&dir.join(format!("seed-{}.csv", record.seed)), &record_csv(record)?)?;
    let accs: Vec<f64> = record.iterations.iter().map(|r| r.accuracy).collect();
    let summary = SeedSummary {
        config_hash: hash,
        seed: record.seed,
        acquisition: record.acquisition,
        mean_accuracy: mean_std(&accs).0,
        final_accuracy: record.final_accuracy,
        exhausted: record.exhausted,
        queries: record.queries(),
        wall_time_seconds: seconds,
    };
    write_file(
        &dir.join(format!("seed-{}.json", record.seed)),
        serde_json::to_string_pretty(&summary)?.as_bytes(),
    )
}

fn aggregate(
    hash: &str,
    config: &ExperimentConfig,
    num_points: usize,
    num_classes: usize,
    records: &[RunRecord],
    failures: Vec<SeedFailure>,
) -> Aggregate {
    let mut by_size: BTreeMap<usize, Vec<f64>> = BTreeMap::new();
    for record in records {
        for row in &record.iterations {
            by_size.entry(row.num_labeled).or_default().push(row.accuracy);
        }
    }
    let curve = by_size
        .into_iter()
        .map(|(num_labeled, accs)| {
            let (mean, std) = mean_std(&accs);
            CurvePoint {
                num_labeled,
                mean,
                std,
                runs: accs.len(),
            }
        })
        .collect();
    let finals: Vec<f64> = records.iter().map(|r| r.final_accuracy).collect();
    let (final_mean, final_std) = mean_std(&finals);
    Aggregate {
        config_hash: hash.to_string(),
        acquisition: config.acquisition,
        num_points,
        num_classes,
        seeds: config.seeds.clone(),
        failures,
        curve,
        final_mean,
        final_std,
    }
}

/// One row per seed and labeled-set size: `acquisition,seed,num_labeled,accuracy`.
pub fn curve_csv(records: &[RunRecord]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["acquisition", "seed", "num_labeled", "accuracy"])
        .map_err(csv_error)?;
    for record in records {
        let name = match record.acquisition {
            Acquisition::Malady => "malady",
            Acquisition::Random => "random",
        };
        for row in &record.iterations {
            w.write_record([
                name.to_string(),
                record.seed.to_string(),
                row.num_labeled.to_string(),
                row.accuracy.to_string(),
            ])
            .map_err(csv_error)?;
        }
    }
    w.into_inner().map_err(|e| MaladyError::InvalidState(e.to_string()))
}
