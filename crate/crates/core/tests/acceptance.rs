//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits with a
//! failure status if any criterion fails.

use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use rayon::prelude::*;

use malady::active::{active_loop, initial_labeled_set, score_all, Acquisition, ActiveOutcome, Oracle};
use malady::dynamics::ssl_classify;
use malady::graph::{build_graph, FeatureMatrix, SparseGraph};
use malady::harness::config::BoundsMode;
use malady::harness::verify::{
    check_coefficients, check_energy_monotone, check_margin_invariances, check_near_optimality, check_two_stage,
    CheckReport,
};
use malady::harness::{accuracy, mean_std, run_experiment, DatasetSpec, ExperimentConfig, SyntheticBlobsSpec};

const SEED: u64 = 20240917;
const SEEDS: usize = 10;

struct Outcome {
    passed: bool,
    summary: String,
}

fn from_check(report: &CheckReport, extra: &str) -> Outcome {
    let mut summary = format!("{} cases, {} violations{extra}", report.cases, report.violations);
    if !report.passed() {
        summary.push_str(&format!("; worst {:e}: {}", report.worst, report.detail));
    }
    Outcome {
        passed: report.passed(),
        summary,
    }
}

fn config(name: &str) -> ExperimentConfig {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("configs").join(name);
    ExperimentConfig::from_file(&path).expect("shipped config loads")
}

fn criterion_1() -> Outcome {
    let start = Instant::now();
    let report = check_near_optimality(250, 1e-6, SEED).unwrap();
    let elapsed = start.elapsed();
    let mut out = from_check(&report, &format!(", {:.2} s", elapsed.as_secs_f64()));
    out.passed &= report.cases >= 200 && elapsed < Duration::from_secs(5);
    out
}

fn criteria_2_and_3() -> (Outcome, Outcome) {
    let (feasible, duals) = check_two_stage(250, SEED).unwrap();
    let mut a = from_check(&feasible, "");
    a.passed &= feasible.cases >= 200;
    (a, from_check(&duals, ""))
}

fn criterion_4() -> Outcome {
    from_check(&check_coefficients(50, 1e-12, SEED).unwrap(), " (tolerance 1e-12)")
}

fn criterion_5() -> Outcome {
    from_check(&check_margin_invariances(1000, SEED).unwrap(), " over 1000 score vectors")
}

fn criterion_6() -> Outcome {
    from_check(&check_energy_monotone(20, SEED).unwrap(), " over 20 seeds")
}

struct Toy {
    features: FeatureMatrix,
    spec: SyntheticBlobsSpec,
    graph: SparseGraph,
    oracle: Oracle,
    labels: Vec<usize>,
    config: ExperimentConfig,
}

fn toy() -> Toy {
    let config = config("toy_malady.json");
    let DatasetSpec::Blobs {
        clusters,
        points_per_cluster,
        std,
        ..
    } = config.dataset
    else {
        panic!("toy config uses blobs");
    };
    let spec = SyntheticBlobsSpec {
        clusters,
        points_per_cluster,
        std,
    };
    let dataset = config.dataset.load(None).unwrap();
    let labels = dataset.labels.unwrap();
    let graph = build_graph(&dataset.features, &config.kernel).unwrap();
    Toy {
        features: dataset.features,
        spec,
        graph,
        oracle: Oracle::new(labels.clone(), 2).unwrap(),
        labels,
        config,
    }
}

fn toy_runs(toy: &Toy, acquisition: Acquisition) -> Vec<ActiveOutcome> {
    let ssl = toy.config.ssl_config(&toy.labels, 2);
    (0..SEEDS as u64)
        .into_par_iter()
        .map(|seed| active_loop(&toy.graph, &toy.oracle, toy.config.budget, &ssl, seed, acquisition).unwrap())
        .collect()
}

/// Between oppositely labeled clusters: the nearest class-0 and nearest
/// class-1 centres are at distances differing by less than 0.5.
fn in_band(spec: &SyntheticBlobsSpec, p: &[f64]) -> bool {
    let mut nearest = [f64::INFINITY; 2];
    for c in 0..spec.clusters {
        let [cx, cy] = spec.center(c);
        let d = ((p[0] - cx).powi(2) + (p[1] - cy).powi(2)).sqrt();
        let l = spec.label(c);
        nearest[l] = nearest[l].min(d);
    }
    (nearest[0] - nearest[1]).abs() < 0.5
}

fn criterion_7(toy: &Toy, malady: &[ActiveOutcome]) -> Outcome {
    let fractions: Vec<f64> = malady
        .iter()
        .map(|out| {
            let scores = score_all(&out.final_result, &out.final_result.unlabeled).unwrap();
            let top = scores.top_fraction(0.1);
            let inside = top.iter().filter(|&&x| in_band(&toy.spec, toy.features.row(x))).count();
            inside as f64 / top.len() as f64
        })
        .collect();
    let base = (0..toy.features.rows())
        .filter(|&x| in_band(&toy.spec, toy.features.row(x)))
        .count() as f64
        / toy.features.rows() as f64;
    let (mean, std) = mean_std(&fractions);
    Outcome {
        passed: mean >= 0.6,
        summary: format!(
            "top-decile band fraction {mean:.3} +/- {std:.3} at iteration {} (threshold 0.60, all points {base:.3})",
            malady[0].record.iterations.len() - 1
        ),
    }
}

struct Comparison {
    passed: bool,
    summary: String,
}

fn compare(name: &str, malady: &[f64], random: &[f64], floor: Option<f64>) -> Comparison {
    let wins = malady.iter().zip(random).filter(|(m, r)| m > r).count();
    let (m_mean, m_std) = mean_std(malady);
    let (r_mean, r_std) = mean_std(random);
    let mut passed = m_mean > r_mean && wins >= 8;
    let mut summary = format!(
        "{name}: malady {m_mean:.4} +/- {m_std:.4} vs random {r_mean:.4} +/- {r_std:.4}, {wins}/{} wins",
        malady.len()
    );
    if let Some(floor) = floor {
        passed &= m_mean >= floor;
        summary.push_str(&format!(" (floor {floor})"));
    }
    Comparison { passed, summary }
}

fn finals(runs: &[ActiveOutcome]) -> Vec<f64> {
    runs.iter().map(|r| r.record.final_accuracy).collect()
}

fn digits_finals(name: &str, output: &Path) -> Vec<f64> {
    let mut config = config(name);
    config.output = output.to_path_buf();
    let report = run_experiment(&config).unwrap();
    assert!(report.aggregate.failures.is_empty(), "{:?}", report.aggregate.failures);
    let mut records = report.records;
    records.sort_by_key(|r| r.seed);
    records.iter().map(|r| r.final_accuracy).collect()
}

fn criterion_8(toy_malady: &[ActiveOutcome], toy_random: &[ActiveOutcome], toy_time: Duration) -> Outcome {
    let toy = compare("toy", &finals(toy_malady), &finals(toy_random), Some(0.90));
    let dir = tempfile::tempdir().unwrap();
    let digits = compare(
        "digits",
        &digits_finals("digits_malady.json", dir.path()),
        &digits_finals("digits_random.json", dir.path()),
        None,
    );
    let fast = toy_time < Duration::from_secs(600);
    Outcome {
        passed: toy.passed && digits.passed && fast,
        summary: format!(
            "{}; {}; toy suite {:.0} s (limit 600 s)",
            toy.summary,
            digits.summary,
            toy_time.as_secs_f64()
        ),
    }
}

fn criterion_9(toy: &Toy) -> Outcome {
    let mean_for = |mode: BoundsMode| {
        let mut config = toy.config.clone();
        config.bounds = mode;
        let ssl = config.ssl_config(&toy.labels, 2);
        let accs: Vec<f64> = (0..SEEDS as u64)
            .into_par_iter()
            .map(|seed| {
                let labeled = initial_labeled_set(&toy.oracle, config.budget.initial_per_class, seed).unwrap();
                let result = ssl_classify(&toy.graph, &labeled, &ssl, seed).unwrap();
                let eval = labeled.complement(toy.graph.n());
                accuracy(result.partition.assignment(), &toy.labels, &eval).unwrap()
            })
            .collect();
        mean_std(&accs).0
    };
    let exact = mean_for(BoundsMode::Exact);
    let none = mean_for(BoundsMode::None);
    Outcome {
        passed: exact >= none,
        summary: format!("initial-budget accuracy: exact {exact:.4} vs no bounds {none:.4}"),
    }
}

fn result_files(dir: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    let mut files: Vec<(PathBuf, Vec<u8>)> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|e| e == "csv") || p.ends_with("aggregate.json"))
        .map(|p| (PathBuf::from(p.file_name().unwrap()), std::fs::read(&p).unwrap()))
        .collect();
    files.sort();
    files
}

fn criterion_10() -> Outcome {
    let mut config = config("toy_malady.json");
    config.dataset = DatasetSpec::Blobs {
        clusters: 6,
        points_per_cluster: 60,
        std: 0.25,
        seed: 4,
    };
    config.budget.total = 16;
    config.seeds = vec![0, 1, 2];
    let mut listings = Vec::new();
    for acquisition in [Acquisition::Malady, Acquisition::Random] {
        config.acquisition = acquisition;
        for _ in 0..2 {
            let dir = tempfile::tempdir().unwrap();
            config.output = dir.path().to_path_buf();
            let report = run_experiment(&config).unwrap();
            listings.push(result_files(&report.directory));
        }
    }
    let same = listings[0] == listings[1] && listings[2] == listings[3];
    Outcome {
        passed: same && listings.iter().all(|l| l.len() == 5),
        summary: format!(
            "two reruns per acquisition, {} result files each, identical: {same}",
            listings[0].len()
        ),
    }
}

fn main() {
    let mut results: Vec<(usize, Outcome)> = vec![(1, criterion_1())];
    let (c2, c3) = criteria_2_and_3();
    results.push((2, c2));
    results.push((3, c3));
    results.push((4, criterion_4()));
    results.push((5, criterion_5()));
    results.push((6, criterion_6()));

    let toy = toy();
    let start = Instant::now();
    let malady = toy_runs(&toy, Acquisition::Malady);
    let random = toy_runs(&toy, Acquisition::Random);
    let toy_time = start.elapsed();
    results.push((7, criterion_7(&toy, &malady)));
    results.push((8, criterion_8(&malady, &random, toy_time)));
    results.push((9, criterion_9(&toy)));
    results.push((10, criterion_10()));

    let mut failed = 0;
    for (n, outcome) in &results {
        let status = if outcome.passed { "PASS" } else { "FAIL" };
        println!("criterion {n:>2}: {status}  {}", outcome.summary);
        failed += usize::from(!outcome.passed);
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
    println!("all {} acceptance criteria passed", results.len());
}
