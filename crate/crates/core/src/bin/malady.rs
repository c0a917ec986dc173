use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use malady::graph::{build_graph, KernelSpec};
use malady::harness::dataset::write_csv;
use malady::harness::verify::run_suite;
use malady::harness::{generate_blobs, load_dataset, run_experiment, DataFormat, ExperimentConfig, LabelColumn, SyntheticBlobsSpec};
use malady::{MaladyError, Result};

#[derive(Parser)]
#[command(name = "malady", version, about = "Auction-dynamics semi-supervised classification and active learning")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an active-learning experiment described by a JSON config.
    Run {
        #[arg(long)]
        config: PathBuf,
    },
    /// Write the six-cluster toy dataset as CSV (x, y, label).
    Blobs {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Build a kNN similarity graph from a CSV and write it as an edge list.
    Graph {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        k: usize,
        #[arg(long, value_enum, default_value_t = Kernel::Gaussian)]
        kernel: Kernel,
        /// `none`, `last`, or a zero-based column index holding labels to drop.
        #[arg(long, default_value = "none")]
        label_column: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the oracle-backed property suite.
    Verify {
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Kernel {
    Gaussian,
    Cosine,
}

fn parse_label_column(text: &str) -> Result<LabelColumn> {
    match text {
        "none" => Ok(LabelColumn::None),
        "last" => Ok(LabelColumn::Last),
        other => other
            .parse()
            .map(LabelColumn::Index)
            .map_err(|_| MaladyError::Config(format!("label column must be none, last or an index, got {other:?}"))),
    }
}

fn run(command: Command) -> Result<bool> {
    match command {
        Command::Run { config } => {
            let config = ExperimentConfig::from_file(&config)?;
            let report = run_experiment(&config)?;
            let agg = &report.aggregate;
            println!(
                "{} seeds, final accuracy {:.4} +/- {:.4}",
                report.records.len(),
                agg.final_mean,
                agg.final_std
            );
            for failure in &agg.failures {
                eprintln!("seed {} failed: {}", failure.seed, failure.error);
            }
            println!("results in {}", report.directory.display());
            Ok(agg.failures.is_empty())
        }
        Command::Blobs { seed, out } => {
            let (features, labels) = generate_blobs(&SyntheticBlobsSpec::default(), seed)?;
            write_csv(&out, &features, Some(&labels))?;
            println!("wrote {} points to {}", features.rows(), out.display());
            Ok(true)
        }
        Command::Graph {
            input,
            k,
            kernel,
            label_column,
            out,
        } => {
            let dataset = load_dataset(&input, DataFormat::Csv, parse_label_column(&label_column)?)?;
            let spec = match kernel {
                Kernel::Gaussian => KernelSpec::gaussian(k),
                Kernel::Cosine => KernelSpec::cosine(k),
            };
            let graph = build_graph(&dataset.features, &spec)?;
            graph.save_edge_list(&out)?;
            println!("{} nodes, {} stored weights -> {}", graph.n(), graph.nnz(), out.display());
            Ok(true)
        }
        Command::Verify { seed } => {
            let reports = run_suite(seed)?;
            let mut ok = true;
            for r in &reports {
                let status = if r.passed() { "PASS" } else { "FAIL" };
                println!("{status} {} ({} cases, {} violations)", r.name, r.cases, r.violations);
                if !r.passed() {
                    println!("     worst {:e}: {}", r.worst, r.detail);
                    ok = false;
                }
            }
            Ok(ok)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
