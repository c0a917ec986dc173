//! Experiment configuration, data loading, runs and verification.

pub mod blobs;
pub mod config;
pub mod dataset;
pub mod experiment;
pub mod metrics;
pub mod verify;

pub use blobs::{generate_blobs, SyntheticBlobsSpec};
pub use config::{BoundsMode, DatasetSpec, ExperimentConfig};
pub use dataset::{load_dataset, DataFormat, Dataset, LabelColumn};
pub use experiment::{run_experiment, Aggregate, CurvePoint, ExperimentReport};
pub use metrics::{accuracy, mean_std};
