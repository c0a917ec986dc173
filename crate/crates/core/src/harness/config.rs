use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::active::{ALBudget, Acquisition};
use crate::auction::AuctionSchedule;
use crate::dynamics::{ClassBoundsSpec, ConcaveTermSpec, InitMode, SslConfig};
use crate::error::{MaladyError, Result};
use crate::graph::KernelSpec;

use super::blobs::SyntheticBlobsSpec;
use super::dataset::{load_dataset, load_label_file, resolve, DataFormat, Dataset, LabelColumn};

/// Where the points come from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum DatasetSpec {
    /// CSV features; labels in `label_column` (the last column when omitted).
    Csv {
        path: PathBuf,
        #[serde(default)]
        label_column: Option<usize>,
    },
    /// Raw binary features with labels in a separate one-per-line file.
    Binary { path: PathBuf, labels: PathBuf },
    Blobs {
        #[serde(default = "default_clusters")]
        clusters: usize,
        #[serde(default = "default_points")]
        points_per_cluster: usize,
        #[serde(default = "default_std")]
        std: f64,
        #[serde(default)]
        seed: u64,
    },
}

fn default_clusters() -> usize {
    SyntheticBlobsSpec::default().clusters
}

fn default_points() -> usize {
    SyntheticBlobsSpec::default().points_per_cluster
}

fn default_std() -> f64 {
    SyntheticBlobsSpec::default().std
}

impl DatasetSpec {
    /// Loads the points; relative paths are taken from `base`.
    pub fn load(&self, base: Option<&Path>) -> Result<Dataset> {
        let ds = match self {
            DatasetSpec::Csv { path, label_column } => {
                let column = label_column.map_or(LabelColumn::Last, LabelColumn::Index);
                load_dataset(&resolve(base, path), DataFormat::Csv, column)?
            }
            DatasetSpec::Binary { path, labels } => {
                let mut ds = load_dataset(&resolve(base, path), DataFormat::Binary, LabelColumn::None)?;
                let label_path = resolve(base, labels);
                let (dense, values) = load_label_file(&label_path)?;
                if dense.len() != ds.features.rows() {
                    return Err(MaladyError::Format {
                        path: label_path,
                        line: dense.len() as u64,
                        message: format!("{} labels for {} points", dense.len(), ds.features.rows()),
                    });
                }
                ds.labels = Some(dense);
                ds.label_values = values;
                ds
            }
            DatasetSpec::Blobs {
                clusters,
                points_per_cluster,
                std,
                seed,
            } => {
                let spec = SyntheticBlobsSpec {
                    clusters: *clusters,
                    points_per_cluster: *points_per_cluster,
                    std: *std,
                };
                let (features, labels) = super::blobs::generate_blobs(&spec, *seed)?;
                Dataset {
                    features,
                    labels: Some(labels),
                    label_values: vec![0, 1],
                }
            }
        };
        if ds.labels.is_none() {
            return Err(MaladyError::Config("experiments need labeled data".into()));
        }
        Ok(ds)
    }
}

/// Class-size information for the experiment; true sizes come from the data labels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "lowercase", deny_unknown_fields)]
pub enum BoundsMode {
    Exact,
    Flexible { slack: f64 },
    None,
}

impl BoundsMode {
    pub fn to_spec(self, labels: &[usize], num_classes: usize) -> ClassBoundsSpec {
        let mut sizes = vec![0; num_classes];
        for &l in labels {
            sizes[l] += 1;
        }
        match self {
            BoundsMode::Exact => ClassBoundsSpec::Exact { sizes },
            BoundsMode::Flexible { slack } => ClassBoundsSpec::Flexible { slack, sizes },
            BoundsMode::None => ClassBoundsSpec::None,
        }
    }
}

fn default_steps() -> usize {
    100
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub dataset: DatasetSpec,
    pub kernel: KernelSpec,
    pub bounds: BoundsMode,
    #[serde(default)]
    pub concave: ConcaveTermSpec,
    #[serde(default)]
    pub schedule: AuctionSchedule,
    #[serde(default = "default_steps")]
    pub steps: usize,
    #[serde(default)]
    pub time_step: Option<f64>,
    #[serde(default)]
    pub init: InitMode,
    pub budget: ALBudget,
    pub acquisition: Acquisition,
    pub seeds: Vec<u64>,
    pub output: PathBuf,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let config: Self = serde_json::from_str(text).map_err(|e| MaladyError::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    /// Reads a config file. Relative dataset and output paths are resolved
    /// against the file's directory.
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| MaladyError::io(path, e))?;
        let mut config = Self::from_json(&text)?;
        let base = path.parent().filter(|p| !p.as_os_str().is_empty());
        config.resolve_paths(base);
        Ok(config)
    }

    pub fn resolve_paths(&mut self, base: Option<&Path>) {
        match &mut self.dataset {
            DatasetSpec::Csv { path, .. } => *path = resolve(base, path),
            DatasetSpec::Binary { path, labels } => {
                *path = resolve(base, path);
                *labels = resolve(base, labels);
            }
            DatasetSpec::Blobs { .. } => {}
        }
        self.output = resolve(base, &self.output);
    }

    pub fn validate(&self) -> Result<()> {
        if self.seeds.is_empty() {
            return Err(MaladyError::Config("at least one seed is required".into()));
        }
        let mut seeds = self.seeds.clone();
        seeds.sort_unstable();
        if seeds.windows(2).any(|w| w[0] == w[1]) {
            return Err(MaladyError::Config("seeds must be distinct".into()));
        }
        self.schedule.validate()?;
        if let BoundsMode::Flexible { slack } = self.bounds {
            if !(0.0..=1.0).contains(&slack) {
                return Err(MaladyError::Config(format!("flexible slack must lie in [0, 1], got {slack}")));
            }
        }
        if self.budget.initial_per_class == 0 {
            return Err(MaladyError::Config("initial_per_class must be at least 1".into()));
        }
        Ok(())
    }

    /// First 16 hex digits of the SHA-256 of the canonical JSON of every field
    /// except `output`.
    pub fn hash(&self) -> String {
        let mut value = serde_json::to_value(self).expect("config serialises");
        if let Some(map) = value.as_object_mut() {
            map.remove("output");
        }
        let digest = Sha256::digest(value.to_string().as_bytes());
        hex::encode(digest)[..16].to_string()
    }

    pub fn ssl_config(&self, labels: &[usize], num_classes: usize) -> SslConfig {
        SslConfig {
            num_classes,
            bounds: self.bounds.to_spec(labels, num_classes),
            concave: self.concave.clone(),
            schedule: self.schedule,
            steps: self.steps,
            time_step: self.time_step,
            init: self.init,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const TOY: &str = r#"{
        "dataset": {"kind": "blobs", "seed": 0},
        "kernel": {"kind": "gaussian", "k_neighbors": 15},
        "bounds": {"mode": "exact"},
        "budget": {"initial_per_class": 3, "total": 16},
        "acquisition": "malady",
        "seeds": [0, 1],
        "output": "out"
    }"#;

    #[test]
    fn defaults_fill_in() {
        let c = ExperimentConfig::from_json(TOY).unwrap();
        assert_eq!(c.steps, 100);
        assert_eq!(c.schedule, AuctionSchedule::default());
        assert_eq!(c.init, InitMode::Random);
        assert_eq!(c.concave, ConcaveTermSpec::None);
        assert_eq!(
            c.dataset,
            DatasetSpec::Blobs {
                clusters: 6,
                points_per_cluster: 400,
                std: 0.25,
                seed: 0
            }
        );
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let bad = TOY.replace("\"seeds\"", "\"colour\": 1, \"seeds\"");
        assert!(matches!(ExperimentConfig::from_json(&bad), Err(MaladyError::Config(_))));
        let bad = TOY.replace("\"k_neighbors\": 15", "\"k_neighbors\": 15, \"sigma\": 1");
        assert!(ExperimentConfig::from_json(&bad).is_err());
        let bad = TOY.replace("\"seeds\": [0, 1]", "\"seeds\": []");
        assert!(ExperimentConfig::from_json(&bad).is_err());
    }

    #[test]
    fn hash_tracks_fields_but_not_output() {
        let a = ExperimentConfig::from_json(TOY).unwrap();
        let mut b = a.clone();
        b.output = PathBuf::from("elsewhere");
        assert_eq!(a.hash(), b.hash());
        b.steps = 99;
        assert_ne!(a.hash(), b.hash());
        let mut c = a.clone();
        c.acquisition = Acquisition::Random;
        assert_ne!(a.hash(), c.hash());
        assert_eq!(a.hash().len(), 16);
    }

    #[test]
    fn bounds_modes_use_label_counts() {
        let labels = [0, 1, 1, 2, 2, 2];
        assert_eq!(
            BoundsMode::Exact.to_spec(&labels, 3),
            ClassBoundsSpec::Exact { sizes: vec![1, 2, 3] }
        );
        assert_eq!(BoundsMode::None.to_spec(&labels, 3), ClassBoundsSpec::None);
    }
}
