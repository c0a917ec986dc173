use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{MaladyError, Result};
use crate::graph::FeatureMatrix;

/// Gaussian clusters with centres evenly spaced on the unit circle; cluster
/// `c` carries label `c mod 2`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticBlobsSpec {
    #[serde(default = "default_clusters")]
    pub clusters: usize,
    #[serde(default = "default_points")]
    pub points_per_cluster: usize,
    #[serde(default = "default_std")]
    pub std: f64,
}

fn default_clusters() -> usize {
    6
}

fn default_points() -> usize {
    400
}

fn default_std() -> f64 {
    0.25
}

impl Default for SyntheticBlobsSpec {
    fn default() -> Self {
        Self {
            clusters: default_clusters(),
            points_per_cluster: default_points(),
            std: default_std(),
        }
    }
}

impl SyntheticBlobsSpec {
    pub fn center(&self, cluster: usize) -> [f64; 2] {
        let angle = 2.0 * std::f64::consts::PI * cluster as f64 / self.clusters as f64;
        [angle.cos(), angle.sin()]
    }

    pub fn label(&self, cluster: usize) -> usize {
        cluster % 2
    }
}

/// Points are emitted cluster by cluster.
pub fn generate_blobs(spec: &SyntheticBlobsSpec, seed: u64) -> Result<(FeatureMatrix, Vec<usize>)> {
    if spec.clusters < 2 || spec.points_per_cluster == 0 {
        return Err(MaladyError::Config(format!(
            "blobs need at least two clusters and one point per cluster, got {} x {}",
            spec.clusters, spec.points_per_cluster
        )));
    }
    let noise = Normal::new(0.0, spec.std)
        .map_err(|e| MaladyError::Config(format!("invalid blob std {}: {e}", spec.std)))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = spec.clusters * spec.points_per_cluster;
    let mut values = Vec::with_capacity(2 * n);
    let mut labels = Vec::with_capacity(n);
    for c in 0..spec.clusters {
        let [cx, cy] = spec.center(c);
        for _ in 0..spec.points_per_cluster {
            values.push(cx + noise.sample(&mut rng));
            values.push(cy + noise.sample(&mut rng));
            labels.push(spec.label(c));
        }
    }
    Ok((FeatureMatrix::new(n, 2, values)?, labels))
}
