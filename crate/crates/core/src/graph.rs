//! Symmetric kNN similarity graphs.
//!
//! Points are connected to their exact `k` nearest neighbours, weighted with a
//! Gaussian or angular (cosine) kernel, and the directed weight matrix is
//! symmetrised as `(W_ij + W_ji) / 2`. The result is stored as compressed
//! sparse rows with columns sorted ascending.

use std::cmp::Ordering;
use std::io::Write;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{MaladyError, Result};

/// Lower clamp applied to local kernel scales so coincident points do not divide by zero.
pub const SIGMA_FLOOR: f64 = 1e-12;

/// Dense row-major `rows x dims` feature matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    rows: usize,
    dims: usize,
    values: Vec<f64>,
}

impl FeatureMatrix {
    pub fn new(rows: usize, dims: usize, values: Vec<f64>) -> Result<Self> {
        if rows == 0 || dims == 0 {
            return Err(MaladyError::InvalidInput(format!(
                "feature matrix must be non-empty, got {rows}x{dims}"
            )));
        }
        if values.len() != rows * dims {
            return Err(MaladyError::InvalidInput(format!(
                "expected {} values for a {rows}x{dims} matrix, got {}",
                rows * dims,
                values.len()
            )));
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            return Err(MaladyError::InvalidInput(format!(
                "non-finite feature at row {}, column {}",
                pos / dims,
                pos % dims
            )));
        }
        Ok(Self { rows, dims, values })
    }

    /// Builds a matrix from equal-length rows.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let dims = rows.first().map(Vec::len).unwrap_or(0);
        let mut values = Vec::with_capacity(rows.len() * dims);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != dims {
                return Err(MaladyError::InvalidInput(format!(
                    "row {i} has {} columns, expected {dims}",
                    row.len()
                )));
            }
            values.extend_from_slice(row);
        }
        Self::new(rows.len(), dims, values)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn dims(&self) -> usize {
        self.dims
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.dims..(i + 1) * self.dims]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Returns a copy with rows reordered so that output row `r` is input row `order[r]`.
    pub fn permuted(&self, order: &[usize]) -> Self {
        let mut values = Vec::with_capacity(self.values.len());
        for &r in order {
            values.extend_from_slice(self.row(r));
        }
        Self {
            rows: order.len(),
            dims: self.dims,
            values,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    Euclidean,
    Angular,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KernelKind {
    /// `exp(-d^2 / (sigma_i sigma_j))` on Euclidean distances.
    Gaussian,
    /// `exp(-d^2 / (sigma_i sigma_j))` on angular distances.
    Cosine,
}

impl KernelKind {
    pub fn metric(self) -> Metric {
        match self {
            KernelKind::Gaussian => Metric::Euclidean,
            KernelKind::Cosine => Metric::Angular,
        }
    }
}

/// Kernel bandwidth: one global `sigma`, or per-point scales read off the
/// distance to the `M`-th nearest neighbour.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KernelScale {
    Global(f64),
    Local(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KernelSpec {
    pub kind: KernelKind,
    pub k_neighbors: usize,
    /// Defaults to local scaling: rank `ceil(k/2)` for Gaussian, rank `k` for cosine.
    #[serde(default)]
    pub scale: Option<KernelScale>,
}

impl KernelSpec {
    pub fn gaussian(k_neighbors: usize) -> Self {
        Self {
            kind: KernelKind::Gaussian,
            k_neighbors,
            scale: None,
        }
    }

    pub fn cosine(k_neighbors: usize) -> Self {
        Self {
            kind: KernelKind::Cosine,
            k_neighbors,
            scale: None,
        }
    }

    pub fn with_scale(mut self, scale: KernelScale) -> Self {
        self.scale = Some(scale);
        self
    }

    pub fn resolved_scale(&self) -> KernelScale {
        self.scale.unwrap_or(match self.kind {
            KernelKind::Gaussian => KernelScale::Local(self.k_neighbors.div_ceil(2).max(1)),
            KernelKind::Cosine => KernelScale::Local(self.k_neighbors),
        })
    }

    pub fn validate(&self, n_points: usize) -> Result<()> {
        if self.k_neighbors == 0 || self.k_neighbors >= n_points {
            return Err(MaladyError::InvalidParameter(format!(
                "k_neighbors must satisfy 1 <= k < N (k = {}, N = {n_points})",
                self.k_neighbors
            )));
        }
        match self.resolved_scale() {
            KernelScale::Global(sigma) if !(sigma > 0.0 && sigma.is_finite()) => {
                Err(MaladyError::InvalidParameter(format!(
                    "global sigma must be positive and finite, got {sigma}"
                )))
            }
            KernelScale::Local(m) if m == 0 || m > self.k_neighbors => {
                Err(MaladyError::InvalidParameter(format!(
                    "local scale rank must satisfy 1 <= M <= k (M = {m}, k = {})",
                    self.k_neighbors
                )))
            }
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Neighbor {
    pub index: usize,
    pub distance: f64,
}

pub fn euclidean_distance(x: &[f64], y: &[f64]) -> f64 {
    x.iter()
        .zip(y)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt()
}

/// Angle between two nonzero vectors, in `[0, pi]`.
pub fn angular_distance(x: &[f64], y: &[f64]) -> Result<f64> {
    let nx = x.iter().map(|v| v * v).sum::<f64>().sqrt();
    let ny = y.iter().map(|v| v * v).sum::<f64>().sqrt();
    if nx == 0.0 || ny == 0.0 {
        return Err(MaladyError::InvalidInput(
            "angular distance is undefined for a zero vector".into(),
        ));
    }
    // 2 atan2(|x^ - y^|, |x^ + y^|) stays accurate for nearly parallel vectors, unlike acos
    let (mut diff, mut sum) = (0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (u, v) = (a / nx, b / ny);
        diff += (u - v) * (u - v);
        sum += (u + v) * (u + v);
    }
    Ok(2.0 * diff.sqrt().atan2(sum.sqrt()))
}

/// Exact k nearest neighbours of every point, excluding the point itself.
///
/// Each list is sorted by ascending distance; equal distances are ordered by index.
pub fn knn_search(features: &FeatureMatrix, k: usize, metric: Metric) -> Result<Vec<Vec<Neighbor>>> {
    let n = features.rows();
    if k == 0 || k >= n {
        return Err(MaladyError::InvalidParameter(format!(
            "knn requires 1 <= k < N (k = {k}, N = {n})"
        )));
    }
    if metric == Metric::Angular {
        if let Some(i) = (0..n).find(|&i| features.row(i).iter().all(|&v| v == 0.0)) {
            return Err(MaladyError::InvalidInput(format!(
                "row {i} is a zero vector; angular distance is undefined"
            )));
        }
    }
    let lists = (0..n)
        .into_par_iter()
        .map(|i| {
            let xi = features.row(i);
            let mut cand: Vec<Neighbor> = (0..n)
                .filter(|&j| j != i)
                .map(|j| {
                    let xj = features.row(j);
                    let distance = match metric {
                        Metric::Euclidean => euclidean_distance(xi, xj),
                        // zero rows were rejected above
                        Metric::Angular => angular_distance(xi, xj).unwrap_or(f64::NAN),
                    };
                    Neighbor { index: j, distance }
                })
                .collect();
            let by_dist = |a: &Neighbor, b: &Neighbor| {
                a.distance
                    .partial_cmp(&b.distance)
                    .unwrap_or(Ordering::Equal)
                    .then(a.index.cmp(&b.index))
            };
            if k < cand.len() {
                cand.select_nth_unstable_by(k - 1, by_dist);
                cand.truncate(k);
            }
            cand.sort_by(by_dist);
            cand
        })
        .collect();
    Ok(lists)
}

/// `exp(-dist^2 / sigma^2)`.
pub fn gaussian_weight(dist: f64, sigma: f64) -> Result<f64> {
    if sigma.is_nan() || sigma <= 0.0 {
        return Err(MaladyError::InvalidParameter(format!(
            "sigma must be positive, got {sigma}"
        )));
    }
    if dist.is_nan() || dist < 0.0 {
        return Err(MaladyError::InvalidParameter(format!(
            "distance must be nonnegative, got {dist}"
        )));
    }
    Ok((-(dist * dist) / (sigma * sigma)).exp())
}

/// `exp(-theta^2 / (sigma_i sigma_j))` where `theta` is the angle between `xi` and `xj`.
///
/// Scales below [`SIGMA_FLOOR`] are clamped to it.
pub fn cosine_local_weight(xi: &[f64], xj: &[f64], sigma_i: f64, sigma_j: f64) -> Result<f64> {
    if sigma_i.is_nan() || sigma_j.is_nan() || sigma_i < 0.0 || sigma_j < 0.0 {
        return Err(MaladyError::InvalidParameter(format!(
            "local scales must be nonnegative, got {sigma_i} and {sigma_j}"
        )));
    }
    let theta = angular_distance(xi, xj)?;
    Ok(local_kernel(theta, sigma_i, sigma_j))
}

fn local_kernel(dist: f64, sigma_i: f64, sigma_j: f64) -> f64 {
    if dist == 0.0 {
        return 1.0;
    }
    let si = sigma_i.max(SIGMA_FLOOR);
    let sj = sigma_j.max(SIGMA_FLOOR);
    (-(dist * dist) / (si * sj)).exp()
}

type WeightFn = dyn Fn(usize, &Neighbor) -> f64 + Sync;

/// Builds the symmetric kNN graph described by `spec`.
pub fn build_graph(features: &FeatureMatrix, spec: &KernelSpec) -> Result<SparseGraph> {
    let n = features.rows();
    spec.validate(n)?;
    let neighbors = knn_search(features, spec.k_neighbors, spec.kind.metric())?;

    let weight: Box<WeightFn> = match spec.resolved_scale() {
        KernelScale::Global(sigma) => Box::new(move |_, nb: &Neighbor| {
            (-(nb.distance * nb.distance) / (sigma * sigma)).exp()
        }),
        KernelScale::Local(m) => {
            let scales: Vec<f64> = neighbors
                .iter()
                .map(|list| {
                    let d = list[m - 1].distance;
                    match spec.kind {
                        KernelKind::Gaussian => d,
                        // the local cosine parameter is the square of the M-th angular distance
                        KernelKind::Cosine => d * d,
                    }
                })
                .collect();
            Box::new(move |i, nb: &Neighbor| local_kernel(nb.distance, scales[i], scales[nb.index]))
        }
    };

    let mut directed: Vec<(usize, usize, f64)> = neighbors
        .iter()
        .enumerate()
        .flat_map(|(i, list)| list.iter().map(move |nb| (i, nb)))
        .map(|(i, nb)| (i, nb.index, weight(i, nb)))
        .collect();
    directed.sort_by_key(|&(i, j, _)| (i, j));
    symmetrize(n, &directed)
}

/// Averages a directed weight list `(i, j, w)` with its transpose; absent entries count as 0.
///
/// `directed` must be sorted by `(i, j)` without duplicates.
pub fn symmetrize(n: usize, directed: &[(usize, usize, f64)]) -> Result<SparseGraph> {
    let find = |i: usize, j: usize| -> Option<f64> {
        directed
            .binary_search_by(|e| (e.0, e.1).cmp(&(i, j)))
            .ok()
            .map(|pos| directed[pos].2)
    };
    let mut entries = Vec::with_capacity(2 * directed.len());
    for &(i, j, w) in directed {
        if i == j {
            continue;
        }
        let reverse = find(j, i);
        // a mutual pair is emitted once, from its lower-indexed end
        if reverse.is_some() && i > j {
            continue;
        }
        let (lo, hi) = if i < j { (i, j) } else { (j, i) };
        let (w_lo_hi, w_hi_lo) = if i == lo {
            (w, reverse.unwrap_or(0.0))
        } else {
            (reverse.unwrap_or(0.0), w)
        };
        let avg = (w_lo_hi + w_hi_lo) / 2.0;
        if avg > 0.0 {
            entries.push((lo, hi, avg));
            entries.push((hi, lo, avg));
        }
    }
    SparseGraph::from_triplets(n, entries)
}

/// Symmetric weighted graph in compressed sparse row form.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseGraph {
    offsets: Vec<usize>,
    cols: Vec<usize>,
    weights: Vec<f64>,
    degree: Vec<f64>,
}

impl SparseGraph {
    /// Builds a graph from `(row, col, weight)` triplets that already contain both
    /// orientations of every edge.
    pub fn from_triplets(n: usize, mut entries: Vec<(usize, usize, f64)>) -> Result<Self> {
        entries.sort_by_key(|&(i, j, _)| (i, j));
        if let Some(w) = entries.windows(2).find(|w| (w[0].0, w[0].1) == (w[1].0, w[1].1)) {
            return Err(MaladyError::InvalidInput(format!(
                "duplicate edge ({}, {})",
                w[0].0, w[0].1
            )));
        }
        let mut offsets = vec![0usize; n + 1];
        let mut cols = Vec::with_capacity(entries.len());
        let mut weights = Vec::with_capacity(entries.len());
        for &(i, j, w) in &entries {
            if i >= n || j >= n {
                return Err(MaladyError::InvalidInput(format!(
                    "edge ({i}, {j}) out of range for {n} nodes"
                )));
            }
            if !(w >= 0.0 && w.is_finite()) {
                return Err(MaladyError::InvalidInput(format!(
                    "edge ({i}, {j}) has invalid weight {w}"
                )));
            }
            offsets[i + 1] += 1;
            cols.push(j);
            weights.push(w);
        }
        for i in 0..n {
            offsets[i + 1] += offsets[i];
        }
        let mut graph = Self {
            offsets,
            cols,
            weights,
            degree: Vec::new(),
        };
        for i in 0..n {
            for (j, w) in graph.row(i) {
                if graph.weight(j, i).map(f64::to_bits) != Some(w.to_bits()) {
                    return Err(MaladyError::InvalidInput(format!(
                        "edge ({i}, {j}) has no matching reverse edge"
                    )));
                }
            }
        }
        graph.degree = (0..n).map(|i| graph.row(i).map(|(_, w)| w).sum()).collect();
        Ok(graph)
    }

    /// Builds a graph from a dense symmetric matrix. Zero entries are dropped;
    /// diagonal entries are kept as self-loops.
    pub fn from_dense(w: &[Vec<f64>]) -> Result<Self> {
        let n = w.len();
        let mut entries = Vec::new();
        for (i, row) in w.iter().enumerate() {
            if row.len() != n {
                return Err(MaladyError::InvalidInput(format!(
                    "dense weight matrix row {i} has {} entries, expected {n}",
                    row.len()
                )));
            }
            for (j, &v) in row.iter().enumerate() {
                if v.to_bits() != w[j][i].to_bits() {
                    return Err(MaladyError::InvalidInput(format!(
                        "dense weight matrix is not symmetric at ({i}, {j})"
                    )));
                }
                if v != 0.0 {
                    entries.push((i, j, v));
                }
            }
        }
        Self::from_triplets(n, entries)
    }

    pub fn n(&self) -> usize {
        self.offsets.len() - 1
    }

    pub fn nnz(&self) -> usize {
        self.cols.len()
    }

    /// `(column, weight)` pairs of row `i`, ascending by column.
    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let range = self.offsets[i]..self.offsets[i + 1];
        self.cols[range.clone()]
            .iter()
            .copied()
            .zip(self.weights[range].iter().copied())
    }

    pub fn row_len(&self, i: usize) -> usize {
        self.offsets[i + 1] - self.offsets[i]
    }

    pub fn degree(&self, i: usize) -> f64 {
        self.degree[i]
    }

    pub fn weight(&self, i: usize, j: usize) -> Option<f64> {
        let range = self.offsets[i]..self.offsets[i + 1];
        self.cols[range.clone()]
            .binary_search(&j)
            .ok()
            .map(|pos| self.weights[range.start + pos])
    }

    /// All stored entries `(i, j, w)` in row-major order.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.n()).flat_map(move |i| self.row(i).map(move |(j, w)| (i, j, w)))
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let n = self.n();
        let mut dense = vec![vec![0.0; n]; n];
        for (i, j, w) in self.edges() {
            dense[i][j] = w;
        }
        dense
    }

    /// Writes the edge list as `i,j,w` lines.
    pub fn write_edge_list<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        for (i, j, w) in self.edges() {
            writeln!(out, "{i},{j},{w}")?;
        }
        Ok(())
    }

    pub fn save_edge_list(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path).map_err(|e| MaladyError::io(path, e))?;
        let mut out = std::io::BufWriter::new(file);
        self.write_edge_list(&mut out)
            .and_then(|_| out.flush())
            .map_err(|e| MaladyError::io(path, e))
    }
}
