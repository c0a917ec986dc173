//! Auction dynamics classifier.
//!
//! Each scheme step linearises the graph heat content (plus an optional
//! concave term) around the current partition, which turns the update into a
//! class-size constrained assignment problem over the unlabeled points with
//! coefficients `a_i(x) = 1 - g_i(x) - sum_{y not in class i} w(x, y)`. That
//! problem is solved with [`scaled_auction`]; labeled points never move.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::auction::{
    scaled_auction, AuctionSchedule, Bounds, CoefficientMatrix, Duals, Partition, UNASSIGNED,
};
use crate::error::{MaladyError, Result};
use crate::graph::SparseGraph;

/// Labeled points and their classes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabeledData {
    indices: Vec<usize>,
    labels: Vec<usize>,
}

impl LabeledData {
    pub fn new(indices: Vec<usize>, labels: Vec<usize>) -> Result<Self> {
        if indices.len() != labels.len() {
            return Err(MaladyError::InvalidInput(format!(
                "{} labeled indices but {} labels",
                indices.len(),
                labels.len()
            )));
        }
        let mut sorted = indices.clone();
        sorted.sort_unstable();
        if let Some(w) = sorted.windows(2).find(|w| w[0] == w[1]) {
            return Err(MaladyError::InvalidInput(format!(
                "point {} is labeled twice",
                w[0]
            )));
        }
        Ok(Self { indices, labels })
    }

    pub fn empty() -> Self {
        Self {
            indices: Vec::new(),
            labels: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn contains(&self, index: usize) -> bool {
        self.indices.contains(&index)
    }

    pub fn push(&mut self, index: usize, label: usize) -> Result<()> {
        if self.contains(index) {
            return Err(MaladyError::InvalidInput(format!("point {index} is already labeled")));
        }
        self.indices.push(index);
        self.labels.push(label);
        Ok(())
    }

    pub fn validate(&self, n: usize, num_classes: usize) -> Result<()> {
        for (&i, &l) in self.indices.iter().zip(&self.labels) {
            if i >= n {
                return Err(MaladyError::InvalidInput(format!(
                    "labeled index {i} out of range for {n} points"
                )));
            }
            if l >= num_classes {
                return Err(MaladyError::InvalidInput(format!(
                    "label {l} of point {i} is not below the class count {num_classes}"
                )));
            }
        }
        Ok(())
    }

    /// Number of labeled points per class.
    pub fn class_counts(&self, num_classes: usize) -> Vec<usize> {
        let mut counts = vec![0; num_classes];
        for &l in &self.labels {
            counts[l] += 1;
        }
        counts
    }

    /// Points not in the labeled set, ascending.
    pub fn complement(&self, n: usize) -> Vec<usize> {
        let mut is_labeled = vec![false; n];
        for &i in &self.indices {
            is_labeled[i] = true;
        }
        (0..n).filter(|&i| !is_labeled[i]).collect()
    }
}

/// Class size information used to bound the unlabeled class counts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "lowercase", deny_unknown_fields)]
pub enum ClassBoundsSpec {
    /// Class sizes are known exactly.
    Exact { sizes: Vec<usize> },
    /// Class sizes are known up to a relative slack in `[0, 1]`.
    Flexible { slack: f64, sizes: Vec<usize> },
    /// No size information.
    None,
}

/// Concave term added to the graph heat content.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum ConcaveTermSpec {
    #[default]
    None,
    /// `-gamma * sum_j (e_{l_j} - mean label vector) . u(x_j)` over labeled points.
    Poisson { gamma: f64 },
    /// `sum_x sum_i R_i(x) u_i(x)` with `r[x][i] = R_i(x)`.
    Linear { r: Vec<Vec<f64>> },
}

/// Dense `rows x classes` matrix of per-point, per-class reals.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassMatrix {
    rows: usize,
    classes: usize,
    values: Vec<f64>,
}

impl ClassMatrix {
    pub fn zeros(rows: usize, classes: usize) -> Self {
        Self {
            rows,
            classes,
            values: vec![0.0; rows * classes],
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn get(&self, x: usize, i: usize) -> f64 {
        self.values[x * self.classes + i]
    }

    pub fn row(&self, x: usize) -> &[f64] {
        &self.values[x * self.classes..(x + 1) * self.classes]
    }

    fn row_mut(&mut self, x: usize) -> &mut [f64] {
        &mut self.values[x * self.classes..(x + 1) * self.classes]
    }
}

/// Bounds on the unlabeled class counts.
///
/// Exact: `B = U = size - labeled`. Flexible(s): `B = floor((1-s)(size - labeled))`,
/// `U = ceil((1+s)(size - labeled))` clamped to `n_unlabeled`. None: `B = 0`, `U = n_unlabeled`.
pub fn derive_unlabeled_bounds(
    spec: &ClassBoundsSpec,
    labeled: &LabeledData,
    n_unlabeled: usize,
    num_classes: usize,
) -> Result<Bounds> {
    let remaining = |sizes: &[usize]| -> Result<Vec<usize>> {
        if sizes.len() != num_classes {
            return Err(MaladyError::Config(format!(
                "class sizes given for {} classes, expected {num_classes}",
                sizes.len()
            )));
        }
        let counts = labeled.class_counts(num_classes);
        sizes
            .iter()
            .zip(&counts)
            .enumerate()
            .map(|(i, (&size, &seen))| {
                size.checked_sub(seen).ok_or_else(|| {
                    MaladyError::Infeasible(format!(
                        "class {i} has {seen} labeled points but a true size of {size}"
                    ))
                })
            })
            .collect()
    };
    let bounds = match spec {
        ClassBoundsSpec::Exact { sizes } => Bounds::exact(remaining(sizes)?)?,
        ClassBoundsSpec::Flexible { slack, sizes } => {
            if !(0.0..=1.0).contains(slack) {
                return Err(MaladyError::Config(format!(
                    "flexible slack must lie in [0, 1], got {slack}"
                )));
            }
            let rest = remaining(sizes)?;
            // the 1e-9 guard keeps products such as 1.1 * 50 from rounding past an integer
            let lower = rest
                .iter()
                .map(|&r| (((1.0 - slack) * r as f64 + 1e-9).floor() as usize).min(n_unlabeled))
                .collect();
            let upper = rest
                .iter()
                .map(|&r| (((1.0 + slack) * r as f64 - 1e-9).ceil().max(0.0) as usize).min(n_unlabeled))
                .collect();
            Bounds::new(lower, upper)?
        }
        ClassBoundsSpec::None => Bounds::unconstrained(num_classes, n_unlabeled)?,
    };
    bounds.check_feasible(n_unlabeled)?;
    Ok(bounds)
}

/// How the unlabeled points are assigned before the first scheme step.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InitMode {
    /// Uniformly at random within the bounds (seeded).
    #[default]
    Random,
    /// Labels spread outwards from the labeled points, see [`propagated_partition`].
    Propagated,
}

/// Starting partition for the given mode.
pub fn initialize(
    graph: &SparseGraph,
    labeled: &LabeledData,
    bounds: &Bounds,
    mode: InitMode,
    seed: u64,
) -> Result<Partition> {
    match mode {
        InitMode::Random => initial_partition(graph, labeled, bounds, seed),
        InitMode::Propagated => propagated_partition(graph, labeled, bounds),
    }
}

/// Labeled points at their labels; unlabeled points spread uniformly at random
/// over the classes, lower bounds first, never exceeding an upper bound.
pub fn initial_partition(
    graph: &SparseGraph,
    labeled: &LabeledData,
    bounds: &Bounds,
    seed: u64,
) -> Result<Partition> {
    let n = graph.n();
    let k = bounds.num_classes();
    labeled.validate(n, k)?;
    let mut assignment = vec![UNASSIGNED; n];
    for (&i, &l) in labeled.indices().iter().zip(labeled.labels()) {
        assignment[i] = l;
    }
    let mut unlabeled = labeled.complement(n);
    bounds.check_feasible(unlabeled.len())?;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    unlabeled.shuffle(&mut rng);
    let mut counts = vec![0usize; k];
    let mut rest = unlabeled.into_iter();
    for class in 0..k {
        for x in rest.by_ref().take(bounds.lower()[class]) {
            assignment[x] = class;
            counts[class] += 1;
        }
    }
    for x in rest {
        let open: Vec<usize> = (0..k).filter(|&c| counts[c] < bounds.upper()[c]).collect();
        let class = open[rng.random_range(0..open.len())];
        assignment[x] = class;
        counts[class] += 1;
    }
    Partition::from_assignment(assignment, k)
}

/// Each unlabeled point takes the label of the labeled point that a
/// breadth-first search from all labeled points (in ascending index order)
/// reaches it from. Points are then committed in discovery order; a point is
/// sent elsewhere when its class is full or when the remaining points are
/// needed to meet other classes' lower bounds, so the far ends of each region
/// absorb the corrections. Unreached points come last, in index order.
pub fn propagated_partition(graph: &SparseGraph, labeled: &LabeledData, bounds: &Bounds) -> Result<Partition> {
    let n = graph.n();
    let k = bounds.num_classes();
    labeled.validate(n, k)?;
    let unlabeled = labeled.complement(n);
    bounds.check_feasible(unlabeled.len())?;

    let mut proposal = vec![UNASSIGNED; n];
    let mut sources: Vec<(usize, usize)> = labeled
        .indices()
        .iter()
        .copied()
        .zip(labeled.labels().iter().copied())
        .collect();
    sources.sort_unstable();
    let mut queue = std::collections::VecDeque::with_capacity(n);
    for &(x, l) in &sources {
        proposal[x] = l;
        queue.push_back(x);
    }
    let mut order = Vec::with_capacity(unlabeled.len());
    while let Some(v) = queue.pop_front() {
        for (u, _) in graph.row(v) {
            if proposal[u] == UNASSIGNED {
                proposal[u] = proposal[v];
                order.push(u);
                queue.push_back(u);
            }
        }
    }
    order.extend(unlabeled.iter().copied().filter(|&x| proposal[x] == UNASSIGNED));

    let (lower, upper) = (bounds.lower(), bounds.upper());
    let mut assignment = proposal;
    let mut counts = vec![0usize; k];
    let mut deficit: usize = lower.iter().sum();
    for (done, &x) in order.iter().enumerate() {
        let left_after = order.len() - done - 1;
        let c = assignment[x];
        let fits = c != UNASSIGNED && counts[c] < upper[c] && (counts[c] < lower[c] || left_after >= deficit);
        let class = if fits {
            c
        } else if deficit > 0 {
            (0..k).find(|&i| counts[i] < lower[i]).expect("positive deficit")
        } else {
            (0..k).find(|&i| counts[i] < upper[i]).expect("feasible bounds leave room")
        };
        if counts[class] < lower[class] {
            deficit -= 1;
        }
        counts[class] += 1;
        assignment[x] = class;
    }
    Partition::from_assignment(assignment, k)
}

/// Gradient of the concave term as an `n x num_classes` matrix.
pub fn concave_gradient(
    spec: &ConcaveTermSpec,
    labeled: &LabeledData,
    num_classes: usize,
    n: usize,
) -> Result<ClassMatrix> {
    let mut grad = ClassMatrix::zeros(n, num_classes);
    match spec {
        ConcaveTermSpec::None => {}
        ConcaveTermSpec::Poisson { gamma } => {
            if !(*gamma > 0.0 && gamma.is_finite()) {
                return Err(MaladyError::Config(format!(
                    "poisson gamma must be positive, got {gamma}"
                )));
            }
            labeled.validate(n, num_classes)?;
            if labeled.is_empty() {
                return Ok(grad);
            }
            let mean = mean_label_vector(labeled, num_classes);
            for (&x, &l) in labeled.indices().iter().zip(labeled.labels()) {
                for (i, g) in grad.row_mut(x).iter_mut().enumerate() {
                    let indicator = if i == l { 1.0 } else { 0.0 };
                    *g = -gamma * (indicator - mean[i]);
                }
            }
        }
        ConcaveTermSpec::Linear { r } => {
            if r.len() != n || r.iter().any(|row| row.len() != num_classes) {
                return Err(MaladyError::Config(format!(
                    "linear term must be a {n} x {num_classes} matrix"
                )));
            }
            for (x, row) in r.iter().enumerate() {
                if row.iter().any(|v| !v.is_finite()) {
                    return Err(MaladyError::Config(format!(
                        "linear term row {x} has a non-finite entry"
                    )));
                }
                grad.row_mut(x).copy_from_slice(row);
            }
        }
    }
    Ok(grad)
}

fn mean_label_vector(labeled: &LabeledData, num_classes: usize) -> Vec<f64> {
    let counts = labeled.class_counts(num_classes);
    counts
        .iter()
        .map(|&c| c as f64 / labeled.len() as f64)
        .collect()
}

/// Value of the concave term on a complete partition.
pub fn concave_energy(spec: &ConcaveTermSpec, labeled: &LabeledData, assignment: &[usize], num_classes: usize) -> f64 {
    match spec {
        ConcaveTermSpec::None => 0.0,
        ConcaveTermSpec::Poisson { gamma } => {
            if labeled.is_empty() {
                return 0.0;
            }
            let mean = mean_label_vector(labeled, num_classes);
            let dot: f64 = labeled
                .indices()
                .iter()
                .zip(labeled.labels())
                .map(|(&x, &l)| {
                    let c = assignment[x];
                    (if c == l { 1.0 } else { 0.0 }) - mean[c]
                })
                .sum();
            -gamma * dot
        }
        ConcaveTermSpec::Linear { r } => assignment.iter().enumerate().map(|(x, &c)| r[x][c]).sum(),
    }
}

/// Coefficients `a_i(x) = 1 - g_i(x) - sum_{y : class(y) != i} w(x, y)` for every
/// point in `unlabeled`, given a complete assignment of all graph nodes.
pub fn assignment_coefficients(
    graph: &SparseGraph,
    assignment: &[usize],
    grad: &ClassMatrix,
    unlabeled: &[usize],
) -> Result<CoefficientMatrix> {
    let k = grad.classes();
    if assignment.len() != graph.n() || grad.rows() != graph.n() {
        return Err(MaladyError::InvalidInput(format!(
            "assignment ({}) and gradient ({}) must cover all {} graph nodes",
            assignment.len(),
            grad.rows(),
            graph.n()
        )));
    }
    if let Some(x) = assignment.iter().position(|&c| c >= k) {
        return Err(MaladyError::InvalidInput(format!(
            "node {x} has no valid class in the current partition"
        )));
    }
    let values: Vec<f64> = unlabeled
        .par_iter()
        .flat_map_iter(|&x| {
            (0..k).map(move |i| {
                let mut cross = 0.0;
                for (y, w) in graph.row(x) {
                    if assignment[y] != i {
                        cross += w;
                    }
                }
                1.0 - grad.get(x, i) - cross
            })
        })
        .collect();
    CoefficientMatrix::new(unlabeled.to_vec(), k, values)
}

/// Graph heat content of a hard partition: the total weight of ordered pairs
/// `(x, y)` in different classes (twice the weighted cut).
pub fn ghc_energy(graph: &SparseGraph, assignment: &[usize]) -> f64 {
    (0..graph.n())
        .map(|x| {
            graph
                .row(x)
                .filter(|&(y, _)| assignment[y] != assignment[x])
                .map(|(_, w)| w)
                .sum::<f64>()
        })
        .sum()
}

/// Everything the classifier needs besides the graph, labels and seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SslConfig {
    pub num_classes: usize,
    pub bounds: ClassBoundsSpec,
    #[serde(default)]
    pub concave: ConcaveTermSpec,
    pub schedule: AuctionSchedule,
    pub steps: usize,
    /// Accepted for completeness; the scheme does not use a time step.
    #[serde(default)]
    pub time_step: Option<f64>,
    #[serde(default)]
    pub init: InitMode,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SslResult {
    /// Classes of all points, labeled ones included.
    pub partition: Partition,
    /// Duals of the last auction (zero when no step ran).
    pub duals: Duals,
    /// Coefficients of the last step, one row per unlabeled point.
    pub coefficients: CoefficientMatrix,
    /// Heat content plus concave term of the starting partition.
    pub initial_energy: f64,
    /// Energy after each executed step.
    pub energy_trace: Vec<f64>,
    pub final_epsilon: Option<f64>,
    pub unlabeled: Vec<usize>,
    pub bounds: Bounds,
}

/// Per-step progress record.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StepReport {
    pub step: usize,
    pub energy: f64,
    pub changed_points: usize,
    pub rounds_of_epsilon: usize,
}

pub fn ssl_classify(graph: &SparseGraph, labeled: &LabeledData, config: &SslConfig, seed: u64) -> Result<SslResult> {
    ssl_classify_observed(graph, labeled, config, seed, &mut |_| {})
}

/// Runs up to `config.steps` scheme steps, stopping early once a step leaves
/// the partition unchanged.
pub fn ssl_classify_observed(
    graph: &SparseGraph,
    labeled: &LabeledData,
    config: &SslConfig,
    seed: u64,
    observer: &mut dyn FnMut(&StepReport),
) -> Result<SslResult> {
    let k = config.num_classes;
    if k < 2 {
        return Err(MaladyError::InvalidParameter(format!(
            "classification needs at least two classes, got {k}"
        )));
    }
    let n = graph.n();
    labeled.validate(n, k)?;
    config.schedule.validate()?;
    let unlabeled = labeled.complement(n);
    let bounds = derive_unlabeled_bounds(&config.bounds, labeled, unlabeled.len(), k)?;
    let grad = concave_gradient(&config.concave, labeled, k, n)?;
    let energy = |assignment: &[usize]| {
        ghc_energy(graph, assignment) + concave_energy(&config.concave, labeled, assignment, k)
    };

    let mut assignment = initialize(graph, labeled, &bounds, config.init, seed)?
        .assignment()
        .to_vec();
    let initial_energy = energy(&assignment);
    let mut coefficients = assignment_coefficients(graph, &assignment, &grad, &unlabeled)?;
    let mut duals = Duals::zeros(k);
    let mut energy_trace = Vec::new();
    let mut final_epsilon = None;

    for step in 0..config.steps {
        if unlabeled.is_empty() {
            break;
        }
        if step > 0 {
            coefficients = assignment_coefficients(graph, &assignment, &grad, &unlabeled)?;
        }
        let outcome = scaled_auction(&coefficients, &bounds, &config.schedule, n)?;
        let mut changed = 0;
        for (r, &x) in unlabeled.iter().enumerate() {
            let class = outcome.partition.assignment()[r];
            if assignment[x] != class {
                assignment[x] = class;
                changed += 1;
            }
        }
        duals = outcome.duals;
        final_epsilon = Some(outcome.final_epsilon);
        let e = energy(&assignment);
        energy_trace.push(e);
        observer(&StepReport {
            step,
            energy: e,
            changed_points: changed,
            rounds_of_epsilon: outcome.rounds,
        });
        if changed == 0 {
            break;
        }
    }

    Ok(SslResult {
        partition: Partition::from_assignment(assignment, k)?,
        duals,
        coefficients,
        initial_energy,
        energy_trace,
        final_epsilon,
        unlabeled,
        bounds,
    })
}
