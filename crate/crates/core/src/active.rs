//! Margin-based acquisition and the sequential active-learning loop.

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dynamics::{ssl_classify, LabeledData, SslConfig, SslResult};
use crate::error::{MaladyError, Result};
use crate::graph::SparseGraph;
use crate::harness::metrics::accuracy;

/// `(M, v, w)` where `v` and `w` are the largest and second largest of
/// `a_i - p_i + t_i + eps` over classes and `M = v - w`.
pub fn margin(a_row: &[f64], p: &[f64], t: &[f64], eps: f64) -> Result<(f64, f64, f64)> {
    let k = a_row.len();
    if k < 2 {
        return Err(MaladyError::InvalidParameter(format!(
            "a margin needs at least two classes, got {k}"
        )));
    }
    if p.len() != k || t.len() != k {
        return Err(MaladyError::InvalidParameter(format!(
            "expected {k} prices and incentives, got {} and {}",
            p.len(),
            t.len()
        )));
    }
    // rank on the eps-free values so that M does not depend on eps at all
    let mut v = f64::NEG_INFINITY;
    let mut w = f64::NEG_INFINITY;
    for i in 0..k {
        let value = a_row[i] - p[i] + t[i];
        if value > v {
            w = v;
            v = value;
        } else if value > w {
            w = value;
        }
    }
    if !(v.is_finite() && w.is_finite()) {
        return Err(MaladyError::InvalidInput("margin inputs must be finite".into()));
    }
    Ok((v - w, v + eps, w + eps))
}

/// Acquisition values `A(x) = 1 - M(x)` for the unlabeled points.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AcquisitionScores {
    /// Point indices, in the order of `scores` and `margins`.
    pub points: Vec<usize>,
    pub scores: Vec<f64>,
    pub margins: Vec<f64>,
    /// Point with the largest score (lowest index among ties).
    pub best: usize,
}

impl AcquisitionScores {
    /// Points whose score is among the top `fraction` of all scores.
    pub fn top_fraction(&self, fraction: f64) -> Vec<usize> {
        let take = ((self.points.len() as f64 * fraction).ceil() as usize).min(self.points.len());
        let mut order: Vec<usize> = (0..self.points.len()).collect();
        order.sort_by(|&a, &b| {
            self.scores[b]
                .total_cmp(&self.scores[a])
                .then(self.points[a].cmp(&self.points[b]))
        });
        order.into_iter().take(take).map(|r| self.points[r]).collect()
    }
}

/// Scores every point in `unlabeled` from the last-step coefficients and duals
/// of `result`. The `+eps` in the margin cancels, so it is evaluated at zero.
pub fn score_all(result: &SslResult, unlabeled: &[usize]) -> Result<AcquisitionScores> {
    if unlabeled.is_empty() {
        return Err(MaladyError::InvalidState("no unlabeled points left to score".into()));
    }
    let a = &result.coefficients;
    let mut row_of = vec![usize::MAX; result.partition.len()];
    for (r, &x) in a.elements().iter().enumerate() {
        row_of[x] = r;
    }
    let (p, t) = (&result.duals.prices, &result.duals.incentives);
    let mut scores = Vec::with_capacity(unlabeled.len());
    let mut margins = Vec::with_capacity(unlabeled.len());
    let mut best: Option<(f64, usize)> = None;
    for &x in unlabeled {
        let r = row_of.get(x).copied().unwrap_or(usize::MAX);
        if r == usize::MAX {
            return Err(MaladyError::InvalidState(format!(
                "point {x} has no coefficients in the classifier result"
            )));
        }
        let (m, _, _) = margin(a.row(r), p, t, 0.0)?;
        let score = 1.0 - m;
        let better = match best {
            None => true,
            Some((s, b)) => score > s || (score == s && x < b),
        };
        if better {
            best = Some((score, x));
        }
        scores.push(score);
        margins.push(m);
    }
    Ok(AcquisitionScores {
        points: unlabeled.to_vec(),
        scores,
        margins,
        best: best.expect("nonempty").1,
    })
}

/// Ground-truth labels answering queries.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Oracle {
    labels: Vec<usize>,
    num_classes: usize,
}

impl Oracle {
    pub fn new(labels: Vec<usize>, num_classes: usize) -> Result<Self> {
        if let Some(x) = labels.iter().position(|&l| l >= num_classes) {
            return Err(MaladyError::InvalidInput(format!(
                "oracle label {} of point {x} is not below {num_classes}",
                labels[x]
            )));
        }
        Ok(Self { labels, num_classes })
    }

    pub fn label(&self, x: usize) -> usize {
        self.labels[x]
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

/// Initial labels per class and the final labeled-set size `T`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ALBudget {
    pub initial_per_class: usize,
    pub total: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Acquisition {
    Malady,
    Random,
}

/// Accuracy of the classifier run on `num_labeled` labels, and the point
/// queried next (none on the final row).
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct IterationRecord {
    pub iteration: usize,
    pub num_labeled: usize,
    pub query_index: Option<usize>,
    pub accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunRecord {
    pub seed: u64,
    pub acquisition: Acquisition,
    pub initial_labeled: Vec<usize>,
    pub iterations: Vec<IterationRecord>,
    pub final_accuracy: f64,
    /// True when the final evaluation set was empty.
    pub exhausted: bool,
}

impl RunRecord {
    pub fn queries(&self) -> Vec<usize> {
        self.iterations.iter().filter_map(|r| r.query_index).collect()
    }
}

/// Result of one active-learning run.
#[derive(Debug, Clone)]
pub struct ActiveOutcome {
    pub record: RunRecord,
    /// Classifier run on the final labeled set.
    pub final_result: SslResult,
    /// Scores computed just before the last query (none when no query was made).
    pub last_scores: Option<AcquisitionScores>,
}

const STREAM_INITIAL: u64 = 1;
const STREAM_QUERY: u64 = 2;
const STREAM_SSL: u64 = 3;

/// Independent seed for one random stream of a run.
pub(crate) fn stream_seed(seed: u64, stream: u64, index: u64) -> u64 {
    let mut z = seed
        .wrapping_add(stream.wrapping_mul(0x9E37_79B9_7F4A_7C15))
        .wrapping_add(index.wrapping_mul(0xD1B5_4A32_D192_ED03));
    // splitmix64 finaliser
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// `initial_per_class` points of every class drawn uniformly without replacement.
pub fn initial_labeled_set(oracle: &Oracle, initial_per_class: usize, seed: u64) -> Result<LabeledData> {
    let mut rng = ChaCha8Rng::seed_from_u64(stream_seed(seed, STREAM_INITIAL, 0));
    let mut indices = Vec::new();
    let mut labels = Vec::new();
    for class in 0..oracle.num_classes() {
        let members: Vec<usize> = (0..oracle.len()).filter(|&x| oracle.label(x) == class).collect();
        if members.len() < initial_per_class {
            return Err(MaladyError::InvalidParameter(format!(
                "class {class} has {} points, fewer than {initial_per_class} initial labels",
                members.len()
            )));
        }
        for &x in members.choose_multiple(&mut rng, initial_per_class) {
            indices.push(x);
            labels.push(class);
        }
    }
    LabeledData::new(indices, labels)
}

pub fn malady_loop(
    graph: &SparseGraph,
    oracle: &Oracle,
    budget: ALBudget,
    config: &SslConfig,
    seed: u64,
) -> Result<ActiveOutcome> {
    active_loop(graph, oracle, budget, config, seed, Acquisition::Malady)
}

pub fn random_loop(
    graph: &SparseGraph,
    oracle: &Oracle,
    budget: ALBudget,
    config: &SslConfig,
    seed: u64,
) -> Result<ActiveOutcome> {
    active_loop(graph, oracle, budget, config, seed, Acquisition::Random)
}

/// Classify, evaluate, query, label, until `budget.total` points are labeled,
/// then classify once more. Every classifier run contributes one row.
pub fn active_loop(
    graph: &SparseGraph,
    oracle: &Oracle,
    budget: ALBudget,
    config: &SslConfig,
    seed: u64,
    acquisition: Acquisition,
) -> Result<ActiveOutcome> {
    let n = graph.n();
    if oracle.len() != n {
        return Err(MaladyError::InvalidInput(format!(
            "oracle covers {} points but the graph has {n}",
            oracle.len()
        )));
    }
    if oracle.num_classes() != config.num_classes {
        return Err(MaladyError::Config(format!(
            "oracle has {} classes but the classifier is configured for {}",
            oracle.num_classes(),
            config.num_classes
        )));
    }
    if budget.total > n {
        return Err(MaladyError::InvalidParameter(format!(
            "budget {} exceeds the {n} available points",
            budget.total
        )));
    }
    let mut labeled = initial_labeled_set(oracle, budget.initial_per_class, seed)?;
    if budget.total < labeled.len() {
        return Err(MaladyError::InvalidParameter(format!(
            "budget {} is below the {} initial labels",
            budget.total,
            labeled.len()
        )));
    }
    let initial_labeled = labeled.indices().to_vec();
    let mut query_rng = ChaCha8Rng::seed_from_u64(stream_seed(seed, STREAM_QUERY, 0));
    let mut iterations = Vec::new();
    let mut last_scores = None;

    for iteration in 0.. {
        let result = ssl_classify(graph, &labeled, config, stream_seed(seed, STREAM_SSL, iteration as u64))?;
        let unlabeled = result.unlabeled.clone();
        let acc = accuracy(result.partition.assignment(), oracle.labels(), &unlabeled)?;
        if labeled.len() >= budget.total {
            iterations.push(IterationRecord {
                iteration,
                num_labeled: labeled.len(),
                query_index: None,
                accuracy: acc,
            });
            let record = RunRecord {
                seed,
                acquisition,
                initial_labeled,
                iterations,
                final_accuracy: acc,
                exhausted: unlabeled.is_empty(),
            };
            return Ok(ActiveOutcome {
                record,
                final_result: result,
                last_scores,
            });
        }
        let query = match acquisition {
            Acquisition::Malady => {
                let scores = score_all(&result, &unlabeled)?;
                let best = scores.best;
                last_scores = Some(scores);
                best
            }
            Acquisition::Random => unlabeled[query_rng.random_range(0..unlabeled.len())],
        };
        iterations.push(IterationRecord {
            iteration,
            num_labeled: labeled.len(),
            query_index: Some(query),
            accuracy: acc,
        });
        labeled.push(query, oracle.label(query))?;
    }
    unreachable!("the loop returns once the budget is spent")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::auction::AuctionSchedule;
    use crate::dynamics::ClassBoundsSpec;

    #[test]
    fn margin_examples() {
        let (m, v, w) = margin(&[0.9, 0.4], &[0.1, 0.0], &[0.0, 0.05], 0.01).unwrap();
        assert!((v - 0.81).abs() < 1e-15 && (w - 0.46).abs() < 1e-15);
        assert!((m - 0.35).abs() < 1e-15);
        assert_eq!(margin(&[0.3, 0.3, 0.3], &[0.0; 3], &[0.0; 3], 0.0).unwrap().0, 0.0);
        assert!(matches!(
            margin(&[1.0], &[0.0], &[0.0], 0.0),
            Err(MaladyError::InvalidParameter(_))
        ));
    }

    #[test]
    fn stream_seeds_differ() {
        let s: Vec<u64> = (0..4).map(|i| stream_seed(7, STREAM_SSL, i)).collect();
        assert!(s.windows(2).all(|w| w[0] != w[1]));
        assert_ne!(stream_seed(7, STREAM_QUERY, 0), stream_seed(7, STREAM_INITIAL, 0));
    }

    fn two_clusters() -> (SparseGraph, Oracle) {
        // two cliques of five joined by one weak edge
        let mut e = Vec::new();
        for block in [0usize, 5] {
            for i in block..block + 5 {
                for j in block..block + 5 {
                    if i != j {
                        e.push((i, j, 1.0));
                    }
                }
            }
        }
        e.push((4, 5, 0.1));
        e.push((5, 4, 0.1));
        let g = SparseGraph::from_triplets(10, e).unwrap();
        let oracle = Oracle::new(vec![0, 0, 0, 0, 0, 1, 1, 1, 1, 1], 2).unwrap();
        (g, oracle)
    }

    fn config() -> SslConfig {
        SslConfig {
            num_classes: 2,
            bounds: ClassBoundsSpec::Exact { sizes: vec![5, 5] },
            concave: Default::default(),
            schedule: AuctionSchedule {
                epsilon0: 1e-3,
                epsilon_min: 1e-6,
                alpha: 4.0,
            },
            steps: 10,
            time_step: None,
            init: Default::default(),
        }
    }

    #[test]
    fn zero_queries_when_budget_equals_initial_set() {
        let (g, oracle) = two_clusters();
        let out = malady_loop(&g, &oracle, ALBudget { initial_per_class: 1, total: 2 }, &config(), 0).unwrap();
        assert_eq!(out.record.iterations.len(), 1);
        assert!(out.record.queries().is_empty());
        assert_eq!(out.record.final_accuracy, 1.0);
    }

    #[test]
    fn exhausting_the_pool_labels_everything() {
        let (g, oracle) = two_clusters();
        let budget = ALBudget { initial_per_class: 1, total: 10 };
        let out = random_loop(&g, &oracle, budget, &config(), 4).unwrap();
        let mut q = out.record.queries();
        q.extend(&out.record.initial_labeled);
        q.sort_unstable();
        assert_eq!(q, (0..10).collect::<Vec<_>>());
        assert!(out.record.exhausted);
        assert_eq!(out.record.final_accuracy, 1.0);
        let sizes: Vec<usize> = out.record.iterations.iter().map(|r| r.num_labeled).collect();
        assert_eq!(sizes, (2..=10).collect::<Vec<_>>());
    }

    #[test]
    fn runs_are_deterministic() {
        let (g, oracle) = two_clusters();
        let budget = ALBudget { initial_per_class: 1, total: 6 };
        for acq in [Acquisition::Malady, Acquisition::Random] {
            let a = active_loop(&g, &oracle, budget, &config(), 3, acq).unwrap();
            let b = active_loop(&g, &oracle, budget, &config(), 3, acq).unwrap();
            assert_eq!(a.record, b.record);
        }
    }

    #[test]
    fn budget_validation() {
        let (g, oracle) = two_clusters();
        let too_big = ALBudget { initial_per_class: 1, total: 11 };
        assert!(matches!(
            malady_loop(&g, &oracle, too_big, &config(), 0),
            Err(MaladyError::InvalidParameter(_))
        ));
        let too_small = ALBudget { initial_per_class: 2, total: 3 };
        assert!(malady_loop(&g, &oracle, too_small, &config(), 0).is_err());
    }
}
