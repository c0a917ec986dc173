//! Python bindings: graph construction, auctions, the auction-dynamics
//! classifier, margin scores, active-learning loops and experiment runs.

use std::path::PathBuf;

use pyo3::create_exception;
use pyo3::exceptions::{PyException, PyOSError, PyValueError};
use pyo3::prelude::*;

use malady::active::{self, ALBudget, Acquisition, Oracle};
use malady::auction::{self, AuctionSchedule, Bounds, CoefficientMatrix, Duals};
use malady::dynamics::{self, ClassBoundsSpec, ConcaveTermSpec, InitMode, LabeledData, SslConfig};
use malady::graph::{self, FeatureMatrix, KernelSpec, SparseGraph};
use malady::harness::{self, ExperimentConfig, SyntheticBlobsSpec};
use malady::MaladyError;

create_exception!(pymalady, InfeasibleError, PyException);
create_exception!(pymalady, AuctionError, PyException);

fn to_py(e: MaladyError) -> PyErr {
    match e {
        MaladyError::Infeasible(_) => InfeasibleError::new_err(e.to_string()),
        MaladyError::Io { .. } | MaladyError::Format { .. } => PyOSError::new_err(e.to_string()),
        MaladyError::InvalidState(_) | MaladyError::NonTermination { .. } => AuctionError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

fn parse_init(init: &str) -> PyResult<InitMode> {
    match init {
        "random" => Ok(InitMode::Random),
        "propagated" => Ok(InitMode::Propagated),
        other => Err(PyValueError::new_err(format!("init must be 'random' or 'propagated', got {other:?}"))),
    }
}

fn parse_bounds(mode: &str, sizes: Option<Vec<usize>>, slack: f64) -> PyResult<ClassBoundsSpec> {
    let need = |sizes: Option<Vec<usize>>| {
        sizes.ok_or_else(|| PyValueError::new_err(format!("bounds {mode:?} needs class sizes")))
    };
    match mode {
        "exact" => Ok(ClassBoundsSpec::Exact { sizes: need(sizes)? }),
        "flexible" => Ok(ClassBoundsSpec::Flexible {
            slack,
            sizes: need(sizes)?,
        }),
        "none" => Ok(ClassBoundsSpec::None),
        other => Err(PyValueError::new_err(format!(
            "bounds must be 'exact', 'flexible' or 'none', got {other:?}"
        ))),
    }
}

fn class_sizes(labels: &[usize], num_classes: usize) -> Vec<usize> {
    let mut sizes = vec![0; num_classes];
    for &l in labels {
        sizes[l] += 1;
    }
    sizes
}

/// Symmetric kNN similarity graph.
#[pyclass(name = "Graph", frozen)]
struct PyGraph {
    inner: SparseGraph,
}

#[pymethods]
impl PyGraph {
    /// Builds the graph from a list of feature rows.
    #[staticmethod]
    #[pyo3(signature = (features, k, kernel = "gaussian"))]
    fn from_features(py: Python<'_>, features: Vec<Vec<f64>>, k: usize, kernel: &str) -> PyResult<Self> {
        let spec = match kernel {
            "gaussian" => KernelSpec::gaussian(k),
            "cosine" => KernelSpec::cosine(k),
            other => return Err(PyValueError::new_err(format!("unknown kernel {other:?}"))),
        };
        let matrix = FeatureMatrix::from_rows(&features).map_err(to_py)?;
        let inner = py.detach(|| graph::build_graph(&matrix, &spec)).map_err(to_py)?;
        Ok(Self { inner })
    }

    /// Builds the graph from `(i, j, w)` triplets; both directions must be present.
    #[staticmethod]
    fn from_edges(n: usize, edges: Vec<(usize, usize, f64)>) -> PyResult<Self> {
        Ok(Self {
            inner: SparseGraph::from_triplets(n, edges).map_err(to_py)?,
        })
    }

    #[getter]
    fn n(&self) -> usize {
        self.inner.n()
    }

    #[getter]
    fn nnz(&self) -> usize {
        self.inner.nnz()
    }

    fn weight(&self, i: usize, j: usize) -> f64 {
        self.inner.weight(i, j).unwrap_or(0.0)
    }

    fn degree(&self, i: usize) -> f64 {
        self.inner.degree(i)
    }

    fn edges(&self) -> Vec<(usize, usize, f64)> {
        self.inner.edges().collect()
    }

    fn __repr__(&self) -> String {
        format!("Graph(n={}, nnz={})", self.inner.n(), self.inner.nnz())
    }
}

/// The six-cluster toy dataset as `(rows, labels)`.
#[pyfunction]
#[pyo3(signature = (seed = 0, clusters = 6, points_per_cluster = 400, std = 0.25))]
fn blobs(seed: u64, clusters: usize, points_per_cluster: usize, std: f64) -> PyResult<(Vec<Vec<f64>>, Vec<usize>)> {
    let spec = SyntheticBlobsSpec {
        clusters,
        points_per_cluster,
        std,
    };
    let (x, y) = harness::generate_blobs(&spec, seed).map_err(to_py)?;
    Ok(((0..x.rows()).map(|i| x.row(i).to_vec()).collect(), y))
}

/// Exact-volume auction. Returns `(assignment, prices)`.
#[pyfunction]
#[pyo3(signature = (a, volumes, eps = 1e-6))]
fn membership_auction(a: Vec<Vec<f64>>, volumes: Vec<usize>, eps: f64) -> PyResult<(Vec<usize>, Vec<f64>)> {
    let a = CoefficientMatrix::from_rows(&a).map_err(to_py)?;
    let k = volumes.len();
    let out = auction::membership_auction(eps, &volumes, &a, &vec![0.0; k]).map_err(to_py)?;
    Ok((out.partition.assignment().to_vec(), out.duals.prices))
}

/// Upper-bound then lower-bound auction from zero duals. Returns
/// `(assignment, prices, incentives)`.
#[pyfunction]
#[pyo3(signature = (a, lower, upper, eps = 1e-6))]
fn bounded_auction(
    a: Vec<Vec<f64>>,
    lower: Vec<usize>,
    upper: Vec<usize>,
    eps: f64,
) -> PyResult<(Vec<usize>, Vec<f64>, Vec<f64>)> {
    let a = CoefficientMatrix::from_rows(&a).map_err(to_py)?;
    let bounds = Bounds::new(lower, upper).map_err(to_py)?;
    let k = bounds.num_classes();
    let up = auction::upper_bound_auction(eps, &bounds, &a, &Duals::zeros(k)).map_err(to_py)?;
    let out = auction::lower_bound_auction(eps, &bounds, &a, &up.duals, &up.partition).map_err(to_py)?;
    Ok((out.partition.assignment().to_vec(), out.duals.prices, out.duals.incentives))
}

/// `(M, v, w)` for one coefficient row.
#[pyfunction]
#[pyo3(signature = (a, p, t, eps = 0.0))]
fn margin(a: Vec<f64>, p: Vec<f64>, t: Vec<f64>, eps: f64) -> PyResult<(f64, f64, f64)> {
    active::margin(&a, &p, &t, eps).map_err(to_py)
}

#[allow(clippy::too_many_arguments)]
fn ssl_config(
    num_classes: usize,
    bounds: &str,
    sizes: Option<Vec<usize>>,
    slack: f64,
    steps: usize,
    init: &str,
    epsilon0: f64,
    epsilon_min: f64,
    alpha: f64,
) -> PyResult<SslConfig> {
    Ok(SslConfig {
        num_classes,
        bounds: parse_bounds(bounds, sizes, slack)?,
        concave: ConcaveTermSpec::None,
        schedule: AuctionSchedule {
            epsilon0,
            epsilon_min,
            alpha,
        },
        steps,
        time_step: None,
        init: parse_init(init)?,
    })
}

/// Auction-dynamics classification. Returns the class of every point and
/// the acquisition score `1 - M(x)` of every unlabeled point.
#[pyfunction]
#[pyo3(signature = (
    graph, labeled, labels, num_classes, bounds = "none", sizes = None, slack = 0.1,
    steps = 100, init = "random", seed = 0, epsilon0 = 1e-7, epsilon_min = 1e-6, alpha = 4.0
))]
#[allow(clippy::too_many_arguments, clippy::type_complexity)]
fn ssl_classify(
    py: Python<'_>,
    graph: &PyGraph,
    labeled: Vec<usize>,
    labels: Vec<usize>,
    num_classes: usize,
    bounds: &str,
    sizes: Option<Vec<usize>>,
    slack: f64,
    steps: usize,
    init: &str,
    seed: u64,
    epsilon0: f64,
    epsilon_min: f64,
    alpha: f64,
) -> PyResult<(Vec<usize>, Vec<(usize, f64)>)> {
    let config = ssl_config(num_classes, bounds, sizes, slack, steps, init, epsilon0, epsilon_min, alpha)?;
    let labeled = LabeledData::new(labeled, labels).map_err(to_py)?;
    let g = &graph.inner;
    py.detach(|| {
        let result = dynamics::ssl_classify(g, &labeled, &config, seed)?;
        let scores = if result.unlabeled.is_empty() {
            Vec::new()
        } else {
            let s = active::score_all(&result, &result.unlabeled)?;
            s.points.into_iter().zip(s.scores).collect()
        };
        Ok((result.partition.assignment().to_vec(), scores))
    })
    .map_err(to_py)
}

/// One active-learning run. Returns a dict with the per-iteration
/// `num_labeled`, `accuracy` and `query` lists plus `final_accuracy`.
#[pyfunction]
#[pyo3(signature = (
    graph, labels, initial_per_class, total, acquisition = "malady", bounds = "exact",
    slack = 0.1, steps = 100, init = "propagated", seed = 0, epsilon0 = 1e-7, epsilon_min = 1e-6, alpha = 4.0
))]
#[allow(clippy::too_many_arguments)]
fn active_learning<'py>(
    py: Python<'py>,
    graph: &PyGraph,
    labels: Vec<usize>,
    initial_per_class: usize,
    total: usize,
    acquisition: &str,
    bounds: &str,
    slack: f64,
    steps: usize,
    init: &str,
    seed: u64,
    epsilon0: f64,
    epsilon_min: f64,
    alpha: f64,
) -> PyResult<Bound<'py, pyo3::types::PyDict>> {
    let acquisition = match acquisition {
        "malady" => Acquisition::Malady,
        "random" => Acquisition::Random,
        other => return Err(PyValueError::new_err(format!("unknown acquisition {other:?}"))),
    };
    let num_classes = labels.iter().max().map_or(0, |m| m + 1);
    let sizes = class_sizes(&labels, num_classes);
    let config = ssl_config(num_classes, bounds, Some(sizes), slack, steps, init, epsilon0, epsilon_min, alpha)?;
    let oracle = Oracle::new(labels, num_classes).map_err(to_py)?;
    let budget = ALBudget {
        initial_per_class,
        total,
    };
    let g = &graph.inner;
    let out = py
        .detach(|| active::active_loop(g, &oracle, budget, &config, seed, acquisition))
        .map_err(to_py)?;
    let record = out.record;
    let dict = pyo3::types::PyDict::new(py);
    dict.set_item("initial_labeled", record.initial_labeled.clone())?;
    dict.set_item("num_labeled", record.iterations.iter().map(|r| r.num_labeled).collect::<Vec<_>>())?;
    dict.set_item("accuracy", record.iterations.iter().map(|r| r.accuracy).collect::<Vec<_>>())?;
    dict.set_item("queries", record.queries())?;
    dict.set_item("final_accuracy", record.final_accuracy)?;
    dict.set_item("exhausted", record.exhausted)?;
    Ok(dict)
}

/// Fraction of `eval` indices where the prediction matches the truth.
#[pyfunction]
fn accuracy(predicted: Vec<usize>, truth: Vec<usize>, eval: Vec<usize>) -> PyResult<f64> {
    harness::accuracy(&predicted, &truth, &eval).map_err(to_py)
}

/// Runs the experiment described by a JSON config file and returns the
/// aggregate as a JSON string.
#[pyfunction]
fn run_experiment(py: Python<'_>, config_path: PathBuf) -> PyResult<String> {
    let config = ExperimentConfig::from_file(&config_path).map_err(to_py)?;
    let report = py.detach(|| harness::run_experiment(&config)).map_err(to_py)?;
    serde_json::to_string(&report.aggregate).map_err(|e| PyValueError::new_err(e.to_string()))
}

#[pymodule]
fn pymalady(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyGraph>()?;
    m.add_function(wrap_pyfunction!(blobs, m)?)?;
    m.add_function(wrap_pyfunction!(membership_auction, m)?)?;
    m.add_function(wrap_pyfunction!(bounded_auction, m)?)?;
    m.add_function(wrap_pyfunction!(margin, m)?)?;
    m.add_function(wrap_pyfunction!(ssl_classify, m)?)?;
    m.add_function(wrap_pyfunction!(active_learning, m)?)?;
    m.add_function(wrap_pyfunction!(accuracy, m)?)?;
    m.add_function(wrap_pyfunction!(run_experiment, m)?)?;
    m.add("InfeasibleError", m.py().get_type::<InfeasibleError>())?;
    m.add("AuctionError", m.py().get_type::<AuctionError>())?;
    Ok(())
}
