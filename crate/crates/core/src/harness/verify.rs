//! Oracle-backed property checks over random instances, shared by the
//! `verify` command and the acceptance tests.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::active::margin;
use crate::auction::{
    check_eps_cs, lower_bound_auction, membership_auction, scaled_auction, total_benefit,
    upper_bound_auction, AuctionOutcome, AuctionSchedule, Bounds, CoefficientMatrix, Duals,
};
use crate::dynamics::{
    assignment_coefficients, concave_gradient, ssl_classify_observed, ClassBoundsSpec, ConcaveTermSpec,
    InitMode, LabeledData, SslConfig,
};
use crate::error::Result;
use crate::graph::SparseGraph;
use crate::oracle::{brute_force_assignment, dense_coefficients, SmallInstance};

/// Outcome of one property check.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckReport {
    pub name: String,
    pub cases: usize,
    pub violations: usize,
    /// Largest observed violation size, in the check's own units.
    pub worst: f64,
    pub detail: String,
}

impl CheckReport {
    fn new(name: &str) -> Self {
        Self {
            name: name.to_string(),
            cases: 0,
            violations: 0,
            worst: 0.0,
            detail: String::new(),
        }
    }

    pub fn passed(&self) -> bool {
        self.violations == 0 && self.cases > 0
    }

    fn fail(&mut self, amount: f64, detail: String) {
        self.violations += 1;
        if amount > self.worst || self.detail.is_empty() {
            self.worst = self.worst.max(amount);
            self.detail = detail;
        }
    }
}

fn random_rows(rng: &mut ChaCha8Rng, n: usize, k: usize) -> CoefficientMatrix {
    let rows: Vec<Vec<f64>> = (0..n).map(|_| (0..k).map(|_| rng.random()).collect()).collect();
    CoefficientMatrix::from_rows(&rows).expect("finite rows")
}

/// Random volumes summing to `n`, zeros allowed.
fn random_volumes(rng: &mut ChaCha8Rng, n: usize, k: usize) -> Vec<usize> {
    let mut v = vec![0; k];
    for _ in 0..n {
        v[rng.random_range(0..k)] += 1;
    }
    v
}

/// Random bounds with `B <= U`, `sum B <= n <= sum U`; a third of the cases
/// have `sum B = n`.
pub fn random_bounds(rng: &mut ChaCha8Rng, n: usize, k: usize) -> Bounds {
    let tight = rng.random_range(0..3) == 0;
    let lower = if tight {
        random_volumes(rng, n, k)
    } else {
        let budget = rng.random_range(0..=n);
        random_volumes(rng, budget, k)
    };
    let mut upper: Vec<usize> = lower.iter().map(|&b| b + rng.random_range(1..=n.max(1))).collect();
    while upper.iter().sum::<usize>() < n {
        let i = rng.random_range(0..k);
        upper[i] += 1;
    }
    Bounds::new(lower, upper).expect("B < U")
}

/// Membership auction total benefit against the brute-force optimum with
/// exact volumes, allowing `n * eps`.
pub fn check_near_optimality(trials: usize, eps: f64, seed: u64) -> Result<CheckReport> {
    let mut report = CheckReport::new("membership auction within n*eps of the optimum");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..trials {
        let n = rng.random_range(4..=9);
        let k = rng.random_range(2..=3);
        let a = random_rows(&mut rng, n, k);
        let volumes = random_volumes(&mut rng, n, k);
        let out = membership_auction(eps, &volumes, &a, &vec![0.0; k])?;
        let (optimum, _) = brute_force_assignment(&SmallInstance::with_volumes(a.clone(), volumes.clone())?)?;
        let got = total_benefit(&out.partition, &a);
        report.cases += 1;
        let gap = optimum - n as f64 * eps - got;
        if gap > 0.0 || out.partition.sizes() != volumes {
            report.fail(gap, format!("n={n} K={k} volumes={volumes:?}: {got} vs optimum {optimum}"));
        }
    }
    Ok(report)
}

fn duals_consistent(duals: &Duals) -> bool {
    duals.is_complementary() && Duals::from_net(&duals.net()) == *duals
}

/// Upper then lower bound auction on random bounded instances: feasibility,
/// epsilon-CS, and dual consistency of both outputs.
pub fn check_two_stage(trials: usize, seed: u64) -> Result<(CheckReport, CheckReport)> {
    let mut feasibility = CheckReport::new("two-stage auction is feasible and epsilon-CS");
    let mut duals = CheckReport::new("auction duals satisfy p*t = 0 and d = p - t");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let record_duals = |out: &AuctionOutcome, what: &str, report: &mut CheckReport| {
        report.cases += 1;
        if !duals_consistent(&out.duals) {
            report.fail(1.0, format!("{what}: p={:?} t={:?}", out.duals.prices, out.duals.incentives));
        }
    };
    for trial in 0..trials {
        let n = rng.random_range(4..=30);
        let k = rng.random_range(2..=4);
        let a = random_rows(&mut rng, n, k);
        let bounds = random_bounds(&mut rng, n, k);
        let eps = [1e-2, 1e-4, 1e-6][trial % 3];
        let up = upper_bound_auction(eps, &bounds, &a, &Duals::zeros(k))?;
        record_duals(&up, "upper", &mut duals);
        let down = lower_bound_auction(eps, &bounds, &a, &up.duals, &up.partition)?;
        record_duals(&down, "lower", &mut duals);
        let cs = check_eps_cs(&down.partition, &a, &down.duals, eps);
        feasibility.cases += 1;
        if !down.partition.within(&bounds) || !cs.satisfied {
            feasibility.fail(
                cs.worst_violation,
                format!(
                    "n={n} B={:?} U={:?}: sizes {:?}, eps-CS violation {}",
                    bounds.lower(),
                    bounds.upper(),
                    down.partition.sizes(),
                    cs.worst_violation
                ),
            );
        }
        let volumes = random_volumes(&mut rng, n, k);
        let member = membership_auction(eps, &volumes, &a, &vec![0.0; k])?;
        record_duals(&member, "membership", &mut duals);
        let schedule = AuctionSchedule {
            epsilon0: 1e-2,
            epsilon_min: 1e-6,
            alpha: 4.0,
        };
        let scaled = scaled_auction(&a, &bounds, &schedule, n)?;
        duals.cases += 1;
        if !duals_consistent(&scaled.duals) {
            duals.fail(1.0, "scaled auction".into());
        }
    }
    Ok((feasibility, duals))
}

fn random_graph(rng: &mut ChaCha8Rng, n: usize) -> SparseGraph {
    let density = rng.random_range(0.1..0.6);
    let mut entries = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            if rng.random::<f64>() < density {
                let w: f64 = rng.random_range(0.01..1.0);
                entries.push((i, j, w));
                entries.push((j, i, w));
            }
        }
    }
    SparseGraph::from_triplets(n, entries).expect("symmetric")
}

/// Sparse coefficients against the dense double loop, across all three concave terms.
pub fn check_coefficients(graphs: usize, tolerance: f64, seed: u64) -> Result<CheckReport> {
    let mut report = CheckReport::new("sparse coefficients match the dense reference");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for g_idx in 0..graphs {
        let n = rng.random_range(5..=50);
        let k = rng.random_range(2..=4);
        let graph = random_graph(&mut rng, n);
        let dense = graph.to_dense();
        let num_labeled = rng.random_range(1..n);
        let mut points: Vec<usize> = (0..n).collect();
        for i in (1..n).rev() {
            points.swap(i, rng.random_range(0..=i));
        }
        let labeled = LabeledData::new(
            points[..num_labeled].to_vec(),
            (0..num_labeled).map(|_| rng.random_range(0..k)).collect(),
        )?;
        let unlabeled = labeled.complement(n);
        let concave = match g_idx % 3 {
            0 => ConcaveTermSpec::None,
            1 => ConcaveTermSpec::Poisson {
                gamma: rng.random_range(0.1..2.0),
            },
            _ => ConcaveTermSpec::Linear {
                r: (0..n).map(|_| (0..k).map(|_| rng.random_range(-1.0..1.0)).collect()).collect(),
            },
        };
        let grad = concave_gradient(&concave, &labeled, k, n)?;
        for _ in 0..3 {
            let mut assignment: Vec<usize> = (0..n).map(|_| rng.random_range(0..k)).collect();
            for (&x, &l) in labeled.indices().iter().zip(labeled.labels()) {
                assignment[x] = l;
            }
            let sparse = assignment_coefficients(&graph, &assignment, &grad, &unlabeled)?;
            let reference = dense_coefficients(&dense, &assignment, &grad);
            for (r, &x) in unlabeled.iter().enumerate() {
                for i in 0..k {
                    report.cases += 1;
                    let diff = (sparse.get(r, i) - reference[x][i]).abs();
                    if diff > tolerance {
                        report.fail(diff, format!("graph {g_idx}, point {x}, class {i}: off by {diff:e}"));
                    }
                }
            }
        }
    }
    Ok(report)
}

/// Margin is unchanged by eps, and the best acquisition score is the smallest margin.
pub fn check_margin_invariances(vectors: usize, seed: u64) -> Result<CheckReport> {
    let mut report = CheckReport::new("margin is eps-free and argmax A = argmin M");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for v in 0..vectors {
        let k = rng.random_range(2..=6);
        let p: Vec<f64> = (0..k).map(|_| rng.random_range(0.0..0.5)).collect();
        let t: Vec<f64> = (0..k).map(|_| rng.random_range(0.0..0.5)).collect();
        let points = rng.random_range(1..=20);
        let mut best_a = (f64::NEG_INFINITY, 0);
        let mut best_m = (f64::INFINITY, 0);
        for x in 0..points {
            let a: Vec<f64> = (0..k).map(|_| rng.random_range(-1.0..1.0)).collect();
            let e1 = rng.random_range(0.0..1e-3);
            let e2 = rng.random_range(0.0..1.0);
            let (m1, ..) = margin(&a, &p, &t, e1)?;
            let (m2, ..) = margin(&a, &p, &t, e2)?;
            let (m0, ..) = margin(&a, &p, &t, 0.0)?;
            report.cases += 1;
            if m1.to_bits() != m0.to_bits() || m2.to_bits() != m0.to_bits() {
                report.fail((m1 - m2).abs(), format!("vector {v}: margins {m0} {m1} {m2}"));
            }
            let score = 1.0 - m0;
            if score > best_a.0 {
                best_a = (score, x);
            }
            if m0 < best_m.0 {
                best_m = (m0, x);
            }
        }
        if best_a.1 != best_m.1 {
            report.fail(1.0, format!("vector {v}: argmax A = {} but argmin M = {}", best_a.1, best_m.1));
        }
    }
    Ok(report)
}

/// Nonnegative `G^T G` as a dense PSD weight matrix (diagonal included).
pub fn random_psd_weights(rng: &mut ChaCha8Rng, n: usize) -> Vec<Vec<f64>> {
    let m = rng.random_range(2..=6);
    let g: Vec<Vec<f64>> = (0..m)
        .map(|_| (0..n).map(|_| if rng.random::<f64>() < 0.5 { rng.random::<f64>() } else { 0.0 }).collect())
        .collect();
    (0..n)
        .map(|i| (0..n).map(|j| (0..m).map(|r| g[r][i] * g[r][j]).sum::<f64>() / m as f64).collect())
        .collect()
}

/// A scaled schedule for the energy check. A single round at the default
/// `epsilon0 = 1e-7` from zero duals can spend more than the event cap in
/// epsilon-sized price wars once flexible bounds bind.
pub const ENERGY_SCHEDULE: AuctionSchedule = AuctionSchedule {
    epsilon0: 1e-3,
    epsilon_min: 1e-6,
    alpha: 4.0,
};

/// Energy trace of the classifier on PSD weights never rises by more than
/// `N * eps_final` per step.
pub fn check_energy_monotone(seeds: usize, seed: u64) -> Result<CheckReport> {
    let mut report = CheckReport::new("energy is non-increasing on PSD weights");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for s in 0..seeds {
        let n = rng.random_range(20..=60);
        let k = rng.random_range(2..=3);
        let weights = random_psd_weights(&mut rng, n);
        let graph = SparseGraph::from_dense(&weights)?;
        let num_labeled = rng.random_range(k..=n / 4);
        let labeled = LabeledData::new(
            (0..num_labeled).map(|i| i * (n / num_labeled)).collect(),
            (0..num_labeled).map(|i| i % k).collect(),
        )?;
        let bounds = if s % 2 == 0 {
            ClassBoundsSpec::None
        } else {
            let mut sizes = vec![n / k; k];
            sizes[0] += n - sizes.iter().sum::<usize>();
            ClassBoundsSpec::Flexible { slack: 0.3, sizes }
        };
        let config = SslConfig {
            num_classes: k,
            bounds,
            concave: ConcaveTermSpec::None,
            schedule: ENERGY_SCHEDULE,
            steps: 30,
            time_step: None,
            init: InitMode::Random,
        };
        let result = ssl_classify_observed(&graph, &labeled, &config, s as u64, &mut |_| {})?;
        let slack = n as f64 * result.final_epsilon.unwrap_or(0.0);
        let mut previous = result.initial_energy;
        for (step, &e) in result.energy_trace.iter().enumerate() {
            report.cases += 1;
            let rise = e - previous;
            if rise > slack {
                report.fail(rise, format!("seed {s}, step {step}: energy rose by {rise:e} (slack {slack:e})"));
            }
            previous = e;
        }
    }
    Ok(report)
}

/// The full suite with the sizes used by the acceptance tests.
pub fn run_suite(seed: u64) -> Result<Vec<CheckReport>> {
    let (feasibility, duals) = check_two_stage(250, seed ^ 2)?;
    Ok(vec![
        check_near_optimality(250, 1e-6, seed ^ 1)?,
        feasibility,
        duals,
        check_coefficients(50, 1e-12, seed ^ 3)?,
        check_margin_invariances(1000, seed ^ 4)?,
        check_energy_monotone(20, seed ^ 5)?,
    ])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn random_bounds_are_feasible() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut tight = 0;
        for _ in 0..200 {
            let n = rng.random_range(1..20);
            let b = random_bounds(&mut rng, n, 3);
            b.check_feasible(n).unwrap();
            assert!(b.lower().iter().zip(b.upper()).all(|(l, u)| l < u));
            tight += usize::from(b.lower().iter().sum::<usize>() == n);
        }
        assert!(tight > 20);
    }

    #[test]
    fn psd_weights_are_symmetric_and_nonnegative() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let w = random_psd_weights(&mut rng, 12);
        for i in 0..12 {
            for j in 0..12 {
                assert_eq!(w[i][j].to_bits(), w[j][i].to_bits());
                assert!(w[i][j] >= 0.0);
            }
        }
    }

    #[test]
    fn small_suite_passes() {
        assert!(check_near_optimality(20, 1e-6, 0).unwrap().passed());
        let (f, d) = check_two_stage(20, 0).unwrap();
        assert!(f.passed() && d.passed(), "{f:?} {d:?}");
        assert!(check_coefficients(5, 1e-12, 0).unwrap().passed());
        assert!(check_margin_invariances(50, 0).unwrap().passed());
    }
}
