//! Brute-force references for tests: exhaustive constrained assignment and
//! dense re-computation of coefficients and energies.

use crate::auction::{Bounds, CoefficientMatrix};
use crate::dynamics::ClassMatrix;
use crate::error::{MaladyError, Result};

/// Largest number of complete assignments `K^n` the enumeration accepts.
pub const ENUMERATION_BUDGET: u64 = 1 << 20;

/// A constrained assignment instance small enough to enumerate.
#[derive(Debug, Clone, PartialEq)]
pub struct SmallInstance {
    pub a: CoefficientMatrix,
    pub bounds: Bounds,
}

impl SmallInstance {
    pub fn new(a: CoefficientMatrix, bounds: Bounds) -> Result<Self> {
        if a.num_classes() != bounds.num_classes() {
            return Err(MaladyError::InvalidParameter(format!(
                "coefficients have {} classes but bounds have {}",
                a.num_classes(),
                bounds.num_classes()
            )));
        }
        Ok(Self { a, bounds })
    }

    /// Exact class volumes, i.e. `B = U = volumes`.
    pub fn with_volumes(a: CoefficientMatrix, volumes: Vec<usize>) -> Result<Self> {
        Self::new(a, Bounds::exact(volumes)?)
    }
}

/// Maximum of `sum_x a(x, class(x))` over all assignments with
/// `B_i <= count_i <= U_i`, and the lexicographically first maximiser.
pub fn brute_force_assignment(inst: &SmallInstance) -> Result<(f64, Vec<usize>)> {
    let n = inst.a.len();
    let k = inst.bounds.num_classes();
    let size = (k as f64).powi(n as i32);
    if size > ENUMERATION_BUDGET as f64 {
        return Err(MaladyError::InvalidParameter(format!(
            "{k}^{n} assignments exceed the enumeration budget of {ENUMERATION_BUDGET}"
        )));
    }
    let mut search = Search {
        inst,
        counts: vec![0; k],
        current: Vec::with_capacity(n),
        best: None,
    };
    search.descend(0.0);
    search.best.ok_or_else(|| {
        MaladyError::Infeasible(format!("no assignment of {n} elements satisfies the bounds"))
    })
}

struct Search<'a> {
    inst: &'a SmallInstance,
    counts: Vec<usize>,
    current: Vec<usize>,
    best: Option<(f64, Vec<usize>)>,
}

impl Search<'_> {
    fn descend(&mut self, value: f64) {
        let n = self.inst.a.len();
        let x = self.current.len();
        let (lower, upper) = (self.inst.bounds.lower(), self.inst.bounds.upper());
        // remaining elements must be able to cover every lower-bound deficit
        let deficit: usize = lower
            .iter()
            .zip(&self.counts)
            .map(|(&b, &c)| b.saturating_sub(c))
            .sum();
        if deficit > n - x {
            return;
        }
        if x == n {
            if self.best.as_ref().is_none_or(|(v, _)| value > *v) {
                self.best = Some((value, self.current.clone()));
            }
            return;
        }
        for class in 0..lower.len() {
            if self.counts[class] == upper[class] {
                continue;
            }
            self.counts[class] += 1;
            self.current.push(class);
            self.descend(value + self.inst.a.get(x, class));
            self.current.pop();
            self.counts[class] -= 1;
        }
    }
}

/// `a_i(x) = 1 - grad_i(x) - sum_{y : class(y) != i} w[x][y]` for every point,
/// by a plain double loop over the dense matrix.
pub fn dense_coefficients(w: &[Vec<f64>], assignment: &[usize], grad: &ClassMatrix) -> Vec<Vec<f64>> {
    let n = w.len();
    (0..n)
        .map(|x| {
            (0..grad.classes())
                .map(|i| {
                    let mut cross = 0.0;
                    for y in 0..n {
                        if assignment[y] != i && w[x][y] != 0.0 {
                            cross += w[x][y];
                        }
                    }
                    1.0 - grad.get(x, i) - cross
                })
                .collect()
        })
        .collect()
}

/// Sum of `w[x][y]` over ordered pairs in different classes.
pub fn dense_ghc_energy(w: &[Vec<f64>], assignment: &[usize]) -> f64 {
    let n = w.len();
    let mut total = 0.0;
    for x in 0..n {
        for y in 0..n {
            if assignment[x] != assignment[y] {
                total += w[x][y];
            }
        }
    }
    total
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_by_two_exact_volumes() {
        let a = CoefficientMatrix::from_rows(&[vec![2.0, 0.0], vec![0.0, 2.0]]).unwrap();
        let inst = SmallInstance::with_volumes(a, vec![1, 1]).unwrap();
        assert_eq!(brute_force_assignment(&inst).unwrap(), (4.0, vec![0, 1]));
    }

    #[test]
    fn unconstrained_optimum_is_sum_of_row_maxima() {
        let rows = vec![vec![0.1, 0.7, 0.3], vec![0.9, 0.2, 0.4], vec![0.5, 0.5, 0.6]];
        let a = CoefficientMatrix::from_rows(&rows).unwrap();
        let inst = SmallInstance::new(a, Bounds::unconstrained(3, 3).unwrap()).unwrap();
        let (v, assign) = brute_force_assignment(&inst).unwrap();
        assert!((v - 2.2).abs() < 1e-15);
        assert_eq!(assign, vec![1, 0, 2]);
    }

    #[test]
    fn constant_benefits_pick_first_feasible_assignment() {
        let a = CoefficientMatrix::from_rows(&vec![vec![0.25; 2]; 4]).unwrap();
        let inst = SmallInstance::with_volumes(a, vec![2, 2]).unwrap();
        assert_eq!(brute_force_assignment(&inst).unwrap(), (1.0, vec![0, 0, 1, 1]));
    }

    #[test]
    fn budget_and_infeasibility() {
        let a = CoefficientMatrix::from_rows(&vec![vec![0.0; 4]; 11]).unwrap();
        let inst = SmallInstance::new(a, Bounds::unconstrained(4, 11).unwrap()).unwrap();
        assert!(matches!(brute_force_assignment(&inst), Err(MaladyError::InvalidParameter(_))));

        let a = CoefficientMatrix::from_rows(&[vec![0.0, 1.0]]).unwrap();
        let inst = SmallInstance::new(a, Bounds::new(vec![1, 1], vec![1, 1]).unwrap()).unwrap();
        assert!(matches!(brute_force_assignment(&inst), Err(MaladyError::Infeasible(_))));
    }

    #[test]
    fn dense_coefficients_closed_forms() {
        let grad = ClassMatrix::zeros(3, 2);
        let zero = vec![vec![0.0; 3]; 3];
        assert!(dense_coefficients(&zero, &[0, 1, 0], &grad)
            .iter()
            .all(|row| row == &[1.0, 1.0]));

        let complete: Vec<Vec<f64>> = (0..3)
            .map(|x| (0..3).map(|y| if x == y { 0.0 } else { 1.0 }).collect())
            .collect();
        let a = dense_coefficients(&complete, &[1, 1, 1], &grad);
        assert!(a.iter().all(|row| row == &[-1.0, 1.0]));
        assert_eq!(dense_ghc_energy(&complete, &[0, 1, 1]), 4.0);
    }
}
