//! Auction solvers for class-volume constrained assignment.
//!
//! Elements bid for classes; classes carry a net value `d = p - t` where `p`
//! is a price (upper-bound pressure) and `t` an incentive (lower-bound pull).
//! The forward stage ([`upper_bound_auction`]) produces a complete matching
//! within the upper bounds, the reverse stage ([`lower_bound_auction`]) then
//! repairs lower-bound deficiencies, and [`scaled_auction`] alternates both
//! while shrinking `epsilon`.

mod lower;
mod market;
mod membership;
mod scaled;
mod upper;

use serde::{Deserialize, Serialize};

use crate::error::{MaladyError, Result};

pub use lower::lower_bound_auction;
pub use membership::membership_auction;
pub use scaled::{epsilon_schedule, scaled_auction, scaled_auction_observed, RoundReport, ScaledOutcome};
pub use upper::upper_bound_auction;


/// Marker stored in an assignment vector for elements without a class.
pub const UNASSIGNED: usize = usize::MAX;

/// Hard cap on bidding events (bids in the forward stages, transfers in the
/// reverse stage) within one auction call.
pub const MAX_BIDDING_EVENTS: usize = 1_000_000;

/// Relative slack granted to [`check_eps_cs`] for floating point rounding.
pub const CS_ROUNDING_TOLERANCE: f64 = 1e-12;

/// Per-class lower and upper member counts.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Bounds {
    lower: Vec<usize>,
    upper: Vec<usize>,
}

impl Bounds {
    pub fn new(lower: Vec<usize>, upper: Vec<usize>) -> Result<Self> {
        if lower.len() != upper.len() {
            return Err(MaladyError::InvalidParameter(format!(
                "lower bounds have {} classes, upper bounds have {}",
                lower.len(),
                upper.len()
            )));
        }
        if lower.is_empty() {
            return Err(MaladyError::InvalidParameter("bounds need at least one class".into()));
        }
        if let Some(i) = (0..lower.len()).find(|&i| lower[i] > upper[i]) {
            return Err(MaladyError::InvalidParameter(format!(
                "class {i}: lower bound {} exceeds upper bound {}",
                lower[i], upper[i]
            )));
        }
        Ok(Self { lower, upper })
    }

    /// `B = U = volumes`.
    pub fn exact(volumes: Vec<usize>) -> Result<Self> {
        Self::new(volumes.clone(), volumes)
    }

    /// `B = 0`, `U = n` for every class.
    pub fn unconstrained(num_classes: usize, n: usize) -> Result<Self> {
        Self::new(vec![0; num_classes], vec![n; num_classes])
    }

    pub fn num_classes(&self) -> usize {
        self.lower.len()
    }

    pub fn lower(&self) -> &[usize] {
        &self.lower
    }

    pub fn upper(&self) -> &[usize] {
        &self.upper
    }

    /// Checks `sum B <= n <= sum U`.
    pub fn check_feasible(&self, n: usize) -> Result<()> {
        let sum_lower: usize = self.lower.iter().sum();
        let sum_upper: usize = self.upper.iter().sum();
        if sum_lower > n {
            return Err(MaladyError::Infeasible(format!(
                "lower bounds sum to {sum_lower} but only {n} elements are assignable"
            )));
        }
        if sum_upper < n {
            return Err(MaladyError::Infeasible(format!(
                "upper bounds sum to {sum_upper} but {n} elements must be assigned"
            )));
        }
        Ok(())
    }
}

/// Benefit `a_i(x)` of assigning element row `x` to class `i`.
///
/// Rows are tied to external element identifiers through `elements`.
#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientMatrix {
    elements: Vec<usize>,
    classes: usize,
    values: Vec<f64>,
}

impl CoefficientMatrix {
    pub fn new(elements: Vec<usize>, classes: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != elements.len() * classes {
            return Err(MaladyError::InvalidInput(format!(
                "expected {} coefficients for {} elements and {classes} classes, got {}",
                elements.len() * classes,
                elements.len(),
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(MaladyError::InvalidInput("coefficients must be finite".into()));
        }
        Ok(Self {
            elements,
            classes,
            values,
        })
    }

    /// Rows numbered `0..rows.len()`.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let classes = rows.first().map(Vec::len).unwrap_or(0);
        if rows.iter().any(|r| r.len() != classes) {
            return Err(MaladyError::InvalidInput("ragged coefficient rows".into()));
        }
        Self::new(
            (0..rows.len()).collect(),
            classes,
            rows.iter().flatten().copied().collect(),
        )
    }

    pub fn len(&self) -> usize {
        self.elements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.elements.is_empty()
    }

    pub fn num_classes(&self) -> usize {
        self.classes
    }

    pub fn elements(&self) -> &[usize] {
        &self.elements
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.values[r * self.classes..(r + 1) * self.classes]
    }

    pub fn get(&self, r: usize, class: usize) -> f64 {
        self.values[r * self.classes + class]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

/// Prices `p >= 0` and incentives `t >= 0`, never both positive for one class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Duals {
    pub prices: Vec<f64>,
    pub incentives: Vec<f64>,
}

impl Duals {
    pub fn zeros(num_classes: usize) -> Self {
        Self {
            prices: vec![0.0; num_classes],
            incentives: vec![0.0; num_classes],
        }
    }

    /// Splits net values into `p = max(d, 0)` and `t = max(-d, 0)`.
    pub fn from_net(net: &[f64]) -> Self {
        Self {
            prices: net.iter().map(|&d| d.max(0.0)).collect(),
            incentives: net.iter().map(|&d| (-d).max(0.0)).collect(),
        }
    }

    /// `d = p - t`.
    pub fn net(&self) -> Vec<f64> {
        self.prices
            .iter()
            .zip(&self.incentives)
            .map(|(p, t)| p - t)
            .collect()
    }

    pub fn num_classes(&self) -> usize {
        self.prices.len()
    }

    /// `min(p_i, t_i) == 0` for every class.
    pub fn is_complementary(&self) -> bool {
        self.prices
            .iter()
            .zip(&self.incentives)
            .all(|(&p, &t)| p >= 0.0 && t >= 0.0 && p.min(t) == 0.0)
    }
}

/// Epsilon scaling schedule: `epsilon0`, divided by `alpha` each round while
/// it stays at or above `epsilon_min / N`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AuctionSchedule {
    pub epsilon0: f64,
    pub epsilon_min: f64,
    pub alpha: f64,
}

impl Default for AuctionSchedule {
    fn default() -> Self {
        Self {
            epsilon0: 1e-7,
            epsilon_min: 1e-6,
            alpha: 4.0,
        }
    }
}

impl AuctionSchedule {
    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon0 > 0.0 && self.epsilon0.is_finite()) {
            return Err(MaladyError::Config(format!(
                "epsilon0 must be positive, got {}",
                self.epsilon0
            )));
        }
        if !(self.epsilon_min > 0.0 && self.epsilon_min.is_finite()) {
            return Err(MaladyError::Config(format!(
                "epsilon_min must be positive, got {}",
                self.epsilon_min
            )));
        }
        if !(self.alpha > 1.0 && self.alpha.is_finite()) {
            return Err(MaladyError::Config(format!(
                "alpha must exceed 1, got {}",
                self.alpha
            )));
        }
        Ok(())
    }
}

/// Class assignment of a set of elements.
#[derive(Debug, Clone, PartialEq)]
pub struct Partition {
    assignment: Vec<usize>,
    members: Vec<Vec<usize>>,
    bids: Vec<Option<f64>>,
}

impl Partition {
    /// Builds a partition from per-element classes ([`UNASSIGNED`] allowed), without bids.
    pub fn from_assignment(assignment: Vec<usize>, num_classes: usize) -> Result<Self> {
        let bids = vec![None; assignment.len()];
        Self::with_bids(assignment, bids, num_classes)
    }

    pub(crate) fn with_bids(
        assignment: Vec<usize>,
        bids: Vec<Option<f64>>,
        num_classes: usize,
    ) -> Result<Self> {
        let mut members = vec![Vec::new(); num_classes];
        for (x, &c) in assignment.iter().enumerate() {
            if c == UNASSIGNED {
                continue;
            }
            if c >= num_classes {
                return Err(MaladyError::InvalidInput(format!(
                    "element {x} assigned to class {c}, but only {num_classes} classes exist"
                )));
            }
            members[c].push(x);
        }
        Ok(Self {
            assignment,
            members,
            bids,
        })
    }

    pub fn len(&self) -> usize {
        self.assignment.len()
    }

    pub fn is_empty(&self) -> bool {
        self.assignment.is_empty()
    }

    pub fn num_classes(&self) -> usize {
        self.members.len()
    }

    pub fn assignment(&self) -> &[usize] {
        &self.assignment
    }

    pub fn class_of(&self, x: usize) -> Option<usize> {
        match self.assignment[x] {
            UNASSIGNED => None,
            c => Some(c),
        }
    }

    /// Members of class `i`, ascending.
    pub fn members(&self, i: usize) -> &[usize] {
        &self.members[i]
    }

    pub fn sizes(&self) -> Vec<usize> {
        self.members.iter().map(Vec::len).collect()
    }

    /// Last bid recorded for `x`, if it was placed by an auction.
    pub fn bid(&self, x: usize) -> Option<f64> {
        self.bids[x]
    }

    pub fn is_complete(&self) -> bool {
        self.assignment.iter().all(|&c| c != UNASSIGNED)
    }

    pub fn within(&self, bounds: &Bounds) -> bool {
        self.sizes()
            .iter()
            .zip(bounds.lower().iter().zip(bounds.upper()))
            .all(|(&s, (&b, &u))| b <= s && s <= u)
    }
}

/// Output of a single auction call.
#[derive(Debug, Clone, PartialEq)]
pub struct AuctionOutcome {
    pub partition: Partition,
    pub duals: Duals,
    pub bidding_events: usize,
}

/// Best and second-best value of `a_i - d_i` over the classes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BestTwo {
    pub best: usize,
    pub best_value: f64,
    pub next: usize,
    pub next_value: f64,
}

/// Best class `i*` maximising `a_i - d_i` and the best class other than `i*`.
/// Ties go to the lowest class index.
pub fn best_and_second(a_row: &[f64], d: &[f64]) -> Result<BestTwo> {
    if a_row.len() < 2 || a_row.len() != d.len() {
        return Err(MaladyError::InvalidParameter(format!(
            "best_and_second needs at least two classes and matching lengths (got {} and {})",
            a_row.len(),
            d.len()
        )));
    }
    let mut best = 0;
    let mut best_value = a_row[0] - d[0];
    let mut next = usize::MAX;
    let mut next_value = f64::NEG_INFINITY;
    for i in 1..a_row.len() {
        let v = a_row[i] - d[i];
        if v > best_value {
            next = best;
            next_value = best_value;
            best = i;
            best_value = v;
        } else if next == usize::MAX || v > next_value {
            next = i;
            next_value = v;
        }
    }
    Ok(BestTwo {
        best,
        best_value,
        next,
        next_value,
    })
}

/// Result of an epsilon-complementary-slackness check.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpsCsReport {
    pub satisfied: bool,
    /// `max_x (best value - assigned value - eps)`; nonpositive when satisfied.
    pub worst_violation: f64,
}

/// Checks `a_i(x) - p_i + t_i + eps >= max_j (a_j(x) - p_j + t_j)` for every matched pair.
///
/// Unassigned elements count as an infinite violation. A violation no larger than
/// [`CS_ROUNDING_TOLERANCE`] times the magnitude of the compared values is accepted.
pub fn check_eps_cs(partition: &Partition, a: &CoefficientMatrix, duals: &Duals, eps: f64) -> EpsCsReport {
    let net = duals.net();
    let mut worst = f64::NEG_INFINITY;
    let mut satisfied = true;
    for x in 0..a.len() {
        let row = a.row(x);
        let Some(c) = partition.class_of(x) else {
            return EpsCsReport {
                satisfied: false,
                worst_violation: f64::INFINITY,
            };
        };
        let values = row.iter().zip(&net).map(|(ai, di)| ai - di);
        let best = values.fold(f64::NEG_INFINITY, f64::max);
        let assigned = row[c] - net[c];
        let violation = best - assigned - eps;
        let scale = 1.0 + best.abs().max(assigned.abs());
        if violation > CS_ROUNDING_TOLERANCE * scale {
            satisfied = false;
        }
        worst = worst.max(violation);
    }
    EpsCsReport {
        satisfied,
        worst_violation: if a.is_empty() { 0.0 } else { worst },
    }
}

/// `sum_x a_{class(x)}(x)` over assigned elements.
pub fn total_benefit(partition: &Partition, a: &CoefficientMatrix) -> f64 {
    (0..a.len())
        .filter_map(|x| partition.class_of(x).map(|c| a.get(x, c)))
        .sum()
}

pub(crate) fn check_epsilon(eps: f64) -> Result<()> {
    if eps > 0.0 && eps.is_finite() {
        Ok(())
    } else {
        Err(MaladyError::InvalidParameter(format!(
            "epsilon must be positive and finite, got {eps}"
        )))
    }
}

pub(crate) fn check_classes(a: &CoefficientMatrix, k: usize) -> Result<()> {
    if a.num_classes() < 2 {
        return Err(MaladyError::InvalidParameter(format!(
            "auctions need at least two classes, got {}",
            a.num_classes()
        )));
    }
    if a.num_classes() != k {
        return Err(MaladyError::InvalidParameter(format!(
            "coefficients have {} classes but bounds/duals have {k}",
            a.num_classes()
        )));
    }
    Ok(())
}
