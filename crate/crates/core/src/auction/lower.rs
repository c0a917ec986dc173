use std::cmp::Reverse;
use std::collections::BinaryHeap;

use super::{
    check_classes, check_epsilon, AuctionOutcome, Bounds, CoefficientMatrix, Duals, Partition,
    MAX_BIDDING_EVENTS,
};
use crate::error::{MaladyError, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
struct Candidate {
    key: f64,
    element: usize,
}

impl Eq for Candidate {}

impl PartialOrd for Candidate {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Candidate {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.key
            .total_cmp(&other.key)
            .then(self.element.cmp(&other.element))
    }
}

/// Reverse auction repairing lower-bound deficiencies of a complete,
/// upper-feasible epsilon-CS matching.
///
/// A class is deficient while it has fewer than `B_i` members, or fewer than
/// `U_i` members while charging a positive price. Deficient classes pull in the
/// elements with the smallest transfer loss
/// `delta(x) = (a_j(x) - d_j) - (a_i(x) - d_i)` and lower their net value
/// (offering an incentive) just enough to keep epsilon-CS.
pub fn lower_bound_auction(
    eps: f64,
    bounds: &Bounds,
    a: &CoefficientMatrix,
    warm: &Duals,
    start: &Partition,
) -> Result<AuctionOutcome> {
    check_epsilon(eps)?;
    let k = bounds.num_classes();
    check_classes(a, k)?;
    let n = a.len();
    if warm.num_classes() != k {
        return Err(MaladyError::InvalidParameter(format!(
            "expected duals for {k} classes, got {}",
            warm.num_classes()
        )));
    }
    if start.len() != n || start.num_classes() != k {
        return Err(MaladyError::InvalidParameter(format!(
            "starting partition covers {} elements in {} classes, expected {n} and {k}",
            start.len(),
            start.num_classes()
        )));
    }
    if !start.is_complete() {
        return Err(MaladyError::InvalidParameter(
            "lower bound auction needs a complete starting matching".into(),
        ));
    }
    let required: usize = bounds.lower().iter().sum();
    if required > n {
        return Err(MaladyError::Infeasible(format!(
            "lower bounds require {required} elements but only {n} exist"
        )));
    }
    let (lower, upper) = (bounds.lower(), bounds.upper());

    let mut d = warm.net();
    let mut assignment = start.assignment().to_vec();
    let mut bids: Vec<Option<f64>> = (0..n).map(|x| start.bid(x)).collect();
    let mut counts = start.sizes();
    let mut events = 0usize;

    let deficient = |i: usize, counts: &[usize], d: &[f64]| {
        (counts[i] < upper[i] && d[i] > 0.0) || counts[i] < lower[i]
    };

    loop {
        let mut any = false;
        for i in 0..k {
            if !deficient(i, &counts, &d) {
                continue;
            }
            any = true;
            // Only d_i moves while class i is being served, so ordering candidates
            // by (a_j - d_j) - a_i orders them by their current transfer loss.
            let mut heap: BinaryHeap<Reverse<Candidate>> = (0..n)
                .filter(|&x| assignment[x] != i)
                .map(|x| {
                    let j = assignment[x];
                    Reverse(Candidate {
                        key: (a.get(x, j) - d[j]) - a.get(x, i),
                        element: x,
                    })
                })
                .collect();
            while deficient(i, &counts, &d) {
                events += 1;
                if events > MAX_BIDDING_EVENTS {
                    return Err(MaladyError::NonTermination {
                        events,
                        context: format!("lower bound auction, eps = {eps:e}, {n} elements"),
                    });
                }
                let Some(Reverse(Candidate { element: x, .. })) = heap.pop() else {
                    if counts[i] < lower[i] {
                        return Err(MaladyError::InvalidState(format!(
                            "class {i} is below its lower bound with no elements left to recruit"
                        )));
                    }
                    d[i] = 0.0;
                    break;
                };
                let j = assignment[x];
                let delta = (a.get(x, j) - d[j]) - (a.get(x, i) - d[i]);
                if counts[i] < lower[i] {
                    transfer(x, j, i, &mut assignment, &mut counts);
                    bids[x] = Some(d[i]);
                    if counts[i] == lower[i] && delta >= 0.0 {
                        d[i] -= delta + eps;
                    }
                } else if delta + eps >= d[i] {
                    d[i] = 0.0;
                } else {
                    transfer(x, j, i, &mut assignment, &mut counts);
                    bids[x] = Some(d[i]);
                    if counts[i] == upper[i] && delta >= 0.0 {
                        d[i] -= delta + eps;
                    }
                }
            }
        }
        if !any {
            break;
        }
    }

    Ok(AuctionOutcome {
        partition: Partition::with_bids(assignment, bids, k)?,
        duals: Duals::from_net(&d),
        bidding_events: events,
    })
}

fn transfer(x: usize, from: usize, to: usize, assignment: &mut [usize], counts: &mut [usize]) {
    assignment[x] = to;
    counts[from] -= 1;
    counts[to] += 1;
}
