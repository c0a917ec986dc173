use std::cmp::{Ordering, Reverse};
use std::collections::BinaryHeap;

use super::{CoefficientMatrix, Partition, UNASSIGNED};
use crate::error::Result;

#[derive(Debug, Clone, Copy)]
struct Entry {
    bid: f64,
    element: usize,
    stamp: u64,
}

impl PartialEq for Entry {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Entry {}

impl PartialOrd for Entry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Entry {
    fn cmp(&self, other: &Self) -> Ordering {
        self.bid
            .total_cmp(&other.bid)
            .then(self.element.cmp(&other.element))
            .then(self.stamp.cmp(&other.stamp))
    }
}

/// Class membership with per-class min-heaps of stored bids.
///
/// Heap entries are invalidated lazily: an entry is live only while its stamp
/// matches the element's current stamp.
pub(super) struct Market {
    pub assignment: Vec<usize>,
    pub bids: Vec<Option<f64>>,
    pub counts: Vec<usize>,
    stamps: Vec<u64>,
    heaps: Vec<BinaryHeap<Reverse<Entry>>>,
}

impl Market {
    pub fn empty(n: usize, k: usize) -> Self {
        Self {
            assignment: vec![UNASSIGNED; n],
            bids: vec![None; n],
            counts: vec![0; k],
            stamps: vec![0; n],
            heaps: (0..k).map(|_| BinaryHeap::new()).collect(),
        }
    }

    pub fn join(&mut self, x: usize, class: usize, bid: f64) {
        debug_assert_eq!(self.assignment[x], UNASSIGNED);
        self.stamps[x] += 1;
        self.assignment[x] = class;
        self.bids[x] = Some(bid);
        self.counts[class] += 1;
        self.heaps[class].push(Reverse(Entry {
            bid,
            element: x,
            stamp: self.stamps[x],
        }));
    }

    fn clean_top(&mut self, class: usize) {
        while let Some(Reverse(top)) = self.heaps[class].peek() {
            if self.stamps[top.element] == top.stamp && self.assignment[top.element] == class {
                break;
            }
            self.heaps[class].pop();
        }
    }

    /// Lowest stored bid among the members of `class` (lowest index on ties).
    pub fn min_bid(&mut self, class: usize) -> Option<f64> {
        self.clean_top(class);
        self.heaps[class].peek().map(|Reverse(e)| e.bid)
    }

    /// Removes and returns the member of `class` holding the lowest bid.
    pub fn evict_min(&mut self, class: usize) -> Option<usize> {
        self.clean_top(class);
        let Reverse(top) = self.heaps[class].pop()?;
        self.stamps[top.element] += 1;
        self.assignment[top.element] = UNASSIGNED;
        self.counts[class] -= 1;
        Some(top.element)
    }

    pub fn into_partition(self, k: usize) -> Result<Partition> {
        Partition::with_bids(self.assignment, self.bids, k)
    }
}

/// Best eligible class and its value, plus the best value over the remaining
/// eligible classes (equal to the best value when no other class is eligible).
pub(super) fn best_two_eligible(a_row: &[f64], d: &[f64], eligible: &[bool]) -> (usize, f64, f64) {
    let mut best = usize::MAX;
    let mut best_value = f64::NEG_INFINITY;
    let mut next_value = f64::NEG_INFINITY;
    let mut has_next = false;
    for i in 0..a_row.len() {
        if !eligible[i] {
            continue;
        }
        let v = a_row[i] - d[i];
        if best == usize::MAX {
            best = i;
            best_value = v;
        } else if v > best_value {
            next_value = best_value;
            has_next = true;
            best = i;
            best_value = v;
        } else if !has_next || v > next_value {
            next_value = v;
            has_next = true;
        }
    }
    (best, best_value, if has_next { next_value } else { best_value })
}

/// Raises the net value of classes that cannot hold members until no assigned
/// element prefers them over its own class.
pub(super) fn raise_closed_classes(d: &mut [f64], closed: &[bool], a: &CoefficientMatrix, assignment: &[usize]) {
    for j in (0..d.len()).filter(|&j| closed[j]) {
        for (x, &c) in assignment.iter().enumerate() {
            if c == UNASSIGNED {
                continue;
            }
            let own = a.get(x, c) - d[c];
            let needed = a.get(x, j) - own;
            if needed > d[j] {
                d[j] = needed;
            }
        }
    }
}
