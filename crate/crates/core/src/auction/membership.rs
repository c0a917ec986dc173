use super::market::{best_two_eligible, raise_closed_classes, Market};
use super::{check_classes, check_epsilon, AuctionOutcome, CoefficientMatrix, Duals, MAX_BIDDING_EVENTS};
use crate::error::{MaladyError, Result};

/// Forward auction with exact class volumes `V`.
///
/// Every element ends in exactly one class, class `i` holds exactly `V_i`
/// elements, and the returned prices satisfy epsilon-CS with the matching.
pub fn membership_auction(
    eps: f64,
    volumes: &[usize],
    a: &CoefficientMatrix,
    initial_prices: &[f64],
) -> Result<AuctionOutcome> {
    check_epsilon(eps)?;
    let k = volumes.len();
    check_classes(a, k)?;
    if initial_prices.len() != k {
        return Err(MaladyError::InvalidParameter(format!(
            "expected {k} initial prices, got {}",
            initial_prices.len()
        )));
    }
    let n = a.len();
    let total: usize = volumes.iter().sum();
    if total != n {
        return Err(MaladyError::Infeasible(format!(
            "volumes sum to {total} but there are {n} elements"
        )));
    }

    let mut prices = initial_prices.to_vec();
    let open: Vec<bool> = volumes.iter().map(|&v| v > 0).collect();
    let mut market = Market::empty(n, k);
    let mut pending: Vec<usize> = (0..n).collect();
    let mut events = 0usize;

    while !pending.is_empty() {
        let mut evicted = Vec::new();
        for &x in &pending {
            events += 1;
            if events > MAX_BIDDING_EVENTS {
                return Err(MaladyError::NonTermination {
                    events,
                    context: format!("membership auction, eps = {eps:e}, {n} elements"),
                });
            }
            let (i, v, w) = best_two_eligible(a.row(x), &prices, &open);
            let bid = prices[i] + eps + (v - w);
            if market.counts[i] == volumes[i] {
                if let Some(y) = market.evict_min(i) {
                    evicted.push(y);
                }
                market.join(x, i, bid);
                prices[i] = market.min_bid(i).unwrap_or(prices[i]);
            } else {
                market.join(x, i, bid);
                if market.counts[i] == volumes[i] {
                    prices[i] = market.min_bid(i).unwrap_or(prices[i]);
                }
            }
        }
        evicted.sort_unstable();
        pending = evicted;
    }

    let closed: Vec<bool> = open.iter().map(|o| !o).collect();
    raise_closed_classes(&mut prices, &closed, a, &market.assignment);
    Ok(AuctionOutcome {
        partition: market.into_partition(k)?,
        duals: Duals {
            prices,
            incentives: vec![0.0; k],
        },
        bidding_events: events,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::auction::{check_eps_cs, total_benefit};

    #[test]
    fn two_by_two_diagonal() {
        let a = CoefficientMatrix::from_rows(&[vec![2.0, 0.0], vec![0.0, 2.0]]).unwrap();
        let out = membership_auction(0.01, &[1, 1], &a, &[0.0, 0.0]).unwrap();
        assert_eq!(out.partition.assignment(), &[0, 1]);
        assert_eq!(total_benefit(&out.partition, &a), 4.0);
        assert!(check_eps_cs(&out.partition, &a, &out.duals, 0.01).satisfied);
    }

    #[test]
    fn identical_rows_fill_the_only_open_class() {
        let rows = vec![vec![0.3, 0.3, 0.3]; 5];
        let a = CoefficientMatrix::from_rows(&rows).unwrap();
        let out = membership_auction(1e-3, &[5, 0, 0], &a, &[0.0; 3]).unwrap();
        assert_eq!(out.partition.sizes(), vec![5, 0, 0]);
        assert!(check_eps_cs(&out.partition, &a, &out.duals, 1e-3).satisfied);
    }

    #[test]
    fn zero_volume_class_gets_a_blocking_price() {
        let a = CoefficientMatrix::from_rows(&[vec![0.0, 5.0], vec![1.0, 4.0]]).unwrap();
        let out = membership_auction(1e-3, &[2, 0], &a, &[0.0; 2]).unwrap();
        assert_eq!(out.partition.sizes(), vec![2, 0]);
        assert!(check_eps_cs(&out.partition, &a, &out.duals, 1e-3).satisfied);
    }

    #[test]
    fn volume_mismatch_is_infeasible() {
        let a = CoefficientMatrix::from_rows(&[vec![1.0, 0.0]]).unwrap();
        assert!(matches!(
            membership_auction(0.1, &[1, 1], &a, &[0.0; 2]),
            Err(MaladyError::Infeasible(_))
        ));
    }

    #[test]
    fn single_class_is_rejected() {
        let a = CoefficientMatrix::from_rows(&[vec![1.0]]).unwrap();
        assert!(matches!(
            membership_auction(0.1, &[1], &a, &[0.0]),
            Err(MaladyError::InvalidParameter(_))
        ));
    }
}
