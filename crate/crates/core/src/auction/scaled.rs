use serde::Serialize;

use super::{
    lower_bound_auction, total_benefit, upper_bound_auction, AuctionSchedule, Bounds, CoefficientMatrix,
    Duals, Partition,
};
use crate::error::{MaladyError, Result};

/// Debug record emitted after each epsilon round.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RoundReport {
    pub epsilon: f64,
    pub p: Vec<f64>,
    pub t: Vec<f64>,
    pub assignment: Vec<usize>,
    pub total_benefit: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScaledOutcome {
    pub partition: Partition,
    pub duals: Duals,
    /// Epsilon of the last completed round.
    pub final_epsilon: f64,
    pub rounds: usize,
}

/// The epsilon values visited by [`scaled_auction`]: `epsilon0, epsilon0/alpha, ...`
/// while `epsilon >= epsilon_min / n_total`.
pub fn epsilon_schedule(schedule: &AuctionSchedule, n_total: usize) -> Result<Vec<f64>> {
    schedule.validate()?;
    if n_total == 0 {
        return Err(MaladyError::InvalidParameter("n_total must be positive".into()));
    }
    let threshold = schedule.epsilon_min / n_total as f64;
    if schedule.epsilon0 < threshold {
        return Err(MaladyError::Config(format!(
            "epsilon0 = {:e} is below the stopping threshold epsilon_min / N = {threshold:e}; no auction round would run",
            schedule.epsilon0
        )));
    }
    let mut eps = schedule.epsilon0;
    let mut out = Vec::new();
    while eps >= threshold {
        out.push(eps);
        eps /= schedule.alpha;
    }
    Ok(out)
}

/// Upper-bound then lower-bound auction per epsilon round, warm-starting the
/// duals and dividing epsilon by `alpha` until it drops below `epsilon_min / n_total`.
/// Duals start at zero.
pub fn scaled_auction(
    a: &CoefficientMatrix,
    bounds: &Bounds,
    schedule: &AuctionSchedule,
    n_total: usize,
) -> Result<ScaledOutcome> {
    scaled_auction_observed(a, bounds, schedule, n_total, &mut |_| {})
}

/// As [`scaled_auction`], reporting every completed round to `observer`.
pub fn scaled_auction_observed(
    a: &CoefficientMatrix,
    bounds: &Bounds,
    schedule: &AuctionSchedule,
    n_total: usize,
    observer: &mut dyn FnMut(&RoundReport),
) -> Result<ScaledOutcome> {
    let epsilons = epsilon_schedule(schedule, n_total)?;
    bounds.check_feasible(a.len())?;

    let mut duals = Duals::zeros(bounds.num_classes());
    let mut last: Option<Partition> = None;
    for &eps in &epsilons {
        let forward = upper_bound_auction(eps, bounds, a, &duals)?;
        let reverse = lower_bound_auction(eps, bounds, a, &forward.duals, &forward.partition)?;
        duals = reverse.duals;
        observer(&RoundReport {
            epsilon: eps,
            p: duals.prices.clone(),
            t: duals.incentives.clone(),
            assignment: reverse.partition.assignment().to_vec(),
            total_benefit: total_benefit(&reverse.partition, a),
        });
        last = Some(reverse.partition);
    }
    let partition = last.ok_or_else(|| MaladyError::Config("schedule produced no auction round".into()))?;
    Ok(ScaledOutcome {
        partition,
        duals,
        final_epsilon: *epsilons.last().expect("at least one round"),
        rounds: epsilons.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::auction::check_eps_cs;

    #[test]
    fn default_schedule_for_a_thousand_points() {
        let eps = epsilon_schedule(&AuctionSchedule::default(), 1000).unwrap();
        assert_eq!(eps, vec![1e-7, 2.5e-8, 6.25e-9, 1.5625e-9]);
    }

    #[test]
    fn schedule_below_threshold_is_rejected() {
        let schedule = AuctionSchedule {
            epsilon0: 1e-10,
            epsilon_min: 1e-6,
            alpha: 4.0,
        };
        assert!(matches!(epsilon_schedule(&schedule, 1000), Err(MaladyError::Config(_))));
    }

    #[test]
    fn single_unconstrained_round_is_row_argmax() {
        let rows = vec![vec![0.3, 0.1], vec![0.0, 0.8], vec![0.6, 0.5]];
        let a = CoefficientMatrix::from_rows(&rows).unwrap();
        let schedule = AuctionSchedule {
            epsilon0: 0.01,
            epsilon_min: 0.01,
            alpha: 4.0,
        };
        let out = scaled_auction(&a, &Bounds::unconstrained(2, 3).unwrap(), &schedule, 1).unwrap();
        assert_eq!(out.rounds, 1);
        assert_eq!(out.partition.assignment(), &[0, 1, 0]);
    }

    #[test]
    fn rounds_are_reported_and_final_matching_is_feasible() {
        let rows = vec![
            vec![0.9, 0.1, 0.0],
            vec![0.8, 0.2, 0.1],
            vec![0.7, 0.6, 0.5],
            vec![0.9, 0.0, 0.3],
            vec![0.1, 0.2, 0.3],
        ];
        let a = CoefficientMatrix::from_rows(&rows).unwrap();
        let bounds = Bounds::new(vec![1, 1, 1], vec![2, 2, 2]).unwrap();
        let mut reports = Vec::new();
        let schedule = AuctionSchedule {
            epsilon0: 1e-3,
            epsilon_min: 1e-6,
            alpha: 4.0,
        };
        let out = scaled_auction_observed(&a, &bounds, &schedule, 5, &mut |r| {
            reports.push(r.clone())
        })
        .unwrap();
        assert_eq!(reports.len(), out.rounds);
        assert!(out.partition.within(&bounds));
        assert!(check_eps_cs(&out.partition, &a, &out.duals, out.final_epsilon).satisfied);
        let json = serde_json::to_string(&reports[0]).unwrap();
        assert!(json.starts_with("{\"epsilon\":"));
    }
}
