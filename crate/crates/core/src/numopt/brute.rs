//! Exhaustive enumeration over per-state power grids, used as an
//! independent oracle for the solvers.

use crate::channel::StateEnsemble;
use crate::metrics::{evaluate_policy, non_outage, JammingPolicy, NoiseModel, TxPowerProfile};
use crate::{Error, Result};

/// Largest number of allocations enumerated.
pub const BRUTE_FORCE_CAP: u64 = 10_000_000;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BruteObjective {
    NonOutage { noise: NoiseModel },
    /// Relative eavesdropping rate with constant transmit power `p`.
    RelativeRateFixed { p: f64, noise: NoiseModel },
}

impl BruteObjective {
    fn eval(&self, ens: &StateEnsemble, q: &[f64]) -> Result<f64> {
        match self {
            Self::NonOutage { noise } => Ok(non_outage(ens, q, noise)),
            Self::RelativeRateFixed { p, noise } => {
                let pol = JammingPolicy { q: q.to_vec(), label: String::new() };
                let tx = TxPowerProfile::fixed(ens.len(), *p);
                Ok(evaluate_policy(ens, &pol, &tx, noise)?.relative_rate)
            }
        }
    }
}

/// Best allocation drawn from `grid[i]` for each state `i` with weighted
/// mean power at most `budget`. Ties keep the first allocation in
/// lexicographic grid order.
pub fn brute_force_jam(
    ens: &StateEnsemble,
    budget: f64,
    grid: &[Vec<f64>],
    objective: &BruteObjective,
) -> Result<(Vec<f64>, f64)> {
    let n = ens.len();
    if grid.len() != n {
        return Err(Error::Contract(format!("{} grids for {n} states", grid.len())));
    }
    if grid.iter().any(|g| g.is_empty()) {
        return Err(Error::Contract("every state needs at least one grid value".into()));
    }
    let combos: f64 = grid.iter().map(|g| g.len() as f64).product();
    if combos > BRUTE_FORCE_CAP as f64 {
        return Err(Error::Size { combinations: combos, cap: BRUTE_FORCE_CAP });
    }
    let slack = 1e-12 * (1.0 + budget.abs());
    let mut idx = vec![0usize; n];
    let mut best: Option<(Vec<f64>, f64)> = None;
    let mut q = vec![0.0; n];
    loop {
        for (i, k) in idx.iter().enumerate() {
            q[i] = grid[i][*k];
        }
        if ens.mean(&q) <= budget + slack {
            let v = objective.eval(ens, &q)?;
            if best.as_ref().is_none_or(|(_, b)| v > *b) {
                best = Some((q.clone(), v));
            }
        }
        // Odometer increment, last state fastest.
        let mut pos = n;
        loop {
            if pos == 0 {
                return best.ok_or_else(|| {
                    Error::Contract("no grid allocation satisfies the budget".into())
                });
            }
            pos -= 1;
            idx[pos] += 1;
            if idx[pos] < grid[pos].len() {
                break;
            }
            idx[pos] = 0;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::FadingState;
    use proptest::prelude::*;

    fn needs(c: f64) -> FadingState {
        // g0 = 1, g2 = 1, unit noise: required power (1/g1 - 1) = c.
        FadingState::new(1.0, 1.0 / (1.0 + c), 1.0, 0.0)
    }

    #[test]
    fn single_state_jams_when_affordable() {
        let ens = StateEnsemble::uniform(vec![needs(2.0)], 0, "").unwrap();
        let obj = BruteObjective::NonOutage { noise: NoiseModel::unit() };
        let (q, v) = brute_force_jam(&ens, 2.5, &[vec![0.0, 2.0]], &obj).unwrap();
        assert_eq!(q, vec![2.0]);
        assert_eq!(v, 1.0);
    }

    #[test]
    fn two_states_knapsack() {
        let ens = StateEnsemble::uniform(vec![needs(1.0), needs(3.0)], 0, "").unwrap();
        let obj = BruteObjective::NonOutage { noise: NoiseModel::unit() };
        let grid = vec![vec![0.0, 1.0], vec![0.0, 3.0]];
        let (q, v) = brute_force_jam(&ens, 1.0, &grid, &obj).unwrap();
        assert_eq!(q, vec![1.0, 0.0]);
        assert_eq!(v, 0.5);
    }

    #[test]
    fn zero_budget_is_all_zero() {
        let ens = StateEnsemble::uniform(vec![needs(1.0), needs(3.0)], 0, "").unwrap();
        let obj = BruteObjective::NonOutage { noise: NoiseModel::unit() };
        let grid = vec![vec![0.0, 1.0], vec![0.0, 3.0]];
        let (q, _) = brute_force_jam(&ens, 0.0, &grid, &obj).unwrap();
        assert_eq!(q, vec![0.0, 0.0]);
    }

    #[test]
    fn size_cap_enforced() {
        let ens = StateEnsemble::uniform(vec![needs(1.0); 24], 0, "").unwrap();
        let grid = vec![vec![0.0, 1.0, 2.0]; 24];
        let obj = BruteObjective::NonOutage { noise: NoiseModel::unit() };
        let e = brute_force_jam(&ens, 1.0, &grid, &obj).unwrap_err();
        assert!(matches!(e, Error::Size { .. }));
    }

    proptest! {
        #[test]
        fn beats_random_feasible_allocations(
            cs in proptest::collection::vec(0.1f64..5.0, 2..6),
            budget in 0.0f64..4.0,
            picks in proptest::collection::vec(proptest::collection::vec(0usize..3, 6), 20),
        ) {
            let ens = StateEnsemble::uniform(cs.iter().map(|c| needs(*c)).collect(), 0, "").unwrap();
            let grid: Vec<Vec<f64>> = cs.iter().map(|c| vec![0.0, 0.5 * c, *c]).collect();
            let obj = BruteObjective::RelativeRateFixed { p: 10.0, noise: NoiseModel::unit() };
            let (_, best) = brute_force_jam(&ens, budget, &grid, &obj).unwrap();
            for pick in picks {
                let q: Vec<f64> = grid.iter().zip(&pick).map(|(g, k)| g[*k]).collect();
                if ens.mean(&q) <= budget {
                    prop_assert!(obj.eval(&ens, &q).unwrap() <= best);
                }
            }
        }
    }
}
