//! Jamming that maximizes the eavesdropping non-outage probability under an
//! average power budget, with or without residual self-interference.
//!
//! The optimum is a threshold policy: a state is jammed with exactly its
//! required power iff that power is below `1/lambda`. On a finite ensemble
//! the threshold is realized by taking states in ascending order of
//! required power while the budget allows.

use crate::channel::{FadingState, StateEnsemble};
use crate::metrics::{non_outage, JammingPolicy, NoiseModel};
use crate::numopt::bisection::{bisect_threshold, BisectionSetup};
use crate::numopt::sum::CompensatedSum;
use crate::{Error, Result};

/// Minimal jamming power for the monitor to decode with perfect
/// cancellation, `(g0 s1 / g1 - s0) / g2`. Non-positive values mean the
/// monitor already decodes.
pub fn required_power(s: &FadingState, noise: &NoiseModel) -> f64 {
    if s.g1 <= 0.0 {
        return f64::INFINITY;
    }
    let num = s.g0 * noise.sigma1_sq / s.g1 - noise.sigma0_sq;
    if s.g2 <= 0.0 {
        return if num > 0.0 { f64::INFINITY } else { 0.0 };
    }
    num / s.g2
}

/// Minimal jamming power with residual self-interference,
/// `(g0 s1 - g1 s0) / (g1 g2 - g0 phi)`, clamped at 0; infinite when the
/// loop-back is too strong for jamming to help.
pub fn required_power_si(s: &FadingState, noise: &NoiseModel) -> f64 {
    if s.phi == 0.0 {
        return required_power(s, noise).max(0.0);
    }
    let num = s.g0 * noise.sigma1_sq - s.g1 * noise.sigma0_sq;
    if num <= 0.0 {
        return 0.0;
    }
    let den = s.g1 * s.g2 - s.g0 * s.phi;
    if den <= 0.0 {
        return f64::INFINITY;
    }
    num / den
}

#[derive(Debug, Clone, PartialEq)]
pub struct OutageSolution {
    pub policy: JammingPolicy,
    pub lambda_star: f64,
    /// `1 / lambda_star`; infinite when every jammable state fits.
    pub threshold: f64,
    pub non_outage: f64,
    pub avg_power: f64,
}

/// Per-state required powers under the chosen model.
pub fn required_powers(ens: &StateEnsemble, noise: &NoiseModel, si: bool) -> Vec<f64> {
    ens.states()
        .iter()
        .map(|s| if si { required_power_si(s, noise) } else { required_power(s, noise) })
        .collect()
}

pub fn solve_outage(ens: &StateEnsemble, budget: f64, noise: &NoiseModel, si: bool) -> Result<OutageSolution> {
    if !(budget.is_finite() && budget >= 0.0) {
        return Err(Error::Contract(format!("jamming budget must be finite and >= 0, got {budget}")));
    }
    noise.validate()?;
    // Without the self-interference model the loop-back gain is ignored
    // everywhere, including in the success indicator.
    let model;
    let ens = if si {
        ens
    } else {
        model = ens.without_self_interference();
        &model
    };
    let c = required_powers(ens, noise, si);
    let w = ens.weights();
    let total = ens.total_weight();

    let mut order: Vec<usize> = (0..c.len()).filter(|&i| c[i] > 0.0 && c[i].is_finite()).collect();
    order.sort_by(|&a, &b| c[a].total_cmp(&c[b]).then(a.cmp(&b)));

    let slack = 1e-12 * (1.0 + budget);
    let mut q = vec![0.0; c.len()];
    let mut spent = CompensatedSum::new();
    let mut first_unjammed = None;
    for &i in &order {
        let mut trial = spent;
        trial.add(w[i] * c[i]);
        if trial.value() / total <= budget + slack {
            spent = trial;
            q[i] = c[i];
        } else {
            first_unjammed = Some(i);
            break;
        }
    }

    let lambda_star = match first_unjammed {
        None => 0.0,
        Some(_) => dual_threshold(&c, w, total, budget, c[order[0]])?,
    };
    let threshold = if lambda_star > 0.0 { 1.0 / lambda_star } else { f64::INFINITY };
    let label = if si { "optimal-si" } else { "optimal" };
    let policy = JammingPolicy { q, label: label.into() };
    Ok(OutageSolution {
        non_outage: non_outage(ens, &policy.q, noise),
        avg_power: policy.avg_power(ens),
        policy,
        lambda_star,
        threshold,
    })
}

/// Smallest `lambda` whose threshold set `{0 < c < 1/lambda}` fits the budget.
fn dual_threshold(c: &[f64], w: &[f64], total: f64, budget: f64, c_min: f64) -> Result<f64> {
    let slack = 1e-12 * (1.0 + budget);
    let fits = |lambda: f64| {
        let cut = 1.0 / lambda;
        let used: CompensatedSum = c
            .iter()
            .zip(w)
            .filter(|(ci, _)| **ci > 0.0 && **ci < cut)
            .map(|(ci, wi)| wi * ci)
            .collect();
        budget - used.value() / total >= -slack
    };
    let hi = 2.0 / c_min;
    let setup = BisectionSetup::new(0.0, hi).tol_abs(f64::MIN_POSITIVE).tol_rel(1e-10);
    Ok(bisect_threshold(fits, setup)?.x)
}
