//! Jamming that maximizes the relative eavesdropping rate when the
//! suspicious transmitter uses constant power.
//!
//! For a target ratio `t` the problem becomes the feasibility question
//! "is there a policy with `E[(X - t) r0] >= 0` and `E[q] <= Q`?". Its
//! Lagrange dual is positively homogeneous in `(mu, lambda)`, so the
//! target is infeasible iff the dual function goes negative somewhere; the
//! ellipsoid method looks for such a point. A bisection over `t` finds the
//! largest feasible target.

use nalgebra::DVector;

use crate::channel::{FadingState, StateEnsemble};
use crate::metrics::{evaluate_policy, rate, EvalReport, JammingPolicy, NoiseModel, TxPowerProfile};
use crate::numopt::ellipsoid::{
    ellipsoid_minimize, Bound, Ellipsoid, EllipsoidOptions, EllipsoidStatus, OracleAnswer,
};
use crate::numopt::sum::CompensatedSum;
use crate::solver_outage::required_power;
use crate::{Error, Result};

/// Smallest `lambda` used in the failure-branch stationary point.
pub const LAMBDA_FLOOR: f64 = 1e-12;

/// Tolerance below zero at which a dual value certifies infeasibility.
pub fn feas_tol(budget: f64) -> f64 {
    1e-8 * (1.0 + budget.abs())
}

/// Per-state constants of the fixed-power problem.
#[derive(Debug, Clone, Copy)]
pub(crate) struct P2State {
    required: f64,
    /// Rate of the suspicious link without jamming.
    r0_free: f64,
    /// Monitor rate; equals the suspicious rate when jamming to equality.
    r1: f64,
    g0p: f64,
    g2: f64,
    sigma0_sq: f64,
}

impl P2State {
    pub(crate) fn new(s: &FadingState, p: f64, noise: &NoiseModel) -> Self {
        Self {
            required: required_power(s, noise),
            r0_free: rate(s.g0 * p / noise.sigma0_sq),
            r1: rate(s.g1 * p / noise.sigma1_sq),
            g0p: s.g0 * p,
            g2: s.g2,
            sigma0_sq: noise.sigma0_sq,
        }
    }

    fn r0(&self, q: f64) -> f64 {
        rate(self.g0p / (self.g2 * q + self.sigma0_sq))
    }

    /// Maximizer of `-mu t r0(q) - lambda q` over `q >= 0`, before clamping
    /// to the required power.
    fn failure_power(&self, mu: f64, lambda: f64, t: f64) -> f64 {
        if self.g2 <= 0.0 || mu * t <= 0.0 {
            return 0.0;
        }
        let lambda = lambda.max(LAMBDA_FLOOR);
        let k = t * mu * self.g0p * self.g2 / (std::f64::consts::LN_2 * lambda);
        // Positive root of y (y + g0 P) = k, written without cancellation.
        let y = 2.0 * k / (self.g0p + (self.g0p * self.g0p + 4.0 * k).sqrt());
        ((y - self.sigma0_sq) / self.g2).max(0.0)
    }
}

/// Per-state maximizer of the partial Lagrangian.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct P2Choice {
    pub q: f64,
    pub value: f64,
    pub success: bool,
    /// Suspicious rate at the chosen power.
    pub r0: f64,
}

pub(crate) fn choose_p2(st: &P2State, mu: f64, lambda: f64, t: f64) -> P2Choice {
    if st.required <= 0.0 {
        return P2Choice {
            q: 0.0,
            value: mu * (1.0 - t) * st.r0_free,
            success: true,
            r0: st.r0_free,
        };
    }
    let q_bar = st.failure_power(mu, lambda, t).min(st.required);
    let r_fail = st.r0(q_bar);
    let v2 = -mu * t * r_fail - lambda * q_bar;
    if st.required.is_finite() {
        let v1 = mu * (1.0 - t) * st.r1 - lambda * st.required;
        if v1 >= v2 {
            return P2Choice { q: st.required, value: v1, success: true, r0: st.r1 };
        }
    }
    P2Choice { q: q_bar, value: v2, success: false, r0: r_fail }
}

/// Best jamming power in one state for the dual variables `(mu, lambda)`
/// and target `t`; returns the power and the integrand value
/// `mu (X - t) r0 - lambda q`.
pub fn dual_subproblem_p2(
    s: &FadingState,
    p: f64,
    noise: &NoiseModel,
    mu: f64,
    lambda: f64,
    t: f64,
) -> (f64, f64) {
    let c = choose_p2(&P2State::new(s, p, noise), mu, lambda, t);
    (c.q, c.value)
}

/// Dual function and subgradient at per-state optima.
#[derive(Debug, Clone, PartialEq)]
pub struct DualEval {
    pub value: f64,
    pub subgradient: Vec<f64>,
    pub q: Vec<f64>,
    pub avg_power: f64,
}

pub(crate) struct P2Problem<'a> {
    ens: &'a StateEnsemble,
    states: Vec<P2State>,
    budget: f64,
}

impl<'a> P2Problem<'a> {
    pub(crate) fn new(ens: &'a StateEnsemble, p: f64, noise: &NoiseModel, budget: f64) -> Self {
        let states = ens.states().iter().map(|s| P2State::new(s, p, noise)).collect();
        Self { ens, states, budget }
    }

    fn choices(&self, mu: f64, lambda: f64, t: f64) -> Vec<P2Choice> {
        self.states.iter().map(|s| choose_p2(s, mu, lambda, t)).collect()
    }

    fn eval(&self, mu: f64, lambda: f64, t: f64) -> (DualEval, Vec<P2Choice>) {
        let ch = self.choices(mu, lambda, t);
        let total = self.ens.total_weight();
        let w = self.ens.weights();
        let mut val = CompensatedSum::new();
        let mut gmu = CompensatedSum::new();
        let mut eq = CompensatedSum::new();
        for (c, wi) in ch.iter().zip(w) {
            val.add(wi * c.value);
            let x = if c.success { 1.0 } else { 0.0 };
            gmu.add(wi * (x - t) * c.r0);
            eq.add(wi * c.q);
        }
        let avg_q = eq.value() / total;
        let d = DualEval {
            value: val.value() / total + lambda * self.budget,
            subgradient: vec![gmu.value() / total, self.budget - avg_q],
            q: ch.iter().map(|c| c.q).collect(),
            avg_power: avg_q,
        };
        (d, ch)
    }
}

/// Dual function of the fixed-power feasibility problem,
/// `f2 = E[max_q mu (X - t) r0 - lambda q] + lambda Q`.
pub fn dual_value_p2(
    ens: &StateEnsemble,
    p: f64,
    noise: &NoiseModel,
    budget: f64,
    mu: f64,
    lambda: f64,
    t: f64,
) -> DualEval {
    P2Problem::new(ens, p, noise, budget).eval(mu, lambda, t).0
}

#[derive(Debug, Clone, PartialEq)]
pub enum Feasibility {
    Feasible {
        policy: JammingPolicy,
        mu: f64,
        lambda: f64,
        status: EllipsoidStatus,
        iterations: usize,
    },
    Infeasible {
        mu: f64,
        lambda: f64,
        iterations: usize,
    },
}

impl Feasibility {
    pub fn is_feasible(&self) -> bool {
        matches!(self, Self::Feasible { .. })
    }
}

/// Tuning for the fixed-power solver.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FixedOptions {
    pub t_tol: f64,
    pub ellipsoid: EllipsoidOptions,
}

impl Default for FixedOptions {
    fn default() -> Self {
        Self {
            t_tol: 1e-3,
            ellipsoid: EllipsoidOptions {
                max_restarts: 0,
                ..EllipsoidOptions::default()
            },
        }
    }
}

/// Initial dual search region: ball of radius 1e3 around all-ones.
pub(crate) fn initial_ellipsoid(dim: usize) -> Ellipsoid {
    Ellipsoid::ball(DVector::from_element(dim, 1.0), 1e3)
}

fn check_inputs(p: f64, budget: f64, t: f64) -> Result<()> {
    if !(p.is_finite() && p > 0.0) {
        return Err(Error::Contract(format!("transmit power must be positive, got {p}")));
    }
    if !(budget.is_finite() && budget >= 0.0) {
        return Err(Error::Contract(format!("jamming budget must be finite and >= 0, got {budget}")));
    }
    if !(0.0..=1.0).contains(&t) {
        return Err(Error::Contract(format!("target ratio must lie in [0, 1], got {t}")));
    }
    Ok(())
}

/// Decides whether relative rate `t` is attainable within budget `Q`.
pub fn feasibility_p22(
    ens: &StateEnsemble,
    p: f64,
    noise: &NoiseModel,
    budget: f64,
    t: f64,
) -> Result<Feasibility> {
    feasibility_p22_with(ens, p, noise, budget, t, &FixedOptions::default())
}

pub fn feasibility_p22_with(
    ens: &StateEnsemble,
    p: f64,
    noise: &NoiseModel,
    budget: f64,
    t: f64,
    opts: &FixedOptions,
) -> Result<Feasibility> {
    check_inputs(p, budget, t)?;
    noise.validate()?;
    let prob = P2Problem::new(ens, p, noise, budget);
    if budget == 0.0 {
        let pol = JammingPolicy::zeros(ens.len(), "optimal");
        let (d, _) = prob.eval(1.0, 1.0, t);
        return Ok(if d.subgradient[0] >= 0.0 {
            Feasibility::Feasible { policy: pol, mu: 1.0, lambda: 0.0, status: EllipsoidStatus::OracleStop, iterations: 0 }
        } else {
            Feasibility::Infeasible { mu: 1.0, lambda: 0.0, iterations: 0 }
        });
    }
    // Powers are measured in units of the budget inside the search, so
    // both dual coordinates are of order one.
    let scale = budget;
    let mut certificate: Option<Vec<f64>> = None;
    let ell_opts = EllipsoidOptions {
        early_exit: Some(-feas_tol(budget)),
        ..opts.ellipsoid
    };
    let out = ellipsoid_minimize(
        |x: &DVector<f64>| {
            let (mu, lambda) = (x[0], x[1] / scale);
            let (d, _) = prob.eval(mu, lambda, t);
            let stop = d.subgradient[0] >= 0.0 && d.subgradient[1] >= 0.0;
            if stop {
                certificate = Some(d.q.clone());
            }
            Ok(OracleAnswer {
                value: d.value,
                subgradient: DVector::from_vec(vec![d.subgradient[0], d.subgradient[1] / scale]),
                stop,
            })
        },
        initial_ellipsoid(2),
        &[Bound::NonNegative, Bound::NonNegative],
        &ell_opts,
    )?;
    let (mu, lambda) = (out.point[0], out.point[1] / scale);
    match out.status {
        EllipsoidStatus::EarlyExit => Ok(Feasibility::Infeasible { mu, lambda, iterations: out.iterations }),
        EllipsoidStatus::OracleStop => Ok(Feasibility::Feasible {
            policy: JammingPolicy::new(certificate.expect("certificate recorded"), "optimal")?,
            mu,
            lambda,
            status: out.status,
            iterations: out.iterations,
        }),
        EllipsoidStatus::Converged | EllipsoidStatus::IterationCap => {
            let (q, lambda_rec) = recover_p2(&prob, p, noise, t)?;
            Ok(Feasibility::Feasible {
                policy: JammingPolicy::new(q, "optimal")?,
                mu,
                lambda: lambda_rec.unwrap_or(lambda),
                status: out.status,
                iterations: out.iterations,
            })
        }
    }
}

/// Smallest `lambda` (normalized by `scale`) at which `avg_power(lambda) <= budget`,
/// together with the largest normalized value known to exceed the budget.
pub(crate) fn search_lambda<F>(mut avg_power: F, budget: f64) -> (f64, Option<f64>)
where
    F: FnMut(f64) -> f64,
{
    let slack = 1e-12 * (1.0 + budget);
    let mut fits = |l: f64| avg_power(l) <= budget + slack;
    let (mut lo, mut hi);
    if fits(1.0) {
        hi = 1.0;
        lo = 0.5;
        while fits(lo) {
            hi = lo;
            lo *= 0.5;
            if lo < 1e-15 {
                return (hi, None);
            }
        }
    } else {
        lo = 1.0;
        hi = 2.0;
        while !fits(hi) {
            lo = hi;
            hi *= 2.0;
            if hi > 1e300 {
                return (f64::INFINITY, Some(lo));
            }
        }
    }
    for _ in 0..200 {
        if hi - lo <= 1e-13 * hi {
            break;
        }
        let mid = 0.5 * (lo + hi);
        if fits(mid) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    (hi, Some(lo))
}

/// Brings an over-budget allocation within budget: failure-state powers are
/// scaled down first; if that is not enough, successful states are dropped
/// in decreasing order of power per unit of benefit and the remaining
/// budget is shared back to failure states proportionally.
pub(crate) fn repair_budget(
    ens: &StateEnsemble,
    q: &[f64],
    success: &[bool],
    benefit: &[f64],
    budget: f64,
) -> Vec<f64> {
    let total = ens.total_weight();
    let w = ens.weights();
    let mass = |q: &[f64], pick: &dyn Fn(usize) -> bool| -> f64 {
        let s: CompensatedSum = (0..q.len()).filter(|&i| pick(i)).map(|i| w[i] * q[i]).collect();
        s.value() / total
    };
    let mut out = q.to_vec();
    let jam_success = |i: usize| success[i] && q[i] > 0.0;
    let fail_mass = mass(q, &|i| !success[i]);
    let succ_mass = mass(q, &jam_success);
    if succ_mass + fail_mass <= budget {
        return out;
    }
    if succ_mass <= budget {
        let k = ((budget - succ_mass) / fail_mass).clamp(0.0, 1.0);
        for i in 0..q.len() {
            if !success[i] {
                out[i] = q[i] * k;
            }
        }
        return out;
    }
    let mut order: Vec<usize> = (0..q.len()).filter(|&i| jam_success(i)).collect();
    let ratio = |i: usize| q[i] / benefit[i].max(f64::MIN_POSITIVE);
    order.sort_by(|&a, &b| ratio(b).total_cmp(&ratio(a)).then(a.cmp(&b)));
    let mut succ = CompensatedSum::new();
    for i in (0..q.len()).filter(|&i| jam_success(i)) {
        succ.add(w[i] * q[i]);
    }
    for &i in &order {
        if succ.value() / total <= budget {
            break;
        }
        succ.add(-w[i] * q[i]);
        out[i] = 0.0;
    }
    let left = (budget - succ.value() / total).max(0.0);
    let k = if fail_mass > 0.0 { (left / fail_mass).min(1.0) } else { 0.0 };
    for i in 0..q.len() {
        if !success[i] {
            out[i] = q[i] * k;
        }
    }
    // A residual rounding excess is removed by a final uniform shrink.
    let used = ens.mean(&out);
    if used > budget {
        let k = budget / used;
        out.iter_mut().for_each(|v| *v *= k);
    }
    out
}

/// Budget-feasible policy from the dual: with `mu = 1`, the smallest
/// `lambda` whose per-state optimum fits the budget, compared against a
/// repaired version of the policy just below that `lambda`.
fn recover_p2(prob: &P2Problem<'_>, p: f64, noise: &NoiseModel, t: f64) -> Result<(Vec<f64>, Option<f64>)> {
    let scale = prob.budget;
    let (hi, lo) = search_lambda(|l| prob.eval(1.0, l / scale, t).0.avg_power, prob.budget);
    let mut candidates = Vec::new();
    if hi.is_finite() {
        candidates.push(prob.choices(1.0, hi / scale, t).iter().map(|c| c.q).collect::<Vec<_>>());
    }
    if let Some(lo) = lo {
        let ch = prob.choices(1.0, lo / scale, t);
        let q: Vec<f64> = ch.iter().map(|c| c.q).collect();
        let success: Vec<bool> = ch.iter().map(|c| c.success).collect();
        let benefit: Vec<f64> = prob
            .states
            .iter()
            .map(|s| (1.0 - t) * s.r1 + t * s.r0_free)
            .collect();
        candidates.push(repair_budget(prob.ens, &q, &success, &benefit, prob.budget));
    }
    let tx = TxPowerProfile::fixed(prob.ens.len(), p);
    let mut best: Option<(Vec<f64>, f64)> = None;
    for q in candidates {
        let pol = JammingPolicy::new(q, "optimal")?;
        let r = evaluate_policy(prob.ens, &pol, &tx, noise)?.relative_rate;
        if best.as_ref().is_none_or(|(_, b)| r > *b) {
            best = Some((pol.q, r));
        }
    }
    let (q, _) = best.unwrap_or_else(|| (vec![0.0; prob.ens.len()], 0.0));
    Ok((q, hi.is_finite().then(|| hi / scale)))
}

/// One step of the bisection over the target ratio.
#[derive(Debug, Clone, PartialEq)]
pub struct TargetStep {
    pub t: f64,
    pub feasible: bool,
    pub iterations: usize,
    /// Relative rate achieved by the recovered policy, when feasible.
    pub achieved: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FixedPowerSolution {
    pub policy: JammingPolicy,
    pub t_star: f64,
    pub mu_star: f64,
    pub lambda_star: f64,
    pub trace: Vec<TargetStep>,
    pub report: EvalReport,
}

pub fn solve_fixed(ens: &StateEnsemble, p: f64, noise: &NoiseModel, budget: f64) -> Result<FixedPowerSolution> {
    solve_fixed_with(ens, p, noise, budget, &FixedOptions::default())
}

pub fn solve_fixed_with(
    ens: &StateEnsemble,
    p: f64,
    noise: &NoiseModel,
    budget: f64,
    opts: &FixedOptions,
) -> Result<FixedPowerSolution> {
    check_inputs(p, budget, 0.0)?;
    noise.validate()?;
    let tx = TxPowerProfile::fixed(ens.len(), p);
    let passive = JammingPolicy::zeros(ens.len(), "optimal");
    let passive_report = evaluate_policy(ens, &passive, &tx, noise)?;
    let mut best = (passive, passive_report);
    let (mut mu_star, mut lambda_star) = (0.0, 0.0);
    let mut trace = Vec::new();

    let mut step = |t: f64, best: &mut (JammingPolicy, EvalReport), mu_star: &mut f64, lambda_star: &mut f64| -> Result<bool> {
        let f = feasibility_p22_with(ens, p, noise, budget, t, opts)?;
        match f {
            Feasibility::Feasible { policy, mu, lambda, iterations, .. } => {
                let report = evaluate_policy(ens, &policy, &tx, noise)?;
                if policy.avg_power(ens) <= budget + 1e-9 && report.relative_rate > best.1.relative_rate {
                    *best = (policy, report);
                }
                *mu_star = mu;
                *lambda_star = lambda;
                trace.push(TargetStep { t, feasible: true, iterations, achieved: Some(report.relative_rate) });
                Ok(true)
            }
            Feasibility::Infeasible { iterations, .. } => {
                trace.push(TargetStep { t, feasible: false, iterations, achieved: None });
                Ok(false)
            }
        }
    };

    if !step(1.0, &mut best, &mut mu_star, &mut lambda_star)? {
        let (mut lo, mut hi) = (best.1.relative_rate, 1.0);
        while hi - lo > opts.t_tol {
            let t = 0.5 * (lo + hi);
            if step(t, &mut best, &mut mu_star, &mut lambda_star)? {
                lo = t.max(best.1.relative_rate);
            } else {
                hi = t;
            }
        }
    }
    let (policy, report) = best;
    Ok(FixedPowerSolution {
        t_star: report.relative_rate,
        policy,
        mu_star,
        lambda_star,
        trace,
        report,
    })
}
