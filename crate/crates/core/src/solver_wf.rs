//! Relative-rate jamming when the suspicious transmitter water-fills
//! against the interference it sees.
//!
//! The transmitter's power follows `p = [L - (g2 q + s0) / g0]^+` with
//! water level `L = 1 / (ln2 beta)`. For a fixed `beta` the monitor's
//! problem is solved like the fixed-power case, with an extra dual for the
//! transmitter's power constraint. Only `beta` in `[beta_min, beta_max]`
//! admits a jamming policy within budget; `beta_max` is the passive water
//! level and `beta_min` comes from a bisection on a feasibility test. The
//! outer search over `beta` is a grid scan with optional golden-section
//! refinement.

use nalgebra::DVector;
use rayon::prelude::*;

use crate::channel::{fmt_f64, FadingState, StateEnsemble};
use crate::metrics::{evaluate_policy, rate, EvalReport, JammingPolicy, NoiseModel, TxPowerProfile};
use crate::numopt::bisection::{bisect_threshold, BisectionSetup};
use crate::numopt::ellipsoid::{
    ellipsoid_minimize, Bound, EllipsoidOptions, EllipsoidStatus, OracleAnswer,
};
use crate::numopt::sum::CompensatedSum;
use crate::solver_fixed::{feas_tol, initial_ellipsoid, repair_budget, search_lambda};
use crate::solver_outage::required_power;
use crate::{Error, Result};

const LN2: f64 = std::f64::consts::LN_2;

/// Water-filling response to a jamming profile.
#[derive(Debug, Clone, PartialEq)]
pub struct WaterfillProfile {
    pub beta: f64,
    /// Water level `1 / (ln2 beta)`.
    pub level: f64,
    pub p: Vec<f64>,
}

impl WaterfillProfile {
    pub fn to_tx(&self) -> TxPowerProfile {
        TxPowerProfile::waterfilling(self.p.clone(), self.beta)
    }
}

pub fn beta_from_level(level: f64) -> f64 {
    1.0 / (LN2 * level)
}

pub fn level_from_beta(beta: f64) -> f64 {
    1.0 / (LN2 * beta)
}

/// Noise-plus-interference floor `(g2 q + s0) / g0` seen by the transmitter.
fn floor_of(s: &FadingState, q: f64, noise: &NoiseModel) -> f64 {
    if s.g0 > 0.0 {
        (s.g2 * q + noise.sigma0_sq) / s.g0
    } else {
        f64::INFINITY
    }
}

/// Transmit powers with mean `P` against the jamming profile `q`.
///
/// The mean power is piecewise linear in the water level, so the level is
/// found exactly by scanning the floors in ascending order.
pub fn waterfill(ens: &StateEnsemble, policy: &JammingPolicy, p: f64, noise: &NoiseModel) -> Result<WaterfillProfile> {
    if !(p.is_finite() && p > 0.0) {
        return Err(Error::Contract(format!("transmit power must be positive, got {p}")));
    }
    if policy.len() != ens.len() {
        return Err(Error::Contract(format!("policy has {} states, ensemble {}", policy.len(), ens.len())));
    }
    let floors: Vec<f64> = ens
        .states()
        .iter()
        .zip(&policy.q)
        .map(|(s, q)| floor_of(s, *q, noise))
        .collect();
    let w = ens.weights();
    let mut order: Vec<usize> = (0..floors.len()).filter(|&i| floors[i].is_finite()).collect();
    if order.is_empty() {
        return Err(Error::Numerical("no state with a usable direct link".into()));
    }
    order.sort_by(|&a, &b| floors[a].total_cmp(&floors[b]).then(a.cmp(&b)));
    let target = p * ens.total_weight();
    let mut wsum = CompensatedSum::new();
    let mut asum = CompensatedSum::new();
    let mut level = f64::NAN;
    for (k, &i) in order.iter().enumerate() {
        wsum.add(w[i]);
        asum.add(w[i] * floors[i]);
        let l = (target + asum.value()) / wsum.value();
        let next = order.get(k + 1).map(|&j| floors[j]);
        if next.is_none_or(|a| a >= l) {
            level = l;
            break;
        }
    }
    let pw: Vec<f64> = floors.iter().map(|a| (level - a).max(0.0)).collect();
    Ok(WaterfillProfile { beta: beta_from_level(level), level, p: pw })
}

/// Water-filling against the passive policy.
pub fn beta_max(ens: &StateEnsemble, p: f64, noise: &NoiseModel) -> Result<f64> {
    Ok(waterfill(ens, &JammingPolicy::zeros(ens.len(), "passive"), p, noise)?.beta)
}

/// Evaluates a jamming policy with the transmitter water-filling against it.
pub fn evaluate_waterfilled(
    ens: &StateEnsemble,
    policy: &JammingPolicy,
    p: f64,
    noise: &NoiseModel,
) -> Result<(EvalReport, WaterfillProfile)> {
    let wf = waterfill(ens, policy, p, noise)?;
    let report = evaluate_policy(ens, policy, &wf.to_tx(), noise)?;
    Ok((report, wf))
}

/// Per-state constants at a fixed water level.
#[derive(Debug, Clone, Copy)]
struct WfState {
    g0: f64,
    g2: f64,
    sigma0_sq: f64,
    level: f64,
    required: f64,
    /// Jamming at which the transmitter stops using the state.
    q1: f64,
}

impl WfState {
    fn new(s: &FadingState, noise: &NoiseModel, level: f64) -> Self {
        let q1 = if s.g2 > 0.0 {
            ((s.g0 * level - noise.sigma0_sq) / s.g2).max(0.0)
        } else if s.g0 * level > noise.sigma0_sq {
            f64::INFINITY
        } else {
            0.0
        };
        Self {
            g0: s.g0,
            g2: s.g2,
            sigma0_sq: noise.sigma0_sq,
            level,
            required: required_power(s, noise),
            q1,
        }
    }

    fn p_hat(&self, q: f64) -> f64 {
        if self.g0 <= 0.0 {
            return 0.0;
        }
        (self.level - (self.g2 * q + self.sigma0_sq) / self.g0).max(0.0)
    }

    fn r_hat(&self, q: f64, p: f64) -> f64 {
        if p > 0.0 {
            rate(self.g0 * p / (self.g2 * q + self.sigma0_sq))
        } else {
            0.0
        }
    }
}

/// Per-state maximizer of the water-filling partial Lagrangian.
#[derive(Debug, Clone, Copy, PartialEq)]
struct WfChoice {
    q: f64,
    value: f64,
    success: bool,
    r: f64,
    p: f64,
}

fn choose_p3(st: &WfState, mu: f64, lambda: f64, zeta: f64, t: f64) -> WfChoice {
    let at = |q: f64, success: bool| {
        let p = st.p_hat(q);
        let r = st.r_hat(q, p);
        let x = if success { 1.0 } else { 0.0 };
        WfChoice { q, value: mu * (x - t) * r - lambda * q - zeta * p, success, r, p }
    };
    if st.g2 <= 0.0 || !st.q1.is_finite() {
        // Jamming cannot move anything at the receiver.
        return at(0.0, st.required <= 0.0);
    }
    let q2 = st.required.max(0.0);
    let den = LN2 * (st.g0 * lambda - zeta * st.g2);
    let q4 = if den > 0.0 { mu * t * st.g0 / den - st.sigma0_sq / st.g2 } else { f64::INFINITY };
    let q3 = st.q1.min(q2).min(q4).max(0.0);

    // Ties prefer the success branch, then the silenced branch.
    let mut best = WfChoice { q: st.q1, value: -lambda * st.q1, success: st.q1 >= q2, r: 0.0, p: 0.0 };
    if q2 < st.q1 {
        let v2 = at(q2, true);
        if v2.value >= best.value {
            best = v2;
        }
    }
    if st.q1.min(q2) > 0.0 {
        let v3 = at(q3, false);
        if v3.value > best.value {
            best = v3;
        }
    }
    best
}

/// Best jamming power in one state at water level `1/(ln2 beta)` for duals
/// `(mu, lambda, zeta)` and target `t`; returns the power and the integrand
/// value `mu (X - t) r - lambda q - zeta p`.
#[allow(clippy::too_many_arguments)]
pub fn dual_subproblem_p3(
    s: &FadingState,
    noise: &NoiseModel,
    beta: f64,
    mu: f64,
    lambda: f64,
    zeta: f64,
    t: f64,
) -> (f64, f64) {
    let c = choose_p3(&WfState::new(s, noise, level_from_beta(beta)), mu, lambda, zeta, t);
    (c.q, c.value)
}

/// Dual function of the water-filling problem at one `beta`.
#[derive(Debug, Clone, PartialEq)]
pub struct WfDualEval {
    pub value: f64,
    /// `(E[(X - t) r], Q - E[q], P - E[p])`.
    pub subgradient: [f64; 3],
    pub q: Vec<f64>,
}

struct P3Problem<'a> {
    ens: &'a StateEnsemble,
    states: Vec<WfState>,
    p: f64,
    budget: f64,
}

impl<'a> P3Problem<'a> {
    fn new(ens: &'a StateEnsemble, p: f64, noise: &NoiseModel, budget: f64, beta: f64) -> Self {
        let level = level_from_beta(beta);
        let states = ens.states().iter().map(|s| WfState::new(s, noise, level)).collect();
        Self { ens, states, p, budget }
    }

    fn choices(&self, mu: f64, lambda: f64, zeta: f64, t: f64) -> Vec<WfChoice> {
        self.states.iter().map(|s| choose_p3(s, mu, lambda, zeta, t)).collect()
    }

    fn eval(&self, mu: f64, lambda: f64, zeta: f64, t: f64) -> WfDualEval {
        let (value, subgradient) = self.eval_sums(mu, lambda, zeta, t);
        WfDualEval { value, subgradient, q: self.choices(mu, lambda, zeta, t).iter().map(|c| c.q).collect() }
    }

    /// Dual value and subgradient without materializing the policy.
    fn eval_sums(&self, mu: f64, lambda: f64, zeta: f64, t: f64) -> (f64, [f64; 3]) {
        let total = self.ens.total_weight();
        let mut val = CompensatedSum::new();
        let mut gmu = CompensatedSum::new();
        let mut eq = CompensatedSum::new();
        let mut ep = CompensatedSum::new();
        for (st, w) in self.states.iter().zip(self.ens.weights()) {
            let c = choose_p3(st, mu, lambda, zeta, t);
            val.add(w * c.value);
            let x = if c.success { 1.0 } else { 0.0 };
            gmu.add(w * (x - t) * c.r);
            eq.add(w * c.q);
            ep.add(w * c.p);
        }
        (
            val.value() / total + lambda * self.budget + zeta * self.p,
            [gmu.value() / total, self.budget - eq.value() / total, self.p - ep.value() / total],
        )
    }
}

/// `f3 = E[max_q mu (X - t) r - lambda q - zeta p] + lambda Q + zeta P`.
#[allow(clippy::too_many_arguments)]
pub fn dual_value_p3(
    ens: &StateEnsemble,
    p: f64,
    noise: &NoiseModel,
    budget: f64,
    beta: f64,
    mu: f64,
    lambda: f64,
    zeta: f64,
    t: f64,
) -> WfDualEval {
    P3Problem::new(ens, p, noise, budget, beta).eval(mu, lambda, zeta, t)
}

/// Scale used to make jamming powers order one inside dual searches.
fn power_scale(budget: f64, p: f64) -> f64 {
    if budget > 0.0 {
        budget
    } else {
        p
    }
}

fn ell_opts(base: &EllipsoidOptions, budget: f64) -> EllipsoidOptions {
    EllipsoidOptions {
        early_exit: Some(-feas_tol(budget)),
        max_restarts: 0,
        ..*base
    }
}

/// Outcome of the jamming-budget feasibility test at one `beta`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BetaCheck {
    pub feasible: bool,
    pub iterations: usize,
}

/// Whether some policy within budget `Q` makes the water-filling powers at
/// `beta` average exactly `P`.
///
/// Per state the dual compares jamming nothing against jamming just enough
/// to silence the transmitter; the integrand is linear in between.
pub fn feasibility_beta(ens: &StateEnsemble, p: f64, noise: &NoiseModel, budget: f64, beta: f64) -> Result<BetaCheck> {
    feasibility_beta_with(ens, p, noise, budget, beta, &EllipsoidOptions::default())
}

pub fn feasibility_beta_with(
    ens: &StateEnsemble,
    p: f64,
    noise: &NoiseModel,
    budget: f64,
    beta: f64,
    opts: &EllipsoidOptions,
) -> Result<BetaCheck> {
    if !(beta.is_finite() && beta > 0.0) {
        return Err(Error::Contract(format!("beta must be positive, got {beta}")));
    }
    let level = level_from_beta(beta);
    let states: Vec<WfState> = ens.states().iter().map(|s| WfState::new(s, noise, level)).collect();
    let total = ens.total_weight();
    let free_power: CompensatedSum = states.iter().zip(ens.weights()).map(|(s, w)| w * s.p_hat(0.0)).collect();
    let free_power = free_power.value() / total;
    if free_power <= p * (1.0 + 1e-12) {
        return Ok(BetaCheck { feasible: true, iterations: 0 });
    }
    if budget == 0.0 {
        return Ok(BetaCheck { feasible: false, iterations: 0 });
    }
    let (qs, ps) = (budget, p);
    let out = ellipsoid_minimize(
        |x: &DVector<f64>| {
            let (lambda, zeta) = (x[0] / qs, x[1] / ps);
            let mut val = CompensatedSum::new();
            let mut eq = CompensatedSum::new();
            let mut ep = CompensatedSum::new();
            for (s, w) in states.iter().zip(ens.weights()) {
                let p0 = s.p_hat(0.0);
                let keep = -zeta * p0;
                let silence = -lambda * s.q1;
                if p0 > 0.0 && s.q1.is_finite() && keep <= silence {
                    val.add(w * silence);
                    eq.add(w * s.q1);
                } else {
                    val.add(w * keep);
                    ep.add(w * p0);
                }
            }
            let (eq, ep) = (eq.value() / total, ep.value() / total);
            let g = [(budget - eq) / qs, (p - ep) / ps];
            Ok(OracleAnswer {
                value: val.value() / total + lambda * budget + zeta * p,
                subgradient: DVector::from_vec(g.to_vec()),
                stop: g[0] >= 0.0 && g[1] >= 0.0,
            })
        },
        initial_ellipsoid(2),
        &[Bound::NonNegative, Bound::Free],
        &ell_opts(opts, budget),
    )?;
    Ok(BetaCheck {
        feasible: out.status != EllipsoidStatus::EarlyExit,
        iterations: out.iterations,
    })
}

/// Smallest `beta` that the jamming budget can sustain.
pub fn beta_min(ens: &StateEnsemble, p: f64, noise: &NoiseModel, budget: f64) -> Result<f64> {
    beta_min_with(ens, p, noise, budget, &EllipsoidOptions::default())
}

fn beta_min_with(ens: &StateEnsemble, p: f64, noise: &NoiseModel, budget: f64, opts: &EllipsoidOptions) -> Result<f64> {
    let bmax = beta_max(ens, p, noise)?;
    if budget == 0.0 {
        return Ok(bmax);
    }
    let feasible = |b: f64| feasibility_beta_with(ens, p, noise, budget, b, opts).map(|c| c.feasible);
    let mut lo = 0.5 * bmax;
    let mut hi = bmax;
    let mut halvings = 0;
    while feasible(lo)? {
        hi = lo;
        lo *= 0.5;
        halvings += 1;
        if halvings > 200 {
            return Err(Error::Convergence { what: "no infeasible beta found below beta_max".into(), iterations: halvings });
        }
    }
    let mut err = None;
    let r = bisect_threshold(
        |b| match feasible(b) {
            Ok(f) => f,
            Err(e) => {
                err.get_or_insert(e);
                true
            }
        },
        BisectionSetup::new(lo, hi).tol_rel(1e-4).tol_abs(f64::MIN_POSITIVE),
    )?;
    match err {
        Some(e) => Err(e),
        None => Ok(r.x),
    }
}

/// A recovered policy for one `beta` and target, with the transmitter
/// water-filled against it.
#[derive(Debug, Clone, PartialEq)]
pub struct WfCandidate {
    pub policy: JammingPolicy,
    pub waterfill: WaterfillProfile,
    pub report: EvalReport,
    pub duals: (f64, f64, f64),
}

#[derive(Debug, Clone, PartialEq)]
pub enum WfFeasibility {
    Feasible { candidate: WfCandidate, status: EllipsoidStatus, iterations: usize },
    Infeasible { iterations: usize },
}

impl WfFeasibility {
    pub fn is_feasible(&self) -> bool {
        matches!(self, Self::Feasible { .. })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WfOptions {
    pub beta_grid: usize,
    /// Golden-section refinement around the best grid point.
    pub refine: bool,
    pub refine_iters: usize,
    pub t_tol: f64,
    pub ellipsoid: EllipsoidOptions,
}

impl Default for WfOptions {
    fn default() -> Self {
        Self {
            beta_grid: 32,
            refine: false,
            refine_iters: 8,
            t_tol: 1e-3,
            ellipsoid: EllipsoidOptions::default(),
        }
    }
}

/// Decides whether relative rate `t` is attainable at `beta`.
pub fn feasibility_p33(
    ens: &StateEnsemble,
    p: f64,
    noise: &NoiseModel,
    budget: f64,
    beta: f64,
    t: f64,
) -> Result<WfFeasibility> {
    feasibility_p33_with(ens, p, noise, budget, beta, t, &WfOptions::default())
}

#[allow(clippy::too_many_arguments)]
pub fn feasibility_p33_with(
    ens: &StateEnsemble,
    p: f64,
    noise: &NoiseModel,
    budget: f64,
    beta: f64,
    t: f64,
    opts: &WfOptions,
) -> Result<WfFeasibility> {
    if !(0.0..=1.0).contains(&t) {
        return Err(Error::Contract(format!("target ratio must lie in [0, 1], got {t}")));
    }
    let prob = P3Problem::new(ens, p, noise, budget, beta);
    let (qs, ps) = (power_scale(budget, p), p);
    let out = ellipsoid_minimize(
        |x: &DVector<f64>| {
            let (value, g) = prob.eval_sums(x[0], x[1] / qs, x[2] / ps, t);
            Ok(OracleAnswer::new(value, DVector::from_vec(vec![g[0], g[1] / qs, g[2] / ps])))
        },
        initial_ellipsoid(3),
        &[Bound::NonNegative, Bound::NonNegative, Bound::Free],
        &ell_opts(&opts.ellipsoid, budget),
    )?;
    if out.status == EllipsoidStatus::EarlyExit {
        return Ok(WfFeasibility::Infeasible { iterations: out.iterations });
    }
    let candidate = recover_p3(&prob, noise, t, &opts.ellipsoid)?;
    Ok(WfFeasibility::Feasible { candidate, status: out.status, iterations: out.iterations })
}

/// Budget-feasible policy from the dual at `mu = 1`: minimize the
/// Lagrangian dual over `(lambda, zeta)`, then raise `lambda` until the
/// budget holds, and compare with the repaired over-budget side.
fn recover_p3(prob: &P3Problem<'_>, noise: &NoiseModel, t: f64, base: &EllipsoidOptions) -> Result<WfCandidate> {
    let (qs, ps) = (power_scale(prob.budget, prob.p), prob.p);
    let opts = EllipsoidOptions { early_exit: None, ..*base };
    let out = ellipsoid_minimize(
        |x: &DVector<f64>| {
            let (value, g) = prob.eval_sums(1.0, x[0] / qs, x[1] / ps, t);
            Ok(OracleAnswer::new(value, DVector::from_vec(vec![g[1] / qs, g[2] / ps])))
        },
        initial_ellipsoid(2),
        &[Bound::NonNegative, Bound::Free],
        &opts,
    )?;
    let zeta = out.point[1] / ps;
    let lambda0 = out.point[0] / qs;
    let avg = |lambda: f64| {
        let ch = prob.choices(1.0, lambda, zeta, t);
        prob.ens.mean(&ch.iter().map(|c| c.q).collect::<Vec<_>>())
    };
    let mut candidates: Vec<(Vec<f64>, f64)> = Vec::new();
    let base_q: Vec<f64> = prob.choices(1.0, lambda0, zeta, t).iter().map(|c| c.q).collect();
    if prob.ens.mean(&base_q) <= prob.budget {
        candidates.push((base_q, lambda0));
    } else {
        // Search upward from the dual point in units of lambda0.
        let unit = if lambda0 > 0.0 { lambda0 } else { 1.0 / qs };
        let (hi, lo) = search_lambda(|k| avg(unit * k), prob.budget);
        if hi.is_finite() {
            let l = unit * hi;
            candidates.push((prob.choices(1.0, l, zeta, t).iter().map(|c| c.q).collect(), l));
        }
        if let Some(lo) = lo {
            let l = unit * lo;
            let ch = prob.choices(1.0, l, zeta, t);
            let q: Vec<f64> = ch.iter().map(|c| c.q).collect();
            let success: Vec<bool> = ch.iter().map(|c| c.success).collect();
            let benefit: Vec<f64> = prob
                .states
                .iter()
                .map(|s| {
                    let q2 = s.required.max(0.0);
                    let p2 = s.p_hat(q2);
                    let p0 = s.p_hat(0.0);
                    (1.0 - t) * s.r_hat(q2, p2) + t * s.r_hat(0.0, p0)
                })
                .collect();
            candidates.push((repair_budget(prob.ens, &q, &success, &benefit, prob.budget), l));
        }
    }
    let mut best: Option<WfCandidate> = None;
    for (q, lambda) in candidates {
        let policy = JammingPolicy::new(q, "optimal")?;
        let (report, wf) = evaluate_waterfilled(prob.ens, &policy, prob.p, noise)?;
        if best.as_ref().is_none_or(|b| report.relative_rate > b.report.relative_rate) {
            best = Some(WfCandidate { policy, waterfill: wf, report, duals: (1.0, lambda, zeta) });
        }
    }
    match best {
        Some(b) => Ok(b),
        None => {
            let policy = JammingPolicy::zeros(prob.ens.len(), "optimal");
            let (report, wf) = evaluate_waterfilled(prob.ens, &policy, prob.p, noise)?;
            Ok(WfCandidate { policy, waterfill: wf, report, duals: (1.0, 0.0, zeta) })
        }
    }
}

/// One point of the outer `beta` search.
#[derive(Debug, Clone, PartialEq)]
pub struct BetaScanPoint {
    pub beta: f64,
    /// Relative rate achieved by the best recovered policy at this `beta`.
    pub t_achieved: f64,
    /// Largest target the bisection declared feasible.
    pub feasible_tmax: f64,
    pub avg_jam_power: f64,
}

pub const BETA_SCAN_HEADER: [&str; 4] = ["beta", "t_achieved", "feasible_tmax", "avg_jam_power"];

pub fn write_beta_scan<W: std::io::Write>(writer: W, scan: &[BetaScanPoint]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(BETA_SCAN_HEADER)?;
    for pt in scan {
        w.write_record([fmt_f64(pt.beta), fmt_f64(pt.t_achieved), fmt_f64(pt.feasible_tmax), fmt_f64(pt.avg_jam_power)])?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct WfSolution {
    pub policy: JammingPolicy,
    pub waterfill: WaterfillProfile,
    pub report: EvalReport,
    pub beta_star: f64,
    pub t_star: f64,
    pub duals: (f64, f64, f64),
    pub beta_regime: (f64, f64),
    pub beta_scan: Vec<BetaScanPoint>,
}

struct BetaResult {
    point: BetaScanPoint,
    best: Option<WfCandidate>,
}

fn solve_at_beta(ens: &StateEnsemble, p: f64, noise: &NoiseModel, budget: f64, beta: f64, opts: &WfOptions) -> Result<BetaResult> {
    let mut best: Option<WfCandidate> = None;
    let consider = |f: WfFeasibility, best: &mut Option<WfCandidate>| -> bool {
        match f {
            WfFeasibility::Feasible { candidate, .. } => {
                let ok = candidate.policy.avg_power(ens) <= budget + 1e-9;
                if ok && best.as_ref().is_none_or(|b| candidate.report.relative_rate > b.report.relative_rate) {
                    *best = Some(candidate);
                }
                true
            }
            WfFeasibility::Infeasible { .. } => false,
        }
    };
    let mut tmax = 1.0;
    if !consider(feasibility_p33_with(ens, p, noise, budget, beta, 1.0, opts)?, &mut best) {
        let (mut lo, mut hi) = (0.0, 1.0);
        while hi - lo > opts.t_tol {
            let t = 0.5 * (lo + hi);
            if consider(feasibility_p33_with(ens, p, noise, budget, beta, t, opts)?, &mut best) {
                lo = t;
            } else {
                hi = t;
            }
        }
        if best.is_none() {
            consider(feasibility_p33_with(ens, p, noise, budget, beta, 0.0, opts)?, &mut best);
        }
        tmax = lo;
    }
    let (t_achieved, avg) = best
        .as_ref()
        .map(|b| (b.report.relative_rate, b.report.avg_jamming_power))
        .unwrap_or((0.0, 0.0));
    Ok(BetaResult {
        point: BetaScanPoint { beta, t_achieved, feasible_tmax: tmax, avg_jam_power: avg },
        best,
    })
}

pub fn solve_wf(ens: &StateEnsemble, p: f64, noise: &NoiseModel, budget: f64, beta_grid_size: usize) -> Result<WfSolution> {
    let opts = WfOptions { beta_grid: beta_grid_size, ..WfOptions::default() };
    solve_wf_with(ens, p, noise, budget, &opts)
}

pub fn solve_wf_with(ens: &StateEnsemble, p: f64, noise: &NoiseModel, budget: f64, opts: &WfOptions) -> Result<WfSolution> {
    if !(p.is_finite() && p > 0.0) {
        return Err(Error::Contract(format!("transmit power must be positive, got {p}")));
    }
    if !(budget.is_finite() && budget >= 0.0) {
        return Err(Error::Contract(format!("jamming budget must be finite and >= 0, got {budget}")));
    }
    if opts.beta_grid < 3 {
        return Err(Error::Contract(format!("beta grid needs at least 3 points, got {}", opts.beta_grid)));
    }
    noise.validate()?;
    let passive = JammingPolicy::zeros(ens.len(), "optimal");
    let (passive_report, passive_wf) = evaluate_waterfilled(ens, &passive, p, noise)?;
    let bmax = passive_wf.beta;
    let passive_candidate = WfCandidate { policy: passive, waterfill: passive_wf, report: passive_report, duals: (0.0, 0.0, 0.0) };
    if budget == 0.0 {
        return Ok(WfSolution {
            policy: passive_candidate.policy,
            report: passive_report,
            waterfill: passive_candidate.waterfill,
            beta_star: bmax,
            t_star: passive_report.relative_rate,
            duals: (0.0, 0.0, 0.0),
            beta_regime: (bmax, bmax),
            beta_scan: vec![BetaScanPoint {
                beta: bmax,
                t_achieved: passive_report.relative_rate,
                feasible_tmax: passive_report.relative_rate,
                avg_jam_power: 0.0,
            }],
        });
    }
    let bmin = beta_min_with(ens, p, noise, budget, &opts.ellipsoid)?.min(bmax);
    let m = opts.beta_grid;
    let grid: Vec<f64> = (0..m)
        .map(|k| if k + 1 == m { bmax } else { bmin + (bmax - bmin) * k as f64 / (m - 1) as f64 })
        .collect();
    let results: Vec<BetaResult> = grid
        .par_iter()
        .map(|&b| solve_at_beta(ens, p, noise, budget, b, opts))
        .collect::<Result<_>>()?;

    let argmax = |rs: &[BetaResult]| {
        let mut k = 0;
        for (i, r) in rs.iter().enumerate() {
            let (v, b) = (r.point.t_achieved, r.point.beta);
            let (bv, bb) = (rs[k].point.t_achieved, rs[k].point.beta);
            if v > bv || (v == bv && b < bb) {
                k = i;
            }
        }
        k
    };
    let mut results = results;
    if opts.refine && m >= 3 {
        let k = argmax(&results);
        let (mut a, mut b) = (grid[k.saturating_sub(1)], grid[(k + 1).min(m - 1)]);
        let phi = (5f64.sqrt() - 1.0) / 2.0;
        let mut c = b - phi * (b - a);
        let mut d = a + phi * (b - a);
        let mut rc = solve_at_beta(ens, p, noise, budget, c, opts)?;
        let mut rd = solve_at_beta(ens, p, noise, budget, d, opts)?;
        for _ in 0..opts.refine_iters {
            if rc.point.t_achieved >= rd.point.t_achieved {
                b = d;
                d = c;
                c = b - phi * (b - a);
                results.push(rd);
                rd = rc;
                rc = solve_at_beta(ens, p, noise, budget, c, opts)?;
            } else {
                a = c;
                c = d;
                d = a + phi * (b - a);
                results.push(rc);
                rc = rd;
                rd = solve_at_beta(ens, p, noise, budget, d, opts)?;
            }
        }
        results.push(rc);
        results.push(rd);
        results.sort_by(|x, y| x.point.beta.total_cmp(&y.point.beta));
    }
    let k = argmax(&results);
    let beta_scan: Vec<BetaScanPoint> = results.iter().map(|r| r.point.clone()).collect();
    let beta_star = results[k].point.beta;
    let mut chosen = results.swap_remove(k).best.unwrap_or_else(|| passive_candidate.clone());
    if passive_candidate.report.relative_rate > chosen.report.relative_rate {
        chosen = passive_candidate;
    }
    Ok(WfSolution {
        t_star: chosen.report.relative_rate,
        report: chosen.report,
        duals: chosen.duals,
        policy: chosen.policy,
        waterfill: chosen.waterfill,
        beta_star,
        beta_regime: (bmin, bmax),
        beta_scan,
    })
}
