//! Online jamming from local observations only.
//!
//! In each block the monitor learns the power it needs by probing: it
//! jams at a trial power and observes whether it can decode. It then jams
//! at the learned power if that is below a running threshold, and nudges
//! the threshold up or down depending on whether its average power so far
//! is under or over budget.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::channel::{fmt_f64, FadingState, StateEnsemble};
use crate::metrics::{success_indicator, NoiseModel};
use crate::numopt::sum::CompensatedSum;
use crate::{Error, Result};

/// What the monitor can observe in one block.
pub trait ProbeOracle {
    /// Whether the monitor decodes while jamming at `q`.
    fn succeeds(&mut self, q: f64) -> bool;
    /// Monitor-side gain of the eavesdropping link.
    fn monitor_gain(&self) -> f64;
    /// Probes answered so far.
    fn probes(&self) -> usize;
}

/// Oracle backed by a hidden fading state.
#[derive(Debug, Clone)]
pub struct HiddenState {
    state: FadingState,
    noise: NoiseModel,
    probes: usize,
}

impl HiddenState {
    pub fn new(state: FadingState, noise: NoiseModel) -> Self {
        Self { state, noise, probes: 0 }
    }
}

impl ProbeOracle for HiddenState {
    fn succeeds(&mut self, q: f64) -> bool {
        self.probes += 1;
        success_indicator(&self.state, q, &self.noise)
    }

    fn monitor_gain(&self) -> f64 {
        self.state.g1
    }

    fn probes(&self) -> usize {
        self.probes
    }
}

/// Doubling-then-bisection probe schedule.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProbeSchedule {
    /// First nonzero trial power.
    pub initial: f64,
    /// Relative bracket width at which bisection stops.
    pub tol: f64,
    /// Largest trial power; no success there means jamming cannot help.
    pub cap: f64,
}

impl ProbeSchedule {
    /// Starts at `Q/100` with a cap of `1e6 Q`.
    pub fn for_budget(budget: f64, tol: f64) -> Self {
        Self { initial: budget / 100.0, tol, cap: 1e6 * budget }
    }

    fn validate(&self) -> Result<()> {
        if !(self.initial > 0.0 && self.cap >= self.initial && self.tol > 0.0 && self.tol < 1.0) {
            return Err(Error::Config(format!("invalid probe schedule {self:?}")));
        }
        Ok(())
    }

    /// Upper bound on the number of probes in one block.
    pub fn max_probes(&self) -> usize {
        let grow = (self.cap / self.initial).log2().ceil().max(0.0) as usize;
        let shrink = (1.0 / self.tol).log2().ceil() as usize;
        grow + shrink + 2
    }
}

/// Learns the smallest jamming power at which the monitor decodes, to
/// relative accuracy `tol`; the returned power always succeeds. Returns
/// infinity if even the cap fails.
pub fn probe_required<O: ProbeOracle>(oracle: &mut O, schedule: &ProbeSchedule) -> f64 {
    if oracle.succeeds(0.0) {
        return 0.0;
    }
    let steps = (schedule.cap / schedule.initial).log2().ceil().max(0.0) as usize;
    let (mut lo, mut hi);
    if oracle.succeeds(schedule.initial) {
        hi = schedule.initial;
        lo = 0.5 * hi;
        let mut k = 0;
        while k < steps && oracle.succeeds(lo) {
            hi = lo;
            lo *= 0.5;
            k += 1;
        }
        if k == steps {
            lo = 0.0;
        }
    } else {
        lo = schedule.initial;
        hi = (2.0 * lo).min(schedule.cap);
        loop {
            if oracle.succeeds(hi) {
                break;
            }
            if hi >= schedule.cap {
                return f64::INFINITY;
            }
            lo = hi;
            hi = (2.0 * hi).min(schedule.cap);
        }
    }
    while hi - lo > schedule.tol * hi {
        let mid = 0.5 * (lo + hi);
        if oracle.succeeds(mid) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    hi
}

/// Convenience wrapper probing a known state.
pub fn probe_state(s: &FadingState, noise: &NoiseModel, schedule: &ProbeSchedule) -> (f64, usize) {
    let mut o = HiddenState::new(*s, *noise);
    let q = probe_required(&mut o, schedule);
    (q, o.probes())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OnlineConfig {
    pub n_blocks: usize,
    pub tau_init: f64,
    pub chi: f64,
    pub budget: f64,
    pub probe_tol: f64,
    pub probe_cap: f64,
}

impl OnlineConfig {
    /// Threshold starting at `2Q`, step `Q/1000`, probe cap `1e6 Q`.
    pub fn standard(budget: f64, n_blocks: usize) -> Self {
        Self {
            n_blocks,
            tau_init: 2.0 * budget,
            chi: budget / 1000.0,
            budget,
            probe_tol: 1e-6,
            probe_cap: 1e6 * budget,
        }
    }

    fn validate(&self) -> Result<()> {
        let ok = self.n_blocks >= 1
            && self.chi >= 0.0
            && self.tau_init >= 0.0
            && self.probe_cap > 0.0
            && self.budget > 0.0
            && self.chi.is_finite()
            && self.tau_init.is_finite();
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("invalid online configuration {self:?}")))
        }
    }

    fn schedule(&self) -> ProbeSchedule {
        ProbeSchedule {
            initial: self.budget / 100.0,
            tol: self.probe_tol,
            cap: self.probe_cap.max(self.budget / 100.0),
        }
    }
}

/// One block of the online run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OnlineBlock {
    pub block: usize,
    /// Threshold in force during the block.
    pub tau: f64,
    pub q_used: f64,
    pub success: bool,
    /// Mean jamming power over blocks `1..=block`.
    pub running_avg_power: f64,
    pub probes: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OnlineTrace {
    pub blocks: Vec<OnlineBlock>,
    pub non_outage: f64,
    pub avg_power: f64,
    /// Mean threshold over the last 10% of blocks.
    pub tail_mean_tau: f64,
}

/// Runs the threshold scheme over the first `n_blocks` states of the
/// ensemble, one state per block, in order.
pub fn run_online(ens: &StateEnsemble, noise: &NoiseModel, config: &OnlineConfig) -> Result<OnlineTrace> {
    config.validate()?;
    let schedule = config.schedule();
    schedule.validate()?;
    if config.n_blocks > ens.len() {
        return Err(Error::Config(format!(
            "{} blocks requested but the ensemble has {} states",
            config.n_blocks,
            ens.len()
        )));
    }
    let mut tau = config.tau_init;
    let mut spent = CompensatedSum::new();
    let mut blocks = Vec::with_capacity(config.n_blocks);
    let mut successes = 0usize;
    for (k, s) in ens.states().iter().take(config.n_blocks).enumerate() {
        let mut oracle = HiddenState::new(*s, *noise);
        let need = probe_required(&mut oracle, &schedule);
        let probes = oracle.probes();
        let q = if need.is_finite() && need <= tau { need } else { 0.0 };
        let success = oracle.succeeds(q);
        successes += usize::from(success);
        spent.add(q);
        let block = k + 1;
        let avg = spent.value() / block as f64;
        blocks.push(OnlineBlock { block, tau, q_used: q, success, running_avg_power: avg, probes });
        tau = if avg < config.budget { tau + config.chi } else { (tau - config.chi).max(0.0) };
    }
    let n = blocks.len();
    let tail = (n / 10).max(1);
    let tail_mean_tau = blocks[n - tail..].iter().map(|b| b.tau).sum::<f64>() / tail as f64;
    Ok(OnlineTrace {
        non_outage: successes as f64 / n as f64,
        avg_power: spent.value() / n as f64,
        tail_mean_tau,
        blocks,
    })
}

pub const TRACE_HEADER: [&str; 5] = ["block", "tau", "q_used", "success", "running_avg_power"];

pub fn write_trace<W: Write>(writer: W, trace: &OnlineTrace) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(TRACE_HEADER)?;
    for b in &trace.blocks {
        w.write_record([
            b.block.to_string(),
            fmt_f64(b.tau),
            fmt_f64(b.q_used),
            u8::from(b.success).to_string(),
            fmt_f64(b.running_avg_power),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::solver_outage::{required_power, required_power_si};
    use proptest::prelude::*;

    fn needs(c: f64) -> FadingState {
        FadingState::new(1.0, 1.0 / (1.0 + c), 1.0, 0.0)
    }

    #[test]
    fn free_success_needs_one_probe() {
        let (q, probes) = probe_state(&FadingState::new(0.1, 1.0, 1.0, 0.0), &NoiseModel::unit(), &ProbeSchedule::for_budget(1.0, 1e-6));
        assert_eq!(q, 0.0);
        assert_eq!(probes, 1);
    }

    #[test]
    fn learns_unit_requirement() {
        let sched = ProbeSchedule { initial: 0.01, tol: 1e-6, cap: 1e4 };
        let (q, _) = probe_state(&needs(1.0), &NoiseModel::unit(), &sched);
        assert!((1.0..=1.0 + 2e-6).contains(&q), "{q}");
    }

    #[test]
    fn strong_loopback_is_unreachable() {
        // g1 g2 < g0 phi with a failure at zero jamming.
        let s = FadingState::new(1.0, 0.5, 0.5, 0.5);
        let (q, _) = probe_state(&s, &NoiseModel::unit(), &ProbeSchedule::for_budget(1.0, 1e-6));
        assert_eq!(q, f64::INFINITY);
        assert_eq!(required_power_si(&s, &NoiseModel::unit()), f64::INFINITY);
    }

    #[test]
    fn small_requirement_found_by_halving() {
        let sched = ProbeSchedule::for_budget(10.0, 1e-6);
        let (q, probes) = probe_state(&needs(1e-5), &NoiseModel::unit(), &sched);
        assert!((q / 1e-5 - 1.0).abs() < 2e-6, "{q}");
        assert!(probes <= sched.max_probes());
    }

    fn uniform(states: Vec<FadingState>) -> StateEnsemble {
        StateEnsemble::uniform(states, 0, "").unwrap()
    }

    #[test]
    fn zero_step_keeps_threshold() {
        let ens = uniform((0..50).map(|k| needs(0.2 + 0.05 * k as f64)).collect());
        let cfg = OnlineConfig { chi: 0.0, ..OnlineConfig::standard(1.0, 50) };
        let tr = run_online(&ens, &NoiseModel::unit(), &cfg).unwrap();
        assert!(tr.blocks.iter().all(|b| b.tau == 2.0));
    }

    #[test]
    fn cheap_blocks_raise_threshold() {
        let ens = uniform(vec![needs(0.5); 20]);
        let cfg = OnlineConfig::standard(1.0, 20);
        let tr = run_online(&ens, &NoiseModel::unit(), &cfg).unwrap();
        for (k, b) in tr.blocks.iter().enumerate() {
            assert!(b.success);
            assert!((b.q_used - 0.5).abs() < 1e-5);
            assert!(b.running_avg_power < 1.0);
            assert!((b.tau - (2.0 + k as f64 * 1e-3)).abs() < 1e-12);
        }
    }

    #[test]
    fn running_average_consistent() {
        let ens = uniform((0..300).map(|k| needs(0.1 + (k % 17) as f64 * 0.4)).collect());
        let tr = run_online(&ens, &NoiseModel::unit(), &OnlineConfig::standard(1.0, 300)).unwrap();
        let mut sum = 0.0;
        for b in &tr.blocks {
            sum += b.q_used;
            assert!((sum / b.block as f64 - b.running_avg_power).abs() <= 1e-12);
            assert!(b.tau >= 0.0);
        }
    }

    #[test]
    fn too_many_blocks_rejected() {
        let ens = uniform(vec![needs(0.5); 3]);
        assert!(run_online(&ens, &NoiseModel::unit(), &OnlineConfig::standard(1.0, 4)).is_err());
    }

    #[test]
    fn trace_csv_layout() {
        let ens = uniform(vec![needs(0.5); 2]);
        let tr = run_online(&ens, &NoiseModel::unit(), &OnlineConfig::standard(1.0, 2)).unwrap();
        let mut buf = Vec::new();
        write_trace(&mut buf, &tr).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("block,tau,q_used,success,running_avg_power\n1,"));
    }

    proptest! {
        #[test]
        fn probe_matches_closed_form(g0 in 0.01f64..5.0, g1 in 0.01f64..5.0, g2 in 0.01f64..5.0) {
            let s = FadingState::new(g0, g1, g2, 0.0);
            let n = NoiseModel::unit();
            let sched = ProbeSchedule::for_budget(1.0, 1e-6);
            let (q, probes) = probe_state(&s, &n, &sched);
            let c = required_power(&s, &n).max(0.0);
            if c == 0.0 {
                prop_assert_eq!(q, 0.0);
            } else {
                prop_assert!(q >= c * (1.0 - 1e-12) && q <= c * (1.0 + 2e-6), "{} vs {}", q, c);
            }
            prop_assert!(probes <= sched.max_probes());
        }

        #[test]
        fn probe_with_loopback(g0 in 0.01f64..5.0, g1 in 0.01f64..5.0, g2 in 0.01f64..5.0, phi in 0.0f64..0.5) {
            let s = FadingState::new(g0, g1, g2, phi);
            let n = NoiseModel::unit();
            let sched = ProbeSchedule::for_budget(1.0, 1e-6);
            let (q, probes) = probe_state(&s, &n, &sched);
            let c = required_power_si(&s, &n);
            prop_assert!(probes <= sched.max_probes());
            if c.is_finite() && c <= sched.cap {
                prop_assert!(q >= c * (1.0 - 1e-9) && q <= c * (1.0 + 2e-6) + 1e-12);
            } else {
                prop_assert_eq!(q, f64::INFINITY);
            }
        }
    }
}
