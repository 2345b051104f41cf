//! Per-state link quantities, baseline jamming policies and policy
//! evaluation.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::channel::{fmt_f64, FadingState, StateEnsemble};
use crate::numopt::sum::CompensatedSum;
use crate::{Error, Result};

/// Relative slack within which the monitor's SINR counts as matching the
/// receiver's. Jamming exactly at the required power lands on the boundary
/// and must succeed despite rounding.
pub const INDICATOR_REL_TOL: f64 = 1e-12;

/// Additive noise powers, linear.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseModel {
    /// At the suspicious receiver.
    pub sigma0_sq: f64,
    /// At the monitor.
    pub sigma1_sq: f64,
}

impl NoiseModel {
    pub fn new(sigma0_sq: f64, sigma1_sq: f64) -> Result<Self> {
        let n = Self { sigma0_sq, sigma1_sq };
        n.validate()?;
        Ok(n)
    }

    pub fn unit() -> Self {
        Self { sigma0_sq: 1.0, sigma1_sq: 1.0 }
    }

    pub fn validate(&self) -> Result<()> {
        if self.sigma0_sq > 0.0 && self.sigma1_sq > 0.0 && self.sigma0_sq.is_finite() && self.sigma1_sq.is_finite() {
            Ok(())
        } else {
            Err(Error::Config(format!("noise powers must be positive, got {self:?}")))
        }
    }
}

/// SINR at the suspicious receiver, `g0 p / (g2 q + sigma0^2)`.
pub fn sinr_receiver(s: &FadingState, p: f64, q: f64, noise: &NoiseModel) -> f64 {
    s.g0 * p / (s.g2 * q + noise.sigma0_sq)
}

/// SINR at the monitor, `g1 p / (phi q + sigma1^2)`.
pub fn snr_monitor(s: &FadingState, p: f64, q: f64, noise: &NoiseModel) -> f64 {
    s.g1 * p / (s.phi * q + noise.sigma1_sq)
}

/// Achievable rate in bps/Hz.
pub fn rate(x: f64) -> f64 {
    x.ln_1p() / std::f64::consts::LN_2
}

/// Whether the monitor can decode: its SINR is no smaller than the
/// receiver's.
///
/// Both SINRs are linear in the transmit power, so the comparison is made
/// without it: `g1 (g2 q + sigma0^2) >= g0 (phi q + sigma1^2)`.
pub fn success_indicator(s: &FadingState, q: f64, noise: &NoiseModel) -> bool {
    let lhs = s.g1 * (s.g2 * q + noise.sigma0_sq);
    let rhs = s.g0 * (s.phi * q + noise.sigma1_sq);
    lhs >= rhs - INDICATOR_REL_TOL * lhs.max(rhs)
}

/// Per-state jamming powers.
#[derive(Debug, Clone, PartialEq)]
pub struct JammingPolicy {
    pub q: Vec<f64>,
    pub label: String,
}

impl JammingPolicy {
    pub fn new(q: Vec<f64>, label: impl Into<String>) -> Result<Self> {
        if let Some(i) = q.iter().position(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::Contract(format!("jamming power at state {i} is {}", q[i])));
        }
        Ok(Self { q, label: label.into() })
    }

    pub fn zeros(n: usize, label: impl Into<String>) -> Self {
        Self { q: vec![0.0; n], label: label.into() }
    }

    pub fn len(&self) -> usize {
        self.q.len()
    }

    pub fn is_empty(&self) -> bool {
        self.q.is_empty()
    }

    pub fn avg_power(&self, ens: &StateEnsemble) -> f64 {
        ens.mean(&self.q)
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = label.into();
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TxMode {
    Fixed,
    Waterfilling,
}

/// Suspicious transmitter's per-state powers.
#[derive(Debug, Clone, PartialEq)]
pub struct TxPowerProfile {
    pub p: Vec<f64>,
    pub mode: TxMode,
    /// Water-level dual, present iff the mode is water-filling.
    pub beta: Option<f64>,
}

impl TxPowerProfile {
    /// Constant power in every state.
    pub fn fixed(n: usize, p: f64) -> Self {
        Self { p: vec![p; n], mode: TxMode::Fixed, beta: None }
    }

    pub fn waterfilling(p: Vec<f64>, beta: f64) -> Self {
        Self { p, mode: TxMode::Waterfilling, beta: Some(beta) }
    }

    pub fn avg_power(&self, ens: &StateEnsemble) -> f64 {
        ens.mean(&self.p)
    }
}

/// Aggregate metrics of one policy on one ensemble.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalReport {
    pub non_outage_prob: f64,
    pub avg_suspicious_rate: f64,
    pub avg_eavesdrop_rate: f64,
    pub relative_rate: f64,
    pub avg_jamming_power: f64,
}

/// Fraction of probability mass on which the monitor decodes.
pub fn non_outage(ens: &StateEnsemble, q: &[f64], noise: &NoiseModel) -> f64 {
    ens.mean_by(|i, s| f64::from(u8::from(success_indicator(s, q[i], noise))))
}

pub fn evaluate_policy(
    ens: &StateEnsemble,
    policy: &JammingPolicy,
    tx: &TxPowerProfile,
    noise: &NoiseModel,
) -> Result<EvalReport> {
    let n = ens.len();
    if policy.len() != n || tx.p.len() != n {
        return Err(Error::Contract(format!(
            "ensemble has {n} states, policy {}, transmit profile {}",
            policy.len(),
            tx.p.len()
        )));
    }
    let mut x_sum = CompensatedSum::new();
    let mut r0_sum = CompensatedSum::new();
    let mut re_sum = CompensatedSum::new();
    let mut q_sum = CompensatedSum::new();
    for (i, (s, w)) in ens.states().iter().zip(ens.weights()).enumerate() {
        let q = policy.q[i];
        let p = tx.p[i];
        let x = success_indicator(s, q, noise);
        let r0 = if p > 0.0 { rate(sinr_receiver(s, p, q, noise)) } else { 0.0 };
        x_sum.add(if x { *w } else { 0.0 });
        r0_sum.add(w * r0);
        if x {
            re_sum.add(w * r0);
        }
        q_sum.add(w * q);
    }
    let total = ens.total_weight();
    let avg_s = r0_sum.value() / total;
    let avg_e = (re_sum.value() / total).min(avg_s);
    Ok(EvalReport {
        non_outage_prob: (x_sum.value() / total).clamp(0.0, 1.0),
        avg_suspicious_rate: avg_s,
        avg_eavesdrop_rate: avg_e,
        relative_rate: if avg_s > 0.0 { (avg_e / avg_s).clamp(0.0, 1.0) } else { 0.0 },
        avg_jamming_power: q_sum.value() / total,
    })
}

fn check_budget(budget: f64) -> Result<()> {
    if budget.is_finite() && budget >= 0.0 {
        Ok(())
    } else {
        Err(Error::Contract(format!("jamming budget must be finite and >= 0, got {budget}")))
    }
}

/// Same power `budget` in every state.
pub fn baseline_constant(ens: &StateEnsemble, budget: f64) -> Result<JammingPolicy> {
    check_budget(budget)?;
    Ok(JammingPolicy {
        q: vec![budget; ens.len()],
        label: "constant".into(),
    })
}

/// Splits the budget equally over the states the monitor cannot already
/// eavesdrop without jamming.
pub fn baseline_onoff(ens: &StateEnsemble, budget: f64, noise: &NoiseModel) -> Result<JammingPolicy> {
    check_budget(budget)?;
    let needs: Vec<bool> = ens
        .states()
        .iter()
        .map(|s| !success_indicator(s, 0.0, noise))
        .collect();
    let mass: CompensatedSum = ens
        .weights()
        .iter()
        .zip(&needs)
        .filter(|(_, n)| **n)
        .map(|(w, _)| *w)
        .collect();
    let mass = mass.value();
    let level = if mass > 0.0 { budget * ens.total_weight() / mass } else { 0.0 };
    Ok(JammingPolicy {
        q: needs.iter().map(|n| if *n { level } else { 0.0 }).collect(),
        label: "on-off".into(),
    })
}

/// No jamming.
pub fn baseline_passive(ens: &StateEnsemble) -> JammingPolicy {
    JammingPolicy::zeros(ens.len(), "passive")
}

/// One row of a report CSV.
#[derive(Debug, Clone, PartialEq)]
pub struct ReportRow {
    pub label: String,
    pub budget: f64,
    pub report: EvalReport,
}

pub const REPORT_HEADER: [&str; 7] = [
    "label",
    "Q",
    "non_outage",
    "avg_rate_suspicious",
    "avg_rate_eavesdrop",
    "relative_rate",
    "avg_jam_power",
];

pub fn write_reports<W: Write>(writer: W, rows: &[ReportRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(REPORT_HEADER)?;
    for row in rows {
        let r = &row.report;
        w.write_record([
            row.label.clone(),
            fmt_f64(row.budget),
            fmt_f64(r.non_outage_prob),
            fmt_f64(r.avg_suspicious_rate),
            fmt_f64(r.avg_eavesdrop_rate),
            fmt_f64(r.relative_rate),
            fmt_f64(r.avg_jamming_power),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{sample_rayleigh, RayleighConfig};
    use proptest::prelude::*;

    fn st(g0: f64, g1: f64, g2: f64, phi: f64) -> FadingState {
        FadingState::new(g0, g1, g2, phi)
    }

    #[test]
    fn sinr_examples() {
        let n = NoiseModel::unit();
        assert_eq!(sinr_receiver(&st(1.0, 0.0, 0.0, 0.0), 100.0, 0.0, &n), 100.0);
        assert_eq!(sinr_receiver(&st(1.0, 0.0, 1.0, 0.0), 100.0, 99.0, &n), 1.0);
        assert_eq!(sinr_receiver(&st(1.0, 0.0, 1.0, 0.0), 0.0, 3.0, &n), 0.0);
        assert!((snr_monitor(&st(0.0, 0.1, 0.0, 0.0), 100.0, 55.0, &n) - 10.0).abs() < 1e-12);
        assert_eq!(snr_monitor(&st(0.0, 1.0, 0.0, 0.1), 10.0, 10.0, &n), 5.0);
        assert_eq!(snr_monitor(&st(0.0, 1.0, 0.0, 0.1), 0.0, 10.0, &n), 0.0);
    }

    #[test]
    fn rate_examples() {
        assert_eq!(rate(0.0), 0.0);
        assert_eq!(rate(1.0), 1.0);
        assert_eq!(rate(3.0), 2.0);
    }

    #[test]
    fn indicator_examples() {
        let n = NoiseModel::unit();
        assert!(success_indicator(&st(1.0, 2.0, 0.0, 0.0), 0.0, &n));
        let s = st(1.0, 0.5, 1.0, 0.0);
        assert!(success_indicator(&s, 1.0, &n));
        // 0.5 * (0.999 + 1) = 0.9995 < 1
        assert!(!success_indicator(&s, 0.999, &n));
    }

    #[test]
    fn indicator_agrees_with_sinr_comparison() {
        let n = NoiseModel::new(0.7, 1.3).unwrap();
        let s = st(1.2, 0.4, 0.9, 0.05);
        for k in 0..200 {
            let q = k as f64 * 0.05;
            let p = 17.0;
            let direct = snr_monitor(&s, p, q, &n) >= sinr_receiver(&s, p, q, &n);
            let exact_boundary =
                (snr_monitor(&s, p, q, &n) - sinr_receiver(&s, p, q, &n)).abs() < 1e-9;
            if !exact_boundary {
                assert_eq!(direct, success_indicator(&s, q, &n), "q = {q}");
            }
        }
    }

    #[test]
    fn passive_rayleigh_non_outage_is_one_eleventh() {
        let ens = sample_rayleigh(&RayleighConfig::normalized(100_000), 1).unwrap();
        let p = baseline_passive(&ens);
        let r = evaluate_policy(&ens, &p, &TxPowerProfile::fixed(ens.len(), 100.0), &NoiseModel::unit()).unwrap();
        assert!((r.non_outage_prob - 1.0 / 11.0).abs() < 0.01, "{}", r.non_outage_prob);
    }

    #[test]
    fn all_success_gives_unit_relative_rate() {
        let ens = StateEnsemble::uniform(vec![st(1.0, 2.0, 1.0, 0.0), st(0.5, 3.0, 1.0, 0.0)], 0, "").unwrap();
        let r = evaluate_policy(&ens, &baseline_passive(&ens), &TxPowerProfile::fixed(2, 10.0), &NoiseModel::unit())
            .unwrap();
        assert_eq!(r.non_outage_prob, 1.0);
        assert_eq!(r.relative_rate, 1.0);
    }

    #[test]
    fn single_failing_state_gives_zero() {
        let ens = StateEnsemble::uniform(vec![st(1.0, 0.1, 1.0, 0.0)], 0, "").unwrap();
        let r = evaluate_policy(&ens, &baseline_passive(&ens), &TxPowerProfile::fixed(1, 10.0), &NoiseModel::unit())
            .unwrap();
        assert_eq!(r.relative_rate, 0.0);
        assert_eq!(r.non_outage_prob, 0.0);
    }

    #[test]
    fn length_mismatch_is_contract_error() {
        let ens = StateEnsemble::uniform(vec![st(1.0, 0.1, 1.0, 0.0)], 0, "").unwrap();
        let p = JammingPolicy::zeros(2, "");
        let e = evaluate_policy(&ens, &p, &TxPowerProfile::fixed(1, 1.0), &NoiseModel::unit()).unwrap_err();
        assert!(matches!(e, Error::Contract(_)));
    }

    #[test]
    fn constant_baseline() {
        let ens = StateEnsemble::uniform(vec![st(1.0, 0.1, 1.0, 0.0); 3], 0, "").unwrap();
        let c = baseline_constant(&ens, 5.0).unwrap();
        assert_eq!(c.q, vec![5.0; 3]);
        assert_eq!(c.avg_power(&ens), 5.0);
        assert_eq!(baseline_constant(&ens, 0.0).unwrap().q, baseline_passive(&ens).q);
        assert!(baseline_constant(&ens, -1.0).is_err());
    }

    #[test]
    fn onoff_baseline() {
        let n = NoiseModel::unit();
        let easy = StateEnsemble::uniform(vec![st(1.0, 2.0, 1.0, 0.0); 4], 0, "").unwrap();
        assert!(baseline_onoff(&easy, 3.0, &n).unwrap().q.iter().all(|q| *q == 0.0));
        let mixed = StateEnsemble::uniform(vec![st(1.0, 2.0, 1.0, 0.0), st(1.0, 0.5, 1.0, 0.0)], 0, "").unwrap();
        let p = baseline_onoff(&mixed, 1.0, &n).unwrap();
        assert_eq!(p.q, vec![0.0, 2.0]);
        let hard = StateEnsemble::uniform(vec![st(1.0, 0.5, 1.0, 0.0); 3], 0, "").unwrap();
        assert!(baseline_onoff(&hard, 0.0, &n).unwrap().q.iter().all(|q| *q == 0.0));
    }

    #[test]
    fn passive_equals_zero_constant() {
        let ens = sample_rayleigh(&RayleighConfig::normalized(500), 4).unwrap();
        let tx = TxPowerProfile::fixed(ens.len(), 100.0);
        let n = NoiseModel::unit();
        let a = evaluate_policy(&ens, &baseline_passive(&ens), &tx, &n).unwrap();
        let b = evaluate_policy(&ens, &baseline_constant(&ens, 0.0).unwrap(), &tx, &n).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn report_csv_header_and_precision() {
        let rows = vec![ReportRow {
            label: "passive".into(),
            budget: 0.1,
            report: EvalReport {
                non_outage_prob: 1.0 / 3.0,
                avg_suspicious_rate: 2.0,
                avg_eavesdrop_rate: 1.0,
                relative_rate: 0.5,
                avg_jamming_power: 0.0,
            },
        }];
        let mut buf = Vec::new();
        write_reports(&mut buf, &rows).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(
            lines.next().unwrap(),
            "label,Q,non_outage,avg_rate_suspicious,avg_rate_eavesdrop,relative_rate,avg_jam_power"
        );
        let row: Vec<&str> = lines.next().unwrap().split(',').collect();
        let back: f64 = row[2].parse().unwrap();
        assert_eq!(back, 1.0 / 3.0);
    }

    fn arb_state() -> impl Strategy<Value = FadingState> {
        (1e-3f64..10.0, 1e-3f64..10.0, 1e-3f64..10.0, 0.0f64..1.0)
            .prop_map(|(a, b, c, d)| st(a, b, c, d))
    }

    proptest! {
        #[test]
        fn indicator_scale_invariant(s in arb_state(), q in 0.0f64..20.0, p in 1e-3f64..1e3, k in 1e-3f64..1e3) {
            let n = NoiseModel::unit();
            let at = |p: f64| snr_monitor(&s, p, q, &n) >= sinr_receiver(&s, p, q, &n);
            let margin = (snr_monitor(&s, p, q, &n) / sinr_receiver(&s, p, q, &n) - 1.0).abs();
            prop_assume!(margin > 1e-9);
            prop_assert_eq!(at(p), at(k * p));
            prop_assert_eq!(at(p), success_indicator(&s, q, &n));
        }

        #[test]
        fn sinr_strictly_decreasing_in_q(s in arb_state(), q in 0.0f64..100.0, dq in 1e-3f64..10.0) {
            let n = NoiseModel::unit();
            prop_assert!(sinr_receiver(&s, 10.0, q + dq, &n) < sinr_receiver(&s, 10.0, q, &n));
        }

        #[test]
        fn indicator_monotone_in_q(s in arb_state()) {
            let n = NoiseModel::unit();
            let flags: Vec<bool> = (0..400).map(|k| success_indicator(&s, k as f64 * 0.25, &n)).collect();
            let flips = flags.windows(2).filter(|w| w[0] != w[1]).count();
            if s.g1 * s.g2 - s.g0 * s.phi > 0.0 {
                prop_assert!(flips <= 1);
                prop_assert!(flips == 0 || !flags[0]);
            } else if !flags[0] {
                prop_assert!(flags.iter().all(|f| !f));
            }
        }

        #[test]
        fn report_bounds(states in proptest::collection::vec(arb_state(), 1..20), q in 0.0f64..5.0) {
            let ens = StateEnsemble::uniform(states, 0, "").unwrap();
            let pol = baseline_constant(&ens, q).unwrap();
            let r = evaluate_policy(&ens, &pol, &TxPowerProfile::fixed(ens.len(), 50.0), &NoiseModel::unit()).unwrap();
            prop_assert!((0.0..=1.0).contains(&r.non_outage_prob));
            prop_assert!((0.0..=1.0).contains(&r.relative_rate));
            prop_assert!(r.avg_eavesdrop_rate <= r.avg_suspicious_rate);
            if r.avg_suspicious_rate > 0.0 {
                prop_assert!((r.relative_rate - r.avg_eavesdrop_rate / r.avg_suspicious_rate).abs() < 1e-15);
            }
        }

        #[test]
        fn onoff_spends_budget(states in proptest::collection::vec(arb_state(), 1..30), q in 0.0f64..5.0) {
            let ens = StateEnsemble::uniform(states, 0, "").unwrap();
            let n = NoiseModel::unit();
            let pol = baseline_onoff(&ens, q, &n).unwrap();
            let any = ens.states().iter().any(|s| !success_indicator(s, 0.0, &n));
            if any {
                prop_assert!((pol.avg_power(&ens) - q).abs() <= 1e-12 * (1.0 + q));
            } else {
                prop_assert_eq!(pol.avg_power(&ens), 0.0);
            }
        }
    }
}
