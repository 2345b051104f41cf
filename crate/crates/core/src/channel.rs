//! Fading-state ensembles.
//!
//! The continuous joint fading distribution is replaced by a finite i.i.d.
//! sample with uniform weights; every expectation downstream is a weighted
//! sum over a [`StateEnsemble`].
//!
//! Sampling is reproducible bit-for-bit: each link draws from its own
//! ChaCha20 stream, seeded with the ensemble seed and indexed by the link
//! number, and exponential gains come from the inverse CDF of a uniform on
//! the open unit interval.

use std::io::{Read, Write};

use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use crate::numopt::sum::compensated_sum;
use crate::units::db_to_linear;
use crate::{Error, Result};

/// RNG stream index per link.
const STREAM_G0: u64 = 0;
const STREAM_G1: u64 = 1;
const STREAM_G2: u64 = 2;
const STREAM_LOOPBACK: u64 = 3;

/// One joint fading realization, all power gains linear.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FadingState {
    /// Suspicious transmitter to suspicious receiver.
    pub g0: f64,
    /// Suspicious transmitter to the monitor's eavesdropping antenna.
    pub g1: f64,
    /// Monitor's jamming antenna to the suspicious receiver.
    pub g2: f64,
    /// Effective loop-back gain after self-interference cancellation.
    /// Zero means perfect cancellation.
    pub phi: f64,
}

impl FadingState {
    pub fn new(g0: f64, g1: f64, g2: f64, phi: f64) -> Self {
        Self { g0, g1, g2, phi }
    }

    pub fn is_valid(&self) -> bool {
        [self.g0, self.g1, self.g2, self.phi]
            .iter()
            .all(|v| v.is_finite() && *v >= 0.0)
    }
}

/// Weighted finite sample of fading states.
#[derive(Debug, Clone, PartialEq)]
pub struct StateEnsemble {
    states: Vec<FadingState>,
    weights: Vec<f64>,
    total_weight: f64,
    seed: u64,
    label: String,
}

impl StateEnsemble {
    /// Builds an ensemble after checking the weight and state invariants.
    pub fn new(
        states: Vec<FadingState>,
        weights: Vec<f64>,
        seed: u64,
        label: impl Into<String>,
    ) -> Result<Self> {
        if states.is_empty() {
            return Err(Error::Config("ensemble needs at least one state".into()));
        }
        if states.len() != weights.len() {
            return Err(Error::Contract(format!(
                "{} states but {} weights",
                states.len(),
                weights.len()
            )));
        }
        if let Some(i) = states.iter().position(|s| !s.is_valid()) {
            return Err(Error::Config(format!("state {i} has a negative or non-finite gain")));
        }
        if weights.iter().any(|w| !(w.is_finite() && *w > 0.0)) {
            return Err(Error::Config("weights must be strictly positive".into()));
        }
        let total_weight = compensated_sum(weights.iter().copied());
        if (total_weight - 1.0).abs() > 1e-12 {
            return Err(Error::Config(format!(
                "weights sum to {total_weight}, expected 1"
            )));
        }
        Ok(Self {
            states,
            weights,
            total_weight,
            seed,
            label: label.into(),
        })
    }

    /// Equal weights `1/n`.
    pub fn uniform(states: Vec<FadingState>, seed: u64, label: impl Into<String>) -> Result<Self> {
        let n = states.len().max(1);
        let weights = vec![1.0 / n as f64; states.len()];
        Self::new(states, weights, seed, label)
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn states(&self) -> &[FadingState] {
        &self.states
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    /// Weighted mean of per-state values, normalized by the total weight.
    ///
    /// Summation is compensated and runs in state order, so the result is
    /// deterministic.
    pub fn mean(&self, values: &[f64]) -> f64 {
        debug_assert_eq!(values.len(), self.len());
        let s = compensated_sum(self.weights.iter().zip(values).map(|(w, v)| w * v));
        s / self.total_weight
    }

    /// Weighted mean of `f(state index, state)`.
    pub fn mean_by<F>(&self, mut f: F) -> f64
    where
        F: FnMut(usize, &FadingState) -> f64,
    {
        let s = compensated_sum(
            self.states
                .iter()
                .enumerate()
                .zip(&self.weights)
                .map(|((i, s), w)| w * f(i, s)),
        );
        s / self.total_weight
    }

    /// Total probability mass (1 within 1e-12).
    pub fn total_weight(&self) -> f64 {
        self.total_weight
    }

    /// Same realizations with the loop-back gain removed.
    pub fn without_self_interference(&self) -> Self {
        let mut out = self.clone();
        for s in &mut out.states {
            s.phi = 0.0;
        }
        out.label = format!("{} (perfect SIC)", self.label);
        out
    }

    /// Writes `index,weight,g0,g1,g2,phi` with 17 significant digits.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["index", "weight", "g0", "g1", "g2", "phi"])?;
        for (i, (s, wt)) in self.states.iter().zip(&self.weights).enumerate() {
            w.write_record([
                i.to_string(),
                fmt_f64(*wt),
                fmt_f64(s.g0),
                fmt_f64(s.g1),
                fmt_f64(s.g2),
                fmt_f64(s.phi),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    /// Reads the format produced by [`StateEnsemble::write_csv`].
    pub fn read_csv<R: Read>(reader: R, seed: u64, label: impl Into<String>) -> Result<Self> {
        #[derive(Deserialize)]
        struct Row {
            index: usize,
            weight: f64,
            g0: f64,
            g1: f64,
            g2: f64,
            phi: f64,
        }
        let mut r = csv::Reader::from_reader(reader);
        let mut states = Vec::new();
        let mut weights = Vec::new();
        for (expected, row) in r.deserialize::<Row>().enumerate() {
            let row = row?;
            if row.index != expected {
                return Err(Error::Config(format!(
                    "ensemble row {expected} has index {}",
                    row.index
                )));
            }
            states.push(FadingState::new(row.g0, row.g1, row.g2, row.phi));
            weights.push(row.weight);
        }
        Self::new(states, weights, seed, label)
    }
}

/// Float formatting shared by every CSV writer: 17 significant digits.
pub fn fmt_f64(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.16e}")
    } else if x.is_nan() {
        "NaN".into()
    } else if x > 0.0 {
        "inf".into()
    } else {
        "-inf".into()
    }
}

/// Normalized Rayleigh fading with per-link coefficient variances.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RayleighConfig {
    pub var0: f64,
    pub var1: f64,
    pub var2: f64,
    pub n_states: usize,
}

impl RayleighConfig {
    /// Direct link variance 1, monitor links 0.1.
    pub fn normalized(n_states: usize) -> Self {
        Self {
            var0: 1.0,
            var1: 0.1,
            var2: 0.1,
            n_states,
        }
    }

    fn validate(&self) -> Result<()> {
        for (name, v) in [("var0", self.var0), ("var1", self.var1), ("var2", self.var2)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::Config(format!("{name} must be positive, got {v}")));
            }
        }
        if self.n_states == 0 {
            return Err(Error::Config("n_states must be at least 1".into()));
        }
        Ok(())
    }
}

/// How the loop-back gain is drawn when both monitor antennas share a
/// position.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LoopbackModel {
    /// Constant gain in every state.
    #[default]
    Fixed,
    /// Exponential draw around the configured gain.
    Rayleigh,
}

/// Pathloss geometry for the practical scenario, positions in meters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeometryConfig {
    pub tx: [f64; 2],
    pub rx: [f64; 2],
    pub eavesdrop: [f64; 2],
    pub jammer: [f64; 2],
    /// Reference pathloss (linear) at `d0`.
    pub iota: f64,
    pub d0: f64,
    pub kappa: f64,
    /// Self-interference reduction of the canceller, dB.
    pub sic_db: f64,
    /// Loop-back gain before cancellation for co-located antennas, dB.
    pub colocated_loopback_db: f64,
    #[serde(default)]
    pub loopback: LoopbackModel,
}

impl GeometryConfig {
    /// Both monitor antennas at (500, 500).
    pub fn colocated() -> Self {
        Self {
            tx: [0.0, 0.0],
            rx: [500.0, 0.0],
            eavesdrop: [500.0, 500.0],
            jammer: [500.0, 500.0],
            iota: db_to_linear(-60.0),
            d0: 10.0,
            kappa: 3.0,
            sic_db: 110.0,
            colocated_loopback_db: -15.0,
            loopback: LoopbackModel::Fixed,
        }
    }

    /// Eavesdropping antenna at (250, 500), jamming antenna at (500, 500).
    pub fn separate() -> Self {
        Self {
            eavesdrop: [250.0, 500.0],
            ..Self::colocated()
        }
    }

    pub fn is_colocated(&self) -> bool {
        self.eavesdrop == self.jammer
    }

    /// Mean power gain `iota (d / d0)^-kappa` over distance `d`.
    pub fn mean_pathloss(&self, d: f64) -> f64 {
        self.iota * (d / self.d0).powf(-self.kappa)
    }

    /// Mean gains of the g0, g1, g2 links.
    pub fn link_means(&self) -> [f64; 3] {
        [
            self.mean_pathloss(distance(self.tx, self.rx)),
            self.mean_pathloss(distance(self.tx, self.eavesdrop)),
            self.mean_pathloss(distance(self.jammer, self.rx)),
        ]
    }

    /// Mean effective loop-back gain after cancellation.
    pub fn mean_phi(&self) -> f64 {
        let before = if self.is_colocated() {
            db_to_linear(self.colocated_loopback_db)
        } else {
            self.mean_pathloss(distance(self.eavesdrop, self.jammer))
        };
        before / db_to_linear(self.sic_db)
    }

    fn validate(&self) -> Result<()> {
        for (name, v) in [("iota", self.iota), ("d0", self.d0), ("kappa", self.kappa)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::Config(format!("{name} must be positive, got {v}")));
            }
        }
        if !self.sic_db.is_finite() || !self.colocated_loopback_db.is_finite() {
            return Err(Error::Config("dB parameters must be finite".into()));
        }
        let pairs = [
            ("tx-rx", self.tx, self.rx),
            ("tx-eavesdrop", self.tx, self.eavesdrop),
            ("jammer-rx", self.jammer, self.rx),
        ];
        for (name, a, b) in pairs {
            let d = distance(a, b);
            if !(d.is_finite() && d > 0.0) {
                return Err(Error::Config(format!("{name} distance must be positive")));
            }
        }
        Ok(())
    }
}

fn distance(a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}

/// Uniform on the open interval (0, 1) from the top 53 bits.
fn open_uniform(rng: &mut ChaCha20Rng) -> f64 {
    let bits = rng.next_u64() >> 11;
    (bits as f64 + 0.5) * (1.0 / (1u64 << 53) as f64)
}

fn link_stream(seed: u64, stream: u64) -> ChaCha20Rng {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// `n` exponential draws with the given mean from one link stream.
fn exponential_draws(seed: u64, stream: u64, mean: f64, n: usize) -> Vec<f64> {
    let mut rng = link_stream(seed, stream);
    (0..n).map(|_| -mean * open_uniform(&mut rng).ln()).collect()
}

/// Rayleigh ensemble: each `g_i = |h_i|^2` is exponential with mean equal
/// to the variance of `h_i`; perfect self-interference cancellation.
pub fn sample_rayleigh(config: &RayleighConfig, seed: u64) -> Result<StateEnsemble> {
    config.validate()?;
    let n = config.n_states;
    let g0 = exponential_draws(seed, STREAM_G0, config.var0, n);
    let g1 = exponential_draws(seed, STREAM_G1, config.var1, n);
    let g2 = exponential_draws(seed, STREAM_G2, config.var2, n);
    let states = (0..n)
        .map(|i| FadingState::new(g0[i], g1[i], g2[i], 0.0))
        .collect();
    StateEnsemble::uniform(states, seed, format!("rayleigh(n={n}, seed={seed})"))
}

/// Pathloss ensemble with Rayleigh fading on every link.
pub fn sample_geometric(config: &GeometryConfig, n_states: usize, seed: u64) -> Result<StateEnsemble> {
    config.validate()?;
    if n_states == 0 {
        return Err(Error::Config("n_states must be at least 1".into()));
    }
    let [m0, m1, m2] = config.link_means();
    let g0 = exponential_draws(seed, STREAM_G0, m0, n_states);
    let g1 = exponential_draws(seed, STREAM_G1, m1, n_states);
    let g2 = exponential_draws(seed, STREAM_G2, m2, n_states);
    let mean_phi = config.mean_phi();
    let phi = if config.is_colocated() && config.loopback == LoopbackModel::Fixed {
        vec![mean_phi; n_states]
    } else {
        exponential_draws(seed, STREAM_LOOPBACK, mean_phi, n_states)
    };
    let states = (0..n_states)
        .map(|i| FadingState::new(g0[i], g1[i], g2[i], phi[i]))
        .collect();
    let kind = if config.is_colocated() { "colocated" } else { "separate" };
    StateEnsemble::uniform(states, seed, format!("geometric-{kind}(n={n_states}, seed={seed})"))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_mean(xs: impl Iterator<Item = f64>) -> f64 {
        let v: Vec<f64> = xs.collect();
        v.iter().sum::<f64>() / v.len() as f64
    }

    #[test]
    fn rayleigh_means_match_variances() {
        let ens = sample_rayleigh(&RayleighConfig::normalized(100_000), 7).unwrap();
        let m0 = sample_mean(ens.states().iter().map(|s| s.g0));
        let m1 = sample_mean(ens.states().iter().map(|s| s.g1));
        let m2 = sample_mean(ens.states().iter().map(|s| s.g2));
        assert!((m0 - 1.0).abs() <= 0.02, "g0 mean {m0}");
        assert!((m1 - 0.1).abs() <= 0.002, "g1 mean {m1}");
        assert!((m2 - 0.1).abs() <= 0.002, "g2 mean {m2}");
        assert!(ens.states().iter().all(|s| s.g0 > 0.0 && s.g1 > 0.0 && s.g2 > 0.0));
        assert!(ens.states().iter().all(|s| s.phi == 0.0));
    }

    #[test]
    fn relative_error_within_three_over_root_n() {
        let n = 100_000;
        let cfg = RayleighConfig { var0: 2.0, var1: 0.5, var2: 0.25, n_states: n };
        let ens = sample_rayleigh(&cfg, 99).unwrap();
        let bound = 3.0 / (n as f64).sqrt();
        for (mean, pick) in [
            (2.0, 0usize),
            (0.5, 1),
            (0.25, 2),
        ] {
            let m = sample_mean(ens.states().iter().map(|s| [s.g0, s.g1, s.g2][pick]));
            assert!(((m - mean) / mean).abs() <= bound, "link {pick}: {m}");
        }
    }

    #[test]
    fn single_state_has_unit_weight() {
        let ens = sample_rayleigh(&RayleighConfig::normalized(1), 3).unwrap();
        assert_eq!(ens.len(), 1);
        assert_eq!(ens.weights()[0], 1.0);
    }

    #[test]
    fn sampling_is_deterministic() {
        let cfg = RayleighConfig::normalized(1000);
        let a = sample_rayleigh(&cfg, 11).unwrap();
        let b = sample_rayleigh(&cfg, 11).unwrap();
        assert_eq!(a, b);
        let mut ca = Vec::new();
        let mut cb = Vec::new();
        a.write_csv(&mut ca).unwrap();
        b.write_csv(&mut cb).unwrap();
        assert_eq!(ca, cb);
        let c = sample_rayleigh(&cfg, 12).unwrap();
        assert_ne!(a.states(), c.states());
    }

    #[test]
    fn invalid_configs_rejected() {
        let mut cfg = RayleighConfig::normalized(10);
        cfg.var1 = 0.0;
        assert!(matches!(sample_rayleigh(&cfg, 0), Err(Error::Config(_))));
        let cfg = RayleighConfig::normalized(0);
        assert!(matches!(sample_rayleigh(&cfg, 0), Err(Error::Config(_))));
        let mut geo = GeometryConfig::colocated();
        geo.rx = geo.tx;
        assert!(sample_geometric(&geo, 10, 0).is_err());
    }

    #[test]
    fn pathloss_formula() {
        let geo = GeometryConfig::colocated();
        let m = geo.mean_pathloss(500.0);
        assert!((m / 8e-12 - 1.0).abs() < 1e-12, "{m}");
        assert!((geo.link_means()[0] / 8e-12 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn colocated_loopback_after_cancellation() {
        let geo = GeometryConfig::colocated();
        let expected = 10f64.powf(-1.5) / 1e11;
        assert!((geo.mean_phi() / expected - 1.0).abs() < 1e-12);
        assert!((geo.mean_phi() - 3.16e-13).abs() < 0.01e-13);
        let ens = sample_geometric(&geo, 100, 5).unwrap();
        assert!(ens.states().iter().all(|s| s.phi == geo.mean_phi()));
    }

    #[test]
    fn separate_loopback_uses_antenna_distance() {
        let geo = GeometryConfig::separate();
        assert!(!geo.is_colocated());
        let expected = geo.mean_pathloss(250.0) / 1e11;
        assert!((geo.mean_phi() / expected - 1.0).abs() < 1e-12);
        let ens = sample_geometric(&geo, 50_000, 5).unwrap();
        let m = sample_mean(ens.states().iter().map(|s| s.phi));
        assert!((m / expected - 1.0).abs() < 0.03);
    }

    #[test]
    fn rayleigh_loopback_option() {
        let geo = GeometryConfig {
            loopback: LoopbackModel::Rayleigh,
            ..GeometryConfig::colocated()
        };
        let ens = sample_geometric(&geo, 50_000, 8).unwrap();
        let m = sample_mean(ens.states().iter().map(|s| s.phi));
        assert!((m / geo.mean_phi() - 1.0).abs() < 0.03);
        assert!(ens.states().iter().any(|s| s.phi != geo.mean_phi()));
    }

    #[test]
    fn csv_roundtrip_is_exact() {
        let ens = sample_geometric(&GeometryConfig::separate(), 64, 21).unwrap();
        let mut buf = Vec::new();
        ens.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("index,weight,g0,g1,g2,phi\n"));
        let back = StateEnsemble::read_csv(buf.as_slice(), 21, ens.label()).unwrap();
        assert_eq!(back.states(), ens.states());
        assert_eq!(back.weights(), ens.weights());
    }

    #[test]
    fn weights_must_normalize() {
        let s = FadingState::new(1.0, 1.0, 1.0, 0.0);
        assert!(StateEnsemble::new(vec![s, s], vec![0.5, 0.4], 0, "").is_err());
        assert!(StateEnsemble::new(vec![s, s], vec![1.0, 0.0], 0, "").is_err());
        assert!(StateEnsemble::new(vec![], vec![], 0, "").is_err());
        assert!(StateEnsemble::new(vec![s, s], vec![0.25, 0.75], 0, "").is_ok());
    }
}
