//! Experiment configuration files and the bundled presets.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::channel::{sample_geometric, sample_rayleigh, GeometryConfig, LoopbackModel, RayleighConfig, StateEnsemble};
use crate::metrics::NoiseModel;
use crate::units::db_to_linear;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scenario {
    /// Normalized Rayleigh fading, powers in dB relative to unit noise.
    Rayleigh,
    /// Pathloss geometry with both monitor antennas at one point, dBm.
    GeometricColocated,
    /// Pathloss geometry with separated monitor antennas, dBm.
    GeometricSeparate,
}

impl Scenario {
    pub fn unit(self) -> PowerUnit {
        match self {
            Self::Rayleigh => PowerUnit::Db,
            _ => PowerUnit::Dbm,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PowerUnit {
    #[serde(rename = "dB")]
    Db,
    #[serde(rename = "dBm")]
    Dbm,
}

/// Quantity maximized by `sweep-q`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Objective {
    #[default]
    NonOutage,
    RelativeFixed,
    RelativeWaterfilling,
}

fn default_true() -> bool {
    true
}

fn default_beta_grid() -> usize {
    32
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverSection {
    #[serde(default)]
    pub objective: Objective,
    /// Model residual self-interference in the non-outage solver.
    #[serde(default)]
    pub self_interference: bool,
    #[serde(default = "default_true")]
    pub baselines: bool,
    #[serde(default = "default_beta_grid")]
    pub beta_grid: usize,
    #[serde(default)]
    pub refine: bool,
}

impl Default for SolverSection {
    fn default() -> Self {
        Self {
            objective: Objective::default(),
            self_interference: false,
            baselines: true,
            beta_grid: default_beta_grid(),
            refine: false,
        }
    }
}

fn default_fixed_q() -> f64 {
    20.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepPSection {
    /// Transmit powers, in the scenario unit.
    pub p_sweep: Vec<f64>,
    /// Jamming budget, in the scenario unit.
    #[serde(default = "default_fixed_q")]
    pub q: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BetaScanSection {
    #[serde(default = "default_fixed_q")]
    pub q: f64,
}

impl Default for BetaScanSection {
    fn default() -> Self {
        Self { q: default_fixed_q() }
    }
}

fn default_tau_init_factor() -> f64 {
    2.0
}

fn default_chi_factor() -> f64 {
    1e-3
}

fn default_probe_tol() -> f64 {
    1e-6
}

fn default_probe_cap_factor() -> f64 {
    1e6
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OnlineSection {
    /// Defaults to the ensemble size.
    #[serde(default)]
    pub n_blocks: Option<usize>,
    /// Budget whose per-block trace is written, in the scenario unit.
    /// Defaults to the last entry of the Q sweep.
    #[serde(default)]
    pub trace_q: Option<f64>,
    /// Initial threshold as a multiple of Q.
    #[serde(default = "default_tau_init_factor")]
    pub tau_init_factor: f64,
    /// Threshold step as a multiple of Q.
    #[serde(default = "default_chi_factor")]
    pub chi_factor: f64,
    #[serde(default = "default_probe_tol")]
    pub probe_tol: f64,
    /// Probe cap as a multiple of Q.
    #[serde(default = "default_probe_cap_factor")]
    pub probe_cap_factor: f64,
}

impl Default for OnlineSection {
    fn default() -> Self {
        Self {
            n_blocks: None,
            trace_q: None,
            tau_init_factor: default_tau_init_factor(),
            chi_factor: default_chi_factor(),
            probe_tol: default_probe_tol(),
            probe_cap_factor: default_probe_cap_factor(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    pub scenario: Scenario,
    /// Unit of every power below; must match the scenario.
    pub units: PowerUnit,
    pub seed: u64,
    pub n_states: usize,
    /// Transmit power of the suspicious link.
    pub p: f64,
    /// Receiver and monitor noise powers; scenario default when absent.
    #[serde(default)]
    pub noise: Option<[f64; 2]>,
    /// Jamming budgets.
    pub q_sweep: Vec<f64>,
    /// Variances of the three Rayleigh links.
    #[serde(default)]
    pub variances: Option<[f64; 3]>,
    #[serde(default)]
    pub loopback: LoopbackModel,
    #[serde(default)]
    pub out: Option<PathBuf>,
    #[serde(default)]
    pub solver: SolverSection,
    #[serde(default)]
    pub sweep_p: Option<SweepPSection>,
    #[serde(default)]
    pub beta_scan: BetaScanSection,
    #[serde(default)]
    pub online: OnlineSection,
}

pub const PRESET_NAMES: [&str; 10] = ["fig2", "fig3", "fig4", "fig5", "fig6", "fig7", "fig8", "fig9", "fig10", "fig11"];

fn preset_text(name: &str) -> Option<&'static str> {
    Some(match name {
        "fig2" => include_str!("../../presets/fig2.toml"),
        "fig3" => include_str!("../../presets/fig3.toml"),
        "fig4" => include_str!("../../presets/fig4.toml"),
        "fig5" => include_str!("../../presets/fig5.toml"),
        "fig6" => include_str!("../../presets/fig6.toml"),
        "fig7" => include_str!("../../presets/fig7.toml"),
        "fig8" => include_str!("../../presets/fig8.toml"),
        "fig9" => include_str!("../../presets/fig9.toml"),
        "fig10" => include_str!("../../presets/fig10.toml"),
        "fig11" => include_str!("../../presets/fig11.toml"),
        _ => return None,
    })
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn preset(name: &str) -> Result<Self> {
        let text = preset_text(name).ok_or_else(|| {
            Error::Config(format!("unknown preset `{name}`; available: {}", PRESET_NAMES.join(", ")))
        })?;
        Self::parse(text)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.units != self.scenario.unit() {
            return bad(format!("scenario {:?} expects units {:?}", self.scenario, self.scenario.unit()));
        }
        if self.n_states == 0 {
            return bad("n_states must be at least 1".into());
        }
        if self.q_sweep.is_empty() {
            return bad("q_sweep must not be empty".into());
        }
        let finite = |xs: &[f64]| xs.iter().all(|x| x.is_finite());
        if !finite(&self.q_sweep) || !self.p.is_finite() {
            return bad("powers must be finite".into());
        }
        if let Some(n) = self.noise {
            if !finite(&n) {
                return bad("noise powers must be finite".into());
            }
        }
        if let Some(v) = self.variances {
            if self.scenario != Scenario::Rayleigh {
                return bad("variances only apply to the rayleigh scenario".into());
            }
            if !v.iter().all(|x| x.is_finite() && *x > 0.0) {
                return bad("variances must be positive".into());
            }
        }
        if let Some(sp) = &self.sweep_p {
            if sp.p_sweep.is_empty() {
                return bad("sweep_p.p_sweep must not be empty".into());
            }
            if !finite(&sp.p_sweep) || !sp.q.is_finite() {
                return bad("sweep_p powers must be finite".into());
            }
        }
        if self.solver.beta_grid < 3 {
            return bad("solver.beta_grid must be at least 3".into());
        }
        let o = &self.online;
        if let Some(n) = o.n_blocks {
            if n == 0 || n > self.n_states {
                return bad(format!("online.n_blocks must lie in 1..={}", self.n_states));
            }
        }
        let ok = o.tau_init_factor >= 0.0
            && o.tau_init_factor.is_finite()
            && o.chi_factor >= 0.0
            && o.chi_factor.is_finite()
            && o.probe_tol > 0.0
            && o.probe_tol < 1.0
            && o.probe_cap_factor >= 0.01
            && o.probe_cap_factor.is_finite();
        if !ok {
            return bad("invalid online section".into());
        }
        Ok(())
    }

    /// Replaces the ensemble size, shrinking the online horizon to fit.
    pub fn with_n_states(mut self, n: usize) -> Result<Self> {
        self.n_states = n;
        if let Some(b) = self.online.n_blocks {
            self.online.n_blocks = Some(b.min(n));
        }
        self.validate()?;
        Ok(self)
    }

    /// Converts a power in the scenario unit to linear scale (mW for dBm).
    pub fn linear(&self, x: f64) -> f64 {
        db_to_linear(x)
    }

    pub fn noise_model(&self) -> Result<NoiseModel> {
        let [s0, s1] = self.noise.unwrap_or(match self.scenario {
            Scenario::Rayleigh => [0.0, 0.0],
            _ => [-80.0, -80.0],
        });
        NoiseModel::new(self.linear(s0), self.linear(s1))
    }

    pub fn geometry(&self) -> Option<GeometryConfig> {
        let g = match self.scenario {
            Scenario::Rayleigh => return None,
            Scenario::GeometricColocated => GeometryConfig::colocated(),
            Scenario::GeometricSeparate => GeometryConfig::separate(),
        };
        Some(GeometryConfig { loopback: self.loopback, ..g })
    }

    pub fn ensemble(&self) -> Result<StateEnsemble> {
        match self.geometry() {
            Some(g) => sample_geometric(&g, self.n_states, self.seed),
            None => {
                let [var0, var1, var2] = self.variances.unwrap_or([1.0, 0.1, 0.1]);
                sample_rayleigh(&RayleighConfig { var0, var1, var2, n_states: self.n_states }, self.seed)
            }
        }
    }

    pub fn out_dir(&self) -> PathBuf {
        self.out.clone().unwrap_or_else(|| PathBuf::from("out").join(&self.name))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
name = "t"
scenario = "rayleigh"
units = "dB"
seed = 3
n_states = 10
p = 20.0
q_sweep = [0.0, 10.0]
"#;

    #[test]
    fn every_preset_parses() {
        for name in PRESET_NAMES {
            let cfg = ExperimentConfig::preset(name).unwrap();
            assert_eq!(cfg.name, name);
        }
    }

    #[test]
    fn unknown_preset_is_config_error() {
        assert!(matches!(ExperimentConfig::preset("fig1"), Err(Error::Config(_))));
    }

    #[test]
    fn minimal_defaults() {
        let cfg = ExperimentConfig::parse(MINIMAL).unwrap();
        assert_eq!(cfg.solver, SolverSection::default());
        assert_eq!(cfg.noise_model().unwrap(), NoiseModel::unit());
        assert_eq!(cfg.out_dir(), PathBuf::from("out/t"));
        assert_eq!(cfg.ensemble().unwrap().len(), 10);
    }

    #[test]
    fn empty_sweep_rejected() {
        let text = MINIMAL.replace("[0.0, 10.0]", "[]");
        assert!(matches!(ExperimentConfig::parse(&text), Err(Error::Config(_))));
    }

    #[test]
    fn unit_mismatch_rejected() {
        let text = MINIMAL.replace("\"dB\"", "\"dBm\"");
        assert!(matches!(ExperimentConfig::parse(&text), Err(Error::Config(_))));
    }

    #[test]
    fn missing_seed_rejected() {
        let text = MINIMAL.replace("seed = 3\n", "");
        assert!(matches!(ExperimentConfig::parse(&text), Err(Error::Config(_))));
    }

    #[test]
    fn unknown_key_rejected() {
        let text = format!("{MINIMAL}bogus = 1\n");
        assert!(ExperimentConfig::parse(&text).is_err());
    }

    #[test]
    fn geometric_noise_default() {
        let cfg = ExperimentConfig::preset("fig10").unwrap();
        let n = cfg.noise_model().unwrap();
        assert!((n.sigma0_sq / 1e-8 - 1.0).abs() < 1e-12);
        assert!(cfg.geometry().unwrap().is_colocated());
    }

    #[test]
    fn shrinking_clamps_horizon() {
        let cfg = ExperimentConfig::preset("fig9").unwrap().with_n_states(100).unwrap();
        assert_eq!(cfg.online.n_blocks, Some(100));
    }
}
