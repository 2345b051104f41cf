//! Sweep runners behind the CLI subcommands. Each writes its CSV files
//! into an output directory and returns their paths.

use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use super::config::{ExperimentConfig, Objective};
use crate::channel::{fmt_f64, StateEnsemble};
use crate::metrics::{
    baseline_constant, baseline_onoff, baseline_passive, evaluate_policy, non_outage, write_reports, JammingPolicy,
    NoiseModel, ReportRow, TxPowerProfile,
};
use crate::online::{run_online, write_trace, OnlineConfig, OnlineTrace};
use crate::solver_fixed::solve_fixed;
use crate::solver_outage::solve_outage;
use crate::solver_wf::{evaluate_waterfilled, solve_wf_with, write_beta_scan, WfOptions, WfSolution};
use crate::Result;

fn create(dir: &Path, name: &str) -> Result<(BufWriter<File>, PathBuf)> {
    std::fs::create_dir_all(dir)?;
    let path = dir.join(name);
    Ok((BufWriter::new(File::create(&path)?), path))
}

/// Keeps the leading successful results and the first error, if any.
fn split_ok<T>(results: Vec<Result<T>>) -> (Vec<T>, Option<crate::Error>) {
    let mut ok = Vec::with_capacity(results.len());
    for r in results {
        match r {
            Ok(v) => ok.push(v),
            Err(e) => return (ok, Some(e)),
        }
    }
    (ok, None)
}

fn finish(files: Vec<PathBuf>, err: Option<crate::Error>) -> Result<Vec<PathBuf>> {
    match err {
        Some(e) => Err(e),
        None => Ok(files),
    }
}

fn wf_options(cfg: &ExperimentConfig) -> WfOptions {
    WfOptions { beta_grid: cfg.solver.beta_grid, refine: cfg.solver.refine, ..WfOptions::default() }
}

fn baselines(ens: &StateEnsemble, q: f64, noise: &NoiseModel) -> Result<Vec<JammingPolicy>> {
    Ok(vec![baseline_constant(ens, q)?, baseline_onoff(ens, q, noise)?, baseline_passive(ens)])
}

/// Rows of one `sweep-q` point: the optimal scheme first, then the
/// baselines when enabled.
pub fn sweep_q_point(cfg: &ExperimentConfig, ens: &StateEnsemble, noise: &NoiseModel, q: f64) -> Result<Vec<ReportRow>> {
    let p = cfg.linear(cfg.p);
    let row = |label: &str, report| ReportRow { label: label.to_string(), budget: q, report };
    let mut rows = Vec::new();
    match cfg.solver.objective {
        Objective::NonOutage => {
            let si = cfg.solver.self_interference;
            let nosi;
            let eval_ens = if si {
                ens
            } else {
                nosi = ens.without_self_interference();
                &nosi
            };
            let tx = TxPowerProfile::fixed(ens.len(), p);
            let sol = solve_outage(ens, q, noise, si)?;
            rows.push(row(&sol.policy.label, evaluate_policy(eval_ens, &sol.policy, &tx, noise)?));
            if cfg.solver.baselines {
                for b in baselines(eval_ens, q, noise)? {
                    rows.push(row(&b.label, evaluate_policy(eval_ens, &b, &tx, noise)?));
                }
            }
        }
        Objective::RelativeFixed => {
            let tx = TxPowerProfile::fixed(ens.len(), p);
            let sol = solve_fixed(ens, p, noise, q)?;
            rows.push(row(&sol.policy.label, sol.report));
            if cfg.solver.baselines {
                for b in baselines(ens, q, noise)? {
                    rows.push(row(&b.label, evaluate_policy(ens, &b, &tx, noise)?));
                }
            }
        }
        Objective::RelativeWaterfilling => {
            let sol = solve_wf_with(ens, p, noise, q, &wf_options(cfg))?;
            rows.push(row(&sol.policy.label, sol.report));
            if cfg.solver.baselines {
                for b in baselines(ens, q, noise)? {
                    rows.push(row(&b.label, evaluate_waterfilled(ens, &b, p, noise)?.0));
                }
            }
        }
    }
    Ok(rows)
}

/// One report row per scheme and budget, in sweep order.
pub fn run_sweep_q(cfg: &ExperimentConfig, out: &Path) -> Result<Vec<PathBuf>> {
    let ens = cfg.ensemble()?;
    let noise = cfg.noise_model()?;
    let results: Vec<Result<Vec<ReportRow>>> = cfg
        .q_sweep
        .par_iter()
        .map(|&qdb| sweep_q_point(cfg, &ens, &noise, cfg.linear(qdb)))
        .collect();
    let (rows, err) = split_ok(results);
    let (w, path) = create(out, "sweep_q.csv")?;
    write_reports(w, &rows.concat())?;
    finish(vec![path], err)
}

pub const SWEEP_P_HEADER: [&str; 4] = ["P_db", "P", "relative_rate_fixed", "relative_rate_waterfilling"];

/// Relative rates of both transmitter policies across transmit powers.
pub fn run_sweep_p(cfg: &ExperimentConfig, out: &Path) -> Result<Vec<PathBuf>> {
    let sp = cfg
        .sweep_p
        .as_ref()
        .ok_or_else(|| crate::Error::Config("sweep-p needs a [sweep_p] section".into()))?;
    let ens = cfg.ensemble()?;
    let noise = cfg.noise_model()?;
    let q = cfg.linear(sp.q);
    let opts = wf_options(cfg);
    let results: Vec<Result<(f64, f64, f64, f64)>> = sp
        .p_sweep
        .par_iter()
        .map(|&pdb| {
            let p = cfg.linear(pdb);
            let fixed = solve_fixed(&ens, p, &noise, q)?;
            let wf = solve_wf_with(&ens, p, &noise, q, &opts)?;
            Ok((pdb, p, fixed.report.relative_rate, wf.report.relative_rate))
        })
        .collect();
    let (rows, err) = split_ok(results);
    let (w, path) = create(out, "sweep_p.csv")?;
    let mut w = csv::Writer::from_writer(w);
    w.write_record(SWEEP_P_HEADER)?;
    for (pdb, p, f, wf) in rows {
        w.write_record([fmt_f64(pdb), fmt_f64(p), fmt_f64(f), fmt_f64(wf)])?;
    }
    w.flush()?;
    finish(vec![path], err)
}

/// Whether `values` rise to one interior peak and then fall, ignoring
/// dips and bumps no larger than `band`.
pub fn single_peak(values: &[f64], band: f64) -> bool {
    let n = values.len();
    if n < 3 {
        return false;
    }
    let k = values
        .iter()
        .enumerate()
        .fold(0, |k, (i, v)| if *v > values[k] { i } else { k });
    if k == 0 || k == n - 1 {
        return false;
    }
    let mut run = f64::NEG_INFINITY;
    for v in &values[..=k] {
        run = run.max(*v);
        if *v < run - band {
            return false;
        }
    }
    let mut low = f64::INFINITY;
    for v in &values[k..] {
        low = low.min(*v);
        if *v > low + band {
            return false;
        }
    }
    true
}

/// Water-filling solve at one budget with its full beta scan.
pub fn beta_scan_solution(cfg: &ExperimentConfig, ens: &StateEnsemble, noise: &NoiseModel) -> Result<WfSolution> {
    solve_wf_with(ens, cfg.linear(cfg.p), noise, cfg.linear(cfg.beta_scan.q), &wf_options(cfg))
}

pub fn run_beta_scan(cfg: &ExperimentConfig, out: &Path) -> Result<Vec<PathBuf>> {
    let ens = cfg.ensemble()?;
    let noise = cfg.noise_model()?;
    let sol = beta_scan_solution(cfg, &ens, &noise)?;
    let ts: Vec<f64> = sol.beta_scan.iter().map(|s| s.t_achieved).collect();
    if !single_peak(&ts, 0.01) {
        log::warn!("beta scan does not show a single interior maximum");
    }
    let (w, path) = create(out, "beta_scan.csv")?;
    write_beta_scan(w, &sol.beta_scan)?;
    Ok(vec![path])
}

/// One scheme of the online comparison table.
#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonRow {
    pub budget: f64,
    pub label: String,
    pub non_outage: f64,
    pub avg_jam_power: f64,
    /// Jamming threshold: `1/lambda` for the optimal schemes, the tail
    /// mean of the adapted threshold for the online scheme.
    pub threshold: f64,
}

pub const COMPARISON_HEADER: [&str; 5] = ["Q", "label", "non_outage", "avg_jam_power", "threshold"];

pub fn online_config(cfg: &ExperimentConfig, q: f64) -> OnlineConfig {
    let o = &cfg.online;
    OnlineConfig {
        n_blocks: o.n_blocks.unwrap_or(cfg.n_states),
        tau_init: o.tau_init_factor * q,
        chi: o.chi_factor * q,
        budget: q,
        probe_tol: o.probe_tol,
        probe_cap: o.probe_cap_factor * q,
    }
}

/// Optimal with and without self-interference, online, and the baselines
/// at one budget.
pub fn comparison_point(
    cfg: &ExperimentConfig,
    ens: &StateEnsemble,
    noise: &NoiseModel,
    q: f64,
) -> Result<(Vec<ComparisonRow>, OnlineTrace)> {
    let row = |label: &str, non_outage, avg_jam_power, threshold| ComparisonRow {
        budget: q,
        label: label.to_string(),
        non_outage,
        avg_jam_power,
        threshold,
    };
    let with_si = solve_outage(ens, q, noise, true)?;
    let no_si = solve_outage(ens, q, noise, false)?;
    let trace = run_online(ens, noise, &online_config(cfg, q))?;
    let mut rows = vec![
        row("optimal-si", with_si.non_outage, with_si.avg_power, with_si.threshold),
        row("optimal", no_si.non_outage, no_si.avg_power, no_si.threshold),
        row("online", trace.non_outage, trace.avg_power, trace.tail_mean_tau),
    ];
    if cfg.solver.baselines {
        for b in baselines(ens, q, noise)? {
            rows.push(row(&b.label, non_outage(ens, &b.q, noise), b.avg_power(ens), f64::NAN));
        }
    }
    Ok((rows, trace))
}

pub fn run_online_experiment(cfg: &ExperimentConfig, out: &Path) -> Result<Vec<PathBuf>> {
    let ens = cfg.ensemble()?;
    let noise = cfg.noise_model()?;
    let results: Vec<Result<Vec<ComparisonRow>>> = cfg
        .q_sweep
        .par_iter()
        .map(|&qdb| comparison_point(cfg, &ens, &noise, cfg.linear(qdb)).map(|(rows, _)| rows))
        .collect();
    let (rows, err) = split_ok(results);
    let (w, cmp_path) = create(out, "online_comparison.csv")?;
    let mut w = csv::Writer::from_writer(w);
    w.write_record(COMPARISON_HEADER)?;
    for r in rows.concat() {
        w.write_record([
            fmt_f64(r.budget),
            r.label,
            fmt_f64(r.non_outage),
            fmt_f64(r.avg_jam_power),
            fmt_f64(r.threshold),
        ])?;
    }
    w.flush()?;
    if let Some(e) = err {
        return Err(e);
    }
    let trace_q = cfg.online.trace_q.unwrap_or(cfg.q_sweep[cfg.q_sweep.len() - 1]);
    let trace = run_online(&ens, &noise, &online_config(cfg, cfg.linear(trace_q)))?;
    let (w, trace_path) = create(out, "online_trace.csv")?;
    write_trace(w, &trace)?;
    Ok(vec![cmp_path, trace_path])
}

pub fn run_gen_ensemble(cfg: &ExperimentConfig, out: &Path) -> Result<Vec<PathBuf>> {
    let ens = cfg.ensemble()?;
    let (w, path) = create(out, "ensemble.csv")?;
    ens.write_csv(w)?;
    Ok(vec![path])
}
