use cogjam::channel::{sample_geometric, sample_rayleigh, GeometryConfig, RayleighConfig};
use cogjam::metrics::{baseline_constant, baseline_onoff, evaluate_policy, non_outage, NoiseModel, TxPowerProfile};
use cogjam::online::{run_online, OnlineConfig};
use cogjam::solver_fixed::solve_fixed;
use cogjam::solver_outage::solve_outage;
use cogjam::solver_wf::{evaluate_waterfilled, solve_wf};

fn db(x: f64) -> f64 {
    10f64.powf(x / 10.0)
}

#[test]
fn outage_solution_spends_at_most_budget() {
    let ens = sample_rayleigh(&RayleighConfig::normalized(5000), 4).unwrap();
    let noise = NoiseModel::unit();
    for q in [0.1, 1.0, 10.0, 100.0] {
        let sol = solve_outage(&ens, q, &noise, false).unwrap();
        assert!(sol.avg_power <= q * (1.0 + 1e-12));
        assert_eq!(sol.non_outage, non_outage(&ens, &sol.policy.q, &noise));
    }
}

#[test]
fn fixed_solver_beats_baselines_on_small_ensemble() {
    let ens = sample_rayleigh(&RayleighConfig::normalized(500), 5).unwrap();
    let noise = NoiseModel::unit();
    let (p, q) = (100.0, 10.0);
    let sol = solve_fixed(&ens, p, &noise, q).unwrap();
    let tx = TxPowerProfile::fixed(ens.len(), p);
    for b in [baseline_constant(&ens, q).unwrap(), baseline_onoff(&ens, q, &noise).unwrap()] {
        let r = evaluate_policy(&ens, &b, &tx, &noise).unwrap();
        assert!(sol.report.relative_rate >= r.relative_rate - 1e-9);
    }
    assert!(sol.policy.avg_power(&ens) <= q * (1.0 + 1e-9));
}

#[test]
fn waterfilling_solution_is_budget_feasible() {
    let ens = sample_rayleigh(&RayleighConfig::normalized(300), 6).unwrap();
    let noise = NoiseModel::unit();
    let sol = solve_wf(&ens, 100.0, &noise, 10.0, 8).unwrap();
    assert!(sol.policy.avg_power(&ens) <= 10.0 * (1.0 + 1e-9));
    let (report, wf) = evaluate_waterfilled(&ens, &sol.policy, 100.0, &noise).unwrap();
    assert_eq!(report, sol.report);
    assert!((ens.mean(&wf.p) / 100.0 - 1.0).abs() < 1e-9);
    let (b0, b1) = sol.beta_regime;
    assert!(b0 <= sol.beta_star && sol.beta_star <= b1);
}

#[test]
fn online_tracks_budget_on_long_horizon() {
    let ens = sample_geometric(&GeometryConfig::separate(), 100_000, 11).unwrap();
    let noise = NoiseModel::new(db(-80.0), db(-80.0)).unwrap();
    let q = db(20.0);
    let tr = run_online(&ens, &noise, &OnlineConfig::standard(q, 100_000)).unwrap();
    assert!((tr.avg_power - q).abs() <= 0.1 * q, "{}", tr.avg_power);
    let opt = solve_outage(&ens, q, &noise, true).unwrap();
    assert!(tr.non_outage <= opt.non_outage + 0.02);
}
