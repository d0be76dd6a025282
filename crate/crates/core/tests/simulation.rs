use idxtrack::simulate::{brownian_increments, coarsen_increments, path_from_increments};
use idxtrack::*;

fn mean_sd(x: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let m = x.iter().sum::<f64>() / n;
    let v = x.iter().map(|a| (a - m) * (a - m)).sum::<f64>() / (n - 1.0);
    (m, v.sqrt())
}

#[test]
fn paths_are_deterministic_and_order_independent() {
    let model = Model::csqr(0.0, 4.0, 2.0, 0.2, 0.3, 0.3, 0.5).unwrap();
    let grid = make_grid(0.0, 0.25, 100).unwrap();
    let a = simulate_paths(&model, &[0.2, 0.22], grid, 8, 99).unwrap();
    let b = simulate_paths(&model, &[0.2, 0.22], grid, 8, 99).unwrap();
    assert_eq!(a, b);
    let few = simulate_paths(&model, &[0.2, 0.22], grid, 3, 99).unwrap();
    assert_eq!(few[..], a[..3]);
    let single = simulate_path(&model, &[0.2, 0.22], grid, 99, 5, SimOptions::default()).unwrap();
    assert_eq!(single, a[5]);
    assert_ne!(a[0].states, a[1].states);
}

#[test]
fn cir_terminal_mean_matches_closed_form() {
    let (kappa, theta, s0, horizon) = (20.0, 0.2, 0.3, 0.5);
    let model = Model::cir(0.0, kappa, theta, 0.4).unwrap();
    let grid = make_grid(0.0, horizon, 5000).unwrap();
    let terminal: Vec<f64> = (0..10_000)
        .map(|id| {
            let p = simulate_path(&model, &[s0], grid, 3, id, SimOptions::default()).unwrap();
            p.states[p.grid.n_steps].m[0]
        })
        .collect();
    let (m, sd) = mean_sd(&terminal);
    let want = theta + (s0 - theta) * (-kappa * horizon).exp();
    assert!((m - want).abs() <= 3.0 * sd / (terminal.len() as f64).sqrt(), "{m} vs {want}");
}

#[test]
fn gbm_log_moments() {
    let (r, sigma, horizon) = (0.05, 0.2, 0.5);
    let model = Model::bs(r, sigma).unwrap();
    let grid = make_grid(0.0, horizon, 4).unwrap();
    let logs: Vec<f64> = (0..100_000)
        .map(|id| {
            let p = simulate_path(&model, &[50.0], grid, 17, id, SimOptions::default()).unwrap();
            (p.states[4].m[0] / 50.0).ln()
        })
        .collect();
    let n = logs.len() as f64;
    let (m, sd) = mean_sd(&logs);
    let var = sd * sd;
    let want_m = (r - sigma * sigma / 2.0) * horizon;
    let want_v = sigma * sigma * horizon;
    assert!((m - want_m).abs() <= 4.0 * sd / n.sqrt());
    // standard error of the sample variance for normal data
    assert!((var - want_v).abs() <= 4.0 * want_v * (2.0 / (n - 1.0)).sqrt());
}

#[test]
fn cir_truncation_rate_is_small() {
    let model = Model::cir(0.0, 20.0, 0.2, 0.4).unwrap();
    let grid = make_grid(0.0, 0.5, 5000).unwrap();
    let paths = simulate_paths(&model, &[0.2], grid, 200, 8).unwrap();
    let events: usize = paths.iter().map(|p| p.truncation_events).sum();
    let rate = events as f64 / (200.0 * 5000.0);
    assert!(rate < 1e-3, "{rate}");
}

#[test]
fn deterministic_limits() {
    let cir = Model::cir(0.0, 20.0, 0.2, 1e-12).unwrap();
    let grid = make_grid(0.0, 0.5, 500).unwrap();
    let p = simulate_path(&cir, &[0.2], grid, 1, 0, SimOptions::default()).unwrap();
    assert!(p.states.iter().all(|s| (s.m[0] - 0.2).abs() < 1e-9));
}

#[test]
fn coarse_path_sees_same_noise() {
    let model = Model::bs(0.05, 0.2).unwrap();
    let fine = make_grid(0.0, 0.5, 200).unwrap();
    let coarse = make_grid(0.0, 0.5, 100).unwrap();
    let dw = brownian_increments(1, &fine, 4, 2);
    let total: f64 = dw.iter().map(|w| w[0]).sum();
    let pf = path_from_increments(&model, &[50.0], fine, dw.clone(), Measure::RiskNeutral).unwrap();
    let pc = path_from_increments(&model, &[50.0], coarse, coarsen_increments(&dw, 2), Measure::RiskNeutral).unwrap();
    // exact log-normal steps: the endpoints agree up to rounding
    let (a, b) = (pf.states[200].m[0], pc.states[100].m[0]);
    assert!((a - b).abs() < 1e-10 * a);
    assert!((b - 50.0 * ((0.05 - 0.02) * 0.5 + 0.2 * total).exp()).abs() < 1e-10 * b);
}

#[test]
fn portfolio_identity_tightens_with_step() {
    let model = Model::cir(0.0, 20.0, 0.2, 0.4).unwrap();
    let futures = [Derivative::index_futures(1.0 / 12.0)];
    let mut errs = Vec::new();
    for n in [200, 400, 800] {
        let grid = make_grid(0.0, 1.0 / 12.0, 800).unwrap();
        let dw = brownian_increments(1, &grid, 21, 0);
        let g = make_grid(0.0, 1.0 / 12.0, n).unwrap();
        let p = path_from_increments(&model, &[0.2], g, coarsen_increments(&dw, 800 / n), Measure::RiskNeutral).unwrap();
        let x = evolve_portfolio(&p, &model, &futures, 1.0, &[], 100.0).unwrap();
        errs.push(verify_prop2(&x, &p, 1.0, &[]));
    }
    assert!(errs[0] > errs[1] && errs[1] > errs[2], "{errs:?}");
}
