//! The `verify` suite: pathwise identity, oracle and invariant checks.
//!
//! Every row of `verify.csv` is `check,value,tolerance,status`; `info` rows
//! are reported but never fail the run.

use std::fmt::Write as _;

use idxtrack::exposure::bs_slippage_rate;
use idxtrack::simulate::{brownian_increments, coarsen_increments, path_from_increments};
use idxtrack::vxx::{ols_slope, realized_qv, returns, time_average};
use idxtrack::{
    calibrate_cir, elasticities, elasticities_fd, evolve_portfolio, make_grid, null_relation_residual,
    null_relation_terms, run_vxx, simulate_paths, slippage_generic, slippage_rate, solve_weights,
    strategy_csqr_two_futures, strategy_heston_futures, verify_prop2, Calendar, Derivative, Error,
    FuturesQuote, Measure, Model, ModelKind, Target,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::config::ExperimentConfig;
use crate::output::{output_dir, write_manifest};
use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Pass,
    Fail,
    Info,
}

impl Status {
    fn as_str(self) -> &'static str {
        match self {
            Status::Pass => "pass",
            Status::Fail => "fail",
            Status::Info => "info",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub tolerance: String,
    pub status: Status,
}

impl Check {
    pub fn at_most(name: impl Into<String>, value: f64, tol: f64) -> Self {
        let status = if value <= tol { Status::Pass } else { Status::Fail };
        Self {
            name: name.into(),
            value,
            tolerance: format!("<= {tol:e}"),
            status,
        }
    }

    pub fn at_least(name: impl Into<String>, value: f64, tol: f64) -> Self {
        let status = if value >= tol { Status::Pass } else { Status::Fail };
        Self {
            name: name.into(),
            value,
            tolerance: format!(">= {tol}"),
            status,
        }
    }

    pub fn within(name: impl Into<String>, value: f64, lo: f64, hi: f64) -> Self {
        let status = if (lo..=hi).contains(&value) { Status::Pass } else { Status::Fail };
        Self {
            name: name.into(),
            value,
            tolerance: format!("[{lo}, {hi}]"),
            status,
        }
    }

    pub fn flag(name: impl Into<String>, ok: bool) -> Self {
        Self {
            name: name.into(),
            value: if ok { 1.0 } else { 0.0 },
            tolerance: "== 1".into(),
            status: if ok { Status::Pass } else { Status::Fail },
        }
    }

    pub fn info(name: impl Into<String>, value: f64) -> Self {
        Self {
            name: name.into(),
            value,
            tolerance: "-".into(),
            status: Status::Info,
        }
    }
}

/// Relative error with a floor on the reference magnitude.
pub fn rel_err(a: f64, b: f64, floor: f64) -> f64 {
    (a - b).abs() / a.abs().max(floor)
}

/// A random model, state and the contracts it supports.
pub fn random_case(rng: &mut ChaCha8Rng, kind: ModelKind) -> (Model, Vec<f64>, Vec<Derivative>) {
    let tau = rng.random_range(0.02..0.5);
    match kind {
        ModelKind::Bs => {
            let model = Model::bs(rng.random_range(0.01..0.1), rng.random_range(0.15..0.4)).unwrap();
            let s = 50.0 * rng.random_range(0.85..1.15);
            let call = Derivative::call(50.0, rng.random_range(0.25..1.5));
            (model, vec![s], vec![call, Derivative::index_futures(tau)])
        }
        ModelKind::Heston => {
            let model = Model::heston(
                rng.random_range(0.0..0.1),
                rng.random_range(0.5..5.0),
                rng.random_range(0.01..0.1),
                rng.random_range(0.1..0.6),
                rng.random_range(-0.9..0.9),
            )
            .unwrap();
            let m = vec![rng.random_range(20.0..200.0), rng.random_range(0.005..0.2)];
            (model, m, vec![Derivative::index_futures(tau), Derivative::factor_futures(1, tau)])
        }
        ModelKind::Cir => {
            let model = Model::cir(
                rng.random_range(0.0..0.1),
                rng.random_range(1.0..25.0),
                rng.random_range(0.1..0.4),
                rng.random_range(0.1..0.6),
            )
            .unwrap();
            (model, vec![rng.random_range(0.05..0.8)], vec![Derivative::index_futures(tau)])
        }
        ModelKind::Csqr => {
            let gamma = rng.random_range(0.5..10.0);
            let kappa = if rng.random_bool(0.2) { gamma } else { rng.random_range(0.5..10.0) };
            let model = Model::csqr(
                rng.random_range(0.0..0.1),
                gamma,
                kappa,
                rng.random_range(0.1..0.4),
                rng.random_range(0.1..0.6),
                rng.random_range(0.1..0.6),
                rng.random_range(-0.9..0.9),
            )
            .unwrap();
            let m = vec![rng.random_range(0.05..0.6), rng.random_range(0.05..0.6)];
            (model, m, vec![Derivative::index_futures(tau), Derivative::factor_futures(1, tau)])
        }
    }
}

pub const MODEL_KINDS: [ModelKind; 4] = [ModelKind::Bs, ModelKind::Heston, ModelKind::Cir, ModelKind::Csqr];

/// Closed-form versus finite-difference row at t = 0.
///
/// Returns `(drift error, worst exposure error)`. Exposures are relative to
/// `max(|closed|, 1e-3)`; the drift coefficient is relative to the largest
/// of its own size, its time and curvature parts, the null-relation terms and `1e-3`.
pub fn elasticity_errors(model: &Model, m: &[f64], spec: &Derivative, bump: f64) -> Result<(f64, f64), Error> {
    let closed = elasticities(model, 0.0, m, spec)?;
    let fd = elasticities_fd(model, 0.0, m, spec, bump)?;
    let scale = null_relation_terms(model, m, &closed)
        .into_iter()
        .fold(closed.drift_coeff.abs().max(1e-3), |acc, v| acc.max(v.abs()))
        .max(fd.time_term.abs())
        .max(fd.curvature_term.abs());
    let drift = (closed.drift_coeff - fd.row.drift_coeff).abs() / scale;
    let exposure = closed
        .exposures()
        .iter()
        .zip(fd.row.exposures())
        .map(|(&a, b)| rel_err(a, b, 1e-3))
        .fold(0.0, f64::max);
    Ok((drift, exposure))
}

/// A tracking setup for the pathwise identity checks.
pub struct IdentityCase {
    pub name: &'static str,
    pub model: Model,
    pub init: Vec<f64>,
    pub horizon: f64,
    pub instruments: Vec<Derivative>,
    pub beta: f64,
    pub etas: Vec<f64>,
}

/// Pathwise identity errors on nested grids: each path is driven by the same
/// Brownian increments at step `T/n` and `T/(2n)`. Returns `(coarse, fine)` per path.
pub fn nested_identity_errors(
    case: &IdentityCase,
    n_coarse: usize,
    paths: usize,
    seed: u64,
) -> Result<Vec<(f64, f64)>, Error> {
    let IdentityCase {
        model,
        init,
        horizon,
        instruments,
        beta,
        etas,
        ..
    } = case;
    let fine = make_grid(0.0, *horizon, 2 * n_coarse)?;
    let coarse = make_grid(0.0, *horizon, n_coarse)?;
    (0..paths as u64)
        .into_par_iter()
        .map(|id| {
            let dw = brownian_increments(model.dim(), &fine, seed, id);
            let dw_coarse = coarsen_increments(&dw, 2);
            let pf = path_from_increments(model, init, fine, dw, Measure::RiskNeutral)?;
            let pc = path_from_increments(model, init, coarse, dw_coarse, Measure::RiskNeutral)?;
            let xf = evolve_portfolio(&pf, model, instruments, *beta, etas, 100.0)?;
            let xc = evolve_portfolio(&pc, model, instruments, *beta, etas, 100.0)?;
            Ok((verify_prop2(&xc, &pc, *beta, etas), verify_prop2(&xf, &pf, *beta, etas)))
        })
        .collect()
}

fn worst(v: impl IntoIterator<Item = f64>) -> f64 {
    v.into_iter().fold(0.0, f64::max)
}

/// BS β = 2, CIR β = 1 at the VIX parameters, CSQR β = 1 with η = 0.
pub fn identity_cases() -> Vec<IdentityCase> {
    vec![
        IdentityCase {
            name: "bs_beta2",
            model: Model::bs(0.05, 0.2).unwrap(),
            init: vec![50.0],
            horizon: 0.5,
            instruments: vec![Derivative::index_futures(0.5)],
            beta: 2.0,
            etas: vec![],
        },
        IdentityCase {
            name: "cir_beta1",
            model: Model::cir(0.0, 20.0, 0.2, 0.4).unwrap(),
            init: vec![0.2],
            horizon: 1.0 / 12.0,
            instruments: vec![Derivative::index_futures(1.0 / 12.0)],
            beta: 1.0,
            etas: vec![],
        },
        IdentityCase {
            name: "csqr_beta1_eta0",
            model: Model::csqr(0.0, 4.0, 2.0, 0.2, 0.3, 0.3, 0.5).unwrap(),
            init: vec![0.2, 0.22],
            horizon: 0.5,
            instruments: vec![Derivative::index_futures(0.5), Derivative::index_futures(0.75)],
            beta: 1.0,
            etas: vec![0.0],
        },
    ]
}

fn identity_checks(checks: &mut Vec<Check>, dt: f64, paths: usize, seed: u64) -> Result<(), CliError> {
    for case in identity_cases() {
        let name = case.name;
        let n = ((case.horizon / dt).round() as usize).max(1);
        let errs = nested_identity_errors(&case, n, paths, seed)?;
        let coarse = worst(errs.iter().map(|e| e.0));
        let fine = worst(errs.iter().map(|e| e.1));
        checks.push(Check::at_most(format!("identity_{name}"), coarse, 5e-3));
        let ratio = coarse / fine;
        if case.model.kind() == ModelKind::Bs {
            checks.push(Check::info(format!("identity_{name}_halving_ratio"), ratio));
        } else {
            checks.push(Check::within(format!("identity_{name}_halving_ratio"), ratio, 1.6, 2.4));
        }
    }
    Ok(())
}

fn slippage_interval_checks(checks: &mut Vec<Check>, dt: f64, paths: usize, seed: u64) -> Result<(), CliError> {
    let model = Model::bs(0.05, 0.2).unwrap();
    let horizon = 0.5;
    let grid = make_grid(0.0, horizon, ((horizon / dt).round() as usize).max(1))?;
    let sample = simulate_paths(&model, &[50.0], grid, paths, seed)?;
    let futures = [Derivative::index_futures(horizon)];
    let mut worst_dev = 0.0_f64;
    let mut signs_ok = true;
    for beta in [-3.0, -2.5, -1.0, 0.0, 0.5, 1.0, 2.0, 3.0] {
        let predicted = bs_slippage_rate(0.05, 0.2, beta) * horizon;
        let gaps = sample
            .par_iter()
            .map(|p| {
                let x = evolve_portfolio(p, &model, &futures, beta, &[], 100.0)?;
                let last = p.states.len() - 1;
                Ok((x.values[last] / 100.0).ln() - beta * (p.states[last].m[0] / 50.0).ln())
            })
            .collect::<Result<Vec<f64>, Error>>()?;
        let mean = gaps.iter().sum::<f64>() / gaps.len() as f64;
        worst_dev = worst_dev.max((mean - predicted).abs());
        let expected = if beta == -2.5 || beta == 1.0 {
            0
        } else if (-2.5..1.0).contains(&beta) {
            1
        } else {
            -1
        };
        let sign = |x: f64| if x.abs() < 1e-12 { 0 } else if x > 0.0 { 1 } else { -1 };
        signs_ok &= sign(predicted) == expected && (expected == 0 || sign(mean) == expected);
    }
    checks.push(Check::at_most("bs_slippage_mean_deviation", worst_dev, 2e-3));
    checks.push(Check::flag("bs_slippage_sign_law", signs_ok));
    Ok(())
}

fn oracle_checks(checks: &mut Vec<Check>, states: usize, seed: u64) -> Result<(), CliError> {
    let (mut null, mut drift, mut expo, mut slip) = (0.0_f64, 0.0_f64, 0.0_f64, 0.0_f64);
    for (j, kind) in MODEL_KINDS.into_iter().enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(100 + j as u64);
        for _ in 0..states {
            let (model, m, specs) = random_case(&mut rng, kind);
            for spec in &specs {
                let row = elasticities(&model, 0.0, &m, spec)?;
                null = null.max(null_relation_residual(&model, &m, &row));
                let (d, e) = elasticity_errors(&model, &m, spec, 1e-4)?;
                drift = drift.max(d);
                expo = expo.max(e);
            }
            let beta = rng.random_range(-3.0..3.0);
            let etas: Vec<f64> = (0..model.factors()).map(|_| rng.random_range(-2.0..2.0)).collect();
            let a = slippage_generic(&model, &m, beta, &etas);
            let b = slippage_rate(&model, &m, beta, &etas);
            slip = slip.max(rel_err(a, b, 1.0));
        }
    }
    checks.push(Check::at_most("null_relation_residual", null, 1e-10));
    checks.push(Check::at_most("elasticity_fd_drift", drift, 1e-6));
    checks.push(Check::at_most("elasticity_fd_exposure", expo, 1e-6));
    checks.push(Check::at_most("slippage_generic_vs_model", slip, 1e-12));
    Ok(())
}

fn weight_checks(checks: &mut Vec<Check>, states: usize, seed: u64) -> Result<(), CliError> {
    let heston = Model::heston(0.03, 2.0, 0.04, 0.3, -0.7).unwrap();
    let m = [100.0, 0.05];
    let rows = [0.5, 1.0]
        .iter()
        .map(|&t| elasticities(&heston, 0.0, &m, &Derivative::index_futures(t)))
        .collect::<Result<Vec<_>, _>>()?;
    let singular = solve_weights(&rows, &Target::at(&heston, &m, 1.0, vec![0.5])?);
    checks.push(Check::flag(
        "heston_two_index_futures_singular",
        matches!(singular, Err(Error::SingularSystem { .. })),
    ));

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(200);
    let (mut heston_gap, mut csqr_gap) = (0.0_f64, 0.0_f64);
    for _ in 0..states {
        let (model, m, _) = random_case(&mut rng, ModelKind::Heston);
        let (beta, eta) = (rng.random_range(-3.0..3.0), rng.random_range(-2.0..2.0));
        let (tf, ty) = (rng.random_range(0.05..1.0), rng.random_range(0.05..1.0));
        let closed = strategy_heston_futures(&model, 0.0, &m, tf, ty, beta, eta)?;
        let rows = [Derivative::index_futures(tf), Derivative::factor_futures(1, ty)]
            .iter()
            .map(|s| elasticities(&model, 0.0, &m, s))
            .collect::<Result<Vec<_>, _>>()?;
        let sol = solve_weights(&rows, &Target::at(&model, &m, beta, vec![eta])?)?;
        for (a, b) in closed.iter().zip(&sol.weights) {
            heston_gap = heston_gap.max(rel_err(*a, *b, 1.0));
        }

        let (model, m, _) = random_case(&mut rng, ModelKind::Csqr);
        let t1 = rng.random_range(0.05..0.5);
        let t2 = t1 + rng.random_range(0.05..0.5);
        let closed = strategy_csqr_two_futures(&model, 0.0, &m, t1, t2, beta, eta)?;
        let rows = [t1, t2]
            .iter()
            .map(|&t| elasticities(&model, 0.0, &m, &Derivative::index_futures(t)))
            .collect::<Result<Vec<_>, _>>()?;
        let sol = solve_weights(&rows, &Target::at(&model, &m, beta, vec![eta])?)?;
        for (a, b) in closed.iter().zip(&sol.weights) {
            csqr_gap = csqr_gap.max(rel_err(*a, *b, 1.0));
        }
    }
    checks.push(Check::at_most("heston_futures_closed_vs_solve", heston_gap, 1e-10));
    checks.push(Check::at_most("csqr_two_futures_closed_vs_solve", csqr_gap, 1e-10));
    let csqr = Model::csqr(0.0, 4.0, 2.0, 0.2, 0.3, 0.3, 0.5).unwrap();
    let degenerate = strategy_csqr_two_futures(&csqr, 0.0, &[0.2, 0.22], 0.5, 0.5, 1.0, 0.0);
    checks.push(Check::flag(
        "csqr_equal_maturities_degenerate",
        degenerate == Err(Error::DegenerateMaturities),
    ));
    Ok(())
}

fn calibration_checks(checks: &mut Vec<Check>) -> Result<(), CliError> {
    let (kappa, theta) = (20.0_f64, 0.2_f64);
    let mut worst_err = 0.0_f64;
    let mut shapes = true;
    for spot in [0.15, 0.3] {
        let quotes: Vec<FuturesQuote<f64>> = [1.0 / 12.0, 2.0 / 12.0, 3.0 / 12.0, 6.0 / 12.0]
            .iter()
            .map(|&tau| FuturesQuote {
                maturity: tau,
                price: theta + (spot - theta) * (-kappa * tau).exp(),
            })
            .collect();
        let fit = calibrate_cir(&quotes, spot)?;
        worst_err = worst_err.max(rel_err(kappa, fit.kappa, 0.0)).max(rel_err(theta, fit.theta, 0.0));
        let curve: Vec<f64> = (0..=20)
            .map(|k| fit.theta + (spot - fit.theta) * (-fit.kappa * k as f64 / 40.0).exp())
            .collect();
        let slopes: Vec<f64> = curve.windows(2).map(|w| w[1] - w[0]).collect();
        let bends: Vec<f64> = slopes.windows(2).map(|w| w[1] - w[0]).collect();
        shapes &= if spot < theta {
            slopes.iter().all(|&s| s > 0.0) && bends.iter().all(|&b| b < 0.0)
        } else {
            slopes.iter().all(|&s| s < 0.0) && bends.iter().all(|&b| b > 0.0)
        };
    }
    checks.push(Check::at_most("cir_calibration_round_trip", worst_err, 1e-6));
    checks.push(Check::flag("cir_curve_shapes", shapes));
    Ok(())
}

fn vxx_checks(checks: &mut Vec<Check>, paths: usize, seed: u64) -> Result<(), CliError> {
    let model = Model::cir(0.0, 20.0, 0.2, 0.4).unwrap();
    let grid = make_grid(0.0, 0.5, 1260)?;
    let calendar = Calendar::monthly_covering(0.5)?;
    let sample = simulate_paths(&model, &[0.2], grid, paths, seed)?;
    let runs = sample
        .par_iter()
        .map(|p| run_vxx(p, &model, &calendar, 100.0))
        .collect::<Result<Vec<_>, _>>()?;
    let n = runs.len() as f64;
    let qv = runs.iter().filter(|r| realized_qv(&r.vxx) < realized_qv(&r.index)).count() as f64 / n;
    let beta_ok = runs
        .iter()
        .filter(|r| {
            let b = time_average(&r.implied_beta);
            b > 0.1 && b < 0.4
        })
        .count() as f64
        / n;
    let mut dyn_lo = f64::INFINITY;
    let mut dyn_hi = f64::NEG_INFINITY;
    let mut vxx_hi = f64::NEG_INFINITY;
    for r in &runs {
        let ri = returns(&r.index);
        let sd = ols_slope(&ri, &returns(&r.dynamic));
        dyn_lo = dyn_lo.min(sd);
        dyn_hi = dyn_hi.max(sd);
        vxx_hi = vxx_hi.max(ols_slope(&ri, &returns(&r.vxx)));
    }
    checks.push(Check::at_least("vxx_qv_below_index_fraction", qv, 1.0));
    checks.push(Check::at_least("vxx_implied_beta_in_range_fraction", beta_ok, 0.95));
    checks.push(Check::within("vxx_dynamic_slope_min", dyn_lo, 0.9, 1.1));
    checks.push(Check::within("vxx_dynamic_slope_max", dyn_hi, 0.9, 1.1));
    checks.push(Check::at_most("vxx_roll_slope_max", vxx_hi, 0.5));
    Ok(())
}

/// Runs every check.
pub fn run_checks(dt: f64, paths: usize, states: usize, seed: u64) -> Result<Vec<Check>, CliError> {
    let mut checks = Vec::new();
    identity_checks(&mut checks, dt, paths, seed)?;
    slippage_interval_checks(&mut checks, dt, paths, seed)?;
    oracle_checks(&mut checks, states, seed)?;
    weight_checks(&mut checks, states, seed)?;
    calibration_checks(&mut checks)?;
    vxx_checks(&mut checks, paths, seed)?;
    Ok(checks)
}

pub fn render_csv(checks: &[Check]) -> String {
    let mut out = String::from("check,value,tolerance,status\n");
    for c in checks {
        writeln!(out, "{},{:e},{},{}", c.name, c.value, c.tolerance, c.status.as_str()).unwrap();
    }
    out
}

pub fn run_verify(cfg: &ExperimentConfig) -> Result<String, CliError> {
    let seed = cfg.seed()?;
    let paths = cfg.paths(20)?;
    let dt = cfg.grid.as_ref().and_then(|g| g.dt).unwrap_or(1e-4);
    if !(dt > 0.0) {
        return Err(CliError::Config("[grid]: dt must be positive".into()));
    }
    let states = cfg.verify.as_ref().and_then(|v| v.states).unwrap_or(200).max(1);
    let checks = run_checks(dt, paths, states, seed)?;
    let dir = output_dir(cfg, "out/verify")?;
    std::fs::write(dir.join("verify.csv"), render_csv(&checks))?;
    write_manifest(&dir, "verify", cfg, &["verify.csv".to_string()])?;

    let mut report = String::new();
    for c in &checks {
        writeln!(report, "{:<6} {:<40} {:>12.4e}  {}", c.status.as_str(), c.name, c.value, c.tolerance).unwrap();
    }
    let failed: Vec<&str> = checks
        .iter()
        .filter(|c| c.status == Status::Fail)
        .map(|c| c.name.as_str())
        .collect();
    if failed.is_empty() {
        write!(report, "all checks passed; wrote {}", dir.display()).unwrap();
        Ok(report)
    } else {
        Err(CliError::Verification(format!("{report}failed: {}", failed.join(", "))))
    }
}
