//! `simulate`, `track`, `vxx` and `calibrate`.

use std::fmt::Write as _;
use std::path::Path;

use idxtrack::portfolio::write_portfolio_csv;
use idxtrack::simulate::write_paths_csv;
use idxtrack::vxx::{ols_slope, realized_qv, returns, time_average, write_legs_csv, write_vxx_csv};
use idxtrack::{
    benchmark_series, calibrate_cir, evolve_with, price, run_vxx, simulate_paths, verify_prop2, Calendar,
    Derivative, EvolveOptions, FuturesQuote, ModelKind, Path as SamplePath, VxxRun, WeightRule,
};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::ExperimentConfig;
use crate::output::{emit_plotdata, output_dir, tag, write_manifest, write_with, SeriesMap};
use crate::CliError;

fn series(times: &[f64], values: &[f64]) -> Vec<(f64, f64)> {
    times.iter().copied().zip(values.iter().copied()).collect()
}

fn simulate_from(cfg: &ExperimentConfig, default_paths: usize) -> Result<Vec<SamplePath>, CliError> {
    let model = cfg.model()?;
    let init = cfg.initial_state(&model)?;
    let grid = cfg.grid()?;
    let n = cfg.paths(default_paths)?;
    Ok(simulate_paths(&model, &init, grid, n, cfg.seed()?)?)
}

pub fn simulate(cfg: &ExperimentConfig) -> Result<String, CliError> {
    let paths = simulate_from(cfg, 10)?;
    let dir = output_dir(cfg, "out/simulate")?;
    write_with(&dir.join("paths.csv"), |w| write_paths_csv(&paths, w))?;

    let shown = cfg.target.as_ref().and_then(|t| t.path_files).unwrap_or(5).min(paths.len());
    let mut plot = SeriesMap::new();
    for p in &paths[..shown] {
        let times = p.grid.times();
        for i in 0..p.states[0].m.len() {
            let name = if i == 0 { "S".to_string() } else { format!("Y{i}") };
            let vals: Vec<f64> = p.states.iter().map(|s| s.m[i]).collect();
            plot.insert(format!("path{}.{name}", p.path_id), series(&times, &vals));
        }
    }
    emit_plotdata(&plot, &dir.join("plotdata.csv"))?;
    let files = ["paths.csv", "plotdata.csv"].map(String::from);
    write_manifest(&dir, "simulate", cfg, &files)?;

    let truncations: usize = paths.iter().map(|p| p.truncation_events).sum();
    Ok(format!(
        "simulated {} path(s) of {} steps; truncation events {truncations}; wrote {}",
        paths.len(),
        paths[0].grid.n_steps,
        dir.display()
    ))
}

#[derive(Serialize)]
struct TrackRow {
    beta: f64,
    path_id: u64,
    final_index: f64,
    final_value: f64,
    final_benchmark: f64,
    integrated_slippage: f64,
    /// `ln(X_T/X_0) − β ln(S_T/S_0) − Σ ηᵢ ln(Yⁱ_T/Yⁱ_0)`.
    log_gap: f64,
    prop2_error: f64,
    warnings: usize,
}

pub fn track(cfg: &ExperimentConfig) -> Result<String, CliError> {
    let model = cfg.model()?;
    let instruments = cfg.instruments()?;
    let target = cfg.target()?;
    let betas = target.betas()?;
    let etas = if target.etas.is_empty() {
        vec![0.0; model.factors()]
    } else {
        target.etas.clone()
    };
    if etas.len() != model.factors() {
        return Err(CliError::Config(format!(
            "[target]: etas needs {} entries for the {} model",
            model.factors(),
            model.kind().name()
        )));
    }
    let x0 = target.x0.unwrap_or(100.0);
    let keep = target.path_files.unwrap_or(1);
    let paths = simulate_from(cfg, 1)?;
    let dir = output_dir(cfg, "out/track")?;
    let opts = EvolveOptions {
        rebalance_every: cfg.rebalance_every(),
        rule: WeightRule::Solve,
    };

    let mut files = Vec::new();
    let mut plot = SeriesMap::new();
    let times = paths[0].grid.times();
    plot.insert("index".into(), series(&times, &paths[0].index_series()));
    let mut summary = csv::Writer::from_path(dir.join("summary.csv"))?;
    let mut report = String::new();
    for &beta in &betas {
        let runs = paths
            .par_iter()
            .map(|p| evolve_with(p, &model, &instruments, beta, &etas, x0, &opts))
            .collect::<Result<Vec<_>, _>>()?;
        let (mut gap_sum, mut z_sum, mut worst) = (0.0, 0.0, 0.0_f64);
        for (k, (run, path)) in runs.iter().zip(&paths).enumerate() {
            let bench = benchmark_series(path, beta, &etas, x0);
            if k < keep {
                let name = if k == 0 {
                    format!("track_beta_{}.csv", tag(beta))
                } else {
                    format!("track_beta_{}_path{k}.csv", tag(beta))
                };
                write_with(&dir.join(&name), |w| write_portfolio_csv(run, &bench, w))?;
                files.push(name);
            }
            if k == 0 {
                plot.insert(format!("X beta={}", tag(beta)), series(&times, &run.values));
                plot.insert(format!("benchmark beta={}", tag(beta)), series(&times, &bench.values));
            }
            let last = run.values.len() - 1;
            let log_gap = (run.values[last] / x0).ln() - (bench.values[last] / x0).ln();
            let err = verify_prop2(run, path, beta, &etas);
            gap_sum += log_gap;
            z_sum += run.integrated_slippage[last];
            worst = worst.max(err);
            summary.serialize(TrackRow {
                beta,
                path_id: path.path_id,
                final_index: path.states[last].m[0],
                final_value: run.values[last],
                final_benchmark: bench.values[last],
                integrated_slippage: run.integrated_slippage[last],
                log_gap,
                prop2_error: err,
                warnings: run.warnings,
            })?;
        }
        let n = runs.len() as f64;
        writeln!(
            report,
            "beta {beta}: mean log gap {:.6e}, mean integrated slippage {:.6e}, worst identity error {worst:.3e}",
            gap_sum / n,
            z_sum / n
        )
        .unwrap();
    }
    summary.flush()?;
    files.push("summary.csv".into());
    emit_plotdata(&plot, &dir.join("plotdata.csv"))?;
    files.push("plotdata.csv".into());
    write_manifest(&dir, "track", cfg, &files)?;
    write!(report, "wrote {}", dir.display()).unwrap();
    Ok(report)
}

#[derive(Serialize)]
struct VxxRow {
    path_id: u64,
    qv_vix: f64,
    qv_vxx: f64,
    qv_dynamic: f64,
    avg_implied_beta: f64,
    slope_dynamic: f64,
    slope_vxx: f64,
    final_vix: f64,
    final_vxx: f64,
    final_dynamic: f64,
}

fn vxx_row(path_id: u64, run: &VxxRun<f64>) -> VxxRow {
    let ri = returns(&run.index);
    let last = run.times.len() - 1;
    VxxRow {
        path_id,
        qv_vix: realized_qv(&run.index),
        qv_vxx: realized_qv(&run.vxx),
        qv_dynamic: realized_qv(&run.dynamic),
        avg_implied_beta: time_average(&run.implied_beta),
        slope_dynamic: ols_slope(&ri, &returns(&run.dynamic)),
        slope_vxx: ols_slope(&ri, &returns(&run.vxx)),
        final_vix: run.index[last],
        final_vxx: run.vxx[last],
        final_dynamic: run.dynamic[last],
    }
}

pub fn vxx(cfg: &ExperimentConfig) -> Result<String, CliError> {
    let model = cfg.model()?;
    if model.kind() != ModelKind::Cir {
        return Err(CliError::Config("vxx needs a CIR [model]".into()));
    }
    let grid = cfg.grid()?;
    let vcfg = cfg.vxx.clone().unwrap_or_default();
    let calendar = match vcfg.maturities {
        Some(m) => Calendar::new(m),
        None => Calendar::monthly_covering(grid.t_end),
    }
    .map_err(|e| CliError::Config(format!("[vxx]: {e}")))?;
    if grid.t_end > calendar.span_end() {
        return Err(CliError::Config("[vxx]: maturities end before the horizon".into()));
    }
    let v0 = vcfg.v0.unwrap_or(100.0);
    let paths = simulate_from(cfg, 1)?;
    let runs = paths
        .par_iter()
        .map(|p| run_vxx(p, &model, &calendar, v0))
        .collect::<Result<Vec<_>, _>>()?;
    let dir = output_dir(cfg, "out/vxx")?;

    let first = &runs[0];
    write_with(&dir.join("vxx.csv"), |w| write_vxx_csv(first, w))?;
    write_with(&dir.join("vxx_legs.csv"), |w| write_legs_csv(first, w))?;
    let mut summary = csv::Writer::from_path(dir.join("vxx_summary.csv"))?;
    let rows: Vec<VxxRow> = runs.iter().zip(&paths).map(|(r, p)| vxx_row(p.path_id, r)).collect();
    for row in &rows {
        summary.serialize(row)?;
    }
    summary.flush()?;

    let mut plot = SeriesMap::new();
    plot.insert("vix".into(), series(&first.times, &first.index));
    plot.insert("vxx".into(), series(&first.times, &first.vxx));
    plot.insert("dynamic".into(), series(&first.times, &first.dynamic));
    plot.insert("implied_beta".into(), series(&first.times, &first.implied_beta));
    plot.insert("implied_alpha".into(), series(&first.times, &first.implied_alpha));
    let (mut front, mut next) = (Vec::new(), Vec::new());
    for (k, leg) in first.legs.iter().enumerate() {
        let (t, m) = (paths[0].states[k].t, &paths[0].states[k].m);
        front.push((t, price(&model, t, m, &Derivative::index_futures(leg.front_maturity))?));
        next.push((t, price(&model, t, m, &Derivative::index_futures(leg.next_maturity))?));
    }
    plot.insert("front_futures".into(), front);
    plot.insert("next_futures".into(), next);
    emit_plotdata(&plot, &dir.join("plotdata.csv"))?;
    let files = ["vxx.csv", "vxx_legs.csv", "vxx_summary.csv", "plotdata.csv"].map(String::from);
    write_manifest(&dir, "vxx", cfg, &files)?;

    let n = rows.len() as f64;
    let below = rows.iter().filter(|r| r.qv_vxx < r.qv_vix).count();
    Ok(format!(
        "{} path(s): QV(VXX) < QV(VIX) on {below}; mean implied beta {:.4}; mean slopes dynamic {:.4}, vxx {:.4}\nwrote {}",
        rows.len(),
        rows.iter().map(|r| r.avg_implied_beta).sum::<f64>() / n,
        rows.iter().map(|r| r.slope_dynamic).sum::<f64>() / n,
        rows.iter().map(|r| r.slope_vxx).sum::<f64>() / n,
        dir.display()
    ))
}

#[derive(Debug, Deserialize)]
struct QuoteRecord {
    maturity_years: f64,
    price: f64,
}

/// Reads a quote CSV with header `maturity_years,price`.
pub fn read_quotes(path: &Path) -> Result<Vec<FuturesQuote<f64>>, CliError> {
    let file = std::fs::File::open(path)
        .map_err(|e| CliError::Config(format!("cannot open quotes {}: {e}", path.display())))?;
    csv::Reader::from_reader(file)
        .deserialize::<QuoteRecord>()
        .map(|r| {
            let r = r.map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
            Ok(FuturesQuote {
                maturity: r.maturity_years,
                price: r.price,
            })
        })
        .collect()
}

#[derive(Serialize)]
struct CalibrationReport {
    kappa: f64,
    theta: f64,
    spot: f64,
    residual_norm: f64,
    degenerate_flat: bool,
    quotes: usize,
    shape: &'static str,
}

#[derive(Serialize)]
struct FitRow {
    maturity_years: f64,
    quote: f64,
    fitted: f64,
    residual: f64,
}

pub fn calibrate(cfg: &ExperimentConfig) -> Result<String, CliError> {
    let cal = cfg
        .calibration
        .as_ref()
        .ok_or_else(|| CliError::Config("missing [calibration] block".into()))?;
    let spot = cal
        .spot
        .ok_or_else(|| CliError::Config("[calibration]: spot is required (or pass --spot)".into()))?;
    let quotes = match (&cal.quotes_file, &cal.quotes) {
        (Some(path), _) => read_quotes(path)?,
        (None, Some(q)) => q.iter().map(|&[maturity, price]| FuturesQuote { maturity, price }).collect(),
        (None, None) => return Err(CliError::Config("[calibration]: give quotes_file or quotes".into())),
    };
    let fit = calibrate_cir(&quotes, spot)?;
    let curve_at = |tau: f64| fit.theta + (spot - fit.theta) * (-fit.kappa * tau).exp();
    let shape = if fit.degenerate_flat || spot == fit.theta {
        "flat"
    } else if spot < fit.theta {
        "increasing-concave"
    } else {
        "decreasing-convex"
    };
    let dir = output_dir(cfg, "out/calibrate")?;

    let report = CalibrationReport {
        kappa: fit.kappa,
        theta: fit.theta,
        spot,
        residual_norm: fit.residual_norm,
        degenerate_flat: fit.degenerate_flat,
        quotes: quotes.len(),
        shape,
    };
    let text = toml::to_string(&report).map_err(|e| CliError::Config(e.to_string()))?;
    std::fs::write(dir.join("calibration.toml"), text)?;

    let mut fit_csv = csv::Writer::from_path(dir.join("calibration_fit.csv"))?;
    for q in &quotes {
        let fitted = curve_at(q.maturity);
        fit_csv.serialize(FitRow {
            maturity_years: q.maturity,
            quote: q.price,
            fitted,
            residual: fitted - q.price,
        })?;
    }
    fit_csv.flush()?;

    let longest = quotes.iter().map(|q| q.maturity).fold(0.0, f64::max);
    let grid: Vec<f64> = cal
        .curve_maturities
        .clone()
        .unwrap_or_else(|| (0..=50).map(|k| 1.25 * longest * k as f64 / 50.0).collect());
    let curve: Vec<(f64, f64)> = grid.iter().map(|&tau| (tau, curve_at(tau))).collect();
    let mut curve_csv = csv::Writer::from_path(dir.join("calibration_curve.csv"))?;
    curve_csv.write_record(["maturity_years", "fitted"])?;
    for (tau, f) in &curve {
        curve_csv.write_record([tau.to_string(), f.to_string()])?;
    }
    curve_csv.flush()?;

    let mut plot = SeriesMap::new();
    plot.insert("quotes".into(), quotes.iter().map(|q| (q.maturity, q.price)).collect());
    plot.insert("fitted".into(), curve);
    emit_plotdata(&plot, &dir.join("plotdata.csv"))?;
    let files = ["calibration.toml", "calibration_fit.csv", "calibration_curve.csv", "plotdata.csv"].map(String::from);
    write_manifest(&dir, "calibrate", cfg, &files)?;
    Ok(format!(
        "kappa {:.6}, theta {:.6}, residual {:.3e}, {shape}\nwrote {}",
        fit.kappa,
        fit.theta,
        fit.residual_norm,
        dir.display()
    ))
}
