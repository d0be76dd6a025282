//! Self-financing portfolios along simulated paths and the slippage process.
//!
//! Positions are held as units. At a rebalance step the wealth fractions
//! `w` are turned into units `n = wX/p`; between rebalances units stay fixed.
//! Priced contracts are paid for out of a cash account, futures cost nothing
//! and settle their price change into it. Cash accrues `r Δt` per step.

use std::io::{self, Write};

use crate::error::{Error, Result};
use crate::exposure::{elasticities, solve_weights, tracking_drift, ExposureTarget};
use crate::models::{drift_vol, ModelParams, ModelSpec};
use crate::pricing::{price, DerivativeSpec};
use crate::scalar::Scalar;
use crate::simulate::{SamplePath, TimeGrid};

/// Cash and per-leg P&L of a single step; they sum to `ΔX`.
#[derive(Debug, Clone, PartialEq)]
pub struct StepLedger<T> {
    pub cash: T,
    pub legs: Vec<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PortfolioPath<T> {
    pub grid: TimeGrid<T>,
    pub values: Vec<T>,
    /// Wealth fractions in force over step `k → k+1`.
    pub weights: Vec<Vec<T>>,
    pub units: Vec<Vec<T>>,
    pub slippage: Vec<T>,
    /// `∫₀ᵗ Z ds`, trapezoidal on the grid.
    pub integrated_slippage: Vec<T>,
    pub ledger: Vec<StepLedger<T>>,
    /// Rebalance steps whose solve came back with a warning.
    pub warnings: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchmarkPath<T> {
    pub values: Vec<T>,
}

/// Wealth fractions as a function of `(t, state)`.
pub type WeightFn<'a, T> = dyn Fn(T, &[T]) -> Result<Vec<T>> + Sync + 'a;

pub enum WeightRule<'a, T> {
    /// Solve the exposure equations from closed-form elasticities.
    Solve,
    Custom(&'a WeightFn<'a, T>),
}

pub struct EvolveOptions<'a, T> {
    /// Rebalance every this many grid steps.
    pub rebalance_every: usize,
    pub rule: WeightRule<'a, T>,
}

impl<T> Default for EvolveOptions<'_, T> {
    fn default() -> Self {
        Self {
            rebalance_every: 1,
            rule: WeightRule::Solve,
        }
    }
}

/// Evolves a portfolio rebalanced at every step to constant exposures `(β, η)`.
pub fn evolve_portfolio<T: Scalar>(
    path: &SamplePath<T>,
    model: &ModelSpec<T>,
    instruments: &[DerivativeSpec<T>],
    beta: T,
    etas: &[T],
    x0: T,
) -> Result<PortfolioPath<T>> {
    evolve_with(path, model, instruments, beta, etas, x0, &EvolveOptions::default())
}

pub fn evolve_with<T: Scalar>(
    path: &SamplePath<T>,
    model: &ModelSpec<T>,
    instruments: &[DerivativeSpec<T>],
    beta: T,
    etas: &[T],
    x0: T,
    opts: &EvolveOptions<'_, T>,
) -> Result<PortfolioPath<T>> {
    if etas.len() != model.factors() {
        return Err(Error::DimensionMismatch {
            expected: model.factors(),
            got: etas.len(),
        });
    }
    if !(x0 > T::zero()) {
        return Err(Error::NonPositiveParameter {
            name: "x0",
            value: x0.as_f64(),
        });
    }
    if opts.rebalance_every == 0 {
        return Err(Error::InvalidArgument("rebalance interval must be at least 1".into()));
    }
    let t_end = path.grid.t_end;
    if let Some(spec) = instruments.iter().find(|s| s.maturity < t_end) {
        return Err(Error::ExpiredContract {
            t: t_end.as_f64(),
            maturity: spec.maturity.as_f64(),
        });
    }

    let n = path.grid.n_steps;
    let dt = path.grid.dt();
    let r = model.r;
    let k_inst = instruments.len();
    let mut values = Vec::with_capacity(n + 1);
    let mut weights = Vec::with_capacity(n);
    let mut units_log = Vec::with_capacity(n);
    let mut ledger = Vec::with_capacity(n);
    let mut warnings = 0;
    values.push(x0);

    let prices_at = |k: usize| -> Result<Vec<T>> {
        let s = &path.states[k];
        instruments.iter().map(|spec| price(model, s.t, &s.m, spec)).collect()
    };
    let mut p_now = prices_at(0)?;
    let mut units = vec![T::zero(); k_inst];
    for k in 0..n {
        let state = &path.states[k];
        let x = values[k];
        if k % opts.rebalance_every == 0 {
            let w = match opts.rule {
                WeightRule::Solve => {
                    let rows = instruments
                        .iter()
                        .map(|spec| elasticities(model, state.t, &state.m, spec))
                        .collect::<Result<Vec<_>>>()?;
                    let target = ExposureTarget::at(model, &state.m, beta, etas.to_vec())?;
                    let sol = solve_weights(&rows, &target)?;
                    if sol.warning.is_some() {
                        warnings += 1;
                    }
                    sol.weights
                }
                WeightRule::Custom(f) => f(state.t, &state.m)?,
            };
            if w.len() != k_inst {
                return Err(Error::DimensionMismatch {
                    expected: k_inst,
                    got: w.len(),
                });
            }
            units = w.iter().zip(&p_now).map(|(&wi, &p)| wi * x / p).collect();
        }
        let held: Vec<T> = units.iter().zip(&p_now).map(|(&u, &p)| u * p / x).collect();
        let p_next = prices_at(k + 1)?;
        // priced legs are funded from cash; futures need no outlay
        let invested: T = instruments
            .iter()
            .zip(units.iter().zip(&p_now))
            .filter(|(spec, _)| !spec.is_futures())
            .map(|(_, (&u, &p))| u * p)
            .sum();
        let cash = (x - invested) * r * dt;
        let legs: Vec<T> = units
            .iter()
            .zip(p_next.iter().zip(&p_now))
            .map(|(&u, (&pn, &p))| u * (pn - p))
            .collect();
        let x_next = x + cash + legs.iter().copied().sum::<T>();
        if !(x_next > T::zero()) {
            return Err(Error::BankruptPath { step: k + 1 });
        }
        values.push(x_next);
        weights.push(held);
        units_log.push(units.clone());
        ledger.push(StepLedger { cash, legs });
        p_now = p_next;
    }

    let slippage = slippage_series(model, path, beta, etas);
    let integrated_slippage = integrate_trapezoid(&slippage, dt);
    Ok(PortfolioPath {
        grid: path.grid,
        values,
        weights,
        units: units_log,
        slippage,
        integrated_slippage,
        ledger,
        warnings,
    })
}

/// Cumulative trapezoid rule, starting at 0.
pub fn integrate_trapezoid<T: Scalar>(f: &[T], dt: T) -> Vec<T> {
    let mut out = Vec::with_capacity(f.len());
    let mut acc = T::zero();
    out.push(acc);
    for w in f.windows(2) {
        acc = acc + T::lit(0.5) * dt * (w[0] + w[1]);
        out.push(acc);
    }
    out
}

/// Slippage rate from the general expression:
/// `Z = α + ½β(1−β)|v⁰|² + ½Σηᵢ(1−ηᵢ)|vⁱ|² − βΣηᵢ v⁰·vⁱ − Σ_{i<l} ηᵢη_l vⁱ·vˡ`
/// with `vⁱ` the `i`-th volatility row divided by the state entry.
pub fn slippage_generic<T: Scalar>(model: &ModelSpec<T>, m: &[T], beta: T, etas: &[T]) -> T {
    let vol = drift_vol(model, m).vol;
    let v: Vec<Vec<T>> = vol
        .iter()
        .zip(m)
        .map(|(row, &x)| row.iter().map(|&s| s / x).collect())
        .collect();
    let dot = |a: &[T], b: &[T]| a.iter().zip(b).map(|(&p, &q)| p * q).sum::<T>();
    let half = T::lit(0.5);
    let one = T::one();
    let mut z = tracking_drift(model, m, beta, etas) + half * beta * (one - beta) * dot(&v[0], &v[0]);
    for (i, &eta) in etas.iter().enumerate() {
        let vi = &v[i + 1];
        z = z + half * eta * (one - eta) * dot(vi, vi) - beta * eta * dot(&v[0], vi);
        for (l, &eta_l) in etas.iter().enumerate().skip(i + 1) {
            z = z - eta * eta_l * dot(vi, &v[l + 1]);
        }
    }
    z
}

/// Model-specific slippage rate at a state.
pub fn slippage_rate<T: Scalar>(model: &ModelSpec<T>, m: &[T], beta: T, etas: &[T]) -> T {
    let (half, one, r) = (T::lit(0.5), T::one(), model.r);
    match model.params {
        ModelParams::Bs { sigma } => (r + beta * sigma * sigma * half) * (one - beta),
        ModelParams::Heston {
            kappa,
            theta,
            nu,
            rho,
        } => {
            let (y, eta) = (m[1], etas[0]);
            r - r * beta - kappa * (theta / y - one) * eta
                + half * beta * (one - beta) * y
                + half * eta * (one - eta) * nu * nu / y
                - beta * eta * nu * rho
        }
        ModelParams::Cir {
            kappa,
            theta,
            sigma,
        } => {
            let s = m[0];
            r - beta * kappa * (theta / s - one) + half * beta * (one - beta) * sigma * sigma / s
        }
        ModelParams::Csqr {
            gamma,
            kappa,
            theta,
            sigma,
            nu,
            rho,
        } => {
            let (s, y, eta) = (m[0], m[1], etas[0]);
            r - beta * gamma * (y / s - one) - eta * kappa * (theta / y - one)
                + half * beta * (one - beta) * sigma * sigma / s
                + half * eta * (one - eta) * nu * nu / y
                - beta * eta * nu * rho * sigma / (s * y).sqrt()
        }
    }
}

/// `Z_t` along a path for constant exposures.
pub fn slippage_series<T: Scalar>(model: &ModelSpec<T>, path: &SamplePath<T>, beta: T, etas: &[T]) -> Vec<T> {
    path.states
        .iter()
        .map(|s| slippage_rate(model, &s.m, beta, etas))
        .collect()
}

/// Value whose log-return is `β` times the index log-return plus `ηᵢ` times each factor's.
pub fn benchmark_series<T: Scalar>(path: &SamplePath<T>, beta: T, etas: &[T], x0: T) -> BenchmarkPath<T> {
    let m0 = &path.states[0].m;
    let values = path
        .states
        .iter()
        .map(|s| {
            let mut lr = beta * (s.m[0] / m0[0]).ln();
            for (i, &eta) in etas.iter().enumerate() {
                lr = lr + eta * (s.m[i + 1] / m0[i + 1]).ln();
            }
            x0 * lr.exp()
        })
        .collect();
    BenchmarkPath { values }
}

/// Worst relative gap between `X_u/X_0` and
/// `(S_u/S_0)^β Πᵢ(Yⁱ_u/Yⁱ_0)^{ηᵢ} e^{∫Z}` over the grid.
pub fn verify_prop2<T: Scalar>(portfolio: &PortfolioPath<T>, path: &SamplePath<T>, beta: T, etas: &[T]) -> T {
    let bench = benchmark_series(path, beta, etas, T::one());
    let x0 = portfolio.values[0];
    portfolio
        .values
        .iter()
        .zip(&bench.values)
        .zip(&portfolio.integrated_slippage)
        .map(|((&x, &b), &iz)| {
            let predicted = b * iz.exp();
            ((x / x0) / predicted - T::one()).abs()
        })
        .fold(T::zero(), T::max)
}

/// Per-path CSV: `t,X,benchmark,Z,intZ,w1..wN`. The last row repeats the final weights.
pub fn write_portfolio_csv<T: Scalar, W: Write>(
    portfolio: &PortfolioPath<T>,
    benchmark: &BenchmarkPath<T>,
    mut out: W,
) -> io::Result<()> {
    let n_inst = portfolio.weights.first().map_or(0, Vec::len);
    write!(out, "t,X,benchmark,Z,intZ")?;
    for j in 1..=n_inst {
        write!(out, ",w{j}")?;
    }
    writeln!(out)?;
    for k in 0..portfolio.values.len() {
        write!(
            out,
            "{},{},{},{},{}",
            portfolio.grid.time(k),
            portfolio.values[k],
            benchmark.values[k],
            portfolio.slippage[k],
            portfolio.integrated_slippage[k]
        )?;
        let w = &portfolio.weights[k.min(portfolio.weights.len().saturating_sub(1))];
        for x in w {
            write!(out, ",{x}")?;
        }
        writeln!(out)?;
    }
    Ok(())
}
