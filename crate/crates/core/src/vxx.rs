//! Time-deterministic front/next futures roll under CIR and its diagnostics.

use std::io::{self, Write};

use crate::error::{Error, Result};
use crate::exposure::strategy_cir_futures;
use crate::models::{ModelParams, ModelSpec};
use crate::pricing::{price_futures, DerivativeSpec};
use crate::scalar::Scalar;
use crate::simulate::SamplePath;

/// Times closer than this to a maturity are taken to be on it.
pub const SNAP: f64 = 1e-9;

/// Futures maturities `T₁ < T₂ < …`, with `T₀ = 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct RollCalendar<T> {
    maturities: Vec<T>,
}

impl<T: Scalar> RollCalendar<T> {
    pub fn new(maturities: Vec<T>) -> Result<Self> {
        if maturities.len() < 2 {
            return Err(Error::InvalidArgument("a roll calendar needs at least two maturities".into()));
        }
        let mut prev = T::zero();
        for &m in &maturities {
            if !(m > prev) {
                return Err(Error::InvalidArgument(format!(
                    "maturities must be positive and strictly increasing (got {m} after {prev})"
                )));
            }
            prev = m;
        }
        Ok(Self { maturities })
    }

    /// `T_i = i/12` for `i = 1..=months`.
    pub fn monthly(months: usize) -> Result<Self> {
        Self::new((1..=months).map(|i| T::from_usize(i).unwrap() / T::lit(12.0)).collect())
    }

    /// Monthly calendar long enough to roll up to `horizon`.
    pub fn monthly_covering(horizon: T) -> Result<Self> {
        let months = (horizon * T::lit(12.0) - T::lit(SNAP)).ceil().to_usize().unwrap_or(0).max(1);
        Self::monthly(months + 1)
    }

    pub fn maturities(&self) -> &[T] {
        &self.maturities
    }

    fn maturity(&self, i: usize) -> T {
        if i == 0 {
            T::zero()
        } else {
            self.maturities[i - 1]
        }
    }

    /// Cycle index `i(t) = min{i : T_{i−1} < t ≤ T_i}`, with `t = 0` in cycle 1.
    ///
    /// The next contract `T_{i+1}` must also exist.
    pub fn cycle(&self, t: T) -> Result<usize> {
        let snap = T::lit(SNAP);
        let out = || Error::OutOfCalendar { t: t.as_f64() };
        if t < -snap {
            return Err(out());
        }
        let i = self
            .maturities
            .iter()
            .position(|&m| t <= m + snap)
            .ok_or_else(out)?
            + 1;
        if i >= self.maturities.len() {
            return Err(out());
        }
        Ok(i)
    }

    /// Last time at which the roll is defined.
    pub fn span_end(&self) -> T {
        self.maturities[self.maturities.len() - 2]
    }

    /// First maturity strictly after `t`.
    pub fn front_after(&self, t: T) -> Result<T> {
        let snap = T::lit(SNAP);
        self.maturities
            .iter()
            .copied()
            .find(|&m| m > t + snap)
            .ok_or(Error::OutOfCalendar { t: t.as_f64() })
    }
}

/// Roll weights at `t`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RollWeights<T> {
    /// Weight `u(t)` on the front contract.
    pub front: T,
    pub next: T,
    pub front_maturity: T,
    pub next_maturity: T,
}

/// `u = (T_i − t)/(T_i − T_{i−1})` on the front contract, `1 − u` on the next.
pub fn vxx_weights<T: Scalar>(t: T, calendar: &RollCalendar<T>) -> Result<RollWeights<T>> {
    let i = calendar.cycle(t)?;
    let (lo, hi) = (calendar.maturity(i - 1), calendar.maturity(i));
    let u = ((hi - t) / (hi - lo)).max(T::zero()).min(T::one());
    let u = if (hi - t).abs() <= T::lit(SNAP) { T::zero() } else { u };
    Ok(RollWeights {
        front: u,
        next: T::one() - u,
        front_maturity: hi,
        next_maturity: calendar.maturity(i + 1),
    })
}

fn cir_params<T: Scalar>(model: &ModelSpec<T>) -> Result<(T, T)> {
    match model.params {
        ModelParams::Cir { kappa, theta, .. } => Ok((kappa, theta)),
        _ => Err(Error::UnsupportedPair {
            model: model.kind().name(),
            contract: "futures roll",
        }),
    }
}

/// Futures price evaluated no later than its maturity.
fn settle<T: Scalar>(model: &ModelSpec<T>, t: T, m: &[T], maturity: T) -> Result<T> {
    price_futures(model, t.min(maturity), m, &DerivativeSpec::index_futures(maturity))
}

/// Implied `(α^V, β^V)` of the roll strategy at `(t, S)`.
pub fn implied_exposure<T: Scalar>(t: T, s: T, calendar: &RollCalendar<T>, model: &ModelSpec<T>) -> Result<(T, T)> {
    let (kappa, theta) = cir_params(model)?;
    let w = vxx_weights(t, calendar)?;
    let mut beta = T::zero();
    for (weight, maturity) in [(w.front, w.front_maturity), (w.next, w.next_maturity)] {
        if weight == T::zero() {
            continue;
        }
        let f = settle(model, t, &[s], maturity)?;
        beta = beta + weight * (-kappa * (maturity - t).max(T::zero())).exp() / f;
    }
    beta = beta * s;
    let alpha = model.r + beta * kappa * (T::one() - theta / s);
    Ok((alpha, beta))
}

/// Roll portfolio, dynamic β = 1 futures portfolio and diagnostics along one path.
#[derive(Debug, Clone, PartialEq)]
pub struct VxxRun<T> {
    pub times: Vec<T>,
    pub index: Vec<T>,
    pub vxx: Vec<T>,
    pub dynamic: Vec<T>,
    pub implied_alpha: Vec<T>,
    pub implied_beta: Vec<T>,
    /// Roll weights in force over each step.
    pub legs: Vec<RollWeights<T>>,
    /// Front maturity and futures weight of the dynamic portfolio over each step.
    pub dynamic_legs: Vec<(T, T)>,
}

/// Roll portfolio values `V` with the self-financing update
/// `V_{k+1} = V_k(1 + u Δf_i/f_i + (1−u) Δf_{i+1}/f_{i+1} + r Δt)`.
pub fn evolve_vxx<T: Scalar>(
    path: &SamplePath<T>,
    model: &ModelSpec<T>,
    calendar: &RollCalendar<T>,
    v0: T,
) -> Result<(Vec<T>, Vec<RollWeights<T>>)> {
    cir_params(model)?;
    let dt = path.grid.dt();
    let mut values = Vec::with_capacity(path.states.len());
    let mut legs = Vec::with_capacity(path.grid.n_steps);
    values.push(v0);
    for k in 0..path.grid.n_steps {
        let (a, b) = (&path.states[k], &path.states[k + 1]);
        let w = vxx_weights(a.t, calendar)?;
        let mut ret = model.r * dt;
        for (weight, maturity) in [(w.front, w.front_maturity), (w.next, w.next_maturity)] {
            if weight == T::zero() {
                continue;
            }
            let f0 = settle(model, a.t, &a.m, maturity)?;
            let f1 = settle(model, b.t, &b.m, maturity)?;
            ret = ret + weight * (f1 - f0) / f0;
        }
        let v = values[k] * (T::one() + ret);
        if !(v > T::zero()) {
            return Err(Error::BankruptPath { step: k + 1 });
        }
        values.push(v);
        legs.push(w);
    }
    Ok((values, legs))
}

/// Runs the roll, the dynamic β = 1 portfolio (front contract, CIR weight)
/// and the implied exposures along `path`, all started at `v0`.
pub fn run_vxx<T: Scalar>(path: &SamplePath<T>, model: &ModelSpec<T>, calendar: &RollCalendar<T>, v0: T) -> Result<VxxRun<T>> {
    let (vxx, legs) = evolve_vxx(path, model, calendar, v0)?;
    let dt = path.grid.dt();
    let mut dynamic = Vec::with_capacity(vxx.len());
    let mut dynamic_legs = Vec::with_capacity(legs.len());
    dynamic.push(v0);
    for k in 0..path.grid.n_steps {
        let (a, b) = (&path.states[k], &path.states[k + 1]);
        let maturity = calendar.front_after(a.t)?;
        let spec = DerivativeSpec::index_futures(maturity);
        let u = strategy_cir_futures(model, a.t, a.m[0], &spec, T::one())?;
        let f0 = settle(model, a.t, &a.m, maturity)?;
        let f1 = settle(model, b.t, &b.m, maturity)?;
        let d = dynamic[k] * (T::one() + u * (f1 - f0) / f0 + model.r * dt);
        if !(d > T::zero()) {
            return Err(Error::BankruptPath { step: k + 1 });
        }
        dynamic.push(d);
        dynamic_legs.push((maturity, u));
    }
    let mut implied_alpha = Vec::with_capacity(vxx.len());
    let mut implied_beta = Vec::with_capacity(vxx.len());
    for s in &path.states {
        let (al, be) = implied_exposure(s.t, s.m[0], calendar, model)?;
        implied_alpha.push(al);
        implied_beta.push(be);
    }
    Ok(VxxRun {
        times: path.states.iter().map(|s| s.t).collect(),
        index: path.index_series(),
        vxx,
        dynamic,
        implied_alpha,
        implied_beta,
        legs,
        dynamic_legs,
    })
}

/// Simple per-step returns `x_{k+1}/x_k − 1`.
pub fn returns<T: Scalar>(x: &[T]) -> Vec<T> {
    x.windows(2).map(|w| w[1] / w[0] - T::one()).collect()
}

/// Realized quadratic variation `Σ(Δx/x)²`.
pub fn realized_qv<T: Scalar>(x: &[T]) -> T {
    returns(x).into_iter().map(|r| r * r).sum()
}

/// Ordinary least-squares slope of `y` on `x` (with intercept).
pub fn ols_slope<T: Scalar>(x: &[T], y: &[T]) -> T {
    let n = T::from_usize(x.len()).unwrap();
    let mx = x.iter().copied().sum::<T>() / n;
    let my = y.iter().copied().sum::<T>() / n;
    let (mut sxy, mut sxx) = (T::zero(), T::zero());
    for (&a, &b) in x.iter().zip(y) {
        sxy = sxy + (a - mx) * (b - my);
        sxx = sxx + (a - mx) * (a - mx);
    }
    sxy / sxx
}

/// Centered 5-step regression of roll returns on index returns; `None`
/// where the window does not fit or spans a maturity.
pub fn local_beta<T: Scalar>(run: &VxxRun<T>) -> Vec<Option<T>> {
    let rv = returns(&run.vxx);
    let rs = returns(&run.index);
    let n = rv.len();
    (0..n)
        .map(|k| {
            if k < 2 || k + 2 >= n {
                return None;
            }
            let window = k - 2..k + 3;
            let front = run.legs[k].front_maturity;
            if run.legs[window.clone()].iter().any(|l| l.front_maturity != front) {
                return None;
            }
            Some(ols_slope(&rs[window.clone()], &rv[window]))
        })
        .collect()
}

/// Time average of a series sampled on a uniform grid (trapezoid).
pub fn time_average<T: Scalar>(x: &[T]) -> T {
    let n = x.len();
    if n < 2 {
        return x.first().copied().unwrap_or(T::zero());
    }
    let inner: T = x[1..n - 1].iter().copied().sum();
    (inner + T::lit(0.5) * (x[0] + x[n - 1])) / T::from_usize(n - 1).unwrap()
}

/// `t,vix,vxx,dynamic,implied_alpha,implied_beta`.
pub fn write_vxx_csv<T: Scalar, W: Write>(run: &VxxRun<T>, mut out: W) -> io::Result<()> {
    writeln!(out, "t,vix,vxx,dynamic,implied_alpha,implied_beta")?;
    for k in 0..run.times.len() {
        writeln!(
            out,
            "{},{},{},{},{},{}",
            run.times[k], run.index[k], run.vxx[k], run.dynamic[k], run.implied_alpha[k], run.implied_beta[k]
        )?;
    }
    Ok(())
}

/// Per-step weights: `t,front_maturity,front_weight,next_maturity,next_weight,dynamic_maturity,dynamic_weight`.
pub fn write_legs_csv<T: Scalar, W: Write>(run: &VxxRun<T>, mut out: W) -> io::Result<()> {
    writeln!(
        out,
        "t,front_maturity,front_weight,next_maturity,next_weight,dynamic_maturity,dynamic_weight"
    )?;
    for (k, (l, d)) in run.legs.iter().zip(&run.dynamic_legs).enumerate() {
        writeln!(
            out,
            "{},{},{},{},{},{},{}",
            run.times[k], l.front_maturity, l.front, l.next_maturity, l.next, d.0, d.1
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simulate::{make_grid, simulate_path, SimOptions};

    fn fig6() -> ModelSpec<f64> {
        ModelSpec::<f64>::cir(0.0, 20.0, 0.2, 0.4).unwrap()
    }

    #[test]
    fn weights_across_cycle() {
        let cal = RollCalendar::<f64>::monthly(3).unwrap();
        let w = vxx_weights(1e-7, &cal).unwrap();
        assert!(w.front > 0.999 && w.front_maturity == 1.0 / 12.0);
        assert!((vxx_weights(1.0 / 24.0, &cal).unwrap().front - 0.5).abs() < 1e-12);
        let at = vxx_weights(1.0 / 12.0, &cal).unwrap();
        assert_eq!(at.front, 0.0);
        assert_eq!(at.next_maturity, 2.0 / 12.0);
        assert_eq!(vxx_weights(0.0, &cal).unwrap().front, 1.0);
        assert!(matches!(vxx_weights(0.2, &cal), Err(Error::OutOfCalendar { .. })));
        assert!(matches!(vxx_weights(-0.1, &cal), Err(Error::OutOfCalendar { .. })));
    }

    #[test]
    fn weights_jump_only_at_maturities() {
        let cal = RollCalendar::<f64>::monthly(4).unwrap();
        let dt = 1.0 / 2520.0;
        let mut jumps = Vec::new();
        let mut prev = vxx_weights(0.0, &cal).unwrap().front;
        for k in 1..=630 {
            let t = k as f64 * dt;
            let u = vxx_weights(t, &cal).unwrap().front;
            if (u - prev).abs() > 0.05 {
                jumps.push(k);
            }
            prev = u;
        }
        assert_eq!(jumps, vec![211, 421]);
    }

    #[test]
    fn implied_exposure_at_inception() {
        let m = fig6();
        let cal = RollCalendar::monthly(3).unwrap();
        let (alpha, beta) = implied_exposure(0.0, 0.25, &cal, &m).unwrap();
        let f1 = 0.2 + 0.05 * (-20.0_f64 / 12.0).exp();
        let want = 0.25 / f1 * (-20.0_f64 / 12.0).exp();
        assert!((beta - want).abs() < 1e-14);
        assert!((alpha - want * 20.0 * (1.0 - 0.2 / 0.25)).abs() < 1e-14);
    }

    #[test]
    fn implied_beta_matches_closed_expression() {
        let m = fig6();
        let cal = RollCalendar::monthly(3).unwrap();
        let (t1, t2, k) = (1.0 / 12.0, 2.0 / 12.0, 20.0_f64);
        for &(t, s) in &[(0.01, 0.18), (0.05, 0.3), (0.08, 0.2)] {
            let f = |tt: f64| 0.2 + (s - 0.2) * (-k * (tt - t)).exp();
            let want = s / f(t1) * (-k * (t1 - t)).exp()
                - t * s * (k * t).exp() / t1 * ((-k * t1).exp() / f(t1) - (-k * t2).exp() / f(t2));
            let (_, beta) = implied_exposure(t, s, &cal, &m).unwrap();
            assert!((beta - want).abs() < 1e-13);
        }
    }

    #[test]
    fn flat_at_mean_grows_at_r() {
        let m = ModelSpec::<f64>::cir(0.03, 20.0, 0.2, 1e-12).unwrap();
        let grid = make_grid(0.0, 0.25, 630).unwrap();
        let p = simulate_path(&m, &[0.2], grid, 1, 0, SimOptions::default()).unwrap();
        let cal = RollCalendar::monthly_covering(0.25).unwrap();
        let (v, _) = evolve_vxx(&p, &m, &cal, 100.0).unwrap();
        let want = 100.0 * (1.0 + 0.03 * grid.dt()).powi(630);
        assert!((v[630] / want - 1.0).abs() < 1e-9);
        assert!((want / (100.0 * (0.03_f64 * 0.25).exp()) - 1.0).abs() < 1e-5);
    }

    #[test]
    fn first_step_is_front_return() {
        let m = fig6();
        let grid = make_grid(0.0, 1.0 / 12.0, 210).unwrap();
        let p = simulate_path(&m, &[0.2], grid, 11, 0, SimOptions::default()).unwrap();
        let cal = RollCalendar::monthly(2).unwrap();
        let (v, _) = evolve_vxx(&p, &m, &cal, 1.0).unwrap();
        let spec = DerivativeSpec::index_futures(1.0 / 12.0);
        let f0 = price_futures(&m, 0.0, &p.states[0].m, &spec).unwrap();
        let f1 = price_futures(&m, p.states[1].t, &p.states[1].m, &spec).unwrap();
        assert!((v[1] - (f1 / f0)).abs() < 1e-15);
    }

    #[test]
    fn stats_helpers() {
        assert!((ols_slope::<f64>(&[1.0, 2.0, 3.0], &[2.0, 4.1, 6.0]) - 2.0).abs() < 1e-12);
        assert!((time_average::<f64>(&[0.0, 1.0, 2.0]) - 1.0).abs() < 1e-15);
        assert!((realized_qv::<f64>(&[1.0, 1.1, 0.99]) - (0.01 + 0.01)).abs() < 1e-12);
    }
}
