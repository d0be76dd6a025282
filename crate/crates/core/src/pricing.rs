//! Closed-form prices and state partials for the supported contracts.
//!
//! Futures prices are affine in the state for every model here, so the
//! partials are exact constants in `(S, Y)` for fixed time to maturity.

use crate::error::{Error, Result};
use crate::models::{ModelParams, ModelSpec};
use crate::scalar::{norm_cdf, Scalar};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ContractKind<T> {
    /// Futures settling on the index S.
    FuturesOnIndex,
    /// Futures settling on factor `Yⁱ` (1-based).
    FuturesOnFactor(usize),
    EuropeanCall { strike: T },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DerivativeSpec<T> {
    pub kind: ContractKind<T>,
    pub maturity: T,
}

impl<T: Scalar> DerivativeSpec<T> {
    pub fn index_futures(maturity: T) -> Self {
        Self {
            kind: ContractKind::FuturesOnIndex,
            maturity,
        }
    }

    pub fn factor_futures(factor: usize, maturity: T) -> Self {
        Self {
            kind: ContractKind::FuturesOnFactor(factor),
            maturity,
        }
    }

    pub fn call(strike: T, maturity: T) -> Self {
        Self {
            kind: ContractKind::EuropeanCall { strike },
            maturity,
        }
    }

    /// Futures are marked to market and cost nothing to enter.
    pub fn is_futures(&self) -> bool {
        !matches!(self.kind, ContractKind::EuropeanCall { .. })
    }

    pub fn label(&self) -> &'static str {
        match self.kind {
            ContractKind::FuturesOnIndex => "index futures",
            ContractKind::FuturesOnFactor(_) => "factor futures",
            ContractKind::EuropeanCall { .. } => "european call",
        }
    }

    fn time_to_maturity(&self, t: T) -> Result<T> {
        let tau = self.maturity - t;
        // allow rounding noise from grid arithmetic
        let tol = T::lit(1e-12) * T::one().max(self.maturity.abs());
        if tau < -tol {
            return Err(Error::ExpiredContract {
                t: t.as_f64(),
                maturity: self.maturity.as_f64(),
            });
        }
        Ok(tau.max(T::zero()))
    }
}

/// Observed futures price for one maturity (in years from now).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FuturesQuote<T> {
    pub maturity: T,
    pub price: T,
}

fn unsupported<T: Scalar>(model: &ModelSpec<T>, spec: &DerivativeSpec<T>) -> Error {
    Error::UnsupportedPair {
        model: model.kind().name(),
        contract: spec.label(),
    }
}

/// Whether the CSQR speeds are close enough to use the equal-speed form.
pub fn csqr_equal_speed<T: Scalar>(gamma: T, kappa: T) -> bool {
    let tol = T::lit(1e-8).max(T::epsilon() * T::lit(1e4));
    (gamma - kappa).abs() < tol * gamma.max(kappa)
}

/// Loading of the CSQR index futures on the stochastic mean, `∂f/∂Y`.
pub fn csqr_mean_loading<T: Scalar>(gamma: T, kappa: T, tau: T) -> T {
    if csqr_equal_speed(gamma, kappa) {
        // exact at gamma == kappa; midpoint speed keeps the near-equal error second order
        let mid = T::lit(0.5) * (gamma + kappa);
        gamma * tau * (-mid * tau).exp()
    } else {
        gamma / (gamma - kappa) * ((-kappa * tau).exp() - (-gamma * tau).exp())
    }
}

/// Black–Scholes d₊ and d₋.
pub fn bs_d<T: Scalar>(s: T, strike: T, r: T, sigma: T, tau: T) -> (T, T) {
    let sd = sigma * tau.sqrt();
    let dp = ((s / strike).ln() + (r + T::lit(0.5) * sigma * sigma) * tau) / sd;
    (dp, dp - sd)
}

/// European call under Black–Scholes, `S N(d₊) − K e^{−rτ} N(d₋)`.
pub fn price_bs_call<T: Scalar>(
    model: &ModelSpec<T>,
    t: T,
    s: T,
    spec: &DerivativeSpec<T>,
) -> Result<T> {
    bs_call_with_delta(model, t, s, spec).map(|(p, _)| p)
}

fn bs_call_with_delta<T: Scalar>(
    model: &ModelSpec<T>,
    t: T,
    s: T,
    spec: &DerivativeSpec<T>,
) -> Result<(T, T)> {
    let (ModelParams::Bs { sigma }, ContractKind::EuropeanCall { strike }) =
        (model.params, spec.kind)
    else {
        return Err(unsupported(model, spec));
    };
    if !(strike > T::zero()) {
        return Err(Error::NonPositiveParameter {
            name: "strike",
            value: strike.as_f64(),
        });
    }
    let tau = spec.time_to_maturity(t)?;
    if tau == T::zero() {
        let itm = s > strike;
        let payoff = (s - strike).max(T::zero());
        return Ok((payoff, if itm { T::one() } else { T::zero() }));
    }
    let (dp, dm) = bs_d(s, strike, model.r, sigma, tau);
    let nd = norm_cdf(dp);
    let price = s * nd - strike * (-model.r * tau).exp() * norm_cdf(dm);
    Ok((price, nd))
}

/// Futures price `E^Q[leg at maturity | state]`.
pub fn price_futures<T: Scalar>(
    model: &ModelSpec<T>,
    t: T,
    m: &[T],
    spec: &DerivativeSpec<T>,
) -> Result<T> {
    futures_with_partials(model, t, m, spec).map(|(p, _)| p)
}

fn futures_with_partials<T: Scalar>(
    model: &ModelSpec<T>,
    t: T,
    m: &[T],
    spec: &DerivativeSpec<T>,
) -> Result<(T, Vec<T>)> {
    let tau = spec.time_to_maturity(t)?;
    let zero = T::zero();
    let s = m[0];
    let mean_revert = |x: T, kappa: T, theta: T| {
        let e = (-kappa * tau).exp();
        (theta + (x - theta) * e, e)
    };
    match (model.params, spec.kind) {
        (ModelParams::Bs { .. }, ContractKind::FuturesOnIndex) => {
            let g = (model.r * tau).exp();
            Ok((s * g, vec![g]))
        }
        (ModelParams::Heston { .. }, ContractKind::FuturesOnIndex) => {
            let g = (model.r * tau).exp();
            Ok((s * g, vec![g, zero]))
        }
        (ModelParams::Heston { kappa, theta, .. }, ContractKind::FuturesOnFactor(1))
        | (ModelParams::Csqr { kappa, theta, .. }, ContractKind::FuturesOnFactor(1)) => {
            let (g, e) = mean_revert(m[1], kappa, theta);
            Ok((g, vec![zero, e]))
        }
        (ModelParams::Cir { kappa, theta, .. }, ContractKind::FuturesOnIndex) => {
            let (f, e) = mean_revert(s, kappa, theta);
            Ok((f, vec![e]))
        }
        (
            ModelParams::Csqr {
                gamma,
                kappa,
                theta,
                ..
            },
            ContractKind::FuturesOnIndex,
        ) => {
            let (base, e) = mean_revert(s, gamma, theta);
            let load = csqr_mean_loading(gamma, kappa, tau);
            Ok((base + (m[1] - theta) * load, vec![e, load]))
        }
        _ => Err(unsupported(model, spec)),
    }
}

/// Price and analytic partials `(∂/∂S, ∂/∂Y¹, ..)`.
pub fn price_and_partials<T: Scalar>(
    model: &ModelSpec<T>,
    t: T,
    m: &[T],
    spec: &DerivativeSpec<T>,
) -> Result<(T, Vec<T>)> {
    if m.len() != model.dim() {
        return Err(Error::DimensionMismatch {
            expected: model.dim(),
            got: m.len(),
        });
    }
    match spec.kind {
        ContractKind::EuropeanCall { .. } => {
            bs_call_with_delta(model, t, m[0], spec).map(|(p, d)| (p, vec![d]))
        }
        _ => futures_with_partials(model, t, m, spec),
    }
}

/// Price of any supported contract.
pub fn price<T: Scalar>(model: &ModelSpec<T>, t: T, m: &[T], spec: &DerivativeSpec<T>) -> Result<T> {
    price_and_partials(model, t, m, spec).map(|(p, _)| p)
}

/// Time drift of the price net of state-drift terms, `∂ₜp + ½tr(ΣᵀΣ ∇²p)`.
///
/// Dividing by the price gives the `dt` coefficient of `dp/p` when the
/// return is written against `dS/S` and `dY/Y`.
pub fn time_drift<T: Scalar>(model: &ModelSpec<T>, t: T, m: &[T], spec: &DerivativeSpec<T>) -> Result<T> {
    if m.len() != model.dim() {
        return Err(Error::DimensionMismatch {
            expected: model.dim(),
            got: m.len(),
        });
    }
    let tau = spec.time_to_maturity(t)?;
    let s = m[0];
    match (model.params, spec.kind) {
        (ModelParams::Bs { sigma }, ContractKind::EuropeanCall { strike }) => {
            // theta plus the gamma term collapses to the discounted strike leg
            let r = model.r;
            if tau == T::zero() {
                let itm = if s > strike { T::one() } else { T::zero() };
                return Ok(-r * strike * itm);
            }
            let (_, dm) = bs_d(s, strike, r, sigma, tau);
            Ok(-r * strike * (-r * tau).exp() * norm_cdf(dm))
        }
        (ModelParams::Bs { .. }, ContractKind::FuturesOnIndex)
        | (ModelParams::Heston { .. }, ContractKind::FuturesOnIndex) => {
            Ok(-model.r * s * (model.r * tau).exp())
        }
        (ModelParams::Heston { kappa, theta, .. }, ContractKind::FuturesOnFactor(1))
        | (ModelParams::Csqr { kappa, theta, .. }, ContractKind::FuturesOnFactor(1)) => {
            Ok(kappa * (m[1] - theta) * (-kappa * tau).exp())
        }
        (ModelParams::Cir { kappa, theta, .. }, ContractKind::FuturesOnIndex) => {
            Ok(kappa * (s - theta) * (-kappa * tau).exp())
        }
        (
            ModelParams::Csqr {
                gamma,
                kappa,
                theta,
                ..
            },
            ContractKind::FuturesOnIndex,
        ) => {
            let load_rate = if csqr_equal_speed(gamma, kappa) {
                let mid = T::lit(0.5) * (gamma + kappa);
                gamma * (-mid * tau).exp() * (T::one() - mid * tau)
            } else {
                gamma / (gamma - kappa) * (gamma * (-gamma * tau).exp() - kappa * (-kappa * tau).exp())
            };
            Ok(gamma * (s - theta) * (-gamma * tau).exp() - (m[1] - theta) * load_rate)
        }
        _ => Err(unsupported(model, spec)),
    }
}

/// Central bump-and-reprice partials with relative bump `bump`.
pub fn greeks_fd<T: Scalar>(
    model: &ModelSpec<T>,
    t: T,
    m: &[T],
    spec: &DerivativeSpec<T>,
    bump: T,
) -> Result<Vec<T>> {
    if !(bump > T::zero() && bump <= T::lit(1e-2)) {
        return Err(Error::InvalidArgument(format!(
            "bump must lie in (0, 1e-2], got {bump}"
        )));
    }
    let mut out = Vec::with_capacity(m.len());
    let mut x = m.to_vec();
    for i in 0..m.len() {
        let h = bump * m[i];
        x[i] = m[i] + h;
        let up = price(model, t, &x, spec)?;
        x[i] = m[i] - h;
        let down = price(model, t, &x, spec)?;
        x[i] = m[i];
        out.push((up - down) / (T::lit(2.0) * h));
    }
    Ok(out)
}

/// CIR futures term structure `θ + (S−θ)e^{−κτ}` at the given maturities.
pub fn cir_term_structure<T: Scalar>(kappa: T, theta: T, s: T, maturities: &[T]) -> Vec<T> {
    maturities
        .iter()
        .map(|&tau| theta + (s - theta) * (-kappa * tau).exp())
        .collect()
}

/// Least-squares CIR fit to a futures curve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CirFit<T> {
    pub kappa: T,
    pub theta: T,
    /// Euclidean norm of the price residuals.
    pub residual_norm: T,
    /// Every quote equals spot: θ = spot, κ is not identified.
    pub degenerate_flat: bool,
}

const KAPPA_STARTS: [f64; 4] = [1.0, 5.0, 20.0, 50.0];

/// Fits `(κ, θ)` of the CIR futures curve to quotes, with spot `s_now`.
///
/// Levenberg–Marquardt in `(ln κ, ln θ)` from each of the starts
/// κ ∈ {1, 5, 20, 50}; the best objective wins.
pub fn calibrate_cir<T: Scalar>(quotes: &[FuturesQuote<T>], s_now: T) -> Result<CirFit<T>> {
    if !(s_now > T::zero()) {
        return Err(Error::NonPositiveParameter {
            name: "spot",
            value: s_now.as_f64(),
        });
    }
    if quotes.len() < 2 {
        return Err(Error::InsufficientQuotes);
    }
    let first = quotes[0].maturity;
    if quotes.iter().all(|q| q.maturity == first) {
        return Err(Error::InsufficientQuotes);
    }
    for q in quotes {
        if !(q.price > T::zero()) || !(q.maturity >= T::zero()) {
            return Err(Error::InvalidArgument(format!(
                "quote ({}, {}) must have positive price and non-negative maturity",
                q.maturity, q.price
            )));
        }
    }
    let flat_tol = T::lit(1e-12) * s_now;
    if quotes.iter().all(|q| (q.price - s_now).abs() <= flat_tol) {
        return Ok(CirFit {
            kappa: T::lit(KAPPA_STARTS[0]),
            theta: s_now,
            residual_norm: T::zero(),
            degenerate_flat: true,
        });
    }

    let objective = |kappa: T, theta: T| -> T {
        quotes
            .iter()
            .map(|q| {
                let e = (-kappa * q.maturity).exp();
                let d = theta + (s_now - theta) * e - q.price;
                d * d
            })
            .sum()
    };
    // θ minimizing the objective for fixed κ (the model is linear in θ)
    let profile_theta = |kappa: T| -> T {
        let (mut num, mut den) = (T::zero(), T::zero());
        for q in quotes {
            let e = (-kappa * q.maturity).exp();
            let a = T::one() - e;
            num = num + a * (q.price - s_now * e);
            den = den + a * a;
        }
        num / den
    };

    let mut best: Option<(T, T, T)> = None;
    for &k0 in &KAPPA_STARTS {
        let k0 = T::lit(k0);
        let mut th0 = profile_theta(k0);
        if !(th0 > T::zero()) || !th0.is_finite() {
            th0 = quotes.iter().map(|q| q.price).sum::<T>() / T::from_usize(quotes.len()).unwrap();
        }
        if let Some((k, th)) = levenberg_marquardt(quotes, s_now, k0, th0) {
            let obj = objective(k, th);
            if obj.is_finite() && best.is_none_or(|(_, _, b)| obj < b) {
                best = Some((k, th, obj));
            }
        }
    }
    match best {
        Some((kappa, theta, obj)) if kappa > T::zero() && theta > T::zero() => Ok(CirFit {
            kappa,
            theta,
            residual_norm: obj.sqrt(),
            degenerate_flat: false,
        }),
        _ => Err(Error::FitDiverged),
    }
}

fn levenberg_marquardt<T: Scalar>(
    quotes: &[FuturesQuote<T>],
    s: T,
    kappa0: T,
    theta0: T,
) -> Option<(T, T)> {
    let (mut a, mut b) = (kappa0.ln(), theta0.ln());
    let eval = |a: T, b: T| -> T {
        let (k, th) = (a.exp(), b.exp());
        quotes
            .iter()
            .map(|q| {
                let e = (-k * q.maturity).exp();
                let d = th + (s - th) * e - q.price;
                d * d
            })
            .sum()
    };
    let mut lambda = T::lit(1e-3);
    let mut obj = eval(a, b);
    for _ in 0..500 {
        let (k, th) = (a.exp(), b.exp());
        let (mut jtj00, mut jtj01, mut jtj11) = (T::zero(), T::zero(), T::zero());
        let (mut g0, mut g1) = (T::zero(), T::zero());
        for q in quotes {
            let e = (-k * q.maturity).exp();
            let res = th + (s - th) * e - q.price;
            let da = -q.maturity * (s - th) * e * k;
            let db = (T::one() - e) * th;
            jtj00 = jtj00 + da * da;
            jtj01 = jtj01 + da * db;
            jtj11 = jtj11 + db * db;
            g0 = g0 + da * res;
            g1 = g1 + db * res;
        }
        if g0.abs().max(g1.abs()) <= T::epsilon() * T::epsilon() {
            break;
        }
        let mut improved = false;
        for _ in 0..60 {
            let m00 = jtj00 * (T::one() + lambda) + T::min_positive_value();
            let m11 = jtj11 * (T::one() + lambda) + T::min_positive_value();
            let det = m00 * m11 - jtj01 * jtj01;
            if !(det.abs() > T::zero()) {
                lambda = lambda * T::lit(10.0);
                continue;
            }
            let da = -(m11 * g0 - jtj01 * g1) / det;
            let db = -(m00 * g1 - jtj01 * g0) / det;
            let (na, nb) = (a + da, b + db);
            let nobj = eval(na, nb);
            if nobj.is_finite() && nobj <= obj {
                let small = da.abs().max(db.abs()) < T::epsilon() * T::lit(4.0);
                a = na;
                b = nb;
                obj = nobj;
                lambda = (lambda * T::lit(0.3)).max(T::lit(1e-15));
                improved = !small;
                break;
            }
            lambda = lambda * T::lit(10.0);
        }
        if !improved {
            break;
        }
    }
    let (k, th) = (a.exp(), b.exp());
    (k.is_finite() && th.is_finite()).then_some((k, th))
}
