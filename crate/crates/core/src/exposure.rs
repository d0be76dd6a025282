//! Elasticities, the tracking condition and portfolio weights.
//!
//! A derivative's relative return is written as
//! `dp/p = a dt + D dS/S + Σᵢ Eⁱ dYⁱ/Yⁱ`; for priced contracts `a = C`,
//! for futures `a = F` (and `D, E` are called `G, H`).

use crate::error::{Error, Result};
use crate::linalg::solve_min_norm;
use crate::models::{drift_vol, ModelParams, ModelSpec};
use crate::pricing::{greeks_fd, price, price_and_partials, time_drift, DerivativeSpec};
use crate::scalar::{norm_cdf, Scalar};

#[derive(Debug, Clone, PartialEq)]
pub struct ElasticityRow<T> {
    /// `C` for priced contracts, `F` for futures (1/year).
    pub drift_coeff: T,
    /// `D` or `G`.
    pub index_elasticity: T,
    /// `Eⁱ` or `Hⁱ`, one per factor.
    pub factor_elasticities: Vec<T>,
    pub futures: bool,
}

impl<T: Scalar> ElasticityRow<T> {
    /// Drift in excess of financing: `C − r`, or `F` for a costless futures position.
    pub fn excess_drift(&self, r: T) -> T {
        if self.futures {
            self.drift_coeff
        } else {
            self.drift_coeff - r
        }
    }

    /// `(D, E¹, .., Eᵈ)`.
    pub fn exposures(&self) -> Vec<T> {
        let mut v = Vec::with_capacity(1 + self.factor_elasticities.len());
        v.push(self.index_elasticity);
        v.extend_from_slice(&self.factor_elasticities);
        v
    }
}

/// Closed-form elasticity row at state `m`.
pub fn elasticities<T: Scalar>(
    model: &ModelSpec<T>,
    t: T,
    m: &[T],
    spec: &DerivativeSpec<T>,
) -> Result<ElasticityRow<T>> {
    let (p, grad) = price_and_partials(model, t, m, spec)?;
    let a = time_drift(model, t, m, spec)?;
    let factors = (1..m.len()).map(|i| m[i] * grad.get(i).copied().unwrap_or(T::zero()) / p);
    Ok(ElasticityRow {
        drift_coeff: a / p,
        index_elasticity: m[0] * grad[0] / p,
        factor_elasticities: factors.collect(),
        futures: spec.is_futures(),
    })
}

/// Finite-difference row with the two pieces of its drift coefficient.
#[derive(Debug, Clone, PartialEq)]
pub struct FdElasticities<T> {
    pub row: ElasticityRow<T>,
    /// `∂ₜp/p`.
    pub time_term: T,
    /// `½tr(ΣᵀΣ∇²p)/p`.
    pub curvature_term: T,
}

/// Second differences at the rounding level of the prices are noise; report them as zero.
fn above_rounding<T: Scalar>(diff: T, prices: &[T]) -> T {
    let level: T = prices.iter().map(|p| p.abs()).sum();
    if diff.abs() <= T::lit(16.0) * T::epsilon() * level {
        T::zero()
    } else {
        diff
    }
}

/// Elasticity row from bump-and-reprice: central differences in state and
/// time, with the second-order term `½tr(ΣᵀΣ∇²p)` from a finite-difference Hessian.
pub fn elasticities_fd<T: Scalar>(
    model: &ModelSpec<T>,
    t: T,
    m: &[T],
    spec: &DerivativeSpec<T>,
    bump: T,
) -> Result<FdElasticities<T>> {
    let tau = spec.maturity - t;
    if !(tau > T::zero()) {
        return Err(Error::InvalidArgument(
            "finite-difference elasticities need time left to maturity".into(),
        ));
    }
    let p = price(model, t, m, spec)?;
    let grad = greeks_fd(model, t, m, spec, bump)?;
    let two = T::lit(2.0);
    let ht = bump * tau;
    let dpdt = (price(model, t + ht, m, spec)? - price(model, t - ht, m, spec)?) / (two * ht);

    let n = m.len();
    let h: Vec<T> = m.iter().map(|&x| bump * x).collect();
    let mut x = m.to_vec();
    let at = |x: &mut Vec<T>, moves: &[(usize, T)]| -> Result<T> {
        for &(i, d) in moves {
            x[i] = m[i] + d;
        }
        let v = price(model, t, x, spec);
        for &(i, _) in moves {
            x[i] = m[i];
        }
        v
    };
    let mut hess = vec![vec![T::zero(); n]; n];
    for i in 0..n {
        let up = at(&mut x, &[(i, h[i])])?;
        let down = at(&mut x, &[(i, -h[i])])?;
        hess[i][i] = above_rounding(up - two * p + down, &[up, p, p, down]) / (h[i] * h[i]);
        for j in 0..i {
            let pp = at(&mut x, &[(i, h[i]), (j, h[j])])?;
            let pm = at(&mut x, &[(i, h[i]), (j, -h[j])])?;
            let mp = at(&mut x, &[(i, -h[i]), (j, h[j])])?;
            let mm = at(&mut x, &[(i, -h[i]), (j, -h[j])])?;
            let v = above_rounding(pp - pm - mp + mm, &[pp, pm, mp, mm]) / (T::lit(4.0) * h[i] * h[j]);
            hess[i][j] = v;
            hess[j][i] = v;
        }
    }
    let vol = drift_vol(model, m).vol;
    let mut second = T::zero();
    for i in 0..n {
        for j in 0..n {
            let cov: T = (0..n).map(|k| vol[i][k] * vol[j][k]).sum();
            second = second + cov * hess[i][j];
        }
    }
    let curvature = T::lit(0.5) * second;
    Ok(FdElasticities {
        row: ElasticityRow {
            drift_coeff: (dpdt + curvature) / p,
            index_elasticity: m[0] * grad[0] / p,
            factor_elasticities: (1..n).map(|i| m[i] * grad[i] / p).collect(),
            futures: spec.is_futures(),
        },
        time_term: dpdt / p,
        curvature_term: curvature / p,
    })
}

/// The summands `(C−r or F), (γ̃⁰/S) D, (γ̃ⁱ/Yⁱ) Eⁱ` of the null relation.
pub fn null_relation_terms<T: Scalar>(model: &ModelSpec<T>, m: &[T], row: &ElasticityRow<T>) -> Vec<T> {
    let drift = drift_vol(model, m).drift;
    let mut terms = vec![row.excess_drift(model.r)];
    for (i, e) in row.exposures().into_iter().enumerate() {
        terms.push(drift[i] / m[i] * e);
    }
    terms
}

/// Relative residual of the null relation
/// `(C−r or F) + (γ̃⁰/S) D + Σᵢ (γ̃ⁱ/Yⁱ) Eⁱ = 0`.
pub fn null_relation_residual<T: Scalar>(model: &ModelSpec<T>, m: &[T], row: &ElasticityRow<T>) -> T {
    let terms = null_relation_terms(model, m, row);
    let sum: T = terms.iter().copied().sum();
    let scale = terms.iter().fold(T::min_positive_value(), |acc, v| acc.max(v.abs()));
    sum.abs() / scale
}

/// `α = r − (γ̃⁰/S)β − Σᵢ (γ̃ⁱ/Yⁱ)ηⁱ`.
pub fn tracking_drift<T: Scalar>(model: &ModelSpec<T>, m: &[T], beta: T, etas: &[T]) -> T {
    let drift = drift_vol(model, m).drift;
    let mut alpha = model.r - drift[0] / m[0] * beta;
    for (i, &eta) in etas.iter().enumerate() {
        alpha = alpha - drift[i + 1] / m[i + 1] * eta;
    }
    alpha
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExposureTarget<T> {
    pub beta: T,
    pub etas: Vec<T>,
    /// Portfolio drift the weights must deliver.
    pub alpha: T,
    pub r: T,
}

impl<T: Scalar> ExposureTarget<T> {
    /// Target with α set by the tracking condition at state `m`.
    pub fn at(model: &ModelSpec<T>, m: &[T], beta: T, etas: Vec<T>) -> Result<Self> {
        if etas.len() != model.factors() {
            return Err(Error::DimensionMismatch {
                expected: model.factors(),
                got: etas.len(),
            });
        }
        Ok(Self {
            alpha: tracking_drift(model, m, beta, &etas),
            beta,
            etas,
            r: model.r,
        })
    }

    /// Target with a caller-supplied drift, checked during the solve.
    pub fn with_alpha(beta: T, etas: Vec<T>, alpha: T, r: T) -> Self {
        Self { beta, etas, alpha, r }
    }

    pub fn exposures(&self) -> Vec<T> {
        let mut v = vec![self.beta];
        v.extend_from_slice(&self.etas);
        v
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WeightSolution<T> {
    /// Wealth fractions per instrument.
    pub weights: Vec<T>,
    pub condition: T,
    /// Norm of the exposure-equation residual.
    pub exposure_residual: T,
    /// `|r + Σ w·(excess drift) − α|`.
    pub drift_residual: T,
    pub warning: Option<String>,
}

/// Solves the exposure equations for the wealth fractions held in each
/// instrument and checks the drift equation.
///
/// With more instruments than exposures the minimum-norm solution is returned.
pub fn solve_weights<T: Scalar>(
    rows: &[ElasticityRow<T>],
    target: &ExposureTarget<T>,
) -> Result<WeightSolution<T>> {
    if rows.is_empty() {
        return Err(Error::InvalidArgument("no instruments".into()));
    }
    let d = target.etas.len();
    if let Some(bad) = rows.iter().find(|r| r.factor_elasticities.len() != d) {
        return Err(Error::DimensionMismatch {
            expected: d,
            got: bad.factor_elasticities.len(),
        });
    }
    let cols: Vec<Vec<T>> = rows.iter().map(|r| r.exposures()).collect();
    let a: Vec<Vec<T>> = (0..=d).map(|i| cols.iter().map(|c| c[i]).collect()).collect();
    let sol = solve_min_norm(&a, &target.exposures())?;

    let mut parts = vec![target.r, -target.alpha];
    parts.extend(rows.iter().zip(&sol.x).map(|(row, &w)| w * row.excess_drift(target.r)));
    let drift_residual = parts.iter().copied().sum::<T>().abs();
    let scale = parts.iter().fold(T::one(), |acc, v| acc.max(v.abs()));
    if drift_residual > T::lit(1e-8).max(T::lit(100.0) * T::epsilon()) * scale {
        return Err(Error::InconsistentDrift {
            residual: drift_residual.as_f64(),
        });
    }
    Ok(WeightSolution {
        weights: sol.x,
        condition: sol.condition,
        exposure_residual: sol.residual,
        drift_residual,
        warning: sol.warning,
    })
}

fn bs_sigma<T: Scalar>(model: &ModelSpec<T>, what: &'static str) -> Result<T> {
    match model.params {
        ModelParams::Bs { sigma } => Ok(sigma),
        _ => Err(Error::UnsupportedPair {
            model: model.kind().name(),
            contract: what,
        }),
    }
}

fn check_live<T: Scalar>(t: T, maturity: T) -> Result<()> {
    if t > maturity {
        return Err(Error::ExpiredContract {
            t: t.as_f64(),
            maturity: maturity.as_f64(),
        });
    }
    Ok(())
}

/// Constant slippage rate under Black–Scholes, `(r + βσ²/2)(1−β)`.
pub fn bs_slippage_rate<T: Scalar>(r: T, sigma: T, beta: T) -> T {
    (r + beta * sigma * sigma / T::lit(2.0)) * (T::one() - beta)
}

/// Units of a call held at time `t` by the constant-β strategy that
/// started at time 0 with wealth `x0` and spot `s0`.
pub fn strategy_bs_call<T: Scalar>(
    model: &ModelSpec<T>,
    t: T,
    s: T,
    x0: T,
    s0: T,
    spec: &DerivativeSpec<T>,
    beta: T,
) -> Result<T> {
    let sigma = bs_sigma(model, "european call")?;
    let crate::pricing::ContractKind::EuropeanCall { strike } = spec.kind else {
        return Err(Error::UnsupportedPair {
            model: "BS",
            contract: spec.label(),
        });
    };
    check_live(t, spec.maturity)?;
    if beta == T::zero() {
        return Ok(T::zero());
    }
    let tau = spec.maturity - t;
    let nd = if tau > T::zero() {
        norm_cdf(crate::pricing::bs_d(s, strike, model.r, sigma, tau).0)
    } else {
        return Err(Error::ExpiredContract {
            t: t.as_f64(),
            maturity: spec.maturity.as_f64(),
        });
    };
    let z = bs_slippage_rate(model.r, sigma, beta);
    Ok(beta * x0 / s0 * (s / s0).powf(beta - T::one()) * (z * t).exp() / nd)
}

/// Index futures contracts held at time `t` by the constant-β strategy
/// started at time 0 with wealth `x0` and spot `s0`.
pub fn strategy_bs_futures<T: Scalar>(
    model: &ModelSpec<T>,
    t: T,
    s: T,
    x0: T,
    s0: T,
    spec: &DerivativeSpec<T>,
    beta: T,
) -> Result<T> {
    let sigma = bs_sigma(model, "index futures")?;
    check_live(t, spec.maturity)?;
    let z = bs_slippage_rate(model.r, sigma, beta);
    let tau = spec.maturity - t;
    Ok(beta * x0 / s0 * (s / s0).powf(beta - T::one()) * (z * t - model.r * tau).exp())
}

/// CIR futures weight `u = β + (βθ̃/S)(e^{κ̃(T−t)} − 1)`.
pub fn strategy_cir_futures<T: Scalar>(
    model: &ModelSpec<T>,
    t: T,
    s: T,
    spec: &DerivativeSpec<T>,
    beta: T,
) -> Result<T> {
    let ModelParams::Cir { kappa, theta, .. } = model.params else {
        return Err(Error::UnsupportedPair {
            model: model.kind().name(),
            contract: spec.label(),
        });
    };
    check_live(t, spec.maturity)?;
    let tau = spec.maturity - t;
    Ok(beta + beta * theta / s * ((kappa * tau).exp_m1()))
}

/// Heston weights for index futures plus variance futures (maturity `t_y`):
/// `u¹ = β`, `u² = η + η(θ̃/Y)(e^{κ̃(T_y−t)} − 1)`.
pub fn strategy_heston_futures<T: Scalar>(
    model: &ModelSpec<T>,
    t: T,
    m: &[T],
    t_f: T,
    t_y: T,
    beta: T,
    eta: T,
) -> Result<[T; 2]> {
    let ModelParams::Heston { kappa, theta, .. } = model.params else {
        return Err(Error::UnsupportedPair {
            model: model.kind().name(),
            contract: "factor futures",
        });
    };
    check_live(t, t_f)?;
    check_live(t, t_y)?;
    let u2 = eta + eta * theta / m[1] * (kappa * (t_y - t)).exp_m1();
    Ok([beta, u2])
}

/// CSQR weights for two index futures with maturities `t1 < t2`.
pub fn strategy_csqr_two_futures<T: Scalar>(
    model: &ModelSpec<T>,
    t: T,
    m: &[T],
    t1: T,
    t2: T,
    beta: T,
    eta: T,
) -> Result<[T; 2]> {
    let ModelParams::Csqr { gamma, kappa, .. } = model.params else {
        return Err(Error::UnsupportedPair {
            model: model.kind().name(),
            contract: "index futures pair",
        });
    };
    let gap = t2 - t1;
    if gap.abs() <= T::lit(1e-12) * T::one().max(t2.abs()) {
        return Err(Error::DegenerateMaturities);
    }
    if gap < T::zero() {
        return Err(Error::InvalidArgument(format!(
            "maturities must be increasing, got {t1} then {t2}"
        )));
    }
    check_live(t, t1)?;
    let (s, y) = (m[0], m[1]);
    let f1 = price(model, t, m, &DerivativeSpec::index_futures(t1))?;
    let f2 = price(model, t, m, &DerivativeSpec::index_futures(t2))?;
    let (tau1, tau2) = (t1 - t, t2 - t);
    let e = |rate: T, x: T| (rate * x).exp();

    if crate::pricing::csqr_equal_speed(gamma, kappa) {
        let u1 = beta * f1 / s * e(gamma, tau1) * tau2 / gap - eta * f1 / y * e(gamma, tau1) / (gamma * gap);
        let u2 = -beta * f2 / s * e(gamma, tau2) * tau1 / gap + eta * f2 / y * e(gamma, tau2) / (gamma * gap);
        return Ok([u1, u2]);
    }
    let speed_gap = T::one() - kappa / gamma;
    let den1 = e(gamma, gap) - e(kappa, gap);
    let den2 = e(-kappa, gap) - e(-gamma, gap);
    let u1 = beta * f1 / s * (e(gamma, tau2) - e(kappa, tau2)) / den1
        - eta * f1 / y * speed_gap * e(kappa, tau2) / den1;
    let u2 = -beta * f2 / s * (e(gamma, tau1) - e(kappa, tau1)) / den2
        + eta * f2 / y * speed_gap * e(kappa, tau1) / den2;
    Ok([u1, u2])
}
