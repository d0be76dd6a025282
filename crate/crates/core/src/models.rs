//! The four diffusion models, all written as instances of
//! `dM = γ̃(M) dt + Σ(M) dB` with `M = (S, Y¹..Yᵈ)`.
//!
//! | kind   | d | factors                     |
//! |--------|---|-----------------------------|
//! | BS     | 0 | –                           |
//! | Heston | 1 | instantaneous variance `Y`  |
//! | CIR    | 0 | –                           |
//! | CSQR   | 1 | stochastic mean level `Y`   |
//!
//! Volatility matrices are lower triangular; correlation enters only
//! through the triangular factor, never through correlated raw normals.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    #[serde(alias = "bs", alias = "black-scholes")]
    Bs,
    Heston,
    Cir,
    Csqr,
}

impl ModelKind {
    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Bs => "BS",
            ModelKind::Heston => "Heston",
            ModelKind::Cir => "CIR",
            ModelKind::Csqr => "CSQR",
        }
    }

    /// Number of non-index factors.
    pub fn factors(self) -> usize {
        match self {
            ModelKind::Bs | ModelKind::Cir => 0,
            ModelKind::Heston | ModelKind::Csqr => 1,
        }
    }
}

/// Model-specific parameters, all under the pricing measure.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ModelParams<T> {
    /// `dS = rS dt + σS dB⁰`
    Bs { sigma: T },
    /// `dS = rS dt + √Y S dB⁰`, `dY = κ(θ−Y)dt + ν√Y(ρ dB⁰ + √(1−ρ²) dB¹)`
    Heston { kappa: T, theta: T, nu: T, rho: T },
    /// `dS = κ(θ−S)dt + σ√S dB⁰`
    Cir { kappa: T, theta: T, sigma: T },
    /// `dS = γ(Y−S)dt + σ√S dB⁰`, `dY = κ(θ−Y)dt + ν√Y(ρ dB⁰ + √(1−ρ²) dB¹)`
    Csqr {
        gamma: T,
        kappa: T,
        theta: T,
        sigma: T,
        nu: T,
        rho: T,
    },
}

impl<T: Scalar> ModelParams<T> {
    pub fn kind(&self) -> ModelKind {
        match self {
            ModelParams::Bs { .. } => ModelKind::Bs,
            ModelParams::Heston { .. } => ModelKind::Heston,
            ModelParams::Cir { .. } => ModelKind::Cir,
            ModelParams::Csqr { .. } => ModelKind::Csqr,
        }
    }
}

/// Outcome of the Feller check `2κθ ≥ vol²` for square-root coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FellerStatus {
    /// Model has no square-root coordinate subject to the check.
    NotApplicable,
    Holds,
    Violated,
}

/// Which measure drifts are evaluated under.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Measure {
    #[default]
    RiskNeutral,
    /// Drift shifted by `Σλ` using the stored market price of risk.
    Physical,
}

/// Validated model.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelSpec<T> {
    pub r: T,
    pub params: ModelParams<T>,
    /// Market price of risk `λ` (length d+1); only read under [`Measure::Physical`].
    pub mpr: Option<Vec<T>>,
    pub feller: FellerStatus,
}

/// Flat parameter record as it appears in config files.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub kind: Option<ModelKind>,
    pub r: Option<f64>,
    pub sigma: Option<f64>,
    pub kappa: Option<f64>,
    pub theta: Option<f64>,
    pub nu: Option<f64>,
    pub rho: Option<f64>,
    pub gamma: Option<f64>,
    /// Market price of risk, length d+1.
    pub mpr: Option<Vec<f64>>,
    /// Reject parameter sets violating the Feller condition.
    #[serde(default)]
    pub strict: bool,
}

fn req(v: Option<f64>, name: &'static str) -> Result<f64> {
    v.ok_or(Error::MissingParameter(name))
}

fn positive<T: Scalar>(v: T, name: &'static str) -> Result<T> {
    if v > T::zero() && v.is_finite() {
        Ok(v)
    } else {
        Err(Error::NonPositiveParameter {
            name,
            value: v.as_f64(),
        })
    }
}

fn correlation<T: Scalar>(rho: T) -> Result<T> {
    if rho > -T::one() && rho < T::one() {
        Ok(rho)
    } else {
        Err(Error::InvalidCorrelation(rho.as_f64()))
    }
}

/// Builds and validates a model from a config record.
pub fn build_model<T: Scalar>(config: &ModelConfig) -> Result<ModelSpec<T>> {
    let kind = config.kind.ok_or(Error::MissingParameter("kind"))?;
    let r = T::lit(req(config.r, "r")?);
    let get = |v: Option<f64>, name: &'static str| req(v, name).map(T::lit);
    let params = match kind {
        ModelKind::Bs => ModelParams::Bs {
            sigma: get(config.sigma, "sigma")?,
        },
        ModelKind::Heston => ModelParams::Heston {
            kappa: get(config.kappa, "kappa")?,
            theta: get(config.theta, "theta")?,
            nu: get(config.nu, "nu")?,
            rho: get(config.rho, "rho")?,
        },
        ModelKind::Cir => ModelParams::Cir {
            kappa: get(config.kappa, "kappa")?,
            theta: get(config.theta, "theta")?,
            // the volatility of the CIR index is accepted under either name
            sigma: get(config.sigma.or(config.nu), "sigma")?,
        },
        ModelKind::Csqr => ModelParams::Csqr {
            gamma: get(config.gamma, "gamma")?,
            kappa: get(config.kappa, "kappa")?,
            theta: get(config.theta, "theta")?,
            sigma: get(config.sigma, "sigma")?,
            nu: get(config.nu, "nu")?,
            rho: get(config.rho, "rho")?,
        },
    };
    let mpr = config
        .mpr
        .as_ref()
        .map(|v| v.iter().copied().map(T::lit).collect());
    ModelSpec::new(r, params, mpr, config.strict)
}

impl<T: Scalar> ModelSpec<T> {
    /// Validates parameters. With `strict` set, a violated Feller condition
    /// is an error; otherwise it is only recorded in [`ModelSpec::feller`].
    pub fn new(r: T, params: ModelParams<T>, mpr: Option<Vec<T>>, strict: bool) -> Result<Self> {
        if !(r >= T::zero()) {
            return Err(Error::NegativeRate(r.as_f64()));
        }
        let feller_pair = match params {
            ModelParams::Bs { sigma } => {
                positive(sigma, "sigma")?;
                None
            }
            ModelParams::Heston {
                kappa,
                theta,
                nu,
                rho,
            } => {
                positive(kappa, "kappa")?;
                positive(theta, "theta")?;
                positive(nu, "nu")?;
                correlation(rho)?;
                Some((T::lit(2.0) * kappa * theta, nu * nu))
            }
            ModelParams::Cir {
                kappa,
                theta,
                sigma,
            } => {
                positive(kappa, "kappa")?;
                positive(theta, "theta")?;
                positive(sigma, "sigma")?;
                Some((T::lit(2.0) * kappa * theta, sigma * sigma))
            }
            ModelParams::Csqr {
                gamma,
                kappa,
                theta,
                sigma,
                nu,
                rho,
            } => {
                positive(gamma, "gamma")?;
                positive(kappa, "kappa")?;
                positive(theta, "theta")?;
                positive(sigma, "sigma")?;
                positive(nu, "nu")?;
                correlation(rho)?;
                None
            }
        };
        let feller = match feller_pair {
            None => FellerStatus::NotApplicable,
            Some((lhs, rhs)) if lhs >= rhs => FellerStatus::Holds,
            Some((lhs, rhs)) => {
                if strict {
                    return Err(Error::FellerViolation {
                        lhs: lhs.as_f64(),
                        rhs: rhs.as_f64(),
                    });
                }
                FellerStatus::Violated
            }
        };
        let dim = params.kind().factors() + 1;
        if let Some(l) = &mpr {
            if l.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    got: l.len(),
                });
            }
        }
        Ok(Self {
            r,
            params,
            mpr,
            feller,
        })
    }

    pub fn bs(r: T, sigma: T) -> Result<Self> {
        Self::new(r, ModelParams::Bs { sigma }, None, false)
    }

    pub fn heston(r: T, kappa: T, theta: T, nu: T, rho: T) -> Result<Self> {
        Self::new(
            r,
            ModelParams::Heston {
                kappa,
                theta,
                nu,
                rho,
            },
            None,
            false,
        )
    }

    pub fn cir(r: T, kappa: T, theta: T, sigma: T) -> Result<Self> {
        Self::new(
            r,
            ModelParams::Cir {
                kappa,
                theta,
                sigma,
            },
            None,
            false,
        )
    }

    pub fn csqr(r: T, gamma: T, kappa: T, theta: T, sigma: T, nu: T, rho: T) -> Result<Self> {
        Self::new(
            r,
            ModelParams::Csqr {
                gamma,
                kappa,
                theta,
                sigma,
                nu,
                rho,
            },
            None,
            false,
        )
    }

    pub fn kind(&self) -> ModelKind {
        self.params.kind()
    }

    /// Factor count d.
    pub fn factors(&self) -> usize {
        self.kind().factors()
    }

    /// State dimension d+1.
    pub fn dim(&self) -> usize {
        self.factors() + 1
    }
}

/// Point `(t, S, Y¹..Yᵈ)` in time and state space.
#[derive(Debug, Clone, PartialEq)]
pub struct StateVector<T> {
    pub t: T,
    pub m: Vec<T>,
}

impl<T: Scalar> StateVector<T> {
    pub fn new(t: T, m: Vec<T>) -> Self {
        Self { t, m }
    }

    /// Builds a state and checks every coordinate is strictly positive.
    pub fn checked(t: T, m: Vec<T>) -> Result<Self> {
        let s = Self { t, m };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if self.m.iter().all(|&x| x > T::zero() && x.is_finite()) {
            Ok(())
        } else {
            Err(Error::NonPositiveState)
        }
    }

    /// Index level S.
    #[inline]
    pub fn index(&self) -> T {
        self.m[0]
    }

    /// Factor `Yⁱ`, 1-based as in `(S, Y¹, .., Yᵈ)`.
    #[inline]
    pub fn factor(&self, i: usize) -> T {
        self.m[i]
    }
}

/// Drift vector and lower-triangular volatility matrix at a state.
#[derive(Debug, Clone, PartialEq)]
pub struct DriftVol<T> {
    pub drift: Vec<T>,
    /// Row-major `(d+1)×(d+1)`, `vol[i][j] = σ^{(i,j)}`.
    pub vol: Vec<Vec<T>>,
}

/// Evaluates `γ̃(M)` and `Σ(M)` under the pricing measure.
///
/// Square roots use the positive part of their argument, so the same
/// evaluator serves the full-truncation scheme in [`crate::simulate`].
pub fn drift_vol<T: Scalar>(model: &ModelSpec<T>, m: &[T]) -> DriftVol<T> {
    let zero = T::zero();
    let sqrt_pos = |x: T| x.max(zero).sqrt();
    let r = model.r;
    match model.params {
        ModelParams::Bs { sigma } => {
            let s = m[0];
            DriftVol {
                drift: vec![r * s],
                vol: vec![vec![sigma * s]],
            }
        }
        ModelParams::Heston {
            kappa,
            theta,
            nu,
            rho,
        } => {
            let (s, y) = (m[0], m[1]);
            let sy = sqrt_pos(y);
            let rho_c = (T::one() - rho * rho).sqrt();
            DriftVol {
                drift: vec![r * s, kappa * (theta - y.max(zero))],
                vol: vec![vec![sy * s, zero], vec![nu * rho * sy, nu * rho_c * sy]],
            }
        }
        ModelParams::Cir {
            kappa,
            theta,
            sigma,
        } => {
            let s = m[0];
            DriftVol {
                drift: vec![kappa * (theta - s.max(zero))],
                vol: vec![vec![sigma * sqrt_pos(s)]],
            }
        }
        ModelParams::Csqr {
            gamma,
            kappa,
            theta,
            sigma,
            nu,
            rho,
        } => {
            let (s, y) = (m[0], m[1]);
            let sy = sqrt_pos(y);
            let rho_c = (T::one() - rho * rho).sqrt();
            DriftVol {
                drift: vec![
                    gamma * (y.max(zero) - s.max(zero)),
                    kappa * (theta - y.max(zero)),
                ],
                vol: vec![
                    vec![sigma * sqrt_pos(s), zero],
                    vec![nu * rho * sy, nu * rho_c * sy],
                ],
            }
        }
    }
}

/// [`drift_vol`] with an optional shift to the physical measure:
/// `γ = γ̃ + Σλ`.
pub fn drift_vol_under<T: Scalar>(model: &ModelSpec<T>, m: &[T], measure: Measure) -> DriftVol<T> {
    let mut dv = drift_vol(model, m);
    if let (Measure::Physical, Some(lambda)) = (measure, model.mpr.as_ref()) {
        for (i, row) in dv.vol.iter().enumerate() {
            let shift: T = row.iter().zip(lambda).map(|(&s, &l)| s * l).sum();
            dv.drift[i] = dv.drift[i] + shift;
        }
    }
    dv
}
