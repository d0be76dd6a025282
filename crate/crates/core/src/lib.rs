//! Dynamic index tracking with derivatives under multi-factor diffusions.
//!
//! The numerical core is generic over [`Scalar`] (`f64` or `f32`); the
//! aliases at the bottom fix it to `f64` for everyday use.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod exposure;
pub mod linalg;
pub mod models;
pub mod portfolio;
pub mod pricing;
pub mod scalar;
pub mod simulate;
pub mod vxx;

pub use error::{Error, Result};
pub use exposure::{
    elasticities, elasticities_fd, null_relation_residual, null_relation_terms, solve_weights, strategy_bs_call,
    strategy_bs_futures, strategy_cir_futures, strategy_csqr_two_futures, strategy_heston_futures,
    tracking_drift, ElasticityRow, ExposureTarget, FdElasticities, WeightSolution,
};
pub use models::{
    build_model, drift_vol, drift_vol_under, DriftVol, FellerStatus, Measure, ModelConfig, ModelKind,
    ModelParams, ModelSpec, StateVector,
};
pub use pricing::{
    calibrate_cir, greeks_fd, price, price_bs_call, price_futures, CirFit, ContractKind, DerivativeSpec,
    FuturesQuote,
};
pub use portfolio::{
    benchmark_series, evolve_portfolio, evolve_with, slippage_generic, slippage_rate, slippage_series,
    verify_prop2, BenchmarkPath, EvolveOptions, PortfolioPath, WeightRule,
};
pub use scalar::Scalar;
pub use simulate::{make_grid, simulate_path, simulate_paths, SamplePath, SimOptions, TimeGrid};
pub use vxx::{evolve_vxx, implied_exposure, run_vxx, vxx_weights, RollCalendar, RollWeights, VxxRun};

pub type Model = ModelSpec<f64>;
pub type State = StateVector<f64>;
pub type Grid = TimeGrid<f64>;
pub type Path = SamplePath<f64>;
pub type Derivative = DerivativeSpec<f64>;
pub type Target = ExposureTarget<f64>;
pub type Portfolio = PortfolioPath<f64>;
pub type Calendar = RollCalendar<f64>;
