//! Experiment configuration files.
//!
//! ```toml
//! seed = 7
//! paths = 100
//!
//! [model]
//! kind = "bs"
//! r = 0.05
//! sigma = 0.2
//!
//! [state]
//! s0 = 50.0
//!
//! [grid]
//! horizon = 0.5
//! dt = 1e-4
//!
//! [target]
//! betas = [-1.0, 2.0, 3.0]
//! x0 = 100.0
//!
//! [[instruments]]
//! kind = "index_futures"
//! maturity = 0.5
//! ```

use std::path::{Path, PathBuf};

use idxtrack::{build_model, DerivativeSpec, Model, ModelConfig, TimeGrid};
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: Option<u64>,
    pub paths: Option<usize>,
    pub out: Option<PathBuf>,
    /// Free-text origin of the parameter set, copied into the manifest.
    pub provenance: Option<String>,
    pub model: Option<ModelConfig>,
    pub state: Option<StateConfig>,
    pub grid: Option<GridConfig>,
    pub target: Option<TargetConfig>,
    #[serde(default)]
    pub instruments: Vec<InstrumentConfig>,
    pub vxx: Option<VxxConfig>,
    pub calibration: Option<CalibrationConfig>,
    pub verify: Option<VerifyConfig>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StateConfig {
    pub s0: f64,
    /// Initial factor levels `Y¹..Yᵈ`.
    #[serde(default)]
    pub y0: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    #[serde(default)]
    pub t0: f64,
    pub horizon: f64,
    pub dt: Option<f64>,
    pub n_steps: Option<usize>,
    /// Rebalance every this many steps.
    pub rebalance_every: Option<usize>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TargetConfig {
    pub beta: Option<f64>,
    pub betas: Option<Vec<f64>>,
    #[serde(default)]
    pub etas: Vec<f64>,
    pub x0: Option<f64>,
    /// Number of paths written out individually.
    pub path_files: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InstrumentConfig {
    IndexFutures { maturity: f64 },
    FactorFutures {
        maturity: f64,
        #[serde(default = "first_factor")]
        factor: usize,
    },
    Call { maturity: f64, strike: f64 },
}

fn first_factor() -> usize {
    1
}

impl InstrumentConfig {
    pub fn spec(&self) -> DerivativeSpec<f64> {
        match *self {
            InstrumentConfig::IndexFutures { maturity } => DerivativeSpec::index_futures(maturity),
            InstrumentConfig::FactorFutures { maturity, factor } => DerivativeSpec::factor_futures(factor, maturity),
            InstrumentConfig::Call { maturity, strike } => DerivativeSpec::call(strike, maturity),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VxxConfig {
    pub v0: Option<f64>,
    /// Explicit maturities; monthly cycles covering the horizon otherwise.
    pub maturities: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CalibrationConfig {
    /// Quote file with header `maturity_years,price`, relative to the config file.
    pub quotes_file: Option<PathBuf>,
    /// Inline quotes as `[maturity_years, price]` pairs.
    pub quotes: Option<Vec<[f64; 2]>>,
    pub spot: Option<f64>,
    /// Maturities (years) at which the fitted curve is tabulated.
    pub curve_maturities: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerifyConfig {
    /// Randomized states per model for the elasticity and null-relation checks.
    pub states: Option<usize>,
}

/// Command-line overrides applied on top of a config file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub paths: Option<usize>,
    pub dt: Option<f64>,
    pub out: Option<PathBuf>,
}

fn config_err(msg: impl Into<String>) -> CliError {
    CliError::Config(msg.into())
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| config_err(format!("cannot read {}: {e}", path.display())))?;
        let mut cfg: Self =
            toml::from_str(&text).map_err(|e| config_err(format!("{}: {e}", path.display())))?;
        if let Some(cal) = cfg.calibration.as_mut() {
            if let (Some(q), Some(dir)) = (cal.quotes_file.as_mut(), path.parent()) {
                if q.is_relative() {
                    *q = dir.join(&*q);
                }
            }
        }
        Ok(cfg)
    }

    pub fn apply(&mut self, o: &Overrides) {
        if o.seed.is_some() {
            self.seed = o.seed;
        }
        if o.paths.is_some() {
            self.paths = o.paths;
        }
        if o.out.is_some() {
            self.out = o.out.clone();
        }
        if let (Some(dt), Some(grid)) = (o.dt, self.grid.as_mut()) {
            grid.dt = Some(dt);
            grid.n_steps = None;
        }
    }

    pub fn seed(&self) -> Result<u64, CliError> {
        self.seed
            .ok_or_else(|| config_err("a seed is required (set `seed` in the config or pass --seed)"))
    }

    pub fn paths(&self, default: usize) -> Result<usize, CliError> {
        match self.paths.unwrap_or(default) {
            0 => Err(config_err("paths must be at least 1")),
            n => Ok(n),
        }
    }

    pub fn model(&self) -> Result<Model, CliError> {
        let cfg = self.model.as_ref().ok_or_else(|| config_err("missing [model] block"))?;
        build_model(cfg).map_err(|e| config_err(format!("[model]: {e}")))
    }

    pub fn initial_state(&self, model: &Model) -> Result<Vec<f64>, CliError> {
        let st = self.state.as_ref().ok_or_else(|| config_err("missing [state] block"))?;
        let mut m = vec![st.s0];
        m.extend_from_slice(&st.y0);
        if m.len() != model.dim() {
            return Err(config_err(format!(
                "[state]: {} model needs {} factor level(s) in y0, got {}",
                model.kind().name(),
                model.factors(),
                st.y0.len()
            )));
        }
        if m.iter().any(|&x| !(x > 0.0)) {
            return Err(config_err("[state]: initial levels must be positive"));
        }
        Ok(m)
    }

    pub fn grid(&self) -> Result<TimeGrid<f64>, CliError> {
        let g = self.grid.as_ref().ok_or_else(|| config_err("missing [grid] block"))?;
        let grid = match (g.n_steps, g.dt) {
            (Some(n), _) => idxtrack::make_grid(g.t0, g.t0 + g.horizon, n),
            (None, Some(dt)) => TimeGrid::with_step(g.t0, g.t0 + g.horizon, dt),
            (None, None) => return Err(config_err("[grid]: give dt or n_steps")),
        };
        grid.map_err(|e| config_err(format!("[grid]: {e}")))
    }

    pub fn rebalance_every(&self) -> usize {
        self.grid.as_ref().and_then(|g| g.rebalance_every).unwrap_or(1)
    }

    pub fn target(&self) -> Result<&TargetConfig, CliError> {
        self.target.as_ref().ok_or_else(|| config_err("missing [target] block"))
    }

    pub fn instruments(&self) -> Result<Vec<DerivativeSpec<f64>>, CliError> {
        if self.instruments.is_empty() {
            return Err(config_err("at least one [[instruments]] entry is required"));
        }
        Ok(self.instruments.iter().map(InstrumentConfig::spec).collect())
    }
}

impl TargetConfig {
    /// Exposure levels to run, from `betas` or the single `beta`.
    pub fn betas(&self) -> Result<Vec<f64>, CliError> {
        match (&self.betas, self.beta) {
            (Some(b), None) if !b.is_empty() => Ok(b.clone()),
            (None, Some(b)) => Ok(vec![b]),
            (None, None) => Err(config_err("[target]: give beta or betas")),
            _ => Err(config_err("[target]: give exactly one of beta and a non-empty betas")),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_blocks() {
        let text = r#"
            seed = 3
            [model]
            kind = "heston"
            r = 0.03
            kappa = 2.0
            theta = 0.04
            nu = 0.3
            rho = -0.7
            [state]
            s0 = 100.0
            y0 = [0.04]
            [grid]
            horizon = 0.5
            n_steps = 100
            [target]
            beta = 1.0
            etas = [0.5]
            [[instruments]]
            kind = "index_futures"
            maturity = 0.5
            [[instruments]]
            kind = "factor_futures"
            maturity = 0.75
        "#;
        let cfg: ExperimentConfig = toml::from_str(text).unwrap();
        let model = cfg.model().unwrap();
        assert_eq!(cfg.initial_state(&model).unwrap(), vec![100.0, 0.04]);
        assert_eq!(cfg.grid().unwrap().n_steps, 100);
        assert_eq!(cfg.instruments().unwrap()[1], DerivativeSpec::factor_futures(1, 0.75));
        assert_eq!(cfg.target().unwrap().betas().unwrap(), vec![1.0]);
    }

    #[test]
    fn rejects_unknown_keys_and_missing_seed() {
        assert!(toml::from_str::<ExperimentConfig>("sed = 3").is_err());
        let cfg = ExperimentConfig::default();
        assert!(matches!(cfg.seed(), Err(CliError::Config(_))));
    }

    #[test]
    fn dt_override_replaces_step_count() {
        let mut cfg = ExperimentConfig {
            grid: Some(GridConfig {
                t0: 0.0,
                horizon: 1.0,
                dt: None,
                n_steps: Some(10),
                rebalance_every: None,
            }),
            ..Default::default()
        };
        cfg.apply(&Overrides {
            dt: Some(0.01),
            ..Default::default()
        });
        assert_eq!(cfg.grid().unwrap().n_steps, 100);
    }
}
