//! Built-in configs used when `--config` is omitted; identical to the files in `configs/`.

use crate::config::ExperimentConfig;
use crate::{CliError, Kind};

pub const SIMULATE: &str = include_str!("../../../configs/simulate.toml");
pub const TRACK: &str = include_str!("../../../configs/track_bs.toml");
pub const VXX: &str = include_str!("../../../configs/vxx_month.toml");
pub const CALIBRATE: &str = include_str!("../../../configs/calibrate.toml");
pub const VERIFY: &str = include_str!("../../../configs/verify.toml");

pub fn preset(kind: Kind) -> Result<ExperimentConfig, CliError> {
    let text = match kind {
        Kind::Simulate => SIMULATE,
        Kind::Track => TRACK,
        Kind::Vxx => VXX,
        Kind::Calibrate => CALIBRATE,
        Kind::Verify => VERIFY,
    };
    toml::from_str(text).map_err(|e| CliError::Config(format!("built-in preset: {e}")))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_parse() {
        for kind in [Kind::Simulate, Kind::Track, Kind::Vxx, Kind::Calibrate, Kind::Verify] {
            let cfg = preset(kind).unwrap();
            assert!(cfg.seed.is_some(), "{kind:?}");
        }
    }
}
