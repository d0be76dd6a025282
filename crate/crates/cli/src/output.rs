//! CSV, plot-data and manifest writers.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::config::ExperimentConfig;
use crate::CliError;

/// Named `(t, value)` series, kept in name order.
pub type SeriesMap = BTreeMap<String, Vec<(f64, f64)>>;

/// Writes `series` as long-format CSV `series,t,value`.
pub fn emit_plotdata(series: &SeriesMap, path: &Path) -> Result<(), CliError> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["series", "t", "value"])?;
    for (name, points) in series {
        for (t, v) in points {
            w.write_record([name.as_str(), &t.to_string(), &v.to_string()])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Creates `path` and hands a buffered writer to `body`.
pub fn write_with<F>(path: &Path, body: F) -> Result<(), CliError>
where
    F: FnOnce(&mut BufWriter<File>) -> std::io::Result<()>,
{
    let mut w = BufWriter::new(File::create(path)?);
    body(&mut w)?;
    w.flush()?;
    Ok(())
}

pub fn output_dir(cfg: &ExperimentConfig, default: &str) -> Result<PathBuf, CliError> {
    let dir = cfg.out.clone().unwrap_or_else(|| PathBuf::from(default));
    std::fs::create_dir_all(&dir)?;
    Ok(dir)
}

#[derive(Serialize)]
struct Manifest<'a> {
    command: &'a str,
    engine_version: &'a str,
    provenance: &'a str,
    files: &'a [String],
    config: &'a ExperimentConfig,
}

/// Writes `manifest.toml`: the command, the parameter provenance, the files
/// produced and the fully resolved config. No clock values are recorded.
pub fn write_manifest(dir: &Path, command: &str, cfg: &ExperimentConfig, files: &[String]) -> Result<(), CliError> {
    let manifest = Manifest {
        command,
        engine_version: env!("CARGO_PKG_VERSION"),
        provenance: cfg.provenance.as_deref().unwrap_or("user-supplied configuration"),
        files,
        config: cfg,
    };
    let text = toml::to_string(&manifest).map_err(|e| CliError::Config(format!("manifest: {e}")))?;
    std::fs::write(dir.join("manifest.toml"), text)?;
    Ok(())
}

/// Number rendering used in file names, e.g. `-1`, `0.5`.
pub fn tag(x: f64) -> String {
    format!("{x}")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn plotdata_rows() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("p.csv");
        let mut s = SeriesMap::new();
        s.insert("a".into(), vec![(0.0, 1.0), (0.5, 2.0), (1.0, 3.0)]);
        s.insert("b".into(), vec![(0.0, 4.0), (0.5, 5.0), (1.0, 6.0)]);
        emit_plotdata(&s, &path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 7);
        assert_eq!(lines[0], "series,t,value");
        assert_eq!(lines[4], "b,0,4");
    }

    #[test]
    fn empty_plotdata_is_header_only() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("p.csv");
        emit_plotdata(&SeriesMap::new(), &path).unwrap();
        assert_eq!(std::fs::read_to_string(&path).unwrap(), "series,t,value\n");
    }

    #[test]
    fn unwritable_path_is_io_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("missing").join("p.csv");
        let err = emit_plotdata(&SeriesMap::new(), &path).unwrap_err();
        assert!(matches!(err, CliError::Io(_)));
        assert_eq!(err.exit_code(), 1);
    }
}
