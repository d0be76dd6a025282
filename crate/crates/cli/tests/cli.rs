use std::path::Path;
use std::process::{Command, Output};

fn idxtrack(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_idxtrack"))
        .args(args)
        .current_dir(dir)
        .output()
        .expect("spawn idxtrack")
}

fn configs() -> std::path::PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p.to_string_lossy().into_owned()
}

const TRACK: &str = r#"
seed = 4
paths = 3
[model]
kind = "bs"
r = 0.05
sigma = 0.2
[state]
s0 = 50.0
[grid]
horizon = 0.25
n_steps = 200
[target]
betas = [-1.0, 2.0]
x0 = 100.0
[[instruments]]
kind = "call"
strike = 50.0
maturity = 0.5
"#;

#[test]
fn track_writes_per_beta_files_deterministically() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "t.toml", TRACK);
    for out in ["a", "b"] {
        let o = idxtrack(&["track", "--config", &cfg, "--out", out], dir.path());
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
    for f in ["track_beta_-1.csv", "track_beta_2.csv", "summary.csv", "plotdata.csv"] {
        let a = std::fs::read(dir.path().join("a").join(f)).unwrap();
        let b = std::fs::read(dir.path().join("b").join(f)).unwrap();
        assert!(!a.is_empty() && a == b, "{f}");
    }
    let summary = std::fs::read_to_string(dir.path().join("a/summary.csv")).unwrap();
    assert_eq!(summary.lines().count(), 1 + 2 * 3);
    let manifest = std::fs::read_to_string(dir.path().join("a/manifest.toml")).unwrap();
    assert!(manifest.contains("command = \"track\"") && manifest.contains("[config.model]"));
}

#[test]
fn seed_flag_changes_paths() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "t.toml", TRACK);
    idxtrack(&["track", "--config", &cfg, "--out", "a"], dir.path());
    let o = idxtrack(&["track", "--config", &cfg, "--out", "b", "--seed", "5", "--dt", "0.00125"], dir.path());
    assert!(o.status.success());
    let a = std::fs::read(dir.path().join("a/track_beta_2.csv")).unwrap();
    let b = std::fs::read(dir.path().join("b/track_beta_2.csv")).unwrap();
    assert_ne!(a, b);
}

#[test]
fn config_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let no_seed = write(dir.path(), "n.toml", &TRACK.replace("seed = 4", ""));
    assert_eq!(idxtrack(&["track", "--config", &no_seed], dir.path()).status.code(), Some(2));
    let typo = write(dir.path(), "x.toml", "seed = 1\n[modle]\nkind = \"bs\"\n");
    assert_eq!(idxtrack(&["track", "--config", &typo], dir.path()).status.code(), Some(2));
    let missing = dir.path().join("absent.toml");
    let o = idxtrack(&["simulate", "--config", missing.to_str().unwrap()], dir.path());
    assert_eq!(o.status.code(), Some(2));
    let heston_call = write(
        dir.path(),
        "h.toml",
        "seed = 1\n[model]\nkind = \"heston\"\nr = 0.0\nkappa = 2.0\ntheta = 0.04\nnu = 0.3\nrho = 0.0\n",
    );
    let o = idxtrack(&["vxx", "--config", &heston_call], dir.path());
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn numerical_errors_exit_3() {
    let dir = tempfile::tempdir().unwrap();
    let one_quote = write(dir.path(), "c.toml", "seed = 1\n[calibration]\nspot = 0.2\nquotes = [[0.1, 0.21]]\n");
    assert_eq!(idxtrack(&["calibrate", "--config", &one_quote], dir.path()).status.code(), Some(3));
    let singular = TRACK
        .replace("kind = \"bs\"\nr = 0.05\nsigma = 0.2", "kind = \"heston\"\nr = 0.0\nkappa = 2.0\ntheta = 0.04\nnu = 0.3\nrho = -0.5")
        .replace("s0 = 50.0", "s0 = 50.0\ny0 = [0.04]")
        .replace("betas = [-1.0, 2.0]", "beta = 1.0\netas = [0.5]")
        .replace("kind = \"call\"\nstrike = 50.0\nmaturity = 0.5", "kind = \"index_futures\"\nmaturity = 0.5\n[[instruments]]\nkind = \"index_futures\"\nmaturity = 1.0");
    let cfg = write(dir.path(), "s.toml", &singular);
    let o = idxtrack(&["track", "--config", &cfg], dir.path());
    assert_eq!(o.status.code(), Some(3), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(String::from_utf8_lossy(&o.stderr).contains("singular"));
}

#[test]
fn io_errors_exit_1() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "t.toml", TRACK);
    write(dir.path(), "blocker", "");
    let o = idxtrack(&["track", "--config", &cfg, "--out", "blocker/sub"], dir.path());
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn shipped_configs_run() {
    let dir = tempfile::tempdir().unwrap();
    let c = configs();
    for (cmd, file) in [
        ("simulate", "simulate.toml"),
        ("vxx", "vxx_month.toml"),
        ("calibrate", "calibrate_file.toml"),
        ("calibrate", "calibrate.toml"),
        ("track", "track_bs_call_50.toml"),
    ] {
        let path = c.join(file);
        let o = idxtrack(&[cmd, "--config", path.to_str().unwrap(), "--out", file], dir.path());
        assert!(o.status.success(), "{file}: {}", String::from_utf8_lossy(&o.stderr));
        assert!(dir.path().join(file).join("manifest.toml").exists());
    }
    let legs = std::fs::read_to_string(dir.path().join("vxx_month.toml/vxx.csv")).unwrap();
    assert!(legs.starts_with("t,vix,vxx,dynamic,implied_alpha,implied_beta\n"));
    assert_eq!(legs.lines().count(), 1 + 22);
    let fit = std::fs::read_to_string(dir.path().join("calibrate_file.toml/calibration.toml")).unwrap();
    assert!(fit.contains("shape = \"increasing-concave\""));
}

#[test]
fn presets_used_without_config() {
    let dir = tempfile::tempdir().unwrap();
    let o = idxtrack(&["calibrate", "--out", "cal"], dir.path());
    assert!(o.status.success());
    let fit = std::fs::read_to_string(dir.path().join("cal/calibration.toml")).unwrap();
    assert!(fit.contains("decreasing-convex"));
    let o = idxtrack(&["simulate", "--out", "sim", "--paths", "2"], dir.path());
    assert!(o.status.success());
    let text = std::fs::read_to_string(dir.path().join("sim/paths.csv")).unwrap();
    assert_eq!(text.lines().count(), 1 + 2 * 127);
}
