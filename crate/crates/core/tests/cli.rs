use std::path::Path;
use std::process::Command;

use isac_core::experiments::ExperimentConfig;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_isac-sim"))
}

fn small_config(dir: &Path) -> std::path::PathBuf {
    let path = dir.join("small.toml");
    std::fs::write(
        &path,
        "[array]\ncu_x = 8\nwsa_x = 4\nut_x = 4\n[channel]\ntaps = 16\nscatter_clusters = 2\nscatter_paths = 3\ntargets = 2\ntarget_paths = 3\n\
         [waveform]\npilot_len = 60\n[recovery]\niterations = 10\n",
    )
    .unwrap();
    path
}

#[test]
fn shipped_config_equals_defaults() {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/default.toml");
    let cfg = ExperimentConfig::from_file(&path).unwrap();
    assert_eq!(cfg, ExperimentConfig::default());
}

#[test]
fn run_writes_records_and_debug_dumps() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let out = dir.path().join("out");
    let status = bin()
        .args(["run", "--preset", "fig9", "--trials", "2", "--seed", "4", "--trace", "--dump-measurement-matrix", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(&out)
        .status()
        .unwrap();
    assert!(status.success());
    let main = std::fs::read_to_string(out.join("fig9.csv")).unwrap();
    assert!(main.starts_with("experiment,sweep_name,sweep_value,metric,mean,std,trials,seed\n"));
    assert!(main.lines().skip(1).all(|l| l.starts_with("fig9,pdl_dbm,") && l.ends_with(",2,4")));
    let trace = std::fs::read_to_string(out.join("fig9_trace.csv")).unwrap();
    assert!(trace.starts_with("iteration,atom,residual_norm\n"));
    let phi = std::fs::read_to_string(out.join("fig9_phi.csv")).unwrap();
    assert!(phi.starts_with("row,col,re,im\n"));
}

#[test]
fn unknown_preset_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = bin().args(["run", "--preset", "fig99", "--out"]).arg(dir.path()).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("fig99"));
}

#[test]
fn bad_config_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    std::fs::write(&cfg, "[array]\nwsa_spacing = -1.0\n").unwrap();
    let out = bin().args(["run", "--preset", "fig6", "--config"]).arg(&cfg).arg("--out").arg(dir.path()).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    std::fs::write(&cfg, "[array]\nnot_a_key = 1\n").unwrap();
    let out = bin().args(["run", "--preset", "fig6", "--config"]).arg(&cfg).arg("--out").arg(dir.path()).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
}
