use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

const BIN: &str = env!("CARGO_BIN_EXE_bosepump");

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn bosepump(args: &[&str]) -> Output {
    Command::new(BIN).args(args).env_remove("BOSEPUMP_THREADS").output().expect("binary runs")
}

fn run_dir(out: &Output) -> PathBuf {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    PathBuf::from(String::from_utf8(out.stdout.clone()).unwrap().trim())
}

fn manifest(dir: &Path) -> serde_json::Value {
    serde_json::from_str(&fs::read_to_string(dir.join("manifest.json")).unwrap()).unwrap()
}

fn write_config(dir: &Path, text: &str) -> PathBuf {
    let p = dir.join("config.toml");
    fs::write(&p, text).unwrap();
    p
}

#[test]
fn bands_run_writes_gapped_table_and_manifest() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = configs().join("bands.toml");
    let dir = run_dir(&bosepump(&["--config", cfg.to_str().unwrap(), "--out", tmp.path().to_str().unwrap()]));
    assert!(dir.starts_with(tmp.path().join("bands")));
    let text = fs::read_to_string(dir.join("bands.csv")).unwrap();
    assert!(text.starts_with("phi,E_low,E_mid,E_high,gap_low_mid,gap_mid_high\n"));
    assert_eq!(text.lines().count(), 721);
    let m = manifest(&dir);
    assert_eq!(m["status"], "completed");
    assert_eq!(m["experiment"], "bands");
    assert!(m["results"]["min_gap"].as_f64().unwrap() > 0.0);
    assert!(m["finished"].is_string());
    let outputs: Vec<&str> = m["outputs"].as_array().unwrap().iter().map(|v| v.as_str().unwrap()).collect();
    assert_eq!(outputs, ["manifest.json", "bands.csv"]);
}

#[test]
fn forward_pump_moves_one_trimer() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = run_dir(&bosepump(&["--experiment", "fig2a", "--out", tmp.path().to_str().unwrap()]));
    let text = fs::read_to_string(dir.join("observables.csv")).unwrap();
    let header: Vec<&str> = text.lines().next().unwrap().split(',').collect();
    assert_eq!(&header[..4], ["t", "norm", "total_n", "com"]);
    assert_eq!(header.len(), 4 + 30);
    let com = |line: &str| line.split(',').nth(3).unwrap().parse::<f64>().unwrap();
    let first = com(text.lines().nth(1).unwrap());
    let last = com(text.lines().last().unwrap());
    assert!((last - first + 3.0).abs() <= 0.15, "displacement {}", last - first);
    assert!(dir.join("loop.csv").exists());
}

#[test]
fn replay_reproduces_outputs_byte_for_byte() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        "experiment = \"fig5\"\nseed = 99\n[model]\nsites = 6\n[initial]\nsite = 3\n[pump]\nomega = 0.5\ncycles = 1.0\n\
         [trajectories]\nn_traj = 6\nt1 = 40.0\n",
    );
    let out = tmp.path().join("runs");
    let first = run_dir(&bosepump(&["--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]));
    let m = first.join("manifest.json");
    let second = run_dir(&bosepump(&["--replay", m.to_str().unwrap(), "--out", out.to_str().unwrap()]));
    assert_ne!(first, second);
    for f in ["observables.csv", "loop.csv"] {
        assert_eq!(fs::read(first.join(f)).unwrap(), fs::read(second.join(f)).unwrap(), "{f}");
    }
    let (a, b) = (manifest(&first), manifest(&second));
    assert_eq!(a["config"], b["config"]);
    assert_eq!(a["results"], b["results"]);
    let header = fs::read_to_string(first.join("observables.csv")).unwrap();
    assert!(header.lines().next().unwrap().ends_with(",total_n_stderr,com_stderr"));
}

#[test]
fn seed_changes_trajectories() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        "experiment = \"fig5\"\n[model]\nsites = 6\n[initial]\nsite = 3\n[pump]\nomega = 0.5\n\
         [trajectories]\nn_traj = 6\nt1 = 5.0\n",
    );
    let out = tmp.path().join("runs");
    let a = run_dir(&bosepump(&["--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap(), "--seed", "1"]));
    let b = run_dir(&bosepump(&["--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap(), "--seed", "2"]));
    assert_ne!(fs::read(a.join("observables.csv")).unwrap(), fs::read(b.join("observables.csv")).unwrap());
    assert_eq!(manifest(&a)["seeds"]["master"], 1);
}

#[test]
fn small_experiments_complete() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().to_str().unwrap();
    let mf = run_dir(&bosepump(&["--experiment", "meanfield", "--out", out]));
    let closings: Vec<f64> = serde_json::from_str(&fs::read_to_string(mf.join("closings.json")).unwrap()).unwrap();
    assert_eq!(closings.len(), 6);
    let c = run_dir(&bosepump(&["--config", configs().join("circuit.toml").to_str().unwrap(), "--out", out]));
    let spread = manifest(&c)["results"]["omega_spread"].as_f64().unwrap();
    assert!((spread - 0.08).abs() < 1e-6);
    assert!(fs::read_to_string(c.join("tuning.csv")).unwrap().starts_with("flux,omega,J,U\n"));

    let cfg = write_config(
        tmp.path(),
        "experiment = \"fig4b\"\nseed = 3\n[model]\nsites = 12\n[initial]\nsite = 6\n[pump]\nomega = 0.2\n\
         [noise]\netas = [0.0, 1.0]\nrealizations = 2\n",
    );
    let nb = run_dir(&bosepump(&["--config", cfg.to_str().unwrap(), "--out", out]));
    let noise = fs::read_to_string(nb.join("noise.csv")).unwrap();
    assert_eq!(noise.lines().next().unwrap(), "eta,mean_dev,stderr,n_realizations");
    assert_eq!(noise.lines().count(), 3);
    let traces = fs::read_to_string(nb.join("com_traces.csv")).unwrap();
    assert_eq!(traces.lines().next().unwrap(), "t,com_eta_0,com_eta_1");

    let cfg = write_config(tmp.path(), "experiment = \"fig4a\"\n[model]\nsites = 12\n[initial]\nsite = 6\n[pump]\nomega = 0.2\n");
    let sq = run_dir(&bosepump(&["--config", cfg.to_str().unwrap(), "--out", out]));
    assert_eq!(manifest(&sq)["results"]["winding_number"], 0);
}

#[test]
fn schema_errors_exit_with_code_3() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().to_str().unwrap();
    let missing = write_config(tmp.path(), "seed = 1\n");
    let r = bosepump(&["--config", missing.to_str().unwrap(), "--out", out]);
    assert_eq!(r.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&r.stderr).contains("experiment"));
    let unknown = write_config(tmp.path(), "experiment = \"bands\"\n[model]\nsitez = 3\n");
    assert_eq!(bosepump(&["--config", unknown.to_str().unwrap(), "--out", out]).status.code(), Some(3));
    assert!(fs::read_dir(tmp.path()).unwrap().all(|e| e.unwrap().file_type().unwrap().is_file()));
}

#[test]
fn invalid_parameters_exit_with_code_4() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "experiment = \"bands\"\n[model]\nmodulation = -1.0\n");
    let r = bosepump(&["--config", cfg.to_str().unwrap(), "--out", tmp.path().to_str().unwrap()]);
    assert_eq!(r.status.code(), Some(4));
    assert!(String::from_utf8_lossy(&r.stderr).contains("model.modulation"));
}

#[test]
fn infeasible_design_exits_with_code_5_and_records_failure() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "experiment = \"circuit\"\n[circuit]\ninteraction_hz = 40.0e6\n");
    let r = bosepump(&["--config", cfg.to_str().unwrap(), "--out", tmp.path().to_str().unwrap()]);
    assert_eq!(r.status.code(), Some(5), "{}", String::from_utf8_lossy(&r.stderr));
    let runs: Vec<_> = fs::read_dir(tmp.path().join("circuit")).unwrap().collect();
    assert_eq!(runs.len(), 1);
    let m = manifest(&runs[0].as_ref().unwrap().path());
    assert_eq!(m["status"], "failed");
    assert!(m["error"].is_string());
}

#[test]
fn usage_errors_exit_with_code_2() {
    assert_eq!(bosepump(&[]).status.code(), Some(2));
    assert_eq!(bosepump(&["--experiment", "fig9"]).status.code(), Some(2));
    let r = Command::new(BIN).args(["--experiment", "bands", "--check"]).env("BOSEPUMP_THREADS", "zero").output().unwrap();
    assert_eq!(r.status.code(), Some(2));
    let r = bosepump(&["--replay", "nowhere.json", "--seed", "3"]);
    assert_eq!(r.status.code(), Some(2));
}

#[test]
fn check_reports_warnings_without_running() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "experiment = \"fig2a\"\n[model]\nsites = 31\n[pump]\nomega = 3.0\n");
    let r = bosepump(&["--config", cfg.to_str().unwrap(), "--check", "--out", tmp.path().to_str().unwrap()]);
    assert!(r.status.success());
    let err = String::from_utf8_lossy(&r.stderr);
    assert!(err.contains("warning: model.sites") && err.contains("warning: pump.omega"), "{err}");
    assert!(String::from_utf8_lossy(&r.stdout).contains("2 warning(s)"));
    assert!(!tmp.path().join("fig2a").exists());
}

#[test]
fn thread_cap_is_honoured() {
    let tmp = tempfile::tempdir().unwrap();
    let r = Command::new(BIN)
        .args(["--experiment", "meanfield", "--out", tmp.path().to_str().unwrap()])
        .env("BOSEPUMP_THREADS", "1")
        .output()
        .unwrap();
    assert!(r.status.success());
}

#[test]
fn shipped_configs_validate() {
    for entry in fs::read_dir(configs()).unwrap() {
        let path = entry.unwrap().path();
        let r = bosepump(&["--config", path.to_str().unwrap(), "--check"]);
        assert!(r.status.success(), "{}: {}", path.display(), String::from_utf8_lossy(&r.stderr));
    }
}
