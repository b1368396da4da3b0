use std::fs;
use std::path::Path;
use std::process::Command;

const BIN: &str = env!("CARGO_BIN_EXE_vanet-sec");

fn write_config(dir: &Path) -> std::path::PathBuf {
    let p = dir.join("exp.cfg");
    fs::write(&p, "lanes = 4\nscheme = Hybrid\nalpha = 5\nwarmup_s = 1\nsteady_state_s = 2\nemergency = false\nplatoon_size = 20\n").unwrap();
    p
}

#[test]
fn validate_prints_provenance() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path());
    let out = Command::new(BIN).args(["validate", "--config"]).arg(&cfg).args(["--override", "alpha=10"]).output().unwrap();
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("alpha = 10  # override"), "{text}");
    assert!(text.contains("lanes = 4  # user"));
    assert!(text.contains("tau_s = 60  # default"));
    assert!(text.contains("tx_power_dbm (calibrated)"));
}

#[test]
fn bad_input_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path());
    let bad_key = Command::new(BIN).args(["validate", "--config"]).arg(&cfg).args(["--override", "nope=1"]).output().unwrap().status;
    assert_eq!(bad_key.code(), Some(2));
    let bad_value = Command::new(BIN).args(["run", "--validate", "--config"]).arg(&cfg).args(["--sweep", "alpha=1,0"]).output().unwrap().status;
    assert_eq!(bad_value.code(), Some(2));
    let missing = Command::new(BIN).args(["validate", "--config"]).arg(dir.path().join("absent.cfg")).output().unwrap().status;
    assert_eq!(missing.code(), Some(3));
}

#[test]
fn run_writes_csvs_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path());
    let out_dir = dir.path().join("out");
    let status = Command::new(BIN)
        .args(["run", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(&out_dir)
        .args(["--seed", "4", "--replications", "2", "--sweep", "alpha=1,5", "--workers", "2"])
        .output()
        .unwrap()
        .status;
    assert!(status.success());
    let pdr = fs::read_to_string(out_dir.join("pdr.csv")).unwrap();
    assert!(pdr.starts_with("scheme,alpha,lanes,bin_m,attempts,successes,pdr\n"), "{pdr}");
    let proc_csv = fs::read_to_string(out_dir.join("processing.csv")).unwrap();
    assert_eq!(proc_csv.lines().filter(|l| l.starts_with("Hybrid,")).count(), 4);
    let manifest: serde_json::Value = serde_json::from_str(&fs::read_to_string(out_dir.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["status"], "ok");
    assert_eq!(manifest["points"].as_array().unwrap().len(), 2);
    assert_eq!(manifest["points"][0]["seeds"], serde_json::json!([4, 5]));
}
