use std::path::Path;
use std::process::{Command, Output};

const SCENARIO: &str = r#"{
  "mode": "SC",
  "duration_s": 2,
  "paths": [{"cqi": [15], "peak_rate_mbps": 10}],
  "traffic": {"kind": "udp", "udp_rate_mbps": 5}
}"#;

fn mcsim(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mcsim"))
        .args(args)
        .current_dir(dir)
        .env_remove("MCSIM_OUT_DIR")
        .output()
        .expect("spawn mcsim")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn workdir() -> tempfile::TempDir {
    let d = tempfile::tempdir().unwrap();
    std::fs::write(d.path().join("s.json"), SCENARIO).unwrap();
    d
}

#[test]
fn run_writes_requested_format() {
    let d = workdir();
    let o = mcsim(&["--format", "json", "--out-dir", "res", "run", "s.json"], d.path());
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(d.path().join("res/SC.json").exists());
    assert!(!d.path().join("res/SC.csv").exists());
    assert!(d.path().join("res/summary.csv").exists());
}

#[test]
fn env_var_sets_output_dir() {
    let d = workdir();
    let o = Command::new(env!("CARGO_BIN_EXE_mcsim"))
        .args(["run", "s.json"])
        .current_dir(d.path())
        .env("MCSIM_OUT_DIR", "from-env")
        .output()
        .unwrap();
    assert_eq!(code(&o), 0);
    assert!(d.path().join("from-env/SC.csv").exists());
}

#[test]
fn seed_flag_reaches_the_output() {
    let d = workdir();
    assert_eq!(code(&mcsim(&["--seed", "42", "--out-dir", "o", "run", "s.json"], d.path())), 0);
    let json = std::fs::read_to_string(d.path().join("o/SC.json")).unwrap();
    let doc: serde_json::Value = serde_json::from_str(&json).unwrap();
    assert_eq!(doc["run"]["seed"], 42);
}

#[test]
fn config_errors_exit_1() {
    let d = workdir();
    std::fs::write(d.path().join("bad.json"), r#"{"mode": "SC", "paths": []}"#).unwrap();
    std::fs::write(d.path().join("typo.json"), SCENARIO.replace("duration_s", "duraton_s")).unwrap();
    for args in [
        &["run", "missing.json"][..],
        &["run", "bad.json"],
        &["validate", "typo.json"],
        &["run", "--bogus", "s.json"],
        &["frobnicate"],
    ] {
        let o = mcsim(args, d.path());
        assert_eq!(code(&o), 1, "{args:?}: {}", String::from_utf8_lossy(&o.stderr));
    }
}

#[test]
fn matrix_needs_sweep() {
    let fixture = concat!(env!("CARGO_MANIFEST_DIR"), "/fixtures/testbed_matrix.json");
    let d = workdir();
    let o = mcsim(&["run", fixture], d.path());
    assert_eq!(code(&o), 1);
    assert!(String::from_utf8_lossy(&o.stderr).contains("sweep"));
    let o = mcsim(&["validate", fixture], d.path());
    assert_eq!(code(&o), 0);
    assert!(String::from_utf8_lossy(&o.stdout).contains("ok: 16 run(s)"));
}

#[test]
fn unwritable_output_is_a_run_error() {
    let d = workdir();
    std::fs::write(d.path().join("taken"), "").unwrap();
    let o = mcsim(&["--out-dir", "taken/sub", "run", "s.json"], d.path());
    assert_eq!(code(&o), 2);
}

#[test]
fn sweep_writes_every_run() {
    let d = workdir();
    let matrix = r#"{
      "base": {"mode": "DC_Reo", "duration_s": 1, "t_reordering_ms": 40,
               "paths": [{"cqi": [15], "peak_rate_mbps": 15}, {"cqi": [15], "peak_rate_mbps": 12}],
               "traffic": {"kind": "udp", "udp_rate_mbps": 20}},
      "variants": [{"name": "reo", "axes": {"t_reordering_ms": [40, 80]}}]
    }"#;
    std::fs::write(d.path().join("m.json"), matrix).unwrap();
    let o = mcsim(&["--out-dir", "o", "sweep", "--jobs", "2", "m.json"], d.path());
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    for key in ["reo-t_reordering_ms40", "reo-t_reordering_ms80"] {
        assert!(d.path().join(format!("o/{key}.csv")).exists(), "{key}");
    }
    let summary = std::fs::read_to_string(d.path().join("o/summary.csv")).unwrap();
    assert_eq!(summary.lines().count(), 3);
}

#[test]
fn gen_trace_is_seeded() {
    let d = workdir();
    for out in ["a.csv", "b.csv"] {
        let o = mcsim(&["--seed", "9", "gen-trace", "--seconds", "20", "--out", out], d.path());
        assert_eq!(code(&o), 0);
    }
    let a = std::fs::read(d.path().join("a.csv")).unwrap();
    assert_eq!(a, std::fs::read(d.path().join("b.csv")).unwrap());
    assert_eq!(String::from_utf8_lossy(&a).lines().count(), 21);
    let manifest = std::fs::read_to_string(d.path().join("a.manifest.json")).unwrap();
    assert!(manifest.contains("\"seed\": 9"));
}
