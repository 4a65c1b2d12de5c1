use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn rezo(args: &[&str]) -> Output {
    rezo_env(args, None)
}

fn rezo_env(args: &[&str], out_dir: Option<&Path>) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_rezo"));
    cmd.args(args).env_remove("REZO_OUT_DIR");
    if let Some(dir) = out_dir {
        cmd.env("REZO_OUT_DIR", dir);
    }
    cmd.output().expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

fn default_config() -> String {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs/default.json").display().to_string()
}

fn small_config(dir: &Path) -> String {
    let text = std::fs::read_to_string(default_config()).unwrap();
    let mut value: serde_json::Value = serde_json::from_str(&text).unwrap();
    value["T"] = 50.into();
    let path = dir.join("small.json");
    std::fs::write(&path, value.to_string()).unwrap();
    path.display().to_string()
}

#[test]
fn run_writes_trace_and_summary() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let o = rezo(&["run", "--config", &default_config(), "--out", out.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let summary: serde_json::Value = serde_json::from_slice(&std::fs::read(out.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["horizon"], 2000);
    assert_eq!(summary["regret_over_t"].as_array().unwrap().len(), 4);
    assert!(summary["config_hash"].as_str().unwrap().len() == 64);
    let trace = std::fs::read_to_string(out.join("trace.csv")).unwrap();
    assert_eq!(trace.lines().count(), 2001);
}

#[test]
fn output_directory_precedence() {
    let dir = tempfile::tempdir().unwrap();
    let config = small_config(dir.path());
    let env_dir = dir.path().join("from-env");
    let flag_dir = dir.path().join("from-flag");
    assert_eq!(code(&rezo_env(&["run", "--config", &config], Some(&env_dir))), 0);
    assert!(env_dir.join("trace.csv").exists());
    let o = rezo_env(&["run", "--config", &config, "--out", flag_dir.to_str().unwrap()], Some(&env_dir));
    assert_eq!(code(&o), 0);
    assert!(flag_dir.join("trace.csv").exists());
}

#[test]
fn no_filter_flag_reaches_the_summary() {
    let dir = tempfile::tempdir().unwrap();
    let config = small_config(dir.path());
    let out = dir.path().join("open");
    let o = rezo(&["run", "--config", &config, "--no-filter", "--out", out.to_str().unwrap()]);
    assert_eq!(code(&o), 0);
    let summary: serde_json::Value = serde_json::from_slice(&std::fs::read(out.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["filter_enabled"], false);
    assert!(String::from_utf8_lossy(&o.stderr).contains("filter disabled"));
}

#[test]
fn invalid_inputs_exit_with_one() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, r#"{"schema_version": 1, "n": 0}"#).unwrap();
    assert_eq!(code(&rezo(&["run", "--config", bad.to_str().unwrap()])), 1);
    assert_eq!(code(&rezo(&["run", "--config", "/nonexistent/config.json"])), 1);
    assert_eq!(code(&rezo(&["verify", "--suite", "bogus"])), 1);
    let empty = dir.path().join("empty.csv");
    std::fs::write(&empty, "").unwrap();
    assert_eq!(code(&rezo(&["report", "--trace", empty.to_str().unwrap()])), 1);
}

#[test]
fn unwritable_output_is_a_runtime_error() {
    let dir = tempfile::tempdir().unwrap();
    let config = small_config(dir.path());
    let blocker = dir.path().join("blocker");
    std::fs::write(&blocker, "").unwrap();
    let o = rezo(&["run", "--config", &config, "--out", blocker.join("sub").to_str().unwrap()]);
    assert_eq!(code(&o), 2);
}

#[test]
fn verify_reports_machine_readable_checks() {
    let o = rezo(&["verify", "--suite", "mutation", "--json"]);
    assert_eq!(code(&o), 0);
    let checks: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    let checks = checks.as_array().unwrap();
    assert_eq!(checks.len(), 2);
    assert!(checks.iter().all(|c| c["passed"] == true && c["measured"].is_number()));
    let o = rezo(&["verify", "--suite", "stochasticity"]);
    assert_eq!(code(&o), 0);
    assert!(String::from_utf8_lossy(&o.stdout).contains("max |sum z - 1|"));
}

#[test]
fn failing_suites_exit_with_three() {
    // The unsquared mean-minimality inequality does not hold for every point set.
    let o = rezo(&["verify", "--suite", "projection"]);
    assert_eq!(code(&o), 3);
    assert!(String::from_utf8_lossy(&o.stdout).contains("FAIL projection"));
}

#[test]
fn report_formats() {
    let dir = tempfile::tempdir().unwrap();
    let config = small_config(dir.path());
    let out = dir.path().join("out");
    assert_eq!(code(&rezo(&["run", "--config", &config, "--out", out.to_str().unwrap()])), 0);
    let trace = out.join("trace.csv");
    let o = rezo(&["report", "--trace", trace.to_str().unwrap()]);
    assert_eq!(code(&o), 0);
    let csv = String::from_utf8(o.stdout).unwrap();
    assert!(csv.starts_with("t,x1_1,x1_2,x2_1,"));
    assert_eq!(csv.lines().count(), 51);
    let o = rezo(&["report", "--trace", trace.to_str().unwrap(), "--format", "summary"]);
    assert_eq!(code(&o), 0);
    let stats: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(stats["rounds"], 50);
    assert_eq!(stats["n"], 4);
}

#[test]
fn gen_schedule_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("schedule.json");
    let args = |seed: &str, td: &str| {
        vec![
            "gen-schedule".to_string(),
            "--n=4".into(),
            "--period=2".into(),
            format!("--trusted-density={td}"),
            "--adv-density=0.2".into(),
            format!("--seed={seed}"),
            format!("--out={}", path.display()),
        ]
    };
    let run = |a: Vec<String>| rezo(&a.iter().map(String::as_str).collect::<Vec<_>>());
    assert_eq!(code(&run(args("9", "0.6"))), 0);
    let first = std::fs::read_to_string(&path).unwrap();
    assert_eq!(code(&run(args("9", "0.6"))), 0);
    assert_eq!(first, std::fs::read_to_string(&path).unwrap());
    let file: serde_json::Value = serde_json::from_str(&first).unwrap();
    assert_eq!(file["snapshots"].as_array().unwrap().len(), 2);
    assert_eq!(code(&run(args("9", "0"))), 1);
}
