use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const BIN: &str = env!("CARGO_BIN_EXE_aif-router");

const SCENARIO: &str = r#"
[workload]
pattern = "burst"
run_duration_s = 600

[[tiers]]
tier = "light"
capacity_cores = 2
base_service_ms = 40
queue_capacity = 10

[[tiers]]
tier = "medium"
capacity_cores = 3
base_service_ms = 40
queue_capacity = 10

[[tiers]]
tier = "heavy"
capacity_cores = 8
base_service_ms = 40
queue_capacity = 100
"#;

fn setup(dir: &Path) -> std::path::PathBuf {
    fs::write(dir.join("scenario.toml"), SCENARIO).unwrap();
    let spec = dir.join("experiment.toml");
    fs::write(&spec, "scenario = \"scenario.toml\"\n").unwrap();
    spec
}

fn aif_router(args: &[&str], env: &[(&str, &str)]) -> Output {
    let mut cmd = Command::new(BIN);
    cmd.args(args).env("AIF_ROUTER_LOG", "warn");
    for (k, v) in env {
        cmd.env(k, v);
    }
    cmd.output().unwrap()
}

fn requests_column(csv: &str) -> Vec<String> {
    csv.lines().skip(1).map(|l| l.rsplit(',').next().unwrap().to_owned()).collect()
}

#[test]
fn run_writes_reports_and_replay_reproduces_them() {
    let dir = tempfile::tempdir().unwrap();
    let spec = setup(dir.path());
    let out = dir.path().join("out");
    let res = aif_router(
        &["run", spec.to_str().unwrap(), "--out", out.to_str().unwrap(), "--duration-s", "30", "--seeds", "4,5"],
        &[],
    );
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
    let stdout = String::from_utf8(res.stdout).unwrap();
    assert!(stdout.contains("Welch"), "{stdout}");

    for f in ["report.csv", "summary.txt", "outcomes.jsonl", "traces/aif-run0-seed4.jsonl", "traces/aif-run1-seed5.jsonl"] {
        assert!(out.join(f).is_file(), "missing {f}");
    }
    assert!(!out.join("traces/baseline-run0-seed4.jsonl").exists());

    let replayed = dir.path().join("replayed");
    let res = aif_router(
        &["replay", out.join("outcomes.jsonl").to_str().unwrap(), "-o", replayed.to_str().unwrap()],
        &[],
    );
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
    assert_eq!(
        fs::read(out.join("report.csv")).unwrap(),
        fs::read(replayed.join("report.csv")).unwrap()
    );
    assert_eq!(String::from_utf8(res.stdout).unwrap(), stdout);
}

#[test]
fn environment_supplies_flags_and_flags_win() {
    let dir = tempfile::tempdir().unwrap();
    let spec = setup(dir.path());
    let env_out = dir.path().join("env");
    let res = aif_router(
        &["run"],
        &[
            ("AIF_ROUTER_SPEC", spec.to_str().unwrap()),
            ("AIF_ROUTER_OUT", env_out.to_str().unwrap()),
            ("AIF_ROUTER_DURATION_S", "20"),
            ("AIF_ROUTER_SEEDS", "7,8"),
            ("AIF_ROUTER_STRATEGY", "baseline"),
        ],
    );
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
    let csv = fs::read_to_string(env_out.join("report.csv")).unwrap();
    assert_eq!(csv.lines().count(), 2, "{csv}");
    assert!(csv.lines().nth(1).unwrap().starts_with("baseline,"));
    let short = requests_column(&csv);

    let flag_out = dir.path().join("flag");
    let res = aif_router(
        &["run", "--duration-s", "40", "-o", flag_out.to_str().unwrap()],
        &[
            ("AIF_ROUTER_SPEC", spec.to_str().unwrap()),
            ("AIF_ROUTER_DURATION_S", "20"),
            ("AIF_ROUTER_SEEDS", "7,8"),
            ("AIF_ROUTER_STRATEGY", "baseline"),
        ],
    );
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
    let long = requests_column(&fs::read_to_string(flag_out.join("report.csv")).unwrap());
    let (s, l): (f64, f64) = (short[0].parse().unwrap(), long[0].parse().unwrap());
    assert!(l > s, "--duration-s 40 should override the environment's 20: {s} vs {l}");
}

#[test]
fn missing_spec_is_a_configuration_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let res = aif_router(&["run", "/nonexistent/experiment.toml", "-o", out.to_str().unwrap()], &[]);
    assert_eq!(res.status.code(), Some(2));
    assert!(!out.exists());
}

#[test]
fn unknown_strategy_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let spec = setup(dir.path());
    let res = aif_router(&["run", spec.to_str().unwrap(), "--strategy", "greedy"], &[]);
    assert_eq!(res.status.code(), Some(2));
}

#[test]
fn corrupt_outcome_log_fails_replay() {
    let dir = tempfile::tempdir().unwrap();
    let log = dir.path().join("outcomes.jsonl");
    fs::write(&log, "{\"strategy\":\"aif\"\n").unwrap();
    let res = aif_router(&["replay", log.to_str().unwrap()], &[]);
    assert_eq!(res.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&res.stderr).contains("outcomes.jsonl:1"));
}

#[test]
fn serve_without_tier_urls_is_a_configuration_error() {
    let res = aif_router(&["serve", "--light-url", "http://127.0.0.1:1"], &[]);
    assert_eq!(res.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&res.stderr).contains("medium"));
}
