use std::path::PathBuf;
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_aggregate-hints"))
}

fn scenario(name: &str) -> PathBuf {
    [env!("CARGO_MANIFEST_DIR"), "..", "..", "scenarios", name].iter().collect()
}

fn run(cmd: &mut Command) -> (Output, serde_json::Value) {
    let out = cmd.output().expect("binary runs");
    let json = serde_json::from_slice(&out.stdout).unwrap_or(serde_json::Value::Null);
    (out, json)
}

#[test]
fn oracle_agrees_on_small_pools() {
    let (out, json) = run(bin().args(["oracle", "--pool-a", "1000,1000", "--pool-b", "1000,1300"]));
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(json["agree"], true);
    assert_eq!(json["closed_form"]["expected_profit"], json["grid"]["expected_profit"]);
}

#[test]
fn oracle_rejects_malformed_pool() {
    let (out, _) = run(bin().args(["oracle", "--pool-a", "1000", "--pool-b", "1000,1300"]));
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn audit_dp_passes_for_sum() {
    let (out, json) = run(bin().args([
        "audit-dp", "--mechanism", "sum", "--epsilon", "1", "--trials", "200000", "--bins", "100", "--cap", "5",
    ]));
    assert!(out.status.success(), "{json}");
    assert!(json["neighbors"]["epsilon_hat"].as_f64().unwrap() <= 1.1);
}

#[test]
fn audit_dp_refuses_too_few_trials() {
    let (out, _) = run(bin().args(["audit-dp", "--mechanism", "count", "--epsilon", "1", "--trials", "10", "--bins", "10"]));
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn simulate_writes_identical_reports_for_a_seed() {
    let tmp = tempfile::tempdir().unwrap();
    let mut dirs = Vec::new();
    for name in ["a", "b"] {
        let dir = tmp.path().join(name);
        let (out, json) = run(bin()
            .args(["simulate", "--config"])
            .arg(scenario("market_demo.toml"))
            .arg("--out")
            .arg(&dir)
            .args(["--seed", "9", "--rounds", "25"]));
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        assert_eq!(json["rounds"], 25);
        assert_eq!(json["conserved"], true);
        dirs.push(dir);
    }
    for f in ["rounds.csv", "releases.csv", "searchers.csv", "summary.json", "config.toml"] {
        let a = std::fs::read(dirs[0].join(f)).unwrap();
        let b = std::fs::read(dirs[1].join(f)).unwrap();
        assert_eq!(a, b, "{f} differs");
    }
    let echoed = std::fs::read_to_string(dirs[0].join("config.toml")).unwrap();
    assert!(echoed.contains("seed = 9") && echoed.contains("rounds = 25"));
}

#[test]
fn simulate_reports_bad_config() {
    let tmp = tempfile::tempdir().unwrap();
    let path = tmp.path().join("bad.toml");
    std::fs::write(&path, "seed = 1\nrounds = 2\nwhat = 3\n").unwrap();
    let out = bin()
        .args(["simulate", "--config"])
        .arg(&path)
        .arg("--out")
        .arg(tmp.path().join("out"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(!String::from_utf8_lossy(&out.stderr).is_empty());
}

#[test]
fn attack_reports_each_rate() {
    let (out, json) = run(bin()
        .args(["attack", "--config"])
        .arg(scenario("attack.toml"))
        .args(["--q", "1,0.5", "--trials", "300"]));
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let outcomes = json["outcomes"].as_array().unwrap();
    assert_eq!(outcomes.len(), 2);
    assert_eq!(outcomes[1]["q"], 0.5);
}

#[test]
fn attack_needs_an_attack_section() {
    let out = bin()
        .args(["attack", "--config"])
        .arg(scenario("small_gap.toml"))
        .args(["--q", "1", "--trials", "10"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}
