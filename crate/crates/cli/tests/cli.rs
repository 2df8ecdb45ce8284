use std::path::Path;
use std::process::{Command, Output};

fn dynring(args: &[&str], out_dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dynring"))
        .args(args)
        .env("DYNRING_OUT_DIR", out_dir)
        .output()
        .expect("binary runs")
}

fn write_config(dir: &Path, text: &str) -> String {
    let path = dir.join("config.toml");
    std::fs::write(&path, text).unwrap();
    path.to_str().unwrap().to_string()
}

#[test]
fn run_writes_results_to_env_directory() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(
        dir.path(),
        "n = [8, 10]\nadversary = [\"RED\", \"SED\"]\ntrials = 2\n",
    );
    let out = dynring(&["run", "--config", &config], dir.path());
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let csv = std::fs::read_to_string(dir.path().join("results.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(
        lines.next().unwrap(),
        "n,k,adversary,seed,rounds_coverage,rounds_termination,stage1,stage2,stage3,stage4,success,failure_class,steps"
    );
    assert_eq!(lines.count(), 8);
    let summary: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("summary.json")).unwrap())
            .unwrap();
    assert_eq!(summary.as_array().unwrap().len(), 4);
}

#[test]
fn out_dir_flag_overrides_env() {
    let dir = tempfile::tempdir().unwrap();
    let other = dir.path().join("elsewhere");
    let config = write_config(dir.path(), "n = 8\n");
    let out = dynring(
        &[
            "run",
            "--config",
            &config,
            "--out-dir",
            other.to_str().unwrap(),
        ],
        dir.path(),
    );
    assert!(out.status.success());
    assert!(other.join("results.csv").exists());
    assert!(!dir.path().join("results.csv").exists());
}

#[test]
fn invalid_config_is_reported() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), "n = 8\ncrossing_detection = false\n");
    let out = dynring(&["run", "--config", &config], dir.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("crossing detection"));
}

#[test]
fn traces_replay_and_corruption_is_caught() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(
        dir.path(),
        "n = 8\nadversary = \"SED\"\n[output]\ntrace = true\n",
    );
    assert!(dynring(&["run", "--config", &config], dir.path())
        .status
        .success());
    let trace = std::fs::read_dir(dir.path().join("traces"))
        .unwrap()
        .next()
        .unwrap()
        .unwrap()
        .path();
    let out = dynring(&["replay", trace.to_str().unwrap()], dir.path());
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let result: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(result["success"], true);

    let text = std::fs::read_to_string(&trace).unwrap();
    let mut lines: Vec<String> = text.lines().map(String::from).collect();
    let mut round: serde_json::Value = serde_json::from_str(&lines[2]).unwrap();
    let edge = round["removed"][0].as_u64().unwrap();
    round["removed"][0] = ((edge + 1) % 8).into();
    lines[2] = round.to_string();
    std::fs::write(&trace, lines.join("\n")).unwrap();
    let out = dynring(&["replay", trace.to_str().unwrap()], dir.path());
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("diverges at round 1"));

    let cut: Vec<&str> = text.lines().collect();
    let broken = format!("{}\n{{\"type\": \"round\"", cut[..4].join("\n"));
    std::fs::write(&trace, broken).unwrap();
    let out = dynring(&["replay", trace.to_str().unwrap()], dir.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 5"));
}

#[test]
fn verify_small_rings() {
    let dir = tempfile::tempdir().unwrap();
    let out = dynring(&["verify", "--max-n", "4", "--max-k", "2"], dir.path());
    assert!(out.status.success());
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.lines().all(|l| l.starts_with("PASS")));
    let out = dynring(&["verify", "--max-n", "9", "--max-k", "2"], dir.path());
    assert_eq!(out.status.code(), Some(2));
}
