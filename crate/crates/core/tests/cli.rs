use std::io::Write;
use std::path::Path;
use std::process::{Command, Output, Stdio};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_monodense"))
}

fn run_with_stdin(args: &[&str], stdin: &str) -> Output {
    let mut child = bin()
        .args(args)
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .spawn()
        .unwrap();
    child
        .stdin
        .take()
        .unwrap()
        .write_all(stdin.as_bytes())
        .unwrap();
    child.wait_with_output().unwrap()
}

#[test]
fn fit_prints_histogram_json() {
    let out = run_with_stdin(&["fit", "--data", "-", "--a", "0.5", "--b", "3"], "0.5\n");
    assert!(out.status.success());
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["breakpoints"], serde_json::json!([0.0, 0.5, 1.0]));
    assert_eq!(v["heights"], serde_json::json!([1.5, 0.5]));
}

#[test]
fn fit_accepts_unbounded_above() {
    let out = run_with_stdin(&["fit", "--data", "-", "--a", "0"], "0.2 0.4 0.4");
    assert!(out.status.success());
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    let hs: Vec<f64> = serde_json::from_value(v["heights"].clone()).unwrap();
    // pooled slope 1/0.4 on [0, 0.4], nothing beyond the last point
    assert_eq!(hs.len(), 2);
    assert!((hs[0] - 2.5).abs() < 1e-12);
    assert_eq!(hs[1], 0.0);
}

#[test]
fn fit_rejects_bad_input() {
    let out = run_with_stdin(&["fit", "--data", "-", "--a", "0.5", "--b", "2"], "0.2 abc");
    assert_eq!(out.status.code(), Some(2));
    let out = run_with_stdin(&["fit", "--data", "-", "--a", "1.5", "--b", "2"], "0.2");
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn calibrate_streams_rows_and_signals_rejection() {
    let strong = "0.001\n0.002\n\n0.01\n0.003\n";
    let out = run_with_stdin(
        &[
            "calibrate",
            "--stream",
            "-",
            "--algo",
            "og",
            "--alpha",
            "0.05",
            "--test",
        ],
        strong,
    );
    assert_eq!(out.status.code(), Some(1));
    let text = String::from_utf8(out.stdout).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "t,p,e,log_M,decision");
    assert_eq!(lines[1], "1,0.001,1,0,continue");
    assert_eq!(lines.len(), 5);
    assert!(lines[4].ends_with("reject"));

    let out = run_with_stdin(
        &[
            "calibrate",
            "--stream",
            "-",
            "--algo",
            "ea",
            "--alpha",
            "0.05",
            "--test",
        ],
        "0.5\n0.9\n",
    );
    assert_eq!(out.status.code(), Some(0));

    let out = run_with_stdin(
        &[
            "calibrate",
            "--stream",
            "-",
            "--algo",
            "og",
            "--alpha",
            "0.05",
        ],
        strong,
    );
    assert_eq!(
        out.status.code(),
        Some(0),
        "rejection only changes the exit code in test mode"
    );
}

#[test]
fn calibrate_rejects_out_of_range_p() {
    let out = run_with_stdin(
        &[
            "calibrate",
            "--stream",
            "-",
            "--algo",
            "og",
            "--alpha",
            "0.05",
        ],
        "1.5\n",
    );
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("outside"));
}

#[test]
fn experts_enumerate_reports_size_and_bound() {
    let out = bin()
        .args([
            "experts",
            "enumerate",
            "--n",
            "2",
            "--k",
            "2",
            "--beta",
            "0",
            "--a",
            "0.5",
            "--b",
            "2",
        ])
        .output()
        .unwrap();
    assert!(out.status.success());
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["size"], 1);
    assert_eq!(v["bound"], "16");
    assert_eq!(v["within_bound"], true);
    assert_eq!(v["class"]["provenance"]["kind"], "grid_class");
}

fn read_csv_header(path: &Path) -> String {
    std::fs::read_to_string(path)
        .unwrap()
        .lines()
        .next()
        .unwrap()
        .to_string()
}

#[test]
fn simulate_writes_all_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("c.json");
    std::fs::write(
        &config,
        r#"{"model": "linear", "n": 50, "replications": 3, "seed": 2,
            "algorithms": [{"algo": "og", "a": 0.25, "b": 4.0},
                           {"algo": "ea", "a": 0.25, "b": 4.0,
                            "expert_source": {"kind": "factory", "bin_counts": [1, 2], "levels": 4}}]}"#,
    )
    .unwrap();
    let out_dir = dir.path().join("out");
    let status = bin()
        .args([
            "simulate",
            "--config",
            config.to_str().unwrap(),
            "--out",
            out_dir.to_str().unwrap(),
        ])
        .status()
        .unwrap();
    assert!(status.success());
    assert_eq!(
        read_csv_header(&out_dir.join("trajectories.csv")),
        "scenario,algorithm,replication,t,cumulative_log_likelihood"
    );
    let rows = std::fs::read_to_string(out_dir.join("trajectories.csv"))
        .unwrap()
        .lines()
        .count();
    assert_eq!(rows, 1 + 4 * 3 * 50);
    assert!(
        read_csv_header(&out_dir.join("plot_data.csv")).starts_with("t,og_mean,og_stderr,ea_mean")
    );
    let summary: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out_dir.join("summary.json")).unwrap())
            .unwrap();
    assert_eq!(summary["replications"], 3);
    assert_eq!(summary["offline_dominates"], 3);
}

#[test]
fn risk_writes_curve_csv() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("og.json");
    std::fs::write(&config, r#"{"algo": "og", "a": 0.25, "b": 2.0}"#).unwrap();
    let out = bin()
        .args([
            "risk",
            "--algo-config",
            config.to_str().unwrap(),
            "--model",
            "linear",
            "--n",
            "20",
            "--replications",
            "4",
            "--seed",
            "1",
        ])
        .output()
        .unwrap();
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "t,mean,stderr,replications");
    assert_eq!(lines.len(), 21);
    assert!(lines[20].starts_with("20,") && lines[20].ends_with(",4"));
}

#[test]
fn invalid_config_is_an_error() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("bad.json");
    std::fs::write(&config, r#"{"model": "linear", "n": 10, "a": 2.0}"#).unwrap();
    let out = bin()
        .args([
            "simulate",
            "--config",
            config.to_str().unwrap(),
            "--out",
            dir.path().to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}
