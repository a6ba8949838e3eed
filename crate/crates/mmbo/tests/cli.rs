use std::path::PathBuf;
use std::process::Command;

fn mmbo() -> Command {
    Command::new(env!("CARGO_BIN_EXE_mmbo"))
}

fn scratch(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("mmbo-cli-{}-{name}", std::process::id()));
    let _ = std::fs::remove_dir_all(&dir);
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

#[test]
fn gen_linear_is_byte_identical_for_equal_seeds() {
    let dir = scratch("gen");
    let run = |file: &str, seed: &str| {
        let out = dir.join(file);
        let status = mmbo()
            .args([
                "gen-linear",
                "--dx",
                "6",
                "--dy",
                "4",
                "--dl",
                "4",
                "--seed",
                seed,
                "--out",
            ])
            .arg(&out)
            .status()
            .unwrap();
        assert!(status.success());
        std::fs::read(out).unwrap()
    };
    let a = run("a.json", "5");
    let b = run("b.json", "5");
    let c = run("c.json", "6");
    assert_eq!(a, b);
    assert_ne!(a, c);
    let json: serde_json::Value = serde_json::from_slice(&a).unwrap();
    assert_eq!(json["type"], "linear");
}

#[test]
fn solve_writes_trace_and_summary() {
    let dir = scratch("solve");
    let out = mmbo()
        .args([
            "solve",
            "--problem",
            "builtin:ex62",
            "--solver",
            "napgmad",
            "--seed",
            "1",
            "--out",
        ])
        .arg(&dir)
        .output()
        .unwrap();
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let trace = std::fs::read_to_string(dir.join("trace.csv")).unwrap();
    assert_eq!(
        trace.lines().next().unwrap(),
        "iter,rho,f,P_rho,gap_x,gap_y,gap_lambda,gap_z,error,lower_gap,time_ms"
    );
    let summary: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.join("summary.json")).unwrap()).unwrap();
    let runs = summary
        .as_array()
        .cloned()
        .unwrap_or_else(|| vec![summary.clone()]);
    assert!(runs.iter().all(|r| r["eps_kkt"] == true), "{summary}");
}

#[test]
fn solve_into_missing_directory_exits_with_two() {
    let dir = scratch("missing").join("does-not-exist");
    let status = mmbo()
        .args(["solve", "--problem", "builtin:ex62", "--out"])
        .arg(&dir)
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(2));
}

#[test]
fn check_reports_verdict_through_exit_code() {
    let dir = scratch("check");
    let good = dir.join("good.json");
    std::fs::write(&good, r#"{"x":[1.0],"y":[1.0],"lambda":[-2.0],"z":[1.0]}"#).unwrap();
    let out = mmbo()
        .args([
            "check",
            "--problem",
            "builtin:ex62",
            "--rho",
            "100",
            "--eps",
            "1e-6",
            "--point",
        ])
        .arg(&good)
        .output()
        .unwrap();
    assert!(out.status.success());
    let report: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(report["eps_kkt"], true);
    let bad = dir.join("bad.json");
    std::fs::write(&bad, r#"{"x":[0.0],"y":[0.0],"lambda":[0.0],"z":[0.5]}"#).unwrap();
    let status = mmbo()
        .args([
            "check",
            "--problem",
            "builtin:ex62",
            "--rho",
            "100",
            "--eps",
            "1e-6",
            "--point",
        ])
        .arg(&bad)
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(1));
}

#[test]
fn oracle_prints_json_estimate() {
    let out = mmbo()
        .args(["oracle", "--problem", "builtin:ex62", "--resolution", "201"])
        .output()
        .unwrap();
    assert!(out.status.success());
    let r: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!((r["phi_star"].as_f64().unwrap() - 2.0).abs() <= 0.05);
}

#[test]
fn unknown_builtin_fails() {
    let status = mmbo()
        .args(["oracle", "--problem", "builtin:ex99", "--resolution", "11"])
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(1));
}
