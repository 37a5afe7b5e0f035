//! End-to-end tests of the command-line interface.

use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_cartan-lab"))
}

#[test]
fn list_builtins_table() {
    let out = bin().arg("list-builtins").output().unwrap();
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("euclidean-2d"));
    assert!(text.contains("p1^2 + p2^2"));
    assert!(text.contains("hyperbolic-2d"));
    assert!(text.contains("x2^2 * (p1^2 + p2^2)"));
    assert!(text.contains("randers-2d-eps0.1"));
}

#[test]
fn eval_expression() {
    let out = bin()
        .args(["eval", "--expr", "p1^2+p2^2", "--dim", "2", "--at", "p=3,4"])
        .output()
        .unwrap();
    assert!(out.status.success());
    assert_eq!(String::from_utf8(out.stdout).unwrap().trim(), "25");

    let out = bin()
        .args(["eval", "--expr", "x2^2*(p1^2+p2^2)", "--dim", "2", "--at", "x=0,2;p=1,1"])
        .output()
        .unwrap();
    assert_eq!(String::from_utf8(out.stdout).unwrap().trim(), "8");
}

#[test]
fn eval_rejects_bad_input() {
    let out = bin()
        .args(["eval", "--expr", "q1", "--dim", "2", "--at", "p=1,0"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8(out.stderr).unwrap();
    assert!(err.contains("unknown identifier"), "{err}");
}

#[test]
fn verify_builtin_json_and_exit_code() {
    let dir = std::env::temp_dir().join("cartan_lab_cli_test");
    std::fs::create_dir_all(&dir).unwrap();
    let out_path = dir.join("report.json");
    let out = bin()
        .args([
            "verify",
            "--builtin",
            "euclidean-2d",
            "--points",
            "12",
            "--seed",
            "42",
            "--checks",
            "axioms,curvature-identities,frame-gram",
            "--out",
        ])
        .arg(&out_path)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let body = std::fs::read_to_string(&out_path).unwrap();
    let json: serde_json::Value = serde_json::from_str(&body).unwrap();
    assert_eq!(json["schema_version"], 1);
    assert_eq!(json["summary"]["verdict"], "pass");
    assert_eq!(json["checks"].as_array().unwrap().len(), 3);
    assert!(json["timing_ms"].is_null(), "timing must default to null");
}

#[test]
fn verify_csv_format() {
    let out = bin()
        .args([
            "verify",
            "--builtin",
            "euclidean-2d",
            "--points",
            "10",
            "--checks",
            "axioms",
            "--format",
            "csv",
        ])
        .output()
        .unwrap();
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.starts_with("check_id,theorem,points_tested,max_residual,tolerance,verdict"));
    assert!(text.contains("axioms"));
}

#[test]
fn unknown_check_and_unknown_builtin_fail_cleanly() {
    let out = bin()
        .args(["verify", "--builtin", "euclidean-2d", "--checks", "bogus"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    let out = bin().args(["verify", "--builtin", "nope"]).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn user_metric_from_file() {
    let dir = std::env::temp_dir().join("cartan_lab_cli_test");
    std::fs::create_dir_all(&dir).unwrap();
    let metric_path = dir.join("metric.txt");
    std::fs::write(&metric_path, "x2^2 * p1^2 + p2^2\n").unwrap();
    let out = bin()
        .args(["verify", "--metric"])
        .arg(&metric_path)
        .args([
            "--dim",
            "2",
            "--kind",
            "k2",
            "--points",
            "12",
            "--box",
            "-1,1;0.5,2",
            "--checks",
            "axioms,curvature-identities",
        ])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn reports_byte_identical_across_thread_env() {
    let run = |threads: &str| -> String {
        let out = bin()
            .env("CARTAN_LAB_THREADS", threads)
            .args([
                "verify",
                "--builtin",
                "hyperbolic-2d",
                "--points",
                "12",
                "--seed",
                "9",
                "--checks",
                "axioms,curvature-identities,killing,classify-curvature",
            ])
            .output()
            .unwrap();
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        String::from_utf8(out.stdout).unwrap()
    };
    let a = run("1");
    let b = run("3");
    assert_eq!(a, b, "reports must not depend on the thread cap");
}

#[test]
fn classify_curvature_subcommand() {
    let out = bin()
        .args(["classify-curvature", "--builtin", "hyperbolic-2d", "--points", "30"])
        .output()
        .unwrap();
    assert!(out.status.success());
    let json: serde_json::Value =
        serde_json::from_str(&String::from_utf8(out.stdout).unwrap()).unwrap();
    let c = json["c_hat"].as_f64().unwrap();
    assert!((c + 1.0).abs() < 1e-6, "c_hat {c}");
}

#[test]
fn config_file_with_output_and_format() {
    let dir = std::env::temp_dir().join("cartan_lab_cli_test");
    std::fs::create_dir_all(&dir).unwrap();
    let report_path = dir.join("from_config.csv");
    let cfg_path = dir.join("run.json");
    let cfg = serde_json::json!({
        "metric": "euclidean-2d",
        "builtin": true,
        "dim": 2,
        "kind": "K-squared",
        "seed": 3,
        "num_points": 10,
        "coordinate_box": [[-1.0, 1.0], [-1.0, 1.0]],
        "shells": [1.0],
        "checks": ["axioms"],
        "tolerances": {},
        "alternate_frame": false,
        "output": report_path.to_str().unwrap(),
        "format": "csv"
    });
    std::fs::write(&cfg_path, serde_json::to_string_pretty(&cfg).unwrap()).unwrap();
    let out = bin().args(["verify", "--config"]).arg(&cfg_path).output().unwrap();
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let body = std::fs::read_to_string(&report_path).unwrap();
    assert!(body.starts_with("check_id,"));
    // an explicit flag overrides the file's format (output path still
    // comes from the file)
    let out = bin()
        .args(["verify", "--config"])
        .arg(&cfg_path)
        .args(["--points", "11", "--format", "json"])
        .output()
        .unwrap();
    assert!(out.status.success());
    let body = std::fs::read_to_string(&report_path).unwrap();
    assert!(
        body.trim_start().starts_with('{'),
        "explicit --format json must beat the file's csv: {}",
        &body[..body.len().min(60)]
    );
}
