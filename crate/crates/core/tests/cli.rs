use std::path::PathBuf;
use std::process::{Command, Output};

fn data(name: &str) -> String {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("data")
        .join(name)
        .display()
        .to_string()
}

fn branchcut(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_branchcut"))
        .args(args)
        .env_remove("BRANCHCUT_OUT_DIR")
        .output()
        .expect("spawn branchcut")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8(o.stderr.clone()).unwrap()
}

fn problem(extra: &[&str]) -> Vec<String> {
    let mut v = vec![
        "--model".to_string(),
        data("b_alexnet.model"),
        "--profile".to_string(),
        data("b_alexnet_cloud.csv"),
        "--gamma".to_string(),
        "100".to_string(),
    ];
    v.extend(extra.iter().map(|s| s.to_string()));
    v
}

fn run(cmd: &str, extra: &[&str]) -> Output {
    let mut args = vec![cmd.to_string()];
    args.extend(problem(extra));
    let refs: Vec<&str> = args.iter().map(String::as_str).collect();
    branchcut(&refs)
}

#[test]
fn solve_json_matches_golden() {
    let o = run(
        "solve",
        &["--bandwidth", "5.85e6", "--p", "0.8", "--format", "json"],
    );
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let golden = std::fs::read_to_string(data("golden/solve_4g_gamma100_p0.8.json")).unwrap();
    assert_eq!(stdout(&o), golden);
}

#[test]
fn solve_tsv_lists_sets() {
    let o = run("solve", &["--net", "4g", "--p", "0.9"]);
    assert_eq!(o.status.code(), Some(0));
    let out = stdout(&o);
    assert!(out.starts_with("# branchcut "));
    assert!(out.contains("cut\tlayer:2\n"));
    assert!(out.contains("edge_set\tv1,b1,v2\n"));
    assert!(out.contains("cloud_set\tv3,v4,v5,v6,v7,v8\n"));
}

#[test]
fn probability_sweep_has_one_row_per_value() {
    let o = run(
        "sweep",
        &[
            "--net",
            "4g",
            "--var",
            "probability",
            "--from",
            "0",
            "--to",
            "1",
            "--step",
            "0.05",
        ],
    );
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let out = stdout(&o);
    let rows: Vec<&str> = out
        .lines()
        .filter(|l| !l.starts_with('#'))
        .skip(1)
        .collect();
    assert_eq!(rows.len(), 21);
    assert!(rows[0].starts_with("0\tcloud_only\t0\t"));
    assert!(rows[20].starts_with("1\tedge_only\t8\t"));
    let times: Vec<f64> = rows
        .iter()
        .map(|r| r.rsplit('\t').next().unwrap().parse().unwrap())
        .collect();
    assert!(times.windows(2).all(|w| w[1] <= w[0]));
}

#[test]
fn gamma_sweep_json() {
    let o = run(
        "sweep",
        &[
            "--net",
            "3g",
            "--p",
            "0.5",
            "--var",
            "gamma",
            "--values",
            "10,100,2000",
            "--format",
            "json",
        ],
    );
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    let rows = v["rows"].as_array().unwrap();
    assert_eq!(rows.len(), 3);
    assert_eq!(rows[2]["cut"], "cloud_only");
}

#[test]
fn missing_profile_is_an_input_error() {
    let o = branchcut(&[
        "solve",
        "--model",
        &data("b_alexnet.model"),
        "--profile",
        "/nonexistent/profile.csv",
        "--gamma",
        "100",
        "--net",
        "4g",
    ]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("/nonexistent/profile.csv"));
    assert!(stdout(&o).is_empty());
}

#[test]
fn usage_errors_exit_1() {
    assert_eq!(branchcut(&["solve"]).status.code(), Some(1));
    assert_eq!(branchcut(&["frobnicate"]).status.code(), Some(1));
    let o = run("solve", &[]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("--bandwidth"));
}

#[test]
fn bad_probability_is_an_input_error() {
    let o = run("solve", &["--net", "4g", "--p", "1.5"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn help_exits_0() {
    let o = branchcut(&["--help"]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).contains("solve"));
}

#[test]
fn validate_reports_ok_and_errors() {
    let o = branchcut(&["validate", "--model", &data("b_alexnet.model")]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(stdout(&o), "ok: 8 layers, 1 branches\n");

    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.model");
    std::fs::write(
        &bad,
        "input_bytes = 10\n\n[[layers]]\nname = \"a\"\noutput_bytes = 4\n\n\
         [[branches]]\nafter_layer = 1\nexit_probability = 0.5\n",
    )
    .unwrap();
    let o = branchcut(&["validate", "--model", bad.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(
        stderr(&o).contains("branch after output layer"),
        "{}",
        stderr(&o)
    );
}

#[test]
fn graph_exports_dot() {
    let o = run("graph", &["--net", "4g"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let dot = stdout(&o);
    assert!(dot.starts_with("digraph"));
    assert!(dot.contains("terminal*c"));
    assert!(dot.trim_end().ends_with('}'));
}

#[test]
fn prob_curve_on_bundled_samples() {
    let o = branchcut(&[
        "prob-curve",
        "--samples",
        &data("entropy_samples.csv"),
        "--values",
        "0,0.1,0.3,0.7",
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let out = stdout(&o);
    let rows: Vec<Vec<&str>> = out
        .lines()
        .filter(|l| !l.starts_with('#'))
        .skip(1)
        .map(|l| l.split('\t').collect())
        .collect();
    assert_eq!(rows.len(), 12);
    for r in &rows {
        let p: f64 = r[3].parse().unwrap();
        assert!((0.0..=1.0).contains(&p));
        if r[2] == "0" {
            assert_eq!(p, 0.0);
        }
        if r[2] == "0.7" {
            assert_eq!(p, 1.0);
        }
    }

    let o = branchcut(&[
        "prob-curve",
        "--samples",
        &data("entropy_samples.csv"),
        "--label",
        "nope",
        "--values",
        "0.1",
    ]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn repeated_runs_are_byte_identical() {
    let args = [
        "--net",
        "wifi",
        "--var",
        "probability",
        "--from",
        "0",
        "--to",
        "1",
        "--step",
        "0.1",
    ];
    let a = run("sweep", &args);
    let b = run("sweep", &args);
    assert_eq!(a.stdout, b.stdout);
}

#[test]
fn out_path_honours_out_dir_env() {
    let dir = tempfile::tempdir().unwrap();
    let mut args = vec!["solve".to_string()];
    args.extend(problem(&[
        "--net",
        "4g",
        "--p",
        "0.8",
        "--out",
        "decision.tsv",
    ]));
    let o = Command::new(env!("CARGO_BIN_EXE_branchcut"))
        .args(&args)
        .env("BRANCHCUT_OUT_DIR", dir.path())
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(o.stdout.is_empty());
    let written = std::fs::read_to_string(dir.path().join("decision.tsv")).unwrap();
    assert!(written.contains("cut\tcloud_only\n"));

    let abs = dir.path().join("abs.json");
    let o = run(
        "solve",
        &[
            "--net",
            "4g",
            "--format",
            "json",
            "--out",
            abs.to_str().unwrap(),
        ],
    );
    assert_eq!(o.status.code(), Some(0));
    assert!(std::fs::read_to_string(abs).unwrap().contains("\"cut\""));
}
