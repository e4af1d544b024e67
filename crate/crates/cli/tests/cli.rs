use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

fn data(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data").join(name)
}

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mrsizer"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn write(dir: &TempDir, name: &str, text: &str) -> PathBuf {
    let p = dir.path().join(name);
    fs::write(&p, text).unwrap();
    p
}

const TINY: &str = r#"{
  "currency": "USD",
  "vm_types": [ { "id": "t", "containers": 2, "sigma_per_hour": 0.05, "pi_per_hour": 0.1 } ],
  "classes": [ {
    "id": "c", "h_users": 1, "think_time_ms": 10000, "deadline_ms": 500, "eta": 0.3,
    "profiles": { "t": { "n_map": 4, "n_reduce": 2, "map_avg_ms": 100, "reduce_avg_ms": 150, "shuffle_typ_avg_ms": 50 } }
  } ]
}"#;

#[test]
fn optimize_writes_a_complete_solution() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("sol.json");
    let o = run(&[
        "optimize",
        "--input",
        data("problem.json").to_str().unwrap(),
        "--output",
        out.to_str().unwrap(),
        "--evaluator",
        "analytic",
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let doc: Value = serde_json::from_str(&fs::read_to_string(&out).unwrap()).unwrap();
    assert_eq!(doc["status"], "complete");
    assert_eq!(doc["seed"], 42);
    assert_eq!(doc["currency"], "EUR");
    for class in doc["classes"].as_array().unwrap() {
        for key in ["vm_type", "vms", "reserved", "spot", "predicted_time_ms", "ci_half_width_ms", "feasible"] {
            assert!(class.get(key).is_some(), "missing {key}");
        }
    }
}

#[test]
fn same_seed_gives_identical_files() {
    let dir = TempDir::new().unwrap();
    let input = write(&dir, "p.json", &TINY.replace("\"deadline_ms\": 500", "\"deadline_ms\": 3000"));
    let outputs: Vec<String> = (0..2)
        .map(|k| {
            let out = dir.path().join(format!("s{k}.json"));
            let o = run(&["optimize", "--input", input.to_str().unwrap(), "--output", out.to_str().unwrap(), "--seed", "9"]);
            assert_eq!(code(&o), 0, "{}", stderr(&o));
            fs::read_to_string(out).unwrap()
        })
        .collect();
    assert_eq!(outputs[0], outputs[1]);
    assert!(outputs[0].contains("\"seed\": 9"));
}

#[test]
fn infeasible_class_exits_one_with_partial_status() {
    let dir = TempDir::new().unwrap();
    // A lone job cannot finish in less than map + reduce time.
    let input = write(&dir, "p.json", &TINY.replace("\"deadline_ms\": 500", "\"deadline_ms\": 250"));
    let out = dir.path().join("sol.json");
    let o = run(&[
        "optimize",
        "--input",
        input.to_str().unwrap(),
        "--output",
        out.to_str().unwrap(),
        "--evaluator",
        "analytic",
    ]);
    assert_eq!(code(&o), 1);
    let doc: Value = serde_json::from_str(&fs::read_to_string(&out).unwrap()).unwrap();
    assert_eq!(doc["status"], "partial");
    assert!(!doc["classes"][0]["diagnostics"].as_array().unwrap().is_empty());
}

#[test]
fn missing_field_is_an_input_error_with_its_path() {
    let dir = TempDir::new().unwrap();
    let input = write(&dir, "p.json", &TINY.replace("\"deadline_ms\": 500,", ""));
    let o = run(&["optimize", "--input", input.to_str().unwrap(), "--output", "/dev/null"]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("classes[0].deadline_ms"), "{}", stderr(&o));
}

#[test]
fn malformed_json_reports_line_and_column() {
    let dir = TempDir::new().unwrap();
    let input = write(&dir, "p.json", "{\n  \"vm_types\": [,]\n}");
    let o = run(&["optimize", "--input", input.to_str().unwrap(), "--output", "/dev/null"]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("p.json:2:"), "{}", stderr(&o));
}

#[test]
fn unknown_fields_fail_only_in_strict_mode() {
    let dir = TempDir::new().unwrap();
    let input = write(&dir, "p.json", &TINY.replace("\"h_users\": 1,", "\"h_users\": 1, \"colour\": 3,"));
    let out = dir.path().join("sol.json");
    let args = [
        "optimize",
        "--input",
        input.to_str().unwrap(),
        "--output",
        out.to_str().unwrap(),
        "--evaluator",
        "analytic",
    ];
    let lenient = run(&args);
    assert_eq!(code(&lenient), 0);
    assert!(stderr(&lenient).contains("colour"));
    let mut strict_args = args.to_vec();
    strict_args.push("--strict");
    let strict = run(&strict_args);
    assert_eq!(code(&strict), 2);
    assert!(stderr(&strict).contains("classes[0].colour"), "{}", stderr(&strict));
}

#[test]
fn bad_ci_target_is_rejected() {
    let o = run(&[
        "optimize",
        "--input",
        data("problem.json").to_str().unwrap(),
        "--output",
        "/dev/null",
        "--ci-target",
        "1.5",
    ]);
    assert_eq!(code(&o), 2);
}

#[test]
fn missing_input_file_is_an_input_error() {
    let o = run(&["optimize", "--input", "/nonexistent/p.json", "--output", "/dev/null"]);
    assert_eq!(code(&o), 2);
}

#[test]
fn simulate_prints_estimate_and_writes_trace() {
    let dir = TempDir::new().unwrap();
    let trace = dir.path().join("t.tsv");
    let o = run(&[
        "simulate",
        "--input",
        data("network.json").to_str().unwrap(),
        "--trace",
        trace.to_str().unwrap(),
        "--trace-jobs",
        "10",
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let est: Value = serde_json::from_slice(&o.stdout).unwrap();
    // Exact mean response of this network is 180 ms.
    let mean = est["mean_response"].as_f64().unwrap();
    let hw = est["half_width"].as_f64().unwrap();
    assert!((mean - 180.0).abs() <= hw, "{mean} +/- {hw}");
    let text = fs::read_to_string(trace).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("time_ms\tevent_kind\tjob_id\ttask_kind\tbusy_containers"));
    assert_eq!(text.lines().filter(|l| l.contains("\tcomplete\t")).count(), 10);
}

#[test]
fn sweep_writes_exact_header_and_one_row_per_value() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("s.csv");
    let o = run(&[
        "sweep",
        "--input",
        data("problem.json").to_str().unwrap(),
        "--axis",
        "deadline",
        "--class",
        "reporting",
        "--values",
        "4000,2000,1000",
        "--output",
        out.to_str().unwrap(),
        "--evaluator",
        "analytic",
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let text = fs::read_to_string(out).unwrap();
    let lines: Vec<_> = text.lines().collect();
    assert_eq!(lines[0], "axis_value,vm_type,vms,reserved,spot,hourly_cost,predicted_time_ms,feasible");
    assert_eq!(lines.len(), 4);
    assert!(lines[1].starts_with("4000,"));
}

#[test]
fn sweep_rejects_unknown_class_and_axis() {
    let input = data("problem.json");
    let base = ["sweep", "--input", input.to_str().unwrap(), "--values", "1,2", "--output", "/dev/null"];
    let mut a = base.to_vec();
    a.extend(["--axis", "deadline", "--class", "nope"]);
    assert_eq!(code(&run(&a)), 2);
    let mut b = base.to_vec();
    b.extend(["--axis", "think", "--class", "reporting"]);
    assert_eq!(code(&run(&b)), 2);
}

#[test]
fn validate_replays_rows_and_prints_summary() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("v.csv");
    let o = run(&["validate", "--input", data("accuracy_rows.json").to_str().unwrap(), "--output", out.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let stdout = String::from_utf8(o.stdout).unwrap();
    assert!(stdout.starts_with("mean |theta| = "), "{stdout}");
    let text = fs::read_to_string(out).unwrap();
    assert_eq!(text.lines().next(), Some("label,measured_ms,simulated_ms,theta_percent,note"));
    assert_eq!(text.lines().count(), 13);
    assert!(text.contains(",-24.02,non-conservative"));
    assert!(text.contains(",26.72,"));
}

#[test]
fn validate_exits_one_when_a_row_fails() {
    let dir = TempDir::new().unwrap();
    let input = write(
        &dir,
        "rows.json",
        r#"{ "rows": [
            { "label": "ok", "measured_ms": 100, "simulated_ms": 110 },
            { "label": "bad", "measured_ms": 100, "network": {
                "h_users": 1, "think_time": 10, "n_map": 1, "n_reduce": 0,
                "map_service": { "kind": "deterministic", "mean": 5 }, "capacity": 0 } }
        ] }"#,
    );
    let out = dir.path().join("v.csv");
    let o = run(&["validate", "--input", input.to_str().unwrap(), "--output", out.to_str().unwrap()]);
    assert_eq!(code(&o), 1);
    assert!(fs::read_to_string(out).unwrap().contains("bad,100.00,,,failed:"));
}
