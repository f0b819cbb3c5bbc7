use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::{json, Value};
use tempfile::TempDir;

fn irdp(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_irdp"))
        .args(args)
        .current_dir(dir)
        .env_remove("IRDP_OUT_DIR")
        .output()
        .expect("binary runs")
}

fn write_config(dir: &Path, name: &str, value: &Value) -> PathBuf {
    let path = dir.join(name);
    std::fs::write(&path, serde_json::to_vec_pretty(value).unwrap()).unwrap();
    path
}

fn read(path: &Path) -> String {
    std::fs::read_to_string(path).unwrap_or_else(|e| panic!("{}: {e}", path.display()))
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&read(path)).unwrap()
}

fn data_lines(csv: &str) -> Vec<String> {
    csv.lines().skip(1).map(str::to_string).collect()
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

fn gd_config(mode: &str, steps: usize, clip: f64, norm_budget: Option<f64>) -> Value {
    let mut cfg = json!({
        "schema_version": 1,
        "mode": mode,
        "dataset": {"synthetic": {"n": 200, "d": 5, "separation": 2.0, "seed": 11}},
        "intercept": true,
        "loss": {"kind": "logistic"},
        "learning_rate": 0.5,
        "sigma": 1.0,
        "clip": clip,
        "steps": steps,
        "seed": 3,
        "delta": 1e-5
    });
    if let Some(b) = norm_budget {
        cfg["norm_budget"] = json!(b);
    }
    cfg
}

#[test]
fn validate_with_defaults_reports_no_violations() {
    let tmp = TempDir::new().unwrap();
    let out = irdp(&["validate", "--out-dir", "out"], tmp.path());
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let report = read_json(&tmp.path().join("out/validation_report.json"));
    assert_eq!(report["passed"], json!(true));
    assert_eq!(report["fuzz"]["violations"], json!([]));
    assert_eq!(report["counterexamples"].as_array().unwrap().len(), 20);
}

#[test]
fn validate_is_deterministic() {
    let tmp = TempDir::new().unwrap();
    let cfg = json!({"schema_version": 1, "fuzz": {
        "plans": 30, "max_alphabet": 6, "max_rounds": 3, "budgets": [0.2, 1.0],
        "orders": [2.0, 8.0], "individual_plans": 5, "seed": 99, "parallel": true
    }});
    let path = write_config(tmp.path(), "validate.json", &cfg);
    let path = path.to_str().unwrap();
    assert_eq!(code(&irdp(&["validate", "-c", path, "--out-dir", "a"], tmp.path())), 0);
    assert_eq!(code(&irdp(&["validate", "-c", path, "--out-dir", "b"], tmp.path())), 0);
    assert_eq!(
        read(&tmp.path().join("a/validation_report.json")),
        read(&tmp.path().join("b/validation_report.json"))
    );
}

#[test]
fn gd_filtered_with_matched_budget_reproduces_plain_trace() {
    let tmp = TempDir::new().unwrap();
    let (k, c) = (25usize, 0.3f64);
    let plain = write_config(tmp.path(), "plain.json", &gd_config("plain", k, c, None));
    let filtered = write_config(
        tmp.path(),
        "filtered.json",
        &gd_config("filtered", k, c, Some(k as f64 * (c * c))),
    );
    for (cfg, dir) in [(&plain, "plain"), (&filtered, "filtered")] {
        let out = irdp(&["gd", "-c", cfg.to_str().unwrap(), "--out-dir", dir], tmp.path());
        assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    }
    let trace_plain = read(&tmp.path().join("plain/trace.csv"));
    assert_eq!(trace_plain.lines().count(), k + 1);
    assert_eq!(trace_plain, read(&tmp.path().join("filtered/trace.csv")));
    assert_eq!(read(&tmp.path().join("plain/spent.csv")), read(&tmp.path().join("filtered/spent.csv")));

    let a = read_json(&tmp.path().join("plain/gd_summary.json"));
    let b = read_json(&tmp.path().join("filtered/gd_summary.json"));
    assert_eq!(a["theta"], b["theta"]);
    assert_eq!(a["privacy"], b["privacy"]);
}

#[test]
fn gd_runs_are_byte_identical() {
    let tmp = TempDir::new().unwrap();
    let mut cfg = gd_config("filtered", 40, 0.5, Some(3.0));
    cfg["parallel"] = json!(true);
    let path = write_config(tmp.path(), "gd.json", &cfg);
    for dir in ["a", "b"] {
        assert_eq!(code(&irdp(&["gd", "-c", path.to_str().unwrap(), "--out-dir", dir], tmp.path())), 0);
    }
    for file in ["trace.csv", "spent.csv", "gd_summary.json"] {
        assert_eq!(read(&tmp.path().join("a").join(file)), read(&tmp.path().join("b").join(file)), "{file}");
    }
}

#[test]
fn gd_reads_csv_datasets() {
    let tmp = TempDir::new().unwrap();
    std::fs::write(
        tmp.path().join("train.csv"),
        "x1,x2,label\n1.0,0.5,1\n-1.0,-0.2,0\n0.8,0.9,1\n-0.7,-1.1,0\n",
    )
    .unwrap();
    let mut cfg = gd_config("plain", 5, 1.0, None);
    cfg["dataset"] = json!({"csv": "train.csv"});
    cfg["test_dataset"] = json!({"csv": "train.csv"});
    let path = write_config(tmp.path(), "gd.json", &cfg);
    let out = irdp(&["gd", "-c", path.to_str().unwrap(), "--out-dir", "out"], tmp.path());
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let summary = read_json(&tmp.path().join("out/gd_summary.json"));
    assert_eq!(summary["theta"].as_array().unwrap().len(), 3);
    assert!(summary["test_accuracy"].is_number());
}

#[test]
fn missing_sigma_is_a_config_error_with_no_artifacts() {
    let tmp = TempDir::new().unwrap();
    let mut cfg = gd_config("plain", 5, 1.0, None);
    cfg.as_object_mut().unwrap().remove("sigma");
    let path = write_config(tmp.path(), "gd.json", &cfg);
    let out = irdp(&["gd", "-c", path.to_str().unwrap(), "--out-dir", "out"], tmp.path());
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("sigma"));
    assert!(!tmp.path().join("out").exists());
}

#[test]
fn config_errors_exit_2_with_distinct_diagnostics() {
    let tmp = TempDir::new().unwrap();
    let mut diagnostics = Vec::new();

    let mut unknown = gd_config("plain", 5, 1.0, None);
    unknown["sigmaa"] = json!(1.0);
    let mut bad_version = gd_config("plain", 5, 1.0, None);
    bad_version["schema_version"] = json!(7);
    let mut unreadable = gd_config("plain", 5, 1.0, None);
    unreadable["dataset"] = json!({"csv": "no_such_file.csv"});
    let mut plain_with_budget = gd_config("plain", 5, 1.0, Some(1.0));
    plain_with_budget["sigma"] = json!(1.0);

    for (name, cfg) in [
        ("unknown.json", unknown),
        ("version.json", bad_version),
        ("unreadable.json", unreadable),
        ("budget.json", plain_with_budget),
    ] {
        let path = write_config(tmp.path(), name, &cfg);
        let out = irdp(&["gd", "-c", path.to_str().unwrap(), "--out-dir", "out"], tmp.path());
        assert_eq!(code(&out), 2, "{name}");
        diagnostics.push(String::from_utf8_lossy(&out.stderr).to_string());
    }
    assert!(!tmp.path().join("out").exists());
    for (i, a) in diagnostics.iter().enumerate() {
        for b in &diagnostics[i + 1..] {
            assert_ne!(a, b);
        }
    }

    let out = irdp(&["frobnicate"], tmp.path());
    assert_eq!(code(&out), 2);
    let out = irdp(&["gd", "-c", "missing.json"], tmp.path());
    assert_eq!(code(&out), 2);
}

#[test]
fn output_dir_falls_back_to_environment() {
    let tmp = TempDir::new().unwrap();
    let cfg = json!({"schema_version": 1, "zcdp_budgets": [{"eps": 1.0, "delta": 1e-5}]});
    let path = write_config(tmp.path(), "convert.json", &cfg);
    let out = Command::new(env!("CARGO_BIN_EXE_irdp"))
        .args(["convert", "-c", path.to_str().unwrap()])
        .current_dir(tmp.path())
        .env("IRDP_OUT_DIR", tmp.path().join("from_env"))
        .output()
        .unwrap();
    assert_eq!(code(&out), 0);
    assert!(tmp.path().join("from_env/convert.json").exists());
}

#[test]
fn convert_reports_conversions() {
    let tmp = TempDir::new().unwrap();
    let cfg = json!({
        "schema_version": 1,
        "rdp_to_dp": [{"order": 2.0, "rho": 0.5, "delta": (-1.0f64).exp()}],
        "curves": [{"curve": {"gaussian": {"sigma": 170.0, "steps": 104}}, "delta": 1e-5}],
        "zcdp_budgets": [{"eps": 1.0, "delta": 1e-5}]
    });
    let path = write_config(tmp.path(), "convert.json", &cfg);
    assert_eq!(code(&irdp(&["convert", "-c", path.to_str().unwrap(), "--out-dir", "out"], tmp.path())), 0);
    let report = read_json(&tmp.path().join("out/convert.json"));
    let eps = report["rdp_to_dp"][0]["eps"].as_f64().unwrap();
    assert!((eps - 1.5).abs() < 1e-12);
    let curve_eps = report["curves"][0]["eps"].as_f64().unwrap();
    // min over the default grid of 104α/(2·170²) + ln(1e5)/(α−1), attained at α = 64.
    assert!((curve_eps - 0.2979005579928816).abs() < 1e-12, "{curve_eps}");
    assert_eq!(report["curves"][0]["best_order"], json!(64.0));
    let b = report["zcdp_budgets"][0]["zcdp_budget"].as_f64().unwrap();
    let l = 1e5f64.ln();
    let expected = ((l + 1.0).sqrt() - l.sqrt()).powi(2);
    assert!((b - expected).abs() < 1e-15);
}

#[test]
fn filter_reports_decisions() {
    let tmp = TempDir::new().unwrap();
    let cfg = json!({
        "schema_version": 1,
        "filter": {"kind": "rdp", "order": 2.0, "budget": 1.0},
        "stream": [0.4, 0.4, 0.4, 0.2]
    });
    let path = write_config(tmp.path(), "filter.json", &cfg);
    assert_eq!(code(&irdp(&["filter", "-c", path.to_str().unwrap(), "--out-dir", "out"], tmp.path())), 0);
    let csv = read(&tmp.path().join("out/decisions.csv"));
    let decisions: Vec<&str> = csv.lines().skip(1).map(|l| l.split(',').nth(2).unwrap()).collect();
    assert_eq!(decisions, ["CONT", "CONT", "HALT", "CONT"]);
    let summary = read_json(&tmp.path().join("out/filter_summary.json"));
    assert_eq!(summary["first_halt"], json!(3));
}

/// Runs `args` once uninterrupted and once split at `split` with a snapshot
/// in between; the concatenated rows and the final snapshots must agree.
fn assert_snapshot_round_trip(sub: &str, cfg: &Value, csv_name: &str, split: usize) {
    let tmp = TempDir::new().unwrap();
    let path = write_config(tmp.path(), "cfg.json", cfg);
    let path = path.to_str().unwrap();
    let run = |extra: &[&str], dir: &str| {
        let mut args = vec![sub, "-c", path, "--out-dir", dir];
        args.extend_from_slice(extra);
        let out = irdp(&args, tmp.path());
        assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    };
    let split = split.to_string();
    run(&["--snapshot-out", "full.snap.json"], "full");
    run(&["--stop-after", &split, "--snapshot-out", "mid.snap.json"], "part1");
    run(&["--resume", "mid.snap.json", "--snapshot-out", "end.snap.json"], "part2");

    let full = data_lines(&read(&tmp.path().join("full").join(csv_name)));
    let mut joined = data_lines(&read(&tmp.path().join("part1").join(csv_name)));
    assert!(!joined.is_empty() && joined.len() < full.len());
    joined.extend(data_lines(&read(&tmp.path().join("part2").join(csv_name))));
    assert_eq!(full, joined);
    assert_eq!(read(&tmp.path().join("full.snap.json")), read(&tmp.path().join("end.snap.json")));
}

#[test]
fn filter_snapshot_round_trip() {
    let cfg = json!({
        "schema_version": 1,
        "filter": {"kind": "dp", "eps": 1.0, "delta": 1e-5},
        "stream": vec![0.01; 40]
    });
    assert_snapshot_round_trip("filter", &cfg, "decisions.csv", 17);
}

#[test]
fn odometer_snapshot_round_trip() {
    let rounds: Vec<Vec<f64>> = (0..30)
        .map(|t| (0..4).map(|i| 0.01 * ((t * 7 + i * 3) % 10) as f64).collect())
        .collect();
    let cfg = json!({"schema_version": 1, "delta": 0.1, "rounds": rounds});
    assert_snapshot_round_trip("odometer", &cfg, "bounds.csv", 11);
}

#[test]
fn odometer_histogram_rows() {
    let tmp = TempDir::new().unwrap();
    std::fs::write(tmp.path().join("losses.csv"), "a,b\n0.1,0.0\n0.1,0.05\n0.1,0.05\n").unwrap();
    let cfg = json!({"schema_version": 1, "delta": 0.15, "rounds_csv": "losses.csv", "histogram_rounds": [1, 3], "accounting": "per_instance"});
    let path = write_config(tmp.path(), "odo.json", &cfg);
    assert_eq!(code(&irdp(&["odometer", "-c", path.to_str().unwrap(), "--out-dir", "out"], tmp.path())), 0);
    let hist = read(&tmp.path().join("out/histogram.csv"));
    let rows: Vec<Vec<String>> = hist
        .lines()
        .skip(1)
        .map(|l| l.split(',').map(str::to_string).collect())
        .collect();
    assert_eq!(rows.len(), 4);
    let bound = |r: &Vec<String>| r[2].parse::<f64>().unwrap();
    // Point a restarts every round after the first; point b never does.
    assert_eq!((rows[0][1].as_str(), bound(&rows[0])), ("a", 0.15));
    assert_eq!((rows[2][0].as_str(), rows[2][1].as_str(), bound(&rows[2])), ("3", "a", 3.0 * 0.15));
    assert_eq!(bound(&rows[3]), 0.15);
    let summary = read_json(&tmp.path().join("out/odometer_summary.json"));
    assert_eq!(summary["accounting"], json!("per_instance"));
    assert_eq!(summary["filterable"], json!(false));
}

fn queries_setup(dir: &Path) -> Value {
    let mut csv = String::from("id,x,y\n");
    for i in 0..12 {
        csv.push_str(&format!("p{i},{},{}\n", (i as f64) / 11.0, if i % 3 == 0 { 1.0 } else { 0.25 }));
    }
    std::fs::write(dir.join("points.csv"), csv).unwrap();
    let mut queries = Vec::new();
    for t in 0..20 {
        queries.push(match t % 3 {
            0 => json!({"column": "x"}),
            1 => json!({"above_last_mean": "x"}),
            _ => json!({"column": "y"}),
        });
    }
    json!({
        "schema_version": 1,
        "dataset": "points.csv",
        "order": 2.0,
        "sigma": 1.0,
        "budget": 3.0,
        "seed": 5,
        "queries": queries
    })
}

#[test]
fn queries_snapshot_round_trip() {
    let tmp = TempDir::new().unwrap();
    let cfg = queries_setup(tmp.path());
    let mut cfg = cfg;
    cfg["dataset"] = json!(tmp.path().join("points.csv"));
    assert_snapshot_round_trip("queries", &cfg, "answers.csv", 8);
}

#[test]
fn queries_shrink_the_active_set() {
    let tmp = TempDir::new().unwrap();
    let cfg = queries_setup(tmp.path());
    let path = write_config(tmp.path(), "q.json", &cfg);
    assert_eq!(code(&irdp(&["queries", "-c", path.to_str().unwrap(), "--out-dir", "out"], tmp.path())), 0);
    let csv = read(&tmp.path().join("out/answers.csv"));
    let active: Vec<usize> = csv.lines().skip(1).map(|l| l.split(',').nth(2).unwrap().parse().unwrap()).collect();
    assert_eq!(active.len(), 20);
    assert_eq!(active[0], 12);
    assert!(active.windows(2).all(|w| w[1] <= w[0]));
    assert!(*active.last().unwrap() < 12);
}

#[test]
fn queries_reject_out_of_range_values() {
    let tmp = TempDir::new().unwrap();
    let mut cfg = queries_setup(tmp.path());
    cfg["queries"] = json!([{"values": [1.5, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0]}]);
    let path = write_config(tmp.path(), "q.json", &cfg);
    let out = irdp(&["queries", "-c", path.to_str().unwrap(), "--out-dir", "out"], tmp.path());
    assert_eq!(code(&out), 2);
    assert!(!tmp.path().join("out").exists());
}

#[test]
fn resume_rejects_mismatched_snapshot() {
    let tmp = TempDir::new().unwrap();
    let cfg = json!({"schema_version": 1, "filter": {"kind": "rdp", "order": 2.0, "budget": 1.0}, "stream": [0.1, 0.1]});
    let path = write_config(tmp.path(), "f.json", &cfg);
    let path = path.to_str().unwrap();
    let args = ["filter", "-c", path, "--out-dir", "a", "--stop-after", "1", "--snapshot-out", "s.json"];
    assert_eq!(code(&irdp(&args, tmp.path())), 0);
    let other = json!({"schema_version": 1, "filter": {"kind": "rdp", "order": 3.0, "budget": 1.0}, "stream": [0.1, 0.1]});
    let other = write_config(tmp.path(), "g.json", &other);
    let out = irdp(&["filter", "-c", other.to_str().unwrap(), "--resume", "s.json", "--out-dir", "b"], tmp.path());
    assert_eq!(code(&out), 2);
    let out = irdp(&["odometer", "-c", path, "--resume", "s.json", "--out-dir", "b"], tmp.path());
    assert_eq!(code(&out), 2);
}
