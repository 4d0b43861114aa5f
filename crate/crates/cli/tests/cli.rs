use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

fn repro(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_repro"))
        .args(args)
        .current_dir(dir)
        .env_remove("REPRO_THREADS")
        .output()
        .expect("binary runs")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

/// Deterministic LCG so fixtures do not depend on the library's generator.
fn fixture() -> TempDir {
    let dir = TempDir::new().unwrap();
    let (n, p) = (40, 8);
    let mut state = 12345u64;
    let mut unif = move || {
        state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        ((state >> 11) as f64 + 0.5) / (1u64 << 53) as f64
    };
    let mut gauss = move || {
        let (a, b) = (unif(), unif());
        (-2.0 * a.ln()).sqrt() * (std::f64::consts::TAU * b).cos()
    };
    let mut xs = String::new();
    let mut ys = String::from("y\n");
    for _ in 0..n {
        let row: Vec<f64> = (0..p).map(|_| gauss()).collect();
        let y = 1.5 * row[0] - 2.0 * row[2] + gauss();
        xs += &row.iter().map(|v| format!("{v:.8}")).collect::<Vec<_>>().join(",");
        xs.push('\n');
        ys += &format!("{y:.8}\n");
    }
    fs::write(dir.path().join("x.csv"), xs).unwrap();
    fs::write(dir.path().join("y.csv"), ys).unwrap();
    dir
}

fn search(dir: &Path, out: &str) -> Value {
    let o = repro(&["search", "--x", "x.csv", "--y", "y.csv", "--d", "60", "--seed", "7", "--out", out], dir);
    assert!(o.status.success(), "{}", stderr(&o));
    serde_json::from_str(&fs::read_to_string(dir.join(out)).unwrap()).unwrap()
}

fn strip_timing(mut v: Value) -> Value {
    v["manifest"].as_object_mut().unwrap().remove("timing");
    v
}

#[test]
fn missing_response_is_a_usage_error() {
    let dir = fixture();
    let o = repro(&["search", "--x", "x.csv"], dir.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("--y"));
}

#[test]
fn ragged_row_is_named() {
    let dir = fixture();
    fs::write(dir.path().join("bad.csv"), "1,2,3\n4,5,6\n7,8\n").unwrap();
    fs::write(dir.path().join("yb.csv"), "1\n2\n3\n").unwrap();
    let o = repro(&["search", "--x", "bad.csv", "--y", "yb.csv", "--d", "5"], dir.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("row 3"), "{}", stderr(&o));
}

#[test]
fn search_is_reproducible_and_carries_a_manifest() {
    let dir = fixture();
    let a = search(dir.path(), "a.json");
    let b = search(dir.path(), "b.json");
    assert_eq!(strip_timing(a.clone()), strip_timing(b));
    let m = &a["manifest"];
    assert_eq!(m["command"], "search");
    assert_eq!(m["seed"], 7);
    assert_eq!(m["inputs"].as_array().unwrap().len(), 2);
    assert_eq!(m["inputs"][0]["sha256"].as_str().unwrap().len(), 64);
    assert!(m["timing"]["wall_time_s"].as_f64().unwrap() >= 0.0);
    let models = a["candidates"]["models"].as_array().unwrap();
    let covers = |s: &Value| [1, 3].iter().all(|j| s.as_array().unwrap().contains(&Value::from(*j)));
    assert!(models.iter().any(covers), "{models:?}");
}

#[test]
fn model_cs_accepts_wrapped_and_bare_candidates() {
    let dir = fixture();
    let wrapped = search(dir.path(), "cand.json");
    fs::write(dir.path().join("bare.json"), wrapped["candidates"].to_string()).unwrap();
    let run = |file: &str| {
        let o = repro(&["model-cs", "--x", "x.csv", "--y", "y.csv", "--candidates", file, "--J", "40"], dir.path());
        assert!(o.status.success(), "{}", stderr(&o));
        let v: Value = serde_json::from_slice(&o.stdout).unwrap();
        v["model_cs"].clone()
    };
    let a = run("cand.json");
    assert_eq!(a, run("bare.json"));
    assert_eq!(a["J"], 40);
    for e in a["entries"].as_array().unwrap() {
        let t = e["tail_prob"].as_f64().unwrap();
        assert!((0.0..=1.0).contains(&t));
        assert_eq!(e["included"].as_bool().unwrap(), t > 0.05);
    }
}

#[test]
fn level_one_is_rejected() {
    let dir = fixture();
    search(dir.path(), "cand.json");
    let o = repro(&["model-cs", "--x", "x.csv", "--y", "y.csv", "--candidates", "cand.json", "--alpha", "1.0"], dir.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("level"));
}

#[test]
fn single_draw_warns() {
    let dir = fixture();
    search(dir.path(), "cand.json");
    let o = repro(&["model-cs", "--x", "x.csv", "--y", "y.csv", "--candidates", "cand.json", "--J", "1"], dir.path());
    assert!(o.status.success());
    assert!(stderr(&o).contains("warning"));
}

#[test]
fn coefficient_outputs() {
    let dir = fixture();
    search(dir.path(), "cand.json");
    let base = ["coef", "--x", "x.csv", "--y", "y.csv", "--candidates", "cand.json"];
    let run = |extra: &[&str]| {
        let args: Vec<&str> = base.iter().chain(extra).copied().collect();
        let o = repro(&args, dir.path());
        assert!(o.status.success(), "{}", stderr(&o));
        serde_json::from_slice::<Value>(&o.stdout).unwrap()
    };

    let v = run(&["--index", "1"]);
    let iv = v["interval"]["intervals"].as_array().unwrap();
    assert!(!iv.is_empty());
    let (lo, hi) = (iv[0][0].as_f64().unwrap(), iv[iv.len() - 1][1].as_f64().unwrap());
    assert!(lo < 1.5 && 1.5 < hi, "[{lo}, {hi}]");
    assert_eq!(v["level"], 0.95);

    let v = run(&["--joint"]);
    assert!(!v["region"]["regions"].as_array().unwrap().is_empty());
    assert!(v["shrunk_proportion"].is_number());

    let v = run(&["--subset", "1,3"]);
    assert_eq!(v["region"]["lambda_set"], serde_json::json!([1, 3]));

    let v = run(&["--functional", "b1 - b3"]);
    let f = &v["functional"]["intervals"]["intervals"];
    assert!(f[0][0].as_f64().unwrap() < 3.5 && 3.5 < f[f.as_array().unwrap().len() - 1][1].as_f64().unwrap());

    let v = run(&["--index", "3", "--alpha1", "0.97", "--alpha2", "0.98", "--J", "30"]);
    assert!((v["level"].as_f64().unwrap() - 0.95).abs() < 1e-12);
    assert!(v["model_cs"]["entries"].is_array());
}

#[test]
fn conflicting_levels_are_rejected() {
    let dir = fixture();
    search(dir.path(), "cand.json");
    let o = repro(
        &["coef", "--x", "x.csv", "--y", "y.csv", "--candidates", "cand.json", "--joint", "--alpha", "0.9", "--alpha1", "0.95", "--alpha2", "0.99"],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("cannot be used with"));
    let o = repro(&["coef", "--x", "x.csv", "--y", "y.csv", "--candidates", "cand.json", "--index", "1", "--joint"], dir.path());
    assert_eq!(o.status.code(), Some(2));
    let o = repro(&["coef", "--x", "x.csv", "--y", "y.csv", "--candidates", "cand.json", "--index", "99"], dir.path());
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn unknown_scenario_lists_choices() {
    let dir = TempDir::new().unwrap();
    let o = repro(&["simulate", "--scenario", "M7"], dir.path());
    assert_eq!(o.status.code(), Some(2));
    let e = stderr(&o);
    assert!(e.contains("M1") && e.contains("M2") && e.contains("M3"), "{e}");
}

#[test]
fn full_scale_warns_before_running() {
    let dir = TempDir::new().unwrap();
    // The invalid override stops the run right after the warning.
    let o = repro(&["simulate", "--scenario", "M1", "--scale", "full", "--reps", "0"], dir.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("warning: full scale"), "{}", stderr(&o));
    let o = repro(&["simulate", "--scenario", "M1", "--scale", "huge"], dir.path());
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn small_simulation_writes_reports() {
    let dir = TempDir::new().unwrap();
    let scenario = serde_json::json!({
        "name": "tiny", "n": 40, "p": 10, "beta": [1.0, -1.0], "corr_decay": 0.5, "sigma": 1.0,
        "reps": 2, "d": 30, "J": 20, "alpha": 0.95, "bootstrap_b": 20, "seed": 5
    });
    fs::write(dir.path().join("tiny.json"), scenario.to_string()).unwrap();
    let o = repro(&["--threads", "1", "simulate", "--scenario", "tiny.json", "--out-dir", "out"], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let csv = fs::read_to_string(dir.path().join("out/report.csv")).unwrap();
    assert!(csv.starts_with("# manifest: report.json\n"));
    let v: Value = serde_json::from_str(&fs::read_to_string(dir.path().join("out/report.json")).unwrap()).unwrap();
    assert_eq!(v["manifest"]["command"], "simulate");
    assert_eq!(v["report"]["replications"].as_array().unwrap().len(), 2);
}
