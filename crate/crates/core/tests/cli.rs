use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

use pavement_xai::cli::{
    EXIT_ARGUMENT, EXIT_EMPTY, EXIT_INSUFFICIENT, EXIT_IO, EXIT_NUMERICAL, EXIT_OK, EXIT_SCHEMA,
    EXIT_USAGE,
};
use pavement_xai::dataset::FEATURES;
use serde_json::Value;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_pavement-xai"))
}

/// Runs the binary with `--quiet`; returns (exit code, stderr).
fn run(args: &[&str]) -> (i32, String) {
    let out = bin().arg("--quiet").args(args).output().expect("spawn");
    (
        out.status.code().expect("exit code"),
        String::from_utf8_lossy(&out.stderr).into_owned(),
    )
}

fn ok(args: &[&str]) {
    let (code, err) = run(args);
    assert_eq!(code, EXIT_OK, "{args:?} failed: {err}");
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn write(path: &Path, text: &str) -> PathBuf {
    fs::write(path, text).unwrap();
    path.to_path_buf()
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn csv_rows(path: &Path) -> Vec<Vec<String>> {
    let mut r = csv::Reader::from_path(path).unwrap();
    r.records()
        .map(|rec| rec.unwrap().iter().map(str::to_string).collect())
        .collect()
}

/// Small synthetic dataset in `dir`, generated through the CLI.
fn synth(dir: &Path, extra: &[&str]) {
    let mut args = vec!["--out", p(dir), "synth-gen"];
    args.extend_from_slice(extra);
    ok(&args);
}

const SMALL_GRIDS: &str = r#"{
  "grids": {
    "ridge": {"alpha": [0.1, 10.0]},
    "lasso": {"alpha": [0.01, 1.0]},
    "decision_tree": {"max_depth": [4, 8], "min_samples_split": [2], "min_samples_leaf": [1, 5]},
    "random_forest": {"n_estimators": [20], "max_depth": [8], "min_samples_split": [2]},
    "gradient_boosting": {"learning_rate": [0.1], "n_estimators": [50], "max_depth": [3], "subsample": [1.0]}
  }
}"#;

/// Records CSV header in canonical column order.
fn header() -> String {
    let mut cols: Vec<&str> = vec!["ROUTE_NAME", "SECTION_ID", "YEAR"];
    cols.extend(FEATURES);
    cols.push("NEXT_YEAR_IRI");
    cols.join(",")
}

/// One record line with the given identifiers and IRI; other features fixed.
fn record(route: &str, section: &str, year: i32, iri: f64, next: f64) -> String {
    format!("{route},{section},{year},90,90,{iri},10,1000,4,east,1,0,{next}")
}

#[test]
fn usage_and_config_errors() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(run(&["frobnicate"]).0, EXIT_USAGE);
    assert_eq!(run(&["--help"]).0, EXIT_OK);
    let bad = write(&dir.path().join("bad.json"), r#"{"sed": 1}"#);
    let (code, err) = run(&["--config", p(&bad), "describe"]);
    assert_eq!(code, EXIT_ARGUMENT);
    assert!(err.contains("sed"), "{err}");
    let (code, _) = run(&["--workers", "0", "describe"]);
    assert_eq!(code, EXIT_ARGUMENT);
}

#[test]
fn empty_config_is_accepted() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(&dir.path().join("empty.json"), "{}");
    let out = dir.path().join("s");
    ok(&["--config", p(&cfg), "--out", p(&out), "synth-gen", "--n-sections", "40"]);
    assert!(out.join("records.csv").exists());
}

#[test]
fn describe_missing_file_is_io_error() {
    let dir = tempfile::tempdir().unwrap();
    let (code, err) = run(&["--out", p(dir.path()), "describe", "--records", "/no/such/file.csv"]);
    assert_eq!(code, EXIT_IO);
    assert!(err.contains("/no/such/file.csv"), "{err}");
}

#[test]
fn describe_headed_empty_csv_is_insufficient() {
    let dir = tempfile::tempdir().unwrap();
    let rec = write(&dir.path().join("r.csv"), &format!("{}\n", header()));
    let (code, _) = run(&["--out", p(dir.path()), "describe", "--records", p(&rec)]);
    assert_eq!(code, EXIT_INSUFFICIENT);
}

#[test]
fn describe_full_size_iri_mean_is_calibrated() {
    let dir = tempfile::tempdir().unwrap();
    synth(dir.path(), &["--n-sections", "10022"]);
    let out = dir.path().join("d");
    ok(&["--out", p(&out), "describe", "--records", p(&dir.path().join("records.csv"))]);

    let rows = csv_rows(&out.join("descriptive_stats.csv"));
    let mut r = csv::Reader::from_path(out.join("descriptive_stats.csv")).unwrap();
    assert_eq!(
        r.headers().unwrap().iter().collect::<Vec<_>>(),
        ["Feature", "Mean", "Std. Dev.", "Min", "25%", "Max"]
    );
    assert_eq!(rows.len(), FEATURES.len());
    let iri = rows.iter().find(|r| r[0] == "TX_IRI_AVERAGE_SCORE").unwrap();
    let mean: f64 = iri[1].parse().unwrap();
    assert!((mean - 100.61).abs() < 2.0, "IRI mean {mean}");
    assert!(rows.iter().any(|r| r[0] == "CLIMATE_ZONES_encoded"));

    let corr = csv_rows(&out.join("correlation.csv"));
    assert_eq!(corr.len(), FEATURES.len());
    for (i, row) in corr.iter().enumerate() {
        assert_eq!(row[i + 1], "1.0000");
    }
}

#[test]
fn flood_analysis_without_events_is_empty_result() {
    let dir = tempfile::tempdir().unwrap();
    synth(dir.path(), &["--n-sections", "60"]);
    let events = write(&dir.path().join("none.csv"), "ROUTE_NAME,FLOOD_YEAR,START_MARKER,END_MARKER\n");
    let (code, err) = run(&[
        "--out",
        p(&dir.path().join("fa")),
        "flood-analysis",
        "--records",
        p(&dir.path().join("records.csv")),
        "--events",
        p(&events),
    ]);
    assert_eq!(code, EXIT_EMPTY, "{err}");
    assert!(err.contains("no qualifying"), "{err}");
}

#[test]
fn flood_analysis_echoes_route_names() {
    let dir = tempfile::tempdir().unwrap();
    let mut text = header();
    text.push('\n');
    for (s, bump) in [("001", 5.0), ("002", 5.0), ("003", 0.0), ("004", 0.0)] {
        let mut iri = 80.0;
        for year in 2010..=2016 {
            let next = iri + 2.0 + if year == 2014 { bump } else { 0.0 };
            text.push_str(&record("FM0481", s, year, iri, next));
            text.push('\n');
            iri = next;
        }
    }
    let rec = write(&dir.path().join("r.csv"), &text);
    let ev = write(
        &dir.path().join("e.csv"),
        "ROUTE_NAME,FLOOD_YEAR,START_MARKER,END_MARKER\nFM0481,2014,001,002\n",
    );
    let out = dir.path().join("fa");
    ok(&["--out", p(&out), "flood-analysis", "--records", p(&rec), "--events", p(&ev)]);

    let rows = csv_rows(&out.join("pre_post_sections.csv"));
    assert_eq!(rows.len(), 2);
    assert!(rows.iter().all(|r| r[0] == "FM0481" && r[2] == "2014"));
    let rates = csv_rows(&out.join("rate_comparison.csv"));
    assert_eq!(rates[0][0], "FM0481");
    let report = read_json(&out.join("flood_analysis.json"));
    let diff = report["flooded_vs_nonflooded"]["mean_diff"].as_f64().unwrap();
    assert!((diff - 5.0).abs() < 1e-9, "{diff}");
    assert!(fs::read_to_string(out.join("flood_analysis.txt")).unwrap().contains("5.00"));
}

#[test]
fn train_all_kinds_on_linear_truth() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(&dir.path().join("c.json"), SMALL_GRIDS);
    synth(dir.path(), &["--n-sections", "150"]);
    // Linear truth: drop the quadratic term.
    let gt = dir.path().join("linear.json");
    let mut spec: Value = serde_json::from_str(SMALL_GRIDS).unwrap();
    spec["synth"] = serde_json::json!({"n_sections": 150, "ground_truth": {
        "intercept": 1.0,
        "weights": {"TX_IRI_AVERAGE_SCORE": 1.0, "TX_TRUCK_AADT_PCT": 0.2},
        "flood_bump": 5.0, "noise_std": 3.0, "interactions": []
    }});
    fs::write(&gt, spec.to_string()).unwrap();
    let data = dir.path().join("lin");
    ok(&["--config", p(&gt), "--out", p(&data), "synth-gen"]);

    let out = dir.path().join("t");
    ok(&[
        "--config",
        p(&cfg),
        "--out",
        p(&out),
        "train",
        "--records",
        p(&data.join("records.csv")),
    ]);
    let rows = csv_rows(&out.join("model_comparison.csv"));
    let names: Vec<&str> = rows.iter().map(|r| r[0].as_str()).collect();
    assert_eq!(names.len(), 6, "{names:?}");
    for kind in ["linear", "ridge", "lasso", "decision_tree", "random_forest", "gradient_boosting"] {
        assert!(out.join("models").join(format!("{kind}.json")).exists(), "{kind}");
        assert!(out.join("cv_results").join(format!("{kind}.json")).exists(), "{kind}");
    }
    assert!(out.join("best_model.json").exists());
    let r2: BTreeMap<&str, f64> = rows.iter().map(|r| (r[0].as_str(), r[3].parse().unwrap())).collect();
    let linear = r2.iter().filter(|(k, _)| k.contains("Linear")).map(|(_, v)| *v).next().unwrap();
    let tree = r2.iter().filter(|(k, _)| k.contains("Decision")).map(|(_, v)| *v).next().unwrap();
    assert!(linear >= tree, "linear {linear} tree {tree}");
}

#[test]
fn train_single_kind_gives_one_row() {
    let dir = tempfile::tempdir().unwrap();
    synth(dir.path(), &["--n-sections", "50"]);
    let cfg = write(&dir.path().join("c.json"), r#"{"models": ["ridge"]}"#);
    let out = dir.path().join("t");
    ok(&[
        "--config",
        p(&cfg),
        "--out",
        p(&out),
        "train",
        "--records",
        p(&dir.path().join("records.csv")),
    ]);
    let rows = csv_rows(&out.join("model_comparison.csv"));
    assert_eq!(rows.len(), 1);
    assert_eq!(rows[0][0], "Ridge Regression (Ridge)");
    let report = read_json(&out.join("model_comparison.json"));
    assert_eq!(report["models"].as_array().unwrap().len(), 1);
}

#[test]
fn train_degenerate_target_fails() {
    let dir = tempfile::tempdir().unwrap();
    let mut text = header();
    text.push('\n');
    for s in 0..20 {
        for year in 2010..2015 {
            text.push_str(&record("R1", &format!("{s:03}"), year, 80.0 + s as f64, 100.0));
            text.push('\n');
        }
    }
    let rec = write(&dir.path().join("r.csv"), &text);
    let (code, err) = run(&["--out", p(dir.path()), "train", "--model", "linear", "--records", p(&rec)]);
    assert_eq!(code, EXIT_NUMERICAL, "{err}");
}

#[test]
fn explain_schema_mismatch_names_columns() {
    let dir = tempfile::tempdir().unwrap();
    synth(dir.path(), &["--n-sections", "200"]);
    let rec = dir.path().join("records.csv");
    let out = dir.path().join("t");
    ok(&["--out", p(&out), "train", "--model", "linear", "--records", p(&rec)]);

    // Drop one feature column from the records.
    let mut r = csv::Reader::from_path(&rec).unwrap();
    let head = r.headers().unwrap().clone();
    let drop = head.iter().position(|h| h == "TX_TRUCK_AADT_PCT").unwrap();
    let mut w = csv::Writer::from_path(dir.path().join("cut.csv")).unwrap();
    let keep = |rec: &csv::StringRecord| -> Vec<String> {
        rec.iter().enumerate().filter(|(i, _)| *i != drop).map(|(_, v)| v.to_string()).collect()
    };
    w.write_record(keep(&head)).unwrap();
    for row in r.records() {
        w.write_record(keep(&row.unwrap())).unwrap();
    }
    w.flush().unwrap();
    drop_writer(w);

    let (code, err) = run(&[
        "--out",
        p(&dir.path().join("x")),
        "explain",
        "--records",
        p(&dir.path().join("cut.csv")),
        "--model",
        p(&out.join("best_model.json")),
    ]);
    assert_eq!(code, EXIT_SCHEMA, "{err}");
    assert!(err.contains("TX_TRUCK_AADT_PCT"), "{err}");
}

fn drop_writer<W: std::io::Write>(w: csv::Writer<W>) {
    drop(w);
}

#[test]
fn explain_flooded_instance_reads_bump() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        &dir.path().join("c.json"),
        r#"{"synth": {"n_sections": 200, "ground_truth": {
            "intercept": 0.5,
            "weights": {"TX_IRI_AVERAGE_SCORE": 1.0, "TX_TRUCK_AADT_PCT": 0.05},
            "flood_bump": 5.0, "noise_std": 0.0, "interactions": []}}}"#,
    );
    ok(&["--config", p(&cfg), "--out", p(dir.path()), "synth-gen"]);
    let rec = dir.path().join("records.csv");
    let out = dir.path().join("t");
    ok(&["--out", p(&out), "train", "--model", "linear", "--records", p(&rec)]);

    let ev = csv_rows(&dir.path().join("flood_events.csv"));
    let key = format!("key:{}/{}/{}", ev[0][0], ev[0][2], ev[0][1]);
    let x = dir.path().join("x");
    ok(&[
        "--out",
        p(&x),
        "explain",
        "--records",
        p(&rec),
        "--model",
        p(&out.join("best_model.json")),
        "--instances",
        &key,
        "--lime-continuous",
    ]);
    let names: Vec<String> = {
        let mut v: Vec<String> = fs::read_dir(&x)
            .unwrap()
            .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
            .collect();
        v.sort();
        v
    };
    assert_eq!(
        names,
        ["lime_bars.csv", "lime_explanations.json", "shap_beeswarm.csv", "shap_summary.json", "shap_values.csv"]
    );

    let lime = read_json(&x.join("lime_explanations.json"));
    let flood = lime[0]["contributions"]
        .as_array()
        .unwrap()
        .iter()
        .find(|c| c["feature"] == "Flood")
        .expect("Flood among LIME contributions");
    let w = flood["weight"].as_f64().unwrap();
    assert!((w - 5.0).abs() < 0.5, "LIME Flood weight {w}");
    assert_eq!(flood["condition"], "Flood = 1");

    let mut r = csv::Reader::from_path(x.join("shap_values.csv")).unwrap();
    let col = r.headers().unwrap().iter().position(|h| h == "Flood").unwrap();
    let row = r.records().next().unwrap().unwrap();
    let phi: f64 = row[col].parse().unwrap();
    assert!(phi > 0.0, "SHAP Flood {phi}");
}

fn snapshot(dir: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let path = e.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                out.insert(path.strip_prefix(dir).unwrap().to_path_buf(), fs::read(&path).unwrap());
            }
        }
    }
    out
}

/// Runs every command into `root` with the given worker count.
fn full_run(root: &Path, cfg: &Path, workers: &str) {
    let common = ["--config", p(cfg), "--seed", "7", "--workers", workers];
    let data = root.join("data");
    let rec = data.join("records.csv");
    let go = |out: &Path, rest: &[&str]| {
        let mut a: Vec<&str> = common.to_vec();
        a.extend(["--out", p(out)]);
        a.extend_from_slice(rest);
        ok(&a);
    };
    go(&data, &["synth-gen", "--n-sections", "120"]);
    go(&root.join("describe"), &["describe", "--records", p(&rec)]);
    go(
        &root.join("flood"),
        &["flood-analysis", "--records", p(&rec), "--events", p(&data.join("flood_events.csv"))],
    );
    go(&root.join("train"), &["train", "--records", p(&rec)]);
    go(
        &root.join("explain"),
        &[
            "explain",
            "--records",
            p(&rec),
            "--model",
            p(&root.join("train").join("best_model.json")),
            "--instances",
            "sample:5",
        ],
    );
    go(
        &root.join("sampled"),
        &[
            "explain",
            "--records",
            p(&rec),
            "--model",
            p(&root.join("train").join("models").join("random_forest.json")),
            "--instances",
            "sample:3",
            "--shap-mode",
            "sampled",
        ],
    );
}

#[test]
fn every_command_is_byte_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg: Value = serde_json::from_str(SMALL_GRIDS).unwrap();
    cfg["shap"] = serde_json::json!({"background_size": 20, "n_permutations": 50});
    cfg["lime"] = serde_json::json!({"n_samples": 500});
    let cfg_path = write(&dir.path().join("c.json"), &cfg.to_string());

    let a = dir.path().join("a");
    let b = dir.path().join("b");
    let c = dir.path().join("c");
    full_run(&a, &cfg_path, "1");
    full_run(&b, &cfg_path, "1");
    full_run(&c, &cfg_path, "3");
    let (sa, sb, sc) = (snapshot(&a), snapshot(&b), snapshot(&c));
    assert!(sa.len() >= 25, "{:?}", sa.keys().collect::<Vec<_>>());
    assert!(sa.keys().all(|k| !k.to_string_lossy().ends_with(".tmp")));
    for (k, v) in &sa {
        assert!(sb.get(k) == Some(v), "{} differs between re-runs", k.display());
        assert!(sc.get(k) == Some(v), "{} differs across worker counts", k.display());
    }
    assert_eq!(sa.len(), sb.len());
    assert_eq!(sa.len(), sc.len());
}

#[test]
fn seed_changes_outputs() {
    let dir = tempfile::tempdir().unwrap();
    synth(&dir.path().join("a"), &["--n-sections", "30"]);
    ok(&["--seed", "9", "--out", p(&dir.path().join("b")), "synth-gen", "--n-sections", "30"]);
    assert_ne!(
        fs::read(dir.path().join("a/records.csv")).unwrap(),
        fs::read(dir.path().join("b/records.csv")).unwrap()
    );
}
