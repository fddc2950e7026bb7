use std::collections::{HashMap, HashSet};
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn evalkit(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_evalkit")).args(args).output().expect("spawn evalkit")
}

fn json_ok(args: &[&str]) -> Value {
    let out = evalkit(args);
    assert!(out.status.success(), "{args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).unwrap()
}

fn data(name: &str) -> String {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("data").join(name).display().to_string()
}

fn write(dir: &Path, name: &str, body: &str) -> String {
    let p = dir.join(name);
    std::fs::write(&p, body).unwrap();
    p.display().to_string()
}

fn predictions(rows: &[(&str, &str, usize)]) -> String {
    let mut s = String::from("label,predicted\n");
    for (t, p, n) in rows {
        for _ in 0..*n {
            s += &format!("{t},{p}\n");
        }
    }
    s
}

#[test]
fn metrics_on_screening_counts() {
    let dir = tempfile::tempdir().unwrap();
    let f = write(dir.path(), "t.csv", &predictions(&[("1", "1", 23), ("1", "0", 12), ("0", "1", 5), ("0", "0", 116)]));
    let r = json_ok(&["metrics", "--input", &f]);
    // Positive defaults to the last label, "1".
    assert_eq!(r["positive"], "1");
    assert_eq!(r["confusion"]["counts"], serde_json::json!([[116, 5], [12, 23]]));
    let b = &r["binary"];
    for (k, v) in [("accuracy", 0.891), ("sensitivity", 0.657), ("specificity", 0.959), ("ppv", 0.821), ("npv", 0.906)] {
        assert!((b[k].as_f64().unwrap() - v).abs() < 5e-4, "{k}");
    }
    let ci = &r["intervals"]["values"]["sensitivity"];
    assert!(ci["lower"].as_f64().unwrap() < 0.657 && ci["upper"].as_f64().unwrap() > 0.657);
}

#[test]
fn metrics_on_three_classes() {
    let dir = tempfile::tempdir().unwrap();
    let (h, a, b) = ("healthy", "A", "B");
    let f = write(dir.path(), "t.csv", &predictions(&[(h, h, 95), (h, a, 2), (h, b, 3), (a, h, 9), (a, a, 11), (a, b, 19), (b, h, 11), (b, a, 15), (b, b, 15)]));
    let r = json_ok(&["metrics", "--input", &f]);
    assert!(r["binary"].is_null());
    let classes: Vec<String> = serde_json::from_value(r["classes"].clone()).unwrap();
    let recall = r["multiclass"]["recall"].as_array().unwrap();
    let got: HashMap<&str, f64> = classes.iter().map(|c| c.as_str()).zip(recall.iter().map(|v| v.as_f64().unwrap())).collect();
    assert_eq!(got["healthy"], 0.95);
    assert_eq!(got["A"], 11.0 / 39.0);
    assert_eq!(got["B"], 15.0 / 41.0);
}

#[test]
fn empty_and_malformed_inputs_fail() {
    let dir = tempfile::tempdir().unwrap();
    let empty = write(dir.path(), "empty.csv", "");
    let out = evalkit(&["metrics", "--input", &empty]);
    assert_eq!(out.status.code(), Some(1));
    assert!(!out.stderr.is_empty());

    let header_only = write(dir.path(), "h.csv", "label,predicted\n");
    assert_eq!(evalkit(&["metrics", "--input", &header_only]).status.code(), Some(1));

    let bad = write(dir.path(), "bad.csv", "label,score\n1,0.3\n0,oops\n");
    let out = evalkit(&["roc", "--input", &bad]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("oops"));

    assert_eq!(evalkit(&["metrics", "--bogus"]).status.code(), Some(2));
}

#[test]
fn roc_on_four_records_and_inverted() {
    let dir = tempfile::tempdir().unwrap();
    let f = write(dir.path(), "s.csv", "label,score\n1,0.9\n1,0.4\n0,0.6\n0,0.1\n");
    let r = json_ok(&["roc", "--input", &f]);
    assert_eq!(r["auc"], 0.75);
    assert_eq!(r["thresholds"]["max_youden"]["objective"], 0.5);
    let r = json_ok(&["roc", "--input", &f, "--invert-scores"]);
    assert_eq!(r["auc"], 0.25);
}

#[test]
fn roc_writes_points_and_a_sidecar() {
    let dir = tempfile::tempdir().unwrap();
    let f = write(dir.path(), "s.csv", "label,score\n1,0.9\n1,0.4\n0,0.6\n0,0.1\n");
    let points = dir.path().join("points.csv");
    json_ok(&["roc", "--input", &f, "--points", points.to_str().unwrap()]);
    let body = std::fs::read_to_string(&points).unwrap();
    assert!(body.lines().count() >= 5);
}

#[test]
fn perfect_separation_has_a_degenerate_interval() {
    let dir = tempfile::tempdir().unwrap();
    let mut body = String::from("label,score\n");
    for i in 0..20 {
        body += &format!("{},{}\n", i % 2, (i % 2) as f64 + i as f64 * 0.01);
    }
    let f = write(dir.path(), "s.csv", &body);
    let r = json_ok(&["roc", "--input", &f]);
    assert_eq!(r["auc"], 1.0);
    assert_eq!(r["delong_ci"]["lower"], 1.0);
    assert_eq!(r["delong_ci"]["upper"], 1.0);
}

#[test]
fn grouped_cv_keeps_subjects_together() {
    let r = json_ok(&["cv", "--input", &data("subjects.csv"), "--group-col", "subject", "--seed", "3", "--k", "4"]);
    let subjects: Vec<String> = {
        let mut rdr = csv::Reader::from_path(data("subjects.csv")).unwrap();
        rdr.records().map(|r| r.unwrap()[3].to_string()).collect()
    };
    for f in r["plan"]["folds"].as_array().unwrap() {
        let idx = |k: &str| -> Vec<usize> { serde_json::from_value(f[k].clone()).unwrap() };
        let train: HashSet<&String> = idx("train").iter().map(|&i| &subjects[i]).collect();
        assert!(idx("test").iter().all(|&i| !train.contains(&subjects[i])));
    }
    assert_eq!(r["plan"]["scheme"]["grouped"], true);
    assert!(r["failed_folds"].as_array().unwrap().is_empty());
}

#[test]
fn many_repeats_warn() {
    let out = evalkit(&["cv", "--input", &data("two_gaussians.csv"), "--seed", "1", "--repeats", "11"]);
    assert!(out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("11 repeats"));
    let r: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!(!r["warnings"].as_array().unwrap().is_empty());
}

#[test]
fn cv_accuracy_is_near_the_bayes_rate() {
    let r = json_ok(&["cv", "--input", &data("two_gaussians.csv"), "--seed", "5", "--k", "10"]);
    let acc = r["aggregate"]["accuracy"]["mean"].as_f64().unwrap();
    assert!((acc - 0.9).abs() < 0.05, "{acc}");
}

#[test]
fn randomized_commands_need_a_seed() {
    let out = evalkit(&["cv", "--input", &data("two_gaussians.csv")]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("seed"));
    assert_eq!(evalkit(&["simulate", "fig4"]).status.code(), Some(1));
}

#[test]
fn unsafe_peeking_is_marked_invalid() {
    let dir = tempfile::tempdir().unwrap();
    let out_path = dir.path().join("r.json");
    let out = evalkit(&[
        "cv", "--input", &data("two_gaussians.csv"), "--seed", "1", "--select-k", "1", "--unsafe-peeking",
        "--out", out_path.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(3));
    let r: Value = serde_json::from_str(&std::fs::read_to_string(out_path).unwrap()).unwrap();
    assert_eq!(r["invalid"], true);
    assert!(r["watermark"].as_str().unwrap().starts_with("INVALID"));
}

#[test]
fn comparing_identical_classifiers_finds_nothing() {
    let dir = tempfile::tempdir().unwrap();
    let p = write(dir.path(), "p.csv", &predictions(&[("1", "1", 30), ("1", "0", 10), ("0", "0", 25), ("0", "1", 5)]));
    let r = json_ok(&["compare", "--test", "mcnemar", "--a", &p, "--b", &p]);
    assert_eq!(r["p_value"], 1.0);

    let s = write(dir.path(), "s.csv", "label,score\n1,0.9\n1,0.4\n0,0.6\n0,0.1\n1,0.7\n0,0.2\n");
    let r = json_ok(&["compare", "--test", "delong", "--a", &s, "--b", &s]);
    assert_eq!(r["degenerate"], true);
    assert_eq!(r["p_value"], 1.0);

    let d = write(dir.path(), "d.csv", "repeat,difference\n0,0\n0,0\n0,0\n0,0\n0,0\n");
    let r = json_ok(&["compare", "--test", "corrected-resampled-t", "--diffs", &d, "--n-train", "80", "--n-test", "20"]);
    assert_eq!(r["p_value"], 1.0);
    assert_eq!(r["degenerate"], true);
}

#[test]
fn mismatched_samples_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let a = write(dir.path(), "a.csv", "label,predicted\n1,1\n0,0\n1,0\n");
    let b = write(dir.path(), "b.csv", "label,predicted\n0,1\n0,0\n1,0\n");
    let out = evalkit(&["compare", "--test", "mcnemar", "--a", &a, "--b", &b]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn compare_two_cv_reports() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.json");
    let b = dir.path().join("b.json");
    let common = ["cv", "--input", &data("two_gaussians.csv"), "--seed", "9", "--repeats", "3"];
    assert!(evalkit(&[&common[..], &["--out", a.to_str().unwrap()]].concat()).status.success());
    assert!(evalkit(&[&common[..], &["--select-k", "1", "--out", b.to_str().unwrap()]].concat()).status.success());
    let r = json_ok(&["compare", "--test", "corrected-repeated-kfold-t", "--a", a.to_str().unwrap(), "--b", b.to_str().unwrap()]);
    let p = r["p_value"].as_f64().unwrap();
    assert!((0.0..=1.0).contains(&p));
}

fn fig4(dir: &Path, name: &str, extra: &[&str]) -> PathBuf {
    let out = dir.join(name);
    let args = [&["simulate", "fig4", "--seed", "7", "--dims", "1,3", "--sizes", "50,100", "--repetitions", "10", "--test-size", "2000", "--out", out.to_str().unwrap()][..], extra].concat();
    let o = evalkit(&args);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    out
}

#[test]
fn fig4_is_reproducible_from_the_seed() {
    let dir = tempfile::tempdir().unwrap();
    let a = std::fs::read(fig4(dir.path(), "a.csv", &[])).unwrap();
    let b = std::fs::read(fig4(dir.path(), "b.csv", &[])).unwrap();
    assert_eq!(a, b);
    let text = String::from_utf8(a).unwrap();
    assert!(text.starts_with("dimension,train_size,estimator,mae,bias,variance"));
    assert_eq!(text.lines().count(), 1 + 2 * 2 * 2);
    assert!(dir.path().join("a.csv.manifest.json").exists());
}

#[test]
fn paper_scale_sets_the_large_configuration() {
    let dir = tempfile::tempdir().unwrap();
    // Override the expensive knobs and check the rest resolved to the large configuration.
    let out = dir.path().join("p.csv");
    let o = evalkit(&["simulate", "fig4", "--paper-scale", "--seed", "1", "--dims", "1", "--sizes", "50", "--repetitions", "2", "--out", out.to_str().unwrap()]);
    assert!(o.status.success());
    let m: Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("p.csv.manifest.json")).unwrap()).unwrap();
    assert_eq!(m["config"]["resolved"]["test_size"], 1_000_000);
    assert_eq!(m["config"]["args"]["paper_scale"], true);
}

#[test]
fn replay_reproduces_json_and_csv_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let report = dir.path().join("cv.json");
    assert!(evalkit(&["cv", "--input", &data("two_gaussians.csv"), "--seed", "4", "--out", report.to_str().unwrap()]).status.success());
    let o = evalkit(&["replay", report.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));

    let csv = fig4(dir.path(), "f.csv", &[]);
    let sidecar = format!("{}.manifest.json", csv.display());
    let o = evalkit(&["replay", &sidecar]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn replay_refuses_changed_inputs() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("in.csv");
    std::fs::copy(data("two_gaussians.csv"), &input).unwrap();
    let report = dir.path().join("cv.json");
    assert!(evalkit(&["cv", "--input", input.to_str().unwrap(), "--seed", "4", "--out", report.to_str().unwrap()]).status.success());
    std::fs::write(&input, "x0,label\n1,0\n2,1\n").unwrap();
    let o = evalkit(&["replay", report.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("changed"));
}

#[test]
fn bootstrap_reports_the_632_blend() {
    let r = json_ok(&["bootstrap", "--input", &data("two_gaussians.csv"), "--seed", "2", "--replicates", "30"]);
    let (resub, oob, e) = (r["resubstitution_error"].as_f64().unwrap(), r["oob_error"].as_f64().unwrap(), r["estimate_632"].as_f64().unwrap());
    assert_eq!(e, 0.368 * resub + 0.632 * oob);
}

#[test]
fn nested_cv_with_a_feature_grid() {
    let r = json_ok(&["nested-cv", "--input", &data("two_gaussians.csv"), "--seed", "3", "--grid-select-k", "1,2", "--inner-k", "3"]);
    for f in r["folds"].as_array().unwrap() {
        assert!(f["selected"].is_string());
    }
}
