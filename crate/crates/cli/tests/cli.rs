use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn ubsb(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ubsb"))
        .args(args)
        .env_remove("UBSB_THREADS")
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited")
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

#[test]
fn generate_is_byte_identical_across_runs_and_threads() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    assert_eq!(code(&ubsb(&["generate", "--n", "1500", "--seed", "4", "--out", p(&a)])), 0);
    assert_eq!(code(&ubsb(&["--threads", "1", "generate", "--n", "1500", "--seed", "4", "--out", p(&b)])), 0);
    assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());
    assert!(dir.path().join("a.csv.manifest.json").exists());

    let c = dir.path().join("c.csv");
    assert_eq!(code(&ubsb(&["generate", "--n", "1500", "--seed", "5", "--out", p(&c)])), 0);
    assert_ne!(fs::read(&a).unwrap(), fs::read(&c).unwrap());
}

#[test]
fn malformed_config_is_a_usage_error_with_no_output() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    fs::write(&cfg, "reference_date = [2024").unwrap();
    let out = dir.path().join("out.csv");
    let o = ubsb(&["generate", "--config", p(&cfg), "--n", "10", "--out", p(&out)]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("configuration"));
    assert_eq!(fs::read_dir(dir.path()).unwrap().count(), 1);
}

#[test]
fn usage_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("d.csv");
    assert_eq!(code(&ubsb(&["generate", "--n", "200", "--out", p(&data)])), 0);
    let out = dir.path().join("abl");
    assert_eq!(code(&ubsb(&["ablate", "--data", p(&data), "--folds", "1", "--out", p(&out)])), 2);
    assert_eq!(code(&ubsb(&["ablate", "--data", p(&data), "--families", "svm", "--out", p(&out)])), 2);
    assert_eq!(code(&ubsb(&["lift", "--oof", "x.json", "--out", "y.json"])), 2);
    assert_eq!(code(&ubsb(&["frobnicate"])), 2);
    assert!(!out.exists());
}

#[test]
fn validate_reports_violations_and_schema_errors() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("d.csv");
    assert_eq!(code(&ubsb(&["generate", "--n", "300", "--seed", "1", "--out", p(&data)])), 0);
    assert_eq!(code(&ubsb(&["validate", "--data", p(&data)])), 0);

    let text = fs::read_to_string(&data).unwrap();
    let header: Vec<&str> = text.lines().next().unwrap().split(',').collect();
    let (home, rent) = (
        header.iter().position(|h| *h == "owns_home").unwrap(),
        header.iter().position(|h| *h == "monthly_rent").unwrap(),
    );
    let mut lines: Vec<String> = text.lines().map(String::from).collect();
    let row = lines.iter().position(|l| l.split(',').nth(home) == Some("true")).unwrap();
    let mut cells: Vec<String> = lines[row].split(',').map(String::from).collect();
    cells[rent] = "500".into();
    lines[row] = cells.join(",");
    let faulty = dir.path().join("faulty.csv");
    fs::write(&faulty, lines.join("\n") + "\n").unwrap();
    let report = dir.path().join("report.json");
    let o = ubsb(&["validate", "--data", p(&faulty), "--out", p(&report)]);
    assert_eq!(code(&o), 1);
    let stdout = String::from_utf8_lossy(&o.stdout);
    assert!(stdout.contains("violations: 1"), "{stdout}");
    assert!(stdout.contains(&format!("row {row} ")), "{stdout}");

    let headless = dir.path().join("headless.csv");
    fs::write(&headless, lines[1..].join("\n")).unwrap();
    assert_eq!(code(&ubsb(&["validate", "--data", p(&headless)])), 1);
}

#[test]
fn ablate_lift_and_replay() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("d.csv");
    assert_eq!(code(&ubsb(&["generate", "--n", "1200", "--seed", "2", "--out", p(&data)])), 0);
    let out = dir.path().join("abl");
    let args = ["ablate", "--data", p(&data), "--families", "gbdt_cat,decision_tree", "--folds", "2", "--trials", "2"];
    let o = ubsb(&[&args[..], &["--seed", "2", "--plots", "--out", p(&out)]].concat());
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    for f in ["metrics.csv", "report.json", "delong.json", "oof_gbdt_cat.json", "roc_decision_tree.svg", "manifest.json"] {
        assert!(out.join(f).exists(), "{f} missing");
    }
    let metrics = fs::read_to_string(out.join("metrics.csv")).unwrap();
    assert_eq!(metrics.lines().next(), Some("Model,AUC,F1,Precision,Recall"));
    assert_eq!(metrics.lines().count(), 5);

    let oof = out.join("oof_gbdt_cat.json");
    let lift = dir.path().join("lift.json");
    let o = ubsb(&["lift", "--oof", p(&oof), "--approval-rate", "100", "--bootstrap", "50", "--out", p(&lift)]);
    assert_eq!(code(&o), 0);
    let report: serde_json::Value = serde_json::from_str(&fs::read_to_string(&lift).unwrap()).unwrap();
    assert_eq!(report["mean_good_approval_delta"], 0.0);

    // Identical Demo and Full scores give zero lift with a degenerate interval.
    let mut same: serde_json::Value = serde_json::from_str(&fs::read_to_string(&oof).unwrap()).unwrap();
    for r in same["records"].as_array_mut().unwrap() {
        r["full_score"] = r["demo_score"].clone();
    }
    for t in same["train_scores"].as_array_mut().unwrap() {
        t["full"] = t["demo"].clone();
    }
    let same_path = dir.path().join("same.json");
    fs::write(&same_path, same.to_string()).unwrap();
    let o = ubsb(&["lift", "--oof", p(&same_path), "--approval-rate", "10", "--bootstrap", "100", "--out", p(&lift)]);
    assert_eq!(code(&o), 0);
    let report: serde_json::Value = serde_json::from_str(&fs::read_to_string(&lift).unwrap()).unwrap();
    for key in ["good_approval_ci", "bad_rejection_ci"] {
        assert_eq!((report[key]["lo"].as_f64(), report[key]["hi"].as_f64()), (Some(0.0), Some(0.0)));
    }

    let before = fs::read(out.join("oof_gbdt_cat.json")).unwrap();
    let manifest = out.join("manifest.json");
    let o = ubsb(&["--threads", "2", "replay", "--manifest", p(&manifest)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(fs::read(out.join("oof_gbdt_cat.json")).unwrap(), before);

    // Replay refuses a changed input.
    fs::write(&data, "id\n").unwrap();
    assert_eq!(code(&ubsb(&["replay", "--manifest", p(&manifest)])), 1);
}

#[test]
fn train_then_explain() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("d.csv");
    assert_eq!(code(&ubsb(&["generate", "--n", "1500", "--seed", "6", "--out", p(&data)])), 0);
    let model = dir.path().join("model.json");
    let o = ubsb(&["train", "--data", p(&data), "--family", "gbdt_lgbm", "--trials", "2", "--seed", "6", "--out", p(&model)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let out = dir.path().join("cf");
    let o = ubsb(&["explain", "--model", p(&model), "--data", p(&data), "--records", "4", "--k", "2", "--out", p(&out)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let sets: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("counterfactuals.json")).unwrap()).unwrap();
    assert_eq!(sets.as_array().unwrap().len(), 4);
    let single: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("single_edit.json")).unwrap()).unwrap();
    let rate = single["rate"].as_f64().unwrap();
    assert!((0.0..=1.0).contains(&rate));
    assert_eq!(code(&ubsb(&["explain", "--model", p(&data), "--data", p(&data), "--out", p(&out)])), 1);
}
