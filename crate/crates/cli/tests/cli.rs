use std::path::Path;
use std::process::{Command, Output};

fn das(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_das")).args(args).output().expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn run_small(out: &Path) -> Output {
    das(&[
        "run",
        "--dataset",
        "builtin:fringe_d6",
        "--detector",
        "ecod,pca",
        "--seeds",
        "0,1",
        "--out",
        out.to_str().unwrap(),
    ])
}

#[test]
fn help_and_usage_errors() {
    assert_eq!(code(&das(&["--help"])), 0);
    assert_eq!(code(&das(&["run", "--no-such-flag"])), 1);
    assert_eq!(code(&das(&[])), 1);
}

#[test]
fn run_writes_the_three_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let o = run_small(dir.path());
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    for f in ["report.json", "cells.csv", "aggregates.csv"] {
        assert!(dir.path().join(f).exists(), "{f}");
    }
    let cells = std::fs::read_to_string(dir.path().join("cells.csv")).unwrap();
    // header plus 2 detectors x 2 seeds
    assert_eq!(cells.lines().count(), 5);
    assert!(stdout(&o).contains("wrote 3 file(s)"));
}

#[test]
fn identical_runs_give_identical_cells() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    assert_eq!(code(&run_small(a.path())), 0);
    assert_eq!(code(&run_small(b.path())), 0);
    let read = |d: &Path| std::fs::read(d.join("cells.csv")).unwrap();
    assert_eq!(read(a.path()), read(b.path()));
}

#[test]
fn configuration_problems_exit_with_one() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("o");
    let o = das(&["run", "--dataset", "builtin:nope", "--out", out.to_str().unwrap()]);
    assert_eq!(code(&o), 1);
    let cfg = dir.path().join("bad.cfg");
    std::fs::write(&cfg, "datasets = builtin:local_d6\nwhatever = 3\n").unwrap();
    let o = das(&["run", "--config", cfg.to_str().unwrap()]);
    assert_eq!(code(&o), 1);
    assert!(String::from_utf8_lossy(&o.stderr).contains("whatever"));
    let o = das(&["run", "--dataset", dir.path().join("absent.csv").to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(code(&o), 1);
    assert!(!out.join("cells.csv").exists());
}

#[test]
fn failed_cells_exit_with_two_and_still_write() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("flat.csv");
    let mut text = String::from("a,b,label\n");
    for _ in 0..40 {
        text.push_str("1,2,0\n");
    }
    text.push_str("5,9,1\n6,8,1\n");
    std::fs::write(&csv, text).unwrap();
    let out = dir.path().join("o");
    let o = das(&[
        "run",
        "--dataset",
        csv.to_str().unwrap(),
        "--detector",
        "ocsvm",
        "--seeds",
        "1",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 2, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(out.join("cells.csv").exists());
}

#[test]
fn config_file_drives_a_run() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("exp.cfg");
    std::fs::write(
        &cfg,
        "datasets = builtin:clustered_d6\ndetectors = iforest\nseeds = 1\nout = results\nemit = csv\n",
    )
    .unwrap();
    let o = das(&["run", "--config", cfg.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(dir.path().join("results/cells.csv").exists());
    assert!(!dir.path().join("results/report.json").exists());
}

#[test]
fn prompt_command_prints_and_exports() {
    let o = das(&["prompt", "--detector", "pca"]);
    assert_eq!(code(&o), 0);
    let full = stdout(&o);
    assert!(full.contains("predict_score()"));
    assert!(full.contains("X_train"));
    let generic = stdout(&das(&["prompt", "--detector", "pca", "--generic"]));
    assert!(generic.len() < full.len());
    assert_eq!(full, stdout(&das(&["prompt", "--detector", "pca"])));

    let policy = stdout(&das(&["prompt", "--detector", "ecod", "--policy"]));
    assert!(policy.contains("detector_kind = ecod"));

    let dir = tempfile::tempdir().unwrap();
    let desc = dir.path().join("desc.txt");
    std::fs::write(&desc, "A custom description of the detector.").unwrap();
    let file = dir.path().join("prompt.txt");
    let o = das(&[
        "prompt",
        "--detector",
        "iforest",
        "--description",
        desc.to_str().unwrap(),
        "--out",
        file.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0);
    assert!(std::fs::read_to_string(&file).unwrap().contains("A custom description"));
    assert_eq!(code(&das(&["prompt", "--detector", "knn"])), 1);
}

#[test]
fn policy_files_replace_builtin_policies() {
    let dir = tempfile::tempdir().unwrap();
    let policy = dir.path().join("p.policy");
    let text = stdout(&das(&["prompt", "--detector", "ecod", "--policy"])).replace("seed_percentile = 90", "seed_percentile = 80");
    std::fs::write(&policy, text).unwrap();
    let out = dir.path().join("o");
    let o = das(&[
        "run",
        "--dataset",
        "builtin:local_d6",
        "--detector",
        "ecod",
        "--seeds",
        "1",
        "--policy",
        policy.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let report = std::fs::read_to_string(out.join("report.json")).unwrap();
    assert!(report.contains("\"seed_percentile\": 80.0"));

    std::fs::write(&policy, "detector_kind = ecod\nseed_percentile = 150\n").unwrap();
    let o = das(&["run", "--dataset", "builtin:local_d6", "--policy", policy.to_str().unwrap()]);
    assert_eq!(code(&o), 1);
    assert!(String::from_utf8_lossy(&o.stderr).contains("seed_percentile"));
}

#[test]
fn report_command_checks_aggregates() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&run_small(dir.path())), 0);
    let o = das(&["report", "--from", dir.path().to_str().unwrap()]);
    assert_eq!(code(&o), 0);
    assert!(stdout(&o).contains("aggregates match"));

    let again = dir.path().join("again");
    let o = das(&["report", "--from", dir.path().to_str().unwrap(), "--out", again.to_str().unwrap()]);
    assert_eq!(code(&o), 0);
    assert_eq!(
        std::fs::read(again.join("cells.csv")).unwrap(),
        std::fs::read(dir.path().join("cells.csv")).unwrap()
    );

    // a tampered cell row no longer reproduces the stored aggregates
    let cells_path = dir.path().join("cells.csv");
    let cells = std::fs::read_to_string(&cells_path).unwrap();
    let mut lines: Vec<String> = cells.lines().map(String::from).collect();
    let header: Vec<&str> = lines[0].split(',').collect();
    let col = header.iter().position(|h| *h == "enhanced_auc_pr").unwrap();
    let mut fields: Vec<String> = lines[1].split(',').map(String::from).collect();
    fields[col] = "0.000001".into();
    lines[1] = fields.join(",");
    std::fs::write(&cells_path, lines.join("\n") + "\n").unwrap();
    assert_eq!(code(&das(&["report", "--from", dir.path().to_str().unwrap()])), 1);
    assert_eq!(code(&das(&["report", "--from", dir.path().join("missing").to_str().unwrap()])), 1);
}

#[test]
fn comparison_commands_write_their_variants() {
    let dir = tempfile::tempdir().unwrap();
    let base = [
        "--dataset",
        "builtin:fringe_d6",
        "--detector",
        "iforest",
        "--seeds",
        "1",
    ];
    let cmp = dir.path().join("cmp");
    let mut args = vec!["compare-synthesis"];
    args.extend(base);
    args.extend(["--out", cmp.to_str().unwrap()]);
    assert_eq!(code(&das(&args)), 0);
    let cells = std::fs::read_to_string(cmp.join("cells.csv")).unwrap();
    for tag in ["das", "gaussian", "random_uniform", "smote"] {
        assert!(cells.contains(&format!(",{tag},")), "{tag}");
    }

    let cross = dir.path().join("cross");
    let o = das(&[
        "cross-detector",
        "--dataset",
        "builtin:fringe_d6",
        "--seeds",
        "1",
        "--out",
        cross.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let table = std::fs::read_to_string(cross.join("cross_detector.csv")).unwrap();
    assert_eq!(table.lines().count(), 4);
    assert!(table.starts_with("base,policy_kind,fringe_d6,average"));
}
