//! Black-box tests of the binary: exit codes, stream discipline, seed
//! policy, config precedence, and dataset determinism.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_imu-auth"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

/// Every file under `dir`, relative path -> contents.
fn dir_contents(dir: &Path) -> Vec<(String, Vec<u8>)> {
    fn walk(root: &Path, dir: &Path, out: &mut Vec<(String, Vec<u8>)>) {
        let mut entries: Vec<_> =
            fs::read_dir(dir).unwrap().map(|e| e.unwrap().path()).collect();
        entries.sort();
        for path in entries {
            if path.is_dir() {
                walk(root, &path, out);
            } else {
                let rel = path.strip_prefix(root).unwrap().to_string_lossy().into_owned();
                out.push((rel, fs::read(&path).unwrap()));
            }
        }
    }
    let mut out = Vec::new();
    walk(dir, dir, &mut out);
    out
}

fn assert_dirs_identical(a: &Path, b: &Path) {
    let ca = dir_contents(a);
    let cb = dir_contents(b);
    assert_eq!(
        ca.iter().map(|(n, _)| n).collect::<Vec<_>>(),
        cb.iter().map(|(n, _)| n).collect::<Vec<_>>(),
        "file lists differ"
    );
    for ((name, da), (_, db)) in ca.iter().zip(&cb) {
        assert_eq!(da, db, "{name} differs between runs");
    }
}

#[test]
fn help_and_version_exit_zero() {
    for args in [&["--help"][..], &["--version"][..], &["synth", "--help"][..]] {
        let out = run(args);
        assert_eq!(out.status.code(), Some(0), "{args:?}");
        assert!(!stdout(&out).is_empty(), "{args:?} help goes to stdout");
    }
}

#[test]
fn bad_usage_exits_one_on_stderr() {
    for args in [
        &["frobnicate"][..],
        &["plan", "--no-such-flag"][..],
        &["plan"][..],                               // missing --target-far
        &["plan", "--target-far", "2/1"][..],        // rate out of range
        &["plan", "--target-far", "1/50000", "--attempts", "3"][..], // --attempts without --users
    ] {
        let out = run(args);
        assert_eq!(out.status.code(), Some(1), "{args:?}");
        assert!(!stderr(&out).is_empty(), "{args:?} complains on stderr");
    }
}

#[test]
fn missing_data_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nope");
    let out = run(&[
        "preprocess",
        "patterns",
        "--data",
        missing.to_str().unwrap(),
        "--out",
        dir.path().join("w").to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(!stderr(&out).is_empty());

    let out = run(&["report", missing.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn plan_prints_pinned_study_sizes() {
    let out = run(&["plan", "--target-far", "1/50000", "--tar", "0.9", "--format", "csv"]);
    assert_eq!(out.status.code(), Some(0));
    let text = stdout(&out);
    assert!(text.contains("genuine_comparisons,300"), "{text}");
    assert!(text.contains("impostor_comparisons,1500000"), "{text}");

    let out = run(&[
        "plan", "--target-far", "1/50000", "--users", "90", "--attempts", "3", "--format", "csv",
    ]);
    let text = stdout(&out);
    assert!(text.contains("attempts_per_user_for_impostor_budget,188"), "{text}");
    assert!(text.contains("theoretical_far_floor,1/24030"), "{text}");
}

#[test]
fn randomized_subcommands_refuse_to_run_without_a_seed() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("d");
    for args in [
        vec!["synth", "specific", "--out", out_dir.to_str().unwrap()],
        vec!["train", "patterns", "--windows", "x", "--out", "y"],
        vec!["train", "baseline", "--features", "x", "--out", "y"],
        vec!["finetune", "--baseline", "x", "--features", "y", "--target", "u", "--out", "z"],
        vec!["final-test", "--finetune", "x"],
    ] {
        let out = run(&args);
        assert_eq!(out.status.code(), Some(1), "{args:?}");
        assert!(stderr(&out).contains("seed"), "{args:?}: {}", stderr(&out));
    }
}

#[test]
fn config_file_supplies_defaults_and_flags_win() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.conf");
    fs::write(&cfg, "seed = 5\nusers = 3\nlifts-per-location = 1\n").unwrap();

    // All knobs from the file.
    let d1 = dir.path().join("d1");
    let out = bin()
        .args(["synth", "specific", "--config", cfg.to_str().unwrap()])
        .args(["--out", d1.to_str().unwrap()])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let manifest = fs::read_to_string(d1.join("manifest.json")).unwrap();
    assert_eq!(manifest.matches("user_id").count(), 3);

    // The flag overrides the file's user count; the seed still comes
    // from the file.
    let d2 = dir.path().join("d2");
    let out = bin()
        .args(["synth", "specific", "--config", cfg.to_str().unwrap(), "--users", "2"])
        .args(["--out", d2.to_str().unwrap()])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let manifest = fs::read_to_string(d2.join("manifest.json")).unwrap();
    assert_eq!(manifest.matches("user_id").count(), 2);

    let out = run(&["synth", "--config", "/no/such/file", "specific", "--out", "x", "--seed", "1"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn same_seed_synthesizes_byte_identical_datasets() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b, c) = (dir.path().join("a"), dir.path().join("b"), dir.path().join("c"));
    for out_dir in [&a, &b] {
        let out = run(&[
            "synth", "specific", "--users", "12", "--seed", "7",
            "--lifts-per-location", "1", "--out", out_dir.to_str().unwrap(),
        ]);
        assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    }
    assert_dirs_identical(&a, &b);

    let out = run(&[
        "synth", "specific", "--users", "12", "--seed", "8",
        "--lifts-per-location", "1", "--out", c.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0));
    let ca = dir_contents(&a);
    let cc = dir_contents(&c);
    assert!(
        ca.iter().zip(&cc).any(|((_, da), (_, dc))| da != dc),
        "different seeds must change the data"
    );
}

#[test]
fn thread_override_is_validated_and_changes_nothing() {
    let out = bin()
        .env("IMU_AUTH_THREADS", "zero?")
        .args(["plan", "--target-far", "1/50000"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("IMU_AUTH_THREADS"));

    // A preprocessing fan-out across workers writes the same bytes.
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    let out = run(&[
        "synth", "specific", "--users", "3", "--seed", "2",
        "--lifts-per-location", "2", "--out", data.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let (w1, w2) = (dir.path().join("w1"), dir.path().join("w2"));
    for (threads, out_dir) in [("1", &w1), ("3", &w2)] {
        let out = bin()
            .env("IMU_AUTH_THREADS", threads)
            .args(["preprocess", "verify", "--data", data.to_str().unwrap()])
            .args(["--out", out_dir.to_str().unwrap()])
            .output()
            .unwrap();
        assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    }
    assert_dirs_identical(&w1, &w2);
}

#[test]
fn report_text_and_csv_agree_and_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let record = serde_json::json!({
        "target": "user03",
        "tar": 0.9,
        "draws": 90,
        "seed": 4,
        "result": {
            "far_mean": 0.0123,
            "far_std": 0.0041,
            "threshold": 0.63,
            "genuine_count": 90,
            "pool_size": 300,
            "iterations": 5000
        }
    });
    let path = dir.path().join("final_test.json");
    fs::write(&path, serde_json::to_string_pretty(&record).unwrap()).unwrap();

    let text = stdout(&run(&["report", path.to_str().unwrap()]));
    assert!(text.contains("user03"));
    assert!(text.contains("1.23% ± 0.41%"));

    let csv = stdout(&run(&["report", path.to_str().unwrap(), "--format", "csv"]));
    let header = csv.lines().next().unwrap();
    assert_eq!(header, "user,far_mean,far_std,far_label,iterations,pool");
    assert!(csv.lines().any(|l| l.starts_with("user03,0.0123,0.0041,")), "{csv}");
}
