use std::path::Path;
use std::process::{Command, Output};

fn workpulse(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_workpulse"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout_json(out: &Output) -> serde_json::Value {
    assert!(
        out.status.success(),
        "exit {:?}: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stderr)
    );
    serde_json::from_slice(&out.stdout).expect("json on stdout")
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(workpulse(dir.path(), &["--help"]).status.code(), Some(0));
    assert_eq!(workpulse(dir.path(), &["no-such-command"]).status.code(), Some(1));
    assert_eq!(workpulse(dir.path(), &["filter", "-o", "x.jsonl"]).status.code(), Some(1));

    let missing = workpulse(dir.path(), &["filter", "-i", "absent.jsonl", "-o", "x.jsonl"]);
    assert_eq!(missing.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&missing.stderr).contains("absent.jsonl"));

    std::fs::write(dir.path().join("bad.conf"), "nonsense = 1\n").unwrap();
    let bad = workpulse(dir.path(), &["--config", "bad.conf", "stats", "--corpus", "c.jsonl"]);
    assert_eq!(bad.status.code(), Some(1));
    assert_eq!(
        workpulse(dir.path(), &["--zone", "Mars/Olympus", "stats", "--corpus", "c.jsonl"]).status.code(),
        Some(1)
    );
}

#[test]
fn simulated_loop_end_to_end() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    std::fs::write(d.join("wp.conf"), "# small run\nseed = 3\nround1_sample = 200\nfolds = 5\n").unwrap();
    let sim = stdout_json(&workpulse(d, &["simulate", "corpus", "--tweets", "800", "--out", "sim"]));
    assert_eq!(sim["tweets"], 800);

    let f = stdout_json(&workpulse(d, &["filter", "-i", "sim/corpus.jsonl", "-o", "jl.jsonl"]));
    assert!(f["job_likely"].as_u64().unwrap() > 0);

    let common = ["--config", "wp.conf", "round", "--corpus", "sim/corpus.jsonl", "--truth", "sim/truth.csv"];
    let r1 = stdout_json(&workpulse(d, &[&common[..], &["--out", "runs"]].concat()));
    let r2 = stdout_json(&workpulse(
        d,
        &[&common[..], &["--round", "2", "--previous", "runs/round-1", "--out", "runs"]].concat(),
    ));
    assert!(r1["metrics"]["heldout"]["positive"]["f1"].as_f64().unwrap() > 0.0);
    assert!(r2["metrics"]["adjudicated"].as_u64().unwrap() > 0);

    let e = workpulse(
        d,
        &["export", "--rounds", "runs/round-1", "runs/round-2", "--corpus", "sim/corpus.jsonl", "--out", "bundle"],
    );
    assert!(e.status.success(), "{}", String::from_utf8_lossy(&e.stderr));
    for f in workpulse::pipeline::EXPORT_FILES {
        assert!(d.join("bundle").join(f).is_file(), "{f} missing");
    }

    let c = workpulse(
        d,
        &["classify", "--model", "runs/round-2/model.bin", "--corpus", "sim/corpus.jsonl", "-o", "scores.csv"],
    );
    assert!(c.status.success());
    let scores = std::fs::read_to_string(d.join("scores.csv")).unwrap();
    assert_eq!(scores.lines().count(), 801);
    assert!(scores.starts_with("tweet_id,score\n"));

    let ts = workpulse(
        d,
        &["--zone", "America/Chicago", "timeseries", "--corpus", "sim/corpus.jsonl", "--granularity", "weekday", "-o", "wd.csv"],
    );
    assert!(ts.status.success(), "{}", String::from_utf8_lossy(&ts.stderr));
    assert_eq!(std::fs::read_to_string(d.join("wd.csv")).unwrap().lines().count(), 8);

    // the tampered model is caught as a data error
    std::fs::write(d.join("runs/round-2/model.bin"), b"junk").unwrap();
    let bad = workpulse(
        d,
        &["classify", "--model", "runs/round-2/model.bin", "--corpus", "sim/corpus.jsonl", "-o", "s2.csv"],
    );
    assert_eq!(bad.status.code(), Some(2));
}
