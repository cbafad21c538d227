use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn besteffort(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_besteffort"))
        .args(args)
        .arg("--out")
        .arg(out)
        // Shrink training so a full pipeline runs in seconds.
        .env("BESTEFFORT_TRAINING__TOTAL_ITERATIONS", "400")
        .env("BESTEFFORT_TRAINING__WARMUP", "64")
        .env("BESTEFFORT_TRAINING__BATCH_SIZE", "32")
        .env("BESTEFFORT_TRAINING__HIDDEN", "32")
        .env("BESTEFFORT_TRAINING__LOG_EVERY", "100")
        .output()
        .expect("binary runs")
}

fn ok(out: &Output) {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn static_eval_writes_metrics() {
    let dir = tempfile::tempdir().unwrap();
    let out = besteffort(&["eval", "--policy", "static:2", "--scenario", "stable", "--trials", "1"], dir.path());
    ok(&out);
    let csv = fs::read_to_string(dir.path().join("metrics-stable-sweep-static2-0.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("request_index,arrival_ms,task_id,tier_id,reward,realized_ms_per_token,segment_rate"));
    assert!(lines.all(|l| l.split(',').nth(3) == Some("2")));
    assert!(dir.path().join("summary-stable-sweep-static2.csv").exists());
}

#[test]
fn usage_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(besteffort(&["frobnicate"], dir.path()).status.code(), Some(2));
    assert_eq!(besteffort(&["eval", "--policy", "static:7"], dir.path()).status.code(), Some(2));
    assert_eq!(besteffort(&["gen", "--scenario", "no-such-thing"], dir.path()).status.code(), Some(2));

    let bad = dir.path().join("bad.toml");
    let text = fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/../../configs/default.toml")).unwrap();
    fs::write(&bad, text.replace("[0.45, 0.78, 1.0]", "[0.45, 0.78, 1.0, 1.0, 1.0]").replace("40.0, \"hard\"]", "-1.0, \"hard\"]")).unwrap();
    let out = besteffort(&["gen", "--config", bad.to_str().unwrap()], dir.path());
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("reward_matrix") && err.contains("deadline"), "{err}");
}

#[test]
fn missing_checkpoint_is_runtime_failure() {
    let dir = tempfile::tempdir().unwrap();
    let out = besteffort(&["eval", "--policy", "/nonexistent/p.ckpt"], dir.path());
    assert_eq!(out.status.code(), Some(1));
}

fn pipeline(dir: &Path) -> Vec<u8> {
    ok(&besteffort(&["gen", "--seed", "5", "--scenario", "unpredictable-2", "--trials", "1"], dir));
    ok(&besteffort(&["train", "--config", "default", "--seed", "5"], dir));
    let ckpt = dir.join("policy.ckpt");
    assert!(ckpt.exists());
    let trace = dir.join("trace-unpredictable-2-0.csv");
    ok(&besteffort(
        &[
            "eval",
            "--seed",
            "5",
            "--scenario",
            "unpredictable-2",
            "--policy",
            ckpt.to_str().unwrap(),
            "--trace",
            trace.to_str().unwrap(),
        ],
        dir,
    ));
    fs::read(dir.join("metrics-unpredictable-2-policy-0.csv")).unwrap()
}

#[test]
fn pipeline_is_deterministic() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let first = pipeline(a.path());
    assert!(first.len() > 1000);
    assert_eq!(first, pipeline(b.path()));
    assert_eq!(fs::read(a.path().join("policy_log.csv")).unwrap(), fs::read(b.path().join("policy_log.csv")).unwrap());
}

#[test]
fn finetune_and_report() {
    let dir = tempfile::tempdir().unwrap();
    ok(&besteffort(&["train"], dir.path()));
    let ckpt = dir.path().join("policy.ckpt");
    ok(&besteffort(&["finetune", "--policy", ckpt.to_str().unwrap(), "--iterations", "200"], dir.path()));
    assert!(dir.path().join("finetuned.ckpt").exists());
    ok(&besteffort(
        &["report", "--policy", ckpt.to_str().unwrap(), "--scenario", "single-task-copa", "--trials", "2"],
        dir.path(),
    ));
    let report = fs::read_to_string(dir.path().join("report-single-task-copa.csv")).unwrap();
    for label in ["policy", "static:0", "static:1", "static:2"] {
        assert!(report.lines().any(|l| l.starts_with(&format!("{label},riemann_usage,COPA/"))), "{label}");
    }
}
