use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn scenario(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../scenarios").join(name)
}

fn spc(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_spc")).args(args).output().expect("binary runs")
}

fn read(dir: &Path, name: &str) -> String {
    std::fs::read_to_string(dir.join(name)).unwrap_or_else(|e| panic!("{name}: {e}"))
}

fn arg(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn run_writes_every_table() {
    let out = tempfile::tempdir().unwrap();
    let s = scenario("paper_6_2.scenario");
    let o = spc(&["run", arg(&s), "--out", arg(out.path()), "--quiet"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(o.stdout.is_empty());
    let runs = read(out.path(), "runs.csv");
    assert_eq!(runs.lines().count(), 1 + 20 + 1, "header, 20 runs, summary row");
    assert!(runs.lines().last().unwrap().starts_with("summary,"));
    assert!(read(out.path(), "methods.csv").starts_with("app,method,executions,offloaded,failures,offload_rate_pct"));
    assert!(read(out.path(), "devices.csv").starts_with("app,device,offloaded_methods,contribution_pct"));
    assert!(read(out.path(), "summary.csv").starts_with("metric,value"));
    assert_eq!(read(out.path(), "run_log.jsonl").lines().count(), 20);
}

#[test]
fn same_seed_gives_identical_files() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let s = scenario("paper_6_2.scenario");
    for dir in [&a, &b] {
        let o = spc(&["run", arg(&s), "--seed", "17", "--set", "decision.mode=cache_collab", "--out", arg(dir.path())]);
        assert!(o.status.success());
    }
    for f in ["runs.csv", "methods.csv", "devices.csv", "summary.csv", "run_log.jsonl"] {
        assert_eq!(read(a.path(), f), read(b.path(), f), "{f} differs");
    }
    let c = tempfile::tempdir().unwrap();
    assert!(spc(&["run", arg(&s), "--seed", "18", "--out", arg(c.path())]).status.success());
    assert_ne!(read(a.path(), "runs.csv"), read(c.path(), "runs.csv"));
}

#[test]
fn configuration_problems_exit_with_2() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nope.scenario");
    let o = spc(&["run", arg(&missing), "--out", arg(dir.path())]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("nope.scenario"));

    let typo = dir.path().join("typo.scenario");
    std::fs::write(
        &typo,
        r#"{"schema": 1, "devices": [{"id": "S", "speed": 1.0, "kind": "source", "sped": 2}], "apps": [{"benchmark": "integral"}]}"#,
    )
    .unwrap();
    let o = spc(&["validate", arg(&typo)]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("sped"));

    let s = scenario("paper_6_2.scenario");
    let o = spc(&["run", arg(&s), "--set", "decision.lambda=1.5", "--out", arg(dir.path())]);
    assert_eq!(o.status.code(), Some(2));
    let o = spc(&["sweep", arg(&s), "--param", "speed", "--values", "1", "--out", arg(dir.path())]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn validate_reports_the_scenario() {
    let o = spc(&["validate", arg(&scenario("cache_gain.scenario"))]);
    assert!(o.status.success());
    let text = String::from_utf8_lossy(&o.stdout);
    assert!(text.contains("ok (5 devices, 8 app entries"), "{text}");
}

#[test]
fn merge_sweep_has_one_row_per_policy() {
    let out = tempfile::tempdir().unwrap();
    let s = scenario("paper_6_2.scenario");
    let o = spc(&[
        "sweep",
        arg(&s),
        "--param",
        "merge",
        "--values",
        "append,unique,weighted",
        "--set",
        "decision.mode=cache_collab",
        "--out",
        arg(out.path()),
        "--quiet",
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = read(out.path(), "sweep.csv");
    let rows: Vec<&str> = csv.lines().skip(1).collect();
    assert_eq!(rows.len(), 3);
    for (row, v) in rows.iter().zip(["append", "unique", "weighted"]) {
        assert!(row.starts_with(&format!("merge,{v},20,")), "{row}");
    }
}

#[test]
fn lambda_moves_work_between_time_and_cpu() {
    let dir = tempfile::tempdir().unwrap();
    // One offloadable method that is cheap to run locally but expensive in
    // source CPU: time favours the source, CPU favours the member.
    std::fs::write(
        dir.path().join("tiny.json"),
        r#"{
            "nodes": [
                {"id": "main", "compute_work": 1, "out_data": {"work": 200000}},
                {"id": "work", "compute_work": 100, "out_data": {"done": 200000}},
                {"id": "done", "compute_work": 1}
            ],
            "edges": [["main", "work"], ["work", "done"]],
            "entry": "main",
            "exit": "done"
        }"#,
    )
    .unwrap();
    let s = dir.path().join("tiny.scenario");
    std::fs::write(
        &s,
        r#"{
            "schema": 1,
            "seed": 2,
            "devices": [
                {"id": "S", "speed": 10.0, "kind": "source"},
                {"id": "D1", "speed": 10.0, "kind": "spc_member"}
            ],
            "links": {"spc": {"bandwidth": 1000.0, "latency": 5.0}},
            "apps": [{"graph": "tiny.json", "repetitions": 3}]
        }"#,
    )
    .unwrap();
    let out = dir.path().join("out");
    let o = spc(&["sweep", arg(&s), "--param", "lambda", "--values", "0,1", "--out", arg(&out), "--quiet"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = read(&out, "sweep.csv");
    let rows: Vec<&str> = csv.lines().skip(1).collect();
    assert_eq!(rows.len(), 2);
    assert!(rows[0].contains("work=D1"), "cpu-only keeps the source idle: {}", rows[0]);
    assert!(rows[1].contains("work=S"), "time-only avoids the transfers: {}", rows[1]);
}

#[test]
fn compare_cache_modes_writes_one_row_per_app_and_mode() {
    let out = tempfile::tempdir().unwrap();
    let o = spc(&["compare-cache-modes", arg(&scenario("cache_gain.scenario")), "--out", arg(out.path())]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = read(out.path(), "compare.csv");
    assert_eq!(csv.lines().count(), 1 + 4 * 3);
    assert!(csv.starts_with("app,mode,runs,mean_decision_ms,mean_end_to_end_ms,hit_rate_pct,decision_gain_vs_local_pct"));
    assert!(String::from_utf8_lossy(&o.stdout).contains("cache_collab"));

    // Without warm-up apps the comparison is meaningless.
    let o = spc(&["compare-cache-modes", arg(&scenario("paper_6_2.scenario")), "--out", arg(out.path())]);
    assert_eq!(o.status.code(), Some(2));
}
