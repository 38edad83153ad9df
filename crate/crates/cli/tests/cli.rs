use std::path::Path;
use std::process::{Command, Output};

fn flowsplit(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_flowsplit")).args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

const QUICK: [&str; 4] = ["--horizon-s", "3", "--warmup-s", "0.5"];

#[test]
fn run_writes_reports() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let mut args = vec!["run", "--out", out, "--utilization", "0.3"];
    args.extend(QUICK);
    let o = flowsplit(&args);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(stdout(&o).contains("short-flow speedup"));
    let json: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("report.json")).unwrap()).unwrap();
    assert_eq!(json["treatment"]["config"]["background"]["utilization"], 0.3);
    assert_eq!(json["baseline"]["policy"], "ecmp-per-packet");
    assert!(dir.path().join("report.txt").exists());
}

#[test]
fn flags_override_the_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("exp.toml");
    std::fs::write(&cfg, "seed = 9\nthreshold = 16\nhorizon_s = 2\nwarmup_s = 0.5\n").unwrap();
    let out = dir.path().join("out");
    let o = flowsplit(&[
        "run",
        "--config",
        cfg.to_str().unwrap(),
        "--threshold",
        "8",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let json: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
    assert_eq!(json["treatment"]["config"]["threshold"], 8);
    assert_eq!(json["treatment"]["seed"], 9);
}

#[test]
fn bad_config_exits_one_with_a_line_number() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    std::fs::write(&cfg, "seed = 1\n\n[tunnel]\ncapacity_bps = 0\n").unwrap();
    let o = flowsplit(&["run", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("line 4"), "{}", stderr(&o));
}

#[test]
fn usage_errors_exit_one() {
    assert_eq!(flowsplit(&["run", "--policy", "fastest"]).status.code(), Some(1));
    assert_eq!(flowsplit(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(flowsplit(&["--help"]).status.code(), Some(0));
}

#[test]
fn unwritable_output_exits_three() {
    let dir = tempfile::tempdir().unwrap();
    let blocker = dir.path().join("file");
    std::fs::write(&blocker, "x").unwrap();
    let target = blocker.join("out");
    let mut args = vec!["run", "--out", target.to_str().unwrap()];
    args.extend(QUICK);
    assert_eq!(flowsplit(&args).status.code(), Some(3));
}

#[test]
fn check_reports_one_line_per_criterion() {
    let o = flowsplit(&["check", "--only", "1,2,3,4"]);
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    let text = stdout(&o);
    assert_eq!(text.lines().filter(|l| l.starts_with("[PASS]")).count(), 4, "{text}");
}

#[test]
fn failing_check_exits_two() {
    // A 3 s horizon leaves too little load from large flows for the
    // utilization trend to show.
    let mut args = vec!["check", "--only", "6"];
    args.extend(QUICK);
    let o = flowsplit(&args);
    assert_eq!(o.status.code(), Some(2), "{}", stdout(&o));
    assert!(stdout(&o).starts_with("[FAIL]"));
}

#[test]
fn sweep_writes_table_and_chart() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let mut args = vec!["sweep", "--axis", "utilization", "--values", "0.1,0.3", "--out", out];
    args.extend(QUICK);
    let o = flowsplit(&args);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let csv = std::fs::read_to_string(Path::new(out).join("sweep.csv")).unwrap();
    assert_eq!(csv.lines().count(), 3);
    assert!(csv.starts_with("utilization,speedup_mean"));
    assert!(Path::new(out).join("sweep.svg").exists());
}

#[test]
fn dump_workload_is_deterministic_csv() {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("w.csv");
    let o = flowsplit(&["dump-workload", "--horizon-s", "2", "--warmup-s", "0", "-o", file.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let a = std::fs::read_to_string(&file).unwrap();
    assert!(a.starts_with("flow_id,src,src_port"));
    assert!(a.lines().count() > 100);
    let again = flowsplit(&["dump-workload", "--horizon-s", "2", "--warmup-s", "0"]);
    assert_eq!(stdout(&again), a);
}

#[test]
fn bench_prints_a_row_per_flow_count() {
    let o = flowsplit(&["bench", "--packets", "20000", "--flows", "1,100"]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(stdout(&o).lines().count(), 3);
    assert_eq!(flowsplit(&["bench", "--flows", "0"]).status.code(), Some(1));
}
