use std::fs;
use std::path::Path;
use std::process::{Command, Output};
use tempfile::TempDir;

const CONFIG: &str = "\
organization = tictoc
dcd = true
pdm = true
bypass = preemptive_write_allocate
cache_lines = 0x1000
memory_lines = 0x10000
l3_bytes = 65536
l3_ways = 8
";

const SPEC: &str = "\
pattern = mix
footprint_lines = 16384
access_count = 20000
write_fraction = 0.4
seed = 3
";

fn tictoc(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tictoc")).args(args).output().expect("binary runs")
}

fn path(dir: &TempDir, name: &str) -> String {
    dir.path().join(name).to_string_lossy().into_owned()
}

/// Writes the config and spec, generates the trace, and returns the workspace.
fn workspace() -> TempDir {
    let dir = TempDir::new().unwrap();
    fs::write(dir.path().join("cfg.txt"), CONFIG).unwrap();
    fs::write(dir.path().join("spec.txt"), SPEC).unwrap();
    let out = tictoc(&["generate", "--spec", &path(&dir, "spec.txt"), "--out", &path(&dir, "t.trace")]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    dir
}

fn run(dir: &TempDir, report: &str, format: &str) -> Output {
    tictoc(&[
        "run",
        "--config",
        &path(dir, "cfg.txt"),
        "--trace",
        &path(dir, "t.trace"),
        "--report",
        &path(dir, report),
        "--format",
        format,
    ])
}

#[test]
fn generate_writes_one_record_per_access() {
    let dir = workspace();
    let text = fs::read_to_string(dir.path().join("t.trace")).unwrap();
    assert_eq!(text.lines().count(), 20_000);
}

#[test]
fn run_writes_a_passing_csv_report() {
    let dir = workspace();
    let out = run(&dir, "r.csv", "csv");
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let text = fs::read_to_string(dir.path().join("r.csv")).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 2);
    assert!(lines[0].starts_with("run_id,organization,flags,xpoint_read"));
    assert!(lines[1].starts_with("0,tictoc,dcd+pdm+preemptive_write_allocate,"));
    assert!(lines[1].ends_with(",PASS"));
}

#[test]
fn repeated_runs_give_identical_reports() {
    let dir = workspace();
    for (name, format) in [("a.json", "json"), ("b.json", "json"), ("a.csv", "csv"), ("b.csv", "csv")] {
        assert!(run(&dir, name, format).status.success());
    }
    let read = |n: &str| fs::read(dir.path().join(n)).unwrap();
    assert_eq!(read("a.json"), read("b.json"));
    assert_eq!(read("a.csv"), read("b.csv"));
    let json: serde_json::Value = serde_json::from_slice(&read("a.json")).unwrap();
    assert_eq!(json[0]["verdict"], "PASS");
}

#[test]
fn sweep_prints_one_row_per_size() {
    let dir = workspace();
    let out = tictoc(&[
        "sweep",
        "--config",
        &path(&dir, "cfg.txt"),
        "--trace",
        &path(&dir, "t.trace"),
        "--sizes",
        "128,256,512,1024",
    ]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    let rows: Vec<&str> = text.lines().skip(1).collect();
    assert_eq!(rows.len(), 4);
    let rho: Vec<f64> = rows.iter().map(|r| r.split(',').nth(1).unwrap().parse().unwrap()).collect();
    assert!(rho.windows(2).all(|w| w[1] <= w[0]), "{rho:?}");
}

#[test]
fn selftest_passes() {
    let out = tictoc(&["selftest"]);
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.lines().last().unwrap().ends_with(", 0 failed"));
    assert!(!text.contains("FAIL"));
}

#[test]
fn bad_inputs_fail_with_a_message() {
    let dir = workspace();
    fs::write(dir.path().join("bad.txt"), "organization = tictoc\nl3_wayz = 4\n").unwrap();
    let out = tictoc(&[
        "run",
        "--config",
        &path(&dir, "bad.txt"),
        "--trace",
        &path(&dir, "t.trace"),
        "--report",
        &path(&dir, "r.csv"),
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("l3_wayz"));

    let out = run(&dir, "missing-dir/r.csv", "csv");
    assert_eq!(out.status.code(), Some(1));

    let out = run(&dir, "r.xml", "xml");
    assert!(!out.status.success());
    assert!(!Path::new(&path(&dir, "r.xml")).exists());
}
