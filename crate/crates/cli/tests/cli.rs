use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use asil_alloc::{validate_solution, AllocationSolution, ProblemInstance};

fn bin() -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_asil-alloc"));
    cmd.env_remove("ASIL_ALLOC_TIME_LIMIT");
    cmd
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().unwrap()
}

fn case_study() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/examples/case_study.json")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn solve_case_study_and_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("sol.json");
    let cs = case_study();
    let o = run(&["solve", cs.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let text = stdout(&o);
    assert!(text.contains("status=optimal"), "{text}");
    assert!(text.contains("cost=98"), "{text}");

    let instance = ProblemInstance::from_path(&cs).unwrap();
    let sol: AllocationSolution = serde_json::from_str(&std::fs::read_to_string(&out).unwrap()).unwrap();
    assert_eq!(sol.cost_total, 98.0);
    assert!(validate_solution(&instance, &sol).is_empty());
}

#[test]
fn infeasible_instance_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("one.json");
    let gen = run(&["generate", "--tasks", "2", "--ecus", "1", "--out", path.to_str().unwrap()]);
    assert_eq!(gen.status.code(), Some(0), "{}", stderr(&gen));
    let o = run(&["solve", path.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
    assert!(stderr(&o).contains("T1") || stdout(&o).contains("infeasible"), "{}", stderr(&o));
}

#[test]
fn input_errors_exit_1() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nope.json");
    assert_eq!(run(&["solve", missing.to_str().unwrap()]).status.code(), Some(1));
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, "{ not json").unwrap();
    assert_eq!(run(&["solve", bad.to_str().unwrap()]).status.code(), Some(1));
    assert_eq!(run(&["ga", missing.to_str().unwrap()]).status.code(), Some(1));
    assert_eq!(run(&["solve"]).status.code(), Some(1));
    assert_eq!(run(&["solve", "--priority", "speed", "x.json"]).status.code(), Some(1));
}

#[test]
fn export_writes_both_stages() {
    let dir = tempfile::tempdir().unwrap();
    let cs = case_study();
    let o = run(&["export-lp", cs.to_str().unwrap(), "--out-dir", dir.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    for stage in ["stage1", "stage2"] {
        let p = dir.path().join(format!("case_study.{stage}.lp"));
        let text = std::fs::read_to_string(&p).unwrap();
        assert!(text.contains("Subject To") || text.contains("subject to"), "{stage}");
    }
    let blocker = dir.path().join("file");
    std::fs::write(&blocker, "").unwrap();
    let o = run(&["export-lp", cs.to_str().unwrap(), "--out-dir", blocker.join("sub").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn generate_is_deterministic() {
    let args = ["generate", "--tasks", "6", "--seed", "42", "--scenario", "mixed"];
    let a = run(&args);
    let b = run(&args);
    assert_eq!(a.status.code(), Some(0));
    assert_eq!(a.stdout, b.stdout);
    let inst: ProblemInstance = ProblemInstance::from_json_str(&stdout(&a)).unwrap();
    assert_eq!(inst.tasks.len(), 6);
    assert_ne!(a.stdout, run(&["generate", "--tasks", "6", "--seed", "43", "--scenario", "mixed"]).stdout);
    assert_eq!(run(&["generate", "--tasks", "0"]).status.code(), Some(1));
}

#[test]
fn bench_rows_per_point() {
    let o = run(&[
        "bench", "--tasks-range", "3..6", "--scenario", "d-on-c", "--scenario", "c-on-b", "--seeds", "2",
        "--repeats", "1",
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let text = stdout(&o);
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap(), "n_tasks,scenario,solve_ms,nodes,seeds,timeouts");
    let rows: Vec<&str> = lines.collect();
    assert_eq!(rows.len(), 8);
    assert_eq!(rows.iter().filter(|r| r.contains(",d-on-c,")).count(), 4);
    assert_eq!(run(&["bench", "--tasks-range", "6..3"]).status.code(), Some(1));
}

#[test]
fn ga_is_deterministic_and_compare_has_no_negative_gap() {
    let cs = case_study();
    let args = ["ga", cs.to_str().unwrap(), "--generations", "20", "--population", "30", "--seed", "5"];
    let a = run(&args);
    let b = run(&args);
    assert_eq!(a.status.code(), Some(0), "{}", stderr(&a));
    assert_eq!(a.stdout, b.stdout);
    let text = stdout(&a);
    assert!(text.starts_with("generation,best,mean"));
    assert_eq!(text.lines().count(), 22);

    let o = run(&["compare", cs.to_str().unwrap(), "--generations", "20", "--population", "30"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let line = stdout(&o);
    assert!(line.contains("ilp=98"), "{line}");
    let gap: f64 = line.split("gap=").nth(1).unwrap().trim().parse().unwrap();
    assert!(gap >= 0.0);
}
