use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn data(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/data").join(name)
}

fn probplan(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_probplan"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn gen(dir: &Path, family: &str, params: &[&str]) -> PathBuf {
    let mut args = vec!["gen", family];
    args.extend_from_slice(params);
    args.extend_from_slice(&["-o", s(dir)]);
    let o = probplan(&args);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    PathBuf::from(stdout(&o).trim())
}

#[test]
fn safe_uni_4_half_needs_two_tries() {
    let dir = tempfile::tempdir().unwrap();
    let task = gen(dir.path(), "safe-uni", &["4"]);
    let o = probplan(&["plan", s(&task), "--theta", "0.5"]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(stdout(&o).lines().count(), 2);
    let stats = String::from_utf8(o.stderr).unwrap();
    assert!(stats.starts_with("instance,theta,status,t,nodes,length,wmc_calls\n"));
    assert!(stats.contains("safe-uni-4,0.5,plan-found,"));
}

#[test]
fn plan_file_then_exact_validation() {
    let dir = tempfile::tempdir().unwrap();
    let task = gen(dir.path(), "safe-uni", &["4"]);
    let plan = dir.path().join("p.plan");
    let o = probplan(&["plan", s(&task), "--theta", "0.75", "-o", s(&plan)]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).contains(",plan-found,"));
    let o = probplan(&["validate", s(&task), s(&plan), "--theta", "0.75"]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(stdout(&o).trim(), "probability 0.750000000000");
}

#[test]
fn broken_task_is_an_input_error() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("broken.task");
    fs::write(&bad, "vars:\n  X = a | b\ngoal: c\n").unwrap();
    let o = probplan(&["plan", s(&bad)]);
    assert_eq!(o.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&o.stderr).contains("error:"));
    let o = probplan(&["plan", s(&dir.path().join("missing.task"))]);
    assert_eq!(o.status.code(), Some(3));
}

#[test]
fn rover_analog_is_proved_unsolvable_at_the_root() {
    let o = probplan(&["plan", s(&data("rovers-analog.task")), "--theta", "0.75"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("proven-unsolvable-at-root"));
    let o = probplan(&["plan", s(&data("rovers-analog.task")), "--theta", "0.3"]);
    assert_eq!(o.status.code(), Some(0));
}

#[test]
fn running_example_plan_probability() {
    let dir = tempfile::tempdir().unwrap();
    let plan = dir.path().join("p.plan");
    fs::write(&plan, "move-b-right\nmove-left\n").unwrap();
    let o = probplan(&["validate", s(&data("running.task")), s(&plan)]);
    assert_eq!(stdout(&o).trim(), "probability 0.791000000000");
    assert_eq!(o.status.code(), Some(1));
    let o = probplan(&["validate", s(&data("running.task")), s(&plan), "--theta", "0.79"]);
    assert_eq!(o.status.code(), Some(0));
}

#[test]
fn empty_plan_with_known_goal() {
    let dir = tempfile::tempdir().unwrap();
    let task = dir.path().join("known.task");
    fs::write(
        &task,
        "vars:\n  X = a | b\nbn:\n  node X\n    row *: a=1\nactions:\n  action flip\n    effect:\n      outcome 1: add=b\ngoal: a\ntheta: 1\n",
    )
    .unwrap();
    let plan = dir.path().join("empty.plan");
    fs::write(&plan, "").unwrap();
    let o = probplan(&["validate", s(&task), s(&plan)]);
    assert_eq!(stdout(&o).trim(), "probability 1.00000000000");
    assert_eq!(o.status.code(), Some(0));
}

#[test]
fn inapplicable_step_is_reported() {
    let dir = tempfile::tempdir().unwrap();
    let plan = dir.path().join("p.plan");
    fs::write(&plan, "move-left\n").unwrap();
    let task = dir.path().join("pre.task");
    let text = fs::read_to_string(data("running.task"))
        .unwrap()
        .replace("  action move-left\n", "  action move-left\n    pre: r2\n");
    fs::write(&task, text).unwrap();
    let o = probplan(&["validate", s(&task), s(&plan)]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("step 1"));
}

#[test]
fn monte_carlo_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let plan = dir.path().join("p.plan");
    fs::write(&plan, "move-b-right\nmove-left\n").unwrap();
    let task = data("running.task");
    let args = [
        "validate",
        s(&task),
        s(&plan),
        "--mode",
        "mc",
        "--samples",
        "20000",
        "--seed",
        "7",
    ];
    let a = stdout(&probplan(&args));
    let b = stdout(&probplan(&args));
    assert_eq!(a, b);
    let f: Vec<f64> = a.split_whitespace().filter_map(|t| t.parse().ok()).collect();
    let (lo, hi) = (f[1], f[2]);
    assert!(lo <= 0.791 && 0.791 <= hi, "{a}");
}

#[test]
fn encoded_initial_belief_counts_to_one() {
    let dir = tempfile::tempdir().unwrap();
    let plan = dir.path().join("p.plan");
    fs::write(&plan, "move-b-right\n").unwrap();
    let cnf = dir.path().join("b.wcnf");
    let o = probplan(&["encode", s(&data("running.task")), "--plan", s(&plan), "-o", s(&cnf)]);
    assert_eq!(o.status.code(), Some(0));
    let o = probplan(&["count", s(&cnf)]);
    assert_eq!(stdout(&o).trim(), "1.00000000000");
}

#[test]
fn count_prints_twelve_significant_digits() {
    let dir = tempfile::tempdir().unwrap();
    let cnf = dir.path().join("f.wcnf");
    fs::write(&cnf, "p cnf 2 1\nw 1 0.3\nw 2 0.6\n1 2 0\n").unwrap();
    let o = probplan(&["count", s(&cnf)]);
    assert_eq!(stdout(&o).trim(), "0.720000000000");
    fs::write(&cnf, "p cnf 2 1\n1 2 x\n").unwrap();
    assert_eq!(probplan(&["count", s(&cnf)]).status.code(), Some(3));
}

#[test]
fn unknown_family_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let o = probplan(&["gen", "grid", "3", "-o", s(dir.path())]);
    assert_eq!(o.status.code(), Some(3));
    let o = probplan(&["gen", "bomb", "3", "-o", s(dir.path())]);
    assert_eq!(o.status.code(), Some(3));
}

#[test]
fn bomb_suite_rows_are_validated() {
    let dir = tempfile::tempdir().unwrap();
    for (n, m) in [("2", "1"), ("2", "2"), ("4", "1"), ("4", "2")] {
        gen(dir.path(), "bomb", &[n, m]);
    }
    let o = probplan(&["bench", s(dir.path()), "--theta", "0.25,0.5,1.0", "--jobs", "2"]);
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    let mut rows = csv::Reader::from_reader(text.as_bytes());
    let records: Vec<csv::StringRecord> = rows.records().map(|r| r.unwrap()).collect();
    assert_eq!(records.len(), 12);
    let names: Vec<&str> = records.iter().map(|r| &r[0]).collect();
    let mut sorted = names.clone();
    sorted.sort();
    assert_eq!(names, sorted);
    for r in &records {
        assert_eq!(&r[2], "plan-found", "{r:?}");
        let theta: f64 = r[1].parse().unwrap();
        let p: f64 = r[7].parse().unwrap();
        assert!(p >= theta - 1e-9, "{r:?}");
    }
}

#[test]
fn empty_dir_gives_header_only() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("r.csv");
    let o = probplan(&["bench", s(dir.path()), "--theta", "0.5", "-o", s(&out)]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(
        fs::read_to_string(out).unwrap(),
        "instance,theta,status,t,nodes,length,wmc_calls,probability,ci_low,ci_high,seed\n"
    );
}

#[test]
fn limits_and_bad_files_become_rows() {
    let dir = tempfile::tempdir().unwrap();
    gen(dir.path(), "safe-uni", &["10"]);
    fs::write(dir.path().join("a-broken.task"), "nonsense\n").unwrap();
    let o = probplan(&["bench", s(dir.path()), "--theta", "1", "--node-limit", "3"]);
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 3, "{text}");
    assert!(lines[1].starts_with("a-broken,1,input-error,"));
    assert!(lines[2].starts_with("safe-uni-10,1,resource-exhausted,"));
}

#[test]
fn search_modes_and_limits_parse() {
    let dir = tempfile::tempdir().unwrap();
    let task = gen(dir.path(), "safe-uni", &["4"]);
    for mode in ["auto", "ehc", "bfs"] {
        let o = probplan(&["plan", s(&task), "--search", mode, "--horizon-cap", "50", "--time-limit", "5"]);
        assert_eq!(o.status.code(), Some(0), "{mode}");
    }
    let o = probplan(&["plan", s(&task), "--node-limit", "0"]);
    assert_eq!(o.status.code(), Some(3));
    let o = probplan(&["plan", s(&task), "--theta", "1.5"]);
    assert_eq!(o.status.code(), Some(3));
}
