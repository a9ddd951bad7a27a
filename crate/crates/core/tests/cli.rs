use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

const DEFICIENT: &str = include_str!("../data/rank_deficient_inconsistent.json");
const FULL_RANK: &str = include_str!("../data/full_rank_inconsistent.json");

struct Workspace {
    dir: TempDir,
}

impl Workspace {
    fn new() -> Self {
        Self {
            dir: tempfile::tempdir().unwrap(),
        }
    }

    fn file(&self, name: &str, body: &str) -> PathBuf {
        let path = self.dir.path().join(name);
        std::fs::write(&path, body).unwrap();
        path
    }
}

fn run(args: &[&str], input: &Path) -> Output {
    run_env(args, input, None)
}

fn run_env(args: &[&str], input: &Path, tol_env: Option<&str>) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_descriptor-bvp"));
    cmd.arg(args[0]).arg("--input").arg(input).args(&args[1..]);
    match tol_env {
        Some(v) => cmd.env("DESCRIPTOR_BVP_TOL", v),
        None => cmd.env_remove("DESCRIPTOR_BVP_TOL"),
    };
    cmd.output().expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

fn json(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).unwrap_or_else(|e| {
        panic!(
            "stdout is not JSON ({e}): {}",
            String::from_utf8_lossy(&out.stdout)
        )
    })
}

const NO_FINITE_PART: &str = r#"{
  "F": [[0, 1], [0, 0]],
  "G": [[1, 0], [0, 1]],
  "A1": [[1, 0]],
  "A2": [[0, 1]],
  "B1": [0],
  "B2": [0],
  "N": 3
}"#;

#[test]
fn analyze_reports_structure() {
    let ws = Workspace::new();
    let out = run(&["analyze"], &ws.file("p.json", DEFICIENT));
    assert_eq!(code(&out), 0);
    let v = json(&out);
    assert_eq!(v["regular"], true);
    assert_eq!((v["p"].as_u64(), v["q"].as_u64()), (Some(3), Some(2)));
    assert_eq!(v["finite_eigenvalues"].as_array().unwrap().len(), 3);
}

#[test]
fn solve_reports_classification_and_trajectory() {
    let ws = Workspace::new();
    let out = run(&["solve"], &ws.file("p.json", FULL_RANK));
    assert_eq!(code(&out), 4);
    let v = json(&out);
    assert_eq!(v["report"]["case"], "NoSolution");
    assert_eq!(v["report"]["strategy"], "lsq");
    assert_eq!(v["solution"]["trajectory"].as_array().unwrap().len(), 5);
}

#[test]
fn csv_has_header_and_one_row_per_step() {
    let ws = Workspace::new();
    let out = run(&["solve", "--format", "csv"], &ws.file("p.json", FULL_RANK));
    assert_eq!(code(&out), 4);
    let text = String::from_utf8(out.stdout).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert!(lines[0].starts_with("k,y1_re,y1_im,"));
    assert_eq!(lines[0].split(',').count(), 11);
    assert_eq!(lines.len(), 6);
    assert!(lines[1].starts_with("0,"));
}

#[test]
fn output_flag_writes_file() {
    let ws = Workspace::new();
    let target = ws.dir.path().join("result.json");
    let out = run(
        &["analyze", "--output", target.to_str().unwrap()],
        &ws.file("p.json", DEFICIENT),
    );
    assert_eq!(code(&out), 0);
    assert!(out.stdout.is_empty());
    let written: Value = serde_json::from_str(&std::fs::read_to_string(target).unwrap()).unwrap();
    assert_eq!(written["p"], 3);
}

#[test]
fn same_seed_gives_identical_bytes() {
    let ws = Workspace::new();
    let input = ws.file("p.json", DEFICIENT);
    for cmd in ["analyze", "solve", "verify"] {
        let a = run(&[cmd, "--seed", "5"], &input);
        let b = run(&[cmd, "--seed", "5"], &input);
        assert_eq!(a.stdout, b.stdout, "{cmd}");
        assert!(!a.stdout.is_empty());
    }
}

#[test]
fn verify_passes_on_examples_and_catches_corruption() {
    let ws = Workspace::new();
    for (name, body) in [("a.json", DEFICIENT), ("b.json", FULL_RANK)] {
        let input = ws.file(name, body);
        let ok = run(&["verify"], &input);
        assert_eq!(code(&ok), 0, "{}", String::from_utf8_lossy(&ok.stdout));
        assert_eq!(json(&ok)["passed"], true);

        let bad = run(&["verify", "--corrupt", "0.01"], &input);
        assert_eq!(code(&bad), 6);
        let v = json(&bad);
        assert_eq!(v["passed"], false);
        assert_eq!(v["corrupted_by"], 0.01);
    }
}

#[test]
fn tolerance_precedence() {
    let ws = Workspace::new();
    let input = ws.file("p.json", FULL_RANK);
    let rank = |out: &Output| json(out)["report"]["rank_k"].as_u64().unwrap();

    let auto = run_env(&["solve"], &input, None);
    assert_eq!(rank(&auto), 3);
    // A relative tolerance near 1 keeps only the dominant singular value.
    let loose = run_env(&["solve"], &input, Some("0.9"));
    assert_eq!(rank(&loose), 1);
    let flag = run_env(&["solve", "--tol", "1e-12"], &input, Some("0.9"));
    assert_eq!(rank(&flag), 3);

    let bad = run_env(&["solve"], &input, Some("tight"));
    assert_eq!(code(&bad), 2);
}

#[test]
fn usage_and_parse_errors_exit_2() {
    let ws = Workspace::new();
    let malformed = ws.file("bad.json", "{\"F\": ");
    assert_eq!(code(&run(&["solve"], &malformed)), 2);

    let wrong_width = FULL_RANK.replace("\"A2\": [[1, 0, 0, 0, 1]]", "\"A2\": [[1, 0, 1]]");
    let out = run(&["solve"], &ws.file("w.json", &wrong_width));
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("A2"));

    let unknown = run(
        &["solve", "--strategy", "fastest"],
        &ws.file("p.json", FULL_RANK),
    );
    assert_eq!(code(&unknown), 2);

    let missing = ws.dir.path().join("absent.json");
    assert_eq!(code(&run(&["analyze"], &missing)), 2);
}

#[test]
fn singular_pencil_exits_3() {
    let ws = Workspace::new();
    let body = r#"{"F": [[1, 0], [0, 0]], "G": [[1, 0], [0, 0]], "A1": [[1, 0]], "A2": [[0, 1]], "B1": [1], "B2": [0], "N": 2}"#;
    let input = ws.file("s.json", body);
    let analyze = run(&["analyze"], &input);
    assert_eq!(code(&analyze), 3);
    assert_eq!(json(&analyze)["regular"], false);
    assert_eq!(code(&run(&["solve"], &input)), 3);
}

#[test]
fn refused_strategy_exits_5() {
    let ws = Workspace::new();
    let input = ws.file("p.json", DEFICIENT);
    let out = run(&["solve", "--strategy", "lsq"], &input);
    assert_eq!(code(&out), 5);
    assert!(String::from_utf8_lossy(&out.stderr).contains("regularized"));
    assert_eq!(code(&run(&["solve", "--strategy", "exact"], &input)), 5);
}

#[test]
fn strategy_override_is_reported() {
    let ws = Workspace::new();
    let out = run(
        &["solve", "--strategy", "pinv"],
        &ws.file("p.json", DEFICIENT),
    );
    assert_eq!(code(&out), 4);
    assert_eq!(json(&out)["report"]["strategy"], "pinv");
}

#[test]
fn no_finite_dynamics() {
    let ws = Workspace::new();
    let zero = ws.file("z.json", NO_FINITE_PART);
    let out = run(&["solve"], &zero);
    assert_eq!(code(&out), 0);
    let v = json(&out);
    assert_eq!(
        (v["p"].as_u64(), v["no_finite_dynamics"].as_bool()),
        (Some(0), Some(true))
    );
    assert_eq!(v["trajectory"].as_array().unwrap().len(), 4);
    let verify = run(&["verify"], &zero);
    assert_eq!(code(&verify), 0);
    assert_eq!(json(&verify)["passed"], true);

    let forced = ws.file(
        "f.json",
        &NO_FINITE_PART.replace("\"B1\": [0]", "\"B1\": [1]"),
    );
    assert_eq!(code(&run(&["solve"], &forced)), 4);
}

#[test]
fn help_exits_0() {
    let out = Command::new(env!("CARGO_BIN_EXE_descriptor-bvp"))
        .arg("--help")
        .output()
        .unwrap();
    assert_eq!(code(&out), 0);
    assert!(String::from_utf8_lossy(&out.stdout).contains("verify"));
}
