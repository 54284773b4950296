use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pagereg")).args(args).output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn small_explicit(dir: &Path) -> PathBuf {
    let path = dir.join("explicit.toml");
    fs::write(
        &path,
        "lambda_p = 0.1\npage_cost = 1.0\nreg_cost = 0.2\nbeta = 0.9\nk_max = 4\n\
         kind = \"explicit\"\nn_states = 3\n\
         p = [0.5, 0.5, 0.0, 0.25, 0.5, 0.25, 0.0, 0.5, 0.5]\n",
    )
    .unwrap();
    path
}

#[test]
fn solve_then_evaluate_reproduces_cost() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_explicit(dir.path());
    let out = dir.path().to_str().unwrap();
    let o = run(&["solve", "--config", cfg.to_str().unwrap(), "--out", out]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let log: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("iteration_log.json")).unwrap()).unwrap();
    let solved = log["final_cost"].as_f64().unwrap();
    assert!(log["converged"].as_bool().unwrap());

    let f = dir.path().join("paging.rcl");
    let g = dir.path().join("registration.rcl");
    let o = run(&[
        "evaluate", "--config", cfg.to_str().unwrap(), "--out", out,
        "--f", f.to_str().unwrap(), "--g", g.to_str().unwrap(),
        "--mc-cycles", "2000", "--seed", "7",
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("cost_report.json")).unwrap()).unwrap();
    let exact = report["total"].as_f64().unwrap();
    assert!((exact - solved).abs() < 1e-12, "{exact} vs {solved}");
    let mc = &report["monte_carlo"];
    let (mean, se) = (mc["mean"].as_f64().unwrap(), mc["std_error"].as_f64().unwrap());
    assert!((mean - exact).abs() < 5.0 * se + 1e-12);

    // rerunning from its own output needs a single round
    let o = run(&["solve", "--config", cfg.to_str().unwrap(), "--out", out, "--g0", g.to_str().unwrap()]);
    assert!(o.status.success());
    assert!(stdout(&o).contains("converged after 1 round(s)"), "{}", stdout(&o));
}

#[test]
fn trace_writes_seeded_files() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_explicit(dir.path());
    let out = dir.path().to_str().unwrap();
    let o = run(&["solve", "--config", cfg.to_str().unwrap(), "--out", out]);
    assert!(o.status.success());
    let g = dir.path().join("registration.rcl");
    let args = ["trace", "--config", cfg.to_str().unwrap(), "--out", out, "--g", g.to_str().unwrap(), "--seed", "3", "--t-end", "50"];
    assert!(run(&args).status.success());
    let first = fs::read_to_string(dir.path().join("trace.tsv")).unwrap();
    assert!(first.starts_with("# seed=3"));
    assert_eq!(first.lines().filter(|l| !l.starts_with('#')).count(), 51);
    assert!(run(&args).status.success());
    assert_eq!(first, fs::read_to_string(dir.path().join("trace.tsv")).unwrap());
    assert!(dir.path().join("plot.tsv").exists());
}

#[test]
fn verify_simple_and_walk() {
    let o = run(&["verify", "--config", configs().join("simple.toml").to_str().unwrap()]);
    assert!(o.status.success(), "{}", stdout(&o));
    let text = stdout(&o);
    assert!(text.contains("reachable beliefs: 7"));
    assert!(text.contains("jointly optimal: PASS"));

    let o = run(&["verify", "--config", configs().join("walk.toml").to_str().unwrap()]);
    assert!(o.status.success(), "{}", stdout(&o));
    assert!(stdout(&o).contains("ping-pong + threshold: PASS"));
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();

    let missing = dir.path().join("nope.toml");
    assert_eq!(run(&["solve", "--config", missing.to_str().unwrap(), "--out", out]).status.code(), Some(2));

    let bad = dir.path().join("bad.toml");
    fs::write(&bad, "lambda_p = 1.5\npage_cost = 1.0\nreg_cost = 0.2\nbeta = 0.9\nkind = \"simple\"\n").unwrap();
    assert_eq!(run(&["solve", "--config", bad.to_str().unwrap(), "--out", out]).status.code(), Some(2));

    let cfg = small_explicit(dir.path());
    let o = run(&["solve", "--config", cfg.to_str().unwrap(), "--out", out, "--max-rounds", "1", "--g0", "always"]);
    assert_eq!(o.status.code(), Some(3), "{}", stdout(&o));

    let simple = configs().join("simple.toml");
    assert_eq!(run(&["verify", "--config", simple.to_str().unwrap(), "--cap", "3"]).status.code(), Some(4));

    assert_eq!(run(&["verify", "--config", cfg.to_str().unwrap()]).status.code(), Some(2));
}
