use std::process::{Command, Output};

fn ascent_kit(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ascent-kit")).args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn rosenbrock_default_run() {
    let o = ascent_kit(&["--problem", "rosenbrock"]);
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    assert!(text.starts_with("\nMinimization using ascent-kit version "), "{text}");
    assert!(text.contains("Solver status: 1 (") || text.contains("Solver status: 4 ("), "{text}");
    assert!(text.contains("Optimal value of controls: 1 1\n"), "{text}");
}

#[test]
fn hs071_auglag_report() {
    let o = ascent_kit(&[
        "--problem", "hs071", "--algorithm", "auglag", "--local-algorithm", "mma",
        "--xtol-rel", "1e-7", "--maxeval", "1000",
    ]);
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    assert!(text.contains("Number of equality constraints: 1\n"), "{text}");
    assert!(text.contains("Termination conditions: xtol_rel: 1e-07 maxeval: 1000\n"), "{text}");
    assert!(text.contains("Optimal value of objective function: 17.01401"), "{text}");
}

#[test]
fn multi_ineq_reaches_budget() {
    let o = ascent_kit(&["--problem", "multi_ineq_2d", "--maxeval", "160000", "--seed", "1", "--format", "json"]);
    assert_eq!(o.status.code(), Some(0));
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["status_code"], 5);
    assert_eq!(v["evaluations"], 160000);
    assert_eq!(v["seed"], 1);
    assert_eq!(v["problem"], "multi_ineq_2d");
}

#[test]
fn derivative_check_passes() {
    let o = ascent_kit(&["--problem", "hs071", "--check-derivatives"]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).contains("passed"));
}

#[test]
fn usage_errors_exit_two() {
    let o = ascent_kit(&["--problem", "nope"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("nope"));
    assert_eq!(ascent_kit(&[]).status.code(), Some(2));
    assert_eq!(ascent_kit(&["--problem", "hs071", "--xtol-rel", "tiny"]).status.code(), Some(2));
    assert_eq!(ascent_kit(&["--problem", "hs071", "--verbose"]).status.code(), Some(2));
}

#[test]
fn solver_rejection_exits_one() {
    let o = ascent_kit(&["--problem", "hs071", "--algorithm", "lbfgs"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("INVALID_ARGS"));
}
