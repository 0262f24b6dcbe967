//! End-to-end runs of the `hoc` binary.

use std::path::Path;
use std::process::{Command, Output};

use hoc_cli::branch_file;

fn hoc(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hoc"))
        .args(args)
        .current_dir(dir)
        .output()
        .expect("hoc runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn list_models_shows_dimensions() {
    let dir = tempfile::tempdir().unwrap();
    let out = hoc(dir.path(), &["list-models"]);
    assert!(out.status.success());
    let text = stdout(&out);
    for needle in ["ball (m=1, n1=2)", "slip (m=2, nS=4, nF=5)", "rod (m=2)", "block"] {
        assert!(text.contains(needle), "missing {needle} in\n{text}");
    }
}

#[test]
fn ball_trace_matches_closed_form_period() {
    let dir = tempfile::tempdir().unwrap();
    let out = hoc(dir.path(), &["trace", "--model", "ball", "--steps", "100"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(stdout(&out).contains("101 points"));
    let saved = branch_file::load(&dir.path().join("ball_branch.csv")).unwrap();
    let levels: Vec<f64> = saved.branch.points.iter().map(|p| p.u[saved.layout.level_index()]).collect();
    assert!(levels.windows(2).all(|w| w[1] > w[0]));
    let mut rows = csv::Reader::from_path(dir.path().join("ball_branch.csv")).unwrap();
    for record in rows.records() {
        let r = record.unwrap();
        let level: f64 = r[4].parse().unwrap();
        let period: f64 = r[6].parse().unwrap();
        let exact = (8.0 * level).sqrt();
        assert!((period - exact).abs() <= 1e-6 * exact.max(1.0), "T {period} vs {exact}");
    }
}

#[test]
fn zero_steps_write_the_start_point_only() {
    let dir = tempfile::tempdir().unwrap();
    let out = hoc(dir.path(), &["trace", "--model", "ball", "--steps", "0", "--out", "one.csv"]);
    assert!(out.status.success());
    let saved = branch_file::load(&dir.path().join("one.csv")).unwrap();
    assert_eq!(saved.branch.points.len(), 1);
    assert!(dir.path().join("one.json").exists());
}

#[test]
fn slip_hopping_branch_stays_in_place() {
    let dir = tempfile::tempdir().unwrap();
    let out = hoc(
        dir.path(),
        &["trace", "--model", "slip", "--from", "u0", "--branch", "1", "--steps", "12", "--out", "hop.csv"],
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let saved = branch_file::load(&dir.path().join("hop.csv")).unwrap();
    // Forward velocity at lift-off, the third flight coordinate.
    let xdot = saved.layout.start_range(1).start + 2;
    let worst = saved.branch.points.iter().map(|p| p.u[xdot].abs()).fold(0.0, f64::max);
    assert!(worst <= 1e-8, "forward velocity {worst:e}");
    let top = saved.branch.points.last().unwrap().u[saved.layout.level_index()];
    assert!(top > 1.05);
}

#[test]
fn branch_switch_at_slip_start_reaches_the_harmonic_branch() {
    let dir = tempfile::tempdir().unwrap();
    let out = hoc(dir.path(), &["trace", "--model", "slip", "--steps", "3", "--out", "hop.csv"]);
    assert!(out.status.success());
    let out = hoc(
        dir.path(),
        &["branch-switch", "--input", "hop.csv", "--sb", "0", "--branch", "0", "--steps", "8", "--out", "harm.csv"],
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let saved = branch_file::load(&dir.path().join("harm.csv")).unwrap();
    let flight = saved.layout.duration_index(1);
    let worst = saved.branch.points.iter().map(|p| p.u[flight].abs()).fold(0.0, f64::max);
    assert!(worst <= 1e-8, "flight time {worst:e}");
    let levels: Vec<f64> = saved.branch.points.iter().map(|p| p.u[saved.layout.level_index()]).collect();
    assert!(levels.last().unwrap() - levels[0] > 0.01);
}

#[test]
fn usage_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(hoc(dir.path(), &["trace", "--model", "nope"]).status.code(), Some(2));
    assert_eq!(hoc(dir.path(), &["trace", "--model", "ball", "--direction", "0"]).status.code(), Some(2));
    assert_eq!(hoc(dir.path(), &["trace", "--model", "ball", "--newton-tol", "-1"]).status.code(), Some(2));
    assert_eq!(hoc(dir.path(), &["frobnicate"]).status.code(), Some(2));
    let out = hoc(dir.path(), &["trace", "--model", "ball", "--steps", "2", "--out", "b.csv"]);
    assert!(out.status.success());
    let bad_index = hoc(dir.path(), &["branch-switch", "--input", "b.csv", "--sb", "0", "--branch", "5"]);
    assert_eq!(bad_index.status.code(), Some(2));
    let bad_sb = hoc(dir.path(), &["branch-switch", "--input", "b.csv", "--sb", "3", "--branch", "0"]);
    assert_eq!(bad_sb.status.code(), Some(2));
}

#[test]
fn flags_override_the_config_file() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(
        dir.path().join("run.json"),
        r#"{"model": "ball", "limits": {"max_steps": 50}, "outputs": {"branch_path": "cfg.csv"}}"#,
    )
    .unwrap();
    let out = hoc(dir.path(), &["trace", "--config", "run.json", "--steps", "4"]);
    assert!(out.status.success());
    let saved = branch_file::load(&dir.path().join("cfg.csv")).unwrap();
    assert_eq!(saved.branch.points.len(), 5);
    assert_eq!(saved.metadata.config.limits.max_steps, 4);
}

#[test]
fn check_passes_on_the_ball_branch() {
    let dir = tempfile::tempdir().unwrap();
    let out = hoc(dir.path(), &["check", "--model", "ball"]);
    assert!(out.status.success(), "{}", stdout(&out));
    let text = stdout(&out);
    assert!(text.contains("PASS jacobian_fd"));
    assert!(!text.contains("FAIL"));
}

#[test]
fn check_takes_the_model_from_the_branch_file() {
    let dir = tempfile::tempdir().unwrap();
    let out = hoc(dir.path(), &["trace", "--model", "rod", "--steps", "12", "--out", "rod.csv"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let out = hoc(dir.path(), &["check", "--input", "rod.csv", "--at-step", "10"]);
    assert!(out.status.success(), "{}{}", stdout(&out), String::from_utf8_lossy(&out.stderr));
    assert!(stdout(&out).contains("saltation_field[2]"));
}

#[test]
fn identical_runs_write_identical_files() {
    let dir = tempfile::tempdir().unwrap();
    for name in ["a.csv", "b.csv"] {
        let out = hoc(dir.path(), &["trace", "--model", "rod", "--steps", "15", "--out", name]);
        assert!(out.status.success());
    }
    let read = |n: &str| std::fs::read(dir.path().join(n)).unwrap();
    assert_eq!(read("a.csv"), read("b.csv"));
    let meta = |n: &str| String::from_utf8(read(n)).unwrap().replace("\"a.csv\"", "\"b.csv\"");
    assert_eq!(meta("a.json"), meta("b.json"));
}
