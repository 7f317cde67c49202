use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_sircontrol"))
}

fn config(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(name)
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

/// A short noisy scenario so the tests stay quick.
fn short_config(dir: &Path) -> PathBuf {
    let text = std::fs::read_to_string(config("reference.toml")).unwrap();
    let text = text.replace("horizon = 800.0", "horizon = 200.0");
    assert!(text.contains("horizon = 200.0"));
    let path = dir.join("short.toml");
    std::fs::write(&path, text).unwrap();
    path
}

#[test]
fn run_writes_trajectories_and_summary() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = short_config(dir.path());
    let out = dir.path().join("out");
    let o = run(&["run", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    for name in ["optimal.csv", "naive.csv", "robust.csv", "summary.json"] {
        assert!(out.join(name).is_file(), "{name}");
    }
    let csv = std::fs::read_to_string(out.join("robust.csv")).unwrap();
    assert!(csv.starts_with("t,S,I,R,u,phase\n"));
    assert_eq!(csv.lines().count(), 202);
    assert!(stdout(&o).contains("robust"));
}

#[test]
fn seed_and_noise_flags_change_the_run() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = short_config(dir.path());
    let naive = |args: &[&str], sub: &str| {
        let out = dir.path().join(sub);
        let mut all = vec!["run", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()];
        all.extend_from_slice(args);
        assert_eq!(run(&all).status.code(), Some(0));
        std::fs::read(out.join("naive.csv")).unwrap()
    };
    let base = naive(&[], "a");
    assert_eq!(base, naive(&["--seed", "1"], "b"));
    assert_ne!(base, naive(&["--seed", "2"], "c"));
    assert_ne!(base, naive(&["--no-noise"], "d"));
}

#[test]
fn check_prints_preflight() {
    let o = run(&["check", config("reference.toml").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    assert!(text.contains("peak I under u_min = 0.239264"), "{text}");
    assert!(text.contains("holding u_min is optimal: false"));
    assert!(text.contains("feasible: true"));

    let o = run(&["check", config("low_beta.toml").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).contains("holding u_min is optimal: true"));
}

#[test]
fn sweep_reports_monotonicity() {
    let cfg = config("reference.toml");
    let o = run(&["sweep", cfg.to_str().unwrap(), "--param", "beta", "--values", "0.12,0.16,0.2"]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).contains("peak strictly increasing in beta: true"));
    let o = run(&["sweep", cfg.to_str().unwrap(), "--param", "u_min", "--values", "0.0,0.03"]);
    assert!(stdout(&o).contains("peak strictly decreasing in u_min: true"));
}

#[test]
fn config_errors_exit_with_one() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.toml");
    std::fs::write(&bad, "horizon = 1.0\n").unwrap();
    let cfg = config("reference.toml");
    for args in [
        vec!["check", "/no/such/file.toml"],
        vec!["run", bad.to_str().unwrap()],
        vec!["sweep", cfg.to_str().unwrap(), "--param", "zeta", "--values", "1"],
        vec!["sweep", cfg.to_str().unwrap(), "--param", "beta", "--values", "0.2,0.1"],
        vec!["frobnicate"],
    ] {
        let o = run(&args);
        assert_eq!(o.status.code(), Some(1), "{args:?}: {}", String::from_utf8_lossy(&o.stderr));
        assert!(!o.stderr.is_empty());
    }
}

#[test]
fn unwritable_output_exits_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = short_config(dir.path());
    let blocker = dir.path().join("blocker");
    std::fs::write(&blocker, "").unwrap();
    let o = run(&["run", cfg.to_str().unwrap(), "--out", blocker.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("blocker"));
}
