use std::process::Command;

fn physq() -> Command {
    Command::new(env!("CARGO_BIN_EXE_physq"))
}

#[test]
fn simulate_prints_one_row_per_hour() {
    let out = physq().args(["simulate", "--days", "2", "--seed", "7"]).output().unwrap();
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 1 + 48);
    assert!(lines[0].starts_with("day,hour,price"));
}

#[test]
fn mpc_schedule_covers_the_test_days() {
    let out = physq().args(["mpc", "--freq", "hourly", "--scenario", "square"]).output().unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(String::from_utf8(out.stdout).unwrap().lines().count(), 1 + 5 * 24);
    assert!(String::from_utf8(out.stderr).unwrap().contains("mpc-hourly"));
}

#[test]
fn bad_arguments_fail_cleanly() {
    let out = physq().args(["mpc", "--freq", "weekly"]).output().unwrap();
    assert!(!out.status.success());
    let out = physq().args(["--config", "/nonexistent/physq.toml", "simulate"]).output().unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8(out.stderr).unwrap().starts_with("error:"));
}
