use std::io::{BufRead, BufReader};
use std::process::{Command, Stdio};

fn lpuf() -> Command {
    Command::new(env!("CARGO_BIN_EXE_lpuf"))
}

fn run(args: &[&str]) -> String {
    let out = lpuf().args(args).output().unwrap();
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

#[test]
fn enroll_serve_device_over_tcp() {
    let dir = tempfile::tempdir().unwrap();
    let db = dir.path().join("dev.db");
    let db = db.to_str().unwrap();
    let enrolled = run(&["enroll", "--seed", "11", "--device-id", "4", "--p1", "2", "--p2", "64", "--batch", "3", "--db", db]);
    assert!(enrolled.contains("3 CRPs, next counter 6"), "{enrolled}");

    let mut server = lpuf()
        .args(["serve", "--endpoint", "127.0.0.1:0", "--max-connections", "2", "--db", db])
        .stdout(Stdio::piped())
        .spawn()
        .unwrap();
    let mut line = String::new();
    BufReader::new(server.stdout.take().unwrap()).read_line(&mut line).unwrap();
    let addr = line.trim().strip_prefix("listening on ").unwrap().to_string();

    let genuine = run(&["device", "--endpoint", &addr, "--seed", "11", "--device-id", "4", "--p1", "2", "--p2", "64"]);
    assert_eq!(genuine.trim(), "accepted (counter now 2)");

    // Another SRAM claiming the same id.
    let out = lpuf()
        .args(["device", "--endpoint", &addr, "--seed", "12", "--device-id", "4", "--p1", "2", "--p2", "64"])
        .output()
        .unwrap();
    assert!(!out.status.success());
    assert!(server.wait().unwrap().success());
}

#[test]
fn auth_once_is_reproducible() {
    let a = run(&["auth-once", "--seed", "5", "--trace"]);
    let b = run(&["auth-once", "--seed", "5", "--trace"]);
    assert_eq!(a, b);
    assert!(a.lines().last().unwrap().starts_with("Accept"), "{a}");
    assert!(a.contains("type 1 (942 bytes)"));
}

#[test]
fn attack_and_export() {
    let out = run(&["attack", "active", "--mode", "unprotected", "--clone-trials", "1000"]);
    assert!(out.contains("queries=1280\n"), "{out}");
    assert!(out.contains("key_recovered=true"));
    assert!(out.contains("clone_agreement=1.00000"));

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("crps.txt");
    run(&["export", "--count", "10", "--mode", "full", "--out", path.to_str().unwrap()]);
    assert_eq!(std::fs::metadata(&path).unwrap().len(), 10 * 325);
}

#[test]
fn bad_config_fails() {
    let out = lpuf().args(["auth-once", "--p1", "8", "--p2", "128"]).output().unwrap();
    assert!(!out.status.success());
}
