//! End-to-end checks of the command-line interface: run, replay, list-tasks,
//! and report, including exit codes.

use std::path::PathBuf;
use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_coherent"))
}

fn temp_dir(label: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("coherent-cli-{label}-{}", std::process::id()));
    let _ = std::fs::remove_dir_all(&dir);
    dir
}

#[test]
fn list_tasks_prints_the_suite() {
    let output = bin().arg("list-tasks").output().expect("runs");
    assert!(output.status.success());
    let stdout = String::from_utf8_lossy(&output.stdout);
    assert_eq!(stdout.lines().count(), 41); // header + 40 tasks
    assert!(stdout.contains("s1_t2_apple_to_dining_table"));
    assert!(stdout.contains("trio"));
}

#[test]
fn run_replay_report_round_trip() {
    let out = temp_dir("round-trip");

    // Oracle run of one built-in task.
    let output = bin()
        .args([
            "run",
            "--task",
            "s1_t2_apple_to_dining_table",
            "--planner",
            "oracle",
            "--out",
            out.to_str().unwrap(),
        ])
        .output()
        .expect("runs");
    assert!(
        output.status.success(),
        "{}",
        String::from_utf8_lossy(&output.stderr)
    );
    let stdout = String::from_utf8_lossy(&output.stdout);
    assert!(stdout.contains("success=true"), "{stdout}");
    assert!(stdout.contains("steps=13"), "{stdout}");

    // Replay the emitted trace against the same task: digests must check.
    let trace = out.join("traces/s1_t2_apple_to_dining_table.trace.jsonl");
    assert!(trace.exists());
    let output = bin()
        .args([
            "replay",
            "--task",
            "s1_t2_apple_to_dining_table",
            "--trace",
            trace.to_str().unwrap(),
        ])
        .output()
        .expect("runs");
    assert!(
        output.status.success(),
        "{}",
        String::from_utf8_lossy(&output.stderr)
    );
    let stdout = String::from_utf8_lossy(&output.stdout);
    assert!(stdout.contains("digests ok, goal reached"), "{stdout}");

    // A corrupted trace fails with a nonzero exit code.
    let tampered = out.join("tampered.trace.jsonl");
    let text = std::fs::read_to_string(&trace).unwrap();
    std::fs::write(&tampered, text.replacen("[grab] <apple>", "[movetowards] <apple>", 1))
        .unwrap();
    let output = bin()
        .args([
            "replay",
            "--task",
            "s1_t2_apple_to_dining_table",
            "--trace",
            tampered.to_str().unwrap(),
        ])
        .output()
        .expect("runs");
    assert!(!output.status.success());
    assert!(String::from_utf8_lossy(&output.stderr).contains("digest mismatch"));

    // Reformat the scored episodes as CSV.
    let output = bin()
        .args([
            "report",
            "--episodes",
            out.join("episodes.jsonl").to_str().unwrap(),
            "--format",
            "csv",
            "--method",
            "oracle",
        ])
        .output()
        .expect("runs");
    assert!(output.status.success());
    let stdout = String::from_utf8_lossy(&output.stdout);
    assert!(stdout.starts_with("method,cell,sr,as,count"), "{stdout}");
    assert!(stdout.contains("oracle,trio,1.000,13.0,1"), "{stdout}");

    let _ = std::fs::remove_dir_all(&out);
}

#[test]
fn unknown_task_is_an_infrastructure_error() {
    let output = bin()
        .args(["run", "--task", "no_such_task", "--planner", "oracle"])
        .output()
        .expect("runs");
    assert_eq!(output.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&output.stderr).contains("unknown built-in task"));
}

#[test]
fn failed_tasks_still_exit_zero() {
    // An empty scripted backend makes every proposal a no-op; the episode
    // fails on budget exhaustion, but the episode was scored, so the exit
    // code stays zero.
    let output = bin()
        .args([
            "run",
            "--task",
            "s1_m1_apple_to_bench",
            "--planner",
            "pefa",
            "--backend",
            "scripted",
        ])
        .output()
        .expect("runs");
    assert!(
        output.status.success(),
        "{}",
        String::from_utf8_lossy(&output.stderr)
    );
    let stdout = String::from_utf8_lossy(&output.stdout);
    assert!(stdout.contains("success=false"), "{stdout}");
    assert!(stdout.contains("steps=10"), "{stdout}");
}
