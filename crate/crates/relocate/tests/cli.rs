//! End-to-end checks of the command-line interface: flags, files, and the
//! documented exit codes.

use std::path::PathBuf;
use std::process::{Command, Output};

fn relocate(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_relocate"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn tmp(name: &str) -> PathBuf {
    let mut dir = std::env::temp_dir();
    dir.push(format!("relocate-cli-{}-{name}", std::process::id()));
    dir
}

#[test]
fn gen_is_deterministic_and_valid() {
    let out_a = tmp("a.json");
    let out_b = tmp("b.json");
    let flags = [
        "gen", "--stations", "12", "--over", "3", "--under", "3", "--T", "40", "--L", "3",
        "--k", "2", "--seed", "7",
    ];
    let mut args_a: Vec<&str> = flags.to_vec();
    let path_a = out_a.to_str().unwrap();
    args_a.extend(["--out", path_a]);
    let status = relocate(&args_a);
    assert_eq!(status.status.code(), Some(0), "{status:?}");

    let mut args_b: Vec<&str> = flags.to_vec();
    let path_b = out_b.to_str().unwrap();
    args_b.extend(["--out", path_b]);
    relocate(&args_b);
    assert_eq!(
        std::fs::read(&out_a).unwrap(),
        std::fs::read(&out_b).unwrap(),
        "same flags and seed must produce identical bytes"
    );
    std::fs::remove_file(out_b).ok();

    // missing required flag: usage error
    let usage = relocate(&["gen", "--stations", "5"]);
    assert_eq!(usage.status.code(), Some(64));

    // unsatisfiable parameters: generation failure
    let bad = relocate(&[
        "gen", "--stations", "4", "--over", "2", "--under", "2", "--T", "10", "--L", "1",
        "--k", "1", "--seed", "1", "--out", path_a,
    ]);
    assert_eq!(bad.status.code(), Some(2));
    std::fs::remove_file(out_a).ok();
}

#[test]
fn solve_validate_pipeline() {
    let instance_path = tmp("pipe.json");
    let path = instance_path.to_str().unwrap();
    let status = relocate(&[
        "gen", "--stations", "8", "--over", "2", "--under", "2", "--T", "40", "--L", "2",
        "--k", "1", "--seed", "11", "--plane-size", "12", "--out", path,
    ]);
    assert_eq!(status.status.code(), Some(0));

    let prefix = tmp("pipe-out");
    let prefix_str = prefix.to_str().unwrap();
    let solve = relocate(&[
        "solve", "--method", "both", "--in", path, "--out", prefix_str, "--time-limit", "10",
    ]);
    let stdout = String::from_utf8_lossy(&solve.stdout);
    assert_eq!(solve.status.code(), Some(0), "{stdout}\n{solve:?}");
    assert!(stdout.contains("comparison:"), "{stdout}");

    for suffix in [".liftflow.schedule.json", ".exact.schedule.json"] {
        let schedule = format!("{prefix_str}{suffix}");
        let strict: &[&str] = if suffix.contains("exact") {
            &["--strict-horizon"]
        } else {
            &[]
        };
        let mut args = vec!["validate", "--in", path, "--schedule", schedule.as_str()];
        args.extend_from_slice(strict);
        let validate = relocate(&args);
        assert_eq!(
            validate.status.code(),
            Some(0),
            "{}",
            String::from_utf8_lossy(&validate.stdout)
        );
        std::fs::remove_file(&schedule).ok();
    }
    for suffix in [".liftflow.report.json", ".exact.report.json"] {
        std::fs::remove_file(format!("{prefix_str}{suffix}")).ok();
    }

    // malformed instance: data error
    let broken = tmp("broken.json");
    std::fs::write(&broken, "{\"stations\": []").unwrap();
    let parse = relocate(&[
        "solve", "--method", "liftflow", "--in", broken.to_str().unwrap(),
    ]);
    assert_eq!(parse.status.code(), Some(65));
    std::fs::remove_file(&broken).ok();
    std::fs::remove_file(&instance_path).ok();
}

#[test]
fn solve_reports_infeasible_horizon() {
    let instance_path = tmp("tight.json");
    let path = instance_path.to_str().unwrap();
    relocate(&[
        "gen", "--stations", "6", "--over", "1", "--under", "1", "--T", "2", "--L", "2",
        "--k", "1", "--seed", "3", "--out", path,
    ]);
    let solve = relocate(&["solve", "--method", "exact", "--in", path]);
    assert_eq!(solve.status.code(), Some(3), "{solve:?}");
    std::fs::remove_file(&instance_path).ok();
}

#[test]
fn broken_schedule_fails_validation() {
    let instance_path = tmp("val.json");
    let path = instance_path.to_str().unwrap();
    relocate(&[
        "gen", "--stations", "6", "--over", "1", "--under", "1", "--T", "30", "--L", "2",
        "--k", "1", "--seed", "5", "--out", path,
    ]);
    let schedule_path = tmp("val-schedule.json");
    std::fs::write(
        &schedule_path,
        r#"{"tours":[{"driver":1,"moves":[{"from":0,"to":1,"dep":0,"arr":1,"load":9}]}]}"#,
    )
    .unwrap();
    let validate = relocate(&[
        "validate", "--in", path, "--schedule", schedule_path.to_str().unwrap(),
    ]);
    assert_eq!(validate.status.code(), Some(1));
    let stdout = String::from_utf8_lossy(&validate.stdout);
    assert!(stdout.contains("violation"), "{stdout}");
    std::fs::remove_file(&instance_path).ok();
    std::fs::remove_file(&schedule_path).ok();
}

#[test]
fn bench_writes_table_and_csv() {
    let suite_path = tmp("suite.json");
    std::fs::write(
        &suite_path,
        r#"{
            "limits": {"exact_time_limit": 30.0},
            "rows": [
                {"name": "s1", "stations": 6, "over": 1, "under": 1,
                 "T": 30, "L": 2, "k": 1, "seed": 4, "plane_size": 10.0},
                {"name": "s2", "stations": 7, "over": 2, "under": 1,
                 "T": 36, "L": 2, "k": 1, "seed": 9, "plane_size": 10.0}
            ]
        }"#,
    )
    .unwrap();
    let prefix = tmp("bench");
    let prefix_str = prefix.to_str().unwrap();
    let bench = relocate(&[
        "bench", "--suite", suite_path.to_str().unwrap(), "--out", prefix_str,
    ]);
    assert_eq!(bench.status.code(), Some(0), "{bench:?}");
    let table = std::fs::read_to_string(format!("{prefix_str}.txt")).unwrap();
    assert!(table.contains("average"));
    let csv = std::fs::read_to_string(format!("{prefix_str}.csv")).unwrap();
    assert_eq!(csv.lines().count(), 3); // header + 2 rows
    std::fs::remove_file(&suite_path).ok();
    std::fs::remove_file(format!("{prefix_str}.txt")).ok();
    std::fs::remove_file(format!("{prefix_str}.csv")).ok();
}

#[test]
fn unknown_command_is_usage_error() {
    assert_eq!(relocate(&["frobnicate"]).status.code(), Some(64));
    assert_eq!(relocate(&[]).status.code(), Some(64));
    assert_eq!(relocate(&["help"]).status.code(), Some(0));
}
