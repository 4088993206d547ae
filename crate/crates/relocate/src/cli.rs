//! Command-line front end: generate instances, run solvers, validate
//! schedules, and emit benchmark tables.
//!
//! Exit codes: 0 success, 1 validation findings or output failure,
//! 2 generation failed, 3 no schedule exists within the horizon,
//! 4 limit reached without an incumbent, 64 usage error, 65 unreadable or
//! malformed input.

use std::collections::BTreeMap;
use std::time::Instant;

use serde::Serialize;

use crate::bench;
use crate::generator::{generate, GenParams};
use crate::instance::{instance_to_json, parse_instance_json, Instance};
use crate::liftflow::solve_liftflow;
use crate::mip::{SolveLimits, SolveStatus};
use crate::schedule::{
    parse_schedule_json, schedule_to_json, validate_schedule, TransportationSchedule,
};
use crate::time_expanded::solve_exact;

const EX_OK: i32 = 0;
const EX_FINDINGS: i32 = 1;
const EX_GENFAIL: i32 = 2;
const EX_INFEASIBLE: i32 = 3;
const EX_NO_INCUMBENT: i32 = 4;
const EX_USAGE: i32 = 64;
const EX_DATA: i32 = 65;

const USAGE: &str = "\
relocate: solvers for the static relocation problem in carsharing

Usage:
  relocate gen --stations N --over N --under N --T N --L N --k N --seed N --out FILE
               [--plane-size F] [--surplus-min N] [--surplus-max N] [--cap-slack N]
  relocate solve --method exact|liftflow|both --in FILE [--out PREFIX]
                 [--time-limit SECONDS] [--node-limit N]
  relocate validate --in FILE --schedule FILE [--strict-horizon]
  relocate bench --suite FILE --out PREFIX

Generated files are the documented JSON formats; bench writes PREFIX.txt
and PREFIX.csv. RELOCATE_THREADS caps bench parallelism.
";

struct Failure {
    code: i32,
    message: String,
}

impl Failure {
    fn new(code: i32, message: impl Into<String>) -> Self {
        Self {
            code,
            message: message.into(),
        }
    }
}

type CmdResult = Result<i32, Failure>;

pub fn run(args: Vec<String>) -> i32 {
    let result = match args.first().map(String::as_str) {
        Some("gen") => cmd_gen(&args[1..]),
        Some("solve") => cmd_solve(&args[1..]),
        Some("validate") => cmd_validate(&args[1..]),
        Some("bench") => cmd_bench(&args[1..]),
        Some("help") | Some("--help") | Some("-h") => {
            print!("{USAGE}");
            Ok(EX_OK)
        }
        Some(other) => Err(Failure::new(EX_USAGE, format!("unknown command `{other}`"))),
        None => Err(Failure::new(EX_USAGE, "no command given")),
    };
    match result {
        Ok(code) => code,
        Err(failure) => {
            eprintln!("error: {}", failure.message);
            if failure.code == EX_USAGE {
                eprint!("{USAGE}");
            }
            failure.code
        }
    }
}

struct Flags {
    values: BTreeMap<String, String>,
    switches: Vec<String>,
}

fn parse_flags(args: &[String], valued: &[&str], switches: &[&str]) -> Result<Flags, Failure> {
    let mut flags = Flags {
        values: BTreeMap::new(),
        switches: Vec::new(),
    };
    let mut iter = args.iter();
    while let Some(arg) = iter.next() {
        let Some(name) = arg.strip_prefix("--") else {
            return Err(Failure::new(EX_USAGE, format!("unexpected argument `{arg}`")));
        };
        if switches.contains(&name) {
            flags.switches.push(name.to_string());
        } else if valued.contains(&name) {
            let value = iter
                .next()
                .ok_or_else(|| Failure::new(EX_USAGE, format!("flag --{name} needs a value")))?;
            flags.values.insert(name.to_string(), value.clone());
        } else {
            return Err(Failure::new(EX_USAGE, format!("unknown flag --{name}")));
        }
    }
    Ok(flags)
}

impl Flags {
    fn required(&self, name: &str) -> Result<&str, Failure> {
        self.values
            .get(name)
            .map(String::as_str)
            .ok_or_else(|| Failure::new(EX_USAGE, format!("missing required flag --{name}")))
    }

    fn parsed<T: std::str::FromStr>(&self, name: &str) -> Result<T, Failure> {
        self.required(name)?
            .parse()
            .map_err(|_| Failure::new(EX_USAGE, format!("flag --{name} has an invalid value")))
    }

    fn optional<T: std::str::FromStr>(&self, name: &str) -> Result<Option<T>, Failure> {
        self.values
            .get(name)
            .map(|v| {
                v.parse()
                    .map_err(|_| Failure::new(EX_USAGE, format!("flag --{name} has an invalid value")))
            })
            .transpose()
    }

    fn switch(&self, name: &str) -> bool {
        self.switches.iter().any(|s| s == name)
    }
}

fn write_file(path: &str, contents: &str) -> Result<(), Failure> {
    std::fs::write(path, contents)
        .map_err(|e| Failure::new(EX_FINDINGS, format!("cannot write {path}: {e}")))
}

fn read_instance(path: &str) -> Result<Instance, Failure> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Failure::new(EX_DATA, format!("cannot read {path}: {e}")))?;
    let (instance, warnings) = parse_instance_json(&text)
        .map_err(|e| Failure::new(EX_DATA, format!("malformed instance {path}: {e}")))?;
    for w in warnings {
        eprintln!("warning: {path}: {w}");
    }
    Ok(instance)
}

fn cmd_gen(args: &[String]) -> CmdResult {
    let flags = parse_flags(
        args,
        &[
            "stations",
            "over",
            "under",
            "T",
            "L",
            "k",
            "seed",
            "out",
            "plane-size",
            "surplus-min",
            "surplus-max",
            "cap-slack",
        ],
        &[],
    )?;
    let defaults = GenParams::default();
    let params = GenParams {
        stations: flags.parsed("stations")?,
        overfull: flags.parsed("over")?,
        underfull: flags.parsed("under")?,
        horizon: flags.parsed("T")?,
        convoy_capacity: flags.parsed("L")?,
        drivers: flags.parsed("k")?,
        seed: flags.parsed("seed")?,
        plane_size: flags.optional("plane-size")?.unwrap_or(defaults.plane_size),
        surplus_range: (
            flags.optional("surplus-min")?.unwrap_or(defaults.surplus_range.0),
            flags.optional("surplus-max")?.unwrap_or(defaults.surplus_range.1),
        ),
        capacity_slack: (0, flags.optional("cap-slack")?.unwrap_or(0)),
    };
    let out = flags.required("out")?;
    match generate(&params) {
        Ok(instance) => {
            write_file(out, &instance_to_json(&instance))?;
            println!(
                "wrote {out}: {} stations, {} tasks, T = {}, L = {}, k = {}",
                instance.station_count(),
                crate::instance::derive_tasks(&instance).len(),
                instance.horizon,
                instance.capacity_l,
                instance.k
            );
            Ok(EX_OK)
        }
        Err(e) => Err(Failure::new(EX_GENFAIL, e.to_string())),
    }
}

#[derive(Serialize)]
struct ExactReportJson {
    method: &'static str,
    status: String,
    total_length: Option<u64>,
    bound: f64,
    gap: Option<f64>,
    runtime_s: f64,
    nodes: u64,
}

fn solve_limits(flags: &Flags) -> Result<SolveLimits, Failure> {
    let mut limits = SolveLimits::default();
    if let Some(seconds) = flags.optional::<f64>("time-limit")? {
        limits.time_limit = Some(std::time::Duration::from_secs_f64(seconds));
    }
    limits.node_limit = flags.optional("node-limit")?;
    Ok(limits)
}

fn run_exact(
    instance: &Instance,
    limits: &SolveLimits,
    out: Option<&str>,
    suffix: &str,
) -> CmdResult {
    let started = Instant::now();
    let result = solve_exact(instance, limits)
        .map_err(|e| Failure::new(EX_FINDINGS, format!("exact solver failed: {e}")))?;
    let runtime = started.elapsed().as_secs_f64();
    let report = ExactReportJson {
        method: "exact",
        status: result.solution.status.to_string(),
        total_length: result
            .schedule
            .as_ref()
            .map(|s| s.total_length(&instance.metric)),
        bound: result.solution.bound,
        gap: result.solution.gap,
        runtime_s: runtime,
        nodes: result.solution.stats.nodes,
    };
    if let Some(prefix) = out {
        let mut report_text =
            serde_json::to_string_pretty(&report).expect("report serialization");
        report_text.push('\n');
        write_file(&format!("{prefix}{suffix}.report.json"), &report_text)?;
        if let Some(schedule) = &result.schedule {
            write_file(
                &format!("{prefix}{suffix}.schedule.json"),
                &schedule_to_json(schedule),
            )?;
        }
    }
    match (&result.schedule, result.solution.status) {
        (Some(schedule), status) => {
            println!(
                "exact: {} total length {} (bound {:.1}, {} nodes, {:.2}s)",
                status,
                schedule.total_length(&instance.metric),
                result.solution.bound,
                result.solution.stats.nodes,
                runtime
            );
            Ok(EX_OK)
        }
        (None, SolveStatus::Infeasible) => {
            println!("exact: no schedule exists within horizon T = {}", instance.horizon);
            Ok(EX_INFEASIBLE)
        }
        (None, _) => {
            println!(
                "exact: {} without incumbent (bound {:.1}, {:.2}s)",
                result.solution.status, result.solution.bound, runtime
            );
            Ok(EX_NO_INCUMBENT)
        }
    }
}

fn run_liftflow(
    instance: &Instance,
    limits: &SolveLimits,
    out: Option<&str>,
    suffix: &str,
) -> Result<(TransportationSchedule, u64, u64, i32), Failure> {
    let started = Instant::now();
    let outcome = solve_liftflow(instance, limits)
        .map_err(|e| Failure::new(EX_FINDINGS, format!("liftflow failed: {e}")))?;
    let runtime = started.elapsed().as_secs_f64();
    if let Some(prefix) = out {
        write_file(
            &format!("{prefix}{suffix}.schedule.json"),
            &schedule_to_json(&outcome.schedule),
        )?;
        write_file(
            &format!("{prefix}{suffix}.report.json"),
            &outcome.report.to_json(),
        )?;
    }
    println!("liftflow: {} ({:.2}s)", outcome.report, runtime);
    Ok((
        outcome.schedule,
        outcome.report.total_length,
        outcome.lower_bound,
        EX_OK,
    ))
}

fn cmd_solve(args: &[String]) -> CmdResult {
    let flags = parse_flags(
        args,
        &["method", "in", "out", "time-limit", "node-limit"],
        &[],
    )?;
    let method = flags.required("method")?.to_string();
    let instance = read_instance(flags.required("in")?)?;
    let limits = solve_limits(&flags)?;
    let out = flags.values.get("out").map(String::as_str);

    match method.as_str() {
        "exact" => run_exact(&instance, &limits, out, ""),
        "liftflow" => run_liftflow(&instance, &limits, out, "").map(|(_, _, _, code)| code),
        "both" => {
            let (_, lf_length, lb, _) = run_liftflow(&instance, &limits, out, ".liftflow")?;
            let exact_code = run_exact(&instance, &limits, out, ".exact")?;
            let lf_gap = if lf_length == 0 {
                0.0
            } else {
                (lf_length.saturating_sub(lb)) as f64 / lf_length as f64 * 100.0
            };
            println!("comparison: LF = {lf_length}, LB = {lb}, GAP% = {lf_gap:.1}");
            Ok(exact_code)
        }
        other => Err(Failure::new(
            EX_USAGE,
            format!("unknown method `{other}` (expected exact, liftflow, or both)"),
        )),
    }
}

fn cmd_validate(args: &[String]) -> CmdResult {
    let flags = parse_flags(args, &["in", "schedule"], &["strict-horizon"])?;
    let instance = read_instance(flags.required("in")?)?;
    let schedule_path = flags.required("schedule")?;
    let text = std::fs::read_to_string(schedule_path)
        .map_err(|e| Failure::new(EX_DATA, format!("cannot read {schedule_path}: {e}")))?;
    let schedule = parse_schedule_json(&text)
        .map_err(|e| Failure::new(EX_DATA, format!("malformed schedule {schedule_path}: {e}")))?;
    let report = validate_schedule(&schedule, &instance, flags.switch("strict-horizon"));
    println!("{report}");
    Ok(if report.is_clean() { EX_OK } else { EX_FINDINGS })
}

fn cmd_bench(args: &[String]) -> CmdResult {
    let flags = parse_flags(args, &["suite", "out"], &[])?;
    let suite_path = flags.required("suite")?;
    let out = flags.required("out")?;
    let text = std::fs::read_to_string(suite_path)
        .map_err(|e| Failure::new(EX_DATA, format!("cannot read {suite_path}: {e}")))?;
    let suite = bench::parse_suite(&text)
        .map_err(|e| Failure::new(EX_DATA, e.to_string()))?;
    let table = bench::run_suite(&suite);
    let rendered = bench::render_table(&table);
    print!("{rendered}");
    write_file(&format!("{out}.txt"), &rendered)?;
    write_file(&format!("{out}.csv"), &bench::render_csv(&table))?;
    Ok(EX_OK)
}
