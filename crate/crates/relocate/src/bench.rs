//! Benchmark harness: run both solvers over a suite of generated instances
//! and report lengths, lower bounds, and duality gaps as an aligned text
//! table plus CSV.

use std::sync::Mutex;
use std::time::Instant;

use serde::Deserialize;
use thiserror::Error;

use crate::generator::{generate, GenParams};
use crate::liftflow::solve_liftflow;
use crate::mip::{SolveLimits, SolveStatus};
use crate::time_expanded::solve_exact;

/// One suite entry: a name plus generation parameters.
#[derive(Debug, Clone)]
pub struct BenchSpec {
    pub name: String,
    pub params: GenParams,
}

/// A benchmark suite: specs plus per-solver limits.
#[derive(Debug, Clone)]
pub struct BenchSuite {
    pub specs: Vec<BenchSpec>,
    pub lf_time_limit: Option<f64>,
    pub exact_time_limit: Option<f64>,
    pub exact_node_limit: Option<u64>,
}

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("invalid suite file: {0}")]
    BadSuite(String),
}

#[derive(Deserialize)]
struct SuiteJson {
    #[serde(default)]
    limits: LimitsJson,
    rows: Vec<RowJson>,
}

#[derive(Deserialize, Default)]
struct LimitsJson {
    lf_time_limit: Option<f64>,
    exact_time_limit: Option<f64>,
    exact_node_limit: Option<u64>,
}

#[derive(Deserialize)]
struct RowJson {
    name: String,
    stations: usize,
    over: usize,
    under: usize,
    #[serde(rename = "T")]
    horizon: u32,
    #[serde(rename = "L")]
    convoy: u32,
    k: u32,
    seed: u64,
    #[serde(default)]
    plane_size: Option<f64>,
    #[serde(default)]
    surplus_min: Option<u64>,
    #[serde(default)]
    surplus_max: Option<u64>,
    #[serde(default)]
    cap_slack: Option<u64>,
}

/// Parses the JSON suite format.
pub fn parse_suite(text: &str) -> Result<BenchSuite, BenchError> {
    let doc: SuiteJson = serde_json::from_str(text).map_err(|e| BenchError::BadSuite(e.to_string()))?;
    let specs = doc
        .rows
        .into_iter()
        .map(|r| {
            let defaults = GenParams::default();
            BenchSpec {
                name: r.name,
                params: GenParams {
                    stations: r.stations,
                    overfull: r.over,
                    underfull: r.under,
                    horizon: r.horizon,
                    convoy_capacity: r.convoy,
                    drivers: r.k,
                    plane_size: r.plane_size.unwrap_or(defaults.plane_size),
                    surplus_range: (
                        r.surplus_min.unwrap_or(defaults.surplus_range.0),
                        r.surplus_max.unwrap_or(defaults.surplus_range.1),
                    ),
                    capacity_slack: (0, r.cap_slack.unwrap_or(0)),
                    seed: r.seed,
                },
            }
        })
        .collect();
    Ok(BenchSuite {
        specs,
        lf_time_limit: doc.limits.lf_time_limit,
        exact_time_limit: doc.limits.exact_time_limit,
        exact_node_limit: doc.limits.exact_node_limit,
    })
}

/// One result row of the benchmark table.
#[derive(Debug, Clone, PartialEq)]
pub struct BenchRow {
    pub name: String,
    pub stations: usize,
    pub overfull: usize,
    pub underfull: usize,
    pub horizon: u32,
    pub convoy: u32,
    pub drivers: u32,
    pub lf_length: Option<u64>,
    pub lb: Option<u64>,
    /// `(LF - LB) / LF * 100`.
    pub gap_pct: Option<f64>,
    pub exact_length: Option<u64>,
    /// `(exact - LB) / exact * 100`.
    pub exact_gap_pct: Option<f64>,
    pub lf_seconds: f64,
    pub exact_seconds: f64,
    /// True when the heuristic schedule contains a tour exceeding the
    /// horizon (starred in the table).
    pub horizon_violation: bool,
    pub error: Option<String>,
}

/// Full outcome of a suite run, rows in suite order.
#[derive(Debug, Clone, PartialEq)]
pub struct BenchTable {
    pub rows: Vec<BenchRow>,
}

impl BenchTable {
    pub fn average_gap_pct(&self) -> Option<f64> {
        average(self.rows.iter().filter_map(|r| r.gap_pct))
    }

    pub fn average_exact_gap_pct(&self) -> Option<f64> {
        average(self.rows.iter().filter_map(|r| r.exact_gap_pct))
    }
}

fn average(values: impl Iterator<Item = f64>) -> Option<f64> {
    let collected: Vec<f64> = values.collect();
    if collected.is_empty() {
        None
    } else {
        Some(collected.iter().sum::<f64>() / collected.len() as f64)
    }
}

fn gap_pct(value: u64, bound: u64) -> f64 {
    if value == 0 {
        0.0
    } else {
        (value.saturating_sub(bound)) as f64 / value as f64 * 100.0
    }
}

/// Runs one suite entry.
pub fn run_spec(spec: &BenchSpec, suite: &BenchSuite) -> BenchRow {
    let mut row = BenchRow {
        name: spec.name.clone(),
        stations: spec.params.stations,
        overfull: spec.params.overfull,
        underfull: spec.params.underfull,
        horizon: spec.params.horizon,
        convoy: spec.params.convoy_capacity,
        drivers: spec.params.drivers,
        lf_length: None,
        lb: None,
        gap_pct: None,
        exact_length: None,
        exact_gap_pct: None,
        lf_seconds: 0.0,
        exact_seconds: 0.0,
        horizon_violation: false,
        error: None,
    };
    let instance = match generate(&spec.params) {
        Ok(i) => i,
        Err(e) => {
            row.error = Some(e.to_string());
            return row;
        }
    };

    let lf_limits = suite
        .lf_time_limit
        .map(SolveLimits::with_time_limit)
        .unwrap_or_default();
    let started = Instant::now();
    match solve_liftflow(&instance, &lf_limits) {
        Ok(outcome) => {
            row.lf_seconds = started.elapsed().as_secs_f64();
            row.lf_length = Some(outcome.report.total_length);
            row.lb = Some(outcome.lower_bound);
            row.gap_pct = Some(gap_pct(outcome.report.total_length, outcome.lower_bound));
            row.horizon_violation = !outcome.report.horizon_violations.is_empty();
        }
        Err(e) => {
            row.lf_seconds = started.elapsed().as_secs_f64();
            row.error = Some(format!("liftflow: {e}"));
        }
    }

    let mut exact_limits = suite
        .exact_time_limit
        .map(SolveLimits::with_time_limit)
        .unwrap_or_default();
    exact_limits.node_limit = suite.exact_node_limit;
    let started = Instant::now();
    match solve_exact(&instance, &exact_limits) {
        Ok(result) => {
            row.exact_seconds = started.elapsed().as_secs_f64();
            if result.solution.has_solution() {
                let length = result.solution.objective.round() as u64;
                row.exact_length = Some(length);
                if let Some(lb) = row.lb {
                    row.exact_gap_pct = Some(gap_pct(length, lb));
                }
            } else if row.error.is_none() {
                row.error = Some(format!("exact: {}", result.solution.status));
            }
        }
        Err(e) => {
            row.exact_seconds = started.elapsed().as_secs_f64();
            if row.error.is_none() {
                row.error = Some(format!("exact: {e}"));
            }
        }
    }
    row
}

/// Executes the suite. Rows run concurrently up to `RELOCATE_THREADS`
/// workers (default: available parallelism); results keep suite order.
/// Per-row failures land in the row's error column and never abort the run.
pub fn run_suite(suite: &BenchSuite) -> BenchTable {
    let worker_cap = std::env::var("RELOCATE_THREADS")
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
        .filter(|&v| v > 0)
        .unwrap_or_else(|| {
            std::thread::available_parallelism()
                .map(|v| v.get())
                .unwrap_or(1)
        });
    let workers = worker_cap.min(suite.specs.len()).max(1);

    let results: Mutex<Vec<Option<BenchRow>>> = Mutex::new(vec![None; suite.specs.len()]);
    let next: Mutex<usize> = Mutex::new(0);
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let index = {
                    let mut guard = next.lock().expect("queue lock");
                    let i = *guard;
                    *guard += 1;
                    i
                };
                if index >= suite.specs.len() {
                    break;
                }
                let row = run_spec(&suite.specs[index], suite);
                results.lock().expect("results lock")[index] = Some(row);
            });
        }
    });
    BenchTable {
        rows: results
            .into_inner()
            .expect("results lock")
            .into_iter()
            .map(|r| r.expect("row computed"))
            .collect(),
    }
}

fn fmt_opt_u64(v: Option<u64>, star: bool) -> String {
    match v {
        Some(x) if star => format!("{x}*"),
        Some(x) => x.to_string(),
        None => "-".to_string(),
    }
}

fn fmt_opt_pct(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.1}")).unwrap_or_else(|| "-".into())
}

/// Renders the aligned text table with the average-gap footer.
pub fn render_table(table: &BenchTable) -> String {
    let header = [
        "instance", "stations", "+/-", "T", "L", "k", "LF", "LB", "GAP%", "ILP", "GAP%",
        "t_LF(s)", "t_ILP(s)", "note",
    ];
    let mut rows: Vec<Vec<String>> = vec![header.iter().map(|s| s.to_string()).collect()];
    for r in &table.rows {
        rows.push(vec![
            r.name.clone(),
            r.stations.to_string(),
            format!("{}/{}", r.overfull, r.underfull),
            r.horizon.to_string(),
            r.convoy.to_string(),
            r.drivers.to_string(),
            fmt_opt_u64(r.lf_length, r.horizon_violation),
            fmt_opt_u64(r.lb, false),
            fmt_opt_pct(r.gap_pct),
            fmt_opt_u64(r.exact_length, false),
            fmt_opt_pct(r.exact_gap_pct),
            format!("{:.2}", r.lf_seconds),
            format!("{:.2}", r.exact_seconds),
            r.error.clone().unwrap_or_default(),
        ]);
    }
    rows.push(vec![
        "average".into(),
        String::new(),
        String::new(),
        String::new(),
        String::new(),
        String::new(),
        String::new(),
        String::new(),
        fmt_opt_pct(table.average_gap_pct()),
        String::new(),
        fmt_opt_pct(table.average_exact_gap_pct()),
        String::new(),
        String::new(),
        String::new(),
    ]);

    let widths: Vec<usize> = (0..header.len())
        .map(|c| rows.iter().map(|r| r[c].len()).max().unwrap_or(0))
        .collect();
    let mut out = String::new();
    for row in &rows {
        let line: Vec<String> = row
            .iter()
            .zip(&widths)
            .map(|(cell, &w)| format!("{cell:<w$}"))
            .collect();
        out.push_str(line.join("  ").trim_end());
        out.push('\n');
    }
    out
}

/// Renders the CSV form. Commas inside error messages become semicolons so
/// rows stay machine-parsable.
pub fn render_csv(table: &BenchTable) -> String {
    let mut out = String::from(
        "name,stations,overfull,underfull,T,L,k,lf,lb,gap_pct,exact,exact_gap_pct,\
         lf_seconds,exact_seconds,horizon_violation,error\n",
    );
    for r in &table.rows {
        let error = r
            .error
            .clone()
            .unwrap_or_default()
            .replace(',', ";")
            .replace('\n', " ");
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{},{},{},{:.3},{:.3},{},{}\n",
            r.name,
            r.stations,
            r.overfull,
            r.underfull,
            r.horizon,
            r.convoy,
            r.drivers,
            r.lf_length.map(|v| v.to_string()).unwrap_or_default(),
            r.lb.map(|v| v.to_string()).unwrap_or_default(),
            r.gap_pct.map(|v| format!("{v:.1}")).unwrap_or_default(),
            r.exact_length.map(|v| v.to_string()).unwrap_or_default(),
            r.exact_gap_pct.map(|v| format!("{v:.1}")).unwrap_or_default(),
            r.lf_seconds,
            r.exact_seconds,
            r.horizon_violation,
            error,
        ));
    }
    out
}

/// Parses the CSV form back into rows.
pub fn parse_csv(text: &str) -> Result<BenchTable, BenchError> {
    let mut lines = text.lines();
    let _header = lines
        .next()
        .ok_or_else(|| BenchError::BadSuite("empty CSV".into()))?;
    let mut rows = Vec::new();
    for (ln, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 16 {
            return Err(BenchError::BadSuite(format!(
                "line {}: expected 16 fields, found {}",
                ln + 2,
                fields.len()
            )));
        }
        let opt_u64 = |s: &str| -> Option<u64> { (!s.is_empty()).then(|| s.parse().ok()).flatten() };
        let opt_f64 = |s: &str| -> Option<f64> { (!s.is_empty()).then(|| s.parse().ok()).flatten() };
        let parse_err = |what: &str| BenchError::BadSuite(format!("line {}: bad {what}", ln + 2));
        rows.push(BenchRow {
            name: fields[0].to_string(),
            stations: fields[1].parse().map_err(|_| parse_err("stations"))?,
            overfull: fields[2].parse().map_err(|_| parse_err("overfull"))?,
            underfull: fields[3].parse().map_err(|_| parse_err("underfull"))?,
            horizon: fields[4].parse().map_err(|_| parse_err("T"))?,
            convoy: fields[5].parse().map_err(|_| parse_err("L"))?,
            drivers: fields[6].parse().map_err(|_| parse_err("k"))?,
            lf_length: opt_u64(fields[7]),
            lb: opt_u64(fields[8]),
            gap_pct: opt_f64(fields[9]),
            exact_length: opt_u64(fields[10]),
            exact_gap_pct: opt_f64(fields[11]),
            lf_seconds: fields[12].parse().map_err(|_| parse_err("lf_seconds"))?,
            exact_seconds: fields[13].parse().map_err(|_| parse_err("exact_seconds"))?,
            horizon_violation: fields[14].parse().map_err(|_| parse_err("horizon_violation"))?,
            error: (!fields[15].is_empty()).then(|| fields[15].to_string()),
        });
    }
    Ok(BenchTable { rows })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_suite() -> BenchSuite {
        let spec = |name: &str, seed: u64| BenchSpec {
            name: name.into(),
            params: GenParams {
                stations: 6,
                overfull: 1,
                underfull: 1,
                horizon: 40,
                convoy_capacity: 2,
                drivers: 1,
                plane_size: 12.0,
                surplus_range: (1, 2),
                capacity_slack: (0, 0),
                seed,
            },
        };
        BenchSuite {
            specs: vec![spec("a", 3), spec("b", 4)],
            lf_time_limit: None,
            exact_time_limit: None,
            exact_node_limit: None,
        }
    }

    #[test]
    fn suite_runs_to_rows_with_footer() {
        let table = run_suite(&tiny_suite());
        assert_eq!(table.rows.len(), 2);
        for row in &table.rows {
            assert!(row.error.is_none(), "{:?}", row.error);
            assert!(row.lb.unwrap() <= row.lf_length.unwrap());
            assert!(row.gap_pct.unwrap() >= 0.0);
        }
        let text = render_table(&table);
        assert!(text.lines().count() == 4); // header + 2 rows + average
        assert!(text.contains("average"));
    }

    #[test]
    fn csv_round_trip_is_identical() {
        let table = run_suite(&tiny_suite());
        let csv = render_csv(&table);
        let parsed = parse_csv(&csv).unwrap();
        assert_eq!(render_csv(&parsed), csv);
    }

    #[test]
    fn suite_json_parses() {
        let text = r#"{
            "limits": {"lf_time_limit": 5.0, "exact_time_limit": 10.0},
            "rows": [
                {"name": "r1", "stations": 8, "over": 2, "under": 2,
                 "T": 30, "L": 2, "k": 1, "seed": 5}
            ]
        }"#;
        let suite = parse_suite(text).unwrap();
        assert_eq!(suite.specs.len(), 1);
        assert_eq!(suite.specs[0].params.stations, 8);
        assert_eq!(suite.lf_time_limit, Some(5.0));
    }

    #[test]
    fn failed_generation_lands_in_error_column() {
        let mut suite = tiny_suite();
        suite.specs[1].params.overfull = 9; // more task stations than stations
        let table = run_suite(&suite);
        assert!(table.rows[0].error.is_none());
        assert!(table.rows[1].error.is_some());
    }
}
