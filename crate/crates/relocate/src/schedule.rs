//! Moves, tours, and transportation schedules, plus system-state simulation,
//! feasibility validation, and a brute-force optimal-schedule search for
//! tiny instances.
//!
//! Load accounting convention: the load difference between consecutive moves
//! of a tour materializes at their shared station at the shared instant
//! (pickups at departure, drops at arrival). Cars riding a convoy straight
//! through a station never touch its count, and state feasibility
//! `0 <= z <= cap` is checked on the net count at each integral time.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::instance::{derive_tasks, Instance, MetricSpace, StationId};

/// One timed transition of a driver. A waiting move has equal origin and
/// destination; any other move takes exactly the metric distance.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Move {
    /// Driver id, 1-based as in reports.
    pub driver: u32,
    pub from: StationId,
    pub to: StationId,
    pub dep: u32,
    pub arr: u32,
    pub load: u32,
}

impl Move {
    pub fn is_waiting(&self) -> bool {
        self.from == self.to
    }

    pub fn length(&self, metric: &MetricSpace) -> u64 {
        if self.is_waiting() {
            0
        } else {
            metric.dist(self.from, self.to)
        }
    }
}

/// One driver's chained move sequence. May be empty for an idle driver.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Tour {
    pub driver: u32,
    pub moves: Vec<Move>,
}

impl Tour {
    pub fn length(&self, metric: &MetricSpace) -> u64 {
        self.moves.iter().map(|m| m.length(metric)).sum()
    }

    pub fn final_arrival(&self) -> u32 {
        self.moves.last().map(|m| m.arr).unwrap_or(0)
    }
}

/// The solution object: exactly one tour per driver.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct TransportationSchedule {
    pub tours: Vec<Tour>,
}

impl TransportationSchedule {
    /// All-idle schedule for `k` drivers.
    pub fn empty(k: u32) -> Self {
        Self {
            tours: (1..=k).map(|driver| Tour { driver, moves: Vec::new() }).collect(),
        }
    }

    pub fn total_length(&self, metric: &MetricSpace) -> u64 {
        self.tours.iter().map(|t| t.length(metric)).sum()
    }

    /// Latest arrival over all moves.
    pub fn makespan(&self) -> u32 {
        self.tours.iter().map(|t| t.final_arrival()).max().unwrap_or(0)
    }

    pub fn per_tour_lengths(&self, metric: &MetricSpace) -> Vec<u64> {
        self.tours.iter().map(|t| t.length(metric)).collect()
    }
}

/// Net car-count change at a station at one instant. Negative deltas are
/// pickups, positive deltas drops.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StationEvent {
    pub station: StationId,
    pub time: u32,
    pub delta: i64,
}

/// Expands a tour into its pickup/drop events under the load-delta
/// convention. The final move's remaining load drops at its arrival.
pub fn tour_events(tour: &Tour) -> Vec<StationEvent> {
    let mut events = Vec::new();
    let mut prev_load = 0i64;
    for m in &tour.moves {
        let delta = m.load as i64 - prev_load;
        if delta != 0 {
            events.push(StationEvent {
                station: m.from,
                time: m.dep,
                // pickup of `delta` cars removes them from the station
                delta: -delta,
            });
        }
        prev_load = m.load as i64;
    }
    if let Some(last) = tour.moves.last() {
        if prev_load != 0 {
            events.push(StationEvent {
                station: last.to,
                time: last.arr,
                delta: prev_load,
            });
        }
    }
    events
}

/// Station counts over time. `z[v][t]` is the count at station `v` during
/// `[t, t+1)`, with every event at time `<= t` applied. Values may be
/// negative for infeasible schedules; the validator reports those.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StateTrajectory {
    pub horizon: u32,
    pub z: Vec<Vec<i64>>,
}

impl StateTrajectory {
    pub fn at(&self, station: StationId, t: u32) -> i64 {
        self.z[station.0][t as usize]
    }

    pub fn final_state(&self) -> Vec<i64> {
        self.z.iter().map(|row| *row.last().unwrap()).collect()
    }
}

/// Plays the schedule's events forward from `z0`. The trajectory extends to
/// the schedule makespan when that exceeds the instance horizon.
pub fn simulate_states(schedule: &TransportationSchedule, instance: &Instance) -> StateTrajectory {
    let horizon = instance.horizon.max(schedule.makespan());
    let n = instance.station_count();
    let mut deltas: Vec<BTreeMap<u32, i64>> = vec![BTreeMap::new(); n];
    for tour in &schedule.tours {
        for ev in tour_events(tour) {
            *deltas[ev.station.0].entry(ev.time).or_insert(0) += ev.delta;
        }
    }
    let mut z = vec![vec![0i64; horizon as usize + 1]; n];
    for v in 0..n {
        let mut current = instance.z0[v] as i64;
        let mut iter = deltas[v].iter().peekable();
        for t in 0..=horizon {
            while let Some((&time, &delta)) = iter.peek() {
                if time <= t {
                    current += delta;
                    iter.next();
                } else {
                    break;
                }
            }
            z[v][t as usize] = current;
        }
    }
    StateTrajectory { horizon, z }
}

/// A named violation of schedule feasibility.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ScheduleViolation {
    WrongTourCount { expected: u32, found: usize },
    DriverIdInvalid { tour_index: usize, driver: u32 },
    LoadExceedsConvoyCapacity { driver: u32, move_index: usize, load: u32, limit: u32 },
    MoveTimingMismatch { driver: u32, move_index: usize, expected_arr: u32, found_arr: u32 },
    WaitingMoveNotForward { driver: u32, move_index: usize },
    NotChained { driver: u32, move_index: usize },
    TourDoesNotStartAtDepot { driver: u32 },
    TourDoesNotEndAtDepot { driver: u32 },
    TaskNotServed { station: StationId, expected: i64, actual: i64 },
    StateNegative { station: StationId, time: u32, value: i64 },
    StateExceedsCapacity { station: StationId, time: u32, value: i64, cap: u64 },
    HorizonExceeded { driver: u32, arrival: u32, horizon: u32 },
}

impl fmt::Display for ScheduleViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        use ScheduleViolation::*;
        match self {
            WrongTourCount { expected, found } => {
                write!(f, "expected {expected} tours (one per driver), found {found}")
            }
            DriverIdInvalid { tour_index, driver } => {
                write!(f, "tour {tour_index} has invalid or duplicate driver id {driver}")
            }
            LoadExceedsConvoyCapacity { driver, move_index, load, limit } => write!(
                f,
                "driver {driver} move {move_index} carries {load} cars, convoy capacity {limit}"
            ),
            MoveTimingMismatch { driver, move_index, expected_arr, found_arr } => write!(
                f,
                "driver {driver} move {move_index} arrives at {found_arr}, distance requires {expected_arr}"
            ),
            WaitingMoveNotForward { driver, move_index } => write!(
                f,
                "driver {driver} move {move_index} is a waiting move without positive duration"
            ),
            NotChained { driver, move_index } => write!(
                f,
                "driver {driver} moves {move_index} and {} are not chained",
                move_index + 1
            ),
            TourDoesNotStartAtDepot { driver } => {
                write!(f, "driver {driver} tour does not start at the depot")
            }
            TourDoesNotEndAtDepot { driver } => {
                write!(f, "driver {driver} tour does not end at the depot")
            }
            TaskNotServed { station, expected, actual } => write!(
                f,
                "task at {station} not served: net pickup {actual}, task requires {expected}"
            ),
            StateNegative { station, time, value } => {
                write!(f, "station {station} holds {value} cars at time {time}")
            }
            StateExceedsCapacity { station, time, value, cap } => write!(
                f,
                "station {station} holds {value} cars at time {time}, capacity {cap}"
            ),
            HorizonExceeded { driver, arrival, horizon } => write!(
                f,
                "driver {driver} arrives at {arrival}, after the horizon {horizon}"
            ),
        }
    }
}

/// Informational findings that do not make a schedule infeasible.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ScheduleWarning {
    /// More cars handled at a task station than its task demands.
    OversatisfiedTask { station: StationId, gross: i64, expected: i64 },
}

impl fmt::Display for ScheduleWarning {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::OversatisfiedTask { station, gross, expected } => write!(
                f,
                "task at {station} oversatisfied: {gross} cars handled, task size {expected}"
            ),
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct ScheduleReport {
    pub violations: Vec<ScheduleViolation>,
    pub warnings: Vec<ScheduleWarning>,
}

impl ScheduleReport {
    /// True when no violations were found (warnings do not count).
    pub fn is_clean(&self) -> bool {
        self.violations.is_empty()
    }
}

impl fmt::Display for ScheduleReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.violations.is_empty() && self.warnings.is_empty() {
            return write!(f, "ok");
        }
        for v in &self.violations {
            writeln!(f, "violation: {v}")?;
        }
        for w in &self.warnings {
            writeln!(f, "warning: {w}")?;
        }
        Ok(())
    }
}

/// Checks the move axioms, tour structure, task service, and state
/// feasibility. `check_horizon` additionally requires all arrivals within
/// the instance horizon.
pub fn validate_schedule(
    schedule: &TransportationSchedule,
    instance: &Instance,
    check_horizon: bool,
) -> ScheduleReport {
    let mut report = ScheduleReport::default();
    let v = &mut report.violations;

    if schedule.tours.len() != instance.k as usize {
        v.push(ScheduleViolation::WrongTourCount {
            expected: instance.k,
            found: schedule.tours.len(),
        });
    }
    let mut seen = std::collections::BTreeSet::new();
    for (ti, tour) in schedule.tours.iter().enumerate() {
        if tour.driver == 0 || tour.driver > instance.k || !seen.insert(tour.driver) {
            v.push(ScheduleViolation::DriverIdInvalid {
                tour_index: ti,
                driver: tour.driver,
            });
        }
        for (mi, m) in tour.moves.iter().enumerate() {
            if m.load > instance.capacity_l {
                v.push(ScheduleViolation::LoadExceedsConvoyCapacity {
                    driver: tour.driver,
                    move_index: mi,
                    load: m.load,
                    limit: instance.capacity_l,
                });
            }
            if m.is_waiting() {
                if m.arr <= m.dep {
                    v.push(ScheduleViolation::WaitingMoveNotForward {
                        driver: tour.driver,
                        move_index: mi,
                    });
                }
            } else {
                let expected = m.dep + instance.dist(m.from, m.to) as u32;
                if m.arr != expected {
                    v.push(ScheduleViolation::MoveTimingMismatch {
                        driver: tour.driver,
                        move_index: mi,
                        expected_arr: expected,
                        found_arr: m.arr,
                    });
                }
            }
            if mi + 1 < tour.moves.len() {
                let next = &tour.moves[mi + 1];
                if next.from != m.to || next.dep != m.arr {
                    v.push(ScheduleViolation::NotChained {
                        driver: tour.driver,
                        move_index: mi,
                    });
                }
            }
            if check_horizon && m.arr > instance.horizon {
                v.push(ScheduleViolation::HorizonExceeded {
                    driver: tour.driver,
                    arrival: m.arr,
                    horizon: instance.horizon,
                });
            }
        }
        if let (Some(first), Some(last)) = (tour.moves.first(), tour.moves.last()) {
            if first.from != instance.depot {
                v.push(ScheduleViolation::TourDoesNotStartAtDepot { driver: tour.driver });
            }
            if last.to != instance.depot {
                v.push(ScheduleViolation::TourDoesNotEndAtDepot { driver: tour.driver });
            }
        }
    }

    // task service and state feasibility
    let trajectory = simulate_states(schedule, instance);
    let final_state = trajectory.final_state();
    for s in instance.stations() {
        let expected = instance.zt[s.0] as i64;
        if final_state[s.0] != expected {
            v.push(ScheduleViolation::TaskNotServed {
                station: s,
                expected: instance.z0[s.0] as i64 - expected,
                actual: instance.z0[s.0] as i64 - final_state[s.0],
            });
        }
        for t in 0..=trajectory.horizon {
            let value = trajectory.at(s, t);
            if value < 0 {
                v.push(ScheduleViolation::StateNegative { station: s, time: t, value });
                break;
            }
            if value > instance.cap[s.0] as i64 {
                v.push(ScheduleViolation::StateExceedsCapacity {
                    station: s,
                    time: t,
                    value,
                    cap: instance.cap[s.0],
                });
                break;
            }
        }
    }

    // oversatisfaction warnings: gross handling beyond the task size
    let mut gross_pick = vec![0i64; instance.station_count()];
    let mut gross_drop = vec![0i64; instance.station_count()];
    for tour in &schedule.tours {
        for ev in tour_events(tour) {
            if ev.delta < 0 {
                gross_pick[ev.station.0] += -ev.delta;
            } else {
                gross_drop[ev.station.0] += ev.delta;
            }
        }
    }
    for task in derive_tasks(instance) {
        let (gross, expected) = if task.x > 0 {
            (gross_pick[task.station.0], task.x)
        } else {
            (gross_drop[task.station.0], -task.x)
        };
        if gross > expected {
            report.warnings.push(ScheduleWarning::OversatisfiedTask {
                station: task.station,
                gross,
                expected,
            });
        }
    }
    report
}

/// A schedule is preemptive when cars pass between tours: some tour drops
/// cars at a task station and a different tour picks up there.
pub fn is_preemptive(schedule: &TransportationSchedule, instance: &Instance) -> bool {
    let task_stations: std::collections::BTreeSet<usize> = derive_tasks(instance)
        .into_iter()
        .map(|t| t.station.0)
        .collect();
    let mut drop_tours: Vec<std::collections::BTreeSet<usize>> =
        vec![Default::default(); instance.station_count()];
    let mut pick_tours: Vec<std::collections::BTreeSet<usize>> =
        vec![Default::default(); instance.station_count()];
    for (ti, tour) in schedule.tours.iter().enumerate() {
        for ev in tour_events(tour) {
            if !task_stations.contains(&ev.station.0) {
                continue;
            }
            if ev.delta > 0 {
                drop_tours[ev.station.0].insert(ti);
            } else {
                pick_tours[ev.station.0].insert(ti);
            }
        }
    }
    (0..instance.station_count()).any(|s| {
        drop_tours[s]
            .iter()
            .any(|d| pick_tours[s].iter().any(|p| p != d))
    })
}

// ---------------------------------------------------------------------------
// Schedule JSON
// ---------------------------------------------------------------------------

#[derive(Serialize, Deserialize)]
struct MoveJson {
    from: usize,
    to: usize,
    dep: u32,
    arr: u32,
    load: u32,
}

#[derive(Serialize, Deserialize)]
struct TourJson {
    driver: u32,
    moves: Vec<MoveJson>,
}

#[derive(Serialize, Deserialize)]
struct ScheduleJson {
    tours: Vec<TourJson>,
}

/// Serializes with fixed field order; output is byte-stable.
pub fn schedule_to_json(schedule: &TransportationSchedule) -> String {
    let doc = ScheduleJson {
        tours: schedule
            .tours
            .iter()
            .map(|t| TourJson {
                driver: t.driver,
                moves: t
                    .moves
                    .iter()
                    .map(|m| MoveJson {
                        from: m.from.0,
                        to: m.to.0,
                        dep: m.dep,
                        arr: m.arr,
                        load: m.load,
                    })
                    .collect(),
            })
            .collect(),
    };
    let mut out = serde_json::to_string_pretty(&doc).expect("schedule serialization");
    out.push('\n');
    out
}

pub fn parse_schedule_json(text: &str) -> Result<TransportationSchedule, serde_json::Error> {
    let doc: ScheduleJson = serde_json::from_str(text)?;
    Ok(TransportationSchedule {
        tours: doc
            .tours
            .into_iter()
            .map(|t| Tour {
                driver: t.driver,
                moves: t
                    .moves
                    .into_iter()
                    .map(|m| Move {
                        driver: t.driver,
                        from: StationId(m.from),
                        to: StationId(m.to),
                        dep: m.dep,
                        arr: m.arr,
                        load: m.load,
                    })
                    .collect(),
            })
            .collect(),
    })
}

// ---------------------------------------------------------------------------
// Brute-force optimum for tiny instances
// ---------------------------------------------------------------------------

/// Search bounds for [`brute_force_optimum`]. The defaults delimit the
/// space where exhaustive search stays fast.
#[derive(Debug, Clone, Copy)]
pub struct OracleCaps {
    pub max_stations: usize,
    pub max_horizon: u32,
    pub max_drivers: u32,
    pub max_convoy: u32,
    pub max_surplus: u64,
}

impl Default for OracleCaps {
    fn default() -> Self {
        Self {
            max_stations: 4,
            max_horizon: 8,
            max_drivers: 2,
            max_convoy: 3,
            max_surplus: 3,
        }
    }
}

#[derive(Debug, Error)]
pub enum OracleError {
    #[error("instance too large for exhaustive search: {0}")]
    TooLarge(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum DriverAction {
    Wait,
    Depart { to: StationId, load: u32 },
}

/// Exhaustive layered search over joint system states. Provably optimal
/// within its size caps; `Ok(None)` means no feasible schedule exists
/// within the horizon.
pub fn brute_force_optimum(
    instance: &Instance,
    caps: OracleCaps,
) -> Result<Option<(u64, TransportationSchedule)>, OracleError> {
    let n = instance.station_count();
    if n > caps.max_stations {
        return Err(OracleError::TooLarge(format!("{n} stations")));
    }
    if instance.horizon > caps.max_horizon {
        return Err(OracleError::TooLarge(format!("horizon {}", instance.horizon)));
    }
    if instance.k > caps.max_drivers {
        return Err(OracleError::TooLarge(format!("{} drivers", instance.k)));
    }
    if instance.capacity_l > caps.max_convoy {
        return Err(OracleError::TooLarge(format!(
            "convoy capacity {}",
            instance.capacity_l
        )));
    }
    if instance.total_surplus() > caps.max_surplus {
        return Err(OracleError::TooLarge(format!(
            "total surplus {}",
            instance.total_surplus()
        )));
    }
    // station counts are packed into single bytes in the state key
    if instance.cap.iter().any(|&c| c > 200) {
        return Err(OracleError::TooLarge("station capacity over 200".into()));
    }

    let k = instance.k as usize;
    let horizon = instance.horizon;
    let adjacency = instance.graph.adjacency();
    // durations use the cached metric, matching the move axioms
    let neighbor_dist: Vec<Vec<(StationId, u32)>> = adjacency
        .iter()
        .enumerate()
        .map(|(v, nbrs)| {
            nbrs.iter()
                .map(|&(u, _)| (u, instance.dist(StationId(v), u) as u32))
                .collect()
        })
        .collect();

    // state: z per station, then (dest, remain, load) per driver
    type Key = Vec<u8>;
    let encode = |z: &[i64], drivers: &[(u8, u8, u8)]| -> Key {
        let mut key = Vec::with_capacity(z.len() + drivers.len() * 3);
        for &c in z {
            key.push(c as u8);
        }
        for &(d, r, l) in drivers {
            key.push(d);
            key.push(r);
            key.push(l);
        }
        key
    };
    let decode = |key: &Key| -> (Vec<i64>, Vec<(u8, u8, u8)>) {
        let z = key[..n].iter().map(|&c| c as i64).collect();
        let drivers = key[n..]
            .chunks(3)
            .map(|c| (c[0], c[1], c[2]))
            .collect();
        (z, drivers)
    };

    let start_z: Vec<i64> = instance.z0.iter().map(|&c| c as i64).collect();
    let start_drivers = vec![(instance.depot.0 as u8, 0u8, 0u8); k];
    let start_key = encode(&start_z, &start_drivers);

    // layers[t]: state -> (cost, parent state, joint action)
    let mut layers: Vec<BTreeMap<Key, (u64, Key, Vec<DriverAction>)>> =
        vec![BTreeMap::new(); horizon as usize + 1];
    layers[0].insert(start_key.clone(), (0, Vec::new(), Vec::new()));

    for t in 0..horizon {
        // split borrows: current layer read, next layer written
        let (current, rest) = layers[t as usize..].split_first_mut().unwrap();
        let next = &mut rest[0];
        for (key, &(cost, _, _)) in current.iter() {
            let (z, drivers) = decode(key);
            // enumerate joint actions of at-station drivers
            let mut choices: Vec<Vec<DriverAction>> = vec![Vec::new()];
            for &(dest, remain, _load) in &drivers {
                let mut per_driver = vec![DriverAction::Wait];
                if remain == 0 {
                    let v = dest as usize;
                    for &(to, d) in &neighbor_dist[v] {
                        if t + d <= horizon {
                            for load in 0..=instance.capacity_l {
                                per_driver.push(DriverAction::Depart { to, load });
                            }
                        }
                    }
                }
                let mut expanded = Vec::with_capacity(choices.len() * per_driver.len());
                for prefix in &choices {
                    for &action in &per_driver {
                        // in-transit drivers only Wait (tick)
                        if remain > 0 && action != DriverAction::Wait {
                            continue;
                        }
                        let mut next_choice = prefix.clone();
                        next_choice.push(action);
                        expanded.push(next_choice);
                    }
                }
                choices = expanded;
            }

            'joint: for joint in &choices {
                let mut z_post = z.clone();
                let mut drivers_next = Vec::with_capacity(k);
                let mut step_cost = 0u64;
                for (di, action) in joint.iter().enumerate() {
                    let (dest, remain, load) = drivers[di];
                    match *action {
                        DriverAction::Wait => {
                            if remain > 1 {
                                drivers_next.push((dest, remain - 1, load));
                            } else if remain == 1 {
                                // arrival at t+1 drops the whole load
                                drivers_next.push((dest, 0, 0));
                            } else {
                                drivers_next.push((dest, 0, 0));
                            }
                        }
                        DriverAction::Depart { to, load: x } => {
                            let v = dest as usize;
                            // pickup at departure time t
                            z_post[v] -= x as i64;
                            let d = instance.dist(StationId(v), to) as u32;
                            step_cost += d as u64;
                            if d == 1 {
                                drivers_next.push((to.0 as u8, 0, 0));
                            } else {
                                drivers_next.push((to.0 as u8, (d - 1) as u8, x as u8));
                            }
                        }
                    }
                }
                // arrival drops landing exactly at t+1
                for (di, action) in joint.iter().enumerate() {
                    let (dest, remain, load) = drivers[di];
                    match *action {
                        DriverAction::Wait if remain == 1 => {
                            z_post[dest as usize] += load as i64;
                        }
                        DriverAction::Depart { to, load: x } => {
                            let d = instance.dist(StationId(dest as usize), to) as u32;
                            if d == 1 {
                                z_post[to.0] += x as i64;
                            }
                        }
                        _ => {}
                    }
                }
                // Feasibility applies to the holdover count during [t, t+1):
                // the layer value minus departures at t. The next-instant
                // value z_post can transiently exceed cap (cars passing
                // straight through); the next layer's own check covers it.
                for v in 0..n {
                    let during = z[v]
                        - joint
                            .iter()
                            .enumerate()
                            .filter_map(|(di, a)| match *a {
                                DriverAction::Depart { load, .. }
                                    if drivers[di].0 as usize == v && drivers[di].1 == 0 =>
                                {
                                    Some(load as i64)
                                }
                                _ => None,
                            })
                            .sum::<i64>();
                    if during < 0 || during > instance.cap[v] as i64 {
                        continue 'joint;
                    }
                }
                let total = cost + step_cost;
                let new_key = encode(&z_post, &drivers_next);
                let entry = next.get(&new_key);
                if entry.is_none_or(|&(c, _, _)| total < c) {
                    next.insert(new_key, (total, key.clone(), joint.clone()));
                }
            }
        }
    }

    // goal: all drivers idle at the depot, target state reached
    let target: Vec<i64> = instance.zt.iter().map(|&c| c as i64).collect();
    let goal_drivers = vec![(instance.depot.0 as u8, 0u8, 0u8); k];
    let goal_key = encode(&target, &goal_drivers);
    let Some(&(best_cost, _, _)) = layers[horizon as usize].get(&goal_key) else {
        return Ok(None);
    };

    // reconstruct per-driver action sequences
    let mut actions_by_time: Vec<Vec<DriverAction>> = Vec::new();
    let mut cursor = goal_key;
    for t in (1..=horizon).rev() {
        let (_, parent, joint) = layers[t as usize].get(&cursor).expect("parent chain").clone();
        actions_by_time.push(joint);
        cursor = parent;
    }
    actions_by_time.reverse();

    let mut tours = Vec::with_capacity(k);
    for di in 0..k {
        let mut moves = Vec::new();
        let mut position = instance.depot;
        let mut wait_since: Option<u32> = None;
        for (ti, joint) in actions_by_time.iter().enumerate() {
            let t = ti as u32;
            match joint.get(di) {
                Some(&DriverAction::Depart { to, load }) => {
                    if let Some(ws) = wait_since.take() {
                        if !moves.is_empty() {
                            moves.push(Move {
                                driver: di as u32 + 1,
                                from: position,
                                to: position,
                                dep: ws,
                                arr: t,
                                load: 0,
                            });
                        }
                    }
                    let d = instance.dist(position, to) as u32;
                    moves.push(Move {
                        driver: di as u32 + 1,
                        from: position,
                        to,
                        dep: t,
                        arr: t + d,
                        load,
                    });
                    position = to;
                    wait_since = None;
                }
                _ => {
                    // waiting tick at a station; transit ticks are implied
                    let arrived = moves.last().map(|m: &Move| m.arr <= t).unwrap_or(true);
                    if arrived && wait_since.is_none() {
                        wait_since = Some(t);
                    }
                }
            }
        }
        tours.push(Tour {
            driver: di as u32 + 1,
            moves,
        });
    }
    let schedule = TransportationSchedule { tours };
    Ok(Some((best_cost, schedule)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instance::WeightedGraph;

    fn line_instance(weights: &[u64], z0: Vec<u64>, zt: Vec<u64>, k: u32, l: u32, t: u32) -> Instance {
        let n = weights.len() + 1;
        let edges = weights
            .iter()
            .enumerate()
            .map(|(i, &w)| (StationId(i), StationId(i + 1), w))
            .collect();
        let graph = WeightedGraph::new(n, edges).unwrap();
        let cap = vec![10; n];
        Instance::new(graph, cap, z0, zt, k, l, t, StationId(0)).unwrap()
    }

    #[test]
    fn empty_schedule_keeps_state_constant() {
        let instance = line_instance(&[2, 3], vec![1, 2, 0], vec![1, 2, 0], 1, 2, 6);
        let schedule = TransportationSchedule::empty(1);
        let traj = simulate_states(&schedule, &instance);
        for v in instance.stations() {
            for t in 0..=instance.horizon {
                assert_eq!(traj.at(v, t), instance.z0[v.0] as i64);
            }
        }
        assert!(validate_schedule(&schedule, &instance, true).is_clean());
    }

    #[test]
    fn single_move_shifts_cars_at_endpoints() {
        let instance = line_instance(&[3], vec![2, 0], vec![0, 2], 1, 2, 8);
        let schedule = TransportationSchedule {
            tours: vec![Tour {
                driver: 1,
                moves: vec![
                    Move { driver: 1, from: StationId(0), to: StationId(1), dep: 0, arr: 3, load: 2 },
                    Move { driver: 1, from: StationId(1), to: StationId(0), dep: 3, arr: 6, load: 0 },
                ],
            }],
        };
        let traj = simulate_states(&schedule, &instance);
        assert_eq!(traj.at(StationId(0), 0), 0); // origin loses 2 at t = 0
        assert_eq!(traj.at(StationId(1), 2), 0);
        assert_eq!(traj.at(StationId(1), 3), 2); // destination gains 2 at t = 3
        let report = validate_schedule(&schedule, &instance, true);
        assert!(report.is_clean(), "{report}");
    }

    #[test]
    fn broken_load_yields_exactly_one_named_violation() {
        let instance = line_instance(&[3], vec![3, 0], vec![0, 3], 1, 2, 8);
        let schedule = TransportationSchedule {
            tours: vec![Tour {
                driver: 1,
                moves: vec![
                    Move { driver: 1, from: StationId(0), to: StationId(1), dep: 0, arr: 3, load: 3 },
                    Move { driver: 1, from: StationId(1), to: StationId(0), dep: 3, arr: 6, load: 0 },
                ],
            }],
        };
        let report = validate_schedule(&schedule, &instance, true);
        assert_eq!(report.violations.len(), 1, "{report}");
        assert!(matches!(
            report.violations[0],
            ScheduleViolation::LoadExceedsConvoyCapacity { load: 3, limit: 2, .. }
        ));
    }

    #[test]
    fn horizon_flag_toggles_findings() {
        let instance = line_instance(&[3], vec![1, 0], vec![0, 1], 1, 1, 5);
        let schedule = TransportationSchedule {
            tours: vec![Tour {
                driver: 1,
                moves: vec![
                    Move { driver: 1, from: StationId(0), to: StationId(1), dep: 0, arr: 3, load: 1 },
                    Move { driver: 1, from: StationId(1), to: StationId(0), dep: 3, arr: 6, load: 0 },
                ],
            }],
        };
        let strict = validate_schedule(&schedule, &instance, true);
        assert!(strict
            .violations
            .iter()
            .any(|v| matches!(v, ScheduleViolation::HorizonExceeded { arrival: 6, .. })));
        let lax = validate_schedule(&schedule, &instance, false);
        assert!(lax.is_clean(), "{lax}");
    }

    #[test]
    fn schedule_json_round_trip_byte_stable() {
        let schedule = TransportationSchedule {
            tours: vec![
                Tour {
                    driver: 1,
                    moves: vec![Move {
                        driver: 1,
                        from: StationId(0),
                        to: StationId(2),
                        dep: 0,
                        arr: 4,
                        load: 1,
                    }],
                },
                Tour { driver: 2, moves: Vec::new() },
            ],
        };
        let text = schedule_to_json(&schedule);
        let parsed = parse_schedule_json(&text).unwrap();
        assert_eq!(schedule_to_json(&parsed), text);
        assert_eq!(parsed, schedule);
    }

    #[test]
    fn oracle_balanced_instance_is_zero() {
        let instance = line_instance(&[1, 2], vec![1, 1, 0], vec![1, 1, 0], 1, 1, 4);
        let (cost, schedule) = brute_force_optimum(&instance, OracleCaps::default())
            .unwrap()
            .unwrap();
        assert_eq!(cost, 0);
        assert!(validate_schedule(&schedule, &instance, true).is_clean());
    }

    #[test]
    fn oracle_matches_hand_derived_geometries() {
        // depot - o - u line: out 1, carry 2, return 3
        let a = line_instance(&[1, 2], vec![0, 1, 0], vec![0, 0, 1], 1, 1, 6);
        // o - depot - u line: depot in the middle
        let b = {
            let graph = WeightedGraph::new(
                3,
                vec![(StationId(1), StationId(0), 1), (StationId(0), StationId(2), 2)],
            )
            .unwrap();
            Instance::new(graph, vec![10; 3], vec![0, 1, 0], vec![0, 0, 1], 1, 1, 6, StationId(0))
                .unwrap()
        };
        // equilateral triangle
        let c = {
            let graph = WeightedGraph::new(
                3,
                vec![
                    (StationId(0), StationId(1), 2),
                    (StationId(1), StationId(2), 2),
                    (StationId(0), StationId(2), 2),
                ],
            )
            .unwrap();
            Instance::new(graph, vec![10; 3], vec![0, 1, 0], vec![0, 0, 1], 1, 1, 6, StationId(0))
                .unwrap()
        };
        for (instance, expected) in [(a, 6u64), (b, 6), (c, 6)] {
            let (cost, schedule) = brute_force_optimum(&instance, OracleCaps::default())
                .unwrap()
                .unwrap();
            assert_eq!(cost, expected);
            let report = validate_schedule(&schedule, &instance, true);
            assert!(report.is_clean(), "{report}");
        }
    }

    #[test]
    fn oracle_rejects_oversized_instances() {
        let instance = line_instance(&[1, 1, 1, 1], vec![0; 5], vec![0; 5], 1, 1, 4);
        assert!(matches!(
            brute_force_optimum(&instance, OracleCaps::default()),
            Err(OracleError::TooLarge(_))
        ));
    }

    #[test]
    fn oracle_detects_infeasible_horizon() {
        // needs 6 time units but only 4 available
        let instance = line_instance(&[1, 2], vec![0, 1, 0], vec![0, 0, 1], 1, 1, 4);
        assert!(brute_force_optimum(&instance, OracleCaps::default())
            .unwrap()
            .is_none());
    }
}
