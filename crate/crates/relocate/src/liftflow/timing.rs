//! Step 2 of the heuristic: turning pre-tours into timed tours.
//!
//! Pre-moves are committed in a topological order of intra-tour succession
//! plus cross-tour precedences, so every drop that can feed a pickup is
//! already timed when the pickup is placed. Each pickup is inserted at the
//! earliest time at which the station's whole committed event timeline
//! stays nonnegative from that point on; that strengthens the per-move
//! waiting rule just enough to guarantee globally feasible states.

use std::collections::BTreeMap;

use crate::instance::{derive_tasks, Instance, StationId};
use crate::schedule::{Move, Tour, TransportationSchedule};

use super::{
    pick_drop_amounts, topological_order, LiftflowError, PreMove, PreTour, ResolvedFlow,
};

/// A predecessor pre-move's drop, as seen by a waiting pickup.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PredecessorDrop {
    pub arrival: u32,
    pub supply: u32,
}

/// Outcome of the waiting-set computation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WaitingSelection {
    /// Earliest time the pickup can proceed; `None` when no waiting is
    /// needed.
    pub wait_until: Option<u32>,
    /// Indices into the predecessor slice forming the minimal set S.
    pub selected: Vec<usize>,
}

/// Selects the minimal predecessor set a pickup has to wait for.
///
/// The set S minimizes the induced waiting time (the latest arrival in S),
/// breaking ties by fewer predecessors, then by smaller total supplied
/// load, subject to `cars_at_origin + sum of supplies >= load_needed`.
/// Returns an error when even all predecessors cannot cover the load.
pub fn compute_waiting(
    load_needed: u32,
    cars_at_origin: u32,
    predecessors: &[PredecessorDrop],
) -> Result<WaitingSelection, LiftflowError> {
    if cars_at_origin >= load_needed {
        return Ok(WaitingSelection {
            wait_until: None,
            selected: Vec::new(),
        });
    }
    let deficit = (load_needed - cars_at_origin) as u64;
    let mut order: Vec<usize> = (0..predecessors.len()).collect();
    order.sort_by_key(|&i| (predecessors[i].arrival, i));

    let mut cumulative = 0u64;
    let mut wait_until = None;
    let mut pool_len = 0;
    for (pos, &i) in order.iter().enumerate() {
        cumulative += predecessors[i].supply as u64;
        if cumulative >= deficit {
            let t = predecessors[i].arrival;
            // everything arriving no later than t is available
            pool_len = order[pos..]
                .iter()
                .position(|&j| predecessors[j].arrival > t)
                .map(|off| pos + off)
                .unwrap_or(order.len());
            wait_until = Some(t);
            break;
        }
    }
    let Some(t_star) = wait_until else {
        return Err(LiftflowError::InfeasiblePrecedence(format!(
            "pickup of {load_needed} cannot be covered: {cars_at_origin} present, \
             {cumulative} arriving"
        )));
    };
    let pool: Vec<usize> = order[..pool_len].to_vec();

    // minimal cardinality, then minimal total supply, over the pool
    let selected = min_subset(&pool, predecessors, deficit);
    Ok(WaitingSelection {
        wait_until: Some(t_star),
        selected,
    })
}

/// Smallest subset of `pool` with supply sum >= deficit, minimizing
/// (cardinality, total supply). Exact for small pools, greedy beyond.
fn min_subset(pool: &[usize], predecessors: &[PredecessorDrop], deficit: u64) -> Vec<usize> {
    let supplies: Vec<u64> = pool.iter().map(|&i| predecessors[i].supply as u64).collect();
    let total: u64 = supplies.iter().sum();
    if pool.len() > 24 || total > 4096 {
        // greedy: largest supplies first
        let mut order: Vec<usize> = (0..pool.len()).collect();
        order.sort_by_key(|&p| (std::cmp::Reverse(supplies[p]), p));
        let mut sum = 0;
        let mut chosen = Vec::new();
        for p in order {
            if sum >= deficit {
                break;
            }
            sum += supplies[p];
            chosen.push(pool[p]);
        }
        chosen.sort_unstable();
        return chosen;
    }

    let total = total as usize;
    let deficit = deficit as usize;
    let n = pool.len();
    // reachable[i][c][s]: some c-element subset of the first i items sums
    // to exactly s
    let mut reachable = vec![vec![vec![false; total + 1]; n + 1]; n + 1];
    reachable[0][0][0] = true;
    for i in 0..n {
        let s_i = supplies[i] as usize;
        for c in 0..=i {
            for s in 0..=total {
                if reachable[i][c][s] {
                    reachable[i + 1][c][s] = true;
                    if s + s_i <= total {
                        reachable[i + 1][c + 1][s + s_i] = true;
                    }
                }
            }
        }
    }
    let mut best: Option<(usize, usize)> = None;
    'outer: for c in 0..=n {
        for s in deficit..=total {
            if reachable[n][c][s] {
                best = Some((c, s));
                break 'outer;
            }
        }
    }
    let Some((mut c, mut s)) = best else {
        return Vec::new();
    };
    // deterministic reconstruction: prefer leaving items out
    let mut chosen = Vec::new();
    for i in (0..n).rev() {
        if reachable[i][c][s] {
            continue;
        }
        chosen.push(pool[i]);
        c -= 1;
        s -= supplies[i] as usize;
    }
    chosen.sort_unstable();
    chosen
}

/// Committed pickup/drop events at one station.
#[derive(Debug, Default, Clone)]
struct Timeline {
    base: i64,
    /// time -> (gross drops, gross picks)
    events: BTreeMap<u32, (u64, u64)>,
}

impl Timeline {
    fn availability(&self, t: u32) -> i64 {
        self.base
            + self
                .events
                .range(..=t)
                .map(|(_, &(d, p))| d as i64 - p as i64)
                .sum::<i64>()
    }

    fn add_drop(&mut self, t: u32, amount: u32) {
        self.events.entry(t).or_default().0 += amount as u64;
    }

    fn add_pick(&mut self, t: u32, amount: u32) {
        self.events.entry(t).or_default().1 += amount as u64;
    }

    fn future_drops(&self, after: u32) -> Vec<PredecessorDrop> {
        self.events
            .range(after + 1..)
            .filter(|(_, &(d, _))| d > 0)
            .map(|(&t, &(d, _))| PredecessorDrop {
                arrival: t,
                supply: d.min(u32::MAX as u64) as u32,
            })
            .collect()
    }

    /// Earliest `t >= ready` such that removing `amount` cars at `t` keeps
    /// the whole timeline nonnegative from `t` on.
    fn earliest_pick(&self, amount: u32, ready: u32) -> Option<u32> {
        let amount = amount as i64;
        // candidate times: ready itself and each later event time
        let mut candidates: Vec<u32> = vec![ready];
        candidates.extend(self.events.range(ready + 1..).map(|(&t, _)| t));
        // suffix minima of availability after each candidate
        let avail: Vec<i64> = candidates.iter().map(|&t| self.availability(t)).collect();
        let mut suffix_min = avail.clone();
        for i in (0..suffix_min.len().saturating_sub(1)).rev() {
            suffix_min[i] = suffix_min[i].min(suffix_min[i + 1]);
        }
        candidates
            .iter()
            .zip(&suffix_min)
            .find(|&(_, &m)| m >= amount)
            .map(|(&t, _)| t)
    }
}

struct Timelines {
    by_station: Vec<Timeline>,
}

impl Timelines {
    fn new(instance: &Instance) -> Self {
        Self {
            by_station: instance
                .z0
                .iter()
                .map(|&z| Timeline {
                    base: z as i64,
                    events: BTreeMap::new(),
                })
                .collect(),
        }
    }

    fn station(&mut self, s: StationId) -> &mut Timeline {
        &mut self.by_station[s.0]
    }
}

/// Times one pickup: consults the waiting-set rule against committed future
/// drops, then advances to the first suffix-safe instant.
fn place_pickup(
    timeline: &Timeline,
    pick: u32,
    ready: u32,
) -> Result<u32, LiftflowError> {
    let avail_now = timeline.availability(ready).max(0) as u32;
    let earliest = if avail_now >= pick {
        ready
    } else {
        let predecessors = timeline.future_drops(ready);
        let selection = compute_waiting(pick, avail_now, &predecessors)?;
        selection.wait_until.map_or(ready, |t| t.max(ready))
    };
    // strengthen to suffix-safety so no already-committed later pickup is
    // starved
    timeline.earliest_pick(pick, earliest).ok_or_else(|| {
        LiftflowError::InfeasiblePrecedence(format!("no feasible pickup time for {pick} cars"))
    })
}

/// Builds the timed schedule from resolved pre-tours, then grafts isolated
/// cycles onto the last tour.
pub(super) fn build_schedule(
    instance: &Instance,
    resolved: &ResolvedFlow,
) -> Result<TransportationSchedule, LiftflowError> {
    let pre_tours = &resolved.pre_tours;
    let order = topological_order(&resolved.precedences, pre_tours).ok_or_else(|| {
        LiftflowError::HeuristicFailed("cyclic precedences reached the timing stage".into())
    })?;
    let amounts: Vec<Vec<(u32, u32)>> = pre_tours.iter().map(|t| pick_drop_amounts(t)).collect();

    let mut timelines = Timelines::new(instance);
    let mut clocks = vec![0u32; pre_tours.len()];
    let mut tours: Vec<Tour> = (0..pre_tours.len())
        .map(|ti| Tour {
            driver: ti as u32 + 1,
            moves: Vec::new(),
        })
        .collect();

    for (ti, mi) in order {
        let pm = pre_tours[ti][mi];
        let (pick, drop) = amounts[ti][mi];
        let driver = ti as u32 + 1;
        let ready = clocks[ti];
        if pm.from == pm.to {
            // zero-length depot splice: no timed move
            continue;
        }
        let t_dep = if pick > 0 {
            place_pickup(timelines.station(pm.from), pick, ready)?
        } else {
            ready
        };
        if t_dep > ready {
            let held = if mi == 0 { 0 } else { pre_tours[ti][mi - 1].load };
            tours[ti].moves.push(Move {
                driver,
                from: pm.from,
                to: pm.from,
                dep: ready,
                arr: t_dep,
                load: held,
            });
        }
        if pick > 0 {
            timelines.station(pm.from).add_pick(t_dep, pick);
        }
        let arr = t_dep + instance.dist(pm.from, pm.to) as u32;
        tours[ti].moves.push(Move {
            driver,
            from: pm.from,
            to: pm.to,
            dep: t_dep,
            arr,
            load: pm.load,
        });
        if drop > 0 {
            timelines.station(pm.to).add_drop(arr, drop);
        }
        clocks[ti] = arr;
    }

    if !resolved.cycles.is_empty() {
        graft_cycles(instance, resolved, &mut tours, &mut timelines)?;
    }
    Ok(TransportationSchedule { tours })
}

/// Grafts each isolated cycle onto the last tour: its final depot return is
/// replaced by a detour through the cycle's stations.
fn graft_cycles(
    instance: &Instance,
    resolved: &ResolvedFlow,
    tours: &mut [Tour],
    timelines: &mut Timelines,
) -> Result<(), LiftflowError> {
    let host = tours
        .len()
        .checked_sub(1)
        .ok_or_else(|| LiftflowError::CorruptFlow("no tour to graft cycles onto".into()))?;
    let mut underfull = vec![false; instance.station_count()];
    let mut overfull = vec![false; instance.station_count()];
    for task in derive_tasks(instance) {
        if task.x > 0 {
            overfull[task.station.0] = true;
        } else {
            underfull[task.station.0] = true;
        }
    }

    for cycle in &resolved.cycles {
        // subtract the base circulation: it changes no pickup or drop
        // amount and restores the minimal-flow shape with an empty arc
        let base = cycle.moves.iter().map(|m| m.load).min().unwrap_or(0);
        let moves: Vec<PreMove> = cycle
            .moves
            .iter()
            .map(|m| PreMove {
                load: m.load - base,
                ..*m
            })
            .collect();
        let moves = &moves;
        let lambda = moves.len();
        // preferred cut: an empty arc from an underfull to an overfull
        // station, then any empty arc; with no empty arc the whole cycle is
        // traversed so no cars are stranded
        let cut = moves
            .iter()
            .position(|m| m.load == 0 && underfull[m.from.0] && overfull[m.to.0])
            .or_else(|| moves.iter().position(|m| m.load == 0));
        let sequence: Vec<PreMove> = match cut {
            Some(c) => (1..lambda).map(|j| moves[(c + j) % lambda]).collect(),
            None => {
                // full traversal entered at the lowest station id
                let entry = (0..lambda)
                    .min_by_key(|&j| moves[j].from.0)
                    .expect("cycle nonempty");
                (0..lambda).map(|j| moves[(entry + j) % lambda]).collect()
            }
        };

        let tour = &mut tours[host];
        let driver = tour.driver;
        let last = tour.moves.pop().ok_or_else(|| {
            LiftflowError::CorruptFlow("graft host tour has no final depot move".into())
        })?;
        if last.to != instance.depot || last.load != 0 {
            return Err(LiftflowError::CorruptFlow(
                "graft host tour does not end with an empty depot return".into(),
            ));
        }
        let mut at = last.from;
        let mut t = last.dep;

        let start = sequence[0].from;
        if start != at {
            let arr = t + instance.dist(at, start) as u32;
            tour.moves.push(Move {
                driver,
                from: at,
                to: start,
                dep: t,
                arr,
                load: 0,
            });
            at = start;
            t = arr;
        }
        let mut prev_load = 0u32;
        for (j, pm) in sequence.iter().enumerate() {
            let pick = pm.load.saturating_sub(prev_load);
            let next_load = sequence.get(j + 1).map(|m| m.load).unwrap_or(0);
            let drop = pm.load.saturating_sub(next_load);
            let t_dep = if pick > 0 {
                place_pickup(timelines.station(pm.from), pick, t)?
            } else {
                t
            };
            if t_dep > t {
                tour.moves.push(Move {
                    driver,
                    from: pm.from,
                    to: pm.from,
                    dep: t,
                    arr: t_dep,
                    load: prev_load,
                });
            }
            if pick > 0 {
                timelines.station(pm.from).add_pick(t_dep, pick);
            }
            let arr = t_dep + instance.dist(pm.from, pm.to) as u32;
            tour.moves.push(Move {
                driver,
                from: pm.from,
                to: pm.to,
                dep: t_dep,
                arr,
                load: pm.load,
            });
            if drop > 0 {
                timelines.station(pm.to).add_drop(arr, drop);
            }
            at = pm.to;
            t = arr;
            prev_load = pm.load;
        }
        let arr = t + instance.dist(at, instance.depot) as u32;
        tour.moves.push(Move {
            driver,
            from: at,
            to: instance.depot,
            dep: t,
            arr,
            load: 0,
        });
    }
    Ok(())
}

/// Report of the best-effort overlong-tour repair.
#[derive(Debug, Clone, Default)]
pub struct SplitReport {
    pub splits_applied: u32,
    /// Drivers still exceeding the horizon after the repair.
    pub remaining_violations: Vec<u32>,
}

/// Splits tours exceeding the horizon at points where the convoy is empty,
/// reusing drivers whose pre-tours carry no cars. Best-effort: returns the
/// improved schedule and a report; fails only when re-timing breaks.
pub fn split_overlong_tours(
    instance: &Instance,
    resolved: &ResolvedFlow,
) -> Result<(TransportationSchedule, SplitReport), LiftflowError> {
    let mut working = resolved.clone();
    let mut report = SplitReport::default();
    let mut schedule = build_schedule(instance, &working)?;

    for _ in 0..instance.k {
        let overlong: Vec<usize> = schedule
            .tours
            .iter()
            .enumerate()
            .filter(|(_, t)| t.final_arrival() > instance.horizon)
            .map(|(i, _)| i)
            .collect();
        if overlong.is_empty() {
            break;
        }
        // a spare driver is one whose pre-tour moves no cars
        let Some(spare) = working
            .pre_tours
            .iter()
            .position(|t| t.iter().all(|m| m.load == 0))
        else {
            break;
        };
        let worst = *overlong
            .iter()
            .max_by_key(|&&i| schedule.tours[i].final_arrival())
            .expect("nonempty");
        if worst == spare {
            break;
        }
        let tour = &working.pre_tours[worst];
        // split where the convoy is empty between consecutive pre-moves
        let boundaries: Vec<usize> = (0..tour.len().saturating_sub(1))
            .filter(|&i| tour[i].load.min(tour[i + 1].load) == 0)
            .filter(|&i| tour[i].to != instance.depot)
            .collect();
        let Some(&at) = boundaries
            .iter()
            .min_by_key(|&&i| (tour.len() as i64 / 2 - i as i64).abs())
        else {
            break;
        };

        let mut first: PreTour = tour[..=at].to_vec();
        first.push(PreMove {
            from: tour[at].to,
            to: instance.depot,
            load: 0,
        });
        let mut second: PreTour = vec![PreMove {
            from: instance.depot,
            to: tour[at + 1].from,
            load: 0,
        }];
        second.extend_from_slice(&tour[at + 1..]);

        working.pre_tours[worst] = first;
        working.pre_tours[spare] = second;
        working.precedences = super::build_precedences(&working.pre_tours, instance);
        if !working.precedences.is_acyclic(&working.pre_tours) {
            break;
        }
        let candidate = build_schedule(instance, &working)?;
        let improved = candidate
            .tours
            .iter()
            .map(|t| t.final_arrival().saturating_sub(instance.horizon) as u64)
            .sum::<u64>()
            < schedule
                .tours
                .iter()
                .map(|t| t.final_arrival().saturating_sub(instance.horizon) as u64)
                .sum::<u64>();
        if !improved {
            break;
        }
        schedule = candidate;
        report.splits_applied += 1;
    }

    report.remaining_violations = schedule
        .tours
        .iter()
        .filter(|t| t.final_arrival() > instance.horizon)
        .map(|t| t.driver)
        .collect();
    Ok((schedule, report))
}
