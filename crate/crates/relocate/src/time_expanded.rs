//! Exact approach: coupled car/driver min-cost flows in a time-expanded
//! network.
//!
//! The network copies every station for each time point `0..=T`. Holdover
//! arcs keep cars/drivers in place for one tick; relocation arcs follow the
//! station graph's edges, taking exactly the metric distance. Car flow `f`
//! and driver flow `F` are coupled by `f(a) <= L * F(a)` on relocation arcs,
//! cars on holdover arcs are bounded by station capacity, and minimizing
//! driver travel cost yields an optimal preemptive transportation schedule
//! after path decomposition.

use std::collections::BTreeMap;

use thiserror::Error;

use crate::instance::{Instance, StationId};
use crate::mip::{
    IntegerProgram, MipError, MipSolution, Relation, SolveLimits, SolveStatus, VarId,
};
use crate::schedule::{simulate_states, Move, Tour, TransportationSchedule};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ArcKind {
    Holdover,
    Relocation,
}

/// One arc of the time-expanded network.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TenArc {
    pub from: StationId,
    pub from_t: u32,
    pub to: StationId,
    pub to_t: u32,
    pub kind: ArcKind,
    /// Travel cost: the metric distance for relocation arcs, 0 for holdovers.
    pub cost: u64,
}

#[derive(Debug, Clone)]
pub struct TimeExpandedNetwork {
    pub station_count: usize,
    pub horizon: u32,
    /// Holdover arcs first (station-major, then time), relocations after.
    pub arcs: Vec<TenArc>,
    pub holdover_count: usize,
    out: Vec<Vec<u32>>,
    inc: Vec<Vec<u32>>,
    by_endpoints: BTreeMap<(usize, u32, usize), u32>,
}

#[derive(Debug, Error)]
pub enum TenError {
    #[error("time horizon must be positive")]
    InvalidHorizon,
    #[error("flow violates an internal invariant: {0}")]
    CorruptFlow(String),
    #[error(transparent)]
    Mip(#[from] MipError),
}

impl TimeExpandedNetwork {
    fn node(&self, v: StationId, t: u32) -> usize {
        v.0 * (self.horizon as usize + 1) + t as usize
    }

    pub fn node_count(&self) -> usize {
        self.station_count * (self.horizon as usize + 1)
    }

    pub fn outgoing(&self, v: StationId, t: u32) -> &[u32] {
        &self.out[self.node(v, t)]
    }

    pub fn incoming(&self, v: StationId, t: u32) -> &[u32] {
        &self.inc[self.node(v, t)]
    }

    pub fn holdover_arc(&self, v: StationId, t: u32) -> u32 {
        debug_assert!(t < self.horizon);
        (v.0 as u32) * self.horizon + t
    }

    pub fn relocation_arc(&self, from: StationId, dep: u32, to: StationId) -> Option<u32> {
        self.by_endpoints.get(&(from.0, dep, to.0)).copied()
    }

    pub fn relocation_arcs(&self) -> impl Iterator<Item = (usize, &TenArc)> {
        self.arcs
            .iter()
            .enumerate()
            .skip(self.holdover_count)
    }
}

/// Builds the time-expanded network of an instance.
pub fn build_time_expanded(instance: &Instance) -> Result<TimeExpandedNetwork, TenError> {
    let horizon = instance.horizon;
    if horizon == 0 {
        return Err(TenError::InvalidHorizon);
    }
    let n = instance.station_count();
    let mut arcs = Vec::new();
    for v in 0..n {
        for t in 0..horizon {
            arcs.push(TenArc {
                from: StationId(v),
                from_t: t,
                to: StationId(v),
                to_t: t + 1,
                kind: ArcKind::Holdover,
                cost: 0,
            });
        }
    }
    let holdover_count = arcs.len();
    let adjacency = instance.graph.adjacency();
    for (u, neighbors) in adjacency.iter().enumerate() {
        for &(v, _w) in neighbors {
            let d = instance.dist(StationId(u), v);
            let d32 = d as u32;
            for t in 0..=horizon.saturating_sub(d32) {
                if d32 == 0 || t + d32 > horizon {
                    continue;
                }
                arcs.push(TenArc {
                    from: StationId(u),
                    from_t: t,
                    to: v,
                    to_t: t + d32,
                    kind: ArcKind::Relocation,
                    cost: d,
                });
            }
        }
    }

    let node_count = n * (horizon as usize + 1);
    let mut out = vec![Vec::new(); node_count];
    let mut inc = vec![Vec::new(); node_count];
    let mut by_endpoints = BTreeMap::new();
    let stride = horizon as usize + 1;
    for (id, arc) in arcs.iter().enumerate() {
        out[arc.from.0 * stride + arc.from_t as usize].push(id as u32);
        inc[arc.to.0 * stride + arc.to_t as usize].push(id as u32);
        if arc.kind == ArcKind::Relocation {
            by_endpoints.insert((arc.from.0, arc.from_t, arc.to.0), id as u32);
        }
    }

    Ok(TimeExpandedNetwork {
        station_count: n,
        horizon,
        arcs,
        holdover_count,
        out,
        inc,
        by_endpoints,
    })
}

/// Integer car and driver flows per arc.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CoupledFlow {
    pub cars: Vec<u64>,
    pub drivers: Vec<u64>,
}

/// Arc-indexed variable handles of the exact formulation.
pub struct TenVars {
    pub cars: Vec<VarId>,
    pub drivers: Vec<VarId>,
}

/// Builds the exact coupled-flow program: minimize driver travel over
/// relocation arcs subject to source/sink balances, conservation, holdover
/// capacities, and per-arc coupling.
pub fn formulate_exact(net: &TimeExpandedNetwork, instance: &Instance) -> (IntegerProgram, TenVars) {
    let mut prog = IntegerProgram::new();
    let k = instance.k as f64;
    let l = instance.capacity_l as f64;
    let max_cars = (instance.capacity_l as u64 * instance.k as u64) as f64;

    let mut cars = Vec::with_capacity(net.arcs.len());
    let mut drivers = Vec::with_capacity(net.arcs.len());
    for (id, arc) in net.arcs.iter().enumerate() {
        // Relocation arcs no driver can ever use carry nothing: drivers
        // start at the depot, so nothing departs a station before a driver
        // can reach it, and a driver taking an arc must still make it home
        // by the horizon. Cars only move with drivers, so both flows pin
        // to zero.
        let unusable = arc.kind == ArcKind::Relocation
            && ((arc.from_t as u64) < instance.dist(instance.depot, arc.from)
                || arc.to_t as u64 + instance.dist(arc.to, instance.depot)
                    > instance.horizon as u64);
        let (f_hi, name_f, name_d) = match arc.kind {
            ArcKind::Holdover => (
                instance.cap[arc.from.0] as f64,
                format!("f_h_{}_{}", arc.from.0, arc.from_t),
                format!("F_h_{}_{}", arc.from.0, arc.from_t),
            ),
            ArcKind::Relocation => (
                if unusable { 0.0 } else { max_cars },
                format!("f_r_{}_{}_{}", arc.from.0, arc.from_t, arc.to.0),
                format!("F_r_{}_{}_{}", arc.from.0, arc.from_t, arc.to.0),
            ),
        };
        let fv = prog.add_var(name_f, 0.0, f_hi, true);
        let dv = prog.add_var(name_d, 0.0, if unusable { 0.0 } else { k }, true);
        if arc.kind == ArcKind::Relocation {
            prog.set_objective(dv, arc.cost as f64);
            prog.add_constraint(
                format!("couple_{id}"),
                vec![(fv, 1.0), (dv, -l)],
                Relation::Le,
                0.0,
            );
        }
        cars.push(fv);
        drivers.push(dv);
    }

    for v in instance.stations() {
        let source_out = net.outgoing(v, 0);
        prog.add_constraint(
            format!("src_car_{}", v.0),
            source_out.iter().map(|&a| (cars[a as usize], 1.0)).collect(),
            Relation::Eq,
            instance.z0[v.0] as f64,
        );
        prog.add_constraint(
            format!("src_drv_{}", v.0),
            source_out.iter().map(|&a| (drivers[a as usize], 1.0)).collect(),
            Relation::Eq,
            if v == instance.depot { k } else { 0.0 },
        );
        let sink_in = net.incoming(v, net.horizon);
        prog.add_constraint(
            format!("snk_car_{}", v.0),
            sink_in.iter().map(|&a| (cars[a as usize], 1.0)).collect(),
            Relation::Eq,
            instance.zt[v.0] as f64,
        );
        prog.add_constraint(
            format!("snk_drv_{}", v.0),
            sink_in.iter().map(|&a| (drivers[a as usize], 1.0)).collect(),
            Relation::Eq,
            if v == instance.depot { k } else { 0.0 },
        );
        for t in 1..net.horizon {
            for (vars, tag) in [(&cars, "car"), (&drivers, "drv")] {
                let mut coeffs: Vec<(VarId, f64)> = net
                    .outgoing(v, t)
                    .iter()
                    .map(|&a| (vars[a as usize], 1.0))
                    .collect();
                coeffs.extend(net.incoming(v, t).iter().map(|&a| (vars[a as usize], -1.0)));
                prog.add_constraint(
                    format!("cons_{tag}_{}_{t}", v.0),
                    coeffs,
                    Relation::Eq,
                    0.0,
                );
            }
        }
    }

    (prog, TenVars { cars, drivers })
}

/// Rounds a solved program's values into integer flows.
pub fn extract_flow(vars: &TenVars, solution: &MipSolution) -> CoupledFlow {
    CoupledFlow {
        cars: vars
            .cars
            .iter()
            .map(|&v| solution.value(v).round().max(0.0) as u64)
            .collect(),
        drivers: vars
            .drivers
            .iter()
            .map(|&v| solution.value(v).round().max(0.0) as u64)
            .collect(),
    }
}

/// Re-checks all flow invariants in exact integer arithmetic: coupling and
/// holdover capacity arc-wise, plus conservation and boundary balances.
pub fn verify_flow(
    net: &TimeExpandedNetwork,
    instance: &Instance,
    flow: &CoupledFlow,
) -> Result<(), TenError> {
    let l = instance.capacity_l as i128;
    for (id, arc) in net.arcs.iter().enumerate() {
        let f = flow.cars[id] as i128;
        let d = flow.drivers[id] as i128;
        match arc.kind {
            ArcKind::Relocation => {
                if f > l * d {
                    return Err(TenError::CorruptFlow(format!(
                        "coupling violated on arc {id}: f = {f}, L*F = {}",
                        l * d
                    )));
                }
            }
            ArcKind::Holdover => {
                if f > instance.cap[arc.from.0] as i128 {
                    return Err(TenError::CorruptFlow(format!(
                        "holdover capacity violated at {} time {}",
                        arc.from, arc.from_t
                    )));
                }
            }
        }
    }
    for v in instance.stations() {
        let out_car: i128 = net.outgoing(v, 0).iter().map(|&a| flow.cars[a as usize] as i128).sum();
        if out_car != instance.z0[v.0] as i128 {
            return Err(TenError::CorruptFlow(format!("car source at {v}")));
        }
        let in_car: i128 = net
            .incoming(v, net.horizon)
            .iter()
            .map(|&a| flow.cars[a as usize] as i128)
            .sum();
        if in_car != instance.zt[v.0] as i128 {
            return Err(TenError::CorruptFlow(format!("car sink at {v}")));
        }
        let out_drv: i128 = net.outgoing(v, 0).iter().map(|&a| flow.drivers[a as usize] as i128).sum();
        let expected = if v == instance.depot { instance.k as i128 } else { 0 };
        if out_drv != expected {
            return Err(TenError::CorruptFlow(format!("driver source at {v}")));
        }
        for t in 1..net.horizon {
            for values in [&flow.cars, &flow.drivers] {
                let outs: i128 = net.outgoing(v, t).iter().map(|&a| values[a as usize] as i128).sum();
                let ins: i128 = net.incoming(v, t).iter().map(|&a| values[a as usize] as i128).sum();
                if outs != ins {
                    return Err(TenError::CorruptFlow(format!(
                        "conservation violated at {v} time {t}"
                    )));
                }
            }
        }
    }
    Ok(())
}

/// Decomposes coupled flows into `k` depot-to-depot tours.
///
/// Driver paths are peeled off deterministically: from each node the walk
/// takes the residual arc with the earliest arrival, ties broken by lowest
/// destination index. Car loads fill tours greedily in extraction order,
/// each traversal taking `min(L, remaining f)`. Leading and trailing depot
/// idling is trimmed; re-aggregation pads it back.
pub fn decompose_flows(
    net: &TimeExpandedNetwork,
    flow: &CoupledFlow,
    instance: &Instance,
) -> Result<TransportationSchedule, TenError> {
    let mut res_drv = flow.drivers.clone();
    let mut res_car: Vec<u64> = flow.cars.clone();
    let mut tours = Vec::with_capacity(instance.k as usize);

    for driver in 1..=instance.k {
        let mut at = (instance.depot, 0u32);
        let mut path: Vec<u32> = Vec::new();
        while at.1 < net.horizon {
            let mut best: Option<(u32, usize, u32)> = None; // (arr, dest, arc)
            for &a in net.outgoing(at.0, at.1) {
                if res_drv[a as usize] == 0 {
                    continue;
                }
                let arc = &net.arcs[a as usize];
                let key = (arc.to_t, arc.to.0);
                if best.is_none_or(|(arr, dest, _)| key < (arr, dest)) {
                    best = Some((arc.to_t, arc.to.0, a));
                }
            }
            let Some((_, _, a)) = best else {
                return Err(TenError::CorruptFlow(format!(
                    "driver walk stuck at {} time {}",
                    at.0, at.1
                )));
            };
            res_drv[a as usize] -= 1;
            let arc = net.arcs[a as usize];
            path.push(a);
            at = (arc.to, arc.to_t);
        }
        if at.0 != instance.depot {
            return Err(TenError::CorruptFlow(
                "driver walk did not end at the depot".into(),
            ));
        }

        // moves: relocation arcs carry greedy loads, holdover runs merge
        let mut moves: Vec<Move> = Vec::new();
        let mut wait_start: Option<(StationId, u32)> = None;
        for &a in &path {
            let arc = net.arcs[a as usize];
            match arc.kind {
                ArcKind::Holdover => {
                    if wait_start.is_none() {
                        wait_start = Some((arc.from, arc.from_t));
                    }
                }
                ArcKind::Relocation => {
                    if let Some((station, since)) = wait_start.take() {
                        if !moves.is_empty() {
                            moves.push(Move {
                                driver,
                                from: station,
                                to: station,
                                dep: since,
                                arr: arc.from_t,
                                load: 0,
                            });
                        }
                    }
                    let load = res_car[a as usize].min(instance.capacity_l as u64) as u32;
                    res_car[a as usize] -= load as u64;
                    moves.push(Move {
                        driver,
                        from: arc.from,
                        to: arc.to,
                        dep: arc.from_t,
                        arr: arc.to_t,
                        load,
                    });
                }
            }
        }
        tours.push(Tour { driver, moves });
    }

    for (id, arc) in net.relocation_arcs() {
        let _ = arc;
        if res_drv[id] != 0 {
            return Err(TenError::CorruptFlow(format!(
                "driver flow left over on arc {id}"
            )));
        }
        if res_car[id] != 0 {
            return Err(TenError::CorruptFlow(format!(
                "car flow left over on relocation arc {id}: {}",
                res_car[id]
            )));
        }
    }
    Ok(TransportationSchedule { tours })
}

/// Re-aggregates a schedule into per-arc flows: the inverse of
/// [`decompose_flows`]. Depot idling before the first and after the last
/// move is padded back onto depot holdover arcs, and holdover car flow is
/// read off the state trajectory.
pub fn aggregate_schedule(
    net: &TimeExpandedNetwork,
    instance: &Instance,
    schedule: &TransportationSchedule,
) -> Result<CoupledFlow, TenError> {
    let mut cars = vec![0u64; net.arcs.len()];
    let mut drivers = vec![0u64; net.arcs.len()];

    for tour in &schedule.tours {
        let mut at = (instance.depot, 0u32);
        for m in &tour.moves {
            if m.from != at.0 {
                return Err(TenError::CorruptFlow(format!(
                    "tour of driver {} teleports from {} to {}",
                    tour.driver, at.0, m.from
                )));
            }
            for t in at.1..m.dep {
                drivers[net.holdover_arc(at.0, t) as usize] += 1;
            }
            if m.is_waiting() {
                for t in m.dep..m.arr {
                    drivers[net.holdover_arc(m.from, t) as usize] += 1;
                }
            } else {
                let arc = net.relocation_arc(m.from, m.dep, m.to).ok_or_else(|| {
                    TenError::CorruptFlow(format!(
                        "no relocation arc for move {} -> {} departing {}",
                        m.from, m.to, m.dep
                    ))
                })?;
                drivers[arc as usize] += 1;
                cars[arc as usize] += m.load as u64;
            }
            at = (m.to, m.arr);
        }
        for t in at.1..net.horizon {
            drivers[net.holdover_arc(at.0, t) as usize] += 1;
        }
        if at.0 != instance.depot {
            return Err(TenError::CorruptFlow(format!(
                "tour of driver {} ends away from the depot",
                tour.driver
            )));
        }
    }

    let trajectory = simulate_states(schedule, instance);
    for v in instance.stations() {
        for t in 0..net.horizon {
            let count = trajectory.at(v, t);
            if count < 0 {
                return Err(TenError::CorruptFlow(format!(
                    "negative station count at {v} time {t}"
                )));
            }
            cars[net.holdover_arc(v, t) as usize] = count as u64;
        }
    }
    Ok(CoupledFlow { cars, drivers })
}

/// Two-stage primal heuristic: route cars at minimum travel cost ignoring
/// drivers (a pure network LP, so the vertex is integral), then cover the
/// resulting per-arc convoy counts with a cheapest driver flow (again a
/// network LP over floors `ceil(f/L)`). Fails — returning `None` — whenever
/// the drivers cannot cover the car plan, e.g. too few drivers for the
/// car flow's parallelism.
fn warm_start_values(
    net: &TimeExpandedNetwork,
    instance: &Instance,
    exact: &IntegerProgram,
    vars: &TenVars,
) -> Option<Vec<f64>> {
    use crate::mip::solve_lp;

    // stage A: cheapest car flow within the exact model's car bounds
    let mut prog_a = IntegerProgram::new();
    let mut a_vars = Vec::with_capacity(net.arcs.len());
    for (id, arc) in net.arcs.iter().enumerate() {
        let (_, hi) = exact.bounds(vars.cars[id]);
        let v = prog_a.add_var(format!("f{id}"), 0.0, hi, false);
        if arc.kind == ArcKind::Relocation {
            prog_a.set_objective(v, arc.cost as f64);
        }
        a_vars.push(v);
    }
    for v in instance.stations() {
        prog_a.add_constraint(
            format!("src_{}", v.0),
            net.outgoing(v, 0).iter().map(|&a| (a_vars[a as usize], 1.0)).collect(),
            Relation::Eq,
            instance.z0[v.0] as f64,
        );
        prog_a.add_constraint(
            format!("snk_{}", v.0),
            net.incoming(v, net.horizon)
                .iter()
                .map(|&a| (a_vars[a as usize], 1.0))
                .collect(),
            Relation::Eq,
            instance.zt[v.0] as f64,
        );
        for t in 1..net.horizon {
            let mut coeffs: Vec<(VarId, f64)> = net
                .outgoing(v, t)
                .iter()
                .map(|&a| (a_vars[a as usize], 1.0))
                .collect();
            coeffs.extend(net.incoming(v, t).iter().map(|&a| (a_vars[a as usize], -1.0)));
            prog_a.add_constraint(format!("cons_{}_{t}", v.0), coeffs, Relation::Eq, 0.0);
        }
    }
    let sol_a = solve_lp(&prog_a).ok()?;
    if sol_a.status != SolveStatus::Optimal {
        return None;
    }
    let car_plan: Vec<u64> = a_vars
        .iter()
        .map(|&v| sol_a.value(v).round().max(0.0) as u64)
        .collect();

    // stage B: cheapest driver flow covering ceil(f/L) per relocation arc
    let l = instance.capacity_l as u64;
    let mut prog_b = IntegerProgram::new();
    let mut b_vars = Vec::with_capacity(net.arcs.len());
    for (id, arc) in net.arcs.iter().enumerate() {
        let floor = if arc.kind == ArcKind::Relocation {
            car_plan[id].div_ceil(l) as f64
        } else {
            0.0
        };
        let v = prog_b.add_var(format!("F{id}"), floor, instance.k as f64, false);
        if arc.kind == ArcKind::Relocation {
            prog_b.set_objective(v, arc.cost as f64);
        }
        b_vars.push(v);
    }
    for v in instance.stations() {
        let k = if v == instance.depot { instance.k as f64 } else { 0.0 };
        prog_b.add_constraint(
            format!("src_{}", v.0),
            net.outgoing(v, 0).iter().map(|&a| (b_vars[a as usize], 1.0)).collect(),
            Relation::Eq,
            k,
        );
        prog_b.add_constraint(
            format!("snk_{}", v.0),
            net.incoming(v, net.horizon)
                .iter()
                .map(|&a| (b_vars[a as usize], 1.0))
                .collect(),
            Relation::Eq,
            k,
        );
        for t in 1..net.horizon {
            let mut coeffs: Vec<(VarId, f64)> = net
                .outgoing(v, t)
                .iter()
                .map(|&a| (b_vars[a as usize], 1.0))
                .collect();
            coeffs.extend(net.incoming(v, t).iter().map(|&a| (b_vars[a as usize], -1.0)));
            prog_b.add_constraint(format!("cons_{}_{t}", v.0), coeffs, Relation::Eq, 0.0);
        }
    }
    let sol_b = solve_lp(&prog_b).ok()?;
    if sol_b.status != SolveStatus::Optimal {
        return None;
    }

    // interleave into the exact model's variable order
    let mut values = vec![0.0; exact.num_vars()];
    for id in 0..net.arcs.len() {
        values[vars.cars[id].index()] = car_plan[id] as f64;
        values[vars.drivers[id].index()] = sol_b.value(b_vars[id]).round().max(0.0);
    }
    Some(values)
}

/// Outcome of the exact solver.
pub struct ExactResult {
    pub solution: MipSolution,
    pub schedule: Option<TransportationSchedule>,
    /// The solved flows, when a solution exists.
    pub flow: Option<CoupledFlow>,
}

/// Builds, solves, verifies, and decomposes the exact model. On `Infeasible`
/// no schedule exists within the horizon; on a limit without incumbent only
/// the bound is reported.
pub fn solve_exact(instance: &Instance, limits: &SolveLimits) -> Result<ExactResult, TenError> {
    if instance.is_balanced() {
        return Ok(ExactResult {
            solution: MipSolution {
                status: SolveStatus::Optimal,
                values: Vec::new(),
                objective: 0.0,
                bound: 0.0,
                gap: Some(0.0),
                stats: Default::default(),
            },
            schedule: Some(TransportationSchedule::empty(instance.k)),
            flow: None,
        });
    }
    let net = build_time_expanded(instance)?;
    let (prog, vars) = formulate_exact(&net, instance);
    let warm = warm_start_values(&net, instance, &prog, &vars);
    let solution = crate::mip::solve_ip_with_start(&prog, limits, warm.as_deref())?;
    if !solution.has_solution() {
        return Ok(ExactResult {
            solution,
            schedule: None,
            flow: None,
        });
    }
    let flow = extract_flow(&vars, &solution);
    verify_flow(&net, instance, &flow)?;
    let schedule = decompose_flows(&net, &flow, instance)?;
    Ok(ExactResult {
        solution,
        schedule: Some(schedule),
        flow: Some(flow),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instance::WeightedGraph;
    use crate::schedule::{brute_force_optimum, validate_schedule, OracleCaps};

    fn two_station_instance(weight: u64, horizon: u32) -> Instance {
        let graph =
            WeightedGraph::new(2, vec![(StationId(0), StationId(1), weight)]).unwrap();
        Instance::new(
            graph,
            vec![10, 10],
            vec![1, 0],
            vec![0, 1],
            1,
            1,
            horizon,
            StationId(0),
        )
        .unwrap()
    }

    #[test]
    fn arc_counts_match_definition() {
        let instance = two_station_instance(3, 5);
        let net = build_time_expanded(&instance).unwrap();
        assert_eq!(net.holdover_count, 2 * 5);
        // departures possible at t in {0, 1, 2} per direction
        let relocations = net.arcs.len() - net.holdover_count;
        assert_eq!(relocations, 6);
        // edge longer than the horizon contributes nothing
        let tight = two_station_instance(7, 5);
        let net = build_time_expanded(&tight).unwrap();
        assert_eq!(net.arcs.len(), net.holdover_count);
    }

    #[test]
    fn arc_counts_match_brute_recount() {
        // hand-built 5-station graph
        let graph = WeightedGraph::new(
            5,
            vec![
                (StationId(0), StationId(1), 2),
                (StationId(1), StationId(2), 1),
                (StationId(2), StationId(3), 4),
                (StationId(3), StationId(4), 2),
                (StationId(0), StationId(4), 3),
                (StationId(1), StationId(3), 5),
            ],
        )
        .unwrap();
        let instance = Instance::new(
            graph,
            vec![5; 5],
            vec![2, 0, 1, 0, 1],
            vec![0, 1, 1, 2, 0],
            2,
            2,
            12,
            StationId(0),
        )
        .unwrap();
        let net = build_time_expanded(&instance).unwrap();

        // independent recount by double loop over directed station pairs
        let mut expected_reloc = 0usize;
        let adjacency = instance.graph.adjacency();
        for (u, neighbors) in adjacency.iter().enumerate() {
            for &(v, _) in neighbors {
                let d = instance.dist(StationId(u), v) as u32;
                for t in 0..=instance.horizon {
                    if d > 0 && t + d <= instance.horizon {
                        expected_reloc += 1;
                    }
                }
            }
        }
        assert_eq!(net.arcs.len() - net.holdover_count, expected_reloc);
        assert_eq!(net.holdover_count, 5 * 12);

        // acyclic by construction: verify with a topological scan
        let mut indegree = vec![0u32; net.node_count()];
        let stride = instance.horizon as usize + 1;
        for arc in &net.arcs {
            indegree[arc.to.0 * stride + arc.to_t as usize] += 1;
        }
        let mut queue: Vec<usize> = (0..net.node_count())
            .filter(|&nd| indegree[nd] == 0)
            .collect();
        let mut seen = 0;
        while let Some(nd) = queue.pop() {
            seen += 1;
            let (v, t) = (nd / stride, (nd % stride) as u32);
            for &a in net.outgoing(StationId(v), t) {
                let arc = &net.arcs[a as usize];
                let target = arc.to.0 * stride + arc.to_t as usize;
                indegree[target] -= 1;
                if indegree[target] == 0 {
                    queue.push(target);
                }
            }
        }
        assert_eq!(seen, net.node_count());
    }

    #[test]
    fn variable_count_is_two_per_arc() {
        let instance = two_station_instance(3, 5);
        let net = build_time_expanded(&instance).unwrap();
        let (prog, _) = formulate_exact(&net, &instance);
        assert_eq!(prog.num_vars(), 2 * net.arcs.len());
    }

    #[test]
    fn balanced_instance_solves_to_zero() {
        let graph =
            WeightedGraph::new(2, vec![(StationId(0), StationId(1), 3)]).unwrap();
        let instance = Instance::new(
            graph,
            vec![5, 5],
            vec![2, 1],
            vec![2, 1],
            2,
            1,
            6,
            StationId(0),
        )
        .unwrap();
        let result = solve_exact(&instance, &SolveLimits::default()).unwrap();
        assert_eq!(result.solution.status, SolveStatus::Optimal);
        assert_eq!(result.solution.objective, 0.0);
        let schedule = result.schedule.unwrap();
        assert_eq!(schedule.total_length(&instance.metric), 0);
        assert!(validate_schedule(&schedule, &instance, true).is_clean());
    }

    #[test]
    fn tiny_line_matches_brute_force_and_validates() {
        let graph = WeightedGraph::new(
            3,
            vec![(StationId(0), StationId(1), 1), (StationId(1), StationId(2), 2)],
        )
        .unwrap();
        let instance = Instance::new(
            graph,
            vec![10; 3],
            vec![0, 1, 0],
            vec![0, 0, 1],
            1,
            1,
            6,
            StationId(0),
        )
        .unwrap();
        let (oracle_cost, _) = brute_force_optimum(&instance, OracleCaps::default())
            .unwrap()
            .unwrap();
        let result = solve_exact(&instance, &SolveLimits::default()).unwrap();
        assert_eq!(result.solution.status, SolveStatus::Optimal);
        assert_eq!(result.solution.objective as u64, oracle_cost);
        let schedule = result.schedule.unwrap();
        assert_eq!(schedule.total_length(&instance.metric), oracle_cost);
        let report = validate_schedule(&schedule, &instance, true);
        assert!(report.is_clean(), "{report}");
    }

    #[test]
    fn round_trip_reaggregation_is_arc_exact() {
        let graph = WeightedGraph::new(
            4,
            vec![
                (StationId(0), StationId(1), 1),
                (StationId(1), StationId(2), 2),
                (StationId(2), StationId(3), 1),
                (StationId(0), StationId(3), 2),
            ],
        )
        .unwrap();
        let instance = Instance::new(
            graph,
            vec![6; 4],
            vec![0, 3, 0, 1],
            vec![1, 0, 2, 1],
            2,
            2,
            10,
            StationId(0),
        )
        .unwrap();
        let result = solve_exact(&instance, &SolveLimits::default()).unwrap();
        let flow = result.flow.as_ref().unwrap();
        let schedule = result.schedule.as_ref().unwrap();
        let net = build_time_expanded(&instance).unwrap();
        let again = aggregate_schedule(&net, &instance, schedule).unwrap();
        assert_eq!(&again, flow);
    }

    #[test]
    fn objective_invariant_under_station_relabeling() {
        let graph = WeightedGraph::new(
            3,
            vec![(StationId(0), StationId(1), 2), (StationId(1), StationId(2), 3)],
        )
        .unwrap();
        let instance = Instance::new(
            graph,
            vec![6; 3],
            vec![0, 2, 0],
            vec![0, 0, 2],
            1,
            2,
            12,
            StationId(0),
        )
        .unwrap();
        // swap stations 1 and 2
        let permuted_graph = WeightedGraph::new(
            3,
            vec![(StationId(0), StationId(2), 2), (StationId(2), StationId(1), 3)],
        )
        .unwrap();
        let permuted = Instance::new(
            permuted_graph,
            vec![6; 3],
            vec![0, 0, 2],
            vec![0, 2, 0],
            1,
            2,
            12,
            StationId(0),
        )
        .unwrap();
        let a = solve_exact(&instance, &SolveLimits::default()).unwrap();
        let b = solve_exact(&permuted, &SolveLimits::default()).unwrap();
        assert_eq!(a.solution.objective, b.solution.objective);
    }

    #[test]
    fn longer_horizon_never_hurts() {
        let graph = WeightedGraph::new(
            3,
            vec![(StationId(0), StationId(1), 2), (StationId(1), StationId(2), 2)],
        )
        .unwrap();
        let mk = |horizon| {
            Instance::new(
                graph.clone(),
                vec![6; 3],
                vec![0, 2, 0],
                vec![0, 0, 2],
                1,
                1,
                horizon,
                StationId(0),
            )
            .unwrap()
        };
        let short = solve_exact(&mk(10), &SolveLimits::default()).unwrap();
        let long = solve_exact(&mk(16), &SolveLimits::default()).unwrap();
        assert!(long.solution.objective <= short.solution.objective);
    }

    #[test]
    fn impossible_horizon_is_infeasible() {
        let instance = two_station_instance(3, 4); // needs 3 + 3 = 6
        let result = solve_exact(&instance, &SolveLimits::default()).unwrap();
        assert_eq!(result.solution.status, SolveStatus::Infeasible);
        assert!(result.schedule.is_none());
    }
}
