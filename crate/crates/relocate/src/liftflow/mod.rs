//! The LiftFlow heuristic: coupled min-cost flows on an aggregated network,
//! lifted into a timed transportation schedule.
//!
//! Step 1 solves an integer min-cost flow on a small time-free network over
//! the depot and the unbalanced stations. Step 2 decomposes the driver flow
//! into pre-tours, derives cross-tour precedences, computes waiting times,
//! and emits timed tours; isolated cycles in the flow are grafted onto an
//! existing tour. The cost of the optimal step-1 flow is a lower bound on
//! the optimal total tour length.

mod timing;

pub use timing::{
    compute_waiting, split_overlong_tours, PredecessorDrop, SplitReport, WaitingSelection,
};

use std::fmt;

use serde::Serialize;
use thiserror::Error;

use crate::instance::{derive_tasks, Instance, StationId};
use crate::mip::{
    solve_ip, IntegerProgram, MipError, MipSolution, Relation, SolveLimits, SolveStatus, VarId,
};
use crate::schedule::TransportationSchedule;

/// Node of the aggregated network. The depot appears twice, as the driver
/// source and the driver sink; stations appear iff they carry a task.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AggNode {
    Source,
    Sink,
    Station { station: StationId, overfull: bool },
}

impl AggNode {
    pub fn station(&self) -> Option<StationId> {
        match self {
            AggNode::Station { station, .. } => Some(*station),
            _ => None,
        }
    }
}

/// Arc class of the aggregated network.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AggArcKind {
    /// Depot source to an overfull station.
    Start,
    /// Overfull to overfull.
    OverfullLink,
    /// Overfull to underfull or back.
    Connection,
    /// Underfull to underfull.
    UnderfullLink,
    /// Underfull station to the depot sink.
    Finish,
}

impl AggArcKind {
    /// Arcs that correspond to convoy moves and carry the coupling
    /// constraint.
    pub fn is_relocation(self) -> bool {
        matches!(
            self,
            AggArcKind::OverfullLink | AggArcKind::Connection | AggArcKind::UnderfullLink
        )
    }
}

#[derive(Debug, Clone, Copy)]
pub struct AggArc {
    pub from: u32,
    pub to: u32,
    pub weight: u64,
    pub kind: AggArcKind,
}

#[derive(Debug, Clone)]
pub struct AggregatedNetwork {
    pub nodes: Vec<AggNode>,
    pub arcs: Vec<AggArc>,
    pub overfull: Vec<StationId>,
    pub underfull: Vec<StationId>,
    out: Vec<Vec<u32>>,
}

pub const SOURCE: u32 = 0;
pub const SINK: u32 = 1;

impl AggregatedNetwork {
    pub fn outgoing(&self, node: u32) -> &[u32] {
        &self.out[node as usize]
    }

    pub fn arc_count_by_kind(&self, kind: AggArcKind) -> usize {
        self.arcs.iter().filter(|a| a.kind == kind).count()
    }

    /// The station a node stands for; the source and sink both map to the
    /// depot.
    pub fn node_station(&self, node: u32, depot: StationId) -> StationId {
        self.nodes[node as usize].station().unwrap_or(depot)
    }
}

#[derive(Debug, Error)]
pub enum LiftflowError {
    #[error("aggregated model degenerate: tasks exist but station classes are empty")]
    ModelDegenerate,
    #[error("heuristic failed: {0}")]
    HeuristicFailed(String),
    #[error("flow violates an internal invariant: {0}")]
    CorruptFlow(String),
    #[error("precedence structure unsatisfiable: {0}")]
    InfeasiblePrecedence(String),
    #[error(transparent)]
    Mip(#[from] MipError),
}

/// Builds the aggregated network over the depot and all task stations.
/// Balanced stations do not appear. A balanced instance yields a network
/// with empty station classes.
pub fn build_aggregated(instance: &Instance) -> Result<AggregatedNetwork, LiftflowError> {
    let tasks = derive_tasks(instance);
    let overfull: Vec<StationId> = tasks.iter().filter(|t| t.x > 0).map(|t| t.station).collect();
    let underfull: Vec<StationId> = tasks.iter().filter(|t| t.x < 0).map(|t| t.station).collect();
    if !tasks.is_empty() && (overfull.is_empty() || underfull.is_empty()) {
        return Err(LiftflowError::ModelDegenerate);
    }

    let mut nodes = vec![AggNode::Source, AggNode::Sink];
    let mut node_of = std::collections::BTreeMap::new();
    for &s in overfull.iter() {
        node_of.insert(s, nodes.len() as u32);
        nodes.push(AggNode::Station { station: s, overfull: true });
    }
    for &s in underfull.iter() {
        node_of.insert(s, nodes.len() as u32);
        nodes.push(AggNode::Station { station: s, overfull: false });
    }

    let d = |a: StationId, b: StationId| instance.dist(a, b);
    let mut arcs = Vec::new();
    for &o in &overfull {
        arcs.push(AggArc {
            from: SOURCE,
            to: node_of[&o],
            weight: d(instance.depot, o),
            kind: AggArcKind::Start,
        });
    }
    for &a in &overfull {
        for &b in &overfull {
            if a != b {
                arcs.push(AggArc {
                    from: node_of[&a],
                    to: node_of[&b],
                    weight: d(a, b),
                    kind: AggArcKind::OverfullLink,
                });
            }
        }
    }
    for &o in &overfull {
        for &u in &underfull {
            arcs.push(AggArc {
                from: node_of[&o],
                to: node_of[&u],
                weight: d(o, u),
                kind: AggArcKind::Connection,
            });
            arcs.push(AggArc {
                from: node_of[&u],
                to: node_of[&o],
                weight: d(u, o),
                kind: AggArcKind::Connection,
            });
        }
    }
    for &a in &underfull {
        for &b in &underfull {
            if a != b {
                arcs.push(AggArc {
                    from: node_of[&a],
                    to: node_of[&b],
                    weight: d(a, b),
                    kind: AggArcKind::UnderfullLink,
                });
            }
        }
    }
    for &u in &underfull {
        arcs.push(AggArc {
            from: node_of[&u],
            to: SINK,
            weight: d(u, instance.depot),
            kind: AggArcKind::Finish,
        });
    }

    let mut out = vec![Vec::new(); nodes.len()];
    for (id, arc) in arcs.iter().enumerate() {
        out[arc.from as usize].push(id as u32);
    }
    Ok(AggregatedNetwork {
        nodes,
        arcs,
        overfull,
        underfull,
        out,
    })
}

/// Integer flows on the aggregated network, arc-indexed.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AggregatedFlow {
    pub cars: Vec<u64>,
    pub drivers: Vec<u64>,
}

impl AggregatedFlow {
    /// Total weighted driver cost of the flow.
    pub fn cost(&self, net: &AggregatedNetwork) -> u64 {
        net.arcs
            .iter()
            .zip(&self.drivers)
            .map(|(arc, &f)| arc.weight * f)
            .sum()
    }
}

/// Solves the step-1 min-cost coupled flow. `extra_cuts` carries objective
/// values of earlier rounds; each one forces the new objective to exceed it
/// (weights and flows are integral, so strictly-greater is `>= cut + 1`).
pub fn solve_aggregated(
    net: &AggregatedNetwork,
    instance: &Instance,
    limits: &SolveLimits,
    extra_cuts: &[u64],
) -> Result<(AggregatedFlow, MipSolution), LiftflowError> {
    let surplus = instance.total_surplus() as f64;
    let k = instance.k as f64;
    let l = instance.capacity_l as f64;
    let driver_hi = k + surplus;

    let mut prog = IntegerProgram::new();
    let mut cars: Vec<VarId> = Vec::with_capacity(net.arcs.len());
    let mut drivers: Vec<VarId> = Vec::with_capacity(net.arcs.len());
    for (id, arc) in net.arcs.iter().enumerate() {
        // cars never ride the depot legs: the depot has no car balance
        let f_hi = if arc.kind.is_relocation() { surplus } else { 0.0 };
        let fv = prog.add_var(format!("f_{id}"), 0.0, f_hi, true);
        let dv = prog.add_var(format!("F_{id}"), 0.0, driver_hi, true);
        prog.set_objective(dv, arc.weight as f64);
        if arc.kind.is_relocation() {
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

    // car balances: overfull emit their surplus, underfull absorb their
    // deficit; driver flow conserves at stations and moves k out of the
    // source and k into the sink
    for (ni, node) in net.nodes.iter().enumerate() {
        let outs: Vec<u32> = net.outgoing(ni as u32).to_vec();
        let ins: Vec<u32> = net
            .arcs
            .iter()
            .enumerate()
            .filter(|(_, a)| a.to == ni as u32)
            .map(|(id, _)| id as u32)
            .collect();
        match node {
            AggNode::Source => {
                prog.add_constraint(
                    "drv_source",
                    outs.iter().map(|&a| (drivers[a as usize], 1.0)).collect(),
                    Relation::Eq,
                    k,
                );
            }
            AggNode::Sink => {
                prog.add_constraint(
                    "drv_sink",
                    ins.iter().map(|&a| (drivers[a as usize], 1.0)).collect(),
                    Relation::Eq,
                    k,
                );
            }
            AggNode::Station { station, .. } => {
                let balance =
                    instance.z0[station.0] as f64 - instance.zt[station.0] as f64;
                let mut coeffs: Vec<(VarId, f64)> =
                    outs.iter().map(|&a| (cars[a as usize], 1.0)).collect();
                coeffs.extend(ins.iter().map(|&a| (cars[a as usize], -1.0)));
                prog.add_constraint(format!("car_bal_{}", station.0), coeffs, Relation::Eq, balance);
                let mut coeffs: Vec<(VarId, f64)> =
                    outs.iter().map(|&a| (drivers[a as usize], 1.0)).collect();
                coeffs.extend(ins.iter().map(|&a| (drivers[a as usize], -1.0)));
                prog.add_constraint(format!("drv_bal_{}", station.0), coeffs, Relation::Eq, 0.0);
            }
        }
    }

    for (ci, &cut) in extra_cuts.iter().enumerate() {
        let coeffs: Vec<(VarId, f64)> = net
            .arcs
            .iter()
            .enumerate()
            .filter(|(_, a)| a.weight > 0)
            .map(|(id, a)| (drivers[id], a.weight as f64))
            .collect();
        prog.add_constraint(format!("cut_{ci}"), coeffs, Relation::Ge, cut as f64 + 1.0);
    }

    let solution = solve_ip(&prog, limits)?;
    if !solution.has_solution() {
        return Err(LiftflowError::HeuristicFailed(format!(
            "aggregated model returned {} ({} cuts active)",
            solution.status,
            extra_cuts.len()
        )));
    }
    let mut flow = AggregatedFlow {
        cars: cars
            .iter()
            .map(|&v| solution.value(v).round().max(0.0) as u64)
            .collect(),
        drivers: drivers
            .iter()
            .map(|&v| solution.value(v).round().max(0.0) as u64)
            .collect(),
    };
    // Cars are costless, so vertex solutions may pad circulations on top of
    // the useful flow wherever coupling binds. Pre-move construction relies
    // on minimal car flows; cancel circulations to canonicalize.
    cancel_car_circulations(net, &mut flow.cars);
    verify_aggregated_flow(net, instance, &flow)?;
    Ok((flow, solution))
}

/// Subtracts directed cycles from the car flow until none remain. Balances
/// are preserved; the result is the unique-up-to-cycles minimal car flow.
fn cancel_car_circulations(net: &AggregatedNetwork, cars: &mut [u64]) {
    'again: loop {
        // DFS over arcs with positive car flow; a back edge closes a cycle
        let n = net.nodes.len();
        let mut color = vec![0u8; n]; // 0 fresh, 1 on stack, 2 done
        for start in 0..n as u32 {
            if color[start as usize] != 0 {
                continue;
            }
            // stack entries: (node, next out-arc position, arc taken into node)
            let mut stack: Vec<(u32, usize, Option<u32>)> = vec![(start, 0, None)];
            color[start as usize] = 1;
            while let Some(&(node, pos, _)) = stack.last() {
                let outs = net.outgoing(node);
                let next = outs[pos..]
                    .iter()
                    .position(|&a| cars[a as usize] > 0)
                    .map(|off| pos + off);
                match next {
                    None => {
                        color[node as usize] = 2;
                        stack.pop();
                    }
                    Some(p) => {
                        stack.last_mut().unwrap().1 = p + 1;
                        let arc = outs[p];
                        let target = net.arcs[arc as usize].to;
                        match color[target as usize] {
                            0 => {
                                color[target as usize] = 1;
                                stack.push((target, 0, Some(arc)));
                            }
                            1 => {
                                // collect the cycle: the entry arcs back to
                                // `target`, plus the closing arc
                                let mut cycle = vec![arc];
                                for &(snode, _, sarc) in stack.iter().rev() {
                                    if snode == target {
                                        break;
                                    }
                                    cycle.push(sarc.expect("non-root stack entry"));
                                }
                                let slack = cycle
                                    .iter()
                                    .map(|&a| cars[a as usize])
                                    .min()
                                    .unwrap_or(0);
                                for &a in &cycle {
                                    cars[a as usize] -= slack;
                                }
                                continue 'again;
                            }
                            _ => {}
                        }
                    }
                }
            }
        }
        return;
    }
}

/// Exact integer recheck of all aggregated-flow invariants.
pub fn verify_aggregated_flow(
    net: &AggregatedNetwork,
    instance: &Instance,
    flow: &AggregatedFlow,
) -> Result<(), LiftflowError> {
    let l = instance.capacity_l as i128;
    for (id, arc) in net.arcs.iter().enumerate() {
        if arc.kind.is_relocation() {
            if flow.cars[id] as i128 > l * flow.drivers[id] as i128 {
                return Err(LiftflowError::CorruptFlow(format!(
                    "coupling violated on arc {id}"
                )));
            }
        } else if flow.cars[id] != 0 {
            return Err(LiftflowError::CorruptFlow(format!(
                "cars on depot arc {id}"
            )));
        }
    }
    for (ni, node) in net.nodes.iter().enumerate() {
        let out_drv: i128 = net
            .outgoing(ni as u32)
            .iter()
            .map(|&a| flow.drivers[a as usize] as i128)
            .sum();
        let in_drv: i128 = net
            .arcs
            .iter()
            .enumerate()
            .filter(|(_, a)| a.to == ni as u32)
            .map(|(id, _)| flow.drivers[id] as i128)
            .sum();
        let out_car: i128 = net
            .outgoing(ni as u32)
            .iter()
            .map(|&a| flow.cars[a as usize] as i128)
            .sum();
        let in_car: i128 = net
            .arcs
            .iter()
            .enumerate()
            .filter(|(_, a)| a.to == ni as u32)
            .map(|(id, _)| flow.cars[id] as i128)
            .sum();
        match node {
            AggNode::Source => {
                if out_drv != instance.k as i128 {
                    return Err(LiftflowError::CorruptFlow("driver source".into()));
                }
            }
            AggNode::Sink => {
                if in_drv != instance.k as i128 {
                    return Err(LiftflowError::CorruptFlow("driver sink".into()));
                }
            }
            AggNode::Station { station, .. } => {
                let balance = instance.z0[station.0] as i128 - instance.zt[station.0] as i128;
                if out_car - in_car != balance {
                    return Err(LiftflowError::CorruptFlow(format!(
                        "car balance at {station}"
                    )));
                }
                if out_drv != in_drv {
                    return Err(LiftflowError::CorruptFlow(format!(
                        "driver conservation at {station}"
                    )));
                }
            }
        }
    }
    Ok(())
}

/// Untimed move: origin, destination, and the cars carried.
///
/// Origin and destination differ, with one exception: when the depot itself
/// carries a task it appears in the network both as source/sink and as a
/// station, and the zero-length splice between those two roles is kept as a
/// `from == to` pre-move so flows re-aggregate exactly. Splices never carry
/// cars and produce no timed move.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PreMove {
    pub from: StationId,
    pub to: StationId,
    pub load: u32,
}

/// A driver's chained pre-move sequence, depot to depot.
pub type PreTour = Vec<PreMove>;

/// A cycle of driver flow untouched by any depot path. `moves[i].to ==
/// moves[i+1].from` and the last move closes back to the first.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IsolatedCycle {
    pub moves: Vec<PreMove>,
}

/// Decomposes the driver flow into `k` depot-to-depot pre-tours plus
/// isolated cycles, splitting car flow greedily across traversals.
///
/// Walks prefer arcs that still carry unassigned car flow, then any station
/// destination over the sink, then the lowest station index; this keeps cars
/// attached to drivers and empirically avoids cross-tour precedence cycles.
pub fn extract_pre_tours(
    flow: &AggregatedFlow,
    net: &AggregatedNetwork,
    instance: &Instance,
) -> Result<(Vec<PreTour>, Vec<IsolatedCycle>), LiftflowError> {
    let mut res_drv: Vec<u64> = flow.drivers.clone();
    let mut res_car: Vec<u64> = flow.cars.clone();
    let depot = instance.depot;
    let l = instance.capacity_l as u64;

    let pick_arc = |node: u32, res_drv: &[u64], res_car: &[u64]| -> Option<u32> {
        let mut best: Option<(u8, usize, u32)> = None; // (class, dest order, arc)
        for &a in net.outgoing(node) {
            if res_drv[a as usize] == 0 {
                continue;
            }
            let arc = &net.arcs[a as usize];
            let class = if res_car[a as usize] > 0 {
                0u8
            } else if arc.to != SINK {
                1
            } else {
                2
            };
            let dest_order = match net.nodes[arc.to as usize] {
                AggNode::Station { station, .. } => station.0,
                _ => usize::MAX,
            };
            let key = (class, dest_order, a);
            if best.is_none_or(|b| key < b) {
                best = Some(key);
            }
        }
        best.map(|(_, _, a)| a)
    };

    let take_arc = |a: u32, res_drv: &mut [u64], res_car: &mut [u64]| -> PreMove {
        res_drv[a as usize] -= 1;
        let load = res_car[a as usize].min(l);
        res_car[a as usize] -= load;
        let arc = &net.arcs[a as usize];
        PreMove {
            from: net.node_station(arc.from, depot),
            to: net.node_station(arc.to, depot),
            load: load as u32,
        }
    };

    let mut pre_tours = Vec::with_capacity(instance.k as usize);
    for _ in 0..instance.k {
        let mut node = SOURCE;
        let mut tour: PreTour = Vec::new();
        let mut steps = 0usize;
        while node != SINK {
            let Some(a) = pick_arc(node, &res_drv, &res_car) else {
                return Err(LiftflowError::CorruptFlow(format!(
                    "pre-tour walk stuck at node {node}"
                )));
            };
            tour.push(take_arc(a, &mut res_drv, &mut res_car));
            node = net.arcs[a as usize].to;
            steps += 1;
            if steps > flow.drivers.iter().sum::<u64>() as usize + 2 {
                return Err(LiftflowError::CorruptFlow("pre-tour walk cycles".into()));
            }
        }
        pre_tours.push(tour);
    }

    // whatever driver flow remains forms circulations over the stations
    let mut cycles = Vec::new();
    loop {
        let Some(start) = (0..net.nodes.len() as u32)
            .find(|&nd| net.outgoing(nd).iter().any(|&a| res_drv[a as usize] > 0))
        else {
            break;
        };
        // walk until a node repeats, then extract that cycle slice
        let mut path: Vec<u32> = Vec::new();
        let mut seen: std::collections::BTreeMap<u32, usize> = Default::default();
        let mut node = start;
        let cycle_slice = loop {
            if let Some(&pos) = seen.get(&node) {
                break path[pos..].to_vec();
            }
            seen.insert(node, path.len());
            let Some(a) = pick_arc(node, &res_drv, &res_car) else {
                return Err(LiftflowError::CorruptFlow(format!(
                    "cycle walk stuck at node {node}"
                )));
            };
            path.push(a);
            node = net.arcs[a as usize].to;
        };
        let moves: Vec<PreMove> = cycle_slice
            .iter()
            .map(|&a| take_arc(a, &mut res_drv, &mut res_car))
            .collect();
        cycles.push(IsolatedCycle { moves });
    }

    if res_car.iter().any(|&c| c != 0) {
        return Err(LiftflowError::CorruptFlow(
            "car flow left unassigned after decomposition".into(),
        ));
    }
    Ok((pre_tours, cycles))
}

/// Re-aggregates pre-tours and cycles into per-arc flows; the inverse of
/// [`extract_pre_tours`].
pub fn aggregate_pre_tours(
    pre_tours: &[PreTour],
    cycles: &[IsolatedCycle],
    net: &AggregatedNetwork,
    _instance: &Instance,
) -> Result<AggregatedFlow, LiftflowError> {
    let mut node_of: std::collections::BTreeMap<StationId, u32> = Default::default();
    for (ni, node) in net.nodes.iter().enumerate() {
        if let Some(s) = node.station() {
            node_of.insert(s, ni as u32);
        }
    }
    let mut arc_of: std::collections::BTreeMap<(u32, u32), u32> = Default::default();
    for (id, arc) in net.arcs.iter().enumerate() {
        arc_of.insert((arc.from, arc.to), id as u32);
    }
    let mut cars = vec![0u64; net.arcs.len()];
    let mut drivers = vec![0u64; net.arcs.len()];
    let mut add = |from: u32, to: u32, load: u32| -> Result<(), LiftflowError> {
        let &arc = arc_of
            .get(&(from, to))
            .ok_or_else(|| LiftflowError::CorruptFlow(format!("no arc {from} -> {to}")))?;
        drivers[arc as usize] += 1;
        cars[arc as usize] += load as u64;
        Ok(())
    };
    for tour in pre_tours {
        // walk from the source; the final pre-move always enters the sink
        let mut node = SOURCE;
        for (idx, pm) in tour.iter().enumerate() {
            let is_last = idx + 1 == tour.len();
            let to = if is_last {
                SINK
            } else {
                *node_of.get(&pm.to).ok_or_else(|| {
                    LiftflowError::CorruptFlow(format!("pre-move into unknown station {}", pm.to))
                })?
            };
            add(node, to, pm.load)?;
            node = to;
        }
        if node != SINK {
            return Err(LiftflowError::CorruptFlow(
                "pre-tour does not reach the depot sink".into(),
            ));
        }
    }
    for cycle in cycles {
        for pm in &cycle.moves {
            add(node_of[&pm.from], node_of[&pm.to], pm.load)?;
        }
    }
    Ok(AggregatedFlow { cars, drivers })
}

/// Pickup and drop amounts of each pre-move, derived from load deltas along
/// its tour.
pub(crate) fn pick_drop_amounts(tour: &[PreMove]) -> Vec<(u32, u32)> {
    let mut out = Vec::with_capacity(tour.len());
    for (i, pm) in tour.iter().enumerate() {
        let prev = if i == 0 { 0 } else { tour[i - 1].load };
        let next = if i + 1 == tour.len() { 0 } else { tour[i + 1].load };
        let pick = pm.load.saturating_sub(prev);
        let drop = pm.load.saturating_sub(next);
        out.push((pick, drop));
    }
    out
}

/// Identifies one pre-move inside a set of pre-tours.
pub type PreMoveId = (usize, usize);

/// Cross-tour precedence edges between pre-moves: a drop at a task station
/// must happen before another tour's pickup there.
#[derive(Debug, Clone, Default)]
pub struct PrecedenceGraph {
    pub edges: Vec<(PreMoveId, PreMoveId)>,
}

impl PrecedenceGraph {
    /// Checks that precedence edges plus intra-tour ordering admit a
    /// topological order.
    pub fn is_acyclic(&self, pre_tours: &[PreTour]) -> bool {
        topological_order(self, pre_tours).is_some()
    }
}

/// Topological order over all pre-moves under intra-tour succession plus
/// cross-tour precedence edges. Ties resolve to the lowest (tour, index).
pub(crate) fn topological_order(
    prec: &PrecedenceGraph,
    pre_tours: &[PreTour],
) -> Option<Vec<PreMoveId>> {
    use std::collections::BTreeSet;
    let total: usize = pre_tours.iter().map(|t| t.len()).sum();
    let mut indegree: std::collections::BTreeMap<PreMoveId, usize> = Default::default();
    let mut successors: std::collections::BTreeMap<PreMoveId, Vec<PreMoveId>> = Default::default();
    for (ti, tour) in pre_tours.iter().enumerate() {
        for mi in 0..tour.len() {
            indegree.entry((ti, mi)).or_insert(0);
            if mi + 1 < tour.len() {
                successors.entry((ti, mi)).or_default().push((ti, mi + 1));
                *indegree.entry((ti, mi + 1)).or_insert(0) += 1;
            }
        }
    }
    for &(a, b) in &prec.edges {
        successors.entry(a).or_default().push(b);
        *indegree.entry(b).or_insert(0) += 1;
    }
    let mut ready: BTreeSet<PreMoveId> = indegree
        .iter()
        .filter(|&(_, &d)| d == 0)
        .map(|(&id, _)| id)
        .collect();
    let mut order = Vec::with_capacity(total);
    while let Some(&id) = ready.iter().next() {
        ready.remove(&id);
        order.push(id);
        if let Some(succ) = successors.get(&id) {
            for &s in succ.clone().iter() {
                let d = indegree.get_mut(&s).unwrap();
                *d -= 1;
                if *d == 0 {
                    ready.insert(s);
                }
            }
        }
    }
    (order.len() == total).then_some(order)
}

/// Builds the precedence relation between pre-moves of different pre-tours:
/// whenever one tour drops cars where the station is overfull and another
/// picks up there, or one tour picks up where the station is underfull and
/// another drops there, the drop precedes the pickup.
pub fn build_precedences(pre_tours: &[PreTour], instance: &Instance) -> PrecedenceGraph {
    let mut overfull = vec![false; instance.station_count()];
    let mut underfull = vec![false; instance.station_count()];
    for task in derive_tasks(instance) {
        if task.x > 0 {
            overfull[task.station.0] = true;
        } else {
            underfull[task.station.0] = true;
        }
    }
    let amounts: Vec<Vec<(u32, u32)>> = pre_tours.iter().map(|t| pick_drop_amounts(t)).collect();

    let mut edges = Vec::new();
    for (ta, tour_a) in pre_tours.iter().enumerate() {
        for (ia, ma) in tour_a.iter().enumerate() {
            let (_, drop_a) = amounts[ta][ia];
            if drop_a == 0 {
                continue;
            }
            let s = ma.to;
            for (tb, tour_b) in pre_tours.iter().enumerate() {
                if tb == ta {
                    continue;
                }
                for (ib, mb) in tour_b.iter().enumerate() {
                    let (pick_b, _) = amounts[tb][ib];
                    if pick_b == 0 || mb.from != s {
                        continue;
                    }
                    // rule 1: drop at an overfull station precedes pickups
                    // there; rule 2: pickups at an underfull station wait
                    // for drops there
                    if overfull[s.0] || underfull[s.0] {
                        edges.push(((ta, ia), (tb, ib)));
                    }
                }
            }
        }
    }
    PrecedenceGraph { edges }
}

/// One resolved round of the step-1 pipeline.
#[derive(Debug, Clone)]
pub struct ResolvedFlow {
    pub flow: AggregatedFlow,
    pub pre_tours: Vec<PreTour>,
    pub cycles: Vec<IsolatedCycle>,
    pub precedences: PrecedenceGraph,
    pub cut_rounds: u32,
    /// Lower bound from the first (uncut) solve: its objective when optimal,
    /// otherwise the solver's dual bound.
    pub lower_bound: u64,
    pub step1_status: SolveStatus,
}

/// An externally produced first round, used to resume from a known flow or
/// to drive the loop from a handcrafted decomposition in tests.
#[derive(Debug, Clone)]
pub struct SeedRound {
    pub flow: AggregatedFlow,
    pub pre_tours: Vec<PreTour>,
    pub cycles: Vec<IsolatedCycle>,
}

const MAX_CUT_ROUNDS: u32 = 10;

/// Solves step 1 and re-solves with an objective cut whenever the
/// precedence relation comes out cyclic, until it is acyclic or the round
/// cap trips.
pub fn cut_and_resolve(
    instance: &Instance,
    limits: &SolveLimits,
) -> Result<ResolvedFlow, LiftflowError> {
    cut_and_resolve_with_initial(instance, limits, None)
}

/// [`cut_and_resolve`] with an optional seeded first round. The seed's cost
/// is taken as the first-round bound.
pub fn cut_and_resolve_with_initial(
    instance: &Instance,
    limits: &SolveLimits,
    seed: Option<SeedRound>,
) -> Result<ResolvedFlow, LiftflowError> {
    let net = build_aggregated(instance)?;
    let mut cuts: Vec<u64> = Vec::new();
    let mut lower_bound = 0u64;
    let mut step1_status = SolveStatus::Optimal;
    let mut seed = seed;
    for round in 0..=MAX_CUT_ROUNDS {
        let (flow, pre_tours, cycles) = match seed.take() {
            Some(s) => {
                verify_aggregated_flow(&net, instance, &s.flow)?;
                if round == 0 {
                    lower_bound = s.flow.cost(&net);
                }
                (s.flow, s.pre_tours, s.cycles)
            }
            None => {
                let (flow, solution) = solve_aggregated(&net, instance, limits, &cuts)?;
                if round == 0 {
                    step1_status = solution.status;
                    lower_bound = if solution.status == SolveStatus::Optimal {
                        solution.objective.round() as u64
                    } else {
                        solution.bound.max(0.0).ceil() as u64
                    };
                }
                let (pre_tours, cycles) = extract_pre_tours(&flow, &net, instance)?;
                (flow, pre_tours, cycles)
            }
        };
        let precedences = build_precedences(&pre_tours, instance);
        if precedences.is_acyclic(&pre_tours) {
            return Ok(ResolvedFlow {
                flow,
                pre_tours,
                cycles,
                precedences,
                cut_rounds: round,
                lower_bound,
                step1_status,
            });
        }
        cuts.push(flow.cost(&net));
    }
    Err(LiftflowError::HeuristicFailed(format!(
        "precedence relation still cyclic after {MAX_CUT_ROUNDS} cut rounds"
    )))
}

/// Per-run report of the heuristic.
#[derive(Debug, Clone, Serialize)]
pub struct LiftflowReport {
    pub lb: u64,
    pub total_length: u64,
    pub per_tour_lengths: Vec<u64>,
    /// Driver ids of tours whose final arrival exceeds the horizon.
    pub horizon_violations: Vec<u32>,
    pub cut_rounds: u32,
    pub cycles_repaired: u32,
    pub step1_status: String,
}

impl LiftflowReport {
    pub fn to_json(&self) -> String {
        let mut out = serde_json::to_string_pretty(self).expect("report serialization");
        out.push('\n');
        out
    }
}

impl fmt::Display for LiftflowReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "LF = {} (LB = {}, cuts = {}, cycles repaired = {}, step1 {} , horizon violations: {:?})",
            self.total_length,
            self.lb,
            self.cut_rounds,
            self.cycles_repaired,
            self.step1_status,
            self.horizon_violations
        )
    }
}

/// Full heuristic outcome.
pub struct LiftflowOutcome {
    pub schedule: TransportationSchedule,
    pub lower_bound: u64,
    pub report: LiftflowReport,
    /// The resolved step-1 round the schedule was built from; `None` for
    /// the balanced short-circuit.
    pub resolved: Option<ResolvedFlow>,
}

/// Runs the whole pipeline: step-1 flows (with cut-and-resolve), timing
/// with waiting computation, isolated-cycle grafting, and report assembly.
///
/// The schedule satisfies every feasibility condition except possibly the
/// horizon: tours may overrun `T`, and the report flags those per tour.
pub fn solve_liftflow(
    instance: &Instance,
    limits: &SolveLimits,
) -> Result<LiftflowOutcome, LiftflowError> {
    solve_liftflow_seeded(instance, limits, None)
}

/// [`solve_liftflow`] with a seeded first round for step 1.
pub fn solve_liftflow_seeded(
    instance: &Instance,
    limits: &SolveLimits,
    seed: Option<SeedRound>,
) -> Result<LiftflowOutcome, LiftflowError> {
    if instance.is_balanced() {
        let schedule = TransportationSchedule::empty(instance.k);
        let report = LiftflowReport {
            lb: 0,
            total_length: 0,
            per_tour_lengths: vec![0; instance.k as usize],
            horizon_violations: Vec::new(),
            cut_rounds: 0,
            cycles_repaired: 0,
            step1_status: SolveStatus::Optimal.to_string(),
        };
        return Ok(LiftflowOutcome {
            schedule,
            lower_bound: 0,
            report,
            resolved: None,
        });
    }

    let resolved = cut_and_resolve_with_initial(instance, limits, seed)?;
    let schedule = timing::build_schedule(instance, &resolved)?;
    let per_tour_lengths = schedule.per_tour_lengths(&instance.metric);
    let total_length = per_tour_lengths.iter().sum();
    let horizon_violations = schedule
        .tours
        .iter()
        .filter(|t| t.final_arrival() > instance.horizon)
        .map(|t| t.driver)
        .collect();
    let report = LiftflowReport {
        lb: resolved.lower_bound,
        total_length,
        per_tour_lengths,
        horizon_violations,
        cut_rounds: resolved.cut_rounds,
        cycles_repaired: resolved.cycles.len() as u32,
        step1_status: resolved.step1_status.to_string(),
    };
    Ok(LiftflowOutcome {
        schedule,
        lower_bound: resolved.lower_bound,
        report,
        resolved: Some(resolved),
    })
}
