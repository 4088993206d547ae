//! Branch-and-bound over the simplex engine.
//!
//! Node selection is best-bound; while no incumbent exists the search
//! additionally plunges into one child per branching so an integral point
//! turns up early. Branching picks the most fractional integer variable
//! (ties: lowest index). A rounding dive — fix integral variables, raise
//! the floors of fractional ones, re-solve — runs periodically as a primal
//! heuristic; on coupled-flow models its residual LP is a pure network
//! flow, so it lands on integral points almost immediately. Every node
//! warm-starts the simplex from its parent's basis, and incumbents are
//! re-verified in exact integer arithmetic before being accepted.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::sync::Arc;
use std::time::Instant;

use super::simplex::{BasisSnapshot, LpOutcome, SimplexEngine};
use super::{IntegerProgram, MipSolution, SolveLimits, SolveStats, SolveStatus, INT_TOL};

#[derive(Debug, Clone, Copy)]
enum BoundChange {
    Upper(f64),
    Lower(f64),
}

struct Node {
    bound: f64,
    depth: u32,
    seq: u64,
    changes: Vec<(usize, BoundChange)>,
    basis: Arc<BasisSnapshot>,
}

struct HeapEntry {
    bound: f64,
    depth: u32,
    seq: u64,
}

impl PartialEq for HeapEntry {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for HeapEntry {}
impl PartialOrd for HeapEntry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for HeapEntry {
    // BinaryHeap is a max-heap; invert so the smallest bound pops first,
    // ties broken toward deeper nodes, then insertion order.
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .bound
            .partial_cmp(&self.bound)
            .unwrap_or(Ordering::Equal)
            .then(self.depth.cmp(&other.depth))
            .then(other.seq.cmp(&self.seq))
    }
}

/// Most fractional integer variable: (index, value, fractionality).
fn pick_branch_var(program: &IntegerProgram, values: &[f64]) -> Option<(usize, f64, f64)> {
    let mut best: Option<(usize, f64, f64)> = None;
    for (j, var) in program.variables.iter().enumerate() {
        if !var.integer {
            continue;
        }
        let x = values[j];
        let frac = (x - x.round()).abs();
        if frac > INT_TOL && best.as_ref().is_none_or(|&(_, _, b)| frac > b + 1e-12) {
            best = Some((j, x, frac));
        }
    }
    best
}

/// Rounds integer variables and verifies the point exactly; returns the
/// candidate with its recomputed objective.
fn integral_candidate(program: &IntegerProgram, values: &[f64]) -> Option<(f64, Vec<f64>)> {
    let mut rounded = values.to_vec();
    for (j, var) in program.variables.iter().enumerate() {
        if var.integer {
            rounded[j] = rounded[j].round();
        }
    }
    if program.check_solution_exact(&rounded).is_err() {
        return None;
    }
    let objective = program
        .objective
        .iter()
        .zip(&rounded)
        .map(|(&c, &x)| c * x)
        .sum();
    Some((objective, rounded))
}

/// Rounding dive from the engine's current (solved) state: raise the floor
/// of the integer variable with the largest fractional part to the next
/// integer and re-solve, repeatedly. One variable per round keeps
/// conserving constraints free to re-route; on flow models the sequence
/// commits one traversal at a time until the point turns integral. Leaves
/// the engine bounds dirty — callers re-apply node bounds.
fn dive(
    engine: &mut SimplexEngine,
    program: &IntegerProgram,
    deadline: Option<Instant>,
) -> Option<(f64, Vec<f64>)> {
    for _ in 0..64 {
        let values = engine.values().to_vec();
        let mut target: Option<(usize, f64, f64)> = None; // (var, ceil, frac part)
        for (j, var) in program.variables.iter().enumerate() {
            if !var.integer {
                continue;
            }
            let x = values[j];
            if (x - x.round()).abs() <= INT_TOL {
                continue;
            }
            let frac = x - x.floor();
            if target.as_ref().is_none_or(|&(_, _, best)| frac > best + 1e-12) {
                target = Some((j, x.ceil(), frac));
            }
        }
        let Some((j, ceil, _)) = target else {
            return integral_candidate(program, &values);
        };
        let (lo, hi) = engine.var_bounds(j);
        if ceil > hi + 1e-9 {
            return None;
        }
        engine.set_var_bounds(j, ceil.max(lo), hi);
        if engine.solve(deadline) != LpOutcome::Optimal {
            return None;
        }
    }
    None
}

pub fn solve(
    program: &IntegerProgram,
    limits: &SolveLimits,
    warm_start: Option<&[f64]>,
) -> MipSolution {
    let start = Instant::now();
    let deadline = limits.time_limit.map(|d| start + d);
    let node_limit = limits.node_limit.unwrap_or(u64::MAX);
    let integral_objective = program.objective_is_integral();

    let mut engine = SimplexEngine::from_program(program);
    let mut root_bounds: Vec<(f64, f64)> = program
        .variables
        .iter()
        .map(|v| (v.lower, v.upper))
        .collect();

    let mut heap: BinaryHeap<HeapEntry> = BinaryHeap::new();
    let mut nodes: Vec<Option<Node>> = Vec::new();
    let push_node =
        |heap: &mut BinaryHeap<HeapEntry>, nodes: &mut Vec<Option<Node>>, node: Node| {
            heap.push(HeapEntry {
                bound: node.bound,
                depth: node.depth,
                seq: node.seq,
            });
            let seq = node.seq as usize;
            if nodes.len() <= seq {
                nodes.resize_with(seq + 1, || None);
            }
            nodes[seq] = Some(node);
        };

    let mut pending = Some(Node {
        bound: f64::NEG_INFINITY,
        depth: 0,
        seq: 0,
        changes: Vec::new(),
        basis: Arc::new(engine.snapshot()),
    });
    let mut next_seq = 1u64;

    // an externally supplied point seeds the incumbent after exact checking
    let mut incumbent: Option<(f64, Vec<f64>)> =
        warm_start.and_then(|values| integral_candidate(program, values));
    let mut reported_bound = f64::NEG_INFINITY;
    let mut processed = 0u64;
    let mut limit_hit = false;
    let mut root_unbounded = false;
    let mut trace: Vec<(u64, Option<f64>, f64)> = Vec::new();
    let record = |trace: &mut Vec<(u64, Option<f64>, f64)>,
                  processed: u64,
                  incumbent: &Option<(f64, Vec<f64>)>,
                  bound: f64| {
        let inc = incumbent.as_ref().map(|(v, _)| *v);
        if trace.last().map(|&(_, i, b)| (i, b)) != Some((inc, bound)) {
            trace.push((processed, inc, bound));
        }
    };
    let cutoff = |incumbent: &Option<(f64, Vec<f64>)>| -> f64 {
        match incumbent {
            None => f64::INFINITY,
            Some((obj, _)) if integral_objective => obj - 1.0 + INT_TOL,
            Some((obj, _)) => obj - 1e-9,
        }
    };
    fn apply_node_bounds(engine: &mut SimplexEngine, root_bounds: &[(f64, f64)], node: &Node) {
        for (j, &(lo, hi)) in root_bounds.iter().enumerate() {
            engine.set_var_bounds(j, lo, hi);
        }
        for &(j, change) in &node.changes {
            let (lo, hi) = engine.var_bounds(j);
            match change {
                BoundChange::Upper(u) => engine.set_var_bounds(j, lo, hi.min(u)),
                BoundChange::Lower(l) => engine.set_var_bounds(j, lo.max(l), hi),
            }
        }
    }

    loop {
        let node = match pending.take() {
            Some(n) => n,
            None => match heap.pop() {
                Some(entry) => nodes[entry.seq as usize].take().expect("node present"),
                None => break,
            },
        };

        // true lower bound over the unexplored space
        let open_min = heap.peek().map(|e| e.bound).unwrap_or(f64::INFINITY);
        let incumbent_obj = incumbent.as_ref().map(|(v, _)| *v).unwrap_or(f64::INFINITY);
        reported_bound = reported_bound.max(node.bound.min(open_min).min(incumbent_obj));
        record(&mut trace, processed, &incumbent, reported_bound);

        if node.bound > cutoff(&incumbent) {
            continue;
        }
        if let Some((obj, _)) = &incumbent {
            let abs_gap = obj - reported_bound;
            let rel = abs_gap / obj.abs().max(1e-12);
            if abs_gap <= limits.abs_gap || rel <= limits.rel_gap {
                break;
            }
        }
        if processed >= node_limit {
            limit_hit = true;
            break;
        }
        if let Some(d) = deadline {
            if Instant::now() >= d {
                limit_hit = true;
                break;
            }
        }
        processed += 1;

        apply_node_bounds(&mut engine, &root_bounds, &node);
        engine.restore(&node.basis);
        let outcome = engine.solve(deadline);

        match outcome {
            LpOutcome::Infeasible => continue,
            LpOutcome::Unbounded => {
                if node.depth == 0 {
                    root_unbounded = true;
                }
                limit_hit = node.depth != 0;
                break;
            }
            LpOutcome::DeadlineReached => {
                limit_hit = true;
                break;
            }
            LpOutcome::Optimal => {}
        }

        let value = engine.objective();
        if value > cutoff(&incumbent) {
            continue;
        }

        // Root reduced-cost fixing: with an incumbent in hand, any integer
        // variable whose reduced cost alone would push past the cutoff can
        // be pinned to its bound for the rest of the search.
        if node.depth == 0 {
            if let Some((obj, _)) = &incumbent {
                let slack = if integral_objective {
                    obj - 1.0 + INT_TOL - value
                } else {
                    obj - 1e-9 - value
                };
                if slack >= 0.0 {
                    for (j, (dj, nonbasic)) in engine.reduced_costs().into_iter().enumerate() {
                        if !program.variables[j].integer || !nonbasic {
                            continue;
                        }
                        let (lo, hi) = engine.var_bounds(j);
                        if lo == hi {
                            continue;
                        }
                        let x = engine.values()[j];
                        if dj > slack && (x - lo).abs() < 1e-9 {
                            root_bounds[j] = (lo, lo);
                        } else if dj < -slack && (x - hi).abs() < 1e-9 {
                            root_bounds[j] = (hi, hi);
                        }
                    }
                }
            }
        }

        match pick_branch_var(program, engine.values()) {
            None => {
                if let Some((objective, rounded)) = integral_candidate(program, engine.values())
                {
                    if incumbent.as_ref().is_none_or(|(best, _)| objective < *best) {
                        incumbent = Some((objective, rounded));
                        record(&mut trace, processed, &incumbent, reported_bound);
                    }
                }
            }
            Some((j, x, _)) => {
                let snapshot = Arc::new(engine.snapshot());
                let mut make_child = |change: (usize, BoundChange)| -> Node {
                    let mut changes = node.changes.clone();
                    changes.push(change);
                    let child = Node {
                        bound: value,
                        depth: node.depth + 1,
                        seq: next_seq,
                        changes,
                        basis: Arc::clone(&snapshot),
                    };
                    next_seq += 1;
                    child
                };
                let down = make_child((j, BoundChange::Upper(x.floor())));
                let up = make_child((j, BoundChange::Lower(x.ceil())));
                // Plunge up-branches while no incumbent exists: raising
                // floors commits traversals, which is what drives covering
                // models toward integral points. Zeroing variables merely
                // reroutes flow among symmetric copies.
                if incumbent.is_none() {
                    push_node(&mut heap, &mut nodes, down);
                    pending = Some(up);
                } else {
                    push_node(&mut heap, &mut nodes, down);
                    push_node(&mut heap, &mut nodes, up);
                }

                // periodic rounding dive for incumbents
                if incumbent.is_none() && processed % 16 == 1 {
                    if let Some((objective, rounded)) = dive(&mut engine, program, deadline) {
                        if objective <= cutoff(&incumbent) {
                            incumbent = Some((objective, rounded));
                            record(&mut trace, processed, &incumbent, reported_bound);
                        }
                    }
                }
            }
        }
    }

    // remaining open nodes cap what is proven
    let open_min = heap.peek().map(|e| e.bound).unwrap_or(f64::INFINITY);
    let pending_min = pending.as_ref().map(|n| n.bound).unwrap_or(f64::INFINITY);
    let stopped_early = limit_hit;
    let exhausted = heap.is_empty() && pending.is_none() && !limit_hit;
    let proven_bound = if exhausted {
        match &incumbent {
            Some((obj, _)) => *obj,
            None => f64::INFINITY,
        }
    } else {
        reported_bound
            .max(f64::NEG_INFINITY)
            .min(open_min)
            .min(pending_min)
            .min(incumbent.as_ref().map(|(v, _)| *v).unwrap_or(f64::INFINITY))
    };
    record(&mut trace, processed, &incumbent, proven_bound);

    let stats = SolveStats {
        nodes: processed,
        simplex_iterations: engine.iterations,
        elapsed: start.elapsed(),
        trace,
    };
    if root_unbounded {
        return MipSolution {
            stats,
            ..MipSolution::without_solution(SolveStatus::Unbounded, f64::NEG_INFINITY)
        };
    }
    match incumbent {
        Some((objective, values)) => {
            let gap = if objective.abs() > 1e-12 {
                (objective - proven_bound) / objective.abs()
            } else {
                objective - proven_bound
            };
            MipSolution {
                status: if stopped_early {
                    SolveStatus::Feasible
                } else {
                    SolveStatus::Optimal
                },
                values,
                objective,
                bound: proven_bound,
                gap: Some(gap.max(0.0)),
                stats,
            }
        }
        None if stopped_early => MipSolution {
            stats,
            ..MipSolution::without_solution(SolveStatus::LimitReached, proven_bound)
        },
        None => MipSolution {
            stats,
            ..MipSolution::without_solution(SolveStatus::Infeasible, f64::INFINITY)
        },
    }
}

#[cfg(test)]
mod tests {
    use super::super::{solve_ip, IntegerProgram, Relation, SolveLimits, SolveStatus};

    #[test]
    fn coupling_example_rounds_to_ceiling() {
        // min f + F  s.t.  f <= 5 F, f = 7, integer  ->  F = 2, objective 9
        let mut prog = IntegerProgram::new();
        let f = prog.add_var("f", 0.0, 100.0, true);
        let cap_f = prog.add_var("F", 0.0, 100.0, true);
        prog.set_objective(f, 1.0);
        prog.set_objective(cap_f, 1.0);
        prog.add_constraint("couple", vec![(f, 1.0), (cap_f, -5.0)], Relation::Le, 0.0);
        prog.add_constraint("fix", vec![(f, 1.0)], Relation::Eq, 7.0);
        let sol = solve_ip(&prog, &SolveLimits::default()).unwrap();
        assert_eq!(sol.status, SolveStatus::Optimal);
        assert_eq!(sol.value(f), 7.0);
        assert_eq!(sol.value(cap_f), 2.0);
        assert_eq!(sol.objective, 9.0);
        assert_eq!(sol.gap, Some(0.0));
    }

    #[test]
    fn infeasible_balance_detected() {
        let mut prog = IntegerProgram::new();
        let x = prog.add_var("x", 0.0, 3.0, true);
        let y = prog.add_var("y", 0.0, 3.0, true);
        prog.add_constraint("a", vec![(x, 1.0), (y, 1.0)], Relation::Eq, 2.0);
        prog.add_constraint("b", vec![(x, 1.0), (y, 1.0)], Relation::Eq, 3.0);
        let sol = solve_ip(&prog, &SolveLimits::default()).unwrap();
        assert_eq!(sol.status, SolveStatus::Infeasible);
    }

    /// Exhaustive enumeration oracle over small integer boxes.
    fn enumerate_optimum(prog: &IntegerProgram) -> Option<f64> {
        let nv = prog.num_vars();
        let bounds: Vec<(i64, i64)> = (0..nv)
            .map(|j| {
                let (lo, hi) = prog.bounds(super::super::VarId(j));
                (lo as i64, hi as i64)
            })
            .collect();
        let mut best: Option<f64> = None;
        let mut point = vec![0i64; nv];
        fn recurse(
            prog: &IntegerProgram,
            bounds: &[(i64, i64)],
            point: &mut Vec<i64>,
            depth: usize,
            best: &mut Option<f64>,
        ) {
            if depth == bounds.len() {
                let values: Vec<f64> = point.iter().map(|&v| v as f64).collect();
                if prog.check_solution_exact(&values).is_ok() {
                    let obj: f64 = prog
                        .objective
                        .iter()
                        .zip(&values)
                        .map(|(&c, &x)| c * x)
                        .sum();
                    if best.is_none_or(|b| obj < b) {
                        *best = Some(obj);
                    }
                }
                return;
            }
            for v in bounds[depth].0..=bounds[depth].1 {
                point[depth] = v;
                recurse(prog, bounds, point, depth + 1, best);
            }
        }
        recurse(prog, &bounds, &mut point, 0, &mut best);
        best
    }

    #[test]
    fn knapsack_matches_enumeration() {
        // six 0/1 items, maximize value <=> minimize negated value
        let values = [7.0, 4.0, 3.0, 5.0, 6.0, 2.0];
        let weights = [5.0, 3.0, 2.0, 4.0, 5.0, 1.0];
        let mut prog = IntegerProgram::new();
        let vars: Vec<_> = (0..6)
            .map(|i| prog.add_var(format!("x{i}"), 0.0, 1.0, true))
            .collect();
        for (i, &v) in values.iter().enumerate() {
            prog.set_objective(vars[i], -v);
        }
        prog.add_constraint(
            "cap",
            vars.iter().zip(weights).map(|(&v, w)| (v, w)).collect(),
            Relation::Le,
            9.0,
        );
        let sol = solve_ip(&prog, &SolveLimits::default()).unwrap();
        assert_eq!(sol.status, SolveStatus::Optimal);
        let oracle = enumerate_optimum(&prog).unwrap();
        assert_eq!(sol.objective, oracle);
    }

    #[test]
    fn random_small_ips_match_enumeration() {
        let mut state = 0x2545f4914f6cdd1du64;
        let mut next = move || {
            state ^= state << 13;
            state ^= state >> 7;
            state ^= state << 17;
            state
        };
        for case in 0..40 {
            let nv = 3 + (next() % 5) as usize; // 3..7 vars
            let mut prog = IntegerProgram::new();
            let vars: Vec<_> = (0..nv)
                .map(|j| prog.add_var(format!("x{j}"), 0.0, (next() % 4 + 1) as f64, true))
                .collect();
            for &v in &vars {
                prog.set_objective(v, (next() % 11) as f64 - 5.0);
            }
            let rows = 2 + (next() % 3) as usize;
            for r in 0..rows {
                let coeffs: Vec<_> = vars
                    .iter()
                    .map(|&v| (v, (next() % 7) as f64 - 3.0))
                    .filter(|&(_, c)| c != 0.0)
                    .collect();
                if coeffs.is_empty() {
                    continue;
                }
                let rhs = (next() % 13) as f64 - 2.0;
                let rel = match next() % 3 {
                    0 => Relation::Le,
                    1 => Relation::Ge,
                    _ => Relation::Eq,
                };
                prog.add_constraint(format!("c{r}"), coeffs, rel, rhs);
            }
            let sol = solve_ip(&prog, &SolveLimits::default()).unwrap();
            let oracle = enumerate_optimum(&prog);
            match oracle {
                Some(best) => {
                    assert_eq!(
                        sol.status,
                        SolveStatus::Optimal,
                        "case {case}: solver said {:?}, oracle found {best}",
                        sol.status
                    );
                    assert!(
                        (sol.objective - best).abs() < 1e-6,
                        "case {case}: solver {} vs oracle {best}",
                        sol.objective
                    );
                }
                None => {
                    assert_eq!(sol.status, SolveStatus::Infeasible, "case {case}");
                }
            }
        }
    }

    #[test]
    fn incumbent_and_bound_are_monotone() {
        // a knapsack-ish model big enough to branch a few times
        let mut prog = IntegerProgram::new();
        let vars: Vec<_> = (0..10)
            .map(|j| prog.add_var(format!("x{j}"), 0.0, 3.0, true))
            .collect();
        for (j, &v) in vars.iter().enumerate() {
            prog.set_objective(v, -((j % 4 + 1) as f64));
        }
        for r in 0..4 {
            let coeffs: Vec<_> = vars
                .iter()
                .enumerate()
                .map(|(j, &v)| (v, ((j + r) % 3 + 1) as f64))
                .collect();
            prog.add_constraint(format!("c{r}"), coeffs, Relation::Le, 11.0);
        }
        let sol = solve_ip(&prog, &SolveLimits::default()).unwrap();
        assert_eq!(sol.status, SolveStatus::Optimal);
        let mut last_inc = f64::INFINITY;
        let mut last_bound = f64::NEG_INFINITY;
        for (_, inc, bound) in &sol.stats.trace {
            if let Some(i) = inc {
                assert!(*i <= last_inc + 1e-9, "incumbent went up");
                last_inc = *i;
            }
            assert!(*bound >= last_bound - 1e-9, "bound went down");
            last_bound = *bound;
        }
    }

    #[test]
    fn node_limit_reports_feasible_with_bound() {
        let mut prog = IntegerProgram::new();
        let vars: Vec<_> = (0..12)
            .map(|j| prog.add_var(format!("x{j}"), 0.0, 2.0, true))
            .collect();
        for (j, &v) in vars.iter().enumerate() {
            prog.set_objective(v, -((j % 5 + 1) as f64));
        }
        for r in 0..5 {
            let coeffs: Vec<_> = vars
                .iter()
                .enumerate()
                .map(|(j, &v)| (v, ((j * 3 + r) % 4 + 1) as f64))
                .collect();
            prog.add_constraint(format!("c{r}"), coeffs, Relation::Le, 9.0);
        }
        let full = solve_ip(&prog, &SolveLimits::default()).unwrap();
        assert_eq!(full.status, SolveStatus::Optimal);
        let limited = solve_ip(&prog, &SolveLimits::with_node_limit(3)).unwrap();
        assert!(limited.bound <= full.objective + 1e-9);
        if limited.has_solution() {
            assert!(limited.objective >= full.objective - 1e-9);
        }
    }
}
