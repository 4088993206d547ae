//! Shared integer-programming substrate.
//!
//! Models are built as [`IntegerProgram`]s (minimization, linear constraints,
//! bounds, integrality markers) and solved either by the internal
//! bounded-variable simplex plus branch-and-bound, or by a registered
//! external [`SolverBackend`]. The internal solver is the default and the
//! reference implementation the tests are written against.

mod branch_bound;
mod lp_text;
mod lu;
mod simplex;

pub use lp_text::write_lp;

use std::collections::BTreeMap;
use std::fmt;
use std::sync::{Arc, OnceLock, RwLock};
use std::time::Duration;

use thiserror::Error;

/// Integrality tolerance: an integer variable's LP value may deviate this
/// much from an integer and still count as integral.
pub const INT_TOL: f64 = 1e-6;
/// Feasibility tolerance used when re-checking solutions in floating point.
pub const FEAS_TOL: f64 = 1e-6;

/// Handle to a declared variable.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct VarId(pub(crate) usize);

impl VarId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone)]
pub(crate) struct Variable {
    pub name: String,
    pub lower: f64,
    pub upper: f64,
    pub integer: bool,
}

/// Constraint sense.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Relation {
    Le,
    Eq,
    Ge,
}

impl fmt::Display for Relation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Relation::Le => write!(f, "<="),
            Relation::Eq => write!(f, "="),
            Relation::Ge => write!(f, ">="),
        }
    }
}

#[derive(Debug, Clone)]
pub(crate) struct Constraint {
    pub name: String,
    /// Sparse row, sorted by variable index, no duplicates.
    pub coeffs: Vec<(VarId, f64)>,
    pub relation: Relation,
    pub rhs: f64,
}

/// A linear minimization program with variable bounds and integrality flags.
#[derive(Debug, Clone, Default)]
pub struct IntegerProgram {
    pub(crate) variables: Vec<Variable>,
    pub(crate) objective: Vec<f64>,
    pub(crate) constraints: Vec<Constraint>,
}

#[derive(Debug, Error)]
pub enum ProgramError {
    #[error("variable `{0}` has lower bound {1} above upper bound {2}")]
    BadBounds(String, f64, f64),
    #[error("variable `{0}` has no finite bound")]
    FreeVariable(String),
    #[error("constraint `{0}` references undeclared variable index {1}")]
    UnknownVariable(String, usize),
    #[error("coefficient for `{0}` is not finite")]
    NonFiniteCoefficient(String),
}

impl IntegerProgram {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_var(
        &mut self,
        name: impl Into<String>,
        lower: f64,
        upper: f64,
        integer: bool,
    ) -> VarId {
        let id = VarId(self.variables.len());
        self.variables.push(Variable {
            name: name.into(),
            lower,
            upper,
            integer,
        });
        self.objective.push(0.0);
        id
    }

    /// Sets the objective coefficient of a variable (minimization sense).
    pub fn set_objective(&mut self, var: VarId, coeff: f64) {
        self.objective[var.0] = coeff;
    }

    /// Adds `coeffs . x  relation  rhs`. Duplicate variable references are
    /// summed.
    pub fn add_constraint(
        &mut self,
        name: impl Into<String>,
        coeffs: Vec<(VarId, f64)>,
        relation: Relation,
        rhs: f64,
    ) -> usize {
        let mut merged: BTreeMap<VarId, f64> = BTreeMap::new();
        for (v, c) in coeffs {
            *merged.entry(v).or_insert(0.0) += c;
        }
        let coeffs: Vec<_> = merged.into_iter().filter(|&(_, c)| c != 0.0).collect();
        self.constraints.push(Constraint {
            name: name.into(),
            coeffs,
            relation,
            rhs,
        });
        self.constraints.len() - 1
    }

    pub fn num_vars(&self) -> usize {
        self.variables.len()
    }

    pub fn num_constraints(&self) -> usize {
        self.constraints.len()
    }

    pub fn var_name(&self, var: VarId) -> &str {
        &self.variables[var.0].name
    }

    pub fn bounds(&self, var: VarId) -> (f64, f64) {
        (self.variables[var.0].lower, self.variables[var.0].upper)
    }

    pub fn is_integer(&self, var: VarId) -> bool {
        self.variables[var.0].integer
    }

    pub(crate) fn validate(&self) -> Result<(), ProgramError> {
        for v in &self.variables {
            if v.lower > v.upper {
                return Err(ProgramError::BadBounds(v.name.clone(), v.lower, v.upper));
            }
            if v.lower == f64::NEG_INFINITY && v.upper == f64::INFINITY {
                return Err(ProgramError::FreeVariable(v.name.clone()));
            }
        }
        for c in &self.constraints {
            for &(var, coeff) in &c.coeffs {
                if var.0 >= self.variables.len() {
                    return Err(ProgramError::UnknownVariable(c.name.clone(), var.0));
                }
                if !coeff.is_finite() {
                    return Err(ProgramError::NonFiniteCoefficient(c.name.clone()));
                }
            }
        }
        Ok(())
    }

    /// True when every objective coefficient on a fractionally-valued
    /// variable is zero-or-integer over integer variables only, so the
    /// optimal objective is guaranteed integral and bound rounding is valid.
    pub(crate) fn objective_is_integral(&self) -> bool {
        self.objective.iter().zip(&self.variables).all(|(&c, v)| {
            c == 0.0 || (v.integer && c.fract() == 0.0)
        })
    }

    /// Re-checks a candidate integer solution in exact arithmetic when all
    /// data is integral, otherwise within [`FEAS_TOL`]. Returns the first
    /// violated constraint name.
    pub fn check_solution_exact(&self, values: &[f64]) -> Result<(), String> {
        for (v, &x) in self.variables.iter().zip(values) {
            if x < v.lower - FEAS_TOL || x > v.upper + FEAS_TOL {
                return Err(format!(
                    "variable {} = {x} outside bounds [{}, {}]",
                    v.name, v.lower, v.upper
                ));
            }
            if v.integer && (x - x.round()).abs() > INT_TOL {
                return Err(format!("variable {} = {x} is not integral", v.name));
            }
        }
        let all_integral = self.constraints.iter().all(|c| {
            c.rhs.fract() == 0.0 && c.coeffs.iter().all(|&(_, a)| a.fract() == 0.0)
        }) && self
            .variables
            .iter()
            .zip(values)
            .all(|(v, &x)| v.integer || (x - x.round()).abs() <= INT_TOL);
        for c in &self.constraints {
            if all_integral {
                let lhs: i128 = c
                    .coeffs
                    .iter()
                    .map(|&(var, a)| (a as i128) * (values[var.0].round() as i128))
                    .sum();
                let rhs = c.rhs as i128;
                let ok = match c.relation {
                    Relation::Le => lhs <= rhs,
                    Relation::Eq => lhs == rhs,
                    Relation::Ge => lhs >= rhs,
                };
                if !ok {
                    return Err(format!(
                        "constraint {} violated exactly: lhs {lhs} {} rhs {rhs}",
                        c.name, c.relation
                    ));
                }
            } else {
                let lhs: f64 = c
                    .coeffs
                    .iter()
                    .map(|&(var, a)| a * values[var.0])
                    .sum();
                let ok = match c.relation {
                    Relation::Le => lhs <= c.rhs + FEAS_TOL,
                    Relation::Eq => (lhs - c.rhs).abs() <= FEAS_TOL,
                    Relation::Ge => lhs >= c.rhs - FEAS_TOL,
                };
                if !ok {
                    return Err(format!(
                        "constraint {} violated: lhs {lhs} {} rhs {}",
                        c.name, c.relation, c.rhs
                    ));
                }
            }
        }
        Ok(())
    }
}

/// Outcome classification of a solve.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveStatus {
    /// Proven optimal (gap zero within tolerance).
    Optimal,
    /// Incumbent found but optimality not proven (limit reached).
    Feasible,
    Infeasible,
    Unbounded,
    /// Limit reached with no incumbent; only the dual bound is meaningful.
    LimitReached,
}

impl fmt::Display for SolveStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            SolveStatus::Optimal => "optimal",
            SolveStatus::Feasible => "feasible",
            SolveStatus::Infeasible => "infeasible",
            SolveStatus::Unbounded => "unbounded",
            SolveStatus::LimitReached => "limit-reached",
        };
        write!(f, "{s}")
    }
}

/// Progress snapshot: (nodes processed, incumbent objective, dual bound).
pub type TracePoint = (u64, Option<f64>, f64);

#[derive(Debug, Clone, Default)]
pub struct SolveStats {
    pub nodes: u64,
    pub simplex_iterations: u64,
    pub elapsed: Duration,
    /// Appended whenever the incumbent or the global bound moves.
    pub trace: Vec<TracePoint>,
}

/// Result of an LP or IP solve.
#[derive(Debug, Clone)]
pub struct MipSolution {
    pub status: SolveStatus,
    /// Values per declared variable; integer variables are rounded.
    /// Empty unless status is Optimal or Feasible.
    pub values: Vec<f64>,
    pub objective: f64,
    /// Best proven dual (lower) bound.
    pub bound: f64,
    /// `(objective - bound) / |objective|` when an incumbent exists.
    pub gap: Option<f64>,
    pub stats: SolveStats,
}

impl MipSolution {
    pub fn has_solution(&self) -> bool {
        matches!(self.status, SolveStatus::Optimal | SolveStatus::Feasible)
    }

    pub fn value(&self, var: VarId) -> f64 {
        self.values[var.0]
    }

    pub(crate) fn without_solution(status: SolveStatus, bound: f64) -> Self {
        Self {
            status,
            values: Vec::new(),
            objective: f64::INFINITY,
            bound,
            gap: None,
            stats: SolveStats::default(),
        }
    }
}

/// Limits on a single solve. Defaults impose none and require proving
/// optimality to zero gap.
#[derive(Debug, Clone, Default)]
pub struct SolveLimits {
    pub time_limit: Option<Duration>,
    pub node_limit: Option<u64>,
    /// Accept incumbents whose absolute gap to the bound is at most this.
    pub abs_gap: f64,
    /// Accept incumbents whose relative gap is at most this.
    pub rel_gap: f64,
}

impl SolveLimits {
    pub fn with_time_limit(seconds: f64) -> Self {
        Self {
            time_limit: Some(Duration::from_secs_f64(seconds)),
            ..Self::default()
        }
    }

    pub fn with_node_limit(nodes: u64) -> Self {
        Self {
            node_limit: Some(nodes),
            ..Self::default()
        }
    }
}

#[derive(Debug, Error)]
pub enum MipError {
    #[error(transparent)]
    Program(#[from] ProgramError),
    #[error("backend `{name}` failed: {message}")]
    Backend { name: String, message: String },
    #[error("no backend registered under `{0}`")]
    UnknownBackend(String),
}

/// Solves the LP relaxation (integrality ignored) with the internal simplex.
pub fn solve_lp(program: &IntegerProgram) -> Result<MipSolution, MipError> {
    program.validate()?;
    Ok(simplex::solve_relaxation(program))
}

/// Solves the integer program with the internal branch-and-bound.
pub fn solve_ip(program: &IntegerProgram, limits: &SolveLimits) -> Result<MipSolution, MipError> {
    solve_ip_with_start(program, limits, None)
}

/// [`solve_ip`] seeded with a known feasible point. The point is verified
/// exactly and, when valid, becomes the initial incumbent, so the search
/// starts with a cutoff.
pub fn solve_ip_with_start(
    program: &IntegerProgram,
    limits: &SolveLimits,
    warm_start: Option<&[f64]>,
) -> Result<MipSolution, MipError> {
    program.validate()?;
    Ok(branch_bound::solve(program, limits, warm_start))
}

// ---------------------------------------------------------------------------
// Backend contract
// ---------------------------------------------------------------------------

/// Adapter contract for plugging in an external solver. Implementations must
/// follow the same status and value semantics as [`solve_ip`].
pub trait SolverBackend: Send + Sync {
    fn name(&self) -> &str;
    fn solve(&self, program: &IntegerProgram, limits: &SolveLimits)
        -> Result<MipSolution, String>;
}

/// The built-in simplex + branch-and-bound solver.
pub struct InternalSolver;

impl SolverBackend for InternalSolver {
    fn name(&self) -> &str {
        "internal"
    }

    fn solve(
        &self,
        program: &IntegerProgram,
        limits: &SolveLimits,
    ) -> Result<MipSolution, String> {
        solve_ip(program, limits).map_err(|e| e.to_string())
    }
}

fn registry() -> &'static RwLock<BTreeMap<String, Arc<dyn SolverBackend>>> {
    static REGISTRY: OnceLock<RwLock<BTreeMap<String, Arc<dyn SolverBackend>>>> = OnceLock::new();
    REGISTRY.get_or_init(|| {
        let mut map: BTreeMap<String, Arc<dyn SolverBackend>> = BTreeMap::new();
        map.insert("internal".into(), Arc::new(InternalSolver));
        RwLock::new(map)
    })
}

/// Registers a solver adapter under its own name, replacing any previous
/// registration with that name.
pub fn register_backend(backend: Arc<dyn SolverBackend>) {
    registry()
        .write()
        .expect("backend registry poisoned")
        .insert(backend.name().to_string(), backend);
}

/// Solves through a named registered backend. Adapter failures surface as
/// [`MipError::Backend`] carrying the adapter's message.
pub fn solve_with_backend(
    name: &str,
    program: &IntegerProgram,
    limits: &SolveLimits,
) -> Result<MipSolution, MipError> {
    let backend = registry()
        .read()
        .expect("backend registry poisoned")
        .get(name)
        .cloned()
        .ok_or_else(|| MipError::UnknownBackend(name.to_string()))?;
    backend
        .solve(program, limits)
        .map_err(|message| MipError::Backend {
            name: name.to_string(),
            message,
        })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn backend_registry_default_and_custom() {
        let mut prog = IntegerProgram::new();
        let x = prog.add_var("x", 0.0, 10.0, true);
        prog.set_objective(x, 1.0);
        prog.add_constraint("lb", vec![(x, 1.0)], Relation::Ge, 3.0);

        let sol = solve_with_backend("internal", &prog, &SolveLimits::default()).unwrap();
        assert_eq!(sol.status, SolveStatus::Optimal);
        assert_eq!(sol.value(x), 3.0);

        struct Canned;
        impl SolverBackend for Canned {
            fn name(&self) -> &str {
                "canned"
            }
            fn solve(
                &self,
                _program: &IntegerProgram,
                _limits: &SolveLimits,
            ) -> Result<MipSolution, String> {
                Err("adapter exploded".into())
            }
        }
        register_backend(Arc::new(Canned));
        match solve_with_backend("canned", &prog, &SolveLimits::default()) {
            Err(MipError::Backend { name, message }) => {
                assert_eq!(name, "canned");
                assert!(message.contains("exploded"));
            }
            other => panic!("expected backend error, got {other:?}"),
        }
        assert!(matches!(
            solve_with_backend("nope", &prog, &SolveLimits::default()),
            Err(MipError::UnknownBackend(_))
        ));
    }
}
