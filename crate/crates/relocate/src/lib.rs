//! Solvers for the static relocation problem in station-based carsharing.
//!
//! A fleet of cars sits at capacitated stations; `k` drivers, each able to
//! lead a convoy of up to `L` cars, must move the system from a start
//! distribution `z0` to a target distribution `zT` within a time horizon `T`
//! while minimizing the total distance driven. This crate provides:
//!
//! - an exact solver over a time-expanded network with coupled car/driver
//!   flows ([`time_expanded`]),
//! - the LiftFlow heuristic: coupled min-cost flows on a small aggregated
//!   network, lifted into timed tours, with a proven lower bound
//!   ([`liftflow`]),
//! - schedule simulation, validation, and a brute-force optimum for tiny
//!   instances ([`schedule`]),
//! - a random instance generator ([`generator`]) and a benchmark harness
//!   ([`bench`]),
//! - the shared integer-programming substrate: bounded-variable simplex plus
//!   branch-and-bound, with a pluggable backend contract ([`mip`]).
//!
//! Start with the runnable examples:
//!
//! ```text
//! cargo run --release --example generate_instance
//! cargo run --release --example solve_exact
//! cargo run --release --example solve_liftflow
//! cargo run --release --example compare_methods
//! cargo run --release --example validate_schedule
//! cargo run --release --example run_benchmark
//! cargo run --release --example dump_lp_model
//! ```
//!
//! The `relocate` binary wraps the same library behind `gen`, `solve`,
//! `validate`, and `bench` subcommands; see the README.

pub mod instance;
pub mod mip;
pub mod schedule;
pub mod time_expanded;
pub mod liftflow;
pub mod generator;
pub mod bench;
pub mod cli;

pub use instance::{Instance, MetricSpace, StationId, Task, WeightedGraph};
