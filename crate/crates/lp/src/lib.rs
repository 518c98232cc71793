//! Self-contained deterministic linear and binary-integer programming.
//!
//! The solver core is generic over the floating-point [`Scalar`]; the `Lp*`
//! aliases at the crate root fix it to `f64`, which is what the allocation
//! model uses.

// `!(x < y)` style guards are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod control;
mod error;
mod lp_format;
mod lu;
mod milp;
mod problem;
mod pwl;
mod scalar;
mod simplex;

pub use control::SolveControl;
pub use error::LpError;
pub use lp_format::write_lp;
pub use milp::{solve_milp, solve_milp_with};
pub use problem::{Constraint, Problem, Relation, Variable};
pub use pwl::{add_pwl_cost, pwl_convex, PwlCurve};
pub use scalar::Scalar;
pub use simplex::{solve_lp, solve_lp_with, Solution, SolverOptions, Status};

pub type LpProblem = Problem<f64>;
pub type LpSolution = Solution<f64>;
pub type LpOptions = SolverOptions<f64>;
pub type Pwl = PwlCurve<f64>;
