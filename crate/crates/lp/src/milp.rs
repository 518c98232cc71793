//! Best-first branch-and-bound over binary variables.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::control::SolveControl;
use crate::error::LpError;
use crate::problem::Problem;
use crate::scalar::Scalar;
use crate::simplex::{solve_with_bounds, Solution, SolverOptions, Status};

struct Node<T> {
    bound: T,
    seq: u64,
    bounds: Vec<(T, T)>,
}

impl<T: Scalar> PartialEq for Node<T> {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl<T: Scalar> Eq for Node<T> {}

impl<T: Scalar> PartialOrd for Node<T> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl<T: Scalar> Ord for Node<T> {
    // BinaryHeap is a max-heap: the smallest bound, then the earliest
    // insertion, must compare greatest.
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .bound
            .partial_cmp(&self.bound)
            .unwrap_or(Ordering::Equal)
            .then_with(|| other.seq.cmp(&self.seq))
    }
}

pub fn solve_milp<T: Scalar>(problem: &Problem<T>) -> Result<Solution<T>, LpError> {
    solve_milp_with(problem, &SolverOptions::default(), None)
}

/// Solves `problem` to optimality in its binary variables. Problems without
/// binaries reduce to a single LP solve.
pub fn solve_milp_with<T: Scalar>(
    problem: &Problem<T>,
    opts: &SolverOptions<T>,
    control: Option<&SolveControl>,
) -> Result<Solution<T>, LpError> {
    problem.validate()?;
    let root_bounds: Vec<(T, T)> = problem
        .variables
        .iter()
        .map(|v| (v.lower, v.upper))
        .collect();
    if !problem.has_binaries() {
        return solve_with_bounds(problem, &root_bounds, opts, control);
    }
    let binaries: Vec<usize> = problem
        .variables
        .iter()
        .enumerate()
        .filter(|(_, v)| v.binary)
        .map(|(i, _)| i)
        .collect();

    let mut heap = BinaryHeap::new();
    let mut seq = 0u64;
    heap.push(Node {
        bound: T::neg_infinity(),
        seq,
        bounds: root_bounds,
    });
    let mut incumbent: Option<Solution<T>> = None;
    let mut iterations = 0usize;
    let mut nodes = 0usize;
    let max_nodes = opts.max_nodes.unwrap_or(usize::MAX);

    while let Some(node) = heap.pop() {
        if let Some(c) = control {
            if c.is_cancelled() {
                return Err(LpError::Cancelled);
            }
        }
        if let Some(inc) = &incumbent {
            if node.bound >= inc.objective_value - opts.mip_gap {
                continue;
            }
        }
        if nodes >= max_nodes {
            return Err(LpError::IterationLimit(max_nodes));
        }
        nodes += 1;
        if let Some(c) = control {
            c.add_node();
        }
        let relax = solve_with_bounds(problem, &node.bounds, opts, control)?;
        iterations += relax.iterations;
        match relax.status {
            Status::Infeasible => continue,
            Status::Unbounded => {
                let mut s = Solution::without_point(Status::Unbounded, iterations);
                s.nodes = nodes;
                return Ok(s);
            }
            Status::Optimal => {}
        }
        if let Some(inc) = &incumbent {
            if relax.objective_value >= inc.objective_value - opts.mip_gap {
                continue;
            }
        }
        // Most fractional binary, lowest index on ties.
        let mut branch: Option<(usize, T)> = None;
        for &j in &binaries {
            let v = relax.values[j];
            let frac = (v - v.round()).abs();
            if frac > opts.integrality_tol && branch.is_none_or(|(_, f)| frac > f) {
                branch = Some((j, frac));
            }
        }
        match branch {
            None => {
                let mut sol = relax;
                for &j in &binaries {
                    sol.values[j] = sol.values[j].round();
                }
                sol.objective_value = problem.objective_value(&sol.values);
                incumbent = Some(sol);
            }
            Some((j, _)) => {
                for fixed in [T::zero(), T::one()] {
                    let mut b = node.bounds.clone();
                    b[j] = (fixed, fixed);
                    seq += 1;
                    heap.push(Node {
                        bound: relax.objective_value,
                        seq,
                        bounds: b,
                    });
                }
            }
        }
    }

    Ok(match incumbent {
        Some(mut sol) => {
            sol.iterations = iterations;
            sol.nodes = nodes;
            sol.primal_residual = problem.max_violation(&sol.values);
            sol
        }
        None => {
            let mut s = Solution::without_point(Status::Infeasible, iterations);
            s.nodes = nodes;
            s
        }
    })
}
