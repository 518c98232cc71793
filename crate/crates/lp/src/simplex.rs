//! Bounded-variable primal revised simplex.
//!
//! Every row gets a logical (slack) column so the working form is
//! `A x + s = b` with bounds on both structurals and logicals. Rows that the
//! starting point violates receive an artificial column, and phase one drives
//! the artificials to zero. Pricing is Dantzig's rule with a Harris two-pass
//! ratio test; after a run of degenerate pivots the solver falls back to
//! Bland's lowest-index rule until progress resumes.

use crate::control::SolveControl;
use crate::error::LpError;
use crate::lu::{BasisInverse, Eta, LuFactors};
use crate::problem::{Problem, Relation};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Status {
    Optimal,
    Infeasible,
    Unbounded,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Solution<T> {
    pub status: Status,
    /// Structural variable values; empty unless `status` is `Optimal`.
    pub values: Vec<T>,
    pub objective_value: T,
    /// `|primal objective - dual bound|` for the final basis.
    pub dual_gap: T,
    /// Lagrangian lower bound certified by the final duals.
    pub dual_bound: T,
    /// Row duals of the final basis.
    pub duals: Vec<T>,
    pub primal_residual: T,
    pub iterations: usize,
    pub nodes: usize,
    /// `(entering, leaving)` column indices, recorded when tracing is on.
    pub pivots: Vec<(usize, Option<usize>)>,
}

impl<T: Scalar> Solution<T> {
    pub(crate) fn without_point(status: Status, iterations: usize) -> Self {
        Solution {
            status,
            values: Vec::new(),
            objective_value: match status {
                Status::Unbounded => T::neg_infinity(),
                _ => T::infinity(),
            },
            dual_gap: T::infinity(),
            dual_bound: T::neg_infinity(),
            duals: Vec::new(),
            primal_residual: T::infinity(),
            iterations,
            nodes: 0,
            pivots: Vec::new(),
        }
    }

    pub fn is_optimal(&self) -> bool {
        self.status == Status::Optimal
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverOptions<T> {
    /// Bound violation tolerated on basic variables.
    pub feasibility_tol: T,
    /// Reduced-cost magnitude below which a column is considered priced out.
    pub optimality_tol: T,
    /// Smallest pivot element accepted in the ratio test.
    pub pivot_tol: T,
    /// Distance from 0/1 below which a binary counts as integral.
    pub integrality_tol: T,
    /// Absolute optimality gap for branch-and-bound pruning.
    pub mip_gap: T,
    /// Consecutive degenerate pivots before Bland's rule engages.
    pub degeneracy_threshold: usize,
    /// Eta updates between refactorisations.
    pub refactor_interval: usize,
    pub max_iterations: Option<usize>,
    pub max_nodes: Option<usize>,
    /// Record the pivot sequence in the solution.
    pub trace: bool,
}

impl<T: Scalar> Default for SolverOptions<T> {
    fn default() -> Self {
        SolverOptions {
            feasibility_tol: T::tol(1e-9),
            optimality_tol: T::tol(1e-9),
            pivot_tol: T::tol(1e-9),
            integrality_tol: T::tol(1e-6),
            mip_gap: T::tol(1e-6),
            degeneracy_threshold: 50,
            refactor_interval: 64,
            max_iterations: None,
            max_nodes: None,
            trace: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum VarState {
    Basic,
    Lower,
    Upper,
    /// Nonbasic free variable resting at zero.
    Zero,
}

enum PhaseEnd {
    Optimal,
    Unbounded,
}

struct Simplex<'a, T> {
    m: usize,
    n: usize,
    cols: Vec<Vec<(usize, T)>>,
    lower: Vec<T>,
    upper: Vec<T>,
    structural_cost: Vec<T>,
    cost: Vec<T>,
    rhs: Vec<T>,
    x: Vec<T>,
    state: Vec<VarState>,
    basis: Vec<usize>,
    inv: Option<BasisInverse<T>>,
    opts: &'a SolverOptions<T>,
    control: Option<&'a SolveControl>,
    iterations: usize,
    max_iterations: usize,
    degenerate_run: usize,
    bland: bool,
    pivots: Vec<(usize, Option<usize>)>,
    unreported: u64,
    work: Vec<T>,
}

/// Solves the LP relaxation of `problem` (binaries are treated as continuous).
pub fn solve_lp<T: Scalar>(problem: &Problem<T>) -> Result<Solution<T>, LpError> {
    solve_lp_with(problem, &SolverOptions::default(), None)
}

pub fn solve_lp_with<T: Scalar>(
    problem: &Problem<T>,
    opts: &SolverOptions<T>,
    control: Option<&SolveControl>,
) -> Result<Solution<T>, LpError> {
    problem.validate()?;
    let bounds: Vec<(T, T)> = problem
        .variables
        .iter()
        .map(|v| (v.lower, v.upper))
        .collect();
    solve_with_bounds(problem, &bounds, opts, control)
}

/// Solves `problem` with the variable bounds replaced by `bounds`. The problem
/// must already have been validated.
pub(crate) fn solve_with_bounds<T: Scalar>(
    problem: &Problem<T>,
    bounds: &[(T, T)],
    opts: &SolverOptions<T>,
    control: Option<&SolveControl>,
) -> Result<Solution<T>, LpError> {
    if bounds.iter().any(|&(l, u)| l > u) {
        return Ok(Solution::without_point(Status::Infeasible, 0));
    }
    let mut s = Simplex::new(problem, bounds, opts, control);
    let res = s.run();
    s.flush_progress();
    let mut sol = res?;
    if sol.status == Status::Optimal {
        sol.primal_residual = problem.max_violation(&sol.values);
    }
    Ok(sol)
}

impl<'a, T: Scalar> Simplex<'a, T> {
    fn new(
        p: &Problem<T>,
        bounds: &[(T, T)],
        opts: &'a SolverOptions<T>,
        control: Option<&'a SolveControl>,
    ) -> Self {
        let n = p.num_vars();
        let m = p.num_constraints();
        let mut cols: Vec<Vec<(usize, T)>> = vec![Vec::new(); n];
        for (i, c) in p.constraints.iter().enumerate() {
            for &(j, a) in &c.coeffs {
                if a != T::zero() {
                    cols[j].push((i, a));
                }
            }
        }
        // Merge repeated entries of one variable within a row.
        for col in cols.iter_mut() {
            col.sort_by_key(|e| e.0);
            col.dedup_by(|b, a| {
                if a.0 == b.0 {
                    a.1 = a.1 + b.1;
                    true
                } else {
                    false
                }
            });
            col.retain(|e| e.1 != T::zero());
        }
        let mut lower: Vec<T> = bounds.iter().map(|b| b.0).collect();
        let mut upper: Vec<T> = bounds.iter().map(|b| b.1).collect();
        for (i, c) in p.constraints.iter().enumerate() {
            cols.push(vec![(i, T::one())]);
            let (l, u) = match c.relation {
                Relation::Le => (T::zero(), T::infinity()),
                Relation::Ge => (T::neg_infinity(), T::zero()),
                Relation::Eq => (T::zero(), T::zero()),
            };
            lower.push(l);
            upper.push(u);
        }
        let max_iterations = opts.max_iterations.unwrap_or(100 * (n + m) + 10_000);
        Simplex {
            m,
            n,
            cols,
            lower,
            upper,
            structural_cost: p.objective.clone(),
            cost: Vec::new(),
            rhs: p.constraints.iter().map(|c| c.rhs).collect(),
            x: Vec::new(),
            state: Vec::new(),
            basis: Vec::new(),
            inv: None,
            opts,
            control,
            iterations: 0,
            max_iterations,
            degenerate_run: 0,
            bland: false,
            pivots: Vec::new(),
            unreported: 0,
            work: vec![T::zero(); m],
        }
    }

    fn flush_progress(&mut self) {
        if let Some(c) = self.control {
            c.add_iterations(self.unreported);
        }
        self.unreported = 0;
    }

    fn resting_value(&self, j: usize) -> (T, VarState) {
        let (l, u) = (self.lower[j], self.upper[j]);
        if l.is_finite() {
            (l, VarState::Lower)
        } else if u.is_finite() {
            (u, VarState::Upper)
        } else {
            (T::zero(), VarState::Zero)
        }
    }

    /// Places structurals at a bound, makes feasible logicals basic and adds
    /// an artificial for every violated row.
    fn initial_basis(&mut self) -> usize {
        let total = self.cols.len();
        self.x = vec![T::zero(); total];
        self.state = vec![VarState::Lower; total];
        for j in 0..self.n {
            let (v, st) = self.resting_value(j);
            self.x[j] = v;
            self.state[j] = st;
        }
        let mut activity = vec![T::zero(); self.m];
        for j in 0..self.n {
            let xj = self.x[j];
            if xj != T::zero() {
                for &(i, a) in &self.cols[j] {
                    activity[i] = activity[i] + a * xj;
                }
            }
        }
        self.basis = vec![0; self.m];
        let mut artificials = 0;
        for i in 0..self.m {
            let slack = self.n + i;
            let s = self.rhs[i] - activity[i];
            let (l, u) = (self.lower[slack], self.upper[slack]);
            if s >= l && s <= u {
                self.x[slack] = s;
                self.state[slack] = VarState::Basic;
                self.basis[i] = slack;
            } else {
                let clamped = s.max(l).min(u);
                self.x[slack] = clamped;
                self.state[slack] = if clamped == l {
                    VarState::Lower
                } else {
                    VarState::Upper
                };
                let r = s - clamped;
                let sign = if r > T::zero() { T::one() } else { -T::one() };
                let a = self.cols.len();
                self.cols.push(vec![(i, sign)]);
                self.lower.push(T::zero());
                self.upper.push(T::infinity());
                self.x.push(r.abs());
                self.state.push(VarState::Basic);
                self.basis[i] = a;
                artificials += 1;
            }
        }
        artificials
    }

    fn run(&mut self) -> Result<Solution<T>, LpError> {
        let artificials = self.initial_basis();
        self.refactor()?;
        let first_art = self.n + self.m;
        let total = self.cols.len();
        if artificials > 0 {
            let mut c1 = vec![T::zero(); total];
            for c in c1.iter_mut().skip(first_art) {
                *c = T::one();
            }
            self.cost = c1;
            if let PhaseEnd::Unbounded = self.phase()? {
                return Err(LpError::Numerical("phase one reported unbounded".into()));
            }
            self.refactor()?;
            let infeas: T = (first_art..total).map(|j| self.x[j].abs()).sum();
            let rhs_norm = self.rhs.iter().fold(T::zero(), |a, &b| a.max(b.abs()));
            if infeas > T::tol(1e-7) * (T::one() + rhs_norm) {
                return Ok(Solution::without_point(Status::Infeasible, self.iterations));
            }
            for j in first_art..total {
                self.upper[j] = T::zero();
                if self.state[j] != VarState::Basic {
                    self.x[j] = T::zero();
                    self.state[j] = VarState::Lower;
                }
            }
        }
        let mut c2 = vec![T::zero(); total];
        c2[..self.n].copy_from_slice(&self.structural_cost);
        self.cost = c2;
        // Refactorisation can expose drift; repeat until the fresh basis prices out.
        let mut rounds = 0;
        loop {
            if let PhaseEnd::Unbounded = self.phase()? {
                return Ok(Solution::without_point(Status::Unbounded, self.iterations));
            }
            self.refactor()?;
            rounds += 1;
            let y = self.duals();
            if self.price(&y).is_none() || rounds >= 4 {
                break;
            }
        }
        Ok(self.finish())
    }

    fn basic_columns(&self) -> Vec<&[(usize, T)]> {
        self.basis.iter().map(|&j| self.cols[j].as_slice()).collect()
    }

    /// Refactorises the basis, repairing singularity with logicals, and
    /// recomputes basic values from the nonbasic ones.
    fn refactor(&mut self) -> Result<(), LpError> {
        let threshold = T::lit(0.01);
        let zero = T::tol(1e-11);
        let mut attempts = 0;
        let lu = loop {
            let cols = self.basic_columns();
            match LuFactors::factorize(self.m, &cols, threshold, zero) {
                Ok(lu) => break lu,
                Err(sing) => {
                    attempts += 1;
                    if attempts > 8 {
                        return Err(LpError::Numerical("basis repair failed".into()));
                    }
                    for (&pos, &row) in sing.positions.iter().zip(&sing.rows) {
                        let out = self.basis[pos];
                        let (v, st) = self.nearest_bound(out);
                        self.x[out] = v;
                        self.state[out] = st;
                        let slack = self.n + row;
                        self.basis[pos] = slack;
                        self.state[slack] = VarState::Basic;
                    }
                }
            }
        };
        self.inv = Some(BasisInverse::new(lu));
        self.recompute_basics();
        Ok(())
    }

    fn nearest_bound(&self, j: usize) -> (T, VarState) {
        let (l, u, v) = (self.lower[j], self.upper[j], self.x[j]);
        match (l.is_finite(), u.is_finite()) {
            (true, true) => {
                if (v - l).abs() <= (u - v).abs() {
                    (l, VarState::Lower)
                } else {
                    (u, VarState::Upper)
                }
            }
            (true, false) => (l, VarState::Lower),
            (false, true) => (u, VarState::Upper),
            (false, false) => (T::zero(), VarState::Zero),
        }
    }

    fn recompute_basics(&mut self) {
        let mut r = self.rhs.clone();
        for j in 0..self.cols.len() {
            if self.state[j] != VarState::Basic && self.x[j] != T::zero() {
                let xj = self.x[j];
                for &(i, a) in &self.cols[j] {
                    r[i] = r[i] - a * xj;
                }
            }
        }
        self.inv.as_mut().expect("factorised").ftran(&mut r);
        for (pos, &j) in self.basis.iter().enumerate() {
            self.x[j] = r[pos];
        }
    }

    fn duals(&mut self) -> Vec<T> {
        let mut y: Vec<T> = self.basis.iter().map(|&j| self.cost[j]).collect();
        self.inv.as_mut().expect("factorised").btran(&mut y);
        y
    }

    fn reduced_cost(&self, j: usize, y: &[T]) -> T {
        let mut d = self.cost[j];
        for &(i, a) in &self.cols[j] {
            d = d - y[i] * a;
        }
        d
    }

    /// Chooses an entering column and its direction of travel.
    fn price(&self, y: &[T]) -> Option<(usize, T)> {
        let tol = self.opts.optimality_tol;
        let mut best: Option<(usize, T, T)> = None;
        for j in 0..self.cols.len() {
            let st = self.state[j];
            if st == VarState::Basic || self.lower[j] == self.upper[j] {
                continue;
            }
            let d = self.reduced_cost(j, y);
            let dir = match st {
                VarState::Lower if d < -tol => T::one(),
                VarState::Upper if d > tol => -T::one(),
                VarState::Zero if d.abs() > tol => -d.signum(),
                _ => continue,
            };
            if self.bland {
                return Some((j, dir));
            }
            let score = d.abs();
            if best.is_none_or(|(_, _, s)| score > s) {
                best = Some((j, dir, score));
            }
        }
        best.map(|(j, dir, _)| (j, dir))
    }

    fn check_budget(&mut self) -> Result<(), LpError> {
        if self.iterations >= self.max_iterations {
            return Err(LpError::IterationLimit(self.max_iterations));
        }
        if let Some(c) = self.control {
            if self.unreported >= 64 {
                c.add_iterations(self.unreported);
                self.unreported = 0;
            }
            if c.is_cancelled() {
                return Err(LpError::Cancelled);
            }
        }
        Ok(())
    }

    fn phase(&mut self) -> Result<PhaseEnd, LpError> {
        self.degenerate_run = 0;
        self.bland = false;
        loop {
            self.check_budget()?;
            let y = self.duals();
            let Some((q, dir)) = self.price(&y) else {
                return Ok(PhaseEnd::Optimal);
            };
            let mut alpha = std::mem::take(&mut self.work);
            alpha.iter_mut().for_each(|v| *v = T::zero());
            for &(i, a) in &self.cols[q] {
                alpha[i] = a;
            }
            self.inv.as_mut().expect("factorised").ftran(&mut alpha);
            let step = self.ratio_test(q, dir, &alpha);
            let outcome = match step {
                None => {
                    self.work = alpha;
                    return Ok(PhaseEnd::Unbounded);
                }
                Some(step) => self.apply_step(q, dir, &alpha, step),
            };
            self.work = alpha;
            outcome?;
            self.iterations += 1;
            self.unreported += 1;
        }
    }

    /// Harris two-pass ratio test. Returns the step length and the basis
    /// position that leaves, or `None` as the position for a bound flip.
    fn ratio_test(&self, q: usize, dir: T, alpha: &[T]) -> Option<(T, Option<(usize, bool)>)> {
        let ftol = self.opts.feasibility_tol;
        let ptol = self.opts.pivot_tol;
        let range = self.upper[q] - self.lower[q];
        let mut theta_max = T::infinity();
        for (pos, &a) in alpha.iter().enumerate() {
            if a.abs() <= ptol {
                continue;
            }
            let j = self.basis[pos];
            let g = -dir * a;
            let r = if g < T::zero() {
                if !self.lower[j].is_finite() {
                    continue;
                }
                (self.x[j] - self.lower[j] + ftol) / (-g)
            } else {
                if !self.upper[j].is_finite() {
                    continue;
                }
                (self.upper[j] - self.x[j] + ftol) / g
            };
            if r < theta_max {
                theta_max = r;
            }
        }
        if range <= theta_max && range.is_finite() {
            return Some((range, None));
        }
        if !theta_max.is_finite() {
            return None;
        }
        // Second pass: among rows blocking within the relaxed step, prefer the
        // largest pivot (or the lowest variable index under Bland's rule).
        let mut best: Option<(usize, T, T, bool)> = None;
        let mut min_ratio = T::infinity();
        for (pos, &a) in alpha.iter().enumerate() {
            if a.abs() <= ptol {
                continue;
            }
            let j = self.basis[pos];
            let g = -dir * a;
            let (r, to_upper) = if g < T::zero() {
                if !self.lower[j].is_finite() {
                    continue;
                }
                ((self.x[j] - self.lower[j]) / (-g), false)
            } else {
                if !self.upper[j].is_finite() {
                    continue;
                }
                ((self.upper[j] - self.x[j]) / g, true)
            };
            if r > theta_max {
                continue;
            }
            let r = r.max(T::zero());
            if self.bland {
                let tie = T::tol(1e-12);
                let better = match best {
                    None => true,
                    Some((bpos, br, _, _)) => {
                        r < br - tie || (r <= br + tie && j < self.basis[bpos])
                    }
                };
                if better {
                    best = Some((pos, r, a.abs(), to_upper));
                }
            } else {
                let better = match best {
                    None => true,
                    Some((bpos, _, ba, _)) => {
                        a.abs() > ba || (a.abs() == ba && j < self.basis[bpos])
                    }
                };
                if better {
                    best = Some((pos, r, a.abs(), to_upper));
                }
            }
            if r < min_ratio {
                min_ratio = r;
            }
        }
        best.map(|(pos, r, _, up)| (r, Some((pos, up))))
    }

    fn apply_step(
        &mut self,
        q: usize,
        dir: T,
        alpha: &[T],
        (theta, leave): (T, Option<(usize, bool)>),
    ) -> Result<(), LpError> {
        if theta != T::zero() {
            for (pos, &a) in alpha.iter().enumerate() {
                if a != T::zero() {
                    let j = self.basis[pos];
                    self.x[j] = self.x[j] - dir * theta * a;
                }
            }
        }
        let degenerate = theta <= T::tol(1e-12);
        if degenerate {
            self.degenerate_run += 1;
            if self.degenerate_run > self.opts.degeneracy_threshold {
                self.bland = true;
            }
        } else {
            self.degenerate_run = 0;
            self.bland = false;
        }
        match leave {
            None => {
                // Bound flip.
                let (v, st) = if dir > T::zero() {
                    (self.upper[q], VarState::Upper)
                } else {
                    (self.lower[q], VarState::Lower)
                };
                self.x[q] = v;
                self.state[q] = st;
                if self.opts.trace {
                    self.pivots.push((q, None));
                }
            }
            Some((pos, to_upper)) => {
                let out = self.basis[pos];
                self.x[q] = self.x[q] + dir * theta;
                if to_upper {
                    self.x[out] = self.upper[out];
                    self.state[out] = VarState::Upper;
                } else {
                    self.x[out] = self.lower[out];
                    self.state[out] = VarState::Lower;
                }
                self.state[q] = VarState::Basic;
                self.basis[pos] = q;
                if self.opts.trace {
                    self.pivots.push((q, Some(out)));
                }
                let inv = self.inv.as_mut().expect("factorised");
                inv.push_eta(Eta::new(pos, alpha, T::tol(1e-14)));
                let bloated = inv.eta_nnz() > 2 * inv.lu_nnz() + 4 * self.m;
                if inv.eta_count() >= self.opts.refactor_interval || bloated {
                    self.refactor()?;
                }
            }
        }
        Ok(())
    }

    fn finish(&mut self) -> Solution<T> {
        let y = self.duals();
        let n = self.n;
        let mut values: Vec<T> = (0..n)
            .map(|j| self.x[j].max(self.lower[j]).min(self.upper[j]))
            .collect();
        for v in values.iter_mut() {
            if *v == T::zero() {
                *v = T::zero();
            }
        }
        let objective_value: T = values
            .iter()
            .zip(&self.structural_cost)
            .map(|(&x, &c)| x * c)
            .sum();
        let dual_bound = self.dual_bound(&y);
        let dual_gap = (objective_value - dual_bound).abs();
        Solution {
            status: Status::Optimal,
            values,
            objective_value,
            dual_gap,
            dual_bound,
            duals: y,
            primal_residual: T::zero(),
            iterations: self.iterations,
            nodes: 0,
            pivots: std::mem::take(&mut self.pivots),
        }
    }

    /// Lagrangian bound `y'b + sum_j min over [l_j, u_j] of d_j x_j`.
    fn dual_bound(&self, y: &[T]) -> T {
        let tol = self.opts.optimality_tol;
        let mut bound: T = y.iter().zip(&self.rhs).map(|(&yi, &bi)| yi * bi).sum();
        for j in 0..self.n + self.m {
            let d = self.reduced_cost(j, y);
            let (l, u) = (self.lower[j], self.upper[j]);
            let term = if d > T::zero() {
                if l.is_finite() {
                    d * l
                } else if d <= tol {
                    T::zero()
                } else {
                    return T::neg_infinity();
                }
            } else if d < T::zero() {
                if u.is_finite() {
                    d * u
                } else if -d <= tol {
                    T::zero()
                } else {
                    return T::neg_infinity();
                }
            } else {
                T::zero()
            };
            bound = bound + term;
        }
        bound
    }
}
