//! Independent brute-force oracles for small problems. Nothing here calls the
//! simplex code; optima come from enumerating vertices or assignments.
#![allow(dead_code)]

use basin_lp::{LpProblem, Relation};
use rand::Rng;

/// A hyperplane `a . x = b` together with the half-space sense it stems from.
struct Plane {
    a: Vec<f64>,
    b: f64,
}

fn solve_dense(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let n = b.len();
    for col in 0..n {
        let piv = (col..n).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if a[piv][col].abs() < 1e-10 {
            return None;
        }
        a.swap(col, piv);
        b.swap(col, piv);
        for r in 0..n {
            if r != col {
                let f = a[r][col] / a[col][col];
                if f != 0.0 {
                    for c in col..n {
                        a[r][c] -= f * a[col][c];
                    }
                    b[r] -= f * b[col];
                }
            }
        }
    }
    Some((0..n).map(|i| b[i] / a[i][i]).collect())
}

fn feasible(p: &LpProblem, x: &[f64], fixed: &[Option<f64>], tol: f64) -> bool {
    let full = merge(x, fixed);
    p.variables
        .iter()
        .zip(&full)
        .all(|(v, &xi)| xi >= v.lower - tol && xi <= v.upper + tol)
        && p.constraints.iter().all(|c| c.violation(&full) <= tol)
}

fn merge(free: &[f64], fixed: &[Option<f64>]) -> Vec<f64> {
    let mut it = free.iter();
    fixed
        .iter()
        .map(|f| match f {
            Some(v) => *v,
            None => *it.next().expect("free value"),
        })
        .collect()
}

fn combinations(n: usize, k: usize) -> Vec<Vec<usize>> {
    fn rec(start: usize, n: usize, k: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        for i in start..n {
            cur.push(i);
            rec(i + 1, n, k, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(0, n, k, &mut Vec::new(), &mut out);
    out
}

/// Minimum of a boxed LP over the variables not in `fixed` by enumerating all
/// vertices of the feasible polytope. `None` means infeasible.
pub fn vertex_optimum_fixed(p: &LpProblem, fixed: &[Option<f64>]) -> Option<f64> {
    let free: Vec<usize> = (0..p.num_vars()).filter(|&j| fixed[j].is_none()).collect();
    let k = free.len();
    let full_obj = |x: &[f64]| p.objective_value(&merge(x, fixed));
    if k == 0 {
        return feasible(p, &[], fixed, 1e-9).then(|| full_obj(&[]));
    }
    let mut planes = Vec::new();
    for c in &p.constraints {
        let mut a = vec![0.0; k];
        let mut b = c.rhs;
        for &(j, v) in &c.coeffs {
            match fixed[j] {
                Some(f) => b -= v * f,
                None => a[free.iter().position(|&q| q == j).unwrap()] += v,
            }
        }
        planes.push(Plane { a, b });
    }
    for (i, &j) in free.iter().enumerate() {
        for bound in [p.variables[j].lower, p.variables[j].upper] {
            let mut a = vec![0.0; k];
            a[i] = 1.0;
            planes.push(Plane { a, b: bound });
        }
    }
    let mut best: Option<f64> = None;
    for subset in combinations(planes.len(), k) {
        let a: Vec<Vec<f64>> = subset.iter().map(|&i| planes[i].a.clone()).collect();
        let b: Vec<f64> = subset.iter().map(|&i| planes[i].b).collect();
        if let Some(x) = solve_dense(a, b) {
            if feasible(p, &x, fixed, 1e-9) {
                let v = full_obj(&x);
                best = Some(best.map_or(v, |b: f64| b.min(v)));
            }
        }
    }
    best
}

pub fn vertex_optimum(p: &LpProblem) -> Option<f64> {
    vertex_optimum_fixed(p, &vec![None; p.num_vars()])
}

/// Exhaustive enumeration of every binary assignment; remaining continuous
/// variables are optimised by vertex enumeration.
pub fn brute_force_milp(p: &LpProblem) -> Option<f64> {
    let bins: Vec<usize> = (0..p.num_vars()).filter(|&j| p.variables[j].binary).collect();
    let mut best: Option<f64> = None;
    for mask in 0u32..(1 << bins.len()) {
        let mut fixed = vec![None; p.num_vars()];
        for (b, &j) in bins.iter().enumerate() {
            fixed[j] = Some(((mask >> b) & 1) as f64);
        }
        if let Some(v) = vertex_optimum_fixed(p, &fixed) {
            best = Some(best.map_or(v, |b: f64| b.min(v)));
        }
    }
    best
}

fn coef<R: Rng>(rng: &mut R) -> f64 {
    // Quarter-integers keep vertices well conditioned but still non-trivial.
    f64::from(rng.gen_range(-20i32..=20)) / 4.0
}

fn relation<R: Rng>(rng: &mut R) -> Relation {
    match rng.gen_range(0..6) {
        0..=2 => Relation::Le,
        3..=4 => Relation::Ge,
        _ => Relation::Eq,
    }
}

/// Random LP with 1..=4 boxed variables and 0..=4 rows.
pub fn random_boxed_lp<R: Rng>(rng: &mut R) -> LpProblem {
    let mut p = LpProblem::new();
    let n = rng.gen_range(1..=4);
    for j in 0..n {
        let lo = f64::from(rng.gen_range(-4i32..=2));
        let hi = lo + f64::from(rng.gen_range(0i32..=6));
        p.add_var(format!("x{j}"), lo, hi, coef(rng));
    }
    let m = rng.gen_range(0..=4);
    for i in 0..m {
        let mut coeffs = Vec::new();
        for j in 0..n {
            if rng.gen_bool(0.8) {
                coeffs.push((j, coef(rng)));
            }
        }
        let rhs = f64::from(rng.gen_range(-12i32..=12)) / 2.0;
        p.add_constraint(format!("r{i}"), coeffs, relation(rng), rhs);
    }
    p
}

/// Random MILP with 1..=10 binaries and up to two boxed continuous variables.
pub fn random_milp<R: Rng>(rng: &mut R) -> LpProblem {
    let mut p = LpProblem::new();
    let b = rng.gen_range(1..=10);
    for j in 0..b {
        p.add_binary(format!("b{j}"), coef(rng));
    }
    let c = rng.gen_range(0..=2);
    for j in 0..c {
        p.add_var(format!("y{j}"), 0.0, f64::from(rng.gen_range(1i32..=5)), coef(rng));
    }
    let n = b + c;
    let m = rng.gen_range(1..=4);
    for i in 0..m {
        let mut coeffs = Vec::new();
        for j in 0..n {
            if rng.gen_bool(0.6) {
                coeffs.push((j, coef(rng)));
            }
        }
        let rhs = f64::from(rng.gen_range(-8i32..=16)) / 2.0;
        let rel = if rng.gen_bool(0.85) { Relation::Le } else { Relation::Ge };
        p.add_constraint(format!("r{i}"), coeffs, rel, rhs);
    }
    p
}
