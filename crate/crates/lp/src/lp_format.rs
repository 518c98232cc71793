//! Export in the CPLEX-style LP text format for cross-checking with other solvers.

use std::collections::HashSet;
use std::fmt::Write as _;
use std::io::{self, Write};

use crate::problem::{Problem, Relation};
use crate::scalar::Scalar;

fn sanitize(name: &str, index: usize, prefix: char, used: &mut HashSet<String>) -> String {
    let mut s: String = name
        .chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || "_.[]".contains(c) {
                c
            } else {
                '_'
            }
        })
        .collect();
    if s.is_empty() || s.starts_with(|c: char| c.is_ascii_digit() || c == '.') {
        s = format!("{prefix}{index}_{s}");
    }
    if !used.insert(s.clone()) {
        s = format!("{s}__{index}");
        used.insert(s.clone());
    }
    s
}

fn term<T: Scalar>(out: &mut String, coef: T, name: &str, first: bool) {
    let sign = if coef < T::zero() { "-" } else { "+" };
    if first && coef >= T::zero() {
        let _ = write!(out, " {} {}", coef.abs(), name);
    } else {
        let _ = write!(out, " {} {} {}", sign, coef.abs(), name);
    }
}

pub fn write_lp<T: Scalar, W: Write>(problem: &Problem<T>, mut w: W) -> io::Result<()> {
    let mut used = HashSet::new();
    let names: Vec<String> = problem
        .variables
        .iter()
        .enumerate()
        .map(|(i, v)| sanitize(&v.name, i, 'x', &mut used))
        .collect();
    let mut out = String::from("\\ exported by basin-lp\nMinimize\n obj:");
    let mut first = true;
    for (j, &c) in problem.objective.iter().enumerate() {
        if c != T::zero() {
            term(&mut out, c, &names[j], first);
            first = false;
        }
    }
    if first {
        out.push_str(" 0");
    }
    out.push_str("\nSubject To\n");
    let mut row_names = HashSet::new();
    for (i, c) in problem.constraints.iter().enumerate() {
        let rn = sanitize(&c.name, i, 'c', &mut row_names);
        let _ = write!(out, " {rn}:");
        let mut first = true;
        for &(j, a) in &c.coeffs {
            term(&mut out, a, &names[j], first);
            first = false;
        }
        if first {
            let _ = write!(out, " 0 {}", names.first().map(String::as_str).unwrap_or("x0"));
        }
        let rel = match c.relation {
            Relation::Le => "<=",
            Relation::Eq => "=",
            Relation::Ge => ">=",
        };
        let _ = writeln!(out, " {} {}", rel, c.rhs);
    }
    out.push_str("Bounds\n");
    for (j, v) in problem.variables.iter().enumerate() {
        if v.binary {
            continue;
        }
        let n = &names[j];
        match (v.lower.is_finite(), v.upper.is_finite()) {
            (false, false) => {
                let _ = writeln!(out, " {n} free");
            }
            (true, true) if v.lower == v.upper => {
                let _ = writeln!(out, " {n} = {}", v.lower);
            }
            (true, true) => {
                let _ = writeln!(out, " {} <= {n} <= {}", v.lower, v.upper);
            }
            (true, false) => {
                let _ = writeln!(out, " {n} >= {}", v.lower);
            }
            (false, true) => {
                let _ = writeln!(out, " -inf <= {n} <= {}", v.upper);
            }
        }
    }
    let binaries: Vec<&String> = problem
        .variables
        .iter()
        .zip(&names)
        .filter(|(v, _)| v.binary)
        .map(|(_, n)| n)
        .collect();
    if !binaries.is_empty() {
        out.push_str("Binaries\n");
        for n in binaries {
            let _ = writeln!(out, " {n}");
        }
    }
    out.push_str("End\n");
    w.write_all(out.as_bytes())
}
