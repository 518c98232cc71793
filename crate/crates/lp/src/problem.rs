use crate::error::LpError;
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Relation {
    Le,
    Eq,
    Ge,
}

impl Relation {
    pub fn symbol(self) -> &'static str {
        match self {
            Relation::Le => "<=",
            Relation::Eq => "=",
            Relation::Ge => ">=",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Variable<T> {
    pub name: String,
    pub lower: T,
    pub upper: T,
    pub binary: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Constraint<T> {
    pub name: String,
    pub coeffs: Vec<(usize, T)>,
    pub relation: Relation,
    pub rhs: T,
}

impl<T: Scalar> Constraint<T> {
    pub fn activity(&self, values: &[T]) -> T {
        self.coeffs.iter().map(|&(j, a)| a * values[j]).sum()
    }

    /// Amount by which `values` violate this row (zero when satisfied).
    pub fn violation(&self, values: &[T]) -> T {
        let lhs = self.activity(values);
        match self.relation {
            Relation::Le => (lhs - self.rhs).max(T::zero()),
            Relation::Ge => (self.rhs - lhs).max(T::zero()),
            Relation::Eq => (lhs - self.rhs).abs(),
        }
    }
}

/// A minimisation problem over bounded variables and linear rows.
///
/// Bounds may be infinite. Variables flagged `binary` are branched on by
/// [`crate::solve_milp`]; the plain LP routines treat them as continuous.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Problem<T> {
    pub variables: Vec<Variable<T>>,
    pub constraints: Vec<Constraint<T>>,
    pub objective: Vec<T>,
}

impl<T: Scalar> Problem<T> {
    pub fn new() -> Self {
        Problem {
            variables: Vec::new(),
            constraints: Vec::new(),
            objective: Vec::new(),
        }
    }

    pub fn num_vars(&self) -> usize {
        self.variables.len()
    }

    pub fn num_constraints(&self) -> usize {
        self.constraints.len()
    }

    pub fn add_var(&mut self, name: impl Into<String>, lower: T, upper: T, cost: T) -> usize {
        self.variables.push(Variable {
            name: name.into(),
            lower,
            upper,
            binary: false,
        });
        self.objective.push(cost);
        self.variables.len() - 1
    }

    pub fn add_binary(&mut self, name: impl Into<String>, cost: T) -> usize {
        self.variables.push(Variable {
            name: name.into(),
            lower: T::zero(),
            upper: T::one(),
            binary: true,
        });
        self.objective.push(cost);
        self.variables.len() - 1
    }

    pub fn add_constraint(
        &mut self,
        name: impl Into<String>,
        coeffs: Vec<(usize, T)>,
        relation: Relation,
        rhs: T,
    ) -> usize {
        self.constraints.push(Constraint {
            name: name.into(),
            coeffs,
            relation,
            rhs,
        });
        self.constraints.len() - 1
    }

    pub fn has_binaries(&self) -> bool {
        self.variables.iter().any(|v| v.binary)
    }

    pub fn objective_value(&self, values: &[T]) -> T {
        self.objective
            .iter()
            .zip(values)
            .map(|(&c, &x)| c * x)
            .sum()
    }

    /// Largest row or bound violation of `values`.
    pub fn max_violation(&self, values: &[T]) -> T {
        let rows = self
            .constraints
            .iter()
            .map(|c| c.violation(values))
            .fold(T::zero(), T::max);
        let bounds = self
            .variables
            .iter()
            .zip(values)
            .map(|(v, &x)| (v.lower - x).max(x - v.upper).max(T::zero()))
            .fold(T::zero(), T::max);
        rows.max(bounds)
    }

    pub fn rhs_inf_norm(&self) -> T {
        self.constraints
            .iter()
            .map(|c| c.rhs.abs())
            .fold(T::zero(), T::max)
    }

    /// Checks indices, bounds and finiteness.
    pub fn validate(&self) -> Result<(), LpError> {
        let n = self.variables.len();
        if self.objective.len() != n {
            return Err(LpError::ObjectiveLength {
                expected: n,
                got: self.objective.len(),
            });
        }
        for (index, v) in self.variables.iter().enumerate() {
            if v.lower.is_nan() || v.upper.is_nan() || v.lower > v.upper {
                return Err(LpError::InvertedBounds {
                    index,
                    name: v.name.clone(),
                });
            }
            if v.lower == T::infinity() || v.upper == T::neg_infinity() {
                return Err(LpError::InvertedBounds {
                    index,
                    name: v.name.clone(),
                });
            }
            if v.binary && (v.lower < T::zero() || v.upper > T::one()) {
                return Err(LpError::BinaryBounds {
                    index,
                    name: v.name.clone(),
                });
            }
            if !self.objective[index].is_finite() {
                return Err(LpError::NonFinite(format!("objective of {}", v.name)));
            }
        }
        for (ci, c) in self.constraints.iter().enumerate() {
            if !c.rhs.is_finite() {
                return Err(LpError::NonFinite(format!("rhs of constraint {ci}")));
            }
            for &(j, a) in &c.coeffs {
                if j >= n {
                    return Err(LpError::BadIndex {
                        constraint: ci,
                        index: j,
                        count: n,
                    });
                }
                if !a.is_finite() {
                    return Err(LpError::NonFinite(format!("constraint {ci}")));
                }
            }
        }
        Ok(())
    }
}
