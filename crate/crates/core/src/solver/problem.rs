use alloc::vec::Vec;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// `Σ coef·x[var] + constant`.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct AffineExpr {
    pub terms: Vec<(usize, f64)>,
    #[serde(default)]
    pub constant: f64,
}

impl AffineExpr {
    pub fn constant(c: f64) -> Self {
        Self { terms: Vec::new(), constant: c }
    }

    pub fn var(index: usize, coef: f64) -> Self {
        Self { terms: alloc::vec![(index, coef)], constant: 0.0 }
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        self.constant + self.terms.iter().map(|&(j, a)| a * x[j]).sum::<f64>()
    }

    fn coef_scale(&self) -> f64 {
        self.terms.iter().fold(self.constant.abs(), |m, &(_, a)| m.max(a.abs()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Relation {
    Le,
    Ge,
    Eq,
}

/// `Σ coef·x[var]  (≤ | ≥ | =)  rhs`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearConstraint {
    pub terms: Vec<(usize, f64)>,
    pub relation: Relation,
    pub rhs: f64,
}

impl LinearConstraint {
    pub fn le(terms: Vec<(usize, f64)>, rhs: f64) -> Self {
        Self { terms, relation: Relation::Le, rhs }
    }

    pub fn ge(terms: Vec<(usize, f64)>, rhs: f64) -> Self {
        Self { terms, relation: Relation::Ge, rhs }
    }

    pub fn eq(terms: Vec<(usize, f64)>, rhs: f64) -> Self {
        Self { terms, relation: Relation::Eq, rhs }
    }

    pub fn lhs(&self, x: &[f64]) -> f64 {
        self.terms.iter().map(|&(j, a)| a * x[j]).sum()
    }

    /// Violation normalized by the row's largest coefficient.
    pub fn violation(&self, x: &[f64]) -> f64 {
        let scale = self.terms.iter().fold(0.0f64, |m, &(_, a)| m.max(a.abs()));
        let diff = self.lhs(x) - self.rhs;
        let raw = match self.relation {
            Relation::Le => diff.max(0.0),
            Relation::Ge => (-diff).max(0.0),
            Relation::Eq => diff.abs(),
        };
        if scale > 0.0 {
            raw / scale
        } else {
            raw
        }
    }
}

/// Second-order cone `‖(e_1, …, e_m)‖₂ ≤ bound`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SocConstraint {
    pub entries: Vec<AffineExpr>,
    pub bound: AffineExpr,
}

impl SocConstraint {
    pub fn norm(&self, x: &[f64]) -> f64 {
        libm::sqrt(self.entries.iter().map(|e| e.eval(x)).map(|v| v * v).sum())
    }

    /// Violation normalized by the cone's largest coefficient.
    pub fn violation(&self, x: &[f64]) -> f64 {
        let scale = self.entries.iter().fold(self.bound.coef_scale(), |m, e| m.max(e.coef_scale()));
        let raw = (self.norm(x) - self.bound.eval(x)).max(0.0);
        if scale > 0.0 {
            raw / scale
        } else {
            raw
        }
    }

    pub(crate) fn max_var(&self) -> Option<usize> {
        self.entries
            .iter()
            .chain(core::iter::once(&self.bound))
            .flat_map(|e| e.terms.iter().map(|t| t.0))
            .max()
    }
}

/// Linear objective over a stacked real vector with box bounds, linear rows
/// and second-order cones.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConicProblem {
    pub n_vars: usize,
    pub objective: Vec<f64>,
    #[serde(default)]
    pub objective_constant: f64,
    #[serde(with = "lower_bounds")]
    pub lower: Vec<f64>,
    #[serde(with = "upper_bounds")]
    pub upper: Vec<f64>,
    pub linear: Vec<LinearConstraint>,
    pub cones: Vec<SocConstraint>,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ProblemError {
    #[error("objective has {got} entries for {n} variables")]
    ObjectiveLength { got: usize, n: usize },
    #[error("bounds have wrong length")]
    BoundsLength,
    #[error("constraint references variable {var} but the problem has {n}")]
    VariableOutOfRange { var: usize, n: usize },
    #[error("binary index {0} out of range")]
    BinaryOutOfRange(usize),
    #[error("non-finite coefficient")]
    NonFinite,
}

/// Which constraint was the worst offender in a feasibility check.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ConstraintRef {
    None,
    Bound(usize),
    Linear(usize),
    Cone(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub worst: f64,
    pub at: ConstraintRef,
}

impl ConicProblem {
    /// Empty problem with `n` free variables and zero objective.
    pub fn new(n_vars: usize) -> Self {
        Self {
            n_vars,
            objective: alloc::vec![0.0; n_vars],
            objective_constant: 0.0,
            lower: alloc::vec![f64::NEG_INFINITY; n_vars],
            upper: alloc::vec![f64::INFINITY; n_vars],
            linear: Vec::new(),
            cones: Vec::new(),
        }
    }

    pub fn objective_value(&self, x: &[f64]) -> f64 {
        self.objective_constant + self.objective.iter().zip(x).map(|(c, v)| c * v).sum::<f64>()
    }

    pub fn validate(&self) -> Result<(), ProblemError> {
        let n = self.n_vars;
        if self.objective.len() != n {
            return Err(ProblemError::ObjectiveLength { got: self.objective.len(), n });
        }
        if self.lower.len() != n || self.upper.len() != n {
            return Err(ProblemError::BoundsLength);
        }
        let finite = |v: f64| v.is_finite();
        if !self.objective.iter().all(|v| finite(*v)) || !finite(self.objective_constant) {
            return Err(ProblemError::NonFinite);
        }
        if self.lower.iter().chain(&self.upper).any(|v| v.is_nan()) {
            return Err(ProblemError::NonFinite);
        }
        for row in &self.linear {
            for &(var, a) in &row.terms {
                if var >= n {
                    return Err(ProblemError::VariableOutOfRange { var, n });
                }
                if !finite(a) {
                    return Err(ProblemError::NonFinite);
                }
            }
            if !finite(row.rhs) {
                return Err(ProblemError::NonFinite);
            }
        }
        for cone in &self.cones {
            if let Some(var) = cone.max_var().filter(|&v| v >= n) {
                return Err(ProblemError::VariableOutOfRange { var, n });
            }
            let exprs = cone.entries.iter().chain(core::iter::once(&cone.bound));
            for e in exprs {
                if !finite(e.constant) || e.terms.iter().any(|t| !finite(t.1)) {
                    return Err(ProblemError::NonFinite);
                }
            }
        }
        Ok(())
    }

    /// Independent feasibility check of a candidate point against every
    /// bound, row and cone. Violations are normalized per constraint.
    pub fn max_violation(&self, x: &[f64]) -> Violation {
        let mut worst = Violation { worst: 0.0, at: ConstraintRef::None };
        let mut note = |v: f64, at: ConstraintRef| {
            if v > worst.worst || v.is_nan() {
                worst = Violation { worst: if v.is_nan() { f64::INFINITY } else { v }, at };
            }
        };
        for j in 0..self.n_vars {
            let v = (self.lower[j] - x[j]).max(x[j] - self.upper[j]).max(0.0);
            note(v, ConstraintRef::Bound(j));
        }
        for (i, row) in self.linear.iter().enumerate() {
            note(row.violation(x), ConstraintRef::Linear(i));
        }
        for (i, cone) in self.cones.iter().enumerate() {
            note(cone.violation(x), ConstraintRef::Cone(i));
        }
        worst
    }
}

/// Binary-constrained conic problem.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MipProblem {
    pub relaxation: ConicProblem,
    pub binaries: Vec<usize>,
    /// The objective takes integer values on every integral feasible point,
    /// which lets the search prune any node whose bound exceeds
    /// `incumbent − 1`.
    #[serde(default)]
    pub integral_objective: bool,
}

impl MipProblem {
    /// Wraps `relaxation`, clamping every binary's box to `[0, 1]`.
    pub fn new(mut relaxation: ConicProblem, binaries: Vec<usize>, integral_objective: bool) -> Self {
        for &j in &binaries {
            if j < relaxation.n_vars {
                relaxation.lower[j] = relaxation.lower[j].max(0.0);
                relaxation.upper[j] = relaxation.upper[j].min(1.0);
            }
        }
        Self { relaxation, binaries, integral_objective }
    }

    pub fn validate(&self) -> Result<(), ProblemError> {
        self.relaxation.validate()?;
        match self.binaries.iter().find(|&&j| j >= self.relaxation.n_vars) {
            Some(&j) => Err(ProblemError::BinaryOutOfRange(j)),
            None => Ok(()),
        }
    }
}

macro_rules! bound_serde {
    ($name:ident, $missing:expr) => {
        mod $name {
            use alloc::vec::Vec;
            use serde::{Deserialize, Deserializer, Serialize, Serializer};

            pub fn serialize<S: Serializer>(v: &[f64], s: S) -> Result<S::Ok, S::Error> {
                let opt: Vec<Option<f64>> = v.iter().map(|x| x.is_finite().then_some(*x)).collect();
                opt.serialize(s)
            }

            pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<f64>, D::Error> {
                let opt: Vec<Option<f64>> = Vec::deserialize(d)?;
                Ok(opt.into_iter().map(|x| x.unwrap_or($missing)).collect())
            }
        }
    };
}

bound_serde!(lower_bounds, f64::NEG_INFINITY);
bound_serde!(upper_bounds, f64::INFINITY);
