//! Conic modelling types, an interior-point solver for the continuous
//! relaxations and a best-first branch-and-bound over binary variables.

mod bnb;
mod ipm;
mod power;
mod problem;

use alloc::vec::Vec;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use bnb::branch_and_bound;
pub use ipm::IpmSettings;
pub use power::{min_power_with_cones, min_power_p1, push_sinr_cones, P1Outcome, PowerError};
pub use problem::{
    AffineExpr, ConicProblem, ConstraintRef, LinearConstraint, MipProblem, ProblemError, Relation,
    SocConstraint, Violation,
};

use ipm::{solve_relaxation, Presolve, RelaxStatus};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveStatus {
    Optimal,
    Infeasible,
    Unbounded,
    NodeLimit,
    TimeLimit,
    NumericalFailure,
}

/// Evidence that a problem has no feasible point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Certificate {
    /// A variable's lower bound exceeds its upper bound.
    BoundConflict { var: usize },
    /// A row whose variables are all fixed is violated.
    ConstantRow { row: usize },
    /// A cone whose variables are all fixed is violated.
    ConstantCone { cone: usize },
    /// Dual ray of the self-dual embedding; `residual` is its normalized
    /// stationarity error.
    Farkas { residual: f64 },
    /// Every node of the search tree was infeasible.
    SearchExhausted { nodes: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundRecord {
    pub node: usize,
    pub lower_bound: f64,
    pub incumbent: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveOutcome {
    pub status: SolveStatus,
    pub x: Option<Vec<f64>>,
    pub objective: Option<f64>,
    pub best_bound: f64,
    pub nodes: usize,
    pub iterations: usize,
    pub elapsed_s: Option<f64>,
    pub certificate: Option<Certificate>,
    /// Worst normalized violation of `x` reported by the independent checker.
    pub max_violation: Option<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub history: Vec<BoundRecord>,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverSettings {
    pub ipm: IpmSettings,
    pub node_limit: usize,
    pub int_tol: f64,
    /// Largest checker violation accepted for a reported solution.
    pub check_tol: f64,
    pub time_limit_s: Option<f64>,
    #[serde(skip)]
    pub clock: Option<fn() -> f64>,
    pub record_history: bool,
}

impl Default for SolverSettings {
    fn default() -> Self {
        Self {
            ipm: IpmSettings::default(),
            node_limit: 100_000,
            int_tol: 1e-6,
            check_tol: 1e-7,
            time_limit_s: None,
            clock: None,
            record_history: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SolverError {
    #[error("malformed problem: {0}")]
    Problem(#[from] ProblemError),
}

fn presolve_certificate(p: Presolve) -> Certificate {
    match p {
        Presolve::BoundConflict(var) => Certificate::BoundConflict { var },
        Presolve::ConstantRow(row) => Certificate::ConstantRow { row },
        Presolve::ConstantCone(cone) => Certificate::ConstantCone { cone },
    }
}

/// Solves a continuous conic problem.
pub fn solve_conic(p: &ConicProblem, settings: &SolverSettings) -> Result<SolveOutcome, SolverError> {
    p.validate()?;
    let start = settings.clock.map(|c| c());
    let r = solve_relaxation(p, &p.lower, &p.upper, &settings.ipm);
    let elapsed_s = settings.clock.zip(start).map(|(c, s)| c() - s);
    let mut out = SolveOutcome {
        status: SolveStatus::NumericalFailure,
        x: None,
        objective: None,
        best_bound: f64::NEG_INFINITY,
        nodes: 1,
        iterations: r.iterations,
        elapsed_s,
        certificate: None,
        max_violation: None,
        history: Vec::new(),
    };
    match r.status {
        RelaxStatus::Optimal | RelaxStatus::Inaccurate => {
            let v = p.max_violation(&r.x).worst;
            out.max_violation = Some(v);
            if v <= settings.check_tol {
                out.status = SolveStatus::Optimal;
                out.objective = Some(r.primal);
                out.best_bound = r.dual.min(r.primal);
                out.x = Some(r.x);
            }
        }
        RelaxStatus::Infeasible => {
            out.status = SolveStatus::Infeasible;
            out.best_bound = f64::INFINITY;
            out.certificate = Some(match r.presolve {
                Some(p) => presolve_certificate(p),
                None => Certificate::Farkas { residual: r.certificate_residual.unwrap_or(f64::NAN) },
            });
        }
        RelaxStatus::Unbounded => out.status = SolveStatus::Unbounded,
        RelaxStatus::Failed => {}
    }
    Ok(out)
}

#[cfg(test)]
mod tests;
