use alloc::vec::Vec;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{solve_conic, AffineExpr, ConicProblem, SocConstraint, SolveOutcome, SolveStatus, SolverError, SolverSettings};
use crate::comm::{sinr_cones, CommError, CommStats, PowerVector, SinrCone};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PowerError {
    #[error(transparent)]
    Comm(#[from] CommError),
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error("transmit mask has {got} entries for {expected} APs")]
    MaskLength { got: usize, expected: usize },
}

/// Appends every SINR cone with both sides divided by `σ`, the amplitude
/// `ρ_{l,k}` living at variable `rho_var(l, k)`. All-zero rows of the
/// square-root blocks are dropped.
pub fn push_sinr_cones(problem: &mut ConicProblem, cones: &[SinrCone], sigma: f64, rho_var: impl Fn(usize, usize) -> usize) {
    let inv = 1.0 / sigma;
    for cone in cones {
        let mut entries = Vec::new();
        for (i, block) in cone.blocks.iter().enumerate() {
            for r in 0..block.rows {
                let terms: Vec<(usize, f64)> = block
                    .row(r)
                    .iter()
                    .enumerate()
                    .filter(|(_, v)| **v != 0.0)
                    .map(|(l, v)| (rho_var(l, i), v * inv))
                    .collect();
                if !terms.is_empty() {
                    entries.push(AffineExpr { terms, constant: 0.0 });
                }
            }
        }
        entries.push(AffineExpr::constant(cone.noise_term * inv));
        let bound_terms = cone
            .d
            .iter()
            .enumerate()
            .filter(|(_, v)| **v != 0.0)
            .map(|(l, v)| (rho_var(l, cone.ue), v * inv))
            .collect();
        problem.cones.push(SocConstraint { entries, bound: AffineExpr { terms: bound_terms, constant: 0.0 } });
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct P1Outcome {
    pub status: SolveStatus,
    /// Optimal amplitudes `ρ_{l,k}`; zero for silent APs.
    pub powers: Option<PowerVector>,
    /// `Σ_{l,k} ρ_{l,k}²`.
    pub total_power: Option<f64>,
    pub solve: SolveOutcome,
}

/// Minimum total transmit power meeting every UE's SINR target with only the
/// APs flagged in `tx` transmitting, each within `p_max`.
pub fn min_power_p1(
    stats: &CommStats,
    gamma_c: f64,
    tx: &[bool],
    p_max: f64,
    settings: &SolverSettings,
) -> Result<P1Outcome, PowerError> {
    let cones = sinr_cones(stats, gamma_c)?;
    min_power_with_cones(stats, &cones, tx, p_max, settings)
}

/// [`min_power_p1`] with precomputed SINR cones.
pub fn min_power_with_cones(
    stats: &CommStats,
    cones: &[SinrCone],
    tx: &[bool],
    p_max: f64,
    settings: &SolverSettings,
) -> Result<P1Outcome, PowerError> {
    let (l_n, k_n) = (stats.n_aps(), stats.n_ues());
    if tx.len() != l_n {
        return Err(PowerError::MaskLength { got: tx.len(), expected: l_n });
    }
    let var = |l: usize, k: usize| l * k_n + k;
    let u = l_n * k_n;
    let mut p = ConicProblem::new(u + 1);
    p.objective[u] = 1.0;
    for l in 0..l_n {
        for k in 0..k_n {
            p.lower[var(l, k)] = 0.0;
            if !tx[l] {
                p.upper[var(l, k)] = 0.0;
            }
        }
    }
    push_sinr_cones(&mut p, cones, libm::sqrt(stats.sigma2), var);
    let cap = libm::sqrt(p_max);
    let mut all = Vec::new();
    for l in (0..l_n).filter(|&l| tx[l]) {
        let entries: Vec<AffineExpr> = (0..k_n).map(|k| AffineExpr::var(var(l, k), 1.0)).collect();
        all.extend(entries.iter().cloned());
        p.cones.push(SocConstraint { entries, bound: AffineExpr::constant(cap) });
    }
    p.cones.push(SocConstraint { entries: all, bound: AffineExpr::var(u, 1.0) });
    let solve = solve_conic(&p, settings)?;
    let (powers, total_power) = match (&solve.status, &solve.x) {
        (SolveStatus::Optimal, Some(x)) => {
            let mut pv = PowerVector::zeros(k_n, l_n);
            let mut total = 0.0;
            for l in 0..l_n {
                for k in 0..k_n {
                    let v = x[var(l, k)].max(0.0);
                    pv.rho[k][l] = v;
                    total += v * v;
                }
            }
            (Some(pv), Some(total))
        }
        _ => (None, None),
    };
    Ok(P1Outcome { status: solve.status, powers, total_power, solve })
}
