use alloc::vec;
use alloc::vec::Vec;

use super::{Instance, ModeError, Stage};
use crate::comm::{PowerVector, SinrCone};
use crate::sensing::{linear_sensing_constraint, FixedSide, GMatrices, LinearSensingRow, EPS_DET};
use crate::solver::{
    branch_and_bound, push_sinr_cones, AffineExpr, ConicProblem, LinearConstraint, MipProblem, SocConstraint,
    SolveOutcome, SolveStatus, SolverSettings,
};

/// Variable layout of the subproblems: optional amplitudes `ρ_{l,k}`
/// first, then either the upper triangle of a symmetric `L×L` binary matrix
/// (`X_ij` and `X_ji` share one variable) or a plain per-AP binary vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SubproblemLayout {
    pub n_aps: usize,
    pub n_ues: usize,
    pub with_rho: bool,
    pub full_matrix: bool,
}

impl SubproblemLayout {
    fn base(&self) -> usize {
        if self.with_rho {
            self.n_aps * self.n_ues
        } else {
            0
        }
    }

    pub fn rho(&self, l: usize, k: usize) -> usize {
        debug_assert!(self.with_rho);
        l * self.n_ues + k
    }

    /// Variable of `X_ij` (equal to `X_ji`).
    pub fn pair(&self, i: usize, j: usize) -> usize {
        debug_assert!(self.full_matrix);
        let (i, j) = if i <= j { (i, j) } else { (j, i) };
        let l = self.n_aps;
        self.base() + i * l - (i * i.saturating_sub(1)) / 2 + (j - i)
    }

    /// Variable holding the binary of AP `l` (the diagonal entry when the
    /// layout carries a matrix).
    pub fn diag(&self, l: usize) -> usize {
        if self.full_matrix {
            self.pair(l, l)
        } else {
            self.base() + l
        }
    }

    pub fn n_vars(&self) -> usize {
        let l = self.n_aps;
        self.base() + if self.full_matrix { l * (l + 1) / 2 } else { l }
    }

    pub fn binaries(&self) -> Vec<usize> {
        (0..self.n_aps).map(|l| self.diag(l)).collect()
    }

    pub fn read_mask(&self, x: &[f64]) -> Vec<bool> {
        (0..self.n_aps).map(|l| x[self.diag(l)] >= 0.5).collect()
    }

    pub fn read_rho(&self, x: &[f64]) -> PowerVector {
        let mut pv = PowerVector::zeros(self.n_ues, self.n_aps);
        for l in 0..self.n_aps {
            for k in 0..self.n_ues {
                pv.rho[k][l] = x[self.rho(l, k)].max(0.0);
            }
        }
        pv
    }
}

fn check_len(mask: &[bool], l: usize) -> Result<(), ModeError> {
    if mask.len() == l {
        Ok(())
    } else {
        Err(ModeError::Dimension("mode mask length differs from AP count"))
    }
}

fn push_rho_block(p: &mut ConicProblem, lay: &SubproblemLayout, cones: &[SinrCone], sigma: f64, p_max: f64) {
    for l in 0..lay.n_aps {
        for k in 0..lay.n_ues {
            p.lower[lay.rho(l, k)] = 0.0;
        }
    }
    push_sinr_cones(p, cones, sigma, |l, k| lay.rho(l, k));
    let cap = libm::sqrt(p_max);
    for l in 0..lay.n_aps {
        let entries = (0..lay.n_ues).map(|k| AffineExpr::var(lay.rho(l, k), 1.0)).collect();
        p.cones.push(SocConstraint { entries, bound: AffineExpr::var(lay.diag(l), cap) });
    }
}

fn push_mccormick(p: &mut ConicProblem, lay: &SubproblemLayout) {
    let l_n = lay.n_aps;
    for i in 0..l_n {
        for j in i + 1..l_n {
            let (ij, ii, jj) = (lay.pair(i, j), lay.diag(i), lay.diag(j));
            p.lower[ij] = p.lower[ij].max(0.0);
            p.upper[ij] = p.upper[ij].min(1.0);
            p.linear.push(LinearConstraint::le(vec![(ij, 1.0), (jj, -1.0)], 0.0));
            p.linear.push(LinearConstraint::le(vec![(ij, 1.0), (ii, -1.0)], 0.0));
            p.linear.push(LinearConstraint::le(vec![(ii, 1.0), (jj, 1.0), (ij, -1.0)], 1.0));
        }
    }
}

fn push_sensing(p: &mut ConicProblem, lay: &SubproblemLayout, row: &LinearSensingRow) {
    let l_n = lay.n_aps;
    let scale = row.eta * row.p_s;
    let mut den = vec![0.0; lay.n_vars()];
    for i in 0..l_n {
        for j in 0..l_n {
            den[lay.pair(i, j)] += row.denominator[(i, j)];
        }
    }
    let mut main: Vec<f64> = den.iter().map(|d| -scale * d).collect();
    for l in 0..l_n {
        main[lay.diag(l)] += row.numerator[l];
    }
    let sparse = |v: &[f64]| -> Vec<(usize, f64)> {
        v.iter().enumerate().filter(|(_, c)| **c != 0.0).map(|(j, c)| (j, *c)).collect()
    };
    p.linear.push(LinearConstraint::le(sparse(&main), 0.0));
    p.linear.push(LinearConstraint::ge(sparse(&den), EPS_DET));
    match row.min_positive_numerator {
        Some(s_min) => {
            let terms = (0..l_n).filter(|&l| row.numerator[l] != 0.0).map(|l| (lay.diag(l), row.numerator[l])).collect();
            p.linear.push(LinearConstraint::ge(terms, s_min));
        }
        // zero numerator everywhere: no assignment has a nonsingular FIM
        None => p.linear.push(LinearConstraint::ge(Vec::new(), 1.0)),
    }
}

fn unit_objective(p: &mut ConicProblem, lay: &SubproblemLayout) {
    for l in 0..lay.n_aps {
        p.objective[lay.diag(l)] = 1.0;
    }
}

/// Transmitter selection for a fixed receiver set: minimize the number of
/// transmitters subject to per-AP power caps, every SINR cone, mode
/// exclusivity, the product linearization of `A = aaᵀ` and the
/// cross-multiplied sensing row.
pub fn tx_problem(inst: &Instance, b: &[bool]) -> Result<(MipProblem, SubproblemLayout), ModeError> {
    let (l_n, k_n) = (inst.n_aps(), inst.n_ues());
    check_len(b, l_n)?;
    let lay = SubproblemLayout { n_aps: l_n, n_ues: k_n, with_rho: true, full_matrix: true };
    let mut p = ConicProblem::new(lay.n_vars());
    unit_objective(&mut p, &lay);
    push_rho_block(&mut p, &lay, &inst.cones, libm::sqrt(inst.stats.sigma2), inst.req.p_max);
    push_mccormick(&mut p, &lay);
    for l in 0..l_n {
        let d = lay.diag(l);
        p.lower[d] = 0.0;
        p.upper[d] = if b[l] { 0.0 } else { 1.0 };
        if b[l] {
            for k in 0..k_n {
                p.upper[lay.rho(l, k)] = 0.0;
            }
            for j in 0..l_n {
                p.upper[lay.pair(l, j)] = 0.0;
            }
        }
    }
    let row = linear_sensing_constraint(&inst.g, &FixedSide::Rx(b.to_vec()), inst.req.eta, inst.req.p_s);
    push_sensing(&mut p, &lay, &row);
    let binaries = lay.binaries();
    Ok((MipProblem::new(p, binaries, true), lay))
}

/// Receiver selection for a fixed transmitter set: minimize the number of
/// receivers subject to mode exclusivity, the linearization of `B = bbᵀ` and
/// the sensing row.
pub fn rx_problem(g: &GMatrices, a: &[bool], eta: f64, p_s: f64) -> Result<(MipProblem, SubproblemLayout), ModeError> {
    let l_n = g.n_aps();
    check_len(a, l_n)?;
    let lay = SubproblemLayout { n_aps: l_n, n_ues: 0, with_rho: false, full_matrix: true };
    let mut p = ConicProblem::new(lay.n_vars());
    unit_objective(&mut p, &lay);
    push_mccormick(&mut p, &lay);
    for l in 0..l_n {
        let d = lay.diag(l);
        p.lower[d] = 0.0;
        p.upper[d] = if a[l] { 0.0 } else { 1.0 };
        if a[l] {
            for j in 0..l_n {
                p.upper[lay.pair(l, j)] = 0.0;
            }
        }
    }
    let row = linear_sensing_constraint(g, &FixedSide::Tx(a.to_vec()), eta, p_s);
    push_sensing(&mut p, &lay, &row);
    let binaries = lay.binaries();
    Ok((MipProblem::new(p, binaries, true), lay))
}

/// Communication-only transmitter selection: minimize `Σ a_l` subject to the
/// power caps and every SINR cone.
pub fn comm_problem(inst: &Instance) -> (MipProblem, SubproblemLayout) {
    let lay = SubproblemLayout { n_aps: inst.n_aps(), n_ues: inst.n_ues(), with_rho: true, full_matrix: false };
    let mut p = ConicProblem::new(lay.n_vars());
    unit_objective(&mut p, &lay);
    push_rho_block(&mut p, &lay, &inst.cones, libm::sqrt(inst.stats.sigma2), inst.req.p_max);
    let binaries = lay.binaries();
    (MipProblem::new(p, binaries, true), lay)
}

fn run(mip: &MipProblem, settings: &SolverSettings, stage: Stage) -> Result<(Vec<f64>, SolveOutcome), ModeError> {
    let out = branch_and_bound(mip, settings)?;
    match (out.status, &out.x) {
        (SolveStatus::Optimal, Some(x)) => Ok((x.clone(), out)),
        (SolveStatus::Infeasible, _) => Err(ModeError::Infeasible { stage }),
        (status, _) => Err(ModeError::Solver { stage, status }),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TxSolution {
    pub a: Vec<bool>,
    pub powers: PowerVector,
    pub outcome: SolveOutcome,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RxSolution {
    pub b: Vec<bool>,
    pub outcome: SolveOutcome,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CommSolution {
    pub a: Vec<bool>,
    pub powers: PowerVector,
    pub outcome: SolveOutcome,
}

pub fn solve_tx_subproblem(inst: &Instance, b: &[bool], settings: &SolverSettings) -> Result<TxSolution, ModeError> {
    let (mip, lay) = tx_problem(inst, b)?;
    let (x, outcome) = run(&mip, settings, Stage::Tx)?;
    Ok(TxSolution { a: lay.read_mask(&x), powers: lay.read_rho(&x), outcome })
}

pub fn solve_rx_subproblem(
    g: &GMatrices,
    a: &[bool],
    eta: f64,
    p_s: f64,
    settings: &SolverSettings,
) -> Result<RxSolution, ModeError> {
    let (mip, lay) = rx_problem(g, a, eta, p_s)?;
    let (x, outcome) = run(&mip, settings, Stage::Rx)?;
    Ok(RxSolution { b: lay.read_mask(&x), outcome })
}

pub fn solve_comm_subproblem(inst: &Instance, settings: &SolverSettings) -> Result<CommSolution, ModeError> {
    let (mip, lay) = comm_problem(inst);
    let (x, outcome) = run(&mip, settings, Stage::Comm)?;
    Ok(CommSolution { a: lay.read_mask(&x), powers: lay.read_rho(&x), outcome })
}
