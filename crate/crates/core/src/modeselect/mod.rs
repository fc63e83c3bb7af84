//! AP mode selection: each AP either transmits (ISAC TX), receives echoes
//! (sensing RX) or is switched off. Three selection strategies, an
//! exhaustive oracle, and a validator for candidate assignments.

mod algorithms;
mod problems;

use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::comm::{compute_precoders, estimate_stats, sinr, sinr_cones, CommError, CommStats, PowerVector, PrecoderKind, SinrCone};
use crate::linalg::Matrix;
use crate::scenario::{ap_target_ranges, build_scenario, generate_channels, ChannelEnsemble, Scenario, ScenarioConfig, ScenarioError};
use crate::sensing::{crlb_or_infinity, geometry_matrices, GMatrices, SensingError};
use crate::solver::{PowerError, SolveStatus, SolverError, SolverSettings};

pub use algorithms::{alternating, default_r_init, exhaustive_oracle, heuristic, sequential};
pub use problems::{
    comm_problem, rx_problem, solve_comm_subproblem, solve_rx_subproblem, solve_tx_subproblem, tx_problem,
    CommSolution, RxSolution, SubproblemLayout, TxSolution,
};

/// Relative slack used by [`validate`].
pub const VALIDATE_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    Alternating,
    Sequential,
    Heuristic,
    Oracle,
}

impl Algorithm {
    pub const ALL: [Algorithm; 4] = [Self::Alternating, Self::Sequential, Self::Heuristic, Self::Oracle];

    pub fn name(self) -> &'static str {
        match self {
            Self::Alternating => "alternating",
            Self::Sequential => "sequential",
            Self::Heuristic => "heuristic",
            Self::Oracle => "oracle",
        }
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Algorithm {
    type Err = ModeError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL.into_iter().find(|a| a.name() == s).ok_or(ModeError::UnknownAlgorithm)
    }
}

/// Subproblem or algorithm stage, used to label infeasibility.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    /// Transmitter selection for fixed receivers.
    Tx,
    /// Receiver selection for fixed transmitters.
    Rx,
    /// Communication-only transmitter selection.
    Comm,
    Heuristic,
    Oracle,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Stage::Tx => "tx",
            Stage::Rx => "rx",
            Stage::Comm => "comm",
            Stage::Heuristic => "heuristic",
            Stage::Oracle => "oracle",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModeError {
    #[error("infeasible at stage {stage}")]
    Infeasible { stage: Stage },
    #[error("no feasible receiver draw after {restarts} restarts")]
    ExhaustedRestarts { restarts: usize, iterations: usize },
    #[error("{n_aps} APs exceeds the enumeration cap of {cap}")]
    TooLarge { n_aps: usize, cap: usize },
    #[error("solver stopped with {status:?} at stage {stage}")]
    Solver { stage: Stage, status: SolveStatus },
    #[error("unknown algorithm name")]
    UnknownAlgorithm,
    #[error("dimension mismatch: {0}")]
    Dimension(&'static str),
    #[error(transparent)]
    Comm(#[from] CommError),
    #[error(transparent)]
    Sensing(#[from] SensingError),
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error(transparent)]
    Problem(#[from] SolverError),
    #[error(transparent)]
    Power(#[from] PowerError),
}

/// Communication and sensing thresholds plus power budgets.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Requirements {
    /// Linear SINR threshold.
    pub gamma_c: f64,
    /// CRLB threshold.
    pub eta: f64,
    pub p_s: f64,
    pub p_max: f64,
}

/// Everything the selection algorithms read.
#[derive(Debug, Clone)]
pub struct Instance {
    pub stats: CommStats,
    pub cones: Vec<SinrCone>,
    pub g: GMatrices,
    pub req: Requirements,
    /// `g_l`, used by the heuristic's transmitter ordering.
    pub ap_gain: Vec<f64>,
    /// Horizontal AP-target distance, used by the heuristic's receiver ordering.
    pub target_distance: Vec<f64>,
}

impl Instance {
    pub fn new(
        stats: CommStats,
        g: GMatrices,
        req: Requirements,
        ap_gain: Vec<f64>,
        target_distance: Vec<f64>,
    ) -> Result<Self, ModeError> {
        stats.check_dimensions()?;
        let l = stats.n_aps();
        if g.n_aps() != l || ap_gain.len() != l || target_distance.len() != l {
            return Err(ModeError::Dimension("AP count differs between inputs"));
        }
        let cones = sinr_cones(&stats, req.gamma_c)?;
        Ok(Self { stats, cones, g, req, ap_gain, target_distance })
    }

    pub fn from_scenario(
        scenario: &Scenario,
        ensemble: &ChannelEnsemble,
        stats: CommStats,
        g: GMatrices,
        gamma_c: f64,
        eta: f64,
    ) -> Result<Self, ModeError> {
        let req = Requirements { gamma_c, eta, p_s: scenario.p_s_watts, p_max: scenario.p_max_watts };
        let ranges = ap_target_ranges(scenario)?;
        Self::new(stats, g, req, ensemble.ap_gain.clone(), ranges)
    }

    /// Scenario, channel ensemble of `t_realizations` draws, MR statistics
    /// and sensing geometry in one go.
    pub fn build(config: &ScenarioConfig, t_realizations: usize, gamma_c: f64, eta: f64) -> Result<(Scenario, Self), ModeError> {
        let scenario = build_scenario(config)?;
        let ensemble = generate_channels(&scenario, t_realizations)?;
        let precoders = compute_precoders(&ensemble, PrecoderKind::MaximumRatio)?;
        let stats = estimate_stats(&ensemble, &precoders, scenario.noise_power_comm);
        let g = geometry_matrices(&scenario)?;
        let inst = Self::from_scenario(&scenario, &ensemble, stats, g, gamma_c, eta)?;
        Ok((scenario, inst))
    }

    /// Same instance with another CRLB threshold.
    pub fn with_eta(&self, eta: f64) -> Self {
        let mut out = self.clone();
        out.req.eta = eta;
        out
    }

    pub fn n_aps(&self) -> usize {
        self.stats.n_aps()
    }

    pub fn n_ues(&self) -> usize {
        self.stats.n_ues()
    }

    pub fn crlb(&self, a: &[bool], b: &[bool]) -> f64 {
        crlb_or_infinity(&self.g, a, b, self.req.p_s)
    }
}

/// Per-AP mode flags and the `L×K` power matrix `p_{lk}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModeAssignment {
    pub a: Vec<u8>,
    pub b: Vec<u8>,
    pub powers: Matrix,
}

impl ModeAssignment {
    pub fn off(n_aps: usize, n_ues: usize) -> Self {
        Self { a: alloc::vec![0; n_aps], b: alloc::vec![0; n_aps], powers: Matrix::zeros(n_aps, n_ues) }
    }

    pub fn from_masks(a: &[bool], b: &[bool], rho: &PowerVector) -> Self {
        Self {
            a: a.iter().map(|&v| v as u8).collect(),
            b: b.iter().map(|&v| v as u8).collect(),
            powers: rho.to_powers(),
        }
    }

    pub fn tx_mask(&self) -> Vec<bool> {
        self.a.iter().map(|&v| v != 0).collect()
    }

    pub fn rx_mask(&self) -> Vec<bool> {
        self.b.iter().map(|&v| v != 0).collect()
    }

    pub fn n_tx(&self) -> usize {
        self.a.iter().filter(|&&v| v != 0).count()
    }

    pub fn n_rx(&self) -> usize {
        self.b.iter().filter(|&&v| v != 0).count()
    }

    pub fn total(&self) -> usize {
        self.n_tx() + self.n_rx()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConstraintKind {
    Dimension,
    Binary,
    ModeExclusive,
    PowerSign,
    PowerCap,
    Sinr,
    Sensing,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckRow {
    pub kind: ConstraintKind,
    /// AP or UE index, where the constraint is per-AP or per-UE.
    pub index: Option<usize>,
    pub value: f64,
    pub limit: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub rows: Vec<CheckRow>,
}

impl ValidationReport {
    pub fn all_pass(&self) -> bool {
        self.rows.iter().all(|r| r.pass)
    }

    pub fn failures(&self) -> impl Iterator<Item = &CheckRow> {
        self.rows.iter().filter(|r| !r.pass)
    }

    pub fn kind_pass(&self, kind: ConstraintKind) -> bool {
        self.rows.iter().filter(|r| r.kind == kind).all(|r| r.pass)
    }
}

/// Checks an assignment against every constraint of the joint problem and
/// reports each row with its value and limit. Never fails.
pub fn validate(assign: &ModeAssignment, stats: &CommStats, g: &GMatrices, req: &Requirements) -> ValidationReport {
    let (l_n, k_n) = (stats.n_aps(), stats.n_ues());
    let mut rows = Vec::new();
    let dims_ok = assign.a.len() == l_n
        && assign.b.len() == l_n
        && assign.powers.rows == l_n
        && assign.powers.cols == k_n
        && g.n_aps() == l_n;
    if !dims_ok {
        rows.push(CheckRow { kind: ConstraintKind::Dimension, index: None, value: assign.a.len() as f64, limit: l_n as f64, pass: false });
        return ValidationReport { rows };
    }
    for l in 0..l_n {
        let ok = assign.a[l] <= 1 && assign.b[l] <= 1;
        rows.push(CheckRow {
            kind: ConstraintKind::Binary,
            index: Some(l),
            value: assign.a[l].max(assign.b[l]) as f64,
            limit: 1.0,
            pass: ok,
        });
    }
    for l in 0..l_n {
        let v = assign.a[l] as f64 + assign.b[l] as f64;
        rows.push(CheckRow { kind: ConstraintKind::ModeExclusive, index: Some(l), value: v, limit: 1.0, pass: v <= 1.0 });
    }
    for l in 0..l_n {
        let row = assign.powers.row(l);
        let min = row.iter().copied().fold(f64::INFINITY, f64::min);
        let min = if k_n == 0 { 0.0 } else { min };
        rows.push(CheckRow { kind: ConstraintKind::PowerSign, index: Some(l), value: min, limit: 0.0, pass: min >= 0.0 });
    }
    for l in 0..l_n {
        let total: f64 = assign.powers.row(l).iter().sum();
        let limit = if assign.a[l] != 0 { req.p_max } else { 0.0 };
        let pass = total <= limit + VALIDATE_TOL * req.p_max;
        rows.push(CheckRow { kind: ConstraintKind::PowerCap, index: Some(l), value: total, limit, pass });
    }
    let pv = PowerVector::from_powers(&assign.powers);
    for k in 0..k_n {
        let s = sinr(stats, &pv, k);
        let pass = s >= req.gamma_c * (1.0 - VALIDATE_TOL);
        rows.push(CheckRow { kind: ConstraintKind::Sinr, index: Some(k), value: s, limit: req.gamma_c, pass });
    }
    let crlb = crlb_or_infinity(g, &assign.tx_mask(), &assign.rx_mask(), req.p_s);
    rows.push(CheckRow {
        kind: ConstraintKind::Sensing,
        index: None,
        value: crlb,
        limit: req.eta,
        pass: crlb <= req.eta * (1.0 + VALIDATE_TOL),
    });
    ValidationReport { rows }
}

/// Algorithm output plus bookkeeping.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlgoReport {
    pub algorithm: Algorithm,
    pub assignment: ModeAssignment,
    pub n_tx: usize,
    pub n_rx: usize,
    pub total: usize,
    pub iterations: usize,
    pub restarts: usize,
    /// Alternating only: the last two iterates coincide.
    pub converged: bool,
    /// Branch-and-bound nodes (or P1 solves) spent.
    pub nodes: usize,
    pub elapsed_s: Option<f64>,
    pub sinr_ok: bool,
    pub sensing_ok: bool,
}

impl AlgoReport {
    pub(crate) fn new(algorithm: Algorithm, assignment: ModeAssignment, inst: &Instance) -> Self {
        let report = validate(&assignment, &inst.stats, &inst.g, &inst.req);
        Self {
            algorithm,
            n_tx: assignment.n_tx(),
            n_rx: assignment.n_rx(),
            total: assignment.total(),
            assignment,
            iterations: 0,
            restarts: 0,
            converged: true,
            nodes: 0,
            elapsed_s: None,
            sinr_ok: report.kind_pass(ConstraintKind::Sinr),
            sensing_ok: report.kind_pass(ConstraintKind::Sensing),
        }
    }
}

/// Knobs shared by the selection algorithms.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(default)]
pub struct ModeSettings {
    pub solver: SolverSettings,
    /// Iteration budget `I` of the alternating scheme.
    pub max_iter: usize,
    pub max_restarts: usize,
    /// Initial receiver count `R` of the heuristic; `None` picks
    /// [`default_r_init`].
    pub r_init: Option<usize>,
    /// Largest AP count the exhaustive oracle accepts.
    pub l_cap: usize,
    /// Seed of the alternating scheme's random receiver draws.
    pub seed: u64,
}

impl Default for ModeSettings {
    fn default() -> Self {
        Self { solver: SolverSettings::default(), max_iter: 100, max_restarts: 50, r_init: None, l_cap: 10, seed: 0 }
    }
}
