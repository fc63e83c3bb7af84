use std::fmt;
use std::sync::OnceLock;
use std::time::Instant;

use apmode_core::comm::db_to_linear;
use apmode_core::modeselect::{
    alternating, exhaustive_oracle, heuristic, sequential, validate, AlgoReport, Algorithm, Instance, ModeAssignment,
    ModeError, ModeSettings,
};
use apmode_core::scenario::{build_scenario, Point3, ScenarioConfig};
use apmode_core::sensing::{crlb_or_infinity, geometry_matrices, GMatrices};
use apmode_core::solver::SolveStatus;
use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::Config;

const POOL_STREAM: u64 = 0x9e37_79b9;

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("scenario setup failed: {0}")]
    Setup(#[from] ModeError),
    #[error("no RCS draw gives a finite CRLB for calibration")]
    Calibration,
}

/// Seconds since the first call; used as the solver clock.
pub fn monotonic_seconds() -> f64 {
    static START: OnceLock<Instant> = OnceLock::new();
    START.get_or_init(Instant::now).elapsed().as_secs_f64()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrialStatus {
    Ok,
    Infeasible,
    ExhaustedRestarts,
    Timeout,
    SolverFailure,
    Error,
}

impl fmt::Display for TrialStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Self::Ok => "ok",
            Self::Infeasible => "infeasible",
            Self::ExhaustedRestarts => "exhausted_restarts",
            Self::Timeout => "timeout",
            Self::SolverFailure => "solver_failure",
            Self::Error => "error",
        };
        f.write_str(s)
    }
}

impl TrialStatus {
    pub fn of(err: &ModeError) -> Self {
        match err {
            ModeError::Infeasible { .. } => Self::Infeasible,
            ModeError::ExhaustedRestarts { .. } => Self::ExhaustedRestarts,
            ModeError::Solver { status: SolveStatus::TimeLimit, .. } => Self::Timeout,
            ModeError::Solver { .. } => Self::SolverFailure,
            _ => Self::Error,
        }
    }
}

/// One row per (trial, algorithm, UE count, threshold, target).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRecord {
    pub trial: usize,
    pub seed: u64,
    pub algorithm: Algorithm,
    pub k: usize,
    pub target: [f64; 2],
    pub eta: f64,
    pub gamma_c_db: f64,
    pub n_tx: usize,
    pub n_rx: usize,
    pub total: usize,
    /// The returned assignment passes every constraint check.
    pub feasible: bool,
    pub status: TrialStatus,
    pub iterations: usize,
    pub restarts: usize,
    pub converged: bool,
    pub runtime_s: f64,
}

/// Emitted assignment with enough context to rebuild its instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssignmentRecord {
    pub trial: usize,
    pub seed: u64,
    pub algorithm: Algorithm,
    pub k: usize,
    pub target: [f64; 2],
    pub eta: f64,
    pub gamma_c_db: f64,
    pub assignment: ModeAssignment,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentOutput {
    /// Thresholds used for each target, in sweep order.
    pub etas: Vec<([f64; 2], Vec<f64>)>,
    pub records: Vec<ResultRecord>,
    pub assignments: Vec<AssignmentRecord>,
}

/// Deployment shared by all trials: fixed AP positions and the candidate UE
/// positions the per-trial UEs are drawn from.
#[derive(Debug, Clone)]
pub struct TrialContext {
    pub config: Config,
    pub aps: Vec<Point3>,
    pub pool: Vec<Point3>,
}

impl TrialContext {
    pub fn new(config: &Config) -> Result<Self, ModeError> {
        let sc = &config.scenario;
        let pool = match &sc.ue_positions {
            Some(p) => p.clone(),
            None => {
                let mut rng = ChaCha8Rng::seed_from_u64(sc.rng_seed);
                rng.set_stream(POOL_STREAM);
                (0..config.experiment.ue_pool).map(|_| sc.layout.sample_ue(&mut rng)).collect()
            }
        };
        let aps = match (&sc.ap_positions, config.experiment.ap_candidates) {
            (Some(p), _) => p.clone(),
            (None, Some(m)) => {
                let candidates = build_scenario(&ScenarioConfig { ue_positions: None, n_ues: 1, n_aps: m, ..sc.clone() })?.ap_positions;
                strongest_aps(sc, &candidates, &pool, sc.n_aps)
            }
            (None, None) => build_scenario(&ScenarioConfig { ue_positions: None, n_ues: 1, ..sc.clone() })?.ap_positions,
        };
        Ok(Self { config: config.clone(), aps, pool })
    }

    /// Scenario config of one trial: `k` UEs drawn from the pool and fresh
    /// fading, blockage and RCS draws, all keyed by `seed`.
    pub fn scenario_config(&self, target: [f64; 2], k: usize, seed: u64) -> ScenarioConfig {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(POOL_STREAM);
        let ues = sample(&mut rng, self.pool.len(), k).into_iter().map(|i| self.pool[i]).collect();
        ScenarioConfig {
            n_ues: k,
            n_aps: self.aps.len(),
            ap_positions: Some(self.aps.clone()),
            ue_positions: Some(ues),
            target,
            rng_seed: seed,
            ..self.config.scenario.clone()
        }
    }

    pub fn instance(&self, target: [f64; 2], k: usize, seed: u64, gamma_c_db: f64, eta: f64) -> Result<Instance, ModeError> {
        let cfg = self.scenario_config(target, k, seed);
        Instance::build(&cfg, self.config.experiment.t_realizations, db_to_linear(gamma_c_db), eta).map(|(_, i)| i)
    }

    fn geometry(&self, target: [f64; 2], seed: u64) -> Result<(GMatrices, f64), ModeError> {
        let scenario = build_scenario(&self.scenario_config(target, 1, seed))?;
        Ok((geometry_matrices(&scenario)?, scenario.p_s_watts))
    }

    /// Loose and tight thresholds for `target` (explicit ones if configured).
    pub fn thresholds(&self, target: [f64; 2]) -> Result<Vec<f64>, ExperimentError> {
        let e = &self.config.experiment;
        if !e.eta.is_empty() {
            return Ok(e.eta.clone());
        }
        let c = &e.calibration;
        let mut best = Vec::with_capacity(c.samples);
        for s in 0..c.samples {
            let (g, p_s) = self.geometry(target, e.base_seed.wrapping_add(s as u64))?;
            let v = best_all_on_crlb(&g, p_s);
            if v.is_finite() {
                best.push(v);
            }
        }
        if best.is_empty() {
            return Err(ExperimentError::Calibration);
        }
        best.sort_by(f64::total_cmp);
        let loose = c.loose_scale * quantile(&best, c.quantile);
        Ok(vec![loose, loose * c.tight_ratio])
    }
}

/// The `n` candidates with the largest unblocked mean gain summed over the
/// UE pool, kept in candidate order.
pub fn strongest_aps(sc: &ScenarioConfig, candidates: &[Point3], pool: &[Point3], n: usize) -> Vec<Point3> {
    let score: Vec<f64> = candidates
        .iter()
        .map(|ap| pool.iter().map(|ue| sc.channel.mean_gain(sc.carrier_freq_hz, ap.distance(ue), false)).sum())
        .collect();
    let mut order: Vec<usize> = (0..candidates.len()).collect();
    order.sort_by(|&i, &j| score[j].total_cmp(&score[i]).then(i.cmp(&j)));
    order.truncate(n);
    order.sort_unstable();
    order.into_iter().map(|i| candidates[i]).collect()
}

/// Smallest CRLB over every split of all APs into transmitters and
/// receivers; no assignment can do better.
pub fn best_all_on_crlb(g: &GMatrices, p_s: f64) -> f64 {
    let l = g.n_aps();
    let mut best = f64::INFINITY;
    let mut a = vec![false; l];
    let mut b = vec![false; l];
    for mask in 1..(1u32 << l) - 1 {
        for i in 0..l {
            a[i] = mask >> i & 1 == 1;
            b[i] = !a[i];
        }
        best = best.min(crlb_or_infinity(g, &a, &b, p_s));
    }
    best
}

/// Linear-interpolation quantile of sorted data.
pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

pub fn run_algorithm(algo: Algorithm, inst: &Instance, settings: &ModeSettings) -> Result<AlgoReport, ModeError> {
    match algo {
        Algorithm::Alternating => alternating(inst, settings),
        Algorithm::Sequential => sequential(inst, settings),
        Algorithm::Heuristic => heuristic(inst, settings),
        Algorithm::Oracle => exhaustive_oracle(inst, settings),
    }
}

/// Runs every configured (target, UE count, trial, threshold, algorithm)
/// combination. Per-trial failures become records; only deployment setup
/// and threshold calibration abort the sweep.
pub fn run_experiment(config: &Config) -> Result<ExperimentOutput, ExperimentError> {
    let ctx = TrialContext::new(config)?;
    let e = &config.experiment;
    let mut out = ExperimentOutput { etas: Vec::new(), records: Vec::new(), assignments: Vec::new() };
    for target in config.targets() {
        let etas = ctx.thresholds(target)?;
        for k in config.k_values() {
            for trial in 0..e.trials {
                let seed = e.base_seed.wrapping_add(trial as u64);
                let base = ctx.instance(target, k, seed, e.gamma_c_db, etas[0]);
                for &eta in &etas {
                    for &algo in &e.algorithms {
                        let mut rec = ResultRecord {
                            trial,
                            seed,
                            algorithm: algo,
                            k,
                            target,
                            eta,
                            gamma_c_db: e.gamma_c_db,
                            n_tx: 0,
                            n_rx: 0,
                            total: 0,
                            feasible: false,
                            status: TrialStatus::Error,
                            iterations: 0,
                            restarts: 0,
                            converged: false,
                            runtime_s: 0.0,
                        };
                        if let Ok(inst) = &base {
                            let inst = inst.with_eta(eta);
                            let mut settings = e.mode;
                            settings.seed = seed;
                            settings.solver.time_limit_s = e.time_limit_s;
                            settings.solver.clock = Some(monotonic_seconds);
                            let t0 = Instant::now();
                            let res = run_algorithm(algo, &inst, &settings);
                            rec.runtime_s = t0.elapsed().as_secs_f64();
                            match res {
                                Ok(r) => {
                                    let report = validate(&r.assignment, &inst.stats, &inst.g, &inst.req);
                                    rec.n_tx = r.n_tx;
                                    rec.n_rx = r.n_rx;
                                    rec.total = r.total;
                                    rec.feasible = report.all_pass();
                                    rec.status = TrialStatus::Ok;
                                    rec.iterations = r.iterations;
                                    rec.restarts = r.restarts;
                                    rec.converged = r.converged;
                                    out.assignments.push(AssignmentRecord {
                                        trial,
                                        seed,
                                        algorithm: algo,
                                        k,
                                        target,
                                        eta,
                                        gamma_c_db: e.gamma_c_db,
                                        assignment: r.assignment,
                                    });
                                }
                                Err(err) => rec.status = TrialStatus::of(&err),
                            }
                        }
                        out.records.push(rec);
                    }
                }
            }
        }
        out.etas.push((target, etas));
    }
    Ok(out)
}
