use alloc::collections::btree_map::Entry;
use alloc::collections::BTreeMap;
use alloc::vec;
use alloc::vec::Vec;
use core::cmp::Ordering;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::problems::{solve_comm_subproblem, solve_rx_subproblem, solve_tx_subproblem};
use super::{AlgoReport, Algorithm, Instance, ModeAssignment, ModeError, ModeSettings, Stage};
use crate::comm::PowerVector;
use crate::solver::{min_power_with_cones, SolveStatus};

/// Default initial receiver count: `max(2, ⌈L/4⌉)`, clipped to `L`.
pub fn default_r_init(n_aps: usize) -> usize {
    n_aps.div_ceil(4).max(2).min(n_aps)
}

struct Stopwatch {
    clock: Option<fn() -> f64>,
    start: f64,
}

impl Stopwatch {
    fn start(settings: &ModeSettings) -> Self {
        let clock = settings.solver.clock;
        Self { clock, start: clock.map_or(0.0, |c| c()) }
    }

    fn elapsed(&self) -> Option<f64> {
        self.clock.map(|c| c() - self.start)
    }
}

fn draw_rx(rng: &mut ChaCha8Rng, n_aps: usize) -> Vec<bool> {
    loop {
        let b: Vec<bool> = (0..n_aps).map(|_| rng.random_bool(0.5)).collect();
        if b.iter().any(|&v| v) {
            return b;
        }
    }
}

/// Alternates transmitter selection for the current receivers and receiver
/// selection for the resulting transmitters, starting from a random
/// receiver draw. A draw that leaves the transmitter problem infeasible is
/// replaced by a fresh one. Stops when an iterate repeats or after
/// `max_iter` passes; in the latter case the last feasible iterate is
/// returned with `converged = false`.
pub fn alternating(inst: &Instance, settings: &ModeSettings) -> Result<AlgoReport, ModeError> {
    let watch = Stopwatch::start(settings);
    let l_n = inst.n_aps();
    let mut rng = ChaCha8Rng::seed_from_u64(settings.seed);
    let mut b = draw_rx(&mut rng, l_n);
    let mut prev: Option<(Vec<bool>, Vec<bool>)> = None;
    let mut last: Option<(Vec<bool>, Vec<bool>, PowerVector)> = None;
    let (mut passes, mut restarts, mut nodes) = (0, 0, 0);
    let mut converged = false;
    while !converged && passes < settings.max_iter.max(1) {
        passes += 1;
        let step = solve_tx_subproblem(inst, &b, &settings.solver).and_then(|tx| {
            let rx = solve_rx_subproblem(&inst.g, &tx.a, inst.req.eta, inst.req.p_s, &settings.solver)?;
            Ok((tx, rx))
        });
        let (tx, rx) = match step {
            Ok(v) => v,
            Err(ModeError::Infeasible { .. }) => {
                restarts += 1;
                if restarts >= settings.max_restarts {
                    return Err(ModeError::ExhaustedRestarts { restarts, iterations: passes });
                }
                b = draw_rx(&mut rng, l_n);
                prev = None;
                continue;
            }
            Err(e) => return Err(e),
        };
        nodes += tx.outcome.nodes + rx.outcome.nodes;
        let cur = (tx.a.clone(), rx.b.clone());
        converged = prev.as_ref() == Some(&cur);
        b = rx.b.clone();
        prev = Some(cur);
        last = Some((tx.a, rx.b, tx.powers));
    }
    let (a, b, powers) = last.ok_or(ModeError::ExhaustedRestarts { restarts, iterations: passes })?;
    let mut report = AlgoReport::new(Algorithm::Alternating, ModeAssignment::from_masks(&a, &b, &powers), inst);
    report.iterations = passes;
    report.restarts = restarts;
    report.converged = converged;
    report.nodes = nodes;
    report.elapsed_s = watch.elapsed();
    Ok(report)
}

/// Communication-only transmitter selection followed by receiver selection
/// for the chosen transmitters.
pub fn sequential(inst: &Instance, settings: &ModeSettings) -> Result<AlgoReport, ModeError> {
    let watch = Stopwatch::start(settings);
    let comm = solve_comm_subproblem(inst, &settings.solver)?;
    let rx = solve_rx_subproblem(&inst.g, &comm.a, inst.req.eta, inst.req.p_s, &settings.solver)?;
    let assign = ModeAssignment::from_masks(&comm.a, &rx.b, &comm.powers);
    let mut report = AlgoReport::new(Algorithm::Sequential, assign, inst);
    report.iterations = 1;
    report.nodes = comm.outcome.nodes + rx.outcome.nodes;
    report.elapsed_s = watch.elapsed();
    Ok(report)
}

fn order_by(values: &[f64], descending: bool) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&i, &j| {
        let c = values[i].partial_cmp(&values[j]).unwrap_or(Ordering::Equal);
        let c = if descending { c.reverse() } else { c };
        c.then(i.cmp(&j))
    });
    idx
}

struct Cursor {
    order: Vec<usize>,
    next: usize,
}

impl Cursor {
    /// Next AP in order that holds neither mode.
    fn take(&mut self, a: &[bool], b: &[bool]) -> Option<usize> {
        while self.next < self.order.len() {
            let l = self.order[self.next];
            self.next += 1;
            if !a[l] && !b[l] {
                return Some(l);
            }
        }
        None
    }
}

/// Greedy selection: seed the `R` APs nearest the target as receivers, add
/// transmitters by decreasing gain until the power problem is feasible and
/// the CRLB meets its threshold (falling back to further receivers once no
/// transmitter is left), then drop the farthest receivers while the CRLB
/// still holds.
pub fn heuristic(inst: &Instance, settings: &ModeSettings) -> Result<AlgoReport, ModeError> {
    let watch = Stopwatch::start(settings);
    let l_n = inst.n_aps();
    let fail = ModeError::Infeasible { stage: Stage::Heuristic };
    let rx_order = order_by(&inst.target_distance, false);
    let r = settings.r_init.unwrap_or_else(|| default_r_init(l_n)).min(l_n);
    let mut a = vec![false; l_n];
    let mut b = vec![false; l_n];
    for &l in &rx_order[..r] {
        b[l] = true;
    }
    let mut tx_cur = Cursor { order: order_by(&inst.ap_gain, true), next: 0 };
    let mut rx_cur = Cursor { order: rx_order, next: r };
    let mut solves = 0;

    let first = tx_cur.take(&a, &b).ok_or(fail.clone())?;
    a[first] = true;
    let mut powers: Option<PowerVector> = None;
    loop {
        while powers.is_none() {
            let out = min_power_with_cones(&inst.stats, &inst.cones, &a, inst.req.p_max, &settings.solver)?;
            solves += 1;
            match out.status {
                SolveStatus::Optimal => powers = out.powers,
                SolveStatus::Infeasible => {
                    let l = tx_cur.take(&a, &b).ok_or(fail.clone())?;
                    a[l] = true;
                }
                status => return Err(ModeError::Solver { stage: Stage::Heuristic, status }),
            }
        }
        if inst.crlb(&a, &b) <= inst.req.eta {
            break;
        }
        if let Some(l) = tx_cur.take(&a, &b) {
            a[l] = true;
        } else if let Some(l) = rx_cur.take(&a, &b) {
            b[l] = true;
        } else {
            return Err(fail);
        }
    }

    let mut rx_by_distance: Vec<usize> = rx_cur.order.iter().copied().filter(|&l| b[l]).collect();
    while let Some(l) = rx_by_distance.pop() {
        b[l] = false;
        if inst.crlb(&a, &b) > inst.req.eta {
            b[l] = true;
            break;
        }
    }

    let powers = powers.ok_or(fail)?;
    let mut report = AlgoReport::new(Algorithm::Heuristic, ModeAssignment::from_masks(&a, &b, &powers), inst);
    report.iterations = 1;
    report.nodes = solves;
    report.elapsed_s = watch.elapsed();
    Ok(report)
}

fn mask_bits(mask: &[bool]) -> u32 {
    mask.iter().enumerate().fold(0, |acc, (l, &v)| acc | ((v as u32) << l))
}

/// Enumerates all `3^L` mode assignments and returns the one with the fewest
/// active APs that meets the CRLB threshold and admits a feasible power
/// allocation. Ties go to the lexicographically smallest `(a, b)`.
pub fn exhaustive_oracle(inst: &Instance, settings: &ModeSettings) -> Result<AlgoReport, ModeError> {
    let watch = Stopwatch::start(settings);
    let l_n = inst.n_aps();
    if l_n > settings.l_cap || l_n >= 20 {
        return Err(ModeError::TooLarge { n_aps: l_n, cap: settings.l_cap.min(19) });
    }
    let total = 3usize.pow(l_n as u32);
    let mut p1: BTreeMap<u32, Option<PowerVector>> = BTreeMap::new();
    let mut best: Option<(usize, Vec<bool>, Vec<bool>)> = None;
    let mut a = vec![false; l_n];
    let mut b = vec![false; l_n];
    for code in 0..total {
        let mut c = code;
        for l in 0..l_n {
            a[l] = c % 3 == 1;
            b[l] = c % 3 == 2;
            c /= 3;
        }
        let count = a.iter().chain(b.iter()).filter(|&&v| v).count();
        if let Some((bc, ba, bb)) = &best {
            if count > *bc || (count == *bc && (&a, &b) >= (ba, bb)) {
                continue;
            }
        }
        if inst.crlb(&a, &b) > inst.req.eta {
            continue;
        }
        let entry = match p1.entry(mask_bits(&a)) {
            Entry::Occupied(e) => e.into_mut(),
            Entry::Vacant(e) => {
                let out = min_power_with_cones(&inst.stats, &inst.cones, &a, inst.req.p_max, &settings.solver)?;
                e.insert(match out.status {
                    SolveStatus::Optimal => out.powers,
                    SolveStatus::Infeasible => None,
                    status => return Err(ModeError::Solver { stage: Stage::Oracle, status }),
                })
            }
        };
        if entry.is_some() {
            best = Some((count, a.clone(), b.clone()));
        }
    }
    let (_, a, b) = best.ok_or(ModeError::Infeasible { stage: Stage::Oracle })?;
    let powers = p1[&mask_bits(&a)].clone().ok_or(ModeError::Infeasible { stage: Stage::Oracle })?;
    let mut report = AlgoReport::new(Algorithm::Oracle, ModeAssignment::from_masks(&a, &b, &powers), inst);
    report.iterations = 1;
    report.nodes = p1.len();
    report.elapsed_s = watch.elapsed();
    Ok(report)
}
