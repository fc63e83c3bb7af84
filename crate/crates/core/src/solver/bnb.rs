use alloc::collections::BinaryHeap;
use alloc::vec;
use alloc::vec::Vec;
use core::cmp::Ordering;

use super::ipm::{solve_relaxation, RelaxStatus};
use super::{presolve_certificate, BoundRecord, Certificate, MipProblem, SolveOutcome, SolveStatus, SolverError, SolverSettings};

struct Node {
    bound: f64,
    id: usize,
    /// Per binary: -1 free, 0 or 1 fixed.
    fix: Vec<i8>,
}

impl PartialEq for Node {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Node {}

impl PartialOrd for Node {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Node {
    // BinaryHeap is a max-heap: smallest bound, then oldest id, pops first.
    fn cmp(&self, other: &Self) -> Ordering {
        other.bound.total_cmp(&self.bound).then_with(|| other.id.cmp(&self.id))
    }
}

struct Search<'a> {
    mip: &'a MipProblem,
    settings: &'a SolverSettings,
    incumbent: Option<(f64, Vec<f64>, f64)>,
    iterations: usize,
}

impl Search<'_> {
    fn prunes(&self, bound: f64) -> bool {
        let Some((inc, _, _)) = &self.incumbent else { return false };
        let slack = 1e-6 * inc.abs().max(1.0);
        if self.mip.integral_objective {
            bound > inc - 1.0 + slack
        } else {
            bound >= inc - slack
        }
    }

    fn boxes(&self, fix: &[i8]) -> (Vec<f64>, Vec<f64>) {
        let p = &self.mip.relaxation;
        let mut lo = p.lower.clone();
        let mut hi = p.upper.clone();
        for (&j, &f) in self.mip.binaries.iter().zip(fix) {
            if f >= 0 {
                lo[j] = f as f64;
                hi[j] = f as f64;
            }
        }
        (lo, hi)
    }

    /// Fixes the rounded binaries, re-solves the continuous part and keeps the
    /// point if the independent checker accepts it.
    fn try_incumbent(&mut self, x: &[f64]) -> bool {
        let fix: Vec<i8> = self.mip.binaries.iter().map(|&j| if x[j] >= 0.5 { 1 } else { 0 }).collect();
        let (lo, hi) = self.boxes(&fix);
        let r = solve_relaxation(&self.mip.relaxation, &lo, &hi, &self.settings.ipm);
        self.iterations += r.iterations;
        let mut candidates = Vec::new();
        if matches!(r.status, RelaxStatus::Optimal | RelaxStatus::Inaccurate) {
            candidates.push(r.x);
        }
        let mut rounded = x.to_vec();
        for (&j, &f) in self.mip.binaries.iter().zip(&fix) {
            rounded[j] = f as f64;
        }
        candidates.push(rounded);
        for cand in candidates {
            let v = self.mip.relaxation.max_violation(&cand).worst;
            if v > self.settings.check_tol {
                continue;
            }
            let obj = self.mip.relaxation.objective_value(&cand);
            let better = match &self.incumbent {
                None => true,
                Some((inc, _, _)) => obj < inc - 1e-12 * inc.abs().max(1.0),
            };
            if better {
                self.incumbent = Some((obj, cand, v));
            }
            return true;
        }
        false
    }
}

/// Best-first branch-and-bound. Branches on the most fractional binary,
/// ties going to the earliest entry of `mip.binaries`.
pub fn branch_and_bound(mip: &MipProblem, settings: &SolverSettings) -> Result<SolveOutcome, SolverError> {
    mip.validate()?;
    let start = settings.clock.map(|c| c());
    let elapsed = || settings.clock.zip(start).map(|(c, s)| c() - s);
    let nb = mip.binaries.len();
    let mut search = Search { mip, settings, incumbent: None, iterations: 0 };
    let mut heap = BinaryHeap::new();
    heap.push(Node { bound: f64::NEG_INFINITY, id: 0, fix: vec![-1; nb] });
    let mut next_id = 1;
    let mut nodes = 0;
    let mut history = Vec::new();
    let mut root_certificate = None;
    let mut failures = 0usize;
    let mut stop = None;

    while let Some(node) = heap.pop() {
        if search.prunes(node.bound) {
            continue;
        }
        if nodes >= settings.node_limit {
            heap.push(node);
            stop = Some(SolveStatus::NodeLimit);
            break;
        }
        if let (Some(limit), Some(t)) = (settings.time_limit_s, elapsed()) {
            if t > limit {
                heap.push(node);
                stop = Some(SolveStatus::TimeLimit);
                break;
            }
        }
        nodes += 1;
        let (lo, hi) = search.boxes(&node.fix);
        let r = solve_relaxation(&mip.relaxation, &lo, &hi, &settings.ipm);
        search.iterations += r.iterations;
        let mut branch_on = None;
        let mut child_bound = node.bound;
        match r.status {
            RelaxStatus::Infeasible => {
                if node.id == 0 {
                    root_certificate = Some(match r.presolve {
                        Some(p) => presolve_certificate(p),
                        None => Certificate::Farkas { residual: r.certificate_residual.unwrap_or(f64::NAN) },
                    });
                }
            }
            RelaxStatus::Unbounded if node.id == 0 => {
                return Ok(SolveOutcome {
                    status: SolveStatus::Unbounded,
                    x: None,
                    objective: None,
                    best_bound: f64::NEG_INFINITY,
                    nodes,
                    iterations: search.iterations,
                    elapsed_s: elapsed(),
                    certificate: None,
                    max_violation: None,
                    history,
                });
            }
            RelaxStatus::Unbounded | RelaxStatus::Failed => {
                failures += 1;
                branch_on = node.fix.iter().position(|&f| f < 0);
            }
            RelaxStatus::Optimal | RelaxStatus::Inaccurate => {
                let bound = r.dual.min(r.primal).max(node.bound);
                if !search.prunes(bound) {
                    child_bound = bound;
                    let mut best: Option<(usize, f64)> = None;
                    for (b, (&j, &f)) in mip.binaries.iter().zip(&node.fix).enumerate() {
                        if f >= 0 {
                            continue;
                        }
                        let frac = r.x[j].min(1.0 - r.x[j]).max(0.0);
                        if best.is_none_or(|(_, bf)| frac > bf) {
                            best = Some((b, frac));
                        }
                    }
                    branch_on = match best {
                        Some((b, frac)) if frac > settings.int_tol => Some(b),
                        // rounding rejected by the checker: split further
                        _ if !search.try_incumbent(&r.x) => node.fix.iter().position(|&f| f < 0),
                        _ => None,
                    };
                }
            }
        }
        if let Some(b) = branch_on {
            let j = mip.binaries[b];
            let up_first = r.x.get(j).is_some_and(|v| *v >= 0.5);
            let order: [i8; 2] = if up_first { [1, 0] } else { [0, 1] };
            for v in order {
                let mut fix = node.fix.clone();
                fix[b] = v;
                heap.push(Node { bound: child_bound, id: next_id, fix });
                next_id += 1;
            }
        }
        if settings.record_history {
            let inc = search.incumbent.as_ref().map(|i| i.0);
            let open = heap.peek().map_or(f64::INFINITY, |n| n.bound);
            let lb = match inc {
                Some(v) => open.min(v),
                None => open,
            };
            history.push(BoundRecord { node: nodes, lower_bound: lb, incumbent: inc });
        }
    }

    let open_bound = heap.iter().map(|n| n.bound).fold(f64::INFINITY, f64::min);
    let (x, objective, max_violation) = match search.incumbent {
        Some((obj, x, v)) => (Some(x), Some(obj), Some(v)),
        None => (None, None, None),
    };
    let status = match (stop, &objective) {
        (Some(s), _) => s,
        (None, Some(_)) => SolveStatus::Optimal,
        (None, None) if failures > 0 => SolveStatus::NumericalFailure,
        (None, None) => SolveStatus::Infeasible,
    };
    let best_bound = match status {
        SolveStatus::Optimal => objective.unwrap_or(f64::NEG_INFINITY),
        SolveStatus::Infeasible => f64::INFINITY,
        _ => objective.map_or(open_bound, |o| o.min(open_bound)),
    };
    let certificate = if status == SolveStatus::Infeasible {
        Some(root_certificate.unwrap_or(Certificate::SearchExhausted { nodes }))
    } else {
        None
    };
    Ok(SolveOutcome {
        status,
        x,
        objective,
        best_bound,
        nodes,
        iterations: search.iterations,
        elapsed_s: elapsed(),
        certificate,
        max_violation,
        history,
    })
}
