use alloc::vec;
use alloc::vec::Vec;

use super::*;
use crate::comm::CommStats;
use crate::linalg::CMatrix;
use num_complex::Complex64;

fn settings() -> SolverSettings {
    SolverSettings::default()
}

fn nonneg(p: &mut ConicProblem) {
    for l in &mut p.lower {
        *l = 0.0;
    }
}

#[test]
fn small_lp_optimum() {
    // min -x - y  s.t. x + 2y <= 4, 3x + y <= 6
    let mut p = ConicProblem::new(2);
    nonneg(&mut p);
    p.objective = vec![-1.0, -1.0];
    p.linear.push(LinearConstraint::le(vec![(0, 1.0), (1, 2.0)], 4.0));
    p.linear.push(LinearConstraint::le(vec![(0, 3.0), (1, 1.0)], 6.0));
    let out = solve_conic(&p, &settings()).unwrap();
    assert_eq!(out.status, SolveStatus::Optimal);
    let x = out.x.unwrap();
    assert!((x[0] - 1.6).abs() < 1e-6 && (x[1] - 1.2).abs() < 1e-6, "{x:?}");
    assert!((out.objective.unwrap() + 2.8).abs() < 1e-7);
    assert!(out.best_bound <= out.objective.unwrap() + 1e-9);
}

#[test]
fn disc_optimum() {
    // min x + y  s.t. ‖(x, y)‖ <= 1
    let mut p = ConicProblem::new(2);
    p.objective = vec![1.0, 1.0];
    p.cones.push(SocConstraint {
        entries: vec![AffineExpr::var(0, 1.0), AffineExpr::var(1, 1.0)],
        bound: AffineExpr::constant(1.0),
    });
    let out = solve_conic(&p, &settings()).unwrap();
    assert_eq!(out.status, SolveStatus::Optimal);
    assert!((out.objective.unwrap() + libm::sqrt(2.0)).abs() < 1e-7);
}

#[test]
fn equality_constrained_min_norm() {
    // min u  s.t. ‖(x1, x2)‖ <= u, x1 + x2 = 2
    let mut p = ConicProblem::new(3);
    p.objective[2] = 1.0;
    p.linear.push(LinearConstraint::eq(vec![(0, 1.0), (1, 1.0)], 2.0));
    p.cones.push(SocConstraint {
        entries: vec![AffineExpr::var(0, 1.0), AffineExpr::var(1, 1.0)],
        bound: AffineExpr::var(2, 1.0),
    });
    let out = solve_conic(&p, &settings()).unwrap();
    assert_eq!(out.status, SolveStatus::Optimal);
    let x = out.x.unwrap();
    assert!((x[2] - libm::sqrt(2.0)).abs() < 1e-7);
    assert!((x[0] - 1.0).abs() < 1e-6);
}

#[test]
fn infeasible_rows_get_farkas_certificate() {
    let mut p = ConicProblem::new(2);
    p.linear.push(LinearConstraint::ge(vec![(0, 1.0), (1, 1.0)], 3.0));
    p.linear.push(LinearConstraint::le(vec![(0, 1.0)], 1.0));
    p.linear.push(LinearConstraint::le(vec![(1, 1.0)], 1.0));
    let out = solve_conic(&p, &settings()).unwrap();
    assert_eq!(out.status, SolveStatus::Infeasible);
    match out.certificate {
        Some(Certificate::Farkas { residual }) => assert!(residual < 1e-8),
        other => panic!("{other:?}"),
    }
}

#[test]
fn infeasible_cone() {
    let mut p = ConicProblem::new(1);
    p.lower[0] = 2.0;
    p.cones.push(SocConstraint { entries: vec![AffineExpr::var(0, 1.0)], bound: AffineExpr::constant(1.0) });
    let out = solve_conic(&p, &settings()).unwrap();
    assert_eq!(out.status, SolveStatus::Infeasible);
}

#[test]
fn unbounded_ray() {
    let mut p = ConicProblem::new(1);
    p.lower[0] = 0.0;
    p.objective[0] = -1.0;
    let out = solve_conic(&p, &settings()).unwrap();
    assert_eq!(out.status, SolveStatus::Unbounded);
}

#[test]
fn bound_conflict_is_presolved() {
    let mut p = ConicProblem::new(2);
    p.lower[1] = 1.0;
    p.upper[1] = 0.0;
    let out = solve_conic(&p, &settings()).unwrap();
    assert_eq!(out.status, SolveStatus::Infeasible);
    assert_eq!(out.certificate, Some(Certificate::BoundConflict { var: 1 }));
}

#[test]
fn malformed_problem_rejected() {
    let mut p = ConicProblem::new(1);
    p.linear.push(LinearConstraint::le(vec![(3, 1.0)], 1.0));
    assert!(solve_conic(&p, &settings()).is_err());
}

#[test]
fn checker_flags_each_constraint_kind() {
    let mut p = ConicProblem::new(2);
    p.lower[0] = 0.0;
    p.linear.push(LinearConstraint::le(vec![(0, 2.0)], 2.0));
    p.cones.push(SocConstraint { entries: vec![AffineExpr::var(1, 1.0)], bound: AffineExpr::constant(1.0) });
    assert_eq!(p.max_violation(&[0.5, 0.5]).at, ConstraintRef::None);
    assert_eq!(p.max_violation(&[-1.0, 0.0]).at, ConstraintRef::Bound(0));
    assert_eq!(p.max_violation(&[3.0, 0.0]).at, ConstraintRef::Linear(0));
    assert_eq!(p.max_violation(&[0.0, 4.0]).at, ConstraintRef::Cone(0));
}

fn scalar_stats(d: &[Vec<f64>], c: &[Vec<f64>], sigma2: f64) -> CommStats {
    let k = d.len();
    let mut c_mats = Vec::new();
    for row in c.iter().take(k) {
        for &v in row {
            c_mats.push(CMatrix { dim: 1, data: vec![Complex64::new(v, 0.0)] });
        }
    }
    CommStats { d: d.to_vec(), c_mats, sigma2 }
}

/// Single AP: the SINR rows are linear in `p_k = ρ_k²`, and the minimum
/// power point solves `(D − γ C) p = γ σ² 1` with `D = diag(d_k²)`.
#[test]
fn p1_matches_single_ap_power_control() {
    let d = vec![vec![3.0], vec![2.5]];
    let c = vec![vec![0.4, 0.2], vec![0.3, 0.5]];
    let sigma2 = 0.1;
    let gamma = 2.0;
    let stats = scalar_stats(&d, &c, sigma2);
    let out = min_power_p1(&stats, gamma, &[true], 10.0, &settings()).unwrap();
    assert_eq!(out.status, SolveStatus::Optimal);
    let m = [
        [d[0][0] * d[0][0] - gamma * c[0][0], -gamma * c[0][1]],
        [-gamma * c[1][0], d[1][0] * d[1][0] - gamma * c[1][1]],
    ];
    let rhs = gamma * sigma2;
    let det = m[0][0] * m[1][1] - m[0][1] * m[1][0];
    let p0 = (rhs * m[1][1] - m[0][1] * rhs) / det;
    let p1 = (m[0][0] * rhs - m[1][0] * rhs) / det;
    let total = out.total_power.unwrap();
    assert!(((p0 + p1) - total).abs() < 1e-6 * (p0 + p1), "{total} vs {}", p0 + p1);
    let pv = out.powers.unwrap();
    for k in 0..2 {
        let s = crate::comm::sinr(&stats, &pv, k);
        assert!(s >= gamma * (1.0 - 1e-6), "sinr {s}");
    }
}

#[test]
fn p1_respects_per_ap_cap() {
    let d = vec![vec![3.0]];
    let c = vec![vec![0.0]];
    let stats = scalar_stats(&d, &c, 1.0);
    // needs ρ² >= γσ²/d² = 9/9 = 1
    let ok = min_power_p1(&stats, 9.0, &[true], 1.5, &settings()).unwrap();
    assert_eq!(ok.status, SolveStatus::Optimal);
    assert!((ok.total_power.unwrap() - 1.0).abs() < 1e-6);
    let capped = min_power_p1(&stats, 9.0, &[true], 0.5, &settings()).unwrap();
    assert_eq!(capped.status, SolveStatus::Infeasible);
    let silent = min_power_p1(&stats, 9.0, &[false], 1.5, &settings()).unwrap();
    assert_eq!(silent.status, SolveStatus::Infeasible);
}

/// Pure binary problem: objective and constraints evaluated by brute force.
fn enumerate(m: &MipProblem) -> Option<f64> {
    let n = m.relaxation.n_vars;
    let mut best: Option<f64> = None;
    for mask in 0u32..(1 << n) {
        let x: Vec<f64> = (0..n).map(|j| ((mask >> j) & 1) as f64).collect();
        if m.relaxation.max_violation(&x).worst > 1e-9 {
            continue;
        }
        let v = m.relaxation.objective_value(&x);
        if best.is_none_or(|b| v < b) {
            best = Some(v);
        }
    }
    best
}

#[test]
fn knapsack_matches_enumeration() {
    // max value under weight limit, as a minimization
    let values = [6.0, 5.0, 8.0, 9.0, 6.0, 7.0];
    let weights = [2.0, 3.0, 6.0, 7.0, 5.0, 9.0];
    let mut p = ConicProblem::new(6);
    p.objective = values.iter().map(|v| -v).collect();
    p.linear.push(LinearConstraint::le(weights.iter().copied().enumerate().collect(), 20.0));
    let mip = MipProblem::new(p, (0..6).collect(), true);
    let mut s = settings();
    s.record_history = true;
    let out = branch_and_bound(&mip, &s).unwrap();
    assert_eq!(out.status, SolveStatus::Optimal);
    let oracle = enumerate(&mip).unwrap();
    assert!((out.objective.unwrap() - oracle).abs() < 1e-6, "{:?} vs {oracle}", out.objective);
    for w in out.history.windows(2) {
        assert!(w[1].lower_bound >= w[0].lower_bound - 1e-9);
        if let (Some(a), Some(b)) = (w[0].incumbent, w[1].incumbent) {
            assert!(b <= a);
        }
    }
}

#[test]
fn infeasible_mip_exhausts_search() {
    // x0 + x1 = 1 and x0 + x1 >= 1.5 with binaries has no integral point,
    // but the LP relaxation of the first row alone is fine.
    let mut p = ConicProblem::new(2);
    p.linear.push(LinearConstraint::ge(vec![(0, 1.0), (1, 1.0)], 1.0));
    p.linear.push(LinearConstraint::le(vec![(0, 2.0), (1, 2.0)], 3.0));
    p.linear.push(LinearConstraint::ge(vec![(0, 1.0), (1, -1.0)], 0.5));
    p.linear.push(LinearConstraint::le(vec![(0, 1.0), (1, -1.0)], 0.7));
    let mip = MipProblem::new(p, vec![0, 1], false);
    let out = branch_and_bound(&mip, &settings()).unwrap();
    assert_eq!(out.status, SolveStatus::Infeasible);
    assert!(out.certificate.is_some());
}

#[test]
fn node_limit_reported() {
    let values = [6.0, 5.0, 8.0, 9.0, 6.0, 7.0];
    let weights = [2.0, 3.0, 6.0, 7.0, 5.0, 9.0];
    let mut p = ConicProblem::new(6);
    p.objective = values.iter().map(|v| -v).collect();
    p.linear.push(LinearConstraint::le(weights.iter().copied().enumerate().collect(), 20.0));
    let mip = MipProblem::new(p, (0..6).collect(), true);
    let mut s = settings();
    s.node_limit = 1;
    let out = branch_and_bound(&mip, &s).unwrap();
    assert_eq!(out.status, SolveStatus::NodeLimit);
    assert_eq!(out.nodes, 1);
}

#[test]
fn problem_json_roundtrip_keeps_infinite_bounds() {
    let mut p = ConicProblem::new(2);
    p.lower[0] = 0.0;
    let s = serde_json::to_string(&p).unwrap();
    let back: ConicProblem = serde_json::from_str(&s).unwrap();
    assert_eq!(back, p);
}

mod props {
    use super::*;
    use proptest::prelude::*;

    fn mip_strategy() -> impl Strategy<Value = MipProblem> {
        (3usize..=7)
            .prop_flat_map(|n| {
                (
                    prop::collection::vec(-5.0f64..5.0, n),
                    prop::collection::vec(prop::collection::vec(-3.0f64..3.0, n), 1..4),
                    prop::collection::vec(0.0f64..4.0, 3),
                    prop::collection::vec(-1.0f64..1.0, n),
                    0.5f64..3.0,
                )
            })
            .prop_map(|(c, rows, rhs, w, radius)| {
                let n = c.len();
                let mut p = ConicProblem::new(n);
                p.objective = c;
                for (row, b) in rows.into_iter().zip(rhs) {
                    p.linear.push(LinearConstraint::le(row.into_iter().enumerate().collect(), b));
                }
                p.cones.push(SocConstraint {
                    entries: w.iter().enumerate().map(|(j, v)| AffineExpr::var(j, *v)).collect(),
                    bound: AffineExpr::constant(radius),
                });
                MipProblem::new(p, (0..n).collect(), false)
            })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn bnb_agrees_with_enumeration(mip in mip_strategy()) {
            let out = branch_and_bound(&mip, &SolverSettings::default()).unwrap();
            match enumerate(&mip) {
                Some(best) => {
                    prop_assert_eq!(out.status, SolveStatus::Optimal);
                    let obj = out.objective.unwrap();
                    prop_assert!((obj - best).abs() < 1e-5 * best.abs().max(1.0), "{} vs {}", obj, best);
                    prop_assert!(out.max_violation.unwrap() <= 1e-6);
                }
                None => prop_assert_eq!(out.status, SolveStatus::Infeasible),
            }
        }

        #[test]
        fn lp_optimum_never_beats_dual_bound(c in prop::collection::vec(-2.0f64..2.0, 3), b in 0.5f64..4.0) {
            let mut p = ConicProblem::new(3);
            for j in 0..3 {
                p.lower[j] = 0.0;
                p.upper[j] = 2.0;
            }
            p.objective = c;
            p.linear.push(LinearConstraint::le(vec![(0, 1.0), (1, 1.0), (2, 1.0)], b));
            let out = solve_conic(&p, &SolverSettings::default()).unwrap();
            prop_assert_eq!(out.status, SolveStatus::Optimal);
            prop_assert!(out.best_bound <= out.objective.unwrap() + 1e-7);
            prop_assert!(out.objective.unwrap() - out.best_bound <= 1e-6);
        }
    }
}
