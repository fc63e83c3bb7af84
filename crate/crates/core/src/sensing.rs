//! Multistatic localization geometry: the `G_a`, `G_b`, `G_c` matrices, the
//! closed-form CRLB trace as a function of the TX/RX mode vectors, an
//! independent 2×2 Fisher-information route, and the cross-multiplied
//! linear sensing rows used inside the binary subproblems.

use alloc::vec::Vec;
use core::f64::consts::PI;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::Matrix;
use crate::scenario::{ap_target_ranges, Scenario, ScenarioError, SPEED_OF_LIGHT};

/// Denominator threshold below which the FIM is treated as singular.
pub const EPS_DET: f64 = 1e-30;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SensingError {
    #[error("ranges must be positive (got {0}, {1})")]
    NonPositiveRange(f64, f64),
    #[error(transparent)]
    Geometry(#[from] ScenarioError),
    #[error("singular Fisher information (determinant term {det:e})")]
    SingularFim { det: f64 },
    #[error("AP {0} is selected both as transmitter and receiver")]
    ModeConflict(usize),
    #[error("mode vector length {got} does not match {expected} APs")]
    Dimension { got: usize, expected: usize },
}

/// Bistatic delay `(R_m + R_n)/c`.
pub fn propagation_delay(r_m: f64, r_n: f64) -> Result<f64, SensingError> {
    if !(r_m > 0.0 && r_n > 0.0) {
        return Err(SensingError::NonPositiveRange(r_m, r_n));
    }
    Ok((r_m + r_n) / SPEED_OF_LIGHT)
}

/// `8π²B_s² / (L²c²σ_ζ²)`.
pub fn xi_constant(sensing_bandwidth_hz: f64, ap_count: usize, noise_power_sensing: f64) -> f64 {
    let l = ap_count as f64;
    8.0 * PI * PI * sensing_bandwidth_hz * sensing_bandwidth_hz
        / (l * l * SPEED_OF_LIGHT * SPEED_OF_LIGHT * noise_power_sensing)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GMatrices {
    pub g_a: Matrix,
    pub g_b: Matrix,
    pub g_c: Matrix,
    pub xi: f64,
    /// `α_{m,n} = 1/(R_m² R_n²)`.
    pub alpha: Matrix,
}

impl GMatrices {
    pub fn n_aps(&self) -> usize {
        self.g_a.rows
    }
}

pub fn geometry_matrices(s: &Scenario) -> Result<GMatrices, SensingError> {
    let ranges = ap_target_ranges(s)?;
    let l = s.n_aps();
    let [tx, ty] = s.target_position;
    let xi = xi_constant(s.sensing_bandwidth_hz, s.xi_ap_count.unwrap_or(l), s.noise_power_sensing);
    let n2 = (s.n_antennas * s.n_antennas) as f64;
    let cos_x: Vec<f64> = (0..l).map(|i| (s.ap_positions[i].x - tx) / ranges[i]).collect();
    let cos_y: Vec<f64> = (0..l).map(|i| (s.ap_positions[i].y - ty) / ranges[i]).collect();
    let alpha = Matrix::from_fn(l, l, |m, n| 1.0 / (ranges[m] * ranges[m] * ranges[n] * ranges[n]));
    let weight = Matrix::from_fn(l, l, |m, n| xi * alpha[(m, n)] * s.rcs[(m, n)].norm_sqr() * n2);
    let g_a = Matrix::from_fn(l, l, |m, n| {
        let cx = cos_x[m] + cos_x[n];
        weight[(m, n)] * cx * cx
    });
    let g_b = Matrix::from_fn(l, l, |m, n| {
        let cy = cos_y[m] + cos_y[n];
        weight[(m, n)] * cy * cy
    });
    let g_c = Matrix::from_fn(l, l, |m, n| weight[(m, n)] * (cos_x[m] + cos_x[n]) * (cos_y[m] + cos_y[n]));
    Ok(GMatrices { g_a, g_b, g_c, xi, alpha })
}

fn check_modes(g: &GMatrices, a: &[bool], b: &[bool]) -> Result<(), SensingError> {
    let l = g.n_aps();
    for v in [a, b] {
        if v.len() != l {
            return Err(SensingError::Dimension { got: v.len(), expected: l });
        }
    }
    match a.iter().zip(b).position(|(x, y)| *x && *y) {
        Some(ap) => Err(SensingError::ModeConflict(ap)),
        None => Ok(()),
    }
}

fn indicator(v: &[bool]) -> Vec<f64> {
    v.iter().map(|&x| if x { 1.0 } else { 0.0 }).collect()
}

/// Running sum carried in two words; products enter exactly through an
/// fma split, so cancelling terms lose no precision.
#[derive(Default)]
struct Compensated {
    hi: f64,
    lo: f64,
}

impl Compensated {
    fn add(&mut self, x: f64) {
        let s = self.hi + x;
        let bp = s - self.hi;
        self.lo += (self.hi - (s - bp)) + (x - bp);
        self.hi = s;
    }

    fn add_product(&mut self, a: f64, b: f64) {
        let p = a * b;
        self.add(p);
        self.lo += libm::fma(a, b, -p);
    }

    fn value(&self) -> f64 {
        self.hi + self.lo
    }
}

/// CRLB trace in matrix form:
/// `aᵀ(G_a+G_b)ᵀb / (P_s · tr[((AG_b)ᵀG_a − (AG_c)ᵀG_c) B])` with
/// `A = aaᵀ`, `B = bbᵀ`. The trace is expanded entrywise and accumulated
/// with [`Compensated`] sums.
pub fn crlb_trace(g: &GMatrices, a: &[bool], b: &[bool], p_s: f64) -> Result<f64, SensingError> {
    check_modes(g, a, b)?;
    let av = indicator(a);
    let bv = indicator(b);
    let numerator = g.g_a.add(&g.g_b).transpose().bilinear(&av, &bv);
    let pairs: Vec<(usize, usize)> = (0..g.n_aps())
        .filter(|&m| a[m])
        .flat_map(|m| (0..g.n_aps()).filter(|&n| b[n]).map(move |n| (m, n)))
        .collect();
    let mut acc = Compensated::default();
    for &(m, n) in &pairs {
        let (gb, gc) = (g.g_b[(m, n)], g.g_c[(m, n)]);
        for &(m2, n2) in &pairs {
            acc.add_product(gb, g.g_a[(m2, n2)]);
            acc.add_product(-gc, g.g_c[(m2, n2)]);
        }
    }
    let det = acc.value();
    if !(det > EPS_DET) {
        return Err(SensingError::SingularFim { det });
    }
    Ok(numerator / (p_s * det))
}

/// `crlb_trace` with the singular case mapped to `+∞`.
pub fn crlb_or_infinity(g: &GMatrices, a: &[bool], b: &[bool], p_s: f64) -> f64 {
    crlb_trace(g, a, b, p_s).unwrap_or(f64::INFINITY)
}

/// Entries of the 2×2 Fisher information for the planar target position.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FisherInfo {
    pub f_xx: f64,
    pub f_yy: f64,
    pub f_xy: f64,
}

impl FisherInfo {
    pub fn det(&self) -> f64 {
        self.f_xx * self.f_yy - self.f_xy * self.f_xy
    }

    pub fn inverse_trace(&self) -> f64 {
        (self.f_xx + self.f_yy) / self.det()
    }
}

/// Fisher information accumulated pair by pair, independent of the matrix
/// products in [`crlb_trace`]. Returns the FIM and the trace of its inverse;
/// the latter uses double-word entries so that nearly collinear geometries
/// keep full precision.
pub fn fim_oracle(g: &GMatrices, a: &[bool], b: &[bool], p_s: f64) -> Result<(FisherInfo, f64), SensingError> {
    check_modes(g, a, b)?;
    let l = g.n_aps();
    let (mut f_xx, mut f_yy, mut f_xy) = (Compensated::default(), Compensated::default(), Compensated::default());
    for m in (0..l).filter(|&m| a[m]) {
        for n in (0..l).filter(|&n| b[n]) {
            f_xx.add(g.g_a[(m, n)]);
            f_yy.add(g.g_b[(m, n)]);
            f_xy.add(g.g_c[(m, n)]);
        }
    }
    let fim = FisherInfo { f_xx: p_s * f_xx.value(), f_yy: p_s * f_yy.value(), f_xy: p_s * f_xy.value() };
    let mut det = Compensated::default();
    for (x, y, sign) in [(&f_xx, &f_yy, 1.0), (&f_xy, &f_xy, -1.0)] {
        det.add_product(sign * x.hi, y.hi);
        det.add_product(sign * x.hi, y.lo);
        det.add_product(sign * x.lo, y.hi);
    }
    let det_term = det.value();
    if !(det_term > EPS_DET) {
        return Err(SensingError::SingularFim { det: det_term });
    }
    Ok((fim, (f_xx.value() + f_yy.value()) / (p_s * det_term)))
}

/// Which mode vector is held fixed when the sensing constraint is
/// linearized in the other one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FixedSide {
    /// Receivers fixed; the free matrix is `A`.
    Rx(Vec<bool>),
    /// Transmitters fixed; the free matrix is `B`.
    Tx(Vec<bool>),
}

/// Sensing constraint `CRLB ≤ η` cross-multiplied into rows that are linear
/// in the entries of the free `L×L` matrix `X` (`A` or `B`):
///
/// * main row: `Σ_l s_l X_ll − η P_s Σ_ij M_ij X_ij ≤ 0`
/// * side row: `Σ_ij M_ij X_ij ≥ ε_det`
/// * support row: `Σ_l s_l X_ll ≥ s_min`, where `s_min` is the smallest
///   positive `s_l`. Any binary `X` with nonsingular FIM has a nonzero
///   numerator, so this row only removes the all-off degenerate point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearSensingRow {
    pub eta: f64,
    pub p_s: f64,
    /// `s_l`: coefficient of `X_ll` in the CRLB numerator.
    pub numerator: Vec<f64>,
    /// `M`: coefficient of `X_ij` in the CRLB denominator.
    pub denominator: Matrix,
    pub min_positive_numerator: Option<f64>,
}

impl LinearSensingRow {
    pub fn numerator_value(&self, x: &Matrix) -> f64 {
        self.numerator.iter().enumerate().map(|(l, s)| s * x[(l, l)]).sum()
    }

    pub fn denominator_value(&self, x: &Matrix) -> f64 {
        self.denominator.data.iter().zip(&x.data).map(|(m, v)| m * v).sum()
    }

    /// Left-hand side of the main row; `≤ 0` means satisfied.
    pub fn value(&self, x: &Matrix) -> f64 {
        self.numerator_value(x) - self.eta * self.p_s * self.denominator_value(x)
    }

    pub fn is_satisfied(&self, x: &Matrix) -> bool {
        self.value(x) <= 0.0 && self.denominator_value(x) >= EPS_DET
    }
}

pub fn linear_sensing_constraint(g: &GMatrices, fixed: &FixedSide, eta: f64, p_s: f64) -> LinearSensingRow {
    let sum = g.g_a.add(&g.g_b);
    let (numerator, denominator) = match fixed {
        FixedSide::Rx(b) => {
            let bv = indicator(b);
            let big_b = Matrix::outer(&bv, &bv);
            // diag(A)ᵀ (G_a+G_b)ᵀ b
            let s = sum.transpose().matvec(&bv);
            // tr(G_bᵀ Aᵀ G_a B) = Σ_ij A_ij (G_a B G_bᵀ)_ij, same for the G_c term
            let m = g
                .g_a
                .matmul(&big_b)
                .matmul(&g.g_b.transpose())
                .sub(&g.g_c.matmul(&big_b).matmul(&g.g_c.transpose()));
            (s, m)
        }
        FixedSide::Tx(a) => {
            let av = indicator(a);
            let big_a = Matrix::outer(&av, &av);
            // aᵀ (G_a+G_b)ᵀ diag(B) = diag(B)ᵀ (G_a+G_b) a
            let s = sum.matvec(&av);
            // tr(X B) = Σ_ij Xᵀ_ij B_ij with X = (AG_b)ᵀG_a − (AG_c)ᵀG_c
            let x = big_a
                .matmul(&g.g_b)
                .transpose()
                .matmul(&g.g_a)
                .sub(&big_a.matmul(&g.g_c).transpose().matmul(&g.g_c));
            (s, x.transpose())
        }
    };
    let min_positive_numerator = numerator.iter().copied().filter(|v| *v > 0.0).reduce(f64::min);
    LinearSensingRow { eta, p_s, numerator, denominator, min_positive_numerator }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::CMatrix;
    use crate::scenario::{build_scenario, Point3, ScenarioConfig};
    use num_complex::Complex64;

    /// Scenario with APs at the given planar points, target at the origin and
    /// unit-modulus RCS.
    fn scenario_at(points: &[(f64, f64)]) -> Scenario {
        let l = points.len();
        let cfg = ScenarioConfig {
            n_aps: l,
            n_ues: 1,
            target: [0.0, 0.0],
            ap_positions: Some(points.iter().map(|&(x, y)| Point3::new(x, y, 20.0)).collect()),
            ..Default::default()
        };
        let mut s = build_scenario(&cfg).unwrap();
        s.rcs = CMatrix { dim: l, data: alloc::vec![Complex64::new(1.0, 0.0); l * l] };
        s
    }

    #[test]
    fn delay_of_light_second() {
        let t = propagation_delay(149_896_229.0, 149_896_229.0).unwrap();
        assert!((t - 1.0).abs() < 1e-15);
        assert!(propagation_delay(300.0, 0.0).is_err());
    }

    #[test]
    fn collinear_pair_diagonal_entries() {
        let r = 50.0;
        let s = scenario_at(&[(r, 0.0), (0.0, r)]);
        let g = geometry_matrices(&s).unwrap();
        let n2 = 64.0;
        let unit = g.xi * n2 / r.powi(4);
        assert!((g.g_a[(0, 0)] - 4.0 * unit).abs() <= 1e-12 * unit);
        assert!(g.g_b[(0, 0)].abs() <= 1e-12 * unit);
        assert!(g.g_c[(0, 0)].abs() <= 1e-12 * unit);
        // unit cross cosines between (R,0) and (0,R)
        assert!((g.g_c[(0, 1)] - unit).abs() <= 1e-12 * unit);
    }

    #[test]
    fn no_illumination_is_singular() {
        let s = scenario_at(&[(10.0, 0.0), (0.0, 10.0), (-10.0, 0.0)]);
        let g = geometry_matrices(&s).unwrap();
        assert!(matches!(
            crlb_trace(&g, &[false; 3], &[true, true, true], 1.0),
            Err(SensingError::SingularFim { .. })
        ));
        assert_eq!(crlb_or_infinity(&g, &[false; 3], &[true; 3], 1.0), f64::INFINITY);
    }

    #[test]
    fn mode_conflict_rejected() {
        let s = scenario_at(&[(10.0, 0.0), (0.0, 10.0)]);
        let g = geometry_matrices(&s).unwrap();
        assert_eq!(crlb_trace(&g, &[true, false], &[true, true], 1.0), Err(SensingError::ModeConflict(0)));
    }

    #[test]
    fn symmetric_cross_closed_form() {
        let d = 40.0;
        let s = scenario_at(&[(d, 0.0), (-d, 0.0), (0.0, d), (0.0, -d)]);
        let g = geometry_matrices(&s).unwrap();
        let a = [true, true, false, false];
        let b = [false, false, true, true];
        let p_s = 2.0;
        let expected = d.powi(4) / (2.0 * p_s * g.xi * 64.0);
        let got = crlb_trace(&g, &a, &b, p_s).unwrap();
        assert!((got - expected).abs() <= 1e-12 * expected);
        let (fim, inv) = fim_oracle(&g, &a, &b, p_s).unwrap();
        assert!(fim.f_xy.abs() <= 1e-12 * fim.f_xx);
        assert!((inv - expected).abs() <= 1e-12 * expected);
    }

    #[test]
    fn single_pair_fim_entries() {
        let s = scenario_at(&[(10.0, 3.0), (-4.0, 12.0), (7.0, -9.0)]);
        let g = geometry_matrices(&s).unwrap();
        let p_s = 1.5;
        let a = [false, true, false];
        let b = [false, false, true];
        let fim = match fim_oracle(&g, &a, &b, p_s) {
            Ok((f, _)) => f,
            // one pair has a rank-one FIM; inspect the entries anyway
            Err(_) => {
                let f_xx = p_s * g.g_a[(1, 2)];
                let f_yy = p_s * g.g_b[(1, 2)];
                let f_xy = p_s * g.g_c[(1, 2)];
                FisherInfo { f_xx, f_yy, f_xy }
            }
        };
        assert_eq!(fim.f_xx, p_s * g.g_a[(1, 2)]);
        assert_eq!(fim.f_yy, p_s * g.g_b[(1, 2)]);
        assert_eq!(fim.f_xy, p_s * g.g_c[(1, 2)]);
    }

    #[test]
    fn g_matrices_symmetric() {
        let s = build_scenario(&ScenarioConfig { n_aps: 9, rng_seed: 5, ..Default::default() }).unwrap();
        let g = geometry_matrices(&s).unwrap();
        for m in [&g.g_a, &g.g_b, &g.g_c] {
            assert!(m.max_asymmetry() <= 1e-12 * m.max_abs());
        }
        assert!(g.g_a.data.iter().chain(&g.g_b.data).all(|v| *v >= 0.0));
    }

    #[test]
    fn all_zero_free_side_fails_side_condition() {
        let s = scenario_at(&[(10.0, 0.0), (0.0, 10.0), (-10.0, 1.0)]);
        let g = geometry_matrices(&s).unwrap();
        let row = linear_sensing_constraint(&g, &FixedSide::Rx(alloc::vec![false, true, true]), 1.0, 1.0);
        assert!(!row.is_satisfied(&Matrix::zeros(3, 3)));
    }
}
