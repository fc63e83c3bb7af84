//! Downlink precoding statistics, effective SINR and its second-order-cone
//! form.

use alloc::vec;
use alloc::vec::Vec;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::{self, hermitian_psd_repair, hermitian_spectrum, symmetric_sqrt, CMatrix, Matrix};
use crate::scenario::ChannelEnsemble;

/// Relative eigenvalue floor below which a covariance is reported as
/// corrupted instead of silently clipped.
pub const PSD_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CommError {
    #[error("channel of UE {ue} at AP {ap} vanishes in realization {realization}")]
    ZeroChannel { realization: usize, ue: usize, ap: usize },
    #[error("C[{k}][{i}] has eigenvalue {min_eig:e}, below -{PSD_TOLERANCE:e}·‖C‖ = {floor:e}")]
    NotPsd { k: usize, i: usize, min_eig: f64, floor: f64 },
    #[error("dimension mismatch: {0}")]
    Dimension(&'static str),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum PrecoderKind {
    #[default]
    MaximumRatio,
}

/// Local precoder: maps one AP's channel to a UE onto a unit-norm vector.
pub trait Precoder {
    fn precode(&self, h: &[Complex64], out: &mut [Complex64]) -> Result<(), ()>;
}

/// Normalized maximum-ratio precoding, `w = h* / ‖h‖`.
#[derive(Debug, Clone, Copy, Default)]
pub struct MaximumRatio;

impl Precoder for MaximumRatio {
    fn precode(&self, h: &[Complex64], out: &mut [Complex64]) -> Result<(), ()> {
        let norm = libm::sqrt(h.iter().map(|c| c.norm_sqr()).sum::<f64>());
        if !(norm > 0.0) {
            return Err(());
        }
        for (o, c) in out.iter_mut().zip(h) {
            *o = c.conj() / norm;
        }
        Ok(())
    }
}

/// Precoding vectors `w_{kl}` for every realization, laid out like the
/// channel ensemble (`[t][k][l][n]`).
#[derive(Debug, Clone, PartialEq)]
pub struct PrecoderSet {
    pub n_realizations: usize,
    pub n_ues: usize,
    pub n_aps: usize,
    pub n_antennas: usize,
    pub w: Vec<Complex64>,
}

impl PrecoderSet {
    #[inline]
    pub fn precoder(&self, t: usize, k: usize, l: usize) -> &[Complex64] {
        let n = self.n_antennas;
        let base = ((t * self.n_ues + k) * self.n_aps + l) * n;
        &self.w[base..base + n]
    }
}

pub fn compute_precoders(e: &ChannelEnsemble, kind: PrecoderKind) -> Result<PrecoderSet, CommError> {
    match kind {
        PrecoderKind::MaximumRatio => compute_precoders_with(e, &MaximumRatio),
    }
}

pub fn compute_precoders_with(e: &ChannelEnsemble, precoder: &dyn Precoder) -> Result<PrecoderSet, CommError> {
    let n = e.n_antennas;
    let mut w = vec![Complex64::new(0.0, 0.0); e.h.len()];
    for t in 0..e.n_realizations {
        for k in 0..e.n_ues {
            for l in 0..e.n_aps {
                let base = ((t * e.n_ues + k) * e.n_aps + l) * n;
                precoder
                    .precode(e.channel(t, k, l), &mut w[base..base + n])
                    .map_err(|_| CommError::ZeroChannel { realization: t, ue: k, ap: l })?;
            }
        }
    }
    Ok(PrecoderSet {
        n_realizations: e.n_realizations,
        n_ues: e.n_ues,
        n_aps: e.n_aps,
        n_antennas: n,
        w,
    })
}

/// Expected effective channels `d_k` and interference matrices `C_{ki}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CommStats {
    /// `d[k][l]`.
    pub d: Vec<Vec<f64>>,
    /// `C_{ki}` stored at `k * K + i`.
    pub c_mats: Vec<CMatrix>,
    pub sigma2: f64,
}

impl CommStats {
    pub fn n_ues(&self) -> usize {
        self.d.len()
    }

    pub fn n_aps(&self) -> usize {
        self.d.first().map_or(0, Vec::len)
    }

    pub fn c(&self, k: usize, i: usize) -> &CMatrix {
        &self.c_mats[k * self.n_ues() + i]
    }

    pub fn check_dimensions(&self) -> Result<(), CommError> {
        let (k, l) = (self.n_ues(), self.n_aps());
        if k == 0 || l == 0 {
            return Err(CommError::Dimension("empty statistics"));
        }
        if self.d.iter().any(|d| d.len() != l) {
            return Err(CommError::Dimension("d vectors must share length L"));
        }
        if self.c_mats.len() != k * k || self.c_mats.iter().any(|c| c.dim != l) {
            return Err(CommError::Dimension("need K×K interference matrices of size L×L"));
        }
        if !(self.sigma2 > 0.0) {
            return Err(CommError::Dimension("noise power must be positive"));
        }
        Ok(())
    }
}

/// Sample-mean estimate of `d_k` and `C_{ki}` over the ensemble, followed by
/// Hermitian symmetrization and PSD clipping.
pub fn estimate_stats(e: &ChannelEnsemble, precoders: &PrecoderSet, sigma2: f64) -> CommStats {
    let (kk, ll, n) = (e.n_ues, e.n_aps, e.n_antennas);
    let t_count = e.n_realizations;
    let mut d_acc = vec![Complex64::new(0.0, 0.0); kk * ll];
    let mut c_acc = vec![CMatrix::zeros(ll); kk * kk];
    // v[(k*K + i)*L + l] = h_{kl}ᵀ w_{il}
    let mut v = vec![Complex64::new(0.0, 0.0); kk * kk * ll];
    for t in 0..t_count {
        for k in 0..kk {
            for i in 0..kk {
                for l in 0..ll {
                    let h = e.channel(t, k, l);
                    let w = precoders.precoder(t, i, l);
                    let mut acc = Complex64::new(0.0, 0.0);
                    for a in 0..n {
                        acc += h[a] * w[a];
                    }
                    v[(k * kk + i) * ll + l] = acc;
                }
            }
        }
        for k in 0..kk {
            for l in 0..ll {
                d_acc[k * ll + l] += v[(k * kk + k) * ll + l];
            }
            for i in 0..kk {
                let row = &v[(k * kk + i) * ll..(k * kk + i + 1) * ll];
                let c = &mut c_acc[k * kk + i];
                for l in 0..ll {
                    for r in 0..ll {
                        c[(l, r)] += row[l] * row[r].conj();
                    }
                }
            }
        }
    }
    let inv_t = 1.0 / t_count as f64;
    let d_mean: Vec<Complex64> = d_acc.iter().map(|x| x * inv_t).collect();
    let mut c_mats = Vec::with_capacity(kk * kk);
    for k in 0..kk {
        for i in 0..kk {
            let mut c = c_acc[k * kk + i].clone();
            for x in &mut c.data {
                *x *= inv_t;
            }
            if i == k {
                for l in 0..ll {
                    for r in 0..ll {
                        c[(l, r)] -= d_mean[k * ll + l] * d_mean[k * ll + r].conj();
                    }
                }
            }
            c_mats.push(hermitian_psd_repair(&c).0);
        }
    }
    let d = (0..kk)
        .map(|k| (0..ll).map(|l| d_mean[k * ll + l].re.max(0.0)).collect())
        .collect();
    CommStats { d, c_mats, sigma2 }
}

/// Per-UE transmit amplitudes, `ρ_k[l] = √p_{lk}` (zero at inactive APs).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerVector {
    pub rho: Vec<Vec<f64>>,
}

impl PowerVector {
    pub fn zeros(n_ues: usize, n_aps: usize) -> Self {
        Self { rho: vec![vec![0.0; n_aps]; n_ues] }
    }

    /// From an `L×K` power matrix `p_{lk}`.
    pub fn from_powers(powers: &Matrix) -> Self {
        let (ll, kk) = (powers.rows, powers.cols);
        Self {
            rho: (0..kk)
                .map(|k| (0..ll).map(|l| libm::sqrt(powers[(l, k)].max(0.0))).collect())
                .collect(),
        }
    }

    /// Back to an `L×K` power matrix.
    pub fn to_powers(&self) -> Matrix {
        let kk = self.rho.len();
        let ll = self.rho.first().map_or(0, Vec::len);
        Matrix::from_fn(ll, kk, |l, k| self.rho[k][l] * self.rho[k][l])
    }
}

/// Effective SINR of UE `k`.
pub fn sinr(stats: &CommStats, p: &PowerVector, k: usize) -> f64 {
    let signal = linalg::dot(&stats.d[k], &p.rho[k]);
    let mut interference = 0.0;
    for (i, rho_i) in p.rho.iter().enumerate() {
        interference += stats.c(k, i).real_quadratic_form(rho_i).re;
    }
    signal * signal / (interference + stats.sigma2)
}

/// `(τ_d/τ_c) log₂(1 + SINR)` in bit/s/Hz.
pub fn spectral_efficiency(sinr_k: f64, tau_d: u32, tau_c: u32) -> f64 {
    (tau_d as f64 / tau_c as f64) * libm::log2(1.0 + sinr_k)
}

/// The SINR requirement of one UE written as
/// `‖[√γ C_{k1}^{1/2} ρ_1, …, √γ C_{kK}^{1/2} ρ_K, √γ σ]‖ ≤ d_kᵀ ρ_k`.
///
/// The square roots are of `Re C_{ki}`: for real `ρ` the quadratic forms
/// of `C_{ki}` and of its real part coincide, which keeps the cone real.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SinrCone {
    pub ue: usize,
    pub gamma_c: f64,
    pub d: Vec<f64>,
    /// `√γ · (Re C_{ki})^{1/2}` for `i = 0..K`.
    pub blocks: Vec<Matrix>,
    /// `√γ · σ`.
    pub noise_term: f64,
}

impl SinrCone {
    pub fn rhs(&self, p: &PowerVector) -> f64 {
        linalg::dot(&self.d, &p.rho[self.ue])
    }

    pub fn lhs_norm(&self, p: &PowerVector) -> f64 {
        let mut sq = self.noise_term * self.noise_term;
        for (block, rho_i) in self.blocks.iter().zip(&p.rho) {
            for v in block.matvec(rho_i) {
                sq += v * v;
            }
        }
        libm::sqrt(sq)
    }

    pub fn is_satisfied(&self, p: &PowerVector) -> bool {
        self.lhs_norm(p) <= self.rhs(p)
    }
}

pub fn soc_constraint(stats: &CommStats, gamma_c: f64, k: usize) -> Result<SinrCone, CommError> {
    let kk = stats.n_ues();
    let scale = libm::sqrt(gamma_c);
    let mut blocks = Vec::with_capacity(kk);
    for i in 0..kk {
        let c = stats.c(k, i);
        let spec = hermitian_spectrum(c);
        let floor = PSD_TOLERANCE * spec.max_abs;
        if spec.min < -floor {
            return Err(CommError::NotPsd { k, i, min_eig: spec.min, floor });
        }
        let (mut root, _) = symmetric_sqrt(&c.real_part());
        for x in &mut root.data {
            *x *= scale;
        }
        blocks.push(root);
    }
    Ok(SinrCone {
        ue: k,
        gamma_c,
        d: stats.d[k].clone(),
        blocks,
        noise_term: scale * libm::sqrt(stats.sigma2),
    })
}

pub fn sinr_cones(stats: &CommStats, gamma_c: f64) -> Result<Vec<SinrCone>, CommError> {
    (0..stats.n_ues()).map(|k| soc_constraint(stats, gamma_c, k)).collect()
}

/// `10^(dB/10)`.
pub fn db_to_linear(db: f64) -> f64 {
    libm::pow(10.0, db / 10.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::{build_scenario, generate_channels, ScenarioConfig};

    fn c1(re: f64) -> CMatrix {
        CMatrix { dim: 1, data: vec![Complex64::new(re, 0.0)] }
    }

    fn scalar_stats(d: f64, c: f64, sigma2: f64) -> CommStats {
        CommStats { d: vec![vec![d]], c_mats: vec![c1(c)], sigma2 }
    }

    fn single_ensemble(h: Vec<Complex64>, n_ues: usize, n_aps: usize, n: usize, t: usize) -> ChannelEnsemble {
        ChannelEnsemble {
            n_realizations: t,
            n_ues,
            n_aps,
            n_antennas: n,
            h,
            gain: Matrix::zeros(n_aps, n_ues),
            ap_gain: vec![0.0; n_aps],
            blocked: vec![false; n_ues * n_aps],
        }
    }

    #[test]
    fn mr_precoder_is_conjugate_direction() {
        let s = core::f64::consts::FRAC_1_SQRT_2;
        let h = [Complex64::new(2.0 * s, 0.0), Complex64::new(0.0, 2.0 * s)];
        let mut w = [Complex64::new(0.0, 0.0); 2];
        MaximumRatio.precode(&h, &mut w).unwrap();
        assert!((w[0] - Complex64::new(s, 0.0)).norm() < 1e-15);
        assert!((w[1] - Complex64::new(0.0, -s)).norm() < 1e-15);
    }

    #[test]
    fn mr_scalar_gain_is_modulus() {
        let e = single_ensemble(vec![Complex64::new(3.5, 0.0)], 1, 1, 1, 1);
        let w = compute_precoders(&e, PrecoderKind::MaximumRatio).unwrap();
        let g = e.channel(0, 0, 0)[0] * w.precoder(0, 0, 0)[0];
        assert!((g.re - 3.5).abs() < 1e-15 && g.im.abs() < 1e-15);
    }

    #[test]
    fn precoders_have_unit_norm() {
        let s = build_scenario(&ScenarioConfig { n_aps: 3, n_ues: 2, rng_seed: 3, ..Default::default() }).unwrap();
        let e = generate_channels(&s, 10).unwrap();
        let w = compute_precoders(&e, PrecoderKind::MaximumRatio).unwrap();
        for t in 0..10 {
            for k in 0..2 {
                for l in 0..3 {
                    let n: f64 = w.precoder(t, k, l).iter().map(|c| c.norm_sqr()).sum();
                    assert!((n.sqrt() - 1.0).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn zero_channel_is_reported() {
        let e = single_ensemble(vec![Complex64::new(0.0, 0.0); 2], 1, 1, 2, 1);
        assert_eq!(
            compute_precoders(&e, PrecoderKind::MaximumRatio),
            Err(CommError::ZeroChannel { realization: 0, ue: 0, ap: 0 })
        );
    }

    #[test]
    fn deterministic_scalar_stats() {
        let e = single_ensemble(vec![Complex64::new(2.0, 0.0)], 1, 1, 1, 1);
        let w = compute_precoders(&e, PrecoderKind::MaximumRatio).unwrap();
        let stats = estimate_stats(&e, &w, 1.0);
        assert!((stats.d[0][0] - 2.0).abs() < 1e-15);
        assert!(stats.c(0, 0)[(0, 0)].norm() < 1e-15);
    }

    #[test]
    fn scalar_sinr() {
        let stats = scalar_stats(2.0, 0.0, 1.0);
        let p = PowerVector { rho: vec![vec![3.0]] };
        assert!((sinr(&stats, &p, 0) - 36.0).abs() < 1e-12);
        assert_eq!(sinr(&stats, &PowerVector::zeros(1, 1), 0), 0.0);
    }

    #[test]
    fn spectral_efficiency_values() {
        assert_eq!(spectral_efficiency(1.0, 10, 10), 1.0);
        assert_eq!(spectral_efficiency(0.0, 190, 200), 0.0);
        let se = spectral_efficiency(100.0, 190, 200);
        assert!((se - 0.95 * 101f64.log2()).abs() < 1e-12);
    }

    #[test]
    fn cone_without_interference_is_linear() {
        let stats = scalar_stats(2.0, 0.0, 1.0);
        let cone = soc_constraint(&stats, 100.0, 0).unwrap();
        assert!((cone.noise_term - 10.0).abs() < 1e-12);
        // feasible iff 2ρ ≥ 10, i.e. √p ≥ 5
        assert!(cone.is_satisfied(&PowerVector { rho: vec![vec![5.0 + 1e-12]] }));
        assert!(!cone.is_satisfied(&PowerVector { rho: vec![vec![5.0 - 1e-9]] }));
    }

    #[test]
    fn corrupted_covariance_is_rejected() {
        let stats = scalar_stats(2.0, -1.0, 1.0);
        assert!(matches!(soc_constraint(&stats, 10.0, 0), Err(CommError::NotPsd { .. })));
    }

    #[test]
    fn estimated_covariances_are_hermitian_psd() {
        let s = build_scenario(&ScenarioConfig { n_aps: 4, n_ues: 3, rng_seed: 11, ..Default::default() }).unwrap();
        let e = generate_channels(&s, 50).unwrap();
        let w = compute_precoders(&e, PrecoderKind::MaximumRatio).unwrap();
        let stats = estimate_stats(&e, &w, s.noise_power_comm);
        for c in &stats.c_mats {
            assert!(c.hermitian_defect() <= 1e-12 * c.max_norm().max(1e-300));
            assert!(hermitian_spectrum(c).min >= -1e-9 * hermitian_spectrum(c).max_abs);
        }
        for d in stats.d.iter().flatten() {
            assert!(*d >= 0.0);
        }
    }
}
