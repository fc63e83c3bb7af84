//! Deployment geometry, radio constants and the seeded synthetic channel
//! ensemble that stands in for ray-traced channel data.
//!
//! All randomness is drawn from ChaCha8 streams keyed by the scenario seed,
//! one stream per purpose, so overriding one group of inputs (say the UE
//! positions) never shifts the draws of another (say the RCS matrix).

use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::{CMatrix, Matrix};

pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

const STREAM_AP: u64 = 1;
const STREAM_UE: u64 = 2;
const STREAM_RCS: u64 = 3;
const STREAM_CHANNEL: u64 = 4;
const STREAM_BLOCKAGE: u64 = 5;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ScenarioError {
    #[error("invalid scenario config: {0}")]
    InvalidConfig(&'static str),
    #[error("AP {ap} coincides with the target in the horizontal plane")]
    DegenerateGeometry { ap: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Point3 {
    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Self { x, y, z }
    }

    pub fn distance(&self, other: &Point3) -> f64 {
        let (dx, dy, dz) = (self.x - other.x, self.y - other.y, self.z - other.z);
        libm::sqrt(dx * dx + dy * dy + dz * dz)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PathLoss {
    /// `PL(d) = PL₀ (d/d₀)^(-exponent)`; `PL₀` defaults to free space at `d₀`.
    LogDistance {
        exponent: f64,
        ref_distance_m: f64,
        #[serde(default)]
        ref_gain: Option<f64>,
    },
    /// Path loss forced to 1 (test mode).
    Unity,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Fading {
    Rician { k_factor: f64 },
    /// Rician factor at infinity: the deterministic steering vector only.
    PureLos,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ChannelModel {
    pub path_loss: PathLoss,
    pub fading: Fading,
    /// Probability that a UE-AP link carries an extra blockage loss.
    pub blockage_prob: f64,
    pub blockage_loss_db: f64,
}

impl Default for ChannelModel {
    fn default() -> Self {
        Self {
            path_loss: PathLoss::LogDistance { exponent: 3.0, ref_distance_m: 1.0, ref_gain: None },
            fading: Fading::Rician { k_factor: 10.0 },
            blockage_prob: 0.0,
            blockage_loss_db: 20.0,
        }
    }
}

impl ChannelModel {
    /// Linear large-scale gain of a link of length `distance` (metres).
    pub fn path_gain(&self, carrier_freq_hz: f64, distance: f64) -> f64 {
        match self.path_loss {
            PathLoss::Unity => 1.0,
            PathLoss::LogDistance { exponent, ref_distance_m, ref_gain } => {
                let pl0 = ref_gain.unwrap_or_else(|| {
                    let lambda = SPEED_OF_LIGHT / carrier_freq_hz;
                    let r = lambda / (4.0 * PI * ref_distance_m);
                    r * r
                });
                let d = distance.max(ref_distance_m);
                pl0 * libm::pow(d / ref_distance_m, -exponent)
            }
        }
    }

    pub fn blockage_factor(&self, blocked: bool) -> f64 {
        if blocked {
            libm::pow(10.0, -self.blockage_loss_db / 10.0)
        } else {
            1.0
        }
    }

    /// Closed-form `E{‖h‖²}/N` of a link: the Rician mixture keeps unit
    /// average power per antenna, so only the large-scale gain remains.
    pub fn mean_gain(&self, carrier_freq_hz: f64, distance: f64, blocked: bool) -> f64 {
        self.path_gain(carrier_freq_hz, distance) * self.blockage_factor(blocked)
    }

    fn los_weights(&self) -> (f64, f64) {
        match self.fading {
            Fading::PureLos => (1.0, 0.0),
            Fading::Rician { k_factor } => {
                let k = k_factor.max(0.0);
                (libm::sqrt(k / (1.0 + k)), libm::sqrt(1.0 / (1.0 + k)))
            }
        }
    }
}

/// Rectangle and heights used when positions are drawn from the seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Layout {
    pub area_min: [f64; 2],
    pub area_max: [f64; 2],
    pub ap_height_m: [f64; 2],
    pub ue_height_m: f64,
}

impl Default for Layout {
    fn default() -> Self {
        Self {
            area_min: [0.0, 0.0],
            area_max: [200.0, 200.0],
            ap_height_m: [10.0, 30.0],
            ue_height_m: 1.5,
        }
    }
}

impl Layout {
    pub fn sample_ap<R: Rng>(&self, rng: &mut R) -> Point3 {
        Point3::new(
            uniform(rng, self.area_min[0], self.area_max[0]),
            uniform(rng, self.area_min[1], self.area_max[1]),
            uniform(rng, self.ap_height_m[0], self.ap_height_m[1]),
        )
    }

    pub fn sample_ue<R: Rng>(&self, rng: &mut R) -> Point3 {
        Point3::new(
            uniform(rng, self.area_min[0], self.area_max[0]),
            uniform(rng, self.area_min[1], self.area_max[1]),
            self.ue_height_m,
        )
    }
}

fn uniform<R: Rng>(rng: &mut R, lo: f64, hi: f64) -> f64 {
    if hi <= lo {
        lo
    } else {
        lo + (hi - lo) * rng.random::<f64>()
    }
}

/// Thermal noise power in watts over `bandwidth_hz`.
pub fn thermal_noise_watts(psd_dbm_per_hz: f64, noise_figure_db: f64, bandwidth_hz: f64) -> f64 {
    let dbm = psd_dbm_per_hz + 10.0 * libm::log10(bandwidth_hz) + noise_figure_db;
    libm::pow(10.0, (dbm - 30.0) / 10.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScenarioConfig {
    pub n_aps: usize,
    pub n_ues: usize,
    pub n_antennas: usize,
    pub carrier_freq_hz: f64,
    pub comm_bandwidth_hz: f64,
    pub sensing_bandwidth_hz: f64,
    pub noise_psd_dbm_per_hz: f64,
    pub noise_figure_db: f64,
    /// Overrides the thermal-noise computation when set.
    pub noise_power_comm: Option<f64>,
    pub noise_power_sensing: Option<f64>,
    pub p_max_watts: f64,
    pub p_s_watts: f64,
    pub tau_c: u32,
    pub tau_d: u32,
    pub ap_positions: Option<Vec<Point3>>,
    pub ue_positions: Option<Vec<Point3>>,
    pub target: [f64; 2],
    pub layout: Layout,
    pub channel: ChannelModel,
    /// AP count used in the `L²` of the sensing SNR constant; defaults to the
    /// number of deployed APs.
    pub xi_ap_count: Option<usize>,
    pub rng_seed: u64,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            n_aps: 12,
            n_ues: 6,
            n_antennas: 8,
            carrier_freq_hz: 28e9,
            comm_bandwidth_hz: 100e6,
            sensing_bandwidth_hz: 100e6,
            noise_psd_dbm_per_hz: -174.0,
            noise_figure_db: 7.0,
            noise_power_comm: None,
            noise_power_sensing: None,
            p_max_watts: 1.0,
            p_s_watts: 1.0,
            tau_c: 200,
            tau_d: 190,
            ap_positions: None,
            ue_positions: None,
            target: [100.0, 100.0],
            layout: Layout::default(),
            channel: ChannelModel::default(),
            xi_ap_count: None,
            rng_seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub ap_positions: Vec<Point3>,
    pub ue_positions: Vec<Point3>,
    pub target_position: [f64; 2],
    pub n_antennas: usize,
    pub carrier_freq_hz: f64,
    pub comm_bandwidth_hz: f64,
    pub sensing_bandwidth_hz: f64,
    pub noise_power_comm: f64,
    pub noise_power_sensing: f64,
    pub p_max_watts: f64,
    pub p_s_watts: f64,
    pub tau_c: u32,
    pub tau_d: u32,
    /// Symmetric `L×L` RCS coefficients, row = TX AP, column = RX AP.
    pub rcs: CMatrix,
    pub channel: ChannelModel,
    pub xi_ap_count: Option<usize>,
    pub rng_seed: u64,
}

impl Scenario {
    pub fn n_aps(&self) -> usize {
        self.ap_positions.len()
    }

    pub fn n_ues(&self) -> usize {
        self.ue_positions.len()
    }

    /// Checks the structural invariants a hand-edited or deserialized
    /// scenario must satisfy.
    pub fn validate(&self) -> Result<(), ScenarioError> {
        use ScenarioError::InvalidConfig as Bad;
        if self.n_aps() < 2 {
            return Err(Bad("at least two APs are required"));
        }
        if self.n_ues() == 0 {
            return Err(Bad("at least one UE is required"));
        }
        if self.n_antennas == 0 {
            return Err(Bad("antenna count must be positive"));
        }
        if self.tau_c == 0 || self.tau_d == 0 || self.tau_d > self.tau_c {
            return Err(Bad("require 0 < tau_d <= tau_c"));
        }
        let positive = [
            self.carrier_freq_hz,
            self.comm_bandwidth_hz,
            self.sensing_bandwidth_hz,
            self.noise_power_comm,
            self.noise_power_sensing,
            self.p_max_watts,
            self.p_s_watts,
        ];
        if positive.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
            return Err(Bad("powers, bandwidths and frequencies must be positive"));
        }
        if self.rcs.dim != self.n_aps() {
            return Err(Bad("RCS matrix must be L x L"));
        }
        for m in 0..self.n_aps() {
            for n in 0..m {
                if self.rcs[(m, n)] != self.rcs[(n, m)] {
                    return Err(Bad("RCS matrix must be symmetric"));
                }
            }
        }
        ap_target_ranges(self).map(|_| ())
    }
}

/// Builds a scenario, drawing any missing positions and the RCS matrix
/// from the configured seed.
pub fn build_scenario(config: &ScenarioConfig) -> Result<Scenario, ScenarioError> {
    use ScenarioError::InvalidConfig as Bad;
    let l = config.n_aps;
    let k = config.n_ues;
    if k == 0 {
        return Err(Bad("at least one UE is required"));
    }
    if l < 2 {
        return Err(Bad("at least two APs are required"));
    }
    if !(0.0..=1.0).contains(&config.channel.blockage_prob) {
        return Err(Bad("blockage probability must lie in [0, 1]"));
    }
    if let Fading::Rician { k_factor } = config.channel.fading {
        if !(k_factor >= 0.0 && k_factor.is_finite()) {
            return Err(Bad("Rician factor must be finite and nonnegative"));
        }
    }
    if let PathLoss::LogDistance { exponent, ref_distance_m, ref_gain } = config.channel.path_loss {
        if !(exponent.is_finite() && ref_distance_m > 0.0 && ref_gain.is_none_or(|g| g > 0.0)) {
            return Err(Bad("invalid path-loss parameters"));
        }
    }
    if config.xi_ap_count == Some(0) {
        return Err(Bad("xi_ap_count must be positive"));
    }

    let ap_positions = match &config.ap_positions {
        Some(p) if p.len() != l => return Err(Bad("ap_positions length must equal n_aps")),
        Some(p) => p.clone(),
        None => {
            let mut rng = stream_rng(config.rng_seed, STREAM_AP);
            (0..l).map(|_| config.layout.sample_ap(&mut rng)).collect()
        }
    };
    let ue_positions = match &config.ue_positions {
        Some(p) if p.len() != k => return Err(Bad("ue_positions length must equal n_ues")),
        Some(p) => p.clone(),
        None => {
            let mut rng = stream_rng(config.rng_seed, STREAM_UE);
            (0..k).map(|_| config.layout.sample_ue(&mut rng)).collect()
        }
    };

    let noise_power_comm = config.noise_power_comm.unwrap_or_else(|| {
        thermal_noise_watts(config.noise_psd_dbm_per_hz, config.noise_figure_db, config.comm_bandwidth_hz)
    });
    let noise_power_sensing = config.noise_power_sensing.unwrap_or_else(|| {
        thermal_noise_watts(config.noise_psd_dbm_per_hz, config.noise_figure_db, config.sensing_bandwidth_hz)
    });

    let scenario = Scenario {
        rcs: sample_rcs(l, config.rng_seed),
        ap_positions,
        ue_positions,
        target_position: config.target,
        n_antennas: config.n_antennas,
        carrier_freq_hz: config.carrier_freq_hz,
        comm_bandwidth_hz: config.comm_bandwidth_hz,
        sensing_bandwidth_hz: config.sensing_bandwidth_hz,
        noise_power_comm,
        noise_power_sensing,
        p_max_watts: config.p_max_watts,
        p_s_watts: config.p_s_watts,
        tau_c: config.tau_c,
        tau_d: config.tau_d,
        channel: config.channel.clone(),
        xi_ap_count: config.xi_ap_count,
        rng_seed: config.rng_seed,
    };
    scenario.validate()?;
    Ok(scenario)
}

/// Swerling-I style RCS draw: unit-variance circular Gaussian on the upper
/// triangle (diagonal included), mirrored.
pub fn sample_rcs(n_aps: usize, seed: u64) -> CMatrix {
    let mut rng = stream_rng(seed, STREAM_RCS);
    let mut rcs = CMatrix::zeros(n_aps);
    for m in 0..n_aps {
        for n in m..n_aps {
            let beta = complex_gaussian(&mut rng);
            rcs[(m, n)] = beta;
            rcs[(n, m)] = beta;
        }
    }
    rcs
}

pub(crate) fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// `CN(0, 1)` sample.
pub(crate) fn complex_gaussian<R: Rng>(rng: &mut R) -> Complex64 {
    let re: f64 = StandardNormal.sample(rng);
    let im: f64 = StandardNormal.sample(rng);
    Complex64::new(re, im) * core::f64::consts::FRAC_1_SQRT_2
}

/// Horizontal distance from each AP to the target.
pub fn ap_target_ranges(s: &Scenario) -> Result<Vec<f64>, ScenarioError> {
    let [tx, ty] = s.target_position;
    s.ap_positions
        .iter()
        .enumerate()
        .map(|(ap, p)| {
            let r = libm::hypot(p.x - tx, p.y - ty);
            if r > 0.0 {
                Ok(r)
            } else {
                Err(ScenarioError::DegenerateGeometry { ap })
            }
        })
        .collect()
}

/// Unit-modulus ULA response along the x axis at half-wavelength spacing,
/// driven by the direction cosine `u` of the departure direction.
pub fn steering_vector(n_antennas: usize, direction_cosine: f64) -> Vec<Complex64> {
    (0..n_antennas)
        .map(|n| Complex64::from_polar(1.0, PI * n as f64 * direction_cosine))
        .collect()
}

/// `T` realizations of every UE-AP channel vector plus the per-pair mean
/// gains used by the heuristic ordering.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelEnsemble {
    pub n_realizations: usize,
    pub n_ues: usize,
    pub n_aps: usize,
    pub n_antennas: usize,
    /// Flat `[t][k][l][n]` storage.
    pub h: Vec<Complex64>,
    /// `g_{lk}`: `L×K`, mean of `‖h_{kl}‖²/N`.
    pub gain: Matrix,
    /// `g_l = Σ_k g_{lk}`.
    pub ap_gain: Vec<f64>,
    /// Static per-link blockage draw, `[k][l]`.
    pub blocked: Vec<bool>,
}

impl ChannelEnsemble {
    #[inline]
    pub fn channel(&self, t: usize, k: usize, l: usize) -> &[Complex64] {
        let n = self.n_antennas;
        let base = ((t * self.n_ues + k) * self.n_aps + l) * n;
        &self.h[base..base + n]
    }

    pub fn is_blocked(&self, k: usize, l: usize) -> bool {
        self.blocked[k * self.n_aps + l]
    }
}

/// Draws `t_realizations` i.i.d. channel realizations from the synthetic
/// Rician/log-distance model.
pub fn generate_channels(s: &Scenario, t_realizations: usize) -> Result<ChannelEnsemble, ScenarioError> {
    if t_realizations == 0 {
        return Err(ScenarioError::InvalidConfig("at least one channel realization is required"));
    }
    s.validate()?;
    let (l_count, k_count, n) = (s.n_aps(), s.n_ues(), s.n_antennas);

    let mut block_rng = stream_rng(s.rng_seed, STREAM_BLOCKAGE);
    let blocked: Vec<bool> = (0..k_count * l_count)
        .map(|_| s.channel.blockage_prob > 0.0 && block_rng.random::<f64>() < s.channel.blockage_prob)
        .collect();

    // Per-link deterministic parts.
    let mut amplitude = vec![0.0; k_count * l_count];
    let mut los = Vec::with_capacity(k_count * l_count);
    for k in 0..k_count {
        for l in 0..l_count {
            let ap = &s.ap_positions[l];
            let ue = &s.ue_positions[k];
            let d = ap.distance(ue);
            let u = if d > 0.0 { (ue.x - ap.x) / d } else { 0.0 };
            let idx = k * l_count + l;
            amplitude[idx] = libm::sqrt(s.channel.mean_gain(s.carrier_freq_hz, d, blocked[idx]));
            los.push(steering_vector(n, u));
        }
    }
    let (w_los, w_nlos) = s.channel.los_weights();

    let mut rng = stream_rng(s.rng_seed, STREAM_CHANNEL);
    let mut h = Vec::with_capacity(t_realizations * k_count * l_count * n);
    let mut gain_acc = vec![0.0; k_count * l_count];
    for _ in 0..t_realizations {
        for k in 0..k_count {
            for l in 0..l_count {
                let idx = k * l_count + l;
                let amp = amplitude[idx];
                let mut energy = 0.0;
                for a in &los[idx] {
                    let mut v = *a * w_los;
                    if w_nlos > 0.0 {
                        v += complex_gaussian(&mut rng) * w_nlos;
                    }
                    let v = v * amp;
                    energy += v.norm_sqr();
                    h.push(v);
                }
                gain_acc[idx] += energy / n as f64;
            }
        }
    }

    let t = t_realizations as f64;
    let gain = Matrix::from_fn(l_count, k_count, |l, k| gain_acc[k * l_count + l] / t);
    let ap_gain = (0..l_count).map(|l| (0..k_count).map(|k| gain[(l, k)]).sum()).collect();
    Ok(ChannelEnsemble {
        n_realizations: t_realizations,
        n_ues: k_count,
        n_aps: l_count,
        n_antennas: n,
        h,
        gain,
        ap_gain,
        blocked,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_config() -> ScenarioConfig {
        ScenarioConfig { n_aps: 4, n_ues: 2, rng_seed: 7, ..ScenarioConfig::default() }
    }

    #[test]
    fn default_deployment_and_noise_floor() {
        let cfg = ScenarioConfig { n_aps: 12, n_ues: 6, ..ScenarioConfig::default() };
        let s = build_scenario(&cfg).unwrap();
        assert_eq!(s.n_aps(), 12);
        assert_eq!(s.n_ues(), 6);
        assert_eq!(s.carrier_freq_hz, 28e9);
        // -174 dBm/Hz + 80 dB + 7 dB = -87 dBm
        assert!((s.noise_power_comm - 10f64.powf(-11.7)).abs() < 1e-20);
    }

    #[test]
    fn zero_ues_rejected() {
        let cfg = ScenarioConfig { n_ues: 0, ..small_config() };
        assert!(matches!(build_scenario(&cfg), Err(ScenarioError::InvalidConfig(_))));
    }

    #[test]
    fn nonpositive_power_rejected() {
        let cfg = ScenarioConfig { p_s_watts: 0.0, ..small_config() };
        assert!(build_scenario(&cfg).is_err());
        let cfg = ScenarioConfig { sensing_bandwidth_hz: -1.0, ..small_config() };
        assert!(build_scenario(&cfg).is_err());
    }

    #[test]
    fn ap_on_target_rejected() {
        let mut aps: Vec<Point3> = (0..4).map(|i| Point3::new(10.0 * i as f64, 5.0, 20.0)).collect();
        aps[2] = Point3::new(100.0, 100.0, 25.0);
        let cfg = ScenarioConfig { ap_positions: Some(aps), ..small_config() };
        assert_eq!(build_scenario(&cfg), Err(ScenarioError::DegenerateGeometry { ap: 2 }));
    }

    #[test]
    fn same_seed_same_scenario() {
        let a = build_scenario(&small_config()).unwrap();
        let b = build_scenario(&small_config()).unwrap();
        assert_eq!(a, b);
        let c = build_scenario(&ScenarioConfig { rng_seed: 8, ..small_config() }).unwrap();
        assert_ne!(a.rcs, c.rcs);
    }

    #[test]
    fn rcs_is_symmetric() {
        let s = build_scenario(&small_config()).unwrap();
        for m in 0..4 {
            for n in 0..4 {
                assert_eq!(s.rcs[(m, n)], s.rcs[(n, m)]);
            }
        }
    }

    #[test]
    fn three_four_five_range() {
        let mut s = build_scenario(&small_config()).unwrap();
        s.target_position = [0.0, 0.0];
        s.ap_positions[0] = Point3::new(3.0, 4.0, 12.0);
        let r = ap_target_ranges(&s).unwrap();
        assert!((r[0] - 5.0).abs() < 1e-15);
        s.ap_positions[1] = Point3::new(0.0, 0.0, 30.0);
        assert_eq!(ap_target_ranges(&s), Err(ScenarioError::DegenerateGeometry { ap: 1 }));
    }

    #[test]
    fn unit_gain_los_mode() {
        let mut cfg = small_config();
        cfg.channel = ChannelModel { path_loss: PathLoss::Unity, fading: Fading::PureLos, ..ChannelModel::default() };
        let s = build_scenario(&cfg).unwrap();
        let e = generate_channels(&s, 5).unwrap();
        for t in 0..5 {
            for k in 0..2 {
                for l in 0..4 {
                    let energy: f64 = e.channel(t, k, l).iter().map(|c| c.norm_sqr()).sum();
                    assert!((energy - s.n_antennas as f64).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn ap_gain_is_exact_sum() {
        let s = build_scenario(&small_config()).unwrap();
        let e = generate_channels(&s, 20).unwrap();
        for l in 0..4 {
            let sum: f64 = (0..2).map(|k| e.gain[(l, k)]).sum();
            assert_eq!(sum, e.ap_gain[l]);
        }
    }

    #[test]
    fn zero_realizations_rejected() {
        let s = build_scenario(&small_config()).unwrap();
        assert!(generate_channels(&s, 0).is_err());
    }

    #[test]
    fn steering_vector_unit_modulus() {
        for v in steering_vector(8, 0.37) {
            assert!((v.norm() - 1.0).abs() < 1e-15);
        }
    }
}
