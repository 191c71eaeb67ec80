//! Doppler-impaired CP-OFDM channels and their first-order linearization.
//!
//! Subcarrier indices are zero-based. The Doppler shift `f_d` is normalized
//! by the subcarrier spacing. The first sample kept after cyclic-prefix
//! removal has time index `m = L`.

use std::f64::consts::PI;

use rand::Rng;

use crate::error::{Error, Result};
use crate::linalg::{c, CMat, C64};
use crate::mc::complex_normal;

/// Below this `|sin(π x / N)|` the Dirichlet ratio is evaluated by its
/// analytic limit `cos(π x) / cos(π x / N)`.
pub const DIRICHLET_SINGULAR_TOL: f64 = 1e-9;

pub const DEFAULT_CARRIER_FREQ_HZ: f64 = 2.0e9;
pub const DEFAULT_SUBCARRIER_SPACING_HZ: f64 = 15.0e3;

/// Sampling period of the 20 MHz numerology (1024-point FFT at 15 kHz).
pub const REFERENCE_SAMPLE_PERIOD_S: f64 = 1.0 / (DEFAULT_SUBCARRIER_SPACING_HZ * 1024.0);

/// NTN-TDL-A normalized delays.
pub const NTN_TDL_A_DELAYS: [f64; 3] = [0.0, 1.0811, 2.8416];
/// NTN-TDL-A average tap powers in dB.
pub const NTN_TDL_A_POWERS_DB: [f64; 3] = [0.0, -4.675, -6.482];
pub const DEFAULT_DELAY_SPREAD_NS: f64 = 100.0;

#[derive(Debug, Clone, PartialEq)]
pub struct OfdmConfig {
    pub n_subcarriers: usize,
    pub n_taps: usize,
    pub cp_length: usize,
    pub carrier_freq_hz: f64,
    pub subcarrier_spacing_hz: f64,
    pub sample_period_s: f64,
}

impl OfdmConfig {
    /// `n` subcarriers, `l` taps, CP of `l - 1` samples, 2 GHz carrier,
    /// 15 kHz spacing and `T_s = 1 / (Δf · n)`.
    pub fn new(n: usize, l: usize) -> Result<Self> {
        let cfg = OfdmConfig {
            n_subcarriers: n,
            n_taps: l,
            cp_length: l.saturating_sub(1),
            carrier_freq_hz: DEFAULT_CARRIER_FREQ_HZ,
            subcarrier_spacing_hz: DEFAULT_SUBCARRIER_SPACING_HZ,
            sample_period_s: 1.0 / (DEFAULT_SUBCARRIER_SPACING_HZ * n as f64),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn with_sample_period(self, sample_period_s: f64) -> Result<Self> {
        let cfg = OfdmConfig {
            sample_period_s,
            ..self
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_subcarriers < 2 {
            return Err(Error::InvalidConfig(format!(
                "need at least 2 subcarriers, got {}",
                self.n_subcarriers
            )));
        }
        if self.n_taps < 1 {
            return Err(Error::InvalidConfig("need at least one tap".into()));
        }
        if self.cp_length + 1 != self.n_taps {
            return Err(Error::InvalidConfig(format!(
                "cyclic prefix {} must equal n_taps - 1 = {}",
                self.cp_length,
                self.n_taps - 1
            )));
        }
        if !(self.sample_period_s > 0.0) {
            return Err(Error::InvalidConfig("sample period must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MultipathProfile {
    pub normalized_delays: Vec<f64>,
    pub powers_db: Vec<f64>,
    pub desired_rms_delay_spread_ns: f64,
}

impl MultipathProfile {
    pub fn new(normalized_delays: Vec<f64>, powers_db: Vec<f64>, desired_rms_delay_spread_ns: f64) -> Result<Self> {
        let p = MultipathProfile {
            normalized_delays,
            powers_db,
            desired_rms_delay_spread_ns,
        };
        p.validate()?;
        Ok(p)
    }

    /// The 3GPP NTN-TDL-A profile scaled to `delay_spread_ns`.
    pub fn ntn_tdl_a(delay_spread_ns: f64) -> Self {
        MultipathProfile {
            normalized_delays: NTN_TDL_A_DELAYS.to_vec(),
            powers_db: NTN_TDL_A_POWERS_DB.to_vec(),
            desired_rms_delay_spread_ns: delay_spread_ns,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.normalized_delays.len() != self.powers_db.len() {
            return Err(Error::InvalidProfile(format!(
                "{} delays but {} powers",
                self.normalized_delays.len(),
                self.powers_db.len()
            )));
        }
        if self.normalized_delays.is_empty() {
            return Err(Error::InvalidProfile("profile has no taps".into()));
        }
        if let Some(d) = self.normalized_delays.iter().find(|d| !(**d >= 0.0)) {
            return Err(Error::InvalidProfile(format!("negative delay {d}")));
        }
        if self.normalized_delays[0] != 0.0 {
            return Err(Error::InvalidProfile("first normalized delay must be 0".into()));
        }
        if self.normalized_delays.windows(2).any(|w| w[1] < w[0]) {
            return Err(Error::InvalidProfile("delays must be nondecreasing".into()));
        }
        if !(self.desired_rms_delay_spread_ns >= 0.0) {
            return Err(Error::InvalidProfile("delay spread must be nonnegative".into()));
        }
        Ok(())
    }

    /// Average tap powers in linear scale.
    pub fn linear_powers(&self) -> Vec<f64> {
        self.powers_db.iter().map(|p| 10f64.powf(p / 10.0)).collect()
    }
}

/// Channel impulse response indexed by sample delay.
#[derive(Debug, Clone, PartialEq)]
pub struct TapSet {
    pub coefficients: Vec<C64>,
}

impl TapSet {
    pub fn new(coefficients: Vec<C64>) -> Self {
        TapSet { coefficients }
    }

    pub fn len(&self) -> usize {
        self.coefficients.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coefficients.is_empty()
    }

    /// `Σ_ℓ h_ℓ e^{-j2πℓk/N}` for every subcarrier `k`, evaluated directly.
    pub fn frequency_response(&self, n: usize) -> Vec<C64> {
        (0..n)
            .map(|k| {
                self.coefficients
                    .iter()
                    .enumerate()
                    .map(|(l, h)| h * C64::from_polar(1.0, -2.0 * PI * (l * k % n) as f64 / n as f64))
                    .sum()
            })
            .collect()
    }
}

/// Map normalized delays to integer sample indices:
/// `n_k = round(τ_k · DS / T_s)`, ties away from zero.
pub fn scale_delays(profile: &MultipathProfile, sample_period_s: f64) -> Result<Vec<usize>> {
    profile.validate()?;
    if !(sample_period_s > 0.0) {
        return Err(Error::InvalidConfig("sample period must be positive".into()));
    }
    let ts_ns = sample_period_s * 1e9;
    Ok(profile
        .normalized_delays
        .iter()
        .map(|tau| (tau * profile.desired_rms_delay_spread_ns / ts_ns).round() as usize)
        .collect())
}

/// Draw one Rayleigh realization: `α_k = √P_k · g_k`, `g_k ~ CN(0, 1)`,
/// placed at sample index `n_k`. Taps sharing an index add up.
pub fn draw_taps<R: Rng + ?Sized>(profile: &MultipathProfile, indices: &[usize], rng: &mut R) -> Result<TapSet> {
    profile.validate()?;
    if indices.len() != profile.powers_db.len() {
        return Err(Error::DimensionMismatch {
            expected: profile.powers_db.len(),
            got: indices.len(),
        });
    }
    let len = indices.iter().max().map_or(0, |m| m + 1);
    let mut h = vec![c(0.0, 0.0); len];
    for (&n_k, p) in indices.iter().zip(profile.linear_powers()) {
        h[n_k] += complex_normal(rng, 1.0) * p.sqrt();
    }
    Ok(TapSet::new(h))
}

fn dirichlet_ratio(m: i64, f_d: f64, n: usize) -> f64 {
    let nf = n as f64;
    let x = f_d + m as f64;
    let den = (PI * x / nf).sin();
    if den.abs() < DIRICHLET_SINGULAR_TOL {
        return (PI * x).cos() / (PI * x / nf).cos();
    }
    // sin(π(f_d + m)) = (-1)^m sin(π f_d) for integer m, avoiding cancellation.
    let sign = if m.rem_euclid(2) == 0 { 1.0 } else { -1.0 };
    sign * (PI * f_d).sin() / den / nf
}

/// Inter-carrier interference matrix `B(f_d)`.
pub fn ici_matrix(config: &OfdmConfig, f_d: f64) -> CMat {
    let n = config.n_subcarriers;
    let nf = n as f64;
    let l = config.n_taps as f64;
    CMat::from_fn(n, n, |i, k| {
        let m = k as i64 - i as i64;
        let psi = 0.5 * (((2.0 * l - 1.0) / nf + 1.0) * f_d + (1.0 - 1.0 / nf) * m as f64);
        C64::from_polar(dirichlet_ratio(m, f_d, n), 2.0 * PI * psi)
    })
}

fn check_taps(config: &OfdmConfig, taps: &TapSet) -> Result<()> {
    config.validate()?;
    if taps.len() > config.cp_length + 1 {
        return Err(Error::InvalidConfig(format!(
            "{} taps exceed cyclic prefix of {} samples",
            taps.len(),
            config.cp_length
        )));
    }
    Ok(())
}

/// Exact frequency-domain channel `H(i,k) = H_f(k) · B(i,k)`.
pub fn full_channel(config: &OfdmConfig, taps: &TapSet, f_d: f64) -> Result<CMat> {
    check_taps(config, taps)?;
    let hf = taps.frequency_response(config.n_subcarriers);
    let mut h = ici_matrix(config, f_d);
    for (k, mut col) in h.column_iter_mut().enumerate() {
        col *= hf[k];
    }
    Ok(h)
}

/// Nominal channel `F` and Doppler sensitivity `G` with `H(f_d) ≈ F + f_d G`.
#[derive(Debug, Clone, PartialEq)]
pub struct DopplerLinearization {
    pub nominal: CMat,
    pub sensitivity: CMat,
}

/// The Doppler derivative kernel `D(i,k)` (independent of the taps).
pub fn derivative_kernel(config: &OfdmConfig) -> CMat {
    let n = config.n_subcarriers;
    let nf = n as f64;
    let l = config.n_taps as f64;
    CMat::from_fn(n, n, |i, k| {
        if i == k {
            c(0.0, PI * (1.0 + (2.0 * l - 1.0) / nf))
        } else {
            let m = k as f64 - i as f64;
            C64::from_polar(PI / nf, -PI * m / nf) / (PI * m / nf).sin()
        }
    })
}

pub fn linearize(config: &OfdmConfig, taps: &TapSet) -> Result<DopplerLinearization> {
    check_taps(config, taps)?;
    let n = config.n_subcarriers;
    let hf = taps.frequency_response(n);
    let nominal = CMat::from_fn(n, n, |i, k| if i == k { hf[k] } else { c(0.0, 0.0) });
    let mut sensitivity = derivative_kernel(config);
    for (k, mut col) in sensitivity.column_iter_mut().enumerate() {
        col *= hf[k];
    }
    Ok(DopplerLinearization { nominal, sensitivity })
}
