//! Sweep configuration: a TOML file with `[sweep]`, `[channel]`, `[mc]`,
//! `[lower]`, `[upper]` and `[alignment]` sections. Every key is optional.

use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum SnrConvention {
    /// `P = 10^{snr/10}`.
    Total,
    /// `P = N·10^{snr/10}`.
    PerSubcarrier,
}

impl SnrConvention {
    pub fn power(self, snr_db: f64, n: usize) -> f64 {
        let lin = 10f64.powf(snr_db / 10.0);
        match self {
            SnrConvention::Total => lin,
            SnrConvention::PerSubcarrier => n as f64 * lin,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            SnrConvention::Total => "total",
            SnrConvention::PerSubcarrier => "per-subcarrier",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundName {
    GaussianOptimal,
    GaussianLinear,
    SaPilot,
    SaSuperposition,
    UbLogdet,
    UbDof,
    UbGeneral,
}

impl BoundName {
    pub const ALL: [BoundName; 7] = [
        BoundName::GaussianOptimal,
        BoundName::GaussianLinear,
        BoundName::SaPilot,
        BoundName::SaSuperposition,
        BoundName::UbLogdet,
        BoundName::UbDof,
        BoundName::UbGeneral,
    ];

    pub fn name(self) -> &'static str {
        match self {
            BoundName::GaussianOptimal => "gaussian_optimal",
            BoundName::GaussianLinear => "gaussian_linear",
            BoundName::SaPilot => "sa_pilot",
            BoundName::SaSuperposition => "sa_superposition",
            BoundName::UbLogdet => "ub_logdet",
            BoundName::UbDof => "ub_dof",
            BoundName::UbGeneral => "ub_general",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|b| b.name() == s)
    }

    pub fn is_upper(self) -> bool {
        matches!(self, BoundName::UbLogdet | BoundName::UbDof | BoundName::UbGeneral)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChannelSource {
    NtnTdlA,
    SyntheticFile,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QPolicy {
    /// `(P/N)·I`.
    Isotropic,
    /// Ascent on the bound's own objective from the isotropic start.
    Optimized,
    /// The covariance attaining `ub_logdet`; tight against it at `σ = 0`.
    LogdetArgmax,
}

impl QPolicy {
    pub fn name(self) -> &'static str {
        match self {
            QPolicy::Isotropic => "isotropic",
            QPolicy::Optimized => "optimized",
            QPolicy::LogdetArgmax => "logdet_argmax",
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepSection {
    pub snr_db: Vec<f64>,
    pub sigma: Vec<f64>,
    pub n_subcarriers: usize,
    pub bounds: Vec<BoundName>,
    pub realizations: usize,
    pub snr_convention: SnrConvention,
}

impl Default for SweepSection {
    fn default() -> Self {
        SweepSection {
            snr_db: vec![0.0, 10.0, 20.0, 30.0, 40.0],
            sigma: vec![0.1, 0.01],
            n_subcarriers: 64,
            bounds: vec![
                BoundName::GaussianLinear,
                BoundName::SaPilot,
                BoundName::UbLogdet,
                BoundName::UbDof,
            ],
            realizations: 20,
            snr_convention: SnrConvention::PerSubcarrier,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChannelSection {
    pub source: ChannelSource,
    pub delay_spread_ns: f64,
    /// Defaults to the 20 MHz reference numerology (15 kHz × 1024).
    pub sample_period_s: Option<f64>,
    pub tap_seed: u64,
    pub f_file: Option<PathBuf>,
    pub g_file: Option<PathBuf>,
}

impl Default for ChannelSection {
    fn default() -> Self {
        ChannelSection {
            source: ChannelSource::NtnTdlA,
            delay_spread_ns: dopcap_core::ofdm::DEFAULT_DELAY_SPREAD_NS,
            sample_period_s: None,
            tap_seed: 1,
            f_file: None,
            g_file: None,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct McSection {
    pub samples: usize,
    pub seed: u64,
    /// Mixture components for the superposition coarse layer.
    pub inner: usize,
}

impl Default for McSection {
    fn default() -> Self {
        McSection {
            samples: 10_000,
            seed: 7,
            inner: dopcap_core::alignment::MIN_MIXTURE,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LowerSection {
    pub q_policy: QPolicy,
}

impl Default for LowerSection {
    fn default() -> Self {
        LowerSection {
            q_policy: QPolicy::Isotropic,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct UpperSection {
    /// Support radius `r = radius_factor · √P`.
    pub radius_factor: f64,
    /// Add the `α ∈ {1..N}`, `S = I` grid to `ub_general`.
    pub alpha_grid: bool,
    pub gap_tol: f64,
}

impl Default for UpperSection {
    fn default() -> Self {
        UpperSection {
            radius_factor: 10.0,
            alpha_grid: false,
            gap_tol: 1e-6,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AlignmentSection {
    pub rank_tol: f64,
    pub rho_min: f64,
    pub rho_max: f64,
    pub rho_points: usize,
    pub score_samples: usize,
}

impl Default for AlignmentSection {
    fn default() -> Self {
        AlignmentSection {
            rank_tol: dopcap_core::alignment::RANK_TOL,
            rho_min: 0.01,
            rho_max: 0.5,
            rho_points: 8,
            score_samples: 1000,
        }
    }
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub sweep: SweepSection,
    pub channel: ChannelSection,
    pub mc: McSection,
    pub lower: LowerSection,
    pub upper: UpperSection,
    pub alignment: AlignmentSection,
}

impl Config {
    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        let mut cfg = Self::from_toml(&text)?;
        // Matrix paths are relative to the config file.
        let base = path.parent().unwrap_or(Path::new("."));
        for p in [&mut cfg.channel.f_file, &mut cfg.channel.g_file].into_iter().flatten() {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let err = |m: &str| Err(CliError::Config(m.into()));
        let s = &self.sweep;
        if s.bounds.is_empty() {
            return err("sweep.bounds is empty");
        }
        if s.snr_db.is_empty() || s.sigma.is_empty() {
            return err("sweep.snr_db and sweep.sigma must be nonempty");
        }
        if s.snr_db.iter().any(|x| !x.is_finite()) {
            return err("sweep.snr_db must be finite");
        }
        if s.sigma.iter().any(|x| !(x.is_finite() && *x >= 0.0)) {
            return err("sweep.sigma entries must be finite and >= 0");
        }
        if s.n_subcarriers < 2 {
            return err("sweep.n_subcarriers must be >= 2");
        }
        if s.realizations == 0 {
            return err("sweep.realizations must be >= 1");
        }
        if self.mc.samples < dopcap_core::gaussian::MIN_MC_SAMPLES {
            return err("mc.samples must be >= 1000");
        }
        if self.mc.inner < dopcap_core::alignment::MIN_MIXTURE {
            return err("mc.inner must be >= 1000");
        }
        if self.channel.source == ChannelSource::SyntheticFile
            && (self.channel.f_file.is_none() || self.channel.g_file.is_none())
        {
            return err("channel.source = synthetic_file needs channel.f_file and channel.g_file");
        }
        if !(self.channel.delay_spread_ns > 0.0) {
            return err("channel.delay_spread_ns must be > 0");
        }
        if self.channel.sample_period_s.is_some_and(|t| !(t > 0.0)) {
            return err("channel.sample_period_s must be > 0");
        }
        if !(self.upper.radius_factor > 0.0 && self.upper.gap_tol > 0.0) {
            return err("upper.radius_factor and upper.gap_tol must be > 0");
        }
        let a = &self.alignment;
        if !(a.rank_tol > 0.0) || a.rho_points == 0 || !(0.0 < a.rho_min && a.rho_min <= a.rho_max && a.rho_max < 1.0) {
            return err("alignment: need rank_tol > 0, rho_points >= 1 and 0 < rho_min <= rho_max < 1");
        }
        if a.score_samples < dopcap_core::gaussian::MIN_MC_SAMPLES {
            return err("alignment.score_samples must be >= 1000");
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_gives_defaults() {
        let cfg = Config::from_toml("").unwrap();
        assert_eq!(cfg.sweep.n_subcarriers, 64);
        assert_eq!(cfg.sweep.realizations, 20);
        assert!(cfg.validate().is_ok());
    }

    #[test]
    fn sections_parse() {
        let cfg = Config::from_toml(
            r#"
            [sweep]
            snr_db = [30, 40]
            bounds = ["ub_logdet", "sa_superposition"]
            snr_convention = "total"
            [mc]
            samples = 2000
            "#,
        )
        .unwrap();
        assert_eq!(cfg.sweep.bounds, vec![BoundName::UbLogdet, BoundName::SaSuperposition]);
        assert_eq!(cfg.sweep.snr_convention, SnrConvention::Total);
        assert_eq!(cfg.mc.samples, 2000);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(Config::from_toml("[sweep]\nbogus = 1\n").is_err());
        assert!(Config::from_toml("[sweep]\nbounds = [\"nope\"]\n").is_err());
        let cfg = Config::from_toml("[sweep]\nbounds = []\n").unwrap();
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn snr_conventions() {
        assert!((SnrConvention::PerSubcarrier.power(10.0, 64) - 640.0).abs() < 1e-9);
        assert!((SnrConvention::Total.power(10.0, 64) - 10.0).abs() < 1e-12);
    }
}
