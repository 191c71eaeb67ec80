//! Channel realizations for a sweep: NTN-TDL-A tap draws linearized around
//! zero Doppler, or a fixed `(F, G)` pair read from text files.

use dopcap_core::linalg::CMat;
use dopcap_core::mc::sample_rng;
use dopcap_core::ofdm::{self, MultipathProfile, OfdmConfig, TapSet, REFERENCE_SAMPLE_PERIOD_S};
use dopcap_core::{matrix_io, StructuredChannel};

use crate::config::{ChannelSource, Config};
use crate::CliError;

#[derive(Debug, Clone)]
pub struct Realization {
    pub index: usize,
    pub f: CMat,
    pub g: CMat,
    /// `None` for file-based channels.
    pub taps: Option<TapSet>,
}

impl Realization {
    pub fn channel(&self, sigma: f64) -> Result<StructuredChannel, CliError> {
        Ok(StructuredChannel::new(self.f.clone(), self.g.clone(), sigma * sigma)?)
    }
}

pub fn sample_period(cfg: &Config) -> f64 {
    cfg.channel.sample_period_s.unwrap_or(REFERENCE_SAMPLE_PERIOD_S)
}

pub fn profile(cfg: &Config) -> MultipathProfile {
    MultipathProfile::ntn_tdl_a(cfg.channel.delay_spread_ns)
}

/// Tap indices and the OFDM configuration they imply (CP covers the
/// longest delay).
pub fn ofdm_setup(cfg: &Config) -> Result<(Vec<usize>, OfdmConfig), CliError> {
    let ts = sample_period(cfg);
    let idx = ofdm::scale_delays(&profile(cfg), ts)?;
    let l = idx.iter().max().map_or(1, |m| m + 1);
    let ocfg = OfdmConfig::new(cfg.sweep.n_subcarriers, l)?.with_sample_period(ts)?;
    Ok((idx, ocfg))
}

/// Tap draw `k` uses the counter stream `(tap_seed, k)`.
pub fn draw_realization(cfg: &Config, k: usize) -> Result<Realization, CliError> {
    let (idx, ocfg) = ofdm_setup(cfg)?;
    let taps = ofdm::draw_taps(&profile(cfg), &idx, &mut sample_rng(cfg.channel.tap_seed, k as u64))?;
    let lin = ofdm::linearize(&ocfg, &taps)?;
    Ok(Realization {
        index: k,
        f: lin.nominal,
        g: lin.sensitivity,
        taps: Some(taps),
    })
}

pub fn load_file_pair(cfg: &Config) -> Result<Realization, CliError> {
    let (Some(fp), Some(gp)) = (&cfg.channel.f_file, &cfg.channel.g_file) else {
        return Err(CliError::Config("synthetic_file source needs f_file and g_file".into()));
    };
    let f = matrix_io::read_matrix(fp)?;
    let g = matrix_io::read_matrix(gp)?;
    if !f.is_square() || f.shape() != g.shape() {
        return Err(CliError::Config(format!(
            "F is {}x{} and G is {}x{}; both must be the same square size",
            f.nrows(),
            f.ncols(),
            g.nrows(),
            g.ncols()
        )));
    }
    Ok(Realization {
        index: 0,
        f,
        g,
        taps: None,
    })
}

/// All realizations of a sweep. A file-based channel is a single realization.
pub fn realizations(cfg: &Config) -> Result<Vec<Realization>, CliError> {
    match cfg.channel.source {
        ChannelSource::NtnTdlA => (0..cfg.sweep.realizations).map(|k| draw_realization(cfg, k)).collect(),
        ChannelSource::SyntheticFile => Ok(vec![load_file_pair(cfg)?]),
    }
}

/// Subcarrier count actually used (file channels carry their own size).
pub fn dimension(cfg: &Config) -> Result<usize, CliError> {
    match cfg.channel.source {
        ChannelSource::NtnTdlA => Ok(cfg.sweep.n_subcarriers),
        ChannelSource::SyntheticFile => Ok(load_file_pair(cfg)?.f.nrows()),
    }
}
