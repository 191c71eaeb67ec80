//! Fixtures shared by the criterion benchmarks.

use dopcap_core::mc::sample_rng;
use dopcap_core::ofdm::{self, MultipathProfile, OfdmConfig, REFERENCE_SAMPLE_PERIOD_S};
use dopcap_core::{StructuredChannel, TapSet};

/// NTN-TDL-A setup at `n` subcarriers with one fixed tap draw.
pub fn tdl_setup(n: usize, seed: u64) -> (OfdmConfig, TapSet) {
    let profile = MultipathProfile::ntn_tdl_a(ofdm::DEFAULT_DELAY_SPREAD_NS);
    let idx = ofdm::scale_delays(&profile, REFERENCE_SAMPLE_PERIOD_S).expect("reference profile");
    let l = idx.iter().max().map_or(1, |m| m + 1);
    let cfg = OfdmConfig::new(n, l)
        .and_then(|c| c.with_sample_period(REFERENCE_SAMPLE_PERIOD_S))
        .expect("valid OFDM config");
    let taps = ofdm::draw_taps(&profile, &idx, &mut sample_rng(seed, 0)).expect("tap draw");
    (cfg, taps)
}

pub fn tdl_channel(n: usize, sigma: f64, seed: u64) -> StructuredChannel {
    let (cfg, taps) = tdl_setup(n, seed);
    let lin = ofdm::linearize(&cfg, &taps).expect("linearization");
    StructuredChannel::from_linearization(&lin, sigma * sigma).expect("finite channel")
}
