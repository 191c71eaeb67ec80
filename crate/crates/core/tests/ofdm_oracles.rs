use std::f64::consts::PI;

use dopcap_core::linalg::{c, CMat, CVec, C64};
use dopcap_core::mc::{complex_normal, sample_rng};
use dopcap_core::ofdm::*;

// 50-digit reference values for N = 4, L = 2, f_d = 0.1.
const B_REF: [((usize, usize), (f64, f64)); 3] = [
    ((0, 0), (0.839_546_704_011_254_095_7, 0.514_474_881_898_378_717_3)),
    ((0, 1), (0.098_788_950_841_801_720_21, -0.023_717_128_728_926_341_78)),
    ((2, 0), (0.040_490_051_323_796_402_36, -0.066_073_758_564_668_440_67)),
];

#[test]
fn ici_matches_high_precision_reference() {
    let cfg = OfdmConfig::new(4, 2).unwrap();
    let b = ici_matrix(&cfg, 0.1);
    for ((i, k), (re, im)) in B_REF {
        assert!((b[(i, k)] - c(re, im)).norm() < 1e-15, "({i},{k}): {}", b[(i, k)]);
    }
    // Toeplitz in m = k - i.
    assert_eq!(b[(1, 3)], b[(0, 2)]);
}

fn unitary_dft(n: usize) -> CMat {
    CMat::from_fn(n, n, |i, t| C64::from_polar(1.0 / (n as f64).sqrt(), -2.0 * PI * (i * t) as f64 / n as f64))
}

/// Explicit CP-OFDM link: IDFT, cyclic prefix of L−1 samples, multipath,
/// Doppler phase ramp on 1-indexed time, CP removal, DFT.
fn time_domain_link(n: usize, taps: &[C64], f_d: f64, x: &CVec) -> CVec {
    let l = taps.len();
    let w = unitary_dft(n);
    let s = w.adjoint() * x;
    let cp = l - 1;
    let tx: Vec<C64> = (0..n + cp).map(|t| s[(t + n - cp) % n]).collect();
    let rx: Vec<C64> = (0..n + cp)
        .map(|t| {
            let conv: C64 = (0..l).filter(|&j| j <= t).map(|j| taps[j] * tx[t - j]).sum();
            conv * C64::from_polar(1.0, 2.0 * PI * f_d * (t + 1) as f64 / n as f64)
        })
        .collect();
    let kept = CVec::from_iterator(n, rx[cp..].iter().copied());
    w * kept
}

#[test]
fn frequency_model_matches_time_domain_simulation() {
    let (n, l, f_d) = (8, 3, 0.05);
    let cfg = OfdmConfig::new(n, l).unwrap();
    let mut rng = sample_rng(17, 0);
    let taps = TapSet::new((0..l).map(|_| complex_normal(&mut rng, 1.0)).collect());
    let h = full_channel(&cfg, &taps, f_d).unwrap();
    for trial in 0..5 {
        let mut rng = sample_rng(18, trial);
        let x = CVec::from_fn(n, |_, _| complex_normal(&mut rng, 1.0));
        let want = time_domain_link(n, &taps.coefficients, f_d, &x);
        let got = &h * &x;
        assert!((&got - &want).norm() < 1e-10 * want.norm(), "trial {trial}");
    }
}

#[test]
fn sensitivity_is_the_doppler_derivative() {
    let profile = MultipathProfile::ntn_tdl_a(100.0);
    let idx = scale_delays(&profile, REFERENCE_SAMPLE_PERIOD_S).unwrap();
    for n in [4, 8, 16] {
        let cfg = OfdmConfig::new(n, 5).unwrap();
        let taps = draw_taps(&profile, &idx, &mut sample_rng(3, n as u64)).unwrap();
        let lin = linearize(&cfg, &taps).unwrap();
        let g_norm = lin.sensitivity.norm();
        let mut prev = f64::INFINITY;
        for eps in [1e-2, 1e-3, 1e-4] {
            let h = full_channel(&cfg, &taps, eps).unwrap();
            let rel = ((h - &lin.nominal) / c(eps, 0.0) - &lin.sensitivity).norm() / g_norm;
            assert!(rel <= 10.0 * eps, "N={n} eps={eps}: {rel}");
            // First-order remainder: error shrinks linearly with eps.
            assert!(rel < prev * 0.2);
            prev = rel;
        }
        assert_eq!(full_channel(&cfg, &taps, 0.0).unwrap(), lin.nominal);
    }
}

#[test]
fn transposed_sensitivity_fails_the_derivative_check() {
    let profile = MultipathProfile::ntn_tdl_a(100.0);
    let idx = scale_delays(&profile, REFERENCE_SAMPLE_PERIOD_S).unwrap();
    let cfg = OfdmConfig::new(8, 5).unwrap();
    let taps = draw_taps(&profile, &idx, &mut sample_rng(5, 0)).unwrap();
    let lin = linearize(&cfg, &taps).unwrap();
    let wrong = lin.sensitivity.transpose();
    let eps = 1e-4;
    let h = full_channel(&cfg, &taps, eps).unwrap();
    let rel = ((h - &lin.nominal) / c(eps, 0.0) - &wrong).norm() / wrong.norm();
    assert!(rel > 0.1, "{rel}");
}

#[test]
fn removable_singularity_is_continuous() {
    let cfg = OfdmConfig::new(8, 2).unwrap();
    let exact = ici_matrix(&cfg, 1.0);
    let near = ici_matrix(&cfg, 1.0 - 1e-7);
    assert!((exact - near).norm() < 1e-5);
}

#[test]
fn nominal_channel_is_diagonal_frequency_response() {
    let cfg = OfdmConfig::new(16, 5).unwrap();
    let taps = TapSet::new(vec![c(1.0, 0.5), c(0.0, 0.0), c(-0.3, 0.2)]);
    let lin = linearize(&cfg, &taps).unwrap();
    let w = unitary_dft(16);
    // Circular convolution matrix diagonalized by the DFT.
    let circ = CMat::from_fn(16, 16, |t, u| {
        let d = (t + 16 - u) % 16;
        taps.coefficients.get(d).copied().unwrap_or(c(0.0, 0.0))
    });
    let want = &w * circ * w.adjoint();
    assert!((lin.nominal - want).norm() < 1e-12);
}
