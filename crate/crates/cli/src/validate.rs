//! Self-check suite run by `dopcap validate`. Every check reports a residual
//! against a threshold instead of panicking.

use dopcap_core::alignment::{self, SchemeMode, SchemeOpts};
use dopcap_core::channel::{sample_output, InputCovariance};
use dopcap_core::linalg::{self, c, CMat, CVec};
use dopcap_core::mc::{complex_normal, derive_seed, sample_rng, MCConfig};
use dopcap_core::ofdm::{self, MultipathProfile, OfdmConfig, REFERENCE_SAMPLE_PERIOD_S};
use dopcap_core::{duality, gaussian, StructuredChannel};
use rand::Rng;
use rayon::prelude::*;

#[derive(Debug, Clone)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    pub residual: f64,
    pub threshold: f64,
    pub detail: String,
}

impl Check {
    fn new(name: &'static str, residual: f64, threshold: f64, detail: String) -> Self {
        Check {
            name,
            passed: residual <= threshold,
            residual,
            threshold,
            detail,
        }
    }

    fn failed(name: &'static str, threshold: f64, detail: String) -> Self {
        Check {
            name,
            passed: false,
            residual: f64::INFINITY,
            threshold,
            detail,
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct ValidateOptions {
    pub seed: u64,
    /// Negative control: use `Gᵀ` in place of `G` in the derivative check.
    pub corrupt_g: bool,
}

impl Default for ValidateOptions {
    fn default() -> Self {
        ValidateOptions {
            seed: 1,
            corrupt_g: false,
        }
    }
}

fn random_matrix<R: Rng>(n: usize, rng: &mut R) -> CMat {
    CMat::from_fn(n, n, |_, _| complex_normal(rng, 1.0))
}

fn random_vector<R: Rng>(n: usize, rng: &mut R) -> CVec {
    CVec::from_fn(n, |_, _| complex_normal(rng, 1.0))
}

fn random_channel(n: usize, sigma2: f64, seed: u64, k: u64) -> StructuredChannel {
    let mut rng = sample_rng(seed, k);
    let f = random_matrix(n, &mut rng);
    let g = random_matrix(n, &mut rng);
    StructuredChannel::new(f, g, sigma2).expect("finite random channel")
}

fn tdl_channel(n: usize, sigma2: f64, seed: u64, k: u64) -> dopcap_core::Result<StructuredChannel> {
    let profile = MultipathProfile::ntn_tdl_a(ofdm::DEFAULT_DELAY_SPREAD_NS);
    let idx = ofdm::scale_delays(&profile, REFERENCE_SAMPLE_PERIOD_S)?;
    let l = idx.iter().max().map_or(1, |m| m + 1);
    let cfg = OfdmConfig::new(n, l)?.with_sample_period(REFERENCE_SAMPLE_PERIOD_S)?;
    let taps = ofdm::draw_taps(&profile, &idx, &mut sample_rng(seed, k))?;
    StructuredChannel::from_linearization(&ofdm::linearize(&cfg, &taps)?, sigma2)
}

fn slope(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    sxy / sxx
}

/// `max ‖(H(ε) − F)/ε − G‖_F / (10 ε ‖G‖_F)` over N, ε and tap draws.
fn linearization(opts: &ValidateOptions) -> Check {
    const NAME: &str = "linearization_finite_difference";
    let run = || -> dopcap_core::Result<(f64, String)> {
        let profile = MultipathProfile::ntn_tdl_a(ofdm::DEFAULT_DELAY_SPREAD_NS);
        let idx = ofdm::scale_delays(&profile, REFERENCE_SAMPLE_PERIOD_S)?;
        let l = idx.iter().max().map_or(1, |m| m + 1);
        let mut worst = (0.0, String::new());
        for n in [4, 8, 16] {
            let cfg = OfdmConfig::new(n, l)?.with_sample_period(REFERENCE_SAMPLE_PERIOD_S)?;
            for k in 0..10 {
                let taps = ofdm::draw_taps(&profile, &idx, &mut sample_rng(derive_seed(opts.seed, 1), k))?;
                let lin = ofdm::linearize(&cfg, &taps)?;
                let g = if opts.corrupt_g {
                    lin.sensitivity.transpose()
                } else {
                    lin.sensitivity.clone()
                };
                for eps in [1e-3, 1e-4] {
                    let h = ofdm::full_channel(&cfg, &taps, eps)?;
                    let rel = ((h - &lin.nominal) / c(eps, 0.0) - &g).norm() / g.norm();
                    let ratio = rel / (10.0 * eps);
                    if ratio > worst.0 {
                        worst = (ratio, format!("N={n} draw={k} eps={eps:e} rel={rel:.3e}"));
                    }
                }
            }
        }
        Ok(worst)
    };
    match run() {
        Ok((r, d)) => Check::new(NAME, r, 1.0, d),
        Err(e) => Check::failed(NAME, 1.0, e.to_string()),
    }
}

/// Rank ratio and leakage of the aligning precoder on random pencils.
fn precoder(opts: &ValidateOptions) -> Check {
    const NAME: &str = "precoder_alignment";
    let seed = derive_seed(opts.seed, 2);
    let mut worst = 0.0f64;
    let mut detail = String::new();
    for k in 0..100u64 {
        let n = 2 + (k as usize % 7);
        let ch = random_channel(n, 0.1, seed, k);
        let pre = match alignment::build_precoder(&ch, alignment::default_tol(n)) {
            Ok(p) => p,
            Err(e) => return Check::failed(NAME, 1.0, format!("pair {k} (N={n}): {e}")),
        };
        let scale = ch.f().norm() + ch.g().norm();
        let mut rng = sample_rng(seed, 1000 + k);
        let mut leak = 0.0f64;
        for _ in 0..20 {
            let s = complex_normal(&mut rng, 1.0);
            leak = leak.max((pre.u_perp.adjoint() * ch.realize(s) * &pre.v).norm() / scale);
        }
        let r = (pre.rank_ratio.max(leak)) / 1e-8;
        if r > worst {
            worst = r;
            detail = format!("pair {k} N={n} rank_ratio={:.2e} leakage={leak:.2e}", pre.rank_ratio);
        }
    }
    Check::new(NAME, worst, 1.0, detail)
}

/// Sample error covariance of the LMMSE estimator vs the closed form.
fn lmmse(opts: &ValidateOptions) -> Check {
    const NAME: &str = "lmmse_error_covariance";
    let seed = derive_seed(opts.seed, 3);
    let n = 3;
    let ch = random_channel(n, 0.2, seed, 0);
    let q = InputCovariance::isotropic(n, 6.0);
    let run = || -> dopcap_core::Result<f64> {
        let a = gaussian::lmmse_filter(&ch, &q)?;
        let l = linalg::psd_sqrt(q.matrix());
        let draws = 50_000u64;
        let mut acc = CMat::zeros(n, n);
        for i in 0..draws {
            let mut rng = sample_rng(seed, 1 + i);
            let x = &l * random_vector(n, &mut rng);
            let y = sample_output(&ch, &x, &mut rng)?.y;
            let e = &a * y - &x;
            acc += &e * e.adjoint();
        }
        let empirical = acc / c(draws as f64, 0.0);
        let theory = gaussian::lmmse_error_cov(&ch, &q)?;
        Ok((empirical - &theory).norm() / theory.norm())
    };
    match run() {
        Ok(r) => Check::new(NAME, r, 0.05, "5e4 draws, N=3".into()),
        Err(e) => Check::failed(NAME, 0.05, e.to_string()),
    }
}

/// Empirical MSE of the pilot-based `s` estimate vs its error variance.
fn s_estimator(opts: &ValidateOptions) -> Check {
    const NAME: &str = "s_estimator_mse";
    let seed = derive_seed(opts.seed, 4);
    let sigma2 = 0.01;
    let g_perp = random_vector(3, &mut sample_rng(seed, 0)) * c(3.0, 0.0);
    let draws = 50_000u64;
    let mut se = 0.0;
    let mut var = 0.0;
    for i in 0..draws {
        let mut rng = sample_rng(seed, 1 + i);
        let s = complex_normal(&mut rng, sigma2);
        let z = random_vector(3, &mut rng);
        let y = &g_perp * s + z;
        match alignment::estimate_s(&y, &g_perp, sigma2) {
            Ok(est) => {
                se += (est.s_hat - s).norm_sqr();
                var = est.error_var;
            }
            Err(e) => return Check::failed(NAME, 0.03, e.to_string()),
        }
    }
    let mse = se / draws as f64;
    Check::new(NAME, (mse / var - 1.0).abs(), 0.03, format!("mse={mse:.4e} theory={var:.4e}"))
}

/// Every lower bound stays below every certified upper bound.
fn sandwich(opts: &ValidateOptions) -> Check {
    const NAME: &str = "sandwich_ordering";
    let seed = derive_seed(opts.seed, 5);
    let n = 4;
    let mc = MCConfig::new(2000, seed);
    let mut sa = SchemeOpts::new(SchemeMode::Pilot);
    sa.rho_grid = alignment::geometric_grid(0.02, 0.4, 3);
    let mut worst = f64::NEG_INFINITY;
    let mut detail = String::new();
    for k in 0..2 {
        for sigma in [0.1, 0.01] {
            let ch = match tdl_channel(n, sigma * sigma, seed, k) {
                Ok(ch) => ch,
                Err(e) => return Check::failed(NAME, 0.0, e.to_string()),
            };
            let pre = alignment::build_precoder(&ch, alignment::default_tol(n));
            for snr in [0.0, 20.0, 40.0] {
                let p = n as f64 * 10f64.powf(snr / 10.0);
                let q = InputCovariance::isotropic(n, p);
                let mut lower = Vec::new();
                if let Ok(r) = gaussian::rate_gaussian_linear(&ch, &q) {
                    lower.push(("gaussian_linear", r.rate_nats - 3.0 * r.stderr_nats));
                }
                if let Ok(r) = gaussian::rate_gaussian_optimal(&ch, &q, &mc) {
                    lower.push(("gaussian_optimal", r.rate_nats - 3.0 * r.stderr_nats));
                }
                if let Ok(pre) = &pre {
                    if let Ok(r) = alignment::optimize_scheme(&ch, pre, p, &mc, &sa) {
                        lower.push(("sa_pilot", r.rate.mean - 3.0 * r.rate.stderr));
                    }
                }
                let mut upper = Vec::new();
                for (name, r) in [("ub_logdet", duality::ub_logdet(&ch, p)), ("ub_dof", duality::ub_dof(&ch, p))] {
                    if let Ok(r) = r {
                        if r.certified {
                            upper.push((name, r.rate_nats));
                        }
                    }
                }
                for (ln, lv) in &lower {
                    for (un, uv) in &upper {
                        if lv - uv > worst {
                            worst = lv - uv;
                            detail = format!("draw {k} sigma={sigma} snr={snr}: {ln}={lv:.4} vs {un}={uv:.4}");
                        }
                    }
                }
            }
        }
    }
    Check::new(NAME, worst.max(0.0), 1e-9, detail)
}

/// Slope of `ub_dof` against `ln P` at N=4 is `N − 1`.
fn dof(opts: &ValidateOptions) -> Check {
    const NAME: &str = "dof_slope";
    let ch = random_channel(4, 0.01, derive_seed(opts.seed, 6), 0);
    let xs: Vec<f64> = (0..7).map(|k| (10f64.powf(3.0 + 0.5 * k as f64)).ln()).collect();
    let mut ys = Vec::new();
    for x in &xs {
        match duality::ub_dof(&ch, x.exp()) {
            Ok(r) => ys.push(r.rate_nats),
            Err(e) => return Check::failed(NAME, 0.1, e.to_string()),
        }
    }
    let s = slope(&xs, &ys);
    Check::new(NAME, (s / 3.0 - 1.0).abs(), 0.1, format!("slope={s:.4}"))
}

/// Both Gaussian lower bounds meet `ub_logdet` when `σ = 0`.
fn coherent(opts: &ValidateOptions) -> Check {
    const NAME: &str = "coherent_tightness";
    let seed = derive_seed(opts.seed, 7);
    let mc = MCConfig::new(1000, seed);
    let mut worst = 0.0f64;
    for (k, n) in [2usize, 4, 8].into_iter().enumerate() {
        let ch = random_channel(n, 0.0, seed, k as u64);
        let run = || -> dopcap_core::Result<f64> {
            let ub = duality::ub_logdet(&ch, 10.0 * n as f64)?;
            let q = ub.q_used.clone().expect("logdet bound reports its covariance");
            let ld = duality::logdet_objective(&ch, &q)?;
            let lin = gaussian::rate_gaussian_linear(&ch, &q)?.rate_nats;
            let opt = gaussian::rate_gaussian_optimal(&ch, &q, &mc)?.rate_nats;
            Ok((lin - ld).abs().max((opt - ld).abs()))
        };
        match run() {
            Ok(r) => worst = worst.max(r),
            Err(e) => return Check::failed(NAME, 1e-6, e.to_string()),
        }
    }
    Check::new(NAME, worst, 1e-6, "N in {2,4,8}".into())
}

pub fn validate(opts: &ValidateOptions) -> Vec<Check> {
    let checks: [fn(&ValidateOptions) -> Check; 7] = [linearization, precoder, lmmse, s_estimator, sandwich, dof, coherent];
    checks.par_iter().map(|f| f(opts)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn slope_of_a_line() {
        assert!((slope(&[0.0, 1.0, 2.0], &[1.0, 4.0, 7.0]) - 3.0).abs() < 1e-12);
    }

    #[test]
    fn transposed_g_fails() {
        let good = linearization(&ValidateOptions::default());
        assert!(good.passed, "{good:?}");
        let bad = linearization(&ValidateOptions {
            corrupt_g: true,
            ..ValidateOptions::default()
        });
        assert!(!bad.passed, "{bad:?}");
    }
}
