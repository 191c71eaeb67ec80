#![allow(dead_code)]

use dopcap_core::linalg::{self, CMat, CVec};
use dopcap_core::mc::{complex_normal, sample_rng};
use dopcap_core::{InputCovariance, StructuredChannel};

pub fn random_matrix(n: usize, m: usize, seed: u64) -> CMat {
    let mut rng = sample_rng(seed, 0);
    CMat::from_fn(n, m, |_, _| complex_normal(&mut rng, 1.0))
}

pub fn random_vector(n: usize, seed: u64) -> CVec {
    let mut rng = sample_rng(seed, 1);
    CVec::from_fn(n, |_, _| complex_normal(&mut rng, 1.0))
}

pub fn random_channel(n: usize, sigma2: f64, seed: u64) -> StructuredChannel {
    StructuredChannel::new(random_matrix(n, n, seed), random_matrix(n, n, seed ^ 0xABCD), sigma2).unwrap()
}

/// Random PSD covariance with trace exactly `p`.
pub fn random_cov(n: usize, p: f64, seed: u64) -> InputCovariance {
    let a = random_matrix(n, n, seed ^ 0x77);
    let q = &a * a.adjoint();
    let t = linalg::trace_re(&q);
    InputCovariance::new(linalg::hermitian_part(&(q * linalg::re(p / t)))).unwrap()
}

/// Draw `x ~ CN(0, Q)` from a factor `L` with `Q = LLᴴ`.
pub fn draw_from_factor(l: &CMat, rng: &mut impl rand::Rng) -> CVec {
    let w = CVec::from_fn(l.ncols(), |_, _| complex_normal(rng, 1.0));
    l * w
}

/// Gauss–Laguerre nodes and weights (weight `e^{-x}`), Golub–Welsch.
pub fn gauss_laguerre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut j = nalgebra::DMatrix::<f64>::zeros(n, n);
    for k in 0..n {
        j[(k, k)] = 2.0 * k as f64 + 1.0;
        if k + 1 < n {
            j[(k, k + 1)] = k as f64 + 1.0;
            j[(k + 1, k)] = k as f64 + 1.0;
        }
    }
    let eig = j.symmetric_eigen();
    (0..n)
        .map(|k| (eig.eigenvalues[k], eig.eigenvectors[(0, k)].powi(2)))
        .unzip()
}

pub fn frob_rel(a: &CMat, b: &CMat) -> f64 {
    (a - b).norm() / b.norm()
}
