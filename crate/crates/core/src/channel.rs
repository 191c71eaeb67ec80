//! The structured-uncertainty channel `y = (F + sG) x + z` with
//! `s ~ CN(0, σ²)` and `z ~ CN(0, I)`, plus its exact second-order
//! statistics. All rates in this crate are in nats.

use rand::Rng;

use crate::error::{Error, Result};
use crate::linalg::{self, c, re, CMat, CVec, C64};
use crate::mc::complex_normal;
use crate::ofdm::DopplerLinearization;

/// Tolerance for Hermitian/PSD/trace checks on input covariances.
pub const COV_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct StructuredChannel {
    f: CMat,
    g: CMat,
    sigma2: f64,
    f_diagonal: bool,
}

impl StructuredChannel {
    pub fn new(f: CMat, g: CMat, sigma2: f64) -> Result<Self> {
        if !f.is_square() {
            return Err(Error::DimensionMismatch {
                expected: f.nrows(),
                got: f.ncols(),
            });
        }
        if g.shape() != f.shape() {
            return Err(Error::DimensionMismatch {
                expected: f.nrows(),
                got: g.nrows(),
            });
        }
        if !(sigma2 >= 0.0) || !sigma2.is_finite() {
            return Err(Error::InvalidArgument(format!("sigma2 = {sigma2} must be finite and >= 0")));
        }
        let n = f.nrows();
        let scale = f.norm();
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&k| k != i).map(move |k| (i, k)))
            .map(|(i, k)| f[(i, k)].norm_sqr())
            .sum::<f64>()
            .sqrt();
        let f_diagonal = off <= 1e-12 * scale;
        Ok(StructuredChannel {
            f,
            g,
            sigma2,
            f_diagonal,
        })
    }

    pub fn from_linearization(lin: &DopplerLinearization, sigma2: f64) -> Result<Self> {
        Self::new(lin.nominal.clone(), lin.sensitivity.clone(), sigma2)
    }

    pub fn dim(&self) -> usize {
        self.f.nrows()
    }

    pub fn f(&self) -> &CMat {
        &self.f
    }

    pub fn g(&self) -> &CMat {
        &self.g
    }

    pub fn sigma2(&self) -> f64 {
        self.sigma2
    }

    /// True when the nominal channel is diagonal (e.g. built from OFDM taps).
    pub fn is_f_diagonal(&self) -> bool {
        self.f_diagonal
    }

    pub fn with_sigma2(&self, sigma2: f64) -> Result<Self> {
        Self::new(self.f.clone(), self.g.clone(), sigma2)
    }

    /// `F + sG`.
    pub fn realize(&self, s: C64) -> CMat {
        &self.f + &self.g * s
    }

    pub(crate) fn check_vec(&self, x: &CVec) -> Result<()> {
        if x.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: x.len(),
            });
        }
        Ok(())
    }

    pub(crate) fn check_cov(&self, q: &InputCovariance) -> Result<()> {
        if q.dim() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: q.dim(),
            });
        }
        Ok(())
    }
}

/// A validated input covariance `Q ⪰ 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct InputCovariance {
    q: CMat,
    power: f64,
}

impl InputCovariance {
    pub fn new(q: CMat) -> Result<Self> {
        if !q.is_square() {
            return Err(Error::InvalidCovariance("not square".into()));
        }
        let scale = q.norm().max(1.0);
        let asym = linalg::hermitian_residual(&q);
        if asym > COV_TOL * scale {
            return Err(Error::InvalidCovariance(format!("not Hermitian (residual {asym:.3e})")));
        }
        let q = linalg::hermitian_part(&q);
        let lmin = linalg::lambda_min(&q);
        if lmin < -COV_TOL * scale {
            return Err(Error::InvalidCovariance(format!("negative eigenvalue {lmin:.3e}")));
        }
        let power = linalg::trace_re(&q);
        Ok(InputCovariance { q, power })
    }

    /// `(P / N) I`.
    pub fn isotropic(n: usize, power: f64) -> Self {
        InputCovariance {
            q: linalg::identity(n) * re(power / n as f64),
            power,
        }
    }

    pub fn zero(n: usize) -> Self {
        InputCovariance {
            q: linalg::zeros(n, n),
            power: 0.0,
        }
    }

    pub fn matrix(&self) -> &CMat {
        &self.q
    }

    pub fn power(&self) -> f64 {
        self.power
    }

    pub fn dim(&self) -> usize {
        self.q.nrows()
    }

    /// Whether `tr Q ≤ P` up to tolerance.
    pub fn satisfies_power(&self, p: f64) -> bool {
        self.power <= p + COV_TOL * p.max(1.0)
    }

    /// `L` with `Q = L Lᴴ`, keeping only numerically nonzero directions.
    pub fn factor(&self) -> CMat {
        linalg::psd_factor(&self.q, 1e-14)
    }

    pub fn rank(&self) -> usize {
        self.factor().ncols()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChannelSample {
    pub s: C64,
    pub y: CVec,
    pub x: CVec,
}

/// `Σ_{y|x} = I + σ² (Gx)(Gx)ᴴ`.
pub fn cond_output_cov(ch: &StructuredChannel, x: &CVec) -> Result<CMat> {
    ch.check_vec(x)?;
    let gx = ch.g() * x;
    Ok(linalg::identity(ch.dim()) + (&gx * gx.adjoint()) * re(ch.sigma2()))
}

/// `h(y | x) = N log(πe) + log(1 + σ² ‖Gx‖²)` for a fixed input.
pub fn h_y_given_x(ch: &StructuredChannel, x: &CVec) -> Result<f64> {
    ch.check_vec(x)?;
    let n = ch.dim() as f64;
    let gx2 = (ch.g() * x).norm_squared();
    Ok(n * (std::f64::consts::PI * std::f64::consts::E).ln() + (1.0 + ch.sigma2() * gx2).ln())
}

/// `Σ_{y|s} = I + (F + sG) Q (F + sG)ᴴ`.
pub fn cond_cov_given_s(ch: &StructuredChannel, q: &InputCovariance, s: C64) -> Result<CMat> {
    ch.check_cov(q)?;
    let h = ch.realize(s);
    Ok(linalg::hermitian_part(&(linalg::identity(ch.dim()) + &h * q.matrix() * h.adjoint())))
}

/// `log det Σ_{y|s}` through the rank-r factor of `Q`:
/// `log det(I_r + Lᴴ Hᴴ H L)`.
pub fn logdet_cond_cov_given_s(ch: &StructuredChannel, q: &InputCovariance, s: C64) -> Result<f64> {
    ch.check_cov(q)?;
    let l = q.factor();
    if l.ncols() == 0 {
        return Ok(0.0);
    }
    let hl = ch.realize(s) * l;
    Ok(linalg::logdet_hpd(&(linalg::identity(hl.ncols()) + hl.adjoint() * hl)))
}

/// `Σ_y = I + F Q Fᴴ + σ² G Q Gᴴ`.
pub fn output_cov(ch: &StructuredChannel, q: &InputCovariance) -> Result<CMat> {
    ch.check_cov(q)?;
    let qm = q.matrix();
    let out = linalg::identity(ch.dim())
        + ch.f() * qm * ch.f().adjoint()
        + (ch.g() * qm * ch.g().adjoint()) * re(ch.sigma2());
    Ok(linalg::hermitian_part(&out))
}

/// Draw `s`, `z` and return `y = (F + sG) x + z`.
pub fn sample_output<R: Rng + ?Sized>(ch: &StructuredChannel, x: &CVec, rng: &mut R) -> Result<ChannelSample> {
    sample_output_with(ch, x, rng, true)
}

/// As [`sample_output`]; `noise = false` drops `z` (debugging aid).
pub fn sample_output_with<R: Rng + ?Sized>(
    ch: &StructuredChannel,
    x: &CVec,
    rng: &mut R,
    noise: bool,
) -> Result<ChannelSample> {
    ch.check_vec(x)?;
    let s = complex_normal(rng, ch.sigma2());
    let mut y = ch.realize(s) * x;
    if noise {
        for v in y.iter_mut() {
            *v += complex_normal(rng, 1.0);
        }
    }
    Ok(ChannelSample { s, y, x: x.clone() })
}

/// `M(s) = base + s·cross + s*·crossᴴ + |s|²·quad`, the per-sample part of
/// a Gaussian-in-`s` covariance, precomputed once so that each Monte Carlo
/// draw costs one matrix combination plus one Cholesky.
#[derive(Debug, Clone)]
pub(crate) struct QuadraticPencil {
    pub base: CMat,
    pub cross: CMat,
    pub quad: CMat,
}

impl QuadraticPencil {
    /// `(A + sB) Q (A + sB)ᴴ`.
    pub fn outer(a: &CMat, b: &CMat, q: &CMat) -> Self {
        let aq = a * q;
        let bq = b * q;
        QuadraticPencil {
            base: linalg::hermitian_part(&(&aq * a.adjoint())),
            cross: &bq * a.adjoint(),
            quad: linalg::hermitian_part(&(&bq * b.adjoint())),
        }
    }

    /// `(A + sB)ᴴ (A + sB)`.
    pub fn gram(a: &CMat, b: &CMat) -> Self {
        QuadraticPencil {
            base: linalg::hermitian_part(&(a.adjoint() * a)),
            cross: a.adjoint() * b,
            quad: linalg::hermitian_part(&(b.adjoint() * b)),
        }
    }

    pub fn at(&self, s: C64) -> CMat {
        let mut out = self.base.clone();
        out += &self.cross * s;
        out += self.cross.adjoint() * s.conj();
        out += &self.quad * c(s.norm_sqr(), 0.0);
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mc::sample_rng;

    fn scalar(v: f64) -> CMat {
        CMat::from_element(1, 1, c(v, 0.0))
    }

    #[test]
    fn cond_output_cov_cases() {
        let ch = StructuredChannel::new(linalg::identity(2), linalg::identity(2), 1.0).unwrap();
        let x = CVec::from_vec(vec![c(1.0, 0.0), c(0.0, 0.0)]);
        let cov = cond_output_cov(&ch, &x).unwrap();
        assert!((cov - CMat::from_diagonal(&CVec::from_vec(vec![c(2.0, 0.0), c(1.0, 0.0)]))).norm() < 1e-15);
        let zero = CVec::zeros(2);
        assert_eq!(cond_output_cov(&ch, &zero).unwrap(), linalg::identity(2));
        let coherent = ch.with_sigma2(0.0).unwrap();
        assert_eq!(cond_output_cov(&coherent, &x).unwrap(), linalg::identity(2));
        assert!(cond_output_cov(&ch, &CVec::zeros(3)).is_err());
    }

    #[test]
    fn conditional_entropy_scalar() {
        let ch = StructuredChannel::new(scalar(1.0), scalar(1.0), 0.01).unwrap();
        let x = CVec::from_element(1, c(10.0, 0.0));
        let pie = (std::f64::consts::PI * std::f64::consts::E).ln();
        assert!((h_y_given_x(&ch, &x).unwrap() - (pie + 2f64.ln())).abs() < 1e-14);
        assert!((h_y_given_x(&ch, &CVec::zeros(1)).unwrap() - pie).abs() < 1e-15);
    }

    #[test]
    fn covariances_scalar() {
        let ch = StructuredChannel::new(scalar(1.0), scalar(1.0), 0.3).unwrap();
        let q = InputCovariance::new(scalar(2.0)).unwrap();
        let v = cond_cov_given_s(&ch, &q, c(1.0, 0.0)).unwrap();
        assert!((v[(0, 0)].re - 9.0).abs() < 1e-14);
        let ch = StructuredChannel::new(scalar(1.0), scalar(2.0), 0.25).unwrap();
        let q = InputCovariance::new(scalar(1.0)).unwrap();
        assert!((output_cov(&ch, &q).unwrap()[(0, 0)].re - 3.0).abs() < 1e-14);
        let zero = InputCovariance::zero(1);
        assert_eq!(cond_cov_given_s(&ch, &zero, c(0.4, 1.0)).unwrap(), linalg::identity(1));
    }

    #[test]
    fn rejects_invalid_covariance() {
        let mut m = linalg::identity(2);
        m[(0, 1)] = c(1.0, 0.0);
        assert!(InputCovariance::new(m).is_err());
        let neg = CMat::from_diagonal(&CVec::from_vec(vec![c(1.0, 0.0), c(-0.5, 0.0)]));
        assert!(InputCovariance::new(neg).is_err());
        assert!(StructuredChannel::new(linalg::identity(2), linalg::identity(3), 0.1).is_err());
        assert!(StructuredChannel::new(linalg::identity(2), linalg::identity(2), -0.1).is_err());
    }

    #[test]
    fn noiseless_coherent_sample() {
        let f = CMat::from_fn(3, 3, |i, k| c(i as f64 + 1.0, k as f64));
        let ch = StructuredChannel::new(f.clone(), linalg::identity(3), 0.0).unwrap();
        let x = CVec::from_vec(vec![c(1.0, 0.0), c(0.0, 2.0), c(-1.0, 1.0)]);
        let s = sample_output_with(&ch, &x, &mut sample_rng(1, 2), false).unwrap();
        assert_eq!(s.y, &f * &x);
        let a = sample_output(&ch, &x, &mut sample_rng(4, 4)).unwrap();
        let b = sample_output(&ch, &x, &mut sample_rng(4, 4)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn pencil_matches_direct() {
        let a = CMat::from_fn(3, 3, |i, k| c((i * k) as f64 * 0.2, 1.0 - i as f64));
        let b = CMat::from_fn(3, 3, |i, k| c(k as f64 - 1.0, (i + k) as f64 * 0.1));
        let q = linalg::identity(3) * re(0.7);
        let p = QuadraticPencil::outer(&a, &b, &q);
        let s = c(0.3, -0.8);
        let h = &a + &b * s;
        assert!((p.at(s) - &h * &q * h.adjoint()).norm() < 1e-13);
        let g = QuadraticPencil::gram(&a, &b);
        assert!((g.at(s) - h.adjoint() * &h).norm() < 1e-13);
    }
}
