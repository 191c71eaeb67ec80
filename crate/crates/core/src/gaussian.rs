//! Lower bounds with single-layer Gaussian signaling `x ~ CN(0, Q)`.
//!
//! * optimal decoding: `R_G(Q) = E_s[log det(I + (F+sG)Q(F+sG)ᴴ)] − log(1 + σ² tr(GQGᴴ))`
//! * linear (LMMSE) receiver with nearest-neighbor metric:
//!   `R_lin(Q) = log det(I + Q Fᴴ R₀⁻¹ F)`, `R₀ = I + σ² G Q Gᴴ`.

use crate::channel::{InputCovariance, QuadraticPencil, StructuredChannel};
use crate::covopt::{self, AscentOpts};
use crate::error::{Error, Result};
use crate::linalg::{self, re, CMat};
use crate::mc::{self, complex_normal, sample_rng, MCConfig};

/// Minimum number of Monte Carlo samples for the optimal-decoding bound.
pub const MIN_MC_SAMPLES: usize = 1000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum LowerBoundKind {
    GaussianOptimal,
    GaussianLinear,
}

impl LowerBoundKind {
    pub fn name(self) -> &'static str {
        match self {
            LowerBoundKind::GaussianOptimal => "gaussian_optimal",
            LowerBoundKind::GaussianLinear => "gaussian_linear",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LowerBoundResult {
    pub rate_nats: f64,
    /// Zero for closed forms.
    pub stderr_nats: f64,
    pub bound: LowerBoundKind,
    pub q_used: InputCovariance,
    pub n_samples: usize,
}

/// `R₀ = I + σ² G Q Gᴴ`, the interference-plus-noise covariance seen by
/// the linear receiver.
pub fn r0_matrix(ch: &StructuredChannel, q: &InputCovariance) -> Result<CMat> {
    ch.check_cov(q)?;
    let g = ch.g();
    let out = linalg::identity(ch.dim()) + (g * q.matrix() * g.adjoint()) * re(ch.sigma2());
    Ok(linalg::hermitian_part(&out))
}

/// `(Q⁻¹ + Fᴴ R₀⁻¹ F)⁻¹`. Requires `Q ≻ 0`; see
/// [`lmmse_error_cov_inverse_free`] for rank-deficient inputs.
pub fn lmmse_error_cov(ch: &StructuredChannel, q: &InputCovariance) -> Result<CMat> {
    let r0 = r0_matrix(ch, q)?;
    let (vals, _) = linalg::herm_eig(q.matrix());
    let top = vals.last().copied().unwrap_or(0.0);
    if vals.first().map_or(true, |&l| l <= 1e-12 * top.max(1e-300)) {
        return Err(Error::Singular("input covariance is not positive definite".into()));
    }
    let q_inv = linalg::inv_hpd(q.matrix()).ok_or_else(|| Error::Singular("Q".into()))?;
    let r0_inv = linalg::inv_hpd(&r0).ok_or_else(|| Error::Singular("R0".into()))?;
    let info = q_inv + ch.f().adjoint() * r0_inv * ch.f();
    linalg::inv_hpd(&info).ok_or_else(|| Error::Singular("information matrix".into()))
}

/// `Q − Q Fᴴ (F Q Fᴴ + R₀)⁻¹ F Q`, valid for singular `Q`.
pub fn lmmse_error_cov_inverse_free(ch: &StructuredChannel, q: &InputCovariance) -> Result<CMat> {
    let r0 = r0_matrix(ch, q)?;
    let qm = q.matrix();
    let f = ch.f();
    let qy = &r0 + f * qm * f.adjoint();
    let qy_inv = linalg::inv_hpd(&qy).ok_or_else(|| Error::Singular("output covariance".into()))?;
    let qf = qm * f.adjoint();
    Ok(linalg::hermitian_part(&(qm - &qf * qy_inv * qf.adjoint())))
}

/// The LMMSE estimator matrix `A = Q Fᴴ (F Q Fᴴ + R₀)⁻¹`.
pub fn lmmse_filter(ch: &StructuredChannel, q: &InputCovariance) -> Result<CMat> {
    let r0 = r0_matrix(ch, q)?;
    let f = ch.f();
    let qy = &r0 + f * q.matrix() * f.adjoint();
    let qy_inv = linalg::inv_hpd(&qy).ok_or_else(|| Error::Singular("output covariance".into()))?;
    Ok(q.matrix() * f.adjoint() * qy_inv)
}

fn linear_value(ch: &StructuredChannel, q: &CMat) -> f64 {
    let g = ch.g();
    let f = ch.f();
    let r0 = linalg::identity(ch.dim()) + (g * q * g.adjoint()) * re(ch.sigma2());
    let sy = &r0 + f * q * f.adjoint();
    linalg::logdet_hpd(&sy) - linalg::logdet_hpd(&r0)
}

/// Gaussian signaling with a linear receiver (closed form).
pub fn rate_gaussian_linear(ch: &StructuredChannel, q: &InputCovariance) -> Result<LowerBoundResult> {
    ch.check_cov(q)?;
    Ok(LowerBoundResult {
        rate_nats: linear_value(ch, q.matrix()),
        stderr_nats: 0.0,
        bound: LowerBoundKind::GaussianLinear,
        q_used: q.clone(),
        n_samples: 0,
    })
}

fn jensen_penalty(ch: &StructuredChannel, q: &CMat) -> f64 {
    let g = ch.g();
    (1.0 + ch.sigma2() * linalg::trace_re(&(g * q * g.adjoint()))).ln()
}

/// Gaussian signaling with optimal decoding (Monte Carlo over `s`).
pub fn rate_gaussian_optimal(ch: &StructuredChannel, q: &InputCovariance, mc: &MCConfig) -> Result<LowerBoundResult> {
    ch.check_cov(q)?;
    let penalty = jensen_penalty(ch, q.matrix());
    let l = q.factor();
    let r = l.ncols();
    let result = |rate_nats, stderr_nats, n_samples| LowerBoundResult {
        rate_nats,
        stderr_nats,
        bound: LowerBoundKind::GaussianOptimal,
        q_used: q.clone(),
        n_samples,
    };
    if r == 0 {
        return Ok(result(-penalty, 0.0, 0));
    }
    let fl = ch.f() * &l;
    let gl = ch.g() * &l;
    if ch.sigma2() == 0.0 || gl.norm() == 0.0 {
        let ld = linalg::logdet_hpd(&(linalg::identity(r) + fl.adjoint() * &fl));
        return Ok(result(ld - penalty, 0.0, 0));
    }
    if mc.n_samples < MIN_MC_SAMPLES {
        return Err(Error::InvalidArgument(format!(
            "optimal-decoding bound needs at least {MIN_MC_SAMPLES} samples, got {}",
            mc.n_samples
        )));
    }
    let pencil = QuadraticPencil::gram(&fl, &gl);
    let eye = linalg::identity(r);
    let sigma2 = ch.sigma2();
    let est = mc::expect(mc, |_, rng| {
        let s = complex_normal(rng, sigma2);
        // det(I + HQHᴴ) = det(I + (HL)ᴴ(HL)) with H = F + sG.
        linalg::logdet_hpd(&(&eye + pencil.at(s)))
    })?;
    Ok(result(est.mean - penalty, est.stderr, est.n_samples))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Objective {
    Linear,
    Optimal,
}

#[derive(Debug, Clone, Copy)]
pub struct OptimizeOpts {
    pub max_iter: usize,
    pub rel_tol: f64,
    /// Common random numbers for the optimal-decoding objective; at most
    /// `gradient_samples` draws of `s` are used per evaluation.
    pub mc: MCConfig,
    pub gradient_samples: usize,
}

impl Default for OptimizeOpts {
    fn default() -> Self {
        OptimizeOpts {
            max_iter: 200,
            rel_tol: 1e-6,
            mc: MCConfig::default(),
            gradient_samples: 1000,
        }
    }
}

#[derive(Debug, Clone)]
pub struct OptimizedInput {
    pub q: InputCovariance,
    /// Objective at `q` (common-random-number estimate for `Optimal`).
    pub objective: f64,
    /// Objective at the isotropic starting point, same evaluation.
    pub isotropic_objective: f64,
    pub iterations: usize,
    /// False when the iteration cap was hit; `q` is still feasible.
    pub converged: bool,
}

fn linear_eval(ch: &StructuredChannel, q: &CMat) -> (f64, CMat) {
    let f = ch.f();
    let g = ch.g();
    let s2 = ch.sigma2();
    let r0 = linalg::identity(ch.dim()) + (g * q * g.adjoint()) * re(s2);
    let sy = &r0 + f * q * f.adjoint();
    let sy_inv = linalg::inv_hpd(&sy).expect("Σ_y is positive definite");
    let r0_inv = linalg::inv_hpd(&r0).expect("R₀ is positive definite");
    let grad = f.adjoint() * &sy_inv * f + (g.adjoint() * (&sy_inv - &r0_inv) * g) * re(s2);
    (
        linalg::logdet_hpd(&sy) - linalg::logdet_hpd(&r0),
        linalg::hermitian_part(&grad),
    )
}

fn optimal_eval(ch: &StructuredChannel, draws: &[CMat], q: &CMat) -> (f64, CMat) {
    let n = ch.dim();
    let g = ch.g();
    let mut total = 0.0;
    let mut grad = linalg::zeros(n, n);
    for h in draws {
        let sy = linalg::identity(n) + h * q * h.adjoint();
        let inv = linalg::inv_hpd(&sy).expect("Σ_(y|s) is positive definite");
        total += linalg::logdet_hpd(&sy);
        grad += h.adjoint() * inv * h;
    }
    let m = draws.len() as f64;
    let gqg = linalg::trace_re(&(g * q * g.adjoint()));
    let denom = 1.0 + ch.sigma2() * gqg;
    grad = grad * re(1.0 / m) - (g.adjoint() * g) * re(ch.sigma2() / denom);
    (total / m - denom.ln(), linalg::hermitian_part(&grad))
}

/// Maximize a Gaussian lower bound over `{Q ⪰ 0, tr Q ≤ P}` starting from
/// the isotropic covariance. Any returned `Q` is feasible.
pub fn optimize_qx(ch: &StructuredChannel, p: f64, objective: Objective, opts: &OptimizeOpts) -> Result<OptimizedInput> {
    if !(p >= 0.0) {
        return Err(Error::InvalidArgument(format!("power {p} must be >= 0")));
    }
    let n = ch.dim();
    if p == 0.0 {
        return Ok(OptimizedInput {
            q: InputCovariance::zero(n),
            objective: 0.0,
            isotropic_objective: 0.0,
            iterations: 0,
            converged: true,
        });
    }
    let start = InputCovariance::isotropic(n, p);
    let ascent = AscentOpts {
        max_iter: opts.max_iter,
        rel_tol: opts.rel_tol,
        gap_tol: None,
    };
    let res = match objective {
        Objective::Linear => {
            let iso = linear_eval(ch, start.matrix()).0;
            (covopt::projected_ascent(start.matrix(), p, |q| linear_eval(ch, q), ascent), iso)
        }
        Objective::Optimal => {
            let m = opts.gradient_samples.min(opts.mc.n_samples).max(1);
            let draws: Vec<CMat> = (0..m)
                .map(|i| ch.realize(complex_normal(&mut sample_rng(opts.mc.seed, i as u64), ch.sigma2())))
                .collect();
            let iso = optimal_eval(ch, &draws, start.matrix()).0;
            (
                covopt::projected_ascent(start.matrix(), p, |q| optimal_eval(ch, &draws, q), ascent),
                iso,
            )
        }
    };
    let (ascent_res, iso) = res;
    // projected_ascent only accepts improving steps, so the iterate never
    // falls below the isotropic start.
    let q = InputCovariance::new(ascent_res.q)?;
    Ok(OptimizedInput {
        q,
        objective: ascent_res.value,
        isotropic_objective: iso,
        iterations: ascent_res.iterations,
        converged: ascent_res.converged,
    })
}
