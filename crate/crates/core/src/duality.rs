//! Capacity upper bounds from the duality bound with the regularized Gamma
//! output family (`δ = 0`, `α ≤ N`).
//!
//! `R_UB(α, S, Q) = α log β(Q, S) + log Γ(α)/Γ(N) + α − N − log det S
//!                  + sup_{‖x‖ ≤ r} log(γ(S, x)^{N−α} / (1 + σ²‖Gx‖²))`
//!
//! β is linear in `Q`, so its maximum over the trace ball is closed form and
//! no iterative optimization sits inside a reported bound. The sup-term is
//! certified unless [`SupMode::Numerical`] is requested.

use rayon::prelude::*;
use statrs::function::gamma::ln_gamma;

use crate::channel::{InputCovariance, StructuredChannel};
use crate::covopt::{self, AscentOpts};
use crate::error::{Error, Result};
use crate::linalg::{self, re, CMat, CVec};
use crate::mc::{complex_normal, sample_rng};

/// Relative numerical-rank tolerance, scaled by `N`.
pub const RANK_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum UpperBoundKind {
    UbLogdet,
    UbGeneral,
    UbDof,
}

impl UpperBoundKind {
    pub fn name(self) -> &'static str {
        match self {
            UpperBoundKind::UbLogdet => "ub_logdet",
            UpperBoundKind::UbGeneral => "ub_general",
            UpperBoundKind::UbDof => "ub_dof",
        }
    }
}

/// How the supremum over the input ball is evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SupMode {
    /// `α = N`: the numerator exponent vanishes, sup is attained at `x = 0`.
    AlphaN,
    /// `α = N − 1`, `S = I`: `log max{N, 1 + λ_max(FᴴF, σ²GᴴG)}`, valid for all `r`.
    Dof,
    /// `(N − α) log(tr S + r² λ_max(FᴴSF + σ²GᴴSG))`.
    SafeEnvelope,
    /// Closed form when one applies, otherwise the safe envelope.
    Auto,
    /// Multi-start projected gradient. Never certified.
    Numerical,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DualityParams {
    pub alpha: f64,
    pub s: CMat,
    /// Always 0 here.
    pub delta: f64,
    pub r: f64,
    pub beta: f64,
    pub sup_mode: SupMode,
    pub sup_value: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct UpperBoundResult {
    pub rate_nats: f64,
    pub bound: UpperBoundKind,
    pub params: Option<DualityParams>,
    pub q_used: Option<InputCovariance>,
    pub certified: bool,
    /// Optimality gap of the inner maximization (ub_logdet only).
    pub gap: f64,
    pub iterations: usize,
}

fn check_weight(ch: &StructuredChannel, s: &CMat) -> Result<()> {
    if s.shape() != (ch.dim(), ch.dim()) {
        return Err(Error::DimensionMismatch {
            expected: ch.dim(),
            got: s.nrows(),
        });
    }
    if linalg::hermitian_residual(s) > 1e-9 * s.norm().max(1.0) {
        return Err(Error::InvalidArgument("S is not Hermitian".into()));
    }
    if linalg::lambda_min(&linalg::hermitian_part(s)) <= 0.0 {
        return Err(Error::InvalidArgument("S is not positive definite".into()));
    }
    Ok(())
}

/// `FᴴSF + σ²GᴴSG`.
fn weighted_gram(ch: &StructuredChannel, s: &CMat) -> CMat {
    let f = ch.f();
    let g = ch.g();
    linalg::hermitian_part(&(f.adjoint() * s * f + (g.adjoint() * s * g) * re(ch.sigma2())))
}

/// `γ(S, x) = tr S + xᴴ(FᴴSF + σ²GᴴSG)x = E[‖y‖²_S | x]`.
pub fn gamma_term(ch: &StructuredChannel, s: &CMat, x: &CVec) -> Result<f64> {
    check_weight(ch, s)?;
    ch.check_vec(x)?;
    let m = weighted_gram(ch, s);
    Ok(linalg::trace_re(s) + (x.adjoint() * m * x)[(0, 0)].re)
}

/// `β(Q, S) = tr(S(I + FQFᴴ + σ²GQGᴴ)) / α`.
pub fn beta_term(ch: &StructuredChannel, s: &CMat, q: &InputCovariance, alpha: f64) -> Result<f64> {
    check_weight(ch, s)?;
    ch.check_cov(q)?;
    if !(alpha > 0.0) {
        return Err(Error::InvalidArgument(format!("alpha = {alpha} must be > 0")));
    }
    let m = weighted_gram(ch, s);
    Ok((linalg::trace_re(s) + (m * q.matrix()).trace().re) / alpha)
}

/// `max_{tr Q ≤ P} β(Q, S)` and a maximizing (rank-one) covariance.
pub fn beta_max(ch: &StructuredChannel, s: &CMat, p: f64, alpha: f64) -> Result<(f64, InputCovariance)> {
    check_weight(ch, s)?;
    if !(alpha > 0.0) {
        return Err(Error::InvalidArgument(format!("alpha = {alpha} must be > 0")));
    }
    let m = weighted_gram(ch, s);
    let (vals, vecs) = linalg::herm_eig(&m);
    let top = vals[vals.len() - 1].max(0.0);
    let v = vecs.column(vecs.ncols() - 1).into_owned();
    let q = InputCovariance::new(&v * v.adjoint() * re(p))?;
    Ok(((linalg::trace_re(s) + p * top) / alpha, q))
}

/// Generalized eigenvalue `λ_max(FᴴF, σ²GᴴG)`, computed by whitening with a
/// Cholesky factor of `GᴴG`. Errors when `G` is numerically rank-deficient.
pub fn pencil_lambda_max(ch: &StructuredChannel) -> Result<f64> {
    let n = ch.dim();
    let (smax, smin) = linalg::singular_extremes(ch.g());
    if ch.sigma2() <= 0.0 || smin <= RANK_TOL * n as f64 * smax.max(f64::MIN_POSITIVE) {
        return Err(Error::Singular(
            "sigma^2 G^H G is singular; use ub_general with the safe envelope".into(),
        ));
    }
    let ggram = linalg::hermitian_part(&(ch.g().adjoint() * ch.g()));
    let chol = ggram
        .cholesky()
        .ok_or_else(|| Error::Singular("Cholesky of G^H G failed".into()))?;
    let l = chol.l();
    let fgram = ch.f().adjoint() * ch.f();
    // L⁻¹ (FᴴF) L⁻ᴴ
    let left = l
        .solve_lower_triangular(&fgram)
        .ok_or_else(|| Error::Singular("triangular solve".into()))?;
    let whitened = l
        .solve_lower_triangular(&left.adjoint())
        .ok_or_else(|| Error::Singular("triangular solve".into()))?;
    Ok(linalg::lambda_max(&linalg::hermitian_part(&whitened)) / ch.sigma2())
}

fn is_identity(s: &CMat) -> bool {
    (s - linalg::identity(s.nrows())).norm() <= 1e-12 * s.nrows() as f64
}

fn sup_numerical(ch: &StructuredChannel, alpha: f64, s: &CMat, r: f64) -> f64 {
    const STARTS: usize = 32;
    const ITERS: usize = 300;
    let n = ch.dim();
    let m = weighted_gram(ch, s);
    let ggram = linalg::hermitian_part(&(ch.g().adjoint() * ch.g()));
    let tr_s = linalg::trace_re(s);
    let expo = n as f64 - alpha;
    let sigma2 = ch.sigma2();
    let phi = |x: &CVec| {
        let gamma = tr_s + (x.adjoint() * &m * x)[(0, 0)].re;
        let den = 1.0 + sigma2 * (x.adjoint() * &ggram * x)[(0, 0)].re;
        expo * gamma.ln() - den.ln()
    };
    let grad = |x: &CVec| {
        let gamma = tr_s + (x.adjoint() * &m * x)[(0, 0)].re;
        let den = 1.0 + sigma2 * (x.adjoint() * &ggram * x)[(0, 0)].re;
        &m * x * re(expo / gamma) - &ggram * x * re(sigma2 / den)
    };
    let project = |x: CVec| {
        let norm = x.norm();
        if norm > r {
            x * re(r / norm)
        } else {
            x
        }
    };
    let best = (0..STARTS)
        .into_par_iter()
        .map(|j| {
            let mut rng = sample_rng(0x5eed, j as u64);
            let raw = CVec::from_fn(n, |_, _| complex_normal(&mut rng, 1.0));
            let radius = r * (j as f64 + 1.0) / STARTS as f64;
            let mut x = &raw * re(radius / raw.norm().max(f64::MIN_POSITIVE));
            let mut val = phi(&x);
            let mut step = r * r;
            for _ in 0..ITERS {
                let trial = project(&x + grad(&x) * re(step));
                let tv = phi(&trial);
                if tv > val {
                    x = trial;
                    val = tv;
                    step *= 1.5;
                } else {
                    step *= 0.5;
                }
            }
            val.max(phi(&CVec::zeros(n)))
        })
        .collect::<Vec<_>>();
    best.into_iter().fold(f64::NEG_INFINITY, f64::max)
}

/// Evaluate the sup-term. Returns `(value, certified, mode actually used)`.
pub fn sup_term(ch: &StructuredChannel, alpha: f64, s: &CMat, r: f64, mode: SupMode) -> Result<(f64, bool, SupMode)> {
    let n = ch.dim() as f64;
    let resolved = match mode {
        SupMode::Auto => {
            if alpha == n {
                SupMode::AlphaN
            } else if alpha == n - 1.0 && is_identity(s) && pencil_lambda_max(ch).is_ok() {
                SupMode::Dof
            } else {
                SupMode::SafeEnvelope
            }
        }
        other => other,
    };
    match resolved {
        SupMode::AlphaN => {
            if alpha != n {
                return Err(Error::InvalidArgument("alpha = N sup mode requires alpha = N".into()));
            }
            Ok((0.0, true, resolved))
        }
        SupMode::Dof => {
            if alpha != n - 1.0 || !is_identity(s) {
                return Err(Error::InvalidArgument("dof sup mode requires alpha = N - 1 and S = I".into()));
            }
            let lam = pencil_lambda_max(ch)?;
            Ok((n.max(1.0 + lam).ln(), true, resolved))
        }
        SupMode::SafeEnvelope => {
            let lam = linalg::lambda_max(&weighted_gram(ch, s)).max(0.0);
            let val = (n - alpha) * (linalg::trace_re(s) + r * r * lam).ln();
            Ok((val, true, resolved))
        }
        SupMode::Numerical => Ok((sup_numerical(ch, alpha, s, r), false, resolved)),
        SupMode::Auto => unreachable!(),
    }
}

/// Assemble `R_UB` from its pieces.
pub fn r_ub_value(n: usize, alpha: f64, beta: f64, logdet_s: f64, sup: f64) -> f64 {
    alpha * beta.ln() + ln_gamma(alpha) - ln_gamma(n as f64) + alpha - n as f64 - logdet_s + sup
}

/// Default input-support radius `10√P`.
pub fn default_radius(p: f64) -> f64 {
    10.0 * p.sqrt()
}

#[derive(Debug, Clone)]
pub struct GeneralQuery {
    pub alpha: f64,
    pub s: CMat,
    pub r: f64,
    pub mode: SupMode,
    /// Refuse modes that cannot certify the sup-term.
    pub certified_only: bool,
}

impl GeneralQuery {
    pub fn identity(n: usize, alpha: f64, r: f64) -> Self {
        GeneralQuery {
            alpha,
            s: linalg::identity(n),
            r,
            mode: SupMode::Auto,
            certified_only: true,
        }
    }
}

/// The general duality bound at fixed `(α, S, r)`, maximized over `Q`.
pub fn ub_general(ch: &StructuredChannel, p: f64, query: &GeneralQuery) -> Result<UpperBoundResult> {
    let n = ch.dim();
    let alpha = query.alpha;
    if !(alpha > 0.0 && alpha <= n as f64) {
        return Err(Error::InvalidArgument(format!("alpha = {alpha} must lie in (0, {n}]")));
    }
    if !(p > 0.0) || !(query.r > 0.0) {
        return Err(Error::InvalidArgument("P and r must be > 0".into()));
    }
    if query.certified_only && query.mode == SupMode::Numerical {
        return Err(Error::Uncertified);
    }
    check_weight(ch, &query.s)?;
    let s = linalg::hermitian_part(&query.s);
    let (beta, q) = beta_max(ch, &s, p, alpha)?;
    let (sup_value, certified, sup_mode) = sup_term(ch, alpha, &s, query.r, query.mode)?;
    let rate = r_ub_value(n, alpha, beta, linalg::logdet_hpd(&s), sup_value);
    Ok(UpperBoundResult {
        rate_nats: rate,
        bound: UpperBoundKind::UbGeneral,
        params: Some(DualityParams {
            alpha,
            s,
            delta: 0.0,
            r: query.r,
            beta,
            sup_mode,
            sup_value,
        }),
        q_used: Some(q),
        certified,
        gap: 0.0,
        iterations: 0,
    })
}

/// `R_UB(α, S, Q)` at a fixed input covariance, without the outer
/// maximization over `Q`.
pub fn r_ub_at(ch: &StructuredChannel, q: &InputCovariance, query: &GeneralQuery) -> Result<f64> {
    let n = ch.dim();
    if !(query.alpha > 0.0 && query.alpha <= n as f64) {
        return Err(Error::InvalidArgument(format!("alpha = {} must lie in (0, {n}]", query.alpha)));
    }
    if query.certified_only && query.mode == SupMode::Numerical {
        return Err(Error::Uncertified);
    }
    let s = linalg::hermitian_part(&query.s);
    let beta = beta_term(ch, &s, q, query.alpha)?;
    let (sup, _, _) = sup_term(ch, query.alpha, &s, query.r, query.mode)?;
    Ok(r_ub_value(n, query.alpha, beta, linalg::logdet_hpd(&s), sup))
}

/// Minimum of certified `ub_general` over `α ∈ {1, …, N}` with `S = I`.
pub fn ub_general_alpha_grid(ch: &StructuredChannel, p: f64, r: f64) -> Result<UpperBoundResult> {
    let mut best: Option<UpperBoundResult> = None;
    for a in 1..=ch.dim() {
        let res = ub_general(ch, p, &GeneralQuery::identity(ch.dim(), a as f64, r))?;
        if best.as_ref().map_or(true, |b| res.rate_nats < b.rate_nats) {
            best = Some(res);
        }
    }
    best.ok_or_else(|| Error::InvalidArgument("empty alpha grid".into()))
}

/// `α = N − 1`, `S = I` closed form; grows like `(N − 1) log P`.
pub fn ub_dof(ch: &StructuredChannel, p: f64) -> Result<UpperBoundResult> {
    let n = ch.dim();
    if n < 2 {
        return Err(Error::InvalidArgument("ub_dof needs N >= 2".into()));
    }
    if !(p > 0.0) {
        return Err(Error::InvalidArgument(format!("power {p} must be > 0")));
    }
    let query = GeneralQuery {
        alpha: (n - 1) as f64,
        s: linalg::identity(n),
        r: default_radius(p),
        mode: SupMode::Dof,
        certified_only: true,
    };
    let res = ub_general(ch, p, &query)?;
    Ok(UpperBoundResult {
        bound: UpperBoundKind::UbDof,
        ..res
    })
}

#[derive(Debug, Clone, Copy)]
pub struct LogdetOpts {
    pub max_iter: usize,
    /// Relative duality-gap target.
    pub gap_tol: f64,
}

impl Default for LogdetOpts {
    fn default() -> Self {
        LogdetOpts {
            max_iter: 5000,
            gap_tol: 1e-6,
        }
    }
}

fn logdet_eval(ch: &StructuredChannel, q: &CMat) -> (f64, CMat) {
    let f = ch.f();
    let g = ch.g();
    let s2 = ch.sigma2();
    let sy = linalg::identity(ch.dim()) + f * q * f.adjoint() + (g * q * g.adjoint()) * re(s2);
    let inv = linalg::inv_hpd(&sy).expect("Σ_y is positive definite");
    let grad = f.adjoint() * &inv * f + (g.adjoint() * &inv * g) * re(s2);
    (linalg::logdet_hpd(&sy), linalg::hermitian_part(&grad))
}

/// `max_{tr Q ≤ P} log det(I + FQFᴴ + σ²GQGᴴ)`.
///
/// The reported rate is the objective at the final iterate plus its
/// concavity gap, so it upper-bounds the true maximum even when the
/// iteration cap is hit; `certified` is always true.
pub fn ub_logdet(ch: &StructuredChannel, p: f64) -> Result<UpperBoundResult> {
    ub_logdet_with(ch, p, &LogdetOpts::default())
}

pub fn ub_logdet_with(ch: &StructuredChannel, p: f64, opts: &LogdetOpts) -> Result<UpperBoundResult> {
    if !(p > 0.0) {
        return Err(Error::InvalidArgument(format!("power {p} must be > 0")));
    }
    let f = ch.f();
    let g = ch.g();
    // Exact at σ² = 0, a good warm start otherwise.
    let gram = linalg::hermitian_part(&(f.adjoint() * f + (g.adjoint() * g) * re(ch.sigma2())));
    let q0 = covopt::waterfill_cov(&gram, p);
    let res = covopt::projected_ascent(
        &q0,
        p,
        |q| logdet_eval(ch, q),
        AscentOpts {
            max_iter: opts.max_iter,
            rel_tol: 0.0,
            gap_tol: Some(opts.gap_tol),
        },
    );
    Ok(UpperBoundResult {
        rate_nats: res.value + res.gap,
        bound: UpperBoundKind::UbLogdet,
        params: None,
        q_used: Some(InputCovariance::new(res.q)?),
        certified: true,
        gap: res.gap,
        iterations: res.iterations,
    })
}

/// `log det Σ_y(Q)` at a given covariance (the `α = N`, `S ∝ Σ_y⁻¹`
/// specialization of the duality bound at that `Q`).
pub fn logdet_objective(ch: &StructuredChannel, q: &InputCovariance) -> Result<f64> {
    ch.check_cov(q)?;
    Ok(logdet_eval(ch, q.matrix()).0)
}

/// Leading-order bracket `C_G − c_LB σ² ≤ C ≤ C_G + f(P) σ²`.
#[derive(Debug, Clone)]
pub struct SmallSigmaBracket {
    pub c_g: f64,
    pub lower_coeff: f64,
    pub upper_coeff: f64,
    /// Coherent-optimal covariance `Q⋆`.
    pub q_star: InputCovariance,
}

impl SmallSigmaBracket {
    pub fn lower(&self, sigma2: f64) -> f64 {
        self.c_g - self.lower_coeff * sigma2
    }

    pub fn upper(&self, sigma2: f64) -> f64 {
        self.c_g + self.upper_coeff * sigma2
    }
}

pub fn small_sigma_bracket(ch: &StructuredChannel, p: f64) -> Result<SmallSigmaBracket> {
    if !(p > 0.0) {
        return Err(Error::InvalidArgument(format!("power {p} must be > 0")));
    }
    let n = ch.dim();
    let f = ch.f();
    let g = ch.g();
    let q = covopt::waterfill_cov(&linalg::hermitian_part(&(f.adjoint() * f)), p);
    let sigma0 = linalg::identity(n) + f * &q * f.adjoint();
    let c_g = linalg::logdet_hpd(&sigma0);
    let inv = linalg::inv_hpd(&sigma0).ok_or_else(|| Error::Singular("Σ₀".into()))?;
    let upper_coeff = p * linalg::lambda_max(&linalg::hermitian_part(&(g.adjoint() * &inv * g))).max(0.0);
    let gqg = g * &q * g.adjoint();
    let cross = &inv * g * &q * f.adjoint();
    let lower = (&inv * &gqg).trace().re - cross.norm_squared() - linalg::trace_re(&gqg);
    Ok(SmallSigmaBracket {
        c_g,
        lower_coeff: lower.abs(),
        upper_coeff,
        q_star: InputCovariance::new(q)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::c;

    fn diag(vals: &[f64]) -> CMat {
        CMat::from_diagonal(&nalgebra::DVector::from_iterator(vals.len(), vals.iter().map(|&v| re(v))))
    }

    #[test]
    fn gamma_and_beta_closed_forms() {
        let n = 3;
        let ch = StructuredChannel::new(linalg::identity(n), linalg::zeros(n, n), 0.5).unwrap();
        let eye = linalg::identity(n);
        let x = CVec::from_vec(vec![c(1.0, 0.0), c(0.0, 2.0), c(-1.0, 1.0)]);
        assert!((gamma_term(&ch, &eye, &x).unwrap() - (n as f64 + 7.0)).abs() < 1e-13);
        assert!((gamma_term(&ch, &eye, &CVec::zeros(n)).unwrap() - 3.0).abs() < 1e-15);
        let q = InputCovariance::isotropic(n, 6.0);
        assert!((beta_term(&ch, &eye, &q, 3.0).unwrap() - 3.0).abs() < 1e-13);
        assert!((beta_term(&ch, &eye, &InputCovariance::zero(n), 2.0).unwrap() - 1.5).abs() < 1e-15);
    }

    #[test]
    fn alpha_n_symmetric_case() {
        let n = 4;
        let p = 20.0;
        let ch = StructuredChannel::new(linalg::identity(n), linalg::zeros(n, n), 0.0).unwrap();
        let res = ub_general(&ch, p, &GeneralQuery::identity(n, n as f64, 1e6)).unwrap();
        assert!((res.rate_nats - n as f64 * (1.0 + p / n as f64).ln()).abs() < 1e-12);
        assert!(res.certified);
        let ld = ub_logdet(&ch, p).unwrap();
        assert!((ld.rate_nats - res.rate_nats).abs() < 1e-9);
    }

    #[test]
    fn dof_pencil_scalar_like() {
        let (f, g, s2) = (1.7, 0.4, 0.01);
        let ch = StructuredChannel::new(linalg::identity(2) * re(f), linalg::identity(2) * re(g), s2).unwrap();
        let lam = pencil_lambda_max(&ch).unwrap();
        assert!((1.0 + lam - (1.0 + f * f / (s2 * g * g))).abs() < 1e-9 * lam);
        let zero_f = StructuredChannel::new(linalg::zeros(2, 2), linalg::identity(2), 0.1).unwrap();
        let res = ub_dof(&zero_f, 5.0).unwrap();
        assert!((res.params.unwrap().sup_value - 2f64.ln()).abs() < 1e-14);
        let singular = StructuredChannel::new(linalg::identity(2), diag(&[1.0, 0.0]), 0.1).unwrap();
        assert!(matches!(ub_dof(&singular, 5.0), Err(Error::Singular(_))));
    }

    #[test]
    fn numerical_mode_is_never_certified() {
        let ch = StructuredChannel::new(diag(&[1.0, 0.5]), diag(&[0.3, 1.0]), 0.1).unwrap();
        let mut q = GeneralQuery::identity(2, 1.0, 10.0);
        q.mode = SupMode::Numerical;
        assert_eq!(ub_general(&ch, 10.0, &q).unwrap_err(), Error::Uncertified);
        q.certified_only = false;
        let res = ub_general(&ch, 10.0, &q).unwrap();
        assert!(!res.certified);
        // The safe envelope dominates any attained value.
        q.mode = SupMode::SafeEnvelope;
        let safe = ub_general(&ch, 10.0, &q).unwrap();
        assert!(safe.rate_nats >= res.rate_nats);
    }

    #[test]
    fn bracket_collapses_without_g() {
        let ch = StructuredChannel::new(diag(&[1.0, 0.2]), linalg::zeros(2, 2), 0.1).unwrap();
        let b = small_sigma_bracket(&ch, 4.0).unwrap();
        assert_eq!(b.lower_coeff, 0.0);
        assert_eq!(b.upper_coeff, 0.0);
        assert!((b.c_g - ub_logdet(&ch.with_sigma2(0.0).unwrap(), 4.0).unwrap().rate_nats).abs() < 1e-9);
    }
}
