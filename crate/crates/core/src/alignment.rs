//! Superposition coding with subspace alignment.
//!
//! A semi-unitary `V` (N × (N−1)) is built so that `span(FV, GV)` is a
//! proper subspace `S` of the receive space. The refined layer `x_d = V w_d`
//! then never leaks into `S⊥`, which carries the coarse layer (or a pilot)
//! alone. `s` is estimated from the `S⊥` projection, and the refined layer is
//! decoded with a conditional LMMSE filter indexed by `ŝ`.

use crate::channel::{QuadraticPencil, StructuredChannel};
use crate::error::{Error, Result};
use crate::linalg::{self, c, re, CMat, CVec, C64};
use crate::mc::{self, complex_normal, derive_seed, Estimate, MCConfig};

/// Relative rank tolerance per unit dimension; see [`default_tol`].
pub const RANK_TOL: f64 = 1e-10;
/// Post-construction acceptance threshold on `σ_N([FV GV]) / σ_1`.
pub const CONSTRUCTION_TOL: f64 = 1e-8;
/// Minimum inner mixture size for the coarse-layer entropy estimator.
pub const MIN_MIXTURE: usize = 1000;

pub fn default_tol(n: usize) -> f64 {
    RANK_TOL * n as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PrecoderCase {
    /// `F` rank-deficient.
    SingularF,
    /// `G` rank-deficient (including `G = 0`).
    SingularG,
    /// Root of `det(F + tG) = 0`.
    Pencil,
}

#[derive(Debug, Clone)]
pub struct AlignmentPrecoder {
    pub v: CMat,
    pub w: CVec,
    pub u: CMat,
    pub u_perp: CMat,
    pub d_perp: usize,
    pub case: PrecoderCase,
    /// Pencil root for [`PrecoderCase::Pencil`].
    pub t_star: Option<C64>,
    /// `‖VᴴV − I‖_F`.
    pub orthonormality: f64,
    /// `σ_N([FV GV]) / σ_1([FV GV])`.
    pub rank_ratio: f64,
    /// `‖U_perpᴴFV‖_F + ‖U_perpᴴGV‖_F`.
    pub leakage: f64,
}

fn smallest_left_singular(a: &CMat) -> (CVec, f64) {
    let d = linalg::svd(a);
    let k = d.s.len() - 1;
    (d.u.column(k).into_owned(), d.s[k])
}

fn kernel_precoder(w: &CVec, other: &CMat) -> CMat {
    let n = w.len();
    let dir = other.adjoint() * w;
    if dir.norm() <= f64::EPSILON * other.norm().max(1.0) {
        return linalg::identity(n).columns(0, n - 1).into_owned();
    }
    linalg::orth_complement(&dir)
}

fn concat(a: &CMat, b: &CMat) -> CMat {
    let mut out = CMat::zeros(a.nrows(), a.ncols() + b.ncols());
    out.columns_mut(0, a.ncols()).copy_from(a);
    out.columns_mut(a.ncols(), b.ncols()).copy_from(b);
    out
}

fn rank_ratio(f: &CMat, g: &CMat, v: &CMat) -> f64 {
    let n = f.nrows();
    let s = linalg::svd(&concat(&(f * v), &(g * v))).s;
    if s[0] == 0.0 {
        return 0.0;
    }
    s.get(n - 1).copied().unwrap_or(0.0) / s[0]
}

/// Pencil case: roots of `det(F + tG) = 0` are the eigenvalues of `−G⁻¹F`.
/// The smallest-magnitude root is tried first; later roots are used only
/// if the rank check fails.
fn pencil_precoder(f: &CMat, g: &CMat) -> Result<(CVec, CMat, C64)> {
    let n = f.nrows();
    let m = g
        .clone()
        .lu()
        .solve(&(-f))
        .ok_or_else(|| Error::Singular("G is not invertible".into()))?;
    let mut roots = linalg::eigenvalues(&m).ok_or_else(|| Error::Singular("eigenvalues of G⁻¹F did not converge".into()))?;
    roots.sort_by(|a, b| a.norm().total_cmp(&b.norm()));

    let mut best: Option<(CVec, CMat, C64, f64)> = None;
    for t in roots {
        let (w, _) = smallest_left_singular(&(f + g * t));
        let pair = CMat::from_columns(&[f.adjoint() * &w, g.adjoint() * &w]);
        let d = linalg::svd(&pair);
        let v = if d.s[0] > 0.0 {
            linalg::orth_complement(&d.u.column(0).into_owned())
        } else {
            linalg::identity(n).columns(0, n - 1).into_owned()
        };
        let r = rank_ratio(f, g, &v);
        if best.as_ref().map_or(true, |b| r < b.3) {
            best = Some((w, v, t, r));
        }
        if r < 1e-2 * CONSTRUCTION_TOL {
            break;
        }
    }
    let (w, v, t, _) = best.expect("at least one root");
    Ok((w, v, t))
}

/// Construct an aligning precoder. `tol` is the relative rank tolerance used
/// for case selection and for the subspace split.
pub fn build_precoder(ch: &StructuredChannel, tol: f64) -> Result<AlignmentPrecoder> {
    let f = ch.f();
    let g = ch.g();
    let n = ch.dim();
    if n < 2 {
        return Err(Error::InvalidArgument("alignment needs N >= 2".into()));
    }
    let (fmax, fmin) = linalg::singular_extremes(f);
    let (gmax, gmin) = linalg::singular_extremes(g);
    let (case, w, v, t_star) = if fmin <= tol * fmax {
        let (w, _) = smallest_left_singular(f);
        let v = kernel_precoder(&w, g);
        (PrecoderCase::SingularF, w, v, None)
    } else if gmax == 0.0 || gmin <= tol * gmax {
        let (w, _) = smallest_left_singular(g);
        let v = kernel_precoder(&w, f);
        (PrecoderCase::SingularG, w, v, None)
    } else {
        let (w, v, t) = pencil_precoder(f, g)?;
        (PrecoderCase::Pencil, w, v, Some(t))
    };

    let orthonormality = (v.adjoint() * &v - linalg::identity(n - 1)).norm();
    let ratio = rank_ratio(f, g, &v);
    let (u, u_perp, d_perp) = subspace_bases(ch, &v, tol);
    let leakage = (u_perp.adjoint() * f * &v).norm() + (u_perp.adjoint() * g * &v).norm();
    if orthonormality >= 1e-9 || ratio >= CONSTRUCTION_TOL || d_perp == 0 {
        return Err(Error::Construction {
            orthonormality,
            rank_ratio: ratio,
            d_perp,
        });
    }
    Ok(AlignmentPrecoder {
        v,
        w,
        u,
        u_perp,
        d_perp,
        case,
        t_star,
        orthonormality,
        rank_ratio: ratio,
        leakage,
    })
}

/// Orthonormal bases of `S = span([FV GV])` and of `S⊥`, with `d_perp = dim S⊥`.
pub fn subspace_bases(ch: &StructuredChannel, v: &CMat, tol: f64) -> (CMat, CMat, usize) {
    let n = ch.dim();
    let mut a = concat(&(ch.f() * v), &(ch.g() * v));
    if a.ncols() < n {
        a = concat(&a, &linalg::zeros(n, n - a.ncols()));
    }
    let d = linalg::svd(&a);
    let top = d.s[0];
    let rank = if top == 0.0 {
        0
    } else {
        d.s.iter().filter(|&&x| x > tol * top).count()
    };
    let u = d.u.columns(0, rank).into_owned();
    let u_perp = d.u.columns(rank, n - rank).into_owned();
    (u, u_perp, n - rank)
}

#[derive(Debug, Clone)]
pub struct PilotDirection {
    pub v_p: CVec,
    /// `‖U_perpᴴ G v_p‖`.
    pub gain: f64,
    /// False when `U_perpᴴG = 0` and `s` cannot be estimated from the pilot.
    pub observable: bool,
}

/// Unit `v_p` maximizing `‖U_perpᴴ G v‖`.
pub fn choose_pilot_direction(g: &CMat, u_perp: &CMat) -> PilotDirection {
    let n = g.ncols();
    let proj = u_perp.adjoint() * g;
    if proj.nrows() == 0 || proj.norm() <= f64::EPSILON * g.norm().max(f64::MIN_POSITIVE) {
        let mut v_p = CVec::zeros(n);
        v_p[0] = re(1.0);
        return PilotDirection {
            v_p,
            gain: 0.0,
            observable: false,
        };
    }
    let d = linalg::svd(&proj);
    PilotDirection {
        v_p: d.v.column(0).into_owned(),
        gain: d.s[0],
        observable: true,
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SEstimate {
    pub s_hat: C64,
    pub error_var: f64,
}

/// `σ_es² = 1 / (‖g_perp‖² + σ⁻²)`; zero when `σ² = 0`.
pub fn s_error_var(g_perp_norm2: f64, sigma2: f64) -> f64 {
    if sigma2 <= 0.0 {
        0.0
    } else {
        1.0 / (g_perp_norm2 + 1.0 / sigma2)
    }
}

/// LMMSE (= MMSE) estimate of `s` from `ỹ_perp = s g_perp + z_perp`.
pub fn estimate_s(y_perp: &CVec, g_perp: &CVec, sigma2: f64) -> Result<SEstimate> {
    if y_perp.len() != g_perp.len() {
        return Err(Error::DimensionMismatch {
            expected: g_perp.len(),
            got: y_perp.len(),
        });
    }
    if !(sigma2 >= 0.0) {
        return Err(Error::InvalidArgument(format!("sigma2 = {sigma2} must be >= 0")));
    }
    let error_var = s_error_var(g_perp.norm_squared(), sigma2);
    let s_hat = if sigma2 == 0.0 {
        c(0.0, 0.0)
    } else {
        (g_perp.adjoint() * y_perp)[(0, 0)] * error_var
    };
    Ok(SEstimate { s_hat, error_var })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SchemeMode {
    /// Deterministic `x_p = √P_p v_p`.
    Pilot,
    /// Gaussian coarse layer `w_p ~ CN(0, P_p)`.
    Superposition,
}

impl SchemeMode {
    pub fn bound_name(self) -> &'static str {
        match self {
            SchemeMode::Pilot => "sa_pilot",
            SchemeMode::Superposition => "sa_superposition",
        }
    }
}

#[derive(Debug, Clone)]
pub struct SchemeConfig {
    pub mode: SchemeMode,
    pub power_split: f64,
    /// Refined-layer covariance, `(N−1) × (N−1)`.
    pub q_d: CMat,
    pub v_p: CVec,
    /// Coarse layer power `P_p`.
    pub p_p: f64,
}

impl SchemeConfig {
    /// `P_p = ρP`, isotropic `Q_d` with trace `(1 − ρ)P`.
    pub fn isotropic(mode: SchemeMode, p: f64, rho: f64, n: usize, v_p: CVec) -> Result<Self> {
        if !(0.0..=1.0).contains(&rho) {
            return Err(Error::InvalidArgument(format!("power split {rho} outside [0, 1]")));
        }
        if !(p >= 0.0) {
            return Err(Error::InvalidArgument(format!("power {p} must be >= 0")));
        }
        let m = n - 1;
        let cfg = SchemeConfig {
            mode,
            power_split: rho,
            q_d: linalg::identity(m) * re((1.0 - rho) * p / m as f64),
            v_p,
            p_p: rho * p,
        };
        cfg.validate(p)?;
        Ok(cfg)
    }

    pub fn validate(&self, p: f64) -> Result<()> {
        if (self.v_p.norm() - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidArgument("v_p must be a unit vector".into()));
        }
        if linalg::hermitian_residual(&self.q_d) > 1e-9 * self.q_d.norm().max(1.0)
            || linalg::lambda_min(&linalg::hermitian_part(&self.q_d)) < -1e-9 * self.q_d.norm().max(1.0)
        {
            return Err(Error::InvalidCovariance("Q_d must be Hermitian PSD".into()));
        }
        if linalg::trace_re(&self.q_d) + self.p_p > p * (1.0 + 1e-9) + 1e-12 {
            return Err(Error::InvalidCovariance("tr(Q_d) + P_p exceeds the power budget".into()));
        }
        Ok(())
    }
}

fn check_scheme(ch: &StructuredChannel, pre: &AlignmentPrecoder, scheme: &SchemeConfig) -> Result<()> {
    let m = pre.v.ncols();
    if scheme.q_d.shape() != (m, m) {
        return Err(Error::DimensionMismatch {
            expected: m,
            got: scheme.q_d.nrows(),
        });
    }
    if scheme.v_p.len() != ch.dim() {
        return Err(Error::DimensionMismatch {
            expected: ch.dim(),
            got: scheme.v_p.len(),
        });
    }
    Ok(())
}

/// `R = I + σ_es² UᴴG(x_p x_pᴴ + V Q_d Vᴴ)GᴴU`.
pub fn r_matrix(ch: &StructuredChannel, pre: &AlignmentPrecoder, x_p: &CVec, q_d: &CMat, sigma_es2: f64) -> CMat {
    let ug = pre.u.adjoint() * ch.g();
    let inner = x_p * x_p.adjoint() + &pre.v * q_d * pre.v.adjoint();
    linalg::identity(pre.u.ncols()) + linalg::hermitian_part(&(&ug * inner * ug.adjoint())) * re(sigma_es2)
}

/// Conditional LMMSE error covariance of `w_d` given `(ŝ, x_p)` and the
/// matrix `R`. Uses `Q_d − Q_d Hᴴ(H Q_d Hᴴ + R)⁻¹ H Q_d`, valid for singular
/// `Q_d`.
pub fn refined_error_cov(
    ch: &StructuredChannel,
    pre: &AlignmentPrecoder,
    s_hat: C64,
    x_p: &CVec,
    q_d: &CMat,
    sigma_es2: f64,
) -> Result<(CMat, CMat)> {
    let r = r_matrix(ch, pre, x_p, q_d, sigma_es2);
    let h = pre.u.adjoint() * ch.realize(s_hat) * &pre.v;
    let qh = q_d * h.adjoint();
    let cyy = &r + &h * &qh;
    let inv = linalg::inv_hpd(&cyy).ok_or_else(|| Error::Singular("C_yy".into()))?;
    let ce = linalg::hermitian_part(&(q_d - &qh * inv * qh.adjoint()));
    Ok((ce, r))
}

/// The filter `C_wy C_yy⁻¹` applied to `y_S`.
pub fn refined_filter(h: &CMat, q_d: &CMat, r: &CMat) -> Result<CMat> {
    let qh = q_d * h.adjoint();
    let cyy = r + h * &qh;
    let inv = linalg::inv_hpd(&cyy).ok_or_else(|| Error::Singular("C_yy".into()))?;
    Ok(qh * inv)
}

struct RefinedModel {
    pencil: QuadraticPencil,
    /// `UᴴG v_p` and `UᴴG V Q_d VᴴGᴴU` for rebuilding `R` per sample.
    ug_vp: CVec,
    ug_qd: CMat,
    g_perp_vp2: f64,
}

impl RefinedModel {
    fn new(ch: &StructuredChannel, pre: &AlignmentPrecoder, scheme: &SchemeConfig) -> Self {
        let a0 = pre.u.adjoint() * ch.f() * &pre.v;
        let a1 = pre.u.adjoint() * ch.g() * &pre.v;
        let ug = pre.u.adjoint() * ch.g();
        let ugv = &ug * &pre.v;
        RefinedModel {
            pencil: QuadraticPencil::outer(&a0, &a1, &scheme.q_d),
            ug_vp: &ug * &scheme.v_p,
            ug_qd: linalg::hermitian_part(&(&ugv * &scheme.q_d * ugv.adjoint())),
            g_perp_vp2: (pre.u_perp.adjoint() * ch.g() * &scheme.v_p).norm_squared(),
        }
    }

    fn r(&self, pilot_energy: f64, sigma_es2: f64) -> CMat {
        let m = self.ug_qd.nrows();
        let outer = &self.ug_vp * self.ug_vp.adjoint() * re(pilot_energy);
        linalg::identity(m) + linalg::hermitian_part(&(outer + &self.ug_qd)) * re(sigma_es2)
    }

    fn sample(&self, r: &CMat, logdet_r: f64, s_hat: C64) -> f64 {
        linalg::logdet_hpd(&(r + self.pencil.at(s_hat))) - logdet_r
    }
}

/// Refined-layer rate `E[log det(I + Q_d Hᴴ R⁻¹ H)]`, `H = Uᴴ(F + ŝG)V`.
pub fn rate_refined(
    ch: &StructuredChannel,
    pre: &AlignmentPrecoder,
    scheme: &SchemeConfig,
    mc: &MCConfig,
) -> Result<Estimate> {
    check_scheme(ch, pre, scheme)?;
    if scheme.q_d.norm() == 0.0 {
        return Ok(Estimate::exact(0.0));
    }
    let model = RefinedModel::new(ch, pre, scheme);
    let sigma2 = ch.sigma2();
    if sigma2 == 0.0 {
        let r = linalg::identity(model.ug_qd.nrows());
        return Ok(Estimate::exact(model.sample(&r, 0.0, c(0.0, 0.0))));
    }
    match scheme.mode {
        SchemeMode::Pilot => {
            let es = s_error_var(scheme.p_p * model.g_perp_vp2, sigma2);
            let r = model.r(scheme.p_p, es);
            let logdet_r = linalg::logdet_hpd(&r);
            let shat_var = (sigma2 - es).max(0.0);
            if shat_var == 0.0 {
                return Ok(Estimate::exact(model.sample(&r, logdet_r, c(0.0, 0.0))));
            }
            mc::expect(mc, |_, rng| {
                let s_hat = complex_normal(rng, shat_var);
                model.sample(&r, logdet_r, s_hat)
            })
        }
        SchemeMode::Superposition => mc::expect(mc, |_, rng| {
            let w_p = complex_normal(rng, scheme.p_p);
            let energy = w_p.norm_sqr();
            let es = s_error_var(energy * model.g_perp_vp2, sigma2);
            let r = model.r(energy, es);
            let s_hat = complex_normal(rng, (sigma2 - es).max(0.0));
            model.sample(&r, linalg::logdet_hpd(&r), s_hat)
        }),
    }
}

/// Coarse-layer rate `I(w_p; (a + s b) w_p + z_p)` with `a = U_perpᴴF v_p`,
/// `b = U_perpᴴG v_p`. Zero in pilot mode.
///
/// `h(y_perp)` uses a Gaussian-mixture plug-in over `inner` fixed draws of
/// `w_p`; the estimate is consistent but biased upward for finite `inner`.
pub fn rate_coarse(
    ch: &StructuredChannel,
    pre: &AlignmentPrecoder,
    scheme: &SchemeConfig,
    mc: &MCConfig,
    inner: usize,
) -> Result<Estimate> {
    check_scheme(ch, pre, scheme)?;
    if scheme.mode == SchemeMode::Pilot || scheme.p_p == 0.0 {
        return Ok(Estimate::exact(0.0));
    }
    if inner < MIN_MIXTURE {
        return Err(Error::InvalidArgument(format!(
            "mixture estimator needs at least {MIN_MIXTURE} inner samples, got {inner}"
        )));
    }
    let a = pre.u_perp.adjoint() * ch.f() * &scheme.v_p;
    let b = pre.u_perp.adjoint() * ch.g() * &scheme.v_p;
    let sigma2 = ch.sigma2();
    let b2 = b.norm_squared();
    if sigma2 == 0.0 || b2 == 0.0 {
        // Scalar coherent channel after matched filtering.
        return Ok(Estimate::exact((1.0 + scheme.p_p * a.norm_squared()).ln()));
    }
    let p_p = scheme.p_p;
    let inner_seed = derive_seed(mc.seed, 0xC0A2);
    let components: Vec<C64> = (0..inner)
        .map(|j| complex_normal(&mut mc::sample_rng(inner_seed, j as u64), p_p))
        .collect();

    // log N(y; a w, I + σ²|w|² b bᴴ) without the common −d log π term.
    let log_density = |y: &CVec, w: C64| {
        let e = y - &a * w;
        let k = sigma2 * w.norm_sqr();
        let det = 1.0 + k * b2;
        let be = (b.adjoint() * &e)[(0, 0)];
        -det.ln() - (e.norm_squared() - k / det * be.norm_sqr())
    };
    mc::expect(mc, |_, rng| {
        let w = complex_normal(rng, p_p);
        let s = complex_normal(rng, sigma2);
        let z = CVec::from_fn(a.len(), |_, _| complex_normal(rng, 1.0));
        let y = (&a + &b * s) * w + z;
        let terms: Vec<f64> = components.iter().map(|&wj| log_density(&y, wj)).collect();
        let top = terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mix = top + (mc::pairwise_sum(&terms.iter().map(|t| (t - top).exp()).collect::<Vec<_>>()) / inner as f64).ln();
        log_density(&y, w) - mix
    })
}

/// `R_SA = R_p + R_d`, standard errors in quadrature.
pub fn rate_sa(
    ch: &StructuredChannel,
    pre: &AlignmentPrecoder,
    scheme: &SchemeConfig,
    mc: &MCConfig,
    inner: usize,
) -> Result<Estimate> {
    let coarse = rate_coarse(ch, pre, scheme, &mc.with_seed(derive_seed(mc.seed, 1)), inner)?;
    let refined = rate_refined(ch, pre, scheme, mc)?;
    let mut total = Estimate::sum(&[coarse, refined]);
    total.n_samples = coarse.n_samples.max(refined.n_samples);
    total.seed = mc.seed;
    Ok(total)
}

#[derive(Debug, Clone)]
pub struct SchemeOpts {
    pub mode: SchemeMode,
    pub rho_grid: Vec<f64>,
    /// Samples per grid point while scoring; the winner is re-evaluated with
    /// the full budget on an independent stream.
    pub score_samples: usize,
    pub inner: usize,
}

/// `count` geometric points in `[lo, hi]`.
pub fn geometric_grid(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    if count <= 1 {
        return vec![lo];
    }
    let ratio = (hi / lo).ln() / (count - 1) as f64;
    (0..count).map(|k| lo * (ratio * k as f64).exp()).collect()
}

impl SchemeOpts {
    pub fn new(mode: SchemeMode) -> Self {
        SchemeOpts {
            mode,
            rho_grid: geometric_grid(0.01, 0.5, 8),
            score_samples: 1000,
            inner: MIN_MIXTURE,
        }
    }
}

#[derive(Debug, Clone)]
pub struct OptimizedScheme {
    pub config: SchemeConfig,
    pub rate: Estimate,
    /// `(ρ, scoring estimate)` for every grid point.
    pub scores: Vec<(f64, f64)>,
    pub pilot: PilotDirection,
}

/// Grid search over the power split with isotropic `Q_d` and the
/// max-gain pilot direction.
pub fn optimize_scheme(
    ch: &StructuredChannel,
    pre: &AlignmentPrecoder,
    p: f64,
    mc: &MCConfig,
    opts: &SchemeOpts,
) -> Result<OptimizedScheme> {
    if !(p > 0.0) {
        return Err(Error::InvalidArgument(format!("power {p} must be > 0")));
    }
    if opts.rho_grid.is_empty() {
        return Err(Error::InvalidArgument("empty power-split grid".into()));
    }
    let pilot = choose_pilot_direction(ch.g(), &pre.u_perp);
    let score_mc = mc
        .with_samples(opts.score_samples.min(mc.n_samples).max(1))
        .with_seed(derive_seed(mc.seed, 0x5C0E));
    let mut scores = Vec::with_capacity(opts.rho_grid.len());
    let mut best: Option<(f64, f64)> = None;
    for &rho in &opts.rho_grid {
        let cfg = SchemeConfig::isotropic(opts.mode, p, rho, ch.dim(), pilot.v_p.clone())?;
        let est = rate_sa(ch, pre, &cfg, &score_mc, opts.inner)?;
        scores.push((rho, est.mean));
        if best.map_or(true, |(_, v)| est.mean > v) {
            best = Some((rho, est.mean));
        }
    }
    let (rho, _) = best.expect("nonempty grid");
    let config = SchemeConfig::isotropic(opts.mode, p, rho, ch.dim(), pilot.v_p.clone())?;
    let rate = rate_sa(ch, pre, &config, mc, opts.inner)?;
    Ok(OptimizedScheme {
        config,
        rate,
        scores,
        pilot,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn diag(vals: &[f64]) -> CMat {
        CMat::from_diagonal(&nalgebra::DVector::from_iterator(vals.len(), vals.iter().map(|&v| re(v))))
    }

    fn first_cols(n: usize) -> CMat {
        linalg::identity(n).columns(0, n - 1).into_owned()
    }

    #[test]
    fn degenerate_pencil() {
        let ch = StructuredChannel::new(linalg::identity(2), linalg::identity(2), 0.1).unwrap();
        let pre = build_precoder(&ch, default_tol(2)).unwrap();
        assert_eq!(pre.case, PrecoderCase::Pencil);
        assert!((pre.t_star.unwrap() - re(-1.0)).norm() < 1e-12);
        assert_eq!(pre.d_perp, 1);
    }

    #[test]
    fn coherent_channel_is_case_two() {
        let ch = StructuredChannel::new(diag(&[1.0, 2.0, 3.0]), linalg::zeros(3, 3), 0.1).unwrap();
        let pre = build_precoder(&ch, default_tol(3)).unwrap();
        assert_eq!(pre.case, PrecoderCase::SingularG);
        assert!(pre.rank_ratio < 1e-12);
    }

    #[test]
    fn bases_for_trivial_instances() {
        let n = 3;
        let ch = StructuredChannel::new(linalg::identity(n), linalg::zeros(n, n), 0.1).unwrap();
        let (u, u_perp, d) = subspace_bases(&ch, &first_cols(n), default_tol(n));
        assert_eq!((u.ncols(), d), (2, 1));
        assert!((u_perp[(2, 0)].norm() - 1.0).abs() < 1e-12);

        let f = CMat::from_fn(n, n, |i, k| c(1.0 + (i * k) as f64, i as f64 - k as f64)) + linalg::identity(n) * re(3.0);
        let ch = StructuredChannel::new(f.clone(), f, 0.1).unwrap();
        assert_eq!(subspace_bases(&ch, &first_cols(n), default_tol(n)).2, 1);
    }

    #[test]
    fn pilot_direction_cases() {
        let n = 3;
        let mut e = CMat::zeros(n, 1);
        e[(2, 0)] = re(1.0);
        let p = choose_pilot_direction(&linalg::identity(n), &e);
        assert!(p.observable && (p.v_p[2].norm() - 1.0).abs() < 1e-12);
        let p = choose_pilot_direction(&linalg::zeros(n, n), &e);
        assert!(!p.observable);
    }

    #[test]
    fn s_estimate_limits() {
        let y = CVec::from_vec(vec![c(0.3, -0.2)]);
        let est = estimate_s(&y, &CVec::zeros(1), 0.25).unwrap();
        assert_eq!(est.s_hat, c(0.0, 0.0));
        assert!((est.error_var - 0.25).abs() < 1e-15);
        let big = CVec::from_vec(vec![re(1e4)]);
        let est = estimate_s(&y, &big, 0.25).unwrap();
        assert!((est.error_var - 1e-8).abs() < 1e-7 * 1e-8 + 1e-15);
        assert_eq!(estimate_s(&y, &big, 0.0).unwrap().error_var, 0.0);
    }

    #[test]
    fn zero_refined_power() {
        let ch = StructuredChannel::new(diag(&[1.0, 0.5]), diag(&[0.2, 1.0]), 0.1).unwrap();
        let pre = build_precoder(&ch, default_tol(2)).unwrap();
        let pilot = choose_pilot_direction(ch.g(), &pre.u_perp);
        let cfg = SchemeConfig::isotropic(SchemeMode::Pilot, 10.0, 1.0, 2, pilot.v_p).unwrap();
        let r = rate_refined(&ch, &pre, &cfg, &MCConfig::new(100, 0)).unwrap();
        assert_eq!(r.mean, 0.0);
        let (ce, _) = refined_error_cov(&ch, &pre, c(0.1, 0.0), &cfg.v_p, &cfg.q_d, 0.01).unwrap();
        assert_eq!(ce.norm(), 0.0);
    }

    #[test]
    fn coherent_refined_rate_is_exact() {
        let f = CMat::from_fn(3, 3, |i, k| c(1.0 + i as f64 * 0.5, k as f64 * 0.3 - i as f64 * 0.1));
        let g = CMat::from_fn(3, 3, |i, k| c(0.2 * k as f64, 0.3 + 0.1 * i as f64));
        let ch = StructuredChannel::new(f.clone(), g, 0.0).unwrap();
        let pre = build_precoder(&ch, default_tol(3)).unwrap();
        let pilot = choose_pilot_direction(ch.g(), &pre.u_perp);
        let cfg = SchemeConfig::isotropic(SchemeMode::Pilot, 30.0, 0.1, 3, pilot.v_p).unwrap();
        let est = rate_refined(&ch, &pre, &cfg, &MCConfig::new(10, 0)).unwrap();
        let fv = &f * &pre.v;
        let want = linalg::logdet_hpd(&(linalg::identity(2) + &cfg.q_d * fv.adjoint() * &fv));
        assert!((est.mean - want).abs() < 1e-10);
        assert_eq!(est.stderr, 0.0);
    }

    #[test]
    fn coarse_layer_config_checks() {
        let ch = StructuredChannel::new(diag(&[1.0, 0.5]), diag(&[0.2, 1.0]), 0.1).unwrap();
        let pre = build_precoder(&ch, default_tol(2)).unwrap();
        let pilot = choose_pilot_direction(ch.g(), &pre.u_perp);
        let cfg = SchemeConfig::isotropic(SchemeMode::Superposition, 10.0, 0.2, 2, pilot.v_p).unwrap();
        assert!(rate_coarse(&ch, &pre, &cfg, &MCConfig::new(100, 0), 10).is_err());
        let pilot_cfg = SchemeConfig { mode: SchemeMode::Pilot, ..cfg };
        assert_eq!(rate_coarse(&ch, &pre, &pilot_cfg, &MCConfig::new(100, 0), 10).unwrap().mean, 0.0);
    }

    #[test]
    fn geometric_grid_endpoints() {
        let g = geometric_grid(0.01, 0.5, 8);
        assert_eq!(g.len(), 8);
        assert!((g[0] - 0.01).abs() < 1e-15 && (g[7] - 0.5).abs() < 1e-14);
    }
}
