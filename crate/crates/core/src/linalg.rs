//! Dense complex linear-algebra helpers.
//!
//! Everything here works on `nalgebra`'s `DMatrix<Complex<f64>>`. SVD and
//! eigen-decompositions are delegated to `faer` (nalgebra's complex SVD
//! returns wrong factors on some exactly rank-deficient inputs). Results are
//! re-sorted so callers never depend on backend ordering.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex;

pub type C64 = Complex<f64>;
pub type CMat = DMatrix<C64>;
pub type CVec = DVector<C64>;

/// Eigenvalue floor used when a Cholesky factorization fails and the
/// log-determinant falls back to a clamped eigen-decomposition.
pub const EIG_CLAMP: f64 = 1e-12;

#[inline]
pub fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

#[inline]
pub fn re(x: f64) -> C64 {
    C64::new(x, 0.0)
}

pub fn identity(n: usize) -> CMat {
    CMat::identity(n, n)
}

pub fn zeros(r: usize, c: usize) -> CMat {
    CMat::zeros(r, c)
}

/// `(A + Aᴴ) / 2`.
pub fn hermitian_part(a: &CMat) -> CMat {
    (a + a.adjoint()) * re(0.5)
}

/// Frobenius norm of `A - Aᴴ`.
pub fn hermitian_residual(a: &CMat) -> f64 {
    (a - a.adjoint()).norm()
}

/// Real trace of a (nominally Hermitian) matrix.
pub fn trace_re(a: &CMat) -> f64 {
    a.trace().re
}

/// Eigen-decomposition of the Hermitian part of `a`, eigenvalues ascending.
pub fn herm_eig(a: &CMat) -> (Vec<f64>, CMat) {
    let n = a.nrows();
    if n == 0 {
        return (Vec::new(), zeros(0, 0));
    }
    let eig = to_faer(&hermitian_part(a))
        .self_adjoint_eigen(faer::Side::Lower)
        .expect("Hermitian eigensolver did not converge");
    let (u, s) = (eig.U(), eig.S().column_vector());
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| s[i].re.total_cmp(&s[j].re));
    let vals = order.iter().map(|&i| s[i].re).collect();
    let vecs = CMat::from_fn(n, n, |r, k| u[(r, order[k])]);
    (vals, vecs)
}

/// Largest eigenvalue of the Hermitian part of `a`.
pub fn lambda_max(a: &CMat) -> f64 {
    herm_eig(a).0.last().copied().unwrap_or(0.0)
}

/// Smallest eigenvalue of the Hermitian part of `a`.
pub fn lambda_min(a: &CMat) -> f64 {
    herm_eig(a).0.first().copied().unwrap_or(0.0)
}

/// Rebuild `V diag(λ) Vᴴ`.
pub fn from_eig(vals: &[f64], vecs: &CMat) -> CMat {
    let n = vecs.nrows();
    let mut scaled = vecs.clone();
    for (k, &l) in vals.iter().enumerate() {
        scaled.column_mut(k).scale_mut(l);
    }
    let out = scaled * vecs.adjoint();
    debug_assert_eq!(out.nrows(), n);
    out
}

/// log det of a Hermitian positive (semi)definite matrix.
///
/// Cholesky first; if that fails the eigenvalues are clamped at
/// [`EIG_CLAMP`].
pub fn logdet_hpd(a: &CMat) -> f64 {
    let h = hermitian_part(a);
    if let Some(ch) = h.clone().cholesky() {
        let l = ch.l_dirty();
        return 2.0 * (0..l.nrows()).map(|i| l[(i, i)].re.ln()).sum::<f64>();
    }
    herm_eig(&h).0.iter().map(|&l| l.max(EIG_CLAMP).ln()).sum()
}

/// Inverse of a Hermitian positive definite matrix (Cholesky, LU fallback).
pub fn inv_hpd(a: &CMat) -> Option<CMat> {
    let h = hermitian_part(a);
    if let Some(ch) = h.clone().cholesky() {
        return Some(hermitian_part(&ch.inverse()));
    }
    h.try_inverse()
}

/// Singular value decomposition with singular values sorted descending.
pub struct Svd {
    pub u: CMat,
    pub s: Vec<f64>,
    pub v: CMat,
}

pub fn svd(a: &CMat) -> Svd {
    let k = a.nrows().min(a.ncols());
    if k == 0 {
        return Svd {
            u: zeros(a.nrows(), 0),
            s: Vec::new(),
            v: zeros(a.ncols(), 0),
        };
    }
    let d = to_faer(a).thin_svd().expect("SVD did not converge");
    let (u, s, v) = (d.U(), d.S().column_vector(), d.V());
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&i, &j| s[j].re.total_cmp(&s[i].re));
    Svd {
        u: CMat::from_fn(a.nrows(), k, |r, j| u[(r, order[j])]),
        s: order.iter().map(|&i| s[i].re).collect(),
        v: CMat::from_fn(a.ncols(), k, |r, j| v[(r, order[j])]),
    }
}

/// Largest and smallest singular values of a square matrix.
pub fn singular_extremes(a: &CMat) -> (f64, f64) {
    let s = svd(a).s;
    (
        s.first().copied().unwrap_or(0.0),
        s.last().copied().unwrap_or(0.0),
    )
}

/// Unitary Householder reflector whose first column is parallel to `c`.
///
/// Columns `1..n` are an orthonormal basis of `c⊥`. `c` must be nonzero.
pub fn householder_basis(c: &CVec) -> CMat {
    let n = c.len();
    let u = c / re(c.norm());
    let phase = if u[0].norm() > 0.0 {
        u[0] / u[0].norm()
    } else {
        re(1.0)
    };
    let alpha = -phase;
    let mut v = u.clone();
    v[0] -= alpha;
    let vv = v.norm_squared();
    let mut h = identity(n);
    if vv > 0.0 {
        h -= (&v * v.adjoint()) * re(2.0 / vv);
    }
    h
}

/// Orthonormal basis (n × (n-1)) of the orthogonal complement of `c`.
pub fn orth_complement(c: &CVec) -> CMat {
    let n = c.len();
    householder_basis(c).columns(1, n - 1).into_owned()
}

/// Euclidean projection of `vals` onto `{λ ≥ 0, Σλ ≤ budget}`.
pub fn project_capped_simplex(vals: &[f64], budget: f64) -> Vec<f64> {
    let clipped: Vec<f64> = vals.iter().map(|&v| v.max(0.0)).collect();
    if clipped.iter().sum::<f64>() <= budget {
        return clipped;
    }
    let mut sorted = vals.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let mut cumsum = 0.0;
    let mut theta = 0.0;
    for (k, &v) in sorted.iter().enumerate() {
        cumsum += v;
        let t = (cumsum - budget) / (k as f64 + 1.0);
        if v - t > 0.0 {
            theta = t;
        }
    }
    vals.iter().map(|&v| (v - theta).max(0.0)).collect()
}

/// Project a Hermitian matrix onto `{Q ⪰ 0, tr Q ≤ budget}`.
pub fn project_trace_ball(q: &CMat, budget: f64) -> CMat {
    let (vals, vecs) = herm_eig(q);
    let proj = project_capped_simplex(&vals, budget);
    hermitian_part(&from_eig(&proj, &vecs))
}

/// Factor `Q = L Lᴴ` with `L` of shape n × r keeping eigenvalues above
/// `tol · λ_max`.
pub fn psd_factor(q: &CMat, tol: f64) -> CMat {
    let n = q.nrows();
    let (vals, vecs) = herm_eig(q);
    let top = vals.last().copied().unwrap_or(0.0).max(0.0);
    let keep: Vec<usize> = (0..n).filter(|&k| vals[k] > tol * top && vals[k] > 0.0).collect();
    CMat::from_fn(n, keep.len(), |r, j| vecs[(r, keep[j])] * vals[keep[j]].sqrt())
}

/// Hermitian square root of a PSD matrix.
pub fn psd_sqrt(q: &CMat) -> CMat {
    let (vals, vecs) = herm_eig(q);
    let roots: Vec<f64> = vals.iter().map(|&v| v.max(0.0).sqrt()).collect();
    from_eig(&roots, &vecs)
}

/// Complex eigenvalues of a general square matrix (complex Schur form).
pub fn eigenvalues(a: &CMat) -> Option<Vec<C64>> {
    if a.nrows() == 0 {
        return Some(Vec::new());
    }
    to_faer(a).eigenvalues().ok()
}

fn to_faer(a: &CMat) -> faer::Mat<C64> {
    faer::Mat::from_fn(a.nrows(), a.ncols(), |i, j| a[(i, j)])
}
