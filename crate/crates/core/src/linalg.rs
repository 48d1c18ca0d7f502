//! Dense complex helpers: subspaces as orthonormal column families, rank
//! decisions, and log-log fits.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

pub type C64 = Complex64;
pub type CMat = DMatrix<C64>;
pub type CVec = DVector<C64>;

/// Relative singular-value threshold used for every rank decision.
pub const RANK_TOL: f64 = 1e-10;

#[inline]
pub fn c64(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

pub fn zeros(r: usize, c: usize) -> CMat {
    CMat::zeros(r, c)
}

pub fn eye(n: usize) -> CMat {
    CMat::identity(n, n)
}

fn to_faer(m: &CMat) -> faer::Mat<C64> {
    faer::Mat::from_fn(m.nrows(), m.ncols(), |i, j| m[(i, j)])
}

fn from_faer(m: faer::MatRef<'_, C64>) -> CMat {
    CMat::from_fn(m.nrows(), m.ncols(), |i, j| m[(i, j)])
}

/// Full SVD m = U diag(s) V^H with square U and V. nalgebra's complex SVD
/// loses accuracy on rank-deficient input, so every rank decision goes
/// through this one.
pub struct Svd {
    pub u: CMat,
    pub s: Vec<f64>,
    pub v: CMat,
}

pub fn svd(m: &CMat) -> Svd {
    let (r, c) = (m.nrows(), m.ncols());
    if r == 0 || c == 0 {
        return Svd { u: eye(r), s: vec![], v: eye(c) };
    }
    let d = to_faer(m).svd().expect("svd did not converge");
    let s = d.S().column_vector().iter().map(|z| z.re).collect();
    Svd { u: from_faer(d.U()), s, v: from_faer(d.V()) }
}

pub fn singular_values(m: &CMat) -> Vec<f64> {
    if m.nrows() == 0 || m.ncols() == 0 {
        return vec![];
    }
    to_faer(m).singular_values().expect("svd did not converge")
}

pub fn spectral_norm(m: &CMat) -> f64 {
    singular_values(m).first().copied().unwrap_or(0.0)
}

pub fn vec_norm(v: &[C64]) -> f64 {
    v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

/// Orthonormal basis of the column span, rank cut at `RANK_TOL * sigma_max`.
pub fn orthonormalize(m: &CMat) -> CMat {
    orthonormalize_tol(m, RANK_TOL)
}

pub fn orthonormalize_tol(m: &CMat, rel: f64) -> CMat {
    let nr = m.nrows();
    if m.ncols() == 0 || nr == 0 {
        return zeros(nr, 0);
    }
    let svd = svd(m);
    let s = &svd.s;
    let smax = s[0];
    if smax == 0.0 {
        return zeros(nr, 0);
    }
    let u = svd.u;
    let keep: Vec<usize> = (0..s.len()).filter(|&i| s[i] > rel * smax).collect();
    let mut q = zeros(nr, keep.len());
    for (c, &i) in keep.iter().enumerate() {
        q.set_column(c, &u.column(i));
    }
    q
}

/// Orthonormal basis keeping singular values above `abs_tol`.
pub fn orthonormalize_abs(m: &CMat, abs_tol: f64) -> CMat {
    let smax = if m.ncols() == 0 { 0.0 } else { spectral_norm(m) };
    if smax <= abs_tol {
        return zeros(m.nrows(), 0);
    }
    orthonormalize_tol(m, abs_tol / smax)
}

/// Right singular vectors with singular value at most `abs_tol`.
pub fn null_space_abs(m: &CMat, abs_tol: f64) -> CMat {
    let n = m.ncols();
    if n == 0 {
        return zeros(0, 0);
    }
    if m.nrows() == 0 {
        return eye(n);
    }
    let svd = svd(m);
    let keep: Vec<usize> = (0..n).filter(|&i| i >= svd.s.len() || svd.s[i] <= abs_tol).collect();
    let mut out = zeros(n, keep.len());
    for (c, &i) in keep.iter().enumerate() {
        out.set_column(c, &svd.v.column(i));
    }
    out
}

/// Null space with the relative rank threshold.
pub fn null_space(m: &CMat) -> CMat {
    let scale = spectral_norm(m);
    if scale == 0.0 {
        return eye(m.ncols());
    }
    null_space_abs(m, RANK_TOL * scale)
}

/// Orthonormal basis of the orthogonal complement of span(q) in C^n.
pub fn complement(q: &CMat, n: usize) -> CMat {
    if q.ncols() == 0 {
        return eye(n);
    }
    let p = eye(n) - q * q.adjoint();
    orthonormalize_tol(&p, 0.5)
}

pub fn span_sum(a: &CMat, b: &CMat) -> CMat {
    let n = a.nrows().max(b.nrows());
    let mut m = zeros(n, a.ncols() + b.ncols());
    m.view_mut((0, 0), (a.nrows(), a.ncols())).copy_from(a);
    m.view_mut((0, a.ncols()), (b.nrows(), b.ncols())).copy_from(b);
    orthonormalize(&m)
}

pub fn intersection(a: &CMat, b: &CMat) -> CMat {
    if a.ncols() == 0 || b.ncols() == 0 {
        return zeros(a.nrows(), 0);
    }
    let resid = a - b * (b.adjoint() * a);
    let c = null_space_abs(&resid, 1e-8);
    orthonormalize(&(a * c))
}

/// ||(I - P_a) b||_2 for orthonormal a, b: zero iff span b is inside span a.
pub fn containment_defect(a: &CMat, b: &CMat) -> f64 {
    if b.ncols() == 0 {
        return 0.0;
    }
    if a.ncols() == 0 {
        return spectral_norm(b);
    }
    spectral_norm(&(b - a * (a.adjoint() * b)))
}

/// Sine of the largest principal angle; 1 when dimensions differ.
pub fn subspace_distance(a: &CMat, b: &CMat) -> f64 {
    if a.ncols() != b.ncols() {
        return 1.0;
    }
    containment_defect(a, b).max(containment_defect(b, a))
}

/// Minimum-norm least-squares solution of `a x = b`.
pub fn lstsq(a: &CMat, b: &CMat) -> CMat {
    if a.ncols() == 0 {
        return zeros(0, b.ncols());
    }
    if a.nrows() == 0 {
        return zeros(a.ncols(), b.ncols());
    }
    let svd = svd(a);
    let eps = RANK_TOL * svd.s[0].max(f64::MIN_POSITIVE);
    let mut x = zeros(a.ncols(), b.ncols());
    for (i, &si) in svd.s.iter().enumerate().filter(|(_, &si)| si > eps) {
        let coef = svd.u.column(i).adjoint() * b / c64(si, 0.0);
        x += svd.v.column(i) * coef;
    }
    x
}

pub fn inverse(m: &CMat, what: &str) -> crate::Result<CMat> {
    let n = m.nrows();
    if n == 0 {
        return Ok(zeros(0, 0));
    }
    let (smin, smax) = sigma_range(m);
    if smin <= 1e-14 * smax || smax == 0.0 {
        return Err(crate::Error::Singular {
            what: what.into(),
            cond: if smin == 0.0 { f64::INFINITY } else { smax / smin },
        });
    }
    Ok(m.clone().lu().try_inverse().expect("checked invertible"))
}

pub fn sigma_range(m: &CMat) -> (f64, f64) {
    if m.nrows() == 0 || m.ncols() == 0 {
        return (0.0, 0.0);
    }
    let s = singular_values(m);
    (s[s.len() - 1], s[0])
}

/// Least-squares line `y = slope * x + intercept`.
pub fn fit_line(x: &[f64], y: &[f64]) -> (f64, f64) {
    assert_eq!(x.len(), y.len());
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    let slope = sxy / sxx;
    (slope, my - slope * mx)
}

/// Slope of log(y) against log(x).
pub fn loglog_slope(x: &[f64], y: &[f64]) -> f64 {
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    fit_line(&lx, &ly).0
}

/// Observed convergence order from errors on a ladder refined by `ratio`.
pub fn observed_order(errors: &[f64], ratio: f64) -> f64 {
    let x: Vec<f64> = (0..errors.len()).map(|i| ratio.powi(i as i32)).collect();
    -loglog_slope(&x, errors)
}
