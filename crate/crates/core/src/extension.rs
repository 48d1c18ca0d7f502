//! Finite-dimensional extension theory: dual pairs as linear relations in
//! H x H, the correspondence between realizations and operators T: V -> W,
//! E/F/G operators, M-functions and Krein resolvent formulas.
//!
//! H = C^N with the standard inner product. Relations are stored as
//! orthonormal bases of subspaces of C^{2N} (top half = domain component).

use crate::error::{arg, Error, Result};
use crate::linalg::*;
use rand::Rng;

const INCLUSION_TOL: f64 = 1e-9;

#[derive(Clone, Debug)]
pub struct SubspaceGraph {
    pub ambient_dim: usize,
    pub basis: CMat,
}

fn stack(top: &CMat, bottom: &CMat) -> CMat {
    let n = top.nrows();
    let k = top.ncols();
    let mut m = zeros(2 * n, k);
    m.view_mut((0, 0), (n, k)).copy_from(top);
    m.view_mut((n, 0), (n, k)).copy_from(bottom);
    m
}

fn hcat(a: &CMat, b: &CMat) -> CMat {
    let mut m = zeros(a.nrows().max(b.nrows()), a.ncols() + b.ncols());
    m.view_mut((0, 0), (a.nrows(), a.ncols())).copy_from(a);
    m.view_mut((0, a.ncols()), (b.nrows(), b.ncols())).copy_from(b);
    m
}

impl SubspaceGraph {
    pub fn from_span(n: usize, span: &CMat) -> Self {
        assert_eq!(span.nrows(), 2 * n);
        SubspaceGraph { ambient_dim: n, basis: orthonormalize(span) }
    }

    pub fn from_parts(top: &CMat, bottom: &CMat) -> Self {
        Self::from_span(top.nrows(), &stack(top, bottom))
    }

    /// Graph of a matrix on all of H.
    pub fn graph_of(m: &CMat) -> Self {
        Self::from_parts(&eye(m.nrows()), m)
    }

    /// Graph of `m` restricted to span(d).
    pub fn restricted(m: &CMat, d: &CMat) -> Self {
        Self::from_parts(d, &(m * d))
    }

    pub fn dim(&self) -> usize {
        self.basis.ncols()
    }

    pub fn top(&self) -> CMat {
        self.basis.rows(0, self.ambient_dim).into_owned()
    }

    pub fn bottom(&self) -> CMat {
        self.basis.rows(self.ambient_dim, self.ambient_dim).into_owned()
    }

    pub fn domain(&self) -> CMat {
        orthonormalize(&self.top())
    }

    pub fn range(&self) -> CMat {
        orthonormalize(&self.bottom())
    }

    /// {u : (u, 0) in graph}
    pub fn kernel(&self) -> CMat {
        let c = null_space_abs(&self.bottom(), 1e-10);
        orthonormalize(&(self.top() * c))
    }

    /// {g : (0, g) in graph}
    pub fn multivalued_part(&self) -> CMat {
        let c = null_space_abs(&self.top(), 1e-10);
        orthonormalize(&(self.bottom() * c))
    }

    pub fn is_operator(&self) -> bool {
        self.multivalued_part().ncols() == 0
    }

    /// Defect of `other` being contained in `self`.
    pub fn inclusion_defect(&self, other: &SubspaceGraph) -> f64 {
        containment_defect(&self.basis, &other.basis)
    }

    pub fn distance(&self, other: &SubspaceGraph) -> f64 {
        subspace_distance(&self.basis, &other.basis)
    }

    /// {(u, g - lambda u)}
    pub fn shifted(&self, lambda: C64) -> Self {
        let top = self.top();
        let bottom = self.bottom() - &top * lambda;
        Self::from_parts(&top, &bottom)
    }

    /// Matrix of a single-valued relation defined on all of H.
    pub fn as_matrix(&self) -> Result<CMat> {
        let n = self.ambient_dim;
        let top = self.top();
        if !self.is_operator() || self.domain().ncols() != n {
            return arg("relation is not an everywhere defined operator");
        }
        Ok(self.bottom() * lstsq(&top, &eye(n)).adjoint().adjoint())
    }

    /// (A - lambda)^{-1} as a matrix; errors when not boundedly invertible.
    pub fn resolvent(&self, lambda: C64) -> Result<CMat> {
        let s = self.shifted(lambda);
        let n = self.ambient_dim;
        if s.dim() != n {
            return Err(Error::Singular { what: format!("relation of dimension {} (need {n})", s.dim()), cond: f64::INFINITY });
        }
        let ginv = inverse(&s.bottom(), "shifted relation")?;
        Ok(s.top() * ginv)
    }
}

/// graph(S*) = (J graph S)^perp with J(v, g) = (-g, v).
pub fn adjoint_relation(g: &SubspaceGraph) -> SubspaceGraph {
    let n = g.ambient_dim;
    let j = stack(&(-g.bottom()), &g.top());
    let j = orthonormalize(&j);
    SubspaceGraph { ambient_dim: n, basis: complement(&j, 2 * n) }
}

#[derive(Clone, Debug)]
pub struct DualPair {
    pub a_min: SubspaceGraph,
    pub a_min_prime: SubspaceGraph,
    pub a_gamma: SubspaceGraph,
    pub a_max: SubspaceGraph,
    pub a_max_prime: SubspaceGraph,
    gamma: CMat,
    gamma_inv: CMat,
}

impl DualPair {
    pub fn new(a_min: SubspaceGraph, a_min_prime: SubspaceGraph, a_gamma: SubspaceGraph) -> Result<Self> {
        let gamma = a_gamma.as_matrix()?;
        let gamma_inv = inverse(&gamma, "A_gamma")?;
        let a_max = adjoint_relation(&a_min_prime);
        let a_max_prime = adjoint_relation(&a_min);
        if a_max.inclusion_defect(&a_min) > INCLUSION_TOL || a_max_prime.inclusion_defect(&a_min_prime) > INCLUSION_TOL {
            return arg("not a dual pair: A_min is not contained in (A'_min)*");
        }
        if a_gamma.inclusion_defect(&a_min) > INCLUSION_TOL || a_max.inclusion_defect(&a_gamma) > INCLUSION_TOL {
            return arg("A_gamma must satisfy A_min <= A_gamma <= A_max");
        }
        Ok(DualPair { a_min, a_min_prime, a_gamma, a_max, a_max_prime, gamma, gamma_inv })
    }

    /// Pair with A_gamma = m, A_max = {(u, m u + n) : n in span(bm)} and
    /// A'_max = {(v, m* v + n') : n' in span(bm_prime)}.
    pub fn from_blocks(m: &CMat, bm: &CMat, bm_prime: &CMat) -> Result<Self> {
        let n = m.nrows();
        let dmin = complement(&orthonormalize(bm_prime), n);
        let dmin_prime = complement(&orthonormalize(bm), n);
        Self::new(
            SubspaceGraph::restricted(m, &dmin),
            SubspaceGraph::restricted(&m.adjoint(), &dmin_prime),
            SubspaceGraph::graph_of(m),
        )
    }

    /// Generic random pair: d-dimensional multivalued parts, M shifted off 0.
    pub fn random<R: Rng>(rng: &mut R, n: usize, d: usize) -> Result<Self> {
        let mut m = random_matrix(rng, n, n);
        let mut shift = 0.0;
        while sigma_range(&m).0 < 0.2 {
            shift += 1.0;
            m += eye(n) * c64(shift, 0.0);
        }
        let bm = random_matrix(rng, n, d);
        let bmp = random_matrix(rng, n, d);
        Self::from_blocks(&m, &bm, &bmp)
    }

    pub fn n(&self) -> usize {
        self.gamma.nrows()
    }

    pub fn gamma_matrix(&self) -> &CMat {
        &self.gamma
    }

    pub fn gamma_inverse(&self) -> &CMat {
        &self.gamma_inv
    }

    /// The pair seen from the primed side: (A'_min, A_min, A_gamma*).
    pub fn adjoint_pair(&self) -> Result<Self> {
        DualPair::new(self.a_min_prime.clone(), self.a_min.clone(), SubspaceGraph::graph_of(&self.gamma.adjoint()))
    }

    /// (A_min - lambda, A'_min - conj lambda, A_gamma - lambda).
    pub fn shifted(&self, lambda: C64) -> Result<Self> {
        DualPair::new(
            self.a_min.shifted(lambda),
            self.a_min_prime.shifted(lambda.conj()),
            self.a_gamma.shifted(lambda),
        )
    }

    pub fn resolvent(&self, lambda: C64) -> Result<CMat> {
        inverse(&(&self.gamma - eye(self.n()) * lambda), "A_gamma - lambda")
    }

    /// Z_lambda = ker(A_max - lambda)
    pub fn z(&self, lambda: C64) -> CMat {
        self.a_max.shifted(lambda).kernel()
    }

    pub fn z_prime(&self, lambda: C64) -> CMat {
        self.a_max_prime.shifted(lambda.conj()).kernel()
    }

    pub fn e(&self, lambda: C64) -> Result<CMat> {
        Ok(eye(self.n()) + self.resolvent(lambda)? * lambda)
    }

    pub fn f(&self, lambda: C64) -> CMat {
        eye(self.n()) - &self.gamma_inv * lambda
    }

    pub fn e_prime(&self, lambda: C64) -> Result<CMat> {
        let l = lambda.conj();
        let r = inverse(&(self.gamma.adjoint() - eye(self.n()) * l), "A_gamma* - conj lambda")?;
        Ok(eye(self.n()) + r * l)
    }

    pub fn f_prime(&self, lambda: C64) -> CMat {
        eye(self.n()) - self.gamma_inv.adjoint() * lambda.conj()
    }
}

pub fn random_matrix<R: Rng>(rng: &mut R, r: usize, c: usize) -> CMat {
    CMat::from_fn(r, c, |_, _| c64(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5))
}

/// Random closed realization A_min <= A~ <= A_max with `extra` added
/// directions; `extra` = d gives dimension N, the only case with nonempty
/// resolvent set.
pub fn random_realization<R: Rng>(rng: &mut R, pair: &DualPair, extra: usize) -> SubspaceGraph {
    let max = &pair.a_max.basis;
    let picks = max * random_matrix(rng, max.ncols(), extra);
    SubspaceGraph { ambient_dim: pair.n(), basis: span_sum(&pair.a_min.basis, &picks) }
}

/// Splits a graph element (u, g) of A_max as u = u_gamma + u_zeta with
/// u_gamma = (A_gamma - lambda)^{-1}(g - lambda u) and u_zeta in Z_lambda.
pub fn kernel_and_decompose(pair: &DualPair, u: &CVec, g: &CVec, lambda: C64) -> Result<(CVec, CVec)> {
    let r = pair.resolvent(lambda)?;
    let ug = r * (g - u * lambda);
    let uz = u - &ug;
    Ok((ug, uz))
}

#[derive(Clone, Debug)]
pub struct Correspondence {
    pub t_graph: SubspaceGraph,
    pub v_basis: CMat,
    pub w_basis: CMat,
    /// T in the orthonormal bases: T v_basis = w_basis t_matrix.
    pub t_matrix: CMat,
}

impl Correspondence {
    pub fn kernel(&self) -> CMat {
        if self.v_basis.ncols() == 0 {
            return zeros(self.v_basis.nrows(), 0);
        }
        orthonormalize(&(&self.v_basis * null_space_abs(&self.t_matrix, 1e-10 * spectral_norm(&self.t_matrix).max(1.0))))
    }

    pub fn range(&self) -> CMat {
        orthonormalize(&(&self.w_basis * &self.t_matrix))
    }
}

pub fn realization_to_t(pair: &DualPair, a_tilde: &SubspaceGraph) -> Result<Correspondence> {
    if a_tilde.inclusion_defect(&pair.a_min) > INCLUSION_TOL || pair.a_max.inclusion_defect(a_tilde) > INCLUSION_TOL {
        return arg("realization is not between A_min and A_max");
    }
    let n = pair.n();
    let ainv = pair.gamma_inverse();
    let (u, g) = (a_tilde.top(), a_tilde.bottom());
    let tol = 1e-10 * spectral_norm(ainv).max(1.0);
    let uz = &u - ainv * &g;
    let v = orthonormalize_abs(&uz, tol);

    let adj = adjoint_relation(a_tilde);
    let wz = adj.top() - ainv.adjoint() * adj.bottom();
    let w = orthonormalize_abs(&wz, tol);

    let pw_g = &w * (w.adjoint() * &g);
    let t_graph = SubspaceGraph::from_parts(&uz, &pw_g);
    let a = v.adjoint() * &uz;
    let b = w.adjoint() * &g;
    let t_matrix = if v.ncols() == 0 { zeros(w.ncols(), 0) } else { lstsq(&a.adjoint(), &b.adjoint()).adjoint() };
    let scale = spectral_norm(&b).max(1.0);
    if v.ncols() > 0 && spectral_norm(&(&t_matrix * &a - &b)) > 1e-8 * scale {
        return Err(Error::Model("T is not single valued".into()));
    }
    let _ = n;
    Ok(Correspondence { t_graph, v_basis: v, w_basis: w, t_matrix })
}

pub fn t_to_realization(pair: &DualPair, corr: &Correspondence) -> Result<SubspaceGraph> {
    let n = pair.n();
    let z = pair.z(c64(0.0, 0.0));
    let zp = pair.z_prime(c64(0.0, 0.0));
    if containment_defect(&z, &corr.v_basis) > INCLUSION_TOL || containment_defect(&zp, &corr.w_basis) > INCLUSION_TOL {
        return arg("correspondence needs V inside Z and W inside Z'");
    }
    let ainv = pair.gamma_inverse();
    let wperp = complement(&corr.w_basis, n);
    let tz = &corr.w_basis * &corr.t_matrix;
    let top = hcat(&(ainv * &wperp), &(ainv * &tz + &corr.v_basis));
    let bottom = hcat(&wperp, &tz);
    Ok(SubspaceGraph::from_parts(&top, &bottom))
}

/// Matrix of G^lambda_{V,W} = -pr_W lambda E^lambda inj_V in the given bases.
pub fn g_lambda(pair: &DualPair, v: &CMat, w: &CMat, lambda: C64) -> Result<CMat> {
    let e = pair.e(lambda)?;
    Ok(w.adjoint() * e * v * (-lambda))
}

/// M_A~(lambda) = pr_zeta (I - (A~ - lambda)^{-1}(A_max - lambda)) A_gamma^{-1} inj_W,
/// as a matrix from the W basis to the V basis of the correspondence.
pub fn m_function(pair: &DualPair, a_tilde: &SubspaceGraph, lambda: C64) -> Result<CMat> {
    let corr = realization_to_t(pair, a_tilde)?;
    m_function_with(pair, a_tilde, &corr, lambda)
}

pub fn m_function_with(pair: &DualPair, a_tilde: &SubspaceGraph, corr: &Correspondence, lambda: C64) -> Result<CMat> {
    let ainv = pair.gamma_inverse();
    let r = a_tilde.resolvent(lambda)?;
    let w = &corr.w_basis;
    let x = ainv * w;
    let y = w - &x * lambda;
    let u = &r * &y;
    let zeta = -&u + ainv * (&y + &u * lambda);
    Ok(corr.v_basis.adjoint() * zeta)
}

#[derive(Clone, Debug)]
pub struct KreinCheckReport {
    pub lambda: C64,
    /// relative discrepancy of the T^lambda form
    pub t_form: f64,
    /// relative discrepancy of the M-function form
    pub m_form: f64,
    /// residual of (E'_W)* T^lambda E_V = T + G
    pub diagram: f64,
    /// relative residual of M = -(T + G)^{-1}
    pub m_vs_tg: f64,
    /// relative residual of M = -F_Z (T^lambda)^{-1} (F'_Z')*, when V = Z and W = Z'
    pub m_vs_f: Option<f64>,
}

fn rel(a: &CMat, b: &CMat) -> f64 {
    let d = spectral_norm(&(a - b));
    let s = spectral_norm(a).max(spectral_norm(b));
    if s == 0.0 {
        d
    } else {
        d / s
    }
}

pub fn krein_resolvent_check(pair: &DualPair, a_tilde: &SubspaceGraph, lambda: C64) -> Result<KreinCheckReport> {
    let n = pair.n();
    let direct = a_tilde.resolvent(lambda).map_err(|e| relabel(e, "A~ - lambda"))?;
    let r = pair.resolvent(lambda)?;

    let shifted = pair.shifted(lambda)?;
    let corr_l = realization_to_t(&shifted, &a_tilde.shifted(lambda))?;
    let tl_inv = inverse(&corr_l.t_matrix, "T^lambda")?;
    let t_form = &r + &corr_l.v_basis * &tl_inv * corr_l.w_basis.adjoint();

    let corr = realization_to_t(pair, a_tilde)?;
    let m = m_function_with(pair, a_tilde, &corr, lambda)?;
    let e = pair.e(lambda)?;
    let ep = pair.e_prime(lambda)?;
    let pwl = &corr_l.w_basis * corr_l.w_basis.adjoint();
    let m_form = &r - &e * &corr.v_basis * &m * corr.w_basis.adjoint() * ep.adjoint() * pwl;

    let g = g_lambda(pair, &corr.v_basis, &corr.w_basis, lambda)?;
    let tg = &corr.t_matrix + &g;
    let lhs = corr.w_basis.adjoint() * ep.adjoint() * &corr_l.w_basis * &corr_l.t_matrix * corr_l.v_basis.adjoint() * &e * &corr.v_basis;
    let diagram = spectral_norm(&(&lhs - &tg));
    let m_vs_tg = rel(&m, &(-inverse(&tg, "T + G")?));

    let z = pair.z(c64(0.0, 0.0));
    let zp = pair.z_prime(c64(0.0, 0.0));
    let m_vs_f = if subspace_distance(&z, &corr.v_basis) < 1e-9 && subspace_distance(&zp, &corr.w_basis) < 1e-9 {
        let f = pair.f(lambda);
        let fp = pair.f_prime(lambda);
        let rhs = -(corr.v_basis.adjoint() * f * &corr_l.v_basis * &tl_inv * corr_l.w_basis.adjoint() * fp.adjoint() * &corr.w_basis);
        Some(rel(&m, &rhs))
    } else {
        None
    };
    let _ = n;
    Ok(KreinCheckReport { lambda, t_form: rel(&direct, &t_form), m_form: rel(&direct, &m_form), diagram, m_vs_tg, m_vs_f })
}

fn relabel(e: Error, what: &str) -> Error {
    match e {
        Error::Singular { cond, .. } => Error::Singular { what: what.into(), cond },
        other => other,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    #[test]
    fn adjoint_of_full_graph() {
        let mut r = rng(1);
        let m = random_matrix(&mut r, 6, 6);
        let g = SubspaceGraph::graph_of(&m);
        let a = adjoint_relation(&g);
        assert!(a.distance(&SubspaceGraph::graph_of(&m.adjoint())) < 1e-10);
        assert!(adjoint_relation(&a).distance(&g) < 1e-10);
    }

    #[test]
    fn adjoint_of_restriction_is_multivalued() {
        let mut r = rng(2);
        let m = random_matrix(&mut r, 6, 6);
        let d = orthonormalize(&random_matrix(&mut r, 6, 4));
        let a = adjoint_relation(&SubspaceGraph::restricted(&m, &d));
        // complement oracle: (v, h) with <h, u> = <v, m u> for u in d
        assert_eq!(a.dim(), 8);
        let check = d.adjoint() * a.bottom() - (&m * &d).adjoint() * a.top();
        assert!(spectral_norm(&check) < 1e-10);
        assert_eq!(a.multivalued_part().ncols(), 2);
    }

    #[test]
    fn decomposition() {
        let mut r = rng(3);
        let pair = DualPair::random(&mut r, 7, 2).unwrap();
        let lambda = c64(0.3, 0.2);
        let gm = pair.gamma_matrix().clone();
        // u in D(A_gamma): zeta part vanishes
        let u = CVec::from_fn(7, |i, _| c64(i as f64, 1.0));
        let (ug, uz) = kernel_and_decompose(&pair, &u, &(&gm * &u), lambda).unwrap();
        assert!((ug - &u).norm() < 1e-10 && uz.norm() < 1e-10);
        // generic element of A_max
        let el = &pair.a_max.basis * CVec::from_fn(pair.a_max.dim(), |i, _| c64(1.0, i as f64));
        let (u, g) = (el.rows(0, 7).into_owned(), el.rows(7, 7).into_owned());
        let (ug, uz) = kernel_and_decompose(&pair, &u, &g, lambda).unwrap();
        assert!((&ug + &uz - &u).norm() < 1e-12);
        let zl = pair.z(lambda);
        assert!(containment_defect(&zl, &CMat::from_column_slice(7, 1, uz.as_slice())) < 1e-9 * uz.norm().max(1.0));
        // element of Z_lambda: gamma part vanishes
        let z0 = zl.column(0).into_owned();
        let (ug, _) = kernel_and_decompose(&pair, &z0, &(&z0 * lambda), lambda).unwrap();
        assert!(ug.norm() < 1e-10);
    }

    #[test]
    fn trivial_correspondences() {
        let mut r = rng(4);
        let pair = DualPair::random(&mut r, 6, 2).unwrap();
        let c = realization_to_t(&pair, &pair.a_gamma).unwrap();
        assert_eq!((c.v_basis.ncols(), c.w_basis.ncols()), (0, 0));
        assert!(t_to_realization(&pair, &c).unwrap().distance(&pair.a_gamma) < 1e-10);
        let cmax = realization_to_t(&pair, &pair.a_max).unwrap();
        assert!(subspace_distance(&cmax.v_basis, &pair.z(c64(0.0, 0.0))) < 1e-10);
        // D(A_max*) = D(A'_min) lies in D(A'_gamma), so W = {0}
        assert_eq!(cmax.w_basis.ncols(), 0);
        assert!(t_to_realization(&pair, &cmax).unwrap().distance(&pair.a_max) < 1e-10);
    }

    #[test]
    fn zero_t_on_full_kernel_contains_z() {
        let mut r = rng(5);
        let pair = DualPair::random(&mut r, 8, 3).unwrap();
        let z = pair.z(c64(0.0, 0.0));
        let zp = pair.z_prime(c64(0.0, 0.0));
        let corr = Correspondence {
            t_graph: SubspaceGraph::from_parts(&z, &zeros(8, 3)),
            t_matrix: zeros(3, 3),
            v_basis: z.clone(),
            w_basis: zp,
        };
        let at = t_to_realization(&pair, &corr).unwrap();
        assert!(containment_defect(&at.kernel(), &z) < 1e-10);
        assert!(subspace_distance(&at.kernel(), &corr.kernel()) < 1e-10);
    }

    #[test]
    fn rejects_realization_outside_range() {
        let mut r = rng(6);
        let pair = DualPair::random(&mut r, 5, 1).unwrap();
        let junk = SubspaceGraph::graph_of(&random_matrix(&mut r, 5, 5));
        assert!(realization_to_t(&pair, &junk).is_err());
    }

    #[test]
    fn e_f_inverse_and_g_zero() {
        let mut r = rng(7);
        let pair = DualPair::random(&mut r, 8, 2).unwrap();
        let l = c64(0.4, -0.3);
        assert!(spectral_norm(&(pair.e(l).unwrap() * pair.f(l) - eye(8))) < 1e-12);
        assert!(spectral_norm(&(pair.e_prime(l).unwrap() * pair.f_prime(l) - eye(8))) < 1e-12);
        let z = pair.z(c64(0.0, 0.0));
        assert!(spectral_norm(&g_lambda(&pair, &z, &pair.z_prime(c64(0.0, 0.0)), c64(0.0, 0.0)).unwrap()) == 0.0);
    }

    #[test]
    fn krein_random_pair() {
        let mut r = rng(8);
        let pair = DualPair::random(&mut r, 8, 2).unwrap();
        let at = random_realization(&mut r, &pair, 2);
        let rep = krein_resolvent_check(&pair, &at, c64(0.3, 0.2)).unwrap();
        assert!(rep.t_form < 1e-9 && rep.m_form < 1e-9, "{rep:?}");
        assert!(rep.diagram < 1e-10 && rep.m_vs_tg < 1e-9, "{rep:?}");
        let trivial = krein_resolvent_check(&pair, &pair.a_gamma, c64(0.3, 0.2)).unwrap();
        assert!(trivial.t_form < 1e-12);
    }

    #[test]
    fn krein_discrete_laplacian() {
        // 1D Laplacian on 12 nodes, boundary nodes 0 and 11
        let n = 10;
        let full = 12;
        let mut k = zeros(full, full);
        for i in 0..full - 1 {
            k[(i, i)] += c64(1.0, 0.0);
            k[(i + 1, i + 1)] += c64(1.0, 0.0);
            k[(i, i + 1)] -= c64(1.0, 0.0);
            k[(i + 1, i)] -= c64(1.0, 0.0);
        }
        let inner: Vec<usize> = (1..=n).collect();
        let bnd = [0usize, 11];
        let sub = |rows: &[usize], cols: &[usize]| CMat::from_fn(rows.len(), cols.len(), |r, c| k[(rows[r], cols[c])]);
        let (kii, kib, kbi, kbb) = (sub(&inner, &inner), sub(&inner, &bnd), sub(&bnd, &inner), sub(&bnd, &bnd));
        let pair = DualPair::from_blocks(&kii, &kib, &kib).unwrap();
        // Robin-like coupling: -(K u)_B = c u_B
        let c = c64(-0.7, 0.0);
        let ub = -inverse(&(&kbb + eye(2) * c), "robin").unwrap() * &kbi;
        let op = &kii + &kib * ub;
        let at = SubspaceGraph::graph_of(&op);
        for l in [c64(-1.0, 0.0), c64(0.3, 0.2)] {
            let rep = krein_resolvent_check(&pair, &at, l).unwrap();
            assert!(rep.t_form < 1e-9 && rep.m_form < 1e-9, "{rep:?}");
            assert!(rep.m_vs_f.unwrap() < 1e-9);
        }
    }

    #[test]
    fn m_function_is_holomorphic() {
        let mut r = rng(9);
        let pair = DualPair::random(&mut r, 8, 2).unwrap();
        let at = random_realization(&mut r, &pair, 2);
        let corr = realization_to_t(&pair, &at).unwrap();
        let l0 = c64(0.2, 0.1);
        let eps = 1e-5;
        let m = |l: C64| m_function_with(&pair, &at, &corr, l).unwrap();
        let dx = (m(l0 + eps) - m(l0 - eps)) / c64(2.0 * eps, 0.0);
        let dy = (m(l0 + c64(0.0, eps)) - m(l0 - c64(0.0, eps))) / c64(2.0 * eps, 0.0);
        let cr = spectral_norm(&(dy - dx * c64(0.0, 1.0)));
        assert!(cr < 1e-6 * spectral_norm(&m(l0)).max(1.0), "{cr}");
    }

    #[test]
    fn empty_m_function() {
        let mut r = rng(10);
        let pair = DualPair::random(&mut r, 5, 1).unwrap();
        let m = m_function(&pair, &pair.a_gamma, c64(0.1, 0.1)).unwrap();
        assert_eq!(m.nrows() * m.ncols(), 0);
    }
}
