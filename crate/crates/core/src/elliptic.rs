//! Divergence-form operators on graph strips: coefficients, strong
//! ellipticity, the sesquilinear-form discretization, conormal traces and
//! Green data.

use crate::blocktri::BlockTri;
use crate::error::{arg, Error, Result};
use crate::geometry::{transform_gradient, DiffeoData};
use crate::grid::{dn, dt, dt_matrix, fft, ifft, bracket, Component, GridSpec, Location, SpectralField};
use crate::handle::LinearMapHandle;
use crate::linalg::{c64, CMat, C64};
use serde::{Deserialize, Serialize};

pub type Mat2 = [[C64; 2]; 2];

fn zero() -> C64 {
    c64(0.0, 0.0)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case")]
pub enum CoefficientKind {
    Laplace,
    /// a_11 = 1 + amp |sin x'|^exponent
    RoughA11 { amp: f64, exponent: f64 },
    Diag { b11: f64, b22: f64 },
    /// Laplacian plus a constant first-order term b . grad
    Drift { b1: f64, b2: f64 },
    Matrix { b: [[f64; 2]; 2] },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoefficientSpec {
    #[serde(flatten)]
    pub kind: CoefficientKind,
    #[serde(default)]
    pub a0: f64,
}

impl CoefficientSpec {
    pub fn laplace() -> Self {
        CoefficientSpec { kind: CoefficientKind::Laplace, a0: 0.0 }
    }
    pub fn rough(amp: f64, exponent: f64) -> Self {
        CoefficientSpec { kind: CoefficientKind::RoughA11 { amp, exponent }, a0: 0.0 }
    }
}

/// Physical coefficients sampled at the images F(x) of the reference nodes.
#[derive(Clone, Debug)]
pub struct CoefficientField {
    pub grid: GridSpec,
    pub b: Vec<Mat2>,
    pub a: Vec<[C64; 2]>,
    pub a0: Vec<C64>,
    /// the coefficients are declared in H^1_q
    pub q: f64,
}

/// Admissibility of the coefficient/boundary regularity pair (n = 2).
pub fn tau_gate(q: f64, p: f64) -> bool {
    let tau = 0.5 - 1.0 / p;
    tau > 0.0 && 1.0 - 2.0 / q >= tau
}

impl CoefficientField {
    pub fn from_fn(d: &DiffeoData, q: f64, f: impl Fn(f64, f64) -> (Mat2, [C64; 2], C64)) -> Self {
        let g = &d.grid;
        let (mut b, mut a, mut a0) = (Vec::with_capacity(g.len()), Vec::with_capacity(g.len()), Vec::with_capacity(g.len()));
        for k in 0..g.len() {
            let (x, y) = d.point(k);
            let (bb, aa, cc) = f(x, y);
            b.push(bb);
            a.push(aa);
            a0.push(cc);
        }
        CoefficientField { grid: g.clone(), b, a, a0, q }
    }

    pub fn from_spec(spec: &CoefficientSpec, d: &DiffeoData) -> Result<Self> {
        let r = |v: f64| c64(v, 0.0);
        let eye = [[r(1.0), zero()], [zero(), r(1.0)]];
        let a0 = r(spec.a0);
        let none = [zero(), zero()];
        Ok(match spec.kind.clone() {
            CoefficientKind::Laplace => Self::from_fn(d, f64::INFINITY, |_, _| (eye, none, a0)),
            CoefficientKind::RoughA11 { amp, exponent } => {
                if exponent <= 0.0 || amp <= -1.0 {
                    return arg("rough_a11 needs exponent > 0 and amp > -1");
                }
                Self::from_fn(d, 8.0, move |x, _| {
                    ([[r(1.0 + amp * x.sin().abs().powf(exponent)), zero()], [zero(), r(1.0)]], none, a0)
                })
            }
            CoefficientKind::Diag { b11, b22 } => Self::from_fn(d, f64::INFINITY, |_, _| ([[r(b11), zero()], [zero(), r(b22)]], none, a0)),
            CoefficientKind::Drift { b1, b2 } => Self::from_fn(d, f64::INFINITY, |_, _| (eye, [r(b1), r(b2)], a0)),
            CoefficientKind::Matrix { b } => Self::from_fn(d, f64::INFINITY, |_, _| ([[r(b[0][0]), r(b[0][1])], [r(b[1][0]), r(b[1][1])]], none, a0)),
        })
    }

    /// Coefficients of the formal adjoint written in the same form:
    /// b' = b^H, a' = -conj(a), a0' = conj(a0) - div conj(a).
    pub fn adjoint(&self, d: &DiffeoData) -> Self {
        let n = self.grid.len();
        let comp = |j: usize| SpectralField {
            grid: self.grid.clone(),
            values: self.a.iter().map(|v| v[j].conj()).collect(),
            location: Location::Interior,
        };
        let g0 = transform_gradient(&comp(0), d);
        let g1 = transform_gradient(&comp(1), d);
        let mut out = self.clone();
        for k in 0..n {
            let bb = self.b[k];
            out.b[k] = [[bb[0][0].conj(), bb[1][0].conj()], [bb[0][1].conj(), bb[1][1].conj()]];
            out.a[k] = [-self.a[k][0].conj(), -self.a[k][1].conj()];
            out.a0[k] = self.a0[k].conj() - (g0[0][k] + g1[1][k]);
        }
        out
    }

    pub fn is_formally_selfadjoint(&self) -> bool {
        self.a.iter().all(|v| v[0].norm() == 0.0 && v[1].norm() == 0.0)
            && self.a0.iter().all(|z| z.im == 0.0)
            && self.b.iter().all(|b| b[0][1] == b[1][0].conj() && b[0][0].im == 0.0 && b[1][1].im == 0.0)
    }
}

fn quad(b: &Mat2, xi: [f64; 2]) -> C64 {
    let mut s = zero();
    for j in 0..2 {
        for k in 0..2 {
            s += b[j][k] * (xi[j] * xi[k]);
        }
    }
    s
}

const DIRECTIONS: usize = 64;

fn directions() -> impl Iterator<Item = [f64; 2]> {
    (0..DIRECTIONS).map(|k| {
        let t = std::f64::consts::PI * k as f64 / DIRECTIONS as f64;
        [t.cos(), t.sin()]
    })
}

/// min over nodes and unit directions of Re xi^T B xi.
pub fn check_strong_ellipticity(c: &CoefficientField) -> Result<f64> {
    let mut best = (f64::INFINITY, 0usize, [0.0, 0.0]);
    for (k, b) in c.b.iter().enumerate() {
        for xi in directions() {
            let v = quad(b, xi).re;
            if v < best.0 {
                best = (v, k, xi);
            }
        }
    }
    if !(best.0 > 0.0) {
        let (i, j) = (best.1 % c.grid.nt(), best.1 / c.grid.nt());
        return Err(Error::Model(format!(
            "strong ellipticity fails: Re xi^T B xi = {:.3e} at node (i={i}, j={j}), xi = ({:.3}, {:.3})",
            best.0, best.2[0], best.2[1]
        )));
    }
    Ok(best.0)
}

/// Largest |arg xi^T B xi| over nodes and directions.
pub fn symbol_sector_angle(c: &CoefficientField) -> f64 {
    c.b.iter().flat_map(|b| directions().map(move |xi| quad(b, xi).arg().abs())).fold(0.0, f64::max)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Side {
    I,
    D,
    Dt,
}

/// Tangential building blocks: dense spectral matrices, or the scalar
/// symbol of a single Fourier mode with coefficients frozen at one column.
trait Tan {
    fn m(&self) -> usize;
    fn term(&self, l: Side, c: &[C64], r: Side) -> Option<CMat>;
}

struct MatrixTan {
    d: CMat,
    dt: CMat,
}

impl MatrixTan {
    fn new(g: &GridSpec) -> Self {
        let d = dt_matrix(g).map(|v| c64(v, 0.0));
        let dt = d.transpose();
        MatrixTan { d, dt }
    }
    fn side(&self, s: Side) -> &CMat {
        match s {
            Side::D => &self.d,
            _ => &self.dt,
        }
    }
}

impl Tan for MatrixTan {
    fn m(&self) -> usize {
        self.d.nrows()
    }
    fn term(&self, l: Side, c: &[C64], r: Side) -> Option<CMat> {
        if c.iter().all(|z| z.norm() == 0.0) {
            return None;
        }
        let n = c.len();
        let mut mid = match r {
            Side::I => CMat::from_diagonal(&crate::linalg::CVec::from_column_slice(c)),
            s => self.side(s).clone(),
        };
        if r != Side::I {
            for row in 0..n {
                for col in 0..n {
                    mid[(row, col)] *= c[row];
                }
            }
        }
        Some(match l {
            Side::I => mid,
            s => self.side(s) * mid,
        })
    }
}

struct ModeTan {
    xi: f64,
    at: usize,
}

impl Tan for ModeTan {
    fn m(&self) -> usize {
        1
    }
    fn term(&self, l: Side, c: &[C64], r: Side) -> Option<CMat> {
        let s = |side: Side| match side {
            Side::I => c64(1.0, 0.0),
            Side::D => c64(0.0, self.xi),
            Side::Dt => c64(0.0, -self.xi),
        };
        let v = s(l) * c[self.at] * s(r);
        if v.norm() == 0.0 {
            return None;
        }
        Some(CMat::from_element(1, 1, v))
    }
}

/// The discrete operator: K is the sesquilinear form on the reference
/// strip, W the quadrature weights, A = W^{-1} K.
#[derive(Clone, Debug)]
pub struct EllipticOperator {
    pub grid: GridSpec,
    pub geom: DiffeoData,
    pub coeff: CoefficientField,
    pub c0: f64,
    /// detJ Phi^T B Phi, indexed [tangential, normal]
    pub b_ref: Vec<Mat2>,
    /// detJ Phi^T a
    pub beta: Vec<[C64; 2]>,
    /// detJ a0
    pub zeroth: Vec<C64>,
    pub weights: Vec<f64>,
    pub k: BlockTri,
    pub kh: BlockTri,
}

impl EllipticOperator {
    pub fn new(coeff: CoefficientField, geom: &DiffeoData) -> Result<Self> {
        if coeff.grid != geom.grid {
            return arg("coefficient and geometry grids differ");
        }
        let c0 = check_strong_ellipticity(&coeff)?;
        let g = geom.grid.clone();
        let n = g.len();
        let wn = g.normal_weights();
        let (mut b_ref, mut beta, mut zeroth, mut weights) = (Vec::with_capacity(n), Vec::with_capacity(n), Vec::with_capacity(n), Vec::with_capacity(n));
        for k in 0..n {
            let p = geom.phi(k);
            let det = geom.det(k);
            let b = coeff.b[k];
            let mut m = [[zero(); 2]; 2];
            for l in 0..2 {
                for q in 0..2 {
                    let mut s = zero();
                    for j in 0..2 {
                        for kk in 0..2 {
                            s += b[j][kk] * (p[j][l] * p[kk][q]);
                        }
                    }
                    m[l][q] = s * det;
                }
            }
            b_ref.push(m);
            let a = coeff.a[k];
            beta.push([(a[0] * p[0][0] + a[1] * p[1][0]) * det, (a[0] * p[0][1] + a[1] * p[1][1]) * det]);
            zeroth.push(coeff.a0[k] * det);
            weights.push(det * g.ht() * wn[k / g.nt()]);
        }
        let mut op = EllipticOperator { grid: g.clone(), geom: geom.clone(), coeff, c0, b_ref, beta, zeroth, weights, k: BlockTri::zeros(0, 0), kh: BlockTri::zeros(0, 0) };
        op.k = op.assemble(&MatrixTan::new(&g), &op.layer_data(None));
        op.kh = op.k.adjoint();
        Ok(op)
    }

    /// Per-layer coefficient rows; with `at` set, only that column.
    fn layer_data(&self, at: Option<usize>) -> LayerData {
        let nt = self.grid.nt();
        let cols: Vec<usize> = match at {
            Some(i) => vec![i],
            None => (0..nt).collect(),
        };
        let grab = |f: &dyn Fn(usize) -> C64| -> Vec<Vec<C64>> {
            (0..self.grid.nn()).map(|j| cols.iter().map(|&i| f(j * nt + i)).collect()).collect()
        };
        LayerData {
            btt: grab(&|k| self.b_ref[k][0][0]),
            btn: grab(&|k| self.b_ref[k][0][1]),
            bnt: grab(&|k| self.b_ref[k][1][0]),
            bnn: grab(&|k| self.b_ref[k][1][1]),
            bt: grab(&|k| self.beta[k][0]),
            bn: grab(&|k| self.beta[k][1]),
            z0: grab(&|k| self.zeroth[k]),
        }
    }

    fn assemble<T: Tan>(&self, tan: &T, data: &LayerData) -> BlockTri {
        let g = &self.grid;
        let (nn, ht, h) = (g.nn(), g.ht(), g.h());
        let wn = g.normal_weights();
        let mut out = BlockTri::zeros(nn, tan.m());
        let add = |m: &mut CMat, t: &Option<CMat>, s: f64| {
            if let Some(t) = t {
                *m += t * c64(s, 0.0);
            }
        };
        for j in 0..nn {
            let w = wn[j] * ht;
            add(&mut out.diag[j], &tan.term(Side::Dt, &data.btt[j], Side::D), w);
            add(&mut out.diag[j], &tan.term(Side::I, &data.bt[j], Side::D), w);
            add(&mut out.diag[j], &tan.term(Side::I, &data.z0[j], Side::I), w);
        }
        for j in 0..nn - 1 {
            let half = |f: &Vec<Vec<C64>>| -> Vec<C64> { f[j].iter().zip(&f[j + 1]).map(|(x, y)| (x + y) * 0.5).collect() };
            let cnn = tan.term(Side::I, &half(&data.bnn), Side::I);
            add(&mut out.diag[j], &cnn, ht / h);
            add(&mut out.upper[j], &cnn, -ht / h);
            add(&mut out.lower[j + 1], &cnn, -ht / h);
            add(&mut out.diag[j + 1], &cnn, ht / h);
            let x1 = tan.term(Side::I, &half(&data.bnt), Side::D);
            add(&mut out.lower[j + 1], &x1, ht / 2.0);
            add(&mut out.diag[j + 1], &x1, ht / 2.0);
            add(&mut out.diag[j], &x1, -ht / 2.0);
            add(&mut out.upper[j], &x1, -ht / 2.0);
            for x in [tan.term(Side::Dt, &half(&data.btn), Side::I), tan.term(Side::I, &half(&data.bn), Side::I)] {
                add(&mut out.upper[j], &x, ht / 2.0);
                add(&mut out.diag[j], &x, -ht / 2.0);
                add(&mut out.diag[j + 1], &x, ht / 2.0);
                add(&mut out.lower[j + 1], &x, -ht / 2.0);
            }
        }
        out
    }

    /// Per-mode form for Fourier slot `slot`, coefficients frozen at column `at`.
    /// Exact restriction of K when the coefficients do not depend on x'.
    pub fn frozen_mode(&self, slot: usize, at: usize) -> BlockTri {
        self.frozen_column(at).mode(slot)
    }

    pub fn frozen_column(&self, at: usize) -> FrozenColumn<'_> {
        FrozenColumn { op: self, data: self.layer_data(Some(at)), at }
    }

    /// Per-layer weights W at column `at`.
    pub fn frozen_weights(&self, at: usize) -> Vec<f64> {
        (0..self.grid.nn()).map(|j| self.weights[self.grid.idx(at, j)]).collect()
    }

    /// True when all reference coefficients are constant along x'.
    pub fn is_tangentially_constant(&self) -> bool {
        let nt = self.grid.nt();
        let same = |a: C64, b: C64| (a - b).norm() <= 1e-13 * (1.0 + a.norm());
        (0..self.grid.len()).all(|k| {
            let k0 = k - k % nt;
            (0..2).all(|l| (0..2).all(|q| same(self.b_ref[k][l][q], self.b_ref[k0][l][q])))
                && (0..2).all(|l| same(self.beta[k][l], self.beta[k0][l]))
                && same(self.zeroth[k], self.zeroth[k0])
                && (self.weights[k] - self.weights[k0]).abs() <= 1e-13 * self.weights[k0]
        })
    }

    pub fn apply_k(&self, u: &[C64]) -> Vec<C64> {
        self.k.matvec(u)
    }

    pub fn apply_kh(&self, v: &[C64]) -> Vec<C64> {
        self.kh.matvec(v)
    }

    /// W^{-1} K on every row (the discrete maximal operator).
    pub fn apply_a_raw(&self, u: &[C64]) -> Vec<C64> {
        let mut y = self.k.matvec(u);
        y.iter_mut().zip(&self.weights).for_each(|(z, w)| *z /= w);
        y
    }

    pub fn apply_a_adjoint_raw(&self, v: &[C64]) -> Vec<C64> {
        let mut y = self.kh.matvec(v);
        y.iter_mut().zip(&self.weights).for_each(|(z, w)| *z /= w);
        y
    }

    fn extrapolate_ends(&self, y: &mut [C64]) {
        let (nt, nn) = (self.grid.nt(), self.grid.nn());
        for i in 0..nt {
            let l = nn - 1;
            let at = |y: &[C64], j: usize| y[j * nt + i];
            y[i] = at(y, 1) * 3.0 - at(y, 2) * 3.0 + at(y, 3);
            y[l * nt + i] = at(y, l - 1) * 3.0 - at(y, l - 2) * 3.0 + at(y, l - 3);
        }
    }

    /// A u with boundary rows extrapolated from the interior.
    pub fn apply_a(&self, u: &[C64]) -> Vec<C64> {
        let mut y = self.apply_a_raw(u);
        self.extrapolate_ends(&mut y);
        y
    }

    pub fn apply_a_adjoint(&self, v: &[C64]) -> Vec<C64> {
        let mut y = self.apply_a_adjoint_raw(v);
        self.extrapolate_ends(&mut y);
        y
    }

    /// Boundary quadrature weights kappa h_t.
    pub fn sigma(&self, comp: Component) -> Vec<f64> {
        self.geom.kappa(comp).values.iter().map(|k| k.re * self.grid.ht()).collect()
    }

    pub fn boundary_rows(&self, comp: Component) -> std::ops::Range<usize> {
        let nt = self.grid.nt();
        let j = comp.layer(&self.grid);
        j * nt..(j + 1) * nt
    }

    /// Conormal trace consistent with the discrete form: -Sigma^{-1}(K u)_B.
    pub fn chi_fv(&self, u: &[C64], comp: Component) -> Vec<C64> {
        let ku = self.apply_k(u);
        self.sigma(comp).iter().zip(&ku[self.boundary_rows(comp)]).map(|(s, z)| -z / s).collect()
    }

    pub fn chi_fv_prime(&self, v: &[C64], comp: Component) -> Vec<C64> {
        let kv = self.apply_kh(v);
        self.sigma(comp).iter().zip(&kv[self.boundary_rows(comp)]).map(|(s, z)| -z / s).collect()
    }

    /// Conormal trace by one-sided second-order normal differences.
    pub fn chi_one_sided(&self, u: &[C64], comp: Component, primed: bool) -> Vec<C64> {
        let g = &self.grid;
        let un = dn(g, u);
        let ut = dt(g, u);
        let kap = &self.geom.kappa(comp).values;
        let s = comp.sign();
        self.boundary_rows(comp)
            .enumerate()
            .map(|(i, k)| {
                let b = self.b_ref[k];
                let (bnt, bnn) = if primed { (b[0][1].conj(), b[1][1].conj()) } else { (b[1][0], b[1][1]) };
                let mut v = (bnt * ut[k] + bnn * un[k]) * (s / kap[i].re);
                if primed {
                    let nu = self.geom.normal(comp, i);
                    let a = self.coeff.a[k];
                    v += (a[0].conj() * nu[0] + a[1].conj() * nu[1]) * u[k];
                }
                v
            })
            .collect()
    }

    pub fn boundary_pair(&self, comp: Component, a: &[C64], b: &[C64]) -> C64 {
        self.sigma(comp).iter().zip(a.iter().zip(b)).map(|(s, (x, y))| x * y.conj() * *s).sum()
    }

    /// Physical L2(Omega) pairing with the full quadrature.
    pub fn inner(&self, u: &[C64], v: &[C64]) -> C64 {
        self.weights.iter().zip(u.iter().zip(v)).map(|(w, (x, y))| x * y.conj() * *w).sum()
    }

    /// Pairing over interior rows only.
    pub fn inner_interior_rows(&self, u: &[C64], v: &[C64]) -> C64 {
        let nt = self.grid.nt();
        let end = self.grid.len() - nt;
        (nt..end).map(|k| u[k] * v[k].conj() * self.weights[k]).sum()
    }
}

struct LayerData {
    btt: Vec<Vec<C64>>,
    btn: Vec<Vec<C64>>,
    bnt: Vec<Vec<C64>>,
    bnn: Vec<Vec<C64>>,
    bt: Vec<Vec<C64>>,
    bn: Vec<Vec<C64>>,
    z0: Vec<Vec<C64>>,
}

/// Coefficients of one column, used for frozen per-mode problems.
pub struct FrozenColumn<'a> {
    op: &'a EllipticOperator,
    data: LayerData,
    pub at: usize,
}

impl FrozenColumn<'_> {
    pub fn mode(&self, slot: usize) -> BlockTri {
        self.op.assemble(&ModeTan { xi: self.op.grid.xi_deriv(slot), at: 0 }, &self.data)
    }

    pub fn weights(&self) -> Vec<f64> {
        self.op.frozen_weights(self.at)
    }

    pub fn kappa(&self, comp: Component) -> f64 {
        self.op.geom.kappa(comp).values[self.at].re
    }
}

pub fn assemble_a(c: &CoefficientField, g: &DiffeoData) -> Result<LinearMapHandle> {
    let op = EllipticOperator::new(c.clone(), g)?;
    let n = op.grid.len();
    Ok(LinearMapHandle::new("A", n, n, move |u| op.apply_a(u)))
}

#[derive(Clone, Debug)]
pub struct GreenData {
    pub component: Component,
    pub s0: Vec<C64>,
    pub s0_inv: Vec<C64>,
    pub b1: Vec<C64>,
    pub b1_prime: Vec<C64>,
    pub b0_prime: Vec<C64>,
}

/// s0 = nu^T B nu, b1 = (nu^T B)_tau, b1' = (nu^T B^H)_tau, b0' = nu . conj(a).
pub fn green_coefficients(op: &EllipticOperator, comp: Component) -> Result<GreenData> {
    let g = &op.grid;
    let mut out = GreenData { component: comp, s0: vec![], s0_inv: vec![], b1: vec![], b1_prime: vec![], b0_prime: vec![] };
    for i in 0..g.nt() {
        let k = g.idx(i, comp.layer(g));
        let nu = op.geom.normal(comp, i);
        let tau = [nu[1], -nu[0]];
        let b = op.coeff.b[k];
        let row = |bh: bool, v: [f64; 2]| -> C64 {
            let mut s = zero();
            for j in 0..2 {
                for l in 0..2 {
                    let e = if bh { b[l][j].conj() } else { b[j][l] };
                    s += e * (nu[j] * v[l]);
                }
            }
            s
        };
        let s0 = row(false, nu);
        if s0.norm() < op.c0 / 2.0 {
            return Err(Error::Model(format!("|s0| = {:.3e} below c0/2 at boundary node {i}", s0.norm())));
        }
        out.s0.push(s0);
        out.s0_inv.push(c64(1.0, 0.0) / s0);
        // sign of tau does not matter for s0, and b1 is paired with d_tau along the same tau
        out.b1.push(row(false, tau));
        out.b1_prime.push(row(true, tau));
        let a = op.coeff.a[k];
        out.b0_prime.push(a[0].conj() * nu[0] + a[1].conj() * nu[1]);
    }
    Ok(out)
}

/// The conormal trace of `u` on `comp` (one-sided differences).
pub fn conormal_trace(u: &SpectralField, op: &EllipticOperator, comp: Component, primed: bool) -> Result<SpectralField> {
    if u.location != Location::Interior || u.values.len() != op.grid.len() {
        return arg("conormal trace needs an interior field on the operator grid");
    }
    SpectralField::boundary(&op.grid, op.chi_one_sided(&u.values, comp, primed))
}

/// |(Au, v) - (u, A'v) - sum over components of [(chi u, v) - (u, chi' v)]|
/// with trapezoid quadrature; `with_kappa = false` drops the surface measure.
pub fn greens_identity_residual(op: &EllipticOperator, u: &[C64], v: &[C64], with_kappa: bool) -> f64 {
    let lhs = op.inner(&op.apply_a(u), v) - op.inner(u, &op.apply_a_adjoint(v));
    let mut rhs = zero();
    for comp in [Component::Bottom, Component::Top] {
        let cu = op.chi_one_sided(u, comp, false);
        let cv = op.chi_one_sided(v, comp, true);
        let r = op.boundary_rows(comp);
        let w: Vec<f64> = if with_kappa { op.sigma(comp) } else { vec![op.grid.ht(); op.grid.nt()] };
        for (i, k) in r.enumerate() {
            rhs += (cu[i] * v[k].conj() - u[k] * cv[i].conj()) * w[i];
        }
    }
    (lhs - rhs).norm()
}

/// Same identity in the form-consistent discretization (interior rows and
/// the finite-volume traces); vanishes up to rounding.
pub fn discrete_green_defect(op: &EllipticOperator, u: &[C64], v: &[C64]) -> f64 {
    let lhs = op.inner_interior_rows(&op.apply_a_raw(u), v) - op.inner_interior_rows(u, &op.apply_a_adjoint_raw(v));
    let mut rhs = zero();
    for comp in [Component::Bottom, Component::Top] {
        let r = op.boundary_rows(comp);
        rhs += op.boundary_pair(comp, &op.chi_fv(u, comp), &v[r.clone()]) - op.boundary_pair(comp, &u[r], &op.chi_fv_prime(v, comp));
    }
    (lhs - rhs).norm()
}

/// A field with conormal trace `phi_chi` and Dirichlet trace `phi_0` on `comp`:
/// K0 phi_0 + K1 (phi_chi - chi K0 phi_0), K0 the semigroup lift and K1 a
/// first-order lift with vanishing Dirichlet trace.
pub fn trace_right_inverse(op: &EllipticOperator, phi_chi: &SpectralField, phi_0: &SpectralField, comp: Component) -> Result<SpectralField> {
    let g = &op.grid;
    if phi_chi.values.len() != g.nt() || phi_0.values.len() != g.nt() {
        return arg("trace data must be boundary fields on the operator grid");
    }
    let k0 = crate::grid::lift_semigroup_from(phi_0, comp);
    let defect = op.chi_one_sided(&k0.values, comp, false);
    let kap = &op.geom.kappa(comp).values;
    let mut gdat = Vec::with_capacity(g.nt());
    for i in 0..g.nt() {
        let s1 = op.b_ref[g.idx(i, comp.layer(g))][1][1];
        if s1.norm() < 1e-12 {
            return Err(Error::Model(format!("conormal coefficient not invertible at boundary node {i}")));
        }
        gdat.push((phi_chi.values[i] - defect[i]) * kap[i].re / s1);
    }
    let mut hat = gdat;
    fft(&mut hat);
    let mut values = k0.values;
    for j in 0..g.nn() {
        let t = match comp {
            Component::Bottom => g.xn(j),
            Component::Top => g.extent() - g.xn(j),
        };
        let mut layer: Vec<C64> = (0..g.nt()).map(|i| hat[i] * (t * (-bracket(g.xi(i)) * t).exp())).collect();
        ifft(&mut layer);
        for i in 0..g.nt() {
            values[g.idx(i, j)] += layer[i];
        }
    }
    SpectralField::interior(g, values)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{build_diffeo, BoundaryGraph};
    use crate::linalg::observed_order;
    use std::f64::consts::PI;

    fn setup(nt: usize, nn: usize, amp: f64, spec: &CoefficientSpec) -> EllipticOperator {
        let g = GridSpec::new(2.0 * PI, nt, nn, 1.0).unwrap();
        let b = BoundaryGraph::from_fn(2.0 * PI, nt, 2, 8.0, |x| amp * x.sin()).unwrap();
        let d = build_diffeo(&g, &b, None).unwrap();
        let c = CoefficientField::from_spec(spec, &d).unwrap();
        EllipticOperator::new(c, &d).unwrap()
    }

    fn field(op: &EllipticOperator, f: impl Fn(f64, f64) -> C64) -> Vec<C64> {
        (0..op.grid.len()).map(|k| { let (x, y) = op.geom.point(k); f(x, y) }).collect()
    }

    #[test]
    fn ellipticity_constants() {
        let g = GridSpec::new(2.0 * PI, 8, 8, 1.0).unwrap();
        let d = build_diffeo(&g, &BoundaryGraph::flat(2.0 * PI, 8, 0.0), None).unwrap();
        let c0 = |kind| check_strong_ellipticity(&CoefficientField::from_spec(&CoefficientSpec { kind, a0: 0.0 }, &d).unwrap());
        assert!((c0(CoefficientKind::Laplace).unwrap() - 1.0).abs() < 1e-12);
        assert!((c0(CoefficientKind::Diag { b11: 2.0, b22: 1.0 }).unwrap() - 1.0).abs() < 1e-12);
        assert!((c0(CoefficientKind::Matrix { b: [[1.0, 0.5], [-0.5, 1.0]] }).unwrap() - 1.0).abs() < 1e-12);
        assert!(matches!(c0(CoefficientKind::Diag { b11: 1.0, b22: -1.0 }), Err(Error::Model(_))));
        assert!(tau_gate(8.0, 8.0));
        assert!(!tau_gate(2.5, 8.0));
    }

    #[test]
    fn laplacian_eigenfunction() {
        let mut errs = vec![];
        for nn in [17, 33, 65] {
            let op = setup(16, nn, 0.0, &CoefficientSpec::laplace());
            let u = field(&op, |x, y| c64(0.0, 3.0 * x).exp() * (PI * y).sin());
            let au = op.apply_a(&u);
            let lam = 9.0 + PI * PI;
            let e = (0..op.grid.len()).map(|k| (au[k] - u[k] * lam).norm()).fold(0.0, f64::max);
            errs.push(e);
        }
        assert!(observed_order(&errs, 2.0) > 1.9, "{errs:?}");
        let op = setup(16, 17, 0.0, &CoefficientSpec { kind: CoefficientKind::Laplace, a0: 2.5 });
        let base = setup(16, 17, 0.0, &CoefficientSpec::laplace());
        let u = field(&op, |x, y| c64(x.cos() * y, y * y));
        let d: f64 = op.apply_a_raw(&u).iter().zip(base.apply_a_raw(&u)).zip(&u).map(|((a, b), z)| (a - b - z * 2.5).norm()).fold(0.0, f64::max);
        assert!(d < 1e-9);
    }

    #[test]
    fn symmetric_coefficients_give_hermitian_form() {
        let op = setup(16, 17, 0.2, &CoefficientSpec::rough(0.3, 1.4));
        let k = op.k.to_dense();
        assert!((&k - k.adjoint()).norm() < 1e-10 * k.norm());
        assert!(op.coeff.is_formally_selfadjoint());
    }

    #[test]
    fn adjoint_involution() {
        let g = GridSpec::new(2.0 * PI, 16, 17, 1.0).unwrap();
        let d = build_diffeo(&g, &BoundaryGraph::from_fn(2.0 * PI, 16, 2, 8.0, |x| 0.1 * x.cos()).unwrap(), None).unwrap();
        let c = CoefficientField::from_fn(&d, 8.0, |x, y| {
            ([[c64(2.0, 0.1), c64(0.3, 0.0)], [c64(-0.2, 0.0), c64(1.0, 0.0)]], [c64(x.sin(), y), c64(0.5, 0.0)], c64(1.0, x.cos()))
        });
        let cc = c.adjoint(&d).adjoint(&d);
        for k in 0..g.len() {
            for j in 0..2 {
                assert!((cc.a[k][j] - c.a[k][j]).norm() < 1e-12);
                for l in 0..2 {
                    assert_eq!(cc.b[k][j][l], c.b[k][j][l]);
                }
            }
            assert!((cc.a0[k] - c.a0[k]).norm() < 1e-10);
        }
    }

    #[test]
    fn discrete_green_identity_is_exact() {
        let spec = CoefficientSpec { kind: CoefficientKind::Drift { b1: 0.3, b2: -0.7 }, a0: 0.5 };
        let op = setup(16, 17, 0.2, &spec);
        let u = field(&op, |x, y| c64(x.sin() + y, y * y));
        let v = field(&op, |x, y| c64((2.0 * x).cos() * y, 1.0 - y));
        let scale = crate::linalg::vec_norm(&u) * crate::linalg::vec_norm(&v);
        assert!(discrete_green_defect(&op, &u, &v) < 1e-11 * scale);
    }

    #[test]
    fn green_identity_second_order() {
        let spec = CoefficientSpec { kind: CoefficientKind::Drift { b1: 0.3, b2: -0.7 }, a0: 0.5 };
        let (mut r, mut r_nok) = (vec![], vec![]);
        for nn in [33, 65, 129] {
            let op = setup(32, nn, 0.15, &spec);
            let u = field(&op, |x, y| c64(0.0, x).exp() * (y * 1.3).sin() + c64(y.exp(), 0.0));
            let v = field(&op, |x, y| c64(y.cos() * (1.0 + 0.5 * x.sin()), 0.0));
            r.push(greens_identity_residual(&op, &u, &v, true));
            r_nok.push(greens_identity_residual(&op, &u, &v, false));
        }
        assert!(observed_order(&r, 2.0) > 1.8, "{r:?}");
        assert!(r_nok[2] > 0.5 * r_nok[0] && r_nok[2] > 1e-3, "{r_nok:?}");
    }

    #[test]
    fn conormal_traces() {
        let op = setup(16, 65, 0.0, &CoefficientSpec::laplace());
        let u = field(&op, |_, y| c64(y, 0.0));
        let chi = op.chi_one_sided(&u, Component::Bottom, false);
        assert!(chi.iter().all(|z| (z - c64(1.0, 0.0)).norm() < 1e-12));
        let k = 2.0;
        let u = field(&op, |x, y| c64(0.0, k * x).exp() * (-k * y).exp());
        let chi = op.chi_one_sided(&u, Component::Bottom, false);
        let chi_fv = op.chi_fv(&u, Component::Bottom);
        for i in 0..16 {
            let want = c64(0.0, k * op.grid.x(i)).exp() * (-k);
            assert!((chi[i] - want).norm() < 5e-3);
            assert!((chi_fv[i] - want).norm() < 5e-3);
        }
        let spec = CoefficientSpec { kind: CoefficientKind::Drift { b1: 0.4, b2: -0.3 }, a0: 0.0 };
        let opd = setup(16, 17, 0.1, &spec);
        let u = field(&opd, |x, y| c64(x.cos(), y));
        let plain = opd.chi_one_sided(&u, Component::Bottom, false);
        let primed = opd.chi_one_sided(&u, Component::Bottom, true);
        let gd = green_coefficients(&opd, Component::Bottom).unwrap();
        for i in 0..16 {
            assert!((primed[i] - plain[i] - gd.b0_prime[i] * u[i]).norm() < 1e-12);
        }
    }

    #[test]
    fn green_data() {
        let op = setup(16, 17, 0.0, &CoefficientSpec { kind: CoefficientKind::Diag { b11: 1.0, b22: 4.0 }, a0: 0.0 });
        let gd = green_coefficients(&op, Component::Bottom).unwrap();
        assert!(gd.s0.iter().all(|z| (z - c64(4.0, 0.0)).norm() < 1e-14));
        assert!(gd.b1.iter().all(|z| z.norm() < 1e-14));
        assert!(gd.s0.iter().zip(&gd.s0_inv).all(|(a, b)| (a * b - c64(1.0, 0.0)).norm() < 1e-10));
        let curved = setup(16, 17, 0.3, &CoefficientSpec::laplace());
        let gd = green_coefficients(&curved, Component::Top).unwrap();
        assert!(gd.s0.iter().all(|z| (z - c64(1.0, 0.0)).norm() < 1e-12));
        assert!(gd.b1.iter().all(|z| z.norm() < 1e-12));
    }

    #[test]
    fn right_inverse_hits_traces() {
        let mut errs = vec![];
        for nn in [33, 65, 129] {
            let op = setup(16, nn, 0.1, &CoefficientSpec::rough(0.3, 1.4));
            let g = &op.grid;
            let pc = SpectralField::from_fn_boundary(g, |x| c64(x.cos(), 0.0));
            let p0 = SpectralField::from_fn_boundary(g, |x| c64(0.5, (2.0 * x).sin()));
            let u = trace_right_inverse(&op, &pc, &p0, Component::Bottom).unwrap();
            for i in 0..g.nt() {
                assert!((u.values[i] - p0.values[i]).norm() < 1e-12);
            }
            let chi = op.chi_one_sided(&u.values, Component::Bottom, false);
            errs.push((0..g.nt()).map(|i| (chi[i] - pc.values[i]).norm()).fold(0.0, f64::max));
        }
        assert!(errs[2] < 1e-3 && errs[2] < errs[0], "{errs:?}");
        let op = setup(16, 17, 0.0, &CoefficientSpec::laplace());
        let z = SpectralField::from_fn_boundary(&op.grid, |_| c64(0.0, 0.0));
        let u = trace_right_inverse(&op, &z, &z, Component::Top).unwrap();
        assert!(u.values.iter().all(|v| v.norm() == 0.0));
    }

    #[test]
    fn frozen_mode_matches_full_operator() {
        let spec = CoefficientSpec { kind: CoefficientKind::Drift { b1: 0.3, b2: 0.2 }, a0: 1.0 };
        let op = setup(16, 17, 0.0, &spec);
        assert!(op.is_tangentially_constant());
        let slot = 3;
        let kk = op.frozen_mode(slot, 0);
        let prof: Vec<C64> = (0..17).map(|j| c64((j as f64 * 0.1).sin(), 0.2)).collect();
        let u: Vec<C64> = (0..op.grid.len()).map(|k| c64(0.0, op.grid.xi_deriv(slot) * op.grid.x(k % 16)).exp() * prof[k / 16]).collect();
        let ku = op.apply_k(&u);
        let km = kk.matvec(&prof);
        for k in 0..op.grid.len() {
            let want = km[k / 16] * c64(0.0, op.grid.xi_deriv(slot) * op.grid.x(k % 16)).exp();
            assert!((ku[k] - want).norm() < 1e-11);
        }
        assert!(!setup(16, 17, 0.1, &CoefficientSpec::laplace()).is_tangentially_constant());
    }
}
