//! Dirichlet-to-Neumann maps, reduced Neumann traces, Neumann-type
//! realizations and the Krein resolvent formula on the discrete strip.

use crate::blocktri::BlockTri;
use crate::dirichlet::{dirichlet_matrix, standard_suite, ResolventHandle};
use crate::elliptic::EllipticOperator;
use crate::error::{arg, Error, Result};
use crate::extension::{g_lambda, DualPair};
use crate::grid::{dt, dt_matrix, fft, hk_norm, ifft, Component, GridSpec, SpectralField};
use crate::handle::LinearMapHandle;
use crate::linalg::{c64, inverse, orthonormalize, sigma_range, spectral_norm, subspace_distance, vec_norm, zeros, CMat, C64};
use crate::psdo::{band_fit, chart_boundary_psdo, symbol_smooth, two_chart_partition, BandFit, Chart, ChartPiece, SymbolField, SymbolKind};
use serde::{Deserialize, Serialize};
use std::sync::Arc;

/// Relative threshold on sigma_min(L^lambda) / sigma_max below which lambda
/// is reported as an eigenvalue of the realization.
pub const EIGENVALUE_TOL: f64 = 1e-10;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Selection {
    Bottom,
    Top,
    Both,
}

impl Selection {
    pub fn components(self) -> Vec<Component> {
        match self {
            Selection::Bottom => vec![Component::Bottom],
            Selection::Top => vec![Component::Top],
            Selection::Both => vec![Component::Bottom, Component::Top],
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TraceKind {
    /// -Sigma^{-1} (K u)_B, consistent with the discrete form
    FiniteVolume,
    OneSided,
}

fn trace(op: &EllipticOperator, u: &[C64], comp: Component, kind: TraceKind, primed: bool) -> Vec<C64> {
    match (kind, primed) {
        (TraceKind::FiniteVolume, false) => op.chi_fv(u, comp),
        (TraceKind::FiniteVolume, true) => op.chi_fv_prime(u, comp),
        (TraceKind::OneSided, p) => op.chi_one_sided(u, comp, p),
    }
}

fn zero() -> C64 {
    c64(0.0, 0.0)
}

fn unit(n: usize, m: usize) -> Vec<C64> {
    let mut e = vec![zero(); n];
    e[m] = c64(1.0, 0.0);
    e
}

/// Solve with Dirichlet data given on the components of `sel` (stacked), zero elsewhere.
fn lift(r: &ResolventHandle, f: Option<&[C64]>, sel: Selection, data: &[C64]) -> Vec<C64> {
    let nt = r.op().grid.nt();
    let (mut b, mut t) = (None, None);
    for (c, comp) in sel.components().into_iter().enumerate() {
        let chunk = &data[c * nt..(c + 1) * nt];
        match comp {
            Component::Bottom => b = Some(chunk),
            Component::Top => t = Some(chunk),
        }
    }
    r.solve_bvp(f, b, t)
}

fn gather(op: &EllipticOperator, u: &[C64], sel: Selection, kind: TraceKind, primed: bool) -> Vec<C64> {
    sel.components().into_iter().flat_map(|c| trace(op, u, c, kind, primed)).collect()
}

fn boundary_values(op: &EllipticOperator, u: &[C64], sel: Selection) -> Vec<C64> {
    sel.components().into_iter().flat_map(|c| u[op.boundary_rows(c)].to_vec()).collect()
}

fn sigma_of(op: &EllipticOperator, sel: Selection) -> Vec<f64> {
    sel.components().into_iter().flat_map(|c| op.sigma(c)).collect()
}

/// Dense P^lambda on the boundary data of a selection, nodal basis,
/// bottom block first.
#[derive(Clone, Debug)]
pub struct DtNHandle {
    pub lambda: C64,
    pub selection: Selection,
    pub trace: TraceKind,
    pub primed: bool,
    pub matrix: CMat,
    pub op: Arc<EllipticOperator>,
}

impl DtNHandle {
    pub fn apply(&self, phi: &[C64]) -> Vec<C64> {
        (&self.matrix * crate::linalg::CVec::from_column_slice(phi)).iter().cloned().collect()
    }

    /// Block mapping data on `col` to conormal data on `row`.
    pub fn block(&self, row: Component, col: Component) -> Result<CMat> {
        let comps = self.selection.components();
        let nt = self.op.grid.nt();
        let pos = |c: Component| comps.iter().position(|&x| x == c);
        match (pos(row), pos(col)) {
            (Some(r), Some(c)) => Ok(self.matrix.view((r * nt, c * nt), (nt, nt)).into_owned()),
            _ => arg("component not in the assembled selection"),
        }
    }

    /// Diagonal of the block in the Fourier basis: (wavenumber, symbol).
    pub fn mode_symbol(&self, row: Component, col: Component) -> Result<Vec<(i64, C64)>> {
        let b = self.block(row, col)?;
        Ok(fourier_diagonal(&self.op.grid, &b))
    }

    pub fn handle(&self) -> LinearMapHandle {
        LinearMapHandle::from_matrix(format!("P^lambda({})", self.lambda), self.matrix.clone())
    }
}

/// (wavenumber, <e_k, B e_k> / N) for every slot.
pub fn fourier_diagonal(g: &GridSpec, b: &CMat) -> Vec<(i64, C64)> {
    let nt = g.nt();
    (0..nt)
        .map(|slot| {
            let k = g.wavenumber(slot) as f64;
            let e: Vec<C64> = (0..nt).map(|i| c64(0.0, 2.0 * std::f64::consts::PI * k * i as f64 / nt as f64).exp()).collect();
            let be = b * crate::linalg::CVec::from_column_slice(&e);
            let s: C64 = e.iter().zip(be.iter()).map(|(x, y)| x.conj() * y).sum();
            (g.wavenumber(slot), s / nt as f64)
        })
        .collect()
}

/// P^lambda e_m = chi K^lambda e_m for every boundary node of `sel`.
pub fn dtn_assemble(op: &Arc<EllipticOperator>, lambda: C64, sel: Selection, kind: TraceKind) -> Result<DtNHandle> {
    assemble_inner(op, lambda, sel, kind, false)
}

/// The primed map P'^{conj lambda} built from the formal adjoint.
pub fn dtn_assemble_adjoint(op: &Arc<EllipticOperator>, lambda: C64, sel: Selection, kind: TraceKind) -> Result<DtNHandle> {
    assemble_inner(op, lambda, sel, kind, true)
}

fn assemble_inner(op: &Arc<EllipticOperator>, lambda: C64, sel: Selection, kind: TraceKind, primed: bool) -> Result<DtNHandle> {
    let r = ResolventHandle::new(op, lambda, primed)?;
    let d = op.grid.nt() * sel.components().len();
    let mut matrix = zeros(d, d);
    for m in 0..d {
        let u = lift(&r, None, sel, &unit(d, m));
        for (row, v) in gather(op, &u, sel, kind, primed).into_iter().enumerate() {
            matrix[(row, m)] = v;
        }
    }
    Ok(DtNHandle { lambda, selection: sel, trace: kind, primed, matrix, op: op.clone() })
}

/// |<P phi, psi> - <phi, P' psi>| / (|P| |phi| |psi|), Sigma-weighted, maximized over unit vectors.
pub fn dtn_symmetry_defect(p: &DtNHandle, p_prime: &DtNHandle) -> f64 {
    let s = sigma_of(&p.op, p.selection);
    let sm = CMat::from_diagonal(&crate::linalg::CVec::from_iterator(s.len(), s.iter().map(|v| c64(*v, 0.0))));
    let lhs = &sm * &p.matrix;
    let rhs = p_prime.matrix.adjoint() * &sm;
    spectral_norm(&(&lhs - &rhs)) / spectral_norm(&lhs).max(f64::MIN_POSITIVE)
}

/// Discrete DtN symbol on `comp` with the coefficients frozen at column `at`,
/// one value per Fourier slot.
pub fn frozen_dtn_symbol(op: &EllipticOperator, lambda: C64, comp: Component, at: usize) -> Result<Vec<C64>> {
    let g = &op.grid;
    let col = op.frozen_column(at);
    let w: Vec<Vec<f64>> = col.weights().into_iter().map(|v| vec![v]).collect();
    let layer = comp.layer(g);
    let sigma = col.kappa(comp) * g.ht();
    let mut out = Vec::with_capacity(g.nt());
    for slot in 0..g.nt() {
        let k = col.mode(slot);
        let lu = dirichlet_matrix(&k, &w, lambda).factor("frozen Dirichlet problem")?;
        let u = lu.solve(&unit(g.nn(), layer));
        out.push(-k.matvec(&u)[layer] / sigma);
    }
    Ok(out)
}

pub fn frozen_dtn_field(op: &EllipticOperator, lambda: C64, comp: Component, tau: f64) -> Result<SymbolField> {
    let g = &op.grid;
    let nt = g.nt();
    let mut values = Vec::with_capacity(nt * nt);
    for at in 0..nt {
        values.extend(frozen_dtn_symbol(op, lambda, comp, at)?);
    }
    Ok(SymbolField { grid: g.clone(), values, order: 1.0, delta: 0.0, tau, kind: SymbolKind::Boundary })
}

#[derive(Clone, Debug)]
pub struct SharpReport {
    pub fit: BandFit,
    /// |P_sharp - op(p)| / |op(p)|: the change caused by smoothing
    pub smoothing_change: f64,
    pub epsilon: f64,
    pub pass: bool,
}

/// P_sharp from the smoothed frozen symbol through a two-chart sum, and the
/// dyadic order of P^lambda - P_sharp on `comp`.
pub fn dtn_sharp_approx(op: &Arc<EllipticOperator>, lambda: C64, comp: Component, delta: f64, tau: f64, bands: &[usize], epsilon: f64) -> Result<SharpReport> {
    let g = &op.grid;
    let nt = g.nt();
    let p = dtn_assemble(op, lambda, Selection::from(comp), TraceKind::FiniteVolume)?;
    let sym = frozen_dtn_field(op, lambda, comp, tau)?;
    let (sharp, _) = symbol_smooth(&sym, delta)?;
    let pieces: Vec<ChartPiece> = two_chart_partition(g)
        .into_iter()
        .map(|(psi, phi)| ChartPiece { psi, phi, symbol: sharp.clone(), chart: Chart::Identity })
        .collect();
    let plain = [ChartPiece { psi: vec![1.0; nt], phi: vec![1.0; nt], symbol: sym, chart: Chart::Identity }];
    let mut ps = zeros(nt, nt);
    let mut p0 = zeros(nt, nt);
    for m in 0..nt {
        let e = SpectralField::boundary(g, unit(nt, m))?;
        let a = chart_boundary_psdo(&pieces, &e)?;
        let b = chart_boundary_psdo(&plain, &e)?;
        for r in 0..nt {
            ps[(r, m)] = a.values[r];
            p0[(r, m)] = b.values[r];
        }
    }
    let fit = band_fit(&(&p.matrix - &ps), g, bands);
    let smoothing_change = spectral_norm(&(&ps - &p0)) / spectral_norm(&p0).max(f64::MIN_POSITIVE);
    let pass = fit.order <= 1.0 - epsilon;
    Ok(SharpReport { fit, smoothing_change, epsilon, pass })
}

impl From<Component> for Selection {
    fn from(c: Component) -> Self {
        match c {
            Component::Bottom => Selection::Bottom,
            Component::Top => Selection::Top,
        }
    }
}

/// Which boundary trace the reduced trace is built on.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ReducedBase {
    /// the conormal trace chi
    Conormal,
    /// s0 gamma_1: chi with its tangential boundary part removed
    NormalDerivative,
}

/// The part of the conormal trace that only sees boundary values:
/// (sigma/kappa) b_nt d_t on the reference strip.
fn tangential_part(op: &EllipticOperator, comp: Component, phi: &[C64]) -> Vec<C64> {
    let g = &op.grid;
    let kap = &op.geom.kappa(comp).values;
    let d = dt(g, phi);
    op.boundary_rows(comp)
        .enumerate()
        .map(|(i, k)| op.b_ref[k][1][0] * d[i] * (comp.sign() / kap[i].re))
        .collect()
}

/// Gamma^lambda u = T u - P_T^lambda gamma_0 u on both components, stacked
/// bottom then top, with T the finite-volume conormal trace or its s0 gamma_1 part.
pub fn reduced_trace(op: &Arc<EllipticOperator>, lambda: C64, u: &[C64], base: ReducedBase) -> Result<Vec<C64>> {
    let r = ResolventHandle::new(op, lambda, false)?;
    let sel = Selection::Both;
    let harmonic = lift(&r, None, sel, &boundary_values(op, u, sel));
    let mut out = vec![];
    for comp in sel.components() {
        let tu = op.chi_fv(u, comp);
        let th = op.chi_fv(&harmonic, comp);
        let mut g: Vec<C64> = tu.iter().zip(&th).map(|(a, b)| a - b).collect();
        if base == ReducedBase::NormalDerivative {
            let a = tangential_part(op, comp, &u[op.boundary_rows(comp)]);
            let b = tangential_part(op, comp, &harmonic[op.boundary_rows(comp)]);
            for i in 0..g.len() {
                g[i] -= a[i] - b[i];
            }
        }
        out.extend(g);
    }
    if cfg!(debug_assertions) {
        let d = reduced_trace_defect_with(op, &r, u, &out);
        debug_assert!(d <= 1e-8, "reduced trace identity defect {d:.3e}");
    }
    Ok(out)
}

/// The right side vanishes on the boundary, so both bases give the same value.
fn reduced_trace_defect_with(op: &EllipticOperator, r: &ResolventHandle, u: &[C64], gamma: &[C64]) -> f64 {
    let lambda = r.lambda;
    let au = op.apply_a_raw(u);
    let f: Vec<C64> = au.iter().zip(u).map(|(a, v)| a - v * lambda).collect();
    let z = r.apply(&f);
    let rhs: Vec<C64> = gather(op, &z, Selection::Both, TraceKind::FiniteVolume, false);
    let d: Vec<C64> = rhs.iter().zip(gamma).map(|(a, b)| a - b).collect();
    let scale = vec_norm(&gather(op, u, Selection::Both, TraceKind::FiniteVolume, false));
    vec_norm(&d) / scale.max(vec_norm(&rhs)).max(f64::MIN_POSITIVE)
}

/// Relative defect of Gamma^lambda = chi (A_gamma - lambda)^{-1} (A_max - lambda) on `u`.
pub fn reduced_trace_defect(op: &Arc<EllipticOperator>, lambda: C64, u: &[C64]) -> Result<f64> {
    let r = ResolventHandle::new(op, lambda, false)?;
    let g = reduced_trace(op, lambda, u, ReducedBase::Conormal)?;
    Ok(reduced_trace_defect_with(op, &r, u, &g))
}

/// Which discretization the Green-type residuals use.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GreenPairing {
    /// interior rows and finite-volume traces: exact up to rounding
    Discrete,
    /// trapezoid quadrature and one-sided traces: second order
    Quadrature,
}

/// |(Au, v) - (u, A'v) - sum over components [(Gamma u, v) - (u, Gamma' v)]| at lambda = 0.
pub fn modified_green_residual(op: &Arc<EllipticOperator>, u: &[C64], v: &[C64], pairing: GreenPairing) -> Result<f64> {
    let r = ResolventHandle::new(op, zero(), false)?;
    let ra = ResolventHandle::new(op, zero(), true)?;
    let sel = Selection::Both;
    let hu = lift(&r, None, sel, &boundary_values(op, u, sel));
    let hv = lift(&ra, None, sel, &boundary_values(op, v, sel));
    let wu: Vec<C64> = u.iter().zip(&hu).map(|(a, b)| a - b).collect();
    let wv: Vec<C64> = v.iter().zip(&hv).map(|(a, b)| a - b).collect();
    let (lhs, kind) = match pairing {
        GreenPairing::Discrete => (
            op.inner_interior_rows(&op.apply_a_raw(u), v) - op.inner_interior_rows(u, &op.apply_a_adjoint_raw(v)),
            TraceKind::FiniteVolume,
        ),
        GreenPairing::Quadrature => (op.inner(&op.apply_a(u), v) - op.inner(u, &op.apply_a_adjoint(v)), TraceKind::OneSided),
    };
    let mut rhs = zero();
    for comp in sel.components() {
        let rows = op.boundary_rows(comp);
        let gu = trace(op, &wu, comp, kind, false);
        let gv = trace(op, &wv, comp, kind, true);
        rhs += op.boundary_pair(comp, &gu, &v[rows.clone()]) - op.boundary_pair(comp, &u[rows], &gv);
    }
    Ok((lhs - rhs).norm())
}

fn one() -> f64 {
    1.0
}

/// The boundary operator C of a Neumann-type condition chi u = C gamma_0 u,
/// acting in the tangential reference coordinate.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "params", rename_all = "snake_case")]
pub enum BoundaryOperatorSpec {
    /// c(x') = value + i imag + amp |sin x'|^exponent
    Multiplier {
        value: f64,
        #[serde(default)]
        imag: f64,
        #[serde(default)]
        amp: f64,
        #[serde(default = "one")]
        exponent: f64,
    },
    /// b d/dx' + c0, symbol i b xi + c0
    TangentialDerivative {
        b: f64,
        #[serde(default)]
        c0: f64,
    },
    /// scale |xi|^power + c0 as a Fourier multiplier
    PsdoSymbol {
        scale: f64,
        #[serde(default = "one")]
        power: f64,
        #[serde(default)]
        c0: f64,
    },
}

impl BoundaryOperatorSpec {
    pub fn order(&self) -> f64 {
        match self {
            BoundaryOperatorSpec::Multiplier { .. } => 0.0,
            BoundaryOperatorSpec::TangentialDerivative { b, .. } => {
                if *b == 0.0 {
                    0.0
                } else {
                    1.0
                }
            }
            BoundaryOperatorSpec::PsdoSymbol { scale, power, .. } => {
                if *scale == 0.0 {
                    0.0
                } else {
                    power.max(0.0)
                }
            }
        }
    }

    pub fn matrix(&self, g: &GridSpec) -> Result<CMat> {
        let nt = g.nt();
        if self.order() > 1.0 {
            return arg(format!("boundary operator of order {} exceeds 1", self.order()));
        }
        Ok(match self {
            BoundaryOperatorSpec::Multiplier { value, imag, amp, exponent } => {
                CMat::from_fn(nt, nt, |r, c| if r == c { c64(value + amp * g.x(r).sin().abs().powf(*exponent), *imag) } else { zero() })
            }
            BoundaryOperatorSpec::TangentialDerivative { b, c0 } => {
                let d = dt_matrix(g);
                CMat::from_fn(nt, nt, |r, c| c64(b * d[(r, c)] + if r == c { *c0 } else { 0.0 }, 0.0))
            }
            BoundaryOperatorSpec::PsdoSymbol { scale, power, c0 } => {
                let mut m = zeros(nt, nt);
                for c in 0..nt {
                    let mut e = unit(nt, c);
                    fft(&mut e);
                    for (s, z) in e.iter_mut().enumerate() {
                        let xi = g.xi(s).abs();
                        let w = if xi == 0.0 { 0.0 } else { scale * xi.powf(*power) };
                        *z *= c64(w + c0, 0.0);
                    }
                    ifft(&mut e);
                    for r in 0..nt {
                        m[(r, c)] = e[r];
                    }
                }
                m
            }
        })
    }

    /// Principal first-order symbol c^0(xi).
    pub fn principal_symbol(&self, xi: f64) -> C64 {
        match self {
            BoundaryOperatorSpec::Multiplier { .. } => zero(),
            BoundaryOperatorSpec::TangentialDerivative { b, .. } => c64(0.0, b * xi),
            BoundaryOperatorSpec::PsdoSymbol { scale, power, .. } => {
                if (*power - 1.0).abs() < 1e-12 {
                    c64(scale * xi.abs(), 0.0)
                } else {
                    zero()
                }
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RealizationMode {
    NeumannType,
    Subspace,
}

/// chi u = L X^* gamma_0 u + Y^* P^0 gamma_0 u on Y, gamma_0 u in X. Bases are
/// columns, orthonormal for the Sigma-weighted boundary pairing.
#[derive(Clone, Debug)]
pub struct SubspaceData {
    pub x: CMat,
    pub y: CMat,
    pub l: CMat,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RealizationSpec {
    pub mode: RealizationMode,
    #[serde(rename = "C", default, skip_serializing_if = "Option::is_none")]
    pub c: Option<BoundaryOperatorSpec>,
    pub component: Selection,
    #[serde(skip)]
    pub subspace: Option<SubspaceData>,
}

impl RealizationSpec {
    pub fn neumann(c: BoundaryOperatorSpec, component: Selection) -> Self {
        RealizationSpec { mode: RealizationMode::NeumannType, c: Some(c), component, subspace: None }
    }

    pub fn robin(c0: f64, component: Selection) -> Self {
        Self::neumann(BoundaryOperatorSpec::Multiplier { value: c0, imag: 0.0, amp: 0.0, exponent: 1.0 }, component)
    }

    pub fn subspace(data: SubspaceData, component: Selection) -> Self {
        RealizationSpec { mode: RealizationMode::Subspace, c: None, component, subspace: Some(data) }
    }
}

fn sigma_matrix(s: &[f64]) -> CMat {
    CMat::from_fn(s.len(), s.len(), |r, c| if r == c { c64(s[r], 0.0) } else { zero() })
}

/// Sigma-orthonormal basis of the whole boundary space of `sel`.
pub fn full_basis(op: &EllipticOperator, sel: Selection) -> CMat {
    let s = sigma_of(op, sel);
    CMat::from_fn(s.len(), s.len(), |r, c| if r == c { c64(1.0 / s[r].sqrt(), 0.0) } else { zero() })
}

/// A realization A~ between A_min and A_max, ready to be solved.
#[derive(Clone, Debug)]
pub struct Realization {
    pub op: Arc<EllipticOperator>,
    pub spec: RealizationSpec,
    /// C on the selected components, block diagonal
    c: CMat,
}

impl Realization {
    pub fn new(op: &Arc<EllipticOperator>, spec: RealizationSpec) -> Result<Self> {
        let g = &op.grid;
        let comps = spec.component.components();
        let d = g.nt() * comps.len();
        let c = match spec.mode {
            RealizationMode::NeumannType => {
                let cs = spec.c.as_ref().ok_or_else(|| Error::Argument("neumann_type realization needs C".into()))?;
                let block = cs.matrix(g)?;
                let mut c = zeros(d, d);
                for k in 0..comps.len() {
                    c.view_mut((k * g.nt(), k * g.nt()), (g.nt(), g.nt())).copy_from(&block);
                }
                c
            }
            RealizationMode::Subspace => {
                let s = spec.subspace.as_ref().ok_or_else(|| Error::Argument("subspace realization needs X, Y and L".into()))?;
                if s.x.nrows() != d || s.y.nrows() != d || s.l.nrows() != s.y.ncols() || s.l.ncols() != s.x.ncols() || s.x.ncols() != s.y.ncols() {
                    return arg("subspace data has inconsistent shapes");
                }
                let sm = sigma_matrix(&sigma_of(op, spec.component));
                for b in [&s.x, &s.y] {
                    let gram = b.adjoint() * &sm * b;
                    if spectral_norm(&(gram - crate::linalg::eye(b.ncols()))) > 1e-8 {
                        return arg("subspace bases must be orthonormal in the Sigma-weighted pairing");
                    }
                }
                zeros(0, 0)
            }
        };
        Ok(Realization { op: op.clone(), spec, c })
    }

    pub fn selection(&self) -> Selection {
        self.spec.component
    }

    /// C restricted to the selected components (neumann_type only).
    pub fn c_matrix(&self) -> &CMat {
        &self.c
    }

    /// Block-tridiagonal (A~ - lambda) for neumann_type: selected boundary rows
    /// K_B u + Sigma C u_B = 0, other boundary rows Dirichlet.
    fn neumann_matrix(&self, lambda: C64) -> BlockTri {
        let op = &self.op;
        let g = &op.grid;
        let nt = g.nt();
        let w: Vec<Vec<f64>> = op.weights.chunks(nt).map(|c| c.to_vec()).collect();
        let mut m = dirichlet_matrix(&op.k, &w, lambda);
        for (k, comp) in self.selection().components().into_iter().enumerate() {
            let j = comp.layer(g);
            let s = op.sigma(comp);
            let cblock = self.c.view((k * nt, k * nt), (nt, nt));
            m.diag[j] = op.k.diag[j].clone() + sigma_matrix(&s) * cblock;
            m.lower[j] = op.k.lower[j].clone();
            m.upper[j] = op.k.upper[j].clone();
        }
        m
    }

    /// Dense (A~ - lambda) for either mode; interior rows scaled by W.
    pub fn dense_matrix(&self, lambda: C64) -> Result<CMat> {
        match self.spec.mode {
            RealizationMode::NeumannType => Ok(self.neumann_matrix(lambda).to_dense()),
            RealizationMode::Subspace => self.subspace_matrix(lambda),
        }
    }

    fn subspace_matrix(&self, lambda: C64) -> Result<CMat> {
        let op = &self.op;
        let g = &op.grid;
        let nt = g.nt();
        let n = g.len();
        let sel = self.selection();
        let s = self.spec.subspace.as_ref().expect("checked in new");
        let w: Vec<Vec<f64>> = op.weights.chunks(nt).map(|c| c.to_vec()).collect();
        let mut m = dirichlet_matrix(&op.k, &w, lambda).to_dense();
        let kd = op.k.to_dense();
        let p0 = dtn_assemble(op, zero(), sel, TraceKind::FiniteVolume)?.matrix;
        let sig = sigma_of(op, sel);
        let sm = sigma_matrix(&sig);
        let rows: Vec<usize> = sel.components().into_iter().flat_map(|c| op.boundary_rows(c)).collect();
        let d = rows.len();
        // chi u on the boundary nodes of sel, as a d x n map
        let mut chi = zeros(d, n);
        for (a, &r) in rows.iter().enumerate() {
            for c in 0..n {
                chi[(a, c)] = -kd[(r, c)] / sig[a];
            }
        }
        let mut gamma = zeros(d, n);
        for (a, &r) in rows.iter().enumerate() {
            gamma[(a, r)] = c64(1.0, 0.0);
        }
        let ys = s.y.adjoint() * &sm;
        let xs = s.x.adjoint() * &sm;
        let cond_y = &ys * &chi - (&s.l * &xs + &ys * &p0) * &gamma;
        let proj = crate::linalg::eye(d) - &s.x * &xs;
        let cond_x = &proj * &gamma;
        // stack both condition sets and keep a d-row orthonormal row basis
        let mut stacked = zeros(cond_y.nrows() + d, n);
        stacked.view_mut((0, 0), (cond_y.nrows(), n)).copy_from(&cond_y);
        stacked.view_mut((cond_y.nrows(), 0), (d, n)).copy_from(&cond_x);
        let basis = orthonormalize(&stacked.adjoint());
        if basis.ncols() != d {
            return Err(Error::Model(format!("boundary conditions have rank {} but {} are needed", basis.ncols(), d)));
        }
        let bc = basis.adjoint();
        for (a, &r) in rows.iter().enumerate() {
            for c in 0..n {
                m[(r, c)] = bc[(a, c)];
            }
        }
        Ok(m)
    }

    /// (A~ - lambda)^{-1} f.
    pub fn solve(&self, lambda: C64, f: &[C64]) -> Result<Vec<C64>> {
        Ok(self.solve_many(lambda, &[f.to_vec()])?.remove(0))
    }

    /// (A~ - lambda)^{-1} applied to every right-hand side, factoring once.
    pub fn solve_many(&self, lambda: C64, fs: &[Vec<C64>]) -> Result<Vec<Vec<C64>>> {
        let op = &self.op;
        let g = &op.grid;
        let (nt, n) = (g.nt(), g.len());
        let rhs = |f: &[C64]| -> Vec<C64> { (0..n).map(|k| if k < nt || k >= n - nt { zero() } else { f[k] * op.weights[k] }).collect() };
        match self.spec.mode {
            RealizationMode::NeumannType => {
                let lu = self.neumann_matrix(lambda).factor("realization")?;
                Ok(fs.iter().map(|f| lu.solve(&rhs(f))).collect())
            }
            RealizationMode::Subspace => {
                let m = self.subspace_matrix(lambda)?;
                let (lo, hi) = sigma_range(&m);
                if lo < 1e-12 * hi {
                    return Err(Error::Singular { what: "realization".into(), cond: hi / lo.max(f64::MIN_POSITIVE) });
                }
                let lu = m.lu();
                fs.iter()
                    .map(|f| {
                        lu.solve(&crate::linalg::CVec::from_column_slice(&rhs(f)))
                            .map(|x| x.iter().cloned().collect())
                            .ok_or_else(|| Error::Singular { what: "realization".into(), cond: f64::INFINITY })
                    })
                    .collect()
            }
        }
    }

    /// L^lambda acting on gamma_0 data: C - P^lambda, or in subspace form
    /// L + Y^*(P^0 - P^lambda) X.
    pub fn l_lambda(&self, lambda: C64) -> Result<CMat> {
        let sel = self.selection();
        let p = dtn_assemble(&self.op, lambda, sel, TraceKind::FiniteVolume)?.matrix;
        match self.spec.mode {
            RealizationMode::NeumannType => Ok(&self.c - p),
            RealizationMode::Subspace => {
                let s = self.spec.subspace.as_ref().expect("checked in new");
                let p0 = dtn_assemble(&self.op, zero(), sel, TraceKind::FiniteVolume)?.matrix;
                let sm = sigma_matrix(&sigma_of(&self.op, sel));
                Ok(&s.l + s.y.adjoint() * &sm * (p0 - p) * &s.x)
            }
        }
    }

    /// The row map of A~ at lambda = 0: A on interior rows, the boundary
    /// conditions on boundary rows.
    pub fn handle(&self) -> Result<LinearMapHandle> {
        let m = self.dense_matrix(zero())?;
        let op = self.op.clone();
        let n = op.grid.len();
        let nt = op.grid.nt();
        Ok(LinearMapHandle::new("A~", n, n, move |u| {
            let mut y: Vec<C64> = (&m * crate::linalg::CVec::from_column_slice(u)).iter().cloned().collect();
            for k in nt..n - nt {
                y[k] /= op.weights[k];
            }
            y
        }))
    }
}

pub fn realization_assemble(op: &Arc<EllipticOperator>, spec: RealizationSpec) -> Result<LinearMapHandle> {
    Realization::new(op, spec)?.handle()
}

/// Translate a neumann_type condition into subspace form: X = Y = the whole
/// boundary space, L = C - P^0.
pub fn neumann_to_subspace(real: &Realization) -> Result<RealizationSpec> {
    if real.spec.mode != RealizationMode::NeumannType {
        return arg("already in subspace form");
    }
    let sel = real.selection();
    let x = full_basis(&real.op, sel);
    let p0 = dtn_assemble(&real.op, zero(), sel, TraceKind::FiniteVolume)?.matrix;
    let sm = sigma_matrix(&sigma_of(&real.op, sel));
    let l = x.adjoint() * &sm * (real.c_matrix() - p0) * &x;
    Ok(RealizationSpec::subspace(SubspaceData { x: x.clone(), y: x, l }, sel))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KreinReport {
    pub lambda_re: f64,
    pub lambda_im: f64,
    /// |u_direct - u_krein| / |u_direct|; NaN when lambda is an eigenvalue
    pub discrepancy: f64,
    /// condition number of L^lambda = -M(lambda)^{-1}
    pub m_condition: f64,
    pub sigma_min_ratio: f64,
    pub eigenvalue: bool,
    /// |psi from the adjoint Poisson route - chi R f| / |chi R f|
    pub psi_defect: f64,
    /// |u|_{H^2} / |f|_0 of the Krein solution
    pub h2_ratio: f64,
}

#[derive(Clone, Debug)]
pub struct KreinOutcome {
    pub u: Option<Vec<C64>>,
    pub report: KreinReport,
}

/// (K'^{conj lambda})^* f on the selected components, from adjoint Poisson solves.
fn adjoint_poisson_star(op: &EllipticOperator, ra: &ResolventHandle, sel: Selection, f: &[C64]) -> Vec<C64> {
    let nt = op.grid.nt();
    let n = op.grid.len();
    let sig = sigma_of(op, sel);
    let d = sig.len();
    (0..d)
        .map(|m| {
            let v = lift(ra, None, sel, &unit(d, m));
            let s: C64 = (nt..n - nt).map(|k| v[k].conj() * op.weights[k] * f[k]).sum();
            s / sig[m]
        })
        .collect()
}

fn l2(op: &EllipticOperator, u: &[C64]) -> f64 {
    op.inner(u, u).re.sqrt()
}

/// Solve (A~ - lambda) u = f directly and through R f + K (C - P)^{-1} (K')^* f.
pub fn krein_solve(real: &Realization, lambda: C64, f: &[C64]) -> Result<KreinOutcome> {
    let op = &real.op;
    let sel = real.selection();
    let r = ResolventHandle::new(op, lambda, false)?;
    let ra = ResolventHandle::new(op, lambda, true)?;
    let ug = r.apply(f);
    let psi = adjoint_poisson_star(op, &ra, sel, f);
    let psi_direct = gather(op, &ug, sel, TraceKind::FiniteVolume, false);
    let dpsi: Vec<C64> = psi.iter().zip(&psi_direct).map(|(a, b)| a - b).collect();
    let psi_defect = vec_norm(&dpsi) / vec_norm(&psi_direct).max(f64::MIN_POSITIVE);
    let l = real.l_lambda(lambda)?;
    let (lo, hi) = sigma_range(&l);
    let ratio = lo / hi.max(f64::MIN_POSITIVE);
    let mut report = KreinReport {
        lambda_re: lambda.re,
        lambda_im: lambda.im,
        discrepancy: f64::NAN,
        m_condition: hi / lo.max(f64::MIN_POSITIVE),
        sigma_min_ratio: ratio,
        eigenvalue: ratio < EIGENVALUE_TOL,
        psi_defect,
        h2_ratio: f64::NAN,
    };
    if report.eigenvalue {
        return Ok(KreinOutcome { u: None, report });
    }
    let data: Vec<C64> = match real.spec.mode {
        RealizationMode::NeumannType => (inverse(&l, "L^lambda")? * crate::linalg::CVec::from_column_slice(&psi)).iter().cloned().collect(),
        RealizationMode::Subspace => {
            let s = real.spec.subspace.as_ref().expect("checked in new");
            let sm = sigma_matrix(&sigma_of(op, sel));
            let rhs = s.y.adjoint() * &sm * crate::linalg::CVec::from_column_slice(&psi);
            let rho = inverse(&l, "L^lambda")? * rhs;
            (&s.x * &rho).iter().cloned().collect()
        }
    };
    let uk: Vec<C64> = ug.iter().zip(lift(&r, None, sel, &data)).map(|(a, b)| a + b).collect();
    let fnorm = l2(op, f).max(f64::MIN_POSITIVE);
    report.h2_ratio = hk_norm(&SpectralField { grid: op.grid.clone(), values: uk.clone(), location: crate::grid::Location::Interior }, 2) / fnorm;
    match real.solve(lambda, f) {
        Ok(ud) => {
            let diff: Vec<C64> = ud.iter().zip(&uk).map(|(a, b)| a - b).collect();
            report.discrepancy = l2(op, &diff) / l2(op, &ud).max(f64::MIN_POSITIVE);
        }
        Err(Error::Singular { .. }) => {}
        Err(e) => return Err(e),
    }
    Ok(KreinOutcome { u: Some(uk), report })
}

/// M(lambda) = -(L^lambda)^{-1}; an eigenvalue of A~ is reported as Error::Eigenvalue.
pub fn m_function_pde(real: &Realization, lambda: C64) -> Result<CMat> {
    let l = real.l_lambda(lambda)?;
    let (lo, hi) = sigma_range(&l);
    if lo < EIGENVALUE_TOL * hi {
        return Err(Error::Eigenvalue { re: lambda.re, im: lambda.im, ratio: lo / hi });
    }
    Ok(-inverse(&l, "L^lambda")?)
}

/// Compare gamma_0 (I - (A~ - lambda)^{-1}(A_max - lambda)) A_gamma^{-1} K'^0
/// with M(lambda) (K'^0)^* K'^0 on the boundary basis (neumann_type, full
/// selection space). Returns the relative difference.
pub fn m_function_definition_check(real: &Realization, lambda: C64) -> Result<f64> {
    if real.spec.mode != RealizationMode::NeumannType {
        return arg("the definition route is implemented for neumann_type realizations");
    }
    let op = &real.op;
    let sel = real.selection();
    let m = m_function_pde(real, lambda)?;
    let r0 = ResolventHandle::new(op, zero(), false)?;
    let ra0 = ResolventHandle::new(op, zero(), true)?;
    let d = m.nrows();
    let mut lhs = zeros(d, d);
    let mut gram = zeros(d, d);
    let xs: Vec<Vec<C64>> = (0..d).map(|col| r0.apply(&lift(&ra0, None, sel, &unit(d, col)))).collect();
    let gs: Vec<Vec<C64>> = (0..d)
        .map(|col| {
            let zp = lift(&ra0, None, sel, &unit(d, col));
            zp.iter().zip(&xs[col]).map(|(a, b)| a - b * lambda).collect()
        })
        .collect();
    let ts = real.solve_many(lambda, &gs)?;
    for col in 0..d {
        let (x, t) = (&xs[col], &ts[col]);
        let y: Vec<C64> = x.iter().zip(t.iter()).map(|(a, b)| a - b).collect();
        for (row, v) in boundary_values(op, &y, sel).into_iter().enumerate() {
            lhs[(row, col)] = v;
        }
        for (row, v) in gather(op, x, sel, TraceKind::FiniteVolume, false).into_iter().enumerate() {
            gram[(row, col)] = v;
        }
    }
    let rhs = &m * gram;
    Ok(spectral_norm(&(&lhs - &rhs)) / spectral_norm(&rhs).max(f64::MIN_POSITIVE))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GLinkReport {
    /// |Sigma^{-1} G^lambda - (P^0 - P^lambda)| / |P^0 - P^lambda|
    pub defect: f64,
    /// distance between the harmonic lifts and ker(A_max) of the abstract pair
    pub z_distance: f64,
    pub z_prime_distance: f64,
    pub interior_dim: usize,
}

/// P^0 - P^lambda against (gamma_Z'^*)^{-1} G^lambda_{Z,Z'} gamma_Z^{-1} from the
/// abstract dual pair built on the same matrices (both components).
pub fn glink_check(op: &Arc<EllipticOperator>, lambda: C64) -> Result<GLinkReport> {
    let g = &op.grid;
    let (nt, n) = (g.nt(), g.len());
    let interior: Vec<usize> = (nt..n - nt).collect();
    let sel = Selection::Both;
    let bnodes: Vec<usize> = sel.components().into_iter().flat_map(|c| op.boundary_rows(c)).collect();
    let ni = interior.len();
    let kd = op.k.to_dense();
    let kh = op.kh.to_dense();
    let wh: Vec<f64> = interior.iter().map(|&k| op.weights[k].sqrt()).collect();
    let mt = CMat::from_fn(ni, ni, |r, c| kd[(interior[r], interior[c])] / (wh[r] * wh[c]));
    let bm = CMat::from_fn(ni, bnodes.len(), |r, c| kd[(interior[r], bnodes[c])] / wh[r]);
    let bmp = CMat::from_fn(ni, bnodes.len(), |r, c| kh[(interior[r], bnodes[c])] / wh[r]);
    let pair = DualPair::from_blocks(&mt, &bm, &bmp)?;
    let r0 = ResolventHandle::new(op, zero(), false)?;
    let ra0 = ResolventHandle::new(op, zero(), true)?;
    let d = bnodes.len();
    let mut phi_z = zeros(ni, d);
    let mut phi_zp = zeros(ni, d);
    for m in 0..d {
        let u = lift(&r0, None, sel, &unit(d, m));
        let v = lift(&ra0, None, sel, &unit(d, m));
        for (a, &k) in interior.iter().enumerate() {
            phi_z[(a, m)] = u[k] * wh[a];
            phi_zp[(a, m)] = v[k] * wh[a];
        }
    }
    let z_distance = subspace_distance(&orthonormalize(&phi_z), &pair.z(zero()));
    let z_prime_distance = subspace_distance(&orthonormalize(&phi_zp), &pair.z_prime(zero()));
    let gl = g_lambda(&pair, &phi_z, &phi_zp, lambda)?;
    let sig = sigma_of(op, sel);
    let lmat = CMat::from_fn(d, d, |r, c| gl[(r, c)] / sig[r]);
    let p0 = dtn_assemble(op, zero(), sel, TraceKind::FiniteVolume)?.matrix;
    let pl = dtn_assemble(op, lambda, sel, TraceKind::FiniteVolume)?.matrix;
    let diff = p0 - pl;
    let defect = spectral_norm(&(&lmat - &diff)) / spectral_norm(&diff).max(f64::MIN_POSITIVE);
    Ok(GLinkReport { defect, z_distance, z_prime_distance, interior_dim: ni })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EllipticityReport {
    /// min over nodes and frequencies of |c^0 - p^0| / <xi>
    pub min_ratio: f64,
    pub at_x: f64,
    pub at_xi: f64,
    pub component: Component,
    pub pass: bool,
}

pub const ELLIPTICITY_TOL: f64 = 1e-6;

/// Principal DtN symbol at boundary node i of `comp` on the reference strip:
/// (sigma/kappa) i (b_nt xi + b_nn eta), eta the root decaying into the strip.
pub fn principal_dtn_symbol(op: &EllipticOperator, comp: Component, i: usize, xi: f64) -> C64 {
    let g = &op.grid;
    let k = g.idx(i, comp.layer(g));
    let b = op.b_ref[k];
    let kap = op.geom.kappa(comp).values[i].re;
    let (a2, a1, a0) = (b[1][1], (b[0][1] + b[1][0]) * xi, b[0][0] * xi * xi);
    let disc = (a1 * a1 - a2 * a0 * 4.0).sqrt();
    let roots = [(-a1 + disc) / (a2 * 2.0), (-a1 - disc) / (a2 * 2.0)];
    let want = comp.sign();
    let eta = if roots[0].im * want > roots[1].im * want { roots[0] } else { roots[1] };
    c64(0.0, 1.0) * (b[1][0] * xi + b[1][1] * eta) * (comp.sign() / kap)
}

/// l^0 = c^0 - p^0 over boundary nodes and dyadic frequencies |xi| = 2^j, both signs.
pub fn ellipticity_check(op: &EllipticOperator, spec: &RealizationSpec) -> Result<Vec<EllipticityReport>> {
    let c = match (&spec.mode, &spec.c) {
        (RealizationMode::NeumannType, Some(c)) => c,
        _ => return arg("ellipticity check needs a neumann_type spec with a symbol-level C"),
    };
    if c.order() > 1.0 {
        return arg("boundary operator order exceeds 1");
    }
    let g = &op.grid;
    let jmax = (g.nt() / 2).trailing_zeros() as i32;
    let mut out = vec![];
    for comp in spec.component.components() {
        let mut best = EllipticityReport { min_ratio: f64::INFINITY, at_x: 0.0, at_xi: 0.0, component: comp, pass: true };
        for i in 0..g.nt() {
            for j in 0..=jmax {
                for s in [1.0, -1.0] {
                    let xi = s * 2f64.powi(j);
                    let l = c.principal_symbol(xi) - principal_dtn_symbol(op, comp, i, xi);
                    let v = l.norm() / (1.0 + xi * xi).sqrt();
                    if v < best.min_ratio {
                        best.min_ratio = v;
                        best.at_x = g.x(i);
                        best.at_xi = xi;
                    }
                }
            }
        }
        best.pass = best.min_ratio > ELLIPTICITY_TOL;
        out.push(best);
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegularityRow {
    pub nt: usize,
    pub nn: usize,
    pub ratio: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegularityReport {
    pub rows: Vec<RegularityRow>,
    /// max ratio / min ratio over the ladder
    pub growth: f64,
    pub elliptic: bool,
    /// bounded ratios for an elliptic condition, growth otherwise
    pub bounded: bool,
}

/// L2-normalized data: smooth bulk modes plus the adjoint Poisson fields of
/// every resolved Fourier mode on the selected components.
pub fn regularity_suite(op: &Arc<EllipticOperator>, lambda: C64, sel: Selection) -> Result<Vec<Vec<C64>>> {
    let g = &op.grid;
    let ra = ResolventHandle::new(op, lambda, true)?;
    let mut out = standard_suite(op);
    let ncomp = sel.components().len();
    for c in 0..ncomp {
        for slot in 0..g.nt() {
            let k = g.wavenumber(slot);
            if (k.unsigned_abs() as usize) * 2 >= g.nt() {
                continue;
            }
            let mut data = vec![zero(); g.nt() * ncomp];
            for i in 0..g.nt() {
                data[c * g.nt() + i] = c64(0.0, 2.0 * std::f64::consts::PI * k as f64 * i as f64 / g.nt() as f64).exp();
            }
            let mut v = lift(&ra, None, sel, &data);
            for b in sel.components() {
                for r in op.boundary_rows(b) {
                    v[r] = zero();
                }
            }
            out.push(v);
        }
    }
    for f in out.iter_mut() {
        let n = l2(op, f);
        f.iter_mut().for_each(|z| *z /= n);
    }
    Ok(out)
}

/// max over the suite of |(A~ - lambda)^{-1} f|_{H^2} / |f|_0 along a mesh ladder.
pub fn regularity_study(build: impl Fn(usize, usize) -> Result<Arc<EllipticOperator>>, spec: &RealizationSpec, lambda: C64, ladder: &[(usize, usize)], bound: f64) -> Result<RegularityReport> {
    let mut rows = vec![];
    let mut elliptic = true;
    for &(nt, nn) in ladder {
        let op = build(nt, nn)?;
        if rows.is_empty() {
            elliptic = ellipticity_check(&op, spec)?.iter().all(|r| r.pass);
        }
        let real = Realization::new(&op, spec.clone())?;
        let mut ratio: f64 = 0.0;
        let suite = regularity_suite(&op, lambda, spec.component)?;
        for (f, u) in suite.iter().zip(real.solve_many(lambda, &suite)?) {
            let h2 = hk_norm(&SpectralField { grid: op.grid.clone(), values: u, location: crate::grid::Location::Interior }, 2);
            ratio = ratio.max(h2 / l2(&op, f));
        }
        rows.push(RegularityRow { nt, nn, ratio });
    }
    let max = rows.iter().map(|r| r.ratio).fold(0.0, f64::max);
    let min = rows.iter().map(|r| r.ratio).fold(f64::INFINITY, f64::min);
    let growth = max / min;
    Ok(RegularityReport { rows, growth, elliptic, bounded: growth <= bound })
}
