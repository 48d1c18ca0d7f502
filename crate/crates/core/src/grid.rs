//! Periodic-in-x' strip grids, Fourier multipliers, Sobolev and Besov norms,
//! traces and the semigroup lifting.

use crate::error::{arg, Result};
use crate::linalg::{c64, C64};
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};
use std::cell::RefCell;
use std::f64::consts::PI;
use std::sync::Arc;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub dim: usize,
    pub periods: Vec<f64>,
    pub points_tangential: Vec<usize>,
    pub points_normal: usize,
    pub normal_extent: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Component {
    Bottom,
    Top,
}

impl Component {
    pub fn layer(self, g: &GridSpec) -> usize {
        match self {
            Component::Bottom => 0,
            Component::Top => g.nn() - 1,
        }
    }
    /// Orientation of the interior normal relative to +e_n.
    pub fn sign(self) -> f64 {
        match self {
            Component::Bottom => 1.0,
            Component::Top => -1.0,
        }
    }
}

impl GridSpec {
    pub fn new(period: f64, nt: usize, nn: usize, extent: f64) -> Result<Self> {
        let g = GridSpec {
            dim: 2,
            periods: vec![period],
            points_tangential: vec![nt],
            points_normal: nn,
            normal_extent: extent,
        };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<()> {
        if self.dim != 2 {
            return arg(format!("only dim = 2 is supported, got {}", self.dim));
        }
        if self.periods.len() != 1 || self.points_tangential.len() != 1 {
            return arg("dim = 2 needs exactly one tangential direction");
        }
        let nt = self.points_tangential[0];
        if nt < 8 || !nt.is_power_of_two() {
            return arg(format!("tangential points must be a power of two >= 8, got {nt}"));
        }
        if self.points_normal < 8 {
            return arg(format!("normal points must be >= 8, got {}", self.points_normal));
        }
        if !(self.normal_extent > 0.0) || !(self.periods[0] > 0.0) {
            return arg("period and normal extent must be positive");
        }
        Ok(())
    }

    pub fn nt(&self) -> usize {
        self.points_tangential[0]
    }
    pub fn nn(&self) -> usize {
        self.points_normal
    }
    pub fn len(&self) -> usize {
        self.nt() * self.nn()
    }
    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
    pub fn period(&self) -> f64 {
        self.periods[0]
    }
    pub fn extent(&self) -> f64 {
        self.normal_extent
    }
    /// Tangential spacing (boundary quadrature weight).
    pub fn ht(&self) -> f64 {
        self.period() / self.nt() as f64
    }
    /// Normal spacing.
    pub fn h(&self) -> f64 {
        self.extent() / (self.nn() - 1) as f64
    }
    pub fn x(&self, i: usize) -> f64 {
        i as f64 * self.ht()
    }
    pub fn xn(&self, j: usize) -> f64 {
        j as f64 * self.h()
    }
    pub fn idx(&self, i: usize, j: usize) -> usize {
        j * self.nt() + i
    }
    /// Signed integer wavenumber of FFT slot `i` (Nyquist counted positive).
    pub fn wavenumber(&self, i: usize) -> i64 {
        let n = self.nt();
        if i <= n / 2 {
            i as i64
        } else {
            i as i64 - n as i64
        }
    }
    pub fn xi(&self, i: usize) -> f64 {
        2.0 * PI * self.wavenumber(i) as f64 / self.period()
    }
    /// Frequency used for odd derivatives: the Nyquist mode is dropped.
    pub fn xi_deriv(&self, i: usize) -> f64 {
        if i == self.nt() / 2 {
            0.0
        } else {
            self.xi(i)
        }
    }
    pub fn slot_of(&self, k: i64) -> usize {
        let n = self.nt() as i64;
        (((k % n) + n) % n) as usize
    }
    /// Trapezoid weights in x_n.
    pub fn normal_weights(&self) -> Vec<f64> {
        let h = self.h();
        let mut w = vec![h; self.nn()];
        w[0] = 0.5 * h;
        w[self.nn() - 1] = 0.5 * h;
        w
    }
    pub fn with_resolution(&self, nt: usize, nn: usize) -> Result<Self> {
        GridSpec::new(self.period(), nt, nn, self.extent())
    }
}

pub fn bracket(xi: f64) -> f64 {
    (1.0 + xi * xi).sqrt()
}

thread_local! {
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

/// Unnormalized forward DFT in place.
pub fn fft(buf: &mut [C64]) {
    let plan = PLANNER.with(|p| p.borrow_mut().plan_fft_forward(buf.len()));
    plan.process(buf);
}

/// Inverse DFT in place, normalized by 1/N.
pub fn ifft(buf: &mut [C64]) {
    let plan = PLANNER.with(|p| p.borrow_mut().plan_fft_inverse(buf.len()));
    plan.process(buf);
    let s = 1.0 / buf.len() as f64;
    buf.iter_mut().for_each(|z| *z *= s);
}

/// Multiply every layer of length `nt` by `w(slot)` in Fourier space.
pub fn multiply_layers(values: &mut [C64], nt: usize, w: impl Fn(usize) -> C64) {
    for layer in values.chunks_mut(nt) {
        fft(layer);
        for (i, z) in layer.iter_mut().enumerate() {
            *z *= w(i);
        }
        ifft(layer);
    }
}

/// Spectral x'-derivative of every layer.
pub fn dt(g: &GridSpec, values: &[C64]) -> Vec<C64> {
    let mut out = values.to_vec();
    multiply_layers(&mut out, g.nt(), |i| c64(0.0, g.xi_deriv(i)));
    out
}

/// Dense matrix of the spectral x'-derivative (real antisymmetric).
pub fn dt_matrix(g: &GridSpec) -> nalgebra::DMatrix<f64> {
    let n = g.nt();
    let mut m = nalgebra::DMatrix::zeros(n, n);
    for c in 0..n {
        let mut e = vec![C64::new(0.0, 0.0); n];
        e[c] = c64(1.0, 0.0);
        let d = dt(g, &e);
        for r in 0..n {
            m[(r, c)] = d[r].re;
        }
    }
    m
}

/// Second-order x_n-derivative on a full grid field: centered inside,
/// one-sided at the two boundary layers.
pub fn dn(g: &GridSpec, u: &[C64]) -> Vec<C64> {
    let (nt, nn, h) = (g.nt(), g.nn(), g.h());
    let mut out = vec![c64(0.0, 0.0); u.len()];
    for i in 0..nt {
        let at = |j: usize| u[j * nt + i];
        out[i] = (-3.0 * at(0) + 4.0 * at(1) - at(2)) / (2.0 * h);
        for j in 1..nn - 1 {
            out[j * nt + i] = (at(j + 1) - at(j - 1)) / (2.0 * h);
        }
        let l = nn - 1;
        out[l * nt + i] = (3.0 * at(l) - 4.0 * at(l - 1) + at(l - 2)) / (2.0 * h);
    }
    out
}

/// Second x_n-derivative: centered inside, second-order one-sided at the ends.
pub fn dnn(g: &GridSpec, u: &[C64]) -> Vec<C64> {
    let (nt, nn, h) = (g.nt(), g.nn(), g.h());
    let h2 = h * h;
    let mut out = vec![c64(0.0, 0.0); u.len()];
    for i in 0..nt {
        let at = |j: usize| u[j * nt + i];
        out[i] = (2.0 * at(0) - 5.0 * at(1) + 4.0 * at(2) - at(3)) / h2;
        for j in 1..nn - 1 {
            out[j * nt + i] = (at(j + 1) - 2.0 * at(j) + at(j - 1)) / h2;
        }
        let l = nn - 1;
        out[l * nt + i] = (2.0 * at(l) - 5.0 * at(l - 1) + 4.0 * at(l - 2) - at(l - 3)) / h2;
    }
    out
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Location {
    Interior,
    Boundary,
}

#[derive(Clone, Debug)]
pub struct SpectralField {
    pub grid: GridSpec,
    pub values: Vec<C64>,
    pub location: Location,
}

impl SpectralField {
    pub fn interior(grid: &GridSpec, values: Vec<C64>) -> Result<Self> {
        if values.len() != grid.len() {
            return arg(format!("interior field needs {} values, got {}", grid.len(), values.len()));
        }
        Ok(SpectralField { grid: grid.clone(), values, location: Location::Interior })
    }

    pub fn boundary(grid: &GridSpec, values: Vec<C64>) -> Result<Self> {
        if values.len() != grid.nt() {
            return arg(format!("boundary field needs {} values, got {}", grid.nt(), values.len()));
        }
        Ok(SpectralField { grid: grid.clone(), values, location: Location::Boundary })
    }

    pub fn from_fn_interior(grid: &GridSpec, f: impl Fn(f64, f64) -> C64) -> Self {
        let mut v = Vec::with_capacity(grid.len());
        for j in 0..grid.nn() {
            for i in 0..grid.nt() {
                v.push(f(grid.x(i), grid.xn(j)));
            }
        }
        SpectralField { grid: grid.clone(), values: v, location: Location::Interior }
    }

    pub fn from_fn_boundary(grid: &GridSpec, f: impl Fn(f64) -> C64) -> Self {
        let v = (0..grid.nt()).map(|i| f(grid.x(i))).collect();
        SpectralField { grid: grid.clone(), values: v, location: Location::Boundary }
    }

    pub fn zeros_like(&self) -> Self {
        SpectralField { values: vec![c64(0.0, 0.0); self.values.len()], ..self.clone() }
    }

    fn layer_len(&self) -> usize {
        self.grid.nt()
    }
}

#[derive(Clone)]
pub struct FourierMultiplier {
    pub weight: Arc<dyn Fn(f64) -> C64 + Send + Sync>,
    pub order: f64,
}

impl std::fmt::Debug for FourierMultiplier {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "FourierMultiplier(order {})", self.order)
    }
}

impl FourierMultiplier {
    pub fn new(order: f64, w: impl Fn(f64) -> C64 + Send + Sync + 'static) -> Self {
        FourierMultiplier { weight: Arc::new(w), order }
    }
    pub fn identity() -> Self {
        Self::new(0.0, |_| c64(1.0, 0.0))
    }
    /// <xi>^s
    pub fn bessel(s: f64) -> Self {
        Self::new(s, move |xi| c64(bracket(xi).powf(s), 0.0))
    }
}

pub fn apply_multiplier(f: &SpectralField, m: &FourierMultiplier) -> Result<SpectralField> {
    let nt = f.layer_len();
    if f.values.len() % nt != 0 {
        return arg("field length is not a multiple of the tangential grid");
    }
    let mut out = f.clone();
    let g = &f.grid;
    multiply_layers(&mut out.values, nt, |i| (m.weight)(g.xi(i)));
    Ok(out)
}

fn layer_weights(f: &SpectralField) -> Vec<f64> {
    match f.location {
        Location::Boundary => vec![1.0],
        Location::Interior => f.grid.normal_weights(),
    }
}

/// ||<D'>^s f||_{L2} with Parseval on each layer and trapezoid weights in x_n.
pub fn sobolev_norm(f: &SpectralField, s: f64) -> f64 {
    let g = &f.grid;
    let nt = g.nt();
    let w = layer_weights(f);
    let mut total = 0.0;
    for (layer, wj) in f.values.chunks(nt).zip(w) {
        let mut buf = layer.to_vec();
        fft(&mut buf);
        let e: f64 = buf
            .iter()
            .enumerate()
            .map(|(i, z)| bracket(g.xi(i)).powf(2.0 * s) * z.norm_sqr())
            .sum();
        total += wj * g.ht() / nt as f64 * e;
    }
    total.sqrt()
}

/// Quadrature L_p norm (p = infinity gives the max).
pub fn lp_norm(f: &SpectralField, p: f64) -> f64 {
    let g = &f.grid;
    if p.is_infinite() {
        return f.values.iter().map(|z| z.norm()).fold(0.0, f64::max);
    }
    let w = layer_weights(f);
    let mut total = 0.0;
    for (layer, wj) in f.values.chunks(g.nt()).zip(w) {
        total += wj * g.ht() * layer.iter().map(|z| z.norm().powf(p)).sum::<f64>();
    }
    total.powf(1.0 / p)
}

/// Smooth dyadic partition of unity on the discrete frequency set.
#[derive(Clone, Debug)]
pub struct DyadicPartition {
    pub count: usize,
}

fn bump(t: f64) -> f64 {
    if t.abs() >= 1.0 {
        0.0
    } else {
        (0.5 * PI * t).cos().powi(2)
    }
}

impl DyadicPartition {
    /// J_max = log2(N/2) for N tangential points.
    pub fn for_grid(g: &GridSpec) -> Self {
        DyadicPartition { count: (g.nt() / 2).trailing_zeros() as usize }
    }

    fn raw(j: usize, xi: f64) -> f64 {
        if xi == 0.0 {
            return 0.0;
        }
        bump(xi.abs().log2() - j as f64)
    }

    /// phi_j(xi), j = 0..=count; the top block absorbs the tail.
    pub fn phi(&self, j: usize, xi: f64) -> f64 {
        let jm = self.count;
        let a = xi.abs();
        let low = |a: f64| if a <= 1.0 { 1.0 } else { bump(a.log2()) };
        match j {
            0 => low(a),
            j if j < jm => Self::raw(j, xi),
            j if j == jm => 1.0 - low(a) - (1..jm).map(|l| Self::raw(l, xi)).sum::<f64>(),
            _ => 0.0,
        }
    }

    pub fn block(&self, j: usize, f: &SpectralField) -> SpectralField {
        let mut out = f.clone();
        let g = &f.grid;
        multiply_layers(&mut out.values, g.nt(), |i| c64(self.phi(j, g.xi(i)), 0.0));
        out
    }
}

pub fn besov_norm(f: &SpectralField, s: f64, p: f64, q: f64, part: &DyadicPartition) -> Result<f64> {
    if p < 1.0 || q < 1.0 {
        return arg(format!("Besov exponents need p, q >= 1 (got p = {p}, q = {q})"));
    }
    let terms: Vec<f64> = (0..=part.count)
        .map(|j| 2f64.powf(s * j as f64) * lp_norm(&part.block(j, f), p))
        .collect();
    Ok(if q.is_infinite() {
        terms.iter().cloned().fold(0.0, f64::max)
    } else {
        terms.iter().map(|t| t.powf(q)).sum::<f64>().powf(1.0 / q)
    })
}

pub fn trace_gamma0(u: &SpectralField, comp: Component) -> Result<SpectralField> {
    if u.location != Location::Interior || u.values.len() != u.grid.len() {
        return arg("trace needs an interior field with boundary layers");
    }
    let nt = u.grid.nt();
    let j = comp.layer(&u.grid);
    SpectralField::boundary(&u.grid, u.values[j * nt..(j + 1) * nt].to_vec())
}

/// G(x', x_n) = (e^{-<D'> t} g)(x') with t the distance to the component.
pub fn lift_semigroup_from(g: &SpectralField, comp: Component) -> SpectralField {
    let grid = &g.grid;
    let nt = grid.nt();
    let mut hat = g.values.clone();
    fft(&mut hat);
    let mut values = Vec::with_capacity(grid.len());
    for j in 0..grid.nn() {
        let t = match comp {
            Component::Bottom => grid.xn(j),
            Component::Top => grid.extent() - grid.xn(j),
        };
        let mut layer: Vec<C64> = (0..nt).map(|i| hat[i] * (-bracket(grid.xi(i)) * t).exp()).collect();
        ifft(&mut layer);
        values.extend(layer);
    }
    SpectralField { grid: grid.clone(), values, location: Location::Interior }
}

pub fn lift_semigroup(g: &SpectralField) -> SpectralField {
    lift_semigroup_from(g, Component::Bottom)
}

/// Boundary H^s norm with the surface-measure weight applied for s < 0.
pub fn weighted_boundary_norm(u: &SpectralField, s: f64, kappa: &SpectralField) -> Result<f64> {
    if kappa.values.iter().any(|k| !(k.re > 0.0)) {
        return arg("kappa must be positive");
    }
    if u.values.len() != kappa.values.len() {
        return arg("kappa and field lengths differ");
    }
    if s >= 0.0 {
        return Ok(sobolev_norm(u, s));
    }
    let mut w = u.clone();
    for (z, k) in w.values.iter_mut().zip(&kappa.values) {
        *z *= k.re;
    }
    Ok(sobolev_norm(&w, s))
}

/// Discrete H^k norm (k <= 2) of an interior field: spectral in x',
/// second-order differences in x_n, trapezoid quadrature.
pub fn hk_norm(f: &SpectralField, k: usize) -> f64 {
    let g = &f.grid;
    let u = &f.values;
    let mut parts: Vec<Vec<C64>> = vec![u.clone()];
    if k >= 1 {
        parts.push(dt(g, u));
        parts.push(dn(g, u));
    }
    if k >= 2 {
        let ut = dt(g, u);
        parts.push(dt(g, &ut));
        let mixed = dn(g, &ut);
        parts.push(mixed.clone());
        parts.push(mixed);
        parts.push(dnn(g, u));
    }
    let w = g.normal_weights();
    let nt = g.nt();
    let mut total = 0.0;
    for p in &parts {
        for (idx, z) in p.iter().enumerate() {
            total += w[idx / nt] * g.ht() * z.norm_sqr();
        }
    }
    total.sqrt()
}

/// Discrete L2 inner product (v, u) over the strip with trapezoid weights.
pub fn inner_interior(g: &GridSpec, u: &[C64], v: &[C64]) -> C64 {
    let w = g.normal_weights();
    let nt = g.nt();
    u.iter().zip(v).enumerate().map(|(k, (a, b))| a * b.conj() * w[k / nt] * g.ht()).sum()
}
