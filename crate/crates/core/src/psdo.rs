//! Pseudodifferential operators with nonsmooth symbols in x-form on the
//! periodic tangential grid: quantization, symbol smoothing, order
//! reducers, Poisson and trace operators, chart sums.

use crate::error::{arg, Result};
use crate::grid::{bracket, dn, dnn, fft, DyadicPartition, GridSpec, Location, SpectralField};
use crate::linalg::{c64, fit_line, CMat, C64};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SymbolKind {
    /// applied layer by layer to interior fields
    Interior,
    Boundary,
}

/// p(x_i, xi_m) sampled on tangential nodes times discrete frequencies.
#[derive(Clone, Debug)]
pub struct SymbolField {
    pub grid: GridSpec,
    /// values[i * nt + slot]
    pub values: Vec<C64>,
    pub order: f64,
    pub delta: f64,
    pub tau: f64,
    pub kind: SymbolKind,
}

impl SymbolField {
    pub fn from_fn(grid: &GridSpec, order: f64, tau: f64, kind: SymbolKind, f: impl Fn(f64, f64) -> C64) -> Self {
        let nt = grid.nt();
        let mut values = Vec::with_capacity(nt * nt);
        for i in 0..nt {
            for s in 0..nt {
                values.push(f(grid.x(i), grid.xi(s)));
            }
        }
        SymbolField { grid: grid.clone(), values, order, delta: 0.0, tau, kind }
    }

    pub fn at(&self, i: usize, slot: usize) -> C64 {
        self.values[i * self.grid.nt() + slot]
    }

    pub fn zip_with(&self, other: &SymbolField, f: impl Fn(C64, C64) -> C64) -> Result<SymbolField> {
        if self.grid != other.grid {
            return arg("symbols live on different grids");
        }
        let mut out = self.clone();
        out.values = self.values.iter().zip(&other.values).map(|(a, b)| f(*a, *b)).collect();
        Ok(out)
    }

    /// max over x of |Delta_xi^alpha p| / <xi>^{m - alpha} for alpha = 0, 1, 2.
    pub fn estimate_constants(&self) -> [f64; 3] {
        let g = &self.grid;
        let nt = g.nt();
        let dxi = 2.0 * PI / g.period();
        let mut order: Vec<usize> = (0..nt).collect();
        order.sort_by(|a, b| g.xi(*a).partial_cmp(&g.xi(*b)).unwrap());
        let mut c = [0.0f64; 3];
        for i in 0..nt {
            let row: Vec<C64> = order.iter().map(|&s| self.at(i, s)).collect();
            let xs: Vec<f64> = order.iter().map(|&s| g.xi(s)).collect();
            for (m, v) in row.iter().enumerate() {
                c[0] = c[0].max(v.norm() / bracket(xs[m]).powf(self.order));
            }
            for m in 0..nt - 1 {
                let d1 = (row[m + 1] - row[m]).norm() / dxi;
                c[1] = c[1].max(d1 / bracket(xs[m]).powf(self.order - 1.0));
            }
            for m in 1..nt - 1 {
                let d2 = (row[m + 1] - row[m] * 2.0 + row[m - 1]).norm() / (dxi * dxi);
                c[2] = c[2].max(d2 / bracket(xs[m]).powf(self.order - 2.0));
            }
        }
        c
    }
}

/// Built-in symbol families for JSON configs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SymbolSpec {
    /// <xi>^order
    Bessel { order: f64 },
    /// (1 + amp |sin x|^exponent) <xi>^order
    RoughAmplitude { amp: f64, exponent: f64, order: f64 },
    /// (1 + amp cos x) <xi>^order
    SmoothAmplitude { amp: f64, order: f64 },
    /// (1 + amp |sin x|^exponent) i xi
    Derivative { amp: f64, exponent: f64 },
    /// sampled values, row-major over (x node, frequency slot)
    Raw { order: f64, tau: f64, re: Vec<f64>, im: Vec<f64> },
}

impl SymbolSpec {
    pub fn build(&self, g: &GridSpec, kind: SymbolKind) -> Result<SymbolField> {
        let r = |v: f64| c64(v, 0.0);
        Ok(match self.clone() {
            SymbolSpec::Bessel { order } => SymbolField::from_fn(g, order, f64::INFINITY, kind, move |_, xi| r(bracket(xi).powf(order))),
            SymbolSpec::RoughAmplitude { amp, exponent, order } => {
                SymbolField::from_fn(g, order, exponent, kind, move |x, xi| r((1.0 + amp * x.sin().abs().powf(exponent)) * bracket(xi).powf(order)))
            }
            SymbolSpec::SmoothAmplitude { amp, order } => {
                SymbolField::from_fn(g, order, f64::INFINITY, kind, move |x, xi| r((1.0 + amp * x.cos()) * bracket(xi).powf(order)))
            }
            SymbolSpec::Derivative { amp, exponent } => {
                SymbolField::from_fn(g, 1.0, exponent, kind, move |x, xi| c64(0.0, xi) * (1.0 + amp * x.sin().abs().powf(exponent)))
            }
            SymbolSpec::Raw { order, tau, re, im } => {
                let n = g.nt() * g.nt();
                if re.len() != n || im.len() != n {
                    return arg(format!("raw symbol needs {n} samples"));
                }
                SymbolField { grid: g.clone(), values: re.iter().zip(&im).map(|(a, b)| c64(*a, *b)).collect(), order, delta: 0.0, tau, kind }
            }
        })
    }
}

fn phase_table(nt: usize) -> Vec<C64> {
    (0..nt).map(|q| C64::from_polar(1.0, 2.0 * PI * q as f64 / nt as f64)).collect()
}

/// x-form quantization of one layer.
fn op_layer(p: &SymbolField, layer: &[C64], phase: &[C64]) -> Vec<C64> {
    let nt = layer.len();
    let mut hat = layer.to_vec();
    fft(&mut hat);
    (0..nt)
        .map(|i| {
            let row = &p.values[i * nt..(i + 1) * nt];
            let mut s = c64(0.0, 0.0);
            for m in 0..nt {
                s += phase[(i * m) % nt] * row[m] * hat[m];
            }
            s / nt as f64
        })
        .collect()
}

/// p(x, D) u = sum over frequencies of e^{i x xi} p(x, xi) u^(xi), per layer.
pub fn op_apply(p: &SymbolField, u: &SpectralField) -> Result<SpectralField> {
    if p.grid.nt() != u.grid.nt() || (p.grid.period() - u.grid.period()).abs() > 1e-12 {
        return arg("symbol and field grids differ");
    }
    match (p.kind, u.location) {
        (SymbolKind::Boundary, Location::Interior) => return arg("boundary symbol applied to an interior field"),
        (SymbolKind::Interior, Location::Boundary) => return arg("interior symbol applied to a boundary field"),
        _ => {}
    }
    let phase = phase_table(p.grid.nt());
    let mut out = u.clone();
    out.values = u.values.chunks(p.grid.nt()).flat_map(|l| op_layer(p, l, &phase)).collect();
    Ok(out)
}

/// Dense matrix of p(x, D) on one layer.
pub fn op_matrix(p: &SymbolField) -> CMat {
    let nt = p.grid.nt();
    let phase = phase_table(nt);
    let mut m = CMat::zeros(nt, nt);
    let mut e = vec![c64(0.0, 0.0); nt];
    for c in 0..nt {
        e[c] = c64(1.0, 0.0);
        for (r, v) in op_layer(p, &e, &phase).into_iter().enumerate() {
            m[(r, c)] = v;
        }
        e[c] = c64(0.0, 0.0);
    }
    m
}

/// p = p_sharp + p_flat with p_sharp = sum_j phi_j(xi) (mollified p)(x, xi), the
/// mollifier at block j keeping x-frequencies below 2^{j delta}.
pub fn symbol_smooth(p: &SymbolField, delta: f64) -> Result<(SymbolField, SymbolField)> {
    if !(delta > 0.0 && delta < 1.0) {
        return arg(format!("delta must lie in (0, 1), got {delta}"));
    }
    if !(p.tau > 0.0) {
        return arg("symbol smoothing needs tau > 0");
    }
    let g = &p.grid;
    let nt = g.nt();
    let part = DyadicPartition::for_grid(g);
    let mut sharp = p.clone();
    for m in 0..nt {
        let xi = g.xi(m);
        let mut col: Vec<C64> = (0..nt).map(|i| p.at(i, m)).collect();
        fft(&mut col);
        let mut acc = vec![c64(0.0, 0.0); nt];
        for j in 0..=part.count {
            let w = part.phi(j, xi);
            if w == 0.0 {
                continue;
            }
            let scale = 2f64.powf(-(j as f64) * delta);
            let mut c: Vec<C64> = col.iter().enumerate().map(|(q, z)| z * part.phi(0, g.xi(q) * scale)).collect();
            crate::grid::ifft(&mut c);
            for i in 0..nt {
                acc[i] += c[i] * w;
            }
        }
        for i in 0..nt {
            sharp.values[i * nt + m] = acc[i];
        }
    }
    sharp.delta = delta;
    let mut flat = p.clone();
    flat.values = p.values.iter().zip(&sharp.values).map(|(a, b)| a - b).collect();
    flat.order = p.order - p.tau * delta;
    flat.delta = delta;
    Ok((sharp, flat))
}

/// Spectral norm of `m` restricted to Fourier inputs with 2^{j-1} < |xi| < 2^{j+1}.
pub fn band_norm(m: &CMat, g: &GridSpec, j: usize) -> f64 {
    let nt = g.nt();
    let lo = if j == 0 { -1.0 } else { 2f64.powi(j as i32 - 1) };
    let hi = 2f64.powi(j as i32 + 1);
    let slots: Vec<usize> = (0..nt).filter(|&s| g.xi(s).abs() > lo && g.xi(s).abs() < hi).collect();
    if slots.is_empty() {
        return 0.0;
    }
    let basis = CMat::from_fn(nt, slots.len(), |r, c| {
        let k = g.wavenumber(slots[c]) as f64;
        C64::from_polar(1.0 / (nt as f64).sqrt(), 2.0 * PI * k * r as f64 / nt as f64)
    });
    crate::linalg::spectral_norm(&(m * basis))
}

/// Band norm of p(x, D) itself: p(x, D) e^{ikx} = e^{ikx} p(x, xi_k).
pub fn symbol_band_norm(p: &SymbolField, j: usize) -> f64 {
    let g = &p.grid;
    let nt = g.nt();
    let lo = if j == 0 { -1.0 } else { 2f64.powi(j as i32 - 1) };
    let hi = 2f64.powi(j as i32 + 1);
    let slots: Vec<usize> = (0..nt).filter(|&s| g.xi(s).abs() > lo && g.xi(s).abs() < hi).collect();
    if slots.is_empty() {
        return 0.0;
    }
    let m = CMat::from_fn(nt, slots.len(), |r, c| {
        let k = g.wavenumber(slots[c]) as f64;
        C64::from_polar(1.0 / (nt as f64).sqrt(), 2.0 * PI * k * r as f64 / nt as f64) * p.at(r, slots[c])
    });
    crate::linalg::spectral_norm(&m)
}

pub fn symbol_band_fit(p: &SymbolField, bands: &[usize]) -> BandFit {
    let norms: Vec<f64> = bands.iter().map(|&j| symbol_band_norm(p, j)).collect();
    let x: Vec<f64> = bands.iter().map(|&j| j as f64).collect();
    let y: Vec<f64> = norms.iter().map(|v| v.max(1e-300).log2()).collect();
    BandFit { bands: bands.to_vec(), norms, order: fit_line(&x, &y).0 }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BandFit {
    pub bands: Vec<usize>,
    pub norms: Vec<f64>,
    /// fitted exponent of norm against 2^j
    pub order: f64,
}

/// Band norms of `m` over `bands` and the fitted order (log2 slope).
pub fn band_fit(m: &CMat, g: &GridSpec, bands: &[usize]) -> BandFit {
    let norms: Vec<f64> = bands.iter().map(|&j| band_norm(m, g, j)).collect();
    let x: Vec<f64> = bands.iter().map(|&j| j as f64).collect();
    let y: Vec<f64> = norms.iter().map(|v| v.max(1e-300).log2()).collect();
    BandFit { bands: bands.to_vec(), norms, order: fit_line(&x, &y).0 }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OrderReducer {
    /// (<D'> - d_n)^r on the strip with forward differences and zero beyond the top
    MinusPlus { r: i32 },
    /// <D'>^s on boundary fields
    Boundary { s: f64 },
}

pub fn order_reduce(red: OrderReducer, u: &SpectralField) -> Result<SpectralField> {
    match red {
        OrderReducer::Boundary { s } => {
            if u.location != Location::Boundary {
                return arg("boundary order reducer needs a boundary field");
            }
            crate::grid::apply_multiplier(u, &crate::grid::FourierMultiplier::bessel(s))
        }
        OrderReducer::MinusPlus { r } => {
            if u.location != Location::Interior {
                return arg("interior order reducer needs an interior field");
            }
            if r == 0 {
                return Ok(u.clone());
            }
            let g = &u.grid;
            let (nt, nn, h) = (g.nt(), g.nn(), g.h());
            let mut hat = u.values.clone();
            for layer in hat.chunks_mut(nt) {
                fft(layer);
            }
            for s in 0..nt {
                let b = bracket(g.xi(s));
                let mut col: Vec<C64> = (0..nn).map(|j| hat[j * nt + s]).collect();
                for _ in 0..r.unsigned_abs() {
                    if r > 0 {
                        // (b + 1/h) u_j - u_{j+1}/h
                        for j in 0..nn {
                            let next = if j + 1 < nn { col[j + 1] } else { c64(0.0, 0.0) };
                            col[j] = col[j] * (b + 1.0 / h) - next / h;
                        }
                    } else {
                        for j in (0..nn).rev() {
                            let next = if j + 1 < nn { col[j + 1] } else { c64(0.0, 0.0) };
                            col[j] = (col[j] + next / h) / (b + 1.0 / h);
                        }
                    }
                }
                for j in 0..nn {
                    hat[j * nt + s] = col[j];
                }
            }
            let mut out = u.clone();
            for (dst, layer) in out.values.chunks_mut(nt).zip(hat.chunks(nt)) {
                dst.copy_from_slice(layer);
                crate::grid::ifft(dst);
            }
            Ok(out)
        }
    }
}

/// k(x', xi', y_n) sampled over tangential nodes, frequencies and normal layers.
#[derive(Clone, Debug)]
pub struct PoissonSymbolKernel {
    pub grid: GridSpec,
    /// values[(j * nt + i) * nt + slot]
    pub values: Vec<C64>,
    pub order: f64,
}

impl PoissonSymbolKernel {
    pub fn from_fn(grid: &GridSpec, order: f64, f: impl Fn(f64, f64, f64) -> C64) -> Self {
        let nt = grid.nt();
        let mut values = Vec::with_capacity(grid.len() * nt);
        for j in 0..grid.nn() {
            for i in 0..nt {
                for s in 0..nt {
                    values.push(f(grid.x(i), grid.xi(s), grid.xn(j)));
                }
            }
        }
        PoissonSymbolKernel { grid: grid.clone(), values, order }
    }

    fn layer(&self, j: usize) -> SymbolField {
        let nt = self.grid.nt();
        SymbolField {
            grid: self.grid.clone(),
            values: self.values[j * nt * nt..(j + 1) * nt * nt].to_vec(),
            order: self.order,
            delta: 0.0,
            tau: f64::INFINITY,
            kind: SymbolKind::Boundary,
        }
    }

    /// max over x', xi' of ||y^l d_y^{l'} k||_{L2(0, L)} / <xi'>^{d + 1/2 - l + l'}.
    pub fn decay_constants(&self) -> [[f64; 2]; 2] {
        let g = &self.grid;
        let (nt, nn) = (g.nt(), g.nn());
        let w = g.normal_weights();
        let mut c = [[0.0f64; 2]; 2];
        for i in 0..nt {
            for s in 0..nt {
                let prof: Vec<C64> = (0..nn).map(|j| self.values[(j * nt + i) * nt + s]).collect();
                let mut tmp = SpectralField { grid: g.clone(), values: vec![c64(0.0, 0.0); g.len()], location: Location::Interior };
                for j in 0..nn {
                    tmp.values[j * nt] = prof[j];
                }
                let dprof = dn(g, &tmp.values);
                for l in 0..2 {
                    for lp in 0..2 {
                        let e: f64 = (0..nn)
                            .map(|j| {
                                let v = if lp == 0 { prof[j] } else { dprof[j * nt] };
                                w[j] * (g.xn(j).powi(l as i32) * v.norm()).powi(2)
                            })
                            .sum::<f64>()
                            .sqrt();
                        let ex = self.order + 0.5 - l as f64 + lp as f64;
                        c[l][lp] = c[l][lp].max(e / bracket(g.xi(s)).powf(ex));
                    }
                }
            }
        }
        c
    }
}

/// k(x', D') v layer by layer in x_n.
pub fn poisson_apply(k: &PoissonSymbolKernel, v: &SpectralField) -> Result<SpectralField> {
    if v.location != Location::Boundary || v.grid.nt() != k.grid.nt() {
        return arg("Poisson operator acts on boundary fields of the kernel grid");
    }
    let phase = phase_table(k.grid.nt());
    let values = (0..k.grid.nn()).flat_map(|j| op_layer(&k.layer(j), &v.values, &phase)).collect();
    SpectralField::interior(&k.grid, values)
}

/// sum_j s_j(x', D') gamma_j f + integral over y_n of t0(x', xi', y_n) f(xi', y_n).
#[derive(Clone, Debug, Default)]
pub struct TraceSpec {
    pub s: Vec<SymbolField>,
    pub integral: Option<PoissonSymbolKernel>,
}

pub fn trace_apply(t: &TraceSpec, f: &SpectralField) -> Result<SpectralField> {
    let g = &f.grid;
    if f.location != Location::Interior {
        return arg("trace operators act on interior fields");
    }
    if t.s.len() > 3 {
        return arg(format!("class {} needs more normal derivatives than the grid provides", t.s.len()));
    }
    let nt = g.nt();
    let phase = phase_table(nt);
    let derivs = [f.values.clone(), dn(g, &f.values), dnn(g, &f.values)];
    let mut out = vec![c64(0.0, 0.0); nt];
    for (j, sj) in t.s.iter().enumerate() {
        let r = op_layer(sj, &derivs[j][..nt], &phase);
        out.iter_mut().zip(r).for_each(|(a, b)| *a += b);
    }
    if let Some(k) = &t.integral {
        let w = g.normal_weights();
        for j in 0..g.nn() {
            let r = op_layer(&k.layer(j), &f.values[j * nt..(j + 1) * nt], &phase);
            out.iter_mut().zip(r).for_each(|(a, b)| *a += b * w[j]);
        }
    }
    SpectralField::boundary(g, out)
}

#[derive(Clone, Debug)]
pub enum Chart {
    Identity,
    /// the surface-measure weighted variant: kappa on the way in, 1/kappa out
    Tilde(Vec<f64>),
}

#[derive(Clone, Debug)]
pub struct ChartPiece {
    pub psi: Vec<f64>,
    pub phi: Vec<f64>,
    pub symbol: SymbolField,
    pub chart: Chart,
}

/// sum_j psi_j F_j^{-1,*} p_j(x', D') F_j^* phi_j u.
pub fn chart_boundary_psdo(pieces: &[ChartPiece], u: &SpectralField) -> Result<SpectralField> {
    let nt = u.grid.nt();
    if u.location != Location::Boundary {
        return arg("chart sums act on boundary fields");
    }
    let deficit = (0..nt).map(|i| (pieces.iter().map(|p| p.phi[i]).sum::<f64>() - 1.0).abs()).fold(0.0, f64::max);
    if deficit > 1e-8 {
        return arg(format!("partition of unity deficit {deficit:.2e}"));
    }
    let mut out = vec![c64(0.0, 0.0); nt];
    for p in pieces {
        let mut v = u.clone();
        for i in 0..nt {
            v.values[i] *= p.phi[i];
            if let Chart::Tilde(k) = &p.chart {
                v.values[i] *= k[i];
            }
        }
        let w = op_apply(&p.symbol, &v)?;
        for i in 0..nt {
            let mut z = w.values[i] * p.psi[i];
            if let Chart::Tilde(k) = &p.chart {
                z /= k[i];
            }
            out[i] += z;
        }
    }
    SpectralField::boundary(&u.grid, out)
}

/// Two overlapping raised-cosine charts on the circle with psi = 1 on supp phi.
pub fn two_chart_partition(g: &GridSpec) -> [(Vec<f64>, Vec<f64>); 2] {
    let nt = g.nt();
    let phi0: Vec<f64> = (0..nt).map(|i| (PI * g.x(i) / g.period()).cos().powi(2)).collect();
    let phi1: Vec<f64> = phi0.iter().map(|v| 1.0 - v).collect();
    [(vec![1.0; nt], phi0), (vec![1.0; nt], phi1)]
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CompositionReport {
    pub fit: BandFit,
    pub nominal_order: f64,
    pub theta: f64,
    pub pass: bool,
}

/// Measured order of p1(x,D) p2(x,D) - (p1 p2)(x,D) on dyadic bands;
/// passes when it lies below m1 + m2 - theta within 20 percent of theta.
pub fn composition_remainder(p1: &SymbolField, p2: &SymbolField, theta: f64, bands: &[usize]) -> Result<CompositionReport> {
    let tau = p1.tau.min(p2.tau);
    if !(theta > 0.0 && theta < tau.min(1.0) + 1e-12) {
        return arg(format!("theta = {theta} must lie in (0, min(tau, 1)]"));
    }
    let prod = p1.zip_with(p2, |a, b| a * b)?;
    let m = op_matrix(p1) * op_matrix(p2) - op_matrix(&prod);
    let fit = band_fit(&m, &p1.grid, bands);
    let nominal = p1.order + p2.order;
    let pass = fit.order <= nominal - 0.8 * theta;
    Ok(CompositionReport { fit, nominal_order: nominal, theta, pass })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{apply_multiplier, dt, hk_norm, lift_semigroup, FourierMultiplier};

    fn g(nt: usize) -> GridSpec {
        GridSpec::new(2.0 * PI, nt, 17, 1.0).unwrap()
    }

    fn bfield(g: &GridSpec) -> SpectralField {
        SpectralField::from_fn_boundary(g, |x| c64(x.sin() + 0.3 * (3.0 * x).cos(), 0.2 * (2.0 * x).sin()))
    }

    #[test]
    fn quantization_basics() {
        let g = g(32);
        let u = bfield(&g);
        let one = SymbolField::from_fn(&g, 0.0, 1.0, SymbolKind::Boundary, |_, _| c64(1.0, 0.0));
        let v = op_apply(&one, &u).unwrap();
        assert!(v.values.iter().zip(&u.values).all(|(a, b)| (a - b).norm() < 1e-12));
        let p = SymbolSpec::Bessel { order: 1.5 }.build(&g, SymbolKind::Boundary).unwrap();
        let m = apply_multiplier(&u, &FourierMultiplier::bessel(1.5)).unwrap();
        assert!(op_apply(&p, &u).unwrap().values.iter().zip(&m.values).all(|(a, b)| (a - b).norm() < 1e-12));
        let a = |x: f64| 1.0 + 0.5 * x.cos();
        let pd = SymbolField::from_fn(&g, 1.0, 1.0, SymbolKind::Boundary, |x, xi| c64(0.0, xi) * a(x));
        let du = dt(&g, &u.values);
        let w = op_apply(&pd, &u).unwrap();
        for i in 0..32 {
            assert!((w.values[i] - du[i] * a(g.x(i))).norm() < 1e-10);
        }
        let inter = SymbolField { kind: SymbolKind::Interior, ..p };
        assert!(op_apply(&inter, &u).is_err());
    }

    #[test]
    fn linearity() {
        let g = g(16);
        let p = SymbolSpec::RoughAmplitude { amp: 0.3, exponent: 0.5, order: 1.0 }.build(&g, SymbolKind::Boundary).unwrap();
        let u = bfield(&g);
        let v = SpectralField::from_fn_boundary(&g, |x| c64(x.cos(), 1.0));
        let a = c64(0.7, -1.2);
        let mut s = u.clone();
        s.values = u.values.iter().zip(&v.values).map(|(x, y)| x * a + y).collect();
        let lhs = op_apply(&p, &s).unwrap();
        let (pu, pv) = (op_apply(&p, &u).unwrap(), op_apply(&p, &v).unwrap());
        assert!((0..16).all(|i| (lhs.values[i] - pu.values[i] * a - pv.values[i]).norm() < 1e-12));
    }

    #[test]
    fn smoothing_reconstructs_and_controls() {
        let g = g(64);
        let rough = SymbolSpec::RoughAmplitude { amp: 0.5, exponent: 0.375, order: 1.0 }.build(&g, SymbolKind::Boundary).unwrap();
        let (s, f) = symbol_smooth(&rough, 0.5).unwrap();
        assert!(rough.values.iter().zip(s.values.iter().zip(&f.values)).all(|(p, (a, b))| (a + b - p).norm() < 1e-12));
        let smooth = SymbolSpec::SmoothAmplitude { amp: 0.3, order: 1.0 }.build(&g, SymbolKind::Boundary).unwrap();
        let (_, f) = symbol_smooth(&smooth, 0.5).unwrap();
        assert!(f.values.iter().all(|z| z.norm() < 1e-12));
        let xind = SymbolSpec::Bessel { order: 1.0 }.build(&g, SymbolKind::Boundary).unwrap();
        let xind = SymbolField { tau: 1.0, ..xind };
        let (_, f) = symbol_smooth(&xind, 0.3).unwrap();
        assert!(f.values.iter().all(|z| z.norm() < 1e-12));
        assert!(symbol_smooth(&rough, 1.0).is_err());
        assert!(symbol_smooth(&rough, 0.0).is_err());
    }

    #[test]
    fn smoothed_symbol_estimates() {
        let g = g(64);
        let rough = SymbolSpec::RoughAmplitude { amp: 0.5, exponent: 0.375, order: 1.0 }.build(&g, SymbolKind::Boundary).unwrap();
        let (s, _) = symbol_smooth(&rough, 0.5).unwrap();
        let c = s.estimate_constants();
        assert!(c.iter().all(|v| v.is_finite() && *v < 10.0), "{c:?}");
    }

    #[test]
    fn order_reducers() {
        let gr = g(16);
        let u = bfield(&gr);
        let v = order_reduce(OrderReducer::Boundary { s: 0.0 }, &u).unwrap();
        assert!(v.values.iter().zip(&u.values).all(|(a, b)| (a - b).norm() < 1e-14));
        let w = order_reduce(OrderReducer::Boundary { s: -0.7 }, &order_reduce(OrderReducer::Boundary { s: 0.7 }, &u).unwrap()).unwrap();
        assert!(w.values.iter().zip(&u.values).all(|(a, b)| (a - b).norm() < 1e-12));
        let f = SpectralField::from_fn_interior(&gr, |x, y| c64(x.cos() * (1.0 - y) * y, y));
        let id = order_reduce(OrderReducer::MinusPlus { r: 0 }, &f).unwrap();
        assert_eq!(id.values, f.values);
        let back = order_reduce(OrderReducer::MinusPlus { r: -2 }, &order_reduce(OrderReducer::MinusPlus { r: 2 }, &f).unwrap()).unwrap();
        assert!(back.values.iter().zip(&f.values).all(|(a, b)| (a - b).norm() < 1e-8));
        let mut ratios = vec![];
        for k in 1..5 {
            let f = SpectralField::from_fn_interior(&gr, |x, y| c64((k as f64 * x).sin() * (PI * y).sin() * y, 0.0));
            let l2 = order_reduce(OrderReducer::MinusPlus { r: 2 }, &f).unwrap();
            ratios.push(hk_norm(&l2, 0) / hk_norm(&f, 2));
        }
        assert!(ratios.iter().all(|r| *r > 0.1 && *r < 10.0), "{ratios:?}");
    }

    #[test]
    fn poisson_kernels() {
        let gr = g(16);
        let v = bfield(&gr);
        let k = PoissonSymbolKernel::from_fn(&gr, -0.5, |_, xi, y| c64((-bracket(xi) * y).exp(), 0.0));
        let out = poisson_apply(&k, &v).unwrap();
        let lift = lift_semigroup(&v);
        assert!(out.values.iter().zip(&lift.values).all(|(a, b)| (a - b).norm() < 1e-12));
        let a = |x: f64| 1.0 + 0.3 * x.sin().abs().powf(1.4);
        let ka = PoissonSymbolKernel::from_fn(&gr, -0.5, |x, xi, y| c64(a(x) * (-bracket(xi) * y).exp(), 0.0));
        let outa = poisson_apply(&ka, &v).unwrap();
        for idx in 0..gr.len() {
            assert!((outa.values[idx] - lift.values[idx] * a(gr.x(idx % 16))).norm() < 1e-12);
        }
        let fine = GridSpec::new(2.0 * PI, 16, 257, 1.0).unwrap();
        let vf = bfield(&fine);
        let ky = PoissonSymbolKernel::from_fn(&fine, -1.5, |_, xi, y| c64(y * (-bracket(xi) * y).exp(), 0.0));
        let u = poisson_apply(&ky, &vf).unwrap();
        assert!(u.values[..16].iter().all(|z| z.norm() < 1e-14));
        let d = dn(&fine, &u.values);
        assert!((0..16).all(|i| (d[i] - vf.values[i]).norm() < 1e-3));
        let c = k.decay_constants();
        assert!(c.iter().flatten().all(|v| v.is_finite() && *v < 5.0), "{c:?}");
    }

    #[test]
    fn traces() {
        let gr = GridSpec::new(2.0 * PI, 16, 129, 1.0).unwrap();
        let f = SpectralField::from_fn_interior(&gr, |x, y| c64(x.cos() + y * x.sin(), y * y));
        let one = SymbolField::from_fn(&gr, 0.0, 1.0, SymbolKind::Boundary, |_, _| c64(1.0, 0.0));
        let zero = SymbolField::from_fn(&gr, 0.0, 1.0, SymbolKind::Boundary, |_, _| c64(0.0, 0.0));
        let t0 = trace_apply(&TraceSpec { s: vec![one.clone()], integral: None }, &f).unwrap();
        assert!(t0.values.iter().zip(&f.values[..16]).all(|(a, b)| (a - b).norm() < 1e-14));
        let c = 0.4;
        let s1 = TraceSpec { s: vec![SymbolField::from_fn(&gr, 1.0, 1.0, SymbolKind::Boundary, |_, xi| c64(c * xi, 0.0)), one.clone()], integral: None };
        let t1 = trace_apply(&s1, &f).unwrap();
        for i in 0..16 {
            let x = gr.x(i);
            // gamma_1 f = sin x, D' gamma_0 f = -i d_x cos x = i sin x
            let want = c64(x.sin(), 0.0) + c64(0.0, c * x.sin());
            assert!((t1.values[i] - want).norm() < 1e-8);
        }
        let k = PoissonSymbolKernel::from_fn(&gr, -0.5, |_, xi, y| c64((-bracket(xi) * y).exp(), 0.0));
        let ti = trace_apply(&TraceSpec { s: vec![zero], integral: Some(k) }, &SpectralField::from_fn_interior(&gr, |x, _| c64(x.cos(), 0.0))).unwrap();
        let b = bracket(1.0);
        let want = (1.0 - (-b).exp()) / b;
        for i in 0..16 {
            assert!((ti.values[i] - c64(gr.x(i).cos() * want, 0.0)).norm() < 1e-4);
        }
        assert!(trace_apply(&TraceSpec { s: vec![one.clone(), one.clone(), one.clone(), one], integral: None }, &f).is_err());
    }

    #[test]
    fn chart_sums() {
        let gr = g(32);
        let u = bfield(&gr);
        let p = SymbolSpec::Bessel { order: 1.0 }.build(&gr, SymbolKind::Boundary).unwrap();
        let single = [ChartPiece { psi: vec![1.0; 32], phi: vec![1.0; 32], symbol: p.clone(), chart: Chart::Identity }];
        let a = chart_boundary_psdo(&single, &u).unwrap();
        let m = apply_multiplier(&u, &FourierMultiplier::bessel(1.0)).unwrap();
        assert!(a.values.iter().zip(&m.values).all(|(x, y)| (x - y).norm() < 1e-12));
        let [(s0, f0), (s1, f1)] = two_chart_partition(&gr);
        let two = [
            ChartPiece { psi: s0, phi: f0, symbol: p.clone(), chart: Chart::Identity },
            ChartPiece { psi: s1, phi: f1, symbol: p.clone(), chart: Chart::Tilde(vec![1.0; 32]) },
        ];
        let b = chart_boundary_psdo(&two, &u).unwrap();
        assert!(b.values.iter().zip(&a.values).all(|(x, y)| (x - y).norm() < 1e-10));
        let bad = [ChartPiece { psi: vec![1.0; 32], phi: vec![0.5; 32], symbol: p, chart: Chart::Identity }];
        assert!(chart_boundary_psdo(&bad, &u).is_err());
    }

    #[test]
    fn composition() {
        let gr = g(256);
        let a = SymbolSpec::Bessel { order: 1.0 }.build(&gr, SymbolKind::Boundary).unwrap();
        let a = SymbolField { tau: 1.0, ..a };
        let b = SymbolField { tau: 1.0, ..SymbolSpec::Bessel { order: 0.5 }.build(&gr, SymbolKind::Boundary).unwrap() };
        let r = composition_remainder(&a, &b, 0.5, &[2, 3, 4, 5, 6]).unwrap();
        assert!(r.fit.norms.iter().all(|v| *v < 1e-10));
        let p1 = SymbolSpec::Derivative { amp: 0.3, exponent: 1.4 }.build(&gr, SymbolKind::Boundary).unwrap();
        let p2 = SymbolField { tau: 1.0, ..SymbolField::from_fn(&gr, 1.0, 1.0, SymbolKind::Boundary, |_, xi| c64(0.0, xi)) };
        let r = composition_remainder(&p1, &p2, 1.0, &[2, 3, 4, 5, 6]).unwrap();
        assert!(r.pass, "{r:?}");
    }
}
