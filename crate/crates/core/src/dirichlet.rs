//! Dirichlet resolvent, Poisson operator, the frozen-coefficient parametrix
//! and decay measurements along spectral rays.

use crate::blocktri::{BlockLu, BlockTri};
use crate::elliptic::{symbol_sector_angle, EllipticOperator};
use crate::error::{arg, Result};
use crate::grid::{fft, ifft, Component, Location, SpectralField};
use crate::linalg::{c64, fit_line, C64};
use serde::{Deserialize, Serialize};
use std::sync::Arc;

/// Replace the boundary rows by the identity and shift interior rows by -lambda W.
pub(crate) fn dirichlet_matrix(k: &BlockTri, w_layers: &[Vec<f64>], lambda: C64) -> BlockTri {
    let mut m = k.clone();
    let nb = m.nb();
    let size = m.m;
    for j in [0, nb - 1] {
        m.diag[j] = crate::linalg::eye(size);
        m.lower[j].fill(c64(0.0, 0.0));
        m.upper[j].fill(c64(0.0, 0.0));
    }
    for j in 1..nb - 1 {
        for p in 0..size {
            m.diag[j][(p, p)] -= lambda * w_layers[j][p];
        }
    }
    m
}

fn weight_layers(op: &EllipticOperator) -> Vec<Vec<f64>> {
    op.weights.chunks(op.grid.nt()).map(|c| c.to_vec()).collect()
}

/// Factorized (A_gamma - lambda), or (A'_gamma - conj lambda) when `adjoint`.
#[derive(Clone, Debug)]
pub struct ResolventHandle {
    pub lambda: C64,
    pub adjoint: bool,
    op: Arc<EllipticOperator>,
    lu: BlockLu,
}

impl ResolventHandle {
    pub fn new(op: &Arc<EllipticOperator>, lambda: C64, adjoint: bool) -> Result<Self> {
        let (k, l) = if adjoint { (&op.kh, lambda.conj()) } else { (&op.k, lambda) };
        let lu = dirichlet_matrix(k, &weight_layers(op), l).factor("Dirichlet problem")?;
        Ok(ResolventHandle { lambda, adjoint, op: op.clone(), lu })
    }

    pub fn op(&self) -> &Arc<EllipticOperator> {
        &self.op
    }

    pub fn cond(&self) -> f64 {
        self.lu.cond
    }

    /// Solve (A - lambda) u = f on interior rows with Dirichlet data.
    pub fn solve_bvp(&self, f: Option<&[C64]>, bottom: Option<&[C64]>, top: Option<&[C64]>) -> Vec<C64> {
        let g = &self.op.grid;
        let (nt, n) = (g.nt(), g.len());
        let mut rhs = vec![c64(0.0, 0.0); n];
        if let Some(f) = f {
            for k in nt..n - nt {
                rhs[k] = f[k] * self.op.weights[k];
            }
        }
        if let Some(b) = bottom {
            rhs[..nt].copy_from_slice(b);
        }
        if let Some(t) = top {
            rhs[n - nt..].copy_from_slice(t);
        }
        self.lu.solve(&rhs)
    }

    /// R(lambda) f
    pub fn apply(&self, f: &[C64]) -> Vec<C64> {
        self.solve_bvp(Some(f), None, None)
    }

    /// K^lambda phi with data on `comp` and zero on the other component.
    pub fn poisson(&self, phi: &[C64], comp: Component) -> Vec<C64> {
        match comp {
            Component::Bottom => self.solve_bvp(None, Some(phi), None),
            Component::Top => self.solve_bvp(None, None, Some(phi)),
        }
    }
}

pub fn dirichlet_solve(op: &Arc<EllipticOperator>, lambda: C64, f: &SpectralField) -> Result<SpectralField> {
    if f.values.len() != op.grid.len() {
        return arg("right-hand side must be an interior field on the operator grid");
    }
    let r = ResolventHandle::new(op, lambda, false)?;
    SpectralField::interior(&op.grid, r.apply(&f.values))
}

pub fn poisson_solve(op: &Arc<EllipticOperator>, lambda: C64, phi: &SpectralField, comp: Component) -> Result<SpectralField> {
    if phi.values.len() != op.grid.nt() || phi.location != Location::Boundary {
        return arg("Poisson data must be a boundary field");
    }
    let r = ResolventHandle::new(op, lambda, false)?;
    SpectralField::interior(&op.grid, r.poisson(&phi.values, comp))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Pairing {
    /// interior-row sums and form-consistent traces: the identity holds exactly
    Discrete,
    /// trapezoid quadrature and one-sided traces: consistent to second order
    Quadrature,
}

/// |(K phi, f) - (phi, chi'(A'_gamma - conj lambda)^{-1} f)| / (|phi| |f|).
///
/// With the interior normal, the Green formula gives this sign.
pub fn poisson_adjoint_check(op: &Arc<EllipticOperator>, lambda: C64, phi: &[C64], f: &[C64], comp: Component, pairing: Pairing) -> Result<f64> {
    let r = ResolventHandle::new(op, lambda, false)?;
    let ra = ResolventHandle::new(op, lambda, true)?;
    let u = r.poisson(phi, comp);
    let w = ra.apply(f);
    let (lhs, chi) = match pairing {
        Pairing::Discrete => (op.inner_interior_rows(&u, f), op.chi_fv_prime(&w, comp)),
        Pairing::Quadrature => (op.inner(&u, f), op.chi_one_sided(&w, comp, true)),
    };
    let rhs = op.boundary_pair(comp, phi, &chi);
    let nphi = op.boundary_pair(comp, phi, phi).re.sqrt();
    let nf = op.inner(f, f).re.sqrt();
    Ok((lhs - rhs).norm() / (nphi * nf).max(f64::MIN_POSITIVE))
}

/// Frozen-coefficient parametrix B0(lambda){f, phi}: at every column the
/// problem with coefficients frozen there is solved mode by mode.
pub fn parametrix_apply(op: &EllipticOperator, lambda: C64, f: Option<&[C64]>, phi: Option<(&[C64], Component)>) -> Result<Vec<C64>> {
    let g = &op.grid;
    let (nt, nn, n) = (g.nt(), g.nn(), g.len());
    let mut fhat = vec![c64(0.0, 0.0); n];
    if let Some(f) = f {
        fhat.copy_from_slice(f);
        for layer in fhat.chunks_mut(nt) {
            fft(layer);
        }
    }
    let mut phat = vec![c64(0.0, 0.0); nt];
    if let Some((p, _)) = phi {
        phat.copy_from_slice(p);
        fft(&mut phat);
    }
    let mut out = vec![c64(0.0, 0.0); n];
    for at in 0..nt {
        let col = op.frozen_column(at);
        let w: Vec<Vec<f64>> = col.weights().into_iter().map(|v| vec![v]).collect();
        let mut uhat = vec![c64(0.0, 0.0); n];
        for slot in 0..nt {
            let m = dirichlet_matrix(&col.mode(slot), &w, lambda);
            let lu = m.factor("frozen Dirichlet problem")?;
            let mut rhs: Vec<C64> = (0..nn).map(|j| fhat[j * nt + slot] * w[j][0]).collect();
            rhs[0] = c64(0.0, 0.0);
            rhs[nn - 1] = c64(0.0, 0.0);
            if let Some((_, comp)) = phi {
                rhs[comp.layer(g)] = phat[slot];
            }
            for (j, v) in lu.solve(&rhs).into_iter().enumerate() {
                uhat[j * nt + slot] = v;
            }
        }
        for j in 0..nn {
            let mut layer = uhat[j * nt..(j + 1) * nt].to_vec();
            ifft(&mut layer);
            out[j * nt + at] = layer[at];
        }
    }
    Ok(out)
}

/// Relative interior remainder |(A - lambda) B0 f - f| / |f|, maximized over the suite.
pub fn remainder_norm(op: &EllipticOperator, lambda: C64, suite: &[Vec<C64>]) -> Result<f64> {
    let mut best: f64 = 0.0;
    for f in suite {
        let u = parametrix_apply(op, lambda, Some(f), None)?;
        let au = op.apply_a_raw(&u);
        let r: Vec<C64> = au.iter().zip(&u).zip(f).map(|((a, v), ff)| a - v * lambda - ff).collect();
        let rn = op.inner_interior_rows(&r, &r).re.sqrt();
        let fnorm = op.inner_interior_rows(f, f).re.sqrt();
        best = best.max(rn / fnorm);
    }
    Ok(best)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RaySpec {
    pub angle: f64,
    pub mu_values: Vec<f64>,
    #[serde(default)]
    pub sector_margin: f64,
}

impl RaySpec {
    pub fn new(angle: f64, mu_values: Vec<f64>) -> Self {
        RaySpec { angle, mu_values, sector_margin: 0.0 }
    }

    pub fn lambda(&self, mu: f64) -> C64 {
        C64::from_polar(mu * mu, self.angle)
    }

    /// Every point must avoid the closed sector of principal symbol values.
    pub fn validate(&self, op: &EllipticOperator) -> Result<()> {
        if self.mu_values.is_empty() || self.mu_values.windows(2).any(|w| !(w[0] < w[1])) || self.mu_values[0] <= 0.0 {
            return arg("ray needs increasing positive mu values");
        }
        let theta = symbol_sector_angle(&op.coeff);
        let a = c64(0.0, self.angle).exp().arg().abs();
        if a <= theta + self.sector_margin {
            return arg(format!("ray angle {:.4} lies inside the symbol sector |arg| <= {:.4}", self.angle, theta + self.sector_margin));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub mu: f64,
    pub lambda_re: f64,
    pub lambda_im: f64,
    pub norm_name: String,
    pub value: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecayFit {
    pub name: String,
    pub slope: f64,
    pub intercept: f64,
    pub rows: Vec<SweepRow>,
    /// log-residuals of the fit, one per row
    pub residuals: Vec<f64>,
}

pub fn japanese(z: f64) -> f64 {
    (1.0 + z * z).sqrt()
}

fn fit(name: &str, ray: &RaySpec, axis: impl Fn(f64) -> f64, values: Vec<f64>) -> DecayFit {
    let x: Vec<f64> = ray.mu_values.iter().map(|&m| axis(m).ln()).collect();
    let y: Vec<f64> = values.iter().map(|v| v.ln()).collect();
    let (slope, intercept) = fit_line(&x, &y);
    let residuals = x.iter().zip(&y).map(|(a, b)| b - (slope * a + intercept)).collect();
    let rows = ray
        .mu_values
        .iter()
        .zip(values)
        .map(|(&mu, value)| {
            let l = ray.lambda(mu);
            SweepRow { mu, lambda_re: l.re, lambda_im: l.im, norm_name: name.into(), value }
        })
        .collect();
    DecayFit { name: name.into(), slope, intercept, rows, residuals }
}

/// ||R(lambda)|| in L2(Omega) by power iteration on R* R.
pub fn resolvent_norm(op: &Arc<EllipticOperator>, lambda: C64, iters: usize) -> Result<f64> {
    let r = ResolventHandle::new(op, lambda, false)?;
    let ra = ResolventHandle::new(op, lambda, true)?;
    let g = &op.grid;
    let nt = g.nt();
    let n = g.len();
    let mut x: Vec<C64> = (0..n)
        .map(|k| if k < nt || k >= n - nt { c64(0.0, 0.0) } else { c64(1.0 + 0.1 * (k % 7) as f64, 0.05 * (k % 5) as f64) })
        .collect();
    let norm = |v: &[C64]| op.inner_interior_rows(v, v).re.sqrt();
    let mut est = 0.0;
    for _ in 0..iters {
        let nx = norm(&x);
        x.iter_mut().for_each(|z| *z /= nx);
        let y = r.apply(&x);
        est = norm(&y);
        x = ra.apply(&y);
    }
    Ok(est)
}

/// max over Fourier modes k in `modes` of ||K e^{ikx'}||_0 / ||e^{ikx'}||_0 (bottom data).
pub fn poisson_norm(op: &Arc<EllipticOperator>, lambda: C64, modes: &[i64]) -> Result<f64> {
    let r = ResolventHandle::new(op, lambda, false)?;
    let g = &op.grid;
    let mut best: f64 = 0.0;
    for &k in modes {
        let phi: Vec<C64> = (0..g.nt()).map(|i| c64(0.0, k as f64 * g.x(i) * 2.0 * std::f64::consts::PI / g.period()).exp()).collect();
        let u = r.poisson(&phi, Component::Bottom);
        let nu = op.inner(&u, &u).re.sqrt();
        let np = op.boundary_pair(Component::Bottom, &phi, &phi).re.sqrt();
        best = best.max(nu / np);
    }
    Ok(best)
}

/// Fits of ||R||, ||K|| and the parametrix remainder along a ray.
pub fn resolvent_decay(op: &Arc<EllipticOperator>, ray: &RaySpec, iters: usize) -> Result<DecayFit> {
    ray.validate(op)?;
    let v = ray.mu_values.iter().map(|&m| resolvent_norm(op, ray.lambda(m), iters)).collect::<Result<Vec<_>>>()?;
    Ok(fit("resolvent_l2", ray, |m| japanese(m * m), v))
}

pub fn poisson_decay(op: &Arc<EllipticOperator>, ray: &RaySpec, modes: &[i64]) -> Result<DecayFit> {
    ray.validate(op)?;
    let v = ray.mu_values.iter().map(|&m| poisson_norm(op, ray.lambda(m), modes)).collect::<Result<Vec<_>>>()?;
    Ok(fit("poisson_l2", ray, |m| m, v))
}

pub fn remainder_decay(op: &Arc<EllipticOperator>, ray: &RaySpec, suite: &[Vec<C64>]) -> Result<DecayFit> {
    ray.validate(op)?;
    let v = ray.mu_values.iter().map(|&m| remainder_norm(op, ray.lambda(m), suite)).collect::<Result<Vec<_>>>()?;
    Ok(fit("parametrix_remainder", ray, japanese, v))
}

/// Smooth interior data: products of low Fourier modes and normal sines.
pub fn standard_suite(op: &EllipticOperator) -> Vec<Vec<C64>> {
    let g = &op.grid;
    let mut out = vec![];
    for (k, m) in [(1.0, 1.0), (3.0, 2.0), (0.0, 1.0)] {
        out.push(
            (0..g.len())
                .map(|idx| {
                    let (x, y) = (g.x(idx % g.nt()), g.xn(idx / g.nt()));
                    c64(0.0, k * x * 2.0 * std::f64::consts::PI / g.period()).exp() * (m * std::f64::consts::PI * y / g.extent()).sin()
                })
                .collect(),
        );
    }
    out
}
