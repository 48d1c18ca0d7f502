//! Periodic graph strips: the semigroup lift of the boundary graph, the
//! diffeomorphism F onto the reference strip, Jacobian data, surface
//! measure, and pullbacks.

use crate::error::{arg, Result};
use crate::grid::{bracket, dn, dt, fft, ifft, Component, GridSpec, Location, SpectralField};
use crate::linalg::{c64, C64};
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundaryGraph {
    pub period: f64,
    pub gamma: Vec<f64>,
    /// Besov smoothness index M of gamma in B^{M-1/2}_{p,2}
    pub m: u32,
    pub p: f64,
}

impl BoundaryGraph {
    pub fn new(period: f64, gamma: Vec<f64>, m: u32, p: f64) -> Result<Self> {
        let g = BoundaryGraph { period, gamma, m, p };
        if g.tau() <= 0.0 {
            return arg(format!("boundary smoothness tau = M - 3/2 - 1/p = {} must be positive", g.tau()));
        }
        if g.gamma.len() < 8 || !g.gamma.len().is_power_of_two() {
            return arg("boundary samples must be a power of two >= 8");
        }
        if g.gamma.iter().any(|v| !v.is_finite()) {
            return arg("boundary samples must be finite");
        }
        Ok(g)
    }

    pub fn flat(period: f64, n: usize, height: f64) -> Self {
        BoundaryGraph { period, gamma: vec![height; n], m: 2, p: 8.0 }
    }

    pub fn from_fn(period: f64, n: usize, m: u32, p: f64, f: impl Fn(f64) -> f64) -> Result<Self> {
        let h = period / n as f64;
        Self::new(period, (0..n).map(|i| f(i as f64 * h)).collect(), m, p)
    }

    /// tau = M - 3/2 - (n-1)/p with n = 2.
    pub fn tau(&self) -> f64 {
        self.m as f64 - 1.5 - 1.0 / self.p
    }

    /// Trigonometric resampling onto `n` points.
    pub fn resample(&self, n: usize) -> Self {
        let m = self.gamma.len();
        if m == n {
            return self.clone();
        }
        let mut hat: Vec<C64> = self.gamma.iter().map(|&v| c64(v, 0.0)).collect();
        fft(&mut hat);
        let mut out = vec![c64(0.0, 0.0); n];
        let kmax = (m.min(n) / 2) as i64;
        for k in -kmax + 1..kmax {
            let src = ((k + m as i64) % m as i64) as usize;
            let dst = ((k + n as i64) % n as i64) as usize;
            out[dst] = hat[src] * (n as f64 / m as f64);
        }
        ifft(&mut out);
        BoundaryGraph { gamma: out.iter().map(|z| z.re).collect(), ..self.clone() }
    }
}

/// JSON exchange form of a strip geometry.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GeometryJson {
    pub periods: Vec<f64>,
    pub gamma_bottom: Vec<f64>,
    #[serde(default)]
    pub gamma_top: Option<Vec<f64>>,
    #[serde(rename = "M")]
    pub m: u32,
    pub p: f64,
}

impl GeometryJson {
    pub fn graphs(&self) -> Result<(BoundaryGraph, Option<BoundaryGraph>)> {
        let period = *self.periods.first().ok_or_else(|| crate::Error::Argument("missing period".into()))?;
        let b = BoundaryGraph::new(period, self.gamma_bottom.clone(), self.m, self.p)?;
        let t = match &self.gamma_top {
            Some(v) => Some(BoundaryGraph::new(period, v.clone(), self.m, self.p)?),
            None => None,
        };
        Ok((b, t))
    }
}

/// Values, x'-derivative and t-derivative of the lift Gamma(x', t).
struct Lift {
    hat: Vec<C64>,
    grid: GridSpec,
}

impl Lift {
    fn new(grid: &GridSpec, samples: &[f64]) -> Self {
        let mut hat: Vec<C64> = samples.iter().map(|&v| c64(v, 0.0)).collect();
        fft(&mut hat);
        Lift { hat, grid: grid.clone() }
    }

    /// (Gamma, d_x Gamma, d_t Gamma) at t >= 0 (even reflection for t < 0).
    fn eval(&self, t: f64) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
        let g = &self.grid;
        let (ta, sgn) = if t < 0.0 { (-t, -1.0) } else { (t, 1.0) };
        let n = g.nt();
        let mut v = vec![c64(0.0, 0.0); n];
        let mut vx = v.clone();
        let mut vt = v.clone();
        for i in 0..n {
            let b = bracket(g.xi(i));
            let e = self.hat[i] * (-b * ta).exp();
            v[i] = e;
            vx[i] = e * c64(0.0, g.xi_deriv(i));
            vt[i] = -e * b * sgn;
        }
        ifft(&mut v);
        ifft(&mut vx);
        ifft(&mut vt);
        let re = |w: Vec<C64>| w.into_iter().map(|z| z.re).collect::<Vec<f64>>();
        (re(v), re(vx), re(vt))
    }
}

#[derive(Clone, Debug)]
pub struct DiffeoData {
    pub grid: GridSpec,
    /// Gamma(x', s x_n) of the bottom lift on the reference grid
    pub lifting: SpectralField,
    pub lambda_scale: f64,
    /// physical height F_n at every node
    pub height: Vec<f64>,
    pub d_x: Vec<f64>,
    pub d_n: Vec<f64>,
    pub kappa_bottom: SpectralField,
    pub kappa_top: SpectralField,
}

impl DiffeoData {
    /// Phi = (grad F)^{-1} at node k, with (grad F)_{ij} = d_i F_j.
    pub fn phi(&self, k: usize) -> [[f64; 2]; 2] {
        let (fx, fn_) = (self.d_x[k], self.d_n[k]);
        [[1.0, -fx / fn_], [0.0, 1.0 / fn_]]
    }

    pub fn grad_f(&self, k: usize) -> [[f64; 2]; 2] {
        [[1.0, self.d_x[k]], [0.0, self.d_n[k]]]
    }

    pub fn det(&self, k: usize) -> f64 {
        self.d_n[k]
    }

    pub fn kappa(&self, comp: Component) -> &SpectralField {
        match comp {
            Component::Bottom => &self.kappa_bottom,
            Component::Top => &self.kappa_top,
        }
    }

    /// Physical interior unit normal at boundary node i.
    pub fn normal(&self, comp: Component, i: usize) -> [f64; 2] {
        let k = self.grid.idx(i, comp.layer(&self.grid));
        let kap = self.kappa(comp).values[i].re;
        let s = comp.sign();
        [-s * self.d_x[k] / kap, s / kap]
    }

    /// Physical point (x', F_n) of node k.
    pub fn point(&self, k: usize) -> (f64, f64) {
        (self.grid.x(k % self.grid.nt()), self.height[k])
    }

    pub fn is_identity(&self) -> bool {
        self.height.iter().enumerate().all(|(k, &y)| (y - self.grid.xn(k / self.grid.nt())).abs() < 1e-14)
    }
}

pub fn build_diffeo(grid: &GridSpec, bottom: &BoundaryGraph, top: Option<&BoundaryGraph>) -> Result<DiffeoData> {
    for g in std::iter::once(bottom).chain(top) {
        if g.tau() <= 0.0 {
            return arg("boundary smoothness tau must be positive");
        }
        if (g.period - grid.period()).abs() > 1e-12 * grid.period() {
            return arg("boundary graph period differs from the grid period");
        }
    }
    let nt = grid.nt();
    let l = grid.extent();
    let lb = Lift::new(grid, &bottom.resample(nt).gamma);
    let lt = top.map(|t| {
        let shifted: Vec<f64> = t.resample(nt).gamma.iter().map(|v| v - l).collect();
        Lift::new(grid, &shifted)
    });

    let assemble = |s: f64| {
        let n = grid.len();
        let (mut hgt, mut dx, mut dnv, mut lifting) = (vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![c64(0.0, 0.0); n]);
        for j in 0..grid.nn() {
            let xn = grid.xn(j);
            let (gb, gbx, gbt) = lb.eval(s * xn);
            let top_terms = lt.as_ref().map(|t| t.eval(s * (l - xn)));
            for i in 0..nt {
                let k = grid.idx(i, j);
                lifting[k] = c64(gb[i], 0.0);
                match &top_terms {
                    None => {
                        hgt[k] = xn + gb[i];
                        dx[k] = gbx[i];
                        dnv[k] = 1.0 + s * gbt[i];
                    }
                    Some((gt, gtx, gtt)) => {
                        let r = xn / l;
                        hgt[k] = xn + (1.0 - r) * gb[i] + r * gt[i];
                        dx[k] = (1.0 - r) * gbx[i] + r * gtx[i];
                        dnv[k] = 1.0 - gb[i] / l + (1.0 - r) * s * gbt[i] + gt[i] / l - r * s * gtt[i];
                    }
                }
            }
        }
        (hgt, dx, dnv, lifting)
    };

    let mut s = 1.0;
    loop {
        let (height, d_x, d_n, lifting) = assemble(s);
        if d_n.iter().all(|&v| (v - 1.0).abs() <= 0.5) {
            let kap = |layer: usize| {
                let v = (0..nt).map(|i| c64((1.0 + d_x[grid.idx(i, layer)].powi(2)).sqrt(), 0.0)).collect();
                SpectralField { grid: grid.clone(), values: v, location: Location::Boundary }
            };
            let kappa_bottom = kap(0);
            let kappa_top = kap(grid.nn() - 1);
            return Ok(DiffeoData {
                grid: grid.clone(),
                lifting: SpectralField { grid: grid.clone(), values: lifting, location: Location::Interior },
                lambda_scale: s,
                height,
                d_x,
                d_n,
                kappa_bottom,
                kappa_top,
            });
        }
        s *= 0.5;
        if s < 1e-6 {
            return arg("no admissible lift scale: top and bottom graphs too close");
        }
    }
}

/// Samples of a physical field on a uniform (x', y) grid.
#[derive(Clone, Debug)]
pub struct PhysicalGrid {
    pub nt: usize,
    pub period: f64,
    pub y0: f64,
    pub y1: f64,
    pub ny: usize,
    pub values: Vec<C64>,
}

impl PhysicalGrid {
    pub fn from_fn(nt: usize, period: f64, y0: f64, y1: f64, ny: usize, f: impl Fn(f64, f64) -> C64) -> Self {
        let hy = (y1 - y0) / (ny - 1) as f64;
        let ht = period / nt as f64;
        let mut values = Vec::with_capacity(nt * ny);
        for j in 0..ny {
            for i in 0..nt {
                values.push(f(i as f64 * ht, y0 + j as f64 * hy));
            }
        }
        PhysicalGrid { nt, period, y0, y1, ny, values }
    }
}

/// F*u on the reference grid by four-point Lagrange interpolation in y.
pub fn pullback(u: &PhysicalGrid, d: &DiffeoData) -> Result<SpectralField> {
    let g = &d.grid;
    if u.nt != g.nt() || u.ny < 4 {
        return arg("physical grid must share the tangential nodes and have >= 4 rows");
    }
    let hy = (u.y1 - u.y0) / (u.ny - 1) as f64;
    let mut out = vec![c64(0.0, 0.0); g.len()];
    for (k, o) in out.iter_mut().enumerate() {
        let i = k % g.nt();
        let y = d.height[k];
        if y < u.y0 - 1e-12 || y > u.y1 + 1e-12 {
            return arg(format!("point y = {y} outside the physical sample range"));
        }
        let t = (y - u.y0) / hy;
        let base = (t.floor() as isize - 1).clamp(0, u.ny as isize - 4) as usize;
        let mut acc = c64(0.0, 0.0);
        for a in 0..4 {
            let mut w = 1.0;
            for b in 0..4 {
                if a != b {
                    w *= (t - (base + b) as f64) / (a as f64 - b as f64);
                }
            }
            acc += u.values[(base + a) * u.nt + i] * w;
        }
        *o = acc;
    }
    SpectralField::interior(g, out)
}

/// Reference gradient (spectral in x', second order in x_n).
pub fn reference_gradient(g: &GridSpec, u: &[C64]) -> [Vec<C64>; 2] {
    [dt(g, u), dn(g, u)]
}

/// Physical gradient pulled back: Phi grad(F*u).
pub fn transform_gradient(u: &SpectralField, d: &DiffeoData) -> [Vec<C64>; 2] {
    let [ux, un] = reference_gradient(&d.grid, &u.values);
    let mut gx = ux.clone();
    let mut gy = un.clone();
    for k in 0..ux.len() {
        let p = d.phi(k);
        gx[k] = ux[k] * p[0][0] + un[k] * p[0][1];
        gy[k] = ux[k] * p[1][0] + un[k] * p[1][1];
    }
    [gx, gy]
}

/// Principal part sum_{l,m} Phi_km Phi_jl d_m d_l F*u and remainder
/// sum_{l,m} Phi_km (d_m Phi_jl) d_l F*u, indexed [j][k].
pub fn transform_hessian(u: &SpectralField, d: &DiffeoData) -> ([[Vec<C64>; 2]; 2], [[Vec<C64>; 2]; 2]) {
    let g = &d.grid;
    let n = g.len();
    let grad = reference_gradient(g, &u.values);
    let second: [[Vec<C64>; 2]; 2] = [
        [dt(g, &grad[0]), dn(g, &grad[0])],
        [dt(g, &grad[1]), dn(g, &grad[1])],
    ];
    // second[l][m] = d_m d_l u
    let phi_field = |a: usize, b: usize| -> Vec<C64> { (0..n).map(|k| c64(d.phi(k)[a][b], 0.0)).collect() };
    let mut dphi = vec![vec![[vec![], vec![]], [vec![], vec![]]]; 2];
    for a in 0..2 {
        for b in 0..2 {
            let f = phi_field(a, b);
            dphi[a][b] = [dt(g, &f), dn(g, &f)];
        }
    }
    let z = || vec![c64(0.0, 0.0); n];
    let mut main = [[z(), z()], [z(), z()]];
    let mut rem = [[z(), z()], [z(), z()]];
    for k in 0..n {
        let p = d.phi(k);
        for j in 0..2 {
            for kk in 0..2 {
                let mut s = c64(0.0, 0.0);
                let mut r = c64(0.0, 0.0);
                for l in 0..2 {
                    for m in 0..2 {
                        s += second[l][m][k] * (p[kk][m] * p[j][l]);
                        r += grad[l][k] * (p[kk][m] * dphi[j][l][m][k].re);
                    }
                }
                main[j][kk][k] = s;
                rem[j][kk][k] = r;
            }
        }
    }
    (main, rem)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PullbackDirection {
    /// F~* v = kappa F* v
    Forward,
    /// F~^{-1,*} v = v / kappa (in the x' parametrization)
    Inverse,
}

pub fn tilde_pullback(u: &SpectralField, d: &DiffeoData, dir: PullbackDirection, comp: Component) -> Result<SpectralField> {
    if u.location != Location::Boundary || u.values.len() != d.grid.nt() {
        return arg("tilde pullback acts on boundary fields");
    }
    let kap = d.kappa(comp);
    let mut out = u.clone();
    for (z, k) in out.values.iter_mut().zip(&kap.values) {
        match dir {
            PullbackDirection::Forward => *z *= k.re,
            PullbackDirection::Inverse => *z /= k.re,
        }
    }
    Ok(out)
}

/// max |f(x + h) - f(x)| / h^alpha over the periodic samples.
pub fn holder_quotient(values: &[f64], h: f64, alpha: f64) -> f64 {
    let n = values.len();
    (0..n).map(|i| (values[(i + 1) % n] - values[i]).abs()).fold(0.0, f64::max) / h.powf(alpha)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn grid(nt: usize, nn: usize) -> GridSpec {
        GridSpec::new(2.0 * PI, nt, nn, 1.0).unwrap()
    }

    fn sine(nt: usize, a: f64) -> BoundaryGraph {
        BoundaryGraph::from_fn(2.0 * PI, nt, 2, 8.0, |x| a * x.sin()).unwrap()
    }

    #[test]
    fn flat_is_identity() {
        let g = grid(16, 9);
        let d = build_diffeo(&g, &BoundaryGraph::flat(2.0 * PI, 16, 0.0), None).unwrap();
        assert!(d.is_identity());
        assert!(d.kappa_bottom.values.iter().all(|k| (k.re - 1.0).abs() < 1e-15));
        for k in 0..g.len() {
            assert_eq!(d.phi(k), [[1.0, 0.0], [0.0, 1.0]]);
        }
    }

    #[test]
    fn rejects_rough_or_mismatched() {
        assert!(BoundaryGraph::new(2.0 * PI, vec![0.0; 16], 1, 8.0).is_err());
        let g = grid(16, 9);
        let b = BoundaryGraph::flat(3.0, 16, 0.0);
        assert!(build_diffeo(&g, &b, None).is_err());
    }

    #[test]
    fn sine_graph_kappa_and_monotone() {
        let g = grid(64, 33);
        let d = build_diffeo(&g, &sine(64, 0.1), None).unwrap();
        for i in 0..64 {
            let x = g.x(i);
            assert!((d.kappa_bottom.values[i].re - (1.0 + 0.01 * x.cos().powi(2)).sqrt()).abs() < 1e-12);
            assert!((d.height[i] - 0.1 * x.sin()).abs() < 1e-12);
        }
        assert!(d.d_n.iter().all(|&v| v >= 0.5));
        for k in 0..g.len() {
            let (p, f) = (d.phi(k), d.grad_f(k));
            for a in 0..2 {
                for b in 0..2 {
                    let s: f64 = (0..2).map(|c| p[a][c] * f[c][b]).sum();
                    assert!((s - if a == b { 1.0 } else { 0.0 }).abs() < 1e-10);
                }
            }
        }
        let d2 = build_diffeo(&g, &sine(64, 0.1), None).unwrap();
        assert_eq!(d.height, d2.height);
        assert!(d.kappa_bottom.values.iter().all(|k| k.re >= 1.0));
    }

    #[test]
    fn steep_graph_gets_scaled() {
        let g = grid(64, 33);
        let d = build_diffeo(&g, &sine(64, 0.9), None).unwrap();
        assert!(d.lambda_scale < 1.0);
        assert!(d.d_n.iter().all(|&v| v >= 0.5));
    }

    #[test]
    fn top_graph_blend() {
        let g = grid(32, 17);
        let top = BoundaryGraph::from_fn(2.0 * PI, 32, 2, 8.0, |x| 1.0 + 0.05 * (2.0 * x).cos()).unwrap();
        let d = build_diffeo(&g, &sine(32, 0.1), Some(&top)).unwrap();
        for i in 0..32 {
            assert!((d.height[g.idx(i, 16)] - top.gamma[i]).abs() < 1e-12);
            assert!((d.height[i] - 0.1 * g.x(i).sin()).abs() < 1e-12);
        }
    }

    #[test]
    fn pullback_of_height() {
        let g = grid(32, 17);
        let d = build_diffeo(&g, &sine(32, 0.1), None).unwrap();
        let phys = PhysicalGrid::from_fn(32, 2.0 * PI, -0.2, 1.2, 200, |_, y| c64(y, 0.0));
        let u = pullback(&phys, &d).unwrap();
        for k in 0..g.len() {
            assert!((u.values[k].re - d.height[k]).abs() < 1e-10);
        }
        let too_small = PhysicalGrid::from_fn(32, 2.0 * PI, 0.0, 0.5, 10, |_, y| c64(y, 0.0));
        assert!(pullback(&too_small, &d).is_err());
    }

    #[test]
    fn pullback_norm_equivalence() {
        let g = grid(32, 33);
        let d = build_diffeo(&g, &sine(32, 0.2), None).unwrap();
        for (s, f) in [(0usize, 1.0), (1, 2.0), (2, 3.0)] {
            let phys = PhysicalGrid::from_fn(32, 2.0 * PI, -0.3, 1.3, 400, |x, y| c64((f * x).cos() * (1.0 + y * y), 0.0));
            let u = pullback(&phys, &d).unwrap();
            let flat = build_diffeo(&g, &BoundaryGraph::flat(2.0 * PI, 32, 0.0), None).unwrap();
            let v = pullback(&phys, &flat).unwrap();
            let r = crate::grid::hk_norm(&u, s) / crate::grid::hk_norm(&v, s);
            assert!(r > 0.5 && r < 2.0, "s = {s}: {r}");
        }
    }

    #[test]
    fn gradient_transform_matches_analytic() {
        let mut errs = vec![];
        for nn in [33, 65, 129] {
            let g = grid(32, nn);
            let d = build_diffeo(&g, &sine(32, 0.15), None).unwrap();
            let u = SpectralField::interior(&g, (0..g.len()).map(|k| { let (x, y) = d.point(k); c64(x.sin() * y, 0.0) }).collect()).unwrap();
            let [gx, gy] = transform_gradient(&u, &d);
            let mut e: f64 = 0.0;
            for k in 0..g.len() {
                let (x, y) = d.point(k);
                e = e.max((gx[k].re - x.cos() * y).abs()).max((gy[k].re - x.sin()).abs());
            }
            errs.push(e);
        }
        assert!(crate::linalg::observed_order(&errs, 2.0) > 1.8, "{errs:?}");
    }

    #[test]
    fn hessian_transform() {
        let g = grid(32, 9);
        let flat = build_diffeo(&g, &BoundaryGraph::flat(2.0 * PI, 32, 0.0), None).unwrap();
        let u = SpectralField::from_fn_interior(&g, |x, y| c64(x.sin() * y * y, 0.0));
        let (_, rem) = transform_hessian(&u, &flat);
        assert!(rem.iter().flatten().flatten().all(|z| z.norm() < 1e-12));
        let mut errs = vec![];
        for nn in [33, 65, 129] {
            let g = grid(32, nn);
            let d = build_diffeo(&g, &sine(32, 0.15), None).unwrap();
            let u = SpectralField::interior(&g, (0..g.len()).map(|k| { let (x, y) = d.point(k); c64(y * y + x.cos() * y, 0.0) }).collect()).unwrap();
            let (main, rem) = transform_hessian(&u, &d);
            let mut e: f64 = 0.0;
            for k in 0..g.len() {
                let (x, y) = d.point(k);
                let exact = [[-x.cos() * y, -x.sin()], [-x.sin(), 2.0]];
                for a in 0..2 {
                    for b in 0..2 {
                        e = e.max((main[a][b][k] + rem[a][b][k] - exact[a][b]).norm());
                    }
                }
            }
            errs.push(e);
        }
        assert!(errs[2] < errs[0] && errs[2] < 0.05, "{errs:?}");
    }

    #[test]
    fn tilde_pullback_duality() {
        let g = grid(32, 9);
        let d = build_diffeo(&g, &sine(32, 0.3), None).unwrap();
        let v = SpectralField::from_fn_boundary(&g, |x| c64(x.cos(), 0.3 * x.sin()));
        let phi = SpectralField::from_fn_boundary(&g, |x| c64((2.0 * x).sin(), 1.0));
        let tv = tilde_pullback(&v, &d, PullbackDirection::Inverse, Component::Bottom).unwrap();
        let kap = &d.kappa_bottom.values;
        // (F~^{-1,*} v, phi) in the kappa-weighted pairing equals (v, F* phi) in dx'
        let lhs: C64 = (0..32).map(|i| tv.values[i] * phi.values[i].conj() * kap[i].re).sum::<C64>() * g.ht();
        let rhs: C64 = (0..32).map(|i| v.values[i] * phi.values[i].conj()).sum::<C64>() * g.ht();
        assert!((lhs - rhs).norm() < 1e-10);
        let back = tilde_pullback(&tv, &d, PullbackDirection::Forward, Component::Bottom).unwrap();
        assert!(back.values.iter().zip(&v.values).all(|(a, b)| (a - b).norm() < 1e-14));
    }

    #[test]
    fn gauss_identity() {
        // f = (sin x * e^y, e^y); div f = (cos x + 1) e^y
        let mut res = vec![];
        for nn in [33, 65, 129] {
            let g = grid(32, nn);
            let d = build_diffeo(&g, &sine(32, 0.1), None).unwrap();
            let w = g.normal_weights();
            let mut vol = 0.0;
            for k in 0..g.len() {
                let (x, y) = d.point(k);
                vol += ((x.cos() + 1.0) * y.exp()) * d.det(k) * w[k / g.nt()] * g.ht();
            }
            let mut surf = 0.0;
            for comp in [Component::Bottom, Component::Top] {
                for i in 0..g.nt() {
                    let k = g.idx(i, comp.layer(&g));
                    let (x, y) = d.point(k);
                    let nu = d.normal(comp, i);
                    surf += (nu[0] * x.sin() * y.exp() + nu[1] * y.exp()) * d.kappa(comp).values[i].re * g.ht();
                }
            }
            res.push((vol + surf).abs());
        }
        assert!(crate::linalg::observed_order(&res, 2.0) > 1.8, "{res:?}");
    }

    #[test]
    fn holder_quotient_bounded() {
        let mut q = vec![];
        for n in [64usize, 128, 256] {
            let g = grid(n, 9);
            let gam = BoundaryGraph::from_fn(2.0 * PI, n, 2, 8.0, |x| 0.1 * x.sin().abs().powf(1.4)).unwrap();
            let d = build_diffeo(&g, &gam, None).unwrap();
            let slice: Vec<f64> = d.d_x[..n].to_vec();
            q.push(holder_quotient(&slice, g.ht(), 0.375));
        }
        assert!(q[2] < 2.0 * q[0], "{q:?}");
    }
}
