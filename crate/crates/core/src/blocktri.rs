//! Block-tridiagonal matrices with dense blocks and a block LU solver.

use crate::error::{Error, Result};
use crate::linalg::{c64, zeros, CMat, C64};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Row j couples to j-1 via `lower[j]` and to j+1 via `upper[j]`.
/// `lower[0]` and `upper[nb-1]` are ignored.
#[derive(Clone, Debug)]
pub struct BlockTri {
    pub m: usize,
    pub lower: Vec<CMat>,
    pub diag: Vec<CMat>,
    pub upper: Vec<CMat>,
}

pub const COND_LIMIT: f64 = 1e12;

impl BlockTri {
    pub fn zeros(nb: usize, m: usize) -> Self {
        BlockTri { m, lower: vec![zeros(m, m); nb], diag: vec![zeros(m, m); nb], upper: vec![zeros(m, m); nb] }
    }

    pub fn nb(&self) -> usize {
        self.diag.len()
    }

    pub fn dim(&self) -> usize {
        self.nb() * self.m
    }

    pub fn matvec(&self, x: &[C64]) -> Vec<C64> {
        let (nb, m) = (self.nb(), self.m);
        let mut y = vec![c64(0.0, 0.0); nb * m];
        for j in 0..nb {
            let yj = &mut y[j * m..(j + 1) * m];
            gemv_add(yj, &self.diag[j], &x[j * m..(j + 1) * m]);
            if j > 0 {
                gemv_add(yj, &self.lower[j], &x[(j - 1) * m..j * m]);
            }
            if j + 1 < nb {
                gemv_add(yj, &self.upper[j], &x[(j + 1) * m..(j + 2) * m]);
            }
        }
        y
    }

    pub fn adjoint(&self) -> Self {
        let nb = self.nb();
        let mut a = BlockTri::zeros(nb, self.m);
        for j in 0..nb {
            a.diag[j] = self.diag[j].adjoint();
            if j + 1 < nb {
                a.upper[j] = self.lower[j + 1].adjoint();
                a.lower[j + 1] = self.upper[j].adjoint();
            }
        }
        a
    }

    pub fn to_dense(&self) -> CMat {
        let (nb, m) = (self.nb(), self.m);
        let mut d = zeros(nb * m, nb * m);
        for j in 0..nb {
            d.view_mut((j * m, j * m), (m, m)).copy_from(&self.diag[j]);
            if j > 0 {
                d.view_mut((j * m, (j - 1) * m), (m, m)).copy_from(&self.lower[j]);
            }
            if j + 1 < nb {
                d.view_mut((j * m, (j + 1) * m), (m, m)).copy_from(&self.upper[j]);
            }
        }
        d
    }

    /// Max absolute column sum.
    pub fn norm1(&self) -> f64 {
        let (nb, m) = (self.nb(), self.m);
        let mut best: f64 = 0.0;
        for j in 0..nb {
            for c in 0..m {
                let mut s = self.diag[j].column(c).iter().map(|z| z.norm()).sum::<f64>();
                if j + 1 < nb {
                    s += self.lower[j + 1].column(c).iter().map(|z| z.norm()).sum::<f64>();
                }
                if j > 0 {
                    s += self.upper[j - 1].column(c).iter().map(|z| z.norm()).sum::<f64>();
                }
                best = best.max(s);
            }
        }
        best
    }

    pub fn factor(&self, what: &str) -> Result<BlockLu> {
        let nb = self.nb();
        let mut s_inv = Vec::with_capacity(nb);
        let mut g = Vec::with_capacity(nb);
        let mut s = self.diag[0].clone();
        for j in 0..nb {
            let inv = s.clone().lu().try_inverse().ok_or_else(|| Error::Singular { what: what.into(), cond: f64::INFINITY })?;
            if inv.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
                return Err(Error::Singular { what: what.into(), cond: f64::INFINITY });
            }
            if j + 1 < nb {
                let gj = &inv * &self.upper[j];
                s = &self.diag[j + 1] - &self.lower[j + 1] * &gj;
                g.push(gj);
            }
            s_inv.push(inv);
        }
        let lu = BlockLu { m: self.m, lower: self.lower.clone(), s_inv, g, cond: 0.0 };
        let cond = self.norm1() * lu.inverse_norm1_estimate();
        if !(cond < COND_LIMIT) {
            return Err(Error::Singular { what: what.into(), cond });
        }
        Ok(BlockLu { cond, ..lu })
    }
}

fn gemv_add(y: &mut [C64], a: &CMat, x: &[C64]) {
    let (r, c) = a.shape();
    for q in 0..c {
        let xq = x[q];
        if xq == c64(0.0, 0.0) {
            continue;
        }
        let col = a.column(q);
        for p in 0..r {
            y[p] += col[p] * xq;
        }
    }
}

#[derive(Clone, Debug)]
pub struct BlockLu {
    m: usize,
    lower: Vec<CMat>,
    s_inv: Vec<CMat>,
    g: Vec<CMat>,
    /// one-norm condition estimate
    pub cond: f64,
}

impl BlockLu {
    pub fn solve(&self, b: &[C64]) -> Vec<C64> {
        let (nb, m) = (self.s_inv.len(), self.m);
        let mut y = vec![c64(0.0, 0.0); nb * m];
        let mut rhs = vec![c64(0.0, 0.0); m];
        for j in 0..nb {
            rhs.copy_from_slice(&b[j * m..(j + 1) * m]);
            if j > 0 {
                let prev: Vec<C64> = y[(j - 1) * m..j * m].to_vec();
                let mut t = vec![c64(0.0, 0.0); m];
                gemv_add(&mut t, &self.lower[j], &prev);
                for p in 0..m {
                    rhs[p] -= t[p];
                }
            }
            gemv_add(&mut y[j * m..(j + 1) * m], &self.s_inv[j], &rhs);
        }
        for j in (0..nb.saturating_sub(1)).rev() {
            let next: Vec<C64> = y[(j + 1) * m..(j + 2) * m].to_vec();
            let mut t = vec![c64(0.0, 0.0); m];
            gemv_add(&mut t, &self.g[j], &next);
            for p in 0..m {
                y[j * m + p] -= t[p];
            }
        }
        y
    }

    fn inverse_norm1_estimate(&self) -> f64 {
        let n = self.s_inv.len() * self.m;
        let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
        let mut best: f64 = 0.0;
        for _ in 0..4 {
            let x: Vec<C64> = (0..n).map(|_| c64(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))).collect();
            let y = self.solve(&x);
            let n1 = |v: &[C64]| v.iter().map(|z| z.norm()).sum::<f64>();
            let r = n1(&y) / n1(&x);
            if !r.is_finite() {
                return f64::INFINITY;
            }
            best = best.max(r);
        }
        best
    }
}
