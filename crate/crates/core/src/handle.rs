use crate::linalg::{zeros, CMat, C64};
use std::fmt;
use std::sync::Arc;

type ApplyFn = dyn Fn(&[C64]) -> Vec<C64> + Send + Sync;

/// An immutable linear map between flat complex vectors.
#[derive(Clone)]
pub struct LinearMapHandle {
    pub name: String,
    pub domain_len: usize,
    pub range_len: usize,
    apply: Arc<ApplyFn>,
}

impl fmt::Debug for LinearMapHandle {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "LinearMapHandle({}: {} -> {})", self.name, self.domain_len, self.range_len)
    }
}

impl LinearMapHandle {
    pub fn new(name: impl Into<String>, domain_len: usize, range_len: usize, f: impl Fn(&[C64]) -> Vec<C64> + Send + Sync + 'static) -> Self {
        LinearMapHandle { name: name.into(), domain_len, range_len, apply: Arc::new(f) }
    }

    pub fn from_matrix(name: impl Into<String>, m: CMat) -> Self {
        let (r, c) = m.shape();
        Self::new(name, c, r, move |x| (&m * crate::linalg::CVec::from_column_slice(x)).iter().copied().collect())
    }

    pub fn apply(&self, x: &[C64]) -> Vec<C64> {
        assert_eq!(x.len(), self.domain_len, "{}: input length", self.name);
        (self.apply)(x)
    }

    pub fn to_dense(&self) -> CMat {
        let mut m = zeros(self.range_len, self.domain_len);
        let mut e = vec![C64::new(0.0, 0.0); self.domain_len];
        for c in 0..self.domain_len {
            e[c] = C64::new(1.0, 0.0);
            let col = self.apply(&e);
            for (r, v) in col.into_iter().enumerate() {
                m[(r, c)] = v;
            }
            e[c] = C64::new(0.0, 0.0);
        }
        m
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dense_round_trip() {
        let m = CMat::from_fn(3, 2, |r, c| C64::new(r as f64, c as f64));
        let h = LinearMapHandle::from_matrix("m", m.clone());
        assert_eq!(h.to_dense(), m);
        let h2 = h.clone();
        let t = std::thread::spawn(move || h2.apply(&[C64::new(1.0, 0.0), C64::new(0.0, 0.0)]));
        assert_eq!(t.join().unwrap()[2], C64::new(2.0, 0.0));
    }
}
