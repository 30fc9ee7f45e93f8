//! Symmetric positive-definite matrices in envelope (profile) storage.
//!
//! Row `r` stores the lower-triangle columns `first[r]..=r`. With poses
//! ordered along the trajectory followed by landmarks, pose rows stay within
//! a band of two pose blocks and all fill lands in the landmark rows, so the
//! Cholesky factor keeps the same envelope as the matrix itself.

use nalgebra::DMatrix;

#[derive(Debug, Clone)]
pub struct EnvelopeMatrix {
    first: Vec<usize>,
    start: Vec<usize>,
    values: Vec<f64>,
}

impl EnvelopeMatrix {
    /// Zero matrix with the given first stored column per row.
    pub fn zeros(first: Vec<usize>) -> Self {
        let mut start = Vec::with_capacity(first.len() + 1);
        let mut total = 0;
        for (r, &f) in first.iter().enumerate() {
            assert!(f <= r, "envelope start beyond diagonal in row {r}");
            start.push(total);
            total += r - f + 1;
        }
        start.push(total);
        Self { first, start, values: vec![0.0; total] }
    }

    pub fn dim(&self) -> usize {
        self.first.len()
    }

    pub fn stored(&self) -> usize {
        self.values.len()
    }

    #[inline]
    fn slot(&self, r: usize, c: usize) -> usize {
        debug_assert!(c <= r && c >= self.first[r], "({r},{c}) outside envelope");
        self.start[r] + c - self.first[r]
    }

    /// Adds `v` to the symmetric entry (r, c).
    #[inline]
    pub fn add(&mut self, r: usize, c: usize, v: f64) {
        let (r, c) = if r >= c { (r, c) } else { (c, r) };
        let s = self.slot(r, c);
        self.values[s] += v;
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        let (r, c) = if r >= c { (r, c) } else { (c, r) };
        if c < self.first[r] {
            0.0
        } else {
            self.values[self.slot(r, c)]
        }
    }

    pub fn diagonal(&self, r: usize) -> f64 {
        self.values[self.start[r + 1] - 1]
    }

    pub fn add_diagonal(&mut self, r: usize, v: f64) {
        let s = self.start[r + 1] - 1;
        self.values[s] += v;
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let n = self.dim();
        DMatrix::from_fn(n, n, |r, c| self.get(r, c))
    }

    /// In-envelope Cholesky factorization; `None` if not positive definite.
    pub fn cholesky(&self) -> Option<EnvelopeCholesky> {
        let n = self.dim();
        let mut l = self.values.clone();
        for r in 0..n {
            let fr = self.first[r];
            let sr = self.start[r];
            for c in fr..r {
                let fc = self.first[c];
                let sc = self.start[c];
                let k0 = fr.max(fc);
                let mut s = l[sr + c - fr];
                for k in k0..c {
                    s -= l[sr + k - fr] * l[sc + k - fc];
                }
                let dc = l[self.start[c + 1] - 1];
                l[sr + c - fr] = s / dc;
            }
            let mut d = l[sr + r - fr];
            for k in fr..r {
                let v = l[sr + k - fr];
                d -= v * v;
            }
            if !(d > 0.0) || !d.is_finite() {
                return None;
            }
            l[sr + r - fr] = d.sqrt();
        }
        Some(EnvelopeCholesky { first: self.first.clone(), start: self.start.clone(), values: l })
    }
}

#[derive(Debug, Clone)]
pub struct EnvelopeCholesky {
    first: Vec<usize>,
    start: Vec<usize>,
    values: Vec<f64>,
}

impl EnvelopeCholesky {
    /// Solves `L Lᵀ x = b`.
    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let n = self.first.len();
        let mut y = b.to_vec();
        for r in 0..n {
            let fr = self.first[r];
            let sr = self.start[r];
            let mut s = y[r];
            for k in fr..r {
                s -= self.values[sr + k - fr] * y[k];
            }
            y[r] = s / self.values[sr + r - fr];
        }
        for r in (0..n).rev() {
            let fr = self.first[r];
            let sr = self.start[r];
            y[r] /= self.values[sr + r - fr];
            let xr = y[r];
            for k in fr..r {
                y[k] -= self.values[sr + k - fr] * xr;
            }
        }
        y
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matches_dense_cholesky() {
        // Banded block plus a dense trailing border.
        let first = vec![0, 0, 0, 1, 2, 0, 0];
        let mut m = EnvelopeMatrix::zeros(first.clone());
        let mut seed = 1.0_f64;
        for r in 0..7 {
            for c in first[r]..=r {
                seed = (seed * 7.31 + 0.17).fract();
                m.add(r, c, if r == c { 10.0 + seed } else { seed - 0.5 });
            }
        }
        let dense = m.to_dense();
        let b: Vec<f64> = (0..7).map(|i| i as f64 - 3.0).collect();
        let x = m.cholesky().unwrap().solve(&b);
        let xd = dense.clone().cholesky().unwrap().solve(&nalgebra::DVector::from_vec(b));
        for i in 0..7 {
            assert!((x[i] - xd[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn indefinite_is_rejected() {
        let mut m = EnvelopeMatrix::zeros(vec![0, 0]);
        m.add(0, 0, 1.0);
        m.add(1, 1, 1.0);
        m.add(1, 0, 2.0);
        assert!(m.cholesky().is_none());
    }
}
